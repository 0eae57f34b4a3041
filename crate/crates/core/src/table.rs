use alloc::vec::Vec;

/// Row-major `rows x levels` matrix of per-sample, per-level values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LevelMatrix {
    levels: usize,
    data: Vec<f64>,
}

impl LevelMatrix {
    pub fn new(levels: usize) -> Self {
        LevelMatrix { levels, data: Vec::new() }
    }

    pub fn from_rows(levels: usize, data: Vec<f64>) -> Self {
        assert!(levels > 0 && data.len() % levels == 0, "ragged level matrix");
        LevelMatrix { levels, data }
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.levels);
        self.data.extend_from_slice(row);
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn rows(&self) -> usize {
        self.data.len().checked_div(self.levels).unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.levels..(i + 1) * self.levels]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.levels + k]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.levels.max(1))
    }
}
