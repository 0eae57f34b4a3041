//! CSV and JSON file formats. Files use 0-based timesteps and 1-based
//! stage and level numbers; everything in memory is converted to the core
//! conventions (1-based time, 0-based stage and level) on the way in.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use csv::{ReaderBuilder, StringRecord, Trim};
use serde::de::DeserializeOwned;
use serde::Serialize;
use unfold_core::cohort::{Cohort, Episode};
use unfold_core::cost::Cost;
use unfold_core::engine::{CohortRun, TraceRecord};
use unfold_core::metrics::TradeoffPoint;
use unfold_core::scores::{FeatureTable, ScoreMatrix};
use unfold_core::zoo::{ModelSpec, ModelZoo};

use crate::error::{Error, Result};

pub const ZOO_HEADER: [&str; 5] = ["model_id", "stage", "level", "cost", "val_auc"];
pub const SCORES_HEADER: [&str; 4] = ["episode_id", "t", "model_id", "p"];
pub const COHORT_HEADER: [&str; 4] = ["episode_id", "T", "stage", "onset_t"];
pub const TRACE_HEADER: [&str; 8] = ["episode_id", "t", "stage", "level", "p", "q", "action", "cost"];
pub const POINTS_HEADER: [&str; 4] = ["budget", "cost_per_call", "auc", "policy_path"];

type CoreResult<T> = unfold_core::Result<T>;

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so readers never see a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut builder = tempfile::Builder::new();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        builder.permissions(std::fs::Permissions::from_mode(0o644));
    }
    let mut tmp = builder.tempfile_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Json { path: path.into(), source: e })?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Json { path: path.into(), source: e })
}

fn reader(path: &Path) -> Result<csv::Reader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(ReaderBuilder::new().trim(Trim::All).from_reader(BufReader::new(file)))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::Row { path: path.into(), line, source: unfold_core::Error::Validation(format!("{kind:?}")) },
    }
}

fn headers(path: &Path, rdr: &mut csv::Reader<BufReader<File>>) -> Result<Vec<String>> {
    let h = rdr.headers().map_err(|e| csv_error(path, e))?;
    Ok(h.iter().map(str::to_string).collect())
}

fn expect_header(path: &Path, rdr: &mut csv::Reader<BufReader<File>>, expected: &[&str]) -> Result<()> {
    let found = headers(path, rdr)?;
    if found != expected {
        return Err(Error::Row {
            path: path.into(),
            line: 1,
            source: unfold_core::Error::Validation(format!(
                "expected header {:?}, found {:?}",
                expected.join(","),
                found.join(",")
            )),
        });
    }
    Ok(())
}

/// Reads every data row, attaching the line number to any failure.
fn for_each_row(
    path: &Path,
    rdr: &mut csv::Reader<BufReader<File>>,
    mut f: impl FnMut(&StringRecord, u64) -> CoreResult<()>,
) -> Result<()> {
    let mut rec = StringRecord::new();
    loop {
        match rdr.read_record(&mut rec) {
            Ok(false) => return Ok(()),
            Ok(true) => {
                let line = rec.position().map(|p| p.line()).unwrap_or(0);
                f(&rec, line).map_err(|source| Error::Row { path: path.into(), line, source })?;
            }
            Err(e) => return Err(csv_error(path, e)),
        }
    }
}

fn parse<T: FromStr>(rec: &StringRecord, i: usize, name: &str) -> CoreResult<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse()
        .map_err(|_| unfold_core::Error::Validation(format!("column {name}: cannot parse {raw:?}")))
}

fn parse_opt<T: FromStr>(rec: &StringRecord, i: usize, name: &str) -> CoreResult<Option<T>> {
    if rec.get(i).unwrap_or("").is_empty() {
        Ok(None)
    } else {
        parse(rec, i, name).map(Some)
    }
}

fn finish_csv(path: &Path, w: csv::Writer<Vec<u8>>) -> Result<()> {
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    atomic_write(path, &bytes)
}

fn csv_writer(header: &[&str]) -> csv::Writer<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    w
}

fn row(w: &mut csv::Writer<Vec<u8>>, fields: &[String]) {
    w.write_record(fields).expect("in-memory write");
}

/// Zoo manifest. Level-0 rows declare the per-call cost of a stage's
/// surrogate.
pub fn read_zoo(path: &Path) -> Result<ModelZoo> {
    let mut rdr = reader(path)?;
    expect_header(path, &mut rdr, &ZOO_HEADER)?;
    let mut models = Vec::new();
    let mut dkd: Vec<(usize, Cost)> = Vec::new();
    for_each_row(path, &mut rdr, |rec, _| {
        let id = rec.get(0).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(unfold_core::Error::Validation("empty model_id".into()));
        }
        let stage: usize = parse(rec, 1, "stage")?;
        let level: usize = parse(rec, 2, "level")?;
        let cost = Cost::from_units(parse(rec, 3, "cost")?)?;
        let val_auc: Option<f64> = parse_opt(rec, 4, "val_auc")?;
        if let Some(a) = val_auc {
            if !(0.0..=1.0).contains(&a) {
                return Err(unfold_core::Error::Range(format!("val_auc {a} outside [0,1]")));
            }
        }
        if level == 0 {
            if dkd.iter().any(|&(s, _)| s == stage) {
                return Err(unfold_core::Error::Validation(format!("second surrogate cost row for stage {stage}")));
            }
            dkd.push((stage, cost));
        } else {
            models.push(ModelSpec { id, stage, level, cost, val_auc });
        }
        Ok(())
    })?;
    ModelZoo::new(models, &dkd).map_err(|e| Error::Core(e.context(&path.display().to_string())))
}

pub fn write_zoo(path: &Path, zoo: &ModelZoo) -> Result<()> {
    let mut w = csv_writer(&ZOO_HEADER);
    for m in zoo.models() {
        let auc = m.val_auc.map(|a| a.to_string()).unwrap_or_default();
        row(&mut w, &[m.id.clone(), m.stage.to_string(), m.level.to_string(), m.cost.units().to_string(), auc]);
    }
    for s in 0..zoo.stage_count() {
        let c = zoo.dkd_cost(s);
        if c > Cost::ZERO {
            row(&mut w, &[format!("dkd{}", s + 1), (s + 1).to_string(), "0".into(), c.units().to_string(), String::new()]);
        }
    }
    finish_csv(path, w)
}

/// Score table; coverage against a cohort is checked separately with
/// [`ScoreMatrix::check_coverage`].
pub fn read_scores(path: &Path, zoo: &ModelZoo) -> Result<ScoreMatrix> {
    let mut rdr = reader(path)?;
    expect_header(path, &mut rdr, &SCORES_HEADER)?;
    let mut builder = ScoreMatrix::builder(zoo);
    for_each_row(path, &mut rdr, |rec, _| {
        let t: usize = parse(rec, 1, "t")?;
        let p: f64 = parse(rec, 3, "p")?;
        builder.insert(&rec[0], t + 1, &rec[2], p)
    })?;
    Ok(builder.build())
}

pub fn write_scores(path: &Path, scores: &ScoreMatrix) -> Result<()> {
    let mut w = csv_writer(&SCORES_HEADER);
    for (ep, t, id, p) in scores.cells() {
        row(&mut w, &[ep.into(), (t - 1).to_string(), id.into(), p.to_string()]);
    }
    finish_csv(path, w)
}

struct PendingEpisode {
    id: String,
    len: u32,
    line: u64,
    onsets: Vec<Option<u32>>,
    negative: bool,
}

/// Cohort table: one row per entered stage, or a single row with empty
/// `stage` and `onset_t` for an episode that enters none.
pub fn read_cohort(path: &Path, stages: usize) -> Result<Cohort> {
    let mut rdr = reader(path)?;
    expect_header(path, &mut rdr, &COHORT_HEADER)?;
    let mut pending: Vec<PendingEpisode> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for_each_row(path, &mut rdr, |rec, line| {
        let id = &rec[0];
        if id.is_empty() {
            return Err(unfold_core::Error::Validation("empty episode_id".into()));
        }
        let len: u32 = parse(rec, 1, "T")?;
        let stage: Option<usize> = parse_opt(rec, 2, "stage")?;
        let onset: Option<u32> = parse_opt(rec, 3, "onset_t")?;
        let i = *index.entry(id.to_string()).or_insert_with(|| {
            pending.push(PendingEpisode { id: id.to_string(), len, line, onsets: vec![None; stages], negative: false });
            pending.len() - 1
        });
        let ep = &mut pending[i];
        if ep.len != len {
            return Err(unfold_core::Error::Validation(format!("episode {id}: T is {len} here but {} earlier", ep.len)));
        }
        match (stage, onset) {
            (None, None) => ep.negative = true,
            (Some(s), Some(o)) => {
                if s == 0 || s > stages {
                    return Err(unfold_core::Error::Range(format!("stage {s} outside 1..={stages}")));
                }
                if ep.onsets[s - 1].is_some() {
                    return Err(unfold_core::Error::Validation(format!("episode {id}: second onset row for stage {s}")));
                }
                ep.onsets[s - 1] = Some(o + 1);
            }
            _ => {
                return Err(unfold_core::Error::Validation("stage and onset_t must both be set or both be empty".into()))
            }
        }
        if ep.negative && ep.onsets.iter().any(Option::is_some) {
            return Err(unfold_core::Error::Validation(format!("episode {id}: has both an empty row and onset rows")));
        }
        Ok(())
    })?;
    let mut episodes = Vec::with_capacity(pending.len());
    for p in pending {
        let ep = Episode::new(p.id, p.len, p.onsets).map_err(|source| Error::Row { path: path.into(), line: p.line, source })?;
        episodes.push(ep);
    }
    Ok(Cohort::new(stages, episodes)?)
}

pub fn write_cohort(path: &Path, cohort: &Cohort) -> Result<()> {
    let mut w = csv_writer(&COHORT_HEADER);
    for ep in cohort.episodes() {
        let len = ep.len.to_string();
        if ep.onsets().iter().all(Option::is_none) {
            row(&mut w, &[ep.id.clone(), len, String::new(), String::new()]);
            continue;
        }
        for (s, onset) in ep.onsets().iter().enumerate() {
            if let Some(t) = onset {
                row(&mut w, &[ep.id.clone(), len.clone(), (s + 1).to_string(), (t - 1).to_string()]);
            }
        }
    }
    finish_csv(path, w)
}

pub fn read_features(path: &Path) -> Result<FeatureTable> {
    let mut rdr = reader(path)?;
    let found = headers(path, &mut rdr)?;
    let dim = found.len().saturating_sub(2);
    let expected: Vec<String> =
        ["episode_id".to_string(), "t".to_string()].into_iter().chain((0..dim).map(|i| format!("f{i}"))).collect();
    if dim == 0 || found != expected {
        return Err(Error::Row {
            path: path.into(),
            line: 1,
            source: unfold_core::Error::Validation(format!(
                "expected header episode_id,t,f0..f{{d-1}} with d >= 1, found {:?}",
                found.join(",")
            )),
        });
    }
    let mut table = FeatureTable::new(dim);
    let mut values = vec![0.0; dim];
    for_each_row(path, &mut rdr, |rec, _| {
        let t: usize = parse(rec, 1, "t")?;
        for (j, v) in values.iter_mut().enumerate() {
            *v = parse(rec, j + 2, &expected[j + 2])?;
        }
        table.insert(&rec[0], t + 1, &values)
    })?;
    Ok(table)
}

pub fn write_features(path: &Path, features: &FeatureTable) -> Result<()> {
    let header: Vec<String> =
        ["episode_id".to_string(), "t".to_string()].into_iter().chain((0..features.dim()).map(|i| format!("f{i}"))).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for (ep, t, values) in features.rows() {
        let mut fields = vec![ep.to_string(), (t - 1).to_string()];
        fields.extend(values.iter().map(f64::to_string));
        row(&mut w, &fields);
    }
    finish_csv(path, w)
}

pub fn write_traces(path: &Path, run: &CohortRun) -> Result<()> {
    let mut w = csv_writer(&TRACE_HEADER);
    for ep in &run.runs {
        for r in &ep.records {
            row(
                &mut w,
                &[
                    ep.episode.clone(),
                    (r.t - 1).to_string(),
                    (r.stage + 1).to_string(),
                    (r.level + 1).to_string(),
                    r.p.to_string(),
                    r.q.to_string(),
                    r.action.name().into(),
                    r.cost.units().to_string(),
                ],
            );
        }
    }
    finish_csv(path, w)
}

/// Trace rows as `(episode_id, record)` in core conventions.
pub fn read_traces(path: &Path) -> Result<Vec<(String, TraceRecord)>> {
    let mut rdr = reader(path)?;
    expect_header(path, &mut rdr, &TRACE_HEADER)?;
    let mut out = Vec::new();
    for_each_row(path, &mut rdr, |rec, _| {
        let one_based = |i: usize, name: &str| -> CoreResult<usize> {
            let v: usize = parse(rec, i, name)?;
            v.checked_sub(1).ok_or_else(|| unfold_core::Error::Range(format!("{name} must be >= 1")))
        };
        let record = TraceRecord {
            t: parse::<u32>(rec, 1, "t")? + 1,
            stage: one_based(2, "stage")?,
            level: one_based(3, "level")?,
            p: parse(rec, 4, "p")?,
            q: parse(rec, 5, "q")?,
            action: rec[6].parse()?,
            cost: Cost::from_units(parse(rec, 7, "cost")?)?,
        };
        out.push((rec[0].to_string(), record));
        Ok(())
    })?;
    Ok(out)
}

pub fn write_points(path: &Path, points: &[TradeoffPoint]) -> Result<()> {
    let mut w = csv_writer(&POINTS_HEADER);
    for p in points {
        row(&mut w, &[p.budget.to_string(), p.cost.to_string(), p.auc.to_string(), p.policy.clone().unwrap_or_default()]);
    }
    finish_csv(path, w)
}

pub fn read_points(path: &Path) -> Result<Vec<TradeoffPoint>> {
    let mut rdr = reader(path)?;
    expect_header(path, &mut rdr, &POINTS_HEADER)?;
    let mut out = Vec::new();
    for_each_row(path, &mut rdr, |rec, _| {
        out.push(TradeoffPoint {
            budget: parse(rec, 0, "budget")?,
            cost: parse(rec, 1, "cost_per_call")?,
            auc: parse(rec, 2, "auc")?,
            policy: parse_opt(rec, 3, "policy_path")?,
        });
        Ok(())
    })?;
    Ok(out)
}
