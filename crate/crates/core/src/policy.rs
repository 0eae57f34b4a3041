//! Trained gate policy: per-stage IDK gates, ICK1 thresholds and budgets.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::confidence::ConfidenceMeasure;
use crate::error::{Error, Result};
use crate::gate_hard::HardGateParams;
use crate::gate_soft::SoftGateParams;
use crate::zoo::ModelZoo;

pub const POLICY_VERSION: u32 = 1;

/// What an ICK0 outcome does to the query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ick0Behavior {
    /// Keep the current model for the next timestep.
    #[default]
    Stay,
    /// Drop back to the stage's level-1 model for the next timestep.
    ResetToLevel1,
    /// End the query.
    Terminal,
}

/// When a query that passed ICK1 is first evaluated by the next stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransitionTiming {
    #[default]
    NextStep,
    SameStep,
}

/// Which gate a model consults first when both IDK and ICK1 hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateOrder {
    /// Upgrade on IDK; only a model that is not IDK may fire ICK1.
    #[default]
    IdkFirst,
    /// Fire ICK1 whenever `p >= theta`, upgrading only otherwise.
    Ick1First,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateMode {
    #[default]
    Hard,
    Soft,
}

macro_rules! kebab_enum {
    ($ty:ty, $($variant:path => $name:literal),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $name),+ })
            }
        }
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($variant),)+
                    _ => Err(Error::Usage(format!("unknown {} {s:?}", stringify!($ty)))),
                }
            }
        }
    };
}

kebab_enum!(Ick0Behavior, Ick0Behavior::Stay => "stay", Ick0Behavior::ResetToLevel1 => "reset-to-level-1", Ick0Behavior::Terminal => "terminal");
kebab_enum!(TransitionTiming, TransitionTiming::NextStep => "next-step", TransitionTiming::SameStep => "same-step");
kebab_enum!(GateOrder, GateOrder::IdkFirst => "idk-first", GateOrder::Ick1First => "ick1-first");
kebab_enum!(GateMode, GateMode::Hard => "hard", GateMode::Soft => "soft");

/// How the global per-call budget is divided among stages.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetSplit {
    #[default]
    Equal,
    /// Proportional to the summed model cost of each stage.
    Proportional,
    Explicit(Vec<f64>),
}

impl BudgetSplit {
    pub fn split(&self, budget: f64, zoo: &ModelZoo) -> Result<Vec<f64>> {
        if !(budget.is_finite() && budget >= 0.0) {
            return Err(Error::Usage(format!("budget must be finite and >= 0, got {budget}")));
        }
        let stages = zoo.stage_count();
        match self {
            BudgetSplit::Equal => Ok(alloc::vec![budget / stages as f64; stages]),
            BudgetSplit::Proportional => {
                let weights: Vec<f64> =
                    (0..stages).map(|s| zoo.stage(s).iter().map(|m| m.cost.units()).sum()).collect();
                let total: f64 = weights.iter().sum();
                Ok(weights.iter().map(|w| budget * w / total).collect())
            }
            BudgetSplit::Explicit(parts) => {
                if parts.len() != stages {
                    return Err(Error::Usage(format!(
                        "explicit budget split has {} parts for {stages} stages",
                        parts.len()
                    )));
                }
                let sum: f64 = parts.iter().sum();
                if parts.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || !budgets_match(sum, budget) {
                    return Err(Error::Usage(format!(
                        "explicit budget split sums to {sum}, expected {budget}"
                    )));
                }
                Ok(parts.clone())
            }
        }
    }
}

fn budgets_match(sum: f64, budget: f64) -> bool {
    (sum - budget).abs() <= 1e-9 * budget.abs().max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum StageGate {
    Hard(HardGateParams),
    Soft(SoftGateParams),
}

impl StageGate {
    pub fn mode(&self) -> GateMode {
        match self {
            StageGate::Hard(_) => GateMode::Hard,
            StageGate::Soft(_) => GateMode::Soft,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePolicy {
    /// Model ids in level order.
    pub models: Vec<String>,
    pub gate: StageGate,
    /// ICK1 threshold on `p` per level.
    pub thresholds: Vec<f64>,
    /// Per-call stage budget `c_s`.
    pub budget: f64,
    /// Location of the stage's surrogate net (soft gating).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surrogate: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatePolicy {
    pub version: u32,
    pub measure: ConfidenceMeasure,
    /// Teacher Dirichlet concentration used for Dirichlet measures.
    pub beta: f64,
    /// Global per-call budget `c`.
    pub budget: f64,
    #[serde(default)]
    pub ick0: Ick0Behavior,
    #[serde(default)]
    pub timing: TransitionTiming,
    #[serde(default)]
    pub order: GateOrder,
    pub early_window: u32,
    pub stages: Vec<StagePolicy>,
}

impl GatePolicy {
    /// Checks internal consistency and that every referenced model exists
    /// at the right place in `zoo`.
    pub fn validate(&self, zoo: &ModelZoo) -> Result<()> {
        if self.version != POLICY_VERSION {
            return Err(Error::Validation(format!("unsupported policy version {}", self.version)));
        }
        if self.stages.len() != zoo.stage_count() {
            return Err(Error::Validation(format!(
                "policy has {} stages, zoo has {}",
                self.stages.len(),
                zoo.stage_count()
            )));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Validation(format!("policy beta {} must be positive", self.beta)));
        }
        let sum: f64 = self.stages.iter().map(|s| s.budget).sum();
        if !budgets_match(sum, self.budget) {
            return Err(Error::Validation(format!(
                "stage budgets sum to {sum}, policy budget is {}",
                self.budget
            )));
        }
        for (s, stage) in self.stages.iter().enumerate() {
            let ctx = |m: String| Error::Validation(format!("stage {}: {m}", s + 1));
            for (k, id) in stage.models.iter().enumerate() {
                match zoo.locate(id) {
                    Some((zs, zk)) if zs == s && zk == k => {}
                    Some(_) => return Err(ctx(format!("model {id} is not at level {} of this stage in the zoo", k + 1))),
                    None => return Err(ctx(format!("policy references model {id} which is not in the zoo"))),
                }
            }
            let levels = zoo.levels(s);
            if stage.models.len() != levels {
                return Err(ctx(format!("policy lists {} models, zoo has {levels}", stage.models.len())));
            }
            if stage.thresholds.len() != levels
                || stage.thresholds.iter().any(|t| !(t.is_finite() && (0.0..=1.0).contains(t)))
            {
                return Err(ctx("ICK1 thresholds must be one per level and lie in [0, 1]".into()));
            }
            match &stage.gate {
                StageGate::Hard(h) => {
                    if h.cutoffs.len() > levels - 1 || h.cutoffs.iter().any(|c| !c.is_finite()) {
                        return Err(ctx("hard gate needs at most one finite cutoff per upgradable level".into()));
                    }
                }
                StageGate::Soft(p) => {
                    if p.a.len() != levels || p.b.len() != levels || p.a.iter().chain(&p.b).any(|v| !v.is_finite()) {
                        return Err(ctx("soft gate needs finite (a, b) for every level".into()));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn needs_surrogate(&self, s: usize) -> bool {
        matches!(self.stages[s].gate, StageGate::Soft(_))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::Cost;
    use crate::zoo::ModelSpec;
    use alloc::string::ToString;
    use alloc::vec;

    fn zoo() -> ModelZoo {
        let m = |id: &str, s, k, c: f64| ModelSpec { id: id.into(), stage: s, level: k, cost: Cost::from_units(c).unwrap(), val_auc: None };
        ModelZoo::new(vec![m("a1", 1, 1, 5.0), m("a2", 1, 2, 86.0), m("b1", 2, 1, 7.0)], &[]).unwrap()
    }

    fn policy() -> GatePolicy {
        GatePolicy {
            version: POLICY_VERSION,
            measure: ConfidenceMeasure::MaxProb,
            beta: 100.0,
            budget: 20.0,
            ick0: Ick0Behavior::Stay,
            timing: TransitionTiming::NextStep,
            order: GateOrder::IdkFirst,
            early_window: 12,
            stages: vec![
                StagePolicy {
                    models: vec!["a1".into(), "a2".into()],
                    gate: StageGate::Hard(HardGateParams { cutoffs: vec![0.4] }),
                    thresholds: vec![0.5, 0.5],
                    budget: 10.0,
                    surrogate: None,
                },
                StagePolicy {
                    models: vec!["b1".into()],
                    gate: StageGate::Hard(HardGateParams::default()),
                    thresholds: vec![0.3],
                    budget: 10.0,
                    surrogate: None,
                },
            ],
        }
    }

    #[test]
    fn valid_policy_passes() {
        policy().validate(&zoo()).unwrap();
    }

    #[test]
    fn unknown_model_is_named() {
        let mut p = policy();
        p.stages[1].models[0] = "zz".into();
        let e = p.validate(&zoo()).unwrap_err();
        assert!(e.to_string().contains("zz"));
    }

    #[test]
    fn budgets_must_add_up() {
        let mut p = policy();
        p.stages[0].budget = 11.0;
        assert!(p.validate(&zoo()).is_err());
    }

    #[test]
    fn splits() {
        let z = zoo();
        assert_eq!(BudgetSplit::Equal.split(20.0, &z).unwrap(), vec![10.0, 10.0]);
        let prop = BudgetSplit::Proportional.split(98.0, &z).unwrap();
        assert!((prop[0] - 91.0).abs() < 1e-9 && (prop[1] - 7.0).abs() < 1e-9);
        assert!(BudgetSplit::Explicit(vec![5.0, 5.0]).split(20.0, &z).is_err());
        assert_eq!(BudgetSplit::Explicit(vec![15.0, 5.0]).split(20.0, &z).unwrap(), vec![15.0, 5.0]);
    }

    #[test]
    fn names_round_trip() {
        for b in [Ick0Behavior::Stay, Ick0Behavior::ResetToLevel1, Ick0Behavior::Terminal] {
            assert_eq!(b.to_string().parse::<Ick0Behavior>().unwrap(), b);
        }
        assert_eq!("soft".parse::<GateMode>().unwrap(), GateMode::Soft);
    }
}
