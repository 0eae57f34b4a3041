//! Confidence measures over binary predictions and two-class Dirichlets.
//!
//! Raw measures keep their natural ranges; [`confidence`] rescales each one
//! onto `[0, 1]` with larger meaning more confident, so a single cutoff
//! scale serves every measure.

use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, LN_2};

/// Concentrations `(alpha0, alpha1)` of a Dirichlet over `(1 - pi, pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirichletParams {
    pub alpha0: f64,
    pub alpha1: f64,
}

impl DirichletParams {
    pub fn new(alpha0: f64, alpha1: f64) -> Result<Self> {
        if !(alpha0.is_finite() && alpha1.is_finite() && alpha0 > 0.0 && alpha1 > 0.0) {
            return Err(Error::Range(alloc::format!(
                "Dirichlet concentrations must be positive and finite, got ({alpha0}, {alpha1})"
            )));
        }
        Ok(DirichletParams { alpha0, alpha1 })
    }

    pub fn total(&self) -> f64 {
        self.alpha0 + self.alpha1
    }

    pub fn swapped(&self) -> Self {
        DirichletParams { alpha0: self.alpha1, alpha1: self.alpha0 }
    }
}

/// Sharp Dirichlet standing in for a teacher's point prediction `p`:
/// `Dir(beta * (1 - p, p) + 1)`.
pub fn teacher_dirichlet(p: f64, beta: f64) -> DirichletParams {
    let p = p.clamp(0.0, 1.0);
    DirichletParams { alpha0: beta * (1.0 - p) + 1.0, alpha1: beta * p + 1.0 }
}

pub fn max_prob(p: f64) -> f64 {
    p.max(1.0 - p)
}

/// `p ln p + (1-p) ln(1-p)`: negative Shannon entropy in nats, in `[-ln 2, 0]`.
pub fn neg_entropy(p: f64) -> f64 {
    math::xlogx(p) + math::xlogx(1.0 - p)
}

/// Expected entropy of the categorical drawn from `Dir(alpha)`:
/// `psi(S + 1) - sum_k (alpha_k / S) psi(alpha_k + 1)`.
pub fn expected_entropy(d: DirichletParams) -> f64 {
    let s = d.total();
    let v = math::digamma(s + 1.0)
        - (d.alpha0 / s) * math::digamma(d.alpha0 + 1.0)
        - (d.alpha1 / s) * math::digamma(d.alpha1 + 1.0);
    v.clamp(0.0, LN_2)
}

/// Entropy of the expected prediction minus the expected entropy.
pub fn mutual_information(d: DirichletParams) -> f64 {
    let s = d.total();
    let h = -neg_entropy(expected_prob(d));
    let eh = math::digamma(s + 1.0)
        - (d.alpha0 / s) * math::digamma(d.alpha0 + 1.0)
        - (d.alpha1 / s) * math::digamma(d.alpha1 + 1.0);
    h - eh
}

pub fn expected_prob(d: DirichletParams) -> f64 {
    d.alpha1 / d.total()
}

/// Closed-form `KL(Dir(a) || Dir(b))`.
pub fn dirichlet_kl(a: DirichletParams, b: DirichletParams) -> f64 {
    let (sa, sb) = (a.total(), b.total());
    let psi = math::digamma(sa);
    math::ln_gamma(sa) - math::ln_gamma(a.alpha0) - math::ln_gamma(a.alpha1) - math::ln_gamma(sb)
        + math::ln_gamma(b.alpha0)
        + math::ln_gamma(b.alpha1)
        + (a.alpha0 - b.alpha0) * (math::digamma(a.alpha0) - psi)
        + (a.alpha1 - b.alpha1) * (math::digamma(a.alpha1) - psi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfidenceMeasure {
    MaxProb,
    #[serde(rename = "entropy")]
    NegEntropy,
    #[serde(rename = "entropy-of-expected")]
    NegExpectedEntropy,
    #[serde(rename = "mutual-information")]
    NegMutualInformation,
}

impl ConfidenceMeasure {
    pub const ALL: [ConfidenceMeasure; 4] = [
        ConfidenceMeasure::MaxProb,
        ConfidenceMeasure::NegEntropy,
        ConfidenceMeasure::NegExpectedEntropy,
        ConfidenceMeasure::NegMutualInformation,
    ];

    pub fn needs_dirichlet(self) -> bool {
        matches!(self, ConfidenceMeasure::NegExpectedEntropy | ConfidenceMeasure::NegMutualInformation)
    }

    pub fn name(self) -> &'static str {
        match self {
            ConfidenceMeasure::MaxProb => "max-prob",
            ConfidenceMeasure::NegEntropy => "entropy",
            ConfidenceMeasure::NegExpectedEntropy => "entropy-of-expected",
            ConfidenceMeasure::NegMutualInformation => "mutual-information",
        }
    }

    /// Rescaled confidence of a teacher probability; Dirichlet measures see
    /// the teacher through [`teacher_dirichlet`].
    pub fn of_prob(self, p: f64, beta: f64) -> f64 {
        let ev = if self.needs_dirichlet() {
            Evidence::Dirichlet(teacher_dirichlet(p, beta))
        } else {
            Evidence::Prob(p)
        };
        confidence(self, ev).expect("evidence kind matches measure")
    }

    /// Rescaled confidence of a distilled Dirichlet; probability measures
    /// use its expected probability.
    pub fn of_dirichlet(self, d: DirichletParams) -> f64 {
        let ev = if self.needs_dirichlet() {
            Evidence::Dirichlet(d)
        } else {
            Evidence::Prob(expected_prob(d))
        };
        confidence(self, ev).expect("evidence kind matches measure")
    }
}

impl fmt::Display for ConfidenceMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConfidenceMeasure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ConfidenceMeasure::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Usage(alloc::format!("unknown confidence measure {s}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evidence {
    Prob(f64),
    Dirichlet(DirichletParams),
}

/// Rescaled confidence in `[0, 1]`, larger = more confident.
pub fn confidence(measure: ConfidenceMeasure, evidence: Evidence) -> Result<f64> {
    let q = match (measure, evidence) {
        (ConfidenceMeasure::MaxProb, Evidence::Prob(p)) => (max_prob(p) - 0.5) / 0.5,
        (ConfidenceMeasure::NegEntropy, Evidence::Prob(p)) => (neg_entropy(p) + LN_2) / LN_2,
        (ConfidenceMeasure::NegExpectedEntropy, Evidence::Dirichlet(d)) => 1.0 - expected_entropy(d) / LN_2,
        (ConfidenceMeasure::NegMutualInformation, Evidence::Dirichlet(d)) => {
            1.0 - mutual_information(d) / LN_2
        }
        (m, _) => {
            return Err(Error::Usage(alloc::format!(
                "measure {m} needs {} evidence",
                if m.needs_dirichlet() { "Dirichlet" } else { "probability" }
            )))
        }
    };
    Ok(q.clamp(0.0, 1.0))
}
