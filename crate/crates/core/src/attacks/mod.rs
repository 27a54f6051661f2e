//! Statistics-based membership scores and record-to-user aggregation.

pub mod ensemble;
pub mod lira;
pub mod rmia;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shadow::AttackMode;

/// Smallest probability-domain score accepted before taking logs.
pub const SCORE_FLOOR: f64 = 1e-300;

/// Whether scores are log-likelihoods (already summable) or probabilities
/// in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreDomain {
    Log,
    Probability,
}

/// Scores for one attack over a fixed unit list, larger meaning more
/// member-like.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackScoreSet {
    pub attack: String,
    pub mode: Option<AttackMode>,
    pub domain: ScoreDomain,
    pub units: Vec<String>,
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

impl AttackScoreSet {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Name used in reports, e.g. `lira-multi-online`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AttackLabel {
    pub name: String,
    pub mode: Option<AttackMode>,
}

impl fmt::Display for AttackLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.mode {
            Some(m) => write!(f, "{}-{m}", self.name),
            None => f.write_str(&self.name),
        }
    }
}

/// Log-domain product of one user's record scores.
pub fn aggregate_user_score(record_scores: &[f64], domain: ScoreDomain) -> Result<f64> {
    if record_scores.is_empty() {
        return Err(Error::Insufficient("user has no records".into()));
    }
    let mut total = 0.0;
    for &s in record_scores {
        if !s.is_finite() {
            return Err(Error::NonFinite("record score".into()));
        }
        total += match domain {
            ScoreDomain::Log => s,
            ScoreDomain::Probability => {
                if s < 0.0 {
                    return Err(Error::Invalid(format!("negative probability score {s}")));
                }
                s.max(SCORE_FLOOR).ln()
            }
        };
    }
    Ok(total)
}

/// One aggregate per group, in group order.
pub fn aggregate_user_scores(groups: &[Vec<f64>], domain: ScoreDomain) -> Result<Vec<f64>> {
    groups
        .iter()
        .map(|g| aggregate_user_score(g, domain))
        .collect()
}
