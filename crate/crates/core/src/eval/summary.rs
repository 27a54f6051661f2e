//! Per-seed metric rows and their mean and sample deviation across seeds.

use serde::{Deserialize, Serialize};

use crate::attacks::AttackScoreSet;
use crate::error::{Error, Result};
use crate::eval::roc::{auc, roc_curve, tpr_at_fpr};

pub const METRICS: [&str; 5] = [
    "record_tpr@0.1%",
    "record_tpr@0.01%",
    "record_auc",
    "user_tpr@0%",
    "user_auc",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackMetrics {
    pub attack: String,
    pub record_tpr_0_1: f64,
    pub record_tpr_0_01: f64,
    pub record_auc: f64,
    pub user_tpr_0: f64,
    pub user_auc: f64,
}

impl AttackMetrics {
    pub fn from_scores(attack: &str, record: &AttackScoreSet, user: &AttackScoreSet) -> Result<Self> {
        let r = roc_curve(&record.scores, &record.labels)?;
        let u = roc_curve(&user.scores, &user.labels)?;
        Ok(AttackMetrics {
            attack: attack.to_string(),
            record_tpr_0_1: tpr_at_fpr(&r, 0.001),
            record_tpr_0_01: tpr_at_fpr(&r, 0.0001),
            record_auc: auc(&r),
            user_tpr_0: tpr_at_fpr(&u, 0.0),
            user_auc: auc(&u),
        })
    }

    /// Values in `METRICS` order.
    pub fn values(&self) -> [f64; 5] {
        [
            self.record_tpr_0_1,
            self.record_tpr_0_01,
            self.record_auc,
            self.user_tpr_0,
            self.user_auc,
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub config_digest: String,
    pub attacks: Vec<AttackMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub attack: String,
    pub metric: String,
    pub mean: f64,
    /// Sample deviation (n - 1); 0 for a single run.
    pub std: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_digest: String,
    pub seeds: Vec<u64>,
    pub single_run: bool,
    pub rows: Vec<MetricSummary>,
}

impl Summary {
    pub fn get(&self, attack: &str, metric: &str) -> Option<&MetricSummary> {
        self.rows.iter().find(|r| r.attack == attack && r.metric == metric)
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    // Shifted by the first value so identical runs give exactly zero spread.
    let Some(&v0) = values.first() else {
        return (f64::NAN, 0.0);
    };
    let n = values.len() as f64;
    let d: f64 = values.iter().map(|v| v - v0).sum();
    let mean = v0 + d / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - v0).powi(2)).sum();
    let var = ((ss - d * d / n) / (n - 1.0)).max(0.0);
    (mean, var.sqrt())
}

pub fn aggregate_runs(reports: &[RunReport]) -> Result<Summary> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Insufficient("no run reports to aggregate".into()))?;
    let names: Vec<&str> = first.attacks.iter().map(|a| a.attack.as_str()).collect();
    for r in &reports[1..] {
        if r.config_digest != first.config_digest {
            return Err(Error::Config(format!(
                "seed {} ran config {} but seed {} ran {}",
                r.seed, r.config_digest, first.seed, first.config_digest
            )));
        }
        if r.attacks.iter().map(|a| a.attack.as_str()).ne(names.iter().copied()) {
            return Err(Error::Config(format!("seed {} reports a different attack list", r.seed)));
        }
    }
    let mut rows = Vec::new();
    for (ai, name) in names.iter().enumerate() {
        for (mi, metric) in METRICS.iter().enumerate() {
            let vals: Vec<f64> = reports.iter().map(|r| r.attacks[ai].values()[mi]).collect();
            let (mean, std) = mean_std(&vals);
            rows.push(MetricSummary {
                attack: name.to_string(),
                metric: metric.to_string(),
                mean,
                std,
                n: vals.len(),
            });
        }
    }
    Ok(Summary {
        config_digest: first.config_digest.clone(),
        seeds: reports.iter().map(|r| r.seed).collect(),
        single_run: reports.len() == 1,
        rows,
    })
}
