//! Per-record Gaussian fits of shadow signals and the likelihood-ratio
//! scores built on them (diagonal covariance across signals).

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{Error, Result};
use crate::shadow::{AttackMode, MembershipMatrix, SignalTensor};
use crate::signals::{SignalSet, SignalVector};

pub const SIGMA_FLOOR: f64 = 1e-6;

/// Below this standardized value the asymptotic tail series replaces erfc.
const LOG_NDTR_ASYMPTOTIC: f64 = -30.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceMode {
    /// Each record's spread comes from its own shadow values.
    #[default]
    PerExample,
    /// One spread per signal and group, pooled over records.
    Global,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub std: f64,
}

impl Gaussian {
    pub fn log_pdf(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.std;
        -0.5 * z * z - self.std.ln() - 0.5 * (2.0 * PI).ln()
    }
}

/// `ln Φ(z)` for the standard normal, accurate far into the lower tail.
pub fn log_ndtr(z: f64) -> f64 {
    if z >= LOG_NDTR_ASYMPTOTIC {
        (0.5 * erfc(-z / SQRT_2)).ln()
    } else {
        let r = 1.0 / (z * z);
        let series = 1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r)));
        -0.5 * z * z - (-z).ln() - 0.5 * (2.0 * PI).ln() + series.ln()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSignalModel {
    signals: SignalSet,
    variance: VarianceMode,
    n_records: usize,
    fit_in: Option<Vec<Gaussian>>,
    fit_out: Vec<Gaussian>,
}

impl GaussianSignalModel {
    pub fn signals(&self) -> &SignalSet {
        &self.signals
    }

    pub fn variance_mode(&self) -> VarianceMode {
        self.variance
    }

    pub fn n_records(&self) -> usize {
        self.n_records
    }

    pub fn has_in_fit(&self) -> bool {
        self.fit_in.is_some()
    }

    pub fn in_fit(&self, record: usize, signal: usize) -> Option<Gaussian> {
        self.fit_in
            .as_ref()
            .map(|f| f[record * self.signals.len() + signal])
    }

    pub fn out_fit(&self, record: usize, signal: usize) -> Gaussian {
        self.fit_out[record * self.signals.len() + signal]
    }
}

/// Mean and population variance per (record, signal) over the shadows whose
/// membership equals `want_in`, before flooring.
fn group_moments(
    tensor: &SignalTensor,
    membership: &MembershipMatrix,
    want_in: bool,
) -> Result<(Vec<f64>, Vec<f64>, Vec<usize>)> {
    let s = tensor.signals().len();
    let k = tensor.shadows();
    let n = tensor.n_records();
    let mut means = vec![0.0; n * s];
    let mut vars = vec![0.0; n * s];
    let mut counts = vec![0; n];
    for r in 0..n {
        let models: Vec<usize> = (0..k).filter(|&m| membership.get(r, m) == want_in).collect();
        if models.is_empty() {
            let side = if want_in { "in" } else { "out" };
            return Err(Error::Insufficient(format!("record {r} has no {side}-shadows")));
        }
        counts[r] = models.len();
        let c = models.len() as f64;
        for si in 0..s {
            let mean = models.iter().map(|&m| tensor.get(r, m, si)).sum::<f64>() / c;
            let var = models
                .iter()
                .map(|&m| (tensor.get(r, m, si) - mean).powi(2))
                .sum::<f64>()
                / c;
            means[r * s + si] = mean;
            vars[r * s + si] = var;
        }
    }
    Ok((means, vars, counts))
}

fn finish_fits(
    means: Vec<f64>,
    vars: Vec<f64>,
    counts: &[usize],
    s: usize,
    variance: VarianceMode,
    sigma_floor: f64,
) -> Vec<Gaussian> {
    let stds: Vec<f64> = match variance {
        VarianceMode::PerExample => vars.iter().map(|v| v.sqrt()).collect(),
        VarianceMode::Global => {
            let total: usize = counts.iter().sum();
            let pooled: Vec<f64> = (0..s)
                .map(|si| {
                    let ss: f64 = counts
                        .iter()
                        .enumerate()
                        .map(|(r, &c)| vars[r * s + si] * c as f64)
                        .sum();
                    (ss / total as f64).sqrt()
                })
                .collect();
            (0..vars.len()).map(|i| pooled[i % s]).collect()
        }
    };
    means
        .into_iter()
        .zip(stds)
        .map(|(mean, std)| Gaussian {
            mean,
            std: std.max(sigma_floor),
        })
        .collect()
}

/// Fits in- and out-Gaussians per (record, signal). Offline fits only the
/// out side, from the shadows that exclude the record.
pub fn fit_gaussian_model(
    tensor: &SignalTensor,
    membership: &MembershipMatrix,
    mode: AttackMode,
    variance: VarianceMode,
    sigma_floor: f64,
) -> Result<GaussianSignalModel> {
    if membership.n_records() != tensor.n_records() || membership.shadows() != tensor.shadows() {
        return Err(Error::shape(
            format!("{}x{}", tensor.n_records(), tensor.shadows()),
            format!("{}x{}", membership.n_records(), membership.shadows()),
        ));
    }
    if !(sigma_floor > 0.0) {
        return Err(Error::Invalid(format!("sigma floor must be positive, got {sigma_floor}")));
    }
    let s = tensor.signals().len();
    let (m_out, v_out, c_out) = group_moments(tensor, membership, false)?;
    let fit_out = finish_fits(m_out, v_out, &c_out, s, variance, sigma_floor);
    let fit_in = match mode {
        AttackMode::Online => {
            let (m_in, v_in, c_in) = group_moments(tensor, membership, true)?;
            Some(finish_fits(m_in, v_in, &c_in, s, variance, sigma_floor))
        }
        AttackMode::Offline => None,
    };
    Ok(GaussianSignalModel {
        signals: tensor.signals().clone(),
        variance,
        n_records: tensor.n_records(),
        fit_in,
        fit_out,
    })
}

fn target_values(model: &GaussianSignalModel, target: &SignalVector) -> Result<Vec<f64>> {
    model
        .signals
        .ids()
        .iter()
        .map(|&id| {
            target
                .get(id)
                .ok_or_else(|| Error::Invalid(format!("target vector lacks signal {id}")))
        })
        .collect()
}

/// Log of the in/out density ratio, summed over signals.
pub fn lira_score_online(model: &GaussianSignalModel, target: &SignalVector, record: usize) -> Result<f64> {
    let fit_in = model
        .fit_in
        .as_ref()
        .ok_or_else(|| Error::Invalid("online score needs in-shadow fits".into()))?;
    let s = model.signals.len();
    let values = target_values(model, target)?;
    Ok(values
        .iter()
        .enumerate()
        .map(|(si, &v)| fit_in[record * s + si].log_pdf(v) - model.fit_out[record * s + si].log_pdf(v))
        .sum())
}

/// Log of the product of per-signal out-distribution CDFs. Error-like
/// signals are negated first, so a target error below the out-mean pushes
/// the score up.
pub fn lira_score_offline(model: &GaussianSignalModel, target: &SignalVector, record: usize) -> Result<f64> {
    let s = model.signals.len();
    let values = target_values(model, target)?;
    Ok(model
        .signals
        .ids()
        .iter()
        .zip(values)
        .enumerate()
        .map(|(si, (id, v))| {
            let g = model.fit_out[record * s + si];
            let z = (v - g.mean) / g.std;
            log_ndtr(if id.is_error_like() { -z } else { z })
        })
        .sum())
}

/// Scores every tensor record against its own target-model signals.
pub fn lira_scores(
    tensor: &SignalTensor,
    membership: &MembershipMatrix,
    mode: AttackMode,
    signals: &SignalSet,
    variance: VarianceMode,
) -> Result<Vec<f64>> {
    let sub = tensor.select(signals)?;
    let model = fit_gaussian_model(&sub, membership, mode, variance, SIGMA_FLOOR)?;
    (0..sub.n_records())
        .map(|r| {
            let target = sub.target_vector(r);
            match mode {
                AttackMode::Online => lira_score_online(&model, &target, r),
                AttackMode::Offline => lira_score_offline(&model, &target, r),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::SignalId;

    /// One record, `k` shadows plus the target, signals in tensor order.
    fn single_record(set: &SignalSet, shadow_values: &[Vec<f64>], target: &[f64]) -> SignalTensor {
        let mut data = Vec::new();
        for v in shadow_values {
            data.extend_from_slice(v);
        }
        data.extend_from_slice(target);
        SignalTensor::new(set.clone(), 1, shadow_values.len() + 1, data).unwrap()
    }

    #[test]
    fn constant_shadows_floor_sigma() {
        let set = SignalSet::new([SignalId::Mse]);
        let t = single_record(&set, &vec![vec![0.7]; 4], &[0.7]);
        let m = MembershipMatrix::new(1, 4, vec![true, false, true, false]).unwrap();
        let g = fit_gaussian_model(&t, &m, AttackMode::Online, VarianceMode::PerExample, SIGMA_FLOOR).unwrap();
        let (gi, go) = (g.in_fit(0, 0).unwrap(), g.out_fit(0, 0));
        assert_eq!((gi.mean, gi.std), (0.7, SIGMA_FLOOR));
        assert_eq!((go.mean, go.std), (0.7, SIGMA_FLOOR));
    }

    #[test]
    fn population_variance_convention() {
        let set = SignalSet::new([SignalId::Mae]);
        let t = single_record(&set, &[vec![0.0], vec![2.0], vec![5.0]], &[1.0]);
        let m = MembershipMatrix::new(1, 3, vec![true, true, false]).unwrap();
        let g = fit_gaussian_model(&t, &m, AttackMode::Online, VarianceMode::PerExample, SIGMA_FLOOR).unwrap();
        let gi = g.in_fit(0, 0).unwrap();
        assert_eq!((gi.mean, gi.std), (1.0, 1.0));
    }

    #[test]
    fn offline_has_no_in_side() {
        let set = SignalSet::new([SignalId::Mae]);
        let t = single_record(&set, &[vec![1.0], vec![3.0]], &[1.0]);
        let m = MembershipMatrix::new(1, 2, vec![false, false]).unwrap();
        let g = fit_gaussian_model(&t, &m, AttackMode::Offline, VarianceMode::PerExample, SIGMA_FLOOR).unwrap();
        assert!(!g.has_in_fit());
        assert_eq!(g.out_fit(0, 0), Gaussian { mean: 2.0, std: 1.0 });
        assert!(lira_score_online(&g, &t.target_vector(0), 0).is_err());
        // Online fitting of the same rows has an empty in-group.
        assert!(matches!(
            fit_gaussian_model(&t, &m, AttackMode::Online, VarianceMode::PerExample, SIGMA_FLOOR),
            Err(Error::Insufficient(_))
        ));
    }

    #[test]
    fn global_variance_pools_records() {
        let set = SignalSet::new([SignalId::Mse]);
        // Record 0 out-values {0, 2} (var 1), record 1 out-values {0, 4} (var 4).
        let data = vec![0.0, 2.0, 0.0, 0.0, 4.0, 0.0];
        let t = SignalTensor::new(set, 2, 3, data).unwrap();
        let m = MembershipMatrix::new(2, 2, vec![false; 4]).unwrap();
        let g = fit_gaussian_model(&t, &m, AttackMode::Offline, VarianceMode::Global, SIGMA_FLOOR).unwrap();
        let pooled = 2.5f64.sqrt();
        assert!((g.out_fit(0, 0).std - pooled).abs() < 1e-15);
        assert!((g.out_fit(1, 0).std - pooled).abs() < 1e-15);
        assert_eq!(g.out_fit(1, 0).mean, 2.0);
    }

    #[test]
    fn online_ratio_hand_value() {
        // mu_in 0, mu_out 1, sigma 1, s = 0 -> exp(0.5).
        let set = SignalSet::new([SignalId::Mse]);
        let t = single_record(&set, &[vec![-1.0], vec![1.0], vec![0.0], vec![2.0]], &[0.0]);
        let m = MembershipMatrix::new(1, 4, vec![true, true, false, false]).unwrap();
        let g = fit_gaussian_model(&t, &m, AttackMode::Online, VarianceMode::PerExample, SIGMA_FLOOR).unwrap();
        let score = lira_score_online(&g, &t.target_vector(0), 0).unwrap();
        assert!((score.exp() - 0.5f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn offline_tail_orientation() {
        let set = SignalSet::new([SignalId::Mse]);
        let t = single_record(&set, &[vec![-1.0], vec![1.0]], &[-1.96]);
        let m = MembershipMatrix::new(1, 2, vec![false, false]).unwrap();
        let g = fit_gaussian_model(&t, &m, AttackMode::Offline, VarianceMode::PerExample, SIGMA_FLOOR).unwrap();
        // Raw lower tail at mu - 1.96 sigma is about 0.025; the error
        // orientation turns that into the upper 0.975.
        assert!((log_ndtr(-1.96).exp() - 0.024997895148220435).abs() < 1e-12);
        let score = lira_score_offline(&g, &t.target_vector(0), 0).unwrap();
        assert!((score.exp() - 0.9750021048517795).abs() < 1e-12);
    }

    #[test]
    fn log_ndtr_tail_is_continuous() {
        let a = log_ndtr(LOG_NDTR_ASYMPTOTIC + 1e-9);
        let b = log_ndtr(LOG_NDTR_ASYMPTOTIC - 1e-9);
        assert!((a - b).abs() / a.abs() < 1e-9);
        assert!(log_ndtr(-200.0).is_finite());
        assert_eq!(log_ndtr(40.0), 0.0);
    }
}
