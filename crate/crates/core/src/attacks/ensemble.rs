//! Ensemble baseline in a reduced form: per-feature threshold stumps and a
//! logistic combiner trained on small disjoint member/non-member subsets,
//! best candidate per subset kept, member votes averaged.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::roc::auc_of;
use crate::seed;

const HELD_OUT_FRACTION: f64 = 0.3;
const LOGISTIC_STEPS: usize = 300;
const LOGISTIC_RATE: f64 = 0.5;
const LOGISTIC_L2: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Independent runs on freshly drawn labeled subsets.
    pub executions: usize,
    /// Candidate fits per subset; the best by held-out AUC is kept.
    pub repetitions: usize,
    /// Members plus non-members per subset.
    pub subset_size: usize,
    /// Disjoint subsets per execution.
    pub combinations: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            executions: 5,
            repetitions: 3,
            subset_size: 50,
            combinations: 9,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.executions == 0 || self.repetitions == 0 || self.combinations == 0 {
            return Err(Error::Config("ensemble counts must be at least 1".into()));
        }
        if self.subset_size < 8 {
            return Err(Error::Config(format!(
                "ensemble subset size must be at least 8, got {}",
                self.subset_size
            )));
        }
        Ok(())
    }

    /// Labeled records needed per class.
    pub fn per_class_required(&self) -> usize {
        self.combinations * self.subset_size.div_ceil(2)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Classifier {
    Stump {
        feature: usize,
        threshold: f64,
        below: bool,
    },
    Logistic {
        center: Vec<f64>,
        scale: Vec<f64>,
        weights: Vec<f64>,
        bias: f64,
    },
}

impl Classifier {
    /// Positive means member.
    fn margin(&self, x: &[f64]) -> f64 {
        match self {
            Classifier::Stump {
                feature,
                threshold,
                below,
            } => {
                if *below {
                    threshold - x[*feature]
                } else {
                    x[*feature] - threshold
                }
            }
            Classifier::Logistic {
                center,
                scale,
                weights,
                bias,
            } => {
                bias + x
                    .iter()
                    .zip(center.iter().zip(scale))
                    .zip(weights)
                    .map(|((v, (c, s)), w)| w * (v - c) / s)
                    .sum::<f64>()
            }
        }
    }
}

/// Threshold on one feature maximizing balanced accuracy.
fn fit_stump(feature: usize, xs: &[&[f64]], ys: &[bool]) -> Classifier {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a][feature].total_cmp(&xs[b][feature]));
    let n_pos = ys.iter().filter(|&&y| y).count() as f64;
    let n_neg = ys.len() as f64 - n_pos;
    let lo = xs[order[0]][feature];
    let mut best = (f64::NEG_INFINITY, lo - 1.0, true);
    let (mut pos_left, mut neg_left) = (0.0, 0.0);
    for i in 0..order.len() {
        let v = xs[order[i]][feature];
        let threshold = match order.get(i + 1) {
            Some(&next) if xs[next][feature] == v => {
                if ys[order[i]] {
                    pos_left += 1.0;
                } else {
                    neg_left += 1.0;
                }
                continue;
            }
            Some(&next) => 0.5 * (v + xs[next][feature]),
            None => v + 1.0,
        };
        if ys[order[i]] {
            pos_left += 1.0;
        } else {
            neg_left += 1.0;
        }
        let below = 0.5 * (pos_left / n_pos + (n_neg - neg_left) / n_neg);
        for (acc, dir) in [(below, true), (1.0 - below, false)] {
            if acc > best.0 {
                best = (acc, threshold, dir);
            }
        }
    }
    Classifier::Stump {
        feature,
        threshold: best.1,
        below: best.2,
    }
}

/// L2-regularized logistic regression on standardized features by full-batch
/// gradient descent.
fn fit_logistic(xs: &[&[f64]], ys: &[bool]) -> Classifier {
    let d = xs[0].len();
    let n = xs.len() as f64;
    let center: Vec<f64> = (0..d).map(|j| xs.iter().map(|x| x[j]).sum::<f64>() / n).collect();
    let scale: Vec<f64> = (0..d)
        .map(|j| {
            let v = xs.iter().map(|x| (x[j] - center[j]).powi(2)).sum::<f64>() / n;
            if v > 0.0 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let zs: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| (0..d).map(|j| (x[j] - center[j]) / scale[j]).collect())
        .collect();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for _ in 0..LOGISTIC_STEPS {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for (z, &y) in zs.iter().zip(ys) {
            let p = crate::nn::sigmoid(b + z.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>());
            let e = p - f64::from(u8::from(y));
            gb += e;
            for (g, zj) in gw.iter_mut().zip(z) {
                *g += e * zj;
            }
        }
        b -= LOGISTIC_RATE * gb / n;
        for (wj, g) in w.iter_mut().zip(gw) {
            *wj -= LOGISTIC_RATE * (g / n + LOGISTIC_L2 * *wj);
        }
    }
    Classifier::Logistic {
        center,
        scale,
        weights: w,
        bias: b,
    }
}

/// Best classifier over `repetitions` random train/held-out splits of one
/// labeled subset.
fn best_for_subset(
    members: &[&[f64]],
    nonmembers: &[&[f64]],
    repetitions: usize,
    rng: &mut seed::Rng,
) -> Result<Classifier> {
    let mut best: Option<(f64, Classifier)> = None;
    let mut m: Vec<&[f64]> = members.to_vec();
    let mut nm: Vec<&[f64]> = nonmembers.to_vec();
    for _ in 0..repetitions {
        m.shuffle(rng);
        nm.shuffle(rng);
        let hm = ((m.len() as f64 * HELD_OUT_FRACTION).round() as usize).clamp(1, m.len() - 1);
        let hn = ((nm.len() as f64 * HELD_OUT_FRACTION).round() as usize).clamp(1, nm.len() - 1);
        let train_x: Vec<&[f64]> = m[hm..].iter().chain(&nm[hn..]).copied().collect();
        let train_y: Vec<bool> = (0..train_x.len()).map(|i| i < m.len() - hm).collect();
        let held_x: Vec<&[f64]> = m[..hm].iter().chain(&nm[..hn]).copied().collect();
        let held_y: Vec<bool> = (0..held_x.len()).map(|i| i < hm).collect();
        let d = train_x[0].len();
        let candidates = (0..d)
            .map(|f| fit_stump(f, &train_x, &train_y))
            .chain([fit_logistic(&train_x, &train_y)]);
        for c in candidates {
            let margins: Vec<f64> = held_x.iter().map(|x| c.margin(x)).collect();
            let a = auc_of(&margins, &held_y)?;
            if best.as_ref().is_none_or(|(b, _)| a > *b) {
                best = Some((a, c));
            }
        }
    }
    Ok(best.expect("at least one candidate").1)
}

/// Mean member-vote fraction per audit feature vector.
pub fn ensemble_attack(
    members: &[Vec<f64>],
    nonmembers: &[Vec<f64>],
    audit: &[Vec<f64>],
    cfg: &EnsembleConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let half = cfg.subset_size / 2;
    let need_m = cfg.combinations * half;
    let need_n = cfg.combinations * (cfg.subset_size - half);
    if members.len() < need_m || nonmembers.len() < need_n {
        return Err(Error::Insufficient(format!(
            "ensemble needs {need_m} members and {need_n} non-members, got {} and {}",
            members.len(),
            nonmembers.len()
        )));
    }
    let d = members[0].len();
    if members.iter().chain(nonmembers).chain(audit).any(|x| x.len() != d) {
        return Err(Error::shape(d, "ragged feature vectors"));
    }
    let mut votes = vec![0usize; audit.len()];
    let mut kept = 0usize;
    for exec in 0..cfg.executions {
        let mut rng = seed::derived_rng(seed, "ensemble", exec as u64);
        let mut m: Vec<&[f64]> = members.iter().map(Vec::as_slice).collect();
        let mut nm: Vec<&[f64]> = nonmembers.iter().map(Vec::as_slice).collect();
        m.shuffle(&mut rng);
        nm.shuffle(&mut rng);
        let other = cfg.subset_size - half;
        for c in 0..cfg.combinations {
            let clf = best_for_subset(
                &m[c * half..(c + 1) * half],
                &nm[c * other..(c + 1) * other],
                cfg.repetitions,
                &mut rng,
            )?;
            for (v, x) in votes.iter_mut().zip(audit) {
                if clf.margin(x) > 0.0 {
                    *v += 1;
                }
            }
            kept += 1;
        }
    }
    Ok(votes.into_iter().map(|v| v as f64 / kept as f64).collect())
}
