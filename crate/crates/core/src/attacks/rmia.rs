//! Population-relative likelihood-ratio scoring on one bounded-below
//! signal, mapped to a pseudo-probability by `g(s) = 1 / (1 + s)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shadow::{AttackMode, MembershipMatrix, SignalTensor};
use crate::signals::SignalId;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RmiaConfig {
    pub gamma: f64,
    /// Offline interpolation weight for the out-shadow marginal.
    pub alpha: f64,
    pub mode: AttackMode,
    pub population_size: usize,
}

impl Default for RmiaConfig {
    fn default() -> Self {
        RmiaConfig {
            gamma: 1.0,
            alpha: 1.0 / 3.0,
            mode: AttackMode::Online,
            population_size: 200,
        }
    }
}

impl RmiaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("rmia gamma must be positive, got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("rmia alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.population_size == 0 {
            return Err(Error::Config("rmia population size must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn rmia_g(s: f64) -> f64 {
    1.0 / (1.0 + s)
}

/// Rejects signals that can go negative, where `g` leaves `(0, 1]`.
pub fn check_signal(signal: SignalId) -> Result<()> {
    if signal.is_nonnegative() {
        Ok(())
    } else {
        Err(Error::Config(format!("rmia needs a signal bounded below by 0, got {signal}")))
    }
}

/// `p(x) / p_marginal(x)` for every tensor record. Online averages `g` over
/// all shadows. Offline averages over out-shadows and interpolates towards
/// 1; a record with no out-shadow falls back to all shadows.
pub fn rmia_ratios(
    tensor: &SignalTensor,
    membership: &MembershipMatrix,
    signal: SignalId,
    mode: AttackMode,
    alpha: f64,
) -> Result<Vec<f64>> {
    check_signal(signal)?;
    let si = tensor
        .signals()
        .position(signal)
        .ok_or_else(|| Error::Invalid(format!("signal {signal} was not computed")))?;
    let k = tensor.shadows();
    if membership.n_records() != tensor.n_records() || membership.shadows() != k {
        return Err(Error::shape(tensor.n_records(), membership.n_records()));
    }
    (0..tensor.n_records())
        .map(|r| {
            let p_target = rmia_g(tensor.get(r, tensor.target_index(), si));
            let marginal = match mode {
                AttackMode::Online => (0..k).map(|m| rmia_g(tensor.get(r, m, si))).sum::<f64>() / k as f64,
                AttackMode::Offline => {
                    let mut out: Vec<usize> = (0..k).filter(|&m| !membership.get(r, m)).collect();
                    if out.is_empty() {
                        out = (0..k).collect();
                    }
                    let p_out = out.iter().map(|&m| rmia_g(tensor.get(r, m, si))).sum::<f64>() / out.len() as f64;
                    0.5 * ((1.0 + alpha) * p_out + (1.0 - alpha))
                }
            };
            if !(marginal > 0.0) {
                return Err(Error::NonFinite(format!("rmia marginal of record {r}")));
            }
            Ok(p_target / marginal)
        })
        .collect()
}

/// Fraction of population ratios `z` with `x / z >= gamma`, per audit ratio.
pub fn rmia_from_ratios(audit: &[f64], population: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if population.is_empty() {
        return Err(Error::Insufficient("rmia population sample is empty".into()));
    }
    let n = population.len() as f64;
    Ok(audit
        .iter()
        .map(|&x| population.iter().filter(|&&z| x / z >= gamma).count() as f64 / n)
        .collect())
}

pub fn rmia_scores(
    audit: (&SignalTensor, &MembershipMatrix),
    population: (&SignalTensor, &MembershipMatrix),
    signal: SignalId,
    cfg: &RmiaConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if population.0.n_records() == 0 {
        return Err(Error::Insufficient("rmia population sample is empty".into()));
    }
    let x = rmia_ratios(audit.0, audit.1, signal, cfg.mode, cfg.alpha)?;
    let z = rmia_ratios(population.0, population.1, signal, cfg.mode, cfg.alpha)?;
    rmia_from_ratios(&x, &z, cfg.gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::SignalSet;

    #[test]
    fn hand_fraction() {
        // x = 2.0 against population {1.0, 2.0, 4.0}: 2/1 and 2/2 pass.
        let s = rmia_from_ratios(&[2.0, 0.5, 8.0], &[1.0, 2.0, 4.0], 1.0).unwrap();
        assert_eq!(s, vec![2.0 / 3.0, 0.0, 1.0]);
        let s = rmia_from_ratios(&[2.0], &[1.0, 2.0, 4.0], 2.0).unwrap();
        assert_eq!(s, vec![1.0 / 3.0]);
        assert!(rmia_from_ratios(&[1.0], &[], 1.0).is_err());
    }

    #[test]
    fn identical_records_all_tie() {
        let set = SignalSet::new([SignalId::Mae]);
        let t = SignalTensor::new(set, 4, 3, vec![0.4; 12]).unwrap();
        let m = MembershipMatrix::new(4, 2, vec![true, false, false, true, true, false, false, true]).unwrap();
        for mode in [AttackMode::Online, AttackMode::Offline] {
            let cfg = RmiaConfig {
                mode,
                ..RmiaConfig::default()
            };
            let s = rmia_scores((&t, &m), (&t, &m), SignalId::Mae, &cfg).unwrap();
            assert_eq!(s, vec![1.0; 4]);
        }
    }

    #[test]
    fn offline_marginal_interpolates() {
        let set = SignalSet::new([SignalId::Mse]);
        // Shadows give g = 1/2 and 1/4; only the first is out.
        let t = SignalTensor::new(set, 1, 3, vec![1.0, 3.0, 0.0]).unwrap();
        let m = MembershipMatrix::new(1, 2, vec![false, true]).unwrap();
        let alpha = 1.0 / 3.0;
        let r = rmia_ratios(&t, &m, SignalId::Mse, AttackMode::Offline, alpha).unwrap();
        let marginal = 0.5 * ((1.0 + alpha) * 0.5 + (1.0 - alpha));
        assert!((r[0] - 1.0 / marginal).abs() < 1e-15);
        let r = rmia_ratios(&t, &m, SignalId::Mse, AttackMode::Online, alpha).unwrap();
        assert!((r[0] - 1.0 / 0.375).abs() < 1e-15);
    }

    #[test]
    fn rsmape_rejected() {
        assert!(check_signal(SignalId::Rsmape).is_err());
        assert!(check_signal(SignalId::Seasonality).is_ok());
        let bad = RmiaConfig {
            alpha: 1.5,
            ..RmiaConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
