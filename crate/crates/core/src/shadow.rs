//! Shadow-model ensembles: user-subset planning (online and offline),
//! training, audit-set predictions and the record x model x signal tensor.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{ForecasterConfig, TrainedForecaster};
use crate::matrix::Matrix;
use crate::seed;
use crate::series::{ForecastRecord, PopulationSplit, UserId};
use crate::signals::{self, SignalOptions, SignalSet, SignalVector};

/// Upper bound on subset redraws made by the online coverage guard.
const MAX_GUARD_REDRAWS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMode {
    /// Shadows are trained on halves of the audited (train and test) users.
    Online,
    /// Shadows are trained only on auxiliary users.
    Offline,
}

impl fmt::Display for AttackMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackMode::Online => "online",
            AttackMode::Offline => "offline",
        })
    }
}

/// Users one shadow model sees. Only `train_users` contribute gradient
/// updates; `val_users` drive early stopping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowSubset {
    pub train_users: Vec<UserId>,
    pub val_users: Vec<UserId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowPlanOptions {
    /// Fraction of the auxiliary pool drawn per offline shadow.
    pub offline_fraction: f64,
    /// Fraction of each drawn subset held out for early stopping; 0 when
    /// the forecaster trains without validation.
    pub validation_fraction: f64,
}

impl Default for ShadowPlanOptions {
    fn default() -> Self {
        ShadowPlanOptions {
            offline_fraction: 0.5,
            validation_fraction: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowPlan {
    pub mode: AttackMode,
    pub pool: Vec<UserId>,
    pub subsets: Vec<ShadowSubset>,
    pub seed: u64,
}

impl ShadowPlan {
    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    /// Per-shadow sets of training users.
    pub fn membership_sets(&self) -> Vec<HashSet<UserId>> {
        self.subsets
            .iter()
            .map(|s| s.train_users.iter().cloned().collect())
            .collect()
    }

    /// Number of shadows that train on `user`.
    pub fn in_count(&self, user: &UserId) -> usize {
        self.subsets
            .iter()
            .filter(|s| s.train_users.contains(user))
            .count()
    }
}

fn draw_subset(
    pool: &[UserId],
    size: usize,
    validation_fraction: f64,
    rng: &mut seed::Rng,
) -> ShadowSubset {
    let mut chosen: Vec<UserId> = pool.choose_multiple(rng, size).cloned().collect();
    chosen.shuffle(rng);
    let n_val = if validation_fraction > 0.0 {
        ((validation_fraction * size as f64).round() as usize).clamp(1, size - 1)
    } else {
        0
    };
    let val_users = chosen.split_off(size - n_val);
    ShadowSubset {
        train_users: chosen,
        val_users,
    }
}

/// Draws `k` user subsets. Online subsets take half (rounded up) of the
/// train and test users; offline subsets take `offline_fraction` of the
/// auxiliary users. In online mode every pool user ends up trained on by
/// at least one shadow and left out by at least one other.
pub fn plan_shadows(
    split: &PopulationSplit,
    mode: AttackMode,
    k: usize,
    opts: &ShadowPlanOptions,
    seed: u64,
) -> Result<ShadowPlan> {
    if k < 2 {
        return Err(Error::Invalid("at least two shadow models are required".into()));
    }
    if !(0.0..1.0).contains(&opts.validation_fraction) {
        return Err(Error::Invalid("validation_fraction must be in [0, 1)".into()));
    }
    let (pool, fraction): (Vec<UserId>, f64) = match mode {
        AttackMode::Online => (
            split.train.iter().chain(&split.test).cloned().collect(),
            0.5,
        ),
        AttackMode::Offline => (split.aux.clone(), opts.offline_fraction),
    };
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Invalid(format!("subset fraction {fraction} not in (0, 1]")));
    }
    let size = (fraction * pool.len() as f64).ceil() as usize;
    let min_size = if opts.validation_fraction > 0.0 { 2 } else { 1 };
    if size < min_size {
        return Err(Error::Insufficient(format!(
            "{mode} pool of {} users is too small for subsets of fraction {fraction}",
            pool.len()
        )));
    }
    let mut rng = seed::derived_rng(seed, "shadow-plan", mode as u64);
    let mut subsets: Vec<ShadowSubset> = (0..k)
        .map(|_| draw_subset(&pool, size, opts.validation_fraction, &mut rng))
        .collect();

    if mode == AttackMode::Online {
        let mut redraws = 0;
        loop {
            let bad = pool.iter().any(|u| {
                let c = subsets.iter().filter(|s| s.train_users.contains(u)).count();
                c == 0 || c == k
            });
            if !bad {
                break;
            }
            if redraws == MAX_GUARD_REDRAWS {
                return Err(Error::Insufficient(
                    "could not give every audited user both in- and out-shadows".into(),
                ));
            }
            let i = rng.random_range(0..k);
            subsets[i] = draw_subset(&pool, size, opts.validation_fraction, &mut rng);
            redraws += 1;
        }
    }
    Ok(ShadowPlan {
        mode,
        pool,
        subsets,
        seed,
    })
}

pub type RecordsByUser = BTreeMap<UserId, Vec<ForecastRecord>>;

fn gather(records: &RecordsByUser, users: &[UserId]) -> Vec<ForecastRecord> {
    users
        .iter()
        .filter_map(|u| records.get(u))
        .flat_map(|r| r.iter().cloned())
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShadowEnsemble {
    pub plan: ShadowPlan,
    pub models: Vec<TrainedForecaster>,
}

impl ShadowEnsemble {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

/// Seed of shadow `index` under the ensemble seed.
pub fn shadow_seed(seed: u64, index: usize) -> u64 {
    seed::derive_seed(seed, "shadow", index as u64)
}

/// Trains one forecaster per planned subset with the target's config
/// (seed replaced per shadow). Shadows train in parallel.
pub fn train_shadow_ensemble(
    plan: &ShadowPlan,
    records: &RecordsByUser,
    cfg: &ForecasterConfig,
) -> Result<ShadowEnsemble> {
    let models = (0..plan.len())
        .into_par_iter()
        .map(|i| train_one_shadow(plan, i, records, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(ShadowEnsemble {
        plan: plan.clone(),
        models,
    })
}

pub fn train_one_shadow(
    plan: &ShadowPlan,
    index: usize,
    records: &RecordsByUser,
    cfg: &ForecasterConfig,
) -> Result<TrainedForecaster> {
    let subset = &plan.subsets[index];
    let cfg = ForecasterConfig {
        seed: shadow_seed(plan.seed, index),
        ..cfg.clone()
    };
    let train = gather(records, &subset.train_users);
    let val = gather(records, &subset.val_users);
    TrainedForecaster::fit(&cfg, &train, &val).map_err(|e| Error::Shadow {
        index,
        source: Box::new(e),
    })
}

/// Record x shadow membership, by user containment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MembershipMatrix {
    n_records: usize,
    k: usize,
    data: Vec<bool>,
}

impl MembershipMatrix {
    pub fn new(n_records: usize, k: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != n_records * k {
            return Err(Error::shape(n_records * k, data.len()));
        }
        Ok(MembershipMatrix { n_records, k, data })
    }

    pub fn from_plan(plan: &ShadowPlan, records: &[ForecastRecord]) -> Self {
        let sets = plan.membership_sets();
        let k = sets.len();
        let mut data = Vec::with_capacity(records.len() * k);
        for r in records {
            data.extend(sets.iter().map(|s| s.contains(&r.user_id)));
        }
        MembershipMatrix {
            n_records: records.len(),
            k,
            data,
        }
    }

    pub fn n_records(&self) -> usize {
        self.n_records
    }

    pub fn shadows(&self) -> usize {
        self.k
    }

    pub fn get(&self, record: usize, shadow: usize) -> bool {
        self.data[record * self.k + shadow]
    }

    pub fn row(&self, record: usize) -> &[bool] {
        &self.data[record * self.k..(record + 1) * self.k]
    }
}

/// Forecasts of every shadow and the target (model index `K`) on a fixed
/// record list, flattened `M x H` per (record, model).
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionCache {
    n_records: usize,
    n_models: usize,
    shape: (usize, usize),
    data: Vec<f64>,
}

impl PredictionCache {
    pub fn n_records(&self) -> usize {
        self.n_records
    }

    pub fn n_models(&self) -> usize {
        self.n_models
    }

    pub fn get(&self, record: usize, model: usize) -> Matrix {
        let len = self.shape.0 * self.shape.1;
        let off = (record * self.n_models + model) * len;
        Matrix::new(self.shape.0, self.shape.1, self.data[off..off + len].to_vec())
            .expect("cache shape")
    }
}

pub fn predict_all(
    ensemble: &ShadowEnsemble,
    target: &TrainedForecaster,
    records: &[ForecastRecord],
) -> Result<PredictionCache> {
    let models: Vec<&TrainedForecaster> = ensemble.models.iter().chain([target]).collect();
    let shape = records
        .first()
        .map_or((0, 0), |r| r.target.shape());
    let per_model = models
        .par_iter()
        .map(|m| m.predict_records(records))
        .collect::<Result<Vec<_>>>()?;
    let n_models = models.len();
    let len = shape.0 * shape.1;
    let mut data = vec![0.0; records.len() * n_models * len];
    for (mi, preds) in per_model.iter().enumerate() {
        for (ri, p) in preds.iter().enumerate() {
            let off = (ri * n_models + mi) * len;
            data[off..off + len].copy_from_slice(p.as_slice());
        }
    }
    Ok(PredictionCache {
        n_records: records.len(),
        n_models,
        shape,
        data,
    })
}

/// Signal values per (record, model, signal); model index `K` is the
/// target.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalTensor {
    signals: SignalSet,
    n_records: usize,
    n_models: usize,
    data: Vec<f64>,
}

impl SignalTensor {
    pub fn new(signals: SignalSet, n_records: usize, n_models: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_records * n_models * signals.len() {
            return Err(Error::shape(n_records * n_models * signals.len(), data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("signal tensor".into()));
        }
        Ok(SignalTensor {
            signals,
            n_records,
            n_models,
            data,
        })
    }

    pub fn signals(&self) -> &SignalSet {
        &self.signals
    }

    pub fn n_records(&self) -> usize {
        self.n_records
    }

    /// Number of shadow models, `K`.
    pub fn shadows(&self) -> usize {
        self.n_models - 1
    }

    pub fn target_index(&self) -> usize {
        self.n_models - 1
    }

    /// Value by signal position in `signals()`.
    pub fn get(&self, record: usize, model: usize, signal: usize) -> f64 {
        self.data[(record * self.n_models + model) * self.signals.len() + signal]
    }

    pub fn target_vector(&self, record: usize) -> SignalVector {
        self.model_vector(record, self.target_index())
    }

    pub fn model_vector(&self, record: usize, model: usize) -> SignalVector {
        let s = self.signals.len();
        let off = (record * self.n_models + model) * s;
        SignalVector {
            ids: self.signals.clone(),
            values: self.data[off..off + s].to_vec(),
        }
    }

    /// Restricts the tensor to `set`, which must be a subset of `signals()`.
    pub fn select(&self, set: &SignalSet) -> Result<SignalTensor> {
        let pos = set
            .ids()
            .iter()
            .map(|&id| {
                self.signals
                    .position(id)
                    .ok_or_else(|| Error::Invalid(format!("signal {id} was not computed")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut data = Vec::with_capacity(self.n_records * self.n_models * pos.len());
        for r in 0..self.n_records {
            for m in 0..self.n_models {
                data.extend(pos.iter().map(|&p| self.get(r, m, p)));
            }
        }
        SignalTensor::new(set.clone(), self.n_records, self.n_models, data)
    }

    /// Columnar text export: `record_id,model_index,signal_id,value`.
    pub fn write_columnar<W: Write>(&self, record_ids: &[usize], mut out: W) -> Result<()> {
        writeln!(out, "record_id,model_index,signal_id,value")?;
        for r in 0..self.n_records {
            for m in 0..self.n_models {
                for (si, id) in self.signals.ids().iter().enumerate() {
                    writeln!(out, "{},{m},{id},{}", record_ids[r], self.get(r, m, si))?;
                }
            }
        }
        Ok(())
    }
}

pub fn signal_tensor_from_predictions(
    cache: &PredictionCache,
    records: &[ForecastRecord],
    set: &SignalSet,
    opts: &SignalOptions,
) -> Result<SignalTensor> {
    if records.len() != cache.n_records() {
        return Err(Error::shape(cache.n_records(), records.len()));
    }
    let n_models = cache.n_models();
    let rows = records
        .par_iter()
        .enumerate()
        .map(|(ri, rec)| {
            let mut row = Vec::with_capacity(n_models * set.len());
            for mi in 0..n_models {
                let pred = cache.get(ri, mi);
                for &id in set.ids() {
                    let v = signals::signal(id, &rec.target, &pred, opts).map_err(|e| {
                        Error::Signal {
                            record: ri,
                            model: mi,
                            signal: id.to_string(),
                            source: Box::new(e),
                        }
                    })?;
                    row.push(v);
                }
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    SignalTensor::new(set.clone(), records.len(), n_models, rows.concat())
}

pub fn compute_signal_tensor(
    ensemble: &ShadowEnsemble,
    target: &TrainedForecaster,
    records: &[ForecastRecord],
    set: &SignalSet,
    opts: &SignalOptions,
) -> Result<(SignalTensor, MembershipMatrix)> {
    let cache = predict_all(ensemble, target, records)?;
    let tensor = signal_tensor_from_predictions(&cache, records, set, opts)?;
    Ok((tensor, MembershipMatrix::from_plan(&ensemble.plan, records)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::{fit_ridge, ForecasterKind};
    use crate::series::{synthetic_user_id, window_series, UserSeries};
    use crate::signals::SignalId;

    fn split(n_train: usize, n_test: usize, n_aux: usize) -> PopulationSplit {
        let mut ids = (0..).map(synthetic_user_id);
        let mut take = |n| ids.by_ref().take(n).collect::<Vec<_>>();
        PopulationSplit {
            train: take(n_train),
            val: take(0),
            test: take(n_test),
            aux: take(n_aux),
        }
    }

    #[test]
    fn online_subsets_are_half_the_pool() {
        let s = split(20, 20, 10);
        let plan = plan_shadows(&s, AttackMode::Online, 8, &ShadowPlanOptions { validation_fraction: 0.0, ..Default::default() }, 1).unwrap();
        assert!(plan.subsets.iter().all(|x| x.train_users.len() == 20 && x.val_users.is_empty()));
        let pool: HashSet<_> = s.train.iter().chain(&s.test).collect();
        assert!(plan.subsets.iter().flat_map(|x| &x.train_users).all(|u| pool.contains(u)));
        let again = plan_shadows(&s, AttackMode::Online, 8, &ShadowPlanOptions { validation_fraction: 0.0, ..Default::default() }, 1).unwrap();
        assert_eq!(plan, again);
    }

    #[test]
    fn validation_holdout_within_subset() {
        let s = split(20, 20, 10);
        let plan = plan_shadows(&s, AttackMode::Online, 4, &ShadowPlanOptions::default(), 2).unwrap();
        for x in &plan.subsets {
            assert_eq!((x.train_users.len(), x.val_users.len()), (16, 4));
            assert!(x.val_users.iter().all(|u| !x.train_users.contains(u)));
        }
    }

    #[test]
    fn offline_subsets_come_from_aux() {
        let s = split(5, 5, 9);
        let plan = plan_shadows(&s, AttackMode::Offline, 3, &ShadowPlanOptions { validation_fraction: 0.0, ..Default::default() }, 0).unwrap();
        assert!(plan.subsets.iter().all(|x| x.train_users.len() == 5));
        assert!(plan.subsets.iter().flat_map(|x| &x.train_users).all(|u| s.aux.contains(u)));
        let empty = split(5, 5, 0);
        assert!(plan_shadows(&empty, AttackMode::Offline, 3, &ShadowPlanOptions::default(), 0).is_err());
        assert!(plan_shadows(&s, AttackMode::Offline, 1, &ShadowPlanOptions::default(), 0).is_err());
    }

    #[test]
    fn in_counts_concentrate_binomially() {
        let s = split(20, 20, 0);
        let opts = ShadowPlanOptions { validation_fraction: 0.0, ..Default::default() };
        let plan = plan_shadows(&s, AttackMode::Online, 64, &opts, 7).unwrap();
        // Hypergeometric per shadow, ~Binomial(64, 0.5) per user: sd 4.
        for u in &plan.pool {
            let c = plan.in_count(u) as f64;
            assert!((c - 32.0).abs() <= 16.0, "user {u} in {c} shadows");
            assert!((0.2..=0.8).contains(&(c / 64.0)));
        }
    }

    #[test]
    fn guard_gives_every_user_in_and_out_models() {
        let s = split(3, 3, 0);
        let opts = ShadowPlanOptions { validation_fraction: 0.0, ..Default::default() };
        for seed in 0..20 {
            let plan = plan_shadows(&s, AttackMode::Online, 2, &opts, seed).unwrap();
            for u in &plan.pool {
                assert_eq!(plan.in_count(u), 1);
            }
        }
    }

    fn two_regime_records(users: usize, slope: f64, offset: usize) -> RecordsByUser {
        let mut out = RecordsByUser::new();
        for u in 0..users {
            let id = synthetic_user_id(offset + u);
            let vals: Vec<f64> = (0..60)
                .map(|t| ((t as f64 * 0.37 + u as f64).sin()) * if t % 2 == 0 { slope } else { 1.0 })
                .collect();
            let s = UserSeries::new(id.clone(), Matrix::new(1, 60, vals).unwrap()).unwrap();
            out.insert(id, window_series(&s, 4, 2, 1).unwrap());
        }
        out
    }

    #[test]
    fn ensemble_is_deterministic_and_distinct() {
        let s = split(3, 3, 0);
        let mut records = two_regime_records(6, 1.0, 0);
        records.retain(|_, v| !v.is_empty());
        let opts = ShadowPlanOptions { validation_fraction: 0.0, ..Default::default() };
        let plan = plan_shadows(&s, AttackMode::Online, 2, &opts, 3).unwrap();
        let cfg = ForecasterConfig {
            kind: ForecasterKind::Ridge,
            ridge_lambda: 0.1,
            ..Default::default()
        };
        let a = train_shadow_ensemble(&plan, &records, &cfg).unwrap();
        let b = train_shadow_ensemble(&plan, &records, &cfg).unwrap();
        assert_eq!(a.len(), 2);
        assert_ne!(a.models[0].params, a.models[1].params);
        let bits = |m: &TrainedForecaster| m.params.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.models[0]), bits(&b.models[0]));
        assert_eq!(bits(&a.models[1]), bits(&b.models[1]));
    }

    #[test]
    fn shadows_fit_their_own_regime_better() {
        // Users 0..3 follow one generating map, users 3..6 another.
        let mut records = two_regime_records(3, 1.0, 0);
        records.extend(two_regime_records(3, -2.5, 3));
        let ids: Vec<UserId> = records.keys().cloned().collect();
        let plan = ShadowPlan {
            mode: AttackMode::Online,
            pool: ids.clone(),
            subsets: vec![
                ShadowSubset { train_users: ids[..3].to_vec(), val_users: vec![] },
                ShadowSubset { train_users: ids[3..].to_vec(), val_users: vec![] },
            ],
            seed: 0,
        };
        let cfg = ForecasterConfig {
            kind: ForecasterKind::Ridge,
            ridge_lambda: 1e-3,
            ..Default::default()
        };
        let ens = train_shadow_ensemble(&plan, &records, &cfg).unwrap();
        let err = |m: &TrainedForecaster, users: &[UserId]| {
            let recs = gather(&records, users);
            crate::forecast::evaluate(m, &recs).unwrap().mse
        };
        assert!(err(&ens.models[0], &ids[..3]) < err(&ens.models[0], &ids[3..]));
        assert!(err(&ens.models[1], &ids[3..]) < err(&ens.models[1], &ids[..3]));
    }

    #[test]
    fn tensor_layout_and_membership() {
        let records = two_regime_records(4, 1.0, 0);
        let ids: Vec<UserId> = records.keys().cloned().collect();
        let plan = ShadowPlan {
            mode: AttackMode::Online,
            pool: ids.clone(),
            subsets: vec![
                ShadowSubset { train_users: ids[..2].to_vec(), val_users: vec![] },
                ShadowSubset { train_users: vec![ids[1].clone()], val_users: vec![] },
            ],
            seed: 0,
        };
        let cfg = ForecasterConfig {
            kind: ForecasterKind::Ridge,
            ridge_lambda: 0.5,
            ..Default::default()
        };
        let ens = train_shadow_ensemble(&plan, &records, &cfg).unwrap();
        let target = fit_ridge(&gather(&records, &ids), 0.5).unwrap();
        let audit: Vec<ForecastRecord> = ids.iter().map(|u| records[u][0].clone()).collect();
        let set = SignalSet::all();
        let opts = SignalOptions::default();
        let (tensor, mem) = compute_signal_tensor(&ens, &target, &audit, &set, &opts).unwrap();
        assert_eq!(tensor.shadows(), 2);
        assert_eq!(mem.row(0), &[true, false]);
        assert_eq!(mem.row(1), &[true, true]);
        assert_eq!(mem.row(3), &[false, false]);
        let direct = signals::signal_vector(
            &audit[2].target,
            &ens.models[1].predict(&audit[2].input).unwrap(),
            &set,
            &opts,
        )
        .unwrap();
        assert_eq!(tensor.model_vector(2, 1), direct);
        let tv = signals::signal_vector(&audit[0].target, &target.predict(&audit[0].input).unwrap(), &set, &opts).unwrap();
        assert_eq!(tensor.target_vector(0), tv);

        // Recomputation from cached predictions is bit-identical.
        let cache = predict_all(&ens, &target, &audit).unwrap();
        let again = signal_tensor_from_predictions(&cache, &audit, &set, &opts).unwrap();
        assert_eq!(again, tensor);

        let mut buf = Vec::new();
        tensor.write_columnar(&[10, 11, 12, 13], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 4 * 3 * set.len());
        assert!(text.lines().nth(1).unwrap().starts_with("10,0,mse,"));
    }

    #[test]
    fn perfect_models_give_zero_error_signals() {
        // A zero series is forecast exactly by a zero-weight model.
        let id = synthetic_user_id(0);
        let s = UserSeries::new(id.clone(), Matrix::filled(1, 20, 1.0)).unwrap();
        let recs = window_series(&s, 3, 2, 1).unwrap();
        let mut model = fit_ridge(&recs, 1.0).unwrap();
        model.params.iter_mut().for_each(|p| *p = 0.0);
        let q = 2;
        let p = 3;
        for o in 0..q {
            model.params[q * p + o] = 1.0;
        }
        let plan = ShadowPlan {
            mode: AttackMode::Offline,
            pool: vec![id.clone()],
            subsets: vec![ShadowSubset { train_users: vec![], val_users: vec![] }; 2],
            seed: 0,
        };
        let ens = ShadowEnsemble { plan, models: vec![model.clone(), model.clone()] };
        let set = SignalSet::new([SignalId::Mse, SignalId::Mae, SignalId::Smape, SignalId::Nd]);
        let (t, mem) = compute_signal_tensor(&ens, &model, &recs, &set, &SignalOptions::default()).unwrap();
        for r in 0..t.n_records() {
            for m in 0..3 {
                for si in 0..set.len() {
                    assert_eq!(t.get(r, m, si), 0.0);
                }
            }
            assert_eq!(mem.row(r), &[false, false]);
        }
    }
}
