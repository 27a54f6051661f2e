//! The learned DTS attack: a membership classifier over (true horizon,
//! shadow forecast) pairs, trained on shadow outputs with known labels.

use std::collections::HashSet;
use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{self, Dataset, EpochStats, Loss, Mlp, TrainOptions};
use crate::seed;
use crate::series::{ForecastRecord, UserId};
use crate::shadow::ShadowEnsemble;

#[derive(Clone, Debug, PartialEq)]
pub struct DtsRow {
    /// Index into the source record list.
    pub record: usize,
    pub shadow: usize,
    pub y: Matrix,
    pub yhat: Matrix,
    pub label: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DtsDataset {
    pub rows: Vec<DtsRow>,
}

impl DtsDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.rows.iter().filter(|r| r.label).count()
    }

    /// `record_id,shadow_index,label,y..,yhat..` with `M x H` values each.
    pub fn write_columnar<W: Write>(&self, mut out: W) -> Result<()> {
        let Some(first) = self.rows.first() else {
            writeln!(out, "record_id,shadow_index,label")?;
            return Ok(());
        };
        let n = first.y.as_slice().len();
        let mut header = String::from("record_id,shadow_index,label");
        for prefix in ["y", "yhat"] {
            for k in 0..n {
                header.push_str(&format!(",{prefix}{k}"));
            }
        }
        writeln!(out, "{header}")?;
        for r in &self.rows {
            write!(out, "{},{},{}", r.record, r.shadow, u8::from(r.label))?;
            for v in r.y.as_slice().iter().chain(r.yhat.as_slice()) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Per shadow, an independent sample of `ceil(f * n)` source records run
/// through that shadow and labeled by whether the record's user trained it.
pub fn build_dts_dataset(
    ensemble: &ShadowEnsemble,
    source: &[ForecastRecord],
    f: f64,
    seed: u64,
) -> Result<DtsDataset> {
    if !(f > 0.0 && f <= 1.0) {
        return Err(Error::Invalid(format!("sample fraction must lie in (0, 1], got {f}")));
    }
    if source.is_empty() || ensemble.is_empty() {
        return Err(Error::Insufficient("no source records or shadows for DTS".into()));
    }
    let take = ((f * source.len() as f64).ceil() as usize).min(source.len());
    let per_shadow = (0..ensemble.len())
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::derived_rng(seed, "dts-sample", i as u64);
            let mut idx = rand::seq::index::sample(&mut rng, source.len(), take).into_vec();
            idx.sort_unstable();
            let members: HashSet<&UserId> = ensemble.plan.subsets[i].train_users.iter().collect();
            let model = &ensemble.models[i];
            let net = model.network();
            let mut ws = net.workspace();
            idx.into_iter()
                .map(|r| {
                    let rec = &source[r];
                    Ok(DtsRow {
                        record: r,
                        shadow: i,
                        y: rec.target.clone(),
                        yhat: model.predict_with(&net, &mut ws, &rec.input)?,
                        label: members.contains(&rec.user_id),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DtsDataset {
        rows: per_shadow.concat(),
    })
}

/// `[vec(Y), vec(Yhat), vec(Y - Yhat)]`, length `3 M H`.
pub fn featurize(y: &Matrix, yhat: &Matrix) -> Result<Vec<f64>> {
    y.check_same_shape(yhat)?;
    let (a, b) = (y.as_slice(), yhat.as_slice());
    let mut out = Vec::with_capacity(3 * a.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out.extend(a.iter().zip(b).map(|(u, v)| u - v));
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DtsArch {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub validation_fraction: f64,
}

impl Default for DtsArch {
    fn default() -> Self {
        DtsArch {
            hidden: vec![64, 32],
            learning_rate: 1e-3,
            max_epochs: 64,
            patience: 3,
            batch_size: 256,
            validation_fraction: 0.2,
        }
    }
}

impl DtsArch {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::Config("dts hidden sizes must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || self.max_epochs == 0 || self.patience == 0 || self.batch_size == 0 {
            return Err(Error::Config("dts learning rate, epochs, patience and batch size must be positive".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "dts validation fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtsClassifier {
    pub arch: DtsArch,
    pub layers: Vec<usize>,
    pub params: Vec<f64>,
    pub history: Vec<EpochStats>,
}

impl DtsClassifier {
    pub fn network(&self) -> Mlp {
        Mlp::new(self.layers.clone()).expect("layers validated at construction")
    }

    /// Same architecture with every parameter zero.
    pub fn zeroed(arch: &DtsArch, input_dim: usize) -> Result<Self> {
        let mut layers = vec![input_dim];
        layers.extend(&arch.hidden);
        layers.push(1);
        let net = Mlp::new(layers.clone())?;
        Ok(DtsClassifier {
            arch: arch.clone(),
            layers,
            params: vec![0.0; net.param_count()],
            history: Vec::new(),
        })
    }
}

fn class_weights(labels: &[bool]) -> Vec<f64> {
    let n = labels.len() as f64;
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let (wp, wn) = (n / (2.0 * pos), n / (2.0 * (n - pos)));
    labels.iter().map(|&l| if l { wp } else { wn }).collect()
}

/// BCE training with class-balanced weights and a label-stratified
/// validation split driving early stopping.
pub fn train_dts(data: &DtsDataset, arch: &DtsArch, seed: u64) -> Result<DtsClassifier> {
    arch.validate()?;
    let pos: Vec<usize> = (0..data.len()).filter(|&i| data.rows[i].label).collect();
    let neg: Vec<usize> = (0..data.len()).filter(|&i| !data.rows[i].label).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::SingleClass(format!(
            "DTS dataset has {} members and {} non-members",
            pos.len(),
            neg.len()
        )));
    }
    if pos.len() < 2 || neg.len() < 2 {
        return Err(Error::Insufficient("DTS needs two rows per class for validation".into()));
    }
    let features = data
        .rows
        .iter()
        .map(|r| featurize(&r.y, &r.yhat))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = seed::derived_rng(seed, "dts-split", 0);
    let (mut train_idx, mut val_idx) = (Vec::new(), Vec::new());
    for mut class in [pos, neg] {
        class.shuffle(&mut rng);
        let n_val = ((class.len() as f64 * arch.validation_fraction).round() as usize).clamp(1, class.len() - 1);
        val_idx.extend_from_slice(&class[..n_val]);
        train_idx.extend_from_slice(&class[n_val..]);
    }
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    let targets: Vec<[f64; 1]> = data.rows.iter().map(|r| [f64::from(u8::from(r.label))]).collect();
    let subset = |idx: &[usize]| {
        let labels: Vec<bool> = idx.iter().map(|&i| data.rows[i].label).collect();
        Dataset {
            inputs: idx.iter().map(|&i| features[i].as_slice()).collect(),
            targets: idx.iter().map(|&i| targets[i].as_slice()).collect(),
            weights: Some(class_weights(&labels)),
        }
    };
    let (train_set, val_set) = (subset(&train_idx), subset(&val_idx));
    let mut clf = DtsClassifier::zeroed(arch, features[0].len())?;
    let net = clf.network();
    let init = net.init_params(&mut seed::derived_rng(seed, "dts-init", 0));
    let opts = TrainOptions {
        learning_rate: arch.learning_rate,
        max_epochs: arch.max_epochs,
        batch_size: arch.batch_size,
        patience: Some(arch.patience),
    };
    let outcome = nn::train(
        &net,
        init,
        &train_set,
        Some(&val_set),
        Loss::Bce,
        &opts,
        &mut seed::derived_rng(seed, "dts-batches", 0),
    )?;
    clf.params = outcome.params;
    clf.history = outcome.history;
    Ok(clf)
}

/// Member probability of one (Y, Yhat) pair.
pub fn dts_score(clf: &DtsClassifier, y: &Matrix, yhat: &Matrix) -> Result<f64> {
    let x = featurize(y, yhat)?;
    let net = clf.network();
    if x.len() != net.input_dim() {
        return Err(Error::shape(net.input_dim(), x.len()));
    }
    let mut ws = net.workspace();
    Ok(nn::sigmoid(net.forward(&clf.params, &x, &mut ws)[0]))
}

/// Scores many pairs with one workspace.
pub fn dts_scores(clf: &DtsClassifier, ys: &[&Matrix], yhats: &[&Matrix]) -> Result<Vec<f64>> {
    if ys.len() != yhats.len() {
        return Err(Error::shape(ys.len(), yhats.len()));
    }
    let net = clf.network();
    let mut ws = net.workspace();
    ys.iter()
        .zip(yhats)
        .map(|(y, yh)| {
            let x = featurize(y, yh)?;
            if x.len() != net.input_dim() {
                return Err(Error::shape(net.input_dim(), x.len()));
            }
            Ok(nn::sigmoid(net.forward(&clf.params, &x, &mut ws)[0]))
        })
        .collect()
}
