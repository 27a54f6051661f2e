//! Desk-scale forecasters sharing one train/predict contract: a
//! closed-form ridge autoregressor and a ReLU MLP trained with Adam on MAE.

mod mlp;
mod ridge;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use mlp::fit_mlp;
pub use ridge::fit_ridge;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{EpochStats, Mlp, Workspace};
use crate::series::ForecastRecord;
use crate::signals;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForecasterKind {
    Ridge,
    Mlp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecasterConfig {
    pub kind: ForecasterKind,
    pub ridge_lambda: f64,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    /// When false the model trains for `max_epochs` without validation,
    /// which deliberately overfits.
    pub early_stopping: bool,
    pub seed: u64,
}

impl Default for ForecasterConfig {
    fn default() -> Self {
        ForecasterConfig {
            kind: ForecasterKind::Mlp,
            ridge_lambda: 1.0,
            hidden: vec![64],
            learning_rate: 1e-3,
            max_epochs: 50,
            patience: 3,
            batch_size: 1024,
            early_stopping: true,
            seed: 0,
        }
    }
}

impl ForecasterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ridge_lambda >= 0.0) {
            return Err(Error::Invalid("ridge_lambda must be >= 0".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Invalid("hidden layer sizes must be >= 1".into()));
        }
        if self.patience == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Invalid(
                "patience, batch_size and max_epochs must be >= 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Invalid("learning_rate must be > 0".into()));
        }
        Ok(())
    }
}

/// A fitted forecaster: network shape, flat parameters, config and
/// per-epoch history. Ridge models are single-layer linear networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedForecaster {
    pub format_version: u32,
    pub config: ForecasterConfig,
    pub variables: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub layers: Vec<usize>,
    pub params: Vec<f64>,
    pub history: Vec<EpochStats>,
}

/// Infers `(M, L, H)` from the first record and checks the rest agree.
pub(crate) fn record_dims(records: &[ForecastRecord]) -> Result<(usize, usize, usize)> {
    let first = records
        .first()
        .ok_or_else(|| Error::Insufficient("no training records".into()))?;
    let (m, l) = first.input.shape();
    let h = first.target.cols();
    for r in records {
        if r.input.shape() != (m, l) || r.target.shape() != (m, h) {
            return Err(Error::shape(
                format!("input {m}x{l}, target {m}x{h}"),
                format!(
                    "input {}x{}, target {}x{}",
                    r.input.rows(),
                    r.input.cols(),
                    r.target.rows(),
                    r.target.cols()
                ),
            ));
        }
    }
    Ok((m, l, h))
}

impl TrainedForecaster {
    pub fn network(&self) -> Mlp {
        Mlp::new(self.layers.clone()).expect("layers validated at construction")
    }

    /// Fits according to `config.kind`.
    pub fn fit(
        config: &ForecasterConfig,
        train: &[ForecastRecord],
        val: &[ForecastRecord],
    ) -> Result<Self> {
        config.validate()?;
        match config.kind {
            ForecasterKind::Ridge => {
                let mut model = fit_ridge(train, config.ridge_lambda)?;
                model.config = config.clone();
                Ok(model)
            }
            ForecasterKind::Mlp => fit_mlp(train, val, config),
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        let net = self.network();
        let mut ws = net.workspace();
        self.predict_with(&net, &mut ws, x)
    }

    pub fn predict_with(&self, net: &Mlp, ws: &mut Workspace, x: &Matrix) -> Result<Matrix> {
        if x.shape() != (self.variables, self.lookback) {
            return Err(Error::shape(
                format!("{}x{}", self.variables, self.lookback),
                format!("{}x{}", x.rows(), x.cols()),
            ));
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("forecast input".into()));
        }
        let out = net.forward(&self.params, x.as_slice(), ws);
        Matrix::new(self.variables, self.horizon, out.to_vec())
    }

    pub fn predict_records(&self, records: &[ForecastRecord]) -> Result<Vec<Matrix>> {
        let net = self.network();
        let mut ws = net.workspace();
        records
            .iter()
            .map(|r| self.predict_with(&net, &mut ws, &r.input))
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let model: TrainedForecaster = serde_json::from_slice(&std::fs::read(path)?)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Serde(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        let net = Mlp::new(model.layers.clone())?;
        if net.param_count() != model.params.len() {
            return Err(Error::Serde("parameter count does not match layers".into()));
        }
        Ok(model)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ForecastMetrics {
    pub mse: f64,
    pub mae: f64,
    pub smape: f64,
    pub nd: f64,
}

/// Per-record metrics averaged over `records`.
pub fn evaluate(model: &TrainedForecaster, records: &[ForecastRecord]) -> Result<ForecastMetrics> {
    if records.is_empty() {
        return Err(Error::Insufficient("no records to evaluate".into()));
    }
    let preds = model.predict_records(records)?;
    metrics_from_predictions(records, &preds)
}

pub fn metrics_from_predictions(
    records: &[ForecastRecord],
    preds: &[Matrix],
) -> Result<ForecastMetrics> {
    let mut acc = ForecastMetrics::default();
    for (r, p) in records.iter().zip(preds) {
        acc.mse += signals::mse(&r.target, p)?;
        acc.mae += signals::mae(&r.target, p)?;
        acc.smape += signals::smape(&r.target, p)?;
        acc.nd += signals::nd(&r.target, p)?;
    }
    let n = records.len() as f64;
    Ok(ForecastMetrics {
        mse: acc.mse / n,
        mae: acc.mae / n,
        smape: acc.smape / n,
        nd: acc.nd / n,
    })
}
