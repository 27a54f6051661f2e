use crate::error::{Error, Result};
use crate::nn::{self, Dataset, Loss, Mlp, TrainOptions};
use crate::seed;
use crate::series::ForecastRecord;

use super::{record_dims, ForecasterConfig, TrainedForecaster, MODEL_FORMAT_VERSION};

pub(crate) fn dataset(records: &[ForecastRecord]) -> Dataset<'_> {
    Dataset {
        inputs: records.iter().map(|r| r.input.as_slice()).collect(),
        targets: records.iter().map(|r| r.target.as_slice()).collect(),
        weights: None,
    }
}

/// Trains `vec(X) -> vec(Y)` with Adam on MAE. With early stopping the
/// best-validation snapshot is returned; otherwise the final parameters
/// after `max_epochs` and `val` is ignored.
pub fn fit_mlp(
    train: &[ForecastRecord],
    val: &[ForecastRecord],
    cfg: &ForecasterConfig,
) -> Result<TrainedForecaster> {
    cfg.validate()?;
    let (m, l, h) = record_dims(train)?;
    if cfg.early_stopping {
        if val.is_empty() {
            return Err(Error::Insufficient("empty validation set".into()));
        }
        let (vm, vl, vh) = record_dims(val)?;
        if (vm, vl, vh) != (m, l, h) {
            return Err(Error::shape(format!("{m}x{l} -> {m}x{h}"), format!("{vm}x{vl} -> {vm}x{vh}")));
        }
    }
    let mut layers = vec![m * l];
    layers.extend(&cfg.hidden);
    layers.push(m * h);
    let net = Mlp::new(layers.clone())?;
    let init = net.init_params(&mut seed::derived_rng(cfg.seed, "init", 0));
    let opts = TrainOptions {
        learning_rate: cfg.learning_rate,
        max_epochs: cfg.max_epochs,
        batch_size: cfg.batch_size,
        patience: cfg.early_stopping.then_some(cfg.patience),
    };
    let val_set = cfg.early_stopping.then(|| dataset(val));
    let outcome = nn::train(
        &net,
        init,
        &dataset(train),
        val_set.as_ref(),
        Loss::Mae,
        &opts,
        &mut seed::derived_rng(cfg.seed, "batches", 0),
    )?;
    Ok(TrainedForecaster {
        format_version: MODEL_FORMAT_VERSION,
        config: cfg.clone(),
        variables: m,
        lookback: l,
        horizon: h,
        layers,
        params: outcome.params,
        history: outcome.history,
    })
}
