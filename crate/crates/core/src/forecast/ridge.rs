use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::series::ForecastRecord;

use super::{record_dims, ForecasterConfig, ForecasterKind, TrainedForecaster, MODEL_FORMAT_VERSION};

/// Normal equations `(AᵀA + λD) B = AᵀY` for the augmented design
/// `A = [vec(X), 1]`; `D` penalizes weights but not the bias.
pub(crate) fn normal_equations(records: &[ForecastRecord], lambda: f64) -> (Vec<f64>, Vec<f64>, usize, usize) {
    let p = records[0].input.as_slice().len();
    let q = records[0].target.as_slice().len();
    let n = p + 1;
    let mut gram = vec![0.0; n * n];
    let mut rhs = vec![0.0; n * q];
    let mut a = vec![0.0; n];
    for r in records {
        a[..p].copy_from_slice(r.input.as_slice());
        a[p] = 1.0;
        for i in 0..n {
            let ai = a[i];
            let row = &mut gram[i * n..i * n + n];
            for j in 0..=i {
                row[j] += ai * a[j];
            }
            for (o, y) in r.target.as_slice().iter().enumerate() {
                rhs[i * q + o] += ai * y;
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            gram[j * n + i] = gram[i * n + j];
        }
    }
    for i in 0..p {
        gram[i * n + i] += lambda;
    }
    (gram, rhs, n, q)
}

/// Closed-form ridge regression from flattened inputs to flattened
/// targets. With `lambda = 0` a rank-deficient design is an error.
pub fn fit_ridge(records: &[ForecastRecord], lambda: f64) -> Result<TrainedForecaster> {
    if !(lambda >= 0.0) {
        return Err(Error::Invalid("ridge penalty must be >= 0".into()));
    }
    let (m, l, h) = record_dims(records)?;
    let (gram, rhs, n, q) = normal_equations(records, lambda);
    let chol = Cholesky::factor(&gram, n)?;
    let p = n - 1;
    let mut params = vec![0.0; q * p + q];
    let mut col = vec![0.0; n];
    for o in 0..q {
        for i in 0..n {
            col[i] = rhs[i * q + o];
        }
        chol.solve_in_place(&mut col);
        params[o * p..(o + 1) * p].copy_from_slice(&col[..p]);
        params[q * p + o] = col[p];
    }
    if params.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("non-finite ridge solution".into()));
    }
    Ok(TrainedForecaster {
        format_version: MODEL_FORMAT_VERSION,
        config: ForecasterConfig {
            kind: ForecasterKind::Ridge,
            ridge_lambda: lambda,
            ..Default::default()
        },
        variables: m,
        lookback: l,
        horizon: h,
        layers: vec![p, q],
        params,
        history: Vec::new(),
    })
}
