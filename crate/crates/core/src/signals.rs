//! Per-record attack signals computed from a true horizon `Y` and a
//! forecast `Ŷ`, both `M x H` (variables by steps).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::polyfit;
use crate::matrix::Matrix;

/// Lower clamp applied to SMAPE (and `1 - SMAPE`) before the logit.
pub const RSMAPE_EPS: f64 = 1e-9;

/// Attack signal identifiers. The declaration order is the canonical
/// layout of every signal vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalId {
    Mse,
    Mae,
    Smape,
    Rsmape,
    Nd,
    Trend,
    Seasonality,
    Embedding,
}

impl SignalId {
    pub const ALL: [SignalId; 8] = [
        SignalId::Mse,
        SignalId::Mae,
        SignalId::Smape,
        SignalId::Rsmape,
        SignalId::Nd,
        SignalId::Trend,
        SignalId::Seasonality,
        SignalId::Embedding,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SignalId::Mse => "mse",
            SignalId::Mae => "mae",
            SignalId::Smape => "smape",
            SignalId::Rsmape => "rsmape",
            SignalId::Nd => "nd",
            SignalId::Trend => "trend",
            SignalId::Seasonality => "seasonality",
            SignalId::Embedding => "embedding",
        }
    }

    /// Every signal here measures forecast error: larger means a worse fit.
    /// Attacks negate error-like signals so that larger means more
    /// member-like.
    pub fn is_error_like(self) -> bool {
        true
    }

    /// Bounded below by zero; rSMAPE is the only unbounded one.
    pub fn is_nonnegative(self) -> bool {
        self != SignalId::Rsmape
    }
}

impl fmt::Display for SignalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SignalId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SignalId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown signal `{s}`")))
    }
}

/// A set of signals in canonical order, without duplicates.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Vec<SignalId>", into = "Vec<SignalId>")]
pub struct SignalSet(Vec<SignalId>);

impl SignalSet {
    pub fn new(ids: impl IntoIterator<Item = SignalId>) -> Self {
        let mut v: Vec<SignalId> = ids.into_iter().collect();
        v.sort();
        v.dedup();
        SignalSet(v)
    }

    pub fn all() -> Self {
        SignalSet(SignalId::ALL.to_vec())
    }

    pub fn ids(&self) -> &[SignalId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn position(&self, id: SignalId) -> Option<usize> {
        self.0.iter().position(|&s| s == id)
    }

    pub fn contains_all(&self, other: &SignalSet) -> bool {
        other.0.iter().all(|s| self.0.contains(s))
    }
}

impl From<Vec<SignalId>> for SignalSet {
    fn from(v: Vec<SignalId>) -> Self {
        SignalSet::new(v)
    }
}

impl From<SignalSet> for Vec<SignalId> {
    fn from(s: SignalSet) -> Self {
        s.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SignalVector {
    pub ids: SignalSet,
    pub values: Vec<f64>,
}

impl SignalVector {
    pub fn get(&self, id: SignalId) -> Option<f64> {
        self.ids.position(id).map(|i| self.values[i])
    }
}

/// Maps an `M x H` sequence to a fixed-length representation.
pub trait Embedder: Send + Sync + fmt::Debug {
    fn embed(&self, x: &Matrix) -> Vec<f64>;
}

/// Per variable: mean, population standard deviation, and mean of first
/// differences (zero for a single step).
#[derive(Clone, Copy, Debug, Default)]
pub struct SummaryEmbedder;

impl Embedder for SummaryEmbedder {
    fn embed(&self, x: &Matrix) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * x.rows());
        for r in 0..x.rows() {
            let row = x.row(r);
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let diff = if row.len() > 1 {
                (row[row.len() - 1] - row[0]) / (n - 1.0)
            } else {
                0.0
            };
            out.extend([mean, var.sqrt(), diff]);
        }
        out
    }
}

/// Flattens the sequence; the embedding distance is then the plain
/// elementwise L2 distance.
#[derive(Clone, Copy, Debug, Default)]
pub struct FlattenEmbedder;

impl Embedder for FlattenEmbedder {
    fn embed(&self, x: &Matrix) -> Vec<f64> {
        x.as_slice().to_vec()
    }
}

#[derive(Clone, Debug)]
pub struct SignalOptions {
    pub trend_degree: usize,
    pub embedder: Arc<dyn Embedder>,
}

impl Default for SignalOptions {
    fn default() -> Self {
        SignalOptions {
            trend_degree: 1,
            embedder: Arc::new(SummaryEmbedder),
        }
    }
}

fn pairs<'a>(y: &'a Matrix, yhat: &'a Matrix) -> Result<impl Iterator<Item = (f64, f64)> + 'a> {
    y.check_same_shape(yhat)?;
    Ok(y.as_slice().iter().copied().zip(yhat.as_slice().iter().copied()))
}

pub fn mse(y: &Matrix, yhat: &Matrix) -> Result<f64> {
    let n = y.as_slice().len() as f64;
    Ok(pairs(y, yhat)?.map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n)
}

pub fn mae(y: &Matrix, yhat: &Matrix) -> Result<f64> {
    let n = y.as_slice().len() as f64;
    Ok(pairs(y, yhat)?.map(|(a, b)| (a - b).abs()).sum::<f64>() / n)
}

/// Symmetric MAPE in `[0, 1]`; a `0/0` term counts as zero.
pub fn smape(y: &Matrix, yhat: &Matrix) -> Result<f64> {
    let n = y.as_slice().len() as f64;
    let total: f64 = pairs(y, yhat)?
        .map(|(a, b)| {
            let den = a.abs() + b.abs();
            if den == 0.0 {
                0.0
            } else {
                (a - b).abs() / den
            }
        })
        .sum();
    Ok(total / n)
}

/// Logit of SMAPE clipped to `[RSMAPE_EPS, 1 - RSMAPE_EPS]`.
pub fn rsmape_from_smape(s: f64) -> f64 {
    let s = s.clamp(RSMAPE_EPS, 1.0 - RSMAPE_EPS);
    (s / (1.0 - s)).ln()
}

pub fn rsmape(y: &Matrix, yhat: &Matrix) -> Result<f64> {
    smape(y, yhat).map(rsmape_from_smape)
}

pub fn nd(y: &Matrix, yhat: &Matrix) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (a, b) in pairs(y, yhat)? {
        num += (a - b).abs();
        den += a.abs();
    }
    if den == 0.0 {
        return Err(Error::UndefinedMetric("ND with an all-zero target".into()));
    }
    Ok(num / den)
}

fn normalized_time(h: usize) -> Vec<f64> {
    if h == 1 {
        return vec![0.0];
    }
    (0..h).map(|k| k as f64 / (h - 1) as f64).collect()
}

/// Polynomial coefficients (constant first) per variable, fitted over time
/// normalized to `[0, 1]`.
pub fn trend_coefficients(x: &Matrix, degree: usize) -> Result<Vec<Vec<f64>>> {
    if x.cols() <= degree {
        return Err(Error::IllPosed(format!(
            "horizon {} too short for a degree-{degree} trend",
            x.cols()
        )));
    }
    let ts = normalized_time(x.cols());
    (0..x.rows()).map(|r| polyfit(&ts, x.row(r), degree)).collect()
}

/// Mean over variables of the L2 distance between trend coefficient vectors.
pub fn trend_signal(y: &Matrix, yhat: &Matrix, degree: usize) -> Result<f64> {
    y.check_same_shape(yhat)?;
    let cy = trend_coefficients(y, degree)?;
    let ch = trend_coefficients(yhat, degree)?;
    let total: f64 = cy.iter().zip(&ch).map(|(a, b)| l2_distance(a, b)).sum();
    Ok(total / y.rows() as f64)
}

fn dft_1d(input: &[Complex64], out: &mut [Complex64]) {
    let n = input.len();
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, x) in input.iter().enumerate() {
            // Reduce the index product first so the angle stays in [0, 2 pi).
            let angle = -2.0 * PI * ((j * k) % n) as f64 / n as f64;
            acc += x * Complex64::from_polar(1.0, angle);
        }
        *o = acc;
    }
}

/// 2D DFT of a real `M x H` matrix, computed as row transforms followed
/// by column transforms. Returned row-major, `M x H`.
pub fn dft2(x: &Matrix) -> Vec<Complex64> {
    let (m, h) = x.shape();
    let mut rows = vec![Complex64::new(0.0, 0.0); m * h];
    let mut buf: Vec<Complex64>;
    for r in 0..m {
        buf = x.row(r).iter().map(|&v| Complex64::new(v, 0.0)).collect();
        dft_1d(&buf, &mut rows[r * h..(r + 1) * h]);
    }
    let mut out = vec![Complex64::new(0.0, 0.0); m * h];
    let mut col_in = vec![Complex64::new(0.0, 0.0); m];
    let mut col_out = vec![Complex64::new(0.0, 0.0); m];
    for c in 0..h {
        for r in 0..m {
            col_in[r] = rows[r * h + c];
        }
        dft_1d(&col_in, &mut col_out);
        for r in 0..m {
            out[r * h + c] = col_out[r];
        }
    }
    out
}

/// L2 distance between the 2D-DFT magnitude spectra of `Y` and `Ŷ`.
pub fn seasonality_signal(y: &Matrix, yhat: &Matrix) -> Result<f64> {
    y.check_same_shape(yhat)?;
    let a = dft2(y);
    let b = dft2(yhat);
    Ok(a
        .iter()
        .zip(&b)
        .map(|(p, q)| (p.norm() - q.norm()).powi(2))
        .sum::<f64>()
        .sqrt())
}

pub fn embedding_signal(y: &Matrix, yhat: &Matrix, embedder: &dyn Embedder) -> Result<f64> {
    y.check_same_shape(yhat)?;
    let a = embedder.embed(y);
    let b = embedder.embed(yhat);
    if a.len() != b.len() {
        return Err(Error::shape(
            format!("embedding of length {}", a.len()),
            format!("length {}", b.len()),
        ));
    }
    Ok(l2_distance(&a, &b))
}

pub(crate) fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn signal(id: SignalId, y: &Matrix, yhat: &Matrix, opts: &SignalOptions) -> Result<f64> {
    match id {
        SignalId::Mse => mse(y, yhat),
        SignalId::Mae => mae(y, yhat),
        SignalId::Smape => smape(y, yhat),
        SignalId::Rsmape => rsmape(y, yhat),
        SignalId::Nd => nd(y, yhat),
        SignalId::Trend => trend_signal(y, yhat, opts.trend_degree),
        SignalId::Seasonality => seasonality_signal(y, yhat),
        SignalId::Embedding => embedding_signal(y, yhat, opts.embedder.as_ref()),
    }
}

pub fn signal_vector(
    y: &Matrix,
    yhat: &Matrix,
    set: &SignalSet,
    opts: &SignalOptions,
) -> Result<SignalVector> {
    let values = set
        .ids()
        .iter()
        .map(|&id| signal(id, y, yhat, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(SignalVector {
        ids: set.clone(),
        values,
    })
}
