//! Series data model: user series, forecasting windows, robust scaling,
//! user-level splits, a synthetic population generator and CSV ingestion.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

pub type UserId = Arc<str>;

/// One entity's multivariate series, `M` variables by `T` time steps.
#[derive(Clone, Debug, PartialEq)]
pub struct UserSeries {
    pub user_id: UserId,
    pub values: Matrix,
}

impl UserSeries {
    pub fn new(user_id: impl Into<UserId>, values: Matrix) -> Result<Self> {
        let (m, t) = values.shape();
        if m == 0 || t == 0 {
            return Err(Error::Invalid(format!("empty series ({m}x{t})")));
        }
        if !values.is_finite() {
            return Err(Error::NonFinite("series values".into()));
        }
        Ok(UserSeries {
            user_id: user_id.into(),
            values,
        })
    }

    pub fn variables(&self) -> usize {
        self.values.rows()
    }

    pub fn len(&self) -> usize {
        self.values.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.cols() == 0
    }
}

/// One (input, target) forecasting window. `origin` is the 0-based index of
/// the last input column.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastRecord {
    pub user_id: UserId,
    pub origin: usize,
    pub input: Matrix,
    pub target: Matrix,
}

/// Number of windows `window_series` emits.
pub fn window_count(len: usize, lookback: usize, horizon: usize, stride: usize) -> usize {
    if len < lookback + horizon {
        0
    } else {
        (len - lookback - horizon) / stride + 1
    }
}

/// Sliding-window records in increasing origin order.
pub fn window_series(
    series: &UserSeries,
    lookback: usize,
    horizon: usize,
    stride: usize,
) -> Result<Vec<ForecastRecord>> {
    if lookback == 0 || horizon == 0 || stride == 0 {
        return Err(Error::Invalid(
            "lookback, horizon and stride must be at least 1".into(),
        ));
    }
    if !series.values.is_finite() {
        return Err(Error::NonFinite(format!("series {}", series.user_id)));
    }
    let n = window_count(series.len(), lookback, horizon, stride);
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let origin = lookback - 1 + j * stride;
        let start = origin + 1 - lookback;
        out.push(ForecastRecord {
            user_id: series.user_id.clone(),
            origin,
            input: series.values.column_range(start, origin + 1),
            target: series.values.column_range(origin + 1, origin + 1 + horizon),
        });
    }
    Ok(out)
}

/// Per-variable median and interquartile range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Quantile by linear interpolation between order statistics: position
/// `p * (n - 1)` in the sorted sample.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Fits median/IQR over all values pooled across `series_set`.
/// A zero IQR is an error.
pub fn fit_scaler(series_set: &[UserSeries]) -> Result<ScalerParams> {
    fit_scaler_with_fallback(series_set, false)
}

/// Like [`fit_scaler`], but with `unit_fallback` a zero IQR yields scale 1.
pub fn fit_scaler_with_fallback(
    series_set: &[UserSeries],
    unit_fallback: bool,
) -> Result<ScalerParams> {
    let first = series_set
        .first()
        .ok_or_else(|| Error::Invalid("cannot fit a scaler on no series".into()))?;
    let m = first.variables();
    let mut center = Vec::with_capacity(m);
    let mut scale = Vec::with_capacity(m);
    for var in 0..m {
        let mut pooled = Vec::new();
        for s in series_set {
            if s.variables() != m {
                return Err(Error::shape(
                    format!("{m} variables"),
                    format!("{} variables in {}", s.variables(), s.user_id),
                ));
            }
            pooled.extend_from_slice(s.values.row(var));
        }
        pooled.sort_by(f64::total_cmp);
        let iqr = quantile_sorted(&pooled, 0.75) - quantile_sorted(&pooled, 0.25);
        center.push(quantile_sorted(&pooled, 0.5));
        if iqr > 0.0 {
            scale.push(iqr);
        } else if unit_fallback {
            scale.push(1.0);
        } else {
            return Err(Error::DegenerateScale(var));
        }
    }
    Ok(ScalerParams { center, scale })
}

fn map_rows(
    series: &UserSeries,
    p: &ScalerParams,
    f: impl Fn(f64, f64, f64) -> f64,
) -> Result<UserSeries> {
    let m = series.variables();
    if p.center.len() != m || p.scale.len() != m {
        return Err(Error::shape(
            format!("{m} variables"),
            format!("scaler for {}", p.center.len()),
        ));
    }
    let mut values = series.values.clone();
    for var in 0..m {
        for t in 0..series.len() {
            let x = values.get(var, t);
            values.set(var, t, f(x, p.center[var], p.scale[var]));
        }
    }
    Ok(UserSeries {
        user_id: series.user_id.clone(),
        values,
    })
}

pub fn apply_scaler(series: &UserSeries, p: &ScalerParams) -> Result<UserSeries> {
    map_rows(series, p, |x, c, s| (x - c) / s)
}

pub fn invert_scaler(series: &UserSeries, p: &ScalerParams) -> Result<UserSeries> {
    map_rows(series, p, |x, c, s| x * s + c)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub aux: usize,
}

impl SplitSizes {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test + self.aux
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PopulationSplit {
    pub train: Vec<UserId>,
    pub val: Vec<UserId>,
    pub test: Vec<UserId>,
    pub aux: Vec<UserId>,
}

/// Uniformly random, seed-deterministic disjoint assignment of users.
pub fn split_users(user_ids: &[UserId], sizes: SplitSizes, seed: u64) -> Result<PopulationSplit> {
    if sizes.total() > user_ids.len() {
        return Err(Error::SplitOverflow {
            requested: sizes.total(),
            available: user_ids.len(),
        });
    }
    let mut ids = user_ids.to_vec();
    ids.shuffle(&mut seed::rng_from(seed));
    let mut it = ids.into_iter();
    let mut take = |n: usize| it.by_ref().take(n).collect::<Vec<_>>();
    Ok(PopulationSplit {
        train: take(sizes.train),
        val: take(sizes.val),
        test: take(sizes.test),
        aux: take(sizes.aux),
    })
}

/// Closed interval `[lo, hi]` a per-user parameter is drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    pub const fn fixed(v: f64) -> Self {
        Range { lo: v, hi: v }
    }

    fn is_valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi
    }

    fn sample(&self, rng: &mut seed::Rng) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticPopulationConfig {
    pub users: usize,
    pub length: usize,
    pub variables: usize,
    pub amplitude: Range,
    /// Cycles per time step.
    pub frequency: Range,
    pub phase: Range,
    /// Trend increment per time step.
    pub trend_slope: Range,
    pub noise_std: Range,
    pub seed: u64,
}

impl Default for SyntheticPopulationConfig {
    fn default() -> Self {
        SyntheticPopulationConfig {
            users: 100,
            length: 1200,
            variables: 1,
            amplitude: Range::new(0.5, 2.0),
            frequency: Range::new(0.01, 0.1),
            phase: Range::new(0.0, 2.0 * PI),
            trend_slope: Range::new(-0.001, 0.001),
            noise_std: Range::new(0.1, 0.3),
            seed: 0,
        }
    }
}

impl SyntheticPopulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.length == 0 || self.variables == 0 {
            return Err(Error::Invalid(
                "users, length and variables must be at least 1".into(),
            ));
        }
        let ranges = [
            ("amplitude", self.amplitude),
            ("frequency", self.frequency),
            ("phase", self.phase),
            ("trend_slope", self.trend_slope),
            ("noise_std", self.noise_std),
        ];
        for (name, r) in ranges {
            if !r.is_valid() {
                return Err(Error::Invalid(format!(
                    "range {name} = [{}, {}] is empty",
                    r.lo, r.hi
                )));
            }
        }
        if self.noise_std.lo < 0.0 {
            return Err(Error::Invalid("noise_std must be non-negative".into()));
        }
        Ok(())
    }
}

pub fn synthetic_user_id(index: usize) -> UserId {
    format!("u{index:05}").into()
}

/// Each user (and variable) draws amplitude, frequency, phase, slope and
/// noise level once; the series is `A sin(2 pi f t + phase) + slope t + noise`.
pub fn generate_population(cfg: &SyntheticPopulationConfig) -> Result<Vec<UserSeries>> {
    cfg.validate()?;
    (0..cfg.users)
        .map(|u| {
            let mut rng = seed::derived_rng(cfg.seed, "population-user", u as u64);
            let mut data = Vec::with_capacity(cfg.variables * cfg.length);
            for _ in 0..cfg.variables {
                let amp = cfg.amplitude.sample(&mut rng);
                let freq = cfg.frequency.sample(&mut rng);
                let phase = cfg.phase.sample(&mut rng);
                let slope = cfg.trend_slope.sample(&mut rng);
                let sigma = cfg.noise_std.sample(&mut rng);
                let noise = Normal::new(0.0, sigma)
                    .map_err(|e| Error::Invalid(format!("noise distribution: {e}")))?;
                for t in 0..cfg.length {
                    let t = t as f64;
                    let eps = if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    data.push(amp * (2.0 * PI * freq * t + phase).sin() + slope * t + eps);
                }
            }
            UserSeries::new(
                synthetic_user_id(u),
                Matrix::new(cfg.variables, cfg.length, data)?,
            )
        })
        .collect()
}

/// Reads the long format `user_id,t,v1,...,vM`. Each user's `t` must be
/// consecutive increasing integers; users keep first-appearance order.
pub fn ingest_csv(path: impl AsRef<Path>) -> Result<Vec<UserSeries>> {
    let file = std::fs::File::open(path)?;
    read_csv(file)
}

pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Vec<UserSeries>> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 3 || &header[0] != "user_id" || &header[1] != "t" {
        return Err(Error::Csv {
            line: 1,
            msg: "header must be `user_id,t,v1,...,vM`".into(),
        });
    }
    let m = header.len() - 2;

    struct Acc {
        id: UserId,
        last_t: i64,
        columns: Vec<Vec<f64>>,
    }
    let mut order: Vec<Acc> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();

    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let err = |msg: String| Error::Csv { line, msg };
        if row.len() != header.len() {
            return Err(err(format!(
                "inconsistent variable count: expected {m}, found {}",
                row.len().saturating_sub(2)
            )));
        }
        let t: i64 = row[1]
            .parse()
            .map_err(|_| err(format!("time index `{}` is not an integer", &row[1])))?;
        let values = (0..m)
            .map(|k| {
                let v: f64 = row[k + 2]
                    .parse()
                    .map_err(|_| err(format!("value `{}` is not a number", &row[k + 2])))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(err(format!("non-finite value `{}`", &row[k + 2])))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let slot = match index.get(&row[0]) {
            Some(&i) => i,
            None => {
                index.insert(row[0].to_string(), order.len());
                order.push(Acc {
                    id: row[0].into(),
                    last_t: t - 1,
                    columns: vec![Vec::new(); m],
                });
                order.len() - 1
            }
        };
        let acc = &mut order[slot];
        if t == acc.last_t && !acc.columns[0].is_empty() {
            return Err(err(format!("duplicate row for ({}, {t})", acc.id)));
        }
        if t <= acc.last_t {
            return Err(err(format!("time index for {} is not increasing", acc.id)));
        }
        if t != acc.last_t + 1 {
            return Err(err(format!("gap in time index for {} before t={t}", acc.id)));
        }
        acc.last_t = t;
        for (col, v) in acc.columns.iter_mut().zip(values) {
            col.push(v);
        }
    }
    order
        .into_iter()
        .map(|acc| {
            let t = acc.columns[0].len();
            UserSeries::new(acc.id, Matrix::new(m, t, acc.columns.concat())?)
        })
        .collect()
}

/// Writes the long CSV format, time indices starting at 0. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_csv<W: Write>(population: &[UserSeries], mut out: W) -> Result<()> {
    let m = population.first().map_or(1, UserSeries::variables);
    let mut header = String::from("user_id,t");
    for k in 1..=m {
        header.push_str(&format!(",v{k}"));
    }
    writeln!(out, "{header}")?;
    for s in population {
        if s.variables() != m {
            return Err(Error::shape(format!("{m} variables"), s.variables()));
        }
        for t in 0..s.len() {
            write!(out, "{},{t}", s.user_id)?;
            for var in 0..m {
                write!(out, ",{}", s.values.get(var, t))?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series_1d(values: &[f64]) -> UserSeries {
        UserSeries::new("a", Matrix::new(1, values.len(), values.to_vec()).unwrap()).unwrap()
    }

    fn ids(n: usize) -> Vec<UserId> {
        (0..n).map(synthetic_user_id).collect()
    }

    #[test]
    fn window_count_matches_full_length_protocol() {
        let s = UserSeries::new("a", Matrix::zeros(1, 15000)).unwrap();
        assert_eq!(window_series(&s, 100, 20, 1).unwrap().len(), 14881);
    }

    #[test]
    fn boundary_length_gives_one_window() {
        let s = UserSeries::new("a", Matrix::zeros(2, 120)).unwrap();
        let w = window_series(&s, 100, 20, 1).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].origin, 99);
        assert_eq!(w[0].input.shape(), (2, 100));
        assert_eq!(w[0].target.shape(), (2, 20));
    }

    #[test]
    fn strided_windows_have_expected_origins() {
        let s = series_1d(&(0..10).map(f64::from).collect::<Vec<_>>());
        let w = window_series(&s, 4, 2, 2).unwrap();
        let origins: Vec<_> = w.iter().map(|r| r.origin).collect();
        assert_eq!(origins, vec![3, 5, 7]);
        assert_eq!(w[1].input.as_slice(), &[2.0, 3.0, 4.0, 5.0]);
        assert_eq!(w[1].target.as_slice(), &[6.0, 7.0]);
    }

    #[test]
    fn short_series_is_empty_not_error() {
        let s = series_1d(&[1.0; 5]);
        assert!(window_series(&s, 4, 2, 1).unwrap().is_empty());
    }

    #[test]
    fn non_finite_series_rejected() {
        let m = Matrix::new(1, 3, vec![0.0, f64::NAN, 1.0]).unwrap();
        let s = UserSeries {
            user_id: "x".into(),
            values: m,
        };
        assert!(matches!(window_series(&s, 1, 1, 1), Err(Error::NonFinite(_))));
    }

    #[test]
    fn zero_spread_is_degenerate() {
        let r = fit_scaler(&[series_1d(&[0.0, 0.0, 0.0])]);
        assert!(matches!(r, Err(Error::DegenerateScale(0))));
        let p = fit_scaler_with_fallback(&[series_1d(&[0.0, 0.0, 0.0])], true).unwrap();
        assert_eq!(p.scale, vec![1.0]);
    }

    #[test]
    fn symmetric_values_have_zero_median() {
        let p = fit_scaler(&[series_1d(&[-2.0, -1.0, 1.0, 2.0])]).unwrap();
        assert_eq!(p.center, vec![0.0]);
    }

    /// Independent quantile oracle: the interpolated order statistic,
    /// written as a weighted average of the two bracketing ranks.
    fn oracle_quantile(values: &[f64], p: f64) -> f64 {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let pos = p * (v.len() as f64 - 1.0);
        let below = v[pos as usize];
        let above = v.get(pos as usize + 1).copied().unwrap_or(below);
        let w = pos.fract();
        (1.0 - w) * below + w * above
    }

    #[test]
    fn iqr_of_one_to_five() {
        let vals = [5.0, 1.0, 4.0, 2.0, 3.0];
        let p = fit_scaler(&[series_1d(&vals)]).unwrap();
        assert_eq!(p.center, vec![3.0]);
        let iqr = oracle_quantile(&vals, 0.75) - oracle_quantile(&vals, 0.25);
        assert_eq!(iqr, 2.0);
        assert_eq!(p.scale, vec![iqr]);
        let odd = [0.3, 7.0, -1.0, 2.5, 9.0, 4.0];
        let p = fit_scaler(&[series_1d(&odd)]).unwrap();
        let iqr = oracle_quantile(&odd, 0.75) - oracle_quantile(&odd, 0.25);
        assert!((p.scale[0] - iqr).abs() < 1e-12);
    }

    #[test]
    fn scaler_arithmetic_and_round_trip() {
        let p = ScalerParams {
            center: vec![3.0],
            scale: vec![2.0],
        };
        let s = series_1d(&[3.0, 7.0, -1.25]);
        let scaled = apply_scaler(&s, &p).unwrap();
        assert_eq!(scaled.values.as_slice(), &[0.0, 2.0, -2.125]);
        let back = invert_scaler(&scaled, &p).unwrap();
        for (a, b) in back.values.as_slice().iter().zip(s.values.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        let bad = ScalerParams {
            center: vec![0.0, 0.0],
            scale: vec![1.0, 1.0],
        };
        assert!(matches!(apply_scaler(&s, &bad), Err(Error::Shape { .. })));
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let users = ids(100);
        let sizes = SplitSizes {
            train: 20,
            val: 20,
            test: 20,
            aux: 40,
        };
        let s = split_users(&users, sizes, 3).unwrap();
        assert_eq!(
            (s.train.len(), s.val.len(), s.test.len(), s.aux.len()),
            (20, 20, 20, 40)
        );
        let mut all: Vec<_> = [&s.train, &s.val, &s.test, &s.aux]
            .into_iter()
            .flatten()
            .cloned()
            .collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 100);
        assert_eq!(s, split_users(&users, sizes, 3).unwrap());
    }

    #[test]
    fn split_overflow() {
        let sizes = SplitSizes {
            train: 60,
            val: 30,
            test: 20,
            aux: 10,
        };
        assert!(matches!(
            split_users(&ids(100), sizes, 0),
            Err(Error::SplitOverflow {
                requested: 120,
                available: 100
            })
        ));
    }

    fn quiet_cfg() -> SyntheticPopulationConfig {
        SyntheticPopulationConfig {
            users: 3,
            length: 50,
            variables: 2,
            amplitude: Range::fixed(0.0),
            frequency: Range::new(0.01, 0.1),
            phase: Range::fixed(0.0),
            trend_slope: Range::fixed(0.0),
            noise_std: Range::fixed(0.0),
            seed: 1,
        }
    }

    #[test]
    fn silent_population_is_zero() {
        let pop = generate_population(&quiet_cfg()).unwrap();
        assert_eq!(pop.len(), 3);
        assert!(pop
            .iter()
            .all(|s| s.values.as_slice().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn population_is_seed_deterministic() {
        let cfg = SyntheticPopulationConfig {
            users: 4,
            length: 64,
            seed: 11,
            ..Default::default()
        };
        let a = generate_population(&cfg).unwrap();
        let b = generate_population(&cfg).unwrap();
        for (x, y) in a.iter().zip(&b) {
            let xb: Vec<u64> = x.values.as_slice().iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u64> = y.values.as_slice().iter().map(|v| v.to_bits()).collect();
            assert_eq!(xb, yb);
        }
        let c = generate_population(&SyntheticPopulationConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a[0].values, c[0].values);
    }

    #[test]
    fn whole_period_sinusoid_has_near_zero_mean() {
        // 0.05 cycles per step, 2000 steps = 100 whole periods.
        let sigma = 0.5;
        let cfg = SyntheticPopulationConfig {
            users: 1,
            length: 2000,
            variables: 1,
            amplitude: Range::fixed(1.5),
            frequency: Range::fixed(0.05),
            phase: Range::fixed(0.0),
            trend_slope: Range::fixed(0.0),
            noise_std: Range::fixed(sigma),
            seed: 5,
        };
        let s = &generate_population(&cfg).unwrap()[0];
        let mean = s.values.as_slice().iter().sum::<f64>() / 2000.0;
        assert!(mean.abs() < 3.0 * sigma / (2000f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn invalid_ranges_rejected() {
        let mut cfg = quiet_cfg();
        cfg.frequency = Range::new(0.2, 0.1);
        assert!(generate_population(&cfg).is_err());
        let mut cfg = quiet_cfg();
        cfg.noise_std = Range::new(-1.0, 0.5);
        assert!(generate_population(&cfg).is_err());
        let mut cfg = quiet_cfg();
        cfg.users = 0;
        assert!(generate_population(&cfg).is_err());
    }

    #[test]
    fn csv_well_formed() {
        let mut text = String::from("user_id,t,v1\n");
        for u in ["a", "b"] {
            for t in 0..5 {
                text.push_str(&format!("{u},{t},{}.5\n", t));
            }
        }
        let pop = read_csv(text.as_bytes()).unwrap();
        assert_eq!(pop.len(), 2);
        assert!(pop.iter().all(|s| s.len() == 5 && s.variables() == 1));
        assert_eq!(&*pop[1].user_id, "b");
        assert_eq!(pop[0].values.get(0, 2), 2.5);
    }

    #[test]
    fn csv_rejects_duplicates_gaps_and_disorder() {
        let dup = "user_id,t,v1\na,0,1\na,1,2\na,1,3\n";
        assert!(matches!(read_csv(dup.as_bytes()), Err(Error::Csv { line: 4, .. })));
        let gap = "user_id,t,v1\na,0,1\na,2,2\n";
        assert!(read_csv(gap.as_bytes()).is_err());
        let back = "user_id,t,v1\na,3,1\na,2,2\n";
        assert!(read_csv(back.as_bytes()).is_err());
        let nan = "user_id,t,v1\na,0,NaN\n";
        assert!(read_csv(nan.as_bytes()).is_err());
    }

    #[test]
    fn csv_rejects_inconsistent_variable_count() {
        let text = "user_id,t,v1,v2,v3\na,0,1,2,3\na,1,1,2,3\nb,0,1,2\nb,1,1,2\n";
        assert!(matches!(read_csv(text.as_bytes()), Err(Error::Csv { .. })));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let cfg = SyntheticPopulationConfig {
            users: 3,
            length: 40,
            variables: 2,
            ..Default::default()
        };
        let pop = generate_population(&cfg).unwrap();
        let mut buf = Vec::new();
        write_csv(&pop, &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, pop);
    }
}
