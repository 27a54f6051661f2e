//! Fully connected ReLU networks trained with Adam and validation-based
//! early stopping. Shared by the forecasters and the DTS classifier.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Rng;

/// Layer widths, input first. Hidden layers use ReLU, the output layer is
/// linear. Parameters are laid out layer by layer as the `out x in`
/// row-major weight matrix followed by the bias vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
}

/// Per-layer activations reused across forward passes.
#[derive(Debug, Default)]
pub struct Workspace {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Invalid(format!("bad layer sizes {sizes:?}")));
        }
        Ok(Mlp { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    /// Uniform in `±1/sqrt(fan_in)` for weights and biases.
    pub fn init_params(&self, rng: &mut Rng) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        for w in self.sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..w[1] * w[0] + w[1] {
                p.push(rng.random_range(-bound..bound));
            }
        }
        p
    }

    pub fn workspace(&self) -> Workspace {
        Workspace {
            acts: self.sizes.iter().map(|&n| vec![0.0; n]).collect(),
            deltas: self.sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Runs the network; the output stays readable in `ws` until the next call.
    pub fn forward<'w>(&self, params: &[f64], input: &[f64], ws: &'w mut Workspace) -> &'w [f64] {
        debug_assert_eq!(params.len(), self.param_count());
        ws.acts[0].copy_from_slice(input);
        let last = self.sizes.len() - 2;
        let mut off = 0;
        for (layer, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &params[off..off + n_in * n_out];
            let bias = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let (before, after) = ws.acts.split_at_mut(layer + 1);
            let x = &before[layer];
            let y = &mut after[0];
            for o in 0..n_out {
                let row = &weights[o * n_in..(o + 1) * n_in];
                let mut s = bias[o];
                for (a, b) in row.iter().zip(x.iter()) {
                    s += a * b;
                }
                y[o] = if layer < last { s.max(0.0) } else { s };
            }
        }
        ws.acts.last().unwrap()
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`
    /// for the most recent forward pass in `ws`.
    fn backward(&self, params: &[f64], ws: &mut Workspace, dout: &[f64], grad: &mut [f64]) {
        let n_layers = self.sizes.len() - 1;
        ws.deltas[n_layers].copy_from_slice(dout);
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        for layer in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[layer], self.sizes[layer + 1]);
            let off = offsets[layer];
            let (dw, rest) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            let x = &ws.acts[layer];
            let (d_lo, d_hi) = ws.deltas.split_at_mut(layer + 1);
            let delta = &d_hi[0];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                rest[o] += d;
                for (g, xi) in dw[o * n_in..(o + 1) * n_in].iter_mut().zip(x.iter()) {
                    *g += d * xi;
                }
            }
            if layer > 0 {
                let weights = &params[off..off + n_in * n_out];
                let prev = &mut d_lo[layer];
                prev.iter_mut().for_each(|v| *v = 0.0);
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    for (p, w) in prev.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                        *p += d * w;
                    }
                }
                // ReLU: hidden activations are post-ReLU, zero means inactive.
                for (p, a) in prev.iter_mut().zip(ws.acts[layer].iter()) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    /// Mean absolute error over outputs, subgradient 0 at a zero residual.
    Mae,
    /// Binary cross-entropy on a single logit output.
    Bce,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Borrowed training examples. `weights` scale each example's loss.
#[derive(Clone, Debug, Default)]
pub struct Dataset<'a> {
    pub inputs: Vec<&'a [f64]>,
    pub targets: Vec<&'a [f64]>,
    pub weights: Option<Vec<f64>>,
}

impl Dataset<'_> {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }
}

/// Mean loss over `idx` and, when `grad` is given, its gradient added in.
pub fn batch_loss(
    mlp: &Mlp,
    params: &[f64],
    data: &Dataset,
    idx: &[usize],
    loss: Loss,
    ws: &mut Workspace,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let n = idx.len() as f64;
    let out_dim = mlp.output_dim();
    let mut dout = vec![0.0; out_dim];
    let mut total = 0.0;
    for &i in idx {
        let w = data.weight(i);
        let y = data.targets[i];
        let out = mlp.forward(params, data.inputs[i], ws);
        match loss {
            Loss::Mae => {
                let mut l = 0.0;
                for k in 0..out_dim {
                    let r = out[k] - y[k];
                    l += r.abs();
                    dout[k] = w * r.signum() * f64::from(r != 0.0) / (n * out_dim as f64);
                }
                total += w * l / out_dim as f64;
            }
            Loss::Bce => {
                let z = out[0];
                total += w * (softplus(z) - y[0] * z);
                dout[0] = w * (sigmoid(z) - y[0]) / n;
            }
        }
        if let Some(g) = grad.as_deref_mut() {
            mlp.backward(params, ws, &dout, g);
        }
    }
    total / n
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n_params: usize, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

/// Stops once the monitored loss has not strictly improved for `patience`
/// consecutive epochs.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: None,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> Verdict {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = Some(epoch);
            self.stale = 0;
            Verdict::Improved
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                Verdict::Stop
            } else {
                Verdict::Continue
            }
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

/// A random permutation of `0..n` split into consecutive batches.
pub fn epoch_batches(n: usize, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// `None` disables validation and early stopping.
    pub patience: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: Vec<f64>,
    pub history: Vec<EpochStats>,
    pub best_epoch: Option<usize>,
}

pub fn train(
    mlp: &Mlp,
    mut params: Vec<f64>,
    train_set: &Dataset,
    val_set: Option<&Dataset>,
    loss: Loss,
    opts: &TrainOptions,
    rng: &mut Rng,
) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(Error::Insufficient("empty training set".into()));
    }
    let val_set = match (opts.patience, val_set) {
        (Some(_), None) => {
            return Err(Error::Invalid("early stopping needs a validation set".into()))
        }
        (Some(_), Some(v)) if v.is_empty() => {
            return Err(Error::Insufficient("empty validation set".into()))
        }
        (Some(_), v) => v,
        (None, _) => None,
    };
    let mut ws = mlp.workspace();
    let mut adam = Adam::new(params.len(), opts.learning_rate);
    let mut grad = vec![0.0; params.len()];
    let mut stopper = opts.patience.map(EarlyStopping::new);
    let mut best = params.clone();
    let mut history = Vec::new();
    let val_idx: Vec<usize> = val_set.map_or(Vec::new(), |v| (0..v.len()).collect());

    for epoch in 0..opts.max_epochs {
        let mut sum = 0.0;
        for batch in epoch_batches(train_set.len(), opts.batch_size, rng) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let l = batch_loss(mlp, &params, train_set, &batch, loss, &mut ws, Some(&mut grad));
            if !l.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
            sum += l * batch.len() as f64;
            adam.step(&mut params, &grad);
        }
        let train_loss = sum / train_set.len() as f64;
        let val_loss = val_set.map(|v| batch_loss(mlp, &params, v, &val_idx, loss, &mut ws, None));
        if val_loss.is_some_and(|v| !v.is_finite()) || params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        if let (Some(stop), Some(v)) = (stopper.as_mut(), val_loss) {
            match stop.observe(epoch, v) {
                Verdict::Improved => best.copy_from_slice(&params),
                Verdict::Continue => {}
                Verdict::Stop => break,
            }
        }
    }
    match stopper {
        Some(s) => Ok(TrainOutcome {
            params: best,
            history,
            best_epoch: s.best_epoch(),
        }),
        None => Ok(TrainOutcome {
            params,
            history,
            best_epoch: None,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    #[test]
    fn param_count_and_layout() {
        let m = Mlp::new(vec![3, 4, 2]).unwrap();
        assert_eq!(m.param_count(), 3 * 4 + 4 + 4 * 2 + 2);
        assert!(Mlp::new(vec![3]).is_err());
        assert!(Mlp::new(vec![3, 0, 1]).is_err());
    }

    #[test]
    fn linear_network_forward() {
        let m = Mlp::new(vec![2, 1]).unwrap();
        let mut ws = m.workspace();
        let out = m.forward(&[2.0, -1.0, 0.5], &[1.0, 3.0], &mut ws);
        assert_eq!(out, &[2.0 - 3.0 + 0.5]);
    }

    #[test]
    fn adam_minimizes_convex_quadratic() {
        // f(x, y) = (x - 3)^2 + 10 (y + 1)^2
        let f = |p: &[f64]| (p[0] - 3.0).powi(2) + 10.0 * (p[1] + 1.0).powi(2);
        let mut p = vec![0.0, 0.0];
        let mut adam = Adam::new(2, 0.05);
        let mut losses = vec![f(&p)];
        for _ in 0..5000 {
            let g = [2.0 * (p[0] - 3.0), 20.0 * (p[1] + 1.0)];
            adam.step(&mut p, &g);
            losses.push(f(&p));
            if f(&p) < 1e-6 {
                break;
            }
        }
        assert!(f(&p) < 1e-6, "final loss {}", f(&p));
        // Monotone over the warm-up descent phase.
        assert!(losses[..40].windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn early_stopping_scripted_schedule() {
        let losses = [1.0, 0.9, 0.8, 0.85, 0.9, 0.95, 0.99];
        let mut es = EarlyStopping::new(3);
        let mut stopped_at = None;
        for (epoch, &l) in losses.iter().enumerate() {
            if es.observe(epoch, l) == Verdict::Stop {
                stopped_at = Some(epoch);
                break;
            }
        }
        assert_eq!(stopped_at, Some(5));
        assert_eq!(es.best_epoch(), Some(2));
        assert_eq!(es.best_loss(), 0.8);
    }

    #[test]
    fn batches_form_a_permutation() {
        let mut rng = rng_from(4);
        let batches = epoch_batches(2500, 1024, &mut rng);
        assert_eq!(batches.iter().map(Vec::len).collect::<Vec<_>>(), vec![1024, 1024, 452]);
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        assert_eq!(all, (0..2500).collect::<Vec<_>>());
    }

    #[test]
    fn returned_snapshot_has_minimal_validation_loss() {
        let mut rng = rng_from(9);
        let xs: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![x[0] - 2.0 * x[1] + 0.1]).collect();
        let data = Dataset {
            inputs: xs[..150].iter().map(Vec::as_slice).collect(),
            targets: ys[..150].iter().map(Vec::as_slice).collect(),
            weights: None,
        };
        let val = Dataset {
            inputs: xs[150..].iter().map(Vec::as_slice).collect(),
            targets: ys[150..].iter().map(Vec::as_slice).collect(),
            weights: None,
        };
        let mlp = Mlp::new(vec![2, 8, 1]).unwrap();
        let p0 = mlp.init_params(&mut rng);
        let opts = TrainOptions {
            learning_rate: 0.01,
            max_epochs: 40,
            batch_size: 16,
            patience: Some(3),
        };
        let out = train(&mlp, p0, &data, Some(&val), Loss::Mae, &opts, &mut rng).unwrap();
        let mut ws = mlp.workspace();
        let idx: Vec<usize> = (0..val.len()).collect();
        let best = batch_loss(&mlp, &out.params, &val, &idx, Loss::Mae, &mut ws, None);
        for h in &out.history {
            assert!(best <= h.val_loss.unwrap() + 1e-15);
        }
    }

    /// Max relative error between the analytic gradient and central
    /// differences of the batch loss.
    pub(crate) fn gradient_check(mlp: &Mlp, params: &[f64], data: &Dataset, loss: Loss) -> f64 {
        let idx: Vec<usize> = (0..data.len()).collect();
        let mut ws = mlp.workspace();
        let mut grad = vec![0.0; params.len()];
        batch_loss(mlp, params, data, &idx, loss, &mut ws, Some(&mut grad));
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        let mut p = params.to_vec();
        for i in 0..p.len() {
            let orig = p[i];
            p[i] = orig + h;
            let up = batch_loss(mlp, &p, data, &idx, loss, &mut ws, None);
            p[i] = orig - h;
            let down = batch_loss(mlp, &p, data, &idx, loss, &mut ws, None);
            p[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let denom = grad[i].abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((grad[i] - numeric).abs() / denom);
        }
        worst
    }

    #[test]
    fn mae_gradient_matches_finite_differences() {
        let mut rng = rng_from(21);
        // 2 -> 1 -> 1: five parameters.
        let mlp = Mlp::new(vec![2, 1, 1]).unwrap();
        assert_eq!(mlp.param_count(), 5);
        let xs: Vec<Vec<f64>> = (0..6).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let ys: Vec<Vec<f64>> = (0..6).map(|_| vec![rng.random_range(-3.0..3.0)]).collect();
        let data = Dataset {
            inputs: xs.iter().map(Vec::as_slice).collect(),
            targets: ys.iter().map(Vec::as_slice).collect(),
            weights: None,
        };
        // Hidden unit kept active so the ReLU kink is away from the check.
        let params = vec![0.7, -0.4, 1.5, 1.3, 0.2];
        assert!(gradient_check(&mlp, &params, &data, Loss::Mae) < 1e-4);
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let mut rng = rng_from(22);
        let mlp = Mlp::new(vec![3, 4, 2, 1]).unwrap();
        let xs: Vec<Vec<f64>> = (0..8).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let ys: Vec<Vec<f64>> = (0..8).map(|i| vec![(i % 2) as f64]).collect();
        let data = Dataset {
            inputs: xs.iter().map(Vec::as_slice).collect(),
            targets: ys.iter().map(Vec::as_slice).collect(),
            weights: Some((0..8).map(|i| 0.5 + i as f64 * 0.1).collect()),
        };
        for _ in 0..3 {
            let params = mlp.init_params(&mut rng);
            assert!(gradient_check(&mlp, &params, &data, Loss::Bce) < 1e-4);
        }
    }

    #[test]
    fn divergence_reports_epoch() {
        let x = [vec![1e300]];
        let y = [vec![0.0]];
        let data = Dataset {
            inputs: x.iter().map(Vec::as_slice).collect(),
            targets: y.iter().map(Vec::as_slice).collect(),
            weights: None,
        };
        let mlp = Mlp::new(vec![1, 1]).unwrap();
        let opts = TrainOptions {
            learning_rate: 1.0,
            max_epochs: 5,
            batch_size: 1,
            patience: None,
        };
        let r = train(&mlp, vec![1e10, 0.0], &data, None, Loss::Mae, &opts, &mut rng_from(0));
        assert!(matches!(r, Err(Error::Divergence { epoch: 0 })));
    }
}
