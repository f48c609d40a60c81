use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, Trace};
use super::SurrogateError;
use crate::rng;
use crate::scalar::Real;

/// Network shape and optimiser settings for one objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden_layers: usize,
    pub neurons: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Coefficient of the sum of squared weights added to the loss.
    pub l2: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub amsgrad: bool,
    /// Training stops once validation loss moved less than `min_delta`
    /// over the last `patience` epochs.
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::solidification_time()
    }
}

impl TrainConfig {
    fn table(hidden_layers: usize, neurons: usize, learning_rate: f64, epochs: usize, l2: f64, dropout: f64) -> Self {
        Self {
            hidden_layers,
            neurons,
            learning_rate,
            epochs,
            l2,
            dropout,
            batch_size: 32,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            amsgrad: true,
            patience: 20,
            min_delta: 1e-6,
        }
    }

    pub fn solidification_time() -> Self {
        Self::table(4, 50, 0.001, 300, 0.004, 0.0)
    }

    pub fn max_grain() -> Self {
        Self::table(6, 75, 0.001, 300, 0.005, 0.2)
    }

    pub fn min_yield() -> Self {
        Self::table(4, 25, 0.003, 400, 0.01, 0.0)
    }

    /// Settings for objective 0, 1 or 2.
    pub fn for_objective(k: usize) -> Self {
        match k {
            0 => Self::solidification_time(),
            1 => Self::max_grain(),
            2 => Self::min_yield(),
            _ => panic!("objective index {k} out of range"),
        }
    }

    pub fn validate(&self) -> Result<(), SurrogateError> {
        let bad = |m: &str| Err(SurrogateError::Config(m.to_string()));
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.l2 >= 0.0) {
            return bad("l2 must be non-negative");
        }
        if self.batch_size == 0 || self.neurons == 0 {
            return bad("batch size and neurons must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return bad("invalid Adam moments");
        }
        Ok(())
    }

    pub fn layer_sizes(&self, n_in: usize) -> Vec<usize> {
        Mlp::<f64>::with_hidden(n_in, self.hidden_layers, self.neurons)
    }
}

/// Adam moment estimates, shaped like the network.
#[derive(Debug, Clone)]
pub struct Adam<T: Real> {
    m: Mlp<T>,
    v: Mlp<T>,
    v_max: Mlp<T>,
    t: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(net: &Mlp<T>) -> Self {
        let z = Mlp::zeros(&net.sizes());
        Self {
            m: z.clone(),
            v: z.clone(),
            v_max: z,
            t: 0,
        }
    }

    /// One update with bias correction folded into the step size. With
    /// `amsgrad` the denominator uses the running maximum of `v`.
    pub fn step(&mut self, net: &mut Mlp<T>, grads: &Mlp<T>, cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
        let lr_t = T::lit(cfg.learning_rate * (1.0 - cfg.beta2.powi(self.t)).sqrt() / (1.0 - cfg.beta1.powi(self.t)));
        let eps = T::lit(cfg.epsilon);
        let one = T::one();
        for l in 0..net.layers.len() {
            let update = |p: &mut [T], g: &[T], m: &mut [T], v: &mut [T], vm: &mut [T]| {
                for i in 0..p.len() {
                    m[i] = b1 * m[i] + (one - b1) * g[i];
                    v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                    let denom = if cfg.amsgrad {
                        vm[i] = vm[i].max(v[i]);
                        vm[i]
                    } else {
                        v[i]
                    };
                    p[i] -= lr_t * m[i] / (denom.sqrt() + eps);
                }
            };
            let (pl, gl) = (&mut net.layers[l], &grads.layers[l]);
            update(
                &mut pl.w,
                &gl.w,
                &mut self.m.layers[l].w,
                &mut self.v.layers[l].w,
                &mut self.v_max.layers[l].w,
            );
            update(
                &mut pl.b,
                &gl.b,
                &mut self.m.layers[l].b,
                &mut self.v.layers[l].b,
                &mut self.v_max.layers[l].b,
            );
        }
    }
}

/// Per-epoch losses of a training run (normalised output units, data term
/// only, evaluation mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.train_loss.len()
    }

    pub fn best_val_loss(&self) -> f64 {
        self.val_loss.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn final_val_loss(&self) -> f64 {
        self.val_loss.last().copied().unwrap_or(f64::NAN)
    }
}

/// Mean squared error of `net` over `(x, y)` in evaluation mode.
pub fn mse<T: Real>(net: &Mlp<T>, x: &[Vec<T>], y: &[T]) -> Result<f64, SurrogateError> {
    if x.is_empty() {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let e = (net.forward(xi)? - yi).to_f64_lossy();
        acc += e * e;
    }
    Ok(acc / x.len() as f64)
}

/// Minimises `MSE + l2 * sum(w^2)` with mini-batch Adam over shuffled
/// epochs. Inputs and targets are already normalised.
pub fn train<T: Real>(
    net: &mut Mlp<T>,
    x_train: &[Vec<T>],
    y_train: &[T],
    x_val: &[Vec<T>],
    y_val: &[T],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainReport, SurrogateError> {
    cfg.validate()?;
    if x_train.is_empty() || x_train.len() != y_train.len() || x_val.len() != y_val.len() {
        return Err(SurrogateError::EmptyData);
    }
    for x in x_train.iter().chain(x_val) {
        if x.len() != net.n_inputs() {
            return Err(SurrogateError::Dimension {
                expected: net.n_inputs(),
                got: x.len(),
            });
        }
    }
    let mut shuffle_rng = rng::derive(seed, 1);
    let mut dropout_rng = rng::derive(seed, 2);
    let mut adam = Adam::new(net);
    let mut grads = Mlp::zeros(&net.sizes());
    let mut trace = Trace::default();
    let (mut delta, mut next) = (Vec::new(), Vec::new());
    let mut order: Vec<usize> = (0..x_train.len()).collect();
    let l2x2 = T::lit(2.0 * cfg.l2);

    let mut report = TrainReport {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        stopped_early: false,
    };
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(cfg.batch_size) {
            for layer in &mut grads.layers {
                layer
                    .w
                    .iter_mut()
                    .chain(layer.b.iter_mut())
                    .for_each(|g| *g = T::zero());
            }
            let scale = T::lit(2.0 / batch.len() as f64);
            for &i in batch {
                net.forward_trace(&x_train[i], cfg.dropout, Some(&mut dropout_rng), &mut trace);
                let out = trace.acts.last().unwrap()[0];
                net.backward(&trace, scale * (out - y_train[i]), &mut grads, &mut delta, &mut next);
            }
            if cfg.l2 > 0.0 {
                for (g, p) in grads.layers.iter_mut().zip(&net.layers) {
                    for (gw, &w) in g.w.iter_mut().zip(&p.w) {
                        *gw += l2x2 * w;
                    }
                }
            }
            adam.step(net, &grads, cfg);
        }

        let tl = mse(net, x_train, y_train)?;
        let vl = mse(net, x_val, y_val)?;
        if !tl.is_finite() || !vl.is_finite() || !net.is_finite() {
            return Err(SurrogateError::Diverged { epoch });
        }
        report.train_loss.push(tl);
        report.val_loss.push(vl);
        let p = cfg.patience;
        if p > 0 && report.val_loss.len() > p {
            let e = report.val_loss.len() - 1;
            if (report.val_loss[e] - report.val_loss[e - p]).abs() < cfg.min_delta {
                report.stopped_early = true;
                break;
            }
        }
    }
    Ok(report)
}
