use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::SurrogateError;
use crate::rng::Rng;
use crate::scalar::Real;

/// Fully connected layer; `w` is row-major `n_out x n_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense<T: Real> {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            w: vec![T::zero(); n_in * n_out],
            b: vec![T::zero(); n_out],
        }
    }

    /// `z = W x + b`
    pub fn affine(&self, x: &[T], z: &mut [T]) {
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            let mut acc = self.b[o];
            for (wi, xi) in row.iter().zip(x) {
                acc += *wi * *xi;
            }
            *zo = acc;
        }
    }
}

/// Feed-forward regressor with rectifier hidden layers and a linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T: Real> {
    pub layers: Vec<Dense<T>>,
}

#[inline]
fn relu<T: Real>(z: T) -> T {
    if z > T::zero() {
        z
    } else {
        T::zero()
    }
}

/// Per-layer activations of one forward pass, kept for backpropagation.
#[derive(Debug, Clone, Default)]
pub(crate) struct Trace<T: Real> {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`
    /// (after rectifier and dropout for hidden layers).
    pub acts: Vec<Vec<T>>,
    /// Pre-activations of each layer.
    pub pre: Vec<Vec<T>>,
    /// Dropout multipliers of each hidden layer (0 or `1/keep`).
    pub masks: Vec<Vec<T>>,
}

impl<T: Real> Mlp<T> {
    /// Zero network with the given layer widths, input first.
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "need input and output widths");
        Self {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn glorot(sizes: &[usize], rng: &mut Rng) -> Self {
        let mut net = Self::zeros(sizes);
        for layer in &mut net.layers {
            let limit = (6.0 / (layer.n_in + layer.n_out) as f64).sqrt();
            for w in &mut layer.w {
                *w = T::lit(rng.random_range(-limit..limit));
            }
        }
        net
    }

    /// `[11, 50, 50, 50, 50, 1]` style widths.
    pub fn with_hidden(n_in: usize, hidden_layers: usize, neurons: usize) -> Vec<usize> {
        let mut sizes = vec![n_in];
        sizes.extend(std::iter::repeat_n(neurons, hidden_layers));
        sizes.push(1);
        sizes
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].n_in];
        s.extend(self.layers.iter().map(|l| l.n_out));
        s
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(&l.b).all(|v| v.is_finite()))
    }

    /// Checks that consecutive layers chain and buffers have the right size.
    pub fn is_consistent(&self) -> bool {
        !self.layers.is_empty()
            && self.layers.last().is_some_and(|l| l.n_out == 1)
            && self.layers.windows(2).all(|w| w[0].n_out == w[1].n_in)
            && self
                .layers
                .iter()
                .all(|l| l.w.len() == l.n_in * l.n_out && l.b.len() == l.n_out)
    }

    fn check_input(&self, x: &[T]) -> Result<(), SurrogateError> {
        if x.len() != self.n_inputs() {
            return Err(SurrogateError::Dimension {
                expected: self.n_inputs(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Evaluation-mode output for a normalised input.
    pub fn forward(&self, x: &[T]) -> Result<T, SurrogateError> {
        self.check_input(x)?;
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = vec![T::zero(); layer.n_out];
            layer.affine(&a, &mut z);
            if l < last {
                z.iter_mut().for_each(|v| *v = relu(*v));
            }
            a = z;
        }
        Ok(a[0])
    }

    /// Training-mode output: hidden units are dropped with probability
    /// `dropout` and survivors scaled by `1/(1 - dropout)`.
    pub fn forward_train(&self, x: &[T], dropout: f64, rng: &mut Rng) -> Result<T, SurrogateError> {
        self.check_input(x)?;
        let mut trace = Trace::default();
        self.forward_trace(x, dropout, Some(rng), &mut trace);
        Ok(trace.acts.last().unwrap()[0])
    }

    pub(crate) fn forward_trace(&self, x: &[T], dropout: f64, mut rng: Option<&mut Rng>, trace: &mut Trace<T>) {
        let n = self.layers.len();
        trace.acts.resize_with(n + 1, Vec::new);
        trace.pre.resize_with(n, Vec::new);
        trace.masks.resize_with(n.saturating_sub(1), Vec::new);
        trace.acts[0].clear();
        trace.acts[0].extend_from_slice(x);
        let scale = T::lit(1.0 / (1.0 - dropout));
        for (l, layer) in self.layers.iter().enumerate() {
            let (done, rest) = trace.acts.split_at_mut(l + 1);
            let pre = &mut trace.pre[l];
            pre.resize(layer.n_out, T::zero());
            layer.affine(&done[l], pre);
            let out = &mut rest[0];
            out.clear();
            if l + 1 == n {
                out.extend_from_slice(pre);
                continue;
            }
            out.extend(pre.iter().map(|&z| relu(z)));
            let mask = &mut trace.masks[l];
            mask.clear();
            match rng.as_deref_mut() {
                Some(rng) if dropout > 0.0 => {
                    for v in out.iter_mut() {
                        let m = if rng.random::<f64>() < dropout {
                            T::zero()
                        } else {
                            scale
                        };
                        *v *= m;
                        mask.push(m);
                    }
                }
                _ => mask.resize(layer.n_out, T::one()),
            }
        }
    }

    /// Accumulates `d_out * d(output)/d(params)` into `grads` (same shape as
    /// `self`) for the pass recorded in `trace`.
    pub(crate) fn backward(
        &self,
        trace: &Trace<T>,
        d_out: T,
        grads: &mut Mlp<T>,
        delta: &mut Vec<T>,
        next: &mut Vec<T>,
    ) {
        let n = self.layers.len();
        delta.clear();
        delta.push(d_out);
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let g = &mut grads.layers[l];
            let a_in = &trace.acts[l];
            for o in 0..layer.n_out {
                let d = delta[o];
                if d == T::zero() {
                    continue;
                }
                g.b[o] += d;
                let row = &mut g.w[o * layer.n_in..(o + 1) * layer.n_in];
                for (gw, &a) in row.iter_mut().zip(a_in) {
                    *gw += d * a;
                }
            }
            if l == 0 {
                break;
            }
            // back through layer l's weights into the previous hidden layer
            next.clear();
            next.resize(layer.n_in, T::zero());
            for o in 0..layer.n_out {
                let d = delta[o];
                if d == T::zero() {
                    continue;
                }
                let row = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
                for (nx, &w) in next.iter_mut().zip(row) {
                    *nx += d * w;
                }
            }
            let pre = &trace.pre[l - 1];
            let mask = &trace.masks[l - 1];
            for i in 0..layer.n_in {
                next[i] = if pre[i] > T::zero() {
                    next[i] * mask[i]
                } else {
                    T::zero()
                };
            }
            std::mem::swap(delta, next);
        }
    }

    /// Exact derivative of the evaluation-mode output with respect to the
    /// normalised input; the rectifier derivative is 0 at the kink.
    pub fn gradient(&self, x: &[T]) -> Result<Vec<T>, SurrogateError> {
        self.check_input(x)?;
        let mut trace = Trace::default();
        self.forward_trace(x, 0.0, None, &mut trace);
        let mut delta = vec![T::one()];
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let mut next = vec![T::zero(); layer.n_in];
            for (o, &d) in delta.iter().enumerate() {
                let row = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
                for (nx, &w) in next.iter_mut().zip(row) {
                    *nx += d * w;
                }
            }
            if l > 0 {
                for (nx, &z) in next.iter_mut().zip(&trace.pre[l - 1]) {
                    if z <= T::zero() {
                        *nx = T::zero();
                    }
                }
            }
            delta = next;
        }
        Ok(delta)
    }

    /// Smallest `|pre-activation|` over hidden units at `x`; small values mean
    /// `x` sits near a kink of the piecewise-linear response.
    pub fn min_abs_preactivation(&self, x: &[T]) -> Result<T, SurrogateError> {
        self.check_input(x)?;
        let mut trace = Trace::default();
        self.forward_trace(x, 0.0, None, &mut trace);
        let hidden = &trace.pre[..self.layers.len() - 1];
        Ok(hidden.iter().flatten().map(|z| z.abs()).fold(T::infinity(), T::min))
    }

    /// Sum of squared weights (biases excluded).
    pub fn weight_norm2(&self) -> T {
        self.layers.iter().flat_map(|l| &l.w).map(|&w| w * w).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    /// Plain matrix arithmetic, written without the crate's buffers.
    fn reference_forward(net: &Mlp<f64>, x: &[f64]) -> f64 {
        let mut a = x.to_vec();
        for (l, layer) in net.layers.iter().enumerate() {
            let mut out = Vec::new();
            for o in 0..layer.n_out {
                let mut z = layer.b[o];
                for i in 0..layer.n_in {
                    z += layer.w[o * layer.n_in + i] * a[i];
                }
                out.push(if l + 1 < net.layers.len() { z.max(0.0) } else { z });
            }
            a = out;
        }
        a[0]
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::<f64>::zeros(&[11, 8, 8, 1]);
        assert_eq!(net.forward(&[0.3; 11]).unwrap(), 0.0);
        assert!(net.gradient(&[0.3; 11]).unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn single_linear_layer() {
        let mut net = Mlp::<f64>::zeros(&[4, 1]);
        net.layers[0].w[2] = 1.0;
        let x = [0.1, 0.2, 0.7, 0.4];
        assert_eq!(net.forward(&x).unwrap(), 0.7);
        net.layers[0].w = vec![0.5, -1.5, 2.0, 0.25];
        assert_eq!(net.gradient(&x).unwrap(), net.layers[0].w);
    }

    #[test]
    fn forward_matches_reference() {
        let mut r = rng::seeded(4);
        for _ in 0..20 {
            let net = Mlp::<f64>::glorot(&[11, 13, 7, 1], &mut r);
            let x: Vec<f64> = (0..11).map(|_| r.random::<f64>()).collect();
            let a = net.forward(&x).unwrap();
            let b = reference_forward(&net, &x);
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn dimension_mismatch() {
        let net = Mlp::<f64>::zeros(&[3, 1]);
        assert!(matches!(
            net.forward(&[1.0]),
            Err(SurrogateError::Dimension { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn eval_mode_ignores_dropout_and_train_mode_rescales() {
        let mut r = rng::seeded(1);
        let net = Mlp::<f64>::glorot(&[3, 200, 1], &mut r);
        let x = [0.2, 0.5, 0.9];
        let eval = net.forward(&x).unwrap();
        assert_eq!(net.forward_train(&x, 0.0, &mut r).unwrap(), eval);
        // inverted dropout keeps the expectation
        let n = 20000;
        let mean: f64 = (0..n).map(|_| net.forward_train(&x, 0.2, &mut r).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - eval).abs() < 0.05 * eval.abs().max(0.1), "{mean} {eval}");
    }

    #[test]
    fn parameter_gradient_matches_differences() {
        let mut r = rng::seeded(9);
        let net = Mlp::<f64>::glorot(&[5, 6, 4, 1], &mut r);
        let x: Vec<f64> = (0..5).map(|_| r.random::<f64>()).collect();
        let mut trace = Trace::default();
        net.forward_trace(&x, 0.0, None, &mut trace);
        let mut grads = Mlp::zeros(&net.sizes());
        net.backward(&trace, 1.0, &mut grads, &mut Vec::new(), &mut Vec::new());
        let h = 1e-6;
        for l in 0..net.layers.len() {
            for i in 0..net.layers[l].w.len() {
                let mut p = net.clone();
                p.layers[l].w[i] += h;
                let mut m = net.clone();
                m.layers[l].w[i] -= h;
                let fd = (p.forward(&x).unwrap() - m.forward(&x).unwrap()) / (2.0 * h);
                assert!((fd - grads.layers[l].w[i]).abs() < 1e-7, "layer {l} w{i}");
            }
            for i in 0..net.layers[l].b.len() {
                let mut p = net.clone();
                p.layers[l].b[i] += h;
                let mut m = net.clone();
                m.layers[l].b[i] -= h;
                let fd = (p.forward(&x).unwrap() - m.forward(&x).unwrap()) / (2.0 * h);
                assert!((fd - grads.layers[l].b[i]).abs() < 1e-7, "layer {l} b{i}");
            }
        }
    }

    #[test]
    fn sizes_round_trip() {
        let sizes = Mlp::<f64>::with_hidden(11, 4, 50);
        assert_eq!(sizes, vec![11, 50, 50, 50, 50, 1]);
        let net = Mlp::<f32>::zeros(&sizes);
        assert_eq!(net.sizes(), sizes);
        assert!(net.is_consistent());
        assert_eq!(net.param_count(), 11 * 50 + 50 + 3 * (50 * 50 + 50) + 51);
    }
}
