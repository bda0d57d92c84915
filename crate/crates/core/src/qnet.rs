//! Multilayer perceptron approximating Q(s, ·; θ).
//!
//! Hidden layers are affine + ReLU, the output layer is affine. Weights are
//! stored row-major as `(out × in)`. Gradients are derived by hand for the
//! squared TD error of a single chosen action.

use std::fs;
use std::path::Path;

use crate::env::ActionId;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T: Real> Layer<T> {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![T::zero(); inputs * outputs],
            biases: vec![T::zero(); outputs],
        }
    }

    pub fn weight(&self, row: usize, col: usize) -> T {
        self.weights[row * self.inputs + col]
    }

    fn affine(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.inputs)
                .zip(&self.biases)
                .map(|(row, &b)| row.iter().zip(x).fold(b, |acc, (&w, &xi)| acc + w * xi)),
        );
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QNetwork<T> {
    dims: Vec<usize>,
    layers: Vec<Layer<T>>,
}

/// Frozen parameter copy used for TD targets.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetParams<T>(QNetwork<T>);

impl<T: Real> TargetParams<T> {
    pub fn forward(&self, s: &[T]) -> Result<Vec<T>> {
        self.0.forward(s)
    }

    pub fn network(&self) -> &QNetwork<T> {
        &self.0
    }
}

/// Per-parameter gradients, shaped like the network.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet<T> {
    layers: Vec<Layer<T>>,
}

impl<T: Real> GradientSet<T> {
    pub fn zeros_like(net: &QNetwork<T>) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn values(&self) -> impl Iterator<Item = T> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|g| g.is_finite())
    }

    pub fn add_assign(&mut self, other: &GradientSet<T>) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::arg("gradient shapes differ"));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights
                .iter_mut()
                .zip(&b.weights)
                .for_each(|(x, &y)| *x += y);
            a.biases
                .iter_mut()
                .zip(&b.biases)
                .for_each(|(x, &y)| *x += y);
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: T) {
        for l in &mut self.layers {
            l.weights
                .iter_mut()
                .chain(l.biases.iter_mut())
                .for_each(|x| *x *= factor);
        }
    }

    fn same_shape(&self, other: &GradientSet<T>) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.inputs == b.inputs && a.outputs == b.outputs)
    }
}

impl<T: Real> QNetwork<T> {
    /// Glorot-uniform weights from one SplitMix64 stream (layer by layer,
    /// row-major), zero biases.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        let mut net = Self::zeros(dims)?;
        let mut rng = SplitMix64::new(seed);
        for layer in &mut net.layers {
            let limit = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut layer.weights {
                *w = T::cast(rng.uniform(-limit, limit));
            }
        }
        Ok(net)
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::arg("a network needs at least input and output dims"));
        }
        if dims.contains(&0) {
            return Err(Error::arg(format!("layer dims must be positive: {dims:?}")));
        }
        Ok(Self {
            dims: dims.to_vec(),
            layers: dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        })
    }

    /// Builds a network from explicit per-layer weights (row-major) and
    /// biases.
    pub fn from_parameters(
        dims: &[usize],
        weights: Vec<Vec<T>>,
        biases: Vec<Vec<T>>,
    ) -> Result<Self> {
        let mut net = Self::zeros(dims)?;
        if weights.len() != net.layers.len() || biases.len() != net.layers.len() {
            return Err(Error::arg("parameter count does not match layer count"));
        }
        for ((layer, w), b) in net.layers.iter_mut().zip(weights).zip(biases) {
            if w.len() != layer.weights.len() || b.len() != layer.biases.len() {
                return Err(Error::arg("parameter shape does not match dims"));
            }
            layer.weights = w;
            layer.biases = b;
        }
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("at least two dims")
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn params(&self) -> impl Iterator<Item = T> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }

    fn check_input(&self, s: &[T]) -> Result<()> {
        if s.len() != self.input_dim() {
            return Err(Error::arg(format!(
                "state has {} components, network expects {}",
                s.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, s: &[T]) -> Result<Vec<T>> {
        self.check_input(s)?;
        let mut x = s.to_vec();
        let mut y = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.affine(&x, &mut y);
            if i != last {
                y.iter_mut().for_each(|v| *v = v.max(T::zero()));
            }
            std::mem::swap(&mut x, &mut y);
        }
        Ok(x)
    }

    /// Squared TD error `(td_target - Q(s, a))^2` and its gradient.
    pub fn loss_and_gradient(
        &self,
        s: &[T],
        action: ActionId,
        td_target: T,
    ) -> Result<(T, GradientSet<T>)> {
        let mut grads = GradientSet::zeros_like(self);
        let loss = self.accumulate_gradient(s, action, td_target, T::one(), &mut grads)?;
        Ok((loss, grads))
    }

    /// Adds `weight * dL/dθ` into `grads` and returns the unweighted loss.
    pub fn accumulate_gradient(
        &self,
        s: &[T],
        action: ActionId,
        td_target: T,
        weight: T,
        grads: &mut GradientSet<T>,
    ) -> Result<T> {
        self.check_input(s)?;
        if action.0 >= self.output_dim() {
            return Err(Error::arg(format!(
                "action {} out of range for {} outputs",
                action.0,
                self.output_dim()
            )));
        }
        if !td_target.is_finite() {
            return Err(Error::arg("TD target is not finite"));
        }
        if grads.layers.len() != self.layers.len() {
            return Err(Error::arg("gradient buffer does not match network"));
        }

        // activations[l] is the input of layer l; the last entry is the output.
        let mut activations: Vec<Vec<T>> = Vec::with_capacity(self.layers.len() + 1);
        activations.push(s.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.outputs);
            layer.affine(activations.last().unwrap(), &mut z);
            if i != last {
                z.iter_mut().for_each(|v| *v = v.max(T::zero()));
            }
            activations.push(z);
        }
        let q = activations[self.layers.len()][action.0];
        let err = td_target - q;
        let loss = err * err;

        // dL/dQ_a = -2 (target - Q_a); other outputs receive no gradient.
        let mut delta = vec![T::zero(); self.output_dim()];
        delta[action.0] = -(err + err);

        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &activations[l];
            let g = &mut grads.layers[l];
            for (row, &d) in delta.iter().enumerate() {
                if d == T::zero() {
                    continue;
                }
                let wd = weight * d;
                g.biases[row] += wd;
                let grow = &mut g.weights[row * layer.inputs..(row + 1) * layer.inputs];
                grow.iter_mut()
                    .zip(input)
                    .for_each(|(gw, &x)| *gw += wd * x);
            }
            if l == 0 {
                break;
            }
            let mut prev = vec![T::zero(); layer.inputs];
            for (row, &d) in delta.iter().enumerate() {
                if d == T::zero() {
                    continue;
                }
                let wrow = &layer.weights[row * layer.inputs..(row + 1) * layer.inputs];
                prev.iter_mut().zip(wrow).for_each(|(p, &w)| *p += w * d);
            }
            // ReLU derivative: the stored activation is positive iff the
            // pre-activation was.
            for (p, &a) in prev.iter_mut().zip(input) {
                if a <= T::zero() {
                    *p = T::zero();
                }
            }
            delta = prev;
        }
        Ok(loss)
    }

    /// `θ ← θ − learning_rate · grads`.
    pub fn apply_gradients(&mut self, grads: &GradientSet<T>, learning_rate: T) -> Result<()> {
        if !(learning_rate > T::zero()) || !learning_rate.is_finite() {
            return Err(Error::arg("learning rate must be positive and finite"));
        }
        if grads.layers.len() != self.layers.len()
            || grads
                .layers
                .iter()
                .zip(&self.layers)
                .any(|(g, l)| g.inputs != l.inputs || g.outputs != l.outputs)
        {
            return Err(Error::arg("gradient shape does not match network"));
        }
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            l.weights
                .iter_mut()
                .zip(&g.weights)
                .for_each(|(w, &d)| *w -= learning_rate * d);
            l.biases
                .iter_mut()
                .zip(&g.biases)
                .for_each(|(b, &d)| *b -= learning_rate * d);
        }
        Ok(())
    }

    pub fn sync_target(&self) -> TargetParams<T> {
        TargetParams(self.clone())
    }

    pub fn to_checkpoint(&self) -> String {
        checkpoint::write(QNET_HEADER, &self.dims, &self.layers)
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let (dims, layers) = checkpoint::read(QNET_HEADER, text)?;
        Ok(Self { dims, layers })
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path.as_ref(), self.to_checkpoint()).map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(&text)
    }
}

pub const QNET_HEADER: &str = "qnet v1";

/// Line-oriented parameter files shared by the Q-network and the linear
/// baseline: a header line, a line of space-separated dims, then every
/// parameter (per layer: weights row-major, then biases) on its own line with
/// 17 significant digits.
pub(crate) mod checkpoint {
    use super::Layer;
    use crate::error::{Error, Result};
    use crate::scalar::Real;

    pub fn write<T: Real>(header: &str, dims: &[usize], layers: &[Layer<T>]) -> String {
        let mut out = String::new();
        out.push_str(header);
        out.push('\n');
        let dims: Vec<String> = dims.iter().map(usize::to_string).collect();
        out.push_str(&dims.join(" "));
        out.push('\n');
        for l in layers {
            for v in l.weights.iter().chain(&l.biases) {
                out.push_str(&format!("{v:.16e}\n"));
            }
        }
        out
    }

    pub fn read<T: Real>(header: &str, text: &str) -> Result<(Vec<usize>, Vec<Layer<T>>)> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim_end() == header => {}
            Some(h) => {
                return Err(Error::Checkpoint(format!(
                    "expected header {header:?}, found {h:?}"
                )))
            }
            None => return Err(Error::Checkpoint("empty file".into())),
        }
        let dims_line = lines
            .next()
            .ok_or_else(|| Error::Checkpoint("missing dims line".into()))?;
        let dims = dims_line
            .split_whitespace()
            .map(|d| d.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Checkpoint(format!("bad dims line {dims_line:?}")))?;
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Checkpoint(format!("invalid dims {dims:?}")));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (inputs, outputs) = (w[0], w[1]);
            let mut take = |n: usize| -> Result<Vec<T>> {
                (0..n)
                    .map(|_| {
                        let line = lines
                            .next()
                            .ok_or_else(|| Error::Checkpoint("truncated parameter list".into()))?;
                        line.trim()
                            .parse::<T>()
                            .map_err(|_| Error::Checkpoint(format!("bad parameter {line:?}")))
                    })
                    .collect()
            };
            let weights = take(inputs * outputs)?;
            let biases = take(outputs)?;
            layers.push(Layer {
                inputs,
                outputs,
                weights,
                biases,
            });
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(Error::Checkpoint("trailing data after parameters".into()));
        }
        Ok((dims, layers))
    }
}
