//! Comparison policies: a structural rule and a multinomial logistic
//! regression over the same state features the DQN sees.

use std::fs;
use std::path::Path;

use crate::context::CompressedContext;
use crate::encoder::StateVector;
use crate::env::ActionId;
use crate::error::{Error, Result};
use crate::kg::KnowledgeGraph;
use crate::qnet::{checkpoint, Layer};
use crate::scalar::{argmax, Real};

/// Minimum neighbour overlap for the rule to accept a candidate.
pub const OVERLAP_THRESHOLD: usize = 1;

/// Picks the candidate whose head and tail share the most neighbours, or
/// rejects when no candidate shares any.
pub fn rule_based_choose(graph: &KnowledgeGraph, ctx: &CompressedContext) -> ActionId {
    let mut best: Option<(usize, usize)> = None;
    for (i, c) in ctx.candidates.iter().enumerate() {
        let score = graph.neighbor_overlap(&c.head, &c.tail);
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((i, score));
        }
    }
    match best {
        Some((i, s)) if s >= OVERLAP_THRESHOLD => ActionId(i),
        _ => ActionId::reject(ctx.k()),
    }
}

pub const LINMODEL_HEADER: &str = "linmodel v1";

/// Class scores `W·s + b`, with `W` stored row-major as `(actions × dim)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel<T> {
    layer: Layer<T>,
}

impl<T: Real> LinearModel<T> {
    pub fn zeros(dim: usize, n_actions: usize) -> Result<Self> {
        if dim == 0 || n_actions == 0 {
            return Err(Error::arg("linear model dims must be positive"));
        }
        Ok(Self {
            layer: Layer {
                inputs: dim,
                outputs: n_actions,
                weights: vec![T::zero(); dim * n_actions],
                biases: vec![T::zero(); n_actions],
            },
        })
    }

    pub fn from_parameters(
        dim: usize,
        n_actions: usize,
        weights: Vec<T>,
        biases: Vec<T>,
    ) -> Result<Self> {
        if weights.len() != dim * n_actions || biases.len() != n_actions {
            return Err(Error::arg("linear model parameter shape mismatch"));
        }
        Ok(Self {
            layer: Layer {
                inputs: dim,
                outputs: n_actions,
                weights,
                biases,
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.layer.inputs
    }

    pub fn n_actions(&self) -> usize {
        self.layer.outputs
    }

    pub fn weights(&self) -> &[T] {
        &self.layer.weights
    }

    pub fn biases(&self) -> &[T] {
        &self.layer.biases
    }

    pub fn scores(&self, s: &[T]) -> Result<Vec<T>> {
        if s.len() != self.dim() {
            return Err(Error::arg(format!(
                "state has {} components, model expects {}",
                s.len(),
                self.dim()
            )));
        }
        Ok(self
            .layer
            .weights
            .chunks_exact(self.dim())
            .zip(&self.layer.biases)
            .map(|(row, &b)| row.iter().zip(s).fold(b, |acc, (&w, &x)| acc + w * x))
            .collect())
    }

    pub fn probabilities(&self, s: &[T]) -> Result<Vec<T>> {
        Ok(softmax(&self.scores(s)?))
    }

    pub fn to_checkpoint(&self) -> String {
        checkpoint::write(
            LINMODEL_HEADER,
            &[self.layer.inputs, self.layer.outputs],
            std::slice::from_ref(&self.layer),
        )
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let (dims, mut layers) = checkpoint::read(LINMODEL_HEADER, text)?;
        if dims.len() != 2 {
            return Err(Error::Checkpoint(format!(
                "linear model needs exactly two dims, found {dims:?}"
            )));
        }
        Ok(Self {
            layer: layers.remove(0),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path.as_ref(), self.to_checkpoint()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(&text)
    }
}

fn softmax<T: Real>(scores: &[T]) -> Vec<T> {
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = scores.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Multinomial logistic regression by full-batch gradient descent on the
/// mean cross-entropy, starting from zero parameters. `seed` is accepted for
/// interface parity with the other learners; full-batch updates make the
/// result independent of example order.
pub fn fit_supervised<T: Real>(
    examples: &[(StateVector<T>, ActionId)],
    n_actions: usize,
    epochs: usize,
    learning_rate: f64,
    _seed: u64,
) -> Result<LinearModel<T>> {
    let Some((first, _)) = examples.first() else {
        return Err(Error::arg("no training examples"));
    };
    let dim = first.len();
    if let Some((s, _)) = examples.iter().find(|(s, _)| s.len() != dim) {
        return Err(Error::arg(format!(
            "example dimension {} differs from {dim}",
            s.len()
        )));
    }
    if let Some((_, a)) = examples.iter().find(|(_, a)| a.0 >= n_actions) {
        return Err(Error::arg(format!("label {} out of range", a.0)));
    }
    if !(learning_rate > 0.0) {
        return Err(Error::arg("learning rate must be positive"));
    }
    let mut model = LinearModel::zeros(dim, n_actions)?;
    let lr = T::cast(learning_rate);
    let inv_n = T::one() / T::cast(examples.len() as f64);
    let mut grad_w = vec![T::zero(); dim * n_actions];
    let mut grad_b = vec![T::zero(); n_actions];
    for _ in 0..epochs {
        grad_w.iter_mut().for_each(|g| *g = T::zero());
        grad_b.iter_mut().for_each(|g| *g = T::zero());
        for (s, label) in examples {
            let x = s.as_slice();
            let p = model.probabilities(x)?;
            for (c, &pc) in p.iter().enumerate() {
                let err = if c == label.0 { pc - T::one() } else { pc };
                grad_b[c] += err;
                let row = &mut grad_w[c * dim..(c + 1) * dim];
                row.iter_mut().zip(x).for_each(|(g, &xi)| *g += err * xi);
            }
        }
        let step = lr * inv_n;
        model
            .layer
            .weights
            .iter_mut()
            .zip(&grad_w)
            .for_each(|(w, &g)| *w -= step * g);
        model
            .layer
            .biases
            .iter_mut()
            .zip(&grad_b)
            .for_each(|(b, &g)| *b -= step * g);
    }
    Ok(model)
}

/// Highest-scoring action, ties to the lowest index.
pub fn supervised_choose<T: Real>(model: &LinearModel<T>, s: &StateVector<T>) -> Result<ActionId> {
    let scores = model.scores(s.as_slice())?;
    Ok(ActionId(
        argmax(&scores).expect("model has at least one action"),
    ))
}
