use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Lookup-table Q-function over hashable states with a fixed action count.
/// Unseen entries read as zero.
#[derive(Clone, Debug)]
pub struct TabularQ<S, T> {
    n_actions: usize,
    values: HashMap<(S, usize), T>,
}

impl<S: Hash + Eq + Clone, T: Real> TabularQ<S, T> {
    pub fn new(n_actions: usize) -> Self {
        Self {
            n_actions,
            values: HashMap::new(),
        }
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: &S, a: usize) -> T {
        self.values
            .get(&(s.clone(), a))
            .copied()
            .unwrap_or_else(T::zero)
    }

    pub fn max_value(&self, s: &S) -> T {
        (0..self.n_actions)
            .map(|a| self.get(s, a))
            .fold(T::neg_infinity(), T::max)
    }

    /// One Q-learning backup:
    /// `Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a))`, with the
    /// future term dropped when `done`.
    #[allow(clippy::too_many_arguments)]
    pub fn update(
        &mut self,
        s: &S,
        a: usize,
        r: T,
        s_next: &S,
        done: bool,
        alpha: T,
        gamma: T,
    ) -> Result<()> {
        if !(alpha > T::zero() && alpha <= T::one()) {
            return Err(Error::arg("alpha must lie in (0, 1]"));
        }
        if a >= self.n_actions {
            return Err(Error::arg(format!("action {a} out of range")));
        }
        let future = if done {
            T::zero()
        } else {
            gamma * self.max_value(s_next)
        };
        let q = self.get(s, a);
        let updated = q + alpha * (r + future - q);
        self.values.insert((s.clone(), a), updated);
        Ok(())
    }
}
