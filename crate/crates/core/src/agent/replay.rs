use crate::encoder::StateVector;
use crate::env::ActionId;
use crate::rng::SplitMix64;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Experience<T> {
    pub s: StateVector<T>,
    pub a: ActionId,
    pub r: T,
    pub s_next: StateVector<T>,
    pub done: bool,
}

/// Bounded FIFO ring of experiences.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    storage: Vec<Experience<T>>,
    write_cursor: usize,
}

impl<T: Real> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            storage: Vec::with_capacity(capacity.min(1 << 16)),
            write_cursor: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    /// Appends `e`, overwriting the oldest entry once full.
    pub fn push(&mut self, e: Experience<T>) {
        if self.storage.len() < self.capacity {
            self.storage.push(e);
        } else {
            self.storage[self.write_cursor] = e;
        }
        self.write_cursor = (self.write_cursor + 1) % self.capacity;
    }

    /// Contents from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Experience<T>> {
        let split = if self.storage.len() < self.capacity {
            0
        } else {
            self.write_cursor
        };
        self.storage[split..].iter().chain(&self.storage[..split])
    }

    /// Uniform sample with replacement; `None` until `batch_size` experiences
    /// are stored.
    pub fn sample(&self, batch_size: usize, rng: &mut SplitMix64) -> Option<Vec<&Experience<T>>> {
        if batch_size == 0 || self.storage.len() < batch_size {
            return None;
        }
        Some(
            (0..batch_size)
                .map(|_| &self.storage[rng.below(self.storage.len())])
                .collect(),
        )
    }
}
