//! DQN training loop: epsilon-greedy acting, experience replay, TD targets
//! from a periodically synced parameter copy, and plain SGD on the squared
//! TD error.

mod replay;
mod tabular;

pub use replay::{Experience, ReplayBuffer};
pub use tabular::TabularQ;

use crate::env::{ActionId, Environment};
use crate::error::{Error, Result};
use crate::qnet::{GradientSet, QNetwork, TargetParams};
use crate::rng::SplitMix64;
use crate::scalar::{argmax, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct AgentConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub target_sync_interval: usize,
    pub total_steps: usize,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            learning_rate: 1e-3,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 25_000,
            batch_size: 32,
            buffer_capacity: 10_000,
            target_sync_interval: 250,
            total_steps: 50_000,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::arg(format!("{name} = {v} outside [0, 1]")))
            }
        };
        unit("gamma", self.gamma)?;
        unit("epsilon_start", self.epsilon_start)?;
        unit("epsilon_end", self.epsilon_end)?;
        if self.epsilon_end > self.epsilon_start {
            return Err(Error::arg("epsilon_end must not exceed epsilon_start"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::arg("learning_rate must be positive"));
        }
        for (name, v) in [
            ("epsilon_decay_steps", self.epsilon_decay_steps),
            ("batch_size", self.batch_size),
            ("buffer_capacity", self.buffer_capacity),
            ("target_sync_interval", self.target_sync_interval),
        ] {
            if v == 0 {
                return Err(Error::arg(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Linear decay from `epsilon_start` at step 0 to `epsilon_end` at
/// `epsilon_decay_steps`, flat afterwards.
pub fn epsilon_at(step: usize, cfg: &AgentConfig) -> f64 {
    if step >= cfg.epsilon_decay_steps {
        return cfg.epsilon_end;
    }
    let frac = step as f64 / cfg.epsilon_decay_steps as f64;
    cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac
}

/// Epsilon-greedy choice. Always consumes one uniform draw, plus one integer
/// draw when exploring.
pub fn select_action<T: Real>(
    q_values: &[T],
    epsilon: f64,
    rng: &mut SplitMix64,
) -> Result<ActionId> {
    if q_values.is_empty() {
        return Err(Error::arg("no Q-values to choose from"));
    }
    if rng.next_f64() < epsilon {
        Ok(ActionId(rng.below(q_values.len())))
    } else {
        Ok(ActionId(argmax(q_values).expect("non-empty")))
    }
}

/// `r` when terminal, else `r + gamma * max_a' Q(s', a'; θ⁻)`.
pub fn td_target<T: Real>(e: &Experience<T>, gamma: T, target: &TargetParams<T>) -> Result<T> {
    if e.done {
        return Ok(e.r);
    }
    let q = target.forward(e.s_next.as_slice())?;
    let best = q.into_iter().fold(T::neg_infinity(), T::max);
    Ok(e.r + gamma * best)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow<T> {
    pub step: usize,
    pub epsilon: f64,
    pub reward: T,
    /// Mean minibatch loss; `None` while the buffer is filling.
    pub loss: Option<T>,
    /// Return accumulated so far in the current episode.
    pub episode_return: T,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog<T> {
    pub rows: Vec<LogRow<T>>,
    /// Whether the greedy action at each step matched the environment's
    /// oracle action (`None` when the environment has no oracle).
    pub greedy_hits: Vec<Option<bool>>,
}

pub const TRAINING_LOG_HEADER: &str = "step,epsilon,reward,loss,episode_return";

impl<T: Real> TrainingLog<T> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Greedy accuracy over the last `window` steps that have an oracle.
    pub fn greedy_accuracy(&self, window: usize) -> Option<f64> {
        let hits: Vec<bool> = self
            .greedy_hits
            .iter()
            .rev()
            .flatten()
            .take(window)
            .copied()
            .collect();
        if hits.is_empty() {
            None
        } else {
            Some(hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRAINING_LOG_HEADER);
        out.push('\n');
        for r in &self.rows {
            let loss = r.loss.map(|l| l.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.step, r.epsilon, r.reward, loss, r.episode_return
            ));
        }
        out
    }
}

/// Runs `cfg.total_steps` environment steps. See [`train_observed`].
pub fn train<T: Real, E: Environment<T>>(
    env: &mut E,
    cfg: &AgentConfig,
    net: QNetwork<T>,
) -> Result<(QNetwork<T>, TrainingLog<T>)> {
    train_observed(env, cfg, net, |_, _| {})
}

/// Like [`train`], calling `on_sync(step, &net)` right after every target
/// synchronisation.
///
/// Per step: act epsilon-greedily on `forward(net, s)`, step the environment,
/// store the transition, then once the buffer holds `batch_size` entries
/// take one SGD step on the minibatch-mean squared TD error. The target copy
/// is refreshed every `target_sync_interval` steps. All randomness comes from
/// one SplitMix64 seeded with `cfg.seed`, consumed as action draw then sample
/// draws.
pub fn train_observed<T: Real, E: Environment<T>>(
    env: &mut E,
    cfg: &AgentConfig,
    mut net: QNetwork<T>,
    mut on_sync: impl FnMut(usize, &QNetwork<T>),
) -> Result<(QNetwork<T>, TrainingLog<T>)> {
    cfg.validate()?;
    if net.output_dim() != env.action_count() || net.input_dim() != env.state_dim() {
        return Err(Error::arg(format!(
            "network dims {:?} do not fit state dim {} and {} actions",
            net.dims(),
            env.state_dim(),
            env.action_count()
        )));
    }
    let mut log = TrainingLog {
        rows: Vec::with_capacity(cfg.total_steps),
        greedy_hits: Vec::with_capacity(cfg.total_steps),
    };
    if cfg.total_steps == 0 {
        return Ok((net, log));
    }

    let gamma = T::cast(cfg.gamma);
    let lr = T::cast(cfg.learning_rate);
    let mut rng = SplitMix64::new(cfg.seed);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut target = net.sync_target();
    let mut grads = GradientSet::zeros_like(&net);

    let mut state = env.reset()?;
    let mut episode_return = T::zero();
    for step in 0..cfg.total_steps {
        let epsilon = epsilon_at(step, cfg);
        let q = net.forward(state.as_slice())?;
        let greedy = ActionId(argmax(&q).expect("network has outputs"));
        log.greedy_hits
            .push(env.correct_action().map(|c| c == greedy));
        let action = select_action(&q, epsilon, &mut rng)?;

        let tr = env.step(action)?;
        episode_return += tr.reward;
        let done = tr.done;
        let next = tr.next_state.clone();
        buffer.push(Experience {
            s: state,
            a: action,
            r: tr.reward,
            s_next: tr.next_state,
            done,
        });

        let mut loss = None;
        if let Some(batch) = buffer.sample(cfg.batch_size, &mut rng) {
            let weight = T::one() / T::cast(batch.len() as f64);
            grads.scale(T::zero());
            let mut total = T::zero();
            for e in batch {
                let y = td_target(e, gamma, &target)?;
                total += net.accumulate_gradient(e.s.as_slice(), e.a, y, weight, &mut grads)?;
            }
            net.apply_gradients(&grads, lr)?;
            loss = Some(total * weight);
        }

        if (step + 1) % cfg.target_sync_interval == 0 {
            target = net.sync_target();
            on_sync(step + 1, &net);
        }

        log.rows.push(LogRow {
            step,
            epsilon,
            reward: tr.reward,
            loss,
            episode_return,
        });

        if done {
            state = env.reset()?;
            episode_return = T::zero();
        } else {
            state = next;
        }
    }
    Ok((net, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::StateVector;

    #[test]
    fn epsilon_schedule() {
        let cfg = AgentConfig {
            epsilon_start: 1.0,
            epsilon_end: 0.0,
            epsilon_decay_steps: 100,
            ..AgentConfig::default()
        };
        assert_eq!(epsilon_at(0, &cfg), 1.0);
        assert_eq!(epsilon_at(50, &cfg), 0.5);
        assert_eq!(epsilon_at(100, &cfg), 0.0);
        assert_eq!(epsilon_at(10_000, &cfg), 0.0);
    }

    #[test]
    fn greedy_selection() {
        let mut rng = SplitMix64::new(0);
        assert_eq!(
            select_action(&[0.1, 0.9, 0.3], 0.0, &mut rng).unwrap(),
            ActionId(1)
        );
        assert_eq!(
            select_action(&[0.5, 0.5], 0.0, &mut rng).unwrap(),
            ActionId(0)
        );
        assert!(select_action::<f64>(&[], 0.5, &mut rng).is_err());
    }

    #[test]
    fn uniform_exploration_frequencies() {
        let mut rng = SplitMix64::new(2024);
        let mut counts = [0usize; 3];
        let n = 30_000;
        for _ in 0..n {
            counts[select_action(&[0.0, 1.0, 2.0], 1.0, &mut rng).unwrap().0] += 1;
        }
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((0.31..=0.36).contains(&f), "frequency {f}");
        }
    }

    fn experience(r: f64, done: bool, next: Vec<f64>) -> Experience<f64> {
        Experience {
            s: StateVector::new(vec![0.0; next.len()]),
            a: ActionId(0),
            r,
            s_next: StateVector::new(next),
            done,
        }
    }

    #[test]
    fn td_targets() {
        // Single affine layer whose outputs on s' = [1] are exactly [0, 2, 1].
        let net = QNetwork::from_parameters(&[1, 3], vec![vec![0.0, 2.0, 1.0]], vec![vec![0.0; 3]])
            .unwrap();
        let target = net.sync_target();
        assert_eq!(
            td_target(&experience(-1.0, true, vec![1.0]), 0.9, &target).unwrap(),
            -1.0
        );
        assert_eq!(
            td_target(&experience(0.3, false, vec![1.0]), 0.0, &target).unwrap(),
            0.3
        );
        assert_eq!(
            td_target(&experience(1.0, false, vec![1.0]), 0.5, &target).unwrap(),
            2.0
        );
    }

    #[test]
    fn config_validation() {
        assert!(AgentConfig::default().validate().is_ok());
        let bad = AgentConfig {
            epsilon_end: 0.9,
            epsilon_start: 0.1,
            ..AgentConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = AgentConfig {
            batch_size: 0,
            ..AgentConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = AgentConfig {
            gamma: 1.5,
            ..AgentConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn greedy_accuracy_window() {
        let log = TrainingLog::<f64> {
            rows: vec![],
            greedy_hits: vec![Some(false), None, Some(true), Some(true)],
        };
        assert_eq!(log.greedy_accuracy(2), Some(1.0));
        assert_eq!(log.greedy_accuracy(10), Some(2.0 / 3.0));
        assert_eq!(TrainingLog::<f64>::default().greedy_accuracy(5), None);
    }
}
