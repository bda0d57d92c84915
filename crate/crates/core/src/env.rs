//! Context-integration environment.
//!
//! Each step presents one compressed context. Actions `0..K` insert the
//! corresponding candidate, action `K` rejects the context. Only correct
//! candidates are ever inserted into the working graph.

use std::sync::Arc;

use crate::context::{CompressedContext, Episode, EpisodeSource};
use crate::encoder::{StateEncoder, StateVector};
use crate::error::{Error, Result};
use crate::kg::KnowledgeGraph;
use crate::scalar::Real;

pub const REWARD_CORRECT: f64 = 1.0;
pub const REWARD_WRONG: f64 = -1.0;
pub const REWARD_MISSED: f64 = -0.2;
pub const REWARD_REJECTED_DISTRACTOR: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionId(pub usize);

impl ActionId {
    pub fn reject(k: usize) -> Self {
        ActionId(k)
    }

    pub fn is_reject(self, k: usize) -> bool {
        self.0 == k
    }

    pub fn index(self) -> usize {
        self.0
    }
}

pub fn action_count(k: usize) -> usize {
    k + 1
}

/// The action that scores a context as correct: its truth slot, or Reject.
pub fn correct_action(ctx: &CompressedContext) -> ActionId {
    ActionId(ctx.correct_index.unwrap_or(ctx.k()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition<T> {
    pub next_state: StateVector<T>,
    pub reward: T,
    pub done: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Tally {
    pub correct: usize,
    pub incorrect: usize,
    pub rejected: usize,
}

impl Tally {
    pub fn total(&self) -> usize {
        self.correct + self.incorrect + self.rejected
    }
}

/// Minimal interface the training loop needs.
pub trait Environment<T: Real> {
    fn state_dim(&self) -> usize;

    fn action_count(&self) -> usize;

    /// Starts the next episode and returns its first state.
    fn reset(&mut self) -> Result<StateVector<T>>;

    fn step(&mut self, action: ActionId) -> Result<Transition<T>>;

    /// The action an oracle would take in the pending state, when known.
    fn correct_action(&self) -> Option<ActionId> {
        None
    }
}

#[derive(Clone, Debug)]
pub struct KgEnv {
    train: Arc<KnowledgeGraph>,
    // None until the first insertion of an episode.
    working: Option<KnowledgeGraph>,
    encoder: StateEncoder,
    episode: Option<Episode>,
    cursor: usize,
    tally: Tally,
}

impl KgEnv {
    pub fn new(train: Arc<KnowledgeGraph>, encoder: StateEncoder) -> Self {
        Self {
            train,
            working: None,
            encoder,
            episode: None,
            cursor: 0,
            tally: Tally::default(),
        }
    }

    pub fn k(&self) -> usize {
        self.encoder.k
    }

    pub fn encoder(&self) -> &StateEncoder {
        &self.encoder
    }

    pub fn working_graph(&self) -> &KnowledgeGraph {
        self.working.as_ref().unwrap_or(&self.train)
    }

    pub fn train_graph(&self) -> &KnowledgeGraph {
        &self.train
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn tally(&self) -> Tally {
        self.tally
    }

    pub fn is_done(&self) -> bool {
        self.episode
            .as_ref()
            .is_none_or(|ep| self.cursor >= ep.contexts.len())
    }

    pub fn pending_context(&self) -> Option<&CompressedContext> {
        self.episode.as_ref()?.contexts.get(self.cursor)
    }

    pub fn reset<T: Real>(&mut self, episode: Episode) -> Result<StateVector<T>> {
        if episode.contexts.is_empty() {
            return Err(Error::arg("cannot reset with an empty episode"));
        }
        if let Some(bad) = episode.contexts.iter().find(|c| c.k() != self.k()) {
            return Err(Error::arg(format!(
                "episode context has {} candidates, environment expects {}",
                bad.k(),
                self.k()
            )));
        }
        self.working = None;
        self.cursor = 0;
        self.tally = Tally::default();
        let state = self.encoder.encode(&self.train, &episode.contexts[0])?;
        self.episode = Some(episode);
        Ok(state)
    }

    pub fn step<T: Real>(&mut self, action: ActionId) -> Result<Transition<T>> {
        let k = self.k();
        if action.0 > k {
            return Err(Error::arg(format!(
                "action {} out of range for K = {k}",
                action.0
            )));
        }
        let Some(episode) = self.episode.as_ref() else {
            return Err(Error::State("step before reset".into()));
        };
        if self.cursor >= episode.contexts.len() {
            return Err(Error::State("step after episode end".into()));
        }
        let ctx = &episode.contexts[self.cursor];
        let reward = match (action.is_reject(k), ctx.correct_index) {
            (true, Some(_)) => {
                self.tally.rejected += 1;
                REWARD_MISSED
            }
            (true, None) => {
                self.tally.rejected += 1;
                REWARD_REJECTED_DISTRACTOR
            }
            (false, Some(i)) if i == action.0 => {
                self.tally.correct += 1;
                let chosen = ctx.candidates[i].clone();
                self.working
                    .get_or_insert_with(|| (*self.train).clone())
                    .insert(&chosen)?;
                REWARD_CORRECT
            }
            (false, _) => {
                self.tally.incorrect += 1;
                REWARD_WRONG
            }
        };
        self.cursor += 1;
        let episode = self.episode.as_ref().expect("checked above");
        let done = self.cursor == episode.contexts.len();
        let next_state = if done {
            StateVector::zeros(self.encoder.state_dim())
        } else {
            let graph = self.working.as_ref().unwrap_or(&self.train);
            self.encoder.encode(graph, &episode.contexts[self.cursor])?
        };
        Ok(Transition {
            next_state,
            reward: T::cast(reward),
            done,
        })
    }
}

/// A [`KgEnv`] fed by an [`EpisodeSource`], so it can be reset indefinitely.
#[derive(Clone, Debug)]
pub struct EpisodicKgEnv {
    env: KgEnv,
    source: EpisodeSource,
}

impl EpisodicKgEnv {
    pub fn new(source: EpisodeSource, encoder: StateEncoder) -> Result<Self> {
        if source.k() != encoder.k {
            return Err(Error::arg("episode source and encoder disagree on K"));
        }
        let train = Arc::new(source.split().train_graph.clone());
        Ok(Self {
            env: KgEnv::new(train, encoder),
            source,
        })
    }

    pub fn inner(&self) -> &KgEnv {
        &self.env
    }
}

impl<T: Real> Environment<T> for EpisodicKgEnv {
    fn state_dim(&self) -> usize {
        self.env.encoder.state_dim()
    }

    fn action_count(&self) -> usize {
        action_count(self.env.k())
    }

    fn reset(&mut self) -> Result<StateVector<T>> {
        let episode = self.source.next_episode()?;
        self.env.reset(episode)
    }

    fn step(&mut self, action: ActionId) -> Result<Transition<T>> {
        self.env.step(action)
    }

    fn correct_action(&self) -> Option<ActionId> {
        self.env.pending_context().map(correct_action)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{episode_stream, split_holdout, HoldoutSplit};
    use crate::encoder::EncoderConfig;
    use crate::synth::SyntheticKg;

    fn split() -> HoldoutSplit {
        let g = KnowledgeGraph::build(&SyntheticKg::default().generate()).unwrap();
        split_holdout(&g, 0.2, 1).unwrap()
    }

    fn env_for(split: &HoldoutSplit, k: usize) -> KgEnv {
        KgEnv::new(
            Arc::new(split.train_graph.clone()),
            StateEncoder::new(EncoderConfig::default(), k).unwrap(),
        )
    }

    #[test]
    fn action_count_is_k_plus_one() {
        assert_eq!(action_count(1), 2);
        assert_eq!(action_count(5), 6);
        assert_eq!(action_count(10), 11);
    }

    #[test]
    fn reset_is_deterministic_and_clears_insertions() {
        let split = split();
        let ep = episode_stream(&split, 5, 3, 0.0, 4).unwrap().remove(0);
        let mut env = env_for(&split, 5);
        let s0: StateVector<f64> = env.reset(ep.clone()).unwrap();
        assert!(!env.is_done());
        assert_eq!(env.cursor(), 0);
        let a = correct_action(env.pending_context().unwrap());
        let tr: Transition<f64> = env.step(a).unwrap();
        assert_eq!(tr.reward, 1.0);
        assert_eq!(
            env.working_graph().triple_count(),
            split.train_graph.triple_count() + 1
        );
        let s1: StateVector<f64> = env.reset(ep).unwrap();
        assert_eq!(s0, s1);
        assert_eq!(
            env.working_graph().triple_count(),
            split.train_graph.triple_count()
        );
        assert_eq!(env.tally(), Tally::default());
        let empty = Episode {
            contexts: vec![],
            seed: 0,
        };
        assert!(env.reset::<f64>(empty).is_err());
    }

    #[test]
    fn reward_table() {
        let split = split();
        let mut env = env_for(&split, 5);

        let ep = episode_stream(&split, 5, 3, 0.0, 4).unwrap().remove(0);
        env.reset::<f64>(ep).unwrap();
        let ctx = env.pending_context().unwrap().clone();
        let wrong = ActionId((ctx.correct_index.unwrap() + 1) % 5);
        let tr: Transition<f64> = env.step(wrong).unwrap();
        assert_eq!(tr.reward, -1.0);
        assert_eq!(
            env.working_graph().triple_count(),
            split.train_graph.triple_count()
        );
        let tr: Transition<f64> = env.step(ActionId::reject(5)).unwrap();
        assert_eq!(tr.reward, -0.2);
        assert!(!tr.done);
        let tr: Transition<f64> = env.step(ActionId(0)).unwrap();
        assert!(tr.done);
        assert_eq!(tr.next_state, StateVector::zeros(139));
        assert!(matches!(env.step::<f64>(ActionId(0)), Err(Error::State(_))));
        let t = env.tally();
        assert_eq!(t.total(), env.cursor());

        let ep = episode_stream(&split, 5, 2, 1.0, 4).unwrap().remove(0);
        env.reset::<f64>(ep).unwrap();
        let tr: Transition<f64> = env.step(ActionId::reject(5)).unwrap();
        assert_eq!(tr.reward, 0.5);
        let tr: Transition<f64> = env.step(ActionId(2)).unwrap();
        assert_eq!(tr.reward, -1.0);
        assert!(env.step::<f64>(ActionId(0)).is_err());
    }

    #[test]
    fn out_of_range_action_is_rejected() {
        let split = split();
        let mut env = env_for(&split, 5);
        assert!(matches!(env.step::<f64>(ActionId(0)), Err(Error::State(_))));
        let ep = episode_stream(&split, 5, 1, 0.0, 4).unwrap().remove(0);
        env.reset::<f64>(ep).unwrap();
        assert!(matches!(
            env.step::<f64>(ActionId(6)),
            Err(Error::Argument(_))
        ));
        assert_eq!(env.cursor(), 0);
    }
}
