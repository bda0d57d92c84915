//! Held-out splits and compressed contexts.
//!
//! A compressed context is a small candidate set built from one held-out
//! triple: one position (head, relation or tail) is masked and refilled with
//! vocabulary samples, so the agent sees several plausible assertions and must
//! pick the real one, or reject the lot when the truth was left out.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, Triple};
use crate::rng::SplitMix64;

/// Attempts per candidate before giving up on a corruption.
pub const MAX_CORRUPTION_ATTEMPTS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct HoldoutSplit {
    pub train_graph: KnowledgeGraph,
    pub holdout: Vec<Triple>,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AmbiguityKind {
    MaskedHead,
    MaskedTail,
    MaskedRelation,
}

impl AmbiguityKind {
    pub const ALL: [AmbiguityKind; 3] = [
        AmbiguityKind::MaskedHead,
        AmbiguityKind::MaskedTail,
        AmbiguityKind::MaskedRelation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AmbiguityKind::MaskedHead => "masked-head",
            AmbiguityKind::MaskedTail => "masked-tail",
            AmbiguityKind::MaskedRelation => "masked-relation",
        }
    }
}

impl fmt::Display for AmbiguityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AmbiguityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::arg(format!("unknown ambiguity kind {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompressedContext {
    pub candidates: Vec<Triple>,
    /// Slot holding the ground truth; `None` for distractor-only contexts.
    pub correct_index: Option<usize>,
    pub ambiguity: AmbiguityKind,
    /// The held-out triple the context was derived from.
    pub origin: Triple,
}

impl CompressedContext {
    pub fn k(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_distractor_only(&self) -> bool {
        self.correct_index.is_none()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub contexts: Vec<CompressedContext>,
    pub seed: u64,
}

/// Moves about `fraction` of the triples into a holdout list, never removing
/// the last edge of an entity or the last use of a relation.
pub fn split_holdout(graph: &KnowledgeGraph, fraction: f64, seed: u64) -> Result<HoldoutSplit> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::arg(format!(
            "holdout fraction {fraction} outside [0, 1]"
        )));
    }
    let all: Vec<Triple> = graph.triples().collect();
    let target = (fraction * all.len() as f64).floor() as usize;

    let mut degree: HashMap<&str, usize> = HashMap::new();
    let mut rel_uses: HashMap<&str, usize> = HashMap::new();
    for t in &all {
        *degree.entry(&t.head).or_default() += 1;
        *degree.entry(&t.tail).or_default() += 1;
        *rel_uses.entry(&t.relation).or_default() += 1;
    }

    let mut order: Vec<usize> = (0..all.len()).collect();
    SplitMix64::new(seed).shuffle(&mut order);

    let mut train_graph = graph.clone();
    let mut holdout = Vec::with_capacity(target);
    for idx in order {
        if holdout.len() == target {
            break;
        }
        let t = &all[idx];
        let need = if t.head == t.tail { 2 } else { 1 };
        let ok = if t.head == t.tail {
            degree[t.head.as_str()] > need
        } else {
            degree[t.head.as_str()] > 1 && degree[t.tail.as_str()] > 1
        } && rel_uses[t.relation.as_str()] > 1;
        if !ok {
            continue;
        }
        *degree.get_mut(t.head.as_str()).unwrap() -= 1;
        *degree.get_mut(t.tail.as_str()).unwrap() -= 1;
        *rel_uses.get_mut(t.relation.as_str()).unwrap() -= 1;
        train_graph.remove(t);
        holdout.push(t.clone());
    }
    Ok(HoldoutSplit {
        train_graph,
        holdout,
        seed,
    })
}

/// Builds one context of `k` candidates from `truth`.
///
/// Draw order: ambiguity kind, then each corruption in turn, then (when the
/// truth is included) its slot.
pub fn make_context(
    truth: &Triple,
    graph: &KnowledgeGraph,
    k: usize,
    distractor_only: bool,
    rng: &mut SplitMix64,
) -> Result<CompressedContext> {
    if k == 0 {
        return Err(Error::arg("context size K must be at least 1"));
    }
    if !graph.has_entity(&truth.head)
        || !graph.has_entity(&truth.tail)
        || !graph.has_relation(&truth.relation)
    {
        return Err(Error::arg(format!(
            "triple ({truth}) uses tokens unknown to the graph"
        )));
    }
    let kind = AmbiguityKind::ALL[rng.below(3)];
    let n_corrupt = if distractor_only { k } else { k - 1 };

    let mut corruptions: Vec<Triple> = Vec::with_capacity(n_corrupt);
    for _ in 0..n_corrupt {
        let mut found = None;
        for _ in 0..MAX_CORRUPTION_ATTEMPTS {
            let mut c = truth.clone();
            match kind {
                AmbiguityKind::MaskedHead => {
                    c.head = graph.entity(rng.below(graph.entity_count())).to_owned();
                }
                AmbiguityKind::MaskedTail => {
                    c.tail = graph.entity(rng.below(graph.entity_count())).to_owned();
                }
                AmbiguityKind::MaskedRelation => {
                    c.relation = graph.relation(rng.below(graph.relation_count())).to_owned();
                }
            }
            if c != *truth && !graph.contains(&c) && !corruptions.contains(&c) {
                found = Some(c);
                break;
            }
        }
        match found {
            Some(c) => corruptions.push(c),
            None => {
                return Err(Error::Generation(format!(
                    "could not draw {n_corrupt} distinct {kind} corruptions of ({truth}) \
                     within {MAX_CORRUPTION_ATTEMPTS} attempts"
                )))
            }
        }
    }

    let (candidates, correct_index) = if distractor_only {
        (corruptions, None)
    } else {
        let slot = rng.below(k);
        let mut cands = corruptions;
        cands.insert(slot, truth.clone());
        (cands, Some(slot))
    };
    Ok(CompressedContext {
        candidates,
        correct_index,
        ambiguity: kind,
        origin: truth.clone(),
    })
}

/// Partitions a seeded shuffle of the holdout into episodes of `m` contexts.
/// Episode `i` draws from its own generator seeded with `seed + i`; a
/// trailing remainder shorter than `m` is dropped.
pub fn episode_stream(
    split: &HoldoutSplit,
    k: usize,
    m: usize,
    distractor_prob: f64,
    seed: u64,
) -> Result<Vec<Episode>> {
    if m == 0 || m > split.holdout.len() {
        return Err(Error::arg(format!(
            "episode length {m} must be in [1, {}]",
            split.holdout.len()
        )));
    }
    if !(0.0..=1.0).contains(&distractor_prob) {
        return Err(Error::arg(format!(
            "distractor probability {distractor_prob} outside [0, 1]"
        )));
    }
    let mut order: Vec<usize> = (0..split.holdout.len()).collect();
    SplitMix64::new(seed ^ SHUFFLE_SALT).shuffle(&mut order);

    order
        .chunks_exact(m)
        .enumerate()
        .map(|(i, chunk)| {
            let episode_seed = seed.wrapping_add(i as u64);
            let mut rng = SplitMix64::new(episode_seed);
            let contexts = chunk
                .iter()
                .map(|&idx| {
                    let distractor = rng.next_f64() < distractor_prob;
                    make_context(
                        &split.holdout[idx],
                        &split.train_graph,
                        k,
                        distractor,
                        &mut rng,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Episode {
                contexts,
                seed: episode_seed,
            })
        })
        .collect()
}

const SHUFFLE_SALT: u64 = 0x5bd1_e995_a5a5_a5a5;

/// Endless supply of episodes: whenever one pass over the holdout is used
/// up, another is generated with a fresh pass seed.
#[derive(Clone, Debug)]
pub struct EpisodeSource {
    split: HoldoutSplit,
    k: usize,
    m: usize,
    distractor_prob: f64,
    seed: u64,
    pass: u64,
    pending: std::collections::VecDeque<Episode>,
}

impl EpisodeSource {
    pub fn new(
        split: HoldoutSplit,
        k: usize,
        m: usize,
        distractor_prob: f64,
        seed: u64,
    ) -> Result<Self> {
        // Validate eagerly so configuration errors surface before training.
        episode_stream(&split, k, m, distractor_prob, seed)?;
        Ok(Self {
            split,
            k,
            m,
            distractor_prob,
            seed,
            pass: 0,
            pending: Default::default(),
        })
    }

    pub fn split(&self) -> &HoldoutSplit {
        &self.split
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn next_episode(&mut self) -> Result<Episode> {
        if self.pending.is_empty() {
            let pass_seed = pass_seed(self.seed, self.pass);
            self.pass += 1;
            self.pending.extend(episode_stream(
                &self.split,
                self.k,
                self.m,
                self.distractor_prob,
                pass_seed,
            )?);
        }
        Ok(self
            .pending
            .pop_front()
            .expect("episode_stream yields at least one episode"))
    }

    /// Flattened contexts from successive episodes, truncated to `n`.
    pub fn take_contexts(&mut self, n: usize) -> Result<Vec<CompressedContext>> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let ep = self.next_episode()?;
            out.extend(ep.contexts.into_iter().take(n - out.len()));
        }
        Ok(out)
    }
}

/// Seed for the `pass`-th sweep; passes are spaced 2^32 apart so episode
/// seeds never collide between passes.
pub fn pass_seed(seed: u64, pass: u64) -> u64 {
    seed.wrapping_add(pass << 32)
}

fn encode_candidate(t: &Triple) -> Result<String> {
    for tok in [&t.head, &t.relation, &t.tail] {
        if tok.contains(['|', ',']) {
            return Err(Error::arg(format!(
                "token {tok:?} cannot be written to a context dump"
            )));
        }
    }
    Ok(format!("{}|{}|{}", t.head, t.relation, t.tail))
}

fn decode_candidate(s: &str, line: usize) -> Result<Triple> {
    let parts: Vec<&str> = s.split('|').collect();
    if parts.len() != 3 {
        return Err(Error::Parse {
            line,
            message: format!("candidate {s:?} is not h|r|t"),
        });
    }
    Triple::new(parts[0], parts[1], parts[2]).map_err(|e| Error::Parse {
        line,
        message: e.to_string(),
    })
}

pub const CONTEXT_DUMP_HEADER: &str =
    "episode\tposition\tcandidates\tcorrect_index\tambiguity_kind\torigin";

/// One line per context:
/// `episode, position, h|r|t candidates joined by commas, correct index or
/// "-", ambiguity kind, origin h|r|t`.
pub fn write_context_dump<'a>(
    rows: impl IntoIterator<Item = (usize, usize, &'a CompressedContext)>,
) -> Result<String> {
    let mut out = String::from(CONTEXT_DUMP_HEADER);
    out.push('\n');
    for (episode, position, ctx) in rows {
        let cands = ctx
            .candidates
            .iter()
            .map(encode_candidate)
            .collect::<Result<Vec<_>>>()?
            .join(",");
        let correct = ctx
            .correct_index
            .map_or_else(|| "-".to_owned(), |i| i.to_string());
        out.push_str(&format!(
            "{episode}\t{position}\t{cands}\t{correct}\t{}\t{}\n",
            ctx.ambiguity,
            encode_candidate(&ctx.origin)?
        ));
    }
    Ok(out)
}

pub fn parse_context_dump(text: &str) -> Result<Vec<(usize, usize, CompressedContext)>> {
    let mut out = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CONTEXT_DUMP_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "missing context dump header".into(),
            })
        }
    }
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: String| Error::Parse {
            line: lineno,
            message: m,
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(bad(format!("expected 6 fields, found {}", f.len())));
        }
        let episode = f[0]
            .parse()
            .map_err(|_| bad(format!("bad episode {:?}", f[0])))?;
        let position = f[1]
            .parse()
            .map_err(|_| bad(format!("bad position {:?}", f[1])))?;
        let candidates = f[2]
            .split(',')
            .map(|c| decode_candidate(c, lineno))
            .collect::<Result<Vec<_>>>()?;
        let correct_index = match f[3] {
            "-" => None,
            s => {
                let i: usize = s
                    .parse()
                    .map_err(|_| bad(format!("bad correct index {s:?}")))?;
                if i >= candidates.len() {
                    return Err(bad(format!("correct index {i} out of range")));
                }
                Some(i)
            }
        };
        let ambiguity = f[4].parse().map_err(|e: Error| bad(e.to_string()))?;
        let origin = decode_candidate(f[5], lineno)?;
        out.push((
            episode,
            position,
            CompressedContext {
                candidates,
                correct_index,
                ambiguity,
                origin,
            },
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::SyntheticKg;

    fn graph() -> KnowledgeGraph {
        let triples = SyntheticKg::default().generate();
        KnowledgeGraph::build(&triples).unwrap()
    }

    fn differing_positions(a: &Triple, b: &Triple) -> usize {
        usize::from(a.head != b.head)
            + usize::from(a.relation != b.relation)
            + usize::from(a.tail != b.tail)
    }

    #[test]
    fn zero_fraction_is_identity() {
        let g = graph();
        let split = split_holdout(&g, 0.0, 1).unwrap();
        assert!(split.holdout.is_empty());
        assert_eq!(split.train_graph, g);
    }

    #[test]
    fn split_respects_size_and_cold_start() {
        let g = graph();
        assert_eq!(g.triple_count(), 1000);
        let split = split_holdout(&g, 0.1, 7).unwrap();
        assert!(split.holdout.len() <= 100);
        assert!(split.holdout.len() >= 95);
        for t in &split.holdout {
            assert!(!split.train_graph.contains(t));
            assert!(split.train_graph.degree(&t.head) > 0);
            assert!(split.train_graph.degree(&t.tail) > 0);
            assert!(split
                .train_graph
                .triples()
                .any(|x| x.relation == t.relation));
        }
        assert_eq!(split.train_graph.triple_count() + split.holdout.len(), 1000);
        assert!(split.train_graph.is_consistent());
        assert_eq!(split, split_holdout(&g, 0.1, 7).unwrap());
        assert!(split_holdout(&g, 1.5, 7).is_err());
        assert!(split_holdout(&g, -0.1, 7).is_err());
    }

    #[test]
    fn orphaning_triples_are_skipped() {
        let g = KnowledgeGraph::build(&[Triple::new("a", "r", "b").unwrap()]).unwrap();
        let split = split_holdout(&g, 1.0, 0).unwrap();
        assert!(split.holdout.is_empty());
    }

    #[test]
    fn single_candidate_context_is_the_truth() {
        let g = graph();
        let truth = g.triples().next().unwrap();
        let ctx = make_context(&truth, &g, 1, false, &mut SplitMix64::new(1)).unwrap();
        assert_eq!(ctx.candidates, vec![truth]);
        assert_eq!(ctx.correct_index, Some(0));
    }

    #[test]
    fn corruptions_differ_in_one_position() {
        let g = graph();
        let split = split_holdout(&g, 0.2, 3).unwrap();
        let mut rng = SplitMix64::new(11);
        for truth in &split.holdout {
            let ctx = make_context(truth, &split.train_graph, 5, false, &mut rng).unwrap();
            let i = ctx.correct_index.unwrap();
            assert_eq!(&ctx.candidates[i], truth);
            assert_eq!(ctx.candidates.iter().filter(|c| *c == truth).count(), 1);
            for (j, c) in ctx.candidates.iter().enumerate() {
                if j != i {
                    assert_eq!(differing_positions(c, truth), 1);
                }
                assert!(!split.train_graph.contains(c));
            }
        }
    }

    #[test]
    fn distractor_only_has_no_truth() {
        let g = graph();
        let split = split_holdout(&g, 0.2, 3).unwrap();
        let mut rng = SplitMix64::new(5);
        for truth in &split.holdout {
            let ctx = make_context(truth, &split.train_graph, 5, true, &mut rng).unwrap();
            assert!(ctx.correct_index.is_none());
            assert!(!ctx.candidates.contains(truth));
            assert_eq!(ctx.k(), 5);
        }
    }

    #[test]
    fn tiny_vocabulary_fails_generation() {
        let g = KnowledgeGraph::build(&[
            Triple::new("a", "r", "b").unwrap(),
            Triple::new("b", "r", "a").unwrap(),
        ])
        .unwrap();
        let truth = Triple::new("a", "r", "b").unwrap();
        let mut rng = SplitMix64::new(0);
        assert!(matches!(
            make_context(&truth, &g, 6, false, &mut rng),
            Err(Error::Generation(_))
        ));
        assert!(make_context(&truth, &g, 0, false, &mut rng).is_err());
        let unknown = Triple::new("a", "q", "b").unwrap();
        assert!(make_context(&unknown, &g, 1, false, &mut rng).is_err());
    }

    #[test]
    fn episode_partition_and_distractor_extremes() {
        let g = graph();
        let mut split = split_holdout(&g, 0.2, 3).unwrap();
        split.holdout.truncate(10);
        let eps = episode_stream(&split, 5, 5, 0.0, 9).unwrap();
        assert_eq!(eps.len(), 2);
        assert!(eps
            .iter()
            .flat_map(|e| &e.contexts)
            .all(|c| c.correct_index.is_some()));
        let eps = episode_stream(&split, 5, 5, 1.0, 9).unwrap();
        assert!(eps
            .iter()
            .flat_map(|e| &e.contexts)
            .all(|c| c.correct_index.is_none()));
        assert_eq!(eps, episode_stream(&split, 5, 5, 1.0, 9).unwrap());
        assert!(episode_stream(&split, 5, 11, 0.0, 9).is_err());
        assert!(episode_stream(&split, 5, 0, 0.0, 9).is_err());

        // contexts within a pass are drawn without replacement
        let eps = episode_stream(&split, 5, 5, 0.0, 2).unwrap();
        let mut origins: Vec<_> = eps
            .iter()
            .flat_map(|e| &e.contexts)
            .map(|c| c.origin.clone())
            .collect();
        origins.sort();
        origins.dedup();
        assert_eq!(origins.len(), 10);
    }

    #[test]
    fn episode_source_cycles_passes() {
        let g = graph();
        let mut split = split_holdout(&g, 0.2, 3).unwrap();
        split.holdout.truncate(4);
        let mut src = EpisodeSource::new(split, 3, 2, 0.5, 1).unwrap();
        let ctxs = src.take_contexts(9).unwrap();
        assert_eq!(ctxs.len(), 9);
    }

    #[test]
    fn dump_roundtrip() {
        let g = graph();
        let split = split_holdout(&g, 0.2, 3).unwrap();
        let eps = episode_stream(&split, 5, 4, 0.3, 1).unwrap();
        let rows: Vec<_> = eps
            .iter()
            .enumerate()
            .flat_map(|(e, ep)| ep.contexts.iter().enumerate().map(move |(p, c)| (e, p, c)))
            .collect();
        let text = write_context_dump(rows.iter().copied()).unwrap();
        let back = parse_context_dump(&text).unwrap();
        assert_eq!(back.len(), rows.len());
        for ((e, p, c), (e2, p2, c2)) in rows.iter().zip(&back) {
            assert_eq!((e, p, *c), (e2, p2, c2));
        }
        assert!(parse_context_dump("nope\n").is_err());
    }
}
