//! Invariant checks shared by the property tests and the acceptance runner.
//! Each check drives its own proptest runner so the case count is explicit.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestError, TestRunner};

use kgc::agent::{Experience, ReplayBuffer};
use kgc::context::{make_context, split_holdout, CompressedContext};
use kgc::encoder::StateVector;
use kgc::env::ActionId;
use kgc::eval::{integration_accuracy, quality_index};
use kgc::kg::{parse_triples, KnowledgeGraph, Triple};
use kgc::qnet::{GradientSet, QNetwork};
use kgc::rng::SplitMix64;
use kgc::Error;

pub const CASES: u32 = 1000;

pub fn runner() -> TestRunner {
    TestRunner::new(Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    })
}

pub fn report<T: std::fmt::Debug>(r: Result<(), TestError<T>>) -> Result<(), String> {
    r.map_err(|e| e.to_string())
}

pub fn triple(h: u8, r: u8, t: u8) -> Triple {
    Triple::new(format!("e{h}"), format!("r{r}"), format!("e{t}")).unwrap()
}

/// Up to 40 triples over 8 entities and 3 relations.
pub fn small_triples() -> impl Strategy<Value = Vec<Triple>> {
    prop::collection::vec((0u8..8, 0u8..3, 0u8..8), 1..40)
        .prop_map(|v| v.into_iter().map(|(h, r, t)| triple(h, r, t)).collect())
}

fn experience(tag: f64) -> Experience<f64> {
    Experience {
        s: StateVector::new(vec![tag]),
        a: ActionId(0),
        r: tag,
        s_next: StateVector::new(vec![tag]),
        done: false,
    }
}

/// After any push sequence the buffer holds exactly the newest
/// `min(n, capacity)` items, oldest first.
pub fn replay_fifo() -> Result<(), String> {
    let strategy = (1usize..20, prop::collection::vec(-1e6f64..1e6, 0..60));
    report(runner().run(&strategy, |(capacity, items)| {
        let mut buf = ReplayBuffer::new(capacity);
        for &x in &items {
            buf.push(experience(x));
        }
        let keep = items.len().min(capacity);
        prop_assert_eq!(buf.len(), keep);
        let held: Vec<f64> = buf.iter().map(|e| e.r).collect();
        prop_assert_eq!(&held[..], &items[items.len() - keep..]);
        if keep > 0 {
            let sample = buf
                .sample(keep, &mut SplitMix64::new(capacity as u64))
                .unwrap();
            prop_assert!(sample.iter().all(|e| held.contains(&e.r)));
        } else {
            prop_assert!(buf.sample(1, &mut SplitMix64::new(0)).is_none());
        }
        Ok(())
    }))
}

/// Gradient steps on the online network never move the target copy; a
/// sync makes the two agree again.
pub fn target_sync_isolation() -> Result<(), String> {
    let strategy = (
        1usize..6,
        1usize..6,
        1usize..4,
        any::<u64>(),
        prop::collection::vec(-2.0f64..2.0, 5),
        1e-3f64..0.5,
    );
    report(runner().run(&strategy, |(i, h, o, seed, probe, lr)| {
        let mut net = QNetwork::<f64>::new(&[i, h, o], seed).unwrap();
        let target = net.sync_target();
        let s = &probe[..i];
        let before = target.forward(s).unwrap();

        let (_, grads) = net.loss_and_gradient(s, ActionId(0), 3.0).unwrap();
        net.apply_gradients(&grads, lr).unwrap();
        prop_assert_eq!(target.forward(s).unwrap(), before);
        let frozen: Vec<f64> = target.network().params().collect();
        let fresh: Vec<f64> = QNetwork::<f64>::new(&[i, h, o], seed)
            .unwrap()
            .params()
            .collect();
        prop_assert_eq!(frozen, fresh);

        let synced = net.sync_target();
        prop_assert_eq!(synced.forward(s).unwrap(), net.forward(s).unwrap());
        let zero = GradientSet::zeros_like(&net);
        prop_assert!(zero.values().all(|v| v == 0.0));
        Ok(())
    }))
}

/// Adjacency indices agree with the triple set after arbitrary insertions
/// and after a holdout split; insertion is idempotent; serialization
/// round-trips; overlap is symmetric.
pub fn index_consistency() -> Result<(), String> {
    let strategy = (small_triples(), small_triples(), 0.0f64..1.0, any::<u64>());
    report(runner().run(&strategy, |(base, extra, fraction, seed)| {
        let mut g = KnowledgeGraph::build(&base).unwrap();
        let mut model: BTreeSet<Triple> = base.iter().cloned().collect();
        for t in &extra {
            let first = g.insert(t).unwrap();
            let again = g.insert(t).unwrap();
            prop_assert_eq!(again, kgc::kg::Insertion::AlreadyPresent);
            prop_assert_eq!(
                first == kgc::kg::Insertion::Inserted,
                model.insert(t.clone())
            );
        }
        prop_assert!(g.is_consistent());
        prop_assert_eq!(g.triple_count(), model.len());
        prop_assert!(model.iter().all(|t| g.contains(t)));

        let reparsed = KnowledgeGraph::build(&parse_triples(&g.serialize()).unwrap()).unwrap();
        prop_assert_eq!(reparsed.sorted_triples(), g.sorted_triples());

        for a in g.entities() {
            for b in g.entities() {
                prop_assert_eq!(g.neighbor_overlap(a, b), g.neighbor_overlap(b, a));
            }
        }

        let split = split_holdout(&g, fraction, seed).unwrap();
        prop_assert!(split.train_graph.is_consistent());
        prop_assert_eq!(
            split.train_graph.triple_count() + split.holdout.len(),
            g.triple_count()
        );
        for t in &split.holdout {
            prop_assert!(!split.train_graph.contains(t));
            prop_assert!(
                split.train_graph.has_entity(&t.head) && split.train_graph.has_entity(&t.tail)
            );
            prop_assert!(split.train_graph.has_relation(&t.relation));
        }
        Ok(())
    }))
}

fn differing_positions(a: &Triple, b: &Triple) -> usize {
    usize::from(a.head != b.head)
        + usize::from(a.relation != b.relation)
        + usize::from(a.tail != b.tail)
}

/// Generated candidates are distinct, absent from the graph, and each
/// corruption differs from the truth in exactly one position.
pub fn no_leak_contexts() -> Result<(), String> {
    let strategy = (
        small_triples(),
        0usize..40,
        1usize..6,
        any::<bool>(),
        any::<u64>(),
    );
    report(
        runner().run(&strategy, |(triples, pick, k, distractor, seed)| {
            let truth = triples[pick % triples.len()].clone();
            let rest: Vec<Triple> = triples.iter().filter(|t| **t != truth).cloned().collect();
            let g = KnowledgeGraph::build(&rest).unwrap();
            prop_assume!(
                g.has_entity(&truth.head)
                    && g.has_entity(&truth.tail)
                    && g.has_relation(&truth.relation)
            );

            match make_context(&truth, &g, k, distractor, &mut SplitMix64::new(seed)) {
                Ok(ctx) => check_context(&ctx, &truth, &g, k, distractor)?,
                Err(Error::Generation(_)) => {}
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
            Ok(())
        }),
    )
}

fn check_context(
    ctx: &CompressedContext,
    truth: &Triple,
    g: &KnowledgeGraph,
    k: usize,
    distractor: bool,
) -> Result<(), TestCaseError> {
    prop_assert_eq!(ctx.candidates.len(), k);
    prop_assert_eq!(&ctx.origin, truth);
    let distinct: HashSet<&Triple> = ctx.candidates.iter().collect();
    prop_assert_eq!(distinct.len(), k);
    prop_assert!(ctx.candidates.iter().all(|c| !g.contains(c)));
    prop_assert_eq!(ctx.correct_index.is_none(), distractor);
    if let Some(i) = ctx.correct_index {
        prop_assert_eq!(&ctx.candidates[i], truth);
    }
    for (i, c) in ctx.candidates.iter().enumerate() {
        if Some(i) != ctx.correct_index {
            prop_assert_eq!(differing_positions(c, truth), 1);
        }
    }
    Ok(())
}

/// Accuracy and quality stay in [0, 1]; adding a correct triple never
/// lowers recall.
pub fn metrics_in_unit_interval() -> Result<(), String> {
    let pool = prop::collection::vec((0u8..6, 0u8..2, 0u8..6), 1..30);
    let strategy = (
        pool.clone(),
        pool,
        prop::collection::vec((0usize..4, prop::option::of(0usize..3)), 1..30),
    );
    report(runner().run(&strategy, |(integrated, truth, decisions)| {
        let integrated: HashSet<Triple> = integrated
            .into_iter()
            .map(|(h, r, t)| triple(h, r, t))
            .collect();
        let truth: HashSet<Triple> = truth.into_iter().map(|(h, r, t)| triple(h, r, t)).collect();
        let q = quality_index(&integrated, &truth).unwrap();
        prop_assert!((0.0..=1.0).contains(&q));

        let recall =
            |set: &HashSet<Triple>| set.intersection(&truth).count() as f64 / truth.len() as f64;
        if let Some(missing) = truth.iter().find(|t| !integrated.contains(*t)) {
            let mut more = integrated.clone();
            more.insert(missing.clone());
            prop_assert!(recall(&more) >= recall(&integrated));
            prop_assert!((0.0..=1.0).contains(&quality_index(&more, &truth).unwrap()));
        }

        let contexts: Vec<CompressedContext> = decisions
            .iter()
            .map(|&(_, correct)| CompressedContext {
                candidates: (0..3).map(|i| triple(i, 0, i + 1)).collect(),
                correct_index: correct,
                ambiguity: kgc::context::AmbiguityKind::MaskedTail,
                origin: triple(0, 0, 1),
            })
            .collect();
        let pairs: Vec<(ActionId, &CompressedContext)> = decisions
            .iter()
            .map(|&(a, _)| ActionId(a))
            .zip(&contexts)
            .collect();
        let acc = integration_accuracy(&pairs).unwrap();
        prop_assert!((0.0..=1.0).contains(&acc));
        Ok(())
    }))
}

/// The five suites the acceptance runner times together.
pub const SUITES: &[(&str, fn() -> Result<(), String>)] = &[
    ("replay FIFO", replay_fifo),
    ("target-sync isolation", target_sync_isolation),
    ("index consistency", index_consistency),
    ("no-leak context generation", no_leak_contexts),
    ("accuracy/quality in [0,1]", metrics_in_unit_interval),
];
