//! Fixed-size state vectors for (graph, pending context) pairs.
//!
//! Layout, in order:
//!
//! 1. four global scalars: `ln(1+|E|)`, `ln(1+|R|)`, `ln(1+|T|)`, mean degree;
//! 2. per candidate, in candidate order: head, relation and tail embeddings
//!    (`d_embed` each), then `ln(1+deg(head))`, `ln(1+deg(tail))` and
//!    `ln(1+overlap(head, tail))`.
//!
//! Token embeddings are hash-seeded random unit vectors: FNV-1a over the
//! little-endian `hash_seed` bytes followed by the token bytes seeds a
//! SplitMix64 stream, whose first `d_embed` draws mapped to `[-1, 1)` are
//! normalised.

use std::ops::Index;

use crate::context::CompressedContext;
use crate::error::{Error, Result};
use crate::kg::KnowledgeGraph;
use crate::rng::{fnv1a64, SplitMix64};
use crate::scalar::Real;

pub const GLOBAL_FEATURES: usize = 4;
pub const CANDIDATE_SCALARS: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    pub d_embed: usize,
    pub hash_seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d_embed: 8,
            hash_seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn candidate_width(&self) -> usize {
        3 * self.d_embed + CANDIDATE_SCALARS
    }

    pub fn state_dim(&self, k: usize) -> usize {
        GLOBAL_FEATURES + k * self.candidate_width()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector<T>(Vec<T>);

impl<T: Real> StateVector<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![T::zero(); dim])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl<T> Index<usize> for StateVector<T> {
    type Output = T;

    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

pub fn encode_token<T: Real>(token: &str, cfg: &EncoderConfig) -> Vec<T> {
    let seed = fnv1a64(&[&cfg.hash_seed.to_le_bytes(), token.as_bytes()]);
    let mut rng = SplitMix64::new(seed);
    let raw: Vec<f64> = (0..cfg.d_embed).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        let mut unit = vec![T::zero(); cfg.d_embed];
        if let Some(first) = unit.first_mut() {
            *first = T::one();
        }
        return unit;
    }
    raw.into_iter().map(|x| T::cast(x / norm)).collect()
}

/// Encoder bound to an action-space size `k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateEncoder {
    pub cfg: EncoderConfig,
    pub k: usize,
}

impl StateEncoder {
    pub fn new(cfg: EncoderConfig, k: usize) -> Result<Self> {
        if cfg.d_embed == 0 {
            return Err(Error::arg("d_embed must be at least 1"));
        }
        if k == 0 {
            return Err(Error::arg("K must be at least 1"));
        }
        Ok(Self { cfg, k })
    }

    pub fn state_dim(&self) -> usize {
        self.cfg.state_dim(self.k)
    }

    pub fn encode<T: Real>(
        &self,
        graph: &KnowledgeGraph,
        ctx: &CompressedContext,
    ) -> Result<StateVector<T>> {
        encode_state(graph, ctx, &self.cfg, self.k)
    }
}

pub fn encode_state<T: Real>(
    graph: &KnowledgeGraph,
    ctx: &CompressedContext,
    cfg: &EncoderConfig,
    k: usize,
) -> Result<StateVector<T>> {
    if ctx.k() != k {
        return Err(Error::arg(format!(
            "context has {} candidates, encoder expects {k}",
            ctx.k()
        )));
    }
    let ln1p = |n: usize| T::cast((n as f64).ln_1p());
    let mut v = Vec::with_capacity(cfg.state_dim(k));
    v.push(ln1p(graph.entity_count()));
    v.push(ln1p(graph.relation_count()));
    v.push(ln1p(graph.triple_count()));
    v.push(T::cast(graph.mean_degree()));
    for c in &ctx.candidates {
        v.extend(encode_token::<T>(&c.head, cfg));
        v.extend(encode_token::<T>(&c.relation, cfg));
        v.extend(encode_token::<T>(&c.tail, cfg));
        v.push(ln1p(graph.degree(&c.head)));
        v.push(ln1p(graph.degree(&c.tail)));
        v.push(ln1p(graph.neighbor_overlap(&c.head, &c.tail)));
    }
    debug_assert_eq!(v.len(), cfg.state_dim(k));
    Ok(StateVector(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::AmbiguityKind;
    use crate::kg::Triple;

    fn ctx(cands: &[(&str, &str, &str)]) -> CompressedContext {
        let candidates: Vec<Triple> = cands
            .iter()
            .map(|&(h, r, t)| Triple::new(h, r, t).unwrap())
            .collect();
        CompressedContext {
            origin: candidates[0].clone(),
            candidates,
            correct_index: Some(0),
            ambiguity: AmbiguityKind::MaskedTail,
        }
    }

    #[test]
    fn token_embeddings_are_deterministic_unit_vectors() {
        let cfg = EncoderConfig::default();
        let a: Vec<f64> = encode_token("/m/x", &cfg);
        assert_eq!(a, encode_token::<f64>("/m/x", &cfg));
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
        let other = EncoderConfig {
            hash_seed: 1,
            ..cfg.clone()
        };
        assert_ne!(a, encode_token::<f64>("/m/x", &other));
        let f: Vec<f32> = encode_token("/m/x", &cfg);
        assert!((f[0] as f64 - a[0]).abs() < 1e-6);
    }

    #[test]
    fn distinct_tokens_do_not_collide() {
        let cfg = EncoderConfig::default();
        let mut rng = SplitMix64::new(77);
        for _ in 0..1000 {
            let a = format!("tok{}", rng.next_u64());
            let b = format!("tok{}", rng.next_u64());
            assert_ne!(encode_token::<f64>(&a, &cfg), encode_token::<f64>(&b, &cfg));
        }
    }

    #[test]
    fn dimension_follows_layout() {
        assert_eq!(EncoderConfig::default().state_dim(5), 139);
        let enc = StateEncoder::new(EncoderConfig::default(), 2).unwrap();
        let g = KnowledgeGraph::new();
        let s: StateVector<f64> = enc
            .encode(&g, &ctx(&[("a", "r", "b"), ("a", "r", "c")]))
            .unwrap();
        assert_eq!(s.len(), 4 + 2 * 27);
        assert_eq!(&s.as_slice()[..4], &[0.0, 0.0, 0.0, 0.0]);
        assert!(s.is_finite());
        assert!(enc.encode::<f64>(&g, &ctx(&[("a", "r", "b")])).is_err());
        assert!(StateEncoder::new(
            EncoderConfig {
                d_embed: 0,
                hash_seed: 0
            },
            2
        )
        .is_err());
    }

    #[test]
    fn structural_scalars_and_locality() {
        let g = KnowledgeGraph::build(&[
            Triple::new("a", "r", "c").unwrap(),
            Triple::new("b", "r", "c").unwrap(),
        ])
        .unwrap();
        let cfg = EncoderConfig::default();
        let s1: StateVector<f64> =
            encode_state(&g, &ctx(&[("a", "r", "b"), ("a", "s", "c")]), &cfg, 2).unwrap();
        let w = cfg.candidate_width();
        let first = &s1.as_slice()[4..4 + w];
        assert!((first[24] - 1f64.ln_1p()).abs() < 1e-12);
        assert!((first[26] - 1f64.ln_1p()).abs() < 1e-12);
        assert!((s1[3] - 4.0 / 3.0).abs() < 1e-12);

        let s2: StateVector<f64> =
            encode_state(&g, &ctx(&[("a", "r", "b"), ("b", "s", "c")]), &cfg, 2).unwrap();
        assert_eq!(&s1.as_slice()[..4 + w], &s2.as_slice()[..4 + w]);
        assert_ne!(&s1.as_slice()[4 + w..], &s2.as_slice()[4 + w..]);
    }
}
