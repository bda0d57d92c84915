//! Synthetic knowledge graphs for desk-scale experiments.
//!
//! Entities are split into equal-size communities and edges stay inside a
//! community with probability `intra_prob` (all of them by default), so true
//! triples close structural neighbourhoods while random corruptions mostly
//! do not. Relation usage follows a Zipf law, as in
//! the public benchmark graphs where a handful of relations dominate.

use std::collections::HashSet;

use crate::kg::Triple;
use crate::rng::SplitMix64;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticKg {
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
    pub communities: usize,
    /// Probability that an edge stays inside the head's community.
    pub intra_prob: f64,
    /// Zipf exponent for relation frequencies; 0 gives uniform usage.
    pub relation_skew: f64,
    pub seed: u64,
}

impl Default for SyntheticKg {
    fn default() -> Self {
        Self {
            entities: 200,
            relations: 20,
            triples: 1000,
            communities: 40,
            intra_prob: 1.0,
            relation_skew: 4.0,
            seed: 42,
        }
    }
}

impl SyntheticKg {
    pub fn entity_name(i: usize) -> String {
        format!("e{i:04}")
    }

    pub fn relation_name(i: usize) -> String {
        format!("r{i:03}")
    }

    /// Generates exactly `triples` distinct triples that mention every entity
    /// and every relation. Panics if the requested size cannot hold them.
    pub fn generate(&self) -> Vec<Triple> {
        assert!(self.entities >= 2 && self.relations >= 1 && self.communities >= 1);
        assert!(
            self.triples >= self.entities.max(self.relations),
            "too few triples to cover the vocabulary"
        );
        let mut rng = SplitMix64::new(self.seed);
        let community_size = self.entities.div_ceil(self.communities);
        let community_of = |e: usize| e / community_size;
        let members =
            |c: usize| (c * community_size)..((c + 1) * community_size).min(self.entities);

        let weights: Vec<f64> = (1..=self.relations)
            .map(|rank| (rank as f64).powf(-self.relation_skew))
            .collect();
        let total: f64 = weights.iter().sum();
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in &weights {
            acc += w / total;
            cumulative.push(acc);
        }
        let draw_relation = |rng: &mut SplitMix64| {
            let u = rng.next_f64();
            cumulative
                .iter()
                .position(|&c| u < c)
                .unwrap_or(self.relations - 1)
        };

        let draw_tail = |rng: &mut SplitMix64, head: usize| loop {
            let tail = if rng.next_f64() < self.intra_prob {
                let range = members(community_of(head));
                range.start + rng.below(range.len())
            } else {
                rng.below(self.entities)
            };
            if tail != head {
                return tail;
            }
        };

        let mut seen: HashSet<(usize, usize, usize)> = HashSet::new();
        let mut out = Vec::with_capacity(self.triples);
        let mut push = |h: usize, r: usize, t: usize, out: &mut Vec<Triple>| {
            if seen.insert((h, r, t)) {
                out.push(Triple {
                    head: Self::entity_name(h),
                    relation: Self::relation_name(r),
                    tail: Self::entity_name(t),
                });
                true
            } else {
                false
            }
        };

        // Coverage pass: every entity heads one edge, every relation is used.
        for h in 0..self.entities {
            loop {
                let r = if h < self.relations {
                    h
                } else {
                    draw_relation(&mut rng)
                };
                let t = draw_tail(&mut rng, h);
                if push(h, r, t, &mut out) {
                    break;
                }
            }
        }
        for r in self.entities..self.relations {
            loop {
                let h = rng.below(self.entities);
                let t = draw_tail(&mut rng, h);
                if push(h, r, t, &mut out) {
                    break;
                }
            }
        }
        while out.len() < self.triples {
            let h = rng.below(self.entities);
            let r = draw_relation(&mut rng);
            let t = draw_tail(&mut rng, h);
            push(h, r, t, &mut out);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::KnowledgeGraph;

    #[test]
    fn default_graph_has_requested_shape() {
        let triples = SyntheticKg::default().generate();
        let g = KnowledgeGraph::build(&triples).unwrap();
        assert_eq!(g.entity_count(), 200);
        assert_eq!(g.relation_count(), 20);
        assert_eq!(g.triple_count(), 1000);
        assert_eq!(triples, SyntheticKg::default().generate());
    }

    #[test]
    fn community_edges_share_neighbours() {
        let triples = SyntheticKg::default().generate();
        let g = KnowledgeGraph::build(&triples).unwrap();
        let mean_overlap: f64 = triples
            .iter()
            .map(|t| g.neighbor_overlap(&t.head, &t.tail) as f64)
            .sum::<f64>()
            / triples.len() as f64;
        assert!(mean_overlap > 1.0, "mean overlap {mean_overlap}");
    }
}
