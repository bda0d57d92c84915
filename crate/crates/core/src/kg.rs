//! In-memory triple store used as the environment's substrate.
//!
//! Entity and relation names are interned to dense `u32` ids in first-seen
//! order, so ids (and everything derived from them) are stable for a given
//! input order. Triples are kept as a set; both adjacency directions are
//! indexed per entity.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl Triple {
    /// Builds a triple, rejecting empty tokens and tokens containing tabs or
    /// line breaks.
    pub fn new(
        head: impl Into<String>,
        relation: impl Into<String>,
        tail: impl Into<String>,
    ) -> Result<Self> {
        let t = Triple {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, tok) in [
            ("head", &self.head),
            ("relation", &self.relation),
            ("tail", &self.tail),
        ] {
            if tok.is_empty() {
                return Err(Error::arg(format!("empty {name} token")));
            }
            if tok.contains(['\t', '\n', '\r']) {
                return Err(Error::arg(format!(
                    "{name} token {tok:?} contains a tab or newline"
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}", self.head, self.relation, self.tail)
    }
}

/// Parses tab-separated triples, one per line. Blank lines are skipped.
pub fn parse_triples(text: &str) -> Result<Vec<Triple>> {
    read_triples(text.as_bytes())
}

pub fn read_triples(reader: impl BufRead) -> Result<Vec<Triple>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        if let Some(pos) = fields.iter().position(|f| f.is_empty()) {
            return Err(Error::Parse {
                line: lineno,
                message: format!("field {} is empty", pos + 1),
            });
        }
        out.push(Triple {
            head: fields[0].to_owned(),
            relation: fields[1].to_owned(),
            tail: fields[2].to_owned(),
        });
    }
    Ok(out)
}

/// Serializes triples in the given order, one TSV line each.
pub fn serialize_triples<'a>(triples: impl IntoIterator<Item = &'a Triple>) -> String {
    let mut out = String::new();
    for t in triples {
        out.push_str(&t.to_string());
        out.push('\n');
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Insertion {
    Inserted,
    AlreadyPresent,
}

type Edge = (u32, u32, u32);

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KnowledgeGraph {
    entity_names: Vec<String>,
    entity_ids: HashMap<String, u32>,
    relation_names: Vec<String>,
    relation_ids: HashMap<String, u32>,
    triples: BTreeSet<Edge>,
    // entity id -> (relation, tail)
    out_index: Vec<BTreeSet<(u32, u32)>>,
    // entity id -> (relation, head)
    in_index: Vec<BTreeSet<(u32, u32)>>,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a graph holding exactly the distinct triples in `triples`.
    pub fn build<'a>(triples: impl IntoIterator<Item = &'a Triple>) -> Result<Self> {
        let mut g = Self::new();
        for t in triples {
            g.insert(t)?;
        }
        Ok(g)
    }

    pub fn insert(&mut self, t: &Triple) -> Result<Insertion> {
        t.validate()?;
        if self.contains(t) {
            return Ok(Insertion::AlreadyPresent);
        }
        let h = self.intern_entity(&t.head);
        let r = self.intern_relation(&t.relation);
        let tl = self.intern_entity(&t.tail);
        self.triples.insert((h, r, tl));
        self.out_index[h as usize].insert((r, tl));
        self.in_index[tl as usize].insert((r, h));
        Ok(Insertion::Inserted)
    }

    /// Drops a triple's edges. Vocabulary is left untouched; callers that
    /// need exact vocabularies must not orphan an entity or relation.
    pub(crate) fn remove(&mut self, t: &Triple) -> bool {
        let Some(edge) = self.edge(t) else {
            return false;
        };
        if !self.triples.remove(&edge) {
            return false;
        }
        let (h, r, tl) = edge;
        self.out_index[h as usize].remove(&(r, tl));
        self.in_index[tl as usize].remove(&(r, h));
        true
    }

    fn intern_entity(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.entity_ids.get(name) {
            return id;
        }
        let id = self.entity_names.len() as u32;
        self.entity_names.push(name.to_owned());
        self.entity_ids.insert(name.to_owned(), id);
        self.out_index.push(BTreeSet::new());
        self.in_index.push(BTreeSet::new());
        id
    }

    fn intern_relation(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.relation_ids.get(name) {
            return id;
        }
        let id = self.relation_names.len() as u32;
        self.relation_names.push(name.to_owned());
        self.relation_ids.insert(name.to_owned(), id);
        id
    }

    fn edge(&self, t: &Triple) -> Option<Edge> {
        Some((
            *self.entity_ids.get(&t.head)?,
            *self.relation_ids.get(&t.relation)?,
            *self.entity_ids.get(&t.tail)?,
        ))
    }

    fn triple_of(&self, (h, r, t): Edge) -> Triple {
        Triple {
            head: self.entity_names[h as usize].clone(),
            relation: self.relation_names[r as usize].clone(),
            tail: self.entity_names[t as usize].clone(),
        }
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.edge(t).is_some_and(|e| self.triples.contains(&e))
    }

    pub fn has_entity(&self, name: &str) -> bool {
        self.entity_ids.contains_key(name)
    }

    pub fn has_relation(&self, name: &str) -> bool {
        self.relation_ids.contains_key(name)
    }

    pub fn entity_count(&self) -> usize {
        self.entity_names.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relation_names.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    /// Entity name by interning order.
    pub fn entity(&self, index: usize) -> &str {
        &self.entity_names[index]
    }

    pub fn relation(&self, index: usize) -> &str {
        &self.relation_names[index]
    }

    pub fn entities(&self) -> impl Iterator<Item = &str> {
        self.entity_names.iter().map(String::as_str)
    }

    pub fn relations(&self) -> impl Iterator<Item = &str> {
        self.relation_names.iter().map(String::as_str)
    }

    /// Triples in internal id order (deterministic for a given build order).
    pub fn triples(&self) -> impl Iterator<Item = Triple> + '_ {
        self.triples.iter().map(|&e| self.triple_of(e))
    }

    /// Triples sorted lexicographically by (head, relation, tail).
    pub fn sorted_triples(&self) -> Vec<Triple> {
        let mut all: Vec<Triple> = self.triples().collect();
        all.sort();
        all
    }

    /// TSV in lexicographic order; byte-stable for diffing.
    pub fn serialize(&self) -> String {
        serialize_triples(&self.sorted_triples())
    }

    /// Outgoing `(relation, tail)` pairs of `entity`.
    pub fn out_edges(&self, entity: &str) -> Vec<(String, String)> {
        let Some(&id) = self.entity_ids.get(entity) else {
            return Vec::new();
        };
        self.out_index[id as usize]
            .iter()
            .map(|&(r, t)| {
                (
                    self.relation_names[r as usize].clone(),
                    self.entity_names[t as usize].clone(),
                )
            })
            .collect()
    }

    /// Incoming `(relation, head)` pairs of `entity`.
    pub fn in_edges(&self, entity: &str) -> Vec<(String, String)> {
        let Some(&id) = self.entity_ids.get(entity) else {
            return Vec::new();
        };
        self.in_index[id as usize]
            .iter()
            .map(|&(r, h)| {
                (
                    self.relation_names[r as usize].clone(),
                    self.entity_names[h as usize].clone(),
                )
            })
            .collect()
    }

    /// Number of triples incident to `entity`, counting both directions.
    pub fn degree(&self, entity: &str) -> usize {
        self.entity_ids
            .get(entity)
            .map_or(0, |&id| self.degree_of(id))
    }

    fn degree_of(&self, id: u32) -> usize {
        self.out_index[id as usize].len() + self.in_index[id as usize].len()
    }

    pub fn mean_degree(&self) -> f64 {
        if self.entity_names.is_empty() {
            0.0
        } else {
            2.0 * self.triples.len() as f64 / self.entity_names.len() as f64
        }
    }

    fn neighbors(&self, id: u32) -> BTreeSet<u32> {
        let out = self.out_index[id as usize].iter().map(|&(_, t)| t);
        let inc = self.in_index[id as usize].iter().map(|&(_, h)| h);
        out.chain(inc).collect()
    }

    /// Number of entities adjacent (in either direction, any relation) to
    /// both `a` and `b`.
    pub fn neighbor_overlap(&self, a: &str, b: &str) -> usize {
        let (Some(&ia), Some(&ib)) = (self.entity_ids.get(a), self.entity_ids.get(b)) else {
            return 0;
        };
        let na = self.neighbors(ia);
        if ia == ib {
            return na.len();
        }
        let nb = self.neighbors(ib);
        na.intersection(&nb).count()
    }

    /// True when both adjacency indices reconstruct the triple set exactly
    /// and every id in use is registered.
    pub fn is_consistent(&self) -> bool {
        let n = self.entity_names.len();
        if self.out_index.len() != n || self.in_index.len() != n {
            return false;
        }
        let from_out: BTreeSet<Edge> = self
            .out_index
            .iter()
            .enumerate()
            .flat_map(|(h, set)| set.iter().map(move |&(r, t)| (h as u32, r, t)))
            .collect();
        let from_in: BTreeSet<Edge> = self
            .in_index
            .iter()
            .enumerate()
            .flat_map(|(t, set)| set.iter().map(move |&(r, h)| (h, r, t as u32)))
            .collect();
        let ids_ok = self.triples.iter().all(|&(h, r, t)| {
            (h as usize) < n && (t as usize) < n && (r as usize) < self.relation_names.len()
        });
        ids_ok && from_out == self.triples && from_in == self.triples
    }
}
