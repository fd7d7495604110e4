//! Graph-traversal QA task generation.
//!
//! Produces multi-hop reachability questions over randomly generated
//! directed graphs: a start entity, a reachable target, an unreachable
//! distractor, and the gold traversal path. Tasks come in two renderings,
//! a templated natural-language form ("Every dax is a wug.") and a
//! compact symbolic form over a 40-token vocabulary where every entity is
//! a single token. Ground-truth metadata (gold path, per-step entity
//! categories) is kept alongside so probes can score internal beliefs
//! exactly.

mod dataset;
mod graph;
pub(crate) mod render;
mod vocab;

pub use dataset::{
    emit_dataset, format_record, generate_record, natural_text_of, parse_record, read_dataset,
    DatasetParams, DatasetRecord, SplitSizes,
};
pub use graph::{bfs_reachable, categorize_entities, count_paths_of_length, generate_graph};
pub use render::{
    natural_text, render_natural, render_natural_named, render_symbolic, NaturalVocab, LEXICON,
};
pub use vocab::{SymbolicVocab, TokenRole};

use thiserror::Error;

/// A directed graph over `0..node_count` entity ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphSpec {
    pub node_count: usize,
    /// Directed `(source, destination)` pairs; no self-loops or duplicates.
    pub edges: Vec<(usize, usize)>,
}

impl GraphSpec {
    /// Out-neighbors of `node` in edge order.
    pub fn out_neighbors(&self, node: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|(s, _)| *s == node)
            .map(|(_, d)| *d)
            .collect()
    }

    /// Checks self-loop, duplicate-edge, id-range, and coverage invariants.
    /// `query_nodes` are ids referenced outside the edge list (start,
    /// target, distractor).
    pub fn validate(&self, query_nodes: &[usize]) -> Result<(), TaskGenError> {
        let mut seen = std::collections::BTreeSet::new();
        for &(s, d) in &self.edges {
            if s == d {
                return Err(TaskGenError::InvalidGraph(format!("self-loop at node {s}")));
            }
            if s >= self.node_count || d >= self.node_count {
                return Err(TaskGenError::InvalidGraph(format!(
                    "edge ({s},{d}) out of range for {} nodes",
                    self.node_count
                )));
            }
            if !seen.insert((s, d)) {
                return Err(TaskGenError::InvalidGraph(format!(
                    "duplicate edge ({s},{d})"
                )));
            }
        }
        let mut referenced = vec![false; self.node_count];
        for &(s, d) in &self.edges {
            referenced[s] = true;
            referenced[d] = true;
        }
        for &q in query_nodes {
            if q >= self.node_count {
                return Err(TaskGenError::InvalidGraph(format!(
                    "query node {q} out of range"
                )));
            }
            referenced[q] = true;
        }
        if let Some(orphan) = referenced.iter().position(|r| !r) {
            return Err(TaskGenError::InvalidGraph(format!(
                "node {orphan} referenced by no edge and no query"
            )));
        }
        Ok(())
    }
}

/// One reachability question with its gold traversal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphTask {
    pub graph: GraphSpec,
    pub start: usize,
    pub target: usize,
    /// Two-option foil; never reachable from `start`.
    pub distractor: usize,
    /// `gold_path[0] == start`, `gold_path[depth] == target`.
    pub gold_path: Vec<usize>,
    pub depth: usize,
}

impl GraphTask {
    /// Checks every structural invariant, including BFS unreachability of
    /// the distractor and uniqueness of the gold path at its length.
    pub fn validate(&self) -> Result<(), TaskGenError> {
        self.graph
            .validate(&[self.start, self.target, self.distractor])?;
        if self.gold_path.len() != self.depth + 1 {
            return Err(TaskGenError::InvalidGraph(format!(
                "gold path has {} nodes for depth {}",
                self.gold_path.len(),
                self.depth
            )));
        }
        if self.gold_path.first() != Some(&self.start)
            || self.gold_path.last() != Some(&self.target)
        {
            return Err(TaskGenError::InvalidGraph(
                "gold path endpoints mismatch".into(),
            ));
        }
        let edge_set: std::collections::BTreeSet<(usize, usize)> =
            self.graph.edges.iter().copied().collect();
        for w in self.gold_path.windows(2) {
            if !edge_set.contains(&(w[0], w[1])) {
                return Err(TaskGenError::InvalidGraph(format!(
                    "gold path step {}->{} is not an edge",
                    w[0], w[1]
                )));
            }
        }
        let reach = bfs_reachable(&self.graph, self.start);
        if reach.contains(&self.distractor) {
            return Err(TaskGenError::InvalidGraph(
                "distractor reachable from start".into(),
            ));
        }
        if !reach.contains(&self.target) {
            return Err(TaskGenError::InvalidGraph(
                "target unreachable from start".into(),
            ));
        }
        let n_paths = count_paths_of_length(&self.graph, self.start, self.target, self.depth);
        if n_paths != 1 {
            return Err(TaskGenError::InvalidGraph(format!(
                "{n_paths} start->target paths of length {}",
                self.depth
            )));
        }
        Ok(())
    }
}

/// Category of a graph entity relative to one reasoning step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntityCategory {
    /// The gold next hop for this step.
    CorrectNext,
    /// Adjacent to the previous hop but off the gold path.
    WrongNeighbor,
    /// The final answer entity.
    Target,
    Other,
}

impl EntityCategory {
    pub fn label(&self) -> &'static str {
        match self {
            EntityCategory::CorrectNext => "correct_next",
            EntityCategory::WrongNeighbor => "wrong_neighbor",
            EntityCategory::Target => "target",
            EntityCategory::Other => "other",
        }
    }

    pub const ALL: [EntityCategory; 4] = [
        EntityCategory::CorrectNext,
        EntityCategory::WrongNeighbor,
        EntityCategory::Target,
        EntityCategory::Other,
    ];
}

/// The entity partition for one 1-based reasoning step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityCategoryMap {
    pub step: usize,
    /// Indexed by node id; every node gets exactly one category.
    pub categories: Vec<EntityCategory>,
}

impl EntityCategoryMap {
    pub fn nodes_in(&self, cat: EntityCategory) -> Vec<usize> {
        self.categories
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == cat)
            .map(|(i, _)| i)
            .collect()
    }
}

/// One rendered training sequence plus the entity-to-token map probes need.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedTask {
    pub prompt_tokens: Vec<u32>,
    /// One span of token ids per reasoning step.
    pub cot_steps: Vec<Vec<u32>>,
    pub answer_tokens: Vec<u32>,
    /// Node id -> token id(s) of its surface form. Single-token in the
    /// symbolic rendering.
    pub entity_tokens: Vec<Vec<u32>>,
}

impl RenderedTask {
    /// prompt ∥ cot ∥ answer as one training sequence.
    pub fn full_sequence(&self) -> Vec<u32> {
        let mut seq = self.prompt_tokens.clone();
        for step in &self.cot_steps {
            seq.extend_from_slice(step);
        }
        seq.extend_from_slice(&self.answer_tokens);
        seq
    }
}

#[derive(Debug, Error)]
pub enum TaskGenError {
    #[error("generation infeasible: {0}")]
    Infeasible(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("step {step} out of range 1..={depth}")]
    StepOutOfRange { step: usize, depth: usize },
    #[error("vocabulary overflow: {needed} entities but only {available} node symbols")]
    VocabOverflow { needed: usize, available: usize },
    #[error("malformed dataset record: {0}")]
    MalformedRecord(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
