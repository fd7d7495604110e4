//! Graph construction, reachability oracle, and entity categorization.

use super::{EntityCategory, EntityCategoryMap, GraphSpec, GraphTask, TaskGenError};
use crate::rng::{derive_seed, rng_from_seed};
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::BTreeSet;

/// Forward-reachability set from `start`, including `start` itself.
pub fn bfs_reachable(graph: &GraphSpec, start: usize) -> BTreeSet<usize> {
    assert!(start < graph.node_count, "start {start} out of range");
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); graph.node_count];
    for &(s, d) in &graph.edges {
        adj[s].push(d);
    }
    let mut seen = vec![false; graph.node_count];
    let mut queue = std::collections::VecDeque::from([start]);
    seen[start] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen.iter()
        .enumerate()
        .filter(|(_, s)| **s)
        .map(|(i, _)| i)
        .collect()
}

/// Number of directed walks of length exactly `len` from `src` to `dst`.
/// On the acyclic graphs we generate, walks and simple paths coincide.
pub fn count_paths_of_length(graph: &GraphSpec, src: usize, dst: usize, len: usize) -> u64 {
    let n = graph.node_count;
    // counts[v] = number of length-k walks src -> v
    let mut counts = vec![0u64; n];
    counts[src] = 1;
    for _ in 0..len {
        let mut next = vec![0u64; n];
        for &(s, d) in &graph.edges {
            next[d] = next[d].saturating_add(counts[s]);
        }
        counts = next;
    }
    counts[dst]
}

const MAX_ATTEMPTS: u64 = 64;

/// Generates a task with a unique length-`depth` gold path and an
/// unreachable distractor. Deterministic in `rng_seed`.
///
/// The layout is built over a random permutation of the ids: path nodes
/// first, then the distractor and the anchor feeding its branch, then a
/// free pool used for wrong-neighbor branches and clutter. All edges
/// except the anchor's follow the permutation order, so the graph is
/// acyclic and the gold path is structurally the only start-to-target
/// route.
pub fn generate_graph(
    rng_seed: u64,
    node_count: usize,
    depth: usize,
) -> Result<GraphTask, TaskGenError> {
    if !(3..=6).contains(&depth) {
        return Err(TaskGenError::Infeasible(format!(
            "depth {depth} outside 3..=6"
        )));
    }
    if node_count < depth + 3 {
        return Err(TaskGenError::Infeasible(format!(
            "need at least {} nodes for depth {depth}, got {node_count}",
            depth + 3
        )));
    }

    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = rng_from_seed(derive_seed(rng_seed, attempt));
        let mut ids: Vec<usize> = (0..node_count).collect();
        ids.shuffle(&mut rng);

        let path: Vec<usize> = ids[..=depth].to_vec();
        let distractor = ids[depth + 1];
        let anchor = ids[depth + 2];
        let pool: Vec<usize> = ids[depth + 3..].to_vec();

        let mut edges: Vec<(usize, usize)> = path.windows(2).map(|w| (w[0], w[1])).collect();
        // Distractor branch: the anchor points at both the start and the
        // distractor, so the foil sits right beside the question's entry
        // point but stays unreachable (nothing reachable targets the
        // anchor or the distractor).
        edges.push((anchor, path[0]));
        edges.push((anchor, distractor));

        // Wrong-neighbor branches off the gold path, into the pool only.
        // Pool nodes never point back at path nodes, which preserves
        // path uniqueness by construction.
        let mut pool_cursor = 0usize;
        for &src in &path[..depth] {
            if pool_cursor < pool.len() && rng.random_bool(0.75) {
                edges.push((src, pool[pool_cursor]));
                pool_cursor += 1;
            }
        }
        // Clutter among the remaining pool, respecting permutation order.
        let mut referenced: BTreeSet<usize> = edges.iter().flat_map(|&(s, d)| [s, d]).collect();
        referenced.insert(distractor);
        let pool_rest: Vec<usize> = pool[pool_cursor..].to_vec();
        for (j, &u) in pool_rest.iter().enumerate() {
            // chain leftover nodes into the pool so every id is referenced
            let dst = if j + 1 < pool_rest.len() && rng.random_bool(0.5) {
                pool_rest[j + 1]
            } else if pool_cursor > 0 {
                pool[rng.random_range(0..pool_cursor)]
            } else {
                distractor
            };
            if u != dst {
                edges.push((u, dst));
                referenced.insert(u);
                referenced.insert(dst);
            }
        }

        let graph = GraphSpec { node_count, edges };
        let task = GraphTask {
            graph,
            start: path[0],
            target: path[depth],
            distractor,
            gold_path: path,
            depth,
        };
        if task.validate().is_ok() {
            return Ok(task);
        }
    }
    Err(TaskGenError::Infeasible(format!(
        "no valid task after {MAX_ATTEMPTS} attempts (node_count={node_count}, depth={depth})"
    )))
}

/// Partitions all graph nodes for reasoning step `step` (1-based).
///
/// Priority when labels collide: correct-next wins over target (the
/// final-step tie rule), target wins over wrong-neighbor. The target
/// curve in belief reports is recovered from the task's target field,
/// not from this partition.
pub fn categorize_entities(
    task: &GraphTask,
    step: usize,
) -> Result<EntityCategoryMap, TaskGenError> {
    if step < 1 || step > task.depth {
        return Err(TaskGenError::StepOutOfRange {
            step,
            depth: task.depth,
        });
    }
    let correct_next = task.gold_path[step];
    let prev = task.gold_path[step - 1];
    let target = task.target;
    let neighbors: BTreeSet<usize> = task.graph.out_neighbors(prev).into_iter().collect();

    let mut categories = vec![EntityCategory::Other; task.graph.node_count];
    for (node, slot) in categories.iter_mut().enumerate() {
        *slot = if node == correct_next {
            EntityCategory::CorrectNext
        } else if node == target {
            EntityCategory::Target
        } else if neighbors.contains(&node) {
            EntityCategory::WrongNeighbor
        } else {
            EntityCategory::Other
        };
    }
    Ok(EntityCategoryMap { step, categories })
}
