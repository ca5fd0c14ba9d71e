//! Tree policy: the depth-preferred UCT score, selection and expansion.

use rand::Rng;

use crate::mcts::{SearchError, SearchParams};
use crate::scalar::Scalar;
use crate::space::SearchSpace;
use crate::tree::{ExperimentTree, NodeId};

/// `value / n + alpha_explore * sqrt(ln(parent_visits) / n)`, where `n` is
/// `visits`, or `alpha_unvisited` for a child never visited.
pub fn uct_dp<S: Scalar>(
    value: S,
    visits: u64,
    parent_visits: u64,
    params: &SearchParams<S>,
) -> Result<S, SearchError> {
    if parent_visits < 1 {
        return Err(SearchError::InvalidParams("parent_visits must be at least 1".into()));
    }
    let n = if visits == 0 { params.alpha_unvisited } else { S::of_count(visits) };
    let explore = (S::of_count(parent_visits).ln() / n).sqrt();
    Ok(value / n + params.alpha_explore * explore)
}

/// Descends from the root by maximal [`uct_dp`], stopping at the first node
/// that has no children, sits at the deepest searchable stage, or has not
/// been visited yet. Exact ties are broken uniformly with `rng`.
pub fn select<S: Scalar, R: Rng + ?Sized>(
    tree: &ExperimentTree<S>,
    params: &SearchParams<S>,
    rng: &mut R,
) -> NodeId {
    let mut current = tree.root();
    loop {
        let node = tree.node(current).expect("descent stays inside the tree");
        if node.children.is_empty() || node.depth >= params.max_depth() || node.n_visits == 0 {
            return current;
        }
        let mut best = Vec::new();
        let mut best_score = S::neg_infinity();
        for &child in &node.children {
            let c = tree.node(child).expect("child ids are valid");
            let score = uct_dp(c.value, c.n_visits, node.n_visits, params)
                .expect("parent has been visited");
            if score > best_score {
                best_score = score;
                best.clear();
                best.push(child);
            } else if score == best_score {
                best.push(child);
            }
        }
        current = match best.len() {
            1 => best[0],
            n => best[rng.random_range(0..n)],
        };
    }
}

/// Creates one child of `id` per insight in the next searchable stage's pool.
/// Returns the existing children unchanged when the node is already expanded.
pub fn expand<S: Scalar>(
    tree: &mut ExperimentTree<S>,
    id: NodeId,
    space: &SearchSpace,
    params: &SearchParams<S>,
) -> Result<Vec<NodeId>, SearchError> {
    let node = tree.node(id)?;
    if node.depth >= params.max_depth() {
        return Err(SearchError::TerminalNode(id));
    }
    if !node.children.is_empty() {
        return Ok(node.children.clone());
    }
    let stage = params.searchable_stages[node.depth];
    let pool = space.stage(stage);
    if pool.is_empty() {
        return Err(SearchError::EmptyPool(stage));
    }
    pool.iter().map(|insight| Ok(tree.add_child(id, insight.clone())?)).collect()
}
