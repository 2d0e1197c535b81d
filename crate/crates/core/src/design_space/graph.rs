//! Dependency DAG between design parameters.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Directed graph over named parameters. An edge `source -> target` means
/// the decoded source value caps the target's upper bound.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScalingGraph {
    nodes: Vec<String>,
    edges: Vec<(usize, usize)>,
}

impl ScalingGraph {
    /// Builds a graph from node names (in declaration order) and edges
    /// given by name. Unknown endpoints are rejected; cycles are only
    /// detected by [`topological_order`].
    pub fn new<S: AsRef<str>>(nodes: &[S], edges: &[(S, S)]) -> Result<Self> {
        let nodes: Vec<String> = nodes.iter().map(|s| s.as_ref().to_owned()).collect();
        let find = |name: &str| {
            nodes
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Config(format!("edge endpoint `{name}` is not a declared parameter")))
        };
        let edges = edges
            .iter()
            .map(|(s, t)| Ok((find(s.as_ref())?, find(t.as_ref())?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ScalingGraph { nodes, edges })
    }

    pub(crate) fn from_indices(nodes: Vec<String>, mut edges: Vec<(usize, usize)>) -> Self {
        edges.sort_unstable();
        edges.dedup();
        ScalingGraph { nodes, edges }
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Whether `node` is the source of at least one edge.
    pub fn has_dependents(&self, node: usize) -> bool {
        self.edges.iter().any(|&(s, _)| s == node)
    }
}

/// Kahn's algorithm, always releasing the earliest-declared ready node, so
/// the result is unique for a given declaration order.
///
/// ```
/// use core_dse::design_space::{topological_order, ScalingGraph};
/// let g = ScalingGraph::new(&["a", "b", "c"], &[("b", "a"), ("c", "b")]).unwrap();
/// assert_eq!(topological_order(&g).unwrap(), vec![2, 1, 0]);
/// ```
pub fn topological_order(graph: &ScalingGraph) -> Result<Vec<usize>> {
    let n = graph.nodes.len();
    let mut indegree = vec![0usize; n];
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(s, t) in &graph.edges {
        indegree[t] += 1;
        out[s].push(t);
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(next) = ready.pop_first() {
        order.push(next);
        for &t in &out[next] {
            indegree[t] -= 1;
            if indegree[t] == 0 {
                ready.insert(t);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    Err(Error::Cycle(find_cycle(graph, &indegree, &out)))
}

// Every node left with positive indegree lies on or downstream of a cycle;
// walking backwards along unresolved in-edges must revisit a node.
fn find_cycle(graph: &ScalingGraph, indegree: &[usize], out: &[Vec<usize>]) -> Vec<String> {
    let n = indegree.len();
    let mut pred = vec![usize::MAX; n];
    for s in 0..n {
        if indegree[s] == 0 {
            continue;
        }
        for &t in &out[s] {
            if indegree[t] > 0 && pred[t] == usize::MAX {
                pred[t] = s;
            }
        }
    }
    let start = (0..n).find(|&i| indegree[i] > 0 && pred[i] != usize::MAX).unwrap_or(0);
    let mut seen = vec![false; n];
    let mut cur = start;
    while !seen[cur] {
        seen[cur] = true;
        cur = pred[cur];
    }
    let mut cycle = vec![cur];
    let mut node = pred[cur];
    while node != cur {
        cycle.push(node);
        node = pred[node];
    }
    cycle.push(cur);
    cycle.reverse();
    cycle.into_iter().map(|i| graph.nodes[i].clone()).collect()
}
