//! Ground-truth computations: communication graph, working-set numbers,
//! exact medians and the timestamp connectivity check.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use serde::Serialize;

use crate::error::{DsgError, Result};
use crate::topology::{NodeId, Topology};

#[derive(Clone, Debug, Default)]
pub struct CommunicationGraph {
    edges: BTreeMap<(NodeId, NodeId), Vec<u64>>,
}

fn pair(u: NodeId, v: NodeId) -> (NodeId, NodeId) {
    (u.min(v), u.max(v))
}

impl CommunicationGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, u: NodeId, v: NodeId, time: u64) -> Result<()> {
        if u == v {
            return Err(DsgError::SameNode(u));
        }
        let h = self.edges.entry(pair(u, v)).or_default();
        if h.last().is_some_and(|&l| l >= time) {
            return Err(DsgError::Config(format!("time {time} not after previous contact of ({u},{v})")));
        }
        h.push(time);
        Ok(())
    }

    pub fn last_time(&self, u: NodeId, v: NodeId) -> Option<u64> {
        self.edges.get(&pair(u, v)).and_then(|h| h.last().copied())
    }

    pub fn history(&self, u: NodeId, v: NodeId) -> &[u64] {
        self.edges.get(&pair(u, v)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Adjacency over edges with at least one contact in `[from, to]`.
    fn window(&self, from: u64, to: u64) -> HashMap<NodeId, Vec<NodeId>> {
        let mut adj: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
        for (&(a, b), times) in &self.edges {
            let lo = times.partition_point(|&x| x < from);
            if lo < times.len() && times[lo] <= to {
                adj.entry(a).or_default().push(b);
                adj.entry(b).or_default().push(a);
            }
        }
        adj
    }

    /// Nodes reachable from any of `sources` in the window graph.
    pub fn reachable(&self, sources: &[NodeId], from: u64, to: u64) -> HashSet<NodeId> {
        let adj = self.window(from, to);
        bfs(&adj, sources)
    }

    /// Working-set number of `(u, v)` at time `now`; `n` on first contact.
    pub fn working_set_number(&self, u: NodeId, v: NodeId, now: u64, n: u64) -> u64 {
        match self.last_time(u, v) {
            None => n,
            Some(last) => self.reachable(&[u, v], last, now).len() as u64,
        }
    }
}

fn bfs(adj: &HashMap<NodeId, Vec<NodeId>>, sources: &[NodeId]) -> HashSet<NodeId> {
    let mut seen: HashSet<NodeId> = sources.iter().copied().collect();
    let mut q: VecDeque<NodeId> = sources.iter().copied().collect();
    while let Some(x) = q.pop_front() {
        for &y in adj.get(&x).map(Vec::as_slice).unwrap_or(&[]) {
            if seen.insert(y) {
                q.push_back(y);
            }
        }
    }
    seen
}

/// Sum of `log2 T` over a request history.
pub fn ws_bound(ts: &[u64]) -> f64 {
    ts.iter().map(|&t| (t.max(1) as f64).log2()).sum()
}

/// Element at sorted position `ceil(n/2)` (1-based), ties ordered by origin.
pub fn exact_median<T: Ord + Clone>(values: &[(T, NodeId)]) -> Result<(T, NodeId, usize)> {
    if values.is_empty() {
        return Err(DsgError::Empty);
    }
    let mut v: Vec<&(T, NodeId)> = values.iter().collect();
    v.sort();
    let rank = values.len().div_ceil(2);
    let (val, origin) = v[rank - 1];
    Ok((val.clone(), *origin, rank))
}

/// 1-based position of `(value, origin)` in the sorted multiset.
pub fn rank_of<T: Ord>(values: &[(T, NodeId)], value: &T, origin: NodeId) -> usize {
    values.iter().filter(|(x, o)| (x, *o) < (value, origin)).count() + 1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConnectivityViolation {
    pub level: usize,
    pub group: NodeId,
    pub member: NodeId,
    pub disconnected: Vec<NodeId>,
}

/// For each `(level, member)`, every group mate stamped later than the member
/// must lie in one component of the graph of contacts in `[T_member, now]`.
pub fn connectivity_check(
    t: &Topology,
    g: &CommunicationGraph,
    now: u64,
    samples: &[(usize, NodeId)],
) -> Vec<ConnectivityViolation> {
    let mut out = Vec::new();
    for &(level, x) in samples {
        let Some(rx) = t.node(x) else { continue };
        if level >= rx.group_ids.len() || rx.top_level() < level {
            continue;
        }
        let gid = rx.group_ids[level];
        let tx = rx.timestamps[level];
        let later: Vec<NodeId> = t
            .nodes()
            .iter()
            .filter(|y| !y.is_dummy && y.top_level() >= level && y.group_ids[level] == gid)
            .filter(|y| y.timestamps[level] > tx)
            .map(|y| y.id())
            .collect();
        if later.len() < 2 {
            continue;
        }
        let comp = g.reachable(&later[..1], tx, now);
        let disconnected: Vec<NodeId> = later.iter().copied().filter(|y| !comp.contains(y)).collect();
        if !disconnected.is_empty() {
            out.push(ConnectivityViolation { level, group: gid, member: x, disconnected });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: NodeId = 1;
    const B: NodeId = 2;
    const C: NodeId = 3;
    const D: NodeId = 4;
    const E: NodeId = 5;
    const F: NodeId = 6;
    const K: NodeId = 11;
    const U: NodeId = 21;
    const V: NodeId = 22;

    fn two_clusters() -> CommunicationGraph {
        let mut g = CommunicationGraph::new();
        for (t, (x, y)) in [(U, F), (U, V), (U, E), (E, A), (B, C), (A, K), (C, D)].into_iter().enumerate() {
            g.record(x, y, t as u64 + 1).unwrap();
        }
        g
    }

    #[test]
    fn record_creates_then_extends() {
        let mut g = CommunicationGraph::new();
        g.record(1, 2, 1).unwrap();
        assert_eq!(g.edge_count(), 1);
        g.record(2, 1, 4).unwrap();
        assert_eq!(g.history(1, 2), &[1, 4]);
        assert_eq!(g.last_time(2, 1), Some(4));
        assert!(g.record(1, 1, 5).is_err());
    }

    #[test]
    fn two_cluster_working_set_is_five() {
        let g = two_clusters();
        assert_eq!(g.working_set_number(U, V, 8, 64), 5);
    }

    #[test]
    fn first_contact_defaults_to_n() {
        let g = two_clusters();
        assert_eq!(g.working_set_number(B, K, 8, 64), 64);
    }

    #[test]
    fn star_working_set_grows_by_one_per_contact() {
        for k in 2..10u64 {
            let mut g = CommunicationGraph::new();
            g.record(U, V, 1).unwrap();
            for i in 1..k {
                g.record(U, 100 + i, 1 + i).unwrap();
            }
            assert_eq!(g.working_set_number(U, V, 1 + k, 1000), k + 1);
        }
    }

    #[test]
    fn ws_bound_sums_logs() {
        assert_eq!(ws_bound(&[8]), 3.0);
        assert_eq!(ws_bound(&[1, 1, 1]), 0.0);
        assert!((ws_bound(&[8, 5, 2]) - (3.0 + 5f64.log2() + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn exact_median_small() {
        assert_eq!(exact_median(&[(5, 1)]).unwrap(), (5, 1, 1));
        let v = [(1, 1), (2, 2), (3, 3), (4, 4)];
        assert_eq!(exact_median(&v).unwrap(), (2, 2, 2));
        assert!(exact_median::<i64>(&[]).is_err());
        assert_eq!(rank_of(&v, &3, 3), 3);
    }

    #[test]
    fn fresh_topology_has_no_connectivity_violations() {
        let t = Topology::build_initial(&crate::topology::sequential_ids(16), 3, 1).unwrap();
        let g = CommunicationGraph::new();
        let samples: Vec<_> = (1..=16).flat_map(|x| (0..t.height()).map(move |l| (l, x))).collect();
        assert!(connectivity_check(&t, &g, 1, &samples).is_empty());
    }
}
