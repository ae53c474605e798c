//! Standard top-down greedy skip graph routing.

use serde::Serialize;

use crate::error::Result;
use crate::topology::{Key, NeighborIndex, NodeId, Topology};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RoutePath {
    pub hops: Vec<Key>,
    pub rounds: u64,
    pub alpha: usize,
    /// Level moves plus level drops; used by the termination bound.
    pub steps: usize,
}

impl RoutePath {
    /// Intermediate nodes on the path.
    pub fn distance(&self) -> usize {
        self.hops.len().saturating_sub(2)
    }
}

pub fn route(t: &Topology, src: NodeId, dst: NodeId) -> Result<RoutePath> {
    route_with(t, &NeighborIndex::new(t), src, dst)
}

pub fn route_with(t: &Topology, nb: &NeighborIndex, src: NodeId, dst: NodeId) -> Result<RoutePath> {
    let s = t.endpoint(src)?;
    let d = t.endpoint(dst)?;
    let nodes = t.nodes();
    let target = nodes[d].key;
    let rightward = target > nodes[s].key;
    let mut cur = s;
    let mut level = nodes[s].top_level();
    let mut hops = vec![nodes[s].key];
    let mut steps = 0;
    while cur != d {
        let next = if rightward { nb.right(cur, level) } else { nb.left(cur, level) };
        let ok = next.filter(|&n| if rightward { nodes[n].key <= target } else { nodes[n].key >= target });
        steps += 1;
        match ok {
            Some(n) => {
                cur = n;
                hops.push(nodes[n].key);
            }
            None => {
                // level 0 always reaches the target since it holds every node
                level -= 1;
            }
        }
    }
    let alpha = if s == d { nodes[s].top_level() } else { nodes[s].membership.common_prefix(&nodes[d].membership) };
    Ok(RoutePath { rounds: (hops.len() - 1) as u64, hops, alpha, steps })
}
