//! Hand-built scenarios with known outcomes.
//!
//! `walkthrough` is a 13-node graph where nodes U (21) and V (22) talk at
//! time 8 while B, D, G sit in U's group, E in V's, and F/I and H/J form
//! two further groups. Node ids follow alphabet positions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::engine::{Engine, Priority, TransformReport, TransformRequest};
use crate::error::{DsgError, Result};
use crate::topology::{NodeId, Topology};

pub const U: NodeId = 21;
pub const V: NodeId = 22;

/// One node of a scenario: membership bits, per-level group ids and
/// timestamps (shorter arrays extend with their last value or zero).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioNode {
    pub id: NodeId,
    pub membership: String,
    pub group_ids: Vec<NodeId>,
    #[serde(default)]
    pub timestamps: Vec<u64>,
    #[serde(default)]
    pub group_base: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub balance: usize,
    pub nodes: Vec<ScenarioNode>,
    pub u: NodeId,
    pub v: NodeId,
    pub time: u64,
    /// Median values forced on the list holding `u` and `v`, by level.
    #[serde(default)]
    pub pinned: BTreeMap<usize, i64>,
    #[serde(default)]
    pub expect: Expectations,
}

/// Facts the transformed graph must show.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Expectations {
    /// `(level, ids)`: the 0-side of the split of the list holding `u`.
    #[serde(default)]
    pub zero_side: Vec<(usize, Vec<NodeId>)>,
    /// `(id, level, value)` timestamps.
    #[serde(default)]
    pub timestamps: Vec<(NodeId, usize, u64)>,
    /// `(id, level, group)` group ids.
    #[serde(default)]
    pub group_ids: Vec<(NodeId, usize, NodeId)>,
}

impl Expectations {
    /// Mismatches between the expectations and a finished transformation.
    pub fn check(&self, t: &Topology, report: &TransformReport) -> Vec<String> {
        let mut out = Vec::new();
        for (level, want) in &self.zero_side {
            let got = report.medians.iter().find(|m| m.level == *level && m.zero_side.contains(&report.u));
            let mut want = want.clone();
            want.sort_unstable();
            match got {
                Some(m) => {
                    let mut got = m.zero_side.clone();
                    got.sort_unstable();
                    if got != want {
                        out.push(format!("level {level}: 0-side {got:?}, expected {want:?}"));
                    }
                }
                None => out.push(format!("level {level}: no median split holds {}", report.u)),
            }
        }
        for &(id, level, want) in &self.timestamps {
            let got = t.node(id).and_then(|r| r.timestamps.get(level).copied());
            if got != Some(want) {
                out.push(format!("T of {id} at level {level}: {got:?}, expected {want}"));
            }
        }
        for &(id, level, want) in &self.group_ids {
            let got = t.node(id).and_then(|r| r.group_ids.get(level).copied());
            if got != Some(want) {
                out.push(format!("G of {id} at level {level}: {got:?}, expected {want}"));
            }
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioOutcome {
    pub name: String,
    pub scenario_match: bool,
    pub mismatches: Vec<String>,
    pub report: TransformReport,
}

impl Scenario {
    pub fn topology(&self) -> Result<Topology> {
        let spec: Vec<(NodeId, &str)> = self.nodes.iter().map(|n| (n.id, n.membership.as_str())).collect();
        let mut t = Topology::from_memberships(self.balance, &spec)?;
        let h = t.height();
        for n in &self.nodes {
            let r = t.node_mut(n.id).ok_or(DsgError::UnknownNode(n.id))?;
            if n.group_ids.is_empty() || n.group_ids.len() > h || n.timestamps.len() > h {
                return Err(DsgError::LengthMismatch { expected: h, got: n.group_ids.len().max(n.timestamps.len()) });
            }
            let last = *n.group_ids.last().expect("non-empty");
            r.group_ids = n.group_ids.clone();
            r.group_ids.resize(h, last);
            r.timestamps = n.timestamps.clone();
            r.timestamps.resize(h, 0);
            r.group_base = n.group_base;
        }
        Ok(t)
    }

    pub fn request(&self) -> TransformRequest {
        let mut req = TransformRequest::new(self.u, self.v, self.time);
        req.pinned = self.pinned.iter().map(|(&l, &m)| (l, Priority::Finite(m))).collect();
        req
    }

    /// Applies the request to the scenario graph and checks expectations.
    pub fn run(&self, seed: u64) -> Result<(Topology, ScenarioOutcome)> {
        let mut t = self.topology()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let report = Engine::default().transform(&mut t, &self.request(), &mut rng)?;
        let mismatches = self.expect.check(&t, &report);
        let outcome = ScenarioOutcome { name: self.name.clone(), scenario_match: mismatches.is_empty(), mismatches, report };
        Ok((t, outcome))
    }

    pub fn parse(text: &str) -> Result<Scenario> {
        serde_json::from_str(text).map_err(|e| DsgError::Parse(e.to_string()))
    }
}

fn node(id: NodeId, membership: &str, group_ids: &[NodeId], timestamps: &[u64], group_base: usize) -> ScenarioNode {
    ScenarioNode {
        id,
        membership: membership.into(),
        group_ids: group_ids.to_vec(),
        timestamps: timestamps.to_vec(),
        group_base,
    }
}

/// The 13-node walkthrough at time 8 with medians 2 and 5 pinned on the
/// first two levels.
pub fn walkthrough() -> Scenario {
    Scenario {
        name: "walkthrough".into(),
        balance: 3,
        nodes: vec![
            node(2, "00000", &[21, 21, 2], &[0, 2, 2, 3, 4, 4], 1),
            node(3, "001", &[3], &[], 3),
            node(4, "010", &[21, 21, 4], &[0, 2, 2, 2], 1),
            node(5, "100", &[22, 22, 22, 5], &[0, 0, 5, 5], 2),
            node(6, "110", &[6], &[0, 2, 2, 2], 2),
            node(7, "011", &[21, 21, 4, 7], &[0, 2, 2, 2], 1),
            node(8, "10100", &[10, 10, 10, 10, 8], &[0, 2, 2, 2, 2, 2], 3),
            node(9, "1110", &[6, 6, 6, 9], &[0, 2, 2, 2, 2], 2),
            node(10, "10101", &[10], &[0, 2, 2, 2, 2, 2], 3),
            node(11, "0001", &[11], &[], 4),
            node(12, "1111", &[12], &[], 4),
            node(U, "00001", &[21], &[0, 3, 3, 4, 4, 4], 1),
            node(V, "1011", &[22], &[0, 0, 6, 6, 6], 2),
        ],
        u: U,
        v: V,
        time: 8,
        pinned: BTreeMap::from([(0, 2), (1, 5)]),
        expect: Expectations {
            zero_side: vec![(0, vec![U, V, 5, 2, 7, 4])],
            timestamps: vec![(2, 2, 4), (5, 2, 5)],
            group_ids: vec![(2, 2, 2), (7, 2, 2), (4, 2, 2)],
        },
    }
}

/// Built-in scenarios by name.
pub fn builtin(name: &str) -> Option<Scenario> {
    match name {
        "walkthrough" => Some(walkthrough()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::compute_priorities;

    #[test]
    fn walkthrough_is_valid() {
        let t = walkthrough().topology().unwrap();
        assert_eq!(t.height(), 6);
        assert!(t.validate().is_valid(), "{}", t.validate());
    }

    #[test]
    fn priorities_at_seven() {
        let t = walkthrough().topology().unwrap();
        let p = compute_priorities(&t, U, V, 7).unwrap();
        assert_eq!(p.alpha, 0);
        let get = |id| p.values[p.members.iter().position(|&x| x == id).unwrap()];
        for (id, want) in [(8, -68), (10, -68), (6, -40), (9, -40), (2, 2), (4, 2), (7, 2), (5, 5), (3, -21), (11, -77), (12, -84)] {
            assert_eq!(get(id), Priority::Finite(want), "node {id}");
        }
        assert_eq!(get(U), Priority::Infinite);
        assert_eq!(get(V), Priority::Infinite);
    }

    #[test]
    fn walkthrough_matches() {
        let (t, out) = walkthrough().run(1).unwrap();
        assert!(out.scenario_match, "{:?}", out.mismatches);
        assert!(t.validate().is_structurally_valid());
    }

    #[test]
    fn mismatch_is_reported() {
        let mut s = walkthrough();
        s.expect.timestamps.push((2, 2, 99));
        let (_, out) = s.run(1).unwrap();
        assert!(!out.scenario_match);
        assert_eq!(out.mismatches.len(), 1);
    }

    #[test]
    fn scenario_round_trips_through_json() {
        let s = walkthrough();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(Scenario::parse(&text).unwrap(), s);
    }
}
