//! Skip graph representation, construction, validation and the canonical dump.
//!
//! Nodes are stored in base-level order. A node's membership vector is kept
//! only up to the level at which it becomes a singleton, so the lists at level
//! `i` are exactly the nodes whose vector has at least `i` bits, grouped by
//! their first `i` bits.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DsgError, Result};

pub type NodeId = u64;

/// Position of a node on the base level.
///
/// Real nodes have `frac == 0`. Dummies sit strictly between two neighbours
/// and get the left neighbour's id plus a binary fraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Key {
    pub id: NodeId,
    pub frac: u64,
}

impl Key {
    pub fn real(id: NodeId) -> Key {
        Key { id, frac: 0 }
    }

    fn wide(self) -> u128 {
        ((self.id as u128) << 64) | self.frac as u128
    }

    fn from_wide(w: u128) -> Key {
        Key { id: (w >> 64) as u64, frac: w as u64 }
    }

    /// A key strictly between `lo` and `hi` that is never an integer, or
    /// `None` when the gap is exhausted.
    pub fn between(lo: Key, hi: Key) -> Option<Key> {
        let cap = Key { id: lo.id.checked_add(1)?, frac: 0 }.min(hi);
        let (a, b) = (lo.wide(), cap.wide());
        if b <= a + 1 {
            return None;
        }
        let mid = Key::from_wide(a + (b - a) / 2);
        (mid.frac != 0).then_some(mid)
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.frac == 0 {
            write!(f, "{}", self.id)
        } else {
            write!(f, "{}+{:#x}", self.id, self.frac)
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct MembershipVector(pub Vec<bool>);

impl MembershipVector {
    /// Bit governing level `level` (1-based).
    pub fn bit(&self, level: usize) -> bool {
        self.0[level - 1]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn prefix(&self, len: usize) -> &[bool] {
        &self.0[..len]
    }

    pub fn common_prefix(&self, other: &MembershipVector) -> usize {
        self.0.iter().zip(&other.0).take_while(|(a, b)| a == b).count()
    }
}

impl fmt::Display for MembershipVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for MembershipVector {
    type Err = DsgError;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(DsgError::Parse(format!("bad membership bit {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(MembershipVector)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeRecord {
    pub key: Key,
    pub is_dummy: bool,
    pub membership: MembershipVector,
    pub timestamps: Vec<u64>,
    pub group_ids: Vec<NodeId>,
    pub dominating: Vec<bool>,
    pub group_base: usize,
}

impl NodeRecord {
    /// A record with default state for a node that becomes a singleton at
    /// level `membership.len()`.
    pub fn fresh(id: NodeId, membership: MembershipVector) -> NodeRecord {
        let top = membership.len();
        NodeRecord {
            key: Key::real(id),
            is_dummy: false,
            membership,
            timestamps: vec![0; top + 1],
            group_ids: vec![id; top + 1],
            dominating: vec![false; top + 1],
            group_base: top,
        }
    }

    pub fn dummy(key: Key, membership: MembershipVector) -> NodeRecord {
        let top = membership.len();
        NodeRecord {
            key,
            is_dummy: true,
            membership,
            timestamps: vec![0; top + 1],
            group_ids: vec![key.id; top + 1],
            dominating: vec![false; top + 1],
            group_base: 0,
        }
    }

    pub fn id(&self) -> NodeId {
        self.key.id
    }

    /// Level at which this node is alone in its list.
    pub fn top_level(&self) -> usize {
        self.membership.len()
    }

    fn resize(&mut self, height: usize) {
        let carry_g = self.group_ids.last().copied().unwrap_or(self.key.id);
        self.timestamps.resize(height, 0);
        self.group_ids.resize(height, carry_g);
        self.dominating.resize(height, false);
        self.group_base = self.group_base.min(height.saturating_sub(1));
    }
}

/// One doubly linked list: its level and member indices in base order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinkedList {
    pub level: usize,
    pub members: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    nodes: Vec<NodeRecord>,
    balance: usize,
}

impl Topology {
    /// Wraps records without checking them; use [`Topology::validate`].
    pub fn from_records(balance: usize, mut nodes: Vec<NodeRecord>) -> Topology {
        let mut t = Topology { nodes: Vec::new(), balance };
        let h = nodes.iter().map(|n| n.top_level() + 1).max().unwrap_or(0);
        for n in &mut nodes {
            n.resize(h);
        }
        t.nodes = nodes;
        t
    }

    /// Builds a topology from `(id, membership)` pairs with default state.
    pub fn from_memberships(balance: usize, spec: &[(NodeId, &str)]) -> Result<Topology> {
        let mut nodes = Vec::with_capacity(spec.len());
        for &(id, bits) in spec {
            nodes.push(NodeRecord::fresh(id, bits.parse()?));
        }
        nodes.sort_by_key(|n| n.key);
        Ok(Topology::from_records(balance, nodes))
    }

    /// Random balanced bisection: every list of size `s` splits into
    /// `ceil(s/2)` zeros and `floor(s/2)` ones, interleaved without runs longer
    /// than `a`.
    pub fn build_initial(ids: &[NodeId], a: usize, seed: u64) -> Result<Topology> {
        if a < 2 {
            return Err(DsgError::BalanceTooSmall(a));
        }
        if ids.is_empty() {
            return Err(DsgError::Empty);
        }
        let mut sorted = ids.to_vec();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(DsgError::DuplicateId(w[0]));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bits = vec![Vec::new(); sorted.len()];
        let all: Vec<usize> = (0..sorted.len()).collect();
        bisect(&all, &mut bits, a, &mut rng);
        let nodes = sorted
            .iter()
            .zip(bits)
            .map(|(&id, b)| NodeRecord::fresh(id, MembershipVector(b)))
            .collect();
        Ok(Topology::from_records(a, nodes))
    }

    pub fn balance(&self) -> usize {
        self.balance
    }

    /// Number of levels, counting the base and the all-singleton top.
    pub fn height(&self) -> usize {
        self.nodes.iter().map(|n| n.top_level() + 1).max().unwrap_or(0)
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [NodeRecord] {
        &mut self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn real_count(&self) -> usize {
        self.nodes.iter().filter(|n| !n.is_dummy).count()
    }

    pub fn dummy_count(&self) -> usize {
        self.nodes.len() - self.real_count()
    }

    pub fn dummy_limit(&self) -> usize {
        self.real_count().div_ceil(self.balance)
    }

    pub fn ids(&self) -> Vec<NodeId> {
        self.nodes.iter().filter(|n| !n.is_dummy).map(|n| n.id()).collect()
    }

    pub fn index_of_key(&self, key: Key) -> Option<usize> {
        self.nodes.binary_search_by_key(&key, |n| n.key).ok()
    }

    /// Index of a real (non-dummy) node.
    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.index_of_key(Key::real(id)).filter(|&i| !self.nodes[i].is_dummy)
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeRecord> {
        self.index_of(id).map(|i| &self.nodes[i])
    }

    pub fn node_mut(&mut self, id: NodeId) -> Option<&mut NodeRecord> {
        self.index_of(id).map(move |i| &mut self.nodes[i])
    }

    /// Endpoint lookup shared by routing and the engine.
    pub fn endpoint(&self, id: NodeId) -> Result<usize> {
        match self.index_of_key(Key::real(id)) {
            Some(i) if self.nodes[i].is_dummy => Err(DsgError::DummyEndpoint(id)),
            Some(i) => Ok(i),
            None => Err(DsgError::UnknownNode(id)),
        }
    }

    /// All lists at `level`, ordered by their prefix.
    pub fn lists_at(&self, level: usize) -> Vec<LinkedList> {
        let mut by_prefix: BTreeMap<&[bool], Vec<usize>> = BTreeMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.top_level() >= level {
                by_prefix.entry(n.membership.prefix(level)).or_default().push(i);
            }
        }
        by_prefix
            .into_values()
            .map(|members| LinkedList { level, members })
            .collect()
    }

    /// Members of node `idx`'s list at `level` (which must not exceed its top).
    pub fn list_of(&self, idx: usize, level: usize) -> Vec<usize> {
        let p = self.nodes[idx].membership.prefix(level);
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.top_level() >= level && n.membership.prefix(level) == p)
            .map(|(i, _)| i)
            .collect()
    }

    /// Highest level whose list holds both nodes, and that list's keys.
    pub fn highest_common_level(&self, u: NodeId, v: NodeId) -> Result<(usize, Vec<Key>)> {
        if u == v {
            return Err(DsgError::SameNode(u));
        }
        let iu = self.endpoint(u)?;
        let iv = self.endpoint(v)?;
        let alpha = self.nodes[iu].membership.common_prefix(&self.nodes[iv].membership);
        let keys = self.list_of(iu, alpha).into_iter().map(|i| self.nodes[i].key).collect();
        Ok((alpha, keys))
    }

    /// Resizes every per-level array to the current height.
    pub fn normalize(&mut self) {
        let h = self.height();
        for n in &mut self.nodes {
            n.resize(h);
        }
    }

    pub(crate) fn insert_record(&mut self, rec: NodeRecord) -> usize {
        let pos = self.nodes.partition_point(|n| n.key < rec.key);
        self.nodes.insert(pos, rec);
        pos
    }

    pub(crate) fn remove_at(&mut self, idx: usize) -> NodeRecord {
        self.nodes.remove(idx)
    }

    pub(crate) fn retain(&mut self, f: impl FnMut(&NodeRecord) -> bool) {
        self.nodes.retain(f);
    }

    pub fn validate(&self) -> ValidationReport {
        let mut out = Vec::new();
        for (i, w) in self.nodes.windows(2).enumerate() {
            if w[0].key == w[1].key {
                out.push(Violation::DuplicateId { key: w[0].key });
            } else if w[0].key > w[1].key {
                out.push(Violation::BaseOrder { position: i + 1 });
            }
        }
        let h = self.height();
        for level in 0..h {
            for list in self.lists_at(level) {
                self.check_list(&list, &mut out);
            }
        }
        if self.dummy_count() > self.dummy_limit() {
            out.push(Violation::DummyBudget { dummies: self.dummy_count(), limit: self.dummy_limit() });
        }
        for n in &self.nodes {
            if n.timestamps.len() != h || n.group_ids.len() != h || n.dominating.len() != h {
                out.push(Violation::ArrayLength { key: n.key });
            }
            if n.group_base > h {
                out.push(Violation::GroupBase { key: n.key, base: n.group_base, height: h });
            }
        }
        ValidationReport { violations: out }
    }

    fn check_list(&self, list: &LinkedList, out: &mut Vec<Violation>) {
        let level = list.level;
        let first = self.nodes[list.members[0]].key;
        if list.members.len() == 1 {
            let n = &self.nodes[list.members[0]];
            if n.top_level() > level {
                out.push(Violation::SingletonExtends { level, key: n.key });
            }
            return;
        }
        let mut bits = Vec::with_capacity(list.members.len());
        for &i in &list.members {
            let n = &self.nodes[i];
            if n.top_level() == level {
                out.push(Violation::Unsplit { level, key: n.key });
                return;
            }
            bits.push(n.membership.bit(level + 1));
        }
        if bits.iter().all(|&b| b == bits[0]) {
            out.push(Violation::OneSidedSplit { level, first });
        }
        let mut start = 0;
        for j in 1..=bits.len() {
            if j == bits.len() || bits[j] != bits[start] {
                if j - start > self.balance {
                    out.push(Violation::ABalance {
                        level,
                        first: self.nodes[list.members[start]].key,
                        run: j - start,
                    });
                }
                start = j;
            }
        }
    }

    pub fn dump(&self) -> TopologyDump {
        TopologyDump {
            height: self.height(),
            balance: self.balance,
            nodes: self
                .nodes
                .iter()
                .map(|n| DumpNode {
                    id: n.key.id,
                    frac: n.key.frac,
                    is_dummy: n.is_dummy,
                    membership: n.membership.to_string(),
                    timestamps: n.timestamps.clone(),
                    group_ids: n.group_ids.clone(),
                    dominating: n.dominating.clone(),
                    group_base: n.group_base,
                })
                .collect(),
        }
    }

    /// Canonical text form: pretty JSON, nodes in key order, trailing newline.
    pub fn export(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.dump()).expect("dump serializes");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Topology> {
        let d: TopologyDump = serde_json::from_str(text).map_err(|e| DsgError::Parse(e.to_string()))?;
        Topology::from_dump(d)
    }

    pub fn from_dump(d: TopologyDump) -> Result<Topology> {
        if d.balance < 2 {
            return Err(DsgError::BalanceTooSmall(d.balance));
        }
        let mut nodes = Vec::with_capacity(d.nodes.len());
        for n in d.nodes {
            nodes.push(NodeRecord {
                key: Key { id: n.id, frac: n.frac },
                is_dummy: n.is_dummy,
                membership: n.membership.parse()?,
                timestamps: n.timestamps,
                group_ids: n.group_ids,
                dominating: n.dominating,
                group_base: n.group_base,
            });
        }
        // Arrays are kept as written so validate() can see bad lengths.
        Ok(Topology { nodes, balance: d.balance })
    }
}

fn bisect(members: &[usize], bits: &mut [Vec<bool>], a: usize, rng: &mut ChaCha8Rng) {
    if members.len() < 2 {
        return;
    }
    let ones = members.len() / 2;
    let seq = interleave(members.len() - ones, ones, a, rng);
    let (mut zs, mut os) = (Vec::new(), Vec::new());
    for (&m, &b) in members.iter().zip(&seq) {
        bits[m].push(b);
        if b { os.push(m) } else { zs.push(m) }
    }
    bisect(&zs, bits, a, rng);
    bisect(&os, bits, a, rng);
}

/// Random order of `zeros` falses and `ones` trues with no run longer than `a`.
fn interleave(zeros: usize, ones: usize, a: usize, rng: &mut ChaCha8Rng) -> Vec<bool> {
    'attempt: for _ in 0..32 {
        let (mut z, mut o) = (zeros, ones);
        let mut seq = Vec::<bool>::with_capacity(zeros + ones);
        let mut run = 0;
        while z + o > 0 {
            let forced = run >= a && seq.last().is_some();
            let mut b = rng.random_range(0..z + o) >= z;
            if forced {
                b = !seq[seq.len() - 1];
            }
            if (b && o == 0) || (!b && z == 0) {
                if forced {
                    continue 'attempt;
                }
                b = !b;
            }
            run = if seq.last() == Some(&b) { run + 1 } else { 1 };
            seq.push(b);
            if b { o -= 1 } else { z -= 1 }
        }
        if run <= a {
            return seq;
        }
    }
    (0..zeros + ones).map(|i| i % 2 == 1 && i / 2 < ones).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DumpNode {
    pub id: NodeId,
    pub frac: u64,
    pub is_dummy: bool,
    pub membership: String,
    pub timestamps: Vec<u64>,
    pub group_ids: Vec<NodeId>,
    pub dominating: Vec<bool>,
    pub group_base: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyDump {
    pub height: usize,
    pub balance: usize,
    pub nodes: Vec<DumpNode>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    BaseOrder { position: usize },
    DuplicateId { key: Key },
    /// A list of two or more nodes containing a node that stops at this level.
    Unsplit { level: usize, key: Key },
    OneSidedSplit { level: usize, first: Key },
    SingletonExtends { level: usize, key: Key },
    /// `run` consecutive members of a level-`level` list share the next bit.
    ABalance { level: usize, first: Key, run: usize },
    DummyBudget { dummies: usize, limit: usize },
    ArrayLength { key: Key },
    GroupBase { key: Key, base: usize, height: usize },
}

impl Violation {
    /// Everything except the dummy budget describes a broken skip graph.
    pub fn is_structural(&self) -> bool {
        !matches!(self, Violation::DummyBudget { .. })
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BaseOrder { position } => write!(f, "base order broken at position {position}"),
            Violation::DuplicateId { key } => write!(f, "duplicate key {key}"),
            Violation::Unsplit { level, key } => write!(f, "level {level}: {key} stops in a list of size > 1"),
            Violation::OneSidedSplit { level, first } => {
                write!(f, "level {level}: list starting at {first} does not split")
            }
            Violation::SingletonExtends { level, key } => {
                write!(f, "level {level}: singleton {key} extends upward")
            }
            Violation::ABalance { level, first, run } => {
                write!(f, "level {level}: a-balance run of {run} starting at {first}")
            }
            Violation::DummyBudget { dummies, limit } => write!(f, "{dummies} dummies exceed limit {limit}"),
            Violation::ArrayLength { key } => write!(f, "{key}: per-level arrays do not match height"),
            Violation::GroupBase { key, base, height } => {
                write!(f, "{key}: group base {base} above height {height}")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn structural(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| v.is_structural())
    }

    pub fn is_structurally_valid(&self) -> bool {
        self.structural().next().is_none()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Per-level left/right neighbour table, built once per query batch.
pub struct NeighborIndex {
    left: Vec<Vec<Option<usize>>>,
    right: Vec<Vec<Option<usize>>>,
}

impl NeighborIndex {
    pub fn new(t: &Topology) -> NeighborIndex {
        let nodes = t.nodes();
        let mut left: Vec<Vec<Option<usize>>> = nodes.iter().map(|n| vec![None; n.top_level() + 1]).collect();
        let mut right = left.clone();
        for level in 0..t.height() {
            let mut last: BTreeMap<&[bool], usize> = BTreeMap::new();
            for (i, n) in nodes.iter().enumerate() {
                if n.top_level() < level {
                    continue;
                }
                if let Some(p) = last.insert(n.membership.prefix(level), i) {
                    right[p][level] = Some(i);
                    left[i][level] = Some(p);
                }
            }
        }
        NeighborIndex { left, right }
    }

    pub fn left(&self, idx: usize, level: usize) -> Option<usize> {
        self.left[idx].get(level).copied().flatten()
    }

    pub fn right(&self, idx: usize, level: usize) -> Option<usize> {
        self.right[idx].get(level).copied().flatten()
    }
}

/// Height allowed after a transformation over `nodes` nodes.
pub fn height_bound(nodes: usize) -> usize {
    (nodes.max(2) as f64).log(1.5).ceil() as usize + 1
}

/// Ids `1..=n`. Id 0 is avoided because a zero group-id yields a
/// non-negative priority for outsiders.
pub fn sequential_ids(n: usize) -> Vec<NodeId> {
    (1..=n as NodeId).collect()
}
