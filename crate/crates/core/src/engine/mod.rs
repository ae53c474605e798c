//! The transformation that moves two communicating nodes into a common
//! size-2 list while keeping recently communicating groups together.
//!
//! A request `(u, v)` at time `t` rebuilds every list above the highest level
//! `alpha` the two share. Each list is split around an approximate median of
//! node priorities; group ids, dominating flags, group bases and timestamps
//! are then updated, and dummies restore the balance property.

mod priority;
mod repair;

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::Rng;
use serde::Serialize;

use crate::amf::{approx_median, broadcast, distributed_sum, BalancedSkipList};
use crate::congest::{FieldSizes, Traffic};
use crate::error::{DsgError, Result};
use crate::topology::{height_bound, MembershipVector, NodeId, NodeRecord, Topology};

pub use priority::{
    detect_g_s, outsider_priority, split_list, BandRule, MedianPivot, Priority, SplitCounters, SplitDecision,
    SplitKind, SplitMember,
};
pub use repair::{add_node, normalize_structure, remove_node, repair_a_balance, RepairOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct EngineConfig {
    pub band_rule: BandRule,
    /// Cap on dummy insertions per repair pass.
    pub repair_limit: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { band_rule: BandRule::PriorityRange, repair_limit: 10_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransformRequest {
    pub u: NodeId,
    pub v: NodeId,
    pub time: u64,
    /// Median overrides for the list holding `u` and `v`, by list level.
    pub pinned: BTreeMap<usize, Priority>,
}

impl TransformRequest {
    pub fn new(u: NodeId, v: NodeId, time: u64) -> Self {
        TransformRequest { u, v, time, pinned: BTreeMap::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MedianRecord {
    pub level: usize,
    pub leftmost: NodeId,
    pub size: usize,
    pub value: Priority,
    pub pinned: bool,
    pub exact: bool,
    pub kind: SplitKind,
    pub g_s: Option<NodeId>,
    /// Members sent to the 0-side, in base order.
    pub zero_side: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TransformReport {
    pub u: NodeId,
    pub v: NodeId,
    pub time: u64,
    pub alpha: usize,
    /// Level of the size-2 list holding `u` and `v` afterwards.
    pub direct_link_level: usize,
    pub height_before: usize,
    pub height_after: usize,
    pub traffic: Traffic,
    pub medians: Vec<MedianRecord>,
    pub splits: SplitCounters,
    pub priorities: Vec<(NodeId, Priority)>,
    pub dummies_destroyed: usize,
    pub dummies_inserted: usize,
    /// Times the pair moved up a level to make room for a dummy.
    pub pair_lifts: usize,
    pub repair_exhausted: bool,
    pub normalization_fixes: usize,
    pub sign_violations: usize,
    pub monotonicity_violations: usize,
    pub lower_group_update: bool,
}

impl TransformReport {
    pub fn rho(&self) -> u64 {
        self.traffic.rounds
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Priorities {
    pub alpha: usize,
    /// Real members of the list at `alpha`, in base order.
    pub members: Vec<NodeId>,
    pub values: Vec<Priority>,
    /// Members of either communicating group.
    pub merged: Vec<bool>,
}

/// Highest level at or below both tops where `x` and `w` share a group id.
fn shared_group_level(x: &NodeRecord, w: &NodeRecord, from: usize) -> usize {
    let top = x.top_level().min(w.top_level());
    (from..=top).rev().find(|&c| x.group_ids[c] == w.group_ids[c]).unwrap_or(from)
}

/// Priorities of the real members of the list at the highest common level.
pub fn compute_priorities(t: &Topology, u: NodeId, v: NodeId, time: u64) -> Result<Priorities> {
    let (alpha, keys) = t.highest_common_level(u, v)?;
    let ru = t.node(u).expect("checked");
    let rv = t.node(v).expect("checked");
    let (gu, gv) = (ru.group_ids[alpha], rv.group_ids[alpha]);
    let mut out = Priorities { alpha, members: Vec::new(), values: Vec::new(), merged: Vec::new() };
    for k in keys {
        let x = &t.nodes()[t.index_of_key(k).expect("listed")];
        if x.is_dummy {
            continue;
        }
        let g = x.group_ids[alpha];
        let (p, merged) = if x.id() == u || x.id() == v {
            (Priority::Infinite, true)
        } else if g == gu || g == gv {
            let cu = (g == gu).then(|| shared_group_level(x, ru, alpha));
            let cv = (g == gv).then(|| shared_group_level(x, rv, alpha));
            let (w, c) = match (cu, cv) {
                (Some(a), Some(b)) if b > a => (rv, b),
                (Some(a), _) => (ru, a),
                (None, Some(b)) => (rv, b),
                (None, None) => unreachable!(),
            };
            // A zero stamp comes from stale ids below the group base.
            (Priority::Finite((x.timestamps[c].min(w.timestamps[c]) as i64).max(1)), true)
        } else {
            let stamp = x.timestamps.get(alpha + 1).copied().unwrap_or(0);
            (outsider_priority(g, time, stamp), false)
        };
        out.members.push(x.id());
        out.values.push(p);
        out.merged.push(merged);
    }
    Ok(out)
}

enum Rule {
    Fixed,
    Leftmost,
    Keep(NodeId),
}

struct Part {
    rule: Rule,
    members: Vec<usize>,
}

struct Task {
    level: usize,
    members: Vec<usize>,
    prio: Vec<Priority>,
    has_uv: bool,
    sl: Option<BalancedSkipList>,
}

/// Per-participant working state, indexed by base-order position in the
/// list at `alpha`.
struct Work {
    ids: Vec<NodeId>,
    old: Vec<NodeRecord>,
    merged: Vec<bool>,
    prio: Vec<Priority>,
    g: Vec<Vec<NodeId>>,
    dom: Vec<Vec<bool>>,
    bits: Vec<Vec<bool>>,
    med: Vec<BTreeMap<usize, Priority>>,
}

fn skiplist_traffic(sl: &BalancedSkipList, rounds: u64, bits: u32) -> Traffic {
    let messages: usize = sl.levels().iter().skip(1).map(|l| 2 * l.len()).sum();
    Traffic::new(rounds, messages as u64, bits)
}

fn gather_and_broadcast(sl: &BalancedSkipList, chunks: u64, bits: u32) -> Traffic {
    let b = broadcast(sl, chunks, bits);
    Traffic::new(broadcast(sl, 1, bits).rounds, sl.height() as u64, bits).then(b)
}

#[derive(Clone, Debug, Default)]
pub struct Engine {
    pub config: EngineConfig,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Self {
        Engine { config }
    }

    pub fn transform(&self, t: &mut Topology, req: &TransformRequest, rng: &mut impl Rng) -> Result<TransformReport> {
        let (u, v, time) = (req.u, req.v, req.time);
        let a = t.balance();
        let (alpha, _) = t.highest_common_level(u, v)?;
        let uprefix = t.node(u).expect("checked").membership.prefix(alpha).to_vec();
        let in_list = |n: &NodeRecord| n.top_level() >= alpha && n.membership.prefix(alpha) == &uprefix[..];
        let before = t.len();
        t.retain(|n| !(n.is_dummy && in_list(n)));
        let dummies_destroyed = before - t.len();
        t.normalize();
        let height_before = t.height();

        let pr = compute_priorities(t, u, v, time)?;
        let n_total = t.len();
        let max_id = t.nodes().iter().map(|n| n.id()).max().unwrap_or(0);
        // Levels stay below the height bound; twice it leaves headroom.
        let sizes = FieldSizes::new(max_id, time, 2 * height_bound(n_total), n_total);
        let mut sign_violations = 0;
        for (i, p) in pr.values.iter().enumerate() {
            let bad = match p {
                Priority::Infinite => false,
                Priority::Finite(m) => (pr.merged[i] && *m <= 0) || (!pr.merged[i] && *m >= 0),
            };
            sign_violations += bad as usize;
        }

        let n = pr.members.len();
        let old: Vec<NodeRecord> = pr.members.iter().map(|&id| t.node(id).expect("member").clone()).collect();
        let mut w = Work {
            ids: pr.members.clone(),
            g: old.iter().map(|r| r.group_ids[..=alpha].to_vec()).collect(),
            dom: old.iter().map(|r| r.dominating.clone()).collect(),
            bits: vec![Vec::new(); n],
            med: vec![BTreeMap::new(); n],
            merged: pr.merged.clone(),
            prio: pr.values.clone(),
            old,
        };
        let pos_u = w.ids.iter().position(|&x| x == u).expect("u listed");
        let pos_v = w.ids.iter().position(|&x| x == v).expect("v listed");

        // Notification: build the skip list over the list, climb to its
        // head, broadcast one header plus one chunk per level.
        let (sl0, build_rounds) = BalancedSkipList::build(&w.ids, a, rng)?;
        let chunk_bits = sizes.notification_header().max(sizes.notification_level());
        let mut traffic = skiplist_traffic(&sl0, build_rounds, sizes.id)
            .then(gather_and_broadcast(&sl0, height_before as u64 + 1, chunk_bits));

        // Merge the two communicating groups at alpha.
        let mut parts = Vec::new();
        let fixed: Vec<usize> = (0..n).filter(|&p| w.merged[p]).collect();
        parts.push(Part { rule: Rule::Fixed, members: fixed });
        let mut by_old: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
        for p in (0..n).filter(|&p| !w.merged[p]) {
            by_old.entry(w.old[p].group_ids[alpha]).or_default().push(p);
        }
        for (g, members) in by_old {
            parts.push(Part { rule: Rule::Keep(g), members });
        }
        self.assign_ids(t, &mut w, alpha, parts, u);

        let mut medians = Vec::new();
        let mut splits = SplitCounters::new();
        let mut direct = None;
        let mut tasks = vec![Task { level: alpha, members: (0..n).collect(), prio: w.prio.clone(), has_uv: true, sl: Some(sl0) }];
        while !tasks.is_empty() {
            let level = tasks[0].level;
            let d = level + 1;
            let mut level_traffic = Traffic::default();
            let mut parts = Vec::new();
            let mut children: Vec<(Vec<usize>, bool)> = Vec::new();
            for mut task in tasks {
                let m = task.members.len();
                if m == 1 {
                    continue;
                }
                let mut tr = Traffic::default();
                let sides: Vec<bool>;
                let mut sl_used = None;
                if task.has_uv && m == 2 {
                    // u and v alone: the lower id takes the 0-side
                    let lo = w.ids[task.members[0]].min(w.ids[task.members[1]]);
                    sides = task.members.iter().map(|&p| w.ids[p] != lo).collect();
                    direct = Some(level);
                    *splits.entry(SplitKind::Terminal).or_default() += 1;
                    tr = tr.then(Traffic::new(1, 2, sizes.id));
                } else {
                    let ids: Vec<NodeId> = task.members.iter().map(|&p| w.ids[p]).collect();
                    let sl = match task.sl.take() {
                        Some(sl) => sl,
                        None => {
                            let (sl, r) = BalancedSkipList::build(&ids, a, rng)?;
                            tr = tr.then(skiplist_traffic(&sl, r, sizes.id));
                            sl
                        }
                    };
                    let pinned = if task.has_uv { req.pinned.get(&level).copied() } else { None };
                    let (pivot, exact) = match pinned {
                        Some(value) => (MedianPivot { value, origin: None }, true),
                        None => {
                            let out = approx_median(&sl, &task.prio, sizes.ranked_value())?;
                            tr = tr.then(out.traffic);
                            (MedianPivot { value: out.value, origin: Some(out.origin) }, out.exact)
                        }
                    };
                    let split_members: Vec<SplitMember> = task
                        .members
                        .iter()
                        .zip(&task.prio)
                        .map(|(&p, &priority)| SplitMember {
                            id: w.ids[p],
                            priority,
                            group: w.g[p][level],
                            dominating: w.dom[p].get(d).copied().unwrap_or(false),
                        })
                        .collect();
                    let decision = split_list(&split_members, pivot, time, self.config.band_rule);
                    if let Some(g) = decision.g_s {
                        let counts: Vec<Vec<i64>> = split_members
                            .iter()
                            .map(|x| {
                                let high = pivot.goes_high(x.priority, x.id);
                                vec![!high as i64, high as i64, (x.group == g) as i64, 1]
                            })
                            .collect();
                        let (_, sum_traffic) = distributed_sum(&sl, &counts, sizes.count_vector())?;
                        tr = tr.then(sum_traffic);
                    }
                    for &p in &task.members {
                        w.med[p].insert(level, pivot.value);
                    }
                    if decision.sets_dominating {
                        for (&p, &one) in task.members.iter().zip(&decision.sides) {
                            if w.dom[p].len() <= d {
                                w.dom[p].resize(d + 1, false);
                            }
                            w.dom[p][d] = !one;
                        }
                    }
                    *splits.entry(decision.kind).or_default() += 1;
                    medians.push(MedianRecord {
                        level,
                        leftmost: ids[0],
                        size: m,
                        value: pivot.value,
                        pinned: pinned.is_some(),
                        exact,
                        kind: decision.kind,
                        g_s: decision.g_s,
                        zero_side: ids.iter().zip(&decision.sides).filter(|(_, &s)| !s).map(|(&i, _)| i).collect(),
                    });
                    tr = tr.then(Traffic::new(a.min(m) as u64, m as u64, sizes.id));
                    sides = decision.sides;
                    sl_used = Some(sl);
                }
                for (&p, &s) in task.members.iter().zip(&sides) {
                    w.bits[p].push(s);
                }
                let task_parts = self.split_parts(&w, &task, &sides, d);
                if task_parts.iter().any(|p| matches!(p.rule, Rule::Leftmost)) {
                    if let Some(sl) = &sl_used {
                        tr = tr.then(gather_and_broadcast(sl, 1, sizes.group_id()));
                    }
                }
                parts.extend(task_parts);
                for side in [false, true] {
                    let child: Vec<usize> =
                        task.members.iter().zip(&sides).filter(|(_, &s)| s == side).map(|(&p, _)| p).collect();
                    children.push((child, task.has_uv && !side && m > 2));
                }
                level_traffic = level_traffic.alongside(tr);
            }
            self.assign_ids(t, &mut w, d, parts, u);
            traffic = traffic.then(level_traffic);
            tasks = Vec::new();
            for (members, has_uv) in children {
                let prio = members
                    .iter()
                    .map(|&p| {
                        if has_uv {
                            w.prio[p]
                        } else {
                            let stamp = w.old[p].timestamps.get(d + 1).copied().unwrap_or(0);
                            let pr = outsider_priority(w.g[p][d], time, stamp);
                            if members.len() > 1 && !pr.is_negative() {
                                sign_violations += 1;
                            }
                            pr
                        }
                    })
                    .collect();
                tasks.push(Task { level: d, members, prio, has_uv, sl: None });
            }
        }
        let direct_link_level = direct.ok_or_else(|| DsgError::Invalid("u and v never reached a size-2 list".into()))?;

        // Commit the rebuilt subtree.
        for p in 0..n {
            let mut bits = w.old[p].membership.prefix(alpha).to_vec();
            bits.extend_from_slice(&w.bits[p]);
            let top = bits.len();
            let rec = t.node_mut(w.ids[p]).expect("member");
            rec.membership = MembershipVector(bits);
            rec.group_ids = w.g[p].clone();
            rec.group_ids.truncate(top + 1);
            rec.dominating = w.dom[p].clone();
            rec.dominating.resize(top + 1, false);
            rec.timestamps.truncate(top + 1);
        }
        t.normalize();
        let normalization_fixes = normalize_structure(t);

        // Balance repair. A run that only a dummy beside u and v could break
        // lifts the pair one level so the dummy takes the freed slot.
        let mut direct_link_level = direct_link_level;
        let mut dummies_inserted = 0;
        let mut pair_lifts = 0;
        let repair = loop {
            let link_prefix = t.node(u).expect("u").membership.prefix(direct_link_level).to_vec();
            let limit = self.config.repair_limit.saturating_sub(dummies_inserted);
            let out = repair_a_balance(t, Some(&uprefix), Some(&link_prefix), limit);
            dummies_inserted += out.inserted;
            if !out.blocked {
                break out;
            }
            for (id, bit) in [(u, false), (v, true)] {
                let r = t.node_mut(id).expect("endpoint");
                r.membership.0.truncate(direct_link_level);
                r.membership.0.extend([false, bit]);
                let g = r.group_ids[direct_link_level];
                r.group_ids.resize(direct_link_level + 3, g);
                r.group_ids[direct_link_level + 1] = u;
            }
            t.normalize();
            direct_link_level += 1;
            pair_lifts += 1;
        };
        if dummies_inserted > 0 {
            traffic = traffic.then(Traffic::new(a as u64, dummies_inserted as u64 * t.height() as u64, sizes.id + 64));
        }

        let split_levels = self.split_levels(t, &w, alpha);
        let lower = self.lower_group_ids(t, &w, alpha, pos_u, pos_v, rng, &sizes)?;
        if let Some((_, tr)) = &lower {
            traffic = traffic.then(*tr);
        }
        for p in 0..n {
            let levels = &split_levels[p];
            let rec = t.node_mut(w.ids[p]).expect("member");
            let b = rec.group_base;
            if levels.contains(&b) && b > 0 {
                rec.group_base = b - 1;
            } else if b == alpha {
                if let Some(&low) = levels.first() {
                    if low > alpha + 1 {
                        rec.group_base = low - 1;
                    }
                }
            }
        }
        let recipients: Vec<NodeId> = lower.as_ref().map(|(r, _)| r.clone()).unwrap_or_default();
        self.apply_timestamps(t, &w, alpha, pos_u, pos_v, direct_link_level, time, &split_levels, &recipients);

        let mut monotonicity_violations = 0;
        for &id in &w.ids {
            let r = t.node(id).expect("member");
            let top = r.top_level();
            if r.timestamps[..=top].windows(2).any(|x| x[0] > x[1]) {
                monotonicity_violations += 1;
            }
        }

        let report = t.validate();
        if !report.is_structurally_valid() {
            return Err(DsgError::Invalid(report.to_string()));
        }
        let (ru, rv) = (t.node(u).expect("u"), t.node(v).expect("v"));
        if ru.membership.common_prefix(&rv.membership) != direct_link_level
            || t.list_of(t.index_of(u).expect("u"), direct_link_level).len() != 2
        {
            return Err(DsgError::Invalid("u and v are not in a size-2 list".into()));
        }

        Ok(TransformReport {
            u,
            v,
            time,
            alpha,
            direct_link_level,
            height_before,
            height_after: t.height(),
            traffic,
            medians,
            splits,
            priorities: pr.members.iter().copied().zip(pr.values.iter().copied()).collect(),
            dummies_destroyed,
            dummies_inserted,
            pair_lifts,
            repair_exhausted: repair.exhausted,
            normalization_fixes,
            sign_violations,
            monotonicity_violations,
            lower_group_update: lower.is_some(),
        })
    }

    /// Groups formed at level `d` by one split.
    fn split_parts(&self, w: &Work, task: &Task, sides: &[bool], d: usize) -> Vec<Part> {
        let level = task.level;
        let mut split_groups = HashSet::new();
        let mut seen: HashMap<NodeId, bool> = HashMap::new();
        for (&p, &s) in task.members.iter().zip(sides) {
            let g = w.g[p][level];
            if let Some(&prev) = seen.get(&g) {
                if prev != s {
                    split_groups.insert(g);
                }
            } else {
                seen.insert(g, s);
            }
        }
        let mut old_sizes: HashMap<NodeId, usize> = HashMap::new();
        for r in &w.old {
            if r.top_level() >= d {
                *old_sizes.entry(r.group_ids[d]).or_default() += 1;
            }
        }
        let mut parts = Vec::new();
        for side in [false, true] {
            let uv_child = task.has_uv && !side;
            let mut fixed = Vec::new();
            let mut buckets: BTreeMap<(bool, NodeId, Option<NodeId>), Vec<usize>> = BTreeMap::new();
            for (&p, &s) in task.members.iter().zip(sides) {
                if s != side {
                    continue;
                }
                if uv_child && w.merged[p] {
                    fixed.push(p);
                    continue;
                }
                let g = w.g[p][level];
                if side && split_groups.contains(&g) {
                    buckets.entry((true, g, None)).or_default().push(p);
                } else {
                    let og = (w.old[p].top_level() >= d).then(|| w.old[p].group_ids[d]);
                    buckets.entry((false, g, og)).or_default().push(p);
                }
            }
            if !fixed.is_empty() {
                parts.push(Part { rule: Rule::Fixed, members: fixed });
            }
            for ((leftmost, _, og), mut members) in buckets {
                members.sort_unstable();
                let rule = match og {
                    Some(og) if !leftmost && old_sizes.get(&og) == Some(&members.len()) => Rule::Keep(og),
                    _ => Rule::Leftmost,
                };
                parts.push(Part { rule, members });
            }
        }
        parts
    }

    /// Gives every part a level-`d` id that no other group at `d` holds.
    fn assign_ids(&self, t: &Topology, w: &mut Work, d: usize, mut parts: Vec<Part>, u: NodeId) {
        let participants: HashSet<NodeId> = w.ids.iter().copied().collect();
        let mut used: HashSet<NodeId> = t
            .nodes()
            .iter()
            .filter(|r| !r.is_dummy && r.top_level() >= d && !participants.contains(&r.id()))
            .map(|r| r.group_ids[d])
            .collect();
        parts.sort_by_key(|p| match p.rule {
            Rule::Fixed => 0,
            Rule::Leftmost => 1,
            Rule::Keep(_) => 2,
        });
        for part in parts {
            if part.members.is_empty() {
                continue;
            }
            let first = w.ids[part.members[0]];
            let preferred = match part.rule {
                Rule::Fixed => u,
                Rule::Leftmost => first,
                Rule::Keep(g) => g,
            };
            let id = if used.contains(&preferred) {
                part.members.iter().map(|&p| w.ids[p]).find(|i| !used.contains(i)).unwrap_or(preferred)
            } else {
                preferred
            };
            used.insert(id);
            for &p in &part.members {
                if w.g[p].len() <= d {
                    w.g[p].resize(d + 1, id);
                }
                w.g[p][d] = id;
            }
        }
    }

    /// For each participant, the levels `>= alpha` at which its old group
    /// no longer sits together under one id.
    fn split_levels(&self, t: &Topology, w: &Work, alpha: usize) -> Vec<Vec<usize>> {
        let n = w.ids.len();
        let new: Vec<&NodeRecord> = w.ids.iter().map(|&id| t.node(id).expect("member")).collect();
        let max_top = w.old.iter().map(|r| r.top_level()).max().unwrap_or(0);
        let mut out = vec![Vec::new(); n];
        for d in alpha..=max_top {
            let mut groups: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
            for p in 0..n {
                if w.old[p].top_level() >= d {
                    groups.entry(w.old[p].group_ids[d]).or_default().push(p);
                }
            }
            for members in groups.values() {
                if members.len() < 2 {
                    continue;
                }
                let mut keys = HashSet::new();
                let mut missing = false;
                for &p in members {
                    let r = new[p];
                    if r.top_level() >= d {
                        keys.insert((r.membership.prefix(d).to_vec(), r.group_ids[d]));
                    } else {
                        missing = true;
                    }
                }
                if missing || keys.len() > 1 {
                    for &p in members {
                        out[p].push(d);
                    }
                }
            }
        }
        out
    }

    /// Aligns group ids below `alpha` when the two communicating nodes came
    /// from different lower groups. Returns the recipients and the cost.
    #[allow(clippy::too_many_arguments)]
    fn lower_group_ids(
        &self,
        t: &mut Topology,
        w: &Work,
        alpha: usize,
        pos_u: usize,
        pos_v: usize,
        rng: &mut impl Rng,
        sizes: &FieldSizes,
    ) -> Result<Option<(Vec<NodeId>, Traffic)>> {
        if alpha == 0 {
            return Ok(None);
        }
        let (ou, ov) = (&w.old[pos_u], &w.old[pos_v]);
        if ou.group_ids[alpha - 1] == ov.group_ids[alpha - 1] {
            return Ok(None);
        }
        let (bu, bv) = (ou.group_base, ov.group_base);
        let (lo, hi) = (bu.min(bv), bu.max(bv));
        if lo >= alpha || hi > alpha {
            return Ok(None);
        }
        let src = if bu <= bv { ou } else { ov };
        let lower: Vec<NodeId> = src.group_ids[..alpha].to_vec();
        let tags = (ou.group_ids[hi], ov.group_ids[hi]);
        let iu = t.index_of(ou.id()).expect("u");
        let list: Vec<NodeId> = t
            .list_of(iu, hi)
            .into_iter()
            .map(|i| &t.nodes()[i])
            .filter(|r| !r.is_dummy)
            .map(|r| r.id())
            .collect();
        let old_of: HashMap<NodeId, &NodeRecord> = w.ids.iter().copied().zip(&w.old).collect();
        let mut recipients = Vec::new();
        for &y in &list {
            let r = t.node(y).expect("listed");
            let g = old_of.get(&y).map(|o| o.group_ids[hi]).unwrap_or(r.group_ids[hi]);
            if g == tags.0 || g == tags.1 {
                recipients.push(y);
            }
        }
        for &y in &recipients {
            let r = t.node_mut(y).expect("listed");
            r.group_base = lo;
            r.group_ids[..alpha].copy_from_slice(&lower);
        }
        let u = w.ids[pos_u];
        for &id in &w.ids {
            let r = t.node_mut(id).expect("member");
            if r.group_ids[alpha] == u {
                r.group_ids[..alpha].copy_from_slice(&lower);
            }
        }
        let (sl, rounds) = BalancedSkipList::build(&list, t.balance(), rng)?;
        let tr = skiplist_traffic(&sl, rounds, sizes.id)
            .then(gather_and_broadcast(&sl, alpha as u64 + 1, sizes.lower_group_chunk()));
        let mut targets = recipients;
        targets.push(src.id());
        targets.sort_unstable();
        targets.dedup();
        Ok(Some((targets, tr)))
    }

    #[allow(clippy::too_many_arguments)]
    fn apply_timestamps(
        &self,
        t: &mut Topology,
        w: &Work,
        alpha: usize,
        pos_u: usize,
        pos_v: usize,
        dl: usize,
        time: u64,
        split_levels: &[Vec<usize>],
        lower_targets: &[NodeId],
    ) {
        let (u, v) = (w.ids[pos_u], w.ids[pos_v]);

        // T1: the pair is stamped at its link level and merged below it.
        let tu = t.node(u).expect("u").timestamps.clone();
        let tv = t.node(v).expect("v").timestamps.clone();
        for id in [u, v] {
            let r = t.node_mut(id).expect("endpoint");
            r.timestamps[dl] = time;
            r.timestamps[dl + 1] = time;
            for i in r.group_base..dl {
                r.timestamps[i] = tu[i].max(tv[i]);
            }
        }

        let (ou, ov) = (&w.old[pos_u], &w.old[pos_v]);
        for p in 0..w.ids.len() {
            if !w.merged[p] || p == pos_u || p == pos_v {
                continue;
            }
            let old = &w.old[p];
            // T2: stamps inside u's group follow the medians received.
            let (lu, lv) = (old.membership.common_prefix(&ou.membership), old.membership.common_prefix(&ov.membership));
            let cp = lu.max(lv);
            let scan = |m: i64| (alpha..cp).find(|&c| old.timestamps[c] as i64 > m).map(|c| old.timestamps[c]);
            let rec = t.node_mut(w.ids[p]).expect("member");
            for (&level, &m) in &w.med[p] {
                if rec.group_ids[level] != u {
                    continue;
                }
                let value = match m {
                    Priority::Finite(m) if m > 0 => Some(scan(m).unwrap_or(m as u64)),
                    Priority::Finite(m) => scan(m),
                    Priority::Infinite => w.prio[p].finite().filter(|&x| x > 0).map(|x| x as u64),
                };
                if let Some(x) = value {
                    rec.timestamps[level + 1] = x;
                }
            }

            // T3: levels lost with the own communicating node are backfilled.
            let wrec = if old.group_ids[alpha] == ou.group_ids[alpha] { ou } else { ov };
            let c1 = old.membership.common_prefix(&wrec.membership);
            let new_w = t.node(wrec.id()).expect("endpoint").membership.clone();
            let rec = t.node_mut(w.ids[p]).expect("member");
            let c2 = rec.membership.common_prefix(&new_w);
            if c1 > c2 + 2 {
                let top = rec.top_level();
                let val = if c1 <= top { rec.timestamps[c1] } else { old.timestamps[c1] };
                for i in c2 + 1..c1.min(top + 1) {
                    rec.timestamps[i] = val;
                }
            }
        }

        // T4: lower-group recipients clear below their first empty level.
        for &id in lower_targets {
            let r = t.node_mut(id).expect("recipient");
            let top = r.top_level();
            if let Some(d) = (0..top).find(|&d| r.timestamps[d + 1] == 0) {
                if d > r.group_base {
                    let val = r.timestamps[d + 1];
                    for i in r.group_base..=d {
                        r.timestamps[i] = val;
                    }
                }
            }
        }

        for p in 0..w.ids.len() {
            let r = t.node_mut(w.ids[p]).expect("member");
            // T5: a split group's level below inherits the split level's stamp.
            for &d in &split_levels[p] {
                if d >= 1 && d < r.timestamps.len() && r.timestamps[d - 1] == 0 {
                    r.timestamps[d - 1] = r.timestamps[d];
                }
            }
            // T6: nothing below the group base.
            let b = r.group_base.min(r.timestamps.len());
            r.timestamps[..b].fill(0);
            let top = r.top_level();
            r.timestamps[top + 1..].fill(0);
        }
    }
}
