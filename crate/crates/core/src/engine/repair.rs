//! Balance repair with dummy nodes, structural normalisation and churn.

use rand::Rng;

use crate::error::{DsgError, Result};
use crate::topology::{Key, MembershipVector, NodeId, NodeRecord, Topology};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RepairOutcome {
    pub inserted: usize,
    /// The iteration cap was hit with a run still too long.
    pub exhausted: bool,
    /// A remaining run can only be broken by a dummy with the avoided prefix.
    pub blocked: bool,
}

enum Insert {
    Done,
    Blocked,
    NoGap,
}

struct Run {
    level: usize,
    members: Vec<usize>,
    bit: bool,
}

/// Longest allowed run in the list at `level` with bit prefix `prefix`.
/// Chains of real nodes inside the rebuilt subtree must stay below `a`;
/// anything holding a dummy only needs the plain balance bound.
fn run_limit(a: usize, level: usize, prefix: &[bool], strict: Option<&[bool]>, all_real: bool) -> usize {
    match strict {
        Some(s) if all_real && level >= s.len() && prefix.starts_with(s) => a - 1,
        _ => a,
    }
}

fn find_run(t: &Topology, strict: Option<&[bool]>) -> Option<Run> {
    let a = t.balance();
    let nodes = t.nodes();
    for level in 0..t.height() {
        for list in t.lists_at(level) {
            if list.members.len() < 2 {
                continue;
            }
            let prefix = nodes[list.members[0]].membership.prefix(level);
            let bit = |i: usize| nodes[i].membership.0.get(level).copied();
            let mut start = 0;
            for j in 1..=list.members.len() {
                if j == list.members.len() || bit(list.members[j]) != bit(list.members[start]) {
                    let all_real = list.members[start..j].iter().all(|&i| !nodes[i].is_dummy);
                    if j - start > run_limit(a, level, prefix, strict, all_real) {
                        if let Some(b) = bit(list.members[start]) {
                            return Some(Run { level, members: list.members[start..j].to_vec(), bit: b });
                        }
                    }
                    start = j;
                }
            }
        }
    }
    None
}

/// Inserts dummies until no list has a run above its limit. Chains of real
/// nodes inside the subtree with prefix `strict` allow at most `a - 1`; all
/// other runs `a`. No dummy takes the prefix `avoid`.
pub fn repair_a_balance(
    t: &mut Topology,
    strict: Option<&[bool]>,
    avoid: Option<&[bool]>,
    max_iter: usize,
) -> RepairOutcome {
    let mut out = RepairOutcome::default();
    for _ in 0..max_iter {
        let Some(run) = find_run(t, strict) else { return out };
        match insert_dummy(t, &run, avoid) {
            Insert::Done => out.inserted += 1,
            Insert::Blocked => {
                out.blocked = true;
                return out;
            }
            Insert::NoGap => {
                out.exhausted = true;
                return out;
            }
        }
    }
    out.exhausted = find_run(t, strict).is_some();
    out
}

/// Same-bit run length a node at base gap `gap` (between base indices `gap`
/// and `gap + 1`) would join in its level-`level` list.
fn joined_run(t: &Topology, gap: usize, level: usize, prefix: &[bool], bit: bool) -> usize {
    let nodes = t.nodes();
    let member = |n: &NodeRecord| n.top_level() > level && n.membership.prefix(level) == &prefix[..level];
    let mut run = 1;
    for n in nodes[..=gap].iter().rev().filter(|n| member(n)) {
        if n.membership.bit(level + 1) != bit {
            break;
        }
        run += 1;
    }
    for n in nodes[gap + 1..].iter().filter(|n| member(n)) {
        if n.membership.bit(level + 1) != bit {
            break;
        }
        run += 1;
    }
    run
}

fn insert_dummy(t: &mut Topology, run: &Run, avoid: Option<&[bool]>) -> Insert {
    let a = t.balance();
    let level = run.level;
    let mid = run.members.len() / 2;
    let (li, ri) = (run.members[mid - 1], run.members[mid]);
    let mut bits: Vec<bool> = t.nodes()[li].membership.prefix(level).to_vec();
    bits.push(!run.bit);
    let blocked = |bits: &[bool]| avoid.is_some_and(|p| bits.len() >= p.len() && bits.starts_with(p));
    if blocked(&bits) {
        return Insert::Blocked;
    }

    // Pick the base gap whose lower-level runs stay shortest.
    let mut best: Option<((usize, usize), usize, Key)> = None;
    for gap in li..ri {
        let Some(key) = Key::between(t.nodes()[gap].key, t.nodes()[gap + 1].key) else { continue };
        let mut over = 0;
        let mut total = 0;
        for j in 0..level {
            let r = joined_run(t, gap, j, &bits, bits[j]);
            over += r.saturating_sub(a);
            total += r;
        }
        let score = (over, total);
        if best.as_ref().is_none_or(|b| score < b.0) {
            best = Some((score, gap, key));
        }
    }
    let Some((_, gap, key)) = best else { return Insert::NoGap };

    // Climb until the dummy is alone, pairing with a lone node if needed.
    loop {
        let depth = bits.len();
        let others: Vec<usize> = t
            .nodes()
            .iter()
            .enumerate()
            .filter(|(_, n)| n.top_level() >= depth && n.membership.prefix(depth) == &bits[..])
            .map(|(i, _)| i)
            .collect();
        match others.len() {
            0 => break,
            1 if t.nodes()[others[0]].top_level() == depth => {
                let z = others[0];
                t.nodes_mut()[z].membership.0.push(false);
                bits.push(true);
                break;
            }
            _ => {
                let mut choice = None;
                for b in [false, true] {
                    let mut next = bits.clone();
                    next.push(b);
                    if blocked(&next) {
                        continue;
                    }
                    let r = joined_run(t, gap, depth, &bits, b);
                    let size = others.iter().filter(|&&i| t.nodes()[i].membership.bit(depth + 1) == b).count();
                    if choice.is_none_or(|(_, s)| (r, size) < s) {
                        choice = Some((b, (r, size)));
                    }
                }
                bits.push(choice.unwrap().0);
            }
        }
    }
    t.insert_record(NodeRecord::dummy(key, MembershipVector(bits)));
    t.normalize();
    Insert::Done
}

/// Restores the split rules after nodes disappear: lone nodes stop extending,
/// one-sided splits move one member across. Returns the number of fixes.
pub fn normalize_structure(t: &mut Topology) -> usize {
    let mut fixes = 0;
    'again: loop {
        if fixes > 16 * t.len() + 64 {
            return fixes;
        }
        for level in 0..t.height() {
            for list in t.lists_at(level) {
                let m = &list.members;
                if m.len() == 1 {
                    let n = &mut t.nodes_mut()[m[0]];
                    if n.top_level() > level {
                        n.membership.0.truncate(level);
                        fixes += 1;
                        continue 'again;
                    }
                    continue;
                }
                if let Some(&i) = m.iter().find(|&&i| t.nodes()[i].top_level() == level) {
                    let pos = m.iter().position(|&x| x == i).unwrap();
                    let nb = if pos > 0 { m[pos - 1] } else { m[pos + 1] };
                    let b = t.nodes()[nb].membership.0.get(level).copied().unwrap_or(false);
                    t.nodes_mut()[i].membership.0.push(!b);
                    fixes += 1;
                    continue 'again;
                }
                let first = t.nodes()[m[0]].membership.bit(level + 1);
                if m.iter().all(|&i| t.nodes()[i].membership.bit(level + 1) == first) {
                    let y = m[m.len() / 2];
                    let n = &mut t.nodes_mut()[y];
                    n.membership.0.truncate(level);
                    n.membership.0.push(!first);
                    fixes += 1;
                    continue 'again;
                }
            }
        }
        break;
    }
    t.normalize();
    fixes
}

/// Standard join with default state; bits are drawn at random per level.
pub fn add_node(t: &mut Topology, id: NodeId, rng: &mut impl Rng, max_iter: usize) -> Result<RepairOutcome> {
    if t.index_of_key(Key::real(id)).is_some() {
        return Err(DsgError::DuplicateId(id));
    }
    let mut bits = Vec::new();
    loop {
        let depth = bits.len();
        let others: Vec<usize> = t
            .nodes()
            .iter()
            .enumerate()
            .filter(|(_, n)| n.top_level() >= depth && n.membership.prefix(depth) == &bits[..])
            .map(|(i, _)| i)
            .collect();
        match others.len() {
            0 => break,
            1 if t.nodes()[others[0]].top_level() == depth => {
                t.nodes_mut()[others[0]].membership.0.push(false);
                bits.push(true);
                break;
            }
            _ => bits.push(rng.random_bool(0.5)),
        }
    }
    t.insert_record(NodeRecord::fresh(id, MembershipVector(bits)));
    t.normalize();
    let out = repair_a_balance(t, None, None, max_iter);
    t.normalize();
    Ok(out)
}

/// Standard leave; neighbours restore the split rules and balance.
pub fn remove_node(t: &mut Topology, id: NodeId, max_iter: usize) -> Result<RepairOutcome> {
    let i = t.endpoint(id)?;
    if t.real_count() == 1 {
        return Err(DsgError::Config("cannot remove the last node".into()));
    }
    t.remove_at(i);
    normalize_structure(t);
    let out = repair_a_balance(t, None, None, max_iter);
    t.normalize();
    Ok(out)
}
