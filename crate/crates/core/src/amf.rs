//! Approximate median finding over one linked list.
//!
//! A support-bounded probabilistic skip list is built over the list. Values
//! travel left along each level to the nearest node that stepped up, then up a
//! level. Above a height threshold each holder keeps an even-stride sample of
//! what it received, and the root selects a value from the surviving ranks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::congest::Traffic;
use crate::error::{DsgError, Result};
use crate::topology::NodeId;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BalancedSkipList {
    members: Vec<NodeId>,
    /// Positions (into `members`) present at each level; level 0 is all.
    levels: Vec<Vec<usize>>,
    a: usize,
    small: bool,
}

impl BalancedSkipList {
    pub fn build(members: &[NodeId], a: usize, rng: &mut impl Rng) -> Result<(BalancedSkipList, u64)> {
        if members.is_empty() {
            return Err(DsgError::Empty);
        }
        if a < 2 {
            return Err(DsgError::BalanceTooSmall(a));
        }
        let m = members.len();
        let mut levels = vec![(0..m).collect::<Vec<_>>()];
        if m == 1 {
            return Ok((BalancedSkipList { members: members.to_vec(), levels, a, small: true }, 0));
        }
        if m <= a {
            levels.push(vec![0]);
            return Ok((BalancedSkipList { members: members.to_vec(), levels, a, small: true }, 0));
        }
        let min_sup = a.div_ceil(2);
        let max_sup = 2 * a;
        let mut rounds = 0;
        while levels.last().unwrap().len() > 1 {
            let cur = levels.last().unwrap();
            let len = cur.len();
            let mut up = vec![0usize];
            for j in 1..len {
                if !rng.random_bool(1.0 / a as f64) {
                    continue;
                }
                let mut last = *up.last().unwrap();
                while j - last > max_sup {
                    last += a;
                    up.push(last);
                }
                if j - last >= min_sup {
                    up.push(j);
                }
            }
            let mut last = *up.last().unwrap();
            while len - last > max_sup {
                last += a;
                up.push(last);
            }
            if up.len() == len {
                // every node stepped up; keep alternate ones so the list shrinks
                up = up.into_iter().step_by(2).collect();
            }
            let max_gap = up.windows(2).map(|w| w[1] - w[0]).chain([len - last]).max().unwrap_or(0);
            rounds += max_gap as u64 + 1;
            let next: Vec<usize> = up.into_iter().map(|j| cur[j]).collect();
            levels.push(next);
        }
        Ok((BalancedSkipList { members: members.to_vec(), levels, a, small: false }, rounds))
    }

    pub fn build_seeded(members: &[NodeId], a: usize, seed: u64) -> Result<(BalancedSkipList, u64)> {
        BalancedSkipList::build(members, a, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn members(&self) -> &[NodeId] {
        &self.members
    }

    pub fn levels(&self) -> &[Vec<usize>] {
        &self.levels
    }

    pub fn height(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn is_small(&self) -> bool {
        self.small
    }

    pub fn balance(&self) -> usize {
        self.a
    }

    /// Gaps between consecutive members of each level `>= 1`, measured in
    /// positions of the level below.
    pub fn supports(&self) -> Vec<Vec<usize>> {
        (1..self.levels.len())
            .map(|k| {
                let below = &self.levels[k - 1];
                let pos = |p: usize| below.binary_search(&p).unwrap();
                self.levels[k].windows(2).map(|w| pos(w[1]) - pos(w[0])).collect()
            })
            .collect()
    }

    /// For each level `k < h`, the nodes of level `k` grouped behind the
    /// level-`k+1` node they report to. Index 0 of each group is that node.
    fn groups(&self, k: usize) -> Vec<&[usize]> {
        let cur = &self.levels[k];
        let next = &self.levels[k + 1];
        let mut starts: Vec<usize> = next.iter().map(|p| cur.binary_search(p).unwrap()).collect();
        starts.push(cur.len());
        starts.windows(2).map(|w| &cur[w[0]..w[1]]).collect()
    }

    /// Sampling starts at level `ceil(log_{a/2} h) + 2`; never when `a/2 <= 1`.
    pub fn sampling_threshold(&self) -> usize {
        let base = self.a as f64 / 2.0;
        let h = self.height();
        if base <= 1.0 || h == 0 {
            return usize::MAX;
        }
        ((h as f64).ln() / base.ln() - 1e-9).ceil().max(0.0) as usize + 2
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RankedValue<T> {
    pub value: T,
    pub origin: NodeId,
    /// Values known to be larger.
    pub left_rank: u64,
    /// Values known to be smaller.
    pub right_rank: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MedianOutcome<T> {
    pub value: T,
    pub origin: NodeId,
    pub left_rank: u64,
    pub right_rank: u64,
    pub exact: bool,
    pub traffic: Traffic,
}

struct Held<T> {
    value: T,
    origin: NodeId,
    /// Discarded values above this one that it vouches for.
    lr: u64,
    /// Discarded values below.
    rr: u64,
}

fn keep_stride<T: Ord>(bag: &mut Vec<Held<T>>, keep: usize) {
    bag.sort_by(|x, y| (&x.value, x.origin).cmp(&(&y.value, y.origin)));
    let m = bag.len();
    if m <= keep || keep < 2 {
        return;
    }
    let idx: Vec<usize> = (0..keep).map(|i| i * (m - 1) / (keep - 1)).collect();
    let mut lr_add = vec![0u64; m];
    let mut rr_add = vec![0u64; m];
    for w in idx.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        for q in lo + 1..hi {
            lr_add[lo] += 1 + bag[q].lr;
            rr_add[hi] += 1 + bag[q].rr;
        }
    }
    let mut out = Vec::with_capacity(keep);
    for (i, mut h) in bag.drain(..).enumerate() {
        if idx.binary_search(&i).is_ok() {
            h.lr += lr_add[i];
            h.rr += rr_add[i];
            out.push(h);
        }
    }
    *bag = out;
}

/// Approximate median of `values` (one per member, in member order).
///
/// `value_bits` is the size of one ranked-value message.
pub fn approx_median<T: Ord + Clone>(
    sl: &BalancedSkipList,
    values: &[T],
    value_bits: u32,
) -> Result<MedianOutcome<T>> {
    let m = sl.members.len();
    if values.len() != m {
        return Err(DsgError::LengthMismatch { expected: m, got: values.len() });
    }
    let target = m.div_ceil(2) as u64;
    if m <= 2 * sl.a {
        let mut all: Vec<(T, NodeId)> = values.iter().cloned().zip(sl.members.iter().copied()).collect();
        all.sort();
        let (value, origin) = all[target as usize - 1].clone();
        let hops = (m - 1) as u64;
        let gather = Traffic::new(hops, (m * (m - 1) / 2) as u64, value_bits);
        let traffic = gather.then(Traffic::new(hops, hops, value_bits));
        return Ok(MedianOutcome {
            value,
            origin,
            left_rank: m as u64 - target,
            right_rank: target - 1,
            exact: true,
            traffic,
        });
    }

    let h = sl.height();
    let keep = sl.a * h;
    let threshold = sl.sampling_threshold();
    let mut bags: Vec<Vec<Held<T>>> = values
        .iter()
        .zip(&sl.members)
        .map(|(v, &o)| vec![Held { value: v.clone(), origin: o, lr: 0, rr: 0 }])
        .collect();
    let mut traffic = Traffic::default();
    for k in 0..h {
        let mut rounds = 0u64;
        let mut pipelined = 0u64;
        let mut messages = 0u64;
        for group in sl.groups(k) {
            let head = group[0];
            let followers = group.len() - 1;
            rounds = rounds.max(followers as u64);
            let mut crossing = 0u64;
            for (dist, &p) in group.iter().enumerate().skip(1) {
                let bag = std::mem::take(&mut bags[p]);
                messages += (dist * bag.len()) as u64;
                crossing += bag.len() as u64;
                bags[head].extend(bag);
            }
            if followers > 0 {
                pipelined = pipelined.max(crossing + followers as u64 - 1);
            }
            let level = k + 1;
            if level >= threshold && level < h {
                keep_stride(&mut bags[head], keep);
            }
        }
        traffic = traffic.then(Traffic { rounds, pipelined, messages, max_bits: if messages > 0 { value_bits } else { 0 } });
    }

    let mut root = std::mem::take(&mut bags[0]);
    root.sort_by(|x, y| (&x.value, x.origin).cmp(&(&y.value, y.origin)));
    let r = root.len();
    let mut suffix_lr = vec![0u64; r + 1];
    for p in (0..r).rev() {
        suffix_lr[p] = suffix_lr[p + 1] + root[p].lr;
    }
    let mut prefix_rr = 0u64;
    let n = m as u64;
    let mut best: Option<(u64, usize, u64, u64)> = None;
    for p in 0..r {
        prefix_rr += root[p].rr;
        let left = (r - 1 - p) as u64 + suffix_lr[p];
        let right = p as u64 + prefix_rr;
        // true 1-based rank lies in [right + 1, n - left]
        let miss = (right + 1).saturating_sub(target).max(target.saturating_sub(n - left));
        if best.is_none_or(|b| miss < b.0) {
            best = Some((miss, p, left, right));
        }
        if miss == 0 {
            break;
        }
    }
    let (_, p, left_rank, right_rank) = best.expect("root holds at least one value");
    let chosen = &root[p];
    let traffic = traffic.then(broadcast(sl, 1, value_bits));
    Ok(MedianOutcome {
        value: chosen.value.clone(),
        origin: chosen.origin,
        left_rank,
        right_rank,
        exact: false,
        traffic,
    })
}

/// Exact componentwise sum, gathered to the head and broadcast back.
pub fn distributed_sum(sl: &BalancedSkipList, vectors: &[Vec<i64>], bits: u32) -> Result<(Vec<i64>, Traffic)> {
    let m = sl.members.len();
    if vectors.len() != m {
        return Err(DsgError::LengthMismatch { expected: m, got: vectors.len() });
    }
    let width = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.len() != width) {
        return Err(DsgError::LengthMismatch { expected: width, got: v.len() });
    }
    let mut acc: Vec<Vec<i64>> = vectors.to_vec();
    let mut traffic = Traffic::default();
    for k in 0..sl.height() {
        let mut rounds = 0u64;
        let mut messages = 0u64;
        for group in sl.groups(k) {
            let followers = group.len() - 1;
            rounds = rounds.max(followers as u64);
            messages += followers as u64;
            for &p in group.iter().skip(1).rev() {
                let v = std::mem::take(&mut acc[p]);
                for (x, y) in acc[group[0]].iter_mut().zip(v) {
                    *x += y;
                }
            }
        }
        traffic = traffic.then(Traffic::new(rounds, messages, bits));
    }
    let total = std::mem::take(&mut acc[0]);
    Ok((total, traffic.then(broadcast(sl, 1, bits))))
}

/// Root-to-all broadcast of `chunks` messages of `bits` each.
pub fn broadcast(sl: &BalancedSkipList, chunks: u64, bits: u32) -> Traffic {
    let mut rounds = 0u64;
    let mut messages = 0u64;
    for k in (0..sl.height()).rev() {
        let mut level_rounds = 0u64;
        for group in sl.groups(k) {
            let followers = (group.len() - 1) as u64;
            level_rounds = level_rounds.max(followers);
            messages += followers * chunks;
        }
        rounds += level_rounds;
    }
    let extra = if rounds > 0 { chunks.saturating_sub(1) } else { 0 };
    Traffic { rounds: rounds + extra, pipelined: rounds + extra, messages, max_bits: if messages > 0 { bits } else { 0 } }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{exact_median, rank_of};

    fn ids(n: usize) -> Vec<NodeId> {
        (1..=n as NodeId).collect()
    }

    #[test]
    fn tiny_list_is_small() {
        let (sl, rounds) = BalancedSkipList::build_seeded(&ids(3), 3, 1).unwrap();
        assert!(sl.is_small());
        assert_eq!(sl.height(), 1);
        assert_eq!(rounds, 0);
        assert!(BalancedSkipList::build_seeded(&[], 3, 1).is_err());
    }

    #[test]
    fn supports_within_bounds_256() {
        for seed in 0..50 {
            let (sl, _) = BalancedSkipList::build_seeded(&ids(256), 4, seed).unwrap();
            for level in sl.supports() {
                assert!(level.iter().all(|&g| (2..=8).contains(&g)), "seed {seed}: {level:?}");
            }
            assert!(sl.levels().iter().all(|l| l[0] == 0));
            let h = sl.height() as f64;
            assert!(h >= 256f64.log(8.0) && h <= 9.0, "h = {h}");
        }
    }

    #[test]
    fn equal_values() {
        let (sl, _) = BalancedSkipList::build_seeded(&ids(100), 4, 3).unwrap();
        let out = approx_median(&sl, &vec![7i64; 100], 32).unwrap();
        assert_eq!(out.value, 7);
    }

    #[test]
    fn small_exact() {
        let (sl, _) = BalancedSkipList::build_seeded(&ids(5), 3, 3).unwrap();
        let out = approx_median(&sl, &[1i64, 2, 3, 4, 5], 32).unwrap();
        assert_eq!(out.value, 3);
        assert!(out.exact);
    }

    #[test]
    fn rank_guarantee_4096() {
        let n = 4096;
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vals: Vec<i64> = (0..n).map(|_| rng.random_range(-1_000_000..1_000_000)).collect();
            let (sl, _) = BalancedSkipList::build(&ids(n), 4, &mut rng).unwrap();
            let out = approx_median(&sl, &vals, 64).unwrap();
            let pairs: Vec<(i64, NodeId)> = vals.iter().copied().zip(ids(n)).collect();
            let r = rank_of(&pairs, &out.value, out.origin) as f64;
            assert!((r - n as f64 / 2.0).abs() <= n as f64 / 8.0, "seed {seed}: rank {r}");
            assert!(out.left_rank + out.right_rank < n as u64);
            let true_larger = pairs.iter().filter(|p| **p > (out.value, out.origin)).count() as u64;
            assert!(out.left_rank <= true_larger);
            let _ = exact_median(&pairs).unwrap();
        }
    }

    #[test]
    fn sum_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (sl, _) = BalancedSkipList::build(&ids(200), 3, &mut rng).unwrap();
        let vs: Vec<Vec<i64>> = (0..200).map(|_| (0..4).map(|_| rng.random_range(-50..50)).collect()).collect();
        let (s, _) = distributed_sum(&sl, &vs, 32).unwrap();
        let direct: Vec<i64> = (0..4).map(|j| vs.iter().map(|v| v[j]).sum()).collect();
        assert_eq!(s, direct);
        let (one, _) = BalancedSkipList::build_seeded(&[9], 3, 0).unwrap();
        assert_eq!(distributed_sum(&one, &[vec![1, 2]], 8).unwrap().0, vec![1, 2]);
        assert_eq!(distributed_sum(&sl, &vec![vec![0; 4]; 200], 8).unwrap().0, vec![0; 4]);
    }

    #[test]
    fn broadcast_bounds() {
        let (one, _) = BalancedSkipList::build_seeded(&[9], 3, 0).unwrap();
        assert_eq!(broadcast(&one, 1, 8).rounds, 0);
        let (sl, _) = BalancedSkipList::build_seeded(&ids(64), 4, 2).unwrap();
        let b1 = broadcast(&sl, 1, 8);
        assert!(b1.rounds <= (2 * 4 * sl.height()) as u64);
        let b5 = broadcast(&sl, 5, 8);
        assert_eq!(b5.rounds, b1.rounds + 4);
        assert_eq!(b1.messages, 63);
    }
}
