//! Priorities, the straddled-group test and the per-list split decision.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Serialize, Serializer};

use crate::topology::NodeId;

/// Split priority. `Infinite` is larger than every finite value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Priority {
    Finite(i64),
    Infinite,
}

impl Priority {
    pub fn is_negative(self) -> bool {
        matches!(self, Priority::Finite(m) if m < 0)
    }

    pub fn finite(self) -> Option<i64> {
        match self {
            Priority::Finite(m) => Some(m),
            Priority::Infinite => None,
        }
    }
}

impl fmt::Display for Priority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Priority::Finite(m) => write!(f, "{m}"),
            Priority::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Priority {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Priority::Finite(m) => s.serialize_i64(*m),
            Priority::Infinite => s.serialize_str("inf"),
        }
    }
}

/// Priority of a node outside both communicating groups:
/// `-(group * t) + stamp`.
pub fn outsider_priority(group: NodeId, t: u64, stamp: u64) -> Priority {
    Priority::Finite(stamp as i64 - (group as i64).saturating_mul(t as i64))
}

/// Median used to split one list. `origin` breaks ties among equal values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct MedianPivot {
    pub value: Priority,
    pub origin: Option<NodeId>,
}

impl MedianPivot {
    /// True if a node with this priority and id lands on the 0-side.
    pub fn goes_high(&self, p: Priority, id: NodeId) -> bool {
        if p == Priority::Infinite {
            return true;
        }
        match p.cmp(&self.value) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => self.origin.is_none_or(|o| id >= o),
        }
    }
}

/// How a negative median picks the group it straddles.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum BandRule {
    /// The group whose actual priority range `[-g*t, -g*t + t)` holds `M`.
    #[default]
    PriorityRange,
    /// `-g*t >= M >= -(g+1)*t`, inclusive, smaller `g` on a shared boundary.
    Literal,
}

/// Group (among `groups`) whose band straddles the negative median `m`.
pub fn detect_g_s(groups: &[NodeId], m: Priority, t: u64, rule: BandRule) -> Option<NodeId> {
    let m = match m {
        Priority::Finite(m) if m < 0 => m as i128,
        _ => return None,
    };
    let t = t as i128;
    let mut hits: Vec<NodeId> = groups
        .iter()
        .copied()
        .filter(|&g| {
            let g = g as i128;
            match rule {
                BandRule::Literal => -g * t >= m && m >= -(g + 1) * t,
                BandRule::PriorityRange => -g * t <= m && m < -g * t + t,
            }
        })
        .collect();
    hits.sort_unstable();
    hits.dedup();
    hits.first().copied()
}

/// Which branch decided a split, for instrumentation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum SplitKind {
    Terminal,
    Positive,
    NegativeNoGroup,
    LargeGroup,
    SmallGroup,
    MiddleGroup,
    Fallback,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitMember {
    pub id: NodeId,
    pub priority: Priority,
    pub group: NodeId,
    pub dominating: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitDecision {
    /// `true` means the 1-side.
    pub sides: Vec<bool>,
    pub kind: SplitKind,
    pub g_s: Option<NodeId>,
    /// Whether the positive rule ran, so dominating flags must be rewritten.
    pub sets_dominating: bool,
}

/// Splits one list of at least two nodes around `pivot`.
pub fn split_list(members: &[SplitMember], pivot: MedianPivot, t: u64, rule: BandRule) -> SplitDecision {
    let by_pivot: Vec<bool> = members.iter().map(|x| !pivot.goes_high(x.priority, x.id)).collect();
    let mut decision = if !pivot.value.is_negative() {
        SplitDecision { sides: by_pivot, kind: SplitKind::Positive, g_s: None, sets_dominating: true }
    } else {
        let groups: Vec<NodeId> = members.iter().map(|x| x.group).collect();
        match detect_g_s(&groups, pivot.value, t, rule) {
            None => SplitDecision { sides: by_pivot, kind: SplitKind::NegativeNoGroup, g_s: None, sets_dominating: false },
            Some(g) => {
                let size = members.len();
                let in_gs: Vec<bool> = members.iter().map(|x| x.group == g).collect();
                let gsn = in_gs.iter().filter(|&&b| b).count();
                let (kind, sides) = if 3 * gsn > 2 * size {
                    let s = members.iter().zip(&in_gs).map(|(x, &gs)| gs && x.dominating).collect();
                    (SplitKind::LargeGroup, s)
                } else if 3 * gsn < size {
                    let high = by_pivot.iter().zip(&in_gs).filter(|(&one, &gs)| !gs && !one).count();
                    let low = by_pivot.iter().zip(&in_gs).filter(|(&one, &gs)| !gs && one).count();
                    let gs_side = high >= low;
                    let s = by_pivot.iter().zip(&in_gs).map(|(&one, &gs)| if gs { gs_side } else { one }).collect();
                    (SplitKind::SmallGroup, s)
                } else {
                    (SplitKind::MiddleGroup, in_gs.clone())
                };
                SplitDecision { sides, kind, g_s: Some(g), sets_dominating: false }
            }
        }
    };
    if decision.sides.iter().all(|&s| s) || decision.sides.iter().all(|&s| !s) {
        decision.sides = rank_split(members);
        decision.kind = SplitKind::Fallback;
    }
    decision
}

/// The top half by `(priority, id)` goes to the 0-side.
fn rank_split(members: &[SplitMember]) -> Vec<bool> {
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse((members[i].priority, members[i].id)));
    let mut sides = vec![true; members.len()];
    for &i in order.iter().take(members.len().div_ceil(2)) {
        sides[i] = false;
    }
    sides
}

/// Per-kind split counters.
pub type SplitCounters = BTreeMap<SplitKind, u64>;
