//! Message accounting under a per-message bit budget.
//!
//! Every field costs `ceil(log2 range)` bits for the range it can take in the
//! current run.

use serde::Serialize;

use crate::topology::Key;

/// Bits needed to write any value in `0..range`.
pub fn bits_for(range: u64) -> u32 {
    if range <= 2 {
        1
    } else {
        64 - (range - 1).leading_zeros()
    }
}

/// Allowed bits per message for `n` live nodes plus dummies.
pub fn bit_budget(nodes: usize) -> u32 {
    64 + 8 * bits_for(nodes.max(2) as u64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct FieldSizes {
    pub id: u32,
    pub time: u32,
    pub level: u32,
    pub count: u32,
    /// Class flag, sign and magnitude of a priority.
    pub priority: u32,
}

impl FieldSizes {
    pub fn new(max_id: u64, max_time: u64, max_level: usize, max_count: usize) -> FieldSizes {
        let id = bits_for(max_id + 1);
        let time = bits_for(max_time + 1);
        let magnitude = bits_for(max_id.saturating_add(1).saturating_mul(max_time + 1).saturating_add(1));
        FieldSizes {
            id,
            time,
            level: bits_for(max_level as u64 + 1),
            count: bits_for(max_count as u64 + 1),
            priority: 2 + magnitude,
        }
    }

    /// Node address: integer id plus the significant bits of a dummy fraction.
    pub fn key(&self, k: Key) -> u32 {
        let frac = if k.frac == 0 { 0 } else { 64 - k.frac.trailing_zeros() };
        self.id + frac
    }

    /// Priority, origin and both ranks.
    pub fn ranked_value(&self) -> u32 {
        self.priority + self.id + 2 * self.count
    }

    /// Leading notification chunk: endpoints, time, alpha and height.
    pub fn notification_header(&self) -> u32 {
        2 * self.id + self.time + 2 * self.level
    }

    /// One level of both endpoints' state.
    pub fn notification_level(&self) -> u32 {
        self.level + 2 * self.time + 2 * self.id + 2 + 2 * self.level
    }

    pub fn count_vector(&self) -> u32 {
        4 * self.count
    }

    pub fn group_id(&self) -> u32 {
        self.id + self.level
    }

    pub fn lower_group_chunk(&self) -> u32 {
        self.level + 3 * self.id + self.level
    }
}

/// Cost of one phase. `rounds` moves one message bundle per hop per round;
/// `pipelined` charges one round per message crossing a link.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Traffic {
    pub rounds: u64,
    pub pipelined: u64,
    pub messages: u64,
    pub max_bits: u32,
}

impl Traffic {
    pub fn new(rounds: u64, messages: u64, bits: u32) -> Traffic {
        Traffic { rounds, pipelined: rounds, messages, max_bits: if messages > 0 { bits } else { 0 } }
    }

    /// Sequential composition.
    pub fn then(self, o: Traffic) -> Traffic {
        Traffic {
            rounds: self.rounds + o.rounds,
            pipelined: self.pipelined + o.pipelined,
            messages: self.messages + o.messages,
            max_bits: self.max_bits.max(o.max_bits),
        }
    }

    /// Parallel composition.
    pub fn alongside(self, o: Traffic) -> Traffic {
        Traffic {
            rounds: self.rounds.max(o.rounds),
            pipelined: self.pipelined.max(o.pipelined),
            messages: self.messages + o.messages,
            max_bits: self.max_bits.max(o.max_bits),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_widths() {
        assert_eq!(bits_for(0), 1);
        assert_eq!(bits_for(2), 1);
        assert_eq!(bits_for(3), 2);
        assert_eq!(bits_for(256), 8);
        assert_eq!(bits_for(257), 9);
        assert_eq!(bit_budget(16), 96);
        assert_eq!(bit_budget(17), 104);
    }

    #[test]
    fn composition() {
        let a = Traffic::new(3, 5, 10);
        let b = Traffic::new(4, 1, 20);
        assert_eq!(a.then(b).rounds, 7);
        assert_eq!(a.alongside(b).rounds, 4);
        assert_eq!(a.alongside(b).messages, 6);
        assert_eq!(a.then(b).max_bits, 20);
    }
}
