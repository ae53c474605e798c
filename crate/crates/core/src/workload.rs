//! Request streams. Generation is open-loop: it depends only on the
//! configuration and seed, never on the topology.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::error::{DsgError, Result};
use crate::topology::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Request {
    pub time: u64,
    pub u: NodeId,
    pub v: NodeId,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Workload {
    #[default]
    Uniform,
    Zipf { s: f64 },
    /// One fixed pair with probability `p`, otherwise uniform.
    RepeatedPair { p: f64 },
    /// `k` cliques with mostly intra-clique traffic.
    Cluster { k: usize },
    /// Requests read from a file of `t u v` lines.
    Replay { path: String },
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Workload::Uniform => f.write_str("uniform"),
            Workload::Zipf { s } => write!(f, "zipf({s})"),
            Workload::RepeatedPair { p } => write!(f, "repeated_pair({p})"),
            Workload::Cluster { k } => write!(f, "cluster({k})"),
            Workload::Replay { path } => write!(f, "replay({path})"),
        }
    }
}

/// Share of cluster requests that stay inside one clique.
pub const CLUSTER_LOCALITY: f64 = 0.95;

impl Workload {
    pub fn check(&self, n: usize) -> Result<()> {
        match *self {
            Workload::Zipf { s } if s.is_nan() || s <= 0.0 => Err(DsgError::Config(format!("zipf exponent must be positive, got {s}"))),
            Workload::RepeatedPair { p } if !(0.0..=1.0).contains(&p) => {
                Err(DsgError::Config(format!("pair probability must lie in [0, 1], got {p}")))
            }
            Workload::Cluster { k } if k == 0 || 2 * k > n => {
                Err(DsgError::Config(format!("cluster count must be in 1..={}, got {k}", n / 2)))
            }
            _ => Ok(()),
        }
    }

    /// `count` requests over ids `1..=n` with times `1..=count`.
    pub fn generate(&self, n: usize, count: usize, seed: u64) -> Result<Vec<Request>> {
        if n < 2 {
            return Err(DsgError::Config(format!("need at least 2 nodes, got {n}")));
        }
        self.check(n)?;
        if let Workload::Replay { path } = self {
            let text = std::fs::read_to_string(path)?;
            let mut reqs = parse_replay(&text)?;
            reqs.truncate(count);
            return Ok(reqs);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_7a1c);
        let n64 = n as u64;
        let uniform = |rng: &mut ChaCha8Rng| {
            let u = rng.random_range(1..=n64);
            let mut v = rng.random_range(1..n64);
            if v >= u {
                v += 1;
            }
            (u, v)
        };
        let mut perm: Vec<NodeId> = (1..=n64).collect();
        perm.shuffle(&mut rng);
        let mut out = Vec::with_capacity(count);
        match self {
            Workload::Uniform => {
                for _ in 0..count {
                    out.push(uniform(&mut rng));
                }
            }
            Workload::Zipf { s } => {
                let z = Zipf::new(n as f64, *s).map_err(|e| DsgError::Config(e.to_string()))?;
                for _ in 0..count {
                    let u = perm[z.sample(&mut rng) as usize - 1];
                    let mut v = u;
                    while v == u {
                        v = perm[z.sample(&mut rng) as usize - 1];
                    }
                    out.push((u, v));
                }
            }
            Workload::RepeatedPair { p } => {
                let pair = (perm[0], perm[1]);
                for _ in 0..count {
                    out.push(if rng.random_bool(*p) { pair } else { uniform(&mut rng) });
                }
            }
            Workload::Cluster { k } => {
                let cliques: Vec<&[NodeId]> = (0..*k).map(|i| &perm[i * n / k..(i + 1) * n / k]).collect();
                for _ in 0..count {
                    if rng.random_bool(CLUSTER_LOCALITY) {
                        let c = cliques[rng.random_range(0..*k)];
                        let i = rng.random_range(0..c.len());
                        let mut j = rng.random_range(0..c.len() - 1);
                        if j >= i {
                            j += 1;
                        }
                        out.push((c[i], c[j]));
                    } else {
                        out.push(uniform(&mut rng));
                    }
                }
            }
            Workload::Replay { .. } => unreachable!(),
        }
        Ok(out.into_iter().enumerate().map(|(i, (u, v))| Request { time: i as u64 + 1, u, v }).collect())
    }
}

impl FromStr for Workload {
    type Err = DsgError;

    /// Accepts `uniform`, `zipf`, `repeated_pair`, `cluster` (default
    /// parameters) or the same names with a parenthesised parameter.
    fn from_str(s: &str) -> Result<Workload> {
        let (name, arg) = match s.split_once('(') {
            Some((name, rest)) => (name, Some(rest.strip_suffix(')').ok_or_else(|| DsgError::Parse(s.into()))?)),
            None => (s, None),
        };
        let num = |d: f64| -> Result<f64> { arg.map_or(Ok(d), |a| a.trim().parse().map_err(|_| DsgError::Parse(s.into()))) };
        match name.trim() {
            "uniform" => Ok(Workload::Uniform),
            "zipf" => Ok(Workload::Zipf { s: num(1.2)? }),
            "repeated_pair" => Ok(Workload::RepeatedPair { p: num(0.5)? }),
            "cluster" => Ok(Workload::Cluster { k: num(4.0)? as usize }),
            "replay" => Ok(Workload::Replay { path: arg.unwrap_or_default().to_string() }),
            _ => Err(DsgError::Parse(format!("unknown workload {s}"))),
        }
    }
}

/// Parses `t u v` lines; blank lines and `#` comments are skipped.
pub fn parse_replay(text: &str) -> Result<Vec<Request>> {
    let mut out: Vec<Request> = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<u64> = line
            .split_whitespace()
            .map(|x| x.parse().map_err(|_| DsgError::Parse(format!("line {}: bad number {x:?}", no + 1))))
            .collect::<Result<_>>()?;
        let [time, u, v] = f[..] else {
            return Err(DsgError::Parse(format!("line {}: expected `t u v`", no + 1)));
        };
        if u == v {
            return Err(DsgError::Parse(format!("line {}: u equals v", no + 1)));
        }
        if out.last().is_some_and(|r| r.time >= time) {
            return Err(DsgError::Parse(format!("line {}: times must increase", no + 1)));
        }
        out.push(Request { time, u, v });
    }
    Ok(out)
}

pub fn format_replay(reqs: &[Request]) -> String {
    reqs.iter().map(|r| format!("{} {} {}\n", r.time, r.u, r.v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_stream() {
        assert!(Workload::Uniform.generate(8, 0, 1).unwrap().is_empty());
    }

    #[test]
    fn certain_pair_repeats() {
        let r = Workload::RepeatedPair { p: 1.0 }.generate(10, 5, 3).unwrap();
        assert_eq!(r.len(), 5);
        assert!(r.iter().all(|x| (x.u, x.v) == (r[0].u, r[0].v)));
        assert_eq!(r.iter().map(|x| x.time).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn zipf_is_skewed() {
        let r = Workload::Zipf { s: 1.2 }.generate(64, 10_000, 9).unwrap();
        let mut freq = std::collections::HashMap::new();
        for x in &r {
            *freq.entry(x.u).or_insert(0usize) += 1;
        }
        let top = *freq.values().max().unwrap() as f64 / r.len() as f64;
        assert!(top >= 3.0 / 64.0, "top share {top}");
    }

    #[test]
    fn cluster_stays_local() {
        let n = 40;
        let k = 4;
        let r = Workload::Cluster { k }.generate(n, 2000, 5).unwrap();
        let distinct: std::collections::HashSet<_> = r.iter().map(|x| (x.u.min(x.v), x.u.max(x.v))).collect();
        // 4 cliques of 10 hold 180 pairs; cross traffic adds a few more
        assert!(distinct.len() < 400, "{}", distinct.len());
    }

    #[test]
    fn generation_is_deterministic() {
        for w in [Workload::Uniform, Workload::Zipf { s: 1.1 }, Workload::Cluster { k: 3 }] {
            assert_eq!(w.generate(30, 100, 4).unwrap(), w.generate(30, 100, 4).unwrap());
            assert!(w.generate(30, 100, 4).unwrap().iter().all(|r| r.u != r.v && r.u >= 1 && r.v <= 30));
        }
    }

    #[test]
    fn bad_parameters() {
        assert!(Workload::Zipf { s: 0.0 }.generate(8, 1, 0).is_err());
        assert!(Workload::RepeatedPair { p: 1.5 }.generate(8, 1, 0).is_err());
        assert!(Workload::Cluster { k: 5 }.generate(8, 1, 0).is_err());
        assert!(Workload::Uniform.generate(1, 1, 0).is_err());
    }

    #[test]
    fn parse_names() {
        assert_eq!("zipf(1.5)".parse::<Workload>().unwrap(), Workload::Zipf { s: 1.5 });
        assert_eq!("cluster".parse::<Workload>().unwrap(), Workload::Cluster { k: 4 });
        assert!("bogus".parse::<Workload>().is_err());
    }

    #[test]
    fn replay_round_trip() {
        let text = "# script\n1 21 6\n2 21 22\n\n3 21 5\n";
        let r = parse_replay(text).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(parse_replay(&format_replay(&r)).unwrap(), r);
        assert!(parse_replay("2 1 2\n1 3 4\n").is_err());
        assert!(parse_replay("1 2\n").is_err());
        assert!(parse_replay("1 2 2\n").is_err());
    }
}
