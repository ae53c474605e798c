//! End-to-end acceptance criteria. Prints one PASS/FAIL line per criterion
//! and exits non-zero if a criterion fails outside its documented envelope.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dsg::amf::{approx_median, distributed_sum, BalancedSkipList};
use dsg::congest::bit_budget;
use dsg::engine::{compute_priorities, Priority};
use dsg::oracle::{rank_of, CommunicationGraph};
use dsg::routing::route;
use dsg::scenario::{walkthrough, U, V};
use dsg::simulator::{height_bound, link_level_bound, Checks, RunConfig, Simulator};
use dsg::topology::Violation;
use dsg::workload::Workload;

const REQUESTS: usize = 1000;
const TIME_LIMIT: Duration = Duration::from_secs(300);
const AMF_TRIALS: usize = 1000;
const AMF_A: usize = 4;
const SUM_TRIALS: usize = 1000;
const WS_REQUESTS: usize = 2000;
const CONNECT_REQUESTS: usize = 500;
const CONNECT_SAMPLES: usize = 50;
/// Share of failing connectivity samples tolerated as the known limitation.
const CONNECT_ENVELOPE: f64 = 0.05;
const ROUND_SEEDS: u64 = 200;
/// One skip list level: build, gather and broadcast, each at most `2a` hops.
const LEVEL_ROUNDS: u64 = 6 * AMF_A as u64 - 1;
const BIT_STEP: u32 = 8;

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    /// A failure that stays inside its documented envelope.
    known: bool,
    detail: String,
}

impl Outcome {
    fn new(id: u32, name: &'static str, pass: bool, detail: String) -> Outcome {
        Outcome { id, name, pass, known: false, detail }
    }
}

/// Per-run measurements shared by the structural criteria.
#[derive(Default)]
struct RunStats {
    label: String,
    n: usize,
    elapsed: Duration,
    structural: usize,
    dummy_budget: usize,
    max_dummies: usize,
    limit: usize,
    not_pair: usize,
    max_link: usize,
    link_bound: usize,
    link_over: usize,
    max_height: usize,
    height_over: usize,
    max_bits: u32,
    bits_over: usize,
    cost_mismatch: usize,
}

fn measured_run(n: usize, a: usize, workload: Workload, requests: usize) -> RunStats {
    let cfg = RunConfig { n, a, seed: 1, workload: workload.clone(), requests, checks: Checks::Full, out: None };
    let reqs = workload.generate(n, requests, cfg.seed).expect("workload");
    let mut sim = Simulator::new(&cfg).expect("config");
    let mut s = RunStats { label: format!("n={n} a={a} {workload}"), n, link_bound: link_level_bound(n, a), ..Default::default() };
    let start = Instant::now();
    for req in reqs {
        let d = route(sim.topology(), req.u, req.v).expect("route").distance() as u64;
        let rec = sim.execute(req).expect("request").clone();
        let rep = sim.last_report().expect("report");
        let t = sim.topology();
        for v in &t.validate().violations {
            match v {
                Violation::DummyBudget { .. } => s.dummy_budget += 1,
                _ => s.structural += 1,
            }
        }
        s.max_dummies = s.max_dummies.max(t.dummy_count());
        s.limit = t.dummy_limit();
        let dl = rep.direct_link_level;
        let list = t.list_of(t.index_of(req.u).expect("u"), dl);
        if list.len() != 2 || !list.contains(&t.index_of(req.v).expect("v")) {
            s.not_pair += 1;
        }
        s.max_link = s.max_link.max(dl);
        s.link_over += (dl > s.link_bound) as usize;
        s.max_height = s.max_height.max(t.height());
        s.height_over += (t.height() > height_bound(n + t.dummy_count())) as usize;
        s.max_bits = s.max_bits.max(rep.traffic.max_bits);
        s.bits_over += (rep.traffic.max_bits > bit_budget(n + t.dummy_count())) as usize;
        s.cost_mismatch += (rec.total != d + rep.rho() + 1 || rec.d as u64 != d) as usize;
    }
    s.elapsed = start.elapsed();
    s
}

fn structural_runs() -> Vec<RunStats> {
    let mut out = Vec::new();
    for n in [16, 64, 256] {
        for a in [3, 4] {
            for w in [Workload::Uniform, Workload::Zipf { s: 1.2 }] {
                let s = measured_run(n, a, w, REQUESTS);
                eprintln!("  ran {} in {:.1}s", s.label, s.elapsed.as_secs_f64());
                out.push(s);
            }
        }
    }
    out
}

fn c1(runs: &[RunStats]) -> Outcome {
    let structural: usize = runs.iter().map(|r| r.structural).sum();
    let budget: usize = runs.iter().map(|r| r.dummy_budget).sum();
    let slow: Vec<&str> = runs.iter().filter(|r| r.elapsed > TIME_LIMIT).map(|r| r.label.as_str()).collect();
    let worst = runs.iter().max_by_key(|r| r.max_dummies).expect("runs");
    let detail = format!(
        "structural {structural}, dummy-budget {budget} (worst {}: {} dummies, limit {}), slowest {:.1}s",
        worst.label,
        worst.max_dummies,
        worst.limit,
        runs.iter().map(|r| r.elapsed.as_secs_f64()).fold(0.0, f64::max)
    );
    let mut o = Outcome::new(1, "structural validity", structural == 0 && budget == 0 && slow.is_empty(), detail);
    o.known = structural == 0 && slow.is_empty();
    o
}

fn c2(runs: &[RunStats]) -> Outcome {
    let not_pair: usize = runs.iter().map(|r| r.not_pair).sum();
    let over: usize = runs.iter().map(|r| r.link_over).sum();
    let detail = runs.iter().map(|r| format!("n={} link {}<={}", r.n, r.max_link, r.link_bound)).collect::<Vec<_>>();
    Outcome::new(2, "direct link", not_pair == 0 && over == 0, format!("not-a-pair {not_pair}, over bound {over}; {}", detail.join(", ")))
}

fn c3(runs: &[RunStats]) -> Outcome {
    let over: usize = runs.iter().map(|r| r.height_over).sum();
    let max = runs.iter().map(|r| r.max_height).max().unwrap_or(0);
    Outcome::new(3, "height bound", over == 0, format!("over bound {over}, max height {max}"))
}

fn c4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut misses = 0;
    let mut worst = 0.0f64;
    for n in [64usize, 512, 4096] {
        let members: Vec<u64> = (1..=n as u64).collect();
        for trial in 0..AMF_TRIALS {
            let range = rng.random_range(2..=2 * n as i64);
            let values: Vec<i64> = (0..n).map(|_| rng.random_range(0..range)).collect();
            let (sl, _) = BalancedSkipList::build_seeded(&members, AMF_A, trial as u64).expect("list");
            let out = approx_median(&sl, &values, 64).expect("median");
            let pairs: Vec<(i64, u64)> = values.iter().copied().zip(members.iter().copied()).collect();
            let rank = rank_of(&pairs, &out.value, out.origin) as f64;
            let off = (rank - n as f64 / 2.0).abs() / n as f64;
            worst = worst.max(off);
            misses += (off * n as f64 > n as f64 / (2 * AMF_A) as f64) as usize;
        }
    }
    Outcome::new(4, "AMF rank", misses == 0, format!("{misses} out of range, worst |rank - n/2| = {worst:.4}n (allowed 0.125n)"))
}

fn c5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut wrong = 0;
    for trial in 0..SUM_TRIALS {
        let m = rng.random_range(1..=300usize);
        let width = rng.random_range(1..=8usize);
        let members: Vec<u64> = (1..=m as u64).collect();
        let (sl, _) = BalancedSkipList::build_seeded(&members, rng.random_range(2..=5), trial as u64).expect("list");
        let vecs: Vec<Vec<i64>> =
            (0..m).map(|_| (0..width).map(|_| rng.random_range(-1_000_000..=1_000_000)).collect()).collect();
        let want: Vec<i64> = (0..width).map(|j| vecs.iter().map(|v| v[j]).sum()).collect();
        let (got, _) = distributed_sum(&sl, &vecs, 64).expect("sum");
        wrong += (got != want) as usize;
    }
    Outcome::new(5, "distributed sum", wrong == 0, format!("{wrong} of {SUM_TRIALS} sums differ"))
}

fn c6() -> Outcome {
    let mut over = 0;
    let mut ratio = 0.0f64;
    let mut parts = Vec::new();
    for w in [Workload::RepeatedPair { p: 0.5 }, Workload::Cluster { k: 4 }] {
        let cfg = RunConfig { n: 64, a: 3, requests: WS_REQUESTS, workload: w.clone(), checks: Checks::Sampled(0.0), ..Default::default() };
        let out = Simulator::run_config(&cfg).expect("run");
        let v = out.summary.violation_kinds.get("working_set").copied().unwrap_or(0);
        over += v;
        ratio = ratio.max(out.summary.max_repeat_ratio);
        parts.push(format!("{w}: {v} over, max d/log2(T+1) {:.2}", out.summary.max_repeat_ratio));
    }
    Outcome::new(6, "working set", over == 0, parts.join("; "))
}

fn c7() -> Outcome {
    let cfg = RunConfig { n: 64, a: 3, requests: CONNECT_REQUESTS, checks: Checks::Sampled(0.0), ..Default::default() };
    let reqs = cfg.workload.generate(cfg.n, cfg.requests, cfg.seed).expect("workload");
    let mut sim = Simulator::new(&cfg).expect("config");
    sim.connectivity_samples = CONNECT_SAMPLES;
    sim.run(&reqs).expect("run");
    let bad = sim.summary().violation_kinds.get("connectivity").copied().unwrap_or(0);
    let total = CONNECT_REQUESTS * CONNECT_SAMPLES;
    let share = bad as f64 / total as f64;
    let mut o = Outcome::new(7, "group connectivity", bad == 0, format!("{bad} of {total} samples disconnected ({:.2}%)", 100.0 * share));
    o.known = share <= CONNECT_ENVELOPE;
    o
}

fn median_rounds(n: usize, a: usize) -> u64 {
    let members: Vec<u64> = (1..=n as u64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let mut rounds: Vec<u64> = (0..ROUND_SEEDS)
        .map(|seed| {
            let (sl, build) = BalancedSkipList::build_seeded(&members, a, seed).expect("list");
            let values: Vec<i64> = (0..n).map(|_| rng.random_range(0..1 << 20)).collect();
            build + approx_median(&sl, &values, 64).expect("median").traffic.rounds
        })
        .collect();
    rounds.sort_unstable();
    rounds[rounds.len() / 2]
}

fn c8() -> Outcome {
    let a = AMF_A as u64;
    let mut ok = true;
    let mut within_level = true;
    let mut parts = Vec::new();
    for n in [128, 256, 512] {
        let (r1, r2) = (median_rounds(n, AMF_A), median_rounds(2 * n, AMF_A));
        ok &= r2 <= r1 + a + 2;
        within_level &= r2 <= r1 + LEVEL_ROUNDS;
        parts.push(format!("{n}:{r1} -> {}:{r2}", 2 * n));
    }
    let mut o = Outcome::new(8, "AMF round scaling", ok, format!("median rounds {}", parts.join(", ")));
    o.known = within_level;
    o
}

fn c9(runs: &[RunStats]) -> Outcome {
    let bad: usize = runs.iter().map(|r| r.cost_mismatch).sum();
    Outcome::new(9, "cost identity", bad == 0, format!("{bad} requests with total != d + rho + 1"))
}

fn c10(runs: &[RunStats]) -> Outcome {
    let over: usize = runs.iter().map(|r| r.bits_over).sum();
    let max = runs.iter().map(|r| r.max_bits).max().unwrap_or(0);
    let mut chain = Vec::new();
    for n in [16, 32, 64, 128, 256] {
        let bits = match runs.iter().find(|r| r.n == n && r.label.ends_with(" a=3 uniform")) {
            Some(r) => r.max_bits,
            None => measured_run(n, 3, Workload::Uniform, REQUESTS).max_bits,
        };
        chain.push((n, bits));
    }
    let growth_ok = chain.windows(2).all(|w| w[1].1 <= w[0].1 + BIT_STEP);
    let shown: Vec<String> = chain.iter().map(|(n, b)| format!("{n}:{b}")).collect();
    Outcome::new(10, "message size", over == 0 && growth_ok, format!("over budget {over}, max {max} bits; uniform a=3 max bits {}", shown.join(" ")))
}

fn c11() -> Outcome {
    let mut fails = Vec::new();
    // Two clusters of contacts; U and V last met at time 2.
    let mut g = CommunicationGraph::new();
    for (t, (x, y)) in [(U, 6), (U, V), (U, 5), (5, 1), (2, 3), (1, 11), (3, 4)].into_iter().enumerate() {
        g.record(x, y, t as u64 + 1).expect("record");
    }
    let ws = g.working_set_number(U, V, 8, 64);
    if ws != 5 {
        fails.push(format!("working set {ws}"));
    }
    let s = walkthrough();
    let t = s.topology().expect("scenario");
    let p = compute_priorities(&t, U, V, 7).expect("priorities");
    let get = |id| p.values[p.members.iter().position(|&x| x == id).expect("member")];
    for (id, want) in [(8, Priority::Finite(-68)), (6, Priority::Finite(-40)), (2, Priority::Finite(2)), (5, Priority::Finite(5)), (U, Priority::Infinite)] {
        if get(id) != want {
            fails.push(format!("priority of {id}: {:?}", get(id)));
        }
    }
    let (t, out) = s.run(1).expect("scenario run");
    fails.extend(out.mismatches);
    if t.node(2).map(|r| r.timestamps[2]) != Some(4) {
        fails.push("T of B at level 2".into());
    }
    Outcome::new(11, "worked examples", fails.is_empty(), if fails.is_empty() { "working set 5, priorities, walkthrough split and stamps".into() } else { fails.join("; ") })
}

fn c12() -> Outcome {
    let cfg = RunConfig { n: 64, a: 3, requests: 500, workload: Workload::Zipf { s: 1.2 }, ..Default::default() };
    let a = Simulator::run_config(&cfg).expect("run");
    let b = Simulator::run_config(&cfg).expect("run");
    Outcome::new(12, "determinism", a.trace == b.trace && a.topology == b.topology, format!("trace sha256 {}", a.summary.trace_sha256))
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let runs = structural_runs();
    let outcomes = vec![c1(&runs), c2(&runs), c3(&runs), c4(), c5(), c6(), c7(), c8(), c9(&runs), c10(&runs), c11(), c12()];
    let mut hard = 0;
    for o in &outcomes {
        let verdict = match (o.pass, o.known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known limitation)",
            (false, false) => {
                hard += 1;
                "FAIL"
            }
        };
        println!("criterion {:>2} {:<20} {verdict}: {}", o.id, o.name, o.detail);
    }
    if hard > 0 {
        eprintln!("{hard} criteria failed outside their documented envelope");
        std::process::exit(1);
    }
}
