//! Sequential request loop: route, transform, record, check.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::congest::bit_budget;
use crate::engine::{Engine, EngineConfig, SplitKind, TransformReport, TransformRequest};
use crate::error::{DsgError, Result};
use crate::oracle::{connectivity_check, CommunicationGraph};
use crate::routing::route;
pub use crate::topology::height_bound;
use crate::topology::{sequential_ids, NodeId, Topology, Violation};
use crate::workload::{Request, Workload};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Checks {
    Full,
    /// Validate after a random share of requests.
    Sampled(f64),
}

impl std::str::FromStr for Checks {
    type Err = DsgError;

    /// `full`, `sampled` (rate 0.1), `sampled(r)` or `sampled:r`.
    fn from_str(s: &str) -> Result<Checks> {
        let s = s.trim();
        if s == "full" {
            return Ok(Checks::Full);
        }
        let rate = match s.strip_prefix("sampled") {
            Some("") => "0.1",
            Some(rest) => rest
                .strip_prefix(':')
                .or_else(|| rest.strip_prefix('(').and_then(|r| r.strip_suffix(')')))
                .ok_or_else(|| DsgError::Parse(format!("bad check mode {s:?}")))?,
            None => return Err(DsgError::Parse(format!("bad check mode {s:?}"))),
        };
        rate.trim().parse().map(Checks::Sampled).map_err(|_| DsgError::Parse(format!("bad check rate {rate:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    pub a: usize,
    pub seed: u64,
    pub workload: Workload,
    pub requests: usize,
    pub checks: Checks,
    /// Output path prefix; nothing is written when absent.
    pub out: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: 64,
            a: 3,
            seed: 1,
            workload: Workload::Uniform,
            requests: 1000,
            checks: Checks::Full,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn check(&self) -> Result<()> {
        if self.n < 2 {
            return Err(DsgError::Config(format!("need at least 2 nodes, got {}", self.n)));
        }
        if self.a < 2 {
            return Err(DsgError::BalanceTooSmall(self.a));
        }
        if let Checks::Sampled(r) = self.checks {
            if !(0.0..=1.0).contains(&r) {
                return Err(DsgError::Config(format!("check rate must lie in [0, 1], got {r}")));
            }
        }
        self.workload.check(self.n)
    }
}

/// Highest level the size-2 list of a pair may sit at.
pub fn link_level_bound(n: usize, a: usize) -> usize {
    let base = 2.0 * a as f64 / (a as f64 + 1.0);
    (n.max(2) as f64).log(base).ceil() as usize
}

/// Routing distance allowed for a repeated pair with working-set number `ws`.
pub fn working_set_distance_bound(ws: u64, a: usize) -> usize {
    a * ((ws + 1) as f64).log(1.5).ceil() as usize + a
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RequestRecord {
    pub t: u64,
    pub u: NodeId,
    pub v: NodeId,
    pub alpha: usize,
    pub d: usize,
    pub rho: u64,
    pub total: u64,
    pub messages: u64,
    pub max_bits: u32,
    pub height: usize,
    pub dummies: usize,
    pub ws_t: u64,
    pub ws_log_t: f64,
    pub direct_link_level: usize,
    /// Violations found by this request's checks, by kind.
    pub violations: BTreeMap<String, usize>,
    pub monotonicity: usize,
    pub pair_lifts: usize,
}

pub const CSV_HEADER: &str = "t,u,v,alpha,d,rho,total,messages,max_bits,height,dummies,ws_T,ws_logT,direct_link_level";

impl RequestRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{:.6},{}",
            self.t,
            self.u,
            self.v,
            self.alpha,
            self.d,
            self.rho,
            self.total,
            self.messages,
            self.max_bits,
            self.height,
            self.dummies,
            self.ws_t,
            self.ws_log_t,
            self.direct_link_level
        )
    }

    pub fn violation_count(&self) -> usize {
        self.violations.values().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub avg_cost: f64,
    pub ws_bound: f64,
    pub max_height: usize,
    pub max_direct_link_level: usize,
    pub violations: usize,
    pub requests: usize,
    pub total_cost: u64,
    pub avg_rho: f64,
    pub max_rho: u64,
    pub max_bits: u32,
    pub max_dummies: usize,
    pub final_dummies: usize,
    pub violation_kinds: BTreeMap<String, usize>,
    /// Requests after which some node's stamps decrease with level.
    pub monotonicity_diagnostics: usize,
    pub pair_lifts: usize,
    pub splits: BTreeMap<SplitKind, u64>,
    /// Largest `d / log2(T + 1)` over repeated pairs.
    pub max_repeat_ratio: f64,
    pub trace_sha256: String,
    /// Set when the run replays a scenario with expectations.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario_match: Option<bool>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub scenario_mismatches: Vec<String>,
}

pub struct Simulator {
    topology: Topology,
    engine: Engine,
    graph: CommunicationGraph,
    rng: ChaCha8Rng,
    check_rng: ChaCha8Rng,
    checks: Checks,
    /// `(level, member)` samples per request for the connectivity check.
    pub connectivity_samples: usize,
    records: Vec<RequestRecord>,
    splits: BTreeMap<SplitKind, u64>,
    last_report: Option<TransformReport>,
}

impl Simulator {
    pub fn new(cfg: &RunConfig) -> Result<Simulator> {
        cfg.check()?;
        let t = Topology::build_initial(&sequential_ids(cfg.n), cfg.a, cfg.seed)?;
        Ok(Simulator::from_topology(t, cfg.seed, cfg.checks))
    }

    pub fn from_topology(topology: Topology, seed: u64, checks: Checks) -> Simulator {
        Simulator {
            topology,
            engine: Engine::new(EngineConfig::default()),
            graph: CommunicationGraph::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            check_rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15)),
            checks,
            connectivity_samples: 0,
            records: Vec::new(),
            splits: BTreeMap::new(),
            last_report: None,
        }
    }

    pub fn with_engine(mut self, engine: Engine) -> Simulator {
        self.engine = engine;
        self
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn graph(&self) -> &CommunicationGraph {
        &self.graph
    }

    pub fn records(&self) -> &[RequestRecord] {
        &self.records
    }

    pub fn last_report(&self) -> Option<&TransformReport> {
        self.last_report.as_ref()
    }

    pub fn execute(&mut self, req: Request) -> Result<&RequestRecord> {
        self.execute_with(&TransformRequest::new(req.u, req.v, req.time))
    }

    /// Runs one request, optionally with pinned medians.
    pub fn execute_with(&mut self, req: &TransformRequest) -> Result<&RequestRecord> {
        let (u, v, time) = (req.u, req.v, req.time);
        if let Some(last) = self.records.last() {
            if time <= last.t {
                return Err(DsgError::Config(format!("request time {time} not after {}", last.t)));
            }
        }
        let path = route(&self.topology, u, v)?;
        let d = path.distance();
        let live = self.topology.real_count() as u64;
        let repeat = self.graph.last_time(u, v).is_some();
        let ws = self.graph.working_set_number(u, v, time, live);

        let report = self.engine.transform(&mut self.topology, req, &mut self.rng)?;
        self.graph.record(u, v, time)?;
        for (k, c) in &report.splits {
            *self.splits.entry(*k).or_default() += c;
        }

        let t = &self.topology;
        let n = t.real_count();
        let a = t.balance();
        let mut violations: BTreeMap<String, usize> = BTreeMap::new();
        let mut flag = |kind: &str, count: usize| {
            if count > 0 {
                *violations.entry(kind.to_string()).or_default() += count;
            }
        };
        let validate = match self.checks {
            Checks::Full => true,
            Checks::Sampled(r) => self.check_rng.random_bool(r),
        };
        if validate {
            for x in &t.validate().violations {
                let kind = match x {
                    Violation::DummyBudget { .. } => "dummy_budget",
                    Violation::ABalance { .. } => "a_balance",
                    _ => "structure",
                };
                flag(kind, 1);
            }
        }
        flag("height_bound", (t.height() > height_bound(n + t.dummy_count())) as usize);
        flag("link_level", (report.direct_link_level > link_level_bound(n, a)) as usize);
        flag("bit_budget", (report.traffic.max_bits > bit_budget(n + t.dummy_count())) as usize);
        flag("working_set", (repeat && d > working_set_distance_bound(ws, a)) as usize);
        flag("sign", report.sign_violations);
        if self.connectivity_samples > 0 {
            let ids = t.ids();
            let samples: Vec<(usize, NodeId)> = (0..self.connectivity_samples)
                .map(|_| {
                    let x = ids[self.check_rng.random_range(0..ids.len())];
                    let top = t.node(x).expect("listed").top_level();
                    (self.check_rng.random_range(0..=top), x)
                })
                .collect();
            flag("connectivity", connectivity_check(t, &self.graph, time, &samples).len());
        }

        let rho = report.rho();
        self.records.push(RequestRecord {
            t: time,
            u,
            v,
            alpha: report.alpha,
            d,
            rho,
            total: d as u64 + rho + 1,
            messages: report.traffic.messages,
            max_bits: report.traffic.max_bits,
            height: t.height(),
            dummies: t.dummy_count(),
            ws_t: ws,
            ws_log_t: (ws.max(1) as f64).log2(),
            direct_link_level: report.direct_link_level,
            violations,
            monotonicity: report.monotonicity_violations,
            pair_lifts: report.pair_lifts,
        });
        self.last_report = Some(report);
        Ok(self.records.last().expect("pushed"))
    }

    pub fn run(&mut self, reqs: &[Request]) -> Result<()> {
        for &r in reqs {
            self.execute(r)?;
        }
        Ok(())
    }

    pub fn trace_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.records.len() + 1));
        s.push_str(CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(s, "{}", r.csv_row());
        }
        s
    }

    pub fn summary(&self) -> Summary {
        let recs = &self.records;
        let total_cost: u64 = recs.iter().map(|r| r.total).sum();
        let rho: u64 = recs.iter().map(|r| r.rho).sum();
        let count = recs.len().max(1) as f64;
        let mut kinds: BTreeMap<String, usize> = BTreeMap::new();
        for r in recs {
            for (k, c) in &r.violations {
                *kinds.entry(k.clone()).or_default() += c;
            }
        }
        let max_repeat_ratio = recs
            .iter()
            .filter(|r| r.ws_t < self.topology.real_count() as u64)
            .map(|r| r.d as f64 / ((r.ws_t + 1) as f64).log2())
            .fold(0.0, f64::max);
        Summary {
            avg_cost: if recs.is_empty() { 0.0 } else { total_cost as f64 / count },
            ws_bound: recs.iter().map(|r| r.ws_log_t).sum(),
            max_height: recs.iter().map(|r| r.height).max().unwrap_or(0),
            max_direct_link_level: recs.iter().map(|r| r.direct_link_level).max().unwrap_or(0),
            violations: kinds.values().sum(),
            requests: recs.len(),
            total_cost,
            avg_rho: if recs.is_empty() { 0.0 } else { rho as f64 / count },
            max_rho: recs.iter().map(|r| r.rho).max().unwrap_or(0),
            max_bits: recs.iter().map(|r| r.max_bits).max().unwrap_or(0),
            max_dummies: recs.iter().map(|r| r.dummies).max().unwrap_or(0),
            final_dummies: self.topology.dummy_count(),
            violation_kinds: kinds,
            monotonicity_diagnostics: recs.iter().filter(|r| r.monotonicity > 0).count(),
            pair_lifts: recs.iter().map(|r| r.pair_lifts).sum(),
            splits: self.splits.clone(),
            max_repeat_ratio,
            trace_sha256: hex::encode(Sha256::digest(self.trace_csv().as_bytes())),
            scenario_match: None,
            scenario_mismatches: Vec::new(),
        }
    }

    /// Generates the configured workload and runs it.
    pub fn run_config(cfg: &RunConfig) -> Result<RunOutput> {
        let reqs = cfg.workload.generate(cfg.n, cfg.requests, cfg.seed)?;
        let mut sim = Simulator::new(cfg)?;
        sim.run(&reqs)?;
        Ok(RunOutput { trace: sim.trace_csv(), summary: sim.summary(), topology: sim.topology.export() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunOutput {
    pub trace: String,
    pub summary: Summary,
    pub topology: String,
}

impl RunOutput {
    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serialises") + "\n"
    }

    /// Writes `<prefix>.trace.csv`, `<prefix>.summary.json` and
    /// `<prefix>.topology.json`.
    pub fn write(&self, prefix: &str) -> Result<Vec<String>> {
        let files = [
            (format!("{prefix}.trace.csv"), self.trace.as_str()),
            (format!("{prefix}.summary.json"), &self.summary_json()),
            (format!("{prefix}.topology.json"), self.topology.as_str()),
        ];
        if let Some(dir) = std::path::Path::new(&files[0].0).parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        for (path, body) in &files {
            std::fs::write(path, body)?;
        }
        Ok(files.into_iter().map(|(p, _)| p).collect())
    }
}
