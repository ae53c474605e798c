//! Command-line front end. `dsg [FLAGS]` runs one simulation; flags
//! override values read from `--config`.

use std::path::PathBuf;

use clap::Parser;
use serde::Serialize;

use crate::error::{DsgError, Result};
use crate::scenario::{builtin, Scenario};
use crate::simulator::{RunConfig, RunOutput, Simulator};
use crate::workload::{parse_replay, Request, Workload};

/// Exit status for a clean run.
pub const EXIT_OK: i32 = 0;
/// Exit status when the summary reports invariant violations.
pub const EXIT_VIOLATIONS: i32 = 1;
/// Exit status for bad arguments, I/O failures and aborted runs.
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "dsg", version, about = "Locally self-adjusting skip graph simulator")]
pub struct Args {
    /// JSON file with RunConfig keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long = "balance-a")]
    pub balance_a: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// uniform, zipf, repeated_pair, cluster or replay, optionally with a
    /// parameter as in `zipf(1.5)`.
    #[arg(long)]
    pub workload: Option<String>,
    #[arg(long = "zipf-s")]
    pub zipf_s: Option<f64>,
    #[arg(long = "pair-prob")]
    pub pair_prob: Option<f64>,
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub requests: Option<usize>,
    /// File of `t u v` lines; implies the replay workload.
    #[arg(long)]
    pub replay: Option<String>,
    /// `full` or `sampled(rate)`.
    #[arg(long)]
    pub checks: Option<String>,
    /// Output prefix for the trace, summary and topology files.
    #[arg(long)]
    pub out: Option<String>,
    /// Runs this many consecutive seeds in parallel.
    #[arg(long = "parallel-seeds")]
    pub parallel_seeds: Option<usize>,
    /// Built-in scenario name or scenario JSON file; the run starts from
    /// its graph instead of a fresh one.
    #[arg(long)]
    pub scenario: Option<String>,
}

impl Args {
    /// Merges the config file and flags.
    pub fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                serde_json::from_str(&text).map_err(|e| DsgError::Config(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(n) = self.nodes {
            cfg.n = n;
        }
        if let Some(a) = self.balance_a {
            cfg.a = a;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(w) = &self.workload {
            cfg.workload = w.parse()?;
        }
        if let Some(path) = &self.replay {
            cfg.workload = Workload::Replay { path: path.clone() };
        }
        match &mut cfg.workload {
            Workload::Zipf { s } => *s = self.zipf_s.unwrap_or(*s),
            Workload::RepeatedPair { p } => *p = self.pair_prob.unwrap_or(*p),
            Workload::Cluster { k } => *k = self.clusters.unwrap_or(*k),
            Workload::Replay { path } if path.is_empty() => {
                return Err(DsgError::Config("replay workload needs --replay FILE".into()))
            }
            _ => {}
        }
        if let Some(r) = self.requests {
            cfg.requests = r;
        }
        if let Some(c) = &self.checks {
            cfg.checks = c.parse()?;
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        if self.scenario.is_none() {
            cfg.check()?;
        }
        Ok(cfg)
    }
}

/// Loads a built-in scenario by name or a scenario JSON file.
pub fn load_scenario(name: &str) -> Result<Scenario> {
    match builtin(name) {
        Some(s) => Ok(s),
        None => Scenario::parse(&std::fs::read_to_string(name)?),
    }
}

#[derive(Serialize)]
struct AbortDump<'a> {
    error: String,
    config: &'a RunConfig,
    completed_requests: usize,
    failed_request: Option<Request>,
    topology: serde_json::Value,
}

/// Runs `cfg`; on an engine error writes `<out>.abort.json` holding the
/// graph as it stood before the failing request.
pub fn run_one(cfg: &RunConfig, scenario: Option<&Scenario>) -> Result<RunOutput> {
    let (mut sim, reqs) = match scenario {
        Some(sc) => {
            let t = sc.topology()?;
            let reqs = match cfg.workload {
                Workload::Replay { ref path } => parse_replay(&std::fs::read_to_string(path)?)?,
                _ => vec![Request { time: sc.time, u: sc.u, v: sc.v }],
            };
            (Simulator::from_topology(t, cfg.seed, cfg.checks), reqs)
        }
        None => (Simulator::new(cfg)?, cfg.workload.generate(cfg.n, cfg.requests, cfg.seed)?),
    };
    let mut mismatches = None;
    for (i, &req) in reqs.iter().enumerate() {
        let before = sim.topology().export();
        let res = match scenario {
            Some(sc) if (req.time, req.u, req.v) == (sc.time, sc.u, sc.v) => {
                let res = sim.execute_with(&sc.request()).map(|_| ());
                if let (Ok(()), Some(rep)) = (&res, sim.last_report()) {
                    mismatches = Some(sc.expect.check(sim.topology(), rep));
                }
                res
            }
            _ => sim.execute(req).map(|_| ()),
        };
        if let Err(e) = res {
            if let Some(prefix) = &cfg.out {
                let dump = AbortDump {
                    error: e.to_string(),
                    config: cfg,
                    completed_requests: i,
                    failed_request: Some(req),
                    topology: serde_json::from_str(&before).unwrap_or(serde_json::Value::Null),
                };
                let body = serde_json::to_string_pretty(&dump).expect("dump serialises");
                std::fs::write(format!("{prefix}.abort.json"), body + "\n")?;
            }
            return Err(e);
        }
    }
    let mut summary = sim.summary();
    if let Some(sc) = scenario {
        let m = mismatches.unwrap_or_else(|| vec![format!("request ({}, {}, {}) was not replayed", sc.time, sc.u, sc.v)]);
        summary.scenario_match = Some(m.is_empty());
        summary.scenario_mismatches = m;
    }
    let out = RunOutput { trace: sim.trace_csv(), summary, topology: sim.topology().export() };
    if let Some(prefix) = &cfg.out {
        out.write(prefix)?;
    }
    Ok(out)
}

fn exit_code(out: &RunOutput) -> i32 {
    if out.summary.violations == 0 && out.summary.scenario_match != Some(false) {
        EXIT_OK
    } else {
        EXIT_VIOLATIONS
    }
}

/// Parses arguments, runs, prints the summary JSON and returns the exit
/// status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match execute(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("dsg: {e}");
            EXIT_ERROR
        }
    }
}

fn execute(args: &Args) -> Result<i32> {
    let cfg = args.config()?;
    let scenario = args.scenario.as_deref().map(load_scenario).transpose()?;
    let k = args.parallel_seeds.unwrap_or(1);
    if k == 0 {
        return Err(DsgError::Config("--parallel-seeds must be at least 1".into()));
    }
    if k == 1 {
        let out = run_one(&cfg, scenario.as_ref())?;
        print!("{}", out.summary_json());
        return Ok(exit_code(&out));
    }
    let cfgs: Vec<RunConfig> = (0..k as u64)
        .map(|i| {
            let seed = cfg.seed.wrapping_add(i);
            RunConfig { seed, out: cfg.out.as_ref().map(|p| format!("{p}.seed{seed}")), ..cfg.clone() }
        })
        .collect();
    let results: Vec<Result<RunOutput>> = std::thread::scope(|s| {
        let handles: Vec<_> = cfgs.iter().map(|c| s.spawn(|| run_one(c, scenario.as_ref()))).collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });
    let mut code = EXIT_OK;
    let mut rows = Vec::new();
    for (c, r) in cfgs.iter().zip(results) {
        let out = r?;
        code = code.max(exit_code(&out));
        rows.push(serde_json::json!({ "seed": c.seed, "summary": out.summary }));
    }
    println!("{}", serde_json::to_string_pretty(&rows).expect("summaries serialise"));
    Ok(code)
}
