//! C bindings for the `dsg` simulator.
//!
//! Every function returns a [`DsgStatus`]; results come back through out
//! pointers. Handles are opaque and must be released with their `_free`
//! function. Strings returned by the library are owned by the caller and
//! released with [`dsg_string_free`]. After a failure,
//! [`dsg_last_error`] describes it on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dsg::simulator::{Checks, RunConfig, Simulator};
use dsg::workload::Request;
use dsg::{DsgError, Topology};

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DsgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownNode = 3,
    Config = 4,
    Parse = 5,
    Io = 6,
    InvalidTopology = 7,
    Panic = 8,
}

/// A running simulation.
pub struct DsgSimulator {
    sim: Simulator,
}

/// A detached copy of a skip graph.
pub struct DsgTopology {
    topology: Topology,
}

/// Measurements for one executed request.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DsgRequestResult {
    /// Intermediate nodes on the routing path.
    pub distance: u64,
    /// Rounds spent on the transformation.
    pub rho: u64,
    pub total: u64,
    pub alpha: u64,
    pub direct_link_level: u64,
    pub height: u64,
    pub dummies: u64,
    pub max_bits: u32,
    pub violations: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &DsgError) -> DsgStatus {
    match e {
        DsgError::UnknownNode(_) | DsgError::DummyEndpoint(_) => DsgStatus::UnknownNode,
        DsgError::Config(_) | DsgError::BalanceTooSmall(_) => DsgStatus::Config,
        DsgError::Parse(_) => DsgStatus::Parse,
        DsgError::Io(_) => DsgStatus::Io,
        DsgError::Invalid(_) => DsgStatus::InvalidTopology,
        _ => DsgStatus::InvalidArgument,
    }
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (DsgStatus, String)>) -> DsgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DsgStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            DsgStatus::Panic
        }
    }
}

fn lib(e: DsgError) -> (DsgStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (DsgStatus, String) {
    (DsgStatus::NullPointer, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, (DsgStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (DsgStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn give_string(out: *mut *mut c_char, s: String) -> Result<(), (DsgStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    let c = CString::new(s).map_err(|_| (DsgStatus::InvalidArgument, "string holds a nul byte".to_string()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, (DsgStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (DsgStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Static description of a status code. Never null.
#[no_mangle]
pub extern "C" fn dsg_status_message(status: DsgStatus) -> *const c_char {
    let s: &'static CStr = match status {
        DsgStatus::Ok => c"ok",
        DsgStatus::NullPointer => c"null pointer argument",
        DsgStatus::InvalidArgument => c"invalid argument",
        DsgStatus::UnknownNode => c"unknown or dummy node",
        DsgStatus::Config => c"invalid configuration",
        DsgStatus::Parse => c"parse error",
        DsgStatus::Io => c"i/o error",
        DsgStatus::InvalidTopology => c"invalid topology",
        DsgStatus::Panic => c"internal error",
    };
    s.as_ptr()
}

/// Message for the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dsg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dsg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// New simulation over ids `1..=n` with balance `a`, validating after every
/// request.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dsg_simulator_new(n: usize, a: usize, seed: u64, out: *mut *mut DsgSimulator) -> DsgStatus {
    guard(|| {
        let out = handle_mut(out, "out")?;
        let cfg = RunConfig { n, a, seed, checks: Checks::Full, ..RunConfig::default() };
        let sim = Simulator::new(&cfg).map_err(lib)?;
        *out = Box::into_raw(Box::new(DsgSimulator { sim }));
        Ok(())
    })
}

/// New simulation from a JSON run configuration. `requests`, `workload` and
/// `out` are ignored; requests come from [`dsg_simulator_execute`].
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dsg_simulator_from_config(json: *const c_char, out: *mut *mut DsgSimulator) -> DsgStatus {
    guard(|| {
        let out = handle_mut(out, "out")?;
        let cfg: RunConfig = serde_json::from_str(text(json, "json")?).map_err(|e| (DsgStatus::Config, e.to_string()))?;
        let sim = Simulator::new(&cfg).map_err(lib)?;
        *out = Box::into_raw(Box::new(DsgSimulator { sim }));
        Ok(())
    })
}

/// Releases a simulation. Null is ignored.
///
/// # Safety
/// `sim` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dsg_simulator_free(sim: *mut DsgSimulator) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Routes `u` to `v` at `time`, transforms, and reports the cost. `result`
/// may be null.
///
/// # Safety
/// `sim` must be a live handle; `result` null or valid.
#[no_mangle]
pub unsafe extern "C" fn dsg_simulator_execute(
    sim: *mut DsgSimulator,
    time: u64,
    u: u64,
    v: u64,
    result: *mut DsgRequestResult,
) -> DsgStatus {
    guard(|| {
        let s = handle_mut(sim, "sim")?;
        let r = s.sim.execute(Request { time, u, v }).map_err(lib)?;
        if let Some(out) = result.as_mut() {
            *out = DsgRequestResult {
                distance: r.d as u64,
                rho: r.rho,
                total: r.total,
                alpha: r.alpha as u64,
                direct_link_level: r.direct_link_level as u64,
                height: r.height as u64,
                dummies: r.dummies as u64,
                max_bits: r.max_bits,
                violations: r.violation_count() as u64,
            };
        }
        Ok(())
    })
}

/// Summary of all executed requests as JSON.
///
/// # Safety
/// `sim` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dsg_simulator_summary_json(sim: *const DsgSimulator, out: *mut *mut c_char) -> DsgStatus {
    guard(|| {
        let s = handle(sim, "sim")?;
        give_string(out, serde_json::to_string_pretty(&s.sim.summary()).expect("summary serialises"))
    })
}

/// Per-request trace as CSV with a header line.
///
/// # Safety
/// `sim` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dsg_simulator_trace_csv(sim: *const DsgSimulator, out: *mut *mut c_char) -> DsgStatus {
    guard(|| give_string(out, handle(sim, "sim")?.sim.trace_csv()))
}

/// Copies the current graph into a new topology handle.
///
/// # Safety
/// `sim` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dsg_simulator_topology(sim: *const DsgSimulator, out: *mut *mut DsgTopology) -> DsgStatus {
    guard(|| {
        let s = handle(sim, "sim")?;
        let out = handle_mut(out, "out")?;
        *out = Box::into_raw(Box::new(DsgTopology { topology: s.sim.topology().clone() }));
        Ok(())
    })
}

/// Runs a whole configuration and returns its summary JSON.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dsg_run_config(json: *const c_char, out: *mut *mut c_char) -> DsgStatus {
    guard(|| {
        let cfg: RunConfig = serde_json::from_str(text(json, "json")?).map_err(|e| (DsgStatus::Config, e.to_string()))?;
        let res = dsg::cli::run_one(&cfg, None).map_err(lib)?;
        give_string(out, res.summary_json())
    })
}

/// Parses a topology dump.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dsg_topology_parse(json: *const c_char, out: *mut *mut DsgTopology) -> DsgStatus {
    guard(|| {
        let out = handle_mut(out, "out")?;
        let topology = Topology::parse(text(json, "json")?).map_err(lib)?;
        *out = Box::into_raw(Box::new(DsgTopology { topology }));
        Ok(())
    })
}

/// Canonical JSON dump of a topology.
///
/// # Safety
/// `topo` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dsg_topology_export(topo: *const DsgTopology, out: *mut *mut c_char) -> DsgStatus {
    guard(|| give_string(out, handle(topo, "topo")?.topology.export()))
}

/// Releases a topology. Null is ignored.
///
/// # Safety
/// `topo` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dsg_topology_free(topo: *mut DsgTopology) {
    if !topo.is_null() {
        drop(Box::from_raw(topo));
    }
}

/// Number of intermediate nodes on the greedy route from `u` to `v`.
///
/// # Safety
/// `topo` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dsg_topology_route_distance(topo: *const DsgTopology, u: u64, v: u64, out: *mut u64) -> DsgStatus {
    guard(|| {
        let t = handle(topo, "topo")?;
        let out = handle_mut(out, "out")?;
        *out = dsg::route(&t.topology, u, v).map_err(lib)?.distance() as u64;
        Ok(())
    })
}

/// Height, real node count, dummy count and violation count.
///
/// # Safety
/// `topo` must be a live handle; each out pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn dsg_topology_stats(
    topo: *const DsgTopology,
    height: *mut u64,
    nodes: *mut u64,
    dummies: *mut u64,
    violations: *mut u64,
) -> DsgStatus {
    guard(|| {
        let t = &handle(topo, "topo")?.topology;
        let put = |p: *mut u64, v: usize| {
            if let Some(p) = p.as_mut() {
                *p = v as u64;
            }
        };
        put(height, t.height());
        put(nodes, t.real_count());
        put(dummies, t.dummy_count());
        put(violations, t.validate().violations.len());
        Ok(())
    })
}
