use std::ffi::{CStr, CString};
use std::ptr;

use dsg_ffi::*;

unsafe fn take(s: *mut std::ffi::c_char) -> String {
    let out = CStr::from_ptr(s).to_str().unwrap().to_string();
    dsg_string_free(s);
    out
}

#[test]
fn simulate_through_handles() {
    unsafe {
        let mut sim = ptr::null_mut();
        assert_eq!(dsg_simulator_new(8, 3, 1, &mut sim), DsgStatus::Ok);
        let mut res = DsgRequestResult::default();
        assert_eq!(dsg_simulator_execute(sim, 1, 1, 5, &mut res), DsgStatus::Ok);
        assert_eq!(res.total, res.distance + res.rho + 1);
        assert_eq!(dsg_simulator_execute(sim, 2, 1, 5, &mut res), DsgStatus::Ok);
        assert_eq!(res.distance, 0);

        let mut topo = ptr::null_mut();
        assert_eq!(dsg_simulator_topology(sim, &mut topo), DsgStatus::Ok);
        let mut d = 99;
        assert_eq!(dsg_topology_route_distance(topo, 1, 5, &mut d), DsgStatus::Ok);
        assert_eq!(d, 0);
        let mut nodes = 0;
        assert_eq!(dsg_topology_stats(topo, ptr::null_mut(), &mut nodes, ptr::null_mut(), ptr::null_mut()), DsgStatus::Ok);
        assert_eq!(nodes, 8);

        let mut s = ptr::null_mut();
        assert_eq!(dsg_topology_export(topo, &mut s), DsgStatus::Ok);
        let dump = CString::new(take(s)).unwrap();
        let mut back = ptr::null_mut();
        assert_eq!(dsg_topology_parse(dump.as_ptr(), &mut back), DsgStatus::Ok);
        let mut s = ptr::null_mut();
        assert_eq!(dsg_topology_export(back, &mut s), DsgStatus::Ok);
        assert_eq!(take(s).as_bytes(), dump.as_bytes());

        let mut s = ptr::null_mut();
        assert_eq!(dsg_simulator_trace_csv(sim, &mut s), DsgStatus::Ok);
        assert_eq!(take(s).lines().count(), 3);
        let mut s = ptr::null_mut();
        assert_eq!(dsg_simulator_summary_json(sim, &mut s), DsgStatus::Ok);
        assert!(take(s).contains("\"requests\": 2"));

        dsg_topology_free(back);
        dsg_topology_free(topo);
        dsg_simulator_free(sim);
    }
}

#[test]
fn errors_map_to_codes() {
    unsafe {
        let mut sim = ptr::null_mut();
        assert_eq!(dsg_simulator_new(8, 1, 1, &mut sim), DsgStatus::Config);
        assert!(sim.is_null());
        let msg = CStr::from_ptr(dsg_last_error()).to_str().unwrap();
        assert!(msg.contains("balance"), "{msg}");

        assert_eq!(dsg_simulator_new(8, 3, 1, ptr::null_mut()), DsgStatus::NullPointer);
        assert_eq!(dsg_simulator_execute(ptr::null_mut(), 1, 1, 2, ptr::null_mut()), DsgStatus::NullPointer);

        assert_eq!(dsg_simulator_new(8, 3, 1, &mut sim), DsgStatus::Ok);
        assert_eq!(dsg_simulator_execute(sim, 1, 1, 42, ptr::null_mut()), DsgStatus::UnknownNode);
        assert_eq!(dsg_simulator_execute(sim, 1, 3, 3, ptr::null_mut()), DsgStatus::InvalidArgument);
        dsg_simulator_free(sim);

        let bad = CString::new("{ not json").unwrap();
        let mut topo = ptr::null_mut();
        assert_eq!(dsg_topology_parse(bad.as_ptr(), &mut topo), DsgStatus::Parse);
        let cfg = CString::new(r#"{"n": 4, "extra": 1}"#).unwrap();
        assert_eq!(dsg_simulator_from_config(cfg.as_ptr(), &mut sim), DsgStatus::Config);

        let text = CStr::from_ptr(dsg_status_message(DsgStatus::UnknownNode)).to_str().unwrap();
        assert_eq!(text, "unknown or dummy node");
        dsg_string_free(ptr::null_mut());
        dsg_simulator_free(ptr::null_mut());
        dsg_topology_free(ptr::null_mut());
    }
}

#[test]
fn whole_run_from_config() {
    unsafe {
        let cfg = CString::new(r#"{"n": 6, "a": 3, "seed": 2, "requests": 12}"#).unwrap();
        let mut s = ptr::null_mut();
        assert_eq!(dsg_run_config(cfg.as_ptr(), &mut s), DsgStatus::Ok);
        let summary: serde_json::Value = serde_json::from_str(&take(s)).unwrap();
        assert_eq!(summary["requests"], 12);
        let mut sim = ptr::null_mut();
        assert_eq!(dsg_simulator_from_config(cfg.as_ptr(), &mut sim), DsgStatus::Ok);
        dsg_simulator_free(sim);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/dsg.h")).unwrap();
    for name in [
        "typedef struct DsgSimulator DsgSimulator",
        "typedef struct DsgTopology DsgTopology",
        "DSG_STATUS_UNKNOWN_NODE",
        "dsg_simulator_new",
        "dsg_simulator_execute",
        "dsg_topology_route_distance",
        "dsg_string_free",
        "dsg_last_error",
    ] {
        assert!(header.contains(name), "{name}");
    }
}
