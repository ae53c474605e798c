//! Locally self-adjusting skip graphs.
//!
//! The crate models a skip graph as a sorted base list with recursive 0/1
//! sublists and implements the distributed transformation that brings two
//! communicating nodes into a common size-2 list, the approximate median
//! subroutine it relies on, standard routing, and the oracles used to check
//! working-set behaviour.
//!
//! ```
//! use dsg::simulator::{RunConfig, Simulator};
//!
//! let cfg = RunConfig { n: 12, requests: 20, ..Default::default() };
//! let out = Simulator::run_config(&cfg).unwrap();
//! assert_eq!(out.summary.requests, 20);
//! assert_eq!(out.trace.lines().count(), 21);
//! ```

pub mod amf;
pub mod cli;
pub mod congest;
pub mod engine;
pub mod error;
pub mod oracle;
pub mod routing;
pub mod scenario;
pub mod simulator;
pub mod topology;
pub mod workload;

pub use engine::{Engine, EngineConfig, TransformReport};
pub use error::{DsgError, Result};
pub use routing::{route, RoutePath};
pub use topology::{Key, NodeId, NodeRecord, Topology, ValidationReport, Violation};
