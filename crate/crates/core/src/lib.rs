//! Secrecy-energy-efficiency optimization for an untrusted UAV relay serving
//! ground users over THz links.

pub mod bounds;
pub mod conic;
pub mod io;
pub mod orchestrator;
pub mod physics;
pub mod scenario;
pub mod subproblems;

pub use orchestrator::{run_scheme, RunOptions, RunReport, Scheme};
pub use physics::{FlightPlan, LinkGains, ResourceAllocation, SeeMetrics};
pub use scenario::{load_scenario, place_users, NodeLayout, ScenarioConfig, ScenarioError, Vec2};
pub use subproblems::{audit_constraints, AuditReport, Iterate, ObjectiveMode, Problem};
