//! Simulation harness, scenario files, oracles and command-line front end
//! for the `fdrm-core` matching engine.

pub mod cli;
pub mod emit;
pub mod experiments;
pub mod oracle;
pub mod pool;
pub mod scenario;
pub mod sim;

pub use pool::SharedPool;
pub use scenario::{generate_scenario, Scenario, ScenarioConfig, ScenarioError, TimedRequest};
pub use sim::{run_simulation, AcceptanceModel, SimError, SimOptions, SimReport};
