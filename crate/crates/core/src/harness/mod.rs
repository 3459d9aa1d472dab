//! Simulation harness: coupled ODE, fixed-step integration, scenario
//! catalog and CSV output.

pub mod checks;
pub mod config;
pub mod exponential;
pub mod integrator;
pub mod pipeline;
pub mod record;
pub mod scenario;

pub use config::{
    catalog, catalog_entry, input_signal, load_config, parse_config, EstimatorChain, InputKind, LreInit, Overrides,
    Parameterization, ScenarioConfig,
};
pub use integrator::{integrate, OdeSystem, Rk4};
pub use pipeline::{CoupledSystem, Signals};
pub use record::{header, write_csv, Sample, SCHEMA_VERSION};
pub use scenario::{output_path, run_scenario, simulate, Run, Summary};
