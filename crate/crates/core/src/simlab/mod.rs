//! Simulation lab: data-generating processes, response masking and replicated benchmarks.

pub mod bench;
pub mod dgp;
pub mod mask;
pub mod rng;
pub mod uss;

pub use bench::{run_benchmark, run_benchmark_on, EstimatorSpec, MetricsReport, ScenarioConfig, SourceSpec};
pub use dgp::{
    calibrate_sigma, discretized_normal, exact_tables, generate, illustrative_config, ConditionalSpec, Dgp,
    DgpConfig, LabeledRecord, MechanismPreset, MechanismSpec, PmfSpec,
};
pub use mask::{mask, Masked, Truth};
