//! Experiment runner: scenario sweeps, SNR sweeps, runtime benchmarks, the
//! grow-M imaging procedure and the observation-budget check.

mod budget;
mod checks;
mod config;
mod experiment;
mod procedure;
pub mod seeds;

pub use budget::{check_observation_budget, BudgetCheck, ObservationBudget};
pub use checks::{
    physics_check, run_physics_check, run_validate_matrix, validate_matrix, BandwidthRow,
    MatrixEntry, PhysicsReport,
};
pub use config::{
    ExperimentConfig, PhantomConfig, PhysicsConfig, ProcedureConfig, QualityMode, Scenario,
};
pub use experiment::{
    benchmark_runtime, build_instance, build_phantom, build_sensing_matrix, display_image,
    image_file_name, run_scenario, runtime_trend, spearman, sweep_snr, trial_solver_config,
    CellFailure, ExperimentReport, Instance,
};
pub use procedure::{
    imaging_procedure, outside_energy_fraction, run_imaging_procedure, DebrisDecision,
    ProcedureOutcome, ProcedureStatus, ProcedureStep,
};
