//! Synthetic multi-domain benchmark: data generators, leave-one-domain-out
//! splits, and the method-comparison harness.

pub mod data;
pub mod runner;

pub use data::{
    gen_rotated_moons, gen_spurious_gaussians, pooled_batch, split_leave_one_out, Domain,
    DomainDataset, SplitDataset, SplitPlan,
};
pub use runner::{
    aggregate_csv, results_csv, run_experiment, run_suite, MethodAggregate, MethodKind,
    MethodSpec, OptimizerKind, RunResult, SuiteResult, SuiteSpec, TrainerConfig,
};
