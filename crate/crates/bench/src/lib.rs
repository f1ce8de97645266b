//! Shared fixtures for the benchmarks.

use stsmc_core::scenarios::ripple_rate;
use stsmc_core::{Gains, PerturbationSpec, TuningProblem};

/// Under-tuned operating point with `L = 2.5`, `T = 0.25`.
pub fn ripple_case() -> (Gains, PerturbationSpec) {
    let spec = ripple_rate(2.5, 0.25).expect("valid ripple");
    (Gains { k1: 1.76, k2: 1.08 }, spec)
}

pub fn tuning_problems() -> Vec<(&'static str, TuningProblem)> {
    vec![
        ("target_met", TuningProblem::new(2.5, 0.25, 0.01, 1e-3)),
        ("saturated", TuningProblem::new(25.0, 2.0, 0.01, 1e-3)),
    ]
}
