use stsmc_bench::{ripple_case, tuning_problems};
use stsmc_core::tune_gains;

#[test]
fn ripple_case_is_under_tuned() {
    let (g, spec) = ripple_case();
    assert!(g.is_under_tuned(spec.rate_bound()));
    assert_eq!(spec.period(), 0.25);
}

#[test]
fn tuning_problems_are_feasible() {
    for (name, p) in tuning_problems() {
        assert!(tune_gains(&p).unwrap().feasible, "{name}");
    }
}
