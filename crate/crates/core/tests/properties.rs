//! Randomized invariants of the robustness quantities and the hierarchy.

mod common;

use amm::programs::{di_membership, DiOptions, ReportStatus};
use amm::scenario::CorrelationTable;
use common::invariants::{self, Check};
use proptest::prelude::*;

fn config() -> ProptestConfig {
    // Honors PROPTEST_CASES when set; never fewer than 100 seeds.
    let mut c = ProptestConfig::default();
    c.cases = c.cases.max(100);
    c.failure_persistence = None;
    c
}

fn holds(check: Check) -> std::result::Result<(), TestCaseError> {
    check.map_err(TestCaseError::fail)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn incompatibility_bounds_steering(seed in any::<u64>()) {
        holds(invariants::ir_bounds_sr(seed))?;
    }

    #[test]
    fn steering_equivalent_chain(seed in any::<u64>()) {
        holds(invariants::steering_equivalent_chain(seed))?;
    }

    #[test]
    fn separable_states_are_unsteerable(seed in any::<u64>()) {
        holds(invariants::separable_unsteerable(seed))?;
    }

    #[test]
    fn device_independent_bounds_are_lower_bounds(seed in any::<u64>()) {
        holds(invariants::di_below_trusted(seed))?;
    }

    #[test]
    fn tsirelson_bounds_tighten_with_level(seed in any::<u64>()) {
        holds(invariants::tsirelson_monotone(seed))?;
    }

    #[test]
    fn di_steering_bounds_grow_with_level(seed in any::<u64>()) {
        holds(invariants::di_sr_monotone(seed))?;
    }

    #[test]
    fn deterministic_tables_are_quantum(seed in any::<u64>()) {
        holds(invariants::deterministic_feasible(seed))?;
    }

    #[test]
    fn noisy_pr_boxes_beyond_tsirelson_are_rejected(seed in any::<u64>()) {
        holds(invariants::noisy_pr_box_infeasible(seed))?;
    }

    #[test]
    fn neumark_dilation_preserves_probabilities(seed in any::<u64>()) {
        let (diff, defect) = invariants::neumark_preserves(seed).map_err(TestCaseError::fail)?;
        prop_assert!(diff <= 1e-9, "probability change {diff:e}");
        prop_assert!(defect <= 1e-9, "projectivity defect {defect:e}");
    }
}

#[test]
fn pr_box_is_not_quantum_at_level_one() {
    let r = di_membership(&CorrelationTable::pr_box(), &DiOptions::level(1)).unwrap();
    assert_eq!(r.status, ReportStatus::Infeasible);
    assert!(r.value > 0.0);
}
