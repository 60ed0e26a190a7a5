use flatcircle_core::analysis::{cross_ratio_bound_suite, estimate_q, phi_grid, transition_sweep, TransitionStatus};
use flatcircle_core::conjugacy::{extend_cantor_homeomorphism, Identity, NestedIntervalSystem};
use flatcircle_core::map_core::{Family, FlatMap};
use flatcircle_core::rotation::tune_to_cf;
use flatcircle_core::Error;
use rug::Float;

fn golden() -> FlatMap {
    tune_to_cf(&Family::new(0.5, 3.0, 3.0, 256).unwrap(), &[1; 16]).unwrap()
}

#[test]
fn identity_is_one_quasi_symmetric() {
    let id = Identity { precision: 128 };
    let r = estimate_q(&id, &[1e-2, 1e-4, 1e-6], 200, 3).unwrap();
    assert_eq!(r.scale_bins.len(), 3);
    assert!((r.global_max - 1.0).abs() < 1e-9);
    assert!(r.scale_bins.iter().all(|b| b.resolved_fraction == 1.0));
}

#[test]
fn reports_depend_only_on_the_seed() {
    let third = Float::with_val(128, 1) / 3u32;
    let fifth = Float::with_val(128, 1) / 5u32;
    let a = NestedIntervalSystem::uniform(&third, 10).unwrap();
    let b = NestedIntervalSystem::uniform(&fifth, 10).unwrap();
    let ev = extend_cantor_homeomorphism(&a, &b, 1e-12).unwrap();
    let scales = [2f64.powi(-5), 2f64.powi(-9)];
    let one = estimate_q(&ev, &scales, 300, 11).unwrap();
    let two = estimate_q(&ev, &scales, 300, 11).unwrap();
    assert_eq!(one, two);
    let other = estimate_q(&ev, &scales, 300, 12).unwrap();
    assert_ne!(one.scale_bins, other.scale_bins);
    assert!(one.global_max > 1.0 && one.global_max.is_finite());
}

#[test]
fn scales_outside_the_range_are_rejected() {
    let id = Identity { precision: 128 };
    assert!(matches!(estimate_q(&id, &[0.3], 10, 0), Err(Error::InvalidParameter(_))));
    let third = Float::with_val(128, 1) / 3u32;
    let a = NestedIntervalSystem::uniform(&third, 4).unwrap();
    let ev = extend_cantor_homeomorphism(&a, &a, 1e-6).unwrap();
    assert!(matches!(estimate_q(&ev, &[1e-6], 10, 0), Err(Error::InvalidParameter(_))));
}

#[test]
fn grid_is_monotone_for_cantor_systems() {
    let third = Float::with_val(128, 1) / 3u32;
    let fifth = Float::with_val(128, 1) / 5u32;
    let a = NestedIntervalSystem::uniform(&third, 8).unwrap();
    let b = NestedIntervalSystem::uniform(&fifth, 8).unwrap();
    let ev = extend_cantor_homeomorphism(&a, &b, 1e-12).unwrap();
    let pts = phi_grid(&ev, 512).unwrap();
    assert_eq!(pts.len(), 512);
    assert!(pts.windows(2).all(|w| w[0].1 <= w[1].1));
}

#[test]
fn transition_entries_are_bounded_by_their_interval() {
    let r = transition_sweep(&golden(), &[4, 5, 6]).unwrap();
    assert_eq!(r.entries.iter().map(|e| e.n).collect::<Vec<_>>(), vec![4, 5, 6]);
    for e in &r.entries {
        assert!(e.comparability_floor > 0.0 && e.comparability_floor < 1.0);
        assert!(e.pulled_a_length < e.p_length);
        assert_eq!(e.ratio.is_some(), e.status == TransitionStatus::Conclusive);
    }
    assert!(matches!(transition_sweep(&golden(), &[6, 4]), Err(Error::InvalidParameter(_))));
}

#[test]
fn cross_ratio_chains_are_finite_and_simple() {
    let s = cross_ratio_bound_suite(&golden(), 5, 50, 1).unwrap();
    assert_eq!(s.admissible, 50);
    assert!(s.all_finite);
    assert_eq!(s.max_multiplicity, 1);
    assert!(s.max_abs_log_ratio.is_finite());
}
