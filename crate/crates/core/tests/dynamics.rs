use flatcircle_core::map_core::Family;
use flatcircle_core::partition::{comparability_stats, verify_refinement, PartitionBuilder};
use flatcircle_core::rotation::{first_return_times, rotation_number, tune_parameter, tune_to_cf};
use flatcircle_core::Error;
use rug::Float;

const FIB: [u64; 11] = [1, 1, 2, 3, 5, 8, 13, 21, 34, 55, 89];
const PELL: [u64; 8] = [1, 2, 5, 12, 29, 70, 169, 408];

fn golden_rho() -> Float {
    (Float::with_val(256, 5).sqrt() - 1u32) / 2u32
}

#[test]
fn golden_return_times_are_fibonacci() {
    let family = Family::new(0.5, 3.0, 3.0, 256).unwrap();
    let map = tune_parameter(&family, &golden_rho(), 1e-9).unwrap();
    let cf = first_return_times(&map, 10).unwrap();
    assert_eq!(&cf.q[..11], &FIB);
    let rho = rotation_number(&map, 1e-8).unwrap();
    assert!((rho - golden_rho()).abs().to_f64() < 1e-8);
}

#[test]
fn silver_return_times_are_pell() {
    let map = tune_to_cf(&Family::new(0.5, 3.0, 3.0, 256).unwrap(), &[2; 9]).unwrap();
    let cf = first_return_times(&map, 7).unwrap();
    assert_eq!(&cf.q[..8], &PELL);
}

#[test]
fn asymmetric_exponents_tune_too() {
    let map = tune_to_cf(&Family::new(0.3, 2.5, 4.0, 256).unwrap(), &[1; 12]).unwrap();
    let cf = first_return_times(&map, 10).unwrap();
    assert_eq!(&cf.q[..11], &FIB);
}

#[test]
fn partitions_refine_level_by_level() {
    let map = tune_to_cf(&Family::new(0.5, 3.0, 3.0, 256).unwrap(), &[1, 2, 1, 2, 1, 2, 1, 2, 1, 2, 1, 2]).unwrap();
    let mut b = PartitionBuilder::new(&map);
    for n in 1..8 {
        let coarse = b.level(n).unwrap().clone();
        let fine = b.level(n + 1).unwrap().clone();
        let r = verify_refinement(&coarse, &fine).unwrap();
        assert_eq!(r.a_next, if n % 2 == 0 { 2 } else { 1 });
        assert!(r.splits.iter().all(|s| s.long_gaps.len() as u64 == r.a_next));
    }
}

#[test]
fn gaps_shrink_and_scalings_stay_bounded() {
    let map = tune_to_cf(&Family::new(0.5, 3.0, 3.0, 256).unwrap(), &[1; 16]).unwrap();
    let mut b = PartitionBuilder::new(&map);
    let g = comparability_stats(&mut b, 2, 10).unwrap();
    assert!(g.max_gap_length_per_level.windows(2).all(|w| w[1] < w[0]));
    assert!(g.tau.iter().all(|&t| t > 0.1 && t < 1.0));
    assert!(g.min_preimage_to_gap > 0.5);
}

#[test]
fn deep_levels_are_refused() {
    let map = tune_to_cf(&Family::new(0.5, 3.0, 3.0, 256).unwrap(), &[1; 16]).unwrap();
    let mut b = PartitionBuilder::new(&map);
    assert!(matches!(b.level(99), Err(Error::PrecisionExhausted(_))));
    let mut small = PartitionBuilder::new(&map).with_max_preimages(100);
    assert!(matches!(small.level(10), Err(Error::BudgetExceeded(_))));
}
