use flatcircle_core::map_core::{arc, dist, fmt_decimal, frac, parse_decimal, signed_arc, CircleInterval, Family};
use flatcircle_core::partition::cross_ratio;
use flatcircle_core::rotation::{continued_fraction, ContinuedFraction};
use proptest::prelude::*;
use rug::Float;

const PREC: u32 = 192;

fn f(v: f64) -> Float {
    Float::with_val(PREC, v)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn arcs_add_up(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
        let (a, b, c) = (f(a), f(b), f(c));
        let sum = Float::with_val(PREC, arc(&a, &b) + arc(&b, &c));
        let direct = arc(&a, &c);
        // either the path is direct or it goes once around
        let d = Float::with_val(PREC, &sum - &direct);
        prop_assert!(d.clone().abs() < 1e-40 || (d - 1u32).abs() < 1e-40);
    }

    #[test]
    fn signed_arc_is_antisymmetric(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let s = Float::with_val(PREC, signed_arc(&f(a), &f(b)) + signed_arc(&f(b), &f(a)));
        prop_assert!(s.clone().abs() < 1e-40 || (s.abs() - 1u32).abs() < 1e-40);
        prop_assert!(dist(&f(a), &f(b)) <= 0.5);
    }

    #[test]
    fn relative_position_inverts_at(l in 0.0f64..1.0, len in 1e-6f64..0.99, s in 0.0f64..1.0) {
        let j = CircleInterval::new(f(l), frac(&f(l + len)));
        let x = j.at(&f(s));
        prop_assert!(j.contains_closed(&x));
        prop_assert!((j.relative(&x) - f(s)).abs() < 1e-30);
    }

    #[test]
    fn decimal_strings_round_trip(v in 0.0f64..1.0) {
        let x = Float::with_val(PREC, v) / 7u32;
        prop_assert_eq!(parse_decimal(&fmt_decimal(&x), PREC).unwrap(), x);
    }

    #[test]
    fn quotients_give_coprime_convergents(a in prop::collection::vec(1u64..6, 1..12)) {
        let cf = ContinuedFraction::from_quotients(&a).unwrap();
        for n in 1..cf.q.len() {
            // p_n q_{n-1} - p_{n-1} q_n = ±1
            let cross = cf.p[n] as i128 * cf.q[n - 1] as i128 - cf.p[n - 1] as i128 * cf.q[n] as i128;
            prop_assert_eq!(cross.abs(), 1);
        }
        // a trailing 1 may merge into the previous quotient
        if a.len() >= 3 {
            let k = a.len() - 2;
            let back = continued_fraction(&cf.value(PREC), k).unwrap();
            prop_assert_eq!(&back.partial_quotients[..k], &a[..k]);
        }
    }

    #[test]
    fn cross_ratio_is_rotation_invariant(
        mut s in prop::collection::vec(0.0f64..1.0, 4),
        shift in 0.0f64..1.0,
    ) {
        s.sort_by(f64::total_cmp);
        prop_assume!(s.windows(2).all(|w| w[1] - w[0] > 1e-6));
        let p: Vec<Float> = s.iter().map(|&v| f(v)).collect();
        let q: Vec<Float> = p.iter().map(|v| frac(&Float::with_val(PREC, v + shift))).collect();
        let a = cross_ratio(&p[0], &p[1], &p[2], &p[3]).unwrap();
        let b = cross_ratio(&q[0], &q[1], &q[2], &q[3]).unwrap();
        prop_assert!((a.to_f64() - b.to_f64()).abs() < 1e-9 * a.to_f64().max(1.0));
    }

    #[test]
    fn preimage_point_inverts_the_map(t in 0.0f64..1.0, y in 0.0f64..1.0, ell in 2.0f64..5.0) {
        let map = Family::new(0.5, ell, ell, PREC).unwrap().with_t(&f(t)).unwrap();
        let x = map.preimage_point(&f(y));
        prop_assert!(x >= *map.u() && x <= 1);
        prop_assert!(dist(&map.eval(&x), &f(y)).to_f64() < 1e-40);
    }

    #[test]
    fn lift_is_monotone(t in 0.0f64..1.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let map = Family::new(0.4, 3.0, 2.5, PREC).unwrap().with_t(&f(t)).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(map.eval_lift(&f(lo)) <= map.eval_lift(&f(hi)));
    }
}
