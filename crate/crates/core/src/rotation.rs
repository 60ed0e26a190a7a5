//! Rotation numbers, continued fractions and closest-return times.
//!
//! Everything here is combinatorial: the orbit of the flat interval is
//! followed forward and its record approaches to `U` from either side are
//! the closest returns `q_n`.  Records alternate sides in runs whose lengths
//! are the partial quotients, so the digits of `ρ` can be read off the orbit
//! and compared digit by digit with a target while it is still being
//! generated.

use std::cmp::Ordering;

use rug::Float;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::map_core::{Family, FlatMap};

/// Partial quotients `a_1..a_N` with convergent data.
///
/// Indexing follows `q_0 = 1`, `q_1 = a_1`, `q_{n+1} = a_{n+1} q_n + q_{n-1}`
/// and `p_0 = 0`, `p_1 = 1`, `p_{n+1} = a_{n+1} p_n + p_{n-1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ContinuedFraction {
    pub partial_quotients: Vec<u64>,
    pub q: Vec<u64>,
    pub p: Vec<u64>,
}

impl ContinuedFraction {
    pub fn from_quotients(a: &[u64]) -> Result<Self> {
        if let Some(pos) = a.iter().position(|&x| x == 0) {
            return Err(Error::InvalidParameter(format!("partial quotient a_{} is zero", pos + 1)));
        }
        let mut q = vec![1u64];
        let mut p = vec![0u64];
        if let Some(&a1) = a.first() {
            q.push(a1);
            p.push(1);
        }
        for (i, &ai) in a.iter().enumerate().skip(1) {
            let next = |v: &Vec<u64>| {
                ai.checked_mul(v[i]).and_then(|x| x.checked_add(v[i - 1])).ok_or_else(|| {
                    Error::PrecisionExhausted(format!("convergent denominator overflows at depth {}", i + 1))
                })
            };
            let qn = next(&q)?;
            let pn = next(&p)?;
            q.push(qn);
            p.push(pn);
        }
        Ok(ContinuedFraction { partial_quotients: a.to_vec(), q, p })
    }

    pub fn depth(&self) -> usize {
        self.partial_quotients.len()
    }

    /// `a_n` in one-based indexing.
    pub fn a(&self, n: usize) -> u64 {
        self.partial_quotients[n - 1]
    }

    /// `p_n / q_n` at the given precision.
    pub fn convergent(&self, n: usize, prec: u32) -> Float {
        Float::with_val(prec, self.p[n]) / Float::with_val(prec, self.q[n])
    }

    /// Value of the finite continued fraction `[0; a_1, ..., a_N]`.
    pub fn value(&self, prec: u32) -> Float {
        self.convergent(self.depth(), prec)
    }

    /// The first `depth` levels.
    pub fn truncate(&self, depth: usize) -> ContinuedFraction {
        let d = depth.min(self.depth());
        ContinuedFraction {
            partial_quotients: self.partial_quotients[..d].to_vec(),
            q: self.q[..=d].to_vec(),
            p: self.p[..=d].to_vec(),
        }
    }
}

/// Finite-depth bounded-type check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BoundedTypeCertificate {
    pub bound: u64,
    pub checked_depth: usize,
    pub holds: bool,
}

pub fn is_bounded_type(cf: &ContinuedFraction, m: u64) -> BoundedTypeCertificate {
    BoundedTypeCertificate { bound: m, checked_depth: cf.depth(), holds: cf.partial_quotients.iter().all(|&a| a < m) }
}

/// Continued fraction of `rho` by the Gauss map.
pub fn continued_fraction(rho: &Float, depth: usize) -> Result<ContinuedFraction> {
    let prec = rho.prec();
    if !(*rho > 0 && *rho < 1) {
        return Err(Error::InvalidParameter("rho must lie in (0, 1)".into()));
    }
    let floor_tol = Float::with_val(prec, Float::i_exp(1, -(prec as i32) + 16));
    let mut x = rho.clone();
    let mut a = Vec::with_capacity(depth);
    for n in 1..=depth {
        if x < floor_tol {
            return Err(Error::PrecisionExhausted(format!(
                "Gauss-map remainder below working resolution at depth {n}"
            )));
        }
        let y = Float::with_val(prec, 1 / &x);
        let fl = y.clone().floor();
        let digit = fl
            .to_integer()
            .and_then(|i| i.to_u64())
            .ok_or_else(|| Error::PrecisionExhausted(format!("partial quotient a_{n} too large")))?;
        a.push(digit);
        x = y - fl;
    }
    ContinuedFraction::from_quotients(&a)
}

/// Side of `U` on which an orbit point approaches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    Left,
    Right,
}

/// Incremental closest-return bookkeeping for the orbit `f^m(U)`, `m >= 1`.
#[derive(Debug, Clone)]
struct ReturnTracker {
    best_right: Option<Float>,
    best_left: Option<Float>,
    events: Vec<(u64, Option<Side>)>,
}

impl ReturnTracker {
    fn new() -> Self {
        ReturnTracker { best_right: None, best_left: None, events: Vec::new() }
    }

    /// Feeds the orbit point `xf = f^m(U)` in `(u, 1)`; returns true on a record.
    fn feed(&mut self, m: u64, xf: &Float, u: &Float) -> bool {
        let dr = Float::with_val(xf.prec(), xf - u);
        let dl = Float::with_val(xf.prec(), 1 - xf);
        if self.events.is_empty() {
            self.best_right = Some(dr);
            self.best_left = Some(dl);
            self.events.push((m, None));
            return true;
        }
        let side = if dr < *self.best_right.as_ref().unwrap() {
            self.best_right = Some(dr);
            Side::Right
        } else if dl < *self.best_left.as_ref().unwrap() {
            self.best_left = Some(dl);
            Side::Left
        } else {
            return false;
        };
        if self.events[0].1.is_none() {
            self.events[0].1 = Some(match side {
                Side::Left => Side::Right,
                Side::Right => Side::Left,
            });
        }
        self.events.push((m, Some(side)));
        true
    }

    /// Completed return times `q_0, q_1, ...` and the last (open) record time.
    fn returns(&self) -> (Vec<u64>, Option<u64>) {
        if self.events.len() < 2 {
            return (vec![1], self.events.last().map(|e| e.0));
        }
        let mut ends = Vec::new();
        for w in self.events.windows(2) {
            if w[0].1 != w[1].1 {
                ends.push(w[0].0);
            }
        }
        let q = if self.events[0].1 == Some(Side::Right) {
            ends
        } else {
            let mut v = vec![1];
            v.extend(ends);
            v
        };
        (q, self.events.last().map(|e| e.0))
    }
}

fn digits_of(q: &[u64]) -> Vec<u64> {
    let mut d = Vec::new();
    if q.len() >= 2 {
        d.push(q[1]);
    }
    for n in 2..q.len() {
        d.push((q[n] - q[n - 2]) / q[n - 1]);
    }
    d
}

/// Outcome of comparing the rotation number of a map with a target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    Below,
    Above,
    /// The first `usize` digits agree.
    Agree(usize),
}

/// Sign of `ρ - target` when the first disagreement is at zero-based digit `k`.
fn digit_order(k: usize, mine: u64, theirs: u64) -> Comparison {
    let larger_is_smaller = k.is_multiple_of(2);
    match (mine > theirs, larger_is_smaller) {
        (true, true) | (false, false) => Comparison::Below,
        _ => Comparison::Above,
    }
}

fn slack(map: &FlatMap) -> Float {
    map.ulp_scale(16)
}

/// Follows the orbit of the flat interval, calling `visit` on every record
/// with the completed return times and the open record time.  `visit`
/// returns `Some` to stop.
fn follow_orbit<T>(map: &FlatMap, max_iter: u64, mut visit: impl FnMut(&[u64], Option<u64>) -> Option<T>) -> Result<T> {
    let prec = map.prec();
    let sl = slack(map);
    let upper = Float::with_val(prec, map.u() + &sl);
    let lower = Float::with_val(prec, 1 - &sl);
    let mut tracker = ReturnTracker::new();
    let mut x = map.t().clone();
    for m in 1..=max_iter {
        let k = x.clone().floor();
        let xf = Float::with_val(prec, &x - &k);
        if xf <= upper || xf >= lower {
            let mut rotations = k.to_f64() as u64;
            if xf >= lower {
                rotations += 1;
            }
            return Err(Error::RationalDetected { rotations, period: m });
        }
        if tracker.feed(m, &xf, map.u()) {
            let (q, open) = tracker.returns();
            if let Some(out) = visit(&q, open) {
                return Ok(out);
            }
        }
        x = map.eval_lift(&x);
    }
    Err(Error::PrecisionExhausted(format!("no decision after {max_iter} iterates")))
}

/// Default iteration cap for orbit-following routines.
const MAX_ITER: u64 = 50_000_000;

/// Closest-return times `q_0..q_depth` observed along the orbit of `U`.
pub fn first_return_times(map: &FlatMap, depth: usize) -> Result<ContinuedFraction> {
    let q = follow_orbit(map, MAX_ITER, |q, _| (q.len() > depth).then(|| q[..=depth].to_vec()))?;
    ContinuedFraction::from_quotients(&digits_of(&q))
}

/// All closest-return times up to `max_q` that the orbit determines.
///
/// Unlike [`first_return_times`] this does not fail when the map turns out
/// to be periodic: the return times completed before the orbit closed up
/// are returned.
pub fn return_times_upto(map: &FlatMap, max_q: u64) -> Result<ContinuedFraction> {
    let mut seen: Vec<u64> = vec![1];
    let cap = max_q.saturating_mul(4).saturating_add(64);
    let out = follow_orbit(map, cap, |q, open| {
        seen = q.to_vec();
        let done = q.last().is_some_and(|&x| x > max_q) || open.is_some_and(|m| m > max_q.saturating_mul(2));
        done.then_some(())
    });
    match out {
        Ok(()) | Err(Error::RationalDetected { .. }) | Err(Error::PrecisionExhausted(_)) => {}
        Err(e) => return Err(e),
    }
    let keep = seen.iter().take_while(|&&x| x <= max_q).count();
    ContinuedFraction::from_quotients(&digits_of(&seen[..keep.max(1)]))
}

/// Rotation number within `tol`, as the convergent `p_N / q_N` with
/// `1 / (q_N q_{N+1}) <= tol`.
pub fn rotation_number(map: &FlatMap, tol: f64) -> Result<Float> {
    let cf = rotation_cf(map, tol)?;
    Ok(cf.convergent(cf.depth() - 1, map.prec()))
}

/// Dynamical continued fraction deep enough that the second-to-last
/// convergent is within `tol`.
pub fn rotation_cf(map: &FlatMap, tol: f64) -> Result<ContinuedFraction> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }
    let q = follow_orbit(map, MAX_ITER, |q, _| {
        let n = q.len();
        if n >= 3 {
            let prod = q[n - 2] as f64 * q[n - 1] as f64;
            if 1.0 / prod <= tol {
                return Some(q.to_vec());
            }
        }
        None
    })?;
    ContinuedFraction::from_quotients(&digits_of(&q))
}

/// Compares `ρ(map)` with the continued fraction `target` digit by digit.
pub fn compare_rotation(map: &FlatMap, target: &[u64]) -> Result<Comparison> {
    let need = target.len();
    let tcf = ContinuedFraction::from_quotients(target)?;
    let cap = tcf.q[need].saturating_mul(4).saturating_add(64);
    let outcome = follow_orbit(map, cap, |q, open| {
        let d = digits_of(q);
        for (k, (&mine, &theirs)) in d.iter().zip(target).enumerate() {
            if mine != theirs {
                return Some(digit_order(k, mine, theirs));
            }
        }
        if d.len() >= need {
            return Some(Comparison::Agree(need));
        }
        // the open run already exceeds the target digit
        if let Some(m) = open {
            let k = d.len();
            let mut qq = q.to_vec();
            qq.push(m);
            let partial = if qq.len() == 2 {
                qq[1]
            } else {
                let n = qq.len() - 1;
                (qq[n] - qq[n - 2]) / qq[n - 1]
            };
            if k < need && partial > target[k] {
                return Some(digit_order(k, partial, target[k]));
            }
        }
        None
    });
    match outcome {
        Err(Error::RationalDetected { rotations, period }) => {
            let prec = map.prec();
            let val = Float::with_val(prec, rotations) / Float::with_val(prec, period);
            let tv = tcf.value(prec);
            Ok(match val.partial_cmp(&tv) {
                Some(std::cmp::Ordering::Less) => Comparison::Below,
                Some(std::cmp::Ordering::Greater) => Comparison::Above,
                // the truncated target itself: an infinite next digit
                _ => digit_order(need, u64::MAX, 1),
            })
        }
        other => other,
    }
}

/// Tunes `t` by bisection until the rotation number's first digits equal
/// `target`.
pub fn tune_to_cf(family: &Family, target: &[u64]) -> Result<FlatMap> {
    if target.is_empty() {
        return Err(Error::InvalidParameter("empty target continued fraction".into()));
    }
    ContinuedFraction::from_quotients(target)?;
    let prec = family.precision_bits;
    let mut lo = Float::with_val(prec, 0);
    let mut hi = Float::with_val(prec, 1);
    match compare_rotation(&family.with_t(&lo)?, target)? {
        Comparison::Below => {}
        _ => return Err(Error::TuningFailed("rotation number at t = 0 is not below the target".into())),
    }
    let floor_tol = Float::with_val(prec, Float::i_exp(1, -(prec as i32) + 8));
    loop {
        let mid = Float::with_val(prec, &lo + &hi) / 2;
        let map = family.with_t(&mid)?;
        match compare_rotation(&map, target)? {
            Comparison::Agree(_) => return Ok(map),
            Comparison::Below => lo = mid,
            Comparison::Above => hi = mid,
        }
        if Float::with_val(prec, &hi - &lo) < floor_tol {
            return Err(Error::PrecisionExhausted(format!(
                "bisection on t stalled before matching {} digits",
                target.len()
            )));
        }
    }
}

/// Tunes `t` so that `|ρ(f_t) - target_rho| <= tol`.
pub fn tune_parameter(family: &Family, target_rho: &Float, tol: f64) -> Result<FlatMap> {
    if !(*target_rho > 0 && *target_rho < 1) {
        return Err(Error::InvalidParameter("target rotation number must lie in (0, 1)".into()));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }
    let mut depth = 1;
    let digits = loop {
        let cf = continued_fraction(target_rho, depth).map_err(|e| match e {
            Error::PrecisionExhausted(_) => {
                Error::InvalidParameter("target rotation number is rational at working precision".into())
            }
            other => other,
        })?;
        let n = cf.depth();
        // agreement on n digits pins ρ inside a cylinder of length 1/(q_n(q_n + q_{n-1}))
        let width = 1.0 / (cf.q[n] as f64 * (cf.q[n] + cf.q[n - 1]) as f64);
        if width <= tol {
            break cf.partial_quotients;
        }
        depth += 1;
    };
    tune_to_cf(family, &digits)
}

/// Position of `-i ρ mod 1` for the rigid rotation, using the convergent
/// `p / q` (exact for `i < q`), as the integer `(-i p) mod q`.
pub fn rigid_position(i: u64, p: u64, q: u64) -> u64 {
    let r = ((i as u128 * p as u128) % q as u128) as u64;
    if r == 0 {
        0
    } else {
        q - r
    }
}

/// Orders two convergent-based positions.
pub fn cmp_rigid(a: u64, b: u64) -> Ordering {
    a.cmp(&b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recurrence_from_quotients() {
        let cf = ContinuedFraction::from_quotients(&[1, 2, 3]).unwrap();
        assert_eq!(cf.q, vec![1, 1, 3, 10]);
        assert_eq!(cf.p, vec![0, 1, 2, 7]);
    }

    #[test]
    fn golden_and_silver_expansions() {
        let prec = 256;
        let five = Float::with_val(prec, 5);
        let golden = (five.sqrt() - 1u32) / 2u32;
        let cf = continued_fraction(&golden, 12).unwrap();
        assert!(cf.partial_quotients.iter().all(|&a| a == 1));
        assert_eq!(&cf.q[..8], &[1, 1, 2, 3, 5, 8, 13, 21]);
        let silver = Float::with_val(prec, 2).sqrt() - 1u32;
        let cf = continued_fraction(&silver, 8).unwrap();
        assert!(cf.partial_quotients.iter().all(|&a| a == 2));
        assert_eq!(&cf.q[..5], &[1, 2, 5, 12, 29]);
    }

    #[test]
    fn convergents_sandwich_rho() {
        let prec = 256;
        let golden = (Float::with_val(prec, 5).sqrt() - 1u32) / 2u32;
        let cf = continued_fraction(&golden, 20).unwrap();
        for n in 1..19 {
            let lo = cf.convergent(n, prec);
            let hi = cf.convergent(n + 1, prec);
            let (a, b) = if lo < hi { (lo, hi) } else { (hi, lo) };
            assert!(a < golden && golden < b, "n = {n}");
            let err = Float::with_val(prec, &golden - cf.convergent(n, prec)).abs().to_f64();
            assert!(err < 1.0 / (cf.q[n] as f64 * cf.q[n + 1] as f64));
        }
    }

    #[test]
    fn rational_input_exhausts_gauss_map() {
        let half = Float::with_val(128, 0.5);
        assert!(matches!(continued_fraction(&half, 3), Err(Error::PrecisionExhausted(_))));
    }

    #[test]
    fn bounded_type_certificates() {
        let g = ContinuedFraction::from_quotients(&[1; 10]).unwrap();
        assert!(is_bounded_type(&g, 2).holds);
        let b = ContinuedFraction::from_quotients(&[1, 5, 1]).unwrap();
        assert!(!is_bounded_type(&b, 3).holds);
        let e = ContinuedFraction::from_quotients(&[]).unwrap();
        let c = is_bounded_type(&e, 1);
        assert!(c.holds);
        assert_eq!(c.checked_depth, 0);
    }

    #[test]
    fn digit_order_alternates() {
        // a larger first digit means a smaller number
        assert_eq!(digit_order(0, 2, 1), Comparison::Below);
        assert_eq!(digit_order(1, 2, 1), Comparison::Above);
        assert_eq!(digit_order(2, 1, 3), Comparison::Above);
    }

    #[test]
    fn fixed_interval_is_rational() {
        let fam = Family::new(0.5, 3.0, 3.0, 128).unwrap();
        let map = fam.with_t(&Float::with_val(128, 0.2)).unwrap();
        assert!(matches!(first_return_times(&map, 3), Err(Error::RationalDetected { period: 1, .. })));
    }

    #[test]
    fn rigid_positions_follow_the_convergent() {
        // golden convergent 13/21: -ρ ≈ 0.382 sits at 8/21
        assert_eq!(rigid_position(1, 13, 21), 8);
        assert_eq!(rigid_position(0, 13, 21), 0);
    }
}
