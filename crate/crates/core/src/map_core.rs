//! Flat-interval circle maps given by their lifts.
//!
//! The family used throughout is the incomplete-beta family
//!
//! ```text
//! F(x) = t                    for x in [0, u]
//! F(x) = t + I(x) / I(1)      for x in [u, 1]
//! I(x) = ∫_u^x (y - u)^(ℓr - 1) (1 - y)^(ℓl - 1) dy
//! ```
//!
//! extended by `F(x + 1) = F(x) + 1`.  The flat interval is `U = (0, u)` and
//! the critical exponents at its two ends are `ℓl` (at `0 ≡ 1`) and `ℓr` (at
//! `u`).  All arithmetic is carried out in MPFR through [`rug::Float`].

use std::cmp::Ordering;

use rug::ops::Pow;
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Extra bits carried inside the special-function evaluations.
const GUARD_BITS: u32 = 32;
/// Precision of the first Newton pass.
const LOW_PREC: u32 = 64;

/// Default working precision.
pub const DEFAULT_PRECISION: u32 = 256;

/// Reduces `x` to its fractional part in `[0, 1)`.
pub fn frac(x: &Float) -> Float {
    let mut r = Float::with_val(x.prec(), x - x.clone().floor());
    if r >= 1 {
        r -= 1;
    }
    r
}

/// Counter-clockwise arc length from `a` to `b`, in `[0, 1)`.
pub fn arc(a: &Float, b: &Float) -> Float {
    frac(&Float::with_val(a.prec().max(b.prec()), b - a))
}

/// Signed displacement from `a` to `b`, in `(-1/2, 1/2]`.
pub fn signed_arc(a: &Float, b: &Float) -> Float {
    let mut d = arc(a, b);
    if d > 0.5 {
        d -= 1;
    }
    d
}

/// Shortest-arc distance `|a, b|`.
pub fn dist(a: &Float, b: &Float) -> Float {
    let d = arc(a, b);
    if d > 0.5 {
        Float::with_val(d.prec(), 1 - d)
    } else {
        d
    }
}

/// An oriented arc of the circle running counter-clockwise from `left` to `right`.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleInterval {
    pub left: Float,
    pub right: Float,
}

impl CircleInterval {
    pub fn new(left: Float, right: Float) -> Self {
        CircleInterval { left: frac(&left), right: frac(&right) }
    }

    /// `l(·)` in the usual endpoint notation.
    pub fn l(&self) -> &Float {
        &self.left
    }

    /// `r(·)` in the usual endpoint notation.
    pub fn r(&self) -> &Float {
        &self.right
    }

    pub fn length(&self) -> Float {
        arc(&self.left, &self.right)
    }

    /// True when the arc crosses `0`.
    pub fn wraps(&self) -> bool {
        self.right < self.left
    }

    /// Membership in the open arc.
    pub fn contains_open(&self, x: &Float) -> bool {
        let off = arc(&self.left, x);
        off > 0 && off < self.length()
    }

    /// Membership in the closed arc.
    pub fn contains_closed(&self, x: &Float) -> bool {
        arc(&self.left, x) <= self.length()
    }

    /// True when `other` lies inside the closure of `self`.
    pub fn contains_interval(&self, other: &CircleInterval) -> bool {
        let len = self.length();
        let a = arc(&self.left, &other.left);
        let b = Float::with_val(len.prec(), &a + other.length());
        a <= len && b <= len
    }

    /// Point at relative position `s` (0 at `l`, 1 at `r`).
    pub fn at(&self, s: &Float) -> Float {
        let len = self.length();
        frac(&Float::with_val(len.prec(), &self.left + &len * s))
    }

    /// Relative position of `x` measured from `l`, in units of the length.
    pub fn relative(&self, x: &Float) -> Float {
        let len = self.length();
        let off = arc(&self.left, x);
        Float::with_val(len.prec(), off / len)
    }
}

/// Formats `x` as a plain decimal string with enough digits to round-trip
/// at its own precision.
pub fn fmt_decimal(x: &Float) -> String {
    let digits = ((x.prec() as f64) * std::f64::consts::LOG10_2).ceil() as usize + 2;
    fmt_decimal_digits(x, digits)
}

/// Formats `x` as a plain decimal string with `digits` significant digits.
pub fn fmt_decimal_digits(x: &Float, digits: usize) -> String {
    if x.is_zero() {
        return "0".to_string();
    }
    let (neg, mantissa, exp) = x.to_sign_string_exp(10, Some(digits));
    let exp = exp.unwrap_or(0);
    let mantissa = mantissa.trim_end_matches('0');
    let mut out = String::new();
    if neg {
        out.push('-');
    }
    if exp <= 0 {
        out.push_str("0.");
        out.extend(std::iter::repeat_n('0', (-exp) as usize));
        out.push_str(mantissa);
    } else {
        let e = exp as usize;
        if mantissa.len() <= e {
            out.push_str(mantissa);
            out.extend(std::iter::repeat_n('0', e - mantissa.len()));
        } else {
            out.push_str(&mantissa[..e]);
            out.push('.');
            out.push_str(&mantissa[e..]);
        }
    }
    out
}

/// Parses a decimal string at the given precision.
pub fn parse_decimal(s: &str, prec: u32) -> Result<Float> {
    let parsed =
        Float::parse(s.trim()).map_err(|e| Error::InvalidParameter(format!("cannot parse {s:?} as a number: {e}")))?;
    let v = Float::with_val(prec, parsed);
    if !v.is_finite() {
        return Err(Error::InvalidParameter(format!("{s:?} is not finite")));
    }
    Ok(v)
}

/// Serialized form of a map: `t` travels as a decimal string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapParams {
    pub u: f64,
    pub ell_left: f64,
    pub ell_right: f64,
    pub t: String,
    pub precision_bits: u32,
}

/// A member of the family with the translation parameter left free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Family {
    pub u: f64,
    pub ell_left: f64,
    pub ell_right: f64,
    pub precision_bits: u32,
}

impl Family {
    pub fn new(u: f64, ell_left: f64, ell_right: f64, precision_bits: u32) -> Result<Self> {
        validate(u, ell_left, ell_right, precision_bits)?;
        Ok(Family { u, ell_left, ell_right, precision_bits })
    }

    pub fn with_t(&self, t: &Float) -> Result<FlatMap> {
        make_flat_map(self.u, self.ell_left, self.ell_right, t, self.precision_bits)
    }
}

fn validate(u: f64, ell_left: f64, ell_right: f64, precision_bits: u32) -> Result<()> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::InvalidParameter(format!("u = {u} must lie in (0, 1)")));
    }
    if !(ell_left > 1.0 && ell_left.is_finite()) {
        return Err(Error::InvalidParameter(format!("ell_left = {ell_left} must exceed 1")));
    }
    if !(ell_right > 1.0 && ell_right.is_finite()) {
        return Err(Error::InvalidParameter(format!("ell_right = {ell_right} must exceed 1")));
    }
    if precision_bits < 64 {
        return Err(Error::InvalidParameter(format!("precision_bits = {precision_bits} is below the minimum of 64")));
    }
    Ok(())
}

/// Regularized incomplete beta `I_s(p, q)` for `0 <= s <= 1/2`, by its
/// hypergeometric power series (finite when `q` is an integer).
struct BetaSeries {
    p: Float,
    q: Float,
    /// `1 / B(p, q)`.
    inv_beta: Float,
    prec: u32,
}

impl BetaSeries {
    fn new(p: &Float, q: &Float, prec: u32) -> Self {
        let wp = prec + GUARD_BITS;
        let lg = |x: &Float| Float::with_val(wp, x.ln_gamma_ref());
        let sum = Float::with_val(wp, p + q);
        let ln_b = Float::with_val(wp, lg(p) + lg(q)) - lg(&sum);
        let inv_beta = Float::with_val(wp, -ln_b).exp();
        BetaSeries { p: Float::with_val(wp, p), q: Float::with_val(wp, q), inv_beta, prec: wp }
    }

    fn value(&self, s: &Float) -> Float {
        self.value_at(s, self.prec)
    }

    fn value_at(&self, s: &Float, wp: u32) -> Float {
        if s.is_zero() {
            return Float::new(wp);
        }
        let s = Float::with_val(wp, s);
        let eps = Float::with_val(wp, Float::i_exp(1, -(wp as i32)));
        let mut coef = Float::with_val(wp, 1);
        let mut pow = Float::with_val(wp, 1);
        let mut sum = Float::new(wp);
        let mut n: u32 = 0;
        loop {
            let term = Float::with_val(wp, &coef * &pow) / Float::with_val(wp, &self.p + n);
            sum += &term;
            n += 1;
            // (1 - q)_n / n!
            coef *= Float::with_val(wp, n as f64 - &self.q);
            coef /= n;
            if coef.is_zero() {
                break;
            }
            pow *= &s;
            let next = Float::with_val(wp, &coef * &pow).abs();
            if next <= Float::with_val(wp, &eps * sum.clone().abs()) || n > 100_000 {
                break;
            }
        }
        let lead = Float::with_val(wp, s.pow(&self.p));
        sum * lead * &self.inv_beta
    }

    /// `d/ds I_s(p, q)`.
    fn density(&self, s: &Float, wp: u32) -> Float {
        let a = Float::with_val(wp, s.pow(Float::with_val(wp, &self.p - 1)));
        let one_minus = Float::with_val(wp, 1 - s);
        let b = Float::with_val(wp, one_minus.pow(Float::with_val(wp, &self.q - 1)));
        a * b * &self.inv_beta
    }

    /// Solves `I_s(p, q) = v` for `s` in `[0, 1/2]`; `v` must lie in
    /// `[0, I_{1/2}(p, q)]`.  Safeguarded Newton inside a shrinking bracket.
    fn solve(&self, v: &Float, out_prec: u32) -> Float {
        let wp = self.prec;
        if v.is_zero() || v.is_sign_negative() {
            return Float::new(wp);
        }
        // leading-order guess s ≈ (v p B)^(1/p)
        let mut s = Float::with_val(wp, v * &self.p) / &self.inv_beta;
        s = s.pow(Float::with_val(wp, 1 / &self.p.clone()));
        if !(s > 0 && s < 0.5) {
            s = Float::with_val(wp, 0.25);
        }
        // a cheap pass at low precision, then a few steps at full precision
        let coarse = LOW_PREC.min(wp);
        s = self.newton(v, s, coarse, coarse - 8);
        self.newton(v, s, wp, out_prec + 8)
    }

    fn newton(&self, v: &Float, start: Float, wp: u32, bits: u32) -> Float {
        let mut lo = Float::new(wp);
        let mut hi = Float::with_val(wp, 0.5);
        let mut s = Float::with_val(wp, start);
        let tol_rel = Float::with_val(wp, Float::i_exp(1, -(bits as i32)));
        let tol_abs = Float::with_val(wp, Float::i_exp(1, -(wp as i32)));
        for _ in 0..(4 * wp) {
            let g = Float::with_val(wp, self.value_at(&s, wp) - v);
            if g.is_zero() {
                return s;
            }
            if g.is_sign_negative() {
                lo.clone_from(&s);
            } else {
                hi.clone_from(&s);
            }
            let d = self.density(&s, wp);
            let mut next = if d.is_zero() {
                Float::with_val(wp, &lo + &hi) / 2
            } else {
                let delta = Float::with_val(wp, &g / &d);
                // converged: the bracket may have collapsed onto s
                if Float::with_val(wp, delta.abs_ref()) <= Float::with_val(wp, &tol_rel * &s) {
                    return Float::with_val(wp, &s - &delta);
                }
                Float::with_val(wp, &s - &delta)
            };
            if !(next > lo && next < hi) {
                next = Float::with_val(wp, &lo + &hi) / 2;
            }
            let step = Float::with_val(wp, &next - &s).abs();
            s = next;
            let scale = Float::with_val(wp, &tol_rel * &s);
            if step <= scale || step <= tol_abs {
                break;
            }
            let width = Float::with_val(wp, &hi - &lo);
            if width <= tol_abs {
                break;
            }
        }
        s
    }
}

/// A flat-interval circle map with its precomputed normalization.
#[derive(Debug, Clone)]
pub struct FlatMap {
    u: Float,
    ell_left: f64,
    ell_right: f64,
    t: Float,
    prec: u32,
    /// `I(1) = (1 - u)^(ℓl + ℓr - 1) B(ℓr, ℓl)`.
    norm: Float,
    /// `I_s(ℓr, ℓl)` series, used for `s <= 1/2`.
    near_u: BetaSeriesHandle,
    /// `I_σ(ℓl, ℓr)` series in `σ = 1 - s`, used for `s > 1/2`.
    near_one: BetaSeriesHandle,
    /// `I_{1/2}(ℓr, ℓl)`.
    split: Float,
}

#[derive(Clone)]
struct BetaSeriesHandle(std::sync::Arc<BetaSeries>);

impl std::fmt::Debug for BetaSeriesHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BetaSeries(p = {}, q = {})", self.0.p.to_f64(), self.0.q.to_f64())
    }
}

/// Builds the family member with the given parameters.
pub fn make_flat_map(u: f64, ell_left: f64, ell_right: f64, t: &Float, precision_bits: u32) -> Result<FlatMap> {
    validate(u, ell_left, ell_right, precision_bits)?;
    if !t.is_finite() {
        return Err(Error::InvalidParameter("t must be finite".into()));
    }
    let prec = precision_bits;
    let wp = prec + GUARD_BITS;
    let a = Float::with_val(wp, ell_right);
    let b = Float::with_val(wp, ell_left);
    let near_u = BetaSeries::new(&a, &b, prec);
    let near_one = BetaSeries::new(&b, &a, prec);
    let one_minus_u = Float::with_val(wp, 1 - Float::with_val(wp, u));
    let expo = Float::with_val(wp, &a + &b) - 1u32;
    let norm = Float::with_val(prec, one_minus_u.pow(&expo) / &near_u.inv_beta);
    if !(norm.is_finite() && norm > 0) {
        return Err(Error::PrecisionTooLow("normalization integral is not finite".into()));
    }
    let split = near_u.value(&Float::with_val(wp, 0.5));
    Ok(FlatMap {
        u: Float::with_val(prec, u),
        ell_left,
        ell_right,
        t: frac(&Float::with_val(prec, t)),
        prec,
        norm,
        near_u: BetaSeriesHandle(std::sync::Arc::new(near_u)),
        near_one: BetaSeriesHandle(std::sync::Arc::new(near_one)),
        split,
    })
}

impl FlatMap {
    pub fn from_params(p: &MapParams) -> Result<Self> {
        let t = parse_decimal(&p.t, p.precision_bits.max(64))?;
        make_flat_map(p.u, p.ell_left, p.ell_right, &t, p.precision_bits)
    }

    pub fn to_params(&self) -> MapParams {
        MapParams {
            u: self.u.to_f64(),
            ell_left: self.ell_left,
            ell_right: self.ell_right,
            t: fmt_decimal(&self.t),
            precision_bits: self.prec,
        }
    }

    pub fn family(&self) -> Family {
        Family { u: self.u.to_f64(), ell_left: self.ell_left, ell_right: self.ell_right, precision_bits: self.prec }
    }

    pub fn u(&self) -> &Float {
        &self.u
    }

    pub fn t(&self) -> &Float {
        &self.t
    }

    pub fn ell_left(&self) -> f64 {
        self.ell_left
    }

    pub fn ell_right(&self) -> f64 {
        self.ell_right
    }

    pub fn prec(&self) -> u32 {
        self.prec
    }

    /// `I(1)`, the normalization of the monotone branch.
    pub fn norm(&self) -> &Float {
        &self.norm
    }

    /// The flat interval `U = (0, u)`.
    pub fn flat_interval(&self) -> CircleInterval {
        CircleInterval { left: Float::new(self.prec), right: self.u.clone() }
    }

    /// `2^(-prec + shift)`, the unit used by tolerances.
    pub fn ulp_scale(&self, shift: i32) -> Float {
        Float::with_val(self.prec, Float::i_exp(1, -(self.prec as i32) + shift))
    }

    pub fn float(&self, v: f64) -> Float {
        Float::with_val(self.prec, v)
    }

    /// Value of the branch `F - t` on `[0, 1]`, in `[0, 1]`.
    fn branch(&self, xf: &Float) -> Float {
        let wp = self.prec + GUARD_BITS;
        if *xf <= self.u {
            return Float::new(wp);
        }
        let one_minus_u = Float::with_val(wp, 1 - &self.u);
        let s = Float::with_val(wp, xf - &self.u) / &one_minus_u;
        if s <= 0.5 {
            self.near_u.0.value(&s)
        } else {
            let sigma = Float::with_val(wp, 1 - xf) / &one_minus_u;
            Float::with_val(wp, 1 - self.near_one.0.value(&sigma))
        }
    }

    /// The lift `F(x)`.
    pub fn eval_lift(&self, x: &Float) -> Float {
        let k = x.clone().floor();
        let xf = Float::with_val(self.prec, x - &k);
        let v = Float::with_val(self.prec + GUARD_BITS, self.branch(&xf) + &self.t);
        Float::with_val(self.prec, v + &k)
    }

    /// The circle map `f(x) = F(x) mod 1`.
    pub fn eval(&self, x: &Float) -> Float {
        frac(&self.eval_lift(x))
    }

    /// `F'(x)`.
    pub fn derivative(&self, x: &Float) -> Float {
        let xf = frac(x);
        if xf <= self.u {
            return Float::new(self.prec);
        }
        let wp = self.prec + GUARD_BITS;
        let a = Float::with_val(wp, &xf - &self.u);
        let b = Float::with_val(wp, 1 - &xf);
        let pa = a.pow(Float::with_val(wp, self.ell_right - 1.0));
        let pb = b.pow(Float::with_val(wp, self.ell_left - 1.0));
        Float::with_val(self.prec, pa * pb / &self.norm)
    }

    /// Offset `τ = (y - t) mod 1` of a target value above the critical value.
    fn offset(&self, y: &Float) -> Float {
        arc(&self.t, &Float::with_val(self.prec + GUARD_BITS, y))
    }

    fn solve_offset(&self, tau: &Float) -> Float {
        let wp = self.prec + GUARD_BITS;
        let one_minus_u = Float::with_val(wp, 1 - &self.u);
        if *tau <= self.split {
            let s = self.near_u.0.solve(tau, self.prec);
            Float::with_val(self.prec, &self.u + Float::with_val(wp, s * &one_minus_u))
        } else {
            let v = Float::with_val(wp, 1 - tau);
            let sigma = self.near_one.0.solve(&v, self.prec);
            Float::with_val(self.prec, 1 - Float::with_val(wp, sigma * &one_minus_u))
        }
    }

    /// The unique `x` in `[u, 1]` with `F(x) ≡ y (mod 1)`.
    pub fn preimage_point(&self, y: &Float) -> Float {
        let tau = self.offset(y);
        self.solve_offset(&tau)
    }

    /// Inverts the monotone branch inside `bracket`, which must lie in
    /// `[u, 1]` and whose image must straddle `y` (mod 1).
    pub fn invert_branch(&self, y: &Float, bracket: &CircleInterval) -> Result<Float> {
        let lo = &bracket.left;
        let hi = if bracket.right.is_zero() { Float::with_val(self.prec, 1) } else { bracket.right.clone() };
        if (bracket.wraps() && !bracket.right.is_zero()) || *lo < self.u || hi > 1 || *lo > hi {
            return Err(Error::BracketInvalid);
        }
        let tau = self.offset(y);
        let tau_lo = self.branch(lo);
        let tau_hi = self.branch(&hi);
        if tau < tau_lo || tau > tau_hi {
            return Err(Error::BracketInvalid);
        }
        let x = self.solve_offset(&tau);
        Ok(x.clamp(lo, &hi))
    }

    /// The unique interval `J'` outside `U` with `f(J') = J`.
    pub fn pull_back_interval(&self, j: &CircleInterval) -> Result<CircleInterval> {
        if j.contains_open(&self.t) {
            return Err(Error::ContainsCriticalValue);
        }
        let l = self.preimage_point(&j.left);
        let mut r = self.preimage_point(&j.right);
        // J ending exactly at the critical value pulls back to the end of the branch
        if j.right == self.t {
            r = Float::with_val(self.prec, 1);
        }
        Ok(CircleInterval::new(l, r))
    }

    /// Forward image of the circle point `x` under `f^n`.
    pub fn iterate(&self, x: &Float, n: u64) -> Float {
        let mut y = frac(x);
        for _ in 0..n {
            y = self.eval(&y);
        }
        y
    }

    /// True when `x` lies in the closed flat interval, widened by `slack`.
    pub fn in_flat(&self, x: &Float, slack: &Float) -> bool {
        let xf = frac(x);
        let upper = Float::with_val(self.prec, &self.u + slack);
        let lower = Float::with_val(self.prec, 1 - slack);
        xf <= upper || xf >= lower
    }

    /// Orders two points by their position in `[0, 1)`.
    pub fn cmp_points(a: &Float, b: &Float) -> Ordering {
        frac(a).partial_cmp(&frac(b)).unwrap_or(Ordering::Equal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym2(t: f64) -> FlatMap {
        make_flat_map(0.5, 2.0, 2.0, &Float::with_val(256, t), 256).unwrap()
    }

    fn close(a: &Float, b: f64, tol: f64) -> bool {
        (a.to_f64() - b).abs() <= tol
    }

    #[test]
    fn midpoint_of_symmetric_branch() {
        let f = sym2(0.0);
        assert!(close(&f.eval_lift(&f.float(0.75)), 0.5, 1e-60));
    }

    #[test]
    fn flat_value_and_periodicity() {
        let f = sym2(0.3);
        assert!(close(&f.eval_lift(&f.float(0.2)), 0.3, 1e-70));
        let x = Float::with_val(256, 1.2);
        assert!(close(&f.eval_lift(&x), 1.3, 1e-60));
        let f0 = sym2(0.0);
        assert!(close(&f0.eval_lift(&f0.float(1.0)), 1.0, 1e-70));
    }

    #[test]
    fn derivative_vanishes_at_both_ends() {
        let f = make_flat_map(0.4, 3.0, 3.0, &Float::with_val(256, 0), 256).unwrap();
        assert!(f.derivative(&f.float(0.4)).is_zero());
        assert!(f.derivative(&f.float(1.0)).is_zero());
        assert!(f.derivative(&f.float(0.25)).is_zero());
        assert!(f.derivative(&f.float(0.7)) > 0);
    }

    #[test]
    fn derivative_at_quarter_point_matches_closed_form() {
        // I(1) = ∫_{1/2}^1 (y - 1/2)(1 - y) dy = 1/48, so F'(3/4) = (1/16) * 48 = 3
        let f = sym2(0.0);
        assert!(close(f.norm(), 1.0 / 48.0, 1e-15));
        assert!(close(&f.derivative(&f.float(0.75)), 3.0, 1e-60));
    }

    #[test]
    fn preimage_inverts_symmetric_midpoint() {
        let f = sym2(0.0);
        let x = f.preimage_point(&f.float(0.5));
        assert!(close(&x, 0.75, 1e-60));
    }

    #[test]
    fn invert_branch_rejects_non_straddling_bracket() {
        let f = sym2(0.0);
        let br = CircleInterval::new(f.float(0.6), f.float(0.7));
        assert_eq!(f.invert_branch(&f.float(0.9), &br), Err(Error::BracketInvalid));
        let br = CircleInterval::new(f.float(0.1), f.float(0.7));
        assert_eq!(f.invert_branch(&f.float(0.1), &br), Err(Error::BracketInvalid));
    }

    #[test]
    fn invert_branch_round_trip() {
        let f = make_flat_map(0.5, 3.0, 4.0, &Float::with_val(256, 0.37), 256).unwrap();
        let br = CircleInterval::new(f.float(0.5), f.float(1.0));
        for x in [0.5000001, 0.55, 0.8, 0.95, 0.99999] {
            let xf = f.float(x);
            let y = f.eval(&xf);
            let back = f.invert_branch(&y, &br).unwrap();
            let err = Float::with_val(256, &back - &xf).abs();
            assert!(err < 1e-60, "x = {x}: err = {err}");
        }
    }

    #[test]
    fn pull_back_of_flat_interval_maps_into_it() {
        let f = make_flat_map(0.5, 3.0, 3.0, &Float::with_val(256, 0.83), 256).unwrap();
        let p = f.pull_back_interval(&f.flat_interval()).unwrap();
        let mid = p.at(&Float::with_val(256, 0.5));
        assert!(f.flat_interval().contains_open(&f.eval(&mid)));
        assert!(p.left > *f.u());
    }

    #[test]
    fn pull_back_rejects_critical_value() {
        let f = make_flat_map(0.5, 3.0, 3.0, &Float::with_val(256, 0.3), 256).unwrap();
        let j = CircleInterval::new(f.float(0.2), f.float(0.4));
        assert_eq!(f.pull_back_interval(&j), Err(Error::ContainsCriticalValue));
    }

    #[test]
    fn invalid_parameters_rejected() {
        let t = Float::with_val(64, 0);
        assert!(make_flat_map(0.0, 2.0, 2.0, &t, 256).is_err());
        assert!(make_flat_map(0.5, 1.0, 2.0, &t, 256).is_err());
        assert!(make_flat_map(0.5, 2.0, 0.5, &t, 256).is_err());
        assert!(make_flat_map(0.5, 2.0, 2.0, &t, 32).is_err());
    }

    #[test]
    fn decimal_round_trip() {
        let f = make_flat_map(0.5, 3.0, 3.0, &(Float::with_val(256, 2).sqrt() / 2), 256).unwrap();
        let s = fmt_decimal(f.t());
        assert!(s.starts_with("0.7071067811865475244"));
        let back = parse_decimal(&s, 256).unwrap();
        assert_eq!(&back, f.t());
        assert_eq!(fmt_decimal_digits(&Float::with_val(64, 1234.5), 10), "1234.5");
        assert_eq!(fmt_decimal_digits(&Float::with_val(64, -0.00125), 10), "-0.00125");
    }

    #[test]
    fn arcs_and_distances() {
        let a = Float::with_val(64, 0.9);
        let b = Float::with_val(64, 0.1);
        assert!(close(&arc(&a, &b), 0.2, 1e-15));
        assert!(close(&arc(&b, &a), 0.8, 1e-15));
        assert!(close(&dist(&a, &b), 0.2, 1e-15));
        assert!(close(&signed_arc(&b, &a), -0.2, 1e-15));
        let i = CircleInterval::new(a.clone(), b.clone());
        assert!(i.wraps());
        assert!(i.contains_open(&Float::with_val(64, 0.95)));
        assert!(i.contains_open(&Float::with_val(64, 0.05)));
        assert!(!i.contains_open(&Float::with_val(64, 0.5)));
    }
}
