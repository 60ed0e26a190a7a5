//! The conjugacy `φ` between two maps with the same rotation number.
//!
//! On the non-wandering sets `φ = φ₀` matches codes: a point lying in the
//! gaps `F^{k_1} ⊃ F^{k_2} ⊃ ...` goes to `∩ G^{k_n}`.  Inside a preimage
//! `H = f^{-j}` the Cantor structure next to `H` is reflected into it.  With
//! `k` the smallest index such that the neighbours `f^{-j-q_k}`,
//! `f^{-j-q_{k+1}}` satisfy `d_l + d_r <= |H|` for both maps, the left
//! neighbourhood `(l(f^{-j-q_k}), l(H))` is mirrored about `l(H)` and the
//! right one about `r(H)`, both stretched by `α = |H| / (d_l + d_r)` so that
//! the two mirrored spans abut at a single point.
//!
//! Evaluation runs the construction backwards.  A point of `H` is unfolded
//! into the neighbourhood it came from, the `g`-side fold is remembered, and
//! the process repeats until the point falls into a gap of the deepest
//! partition, into `U`, or into a piece narrower than the resolution, where
//! an affine map between corresponding pieces finishes the job.  A preimage
//! whose mirrored copy touches the mirrored copy of another one (an extreme
//! preimage) has only one free side and is filled by a one-sided reflection.
//!
//! [`NestedIntervalSystem`] carries the same scheme over to abstract
//! two-branch Cantor constructions.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Float;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::map_core::{arc, dist, frac, signed_arc, CircleInterval, FlatMap};
use crate::partition::{DynamicalPartition, ElementKind, PartitionBuilder, PartitionElement};
use crate::rotation::{return_times_upto, ContinuedFraction};

/// Bound on successive unfoldings of one point.
const MAX_UNFOLD: usize = 256;

/// Default cap on the preimages generated per map by [`ConjugacyEvaluator`].
pub const DEFAULT_MAX_PREIMAGES: u64 = 1 << 13;

/// A circle homeomorphism that can be evaluated pointwise.
pub trait Homeomorphism: Sync {
    fn apply(&self, x: &Float) -> Result<Float>;

    /// Working precision of the evaluation.
    fn precision(&self) -> u32;

    /// Nominal resolution `ε`.
    fn resolution(&self) -> f64;

    /// `apply` together with the width, in the original coordinates, of the
    /// piece on which the value was interpolated.
    fn apply_with_width(&self, x: &Float) -> Result<(Float, f64)> {
        Ok((self.apply(x)?, 0.0))
    }
}

/// The identity, as a reference homeomorphism.
#[derive(Debug, Clone, Copy)]
pub struct Identity {
    pub precision: u32,
}

impl Homeomorphism for Identity {
    fn apply(&self, x: &Float) -> Result<Float> {
        Ok(frac(x))
    }

    fn precision(&self) -> u32 {
        self.precision
    }

    fn resolution(&self) -> f64 {
        0.0
    }
}

/// Side of an extreme preimage that is not shared with its partner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FreeSide {
    Left,
    Right,
}

impl FreeSide {
    fn flip(self) -> Self {
        match self {
            FreeSide::Left => FreeSide::Right,
            FreeSide::Right => FreeSide::Left,
        }
    }
}

/// A pair of corresponding arcs on the `f` and `g` sides.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub f: CircleInterval,
    pub g: CircleInterval,
}

/// Where a point of the `f` side falls.
#[derive(Debug, Clone)]
pub enum Cell {
    /// A hole that may be filled by reflection.
    Hole(u64),
    /// A piece mapped affinely onto its counterpart.
    Piece(Pair),
}

/// Two-sided reflection data for a hole.
#[derive(Debug, Clone)]
pub struct TwoSided {
    pub k: usize,
    pub left: Pair,
    pub right: Pair,
    pub left_extreme: Option<u64>,
    pub right_extreme: Option<u64>,
}

/// One-sided reflection data for an extreme hole.
#[derive(Debug, Clone)]
pub struct OneSided {
    pub k: usize,
    pub span: Pair,
    pub extreme: Option<u64>,
}

/// The geometry the unfolding scheme needs from a pair of Cantor structures.
pub trait ReflectionGeometry: Sync {
    fn locate(&self, y: &Float) -> Cell;

    fn hole(&self, id: u64) -> Pair;

    /// Reflection neighbourhoods of `id` inside `region` (the whole circle
    /// when `None`).
    fn two_sided(&self, id: u64, region: Option<&Pair>) -> Option<TwoSided>;

    fn one_sided(&self, id: u64, free: FreeSide, region: Option<&Pair>) -> Option<OneSided>;

    /// Holes that are always filled affinely.
    fn is_rigid(&self, _id: u64) -> bool {
        false
    }
}

fn affine(p: &Pair, y: &Float) -> Float {
    let lf = p.f.length();
    if lf.is_zero() {
        if p.f.left == p.f.right {
            return p.g.left.clone();
        }
        // the whole circle
        let s = arc(&p.f.left, y);
        return frac(&Float::with_val(y.prec(), &p.g.left + s));
    }
    let s = Float::with_val(y.prec(), arc(&p.f.left, y) / lf);
    p.g.at(&s)
}

fn contained(region: Option<&Pair>, f: &CircleInterval, g: &CircleInterval) -> bool {
    region.is_none_or(|r| r.f.contains_interval(f) && r.g.contains_interval(g))
}

/// Result of one evaluation of the extension.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: Float,
    /// Width, in the original coordinates, of the piece on which the final
    /// affine map acted; zero on holes that are affine by construction.
    pub terminal_width: f64,
    pub unfoldings: usize,
    pub stop: Stop,
}

/// Why the unfolding of a point ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stop {
    /// A piece of the deepest level.
    Piece,
    /// A hole that is affine by construction.
    Rigid,
    /// A hole narrower than the resolution.
    Resolution,
    /// No two-sided reflection fits.
    TwoSidedMissing,
    /// No one-sided reflection fits.
    OneSidedMissing,
    /// Too many unfoldings.
    Budget,
}

/// Evaluates the reflection extension at `x`.
pub fn unfold<G: ReflectionGeometry + ?Sized>(geom: &G, x: &Float, eps: f64) -> Evaluation {
    let prec = x.prec();
    let mut y = frac(x);
    let mut folds: Vec<(Float, Float)> = Vec::new();
    let mut region: Option<Pair> = None;
    let mut pending: Option<(u64, FreeSide)> = None;
    let mut scale = 1.0f64;
    let mut w: Option<(Float, f64, Stop)> = None;
    for _ in 0..MAX_UNFOLD {
        let id = match geom.locate(&y) {
            Cell::Piece(p) => {
                let width = p.f.length().to_f64() * scale;
                w = Some((affine(&p, &y), width, Stop::Piece));
                break;
            }
            Cell::Hole(id) => id,
        };
        let h = geom.hole(id);
        let hf_len = h.f.length();
        let width = hf_len.to_f64() * scale;
        if geom.is_rigid(id) {
            w = Some((affine(&h, &y), 0.0, Stop::Rigid));
            break;
        }
        if width < eps {
            w = Some((affine(&h, &y), width, Stop::Resolution));
            break;
        }
        let hg_len = h.g.length();
        if let Some((pid, free)) = pending.filter(|p| p.0 == id) {
            let Some(os) = geom.one_sided(pid, free, region.as_ref()) else {
                w = Some((affine(&h, &y), width, Stop::OneSidedMissing));
                break;
            };
            let af = Float::with_val(prec, &hf_len / os.span.f.length());
            let ag = Float::with_val(prec, &hg_len / os.span.g.length());
            match free {
                FreeSide::Right => {
                    let s = arc(&y, h.f.r());
                    y = frac(&Float::with_val(prec, h.f.r() + s / &af));
                    folds.push((h.g.r().clone(), ag));
                }
                FreeSide::Left => {
                    let s = arc(h.f.l(), &y);
                    y = frac(&Float::with_val(prec, h.f.l() - s / &af));
                    folds.push((h.g.l().clone(), ag));
                }
            }
            scale *= af.to_f64();
            pending = os.extreme.map(|e| (e, free.flip()));
            region = Some(os.span);
        } else {
            let Some(ts) = geom.two_sided(id, region.as_ref()) else {
                w = Some((affine(&h, &y), width, Stop::TwoSidedMissing));
                break;
            };
            let dlf = ts.left.f.length();
            let drf = ts.right.f.length();
            let dlg = ts.left.g.length();
            let drg = ts.right.g.length();
            let af = Float::with_val(prec, &hf_len / Float::with_val(prec, &dlf + &drf));
            let ag = Float::with_val(prec, &hg_len / Float::with_val(prec, &dlg + &drg));
            let s = arc(h.f.l(), &y);
            if s < Float::with_val(prec, &af * &dlf) {
                y = frac(&Float::with_val(prec, h.f.l() - s / &af));
                folds.push((h.g.l().clone(), ag));
                pending = ts.left_extreme.map(|e| (e, FreeSide::Right));
                region = Some(ts.left);
            } else {
                let s = arc(&y, h.f.r());
                y = frac(&Float::with_val(prec, h.f.r() + s / &af));
                folds.push((h.g.r().clone(), ag));
                pending = ts.right_extreme.map(|e| (e, FreeSide::Left));
                region = Some(ts.right);
            }
            scale *= af.to_f64();
        }
    }
    let (mut v, width, stop) = w.unwrap_or_else(|| {
        // unfolding budget spent: finish on the current cell
        let p = match geom.locate(&y) {
            Cell::Piece(p) => p,
            Cell::Hole(id) => geom.hole(id),
        };
        (affine(&p, &y), p.f.length().to_f64() * scale, Stop::Budget)
    });
    let unfoldings = folds.len();
    for (pivot, a) in folds.into_iter().rev() {
        let d = signed_arc(&pivot, &v);
        v = frac(&Float::with_val(prec, &pivot - a * d));
    }
    Evaluation { value: v, terminal_width: width, unfoldings, stop }
}

/// Reflection data of one hole, as used by the extension.
#[derive(Debug, Clone)]
pub struct ReflectionSkeleton {
    pub host: u64,
    pub k: usize,
    pub alpha_f: Float,
    pub alpha_g: Float,
    pub touch_f: Float,
    pub touch_g: Float,
    pub left: Pair,
    pub right: Pair,
}

impl ReflectionSkeleton {
    fn from_two_sided<G: ReflectionGeometry + ?Sized>(geom: &G, host: u64, ts: TwoSided) -> Self {
        let h = geom.hole(host);
        let prec = h.f.left.prec();
        let sum = |a: &CircleInterval, b: &CircleInterval| Float::with_val(prec, a.length() + b.length());
        let alpha_f = Float::with_val(prec, h.f.length() / sum(&ts.left.f, &ts.right.f));
        let alpha_g = Float::with_val(prec, h.g.length() / sum(&ts.left.g, &ts.right.g));
        let touch_f = frac(&Float::with_val(prec, h.f.l() + Float::with_val(prec, &alpha_f * ts.left.f.length())));
        let touch_g = frac(&Float::with_val(prec, h.g.l() + Float::with_val(prec, &alpha_g * ts.left.g.length())));
        ReflectionSkeleton { host, k: ts.k, alpha_f, alpha_g, touch_f, touch_g, left: ts.left, right: ts.right }
    }
}

/// Two-sided skeleton of `host` computed from scratch.
pub fn reflection_skeleton<G: ReflectionGeometry + ?Sized>(geom: &G, host: u64) -> Result<ReflectionSkeleton> {
    let ts = geom.two_sided(host, None).ok_or(Error::NoSuchK { host })?;
    Ok(ReflectionSkeleton::from_two_sided(geom, host, ts))
}

/// Gap labels `k_1, ..., k_depth` of a point of `K_f`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Code {
    pub entries: Vec<(ElementKind, u64)>,
}

impl Code {
    pub fn depth(&self) -> usize {
        self.entries.len()
    }
}

/// Dynamical geometry of a pair `f`, `g` with a common combinatorics.
#[derive(Debug, Clone)]
pub struct DynamicalGeometry {
    levels_f: Vec<DynamicalPartition>,
    levels_g: Vec<DynamicalPartition>,
    /// Preimage indices of the deepest level in circular order.
    order: Vec<u64>,
    holes_f: Vec<CircleInterval>,
    holes_g: Vec<CircleInterval>,
    cf: ContinuedFraction,
}

impl DynamicalGeometry {
    fn deepest(&self) -> usize {
        self.levels_f.len()
    }

    fn level_pair(&self, n: usize) -> (&DynamicalPartition, &DynamicalPartition) {
        (&self.levels_f[n - 1], &self.levels_g[n - 1])
    }

    fn count(&self) -> u64 {
        self.order.len() as u64
    }

    fn pair(&self, i: u64) -> Pair {
        Pair { f: self.holes_f[i as usize].clone(), g: self.holes_g[i as usize].clone() }
    }

    /// True when preimage `a` lies to the left of preimage `b` (nearby).
    fn left_of(&self, a: u64, b: u64) -> bool {
        let ha = &self.holes_f[a as usize];
        let hb = &self.holes_f[b as usize];
        arc(ha.r(), hb.l()) < arc(hb.r(), ha.l())
    }
}

impl ReflectionGeometry for DynamicalGeometry {
    fn locate(&self, y: &Float) -> Cell {
        // last preimage whose left end lies strictly below y
        let k = self.order.partition_point(|&i| self.holes_f[i as usize].l() < y);
        let prev = if k == 0 { self.order.len() - 1 } else { k - 1 };
        let i = self.order[prev];
        let h = &self.holes_f[i as usize];
        if h.contains_open(y) {
            return Cell::Hole(i);
        }
        let next = self.order[(prev + 1) % self.order.len()];
        let gap = |holes: &Vec<CircleInterval>| {
            CircleInterval::new(holes[i as usize].r().clone(), holes[next as usize].l().clone())
        };
        Cell::Piece(Pair { f: gap(&self.holes_f), g: gap(&self.holes_g) })
    }

    fn hole(&self, id: u64) -> Pair {
        self.pair(id)
    }

    fn is_rigid(&self, id: u64) -> bool {
        id == 0
    }

    fn two_sided(&self, id: u64, region: Option<&Pair>) -> Option<TwoSided> {
        let h = self.pair(id);
        let q = &self.cf.q;
        for k in 1..q.len() - 1 {
            let (a, b) = (id + q[k], id + q[k + 1]);
            if b >= self.count() {
                if a >= self.count() {
                    return None;
                }
                continue;
            }
            let (ln, rn) = if self.left_of(a, id) { (a, b) } else { (b, a) };
            if !self.left_of(ln, id) || self.left_of(rn, id) {
                continue;
            }
            let (l, r) = (self.pair(ln), self.pair(rn));
            let left = Pair {
                f: CircleInterval::new(l.f.l().clone(), h.f.l().clone()),
                g: CircleInterval::new(l.g.l().clone(), h.g.l().clone()),
            };
            let right = Pair {
                f: CircleInterval::new(h.f.r().clone(), r.f.r().clone()),
                g: CircleInterval::new(h.g.r().clone(), r.g.r().clone()),
            };
            let fits = |span_l: &CircleInterval, span_r: &CircleInterval, host: &CircleInterval| {
                Float::with_val(host.left.prec(), span_l.length() + span_r.length()) <= host.length()
            };
            if fits(&left.f, &right.f, &h.f)
                && fits(&left.g, &right.g, &h.g)
                && contained(region, &left.f, &left.g)
                && contained(region, &right.f, &right.g)
            {
                return Some(TwoSided { k, left, right, left_extreme: Some(ln), right_extreme: Some(rn) });
            }
        }
        None
    }

    fn one_sided(&self, id: u64, free: FreeSide, region: Option<&Pair>) -> Option<OneSided> {
        let h = self.pair(id);
        let q = &self.cf.q;
        for k in 1..q.len() - 1 {
            let cands = [id + q[k], id + q[k + 1]];
            if cands[0] >= self.count() {
                return None;
            }
            let Some(&c) = cands.iter().find(|&&c| {
                c < self.count()
                    && match free {
                        FreeSide::Right => self.left_of(id, c),
                        FreeSide::Left => self.left_of(c, id),
                    }
            }) else {
                continue;
            };
            let n = self.pair(c);
            let span = match free {
                FreeSide::Right => Pair {
                    f: CircleInterval::new(h.f.r().clone(), n.f.r().clone()),
                    g: CircleInterval::new(h.g.r().clone(), n.g.r().clone()),
                },
                FreeSide::Left => Pair {
                    f: CircleInterval::new(n.f.l().clone(), h.f.l().clone()),
                    g: CircleInterval::new(n.g.l().clone(), h.g.l().clone()),
                },
            };
            if span.f.length() <= h.f.length() && span.g.length() <= h.g.length() && contained(region, &span.f, &span.g)
            {
                return Some(OneSided { k, span, extreme: Some(c) });
            }
        }
        None
    }
}

/// Options for [`ConjugacyEvaluator::new`].
#[derive(Debug, Clone)]
pub struct EvaluatorOptions {
    /// Nominal resolution `ε`.
    pub resolution: f64,
    /// Cap on the preimages generated per map; fixes the deepest level.
    pub max_preimages: u64,
    /// Deepest level to build; `None` takes the deepest the cap allows.
    pub max_level: Option<usize>,
}

impl Default for EvaluatorOptions {
    fn default() -> Self {
        EvaluatorOptions { resolution: 1e-12, max_preimages: DEFAULT_MAX_PREIMAGES, max_level: None }
    }
}

/// `φ` for a pair of maps with the same rotation number.
#[derive(Debug, Clone)]
pub struct ConjugacyEvaluator {
    map_f: FlatMap,
    map_g: FlatMap,
    geom: DynamicalGeometry,
    resolution: f64,
}

impl ConjugacyEvaluator {
    pub fn new(f: &FlatMap, g: &FlatMap, opts: &EvaluatorOptions) -> Result<Self> {
        if opts.resolution.is_nan() || opts.resolution <= 0.0 {
            return Err(Error::InvalidParameter("resolution must be positive".into()));
        }
        let cf_f = return_times_upto(f, opts.max_preimages)?;
        let cf_g = return_times_upto(g, opts.max_preimages)?;
        let common = cf_f.partial_quotients.iter().zip(&cf_g.partial_quotients).take_while(|(a, b)| a == b).count();
        if common < 3 {
            return Err(Error::MismatchedCombinatorics(format!("the two maps share only {common} partial quotients")));
        }
        let cf = cf_f.truncate(common);
        // level n needs q_{n+2} and q_{n+1} + q_n preimages
        let mut deepest = (1..=common - 2).filter(|&n| cf.q[n] + cf.q[n + 1] <= opts.max_preimages).max().unwrap_or(1);
        if let Some(m) = opts.max_level {
            deepest = deepest.min(m.max(1));
        }
        let levels = |m: &FlatMap| -> Result<Vec<DynamicalPartition>> {
            let mut b = PartitionBuilder::new(m).with_max_preimages(opts.max_preimages);
            (1..=deepest).map(|n| b.level(n).cloned()).collect()
        };
        let (levels_f, levels_g) = rayon::join(|| levels(f), || levels(g));
        let (levels_f, levels_g) = (levels_f?, levels_g?);
        let pf = levels_f.last().unwrap();
        let pg = levels_g.last().unwrap();
        let order: Vec<u64> = pf.preimages().map(|e| e.index).collect();
        let order_g: Vec<u64> = pg.preimages().map(|e| e.index).collect();
        if order != order_g {
            return Err(Error::MismatchedCombinatorics("preimages of f and g are ordered differently".into()));
        }
        let count = order.len();
        let mut holes_f = vec![f.flat_interval(); count];
        let mut holes_g = vec![g.flat_interval(); count];
        for (ef, eg) in pf.preimages().zip(pg.preimages()) {
            holes_f[ef.index as usize] = ef.interval.clone();
            holes_g[eg.index as usize] = eg.interval.clone();
        }
        Ok(ConjugacyEvaluator {
            map_f: f.clone(),
            map_g: g.clone(),
            geom: DynamicalGeometry { levels_f, levels_g, order, holes_f, holes_g, cf },
            resolution: opts.resolution,
        })
    }

    pub fn map_f(&self) -> &FlatMap {
        &self.map_f
    }

    pub fn map_g(&self) -> &FlatMap {
        &self.map_g
    }

    pub fn geometry(&self) -> &DynamicalGeometry {
        &self.geom
    }

    /// Deepest partition level available.
    pub fn depth(&self) -> usize {
        self.geom.deepest()
    }

    pub fn continued_fraction(&self) -> &ContinuedFraction {
        &self.geom.cf
    }

    pub fn partition_f(&self, n: usize) -> &DynamicalPartition {
        self.geom.level_pair(n).0
    }

    pub fn partition_g(&self, n: usize) -> &DynamicalPartition {
        self.geom.level_pair(n).1
    }

    fn check_depth(&self, depth: usize) -> Result<()> {
        if depth == 0 || depth > self.depth() {
            return Err(Error::InvalidParameter(format!("depth must lie in 1..={} for this evaluator", self.depth())));
        }
        Ok(())
    }

    /// The gap labels of `x` on levels `1..=depth`.
    pub fn encode(&self, x: &Float, depth: usize) -> Result<Code> {
        self.check_depth(depth)?;
        let x = frac(x);
        let mut entries = Vec::with_capacity(depth);
        for n in 1..=depth {
            let p = self.partition_f(n);
            let e = gap_containing(p, &x).map_err(|i| match i {
                0 => Error::InFlat,
                _ => Error::InPreimage { index: i, level: n },
            })?;
            entries.push((e.kind, e.index));
        }
        Ok(Code { entries })
    }

    fn code_gaps<'a>(&'a self, code: &Code, g_side: bool) -> Result<Vec<&'a PartitionElement>> {
        self.check_depth(code.depth())?;
        let mut out: Vec<&PartitionElement> = Vec::with_capacity(code.depth());
        for (n, &(kind, index)) in code.entries.iter().enumerate() {
            let p = if g_side { self.partition_g(n + 1) } else { self.partition_f(n + 1) };
            if !kind.is_gap() {
                return Err(Error::CodeInvalid(format!("entry {} is not a gap", n + 1)));
            }
            let e = p
                .find(kind, index)
                .ok_or_else(|| Error::CodeInvalid(format!("no {kind:?} with index {index} at level {}", n + 1)))?;
            if let Some(prev) = out.last() {
                if !prev.interval.contains_interval(&e.interval) {
                    return Err(Error::CodeInvalid(format!("entry {} is not nested in entry {}", n + 1, n)));
                }
            }
            out.push(e);
        }
        Ok(out)
    }

    /// The `f` gap a code designates.
    pub fn decode(&self, code: &Code) -> Result<CircleInterval> {
        Ok(self.code_gaps(code, false)?.last().unwrap().interval.clone())
    }

    /// `φ₀` of a coded point: the corresponding `g` gap.
    pub fn phi0(&self, code: &Code) -> Result<CircleInterval> {
        Ok(self.code_gaps(code, true)?.last().unwrap().interval.clone())
    }

    pub fn phi(&self, x: &Float) -> Float {
        self.evaluate(x).value
    }

    pub fn evaluate(&self, x: &Float) -> Evaluation {
        unfold(&self.geom, x, self.resolution)
    }

    pub fn skeleton(&self, host: u64) -> Result<ReflectionSkeleton> {
        if host == 0 || host >= self.geom.count() {
            return Err(Error::InvalidParameter(format!("no generated preimage f^-{host}")));
        }
        reflection_skeleton(&self.geom, host)
    }
}

impl Homeomorphism for ConjugacyEvaluator {
    fn apply(&self, x: &Float) -> Result<Float> {
        Ok(self.phi(x))
    }

    fn apply_with_width(&self, x: &Float) -> Result<(Float, f64)> {
        let e = self.evaluate(x);
        Ok((e.value, e.terminal_width))
    }

    fn precision(&self) -> u32 {
        self.map_f.prec()
    }

    fn resolution(&self) -> f64 {
        self.resolution
    }
}

/// The gap of `p` whose closure contains `x`, or the index of the preimage
/// holding `x` in its interior.  Points within the error radius of a
/// preimage endpoint count as that endpoint.
fn gap_containing<'a>(p: &'a DynamicalPartition, x: &Float) -> std::result::Result<&'a PartitionElement, u64> {
    let m = p.elements.len();
    let k = p.locate(x);
    let e = &p.elements[k];
    if e.kind.is_gap() {
        return Ok(e);
    }
    let prec = x.prec();
    let slack = Float::with_val(prec, &e.err_radius + Float::with_val(prec, Float::i_exp(1, 16 - prec as i32)));
    if dist(e.interval.l(), x) <= slack {
        return Ok(&p.elements[(k + m - 1) % m]);
    }
    if dist(e.interval.r(), x) <= slack {
        return Ok(&p.elements[(k + 1) % m]);
    }
    Err(e.index)
}

fn closed_meet(a: &CircleInterval, b: &CircleInterval) -> bool {
    a.contains_closed(b.l()) || b.contains_closed(a.l())
}

/// Summary of the conjugacy defect on coded points.
#[derive(Debug, Clone, Serialize)]
pub struct DefectReport {
    pub depth: usize,
    pub samples: usize,
    pub intersecting: usize,
    /// Distance between the midpoints of the two enclosures.
    pub max_defect: f64,
    pub mean_defect: f64,
    /// Largest gap of `G_depth`, the scale the defect is measured against.
    pub max_gap_g: f64,
}

/// Compares the enclosures of `φ₀(f(x))` and `g(φ₀(x))` on `samples`
/// seeded points of `K_f`, coded to `depth`.
pub fn conjugacy_defect(ev: &ConjugacyEvaluator, depth: usize, samples: usize, seed: u64) -> Result<DefectReport> {
    ev.check_depth(depth)?;
    let prec = ev.map_f.prec();
    // endpoints of the deepest preimages lie in K_f
    let p = ev.partition_f(ev.depth());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = Float::with_val(prec, 0.5);
    let (mut hit, mut max_d, mut sum_d) = (0usize, 0.0f64, 0.0f64);
    for _ in 0..samples {
        let u: f64 = rng.gen();
        let e = &p.elements[p.locate(&Float::with_val(prec, u))];
        let x = if e.kind.is_gap() || rng.gen::<bool>() { e.interval.l().clone() } else { e.interval.r().clone() };
        let c = ev.encode(&x, depth)?;
        let fx = ev.map_f.eval(&x);
        let c_fx = ev.encode(&fx, depth)?;
        let lhs = ev.phi0(&c_fx)?;
        let gap = ev.phi0(&c)?;
        let rhs = CircleInterval::new(ev.map_g.eval(gap.l()), ev.map_g.eval(gap.r()));
        if closed_meet(&lhs, &rhs) {
            hit += 1;
        }
        let d = dist(&lhs.at(&half), &rhs.at(&half)).to_f64();
        max_d = max_d.max(d);
        sum_d += d;
    }
    Ok(DefectReport {
        depth,
        samples,
        intersecting: hit,
        max_defect: max_d,
        mean_defect: if samples > 0 { sum_d / samples as f64 } else { 0.0 },
        max_gap_g: ev.partition_g(depth).max_gap().to_f64(),
    })
}

/// A two-branch nested interval construction on `[0, 1]`: every interval
/// of level `n` keeps two closed children of relative length `ratio`, one at
/// each end, and loses the open middle.
#[derive(Debug, Clone)]
pub struct NestedIntervalSystem {
    /// Relative length of each child.
    pub ratio: Float,
    /// Number of subdivision levels.
    pub depth: usize,
    /// Children per interval (the bounded `C_n`).
    pub branching: usize,
    /// Intervals of each level, left to right.
    pub levels: Vec<Vec<CircleInterval>>,
}

impl NestedIntervalSystem {
    /// Removes the middle `gap` fraction at each step (`1/3` gives the
    /// middle-thirds set).
    pub fn uniform(gap: &Float, depth: usize) -> Result<Self> {
        if !(*gap > 0 && *gap < 1) {
            return Err(Error::InvalidParameter("gap fraction must lie in (0, 1)".into()));
        }
        let prec = gap.prec();
        let ratio = Float::with_val(prec, 1 - gap.clone()) / 2;
        let one = Float::with_val(prec, 1);
        let mut levels = vec![vec![CircleInterval { left: Float::new(prec), right: one }]];
        for n in 0..depth {
            let mut next = Vec::with_capacity(2 * levels[n].len());
            for iv in &levels[n] {
                let len = Float::with_val(prec, &iv.right - &iv.left);
                let w = Float::with_val(prec, &len * &ratio);
                let mid_l = Float::with_val(prec, &iv.left + &w);
                let mid_r = Float::with_val(prec, &iv.right - &w);
                next.push(CircleInterval { left: iv.left.clone(), right: mid_l });
                next.push(CircleInterval { left: mid_r, right: iv.right.clone() });
            }
            levels.push(next);
        }
        Ok(NestedIntervalSystem { ratio, depth, branching: 2, levels })
    }

    /// Ratio bounds of consecutive intervals of the same level.
    pub fn comparability(&self) -> f64 {
        // all intervals of one level have equal length
        1.0
    }

    /// Hole removed from interval `i` of level `m - 1`.
    fn hole(&self, m: usize, i: usize) -> CircleInterval {
        let a = &self.levels[m][2 * i];
        let b = &self.levels[m][2 * i + 1];
        CircleInterval { left: a.right.clone(), right: b.left.clone() }
    }

    fn width(&self, m: usize) -> Float {
        let iv = &self.levels[m][0];
        Float::with_val(iv.left.prec(), &iv.right - &iv.left)
    }
}

/// `φ` for two nested interval systems with the same branching.
#[derive(Debug, Clone)]
pub struct AppendixEvaluator {
    pub sys_f: NestedIntervalSystem,
    pub sys_g: NestedIntervalSystem,
    pub resolution: f64,
}

/// Hole ids of the appendix geometry pack `(level, index)`.
fn hole_id(m: usize, i: usize) -> u64 {
    ((m as u64) << 40) | i as u64
}

fn hole_of(id: u64) -> (usize, usize) {
    ((id >> 40) as usize, (id & ((1 << 40) - 1)) as usize)
}

impl AppendixEvaluator {
    fn pair(&self, m: usize, i: usize) -> Pair {
        Pair { f: self.sys_f.hole(m, i), g: self.sys_g.hole(m, i) }
    }

    pub fn phi(&self, x: &Float) -> Float {
        self.evaluate(x).value
    }

    pub fn evaluate(&self, x: &Float) -> Evaluation {
        unfold(self, x, self.resolution)
    }
}

impl ReflectionGeometry for AppendixEvaluator {
    fn locate(&self, y: &Float) -> Cell {
        let d = self.sys_f.depth;
        let mut i = 0usize;
        for n in 0..d {
            let a = &self.sys_f.levels[n + 1][2 * i];
            let b = &self.sys_f.levels[n + 1][2 * i + 1];
            if *y <= a.right {
                i *= 2;
            } else if *y >= b.left {
                i = 2 * i + 1;
            } else {
                return Cell::Hole(hole_id(n + 1, i));
            }
        }
        Cell::Piece(Pair { f: self.sys_f.levels[d][i].clone(), g: self.sys_g.levels[d][i].clone() })
    }

    fn hole(&self, id: u64) -> Pair {
        let (m, i) = hole_of(id);
        self.pair(m, i)
    }

    fn two_sided(&self, id: u64, region: Option<&Pair>) -> Option<TwoSided> {
        let (m, i) = hole_of(id);
        let h = self.pair(m, i);
        for mm in m..=self.sys_f.depth {
            let shift = mm - m;
            // neighbours: innermost descendants of the two children
            let li = ((2 * i + 1) << shift) - 1;
            let ri = (2 * i + 1) << shift;
            let span = |s: &NestedIntervalSystem, host: &CircleInterval| {
                (
                    CircleInterval { left: s.levels[mm][li].left.clone(), right: host.left.clone() },
                    CircleInterval { left: host.right.clone(), right: s.levels[mm][ri].right.clone() },
                )
            };
            let (lf, rf) = span(&self.sys_f, &h.f);
            let (lg, rg) = span(&self.sys_g, &h.g);
            let wf = Float::with_val(h.f.left.prec(), 2 * self.sys_f.width(mm));
            let wg = Float::with_val(h.g.left.prec(), 2 * self.sys_g.width(mm));
            if wf <= h.f.length() && wg <= h.g.length() && contained(region, &lf, &lg) && contained(region, &rf, &rg) {
                return Some(TwoSided {
                    k: shift,
                    left: Pair { f: lf, g: lg },
                    right: Pair { f: rf, g: rg },
                    left_extreme: None,
                    right_extreme: None,
                });
            }
        }
        None
    }

    fn one_sided(&self, _id: u64, _free: FreeSide, _region: Option<&Pair>) -> Option<OneSided> {
        None
    }
}

impl Homeomorphism for AppendixEvaluator {
    fn apply(&self, x: &Float) -> Result<Float> {
        Ok(self.phi(x))
    }

    fn apply_with_width(&self, x: &Float) -> Result<(Float, f64)> {
        let e = self.evaluate(x);
        Ok((e.value, e.terminal_width))
    }

    fn precision(&self) -> u32 {
        self.sys_f.ratio.prec()
    }

    fn resolution(&self) -> f64 {
        self.resolution
    }
}

/// The extension of code matching between two nested interval systems.
pub fn extend_cantor_homeomorphism(
    sys_f: &NestedIntervalSystem,
    sys_g: &NestedIntervalSystem,
    resolution: f64,
) -> Result<AppendixEvaluator> {
    if sys_f.depth != sys_g.depth || sys_f.branching != sys_g.branching {
        return Err(Error::MismatchedCombinatorics(format!(
            "systems have {} and {} levels with branching {} and {}",
            sys_f.depth, sys_g.depth, sys_f.branching, sys_g.branching
        )));
    }
    if resolution.is_nan() || resolution <= 0.0 {
        return Err(Error::InvalidParameter("resolution must be positive".into()));
    }
    Ok(AppendixEvaluator { sys_f: sys_f.clone(), sys_g: sys_g.clone(), resolution })
}

/// Orders two points of an arc given by a common base point.
pub fn cmp_on_arc(base: &Float, a: &Float, b: &Float) -> Ordering {
    arc(base, a).partial_cmp(&arc(base, b)).unwrap_or(Ordering::Equal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_core::Family;
    use crate::rotation::tune_to_cf;

    fn golden(ell: f64) -> FlatMap {
        tune_to_cf(&Family::new(0.5, ell, ell, 256).unwrap(), &[1; 18]).unwrap()
    }

    fn small_opts() -> EvaluatorOptions {
        EvaluatorOptions { resolution: 1e-12, max_preimages: 1 << 11, max_level: None }
    }

    #[test]
    fn identity_pair_gives_identity() {
        let f = golden(3.0);
        let ev = ConjugacyEvaluator::new(&f, &f, &small_opts()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let x = Float::with_val(256, rng.gen::<f64>());
            let y = ev.phi(&x);
            assert!(dist(&x, &y).to_f64() < 1e-60, "{} -> {}", x.to_f64(), y.to_f64());
        }
    }

    #[test]
    fn skeleton_alpha_and_touch_point() {
        let ev = ConjugacyEvaluator::new(&golden(3.0), &golden(4.0), &small_opts()).unwrap();
        for host in 1..40 {
            let Ok(s) = ev.skeleton(host) else { continue };
            assert!(s.alpha_f >= 1 && s.alpha_g >= 1);
            let h = ev.geometry().hole(host);
            let from_right = Float::with_val(256, h.f.r() - Float::with_val(256, &s.alpha_f * s.right.f.length()));
            assert!(dist(&from_right, &s.touch_f).to_f64() < 1e-60);
        }
    }

    #[test]
    fn encode_round_trip() {
        let ev = ConjugacyEvaluator::new(&golden(3.0), &golden(4.0), &small_opts()).unwrap();
        let p = ev.partition_f(5);
        let e = p.preimages().nth(3).unwrap();
        let code = ev.encode(e.interval.l(), 5).unwrap();
        assert_eq!(code.depth(), 5);
        assert!(ev.decode(&code).unwrap().contains_closed(e.interval.l()));
        let inside = e.interval.at(&Float::with_val(256, 0.5));
        assert!(matches!(ev.encode(&inside, 5), Err(Error::InPreimage { .. })));
        assert!(matches!(ev.encode(&Float::with_val(256, 0.25), 5), Err(Error::InFlat)));
    }

    #[test]
    fn phi_is_monotone_on_a_grid() {
        let ev = ConjugacyEvaluator::new(&golden(3.0), &golden(4.0), &small_opts()).unwrap();
        let mut prev = Float::new(256);
        for k in 1..2000 {
            let x = Float::with_val(256, k as f64 / 2000.0);
            let y = ev.phi(&x);
            assert!(y >= prev, "at {}", x.to_f64());
            prev = y;
        }
    }

    #[test]
    fn identical_systems_give_identity() {
        let third = Float::with_val(128, 1) / 3;
        let s = NestedIntervalSystem::uniform(&third, 8).unwrap();
        let ev = extend_cantor_homeomorphism(&s, &s, 1e-12).unwrap();
        for k in 0..500 {
            let x = Float::with_val(128, k as f64 / 500.0 + 1e-4);
            assert!(dist(&x, &ev.phi(&x)).to_f64() < 1e-30);
        }
    }

    #[test]
    fn thirds_to_fifths_is_monotone_and_matches_endpoints() {
        let p = 128;
        let s3 = NestedIntervalSystem::uniform(&(Float::with_val(p, 1) / 3), 10).unwrap();
        let s5 = NestedIntervalSystem::uniform(&(Float::with_val(p, 1) / 5), 10).unwrap();
        let ev = extend_cantor_homeomorphism(&s3, &s5, 1e-12).unwrap();
        let mut prev = Float::new(p);
        for k in 1..4096 {
            let y = ev.phi(&Float::with_val(p, k as f64 / 4096.0));
            assert!(y >= prev);
            prev = y;
        }
        for (a, b) in s3.levels[6].iter().zip(&s5.levels[6]) {
            assert!(dist(&ev.phi(&a.left), &b.left).to_f64() < 1e-30);
            assert!(dist(&ev.phi(&a.right), &b.right).to_f64() < 1e-30);
        }
    }

    #[test]
    fn mismatched_depths_are_rejected() {
        let third = Float::with_val(64, 1) / 3;
        let a = NestedIntervalSystem::uniform(&third, 3).unwrap();
        let b = NestedIntervalSystem::uniform(&third, 4).unwrap();
        assert!(matches!(extend_cantor_homeomorphism(&a, &b, 1e-9), Err(Error::MismatchedCombinatorics(_))));
    }
}
