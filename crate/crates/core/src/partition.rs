//! Dynamical partitions `F_n`.
//!
//! `F_n` is cut out by the preimages `f^{-i}(U)`, `0 <= i < q_{n+1} + q_n`.
//! Between consecutive preimages lie the gaps, which come in two families:
//!
//! ```text
//! n even:  F^i_n     = (r(f^{-i-q_n}), l(f^{-i}))        0 <= i < q_{n+1}
//!          F^i_{n+1} = (r(f^{-i}), l(f^{-i-q_{n+1}}))    0 <= i < q_n
//! n odd:   F^i_n     = (r(f^{-i}), l(f^{-i-q_n}))
//!          F^i_{n+1} = (r(f^{-i-q_{n+1}}), l(f^{-i}))
//! ```
//!
//! The first family are the long gaps, the second the short ones.  Going
//! from `F_n` to `F_{n+1}` every short gap survives as a long gap and every
//! long gap `F^i_n` splits into the preimages `f^{-(i+q_n+(j+1)q_{n+1})}`,
//! the long gaps `F^{i+q_n+j q_{n+1}}_{n+1}` (`0 <= j < a_{n+2}`) and the
//! short gap `F^i_{n+2}`.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rug::Float;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::map_core::{arc, dist, CircleInterval, FlatMap};
use crate::rotation::{first_return_times, rigid_position, ContinuedFraction};

/// Levels up to which partitions are always built before the precision
/// guard extrapolates further.
const PREDICT_FROM: usize = 12;

/// Default cap on the number of preimages a builder will compute.
pub const DEFAULT_MAX_PREIMAGES: u64 = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Preimage,
    LongGap,
    ShortGap,
}

impl ElementKind {
    pub fn is_gap(self) -> bool {
        self != ElementKind::Preimage
    }
}

/// One element of `F_n`.
#[derive(Debug, Clone)]
pub struct PartitionElement {
    pub kind: ElementKind,
    pub index: u64,
    pub interval: CircleInterval,
    pub level: usize,
    pub err_radius: Float,
}

impl PartitionElement {
    pub fn length(&self) -> Float {
        self.interval.length()
    }
}

/// A preimage `f^{-i}(U)` with the error radius of its endpoints.
#[derive(Debug, Clone)]
pub struct Preimage {
    pub interval: CircleInterval,
    pub err_radius: Float,
}

/// `F_n`, circularly ordered starting from `U = f^0`.
#[derive(Debug, Clone)]
pub struct DynamicalPartition {
    pub level: usize,
    pub q_n: u64,
    pub q_next: u64,
    pub elements: Vec<PartitionElement>,
}

impl DynamicalPartition {
    pub fn preimages(&self) -> impl Iterator<Item = &PartitionElement> {
        self.elements.iter().filter(|e| e.kind == ElementKind::Preimage)
    }

    pub fn gaps(&self) -> impl Iterator<Item = &PartitionElement> {
        self.elements.iter().filter(|e| e.kind.is_gap())
    }

    pub fn total_length(&self) -> Float {
        let prec = self.elements[0].interval.left.prec();
        let mut s = Float::new(prec);
        for e in &self.elements {
            s += e.length();
        }
        s
    }

    pub fn max_gap(&self) -> Float {
        self.gaps().map(|g| g.length()).max_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal)).unwrap()
    }

    pub fn min_width(&self) -> Float {
        self.elements.iter().map(|e| e.length()).min_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal)).unwrap()
    }

    /// Position of the element whose closed interval contains `x`, preferring
    /// the one with `x` in its interior.
    pub fn locate(&self, x: &Float) -> usize {
        let starts: Vec<&Float> = self.elements.iter().map(|e| e.interval.l()).collect();
        // elements are sorted by left endpoint, U first at 0
        let k = starts.partition_point(|s| *s <= x);
        k.max(1) - 1
    }

    /// Element with the given kind and index.
    pub fn find(&self, kind: ElementKind, index: u64) -> Option<&PartitionElement> {
        self.elements.iter().find(|e| e.kind == kind && e.index == index)
    }
}

/// Incremental builder sharing one preimage chain across levels.
#[derive(Debug, Clone)]
pub struct PartitionBuilder {
    map: FlatMap,
    cf: Option<ContinuedFraction>,
    chain: Vec<Preimage>,
    max_preimages: u64,
    cache: BTreeMap<usize, DynamicalPartition>,
}

impl PartitionBuilder {
    pub fn new(map: &FlatMap) -> Self {
        PartitionBuilder {
            map: map.clone(),
            cf: None,
            chain: vec![Preimage { interval: map.flat_interval(), err_radius: Float::new(map.prec()) }],
            max_preimages: DEFAULT_MAX_PREIMAGES,
            cache: BTreeMap::new(),
        }
    }

    pub fn with_max_preimages(mut self, cap: u64) -> Self {
        self.max_preimages = cap;
        self
    }

    pub fn map(&self) -> &FlatMap {
        &self.map
    }

    /// Return times of the map to at least `depth`.
    pub fn continued_fraction(&mut self, depth: usize) -> Result<&ContinuedFraction> {
        let have = self.cf.as_ref().map_or(0, |c| c.depth());
        if have < depth {
            self.cf = Some(first_return_times(&self.map, depth)?);
        }
        Ok(self.cf.as_ref().unwrap())
    }

    /// `f^{-i}(U)` for `i < count`.
    pub fn preimages(&mut self, count: u64) -> Result<&[Preimage]> {
        if count > self.max_preimages {
            return Err(Error::BudgetExceeded(format!("{count} preimages requested, cap is {}", self.max_preimages)));
        }
        let tol = self.map.ulp_scale(8);
        while (self.chain.len() as u64) < count {
            let prev = self.chain.last().unwrap();
            let next = self.map.pull_back_interval(&prev.interval)?;
            let t = self.map.t();
            let margin = dist(prev.interval.l(), t).min(&dist(prev.interval.r(), t)).clone();
            let quarter = Float::with_val(margin.prec(), &margin / 4);
            if prev.err_radius >= quarter {
                return Err(Error::PrecisionExhausted(format!(
                    "endpoint uncertainty of f^-{} reaches the critical value",
                    self.chain.len() - 1
                )));
            }
            let dl = self.map.derivative(next.l());
            let dr = self.map.derivative(next.r());
            let slope = dl.min(&dr).clone();
            let mut err = Float::with_val(self.map.prec(), &prev.err_radius / &slope);
            err += &tol;
            self.chain.push(Preimage { interval: next, err_radius: err });
        }
        Ok(&self.chain[..count as usize])
    }

    /// `F_n`, built once and cached.
    pub fn level(&mut self, n: usize) -> Result<&DynamicalPartition> {
        if !self.cache.contains_key(&n) {
            if n > PREDICT_FROM {
                self.predict(n)?;
            }
            let p = self.build(n)?;
            self.cache.insert(n, p);
        }
        Ok(&self.cache[&n])
    }

    /// Refuses levels whose smallest element would fall below the working
    /// resolution, extrapolating the decay seen on shallow levels.
    fn predict(&mut self, n: usize) -> Result<()> {
        let mut pts = Vec::new();
        for k in 2..=PREDICT_FROM {
            let w = self.level(k)?.min_width();
            pts.push((k as f64, w.ln().to_f64()));
        }
        let (slope, icpt) = least_squares(&pts);
        let floor = self.floor_width().ln().to_f64();
        let predicted = icpt + slope * n as f64;
        if predicted < floor {
            return Err(Error::PrecisionExhausted(format!(
                "level {n} would need elements of width about e^{predicted:.0}, below the resolution e^{floor:.0}"
            )));
        }
        Ok(())
    }

    fn floor_width(&self) -> Float {
        self.map.ulp_scale(32)
    }

    fn build(&mut self, n: usize) -> Result<DynamicalPartition> {
        let cf = self.continued_fraction(n + 2)?.clone();
        let (qn, qn1) = (cf.q[n], cf.q[n + 1]);
        let count = qn + qn1;
        let chain = self.preimages(count)?.to_vec();
        let (pn2, qn2) = (cf.p[n + 2], cf.q[n + 2]);
        let prec = self.map.prec();

        let mut order: Vec<u64> = (1..count).collect();
        order.sort_by(|&a, &b| chain[a as usize].interval.l().partial_cmp(chain[b as usize].interval.l()).unwrap());
        order.insert(0, 0);

        // cyclic order of preimages must be that of the rigid rotation
        for w in order.windows(2) {
            if rigid_position(w[0], pn2, qn2) >= rigid_position(w[1], pn2, qn2) {
                return Err(Error::CombinatoricsViolation(format!(
                    "f^-{} and f^-{} are out of rigid order at level {n}",
                    w[0], w[1]
                )));
            }
        }

        let mut elements = Vec::with_capacity(2 * count as usize);
        for (pos, &a) in order.iter().enumerate() {
            let b = order[(pos + 1) % order.len()];
            let pa = &chain[a as usize];
            let pb = &chain[b as usize];
            elements.push(PartitionElement {
                kind: ElementKind::Preimage,
                index: a,
                interval: pa.interval.clone(),
                level: n,
                err_radius: pa.err_radius.clone(),
            });
            let (kind, index) = gap_label(n, a, b, qn, qn1).ok_or_else(|| {
                Error::CombinatoricsViolation(format!("gap between f^-{a} and f^-{b} has no label at level {n}"))
            })?;
            let gap = CircleInterval::new(pa.interval.r().clone(), pb.interval.l().clone());
            let err = pa.err_radius.clone().max(&pb.err_radius).clone();
            elements.push(PartitionElement { kind, index, interval: gap, level: n, err_radius: err });
        }

        let p = DynamicalPartition { level: n, q_n: qn, q_next: qn1, elements };
        let total = p.total_length();
        let slack = Float::with_val(prec, Float::i_exp(1, -(prec as i32) + 20)) * (n.max(1) as u32);
        if Float::with_val(prec, &total - 1u32).abs() > slack {
            return Err(Error::CombinatoricsViolation(format!(
                "elements of level {n} do not tile the circle (total length {})",
                total.to_f64()
            )));
        }
        if p.min_width() < self.floor_width() {
            return Err(Error::PrecisionExhausted(format!("smallest element of level {n} is below 2^-{}", prec - 32)));
        }
        Ok(p)
    }
}

/// Label of the gap between `f^{-a}` (on its left) and `f^{-b}`.
fn gap_label(n: usize, a: u64, b: u64, qn: u64, qn1: u64) -> Option<(ElementKind, u64)> {
    let even = n.is_multiple_of(2);
    if even {
        if a == b + qn && b < qn1 {
            return Some((ElementKind::LongGap, b));
        }
        if b == a + qn1 && a < qn {
            return Some((ElementKind::ShortGap, a));
        }
    } else {
        if b == a + qn && a < qn1 {
            return Some((ElementKind::LongGap, a));
        }
        if a == b + qn1 && b < qn {
            return Some((ElementKind::ShortGap, b));
        }
    }
    None
}

fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Least-squares slope of `log(y)` against `x`.
pub fn log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).map(|(&x, &y)| (x, y.ln())).collect();
    least_squares(&pts).0
}

/// `F_n` for a single level.
pub fn build_partition(map: &FlatMap, n: usize) -> Result<DynamicalPartition> {
    let mut b = PartitionBuilder::new(map);
    Ok(b.level(n)?.clone())
}

/// How one long gap of the coarse level splits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitCensus {
    pub gap_index: u64,
    pub preimages: Vec<u64>,
    pub long_gaps: Vec<u64>,
    pub short_gaps: Vec<u64>,
}

/// Outcome of [`verify_refinement`].
#[derive(Debug, Clone, Serialize)]
pub struct RefinementReport {
    pub coarse_level: usize,
    pub a_next: u64,
    pub splits: Vec<SplitCensus>,
    pub shorts_become_long: usize,
}

/// Checks that `fine = F_{n+1}` refines `coarse = F_n` as described in the
/// module documentation, with exact index bookkeeping.
pub fn verify_refinement(coarse: &DynamicalPartition, fine: &DynamicalPartition) -> Result<RefinementReport> {
    if fine.level != coarse.level + 1 {
        return Err(Error::InvalidParameter("fine partition must be exactly one level deeper".into()));
    }
    let (qn, qn1) = (coarse.q_n, coarse.q_next);
    if fine.q_n != qn1 {
        return Err(Error::CombinatoricsViolation("return times of the two levels disagree".into()));
    }
    let qn2 = fine.q_next;
    if qn2 < qn || !(qn2 - qn).is_multiple_of(qn1) {
        return Err(Error::CombinatoricsViolation(format!("q_n+2 = {qn2} is not a_n+2 q_n+1 + q_n")));
    }
    let a = (qn2 - qn) / qn1;

    // each fine element is assigned to the coarse element containing it
    let mut buckets: Vec<Vec<&PartitionElement>> = vec![Vec::new(); coarse.elements.len()];
    for e in &fine.elements {
        let host = containing(coarse, e).ok_or_else(|| {
            Error::CombinatoricsViolation(format!(
                "{:?} {} of level {} lies in no coarse element",
                e.kind, e.index, fine.level
            ))
        })?;
        buckets[host].push(e);
    }

    let mut splits = Vec::new();
    let mut shorts = 0;
    for (c, inside) in coarse.elements.iter().zip(&buckets) {
        match c.kind {
            ElementKind::Preimage => {
                if inside.len() != 1 || inside[0].kind != ElementKind::Preimage || inside[0].index != c.index {
                    return Err(Error::CombinatoricsViolation(format!("preimage f^-{} does not persist", c.index)));
                }
            }
            ElementKind::ShortGap => {
                let ok = inside.len() == 1
                    && inside[0].kind == ElementKind::LongGap
                    && inside[0].index == c.index
                    && inside[0].interval == c.interval;
                if !ok {
                    return Err(Error::CombinatoricsViolation(format!(
                        "short gap {} of level {} does not become a long gap",
                        c.index, coarse.level
                    )));
                }
                shorts += 1;
            }
            ElementKind::LongGap => {
                let i = c.index;
                let pick = |k: ElementKind| {
                    let mut v: Vec<u64> = inside.iter().filter(|e| e.kind == k).map(|e| e.index).collect();
                    v.sort_unstable();
                    v
                };
                let census = SplitCensus {
                    gap_index: i,
                    preimages: pick(ElementKind::Preimage),
                    long_gaps: pick(ElementKind::LongGap),
                    short_gaps: pick(ElementKind::ShortGap),
                };
                let long: Vec<u64> = (0..a).map(|j| i + qn + j * qn1).collect();
                let pre: Vec<u64> = long.iter().map(|k| k + qn1).collect();
                if census.preimages != pre || census.long_gaps != long || census.short_gaps != vec![i] {
                    return Err(Error::CombinatoricsViolation(format!(
                        "long gap {i} of level {} splits as {:?}",
                        coarse.level, census
                    )));
                }
                splits.push(census);
            }
        }
    }
    Ok(RefinementReport { coarse_level: coarse.level, a_next: a, splits, shorts_become_long: shorts })
}

fn containing(p: &DynamicalPartition, e: &PartitionElement) -> Option<usize> {
    let mid = e.interval.at(&Float::with_val(e.interval.left.prec(), 0.5));
    let k = p.locate(&mid);
    p.elements[k].interval.contains_interval(&e.interval).then_some(k)
}

/// Distance from `U` to the closest return `f^{q_n}(U)`.
fn return_distance(map: &FlatMap, q: u64) -> Float {
    let x = map.iterate(map.t(), q - 1);
    let right = Float::with_val(map.prec(), &x - map.u());
    let left = Float::with_val(map.prec(), 1 - &x);
    right.min(&left).clone()
}

/// `τ_n = |f^0, f^{q_n}| / |f^0, f^{q_{n-2}}|`.
pub fn scaling_tau(map: &FlatMap, n: usize) -> Result<Float> {
    if n < 2 {
        return Err(Error::InvalidParameter("τ_n needs n >= 2".into()));
    }
    let cf = first_return_times(map, n)?;
    Ok(scaling_tau_with(map, &cf, n))
}

fn scaling_tau_with(map: &FlatMap, cf: &ContinuedFraction, n: usize) -> Float {
    let num = return_distance(map, cf.q[n]);
    let den = return_distance(map, cf.q[n - 2]);
    num / den
}

/// Empirical geometry of a range of levels.
#[derive(Debug, Clone, Serialize)]
pub struct GeometryRow {
    pub level: usize,
    pub tau: f64,
    pub min_preimage_gap_ratio: f64,
    pub max_gap: f64,
    pub adjacent_gap_min_ratio: f64,
    pub min_gap_to_parent_ratio: f64,
}

/// Empirical constants of the bounded-geometry statements.
#[derive(Debug, Clone, Serialize)]
pub struct GeometryReport {
    pub tau: Vec<f64>,
    pub min_preimage_to_gap: f64,
    pub max_gap_length_per_level: Vec<f64>,
    /// `(C_1, C_2)` per depth `α = 1, 2, ...`: the extreme values of
    /// `(|f^{-i}| / |F|)^{1/α}` over preimages first appearing `α` levels
    /// below the gap `F` containing them.
    pub comparability_alpha_bounds: Vec<(f64, f64)>,
    pub rows: Vec<GeometryRow>,
}

fn ratio(a: &Float, b: &Float) -> f64 {
    Float::with_val(a.prec(), a / b).to_f64()
}

fn level_row(
    map: &FlatMap,
    cf: &ContinuedFraction,
    p: &DynamicalPartition,
    parent: Option<&DynamicalPartition>,
) -> GeometryRow {
    let els = &p.elements;
    let m = els.len();
    let mut pre_gap = f64::INFINITY;
    let mut adj = f64::INFINITY;
    for (k, e) in els.iter().enumerate() {
        let before = &els[(k + m - 1) % m];
        let after = &els[(k + 1) % m];
        if e.kind == ElementKind::Preimage {
            let len = e.length();
            if e.index > 0 {
                pre_gap = pre_gap.min(ratio(&len, &before.length())).min(ratio(&len, &after.length()));
            }
            let (gl, gr) = (before.length(), after.length());
            let r = ratio(&gl, &gr);
            adj = adj.min(r.min(1.0 / r));
        }
    }
    let mut to_parent = f64::INFINITY;
    if let Some(parent) = parent {
        for g in p.gaps() {
            if let Some(k) = containing(parent, g) {
                to_parent = to_parent.min(ratio(&g.length(), &parent.elements[k].length()));
            }
        }
    }
    let tau = if p.level >= 2 { scaling_tau_with(map, cf, p.level).to_f64() } else { f64::NAN };
    GeometryRow {
        level: p.level,
        tau,
        min_preimage_gap_ratio: pre_gap,
        max_gap: p.max_gap().to_f64(),
        adjacent_gap_min_ratio: adj,
        min_gap_to_parent_ratio: to_parent,
    }
}

/// Geometry statistics for the levels `first..=last`.
pub fn comparability_stats(builder: &mut PartitionBuilder, first: usize, last: usize) -> Result<GeometryReport> {
    if first > last {
        return Err(Error::InvalidParameter("empty level range".into()));
    }
    let map = builder.map().clone();
    let cf = builder.continued_fraction(last + 2)?.clone();
    let mut rows = Vec::new();
    for n in first..=last {
        let parent = if n > first { Some(builder.level(n - 1)?.clone()) } else { None };
        let p = builder.level(n)?.clone();
        rows.push(level_row(&map, &cf, &p, parent.as_ref()));
    }

    // preimage f^{-i} first appears at the level n with q_n + q_{n+1} > i
    let first_level = |i: u64| (0..cf.q.len() - 1).find(|&n| cf.q[n] + cf.q[n + 1] > i).unwrap();
    let mut alpha: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    let base = builder.level(first)?.clone();
    let deep = builder.level(last)?.clone();
    for e in deep.preimages() {
        let born = first_level(e.index);
        if born <= first {
            continue;
        }
        let a = born - first;
        let mid = e.interval.at(&Float::with_val(e.interval.left.prec(), 0.5));
        let host = &base.elements[base.locate(&mid)];
        if !host.kind.is_gap() {
            continue;
        }
        let r = ratio(&e.length(), &host.length()).powf(1.0 / a as f64);
        let entry = alpha.entry(a).or_insert((f64::INFINITY, 0.0));
        entry.0 = entry.0.min(r);
        entry.1 = entry.1.max(r);
    }

    Ok(GeometryReport {
        tau: rows.iter().map(|r| r.tau).collect(),
        min_preimage_to_gap: rows.iter().map(|r| r.min_preimage_gap_ratio).fold(f64::INFINITY, f64::min),
        max_gap_length_per_level: rows.iter().map(|r| r.max_gap).collect(),
        comparability_alpha_bounds: alpha.into_values().collect(),
        rows,
    })
}

/// `|b - a| |d - c| / (|c - a| |d - b|)` for points in cyclic order on a
/// common arc.
pub fn cross_ratio(a: &Float, b: &Float, c: &Float, d: &Float) -> Result<Float> {
    let b1 = arc(a, b);
    let c1 = arc(a, c);
    let d1 = arc(a, d);
    if !(b1 <= c1 && c1 <= d1) {
        return Err(Error::DegenerateQuadruple);
    }
    let ca = c1.clone();
    let db = Float::with_val(d1.prec(), &d1 - &b1);
    if ca.is_zero() || db.is_zero() {
        return Err(Error::DegenerateQuadruple);
    }
    let dc = Float::with_val(d1.prec(), &d1 - &c1);
    Ok(b1 * dc / ca / db)
}

/// Result of following a quadruple forward.
#[derive(Debug, Clone, Serialize)]
pub struct CrossRatioChain {
    /// `log(Cr_i / Cr_0)` for `i = 1..=steps` (just `[0]` when `steps = 0`).
    pub log_ratios: Vec<f64>,
    /// Largest number of arcs `(a_i, d_i)`, `0 <= i < steps`, covering one point.
    pub multiplicity: usize,
}

/// Largest number of the given open arcs covering a single point.
pub fn arc_multiplicity(arcs: &[CircleInterval]) -> usize {
    if arcs.is_empty() {
        return 0;
    }
    // sweep from 0, counting the arcs that already cover it
    let mut events: Vec<(Float, i32)> = Vec::with_capacity(2 * arcs.len());
    let mut depth: i32 = 0;
    for j in arcs {
        if j.wraps() {
            depth += 1;
        }
        events.push((j.left.clone(), 1));
        events.push((j.right.clone(), -1));
    }
    // closings before openings at the same point: the arcs are open
    events.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.cmp(&y.1)));
    let mut best = depth;
    for (_, d) in events {
        depth += d;
        best = best.max(depth);
    }
    best.max(0) as usize
}

/// Follows `(a, b, c, d)` for `steps` iterates, recording the distortion of
/// the cross-ratio.
pub fn cross_ratio_chain(map: &FlatMap, quad: [&Float; 4], steps: usize) -> Result<CrossRatioChain> {
    let mut pts: [Float; 4] = quad.map(|p| p.clone());
    let cr0 = cross_ratio(&pts[0], &pts[1], &pts[2], &pts[3])?;
    if steps == 0 {
        return Ok(CrossRatioChain { log_ratios: vec![0.0], multiplicity: 0 });
    }
    let u = map.flat_interval();
    let mut arcs = Vec::with_capacity(steps);
    let mut out = Vec::with_capacity(steps);
    for i in 0..steps {
        let bc = CircleInterval::new(pts[1].clone(), pts[2].clone());
        if meets(&bc, &u) {
            return Err(Error::ChainEntersFlat { step: i });
        }
        arcs.push(CircleInterval::new(pts[0].clone(), pts[3].clone()));
        pts = pts.map(|p| map.eval(&p));
        let cr = cross_ratio(&pts[0], &pts[1], &pts[2], &pts[3])?;
        if cr.is_zero() {
            return Err(Error::DegenerateQuadruple);
        }
        out.push(Float::with_val(cr.prec(), &cr / &cr0).ln().to_f64());
    }
    Ok(CrossRatioChain { log_ratios: out, multiplicity: arc_multiplicity(&arcs) })
}

/// True when the open arcs `a` and `b` intersect.
pub fn meets(a: &CircleInterval, b: &CircleInterval) -> bool {
    a.contains_open(b.l())
        || b.contains_open(a.l())
        || (a.l() == b.l() && !a.length().is_zero() && !b.length().is_zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_core::Family;
    use crate::rotation::tune_to_cf;

    fn golden() -> FlatMap {
        tune_to_cf(&Family::new(0.5, 3.0, 3.0, 256).unwrap(), &[1; 16]).unwrap()
    }

    fn silver() -> FlatMap {
        tune_to_cf(&Family::new(0.5, 3.0, 3.0, 256).unwrap(), &[2; 11]).unwrap()
    }

    fn f(x: f64) -> Float {
        Float::with_val(128, x)
    }

    #[test]
    fn cross_ratio_examples() {
        let c = cross_ratio(&f(0.0), &f(0.25), &f(0.5), &f(0.75)).unwrap();
        assert!((c.to_f64() - 0.25).abs() < 1e-30);
        let c = cross_ratio(&f(0.0), &f(0.1), &f(0.2), &f(0.4)).unwrap();
        assert!((c.to_f64() - 1.0 / 3.0).abs() < 1e-15);
        assert!(cross_ratio(&f(0.0), &f(0.0), &f(0.0), &f(0.4)).is_err());
        assert!(cross_ratio(&f(0.2), &f(0.2), &f(0.3), &f(0.4)).unwrap().is_zero());
    }

    #[test]
    fn multiplicity_of_arcs() {
        let arcs = vec![
            CircleInterval::new(f(0.1), f(0.3)),
            CircleInterval::new(f(0.2), f(0.4)),
            CircleInterval::new(f(0.3), f(0.5)),
            CircleInterval::new(f(0.9), f(0.25)),
        ];
        assert_eq!(arc_multiplicity(&arcs), 3);
        assert_eq!(arc_multiplicity(&arcs[2..3]), 1);
    }

    #[test]
    fn golden_level_one_has_six_elements() {
        let p = build_partition(&golden(), 1).unwrap();
        assert_eq!(p.elements.len(), 6);
        assert_eq!(p.preimages().count(), 3);
        assert_eq!(p.gaps().filter(|g| g.kind == ElementKind::LongGap).count(), 2);
    }

    #[test]
    fn element_counts_and_tiling() {
        let m = golden();
        let mut b = PartitionBuilder::new(&m);
        for n in 1..=8 {
            let p = b.level(n).unwrap().clone();
            assert_eq!(p.elements.len() as u64, 2 * (p.q_n + p.q_next));
            let err = Float::with_val(256, p.total_length() - 1u32).abs();
            assert!(err < 1e-40, "level {n}");
        }
    }

    #[test]
    fn refinement_census() {
        for (m, a) in [(golden(), 1), (silver(), 2)] {
            let mut b = PartitionBuilder::new(&m);
            for n in 1..8 {
                let c = b.level(n).unwrap().clone();
                let fine = b.level(n + 1).unwrap().clone();
                let r = verify_refinement(&c, &fine).unwrap();
                assert_eq!(r.a_next, a);
                assert!(r.splits.iter().all(|s| s.preimages.len() as u64 == a));
            }
        }
    }

    #[test]
    fn index_dynamics() {
        let m = golden();
        let p = build_partition(&m, 5).unwrap();
        let tol = 1e-60;
        for e in p.preimages().filter(|e| e.index > 0) {
            let prev = p.find(ElementKind::Preimage, e.index - 1).unwrap();
            let l = m.eval(e.interval.l());
            let r = m.eval(e.interval.r());
            assert!(dist(&l, prev.interval.l()).to_f64() < tol);
            assert!(dist(&r, prev.interval.r()).to_f64() < tol);
        }
    }

    #[test]
    fn tau_lies_in_unit_interval() {
        let m = golden();
        for n in 2..8 {
            let t = scaling_tau(&m, n).unwrap().to_f64();
            assert!(t > 0.0 && t < 1.0, "τ_{n} = {t}");
        }
    }

    #[test]
    fn chain_with_zero_steps() {
        let m = golden();
        let (a, b, c, d) = (f(0.6), f(0.61), f(0.62), f(0.63));
        let ch = cross_ratio_chain(&m, [&a, &b, &c, &d], 0).unwrap();
        assert_eq!(ch.log_ratios, vec![0.0]);
    }

    #[test]
    fn chain_through_flat_interval_is_rejected() {
        let m = golden();
        let (a, b, c, d) = (f(0.9), f(0.95), f(0.1), f(0.2));
        assert!(matches!(cross_ratio_chain(&m, [&a, &b, &c, &d], 3), Err(Error::ChainEntersFlat { step: 0 })));
    }

    #[test]
    fn deep_level_exhausts_precision() {
        let mut b = PartitionBuilder::new(&golden());
        assert!(matches!(b.level(99), Err(Error::PrecisionExhausted(_))));
    }
}
