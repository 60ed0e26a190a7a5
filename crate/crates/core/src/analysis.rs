//! Quantitative experiments: empirical quasi-symmetry of `φ`, distortion of
//! the transition maps `f^{q_n}` on `f^{-q_n}`, and the cross-ratio bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rug::Float;
use serde::Serialize;

use crate::conjugacy::Homeomorphism;
use crate::error::{Error, Result};
use crate::map_core::{arc, fmt_decimal, frac, CircleInterval, FlatMap};
use crate::partition::{cross_ratio_chain, meets, PartitionBuilder};

/// Uniform point of the circle with 128 random bits.
fn random_point(rng: &mut ChaCha8Rng, prec: u32) -> Float {
    let hi: u64 = rng.gen();
    let lo: u64 = rng.gen();
    let mut x = Float::with_val(prec.max(128), hi);
    x <<= 64;
    x += lo;
    x >>= 128;
    Float::with_val(prec, x)
}

/// Generator for sample `index` of a seeded experiment; independent of the
/// order in which samples are drawn.
fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `max(r, 1/r)` with `r = |φ(x),φ(y)| / |φ(y),φ(z)|` for a symmetric triple.
pub fn qs_ratio<H: Homeomorphism + ?Sized>(h: &H, x: &Float, y: &Float, z: &Float) -> Result<f64> {
    Ok(triple_ratio(h, x, y, z)?.0)
}

/// The ratio together with the coarsest resolution used on the triple.
fn triple_ratio<H: Homeomorphism + ?Sized>(h: &H, x: &Float, y: &Float, z: &Float) -> Result<(f64, f64)> {
    let prec = h.precision();
    let d1 = arc(x, y);
    let d2 = arc(y, z);
    let tol = Float::with_val(prec, Float::i_exp(1, 24 - prec as i32));
    if Float::with_val(prec, &d1 - &d2).abs() > tol {
        return Err(Error::DegenerateTriple(format!("|x,y| = {:e} and |y,z| = {:e} differ", d1.to_f64(), d2.to_f64())));
    }
    let floor = 2.0 * h.resolution();
    if d1.to_f64() <= floor || Float::with_val(prec, &d1 + &d2) >= 1 {
        return Err(Error::DegenerateTriple(format!("spacing {:e} out of range", d1.to_f64())));
    }
    let (px, wx) = h.apply_with_width(x)?;
    let (py, wy) = h.apply_with_width(y)?;
    let (pz, wz) = h.apply_with_width(z)?;
    let a = arc(&px, &py);
    let b = arc(&py, &pz);
    // an orientation flip would show up as a wrap-around arc
    if Float::with_val(prec, &a + &b) >= 1 {
        return Ok((f64::INFINITY, wx.max(wy).max(wz)));
    }
    let r = if b.is_zero() { f64::INFINITY } else { Float::with_val(prec, &a / &b).to_f64() };
    let r = if r < 1.0 { 1.0 / r } else { r };
    Ok((r, wx.max(wy).max(wz)))
}

/// A grid point `(x, φ(x), width)`.
pub type GridPoint = (Float, Float, f64);

/// `(x, φ(x), width)` on the grid `x = k / grid`, `0 <= k < grid`, where
/// `width` is the interpolation width reported by the evaluator.
pub fn phi_grid<H: Homeomorphism + ?Sized>(h: &H, grid: usize) -> Result<Vec<GridPoint>> {
    let prec = h.precision();
    (0..grid)
        .into_par_iter()
        .map(|k| {
            let x = Float::with_val(prec, k) / grid as u64;
            let (y, w) = h.apply_with_width(&x)?;
            Ok((x, y, w))
        })
        .collect()
}

/// Statistics of one scale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleBin {
    pub scale: f64,
    pub samples: usize,
    pub max_ratio: f64,
    pub p99_ratio: f64,
    /// Fraction of triples whose three images were resolved below the
    /// scale itself.
    pub resolved_fraction: f64,
}

/// Empirical quasi-symmetry constant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QsReport {
    pub samples: usize,
    pub scale_bins: Vec<ScaleBin>,
    /// Largest ratio seen, a lower bound for `Q`.
    pub global_max: f64,
    pub triples_rejected: usize,
}

impl QsReport {
    /// Largest ratio over the `k` finest scales divided by the largest over
    /// the `k` coarsest.
    pub fn scale_stability(&self, k: usize) -> f64 {
        let mut bins: Vec<&ScaleBin> = self.scale_bins.iter().collect();
        bins.sort_by(|a, b| b.scale.total_cmp(&a.scale));
        let k = k.min(bins.len());
        if k == 0 {
            return 1.0;
        }
        let coarse = bins[..k].iter().map(|b| b.max_ratio).fold(1.0, f64::max);
        let fine = bins[bins.len() - k..].iter().map(|b| b.max_ratio).fold(1.0, f64::max);
        fine / coarse
    }
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 1.0;
    }
    let k = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

/// Samples `samples_per_scale` symmetric triples with uniform centres for
/// each half-width in `scales`.
pub fn estimate_q<H: Homeomorphism + ?Sized>(
    h: &H,
    scales: &[f64],
    samples_per_scale: usize,
    seed: u64,
) -> Result<QsReport> {
    let floor = 2.0 * h.resolution();
    if let Some(s) = scales.iter().find(|&&s| !(s > floor && s < 0.25)) {
        return Err(Error::InvalidParameter(format!("scale {s:e} outside ({floor:e}, 1/4)")));
    }
    let prec = h.precision();
    let mut bins = Vec::with_capacity(scales.len());
    let mut rejected = 0usize;
    for (b, &scale) in scales.iter().enumerate() {
        let out: Vec<Result<(f64, f64)>> = (0..samples_per_scale)
            .into_par_iter()
            .map(|i| {
                let mut rng = sample_rng(seed, (b * samples_per_scale + i) as u64);
                let y = random_point(&mut rng, prec);
                let w = Float::with_val(prec, scale);
                let x = frac(&Float::with_val(prec, &y - &w));
                let z = frac(&Float::with_val(prec, &y + &w));
                triple_ratio(h, &x, &y, &z)
            })
            .collect();
        let mut ratios = Vec::with_capacity(out.len());
        let mut resolved = 0usize;
        for r in out {
            match r {
                Ok((q, width)) => {
                    ratios.push(q);
                    if width <= scale {
                        resolved += 1;
                    }
                }
                Err(Error::DegenerateTriple(_)) => rejected += 1,
                Err(e) => return Err(e),
            }
        }
        ratios.sort_by(f64::total_cmp);
        bins.push(ScaleBin {
            scale,
            samples: ratios.len(),
            max_ratio: ratios.last().copied().unwrap_or(1.0),
            p99_ratio: percentile(&ratios, 0.99),
            resolved_fraction: if ratios.is_empty() { 0.0 } else { resolved as f64 / ratios.len() as f64 },
        });
    }
    let global_max = bins.iter().map(|b| b.max_ratio).fold(1.0, f64::max);
    Ok(QsReport { samples: samples_per_scale * scales.len(), scale_bins: bins, global_max, triples_rejected: rejected })
}

/// Whether the designed triple exists inside `f^{-q_n}(A)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionStatus {
    Conclusive,
    /// `x` falls outside `f^{-q_n}(A)`.
    Inconclusive,
}

/// One level of the transition-map experiment.
#[derive(Debug, Clone, Serialize)]
pub struct TransitionEntry {
    pub n: usize,
    pub q_n: u64,
    pub status: TransitionStatus,
    pub x: String,
    pub y: String,
    pub z: String,
    /// `max(r, 1/r)` for `r = |f^{q_n}x, f^{q_n}y| / |f^{q_n}y, f^{q_n}z|`.
    pub ratio: Option<f64>,
    /// `|P|` with `P = f^{-q_n}`.
    pub p_length: f64,
    /// `|A| = |B|`.
    pub a_length: f64,
    pub pulled_a_length: f64,
    pub pulled_b_length: f64,
    /// `|f^{-q_n}(A)| / |P|`.
    pub comparability_floor: f64,
}

/// Levels of the transition-map experiment, in increasing order.
#[derive(Debug, Clone, Serialize)]
pub struct TransitionDistortionReport {
    pub entries: Vec<TransitionEntry>,
}

impl TransitionDistortionReport {
    /// Ratios of the conclusive levels.
    pub fn ratios(&self) -> Vec<(usize, f64)> {
        self.entries.iter().filter_map(|e| e.ratio.map(|r| (e.n, r))).collect()
    }
}

/// Pulls `y` back `k` times along the branch outside `U`.
fn pull_back(map: &FlatMap, y: &Float, k: u64) -> Float {
    let mut p = y.clone();
    for _ in 0..k {
        p = map.preimage_point(&p);
    }
    p
}

/// The three points of `P = f^{-q_n}` built from the two ends `A`, `B` of
/// `U`, and the distortion of `f^{q_n}` on them.
pub fn transition_distortion(map: &FlatMap, n: usize) -> Result<TransitionEntry> {
    let mut builder = PartitionBuilder::new(map);
    transition_entry(&mut builder, n)
}

fn transition_entry(builder: &mut PartitionBuilder, n: usize) -> Result<TransitionEntry> {
    if n == 0 {
        return Err(Error::InvalidParameter("level must be positive".into()));
    }
    let q_n = builder.continued_fraction(n)?.q[n];
    let map = builder.map().clone();
    let prec = map.prec();
    let p = builder.preimages(q_n + 1)?[q_n as usize].interval.clone();
    let u_len = map.flat_interval().length();
    let quarter = Float::with_val(prec, &u_len / 4);
    let p_len = p.length();
    if p_len >= quarter {
        return Err(Error::LevelTooShallow { level: n, length: p_len.to_f64() });
    }
    let a_len = p_len.clone().min(&quarter).clone();
    let ua = map.flat_interval();
    let a_right = Float::with_val(prec, ua.l() + &a_len);
    let b_left = Float::with_val(prec, ua.l() + Float::with_val(prec, &u_len - &a_len));
    let y = pull_back(&map, &a_right, q_n);
    let z = pull_back(&map, &b_left, q_n);
    let x = frac(&Float::with_val(prec, &y - arc(&y, &z)));
    let pulled_a = arc(p.l(), &y);
    let pulled_b = arc(&z, p.r());
    let inside = arc(&x, &y) <= pulled_a && CircleInterval::new(p.l().clone(), y.clone()).contains_closed(&x);
    let ratio = inside.then(|| {
        let fx = map.iterate(&x, q_n);
        let num = arc(&fx, &a_right);
        let den = arc(&a_right, &b_left);
        let r = Float::with_val(prec, &num / &den).to_f64();
        if r < 1.0 {
            1.0 / r
        } else {
            r
        }
    });
    Ok(TransitionEntry {
        n,
        q_n,
        status: if inside { TransitionStatus::Conclusive } else { TransitionStatus::Inconclusive },
        x: fmt_decimal(&x),
        y: fmt_decimal(&y),
        z: fmt_decimal(&z),
        ratio,
        p_length: p_len.to_f64(),
        a_length: a_len.to_f64(),
        pulled_a_length: pulled_a.to_f64(),
        pulled_b_length: pulled_b.to_f64(),
        comparability_floor: Float::with_val(prec, &pulled_a / &p_len).to_f64(),
    })
}

/// [`transition_distortion`] over a range of levels, sharing the preimages.
pub fn transition_sweep(map: &FlatMap, levels: &[usize]) -> Result<TransitionDistortionReport> {
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("levels must be strictly increasing".into()));
    }
    let mut builder = PartitionBuilder::new(map);
    let entries = levels.iter().map(|&n| transition_entry(&mut builder, n)).collect::<Result<_>>()?;
    Ok(TransitionDistortionReport { entries })
}

/// Summary of cross-ratio chains started inside gaps of `F_level`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossRatioSummary {
    pub level: usize,
    /// Length `q_level` of each chain.
    pub steps: u64,
    pub trials: usize,
    pub admissible: usize,
    pub skipped: usize,
    /// Largest `log(Cr_i / Cr_0)` over all chains and steps.
    pub max_log_ratio: Option<f64>,
    /// Largest `|log(Cr_i / Cr_0)|`.
    pub max_abs_log_ratio: f64,
    pub all_finite: bool,
    pub max_multiplicity: usize,
}

/// Quadruples `a < b < c < d` inside random gaps of `F_level`, followed for
/// `q_level` iterates.  Chains whose arc `(a_i, d_i)` meets `U` are skipped.
pub fn cross_ratio_bound_suite(map: &FlatMap, level: usize, trials: usize, seed: u64) -> Result<CrossRatioSummary> {
    let mut builder = PartitionBuilder::new(map);
    let part = builder.level(level)?.clone();
    let steps = part.q_n;
    let gaps: Vec<&CircleInterval> = part.gaps().map(|e| &e.interval).collect();
    let prec = map.prec();
    let u = map.flat_interval();
    let mut summary = CrossRatioSummary {
        level,
        steps,
        trials,
        admissible: 0,
        skipped: 0,
        max_log_ratio: None,
        max_abs_log_ratio: 0.0,
        all_finite: true,
        max_multiplicity: 0,
    };
    let max_attempts = 20 * trials;
    let mut attempt = 0u64;
    while summary.admissible < trials && (attempt as usize) < max_attempts {
        let mut rng = sample_rng(seed, attempt);
        attempt += 1;
        let gap = gaps[rng.gen_range(0..gaps.len())];
        let mut s: Vec<f64> = (0..4).map(|_| rng.gen::<f64>()).collect();
        s.sort_by(f64::total_cmp);
        if s.windows(2).any(|w| w[0] == w[1]) {
            summary.skipped += 1;
            continue;
        }
        let pts: Vec<Float> = s.iter().map(|&v| gap.at(&Float::with_val(prec, v))).collect();
        let mut ends = [pts[0].clone(), pts[3].clone()];
        let mut ok = true;
        for _ in 0..steps {
            if meets(&CircleInterval::new(ends[0].clone(), ends[1].clone()), &u) {
                ok = false;
                break;
            }
            ends = ends.map(|p| map.eval(&p));
        }
        if !ok {
            summary.skipped += 1;
            continue;
        }
        match cross_ratio_chain(map, [&pts[0], &pts[1], &pts[2], &pts[3]], steps as usize) {
            Ok(chain) => {
                summary.admissible += 1;
                summary.max_multiplicity = summary.max_multiplicity.max(chain.multiplicity);
                for &r in &chain.log_ratios {
                    if !r.is_finite() {
                        summary.all_finite = false;
                        continue;
                    }
                    summary.max_log_ratio = Some(summary.max_log_ratio.map_or(r, |m| m.max(r)));
                    summary.max_abs_log_ratio = summary.max_abs_log_ratio.max(r.abs());
                }
            }
            Err(Error::ChainEntersFlat { .. }) | Err(Error::DegenerateQuadruple) => summary.skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(summary)
}
