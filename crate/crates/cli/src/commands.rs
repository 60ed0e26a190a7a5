//! The subcommands.  Each argument struct doubles as the schema of the
//! config file for that subcommand; defaults are applied after merging.

use std::path::{Path, PathBuf};

use clap::Args;
use rug::Float;
use serde::{Deserialize, Serialize};

use flatcircle_core::analysis::{
    cross_ratio_bound_suite, estimate_q, phi_grid, transition_sweep, GridPoint, QsReport, TransitionStatus,
};
use flatcircle_core::conjugacy::{
    conjugacy_defect, extend_cantor_homeomorphism, ConjugacyEvaluator, EvaluatorOptions, Homeomorphism,
    NestedIntervalSystem, DEFAULT_MAX_PREIMAGES,
};
use flatcircle_core::map_core::{dist, fmt_decimal, Family, FlatMap, MapParams};
use flatcircle_core::partition::{comparability_stats, ElementKind, PartitionBuilder};
use flatcircle_core::rotation::{rotation_cf, tune_to_cf, ContinuedFraction};
use flatcircle_core::Error;

use crate::config::{read_json, CliError, CliResult};
use crate::output::{csv_rows, emit, json, num};
use crate::parse;

const DEFAULT_SCALES: &str = "2^-6:2^-18";
const DEFAULT_SEED: u64 = 7;

fn need<T>(v: Option<T>, name: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::Validation(format!("missing required argument {name}")))
}

fn load_map(path: &Path) -> CliResult<FlatMap> {
    let params: MapParams = read_json(path)?;
    FlatMap::from_params(&params).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn positive(v: f64, name: &str) -> CliResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Validation(format!("{name} must be positive, got {v}")))
    }
}

fn at_least_one(v: usize, name: &str) -> CliResult<usize> {
    if v == 0 {
        Err(CliError::Validation(format!("{name} must be at least 1")))
    } else {
        Ok(v)
    }
}

/// Options of the conjugacy evaluator shared by several subcommands.
#[derive(Debug, Clone, Default)]
struct EvaluatorFlags {
    resolution: Option<f64>,
    max_preimages: Option<u64>,
    max_level: Option<usize>,
}

impl EvaluatorFlags {
    fn options(&self) -> CliResult<EvaluatorOptions> {
        let max_preimages = self.max_preimages.unwrap_or(DEFAULT_MAX_PREIMAGES);
        if max_preimages < 2 {
            return Err(CliError::Validation("max-preimages must be at least 2".into()));
        }
        Ok(EvaluatorOptions {
            resolution: positive(self.resolution.unwrap_or(1e-12), "resolution")?,
            max_preimages,
            max_level: self.max_level,
        })
    }
}

fn evaluator(f: &Path, g: &Path, flags: &EvaluatorFlags) -> CliResult<ConjugacyEvaluator> {
    let opts = flags.options()?;
    let (f, g) = (load_map(f)?, load_map(g)?);
    Ok(ConjugacyEvaluator::new(&f, &g, &opts)?)
}

/// Tune the translation parameter to a prescribed continued fraction.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TuneArgs {
    /// Partial quotients, e.g. `1,2` or `1,1,...` (repeated up to --depth)
    #[arg(long)]
    pub target_cf: Option<String>,
    /// Number of partial quotients to match
    #[arg(long)]
    pub depth: Option<usize>,
    /// Length of the flat interval [default: 0.5]
    #[arg(long)]
    pub u: Option<f64>,
    /// Exponent at the left end of the flat interval [default: 3]
    #[arg(long)]
    pub ell_left: Option<f64>,
    /// Exponent at the right end of the flat interval [default: 3]
    #[arg(long)]
    pub ell_right: Option<f64>,
    /// Working precision in bits [default: 256]
    #[arg(long)]
    pub precision: Option<u32>,
    /// Output file for the map JSON [default: standard output]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn tune(a: TuneArgs) -> CliResult<()> {
    let target = parse::quotients(&need(a.target_cf, "--target-cf")?, a.depth).map_err(CliError::Validation)?;
    let family = Family::new(
        a.u.unwrap_or(0.5),
        a.ell_left.unwrap_or(3.0),
        a.ell_right.unwrap_or(3.0),
        a.precision.unwrap_or(256),
    )?;
    let map = tune_to_cf(&family, &target)?;
    emit(a.out.as_deref(), &json(&map.to_params())?)
}

/// Rotation number and closest-return times of a map.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RotnumArgs {
    /// Map JSON
    pub map: Option<PathBuf>,
    /// Stop once 1/(q_n q_{n+1}) is below this [default: 1e-9]
    #[arg(long)]
    pub tol: Option<f64>,
    /// Output file [default: standard output]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Rotnum {
    rho: String,
    cf: Vec<u64>,
    q: Vec<u64>,
    /// The orbit of the flat interval closed up: `rho` is exact.
    rational: bool,
}

/// Euclid's algorithm on `p / q`.
fn rational_quotients(mut p: u64, mut q: u64) -> Vec<u64> {
    let mut a = Vec::new();
    while p != 0 {
        a.push(q / p);
        (p, q) = (q % p, p);
    }
    a
}

pub fn rotnum(a: RotnumArgs) -> CliResult<()> {
    let tol = positive(a.tol.unwrap_or(1e-9), "tol")?;
    let map = load_map(&need(a.map, "<MAP>")?)?;
    let prec = map.prec();
    let out = match rotation_cf(&map, tol) {
        Ok(cf) => Rotnum {
            rho: fmt_decimal(&cf.convergent(cf.depth() - 1, prec)),
            cf: cf.partial_quotients.clone(),
            q: cf.q.clone(),
            rational: false,
        },
        Err(Error::RationalDetected { rotations, period }) => {
            let rho = Float::with_val(prec, rotations) / period;
            let cf = ContinuedFraction::from_quotients(&rational_quotients(rotations, period))?;
            Rotnum { rho: fmt_decimal(&rho), cf: cf.partial_quotients, q: cf.q, rational: true }
        }
        Err(e) => return Err(e.into()),
    };
    emit(a.out.as_deref(), &json(&out)?)
}

/// Elements of the dynamical partition of one level.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PartitionArgs {
    /// Map JSON
    pub map: Option<PathBuf>,
    /// Partition level
    #[arg(long)]
    pub level: Option<usize>,
    /// Cap on generated preimages [default: 2^22]
    #[arg(long)]
    pub max_preimages: Option<u64>,
    /// Output file [default: standard output]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ElementOut {
    kind: ElementKind,
    index: u64,
    level: usize,
    left: String,
    right: String,
    err_radius: String,
}

pub fn partition(a: PartitionArgs) -> CliResult<()> {
    let level = need(a.level, "--level")?;
    let map = load_map(&need(a.map, "<MAP>")?)?;
    let mut builder = PartitionBuilder::new(&map);
    if let Some(cap) = a.max_preimages {
        builder = builder.with_max_preimages(cap);
    }
    let p = builder.level(level)?;
    let els: Vec<ElementOut> = p
        .elements
        .iter()
        .map(|e| ElementOut {
            kind: e.kind,
            index: e.index,
            level: e.level,
            left: fmt_decimal(e.interval.l()),
            right: fmt_decimal(e.interval.r()),
            err_radius: fmt_decimal(&e.err_radius),
        })
        .collect();
    emit(a.out.as_deref(), &json(&els)?)
}

/// Bounded-geometry statistics over a range of levels.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct GeometryArgs {
    /// Map JSON
    pub map: Option<PathBuf>,
    /// Levels, e.g. `4..12`, `4:12:2` or `4,6,9` [default: 4..12]
    #[arg(long)]
    pub levels: Option<String>,
    /// Output CSV [default: standard output]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn geometry(a: GeometryArgs) -> CliResult<()> {
    let levels = parse::levels(a.levels.as_deref().unwrap_or("4..12")).map_err(CliError::Validation)?;
    let map = load_map(&need(a.map, "<MAP>")?)?;
    let mut builder = PartitionBuilder::new(&map);
    let (first, last) = (levels[0], levels[levels.len() - 1]);
    let report = comparability_stats(&mut builder, first, last)?;
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .filter(|r| levels.contains(&r.level))
        .map(|r| {
            vec![
                r.level.to_string(),
                num(r.tau),
                num(r.min_preimage_gap_ratio),
                num(r.max_gap),
                num(r.adjacent_gap_min_ratio),
            ]
        })
        .collect();
    let header = ["level", "tau", "min_preimage_gap_ratio", "max_gap", "adjacent_gap_min_ratio"];
    emit(a.out.as_deref(), &csv_rows(&header, &rows)?)
}

/// Values of the conjugacy on a uniform grid.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ConjugateArgs {
    /// Map JSON of f
    pub f: Option<PathBuf>,
    /// Map JSON of g
    pub g: Option<PathBuf>,
    /// Resolution of the extension off the Cantor set [default: 1e-12]
    #[arg(long)]
    pub resolution: Option<f64>,
    /// Preimages of the flat interval generated per map [default: 8192]
    #[arg(long)]
    pub max_preimages: Option<u64>,
    /// Deepest partition level to build [default: deepest the budget allows]
    #[arg(long)]
    pub max_level: Option<usize>,
    /// Number of grid points k/grid [default: 4096]
    #[arg(long)]
    pub grid: Option<usize>,
    /// Output CSV [default: standard output]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn grid_csv<H: Homeomorphism + ?Sized>(h: &H, grid: usize) -> CliResult<(Vec<u8>, Vec<GridPoint>)> {
    let pts = phi_grid(h, grid)?;
    let rows: Vec<Vec<String>> = pts.iter().map(|(x, y, _)| vec![fmt_decimal(x), fmt_decimal(y)]).collect();
    Ok((csv_rows(&["x", "phi"], &rows)?, pts))
}

pub fn conjugate(a: ConjugateArgs) -> CliResult<()> {
    let grid = at_least_one(a.grid.unwrap_or(4096), "grid")?;
    let ev = evaluator(
        &need(a.f, "<F>")?,
        &need(a.g, "<G>")?,
        &EvaluatorFlags { resolution: a.resolution, max_preimages: a.max_preimages, max_level: a.max_level },
    )?;
    let (bytes, _) = grid_csv(&ev, grid)?;
    emit(a.out.as_deref(), &bytes)
}

/// Defect of the conjugacy equation on coded points of the Cantor set.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct DefectArgs {
    /// Map JSON of f
    pub f: Option<PathBuf>,
    /// Map JSON of g
    pub g: Option<PathBuf>,
    /// Coding depth [default: 8]
    #[arg(long)]
    pub depth: Option<usize>,
    /// Number of sampled points [default: 1000]
    #[arg(long)]
    pub samples: Option<usize>,
    /// Random seed [default: 7]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Preimages of the flat interval generated per map [default: 8192]
    #[arg(long)]
    pub max_preimages: Option<u64>,
    /// Output file [default: standard output]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn conjugacy_defect_cmd(a: DefectArgs) -> CliResult<()> {
    let depth = a.depth.unwrap_or(8);
    let samples = at_least_one(a.samples.unwrap_or(1000), "samples")?;
    let flags = EvaluatorFlags { max_preimages: a.max_preimages, ..Default::default() };
    let ev = evaluator(&need(a.f, "<F>")?, &need(a.g, "<G>")?, &flags)?;
    let report = conjugacy_defect(&ev, depth, samples, a.seed.unwrap_or(DEFAULT_SEED))?;
    emit(a.out.as_deref(), &json(&report)?)
}

/// Empirical quasi-symmetry constant of the conjugacy.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct QsArgs {
    /// Map JSON of f
    pub f: Option<PathBuf>,
    /// Map JSON of g
    pub g: Option<PathBuf>,
    /// Resolution of the extension off the Cantor set [default: 1e-12]
    #[arg(long)]
    pub resolution: Option<f64>,
    /// Preimages of the flat interval generated per map [default: 8192]
    #[arg(long)]
    pub max_preimages: Option<u64>,
    /// Deepest partition level to build [default: deepest the budget allows]
    #[arg(long)]
    pub max_level: Option<usize>,
    /// Total number of triples, split evenly across scales [default: 10000]
    #[arg(long)]
    pub samples: Option<usize>,
    /// Half-widths, e.g. `2^-6:2^-18` or `0.01,0.001` [default: 2^-6:2^-18]
    #[arg(long)]
    pub scales: Option<String>,
    /// Random seed [default: 7]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file [default: standard output]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct QsOut {
    samples_per_scale: usize,
    seed: u64,
    #[serde(flatten)]
    report: QsReport,
    /// Largest ratio over the three finest scales over that of the three
    /// coarsest.
    scale_stability: f64,
}

fn qs_run<H: Homeomorphism + ?Sized>(
    h: &H,
    samples: Option<usize>,
    scales: Option<&str>,
    seed: Option<u64>,
) -> CliResult<QsOut> {
    let scales = parse::scales(scales.unwrap_or(DEFAULT_SCALES)).map_err(CliError::Validation)?;
    let total = at_least_one(samples.unwrap_or(10_000), "samples")?;
    let per = total / scales.len();
    if per == 0 {
        return Err(CliError::Validation(format!("{total} samples cannot cover {} scales", scales.len())));
    }
    let seed = seed.unwrap_or(DEFAULT_SEED);
    let report = estimate_q(h, &scales, per, seed)?;
    let scale_stability = report.scale_stability(3);
    Ok(QsOut { samples_per_scale: per, seed, report, scale_stability })
}

pub fn qs_check(a: QsArgs) -> CliResult<()> {
    // validate the sampling flags before the expensive build
    parse::scales(a.scales.as_deref().unwrap_or(DEFAULT_SCALES)).map_err(CliError::Validation)?;
    let ev = evaluator(
        &need(a.f, "<F>")?,
        &need(a.g, "<G>")?,
        &EvaluatorFlags { resolution: a.resolution, max_preimages: a.max_preimages, max_level: a.max_level },
    )?;
    let out = qs_run(&ev, a.samples, a.scales.as_deref(), a.seed)?;
    emit(a.out.as_deref(), &json(&out)?)
}

/// Distortion of the transition maps f^{q_n} on f^{-q_n}.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TransitionArgs {
    /// Map JSON
    pub map: Option<PathBuf>,
    /// Levels, e.g. `4:10` or `4:10:2` [default: 4:10]
    #[arg(long)]
    pub levels: Option<String>,
    /// Output CSV [default: standard output]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn transition(a: TransitionArgs) -> CliResult<()> {
    let levels = parse::levels(a.levels.as_deref().unwrap_or("4:10")).map_err(CliError::Validation)?;
    let map = load_map(&need(a.map, "<MAP>")?)?;
    let report = transition_sweep(&map, &levels)?;
    let rows: Vec<Vec<String>> = report
        .entries
        .iter()
        .map(|e| {
            let status = match e.status {
                TransitionStatus::Conclusive => "conclusive",
                TransitionStatus::Inconclusive => "inconclusive",
            };
            vec![
                e.n.to_string(),
                e.q_n.to_string(),
                e.ratio.map(num).unwrap_or_default(),
                num(e.comparability_floor),
                status.to_string(),
            ]
        })
        .collect();
    let header = ["n", "q_n", "ratio", "comparability_floor", "status"];
    emit(a.out.as_deref(), &csv_rows(&header, &rows)?)
}

/// Cross-ratio distortion along orbits of quadruples in gaps.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CrossRatioArgs {
    /// Map JSON
    pub map: Option<PathBuf>,
    /// Partition level of the starting gaps [default: 8]
    #[arg(long)]
    pub level: Option<usize>,
    /// Number of admissible chains [default: 200]
    #[arg(long)]
    pub trials: Option<usize>,
    /// Random seed [default: 7]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file [default: standard output]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn crossratio(a: CrossRatioArgs) -> CliResult<()> {
    let level = a.level.unwrap_or(8);
    let trials = at_least_one(a.trials.unwrap_or(200), "trials")?;
    let map = load_map(&need(a.map, "<MAP>")?)?;
    let s = cross_ratio_bound_suite(&map, level, trials, a.seed.unwrap_or(DEFAULT_SEED))?;
    emit(a.out.as_deref(), &json(&s)?)
}

/// Conjugacy between two synthetic middle-gap Cantor sets.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct AppendixArgs {
    /// Removed middle fraction of the first system [default: 1/3]
    #[arg(long)]
    pub f_gap: Option<String>,
    /// Removed middle fraction of the second system [default: 1/5]
    #[arg(long)]
    pub g_gap: Option<String>,
    /// Subdivision levels [default: 16]
    #[arg(long)]
    pub depth: Option<usize>,
    /// Working precision in bits [default: 128]
    #[arg(long)]
    pub precision: Option<u32>,
    /// Resolution of the extension [default: 1e-12]
    #[arg(long)]
    pub resolution: Option<f64>,
    /// Number of grid points [default: 4096]
    #[arg(long)]
    pub grid: Option<usize>,
    /// Total number of triples, split evenly across scales [default: 10000]
    #[arg(long)]
    pub samples: Option<usize>,
    /// Half-widths [default: 2^-6:2^-18]
    #[arg(long)]
    pub scales: Option<String>,
    /// Random seed [default: 7]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV of the grid [default: not written]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output JSON of the quasi-symmetry report [default: not written]
    #[arg(long)]
    pub qs_out: Option<PathBuf>,
}

#[derive(Serialize)]
struct AppendixSummary {
    depth: usize,
    grid: usize,
    monotone: bool,
    /// Largest distance between the image of an endpoint of the deepest
    /// level and the matching endpoint of the second system.
    max_endpoint_error: f64,
    qs_global_max: f64,
    qs_scale_stability: f64,
}

pub fn appendix_demo(a: AppendixArgs) -> CliResult<()> {
    let prec = a.precision.unwrap_or(128);
    if prec < 64 {
        return Err(CliError::Validation("precision must be at least 64 bits".into()));
    }
    let gap_f = parse::fraction(a.f_gap.as_deref().unwrap_or("1/3"), prec).map_err(CliError::Validation)?;
    let gap_g = parse::fraction(a.g_gap.as_deref().unwrap_or("1/5"), prec).map_err(CliError::Validation)?;
    let depth = a.depth.unwrap_or(16);
    if depth > 24 {
        return Err(CliError::Validation("depth above 24 is not supported".into()));
    }
    let grid = at_least_one(a.grid.unwrap_or(4096), "grid")?;
    let resolution = positive(a.resolution.unwrap_or(1e-12), "resolution")?;
    parse::scales(a.scales.as_deref().unwrap_or(DEFAULT_SCALES)).map_err(CliError::Validation)?;

    let sys_f = NestedIntervalSystem::uniform(&gap_f, depth)?;
    let sys_g = NestedIntervalSystem::uniform(&gap_g, depth)?;
    let ev = extend_cantor_homeomorphism(&sys_f, &sys_g, resolution)?;

    let (bytes, pts) = grid_csv(&ev, grid)?;
    let monotone = pts.windows(2).all(|w| w[0].1 <= w[1].1);
    let mut max_endpoint_error = 0.0f64;
    for (a, b) in sys_f.levels[depth].iter().zip(&sys_g.levels[depth]) {
        for (x, y) in [(&a.left, &b.left), (&a.right, &b.right)] {
            max_endpoint_error = max_endpoint_error.max(dist(&ev.phi(x), y).to_f64());
        }
    }
    let qs = qs_run(&ev, a.samples, a.scales.as_deref(), a.seed)?;
    let summary = AppendixSummary {
        depth,
        grid,
        monotone,
        max_endpoint_error,
        qs_global_max: qs.report.global_max,
        qs_scale_stability: qs.scale_stability,
    };
    if let Some(out) = &a.out {
        emit(Some(out), &bytes)?;
    }
    if let Some(out) = &a.qs_out {
        emit(Some(out), &json(&qs)?)?;
    }
    emit(None, &json(&summary)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euclid_quotients() {
        assert_eq!(rational_quotients(3, 8), vec![2, 1, 2]);
        assert_eq!(rational_quotients(0, 5), Vec::<u64>::new());
        let cf = ContinuedFraction::from_quotients(&rational_quotients(55, 89)).unwrap();
        assert_eq!(*cf.q.last().unwrap(), 89);
    }
}
