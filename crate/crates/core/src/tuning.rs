//! Choosing the threshold λ.
//!
//! Two data-driven rules are offered next to a fixed value:
//!
//! * **propagation calibration** — the smallest λ for which AWC puts a
//!   uniform sample on the unit ball into a single cluster in a prescribed
//!   share of simulated datasets;
//! * **sum of weights** — run AWC over a grid of λ, track
//!   `S(λ) = Σ_ij w_ij` and pick the start of the first plateau.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::awc::{AwcConfig, ClusteringResult, PreparedAwc};
use crate::data::generators::{Generator, UniformBall};
use crate::error::{AwcError, Result};
use crate::metrics::connectedness;
use crate::neighborhood::PointMatrix;
use crate::registry::Registry;

/// `Σ_ij w_ij` of the final weights, diagonal included.
pub fn sum_of_weights(result: &ClusteringResult) -> u64 {
    result.weights.total()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Plateau {
    /// Grid indices, inclusive.
    pub start: usize,
    pub end: usize,
    pub lambda_start: f64,
    pub lambda_end: f64,
    pub mean_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCurve {
    pub lambdas: Vec<f64>,
    pub s_values: Vec<u64>,
    pub plateaus: Vec<Plateau>,
}

impl SweepCurve {
    pub fn recommended(&self) -> Option<f64> {
        self.plateaus.first().map(|p| p.lambda_start)
    }

    /// Plateau index of every grid point, `-1` outside plateaus.
    pub fn plateau_ids(&self) -> Vec<i64> {
        let mut ids = vec![-1; self.lambdas.len()];
        for (k, p) in self.plateaus.iter().enumerate() {
            ids[p.start..=p.end].fill(k as i64);
        }
        ids
    }
}

pub const DEFAULT_REL_TOL: f64 = 0.05;
pub const DEFAULT_MIN_LEN: usize = 3;

/// `count` geometrically spaced values from `lo` to `hi`.
pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) || count < 2 {
        return Err(AwcError::Config(format!(
            "geometric grid needs 0 < lo < hi and at least 2 points, got [{lo}, {hi}] x {count}"
        )));
    }
    let ratio = (hi / lo).ln() / (count - 1) as f64;
    let mut grid: Vec<f64> = (0..count).map(|k| lo * (ratio * k as f64).exp()).collect();
    grid[count - 1] = hi;
    Ok(grid)
}

/// Forty values from 0.5 to 20.
pub fn default_grid() -> Vec<f64> {
    geometric_grid(0.5, 20.0, 40).expect("valid default grid")
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 8 {
        return Err(AwcError::Config(format!("λ grid has {} values; at least 8 are required", grid.len())));
    }
    if grid.iter().any(|l| !(*l >= 0.0) || l.is_nan()) {
        return Err(AwcError::Config("λ grid values must be nonnegative numbers".into()));
    }
    if let Some(k) = grid.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(AwcError::Config(format!(
            "λ grid must be strictly increasing: {} is followed by {}",
            grid[k],
            grid[k + 1]
        )));
    }
    Ok(())
}

/// Run AWC for every grid value and record `S(λ)`; plateaus are detected
/// with the default tolerance. Grid points run in parallel.
pub fn sweep_lambda(prepared: &PreparedAwc, grid: &[f64]) -> Result<SweepCurve> {
    validate_grid(grid)?;
    let s_values = grid
        .par_iter()
        .map(|&lambda| prepared.run(lambda).map(|r| sum_of_weights(&r)))
        .collect::<Result<Vec<_>>>()?;
    let mut curve = SweepCurve {
        lambdas: grid.to_vec(),
        s_values,
        plateaus: Vec::new(),
    };
    curve.plateaus = detect_plateau(&curve, DEFAULT_REL_TOL, DEFAULT_MIN_LEN)?;
    Ok(curve)
}

/// Maximal runs of at least `min_len` grid points over which consecutive
/// values change by at most `rel_tol` relative to the earlier value.
pub fn detect_plateau(curve: &SweepCurve, rel_tol: f64, min_len: usize) -> Result<Vec<Plateau>> {
    if !(rel_tol > 0.0 && rel_tol <= 0.2) {
        return Err(AwcError::Config(format!("rel_tol = {rel_tol} must lie in (0, 0.2]")));
    }
    if min_len < 3 {
        return Err(AwcError::Config(format!("min_len = {min_len} must be at least 3")));
    }
    if curve.lambdas.len() != curve.s_values.len() {
        return Err(AwcError::InvalidInput("sweep curve has mismatched lengths".into()));
    }
    let s = &curve.s_values;
    let flat = |k: usize| (s[k + 1] as f64 - s[k] as f64).abs() / (s[k] as f64).max(1.0) <= rel_tol;
    let mut plateaus = Vec::new();
    let mut start = 0;
    for k in 0..s.len() {
        if k + 1 == s.len() || !flat(k) {
            if k + 1 - start >= min_len {
                let mean_s = s[start..=k].iter().map(|&v| v as f64).sum::<f64>() / (k + 1 - start) as f64;
                plateaus.push(Plateau {
                    start,
                    end: k,
                    lambda_start: curve.lambdas[start],
                    lambda_end: curve.lambdas[k],
                    mean_s,
                });
            }
            start = k + 1;
        }
    }
    Ok(plateaus)
}

pub fn write_sweep_csv(curve: &SweepCurve, path: &Path) -> Result<()> {
    let io = |source| AwcError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["lambda", "S", "plateau_id"]).map_err(io)?;
    for ((l, s), id) in curve.lambdas.iter().zip(&curve.s_values).zip(curve.plateau_ids()) {
        w.write_record([l.to_string(), s.to_string(), id.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|source| AwcError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// What counts as a correct clustering of a uniform ball sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Criterion {
    /// Exactly one cluster.
    #[default]
    OneCluster,
    /// Connectedness coefficient over the whole ball of at least
    /// `1 − alpha`.
    Connectedness { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationSpec {
    pub n: usize,
    pub dim: usize,
    pub level: f64,
    pub runs: usize,
    pub seed: u64,
    pub criterion: Criterion,
    /// Bisection stops once the bracket is this narrow.
    pub resolution: f64,
}

impl CalibrationSpec {
    pub fn new(n: usize, dim: usize, level: f64, runs: usize, seed: u64) -> Self {
        Self {
            n,
            dim,
            level,
            runs,
            seed,
            criterion: Criterion::OneCluster,
            resolution: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub lambda: f64,
    /// Success rate at the returned λ.
    pub rate: f64,
    /// Every λ evaluated, with its success rate, in increasing λ.
    pub evaluated: Vec<(f64, f64)>,
    /// Adjacent evaluated λ values whose rates decrease.
    pub monotonicity_violations: Vec<(f64, f64)>,
}

/// Dataset `run` of a calibration: ChaCha8 seeded with `seed`, stream `run`.
pub fn calibration_sample(spec: &CalibrationSpec, run: usize) -> PointMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(run as u64);
    UniformBall { n: spec.n, dim: spec.dim }.sample(&mut rng).0
}

/// Smallest λ (up to `resolution`) at which at least `level` of `runs`
/// uniform-ball datasets are clustered correctly.
///
/// The same datasets are reused for every λ. The bracket is found by
/// doubling from 1 and then narrowed by bisection; the upper end is
/// returned.
pub fn calibrate_propagation(spec: &CalibrationSpec, config: &AwcConfig) -> Result<Calibration> {
    if spec.runs < 20 {
        return Err(AwcError::Config(format!("runs = {} but at least 20 are required", spec.runs)));
    }
    if !(spec.level > 0.5 && spec.level < 1.0) {
        return Err(AwcError::Config(format!("level = {} must lie in (0.5, 1)", spec.level)));
    }
    if !(spec.resolution > 0.0) {
        return Err(AwcError::Config(format!("resolution = {} must be positive", spec.resolution)));
    }
    if let Criterion::Connectedness { alpha } = spec.criterion {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(AwcError::Config(format!("alpha = {alpha} must lie in (0, 1)")));
        }
    }
    let config = config.clone().with_eff_dim(spec.dim);
    let prepared: Vec<(PointMatrix, PreparedAwc)> = (0..spec.runs)
        .into_par_iter()
        .map(|run| {
            let points = calibration_sample(spec, run);
            let prep = PreparedAwc::from_points(&points, &config)?;
            Ok((points, prep))
        })
        .collect::<Result<_>>()?;

    let mut evaluated: Vec<(f64, f64)> = Vec::new();
    let mut rate_at = |lambda: f64| -> Result<f64> {
        let ok = prepared
            .par_iter()
            .map(|(points, prep)| {
                let result = prep.run(lambda)?;
                Ok(match spec.criterion {
                    Criterion::OneCluster => result.num_clusters == 1,
                    Criterion::Connectedness { alpha } => {
                        connectedness(&result.weights, points, 1.0)?.is_some_and(|c| c >= 1.0 - alpha)
                    }
                })
            })
            .collect::<Result<Vec<bool>>>()?
            .into_iter()
            .filter(|&b| b)
            .count();
        let rate = ok as f64 / spec.runs as f64;
        evaluated.push((lambda, rate));
        Ok(rate)
    };

    const MAX_LAMBDA: f64 = 1e9;
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut hi_rate = rate_at(hi)?;
    while hi_rate < spec.level {
        if hi >= MAX_LAMBDA {
            return Err(AwcError::Calibration(format!(
                "no λ up to {MAX_LAMBDA} reaches success rate {} (last {hi_rate})",
                spec.level
            )));
        }
        lo = hi;
        hi *= 2.0;
        hi_rate = rate_at(hi)?;
    }
    while hi - lo > spec.resolution {
        let mid = 0.5 * (lo + hi);
        let rate = rate_at(mid)?;
        if rate >= spec.level {
            hi = mid;
            hi_rate = rate;
        } else {
            lo = mid;
        }
    }

    evaluated.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotonicity_violations = evaluated
        .windows(2)
        .filter(|w| w[1].1 < w[0].1)
        .map(|w| (w[0].0, w[1].0))
        .collect();
    Ok(Calibration {
        lambda: hi,
        rate: hi_rate,
        evaluated,
        monotonicity_violations,
    })
}

/// The data a λ selector may look at.
pub struct SelectionContext<'a> {
    pub prepared: &'a PreparedAwc,
    pub config: &'a AwcConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaChoice {
    pub lambda: f64,
    pub method: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepCurve>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
}

pub trait LambdaSelector: Send + Sync {
    fn name(&self) -> &'static str;
    fn select(&self, ctx: &SelectionContext<'_>) -> Result<LambdaChoice>;
}

/// Settings shared by the selector factories.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorArgs {
    pub value: Option<f64>,
    pub grid: Vec<f64>,
    pub rel_tol: f64,
    pub min_len: usize,
    pub level: f64,
    pub runs: usize,
    pub seed: u64,
}

impl Default for SelectorArgs {
    fn default() -> Self {
        Self {
            value: None,
            grid: default_grid(),
            rel_tol: DEFAULT_REL_TOL,
            min_len: DEFAULT_MIN_LEN,
            level: 0.9,
            runs: 50,
            seed: 0,
        }
    }
}

#[derive(Debug)]
struct Fixed(f64);

impl LambdaSelector for Fixed {
    fn name(&self) -> &'static str {
        "fixed"
    }

    fn select(&self, _: &SelectionContext<'_>) -> Result<LambdaChoice> {
        Ok(LambdaChoice {
            lambda: self.0,
            method: self.name(),
            sweep: None,
            calibration: None,
        })
    }
}

#[derive(Debug)]
struct SumOfWeights {
    grid: Vec<f64>,
    rel_tol: f64,
    min_len: usize,
}

impl LambdaSelector for SumOfWeights {
    fn name(&self) -> &'static str {
        "auto-sow"
    }

    fn select(&self, ctx: &SelectionContext<'_>) -> Result<LambdaChoice> {
        let mut curve = sweep_lambda(ctx.prepared, &self.grid)?;
        curve.plateaus = detect_plateau(&curve, self.rel_tol, self.min_len)?;
        let lambda = curve.recommended().ok_or_else(|| {
            AwcError::Calibration(format!(
                "S(λ) has no plateau of {} points within relative tolerance {} on the grid",
                self.min_len, self.rel_tol
            ))
        })?;
        Ok(LambdaChoice {
            lambda,
            method: self.name(),
            sweep: Some(curve),
            calibration: None,
        })
    }
}

#[derive(Debug)]
struct Propagation {
    level: f64,
    runs: usize,
    seed: u64,
}

impl LambdaSelector for Propagation {
    fn name(&self) -> &'static str {
        "auto-propagation"
    }

    fn select(&self, ctx: &SelectionContext<'_>) -> Result<LambdaChoice> {
        let spec = CalibrationSpec::new(ctx.prepared.n(), ctx.prepared.eff_dim(), self.level, self.runs, self.seed);
        let calibration = calibrate_propagation(&spec, ctx.config)?;
        Ok(LambdaChoice {
            lambda: calibration.lambda,
            method: self.name(),
            sweep: None,
            calibration: Some(calibration),
        })
    }
}

pub fn lambda_selectors() -> Registry<dyn LambdaSelector, SelectorArgs> {
    let mut reg: Registry<dyn LambdaSelector, SelectorArgs> = Registry::new("lambda selector");
    reg.register("fixed", |args| {
        let value = args
            .value
            .ok_or_else(|| AwcError::Config("fixed λ selector needs a value".into()))?;
        if !(value >= 0.0) {
            return Err(AwcError::Config(format!("lambda = {value} must be nonnegative")));
        }
        Ok(Box::new(Fixed(value)))
    })
    .register("auto-sow", |args| {
        validate_grid(&args.grid)?;
        Ok(Box::new(SumOfWeights {
            grid: args.grid.clone(),
            rel_tol: args.rel_tol,
            min_len: args.min_len,
        }))
    })
    .register("auto-propagation", |args| {
        Ok(Box::new(Propagation {
            level: args.level,
            runs: args.runs,
            seed: args.seed,
        }))
    });
    reg
}

/// Parse a `--lambda` value: a number selects `fixed`, anything else is a
/// selector name.
pub fn lambda_selector(spec: &str, args: &SelectorArgs) -> Result<Box<dyn LambdaSelector>> {
    match spec.trim().parse::<f64>() {
        Ok(value) => lambda_selectors().create("fixed", &SelectorArgs { value: Some(value), ..args.clone() }),
        Err(_) => lambda_selectors().create(spec.trim(), args),
    }
}
