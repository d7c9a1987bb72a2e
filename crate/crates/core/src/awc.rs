//! The adaptive weights iteration.
//!
//! Weights start from the `n0`-nearest-neighbor balls and are then
//! recomputed on a growing sequence of radii: at step `k` every pair within
//! `h_k` whose endpoints both hold `n0` neighbors at `h_{k−1}` is tested for
//! a gap between the two local clusters of step `k − 1`. The final weights
//! define the clustering through their connected components.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AwcError, Result};
use crate::kernel::{QTable, DEFAULT_Q_RESOLUTION};
use crate::mass::{
    gap_statistic, mass_kernel, reference_ratio, Complement, MassKernel, StepView, DEFAULT_MASS_KERNEL,
};
use crate::neighborhood::{
    build_neighbor_index, build_radii_sequence, pairwise_distances, CapEvent, DistanceMatrix, ForcedStep, DEFAULT_PHI,
    NeighborIndex, PointMatrix, RadiiParams, RadiiSequence,
};
use crate::weights::{extract_clusters, WeightMatrix};

/// Tunable parameters besides the threshold λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AwcConfig {
    pub a: f64,
    pub b: f64,
    /// Defaults to `2·eff_dim + 2`.
    pub n0: Option<usize>,
    /// Dimension plugged into the overlap ratio; defaults to the data
    /// dimension when coordinates are available.
    pub eff_dim: Option<usize>,
    pub h_max: Option<f64>,
    pub phi: f64,
    /// Fail instead of forcing a step when no radius respects the growth
    /// bound.
    pub strict_growth: bool,
    /// Length cap `n_K` of the neighbor lists; `None` keeps all `n − 1`.
    pub neighbor_cap: Option<usize>,
    pub q_resolution: usize,
    pub mass_kernel: String,
    pub complement: Complement,
}

impl Default for AwcConfig {
    fn default() -> Self {
        Self {
            a: std::f64::consts::SQRT_2,
            b: 1.95,
            n0: None,
            eff_dim: None,
            h_max: None,
            phi: DEFAULT_PHI,
            strict_growth: false,
            neighbor_cap: None,
            q_resolution: DEFAULT_Q_RESOLUTION,
            mass_kernel: DEFAULT_MASS_KERNEL.to_string(),
            complement: Complement::default(),
        }
    }
}

impl AwcConfig {
    pub fn with_eff_dim(mut self, dim: usize) -> Self {
        self.eff_dim = Some(dim);
        self
    }

    fn resolve_eff_dim(&self, data_dim: Option<usize>) -> Result<usize> {
        match self.eff_dim.or(data_dim) {
            Some(0) => Err(AwcError::Config("effective dimension must be positive".into())),
            Some(d) => Ok(d),
            None => Err(AwcError::Config(
                "an effective dimension is required when only distances are given".into(),
            )),
        }
    }
}

/// Per-step bookkeeping.
#[derive(Debug, Clone, Serialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub radius: f64,
    pub prev_radius: f64,
    /// Pairs `i < j` that were tested.
    pub tested_pairs: usize,
    /// Tested pairs whose statistic exceeded λ.
    pub rejected_pairs: usize,
    /// Positive pairs `i < j` after the step.
    pub positive_pairs: usize,
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunDiagnostics {
    pub n: usize,
    pub lambda: f64,
    pub eff_dim: usize,
    pub n0: usize,
    pub num_steps: usize,
    pub radii: Vec<f64>,
    pub cap_events: Vec<CapEvent>,
    pub forced_steps: Vec<ForcedStep>,
    pub initial_positive_pairs: usize,
    pub steps: Vec<StepDiagnostics>,
    pub sum_of_weights: u64,
    pub elapsed_secs: f64,
}

impl RunDiagnostics {
    /// Share of the step time spent in the last step.
    pub fn last_step_share(&self) -> Option<f64> {
        let total: f64 = self.steps.iter().map(|s| s.elapsed_secs).sum();
        self.steps.last().filter(|_| total > 0.0).map(|s| s.elapsed_secs / total)
    }

    /// Fraction of the pairs tested at the last step that were disconnected.
    pub fn last_step_rejection_rate(&self) -> Option<f64> {
        self.steps
            .last()
            .filter(|s| s.tested_pairs > 0)
            .map(|s| s.rejected_pairs as f64 / s.tested_pairs as f64)
    }
}

#[derive(Debug, Clone)]
pub struct ClusteringResult {
    pub labels: Vec<usize>,
    pub num_clusters: usize,
    pub weights: WeightMatrix,
    pub diagnostics: RunDiagnostics,
}

/// Inputs of a run that do not depend on λ: distances, neighbor lists,
/// radii and the overlap table. Reused across λ values by the tuning code.
pub struct PreparedAwc {
    distances: DistanceMatrix,
    index: NeighborIndex,
    radii: RadiiSequence,
    qtab: QTable,
    kernel: Box<dyn MassKernel>,
    complement: Complement,
    eff_dim: usize,
}

impl std::fmt::Debug for PreparedAwc {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PreparedAwc")
            .field("n", &self.distances.n())
            .field("eff_dim", &self.eff_dim)
            .field("radii", &self.radii.radii())
            .field("kernel", &self.kernel.name())
            .finish()
    }
}

impl PreparedAwc {
    pub fn from_points(points: &PointMatrix, config: &AwcConfig) -> Result<Self> {
        let dm = pairwise_distances(points)?;
        Self::new(dm, Some(points.dim()), config)
    }

    /// `data_dim` is the coordinate dimension when known; it is the fallback
    /// for the effective dimension.
    pub fn new(distances: DistanceMatrix, data_dim: Option<usize>, config: &AwcConfig) -> Result<Self> {
        let eff_dim = config.resolve_eff_dim(data_dim)?;
        let n0 = config.n0.unwrap_or(2 * eff_dim + 2);
        let n = distances.n();
        if n < n0 + 1 {
            return Err(AwcError::Config(format!("n = {n} points but n0 = {n0} requires at least {}", n0 + 1)));
        }
        let index = build_neighbor_index(&distances, config.neighbor_cap)?;
        let radii = build_radii_sequence(
            &index,
            RadiiParams {
                a: config.a,
                b: config.b,
                n0,
                h_max: config.h_max,
                phi: config.phi,
                strict: config.strict_growth,
            },
        )?;
        let qtab = QTable::new(eff_dim, config.q_resolution)?;
        let kernel = mass_kernel(&config.mass_kernel)?;
        Ok(Self {
            distances,
            index,
            radii,
            qtab,
            kernel,
            complement: config.complement,
            eff_dim,
        })
    }

    pub fn n(&self) -> usize {
        self.distances.n()
    }

    pub fn distances(&self) -> &DistanceMatrix {
        &self.distances
    }

    pub fn index(&self) -> &NeighborIndex {
        &self.index
    }

    pub fn radii(&self) -> &RadiiSequence {
        &self.radii
    }

    pub fn qtab(&self) -> &QTable {
        &self.qtab
    }

    pub fn eff_dim(&self) -> usize {
        self.eff_dim
    }

    pub fn init_weights(&self) -> WeightMatrix {
        init_weights(&self.radii, &self.index)
    }

    /// One update of the weights; see [`step_update`].
    pub fn step(&self, w_prev: &WeightMatrix, k: usize, lambda: f64) -> (WeightMatrix, StepCounts) {
        step_update(
            w_prev,
            &self.distances,
            &self.index,
            &self.radii,
            k,
            lambda,
            &self.qtab,
            self.kernel.as_ref(),
            self.complement,
        )
    }

    /// Run all steps for threshold `lambda`.
    ///
    /// Pair tests of a step run on the current rayon pool; results are
    /// identical for any pool size.
    pub fn run(&self, lambda: f64) -> Result<ClusteringResult> {
        if !(lambda >= 0.0) {
            return Err(AwcError::Config(format!("lambda = {lambda} must be nonnegative")));
        }
        let started = Instant::now();
        let mut w = self.init_weights();
        let initial_positive_pairs = w.positive_pairs();
        let radii = self.radii.radii();
        let mut steps = Vec::with_capacity(self.radii.num_steps());
        for k in 1..=self.radii.num_steps() {
            let t0 = Instant::now();
            let (next, counts) = self.step(&w, k, lambda);
            w = next;
            steps.push(StepDiagnostics {
                step: k,
                radius: radii[k],
                prev_radius: radii[k - 1],
                tested_pairs: counts.tested,
                rejected_pairs: counts.rejected,
                positive_pairs: w.positive_pairs(),
                elapsed_secs: t0.elapsed().as_secs_f64(),
            });
        }
        let clustering = extract_clusters(&w);
        let diagnostics = RunDiagnostics {
            n: self.n(),
            lambda,
            eff_dim: self.eff_dim,
            n0: self.radii.params().n0,
            num_steps: self.radii.num_steps(),
            radii: radii.to_vec(),
            cap_events: self.radii.cap_events().to_vec(),
            forced_steps: self.radii.forced_steps().to_vec(),
            initial_positive_pairs,
            steps,
            sum_of_weights: w.total(),
            elapsed_secs: started.elapsed().as_secs_f64(),
        };
        Ok(ClusteringResult {
            labels: clustering.labels,
            num_clusters: clustering.num_clusters,
            weights: w,
            diagnostics,
        })
    }
}

/// Initial weights: `w_ij = 1` iff `d(i, j) ≤ max(h₀(X_i), h₀(X_j))`.
pub fn init_weights(radii: &RadiiSequence, index: &NeighborIndex) -> WeightMatrix {
    let n = index.n();
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); n];
    for i in 0..n {
        if let Some(h0) = radii.start_radius(i) {
            for nb in index.within(i, h0) {
                rows[i].push(nb.id);
                rows[nb.id as usize].push(i as u32);
            }
        }
    }
    for row in &mut rows {
        row.sort_unstable();
        row.dedup();
    }
    WeightMatrix::from_sorted_rows(rows, 0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepCounts {
    pub tested: usize,
    pub rejected: usize,
}

/// Weights of step `k` from the snapshot `w_prev` of step `k − 1`.
///
/// Pairs with `d(i, j) ≤ h_k` whose endpoints are both eligible
/// (`h_{k−1} ≥ h₀`) get `w_ij = 1(T_ij ≤ λ)`. Every other pair keeps its
/// previous weight; such a pair can only be positive through the
/// initialization of a point that is not yet eligible.
#[allow(clippy::too_many_arguments)]
pub fn step_update(
    w_prev: &WeightMatrix,
    dm: &DistanceMatrix,
    index: &NeighborIndex,
    radii: &RadiiSequence,
    k: usize,
    lambda: f64,
    qtab: &QTable,
    kernel: &dyn MassKernel,
    complement: Complement,
) -> (WeightMatrix, StepCounts) {
    assert!(k >= 1 && k <= radii.num_steps(), "step {k} outside 1..={}", radii.num_steps());
    let h = radii.radii()[k];
    let h_prev = radii.radii()[k - 1];
    let n = dm.n();
    let evaluator = kernel.prepare(StepView {
        weights: w_prev,
        distances: dm,
        index,
        h_prev,
        complement,
    });

    // each task owns the pairs (i, j) with j > i; collect keeps row order
    let upper: Vec<(Vec<u32>, StepCounts)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut kept = Vec::new();
            let mut counts = StepCounts::default();
            let elig_i = radii.eligible(i, k);
            for nb in index.within(i, h) {
                let j = nb.id as usize;
                if j <= i {
                    continue;
                }
                if elig_i && radii.eligible(j, k) {
                    counts.tested += 1;
                    let q = reference_ratio(nb.dist, h_prev, qtab);
                    let test = gap_statistic(evaluator.masses(i, j), q);
                    if test.t_stat <= lambda {
                        kept.push(j as u32);
                    } else {
                        counts.rejected += 1;
                    }
                } else if w_prev.get(i, j) {
                    kept.push(j as u32);
                }
            }
            // positive weights beyond h_k (from initialization) are retained
            for &j in w_prev.row(i) {
                if j as usize > i && dm.get(i, j as usize) > h {
                    kept.push(j);
                }
            }
            kept.sort_unstable();
            (kept, counts)
        })
        .collect();

    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut totals = StepCounts::default();
    for (i, (kept, counts)) in upper.into_iter().enumerate() {
        totals.tested += counts.tested;
        totals.rejected += counts.rejected;
        for &j in &kept {
            rows[j as usize].push(i as u32);
        }
        // rows[i] already holds its entries below i in ascending order
        rows[i].extend_from_slice(&kept);
    }
    (WeightMatrix::from_sorted_rows(rows, k), totals)
}

/// Prepare and run in one call.
pub fn run_awc(points: &PointMatrix, lambda: f64, config: &AwcConfig) -> Result<ClusteringResult> {
    PreparedAwc::from_points(points, config)?.run(lambda)
}

/// [`run_awc`] on a precomputed distance matrix.
pub fn run_awc_distances(dm: DistanceMatrix, lambda: f64, config: &AwcConfig) -> Result<ClusteringResult> {
    PreparedAwc::new(dm, None, config)?.run(lambda)
}
