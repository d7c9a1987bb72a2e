//! Distances, distance-sorted neighbor lists and the radii sequence.

use serde::Serialize;

use crate::error::{AwcError, Result};

/// Largest point count for which a dense distance matrix is materialized.
pub const MAX_DENSE_POINTS: usize = 20_000;

/// Row-major `n × dim` coordinate matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMatrix {
    n: usize,
    dim: usize,
    data: Vec<f64>,
}

impl PointMatrix {
    pub fn new(n: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * dim {
            return Err(AwcError::InvalidInput(format!(
                "point buffer holds {} values, expected {n} x {dim}",
                data.len()
            )));
        }
        Ok(Self { n, dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(AwcError::InvalidInput("rows have different lengths".into()));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1)).take(self.n)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn norm(&self, i: usize) -> f64 {
        self.row(i).iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Symmetric matrix of pairwise distances with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Validate a precomputed square matrix (row-major). The matrix must be
    /// exactly symmetric, nonnegative and have a zero diagonal; tolerant
    /// symmetrization is the job of the CSV loader.
    pub fn from_precomputed(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(AwcError::InvalidInput(format!(
                "distance buffer holds {} values, expected {n} x {n}",
                data.len()
            )));
        }
        if n < 2 {
            return Err(AwcError::InvalidInput("at least two points are required".into()));
        }
        if n > MAX_DENSE_POINTS {
            return Err(AwcError::InvalidInput(format!(
                "{n} points exceed the dense limit of {MAX_DENSE_POINTS}"
            )));
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return Err(AwcError::InvalidInput(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let d = data[i * n + j];
                if !d.is_finite() || d < 0.0 {
                    return Err(AwcError::InvalidInput(format!(
                        "distance ({i}, {j}) = {d} is not a finite nonnegative number"
                    )));
                }
                if d != data[j * n + i] {
                    return Err(AwcError::InvalidInput(format!("asymmetric entry ({i}, {j})")));
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn max_distance(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

/// Exact Euclidean distance matrix of a point set.
pub fn pairwise_distances(points: &PointMatrix) -> Result<DistanceMatrix> {
    let n = points.n();
    if n < 2 {
        return Err(AwcError::InvalidInput("at least two points are required".into()));
    }
    if n > MAX_DENSE_POINTS {
        return Err(AwcError::InvalidInput(format!(
            "{n} points exceed the dense limit of {MAX_DENSE_POINTS}"
        )));
    }
    if let Some(pos) = points.as_slice().iter().position(|v| !v.is_finite()) {
        let dim = points.dim().max(1);
        return Err(AwcError::InvalidInput(format!(
            "non-finite coordinate at point {}, column {}",
            pos / dim,
            pos % dim
        )));
    }
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        let xi = points.row(i);
        for j in (i + 1)..n {
            let d = euclidean(xi, points.row(j));
            data[i * n + j] = d;
            data[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix { n, data })
}

#[inline]
pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: u32,
    pub dist: f64,
}

/// Per-point neighbor lists sorted by ascending distance, ties broken by the
/// smaller point id. Self entries are excluded.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    lists: Vec<Vec<Neighbor>>,
    cap: Option<usize>,
}

impl NeighborIndex {
    pub fn n(&self) -> usize {
        self.lists.len()
    }

    pub fn cap(&self) -> Option<usize> {
        self.cap
    }

    pub fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.lists[i]
    }

    /// Neighbors of `i` within distance `h` (inclusive).
    pub fn within(&self, i: usize, h: f64) -> &[Neighbor] {
        let list = &self.lists[i];
        &list[..list.partition_point(|nb| nb.dist <= h)]
    }

    /// Number of `j ≠ i` with `d(i, j) ≤ h`, as far as the (possibly capped)
    /// list reaches.
    pub fn count_within(&self, i: usize, h: f64) -> usize {
        self.lists[i].partition_point(|nb| nb.dist <= h)
    }

    /// Distance from `i` to its `k`-th nearest neighbor (1-based).
    pub fn kth_distance(&self, i: usize, k: usize) -> Option<f64> {
        k.checked_sub(1).and_then(|k| self.lists[i].get(k)).map(|nb| nb.dist)
    }
}

pub fn build_neighbor_index(dm: &DistanceMatrix, cap: Option<usize>) -> Result<NeighborIndex> {
    if cap == Some(0) {
        return Err(AwcError::Config("neighbor cap must be positive".into()));
    }
    let n = dm.n();
    let lists = (0..n)
        .map(|i| {
            let mut list: Vec<Neighbor> = dm
                .row(i)
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, &dist)| Neighbor { id: j as u32, dist })
                .collect();
            list.sort_by(|x, y| x.dist.total_cmp(&y.dist).then(x.id.cmp(&y.id)));
            if let Some(cap) = cap {
                list.truncate(cap);
            }
            list
        })
        .collect();
    Ok(NeighborIndex { lists, cap })
}

/// Default fraction of the active points that must respect the growth bound
/// `a`. Requiring all points lets the worst of `n` local counts dictate every
/// step and makes the number of steps grow faster than `log n`.
pub const DEFAULT_PHI: f64 = 0.95;

/// Growth parameters of the radii sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadiiParams {
    /// Bound on the neighbor-count growth between consecutive radii.
    pub a: f64,
    /// Bound on the radius growth between consecutive radii.
    pub b: f64,
    /// Minimal number of neighbors for a point to take part in the tests.
    pub n0: usize,
    /// Largest radius; `None` uses the largest pooled neighbor distance.
    pub h_max: Option<f64>,
    /// Fraction of points that must respect the growth bound `a`.
    pub phi: f64,
    /// Fail with [`AwcError::NoValidStep`] when no pooled radius respects
    /// the growth bound; otherwise take the next pooled radius anyway and
    /// record a [`ForcedStep`].
    pub strict: bool,
}

impl Default for RadiiParams {
    fn default() -> Self {
        Self {
            a: std::f64::consts::SQRT_2,
            b: 1.95,
            n0: 6,
            h_max: None,
            phi: DEFAULT_PHI,
            strict: false,
        }
    }
}

/// Where the radius-growth cap changed the choice of the next radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapEvent {
    /// Index of the capped radius in the sequence.
    pub step: usize,
    /// Radius the growth condition alone would have chosen.
    pub wanted: f64,
    /// Radius actually used.
    pub used: f64,
    /// The used radius is `b · h_prev` itself, not a neighbor distance.
    pub synthetic: bool,
}

/// A radius taken although it breaks the growth bound, because no pooled
/// radius respects it (ties of many neighbors at one distance).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForcedStep {
    pub step: usize,
    pub point: usize,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RadiiSequence {
    radii: Vec<f64>,
    params: RadiiParams,
    /// Per point: index of the first radius whose ball holds `n0` neighbors.
    start: Vec<Option<usize>>,
    cap_events: Vec<CapEvent>,
    forced_steps: Vec<ForcedStep>,
}

impl RadiiSequence {
    /// All radii `h_0 < h_1 < … < h_K`.
    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// Number of update steps `K`.
    pub fn num_steps(&self) -> usize {
        self.radii.len() - 1
    }

    pub fn params(&self) -> &RadiiParams {
        &self.params
    }

    pub fn start_index(&self, i: usize) -> Option<usize> {
        self.start[i]
    }

    /// `h₀(X_i)`, or `None` when the ball never holds `n0` neighbors.
    pub fn start_radius(&self, i: usize) -> Option<f64> {
        self.start[i].map(|k| self.radii[k])
    }

    pub fn cap_events(&self) -> &[CapEvent] {
        &self.cap_events
    }

    pub fn forced_steps(&self) -> &[ForcedStep] {
        &self.forced_steps
    }

    /// Point `i` takes part in the tests of step `k ≥ 1`, i.e. `h_{k−1} ≥ h₀(X_i)`.
    #[inline]
    pub fn eligible(&self, i: usize, k: usize) -> bool {
        matches!(self.start[i], Some(s) if s + 1 <= k)
    }
}

/// Number of points in the closed ball around `i`, the center included.
#[inline]
fn ball_mass(index: &NeighborIndex, i: usize, h: f64) -> usize {
    index.count_within(i, h) + 1
}

struct GrowthCheck<'a> {
    index: &'a NeighborIndex,
    params: &'a RadiiParams,
    /// Points holding at least `n0` neighbors at the previous radius, with
    /// their ball mass there.
    active: Vec<(usize, usize)>,
    allowed_violations: usize,
}

impl<'a> GrowthCheck<'a> {
    fn new(index: &'a NeighborIndex, params: &'a RadiiParams, h_prev: f64) -> Self {
        let active: Vec<(usize, usize)> = (0..index.n())
            .filter_map(|i| {
                let c = index.count_within(i, h_prev);
                (c >= params.n0).then_some((i, c + 1))
            })
            .collect();
        let allowed_violations = ((1.0 - params.phi) * active.len() as f64).floor() as usize;
        Self {
            index,
            params,
            active,
            allowed_violations,
        }
    }

    fn first_violation(&self, h: f64) -> Option<(usize, usize, usize)> {
        let mut violations = 0;
        let mut first = None;
        for &(i, mass) in &self.active {
            let next = ball_mass(self.index, i, h);
            if next as f64 > self.params.a * mass as f64 {
                violations += 1;
                first.get_or_insert((i, mass - 1, next - 1));
                if violations > self.allowed_violations {
                    return first;
                }
            }
        }
        None
    }

    fn admits(&self, h: f64) -> bool {
        self.first_violation(h).is_none()
    }
}

/// Select the radii from the pooled neighbor distances.
///
/// Starting from the smallest `n0`-th neighbor distance, each next radius
/// is the largest pooled distance for which every point already holding
/// `n0` neighbors grows its ball mass by at most a factor `a` (ball mass
/// counts the center). The choice is then capped at `b · h_prev`; when no
/// pooled distance lies in `(h_prev, b · h_prev]`, synthetic radii with
/// ratio at most `b` bridge the gap and end just below the next pooled
/// distance. When even the next pooled distance breaks the growth
/// bound, strict mode fails and the default mode takes that distance.
pub fn build_radii_sequence(index: &NeighborIndex, params: RadiiParams) -> Result<RadiiSequence> {
    let n = index.n();
    if !(params.a > 1.0 && params.a <= 2.0) {
        return Err(AwcError::Config(format!("a = {} outside (1, 2]", params.a)));
    }
    if !(params.b > 1.0 && params.b < 2.0) {
        return Err(AwcError::Config(format!("b = {} outside (1, 2)", params.b)));
    }
    if params.n0 == 0 || params.n0 >= n {
        return Err(AwcError::Config(format!(
            "n0 = {} must lie in [1, n) with n = {n}",
            params.n0
        )));
    }
    if !(params.phi > 0.0 && params.phi <= 1.0) {
        return Err(AwcError::Config(format!("phi = {} outside (0, 1]", params.phi)));
    }
    if let Some(h) = params.h_max {
        if !(h > 0.0) {
            return Err(AwcError::Config(format!("h_max = {h} must be positive")));
        }
    }

    let mut pooled: Vec<f64> = (0..n)
        .flat_map(|i| index.neighbors(i).iter().map(|nb| nb.dist))
        .collect();
    pooled.sort_by(f64::total_cmp);
    pooled.dedup();
    let h_top = pooled.last().copied().unwrap_or(0.0);
    let h_max = params.h_max.map_or(h_top, |h| h.min(h_top));

    let h_first = (0..n)
        .filter_map(|i| index.kth_distance(i, params.n0))
        .fold(f64::INFINITY, f64::min);
    if !h_first.is_finite() {
        return Err(AwcError::Config(format!(
            "no point has {} neighbors in its neighbor list",
            params.n0
        )));
    }
    let h_max = h_max.max(h_first);
    // keep the pooled candidates in [h_first, h_max]
    let pooled: Vec<f64> = pooled
        .into_iter()
        .filter(|&h| h > h_first && h <= h_max)
        .collect();

    let mut radii = vec![h_first];
    let mut cap_events = Vec::new();
    let mut forced_steps = Vec::new();
    let mut cursor = 0usize; // first pooled candidate above the current radius
    let mut h_prev = h_first;
    while h_prev < h_max {
        while cursor < pooled.len() && pooled[cursor] <= h_prev {
            cursor += 1;
        }
        let check = GrowthCheck::new(index, &params, h_prev);
        let candidates = &pooled[cursor..];
        // admissibility is monotone: larger radii only add neighbors
        let mut admitted = candidates.partition_point(|&h| check.admits(h));
        if admitted == 0 {
            let (point, from, to) = check
                .first_violation(candidates[0])
                .expect("candidate rejected without a violation");
            if params.strict {
                return Err(AwcError::NoValidStep {
                    point,
                    radius: h_prev,
                    from,
                    to,
                });
            }
            forced_steps.push(ForcedStep {
                step: radii.len(),
                point,
                from,
                to,
            });
            admitted = 1;
        }
        let wanted = candidates[admitted - 1];
        if h_prev > 0.0 && wanted > params.b * h_prev {
            let limit = params.b * h_prev;
            let within = candidates.partition_point(|&h| h <= limit);
            if within > 0 {
                let used = candidates[within - 1];
                cap_events.push(CapEvent {
                    step: radii.len(),
                    wanted,
                    used,
                    synthetic: false,
                });
                radii.push(used);
                h_prev = used;
            } else {
                // Empty stretch of pooled distances: bridge it geometrically
                // up to just below the next pooled distance, so that the
                // step that reaches it compares balls at distance ratio ~1.
                let target = candidates[0].next_down();
                let ratio = target / h_prev;
                let parts = (ratio.ln() / params.b.ln()).ceil().max(1.0);
                let factor = ratio.powf(1.0 / parts).min(params.b);
                for m in 1..=parts as usize {
                    let used = if m == parts as usize { target } else { h_prev * factor };
                    cap_events.push(CapEvent {
                        step: radii.len(),
                        wanted,
                        used,
                        synthetic: true,
                    });
                    radii.push(used);
                    h_prev = used;
                }
            }
            continue;
        }
        radii.push(wanted);
        h_prev = wanted;
    }

    let start = (0..n)
        .map(|i| {
            index
                .kth_distance(i, params.n0)
                .map(|h0| radii.partition_point(|&h| h < h0))
                .filter(|&k| k < radii.len())
        })
        .collect();

    Ok(RadiiSequence {
        radii,
        params: RadiiParams { h_max: Some(h_max), ..params },
        start,
        cap_events,
        forced_steps,
    })
}
