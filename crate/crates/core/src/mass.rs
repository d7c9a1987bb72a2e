//! Local-cluster masses and the one-sided test of "no gap".
//!
//! Two interchangeable kernels compute the masses of a pair: `merge` walks
//! the two sorted positive-weight sets, `bitset` packs weights and balls
//! into bit rows and counts with popcounts. Both return identical integers.
//!
//! The complement mass comes in two flavours, see [`Complement`].

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kernel::{kl_bernoulli_unchecked, QTable};
use crate::neighborhood::{DistanceMatrix, NeighborIndex};
use crate::registry::Registry;
use crate::weights::WeightMatrix;

/// Keeps the reference ratio strictly inside `(0, 1)`; coincident points
/// would otherwise give `q = 1`.
pub const Q_CLAMP: f64 = 1e-12;

/// Which members of the two local clusters count towards the complement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Complement {
    /// Members of either local cluster that are not in the other one; the
    /// union mass is then the size of the union of the local clusters.
    #[default]
    Cluster,
    /// Members of either local cluster lying outside the other point's
    /// ball of radius `h_prev`. Members inside the other ball but outside
    /// its cluster are not counted at all, so two separated clusters whose
    /// balls cover each other produce an empty union and no evidence.
    Ball,
}

impl Complement {
    pub const NAMES: [&'static str; 2] = ["cluster", "ball"];

    pub fn name(self) -> &'static str {
        match self {
            Complement::Cluster => "cluster",
            Complement::Ball => "ball",
        }
    }
}

impl std::str::FromStr for Complement {
    type Err = crate::error::AwcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cluster" => Ok(Complement::Cluster),
            "ball" => Ok(Complement::Ball),
            other => Err(crate::error::AwcError::UnknownStrategy {
                kind: "complement rule",
                name: other.to_string(),
                available: Complement::NAMES.join(", "),
            }),
        }
    }
}

/// Overlap and complement masses of a pair of local clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Masses {
    pub overlap: u32,
    pub complement: u32,
}

impl Masses {
    pub fn union(&self) -> u32 {
        self.overlap + self.complement
    }
}

/// Outcome of the gap test for one pair at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapTestResult {
    pub n_overlap: f64,
    pub n_complement: f64,
    pub n_union: f64,
    /// `N∧ / N∨`, `None` when the union is empty.
    pub theta_hat: Option<f64>,
    pub q: f64,
    pub t_stat: f64,
}

/// Reference ratio `q(d / h_prev)` clamped into `(0, 1)`.
pub fn reference_ratio(d: f64, h_prev: f64, qtab: &QTable) -> f64 {
    let t = if h_prev > 0.0 {
        d / h_prev
    } else if d == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    qtab.lookup(t).clamp(Q_CLAMP, 1.0 - Q_CLAMP)
}

/// Test statistic `T = N∨ · KL(θ̃, q) · (1(θ̃ ≤ q) − 1(θ̃ > q))`; zero when
/// the union is empty.
pub fn gap_statistic(masses: Masses, q: f64) -> GapTestResult {
    let union = masses.union();
    let (theta_hat, t_stat) = if union == 0 {
        (None, 0.0)
    } else {
        let theta = masses.overlap as f64 / union as f64;
        let kl = union as f64 * kl_bernoulli_unchecked(theta, q);
        (Some(theta), if theta <= q { kl } else { -kl })
    };
    GapTestResult {
        n_overlap: masses.overlap as f64,
        n_complement: masses.complement as f64,
        n_union: union as f64,
        theta_hat,
        q,
        t_stat,
    }
}

/// Masses of the pair `(i, j)` under `w_prev` with balls of radius `h_prev`,
/// by merging the two sorted positive-weight sets.
pub fn masses(
    w_prev: &WeightMatrix,
    dm: &DistanceMatrix,
    i: usize,
    j: usize,
    h_prev: f64,
    rule: Complement,
) -> Masses {
    merge_masses(w_prev.row(i), w_prev.row(j), dm, i, j, h_prev, rule)
}

fn merge_masses(
    ri: &[u32],
    rj: &[u32],
    dm: &DistanceMatrix,
    i: usize,
    j: usize,
    h_prev: f64,
    rule: Complement,
) -> Masses {
    let (iu, ju) = (i as u32, j as u32);
    let di = dm.row(i);
    let dj = dm.row(j);
    let mut overlap = 0u32;
    let mut complement = 0u32;
    let (mut a, mut b) = (0, 0);
    while a < ri.len() || b < rj.len() {
        let x = ri.get(a).copied().unwrap_or(u32::MAX);
        let y = rj.get(b).copied().unwrap_or(u32::MAX);
        let l = x.min(y);
        let in_i = x == l;
        let in_j = y == l;
        if in_i {
            a += 1;
        }
        if in_j {
            b += 1;
        }
        if l == iu || l == ju {
            continue;
        }
        if in_i && in_j {
            overlap += 1;
        }
        match rule {
            Complement::Cluster => complement += (in_i != in_j) as u32,
            Complement::Ball => {
                if in_i && dj[l as usize] > h_prev {
                    complement += 1;
                }
                if in_j && di[l as usize] > h_prev {
                    complement += 1;
                }
            }
        }
    }
    Masses { overlap, complement }
}

/// Full gap test of the pair `(i, j)` at a step with previous radius `h_prev`.
pub fn gap_test(
    w_prev: &WeightMatrix,
    dm: &DistanceMatrix,
    i: usize,
    j: usize,
    h_prev: f64,
    qtab: &QTable,
    rule: Complement,
) -> GapTestResult {
    let m = masses(w_prev, dm, i, j, h_prev, rule);
    gap_statistic(m, reference_ratio(dm.get(i, j), h_prev, qtab))
}

/// Everything a kernel may read while evaluating the pairs of one step.
#[derive(Clone, Copy)]
pub struct StepView<'a> {
    pub weights: &'a WeightMatrix,
    pub distances: &'a DistanceMatrix,
    pub index: &'a NeighborIndex,
    pub h_prev: f64,
    pub complement: Complement,
}

/// Per-step evaluator returned by a [`MassKernel`].
pub trait PairMasses: Sync {
    fn masses(&self, i: usize, j: usize) -> Masses;
}

/// Strategy for computing pair masses within a step.
pub trait MassKernel: Send + Sync {
    fn name(&self) -> &'static str;

    fn prepare<'a>(&self, view: StepView<'a>) -> Box<dyn PairMasses + 'a>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct MergeKernel;

struct MergeStep<'a>(StepView<'a>);

impl PairMasses for MergeStep<'_> {
    fn masses(&self, i: usize, j: usize) -> Masses {
        let v = &self.0;
        merge_masses(v.weights.row(i), v.weights.row(j), v.distances, i, j, v.h_prev, v.complement)
    }
}

impl MassKernel for MergeKernel {
    fn name(&self) -> &'static str {
        "merge"
    }

    fn prepare<'a>(&self, view: StepView<'a>) -> Box<dyn PairMasses + 'a> {
        Box::new(MergeStep(view))
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct BitsetKernel;

struct BitRows {
    words: usize,
    bits: Vec<u64>,
}

impl BitRows {
    fn new(n: usize) -> Self {
        let words = n.div_ceil(64);
        Self {
            words,
            bits: vec![0; words * n],
        }
    }

    #[inline]
    fn set(&mut self, row: usize, col: usize) {
        self.bits[row * self.words + col / 64] |= 1u64 << (col % 64);
    }

    #[inline]
    fn row(&self, row: usize) -> &[u64] {
        &self.bits[row * self.words..(row + 1) * self.words]
    }
}

struct BitsetStep {
    weights: BitRows,
    /// Only built for the ball rule.
    balls: Option<BitRows>,
}

impl PairMasses for BitsetStep {
    fn masses(&self, i: usize, j: usize) -> Masses {
        let (wi, wj) = (self.weights.row(i), self.weights.row(j));
        let mut overlap = 0;
        let mut complement = 0;
        match &self.balls {
            Some(balls) => {
                // rows exclude their own point and balls contain their
                // center, so l = i and l = j drop out of every count
                let (bi, bj) = (balls.row(i), balls.row(j));
                for k in 0..wi.len() {
                    overlap += (wi[k] & wj[k]).count_ones();
                    complement += (wi[k] & !bj[k]).count_ones() + (wj[k] & !bi[k]).count_ones();
                }
            }
            None => {
                for k in 0..wi.len() {
                    overlap += (wi[k] & wj[k]).count_ones();
                    complement += (wi[k] ^ wj[k]).count_ones();
                }
                // bit j of row i and bit i of row j both equal w_ij
                let wij = (wi[j / 64] >> (j % 64)) & 1;
                complement -= 2 * wij as u32;
            }
        }
        Masses { overlap, complement }
    }
}

impl MassKernel for BitsetKernel {
    fn name(&self) -> &'static str {
        "bitset"
    }

    fn prepare<'a>(&self, view: StepView<'a>) -> Box<dyn PairMasses + 'a> {
        let n = view.weights.n();
        let mut weights = BitRows::new(n);
        for i in 0..n {
            for &j in view.weights.row(i) {
                weights.set(i, j as usize);
            }
        }
        let balls = (view.complement == Complement::Ball).then(|| {
            let mut balls = BitRows::new(n);
            for i in 0..n {
                balls.set(i, i);
                for nb in view.index.within(i, view.h_prev) {
                    balls.set(i, nb.id as usize);
                }
            }
            balls
        });
        Box::new(BitsetStep { weights, balls })
    }
}

pub const DEFAULT_MASS_KERNEL: &str = "bitset";

pub fn mass_kernels() -> Registry<dyn MassKernel> {
    let mut reg = Registry::new("mass kernel");
    reg.register("merge", |_| Ok(Box::new(MergeKernel) as Box<dyn MassKernel>));
    reg.register("bitset", |_| Ok(Box::new(BitsetKernel) as Box<dyn MassKernel>));
    reg
}

pub fn mass_kernel(name: &str) -> Result<Box<dyn MassKernel>> {
    mass_kernels().create(name, &())
}
