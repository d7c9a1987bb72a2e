//! Clustering quality measures.
//!
//! Pair-based errors count ordered pairs `i ≠ j`. Predictions and truths are
//! [`WeightMatrix`] values; a labeling enters through its component closure
//! ([`WeightMatrix::from_labels`]), while a raw AWC weight matrix can be
//! passed as is.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::awc::{AwcConfig, PreparedAwc};
use crate::data::generators::{Gauss, Generator};
use crate::error::{AwcError, Result};
use crate::neighborhood::PointMatrix;
use crate::weights::WeightMatrix;

fn same_n(pred: &WeightMatrix, truth: &WeightMatrix) -> Result<()> {
    if pred.n() == truth.n() {
        Ok(())
    } else {
        Err(AwcError::InvalidInput(format!(
            "prediction has {} points but truth has {}",
            pred.n(),
            truth.n()
        )))
    }
}

/// Number of entries common to two ascending slices.
fn intersection(a: &[u32], b: &[u32]) -> u64 {
    let (mut x, mut y, mut c) = (0, 0, 0);
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                c += 1;
                x += 1;
                y += 1;
            }
        }
    }
    c
}

/// Ordered-pair confusion counts of a prediction against a truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PairCounts {
    pub true_connected: u64,
    pub true_disconnected: u64,
    /// Truly connected pairs with `ŵ = 0`.
    pub false_disconnected: u64,
    /// Truly disconnected pairs with `ŵ = 1`.
    pub false_connected: u64,
}

impl PairCounts {
    pub fn new(pred: &WeightMatrix, truth: &WeightMatrix) -> Result<Self> {
        same_n(pred, truth)?;
        let n = pred.n() as u64;
        let (mut connected, mut pred_pos, mut agree) = (0, 0, 0);
        for i in 0..pred.n() {
            connected += truth.row(i).len() as u64;
            pred_pos += pred.row(i).len() as u64;
            agree += intersection(pred.row(i), truth.row(i));
        }
        Ok(Self {
            true_connected: connected,
            true_disconnected: n * n.saturating_sub(1) - connected,
            false_disconnected: connected - agree,
            false_connected: pred_pos - agree,
        })
    }

    /// `None` when no pair is truly connected.
    pub fn propagation_error(&self) -> Option<f64> {
        (self.true_connected > 0).then(|| self.false_disconnected as f64 / self.true_connected as f64)
    }

    /// `None` when no pair is truly disconnected.
    pub fn separation_error(&self) -> Option<f64> {
        (self.true_disconnected > 0).then(|| self.false_connected as f64 / self.true_disconnected as f64)
    }

    pub fn general_error(&self) -> Option<f64> {
        let total = self.true_connected + self.true_disconnected;
        (total > 0).then(|| (self.false_connected + self.false_disconnected) as f64 / total as f64)
    }
}

pub fn propagation_error(pred: &WeightMatrix, truth: &WeightMatrix) -> Result<Option<f64>> {
    Ok(PairCounts::new(pred, truth)?.propagation_error())
}

/// Separation error, optionally restricted to pairs with both ends in
/// `restrict`.
pub fn separation_error(pred: &WeightMatrix, truth: &WeightMatrix, restrict: Option<&[usize]>) -> Result<Option<f64>> {
    same_n(pred, truth)?;
    let Some(subset) = restrict else {
        return Ok(PairCounts::new(pred, truth)?.separation_error());
    };
    let mut inside = vec![false; pred.n()];
    for &i in subset {
        *inside.get_mut(i).ok_or_else(|| {
            AwcError::InvalidInput(format!("restriction index {i} out of range for n = {}", pred.n()))
        })? = true;
    }
    let m = inside.iter().filter(|&&b| b).count() as u64;
    let (mut connected, mut wrong) = (0u64, 0u64);
    for i in (0..pred.n()).filter(|&i| inside[i]) {
        let truth_row = truth.row(i);
        connected += truth_row.iter().filter(|&&j| inside[j as usize]).count() as u64;
        wrong += pred
            .row(i)
            .iter()
            .filter(|&&j| inside[j as usize] && truth_row.binary_search(&j).is_err())
            .count() as u64;
    }
    let disconnected = m * m.saturating_sub(1) - connected;
    Ok((disconnected > 0).then(|| wrong as f64 / disconnected as f64))
}

/// Fraction of ordered pairs on which prediction and truth disagree, i.e.
/// one minus the Rand index. Zero for a single point.
pub fn general_error(pred: &WeightMatrix, truth: &WeightMatrix) -> Result<f64> {
    Ok(PairCounts::new(pred, truth)?.general_error().unwrap_or(0.0))
}

/// Normalized mutual information of two labelings (natural logarithm).
/// Zero when either labeling has a single cluster.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(AwcError::InvalidInput(format!(
            "labelings cover {} and {} points",
            pred.len(),
            truth.len()
        )));
    }
    let n = pred.len() as f64;
    let mut joint: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *joint.entry((t, p)).or_default() += 1;
        *rows.entry(t).or_default() += 1;
        *cols.entry(p).or_default() += 1;
    }
    if rows.len() < 2 || cols.len() < 2 {
        return Ok(0.0);
    }
    let mutual: f64 = joint
        .iter()
        .map(|(&(t, p), &c)| {
            let c = c as f64;
            c * (n * c / (rows[&t] as f64 * cols[&p] as f64)).ln()
        })
        .sum();
    let entropy = |m: &BTreeMap<usize, u64>| -> f64 { m.values().map(|&c| c as f64 * (c as f64 / n).ln()).sum() };
    let value = mutual / (entropy(&rows) * entropy(&cols)).sqrt();
    Ok(value.clamp(0.0, 1.0))
}

/// Share of positive weights among all pairs (diagonal included) whose two
/// points lie within norm `r`; `None` when no point does.
pub fn connectedness(w: &WeightMatrix, points: &PointMatrix, r: f64) -> Result<Option<f64>> {
    if w.n() != points.n() {
        return Err(AwcError::InvalidInput(format!(
            "weights cover {} points but the sample has {}",
            w.n(),
            points.n()
        )));
    }
    if !(r > 0.0) {
        return Err(AwcError::Config(format!("radius r = {r} must be positive")));
    }
    let inside: Vec<bool> = (0..points.n()).map(|i| points.norm(i) <= r).collect();
    Ok(connectedness_within(w, &inside))
}

fn connectedness_within(w: &WeightMatrix, inside: &[bool]) -> Option<f64> {
    let m = inside.iter().filter(|&&b| b).count() as u64;
    if m == 0 {
        return None;
    }
    let positive: u64 = (0..w.n())
        .filter(|&i| inside[i])
        .map(|i| w.row(i).iter().filter(|&&j| inside[j as usize]).count() as u64)
        .sum();
    Some((m + positive) as f64 / (m * m) as f64)
}

/// Monte-Carlo experiment on standard Gaussian samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadiusExperiment {
    pub n: usize,
    pub dim: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub runs: usize,
    pub seed: u64,
    /// Spacing of the radius grid.
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadiusEstimate {
    pub radius: f64,
    /// Largest norm seen in any run; the grid ends there.
    pub max_norm: f64,
    pub grid: Vec<f64>,
    /// Fraction of runs with `W_Σ(r) ≥ 1 − α`, per grid point.
    pub pass_rate: Vec<f64>,
}

/// Largest grid radius `r` at which the connectedness coefficient is at
/// least `1 − α` in at least a `1 − α` fraction of the runs. Run `k` draws
/// its sample from ChaCha8 seeded with `seed` on stream `k`. Returns 0 when
/// no grid radius qualifies.
pub fn calibrated_radius(exp: &RadiusExperiment, config: &AwcConfig) -> Result<RadiusEstimate> {
    if exp.runs < 50 {
        return Err(AwcError::Config(format!("runs = {} but at least 50 are required", exp.runs)));
    }
    if !(exp.alpha > 0.0 && exp.alpha < 1.0) {
        return Err(AwcError::Config(format!("alpha = {} must lie in (0, 1)", exp.alpha)));
    }
    if !(exp.step > 0.0) {
        return Err(AwcError::Config(format!("radius step = {} must be positive", exp.step)));
    }
    let generator = Gauss { n: exp.n, dim: exp.dim };
    let config = config.clone().with_eff_dim(exp.dim);
    let samples: Vec<(PointMatrix, WeightMatrix)> = (0..exp.runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(exp.seed);
            rng.set_stream(run as u64);
            let (points, _) = generator.sample(&mut rng);
            let result = PreparedAwc::from_points(&points, &config)?.run(exp.lambda)?;
            Ok((points, result.weights))
        })
        .collect::<Result<_>>()?;
    let max_norm = samples
        .iter()
        .flat_map(|(p, _)| (0..p.n()).map(|i| p.norm(i)))
        .fold(0.0, f64::max);
    let mut grid: Vec<f64> = (1..).map(|k| k as f64 * exp.step).take_while(|&r| r < max_norm).collect();
    grid.push(max_norm);
    let target = 1.0 - exp.alpha;
    let pass_rate: Vec<f64> = grid
        .iter()
        .map(|&r| {
            let passed = samples
                .iter()
                .filter(|(p, w)| {
                    let inside: Vec<bool> = (0..p.n()).map(|i| p.norm(i) <= r).collect();
                    connectedness_within(w, &inside).is_some_and(|c| c >= target)
                })
                .count();
            passed as f64 / exp.runs as f64
        })
        .collect();
    let radius = grid
        .iter()
        .zip(&pass_rate)
        .rev()
        .find(|(_, &rate)| rate >= target)
        .map_or(0.0, |(&r, _)| r);
    Ok(RadiusEstimate {
        radius,
        max_norm,
        grid,
        pass_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Ordered-pair enumeration straight from the definitions.
    fn brute(pred: &WeightMatrix, truth: &WeightMatrix, restrict: Option<&[usize]>) -> (u64, u64, u64, u64) {
        let n = pred.n();
        let scope = |i: usize| restrict.is_none_or(|s| s.contains(&i));
        let (mut c, mut d, mut fd, mut fc) = (0, 0, 0, 0);
        for i in 0..n {
            for j in 0..n {
                if i == j || !scope(i) || !scope(j) {
                    continue;
                }
                match (truth.get(i, j), pred.get(i, j)) {
                    (true, p) => {
                        c += 1;
                        fd += !p as u64;
                    }
                    (false, p) => {
                        d += 1;
                        fc += p as u64;
                    }
                }
            }
        }
        (c, d, fd, fc)
    }

    fn brute_nmi(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len() as f64;
        let ka = a.iter().max().unwrap() + 1;
        let kb = b.iter().max().unwrap() + 1;
        let mut table = vec![vec![0.0; kb]; ka];
        for (&x, &y) in a.iter().zip(b) {
            table[x][y] += 1.0;
        }
        let ra: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
        let rb: Vec<f64> = (0..kb).map(|y| table.iter().map(|r| r[y]).sum()).collect();
        if ra.iter().filter(|&&v| v > 0.0).count() < 2 || rb.iter().filter(|&&v| v > 0.0).count() < 2 {
            return 0.0;
        }
        let mut mi = 0.0;
        for x in 0..ka {
            for y in 0..kb {
                if table[x][y] > 0.0 {
                    mi += table[x][y] * (n * table[x][y] / (ra[x] * rb[y])).ln();
                }
            }
        }
        let h = |v: &[f64]| v.iter().filter(|&&c| c > 0.0).map(|&c| c * (c / n).ln()).sum::<f64>();
        mi / (h(&ra) * h(&rb)).sqrt()
    }

    #[test]
    fn propagation_examples() {
        let truth = WeightMatrix::full(4);
        let pred = WeightMatrix::from_labels(&[0, 0, 1, 1]);
        assert_eq!(propagation_error(&pred, &truth).unwrap(), Some(8.0 / 12.0));
        assert_eq!(propagation_error(&truth, &truth).unwrap(), Some(0.0));
        let split = WeightMatrix::from_labels(&[0, 0, 1, 1]);
        assert_eq!(propagation_error(&WeightMatrix::full(4), &split).unwrap(), Some(0.0));
        assert_eq!(propagation_error(&split, &WeightMatrix::identity(4)).unwrap(), None);
    }

    #[test]
    fn separation_examples() {
        let truth = WeightMatrix::from_labels(&[0, 0, 0, 1, 1, 1]);
        assert_eq!(separation_error(&truth, &truth, None).unwrap(), Some(0.0));
        assert_eq!(separation_error(&WeightMatrix::full(6), &truth, None).unwrap(), Some(1.0));

        let mut pairs: Vec<(usize, usize)> = truth.upper_pairs().collect();
        pairs.push((2, 3));
        let raw = WeightMatrix::from_pairs(6, pairs).unwrap();
        assert_eq!(separation_error(&raw, &truth, None).unwrap(), Some(2.0 / 18.0));
        let closure = WeightMatrix::from_labels(&crate::weights::extract_clusters(&raw).labels);
        assert_eq!(separation_error(&closure, &truth, None).unwrap(), Some(18.0 / 18.0));

        // restricted to {0, 1, 4, 5}: the added edge is out of scope
        let scope = [0, 1, 4, 5];
        assert_eq!(separation_error(&raw, &truth, Some(&scope)).unwrap(), Some(0.0));
        assert_eq!(separation_error(&raw, &truth, Some(&[0, 1, 2])).unwrap(), None);
        assert!(separation_error(&raw, &truth, Some(&[9])).is_err());
    }

    #[test]
    fn general_error_examples() {
        let same = WeightMatrix::from_labels(&[0, 0, 1]);
        assert_eq!(general_error(&same, &same).unwrap(), 0.0);
        assert_eq!(general_error(&WeightMatrix::identity(5), &WeightMatrix::full(5)).unwrap(), 1.0);
        let truth = WeightMatrix::from_labels(&[1, 1, 2, 2]);
        let pred = WeightMatrix::from_labels(&[1, 2, 2, 2]);
        assert_eq!(general_error(&pred, &truth).unwrap(), 0.5);
        assert!(general_error(&pred, &WeightMatrix::identity(3)).is_err());
    }

    #[test]
    fn nmi_examples() {
        assert!((nmi(&[0, 0, 1, 1, 2], &[5, 5, 3, 3, 1]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(nmi(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert!(nmi(&[1, 2, 1, 2], &[1, 1, 2, 2]).unwrap().abs() < 1e-12);
        assert!(nmi(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn connectedness_examples() {
        let pts = PointMatrix::from_rows(&[vec![0.1, 0.0], vec![0.0, 0.5], vec![0.3, 0.0], vec![3.0, 0.0]]).unwrap();
        assert_eq!(connectedness(&WeightMatrix::full(4), &pts, 1.0).unwrap(), Some(1.0));
        assert_eq!(connectedness(&WeightMatrix::identity(4), &pts, 1.0).unwrap(), Some(1.0 / 3.0));
        assert_eq!(connectedness(&WeightMatrix::identity(4), &pts, 0.05).unwrap(), None);
        let w = WeightMatrix::from_pairs(4, [(0, 2), (0, 3)]).unwrap();
        assert_eq!(connectedness(&w, &pts, 1.0).unwrap(), Some(5.0 / 9.0));
        assert!(connectedness(&w, &pts, 0.0).is_err());
    }

    fn instance() -> impl Strategy<Value = (Vec<usize>, Vec<(usize, usize)>, Vec<usize>, Vec<bool>)> {
        (1usize..=30).prop_flat_map(|n| {
            (
                prop::collection::vec(0usize..4, n),
                prop::collection::vec((0..n, 0..n), 0..3 * n),
                prop::collection::vec(0usize..5, n),
                prop::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn pair_metrics_match_enumeration((truth_l, pred_pairs, pred_l, mask) in instance()) {
            let n = truth_l.len();
            let truth = WeightMatrix::from_labels(&truth_l);
            for pred in [WeightMatrix::from_pairs(n, pred_pairs).unwrap(), WeightMatrix::from_labels(&pred_l)] {
                let (c, d, fd, fc) = brute(&pred, &truth, None);
                let counts = PairCounts::new(&pred, &truth).unwrap();
                prop_assert_eq!(counts, PairCounts { true_connected: c, true_disconnected: d, false_disconnected: fd, false_connected: fc });
                prop_assert_eq!(counts.propagation_error(), (c > 0).then(|| fd as f64 / c as f64));
                prop_assert_eq!(counts.separation_error(), (d > 0).then(|| fc as f64 / d as f64));
                let e = general_error(&pred, &truth).unwrap();
                if n > 1 {
                    prop_assert_eq!(e, (fd + fc) as f64 / (n * (n - 1)) as f64);
                    // numerator = e_s·D + e_p·C
                    let ep = counts.propagation_error().unwrap_or(0.0);
                    let es = counts.separation_error().unwrap_or(0.0);
                    prop_assert_eq!((ep * c as f64).round() + (es * d as f64).round(), (fd + fc) as f64);
                    prop_assert!((ep * c as f64 + es * d as f64 - (fd + fc) as f64).abs() < 1e-9);
                }
                let subset: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
                let (_, d_r, _, fc_r) = brute(&pred, &truth, Some(&subset));
                prop_assert_eq!(
                    separation_error(&pred, &truth, Some(&subset)).unwrap(),
                    (d_r > 0).then(|| fc_r as f64 / d_r as f64)
                );
                for v in [counts.propagation_error(), counts.separation_error(), Some(e)].into_iter().flatten() {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
            let same = PairCounts::new(&truth, &truth).unwrap();
            prop_assert_eq!(same.false_connected + same.false_disconnected, 0);
        }

        #[test]
        fn nmi_matches_contingency_oracle((a, _, b, _) in instance()) {
            let value = nmi(&a, &b).unwrap();
            prop_assert!((value - brute_nmi(&a, &b)).abs() < 1e-12);
            prop_assert!((value - nmi(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&value));
            let relabeled: Vec<usize> = a.iter().map(|&l| 7 - l).collect();
            prop_assert!((value - nmi(&relabeled, &b).unwrap()).abs() < 1e-12);
            let pa = WeightMatrix::from_labels(&a);
            let pr = WeightMatrix::from_labels(&relabeled);
            let tb = WeightMatrix::from_labels(&b);
            prop_assert_eq!(general_error(&pa, &tb).unwrap(), general_error(&pr, &tb).unwrap());
        }
    }

    #[test]
    fn infinite_lambda_radius_is_max_norm() {
        let exp = RadiusExperiment { n: 40, dim: 2, lambda: 1e12, alpha: 0.2, runs: 50, seed: 3, step: 0.1 };
        let est = calibrated_radius(&exp, &AwcConfig::default()).unwrap();
        assert_eq!(est.radius, est.max_norm);
        assert!(calibrated_radius(&RadiusExperiment { runs: 10, ..exp }, &AwcConfig::default()).is_err());
    }
}
