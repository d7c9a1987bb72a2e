//! Seeded synthetic datasets.
//!
//! Every generator draws from a `ChaCha8Rng` seeded with `seed_from_u64`,
//! so outputs are identical across platforms. Generators are selected by a
//! spec string `name:key=value,…`, e.g. `two-gauss:n=300,D=3`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Triangular};

use crate::error::{AwcError, Result};
use crate::neighborhood::PointMatrix;
use crate::registry::Registry;

use super::{Dataset, Features, Provenance};

/// Parsed `name:key=value,…` spec.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorSpec {
    pub name: String,
    pub params: BTreeMap<String, String>,
}

impl FromStr for GeneratorSpec {
    type Err = AwcError;

    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let name = name.trim();
        if name.is_empty() {
            return Err(AwcError::Config(format!("generator spec `{s}` has no name")));
        }
        let mut params = BTreeMap::new();
        for item in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let Some((k, v)) = item.split_once('=') else {
                return Err(AwcError::Config(format!("generator parameter `{item}` is not key=value")));
            };
            if params.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(AwcError::Config(format!("generator parameter `{}` repeated", k.trim())));
            }
        }
        Ok(Self {
            name: name.to_string(),
            params,
        })
    }
}

impl fmt::Display for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        for (k, (key, v)) in self.params.iter().enumerate() {
            write!(f, "{}{key}={v}", if k == 0 { ':' } else { ',' })?;
        }
        Ok(())
    }
}

/// Typed access to spec parameters; unknown keys are rejected by [`Self::done`].
struct Params<'a> {
    spec: &'a GeneratorSpec,
    used: Vec<&'static str>,
}

impl<'a> Params<'a> {
    fn new(spec: &'a GeneratorSpec) -> Self {
        Self { spec, used: Vec::new() }
    }

    fn get<T: FromStr>(&mut self, key: &'static str, default: T) -> Result<T> {
        self.used.push(key);
        match self.spec.params.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                AwcError::Config(format!("generator `{}`: cannot parse {key} = `{v}`", self.spec.name))
            }),
        }
    }

    fn done(self) -> Result<()> {
        match self.spec.params.keys().find(|k| !self.used.contains(&k.as_str())) {
            Some(k) => Err(AwcError::Config(format!(
                "generator `{}` has no parameter `{k}` (known: {})",
                self.spec.name,
                self.used.join(", ")
            ))),
            None => Ok(()),
        }
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(AwcError::Config(msg()))
    }
}

/// A synthetic data distribution.
pub trait Generator: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Canonical spec string reproducing this generator.
    fn spec(&self) -> String;

    /// Draw points and, when the distribution defines them, reference labels.
    fn sample(&self, rng: &mut ChaCha8Rng) -> (PointMatrix, Option<Vec<String>>);

    fn generate(&self, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (points, labels) = self.sample(&mut rng);
        Dataset {
            features: Features::Points(points),
            labels,
            provenance: Provenance::Synthetic(self.spec()),
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Uniform point in the unit ball: isotropic direction times `U^{1/dim}`.
fn push_ball_point(rng: &mut ChaCha8Rng, dim: usize, out: &mut Vec<f64>) {
    let dir: Vec<f64> = loop {
        let v: Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            break v.into_iter().map(|x| x / norm).collect();
        }
    };
    let r = rng.random::<f64>().powf(1.0 / dim as f64);
    out.extend(dir.into_iter().map(|x| x * r));
}

fn points(n: usize, dim: usize, data: Vec<f64>) -> PointMatrix {
    PointMatrix::new(n, dim, data).expect("generator produced n x dim values")
}

/// `n` points uniform in the unit ball of `R^dim`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformBall {
    pub n: usize,
    pub dim: usize,
}

impl Generator for UniformBall {
    fn name(&self) -> &'static str {
        "uniform-ball"
    }

    fn spec(&self) -> String {
        format!("uniform-ball:dim={},n={}", self.dim, self.n)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> (PointMatrix, Option<Vec<String>>) {
        let mut data = Vec::with_capacity(self.n * self.dim);
        for _ in 0..self.n {
            push_ball_point(rng, self.dim, &mut data);
        }
        (points(self.n, self.dim, data), None)
    }
}

/// `n` points from `N(0, I)` and `n` from `N(D·e₁, I)`, labelled `0`/`1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoGauss {
    pub n: usize,
    pub dim: usize,
    pub distance: f64,
}

impl Generator for TwoGauss {
    fn name(&self) -> &'static str {
        "two-gauss"
    }

    fn spec(&self) -> String {
        format!("two-gauss:D={},dim={},n={}", self.distance, self.dim, self.n)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> (PointMatrix, Option<Vec<String>>) {
        let mut data = Vec::with_capacity(2 * self.n * self.dim);
        let mut labels = Vec::with_capacity(2 * self.n);
        for c in 0..2 {
            for _ in 0..self.n {
                for k in 0..self.dim {
                    let shift = if c == 1 && k == 0 { self.distance } else { 0.0 };
                    data.push(shift + normal(rng));
                }
                labels.push(c.to_string());
            }
        }
        (points(2 * self.n, self.dim, data), Some(labels))
    }
}

/// Ideal split of [`TwoGauss`] data by the hyperplane `x₁ = split`.
pub fn hyperplane_labels(points: &PointMatrix, split: f64) -> Vec<usize> {
    points.rows().map(|x| (x[0] > split) as usize).collect()
}

/// Uniform data on `[0,3]×[0,2]` whose middle strip `[1,2]×[0,2]` has its
/// density lowered by the factor `1 − eps`; strips labelled `A`, `B`, `C`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hole {
    pub n: usize,
    pub eps: f64,
}

impl Generator for Hole {
    fn name(&self) -> &'static str {
        "hole"
    }

    fn spec(&self) -> String {
        format!("hole:eps={},n={}", self.eps, self.n)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> (PointMatrix, Option<Vec<String>>) {
        let mass = [1.0, 1.0 - self.eps, 1.0];
        let total: f64 = mass.iter().sum();
        let mut data = Vec::with_capacity(2 * self.n);
        let mut labels = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            let mut u = rng.random::<f64>() * total;
            let mut strip = 0;
            while strip < 2 && (u >= mass[strip] || mass[strip] == 0.0) {
                u -= mass[strip];
                strip += 1;
            }
            data.push(strip as f64 + rng.random::<f64>());
            data.push(2.0 * rng.random::<f64>());
            labels.push(["A", "B", "C"][strip].to_string());
        }
        (points(self.n, 2, data), Some(labels))
    }
}

/// Uniform unit disk (label `0`) surrounded by a uniform annulus
/// `inner ≤ r ≤ outer` (label `1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingBall {
    pub n_ball: usize,
    pub n_ring: usize,
    pub inner: f64,
    pub outer: f64,
}

impl Generator for RingBall {
    fn name(&self) -> &'static str {
        "ring-ball"
    }

    fn spec(&self) -> String {
        format!(
            "ring-ball:inner={},n_ball={},n_ring={},outer={}",
            self.inner, self.n_ball, self.n_ring, self.outer
        )
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> (PointMatrix, Option<Vec<String>>) {
        let n = self.n_ball + self.n_ring;
        let mut data = Vec::with_capacity(2 * n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..self.n_ball {
            push_ball_point(rng, 2, &mut data);
            labels.push("0".to_string());
        }
        let (a, b) = (self.inner * self.inner, self.outer * self.outer);
        for _ in 0..self.n_ring {
            let r = (a + (b - a) * rng.random::<f64>()).sqrt();
            let phi = 2.0 * PI * rng.random::<f64>();
            data.push(r * phi.cos());
            data.push(r * phi.sin());
            labels.push("1".to_string());
        }
        (points(n, 2, data), Some(labels))
    }
}

/// Unit circle in the first two coordinates of `R^dim` plus isotropic
/// Gaussian noise of scale `sigma` in every coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldCircle {
    pub n: usize,
    pub dim: usize,
    pub sigma: f64,
}

impl Generator for ManifoldCircle {
    fn name(&self) -> &'static str {
        "manifold-circle"
    }

    fn spec(&self) -> String {
        format!("manifold-circle:dim={},n={},sigma={}", self.dim, self.n, self.sigma)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> (PointMatrix, Option<Vec<String>>) {
        let mut data = Vec::with_capacity(self.n * self.dim);
        for _ in 0..self.n {
            let phi = 2.0 * PI * rng.random::<f64>();
            for k in 0..self.dim {
                let base = match k {
                    0 => phi.cos(),
                    1 => phi.sin(),
                    _ => 0.0,
                };
                data.push(base + self.sigma * normal(rng));
            }
        }
        (points(self.n, self.dim, data), None)
    }
}

/// Standard normal sample in `R^dim`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gauss {
    pub n: usize,
    pub dim: usize,
}

impl Generator for Gauss {
    fn name(&self) -> &'static str {
        "gauss"
    }

    fn spec(&self) -> String {
        format!("gauss:dim={},n={}", self.dim, self.n)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> (PointMatrix, Option<Vec<String>>) {
        let data = (0..self.n * self.dim).map(|_| normal(rng)).collect();
        (points(self.n, self.dim, data), None)
    }
}

/// One-dimensional triangular density on `[0, 1]` with mode `1/2`
/// (concave on its support).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub n: usize,
}

impl Generator for Triangle {
    fn name(&self) -> &'static str {
        "triangle"
    }

    fn spec(&self) -> String {
        format!("triangle:n={}", self.n)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> (PointMatrix, Option<Vec<String>>) {
        let tri = Triangular::new(0.0, 1.0, 0.5).expect("valid triangle");
        let data = (0..self.n).map(|_| tri.sample(rng)).collect();
        (points(self.n, 1, data), None)
    }
}

fn positive(name: &str, key: &str, v: usize) -> Result<usize> {
    check(v > 0, || format!("generator `{name}`: {key} must be positive"))?;
    Ok(v)
}

fn make_uniform_ball(spec: &GeneratorSpec) -> Result<Box<dyn Generator>> {
    let mut p = Params::new(spec);
    let g = UniformBall {
        n: positive("uniform-ball", "n", p.get("n", 200)?)?,
        dim: positive("uniform-ball", "dim", p.get("dim", 2)?)?,
    };
    p.done()?;
    Ok(Box::new(g))
}

fn make_two_gauss(spec: &GeneratorSpec) -> Result<Box<dyn Generator>> {
    let mut p = Params::new(spec);
    let g = TwoGauss {
        n: positive("two-gauss", "n", p.get("n", 300)?)?,
        dim: positive("two-gauss", "dim", p.get("dim", 2)?)?,
        distance: p.get("D", 3.0)?,
    };
    p.done()?;
    check(g.distance >= 0.0 && g.distance.is_finite(), || "two-gauss: D must be nonnegative".into())?;
    Ok(Box::new(g))
}

fn make_hole(spec: &GeneratorSpec) -> Result<Box<dyn Generator>> {
    let mut p = Params::new(spec);
    let g = Hole {
        n: positive("hole", "n", p.get("n", 1000)?)?,
        eps: p.get("eps", 0.5)?,
    };
    p.done()?;
    check((0.0..=1.0).contains(&g.eps), || "hole: eps must lie in [0, 1]".into())?;
    Ok(Box::new(g))
}

fn make_ring_ball(spec: &GeneratorSpec) -> Result<Box<dyn Generator>> {
    let mut p = Params::new(spec);
    let g = RingBall {
        n_ball: positive("ring-ball", "n_ball", p.get("n_ball", 122)?)?,
        n_ring: positive("ring-ball", "n_ring", p.get("n_ring", 146)?)?,
        inner: p.get("inner", 1.5)?,
        outer: p.get("outer", 1.8)?,
    };
    p.done()?;
    check(1.0 <= g.inner && g.inner < g.outer && g.outer.is_finite(), || {
        "ring-ball: need 1 <= inner < outer".into()
    })?;
    Ok(Box::new(g))
}

fn make_manifold_circle(spec: &GeneratorSpec) -> Result<Box<dyn Generator>> {
    let mut p = Params::new(spec);
    let g = ManifoldCircle {
        n: positive("manifold-circle", "n", p.get("n", 300)?)?,
        dim: p.get("dim", 10)?,
        sigma: p.get("sigma", 0.05)?,
    };
    p.done()?;
    check(g.dim >= 2, || "manifold-circle: dim must be at least 2".into())?;
    check(g.sigma >= 0.0 && g.sigma.is_finite(), || "manifold-circle: sigma must be nonnegative".into())?;
    Ok(Box::new(g))
}

fn make_gauss(spec: &GeneratorSpec) -> Result<Box<dyn Generator>> {
    let mut p = Params::new(spec);
    let g = Gauss {
        n: positive("gauss", "n", p.get("n", 300)?)?,
        dim: positive("gauss", "dim", p.get("dim", 2)?)?,
    };
    p.done()?;
    Ok(Box::new(g))
}

fn make_triangle(spec: &GeneratorSpec) -> Result<Box<dyn Generator>> {
    let mut p = Params::new(spec);
    let g = Triangle {
        n: positive("triangle", "n", p.get("n", 500)?)?,
    };
    p.done()?;
    Ok(Box::new(g))
}

pub fn generators() -> Registry<dyn Generator, GeneratorSpec> {
    let mut reg = Registry::new("generator");
    reg.register("uniform-ball", make_uniform_ball)
        .register("two-gauss", make_two_gauss)
        .register("hole", make_hole)
        .register("ring-ball", make_ring_ball)
        .register("manifold-circle", make_manifold_circle)
        .register("gauss", make_gauss)
        .register("triangle", make_triangle);
    reg
}

/// Build a generator from a spec string such as `hole:n=1000,eps=0.5`.
pub fn generator(spec: &str) -> Result<Box<dyn Generator>> {
    let spec: GeneratorSpec = spec.parse()?;
    generators().create(&spec.name, &spec)
}
