//! Single-site spin spaces, probability measures on them, and the distances
//! and entropies used throughout the crate.
//!
//! Continuous spaces (circle, sphere) are fixed deterministic quadrature
//! grids, so every integral over a spin space is a weighted sum over nodes.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

/// Tolerance on the total mass of a-priori weights and measures.
pub const WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Euclidean distance between node coordinates.
    Chordal,
    /// User-supplied distance matrix.
    Explicit,
}

/// A finite node set with a-priori weights and a metric.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSpace {
    label: String,
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
    metric_kind: MetricKind,
    dist: Vec<f64>,
    weight_correction: f64,
}

impl SpinSpace {
    /// Space whose metric is the Euclidean distance between coordinates.
    pub fn with_chordal_metric(label: impl Into<String>, nodes: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let n = nodes.len();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                dist[i * n + j] = euclidean(&nodes[i], &nodes[j]);
            }
        }
        Self::build(label.into(), nodes, weights, MetricKind::Chordal, dist, 2)
    }

    /// Space with an explicit symmetric distance matrix (row-major, n x n).
    pub fn with_explicit_metric(
        label: impl Into<String>,
        nodes: Vec<Vec<f64>>,
        weights: Vec<f64>,
        matrix: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = nodes.len();
        if matrix.len() != n || matrix.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidSpace(format!("metric matrix must be {n} x {n}")));
        }
        let dist = matrix.into_iter().flatten().collect();
        Self::build(label.into(), nodes, weights, MetricKind::Explicit, dist, 2)
    }

    /// Label space produced by a coarse-graining map. May have a single node;
    /// the metric is the discrete one.
    pub(crate) fn label_space(label: impl Into<String>, nodes: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let n = nodes.len();
        let mut dist = vec![1.0; n * n];
        for i in 0..n {
            dist[i * n + i] = 0.0;
        }
        Self::build(label.into(), nodes, weights, MetricKind::Explicit, dist, 1)
    }

    fn build(
        label: String,
        nodes: Vec<Vec<f64>>,
        mut weights: Vec<f64>,
        metric_kind: MetricKind,
        dist: Vec<f64>,
        min_nodes: usize,
    ) -> Result<Self> {
        let n = nodes.len();
        if n < min_nodes {
            return Err(Error::InvalidSpace(format!("{label}: need at least {min_nodes} nodes, got {n}")));
        }
        if weights.len() != n {
            return Err(Error::InvalidSpace(format!("{label}: {} weights for {n} nodes", weights.len())));
        }
        let weight_correction = normalize(&mut weights).map_err(|e| match e {
            Error::InvalidMeasure(m) => Error::InvalidSpace(format!("{label}: {m}")),
            other => other,
        })?;
        for i in 0..n {
            if dist[i * n + i] != 0.0 {
                return Err(Error::InvalidSpace(format!("{label}: metric({i},{i}) != 0")));
            }
            for j in (i + 1)..n {
                let (a, b) = (dist[i * n + j], dist[j * n + i]);
                if !(a > 0.0) || !a.is_finite() {
                    return Err(Error::InvalidSpace(format!("{label}: metric({i},{j}) = {a} must be positive")));
                }
                if (a - b).abs() > 1e-12 * a.max(1.0) {
                    return Err(Error::InvalidSpace(format!("{label}: metric not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self { label, nodes, weights, metric_kind, dist, weight_correction })
    }

    /// The two-point space {+1, -1} with uniform weights and d = |σ - σ̄|.
    /// Node 0 is +1, node 1 is -1.
    pub fn ising() -> Self {
        Self::with_chordal_metric("ising", vec![vec![1.0], vec![-1.0]], vec![0.5, 0.5])
            .expect("two-point space is valid")
    }

    /// Equally spaced unit-circle grid without the resolution floor of
    /// [`make_circle`].
    pub fn equispaced_circle(n_nodes: usize) -> Result<Self> {
        if n_nodes < 2 {
            return Err(Error::InsufficientResolution(format!("circle with {n_nodes} nodes")));
        }
        let nodes = (0..n_nodes)
            .map(|i| {
                let th = 2.0 * PI * i as f64 / n_nodes as f64;
                vec![th.cos(), th.sin()]
            })
            .collect();
        Self::with_chordal_metric(format!("circle{n_nodes}"), nodes, vec![1.0 / n_nodes as f64; n_nodes])
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn metric_kind(&self) -> MetricKind {
        self.metric_kind
    }

    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.nodes.len() + j]
    }

    /// Total mass removed or added when the constructor renormalized weights.
    pub fn weight_correction(&self) -> f64 {
        self.weight_correction
    }

    /// Largest pairwise distance.
    pub fn diameter(&self) -> f64 {
        self.dist.iter().cloned().fold(0.0, f64::max)
    }

    /// Coordinates as observables, one component per coordinate axis.
    pub fn coordinate_observables(&self) -> Observables {
        Observables::new(self.nodes.clone()).expect("nodes have a common dimension")
    }

    pub fn to_record(&self) -> SpinSpaceRecord {
        let metric = match self.metric_kind {
            MetricKind::Chordal => MetricRecord::Named("chordal".into()),
            MetricKind::Explicit => {
                let n = self.len();
                MetricRecord::Matrix((0..n).map(|i| self.dist[i * n..(i + 1) * n].to_vec()).collect())
            }
        };
        SpinSpaceRecord { label: self.label.clone(), nodes: self.nodes.clone(), weights: self.weights.clone(), metric }
    }

    pub fn from_record(rec: SpinSpaceRecord) -> Result<Self> {
        match rec.metric {
            MetricRecord::Named(s) if s == "chordal" => Self::with_chordal_metric(rec.label, rec.nodes, rec.weights),
            MetricRecord::Named(s) => Err(Error::Parse(format!("unknown metric '{s}'"))),
            MetricRecord::Matrix(m) => Self::with_explicit_metric(rec.label, rec.nodes, rec.weights, m),
        }
    }
}

impl Serialize for SpinSpace {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_record().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpinSpace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = SpinSpaceRecord::deserialize(d)?;
        SpinSpace::from_record(rec).map_err(serde::de::Error::custom)
    }
}

/// Serialized form of a [`SpinSpace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinSpaceRecord {
    pub label: String,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub metric: MetricRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricRecord {
    Named(String),
    Matrix(Vec<Vec<f64>>),
}

/// Unit circle with `n_nodes` equally spaced nodes, uniform weights and the
/// chordal metric.
pub fn make_circle(n_nodes: usize) -> Result<SpinSpace> {
    if n_nodes < 8 {
        return Err(Error::InsufficientResolution(format!("circle needs at least 8 nodes, got {n_nodes}")));
    }
    SpinSpace::equispaced_circle(n_nodes)
}

/// Unit sphere S^2: Gauss-Legendre nodes in the polar cosine crossed with a
/// uniform azimuth grid. Product weights sum to one.
pub fn make_sphere(n_polar: usize, n_azimuth: usize) -> Result<SpinSpace> {
    if n_polar < 4 || n_azimuth < 4 {
        return Err(Error::InsufficientResolution(format!(
            "sphere needs n_polar, n_azimuth >= 4, got {n_polar} x {n_azimuth}"
        )));
    }
    let (us, ws) = gauss_legendre(n_polar);
    let mut nodes = Vec::with_capacity(n_polar * n_azimuth);
    let mut weights = Vec::with_capacity(n_polar * n_azimuth);
    for (u, w) in us.iter().zip(&ws) {
        let s = (1.0 - u * u).max(0.0).sqrt();
        for j in 0..n_azimuth {
            let ph = 2.0 * PI * j as f64 / n_azimuth as f64;
            nodes.push(vec![s * ph.cos(), s * ph.sin(), *u]);
            weights.push(w / (2.0 * n_azimuth as f64));
        }
    }
    SpinSpace::with_chordal_metric(format!("sphere{n_polar}x{n_azimuth}"), nodes, weights)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Renormalizes in place; returns `sum - 1` before renormalization.
fn normalize(w: &mut [f64]) -> Result<f64> {
    if let Some(bad) = w.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::InvalidMeasure(format!("weight {bad} is negative or not finite")));
    }
    let s: f64 = w.iter().sum();
    if !(s > 0.0) {
        return Err(Error::InvalidMeasure("weights have zero total mass".into()));
    }
    if (s - 1.0).abs() > 0.0 {
        w.iter_mut().for_each(|x| *x /= s);
    }
    Ok(s - 1.0)
}

/// Real-valued observables on a node set: `values[node][component]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    values: Vec<Vec<f64>>,
}

impl Observables {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        let l = values.first().map(|v| v.len()).unwrap_or(0);
        if l == 0 || values.iter().any(|v| v.len() != l) {
            return Err(Error::InvalidInteraction("observables need a common positive number of components".into()));
        }
        Ok(Self { values })
    }

    /// Scalar observable, one value per node.
    pub fn scalar(values: Vec<f64>) -> Result<Self> {
        Self::new(values.into_iter().map(|v| vec![v]).collect())
    }

    pub fn components(&self) -> usize {
        self.values[0].len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn at(&self, node: usize) -> &[f64] {
        &self.values[node]
    }

    /// max_node g_j - min_node g_j.
    pub fn oscillation(&self, j: usize) -> f64 {
        let (lo, hi) =
            self.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v[j]), hi.max(v[j])));
        hi - lo
    }

    /// Moments of an arbitrary weight vector (not necessarily normalized).
    pub fn moments_of(&self, weights: &[f64]) -> Vec<f64> {
        let mut m = vec![0.0; self.components()];
        for (w, g) in weights.iter().zip(&self.values) {
            if *w != 0.0 {
                for (mj, gj) in m.iter_mut().zip(g) {
                    *mj += w * gj;
                }
            }
        }
        m
    }
}

/// Nonnegative weights over the nodes of a spin space, summing to one.
#[derive(Debug, Clone)]
pub struct Measure {
    space: Arc<SpinSpace>,
    weights: Vec<f64>,
}

impl PartialEq for Measure {
    fn eq(&self, other: &Self) -> bool {
        same_space(&self.space, &other.space) && self.weights == other.weights
    }
}

impl Measure {
    /// Renormalizes `weights` to unit mass.
    pub fn new(space: Arc<SpinSpace>, mut weights: Vec<f64>) -> Result<Self> {
        if weights.len() != space.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} weights for a space of {} nodes",
                weights.len(),
                space.len()
            )));
        }
        normalize(&mut weights)?;
        Ok(Self { space, weights })
    }

    /// The a-priori measure of the space.
    pub fn apriori(space: Arc<SpinSpace>) -> Self {
        let weights = space.weights().to_vec();
        Self { space, weights }
    }

    /// Random strictly positive measure: α(σ)·exp(U[-2, 2]) per node, renormalized.
    pub fn random<R: Rng + ?Sized>(space: Arc<SpinSpace>, rng: &mut R) -> Self {
        let mut weights: Vec<f64> = space.weights().iter().map(|a| a * rng.gen_range(-2.0f64..=2.0).exp()).collect();
        let s: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= s);
        Self { space, weights }
    }

    pub fn dirac(space: Arc<SpinSpace>, node: usize) -> Result<Self> {
        if node >= space.len() {
            return Err(Error::InvalidParameter(format!("node {node} out of range")));
        }
        let mut weights = vec![0.0; space.len()];
        weights[node] = 1.0;
        Ok(Self { space, weights })
    }

    pub fn space(&self) -> &Arc<SpinSpace> {
        &self.space
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// t * self + (1 - t) * other.
    pub fn mix(&self, other: &Measure, t: f64) -> Result<Measure> {
        check_space(&self.space, &other.space)?;
        let weights = self.weights.iter().zip(&other.weights).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        Measure::new(self.space.clone(), weights)
    }

    /// CSV rows `node_index, coordinate..., weight`.
    pub fn to_csv(&self) -> String {
        let dim = self.space.node(0).len();
        let mut out = String::from("node_index");
        for k in 0..dim {
            let _ = write!(out, ",x{k}");
        }
        out.push_str(",weight\n");
        for (i, w) in self.weights.iter().enumerate() {
            let _ = write!(out, "{i}");
            for x in self.space.node(i) {
                let _ = write!(out, ",{x}");
            }
            let _ = writeln!(out, ",{w}");
        }
        out
    }

    pub fn to_record(&self) -> MeasureRecord {
        MeasureRecord { space: self.space.to_record(), weights: self.weights.clone() }
    }

    pub fn from_record(rec: MeasureRecord) -> Result<Measure> {
        let space = Arc::new(SpinSpace::from_record(rec.space)?);
        Measure::new(space, rec.weights)
    }
}

/// Serialized form of a [`Measure`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureRecord {
    pub space: SpinSpaceRecord,
    pub weights: Vec<f64>,
}

pub(crate) fn same_space(a: &Arc<SpinSpace>, b: &Arc<SpinSpace>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

pub(crate) fn check_space(a: &Arc<SpinSpace>, b: &Arc<SpinSpace>) -> Result<()> {
    if same_space(a, b) {
        Ok(())
    } else {
        Err(Error::SpaceMismatch(a.label().to_string(), b.label().to_string()))
    }
}

/// ½ Σ |a - b| over nodes.
pub fn variational_distance(a: &Measure, b: &Measure) -> Result<f64> {
    check_space(&a.space, &b.space)?;
    Ok(0.5 * a.weights.iter().zip(&b.weights).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// S(ν|ρ) = Σ ν log(ν/ρ); +∞ when ν charges a node where ρ vanishes.
pub fn relative_entropy(nu: &Measure, rho: &Measure) -> Result<f64> {
    check_space(&nu.space, &rho.space)?;
    let mut s = 0.0;
    for (&p, &q) in nu.weights.iter().zip(&rho.weights) {
        if p > 0.0 {
            if q <= 0.0 {
                return Ok(f64::INFINITY);
            }
            s += p * (p / q).ln();
        }
    }
    Ok(s.max(0.0))
}

/// m(ν) = ν[g].
pub fn moment_vector(nu: &Measure, g: &Observables) -> Result<Vec<f64>> {
    if g.len() != nu.len() {
        return Err(Error::InvalidParameter(format!(
            "observables defined on {} nodes, measure on {}",
            g.len(),
            nu.len()
        )));
    }
    Ok(g.moments_of(&nu.weights))
}
