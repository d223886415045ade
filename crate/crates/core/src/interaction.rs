//! Mean-field interactions Φ(ν) = F(ν[g₁], …, ν[g_l]), their derivative kernel
//! Φ⁽¹⁾(ν, δ_σ) = Σ_j F_j(ν[g]) g_j(σ), and the norm constants that enter the
//! contraction estimates.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::par_map;
use crate::spinspace::{check_space, Measure, Observables, SpinSpace};

/// The smooth function F: ℝ^l → ℝ with its gradient and Hessian.
pub trait MeanFieldFunction: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, m: &[f64]) -> f64;
    fn gradient(&self, m: &[f64]) -> Vec<f64>;
    /// Row-major l x l Hessian.
    fn hessian(&self, m: &[f64]) -> Vec<f64>;
    /// Declared degree p with F(t m) = t^p F(m).
    fn homogeneity_degree(&self) -> Option<f64> {
        None
    }
    fn describe(&self) -> String;
}

/// F(m) = -(β/2) Σ_j m_j², the Curie-Weiss / rotator coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCoupling {
    pub beta: f64,
    pub dim: usize,
}

impl MeanFieldFunction for QuadraticCoupling {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, m: &[f64]) -> f64 {
        -0.5 * self.beta * m.iter().map(|x| x * x).sum::<f64>()
    }
    fn gradient(&self, m: &[f64]) -> Vec<f64> {
        m.iter().map(|x| -self.beta * x).collect()
    }
    fn hessian(&self, _m: &[f64]) -> Vec<f64> {
        let l = self.dim;
        let mut h = vec![0.0; l * l];
        for j in 0..l {
            h[j * l + j] = -self.beta;
        }
        h
    }
    fn homogeneity_degree(&self) -> Option<f64> {
        Some(2.0)
    }
    fn describe(&self) -> String {
        format!("quadratic(beta={}, l={})", self.beta, self.dim)
    }
}

/// F(m) = -(β/p) m^p for a scalar moment, integer p ≥ 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PSpin {
    pub beta: f64,
    pub p: u32,
}

impl MeanFieldFunction for PSpin {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, m: &[f64]) -> f64 {
        -self.beta / self.p as f64 * m[0].powi(self.p as i32)
    }
    fn gradient(&self, m: &[f64]) -> Vec<f64> {
        vec![-self.beta * m[0].powi(self.p as i32 - 1)]
    }
    fn hessian(&self, m: &[f64]) -> Vec<f64> {
        if self.p < 2 {
            return vec![0.0];
        }
        vec![-self.beta * (self.p - 1) as f64 * m[0].powi(self.p as i32 - 2)]
    }
    fn homogeneity_degree(&self) -> Option<f64> {
        Some(self.p as f64)
    }
    fn describe(&self) -> String {
        format!("pspin(beta={}, p={})", self.beta, self.p)
    }
}

type ScalarFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type VectorFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// F supplied as closures, for interactions without a built-in preset.
pub struct ClosureFunction {
    name: String,
    dim: usize,
    value: Box<ScalarFn>,
    gradient: Box<VectorFn>,
    hessian: Box<VectorFn>,
    degree: Option<f64>,
}

impl ClosureFunction {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        hessian: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            dim,
            value: Box::new(value),
            gradient: Box::new(gradient),
            hessian: Box::new(hessian),
            degree: None,
        }
    }

    pub fn with_homogeneity_degree(mut self, p: f64) -> Self {
        self.degree = Some(p);
        self
    }
}

impl fmt::Debug for ClosureFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClosureFunction").field("name", &self.name).field("dim", &self.dim).finish()
    }
}

impl MeanFieldFunction for ClosureFunction {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, m: &[f64]) -> f64 {
        (self.value)(m)
    }
    fn gradient(&self, m: &[f64]) -> Vec<f64> {
        (self.gradient)(m)
    }
    fn hessian(&self, m: &[f64]) -> Vec<f64> {
        (self.hessian)(m)
    }
    fn homogeneity_degree(&self) -> Option<f64> {
        self.degree
    }
    fn describe(&self) -> String {
        self.name.clone()
    }
}

/// A mean-field interaction bound to a spin space.
#[derive(Debug, Clone)]
pub struct Interaction {
    space: Arc<SpinSpace>,
    g: Observables,
    f: Arc<dyn MeanFieldFunction>,
}

impl Interaction {
    pub fn new(space: Arc<SpinSpace>, g: Observables, f: Arc<dyn MeanFieldFunction>) -> Result<Self> {
        if g.len() != space.len() {
            return Err(Error::InvalidInteraction(format!(
                "observables on {} nodes, space has {}",
                g.len(),
                space.len()
            )));
        }
        if g.components() != f.dim() {
            return Err(Error::InvalidInteraction(format!(
                "F takes {} moments but g has {} components",
                f.dim(),
                g.components()
            )));
        }
        for j in 0..g.components() {
            if !(g.oscillation(j) > 0.0) {
                return Err(Error::DegenerateObservable(j));
            }
        }
        Ok(Self { space, g, f })
    }

    /// Interaction whose observables are the node coordinates.
    pub fn on_coordinates(space: Arc<SpinSpace>, f: Arc<dyn MeanFieldFunction>) -> Result<Self> {
        let g = space.coordinate_observables();
        Self::new(space, g, f)
    }

    pub fn space(&self) -> &Arc<SpinSpace> {
        &self.space
    }

    pub fn observables(&self) -> &Observables {
        &self.g
    }

    pub fn function(&self) -> &Arc<dyn MeanFieldFunction> {
        &self.f
    }

    pub fn homogeneity_degree(&self) -> Option<f64> {
        self.f.homogeneity_degree()
    }

    pub fn describe(&self) -> String {
        format!("{} on {}", self.f.describe(), self.space.label())
    }

    fn check(&self, nu: &Measure) -> Result<()> {
        check_space(&self.space, nu.space())
    }

    pub fn moments(&self, nu: &Measure) -> Result<Vec<f64>> {
        self.check(nu)?;
        Ok(self.g.moments_of(nu.weights()))
    }

    /// Φ(ν) = F(ν[g]).
    pub fn phi(&self, nu: &Measure) -> Result<f64> {
        Ok(self.f.value(&self.moments(nu)?))
    }

    /// Φ⁽¹⁾(ν, δ_σ) for one node.
    pub fn phi_deriv(&self, nu: &Measure, node: usize) -> Result<f64> {
        if node >= self.space.len() {
            return Err(Error::InvalidParameter(format!("node {node} out of range")));
        }
        let grad = self.f.gradient(&self.moments(nu)?);
        Ok(dot(&grad, self.g.at(node)))
    }

    /// Φ⁽¹⁾(ν, δ_σ) for every node σ, given the moment vector m = ν[g].
    pub fn local_field(&self, m: &[f64]) -> Vec<f64> {
        let grad = self.f.gradient(m);
        (0..self.space.len()).map(|i| dot(&grad, self.g.at(i))).collect()
    }

    /// Φ⁽¹⁾(ν, ν) = Σ_j F_j(m) m_j.
    pub fn self_derivative(&self, m: &[f64]) -> f64 {
        dot(&self.f.gradient(m), m)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstantsProvenance {
    ExactClosedForm,
    Sampled,
}

/// Norm constants of an interaction; `c_of_f_g` is C(F,g).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionConstants {
    pub delta_g: f64,
    pub g_lip: f64,
    pub hess_max: f64,
    pub delta_hat_phi1: f64,
    pub c_of_f_g: f64,
    pub probe_count: usize,
    pub seed: u64,
    pub provenance: ConstantsProvenance,
}

impl InteractionConstants {
    /// Closed-form constants; C(F,g) is assembled from the four inputs.
    pub fn exact(delta_g: f64, g_lip: f64, hess_max: f64, delta_hat_phi1: f64) -> Self {
        Self {
            delta_g,
            g_lip,
            hess_max,
            delta_hat_phi1,
            c_of_f_g: c_of_f_g(delta_g, g_lip, hess_max, delta_hat_phi1),
            probe_count: 0,
            seed: 0,
            provenance: ConstantsProvenance::ExactClosedForm,
        }
    }
}

/// C(F,g) = 2 ‖∂²F‖ δ(g) ‖g‖_{d,2} exp(δ̂(Φ⁽¹⁾)/2).
pub fn c_of_f_g(delta_g: f64, g_lip: f64, hess_max: f64, delta_hat_phi1: f64) -> f64 {
    2.0 * hess_max * delta_g * g_lip * (delta_hat_phi1 / 2.0).exp()
}

pub const MIN_PROBES: usize = 256;

/// Estimates the norm constants. Suprema over the moment set D_g are taken over
/// the node images g(σ) plus `probe_count` seeded random convex combinations,
/// so `hess_max` and `delta_hat_phi1` are lower bounds that are exact whenever
/// the supremum sits on a vertex.
pub fn compute_constants(inter: &Interaction, probe_count: usize, seed: u64) -> Result<InteractionConstants> {
    if probe_count < MIN_PROBES {
        return Err(Error::InvalidParameter(format!("probe_count must be >= {MIN_PROBES}, got {probe_count}")));
    }
    let g = &inter.g;
    let space = &inter.space;
    let n = space.len();
    let l = g.components();

    let mut delta_g = 0.0;
    for j in 0..l {
        let osc = g.oscillation(j);
        if !(osc > 0.0) {
            return Err(Error::DegenerateObservable(j));
        }
        delta_g += osc;
    }

    let mut g_lip: f64 = 0.0;
    for a in 0..n {
        for b in (a + 1)..n {
            let diff: f64 = g.at(a).iter().zip(g.at(b)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            g_lip = g_lip.max(diff / space.distance(a, b));
        }
    }

    let probes = moment_probes(g, probe_count, seed);
    let per_probe = par_map(&probes, |m| probe(inter, m));
    let mut hess_max: f64 = 0.0;
    let mut delta_hat: f64 = 0.0;
    for r in per_probe {
        let (h, d) = r?;
        hess_max = hess_max.max(h);
        delta_hat = delta_hat.max(d);
    }

    Ok(InteractionConstants {
        delta_g,
        g_lip,
        hess_max,
        delta_hat_phi1: delta_hat,
        c_of_f_g: c_of_f_g(delta_g, g_lip, hess_max, delta_hat),
        probe_count,
        seed,
        provenance: ConstantsProvenance::Sampled,
    })
}

/// Node images followed by seeded random points of conv{g(σ)}. The random
/// stream is consumed probe by probe, so a larger count extends a smaller one.
fn moment_probes(g: &Observables, probe_count: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = g.len();
    let mut probes: Vec<Vec<f64>> = (0..n).map(|i| g.at(i).to_vec()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = vec![0.0; n];
    for k in 0..probe_count {
        w.iter_mut().for_each(|x| *x = 0.0);
        if k % 2 == 0 {
            // sparse: 2..=4 nodes
            let support = 2 + rng.gen_range(0..3usize);
            for _ in 0..support {
                let i = rng.gen_range(0..n);
                w[i] += -(1.0 - rng.gen::<f64>()).ln();
            }
        } else {
            for x in w.iter_mut() {
                *x = -(1.0 - rng.gen::<f64>()).ln();
            }
        }
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        probes.push(g.moments_of(&w));
    }
    probes
}

fn probe(inter: &Interaction, m: &[f64]) -> Result<(f64, f64)> {
    let l = inter.g.components();
    let h = inter.f.hessian(m);
    let mut hmax: f64 = 0.0;
    for j in 0..l {
        for u in 0..l {
            let (a, b) = (h[j * l + u], h[u * l + j]);
            if (a - b).abs() > 1e-9 * a.abs().max(b.abs()).max(1.0) {
                return Err(Error::InvalidInteraction(format!("Hessian not symmetric at {m:?}")));
            }
            hmax = hmax.max(a.abs());
        }
    }
    let field = inter.local_field(m);
    let (lo, hi) = field.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    Ok((hmax, hi - lo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spinspace::{make_circle, make_sphere};

    fn ising(beta: f64, p: u32) -> Interaction {
        Interaction::on_coordinates(Arc::new(SpinSpace::ising()), Arc::new(PSpin { beta, p })).unwrap()
    }

    #[test]
    fn phi_examples() {
        let cw = ising(1.0, 2);
        let s = cw.space().clone();
        assert_eq!(cw.phi(&Measure::apriori(s.clone())).unwrap(), 0.0);
        assert!((cw.phi(&Measure::dirac(s, 0).unwrap()).unwrap() + 0.5).abs() < 1e-15);

        let circle = Arc::new(make_circle(64).unwrap());
        let rot =
            Interaction::on_coordinates(circle.clone(), Arc::new(QuadraticCoupling { beta: 0.7, dim: 2 })).unwrap();
        assert!(rot.phi(&Measure::apriori(circle)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn phi_deriv_examples() {
        let cw = ising(1.0, 2);
        let nu = Measure::new(cw.space().clone(), vec![0.75, 0.25]).unwrap();
        assert!((cw.phi_deriv(&nu, 0).unwrap() + 0.5).abs() < 1e-15);
        // Critical point of F: all derivatives vanish.
        let uni = Measure::apriori(cw.space().clone());
        assert_eq!(cw.phi_deriv(&uni, 0).unwrap(), 0.0);
        assert_eq!(cw.phi_deriv(&uni, 1).unwrap(), 0.0);
    }

    #[test]
    fn euler_identity_for_declared_degree() {
        for p in 1..=5u32 {
            let it = ising(0.8, p);
            let p_f = it.homogeneity_degree().unwrap();
            for w in [0.1, 0.37, 0.5, 0.92] {
                let nu = Measure::new(it.space().clone(), vec![w, 1.0 - w]).unwrap();
                let lhs: f64 = (0..2).map(|i| nu.weights()[i] * it.phi_deriv(&nu, i).unwrap()).sum();
                assert!((lhs - p_f * it.phi(&nu).unwrap()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn homogeneity_holds_when_declared() {
        let f = PSpin { beta: 1.3, p: 3 };
        for &t in &[0.1, 0.5, 0.9, 1.0] {
            for &m in &[-1.0, -0.4, 0.2, 0.8] {
                let lhs = f.value(&[t * m]);
                let rhs = t.powi(3) * f.value(&[m]);
                assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn ising_constants() {
        let c = compute_constants(&ising(0.5, 2), 256, 7).unwrap();
        assert_eq!(c.delta_g, 2.0);
        assert_eq!(c.g_lip, 1.0);
        assert!((c.hess_max - 0.5).abs() < 1e-15);
        assert!((c.delta_hat_phi1 - 1.0).abs() < 1e-15);
        // 4 β e^β at β = 0.5
        assert!((c.c_of_f_g - 3.297442541400256).abs() < 1e-12);
        assert_eq!(c.provenance, ConstantsProvenance::Sampled);
    }

    #[test]
    fn zero_coupling_has_zero_constants() {
        let c = compute_constants(&ising(0.0, 2), 256, 1).unwrap();
        assert_eq!((c.hess_max, c.delta_hat_phi1, c.c_of_f_g), (0.0, 0.0, 0.0));
    }

    #[test]
    fn rotator_constants_match_closed_form() {
        let beta = 0.3;
        for (space, q) in [(make_circle(64).unwrap(), 2.0), (make_sphere(16, 32).unwrap(), 3.0)] {
            let space = Arc::new(space);
            let l = space.node(0).len();
            let it = Interaction::on_coordinates(space, Arc::new(QuadraticCoupling { beta, dim: l })).unwrap();
            let c = compute_constants(&it, 4096, 3).unwrap();
            let exact = InteractionConstants::exact(2.0 * q, 1.0, beta, 2.0 * beta);
            assert!((c.hess_max - exact.hess_max).abs() < 1e-9);
            assert!((c.g_lip - 1.0).abs() < 1e-9);
            assert!((c.delta_hat_phi1 - exact.delta_hat_phi1).abs() < 0.02 * exact.delta_hat_phi1);
            assert!((c.delta_g - exact.delta_g).abs() < 0.02 * exact.delta_g, "{} vs {}", c.delta_g, exact.delta_g);
            assert!((c.c_of_f_g - exact.c_of_f_g).abs() < 0.02 * exact.c_of_f_g);
        }
    }

    #[test]
    fn constants_are_deterministic_and_monotone_in_probes() {
        let space = Arc::new(make_circle(32).unwrap());
        // A non-quadratic F so the suprema are interior and sampling matters.
        let f = ClosureFunction::new(
            "quartic",
            2,
            |m| -(m[0] * m[0] + m[1] * m[1]).powi(2) + 0.3 * m[0] * m[1],
            |m| {
                let r2 = m[0] * m[0] + m[1] * m[1];
                vec![-4.0 * r2 * m[0] + 0.3 * m[1], -4.0 * r2 * m[1] + 0.3 * m[0]]
            },
            |m| {
                let (x, y) = (m[0], m[1]);
                let r2 = x * x + y * y;
                vec![-4.0 * r2 - 8.0 * x * x, -8.0 * x * y + 0.3, -8.0 * x * y + 0.3, -4.0 * r2 - 8.0 * y * y]
            },
        );
        let it = Interaction::on_coordinates(space, Arc::new(f)).unwrap();
        let a = compute_constants(&it, 512, 11).unwrap();
        let b = compute_constants(&it, 512, 11).unwrap();
        assert_eq!(a, b);
        let mut prev = (0.0, 0.0);
        for n in [256, 512, 1024, 2048] {
            let c = compute_constants(&it, n, 11).unwrap();
            assert!(c.hess_max >= prev.0 && c.delta_hat_phi1 >= prev.1);
            prev = (c.hess_max, c.delta_hat_phi1);
        }
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fs: Vec<Arc<dyn MeanFieldFunction>> = vec![
            Arc::new(QuadraticCoupling { beta: 0.9, dim: 3 }),
            Arc::new(PSpin { beta: 1.1, p: 2 }),
            Arc::new(PSpin { beta: 0.6, p: 4 }),
            Arc::new(PSpin { beta: 0.6, p: 3 }),
        ];
        for f in fs {
            let l = f.dim();
            for _ in 0..128 {
                let m: Vec<f64> = (0..l).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let g = f.gradient(&m);
                let h = f.hessian(&m);
                for j in 0..l {
                    let step = 1e-5 * m[j].abs().max(1.0);
                    let mut up = m.clone();
                    let mut dn = m.clone();
                    up[j] += step;
                    dn[j] -= step;
                    let fd = (f.value(&up) - f.value(&dn)) / (2.0 * step);
                    assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1.0), "{f:?} grad");
                    let gu = f.gradient(&up);
                    let gd = f.gradient(&dn);
                    for u in 0..l {
                        let fd = (gu[u] - gd[u]) / (2.0 * step);
                        assert!((fd - h[u * l + j]).abs() <= 1e-6 * h[u * l + j].abs().max(1.0), "{f:?} hess");
                    }
                }
            }
        }
    }

    #[test]
    fn degenerate_and_mismatched_observables_are_rejected() {
        let s = Arc::new(SpinSpace::ising());
        let flat = Observables::scalar(vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            Interaction::new(s.clone(), flat, Arc::new(PSpin { beta: 1.0, p: 2 })),
            Err(Error::DegenerateObservable(0))
        ));
        let g = s.coordinate_observables();
        assert!(Interaction::new(s, g, Arc::new(QuadraticCoupling { beta: 1.0, dim: 2 })).is_err());
    }

    #[test]
    fn too_few_probes() {
        assert!(matches!(compute_constants(&ising(1.0, 2), 10, 0), Err(Error::InvalidParameter(_))));
    }
}
