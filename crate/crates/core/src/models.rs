//! Presets with closed forms: Ising p-spin under spin flips, mean-field
//! rotators under Brownian motion on S^{q-1}, and coarse-graining setups.

use std::sync::Arc;

use serde::Serialize;

use crate::cflm::TwoLayerModel;
use crate::error::{Error, Result};
use crate::gibbs::Certificate;
use crate::interaction::{ConstantsProvenance, Interaction, InteractionConstants, PSpin, QuadraticCoupling};
use crate::kernels::{
    circle_heat_kernel, coarse_grain_kernel, min_spread, sphere_heat_kernel, spin_flip_field, spin_flip_kernel, Kernel,
    Partition,
};
use crate::spinspace::{make_circle, make_sphere, Measure, SpinSpace};

/// Smallest spin-flip time accepted by the Ising preset.
pub const ISING_T_MIN: f64 = 1e-6;

/// Ising p-spin F(m) = -(β/p) m^p under rate-one spin flips for time t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IsingPSpin {
    pub beta: f64,
    pub p: u32,
    pub t: f64,
    h_t: f64,
}

impl IsingPSpin {
    pub fn new(beta: f64, p: u32, t: f64) -> Result<Self> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!("beta must be >= 0, got {beta}")));
        }
        if p < 1 {
            return Err(Error::InvalidParameter("p must be >= 1".into()));
        }
        if !(t >= ISING_T_MIN) || !t.is_finite() {
            return Err(Error::InvalidParameter(format!("t must be >= {ISING_T_MIN}, got {t}")));
        }
        Ok(Self { beta, p, t, h_t: spin_flip_field(t)? })
    }

    pub fn h_t(&self) -> f64 {
        self.h_t
    }

    fn field(&self, m: f64) -> f64 {
        self.beta * m.powi(self.p as i32 - 1)
    }

    /// Ψ_τ(m′) = ((p-1)β/p) m′^p - (1+τ)/2 log cosh(βm′^{p-1} + h_t)
    ///           - (1-τ)/2 log cosh(βm′^{p-1} - h_t) + log(2 cosh h_t).
    pub fn psi_tau(&self, m: f64, tau: f64) -> f64 {
        let (b, h, p) = (self.field(m), self.h_t, self.p as f64);
        (p - 1.0) * self.beta / p * m.powi(self.p as i32)
            - (1.0 + tau) / 2.0 * log_cosh(b + h)
            - (1.0 - tau) / 2.0 * log_cosh(b - h)
            + std::f64::consts::LN_2
            + log_cosh(h)
    }

    /// (1+τ)/2 tanh(βm′^{p-1} + h_t) + (1-τ)/2 tanh(βm′^{p-1} - h_t).
    pub fn mf_rhs(&self, m: f64, tau: f64) -> f64 {
        let b = self.field(m);
        (1.0 + tau) / 2.0 * (b + self.h_t).tanh() + (1.0 - tau) / 2.0 * (b - self.h_t).tanh()
    }

    /// m′ - mf_rhs(m′, τ). dΨ_τ/dm′ = (p-1)β m′^{p-2} times this.
    pub fn stationarity_residual(&self, m: f64, tau: f64) -> f64 {
        m - self.mf_rhs(m, tau)
    }

    /// dΨ_τ/dm′.
    pub fn psi_tau_derivative(&self, m: f64, tau: f64) -> f64 {
        if self.p < 2 {
            return 0.0;
        }
        (self.p - 1) as f64 * self.beta * m.powi(self.p as i32 - 2) * self.stationarity_residual(m, tau)
    }

    pub fn exact_constants(&self) -> InteractionConstants {
        let hess = if self.p >= 2 { self.beta * (self.p - 1) as f64 } else { 0.0 };
        InteractionConstants::exact(2.0, 1.0, hess, 2.0 * self.beta)
    }

    /// ρ_α(k) = (4 / (e^{2|h_t|} + 1))^{1/2}.
    pub fn rho_alpha_k(&self) -> f64 {
        (4.0 / ((2.0 * self.h_t.abs()).exp() + 1.0)).sqrt()
    }

    pub fn certificate(&self) -> Certificate {
        Certificate::from_parts(
            self.exact_constants().c_of_f_g,
            self.rho_alpha_k(),
            1.0,
            ConstantsProvenance::ExactClosedForm,
            self.describe(),
        )
    }

    pub fn describe(&self) -> String {
        format!("ising(beta={}, p={}, t={})", self.beta, self.p, self.t)
    }

    pub fn kernel(&self) -> Result<Kernel> {
        spin_flip_kernel(self.t)
    }

    pub fn interaction(&self, space: Arc<SpinSpace>) -> Result<Interaction> {
        Interaction::on_coordinates(space, Arc::new(PSpin { beta: self.beta, p: self.p }))
    }

    /// The two-layer model with its exact contraction constant attached.
    pub fn model(&self) -> Result<TwoLayerModel> {
        let k = self.kernel()?;
        let inter = self.interaction(k.space_s().clone())?;
        Ok(TwoLayerModel::new(inter, k)?.with_contraction(self.certificate().l))
    }

    /// ν′ on {+1, -1} with ν′(+1) = (1+τ)/2.
    pub fn nu_prime(&self, model: &TwoLayerModel, tau: f64) -> Result<Measure> {
        ising_nu_prime(model.space_sp().clone(), tau)
    }
}

/// ν′(+1) = (1+τ)/2 on the Ising space.
pub fn ising_nu_prime(space: Arc<SpinSpace>, tau: f64) -> Result<Measure> {
    if !(-1.0..=1.0).contains(&tau) {
        return Err(Error::InvalidParameter(format!("tau must lie in [-1,1], got {tau}")));
    }
    Measure::new(space, vec![(1.0 + tau) / 2.0, (1.0 - tau) / 2.0])
}

/// Uniform grid of n points on [-1, 1].
pub fn tau_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n)
            .map(|i| {
                let x = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
                // Symmetric grids hit 0 exactly.
                if 2 * i + 1 == n {
                    0.0
                } else {
                    x
                }
            })
            .collect(),
    }
}

/// log cosh x without overflow.
fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// One-parameter family ν′_τ ∝ α′(η)(1 + τ x̂(η)) through α′ at τ = 0, where
/// x̂ is the first node coordinate, centered under α′ and scaled to max |x̂| = 1.
/// On the Ising space this is ν′(+1) = (1+τ)/2.
pub fn tilted_nu_prime(space: Arc<SpinSpace>, tau: f64) -> Result<Measure> {
    if !(-1.0..=1.0).contains(&tau) {
        return Err(Error::InvalidParameter(format!("tau must lie in [-1,1], got {tau}")));
    }
    let a = space.weights();
    let x: Vec<f64> = space.nodes().iter().map(|n| n[0]).collect();
    let mean: f64 = x.iter().zip(a).map(|(x, w)| x * w).sum();
    let scale = x.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    let w = x.iter().zip(a).map(|(v, w)| if scale > 0.0 { w * (1.0 + tau * (v - mean) / scale) } else { *w }).collect();
    Measure::new(space, w)
}

/// Mean-field rotators F(m) = -(β/2)|m|² on S^{q-1} under Brownian motion for time t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rotator {
    pub q: u32,
    pub beta: f64,
    pub t: f64,
}

impl Rotator {
    pub fn new(q: u32, beta: f64, t: f64) -> Result<Self> {
        if q < 2 {
            return Err(Error::InvalidParameter(format!("q must be >= 2, got {q}")));
        }
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!("beta must be >= 0, got {beta}")));
        }
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidParameter(format!("t must be positive, got {t}")));
        }
        Ok(Self { q, beta, t })
    }

    /// δ(g) = 2q, ‖g‖ = 1, ‖∂²F‖ = β, δ̂ = 2β, C = 4qβe^β.
    pub fn exact_constants(&self) -> InteractionConstants {
        InteractionConstants::exact(2.0 * self.q as f64, 1.0, self.beta, 2.0 * self.beta)
    }

    /// √2 (1 - e^{-(q-1)t})^{1/2}.
    pub fn rho_alpha_k(&self) -> f64 {
        2f64.sqrt() * (-(-((self.q - 1) as f64) * self.t).exp_m1()).sqrt()
    }

    pub fn rho_alpha(&self) -> f64 {
        2f64.sqrt()
    }

    /// L(q,β,t) = 4√2 qβe^β (1 - e^{-(q-1)t})^{1/2}.
    pub fn lipschitz(&self) -> f64 {
        self.exact_constants().c_of_f_g * self.rho_alpha_k()
    }

    pub fn certificate(&self) -> Certificate {
        Certificate::from_parts(
            self.exact_constants().c_of_f_g,
            self.rho_alpha_k(),
            self.rho_alpha(),
            ConstantsProvenance::ExactClosedForm,
            self.describe(),
        )
    }

    pub fn describe(&self) -> String {
        format!("rotator(q={}, beta={}, t={})", self.q, self.beta, self.t)
    }

    /// Quadrature grid: `resolution[0]` circle nodes for q = 2, or
    /// (n_polar, n_azimuth) for q = 3.
    pub fn grid(&self, resolution: &[usize]) -> Result<SpinSpace> {
        match (self.q, resolution) {
            (2, [n]) => make_circle(*n),
            (3, [np, na]) => make_sphere(*np, *na),
            (2 | 3, _) => Err(Error::InvalidParameter(format!("bad grid resolution {resolution:?} for q={}", self.q))),
            (q, _) => Err(Error::GridUnsupported(format!("rotator grids exist for q in {{2,3}}, got q={q}"))),
        }
    }

    pub fn kernel(&self, space: Arc<SpinSpace>) -> Result<Kernel> {
        match self.q {
            2 => circle_heat_kernel(space, self.t),
            3 => sphere_heat_kernel(space, self.t),
            q => Err(Error::GridUnsupported(format!("heat kernel for q={q}"))),
        }
    }

    pub fn interaction(&self, space: Arc<SpinSpace>) -> Result<Interaction> {
        Interaction::on_coordinates(space, Arc::new(QuadraticCoupling { beta: self.beta, dim: self.q as usize }))
    }

    /// Grid model with the closed-form L attached.
    pub fn model(&self, resolution: &[usize]) -> Result<TwoLayerModel> {
        let space = Arc::new(self.grid(resolution)?);
        let k = self.kernel(space.clone())?;
        Ok(TwoLayerModel::new(self.interaction(space)?, k)?.with_contraction(self.lipschitz()))
    }
}

/// Coarse-graining of a spin space by a partition, with a given interaction.
#[derive(Debug, Clone)]
pub struct CoarseGrainPreset {
    pub interaction: Interaction,
    pub partition: Partition,
    pub kernel: Kernel,
}

impl CoarseGrainPreset {
    pub fn new(interaction: Interaction, partition: Partition) -> Result<Self> {
        let kernel = coarse_grain_kernel(interaction.space().clone(), &partition)?;
        Ok(Self { interaction, partition, kernel })
    }

    /// max_η α(S_η)^{-1/2} min_{a ∈ S_η} (Σ_{σ ∈ S_η} α(σ) d²(σ,a))^{1/2}.
    pub fn class_spread(&self) -> f64 {
        let space = self.interaction.space();
        let a = space.weights();
        self.partition
            .members()
            .iter()
            .map(|members| {
                let mass: f64 = members.iter().map(|&i| a[i]).sum();
                let class = self.partition.class_of()[members[0]];
                let inside = |i: usize| if self.partition.class_of()[i] == class { a[i] } else { 0.0 };
                min_spread(space, inside, members.iter().copied()) / mass.sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// L(F,g,T) = C(F,g) times the class spread.
    pub fn lipschitz(&self, constants: &InteractionConstants) -> f64 {
        constants.c_of_f_g * self.class_spread()
    }

    pub fn model(&self, constants: &InteractionConstants) -> Result<TwoLayerModel> {
        Ok(TwoLayerModel::new(self.interaction.clone(), self.kernel.clone())?
            .with_contraction(self.lipschitz(constants)))
    }
}

/// A named preset, as addressed from the command line.
#[derive(Debug, Clone)]
pub enum ModelPreset {
    Ising(IsingPSpin),
    Rotator(Rotator),
    Coarse(CoarseGrainPreset),
}

impl ModelPreset {
    pub fn name(&self) -> &'static str {
        match self {
            ModelPreset::Ising(_) => "ising",
            ModelPreset::Rotator(_) => "rotator",
            ModelPreset::Coarse(_) => "coarse",
        }
    }

    pub fn exact_constants(&self) -> Option<InteractionConstants> {
        match self {
            ModelPreset::Ising(m) => Some(m.exact_constants()),
            ModelPreset::Rotator(m) => Some(m.exact_constants()),
            ModelPreset::Coarse(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cflm::psi;
    use crate::cflm::ConstrainedState;
    use crate::gibbs::certify;
    use crate::interaction::compute_constants;
    use std::f64::consts::LN_2;

    #[test]
    fn ising_closed_forms() {
        let m = IsingPSpin::new(0.0, 2, LN_2 / 2.0).unwrap();
        for x in [-0.7, 0.0, 0.4] {
            assert!((m.mf_rhs(x, 0.5) + 0.25).abs() < 1e-15);
        }
        let m = IsingPSpin::new(1.3, 3, 0.4).unwrap();
        for x in [-0.9, -0.2, 0.3, 0.8] {
            for t in [-0.6, 0.0, 0.5] {
                assert!((m.psi_tau(x, t) - m.psi_tau(-x, -t)).abs() < 1e-14 || m.p % 2 == 1);
            }
        }
        let m = IsingPSpin::new(1.3, 2, 0.4).unwrap();
        for x in [-0.9, -0.2, 0.3, 0.8] {
            for t in [-0.6, 0.0, 0.5] {
                assert!((m.psi_tau(x, t) - m.psi_tau(-x, -t)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn psi_tau_derivative_matches_finite_difference() {
        for p in [2, 3, 4] {
            let m = IsingPSpin::new(1.1, p, 0.3).unwrap();
            for x in [-0.8, -0.3, 0.25, 0.9] {
                let fd = (m.psi_tau(x + 1e-6, 0.4) - m.psi_tau(x - 1e-6, 0.4)) / 2e-6;
                assert!((fd - m.psi_tau_derivative(x, 0.4)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn generic_psi_differs_from_closed_form_by_a_constant() {
        for p in [2u32, 3, 4] {
            let pre = IsingPSpin::new(0.9, p, 0.3).unwrap();
            let model = pre.model().unwrap();
            let nu = pre.nu_prime(&model, 0.35).unwrap();
            let diffs: Vec<f64> = (0..41)
                .map(|i| {
                    let x = -1.0 + 0.05 * i as f64;
                    let st = ConstrainedState::new(
                        model.space_s().clone(),
                        nu.clone(),
                        vec![1.0 + x, 1.0 - x, 1.0 + x, 1.0 - x],
                    )
                    .unwrap();
                    psi(&model, &st).unwrap() - pre.psi_tau(x, 0.35)
                })
                .collect();
            for d in &diffs {
                assert!((d - diffs[0]).abs() < 1e-10);
            }
            assert!((diffs[0] + LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn ising_exact_constants_match_sampling() {
        for p in [2u32, 3, 4] {
            let pre = IsingPSpin::new(0.7, p, 0.3).unwrap();
            let model = pre.model().unwrap();
            let c = compute_constants(model.interaction(), 4096, 0).unwrap();
            let e = pre.exact_constants();
            assert!((c.hess_max - e.hess_max).abs() < 1e-9);
            assert!((c.delta_hat_phi1 - e.delta_hat_phi1).abs() < 1e-9);
            assert!((c.c_of_f_g - e.c_of_f_g).abs() < 1e-9);
            let cert = certify(&c, model.kernel(), "x");
            assert!((cert.l - pre.certificate().l).abs() < 1e-9);
        }
    }

    #[test]
    fn rotator_lipschitz_examples() {
        let l = Rotator::new(2, 0.2, 0.1).unwrap().lipschitz();
        let want = 4.0 * 2f64.sqrt() * 2.0 * 0.2 * 0.2f64.exp() * (1.0 - (-0.1f64).exp()).sqrt();
        assert!((l - want).abs() < 1e-14);
        assert!((l - 0.85259).abs() < 1e-4);
        let inf = Rotator::new(3, 0.3, 60.0).unwrap().lipschitz();
        assert!((inf - 4.0 * 2f64.sqrt() * 3.0 * 0.3 * 0.3f64.exp()).abs() < 1e-12);
        let base = Rotator::new(3, 0.3, 0.5).unwrap().lipschitz();
        assert!(Rotator::new(4, 0.3, 0.5).unwrap().lipschitz() > base);
        assert!(Rotator::new(3, 0.31, 0.5).unwrap().lipschitz() > base);
        assert!(Rotator::new(3, 0.3, 0.51).unwrap().lipschitz() > base);
    }

    #[test]
    fn rotator_grid_limits() {
        let r = Rotator::new(5, 0.2, 0.1).unwrap();
        assert!(matches!(r.model(&[64]), Err(Error::GridUnsupported(_))));
        assert!(r.certificate().l > 0.0);
        assert!(Rotator::new(1, 0.2, 0.1).is_err());
    }

    #[test]
    fn rotator_grid_certificate_tracks_closed_form() {
        let r = Rotator::new(2, 0.2, 0.1).unwrap();
        let model = r.model(&[128]).unwrap();
        let c = compute_constants(model.interaction(), 4096, 0).unwrap();
        let cert = certify(&c, model.kernel(), r.describe());
        assert!((cert.l - r.lipschitz()).abs() < 0.02 * r.lipschitz());
    }

    #[test]
    fn coarse_preset_matches_certificate() {
        let space = Arc::new(make_circle(128).unwrap());
        let inter = Rotator::new(2, 0.3, 1.0).unwrap().interaction(space).unwrap();
        let c = compute_constants(&inter, 4096, 0).unwrap();
        let pre = CoarseGrainPreset::new(inter, Partition::arcs(128, 16).unwrap()).unwrap();
        let cert = certify(&c, &pre.kernel, "coarse");
        assert!((pre.lipschitz(&c) - cert.l).abs() < 1e-6);

        let single = CoarseGrainPreset::new(pre.interaction.clone(), Partition::new((0..128).collect())).unwrap();
        assert_eq!(single.lipschitz(&c), 0.0);
    }

    #[test]
    fn tilt_family() {
        let s = Arc::new(SpinSpace::ising());
        let nu = tilted_nu_prime(s.clone(), 0.4).unwrap();
        assert!((nu.weights()[0] - 0.7).abs() < 1e-15);
        let c = Arc::new(make_circle(16).unwrap());
        assert_eq!(tilted_nu_prime(c.clone(), 0.0).unwrap().weights(), c.weights());
        assert!(tilted_nu_prime(c, 1.0).unwrap().weights().iter().all(|w| *w >= 0.0));
    }

    #[test]
    fn tau_grid_is_symmetric() {
        let g = tau_grid(101);
        assert_eq!(g[50], 0.0);
        assert_eq!((g[0], g[100]), (-1.0, 1.0));
        for i in 0..101 {
            assert!((g[i] + g[100 - i]).abs() < 1e-15);
        }
    }
}
