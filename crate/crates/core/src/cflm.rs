//! The constrained first-layer model.
//!
//! For a fixed second-layer measure ν′ the first layer is described by a
//! conditional α-density f(σ|η). The constrained kernel
//!
//! f′(σ|η) = e^{-Φ⁽¹⁾(π₁ν̃, δ_σ)} k(σ,η) / Z_η
//!
//! maps such densities to themselves; its fixed points are the consistent
//! measures, and among them the minimizers of Ψ_ν′ select the limiting
//! conditional distribution of the transformed system.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interaction::{dot, Interaction};
use crate::kernels::Kernel;
use crate::parallel::par_map;
use crate::spinspace::{check_space, relative_entropy, variational_distance, Measure, SpinSpace};

/// Interaction on S together with the kernel S → S′.
#[derive(Debug, Clone)]
pub struct TwoLayerModel {
    interaction: Interaction,
    kernel: Kernel,
    contraction: Option<f64>,
}

impl TwoLayerModel {
    pub fn new(interaction: Interaction, kernel: Kernel) -> Result<Self> {
        check_space(interaction.space(), kernel.space_s())?;
        Ok(Self { interaction, kernel, contraction: None })
    }

    /// Attaches the contraction constant L, which decides whether a single
    /// cluster found by multistart can be trusted as the only one.
    pub fn with_contraction(mut self, l: f64) -> Self {
        self.contraction = Some(l);
        self
    }

    pub fn interaction(&self) -> &Interaction {
        &self.interaction
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn contraction(&self) -> Option<f64> {
        self.contraction
    }

    pub fn space_s(&self) -> &Arc<SpinSpace> {
        self.kernel.space_s()
    }

    pub fn space_sp(&self) -> &Arc<SpinSpace> {
        self.kernel.space_sp()
    }

    /// True unless a contraction constant below one has been attached.
    pub fn search_incomplete_possible(&self) -> bool {
        self.contraction.is_none_or(|l| !(l < 1.0))
    }
}

/// An element of M_ν′: the second marginal ν′ and the conditional α-density
/// f(σ|η), stored as `f[η * n_s + σ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedState {
    space_s: Arc<SpinSpace>,
    nu_prime: Measure,
    density: Vec<f64>,
}

impl ConstrainedState {
    /// Validates shapes and renormalizes each row to Σ_σ α(σ) f(σ|η) = 1.
    pub fn new(space_s: Arc<SpinSpace>, nu_prime: Measure, mut density: Vec<f64>) -> Result<Self> {
        let (ns, nsp) = (space_s.len(), nu_prime.len());
        if density.len() != ns * nsp {
            return Err(Error::InvalidParameter(format!("density needs {} entries", ns * nsp)));
        }
        if density.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter("density entries must be finite and nonnegative".into()));
        }
        for e in 0..nsp {
            let row = &mut density[e * ns..(e + 1) * ns];
            let mass: f64 = row.iter().zip(space_s.weights()).map(|(f, a)| f * a).sum();
            if !(mass > 0.0) {
                if nu_prime.weights()[e] > 0.0 {
                    return Err(Error::InvalidParameter(format!("row {e} has zero mass")));
                }
                continue;
            }
            row.iter_mut().for_each(|f| *f /= mass);
        }
        Ok(Self { space_s, nu_prime, density })
    }

    /// f ≡ 1, i.e. ν̃ = α ⊗ ν′.
    pub fn flat(model: &TwoLayerModel, nu_prime: Measure) -> Result<Self> {
        check_space(model.space_sp(), nu_prime.space())?;
        let n = model.space_s().len() * nu_prime.len();
        Ok(Self { space_s: model.space_s().clone(), nu_prime, density: vec![1.0; n] })
    }

    /// f(σ|η) = k(σ,η).
    pub fn from_kernel(model: &TwoLayerModel, nu_prime: Measure) -> Result<Self> {
        check_space(model.space_sp(), nu_prime.space())?;
        let density = (0..nu_prime.len()).flat_map(|e| model.kernel().column(e).iter().copied()).collect();
        Ok(Self { space_s: model.space_s().clone(), nu_prime, density })
    }

    /// Independent exp(U[-2,2]) entries, rows renormalized.
    pub fn random<R: Rng + ?Sized>(model: &TwoLayerModel, nu_prime: Measure, rng: &mut R) -> Result<Self> {
        check_space(model.space_sp(), nu_prime.space())?;
        let n = model.space_s().len() * nu_prime.len();
        let density = (0..n).map(|_| rng.gen_range(-2.0f64..=2.0).exp()).collect();
        Self::new(model.space_s().clone(), nu_prime, density)
    }

    pub fn nu_prime(&self) -> &Measure {
        &self.nu_prime
    }

    pub fn space_s(&self) -> &Arc<SpinSpace> {
        &self.space_s
    }

    /// f(·|η).
    pub fn row(&self, eta: usize) -> &[f64] {
        let n = self.space_s.len();
        &self.density[eta * n..(eta + 1) * n]
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// π₁ν̃(σ) = α(σ) Σ_η ν′(η) f(σ|η).
    pub fn first_marginal(&self) -> Measure {
        let a = self.space_s.weights();
        let mut w = vec![0.0; a.len()];
        for (e, &nu) in self.nu_prime.weights().iter().enumerate() {
            if nu > 0.0 {
                for (s, f) in self.row(e).iter().enumerate() {
                    w[s] += nu * f;
                }
            }
        }
        for (x, a) in w.iter_mut().zip(a) {
            *x *= a;
        }
        Measure::new(self.space_s.clone(), w).expect("first marginal of a valid state")
    }

    /// Variational distance between the joint measures ν̃ on S × S′.
    pub fn joint_distance(&self, other: &ConstrainedState) -> Result<f64> {
        check_space(self.nu_prime.space(), other.nu_prime.space())?;
        let a = self.space_s.weights();
        let mut d = 0.0;
        for e in 0..self.nu_prime.len() {
            let (p, q) = (self.nu_prime.weights()[e], other.nu_prime.weights()[e]);
            if p == 0.0 && q == 0.0 {
                continue;
            }
            for (s, (x, y)) in self.row(e).iter().zip(other.row(e)).enumerate() {
                d += a[s] * (p * x - q * y).abs();
            }
        }
        Ok(0.5 * d)
    }

    /// (1 - t) self + t other, row by row; stays in M_ν′.
    fn blend(&self, other: &ConstrainedState, t: f64) -> ConstrainedState {
        let density = self.density.iter().zip(&other.density).map(|(x, y)| (1.0 - t) * x + t * y).collect();
        ConstrainedState { space_s: self.space_s.clone(), nu_prime: self.nu_prime.clone(), density }
    }

    /// Dense CSV `eta_node,sigma_node,f`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eta_node,sigma_node,f\n");
        let n = self.space_s.len();
        for (i, f) in self.density.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", i / n, i % n, f));
        }
        out
    }
}

/// Local field and log-normalizers at the first marginal of a state.
struct Field {
    m: Vec<f64>,
    phi1: Vec<f64>,
    log_z: Vec<f64>,
}

fn log_normalizers(model: &TwoLayerModel, phi1: &[f64]) -> Result<Vec<f64>> {
    let a = model.space_s().weights();
    (0..model.space_sp().len())
        .map(|e| {
            let lk = model.kernel().log_column(e);
            let top = lk
                .iter()
                .zip(phi1)
                .filter(|(l, _)| l.is_finite())
                .map(|(l, p)| l - p)
                .fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = lk
                .iter()
                .zip(phi1)
                .zip(a)
                .filter(|((l, _), _)| l.is_finite())
                .map(|((l, p), w)| w * (l - p - top).exp())
                .sum();
            if !(z > 0.0) || !z.is_finite() || !top.is_finite() {
                return Err(Error::NumericalUnderflow(e));
            }
            Ok(top + z.ln())
        })
        .collect()
}

fn field(model: &TwoLayerModel, state: &ConstrainedState) -> Result<Field> {
    check_space(model.space_sp(), state.nu_prime.space())?;
    let m = model.interaction().moments(&state.first_marginal())?;
    let phi1 = model.interaction().local_field(&m);
    let log_z = log_normalizers(model, &phi1)?;
    Ok(Field { m, phi1, log_z })
}

/// One application of the constrained kernel. Rows with ν′(η) = 0 are updated
/// too; they never enter any sum.
pub fn cflpk_apply(model: &TwoLayerModel, state: &ConstrainedState) -> Result<ConstrainedState> {
    let fld = field(model, state)?;
    Ok(apply_with(model, state, &fld))
}

fn apply_with(model: &TwoLayerModel, state: &ConstrainedState, fld: &Field) -> ConstrainedState {
    let ns = model.space_s().len();
    let mut density = vec![0.0; state.density.len()];
    for (e, lz) in fld.log_z.iter().enumerate() {
        let lk = model.kernel().log_column(e);
        for s in 0..ns {
            if lk[s].is_finite() {
                density[e * ns + s] = (lk[s] - fld.phi1[s] - lz).exp();
            }
        }
    }
    ConstrainedState { space_s: state.space_s.clone(), nu_prime: state.nu_prime.clone(), density }
}

/// Picard iteration controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 100_000, damping: 1.0 }
    }
}

impl SolverParams {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParameter(format!("damping must lie in (0,1], got {}", self.damping)));
        }
        Ok(())
    }
}

/// Consecutive distance increases that trigger damping halving.
pub const OSCILLATION_WINDOW: usize = 50;

#[derive(Debug, Clone)]
pub struct FixedPointReport {
    pub state: ConstrainedState,
    /// Applications that moved the state by at least `tol`.
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub psi_value: f64,
    pub j_value: f64,
    pub magnetization: Vec<f64>,
    pub final_damping: f64,
    pub damping_halvings: usize,
}

/// Iterates f ← (1-d) f + d·γ(f) until successive joint states differ by less
/// than `tol` and the consistency residual is at most `tol`.
pub fn fixed_point(model: &TwoLayerModel, start: &ConstrainedState, params: &SolverParams) -> Result<FixedPointReport> {
    params.validate()?;
    let mut state = start.clone();
    let mut damping = params.damping;
    let mut halvings = 0;
    let mut prev_dist = f64::INFINITY;
    let mut rising = 0;
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..params.max_iter {
        let fld = field(model, &state)?;
        let image = apply_with(model, &state, &fld);
        let next = if damping < 1.0 { state.blend(&image, damping) } else { image };
        let dist = state.joint_distance(&next)?;
        if dist < params.tol {
            let residual = residual_with(model, &next, &field(model, &next)?);
            state = next;
            if residual <= params.tol {
                converged = true;
                break;
            }
        } else {
            state = next;
        }
        iterations += 1;
        if dist > prev_dist {
            rising += 1;
            if rising >= OSCILLATION_WINDOW {
                damping *= 0.5;
                halvings += 1;
                rising = 0;
            }
        } else {
            rising = 0;
        }
        prev_dist = dist;
    }
    let fld = field(model, &state)?;
    let residual = residual_with(model, &state, &fld);
    Ok(FixedPointReport {
        psi_value: psi_with(model, &state, &fld),
        j_value: j_constrained(model, &state)?,
        magnetization: fld.m,
        residual,
        converged,
        iterations,
        state,
        final_damping: damping,
        damping_halvings: halvings,
    })
}

/// Multistart and clustering controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    pub n_starts: usize,
    pub seed: u64,
    pub cluster_tol: f64,
    pub tie_tol: f64,
    pub solver: SolverParams,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self { n_starts: 32, seed: 0, cluster_tol: 1e-8, tie_tol: 1e-9, solver: SolverParams::default() }
    }
}

/// Size of the random kick used to probe the stability of a fixed point.
pub const STABILITY_KICK: f64 = 1e-4;

/// Converged fixed points within `cluster_tol` of each other.
#[derive(Debug, Clone)]
pub struct Cluster {
    pub report: FixedPointReport,
    pub members: usize,
    /// Iteration from a small random kick returns to this point.
    pub stable: bool,
}

impl Cluster {
    pub fn psi(&self) -> f64 {
        self.report.psi_value
    }
}

#[derive(Debug, Clone)]
pub struct MultistartResult {
    /// Stable clusters sorted by Ψ ascending.
    pub clusters: Vec<Cluster>,
    /// Fixed points that a small kick moves away from (saddles, maxima of Ψ).
    pub unstable: Vec<Cluster>,
    pub runs: usize,
    pub unconverged: usize,
    /// No stable cluster was found, so unstable ones were kept as clusters.
    pub stability_unresolved: bool,
}

impl MultistartResult {
    /// Clusters whose Ψ is within `tie_tol` of the smallest.
    pub fn psi_minimal(&self, tie_tol: f64) -> Vec<&Cluster> {
        match self.clusters.first() {
            None => Vec::new(),
            Some(best) => self.clusters.iter().filter(|c| c.psi() - best.psi() <= tie_tol).collect(),
        }
    }

    /// Ψ difference between the two best clusters; +∞ with fewer than two.
    pub fn psi_gap(&self) -> f64 {
        if self.clusters.len() < 2 {
            f64::INFINITY
        } else {
            self.clusters[1].psi() - self.clusters[0].psi()
        }
    }
}

/// Runs [`fixed_point`] from the flat start, the kernel start and `n_starts`
/// seeded random densities, clusters the converged states by joint
/// variational distance and classifies each cluster by a kick test.
pub fn multistart(model: &TwoLayerModel, nu_prime: &Measure, params: &SearchParams) -> Result<MultistartResult> {
    if params.n_starts < 1 {
        return Err(Error::InvalidParameter("n_starts must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut starts =
        vec![ConstrainedState::flat(model, nu_prime.clone())?, ConstrainedState::from_kernel(model, nu_prime.clone())?];
    for _ in 0..params.n_starts {
        starts.push(ConstrainedState::random(model, nu_prime.clone(), &mut rng)?);
    }
    let kicks: Vec<ConstrainedState> = (0..starts.len())
        .map(|_| ConstrainedState::random(model, nu_prime.clone(), &mut rng))
        .collect::<Result<_>>()?;

    let runs = par_map(&starts, |s| fixed_point(model, s, &params.solver));
    let mut groups: Vec<Cluster> = Vec::new();
    let mut unconverged = 0;
    for r in runs {
        let r = r?;
        if !r.converged {
            unconverged += 1;
            continue;
        }
        let mut joined = false;
        for g in groups.iter_mut() {
            if g.report.state.joint_distance(&r.state)? < params.cluster_tol {
                g.members += 1;
                joined = true;
                break;
            }
        }
        if !joined {
            groups.push(Cluster { report: r, members: 1, stable: true });
        }
    }

    let stability = par_map(&groups.iter().zip(&kicks).collect::<Vec<_>>(), |(g, kick)| {
        let start = g.report.state.blend(kick, STABILITY_KICK);
        let back = fixed_point(model, &start, &params.solver)?;
        Ok::<bool, Error>(back.converged && back.state.joint_distance(&g.report.state)? < params.cluster_tol)
    });
    for (g, s) in groups.iter_mut().zip(stability) {
        g.stable = s?;
    }
    let (mut clusters, mut unstable): (Vec<Cluster>, Vec<Cluster>) = groups.into_iter().partition(|c| c.stable);
    let stability_unresolved = clusters.is_empty() && !unstable.is_empty();
    if stability_unresolved {
        clusters = std::mem::take(&mut unstable);
    }
    clusters.sort_by(|a, b| a.psi().total_cmp(&b.psi()));
    unstable.sort_by(|a, b| a.psi().total_cmp(&b.psi()));
    Ok(MultistartResult { clusters, unstable, runs: starts.len(), unconverged, stability_unresolved })
}

fn residual_with(model: &TwoLayerModel, state: &ConstrainedState, fld: &Field) -> f64 {
    let mut sup: f64 = 0.0;
    for (e, &nu) in state.nu_prime.weights().iter().enumerate() {
        if nu <= 0.0 {
            continue;
        }
        let lk = model.kernel().log_column(e);
        for (s, &f) in state.row(e).iter().enumerate() {
            if !lk[s].is_finite() {
                continue;
            }
            if f <= 0.0 {
                return f64::INFINITY;
            }
            sup = sup.max((fld.phi1[s] - lk[s] + f.ln() + fld.log_z[e]).abs());
        }
    }
    sup
}

/// sup |Φ⁽¹⁾(π₁ν̃,δ_σ) - log k(σ,η) + log f(σ|η) + log Z_η| over ν′(η) > 0,
/// k(σ,η) > 0. Zero exactly on consistent states.
pub fn consistency_residual(model: &TwoLayerModel, state: &ConstrainedState) -> Result<f64> {
    Ok(residual_with(model, state, &field(model, state)?))
}

/// Σ_η ν′(η) Σ_σ α(σ) f w(σ,η), with 0·w = 0 where f vanishes.
fn joint_expectation(model: &TwoLayerModel, state: &ConstrainedState, w: impl Fn(usize, usize, f64) -> f64) -> f64 {
    let a = model.space_s().weights();
    let mut acc = 0.0;
    for (e, &nu) in state.nu_prime.weights().iter().enumerate() {
        if nu <= 0.0 {
            continue;
        }
        let mut row = 0.0;
        for (s, &f) in state.row(e).iter().enumerate() {
            if f > 0.0 {
                row += a[s] * f * w(e, s, f);
            }
        }
        acc += nu * row;
    }
    acc
}

/// S(ν̃ | α ⊗ ν′).
pub fn joint_relative_entropy(model: &TwoLayerModel, state: &ConstrainedState) -> Result<f64> {
    check_space(model.space_sp(), state.nu_prime.space())?;
    Ok(joint_expectation(model, state, |_, _, f| f.ln()))
}

/// J_ν′(ν̃) = S(ν̃ | α ⊗ ν′) + Φ(π₁ν̃) - ν̃[log k].
pub fn j_constrained(model: &TwoLayerModel, state: &ConstrainedState) -> Result<f64> {
    check_space(model.space_sp(), state.nu_prime.space())?;
    let phi = model.interaction().phi(&state.first_marginal())?;
    let k = model.kernel();
    Ok(joint_expectation(model, state, |e, s, f| f.ln() - k.log_column(e)[s]) + phi)
}

fn psi_with(model: &TwoLayerModel, state: &ConstrainedState, fld: &Field) -> f64 {
    let f = model.interaction().function();
    f.value(&fld.m) - dot(&f.gradient(&fld.m), &fld.m) - weighted_log_z(state, fld)
}

fn weighted_log_z(state: &ConstrainedState, fld: &Field) -> f64 {
    state.nu_prime.weights().iter().zip(&fld.log_z).filter(|(nu, _)| **nu > 0.0).map(|(nu, lz)| nu * lz).sum()
}

/// Ψ_ν′ = Φ(m) - Φ⁽¹⁾(π₁ν̃, π₁ν̃) - Σ_η ν′(η) log Z_η.
pub fn psi(model: &TwoLayerModel, state: &ConstrainedState) -> Result<f64> {
    Ok(psi_with(model, state, &field(model, state)?))
}

/// Ψ for a p-homogeneous F, with (1 - p)Φ(m) replacing the first two terms.
pub fn psi_homogeneous(model: &TwoLayerModel, state: &ConstrainedState) -> Result<f64> {
    let p = model.interaction().homogeneity_degree().ok_or(Error::NotHomogeneous)?;
    let fld = field(model, state)?;
    Ok((1.0 - p) * model.interaction().function().value(&fld.m) - weighted_log_z(state, &fld))
}

/// Right side of the variational identity for S(ν̃ | α ⊗ ν′), which holds with
/// equality on consistent states: -Φ⁽¹⁾(π₁ν̃,π₁ν̃) + ν̃[log k] - Σ ν′ log Z.
pub fn variational_rhs(model: &TwoLayerModel, state: &ConstrainedState) -> Result<f64> {
    let fld = field(model, state)?;
    let k = model.kernel();
    let nu_log_k = joint_expectation(model, state, |e, s, _| k.log_column(e)[s]);
    let grad = model.interaction().function().gradient(&fld.m);
    Ok(-dot(&grad, &fld.m) + nu_log_k - weighted_log_z(state, &fld))
}

/// Φ_k(ν′) together with the search that produced it.
#[derive(Debug, Clone)]
pub struct TransformedInteraction {
    pub phi_k: f64,
    pub search: MultistartResult,
    /// One cluster was found but L ≥ 1, so others may have been missed.
    pub lower_confidence: bool,
    pub search_incomplete_possible: bool,
}

/// Φ_k(ν′) = min over found clusters of Ψ_ν′.
pub fn transformed_interaction(
    model: &TwoLayerModel,
    nu_prime: &Measure,
    params: &SearchParams,
) -> Result<TransformedInteraction> {
    let search = multistart(model, nu_prime, params)?;
    let best = search.clusters.first().ok_or(Error::NoConsistentMeasure)?;
    let incomplete = model.search_incomplete_possible();
    Ok(TransformedInteraction {
        phi_k: best.psi(),
        lower_confidence: search.clusters.len() == 1 && incomplete,
        search_incomplete_possible: incomplete,
        search,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformedRate {
    /// J′ per grid point; the grid minimum is exactly zero.
    pub values: Vec<f64>,
    pub phi_k: Vec<f64>,
    pub entropy: Vec<f64>,
    pub constant: f64,
    pub search_incomplete_possible: bool,
}

/// J′(ν′) = S(ν′|α′) + Φ_k(ν′) - c over a grid, with c the grid minimum.
pub fn transformed_rate(model: &TwoLayerModel, grid: &[Measure], params: &SearchParams) -> Result<TransformedRate> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty nu' grid".into()));
    }
    let alpha_p = Measure::apriori(model.space_sp().clone());
    let rows = par_map(grid, |nu| -> Result<(f64, f64)> {
        let ti = transformed_interaction(model, nu, params)?;
        Ok((relative_entropy(nu, &alpha_p)?, ti.phi_k))
    });
    let rows: Vec<(f64, f64)> = rows.into_iter().collect::<Result<_>>()?;
    let constant = rows.iter().map(|(s, p)| s + p).fold(f64::INFINITY, f64::min);
    Ok(TransformedRate {
        values: rows.iter().map(|(s, p)| s + p - constant).collect(),
        entropy: rows.iter().map(|r| r.0).collect(),
        phi_k: rows.iter().map(|r| r.1).collect(),
        constant,
        search_incomplete_possible: model.search_incomplete_possible(),
    })
}

/// γ₁(dσ|ν) ∝ e^{-Φ⁽¹⁾(ν,δ_σ)} α(dσ), the single-site kernel of the untransformed system.
pub fn initial_gamma1(inter: &Interaction, nu: &Measure) -> Result<Measure> {
    let m = inter.moments(nu)?;
    Ok(gamma1_at(inter, &m))
}

fn gamma1_at(inter: &Interaction, m: &[f64]) -> Measure {
    let phi1 = inter.local_field(m);
    let lo = phi1.iter().copied().fold(f64::INFINITY, f64::min);
    let w = inter.space().weights().iter().zip(&phi1).map(|(a, p)| a * (lo - p).exp()).collect();
    Measure::new(inter.space().clone(), w).expect("positive weights")
}

/// A fixed point ν = γ₁(·|ν) of the initial system.
#[derive(Debug, Clone)]
pub struct InitialFixedPoint {
    pub measure: Measure,
    pub magnetization: Vec<f64>,
    /// S(ν|α) + Φ(ν).
    pub free_energy: f64,
    pub members: usize,
    pub stable: bool,
}

fn initial_iterate(inter: &Interaction, start: &Measure, params: &SolverParams) -> Result<Option<Measure>> {
    let mut nu = start.clone();
    for _ in 0..params.max_iter {
        let next = initial_gamma1(inter, &nu)?;
        let dist = variational_distance(&nu, &next)?;
        nu = next;
        if dist < params.tol {
            return Ok(Some(nu));
        }
    }
    Ok(None)
}

/// Fixed points of γ₁ from the a-priori start and `n_starts` random measures,
/// clustered and kick-tested like [`multistart`], sorted by free energy.
pub fn initial_fixed_points(inter: &Interaction, params: &SearchParams) -> Result<Vec<InitialFixedPoint>> {
    params.solver.validate()?;
    let space = inter.space().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut starts = vec![Measure::apriori(space.clone())];
    for _ in 0..params.n_starts {
        starts.push(Measure::random(space.clone(), &mut rng));
    }
    let kicks: Vec<Measure> = (0..starts.len()).map(|_| Measure::random(space.clone(), &mut rng)).collect();
    let alpha = Measure::apriori(space);
    let mut found: Vec<InitialFixedPoint> = Vec::new();
    for r in par_map(&starts, |s| initial_iterate(inter, s, &params.solver)) {
        let Some(nu) = r? else { continue };
        if let Some(c) =
            found.iter_mut().find(|c| variational_distance(&c.measure, &nu).is_ok_and(|d| d < params.cluster_tol))
        {
            c.members += 1;
            continue;
        }
        found.push(InitialFixedPoint {
            magnetization: inter.moments(&nu)?,
            free_energy: relative_entropy(&nu, &alpha)? + inter.phi(&nu)?,
            measure: nu,
            members: 1,
            stable: true,
        });
    }
    for (c, kick) in found.iter_mut().zip(&kicks) {
        let start = kick.mix(&c.measure, STABILITY_KICK)?;
        c.stable = match initial_iterate(inter, &start, &params.solver)? {
            Some(back) => variational_distance(&back, &c.measure)? < params.cluster_tol,
            None => false,
        };
    }
    if found.iter().any(|c| c.stable) {
        found.retain(|c| c.stable);
    }
    found.sort_by(|a, b| a.free_energy.total_cmp(&b.free_energy));
    Ok(found)
}

/// I(ν) = S(ν|α) + Φ(ν) minus its smallest value over the given fixed points.
pub fn initial_rate(inter: &Interaction, nu: &Measure, fixed_points: &[InitialFixedPoint]) -> Result<f64> {
    let c = fixed_points.iter().map(|f| f.free_energy).fold(f64::INFINITY, f64::min);
    if !c.is_finite() {
        return Err(Error::NoConsistentMeasure);
    }
    let alpha = Measure::apriori(inter.space().clone());
    Ok(relative_entropy(nu, &alpha)? + inter.phi(nu)? - c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interaction::{PSpin, QuadraticCoupling};
    use crate::kernels::{circle_heat_kernel, coarse_grain_kernel, spin_flip_field, spin_flip_kernel, Partition};
    use crate::spinspace::make_circle;
    use std::f64::consts::LN_2;

    fn ising_model(beta: f64, p: u32, t: f64) -> TwoLayerModel {
        let k = spin_flip_kernel(t).unwrap();
        let inter = Interaction::on_coordinates(k.space_s().clone(), Arc::new(PSpin { beta, p })).unwrap();
        TwoLayerModel::new(inter, k).unwrap()
    }

    fn tau(model: &TwoLayerModel, tau: f64) -> Measure {
        Measure::new(model.space_sp().clone(), vec![(1.0 + tau) / 2.0, (1.0 - tau) / 2.0]).unwrap()
    }

    /// Bisection on m = (1+τ)/2 tanh(βm+h) + (1-τ)/2 tanh(βm-h), bracketing the root near `guess`.
    fn mf_root(beta: f64, h: f64, tau: f64, lo: f64, hi: f64) -> f64 {
        let g = |m: f64| (1.0 + tau) / 2.0 * (beta * m + h).tanh() + (1.0 - tau) / 2.0 * (beta * m - h).tanh() - m;
        let (mut a, mut b) = (lo, hi);
        assert!(g(a) * g(b) <= 0.0);
        for _ in 0..200 {
            let c = 0.5 * (a + b);
            if g(a) * g(c) <= 0.0 {
                b = c;
            } else {
                a = c;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn zero_coupling_maps_to_kernel() {
        let m = ising_model(0.0, 2, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let st = ConstrainedState::random(&m, tau(&m, 0.3), &mut rng).unwrap();
        let out = cflpk_apply(&m, &st).unwrap();
        for e in 0..2 {
            for s in 0..2 {
                assert!((out.row(e)[s] - m.kernel().density(s, e)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_magnetization_example() {
        let m = ising_model(0.5, 2, LN_2 / 2.0);
        let st = ConstrainedState::flat(&m, tau(&m, 0.0)).unwrap();
        let out = cflpk_apply(&m, &st).unwrap();
        for e in 0..2 {
            for s in 0..2 {
                assert!((out.row(e)[s] - m.kernel().density(s, e)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn coarse_identity_concentrates_on_class() {
        let s = Arc::new(make_circle(16).unwrap());
        let k = coarse_grain_kernel(s.clone(), &Partition::new((0..16).map(|i| i / 4).collect())).unwrap();
        let inter = Interaction::on_coordinates(s, Arc::new(QuadraticCoupling { beta: 1.5, dim: 2 })).unwrap();
        let m = TwoLayerModel::new(inter, k).unwrap();
        let nu = Measure::apriori(m.space_sp().clone());
        let out = cflpk_apply(&m, &ConstrainedState::flat(&m, nu).unwrap()).unwrap();
        for e in 0..4 {
            for s in 0..16 {
                assert_eq!(out.row(e)[s] > 0.0, s / 4 == e);
            }
        }
    }

    #[test]
    fn apply_preserves_constraint() {
        let m = ising_model(1.3, 3, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let nu = Measure::random(m.space_sp().clone(), &mut rng);
            let st = ConstrainedState::random(&m, nu.clone(), &mut rng).unwrap();
            let out = cflpk_apply(&m, &st).unwrap();
            assert_eq!(out.nu_prime(), &nu);
            for e in 0..2 {
                let mass: f64 = out.row(e).iter().map(|f| 0.5 * f).sum();
                assert!((mass - 1.0).abs() < 1e-12);
                assert!(out.row(e).iter().all(|f| *f > 0.0));
            }
        }
    }

    #[test]
    fn zero_coupling_fixed_point() {
        let m = ising_model(0.0, 2, LN_2 / 2.0);
        let nu = tau(&m, 0.5);
        let rep = fixed_point(&m, &ConstrainedState::flat(&m, nu).unwrap(), &SolverParams::default()).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 1);
        assert!((rep.magnetization[0] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn ising_fixed_point_solves_mean_field_equation() {
        let (beta, t, ta) = (0.5, LN_2 / 2.0, 0.5);
        let m = ising_model(beta, 2, t);
        let h = spin_flip_field(t).unwrap();
        let rep = fixed_point(&m, &ConstrainedState::flat(&m, tau(&m, ta)).unwrap(), &SolverParams::default()).unwrap();
        assert!(rep.converged);
        let want = mf_root(beta, h, ta, -1.0, 1.0);
        assert!((rep.magnetization[0] - want).abs() < 1e-11, "{} vs {want}", rep.magnetization[0]);
        assert!(rep.residual <= 1e-12);
        assert!((rep.psi_value - rep.j_value).abs() <= 1e-11);
    }

    #[test]
    fn residual_examples() {
        let m = ising_model(0.0, 2, LN_2 / 2.0);
        let nu = tau(&m, 0.2);
        assert!(consistency_residual(&m, &ConstrainedState::from_kernel(&m, nu.clone()).unwrap()).unwrap() < 1e-15);
        // Flat f: the residual is |log k| = |±h - log cosh h|, largest for the
        // entry with σ = η.
        let h = spin_flip_field(LN_2 / 2.0).unwrap();
        let want = h.abs() + h.cosh().ln();
        let got = consistency_residual(&m, &ConstrainedState::flat(&m, nu).unwrap()).unwrap();
        assert!((got - want).abs() < 1e-14, "{got} vs {want}");
    }

    #[test]
    fn psi_is_dominated_by_j_and_homogeneous_form_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (beta, p) in [(0.7, 2), (1.4, 3), (2.0, 4)] {
            let m = ising_model(beta, p, 0.3);
            for _ in 0..50 {
                let nu = Measure::random(m.space_sp().clone(), &mut rng);
                let st = ConstrainedState::random(&m, nu, &mut rng).unwrap();
                let (j, ps) = (j_constrained(&m, &st).unwrap(), psi(&m, &st).unwrap());
                assert!(ps <= j + 1e-12);
                assert!((psi_homogeneous(&m, &st).unwrap() - ps).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn symmetric_double_well_has_two_clusters() {
        let m = ising_model(2.0, 2, 5.0);
        let res = multistart(&m, &tau(&m, 0.0), &SearchParams::default()).unwrap();
        assert_eq!(
            res.clusters.len(),
            2,
            "{:?}",
            res.clusters.iter().map(|c| c.report.magnetization.clone()).collect::<Vec<_>>()
        );
        assert!(res.psi_gap() < 1e-9);
        let ms: Vec<f64> = res.clusters.iter().map(|c| c.report.magnetization[0]).collect();
        assert!((ms[0] + ms[1]).abs() < 1e-9 && ms[0].abs() > 0.9);
        assert_eq!(res.unstable.len(), 1);
        assert!(res.unstable[0].report.magnetization[0].abs() < 1e-12);
    }

    #[test]
    fn zero_coupling_single_cluster() {
        let m = ising_model(0.0, 2, 0.7);
        let res = multistart(&m, &tau(&m, -0.4), &SearchParams { n_starts: 8, ..Default::default() }).unwrap();
        assert_eq!(res.clusters.len(), 1);
        let st = &res.clusters[0].report.state;
        for e in 0..2 {
            for s in 0..2 {
                assert!((st.row(e)[s] - m.kernel().density(s, e)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn damping_does_not_change_the_fixed_point() {
        let m = ising_model(0.8, 2, 0.4);
        let nu = tau(&m, 0.3);
        let start = ConstrainedState::flat(&m, nu).unwrap();
        let a = fixed_point(&m, &start, &SolverParams::default()).unwrap();
        let b = fixed_point(&m, &start, &SolverParams { damping: 0.3, ..Default::default() }).unwrap();
        assert!(a.converged && b.converged);
        assert!(a.state.joint_distance(&b.state).unwrap() < 1e-8);
    }

    #[test]
    fn zero_coupling_transformed_quantities() {
        let m = ising_model(0.0, 2, 0.5);
        let nu = tau(&m, 0.3);
        let ti = transformed_interaction(&m, &nu, &SearchParams { n_starts: 4, ..Default::default() }).unwrap();
        assert!(ti.phi_k.abs() < 1e-14);
        let grid: Vec<Measure> = (0..11).map(|i| tau(&m, -1.0 + 0.2 * i as f64)).collect();
        let r = transformed_rate(&m, &grid, &SearchParams { n_starts: 2, ..Default::default() }).unwrap();
        assert_eq!(r.values.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
        for (v, s) in r.values.iter().zip(&r.entropy) {
            assert!((v - s).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_nu_prime_rows_are_ignored() {
        let m = ising_model(1.2, 2, 0.3);
        let nu = tau(&m, 1.0);
        let rep = fixed_point(&m, &ConstrainedState::flat(&m, nu).unwrap(), &SolverParams::default()).unwrap();
        assert!(rep.converged);
        assert!((rep.psi_value - rep.j_value).abs() < 1e-10);
    }

    #[test]
    fn curie_weiss_initial_fixed_points() {
        let s = Arc::new(SpinSpace::ising());
        let cw = |beta| Interaction::on_coordinates(s.clone(), Arc::new(PSpin { beta, p: 2 })).unwrap();
        let fps = initial_fixed_points(&cw(2.0), &SearchParams::default()).unwrap();
        assert_eq!(fps.len(), 2);
        let root = mf_root(2.0, 0.0, 0.0, 0.5, 1.0);
        assert!((root - 0.957504).abs() < 1e-6);
        for fp in &fps {
            assert!((fp.magnetization[0].abs() - root).abs() < 1e-10);
        }
        let fps = initial_fixed_points(&cw(0.5), &SearchParams::default()).unwrap();
        assert_eq!(fps.len(), 1);
        assert!(fps[0].magnetization[0].abs() < 1e-10);
        let nu = Measure::new(s.clone(), vec![0.3, 0.7]).unwrap();
        assert!(initial_rate(&cw(0.5), &nu, &fps).unwrap() > 0.0);
        assert!(initial_rate(&cw(0.5), &fps[0].measure, &fps).unwrap().abs() < 1e-12);

        let free = initial_gamma1(&cw(0.0), &nu).unwrap();
        assert_eq!(free.weights(), s.weights());
    }

    #[test]
    fn rotator_fixed_point_identities() {
        let s = Arc::new(make_circle(64).unwrap());
        let k = circle_heat_kernel(s.clone(), 0.1).unwrap();
        let inter = Interaction::on_coordinates(s, Arc::new(QuadraticCoupling { beta: 0.2, dim: 2 })).unwrap();
        let m = TwoLayerModel::new(inter, k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let nu = Measure::random(m.space_sp().clone(), &mut rng);
        let rep =
            fixed_point(&m, &ConstrainedState::random(&m, nu, &mut rng).unwrap(), &SolverParams::default()).unwrap();
        assert!(rep.converged);
        assert!((rep.psi_value - rep.j_value).abs() < 1e-10);
        let lhs = joint_relative_entropy(&m, &rep.state).unwrap();
        assert!((lhs - variational_rhs(&m, &rep.state).unwrap()).abs() < 1e-10);
    }
}
