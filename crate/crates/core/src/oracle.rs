//! Independent ground truth for the Ising preset: exact finite-N conditional
//! probabilities of the transformed spin, and 1-d minimization of Ψ_τ.

use serde::Serialize;

use crate::cflm::SearchParams;
use crate::error::{Error, Result};
use crate::gibbs::gamma1_prime;
use crate::kernels::spin_flip_field;
use crate::models::{ising_nu_prime, IsingPSpin};
use crate::parallel::par_map;

/// Largest system size accepted by [`ising_exact_conditional`].
pub const MAX_N: usize = 20_000;
/// Golden-section bracket width.
pub const GOLDEN_TOL: f64 = 1e-12;
/// Ψ tolerance for declaring tied global minimizers.
pub const TIE_TOL: f64 = 1e-9;

/// N sites; sites 2..N carry η = +1 on `n_plus` of them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiniteNSpec {
    pub n: usize,
    pub beta: f64,
    pub p: u32,
    pub t: f64,
    pub n_plus: usize,
}

impl FiniteNSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!("N must be >= 2, got {}", self.n)));
        }
        if self.n_plus > self.n - 1 {
            return Err(Error::InvalidParameter(format!("n_plus {} exceeds N-1 = {}", self.n_plus, self.n - 1)));
        }
        if self.n > MAX_N {
            return Err(Error::ResourceLimit(format!("N = {} exceeds {MAX_N}", self.n)));
        }
        IsingPSpin::new(self.beta, self.p, self.t)?;
        Ok(())
    }

    /// Empirical τ of the conditioning spins, (2 n_plus - (N-1)) / (N-1).
    pub fn tau(&self) -> f64 {
        let m = (self.n - 1) as f64;
        (2.0 * self.n_plus as f64 - m) / m
    }
}

fn log_factorials(n: usize) -> Vec<f64> {
    let mut lf = vec![0.0; n + 1];
    for k in 1..=n {
        lf[k] = lf[k - 1] + (k as f64).ln();
    }
    lf
}

#[derive(Clone, Copy)]
struct LogSum {
    max: f64,
    sum: f64,
}

impl LogSum {
    const EMPTY: LogSum = LogSum { max: f64::NEG_INFINITY, sum: 0.0 };

    fn add(&mut self, x: f64) {
        if x > self.max {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.sum += (x - self.max).exp();
        }
    }

    fn merge(self, o: LogSum) -> LogSum {
        if o.max == f64::NEG_INFINITY {
            return self;
        }
        if self.max == f64::NEG_INFINITY {
            return o;
        }
        let max = self.max.max(o.max);
        LogSum { max, sum: self.sum * (self.max - max).exp() + o.sum * (o.max - max).exp() }
    }

    fn value(&self) -> f64 {
        self.max + self.sum.ln()
    }
}

/// Log of the unnormalized weights of η₁ = +1 and η₁ = -1 given the other
/// transformed spins, summed over σ ∈ {±1}^N in (a, b) sectors.
fn conditional_log_weights(spec: &FiniteNSpec) -> Result<(f64, f64)> {
    spec.validate()?;
    let h = spin_flip_field(spec.t)?;
    let n = spec.n;
    let (np, nm) = (spec.n_plus, n - 1 - spec.n_plus);
    let lf = log_factorials(n);
    let ln_binom = |n: usize, k: usize| lf[n] - lf[k] - lf[n - k];
    let nf = n as f64;
    let pf = spec.p as f64;
    let energy: Vec<f64> = (0..=n)
        .map(|k| {
            let m = (2.0 * k as f64 - nf) / nf;
            nf * spec.beta * m.powi(spec.p as i32) / pf
        })
        .collect();
    let rows: Vec<usize> = (0..=np).collect();
    let partial = par_map(&rows, |&a| {
        let (mut plus, mut minus) = (LogSum::EMPTY, LogSum::EMPTY);
        for b in 0..=nm {
            let base =
                ln_binom(np, a) + ln_binom(nm, b) + h * ((2 * a) as f64 - np as f64 - (2 * b) as f64 + nm as f64);
            for s1 in [1.0f64, -1.0] {
                let k = a + b + usize::from(s1 > 0.0);
                let x = base + energy[k];
                plus.add(x + h * s1);
                minus.add(x - h * s1);
            }
        }
        (plus, minus)
    });
    let (plus, minus) =
        partial.into_iter().fold((LogSum::EMPTY, LogSum::EMPTY), |(p, m), (a, b)| (p.merge(a), m.merge(b)));
    Ok((plus.value(), minus.value()))
}

/// P(η₁ = +1 | η₂..η_N) in the N-site two-layer Ising model.
pub fn ising_exact_conditional(spec: &FiniteNSpec) -> Result<f64> {
    let (lp, lm) = conditional_log_weights(spec)?;
    Ok(1.0 / (1.0 + (lm - lp).exp()))
}

/// P(η₁ = -1 | η₂..η_N), computed independently of the complement.
pub fn ising_exact_conditional_minus(spec: &FiniteNSpec) -> Result<f64> {
    let (lp, lm) = conditional_log_weights(spec)?;
    Ok(1.0 / (1.0 + (lp - lm).exp()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub n: usize,
    pub n_plus: usize,
    pub tau_realized: f64,
    pub exact: f64,
    pub limit: f64,
    pub error: f64,
    /// e_N / e_{N'} for the next row N'.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceStudy {
    pub tau_target: f64,
    pub rows: Vec<StudyRow>,
    /// -d log e_N / d log N by least squares; None when some error is zero.
    pub decay_exponent: Option<f64>,
}

/// Compares the exact conditional at each N with γ′₁(+1|ν′_{τ_N}) at the
/// realized τ_N. Refuses when Ψ_τ has tied global minimizers.
pub fn convergence_study(
    beta: f64,
    p: u32,
    t: f64,
    tau: f64,
    n_list: &[usize],
    search: &SearchParams,
) -> Result<ConvergenceStudy> {
    let preset = IsingPSpin::new(beta, p, t)?;
    let check = grid_minimize_psi_tau(beta, p, t, tau, 2001)?;
    if check.minimizers.len() > 1 {
        return Err(Error::NonUniqueMinimizer {
            psi: check.psi_values.clone(),
            magnetizations: check.minimizers.iter().map(|m| vec![*m]).collect(),
        });
    }
    let model = preset.model()?;
    let rows = par_map(n_list, |&n| -> Result<StudyRow> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("N must be >= 2, got {n}")));
        }
        let n_plus = (((n - 1) as f64) * (1.0 + tau) / 2.0).round() as usize;
        let spec = FiniteNSpec { n, beta, p, t, n_plus: n_plus.min(n - 1) };
        let exact = ising_exact_conditional(&spec)?;
        let nu = ising_nu_prime(model.space_sp().clone(), spec.tau())?;
        let limit = gamma1_prime(&model, &nu, search)?.measure.weights()[0];
        Ok(StudyRow {
            n,
            n_plus: spec.n_plus,
            tau_realized: spec.tau(),
            exact,
            limit,
            error: (exact - limit).abs(),
            ratio: None,
        })
    });
    let mut rows: Vec<StudyRow> = rows.into_iter().collect::<Result<_>>()?;
    for i in 0..rows.len().saturating_sub(1) {
        rows[i].ratio = Some(rows[i].error / rows[i + 1].error);
    }
    let decay_exponent = decay_exponent(&rows);
    Ok(ConvergenceStudy { tau_target: tau, rows, decay_exponent })
}

fn decay_exponent(rows: &[StudyRow]) -> Option<f64> {
    if rows.len() < 2 || rows.iter().any(|r| !(r.error > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.error.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Some(-sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsiMinimization {
    /// Global minimizers within [`TIE_TOL`], ascending.
    pub minimizers: Vec<f64>,
    pub psi_values: Vec<f64>,
    /// Every refined local minimum as (m′, Ψ_τ).
    pub local_minima: Vec<(f64, f64)>,
}

/// Minimizes Ψ_τ over m′ ∈ [-1, 1]: uniform grid scan, golden-section
/// refinement of each discrete local minimum, then bisection on the
/// stationarity residual where it changes sign.
///
/// At β = 0 Ψ_τ does not depend on m′; the minimizer returned is the mean-field
/// magnetization τ tanh h_t.
pub fn grid_minimize_psi_tau(beta: f64, p: u32, t: f64, tau: f64, grid_n: usize) -> Result<PsiMinimization> {
    if grid_n < 1001 {
        return Err(Error::InvalidParameter(format!("grid_n must be >= 1001, got {grid_n}")));
    }
    if !(-1.0..=1.0).contains(&tau) {
        return Err(Error::InvalidParameter(format!("tau must lie in [-1,1], got {tau}")));
    }
    let pre = IsingPSpin::new(beta, p, t)?;
    if beta == 0.0 {
        let m = pre.mf_rhs(0.0, tau);
        let v = pre.psi_tau(m, tau);
        return Ok(PsiMinimization { minimizers: vec![m], psi_values: vec![v], local_minima: vec![(m, v)] });
    }
    let f = |m: f64| pre.psi_tau(m, tau);
    let xs: Vec<f64> = (0..grid_n).map(|i| -1.0 + 2.0 * i as f64 / (grid_n - 1) as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut local: Vec<(f64, f64)> = Vec::new();
    for i in 0..grid_n {
        let left_ok = i == 0 || ys[i] <= ys[i - 1];
        let right_ok = i + 1 == grid_n || ys[i] <= ys[i + 1];
        if !(left_ok && right_ok) {
            continue;
        }
        let lo = xs[i.saturating_sub(1)];
        let hi = xs[(i + 1).min(grid_n - 1)];
        let mut x = golden_section(&f, lo, hi);
        x = polish(&pre, tau, x, lo, hi);
        let v = f(x);
        if local.iter().all(|(y, _)| (y - x).abs() > 1e-8) {
            local.push((x, v));
        }
    }
    let best = local.iter().map(|l| l.1).fold(f64::INFINITY, f64::min);
    let mut global: Vec<(f64, f64)> = local.iter().copied().filter(|l| l.1 - best <= TIE_TOL).collect();
    global.sort_by(|a, b| a.0.total_cmp(&b.0));
    local.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(PsiMinimization {
        minimizers: global.iter().map(|g| g.0).collect(),
        psi_values: global.iter().map(|g| g.1).collect(),
        local_minima: local,
    })
}

fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > GOLDEN_TOL {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Golden-section stalls near sqrt(eps) because Ψ is flat at its minimum;
/// the stationarity residual has a clean sign change there instead.
fn polish(pre: &IsingPSpin, tau: f64, x: f64, lo: f64, hi: f64) -> f64 {
    let g = |m: f64| pre.stationarity_residual(m, tau);
    let (mut a, mut b) = ((x - 1e-6).max(lo), (x + 1e-6).min(hi));
    let (ga, gb) = (g(a), g(b));
    if !(ga < 0.0 && gb > 0.0) {
        return x;
    }
    for _ in 0..200 {
        let c = 0.5 * (a + b);
        if c <= a || c >= b {
            break;
        }
        if g(c) < 0.0 {
            a = c;
        } else {
            b = c;
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn zero_coupling_is_one_half() {
        for (n, np) in [(2, 0), (2, 1), (7, 3), (100, 80)] {
            let spec = FiniteNSpec { n, beta: 0.0, p: 2, t: 0.4, n_plus: np };
            assert_eq!(ising_exact_conditional(&spec).unwrap(), 0.5);
        }
    }

    #[test]
    fn two_site_hand_enumeration() {
        // N = 2, η₂ = +1: sum over (σ₁, σ₂) of e^{2β m²/2} e^{h σ₂} e^{± h σ₁}.
        let (beta, t) = (0.7, 0.3);
        let spec = FiniteNSpec { n: 2, beta, p: 2, t, n_plus: 1 };
        let h = spin_flip_field(t).unwrap();
        let mut plus = 0.0;
        let mut minus = 0.0;
        for s1 in [1.0f64, -1.0] {
            for s2 in [1.0f64, -1.0] {
                let m: f64 = (s1 + s2) / 2.0;
                let w = (2.0 * beta * m * m / 2.0).exp() * (h * s2).exp();
                plus += w * (h * s1).exp();
                minus += w * (-h * s1).exp();
            }
        }
        let want = plus / (plus + minus);
        assert!((want - 0.5506571834914598).abs() < 1e-12);
        assert!((ising_exact_conditional(&spec).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn complement_and_flip_symmetry() {
        let spec = FiniteNSpec { n: 31, beta: 1.2, p: 3, t: 0.2, n_plus: 11 };
        let p = ising_exact_conditional(&spec).unwrap();
        let q = ising_exact_conditional_minus(&spec).unwrap();
        assert!((p + q - 1.0).abs() < 1e-15);
        // Global flip is a symmetry only for even p.
        let spec = FiniteNSpec { n: 31, beta: 1.2, p: 2, t: 0.2, n_plus: 11 };
        let flipped = FiniteNSpec { n_plus: 30 - 11, ..spec };
        let a = ising_exact_conditional(&spec).unwrap();
        let b = ising_exact_conditional(&flipped).unwrap();
        assert!((a + b - 1.0).abs() < 1e-14);
    }

    #[test]
    fn resource_limit() {
        let spec = FiniteNSpec { n: MAX_N + 1, beta: 0.1, p: 2, t: 0.3, n_plus: 0 };
        assert!(matches!(ising_exact_conditional(&spec), Err(Error::ResourceLimit(_))));
    }

    #[test]
    fn zero_coupling_minimizer() {
        let r = grid_minimize_psi_tau(0.0, 2, LN_2 / 2.0, 0.5, 1001).unwrap();
        assert_eq!(r.minimizers.len(), 1);
        assert!((r.minimizers[0] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn double_well_minimizers() {
        let r = grid_minimize_psi_tau(2.0, 2, 5.0, 0.0, 2001).unwrap();
        assert_eq!(r.minimizers.len(), 2);
        assert!((r.minimizers[0] + r.minimizers[1]).abs() < 1e-12);
        assert!(r.minimizers[1] > 0.9);
        assert!((r.psi_values[0] - r.psi_values[1]).abs() < 1e-12);
        let pre = IsingPSpin::new(2.0, 2, 5.0).unwrap();
        assert!(pre.stationarity_residual(r.minimizers[1], 0.0).abs() < 1e-14);
    }

    #[test]
    fn positive_tau_breaks_the_tie_towards_the_sign_of_h() {
        // h_t < 0, so a positive τ favours negative magnetization.
        let r = grid_minimize_psi_tau(2.0, 2, 5.0, 0.1, 2001).unwrap();
        assert_eq!(r.minimizers.len(), 1);
        assert!(r.minimizers[0] < -0.9);
        assert_eq!(r.local_minima.len(), 2);
    }

    #[test]
    fn grid_size_floor() {
        assert!(grid_minimize_psi_tau(1.0, 2, 1.0, 0.0, 1000).is_err());
    }

    #[test]
    fn zero_coupling_study_is_exact() {
        let s = convergence_study(0.0, 2, 0.5, 0.3, &[10, 20, 40], &SearchParams { n_starts: 2, ..Default::default() })
            .unwrap();
        for r in &s.rows {
            assert!(r.error < 1e-12);
        }
    }

    #[test]
    fn study_refuses_double_well() {
        let r = convergence_study(2.0, 2, 5.0, 0.0, &[10], &SearchParams::default());
        assert!(matches!(r, Err(Error::NonUniqueMinimizer { .. })));
    }
}
