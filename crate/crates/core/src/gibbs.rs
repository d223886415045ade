//! Contraction certificates, the limiting single-site kernel γ′₁ of the
//! transformed system, continuity ratios and the bad-point scanner.
//!
//! Gibbsianness is reported on two tiers: `certified` when L < 1 (a sufficient
//! condition), and empirically unique when multistart finds a single
//! Ψ-minimal cluster at every scanned ν′.

use serde::Serialize;

use crate::cflm::{multistart, ConstrainedState, MultistartResult, SearchParams, TwoLayerModel};
use crate::error::{Error, Result};
use crate::interaction::{ConstantsProvenance, InteractionConstants};
use crate::kernels::{rho_alpha, rho_alpha_k, Kernel};
use crate::parallel::par_map;
use crate::spinspace::{variational_distance, Measure};

/// All contraction constants. Infinite values serialize as JSON null.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "L_hat")]
    pub l_hat: f64,
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L1_bar")]
    pub l1_bar: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
    #[serde(rename = "L2_bar")]
    pub l2_bar: f64,
    pub certified_gibbs: bool,
    pub c_of_f_g: f64,
    pub rho_alpha_k: f64,
    pub rho_alpha: f64,
    pub constants_provenance: ConstantsProvenance,
    pub model_descriptor: String,
}

impl Certificate {
    /// Assembles every constant from C(F,g), ρ_α(k) and ρ_α.
    pub fn from_parts(
        c_of_f_g: f64,
        rho_alpha_k: f64,
        rho_alpha: f64,
        provenance: ConstantsProvenance,
        descriptor: impl Into<String>,
    ) -> Self {
        let l = c_of_f_g * rho_alpha_k;
        let l_hat = c_of_f_g * rho_alpha;
        let l1 = 4.0 * l;
        let contracting = l < 1.0;
        Self {
            l,
            l_hat,
            l1,
            l1_bar: if contracting { l1 / (1.0 - l) } else { f64::INFINITY },
            l2: l1 * l_hat,
            l2_bar: if contracting { 4.0 * l * l_hat / (1.0 - l) } else { f64::INFINITY },
            certified_gibbs: contracting,
            c_of_f_g,
            rho_alpha_k,
            rho_alpha,
            constants_provenance: provenance,
            model_descriptor: descriptor.into(),
        }
    }
}

/// Certificate from interaction constants and a grid kernel.
pub fn certify(constants: &InteractionConstants, kernel: &Kernel, descriptor: impl Into<String>) -> Certificate {
    Certificate::from_parts(
        constants.c_of_f_g,
        rho_alpha_k(kernel),
        rho_alpha(kernel.space_s()),
        constants.provenance,
        descriptor,
    )
}

/// γ′₁(η|ν′) at a given first-layer state:
/// α′(η) Σ_σ α e^{-Φ⁽¹⁾} k(σ,η) / Σ_σ α e^{-Φ⁽¹⁾}.
pub fn gamma1_prime_at(model: &TwoLayerModel, state: &ConstrainedState) -> Result<Measure> {
    let m = model.interaction().moments(&state.first_marginal())?;
    let phi1 = model.interaction().local_field(&m);
    let a = model.space_s().weights();
    let lo = phi1.iter().copied().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = phi1.iter().zip(a).map(|(p, w)| w * (lo - p).exp()).collect();
    let den: f64 = e.iter().sum();
    let ap = model.space_sp().weights();
    let w = (0..ap.len())
        .map(|eta| ap[eta] * model.kernel().column(eta).iter().zip(&e).map(|(k, x)| k * x).sum::<f64>() / den)
        .collect();
    Measure::new(model.space_sp().clone(), w)
}

/// γ′₁(·|ν′) and the search behind it.
#[derive(Debug, Clone)]
pub struct Gamma1Prime {
    pub measure: Measure,
    pub search: MultistartResult,
}

fn unique_minimal(search: &MultistartResult, tie_tol: f64) -> Result<&ConstrainedState> {
    let best = search.psi_minimal(tie_tol);
    match best.len() {
        0 => Err(Error::NoConsistentMeasure),
        1 => Ok(&best[0].report.state),
        _ => Err(Error::NonUniqueMinimizer {
            psi: best.iter().map(|c| c.psi()).collect(),
            magnetizations: best.iter().map(|c| c.report.magnetization.clone()).collect(),
        }),
    }
}

/// γ′₁(·|ν′) at the unique Ψ-minimal consistent state; fails with
/// `NonUniqueMinimizer` when two or more clusters tie within `tie_tol`.
pub fn gamma1_prime(model: &TwoLayerModel, nu_prime: &Measure, params: &SearchParams) -> Result<Gamma1Prime> {
    let search = multistart(model, nu_prime, params)?;
    let measure = gamma1_prime_at(model, unique_minimal(&search, params.tie_tol)?)?;
    Ok(Gamma1Prime { measure, search })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuityReport {
    /// ‖γ′₁(·|ν′₁) - γ′₁(·|ν′₂)‖ / ‖ν′₁ - ν′₂‖ per pair.
    pub gamma_ratios: Vec<f64>,
    /// ‖ν̃*₁ - ν̃*₂‖ / ‖ν′₁ - ν′₂‖ per pair.
    pub fixed_point_ratios: Vec<f64>,
    pub max_gamma_ratio: f64,
    pub max_fixed_point_ratio: f64,
}

/// Empirical Lipschitz ratios of ν′ ↦ γ′₁ and ν′ ↦ ν̃* over the given pairs.
pub fn continuity_check(
    model: &TwoLayerModel,
    pairs: &[(Measure, Measure)],
    params: &SearchParams,
) -> Result<ContinuityReport> {
    let rows = par_map(pairs, |(a, b)| -> Result<(f64, f64)> {
        let d = variational_distance(a, b)?;
        if !(d > 0.0) {
            return Err(Error::InvalidParameter("continuity pairs must differ".into()));
        }
        let ga = gamma1_prime(model, a, params)?;
        let gb = gamma1_prime(model, b, params)?;
        let sa = unique_minimal(&ga.search, params.tie_tol)?;
        let sb = unique_minimal(&gb.search, params.tie_tol)?;
        Ok((variational_distance(&ga.measure, &gb.measure)? / d, sa.joint_distance(sb)? / d))
    });
    let rows: Vec<(f64, f64)> = rows.into_iter().collect::<Result<_>>()?;
    let gamma_ratios: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let fixed_point_ratios: Vec<f64> = rows.iter().map(|r| r.1).collect();
    Ok(ContinuityReport {
        max_gamma_ratio: gamma_ratios.iter().copied().fold(0.0, f64::max),
        max_fixed_point_ratio: fixed_point_ratios.iter().copied().fold(0.0, f64::max),
        gamma_ratios,
        fixed_point_ratios,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanParams {
    pub search: SearchParams,
    pub jump_factor: f64,
    /// Lipschitz scale for the SUSPECT test; L2 when finite, otherwise 1.
    pub lipschitz_scale: f64,
}

impl Default for ScanParams {
    fn default() -> Self {
        Self { search: SearchParams::default(), jump_factor: 10.0, lipschitz_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub point_index: usize,
    pub cluster_count: usize,
    pub psi_gap: f64,
    pub bad: bool,
    /// γ′₁ weights when the Ψ-minimal cluster is unique.
    pub gamma1_prime: Option<Vec<f64>>,
    /// Magnetizations of the Ψ-minimal clusters.
    pub minimal_magnetizations: Vec<Vec<f64>>,
    /// Variational distance of γ′₁ to the next grid point, when both exist.
    pub jump_to_next: Option<f64>,
    pub suspect: bool,
    pub unconverged: usize,
    pub stability_unresolved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanTable {
    pub rows: Vec<ScanRow>,
    pub bad_count: usize,
    pub suspect_count: usize,
    pub search_incomplete_possible: bool,
}

/// Scans a ν′ grid in the given order. Grid point i uses seed `seed + i`.
pub fn bad_point_scan(model: &TwoLayerModel, grid: &[Measure], params: &ScanParams) -> Result<ScanTable> {
    let indexed: Vec<(usize, &Measure)> = grid.iter().enumerate().collect();
    let rows = par_map(&indexed, |(i, nu)| -> Result<ScanRow> {
        let search_params = SearchParams { seed: params.search.seed.wrapping_add(*i as u64), ..params.search };
        let search = multistart(model, nu, &search_params)?;
        let minimal = search.psi_minimal(search_params.tie_tol);
        let gamma = if minimal.len() == 1 {
            Some(gamma1_prime_at(model, &minimal[0].report.state)?.weights().to_vec())
        } else {
            None
        };
        Ok(ScanRow {
            point_index: *i,
            cluster_count: search.clusters.len(),
            psi_gap: search.psi_gap(),
            bad: minimal.len() >= 2,
            minimal_magnetizations: minimal.iter().map(|c| c.report.magnetization.clone()).collect(),
            gamma1_prime: gamma,
            jump_to_next: None,
            suspect: false,
            unconverged: search.unconverged,
            stability_unresolved: search.stability_unresolved,
        })
    });
    let mut rows: Vec<ScanRow> = rows.into_iter().collect::<Result<_>>()?;
    for i in 0..rows.len().saturating_sub(1) {
        if let (Some(a), Some(b)) = (&rows[i].gamma1_prime, &rows[i + 1].gamma1_prime) {
            let jump = 0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
            let spacing = variational_distance(&grid[i], &grid[i + 1])?;
            rows[i].jump_to_next = Some(jump);
            rows[i].suspect = jump > params.jump_factor * spacing * params.lipschitz_scale;
        }
    }
    let no_cluster = rows.iter().any(|r| r.cluster_count == 0 || r.stability_unresolved);
    Ok(ScanTable {
        bad_count: rows.iter().filter(|r| r.bad).count(),
        suspect_count: rows.iter().filter(|r| r.suspect).count(),
        search_incomplete_possible: model.search_incomplete_possible() || no_cluster,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interaction::{compute_constants, Interaction, PSpin, QuadraticCoupling};
    use crate::kernels::{circle_heat_kernel, spin_flip_field, spin_flip_kernel};
    use crate::spinspace::make_circle;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::LN_2;
    use std::sync::Arc;

    fn ising(beta: f64, t: f64) -> TwoLayerModel {
        let k = spin_flip_kernel(t).unwrap();
        let inter = Interaction::on_coordinates(k.space_s().clone(), Arc::new(PSpin { beta, p: 2 })).unwrap();
        TwoLayerModel::new(inter, k).unwrap()
    }

    fn tau(m: &TwoLayerModel, t: f64) -> Measure {
        Measure::new(m.space_sp().clone(), vec![(1.0 + t) / 2.0, (1.0 - t) / 2.0]).unwrap()
    }

    #[test]
    fn certificate_identities() {
        let c = Certificate::from_parts(1.7, 0.3, 1.4, ConstantsProvenance::Sampled, "x");
        assert_eq!(c.l, 1.7 * 0.3);
        assert_eq!(c.l1, 4.0 * c.l);
        assert_eq!(c.l1_bar, c.l1 / (1.0 - c.l));
        assert_eq!(c.l2, c.l1 * c.l_hat);
        assert!(c.l2 < c.l2_bar);
        let bad = Certificate::from_parts(3.0, 1.0, 1.0, ConstantsProvenance::Sampled, "y");
        assert!(!bad.certified_gibbs && bad.l1_bar.is_infinite() && bad.l2_bar.is_infinite());
        let json = serde_json::to_value(&bad).unwrap();
        assert!(json["L2_bar"].is_null());
    }

    #[test]
    fn ising_certificate_example() {
        let m = ising(0.5, LN_2 / 2.0);
        let c = compute_constants(m.interaction(), 256, 0).unwrap();
        let cert = certify(&c, m.kernel(), "ising");
        assert!((cert.l - 3.297442541400256).abs() < 1e-12);
        assert!(!cert.certified_gibbs);
    }

    #[test]
    fn zero_coupling_certificate_and_kernel() {
        let m = ising(0.0, 0.3);
        let c = compute_constants(m.interaction(), 256, 0).unwrap();
        let cert = certify(&c, m.kernel(), "free");
        assert_eq!((cert.l, cert.l2), (0.0, 0.0));
        assert!(cert.certified_gibbs);
        let g = gamma1_prime(&m, &tau(&m, 0.6), &SearchParams::default()).unwrap();
        for (w, a) in g.measure.weights().iter().zip(m.space_sp().weights()) {
            assert!((w - a).abs() < 1e-12);
        }
    }

    #[test]
    fn ising_gamma1_prime_closed_form() {
        let (beta, t) = (0.5, LN_2 / 2.0);
        let m = ising(beta, t);
        let g = gamma1_prime(&m, &tau(&m, 0.5), &SearchParams::default()).unwrap();
        let ms = g.search.clusters[0].report.magnetization[0];
        let h = spin_flip_field(t).unwrap();
        let (up, dn) = ((beta * ms + h).cosh(), (beta * ms - h).cosh());
        assert!((g.measure.weights()[0] - up / (up + dn)).abs() < 1e-12);
    }

    #[test]
    fn double_well_is_non_unique() {
        let m = ising(2.0, 5.0);
        match gamma1_prime(&m, &tau(&m, 0.0), &SearchParams::default()) {
            Err(Error::NonUniqueMinimizer { psi, magnetizations }) => {
                assert_eq!(psi.len(), 2);
                assert!(magnetizations[0][0] * magnetizations[1][0] < 0.0);
            }
            other => panic!("expected NonUniqueMinimizer, got {other:?}"),
        }
    }

    #[test]
    fn scan_is_clean_at_zero_coupling_and_symmetric() {
        let m = ising(0.0, 0.5);
        let grid: Vec<Measure> = (0..11).map(|i| tau(&m, -1.0 + 0.2 * i as f64)).collect();
        let p = ScanParams { search: SearchParams { n_starts: 4, ..Default::default() }, ..Default::default() };
        let table = bad_point_scan(&m, &grid, &p).unwrap();
        assert_eq!(table.bad_count, 0);

        let m = ising(2.0, 5.0);
        let grid: Vec<Measure> = (0..5).map(|i| tau(&m, -0.2 + 0.1 * i as f64)).collect();
        let p = ScanParams { search: SearchParams { n_starts: 8, ..Default::default() }, ..Default::default() };
        let table = bad_point_scan(&m, &grid, &p).unwrap();
        let bad: Vec<bool> = table.rows.iter().map(|r| r.bad).collect();
        assert_eq!(bad, vec![false, false, true, false, false]);
        for i in 0..2 {
            let (a, b) = (&table.rows[i], &table.rows[4 - i]);
            assert_eq!(a.cluster_count, b.cluster_count);
            let (ga, gb) = (a.gamma1_prime.as_ref().unwrap(), b.gamma1_prime.as_ref().unwrap());
            assert!((ga[0] - gb[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn rotator_continuity_within_bounds() {
        let s = Arc::new(make_circle(64).unwrap());
        let k = circle_heat_kernel(s.clone(), 0.1).unwrap();
        let inter = Interaction::on_coordinates(s, Arc::new(QuadraticCoupling { beta: 0.2, dim: 2 })).unwrap();
        let c = compute_constants(&inter, 1024, 0).unwrap();
        let cert = certify(&c, &k, "rotator");
        assert!(cert.certified_gibbs);
        let m = TwoLayerModel::new(inter, k).unwrap().with_contraction(cert.l);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pairs: Vec<(Measure, Measure)> = (0..3)
            .map(|_| (Measure::random(m.space_sp().clone(), &mut rng), Measure::random(m.space_sp().clone(), &mut rng)))
            .collect();
        let rep = continuity_check(&m, &pairs, &SearchParams { n_starts: 2, ..Default::default() }).unwrap();
        assert!(rep.max_gamma_ratio <= cert.l2 + 1e-8);
        assert!(rep.max_fixed_point_ratio <= cert.l1 + 1e-8);
    }
}
