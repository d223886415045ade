//! Browser bindings for three operations of `mfgibbs`: the Ising
//! Hubbard-Stratonovich curve Ψ_τ, a τ scan for BAD points, and the rotator
//! contraction certificate. Each export returns a JSON string; the plain
//! `*_json` functions behind them are what the native tests exercise.

use mfgibbs::models::{ising_nu_prime, tau_grid};
use mfgibbs::{bad_point_scan, grid_minimize_psi_tau, IsingPSpin, Rotator, ScanParams, SearchParams};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_CURVE_POINTS: usize = 20_001;
const MAX_SCAN_POINTS: usize = 401;

#[derive(Serialize)]
struct Curve {
    m: Vec<f64>,
    psi: Vec<f64>,
    minimizers: Vec<f64>,
    psi_min: Vec<f64>,
}

#[derive(Serialize)]
struct ScanPoint {
    tau: f64,
    bad: bool,
    /// γ′₁(+1|ν′_τ), absent at BAD points.
    gamma_plus: Option<f64>,
    psi_gap: Option<f64>,
    magnetizations: Vec<f64>,
}

#[derive(Serialize)]
struct Scan {
    points: Vec<ScanPoint>,
    bad_count: usize,
    certified: bool,
    l: f64,
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

/// Ψ_τ on `points` equispaced m′ values plus its global minimizers.
pub fn psi_tau_curve_json(beta: f64, p: u32, t: f64, tau: f64, points: usize) -> Result<String, String> {
    if !(2..=MAX_CURVE_POINTS).contains(&points) {
        return Err(format!("points must lie in 2..={MAX_CURVE_POINTS}"));
    }
    let pre = IsingPSpin::new(beta, p, t).map_err(|e| e.to_string())?;
    let m: Vec<f64> = (0..points).map(|i| -1.0 + 2.0 * i as f64 / (points - 1) as f64).collect();
    let psi = m.iter().map(|&x| pre.psi_tau(x, tau)).collect();
    let mins = grid_minimize_psi_tau(beta, p, t, tau, 2001).map_err(|e| e.to_string())?;
    to_json(&Curve { m, psi, minimizers: mins.minimizers, psi_min: mins.psi_values })
}

/// Multistart scan of ν′_τ over `points` values of τ ∈ [-1, 1].
pub fn tau_scan_json(beta: f64, p: u32, t: f64, points: usize, starts: usize) -> Result<String, String> {
    if !(2..=MAX_SCAN_POINTS).contains(&points) {
        return Err(format!("points must lie in 2..={MAX_SCAN_POINTS}"));
    }
    let pre = IsingPSpin::new(beta, p, t).map_err(|e| e.to_string())?;
    let model = pre.model().map_err(|e| e.to_string())?;
    let taus = tau_grid(points);
    let grid = taus
        .iter()
        .map(|&x| ising_nu_prime(model.space_sp().clone(), x))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let params = ScanParams {
        search: SearchParams { n_starts: starts.max(1), ..SearchParams::default() },
        ..ScanParams::default()
    };
    let table = bad_point_scan(&model, &grid, &params).map_err(|e| e.to_string())?;
    let cert = pre.certificate();
    let points = table
        .rows
        .iter()
        .zip(&taus)
        .map(|(r, &tau)| ScanPoint {
            tau,
            bad: r.bad,
            gamma_plus: r.gamma1_prime.as_ref().map(|g| g[0]),
            psi_gap: r.psi_gap.is_finite().then_some(r.psi_gap),
            magnetizations: r.minimal_magnetizations.iter().map(|m| m[0]).collect(),
        })
        .collect();
    to_json(&Scan { points, bad_count: table.bad_count, certified: cert.certified_gibbs, l: cert.l })
}

/// Closed-form contraction certificate of mean-field rotators on S^{q-1}.
pub fn rotator_certificate_json(q: u32, beta: f64, t: f64) -> Result<String, String> {
    let r = Rotator::new(q, beta, t).map_err(|e| e.to_string())?;
    to_json(&r.certificate())
}

#[wasm_bindgen]
pub fn psi_tau_curve(beta: f64, p: u32, t: f64, tau: f64, points: usize) -> Result<String, JsError> {
    psi_tau_curve_json(beta, p, t, tau, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn tau_scan(beta: f64, p: u32, t: f64, points: usize, starts: usize) -> Result<String, JsError> {
    tau_scan_json(beta, p, t, points, starts).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn rotator_certificate(q: u32, beta: f64, t: f64) -> Result<String, JsError> {
    rotator_certificate_json(q, beta, t).map_err(|e| JsError::new(&e))
}
