use std::fmt::Write as _;
use std::sync::Arc;

use mfgibbs::cflm::transformed_interaction;
use mfgibbs::models::{ising_nu_prime, tau_grid, tilted_nu_prime};
use mfgibbs::{
    bad_point_scan, certify as certify_constants, compute_constants, convergence_study, grid_minimize_psi_tau,
    make_circle, make_sphere, Certificate, CoarseGrainPreset, Interaction, IsingPSpin, Measure, Partition,
    QuadraticCoupling, Rotator, ScanParams, SearchParams, SolverParams, SpinSpace, TwoLayerModel,
};
use serde_json::{json, Value};

use crate::config::{ConstantsMode, ModelName, RunConfig};
use crate::output::{self, fmt, num};
use crate::{CliError, EXIT_BAD, EXIT_INCOMPLETE, EXIT_OK};

fn search_params(cfg: &RunConfig) -> SearchParams {
    SearchParams {
        n_starts: cfg.starts,
        seed: cfg.seed,
        cluster_tol: cfg.cluster_tol,
        tie_tol: cfg.tie_tol,
        solver: SolverParams { tol: cfg.tol, max_iter: cfg.max_iter, damping: cfg.damping },
    }
}

fn base_space(cfg: &RunConfig) -> Result<SpinSpace, CliError> {
    Ok(match (cfg.q, cfg.resolution.as_slice()) {
        (2, [n]) => make_circle(*n)?,
        (3, [np, na]) => make_sphere(*np, *na)?,
        (q, r) => return Err(CliError::config(format!("no grid for q={q} with resolution {r:?}"))),
    })
}

fn partition(cfg: &RunConfig, n_nodes: usize) -> Result<Partition, CliError> {
    match (&cfg.partition_csv, cfg.arcs) {
        (Some(text), _) => Ok(Partition::read_csv(text.as_bytes(), n_nodes)?),
        (None, Some(k)) if cfg.q == 2 => Ok(Partition::arcs(n_nodes, k)?),
        (None, Some(_)) => Err(CliError::config("--arcs needs the circle (q = 2)")),
        (None, None) => Err(CliError::config("the coarse model needs --partition or --arcs")),
    }
}

/// Grid model plus its certificate.
fn build(cfg: &RunConfig) -> Result<(TwoLayerModel, Certificate), CliError> {
    let sampled = |model: &TwoLayerModel, descriptor: String| -> Result<Certificate, CliError> {
        let c = compute_constants(model.interaction(), cfg.probes, cfg.seed)?;
        Ok(certify_constants(&c, model.kernel(), descriptor))
    };
    match cfg.model {
        ModelName::Ising => {
            let pre = IsingPSpin::new(cfg.beta, cfg.p, cfg.t)?;
            let model = pre.model()?;
            let cert = match cfg.constants {
                ConstantsMode::Exact => pre.certificate(),
                ConstantsMode::Sampled => sampled(&model, pre.describe())?,
            };
            Ok((model, cert))
        }
        ModelName::Rotator => {
            let r = Rotator::new(cfg.q, cfg.beta, cfg.t)?;
            let model = r.model(&cfg.resolution)?;
            let cert = match cfg.constants {
                ConstantsMode::Exact => r.certificate(),
                ConstantsMode::Sampled => sampled(&model, r.describe())?,
            };
            Ok((model, cert))
        }
        ModelName::Coarse => {
            let space = Arc::new(base_space(cfg)?);
            let n = space.len();
            let inter = Interaction::on_coordinates(
                space,
                Arc::new(QuadraticCoupling { beta: cfg.beta, dim: cfg.q as usize }),
            )?;
            let c = compute_constants(&inter, cfg.probes, cfg.seed)?;
            let pre = CoarseGrainPreset::new(inter, partition(cfg, n)?)?;
            let descriptor = format!("coarse(q={}, beta={}, classes={})", cfg.q, cfg.beta, pre.partition.n_classes());
            let cert = certify_constants(&c, &pre.kernel, descriptor);
            Ok((pre.model(&c)?, cert))
        }
    }
}

fn family(cfg: &RunConfig, model: &TwoLayerModel, tau: f64) -> Result<Measure, CliError> {
    let space = model.space_sp().clone();
    Ok(match cfg.model {
        ModelName::Ising => ising_nu_prime(space, tau)?,
        _ => tilted_nu_prime(space, tau)?,
    })
}

/// `tau=<x>` or a measure CSV whose last column is the weight.
fn nu_prime(cfg: &RunConfig, model: &TwoLayerModel) -> Result<Measure, CliError> {
    if let Some(x) = cfg.nu_prime.strip_prefix("tau=") {
        let tau: f64 = x.trim().parse().map_err(|_| CliError::config(format!("bad tau in {:?}", cfg.nu_prime)))?;
        return family(cfg, model, tau);
    }
    let text = std::fs::read_to_string(&cfg.nu_prime)
        .map_err(|e| CliError::config(format!("cannot read nu' file {}: {e}", cfg.nu_prime)))?;
    let mut weights = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let mut cols = line.split(',').map(str::trim);
        let Some(Ok(idx)) = cols.next().map(str::parse::<usize>) else {
            continue;
        };
        if idx != weights.len() {
            return Err(CliError::config(format!("nu' file: expected node {} but found {idx}", weights.len())));
        }
        let w = cols
            .next_back()
            .and_then(|w| w.parse::<f64>().ok())
            .ok_or_else(|| CliError::config(format!("nu' file: bad weight on node {idx}")))?;
        weights.push(w);
    }
    Ok(Measure::new(model.space_sp().clone(), weights)?)
}

pub fn certify(cfg: &RunConfig) -> Result<u8, CliError> {
    let closed_form_only = cfg.constants == ConstantsMode::Exact && cfg.dump.is_none();
    let cert = match (cfg.model, closed_form_only) {
        (ModelName::Ising, true) => IsingPSpin::new(cfg.beta, cfg.p, cfg.t)?.certificate(),
        (ModelName::Rotator, true) => Rotator::new(cfg.q, cfg.beta, cfg.t)?.certificate(),
        _ => {
            let (model, cert) = build(cfg)?;
            if let Some(path) = &cfg.dump {
                output::dump(cfg, path, model.kernel().to_csv())?;
            }
            cert
        }
    };
    output::json(cfg, json!({ "certificate": cert }))?;
    Ok(EXIT_OK)
}

fn cluster_json(c: &mfgibbs::cflm::Cluster) -> Value {
    let r = &c.report;
    json!({
        "psi": r.psi_value,
        "j": r.j_value,
        "residual": r.residual,
        "magnetization_vector": r.magnetization,
        "members": c.members,
        "stable": c.stable,
        "iterations": r.iterations,
    })
}

pub fn fixed_point(cfg: &RunConfig) -> Result<u8, CliError> {
    let (model, cert) = build(cfg)?;
    let nu = nu_prime(cfg, &model)?;
    let ti = transformed_interaction(&model, &nu, &search_params(cfg))?;
    let s = &ti.search;
    let unresolved = s.stability_unresolved || ti.lower_confidence;
    output::json(
        cfg,
        json!({
            "model": cert.model_descriptor,
            "L": cert.l,
            "phi_k": ti.phi_k,
            "clusters": s.clusters.iter().map(cluster_json).collect::<Vec<_>>(),
            "unstable": s.unstable.iter().map(cluster_json).collect::<Vec<_>>(),
            "flags": {
                "runs": s.runs,
                "unconverged": s.unconverged,
                "stability_unresolved": s.stability_unresolved,
                "lower_confidence": ti.lower_confidence,
                "search_incomplete_possible": ti.search_incomplete_possible,
            },
        }),
    )?;
    if let Some(path) = &cfg.dump {
        output::dump(cfg, path, s.clusters[0].report.state.to_csv())?;
    }
    Ok(if unresolved { EXIT_INCOMPLETE } else { EXIT_OK })
}

pub fn scan(cfg: &RunConfig) -> Result<u8, CliError> {
    let (model, cert) = build(cfg)?;
    let taus = tau_grid(cfg.tau_grid);
    let grid = taus.iter().map(|&t| family(cfg, &model, t)).collect::<Result<Vec<_>, _>>()?;
    let params = ScanParams {
        search: search_params(cfg),
        lipschitz_scale: if cert.l2.is_finite() { cert.l2 } else { 1.0 },
        ..ScanParams::default()
    };
    let table = bad_point_scan(&model, &grid, &params)?;
    let n_sp = model.space_sp().len();
    let mut out = String::from("point_index,tau,cluster_count,psi_gap,bad_flag");
    for j in 0..n_sp {
        let _ = write!(out, ",gamma1_prime_{j}");
    }
    out.push_str(",jump_to_next,suspect_flag\n");
    for (row, tau) in table.rows.iter().zip(&taus) {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            row.point_index,
            fmt(*tau),
            row.cluster_count,
            fmt(row.psi_gap),
            u8::from(row.bad)
        );
        for j in 0..n_sp {
            let _ = write!(out, ",{}", num(row.gamma1_prime.as_ref().map(|g| g[j])));
        }
        let _ = writeln!(out, ",{},{}", num(row.jump_to_next), u8::from(row.suspect));
    }
    output::csv(cfg, out)?;
    Ok(if table.bad_count > 0 {
        EXIT_BAD
    } else if table.search_incomplete_possible {
        EXIT_INCOMPLETE
    } else {
        EXIT_OK
    })
}

pub fn oracle(cfg: &RunConfig) -> Result<u8, CliError> {
    if cfg.model != ModelName::Ising {
        return Err(CliError::config("the finite-N oracle exists for the Ising model only"));
    }
    let study = convergence_study(cfg.beta, cfg.p, cfg.t, cfg.tau, &cfg.n_list, &search_params(cfg))?;
    let mut out = String::from("N,tau_realized,exact,limit,error,ratio\n");
    for r in &study.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.n,
            fmt(r.tau_realized),
            fmt(r.exact),
            fmt(r.limit),
            fmt(r.error),
            num(r.ratio)
        );
    }
    let _ = writeln!(out, "# decay_exponent={}", num(study.decay_exponent));
    output::csv(cfg, out)?;
    Ok(EXIT_OK)
}

pub const CLOSED_FORMS: &[&str] = &[
    "rotator-lipschitz",
    "rotator-rho-k",
    "rotator-certificate",
    "ising-h-t",
    "ising-rho-k",
    "ising-certificate",
    "ising-psi-tau",
    "ising-mf-rhs",
    "ising-minimizers",
];

pub fn closed_form(cfg: &RunConfig) -> Result<u8, CliError> {
    let name = cfg
        .name
        .as_deref()
        .ok_or_else(|| CliError::config(format!("--name is required; one of {}", CLOSED_FORMS.join(", "))))?;
    let m = || cfg.m.ok_or_else(|| CliError::config(format!("{name} needs --m")));
    let rot = || Rotator::new(cfg.q, cfg.beta, cfg.t);
    let ising = || IsingPSpin::new(cfg.beta, cfg.p, cfg.t);
    let value = match name {
        "rotator-lipschitz" => json!(rot()?.lipschitz()),
        "rotator-rho-k" => json!(rot()?.rho_alpha_k()),
        "rotator-certificate" => json!(rot()?.certificate()),
        "ising-h-t" => json!(ising()?.h_t()),
        "ising-rho-k" => json!(ising()?.rho_alpha_k()),
        "ising-certificate" => json!(ising()?.certificate()),
        "ising-psi-tau" => json!(ising()?.psi_tau(m()?, cfg.tau)),
        "ising-mf-rhs" => json!(ising()?.mf_rhs(m()?, cfg.tau)),
        "ising-minimizers" => json!(grid_minimize_psi_tau(cfg.beta, cfg.p, cfg.t, cfg.tau, 2001)?),
        other => {
            return Err(CliError::config(format!("unknown closed form {other:?}; one of {}", CLOSED_FORMS.join(", "))))
        }
    };
    output::json(cfg, json!({ "name": name, "value": value }))?;
    Ok(EXIT_OK)
}
