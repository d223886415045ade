//! Flag and config-file handling. Every setting can come from a JSON config
//! file (`--config`) or a flag; flags win. The resolved [`RunConfig`] is what
//! gets hashed into `config_hash`.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    Ising,
    Rotator,
    Coarse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum KernelName {
    SpinFlip,
    Heat,
    Coarse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ConstantsMode {
    Exact,
    Sampled,
}

/// Raw settings. All optional so that a config file and flags can be layered.
#[derive(Debug, Clone, Default, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Model preset
    #[arg(long, value_enum)]
    pub model: Option<ModelName>,
    /// Kernel family; must match the model when given
    #[arg(long, value_enum)]
    pub kernel: Option<KernelName>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Ising interaction degree
    #[arg(long)]
    pub p: Option<u32>,
    /// Rotator dimension (2 = circle, 3 = sphere)
    #[arg(long)]
    pub q: Option<u32>,
    /// Kernel time
    #[arg(long)]
    pub t: Option<f64>,
    /// Grid resolution: `n` for the circle, `n_polar,n_azimuth` for the sphere
    #[arg(long, value_delimiter = ',')]
    pub resolution: Option<Vec<usize>>,
    /// Partition CSV `node_index,label` for the coarse model
    #[arg(long)]
    pub partition: Option<PathBuf>,
    /// Equal circle arcs for the coarse model, instead of a partition file
    #[arg(long)]
    pub arcs: Option<usize>,
    /// Interaction constants: closed form where available, or sampled
    #[arg(long, value_enum)]
    pub constants: Option<ConstantsMode>,
    /// Probe count for sampled constants
    #[arg(long)]
    pub probes: Option<usize>,
    /// `tau=<x>` on the preset family, or a measure CSV `node_index,...,weight`
    #[arg(long)]
    pub nu_prime: Option<String>,
    /// Number of tau grid points on [-1, 1]
    #[arg(long)]
    pub tau_grid: Option<usize>,
    /// Target tau for the oracle study or closed forms
    #[arg(long)]
    pub tau: Option<f64>,
    /// Magnetization argument for closed forms
    #[arg(long)]
    pub m: Option<f64>,
    /// System sizes for the oracle study
    #[arg(long, value_delimiter = ',')]
    pub n_list: Option<Vec<usize>>,
    /// Name of the closed form to evaluate
    #[arg(long)]
    pub name: Option<String>,
    /// Random starts per conditioning measure
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fixed-point tolerance
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub damping: Option<f64>,
    #[arg(long)]
    pub cluster_tol: Option<f64>,
    #[arg(long)]
    pub tie_tol: Option<f64>,
    /// Output file; standard output when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Extra CSV dump: the constrained density for `fixed-point`, the kernel for `certify`
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

macro_rules! layer {
    ($flags:expr, $file:expr, $($field:ident),*) => {
        Settings { $($field: $flags.$field.or($file.$field)),* }
    };
}

impl Settings {
    /// Flags override the file.
    pub fn over(self, file: Settings) -> Settings {
        layer!(
            self,
            file,
            model,
            kernel,
            beta,
            p,
            q,
            t,
            resolution,
            partition,
            arcs,
            constants,
            probes,
            nu_prime,
            tau_grid,
            tau,
            m,
            n_list,
            name,
            starts,
            seed,
            tol,
            max_iter,
            damping,
            cluster_tol,
            tie_tol,
            out,
            dump
        )
    }

    pub fn load(path: &Path) -> Result<Settings, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }
}

/// Resolved settings with defaults filled in.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    pub model: ModelName,
    pub kernel: KernelName,
    pub beta: f64,
    pub p: u32,
    pub q: u32,
    pub t: f64,
    pub resolution: Vec<usize>,
    pub partition: Option<PathBuf>,
    pub arcs: Option<usize>,
    pub constants: ConstantsMode,
    pub probes: usize,
    pub nu_prime: String,
    pub tau_grid: usize,
    pub tau: f64,
    pub m: Option<f64>,
    pub n_list: Vec<usize>,
    pub name: Option<String>,
    pub starts: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub cluster_tol: f64,
    pub tie_tol: f64,
    /// Partition file contents, so that the hash follows the data.
    pub partition_csv: Option<String>,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub dump: Option<PathBuf>,
}

impl RunConfig {
    pub fn resolve(command: &'static str, s: Settings) -> Result<RunConfig, CliError> {
        let model = s.model.unwrap_or(ModelName::Ising);
        let q = s.q.unwrap_or(2);
        let default_kernel = match model {
            ModelName::Ising => KernelName::SpinFlip,
            ModelName::Rotator => KernelName::Heat,
            ModelName::Coarse => KernelName::Coarse,
        };
        let kernel = s.kernel.unwrap_or(default_kernel);
        if kernel != default_kernel {
            return Err(CliError::config(format!("kernel {kernel:?} does not fit model {model:?}")));
        }
        let resolution = s.resolution.unwrap_or_else(|| if q == 3 { vec![8, 16] } else { vec![128] });
        let constants = s.constants.unwrap_or(match model {
            ModelName::Coarse => ConstantsMode::Sampled,
            _ => ConstantsMode::Exact,
        });
        if model == ModelName::Coarse && constants == ConstantsMode::Exact {
            return Err(CliError::config("the coarse model has no closed-form constants; use --constants sampled"));
        }
        if model == ModelName::Coarse && s.partition.is_some() == s.arcs.is_some() {
            return Err(CliError::config("the coarse model needs exactly one of --partition and --arcs"));
        }
        let partition_csv = match &s.partition {
            Some(path) => Some(
                std::fs::read_to_string(path)
                    .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?,
            ),
            None => None,
        };
        let tau_grid = s.tau_grid.unwrap_or(101);
        if tau_grid < 2 {
            return Err(CliError::config("--tau-grid needs at least 2 points"));
        }
        Ok(RunConfig {
            command,
            model,
            kernel,
            beta: s.beta.unwrap_or(0.5),
            p: s.p.unwrap_or(2),
            q,
            t: s.t.unwrap_or(if model == ModelName::Ising { std::f64::consts::LN_2 / 2.0 } else { 0.1 }),
            resolution,
            partition: s.partition,
            arcs: s.arcs,
            constants,
            probes: s.probes.unwrap_or(4096),
            nu_prime: s.nu_prime.unwrap_or_else(|| "tau=0".into()),
            tau_grid,
            tau: s.tau.unwrap_or(0.5),
            m: s.m,
            n_list: s.n_list.unwrap_or_else(|| vec![100, 200, 400, 800, 1600]),
            name: s.name,
            starts: s.starts.unwrap_or(32),
            seed: s.seed.unwrap_or(0),
            tol: s.tol.unwrap_or(1e-12),
            max_iter: s.max_iter.unwrap_or(100_000),
            damping: s.damping.unwrap_or(1.0),
            cluster_tol: s.cluster_tol.unwrap_or(1e-8),
            tie_tol: s.tie_tol.unwrap_or(1e-9),
            partition_csv,
            out: s.out,
            dump: s.dump,
        })
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
