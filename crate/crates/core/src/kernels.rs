//! Joint a-priori kernels k(σ, η), densities with respect to α ⊗ α′ whose two
//! marginal sums equal one: Ising spin flips, heat kernels on the circle and
//! the 2-sphere, and deterministic coarse-graining maps.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Read;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::legendre_series;
use crate::spinspace::SpinSpace;

/// Tolerance on both marginal conditions.
pub const MARGINAL_TOL: f64 = 1e-8;
/// Smallest heat-kernel time accepted.
pub const T_MIN: f64 = 0.005;
/// Highest series degree a heat kernel may use.
pub const L_MAX: usize = 512;
/// Truncated heat-kernel entries below this are raised to it.
pub const CLAMP_FLOOR: f64 = 1e-12;
/// Fraction of materially negative series values above which a kernel is rejected.
pub const CLAMP_REJECT_FRACTION: f64 = 0.01;
const SERIES_TAIL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum KernelFamily {
    SpinFlip { t: f64, h_t: f64 },
    CircleHeat { t: f64, order: usize },
    SphereHeat { t: f64, order: usize },
    CoarseGrain { classes: usize },
    Custom,
}

/// A kernel density linking an initial space S to a transformed space S′.
#[derive(Debug, Clone)]
pub struct Kernel {
    space_s: Arc<SpinSpace>,
    space_sp: Arc<SpinSpace>,
    // Stored by transformed node: k[η * n_s + σ].
    by_eta: Vec<f64>,
    log_by_eta: Vec<f64>,
    family: KernelFamily,
    unbounded_log: bool,
    clamped: usize,
}

impl Kernel {
    /// Builds a kernel from `rows[σ][η]` and checks positivity and marginals.
    pub fn from_matrix(space_s: Arc<SpinSpace>, space_sp: Arc<SpinSpace>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let (ns, nsp) = (space_s.len(), space_sp.len());
        if rows.len() != ns || rows.iter().any(|r| r.len() != nsp) {
            return Err(Error::KernelRejected(format!("density must be {ns} x {nsp}")));
        }
        let mut by_eta = vec![0.0; ns * nsp];
        for (s, row) in rows.iter().enumerate() {
            for (e, &v) in row.iter().enumerate() {
                by_eta[e * ns + s] = v;
            }
        }
        Self::assemble(space_s, space_sp, by_eta, KernelFamily::Custom, false, 0)
    }

    fn assemble(
        space_s: Arc<SpinSpace>,
        space_sp: Arc<SpinSpace>,
        by_eta: Vec<f64>,
        family: KernelFamily,
        unbounded_log: bool,
        clamped: usize,
    ) -> Result<Self> {
        for &v in &by_eta {
            if !v.is_finite() || v < 0.0 || (v == 0.0 && !unbounded_log) {
                return Err(Error::KernelRejected(format!("entry {v} is not a positive finite density")));
            }
        }
        let log_by_eta = by_eta.iter().map(|v| v.ln()).collect();
        let k = Self { space_s, space_sp, by_eta, log_by_eta, family, unbounded_log, clamped };
        let defect = k.marginal_defect();
        if defect > MARGINAL_TOL {
            return Err(Error::MarginalViolation { defect, tol: MARGINAL_TOL });
        }
        Ok(k)
    }

    pub fn space_s(&self) -> &Arc<SpinSpace> {
        &self.space_s
    }

    pub fn space_sp(&self) -> &Arc<SpinSpace> {
        &self.space_sp
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    /// True for kernels with zeros, whose log is unbounded.
    pub fn unbounded_log(&self) -> bool {
        self.unbounded_log
    }

    /// Number of heat-kernel entries raised to [`CLAMP_FLOOR`].
    pub fn clamped_count(&self) -> usize {
        self.clamped
    }

    #[inline]
    pub fn density(&self, sigma: usize, eta: usize) -> f64 {
        self.by_eta[eta * self.space_s.len() + sigma]
    }

    /// k(·, η) over initial nodes.
    #[inline]
    pub fn column(&self, eta: usize) -> &[f64] {
        let n = self.space_s.len();
        &self.by_eta[eta * n..(eta + 1) * n]
    }

    /// log k(·, η); -∞ on the zero set.
    #[inline]
    pub fn log_column(&self, eta: usize) -> &[f64] {
        let n = self.space_s.len();
        &self.log_by_eta[eta * n..(eta + 1) * n]
    }

    /// Largest deviation from one over both marginal conditions.
    pub fn marginal_defect(&self) -> f64 {
        let (ns, nsp) = (self.space_s.len(), self.space_sp.len());
        let (a, ap) = (self.space_s.weights(), self.space_sp.weights());
        let mut defect: f64 = 0.0;
        for s in 0..ns {
            let row: f64 = (0..nsp).map(|e| ap[e] * self.density(s, e)).sum();
            defect = defect.max((row - 1.0).abs());
        }
        for e in 0..nsp {
            let col: f64 = self.column(e).iter().zip(a).map(|(k, w)| k * w).sum();
            defect = defect.max((col - 1.0).abs());
        }
        defect
    }

    /// Dense CSV: header `sigma_node,<η index>...`, one row per initial node.
    pub fn to_csv(&self) -> String {
        let nsp = self.space_sp.len();
        let mut out = String::from("sigma_node");
        for e in 0..nsp {
            let _ = write!(out, ",{e}");
        }
        out.push('\n');
        for s in 0..self.space_s.len() {
            let _ = write!(out, "{s}");
            for e in 0..nsp {
                let _ = write!(out, ",{}", self.density(s, e));
            }
            out.push('\n');
        }
        out
    }
}

/// h_t = ½ log((1 - e^{-2t}) / (1 + e^{-2t})), computed without cancellation.
pub fn spin_flip_field(t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("spin-flip time must be positive, got {t}")));
    }
    let x = (-2.0 * t).exp();
    Ok(0.5 * ((-(-2.0 * t).exp_m1()).ln() - x.ln_1p()))
}

/// Rate-one spin-flip kernel on the Ising space: k(σ, η) = e^{σηh_t} / cosh h_t.
pub fn spin_flip_kernel(t: f64) -> Result<Kernel> {
    spin_flip_kernel_on(Arc::new(SpinSpace::ising()), t)
}

/// As [`spin_flip_kernel`], on a caller-supplied copy of the Ising space.
pub fn spin_flip_kernel_on(space: Arc<SpinSpace>, t: f64) -> Result<Kernel> {
    if *space != SpinSpace::ising() {
        return Err(Error::InvalidParameter("spin-flip kernel needs the Ising space".into()));
    }
    let h = spin_flip_field(t)?;
    let c = h.cosh();
    // Node 0 is +1, node 1 is -1.
    let (same, diff) = (h.exp() / c, (-h).exp() / c);
    let by_eta = vec![same, diff, diff, same];
    Kernel::assemble(space.clone(), space, by_eta, KernelFamily::SpinFlip { t, h_t: h }, false, 0)
}

fn check_heat_time(t: f64) -> Result<()> {
    if !(t >= T_MIN) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("heat-kernel time must be >= {T_MIN}, got {t}")));
    }
    Ok(())
}

/// Last series index n with term bound ≥ the tail tolerance.
fn series_order(bound: impl Fn(usize) -> f64) -> Result<usize> {
    let mut n = 1;
    while bound(n) >= SERIES_TAIL {
        n += 1;
        if n > 100 * L_MAX {
            break;
        }
    }
    let order = n - 1;
    if order > L_MAX {
        return Err(Error::TruncationInsufficient { needed: order, cap: L_MAX });
    }
    Ok(order)
}

fn unit_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0)
}

fn check_unit_nodes(space: &SpinSpace, dim: usize, what: &str) -> Result<()> {
    for x in space.nodes() {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if x.len() != dim || (r2 - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "{what} kernel needs unit vectors in R^{dim}; space {} does not qualify",
                space.label()
            )));
        }
    }
    Ok(())
}

/// Truncated heat-kernel series at every node pair, before clamping or
/// validation, as `k[σ * n + η]`. Node dimension 2 selects the circle series,
/// dimension 3 the sphere series.
pub fn heat_kernel_series(space: &SpinSpace, t: f64) -> Result<(Vec<f64>, usize)> {
    check_heat_time(t)?;
    let dim = space.node(0).len();
    let coeffs: Vec<f64> = match dim {
        2 => {
            check_unit_nodes(space, 2, "circle heat")?;
            let order = series_order(|n| 2.0 * (-((n * n) as f64) * t).exp())?;
            (0..=order).map(|n| if n == 0 { 1.0 } else { 2.0 * (-((n * n) as f64) * t).exp() }).collect()
        }
        3 => {
            check_unit_nodes(space, 3, "sphere heat")?;
            let order = series_order(|l| (2 * l + 1) as f64 * (-((l * (l + 1)) as f64) * t).exp())?;
            (0..=order).map(|l| (2 * l + 1) as f64 * (-((l * (l + 1)) as f64) * t).exp()).collect()
        }
        _ => return Err(Error::GridUnsupported(format!("heat kernel on {dim}-dimensional nodes"))),
    };
    let n = space.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let c = unit_dot(space.node(i), space.node(j));
            let v = if dim == 2 { chebyshev_series(&coeffs, c) } else { legendre_series(&coeffs, c) };
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    Ok((k, coeffs.len() - 1))
}

/// Σ c_n T_n(x), with T_n(cos θ) = cos nθ.
fn chebyshev_series(coeffs: &[f64], x: f64) -> f64 {
    let (mut t0, mut t1) = (1.0, x);
    let mut acc = coeffs[0];
    for (n, c) in coeffs.iter().enumerate().skip(1) {
        if n > 1 {
            let t2 = 2.0 * x * t1 - t0;
            t0 = t1;
            t1 = t2;
        }
        acc += c * t1;
    }
    acc
}

/// Heat kernel of Brownian motion on the unit circle, k_t(θ) = 1 + 2 Σ e^{-n²t} cos nθ.
pub fn circle_heat_kernel(space: Arc<SpinSpace>, t: f64) -> Result<Kernel> {
    if space.node(0).len() != 2 {
        return Err(Error::InvalidParameter("circle heat kernel needs a circle grid".into()));
    }
    heat_kernel(space, t)
}

/// Heat kernel on the 2-sphere, k_t(cos γ) = Σ (2ℓ+1) e^{-ℓ(ℓ+1)t} P_ℓ(cos γ).
pub fn sphere_heat_kernel(space: Arc<SpinSpace>, t: f64) -> Result<Kernel> {
    if space.node(0).len() != 3 {
        return Err(Error::InvalidParameter("sphere heat kernel needs a sphere grid".into()));
    }
    heat_kernel(space, t)
}

fn heat_kernel(space: Arc<SpinSpace>, t: f64) -> Result<Kernel> {
    let (mut k, order) = heat_kernel_series(&space, t)?;
    // Entries far in the tail are round-off noise around zero and are simply
    // raised to the floor. Negative values larger than the floor mean the
    // truncated series lost positivity; those count towards rejection.
    let mut clamped = 0;
    let mut negative = 0;
    for v in k.iter_mut() {
        if *v < CLAMP_FLOOR {
            if *v < -CLAMP_FLOOR {
                negative += 1;
            }
            *v = CLAMP_FLOOR;
            clamped += 1;
        }
    }
    if negative as f64 > CLAMP_REJECT_FRACTION * k.len() as f64 {
        return Err(Error::KernelRejected(format!("{negative} of {} entries negative", k.len())));
    }
    let family = if space.node(0).len() == 2 {
        KernelFamily::CircleHeat { t, order }
    } else {
        KernelFamily::SphereHeat { t, order }
    };
    // Symmetric, so the [σ][η] layout equals the by-η layout.
    Kernel::assemble(space.clone(), space, k, family, false, clamped)
}

/// A map from nodes to class indices `0..n_classes`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    class_of: Vec<usize>,
    names: Vec<String>,
}

impl Partition {
    pub fn new(class_of: Vec<usize>) -> Self {
        let n_classes = class_of.iter().max().map_or(0, |m| m + 1);
        let names = (0..n_classes).map(|c| c.to_string()).collect();
        Self { class_of, names }
    }

    /// Classes from per-node label strings, numbered in order of first appearance.
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Self {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut names = Vec::new();
        let class_of = labels
            .iter()
            .map(|l| {
                *index.entry(l.as_ref()).or_insert_with(|| {
                    names.push(l.as_ref().to_string());
                    names.len() - 1
                })
            })
            .collect();
        Self { class_of, names }
    }

    /// Partition of an equispaced circle grid into `arcs` equal arcs.
    pub fn arcs(n_nodes: usize, arcs: usize) -> Result<Self> {
        if arcs == 0 || !n_nodes.is_multiple_of(arcs) {
            return Err(Error::InvalidParameter(format!("{n_nodes} nodes do not split into {arcs} arcs")));
        }
        let per = n_nodes / arcs;
        Ok(Self::new((0..n_nodes).map(|i| i / per).collect()))
    }

    /// Reads CSV rows `node_index,label`; a non-numeric first row is a header.
    pub fn read_csv<R: Read>(reader: R, n_nodes: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
        let mut labels: Vec<Option<String>> = vec![None; n_nodes];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() < 2 {
                return Err(Error::Parse(format!("partition row {row}: expected node_index,label")));
            }
            let Ok(idx) = rec[0].parse::<usize>() else {
                if row == 0 {
                    continue;
                }
                return Err(Error::Parse(format!("partition row {row}: bad node index {:?}", &rec[0])));
            };
            if idx >= n_nodes {
                return Err(Error::Parse(format!("partition node {idx} out of range")));
            }
            if labels[idx].replace(rec[1].to_string()).is_some() {
                return Err(Error::Parse(format!("partition node {idx} listed twice")));
            }
        }
        let labels: Vec<String> = labels
            .into_iter()
            .enumerate()
            .map(|(i, l)| l.ok_or_else(|| Error::Parse(format!("partition misses node {i}"))))
            .collect::<Result<_>>()?;
        Ok(Self::from_labels(&labels))
    }

    pub fn class_of(&self) -> &[usize] {
        &self.class_of
    }

    pub fn n_classes(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Nodes in each class.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.n_classes()];
        for (i, &c) in self.class_of.iter().enumerate() {
            m[c].push(i);
        }
        m
    }
}

/// Deterministic coarse-graining: S′ is the label set with α′(η) = α(S_η) and
/// k(σ, η) = 1{σ ∈ S_η} / α(S_η).
pub fn coarse_grain_kernel(space: Arc<SpinSpace>, partition: &Partition) -> Result<Kernel> {
    let ns = space.len();
    if partition.class_of.len() != ns {
        return Err(Error::InvalidParameter(format!(
            "partition covers {} nodes, space has {ns}",
            partition.class_of.len()
        )));
    }
    let members = partition.members();
    let mass: Vec<f64> = members.iter().map(|m| m.iter().map(|&i| space.weights()[i]).sum()).collect();
    for (c, &w) in mass.iter().enumerate() {
        if !(w > 0.0) {
            return Err(Error::EmptyPartitionClass(partition.names[c].clone()));
        }
    }
    let label_nodes = (0..mass.len()).map(|c| vec![c as f64]).collect();
    let space_sp = Arc::new(SpinSpace::label_space(format!("{}/labels", space.label()), label_nodes, mass.clone())?);
    let nsp = mass.len();
    let mut by_eta = vec![0.0; ns * nsp];
    for (i, &c) in partition.class_of.iter().enumerate() {
        by_eta[c * ns + i] = 1.0 / mass[c];
    }
    let unbounded = by_eta.contains(&0.0);
    Kernel::assemble(space, space_sp, by_eta, KernelFamily::CoarseGrain { classes: nsp }, unbounded, 0)
}

/// ρ_α(k) = max_η min_a (Σ_σ α(σ) k(σ,η) d²(σ,a))^{1/2}, with a ranging over grid nodes.
pub fn rho_alpha_k(kernel: &Kernel) -> f64 {
    let s = &kernel.space_s;
    (0..kernel.space_sp.len())
        .map(|e| min_spread(s, |i| s.weights()[i] * kernel.density(i, e), 0..s.len()))
        .fold(0.0, f64::max)
}

/// ρ_α = min_a (Σ_σ α(σ) d²(σ,a))^{1/2}.
pub fn rho_alpha(space: &SpinSpace) -> f64 {
    min_spread(space, |i| space.weights()[i], 0..space.len())
}

/// min over `anchors` of (Σ_σ w(σ) d²(σ,a))^{1/2}.
pub(crate) fn min_spread(space: &SpinSpace, w: impl Fn(usize) -> f64, anchors: impl Iterator<Item = usize>) -> f64 {
    let n = space.len();
    let w: Vec<f64> = (0..n).map(w).collect();
    anchors
        .map(|a| {
            (0..n)
                .filter(|&i| w[i] != 0.0)
                .map(|i| {
                    let d = space.distance(i, a);
                    w[i] * d * d
                })
                .sum::<f64>()
                .sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spinspace::{make_circle, make_sphere};
    use std::f64::consts::LN_2;

    #[test]
    fn spin_flip_field_example() {
        let h = spin_flip_field(LN_2 / 2.0).unwrap();
        assert!((h - 0.5 * (1.0f64 / 3.0).ln()).abs() < 1e-15);
        assert!((h + 0.549306144334055).abs() < 1e-12);
        assert!(spin_flip_field(40.0).unwrap().abs() < 1e-30);
        assert!(matches!(spin_flip_field(0.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn spin_flip_marginals_and_limit() {
        for t in [1e-3, 0.1, LN_2 / 2.0, 3.0] {
            let k = spin_flip_kernel(t).unwrap();
            assert!(k.marginal_defect() < 1e-15);
        }
        let k = spin_flip_kernel(30.0).unwrap();
        for s in 0..2 {
            for e in 0..2 {
                assert!((k.density(s, e) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spin_flip_rho_is_one_at_ln2_over_2() {
        let k = spin_flip_kernel(LN_2 / 2.0).unwrap();
        assert!((rho_alpha_k(&k) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn circle_heat_kernel_marginals_and_symmetry() {
        let s = Arc::new(make_circle(128).unwrap());
        for t in [0.01, 0.1, 1.0] {
            let k = circle_heat_kernel(s.clone(), t).unwrap();
            assert!(k.marginal_defect() < 1e-8);
            for i in 0..128 {
                for j in 0..128 {
                    assert_eq!(k.density(i, j), k.density(j, i));
                }
            }
            // Depends on the angle only.
            assert!((k.density(0, 5) - k.density(17, 22)).abs() < 1e-12);
        }
    }

    #[test]
    fn heat_kernels_flatten_at_large_time() {
        let c = circle_heat_kernel(Arc::new(make_circle(16).unwrap()), 50.0).unwrap();
        let s = sphere_heat_kernel(Arc::new(make_sphere(6, 8).unwrap()), 50.0).unwrap();
        for k in [c, s] {
            let n = k.space_s().len();
            for i in 0..n {
                for j in 0..n {
                    assert!((k.density(i, j) - 1.0).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn heat_kernel_time_floor() {
        let s = Arc::new(make_circle(64).unwrap());
        assert!(matches!(circle_heat_kernel(s, 0.001), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn coarse_kernel_examples() {
        let s = Arc::new(make_circle(64).unwrap());
        let one = coarse_grain_kernel(s.clone(), &Partition::new(vec![0; 64])).unwrap();
        assert_eq!(one.space_sp().len(), 1);
        assert!(!one.unbounded_log());
        assert!((0..64).all(|i| (one.density(i, 0) - 1.0).abs() < 1e-15));

        let halves = coarse_grain_kernel(s.clone(), &Partition::arcs(64, 2).unwrap()).unwrap();
        assert_eq!(halves.space_sp().weights(), &[0.5, 0.5]);
        assert!(halves.unbounded_log());
        for i in 0..64 {
            for e in 0..2 {
                let v = halves.density(i, e);
                assert!(v == 0.0 || v == 2.0);
            }
        }

        let single = coarse_grain_kernel(s, &Partition::new((0..64).collect())).unwrap();
        for i in 0..64 {
            for e in 0..64 {
                let want = if i == e { 64.0 } else { 0.0 };
                assert!((single.density(i, e) - want).abs() < 1e-12);
            }
        }
        assert_eq!(rho_alpha_k(&single), 0.0);
    }

    #[test]
    fn empty_class_is_rejected() {
        let s = Arc::new(make_circle(8).unwrap());
        let err = coarse_grain_kernel(s, &Partition::new(vec![0, 0, 0, 0, 2, 2, 2, 2])).unwrap_err();
        assert_eq!(err, Error::EmptyPartitionClass("1".into()));
    }

    #[test]
    fn refinement_never_increases_rho() {
        let s = Arc::new(make_circle(128).unwrap());
        let mut prev = f64::INFINITY;
        for arcs in [2, 4, 8, 16, 32] {
            let k = coarse_grain_kernel(s.clone(), &Partition::arcs(128, arcs).unwrap()).unwrap();
            let r = rho_alpha_k(&k);
            assert!(r <= prev + 1e-15);
            prev = r;
        }
    }

    #[test]
    fn rho_alpha_on_circle_and_sphere() {
        assert!((rho_alpha(&make_circle(128).unwrap()) - 2f64.sqrt()).abs() < 1e-3);
        assert!((rho_alpha(&make_sphere(8, 16).unwrap()) - 2f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn circle_rho_k_matches_closed_form() {
        let s = Arc::new(make_circle(128).unwrap());
        let k = circle_heat_kernel(s, 0.1).unwrap();
        let want = 2f64.sqrt() * (1.0 - (-0.1f64).exp()).sqrt();
        assert!((want - 0.43626).abs() < 1e-5);
        assert!((rho_alpha_k(&k) - want).abs() < 0.02 * want);
    }

    #[test]
    fn partition_csv() {
        let text = "node_index,label\n0,a\n1,b\n2,a\n3,b\n";
        let p = Partition::read_csv(text.as_bytes(), 4).unwrap();
        assert_eq!(p.class_of(), &[0, 1, 0, 1]);
        assert_eq!(p.names(), &["a".to_string(), "b".to_string()]);
        assert!(Partition::read_csv("0,a\n1,b\n".as_bytes(), 3).is_err());
        assert!(Partition::read_csv("0,a\n0,b\n1,c\n".as_bytes(), 2).is_err());
    }

    #[test]
    fn kernel_csv_layout() {
        let csv = spin_flip_kernel(LN_2 / 2.0).unwrap().to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "sigma_node,0,1");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn custom_kernel_validation() {
        let s = Arc::new(SpinSpace::ising());
        assert!(Kernel::from_matrix(s.clone(), s.clone(), vec![vec![1.0, 1.0], vec![1.0, 1.0]]).is_ok());
        assert!(matches!(
            Kernel::from_matrix(s.clone(), s.clone(), vec![vec![1.5, 1.0], vec![0.5, 1.0]]),
            Err(Error::MarginalViolation { .. })
        ));
        assert!(matches!(
            Kernel::from_matrix(s.clone(), s, vec![vec![2.0, 0.0], vec![0.0, 2.0]]),
            Err(Error::KernelRejected(_))
        ));
    }
}
