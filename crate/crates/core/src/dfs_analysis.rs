//! Time-dependent decoherence-free subspaces: common degenerate right-eigenspaces of the Lindblad
//! operators, the effective Hamiltonian, the invariance conditions, and gauge-continuous basis paths.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    columns, eigenvalues, from_columns, gram_schmidt, identity, max_abs, nullspace, orthogonal_completion,
    phase_fix_largest, polar_unitary, projector, subspace_overlap, CMatrix, CVector, I,
};
use crate::operator_model::{OperatorSet, SystemModel};

/// Relative tolerance for grouping eigenvalues into degenerate clusters.
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-8;

/// Orthonormal DFS and complement bases with the common eigenvalues `c_α`.
#[derive(Debug, Clone, PartialEq)]
pub struct DfsDecomposition {
    /// `N×M`, columns `|Φ_i⟩`.
    pub dfs_basis: CMatrix,
    /// `N×(N−M)`, columns `|Φ_n^⊥⟩`.
    pub comp_basis: CMatrix,
    pub eigenvalues: Vec<C64>,
    pub proj_dfs: CMatrix,
    pub proj_comp: CMatrix,
}

impl DfsDecomposition {
    pub fn from_bases(dfs_basis: CMatrix, comp_basis: CMatrix, eigenvalues: Vec<C64>) -> Self {
        let proj_dfs = projector(&dfs_basis);
        let proj_comp = projector(&comp_basis);
        Self { dfs_basis, comp_basis, eigenvalues, proj_dfs, proj_comp }
    }

    pub fn dim(&self) -> usize {
        self.dfs_basis.nrows()
    }

    /// `M`.
    pub fn dfs_dim(&self) -> usize {
        self.dfs_basis.ncols()
    }

    /// `N − M`.
    pub fn comp_dim(&self) -> usize {
        self.comp_basis.ncols()
    }

    pub fn dfs_vec(&self, i: usize) -> CVector {
        self.dfs_basis.column(i).into_owned()
    }

    pub fn comp_vec(&self, n: usize) -> CVector {
        self.comp_basis.column(n).into_owned()
    }

    /// Multiplies each basis vector by the given unit phase.
    pub fn with_phases(&self, dfs_phases: &[f64], comp_phases: &[f64]) -> Self {
        let mut d = self.dfs_basis.clone();
        for (i, &p) in dfs_phases.iter().enumerate() {
            d.column_mut(i).iter_mut().for_each(|x| *x *= C64::from_polar(1.0, p));
        }
        let mut q = self.comp_basis.clone();
        for (n, &p) in comp_phases.iter().enumerate() {
            q.column_mut(n).iter_mut().for_each(|x| *x *= C64::from_polar(1.0, p));
        }
        Self::from_bases(d, q, self.eigenvalues.clone())
    }

    /// Largest deviation from orthonormality of the joint basis `[Φ | Φ^⊥]`.
    pub fn orthonormality_error(&self) -> f64 {
        let n = self.dim();
        let mut joint = self.dfs_basis.clone().resize_horizontally(n, C64::new(0.0, 0.0));
        for k in 0..self.comp_dim() {
            joint.set_column(self.dfs_dim() + k, &self.comp_basis.column(k));
        }
        max_abs(&(joint.adjoint() * &joint - identity(n)))
    }
}

/// Candidates returned by [`common_degenerate_eigenspace`].
#[derive(Debug, Clone, PartialEq)]
pub struct EigenspaceScan {
    pub candidates: Vec<DfsDecomposition>,
    /// Indices `α` of Lindblad operators found non-diagonalisable.
    pub defective_ops: Vec<usize>,
}

struct Cluster {
    value: C64,
    multiplicity: usize,
}

fn cluster_eigenvalues(values: &[C64], tol: f64) -> Vec<Cluster> {
    let mut clusters: Vec<(Vec<C64>, C64)> = Vec::new();
    for &v in values {
        match clusters.iter_mut().find(|(_, rep)| (*rep - v).norm() <= tol) {
            Some((members, rep)) => {
                members.push(v);
                *rep = members.iter().sum::<C64>() / members.len() as f64;
            }
            None => clusters.push((vec![v], v)),
        }
    }
    let mut out: Vec<Cluster> =
        clusters.into_iter().map(|(m, rep)| Cluster { value: rep, multiplicity: m.len() }).collect();
    out.sort_by(|a, b| b.value.re.total_cmp(&a.value.re).then(b.value.im.total_cmp(&a.value.im)));
    out
}

fn scale_of(f: &CMatrix) -> f64 {
    f.norm().max(f64::MIN_POSITIVE)
}

/// Common degenerate right-eigenspaces of all `F_α`, one candidate per eigenvalue tuple.
pub fn common_degenerate_eigenspace(ops: &OperatorSet, cluster_tol: f64) -> Result<EigenspaceScan> {
    let n = ops.dim();
    if n < 2 {
        return Err(Error::Argument("DFS analysis needs dim ≥ 2".into()));
    }
    if ops.lindblads.is_empty() {
        return Err(Error::Argument("DFS analysis needs at least one Lindblad operator".into()));
    }
    let mut defective_ops = Vec::new();

    let first = &ops.lindblads[0];
    let tol0 = cluster_tol * scale_of(first);
    let mut seeds: Vec<(Vec<C64>, CMatrix)> = Vec::new();
    let mut all_eigvecs: Vec<CVector> = Vec::new();
    for cl in cluster_eigenvalues(&eigenvalues(first), tol0) {
        let shifted = first - identity(n) * cl.value;
        let ns = nullspace(&shifted, tol0);
        if ns.ncols() < cl.multiplicity && !defective_ops.contains(&0) {
            defective_ops.push(0);
        }
        if ns.ncols() > 0 {
            all_eigvecs.extend(columns(&ns));
            seeds.push((vec![cl.value], ns));
        }
    }

    for (alpha, f) in ops.lindblads.iter().enumerate().skip(1) {
        let tol = cluster_tol * scale_of(f);
        let full = cluster_eigenvalues(&eigenvalues(f), tol);
        if full.iter().any(|cl| nullspace(&(f - identity(n) * cl.value), tol).ncols() < cl.multiplicity) {
            defective_ops.push(alpha);
        }
        let mut next = Vec::new();
        for (cs, v) in seeds {
            let compressed = v.adjoint() * f * &v;
            for cl in cluster_eigenvalues(&eigenvalues(&compressed), tol) {
                let y = nullspace(&((f - identity(n) * cl.value) * &v), tol);
                if y.ncols() > 0 {
                    let mut cs2 = cs.clone();
                    cs2.push(cl.value);
                    next.push((cs2, &v * y));
                }
            }
        }
        seeds = next;
    }

    let candidates = seeds
        .into_iter()
        .map(|(_, v)| {
            let basis = gram_schmidt(&columns(&v), &[], 1e-10);
            let dfs = from_columns(n, &basis);
            let cvals = ops.lindblads.iter().map(|f| (dfs.adjoint() * f * &dfs).trace() / dfs.ncols() as f64).collect();
            let comp = orthogonal_completion(n, &basis, &all_eigvecs);
            DfsDecomposition::from_bases(dfs, from_columns(n, &comp), cvals)
        })
        .collect();
    Ok(EigenspaceScan { candidates, defective_ops })
}

/// `H_eff⁰ = H₀ + (i/2)Σ_α(c_α* F_α − c_α F_α†)`.
pub fn effective_hamiltonian(ops: &OperatorSet, c: &[C64]) -> Result<CMatrix> {
    if c.len() != ops.lindblads.len() {
        return Err(Error::Argument(format!(
            "{} eigenvalues supplied for {} Lindblad operators",
            c.len(),
            ops.lindblads.len()
        )));
    }
    let mut h = ops.hamiltonian.clone();
    for (f, &ca) in ops.lindblads.iter().zip(c) {
        h += (f * ca.conj() - f.adjoint() * ca) * (I * 0.5);
    }
    Ok(h)
}

/// Residuals of the eigenvector, invariance, and coupling conditions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DfsConditionReport {
    /// `max |⟨Φ_n^⊥|H_eff⁰|Φ_j⟩|`.
    pub invariance_residual: f64,
    /// `max_α,j ‖(F_α − c_α)|Φ_j⟩‖`.
    pub eigen_residual: f64,
    /// `M×(N−M)` moduli `|⟨Φ_j|H₀|Φ_n^⊥⟩ + (i/2)Σ_α c_α*⟨Φ_j|F_α|Φ_n^⊥⟩|`.
    pub coupling_residuals: Vec<Vec<f64>>,
}

impl DfsConditionReport {
    pub fn max_coupling_residual(&self) -> f64 {
        self.coupling_residuals.iter().flatten().fold(0.0, |a, &b| a.max(b))
    }

    pub fn max_residual(&self) -> f64 {
        self.invariance_residual.max(self.eigen_residual).max(self.max_coupling_residual())
    }
}

fn check_dims(ops: &OperatorSet, dfs: &DfsDecomposition) -> Result<()> {
    if ops.dim() != dfs.dim() {
        return Err(Error::Dimension { expected: ops.dim(), found: dfs.dim() });
    }
    if ops.lindblads.len() != dfs.eigenvalues.len() {
        return Err(Error::Argument("eigenvalue count differs from Lindblad operator count".into()));
    }
    Ok(())
}

pub fn check_conditions(ops: &OperatorSet, dfs: &DfsDecomposition) -> Result<DfsConditionReport> {
    check_dims(ops, dfs)?;
    let heff = effective_hamiltonian(ops, &dfs.eigenvalues)?;
    let invariance_residual = if dfs.comp_dim() == 0 || dfs.dfs_dim() == 0 {
        0.0
    } else {
        max_abs(&(dfs.comp_basis.adjoint() * &heff * &dfs.dfs_basis))
    };
    let mut eigen_residual: f64 = 0.0;
    for (f, &ca) in ops.lindblads.iter().zip(&dfs.eigenvalues) {
        let r = f * &dfs.dfs_basis - &dfs.dfs_basis * ca;
        for col in r.column_iter() {
            eigen_residual = eigen_residual.max(col.norm());
        }
    }
    let required = required_control_offdiag(ops, dfs, None)?;
    let actual = dfs.dfs_basis.adjoint() * &ops.hamiltonian * &dfs.comp_basis;
    let coupling_residuals = (0..dfs.dfs_dim())
        .map(|j| (0..dfs.comp_dim()).map(|n| (actual[(j, n)] - required[(j, n)]).norm()).collect())
        .collect();
    Ok(DfsConditionReport { invariance_residual, eigen_residual, coupling_residuals })
}

/// Block parts `K_D = PKP`, `K_C = QKQ`, `K_N = PKQ + QKP`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParts {
    pub dfs: CMatrix,
    pub comp: CMatrix,
    pub offdiag: CMatrix,
}

pub fn block_decompose(k: &CMatrix, dfs: &DfsDecomposition) -> Result<BlockParts> {
    if k.nrows() != dfs.dim() || k.ncols() != dfs.dim() {
        return Err(Error::Argument(format!(
            "operator is {}x{}, decomposition has dimension {}",
            k.nrows(),
            k.ncols(),
            dfs.dim()
        )));
    }
    let (p, q) = (&dfs.proj_dfs, &dfs.proj_comp);
    Ok(BlockParts { dfs: p * k * p, comp: q * k * q, offdiag: p * k * q + q * k * p })
}

/// Hamiltonian elements `⟨Φ_j|H|Φ_n^⊥⟩` required for a dynamically stable t-DFS:
/// `(i⟨Φ_n^⊥|∂ₜΦ_j⟩)* − (i/2)Σ_α c_α*⟨Φ_j|F_α|Φ_n^⊥⟩`. `basis_dt` holds `∂ₜ|Φ_j⟩` as columns;
/// when absent the derivative term is zero.
pub fn required_control_offdiag(
    ops: &OperatorSet,
    dfs: &DfsDecomposition,
    basis_dt: Option<&CMatrix>,
) -> Result<CMatrix> {
    check_dims(ops, dfs)?;
    let mut req = CMatrix::zeros(dfs.dfs_dim(), dfs.comp_dim());
    for (f, &ca) in ops.lindblads.iter().zip(&dfs.eigenvalues) {
        req -= (dfs.dfs_basis.adjoint() * f * &dfs.comp_basis) * (I * 0.5 * ca.conj());
    }
    if let Some(d) = basis_dt {
        if d.nrows() != dfs.dim() || d.ncols() != dfs.dfs_dim() {
            return Err(Error::Argument("basis_dt must be N×M".into()));
        }
        let x = (dfs.comp_basis.adjoint() * d) * I;
        req += x.adjoint();
    }
    Ok(req)
}

/// Aligns the columns of `new` to `reference` spanning (nearly) the same space. One-dimensional blocks keep
/// the phase of the reference's largest component; larger blocks use the unitary polar factor of `new†·reference`.
pub fn align_block(new: &CMatrix, reference: &CMatrix) -> CMatrix {
    match new.ncols() {
        0 => new.clone(),
        1 => {
            let r = reference.column(0).into_owned();
            let k = crate::linalg::argmax_abs(&r);
            let z = new[(k, 0)];
            if z.norm() == 0.0 {
                return new.clone();
            }
            let phase = (r[k] / r[k].norm()) * (z.conj() / z.norm());
            new * phase
        }
        _ => new * polar_unitary(&(new.adjoint() * reference)),
    }
}

/// Initial gauge: each vector's largest-modulus component real and positive.
pub fn gauge_fix(dec: &DfsDecomposition) -> DfsDecomposition {
    let fix = |m: &CMatrix| {
        let cols: Vec<CVector> = columns(m).iter().map(phase_fix_largest).collect();
        from_columns(m.nrows(), &cols)
    };
    DfsDecomposition::from_bases(fix(&dec.dfs_basis), fix(&dec.comp_basis), dec.eigenvalues.clone())
}

/// Gauge of `dec` continuity-matched to `reference`.
pub fn align_to(dec: &DfsDecomposition, reference: &DfsDecomposition) -> DfsDecomposition {
    DfsDecomposition::from_bases(
        align_block(&dec.dfs_basis, &reference.dfs_basis),
        align_block(&dec.comp_basis, &reference.comp_basis),
        dec.eigenvalues.clone(),
    )
}

/// Candidate choice at the first sample of a path.
#[derive(Debug, Clone, PartialEq)]
pub enum Selector {
    /// Candidates are ordered by the first operator's eigenvalue, largest real part first.
    Index(usize),
    /// Candidate whose eigenvalue tuple is closest to the given one.
    Nearest(Vec<C64>),
}

impl Default for Selector {
    fn default() -> Self {
        Self::Index(0)
    }
}

/// How `⟨Φ_n^⊥|∂ₜΦ_i⟩` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeRoute {
    /// Central differences of gauge-aligned bases.
    FiniteDifference,
    /// Linear solve of `(c_α − Q F_α Q)x = Q ∂ₜF_α Φ_i` from the operator derivative.
    Analytic,
}

/// How to pick among candidates at a given time.
#[derive(Debug, Clone, Copy)]
pub enum Pick<'a> {
    Select(&'a Selector),
    Follow(&'a DfsDecomposition),
}

/// DFS and its time derivative at one instant.
#[derive(Debug, Clone)]
pub struct PathSample {
    pub t: f64,
    pub ops: OperatorSet,
    pub dec: DfsDecomposition,
    /// `(N−M)×M` matrix `⟨Φ_n^⊥|∂ₜΦ_i⟩`.
    pub offdiag: CMatrix,
    /// `∂ₜ|Φ_i⟩` columns (finite-difference route only).
    pub d_dfs: Option<CMatrix>,
    /// `∂ₜ|Φ_n^⊥⟩` columns (finite-difference route only).
    pub d_comp: Option<CMatrix>,
    /// Smallest subspace overlap between the centre and the stencil bases (1 for the analytic route).
    pub stencil_overlap: f64,
}

/// Samples a model's t-DFS with a smooth gauge.
#[derive(Debug, Clone)]
pub struct DfsTracker<'a> {
    pub model: &'a SystemModel,
    pub cluster_tol: f64,
    pub route: DerivativeRoute,
    pub fd_step: f64,
}

impl<'a> DfsTracker<'a> {
    pub fn new(model: &'a SystemModel) -> Self {
        Self {
            model,
            cluster_tol: DEFAULT_CLUSTER_TOL,
            route: DerivativeRoute::FiniteDifference,
            fd_step: model.fd_step(),
        }
    }

    pub fn with_route(mut self, route: DerivativeRoute) -> Self {
        self.route = route;
        self
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    fn choose(&self, t: f64, ops: &OperatorSet, pick: Pick<'_>) -> Result<DfsDecomposition> {
        let scan = common_degenerate_eigenspace(ops, self.cluster_tol)?;
        if scan.candidates.is_empty() {
            return Err(Error::NoDfs { t, reason: "no common eigenvector of the Lindblad operators".into() });
        }
        match pick {
            Pick::Select(Selector::Index(i)) => scan.candidates.get(*i).map(gauge_fix).ok_or_else(|| Error::NoDfs {
                t,
                reason: format!("candidate {i} requested, {} found", scan.candidates.len()),
            }),
            Pick::Select(Selector::Nearest(target)) => {
                let dist = |d: &DfsDecomposition| -> f64 {
                    d.eigenvalues.iter().zip(target).map(|(a, b)| (a - b).norm_sqr()).sum()
                };
                let best = scan
                    .candidates
                    .iter()
                    .min_by(|a, b| dist(a).total_cmp(&dist(b)))
                    .expect("non-empty candidate list");
                Ok(gauge_fix(best))
            }
            Pick::Follow(reference) => {
                let best = scan
                    .candidates
                    .iter()
                    .filter(|d| d.dfs_dim() == reference.dfs_dim())
                    .max_by(|a, b| {
                        subspace_overlap(&reference.dfs_basis, &a.dfs_basis)
                            .total_cmp(&subspace_overlap(&reference.dfs_basis, &b.dfs_basis))
                    })
                    .ok_or_else(|| Error::NoDfs { t, reason: "DFS dimension changed along the path".into() })?;
                Ok(align_to(best, reference))
            }
        }
    }

    /// Decomposition at `t`.
    pub fn decompose(&self, t: f64, pick: Pick<'_>) -> Result<DfsDecomposition> {
        let ops = self.model.evaluate(t)?;
        self.choose(t, &ops, pick)
    }

    /// Decomposition and derivatives at `t`.
    pub fn sample(&self, t: f64, pick: Pick<'_>) -> Result<PathSample> {
        let ops = self.model.evaluate(t)?;
        let dec = self.choose(t, &ops, pick)?;
        match self.route {
            DerivativeRoute::FiniteDifference => self.fd_sample(t, ops, dec),
            DerivativeRoute::Analytic => {
                let d_ops = self.model.evaluate_derivative(t, Some(self.fd_step))?;
                let offdiag = offdiag_from_operator_derivative(&ops, &dec, &d_ops.lindblads)?;
                Ok(PathSample { t, ops, dec, offdiag, d_dfs: None, d_comp: None, stencil_overlap: 1.0 })
            }
        }
    }

    fn fd_sample(&self, t: f64, ops: OperatorSet, dec: DfsDecomposition) -> Result<PathSample> {
        let h = self.fd_step;
        let stencil: Vec<(f64, f64)> = if self.model.contains(t - h) && self.model.contains(t + h) {
            vec![(t + h, 0.5 / h), (t - h, -0.5 / h)]
        } else if !self.model.contains(t - h) {
            vec![(t, -1.5 / h), (t + h, 2.0 / h), (t + 2.0 * h, -0.5 / h)]
        } else {
            vec![(t, 1.5 / h), (t - h, -2.0 / h), (t - 2.0 * h, 0.5 / h)]
        };
        let n = dec.dim();
        let mut d_dfs = CMatrix::zeros(n, dec.dfs_dim());
        let mut d_comp = CMatrix::zeros(n, dec.comp_dim());
        let mut overlap: f64 = 1.0;
        for (ts, w) in stencil {
            let s = if ts == t { dec.clone() } else { self.decompose(ts, Pick::Follow(&dec))? };
            overlap = overlap
                .min(subspace_overlap(&dec.dfs_basis, &s.dfs_basis))
                .min(subspace_overlap(&dec.comp_basis, &s.comp_basis));
            d_dfs += s.dfs_basis.scale(w);
            d_comp += s.comp_basis.scale(w);
        }
        let offdiag = dec.comp_basis.adjoint() * &d_dfs;
        Ok(PathSample { t, ops, dec, offdiag, d_dfs: Some(d_dfs), d_comp: Some(d_comp), stencil_overlap: overlap })
    }

    /// Sequential gauge-continuous path over `times`.
    pub fn track(&self, times: &[f64], selector: &Selector) -> Result<BasisPath> {
        let mut samples: Vec<PathSample> = Vec::with_capacity(times.len());
        for &t in times {
            let pick = match samples.last() {
                None => Pick::Select(selector),
                Some(prev) => Pick::Follow(&prev.dec),
            };
            let s = self.sample(t, pick)?;
            samples.push(s);
        }
        Ok(BasisPath { samples })
    }
}

/// `⟨Φ_n^⊥|∂ₜΦ_i⟩` from `∂ₜF_α` by least squares over all `α` of `(c_α − F_α^⊥⊥)x = ⟨Φ^⊥|∂ₜF_α|Φ_i⟩`.
pub fn offdiag_from_operator_derivative(
    ops: &OperatorSet,
    dec: &DfsDecomposition,
    d_lindblads: &[CMatrix],
) -> Result<CMatrix> {
    let (m, k) = (dec.dfs_dim(), dec.comp_dim());
    if k == 0 || m == 0 {
        return Ok(CMatrix::zeros(k, m));
    }
    let nops = ops.lindblads.len();
    let mut a = CMatrix::zeros(nops * k, k);
    let mut b = CMatrix::zeros(nops * k, m);
    for (alpha, (f, df)) in ops.lindblads.iter().zip(d_lindblads).enumerate() {
        let fqq = dec.comp_basis.adjoint() * f * &dec.comp_basis;
        let block = identity(k) * dec.eigenvalues[alpha] - fqq;
        a.view_mut((alpha * k, 0), (k, k)).copy_from(&block);
        b.view_mut((alpha * k, 0), (k, m)).copy_from(&(dec.comp_basis.adjoint() * df * &dec.dfs_basis));
    }
    a.svd(true, true).solve(&b, 1e-14).map_err(|e| Error::Domain(format!("singular transition system: {e}")))
}

/// Gauge-continuous sequence of [`PathSample`]s.
#[derive(Debug, Clone)]
pub struct BasisPath {
    pub samples: Vec<PathSample>,
}

impl BasisPath {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Smallest overlap between successive bases.
    pub fn min_successive_overlap(&self) -> f64 {
        self.samples.windows(2).map(|w| subspace_overlap(&w[0].dec.dfs_basis, &w[1].dec.dfs_basis)).fold(1.0, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, hermiticity_error, outer, ONE, ZERO};
    use crate::squeezed_qubit::{control_hamiltonian, control_omega, lindblad_l};

    fn squeezed_ops(r: f64, theta: f64, gamma: f64, engineered: bool) -> OperatorSet {
        let h = if engineered { control_hamiltonian(control_omega(r, theta, gamma)) } else { CMatrix::zeros(2, 2) };
        OperatorSet::new(h, vec![lindblad_l(r, theta).scale(gamma.sqrt())]).unwrap()
    }

    fn check_invariants(d: &DfsDecomposition) {
        assert!(d.orthonormality_error() < 1e-10);
        let n = d.dim();
        assert!(max_abs(&(&d.proj_dfs + &d.proj_comp - identity(n))) < 1e-12);
        assert!(max_abs(&(&d.proj_dfs * &d.proj_dfs - &d.proj_dfs)) < 1e-12);
    }

    #[test]
    fn zero_operator_gives_whole_space() {
        let ops = OperatorSet::new(CMatrix::zeros(3, 3), vec![CMatrix::zeros(3, 3)]).unwrap();
        let scan = common_degenerate_eigenspace(&ops, DEFAULT_CLUSTER_TOL).unwrap();
        assert_eq!(scan.candidates.len(), 1);
        let d = &scan.candidates[0];
        assert_eq!(d.dfs_dim(), 3);
        assert_eq!(d.comp_dim(), 0);
        assert_eq!(d.eigenvalues[0], ZERO);
        check_invariants(d);
    }

    #[test]
    fn squeezed_operator_has_two_candidates() {
        let ops = squeezed_ops(1.0, 0.0, 1.0, true);
        let scan = common_degenerate_eigenspace(&ops, DEFAULT_CLUSTER_TOL).unwrap();
        assert_eq!(scan.candidates.len(), 2);
        assert!(scan.defective_ops.is_empty());
        let lam = (1f64.sinh() * 1f64.cosh()).sqrt();
        assert!((lam - 1.3466).abs() < 1e-4);
        assert!((scan.candidates[0].eigenvalues[0] - c(lam, 0.0)).norm() < 1e-12);
        assert!((scan.candidates[1].eigenvalues[0] - c(-lam, 0.0)).norm() < 1e-12);
        for d in &scan.candidates {
            check_invariants(d);
            let r = &ops.lindblads[0] * &d.dfs_basis - &d.dfs_basis * d.eigenvalues[0];
            assert!(max_abs(&r) < 1e-10);
        }
    }

    #[test]
    fn nilpotent_operator_is_flagged_defective() {
        let ops = OperatorSet::new(CMatrix::zeros(2, 2), vec![crate::squeezed_qubit::sigma_minus()]).unwrap();
        let scan = common_degenerate_eigenspace(&ops, DEFAULT_CLUSTER_TOL).unwrap();
        assert_eq!(scan.defective_ops, vec![0]);
        assert_eq!(scan.candidates.len(), 1);
        let d = &scan.candidates[0];
        assert_eq!(d.dfs_dim(), 1);
        assert!((d.dfs_basis[(0, 0)].norm() - 1.0).abs() < 1e-12);
    }

    fn planted() -> (CMatrix, CMatrix, CMatrix) {
        let s = CMatrix::from_row_slice(
            3,
            3,
            &[
                c(1.0, 0.0),
                c(0.2, 0.1),
                c(0.0, 0.5),
                c(0.3, -0.2),
                c(1.0, 0.0),
                c(0.4, 0.0),
                c(0.1, 0.0),
                c(-0.6, 0.3),
                c(1.0, 0.0),
            ],
        );
        let s_inv = s.clone().try_inverse().unwrap();
        let cval = c(0.3, 0.1);
        let d1 = CMatrix::from_diagonal(&CVector::from_vec(vec![cval, cval, c(-0.7, 0.4)]));
        let d2 = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.1, 0.0), c(1.1, 0.0), c(0.2, -0.9)]));
        (&s * d1 * &s_inv, &s * d2 * &s_inv, s)
    }

    #[test]
    fn planted_plane_is_recovered() {
        let (f1, f2, s) = planted();
        let ops = OperatorSet::new(CMatrix::zeros(3, 3), vec![f1, f2]).unwrap();
        let scan = common_degenerate_eigenspace(&ops, DEFAULT_CLUSTER_TOL).unwrap();
        let d = scan.candidates.iter().find(|d| d.dfs_dim() == 2).expect("2-dim candidate");
        check_invariants(d);
        assert!((d.eigenvalues[0] - c(0.3, 0.1)).norm() < 1e-10);
        let plane = from_columns(3, &gram_schmidt(&columns(&s.columns(0, 2).into_owned()), &[], 1e-12));
        let cos_angle = subspace_overlap(&plane, &d.dfs_basis);
        let angle = cos_angle.min(1.0).acos();
        assert!(angle < 1e-9, "subspace angle {angle}");
    }

    #[test]
    fn operators_without_common_eigenvector_give_empty_list() {
        let sx = CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
        let sz = CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]);
        let ops = OperatorSet::new(CMatrix::zeros(2, 2), vec![sx, sz]).unwrap();
        assert!(common_degenerate_eigenspace(&ops, DEFAULT_CLUSTER_TOL).unwrap().candidates.is_empty());
    }

    #[test]
    fn effective_hamiltonian_cases() {
        let ops = squeezed_ops(0.8, 0.5, 1.0, true);
        assert_eq!(effective_hamiltonian(&ops, &[ZERO]).unwrap(), ops.hamiltonian);
        assert!(effective_hamiltonian(&ops, &[]).is_err());
        let lam = (0.8f64.sinh() * 0.8f64.cosh()).sqrt();
        let heff = effective_hamiltonian(&ops, &[c(lam, 0.0)]).unwrap();
        assert!(max_abs(&heff) < 1e-12);
        let generic = effective_hamiltonian(&ops, &[c(0.3, -0.7)]).unwrap();
        assert!(hermiticity_error(&generic) < 1e-12);
    }

    #[test]
    fn engineered_control_satisfies_conditions() {
        let ops = squeezed_ops(1.0, 0.0, 1.0, true);
        let d = &common_degenerate_eigenspace(&ops, DEFAULT_CLUSTER_TOL).unwrap().candidates[0];
        let rep = check_conditions(&ops, d).unwrap();
        assert!(rep.max_residual() < 1e-10, "{rep:?}");
    }

    #[test]
    fn removing_control_breaks_invariance() {
        let (r, gamma) = (1.0f64, 1.0);
        let ops = squeezed_ops(r, 0.0, gamma, false);
        let d = &common_degenerate_eigenspace(&ops, DEFAULT_CLUSTER_TOL).unwrap().candidates[0];
        let rep = check_conditions(&ops, d).unwrap();
        // H_eff⁰ = (iγλ/2)(L − L†) with λ real; element between the closed-form eigenvectors.
        let lam = (r.sinh() * r.cosh()).sqrt();
        let l = lindblad_l(r, 0.0);
        let heff = (&l - l.adjoint()) * c(0.0, 0.5 * gamma * lam);
        let n = (-0.5 * r).exp();
        let phi = CVector::from_vec(vec![c(n * r.cosh().sqrt(), 0.0), c(n * r.sinh().sqrt(), 0.0)]);
        let perp = CVector::from_vec(vec![c(-n * r.sinh().sqrt(), 0.0), c(n * r.cosh().sqrt(), 0.0)]);
        let expected = perp.dotc(&(&heff * &phi)).norm();
        assert!(expected > 0.1);
        assert!((rep.invariance_residual - expected).abs() < 1e-12);
    }

    #[test]
    fn whole_space_dfs_has_zero_residuals() {
        let f = identity(3) * c(0.4, -0.2);
        let h = CMatrix::from_row_slice(3, 3, &[ONE, ZERO, ZERO, ZERO, -ONE, I, ZERO, -I, ZERO]);
        let ops = OperatorSet::new(h, vec![f]).unwrap();
        let d = &common_degenerate_eigenspace(&ops, DEFAULT_CLUSTER_TOL).unwrap().candidates[0];
        let rep = check_conditions(&ops, d).unwrap();
        assert_eq!(d.comp_dim(), 0);
        assert_eq!(rep.invariance_residual, 0.0);
        assert_eq!(rep.max_coupling_residual(), 0.0);
        assert!(rep.eigen_residual < 1e-15);
    }

    #[test]
    fn block_decomposition_cases() {
        let ops = squeezed_ops(0.6, 0.3, 1.0, true);
        let d = common_degenerate_eigenspace(&ops, DEFAULT_CLUSTER_TOL).unwrap().candidates[0].clone();
        let parts = block_decompose(&d.proj_dfs, &d).unwrap();
        assert!(max_abs(&(&parts.dfs - &d.proj_dfs)) < 1e-14);
        assert!(max_abs(&parts.comp) < 1e-14 && max_abs(&parts.offdiag) < 1e-14);
        let k = outer(&d.dfs_vec(0), &d.comp_vec(0));
        let parts = block_decompose(&k, &d).unwrap();
        assert!(max_abs(&(&parts.offdiag - &k)) < 1e-14);
        assert!(max_abs(&parts.dfs) < 1e-14 && max_abs(&parts.comp) < 1e-14);
        assert!(block_decompose(&CMatrix::zeros(3, 3), &d).is_err());
    }

    #[test]
    fn static_required_control_solves_for_engineered_field() {
        let (r, theta, gamma) = (0.9, 0.7, 1.3);
        let ops = squeezed_ops(r, theta, gamma, false);
        let d = &common_degenerate_eigenspace(&ops, DEFAULT_CLUSTER_TOL).unwrap().candidates[0];
        let req = required_control_offdiag(&ops, d, None).unwrap()[(0, 0)];
        // ⟨φ₁|H|φ^⊥⟩ = aΩ + bΩ* for H = Ω|0⟩⟨1| + h.c.; solve the real 2×2 system.
        let (p, q) = (d.dfs_vec(0), d.comp_vec(0));
        let a = p[0].conj() * q[1];
        let b = p[1].conj() * q[0];
        let m = nalgebra::Matrix2::new((a + b).re, -(a - b).im, (a + b).im, (a - b).re);
        let sol = m.try_inverse().unwrap() * nalgebra::Vector2::new(req.re, req.im);
        let omega = c(sol[0], sol[1]);
        assert!((omega - control_omega(r, theta, gamma)).norm() < 1e-12);
        assert!((omega.norm() - 0.5 * gamma * (-r).exp() * (r.sinh() * r.cosh()).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_eigenvalue_static_requirement_is_zero() {
        let f = CMatrix::from_row_slice(2, 2, &[ZERO, ZERO, ZERO, ONE]);
        let ops = OperatorSet::new(CMatrix::zeros(2, 2), vec![f]).unwrap();
        let scan = common_degenerate_eigenspace(&ops, DEFAULT_CLUSTER_TOL).unwrap();
        let d = scan.candidates.iter().find(|d| d.eigenvalues[0].norm() < 1e-12).unwrap();
        assert!(max_abs(&required_control_offdiag(&ops, d, None).unwrap()) == 0.0);
    }

    #[test]
    fn align_block_restores_reference_phase() {
        let v = CVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)]);
        let m = from_columns(2, std::slice::from_ref(&v));
        let rotated = &m * C64::from_polar(1.0, 2.1);
        let aligned = align_block(&rotated, &m);
        assert!(max_abs(&(aligned - m)) < 1e-15);
    }
}
