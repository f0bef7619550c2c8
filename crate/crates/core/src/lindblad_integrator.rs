//! Fixed-step RK4 propagation of the master equation with drift and positivity monitoring,
//! observables, and the rotating-frame purity-rate decomposition.

use num_complex::Complex64 as C64;

use crate::dfs_analysis::{effective_hamiltonian, DfsDecomposition, PathSample};
use crate::error::{Error, Result};
use crate::linalg::{hermiticity_error, identity, min_hermitian_eigenvalue, outer, CMatrix, CVector, I};
use crate::operator_model::{OperatorSet, SystemModel};

const STATE_TOL: f64 = 1e-10;
const EIG_TOL: f64 = 1e-8;
const POSITIVITY_FAILURE: f64 = -1e-6;

/// A validated density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    data: CMatrix,
}

impl DensityMatrix {
    /// Checks Hermiticity and unit trace to 1e-10 and eigenvalues ≥ −1e-8.
    pub fn new(data: CMatrix) -> Result<Self> {
        if data.nrows() != data.ncols() || data.nrows() == 0 {
            return Err(Error::Argument("density matrix must be square and non-empty".into()));
        }
        if hermiticity_error(&data) > STATE_TOL {
            return Err(Error::Argument("density matrix is not Hermitian".into()));
        }
        if (data.trace() - C64::new(1.0, 0.0)).norm() > STATE_TOL {
            return Err(Error::Argument(format!("density matrix trace {} ≠ 1", data.trace())));
        }
        let min = min_hermitian_eigenvalue(&data);
        if min < -EIG_TOL {
            return Err(Error::Argument(format!("density matrix has negative eigenvalue {min:.3e}")));
        }
        Ok(Self { data })
    }

    /// `|ψ⟩⟨ψ|` for a normalised `ψ`.
    pub fn pure(psi: &CVector) -> Result<Self> {
        let n = psi.norm();
        if (n - 1.0).abs() > STATE_TOL {
            return Err(Error::Argument(format!("state vector norm {n} ≠ 1")));
        }
        Self::new(outer(psi, psi))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { data: identity(dim) / C64::new(dim as f64, 0.0) }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_matrix(self) -> CMatrix {
        self.data
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }
}

/// Cached generator `L(ρ) = Kρ + ρK† + Σ_α F_α ρ F_α†` with `K = −iH − ½Σ_α F_α†F_α`.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    k: CMatrix,
    k_dag: CMatrix,
    jumps: Vec<(CMatrix, CMatrix)>,
}

impl Liouvillian {
    pub fn new(ops: &OperatorSet) -> Self {
        let mut k = &ops.hamiltonian * (-I);
        for f in &ops.lindblads {
            k -= (f.adjoint() * f).scale(0.5);
        }
        let k_dag = k.adjoint();
        let jumps = ops.lindblads.iter().map(|f| (f.clone(), f.adjoint())).collect();
        Self { k, k_dag, jumps }
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let mut out = &self.k * rho + rho * &self.k_dag;
        for (f, fd) in &self.jumps {
            out += f * rho * fd;
        }
        out
    }
}

/// `−i[H₀,ρ] + Σ_α(F_α ρ F_α† − ½{F_α†F_α, ρ})`.
pub fn liouvillian_apply(ops: &OperatorSet, rho: &CMatrix) -> Result<CMatrix> {
    if rho.nrows() != ops.dim() || rho.ncols() != ops.dim() {
        return Err(Error::Dimension { expected: ops.dim(), found: rho.nrows() });
    }
    Ok(Liouvillian::new(ops).apply(rho))
}

/// `Tr ρ²`.
pub fn purity(rho: &CMatrix) -> f64 {
    rho.iter().map(|z| z.norm_sqr()).sum()
}

/// `⟨φ|ρ|φ⟩` for a unit vector `φ`.
pub fn fidelity_pure(rho: &CMatrix, phi: &CVector) -> Result<f64> {
    if phi.len() != rho.nrows() {
        return Err(Error::Dimension { expected: rho.nrows(), found: phi.len() });
    }
    if (phi.norm() - 1.0).abs() > STATE_TOL {
        return Err(Error::Argument(format!("fidelity target has norm {} ≠ 1", phi.norm())));
    }
    Ok(phi.dotc(&(rho * phi)).re)
}

/// `(Tr ρσ_x, Tr ρσ_y, Tr ρσ_z)` with `σ_z = |1⟩⟨1| − |0⟩⟨0|`.
pub fn bloch(rho: &CMatrix) -> Result<[f64; 3]> {
    if rho.nrows() != 2 || rho.ncols() != 2 {
        return Err(Error::Dimension { expected: 2, found: rho.nrows() });
    }
    let r01 = rho[(0, 1)];
    Ok([2.0 * r01.re, -2.0 * r01.im, (rho[(1, 1)] - rho[(0, 0)]).re])
}

/// Step control for [`propagate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagateOptions {
    /// Upper bound on the RK4 step.
    pub dt_max: f64,
    /// The step is also capped at `stability / rate` where `rate = ‖H‖_F + Σ‖F_α‖_F²`.
    pub stability: f64,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        Self { dt_max: 1e-3, stability: 1.0 }
    }
}

/// Recorded observables of a propagated trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<CMatrix>,
    pub purity: Vec<f64>,
    pub fidelity: Option<Vec<f64>>,
    pub bloch: Option<Vec<[f64; 3]>>,
    /// `|Tr ρ − 1|`.
    pub trace_err: Vec<f64>,
    /// `max |ρ − ρ†|`.
    pub herm_err: Vec<f64>,
    pub min_eig: Vec<f64>,
    /// Total number of RK4 steps taken.
    pub steps: usize,
    /// Smallest eigenvalue seen at any step.
    pub min_eig_any_step: f64,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &CMatrix {
        self.states.last().expect("non-empty trajectory")
    }

    pub fn max_trace_err(&self) -> f64 {
        self.trace_err.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_herm_err(&self) -> f64 {
        self.herm_err.iter().copied().fold(0.0, f64::max)
    }

    /// Index and value of the smallest recorded purity.
    pub fn purity_min(&self) -> (usize, f64) {
        self.purity
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, p)| if p < best.1 { (i, p) } else { best })
    }
}

/// Target state for fidelity recording.
pub type FidelityTarget<'a> = &'a (dyn Fn(f64) -> Result<CVector> + 'a);

/// Propagates `rho0` over the increasing grid `t_grid` with classic RK4. Between grid points the step is
/// uniform and no larger than `opts.dt_max` or `opts.stability / rate`. No renormalisation is applied.
pub fn propagate(
    model: &SystemModel,
    rho0: &DensityMatrix,
    t_grid: &[f64],
    opts: &PropagateOptions,
    fidelity_target: Option<FidelityTarget<'_>>,
) -> Result<TrajectoryRecord> {
    if t_grid.is_empty() {
        return Err(Error::Argument("empty time grid".into()));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Argument("time grid must be strictly increasing".into()));
    }
    if !(opts.dt_max > 0.0 && opts.stability > 0.0) {
        return Err(Error::Argument("step controls must be positive".into()));
    }
    if rho0.dim() != model.dim() {
        return Err(Error::Dimension { expected: model.dim(), found: rho0.dim() });
    }
    let qubit = model.dim() == 2;
    let mut rec = TrajectoryRecord {
        times: Vec::with_capacity(t_grid.len()),
        states: Vec::with_capacity(t_grid.len()),
        purity: Vec::with_capacity(t_grid.len()),
        fidelity: fidelity_target.map(|_| Vec::with_capacity(t_grid.len())),
        bloch: qubit.then(|| Vec::with_capacity(t_grid.len())),
        trace_err: Vec::with_capacity(t_grid.len()),
        herm_err: Vec::with_capacity(t_grid.len()),
        min_eig: Vec::with_capacity(t_grid.len()),
        steps: 0,
        min_eig_any_step: f64::INFINITY,
    };

    let mut rho = rho0.matrix().clone();
    let mut t = t_grid[0];
    let mut ops_t = model.evaluate(t)?;
    let mut gen_t = Liouvillian::new(&ops_t);
    record(&mut rec, t, &rho, fidelity_target)?;

    for &t_next in &t_grid[1..] {
        let ops_end = model.evaluate(t_next)?;
        let rate = ops_t.rate_scale().max(ops_end.rate_scale());
        let dt_cap = if rate > 0.0 { opts.dt_max.min(opts.stability / rate) } else { opts.dt_max };
        let span = t_next - t;
        let n = ((span / dt_cap) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let dt = span / n as f64;
        let t_start = t;
        for k in 0..n {
            let ts = t_start + dt * k as f64;
            let te = if k + 1 == n { t_next } else { t_start + dt * (k + 1) as f64 };
            let mid = Liouvillian::new(&model.evaluate(ts + 0.5 * dt)?);
            let (end_ops, end_gen) = if k + 1 == n {
                (ops_end.clone(), Liouvillian::new(&ops_end))
            } else {
                let o = model.evaluate(te)?;
                let g = Liouvillian::new(&o);
                (o, g)
            };
            let k1 = gen_t.apply(&rho);
            let k2 = mid.apply(&(&rho + &k1 * C64::new(0.5 * dt, 0.0)));
            let k3 = mid.apply(&(&rho + &k2 * C64::new(0.5 * dt, 0.0)));
            let k4 = end_gen.apply(&(&rho + &k3 * C64::new(dt, 0.0)));
            rho += (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0);
            rec.steps += 1;
            if rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Domain(format!("state became non-finite at t = {te}; reduce dt")));
            }
            let me = min_hermitian_eigenvalue(&rho);
            rec.min_eig_any_step = rec.min_eig_any_step.min(me);
            if me < POSITIVITY_FAILURE {
                return Err(Error::Positivity { t: te, min_eig: me });
            }
            ops_t = end_ops;
            gen_t = end_gen;
        }
        t = t_next;
        record(&mut rec, t, &rho, fidelity_target)?;
    }
    Ok(rec)
}

fn record(rec: &mut TrajectoryRecord, t: f64, rho: &CMatrix, target: Option<FidelityTarget<'_>>) -> Result<()> {
    rec.times.push(t);
    rec.purity.push(purity(rho));
    rec.trace_err.push((rho.trace() - C64::new(1.0, 0.0)).norm());
    rec.herm_err.push(hermiticity_error(rho));
    let me = min_hermitian_eigenvalue(rho);
    rec.min_eig.push(me);
    rec.min_eig_any_step = rec.min_eig_any_step.min(me);
    if let (Some(f), Some(fid)) = (target, rec.fidelity.as_mut()) {
        fid.push(fidelity_pure(rho, &f(t)?)?);
    }
    if let Some(b) = rec.bloch.as_mut() {
        b.push(bloch(rho)?);
    }
    rec.states.push(rho.clone());
    Ok(())
}

/// Accumulated rotating-frame phases: `θ_i = ∫⟨H_eff⁰⟩_i`, `θ_n = ∫⟨H_eff⁰⟩_n`, `G_n = ∫⟨Γ̂⟩_n`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FramePhases {
    pub dfs: Vec<f64>,
    pub comp_theta: Vec<f64>,
    pub comp_decay: Vec<f64>,
}

impl FramePhases {
    pub fn zero(m: usize, k: usize) -> Self {
        Self { dfs: vec![0.0; m], comp_theta: vec![0.0; k], comp_decay: vec![0.0; k] }
    }
}

/// Instantaneous rates `(⟨H_eff⁰⟩_i, ⟨H_eff⁰⟩_n, ⟨Γ̂⟩_n)` that drive [`FramePhases`].
pub fn frame_rates(ops: &OperatorSet, dec: &DfsDecomposition) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let heff = effective_hamiltonian(ops, &dec.eigenvalues)?;
    let dfs = (0..dec.dfs_dim()).map(|i| dec.dfs_vec(i).dotc(&(&heff * dec.dfs_vec(i))).re).collect();
    let comp = (0..dec.comp_dim()).map(|n| dec.comp_vec(n).dotc(&(&heff * dec.comp_vec(n))).re).collect();
    let gamma = (0..dec.comp_dim())
        .map(|n| {
            let v = dec.comp_vec(n);
            ops.lindblads.iter().zip(&dec.eigenvalues).map(|(f, &c)| (f * &v - &v * c).norm_squared()).sum::<f64>()
                * 0.5
        })
        .collect();
    Ok((dfs, comp, gamma))
}

/// Block parts of the transformed state and the two purity-rate contributions.
#[derive(Debug, Clone, PartialEq)]
pub struct RotatingFrameDiag {
    pub rho_d: CMatrix,
    pub rho_n: CMatrix,
    pub rho_c: CMatrix,
    /// `2 Re Tr{ρ_D(−i[Ḡ, ρ_N])}`.
    pub coherent_leak: f64,
    /// `2 Re Tr{ρ_D Σ_α F̃_α ρ_C F̃_α†}`.
    pub backflow: f64,
}

/// Transforms `rho` with `T(t) = Σ_i e^{iθ_i}|Φ_i(0)⟩⟨Φ_i(t)| + Σ_n e^{iθ_n − G_n}|Φ_n^⊥(0)⟩⟨Φ_n^⊥(t)|`,
/// splits it with the initial projectors, and evaluates the purity-rate terms with `Ḡ = i(∂ₜT)T⁻¹`.
/// `current` must carry finite-difference basis derivatives.
pub fn rotating_frame_diagnostics(
    initial: &DfsDecomposition,
    current: &PathSample,
    rho: &CMatrix,
    phases: &FramePhases,
) -> Result<RotatingFrameDiag> {
    let dec = &current.dec;
    let (m, k) = (dec.dfs_dim(), dec.comp_dim());
    let n = dec.dim();
    if initial.dfs_dim() != m || phases.dfs.len() != m || phases.comp_theta.len() != k || phases.comp_decay.len() != k {
        return Err(Error::Argument("rotating frame inputs have inconsistent block sizes".into()));
    }
    let (d_dfs, d_comp) = match (&current.d_dfs, &current.d_comp) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Argument("rotating frame needs basis derivatives".into())),
    };
    let (r_dfs, r_comp, r_gamma) = frame_rates(&current.ops, dec)?;

    let join = |a: &CMatrix, b: &CMatrix| {
        let mut j = CMatrix::zeros(n, n);
        j.view_mut((0, 0), (n, m)).copy_from(a);
        j.view_mut((0, m), (n, k)).copy_from(b);
        j
    };
    let b0 = join(&initial.dfs_basis, &initial.comp_basis);
    let bt = join(&dec.dfs_basis, &dec.comp_basis);
    let dbt = join(d_dfs, d_comp);

    let mut log_d = CVector::zeros(n);
    let mut rate = CVector::zeros(n);
    for i in 0..m {
        log_d[i] = C64::new(0.0, phases.dfs[i]);
        rate[i] = C64::new(0.0, r_dfs[i]);
    }
    for q in 0..k {
        log_d[m + q] = C64::new(-phases.comp_decay[q], phases.comp_theta[q]);
        rate[m + q] = C64::new(-r_gamma[q], r_comp[q]);
    }
    let frame = |x: &CMatrix| CMatrix::from_fn(n, n, |a, b| x[(a, b)] * (log_d[a] - log_d[b]).exp());
    let block = |x: &CMatrix, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>| {
        CMatrix::from_fn(
            n,
            n,
            |a, b| if rows.contains(&a) && cols.contains(&b) { x[(a, b)] } else { C64::new(0.0, 0.0) },
        )
    };

    let rho_bar = frame(&(bt.adjoint() * rho * &bt));
    let g_bar = (CMatrix::from_diagonal(&rate) + frame(&(dbt.adjoint() * &bt))) * I;
    let rho_d = block(&rho_bar, 0..m, 0..m);
    let rho_c = block(&rho_bar, m..n, m..n);
    let rho_n = block(&rho_bar, 0..m, m..n) + block(&rho_bar, m..n, 0..m);

    let leak = (&rho_d * (&g_bar * &rho_n - &rho_n * &g_bar) * (-I)).trace();
    let mut back = C64::new(0.0, 0.0);
    for (f, &c) in current.ops.lindblads.iter().zip(&dec.eigenvalues) {
        let ft = frame(&(bt.adjoint() * f * &bt)) - identity(n) * c;
        back += (&rho_d * &ft * &rho_c * ft.adjoint()).trace();
    }
    let lab = |x: CMatrix| &b0 * x * b0.adjoint();
    let (rho_d, rho_n, rho_c) = (lab(rho_d), lab(rho_n), lab(rho_c));
    Ok(RotatingFrameDiag { rho_d, rho_n, rho_c, coherent_leak: 2.0 * leak.re, backflow: 2.0 * back.re })
}
