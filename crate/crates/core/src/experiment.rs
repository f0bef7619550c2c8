//! Runs a squeezed-qubit scenario variant end to end: DFS tracking, propagation, adiabatic monitors,
//! purity bound, counterdiabatic fields and rotating-frame diagnostics.

use serde::Serialize;

use crate::adiabatic_monitor::{
    purity_lower_bound, spectral_quantities, xi_lindblad, xi_state, BoundOptions, PurityBoundTerms,
};
use crate::dfs_analysis::{check_conditions, DfsTracker, Selector};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::lindblad_integrator::{
    fidelity_pure, frame_rates, propagate, purity, rotating_frame_diagnostics, DensityMatrix, FramePhases,
    PropagateOptions, TrajectoryRecord,
};
use crate::squeezed_qubit::{sta_omega_prime, xi_closed_form, InitialState, QubitExampleParams, Variant};
use crate::sta_synthesis::{counterdiabatic_block, verify_sta};

pub const SCHEMA_VERSION: u32 = 1;

/// Relative slack of the `xi_state ≤ xi_lindblad` ordering check, covering finite-difference error.
pub const ORDERING_SLACK: f64 = 1e-6;

/// Optional outputs of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Emit {
    pub trajectory: bool,
    pub xi: bool,
    pub bound: bool,
    pub sta_fields: bool,
    pub diagnostics: bool,
}

impl Emit {
    pub const NAMES: [&'static str; 5] = ["trajectory", "xi", "bound", "sta_fields", "diagnostics"];

    pub fn all() -> Self {
        Self { trajectory: true, xi: true, bound: true, sta_fields: true, diagnostics: true }
    }

    /// Default outputs of `run`: trajectory, xi and bound.
    pub fn standard() -> Self {
        Self { trajectory: true, xi: true, bound: true, ..Self::default() }
    }
}

impl std::str::FromStr for Emit {
    type Err = Error;

    /// Comma-separated list of [`Emit::NAMES`], or `all`.
    fn from_str(s: &str) -> Result<Self> {
        let mut e = Self::default();
        for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
            match item {
                "all" => e = Self::all(),
                "trajectory" => e.trajectory = true,
                "xi" => e.xi = true,
                "bound" => e.bound = true,
                "sta_fields" => e.sta_fields = true,
                "diagnostics" => e.diagnostics = true,
                other => {
                    return Err(Error::Argument(format!(
                        "unknown emit flag '{other}' (known: {})",
                        Self::NAMES.join(", ")
                    )))
                }
            }
        }
        Ok(e)
    }
}

/// Adiabatic monitors at one trajectory sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct XiRow {
    pub t: f64,
    pub r: f64,
    pub theta: f64,
    pub xi_state: f64,
    pub xi_lindblad: f64,
    /// Closed form, `NaN` where `r ≤ 0`.
    pub xi_closed_form: f64,
    pub omega: f64,
    pub gamma_comp: f64,
    /// Largest residual of the t-DFS conditions.
    pub dfs_residual: f64,
    /// Violation of the transport condition by the Hamiltonian in use.
    pub transport_residual: f64,
}

/// Counterdiabatic field at one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StaRow {
    pub t: f64,
    /// `H₁` entries in row-major order as `(re, im)` pairs.
    pub h1: [[f64; 2]; 4],
    /// Closed-form `Ω′`.
    pub omega_prime: [f64; 2],
}

/// Rotating-frame purity-rate terms at one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagRow {
    pub t: f64,
    pub purity: f64,
    /// Central difference of the recorded purity.
    pub dpdt: f64,
    pub coherent_leak: f64,
    pub backflow: f64,
    pub rho_n_norm: f64,
    pub rho_c_trace: f64,
}

/// Machine-readable run summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub scenario: String,
    pub variant: String,
    pub params: QubitExampleParams,
    pub final_purity: f64,
    pub min_purity: f64,
    pub t_at_purity_min: f64,
    pub single_interior_minimum: bool,
    pub xi_at_purity_min: f64,
    pub max_xi_state: f64,
    pub max_xi_lindblad: f64,
    /// Samples where `xi_state > xi_lindblad·(1 + ORDERING_SLACK)`.
    pub xi_ordering_violations: usize,
    pub final_fidelity: f64,
    pub max_trace_err: f64,
    pub max_herm_err: f64,
    pub min_eig: f64,
    pub rk4_steps: usize,
    pub max_dfs_residual: f64,
    pub max_transport_residual: f64,
    pub bound_final: Option<f64>,
    /// `min_t (purity − bound)`.
    pub bound_margin: Option<f64>,
    pub bound_converged: Option<bool>,
    pub bound_inverse_t_term: Option<f64>,
}

/// Everything produced by one variant.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: TrajectoryRecord,
    pub xi: Vec<XiRow>,
    pub bound: Option<PurityBoundTerms>,
    pub sta: Vec<StaRow>,
    pub diagnostics: Vec<DiagRow>,
    pub summary: Summary,
}

/// Outer iterations of the bound's grid doubling used by the runner.
pub const RUN_BOUND_REFINEMENTS: u32 = 3;

/// True when the minimum is strictly inside the grid, the series is non-increasing before it and
/// non-decreasing after it, all within `tol`.
pub fn single_interior_minimum(p: &[f64], tol: f64) -> bool {
    if p.len() < 3 {
        return false;
    }
    let k = p.iter().enumerate().fold((0, f64::INFINITY), |best, (i, &x)| if x < best.1 { (i, x) } else { best }).0;
    if k == 0 || k == p.len() - 1 || p[k] >= p[0] - tol || p[k] >= p[p.len() - 1] - tol {
        return false;
    }
    p[..=k].windows(2).all(|w| w[1] <= w[0] + tol) && p[k..].windows(2).all(|w| w[1] >= w[0] - tol)
}

/// Runs a scenario variant.
pub fn run_variant(scenario: &str, variant: &Variant, emit: Emit) -> Result<RunOutput> {
    run_params(scenario, &variant.label, &variant.params, emit)
}

/// Runs one parameter bundle.
pub fn run_params(scenario: &str, label: &str, params: &QubitExampleParams, emit: Emit) -> Result<RunOutput> {
    let model = params.model()?;
    let grid = params.time_grid();
    let path = DfsTracker::new(&model).track(&grid, &Selector::Index(0))?;
    let samples = &path.samples;

    let rho0 = match params.initial_state {
        InitialState::Dfs => DensityMatrix::pure(&samples[0].dec.dfs_vec(0))?,
        InitialState::Pure { phi } => DensityMatrix::pure(&InitialState::pure_vector(phi))?,
        InitialState::MaximallyMixed => DensityMatrix::maximally_mixed(2),
    };
    let opts = PropagateOptions { dt_max: params.dt, ..PropagateOptions::default() };
    let mut trajectory = propagate(&model, &rho0, &grid, &opts, None)?;
    let fidelity = trajectory
        .states
        .iter()
        .zip(samples)
        .map(|(rho, s)| fidelity_pure(rho, &s.dec.dfs_vec(0)))
        .collect::<Result<Vec<_>>>()?;
    trajectory.fidelity = Some(fidelity);

    let sched = &params.schedule;
    let mut xi = Vec::with_capacity(samples.len());
    for s in samples {
        let d_ops = model.evaluate_derivative(s.t, None)?;
        let (omega, gamma) = spectral_quantities(&s.ops, &s.dec)?;
        let xl = xi_lindblad(&s.ops, &d_ops.lindblads, &s.dec)?;
        let r = sched.r(s.t);
        xi.push(XiRow {
            t: s.t,
            r,
            theta: sched.theta(s.t),
            xi_state: xi_state(s)?.value,
            xi_lindblad: xl.iter().map(|x| x.value).fold(0.0, f64::max),
            xi_closed_form: xi_closed_form(r, sched.mu, sched.nu, sched.gamma).unwrap_or(f64::NAN),
            omega: omega[0][0],
            gamma_comp: gamma[0],
            dfs_residual: check_conditions(&s.ops, &s.dec)?.max_residual(),
            transport_residual: verify_sta(&s.ops, &s.dec, &s.offdiag)?.residual,
        });
    }

    let bound = if emit.bound {
        let bo = BoundOptions {
            initial_purity: purity(rho0.matrix()),
            max_refinements: RUN_BOUND_REFINEMENTS,
            ..BoundOptions::default()
        };
        Some(purity_lower_bound(&model, &grid, &bo)?)
    } else {
        None
    };

    let mut sta = Vec::new();
    if emit.sta_fields {
        for s in samples {
            let f = counterdiabatic_block(s)?;
            let mut h1 = [[0.0; 2]; 4];
            for (k, z) in f.h1.transpose().iter().enumerate() {
                h1[k] = [z.re, z.im];
            }
            let op = sta_omega_prime(sched.r(s.t), sched.theta(s.t), sched.mu, sched.nu)
                .map(|z| [z.re, z.im])
                .unwrap_or([f64::NAN, f64::NAN]);
            sta.push(StaRow { t: s.t, h1, omega_prime: op });
        }
    }

    let mut diagnostics = Vec::new();
    if emit.diagnostics {
        let (m, k) = (samples[0].dec.dfs_dim(), samples[0].dec.comp_dim());
        let mut phases = FramePhases::zero(m, k);
        let mut prev_rates = frame_rates(&samples[0].ops, &samples[0].dec)?;
        let p = &trajectory.purity;
        for (q, s) in samples.iter().enumerate() {
            let rates = frame_rates(&s.ops, &s.dec)?;
            if q > 0 {
                let h = s.t - samples[q - 1].t;
                for i in 0..m {
                    phases.dfs[i] += 0.5 * h * (prev_rates.0[i] + rates.0[i]);
                }
                for n in 0..k {
                    phases.comp_theta[n] += 0.5 * h * (prev_rates.1[n] + rates.1[n]);
                    phases.comp_decay[n] += 0.5 * h * (prev_rates.2[n] + rates.2[n]);
                }
            }
            prev_rates = rates;
            let d = rotating_frame_diagnostics(&samples[0].dec, s, &trajectory.states[q], &phases)?;
            let dpdt = if q == 0 {
                (p[1] - p[0]) / (grid[1] - grid[0])
            } else if q + 1 == p.len() {
                (p[q] - p[q - 1]) / (grid[q] - grid[q - 1])
            } else {
                (p[q + 1] - p[q - 1]) / (grid[q + 1] - grid[q - 1])
            };
            diagnostics.push(DiagRow {
                t: s.t,
                purity: p[q],
                dpdt,
                coherent_leak: d.coherent_leak,
                backflow: d.backflow,
                rho_n_norm: d.rho_n.norm(),
                rho_c_trace: d.rho_c.trace().re,
            });
        }
    }

    let summary = summarize(scenario, label, params, &trajectory, &xi, bound.as_ref());
    Ok(RunOutput { trajectory, xi, bound, sta, diagnostics, summary })
}

fn summarize(
    scenario: &str,
    label: &str,
    params: &QubitExampleParams,
    traj: &TrajectoryRecord,
    xi: &[XiRow],
    bound: Option<&PurityBoundTerms>,
) -> Summary {
    let (k_min, p_min) = traj.purity_min();
    let finite_max = |f: &dyn Fn(&XiRow) -> f64| xi.iter().map(f).filter(|x| x.is_finite()).fold(0.0, f64::max);
    let ordering = xi
        .iter()
        .filter(|x| x.xi_state.is_finite() && x.xi_lindblad.is_finite())
        .filter(|x| x.xi_state > x.xi_lindblad * (1.0 + ORDERING_SLACK))
        .count();
    let margin = bound.map(|b| traj.purity.iter().zip(&b.bound).map(|(p, lb)| p - lb).fold(f64::INFINITY, f64::min));
    Summary {
        schema_version: SCHEMA_VERSION,
        scenario: scenario.to_string(),
        variant: label.to_string(),
        params: params.clone(),
        final_purity: *traj.purity.last().expect("non-empty trajectory"),
        min_purity: p_min,
        t_at_purity_min: traj.times[k_min],
        single_interior_minimum: single_interior_minimum(&traj.purity, 1e-10),
        xi_at_purity_min: xi[k_min].xi_state,
        max_xi_state: finite_max(&|x| x.xi_state),
        max_xi_lindblad: finite_max(&|x| x.xi_lindblad),
        xi_ordering_violations: ordering,
        final_fidelity: traj.fidelity.as_ref().and_then(|f| f.last().copied()).unwrap_or(f64::NAN),
        max_trace_err: traj.max_trace_err(),
        max_herm_err: traj.max_herm_err(),
        min_eig: traj.min_eig_any_step,
        rk4_steps: traj.steps,
        max_dfs_residual: finite_max(&|x| x.dfs_residual),
        max_transport_residual: finite_max(&|x| x.transport_residual),
        bound_final: bound.and_then(|b| b.bound.last().copied()),
        bound_margin: margin,
        bound_converged: bound.map(|b| b.converged),
        bound_inverse_t_term: bound.map(|b| b.scaled.inverse_t_term()),
    }
}

/// `H₁` as a matrix from a [`StaRow`].
pub fn sta_row_matrix(row: &StaRow) -> CMatrix {
    CMatrix::from_row_iterator(2, 2, row.h1.iter().map(|z| crate::C64::new(z[0], z[1])))
}
