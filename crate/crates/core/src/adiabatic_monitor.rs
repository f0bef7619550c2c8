//! Adiabatic condition in its state and Lindblad-operator forms, the spectral quantities `ω_ni`, `Γ_n`,
//! and the purity lower bound.

use serde::Serialize;

use crate::dfs_analysis::{DerivativeRoute, DfsDecomposition, DfsTracker, PathSample, Selector};
use crate::error::{Error, Result};
use crate::linalg::{frobenius, CMatrix};
use crate::lindblad_integrator::frame_rates;
use crate::operator_model::{OperatorSet, SystemModel};
use crate::C64;

const DIVERGENCE_TOL: f64 = 1e-14;
const ASSUMPTION_TOL: f64 = 1e-12;

/// `ω_ni = ⟨H_eff⁰⟩_n − ⟨H_eff⁰⟩_i` as an `(N−M)×M` table and `Γ_n = ½Σ_α‖(F_α − c_α)|Φ_n^⊥⟩‖²`.
pub fn spectral_quantities(ops: &OperatorSet, dec: &DfsDecomposition) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let (e_dfs, e_comp, gamma) = frame_rates(ops, dec)?;
    let omega = e_comp.iter().map(|en| e_dfs.iter().map(|ei| en - ei).collect()).collect();
    Ok((omega, gamma))
}

/// `Γ̂ = ½Σ_α F̃_α†F̃_α` with `F̃_α = F_α − c_α`.
pub fn gamma_operator(ops: &OperatorSet, c: &[C64]) -> CMatrix {
    let n = ops.dim();
    let mut g = CMatrix::zeros(n, n);
    for (f, &ca) in ops.lindblads.iter().zip(c) {
        let ft = f - CMatrix::identity(n, n) * ca;
        g += ft.adjoint() * &ft;
    }
    g.scale(0.5)
}

/// State-form adiabatic parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct XiState {
    /// `Max_{n,i} |4⟨Φ_n^⊥|∂ₜΦ_i⟩/(ω_ni + iΓ_n)|`, infinite when divergent.
    pub value: f64,
    /// First `(n, i)` whose denominator vanishes.
    pub divergent: Option<(usize, usize)>,
}

/// Evaluates the state form on a sample carrying `⟨Φ_n^⊥|∂ₜΦ_i⟩`.
pub fn xi_state(sample: &PathSample) -> Result<XiState> {
    let (omega, gamma) = spectral_quantities(&sample.ops, &sample.dec)?;
    let scale = sample.ops.rate_scale().max(f64::MIN_POSITIVE);
    let mut value: f64 = 0.0;
    let mut divergent = None;
    for (n, row) in omega.iter().enumerate() {
        for (i, &w) in row.iter().enumerate() {
            let den = w.hypot(gamma[n]);
            let num = sample.offdiag[(n, i)].norm();
            if den < DIVERGENCE_TOL * scale {
                if divergent.is_none() {
                    divergent = Some((n, i));
                }
                value = f64::INFINITY;
            } else {
                value = value.max(4.0 * num / den);
            }
        }
    }
    Ok(XiState { value, divergent })
}

/// Lindblad-form adiabatic parameter for one operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct XiLindblad {
    pub value: f64,
    /// `Max_{n≠m} |⟨Φ_n^⊥|F_α|Φ_m^⊥⟩/(c_α − ⟨F_α⟩_n)|`.
    pub f_max: f64,
    /// `Σ_{a=0}^{K−1} P_K^{a+1} F_Max^a / K` with `K = N − M`.
    pub prefactor: f64,
    /// `c_α = ⟨F_α⟩_n` for some `n`.
    pub assumption_violated: bool,
    /// A denominator `ω_ni + iΓ_n` vanishes.
    pub divergent: bool,
}

/// `Σ_{a=0}^{K−1} P_K^{a+1} x^a / K` with `P_K^k = K!/(K−k)!`.
pub fn permutation_prefactor(k: usize, f_max: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut perm = 1.0;
    for a in 0..k {
        perm *= (k - a) as f64;
        sum += perm * f_max.powi(a as i32);
    }
    sum / k as f64
}

/// Lindblad-operator form per `α`. The ratio `|⟨Φ_m^⊥|∂ₜF_α|Φ_i⟩/((ω_ni + iΓ_n)(c_α − ⟨F_α⟩_m))|` is
/// maximised over `n`, `m` and `i`, which coincides with the diagonal maximum when `N − M = 1`.
pub fn xi_lindblad(ops: &OperatorSet, d_lindblads: &[CMatrix], dec: &DfsDecomposition) -> Result<Vec<XiLindblad>> {
    if d_lindblads.len() != ops.lindblads.len() {
        return Err(Error::Dimension { expected: ops.lindblads.len(), found: d_lindblads.len() });
    }
    let (omega, gamma) = spectral_quantities(ops, dec)?;
    let (m_dim, k) = (dec.dfs_dim(), dec.comp_dim());
    let rate = ops.rate_scale().max(f64::MIN_POSITIVE);
    let mut out = Vec::with_capacity(ops.lindblads.len());
    for ((f, df), &c) in ops.lindblads.iter().zip(d_lindblads).zip(&dec.eigenvalues) {
        let fqq = dec.comp_basis.adjoint() * f * &dec.comp_basis;
        let dqp = dec.comp_basis.adjoint() * df * &dec.dfs_basis;
        let f_scale = frobenius(f).max(f64::MIN_POSITIVE);
        let gaps: Vec<C64> = (0..k).map(|n| c - fqq[(n, n)]).collect();
        let violated = gaps.iter().any(|g| g.norm() < ASSUMPTION_TOL * f_scale);
        let mut f_max: f64 = 0.0;
        if !violated {
            for n in 0..k {
                for m in (0..k).filter(|&m| m != n) {
                    f_max = f_max.max(fqq[(n, m)].norm() / gaps[n].norm());
                }
            }
        }
        let mut divergent = false;
        let mut ratio: f64 = 0.0;
        for i in 0..m_dim {
            let num = (0..k).map(|m| dqp[(m, i)].norm()).collect::<Vec<_>>();
            for n in 0..k {
                let den = omega[n][i].hypot(gamma[n]);
                if den < DIVERGENCE_TOL * rate {
                    if num.iter().any(|&x| x > 0.0) {
                        divergent = true;
                    }
                    continue;
                }
                for (m, &x) in num.iter().enumerate() {
                    if x > 0.0 {
                        ratio = ratio.max(x / (den * gaps[m].norm()));
                    }
                }
            }
        }
        let prefactor = permutation_prefactor(k, f_max);
        let value = if violated || divergent { f64::INFINITY } else { 4.0 * ratio * prefactor };
        out.push(XiLindblad { value, f_max, prefactor, assumption_violated: violated, divergent });
    }
    Ok(out)
}

/// Both forms of the adiabatic condition and the spectral quantities at one instant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdiabaticReport {
    pub t: f64,
    pub xi_state: XiState,
    pub xi_lindblad: Vec<XiLindblad>,
    pub omega: Vec<Vec<f64>>,
    pub gamma_comp: Vec<f64>,
}

impl AdiabaticReport {
    pub fn new(sample: &PathSample, d_lindblads: &[CMatrix]) -> Result<Self> {
        let (omega, gamma_comp) = spectral_quantities(&sample.ops, &sample.dec)?;
        Ok(Self {
            t: sample.t,
            xi_state: xi_state(sample)?,
            xi_lindblad: xi_lindblad(&sample.ops, d_lindblads, &sample.dec)?,
            omega,
            gamma_comp,
        })
    }

    /// Largest Lindblad-form value over `α`.
    pub fn xi_lindblad_max(&self) -> f64 {
        self.xi_lindblad.iter().map(|x| x.value).fold(0.0, f64::max)
    }
}

/// Controls for [`purity_lower_bound`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundOptions {
    /// Purity at the first grid time.
    pub initial_purity: f64,
    /// Relative agreement of successive grid doublings.
    pub rel_tol: f64,
    /// Maximum number of grid doublings.
    pub max_refinements: u32,
    pub selector: Selector,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self { initial_purity: 1.0, rel_tol: 1e-8, max_refinements: 6, selector: Selector::default() }
    }
}

/// Assembled purity lower bound on an output grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PurityBoundTerms {
    pub times: Vec<f64>,
    /// `Σ_jm |x_jm(t)|` with `x_jm = ⟨Φ_m^⊥|∂ₜΦ_j⟩/(ω_mj + iΓ_m)`.
    pub boundary_term: Vec<f64>,
    /// `Σ_jm ∫₀ᵗ (A_j + B_m + C)|x_jm|`.
    pub integral_terms: Vec<f64>,
    /// `Σ_jm ∫₀ᵗ |∂ₜx_jm|`.
    pub derivative_terms: Vec<f64>,
    /// `p₀ − 4M(boundary + integral + derivative)`.
    pub bound: Vec<f64>,
    /// `A_j` at the final time.
    pub a_j: Vec<f64>,
    /// `B_m` at the final time.
    pub b_m: Vec<f64>,
    /// `C` at the final time.
    pub c_term: f64,
    /// The three stronger conditions: `sup|x|`, the weighted integral and the derivative integral over the grid.
    pub conditions: [f64; 3],
    pub scaled: ScaledDeficit,
    pub converged: bool,
    pub refinements: u32,
    /// Relative change of the totals at the last doubling.
    pub last_change: f64,
    pub finite: bool,
}

/// `1 − p(T) ≤ inverse_t_coefficient / T + constant_term` from the `s = t/T` substitution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaledDeficit {
    pub total_time: f64,
    pub inverse_t_coefficient: f64,
    /// Contribution of the off-diagonal `Γ̂` elements, which does not scale with `1/T`.
    pub constant_term: f64,
}

impl ScaledDeficit {
    pub fn inverse_t_term(&self) -> f64 {
        self.inverse_t_coefficient / self.total_time
    }

    pub fn deficit(&self) -> f64 {
        self.inverse_t_term() + self.constant_term
    }
}

struct PointTerms {
    x: Vec<C64>,
    weight_deriv: Vec<f64>,
    weight_gamma: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    c: f64,
}

fn point_terms(s: &PathSample) -> Result<PointTerms> {
    let dec = &s.dec;
    let (m_dim, k) = (dec.dfs_dim(), dec.comp_dim());
    let (d_dfs, d_comp) = match (&s.d_dfs, &s.d_comp) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Argument("purity bound needs basis derivatives".into())),
    };
    let (omega, gamma) = spectral_quantities(&s.ops, dec)?;
    let g_hat = gamma_operator(&s.ops, &dec.eigenvalues);
    let g_qq = dec.comp_basis.adjoint() * g_hat * &dec.comp_basis;
    // ⟨∂Φ_a|Φ_b⟩ blocks.
    let dp_p = d_dfs.adjoint() * &dec.dfs_basis;
    let dp_q = d_dfs.adjoint() * &dec.comp_basis;
    let dq_p = d_comp.adjoint() * &dec.dfs_basis;
    let dq_q = d_comp.adjoint() * &dec.comp_basis;

    let a: Vec<f64> = (0..m_dim)
        .map(|j| dp_p.row(j).iter().map(|z| z.norm()).sum::<f64>() + dp_q.row(j).iter().map(|z| z.norm()).sum::<f64>())
        .collect();
    let b_deriv: Vec<f64> = (0..k)
        .map(|m| {
            dp_q.column(m).iter().map(|z| z.norm()).sum::<f64>() + dq_q.column(m).iter().map(|z| z.norm()).sum::<f64>()
        })
        .collect();
    let b_gamma: Vec<f64> = (0..k).map(|m| (0..k).filter(|&n| n != m).map(|n| g_qq[(n, m)].norm()).sum()).collect();
    let c = if m_dim == 0 {
        0.0
    } else {
        (dq_p.iter().map(|z| z.norm()).sum::<f64>() + dp_q.iter().map(|z| z.norm()).sum::<f64>()) / m_dim as f64
    };

    let mut x = Vec::with_capacity(m_dim * k);
    let mut weight_deriv = Vec::with_capacity(m_dim * k);
    let mut weight_gamma = Vec::with_capacity(m_dim * k);
    for j in 0..m_dim {
        for m in 0..k {
            let den = C64::new(omega[m][j], gamma[m]);
            x.push(s.offdiag[(m, j)] / den);
            weight_deriv.push(a[j] + b_deriv[m] + c);
            weight_gamma.push(b_gamma[m]);
        }
    }
    let b = b_deriv.iter().zip(&b_gamma).map(|(x, y)| x + y).collect();
    Ok(PointTerms { x, weight_deriv, weight_gamma, a, b, c })
}

struct Level {
    boundary: Vec<f64>,
    integral: Vec<f64>,
    derivative: Vec<f64>,
    sup_x: f64,
    scaled: ScaledDeficit,
    a: Vec<f64>,
    b: Vec<f64>,
    c: f64,
}

fn evaluate_level(tracker: &DfsTracker<'_>, out_times: &[f64], sub: usize, selector: &Selector) -> Result<Level> {
    let mut fine = Vec::with_capacity((out_times.len() - 1) * sub + 1);
    fine.push(out_times[0]);
    for w in out_times.windows(2) {
        for q in 1..=sub {
            fine.push(if q == sub { w[1] } else { w[0] + (w[1] - w[0]) * q as f64 / sub as f64 });
        }
    }
    let path = tracker.track(&fine, selector)?;
    let terms = path.samples.iter().map(point_terms).collect::<Result<Vec<_>>>()?;
    let pairs = terms[0].x.len();
    let total_time = out_times[out_times.len() - 1] - out_times[0];

    let mut boundary = Vec::with_capacity(out_times.len());
    let mut integral = Vec::with_capacity(out_times.len());
    let mut derivative = Vec::with_capacity(out_times.len());
    let (mut acc_int, mut acc_tv) = (0.0, 0.0);
    let mut sup_x: f64 = 0.0;
    let mut sup_weighted = vec![0.0f64; pairs];
    let mut sup_gamma = vec![0.0f64; pairs];
    let mut sup_slope = vec![0.0f64; pairs];
    for (q, term) in terms.iter().enumerate() {
        if q > 0 {
            let h = fine[q] - fine[q - 1];
            let prev = &terms[q - 1];
            for (p, slope) in sup_slope.iter_mut().enumerate() {
                let f0 = (prev.weight_deriv[p] + prev.weight_gamma[p]) * prev.x[p].norm();
                let f1 = (term.weight_deriv[p] + term.weight_gamma[p]) * term.x[p].norm();
                acc_int += 0.5 * h * (f0 + f1);
                let dx = (term.x[p] - prev.x[p]).norm();
                acc_tv += dx;
                *slope = slope.max(dx / h);
            }
        }
        for p in 0..pairs {
            let xn = term.x[p].norm();
            sup_x = sup_x.max(xn);
            sup_weighted[p] = sup_weighted[p].max(term.weight_deriv[p] * xn);
            sup_gamma[p] = sup_gamma[p].max(term.weight_gamma[p] * xn);
        }
        if q % sub == 0 {
            boundary.push(term.x.iter().map(|z| z.norm()).sum());
            integral.push(acc_int);
            derivative.push(acc_tv);
        }
    }
    // In s = t/T units: ∂ₛ = T∂ₜ, so x_s = T x, (A+B+C)_s = T(A+B+C) and ∂ₛx_s = T²∂ₜx.
    let m_dim = path.samples[0].dec.dfs_dim() as f64;
    let last = terms.last().expect("non-empty path");
    let t2 = total_time * total_time;
    let mut coeff = 0.0;
    let mut constant = 0.0;
    for p in 0..pairs {
        coeff += total_time * last.x[p].norm() + t2 * sup_weighted[p] + t2 * sup_slope[p];
        constant += total_time * sup_gamma[p];
    }
    let scaled =
        ScaledDeficit { total_time, inverse_t_coefficient: 4.0 * m_dim * coeff, constant_term: 4.0 * m_dim * constant };
    Ok(Level { boundary, integral, derivative, sup_x, scaled, a: last.a.clone(), b: last.b.clone(), c: last.c })
}

/// Purity lower bound on `times` (first entry is the start of the evolution). The DFS path is tracked with
/// finite differences on `times` subdivided `2^k` times, doubling until the totals agree to `rel_tol`.
pub fn purity_lower_bound(model: &SystemModel, times: &[f64], opts: &BoundOptions) -> Result<PurityBoundTerms> {
    if times.len() < 2 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Argument("bound grid needs at least two increasing times".into()));
    }
    let tracker = DfsTracker::new(model).with_route(DerivativeRoute::FiniteDifference);
    let total = |l: &Level| l.integral.last().copied().unwrap_or(0.0) + l.derivative.last().copied().unwrap_or(0.0);
    let mut level = evaluate_level(&tracker, times, 1, &opts.selector)?;
    let mut refinements = 0;
    let mut change = f64::INFINITY;
    let mut converged = false;
    while refinements < opts.max_refinements {
        let next = evaluate_level(&tracker, times, 1 << (refinements + 1), &opts.selector)?;
        refinements += 1;
        let (a, b) = (total(&level), total(&next));
        change = if b == 0.0 { (a - b).abs() } else { ((a - b) / b).abs() };
        level = next;
        if change <= opts.rel_tol {
            converged = true;
            break;
        }
    }
    let m = level.a.len() as f64;
    let bound: Vec<f64> = (0..times.len())
        .map(|q| opts.initial_purity - 4.0 * m * (level.boundary[q] + level.integral[q] + level.derivative[q]))
        .collect();
    let finite = bound.iter().all(|b| b.is_finite());
    let conditions =
        [level.sup_x, level.integral.last().copied().unwrap_or(0.0), level.derivative.last().copied().unwrap_or(0.0)];
    Ok(PurityBoundTerms {
        times: times.to_vec(),
        boundary_term: level.boundary,
        integral_terms: level.integral,
        derivative_terms: level.derivative,
        bound,
        a_j: level.a,
        b_m: level.b,
        c_term: level.c,
        conditions,
        scaled: level.scaled,
        converged,
        refinements,
        last_change: change,
        finite,
    })
}
