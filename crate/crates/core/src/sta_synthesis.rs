//! Counterdiabatic fields that transport states along a t-DFS at arbitrary speed, and the DFS transport
//! unitary they generate.

use crate::dfs_analysis::{effective_hamiltonian, BasisPath, DfsDecomposition, DfsTracker, PathSample, Pick};
use crate::error::{Error, Result};
use crate::linalg::{max_abs, polar_unitary, CMatrix, I};
use crate::operator_model::{OperatorSet, SystemModel};
use crate::C64;

const GAUGE_OVERLAP_MIN: f64 = 0.99;
const UNITARITY_DRIFT_MAX: f64 = 1e-6;
const GENERATOR_PROBE: f64 = 1e-3;

/// Counterdiabatic addition at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct StaFields {
    pub t: f64,
    /// `Σ_{n,k} i⟨Φ_n^⊥|∂ₜΦ_k⟩ |Φ_n^⊥⟩⟨Φ_k| + h.c.`
    pub h1: CMatrix,
    /// `H₀ + H₁`.
    pub h_total: CMatrix,
    /// `(N−M)×M` block `i⟨Φ_n^⊥|∂ₜΦ_k⟩`.
    pub offdiag_target: CMatrix,
}

/// Builds `H₁` from a sample of a gauge-continuous path. Diagonal blocks of `H₁` are zero.
pub fn counterdiabatic_block(sample: &PathSample) -> Result<StaFields> {
    if sample.stencil_overlap < GAUGE_OVERLAP_MIN {
        return Err(Error::Gauge { t: sample.t, overlap: sample.stencil_overlap });
    }
    let dec = &sample.dec;
    let target = sample.offdiag.map(|z| z * I);
    let lower = &dec.comp_basis * &target * dec.dfs_basis.adjoint();
    let h1 = &lower + lower.adjoint();
    let h_total = &sample.ops.hamiltonian + &h1;
    Ok(StaFields { t: sample.t, h1, h_total, offdiag_target: target })
}

/// Violation of the transport condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaResidual {
    /// `max_{j,n} |⟨Φ_j|H|Φ_n^⊥⟩ − (i⟨Φ_n^⊥|∂ₜΦ_j⟩)* + (i/2)Σ_α c_α*⟨Φ_j|F_α|Φ_n^⊥⟩|`.
    pub residual: f64,
    /// `‖H‖_F + Σ_α‖F_α‖_F²`.
    pub scale: f64,
}

impl StaResidual {
    pub fn passes(&self) -> bool {
        self.residual < 1e-9 * self.scale.max(1.0)
    }
}

/// Checks `⟨Φ_j|H|Φ_n^⊥⟩ = (i⟨Φ_n^⊥|∂ₜΦ_j⟩)* − (i/2)Σ_α c_α*⟨Φ_j|F_α|Φ_n^⊥⟩` for `H` in `ops`, with
/// `basis_dt` the `(N−M)×M` block `⟨Φ_n^⊥|∂ₜΦ_j⟩`.
pub fn verify_sta(ops: &OperatorSet, dfs: &DfsDecomposition, basis_dt: &CMatrix) -> Result<StaResidual> {
    let (m, k) = (dfs.dfs_dim(), dfs.comp_dim());
    if basis_dt.nrows() != k || basis_dt.ncols() != m {
        return Err(Error::Dimension { expected: k * m, found: basis_dt.len() });
    }
    let h_pq = dfs.dfs_basis.adjoint() * &ops.hamiltonian * &dfs.comp_basis;
    let mut jump = CMatrix::zeros(m, k);
    for (f, &c) in ops.lindblads.iter().zip(&dfs.eigenvalues) {
        jump += dfs.dfs_basis.adjoint() * f * &dfs.comp_basis * c.conj();
    }
    let target = basis_dt.map(|z| z * I).adjoint() - jump * (I * 0.5);
    Ok(StaResidual { residual: max_abs(&(h_pq - target)), scale: ops.rate_scale() })
}

/// `U_DFS` sampled along a path.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportUnitary {
    pub times: Vec<f64>,
    /// Full `N×N` propagator at each time.
    pub u: Vec<CMatrix>,
    /// `u_ij(t) = ⟨Φ_i(t)|U(t)|Φ_j(0)⟩`.
    pub coeffs: Vec<CMatrix>,
    /// `max ‖U†U − I‖` over the samples.
    pub unitarity_error: f64,
    /// `max ‖u u† − I‖` over the samples.
    pub coeff_unitarity_error: f64,
    /// Largest deviation of `i(∂ₜU)U†`, restricted to the DFS, from `H_eff⁰ + H_D` at interior samples,
    /// with `∂ₜU` from a five-point stencil of short RK4 hops.
    pub generator_residual: f64,
}

/// Optional steering block `H_D(t)` added on the DFS.
pub type SteeringHook<'a> = &'a (dyn Fn(f64) -> CMatrix + 'a);

/// Solves `i∂ₜU = (H_eff⁰ + P H_D P)U` from `U(0) = I` with RK4 and per-step polar re-unitarisation.
/// `model` must already contain the counterdiabatic field; the DFS eigenvalues at intermediate times are
/// obtained by following `path`.
pub fn transport_unitary(
    model: &SystemModel,
    path: &BasisPath,
    dt_max: f64,
    steering: Option<SteeringHook<'_>>,
) -> Result<TransportUnitary> {
    let samples = &path.samples;
    if samples.is_empty() {
        return Err(Error::Argument("empty basis path".into()));
    }
    if dt_max.is_nan() || dt_max <= 0.0 {
        return Err(Error::Argument("dt_max must be positive".into()));
    }
    let tracker = DfsTracker::new(model);
    let generator = |t: f64, reference: &DfsDecomposition| -> Result<CMatrix> {
        let ops = model.evaluate(t)?;
        let dec = tracker.decompose(t, Pick::Follow(reference))?;
        let mut g = effective_hamiltonian(&ops, &dec.eigenvalues)?;
        if let Some(hd) = steering {
            g += &dec.proj_dfs * hd(t) * &dec.proj_dfs;
        }
        Ok(g)
    };
    let n = model.dim();
    let rk4 = |u: &CMatrix, t: f64, h: f64, g0: &CMatrix, reference: &DfsDecomposition| -> Result<(CMatrix, CMatrix)> {
        let gm = generator(t + 0.5 * h, reference)?;
        let g1 = generator(t + h, reference)?;
        let f = |g: &CMatrix, x: &CMatrix| g * x * (-I);
        let k1 = f(g0, u);
        let k2 = f(&gm, &(u + &k1 * C64::new(0.5 * h, 0.0)));
        let k3 = f(&gm, &(u + &k2 * C64::new(0.5 * h, 0.0)));
        let k4 = f(&g1, &(u + &k3 * C64::new(h, 0.0)));
        Ok((u + (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(h / 6.0, 0.0), g1))
    };
    let first = &samples[0];
    let mut u = CMatrix::identity(n, n);
    let mut us = vec![u.clone()];
    let mut gens = vec![generator(first.t, &first.dec)?];
    for w in samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let steps = ((b.t - a.t) / dt_max).ceil().max(1.0) as usize;
        let h = (b.t - a.t) / steps as f64;
        let mut g0 = gens.last().expect("generator at the previous sample").clone();
        for s in 0..steps {
            let t = a.t + h * s as f64;
            let reference = if s == 0 { &a.dec } else { &b.dec };
            let (next, g1) = rk4(&u, t, h, &g0, reference)?;
            let drift = max_abs(&(next.adjoint() * &next - CMatrix::identity(n, n)));
            if drift > UNITARITY_DRIFT_MAX {
                return Err(Error::Unitarity { t: t + h, drift });
            }
            u = polar_unitary(&next);
            g0 = g1;
        }
        us.push(u.clone());
        gens.push(g0);
    }

    let coeffs: Vec<CMatrix> =
        samples.iter().zip(&us).map(|(s, u)| s.dec.dfs_basis.adjoint() * u * &first.dec.dfs_basis).collect();
    let m = first.dec.dfs_dim();
    let unitarity_error = us.iter().map(|u| max_abs(&(u.adjoint() * u - CMatrix::identity(n, n)))).fold(0.0, f64::max);
    let coeff_unitarity_error =
        coeffs.iter().map(|c| max_abs(&(c * c.adjoint() - CMatrix::identity(m, m)))).fold(0.0, f64::max);

    let delta = GENERATOR_PROBE.min(dt_max);
    let mut generator_residual: f64 = 0.0;
    for (q, s) in samples.iter().enumerate() {
        if !(model.contains(s.t - 2.0 * delta) && model.contains(s.t + 2.0 * delta)) {
            continue;
        }
        let probe = |sign: f64| -> Result<(CMatrix, CMatrix)> {
            let h = sign * delta;
            let (one, g1) = rk4(&us[q], s.t, h, &gens[q], &s.dec)?;
            let (two, _) = rk4(&one, s.t + h, h, &g1, &s.dec)?;
            Ok((one, two))
        };
        let (p1, p2) = probe(1.0)?;
        let (m1, m2) = probe(-1.0)?;
        let du = (m2 - m1 * C64::new(8.0, 0.0) + p1 * C64::new(8.0, 0.0) - p2) / C64::new(12.0 * delta, 0.0);
        let gen = du * us[q].adjoint() * I;
        generator_residual = generator_residual.max(max_abs(&((gen - &gens[q]) * &s.dec.proj_dfs)));
    }
    Ok(TransportUnitary {
        times: samples.iter().map(|s| s.t).collect(),
        u: us,
        coeffs,
        unitarity_error,
        coeff_unitarity_error,
        generator_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dfs_analysis::{DerivativeRoute, Selector};
    use crate::linalg::c;
    use crate::operator_model::SqueezeSchedule;
    use crate::squeezed_qubit::{dfs_state, sta_hamiltonian, ControlMode, SqueezedQubit};

    fn model(r0: f64, mu: f64, nu: f64, control: ControlMode, t_final: f64) -> SystemModel {
        let s = SqueezeSchedule { r0, theta0: 0.2, mu, nu, gamma: 1.0, offset_o: 0.0 };
        SqueezedQubit::new(s, control).model(t_final).unwrap()
    }

    fn sample(m: &SystemModel, t: f64, route: DerivativeRoute) -> PathSample {
        DfsTracker::new(m).with_route(route).sample(t, Pick::Select(&Selector::Index(0))).unwrap()
    }

    #[test]
    fn static_bases_give_zero_field() {
        let m = model(1.0, 0.0, 0.0, ControlMode::Engineered, 1.0);
        let s = sample(&m, 0.5, DerivativeRoute::FiniteDifference);
        let f = counterdiabatic_block(&s).unwrap();
        assert_eq!(max_abs(&f.h1), 0.0);
        let res = verify_sta(&s.ops, &s.dec, &s.offdiag).unwrap();
        assert!(res.residual < 1e-12 && res.passes());
    }

    #[test]
    fn field_matches_closed_form() {
        for &(r0, mu, nu) in &[(0.1, 0.3, 0.0), (1.0, 0.5, 0.2), (2.0, 0.0, 0.7), (0.5, 1.0, 1.0)] {
            let m = model(r0, mu, nu, ControlMode::Engineered, 1.0);
            let t = 0.5;
            let r = r0 + mu * t;
            let want = sta_hamiltonian(r, 0.2 + nu * t, mu, nu).unwrap();
            let scale = max_abs(&want);
            let fd = counterdiabatic_block(&sample(&m, t, DerivativeRoute::FiniteDifference)).unwrap();
            let an = counterdiabatic_block(&sample(&m, t, DerivativeRoute::Analytic)).unwrap();
            assert!(max_abs(&(&fd.h1 - &want)) < 1e-4 * scale, "fd r={r}");
            assert!(max_abs(&(&an.h1 - &want)) < 1e-8 * scale, "analytic r={r}");
            assert!(crate::linalg::hermiticity_error(&an.h1) < 1e-12);
        }
    }

    #[test]
    fn assembled_control_satisfies_transport_condition() {
        let bare = model(0.5, 1.0, 1.0, ControlMode::Engineered, 1.0);
        let s = sample(&bare, 0.3, DerivativeRoute::Analytic);
        let without = verify_sta(&s.ops, &s.dec, &s.offdiag).unwrap();
        assert!(without.residual > 0.1);
        let driven = model(0.5, 1.0, 1.0, ControlMode::Sta, 1.0);
        let ops = driven.evaluate(0.3).unwrap();
        let with = verify_sta(&ops, &s.dec, &s.offdiag).unwrap();
        assert!(with.passes(), "residual {}", with.residual);
    }

    #[test]
    fn gauge_break_is_reported() {
        let m = model(1.0, 0.1, 0.0, ControlMode::Engineered, 1.0);
        let mut s = sample(&m, 0.5, DerivativeRoute::FiniteDifference);
        s.stencil_overlap = 0.5;
        assert!(matches!(counterdiabatic_block(&s), Err(Error::Gauge { .. })));
    }

    #[test]
    fn transport_follows_the_dfs_state() {
        let m = model(0.05, 1.0, 1.0, ControlMode::Sta, 2.0);
        let times: Vec<f64> = (0..=40).map(|k| k as f64 * 0.05).collect();
        let path = DfsTracker::new(&m).track(&times, &Selector::Index(0)).unwrap();
        let tu = transport_unitary(&m, &path, 1e-3, None).unwrap();
        assert!(tu.unitarity_error < 1e-10);
        assert!(tu.coeff_unitarity_error < 1e-6, "{}", tu.coeff_unitarity_error);
        assert!(tu.generator_residual < 1e-8, "{}", tu.generator_residual);
        let phi0 = dfs_state(0.05, 0.2);
        for (k, t) in times.iter().enumerate() {
            let phi = dfs_state(0.05 + t, 0.2 + t);
            let overlap = phi.dotc(&(&tu.u[k] * &phi0)).norm();
            assert!((overlap - 1.0).abs() < 1e-6, "t={t} overlap {overlap}");
        }
    }

    #[test]
    fn trivial_transport_is_identity() {
        let m = model(1.0, 0.0, 0.0, ControlMode::Engineered, 1.0);
        let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
        let path = DfsTracker::new(&m).track(&times, &Selector::Index(0)).unwrap();
        let tu = transport_unitary(&m, &path, 1e-2, None).unwrap();
        let id = CMatrix::identity(2, 2);
        assert!(tu.u.iter().all(|u| max_abs(&(u - &id)) < 1e-12));
        let hook = |_t: f64| CMatrix::from_element(2, 2, c(0.0, 0.0));
        let hooked = transport_unitary(&m, &path, 1e-2, Some(&hook)).unwrap();
        assert_eq!(hooked.u, tu.u);
    }
}
