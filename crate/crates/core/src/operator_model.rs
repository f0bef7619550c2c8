//! Time-dependent system definitions: a Hamiltonian `H₀(t)` and Lindblad operators `F_α(t)`
//! evaluated as dense complex matrices on a declared time interval.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius, hermitian_part, hermiticity_error, zeros, CMatrix};
use crate::squeezed_qubit::{ControlMode, SqueezedQubit};

/// Instantaneous operators. Lindblad operators carry their rate, `F = √γ·L`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSet {
    pub hamiltonian: CMatrix,
    pub lindblads: Vec<CMatrix>,
    /// Largest entry of `H − H†` before symmetrisation.
    pub hermiticity_drift: f64,
}

impl OperatorSet {
    /// Validates shapes and symmetrises the Hamiltonian, recording the removed anti-Hermitian part.
    pub fn new(hamiltonian: CMatrix, lindblads: Vec<CMatrix>) -> Result<Self> {
        let n = hamiltonian.nrows();
        if n == 0 || hamiltonian.ncols() != n {
            return Err(Error::Argument(format!(
                "hamiltonian must be square and non-empty, got {}x{}",
                n,
                hamiltonian.ncols()
            )));
        }
        for f in &lindblads {
            if f.nrows() != n || f.ncols() != n {
                return Err(Error::Dimension { expected: n, found: f.nrows().max(f.ncols()) });
            }
        }
        let hermiticity_drift = hermiticity_error(&hamiltonian);
        Ok(Self { hamiltonian: hermitian_part(&hamiltonian), lindblads, hermiticity_drift })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    /// `‖H‖_F + Σ_α ‖F_α‖_F²`, an upper bound on the generator's rate.
    pub fn rate_scale(&self) -> f64 {
        frobenius(&self.hamiltonian) + self.lindblads.iter().map(|f| frobenius(f).powi(2)).sum::<f64>()
    }

    /// Copy with `extra` added to the Hamiltonian.
    pub fn with_added_hamiltonian(&self, extra: &CMatrix) -> Result<Self> {
        Self::new(&self.hamiltonian + extra, self.lindblads.clone())
    }
}

/// Time derivatives `(∂ₜH₀, {∂ₜF_α})`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorDerivative {
    pub hamiltonian: CMatrix,
    pub lindblads: Vec<CMatrix>,
}

/// A time-dependent operator schedule.
pub trait Schedule: Send + Sync {
    fn dim(&self) -> usize;

    /// Raw operators at `t`; the Hamiltonian is symmetrised by [`SystemModel::evaluate`].
    fn operators(&self, t: f64) -> (CMatrix, Vec<CMatrix>);

    /// Analytic derivative, when the schedule provides one.
    fn derivative(&self, _t: f64) -> Option<OperatorDerivative> {
        None
    }
}

/// Time-independent operators.
#[derive(Debug, Clone)]
pub struct ConstantSchedule {
    pub hamiltonian: CMatrix,
    pub lindblads: Vec<CMatrix>,
}

impl Schedule for ConstantSchedule {
    fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    fn operators(&self, _t: f64) -> (CMatrix, Vec<CMatrix>) {
        (self.hamiltonian.clone(), self.lindblads.clone())
    }

    fn derivative(&self, _t: f64) -> Option<OperatorDerivative> {
        let n = self.dim();
        Some(OperatorDerivative { hamiltonian: zeros(n, n), lindblads: vec![zeros(n, n); self.lindblads.len()] })
    }
}

/// Operators sampled on an increasing time grid, linearly interpolated in between.
#[derive(Debug, Clone)]
pub struct GridSchedule {
    times: Vec<f64>,
    samples: Vec<(CMatrix, Vec<CMatrix>)>,
}

impl GridSchedule {
    pub fn new(times: Vec<f64>, samples: Vec<(CMatrix, Vec<CMatrix>)>) -> Result<Self> {
        if times.len() < 2 || times.len() != samples.len() {
            return Err(Error::Argument("grid schedule needs at least two samples, one per time".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Argument("grid times must be strictly increasing".into()));
        }
        let n = samples[0].0.nrows();
        let k = samples[0].1.len();
        for (h, ls) in &samples {
            if h.nrows() != n || ls.len() != k || ls.iter().any(|f| f.nrows() != n) {
                return Err(Error::Argument("grid samples must share dimension and operator count".into()));
            }
        }
        Ok(Self { times, samples })
    }

    pub fn span(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let idx = match self.times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => i.min(self.times.len() - 2),
            Err(i) => i.clamp(1, self.times.len() - 1) - 1,
        };
        let w = (t - self.times[idx]) / (self.times[idx + 1] - self.times[idx]);
        (idx, w)
    }
}

impl Schedule for GridSchedule {
    fn dim(&self) -> usize {
        self.samples[0].0.nrows()
    }

    fn operators(&self, t: f64) -> (CMatrix, Vec<CMatrix>) {
        let (i, w) = self.locate(t);
        let (h0, l0) = &self.samples[i];
        let (h1, l1) = &self.samples[i + 1];
        let h = h0.scale(1.0 - w) + h1.scale(w);
        let ls = l0.iter().zip(l1).map(|(a, b)| a.scale(1.0 - w) + b.scale(w)).collect();
        (h, ls)
    }
}

/// Closure-backed schedule.
pub struct FnSchedule<F> {
    dim: usize,
    f: F,
}

impl<F> FnSchedule<F>
where
    F: Fn(f64) -> (CMatrix, Vec<CMatrix>) + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> Schedule for FnSchedule<F>
where
    F: Fn(f64) -> (CMatrix, Vec<CMatrix>) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn operators(&self, t: f64) -> (CMatrix, Vec<CMatrix>) {
        (self.f)(t)
    }
}

/// An immutable schedule on a closed time interval, shareable across threads.
#[derive(Clone)]
pub struct SystemModel {
    schedule: Arc<dyn Schedule>,
    t0: f64,
    t1: f64,
    fd_step: f64,
}

impl std::fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SystemModel")
            .field("dim", &self.dim())
            .field("interval", &(self.t0, self.t1))
            .field("fd_step", &self.fd_step)
            .finish()
    }
}

impl SystemModel {
    pub fn new(schedule: impl Schedule + 'static, t0: f64, t1: f64) -> Result<Self> {
        Self::from_arc(Arc::new(schedule), t0, t1)
    }

    pub fn from_arc(schedule: Arc<dyn Schedule>, t0: f64, t1: f64) -> Result<Self> {
        if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
            return Err(Error::Argument(format!("invalid interval [{t0}, {t1}]")));
        }
        if schedule.dim() == 0 {
            return Err(Error::Argument("dimension must be positive".into()));
        }
        Ok(Self { schedule, t0, t1, fd_step: 1e-5 })
    }

    /// Sets the central-difference step `h`.
    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    pub fn dim(&self) -> usize {
        self.schedule.dim()
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.t0, self.t1)
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    pub fn has_analytic_derivative(&self) -> bool {
        self.schedule.derivative(self.t0).is_some()
    }

    fn slack(&self) -> f64 {
        1e-12 * (self.t1 - self.t0).max(1.0)
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t0 - self.slack() && t <= self.t1 + self.slack()
    }

    fn check(&self, t: f64) -> Result<()> {
        if self.contains(t) {
            Ok(())
        } else {
            Err(Error::Range { t, lo: self.t0, hi: self.t1 })
        }
    }

    /// Instantaneous operators at `t` with the Hamiltonian symmetrised.
    pub fn evaluate(&self, t: f64) -> Result<OperatorSet> {
        self.check(t)?;
        let (h, ls) = self.schedule.operators(t);
        OperatorSet::new(h, ls)
    }

    /// Analytic derivative when available, otherwise a central difference with step `h`
    /// (the model's default step when `None`).
    pub fn evaluate_derivative(&self, t: f64, h: Option<f64>) -> Result<OperatorDerivative> {
        self.check(t)?;
        match self.schedule.derivative(t) {
            Some(d) => Ok(d),
            None => self.finite_difference(t, h.unwrap_or(self.fd_step)),
        }
    }

    /// Central difference `(X(t+h) − X(t−h))/(2h)` regardless of analytic availability.
    pub fn finite_difference(&self, t: f64, h: f64) -> Result<OperatorDerivative> {
        if h.is_nan() || h <= 0.0 {
            return Err(Error::Argument(format!("finite-difference step must be positive, got {h}")));
        }
        self.check(t - h)?;
        self.check(t + h)?;
        let (hp, lp) = self.schedule.operators(t + h);
        let (hm, lm) = self.schedule.operators(t - h);
        let s = 0.5 / h;
        Ok(OperatorDerivative {
            hamiltonian: (hp - hm).scale(s),
            lindblads: lp.iter().zip(&lm).map(|(a, b)| (a - b).scale(s)).collect(),
        })
    }
}

/// Linear squeeze schedule `r(t) = r0 + μt + o`, `θ(t) = θ0 + νt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezeSchedule {
    #[serde(default)]
    pub r0: f64,
    #[serde(default)]
    pub theta0: f64,
    #[serde(default)]
    pub mu: f64,
    #[serde(default)]
    pub nu: f64,
    #[serde(default = "unit_gamma")]
    pub gamma: f64,
    #[serde(default, rename = "o")]
    pub offset_o: f64,
}

fn unit_gamma() -> f64 {
    1.0
}

impl SqueezeSchedule {
    pub fn r(&self, t: f64) -> f64 {
        self.r0 + self.mu * t + self.offset_o
    }

    pub fn theta(&self, t: f64) -> f64 {
        self.theta0 + self.nu * t
    }

    /// Checks `γ > 0` and `r(t) ≥ 0` on `[0, t_final]`.
    pub fn validate(&self, t_final: f64) -> Result<()> {
        let finite = [self.r0, self.theta0, self.mu, self.nu, self.gamma, self.offset_o, t_final];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(Error::Argument("schedule parameters must be finite".into()));
        }
        if self.gamma <= 0.0 {
            return Err(Error::Argument(format!("gamma must be positive, got {}", self.gamma)));
        }
        let r_min = self.r(0.0).min(self.r(t_final));
        if r_min < 0.0 {
            return Err(Error::Domain(format!("squeeze strength r(t) becomes negative ({r_min})")));
        }
        Ok(())
    }

    /// Default central-difference step `1e-5 / max(γ, |μ|, |ν|)`.
    pub fn default_fd_step(&self) -> f64 {
        1e-5 / self.gamma.max(self.mu.abs()).max(self.nu.abs())
    }
}

/// JSON system definition: `{"dim": 2, "schedule": {...}, "control": "engineered" | "none" | "sta"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDefinition {
    pub dim: usize,
    pub schedule: SqueezeSchedule,
    pub control: ControlMode,
}

impl SystemDefinition {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Argument(format!("system definition: {e}")))
    }

    /// Builds the model on `[0, t_final]`.
    pub fn build(&self, t_final: f64) -> Result<SystemModel> {
        if self.dim != 2 {
            return Err(Error::Argument(format!("squeeze schedules define two-level systems, got dim {}", self.dim)));
        }
        SqueezedQubit::new(self.schedule, self.control).model(t_final)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, max_abs};

    fn constant() -> SystemModel {
        let h = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.5), c(0.0, -0.5), c(-1.0, 0.0)]);
        let f = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.3, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        SystemModel::new(ConstantSchedule { hamiltonian: h, lindblads: vec![f] }, 0.0, 1.0).unwrap()
    }

    #[test]
    fn constant_model_is_time_independent() {
        let m = constant();
        let a = m.evaluate(0.1).unwrap();
        let b = m.evaluate(0.9).unwrap();
        assert_eq!(a, b);
        let d = m.evaluate_derivative(0.5, None).unwrap();
        assert_eq!(max_abs(&d.hamiltonian), 0.0);
        assert_eq!(max_abs(&d.lindblads[0]), 0.0);
        let fd = m.finite_difference(0.5, 1e-3).unwrap();
        assert_eq!(max_abs(&fd.lindblads[0]), 0.0);
    }

    #[test]
    fn out_of_interval_is_range_error() {
        let m = constant();
        assert!(matches!(m.evaluate(1.5), Err(Error::Range { .. })));
        assert!(matches!(m.finite_difference(0.0, 1e-3), Err(Error::Range { .. })));
    }

    #[test]
    fn hamiltonian_is_symmetrised_with_drift_recorded() {
        let h = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let ops = OperatorSet::new(h, vec![]).unwrap();
        assert!((ops.hermiticity_drift - 2.0).abs() < 1e-15);
        assert_eq!(ops.hamiltonian[(0, 1)], c(1.0, 0.0));
        assert_eq!(ops.hamiltonian[(1, 0)], c(1.0, 0.0));
    }

    #[test]
    fn mismatched_lindblad_is_rejected() {
        let h = CMatrix::zeros(2, 2);
        let f = CMatrix::zeros(3, 3);
        assert!(matches!(OperatorSet::new(h, vec![f]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn grid_schedule_interpolates_linearly() {
        let a = CMatrix::from_element(1, 1, c(0.0, 0.0));
        let b = CMatrix::from_element(1, 1, c(2.0, 0.0));
        let g = GridSchedule::new(vec![0.0, 1.0], vec![(a.clone(), vec![a]), (b.clone(), vec![b])]).unwrap();
        let m = SystemModel::new(g, 0.0, 1.0).unwrap();
        let ops = m.evaluate(0.25).unwrap();
        assert!((ops.hamiltonian[(0, 0)].re - 0.5).abs() < 1e-15);
        let d = m.finite_difference(0.5, 1e-3).unwrap();
        assert!((d.lindblads[0][(0, 0)].re - 2.0).abs() < 1e-12);
    }

    #[test]
    fn linear_schedule_has_exact_rate() {
        let s = SqueezeSchedule { r0: 0.2, theta0: 0.0, mu: 0.3, nu: 0.0, gamma: 1.0, offset_o: 0.0 };
        let h = 1e-3;
        assert!(((s.r(1.0 + h) - s.r(1.0 - h)) / (2.0 * h) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn system_definition_parses() {
        let text = r#"{"dim": 2, "schedule": {"r0": 0.5, "theta0": 0.0, "mu": 0.1, "nu": 0.0, "gamma": 1.0, "o": 0.0}, "control": "engineered"}"#;
        let def = SystemDefinition::from_json(text).unwrap();
        assert_eq!(def.control, ControlMode::Engineered);
        let model = def.build(2.0).unwrap();
        assert_eq!(model.dim(), 2);
        assert!(SystemDefinition::from_json(r#"{"dim": 2}"#).is_err());
    }
}
