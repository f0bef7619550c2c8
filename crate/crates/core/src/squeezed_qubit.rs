//! Two-level atom in an engineered squeezed-vacuum reservoir.
//!
//! Conventions: `σ₋ = |0⟩⟨1|`, `H₀ = Ω|0⟩⟨1| + h.c.`,
//! `L = cosh r·e^{−iθ/2}σ₋ + sinh r·e^{iθ/2}σ₊`, full Lindblad operator `√γ·L`.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{anticommutator, c, outer, CMatrix, CVector, I, ONE, ZERO};
use crate::operator_model::{OperatorDerivative, Schedule, SqueezeSchedule, SystemModel};

/// Drive angle `max(|μ|,|ν|)·t_final` covered by every scenario.
pub const DRIVE_HORIZON: f64 = 0.8 * PI;

/// Squeeze strength substituted for `r(0) = 0` so that the DFS is well defined at the start.
pub const START_PERTURBATION: f64 = 1e-6;

pub fn sigma_minus() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO])
}

pub fn sigma_plus() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ZERO, ONE, ZERO])
}

/// `√(sinh r cosh r)`, the modulus of the eigenvalues of `L`.
pub fn lambda(r: f64) -> f64 {
    (r.sinh() * r.cosh()).sqrt()
}

pub fn lindblad_l(r: f64, theta: f64) -> CMatrix {
    let a = C64::from_polar(r.cosh(), -0.5 * theta);
    let b = C64::from_polar(r.sinh(), 0.5 * theta);
    CMatrix::from_row_slice(2, 2, &[ZERO, a, b, ZERO])
}

/// `∂ₜL` for `ṙ = dr`, `θ̇ = dtheta`.
pub fn lindblad_l_derivative(r: f64, theta: f64, dr: f64, dtheta: f64) -> CMatrix {
    let em = C64::from_polar(1.0, -0.5 * theta);
    let ep = C64::from_polar(1.0, 0.5 * theta);
    let a = em * (dr * r.sinh()) + em * c(0.0, -0.5 * dtheta * r.cosh());
    let b = ep * (dr * r.cosh()) + ep * c(0.0, 0.5 * dtheta * r.sinh());
    CMatrix::from_row_slice(2, 2, &[ZERO, a, b, ZERO])
}

fn channel(j: &CMatrix, rho: &CMatrix) -> CMatrix {
    let jd = j.adjoint();
    j * rho * &jd - anticommutator(&(&jd * j), rho).scale(0.5)
}

/// Four-term squeezed-vacuum dissipator with each jump paired to its own anticommutator:
/// `γcosh²r·D[σ₋] + γsinh²r·D[σ₊] + γ sinh r cosh r (e^{−iθ}σ₋ρσ₋ + e^{iθ}σ₊ρσ₊)`.
pub fn four_term_dissipator(r: f64, theta: f64, gamma: f64, rho: &CMatrix) -> CMatrix {
    let sm = sigma_minus();
    let sp = sigma_plus();
    let (ch, sh) = (r.cosh(), r.sinh());
    let cross = &sm * rho * &sm * C64::from_polar(1.0, -theta) + &sp * rho * &sp * C64::from_polar(1.0, theta);
    channel(&sm, rho).scale(gamma * ch * ch) + channel(&sp, rho).scale(gamma * sh * sh) + cross.scale(gamma * sh * ch)
}

/// Engineered control making `H_eff⁰ = 0`: `Ω = −iγ e^{−r−iθ/2} √(sinh r cosh r)/2`.
pub fn control_omega(r: f64, theta: f64, gamma: f64) -> C64 {
    C64::from_polar(0.5 * gamma * lambda(r) * (-r).exp(), -0.5 * theta) * (-I)
}

/// `Ω|0⟩⟨1| + Ω*|1⟩⟨0|`.
pub fn control_hamiltonian(omega: C64) -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, omega, omega.conj(), ZERO])
}

fn positive_r(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "squeeze strength r = {r} must be positive; use the offset parameter o to shift r(t) away from 0"
        )))
    }
}

/// Closed-form eigenvector of `L` for `+√(sinh r cosh r)`: `e^{−r/2}(√cosh r·e^{−iθ/2}, √sinh r)`.
pub fn dfs_state(r: f64, theta: f64) -> CVector {
    let n = (-0.5 * r).exp();
    CVector::from_vec(vec![C64::from_polar(n * r.cosh().sqrt(), -0.5 * theta), c(n * r.sinh().sqrt(), 0.0)])
}

/// Closed-form complement `e^{−r/2}(−√sinh r·e^{−iθ/2}, √cosh r)`.
pub fn complement_state(r: f64, theta: f64) -> CVector {
    let n = (-0.5 * r).exp();
    CVector::from_vec(vec![C64::from_polar(-n * r.sinh().sqrt(), -0.5 * theta), c(n * r.cosh().sqrt(), 0.0)])
}

/// Closed-form adiabatic condition `|4(μ + iν sinh r cosh r)| / (γ√(sinh r cosh r) e^{3r})`.
pub fn xi_closed_form(r: f64, mu: f64, nu: f64, gamma: f64) -> Result<f64> {
    positive_r(r)?;
    let sc = r.sinh() * r.cosh();
    let num = 4.0 * c(mu, nu * sc).norm();
    Ok(num / (gamma * sc.sqrt() * (3.0 * r).exp()))
}

/// `i⟨φ^⊥|∂ₜφ₁⟩ = i e^{−r}(μ + iν sinh r cosh r)/(2√(sinh r cosh r))` in the closed-form gauge.
pub fn sta_block_element(r: f64, mu: f64, nu: f64) -> Result<C64> {
    positive_r(r)?;
    let sc = r.sinh() * r.cosh();
    Ok(I * c(mu, nu * sc) * ((-r).exp() / (2.0 * sc.sqrt())))
}

/// Minimal counterdiabatic field `x|φ^⊥⟩⟨φ₁| + h.c.` with zero diagonal blocks.
pub fn sta_hamiltonian(r: f64, theta: f64, mu: f64, nu: f64) -> Result<CMatrix> {
    let x = sta_block_element(r, mu, nu)?;
    let phi = dfs_state(r, theta);
    let perp = complement_state(r, theta);
    let k = outer(&perp, &phi) * x;
    Ok(&k + k.adjoint())
}

/// The `|0⟩⟨1|` element of [`sta_hamiltonian`]; for `ν = 0` the field is exactly `Ω′|0⟩⟨1| + h.c.`.
pub fn sta_omega_prime(r: f64, theta: f64, mu: f64, nu: f64) -> Result<C64> {
    Ok(sta_hamiltonian(r, theta, mu, nu)?[(0, 1)])
}

/// Coherent control applied to the atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlMode {
    None,
    Engineered,
    #[serde(alias = "engineered+sta")]
    Sta,
}

impl std::str::FromStr for ControlMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "engineered" => Ok(Self::Engineered),
            "sta" | "engineered+sta" => Ok(Self::Sta),
            other => Err(Error::Argument(format!("unknown control mode '{other}'"))),
        }
    }
}

/// Operator schedule of the squeezed-vacuum atom.
#[derive(Debug, Clone, Copy)]
pub struct SqueezedQubit {
    pub schedule: SqueezeSchedule,
    pub control: ControlMode,
}

impl SqueezedQubit {
    pub fn new(schedule: SqueezeSchedule, control: ControlMode) -> Self {
        Self { schedule, control }
    }

    fn sta_step(&self) -> f64 {
        1e-6 / self.schedule.gamma.max(self.schedule.mu.abs()).max(self.schedule.nu.abs())
    }

    /// Hamiltonian at `t` for the configured control.
    pub fn hamiltonian(&self, t: f64) -> CMatrix {
        let s = &self.schedule;
        let (r, th) = (s.r(t), s.theta(t));
        match self.control {
            ControlMode::None => CMatrix::zeros(2, 2),
            ControlMode::Engineered => control_hamiltonian(control_omega(r, th, s.gamma)),
            ControlMode::Sta => {
                let h1 = sta_hamiltonian(r, th, s.mu, s.nu)
                    .unwrap_or_else(|_| CMatrix::from_element(2, 2, c(f64::NAN, 0.0)));
                control_hamiltonian(control_omega(r, th, s.gamma)) + h1
            }
        }
    }

    /// Model on `[0, t_final]` with the default finite-difference step.
    pub fn model(self, t_final: f64) -> Result<SystemModel> {
        self.schedule.validate(t_final)?;
        if self.control == ControlMode::Sta {
            positive_r(self.schedule.r(0.0).min(self.schedule.r(t_final)))?;
        }
        let h = self.schedule.default_fd_step();
        Ok(SystemModel::new(self, 0.0, t_final)?.with_fd_step(h))
    }
}

impl Schedule for SqueezedQubit {
    fn dim(&self) -> usize {
        2
    }

    fn operators(&self, t: f64) -> (CMatrix, Vec<CMatrix>) {
        let s = &self.schedule;
        let f = lindblad_l(s.r(t), s.theta(t)).scale(s.gamma.sqrt());
        (self.hamiltonian(t), vec![f])
    }

    fn derivative(&self, t: f64) -> Option<OperatorDerivative> {
        let s = &self.schedule;
        let (r, th) = (s.r(t), s.theta(t));
        if r <= 0.0 {
            return None;
        }
        let df = lindblad_l_derivative(r, th, s.mu, s.nu).scale(s.gamma.sqrt());
        let lam = lambda(r);
        let g = lam * (-r).exp();
        let dg = (-r).exp() * ((2.0 * r).cosh() / (2.0 * lam) - lam);
        let domega = C64::from_polar(0.5 * s.gamma, -0.5 * th) * (-I) * (c(dg * s.mu, 0.0) + c(0.0, -0.5 * s.nu * g));
        let dh = match self.control {
            ControlMode::None => CMatrix::zeros(2, 2),
            ControlMode::Engineered => control_hamiltonian(domega),
            ControlMode::Sta => {
                let h = self.sta_step().min(0.5 * r / s.mu.abs().max(f64::MIN_POSITIVE));
                let plus = sta_hamiltonian(s.r(t + h), s.theta(t + h), s.mu, s.nu).ok()?;
                let minus = sta_hamiltonian(s.r(t - h), s.theta(t - h), s.mu, s.nu).ok()?;
                control_hamiltonian(domega) + (plus - minus).scale(0.5 / h)
            }
        };
        Some(OperatorDerivative { hamiltonian: dh, lindblads: vec![df] })
    }
}

/// Initial density matrix of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialState {
    /// `|φ₁(0)⟩⟨φ₁(0)|` from the numerical eigen-solve.
    Dfs,
    /// `sin φ|0⟩ + cos φ|1⟩`.
    Pure {
        phi: f64,
    },
    MaximallyMixed,
}

impl InitialState {
    pub fn pure_vector(phi: f64) -> CVector {
        CVector::from_vec(vec![c(phi.sin(), 0.0), c(phi.cos(), 0.0)])
    }
}

/// Fully populated parameters of one simulated trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QubitExampleParams {
    pub schedule: SqueezeSchedule,
    pub control_mode: ControlMode,
    pub initial_state: InitialState,
    pub t_final: f64,
    pub dt: f64,
    /// Number of recorded intervals; the grid has `samples + 1` points.
    pub samples: usize,
    /// Drive angle used to rescale `t_final` when `μ` or `ν` is overridden.
    pub horizon: f64,
    /// Set when `r(0) = 0` was replaced by [`START_PERTURBATION`].
    pub start_perturbed: bool,
}

impl QubitExampleParams {
    fn base(schedule: SqueezeSchedule, control_mode: ControlMode, initial_state: InitialState) -> Self {
        let rate = schedule.mu.abs().max(schedule.nu.abs());
        let mut p = Self {
            schedule,
            control_mode,
            initial_state,
            t_final: DRIVE_HORIZON / rate,
            dt: 1e-3 / schedule.gamma,
            samples: 1000,
            horizon: DRIVE_HORIZON,
            start_perturbed: false,
        };
        p.perturb_start();
        p
    }

    fn perturb_start(&mut self) {
        if self.control_mode != ControlMode::Sta && self.schedule.r(0.0) == 0.0 {
            self.schedule.r0 = START_PERTURBATION - self.schedule.offset_o;
            self.start_perturbed = true;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::Argument(format!("t_final must be positive, got {}", self.t_final)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Argument(format!("dt must be positive, got {}", self.dt)));
        }
        if self.samples == 0 {
            return Err(Error::Argument("samples must be positive".into()));
        }
        if let InitialState::Pure { phi } = self.initial_state {
            if !(0.0..2.0 * PI).contains(&phi) {
                return Err(Error::Argument(format!("pure-state angle {phi} outside [0, 2π)")));
            }
        }
        self.schedule.validate(self.t_final)
    }

    pub fn system(&self) -> SqueezedQubit {
        SqueezedQubit::new(self.schedule, self.control_mode)
    }

    pub fn model(&self) -> Result<SystemModel> {
        self.validate()?;
        self.system().model(self.t_final)
    }

    /// Uniform recording grid on `[0, t_final]`.
    pub fn time_grid(&self) -> Vec<f64> {
        (0..=self.samples).map(|k| self.t_final * k as f64 / self.samples as f64).collect()
    }

    /// Applies `key=value` overrides. Changing `mu` or `nu` rescales `t_final` to the same drive
    /// angle unless `t_final` is itself overridden or the new drive rate is zero.
    pub fn with_overrides(&self, overrides: &[(String, String)]) -> Result<Self> {
        let mut p = self.clone();
        let mut rate_changed = false;
        let mut t_final_set = false;
        for (key, value) in overrides {
            let num = || -> Result<f64> {
                value
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Argument(format!("override {key}={value}: not a number")))
            };
            match key.as_str() {
                "r0" => p.schedule.r0 = num()?,
                "theta0" => p.schedule.theta0 = num()?,
                "mu" => {
                    p.schedule.mu = num()?;
                    rate_changed = true;
                }
                "nu" => {
                    p.schedule.nu = num()?;
                    rate_changed = true;
                }
                "gamma" => p.schedule.gamma = num()?,
                "o" => p.schedule.offset_o = num()?,
                "t_final" => {
                    p.t_final = num()?;
                    t_final_set = true;
                }
                "dt" => p.dt = num()?,
                "samples" => {
                    p.samples =
                        value.trim().parse().map_err(|_| Error::Argument(format!("override samples={value}")))?
                }
                "phi0" => p.initial_state = InitialState::Pure { phi: num()? },
                "control" => p.control_mode = value.trim().parse()?,
                "initial" => {
                    p.initial_state = match value.trim() {
                        "dfs" => InitialState::Dfs,
                        "mixed" | "maximally_mixed" => InitialState::MaximallyMixed,
                        other => return Err(Error::Argument(format!("unknown initial state '{other}'"))),
                    }
                }
                other => return Err(Error::Argument(format!("unknown override key '{other}'"))),
            }
        }
        let rate = p.schedule.mu.abs().max(p.schedule.nu.abs());
        if rate_changed && !t_final_set && rate > 0.0 {
            p.t_final = p.horizon / rate;
        }
        if p.schedule.r(0.0) == 0.0 {
            p.perturb_start();
        }
        p.validate()?;
        Ok(p)
    }
}

/// A named parameter bundle inside a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub label: String,
    pub params: QubitExampleParams,
}

/// Figure scenario: one or more variants, the first being the default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub variants: Vec<Variant>,
}

impl Scenario {
    /// The named variant, or the default one.
    pub fn variant(&self, label: Option<&str>) -> Result<&Variant> {
        match label {
            None => Ok(&self.variants[0]),
            Some(l) => self.variants.iter().find(|v| v.label == l).ok_or_else(|| {
                let known: Vec<&str> = self.variants.iter().map(|v| v.label.as_str()).collect();
                Error::Argument(format!("scenario {} has no variant '{l}' (known: {})", self.name, known.join(", ")))
            }),
        }
    }
}

pub const SCENARIO_NAMES: [&str; 6] = ["fig1a", "fig1b", "fig2", "fig3", "fig4", "fig5"];

fn sched(r0: f64, mu: f64, nu: f64, offset_o: f64) -> SqueezeSchedule {
    SqueezeSchedule { r0, theta0: 0.0, mu, nu, gamma: 1.0, offset_o }
}

fn variant(label: impl Into<String>, params: QubitExampleParams) -> Variant {
    Variant { label: label.into(), params }
}

/// The six figure scenarios (γ = 1).
pub fn scenario(name: &str) -> Result<Scenario> {
    let rates = [0.01, 0.1, 1.0];
    let variants = match name {
        "fig1a" => {
            let mut v: Vec<Variant> = rates
                .iter()
                .map(|&mu| {
                    variant(
                        format!("mu={mu}"),
                        QubitExampleParams::base(sched(0.0, mu, 0.0, 0.0), ControlMode::Engineered, InitialState::Dfs),
                    )
                })
                .collect();
            v.push(variant(
                "no-control",
                QubitExampleParams::base(sched(0.0, 0.1, 0.0, 0.0), ControlMode::None, InitialState::Dfs),
            ));
            v
        }
        "fig1b" => rates
            .iter()
            .map(|&nu| {
                variant(
                    format!("nu={nu}"),
                    QubitExampleParams::base(sched(2.0 * PI, 0.0, nu, 0.0), ControlMode::Engineered, InitialState::Dfs),
                )
            })
            .collect(),
        "fig2" => vec![variant(
            "base",
            QubitExampleParams::base(sched(0.0, 0.1, 0.0, 0.0), ControlMode::Engineered, InitialState::Dfs),
        )],
        "fig3" => {
            let mut p = QubitExampleParams::base(
                sched(0.0, 0.1, 0.1, 0.0),
                ControlMode::Engineered,
                InitialState::Pure { phi: 0.0 },
            );
            p.samples = 100;
            vec![variant("base", p)]
        }
        "fig4" => rates
            .iter()
            .map(|&m| {
                variant(
                    format!("mu=nu={m}"),
                    QubitExampleParams::base(
                        sched(0.0, m, m, 0.0),
                        ControlMode::Engineered,
                        InitialState::MaximallyMixed,
                    ),
                )
            })
            .collect(),
        "fig5" => vec![
            variant("sta", QubitExampleParams::base(sched(0.0, 1.0, 1.0, 0.01), ControlMode::Sta, InitialState::Dfs)),
            variant(
                "no-sta",
                QubitExampleParams::base(sched(0.0, 1.0, 1.0, 0.01), ControlMode::Engineered, InitialState::Dfs),
            ),
        ],
        other => return Err(Error::Scenario(other.to_string())),
    };
    Ok(Scenario { name: name.to_string(), variants })
}

/// The 101 initial-state angles `φ₀ = kπ/100` of the fig3 fidelity surface.
pub fn fig3_phi_grid() -> Vec<f64> {
    (0..=100).map(|k| PI * k as f64 / 100.0).collect()
}
