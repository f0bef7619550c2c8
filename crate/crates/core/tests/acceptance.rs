use std::f64::consts::PI;
use std::io::Write;
use std::time::{Duration, Instant};

use adfs_core::adiabatic_monitor::{purity_lower_bound, xi_state, BoundOptions};
use adfs_core::dfs_analysis::{check_conditions, effective_hamiltonian, DerivativeRoute, DfsTracker, Pick, Selector};
use adfs_core::experiment::{run_variant, Emit, RunOutput};
use adfs_core::linalg::{max_abs, CMatrix};
use adfs_core::lindblad_integrator::{liouvillian_apply, propagate, DensityMatrix, PropagateOptions};
use adfs_core::operator_model::{ConstantSchedule, OperatorSet, SqueezeSchedule, SystemModel};
use adfs_core::squeezed_qubit::{
    control_hamiltonian, control_omega, four_term_dissipator, lindblad_l, scenario, sigma_minus, xi_closed_form,
    ControlMode, SqueezedQubit,
};
use adfs_core::C64;
use rand::{Rng, SeedableRng};

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(name: &str, budget: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    let in_time = budget.is_none_or(|b| elapsed <= b);
    let pass = out.pass && in_time;
    let budget_txt = budget.map(|b| format!(" (budget {:.0} s)", b.as_secs_f64())).unwrap_or_default();
    let mut stdout = std::io::stdout().lock();
    writeln!(
        stdout,
        "{} {name}: {}; {:.2} s{budget_txt}",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64()
    )
    .unwrap();
    pass
}

fn random_density(rng: &mut impl Rng) -> CMatrix {
    let a = CMatrix::from_fn(2, 2, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let rho = &a * a.adjoint();
    let tr = rho.trace();
    rho / tr
}

fn run_all(name: &str, emit: Emit) -> Vec<RunOutput> {
    let sc = scenario(name).unwrap();
    sc.variants.iter().map(|v| run_variant(name, v, emit).unwrap()).collect()
}

fn qubit_at(r: f64, mu: f64, nu: f64) -> (SystemModel, f64) {
    let t = if mu > 0.0 { (0.5f64).min(0.5 * r / mu) } else { 0.5 };
    let s = SqueezeSchedule { r0: r - mu * t, theta0: 0.4, mu, nu, gamma: 1.0, offset_o: 0.0 };
    (SqueezedQubit::new(s, ControlMode::Engineered).model(1.0).unwrap(), t)
}

fn decay_error(dt: f64) -> f64 {
    let sched = ConstantSchedule { hamiltonian: CMatrix::zeros(2, 2), lindblads: vec![sigma_minus()] };
    let model = SystemModel::new(sched, 0.0, 1.0).unwrap();
    let up = CMatrix::from_row_slice(
        2,
        2,
        &[C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
    );
    let rho0 = DensityMatrix::new(up).unwrap();
    let opts = PropagateOptions { dt_max: dt, ..PropagateOptions::default() };
    let rec = propagate(&model, &rho0, &[0.0, 1.0], &opts, None).unwrap();
    (rec.final_state()[(1, 1)].re - (-1.0f64).exp()).abs()
}

fn main() {
    let secs = |s: u64| Some(Duration::from_secs(s));
    let mut results = Vec::new();

    results.push(report("dissipator equivalence", secs(1), || {
        let mut rng = rand::rngs::StdRng::seed_from_u64(2024);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let rho = random_density(&mut rng);
            let (r, th) = (rng.gen_range(0.0..3.0), rng.gen_range(0.0..2.0 * PI));
            let gamma = 1.0;
            let ops = OperatorSet::new(CMatrix::zeros(2, 2), vec![lindblad_l(r, th).scale(f64::sqrt(gamma))]).unwrap();
            let lindblad = liouvillian_apply(&ops, &rho).unwrap();
            worst = worst.max(max_abs(&(lindblad - four_term_dissipator(r, th, gamma, &rho))));
        }
        Outcome { pass: worst < 1e-12, detail: format!("max deviation {worst:.2e} over 100 states (tol 1e-12)") }
    }));

    results.push(report("engineered-control verification", secs(1), || {
        let mut heff_max: f64 = 0.0;
        let mut res_max: f64 = 0.0;
        for &r in &[0.3, 1.0, 2.5] {
            for &th in &[0.0, 1.1] {
                let s = SqueezeSchedule { r0: r, theta0: th, mu: 0.0, nu: 0.0, gamma: 1.0, offset_o: 0.0 };
                let model = SqueezedQubit::new(s, ControlMode::Engineered).model(1.0).unwrap();
                let dec = DfsTracker::new(&model).decompose(0.0, Pick::Select(&Selector::Index(0))).unwrap();
                let ops = model.evaluate(0.0).unwrap();
                assert_eq!(ops.hamiltonian, control_hamiltonian(control_omega(r, th, 1.0)));
                heff_max = heff_max.max(max_abs(&effective_hamiltonian(&ops, &dec.eigenvalues).unwrap()));
                res_max = res_max.max(check_conditions(&ops, &dec).unwrap().max_residual());
            }
        }
        Outcome {
            pass: heff_max < 1e-10 && res_max < 1e-10,
            detail: format!("max |H_eff| {heff_max:.2e}, max residual {res_max:.2e} (tol 1e-10)"),
        }
    }));

    results.push(report("xi cross-validation", secs(5), || {
        let (mut fd_worst, mut an_worst): (f64, f64) = (0.0, 0.0);
        for k in 0..=59 {
            let r = 0.05 + (3.0 - 0.05) * k as f64 / 59.0;
            for &(mu, nu) in &[(0.1, 0.0), (0.0, 0.1), (1.0, 1.0), (0.01, 0.3)] {
                let (model, t) = qubit_at(r, mu, nu);
                let want = xi_closed_form(r, mu, nu, 1.0).unwrap();
                for (route, worst) in
                    [(DerivativeRoute::FiniteDifference, &mut fd_worst), (DerivativeRoute::Analytic, &mut an_worst)]
                {
                    let s =
                        DfsTracker::new(&model).with_route(route).sample(t, Pick::Select(&Selector::Index(0))).unwrap();
                    let got = xi_state(&s).unwrap().value;
                    *worst = worst.max(((got - want) / want).abs());
                }
            }
        }
        Outcome {
            pass: fd_worst < 1e-4 && an_worst < 1e-8,
            detail: format!(
                "max relative error {fd_worst:.2e} finite differences (tol 1e-4), {an_worst:.2e} analytic (tol 1e-8)"
            ),
        }
    }));

    let mut fig2 = Vec::new();
    results.push(report("fig2 reproduction", secs(10), || {
        fig2 = run_all("fig2", Emit::standard());
        let s = &fig2[0].summary;
        let pass = s.single_interior_minimum && (s.xi_at_purity_min - 0.129).abs() <= 0.02;
        Outcome {
            pass,
            detail: format!(
                "single interior minimum {} at t = {:.3} (purity {:.4}), xi there {:.4} (target 0.129 ± 0.02)",
                s.single_interior_minimum, s.t_at_purity_min, s.min_purity, s.xi_at_purity_min
            ),
        }
    }));

    let mut fig1a = Vec::new();
    results.push(report("fig1a ordering", secs(30), || {
        fig1a = run_all("fig1a", Emit::standard());
        let p: Vec<f64> = fig1a.iter().map(|o| o.summary.final_purity).collect();
        let pass = p[0] > p[1] && p[1] > p[2] && (p[3] - 0.5).abs() < 1e-3;
        Outcome {
            pass,
            detail: format!(
                "final purity mu=0.01: {:.6}, mu=0.1: {:.6}, mu=1: {:.6}; no control {:.6} (|p − 0.5| < 1e-3)",
                p[0], p[1], p[2], p[3]
            ),
        }
    }));

    let mut fig4 = Vec::new();
    results.push(report("fig4 attraction", secs(30), || {
        fig4 = run_all("fig4", Emit::standard());
        let f: Vec<f64> = fig4.iter().map(|o| o.summary.final_fidelity).collect();
        Outcome {
            pass: f[0] > 0.99 && f[2] < 0.9,
            detail: format!("final fidelity mu=nu=0.01: {:.5} (> 0.99), mu=nu=1: {:.5} (< 0.9)", f[0], f[2]),
        }
    }));

    let mut fig5 = Vec::new();
    results.push(report("fig5 shortcut", secs(10), || {
        fig5 = run_all("fig5", Emit::standard());
        let (sta, bare) = (&fig5[0].summary, &fig5[1].summary);
        Outcome {
            pass: bare.min_purity < 0.9 && sta.min_purity >= 1.0 - 1e-5,
            detail: format!(
                "min purity H0 only {:.5} (< 0.9), H0 + H1 {:.9} (≥ 1 − 1e-5)",
                bare.min_purity, sta.min_purity
            ),
        }
    }));

    results.push(report("purity lower bound validity", secs(30), || {
        let runs = fig2.iter().chain(&fig1a).chain(&fig4).chain(&fig5);
        let mut checked = 0;
        let mut worst_margin = f64::INFINITY;
        for o in runs {
            let b = o.bound.as_ref().expect("bound emitted");
            for (p, lb) in o.trajectory.purity.iter().zip(&b.bound) {
                worst_margin = worst_margin.min(p - lb);
                checked += 1;
            }
        }
        let deficit = |t_final: f64| {
            let s = SqueezeSchedule { r0: 0.5, theta0: 0.0, mu: 0.8 / t_final, nu: 0.4 / t_final, gamma: 1.0, offset_o: 0.0 };
            let model = SqueezedQubit::new(s, ControlMode::Engineered).model(t_final).unwrap();
            let times: Vec<f64> = (0..=100).map(|k| t_final * k as f64 / 100.0).collect();
            let opts = BoundOptions { max_refinements: 2, ..BoundOptions::default() };
            purity_lower_bound(&model, &times, &opts).unwrap().scaled.inverse_t_term()
        };
        let ratio = deficit(10.0) / deficit(20.0);
        let halving = ((ratio - 2.0) / 2.0).abs();
        Outcome {
            pass: worst_margin >= 0.0 && halving < 1e-6,
            detail: format!(
                "min(purity − bound) {worst_margin:.3e} over {checked} samples (≥ 0); 1/T term ratio {ratio:.9} (2 within 1e-6 relative)"
            ),
        }
    }));

    results.push(report("integrator properties", None, || {
        let e1 = decay_error(1e-3);
        let (coarse, fine) = (decay_error(0.1), decay_error(0.05));
        let order = (coarse / fine).log2();
        let runs = fig2.iter().chain(&fig1a).chain(&fig4).chain(&fig5);
        let (mut tr, mut he): (f64, f64) = (0.0, 0.0);
        for o in runs {
            tr = tr.max(o.summary.max_trace_err);
            he = he.max(o.summary.max_herm_err);
        }
        Outcome {
            pass: e1 < 1e-8 && (order - 4.0).abs() < 0.2 && tr < 1e-10 && he < 1e-10,
            detail: format!(
                "decay error {e1:.2e} at default dt (tol 1e-8); observed order {order:.3} (error ratio {:.2}); max trace drift {tr:.2e}, max Hermiticity drift {he:.2e} (tol 1e-10)",
                coarse / fine
            ),
        }
    }));

    results.push(report("bound-form ordering", None, || {
        let s = &fig2[0].summary;
        let finite = fig2[0].xi.iter().filter(|x| x.xi_state.is_finite() && x.xi_lindblad.is_finite()).count();
        let worst = fig2[0]
            .xi
            .iter()
            .filter(|x| x.xi_state.is_finite() && x.xi_lindblad.is_finite())
            .map(|x| x.xi_state / x.xi_lindblad - 1.0)
            .fold(f64::NEG_INFINITY, f64::max);
        Outcome {
            pass: s.xi_ordering_violations == 0 && finite == fig2[0].xi.len(),
            detail: format!(
                "{} violations over {finite} samples; max xi_state/xi_lindblad − 1 = {worst:.2e} (finite-difference slack 1e-6)",
                s.xi_ordering_violations
            ),
        }
    }));

    let failed = results.iter().filter(|&&p| !p).count();
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "acceptance: {} passed, {failed} failed", results.len() - failed).unwrap();
    if failed > 0 {
        std::process::exit(1);
    }
}
