mod output;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adfs_core::experiment::{run_params, Emit, RunOutput, Summary};
use adfs_core::squeezed_qubit::{fig3_phi_grid, scenario, QubitExampleParams, Scenario, Variant};
use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;

use output::{num, write_csv, write_run, SURFACE_HEADER};

#[derive(Parser)]
#[command(
    name = "adfs",
    version,
    about = "Simulate time-dependent decoherence-free subspaces of the squeezed-vacuum qubit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write CSV/JSON outputs.
    Run {
        /// Scenario name (fig1a, fig1b, fig2, fig3, fig4, fig5) or a JSON config file.
        #[arg(long)]
        scenario: String,
        /// Variant label; defaults to the scenario's first variant.
        #[arg(long, conflicts_with = "all_variants")]
        variant: Option<String>,
        /// Run every variant, one subdirectory each.
        #[arg(long)]
        all_variants: bool,
        /// Parameter override `key=value`; repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated outputs: trajectory, xi, bound, sta_fields, diagnostics, or all.
        #[arg(long, default_value = "trajectory,xi,bound")]
        emit: String,
    },
    /// Run the cartesian product of a parameter grid and write one summary row per point.
    Sweep {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        variant: Option<String>,
        /// JSON object mapping override keys to lists of values.
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match err.downcast_ref::<adfs_core::Error>() {
        Some(adfs_core::Error::Scenario(_) | adfs_core::Error::Argument(_)) => 2,
        Some(adfs_core::Error::Positivity { .. }) => 3,
        _ => 1,
    }
}

fn parse_overrides(items: &[String]) -> Result<Vec<(String, String)>> {
    items
        .iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| usage(format!("override '{s}' is not of the form key=value")))
        })
        .collect()
}

fn load_scenario(source: &str) -> Result<Scenario> {
    if !source.ends_with(".json") {
        return Ok(scenario(source)?);
    }
    let text = std::fs::read_to_string(source).map_err(|e| usage(format!("reading {source}: {e}")))?;
    if let Ok(sc) = serde_json::from_str::<Scenario>(&text) {
        if sc.variants.is_empty() {
            return Err(usage(format!("{source}: scenario has no variants")));
        }
        return Ok(sc);
    }
    let params: QubitExampleParams =
        serde_json::from_str(&text).map_err(|e| usage(format!("{source}: not a scenario or parameter set: {e}")))?;
    params.validate()?;
    let name = Path::new(source).file_stem().and_then(|s| s.to_str()).unwrap_or("custom").to_string();
    Ok(Scenario { name, variants: vec![Variant { label: "base".into(), params }] })
}

fn slug(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}

fn pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("ADFS_THREADS") {
        let n: usize = v.parse().map_err(|_| usage(format!("ADFS_THREADS={v} is not a thread count")))?;
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?)
}

fn run_one(
    sc: &Scenario,
    variant: &Variant,
    overrides: &[(String, String)],
    emit: Emit,
    dir: &Path,
) -> Result<RunOutput> {
    let params = variant.params.with_overrides(overrides)?;
    let out = run_params(&sc.name, &variant.label, &params, emit)?;
    write_run(dir, &out, emit)?;
    if sc.name == "fig3" {
        fidelity_surface(&params, &dir.join("fidelity_surface.csv"))?;
    }
    Ok(out)
}

/// Fidelity over the `(φ₀, t)` grid, long format.
fn fidelity_surface(params: &QubitExampleParams, path: &Path) -> Result<()> {
    let runs: Vec<Result<(f64, RunOutput)>> = pool()?.install(|| {
        fig3_phi_grid()
            .into_par_iter()
            .map(|phi| {
                let p = params.with_overrides(&[("phi0".into(), phi.to_string())])?;
                Ok((phi, run_params("fig3", "surface", &p, Emit::default())?))
            })
            .collect()
    });
    let mut rows = Vec::new();
    for run in runs {
        let (phi, out) = run?;
        let fid = out.trajectory.fidelity.as_ref().ok_or_else(|| anyhow!("fidelity not recorded"))?;
        for (t, f) in out.trajectory.times.iter().zip(fid) {
            rows.push(vec![num(phi), num(*t), num(*f)]);
        }
    }
    write_csv(path, &SURFACE_HEADER, rows)
}

fn cmd_run(
    source: &str,
    variant: Option<&str>,
    all_variants: bool,
    overrides: &[String],
    out: &Path,
    emit: &str,
) -> Result<()> {
    let sc = load_scenario(source)?;
    let emit: Emit = emit.parse()?;
    let overrides = parse_overrides(overrides)?;
    if all_variants {
        for v in &sc.variants {
            let s = run_one(&sc, v, &overrides, emit, &out.join(slug(&v.label)))?;
            print_summary(&s.summary);
        }
    } else {
        let v = sc.variant(variant)?;
        print_summary(&run_one(&sc, v, &overrides, emit, out)?.summary);
    }
    Ok(())
}

fn print_summary(s: &Summary) {
    println!(
        "{} [{}]: final purity {:.6}, min purity {:.6} at t = {:.4}, final fidelity {:.6}, max xi {:.4e}",
        s.scenario, s.variant, s.final_purity, s.min_purity, s.t_at_purity_min, s.final_fidelity, s.max_xi_state
    );
}

/// Grid file values: numbers or strings, rendered as override text.
fn value_text(v: &serde_json::Value) -> Result<String> {
    match v {
        serde_json::Value::Number(n) => Ok(n.to_string()),
        serde_json::Value::String(s) => Ok(s.clone()),
        other => Err(usage(format!("grid value {other} must be a number or string"))),
    }
}

/// Cartesian product of the grid in key order, last key varying fastest.
fn expand_grid(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("reading {}: {e}", path.display())))?;
    let grid: BTreeMap<String, Vec<serde_json::Value>> =
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    if grid.is_empty() || grid.values().any(Vec::is_empty) {
        return Err(usage(format!("{}: grid is empty", path.display())));
    }
    let keys: Vec<String> = grid.keys().cloned().collect();
    let mut points: Vec<Vec<String>> = vec![Vec::new()];
    for values in grid.values() {
        let texts = values.iter().map(value_text).collect::<Result<Vec<_>>>()?;
        points =
            points.into_iter().flat_map(|p| texts.iter().map(move |v| [p.clone(), vec![v.clone()]].concat())).collect();
    }
    Ok((keys, points))
}

const SWEEP_OBSERVABLES: [&str; 10] = [
    "final_purity",
    "min_purity",
    "t_at_purity_min",
    "final_fidelity",
    "xi_at_purity_min",
    "max_xi_state",
    "max_xi_lindblad",
    "max_trace_err",
    "min_eig",
    "t_final",
];

fn cmd_sweep(source: &str, variant: Option<&str>, grid: &Path, out: &Path) -> Result<()> {
    let sc = load_scenario(source)?;
    let v = sc.variant(variant)?;
    let (keys, points) = expand_grid(grid)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let results: Vec<Result<(Summary, f64)>> = pool()?.install(|| {
        points
            .par_iter()
            .map(|values| {
                let overrides: Vec<(String, String)> = keys.iter().cloned().zip(values.iter().cloned()).collect();
                let params = v.params.with_overrides(&overrides)?;
                Ok((run_params(&sc.name, &v.label, &params, Emit::default())?.summary, params.t_final))
            })
            .collect()
    });
    let mut header: Vec<&str> = vec!["row"];
    header.extend(keys.iter().map(String::as_str));
    header.extend(["status", "error"]);
    header.extend(SWEEP_OBSERVABLES);
    let mut failures = 0;
    let rows: Vec<Vec<String>> = points
        .iter()
        .zip(&results)
        .enumerate()
        .map(|(k, (values, res))| {
            let mut row = vec![k.to_string()];
            row.extend(values.iter().cloned());
            match res {
                Ok((s, t_final)) => {
                    row.extend(["ok".to_string(), String::new()]);
                    row.extend(
                        [
                            s.final_purity,
                            s.min_purity,
                            s.t_at_purity_min,
                            s.final_fidelity,
                            s.xi_at_purity_min,
                            s.max_xi_state,
                            s.max_xi_lindblad,
                            s.max_trace_err,
                            s.min_eig,
                            *t_final,
                        ]
                        .map(num),
                    );
                }
                Err(e) => {
                    failures += 1;
                    row.extend(["error".to_string(), format!("{e:#}")]);
                    row.extend(std::iter::repeat_n(String::new(), SWEEP_OBSERVABLES.len()));
                }
            }
            row
        })
        .collect();
    write_csv(&out.join("sweep.csv"), &header, rows)?;
    println!("{}: {} grid points, {failures} failed", sc.name, points.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { scenario, variant, all_variants, overrides, out, emit } => {
            cmd_run(scenario, variant.as_deref(), *all_variants, overrides, out, emit)
        }
        Command::Sweep { scenario, variant, grid, out } => cmd_sweep(scenario, variant.as_deref(), grid, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("adfs: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        let positivity: anyhow::Error = adfs_core::Error::Positivity { t: 1.0, min_eig: -1e-3 }.into();
        assert_eq!(exit_code(&positivity), 3);
        assert_eq!(exit_code(&positivity.context("writing run")), 3);
        assert_eq!(exit_code(&adfs_core::Error::Scenario("x".into()).into()), 2);
        assert_eq!(exit_code(&usage("bad")), 2);
        assert_eq!(exit_code(&anyhow!("io")), 1);
    }

    #[test]
    fn grid_expands_cartesian_product() {
        let dir = std::env::temp_dir().join(format!("adfs-grid-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("g.json");
        std::fs::write(&path, r#"{"nu": [1, 2], "mu": ["0.5", 3]}"#).unwrap();
        let (keys, points) = expand_grid(&path).unwrap();
        assert_eq!(keys, ["mu", "nu"]);
        assert_eq!(points, [["0.5", "1"], ["0.5", "2"], ["3", "1"], ["3", "2"]]);
        std::fs::remove_dir_all(dir).unwrap();
    }
}
