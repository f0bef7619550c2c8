use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use adfs_core::experiment::{sta_row_matrix, Emit, RunOutput};
use anyhow::{Context, Result};

pub const TRAJECTORY_HEADER: [&str; 9] =
    ["t", "purity", "fidelity", "bloch_x", "bloch_y", "bloch_z", "trace_err", "herm_err", "min_eig"];
pub const XI_HEADER: [&str; 10] = [
    "t",
    "r",
    "theta",
    "xi_state",
    "xi_lindblad",
    "xi_closed_form",
    "omega",
    "gamma_comp",
    "dfs_residual",
    "transport_residual",
];
pub const STA_HEADER: [&str; 11] = [
    "t",
    "h1_00_re",
    "h1_00_im",
    "h1_01_re",
    "h1_01_im",
    "h1_10_re",
    "h1_10_im",
    "h1_11_re",
    "h1_11_im",
    "omega_prime_re",
    "omega_prime_im",
];
pub const DIAGNOSTICS_HEADER: [&str; 7] =
    ["t", "purity", "dpdt", "coherent_leak", "backflow", "rho_n_norm", "rho_c_trace"];
pub const SURFACE_HEADER: [&str; 3] = ["phi0", "t", "fidelity"];

/// Seventeen significant digits, `.` decimal point.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Writes the emitted files of one run plus `summary.json` into `dir`.
pub fn write_run(dir: &Path, out: &RunOutput, emit: Emit) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    if emit.trajectory {
        let tr = &out.trajectory;
        let rows = (0..tr.len()).map(|k| {
            let f = tr.fidelity.as_ref().map_or(f64::NAN, |f| f[k]);
            let b = tr.bloch.as_ref().map_or([f64::NAN; 3], |b| b[k]);
            vec![
                num(tr.times[k]),
                num(tr.purity[k]),
                num(f),
                num(b[0]),
                num(b[1]),
                num(b[2]),
                num(tr.trace_err[k]),
                num(tr.herm_err[k]),
                num(tr.min_eig[k]),
            ]
        });
        write_csv(&dir.join("trajectory.csv"), &TRAJECTORY_HEADER, rows)?;
    }
    if emit.xi {
        let rows = out.xi.iter().map(|x| {
            [
                x.t,
                x.r,
                x.theta,
                x.xi_state,
                x.xi_lindblad,
                x.xi_closed_form,
                x.omega,
                x.gamma_comp,
                x.dfs_residual,
                x.transport_residual,
            ]
            .into_iter()
            .map(num)
            .collect()
        });
        write_csv(&dir.join("xi.csv"), &XI_HEADER, rows)?;
    }
    if emit.bound {
        if let Some(b) = &out.bound {
            write_json(&dir.join("bound.json"), b)?;
        }
    }
    if emit.sta_fields {
        let rows = out.sta.iter().map(|s| {
            let h = sta_row_matrix(s);
            let mut row = vec![num(s.t)];
            for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                row.push(num(h[(i, j)].re));
                row.push(num(h[(i, j)].im));
            }
            row.push(num(s.omega_prime[0]));
            row.push(num(s.omega_prime[1]));
            row
        });
        write_csv(&dir.join("sta_fields.csv"), &STA_HEADER, rows)?;
    }
    if emit.diagnostics {
        let rows = out.diagnostics.iter().map(|d| {
            [d.t, d.purity, d.dpdt, d.coherent_leak, d.backflow, d.rho_n_norm, d.rho_c_trace]
                .into_iter()
                .map(num)
                .collect()
        });
        write_csv(&dir.join("diagnostics.csv"), &DIAGNOSTICS_HEADER, rows)?;
    }
    write_json(&dir.join("summary.json"), &out.summary)
}
