//! Batch pipeline: single-well ground states, the scale `T`, Neumann levels,
//! per-selection λ-sweeps, minimax bounds and verification, with every
//! artifact written under one run directory.
//!
//! Layout of a run directory:
//!
//! ```text
//! config.txt              canonical echo of the configuration
//! manifest.txt            key = value run metadata and status
//! energies.csv            one SummaryRow per (selection, λ)
//! verdicts.txt            name,pass|fail,margin,detail
//! fields/omega_<j>.csv    single-well ground states
//! gamma_<mask>/record.txt per-λ solve metadata
//! gamma_<mask>/residuals.csv
//! gamma_<mask>/fields/lambda_<λ>.csv
//! ```

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{GammaSelection, RunConfig, TSetting};
use crate::domain::Field;
use crate::error::{Error, Result};
use crate::functional::{Landscape, LocalEnergy, Penalized};
use crate::penalty::PenalizationParams;
use crate::solver::{choose_t, minimax_b_upper, solve_neumann_well, solve_single_well, SweepPoint};
use crate::verify::{
    gamma_label, group_rows, scan_selections, summarize_sweep, verdicts, References, SummaryRow, Verdict,
};

pub const CONFIG_FILE: &str = "config.txt";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const ENERGIES_FILE: &str = "energies.csv";
pub const VERDICTS_FILE: &str = "verdicts.txt";
pub const REPORT_FILE: &str = "report.csv";

/// Outcome of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub rows: Vec<SummaryRow>,
    pub verdicts: Vec<Verdict>,
    /// Selections whose sweep failed, with the error message.
    pub failures: Vec<(Vec<usize>, String)>,
    pub t: f64,
    pub levels: Vec<f64>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.verdicts.iter().all(|v| v.pass)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_field(path: &Path, field: &Field) -> Result<()> {
    field.write_csv(create(path)?)
}

fn write_manifest(dir: &Path, entries: &[(&str, String)]) -> Result<()> {
    let mut text = String::new();
    for (k, v) in entries {
        let _ = writeln!(text, "{k} = {v}");
    }
    fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(())
}

fn lambda_tag(lambda: f64) -> String {
    format!("{lambda:e}")
}

fn write_selection(dir: &Path, label: &str, sweep: &[SweepPoint]) -> Result<()> {
    let sub = dir.join(format!("gamma_{label}"));
    fs::create_dir_all(sub.join("fields"))?;
    let mut record = String::new();
    let mut residuals = String::from("lambda,iteration,residual,energy\n");
    for p in sweep {
        let r = &p.record;
        let _ = writeln!(
            record,
            "lambda = {:?}\niterations = {}\nconverged = {}\nresidual = {:?}\nenergy = {:?}\nbump_mask = {}\n",
            p.lambda,
            r.iterations,
            r.converged,
            r.final_residual(),
            r.energy,
            r.bump_mask.iter().map(|&b| if b { '1' } else { '0' }).collect::<String>(),
        );
        for (i, (res, e)) in r.residual_history.iter().zip(&r.energy_history).enumerate() {
            let _ = writeln!(residuals, "{:?},{i},{res:?},{e:?}", p.lambda);
        }
        write_field(&sub.join("fields").join(format!("lambda_{}.csv", lambda_tag(p.lambda))), &r.field)?;
    }
    fs::write(sub.join("record.txt"), record)?;
    fs::write(sub.join("residuals.csv"), residuals)?;
    Ok(())
}

/// Single-well ground states `ω_j` and their levels `c_j`.
pub fn ground_states(
    land: &Landscape,
    params: &PenalizationParams,
    config: &RunConfig,
) -> Result<(Vec<Field>, Vec<f64>)> {
    let records: Vec<_> =
        (0..land.wells()).into_par_iter().map(|j| solve_single_well(land, j, params, &config.solver)).collect();
    let mut omegas = Vec::new();
    let mut levels = Vec::new();
    for (j, rec) in records.into_iter().enumerate() {
        let rec = rec?;
        if !rec.converged {
            return Err(Error::Divergence(format!(
                "ground state of well {} did not converge (residual {:e})",
                j + 1,
                rec.final_residual()
            )));
        }
        levels.push(LocalEnergy::dirichlet_well(land, j).energy(&rec.field));
        omegas.push(rec.field);
    }
    Ok((omegas, levels))
}

/// `c_{λ,j}` for every `λ` (outer) and well (inner), warm-started along `λ`.
pub fn neumann_levels(
    land: &Landscape,
    params: &PenalizationParams,
    omegas: &[Field],
    lambdas: &[f64],
    config: &RunConfig,
) -> Result<Vec<Vec<f64>>> {
    let per_well: Vec<Result<Vec<f64>>> = (0..land.wells())
        .into_par_iter()
        .map(|j| {
            let mut seed = omegas[j].clone();
            let mut out = Vec::with_capacity(lambdas.len());
            for &lambda in lambdas {
                let rec = solve_neumann_well(land, j, lambda, params, &seed, &config.solver)?;
                if !rec.converged {
                    return Err(Error::Divergence(format!(
                        "Neumann level of well {} at lambda {lambda:e} did not converge",
                        j + 1
                    )));
                }
                out.push(rec.energy);
                seed = rec.field;
            }
            Ok(out)
        })
        .collect();
    let per_well = per_well.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((0..lambdas.len()).map(|i| per_well.iter().map(|w| w[i]).collect()).collect())
}

/// Runs the full pipeline, writing artifacts under `dir`.
///
/// Solver failures of individual selections are recorded and the remaining
/// selections still run; failures before the sweeps abort with the artifacts
/// written so far.
pub fn run(config: &RunConfig, dir: &Path) -> Result<RunOutcome> {
    config.validate()?;
    fs::create_dir_all(dir.join("fields"))?;
    fs::write(dir.join(CONFIG_FILE), config.echo())?;
    let mut manifest: Vec<(&str, String)> = vec![
        ("scenario", config.scenario.clone()),
        ("version", env!("CARGO_PKG_VERSION").to_string()),
        ("status", "running".into()),
    ];
    write_manifest(dir, &manifest)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::invalid("workers", e.to_string()))?;
    let result = pool.install(|| run_stages(config, dir, &mut manifest));
    if let Err(e) = &result {
        manifest.retain(|(k, _)| *k != "status");
        manifest.push(("status", "failed".into()));
        manifest.push(("error", e.to_string()));
        write_manifest(dir, &manifest)?;
    }
    result
}

fn run_stages(config: &RunConfig, dir: &Path, manifest: &mut Vec<(&'static str, String)>) -> Result<RunOutcome> {
    let land = config.landscape()?;
    let params = config.params()?;
    let wells = land.wells();

    let (omegas, levels) = ground_states(&land, &params, config)?;
    for (j, w) in omegas.iter().enumerate() {
        write_field(&dir.join("fields").join(format!("omega_{}.csv", j + 1)), w)?;
    }
    manifest.push(("a0", format!("{:?}", params.a0)));
    manifest.push(("levels", levels.iter().map(|c| format!("{c:?}")).collect::<Vec<_>>().join(" ")));

    let all: Vec<usize> = (0..wells).collect();
    let t = match config.t {
        TSetting::Fixed(t) => t,
        TSetting::Auto => {
            let choice = choose_t(&land, &all, &omegas);
            manifest.push(("t_conditions", choice.satisfied.to_string()));
            if !choice.satisfied {
                return Err(Error::Divergence("no T up to 1024 satisfies the sign conditions".into()));
            }
            choice.t
        }
    };
    manifest.push(("T", format!("{t:?}")));

    let neumann = neumann_levels(&land, &params, &omegas, &config.lambdas, config)?;
    let selections = config.selections();
    let results = scan_selections(&land, params, &selections, &config.lambdas, &omegas, t, &config.solver);

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (gamma, sweep) in results {
        let label = gamma_label(&gamma, wells);
        match sweep {
            Ok(sweep) => {
                write_selection(dir, &label, &sweep)?;
                let b_upper = sweep
                    .iter()
                    .map(|p| minimax_b_upper(&Penalized::new(&land, params, p.lambda, &gamma)?, &omegas, t, config.minimax_m))
                    .collect::<Result<Vec<_>>>()?;
                let refs = References { omegas: &omegas, levels: &levels, neumann_levels: &neumann, b_upper: &b_upper };
                rows.extend(summarize_sweep(&land, params, &gamma, &sweep, &refs)?);
            }
            Err(e) => failures.push((gamma, e.to_string())),
        }
    }

    let mut csv = SummaryRow::csv_header(wells);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    fs::write(dir.join(ENERGIES_FILE), csv)?;

    let scan = config.gamma == GammaSelection::All && failures.is_empty();
    let mut verdict_list = verdicts(&rows, wells, scan, config.sandwich_allowance);
    for (gamma, msg) in &failures {
        verdict_list.push(Verdict {
            name: format!("solve_{}", gamma_label(gamma, wells)),
            pass: false,
            margin: -1.0,
            detail: msg.clone(),
        });
    }
    let mut text = String::new();
    for v in &verdict_list {
        text.push_str(&v.line());
        text.push('\n');
    }
    fs::write(dir.join(VERDICTS_FILE), text)?;

    let outcome = RunOutcome { dir: dir.to_path_buf(), rows, verdicts: verdict_list, failures, t, levels };
    manifest.retain(|(k, _)| *k != "status");
    manifest.push(("status", if outcome.failures.is_empty() { "complete" } else { "partial" }.into()));
    manifest.push(("passed", outcome.passed().to_string()));
    write_manifest(dir, manifest)?;
    Ok(outcome)
}

/// Human-readable summary and plot-ready CSV of a run directory.
#[derive(Debug, Clone)]
pub struct Report {
    pub table: String,
    pub csv: String,
    /// Expected artifacts that were not found.
    pub missing: Vec<String>,
}

/// Column order of `report.csv`.
pub const REPORT_COLUMNS: &str =
    "gamma_mask,lambda,phi_total,b_upper,c_gamma,energy_gap,lambda_v_mass,outside_norm_sq,sup_outside,h1_gap,converged";

/// Reads the summary rows of a run directory.
pub fn read_energies(dir: &Path) -> Result<Vec<SummaryRow>> {
    let path = dir.join(ENERGIES_FILE);
    if !path.exists() {
        return Err(Error::MissingArtifacts(vec![ENERGIES_FILE.into()]));
    }
    let text = fs::read_to_string(&path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Format(format!("{ENERGIES_FILE} is empty")))?;
    let wells = header.split(',').filter(|c| c.starts_with("i_lambda_")).count();
    if header != SummaryRow::csv_header(wells) {
        return Err(Error::Format(format!("{ENERGIES_FILE} has an unexpected header")));
    }
    lines.filter(|l| !l.trim().is_empty()).map(|l| SummaryRow::parse_csv(l, wells)).collect()
}

/// Summarizes a completed or partial run; only `energies.csv` is required.
pub fn report(dir: &Path) -> Result<Report> {
    let mut missing: Vec<String> = [CONFIG_FILE, MANIFEST_FILE, VERDICTS_FILE]
        .iter()
        .filter(|f| !dir.join(f).exists())
        .map(|f| f.to_string())
        .collect();
    let rows = match read_energies(dir) {
        Ok(rows) => rows,
        Err(Error::MissingArtifacts(mut m)) => {
            m.append(&mut missing);
            return Err(Error::MissingArtifacts(m));
        }
        Err(e) => return Err(e),
    };
    let wells = rows.first().map_or(0, |r| r.i_lambda.len());
    let mut table = String::new();
    let mut csv = format!("{REPORT_COLUMNS}\n");
    for (gamma, group) in group_rows(&rows) {
        let label = gamma_label(&gamma, wells);
        let _ = writeln!(table, "selection {label}");
        let _ = writeln!(
            table,
            "  {:>10} {:>12} {:>12} {:>12} {:>12} {:>12} {:>5}",
            "lambda", "phi", "b_upper", "lambda_v_m", "outside_nsq", "sup_outside", "conv"
        );
        for r in group {
            let _ = writeln!(
                table,
                "  {:>10.3e} {:>12.8} {:>12.8} {:>12.4e} {:>12.4e} {:>12.4e} {:>5}",
                r.lambda, r.phi, r.b_upper, r.lambda_v_mass, r.outside_norm_sq, r.sup_outside, r.converged
            );
            let _ = writeln!(
                csv,
                "{label},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{}",
                r.lambda,
                r.phi,
                r.b_upper,
                r.c_gamma,
                (r.phi - r.c_gamma).abs() / r.c_gamma,
                r.lambda_v_mass,
                r.outside_norm_sq,
                r.sup_outside,
                r.h1_gap,
                r.converged
            );
        }
    }
    let manifest = dir.join(MANIFEST_FILE);
    if let Ok(text) = fs::read_to_string(&manifest) {
        let failed: Vec<&str> = text.lines().filter(|l| l.starts_with("status") || l.starts_with("error")).collect();
        for l in failed {
            let _ = writeln!(table, "{l}");
        }
    }
    if let Ok(text) = fs::read_to_string(dir.join(VERDICTS_FILE)) {
        let _ = writeln!(table, "verdicts");
        for l in text.lines() {
            let mut parts = l.splitn(4, ',');
            let (name, status, margin) = (parts.next(), parts.next(), parts.next());
            if let (Some(n), Some(s), Some(m)) = (name, status, margin) {
                let _ = writeln!(table, "  {n:<18} {s:<5} margin {m}");
            }
        }
    }
    if !missing.is_empty() {
        let _ = writeln!(table, "missing: {}", missing.join(", "));
    }
    fs::write(dir.join(REPORT_FILE), &csv)?;
    Ok(Report { table, csv, missing })
}
