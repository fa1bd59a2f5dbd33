//! Subcommand implementations. Every command writes into `--out`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use pwi::analysis::{convergence_csv, reports_summary_csv, reports_to_csv};
use pwi::io::{read_pgm_dir, read_set_csv, read_set_dir, save_matrix, write_set_dir};
use pwi::{
    apply_noise, compare_filters, convergence_study_partitions, error_bound, estimate_lipschitz,
    gen_lipschitz_set, run_piecewise, GainNorm, SignalSet,
};

use crate::config::RunConfig;
use crate::CliError;

pub const MANIFEST_SCHEMA: &str = "pwi/1";

#[derive(Serialize)]
struct Manifest {
    schema: &'static str,
    m: usize,
    q: usize,
    #[serde(rename = "N")]
    n_points: usize,
    noise: String,
    seed: u64,
    source: String,
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// A set path ending in `.csv` is an archive; anything else is a directory.
fn read_set(path: &Path) -> Result<SignalSet, CliError> {
    let set = if path.extension().is_some_and(|e| e == "csv") {
        read_set_csv(path)?
    } else {
        read_set_dir(path)?
    };
    Ok(set)
}

fn read_pair(cfg: &RunConfig) -> Result<(SignalSet, SignalSet), CliError> {
    let x = read_set(&RunConfig::require(&cfg.x, "x")?)?;
    let y = read_set(&RunConfig::require(&cfg.y, "y")?)?;
    Ok((x, y))
}

pub fn generate(cfg: &RunConfig) -> Result<(), CliError> {
    let out = cfg.out_dir()?;
    let noise = cfg.noise_model()?;
    let seed = cfg.seed.unwrap_or(0);
    let (x, source) = match &cfg.from_pgm {
        Some(dir) => (read_pgm_dir(dir)?, format!("pgm:{}", dir.display())),
        None => {
            let m = RunConfig::require(&cfg.m, "m")?;
            let q = cfg.q.unwrap_or(m);
            let n = RunConfig::require(&cfg.n_points, "N")?;
            let s = cfg.smoothness.unwrap_or(1.0);
            (
                gen_lipschitz_set(m, q, n, s, seed)?,
                format!("lipschitz:{s}"),
            )
        }
    };
    // The noise stream is decoupled from the signal stream.
    let y = apply_noise(&x, noise, seed.wrapping_add(1))?;
    create_dir(&out)?;
    write_set_dir(out.join("X"), &x)?;
    write_set_dir(out.join("Y"), &y)?;
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA,
        m: x.rows(),
        q: x.cols(),
        n_points: x.len(),
        noise: noise.to_string(),
        seed,
        source,
    };
    write_file(&out.join("manifest.json"), &to_json(&manifest))
}

#[derive(Serialize)]
struct BuildApplyReport<'a> {
    knots: Vec<usize>,
    report: &'a pwi::ErrorReport,
    bound: pwi::BoundReport,
}

pub fn build_apply(cfg: &RunConfig) -> Result<(), CliError> {
    let out = cfg.out_dir()?;
    let (x, y) = read_pair(cfg)?;
    let partition = cfg.partition(x.len())?;
    let protocol = cfg.protocol()?;
    let run = run_piecewise(&x, &y, &partition, &protocol)?;
    let lip = estimate_lipschitz(&x, &y, &partition, &protocol.initial_estimate(&x)?)?;
    let bound = error_bound(
        &lip,
        &run.filter,
        &run.covs,
        &x,
        &run.estimates,
        GainNorm::Spectral,
    )?;

    create_dir(&out)?;
    run.filter.save(out.join("filter.pwf"))?;
    write_file(
        &out.join("report.csv"),
        &reports_to_csv(std::slice::from_ref(&run.report)),
    )?;
    let json = BuildApplyReport {
        knots: partition.one_based(),
        report: &run.report,
        bound,
    };
    write_file(&out.join("report.json"), &to_json(&json))?;
    if cfg.write_estimates.unwrap_or(false) {
        let dir: PathBuf = out.join("estimates");
        create_dir(&dir)?;
        for (k, est) in run.estimates.iter().enumerate() {
            save_matrix(dir.join(pwi::io::ensemble_file_name(k + 1)), est)?;
        }
    }
    Ok(())
}

pub fn compare(cfg: &RunConfig) -> Result<(), CliError> {
    let out = cfg.out_dir()?;
    let (x, y) = read_pair(cfg)?;
    let partition = cfg.partition(x.len())?;
    let reports = compare_filters(&x, &y, &partition, &cfg.protocol()?, &cfg.baselines()?)?;
    create_dir(&out)?;
    write_file(&out.join("compare.csv"), &reports_to_csv(&reports))?;
    write_file(
        &out.join("compare_summary.csv"),
        &reports_summary_csv(&reports),
    )?;
    write_file(&out.join("compare.json"), &to_json(&reports))
}

pub fn converge(cfg: &RunConfig) -> Result<(), CliError> {
    let out = cfg.out_dir()?;
    let (x, y) = read_pair(cfg)?;
    let partitions = cfg.sweep(x.len())?;
    let rows = convergence_study_partitions(&x, &y, &partitions, &cfg.protocol()?)?;
    create_dir(&out)?;
    write_file(&out.join("convergence.csv"), &convergence_csv(&rows))
}
