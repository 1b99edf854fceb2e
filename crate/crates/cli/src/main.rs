//! `usfmc`: simulate modulo captures, recover spectra, run experiment suites.
//!
//! Exit codes: 0 success, 1 a recovery failed or did not converge,
//! 2 bad input or I/O error.

mod config;
mod sidecar;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use usfmc_core::acquisition::{from_csv, to_csv};
use usfmc_core::experiment::{phasor_csv, run_with_seed, score_run, simulate, waveform_csv};
use usfmc_core::{
    recover_exact, recover_robust, report_csv, ExperimentSpec, Measurements, Method, RunReport,
};

use config::{load_specs, MethodName};
use sidecar::{CaptureMeta, RecoveryMeta, Sidecar, TruthMeta};

#[derive(Parser)]
#[command(name = "usfmc", version, about = "Multi-channel modulo sampling and sub-Nyquist spectral estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SpecArgs {
    /// Experiment file, or `table1` / `table2` for the built-in tables.
    #[arg(long)]
    spec: String,
    /// Run seed; defaults to each experiment's own seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Drop noise, jitter and quantization.
    #[arg(long)]
    noiseless: bool,
    /// Only experiments with this id.
    #[arg(long)]
    id: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one capture per experiment: `<id>_s<seed>.csv` plus a TOML sidecar.
    Capture(SpecArgs),
    /// Recover a capture written by `capture`.
    Recover {
        capture: PathBuf,
        #[arg(long, value_enum)]
        method: Option<MethodName>,
        /// Output directory; defaults to the capture's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every experiment for its repetitions and write `report.csv`.
    Suite {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, value_enum)]
        method: Option<MethodName>,
        /// Override the repetition count.
        #[arg(long)]
        repetitions: Option<usize>,
    },
    /// Waveform and phasor tables for plotting, one run per experiment.
    Plotdata {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, value_enum)]
        method: Option<MethodName>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Capture(a) => capture_cmd(&a),
        Command::Recover { capture, method, out } => recover_cmd(&capture, method, out.as_deref()),
        Command::Suite { spec, method, repetitions } => suite_cmd(&spec, method, repetitions),
        Command::Plotdata { spec, method } => plotdata_cmd(&spec, method),
    }
}

fn selected_specs(a: &SpecArgs, method: Option<MethodName>) -> Result<Vec<ExperimentSpec>> {
    let mut specs = load_specs(&a.spec)?;
    if let Some(id) = &a.id {
        specs.retain(|s| &s.id == id);
        if specs.is_empty() {
            bail!("no experiment with id {id}");
        }
    }
    for s in &mut specs {
        if a.noiseless {
            *s = s.noiseless();
        }
        if let Some(m) = method {
            s.method = m.into();
        }
    }
    Ok(specs)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn capture_cmd(a: &SpecArgs) -> Result<bool> {
    create_dir(&a.out)?;
    for spec in selected_specs(a, None)? {
        let seed = a.seed.unwrap_or(spec.seed);
        let (model, cap) = simulate(&spec, seed).with_context(|| format!("experiment {}", spec.id))?;
        let m = &cap.measurements;
        let meta = Sidecar {
            spec_id: spec.id.clone(),
            seed,
            capture: CaptureMeta::from_config(&m.config, m.complex),
            recovery: RecoveryMeta::from_config(model.k(), &spec.robust_config(seed)),
            truth: TruthMeta::from_model(&model),
        };
        let stem = format!("{}_s{seed}", spec.id);
        let csv = a.out.join(format!("{stem}.csv"));
        write(&csv, &to_csv(m))?;
        write(&a.out.join(format!("{stem}.toml")), &toml::to_string(&meta)?)?;
        println!("{}", csv.display());
    }
    Ok(true)
}

fn recover_cmd(path: &Path, method: Option<MethodName>, out: Option<&Path>) -> Result<bool> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let side_path = path.with_extension("toml");
    let side_text =
        fs::read_to_string(&side_path).with_context(|| format!("reading sidecar {}", side_path.display()))?;
    let meta: Sidecar = toml::from_str(&side_text).with_context(|| format!("parsing {}", side_path.display()))?;
    let (y, complex) = from_csv(&text).with_context(|| format!("parsing {}", path.display()))?;
    if complex != meta.capture.complex {
        bail!("capture and sidecar disagree on complex data");
    }
    let config = meta.capture.to_config(meta.seed)?;
    let lens: Vec<usize> = y.iter().map(Vec::len).collect();
    if lens != config.n {
        bail!("capture has {lens:?} samples per channel, sidecar declares {:?}", config.n);
    }
    let m = Measurements { y, config, complex };
    let k = meta.recovery.k;
    let outcome = match method.map_or(Method::Robust, Method::from) {
        Method::Exact => recover_exact(&m, k).map(|e| (e, true, 1)),
        Method::Robust => {
            let cfg = meta.recovery.to_config(&m.config, meta.seed);
            recover_robust(&m, k, &cfg).map(|o| (o.estimate, o.converged, o.iterations))
        }
    };
    let mut report = score_run(&meta.spec_id, &m.config, &meta.truth.to_model()?, outcome);
    report.seed = meta.seed;

    let dir = out.map_or_else(|| path.parent().unwrap_or(Path::new(".")).to_path_buf(), Path::to_path_buf);
    create_dir(&dir)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("capture");
    write(&dir.join(format!("{stem}_report.csv")), &report_csv(std::slice::from_ref(&report)))?;
    if let Some(est) = &report.estimate {
        write(&dir.join(format!("{stem}_phasors.csv")), &phasor_csv(est))?;
    }
    print!("{}", report_csv(std::slice::from_ref(&report)));
    Ok(run_ok(&report))
}

fn run_ok(r: &RunReport) -> bool {
    if let Some(e) = &r.error {
        eprintln!("{} seed {}: {e}", r.spec_id, r.seed);
        return false;
    }
    if !r.converged {
        eprintln!("{} seed {}: not converged after {} iterations", r.spec_id, r.seed, r.iterations);
    }
    r.converged
}

fn suite_cmd(a: &SpecArgs, method: Option<MethodName>, repetitions: Option<usize>) -> Result<bool> {
    create_dir(&a.out)?;
    let mut reports = Vec::new();
    for spec in selected_specs(a, method)? {
        let base = a.seed.unwrap_or(spec.seed);
        let reps = repetitions.unwrap_or(spec.repetitions).max(1) as u64;
        for r in 0..reps {
            reports.push(run_with_seed(&spec, base.wrapping_add(r)));
        }
    }
    let path = a.out.join("report.csv");
    write(&path, &report_csv(&reports))?;
    let mut ok = true;
    for r in &reports {
        ok &= run_ok(r);
    }
    let converged = reports.iter().filter(|r| r.converged && r.error.is_none()).count();
    println!("{}: {converged}/{} runs converged", path.display(), reports.len());
    Ok(ok)
}

fn plotdata_cmd(a: &SpecArgs, method: Option<MethodName>) -> Result<bool> {
    create_dir(&a.out)?;
    let mut ok = true;
    for spec in selected_specs(a, method)? {
        let seed = a.seed.unwrap_or(spec.seed);
        let (_, cap) = simulate(&spec, seed).with_context(|| format!("experiment {}", spec.id))?;
        let report = run_with_seed(&spec, seed);
        ok &= run_ok(&report);
        let stem = format!("{}_s{seed}", spec.id);
        write(&a.out.join(format!("{stem}_waveform.csv")), &waveform_csv(&cap, report.estimate.as_ref()))?;
        if let Some(est) = &report.estimate {
            write(&a.out.join(format!("{stem}_phasors.csv")), &phasor_csv(est))?;
        }
        println!("{stem}");
    }
    Ok(ok)
}
