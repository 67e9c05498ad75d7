use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Deserialize;

use kmdp::harness::{run_coverage, run_experiment, run_selftest, ExperimentConfig, RunOptions, SUMMARY_HEADER};
use kmdp::infogain::{mig_schedule, unit_mesh};
use kmdp::kernels::KernelSpec;
use kmdp::Error;

const EXIT_ERROR: u8 = 1;
const EXIT_PARTIAL: u8 = 2;

#[derive(Parser)]
#[command(name = "kmdp", version, about = "Model-based RL in episodic kernelized MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (env, agent, seed) cell of an experiment config and print the summary CSV.
    Run {
        config: PathBuf,
        /// Recompute cells whose CSV already exists.
        #[arg(long)]
        force: bool,
        /// Comma-separated seeds replacing the config's list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Output directory replacing the config's.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a greedy maximum-information-gain schedule as `t,gamma` CSV.
    Mig {
        /// Kernel spec as a TOML file or an inline table, e.g. '{kind="linear", dim=2}'.
        kernel: String,
        #[arg(long)]
        t: usize,
        #[arg(long)]
        lambda: f64,
        /// Number of uniform mesh points in the kernel's unit domain.
        #[arg(long)]
        mesh: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Monte-Carlo coverage of the confidence sets; exits 0 iff the violation rates pass.
    Coverage {
        config: PathBuf,
        #[arg(long)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Debug knob scaling both radii; 0 forces violations.
        #[arg(long, default_value_t = 1.0)]
        beta_scale: f64,
    },
    /// Fast invariant checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run {
            config,
            force,
            seeds,
            out,
        } => cmd_run(&config, force, seeds, out),
        Command::Mig {
            kernel,
            t,
            lambda,
            mesh,
            seed,
        } => cmd_mig(&kernel, t, lambda, mesh, seed),
        Command::Coverage {
            config,
            runs,
            seed,
            beta_scale,
        } => cmd_coverage(&config, runs, seed, beta_scale),
        Command::Selftest { seed } => cmd_selftest(seed),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn emit(text: &str) -> kmdp::Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| kmdp::Error::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        })
}

fn cmd_run(config: &Path, force: bool, seeds: Option<Vec<u64>>, out: Option<PathBuf>) -> kmdp::Result<u8> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = seeds {
        cfg.seeds = s;
    }
    if let Some(o) = out {
        let cwd = std::env::current_dir().map_err(|e| Error::Io {
            path: PathBuf::from("."),
            source: e,
        })?;
        cfg.output_dir = Some(cwd.join(o));
    }
    let summary = run_experiment(&cfg, RunOptions { force })?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for (env, row) in summary.rows() {
        w.serialize((env, row))?;
    }
    let body = w.into_inner().map_err(|e| Error::Numerical(e.to_string()))?;
    emit(&format!("env,{SUMMARY_HEADER}\n{}", String::from_utf8_lossy(&body)))?;
    for f in &summary.failures {
        let agent = f.agent.map_or("-", |a| a.name());
        let seed = f.seed.map_or("-".to_string(), |s| s.to_string());
        eprintln!("failed: env={} agent={agent} seed={seed}: {}", f.env, f.message);
    }
    Ok(if summary.is_complete() { 0 } else { EXIT_PARTIAL })
}

#[derive(Deserialize)]
struct InlineKernel {
    kernel: KernelSpec,
}

fn parse_kernel(arg: &str) -> kmdp::Result<KernelSpec> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        return KernelSpec::from_toml_str(&text);
    }
    if arg.trim_start().starts_with('{') {
        let wrapped: InlineKernel =
            toml::from_str(&format!("kernel = {arg}")).map_err(|e| Error::Config(format!("kernel spec: {e}")))?;
        wrapped.kernel.validate()?;
        return Ok(wrapped.kernel);
    }
    KernelSpec::from_toml_str(arg)
}

fn cmd_mig(kernel: &str, t: usize, lambda: f64, mesh: usize, seed: u64) -> kmdp::Result<u8> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::Config(format!("--lambda must be positive, got {lambda}")));
    }
    let kernel = parse_kernel(kernel)?;
    let points = unit_mesh(&kernel, mesh, seed);
    let schedule = mig_schedule(&kernel, &points, t, lambda)?;
    let mut text = String::from("t,gamma\n");
    for (i, g) in schedule.iter().enumerate() {
        text.push_str(&format!("{},{g}\n", i + 1));
    }
    emit(&text)?;
    Ok(0)
}

fn cmd_coverage(config: &Path, runs: usize, seed: u64, beta_scale: f64) -> kmdp::Result<u8> {
    if runs == 0 {
        return Err(Error::Config("--runs must be at least 1".into()));
    }
    let cfg = ExperimentConfig::load(config)?;
    let report = run_coverage(&cfg, runs, seed, beta_scale)?;
    emit(&report.to_lines())?;
    Ok(if report.pass { 0 } else { EXIT_PARTIAL })
}

fn cmd_selftest(seed: u64) -> kmdp::Result<u8> {
    let checks = run_selftest(seed);
    let mut text = String::new();
    for c in &checks {
        text.push_str(&format!("check={} pass={} {}\n", c.name, c.pass, c.detail));
    }
    emit(&text)?;
    Ok(if checks.iter().all(|c| c.pass) { 0 } else { EXIT_PARTIAL })
}
