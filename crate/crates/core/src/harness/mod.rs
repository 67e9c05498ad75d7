//! Experiment orchestration: runs every (env, agent, seed) cell of a config,
//! persists one CSV per cell and derives the summary from those files.

pub mod config;
pub mod coverage;
pub mod growth;
pub mod selftest;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{run_agent, AgentKind, AgentRun, AgentSetup, EpisodeRecord};
use crate::error::{Error, Result};
use crate::infogain::MigCache;
use crate::rng::{stream, Stream};

pub use config::{EnvConfig, EnvSpec, ExperimentConfig, CONFIG_EXTENSION, SCHEMA_VERSION};
pub use coverage::{run_coverage, CoverageConfig, CoverageReport};
pub use growth::{fit_growth_exponent, fit_power_law, GrowthFit, BOOTSTRAP_RESAMPLES};
pub use selftest::{run_selftest, Check};

pub const EPISODE_HEADER: &str = "episode,realized_return,optimal_value,policy_value,inst_regret,cum_regret,beta_r,beta_p,reward_dev_sum,trans_dev_sum,wall_ms";
pub const SUMMARY_HEADER: &str = "agent,seed,final_regret,growth_p,growth_ci_lo,growth_ci_hi,coverage_viol,secs";
pub const COVERAGE_HEADER: &str = "episode,reward_violations,transition_violations,grid_pairs";

/// Per-episode confidence-set violations of a learning agent, stored next to
/// its episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub episode: usize,
    pub reward_violations: usize,
    pub transition_violations: usize,
    pub grid_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub agent: String,
    pub seed: u64,
    pub final_regret: f64,
    pub growth_p: f64,
    pub growth_ci_lo: f64,
    pub growth_ci_hi: f64,
    /// Fraction of episodes with any violation; NaN for baselines.
    pub coverage_viol: f64,
    pub secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSummary {
    pub env: String,
    pub rows: Vec<SummaryRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub env: String,
    /// `None` when the whole environment failed before any cell ran.
    pub agent: Option<AgentKind>,
    pub seed: Option<u64>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunSummary {
    pub envs: Vec<EnvSummary>,
    pub failures: Vec<CellFailure>,
}

impl RunSummary {
    pub fn rows(&self) -> impl Iterator<Item = (&str, &SummaryRow)> {
        self.envs.iter().flat_map(|e| e.rows.iter().map(move |r| (e.env.as_str(), r)))
    }

    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Recompute cells whose CSV already exists.
    pub force: bool,
}

pub fn cell_path(out: &Path, env: &str, agent: AgentKind, seed: u64) -> PathBuf {
    out.join(env).join(format!("{}-seed{seed}.csv", agent.name()))
}

pub fn coverage_path(out: &Path, env: &str, agent: AgentKind, seed: u64) -> PathBuf {
    out.join(env).join(format!("{}-seed{seed}.coverage.csv", agent.name()))
}

pub fn summary_path(out: &Path, env: &str) -> PathBuf {
    out.join(env).join("summary.csv")
}

fn to_csv<T: Serialize>(header: &str, rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let body = w.into_inner().map_err(|e| Error::numerical(format!("csv buffer: {e}")))?;
    let mut out = Vec::with_capacity(header.len() + 1 + body.len());
    out.extend_from_slice(header.as_bytes());
    out.push(b'\n');
    out.extend(body);
    Ok(out)
}

fn from_csv<T: for<'de> Deserialize<'de>>(path: &Path, header: &str) -> Result<Vec<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let first = bytes.split(|&b| b == b'\n').next().unwrap_or_default();
    if first != header.as_bytes() {
        return Err(Error::input(format!("{}: unexpected header", path.display())));
    }
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Writes through a temporary file in the same directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn episodes_to_csv(records: &[EpisodeRecord]) -> Result<Vec<u8>> {
    to_csv(EPISODE_HEADER, records)
}

pub fn write_episodes(path: &Path, records: &[EpisodeRecord]) -> Result<()> {
    write_atomic(path, &episodes_to_csv(records)?)
}

pub fn read_episodes(path: &Path) -> Result<Vec<EpisodeRecord>> {
    from_csv(path, EPISODE_HEADER)
}

pub fn write_coverage(path: &Path, rows: &[CoverageRow]) -> Result<()> {
    write_atomic(path, &to_csv(COVERAGE_HEADER, rows)?)
}

pub fn read_coverage(path: &Path) -> Result<Vec<CoverageRow>> {
    from_csv(path, COVERAGE_HEADER)
}

pub fn summary_to_csv(rows: &[SummaryRow]) -> Result<Vec<u8>> {
    to_csv(SUMMARY_HEADER, rows)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    from_csv(path, SUMMARY_HEADER)
}

fn coverage_rows(run: &AgentRun, grid_pairs: usize) -> Vec<CoverageRow> {
    run.records
        .iter()
        .zip(&run.diagnostics)
        .map(|(r, d)| CoverageRow {
            episode: r.episode,
            reward_violations: d.reward_violations,
            transition_violations: d.transition_violations,
            grid_pairs,
        })
        .collect()
}

/// Summary row recomputed from a cell's persisted files.
pub fn summarize_cell(out: &Path, env: &str, agent: AgentKind, seed: u64, horizon: usize) -> Result<SummaryRow> {
    let records = read_episodes(&cell_path(out, env, agent, seed))?;
    let cum: Vec<f64> = records.iter().map(|r| r.cum_regret).collect();
    let fit = fit_growth_exponent(&cum, horizon, &mut stream(seed, Stream::Bootstrap));
    let cov_path = coverage_path(out, env, agent, seed);
    let coverage_viol = if cov_path.exists() {
        let rows = read_coverage(&cov_path)?;
        if rows.is_empty() {
            f64::NAN
        } else {
            let bad = rows.iter().filter(|r| r.reward_violations + r.transition_violations > 0).count();
            bad as f64 / rows.len() as f64
        }
    } else {
        f64::NAN
    };
    Ok(SummaryRow {
        agent: agent.name().to_string(),
        seed,
        final_regret: cum.last().copied().unwrap_or(0.0),
        growth_p: fit.p,
        growth_ci_lo: fit.ci_lo,
        growth_ci_hi: fit.ci_hi,
        coverage_viol,
        secs: records.iter().map(|r| r.wall_ms).sum::<f64>() / 1e3,
    })
}

/// Thread pool honoring `KMDP_THREADS`.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("KMDP_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("KMDP_THREADS must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(Error::config("KMDP_THREADS must be a positive integer"));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::config(format!("thread pool: {e}")))
}

/// Runs every missing cell, then rewrites each environment's summary from
/// the CSVs on disk. Per-cell and per-environment failures are collected
/// and the remaining cells still run.
pub fn run_experiment(cfg: &ExperimentConfig, opts: RunOptions) -> Result<RunSummary> {
    cfg.validate()?;
    cfg.validate_for_run()?;
    let out = cfg.output_dir();
    let pool = thread_pool()?;
    let cache = cfg.mig_cache_dir.as_ref().map(|d| MigCache::new(cfg.resolve(d)));
    let mut summary = RunSummary::default();
    for env_cfg in &cfg.envs {
        let name = env_cfg.name.as_str();
        let cells: Vec<(AgentKind, u64)> = cfg
            .agents
            .iter()
            .flat_map(|&a| cfg.seeds.iter().map(move |&s| (a, s)))
            .collect();
        let env_failure = |e: Error| CellFailure {
            env: name.to_string(),
            agent: None,
            seed: None,
            message: e.to_string(),
        };
        let env = match env_cfg.build(cfg) {
            Ok(e) => e,
            Err(e) => {
                summary.failures.push(env_failure(e));
                continue;
            }
        };
        let pending: Vec<(AgentKind, u64)> = cells
            .iter()
            .copied()
            .filter(|&(a, s)| opts.force || !cell_path(&out, name, a, s).exists())
            .collect();
        if !pending.is_empty() {
            let setup = env_cfg
                .settings(cfg, env.as_ref())
                .and_then(|s| Ok((s, env_cfg.grid(env.as_ref())?)))
                .and_then(|(s, g)| AgentSetup::new(env.as_ref(), s, g, cfg.episodes, cache.as_ref()));
            let setup = match setup {
                Ok(s) => s,
                Err(e) => {
                    summary.failures.push(env_failure(e));
                    continue;
                }
            };
            let env = env.as_ref();
            let results: Vec<(AgentKind, u64, Result<()>)> = pool.install(|| {
                pending
                    .par_iter()
                    .map(|&(agent, seed)| {
                        let r = (|| {
                            let started = Instant::now();
                            let run = run_agent(env, &setup, agent, cfg.episodes, seed)?;
                            if agent == AgentKind::GpUcrl || agent == AgentKind::Psrl {
                                write_coverage(
                                    &coverage_path(&out, name, agent, seed),
                                    &coverage_rows(&run, setup.grid.n_pairs()),
                                )?;
                            }
                            write_episodes(&cell_path(&out, name, agent, seed), &run.records)?;
                            eprintln!(
                                "[{name}] {} seed {seed}: {} episodes in {:.1}s",
                                agent.name(),
                                cfg.episodes,
                                started.elapsed().as_secs_f64()
                            );
                            Ok(())
                        })();
                        (agent, seed, r)
                    })
                    .collect()
            });
            for (agent, seed, r) in results {
                if let Err(e) = r {
                    summary.failures.push(CellFailure {
                        env: name.to_string(),
                        agent: Some(agent),
                        seed: Some(seed),
                        message: e.to_string(),
                    });
                }
            }
        }
        let mut rows = Vec::new();
        for &(agent, seed) in &cells {
            if !cell_path(&out, name, agent, seed).exists() {
                continue;
            }
            match summarize_cell(&out, name, agent, seed, env.horizon()) {
                Ok(r) => rows.push(r),
                Err(e) => summary.failures.push(CellFailure {
                    env: name.to_string(),
                    agent: Some(agent),
                    seed: Some(seed),
                    message: e.to_string(),
                }),
            }
        }
        let bytes = summary_to_csv(&rows)?;
        let path = summary_path(&out, name);
        if fs::read(&path).ok().as_deref() != Some(bytes.as_slice()) {
            write_atomic(&path, &bytes)?;
        }
        summary.envs.push(EnvSummary {
            env: name.to_string(),
            rows,
        });
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(l: usize) -> EpisodeRecord {
        EpisodeRecord {
            episode: l,
            realized_return: -1.0 / 3.0 * l as f64,
            optimal_value: -0.1,
            policy_value: -0.2 - 1e-17 * l as f64,
            inst_regret: 0.1,
            cum_regret: 0.1 * l as f64,
            beta_r: std::f64::consts::PI,
            beta_p: 1e300,
            reward_dev_sum: 5e-324,
            trans_dev_sum: 0.0,
            wall_ms: 0.0,
        }
    }

    #[test]
    fn episode_csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a").join("x.csv");
        let records: Vec<EpisodeRecord> = (1..=7).map(record).collect();
        write_episodes(&path, &records).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next(), Some(EPISODE_HEADER));
        assert_eq!(read_episodes(&path).unwrap(), records);
        write_episodes(&path, &[]).unwrap();
        assert!(read_episodes(&path).unwrap().is_empty());
    }

    #[test]
    fn summary_regret_is_last_cumulative_cell() {
        let dir = tempfile::tempdir().unwrap();
        let records: Vec<EpisodeRecord> = (1..=10).map(record).collect();
        write_episodes(&cell_path(dir.path(), "e", AgentKind::Random, 4), &records).unwrap();
        let row = summarize_cell(dir.path(), "e", AgentKind::Random, 4, 5).unwrap();
        assert_eq!(row.final_regret, records[9].cum_regret);
        assert!(row.coverage_viol.is_nan());
        assert_eq!(row.secs, 0.0);
        let again = summarize_cell(dir.path(), "e", AgentKind::Random, 4, 5).unwrap();
        assert_eq!(summary_to_csv(&[row]).unwrap(), summary_to_csv(&[again]).unwrap());
    }
}
