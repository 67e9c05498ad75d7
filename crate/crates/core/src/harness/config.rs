//! Experiment configuration files (`*.kmdp.conf`, TOML with a versioned
//! schema; unknown keys are rejected).

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::agents::{AgentKind, AgentSettings, MigSource};
use crate::confidence::{BayesConstants, ConfidenceMode};
use crate::domain::BoxSet;
use crate::envs::{EpisodicEnv, LqrEnv, NoiseScales, RkhsEnv, TabularEnv};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::planners::Grid;
use crate::rng::{stream, Stream};

pub const SCHEMA_VERSION: u32 = 1;
pub const CONFIG_EXTENSION: &str = ".kmdp.conf";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxSpec {
    pub fn to_box(&self) -> Result<BoxSet> {
        BoxSet::new(self.lo.clone(), self.hi.clone()).map_err(|e| Error::config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub state: Vec<usize>,
    pub action: Vec<usize>,
}

fn default_delta() -> f64 {
    0.1
}

fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfidenceSection {
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub mode: ConfidenceMode,
    #[serde(default)]
    pub bayes: BayesConstants,
}

impl Default for ConfidenceSection {
    fn default() -> Self {
        ConfidenceSection {
            delta: default_delta(),
            mode: ConfidenceMode::default(),
            bayes: BayesConstants::default(),
        }
    }
}

fn default_mig() -> MigSource {
    MigSource::Greedy
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    pub lambda_r: Option<f64>,
    pub lambda_p: Option<f64>,
    #[serde(default = "default_mig")]
    pub mig: MigSource,
    #[serde(default)]
    pub transition_optimism: bool,
    #[serde(default = "default_one")]
    pub beta_scale: f64,
    pub reward_clip: Option<f64>,
}

impl Default for AgentSection {
    fn default() -> Self {
        AgentSection {
            lambda_r: None,
            lambda_p: None,
            mig: default_mig(),
            transition_optimism: false,
            beta_scale: 1.0,
            reward_clip: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    Lqr {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        p: Vec<Vec<f64>>,
        q: Vec<Vec<f64>>,
        state_box: BoxSpec,
        action_box: BoxSpec,
        horizon: usize,
        #[serde(default)]
        sigma_r: f64,
        #[serde(default)]
        sigma_p: f64,
        initial_state: Option<Vec<f64>>,
        #[serde(default)]
        paper_literal_sign: bool,
    },
    Tabular {
        horizon: usize,
        #[serde(default)]
        sigma_r: f64,
        #[serde(default)]
        initial_state: usize,
        /// CSV with columns `s,a,reward_mean,p0..`.
        csv: Option<PathBuf>,
        /// `rewards[s][a]`.
        rewards: Option<Vec<Vec<f64>>>,
        /// `transitions[s][a][s']`.
        transitions: Option<Vec<Vec<Vec<f64>>>>,
    },
    Rkhs {
        state_box: BoxSpec,
        action_box: BoxSpec,
        horizon: usize,
        #[serde(default)]
        sigma_r: f64,
        #[serde(default)]
        sigma_p: f64,
        /// Kernel on `z = (s, a)`.
        reward_kernel: KernelSpec,
        /// Kernel on `z`; the index slot is appended automatically.
        transition_kernel: KernelSpec,
        b_r: f64,
        b_p: f64,
        n_centers: usize,
        #[serde(default)]
        generation_seed: u64,
        initial_state: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub name: String,
    pub model: EnvSpec,
    /// Required for continuous environments; tabular ones use their table.
    pub grid: Option<GridSpec>,
    /// Overrides the environment's reward kernel (on `z`).
    pub reward_kernel: Option<KernelSpec>,
    /// Overrides the environment's transition kernel (on `z ++ [i]`).
    pub transition_kernel: Option<KernelSpec>,
    pub b_r: Option<f64>,
    pub b_p: Option<f64>,
    pub lipschitz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub episodes: usize,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub agents: Vec<AgentKind>,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub record_wall_time: bool,
    pub mig_cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub confidence: ConfidenceSection,
    #[serde(default)]
    pub agent: AgentSection,
    #[serde(default, rename = "env")]
    pub envs: Vec<EnvConfig>,
    pub coverage: Option<super::coverage::CoverageConfig>,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        ExperimentConfig::from_toml_str(&text, &base).map_err(|e| match e {
            Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(self.output_dir.as_deref().unwrap_or(Path::new("results")))
    }

    /// Schema-level checks shared by every subcommand.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let delta = self.confidence.delta;
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::config(format!("delta must lie in (0, 1], got {delta}")));
        }
        if !(self.agent.beta_scale.is_finite() && self.agent.beta_scale >= 0.0) {
            return Err(Error::config("beta_scale must be nonnegative"));
        }
        let mut names = HashSet::new();
        for env in &self.envs {
            if env.name.is_empty() || env.name.contains(['/', '\\']) {
                return Err(Error::config(format!("invalid env name {:?}", env.name)));
            }
            if !names.insert(env.name.as_str()) {
                return Err(Error::config(format!("duplicate env name {:?}", env.name)));
            }
            env.validate_dims().map_err(|e| Error::config(format!("env {:?}: {}", env.name, plain(e))))?;
        }
        let mut agents = HashSet::new();
        if let Some(a) = self.agents.iter().find(|a| !agents.insert(**a)) {
            return Err(Error::config(format!("agent {} listed twice", a.name())));
        }
        if let Some(c) = &self.coverage {
            c.validate()?;
        }
        Ok(())
    }

    /// Extra checks for running the agent sweep.
    pub fn validate_for_run(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds must not be empty"));
        }
        if self.envs.is_empty() && !self.agents.is_empty() {
            return Err(Error::config("no [[env]] entries to run agents on"));
        }
        Ok(())
    }
}

fn plain(e: Error) -> String {
    match e {
        Error::Config(m) | Error::Input(m) | Error::Numerical(m) => m,
        other => other.to_string(),
    }
}

fn matrix(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::config(format!("matrix {name} must be a nonempty rectangular array")));
    }
    Ok(DMatrix::from_row_iterator(r, c, rows.iter().flatten().copied()))
}

impl EnvConfig {
    /// `(m, n)` for continuous environments, `None` for tabular ones.
    fn dims(&self) -> Result<Option<(usize, usize)>> {
        Ok(match &self.model {
            EnvSpec::Lqr { state_box, action_box, .. } | EnvSpec::Rkhs { state_box, action_box, .. } => {
                Some((state_box.to_box()?.dim(), action_box.to_box()?.dim()))
            }
            EnvSpec::Tabular { .. } => None,
        })
    }

    /// Dimension consistency that can be checked without building the env.
    fn validate_dims(&self) -> Result<()> {
        let dims = self.dims()?;
        if let EnvSpec::Lqr { a, b, p, q, .. } = &self.model {
            let (m, n) = dims.expect("continuous");
            let shapes = [
                (matrix(a, "A")?.shape(), (m, m), "A"),
                (matrix(b, "B")?.shape(), (m, n), "B"),
                (matrix(p, "P")?.shape(), (m, m), "P"),
                (matrix(q, "Q")?.shape(), (n, n), "Q"),
            ];
            for (got, want, name) in shapes {
                if got != want {
                    return Err(Error::config(format!("{name} is {got:?}, expected {want:?}")));
                }
            }
        }
        if let EnvSpec::Tabular {
            csv,
            rewards,
            transitions,
            ..
        } = &self.model
        {
            match (csv, rewards, transitions) {
                (Some(_), None, None) | (None, Some(_), Some(_)) => {}
                _ => return Err(Error::config("tabular env needs either csv or both rewards and transitions")),
            }
            if let (Some(r), Some(t)) = (rewards, transitions) {
                let ns = r.len();
                let na = r.first().map_or(0, Vec::len);
                let ok = ns > 0
                    && na > 0
                    && r.iter().all(|row| row.len() == na)
                    && t.len() == ns
                    && t.iter().all(|rows| rows.len() == na && rows.iter().all(|p| p.len() == ns));
                if !ok {
                    return Err(Error::config("tabular rewards must be |S|x|A| and transitions |S|x|A|x|S|"));
                }
            }
        }
        if let Some((m, n)) = dims {
            let grid = self
                .grid
                .as_ref()
                .ok_or_else(|| Error::config("continuous environments need a grid"))?;
            if grid.state.len() != m || grid.action.len() != n {
                return Err(Error::config(format!("grid resolutions must have {m} state and {n} action entries")));
            }
            if grid.state.iter().chain(&grid.action).any(|&r| r == 0) {
                return Err(Error::config("grid resolutions must be positive"));
            }
            for k in [&self.reward_kernel, &self.transition_kernel].into_iter().flatten() {
                k.validate()?;
            }
            if let Some(k) = &self.reward_kernel {
                if k.dim() != m + n {
                    return Err(Error::config(format!("reward kernel acts on {} coordinates, expected {}", k.dim(), m + n)));
                }
            }
            if let Some(k) = &self.transition_kernel {
                if k.dim() != m + n + 1 {
                    return Err(Error::config(format!(
                        "transition kernel acts on {} coordinates, expected {}",
                        k.dim(),
                        m + n + 1
                    )));
                }
            }
            if let EnvSpec::Rkhs {
                reward_kernel,
                transition_kernel,
                ..
            } = &self.model
            {
                if reward_kernel.dim() != m + n || transition_kernel.dim() != m + n {
                    return Err(Error::config(format!("generating kernels must act on {} coordinates", m + n)));
                }
            }
        }
        for (name, v) in [("b_r", self.b_r), ("b_p", self.b_p), ("lipschitz", self.lipschitz)] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::config(format!("{name} must be nonnegative")));
                }
            }
        }
        Ok(())
    }

    /// Builds the environment; file and numerical problems surface here.
    pub fn build(&self, base: &ExperimentConfig) -> Result<Box<dyn EpisodicEnv>> {
        Ok(match &self.model {
            EnvSpec::Lqr {
                a,
                b,
                p,
                q,
                state_box,
                action_box,
                horizon,
                sigma_r,
                sigma_p,
                initial_state,
                paper_literal_sign,
            } => {
                let mut env = LqrEnv::new(
                    matrix(a, "A")?,
                    matrix(b, "B")?,
                    matrix(p, "P")?,
                    matrix(q, "Q")?,
                    state_box.to_box()?,
                    action_box.to_box()?,
                    *horizon,
                    NoiseScales {
                        sigma_r: *sigma_r,
                        sigma_p: *sigma_p,
                    },
                )?
                .with_paper_literal_sign(*paper_literal_sign);
                if let Some(s) = initial_state {
                    env = env.with_initial_state(s.clone())?;
                }
                Box::new(env)
            }
            EnvSpec::Tabular {
                horizon,
                sigma_r,
                initial_state,
                csv,
                rewards,
                transitions,
            } => {
                let env = match (csv, rewards, transitions) {
                    (Some(path), _, _) => TabularEnv::from_csv(&base.resolve(path), *horizon, *sigma_r)?,
                    (None, Some(r), Some(t)) => TabularEnv::new(
                        r.len(),
                        r[0].len(),
                        r.iter().flatten().copied().collect(),
                        t.iter().flatten().cloned().collect(),
                        *horizon,
                        *sigma_r,
                    )?,
                    _ => return Err(Error::config("tabular env needs either csv or both rewards and transitions")),
                };
                Box::new(env.with_initial_state(*initial_state)?)
            }
            EnvSpec::Rkhs {
                state_box,
                action_box,
                horizon,
                sigma_r,
                sigma_p,
                reward_kernel,
                transition_kernel,
                b_r,
                b_p,
                n_centers,
                generation_seed,
                initial_state,
            } => {
                let sb = state_box.to_box()?;
                let m = sb.dim();
                let mut rng = stream(*generation_seed, Stream::EnvGeneration);
                let mut env = RkhsEnv::sample(
                    reward_kernel,
                    &transition_kernel.clone().indexed(m),
                    sb,
                    action_box.to_box()?,
                    *b_r,
                    *b_p,
                    *n_centers,
                    *horizon,
                    NoiseScales {
                        sigma_r: *sigma_r,
                        sigma_p: *sigma_p,
                    },
                    &mut rng,
                )?;
                env.lipschitz = self.lipschitz;
                if let Some(s) = initial_state {
                    if !env.state_box.contains(s) {
                        return Err(Error::input("initial state lies outside the state box"));
                    }
                    env.initial_state = s.clone();
                }
                Box::new(env)
            }
        })
    }

    pub fn grid(&self, env: &dyn EpisodicEnv) -> Result<Grid> {
        match (&self.model, &self.grid) {
            (EnvSpec::Tabular { .. }, _) => Grid::tabular(
                (env.state_box().hi[0] - env.state_box().lo[0]) as usize + 1,
                (env.action_box().hi[0] - env.action_box().lo[0]) as usize + 1,
            ),
            (_, Some(g)) => Grid::lattice(env.state_box(), &g.state, env.action_box(), &g.action),
            (_, None) => Err(Error::config("continuous environments need a grid")),
        }
    }

    /// Agent settings from the environment defaults and config overrides.
    pub fn settings(&self, base: &ExperimentConfig, env: &dyn EpisodicEnv) -> Result<AgentSettings> {
        let conf = &base.confidence;
        let mut probe = env.lipschitz_hint();
        if let Some(l) = self.lipschitz {
            probe = Some(l);
        }
        let lipschitz = probe.ok_or_else(|| {
            Error::config("no Lipschitz bound available for this environment; set `lipschitz`")
        })?;
        let mut s = AgentSettings::for_env(&WithLipschitz { env, lipschitz }, conf.delta, conf.mode)?;
        s.confidence.bayes = conf.bayes;
        if let Some(k) = &self.reward_kernel {
            s.reward_kernel = k.clone();
        }
        if let Some(k) = &self.transition_kernel {
            s.transition_kernel = k.clone();
        }
        if let Some(b) = self.b_r {
            s.confidence.b_r = b;
            s.reward_clip = 10.0 * b.max(1e-12) * env.horizon() as f64;
        }
        if let Some(b) = self.b_p {
            s.confidence.b_p = b;
        }
        let agent = &base.agent;
        if let Some(l) = agent.lambda_r {
            s.lambda_r = l;
        }
        if let Some(l) = agent.lambda_p {
            s.lambda_p = l;
        }
        if let Some(c) = agent.reward_clip {
            s.reward_clip = c;
        }
        s.mig = agent.mig.clone();
        s.transition_optimism = agent.transition_optimism;
        s.beta_scale = agent.beta_scale;
        s.record_wall_time = base.record_wall_time;
        s.validate(env)?;
        Ok(s)
    }
}

/// Forwards to an environment but reports a fixed Lipschitz bound.
struct WithLipschitz<'a> {
    env: &'a dyn EpisodicEnv,
    lipschitz: f64,
}

impl EpisodicEnv for WithLipschitz<'_> {
    fn state_box(&self) -> &BoxSet {
        self.env.state_box()
    }
    fn action_box(&self) -> &BoxSet {
        self.env.action_box()
    }
    fn horizon(&self) -> usize {
        self.env.horizon()
    }
    fn initial_state(&self) -> Vec<f64> {
        self.env.initial_state()
    }
    fn noise(&self) -> NoiseScales {
        self.env.noise()
    }
    fn oracle_mean_reward(&self, s: &[f64], a: &[f64]) -> f64 {
        self.env.oracle_mean_reward(s, a)
    }
    fn oracle_mean_transition(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        self.env.oracle_mean_transition(s, a)
    }
    fn default_kernels(&self) -> (KernelSpec, KernelSpec) {
        self.env.default_kernels()
    }
    fn norm_bounds(&self) -> (f64, f64) {
        self.env.norm_bounds()
    }
    fn lipschitz_hint(&self) -> Option<f64> {
        Some(self.lipschitz)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DESK: &str = r#"
schema_version = 1
episodes = 3
seeds = [1, 2]
agents = ["gp_ucrl", "random"]

[[env]]
name = "lqr"
grid = { state = [11], action = [5] }
[env.model]
kind = "lqr"
a = [[1.0]]
b = [[0.5]]
p = [[1.0]]
q = [[0.1]]
state_box = { lo = [-1.0], hi = [1.0] }
action_box = { lo = [-1.0], hi = [1.0] }
horizon = 5
sigma_r = 0.05
sigma_p = 0.05
initial_state = [0.8]
"#;

    #[test]
    fn parses_desk_config() {
        let cfg = ExperimentConfig::from_toml_str(DESK, Path::new("/tmp")).unwrap();
        assert_eq!(cfg.envs.len(), 1);
        assert_eq!(cfg.confidence.delta, 0.1);
        let env = cfg.envs[0].build(&cfg).unwrap();
        let s = cfg.envs[0].settings(&cfg, env.as_ref()).unwrap();
        assert_eq!(s.lambda_r, 5.0);
        assert_eq!(cfg.envs[0].grid(env.as_ref()).unwrap().n_pairs(), 55);
        assert_eq!(cfg.output_dir(), PathBuf::from("/tmp/results"));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let typo = DESK.replace("sigma_r = 0.05", "sigmar = 0.05");
        assert!(matches!(ExperimentConfig::from_toml_str(&typo, Path::new(".")), Err(Error::Config(_))));
        let version = DESK.replace("schema_version = 1", "schema_version = 2");
        assert!(ExperimentConfig::from_toml_str(&version, Path::new(".")).is_err());
        let delta = format!("{DESK}\n[confidence]\ndelta = 1.5\n");
        assert!(ExperimentConfig::from_toml_str(&delta, Path::new(".")).is_err());
        let dims = DESK.replace("b = [[0.5]]", "b = [[0.5, 0.1]]");
        assert!(ExperimentConfig::from_toml_str(&dims, Path::new(".")).is_err());
        let grid = DESK.replace("state = [11]", "state = [11, 3]");
        assert!(ExperimentConfig::from_toml_str(&grid, Path::new(".")).is_err());
        let seeds = DESK.replace("seeds = [1, 2]", "seeds = []");
        let cfg = ExperimentConfig::from_toml_str(&seeds, Path::new(".")).unwrap();
        assert!(cfg.validate_for_run().is_err());
    }

    #[test]
    fn tabular_inline_tables() {
        let text = r#"
schema_version = 1
seeds = [0]
[[env]]
name = "two"
[env.model]
kind = "tabular"
horizon = 3
rewards = [[0.0, 1.0], [0.5, 0.0]]
transitions = [[[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]]]
"#;
        let cfg = ExperimentConfig::from_toml_str(text, Path::new(".")).unwrap();
        let env = cfg.envs[0].build(&cfg).unwrap();
        assert_eq!(cfg.envs[0].grid(env.as_ref()).unwrap().n_pairs(), 4);
        let s = cfg.envs[0].settings(&cfg, env.as_ref()).unwrap();
        assert_eq!(s.reward_kernel.dim(), 2);
    }
}
