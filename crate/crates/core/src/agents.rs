//! Episodic learning loops: GP-UCRL (optimistic planning inside confidence
//! sets), PSRL (planning on a posterior draw) and reference baselines, with
//! exact per-episode regret accounting and the model-deviation decomposition
//! of the value gap.

use std::time::Instant;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::confidence::{episode_radii, l2, ConfidenceConfig, ConfidenceMode, EpisodeRadii};
use crate::envs::{concat, EpisodicEnv};
use crate::error::{Error, Result};
use crate::gp::{indexed_points, GpPosterior, GridTracker, TransitionPosterior};
use crate::infogain::{mig_schedule_with_repeats, AnalyticRate, MigCache};
use crate::kernels::KernelSpec;
use crate::planners::{evaluate_policy, optimistic_model, plan, GridPredictions, Grid, Model, Optimism, Plan, Policy};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    GpUcrl,
    Psrl,
    Random,
    Oracle,
}

impl AgentKind {
    pub fn name(&self) -> &'static str {
        match self {
            AgentKind::GpUcrl => "gp_ucrl",
            AgentKind::Psrl => "psrl",
            AgentKind::Random => "random",
            AgentKind::Oracle => "oracle",
        }
    }

    fn learns(&self) -> bool {
        matches!(self, AgentKind::GpUcrl | AgentKind::Psrl)
    }
}

/// Where the information-gain schedules behind the radii come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum MigSource {
    /// Greedy estimate over the planning grid pairs, repeats allowed.
    Greedy,
    Analytic { reward: AnalyticRate, transition: AnalyticRate },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSettings {
    pub reward_kernel: KernelSpec,
    /// Acts on `z ++ [i]`.
    pub transition_kernel: KernelSpec,
    pub lambda_r: f64,
    pub lambda_p: f64,
    pub confidence: ConfidenceConfig,
    pub mig: MigSource,
    pub transition_optimism: bool,
    /// Bound on the magnitude of surrogate rewards.
    pub reward_clip: f64,
    /// Multiplies both radii; 1 for the analyzed algorithm.
    pub beta_scale: f64,
    pub record_wall_time: bool,
}

impl AgentSettings {
    /// Settings from the environment's own kernels, norms, noise and
    /// Lipschitz bound, with `lambda_R = H` and `lambda_P = m H` (or the noise
    /// variances in Bayesian mode).
    pub fn for_env(env: &dyn EpisodicEnv, delta: f64, mode: ConfidenceMode) -> Result<Self> {
        let (reward_kernel, transition_kernel) = env.default_kernels();
        let (b_r, b_p) = env.norm_bounds();
        let noise = env.noise();
        let lipschitz = env
            .lipschitz_hint()
            .ok_or_else(|| Error::config("environment has no known Lipschitz bound; set one explicitly"))?;
        let h = env.horizon();
        let m = env.state_dim();
        let (lambda_r, lambda_p) = default_lambdas(mode, h, m, noise.sigma_r, noise.sigma_p);
        Ok(AgentSettings {
            reward_kernel,
            transition_kernel,
            lambda_r,
            lambda_p,
            confidence: ConfidenceConfig {
                b_r,
                b_p,
                sigma_r: noise.sigma_r,
                sigma_p: noise.sigma_p,
                delta,
                horizon: h,
                m,
                n: env.action_dim(),
                lipschitz,
                mode,
                bayes: Default::default(),
            },
            mig: MigSource::Greedy,
            transition_optimism: false,
            reward_clip: 10.0 * b_r.max(1e-12) * h as f64,
            beta_scale: 1.0,
            record_wall_time: false,
        })
    }

    pub fn validate(&self, env: &dyn EpisodicEnv) -> Result<()> {
        self.confidence.validate()?;
        let dz = env.state_dim() + env.action_dim();
        if self.reward_kernel.dim() != dz {
            return Err(Error::config(format!(
                "reward kernel acts on {} coordinates, environment pairs have {dz}",
                self.reward_kernel.dim()
            )));
        }
        if self.transition_kernel.dim() != dz + 1 {
            return Err(Error::config(format!(
                "transition kernel acts on {} coordinates, indexed pairs have {}",
                self.transition_kernel.dim(),
                dz + 1
            )));
        }
        self.reward_kernel.validate()?;
        self.transition_kernel.validate()?;
        if self.confidence.m != env.state_dim() || self.confidence.n != env.action_dim() {
            return Err(Error::config("confidence dimensions disagree with the environment"));
        }
        if self.confidence.horizon != env.horizon() {
            return Err(Error::config("confidence horizon disagrees with the environment"));
        }
        for (name, v) in [("lambda_R", self.lambda_r), ("lambda_P", self.lambda_p), ("reward_clip", self.reward_clip)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.beta_scale.is_finite() && self.beta_scale >= 0.0) {
            return Err(Error::config("beta_scale must be nonnegative"));
        }
        Ok(())
    }
}

/// `(lambda_R, lambda_P)`: `(H, m H)` for the frequentist sets, the noise
/// variances (floored at 1e-6) for the Bayesian ones.
pub fn default_lambdas(mode: ConfidenceMode, horizon: usize, m: usize, sigma_r: f64, sigma_p: f64) -> (f64, f64) {
    match mode {
        ConfidenceMode::Frequentist => (horizon as f64, (m * horizon) as f64),
        ConfidenceMode::BayesGp => ((sigma_r * sigma_r).max(1e-6), (sigma_p * sigma_p).max(1e-6)),
    }
}

/// Everything shared by all agents and seeds of one experiment: the grid,
/// the oracle model and plan, and the information-gain schedules.
#[derive(Debug, Clone)]
pub struct AgentSetup {
    pub settings: AgentSettings,
    pub grid: Grid,
    pub episodes: usize,
    pub oracle_model: Model,
    pub oracle_plan: Plan,
    /// True mean next state on every grid pair.
    pub oracle_means: Vec<Vec<f64>>,
    pub gamma_r: Vec<f64>,
    pub gamma_p: Vec<f64>,
}

impl AgentSetup {
    pub fn new(
        env: &dyn EpisodicEnv,
        settings: AgentSettings,
        grid: Grid,
        episodes: usize,
        cache: Option<&MigCache>,
    ) -> Result<Self> {
        settings.validate(env)?;
        let h = env.horizon();
        let m = env.state_dim();
        let pairs = grid.pairs();
        settings.reward_kernel.check_points(&pairs)?;
        let oracle_model = env.oracle_model(&grid)?;
        let oracle_plan = plan(&oracle_model, h);
        let oracle_means = pairs
            .iter()
            .map(|z| env.oracle_mean_transition(&z[..m], &z[m..]))
            .collect();
        let (gamma_r, gamma_p) = match settings.confidence.mode {
            ConfidenceMode::BayesGp => (Vec::new(), Vec::new()),
            ConfidenceMode::Frequentist => match &settings.mig {
                MigSource::Analytic { reward, transition } => {
                    (reward.schedule(episodes * h), transition.schedule(m * episodes * h))
                }
                MigSource::Greedy => {
                    let indexed = indexed_points(&pairs, m);
                    let r = greedy_schedule(&settings.reward_kernel, &pairs, episodes * h, settings.lambda_r, cache)?;
                    let p = greedy_schedule(
                        &settings.transition_kernel,
                        &indexed,
                        m * episodes * h,
                        settings.lambda_p,
                        cache,
                    )?;
                    (r, p)
                }
            },
        };
        Ok(AgentSetup {
            settings,
            grid,
            episodes,
            oracle_model,
            oracle_plan,
            oracle_means,
            gamma_r,
            gamma_p,
        })
    }

    /// Radii for episode `l`, scaled by `beta_scale`.
    pub fn radii(&self, l: usize) -> Result<EpisodeRadii> {
        let mut r = episode_radii(&self.settings.confidence, l, &self.gamma_r, &self.gamma_p)?;
        r.beta_r *= self.settings.beta_scale;
        r.beta_p *= self.settings.beta_scale;
        Ok(r)
    }

    /// Largest per-step error introduced by snapping both of two next
    /// states, in value units.
    pub fn grid_slack_per_step(&self) -> f64 {
        2.0 * self.settings.confidence.lipschitz * self.grid.snap_radius().unwrap_or(0.0)
    }
}

fn greedy_schedule(
    kernel: &KernelSpec,
    candidates: &[Vec<f64>],
    t_max: usize,
    lambda: f64,
    cache: Option<&MigCache>,
) -> Result<Vec<f64>> {
    let compute = || mig_schedule_with_repeats(kernel, candidates, t_max, lambda);
    match cache {
        None => compute(),
        Some(c) => {
            let key = MigCache::key(kernel, fingerprint(candidates), lambda, t_max);
            c.get_or_compute(&key, compute)
        }
    }
}

/// Stable 64-bit digest of a point set, used as the cache's mesh identity.
fn fingerprint(points: &[Vec<f64>]) -> u64 {
    let mut h = Sha256::new();
    for p in points {
        h.update((p.len() as u64).to_le_bytes());
        for v in p {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
}

/// Reward and transition posteriors plus their incremental summaries on the
/// planning grid.
#[derive(Debug, Clone)]
pub struct Learner {
    m: usize,
    reward: GpPosterior,
    transition: TransitionPosterior,
    reward_grid: GridTracker,
    trans_grid: GridTracker,
}

impl Learner {
    /// `joint` also tracks grid covariances, which posterior sampling needs.
    pub fn new(settings: &AgentSettings, grid: &Grid, m: usize, joint: bool) -> Result<Self> {
        let pairs = grid.pairs();
        let indexed = indexed_points(&pairs, m);
        Ok(Learner {
            m,
            reward: GpPosterior::new(settings.reward_kernel.clone(), settings.lambda_r)?,
            transition: TransitionPosterior::new(settings.transition_kernel.clone(), m, settings.lambda_p)?,
            reward_grid: GridTracker::new(&settings.reward_kernel, pairs, joint)?,
            trans_grid: GridTracker::new(&settings.transition_kernel, indexed, joint)?,
        })
    }

    pub fn reward_posterior(&self) -> &GpPosterior {
        &self.reward
    }

    pub fn transition_posterior(&self) -> &TransitionPosterior {
        &self.transition
    }

    pub fn observe(&mut self, zs: &[Vec<f64>], rewards: &[f64], next: &[Vec<f64>]) -> Result<()> {
        self.reward.extend(zs, rewards)?;
        self.transition.extend(zs, next)?;
        self.reward_grid.sync(&self.reward)?;
        self.trans_grid.sync(self.transition.inner())
    }

    pub fn predictions(&self) -> GridPredictions {
        let m = self.m;
        let tsd = self.trans_grid.sd();
        GridPredictions {
            reward_mean: self.reward_grid.mean().to_vec(),
            reward_sd: self.reward_grid.sd(),
            trans_mean: self.trans_grid.mean().chunks(m).map(<[f64]>::to_vec).collect(),
            trans_sd: tsd.chunks(m).map(<[f64]>::to_vec).collect(),
        }
    }

    /// Joint posterior draw of the mean reward and mean next state on every
    /// grid pair.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let r = self.reward_grid.sample(rng)?;
        let p = self.trans_grid.sample(rng)?;
        Ok((r, p.chunks(self.m).map(<[f64]>::to_vec).collect()))
    }
}

/// One row of the per-episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub realized_return: f64,
    pub optimal_value: f64,
    pub policy_value: f64,
    pub inst_regret: f64,
    pub cum_regret: f64,
    pub beta_r: f64,
    pub beta_p: f64,
    pub reward_dev_sum: f64,
    pub trans_dev_sum: f64,
    pub wall_ms: f64,
}

/// Value-gap decomposition for one episode along the visited grid states:
/// `value_gap = reward_term + transition_term + residual` exactly, and the
/// reported bound replaces the two signed terms by absolute deviations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    /// `V^{M_l}_{pi_l}(s_1) - V^{M*}_{pi_l}(s_1)`.
    pub value_gap: f64,
    pub reward_term: f64,
    pub reward_dev: f64,
    pub transition_term: f64,
    /// `L sum_h ||P_{M_l}(z_h) - P*(z_h)||_2`.
    pub transition_dev: f64,
    /// Martingale-difference sum `sum_h Delta_h`.
    pub residual: f64,
    pub grid_slack: f64,
}

impl Decomposition {
    pub fn identity_error(&self) -> f64 {
        self.value_gap - (self.reward_term + self.transition_term + self.residual)
    }

    pub fn bound_holds(&self) -> bool {
        self.value_gap <= self.reward_dev + self.transition_dev + self.residual + self.grid_slack + 1e-9
    }
}

/// Decomposes the gap between the planned model's value of `plan_l.policy`
/// and its true value along the visited grid states `states[0..H]`.
/// `mean_next(h, z)` is the planned model's mean next state for pair `z` at
/// period `h`.
pub fn decompose_episode(
    model_l: &Model,
    plan_l: &Plan,
    mean_next: impl Fn(usize, usize) -> Vec<f64>,
    oracle: &Model,
    oracle_means: &[Vec<f64>],
    lipschitz: f64,
    grid_slack_per_step: f64,
    states: &[usize],
) -> Result<Decomposition> {
    let horizon = plan_l.policy.horizon();
    if states.len() != horizon {
        return Err(Error::input(format!("need {horizon} visited states, got {}", states.len())));
    }
    let v_true = evaluate_policy(oracle, &plan_l.policy)?;
    let v_l = &plan_l.values;
    let na = model_l.n_actions();
    let nz = model_l.n_states() * na;
    let mut d = Decomposition {
        value_gap: v_l.value(0, states[0]) - v_true.value(0, states[0]),
        reward_term: 0.0,
        reward_dev: 0.0,
        transition_term: 0.0,
        transition_dev: 0.0,
        residual: 0.0,
        grid_slack: grid_slack_per_step * horizon as f64,
    };
    for h in 0..horizon {
        let g = states[h];
        let a = plan_l.policy.action(h, g);
        let z = g * na + a;
        let dr = model_l.reward(g, a) - oracle.reward(g, a);
        d.reward_term += dr;
        d.reward_dev += dr.abs();
        let next_l = v_l.period(h + 1);
        let e_l = match &plan_l.chosen_next {
            Some(c) => next_l[c[h * nz + z]],
            None => model_l.expectation(g, a, next_l),
        };
        d.transition_term += e_l - oracle.expectation(g, a, next_l);
        let diff: Vec<f64> = mean_next(h, z).iter().zip(&oracle_means[z]).map(|(x, y)| x - y).collect();
        d.transition_dev += lipschitz * l2(&diff);
        let dv: Vec<f64> = next_l.iter().zip(v_true.period(h + 1)).map(|(x, y)| x - y).collect();
        let realized = if h + 1 < horizon { dv[states[h + 1]] } else { 0.0 };
        d.residual += oracle.expectation(g, a, &dv) - realized;
    }
    Ok(d)
}

/// Per-episode quantities that are not part of the CSV log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeDiagnostics {
    /// Planned model's own value at the initial state.
    pub model_value: Option<f64>,
    pub decomposition: Option<Decomposition>,
    /// Grid pairs whose true mean reward left the band, out of `|Z|`.
    pub reward_violations: usize,
    /// Grid pairs whose true mean next state left the ball.
    pub transition_violations: usize,
    pub reward_observations: usize,
    pub transition_observations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentRun {
    pub agent: AgentKind,
    pub records: Vec<EpisodeRecord>,
    pub diagnostics: Vec<EpisodeDiagnostics>,
}

impl AgentRun {
    /// Episodes with any confidence-set violation on the grid, as a fraction.
    pub fn coverage_violation_rate(&self) -> f64 {
        if !self.agent.learns() || self.diagnostics.is_empty() {
            return f64::NAN;
        }
        let bad = self
            .diagnostics
            .iter()
            .filter(|d| d.reward_violations + d.transition_violations > 0)
            .count();
        bad as f64 / self.diagnostics.len() as f64
    }
}

pub fn run_gp_ucrl(env: &dyn EpisodicEnv, setup: &AgentSetup, episodes: usize, seed: u64) -> Result<AgentRun> {
    run_agent(env, setup, AgentKind::GpUcrl, episodes, seed)
}

pub fn run_psrl(env: &dyn EpisodicEnv, setup: &AgentSetup, episodes: usize, seed: u64) -> Result<AgentRun> {
    run_agent(env, setup, AgentKind::Psrl, episodes, seed)
}

/// `kind` must be [`AgentKind::Random`] or [`AgentKind::Oracle`].
pub fn run_baseline(
    env: &dyn EpisodicEnv,
    setup: &AgentSetup,
    kind: AgentKind,
    episodes: usize,
    seed: u64,
) -> Result<AgentRun> {
    if kind.learns() {
        return Err(Error::input(format!("{} is not a baseline", kind.name())));
    }
    run_agent(env, setup, kind, episodes, seed)
}

struct Planned {
    model: Model,
    plan: Plan,
    /// Mean next state per pair; `None` in choice mode, where it depends on
    /// the period.
    means: Option<Vec<Vec<f64>>>,
}

pub fn run_agent(
    env: &dyn EpisodicEnv,
    setup: &AgentSetup,
    kind: AgentKind,
    episodes: usize,
    seed: u64,
) -> Result<AgentRun> {
    let h = env.horizon();
    let m = env.state_dim();
    let grid = &setup.grid;
    if kind.learns() && setup.settings.confidence.mode == ConfidenceMode::Frequentist && episodes > setup.episodes {
        return Err(Error::input(format!(
            "setup was prepared for {} episodes, {episodes} requested",
            setup.episodes
        )));
    }
    let mut noise_rng = stream(seed, Stream::EnvNoise);
    let mut sample_rng = stream(seed, Stream::PsrlSampling);
    let mut explore_rng = stream(seed, Stream::Exploration);
    let mut learner = if kind.learns() {
        Some(Learner::new(&setup.settings, grid, m, kind == AgentKind::Psrl)?)
    } else {
        None
    };
    let s1 = env.initial_state();
    let g1 = grid.snap_state(&s1);
    let optimal_value = setup.oracle_plan.values.value(0, g1);
    let mut records = Vec::with_capacity(episodes);
    let mut diagnostics = Vec::with_capacity(episodes);
    let mut cum = 0.0;
    for l in 1..=episodes {
        let started = Instant::now();
        let episode = (|| -> Result<(EpisodeRecord, EpisodeDiagnostics)> {
            let mut diag = EpisodeDiagnostics {
                model_value: None,
                decomposition: None,
                reward_violations: 0,
                transition_violations: 0,
                reward_observations: 0,
                transition_observations: 0,
            };
            let mut radii = None;
            let planned = match (&learner, kind) {
                (Some(lr), _) => {
                    let r = setup.radii(l)?;
                    radii = Some(r);
                    let preds = lr.predictions();
                    count_violations(setup, &preds, &r, &mut diag);
                    Some(if kind == AgentKind::GpUcrl {
                        optimistic(setup, &preds, &r)?
                    } else {
                        sampled(setup, lr, &mut sample_rng)?
                    })
                }
                (None, AgentKind::Random) => None,
                _ => None,
            };
            let policy = match (&planned, kind) {
                (Some(p), _) => p.plan.policy.clone(),
                (None, AgentKind::Random) => random_policy(grid, h, &mut explore_rng),
                _ => setup.oracle_plan.policy.clone(),
            };
            let (ret, zs, rewards, nexts, visited) = rollout(env, grid, &policy, &s1, &mut noise_rng)?;
            let policy_value = evaluate_policy(&setup.oracle_model, &policy)?.value(0, g1);
            let (mut rdev, mut tdev) = (0.0, 0.0);
            if let Some(p) = &planned {
                diag.model_value = Some(p.plan.values.value(0, g1));
                let mean_next = |hh: usize, z: usize| match (&p.means, &p.plan.chosen_next) {
                    (Some(means), _) => means[z].clone(),
                    (None, Some(c)) => grid.state(c[hh * grid.n_pairs() + z]).to_vec(),
                    (None, None) => unreachable!("choice plans record their picks"),
                };
                let d = decompose_episode(
                    &p.model,
                    &p.plan,
                    mean_next,
                    &setup.oracle_model,
                    &setup.oracle_means,
                    setup.settings.confidence.lipschitz,
                    setup.grid_slack_per_step(),
                    &visited,
                )?;
                rdev = d.reward_dev;
                tdev = d.transition_dev;
                diag.decomposition = Some(d);
            }
            if let Some(lr) = learner.as_mut() {
                lr.observe(&zs, &rewards, &nexts)?;
                diag.reward_observations = lr.reward_posterior().len();
                diag.transition_observations = lr.transition_posterior().inner().len();
            }
            let inst = optimal_value - policy_value;
            let record = EpisodeRecord {
                episode: l,
                realized_return: ret,
                optimal_value,
                policy_value,
                inst_regret: inst,
                cum_regret: 0.0,
                beta_r: radii.map_or(0.0, |r| r.beta_r),
                beta_p: radii.map_or(0.0, |r| r.beta_p),
                reward_dev_sum: rdev,
                trans_dev_sum: tdev,
                wall_ms: 0.0,
            };
            Ok((record, diag))
        })();
        let (mut record, diag) = episode.map_err(|e| e.at_episode(l))?;
        cum += record.inst_regret;
        record.cum_regret = cum;
        if setup.settings.record_wall_time {
            record.wall_ms = started.elapsed().as_secs_f64() * 1e3;
        }
        records.push(record);
        diagnostics.push(diag);
    }
    Ok(AgentRun {
        agent: kind,
        records,
        diagnostics,
    })
}

fn optimistic(setup: &AgentSetup, preds: &GridPredictions, r: &EpisodeRadii) -> Result<Planned> {
    let s = &setup.settings;
    let opt = Optimism {
        beta_r: r.beta_r,
        beta_p: r.beta_p,
        lipschitz: s.confidence.lipschitz,
        slack_r: r.slack_r,
        slack_p: r.slack_p,
        reward_clip: s.reward_clip,
        transition_optimism: s.transition_optimism,
    };
    let model = optimistic_model(&setup.grid, preds, &opt)?;
    let plan = plan(&model, s.confidence.horizon);
    let means = (!model.has_choices()).then(|| preds.trans_mean.clone());
    Ok(Planned { model, plan, means })
}

fn sampled<R: Rng + ?Sized>(setup: &AgentSetup, learner: &Learner, rng: &mut R) -> Result<Planned> {
    let (rewards, means) = learner.sample(rng)?;
    let grid = &setup.grid;
    let next = means.iter().map(|p| grid.snap_state(p)).collect();
    let model = Model::deterministic(grid.n_states(), grid.n_actions(), rewards, next)?;
    let plan = plan(&model, setup.settings.confidence.horizon);
    Ok(Planned {
        model,
        plan,
        means: Some(means),
    })
}

fn count_violations(setup: &AgentSetup, preds: &GridPredictions, r: &EpisodeRadii, diag: &mut EpisodeDiagnostics) {
    let truth = setup.oracle_model.rewards();
    for z in 0..setup.grid.n_pairs() {
        if (truth[z] - preds.reward_mean[z]).abs() > r.beta_r * preds.reward_sd[z] + r.slack_r {
            diag.reward_violations += 1;
        }
        let diff: Vec<f64> = setup.oracle_means[z].iter().zip(&preds.trans_mean[z]).map(|(a, b)| a - b).collect();
        if l2(&diff) > r.beta_p * l2(&preds.trans_sd[z]) + r.slack_p {
            diag.transition_violations += 1;
        }
    }
}

fn random_policy<R: Rng + ?Sized>(grid: &Grid, horizon: usize, rng: &mut R) -> Policy {
    let ns = grid.n_states();
    let actions = (0..ns * horizon).map(|_| rng.gen_range(0..grid.n_actions())).collect();
    Policy::new(ns, horizon, actions).expect("sized to the grid")
}

type Rollout = (f64, Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>, Vec<usize>);

/// Executes `policy` by snapping each state; returns the realized return,
/// the visited pairs, rewards, next states and snapped state indices.
fn rollout(env: &dyn EpisodicEnv, grid: &Grid, policy: &Policy, s1: &[f64], rng: &mut dyn RngCore) -> Result<Rollout> {
    let horizon = policy.horizon();
    let mut s = s1.to_vec();
    let mut ret = 0.0;
    let mut zs = Vec::with_capacity(horizon);
    let mut rewards = Vec::with_capacity(horizon);
    let mut nexts = Vec::with_capacity(horizon);
    let mut visited = Vec::with_capacity(horizon);
    for h in 0..horizon {
        let g = grid.snap_state(&s);
        visited.push(g);
        let a = grid.action(policy.action(h, g));
        let (r, next) = env.step(&s, a, rng)?;
        ret += r;
        zs.push(concat(&s, a));
        rewards.push(r);
        nexts.push(next.clone());
        s = next;
    }
    Ok((ret, zs, rewards, nexts, visited))
}
