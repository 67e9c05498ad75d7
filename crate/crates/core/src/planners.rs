//! Finite-horizon dynamic programming on a discretized state-action grid.
//!
//! Continuous states are snapped to the nearest grid state; a planning
//! [`Model`] holds a mean reward and a next-state distribution over grid
//! states for every grid pair `(s, a)`. Backward induction with lowest-index
//! tie-breaking makes every plan deterministic.

use std::io::Write;
use std::path::Path;

use crate::confidence::l2;
use crate::domain::{axis_points, cartesian, BoxSet};
use crate::envs::EpisodicEnv;
use crate::error::{Error, Result};
use crate::gp::{GpPosterior, TransitionPosterior};

#[derive(Debug, Clone, PartialEq)]
struct Lattice {
    lo: Vec<f64>,
    step: Vec<f64>,
    counts: Vec<usize>,
}

impl Lattice {
    fn snap(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        for (d, v) in x.iter().enumerate() {
            let count = self.counts[d];
            let k = if count == 1 {
                0
            } else {
                // ceil(f - 1/2) rounds to nearest with exact halves going down
                let f = (v - self.lo[d]) / self.step[d];
                ((f - 0.5).ceil().max(0.0) as usize).min(count - 1)
            };
            idx = idx * count + k;
        }
        idx
    }
}

/// Planning grid: state points, action points and a nearest-neighbor snap.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    states: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    lattice: Option<Lattice>,
    snap_radius: Option<f64>,
}

impl Grid {
    /// Regular lattices over the state and action boxes, endpoints included.
    pub fn lattice(state_box: &BoxSet, state_res: &[usize], action_box: &BoxSet, action_res: &[usize]) -> Result<Self> {
        let states = state_box.lattice(state_res)?;
        let actions = action_box.lattice(action_res)?;
        let step: Vec<f64> = state_res
            .iter()
            .enumerate()
            .map(|(d, &r)| {
                if r > 1 {
                    (state_box.hi[d] - state_box.lo[d]) / (r - 1) as f64
                } else {
                    0.0
                }
            })
            .collect();
        let snap_radius = state_res
            .iter()
            .enumerate()
            .map(|(d, &r)| {
                let half = if r > 1 { 0.5 * step[d] } else { 0.5 * (state_box.hi[d] - state_box.lo[d]) };
                half * half
            })
            .sum::<f64>()
            .sqrt();
        // single-point axes sit at the box center
        let lo = state_res
            .iter()
            .enumerate()
            .map(|(d, &r)| if r > 1 { state_box.lo[d] } else { axis_points(state_box.lo[d], state_box.hi[d], 1)[0] })
            .collect();
        Ok(Grid {
            states,
            actions,
            lattice: Some(Lattice {
                lo,
                step,
                counts: state_res.to_vec(),
            }),
            snap_radius: Some(snap_radius),
        })
    }

    /// Arbitrary point sets; snapping scans all states.
    pub fn from_points(states: Vec<Vec<f64>>, actions: Vec<Vec<f64>>) -> Result<Self> {
        if states.is_empty() || actions.is_empty() {
            return Err(Error::input("grid needs at least one state and one action"));
        }
        let sd = states[0].len();
        let ad = actions[0].len();
        if states.iter().any(|s| s.len() != sd) || actions.iter().any(|a| a.len() != ad) {
            return Err(Error::input("grid points must share a dimension"));
        }
        Ok(Grid {
            states,
            actions,
            lattice: None,
            snap_radius: None,
        })
    }

    /// Grid over finite state and action index sets `{0..n_states-1}`, `{0..n_actions-1}`.
    pub fn tabular(n_states: usize, n_actions: usize) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::input("tabular grid needs at least one state and action"));
        }
        let states = cartesian(&[(0..n_states).map(|i| i as f64).collect()]);
        let actions = cartesian(&[(0..n_actions).map(|i| i as f64).collect()]);
        Ok(Grid {
            states,
            actions,
            lattice: Some(Lattice {
                lo: vec![0.0],
                step: vec![1.0],
                counts: vec![n_states],
            }),
            snap_radius: Some(0.0),
        })
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    /// Number of grid pairs `z = (s, a)`.
    pub fn n_pairs(&self) -> usize {
        self.n_states() * self.n_actions()
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn actions(&self) -> &[Vec<f64>] {
        &self.actions
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i]
    }

    pub fn action(&self, j: usize) -> &[f64] {
        &self.actions[j]
    }

    /// Flat index of the pair `(s_i, a_j)`.
    pub fn pair_index(&self, i: usize, j: usize) -> usize {
        i * self.n_actions() + j
    }

    /// Concatenated pair point `(s_i, a_j)`.
    pub fn pair(&self, i: usize, j: usize) -> Vec<f64> {
        let mut z = self.states[i].clone();
        z.extend_from_slice(&self.actions[j]);
        z
    }

    /// All pair points, state-major.
    pub fn pairs(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.n_pairs());
        for i in 0..self.n_states() {
            for j in 0..self.n_actions() {
                out.push(self.pair(i, j));
            }
        }
        out
    }

    /// Index of the nearest grid state (lowest index on ties).
    pub fn snap_state(&self, s: &[f64]) -> usize {
        if let Some(l) = &self.lattice {
            return l.snap(s);
        }
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.states.iter().enumerate() {
            let d: f64 = p.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Largest distance from a box point to its snapped grid state, when known.
    pub fn snap_radius(&self) -> Option<f64> {
        self.snap_radius
    }
}

/// Planning model on a grid. `next[z]` lists `(state index, probability)`;
/// `choices[z]`, when present, lists deterministic next states among which
/// the planner may pick the most favorable one.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    n_states: usize,
    n_actions: usize,
    rewards: Vec<f64>,
    next: Vec<Vec<(usize, f64)>>,
    choices: Option<Vec<Vec<usize>>>,
}

impl Model {
    pub fn new(n_states: usize, n_actions: usize, rewards: Vec<f64>, next: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let nz = n_states * n_actions;
        if nz == 0 || rewards.len() != nz || next.len() != nz {
            return Err(Error::input(format!(
                "model needs {nz} rewards and transitions, got {} and {}",
                rewards.len(),
                next.len()
            )));
        }
        if let Some(r) = rewards.iter().find(|r| !r.is_finite()) {
            return Err(Error::input(format!("non-finite model reward {r}")));
        }
        for (z, row) in next.iter().enumerate() {
            let total: f64 = row.iter().map(|(_, p)| p).sum();
            if row.is_empty() || (total - 1.0).abs() > 1e-9 || row.iter().any(|&(j, p)| j >= n_states || p < 0.0) {
                return Err(Error::input(format!("transition row {z} is not a distribution over grid states")));
            }
        }
        Ok(Model {
            n_states,
            n_actions,
            rewards,
            next,
            choices: None,
        })
    }

    /// Deterministic model: pair `z` moves to grid state `next[z]`.
    pub fn deterministic(n_states: usize, n_actions: usize, rewards: Vec<f64>, next: Vec<usize>) -> Result<Self> {
        Model::new(n_states, n_actions, rewards, next.into_iter().map(|j| vec![(j, 1.0)]).collect())
    }

    /// Adds optimistic next-state choices; each list must be nonempty.
    pub fn with_choices(mut self, choices: Vec<Vec<usize>>) -> Result<Self> {
        if choices.len() != self.rewards.len() || choices.iter().any(|c| c.is_empty() || c.iter().any(|&j| j >= self.n_states)) {
            return Err(Error::input("choice lists must be nonempty and cover every pair"));
        }
        self.choices = Some(choices);
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.n_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn transition(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.next[s * self.n_actions + a]
    }

    /// `sum_j P(j | s, a) V(j)` under the stored distribution (choices ignored).
    pub fn expectation(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        self.transition(s, a).iter().map(|&(j, p)| p * v[j]).sum()
    }

    pub fn has_choices(&self) -> bool {
        self.choices.is_some()
    }

    /// Expected next-period value, and the chosen next state in choice mode.
    fn continuation(&self, z: usize, v_next: &[f64]) -> (f64, Option<usize>) {
        if let Some(choices) = &self.choices {
            let mut best = choices[z][0];
            for &j in &choices[z][1..] {
                if v_next[j] > v_next[best] {
                    best = j;
                }
            }
            return (v_next[best], Some(best));
        }
        (self.next[z].iter().map(|&(j, p)| p * v_next[j]).sum(), None)
    }
}

/// Action index per (period, grid state); periods are 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    n_states: usize,
    horizon: usize,
    actions: Vec<usize>,
}

impl Policy {
    pub fn new(n_states: usize, horizon: usize, actions: Vec<usize>) -> Result<Self> {
        if actions.len() != n_states * horizon {
            return Err(Error::input("policy table has the wrong size"));
        }
        Ok(Policy {
            n_states,
            horizon,
            actions,
        })
    }

    /// The policy taking action 0 everywhere.
    pub fn constant(n_states: usize, horizon: usize, action: usize) -> Self {
        Policy {
            n_states,
            horizon,
            actions: vec![action; n_states * horizon],
        }
    }

    pub fn action(&self, h: usize, s: usize) -> usize {
        self.actions[h * self.n_states + s]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// `state,period,action` rows with 1-based periods.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["state", "period", "action"])?;
        for h in 0..self.horizon {
            for s in 0..self.n_states {
                w.write_record(&[s.to_string(), (h + 1).to_string(), self.action(h, s).to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io("<policy csv>", e))
    }
}

/// `V_h(s)` for `h = 0..=H`, with `V_H = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    n_states: usize,
    horizon: usize,
    values: Vec<f64>,
}

impl ValueTable {
    fn zeros(n_states: usize, horizon: usize) -> Self {
        ValueTable {
            n_states,
            horizon,
            values: vec![0.0; n_states * (horizon + 1)],
        }
    }

    pub fn value(&self, h: usize, s: usize) -> f64 {
        self.values[h * self.n_states + s]
    }

    pub fn period(&self, h: usize) -> &[f64] {
        &self.values[h * self.n_states..(h + 1) * self.n_states]
    }

    fn period_mut(&mut self, h: usize) -> &mut [f64] {
        &mut self.values[h * self.n_states..(h + 1) * self.n_states]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `state,period,value` rows with 1-based periods, including `H + 1`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["state", "period", "value"])?;
        for h in 0..=self.horizon {
            for s in 0..self.n_states {
                w.write_record(&[s.to_string(), (h + 1).to_string(), self.value(h, s).to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io("<value csv>", e))
    }
}

/// Backward-induction output. `chosen_next[h * |Z| + z]` records the
/// optimistic next state picked for pair `z` at period `h` in choice mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub policy: Policy,
    pub values: ValueTable,
    pub chosen_next: Option<Vec<usize>>,
}

/// Optimal policy and value table for `model` by backward induction.
pub fn plan(model: &Model, horizon: usize) -> Plan {
    let ns = model.n_states;
    let na = model.n_actions;
    let mut values = ValueTable::zeros(ns, horizon);
    let mut actions = vec![0; ns * horizon];
    let mut chosen = model.choices.as_ref().map(|_| vec![0; horizon * ns * na]);
    for h in (0..horizon).rev() {
        let v_next = values.period(h + 1).to_vec();
        let mut row = vec![0.0; ns];
        for s in 0..ns {
            let mut best_a = 0;
            let mut best_q = f64::NEG_INFINITY;
            for a in 0..na {
                let z = s * na + a;
                let (cont, pick) = model.continuation(z, &v_next);
                if let (Some(c), Some(j)) = (chosen.as_mut(), pick) {
                    c[h * ns * na + z] = j;
                }
                let q = model.rewards[z] + cont;
                if q > best_q {
                    best_q = q;
                    best_a = a;
                }
            }
            row[s] = best_q;
            actions[h * ns + s] = best_a;
        }
        values.period_mut(h).copy_from_slice(&row);
    }
    Plan {
        policy: Policy {
            n_states: ns,
            horizon,
            actions,
        },
        values,
        chosen_next: chosen,
    }
}

/// `V^M_pi` by the Bellman recursion `V_h = r(s, pi(s, h)) + E[V_{h+1}]`.
pub fn evaluate_policy(model: &Model, policy: &Policy) -> Result<ValueTable> {
    if policy.n_states != model.n_states {
        return Err(Error::input("policy and model disagree on the number of states"));
    }
    if policy.actions.iter().any(|&a| a >= model.n_actions) {
        return Err(Error::input("policy uses an action outside the model"));
    }
    let horizon = policy.horizon;
    let ns = model.n_states;
    let mut values = ValueTable::zeros(ns, horizon);
    for h in (0..horizon).rev() {
        let v_next = values.period(h + 1).to_vec();
        let row: Vec<f64> = (0..ns)
            .map(|s| {
                let z = s * model.n_actions + policy.action(h, s);
                model.rewards[z] + model.continuation(z, &v_next).0
            })
            .collect();
        values.period_mut(h).copy_from_slice(&row);
    }
    Ok(values)
}

/// Posterior summaries on every grid pair (state-major pair order).
#[derive(Debug, Clone, PartialEq)]
pub struct GridPredictions {
    pub reward_mean: Vec<f64>,
    pub reward_sd: Vec<f64>,
    /// `trans_mean[z]` has length `m`.
    pub trans_mean: Vec<Vec<f64>>,
    pub trans_sd: Vec<Vec<f64>>,
}

impl GridPredictions {
    pub fn from_posteriors(reward: &GpPosterior, transition: &TransitionPosterior, grid: &Grid) -> Result<Self> {
        let pairs = grid.pairs();
        let rp = reward.predict_many(&pairs)?;
        let mut trans_mean = Vec::with_capacity(pairs.len());
        let mut trans_sd = Vec::with_capacity(pairs.len());
        for z in &pairs {
            let (mu, sd) = transition.predict_transition(z)?;
            trans_mean.push(mu);
            trans_sd.push(sd);
        }
        Ok(GridPredictions {
            reward_mean: rp.iter().map(|p| p.0).collect(),
            reward_sd: rp.iter().map(|p| p.1.max(0.0).sqrt()).collect(),
            trans_mean,
            trans_sd,
        })
    }
}

/// Radii and guards for the optimistic surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Optimism {
    pub beta_r: f64,
    pub beta_p: f64,
    pub lipschitz: f64,
    /// Additive reward-band widening (0 in frequentist mode).
    pub slack_r: f64,
    /// Additive transition-ball widening (0 in frequentist mode).
    pub slack_p: f64,
    /// Surrogate rewards are clipped to `[-reward_clip, reward_clip]`.
    pub reward_clip: f64,
    /// Also pick the best grid state inside each transition ball.
    pub transition_optimism: bool,
}

/// Surrogate model with reward
/// `mu_R + beta_R sigma_R + L beta_P ||sigma_P||_2` (plus slacks) and snapped
/// mean transitions.
pub fn optimistic_model(grid: &Grid, preds: &GridPredictions, opt: &Optimism) -> Result<Model> {
    let nz = grid.n_pairs();
    if preds.reward_mean.len() != nz || preds.trans_mean.len() != nz {
        return Err(Error::input("predictions do not cover the grid"));
    }
    if !(opt.beta_r >= 0.0 && opt.beta_p >= 0.0) {
        return Err(Error::input("confidence radii must be nonnegative"));
    }
    let mut rewards = Vec::with_capacity(nz);
    let mut next = Vec::with_capacity(nz);
    for z in 0..nz {
        let bonus = opt.beta_r * preds.reward_sd[z]
            + opt.slack_r
            + opt.lipschitz * (opt.beta_p * l2(&preds.trans_sd[z]) + opt.slack_p);
        rewards.push((preds.reward_mean[z] + bonus).clamp(-opt.reward_clip, opt.reward_clip));
        next.push(grid.snap_state(&preds.trans_mean[z]));
    }
    let model = Model::deterministic(grid.n_states(), grid.n_actions(), rewards, next.clone())?;
    if !opt.transition_optimism {
        return Ok(model);
    }
    let choices = (0..nz)
        .map(|z| {
            let radius = opt.beta_p * l2(&preds.trans_sd[z]) + opt.slack_p;
            let center = &preds.trans_mean[z];
            let mut c: Vec<usize> = grid
                .states()
                .iter()
                .enumerate()
                .filter(|(_, s)| l2(&s.iter().zip(center).map(|(a, b)| a - b).collect::<Vec<_>>()) <= radius)
                .map(|(i, _)| i)
                .collect();
            if !c.contains(&next[z]) {
                c.insert(0, next[z]);
            }
            c
        })
        .collect();
    model.with_choices(choices)
}

/// Optimistic plan straight from posteriors.
pub fn optimistic_plan(
    reward: &GpPosterior,
    transition: &TransitionPosterior,
    opt: &Optimism,
    grid: &Grid,
    horizon: usize,
) -> Result<Plan> {
    let preds = GridPredictions::from_posteriors(reward, transition, grid)?;
    Ok(plan(&optimistic_model(grid, &preds, opt)?, horizon))
}

/// Optimal plan for the environment's own mean model on `grid`.
pub fn oracle_plan(env: &dyn EpisodicEnv, grid: &Grid, horizon: usize) -> Result<Plan> {
    Ok(plan(&env.oracle_model(grid)?, horizon))
}

/// Writes a plan's policy and value table as two CSV files.
pub fn write_plan_csv(plan: &Plan, policy_path: &Path, value_path: &Path) -> Result<()> {
    let f = std::fs::File::create(policy_path).map_err(|e| Error::io(policy_path, e))?;
    plan.policy.write_csv(f)?;
    let f = std::fs::File::create(value_path).map_err(|e| Error::io(value_path, e))?;
    plan.values.write_csv(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;

    fn three_state_model() -> Model {
        // 3 states, 2 actions, stochastic transitions
        let rewards = vec![0.1, 0.5, 0.0, 1.0, 0.3, 0.2];
        let next = vec![
            vec![(0, 0.5), (1, 0.5)],
            vec![(2, 1.0)],
            vec![(1, 0.9), (2, 0.1)],
            vec![(0, 1.0)],
            vec![(0, 0.2), (1, 0.3), (2, 0.5)],
            vec![(2, 1.0)],
        ];
        Model::new(3, 2, rewards, next).unwrap()
    }

    fn all_policies(ns: usize, na: usize, h: usize) -> Vec<Policy> {
        let cells = ns * h;
        let total = na.pow(cells as u32);
        (0..total)
            .map(|mut code| {
                let actions = (0..cells)
                    .map(|_| {
                        let a = code % na;
                        code /= na;
                        a
                    })
                    .collect();
                Policy::new(ns, h, actions).unwrap()
            })
            .collect()
    }

    #[test]
    fn horizon_one_is_greedy() {
        let m = three_state_model();
        let p = plan(&m, 1);
        for s in 0..3 {
            let best = (0..2).map(|a| m.reward(s, a)).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(p.values.value(0, s), best);
            assert_eq!(p.values.value(1, s), 0.0);
        }
        assert_eq!(p.policy.action(0, 1), 1);
    }

    #[test]
    fn matches_enumeration_on_three_states() {
        let m = three_state_model();
        let p = plan(&m, 2);
        for s in 0..3 {
            let best = all_policies(3, 2, 2)
                .iter()
                .map(|pi| evaluate_policy(&m, pi).unwrap().value(0, s))
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(p.values.value(0, s), best);
        }
        assert_eq!(all_policies(3, 2, 2).len(), 64);
    }

    #[test]
    fn constant_reward_values() {
        let c = 0.7;
        let m = Model::deterministic(4, 3, vec![c; 12], vec![1; 12]).unwrap();
        let p = plan(&m, 5);
        for h in 0..=5 {
            for s in 0..4 {
                assert!((p.values.value(h, s) - c * (5 - h) as f64).abs() < 1e-12);
            }
        }
        assert!(p.policy.actions.iter().all(|&a| a == 0));
    }

    #[test]
    fn model_rejects_bad_rows() {
        assert!(Model::new(2, 1, vec![0.0, 0.0], vec![vec![(0, 0.4)], vec![(1, 1.0)]]).is_err());
        assert!(Model::deterministic(2, 1, vec![0.0, 0.0], vec![0, 2]).is_err());
    }

    #[test]
    fn lattice_snap_matches_scan() {
        let sb = BoxSet::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        let ab = BoxSet::symmetric(1, 1.0).unwrap();
        let g = Grid::lattice(&sb, &[5, 4], &ab, &[3]).unwrap();
        let scan = Grid::from_points(g.states().to_vec(), g.actions().to_vec()).unwrap();
        for x in [[-0.7, 0.1], [0.26, 1.9], [3.0, -1.0], [0.0, 1.1], [-0.25, 0.5]] {
            assert_eq!(g.snap_state(&x), scan.snap_state(&x), "{x:?}");
        }
        // halfway between -0.5 and 0.0 goes to the lower index
        assert_eq!(g.state(g.snap_state(&[-0.25, 0.0]))[0], -0.5);
    }

    #[test]
    fn snap_radius_bounds_random_points() {
        use rand::SeedableRng;
        let sb = BoxSet::new(vec![-1.0, 0.0], vec![1.0, 3.0]).unwrap();
        let g = Grid::lattice(&sb, &[7, 4], &BoxSet::symmetric(1, 1.0).unwrap(), &[2]).unwrap();
        let r = g.snap_radius().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let x = sb.sample(&mut rng);
            let s = g.state(g.snap_state(&x));
            let d: f64 = s.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(d <= r + 1e-12);
        }
    }

    #[test]
    fn monotone_in_rewards() {
        let m = three_state_model();
        let bigger = Model::new(3, 2, m.rewards.iter().map(|r| r + 0.25).collect(), m.next.clone()).unwrap();
        let (a, b) = (plan(&m, 3), plan(&bigger, 3));
        for h in 0..=3 {
            for s in 0..3 {
                assert!(b.values.value(h, s) >= a.values.value(h, s));
            }
        }
    }

    fn empty_posteriors(m: usize) -> (GpPosterior, TransitionPosterior) {
        let r = GpPosterior::new(KernelSpec::squared_exponential(2, 0.5), 1.0).unwrap();
        let t = TransitionPosterior::new(KernelSpec::squared_exponential(2, 0.5).indexed(m), m, 1.0).unwrap();
        (r, t)
    }

    #[test]
    fn empty_posteriors_give_constant_bonus_and_action_zero() {
        let grid = Grid::lattice(&BoxSet::symmetric(1, 1.0).unwrap(), &[5], &BoxSet::symmetric(1, 1.0).unwrap(), &[3]).unwrap();
        let (r, t) = empty_posteriors(1);
        let opt = Optimism {
            beta_r: 1.3,
            beta_p: 0.7,
            lipschitz: 2.0,
            slack_r: 0.0,
            slack_p: 0.0,
            reward_clip: 100.0,
            transition_optimism: false,
        };
        let preds = GridPredictions::from_posteriors(&r, &t, &grid).unwrap();
        let model = optimistic_model(&grid, &preds, &opt).unwrap();
        let c = 1.3 + 2.0 * 0.7;
        assert!(model.rewards().iter().all(|v| (v - c).abs() < 1e-12));
        let p = optimistic_plan(&r, &t, &opt, &grid, 3).unwrap();
        assert!(p.policy.actions.iter().all(|&a| a == 0));
    }

    #[test]
    fn zero_radii_plan_on_means() {
        let grid = Grid::lattice(&BoxSet::symmetric(1, 1.0).unwrap(), &[5], &BoxSet::symmetric(1, 1.0).unwrap(), &[3]).unwrap();
        let (r, t) = empty_posteriors(1);
        let pairs = grid.pairs();
        let ys: Vec<f64> = pairs.iter().map(|z| -(z[0] * z[0]) - 0.5 * z[1] * z[1]).collect();
        let r = r.update(&pairs, &ys).unwrap();
        let next: Vec<Vec<f64>> = pairs.iter().map(|z| vec![0.5 * z[0] + 0.5 * z[1]]).collect();
        let t = t.update(&pairs, &next).unwrap();
        let opt = Optimism {
            beta_r: 0.0,
            beta_p: 0.0,
            lipschitz: 3.0,
            slack_r: 0.0,
            slack_p: 0.0,
            reward_clip: 100.0,
            transition_optimism: false,
        };
        let preds = GridPredictions::from_posteriors(&r, &t, &grid).unwrap();
        let mean_model = Model::deterministic(
            grid.n_states(),
            grid.n_actions(),
            preds.reward_mean.clone(),
            preds.trans_mean.iter().map(|m| grid.snap_state(m)).collect(),
        )
        .unwrap();
        assert_eq!(optimistic_plan(&r, &t, &opt, &grid, 4).unwrap(), plan(&mean_model, 4));
    }

    #[test]
    fn transition_optimism_never_lowers_value() {
        let grid = Grid::lattice(&BoxSet::symmetric(1, 1.0).unwrap(), &[9], &BoxSet::symmetric(1, 1.0).unwrap(), &[3]).unwrap();
        let (r, t) = empty_posteriors(1);
        let pairs = grid.pairs();
        let r = r.update(&pairs[..6], &[0.1, -0.2, 0.3, 0.0, 0.5, -0.1]).unwrap();
        let t = t.update(&pairs[..6], &vec![vec![0.2]; 6]).unwrap();
        let mut opt = Optimism {
            beta_r: 0.5,
            beta_p: 0.5,
            lipschitz: 1.0,
            slack_r: 0.0,
            slack_p: 0.0,
            reward_clip: 100.0,
            transition_optimism: false,
        };
        let base = optimistic_plan(&r, &t, &opt, &grid, 3).unwrap();
        opt.transition_optimism = true;
        let extra = optimistic_plan(&r, &t, &opt, &grid, 3).unwrap();
        assert!(extra.chosen_next.is_some());
        for s in 0..grid.n_states() {
            assert!(extra.values.value(0, s) >= base.values.value(0, s));
        }
    }

    #[test]
    fn csv_export() {
        let p = plan(&three_state_model(), 2);
        let mut buf = Vec::new();
        p.policy.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("state,period,action\n"));
        assert_eq!(text.lines().count(), 1 + 6);
        let mut buf = Vec::new();
        p.values.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 9);
    }
}
