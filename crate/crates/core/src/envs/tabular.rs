//! Finite MDPs. States and actions are the integer points `0..|S|` and
//! `0..|A|`, so they share the point representation of continuous envs.

use std::path::Path;

use rand::{Rng, RngCore};

use super::{check_inputs, gaussian, EpisodicEnv, NoiseScales};
use crate::domain::BoxSet;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::planners::{Grid, Model};

const ROW_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularEnv {
    n_states: usize,
    n_actions: usize,
    /// `rewards[s * |A| + a]`.
    rewards: Vec<f64>,
    /// `transitions[s * |A| + a][s']`.
    transitions: Vec<Vec<f64>>,
    horizon: usize,
    sigma_r: f64,
    initial_state: usize,
    state_box: BoxSet,
    action_box: BoxSet,
}

impl TabularEnv {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        rewards: Vec<f64>,
        transitions: Vec<Vec<f64>>,
        horizon: usize,
        sigma_r: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 || horizon == 0 {
            return Err(Error::input("tabular env needs states, actions and a positive horizon"));
        }
        let nz = n_states * n_actions;
        if rewards.len() != nz || transitions.len() != nz {
            return Err(Error::input(format!("tabular env needs {nz} reward and transition rows")));
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::input("tabular rewards must be finite"));
        }
        for (z, row) in transitions.iter().enumerate() {
            let total: f64 = row.iter().sum();
            if row.len() != n_states || row.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > ROW_TOL {
                return Err(Error::input(format!(
                    "transition row {z} must be a probability vector of length {n_states} (sum {total})"
                )));
            }
        }
        if !(sigma_r.is_finite() && sigma_r >= 0.0) {
            return Err(Error::input("reward noise must be nonnegative"));
        }
        Ok(TabularEnv {
            n_states,
            n_actions,
            rewards,
            transitions,
            horizon,
            sigma_r,
            initial_state: 0,
            state_box: BoxSet::new(vec![0.0], vec![(n_states - 1) as f64])?,
            action_box: BoxSet::new(vec![0.0], vec![(n_actions - 1) as f64])?,
        })
    }

    /// Deterministic transitions `next[s * |A| + a]`.
    pub fn deterministic(
        n_states: usize,
        n_actions: usize,
        rewards: Vec<f64>,
        next: &[usize],
        horizon: usize,
    ) -> Result<Self> {
        let rows = next
            .iter()
            .map(|&j| {
                if j >= n_states {
                    return Err(Error::input(format!("next state {j} out of range")));
                }
                let mut row = vec![0.0; n_states];
                row[j] = 1.0;
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        TabularEnv::new(n_states, n_actions, rewards, rows, horizon, 0.0)
    }

    /// Reads rows `s,a,reward_mean,p0,...,p{|S|-1}` (with header).
    pub fn from_csv(path: &Path, horizon: usize, sigma_r: f64) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::input(format!("{}: {other:?}", path.display())),
        })?;
        let header = reader.headers()?.clone();
        let n_states = header.len().saturating_sub(3);
        let expected: Vec<String> = ["s", "a", "reward_mean"]
            .iter()
            .map(|s| s.to_string())
            .chain((0..n_states).map(|j| format!("p{j}")))
            .collect();
        if n_states == 0 || header.iter().map(str::trim).ne(expected.iter().map(String::as_str)) {
            return Err(Error::input(format!(
                "{}: header must be s,a,reward_mean,p0,..,p{{|S|-1}}",
                path.display()
            )));
        }
        let mut cells: Vec<(usize, usize, f64, Vec<f64>)> = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::input(format!("{}: bad number {:?}", path.display(), &rec[i])))
            };
            let s = parse_index(&rec[0], path)?;
            let a = parse_index(&rec[1], path)?;
            let probs = (3..rec.len()).map(parse).collect::<Result<Vec<_>>>()?;
            cells.push((s, a, parse(2)?, probs));
        }
        let n_actions = cells.iter().map(|c| c.1 + 1).max().unwrap_or(0);
        let nz = n_states * n_actions;
        if cells.len() != nz {
            return Err(Error::input(format!(
                "{}: expected one row per (s, a) pair ({nz}), got {}",
                path.display(),
                cells.len()
            )));
        }
        let mut rewards = vec![f64::NAN; nz];
        let mut rows = vec![Vec::new(); nz];
        for (s, a, r, p) in cells {
            if s >= n_states {
                return Err(Error::input(format!("{}: state {s} out of range", path.display())));
            }
            let z = s * n_actions + a;
            if !rows[z].is_empty() {
                return Err(Error::input(format!("{}: duplicate row for ({s}, {a})", path.display())));
            }
            rewards[z] = r;
            rows[z] = p;
        }
        TabularEnv::new(n_states, n_actions, rewards, rows, horizon, sigma_r)
    }

    pub fn with_initial_state(mut self, s: usize) -> Result<Self> {
        if s >= self.n_states {
            return Err(Error::input(format!("initial state {s} out of range")));
        }
        self.initial_state = s;
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

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        &self.transitions[s * self.n_actions + a]
    }

    /// Planning grid whose states and actions are exactly the table indices.
    pub fn grid(&self) -> Grid {
        Grid::tabular(self.n_states, self.n_actions).expect("nonempty table")
    }

    fn cell(&self, s: &[f64], a: &[f64]) -> (usize, usize) {
        (s[0].round() as usize, a[0].round() as usize)
    }
}

fn parse_index(field: &str, path: &Path) -> Result<usize> {
    field
        .trim()
        .parse::<usize>()
        .map_err(|_| Error::input(format!("{}: bad index {field:?}", path.display())))
}

fn check_integer(x: f64, what: &str) -> Result<()> {
    if x.fract() == 0.0 {
        Ok(())
    } else {
        Err(Error::input(format!("{what} {x} is not an integer index")))
    }
}

impl EpisodicEnv for TabularEnv {
    fn state_box(&self) -> &BoxSet {
        &self.state_box
    }

    fn action_box(&self) -> &BoxSet {
        &self.action_box
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![self.initial_state as f64]
    }

    /// Transition noise is categorical, not Gaussian; `sigma_p` is 0.
    fn noise(&self) -> NoiseScales {
        NoiseScales {
            sigma_r: self.sigma_r,
            sigma_p: 0.0,
        }
    }

    fn oracle_mean_reward(&self, s: &[f64], a: &[f64]) -> f64 {
        let (s, a) = self.cell(s, a);
        self.reward(s, a)
    }

    /// Expected next index.
    fn oracle_mean_transition(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        let (s, a) = self.cell(s, a);
        vec![self.transition_row(s, a).iter().enumerate().map(|(j, p)| j as f64 * p).sum()]
    }

    fn default_kernels(&self) -> (KernelSpec, KernelSpec) {
        tabular_as_kernel(self)
    }

    /// Under the indicator kernels a table is its own coefficient vector, so
    /// the norms are Euclidean norms of the reward and mean-index tables.
    fn norm_bounds(&self) -> (f64, f64) {
        let br = self.rewards.iter().map(|r| r * r).sum::<f64>().sqrt();
        let bp = (0..self.n_states)
            .flat_map(|s| (0..self.n_actions).map(move |a| (s, a)))
            .map(|(s, a)| self.oracle_mean_transition(&[s as f64], &[a as f64])[0].powi(2))
            .sum::<f64>()
            .sqrt();
        (br, bp)
    }

    /// Distinct states are at distance at least 1, so the span of any
    /// `(H-1)`-period value bounds the Lipschitz constant.
    fn lipschitz_hint(&self) -> Option<f64> {
        let hi = self.rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = self.rewards.iter().copied().fold(f64::INFINITY, f64::min);
        Some((self.horizon.saturating_sub(1)) as f64 * (hi - lo))
    }

    fn step(&self, s: &[f64], a: &[f64], rng: &mut dyn RngCore) -> Result<(f64, Vec<f64>)> {
        check_inputs(&self.state_box, &self.action_box, s, a)?;
        check_integer(s[0], "state")?;
        check_integer(a[0], "action")?;
        let (si, ai) = self.cell(s, a);
        let r = self.reward(si, ai) + self.sigma_r * gaussian(rng);
        let u: f64 = rng.gen();
        let row = self.transition_row(si, ai);
        let mut acc = 0.0;
        let mut next = row.iter().rposition(|p| *p > 0.0).unwrap_or(0);
        for (j, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                next = j;
                break;
            }
        }
        Ok((r, vec![next as f64]))
    }

    fn oracle_model(&self, grid: &Grid) -> Result<Model> {
        if grid.n_states() != self.n_states || grid.n_actions() != self.n_actions {
            return Err(Error::input("tabular oracle model needs the table's own grid"));
        }
        let next = self
            .transitions
            .iter()
            .map(|row| row.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(j, p)| (j, *p)).collect())
            .collect();
        Model::new(self.n_states, self.n_actions, self.rewards.clone(), next)
    }
}

/// Indicator product kernels: `k_R((i, j), (i', j')) = 1{i = i'} 1{j = j'}`
/// on pairs and the same kernel with one index slot for transitions.
pub fn tabular_as_kernel(env: &TabularEnv) -> (KernelSpec, KernelSpec) {
    let reward = KernelSpec::product(KernelSpec::index_delta(env.n_states), KernelSpec::index_delta(env.n_actions));
    let transition = reward.clone().indexed(1);
    (reward, transition)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::GpPosterior;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn three_state() -> TabularEnv {
        TabularEnv::new(
            3,
            2,
            vec![0.0, 1.0, 0.5, 0.2, -0.3, 0.9],
            vec![
                vec![0.2, 0.5, 0.3],
                vec![1.0, 0.0, 0.0],
                vec![0.0, 0.25, 0.75],
                vec![0.6, 0.4, 0.0],
                vec![0.1, 0.1, 0.8],
                vec![0.0, 0.0, 1.0],
            ],
            3,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let bad = TabularEnv::new(1, 1, vec![0.0], vec![vec![0.9]], 1, 0.0);
        assert!(bad.is_err());
        let ok = TabularEnv::new(1, 1, vec![0.0], vec![vec![1.0 - 1e-13]], 1, 0.0);
        assert!(ok.is_ok());
    }

    #[test]
    fn empirical_frequencies_match_rows() {
        let env = three_state();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        for (s, a) in [(0usize, 0usize), (1, 0), (2, 0)] {
            let mut counts = [0usize; 3];
            for _ in 0..n {
                let (_, next) = env.step(&[s as f64], &[a as f64], &mut rng).unwrap();
                counts[next[0] as usize] += 1;
            }
            for (j, p) in env.transition_row(s, a).iter().enumerate() {
                let freq = counts[j] as f64 / n as f64;
                let se = (p * (1.0 - p) / n as f64).sqrt();
                assert!((freq - p).abs() <= 3.0 * se + 1e-12, "cell ({s},{a}) -> {j}: {freq} vs {p}");
            }
        }
    }

    #[test]
    fn rejects_fractional_and_out_of_range_inputs() {
        let env = three_state();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(env.step(&[0.5], &[0.0], &mut rng).is_err());
        assert!(env.step(&[3.0], &[0.0], &mut rng).is_err());
        assert!(env.step(&[0.0], &[2.0], &mut rng).is_err());
    }

    #[test]
    fn indicator_kernels() {
        let (kr, kp) = tabular_as_kernel(&three_state());
        assert_eq!(kr.eval(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(kr.eval(&[1.0, 1.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(kr.eval(&[2.0, 1.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(kp.dim(), 3);
        assert_eq!(kp.eval(&[1.0, 1.0, 0.0], &[1.0, 1.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn posterior_mean_is_shrunk_cell_average() {
        let env = three_state();
        let (kr, _) = tabular_as_kernel(&env);
        let lambda = 0.7;
        let cells = [(0, 1), (2, 0), (0, 1), (1, 1), (0, 1), (2, 0)];
        let targets = [0.3, -1.0, 0.5, 2.0, 0.1, 0.4];
        let pts: Vec<Vec<f64>> = cells.iter().map(|&(s, a)| vec![s as f64, a as f64]).collect();
        let post = GpPosterior::fit(kr, lambda, &pts, &targets).unwrap();
        for (s, a) in [(0usize, 1usize), (2, 0), (1, 1), (1, 0)] {
            let (sum, c) = cells
                .iter()
                .zip(&targets)
                .filter(|(cell, _)| **cell == (s, a))
                .fold((0.0, 0.0), |(t, c), (_, y)| (t + y, c + 1.0));
            let (mu, var) = post.predict(&[s as f64, a as f64]).unwrap();
            assert!((mu - sum / (c + lambda)).abs() < 1e-12);
            assert!((var - lambda / (c + lambda)).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_loading() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mdp.csv");
        std::fs::write(&path, "s,a,reward_mean,p0,p1\n0,0,1.0,0.5,0.5\n0,1,0.0,0,1\n1,0,0.5,1,0\n1,1,0.25,0.0,1.0\n").unwrap();
        let env = TabularEnv::from_csv(&path, 4, 0.0).unwrap();
        assert_eq!((env.n_states(), env.n_actions()), (2, 2));
        assert_eq!(env.reward(1, 1), 0.25);
        assert_eq!(env.transition_row(0, 0), &[0.5, 0.5]);
        std::fs::write(&path, "s,a,r,p0\n0,0,1,1\n").unwrap();
        assert!(TabularEnv::from_csv(&path, 4, 0.0).is_err());
        assert!(matches!(TabularEnv::from_csv(&dir.path().join("missing.csv"), 4, 0.0), Err(Error::Io { .. })));
    }

    #[test]
    fn oracle_model_is_exact() {
        let env = three_state();
        let m = env.oracle_model(&env.grid()).unwrap();
        assert_eq!(m.transition(0, 0), &[(0, 0.2), (1, 0.5), (2, 0.3)]);
        assert_eq!(m.reward(2, 1), 0.9);
    }
}
