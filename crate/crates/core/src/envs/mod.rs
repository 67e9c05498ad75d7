//! Episodic environments with oracle access to their mean reward and mean
//! transition functions.

mod lqr;
mod rkhs;
mod tabular;

pub use lqr::{lqr_lipschitz_bound, riccati_map, riccati_solution, LqrEnv};
pub use rkhs::RkhsEnv;
pub use tabular::{tabular_as_kernel, TabularEnv};

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::domain::BoxSet;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::planners::{Grid, Model};

/// Standard deviations of the reward and per-coordinate transition noise.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseScales {
    pub sigma_r: f64,
    pub sigma_p: f64,
}

/// An episodic MDP with a fixed initial state, a compact state box and
/// additive Gaussian noise around deterministic mean functions.
pub trait EpisodicEnv: Send + Sync {
    fn state_box(&self) -> &BoxSet;
    fn action_box(&self) -> &BoxSet;
    fn horizon(&self) -> usize;
    fn initial_state(&self) -> Vec<f64>;
    fn noise(&self) -> NoiseScales;
    fn oracle_mean_reward(&self, s: &[f64], a: &[f64]) -> f64;
    /// Mean next state before clipping to the state box.
    fn oracle_mean_transition(&self, s: &[f64], a: &[f64]) -> Vec<f64>;

    /// Kernels `k_R` on `Z` and `k_P` on `Z x {0..m-1}` under which the
    /// environment's means have the norms in [`EpisodicEnv::norm_bounds`].
    fn default_kernels(&self) -> (KernelSpec, KernelSpec);

    /// RKHS norms `(B_R, B_P)` of the mean functions under the default kernels.
    fn norm_bounds(&self) -> (f64, f64);

    /// A known Lipschitz bound for the future value in the mean next state.
    fn lipschitz_hint(&self) -> Option<f64> {
        None
    }

    fn state_dim(&self) -> usize {
        self.state_box().dim()
    }

    fn action_dim(&self) -> usize {
        self.action_box().dim()
    }

    fn step(&self, s: &[f64], a: &[f64], rng: &mut dyn RngCore) -> Result<(f64, Vec<f64>)> {
        check_inputs(self.state_box(), self.action_box(), s, a)?;
        let noise = self.noise();
        let r = self.oracle_mean_reward(s, a) + noise.sigma_r * gaussian(rng);
        let mut next = self.oracle_mean_transition(s, a);
        for v in next.iter_mut() {
            *v += noise.sigma_p * gaussian(rng);
        }
        Ok((r, self.state_box().clip(&next)))
    }

    /// Planning model from the true means: grid rewards and snapped mean
    /// next states.
    fn oracle_model(&self, grid: &Grid) -> Result<Model> {
        let mut rewards = Vec::with_capacity(grid.n_pairs());
        let mut next = Vec::with_capacity(grid.n_pairs());
        for s in grid.states() {
            for a in grid.actions() {
                rewards.push(self.oracle_mean_reward(s, a));
                next.push(grid.snap_state(&self.oracle_mean_transition(s, a)));
            }
        }
        Model::deterministic(grid.n_states(), grid.n_actions(), rewards, next)
    }
}

pub(crate) fn gaussian(rng: &mut dyn RngCore) -> f64 {
    StandardNormal.sample(rng)
}

pub(crate) fn check_inputs(state_box: &BoxSet, action_box: &BoxSet, s: &[f64], a: &[f64]) -> Result<()> {
    if s.len() != state_box.dim() || a.len() != action_box.dim() {
        return Err(Error::input(format!(
            "expected state/action dimensions {}/{}, got {}/{}",
            state_box.dim(),
            action_box.dim(),
            s.len(),
            a.len()
        )));
    }
    if !state_box.contains(s) {
        return Err(Error::input(format!("state {s:?} lies outside the state box")));
    }
    if !action_box.contains(a) {
        return Err(Error::input(format!("action {a:?} lies outside the action box")));
    }
    Ok(())
}

/// `z = (s, a)` as one point.
pub fn concat(s: &[f64], a: &[f64]) -> Vec<f64> {
    let mut z = s.to_vec();
    z.extend_from_slice(a);
    z
}

pub(crate) fn check_noise(noise: NoiseScales) -> Result<()> {
    if noise.sigma_r.is_finite() && noise.sigma_r >= 0.0 && noise.sigma_p.is_finite() && noise.sigma_p >= 0.0 {
        Ok(())
    } else {
        Err(Error::input(format!("noise scales must be nonnegative, got {noise:?}")))
    }
}
