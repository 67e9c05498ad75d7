//! Synthetic MDPs whose mean reward and mean transition are finite RKHS
//! members with prescribed norms.

use rand::Rng;

use super::{check_noise, concat, EpisodicEnv, NoiseScales};
use crate::domain::{BoxSet, Domain};
use crate::error::{Error, Result};
use crate::kernels::{rkhs_sample, KernelSpec, RkhsFunction};

const NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct RkhsEnv {
    pub reward: RkhsFunction,
    /// Acts on `z ++ [i]`; coordinate `i` of the mean next state.
    pub transition: RkhsFunction,
    pub b_r: f64,
    pub b_p: f64,
    pub state_box: BoxSet,
    pub action_box: BoxSet,
    pub horizon: usize,
    pub noise: NoiseScales,
    pub initial_state: Vec<f64>,
    pub lipschitz: Option<f64>,
}

impl RkhsEnv {
    /// Draws both mean functions from `rng` with `n_centers` centers each.
    /// `transition_kernel` acts on indexed points, e.g. `base.indexed(m)`.
    #[allow(clippy::too_many_arguments)]
    pub fn sample<R: Rng + ?Sized>(
        reward_kernel: &KernelSpec,
        transition_kernel: &KernelSpec,
        state_box: BoxSet,
        action_box: BoxSet,
        b_r: f64,
        b_p: f64,
        n_centers: usize,
        horizon: usize,
        noise: NoiseScales,
        rng: &mut R,
    ) -> Result<Self> {
        let m = state_box.dim();
        let z_domain = Domain::from_box(&state_box).then(Domain::from_box(&action_box));
        let reward = rkhs_sample(reward_kernel, &z_domain, n_centers, b_r, rng)?;
        let transition = rkhs_sample(transition_kernel, &z_domain.then(Domain::index(m)), n_centers, b_p, rng)?;
        let initial_state = state_box.center();
        let env = RkhsEnv {
            reward,
            transition,
            b_r,
            b_p,
            state_box,
            action_box,
            horizon,
            noise,
            initial_state,
            lipschitz: None,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        self.state_box.validate()?;
        self.action_box.validate()?;
        let m = self.state_box.dim();
        let dz = m + self.action_box.dim();
        if self.reward.kernel.dim() != dz || self.transition.kernel.dim() != dz + 1 {
            return Err(Error::input(format!(
                "reward kernel must act on {dz} and transition kernel on {} coordinates",
                dz + 1
            )));
        }
        for (name, f, b) in [("reward", &self.reward, self.b_r), ("transition", &self.transition, self.b_p)] {
            let norm = f.rkhs_norm();
            if (norm - b).abs() > NORM_TOL * b.max(1.0) {
                return Err(Error::input(format!("{name} function has RKHS norm {norm}, declared {b}")));
            }
        }
        if self.horizon == 0 {
            return Err(Error::input("horizon must be at least 1"));
        }
        if !self.state_box.contains(&self.initial_state) {
            return Err(Error::input("initial state lies outside the state box"));
        }
        check_noise(self.noise)
    }
}

impl EpisodicEnv for RkhsEnv {
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
        self.initial_state.clone()
    }

    fn noise(&self) -> NoiseScales {
        self.noise
    }

    fn oracle_mean_reward(&self, s: &[f64], a: &[f64]) -> f64 {
        self.reward.eval_unchecked(&concat(s, a))
    }

    fn oracle_mean_transition(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        let mut p = concat(s, a);
        p.push(0.0);
        let last = p.len() - 1;
        (0..self.state_box.dim())
            .map(|i| {
                p[last] = i as f64;
                self.transition.eval_unchecked(&p)
            })
            .collect()
    }

    fn default_kernels(&self) -> (KernelSpec, KernelSpec) {
        (self.reward.kernel.clone(), self.transition.kernel.clone())
    }

    fn norm_bounds(&self) -> (f64, f64) {
        (self.b_r, self.b_p)
    }

    fn lipschitz_hint(&self) -> Option<f64> {
        self.lipschitz
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_env(seed: u64) -> RkhsEnv {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RkhsEnv::sample(
            &KernelSpec::squared_exponential(2, 0.4),
            &KernelSpec::squared_exponential(2, 0.4).indexed(1),
            BoxSet::symmetric(1, 1.0).unwrap(),
            BoxSet::symmetric(1, 1.0).unwrap(),
            1.5,
            0.8,
            12,
            4,
            NoiseScales {
                sigma_r: 0.1,
                sigma_p: 0.1,
            },
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn norms_match_declaration() {
        let env = sample_env(1);
        assert!((env.reward.rkhs_norm() - 1.5).abs() < 1e-9);
        assert!((env.transition.rkhs_norm() - 0.8).abs() < 1e-9);
        let mut bad = env.clone();
        bad.b_r = 2.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn reward_is_bounded_by_norm() {
        let env = sample_env(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let s = env.state_box.sample(&mut rng);
            let a = env.action_box.sample(&mut rng);
            assert!(env.oracle_mean_reward(&s, &a).abs() <= 1.5 + 1e-12);
            assert!(env.oracle_mean_transition(&s, &a)[0].abs() <= 0.8 + 1e-12);
        }
    }

    #[test]
    fn same_seed_same_env_and_rollout() {
        let (e1, e2) = (sample_env(9), sample_env(9));
        assert_eq!(e1, e2);
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut r2 = ChaCha8Rng::seed_from_u64(3);
        let mut s1 = e1.initial_state();
        let mut s2 = e2.initial_state();
        for _ in 0..50 {
            let (a, b) = (e1.step(&s1, &[0.3], &mut r1).unwrap(), e2.step(&s2, &[0.3], &mut r2).unwrap());
            assert_eq!(a, b);
            s1 = a.1;
            s2 = b.1;
            assert!(e1.state_box.contains(&s1));
        }
    }
}
