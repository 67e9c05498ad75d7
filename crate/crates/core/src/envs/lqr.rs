//! Bounded linear-quadratic regulator on compact state and action boxes.

use nalgebra::{DMatrix, DVector};

use super::{check_noise, EpisodicEnv, NoiseScales};
use crate::domain::BoxSet;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;

const RICCATI_TOL: f64 = 1e-10;
const RICCATI_MAX_ITERS: usize = 10_000;

/// `s' = A s + B a + noise`, reward `-(s^T P s + a^T Q a)` (or `+` with
/// `paper_literal_sign`).
#[derive(Debug, Clone, PartialEq)]
pub struct LqrEnv {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub state_box: BoxSet,
    pub action_box: BoxSet,
    pub horizon: usize,
    pub noise: NoiseScales,
    pub initial_state: Vec<f64>,
    pub paper_literal_sign: bool,
}

impl LqrEnv {
    /// Starts at the state box center with the cost sign convention.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        p: DMatrix<f64>,
        q: DMatrix<f64>,
        state_box: BoxSet,
        action_box: BoxSet,
        horizon: usize,
        noise: NoiseScales,
    ) -> Result<Self> {
        let initial_state = state_box.center();
        let env = LqrEnv {
            a,
            b,
            p,
            q,
            state_box,
            action_box,
            horizon,
            noise,
            initial_state,
            paper_literal_sign: false,
        };
        env.validate()?;
        Ok(env)
    }

    /// Scalar instance with unit boxes `[-1, 1]`.
    pub fn scalar(a: f64, b: f64, p: f64, q: f64, horizon: usize, noise: NoiseScales) -> Result<Self> {
        LqrEnv::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DMatrix::from_element(1, 1, p),
            DMatrix::from_element(1, 1, q),
            BoxSet::symmetric(1, 1.0)?,
            BoxSet::symmetric(1, 1.0)?,
            horizon,
            noise,
        )
    }

    pub fn with_initial_state(mut self, s: Vec<f64>) -> Result<Self> {
        if !self.state_box.contains(&s) {
            return Err(Error::input(format!("initial state {s:?} lies outside the state box")));
        }
        self.initial_state = s;
        Ok(self)
    }

    pub fn with_paper_literal_sign(mut self, on: bool) -> Self {
        self.paper_literal_sign = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.state_box.validate()?;
        self.action_box.validate()?;
        let m = self.state_box.dim();
        let n = self.action_box.dim();
        let shape_ok = self.a.shape() == (m, m)
            && self.b.shape() == (m, n)
            && self.p.shape() == (m, m)
            && self.q.shape() == (n, n);
        if !shape_ok {
            return Err(Error::input(format!(
                "LQR matrices must be A: {m}x{m}, B: {m}x{n}, P: {m}x{m}, Q: {n}x{n}"
            )));
        }
        let all = [&self.a, &self.b, &self.p, &self.q];
        if all.iter().any(|mat| mat.iter().any(|v| !v.is_finite())) {
            return Err(Error::input("LQR matrices must be finite"));
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

impl EpisodicEnv for LqrEnv {
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
        let s = DVector::from_column_slice(s);
        let a = DVector::from_column_slice(a);
        let cost = s.dot(&(&self.p * &s)) + a.dot(&(&self.q * &a));
        if self.paper_literal_sign {
            cost
        } else {
            -cost
        }
    }

    fn oracle_mean_transition(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        let s = DVector::from_column_slice(s);
        let a = DVector::from_column_slice(a);
        (&self.a * s + &self.b * a).iter().copied().collect()
    }

    /// Sum of normalized quadratic kernels for the reward and a normalized
    /// linear kernel on `z` for the transition.
    fn default_kernels(&self) -> (KernelSpec, KernelSpec) {
        let m = self.state_box.dim();
        let n = self.action_box.dim();
        let reward = KernelSpec::sum(
            KernelSpec::quadratic(m).with_variance_cap(self.state_box.max_norm()),
            KernelSpec::quadratic(n).with_variance_cap(self.action_box.max_norm()),
        );
        let transition = KernelSpec::linear(m + n).with_variance_cap(z_radius(self)).indexed(m);
        (reward, transition)
    }

    /// `s^T P s` has norm `||P||_F r_S^2` under the normalized quadratic
    /// kernel; row `i` of `[A B]` has norm `||row||_2 r_Z` under the
    /// normalized linear kernel.
    fn norm_bounds(&self) -> (f64, f64) {
        let rs = self.state_box.max_norm();
        let ra = self.action_box.max_norm();
        let sym = |m: &DMatrix<f64>| 0.5 * (m + m.transpose());
        let pr = sym(&self.p).norm() * rs * rs;
        let qr = sym(&self.q).norm() * ra * ra;
        let ab_sq = self.a.norm_squared() + self.b.norm_squared();
        ((pr * pr + qr * qr).sqrt(), ab_sq.sqrt() * z_radius(self))
    }

    fn lipschitz_hint(&self) -> Option<f64> {
        lqr_lipschitz_bound(self).ok()
    }
}

fn z_radius(env: &LqrEnv) -> f64 {
    (env.state_box.max_norm().powi(2) + env.action_box.max_norm().powi(2)).sqrt()
}

/// One step of `G -> P + A^T G A - A^T G B (Q + B^T G B)^{-1} B^T G A`.
pub fn riccati_map(env: &LqrEnv, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (a, b) = (&env.a, &env.b);
    let at_g = a.transpose() * g;
    let gain_inner = &env.q + b.transpose() * g * b;
    let inv = gain_inner
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::numerical("Q + B^T G B is singular"))?;
    let next = &env.p + &at_g * a - &at_g * b * inv * b.transpose() * g * a;
    Ok(0.5 * (&next + next.transpose()))
}

/// Fixed point of [`riccati_map`] iterated from `G = P`.
pub fn riccati_solution(env: &LqrEnv) -> Result<DMatrix<f64>> {
    env.validate()?;
    let mut g = env.p.clone();
    for _ in 0..RICCATI_MAX_ITERS {
        let next = riccati_map(env, &g)?;
        let change = (&next - &g).amax();
        g = next;
        if !change.is_finite() {
            break;
        }
        if change <= RICCATI_TOL {
            return Ok(g);
        }
    }
    Err(Error::numerical(format!(
        "Riccati iteration did not converge in {RICCATI_MAX_ITERS} steps"
    )))
}

/// `D lambda_1(G)` with `D` the state box diameter and `G` the Riccati solution.
pub fn lqr_lipschitz_bound(env: &LqrEnv) -> Result<f64> {
    let g = riccati_solution(env)?;
    let lambda1 = g.symmetric_eigen().eigenvalues.max();
    Ok(env.state_box.diameter() * lambda1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::RkhsFunction;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quiet() -> NoiseScales {
        NoiseScales {
            sigma_r: 0.0,
            sigma_p: 0.0,
        }
    }

    #[test]
    fn origin_is_a_fixed_point() {
        let env = LqrEnv::scalar(0.9, 0.1, 1.0, 1.0, 5, quiet()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(env.step(&[0.0], &[0.0], &mut rng).unwrap(), (0.0, vec![0.0]));
    }

    #[test]
    fn scalar_step_by_hand() {
        let env = LqrEnv::scalar(0.9, 0.1, 1.0, 1.0, 5, quiet()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (r, s) = env.step(&[1.0], &[1.0], &mut rng).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-15);
        assert_eq!(r, -2.0);
        let lit = env.clone().with_paper_literal_sign(true);
        assert_eq!(lit.step(&[1.0], &[1.0], &mut rng).unwrap().0, 2.0);
    }

    #[test]
    fn out_of_box_inputs_are_rejected() {
        let env = LqrEnv::scalar(0.9, 0.1, 1.0, 1.0, 5, quiet()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(env.step(&[1.5], &[0.0], &mut rng).is_err());
        assert!(env.step(&[0.0], &[-2.0], &mut rng).is_err());
        assert!(env.step(&[0.0, 0.0], &[0.0], &mut rng).is_err());
    }

    #[test]
    fn clipping_keeps_states_in_box() {
        let noise = NoiseScales {
            sigma_r: 0.1,
            sigma_p: 0.5,
        };
        let env = LqrEnv::scalar(1.2, 1.0, 1.0, 1.0, 5, noise).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut s = vec![0.0];
        for i in 0..1_000_000u32 {
            let a = [((i % 7) as f64 / 3.0 - 1.0).clamp(-1.0, 1.0)];
            s = env.step(&s, &a, &mut rng).unwrap().1;
            assert!(env.state_box.contains(&s));
        }
    }

    #[test]
    fn riccati_with_zero_dynamics_is_p() {
        let eye = DMatrix::<f64>::identity(2, 2);
        let env = LqrEnv::new(
            DMatrix::zeros(2, 2),
            eye.clone(),
            eye.clone(),
            eye.clone(),
            BoxSet::symmetric(2, 0.5).unwrap(),
            BoxSet::symmetric(2, 0.5).unwrap(),
            3,
            quiet(),
        )
        .unwrap();
        let g = riccati_solution(&env).unwrap();
        assert!((&g - &eye).amax() < 1e-14);
        let l = lqr_lipschitz_bound(&env).unwrap();
        assert!((l - env.state_box.diameter()).abs() < 1e-12);
        let wide = LqrEnv {
            state_box: env.state_box.scaled(3.0),
            ..env.clone()
        };
        assert!((lqr_lipschitz_bound(&wide).unwrap() - 3.0 * l).abs() < 1e-12);
    }

    #[test]
    fn riccati_residual_is_small() {
        let env = LqrEnv::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 0.9]),
            DMatrix::from_row_slice(2, 1, &[0.0, 0.5]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 0.5]),
            DMatrix::from_element(1, 1, 0.3),
            BoxSet::symmetric(2, 1.0).unwrap(),
            BoxSet::symmetric(1, 1.0).unwrap(),
            5,
            quiet(),
        )
        .unwrap();
        let g = riccati_solution(&env).unwrap();
        let residual = (&g - riccati_map(&env, &g).unwrap()).amax();
        assert!(residual <= 1e-8, "{residual}");
        // scalar DARE closed form: g = p + a^2 g q / (q + b^2 g)
        let s = LqrEnv::scalar(0.9, 0.5, 1.0, 0.3, 5, quiet()).unwrap();
        let g = riccati_solution(&s).unwrap()[(0, 0)];
        let (a, b, p, q) = (0.9f64, 0.5f64, 1.0f64, 0.3f64);
        // b^2 g^2 + (q - p b^2 - a^2 q) g - p q = 0
        let qa = b * b;
        let qb = q - p * b * b - a * a * q;
        let qc = -p * q;
        let root = (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);
        assert!((g - root).abs() < 1e-8, "{g} vs {root}");
    }

    #[test]
    fn unstabilizable_system_reports_nonconvergence() {
        let env = LqrEnv::scalar(2.0, 0.0, 1.0, 1.0, 5, quiet()).unwrap();
        assert!(matches!(riccati_solution(&env), Err(Error::Numerical(_))));
    }

    #[test]
    fn declared_norms_match_rkhs_representations() {
        let env = LqrEnv::new(
            DMatrix::from_row_slice(2, 2, &[0.9, 0.1, -0.2, 0.8]),
            DMatrix::from_row_slice(2, 1, &[0.3, 0.5]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]),
            DMatrix::from_element(1, 1, 0.4),
            BoxSet::symmetric(2, 1.0).unwrap(),
            BoxSet::symmetric(1, 2.0).unwrap(),
            5,
            quiet(),
        )
        .unwrap();
        let (kr, kp) = env.default_kernels();
        let (br, bp) = env.norm_bounds();
        // s^T P s = sum_{ij} P_ij s_i s_j: expand as a kernel combination on
        // the points e_i + e_j, which the quadratic kernel represents exactly
        let pts = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![1.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        // fit coefficients so that f = -cost on 10 random points, then compare norms
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let probe: Vec<Vec<f64>> = (0..10)
            .map(|_| {
                let mut z = env.state_box.sample(&mut rng);
                z.extend(env.action_box.sample(&mut rng));
                z
            })
            .collect();
        let k = kr.cross(&probe, &pts).unwrap();
        let y = DVector::from_iterator(10, probe.iter().map(|z| env.oracle_mean_reward(&z[..2], &z[2..])));
        let coef = k.clone().svd(true, true).solve(&y, 1e-12).unwrap();
        let f = RkhsFunction::new(kr.clone(), pts, coef.iter().copied().collect()).unwrap();
        for z in &probe {
            assert!((f.eval(z).unwrap() - env.oracle_mean_reward(&z[..2], &z[2..])).abs() < 1e-9);
        }
        assert!((f.rkhs_norm() - br).abs() < 1e-9, "{} vs {br}", f.rkhs_norm());
        // transition: f(z, i) = <row_i, z>, centers at scaled unit vectors
        let r = (2.0f64 + 4.0).sqrt();
        let mut centers = Vec::new();
        let mut coefs = Vec::new();
        let ab = [[0.9, 0.1, 0.3], [-0.2, 0.8, 0.5]];
        for (i, row) in ab.iter().enumerate() {
            for (d, v) in row.iter().enumerate() {
                let mut c = vec![0.0; 3];
                c[d] = 1.0;
                c.push(i as f64);
                centers.push(c);
                coefs.push(v * r * r);
            }
        }
        let g = RkhsFunction::new(kp, centers, coefs).unwrap();
        for z in &probe {
            let mean = env.oracle_mean_transition(&z[..2], &z[2..]);
            for (i, v) in mean.iter().enumerate() {
                let mut p = z.clone();
                p.push(i as f64);
                assert!((g.eval(&p).unwrap() - v).abs() < 1e-12);
            }
        }
        assert!((g.rkhs_norm() - bp).abs() < 1e-9);
    }
}
