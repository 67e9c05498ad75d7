//! Information gain `1/2 ln det(I + K / lambda)` and estimates of the maximum
//! information gain (MIG) over a finite candidate mesh.
//!
//! The greedy estimator keeps the full posterior covariance over the
//! candidates and applies one rank-one downdate per selected point, so a round
//! costs `O(|candidates|^2)` regardless of how many points were chosen so far.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::rng::{stream, Stream};

/// Largest `t` accepted by the exhaustive-subset estimator.
pub const EXACT_MAX_T: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MigMethod {
    Greedy,
    ExactSmall,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MigEstimate {
    /// Information gain of the selected set, in nats.
    pub value: f64,
    pub selected_points: Vec<Vec<f64>>,
    pub t: usize,
    pub lambda: f64,
    pub method: MigMethod,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::input(format!("lambda must be positive, got {lambda}")))
    }
}

/// `1/2 ln |I + lambda^{-1} K|` from the log-diagonal of a Cholesky factor.
pub fn info_gain(kernel: &KernelSpec, points: &[Vec<f64>], lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if points.is_empty() {
        return Ok(0.0);
    }
    let n = points.len();
    let k = kernel.gram(points)?;
    let m = DMatrix::<f64>::identity(n, n) + k / lambda;
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::numerical("I + K/lambda is not positive definite"))?;
    Ok(chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum())
}

/// Greedy maximizer of the information gain. Each round picks the candidate
/// with the largest current posterior variance (equivalently the largest
/// marginal gain `1/2 ln(1 + sigma^2 / lambda)`), lowest index on ties.
struct Greedy {
    cov: DMatrix<f64>,
    lambda: f64,
    chosen: Vec<bool>,
    allow_repeats: bool,
}

impl Greedy {
    fn new(kernel: &KernelSpec, candidates: &[Vec<f64>], lambda: f64, allow_repeats: bool) -> Result<Self> {
        check_lambda(lambda)?;
        if candidates.is_empty() {
            return Err(Error::input("greedy MIG needs at least one candidate"));
        }
        Ok(Greedy {
            cov: kernel.gram(candidates)?,
            lambda,
            chosen: vec![false; candidates.len()],
            allow_repeats,
        })
    }

    /// Selects the next point; returns `(index, marginal gain)`.
    fn step(&mut self) -> Option<(usize, f64)> {
        let n = self.cov.nrows();
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if !self.allow_repeats && self.chosen[i] {
                continue;
            }
            let v = self.cov[(i, i)].max(0.0);
            if best.map_or(true, |(_, bv)| v > bv) {
                best = Some((i, v));
            }
        }
        let (x, var) = best?;
        self.chosen[x] = true;
        let denom = var + self.lambda;
        let col: Vec<f64> = self.cov.column(x).iter().copied().collect();
        for j in 0..n {
            let cj = col[j] / denom;
            if cj == 0.0 {
                continue;
            }
            for i in 0..n {
                self.cov[(i, j)] -= col[i] * cj;
            }
        }
        Some((x, 0.5 * (var / self.lambda).ln_1p()))
    }
}

fn greedy_run(
    kernel: &KernelSpec,
    candidates: &[Vec<f64>],
    t: usize,
    lambda: f64,
    allow_repeats: bool,
) -> Result<(Vec<usize>, Vec<f64>)> {
    if !allow_repeats && t > candidates.len() {
        return Err(Error::input(format!(
            "t = {t} exceeds the {} available candidates",
            candidates.len()
        )));
    }
    if t == 0 {
        check_lambda(lambda)?;
        kernel.check_points(candidates)?;
        return Ok((Vec::new(), Vec::new()));
    }
    let mut g = Greedy::new(kernel, candidates, lambda, allow_repeats)?;
    let mut picks = Vec::with_capacity(t);
    let mut prefix = Vec::with_capacity(t);
    let mut total = 0.0;
    for _ in 0..t {
        let (i, gain) = g.step().expect("candidate available");
        total += gain;
        picks.push(i);
        prefix.push(total);
    }
    Ok((picks, prefix))
}

/// Greedy MIG estimate with `t` distinct candidates.
pub fn greedy_mig(kernel: &KernelSpec, candidates: &[Vec<f64>], t: usize, lambda: f64) -> Result<MigEstimate> {
    let (picks, prefix) = greedy_run(kernel, candidates, t, lambda, false)?;
    Ok(MigEstimate {
        value: prefix.last().copied().unwrap_or(0.0),
        selected_points: picks.iter().map(|&i| candidates[i].clone()).collect(),
        t,
        lambda,
        method: MigMethod::Greedy,
    })
}

/// Greedy prefix values `gamma_1 .. gamma_{t_max}` over distinct candidates.
pub fn mig_schedule(kernel: &KernelSpec, candidates: &[Vec<f64>], t_max: usize, lambda: f64) -> Result<Vec<f64>> {
    Ok(greedy_run(kernel, candidates, t_max, lambda, false)?.1)
}

/// Greedy prefix values where a candidate may be chosen more than once
/// (repeated noisy queries of the same point), so `t_max` may exceed the
/// mesh size.
pub fn mig_schedule_with_repeats(
    kernel: &KernelSpec,
    candidates: &[Vec<f64>],
    t_max: usize,
    lambda: f64,
) -> Result<Vec<f64>> {
    Ok(greedy_run(kernel, candidates, t_max, lambda, true)?.1)
}

/// `n` uniform points from the kernel's unit domain, drawn from the mesh
/// stream of `seed`.
pub fn unit_mesh(kernel: &KernelSpec, n: usize, seed: u64) -> Vec<Vec<f64>> {
    kernel.unit_domain().random_mesh(n, &mut stream(seed, Stream::Mesh))
}

/// Exact MIG over all size-`t` subsets of `candidates` (`t <= 6`).
pub fn exact_mig(kernel: &KernelSpec, candidates: &[Vec<f64>], t: usize, lambda: f64) -> Result<MigEstimate> {
    check_lambda(lambda)?;
    if t > EXACT_MAX_T {
        return Err(Error::input(format!("exact MIG supports t <= {EXACT_MAX_T}, got {t}")));
    }
    if t > candidates.len() {
        return Err(Error::input(format!(
            "t = {t} exceeds the {} available candidates",
            candidates.len()
        )));
    }
    kernel.check_points(candidates)?;
    let mut best_value = 0.0;
    let mut best_set: Vec<usize> = (0..t).collect();
    let mut idx: Vec<usize> = (0..t).collect();
    let n = candidates.len();
    loop {
        let pts: Vec<Vec<f64>> = idx.iter().map(|&i| candidates[i].clone()).collect();
        let v = info_gain(kernel, &pts, lambda)?;
        if v > best_value {
            best_value = v;
            best_set = idx.clone();
        }
        // next combination in lexicographic order
        let mut i = t;
        loop {
            if i == 0 {
                return Ok(MigEstimate {
                    value: best_value,
                    selected_points: best_set.iter().map(|&i| candidates[i].clone()).collect(),
                    t,
                    lambda,
                    method: MigMethod::ExactSmall,
                });
            }
            i -= 1;
            if idx[i] < n - t + i {
                idx[i] += 1;
                for j in i + 1..t {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Closed-form MIG growth rates with a user-chosen leading constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnalyticRate {
    /// `c d ln(1 + t)`.
    Linear { dim: usize, constant: f64 },
    /// `c (ln(1 + t))^d`.
    SquaredExponential { dim: usize, constant: f64 },
    /// `c t^{d(d+1)/(2 nu + d(d+1))} ln(1 + t)`.
    Matern { dim: usize, nu: f64, constant: f64 },
}

impl AnalyticRate {
    pub fn gamma(&self, t: usize) -> f64 {
        let t = t as f64;
        let lt = t.ln_1p();
        match *self {
            AnalyticRate::Linear { dim, constant } => constant * dim as f64 * lt,
            AnalyticRate::SquaredExponential { dim, constant } => constant * lt.powi(dim as i32),
            AnalyticRate::Matern { dim, nu, constant } => {
                let d = dim as f64;
                let p = d * (d + 1.0) / (2.0 * nu + d * (d + 1.0));
                constant * t.powf(p) * lt
            }
        }
    }

    pub fn schedule(&self, t_max: usize) -> Vec<f64> {
        (1..=t_max).map(|t| self.gamma(t)).collect()
    }
}

/// On-disk cache of greedy schedules keyed by
/// `(kernel spec, mesh seed, lambda, t_max)`.
#[derive(Debug, Clone)]
pub struct MigCache {
    dir: PathBuf,
}

impl MigCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        MigCache { dir: dir.into() }
    }

    pub fn key(kernel: &KernelSpec, mesh_seed: u64, lambda: f64, t_max: usize) -> String {
        let mut h = Sha256::new();
        h.update(kernel.to_toml_string().as_bytes());
        h.update(mesh_seed.to_le_bytes());
        h.update(lambda.to_bits().to_le_bytes());
        h.update((t_max as u64).to_le_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("mig-{key}.txt"))
    }

    pub fn load(&self, key: &str) -> Option<Vec<f64>> {
        let text = fs::read_to_string(self.path(key)).ok()?;
        text.lines().map(|l| l.trim().parse::<f64>().ok()).collect()
    }

    pub fn store(&self, key: &str, schedule: &[f64]) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let body: String = schedule.iter().map(|v| format!("{v}\n")).collect();
        let path = self.path(key);
        fs::write(&path, body).map_err(|e| Error::io(path, e))
    }

    /// Cached schedule, computing and storing it on a miss.
    pub fn get_or_compute(
        &self,
        key: &str,
        compute: impl FnOnce() -> Result<Vec<f64>>,
    ) -> Result<Vec<f64>> {
        if let Some(s) = self.load(key) {
            return Ok(s);
        }
        let s = compute()?;
        self.store(key, &s)?;
        Ok(s)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::GpPosterior;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pts(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn single_point_gain() {
        let k = KernelSpec::squared_exponential(1, 1.0);
        let g = info_gain(&k, &[vec![0.3]], 1.0).unwrap();
        assert!((g - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert_eq!(info_gain(&k, &[], 1.0).unwrap(), 0.0);
        assert!(info_gain(&k, &[vec![0.3]], 0.0).is_err());
    }

    #[test]
    fn telescoping_against_sequential_variances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = KernelSpec::squared_exponential(2, 0.5);
        let lambda = 0.4;
        let xs = pts(&mut rng, 10, 2);
        let batch = info_gain(&k, &xs, lambda).unwrap();
        let mut post = GpPosterior::new(k.clone(), lambda).unwrap();
        let mut seq = 0.0;
        for x in &xs {
            let (_, v) = post.predict(x).unwrap();
            seq += 0.5 * (v / lambda).ln_1p();
            post.extend(&[x.clone()], &[0.0]).unwrap();
        }
        assert!((batch - seq).abs() < 1e-8);
    }

    #[test]
    fn greedy_exhausting_candidates_equals_batch_gain() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = KernelSpec::matern(2, 1.5, 0.6);
        let cands = pts(&mut rng, 9, 2);
        let est = greedy_mig(&k, &cands, 9, 0.3).unwrap();
        assert!((est.value - info_gain(&k, &cands, 0.3).unwrap()).abs() < 1e-9);
        assert!(greedy_mig(&k, &cands, 10, 0.3).is_err());
    }

    #[test]
    fn greedy_first_step_uses_largest_self_similarity() {
        let k = KernelSpec::linear(1);
        let cands = vec![vec![0.5], vec![-2.0], vec![1.0], vec![2.0]];
        let est = greedy_mig(&k, &cands, 1, 0.5).unwrap();
        assert!((est.value - 0.5 * (1.0f64 + 4.0 / 0.5).ln()).abs() < 1e-14);
        // tie between -2 and 2 resolved by lowest index
        assert_eq!(est.selected_points, vec![vec![-2.0]]);
    }

    #[test]
    fn schedule_is_nondecreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let k = KernelSpec::squared_exponential(1, 0.2);
        let cands = pts(&mut rng, 40, 1);
        let s = mig_schedule(&k, &cands, 40, 1.0).unwrap();
        assert_eq!(s.len(), 40);
        assert!(s.windows(2).all(|w| w[1] >= w[0]));
        let r = mig_schedule_with_repeats(&k, &cands[..5], 30, 1.0).unwrap();
        assert_eq!(r.len(), 30);
        assert!(r.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn exact_dominates_greedy() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let k = KernelSpec::squared_exponential(1, 0.3);
        let cands = pts(&mut rng, 8, 1);
        for t in 1..=4 {
            let g = greedy_mig(&k, &cands, t, 0.5).unwrap().value;
            let e = exact_mig(&k, &cands, t, 0.5).unwrap().value;
            assert!(e >= g - 1e-12);
            assert!(g >= (1.0 - (-1f64).exp()) * e - 1e-9);
        }
        assert!(exact_mig(&k, &cands, 7, 0.5).is_err());
    }

    #[test]
    fn analytic_rates() {
        let lin = AnalyticRate::Linear { dim: 3, constant: 0.5 };
        assert!((lin.gamma(9) - 1.5 * 10f64.ln()).abs() < 1e-12);
        let se = AnalyticRate::SquaredExponential { dim: 2, constant: 1.0 };
        assert!((se.gamma(9) - 10f64.ln().powi(2)).abs() < 1e-12);
        assert_eq!(lin.schedule(4).len(), 4);
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = MigCache::new(dir.path());
        let k = KernelSpec::linear(1);
        let key = MigCache::key(&k, 1, 0.5, 3);
        assert_ne!(key, MigCache::key(&k, 2, 0.5, 3));
        let s = cache.get_or_compute(&key, || Ok(vec![0.1, 0.2, 1.0 / 3.0])).unwrap();
        let again = cache.get_or_compute(&key, || panic!("should hit cache")).unwrap();
        assert_eq!(s, again);
    }
}
