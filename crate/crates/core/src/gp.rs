//! Gaussian-process posteriors for the mean reward and mean transition
//! functions.
//!
//! A [`GpPosterior`] keeps the lower-triangular factor `L` of `K + lambda I`
//! and grows it by one row per observation, so an update costs `O(n^2)` per
//! added point and never refactors from scratch. [`GridTracker`] follows a
//! posterior on a fixed set of query points (the planning grid) and keeps
//! their means, variances and optionally the full covariance current at
//! `O(n |grid|)` per observation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;

/// Jitter ladder for factorizations: start at 1e-10, multiply by 100, stop at 1e-6.
pub const JITTER_LADDER: [f64; 3] = [1e-10, 1e-8, 1e-6];

/// Variances in `[-VARIANCE_CLAMP, 0)` are rounded to zero.
pub const VARIANCE_CLAMP: f64 = 1e-10;

/// Row-packed lower-triangular matrix; row `i` stores `L[i][0..=i]`.
#[derive(Debug, Clone, Default)]
struct TriFactor {
    rows: Vec<Vec<f64>>,
}

impl TriFactor {
    fn len(&self) -> usize {
        self.rows.len()
    }

    /// Solves `L x = b` for the leading `b.len()` rows.
    fn forward_solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(b.len());
        for (i, bi) in b.iter().enumerate() {
            let row = &self.rows[i];
            let s: f64 = row[..i].iter().zip(&x).map(|(l, v)| l * v).sum();
            x.push((bi - s) / row[i]);
        }
        x
    }

    /// Solves `L^T x = y`.
    fn transpose_solve(&self, y: &[f64]) -> Vec<f64> {
        let mut rhs = y.to_vec();
        let n = rhs.len();
        let mut x = vec![0.0; n];
        for j in (0..n).rev() {
            let row = &self.rows[j];
            x[j] = rhs[j] / row[j];
            let xj = x[j];
            for (i, r) in rhs.iter_mut().enumerate().take(j) {
                *r -= row[i] * xj;
            }
        }
        x
    }

    /// Appends the row for a new point with cross-covariances `b` against the
    /// existing points and regularized self-covariance `c`. Returns the
    /// jitter that had to be added to the new diagonal entry.
    fn push(&mut self, b: &[f64], c: f64) -> Result<f64> {
        let mut row = self.forward_solve(b);
        let d2 = c - row.iter().map(|v| v * v).sum::<f64>();
        let mut jitter = 0.0;
        let mut diag = d2;
        if !(d2 > 0.0) {
            let found = JITTER_LADDER.iter().find(|&&j| d2 + j > 0.0);
            match found {
                Some(&j) => {
                    jitter = j;
                    diag = d2 + j;
                }
                None => {
                    return Err(Error::numerical(format!(
                        "Cholesky extension failed: pivot {d2:e} not positive after jitter 1e-6"
                    )))
                }
            }
        }
        if !diag.is_finite() {
            return Err(Error::numerical("non-finite Cholesky pivot"));
        }
        row.push(diag.sqrt());
        self.rows.push(row);
        Ok(jitter)
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }
}

/// Posterior of a zero-mean GP prior conditioned on noisy scalar observations:
/// `mu(z) = k(z)^T (K + lambda I)^{-1} y`,
/// `sigma^2(z) = k(z, z) - k(z)^T (K + lambda I)^{-1} k(z)`.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    kernel: KernelSpec,
    noise_lambda: f64,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    factor: TriFactor,
    /// `L^{-1} y`; appending observations leaves earlier entries unchanged.
    whitened: Vec<f64>,
    /// `(K + lambda I)^{-1} y`.
    alpha: Vec<f64>,
    max_jitter: f64,
}

impl GpPosterior {
    pub fn new(kernel: KernelSpec, noise_lambda: f64) -> Result<Self> {
        kernel.validate()?;
        if !(noise_lambda.is_finite() && noise_lambda > 0.0) {
            return Err(Error::input(format!("noise lambda must be positive, got {noise_lambda}")));
        }
        Ok(GpPosterior {
            kernel,
            noise_lambda,
            inputs: Vec::new(),
            targets: Vec::new(),
            factor: TriFactor::default(),
            whitened: Vec::new(),
            alpha: Vec::new(),
            max_jitter: 0.0,
        })
    }

    /// Posterior after observing `targets` at `points`, built incrementally.
    pub fn fit(kernel: KernelSpec, noise_lambda: f64, points: &[Vec<f64>], targets: &[f64]) -> Result<Self> {
        let mut p = GpPosterior::new(kernel, noise_lambda)?;
        p.extend(points, targets)?;
        Ok(p)
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn noise_lambda(&self) -> f64 {
        self.noise_lambda
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Largest diagonal jitter applied so far (0 when none was needed).
    pub fn max_jitter(&self) -> f64 {
        self.max_jitter
    }

    /// Dense copy of the triangular factor of `K + lambda I`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.factor.to_dense()
    }

    /// Returns a new posterior that additionally conditions on the given data.
    pub fn update(&self, new_points: &[Vec<f64>], new_targets: &[f64]) -> Result<Self> {
        let mut next = self.clone();
        next.extend(new_points, new_targets)?;
        Ok(next)
    }

    /// In-place form of [`GpPosterior::update`]. On error `self` is unchanged.
    pub fn extend(&mut self, new_points: &[Vec<f64>], new_targets: &[f64]) -> Result<()> {
        if new_points.len() != new_targets.len() {
            return Err(Error::input(format!(
                "{} points but {} targets",
                new_points.len(),
                new_targets.len()
            )));
        }
        self.kernel.check_points(new_points)?;
        if let Some(y) = new_targets.iter().find(|y| !y.is_finite()) {
            return Err(Error::input(format!("non-finite target {y}")));
        }
        let snapshot_len = self.len();
        for (x, y) in new_points.iter().zip(new_targets) {
            if let Err(e) = self.push(x, *y) {
                self.truncate(snapshot_len);
                return Err(e);
            }
        }
        self.alpha = self.factor.transpose_solve(&self.whitened);
        Ok(())
    }

    fn push(&mut self, x: &[f64], y: f64) -> Result<()> {
        let b: Vec<f64> = self.inputs.iter().map(|xi| self.kernel.eval_unchecked(xi, x)).collect();
        let c = self.kernel.eval_unchecked(x, x) + self.noise_lambda;
        let jitter = self.factor.push(&b, c)?;
        self.max_jitter = self.max_jitter.max(jitter);
        let n = self.factor.len() - 1;
        let row = &self.factor.rows[n];
        let s: f64 = row[..n].iter().zip(&self.whitened).map(|(l, w)| l * w).sum();
        self.whitened.push((y - s) / row[n]);
        self.inputs.push(x.to_vec());
        self.targets.push(y);
        Ok(())
    }

    fn truncate(&mut self, n: usize) {
        self.inputs.truncate(n);
        self.targets.truncate(n);
        self.factor.rows.truncate(n);
        self.whitened.truncate(n);
    }

    /// `(mean, variance)` at `z`.
    pub fn predict(&self, z: &[f64]) -> Result<(f64, f64)> {
        self.kernel.check_point(z)?;
        Ok(self.predict_unchecked(z))
    }

    pub(crate) fn predict_unchecked(&self, z: &[f64]) -> (f64, f64) {
        let b: Vec<f64> = self.inputs.iter().map(|xi| self.kernel.eval_unchecked(xi, z)).collect();
        let v = self.factor.forward_solve(&b);
        let mean = v.iter().zip(&self.whitened).map(|(a, w)| a * w).sum();
        let var = self.kernel.eval_unchecked(z, z) - v.iter().map(|a| a * a).sum::<f64>();
        (mean, clamp_variance(var))
    }

    pub fn predict_many(&self, points: &[Vec<f64>]) -> Result<Vec<(f64, f64)>> {
        self.kernel.check_points(points)?;
        Ok(points.iter().map(|z| self.predict_unchecked(z)).collect())
    }

    /// Posterior covariance matrix over `grid`.
    pub fn posterior_covariance(&self, grid: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        self.kernel.check_points(grid)?;
        let g = grid.len();
        let mut cov = self.kernel.gram_unchecked(grid);
        if self.is_empty() {
            return Ok(cov);
        }
        let cols: Vec<Vec<f64>> = grid
            .iter()
            .map(|z| {
                let b: Vec<f64> = self.inputs.iter().map(|xi| self.kernel.eval_unchecked(xi, z)).collect();
                self.factor.forward_solve(&b)
            })
            .collect();
        for i in 0..g {
            for j in 0..=i {
                let s: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
                cov[(i, j)] -= s;
                if i != j {
                    cov[(j, i)] -= s;
                }
            }
        }
        Ok(cov)
    }

    /// One joint draw of the posterior process on `grid`.
    pub fn sample_on_grid<R: Rng + ?Sized>(&self, grid: &[Vec<f64>], rng: &mut R) -> Result<Vec<f64>> {
        if grid.is_empty() {
            return Err(Error::input("sample_on_grid needs a nonempty grid"));
        }
        let cov = self.posterior_covariance(grid)?;
        let mean: Vec<f64> = grid.iter().map(|z| self.predict_unchecked(z).0).collect();
        sample_mvn(&mean, &cov, rng)
    }

    /// Binary snapshot: inputs, targets, lambda and the kernel spec. The
    /// triangular factor is rebuilt by [`GpPosterior::from_snapshot`].
    pub fn to_snapshot(&self) -> Vec<u8> {
        let kernel = self.kernel.to_toml_string();
        let dim = self.kernel.dim();
        let mut out = Vec::with_capacity(32 + kernel.len() + 8 * self.len() * (dim + 1));
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&(kernel.len() as u64).to_le_bytes());
        out.extend_from_slice(kernel.as_bytes());
        out.extend_from_slice(&self.noise_lambda.to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for (x, y) in self.inputs.iter().zip(&self.targets) {
            for v in x {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&y.to_le_bytes());
        }
        out
    }

    pub fn from_snapshot(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(SNAPSHOT_MAGIC.len())? != SNAPSHOT_MAGIC {
            return Err(Error::input("not a GP snapshot (bad magic)"));
        }
        let klen = r.u64()? as usize;
        let ktext = std::str::from_utf8(r.take(klen)?).map_err(|_| Error::input("snapshot kernel is not UTF-8"))?;
        let kernel = KernelSpec::from_toml_str(ktext)?;
        let lambda = r.f64()?;
        let n = r.u64()? as usize;
        let dim = kernel.dim();
        let mut points = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        for _ in 0..n {
            let x = (0..dim).map(|_| r.f64()).collect::<Result<Vec<f64>>>()?;
            points.push(x);
            targets.push(r.f64()?);
        }
        if r.pos != bytes.len() {
            return Err(Error::input("trailing bytes in GP snapshot"));
        }
        GpPosterior::fit(kernel, lambda, &points, &targets)
    }
}

const SNAPSHOT_MAGIC: &[u8] = b"KMDPGP01";

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(e) => {
                let s = &self.bytes[self.pos..e];
                self.pos = e;
                Ok(s)
            }
            None => Err(Error::input("truncated GP snapshot")),
        }
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub(crate) fn clamp_variance(v: f64) -> f64 {
    if (-VARIANCE_CLAMP..0.0).contains(&v) {
        0.0
    } else {
        v
    }
}

/// Draws from `N(mean, cov)` through a Cholesky factor of `cov + jitter I`,
/// walking [`JITTER_LADDER`] until the factorization succeeds.
pub fn sample_mvn<R: Rng + ?Sized>(mean: &[f64], cov: &DMatrix<f64>, rng: &mut R) -> Result<Vec<f64>> {
    let n = mean.len();
    if cov.nrows() != n || cov.ncols() != n {
        return Err(Error::input("covariance shape does not match mean"));
    }
    let chol = JITTER_LADDER
        .iter()
        .find_map(|&j| {
            let shifted = cov + DMatrix::<f64>::identity(n, n) * j;
            shifted.cholesky()
        })
        .ok_or_else(|| Error::numerical("grid covariance not positive definite after jitter 1e-6"))?;
    let noise = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let draw = chol.l() * noise;
    Ok(mean.iter().zip(draw.iter()).map(|(m, d)| m + d).collect())
}

/// Vector-valued transition posterior on the indexed domain `Z x {0..m-1}`:
/// a single scalar GP in which every observed next state contributes `m`
/// indexed samples `((z, i), s'_i)`.
#[derive(Debug, Clone)]
pub struct TransitionPosterior {
    m: usize,
    inner: GpPosterior,
}

impl TransitionPosterior {
    /// `kernel` must act on points `z ++ [i]`, e.g. `base.indexed(m)`.
    pub fn new(kernel: KernelSpec, m: usize, noise_lambda: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::input("state dimension m must be at least 1"));
        }
        if kernel.dim() < 2 {
            return Err(Error::input("transition kernel must act on (z, index) points"));
        }
        Ok(TransitionPosterior {
            m,
            inner: GpPosterior::new(kernel, noise_lambda)?,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.m
    }

    pub fn inner(&self) -> &GpPosterior {
        &self.inner
    }

    /// Dimension of the un-indexed input `z`.
    pub fn input_dim(&self) -> usize {
        self.inner.kernel().dim() - 1
    }

    /// `[(z, 0), ..., (z, m-1)]` for each `z`, z-major.
    pub fn indexed_points(&self, zs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        indexed_points(zs, self.m)
    }

    pub fn update(&self, zs: &[Vec<f64>], next_states: &[Vec<f64>]) -> Result<Self> {
        let mut next = self.clone();
        next.extend(zs, next_states)?;
        Ok(next)
    }

    pub fn extend(&mut self, zs: &[Vec<f64>], next_states: &[Vec<f64>]) -> Result<()> {
        if zs.len() != next_states.len() {
            return Err(Error::input("transition update needs one next state per input"));
        }
        if let Some(s) = next_states.iter().find(|s| s.len() != self.m) {
            return Err(Error::input(format!("next state has dimension {}, expected {}", s.len(), self.m)));
        }
        let points = self.indexed_points(zs);
        let targets: Vec<f64> = next_states.iter().flatten().copied().collect();
        self.inner.extend(&points, &targets)
    }

    /// `(mu_P(z), sigma_P(z))`, each of length `m`.
    pub fn predict_transition(&self, z: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut mean = Vec::with_capacity(self.m);
        let mut sd = Vec::with_capacity(self.m);
        for i in 0..self.m {
            let mut p = z.to_vec();
            p.push(i as f64);
            let (mu, var) = self.inner.predict(&p)?;
            mean.push(mu);
            sd.push(var.max(0.0).sqrt());
        }
        Ok((mean, sd))
    }
}

pub fn indexed_points(zs: &[Vec<f64>], m: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(zs.len() * m);
    for z in zs {
        for i in 0..m {
            let mut p = z.clone();
            p.push(i as f64);
            out.push(p);
        }
    }
    out
}

/// Posterior summaries on a fixed query set, synchronized incrementally with
/// a growing [`GpPosterior`].
///
/// For observation `i` the tracker stores the row `v_i[g] = (L^{-1} k(X, g))_i`;
/// the posterior mean gains `v_i[g] w_i` (with `w = L^{-1} y`) and the
/// covariance loses `v_i v_i^T`.
#[derive(Debug, Clone)]
pub struct GridTracker {
    points: Vec<Vec<f64>>,
    rows: Vec<Vec<f64>>,
    mean: Vec<f64>,
    var: Vec<f64>,
    cov: Option<DMatrix<f64>>,
}

impl GridTracker {
    pub fn new(kernel: &KernelSpec, points: Vec<Vec<f64>>, track_covariance: bool) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::input("grid tracker needs at least one point"));
        }
        kernel.check_points(&points)?;
        let var = points.iter().map(|z| kernel.eval_unchecked(z, z)).collect();
        let cov = track_covariance.then(|| kernel.gram_unchecked(&points));
        Ok(GridTracker {
            mean: vec![0.0; points.len()],
            points,
            rows: Vec::new(),
            var,
            cov,
        })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Number of posterior observations already folded in.
    pub fn synced(&self) -> usize {
        self.rows.len()
    }

    pub fn sync(&mut self, post: &GpPosterior) -> Result<()> {
        if post.len() < self.rows.len() {
            return Err(Error::input("posterior has fewer observations than the tracker"));
        }
        let g = self.points.len();
        for i in self.rows.len()..post.len() {
            let x = &post.inputs[i];
            let lrow = &post.factor.rows[i];
            let mut v: Vec<f64> = self.points.iter().map(|p| post.kernel.eval_unchecked(x, p)).collect();
            for (j, prev) in self.rows.iter().enumerate() {
                let l = lrow[j];
                if l != 0.0 {
                    v.iter_mut().zip(prev).for_each(|(a, b)| *a -= l * b);
                }
            }
            let d = lrow[i];
            v.iter_mut().for_each(|a| *a /= d);
            let w = post.whitened[i];
            for k in 0..g {
                self.mean[k] += v[k] * w;
                self.var[k] -= v[k] * v[k];
            }
            if let Some(cov) = self.cov.as_mut() {
                for a in 0..g {
                    if v[a] == 0.0 {
                        continue;
                    }
                    for b in 0..g {
                        cov[(a, b)] -= v[a] * v[b];
                    }
                }
            }
            self.rows.push(v);
        }
        Ok(())
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> Vec<f64> {
        self.var.iter().map(|v| clamp_variance(*v).max(0.0)).collect()
    }

    pub fn sd(&self) -> Vec<f64> {
        self.variance().into_iter().map(f64::sqrt).collect()
    }

    pub fn covariance(&self) -> Option<&DMatrix<f64>> {
        self.cov.as_ref()
    }

    /// Joint draw on the tracked points; requires covariance tracking.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let cov = self
            .cov
            .as_ref()
            .ok_or_else(|| Error::input("grid tracker was built without covariance tracking"))?;
        sample_mvn(&self.mean, cov, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn empty_posterior_is_prior() {
        let p = GpPosterior::new(KernelSpec::squared_exponential(1, 0.5), 0.1).unwrap();
        let p = p.update(&[], &[]).unwrap();
        assert!(p.is_empty());
        assert_eq!(p.predict(&[0.3]).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn one_observation_closed_form() {
        let k = KernelSpec::squared_exponential(1, 0.7);
        let lambda = 0.3;
        let (x1, y1, z) = (0.2, 1.5, -0.4);
        let p = GpPosterior::fit(k.clone(), lambda, &[vec![x1]], &[y1]).unwrap();
        let kzx = k.eval(&[z], &[x1]).unwrap();
        let kxx = 1.0;
        let (m, v) = p.predict(&[z]).unwrap();
        assert!((m - kzx * y1 / (kxx + lambda)).abs() < 1e-14);
        assert!((v - (1.0 - kzx * kzx / (kxx + lambda))).abs() < 1e-14);
    }

    #[test]
    fn factor_reproduces_regularized_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = random_points(&mut rng, 30, 2);
        let ys: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let k = KernelSpec::squared_exponential(2, 0.4);
        let p = GpPosterior::fit(k.clone(), 0.05, &pts, &ys).unwrap();
        let l = p.cholesky_factor();
        let target = k.gram(&pts).unwrap() + DMatrix::identity(30, 30) * 0.05;
        let err = (&l * l.transpose() - &target).norm() / target.norm();
        assert!(err < 1e-8, "relative error {err}");
    }

    #[test]
    fn non_finite_target_rejected_and_state_kept() {
        let mut p = GpPosterior::new(KernelSpec::linear(1), 1.0).unwrap();
        p.extend(&[vec![1.0]], &[2.0]).unwrap();
        assert!(p.extend(&[vec![0.5], vec![0.2]], &[1.0, f64::NAN]).is_err());
        assert_eq!(p.len(), 1);
        assert!(p.extend(&[vec![0.5]], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn interpolates_with_tiny_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts = random_points(&mut rng, 6, 1);
        let ys: Vec<f64> = pts.iter().map(|p| (3.0 * p[0]).sin()).collect();
        let p = GpPosterior::fit(KernelSpec::squared_exponential(1, 0.3), 1e-8, &pts, &ys).unwrap();
        for (x, y) in pts.iter().zip(&ys) {
            assert!((p.predict(x).unwrap().0 - y).abs() < 1e-4);
        }
    }

    #[test]
    fn transition_predict_empty_and_m1() {
        let kernel = KernelSpec::squared_exponential(2, 0.5).indexed(3);
        let tp = TransitionPosterior::new(kernel, 3, 1.0).unwrap();
        let (mu, sd) = tp.predict_transition(&[0.1, 0.2]).unwrap();
        assert_eq!(mu, vec![0.0; 3]);
        assert_eq!(sd, vec![1.0; 3]);

        let k1 = KernelSpec::squared_exponential(2, 0.5).indexed(1);
        let tp1 = TransitionPosterior::new(k1, 1, 0.5)
            .unwrap()
            .update(&[vec![0.0, 0.1], vec![0.3, -0.2]], &[vec![0.4], vec![-0.1]])
            .unwrap();
        let (mu1, sd1) = tp1.predict_transition(&[0.2, 0.2]).unwrap();
        let (m, v) = tp1.inner().predict(&[0.2, 0.2, 0.0]).unwrap();
        assert_eq!(mu1[0], m);
        assert_eq!(sd1[0], v.sqrt());
    }

    #[test]
    fn transition_counts_stack() {
        let kernel = KernelSpec::linear(3).indexed(2);
        let mut tp = TransitionPosterior::new(kernel, 2, 1.0).unwrap();
        let zs = vec![vec![0.1, 0.2, 0.3]; 4];
        let ss = vec![vec![0.0, 1.0]; 4];
        tp.extend(&zs, &ss).unwrap();
        assert_eq!(tp.inner().len(), 8);
        assert!(tp.extend(&zs, &vec![vec![0.0]; 4]).is_err());
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let k = KernelSpec::squared_exponential(1, 0.3);
        let p = GpPosterior::fit(k, 0.1, &[vec![0.0], vec![0.5]], &[1.0, -1.0]).unwrap();
        let grid = vec![vec![-0.5], vec![0.1], vec![0.9]];
        let a = p.sample_on_grid(&grid, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = p.sample_on_grid(&grid, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert!(p.sample_on_grid(&[], &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn tracker_matches_direct_prediction() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let k = KernelSpec::sum(KernelSpec::quadratic(1), KernelSpec::squared_exponential(1, 0.5));
        let grid = random_points(&mut rng, 15, 2);
        let mut post = GpPosterior::new(k.clone(), 0.2).unwrap();
        let mut tracker = GridTracker::new(&k, grid.clone(), true).unwrap();
        for _ in 0..4 {
            let pts = random_points(&mut rng, 7, 2);
            let ys: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();
            post.extend(&pts, &ys).unwrap();
            tracker.sync(&post).unwrap();
        }
        let direct = post.predict_many(&grid).unwrap();
        let cov = post.posterior_covariance(&grid).unwrap();
        for (i, (m, v)) in direct.iter().enumerate() {
            assert!((tracker.mean()[i] - m).abs() < 1e-10);
            assert!((tracker.variance()[i] - v.max(0.0)).abs() < 1e-10);
        }
        assert!((tracker.covariance().unwrap() - cov).abs().max() < 1e-10);
    }

    #[test]
    fn snapshot_round_trip() {
        let k = KernelSpec::product(KernelSpec::linear(1), KernelSpec::index_delta(2));
        let p = GpPosterior::fit(k, 0.5, &[vec![0.3, 0.0], vec![-0.2, 1.0]], &[1.0, 2.0]).unwrap();
        let bytes = p.to_snapshot();
        let q = GpPosterior::from_snapshot(&bytes).unwrap();
        assert_eq!(q.inputs(), p.inputs());
        assert_eq!(q.targets(), p.targets());
        assert_eq!(q.predict(&[0.1, 1.0]).unwrap(), p.predict(&[0.1, 1.0]).unwrap());
        assert!(GpPosterior::from_snapshot(&bytes[..bytes.len() - 3]).is_err());
    }
}
