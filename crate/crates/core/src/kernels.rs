//! Kernel algebra: base kernels, sum/product composition, Gram matrices and
//! synthetic RKHS members.
//!
//! Points are flat `f64` slices. Composite kernels either split the point
//! between their children ([`CompositeDomain::Factored`], the default: the
//! left child consumes the leading coordinates) or hand the whole point to
//! both children ([`CompositeDomain::Shared`]). The indexed transition
//! domain `Z x {0..m-1}` is encoded by appending one index slot to `z` and
//! composing with [`KernelSpec::IndexDelta`].

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{Axis, Domain};
use crate::error::{Error, Result};

/// How a composite kernel routes a point to its two children.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositeDomain {
    /// `k((x1, x2), (x1', x2')) = k1(x1, x1') op k2(x2, x2')`.
    #[default]
    Factored,
    /// `k(x, x') = k1(x, x') op k2(x, x')`.
    Shared,
}

impl CompositeDomain {
    fn is_factored(&self) -> bool {
        matches!(self, CompositeDomain::Factored)
    }
}

/// Recursive description of a positive-semidefinite kernel.
///
/// `variance_cap` on the linear and quadratic kernels is the largest
/// Euclidean norm of any point in the input box; when set, the kernel is
/// divided by its maximal self-similarity over that box so that
/// `k(z, z) <= 1` there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Linear {
        dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        variance_cap: Option<f64>,
    },
    SquaredExponential {
        dim: usize,
        lengthscale: f64,
    },
    Matern {
        dim: usize,
        nu: f64,
        lengthscale: f64,
    },
    Quadratic {
        dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        variance_cap: Option<f64>,
    },
    IndexDelta {
        cardinality: usize,
    },
    Sum {
        left: Box<KernelSpec>,
        right: Box<KernelSpec>,
        #[serde(default)]
        domain: CompositeDomain,
    },
    Product {
        left: Box<KernelSpec>,
        right: Box<KernelSpec>,
        #[serde(default)]
        domain: CompositeDomain,
    },
}

#[derive(Clone, Copy, PartialEq)]
enum MaternOrder {
    Half,
    ThreeHalves,
    FiveHalves,
}

fn matern_order(nu: f64) -> Option<MaternOrder> {
    const EPS: f64 = 1e-12;
    if (nu - 0.5).abs() < EPS {
        Some(MaternOrder::Half)
    } else if (nu - 1.5).abs() < EPS {
        Some(MaternOrder::ThreeHalves)
    } else if (nu - 2.5).abs() < EPS {
        Some(MaternOrder::FiveHalves)
    } else {
        None
    }
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

impl KernelSpec {
    pub fn linear(dim: usize) -> Self {
        KernelSpec::Linear {
            dim,
            variance_cap: None,
        }
    }

    pub fn squared_exponential(dim: usize, lengthscale: f64) -> Self {
        KernelSpec::SquaredExponential { dim, lengthscale }
    }

    pub fn matern(dim: usize, nu: f64, lengthscale: f64) -> Self {
        KernelSpec::Matern { dim, nu, lengthscale }
    }

    pub fn quadratic(dim: usize) -> Self {
        KernelSpec::Quadratic {
            dim,
            variance_cap: None,
        }
    }

    pub fn index_delta(cardinality: usize) -> Self {
        KernelSpec::IndexDelta { cardinality }
    }

    /// Additive kernel over a factored domain.
    pub fn sum(left: KernelSpec, right: KernelSpec) -> Self {
        KernelSpec::Sum {
            left: Box::new(left),
            right: Box::new(right),
            domain: CompositeDomain::Factored,
        }
    }

    /// Product kernel over a factored domain.
    pub fn product(left: KernelSpec, right: KernelSpec) -> Self {
        KernelSpec::Product {
            left: Box::new(left),
            right: Box::new(right),
            domain: CompositeDomain::Factored,
        }
    }

    pub fn shared_sum(left: KernelSpec, right: KernelSpec) -> Self {
        KernelSpec::Sum {
            left: Box::new(left),
            right: Box::new(right),
            domain: CompositeDomain::Shared,
        }
    }

    pub fn shared_product(left: KernelSpec, right: KernelSpec) -> Self {
        KernelSpec::Product {
            left: Box::new(left),
            right: Box::new(right),
            domain: CompositeDomain::Shared,
        }
    }

    /// Sets the normalizing box radius on a linear or quadratic kernel.
    /// Other variants are returned unchanged.
    pub fn with_variance_cap(self, radius: f64) -> Self {
        match self {
            KernelSpec::Linear { dim, .. } => KernelSpec::Linear {
                dim,
                variance_cap: Some(radius),
            },
            KernelSpec::Quadratic { dim, .. } => KernelSpec::Quadratic {
                dim,
                variance_cap: Some(radius),
            },
            other => other,
        }
    }

    /// The kernel `k((z, i), (z', j)) = k(z, z') 1{i = j}` on `Z x {0..m-1}`.
    pub fn indexed(self, m: usize) -> Self {
        KernelSpec::product(self, KernelSpec::index_delta(m))
    }

    /// Input dimension expected by [`KernelSpec::eval`].
    pub fn dim(&self) -> usize {
        match self {
            KernelSpec::Linear { dim, .. }
            | KernelSpec::SquaredExponential { dim, .. }
            | KernelSpec::Matern { dim, .. }
            | KernelSpec::Quadratic { dim, .. } => *dim,
            KernelSpec::IndexDelta { .. } => 1,
            KernelSpec::Sum { left, right, domain } | KernelSpec::Product { left, right, domain } => {
                if domain.is_factored() {
                    left.dim() + right.dim()
                } else {
                    left.dim()
                }
            }
        }
    }

    /// Default input domain: `[-1, 1]` per continuous coordinate and the
    /// index set for indicator slots.
    pub fn unit_domain(&self) -> Domain {
        match self {
            KernelSpec::IndexDelta { cardinality } => Domain::index(*cardinality),
            KernelSpec::Sum { left, right, domain } | KernelSpec::Product { left, right, domain } => {
                if domain.is_factored() {
                    left.unit_domain().then(right.unit_domain())
                } else {
                    left.unit_domain()
                }
            }
            k => Domain {
                axes: vec![Axis::Range { lo: -1.0, hi: 1.0 }; k.dim()],
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::input(format!("{name} must be positive and finite, got {v}")))
            }
        };
        let nonzero_dim = |dim: usize| {
            if dim == 0 {
                Err(Error::input("kernel dimension must be at least 1"))
            } else {
                Ok(())
            }
        };
        match self {
            KernelSpec::Linear { dim, variance_cap } | KernelSpec::Quadratic { dim, variance_cap } => {
                nonzero_dim(*dim)?;
                if let Some(r) = variance_cap {
                    positive("variance_cap", *r)?;
                }
                Ok(())
            }
            KernelSpec::SquaredExponential { dim, lengthscale } => {
                nonzero_dim(*dim)?;
                positive("lengthscale", *lengthscale)
            }
            KernelSpec::Matern { dim, nu, lengthscale } => {
                nonzero_dim(*dim)?;
                positive("lengthscale", *lengthscale)?;
                if matern_order(*nu).is_none() {
                    return Err(Error::input(format!(
                        "Matern smoothness nu must be one of 0.5, 1.5, 2.5 (got {nu})"
                    )));
                }
                Ok(())
            }
            KernelSpec::IndexDelta { cardinality } => {
                if *cardinality == 0 {
                    Err(Error::input("index_delta cardinality must be at least 1"))
                } else {
                    Ok(())
                }
            }
            KernelSpec::Sum { left, right, domain } | KernelSpec::Product { left, right, domain } => {
                left.validate()?;
                right.validate()?;
                if !domain.is_factored() && left.dim() != right.dim() {
                    return Err(Error::input(format!(
                        "shared-domain composite needs equal child dimensions ({} vs {})",
                        left.dim(),
                        right.dim()
                    )));
                }
                Ok(())
            }
        }
    }

    /// Upper bound on `k(z, z)` over the kernel's domain, when one is known
    /// (`None` for uncapped linear/quadratic kernels).
    pub fn variance_bound(&self) -> Option<f64> {
        match self {
            KernelSpec::Linear { variance_cap, .. } | KernelSpec::Quadratic { variance_cap, .. } => {
                variance_cap.map(|_| 1.0)
            }
            KernelSpec::SquaredExponential { .. } | KernelSpec::Matern { .. } | KernelSpec::IndexDelta { .. } => {
                Some(1.0)
            }
            KernelSpec::Sum { left, right, .. } => Some(left.variance_bound()? + right.variance_bound()?),
            KernelSpec::Product { left, right, .. } => Some(left.variance_bound()? * right.variance_bound()?),
        }
    }

    /// Checks that `x` has the right dimension, is finite and carries valid
    /// index slots.
    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::input(format!(
                "point has dimension {}, kernel expects {}",
                x.len(),
                self.dim()
            )));
        }
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::input(format!("non-finite coordinate {v}")));
        }
        self.check_indices(x)
    }

    fn check_indices(&self, x: &[f64]) -> Result<()> {
        match self {
            KernelSpec::IndexDelta { cardinality } => {
                let idx = x[0].round();
                if idx < 0.0 || idx >= *cardinality as f64 || (x[0] - idx).abs() > 1e-9 {
                    return Err(Error::input(format!(
                        "index slot {} is not an integer in 0..{cardinality}",
                        x[0]
                    )));
                }
                Ok(())
            }
            KernelSpec::Sum { left, right, domain } | KernelSpec::Product { left, right, domain } => {
                if domain.is_factored() {
                    let (a, b) = x.split_at(left.dim());
                    left.check_indices(a)?;
                    right.check_indices(b)
                } else {
                    left.check_indices(x)?;
                    right.check_indices(x)
                }
            }
            _ => Ok(()),
        }
    }

    /// `k(x, y)` with input validation.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(self.eval_unchecked(x, y))
    }

    /// `k(x, y)` for points already known to be valid.
    pub fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            KernelSpec::Linear { variance_cap, .. } => {
                let v = dot(x, y);
                match variance_cap {
                    Some(r) => v / (r * r),
                    None => v,
                }
            }
            KernelSpec::Quadratic { variance_cap, .. } => {
                let v = dot(x, y).powi(2);
                match variance_cap {
                    Some(r) => v / r.powi(4),
                    None => v,
                }
            }
            KernelSpec::SquaredExponential { lengthscale, .. } => {
                (-sq_dist(x, y) / (2.0 * lengthscale * lengthscale)).exp()
            }
            KernelSpec::Matern { nu, lengthscale, .. } => {
                let r = sq_dist(x, y).sqrt() / lengthscale;
                match matern_order(*nu) {
                    Some(MaternOrder::Half) => (-r).exp(),
                    Some(MaternOrder::ThreeHalves) => {
                        let s = 3f64.sqrt() * r;
                        (1.0 + s) * (-s).exp()
                    }
                    Some(MaternOrder::FiveHalves) => {
                        let s = 5f64.sqrt() * r;
                        (1.0 + s + s * s / 3.0) * (-s).exp()
                    }
                    None => f64::NAN,
                }
            }
            KernelSpec::IndexDelta { .. } => {
                if x[0].round() == y[0].round() {
                    1.0
                } else {
                    0.0
                }
            }
            KernelSpec::Sum { left, right, domain } => {
                if domain.is_factored() {
                    let d = left.dim();
                    left.eval_unchecked(&x[..d], &y[..d]) + right.eval_unchecked(&x[d..], &y[d..])
                } else {
                    left.eval_unchecked(x, y) + right.eval_unchecked(x, y)
                }
            }
            KernelSpec::Product { left, right, domain } => {
                if domain.is_factored() {
                    let d = left.dim();
                    let a = left.eval_unchecked(&x[..d], &y[..d]);
                    if a == 0.0 {
                        return 0.0;
                    }
                    a * right.eval_unchecked(&x[d..], &y[d..])
                } else {
                    left.eval_unchecked(x, y) * right.eval_unchecked(x, y)
                }
            }
        }
    }

    pub fn check_points(&self, points: &[Vec<f64>]) -> Result<()> {
        points.iter().try_for_each(|p| self.check_point(p))
    }

    /// Symmetric Gram matrix `[k(x_i, x_j)]`.
    pub fn gram(&self, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        if points.is_empty() {
            return Err(Error::input("gram needs at least one point"));
        }
        self.check_points(points)?;
        Ok(self.gram_unchecked(points))
    }

    pub(crate) fn gram_unchecked(&self, points: &[Vec<f64>]) -> DMatrix<f64> {
        let n = points.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = self.eval_unchecked(&points[i], &points[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    /// Cross-covariance matrix `[k(x_i, y_j)]`.
    pub fn cross(&self, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        self.check_points(xs)?;
        self.check_points(ys)?;
        Ok(DMatrix::from_fn(xs.len(), ys.len(), |i, j| {
            self.eval_unchecked(&xs[i], &ys[j])
        }))
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let k: KernelSpec = toml::from_str(s).map_err(|e| Error::config(format!("kernel spec: {e}")))?;
        k.validate()?;
        Ok(k)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("kernel specs always serialize")
    }
}

/// `f(z) = sum_i alpha_i k(center_i, z)`, a finite member of the RKHS of `kernel`.
#[derive(Debug, Clone, PartialEq)]
pub struct RkhsFunction {
    pub kernel: KernelSpec,
    pub centers: Vec<Vec<f64>>,
    pub coefficients: Vec<f64>,
}

impl RkhsFunction {
    pub fn new(kernel: KernelSpec, centers: Vec<Vec<f64>>, coefficients: Vec<f64>) -> Result<Self> {
        kernel.validate()?;
        if centers.is_empty() || centers.len() != coefficients.len() {
            return Err(Error::input(format!(
                "need equal, nonzero numbers of centers and coefficients ({} vs {})",
                centers.len(),
                coefficients.len()
            )));
        }
        kernel.check_points(&centers)?;
        Ok(RkhsFunction {
            kernel,
            centers,
            coefficients,
        })
    }

    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        self.kernel.check_point(z)?;
        Ok(self.eval_unchecked(z))
    }

    pub fn eval_unchecked(&self, z: &[f64]) -> f64 {
        self.centers
            .iter()
            .zip(&self.coefficients)
            .map(|(c, a)| a * self.kernel.eval_unchecked(c, z))
            .sum()
    }

    /// `sqrt(alpha^T K alpha)`.
    pub fn rkhs_norm(&self) -> f64 {
        quad_form(&self.kernel.gram_unchecked(&self.centers), &self.coefficients)
            .max(0.0)
            .sqrt()
    }

    pub fn scale(&mut self, c: f64) {
        self.coefficients.iter_mut().for_each(|a| *a *= c);
    }
}

fn quad_form(k: &DMatrix<f64>, a: &[f64]) -> f64 {
    let n = a.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += a[i] * k[(i, j)] * a[j];
        }
    }
    s
}

/// Draws an RKHS member with `n_centers` uniform centers in `domain` and
/// Gaussian coefficients, rescaled to have RKHS norm exactly `norm_bound`.
pub fn rkhs_sample<R: Rng + ?Sized>(
    kernel: &KernelSpec,
    domain: &Domain,
    n_centers: usize,
    norm_bound: f64,
    rng: &mut R,
) -> Result<RkhsFunction> {
    kernel.validate()?;
    if n_centers == 0 {
        return Err(Error::input("rkhs_sample needs at least one center"));
    }
    if !(norm_bound.is_finite() && norm_bound > 0.0) {
        return Err(Error::input(format!("norm bound must be positive, got {norm_bound}")));
    }
    if domain.dim() != kernel.dim() {
        return Err(Error::input(format!(
            "domain dimension {} does not match kernel dimension {}",
            domain.dim(),
            kernel.dim()
        )));
    }
    let centers = domain.random_mesh(n_centers, rng);
    let coefficients: Vec<f64> = (0..n_centers).map(|_| rng.sample(StandardNormal)).collect();
    let gram = kernel.gram(&centers)?;
    if gram.iter().all(|v| *v == 0.0) {
        return Err(Error::numerical("kernel vanishes on the sampled centers; RKHS member is identically zero"));
    }
    let mut sq = quad_form(&gram, &coefficients);
    if !(sq > 1e-300) {
        let jitter: f64 = coefficients.iter().map(|a| a * a).sum::<f64>() * 1e-10;
        sq = sq.max(0.0) + jitter;
    }
    if !(sq > 0.0) || !sq.is_finite() {
        return Err(Error::numerical("sampled RKHS function has zero norm"));
    }
    let mut f = RkhsFunction {
        kernel: kernel.clone(),
        centers,
        coefficients,
    };
    f.scale(norm_bound / sq.sqrt());
    Ok(f)
}
