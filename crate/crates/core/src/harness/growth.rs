//! Power-law fits `R(T) ~ c T^p` of cumulative regret curves.

use rand::Rng;

/// Exponent estimate with a bootstrap percentile interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthFit {
    pub p: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Coefficient of determination of the log-log fit.
    pub r_squared: f64,
}

pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Least-squares slope and R^2 of `y` on `x`; `None` if `x` is constant.
pub fn ols(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    // centre on y[0] first so a constant series gives an exact zero slope
    let y0 = y[0];
    let my = y.iter().map(|v| v - y0).sum::<f64>() / n + y0;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * ((b - y0) - (my - y0))).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some((slope, my - slope * mx, r2))
}

/// Fits `ln R` against `ln T` on the points `(ts[i], values[i])` with
/// positive values. Fewer than two usable points give `p = 0`.
pub fn fit_power_law<R: Rng + ?Sized>(ts: &[f64], values: &[f64], rng: &mut R) -> GrowthFit {
    let (x, y): (Vec<f64>, Vec<f64>) = ts
        .iter()
        .zip(values)
        .filter(|(t, v)| **t > 0.0 && **v > 0.0 && v.is_finite())
        .map(|(t, v)| (t.ln(), v.ln()))
        .unzip();
    let Some((p, _, r_squared)) = ols(&x, &y) else {
        return GrowthFit {
            p: 0.0,
            ci_lo: 0.0,
            ci_hi: 0.0,
            r_squared: 1.0,
        };
    };
    let n = x.len();
    let mut slopes = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut bx = vec![0.0; n];
    let mut by = vec![0.0; n];
    for _ in 0..BOOTSTRAP_RESAMPLES {
        for k in 0..n {
            let i = rng.gen_range(0..n);
            bx[k] = x[i];
            by[k] = y[i];
        }
        if let Some((s, _, _)) = ols(&bx, &by) {
            slopes.push(s);
        }
    }
    let (ci_lo, ci_hi) = if slopes.is_empty() {
        (p, p)
    } else {
        slopes.sort_by(f64::total_cmp);
        (percentile(&slopes, 0.025), percentile(&slopes, 0.975))
    };
    GrowthFit {
        p,
        ci_lo,
        ci_hi,
        r_squared,
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Fit over the second half of the episodes of a cumulative-regret series,
/// with `T = l H` for episode `l` (1-based).
pub fn fit_growth_exponent<R: Rng + ?Sized>(cum_regret: &[f64], horizon: usize, rng: &mut R) -> GrowthFit {
    let n = cum_regret.len();
    let start = n / 2;
    let ts: Vec<f64> = (start..n).map(|i| ((i + 1) * horizon) as f64).collect();
    fit_power_law(&ts, &cum_regret[start..], rng)
}
