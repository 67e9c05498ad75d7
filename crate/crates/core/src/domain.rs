//! Compact boxes and sampling domains.
//!
//! A [`BoxSet`] is an axis-aligned box in R^d (state or action space). A
//! [`Domain`] generalizes it with integer index axes so that the indexed
//! transition domain `Z x {0..m-1}` can be meshed and sampled the same way.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CONTAINS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxSet {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let b = BoxSet { lo, hi };
        b.validate()?;
        Ok(b)
    }

    /// The symmetric box `[-r, r]^dim`.
    pub fn symmetric(dim: usize, r: f64) -> Result<Self> {
        BoxSet::new(vec![-r; dim], vec![r; dim])
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.is_empty() || self.lo.len() != self.hi.len() {
            return Err(Error::input(format!(
                "box bounds must be nonempty and equal length (lo {}, hi {})",
                self.lo.len(),
                self.hi.len()
            )));
        }
        for (i, (l, h)) in self.lo.iter().zip(&self.hi).enumerate() {
            if !l.is_finite() || !h.is_finite() || l > h {
                return Err(Error::input(format!("box axis {i}: need finite lo <= hi, got [{l}, {h}]")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *v >= l - CONTAINS_TOL && *v <= h + CONTAINS_TOL)
    }

    pub fn clip(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (l, h))| v.clamp(*l, *h))
            .collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    /// Euclidean diameter `max ||s - s'||_2` over the box.
    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (h - l).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Largest Euclidean norm of any point in the box.
    pub fn max_norm(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| l.abs().max(h.abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn scaled(&self, c: f64) -> BoxSet {
        BoxSet {
            lo: self.lo.iter().map(|v| v * c).collect(),
            hi: self.hi.iter().map(|v| v * c).collect(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| if h > l { rng.gen_range(*l..=*h) } else { *l })
            .collect()
    }

    /// Regular lattice with `resolution[i]` points along axis `i`, endpoints
    /// included. Ordering is row-major with the last axis varying fastest.
    pub fn lattice(&self, resolution: &[usize]) -> Result<Vec<Vec<f64>>> {
        if resolution.len() != self.dim() || resolution.iter().any(|&r| r == 0) {
            return Err(Error::input(format!(
                "lattice resolution must have {} positive entries",
                self.dim()
            )));
        }
        let axes: Vec<Vec<f64>> = resolution
            .iter()
            .enumerate()
            .map(|(i, &r)| axis_points(self.lo[i], self.hi[i], r))
            .collect();
        Ok(cartesian(&axes))
    }
}

pub(crate) fn axis_points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + step * i as f64).collect()
}

pub(crate) fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::with_capacity(axes.len())];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for v in axis {
                let mut p = prefix.clone();
                p.push(*v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// One coordinate of a sampling domain.
#[derive(Debug, Clone, PartialEq)]
pub enum Axis {
    Range { lo: f64, hi: f64 },
    /// Integer-valued slot taking values `0..cardinality`.
    Index { cardinality: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub axes: Vec<Axis>,
}

impl Domain {
    pub fn from_box(b: &BoxSet) -> Self {
        Domain {
            axes: b
                .lo
                .iter()
                .zip(&b.hi)
                .map(|(l, h)| Axis::Range { lo: *l, hi: *h })
                .collect(),
        }
    }

    pub fn index(cardinality: usize) -> Self {
        Domain {
            axes: vec![Axis::Index { cardinality }],
        }
    }

    pub fn then(mut self, other: Domain) -> Self {
        self.axes.extend(other.axes);
        self
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.axes
            .iter()
            .map(|axis| match *axis {
                Axis::Range { lo, hi } if hi > lo => rng.gen_range(lo..=hi),
                Axis::Range { lo, .. } => lo,
                Axis::Index { cardinality } => rng.gen_range(0..cardinality.max(1)) as f64,
            })
            .collect()
    }

    /// `n` independent uniform draws.
    pub fn random_mesh<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_orders_last_axis_fastest() {
        let b = BoxSet::new(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        let pts = b.lattice(&[2, 3]).unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[0], vec![0.0, 0.0]);
        assert_eq!(pts[1], vec![0.0, 1.0]);
        assert_eq!(pts[3], vec![1.0, 0.0]);
    }

    #[test]
    fn diameter_and_clip() {
        let b = BoxSet::symmetric(2, 1.0).unwrap();
        assert!((b.diameter() - 8f64.sqrt()).abs() < 1e-12);
        assert_eq!(b.clip(&[3.0, -0.5]), vec![1.0, -0.5]);
        assert!((b.scaled(3.0).diameter() - 3.0 * b.diameter()).abs() < 1e-12);
    }

    #[test]
    fn rejects_inverted_box() {
        assert!(BoxSet::new(vec![1.0], vec![0.0]).is_err());
    }
}
