use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math::{RegressionFn, SeKernel};
use crate::points::PointSet;

/// Finite kernel expansion `h = Σ_j w_j c_a(·, t_j)`.
///
/// Norms and evaluations are exact: `‖h‖²_H = wᵀ K w` by the reproducing
/// property, with `K` the jitter-free kernel matrix of the centers.
#[derive(Debug, Clone, PartialEq)]
pub struct RkhsElement {
    kernel: SeKernel,
    centers: PointSet,
    weights: Vec<f64>,
}

impl RkhsElement {
    /// Builds an expansion, merging exactly repeated centers.
    pub fn new(kernel: SeKernel, centers: PointSet, weights: Vec<f64>) -> Result<Self> {
        if centers.dim() != kernel.dim() {
            return Err(Error::input(format!(
                "centers of dimension {} for a kernel of dimension {}",
                centers.dim(),
                kernel.dim()
            )));
        }
        if centers.len() != weights.len() {
            return Err(Error::input("one weight per center is required"));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::input("weights must be finite"));
        }
        let mut uniq = PointSet::empty(kernel.dim());
        let mut w: Vec<f64> = Vec::with_capacity(weights.len());
        for (t, &wt) in centers.iter().zip(&weights) {
            let found = uniq.iter().position(|u| u == t);
            match found {
                Some(k) => w[k] += wt,
                None => {
                    uniq.push(t);
                    w.push(wt);
                }
            }
        }
        Ok(Self {
            kernel,
            centers: uniq,
            weights: w,
        })
    }

    /// The zero element.
    pub fn zero(kernel: SeKernel) -> Self {
        Self {
            kernel,
            centers: PointSet::empty(kernel.dim()),
            weights: Vec::new(),
        }
    }

    /// Random expansion with `m` uniform centers in `[0,1]^d` and Gaussian
    /// weights, rescaled to RKHS norm `target_norm`.
    pub fn random<R: Rng + ?Sized>(kernel: SeKernel, m: usize, target_norm: f64, rng: &mut R) -> Result<Self> {
        if m == 0 {
            return Err(Error::input("a random expansion needs at least one center"));
        }
        let d = kernel.dim();
        let centers: Vec<f64> = (0..m * d).map(|_| rng.random::<f64>()).collect();
        let weights: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let h = Self::new(kernel, PointSet::new(d, centers)?, weights)?;
        h.scaled_to(target_norm)
    }

    /// Copy rescaled to the given RKHS norm.
    pub fn scaled_to(&self, target_norm: f64) -> Result<Self> {
        let norm = self.norm();
        if norm == 0.0 {
            return Err(Error::input("cannot rescale the zero element"));
        }
        let s = target_norm / norm;
        Ok(Self {
            kernel: self.kernel,
            centers: self.centers.clone(),
            weights: self.weights.iter().map(|w| w * s).collect(),
        })
    }

    pub fn kernel(&self) -> &SeKernel {
        &self.kernel
    }

    pub fn centers(&self) -> &PointSet {
        &self.centers
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `h(x)`; `x` must have the kernel's dimension.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.centers
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| w * self.kernel.k(x, t))
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        let m = self.weights.len();
        let mut s = 0.0;
        for j in 0..m {
            let wj = self.weights[j];
            s += wj * wj;
            for k in 0..j {
                s += 2.0 * wj * self.weights[k] * self.kernel.k(self.centers.row(j), self.centers.row(k));
            }
        }
        // rounding can push an almost-null quadratic form below zero
        s.max(0.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `Σ_j |w_j|`, an upper bound on `sup |h|`.
    pub fn weight_l1(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }
}

impl RegressionFn for RkhsElement {
    fn dim(&self) -> usize {
        self.kernel.dim()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.value(x)
    }

    /// `|h(x)| = |<h, c(·,x)>_H| ≤ ‖h‖_H`, and also `≤ Σ|w_j|`.
    fn sup_bound(&self) -> Option<f64> {
        Some(self.norm().min(self.weight_l1()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::kernel_matrix;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn norm_examples() {
        let k = SeKernel::new(4.0, 1).unwrap();
        let one = RkhsElement::new(k, PointSet::from_scalars(&[0.4]), vec![1.0]).unwrap();
        assert!((one.norm() - 1.0).abs() < 1e-15);
        assert_eq!(RkhsElement::zero(k).norm(), 0.0);
        let zero_w = RkhsElement::new(k, PointSet::from_scalars(&[0.1, 0.9]), vec![0.0, 0.0]).unwrap();
        assert_eq!(zero_w.norm(), 0.0);
        let two = RkhsElement::new(k, PointSet::from_scalars(&[0.3, 0.7]), vec![1.0, 1.0]).unwrap();
        assert!((two.norm() - (2.0 + 2.0 * (-2.56f64).exp()).sqrt()).abs() < 1e-12);
        assert!((two.norm() - 1.467_859).abs() < 1e-6);
    }

    #[test]
    fn duplicate_centers_merge() {
        let k = SeKernel::new(2.0, 1).unwrap();
        let h = RkhsElement::new(k, PointSet::from_scalars(&[0.5, 0.5, 0.2]), vec![1.0, 2.0, 1.0]).unwrap();
        assert_eq!(h.centers().len(), 2);
        assert_eq!(h.weights(), &[3.0, 1.0]);
    }

    #[test]
    fn random_hits_target_norm() {
        let k = SeKernel::new(8.0, 2).unwrap();
        let mut rng = seed::rng(3);
        let h = RkhsElement::random(k, 12, 2.5, &mut rng).unwrap();
        assert!((h.norm() - 2.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn reproducing_property(
            a in 0.5f64..32.0,
            ts in prop::collection::vec(0.0f64..1.0, 1..12),
            seed in any::<u64>(),
        ) {
            let k = SeKernel::new(a, 1).unwrap();
            let mut rng = seed::rng(seed);
            let w: Vec<f64> = ts.iter().map(|_| rng.sample(StandardNormal)).collect();
            let h = RkhsElement::new(k, PointSet::from_scalars(&ts), w).unwrap();
            let km = kernel_matrix(&k, h.centers()).unwrap();
            for i in 0..h.centers().len() {
                let row: f64 = (0..h.weights().len()).map(|j| km[(i, j)] * h.weights()[j]).sum();
                prop_assert!((h.value(h.centers().row(i)) - row).abs() < 1e-12);
            }
            prop_assert!(h.norm_sq() >= 0.0);
        }
    }
}
