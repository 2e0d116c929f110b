use std::f64::consts::PI;

use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};
use crate::points::sq_dist;

/// Squared-exponential covariance `c_a(x, y) = exp(-a^2 |x - y|^2)`.
///
/// `a` is the inverse bandwidth: larger values give rougher sample paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeKernel {
    a: f64,
    dim: usize,
}

impl SeKernel {
    pub fn new(a: f64, dim: usize) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::input(format!("inverse bandwidth must be positive, got {a}")));
        }
        if dim == 0 {
            return Err(Error::input("dimension must be positive"));
        }
        Ok(Self { a, dim })
    }

    #[inline]
    pub fn a(&self) -> f64 {
        self.a
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Checked evaluation.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != self.dim || y.len() != self.dim {
            return Err(Error::input(format!(
                "kernel of dimension {} evaluated at points of dimension {} and {}",
                self.dim,
                x.len(),
                y.len()
            )));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::input("kernel arguments must be finite"));
        }
        Ok(self.k(x, y))
    }

    /// Unchecked evaluation for hot loops; dimensions are the caller's problem.
    #[inline]
    pub fn k(&self, x: &[f64], y: &[f64]) -> f64 {
        (-self.a * self.a * sq_dist(x, y)).exp()
    }

    pub fn spectral(&self) -> SpectralDensity {
        SpectralDensity {
            a: self.a,
            dim: self.dim,
        }
    }
}

/// Spectral density `ω_a(λ) = a^{-d} exp(-|λ/a|^2 / 4) / (2^d π^{d/2})`.
///
/// This is the density of `N(0, 2a^2 I_d)`, so it has unit mass and its tails
/// are chi-square tails.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralDensity {
    a: f64,
    dim: usize,
}

impl SpectralDensity {
    pub fn new(a: f64, dim: usize) -> Result<Self> {
        SeKernel::new(a, dim).map(|k| k.spectral())
    }

    pub fn eval(&self, lambda: &[f64]) -> Result<f64> {
        if lambda.len() != self.dim {
            return Err(Error::input(format!(
                "spectral density of dimension {} evaluated at a point of dimension {}",
                self.dim,
                lambda.len()
            )));
        }
        if lambda.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("frequency must be finite"));
        }
        Ok(self.density(lambda))
    }

    #[inline]
    pub(crate) fn density(&self, lambda: &[f64]) -> f64 {
        let d = self.dim as i32;
        let r2: f64 = lambda.iter().map(|l| l * l).sum::<f64>() / (self.a * self.a);
        self.a.powi(-d) * (-r2 / 4.0).exp() / (2f64.powi(d) * PI.powf(self.dim as f64 / 2.0))
    }

    /// Mass outside the Euclidean ball of the given radius, in closed form.
    pub fn tail_mass(&self, radius: f64) -> f64 {
        if radius <= 0.0 {
            return 1.0;
        }
        if radius.is_infinite() {
            return 0.0;
        }
        // |λ|^2 / (2a^2) ~ chi-square(d)
        let x = radius * radius / (4.0 * self.a * self.a);
        match self.dim {
            1 => erfc(radius / (2.0 * self.a)),
            2 => (-x).exp(),
            d => gamma_ur(d as f64 / 2.0, x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn kernel_examples() {
        let k = SeKernel::new(2.0, 1).unwrap();
        assert_eq!(k.eval(&[0.3], &[0.3]).unwrap(), 1.0);
        assert_abs_diff_eq!(k.eval(&[0.0], &[0.5]).unwrap(), 0.367_879, epsilon = 1e-6);
        let k2 = SeKernel::new(1.0, 2).unwrap();
        assert_abs_diff_eq!(k2.eval(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.135_335, epsilon = 1e-6);
    }

    #[test]
    fn kernel_rejects_bad_input() {
        let k = SeKernel::new(2.0, 2).unwrap();
        assert!(matches!(k.eval(&[0.0], &[0.0, 1.0]), Err(Error::Input(_))));
        assert!(k.eval(&[f64::NAN, 0.0], &[0.0, 1.0]).is_err());
        assert!(SeKernel::new(0.0, 1).is_err());
        assert!(SeKernel::new(1.0, 0).is_err());
    }

    #[test]
    fn spectral_examples() {
        let s = SpectralDensity::new(1.0, 1).unwrap();
        assert_abs_diff_eq!(s.eval(&[0.0]).unwrap(), 0.282_095, epsilon = 1e-6);
        let s = SpectralDensity::new(2.0, 1).unwrap();
        assert_abs_diff_eq!(s.eval(&[0.0]).unwrap(), 0.141_047, epsilon = 1e-6);
        let s = SpectralDensity::new(1.0, 2).unwrap();
        assert_abs_diff_eq!(s.eval(&[0.0, 0.0]).unwrap(), 0.079_577_5, epsilon = 1e-7);
        assert!(s.eval(&[0.0]).is_err());
    }

    #[test]
    fn tail_mass_matches_chi_square_identities() {
        let s1 = SpectralDensity::new(3.0, 1).unwrap();
        let s3 = SpectralDensity::new(3.0, 3).unwrap();
        assert_eq!(s1.tail_mass(0.0), 1.0);
        assert_eq!(s1.tail_mass(f64::INFINITY), 0.0);
        // d = 1 through the incomplete gamma route agrees with erfc
        let x: f64 = 5.0 * 5.0 / (4.0 * 9.0);
        assert_abs_diff_eq!(gamma_ur(0.5, x), s1.tail_mass(5.0), epsilon = 1e-10);
        // d = 3 tail is between the d = 2 and d = 4 tails
        let s2 = SpectralDensity::new(3.0, 2).unwrap();
        let s4 = SpectralDensity::new(3.0, 4).unwrap();
        let r = 7.0;
        assert!(s2.tail_mass(r) < s3.tail_mass(r) && s3.tail_mass(r) < s4.tail_mass(r));
    }
}
