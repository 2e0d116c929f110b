use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::math::RegressionFn;
use crate::points::PointSet;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "Gauss-Legendre order must be positive");
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n
        let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(order, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(order, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let dp = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Composite Gauss–Legendre rule on `[lo, hi]` with equal panels.
pub fn composite_gauss_legendre(lo: f64, hi: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(order);
    let h = (hi - lo) / panels as f64;
    let mut xs = Vec::with_capacity(panels * order);
    let mut ws = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let mid = lo + (p as f64 + 0.5) * h;
        for (x, w) in gx.iter().zip(&gw) {
            xs.push(mid + 0.5 * h * x);
            ws.push(0.5 * h * w);
        }
    }
    (xs, ws)
}

/// Quadrature rule on `[0,1]^d`.
///
/// Tensor midpoint grids remember their per-axis coordinates, which lets
/// product-form integrands be evaluated axis by axis.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    points: PointSet,
    weights: Vec<f64>,
    axis: Option<Vec<f64>>,
}

impl QuadratureGrid {
    /// Midpoint tensor grid with `per_axis` cells per coordinate and uniform
    /// weights summing to one.
    pub fn midpoint(dim: usize, per_axis: usize) -> Result<Self> {
        if dim == 0 || per_axis == 0 {
            return Err(Error::input("grid needs positive dimension and resolution"));
        }
        let total = per_axis
            .checked_pow(dim as u32)
            .filter(|&t| t <= 1 << 24)
            .ok_or_else(|| Error::input(format!("grid {per_axis}^{dim} is too large")))?;
        let axis: Vec<f64> = (0..per_axis).map(|i| (i as f64 + 0.5) / per_axis as f64).collect();
        let mut data = Vec::with_capacity(total * dim);
        for p in 0..total {
            let mut rem = p;
            let start = data.len();
            data.resize(start + dim, 0.0);
            for k in (0..dim).rev() {
                data[start + k] = axis[rem % per_axis];
                rem /= per_axis;
            }
        }
        Ok(Self {
            points: PointSet::new(dim, data)?,
            weights: vec![1.0 / total as f64; total],
            axis: Some(axis),
        })
    }

    /// The default resolution: 512 points for `d = 1`, 64 per axis for
    /// `d = 2`, 16 per axis beyond.
    pub fn default_for(dim: usize) -> Result<Self> {
        let per_axis = match dim {
            1 => 512,
            2 => 64,
            _ => 16,
        };
        Self::midpoint(dim, per_axis)
    }

    /// Arbitrary rule (for instance a low-discrepancy set).
    pub fn from_parts(points: PointSet, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::input("one weight per quadrature point is required"));
        }
        if !points.in_unit_cube() {
            return Err(Error::input("quadrature points must lie in [0,1]^d"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::input("quadrature weights must be finite and nonnegative"));
        }
        Ok(Self {
            points,
            weights,
            axis: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Per-axis coordinates for tensor grids.
    pub fn axis(&self) -> Option<&[f64]> {
        self.axis.as_deref()
    }

    pub fn eval<F: RegressionFn + ?Sized>(&self, f: &F) -> Vec<f64> {
        self.points.iter().map(|x| f.eval(x)).collect()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// `Σ w_i f(x_i)^2`.
    pub fn l2_norm_sq(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        self.weights.iter().zip(values).map(|(w, v)| w * v * v).sum()
    }

    /// `Σ w_i |f(x_i)|`.
    pub fn l1_norm(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        self.weights.iter().zip(values).map(|(w, v)| w * v.abs()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::from_fn;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(8);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // ∫ x^14 over [-1, 1] = 2/15
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((s - 2.0 / 15.0).abs() < 1e-14);
        let (x, w) = gauss_legendre(1);
        assert_eq!((x[0], w[0]), (0.0, 2.0));
        let (x, w) = composite_gauss_legendre(0.0, PI, 16, 8);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.sin()).sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn midpoint_grid_examples() {
        let g = QuadratureGrid::default_for(1).unwrap();
        assert_eq!(g.len(), 512);
        assert!((g.l2_norm_sq(&vec![1.0; 512]) - 1.0).abs() < 1e-14);
        let x = g.eval(&from_fn(1, |x| x[0]));
        assert!((g.l2_norm_sq(&x) - 1.0 / 3.0).abs() < 1e-5);
        let s = g.eval(&from_fn(1, |x| (2.0 * PI * x[0]).sin()));
        assert!((g.l2_norm_sq(&s) - 0.5).abs() < 1e-5);
    }

    #[test]
    fn tensor_layout_has_last_axis_fastest() {
        let g = QuadratureGrid::midpoint(2, 4).unwrap();
        assert_eq!(g.points().row(1), &[0.125, 0.375]);
        assert_eq!(g.points().row(4), &[0.375, 0.125]);
        assert!((g.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(g.points().in_unit_cube());
    }

    #[test]
    fn rejects_points_outside_cube() {
        let p = PointSet::from_scalars(&[0.5, 1.5]);
        assert!(QuadratureGrid::from_parts(p, vec![0.5, 0.5]).is_err());
    }
}
