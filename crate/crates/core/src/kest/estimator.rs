use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kest::FlatTopKernel;
use crate::math::{composite_gauss_legendre, QuadratureGrid, RegressionFn};
use crate::points::PointSet;
use crate::synth::{CovariateDensity, Dataset};

/// Tail mass of `|ψ₁|` ignored when defining the boundary margin.
pub const SUPPORT_TOL: f64 = 1e-6;

/// Bandwidth plus the shared flat-top kernel.
#[derive(Debug, Clone)]
pub struct SmootherConfig {
    sigma: f64,
    kernel: Arc<FlatTopKernel>,
}

/// Integration region for the bias functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    /// All of `[0,1]^d`.
    Full,
    /// `[margin, 1 − margin]^d`.
    Interior { margin: f64 },
}

impl SmootherConfig {
    pub fn new(sigma: f64, kernel: Arc<FlatTopKernel>) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::input(format!("bandwidth must be positive, got {sigma}")));
        }
        Ok(Self { sigma, kernel })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn kernel(&self) -> &FlatTopKernel {
        &self.kernel
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    /// Region that avoids the boundary layer: the margin is `σ` times the
    /// radius outside which `ψ₁` carries less than [`SUPPORT_TOL`] of `L1`
    /// mass.
    pub fn interior(&self) -> Region {
        Region::Interior {
            margin: self.sigma * self.kernel.effective_support(SUPPORT_TOL),
        }
    }

    /// `ψ_σ(t) = σ^{-d} Π_j ψ₁(t_j/σ)`.
    pub fn psi_sigma(&self, t: &[f64]) -> f64 {
        let inv = 1.0 / self.sigma;
        t.iter().map(|&v| self.kernel.psi1(v * inv) * inv).product()
    }

    /// `(1/n) Σ_i ψ_σ(x − X_i) c_i` at every row of `points`.
    pub fn smooth_on(&self, design: &PointSet, coeffs: &[f64], points: &PointSet) -> Vec<f64> {
        debug_assert_eq!(design.len(), coeffs.len());
        let n = design.len() as f64;
        let mut diff = vec![0.0; points.dim()];
        points
            .iter()
            .map(|x| {
                let mut s = 0.0;
                for (xi, c) in design.iter().zip(coeffs) {
                    for k in 0..diff.len() {
                        diff[k] = x[k] - xi[k];
                    }
                    s += self.psi_sigma(&diff) * c;
                }
                s / n
            })
            .collect()
    }

    /// `f̃_n(x) = (1/n) Σ_i ψ_σ(x − X_i) Y_i`.
    pub fn f_tilde(&self, data: &Dataset, x: &[f64]) -> Result<f64> {
        self.check_data(data)?;
        let p = PointSet::new(x.len(), x.to_vec())?;
        Ok(self.smooth_on(&data.x, &data.y, &p)[0])
    }

    pub fn f_tilde_on(&self, data: &Dataset, points: &PointSet) -> Result<Vec<f64>> {
        self.check_data(data)?;
        Ok(self.smooth_on(&data.x, &data.y, points))
    }

    /// `f_n^X(x) = (1/n) Σ_i ψ_σ(x − X_i) f(X_i)`.
    pub fn f_conv_empirical<F: RegressionFn + ?Sized>(&self, f: &F, design: &PointSet, points: &PointSet) -> Result<Vec<f64>> {
        if design.is_empty() {
            return Err(Error::input("empty design"));
        }
        let fx: Vec<f64> = design.iter().map(|x| f.eval(x)).collect();
        Ok(self.smooth_on(design, &fx, points))
    }

    /// `ψ_σ ⋆ f` at every row of `points`, with `f` extended by zero outside
    /// `[0,1]^d`.
    pub fn f_conv_on<F: RegressionFn + ?Sized>(&self, f: &F, points: &PointSet) -> Vec<f64> {
        ConvRule::new(self, f, None).eval_all(points)
    }

    pub fn f_conv<F: RegressionFn + ?Sized>(&self, f: &F, x: &[f64]) -> Result<f64> {
        let p = PointSet::new(x.len(), x.to_vec())?;
        Ok(self.f_conv_on(f, &p)[0])
    }

    /// `E_X ψ_σ(x − X) f(X) = ∫ ψ_σ(x − t) f(t) q(t) dt`, the full mean of the
    /// estimator under a general covariate density.
    pub fn f_conv_q_on<F: RegressionFn + ?Sized>(&self, f: &F, q: &CovariateDensity, points: &PointSet) -> Vec<f64> {
        ConvRule::new(self, f, Some(q)).eval_all(points)
    }

    /// `‖ψ_σ ⋆ f − f‖_1` by quadrature on `grid`, optionally restricted.
    pub fn bias_l1<F: RegressionFn + ?Sized>(&self, f: &F, grid: &QuadratureGrid, region: Region) -> f64 {
        let conv = self.f_conv_on(f, grid.points());
        grid.points()
            .iter()
            .zip(grid.weights())
            .zip(conv)
            .filter(|((x, _), _)| region.contains(x))
            .map(|((x, w), c)| w * (c - f.eval(x)).abs())
            .sum()
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.is_empty() {
            return Err(Error::input("empty dataset"));
        }
        if data.dim() != self.dim() {
            return Err(Error::input("dataset and kernel dimensions differ"));
        }
        Ok(())
    }
}

impl Region {
    pub fn contains(&self, x: &[f64]) -> bool {
        match *self {
            Region::Full => true,
            Region::Interior { margin } => x.iter().all(|&v| v >= margin && v <= 1.0 - margin),
        }
    }
}

/// Tensor Gauss–Legendre rule on `[0,1]^d` carrying `f · q · weights`.
///
/// Panels are no wider than `σ`, so the band-limited factor `ψ_σ(x − ·)`
/// changes phase by at most 2 radians per 8-point panel.
struct ConvRule<'a> {
    cfg: &'a SmootherConfig,
    nodes: Vec<f64>,
    /// Weighted integrand on the tensor product, last axis fastest.
    values: Vec<f64>,
}

impl<'a> ConvRule<'a> {
    fn new<F: RegressionFn + ?Sized>(cfg: &'a SmootherConfig, f: &F, q: Option<&CovariateDensity>) -> Self {
        let d = cfg.dim();
        let panels = ((1.0 / cfg.sigma).ceil() as usize).max(16);
        let (nodes, w) = composite_gauss_legendre(0.0, 1.0, panels, 8);
        let m = nodes.len();
        let total = m.pow(d as u32);
        let mut x = vec![0.0; d];
        let values = (0..total)
            .map(|p| {
                let mut rem = p;
                let mut weight = 1.0;
                for k in (0..d).rev() {
                    let i = rem % m;
                    rem /= m;
                    x[k] = nodes[i];
                    weight *= w[i];
                }
                let qv = q.map_or(1.0, |q| q.density(&x));
                weight * qv * f.eval(&x)
            })
            .collect();
        Self { cfg, nodes, values }
    }

    fn eval_all(&self, points: &PointSet) -> Vec<f64> {
        let d = points.dim();
        let m = self.nodes.len();
        let reach = self.cfg.sigma * self.cfg.kernel.t_max();
        let mut factors = vec![vec![0.0; m]; d];
        points
            .iter()
            .map(|x| {
                for k in 0..d {
                    for (fk, &t) in factors[k].iter_mut().zip(&self.nodes) {
                        let u = x[k] - t;
                        *fk = if u.abs() > reach { 0.0 } else { self.cfg.psi_sigma(&[u]) };
                    }
                }
                contract(&factors, &self.values, m)
            })
            .collect()
    }
}

/// `Σ_{i_1..i_d} Π_k a_k[i_k] · v[i_1..i_d]`, skipping zero factors.
fn contract(factors: &[Vec<f64>], values: &[f64], m: usize) -> f64 {
    let d = factors.len();
    if d == 1 {
        return factors[0].iter().zip(values).map(|(a, v)| a * v).sum();
    }
    let block = m.pow((d - 1) as u32);
    factors[0]
        .iter()
        .enumerate()
        .filter(|(_, a)| **a != 0.0)
        .map(|(i, a)| a * contract(&factors[1..], &values[i * block..(i + 1) * block], m))
        .sum()
}

/// `1(‖f̃_n − f0‖_1 > M ε_n / 2)` with the norm by quadrature.
pub fn test_phi(f_tilde_vals: &[f64], f0_vals: &[f64], m: f64, eps_n: f64, grid: &QuadratureGrid) -> bool {
    let diff: Vec<f64> = f_tilde_vals.iter().zip(f0_vals).map(|(a, b)| a - b).collect();
    grid.l1_norm(&diff) > 0.5 * m * eps_n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kest::{build_psi, FlatTopSpec, Profile};
    use crate::math::{from_fn, Constant};
    use std::f64::consts::PI;
    use std::sync::OnceLock;

    fn bump() -> Arc<FlatTopKernel> {
        static K: OnceLock<Arc<FlatTopKernel>> = OnceLock::new();
        K.get_or_init(|| Arc::new(build_psi(&FlatTopSpec::default()).unwrap())).clone()
    }

    fn trapezoid() -> Arc<FlatTopKernel> {
        Arc::new(build_psi(&FlatTopSpec::with_profile(Profile::Trapezoid, 1)).unwrap())
    }

    #[test]
    fn psi_sigma_examples() {
        let k = trapezoid();
        let c = SmootherConfig::new(1.0, k.clone()).unwrap();
        assert!((c.psi_sigma(&[0.0]) - 0.477_465).abs() < 1e-6);
        let c = SmootherConfig::new(0.5, k.clone()).unwrap();
        assert!((c.psi_sigma(&[0.0]) - 0.954_930).abs() < 1e-6);
        assert_eq!(c.psi_sigma(&[0.5 * k.t_max() + 1e-9]), 0.0);
        assert!(SmootherConfig::new(0.0, k).is_err());
    }

    #[test]
    fn f_tilde_single_point_and_linearity() {
        let c = SmootherConfig::new(1.0, trapezoid()).unwrap();
        let x = PointSet::from_scalars(&[0.3]);
        let d = Dataset::new(x.clone(), vec![2.0], 1.0, 0).unwrap();
        assert!((c.f_tilde(&d, &[0.3]).unwrap() - 0.954_930).abs() < 1e-6);
        let xs = PointSet::from_scalars(&[0.1, 0.4, 0.8]);
        let y1 = vec![0.5, -1.0, 2.0];
        let y2 = vec![1.5, 0.25, -0.5];
        let ys: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| a + b).collect();
        let p = PointSet::from_scalars(&[0.0, 0.35, 0.9]);
        let f = |y: &Vec<f64>| c.f_tilde_on(&Dataset::new(xs.clone(), y.clone(), 1.0, 0).unwrap(), &p).unwrap();
        let (a, b, s) = (f(&y1), f(&y2), f(&ys));
        for i in 0..3 {
            assert!((a[i] + b[i] - s[i]).abs() < 1e-14);
        }
        assert!(f(&vec![0.0; 3]).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn f_conv_identities() {
        let c = SmootherConfig::new(1e-3, bump()).unwrap();
        let zero = Constant { value: 0.0, dim: 1 };
        assert_eq!(c.f_conv(&zero, &[0.4]).unwrap(), 0.0);
        let f = from_fn(1, |x: &[f64]| (2.0 * PI * x[0]).sin() + x[0] * x[0]);
        for x in [0.3, 0.5, 0.77] {
            assert!((c.f_conv(&f, &[x]).unwrap() - f.eval(&[x])).abs() < 1e-3);
        }
    }

    #[test]
    fn constants_are_reproduced_in_the_interior() {
        let c = SmootherConfig::new(0.002, bump()).unwrap();
        let one = Constant { value: 1.0, dim: 1 };
        let grid = QuadratureGrid::default_for(1).unwrap();
        let Region::Interior { margin } = c.interior() else { unreachable!() };
        assert!(margin > 0.0 && margin < 0.25);
        assert!(c.bias_l1(&one, &grid, c.interior()) <= 2e-6);
        // the boundary layer makes the full-cube bias visible
        assert!(c.bias_l1(&one, &grid, Region::Full) > 1e-4);
        assert_eq!(c.bias_l1(&zero_fn(), &grid, Region::Full), 0.0);
    }

    fn zero_fn() -> Constant {
        Constant { value: 0.0, dim: 1 }
    }

    #[test]
    fn weighted_convolution_uses_density() {
        let c = SmootherConfig::new(0.002, bump()).unwrap();
        let q = CovariateDensity::piecewise(1, vec![0.0, 0.5, 1.0], vec![0.25, 0.75]).unwrap();
        let one = Constant { value: 1.0, dim: 1 };
        let p = PointSet::from_scalars(&[0.25, 0.75]);
        let v = c.f_conv_q_on(&one, &q, &p);
        assert!((v[0] - 0.5).abs() < 1e-6 && (v[1] - 1.5).abs() < 1e-6);
    }

    #[test]
    fn two_dimensional_convolution_factorizes() {
        let k = Arc::new(build_psi(&FlatTopSpec::with_profile(Profile::SmoothBump, 2)).unwrap());
        let c2 = SmootherConfig::new(0.05, k).unwrap();
        let c1 = SmootherConfig::new(0.05, bump()).unwrap();
        let g1 = from_fn(1, |x: &[f64]| (3.0 * x[0]).cos());
        let g2 = from_fn(2, |x: &[f64]| (3.0 * x[0]).cos() * (3.0 * x[1]).cos());
        let a = c1.f_conv(&g1, &[0.3]).unwrap();
        let b = c1.f_conv(&g1, &[0.6]).unwrap();
        let ab = c2.f_conv(&g2, &[0.3, 0.6]).unwrap();
        assert!((a * b - ab).abs() < 1e-12);
    }

    #[test]
    fn phi_examples() {
        let grid = QuadratureGrid::default_for(1).unwrap();
        let f0 = vec![0.3; grid.len()];
        assert!(!test_phi(&f0, &f0, 2.0, 0.1, &grid));
        let shifted: Vec<f64> = f0.iter().map(|v| v + 2.0 * 0.1).collect();
        assert!(test_phi(&shifted, &f0, 2.0, 0.1, &grid));
    }
}
