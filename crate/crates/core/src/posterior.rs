//! Exact conjugate GP posterior, path sampling and the `L1(q)` functional.

use std::io::{self, Write};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math::{cross_matrix, factor_with_escalation, kernel_matrix, QuadratureGrid, SeKernel, DEFAULT_JITTER};
use crate::points::PointSet;
use crate::seed;
use crate::stats;
use crate::synth::{CovariateDensity, Dataset};

/// Noise variance of the observation model.
pub const NOISE_VARIANCE: f64 = 1.0;

/// Fitted posterior of a zero-mean GP prior under Gaussian noise.
#[derive(Clone, Debug)]
pub struct PosteriorModel {
    kernel: SeKernel,
    x: PointSet,
    noise_var: f64,
    /// Factor of `K + noise_var · I`; `None` for the prior.
    chol: Option<Cholesky<f64, Dyn>>,
    /// `(K + noise_var · I)^{-1} Y`.
    weights: DVector<f64>,
}

/// Posterior mean vector and covariance matrix on a set of points.
#[derive(Clone, Debug)]
pub struct Moments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Monte Carlo estimate of the posterior mass outside the `M ε_n` ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionEstimate {
    pub m: f64,
    pub eps_n: f64,
    pub fraction: f64,
    pub draws: usize,
    pub mc_se: f64,
}

impl ContractionEstimate {
    /// Fraction of precomputed path distances exceeding `m · eps_n`.
    pub fn from_distances(distances: &[f64], m: f64, eps_n: f64) -> Self {
        let r = m * eps_n;
        let draws = distances.len();
        let fraction = if draws == 0 {
            f64::NAN
        } else {
            distances.iter().filter(|&&d| d > r).count() as f64 / draws as f64
        };
        Self {
            m,
            eps_n,
            fraction,
            draws,
            mc_se: stats::binomial_se(fraction, draws),
        }
    }
}

/// Posterior under unit noise variance.
pub fn fit(kernel: &SeKernel, data: &Dataset) -> Result<PosteriorModel> {
    PosteriorModel::fit_with_noise(kernel, data, NOISE_VARIANCE)
}

impl PosteriorModel {
    /// The prior itself: zero mean, covariance `c_a`.
    pub fn prior(kernel: &SeKernel) -> Self {
        Self {
            kernel: *kernel,
            x: PointSet::empty(kernel.dim()),
            noise_var: NOISE_VARIANCE,
            chol: None,
            weights: DVector::zeros(0),
        }
    }

    /// Posterior with a custom noise variance (test hook for the
    /// interpolation limit).
    pub fn fit_with_noise(kernel: &SeKernel, data: &Dataset, noise_var: f64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::input("posterior needs at least one observation"));
        }
        if !(noise_var.is_finite() && noise_var > 0.0) {
            return Err(Error::input(format!("noise variance must be positive, got {noise_var}")));
        }
        let mut k = kernel_matrix(kernel, &data.x)?;
        for i in 0..k.nrows() {
            k[(i, i)] += noise_var;
        }
        let (_, chol, _) = factor_with_escalation(k, 0.0, "posterior Gram")?;
        let weights = chol.solve(&DVector::from_column_slice(&data.y));
        Ok(Self {
            kernel: *kernel,
            x: data.x.clone(),
            noise_var,
            chol: Some(chol),
            weights,
        })
    }

    pub fn kernel(&self) -> &SeKernel {
        &self.kernel
    }

    pub fn design(&self) -> &PointSet {
        &self.x
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// Posterior mean `K_*ᵀ (K + I)^{-1} Y`.
    pub fn mean_on(&self, points: &PointSet) -> Result<Vec<f64>> {
        if self.chol.is_none() {
            self.check(points)?;
            return Ok(vec![0.0; points.len()]);
        }
        let ks = cross_matrix(&self.kernel, &self.x, points)?;
        Ok(ks.tr_mul(&self.weights).iter().copied().collect())
    }

    /// `L^{-1} K_*` for the stored factor `L Lᵀ = K + I`.
    fn whitened_cross(&self, points: &PointSet) -> Result<Option<(DMatrix<f64>, DMatrix<f64>)>> {
        let Some(chol) = &self.chol else {
            return Ok(None);
        };
        let ks = cross_matrix(&self.kernel, &self.x, points)?;
        let v = chol
            .l_dirty()
            .solve_lower_triangular(&ks)
            .ok_or_else(|| Error::Numerical {
                context: "posterior triangular solve".into(),
                jitter: 0.0,
                condition: f64::NAN,
            })?;
        Ok(Some((ks, v)))
    }

    /// Pointwise posterior variances.
    pub fn variance_on(&self, points: &PointSet) -> Result<Vec<f64>> {
        self.check(points)?;
        match self.whitened_cross(points)? {
            None => Ok(vec![1.0; points.len()]),
            Some((_, v)) => Ok(v
                .column_iter()
                .map(|c| (1.0 - c.norm_squared()).max(0.0))
                .collect()),
        }
    }

    /// Posterior mean and symmetrized covariance.
    pub fn moments(&self, points: &PointSet) -> Result<Moments> {
        self.check(points)?;
        let kss = kernel_matrix(&self.kernel, points)?;
        let (mean, mut cov) = match self.whitened_cross(points)? {
            None => (DVector::zeros(points.len()), kss),
            Some((ks, v)) => (ks.tr_mul(&self.weights), kss - v.tr_mul(&v)),
        };
        let g = cov.nrows();
        for i in 0..g {
            for j in 0..i {
                let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = s;
                cov[(j, i)] = s;
            }
        }
        Ok(Moments { mean, cov })
    }

    /// `s` draws of the posterior on `points`; column `j` is path `j`.
    pub fn sample_paths(&self, points: &PointSet, s: usize, seed: u64) -> Result<DMatrix<f64>> {
        if s == 0 {
            return Err(Error::input("at least one path must be drawn"));
        }
        let Moments { mean, cov } = self.moments(points)?;
        let (_, chol, _) = factor_with_escalation(cov, DEFAULT_JITTER, "posterior covariance")?;
        let g = points.len();
        let mut rng = seed::rng(seed::derive(seed, &[seed::stream::PATHS]));
        let z = DMatrix::from_fn(g, s, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut paths = chol.l_dirty().lower_triangle() * z;
        for mut col in paths.column_iter_mut() {
            col += &mean;
        }
        Ok(paths)
    }

    /// CSV with columns `x_1..x_d, mean, sd`.
    pub fn write_summary_csv<W: Write>(&self, points: &PointSet, mut w: W) -> Result<()> {
        let mean = self.mean_on(points)?;
        let var = self.variance_on(points)?;
        let io = |e: io::Error| Error::input(format!("write failed: {e}"));
        let cols: Vec<String> = (1..=points.dim()).map(|k| format!("x_{k}")).collect();
        writeln!(w, "{},mean,sd", cols.join(",")).map_err(io)?;
        for ((x, m), v) in points.iter().zip(&mean).zip(&var) {
            for c in x {
                write!(w, "{c},").map_err(io)?;
            }
            writeln!(w, "{m},{}", v.sqrt()).map_err(io)?;
        }
        Ok(())
    }

    fn check(&self, points: &PointSet) -> Result<()> {
        if points.dim() != self.kernel.dim() {
            return Err(Error::input("query points and kernel dimensions differ"));
        }
        Ok(())
    }
}

/// `∫ |f − f0| q` by quadrature, with the density folded into the weights.
#[derive(Debug, Clone)]
pub struct L1qMetric {
    weights: Vec<f64>,
}

impl L1qMetric {
    pub fn new(grid: &QuadratureGrid, q: &CovariateDensity) -> Self {
        let weights = grid
            .points()
            .iter()
            .zip(grid.weights())
            .map(|(x, w)| w * q.density(x))
            .collect();
        Self { weights }
    }

    pub fn uniform(grid: &QuadratureGrid) -> Self {
        Self {
            weights: grid.weights().to_vec(),
        }
    }

    pub fn distance(&self, f: &[f64], f0: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.weights.len());
        self.weights
            .iter()
            .zip(f)
            .zip(f0)
            .map(|((w, a), b)| w * (a - b).abs())
            .sum()
    }
}

/// `L1` distance under uniform `q`.
pub fn l1q_distance(f_vals: &[f64], f0_vals: &[f64], grid: &QuadratureGrid) -> f64 {
    L1qMetric::uniform(grid).distance(f_vals, f0_vals)
}

/// `L1(q)` distance of each sampled path to `f0`.
pub fn path_distances(
    model: &PosteriorModel,
    f0_vals: &[f64],
    grid: &QuadratureGrid,
    metric: &L1qMetric,
    s: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let paths = model.sample_paths(grid.points(), s, seed)?;
    Ok(paths
        .column_iter()
        .map(|c| metric.distance(c.as_slice(), f0_vals))
        .collect())
}

/// Fraction of `s` posterior paths farther than `m · eps_n` from `f0`.
#[allow(clippy::too_many_arguments)]
pub fn contraction_mass(
    model: &PosteriorModel,
    f0_vals: &[f64],
    grid: &QuadratureGrid,
    metric: &L1qMetric,
    m: f64,
    eps_n: f64,
    s: usize,
    seed: u64,
) -> Result<ContractionEstimate> {
    let d = path_distances(model, f0_vals, grid, metric, s, seed)?;
    Ok(ContractionEstimate::from_distances(&d, m, eps_n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::from_fn;
    use std::f64::consts::PI;

    fn data(xs: &[f64], ys: &[f64]) -> Dataset {
        Dataset::new(PointSet::from_scalars(xs), ys.to_vec(), 1.0, 0).unwrap()
    }

    #[test]
    fn scalar_shrinkage() {
        let k = SeKernel::new(3.0, 1).unwrap();
        let m = fit(&k, &data(&[0.5], &[1.0])).unwrap();
        let mean = m.mean_on(&PointSet::from_scalars(&[0.5])).unwrap();
        assert!((mean[0] - 0.5).abs() < 1e-15);
        assert!(fit(&k, &data(&[], &[])).is_err());
    }

    #[test]
    fn prior_path() {
        let k = SeKernel::new(3.0, 1).unwrap();
        let p = PosteriorModel::prior(&k);
        let pts = PointSet::from_scalars(&[0.1, 0.9]);
        assert_eq!(p.mean_on(&pts).unwrap(), vec![0.0, 0.0]);
        let mo = p.moments(&pts).unwrap();
        assert_eq!(mo.cov[(0, 0)], 1.0);
    }

    #[test]
    fn matches_dense_solve() {
        let k = SeKernel::new(2.0, 1).unwrap();
        let xs = [0.1, 0.45, 0.8];
        let ys = [0.3, -1.2, 0.7];
        let m = fit(&k, &data(&xs, &ys)).unwrap();
        let pts = PointSet::from_scalars(&[0.0, 0.5, 0.66]);
        let mo = m.moments(&pts).unwrap();
        let kx = kernel_matrix(&k, &PointSet::from_scalars(&xs)).unwrap() + DMatrix::identity(3, 3);
        let inv = kx.try_inverse().unwrap();
        let ks = cross_matrix(&k, &PointSet::from_scalars(&xs), &pts).unwrap();
        let mean = ks.transpose() * &inv * DVector::from_column_slice(&ys);
        let cov = kernel_matrix(&k, &pts).unwrap() - ks.transpose() * &inv * &ks;
        assert!((mean - &mo.mean).amax() < 1e-12);
        assert!((cov - &mo.cov).amax() < 1e-12);
    }

    #[test]
    fn far_from_data_recovers_prior() {
        let k = SeKernel::new(50.0, 1).unwrap();
        let m = fit(&k, &data(&[0.0, 0.1], &[3.0, -2.0])).unwrap();
        let pts = PointSet::from_scalars(&[0.9]);
        assert!(m.mean_on(&pts).unwrap()[0].abs() < 1e-6);
        assert!((m.variance_on(&pts).unwrap()[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn interpolation_limit() {
        let k = SeKernel::new(4.0, 1).unwrap();
        let xs = [0.1, 0.5, 0.9];
        let ys = [1.0, -0.5, 0.25];
        let m = PosteriorModel::fit_with_noise(&k, &data(&xs, &ys), 1e-8).unwrap();
        let mean = m.mean_on(&PointSet::from_scalars(&xs)).unwrap();
        for (a, b) in mean.iter().zip(&ys) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn symmetric_design_gives_symmetric_mean() {
        let k = SeKernel::new(3.0, 1).unwrap();
        let m = fit(&k, &data(&[0.2, 0.8], &[1.0, 1.0])).unwrap();
        let mean = m.mean_on(&PointSet::from_scalars(&[0.35, 0.65, 0.1, 0.9])).unwrap();
        assert!((mean[0] - mean[1]).abs() < 1e-10);
        assert!((mean[2] - mean[3]).abs() < 1e-10);
    }

    #[test]
    fn paths_match_moments() {
        let k = SeKernel::new(2.0, 1).unwrap();
        let m = fit(&k, &data(&[0.3, 0.6], &[0.5, -0.5])).unwrap();
        let pts = PointSet::from_scalars(&[0.2, 0.7]);
        let mo = m.moments(&pts).unwrap();
        let s = 100_000;
        let p = m.sample_paths(&pts, s, 11).unwrap();
        let means: Vec<f64> = p.row_iter().map(|r| r.sum() / s as f64).collect();
        for i in 0..2 {
            let sd = mo.cov[(i, i)].sqrt();
            assert!((means[i] - mo.mean[i]).abs() < 4.0 * sd / (s as f64).sqrt());
        }
        for i in 0..2 {
            for j in 0..2 {
                let c: f64 = (0..s)
                    .map(|c| (p[(i, c)] - means[i]) * (p[(j, c)] - means[j]))
                    .sum::<f64>()
                    / (s as f64 - 1.0);
                let v = mo.cov[(i, j)];
                let se = ((mo.cov[(i, i)] * mo.cov[(j, j)] + v * v) / s as f64).sqrt();
                assert!((c - v).abs() < 5.0 * se, "cov ({i},{j}): {c} vs {v}");
            }
        }
        assert_eq!(m.sample_paths(&pts, 1, 5).unwrap(), m.sample_paths(&pts, 1, 5).unwrap());
    }

    #[test]
    fn l1q_examples() {
        let g = QuadratureGrid::default_for(1).unwrap();
        let f0 = g.eval(&from_fn(1, |x: &[f64]| x[0].exp()));
        assert_eq!(l1q_distance(&f0, &f0, &g), 0.0);
        let f: Vec<f64> = f0.iter().map(|v| v + 0.3).collect();
        assert!((l1q_distance(&f, &f0, &g) - 0.3).abs() < 1e-12);
        let s = g.eval(&from_fn(1, |x: &[f64]| (2.0 * PI * x[0]).sin()));
        let z = vec![0.0; g.len()];
        assert!((l1q_distance(&s, &z, &g) - 2.0 / PI).abs() < 1e-5);
    }

    #[test]
    fn contraction_limits() {
        let k = SeKernel::new(4.0, 1).unwrap();
        let m = fit(&k, &data(&[0.3, 0.6], &[0.5, -0.5])).unwrap();
        let g = QuadratureGrid::midpoint(1, 64).unwrap();
        let metric = L1qMetric::uniform(&g);
        let f0 = vec![0.0; g.len()];
        let far = contraction_mass(&m, &f0, &g, &metric, 1.0, f64::INFINITY, 200, 1).unwrap();
        assert_eq!(far.fraction, 0.0);
        let zero = contraction_mass(&m, &f0, &g, &metric, 1.0, 0.0, 200, 1).unwrap();
        assert_eq!(zero.fraction, 1.0);
        assert_eq!(zero.mc_se, 0.0);
    }
}
