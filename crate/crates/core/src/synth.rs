//! Ground truths, covariate densities and noisy datasets.

use std::f64::consts::{PI, SQRT_2};
use std::io::{self, Write};
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math::{RegressionFn, RkhsElement, SeKernel};
use crate::points::PointSet;
use crate::seed::{self, stream};

/// Inverse bandwidth used by randomly generated RKHS truths.
pub const RKHS_TRUTH_A: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthKind {
    CosineSeries,
    Analytic,
    RkhsExpansion,
}

impl FromStr for TruthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine-series" => Ok(Self::CosineSeries),
            "analytic" => Ok(Self::Analytic),
            "rkhs-expansion" => Ok(Self::RkhsExpansion),
            other => Err(Error::input(format!("unknown truth kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    /// `coeffs[axis][k-1] = amplitude · √2 · ζ_k · k^{-(α+1/2)}`.
    Cosine(Vec<Vec<f64>>),
    Analytic,
    Rkhs(RkhsElement),
}

/// A regression function on `[0,1]^d` with declared smoothness `alpha`.
///
/// `alpha` is metadata: cosine-series coefficients decay like
/// `k^{-(α+1/2)}`, a Sobolev-type proxy rather than a certified Hölder norm.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueFunction {
    kind: TruthKind,
    alpha: f64,
    dim: usize,
    seed: u64,
    repr: Repr,
}

/// `f0(x) = Σ_axes Σ_{k=1}^K k^{-(α+1/2)} ζ_k √2 cos(kπ x_axis)` with seeded
/// Rademacher signs (independent per axis).
pub fn make_truth(kind: TruthKind, alpha: f64, k: usize, dim: usize, seed: u64) -> Result<TrueFunction> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::input(format!("smoothness alpha must be positive, got {alpha}")));
    }
    if dim == 0 {
        return Err(Error::input("dimension must be positive"));
    }
    let mut rng = seed::rng(seed::derive(seed, &[stream::TRUTH]));
    match kind {
        TruthKind::CosineSeries => {
            if k == 0 {
                return Err(Error::input("a cosine series needs at least one term (K >= 1)"));
            }
            let signs: Vec<Vec<f64>> = (0..dim)
                .map(|_| {
                    (0..k)
                        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                        .collect()
                })
                .collect();
            let mut f = TrueFunction::cosine_with_signs(alpha, &signs)?;
            f.seed = seed;
            Ok(f)
        }
        TruthKind::Analytic => Ok(TrueFunction {
            kind,
            alpha,
            dim,
            seed,
            repr: Repr::Analytic,
        }),
        TruthKind::RkhsExpansion => {
            if k == 0 {
                return Err(Error::input("an RKHS truth needs at least one center (K >= 1)"));
            }
            let kernel = SeKernel::new(RKHS_TRUTH_A, dim)?;
            let h = RkhsElement::random(kernel, k, 1.0, &mut rng)?;
            Ok(TrueFunction {
                kind,
                alpha,
                dim,
                seed,
                repr: Repr::Rkhs(h),
            })
        }
    }
}

impl TrueFunction {
    /// Cosine series with explicit signs, one row per axis.
    pub fn cosine_with_signs(alpha: f64, signs: &[Vec<f64>]) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::input(format!("smoothness alpha must be positive, got {alpha}")));
        }
        if signs.is_empty() || signs.iter().any(|s| s.is_empty()) {
            return Err(Error::input("a cosine series needs at least one axis and one term"));
        }
        let coeffs = signs
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(i, z)| SQRT_2 * z * ((i + 1) as f64).powf(-(alpha + 0.5)))
                    .collect()
            })
            .collect();
        Ok(Self {
            kind: TruthKind::CosineSeries,
            alpha,
            dim: signs.len(),
            seed: 0,
            repr: Repr::Cosine(coeffs),
        })
    }

    /// Wraps an RKHS element as a truth.
    pub fn from_rkhs(h: RkhsElement, alpha: f64) -> Self {
        Self {
            kind: TruthKind::RkhsExpansion,
            alpha,
            dim: h.kernel().dim(),
            seed: 0,
            repr: Repr::Rkhs(h),
        }
    }

    /// Multiplies the function by `amplitude`. Analytic truths are returned
    /// unchanged unless `amplitude == 1`.
    pub fn scaled(mut self, amplitude: f64) -> Result<Self> {
        if !amplitude.is_finite() {
            return Err(Error::input("amplitude must be finite"));
        }
        match &mut self.repr {
            Repr::Cosine(c) => c.iter_mut().flatten().for_each(|v| *v *= amplitude),
            Repr::Rkhs(h) => {
                let w: Vec<f64> = h.weights().iter().map(|w| w * amplitude).collect();
                *h = RkhsElement::new(*h.kernel(), h.centers().clone(), w)?;
            }
            Repr::Analytic if amplitude != 1.0 => {
                return Err(Error::input("the analytic truth has a fixed scale"));
            }
            Repr::Analytic => {}
        }
        Ok(self)
    }

    pub fn kind(&self) -> TruthKind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl RegressionFn for TrueFunction {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        match &self.repr {
            Repr::Cosine(c) => c
                .iter()
                .zip(x)
                .map(|(row, &xi)| {
                    // cos(kθ) by the Chebyshev recurrence
                    let c1 = (PI * xi).cos();
                    let (mut prev, mut cur) = (1.0, c1);
                    let mut s = 0.0;
                    for coef in row {
                        s += coef * cur;
                        let next = 2.0 * c1 * cur - prev;
                        prev = cur;
                        cur = next;
                    }
                    s
                })
                .sum(),
            Repr::Analytic => {
                let mut v = (2.0 * PI * x[0]).sin();
                if x.len() > 1 {
                    v += 0.5 * (PI * x[1..].iter().sum::<f64>()).cos();
                }
                v
            }
            Repr::Rkhs(h) => h.value(x),
        }
    }

    fn sup_bound(&self) -> Option<f64> {
        Some(match &self.repr {
            Repr::Cosine(c) => c.iter().flatten().map(|v| v.abs()).sum(),
            Repr::Analytic => {
                if self.dim > 1 {
                    1.5
                } else {
                    1.0
                }
            }
            Repr::Rkhs(h) => h.sup_bound().unwrap_or(f64::INFINITY),
        })
    }
}

/// Covariate density on `[0,1]^d`, a product of identical one-dimensional
/// factors.
#[derive(Debug, Clone, PartialEq)]
pub enum CovariateDensity {
    Uniform { dim: usize },
    /// Per-axis bins `[edges[i], edges[i+1])` with probabilities `masses[i]`.
    PiecewiseConstant { dim: usize, edges: Vec<f64>, masses: Vec<f64> },
}

impl CovariateDensity {
    pub fn uniform(dim: usize) -> Self {
        CovariateDensity::Uniform { dim: dim.max(1) }
    }

    pub fn piecewise(dim: usize, edges: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("dimension must be positive"));
        }
        if edges.len() != masses.len() + 1 || masses.is_empty() {
            return Err(Error::input("piecewise density needs one more edge than masses"));
        }
        if edges[0] != 0.0 || *edges.last().unwrap() != 1.0 || edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::input("bin edges must increase strictly from 0 to 1"));
        }
        if masses.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::input("bin masses must be positive (density bounded away from zero)"));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::input(format!("bin masses must sum to 1, got {total}")));
        }
        let masses = masses.iter().map(|m| m / total).collect();
        Ok(CovariateDensity::PiecewiseConstant { dim, edges, masses })
    }

    pub fn dim(&self) -> usize {
        match self {
            CovariateDensity::Uniform { dim } | CovariateDensity::PiecewiseConstant { dim, .. } => *dim,
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, CovariateDensity::Uniform { .. })
    }

    fn density1(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        match self {
            CovariateDensity::Uniform { .. } => 1.0,
            CovariateDensity::PiecewiseConstant { edges, masses, .. } => {
                let i = edges[1..].partition_point(|&e| e <= x).min(masses.len() - 1);
                masses[i] / (edges[i + 1] - edges[i])
            }
        }
    }

    /// `q(x)`.
    pub fn density(&self, x: &[f64]) -> f64 {
        x.iter().map(|&v| self.density1(v)).product()
    }

    /// Lower and upper bounds of `q` on the cube.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            CovariateDensity::Uniform { .. } => (1.0, 1.0),
            CovariateDensity::PiecewiseConstant { dim, edges, masses } => {
                let dens = masses.iter().enumerate().map(|(i, m)| m / (edges[i + 1] - edges[i]));
                let lo = dens.clone().fold(f64::INFINITY, f64::min);
                let hi = dens.fold(0.0, f64::max);
                (lo.powi(*dim as i32), hi.powi(*dim as i32))
            }
        }
    }

    fn inverse_cdf1(&self, u: f64) -> f64 {
        match self {
            CovariateDensity::Uniform { .. } => u,
            CovariateDensity::PiecewiseConstant { edges, masses, .. } => {
                let mut acc = 0.0;
                for (i, m) in masses.iter().enumerate() {
                    if u < acc + m || i == masses.len() - 1 {
                        let frac = ((u - acc) / m).clamp(0.0, 1.0);
                        return edges[i] + frac * (edges[i + 1] - edges[i]);
                    }
                    acc += m;
                }
                unreachable!()
            }
        }
    }

    /// `n` i.i.d. draws by per-axis inverse CDF.
    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> PointSet {
        let d = self.dim();
        let data = (0..n * d).map(|_| self.inverse_cdf1(rng.random::<f64>())).collect();
        PointSet::new(d, data).expect("inverse CDF stays in [0,1]")
    }
}

/// Draws a seeded design of `n` points.
pub fn sample_design(q: &CovariateDensity, n: usize, seed: u64) -> Result<PointSet> {
    if n == 0 {
        return Err(Error::input("design size must be at least 1"));
    }
    let mut rng = seed::rng(seed::derive(seed, &[stream::DESIGN]));
    Ok(q.sample_with(n, &mut rng))
}

/// Observations `Y_i = f0(X_i) + noise_sd · z_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: PointSet,
    pub y: Vec<f64>,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Dataset {
    pub fn new(x: PointSet, y: Vec<f64>, noise_sd: f64, seed: u64) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::input(format!("{} design points but {} responses", x.len(), y.len())));
        }
        if !x.in_unit_cube() {
            return Err(Error::input("design points must lie in [0,1]^d"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("responses must be finite"));
        }
        Ok(Self { x, y, noise_sd, seed })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    /// CSV with columns `x_1..x_d, y`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let cols: Vec<String> = (1..=self.dim()).map(|k| format!("x_{k}")).collect();
        writeln!(w, "{},y", cols.join(","))?;
        for (x, y) in self.x.iter().zip(&self.y) {
            for v in x {
                write!(w, "{v},")?;
            }
            writeln!(w, "{y}")?;
        }
        Ok(())
    }
}

pub fn gen_dataset<F: RegressionFn + ?Sized>(f0: &F, x: PointSet, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if !(noise_sd.is_finite() && noise_sd >= 0.0) {
        return Err(Error::input(format!("noise sd must be nonnegative, got {noise_sd}")));
    }
    if x.dim() != f0.dim() {
        return Err(Error::input("design and truth dimensions differ"));
    }
    let mut rng = seed::rng(seed::derive(seed, &[stream::NOISE]));
    let y = x
        .iter()
        .map(|xi| {
            let z: f64 = rng.sample(StandardNormal);
            f0.eval(xi) + noise_sd * z
        })
        .collect();
    Dataset::new(x, y, noise_sd, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::QuadratureGrid;
    use crate::stats;

    #[test]
    fn cosine_examples() {
        let f = TrueFunction::cosine_with_signs(1.0, &[vec![1.0; 3]]).unwrap();
        // the quoted 2.186377 is rounded; the exact sum is 2.1863791
        assert!((f.eval(&[0.0]) - 2.186_377).abs() < 5e-6);
        let f = TrueFunction::cosine_with_signs(2.0, &[vec![1.0]]).unwrap();
        assert!((f.eval(&[0.0]) - 1.414_214).abs() < 1e-6);
        // recurrence against direct cosines
        let f = make_truth(TruthKind::CosineSeries, 1.5, 40, 1, 9).unwrap();
        let g = TrueFunction::cosine_with_signs(1.5, &[vec![1.0; 40]]).unwrap();
        let x = 0.3137;
        let direct: f64 = (1..=40)
            .map(|k| SQRT_2 * (k as f64).powf(-2.0) * (k as f64 * PI * x).cos())
            .sum();
        assert!((g.eval(&[x]) - direct).abs() < 1e-13);
        assert!(f.eval(&[x]).abs() <= f.sup_bound().unwrap());
    }

    #[test]
    fn analytic_and_errors() {
        let f = make_truth(TruthKind::Analytic, 2.0, 0, 1, 0).unwrap();
        assert!((f.eval(&[0.25]) - 1.0).abs() < 1e-15);
        assert!(make_truth(TruthKind::CosineSeries, 0.0, 3, 1, 0).is_err());
        assert!(make_truth(TruthKind::CosineSeries, 1.0, 0, 1, 0).is_err());
        assert!(f.clone().scaled(2.0).is_err());
    }

    #[test]
    fn sup_bound_holds_on_grid() {
        let f = make_truth(TruthKind::CosineSeries, 1.0, 100, 2, 4).unwrap().scaled(3.0).unwrap();
        let g = QuadratureGrid::default_for(2).unwrap();
        let max = g.eval(&f).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max <= f.sup_bound().unwrap());
    }

    #[test]
    fn uniform_design_moments() {
        let n = 100_000;
        let x = sample_design(&CovariateDensity::uniform(2), n, 1).unwrap();
        for k in 0..2 {
            let col: Vec<f64> = x.iter().map(|r| r[k]).collect();
            assert!((stats::mean(&col) - 0.5).abs() < 3.0 / (12.0 * n as f64).sqrt());
        }
        let a = sample_design(&CovariateDensity::uniform(1), 1, 77).unwrap();
        let b = sample_design(&CovariateDensity::uniform(1), 1, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn piecewise_design_and_density() {
        let q = CovariateDensity::piecewise(1, vec![0.0, 0.5, 1.0], vec![0.25, 0.75]).unwrap();
        let x = sample_design(&q, 100_000, 5).unwrap();
        let frac = x.iter().filter(|r| r[0] < 0.5).count() as f64 / 1e5;
        assert!((frac - 0.25).abs() < 0.005);
        assert_eq!(q.density(&[0.2]), 0.5);
        assert_eq!(q.density(&[0.7]), 1.5);
        assert_eq!(q.bounds(), (0.5, 1.5));
        let g = QuadratureGrid::default_for(1).unwrap();
        let qv: Vec<f64> = g.points().iter().map(|p| q.density(p)).collect();
        assert!((g.integrate(&qv) - 1.0).abs() < 1e-12);
        assert!(CovariateDensity::piecewise(1, vec![0.0, 1.0], vec![0.0]).is_err());
        assert!(CovariateDensity::piecewise(1, vec![0.0, 0.6, 0.5, 1.0], vec![0.2, 0.3, 0.5]).is_err());
    }

    #[test]
    fn datasets() {
        let f = make_truth(TruthKind::Analytic, 1.0, 1, 1, 0).unwrap();
        let x = sample_design(&CovariateDensity::uniform(1), 50, 3).unwrap();
        let d = gen_dataset(&f, x.clone(), 0.0, 3).unwrap();
        for (xi, yi) in d.x.iter().zip(&d.y) {
            assert_eq!(*yi, f.eval(xi));
        }
        let zero = crate::math::Constant { value: 0.0, dim: 1 };
        let n = 100_000;
        let x = sample_design(&CovariateDensity::uniform(1), n, 4).unwrap();
        let d = gen_dataset(&zero, x.clone(), 1.0, 4).unwrap();
        assert!(stats::mean(&d.y).abs() < 3.0 / (n as f64).sqrt());
        assert!((stats::variance(&d.y) - 1.0).abs() < 0.02);
        assert_eq!(gen_dataset(&zero, x, 1.0, 4).unwrap().y, d.y);
        let mut buf = Vec::new();
        gen_dataset(&f, sample_design(&CovariateDensity::uniform(1), 2, 1).unwrap(), 1.0, 1)
            .unwrap()
            .write_csv(&mut buf)
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x_1,y\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
