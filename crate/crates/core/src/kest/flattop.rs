use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{self, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::math::composite_gauss_legendre;
use crate::par::{self, Exec};

/// Sharpness of the transition `g` on `(1, 2)`.
pub const STEP_SHARPNESS: f64 = 2.5;
/// Moment tolerance enforced at construction.
pub const MOMENT_TOL: f64 = 1e-6;
const GL_ORDER: usize = 16;

/// Per-axis spectral profile of the flat-top kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Profile {
    /// `ψ̂₁ = g(|λ|)/(2π)`, with `g` a C-infinity step from 1 on `[0,1]` to 0
    /// beyond 2. Infinite order.
    #[default]
    SmoothBump,
    /// `ψ̂₁` linear on `1 ≤ |λ| ≤ 2`; `ψ₁(t) = (cos t − cos 2t)/(πt²)`.
    /// Only order 2, and only in the whole-period truncated sense.
    Trapezoid,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::SmoothBump => "smooth-bump",
            Profile::Trapezoid => "trapezoid",
        }
    }

    /// Highest moment order certified at construction.
    pub fn moment_order(self) -> usize {
        match self {
            Profile::SmoothBump => 4,
            Profile::Trapezoid => 2,
        }
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth-bump" => Ok(Profile::SmoothBump),
            "trapezoid" => Ok(Profile::Trapezoid),
            other => Err(Error::input(format!(
                "unknown flat-top profile {other:?} (expected smooth-bump or trapezoid)"
            ))),
        }
    }
}

/// Construction parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatTopSpec {
    pub profile: Profile,
    pub dim: usize,
    /// Gauss–Legendre samples of the spectral profile on `[1, 2]`.
    pub spectral_nodes: usize,
    /// Tabulation range; `ψ₁` is set to zero beyond it.
    pub t_max: f64,
    /// Tabulation intervals on `[0, t_max]`.
    pub intervals: usize,
}

impl Default for FlatTopSpec {
    fn default() -> Self {
        Self {
            profile: Profile::SmoothBump,
            dim: 1,
            spectral_nodes: 4096,
            t_max: 96.0 * PI,
            intervals: 16384,
        }
    }
}

impl FlatTopSpec {
    pub fn with_profile(profile: Profile, dim: usize) -> Self {
        Self {
            profile,
            dim,
            ..Self::default()
        }
    }
}

/// Numerical certificate computed from the tabulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    /// `∫ψ₁`.
    pub mass: f64,
    /// `∫ t^k ψ₁(t) dt` for `k = 1..=moment_order`.
    pub moments: Vec<f64>,
    pub moment_order: usize,
    /// `∫|ψ₁|`.
    pub l1: f64,
    /// `∫ψ₁²`.
    pub l2_sq: f64,
    /// `max |ψ̂₁ − 1/(2π)|` over `[0, 0.99]`, from the tabulation.
    pub flat_dev: f64,
    /// `max |ψ̂₁|` over `[2.01, 4]`, from the tabulation.
    pub stop_dev: f64,
    /// `max |ψ₁(t)| (1 + |t|)^4` over the tabulation.
    pub decay_constant: f64,
    /// `|ψ₁(t_max)|`.
    pub edge_value: f64,
}

/// The per-axis product flat-top kernel `ψ(t) = Π_j ψ₁(t_j)`.
#[derive(Debug, Clone)]
pub struct FlatTopKernel {
    profile: Profile,
    dim: usize,
    t_max: f64,
    step: f64,
    values: Vec<f64>,
    derivs: Vec<f64>,
    cert: Certificate,
}

/// Smooth step: 1 on `[0,1]`, 0 on `[2, ∞)`, C-infinity in between.
fn smooth_step(u: f64) -> f64 {
    if u <= 1.0 {
        1.0
    } else if u >= 2.0 {
        0.0
    } else {
        let z = STEP_SHARPNESS / (2.0 - u) - STEP_SHARPNESS / (u - 1.0);
        1.0 / (1.0 + z.exp())
    }
}

fn smooth_step_deriv(u: f64) -> f64 {
    if u <= 1.0 || u >= 2.0 {
        return 0.0;
    }
    let s = STEP_SHARPNESS;
    let z = s / (2.0 - u) - s / (u - 1.0);
    let dz = s / ((2.0 - u) * (2.0 - u)) + s / ((u - 1.0) * (u - 1.0));
    let c = (0.5 * z).cosh();
    -dz / (4.0 * c * c)
}

fn trapezoid_value(t: f64) -> f64 {
    let t = t.abs();
    if t < 1e-2 {
        let t2 = t * t;
        (1.5 - t2 * (5.0 / 8.0 - t2 * (7.0 / 80.0 - t2 * 255.0 / 40320.0))) / PI
    } else {
        (t.cos() - (2.0 * t).cos()) / (PI * t * t)
    }
}

fn trapezoid_deriv(t: f64) -> f64 {
    let s = t.signum();
    let t = t.abs();
    let d = if t < 1e-2 {
        let t2 = t * t;
        t * (-5.0 / 4.0 + t2 * (7.0 / 20.0 - t2 * 255.0 / 6720.0)) / PI
    } else {
        (2.0 * (2.0 * t).sin() - t.sin()) / (PI * t * t) - 2.0 * (t.cos() - (2.0 * t).cos()) / (PI * t * t * t)
    };
    s * d
}

struct SpectralRule {
    lambda: Vec<f64>,
    w_g: Vec<f64>,
    w_gp: Vec<f64>,
    w_lg: Vec<f64>,
    g_int: f64,
}

impl SpectralRule {
    fn new(nodes: usize) -> Self {
        let panels = nodes.div_ceil(GL_ORDER);
        let (lambda, w) = composite_gauss_legendre(1.0, 2.0, panels, GL_ORDER);
        let w_g: Vec<f64> = lambda.iter().zip(&w).map(|(l, w)| w * smooth_step(*l)).collect();
        let w_gp = lambda.iter().zip(&w).map(|(l, w)| w * smooth_step_deriv(*l)).collect();
        let w_lg = lambda.iter().zip(&w_g).map(|(l, wg)| l * wg).collect();
        let g_int = w_g.iter().sum();
        Self {
            lambda,
            w_g,
            w_gp,
            w_lg,
            g_int,
        }
    }

    /// `(ψ₁(t), ψ₁'(t))` for `t ≥ 0` by the cosine integral.
    fn eval(&self, t: f64) -> (f64, f64) {
        if t == 0.0 {
            return ((1.0 + self.g_int) / PI, 0.0);
        }
        let (mut cg, mut sgp, mut slg) = (0.0, 0.0, 0.0);
        for i in 0..self.lambda.len() {
            let (s, c) = (self.lambda[i] * t).sin_cos();
            cg += self.w_g[i] * c;
            sgp += self.w_gp[i] * s;
            slg += self.w_lg[i] * s;
        }
        // Integration by parts avoids cancellation once the tail is small.
        let value = if t < 0.5 {
            (t.sin() / t + cg) / PI
        } else {
            -sgp / (PI * t)
        };
        let inner = if t < 1e-3 {
            t / 3.0 - t * t * t / 30.0
        } else {
            (t.sin() - t * t.cos()) / (t * t)
        };
        (value, -(inner + slg) / PI)
    }
}

/// Tabulates `ψ₁` and certifies its moments and spectrum.
///
/// Fails with [`Error::Construction`] when the mass or a moment misses its
/// target by more than [`MOMENT_TOL`].
pub fn build_psi(spec: &FlatTopSpec) -> Result<FlatTopKernel> {
    if spec.dim == 0 {
        return Err(Error::input("dimension must be positive"));
    }
    if spec.spectral_nodes < 1 << 12 {
        return Err(Error::input(format!(
            "at least 4096 spectral samples are required, got {}",
            spec.spectral_nodes
        )));
    }
    if !(spec.t_max.is_finite() && spec.t_max >= 50.0) {
        return Err(Error::input(format!("tabulation range must be at least 50, got {}", spec.t_max)));
    }
    let step = spec.t_max / spec.intervals as f64;
    if !(step > 0.0 && step < PI / 4.0) {
        return Err(Error::input("tabulation step must be below π/4 to resolve the band [-2, 2]"));
    }

    let nodes = spec.intervals + 1;
    let pairs: Vec<(f64, f64)> = match spec.profile {
        Profile::SmoothBump => {
            let rule = SpectralRule::new(spec.spectral_nodes);
            par::map_indexed(Exec::Parallel, nodes, |m| rule.eval(m as f64 * step))
        }
        Profile::Trapezoid => (0..nodes)
            .map(|m| {
                let t = m as f64 * step;
                (trapezoid_value(t), trapezoid_deriv(t))
            })
            .collect(),
    };
    let (values, derivs): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();

    let cert = certify(&values, step, spec.profile.moment_order());
    if (cert.mass - 1.0).abs() > MOMENT_TOL {
        return Err(Error::Construction {
            order: 0,
            value: cert.mass - 1.0,
            tolerance: MOMENT_TOL,
        });
    }
    if let Some((k, v)) = cert
        .moments
        .iter()
        .enumerate()
        .map(|(i, v)| (i + 1, *v))
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
    {
        if v.abs() > MOMENT_TOL {
            return Err(Error::Construction {
                order: k,
                value: v,
                tolerance: MOMENT_TOL,
            });
        }
    }

    Ok(FlatTopKernel {
        profile: spec.profile,
        dim: spec.dim,
        t_max: spec.t_max,
        step,
        values,
        derivs,
        cert,
    })
}

/// Trapezoid node sum of an even function over `[-T, T]`.
fn even_sum(values: &[f64], step: f64, f: impl Fn(usize, f64) -> f64) -> f64 {
    let last = values.len() - 1;
    let mut s = 0.5 * f(0, values[0]) + 0.5 * f(last, values[last]);
    for (m, v) in values.iter().enumerate().take(last).skip(1) {
        s += f(m, *v);
    }
    2.0 * step * s
}

/// Trapezoid node sums are exact for band-limited integrands, so moments and
/// the recomputed spectrum are taken on the tabulation nodes directly.
fn certify(values: &[f64], step: f64, order: usize) -> Certificate {
    let t = |m: usize| m as f64 * step;
    let mass = even_sum(values, step, |_, v| v);
    let moments = (1..=order)
        .map(|k| {
            if k % 2 == 1 {
                // odd: the symmetric node sum cancels pairwise
                0.0
            } else {
                even_sum(values, step, |m, v| t(m).powi(k as i32) * v)
            }
        })
        .collect();
    let l1 = even_sum(values, step, |_, v| v.abs());
    let l2_sq = even_sum(values, step, |_, v| v * v);
    let spectrum = |lambda: f64| even_sum(values, step, |m, v| v * (lambda * t(m)).cos()) / (2.0 * PI);
    let flat_dev = (0..=99)
        .map(|i| (spectrum(i as f64 * 0.01) - 1.0 / (2.0 * PI)).abs())
        .fold(0.0, f64::max);
    let stop_dev = (0..=199)
        .map(|i| spectrum(2.01 + i as f64 * 0.01).abs())
        .fold(0.0, f64::max);
    let decay_constant = values
        .iter()
        .enumerate()
        .map(|(m, v)| v.abs() * (1.0 + t(m)).powi(4))
        .fold(0.0, f64::max);
    Certificate {
        mass,
        moments,
        moment_order: order,
        l1,
        l2_sq,
        flat_dev,
        stop_dev,
        decay_constant,
        edge_value: values[values.len() - 1].abs(),
    }
}

impl FlatTopKernel {
    pub fn profile(&self) -> Profile {
        self.profile
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    /// Tabulation step.
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn certificate(&self) -> &Certificate {
        &self.cert
    }

    /// Tabulated `ψ₁` at nodes `m · step`, `m = 0..=intervals`.
    pub fn node_values(&self) -> &[f64] {
        &self.values
    }

    /// `C₁ = ∫|ψ|` over `R^d`.
    pub fn c1(&self) -> f64 {
        self.cert.l1.powi(self.dim as i32)
    }

    /// `C₂ = (∫ψ²)^{1/2}` over `R^d`.
    pub fn c2(&self) -> f64 {
        self.cert.l2_sq.powf(self.dim as f64 / 2.0)
    }

    /// One-dimensional profile; zero beyond `t_max`.
    pub fn psi1(&self, t: f64) -> f64 {
        let a = t.abs();
        if a > self.t_max {
            return 0.0;
        }
        if self.profile == Profile::Trapezoid {
            return trapezoid_value(a);
        }
        let x = a / self.step;
        let i = (x as usize).min(self.values.len() - 2);
        let s = x - i as f64;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = (self.derivs[i] * self.step, self.derivs[i + 1] * self.step);
        // cubic Hermite
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * d0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * d1
    }

    /// `ψ(t) = Π_j ψ₁(t_j)`.
    pub fn psi(&self, t: &[f64]) -> f64 {
        t.iter().map(|&v| self.psi1(v)).product()
    }

    /// Smallest `u` with `∫_{|t|>u} |ψ₁| ≤ tol` (within the tabulation).
    pub fn effective_support(&self, tol: f64) -> f64 {
        let mut tail = 0.0;
        for m in (1..self.values.len()).rev() {
            let piece = self.step * (self.values[m].abs() + self.values[m - 1].abs());
            if tail + piece > tol {
                return m as f64 * self.step;
            }
            tail += piece;
        }
        0.0
    }

    /// `∫ ψ₁(u) exp(−a²(y − σu)²) du`, the per-axis smoothing of a
    /// squared-exponential section.
    ///
    /// The integrand is band-limited up to a Gaussian tail below 1e-32, so
    /// a trapezoid sum on a sub-lattice of the tabulation nodes is exact to
    /// rounding once the lattice step is below `2π/(4 + 20aσ)`.
    pub fn gaussian_conv_1d(&self, a: f64, sigma: f64, y: f64) -> f64 {
        let h_max = 2.0 * PI / (4.0 + 20.0 * a * sigma);
        let stride = ((h_max / self.step).floor() as usize).max(1);
        let h = stride as f64 * self.step;
        let reach = 8.6 / a;
        let lo = ((y - reach) / sigma / h).ceil() as i64;
        let hi = ((y + reach) / sigma / h).floor() as i64;
        let last = (self.values.len() - 1) as i64;
        let mut s = 0.0;
        for j in lo..=hi {
            let m = j * stride as i64;
            if m.abs() > last {
                continue;
            }
            let u = m as f64 * self.step;
            let r = y - sigma * u;
            s += self.values[m.unsigned_abs() as usize] * (-a * a * r * r).exp();
        }
        h * s
    }

    /// `ψ̂₁(λ)` recomputed from the tabulation.
    pub fn spectrum(&self, lambda: f64) -> f64 {
        even_sum(&self.values, self.step, |m, v| v * (lambda * m as f64 * self.step).cos()) / (2.0 * PI)
    }

    /// Writes `t,psi1` rows for the tabulation nodes.
    pub fn export_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,psi1")?;
        for (m, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{:e}", m as f64 * self.step, v)?;
        }
        Ok(())
    }

    /// Certificate as `key = value` lines.
    pub fn certificate_report(&self) -> String {
        let c = &self.cert;
        let mut s = String::new();
        let _ = writeln!(s, "profile = {}", self.profile.name());
        let _ = writeln!(s, "dim = {}", self.dim);
        let _ = writeln!(s, "t_max = {}", self.t_max);
        let _ = writeln!(s, "step = {}", self.step);
        let _ = writeln!(s, "mass = {:.12}", c.mass);
        for (k, m) in c.moments.iter().enumerate() {
            let _ = writeln!(s, "moment_{} = {:e}", k + 1, m);
        }
        let _ = writeln!(s, "moment_order = {}", c.moment_order);
        let _ = writeln!(s, "l1 = {:.12}", c.l1);
        let _ = writeln!(s, "l2_sq = {:.12}", c.l2_sq);
        let _ = writeln!(s, "c1 = {:.12}", self.c1());
        let _ = writeln!(s, "c2 = {:.12}", self.c2());
        let _ = writeln!(s, "flat_dev = {:e}", c.flat_dev);
        let _ = writeln!(s, "stop_dev = {:e}", c.stop_dev);
        let _ = writeln!(s, "decay_constant = {:.6}", c.decay_constant);
        let _ = writeln!(s, "edge_value = {:e}", c.edge_value);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    fn bump() -> &'static FlatTopKernel {
        static K: OnceLock<FlatTopKernel> = OnceLock::new();
        K.get_or_init(|| build_psi(&FlatTopSpec::default()).unwrap())
    }

    #[test]
    fn step_function_shape() {
        assert_eq!(smooth_step(0.3), 1.0);
        assert_eq!(smooth_step(2.5), 0.0);
        assert!((smooth_step(1.5) - 0.5).abs() < 1e-15);
        // derivative against a central difference
        let u = 1.3;
        let fd = (smooth_step(u + 1e-6) - smooth_step(u - 1e-6)) / 2e-6;
        assert!((smooth_step_deriv(u) - fd).abs() < 1e-7);
    }

    #[test]
    fn trapezoid_closed_form() {
        let k = build_psi(&FlatTopSpec::with_profile(Profile::Trapezoid, 1)).unwrap();
        assert!((k.psi1(0.0) - 0.477_465).abs() < 1e-6);
        assert!((trapezoid_value(0.0099) - trapezoid_value(0.0101)).abs() < 1e-5);
        let fd = (trapezoid_value(0.7 + 1e-6) - trapezoid_value(0.7 - 1e-6)) / 2e-6;
        assert!((trapezoid_deriv(0.7) - fd).abs() < 1e-7);
        let c = k.certificate();
        assert!((c.mass - 1.0).abs() < 1e-6);
        assert!(c.moments.iter().all(|m| m.abs() < 1e-6));
    }

    #[test]
    fn bump_certificates() {
        let k = bump();
        let c = k.certificate();
        assert!((c.mass - 1.0).abs() < 1e-6, "mass {}", c.mass);
        assert_eq!(c.moments.len(), 4);
        assert!(c.moments.iter().all(|m| m.abs() < 1e-6), "{:?}", c.moments);
        assert!(c.flat_dev < 1e-4 && c.stop_dev < 1e-4);
        assert!(c.edge_value < 1e-15);
        assert!(c.decay_constant.is_finite());
    }

    #[test]
    fn interpolation_tracks_direct_evaluation() {
        let k = bump();
        let rule = SpectralRule::new(4096);
        for t in [0.013, 0.49, 0.51, 3.3, 17.77, 123.4] {
            let (v, _) = rule.eval(t);
            assert!((k.psi1(t) - v).abs() < 1e-9, "t = {t}");
            assert_eq!(k.psi1(-t), k.psi1(t));
        }
        assert_eq!(k.psi1(k.t_max() + 1.0), 0.0);
    }

    #[test]
    fn gaussian_smoothing_is_nearly_identity_for_small_bandwidth() {
        let k = bump();
        let a: f64 = 3.0;
        for y in [0.0, 0.2, -0.4] {
            let exact = (-a * a * y * y).exp();
            // σ = 1/(8a): the residual is far below the spectral tail sqrt
            let c = k.gaussian_conv_1d(a, 1.0 / (8.0 * a), y);
            assert!((c - exact).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_small_resolution() {
        let mut s = FlatTopSpec::default();
        s.spectral_nodes = 1000;
        assert!(matches!(build_psi(&s), Err(Error::Input(_))));
        let mut s = FlatTopSpec::default();
        s.t_max = 40.0;
        assert!(build_psi(&s).is_err());
    }

    #[test]
    fn truncation_too_short_for_moments_is_a_construction_error() {
        // T = 51 is not a whole number of periods, so the truncated
        // trapezoid integrals miss their targets
        let s = FlatTopSpec {
            t_max: 51.0,
            intervals: 4096,
            ..FlatTopSpec::with_profile(Profile::Trapezoid, 1)
        };
        assert!(matches!(build_psi(&s), Err(Error::Construction { .. })));
    }

    #[test]
    fn profile_names_round_trip() {
        for p in [Profile::SmoothBump, Profile::Trapezoid] {
            assert_eq!(p.name().parse::<Profile>().unwrap(), p);
        }
        assert!("gaussian".parse::<Profile>().is_err());
    }
}
