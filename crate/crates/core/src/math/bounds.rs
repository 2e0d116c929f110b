use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kest::FlatTopKernel;
use crate::math::{QuadratureGrid, RkhsElement};

/// Outcome of the L2-versus-RKHS norm comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prop2Check {
    /// `‖h‖²_2` on `[0,1]^d` by quadrature.
    pub lhs: f64,
    /// `π^{d/2} ‖h‖²_H / a^d`.
    pub rhs: f64,
    pub ok: bool,
}

/// `π^{d/2} / a^d`: the factor relating `‖h‖²_2` on `R^d` to `‖h‖²_H`.
///
/// With `ĥ = ξ ω_a`, Parseval gives `‖h‖²_2 = (2π)^d ∫ ξ² ω_a²`, and
/// `(2π)^d sup ω_a = π^{d/2} a^{-d}`.
pub fn prop2_constant(a: f64, d: usize) -> f64 {
    PI.powf(d as f64 / 2.0) / a.powi(d as i32)
}

/// Compares `‖h‖²_2` against `π^{d/2}‖h‖²_H / a^d` for an element the caller
/// asserts lies in the RKHS ball of radius `m`.
pub fn prop2_check(h: &RkhsElement, m: f64, grid: &QuadratureGrid) -> Result<Prop2Check> {
    if grid.dim() != h.kernel().dim() {
        return Err(Error::input("grid and element dimensions differ"));
    }
    let norm_sq = h.norm_sq();
    if norm_sq.sqrt() > m * (1.0 + 1e-12) {
        return Err(Error::Contract(format!(
            "RKHS norm {} exceeds the asserted radius {m}",
            norm_sq.sqrt()
        )));
    }
    let lhs = grid.l2_norm_sq(&grid.eval(h));
    let rhs = prop2_constant(h.kernel().a(), h.kernel().dim()) * norm_sq;
    Ok(Prop2Check { lhs, rhs, ok: lhs <= rhs })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingResidual {
    /// `max_grid |ψ_σ ⋆ h − h|`.
    pub measured: f64,
    /// `sqrt(‖h‖²_H · Tail(a, σ))`.
    pub bound: f64,
    /// Spectral mass of `ω_a` outside the ball of radius `1/σ`.
    pub tail: f64,
}

/// Sup-norm distance between `h` and its flat-top smoothing on the grid,
/// against the spectral-tail bound.
///
/// `h` lives on all of `R^d`, so the convolution is taken over `R^d`; each
/// kernel section factorizes over axes and is convolved in closed lattice
/// form by [`FlatTopKernel::gaussian_conv_1d`].
pub fn smoothing_residual(
    h: &RkhsElement,
    psi: &FlatTopKernel,
    sigma: f64,
    grid: &QuadratureGrid,
) -> Result<SmoothingResidual> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::input(format!("bandwidth must be positive, got {sigma}")));
    }
    let d = h.kernel().dim();
    if grid.dim() != d || psi.dim() != d {
        return Err(Error::input("grid, kernel and element dimensions differ"));
    }
    let a = h.kernel().a();
    let tail = h.kernel().spectral().tail_mass(1.0 / sigma);
    let bound = (h.norm_sq() * tail).sqrt();

    let mut measured = 0.0f64;
    for x in grid.points().iter() {
        let mut r = 0.0;
        for (t, w) in h.centers().iter().zip(h.weights()) {
            let mut smooth = 1.0;
            let mut raw = 1.0;
            for k in 0..d {
                let y = x[k] - t[k];
                smooth *= psi.gaussian_conv_1d(a, sigma, y);
                raw *= (-a * a * y * y).exp();
            }
            r += w * (smooth - raw);
        }
        measured = measured.max(r.abs());
    }
    Ok(SmoothingResidual { measured, bound, tail })
}
