//! Kernel, spectral-density, quadrature and RKHS primitives.

mod bounds;
mod func;
mod gram;
mod kernel;
mod quadrature;
mod rkhs;

pub use bounds::{prop2_check, prop2_constant, smoothing_residual, Prop2Check, SmoothingResidual};
pub use func::{from_fn, Constant, FnWrap, RegressionFn};
pub use gram::{cross_matrix, factor_with_escalation, gram, kernel_matrix, Gram, DEFAULT_JITTER};
pub use kernel::{SeKernel, SpectralDensity};
pub use quadrature::{gauss_legendre, composite_gauss_legendre, QuadratureGrid};
pub use rkhs::RkhsElement;
