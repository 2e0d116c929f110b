//! Flat-top convolution kernel and the kernel estimator built on it.

mod estimator;
mod flattop;

pub use estimator::{test_phi, Region, SmootherConfig, SUPPORT_TOL};
pub use flattop::{build_psi, Certificate, FlatTopKernel, FlatTopSpec, Profile, MOMENT_TOL, STEP_SHARPNESS};
