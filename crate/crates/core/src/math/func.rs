/// A real function on `[0,1]^d` that can be evaluated pointwise.
///
/// Implemented by ground truths, RKHS expansions and ad hoc closures so the
/// smoothing and concentration code does not care where `f` came from.
pub trait RegressionFn: Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64]) -> f64;

    /// A known upper bound on `sup |f|` over `[0,1]^d`, if one is available
    /// without search.
    fn sup_bound(&self) -> Option<f64> {
        None
    }
}

/// Constant function, mostly a test fixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant {
    pub value: f64,
    pub dim: usize,
}

impl RegressionFn for Constant {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, _x: &[f64]) -> f64 {
        self.value
    }

    fn sup_bound(&self) -> Option<f64> {
        Some(self.value.abs())
    }
}

/// Wraps a closure as a [`RegressionFn`].
pub struct FnWrap<F> {
    dim: usize,
    f: F,
}

pub fn from_fn<F: Fn(&[f64]) -> f64 + Sync>(dim: usize, f: F) -> FnWrap<F> {
    FnWrap { dim, f }
}

impl<F: Fn(&[f64]) -> f64 + Sync> RegressionFn for FnWrap<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

impl<T: RegressionFn + ?Sized> RegressionFn for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        (**self).eval(x)
    }

    fn sup_bound(&self) -> Option<f64> {
        (**self).sup_bound()
    }
}
