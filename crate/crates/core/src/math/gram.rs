use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::math::SeKernel;
use crate::points::PointSet;

pub const DEFAULT_JITTER: f64 = 1e-10;
const JITTER_STEPS: u32 = 3;

/// A kernel matrix together with its Cholesky factor.
#[derive(Clone, Debug)]
pub struct Gram {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

impl Gram {
    /// The factored matrix, diagonal jitter included.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    /// Jitter actually used (may exceed the requested one after escalation).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }
}

/// `K_ij = c_a(x_i, x_j)` without jitter.
pub fn kernel_matrix(kernel: &SeKernel, points: &PointSet) -> Result<DMatrix<f64>> {
    check_dim(kernel, points)?;
    let n = points.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = 1.0;
        for j in 0..i {
            let v = kernel.k(points.row(i), points.row(j));
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// Cross-covariance `K_ij = c_a(a_i, b_j)`.
pub fn cross_matrix(kernel: &SeKernel, a: &PointSet, b: &PointSet) -> Result<DMatrix<f64>> {
    check_dim(kernel, a)?;
    check_dim(kernel, b)?;
    Ok(DMatrix::from_fn(a.len(), b.len(), |i, j| kernel.k(a.row(i), b.row(j))))
}

/// Kernel matrix plus `jitter * I`, factored, with jitter escalation.
pub fn gram(kernel: &SeKernel, points: &PointSet, jitter: f64) -> Result<Gram> {
    let m = kernel_matrix(kernel, points)?;
    let (matrix, chol, jitter) = factor_with_escalation(m, jitter, "Gram matrix")?;
    Ok(Gram { matrix, chol, jitter })
}

/// Factor `m + j I`, starting at `j = base_jitter` and escalating by three
/// decades when the factorization fails. Returns the jittered matrix, its
/// factor and the jitter used.
pub fn factor_with_escalation(
    m: DMatrix<f64>,
    base_jitter: f64,
    context: &str,
) -> Result<(DMatrix<f64>, Cholesky<f64, Dyn>, f64)> {
    if !(base_jitter.is_finite() && base_jitter >= 0.0) {
        return Err(Error::input(format!("jitter must be nonnegative, got {base_jitter}")));
    }
    if m.nrows() != m.ncols() {
        return Err(Error::input("only square matrices can be factored"));
    }
    let mut ladder = vec![base_jitter];
    let start = if base_jitter == 0.0 {
        ladder.push(DEFAULT_JITTER);
        DEFAULT_JITTER
    } else {
        base_jitter
    };
    ladder.extend((1..=JITTER_STEPS).map(|k| start * 10f64.powi(k as i32)));

    for &j in &ladder {
        let mut a = m.clone();
        if j > 0.0 {
            for i in 0..a.nrows() {
                a[(i, i)] += j;
            }
        }
        if let Some(chol) = Cholesky::new(a.clone()) {
            return Ok((a, chol, j));
        }
    }
    let last = *ladder.last().unwrap();
    Err(Error::Numerical {
        context: context.to_string(),
        jitter: last,
        condition: condition_estimate(&m),
    })
}

fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    if m.iter().any(|v| !v.is_finite()) {
        return f64::NAN;
    }
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let hi = eig.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

fn check_dim(kernel: &SeKernel, points: &PointSet) -> Result<()> {
    if points.dim() != kernel.dim() {
        return Err(Error::input(format!(
            "points of dimension {} for a kernel of dimension {}",
            points.dim(),
            kernel.dim()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_gram() {
        let k = SeKernel::new(2.0, 1).unwrap();
        let g = gram(&k, &PointSet::from_scalars(&[0.0, 0.5]), 0.0).unwrap();
        let e = (-1.0f64).exp();
        assert_eq!(g.jitter(), 0.0);
        assert_eq!(g.matrix()[(0, 0)], 1.0);
        assert!((g.matrix()[(0, 1)] - e).abs() < 1e-15);
        assert!((g.matrix()[(1, 0)] - e).abs() < 1e-15);
    }

    #[test]
    fn single_point_carries_jitter() {
        let k = SeKernel::new(7.0, 2).unwrap();
        let g = gram(&k, &PointSet::new(2, vec![0.2, 0.9]).unwrap(), 1e-6).unwrap();
        assert_eq!(g.matrix()[(0, 0)], 1.0 + 1e-6);
    }

    #[test]
    fn equispaced_gram_is_positive_definite() {
        let k = SeKernel::new(4.0, 1).unwrap();
        let xs: Vec<f64> = (0..8).map(|i| i as f64 / 7.0).collect();
        let m = kernel_matrix(&k, &PointSet::from_scalars(&xs)).unwrap();
        let eig = SymmetricEigen::new(m).eigenvalues;
        assert!(eig.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn duplicated_points_escalate_then_fail_with_condition() {
        let k = SeKernel::new(1.0, 1).unwrap();
        // Exact duplicates: singular, but jitter fixes it
        let g = gram(&k, &PointSet::from_scalars(&[0.3, 0.3]), 0.0).unwrap();
        assert!(g.jitter() > 0.0);
        // Indefinite matrix cannot be rescued by 1e-7
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match factor_with_escalation(m, 1e-10, "test") {
            Err(Error::Numerical { jitter, condition, .. }) => {
                assert!((jitter - 1e-7).abs() < 1e-20);
                assert!(condition.is_infinite());
            }
            other => panic!("expected numerical error, got {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_is_input_error() {
        let k = SeKernel::new(1.0, 2).unwrap();
        assert!(matches!(
            gram(&k, &PointSet::from_scalars(&[0.1]), 0.0),
            Err(Error::Input(_))
        ));
    }
}
