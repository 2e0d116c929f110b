use crate::error::{Error, Result};

/// A row-major set of points in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    data: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("dimension must be positive"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::input(format!(
                "coordinate buffer of length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("point coordinates must be finite"));
        }
        Ok(Self { dim, data })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim: dim.max(1),
            data: Vec::new(),
        }
    }

    /// One-dimensional points from scalars.
    pub fn from_scalars(xs: &[f64]) -> Self {
        Self {
            dim: 1,
            data: xs.to_vec(),
        }
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::input(format!(
                    "row of length {} in a {dim}-dimensional point set",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn push(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.dim, "dimension mismatch in push");
        self.data.extend_from_slice(p);
    }

    /// True when every coordinate lies in `[0, 1]`.
    pub fn in_unit_cube(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

#[inline]
pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}
