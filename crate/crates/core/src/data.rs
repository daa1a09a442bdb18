use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// `n` points in `R^p` (one per row) with a real response each.
///
/// Classification code expects the responses to be exactly `-1.0` or `+1.0`;
/// see [`Dataset::check_binary_labels`].
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                found: y.len(),
            });
        }
        Ok(Dataset { x, y })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn into_parts(self) -> (DMatrix<f64>, DVector<f64>) {
        (self.x, self.y)
    }

    pub fn check_binary_labels(&self) -> Result<()> {
        match self
            .y
            .iter()
            .position(|&v| v != 1.0 && v != -1.0)
        {
            Some(index) => Err(Error::InvalidLabel {
                index,
                value: self.y[index],
            }),
            None => Ok(()),
        }
    }

    /// Rows `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let x = self.x.select_rows(indices.iter());
        let y = DVector::from_iterator(indices.len(), indices.iter().map(|&i| self.y[i]));
        Dataset { x, y }
    }

    /// Everything except row `index`.
    pub fn without(&self, index: usize) -> Dataset {
        let keep: Vec<usize> = (0..self.n()).filter(|&i| i != index).collect();
        self.select(&keep)
    }

    /// Same responses, features replaced (for example by a projection).
    pub fn with_features(&self, x: DMatrix<f64>) -> Result<Dataset> {
        Dataset::new(x, self.y.clone())
    }
}
