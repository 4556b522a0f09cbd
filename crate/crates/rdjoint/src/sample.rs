//! In-memory representation of an analysis sample.

use crate::error::RdError;

/// A dataset for the joint diagnostic: a running variable already centered
/// at the cutoff and `d >= 0` predetermined covariates.
#[derive(Clone, Debug)]
pub struct Sample {
    x: Vec<f64>,
    z: Vec<Vec<f64>>,
    z_names: Vec<String>,
}

impl Sample {
    /// Build a sample, checking that every covariate column has the same
    /// length as the running variable.
    pub fn new(x: Vec<f64>, z: Vec<Vec<f64>>, z_names: Vec<String>) -> Result<Self, RdError> {
        for (k, col) in z.iter().enumerate() {
            if col.len() != x.len() {
                return Err(RdError::LengthMismatch {
                    x_len: x.len(),
                    other_len: col.len(),
                    what: format!("covariate column {k}"),
                });
            }
        }
        if z_names.len() != z.len() {
            return Err(RdError::LengthMismatch {
                x_len: z.len(),
                other_len: z_names.len(),
                what: "covariate names".to_string(),
            });
        }
        Ok(Sample { x, z, z_names })
    }

    /// Running variable, centered at the cutoff.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Covariate columns.
    pub fn z(&self) -> &[Vec<f64>] {
        &self.z
    }

    /// Covariate column `k`.
    pub fn z_col(&self, k: usize) -> &[f64] {
        &self.z[k]
    }

    /// Covariate names, aligned with `z()`.
    pub fn z_names(&self) -> &[String] {
        &self.z_names
    }

    /// Sample size.
    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Number of covariates.
    pub fn d(&self) -> usize {
        self.z.len()
    }

    /// Subtract `cutoff` from every running-variable value, recentering the
    /// sample so the threshold sits at zero.
    pub fn shift_cutoff(&mut self, cutoff: f64) {
        if cutoff != 0.0 {
            for v in &mut self.x {
                *v -= cutoff;
            }
        }
    }
}
