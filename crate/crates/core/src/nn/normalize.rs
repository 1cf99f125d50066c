//! Per-dimension standardization.

use log::warn;
use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl Normalizer {
    /// Column statistics of `data`; zero-variance columns get std 1e-8 and a warning.
    pub fn fit(data: &Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::arg("cannot normalize an empty dataset"));
        }
        let mean = data.mean_axis(Axis(0)).expect("non-empty");
        let mut std = data.std_axis(Axis(0), 0.0);
        for (i, s) in std.iter_mut().enumerate() {
            if *s < STD_FLOOR {
                warn!("input dimension {i} has zero variance; std floored at {STD_FLOOR}");
                *s = STD_FLOOR;
            }
        }
        Ok(Self { mean, std })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: Array1::zeros(dim),
            std: Array1::ones(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, data: &Array2<f64>) -> Array2<f64> {
        (data - &self.mean) / &self.std
    }

    pub fn apply_one(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(self.std.iter()))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, data: &Array2<f64>) -> Array2<f64> {
        data * &self.std + &self.mean
    }

    pub fn invert_one(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(self.std.iter()))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardizes_columns() {
        let x = Array2::from_shape_vec((3, 2), vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0]).unwrap();
        let n = Normalizer::fit(&x).unwrap();
        let z = n.apply(&x);
        assert!((z[[0, 0]] + z[[2, 0]]).abs() < 1e-12);
        assert_eq!(n.std[1], STD_FLOOR);
        let back = n.invert(&z);
        assert!((back - &x).iter().all(|d| d.abs() < 1e-12));
    }
}
