use crate::error::{Error, Result};

/// Square real-valued image stored row-major, so `pixels()` is the
/// vectorized scene `x` with `x[row * side + col] = X(row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    side: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn zeros(side: usize) -> Self {
        Self {
            side,
            pixels: vec![0.0; side * side],
        }
    }

    pub fn filled(side: usize, value: f64) -> Self {
        Self {
            side,
            pixels: vec![value; side * side],
        }
    }

    pub fn from_vec(side: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != side * side {
            return Err(Error::DimensionMismatch {
                expected: side * side,
                actual: pixels.len(),
            });
        }
        Ok(Self { side, pixels })
    }

    /// Reshapes a vector of perfect-square length.
    pub fn from_flat(pixels: Vec<f64>) -> Result<Self> {
        let side = (pixels.len() as f64).sqrt().round() as usize;
        Self::from_vec(side, pixels)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let side = rows.len();
        if rows.iter().any(|r| r.len() != side) {
            return Err(Error::arg("image rows must form a square grid"));
        }
        Ok(Self {
            side,
            pixels: rows.concat(),
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.side + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.pixels[row * self.side + col] = value;
    }

    pub fn nonzero_count(&self) -> usize {
        self.pixels.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn max(&self) -> f64 {
        self.pixels
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.pixels.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            side: self.side,
            pixels: self.pixels.iter().map(|v| v * factor).collect(),
        }
    }

    /// Pixelwise maximum of two images of equal size.
    pub fn pixelwise_max(&self, other: &Image) -> Result<Self> {
        if other.side != self.side {
            return Err(Error::DimensionMismatch {
                expected: self.side,
                actual: other.side,
            });
        }
        Ok(Self {
            side: self.side,
            pixels: self
                .pixels
                .iter()
                .zip(&other.pixels)
                .map(|(a, b)| a.max(*b))
                .collect(),
        })
    }
}
