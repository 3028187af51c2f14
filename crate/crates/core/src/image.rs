use crate::error::{Error, Result};

/// Pixel image with values in `[0, 1]`, stored row-major with interleaved
/// channels (`(y * width + x) * channels + c`).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        Self::check_shape(height, width, channels, pixels.len())?;
        if let Some(i) = pixels.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!(
                "pixel {i} has value {} outside [0, 1]",
                pixels[i]
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
        })
    }

    /// Like [`ImageTensor::new`] but clamps into `[0, 1]`. NaN is rejected.
    pub fn from_clamped(height: usize, width: usize, channels: usize, mut pixels: Vec<f64>) -> Result<Self> {
        Self::check_shape(height, width, channels, pixels.len())?;
        if pixels.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("NaN pixel"));
        }
        pixels.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Ok(Self {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    fn check_shape(height: usize, width: usize, channels: usize, len: usize) -> Result<()> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if len != height * width * channels {
            return Err(Error::invalid(format!(
                "{len} pixel values for a {height}x{width}x{channels} image"
            )));
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    /// Euclidean distance between two images of the same shape.
    pub fn l2_distance(&self, other: &ImageTensor) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(Error::invalid("image shapes differ"));
        }
        Ok(self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range() {
        assert!(ImageTensor::new(1, 2, 1, vec![0.5, 1.5]).is_err());
        assert!(ImageTensor::new(1, 2, 1, vec![0.5, f64::NAN]).is_err());
        assert!(ImageTensor::new(1, 2, 1, vec![0.5]).is_err());
        let img = ImageTensor::from_clamped(1, 2, 1, vec![-0.5, 1.5]).unwrap();
        assert_eq!(img.pixels(), &[0.0, 1.0]);
    }

    #[test]
    fn l2() {
        let a = ImageTensor::filled(2, 2, 1, 0.0).unwrap();
        let b = ImageTensor::filled(2, 2, 1, 0.5).unwrap();
        assert!((a.l2_distance(&b).unwrap() - 1.0).abs() < 1e-15);
    }
}
