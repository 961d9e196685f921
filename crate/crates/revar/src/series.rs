//! Time-ordered stacks of flattened phase-screen frames.

use crate::error::{Result, RevarError};
use crate::geometry::ApertureGeometry;
use ndarray::{Array2, ArrayView1};

/// A measured or synthesized phase-screen time series: `N_T` frames of
/// `N_p` masked pixels (OPD in microns), sampled at a fixed rate.
#[derive(Debug, Clone)]
pub struct PhaseScreenSeries {
    geometry: ApertureGeometry,
    /// `N_T x N_p`, one frame per row.
    frames: Array2<f64>,
    sampling_frequency: f64,
    label: String,
}

impl PhaseScreenSeries {
    pub fn new(
        geometry: ApertureGeometry,
        frames: Array2<f64>,
        sampling_frequency: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        if frames.ncols() != geometry.n_pixels() {
            return Err(RevarError::dims(
                "frame width",
                geometry.n_pixels(),
                frames.ncols(),
            ));
        }
        if frames.nrows() == 0 {
            return Err(RevarError::InvalidInput(
                "phase-screen series must contain at least one frame".into(),
            ));
        }
        if !(sampling_frequency > 0.0 && sampling_frequency.is_finite()) {
            return Err(RevarError::InvalidInput(format!(
                "sampling frequency must be positive and finite, got {sampling_frequency}"
            )));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(RevarError::NonFinite("phase-screen frames".into()));
        }
        Ok(PhaseScreenSeries {
            geometry,
            frames,
            sampling_frequency,
            label: label.into(),
        })
    }

    pub fn geometry(&self) -> &ApertureGeometry {
        &self.geometry
    }

    pub fn frames(&self) -> &Array2<f64> {
        &self.frames
    }

    pub fn frame(&self, n: usize) -> ArrayView1<'_, f64> {
        self.frames.row(n)
    }

    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn n_pixels(&self) -> usize {
        self.frames.ncols()
    }

    pub fn sampling_frequency(&self) -> f64 {
        self.sampling_frequency
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// First `n` frames as a new series (used for train/eval splits).
    pub fn head(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n_frames() {
            return Err(RevarError::InvalidInput(format!(
                "cannot take {n} frames from a series of {}",
                self.n_frames()
            )));
        }
        Ok(PhaseScreenSeries {
            geometry: self.geometry.clone(),
            frames: self.frames.slice(ndarray::s![..n, ..]).to_owned(),
            sampling_frequency: self.sampling_frequency,
            label: self.label.clone(),
        })
    }

    /// Frames `from..` as a new series.
    pub fn tail(&self, from: usize) -> Result<Self> {
        if from >= self.n_frames() {
            return Err(RevarError::InvalidInput(format!(
                "tail start {from} is past the end of a series of {}",
                self.n_frames()
            )));
        }
        Ok(PhaseScreenSeries {
            geometry: self.geometry.clone(),
            frames: self.frames.slice(ndarray::s![from.., ..]).to_owned(),
            sampling_frequency: self.sampling_frequency,
            label: self.label.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_frames() {
        let g = ApertureGeometry::full(1, 2);
        let mut frames = Array2::zeros((2, 2));
        frames[(1, 1)] = f64::INFINITY;
        assert!(matches!(
            PhaseScreenSeries::new(g, frames, 100.0, "t"),
            Err(RevarError::NonFinite(_))
        ));
    }

    #[test]
    fn rejects_bad_sampling_frequency() {
        let g = ApertureGeometry::full(1, 2);
        let frames = Array2::zeros((2, 2));
        assert!(PhaseScreenSeries::new(g, frames, 0.0, "t").is_err());
    }

    #[test]
    fn rejects_width_mismatch() {
        let g = ApertureGeometry::full(1, 2);
        let frames = Array2::zeros((2, 3));
        assert!(PhaseScreenSeries::new(g, frames, 1.0, "t").is_err());
    }

    #[test]
    fn head_and_tail_partition_frames() {
        let g = ApertureGeometry::full(1, 1);
        let frames = Array2::from_shape_fn((5, 1), |(i, _)| i as f64);
        let s = PhaseScreenSeries::new(g, frames, 1.0, "t").unwrap();
        let head = s.head(3).unwrap();
        let tail = s.tail(3).unwrap();
        assert_eq!(head.n_frames(), 3);
        assert_eq!(tail.n_frames(), 2);
        assert_eq!(head.frame(2)[0], 2.0);
        assert_eq!(tail.frame(0)[0], 3.0);
    }
}
