//! Aperture geometry: the mapping between 2D grid pixels and the flat
//! masked-pixel vectors every other module works on.
//!
//! Pixel ordering is row-major over masked pixels and is part of the on-disk
//! format contract, so it must never change.

use crate::error::{Result, RevarError};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Grid shape, validity mask, and the bijection between masked grid pixels
/// and flat indices `0..N_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApertureGeometry {
    rows: usize,
    cols: usize,
    mask: Vec<bool>,
    /// Row-major grid cell -> flat masked index.
    pixel_index: Vec<Option<usize>>,
    /// Flat masked index -> (row, col).
    coords: Vec<(usize, usize)>,
    pixel_pitch_x: f64,
    pixel_pitch_y: f64,
}

impl ApertureGeometry {
    /// Geometry from an explicit row-major mask. At least one pixel must be
    /// masked in.
    pub fn new(rows: usize, cols: usize, mask: Vec<bool>) -> Result<Self> {
        Self::with_pitch(rows, cols, mask, 1.0, 1.0)
    }

    pub fn with_pitch(
        rows: usize,
        cols: usize,
        mask: Vec<bool>,
        pixel_pitch_x: f64,
        pixel_pitch_y: f64,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(RevarError::InvalidInput(
                "aperture grid must have positive dimensions".into(),
            ));
        }
        if mask.len() != rows * cols {
            return Err(RevarError::dims(
                "aperture mask",
                rows * cols,
                mask.len(),
            ));
        }
        if !(pixel_pitch_x > 0.0 && pixel_pitch_y > 0.0) {
            return Err(RevarError::InvalidInput(
                "pixel pitch must be positive".into(),
            ));
        }
        let mut pixel_index = vec![None; rows * cols];
        let mut coords = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if mask[r * cols + c] {
                    pixel_index[r * cols + c] = Some(coords.len());
                    coords.push((r, c));
                }
            }
        }
        if coords.is_empty() {
            return Err(RevarError::InvalidInput(
                "aperture mask selects no pixels".into(),
            ));
        }
        Ok(ApertureGeometry {
            rows,
            cols,
            mask,
            pixel_index,
            coords,
            pixel_pitch_x,
            pixel_pitch_y,
        })
    }

    /// Fully masked-in rectangular aperture.
    pub fn full(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![true; rows * cols]).expect("non-empty grid")
    }

    /// Circular aperture inscribed in a `diameter x diameter` grid.
    pub fn disk(diameter: usize) -> Result<Self> {
        let radius = diameter as f64 / 2.0;
        let center = (diameter as f64 - 1.0) / 2.0;
        let mask = (0..diameter * diameter)
            .map(|i| {
                let (r, c) = (i / diameter, i % diameter);
                let dr = r as f64 - center;
                let dc = c as f64 - center;
                (dr * dr + dc * dc).sqrt() <= radius - 0.5 + 1e-9
            })
            .collect();
        Self::new(diameter, diameter, mask)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of masked pixels, the length of every flattened frame.
    pub fn n_pixels(&self) -> usize {
        self.coords.len()
    }

    pub fn pixel_pitch_x(&self) -> f64 {
        self.pixel_pitch_x
    }

    pub fn pixel_pitch_y(&self) -> f64 {
        self.pixel_pitch_y
    }

    pub fn is_masked(&self, row: usize, col: usize) -> bool {
        row < self.rows && col < self.cols && self.mask[row * self.cols + col]
    }

    /// Flat index of a masked grid cell.
    pub fn index_of(&self, row: usize, col: usize) -> Option<usize> {
        if row < self.rows && col < self.cols {
            self.pixel_index[row * self.cols + col]
        } else {
            None
        }
    }

    /// Grid coordinates of a flat index.
    pub fn coords_of(&self, flat: usize) -> (usize, usize) {
        self.coords[flat]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Row-major `'0'`/`'1'` encoding of the mask, used by the container
    /// formats.
    pub fn mask_bitstring(&self) -> String {
        self.mask.iter().map(|&m| if m { '1' } else { '0' }).collect()
    }

    pub fn from_bitstring(
        rows: usize,
        cols: usize,
        bits: &str,
        pitch_x: f64,
        pitch_y: f64,
    ) -> Result<Self> {
        let mask: Result<Vec<bool>> = bits
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(RevarError::InvalidInput(format!(
                    "mask bitstring contains '{other}'"
                ))),
            })
            .collect();
        Self::with_pitch(rows, cols, mask?, pitch_x, pitch_y)
    }

    /// Extract the masked pixels of a full grid into a flat vector.
    pub fn flatten(&self, frame: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if frame.dim() != (self.rows, self.cols) {
            return Err(RevarError::dims(
                "frame to flatten",
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", frame.nrows(), frame.ncols()),
            ));
        }
        let mut out = Array1::zeros(self.n_pixels());
        for (k, &(r, c)) in self.coords.iter().enumerate() {
            out[k] = frame[(r, c)];
        }
        Ok(out)
    }

    /// Scatter a flat vector back onto the grid; unmasked cells take `fill`.
    pub fn unflatten(&self, values: ArrayView1<'_, f64>, fill: f64) -> Result<Array2<f64>> {
        if values.len() != self.n_pixels() {
            return Err(RevarError::dims(
                "vector to unflatten",
                self.n_pixels(),
                values.len(),
            ));
        }
        let mut out = Array2::from_elem((self.rows, self.cols), fill);
        for (k, &(r, c)) in self.coords.iter().enumerate() {
            out[(r, c)] = values[k];
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn full_mask_flatten_is_identity_layout() {
        let g = ApertureGeometry::full(1, 2);
        let flat = g.flatten(array![[3.0, 7.0]].view()).unwrap();
        assert_eq!(flat.to_vec(), vec![3.0, 7.0]);
    }

    #[test]
    fn diagonal_mask_selects_diagonal() {
        let g = ApertureGeometry::new(2, 2, vec![true, false, false, true]).unwrap();
        assert_eq!(g.n_pixels(), 2);
        let flat = g.flatten(array![[1.0, 9.0], [9.0, 4.0]].view()).unwrap();
        assert_eq!(flat.to_vec(), vec![1.0, 4.0]);
        let grid = g.unflatten(flat.view(), 0.0).unwrap();
        assert_eq!(grid, array![[1.0, 0.0], [0.0, 4.0]]);
    }

    #[test]
    fn nan_fill_reaches_only_unmasked_pixels() {
        let g = ApertureGeometry::new(2, 2, vec![true, false, false, true]).unwrap();
        let grid = g
            .unflatten(array![1.0, 4.0].view(), f64::NAN)
            .unwrap();
        assert_eq!(grid[(0, 0)], 1.0);
        assert_eq!(grid[(1, 1)], 4.0);
        assert!(grid[(0, 1)].is_nan());
        assert!(grid[(1, 0)].is_nan());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let g = ApertureGeometry::full(2, 2);
        assert!(g.flatten(Array2::zeros((3, 2)).view()).is_err());
        assert!(g.unflatten(Array1::zeros(3).view(), 0.0).is_err());
    }

    #[test]
    fn empty_mask_is_rejected() {
        assert!(ApertureGeometry::new(2, 2, vec![false; 4]).is_err());
    }

    #[test]
    fn bitstring_round_trip() {
        let g = ApertureGeometry::new(2, 3, vec![true, false, true, true, true, false]).unwrap();
        let bits = g.mask_bitstring();
        assert_eq!(bits, "101110");
        let back = ApertureGeometry::from_bitstring(2, 3, &bits, 1.0, 1.0).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn disk_has_fewer_pixels_than_square() {
        let g = ApertureGeometry::disk(9).unwrap();
        assert!(g.n_pixels() < 81);
        assert!(g.n_pixels() > 40);
    }

    proptest! {
        #[test]
        fn flatten_unflatten_round_trip(
            rows in 1usize..6,
            cols in 1usize..6,
            seed in 0u64..1000,
        ) {
            // Derive a mask and frame values from the seed deterministically.
            let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                state
            };
            let mut mask: Vec<bool> = (0..rows * cols).map(|_| next() % 3 != 0).collect();
            if !mask.iter().any(|&m| m) {
                mask[0] = true;
            }
            let g = ApertureGeometry::new(rows, cols, mask).unwrap();
            let frame = Array2::from_shape_fn((rows, cols), |_| (next() % 1000) as f64 / 7.0);
            let flat = g.flatten(frame.view()).unwrap();
            let back = g.unflatten(flat.view(), -1.0).unwrap();
            for r in 0..rows {
                for c in 0..cols {
                    if g.is_masked(r, c) {
                        prop_assert_eq!(back[(r, c)], frame[(r, c)]);
                    } else {
                        prop_assert_eq!(back[(r, c)], -1.0);
                    }
                }
            }
            // And the other composition order is the identity on flat vectors.
            let flat2 = g.flatten(back.view()).unwrap();
            prop_assert_eq!(flat, flat2);
        }
    }
}
