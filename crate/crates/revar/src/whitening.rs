//! Second spatial PCA over the autoregression residuals and the whitening /
//! un-whitening maps derived from it.
//!
//! The residual covariance can be near-singular: components past the
//! prediction subspace carry only tail variance and well-predicted components
//! are strongly damped. Eigenvalues below `inverse_floor` relative to the
//! largest are therefore treated as exactly zero — whitening maps those
//! directions to zero instead of amplifying numerical dust, and un-whitening
//! injects no noise there.

use crate::error::{Result, RevarError};
use crate::linalg;
use crate::longrange::ResidualSeries;
use crate::preprocessing::spatial_covariance;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

pub const DEFAULT_INVERSE_FLOOR: f64 = 1e-12;

/// Mean, orthonormal basis, and descending eigenvalues of the residual
/// covariance, plus the relative eigenvalue floor used for inversion.
#[derive(Debug, Clone)]
pub struct WhiteningTransform {
    pub mean: Array1<f64>,
    /// `N_p x N_p`, columns are residual principal directions.
    pub basis: Array2<f64>,
    /// Descending, non-negative.
    pub eigenvalues: Array1<f64>,
    pub inverse_floor: f64,
}

impl WhiteningTransform {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Absolute eigenvalue threshold below which a direction is floored.
    pub fn floor_threshold(&self) -> f64 {
        self.inverse_floor * self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn is_floored(&self, component: usize) -> bool {
        self.eigenvalues[component] <= self.floor_threshold()
    }

    pub fn n_active(&self) -> usize {
        (0..self.eigenvalues.len())
            .filter(|&i| !self.is_floored(i))
            .count()
    }

    /// `W = Sigma^{-1/2} U^T (xi - mean)`, floored components set to zero.
    pub fn whiten(&self, xi: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if xi.len() != self.dim() {
            return Err(RevarError::dims("whiten input", self.dim(), xi.len()));
        }
        let centered = &xi - &self.mean;
        let mut rotated = linalg::matvec_transposed(self.basis.view(), centered.view());
        let thr = self.floor_threshold();
        for (w, &s) in rotated.iter_mut().zip(self.eigenvalues.iter()) {
            *w = if s > thr { *w / s.sqrt() } else { 0.0 };
        }
        Ok(rotated)
    }

    /// `xi = U Sigma^{1/2} W + mean`, injecting nothing into floored
    /// directions.
    pub fn unwhiten(&self, w: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if w.len() != self.dim() {
            return Err(RevarError::dims("unwhiten input", self.dim(), w.len()));
        }
        let thr = self.floor_threshold();
        let scales =
            Array1::from_iter(self.eigenvalues.iter().map(
                |&s| {
                    if s > thr {
                        s.sqrt()
                    } else {
                        0.0
                    }
                },
            ));
        let scaled = linalg::diag_mul(scales.view(), w);
        let mut out = linalg::matvec(self.basis.view(), scaled.view());
        out += &self.mean;
        Ok(out)
    }

    /// Whiten a block of residual rows.
    pub fn whiten_rows(&self, rows: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((rows.nrows(), self.dim()));
        for (r, mut o) in rows.outer_iter().zip(out.outer_iter_mut()) {
            o.assign(&self.whiten(r)?);
        }
        Ok(out)
    }
}

/// Fit the whitening transform: sample mean and population covariance of the
/// residual rows, then a symmetric eigendecomposition clamped at zero.
pub fn fit_whitening(
    residuals: &ResidualSeries,
    inverse_floor: f64,
) -> Result<WhiteningTransform> {
    let data = residuals.residuals.view();
    if data.nrows() < 2 {
        return Err(RevarError::InvalidInput(
            "whitening needs at least two residual vectors".into(),
        ));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(RevarError::NonFinite("residuals".into()));
    }
    if !(inverse_floor >= 0.0 && inverse_floor < 1.0) {
        return Err(RevarError::InvalidInput(format!(
            "inverse floor must lie in [0, 1), got {inverse_floor}"
        )));
    }
    let n = data.nrows() as f64;
    let mean = data.sum_axis(Axis(0)) / n;
    let centered = &data - &mean.view().insert_axis(Axis(0));
    let cov = spatial_covariance(centered.view())?;
    let (basis, eigenvalues) = linalg::symmetric_eigen_desc(&cov)?;
    Ok(WhiteningTransform {
        mean,
        basis,
        eigenvalues,
        inverse_floor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseSource;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn residuals_from(data: Array2<f64>) -> ResidualSeries {
        ResidualSeries {
            residuals: data,
            offset: 0,
        }
    }

    #[test]
    fn diagonal_covariance_is_recovered() {
        // xi ~ N(0, diag(4, 1)) via scaled independent normals.
        let n = 100_000;
        let mut noise = NoiseSource::new(5);
        let mut data = Array2::zeros((n, 2));
        for mut row in data.outer_iter_mut() {
            let v = noise.next_vector(2);
            row[0] = 2.0 * v[0];
            row[1] = v[1];
        }
        let t = fit_whitening(&residuals_from(data), DEFAULT_INVERSE_FLOOR).unwrap();
        let bound = 5.0 / (n as f64).sqrt();
        assert!((t.eigenvalues[0] - 4.0).abs() < 4.0 * bound);
        assert!((t.eigenvalues[1] - 1.0).abs() < 4.0 * bound);
        assert!(t.mean.iter().all(|m| m.abs() < 3.0 * bound));
        // Basis is a signed permutation of the identity, up to sampling error.
        assert!(t.basis[(0, 0)].abs() > 0.99);
        assert!(t.basis[(1, 1)].abs() > 0.99);
    }

    #[test]
    fn constant_residuals_have_zero_spectrum() {
        let data = Array2::from_elem((10, 3), 2.5);
        let t = fit_whitening(&residuals_from(data), DEFAULT_INVERSE_FLOOR).unwrap();
        for &m in t.mean.iter() {
            assert_abs_diff_eq!(m, 2.5, epsilon = 1e-12);
        }
        for &s in t.eigenvalues.iter() {
            assert_abs_diff_eq!(s, 0.0, epsilon = 1e-12);
        }
        assert_eq!(t.n_active(), 0);
        // Whiten maps everything to zero; unwhiten returns the mean.
        let w = t.whiten(array![9.0, 9.0, 9.0].view()).unwrap();
        assert_eq!(w, Array1::<f64>::zeros(3));
        let xi = t.unwhiten(array![1.0, 1.0, 1.0].view()).unwrap();
        for &v in xi.iter() {
            assert_abs_diff_eq!(v, 2.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_direction_data_is_rank_one() {
        let v = array![0.6, 0.8];
        let data = Array2::from_shape_fn((50, 2), |(i, j)| {
            let c = if i % 2 == 0 { 1.0 } else { -1.0 };
            c * v[j]
        });
        let t = fit_whitening(&residuals_from(data), DEFAULT_INVERSE_FLOOR).unwrap();
        assert!(t.eigenvalues[0] > 0.5);
        assert_abs_diff_eq!(t.eigenvalues[1], 0.0, epsilon = 1e-12);
        assert_eq!(t.n_active(), 1);
    }

    #[test]
    fn diagonal_whitening_by_hand() {
        let t = WhiteningTransform {
            mean: Array1::zeros(2),
            basis: Array2::eye(2),
            eigenvalues: array![4.0, 1.0],
            inverse_floor: DEFAULT_INVERSE_FLOOR,
        };
        let w = t.whiten(array![2.0, 3.0].view()).unwrap();
        assert_abs_diff_eq!(w[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], 3.0, epsilon = 1e-12);
        let xi = t.unwhiten(w.view()).unwrap();
        assert_abs_diff_eq!(xi[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(xi[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn whitening_the_mean_gives_zero() {
        let t = WhiteningTransform {
            mean: array![1.0, -2.0],
            basis: Array2::eye(2),
            eigenvalues: array![2.0, 0.5],
            inverse_floor: DEFAULT_INVERSE_FLOOR,
        };
        let w = t.whiten(array![1.0, -2.0].view()).unwrap();
        assert_eq!(w, Array1::<f64>::zeros(2));
        assert_eq!(t.unwhiten(Array1::<f64>::zeros(2).view()).unwrap(), t.mean);
    }

    #[test]
    fn round_trip_on_full_rank_transform() {
        let n = 5000;
        let mut noise = NoiseSource::new(17);
        let mut data = Array2::zeros((n, 3));
        for mut row in data.outer_iter_mut() {
            let v = noise.next_vector(3);
            row[0] = v[0] + 0.5 * v[1];
            row[1] = v[1];
            row[2] = 0.3 * v[0] + v[2] + 1.0;
        }
        let t = fit_whitening(&residuals_from(data.clone()), DEFAULT_INVERSE_FLOOR).unwrap();
        for i in 0..20 {
            let xi = data.row(i);
            let back = t.unwhiten(t.whiten(xi).unwrap().view()).unwrap();
            for (a, b) in back.iter().zip(xi.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn training_residuals_whiten_to_identity_covariance() {
        let n = 20_000;
        let mut noise = NoiseSource::new(23);
        let mut data = Array2::zeros((n, 4));
        for mut row in data.outer_iter_mut() {
            let v = noise.next_vector(4);
            row[0] = 2.0 * v[0] + v[1];
            row[1] = v[1] - 0.4 * v[2];
            row[2] = v[2];
            row[3] = 0.1 * v[3] + 0.2 * v[0];
        }
        let rs = residuals_from(data);
        let t = fit_whitening(&rs, DEFAULT_INVERSE_FLOOR).unwrap();
        let w = t.whiten_rows(rs.residuals.view()).unwrap();
        let cov = spatial_covariance(w.view()).unwrap();
        // In-sample whitening is exact up to float round-off.
        for i in 0..4 {
            for j in 0..4 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(cov[(i, j)], target, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn unwhitened_ensemble_reproduces_covariance() {
        // Build a transform from data, push white noise through unwhiten, and
        // check the ensemble covariance matches the fitted one.
        let mut noise = NoiseSource::new(31);
        let mut data = Array2::zeros((2000, 2));
        for mut row in data.outer_iter_mut() {
            let v = noise.next_vector(2);
            row[0] = 3.0 * v[0];
            row[1] = v[1] + v[0];
        }
        let t = fit_whitening(&residuals_from(data), DEFAULT_INVERSE_FLOOR).unwrap();

        let n = 100_000;
        let mut samples = Array2::zeros((n, 2));
        for mut row in samples.outer_iter_mut() {
            row.assign(&t.unwhiten(noise.next_vector(2).view()).unwrap());
        }
        let mean = samples.sum_axis(Axis(0)) / n as f64;
        let centered = &samples - &mean.insert_axis(Axis(0));
        let cov = spatial_covariance(centered.view()).unwrap();
        let lam = Array2::from_diag(&t.eigenvalues);
        let expected = t.basis.dot(&lam).dot(&t.basis.t());
        let bound = 5.0 / (n as f64).sqrt() * t.eigenvalues[0];
        for (a, b) in cov.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 3.0 * bound, "{a} vs {b}");
        }
    }

    #[test]
    fn non_finite_residuals_are_rejected() {
        let mut data = Array2::zeros((5, 2));
        data[(3, 1)] = f64::NAN;
        assert!(fit_whitening(&residuals_from(data), DEFAULT_INVERSE_FLOOR).is_err());
    }
}
