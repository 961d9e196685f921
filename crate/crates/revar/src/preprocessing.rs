//! Pixel-wise normalization, the first spatial PCA, and projection onto the
//! prediction subspace.
//!
//! Normalization removes units: each pixel is centered on its sample mean and
//! scaled to unit sample standard deviation (population convention, matching
//! the `1/N_T` covariance used throughout). The PCA of the normalized frames
//! yields an orthonormal basis whose leading `N_c` components, holding a
//! configurable fraction of the spatial variance, form the subspace the
//! autoregression operates in.

use crate::error::{Result, RevarError};
use crate::geometry::ApertureGeometry;
use crate::linalg;
use crate::series::PhaseScreenSeries;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

/// Fixed row-chunk size for covariance and moment accumulation. Chunk
/// boundaries, not thread count, define the reduction order, so results are
/// identical on any pool.
const CHUNK_ROWS: usize = 4096;

/// Relative floor below which a pixel's standard deviation counts as
/// degenerate (scaled by the largest pixel std).
pub const DEFAULT_SIGMA_FLOOR_REL: f64 = 1e-12;

/// Per-pixel centering and scaling estimated from a training series.
#[derive(Debug, Clone)]
pub struct Normalization {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

/// Orthonormal spatial basis with descending variances.
#[derive(Debug, Clone)]
pub struct SpatialBasis {
    /// `N_p x N_p`; column `i` is the i-th principal component.
    pub basis: Array2<f64>,
    /// Descending, non-negative.
    pub eigenvalues: Array1<f64>,
}

/// Principal-coefficient time series with its prediction-subspace size.
#[derive(Debug, Clone)]
pub struct NormalizedSeries {
    /// `N_T x N_p` full coefficient rows.
    pub coefficients: Array2<f64>,
    /// Leading components spanning the requested variance fraction.
    pub n_components: usize,
}

impl NormalizedSeries {
    /// View of the leading `N_c` coefficients.
    pub fn top(&self) -> ArrayView2<'_, f64> {
        self.coefficients
            .slice(ndarray::s![.., ..self.n_components])
    }
}

/// Per-pixel mean over rows, accumulated in fixed-size chunks.
fn column_means(frames: ArrayView2<'_, f64>) -> Array1<f64> {
    let n_rows = frames.nrows();
    let partials: Vec<Array1<f64>> = frames
        .axis_chunks_iter(Axis(0), CHUNK_ROWS)
        .into_par_iter()
        .map(|chunk| chunk.sum_axis(Axis(0)))
        .collect();
    let mut total = Array1::<f64>::zeros(frames.ncols());
    for p in partials {
        total += &p;
    }
    total / n_rows as f64
}

/// Normalize a measured series to zero mean and unit standard deviation per
/// pixel. Fails on any pixel whose std is at or below the relative floor.
pub fn normalize(
    series: &PhaseScreenSeries,
    sigma_floor_rel: f64,
) -> Result<(Array2<f64>, Normalization)> {
    let frames = series.frames().view();
    let n_t = frames.nrows();
    if n_t < 2 {
        return Err(RevarError::InvalidInput(
            "normalization needs at least two frames".into(),
        ));
    }
    let mean = column_means(frames);

    let var_partials: Vec<Array1<f64>> = frames
        .axis_chunks_iter(Axis(0), CHUNK_ROWS)
        .into_par_iter()
        .map(|chunk| {
            let mut acc = Array1::<f64>::zeros(chunk.ncols());
            for row in chunk.outer_iter() {
                for ((a, &x), &m) in acc.iter_mut().zip(row.iter()).zip(mean.iter()) {
                    let d = x - m;
                    *a += d * d;
                }
            }
            acc
        })
        .collect();
    let mut var = Array1::<f64>::zeros(frames.ncols());
    for p in var_partials {
        var += &p;
    }
    var /= n_t as f64;
    let std = var.mapv(f64::sqrt);

    let max_std = std.iter().cloned().fold(0.0f64, f64::max);
    let floor = sigma_floor_rel * max_std;
    for (i, &s) in std.iter().enumerate() {
        if !(s > floor) {
            let (row, col) = series.geometry().coords_of(i);
            return Err(RevarError::DegeneratePixel {
                row,
                col,
                std: s,
                floor,
            });
        }
    }

    let mut normalized = frames.to_owned();
    for mut row in normalized.outer_iter_mut() {
        for ((x, &m), &s) in row.iter_mut().zip(mean.iter()).zip(std.iter()) {
            *x = (*x - m) / s;
        }
    }
    Ok((normalized, Normalization { mean, std }))
}

/// Spatial covariance `(1/N_T) X^T X` of normalized frames, accumulated as
/// per-chunk Gram matrices summed in chunk order.
pub fn spatial_covariance(normalized: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n_t = normalized.nrows();
    let n_p = normalized.ncols();
    let partials: Vec<Array2<f64>> = normalized
        .axis_chunks_iter(Axis(0), CHUNK_ROWS)
        .into_par_iter()
        .map(|chunk| chunk.t().dot(&chunk))
        .collect();
    let mut cov = Array2::<f64>::zeros((n_p, n_p));
    for p in partials {
        cov += &p;
    }
    cov /= n_t as f64;
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(RevarError::NonFinite("spatial covariance".into()));
    }
    Ok(cov)
}

/// First spatial PCA of normalized frames.
pub fn fit_spatial_pca(normalized: ArrayView2<'_, f64>) -> Result<SpatialBasis> {
    let cov = spatial_covariance(normalized)?;
    let (basis, eigenvalues) = linalg::symmetric_eigen_desc(&cov)?;
    Ok(SpatialBasis { basis, eigenvalues })
}

/// Smallest `N_c` whose leading eigenvalues reach `fraction` of the total
/// variance.
pub fn select_subspace(eigenvalues: ArrayView1<'_, f64>, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(RevarError::InvalidInput(format!(
            "variance fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let n = eigenvalues.len();
    if n == 0 {
        return Err(RevarError::InvalidInput("empty eigenvalue vector".into()));
    }
    let mut prev = f64::INFINITY;
    for &v in eigenvalues.iter() {
        if !(v >= 0.0) || v > prev {
            return Err(RevarError::InvalidInput(
                "eigenvalues must be non-negative and descending".into(),
            ));
        }
        prev = v;
    }
    let total = linalg::blocked_sum(eigenvalues.as_slice().unwrap_or(&eigenvalues.to_vec()));
    if total <= 0.0 {
        return Err(RevarError::InvalidInput(
            "eigenvalues are all zero".into(),
        ));
    }
    if fraction >= 1.0 {
        // Index of the last nonzero eigenvalue, immune to cumulative-sum dust.
        let last = eigenvalues.iter().rposition(|&v| v > 0.0).unwrap();
        return Ok(last + 1);
    }
    let target = fraction * total;
    let mut cum = 0.0;
    for (i, &v) in eigenvalues.iter().enumerate() {
        cum += v;
        if cum >= target {
            return Ok(i + 1);
        }
    }
    Ok(n)
}

/// Project normalized frames onto the principal basis, keeping the full
/// coefficient vectors and marking the leading `N_c`.
pub fn project(
    normalized: ArrayView2<'_, f64>,
    basis: &SpatialBasis,
    n_components: usize,
) -> Result<NormalizedSeries> {
    let n_p = normalized.ncols();
    if basis.basis.nrows() != n_p {
        return Err(RevarError::dims(
            "projection basis",
            n_p,
            basis.basis.nrows(),
        ));
    }
    if n_components == 0 || n_components > n_p {
        return Err(RevarError::InvalidInput(format!(
            "subspace size {n_components} out of range 1..={n_p}"
        )));
    }
    // Row convention: coefficients[n] = E^T x_n, i.e. C = X * E.
    let coefficients = normalized.dot(&basis.basis);
    Ok(NormalizedSeries {
        coefficients,
        n_components,
    })
}

/// Reconstruct measured-unit frames from coefficient rows (inverse of
/// normalize + project).
pub fn reconstruct(
    coefficients: ArrayView2<'_, f64>,
    basis: &SpatialBasis,
    norm: &Normalization,
) -> Array2<f64> {
    let mut frames = coefficients.dot(&basis.basis.t());
    for mut row in frames.outer_iter_mut() {
        for ((x, &s), &m) in row.iter_mut().zip(norm.std.iter()).zip(norm.mean.iter()) {
            *x = *x * s + m;
        }
    }
    frames
}

/// Convenience for tests and the CLI: wrap normalized data back into a series
/// against the same geometry.
pub fn series_from_frames(
    geometry: &ApertureGeometry,
    frames: Array2<f64>,
    sampling_frequency: f64,
    label: &str,
) -> Result<PhaseScreenSeries> {
    PhaseScreenSeries::new(geometry.clone(), frames, sampling_frequency, label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn series_from(frames: Array2<f64>) -> PhaseScreenSeries {
        let g = ApertureGeometry::full(1, frames.ncols());
        PhaseScreenSeries::new(g, frames, 1.0, "test").unwrap()
    }

    #[test]
    fn two_point_normalization_is_plus_minus_one() {
        // Values {0, 2}: population mean 1, population std 1.
        let s = series_from(array![[0.0], [2.0]]);
        let (normalized, norm) = normalize(&s, DEFAULT_SIGMA_FLOOR_REL).unwrap();
        assert_abs_diff_eq!(norm.mean[0], 1.0);
        assert_abs_diff_eq!(norm.std[0], 1.0);
        assert_abs_diff_eq!(normalized[(0, 0)], -1.0);
        assert_abs_diff_eq!(normalized[(1, 0)], 1.0);
    }

    #[test]
    fn zero_mean_unit_std_data_passes_through() {
        let s = series_from(array![[-1.0, 1.0], [1.0, -1.0]]);
        let (normalized, _) = normalize(&s, DEFAULT_SIGMA_FLOOR_REL).unwrap();
        for (a, b) in normalized.iter().zip(s.frames().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn constant_pixel_is_degenerate() {
        let s = series_from(array![[1.0, 0.5], [1.0, 1.5]]);
        match normalize(&s, DEFAULT_SIGMA_FLOOR_REL) {
            Err(RevarError::DegeneratePixel { row, col, .. }) => {
                assert_eq!((row, col), (0, 0));
            }
            other => panic!("expected degenerate pixel, got {other:?}"),
        }
    }

    #[test]
    fn normalized_moments_are_exact_to_tolerance() {
        let n_t = 500;
        let frames = Array2::from_shape_fn((n_t, 3), |(i, j)| {
            (i as f64 * 0.37 + j as f64).sin() * (j + 1) as f64 + j as f64 * 10.0
        });
        let s = series_from(frames);
        let (normalized, _) = normalize(&s, DEFAULT_SIGMA_FLOOR_REL).unwrap();
        for j in 0..3 {
            let col: Vec<f64> = normalized.column(j).to_vec();
            let mean = linalg::blocked_mean(&col);
            let var =
                linalg::blocked_mean(&col.iter().map(|v| v * v).collect::<Vec<_>>()) - mean * mean;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn pca_of_exchange_covariance() {
        // Build data whose population covariance is exactly [[2,1],[1,2]]:
        // four frames hitting (±a, ±b) combinations of the eigenvectors.
        let s2 = 2.0f64.sqrt();
        let l0 = 3.0f64.sqrt(); // eigenvalue 3 along (1,1)/sqrt(2)
        let l1 = 1.0f64; // eigenvalue 1 along (1,-1)/sqrt(2)
        let e0 = [1.0 / s2, 1.0 / s2];
        let e1 = [1.0 / s2, -1.0 / s2];
        let mut frames = Array2::zeros((4, 2));
        for (i, (sa, sb)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
            .iter()
            .enumerate()
        {
            for j in 0..2 {
                frames[(i, j)] = sa * l0 * e0[j] + sb * l1 * e1[j];
            }
        }
        let basis = fit_spatial_pca(frames.view()).unwrap();
        assert_abs_diff_eq!(basis.eigenvalues[0], 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(basis.eigenvalues[1], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(basis.basis[(0, 0)], 1.0 / s2, epsilon = 1e-10);
        assert_abs_diff_eq!(basis.basis[(1, 0)], 1.0 / s2, epsilon = 1e-10);
    }

    #[test]
    fn rank_one_data_has_rank_one_spectrum() {
        // X_n = c_n * v with nonzero-mean-free c.
        let v = array![3.0, 4.0]; // norm 5
        let c = [1.0, -1.0, 2.0, -2.0];
        let frames = Array2::from_shape_fn((4, 2), |(i, j)| c[i] * v[j]);
        let basis = fit_spatial_pca(frames.view()).unwrap();
        // var(c) = 2.5 (population), ||v||^2 = 25 -> lambda_0 = 62.5.
        assert_abs_diff_eq!(basis.eigenvalues[0], 62.5, epsilon = 1e-9);
        assert_abs_diff_eq!(basis.eigenvalues[1], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn covariance_is_reconstructed_by_eigenpairs() {
        let frames = Array2::from_shape_fn((256, 6), |(i, j)| {
            ((i * (j + 2)) as f64 * 0.1).sin() + ((i + j) as f64 * 0.07).cos()
        });
        let cov = spatial_covariance(frames.view()).unwrap();
        let basis = fit_spatial_pca(frames.view()).unwrap();
        let lam = Array2::from_diag(&basis.eigenvalues);
        let rebuilt = basis.basis.dot(&lam).dot(&basis.basis.t());
        let worst = cov
            .iter()
            .zip(rebuilt.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(worst < 1e-8 * basis.eigenvalues[0]);
    }

    #[test]
    fn subspace_selection_examples() {
        let l = array![98.0, 1.0, 1.0];
        assert_eq!(select_subspace(l.view(), 0.99).unwrap(), 2);
        assert_eq!(select_subspace(l.view(), 1.0).unwrap(), 3);
        let l = array![1.0, 1.0, 1.0, 1.0];
        assert_eq!(select_subspace(l.view(), 0.5).unwrap(), 2);
        let l = array![1.0, 1.0, 0.0];
        assert_eq!(select_subspace(l.view(), 1.0).unwrap(), 2);
    }

    #[test]
    fn subspace_selection_is_monotone_in_fraction() {
        let l = array![5.0, 3.0, 1.5, 0.4, 0.1];
        let mut prev = 0;
        for k in 1..=20 {
            let f = k as f64 / 20.0;
            let n = select_subspace(l.view(), f).unwrap();
            assert!(n >= prev, "fraction {f} gave {n} < {prev}");
            prev = n;
        }
    }

    #[test]
    fn identity_basis_projection_is_identity() {
        let frames = array![[1.0, 2.0], [3.0, 4.0]];
        let basis = SpatialBasis {
            basis: Array2::eye(2),
            eigenvalues: array![1.0, 1.0],
        };
        let ns = project(frames.view(), &basis, 2).unwrap();
        assert_eq!(ns.coefficients, frames);
    }

    #[test]
    fn projection_preserves_energy_and_decorrelates() {
        let frames = Array2::from_shape_fn((512, 5), |(i, j)| {
            ((i * (j + 1)) as f64 * 0.01).sin() + (i as f64 * 0.003 * (j as f64 + 0.5)).cos()
        });
        let basis = fit_spatial_pca(frames.view()).unwrap();
        let ns = project(frames.view(), &basis, 3).unwrap();
        for n in 0..frames.nrows() {
            let e_in: f64 = frames.row(n).iter().map(|v| v * v).sum();
            let e_out: f64 = ns.coefficients.row(n).iter().map(|v| v * v).sum();
            assert_abs_diff_eq!(e_in, e_out, epsilon = 1e-10 * e_in.max(1.0));
        }
        // In-sample cross-covariance of distinct coefficients vanishes.
        let cov = spatial_covariance(ns.coefficients.view()).unwrap();
        let l0 = basis.eigenvalues[0];
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    assert!(cov[(i, j)].abs() < 1e-6 * l0);
                }
            }
        }
        // Per-component second moments recover the eigenvalues.
        for i in 0..5 {
            assert_abs_diff_eq!(cov[(i, i)], basis.eigenvalues[i], epsilon = 1e-8 * l0);
        }
    }

    #[test]
    fn two_pixel_projection_by_hand() {
        let s2 = 2.0f64.sqrt();
        let basis = SpatialBasis {
            basis: array![[1.0 / s2, 1.0 / s2], [1.0 / s2, -1.0 / s2]],
            eigenvalues: array![1.0, 1.0],
        };
        let frames = array![[1.0, 1.0]];
        let ns = project(frames.view(), &basis, 2).unwrap();
        assert_abs_diff_eq!(ns.coefficients[(0, 0)], s2, epsilon = 1e-12);
        assert_abs_diff_eq!(ns.coefficients[(0, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn full_round_trip_reproduces_measurement() {
        let g = ApertureGeometry::full(2, 3);
        let frames = Array2::from_shape_fn((64, 6), |(i, j)| {
            10.0 * (j as f64 + 1.0) + ((i + j * 3) as f64 * 0.21).sin() * (1.0 + j as f64)
        });
        let series = PhaseScreenSeries::new(g, frames.clone(), 1.0, "t").unwrap();
        let (normalized, norm) = normalize(&series, DEFAULT_SIGMA_FLOOR_REL).unwrap();
        let basis = fit_spatial_pca(normalized.view()).unwrap();
        let ns = project(normalized.view(), &basis, 6).unwrap();
        let rebuilt = reconstruct(ns.coefficients.view(), &basis, &norm);
        for (a, b) in rebuilt.iter().zip(frames.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8 * b.abs().max(1.0));
        }
    }
}
