//! The full fitted parameter set: normalization, first spatial PCA,
//! long-range predictor, and whitening transform.

use crate::error::{Result, RevarError};
use crate::geometry::ApertureGeometry;
use crate::linalg;
use crate::longrange::PredictorWeights;
use crate::whitening::WhiteningTransform;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

/// Training metadata carried with a model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    /// Frames used for estimation.
    pub n_train_steps: usize,
    /// Spatial variance fraction the subspace was selected for.
    pub variance_fraction: f64,
    /// Spectral peak of the leading coefficients in cycles/step, when
    /// estimated.
    pub cutoff_frequency: Option<f64>,
    /// RMS coefficient norm of the training data; the synthesis stability
    /// guard is expressed relative to this.
    pub coefficient_rms: f64,
    /// Sampling rate of the training data in Hz; synthetic output inherits it.
    pub sampling_frequency: Option<f64>,
    pub label: String,
}

/// Everything needed to synthesize: per-pixel normalization `(mu_X,
/// sigma_X)`, orthonormal spatial basis `E` with variances `lambda`, the
/// prediction subspace size, the predictor weights and filter gains, and the
/// residual whitening transform.
#[derive(Debug, Clone)]
pub struct RevarModel {
    pub geometry: ApertureGeometry,
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
    /// `N_p x N_p`, columns orthonormal.
    pub basis: Array2<f64>,
    /// Descending, non-negative.
    pub lambda: Array1<f64>,
    pub n_components: usize,
    pub alphas: Vec<f64>,
    pub weights: PredictorWeights,
    pub whitening: WhiteningTransform,
    pub provenance: Provenance,
}

impl RevarModel {
    pub fn n_pixels(&self) -> usize {
        self.geometry.n_pixels()
    }

    pub fn n_lags(&self) -> usize {
        self.weights.n_lags()
    }

    pub fn n_filters(&self) -> usize {
        self.weights.n_filters()
    }

    /// Full validation: structural invariants plus the
    /// `||E^T E - I||_max` / `||U^T U - I||_max` orthonormality defect, which
    /// costs `O(N_p^3)`. Use [`RevarModel::DEFECT_TOL`] unless a test needs
    /// otherwise.
    pub fn validate(&self, basis_defect_tol: f64) -> Result<()> {
        self.validate_structure()?;
        let defect = linalg::orthonormality_defect(self.basis.view());
        if defect > basis_defect_tol {
            return Err(RevarError::ModelInvariant(format!(
                "spatial basis orthonormality defect {defect:.3e} exceeds {basis_defect_tol:.1e}"
            )));
        }
        let defect = linalg::orthonormality_defect(self.whitening.basis.view());
        if defect > basis_defect_tol {
            return Err(RevarError::ModelInvariant(format!(
                "whitening basis orthonormality defect {defect:.3e} exceeds {basis_defect_tol:.1e}"
            )));
        }
        Ok(())
    }

    /// Shape, ordering, and range checks; everything except the cubic-cost
    /// orthonormality defect.
    pub fn validate_structure(&self) -> Result<()> {
        let n_p = self.n_pixels();
        let check_len = |name: &str, len: usize| -> Result<()> {
            if len != n_p {
                return Err(RevarError::dims(name, n_p, len));
            }
            Ok(())
        };
        check_len("mean vector", self.mean.len())?;
        check_len("std vector", self.std.len())?;
        check_len("lambda vector", self.lambda.len())?;
        check_len("whitening mean", self.whitening.mean.len())?;
        check_len("whitening eigenvalues", self.whitening.eigenvalues.len())?;
        if self.basis.dim() != (n_p, n_p) {
            return Err(RevarError::dims(
                "spatial basis",
                format!("{n_p}x{n_p}"),
                format!("{}x{}", self.basis.nrows(), self.basis.ncols()),
            ));
        }
        if self.whitening.basis.dim() != (n_p, n_p) {
            return Err(RevarError::dims(
                "whitening basis",
                format!("{n_p}x{n_p}"),
                format!(
                    "{}x{}",
                    self.whitening.basis.nrows(),
                    self.whitening.basis.ncols()
                ),
            ));
        }
        if self.std.iter().any(|&s| !(s > 0.0)) {
            return Err(RevarError::ModelInvariant(
                "sigma_X must be strictly positive".into(),
            ));
        }
        if self.n_components == 0 || self.n_components > n_p {
            return Err(RevarError::ModelInvariant(format!(
                "subspace size {} out of range 1..={}",
                self.n_components, n_p
            )));
        }
        descending_nonnegative("lambda", &self.lambda)?;
        descending_nonnegative("sigma_xi", &self.whitening.eigenvalues)?;
        for (i, &a) in self.alphas.iter().enumerate() {
            if !(a > 0.0 && a <= 1.0) {
                return Err(RevarError::InvalidAlpha { index: i, value: a });
            }
        }
        if self.alphas.len() != self.weights.n_filters() {
            return Err(RevarError::dims(
                "filter gains",
                self.weights.n_filters(),
                self.alphas.len(),
            ));
        }
        self.weights.validate()?;
        if self.weights.n_components() != self.n_components {
            return Err(RevarError::dims(
                "predictor dimension",
                self.n_components,
                self.weights.n_components(),
            ));
        }
        let variance_ok = {
            let total = linalg::blocked_sum(self.lambda.as_slice().expect("contiguous"));
            let head: f64 = self.lambda.iter().take(self.n_components).sum();
            total <= 0.0 || head / total >= self.provenance.variance_fraction - 1e-9
        };
        if !variance_ok {
            return Err(RevarError::ModelInvariant(format!(
                "subspace of {} components does not reach the recorded variance fraction {}",
                self.n_components, self.provenance.variance_fraction
            )));
        }
        Ok(())
    }

    pub const DEFECT_TOL: f64 = 1e-8;

    /// Orthonormality spot-check on `pairs` deterministic pseudo-random
    /// column pairs of both bases; cheap enough to run on every load.
    pub fn spot_check_orthonormality(&self, pairs: usize) -> Result<()> {
        let n_p = self.n_pixels();
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state as usize
        };
        for (name, basis) in [("spatial", &self.basis), ("whitening", &self.whitening.basis)] {
            for _ in 0..pairs {
                let i = next() % n_p;
                let j = next() % n_p;
                let dot: f64 = (0..n_p).map(|r| basis[(r, i)] * basis[(r, j)]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                if (dot - target).abs() > Self::DEFECT_TOL {
                    return Err(RevarError::ModelInvariant(format!(
                        "{name} basis columns {i},{j} have inner product {dot:.3e}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn descending_nonnegative(name: &str, v: &Array1<f64>) -> Result<()> {
    let mut prev = f64::INFINITY;
    for (i, &x) in v.iter().enumerate() {
        if !(x >= 0.0) {
            return Err(RevarError::ModelInvariant(format!(
                "{name}[{i}] = {x} is negative or NaN"
            )));
        }
        if x > prev {
            return Err(RevarError::ModelInvariant(format!(
                "{name} is not sorted descending at index {i}"
            )));
        }
        prev = x;
    }
    Ok(())
}
