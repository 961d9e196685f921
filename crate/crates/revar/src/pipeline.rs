//! End-to-end parameter estimation and the evaluation/sweep harnesses the
//! CLI exposes.
//!
//! `fit` runs the full chain on the training split: normalize, spatial PCA,
//! subspace selection, filter-gain estimation, weight training, residual
//! extraction, and re-whitening. The returned report carries the training
//! MSE per component and residual whiteness statistics.

use crate::error::{Result, RevarError};
use crate::linalg;
use crate::longrange::{self, AlphaForm};
use crate::metrics::{self, EvaluationConfig, EvaluationReport, WelchConfig};
use crate::model::{Provenance, RevarModel};
use crate::preprocessing::{self, DEFAULT_SIGMA_FLOOR_REL};
use crate::series::PhaseScreenSeries;
use crate::synthesis::{self, SynthesisConfig};
use crate::whitening::{self, DEFAULT_INVERSE_FLOOR};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Fit settings. Defaults mirror the standard protocol: four lags, two
/// filters, a 99% variance subspace, and an 80/20 train/eval split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    pub n_lags: usize,
    pub n_filters: usize,
    pub variance_fraction: f64,
    pub train_fraction: f64,
    pub welch: WelchConfig,
    /// Single-lag full-space VAR baseline (forces `n_lags=1`, `n_filters=0`,
    /// `variance_fraction=1`).
    pub baseline_vogel: bool,
    pub alpha_form: AlphaForm,
    pub sigma_floor_rel: f64,
    pub inverse_floor: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            n_lags: 4,
            n_filters: 2,
            variance_fraction: 0.99,
            train_fraction: 0.8,
            welch: WelchConfig::default(),
            baseline_vogel: false,
            alpha_form: AlphaForm::Linear,
            sigma_floor_rel: DEFAULT_SIGMA_FLOOR_REL,
            inverse_floor: DEFAULT_INVERSE_FLOOR,
        }
    }
}

impl FitConfig {
    fn effective(&self) -> FitConfig {
        let mut cfg = self.clone();
        if cfg.baseline_vogel {
            cfg.n_lags = 1;
            cfg.n_filters = 0;
            cfg.variance_fraction = 1.0;
        }
        cfg
    }

    fn validate(&self) -> Result<()> {
        if self.n_lags == 0 {
            return Err(RevarError::InvalidInput(
                "number of time lags must be at least 1".into(),
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(RevarError::InvalidInput(format!(
                "train fraction must lie in (0, 1], got {}",
                self.train_fraction
            )));
        }
        if !(self.variance_fraction > 0.0 && self.variance_fraction <= 1.0) {
            return Err(RevarError::InvalidInput(format!(
                "variance fraction must lie in (0, 1], got {}",
                self.variance_fraction
            )));
        }
        Ok(())
    }
}

/// In-sample whiteness of the whitened residuals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WhitenessStats {
    /// Largest absolute off-diagonal entry of the sample covariance over
    /// non-floored components.
    pub max_offdiag_covariance: f64,
    /// Largest absolute per-component autocorrelation over the checked lags.
    pub max_lag_autocorrelation: f64,
    pub lags_checked: usize,
    pub n_active_components: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub n_train: usize,
    pub n_eval: usize,
    pub n_components: usize,
    pub cutoff_frequency: Option<f64>,
    pub alphas: Vec<f64>,
    pub variance_fraction_achieved: f64,
    pub training_mse_per_component: Vec<f64>,
    pub training_mse_total: f64,
    pub rank_deficient: bool,
    pub whiteness: WhitenessStats,
}

/// Estimate a model from the training split of `series`.
pub fn fit(series: &PhaseScreenSeries, config: &FitConfig) -> Result<(RevarModel, FitReport)> {
    config.validate()?;
    let cfg = config.effective();
    let n_total = series.n_frames();
    let n_train = ((n_total as f64 * cfg.train_fraction).floor() as usize)
        .max(2)
        .min(n_total);
    let train = if n_train == n_total {
        series.clone()
    } else {
        series.head(n_train)?
    };

    let (normalized, norm) = preprocessing::normalize(&train, cfg.sigma_floor_rel)?;
    let basis = preprocessing::fit_spatial_pca(normalized.view())?;
    let n_components = preprocessing::select_subspace(
        basis.eigenvalues.view(),
        cfg.variance_fraction,
    )?;
    let projected = preprocessing::project(normalized.view(), &basis, n_components)?;
    let top = projected.top();

    let cutoff = if train.n_frames() >= cfg.welch.segment_length {
        Some(longrange::estimate_cutoff(top, &cfg.welch)?)
    } else if cfg.n_filters == 0 {
        None
    } else {
        return Err(RevarError::InvalidInput(format!(
            "training split of {} frames is shorter than the Welch segment {}; \
             low-pass gains need a spectral peak estimate (reduce --segment)",
            train.n_frames(),
            cfg.welch.segment_length
        )));
    };
    let alphas = match cutoff {
        Some(f_c) if cfg.n_filters > 0 => {
            longrange::alphas_from_cutoff(f_c, cfg.n_filters, cfg.alpha_form)?
        }
        _ => Vec::new(),
    };

    let trained = longrange::fit_weights(
        projected.coefficients.view(),
        n_components,
        &alphas,
        cfg.n_lags,
    )?;
    let residuals = longrange::residuals(
        projected.coefficients.view(),
        &trained.weights,
        &alphas,
    )?;

    let mut mse_per_component = Vec::with_capacity(n_components);
    let rows = residuals.residuals.nrows() as f64;
    for j in 0..n_components {
        let col = residuals.residuals.column(j);
        let sq: Vec<f64> = col.iter().map(|v| v * v).collect();
        mse_per_component.push(linalg::blocked_sum(&sq) / rows);
    }
    let training_mse_total = linalg::blocked_sum(&mse_per_component);

    let transform = whitening::fit_whitening(&residuals, cfg.inverse_floor)?;
    let whitened = transform.whiten_rows(residuals.residuals.view())?;
    let whiteness = whiteness_stats(
        &whitened,
        &transform,
        cfg.n_lags.max(5),
    )?;

    let total_variance = linalg::blocked_sum(basis.eigenvalues.as_slice().expect("contiguous"));
    let head_variance: f64 = basis.eigenvalues.iter().take(n_components).sum();
    let coefficient_rms = total_variance.max(0.0).sqrt();

    let model = RevarModel {
        geometry: train.geometry().clone(),
        mean: norm.mean,
        std: norm.std,
        basis: basis.basis,
        lambda: basis.eigenvalues,
        n_components,
        alphas,
        weights: trained.weights,
        whitening: transform,
        provenance: Provenance {
            n_train_steps: n_train,
            variance_fraction: cfg.variance_fraction,
            cutoff_frequency: cutoff,
            coefficient_rms,
            sampling_frequency: Some(series.sampling_frequency()),
            label: series.label().to_string(),
        },
    };

    let report = FitReport {
        n_train,
        n_eval: n_total - n_train,
        n_components,
        cutoff_frequency: cutoff,
        alphas: model.alphas.clone(),
        variance_fraction_achieved: if total_variance > 0.0 {
            head_variance / total_variance
        } else {
            0.0
        },
        training_mse_per_component: mse_per_component,
        training_mse_total,
        rank_deficient: trained.rank_deficient,
        whiteness,
    };
    Ok((model, report))
}

fn whiteness_stats(
    whitened: &ndarray::Array2<f64>,
    transform: &whitening::WhiteningTransform,
    lags: usize,
) -> Result<WhitenessStats> {
    let active: Vec<usize> = (0..transform.dim())
        .filter(|&i| !transform.is_floored(i))
        .collect();
    if active.is_empty() {
        return Ok(WhitenessStats {
            max_offdiag_covariance: 0.0,
            max_lag_autocorrelation: 0.0,
            lags_checked: lags,
            n_active_components: 0,
        });
    }
    let active_block = whitened.select(ndarray::Axis(1), &active);
    let cov = preprocessing::spatial_covariance(active_block.view())?;
    let mut max_offdiag = 0.0f64;
    for i in 0..active.len() {
        for j in 0..active.len() {
            if i != j {
                max_offdiag = max_offdiag.max(cov[(i, j)].abs());
            }
        }
    }
    let max_auto = longrange::max_lag_autocorrelation(active_block.view(), lags);
    Ok(WhitenessStats {
        max_offdiag_covariance: max_offdiag,
        max_lag_autocorrelation: max_auto,
        lags_checked: lags,
        n_active_components: active.len(),
    })
}

/// Replicate-generation settings for model evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateConfig {
    pub replicates: usize,
    pub frames_per_replicate: usize,
    pub seed: u64,
    pub burn_in: usize,
}

/// Generate `replicates` synthetic series (seeds `seed + index`) and average
/// their evaluation reports against the reference. Replicates run
/// concurrently; the aggregate is independent of thread count.
pub fn evaluate_model(
    model: &RevarModel,
    reference: &PhaseScreenSeries,
    rep: &ReplicateConfig,
    eval: &EvaluationConfig,
) -> Result<(EvaluationReport, Vec<EvaluationReport>)> {
    if rep.replicates == 0 {
        return Err(RevarError::InvalidInput(
            "at least one replicate is required".into(),
        ));
    }
    let reports: Result<Vec<EvaluationReport>> = (0..rep.replicates)
        .into_par_iter()
        .map(|i| {
            let mut cfg = SynthesisConfig::new(
                rep.frames_per_replicate,
                rep.seed.wrapping_add(i as u64),
            );
            cfg.burn_in = rep.burn_in;
            let out = synthesis::generate(model, &cfg)?;
            metrics::evaluate(reference, &out.series, eval)
        })
        .collect();
    let reports = reports?;
    let averaged = EvaluationReport::average(&reports)?;
    Ok((averaged, reports))
}

/// One row of the lag sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_lags: usize,
    pub n_components: usize,
    pub training_mse_total: f64,
    pub opd_tps_nrmse: f64,
    pub slopes_tps_nrmse: f64,
    pub opd_rms_relative_error: f64,
    pub structure_function_nrmse: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub replicates: usize,
    pub frames_per_replicate: usize,
}

/// Fit and evaluate once per lag count, against the held-out split.
pub fn sweep_lags(
    series: &PhaseScreenSeries,
    lags: &[usize],
    base: &FitConfig,
    rep: &ReplicateConfig,
    eval: &EvaluationConfig,
) -> Result<SweepReport> {
    if lags.is_empty() {
        return Err(RevarError::InvalidInput("empty lag list".into()));
    }
    if base.train_fraction >= 1.0 {
        return Err(RevarError::InvalidInput(
            "the lag sweep needs a held-out split; use a train fraction below 1".into(),
        ));
    }
    let n_train = ((series.n_frames() as f64 * base.train_fraction).floor() as usize).max(2);
    let heldout = series.tail(n_train)?;
    let mut rows = Vec::with_capacity(lags.len());
    for &n_lags in lags {
        let mut cfg = base.clone();
        cfg.n_lags = n_lags;
        let (model, report) = fit(series, &cfg)?;
        let (avg, _) = evaluate_model(&model, &heldout, rep, eval)?;
        rows.push(SweepRow {
            n_lags,
            n_components: report.n_components,
            training_mse_total: report.training_mse_total,
            opd_tps_nrmse: avg.opd_tps_nrmse,
            slopes_tps_nrmse: avg.slopes_tps_nrmse,
            opd_rms_relative_error: avg.opd_rms_relative_error,
            structure_function_nrmse: avg.structure_function_nrmse,
        });
    }
    Ok(SweepReport {
        rows,
        replicates: rep.replicates,
        frames_per_replicate: rep.frames_per_replicate,
    })
}
