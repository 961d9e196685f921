//! Synthetic test-data generators with known ground truth.
//!
//! The long-range-AR oracle builds a model directly from drawn parameters:
//! a random orthogonal spatial basis, designed coefficient variances with a
//! small white tail outside the dynamic subspace, and random prediction
//! weights rescaled until the companion matrix is comfortably stable. A short
//! pilot run calibrates the per-pixel scaling so the generated data has
//! near-uniform pixel variance, which keeps the refitted subspace aligned
//! with the dynamic one. Simpler generators (white noise, a translating
//! frozen pattern, spatial modes with sinusoidal histories) cover the metric
//! and trainer edge cases.

use crate::error::{Result, RevarError};
use crate::geometry::ApertureGeometry;
use crate::linalg;
use crate::longrange::{FilterBank, PredictorWeights};
use crate::model::{Provenance, RevarModel};
use crate::noise::NoiseSource;
use crate::series::PhaseScreenSeries;
use crate::synthesis::{self, SynthesisConfig};
use crate::whitening::{WhiteningTransform, DEFAULT_INVERSE_FLOOR};
use ndarray::{Array1, Array2, ArrayView1};

/// Parameters of the long-range-AR oracle model.
#[derive(Debug, Clone)]
pub struct LongRangeOracleParams {
    pub rows: usize,
    pub cols: usize,
    /// Dynamic subspace size; the remaining components carry white tail
    /// variance.
    pub n_components: usize,
    pub n_lags: usize,
    pub n_filters: usize,
    /// Spectral peak of the component dynamics in cycles/step; the filter
    /// gains are set one and two decades below it.
    pub peak_frequency: f64,
    /// Tail variance as a fraction of the dynamic variance (keeps the
    /// refitted 99% subspace at or just above `n_components`).
    pub tail_fraction: f64,
    pub sampling_frequency: f64,
}

impl Default for LongRangeOracleParams {
    fn default() -> Self {
        LongRangeOracleParams {
            rows: 5,
            cols: 5,
            n_components: 20,
            n_lags: 3,
            n_filters: 2,
            peak_frequency: 0.12,
            tail_fraction: 0.02,
            sampling_frequency: 1000.0,
        }
    }
}

/// Random orthogonal matrix via QR of a Gaussian draw, diagonal sign fixed.
pub fn random_orthogonal(n: usize, noise: &mut NoiseSource) -> Array2<f64> {
    let mut g = nalgebra::DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let col = noise.next_vector(n);
        for i in 0..n {
            g[(i, j)] = col[i];
        }
    }
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    Array2::from_shape_fn((n, n), |(i, j)| q[(i, j)])
}

/// Companion (state-transition) matrix of the noise-free predictor over the
/// stacked state `[x_n, ..., x_{n-N_L+1}, y_1, ..., y_Nm]`.
pub fn companion_matrix(weights: &PredictorWeights, alphas: &[f64]) -> Array2<f64> {
    let n_c = weights.n_components();
    let n_l = weights.n_lags();
    let n_m = weights.n_filters();
    let dim = n_c * (n_l + n_m);
    let mut t = Array2::<f64>::zeros((dim, dim));

    // Row block 0: the predictor itself.
    for (l, a) in weights.lag_weights.iter().enumerate() {
        for i in 0..n_c {
            for j in 0..n_c {
                t[(i, l * n_c + j)] = a[(i, j)];
            }
        }
    }
    for (m, b) in weights.filter_weights.iter().enumerate() {
        for i in 0..n_c {
            for j in 0..n_c {
                t[(i, (n_l + m) * n_c + j)] = b[(i, j)];
            }
        }
    }
    // Lag shift blocks.
    for l in 1..n_l {
        for i in 0..n_c {
            t[(l * n_c + i, (l - 1) * n_c + i)] = 1.0;
        }
    }
    // Filter rows: y_i' = (1 - alpha_i) y_i + alpha_i x', with x' the
    // predictor row above.
    for (m, &alpha) in alphas.iter().enumerate() {
        let row0 = (n_l + m) * n_c;
        for i in 0..n_c {
            for j in 0..dim {
                t[(row0 + i, j)] = alpha * t[(i, j)];
            }
            t[(row0 + i, row0 + i)] += 1.0 - alpha;
        }
    }
    t
}

/// Spectral radius estimate by power iteration with a geometric-mean growth
/// rate. Long warm-up and two independent starts keep the estimate honest
/// when several modes cluster near the dominant one; the growth mean rides
/// out complex dominant pairs.
pub fn spectral_radius(t: &Array2<f64>, noise: &mut NoiseSource) -> f64 {
    let n = t.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut best = 0.0f64;
    for _ in 0..2 {
        let mut v = noise.next_vector(n);
        let norm0: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            continue;
        }
        v.mapv_inplace(|x| x / norm0);
        let warmup = 1200;
        let samples = 400;
        let mut log_sum = 0.0;
        let mut dead = false;
        for k in 0..(warmup + samples) {
            let w = t.dot(&v);
            let g: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if g == 0.0 {
                dead = true;
                break;
            }
            if k >= warmup {
                log_sum += g.ln();
            }
            v = w / g;
        }
        if !dead {
            best = best.max((log_sum / samples as f64).exp());
        }
    }
    best
}

/// Random prediction weights rescaled until the companion spectral radius
/// sits at the requested target.
pub fn random_stable_weights(
    n_components: usize,
    n_lags: usize,
    alphas: &[f64],
    target_radius: f64,
    noise: &mut NoiseSource,
) -> Result<PredictorWeights> {
    if !(target_radius > 0.0 && target_radius < 1.0) {
        return Err(RevarError::InvalidInput(format!(
            "target spectral radius {target_radius} must lie in (0, 1)"
        )));
    }
    let n_m = alphas.len();
    let mut weights = PredictorWeights::zeros(n_components, n_lags, n_m);
    let couple = 0.25 / (n_components as f64).sqrt();
    let diag_base = [0.55, 0.2, 0.1, 0.06, 0.04, 0.03, 0.02, 0.015];
    for (l, m) in weights.lag_weights.iter_mut().enumerate() {
        let d = diag_base[l.min(diag_base.len() - 1)];
        for i in 0..n_components {
            let row = noise.next_vector(n_components);
            for j in 0..n_components {
                m[(i, j)] = couple * d * 2.0 * row[j];
            }
            m[(i, i)] += d;
        }
    }
    for (k, m) in weights.filter_weights.iter_mut().enumerate() {
        let d = 0.3 / (k + 1) as f64;
        for i in 0..n_components {
            let row = noise.next_vector(n_components);
            for j in 0..n_components {
                m[(i, j)] = couple * d * row[j];
            }
            m[(i, i)] += d;
        }
    }

    // The filter poles 1 - alpha_i stay fixed whatever the weights do, so the
    // achievable radius is floored by the slowest pole; shrink the weights
    // until the radius drops to the requested target or that floor.
    let max_pole = alphas.iter().map(|a| 1.0 - a).fold(0.0f64, f64::max);
    let effective_target = target_radius.max(max_pole + 0.3 * (1.0 - max_pole));
    for _ in 0..48 {
        let t = companion_matrix(&weights, alphas);
        let rho = spectral_radius(&t, noise);
        if rho <= effective_target {
            return Ok(weights);
        }
        let scale = (0.9 * effective_target / rho).clamp(0.3, 0.95);
        for m in weights
            .lag_weights
            .iter_mut()
            .chain(weights.filter_weights.iter_mut())
        {
            m.mapv_inplace(|v| v * scale);
        }
    }
    let t = companion_matrix(&weights, alphas);
    let rho = spectral_radius(&t, noise);
    if rho < 1.0 {
        Ok(weights)
    } else {
        Err(RevarError::Unstable {
            step: 0,
            detail: format!("could not stabilize oracle weights (radius {rho})"),
        })
    }
}

/// Largest achievable companion radius floor for a set of filter gains.
pub fn pole_floor(alphas: &[f64]) -> f64 {
    alphas.iter().map(|a| 1.0 - a).fold(0.0f64, f64::max)
}

/// Band-pass prediction weights: each component rides a damped oscillator
/// whose poles sit at `r_i exp(+-i 2 pi f_i)` with peak frequencies spread
/// around `f_center`, plus weak cross-coupling and small filter feedback.
/// The resulting coefficient spectra rise from low power at DC to a clear
/// peak, the regime the gain estimator assumes.
pub fn bandpass_stable_weights(
    n_components: usize,
    n_lags: usize,
    alphas: &[f64],
    f_center: f64,
    noise: &mut NoiseSource,
) -> Result<PredictorWeights> {
    if n_lags < 2 {
        return Err(RevarError::InvalidInput(
            "the band-pass oracle needs at least two lags".into(),
        ));
    }
    let n_m = alphas.len();
    let mut weights = PredictorWeights::zeros(n_components, n_lags, n_m);
    let unit = |v: f64| 0.5 * (1.0 + (v / (1.0 + v.abs()))); // squash to (0,1)
    for i in 0..n_components {
        let draw = noise.next_vector(2);
        let f_i = f_center * (0.8 + 0.4 * unit(draw[0]));
        let r_i = 0.82 + 0.10 * unit(draw[1]);
        let omega = std::f64::consts::TAU * f_i;
        weights.lag_weights[0][(i, i)] = 2.0 * r_i * omega.cos();
        weights.lag_weights[1][(i, i)] = -r_i * r_i;
    }
    let couple = 0.05 / (n_components as f64).sqrt();
    for m in weights.lag_weights.iter_mut().take(2) {
        for i in 0..n_components {
            let row = noise.next_vector(n_components);
            for j in 0..n_components {
                if i != j {
                    m[(i, j)] += couple * row[j];
                }
            }
        }
    }
    for (l, m) in weights.lag_weights.iter_mut().enumerate().skip(2) {
        let scale = 0.03 / (l as f64);
        for i in 0..n_components {
            let row = noise.next_vector(n_components);
            for j in 0..n_components {
                m[(i, j)] = scale * couple * row[j];
            }
            m[(i, i)] += scale;
        }
    }
    for (k, m) in weights.filter_weights.iter_mut().enumerate() {
        let d = 0.015 / (k + 1) as f64;
        for i in 0..n_components {
            let row = noise.next_vector(n_components);
            for j in 0..n_components {
                m[(i, j)] = 0.2 * couple * d * row[j];
            }
            m[(i, i)] += d;
        }
    }

    // With weak coupling the oscillator radii dominate; verify and shrink in
    // the rare case coupling pushes the companion radius to the edge.
    let floor = pole_floor(alphas);
    let limit = (0.995f64).max(floor + 0.5 * (1.0 - floor));
    for _ in 0..16 {
        let t = companion_matrix(&weights, alphas);
        let rho = spectral_radius(&t, noise);
        if rho <= limit {
            return Ok(weights);
        }
        for m in weights
            .lag_weights
            .iter_mut()
            .chain(weights.filter_weights.iter_mut())
        {
            m.mapv_inplace(|v| v * 0.97);
        }
    }
    Err(RevarError::Unstable {
        step: 0,
        detail: "could not stabilize band-pass oracle weights".into(),
    })
}

/// Exact stationary covariance of the noise-driven companion system, by the
/// doubling iteration `P <- A P A^T + P`, `A <- A^2` starting from the
/// one-step noise injection. Noise enters the current-state block directly
/// and each filter block scaled by its gain.
pub fn stationary_state_covariance(
    weights: &PredictorWeights,
    alphas: &[f64],
    noise_vars: &[f64],
) -> Result<Array2<f64>> {
    let n_c = weights.n_components();
    if noise_vars.len() != n_c {
        return Err(RevarError::dims("noise variance vector", n_c, noise_vars.len()));
    }
    let n_l = weights.n_lags();
    let n_m = weights.n_filters();
    let dim = n_c * (n_l + n_m);
    let t = companion_matrix(weights, alphas);

    // G Q G^T for G = [I; 0...; alpha_1 I; ...; alpha_m I].
    let mut q = Array2::<f64>::zeros((dim, dim));
    let mut scales = vec![(0usize, 1.0f64)];
    for (m, &alpha) in alphas.iter().enumerate() {
        scales.push(((n_l + m) * n_c, alpha));
    }
    for &(row_a, sa) in &scales {
        for &(row_b, sb) in &scales {
            for k in 0..n_c {
                q[(row_a + k, row_b + k)] = sa * sb * noise_vars[k];
            }
        }
    }

    let mut a = t;
    let mut p = q;
    for _ in 0..64 {
        let apat = a.dot(&p).dot(&a.t());
        let step: f64 = apat.iter().map(|v| v.abs()).sum();
        p += &apat;
        a = a.dot(&a);
        let scale: f64 = p.iter().map(|v| v.abs()).sum();
        if !step.is_finite() || !scale.is_finite() {
            return Err(RevarError::Unstable {
                step: 0,
                detail: "stationary covariance diverged; dynamics are unstable".into(),
            });
        }
        if step <= 1e-14 * scale {
            break;
        }
    }
    Ok(p)
}

/// Stationary variance of each current-state component.
pub fn stationary_component_variances(
    weights: &PredictorWeights,
    alphas: &[f64],
    noise_vars: &[f64],
) -> Result<Vec<f64>> {
    let p = stationary_state_covariance(weights, alphas, noise_vars)?;
    Ok((0..weights.n_components()).map(|i| p[(i, i)]).collect())
}

/// Forward-simulate the coefficient process under the training convention:
/// rows `0..N_L` are the given free initial data, filters start at zero
/// before row 0, and every later row is the prediction plus an optional
/// noise row.
pub fn simulate_coefficients(
    weights: &PredictorWeights,
    alphas: &[f64],
    initial: &Array2<f64>,
    n_steps: usize,
    mut noise_row: Option<&mut dyn FnMut(usize) -> Array1<f64>>,
) -> Result<Array2<f64>> {
    let n_c = weights.n_components();
    let n_lags = weights.n_lags();
    if initial.dim() != (n_lags, n_c) {
        return Err(RevarError::dims(
            "initial coefficient rows",
            format!("{n_lags}x{n_c}"),
            format!("{}x{}", initial.nrows(), initial.ncols()),
        ));
    }
    if n_steps < n_lags {
        return Err(RevarError::InvalidInput(format!(
            "simulation of {n_steps} steps cannot hold {n_lags} initial rows"
        )));
    }
    let mut coeffs = Array2::<f64>::zeros((n_steps, n_c));
    let mut filters = FilterBank::new(alphas, n_c)?;
    for n in 0..n_steps {
        if n < n_lags {
            coeffs.row_mut(n).assign(&initial.row(n));
        } else {
            let lags: Vec<ArrayView1<'_, f64>> =
                (1..=n_lags).map(|l| coeffs.row(n - l)).collect();
            let mut x = weights.predict(&lags, filters.states())?;
            if let Some(f) = noise_row.as_mut() {
                x += &f(n);
            }
            coeffs.row_mut(n).assign(&x);
        }
        let row = coeffs.row(n).to_owned();
        filters.step(row.view());
    }
    Ok(coeffs)
}

/// Build a calibrated oracle model: known weights, orthogonal bases, and a
/// per-pixel scaling measured from a pilot run so output pixel variances are
/// near uniform.
pub fn random_stable_model(params: &LongRangeOracleParams, seed: u64) -> Result<RevarModel> {
    let n_p = params.rows * params.cols;
    let n_c = params.n_components;
    if n_c == 0 || n_c > n_p {
        return Err(RevarError::InvalidInput(format!(
            "oracle subspace {n_c} out of range 1..={n_p}"
        )));
    }
    let mut noise = NoiseSource::new(seed ^ 0x6f72_61_63_6c_65);
    let geometry = ApertureGeometry::full(params.rows, params.cols);

    let alphas = if params.n_filters > 0 {
        crate::longrange::alphas_from_cutoff(
            params.peak_frequency,
            params.n_filters,
            crate::longrange::AlphaForm::Linear,
        )?
    } else {
        Vec::new()
    };
    let weights = bandpass_stable_weights(
        n_c,
        params.n_lags,
        &alphas,
        params.peak_frequency,
        &mut noise,
    )?;

    // Residual components stay independent across coefficient index (the
    // whitening basis is a permutation), so the head/tail covariance blocks
    // separate exactly and a refitted subspace cannot tilt into the tail.
    // The spatial basis carries the non-trivial rotation.
    let basis = random_orthogonal(n_p, &mut noise);

    // Stationary head variances follow a descending 6:1 ladder: the weakest
    // dynamic component then holds ~1.8% of the head variance, which a 99%
    // variance cut can never drop from the subspace. The per-component noise
    // that realizes the ladder is solved exactly through the stationary
    // covariance; a few fixed-point passes absorb the weak cross-coupling.
    let v_targets: Vec<f64> = (0..n_c)
        .map(|i| {
            let q = (1.0f64 / 6.0).powf(1.0 / (n_c.max(2) - 1) as f64);
            3.0 * q.powi(i as i32)
        })
        .collect();
    let calibrate_noise = |weights: &PredictorWeights,
                           alphas: &[f64]|
     -> Result<(Vec<f64>, Vec<f64>)> {
        let mut head_noise = vec![0.2f64; n_c];
        let mut realized = vec![0.0f64; n_c];
        for _ in 0..8 {
            realized = stationary_component_variances(weights, alphas, &head_noise)?;
            let mut worst = 0.0f64;
            for i in 0..n_c {
                let ratio = v_targets[i] / realized[i].max(1e-12);
                head_noise[i] = (head_noise[i] * ratio).clamp(1e-6, 10.0);
                worst = worst.max((ratio - 1.0).abs());
            }
            if worst < 1e-6 {
                break;
            }
        }
        Ok((head_noise, realized))
    };
    let (head_noise, _) = calibrate_noise(&model_weights_view(&weights), &alphas)?;

    // Noise ladder separation: near-equal whitening eigenvalues let the
    // fitted eigenbasis rotate freely inside the cluster and pick directions
    // aligned with sampling noise, which inflates the measured residual
    // autocorrelations. Enforce an 8% multiplicative gap between adjacent
    // levels, then a distinct tail ladder strictly below the weakest head
    // level.
    let mut desired_noise = vec![0.0f64; n_p];
    desired_noise[..n_c].copy_from_slice(&head_noise);
    let mut order: Vec<usize> = (0..n_c).collect();
    order.sort_by(|&a, &b| {
        desired_noise[b]
            .partial_cmp(&desired_noise[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    for w in order.windows(2) {
        let cap = 0.92 * desired_noise[w[0]];
        if desired_noise[w[1]] > cap {
            desired_noise[w[1]] = cap;
        }
    }
    // Tail components sit two decades below the weakest head noise: any
    // basis leakage of tail into the fitted head regressors then perturbs
    // the residuals negligibly, while the tail still carries real variance
    // through its own distinct ladder.
    let min_head_noise = order
        .last()
        .map(|&i| desired_noise[i])
        .unwrap_or(0.1);
    for (k, slot) in desired_noise.iter_mut().enumerate().skip(n_c) {
        *slot = 0.05 * min_head_noise * 0.75f64.powi((k - n_c) as i32);
    }

    // Final exact statistics under the separated noise.
    let head_var = stationary_component_variances(&weights, &alphas, &desired_noise[..n_c].to_vec())?;

    let mut lambda = Array1::<f64>::zeros(n_p);
    for i in 0..n_c {
        lambda[i] = head_var[i];
    }
    for i in (0..n_c.saturating_sub(1)).rev() {
        lambda[i] = lambda[i].max(lambda[i + 1]);
    }
    for i in n_c..n_p {
        lambda[i] = desired_noise[i].min(lambda[n_c - 1]);
    }
    let head_total: f64 = lambda.iter().take(n_c).sum();
    let head_min = lambda[n_c - 1];
    if n_p > n_c && head_min < 0.013 * (head_total + desired_noise[n_c..].iter().sum::<f64>()) {
        return Err(RevarError::ModelInvariant(format!(
            "oracle calibration failed: weakest dynamic variance {head_min:.3} cannot \
             survive a 99% cut of total {head_total:.3}"
        )));
    }

    // Whitening permutation: eigenvalues stored descending, each component
    // keeping its own noise level.
    let mut order: Vec<usize> = (0..n_p).collect();
    order.sort_by(|&a, &b| {
        desired_noise[b]
            .partial_cmp(&desired_noise[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut u = Array2::<f64>::zeros((n_p, n_p));
    let mut sorted_noise = Array1::<f64>::zeros(n_p);
    for (k, &comp) in order.iter().enumerate() {
        sorted_noise[k] = desired_noise[comp];
        u[(comp, k)] = 1.0;
    }

    let mut model = RevarModel {
        geometry,
        mean: Array1::zeros(n_p),
        std: Array1::ones(n_p),
        basis,
        lambda,
        n_components: n_c,
        alphas: alphas.clone(),
        weights,
        whitening: WhiteningTransform {
            mean: Array1::zeros(n_p),
            basis: u,
            eigenvalues: sorted_noise,
            inverse_floor: DEFAULT_INVERSE_FLOOR,
        },
        provenance: Provenance {
            n_train_steps: 0,
            variance_fraction: 1.0,
            cutoff_frequency: None,
            coefficient_rms: 0.0,
            sampling_frequency: Some(params.sampling_frequency),
            label: format!("oracle(seed={seed})"),
        },
    };

    // One pilot run: re-derive the filter gains from this process's own
    // spectral peak, found with the same Welch argmax a fit will use, so a
    // refit lands on (nearly) the same gains and the fitted class genuinely
    // nests the oracle.
    model.provenance.coefficient_rms =
        linalg::blocked_sum(model.lambda.as_slice().expect("contiguous")).sqrt();
    if params.n_filters > 0 {
        let pilot_frames = 8192.max(40 * params.n_lags);
        let mut pilot_cfg = SynthesisConfig::new(pilot_frames, seed ^ 0x70656b);
        pilot_cfg.emit_coefficients = true;
        pilot_cfg.burn_in = 800;
        let pilot = synthesis::generate(&model, &pilot_cfg)?;
        let coeffs = pilot.coefficients.expect("pilot coefficients");
        let f_hat = crate::longrange::estimate_cutoff(
            coeffs.view(),
            &crate::metrics::WelchConfig::default(),
        )?;
        model.alphas = crate::longrange::alphas_from_cutoff(
            f_hat,
            params.n_filters,
            crate::longrange::AlphaForm::Linear,
        )?;
        model.provenance.cutoff_frequency = Some(f_hat);
        let t = companion_matrix(&model.weights, &model.alphas);
        let rho = spectral_radius(&t, &mut noise);
        if rho >= 1.0 {
            return Err(RevarError::Unstable {
                step: 0,
                detail: format!("oracle destabilized by gain swap (radius {rho})"),
            });
        }
        // The swapped gains shift the stationary statistics slightly;
        // refresh them exactly.
        let head_var = stationary_component_variances(
            &model.weights,
            &model.alphas,
            &desired_noise[..n_c].to_vec(),
        )?;
        for i in 0..n_c {
            model.lambda[i] = head_var[i];
        }
        for i in (0..n_c.saturating_sub(1)).rev() {
            model.lambda[i] = model.lambda[i].max(model.lambda[i + 1]);
        }
        for i in n_c..n_p {
            model.lambda[i] = desired_noise[i].min(model.lambda[n_c - 1]);
        }
    }

    // Exact per-pixel variance from the full stationary coefficient
    // covariance (cross-covariances from the coupling included) pushed
    // through the basis. Scaling it away leaves near-uniform output pixel
    // variance, so a refit's normalization stays a gentle transform and the
    // refitted basis cannot tilt head dynamics into the tail directions.
    let state_cov = stationary_state_covariance(
        &model.weights,
        &model.alphas,
        &desired_noise[..n_c].to_vec(),
    )?;
    let mut coeff_cov = Array2::<f64>::zeros((n_p, n_p));
    for i in 0..n_c {
        for j in 0..n_c {
            coeff_cov[(i, j)] = state_cov[(i, j)];
        }
    }
    for i in n_c..n_p {
        coeff_cov[(i, i)] = desired_noise[i];
    }
    let pixel_cov = model.basis.dot(&coeff_cov).dot(&model.basis.t());
    for j in 0..n_p {
        let var = pixel_cov[(j, j)];
        if var > 0.0 {
            model.std[j] = 1.0 / var.sqrt();
        }
    }
    // A small pixel-dependent offset exercises the mean path without letting
    // the DC bin dominate spectral comparisons.
    for j in 0..n_p {
        model.mean[j] = 0.05 * ((j % 7) as f64 - 3.0);
    }
    let total = linalg::blocked_sum(model.lambda.as_slice().expect("contiguous"));
    let head: f64 = model.lambda.iter().take(n_c).sum();
    model.provenance.variance_fraction = if total > 0.0 { head / total } else { 1.0 };
    model.provenance.coefficient_rms = total.sqrt();
    model.validate(RevarModel::DEFECT_TOL)?;
    Ok(model)
}

fn model_weights_view(weights: &PredictorWeights) -> PredictorWeights {
    weights.clone()
}

/// Simple oracle kinds for metric and trainer edge cases.
#[derive(Debug, Clone)]
pub enum OracleKind {
    /// Independent unit normals per pixel, scaled by `sigma`.
    WhiteNoise { sigma: f64 },
    /// A frozen sum of spatial waves translating along x at `speed`
    /// pixels/step, plus optional white measurement noise.
    TranslatingPattern { speed: f64, noise_sigma: f64 },
    /// Random spatial modes with sinusoidal time histories plus noise.
    Sinusoids { n_modes: usize, noise_sigma: f64 },
    /// The full long-range-AR model.
    LongRangeAr(LongRangeOracleParams),
}

pub struct OracleSpec {
    pub kind: OracleKind,
    pub rows: usize,
    pub cols: usize,
    pub n_frames: usize,
    pub sampling_frequency: f64,
}

pub struct OracleOutput {
    pub series: PhaseScreenSeries,
    /// Ground-truth model when the oracle has one.
    pub model: Option<RevarModel>,
}

/// Generate a deterministic oracle dataset.
pub fn make_oracle(spec: &OracleSpec, seed: u64) -> Result<OracleOutput> {
    if spec.n_frames == 0 {
        return Err(RevarError::InvalidInput(
            "oracle needs at least one frame".into(),
        ));
    }
    let geometry = ApertureGeometry::full(spec.rows, spec.cols);
    let n_p = geometry.n_pixels();
    let mut noise = NoiseSource::new(seed);
    match &spec.kind {
        OracleKind::WhiteNoise { sigma } => {
            let mut frames = Array2::zeros((spec.n_frames, n_p));
            for mut row in frames.outer_iter_mut() {
                let v = noise.next_vector(n_p);
                row.assign(&(v * *sigma));
            }
            Ok(OracleOutput {
                series: PhaseScreenSeries::new(
                    geometry,
                    frames,
                    spec.sampling_frequency,
                    format!("oracle-white(seed={seed})"),
                )?,
                model: None,
            })
        }
        OracleKind::TranslatingPattern { speed, noise_sigma } => {
            // Three x-waves with random phases; translation shows up as
            // temporal lines at k * speed / cols cycles/step.
            let phases = noise.next_vector(3);
            let amps = [1.0, 0.6, 0.35];
            let mut frames = Array2::zeros((spec.n_frames, n_p));
            for n in 0..spec.n_frames {
                for p in 0..n_p {
                    let (r, c) = geometry.coords_of(p);
                    let x = c as f64 - speed * n as f64;
                    let y = r as f64;
                    let mut v = 0.0;
                    for (k, &a) in amps.iter().enumerate() {
                        let kx = (k + 1) as f64;
                        v += a
                            * (std::f64::consts::TAU * (kx * x / spec.cols as f64 + 0.2 * y)
                                + phases[k])
                                .sin();
                    }
                    frames[(n, p)] = v;
                }
            }
            if *noise_sigma > 0.0 {
                for mut row in frames.outer_iter_mut() {
                    let v = noise.next_vector(n_p);
                    for (f, w) in row.iter_mut().zip(v.iter()) {
                        *f += noise_sigma * w;
                    }
                }
            }
            Ok(OracleOutput {
                series: PhaseScreenSeries::new(
                    geometry,
                    frames,
                    spec.sampling_frequency,
                    format!("oracle-translating(seed={seed})"),
                )?,
                model: None,
            })
        }
        OracleKind::Sinusoids {
            n_modes,
            noise_sigma,
        } => {
            let mut frames = Array2::zeros((spec.n_frames, n_p));
            let mut modes = Vec::new();
            for k in 0..*n_modes {
                let pattern = noise.next_vector(n_p);
                let f = 0.02 + 0.03 * k as f64;
                let phase = noise.next_vector(1)[0];
                modes.push((pattern, f, phase));
            }
            for n in 0..spec.n_frames {
                for (pattern, f, phase) in &modes {
                    let s = (std::f64::consts::TAU * f * n as f64 + phase).sin();
                    for p in 0..n_p {
                        frames[(n, p)] += pattern[p] * s;
                    }
                }
            }
            if *noise_sigma > 0.0 {
                for mut row in frames.outer_iter_mut() {
                    let v = noise.next_vector(n_p);
                    for (f, w) in row.iter_mut().zip(v.iter()) {
                        *f += noise_sigma * w;
                    }
                }
            }
            Ok(OracleOutput {
                series: PhaseScreenSeries::new(
                    geometry,
                    frames,
                    spec.sampling_frequency,
                    format!("oracle-sinusoids(seed={seed})"),
                )?,
                model: None,
            })
        }
        OracleKind::LongRangeAr(params) => {
            let mut params = params.clone();
            params.rows = spec.rows;
            params.cols = spec.cols;
            params.sampling_frequency = spec.sampling_frequency;
            let model = random_stable_model(&params, seed)?;
            let mut cfg = SynthesisConfig::new(spec.n_frames, seed);
            cfg.burn_in = 500;
            let out = synthesis::generate(&model, &cfg)?;
            Ok(OracleOutput {
                series: out.series,
                model: Some(model),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::longrange;

    #[test]
    fn orthogonal_draw_is_orthonormal() {
        let mut noise = NoiseSource::new(3);
        let q = random_orthogonal(12, &mut noise);
        assert!(linalg::orthonormality_defect(q.view()) < 1e-10);
    }

    #[test]
    fn companion_radius_of_scalar_ar1() {
        // x_{n+1} = 0.7 x_n: radius is 0.7 exactly.
        let mut w = PredictorWeights::zeros(1, 1, 0);
        w.lag_weights[0][(0, 0)] = 0.7;
        let t = companion_matrix(&w, &[]);
        let mut noise = NoiseSource::new(1);
        let rho = spectral_radius(&t, &mut noise);
        assert!((rho - 0.7).abs() < 1e-6, "rho = {rho}");
    }

    #[test]
    fn companion_radius_with_filter_only_is_the_pole() {
        let w = PredictorWeights::zeros(2, 1, 1);
        let t = companion_matrix(&w, &[0.1]);
        let mut noise = NoiseSource::new(2);
        let rho = spectral_radius(&t, &mut noise);
        assert!((rho - 0.9).abs() < 1e-6, "rho = {rho}");
    }

    #[test]
    fn stable_weights_land_below_the_achievable_target() {
        let mut noise = NoiseSource::new(77);
        let alphas = [0.05, 0.005];
        let w = random_stable_weights(6, 3, &alphas, 0.9, &mut noise).unwrap();
        let t = companion_matrix(&w, &alphas);
        let rho = spectral_radius(&t, &mut noise);
        // The slow filter pole floors the radius at 0.995.
        let floor = pole_floor(&alphas);
        let target = 0.9f64.max(floor + 0.3 * (1.0 - floor));
        assert!(rho <= target + 1e-6, "rho = {rho}, target {target}");
        assert!(rho < 1.0);
    }

    #[test]
    fn noiseless_simulation_is_consistent_with_the_trainer() {
        let mut noise = NoiseSource::new(5);
        let alphas = [0.08, 0.008];
        let w = random_stable_weights(4, 2, &alphas, 0.9, &mut noise).unwrap();
        let mut initial = Array2::zeros((2, 4));
        for mut row in initial.outer_iter_mut() {
            row.assign(&noise.next_vector(4));
        }
        let coeffs = simulate_coefficients(&w, &alphas, &initial, 3000, None).unwrap();
        let fit = longrange::fit_weights(coeffs.view(), 4, &alphas, 2).unwrap();
        let mut worst = 0.0f64;
        for (a, b) in fit
            .weights
            .lag_weights
            .iter()
            .chain(fit.weights.filter_weights.iter())
            .zip(w.lag_weights.iter().chain(w.filter_weights.iter()))
        {
            for (x, y) in a.iter().zip(b.iter()) {
                worst = worst.max((x - y).abs());
            }
        }
        assert!(worst < 1e-6, "max weight error {worst}");
    }

    #[test]
    fn oracle_model_validates_and_generates() {
        let params = LongRangeOracleParams {
            rows: 4,
            cols: 4,
            n_components: 10,
            n_lags: 2,
            n_filters: 2,
            peak_frequency: 0.12,
            tail_fraction: 0.02,
            sampling_frequency: 500.0,
        };
        let model = random_stable_model(&params, 11).unwrap();
        let out = synthesis::generate(&model, &SynthesisConfig::new(500, 1)).unwrap();
        assert_eq!(out.series.n_frames(), 500);
        assert_eq!(out.series.n_pixels(), 16);
    }

    #[test]
    fn white_noise_oracle_has_unit_scale() {
        let spec = OracleSpec {
            kind: OracleKind::WhiteNoise { sigma: 1.0 },
            rows: 3,
            cols: 3,
            n_frames: 5000,
            sampling_frequency: 100.0,
        };
        let out = make_oracle(&spec, 9).unwrap();
        let rms = crate::metrics::opd_rms(&out.series, false);
        assert!((rms - 1.0).abs() < 0.02, "rms {rms}");
    }

    #[test]
    fn oracles_are_seed_deterministic() {
        let spec = OracleSpec {
            kind: OracleKind::TranslatingPattern {
                speed: 0.3,
                noise_sigma: 0.01,
            },
            rows: 4,
            cols: 6,
            n_frames: 50,
            sampling_frequency: 100.0,
        };
        let a = make_oracle(&spec, 4).unwrap();
        let b = make_oracle(&spec, 4).unwrap();
        for (x, y) in a.series.frames().iter().zip(b.series.frames().iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
