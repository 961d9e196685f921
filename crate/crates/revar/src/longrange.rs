//! Long-range autoregression on the leading principal coefficients.
//!
//! The predictor combines an ordinary vector autoregression over the last
//! `N_L` states with `N_m` first-order low-pass filters of the entire state
//! history, so long-range temporal correlations are captured without pushing
//! `N_L` to arbitrarily large values. Each filter
//! `Y_{i,n} = (1 - alpha_i) Y_{i,n-1} + alpha_i X_n` is an exponential moving
//! average with unit DC gain; the gains are set one and two (and further)
//! decades below the spectral peak of the coefficient series. The filters
//! enter the predictor delayed by one step, which keeps it strictly causal.
//!
//! Training is a single tall thin least-squares problem: one regressor
//! matrix shared by all `N_c` component rows, factored once and solved for
//! every right-hand side.

use crate::error::{Result, RevarError};
use crate::linalg::{self, LeastSquares};
use crate::metrics::{self, WelchConfig};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use nalgebra::DMatrix;

/// Bank of exponential moving averages over coefficient vectors.
/// States start at zero, matching the training convention `Y_{i,n} = 0` for
/// `n < 0`.
#[derive(Debug, Clone)]
pub struct FilterBank {
    alphas: Vec<f64>,
    states: Vec<Array1<f64>>,
}

impl FilterBank {
    pub fn new(alphas: &[f64], dim: usize) -> Result<Self> {
        for (i, &a) in alphas.iter().enumerate() {
            if !(a > 0.0 && a <= 1.0) {
                return Err(RevarError::InvalidAlpha { index: i, value: a });
            }
        }
        Ok(FilterBank {
            alphas: alphas.to_vec(),
            states: alphas.iter().map(|_| Array1::zeros(dim)).collect(),
        })
    }

    pub fn reset(&mut self) {
        for s in &mut self.states {
            s.fill(0.0);
        }
    }

    /// Advance every filter by one input vector.
    pub fn step(&mut self, input: ArrayView1<'_, f64>) {
        crate::ops::record_multiplies(2 * (self.states.len() * input.len()) as u64);
        for (state, &alpha) in self.states.iter_mut().zip(&self.alphas) {
            for (y, &x) in state.iter_mut().zip(input.iter()) {
                *y = (1.0 - alpha) * *y + alpha * x;
            }
        }
    }

    pub fn states(&self) -> &[Array1<f64>] {
        &self.states
    }

    pub fn set_states(&mut self, states: Vec<Array1<f64>>) -> Result<()> {
        if states.len() != self.alphas.len()
            || states.iter().any(|s| {
                self.states
                    .first()
                    .map(|t| t.len() != s.len())
                    .unwrap_or(false)
            })
        {
            return Err(RevarError::InvalidInput(
                "filter state shape mismatch".into(),
            ));
        }
        self.states = states;
        Ok(())
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn n_filters(&self) -> usize {
        self.alphas.len()
    }
}

/// Magnitude of the filter transfer function
/// `H(z) = alpha / (1 - (1-alpha) z^{-1})` at `f` cycles/step.
pub fn lowpass_gain(alpha: f64, f: f64) -> f64 {
    let omega = std::f64::consts::TAU * f;
    let re = 1.0 - (1.0 - alpha) * omega.cos();
    let im = -(1.0 - alpha) * omega.sin();
    alpha / (re * re + im * im).sqrt()
}

/// Which form maps a cut-off frequency to a filter gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaForm {
    /// `alpha = 2 pi f_cut` (small-frequency linearization).
    #[default]
    Linear,
    /// `alpha = 1 - exp(-2 pi f_cut)`.
    Exact,
}

/// Filter gains for cut-off frequencies one, two, ... decades below the
/// spectral peak `f_c` (cycles/step).
pub fn alphas_from_cutoff(f_c: f64, n_filters: usize, form: AlphaForm) -> Result<Vec<f64>> {
    if !(f_c > 0.0 && f_c.is_finite()) {
        return Err(RevarError::NoPeak(format!(
            "cut-off frequency must be positive, got {f_c}"
        )));
    }
    let mut alphas = Vec::with_capacity(n_filters);
    for k in 1..=n_filters {
        let f_cut = f_c / 10f64.powi(k as i32);
        let alpha = match form {
            AlphaForm::Linear => std::f64::consts::TAU * f_cut,
            AlphaForm::Exact => 1.0 - (-std::f64::consts::TAU * f_cut).exp(),
        };
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(RevarError::ModelInvariant(format!(
                "filter gain alpha[{k}] = {alpha} falls outside (0, 1); \
                 spectral peak {f_c} cycles/step is not usable"
            )));
        }
        alphas.push(alpha);
    }
    Ok(alphas)
}

/// Spectral peak of the leading coefficients in cycles/step: Welch spectra of
/// every component column are averaged and the maximum is taken with the DC
/// bin excluded.
pub fn estimate_cutoff(top: ArrayView2<'_, f64>, welch: &WelchConfig) -> Result<f64> {
    let spectrum = metrics::average_column_psd(top, 1.0, welch)?;
    let power = &spectrum.power;
    if power.len() < 2 {
        return Err(RevarError::NoPeak("spectrum has no non-DC bins".into()));
    }
    let mut best = 1usize;
    let mut best_val = f64::NEG_INFINITY;
    let mut min_val = f64::INFINITY;
    for (k, &p) in power.iter().enumerate().skip(1) {
        if p > best_val {
            best_val = p;
            best = k;
        }
        if p < min_val {
            min_val = p;
        }
    }
    if !(best_val > 0.0) {
        return Err(RevarError::NoPeak("spectrum is empty beyond DC".into()));
    }
    if best_val == min_val {
        return Err(RevarError::NoPeak(
            "spectrum is exactly flat beyond DC".into(),
        ));
    }
    Ok(spectrum.frequencies[best])
}

/// The prediction weights: `N_L` lag matrices and `N_m` filter matrices, all
/// `N_c x N_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorWeights {
    pub lag_weights: Vec<Array2<f64>>,
    pub filter_weights: Vec<Array2<f64>>,
}

impl PredictorWeights {
    pub fn zeros(n_components: usize, n_lags: usize, n_filters: usize) -> Self {
        PredictorWeights {
            lag_weights: (0..n_lags)
                .map(|_| Array2::zeros((n_components, n_components)))
                .collect(),
            filter_weights: (0..n_filters)
                .map(|_| Array2::zeros((n_components, n_components)))
                .collect(),
        }
    }

    pub fn n_lags(&self) -> usize {
        self.lag_weights.len()
    }

    pub fn n_filters(&self) -> usize {
        self.filter_weights.len()
    }

    pub fn n_components(&self) -> usize {
        self.lag_weights
            .first()
            .or(self.filter_weights.first())
            .map(|m| m.nrows())
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let n_c = self.n_components();
        if self.lag_weights.is_empty() {
            return Err(RevarError::InvalidInput(
                "predictor needs at least one lag matrix".into(),
            ));
        }
        for m in self.lag_weights.iter().chain(self.filter_weights.iter()) {
            if m.dim() != (n_c, n_c) {
                return Err(RevarError::dims(
                    "prediction weight matrix",
                    format!("{n_c}x{n_c}"),
                    format!("{}x{}", m.nrows(), m.ncols()),
                ));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(RevarError::NonFinite("prediction weights".into()));
            }
        }
        Ok(())
    }

    /// One-step prediction. `lags[l]` holds the state `l+1` steps back;
    /// `filter_states[i]` holds the i-th filter output one step back.
    pub fn predict(
        &self,
        lags: &[ArrayView1<'_, f64>],
        filter_states: &[Array1<f64>],
    ) -> Result<Array1<f64>> {
        let n_c = self.n_components();
        if lags.len() != self.n_lags() || filter_states.len() != self.n_filters() {
            return Err(RevarError::dims(
                "predictor inputs",
                format!("{} lags, {} filters", self.n_lags(), self.n_filters()),
                format!("{} lags, {} filters", lags.len(), filter_states.len()),
            ));
        }
        let mut out = Array1::zeros(n_c);
        for (weight, lag) in self.lag_weights.iter().zip(lags.iter()) {
            if lag.len() != n_c {
                return Err(RevarError::dims("lag vector", n_c, lag.len()));
            }
            out += &linalg::matvec(weight.view(), *lag);
        }
        for (weight, state) in self.filter_weights.iter().zip(filter_states.iter()) {
            if state.len() != n_c {
                return Err(RevarError::dims("filter state", n_c, state.len()));
            }
            out += &linalg::matvec(weight.view(), state.view());
        }
        Ok(out)
    }

    /// Exact scalar multiply count of one `predict` call.
    pub fn multiply_count(&self) -> u64 {
        let n_c = self.n_components() as u64;
        n_c * n_c * (self.n_lags() + self.n_filters()) as u64
    }
}

/// Residuals of the long-range AR model. Row `k` corresponds to time step
/// `offset + k` of the coefficient series; components past `N_c` carry the
/// raw coefficients.
#[derive(Debug, Clone)]
pub struct ResidualSeries {
    pub residuals: Array2<f64>,
    pub offset: usize,
}

impl ResidualSeries {
    pub fn n_steps(&self) -> usize {
        self.residuals.nrows()
    }

    pub fn dim(&self) -> usize {
        self.residuals.ncols()
    }
}

/// Fitted weights plus trainer diagnostics.
#[derive(Debug)]
pub struct TrainedPredictor {
    pub weights: PredictorWeights,
    pub rank_deficient: bool,
}

/// Build the shared regressor matrix: row `n - N_L` holds
/// `[X_{n-1}, ..., X_{n-N_L}, Y_1(n-1), ..., Y_Nm(n-1)]` over the leading
/// `N_c` components.
fn build_regressors(
    coefficients: ArrayView2<'_, f64>,
    n_components: usize,
    alphas: &[f64],
    n_lags: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n_t = coefficients.nrows();
    let n_m = alphas.len();
    let rows = n_t - n_lags;
    let cols = n_components * (n_lags + n_m);
    let mut z = DMatrix::<f64>::zeros(rows, cols);
    let mut rhs = DMatrix::<f64>::zeros(rows, n_components);
    let mut filters = FilterBank::new(alphas, n_components)?;
    let top = coefficients.slice(ndarray::s![.., ..n_components]);
    for n in 0..n_t {
        if n >= n_lags {
            let r = n - n_lags;
            for lag in 1..=n_lags {
                let base = (lag - 1) * n_components;
                let row = top.row(n - lag);
                for k in 0..n_components {
                    z[(r, base + k)] = row[k];
                }
            }
            for (i, state) in filters.states().iter().enumerate() {
                let base = (n_lags + i) * n_components;
                for k in 0..n_components {
                    z[(r, base + k)] = state[k];
                }
            }
            let row = top.row(n);
            for j in 0..n_components {
                rhs[(r, j)] = row[j];
            }
        }
        filters.step(top.row(n));
    }
    Ok((z, rhs))
}

/// Least-squares fit of the prediction weights over steps `N_L..N_T`.
pub fn fit_weights(
    coefficients: ArrayView2<'_, f64>,
    n_components: usize,
    alphas: &[f64],
    n_lags: usize,
) -> Result<TrainedPredictor> {
    if n_lags == 0 {
        return Err(RevarError::InvalidInput(
            "number of time lags must be at least 1".into(),
        ));
    }
    if n_components == 0 || n_components > coefficients.ncols() {
        return Err(RevarError::InvalidInput(format!(
            "subspace size {n_components} out of range for {} coefficients",
            coefficients.ncols()
        )));
    }
    let n_t = coefficients.nrows();
    let n_m = alphas.len();
    let cols = n_components * (n_lags + n_m);
    if n_t <= n_lags || n_t - n_lags < cols {
        return Err(RevarError::Underdetermined {
            rows: n_t.saturating_sub(n_lags),
            cols,
        });
    }

    let (z, rhs) = build_regressors(coefficients, n_components, alphas, n_lags)?;
    let ls = LeastSquares::factor(z)?;
    let solution = ls.solve(&rhs)?;
    let beta = solution.coefficients; // cols x N_c; column j holds the rows of A for component j

    let mut weights = PredictorWeights::zeros(n_components, n_lags, n_m);
    for j in 0..n_components {
        for lag in 0..n_lags {
            for k in 0..n_components {
                weights.lag_weights[lag][(j, k)] = beta[(lag * n_components + k, j)];
            }
        }
        for i in 0..n_m {
            for k in 0..n_components {
                weights.filter_weights[i][(j, k)] = beta[((n_lags + i) * n_components + k, j)];
            }
        }
    }
    Ok(TrainedPredictor {
        weights,
        rank_deficient: solution.rank_deficient,
    })
}

/// Residuals of the fitted model over the full coefficient vectors: the
/// leading `N_c` components subtract the prediction, the rest pass through.
pub fn residuals(
    coefficients: ArrayView2<'_, f64>,
    weights: &PredictorWeights,
    alphas: &[f64],
) -> Result<ResidualSeries> {
    weights.validate()?;
    let n_c = weights.n_components();
    let n_lags = weights.n_lags();
    if alphas.len() != weights.n_filters() {
        return Err(RevarError::dims(
            "filter gains",
            weights.n_filters(),
            alphas.len(),
        ));
    }
    let n_t = coefficients.nrows();
    if n_t <= n_lags {
        return Err(RevarError::InvalidInput(format!(
            "series of {n_t} steps is too short for {n_lags} lags"
        )));
    }
    if coefficients.ncols() < n_c {
        return Err(RevarError::dims(
            "coefficient width",
            format!(">= {n_c}"),
            coefficients.ncols(),
        ));
    }

    let top = coefficients.slice(ndarray::s![.., ..n_c]);
    let mut filters = FilterBank::new(alphas, n_c)?;
    let mut out = Array2::zeros((n_t - n_lags, coefficients.ncols()));
    for n in 0..n_t {
        if n >= n_lags {
            let lags: Vec<ArrayView1<'_, f64>> =
                (1..=n_lags).map(|l| top.row(n - l)).collect();
            let xhat = weights.predict(&lags, filters.states())?;
            let mut row = out.row_mut(n - n_lags);
            row.assign(&coefficients.row(n));
            for k in 0..n_c {
                row[k] -= xhat[k];
            }
        }
        filters.step(top.row(n));
    }
    Ok(ResidualSeries {
        residuals: out,
        offset: n_lags,
    })
}

/// Largest absolute sample autocorrelation of any column over lags
/// `1..=max_lag`, with per-column mean removed.
pub fn max_lag_autocorrelation(data: ArrayView2<'_, f64>, max_lag: usize) -> f64 {
    let n = data.nrows();
    let mut worst = 0.0f64;
    for col in data.columns() {
        let v: Vec<f64> = col.to_vec();
        let mean = linalg::blocked_mean(&v);
        let centered: Vec<f64> = v.iter().map(|x| x - mean).collect();
        let var = linalg::blocked_sum(&centered.iter().map(|x| x * x).collect::<Vec<_>>());
        if var <= 0.0 {
            continue;
        }
        for lag in 1..=max_lag.min(n.saturating_sub(1)) {
            let prods: Vec<f64> = (lag..n).map(|i| centered[i] * centered[i - lag]).collect();
            let r = linalg::blocked_sum(&prods) / var;
            worst = worst.max(r.abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn unit_gain_filter_passes_input_through() {
        let mut fb = FilterBank::new(&[1.0], 2).unwrap();
        fb.step(array![3.0, -4.0].view());
        assert_eq!(fb.states()[0], array![3.0, -4.0]);
        fb.step(array![1.0, 2.0].view());
        assert_eq!(fb.states()[0], array![1.0, 2.0]);
    }

    #[test]
    fn half_gain_filter_follows_geometric_recursion() {
        let mut fb = FilterBank::new(&[0.5], 1).unwrap();
        let c = 4.0;
        let expected = [2.0, 3.0, 3.5];
        for e in expected {
            fb.step(array![c].view());
            assert_abs_diff_eq!(fb.states()[0][0], e, epsilon = 1e-15);
        }
    }

    #[test]
    fn constant_input_converges_to_unit_dc_gain() {
        for alpha in [0.05, 0.3, 1.0] {
            let mut fb = FilterBank::new(&[alpha], 1).unwrap();
            for _ in 0..2000 {
                fb.step(array![7.0].view());
            }
            assert_abs_diff_eq!(fb.states()[0][0], 7.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn rejects_gain_out_of_range() {
        assert!(FilterBank::new(&[0.0], 1).is_err());
        assert!(FilterBank::new(&[1.2], 1).is_err());
        assert!(FilterBank::new(&[-0.1], 1).is_err());
    }

    #[test]
    fn alpha_values_from_cutoff_examples() {
        let alphas = alphas_from_cutoff(0.05, 2, AlphaForm::Linear).unwrap();
        assert_abs_diff_eq!(alphas[0], 0.031415926535897934, epsilon = 1e-15);
        assert_abs_diff_eq!(alphas[1], alphas[0] / 10.0, epsilon = 1e-18);
    }

    #[test]
    fn exact_alpha_form_is_close_to_linear_for_low_cutoffs() {
        let lin = alphas_from_cutoff(0.05, 1, AlphaForm::Linear).unwrap()[0];
        let exact = alphas_from_cutoff(0.05, 1, AlphaForm::Exact).unwrap()[0];
        assert!((lin - exact).abs() / exact < 0.05);
    }

    #[test]
    fn claimed_cutoff_gain_is_half_power() {
        // alpha = 1 - exp(-2 pi f) puts |H| at 1/sqrt(2) for low f.
        for &f in &[1e-4, 1e-3, 1e-2] {
            let alpha = 1.0 - (-std::f64::consts::TAU * f).exp();
            let gain = lowpass_gain(alpha, f);
            let target = 1.0 / 2.0f64.sqrt();
            assert!(
                (gain - target).abs() / target < 0.01,
                "f={f}: gain {gain} vs {target}"
            );
        }
    }

    #[test]
    fn cutoff_estimate_finds_a_pure_tone() {
        // 0.05 cycles/step sits exactly on a bin for segment length 256.
        let n = 8192;
        let f0 = 0.05f64;
        let top = Array2::from_shape_fn((n, 3), |(i, j)| {
            (std::f64::consts::TAU * f0 * i as f64 + j as f64).sin()
        });
        let cfg = WelchConfig {
            segment_length: 256,
            overlap: 0.5,
            window: metrics::WindowKind::Hamming,
        };
        let f_hat = estimate_cutoff(top.view(), &cfg).unwrap();
        assert!((f_hat - f0).abs() <= 1.0 / 256.0 + 1e-12);
    }

    #[test]
    fn cutoff_estimate_rejects_flat_zero_input() {
        let top = Array2::<f64>::zeros((4096, 2));
        let cfg = WelchConfig::default();
        assert!(matches!(
            estimate_cutoff(top.view(), &cfg),
            Err(RevarError::NoPeak(_))
        ));
    }

    #[test]
    fn zero_weights_predict_zero() {
        let w = PredictorWeights::zeros(3, 2, 2);
        let lag = array![1.0, 2.0, 3.0];
        let lags = [lag.view(), lag.view()];
        let states = vec![Array1::zeros(3), Array1::zeros(3)];
        let out = w.predict(&lags, &states).unwrap();
        assert_eq!(out, Array1::<f64>::zeros(3));
    }

    #[test]
    fn identity_lag_weight_is_persistence() {
        let mut w = PredictorWeights::zeros(2, 1, 0);
        w.lag_weights[0] = Array2::eye(2);
        let lag = array![5.0, -1.0];
        let out = w.predict(&[lag.view()], &[]).unwrap();
        assert_eq!(out, lag);
    }

    #[test]
    fn scalar_prediction_arithmetic() {
        let mut w = PredictorWeights::zeros(1, 1, 2);
        w.lag_weights[0][(0, 0)] = 0.5;
        w.filter_weights[0][(0, 0)] = 0.25;
        let lag = array![2.0];
        let states = vec![array![4.0], array![10.0]];
        let out = w.predict(&[lag.view()], &states).unwrap();
        assert_abs_diff_eq!(out[0], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn strict_causality_future_values_do_not_matter() {
        // Residual at the first fitted step depends only on earlier inputs.
        let mut a = Array2::from_shape_fn((40, 2), |(i, j)| ((i * 7 + j * 3) as f64 * 0.13).sin());
        let mut w = PredictorWeights::zeros(2, 2, 1);
        w.lag_weights[0] = array![[0.4, 0.1], [0.0, 0.3]];
        w.filter_weights[0] = array![[0.2, 0.0], [0.1, 0.1]];
        let alphas = [0.2];
        let r1 = residuals(a.view(), &w, &alphas).unwrap();
        // Perturb a future step and re-run.
        a[(20, 0)] += 100.0;
        let r2 = residuals(a.view(), &w, &alphas).unwrap();
        for k in 0..(20 - 2) {
            for j in 0..2 {
                assert_eq!(
                    r1.residuals[(k, j)].to_bits(),
                    r2.residuals[(k, j)].to_bits(),
                    "step {k} component {j} changed"
                );
            }
        }
        assert_ne!(r1.residuals[(18, 0)], r2.residuals[(18, 0)]);
    }

    #[test]
    fn scalar_ar1_is_recovered_exactly() {
        let n = 200;
        let mut x = Array2::zeros((n, 1));
        x[(0, 0)] = 1.0;
        for i in 1..n {
            x[(i, 0)] = 0.9 * x[(i - 1, 0)];
        }
        let fit = fit_weights(x.view(), 1, &[], 1).unwrap();
        assert_abs_diff_eq!(fit.weights.lag_weights[0][(0, 0)], 0.9, epsilon = 1e-8);
    }

    #[test]
    fn known_weights_are_recovered_from_noiseless_simulation() {
        // Forward-simulate the model with zero residuals, then refit.
        let n_c = 3;
        let n_lags = 2;
        let alphas = [0.1, 0.01];
        let mut weights = PredictorWeights::zeros(n_c, n_lags, alphas.len());
        weights.lag_weights[0] = array![[0.40, 0.05, 0.0], [0.02, 0.30, 0.01], [0.0, 0.03, 0.25]];
        weights.lag_weights[1] = array![[0.10, 0.0, 0.02], [0.0, 0.08, 0.0], [0.01, 0.0, 0.05]];
        weights.filter_weights[0] =
            array![[0.20, 0.0, 0.0], [0.0, 0.15, 0.02], [0.0, 0.0, 0.10]];
        weights.filter_weights[1] = array![[0.05, 0.01, 0.0], [0.0, 0.04, 0.0], [0.0, 0.0, 0.03]];

        let n_t = 400;
        let mut coeffs = Array2::zeros((n_t, n_c));
        // Free initial steps provide the excitation.
        coeffs[(0, 0)] = 1.0;
        coeffs[(0, 1)] = -0.7;
        coeffs[(0, 2)] = 0.4;
        coeffs[(1, 0)] = -0.3;
        coeffs[(1, 1)] = 0.9;
        coeffs[(1, 2)] = -0.6;
        let mut filters = FilterBank::new(&alphas, n_c).unwrap();
        for n in 0..n_t {
            if n >= n_lags {
                let lags: Vec<ArrayView1<'_, f64>> =
                    (1..=n_lags).map(|l| coeffs.row(n - l)).collect();
                let xhat = weights.predict(&lags, filters.states()).unwrap();
                for k in 0..n_c {
                    coeffs[(n, k)] = xhat[k];
                }
            }
            filters.step(coeffs.row(n));
        }

        let fit = fit_weights(coeffs.view(), n_c, &alphas, n_lags).unwrap();
        let mut worst = 0.0f64;
        for (a, b) in fit
            .weights
            .lag_weights
            .iter()
            .chain(fit.weights.filter_weights.iter())
            .zip(weights.lag_weights.iter().chain(weights.filter_weights.iter()))
        {
            for (x, y) in a.iter().zip(b.iter()) {
                worst = worst.max((x - y).abs());
            }
        }
        assert!(worst < 1e-6, "max weight error {worst}");
    }

    #[test]
    fn zero_weights_leave_residuals_equal_to_coefficients() {
        let coeffs = Array2::from_shape_fn((30, 4), |(i, j)| (i + j) as f64);
        let w = PredictorWeights::zeros(2, 1, 0);
        let r = residuals(coeffs.view(), &w, &[]).unwrap();
        assert_eq!(r.offset, 1);
        for k in 0..r.n_steps() {
            for j in 0..4 {
                assert_eq!(r.residuals[(k, j)], coeffs[(k + 1, j)]);
            }
        }
    }

    #[test]
    fn tail_components_pass_through_exactly() {
        let coeffs = Array2::from_shape_fn((50, 5), |(i, j)| ((i * (j + 1)) as f64 * 0.1).sin());
        let mut w = PredictorWeights::zeros(2, 1, 0);
        w.lag_weights[0] = array![[0.5, 0.1], [0.2, 0.4]];
        let r = residuals(coeffs.view(), &w, &[]).unwrap();
        for k in 0..r.n_steps() {
            for j in 2..5 {
                assert_eq!(r.residuals[(k, j)], coeffs[(k + 1, j)]);
            }
        }
    }

    #[test]
    fn underdetermined_fit_is_rejected() {
        let coeffs = Array2::<f64>::zeros((10, 4));
        let err = fit_weights(coeffs.view(), 4, &[0.1, 0.01], 2).unwrap_err();
        assert!(matches!(err, RevarError::Underdetermined { .. }));
    }

    #[test]
    fn multiply_count_matches_shape() {
        let w = PredictorWeights::zeros(7, 3, 2);
        assert_eq!(w.multiply_count(), 7 * 7 * 5);
    }
}
