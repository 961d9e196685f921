use revar::longrange;
use revar::oracle::{self, LongRangeOracleParams, OracleKind, OracleSpec};
use revar::pipeline::{self, FitConfig};
use revar::preprocessing;

fn longnrange_max(col: ndarray::ArrayView2<f64>) -> f64 {
    revar::longrange::max_lag_autocorrelation(col, 5)
}

fn main() {
    let spec = OracleSpec {
        kind: OracleKind::LongRangeAr(LongRangeOracleParams {
            rows: 5, cols: 5, n_components: 20, n_lags: 3, n_filters: 2,
            peak_frequency: 0.12, tail_fraction: 0.02, sampling_frequency: 1000.0,
        }),
        rows: 5, cols: 5, n_frames: 100_000, sampling_frequency: 1000.0,
    };
    let out = oracle::make_oracle(&spec, 101).unwrap();
    {
        // Averaged coefficient spectrum as the estimator sees it.
        let (normalized, _) = preprocessing::normalize(&out.series, 1e-12).unwrap();
        let basis = preprocessing::fit_spatial_pca(normalized.view()).unwrap();
        let n_c = preprocessing::select_subspace(basis.eigenvalues.view(), 0.99).unwrap();
        let projected = preprocessing::project(normalized.view(), &basis, n_c).unwrap();
        let spec = revar::metrics::average_column_psd(
            projected.top(), 1.0, &revar::metrics::WelchConfig::default()).unwrap();
        let mut idx: Vec<usize> = (1..spec.power.len()).collect();
        idx.sort_by(|&a, &b| spec.power[b].partial_cmp(&spec.power[a]).unwrap());
        println!("top bins:");
        for &k in idx.iter().take(6) {
            println!("  f={:.5} p={:.4e}", spec.frequencies[k], spec.power[k]);
        }
        println!("  bin1 f={:.5} p={:.4e}", spec.frequencies[1], spec.power[1]);
        println!("  f=0.12 p={:.4e}", spec.power[(0.12 * 1024.0) as usize]);
    }
    let truth = out.model.unwrap();
    println!("oracle alphas {:?}", truth.alphas);

    let cfg = FitConfig { n_lags: 3, n_filters: 2, train_fraction: 1.0, ..FitConfig::default() };
    let (model, report) = pipeline::fit(&out.series, &cfg).unwrap();
    println!("fitted f_c {:?} alphas {:?} N_c {}", report.cutoff_frequency, report.alphas, report.n_components);
    println!("whiteness offdiag {:.3e} autocorr {:.3e}", report.whiteness.max_offdiag_covariance, report.whiteness.max_lag_autocorrelation);

    // Ground truth: project the data onto the oracle's own basis and check
    // tail-component whiteness directly.
    {
        let frames = out.series.frames();
        let n_p = frames.ncols();
        let mut normalized = frames.to_owned();
        for mut row in normalized.outer_iter_mut() {
            for ((x, m), s) in row.iter_mut().zip(truth.mean.iter()).zip(truth.std.iter()) {
                *x = (*x - m) / s;
            }
        }
        let coeffs_true = normalized.dot(&truth.basis);
        for j in (n_p - 6)..n_p {
            let col = coeffs_true.column(j).insert_axis(ndarray::Axis(1)).to_owned();
            let a = longrange::max_lag_autocorrelation(col.view(), 5);
            println!("truth comp {j}: max autocorr {a:.4}");
        }
        // Also the strongest component for reference.
        let col = coeffs_true.column(0).insert_axis(ndarray::Axis(1)).to_owned();
        println!("truth comp 0: max autocorr {:.4}", longrange::max_lag_autocorrelation(col.view(), 5));
    }
    // Cross-correlation at lag 1 between truth components around the boundary.
    {
        let frames = out.series.frames();
        let n = frames.nrows();
        let mut normalized = frames.to_owned();
        for mut row in normalized.outer_iter_mut() {
            for ((x, m), s) in row.iter_mut().zip(truth.mean.iter()).zip(truth.std.iter()) {
                *x = (*x - m) / s;
            }
        }
        let ct = normalized.dot(&truth.basis);
        let col_std = |j: usize| -> f64 {
            let c = ct.column(j);
            let m = c.sum() / n as f64;
            (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64).sqrt()
        };
        for &(i, j) in &[(19usize, 20usize), (15, 20), (18, 21), (19, 22), (14, 20), (0, 20)] {
            let (ci, cj) = (ct.column(i), ct.column(j));
            let (mi, mj) = (ci.sum() / n as f64, cj.sum() / n as f64);
            let mut lag1 = 0.0; // E[ci_n * cj_{n-1}]
            let mut lag0 = 0.0;
            let mut lagm1 = 0.0; // E[ci_{n-1} * cj_n]
            for t in 1..n {
                lag1 += (ci[t] - mi) * (cj[t - 1] - mj);
                lag0 += (ci[t] - mi) * (cj[t] - mj);
                lagm1 += (ci[t - 1] - mi) * (cj[t] - mj);
            }
            let norm = (n - 1) as f64 * col_std(i) * col_std(j);
            println!("truth corr ({i},{j}): lag0 {:.4} lag+1 {:.4} lag-1 {:.4}", lag0 / norm, lag1 / norm, lagm1 / norm);
        }
    }
    // Leakage of head dynamics into the fitted tail eigenvectors.
    {
        let (normalized, norm) = preprocessing::normalize(&out.series, 1e-12).unwrap();
        let basis = preprocessing::fit_spatial_pca(normalized.view()).unwrap();
        // sigma-hat deviation from truth (truth.std is 1/output-scale).
        let mut worst_sigma = 0.0f64;
        for j in 0..norm.std.len() {
            let truth_sigma = 1.0; // calibrated to unit pixel variance
            worst_sigma = worst_sigma.max((norm.std[j] - truth_sigma).abs());
        }
        println!("max |sigma_hat - 1| = {worst_sigma:.4}");
        // Map fitted eigenvector k into the truth coefficient basis:
        // v_true = E_truth^T D^{-1} e_hat_k where D = diag(truth-production scale).
        // Production: x = S E_t c + mu with S = diag(1/sqrt(pixvar)) = truth.std... careful:
        // normalized_fit = Sigma_hat^{-1}(x - mu_hat), x - mu = S E_t c.
        // => coeff directions compose: M = Sigma_hat^{-1} S E_t.
        let n_p = basis.basis.nrows();
        let mut m = ndarray::Array2::<f64>::zeros((n_p, n_p));
        for r in 0..n_p {
            for c in 0..n_p {
                m[(r, c)] = truth.std[r] / norm.std[r] * truth.basis[(r, c)];
            }
        }
        for k in [19usize, 20, 21, 22] {
            let e_k = basis.basis.column(k);
            // representation of e_hat_k picked out of data: c-space loading = M^T e_hat_k
            let load = m.t().dot(&e_k);
            let head: f64 = load.iter().take(20).map(|v| v * v).sum::<f64>().sqrt();
            let tail: f64 = load.iter().skip(20).map(|v| v * v).sum::<f64>().sqrt();
            println!("fitted dir {k}: head loading {head:.4}, tail loading {tail:.4}");
        }
    }
    // Stage isolation: cross lag-1 correlation of residuals vs tail comps
    // under (truth basis + truth weights), (fitted basis + fitted weights).
    {
        let frames = out.series.frames();
        let n_all = frames.nrows();
        // Truth decomposition.
        let mut norm_t = frames.to_owned();
        for mut row in norm_t.outer_iter_mut() {
            for ((x, m), s) in row.iter_mut().zip(truth.mean.iter()).zip(truth.std.iter()) {
                *x = (*x - m) / s;
            }
        }
        let ct = norm_t.dot(&truth.basis);
        let res_t = longrange::residuals(ct.view(), &truth.weights, &truth.alphas).unwrap();
        let cross = |res: &ndarray::Array2<f64>, coeffs: &ndarray::Array2<f64>, i: usize, j: usize, offset: usize| -> f64 {
            // corr(res_i at n, coeffs_j at n-1); res row k is time offset+k.
            let n = res.nrows();
            let ri = res.column(i);
            let mi = ri.sum() / n as f64;
            let cj = coeffs.column(j);
            let mj = cj.sum() / coeffs.nrows() as f64;
            let mut num = 0.0;
            let mut d1 = 0.0;
            let mut d2 = 0.0;
            for k in 0..n {
                let t_now = offset + k;
                let a = ri[k] - mi;
                let b = cj[t_now - 1] - mj;
                num += a * b;
                d1 += a * a;
                d2 += b * b;
            }
            num / (d1.sqrt() * d2.sqrt())
        };
        for &(i, j) in &[(19usize, 20usize), (15, 20), (6, 20), (13, 20)] {
            println!("truth-res x truth-c: corr({i},{j} lag1) = {:.4}", cross(&res_t.residuals, &ct, i, j, res_t.offset));
        }
        let _ = n_all;
    }
    // Control: fit weights with the oracle's true gains.
    {
        let (normalized, _) = preprocessing::normalize(&out.series, 1e-12).unwrap();
        let basis = preprocessing::fit_spatial_pca(normalized.view()).unwrap();
        let n_c = 20;
        let projected = preprocessing::project(normalized.view(), &basis, n_c).unwrap();
        let fitw = longrange::fit_weights(projected.coefficients.view(), n_c, &truth.alphas, 3).unwrap();
        let res = longrange::residuals(projected.coefficients.view(), &fitw.weights, &truth.alphas).unwrap();
        let t = revar::whitening::fit_whitening(&res, 1e-12).unwrap();
        let w = t.whiten_rows(res.residuals.view()).unwrap();
        let a = longrange::max_lag_autocorrelation(w.view(), 5);
        println!("TRUE-alpha fit: whitened max autocorr {a:.4e}");
        let araw = longrange::max_lag_autocorrelation(res.residuals.view(), 5);
        println!("TRUE-alpha fit: raw residual max autocorr {araw:.4e}");
        // Per-whitened-component profile with eigenvalues.
        for k in 0..w.ncols() {
            let col = w.column(k).insert_axis(ndarray::Axis(1)).to_owned();
            let ac = longnrange_max(col.view());
            if ac > 0.009 {
                println!("  whitened dir {k}: autocorr {ac:.4} eigenvalue {:.4e}", t.eigenvalues[k]);
            }
        }
        for &(i, j) in &[(19usize, 20usize), (15, 20), (6, 20), (13, 20)] {
            let n = res.residuals.nrows();
            let ri = res.residuals.column(i);
            let mi = ri.sum() / n as f64;
            let cj = projected.coefficients.column(j);
            let mj = cj.sum() / projected.coefficients.nrows() as f64;
            let mut num = 0.0;
            let mut d1 = 0.0;
            let mut d2 = 0.0;
            for k in 0..n {
                let t_now = res.offset + k;
                let a = ri[k] - mi;
                let b = cj[t_now - 1] - mj;
                num += a * b;
                d1 += a * a;
                d2 += b * b;
            }
            println!("fitted-res x fitted-c: corr({i},{j} lag1) = {:.4}", num / (d1.sqrt() * d2.sqrt()));
        }
        // Decompose the worst whitened direction's lag-1 autocovariance.
        {
            let n = res.residuals.nrows();
            let dim = res.residuals.ncols();
            let mean = res.residuals.sum_axis(ndarray::Axis(0)) / n as f64;
            let centered = &res.residuals - &mean.view().insert_axis(ndarray::Axis(0));
            // Find the worst whitened direction.
            let mut worst_k = 0;
            let mut worst_a = 0.0;
            for k in 0..w.ncols() {
                let col = w.column(k).insert_axis(ndarray::Axis(1)).to_owned();
                let a = longrange::max_lag_autocorrelation(col.view(), 5);
                if a > worst_a { worst_a = a; worst_k = k; }
            }
            println!("worst whitened dir {worst_k} autocorr {worst_a:.4}, eigenvalue {:.4e}", t.eigenvalues[worst_k]);
            let u_k = t.basis.column(worst_k).to_owned();
            println!("u_k top loadings:");
            let mut loads: Vec<(usize, f64)> = u_k.iter().cloned().enumerate().collect();
            loads.sort_by(|a, b| b.1.abs().partial_cmp(&a.1.abs()).unwrap());
            for (i, v) in loads.iter().take(5) {
                println!("  residual comp {i}: loading {v:.4}");
            }
            // lag-1 cross-covariance quadratic form contributions
            let lag = 1usize;
            let a_block = centered.slice(ndarray::s![lag.., ..]);
            let b_block = centered.slice(ndarray::s![..n - lag, ..]);
            let c1 = a_block.t().dot(&b_block) / (n - lag) as f64;
            let mut contributions: Vec<(usize, usize, f64)> = Vec::new();
            for i in 0..dim {
                for j in 0..dim {
                    let c = u_k[i] * c1[(i, j)] * u_k[j] / t.eigenvalues[worst_k];
                    if c.abs() > 0.002 {
                        contributions.push((i, j, c));
                    }
                }
            }
            contributions.sort_by(|a, b| b.2.abs().partial_cmp(&a.2.abs()).unwrap());
            for (i, j, c) in contributions.iter().take(8) {
                println!("  C1 contribution [{i},{j}]: {c:.4} (C1 = {:.3e})", c1[(*i, *j)]);
            }
        }
        // Drop the first 1000 rows and re-whiten with the same transform.
        let trimmed = w.slice(ndarray::s![1000.., ..]).to_owned();
        let a_trim = longrange::max_lag_autocorrelation(trimmed.view(), 5);
        println!("TRUE-alpha fit, first 1000 whitened rows dropped: max autocorr {a_trim:.4e}");
    }
    // Recompute residuals and whiten; profile per-component autocorr.
    let (normalized, _) = preprocessing::normalize(&out.series, 1e-12).unwrap();
    let basis = preprocessing::fit_spatial_pca(normalized.view()).unwrap();
    let n_c = report.n_components;
    let projected = preprocessing::project(normalized.view(), &basis, n_c).unwrap();
    let res = longrange::residuals(projected.coefficients.view(), &model.weights, &model.alphas).unwrap();
    let w = model.whitening.whiten_rows(res.residuals.view()).unwrap();
    for j in 0..w.ncols() {
        let col = w.column(j).insert_axis(ndarray::Axis(1)).to_owned();
        let a = longrange::max_lag_autocorrelation(col.view(), 5);
        if a > 0.02 {
            println!("whitened comp {j}: max autocorr {a:.4}");
        }
    }
    // Raw residual comps too
    for j in 0..res.residuals.ncols() {
        let col = res.residuals.column(j).insert_axis(ndarray::Axis(1)).to_owned();
        let a = longrange::max_lag_autocorrelation(col.view(), 5);
        if a > 0.02 {
            println!("raw residual comp {j}: max autocorr {a:.4} var {:.4e}", col.iter().map(|v| v*v).sum::<f64>() / col.len() as f64);
        }
    }
}
