//! Evaluation suite: temporal power spectra, streamwise slopes, OPD RMS,
//! 2D structure function, NRMSE, and pre-multiplied Strouhal spectra.
//!
//! Spectra use Welch's method: overlapping windowed segments, periodograms
//! averaged per pixel and then across the aperture. The normalization is
//! chosen so that the integrated one-sided spectrum equals the signal
//! variance (energy per time-step per Hz), which the Parseval tests pin down.

use crate::error::{Result, RevarError};
use crate::geometry::ApertureGeometry;
use crate::linalg;
use crate::series::PhaseScreenSeries;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Window applied to each Welch segment (periodic convention).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    #[default]
    Hamming,
    Hann,
    Rectangular,
}

impl WindowKind {
    fn coefficient(self, i: usize, n: usize) -> f64 {
        let phase = std::f64::consts::TAU * i as f64 / n as f64;
        match self {
            WindowKind::Hamming => 0.54 - 0.46 * phase.cos(),
            WindowKind::Hann => 0.5 * (1.0 - phase.cos()),
            WindowKind::Rectangular => 1.0,
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "hamming" => Ok(WindowKind::Hamming),
            "hann" => Ok(WindowKind::Hann),
            "rectangular" | "rect" | "boxcar" => Ok(WindowKind::Rectangular),
            other => Err(RevarError::InvalidInput(format!(
                "unknown window '{other}' (expected hamming, hann, or rectangular)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            WindowKind::Hamming => "hamming",
            WindowKind::Hann => "hann",
            WindowKind::Rectangular => "rectangular",
        }
    }
}

/// Welch estimator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchConfig {
    pub segment_length: usize,
    /// Overlap fraction in [0, 1).
    pub overlap: f64,
    pub window: WindowKind,
}

impl Default for WelchConfig {
    fn default() -> Self {
        WelchConfig {
            segment_length: 1024,
            overlap: 0.5,
            window: WindowKind::Hamming,
        }
    }
}

impl WelchConfig {
    fn hop(&self) -> usize {
        let hop = self.segment_length
            - ((self.segment_length as f64 * self.overlap).floor() as usize)
                .min(self.segment_length - 1);
        hop.max(1)
    }

    fn validate(&self, n_steps: usize) -> Result<()> {
        if self.segment_length < 2 {
            return Err(RevarError::InvalidInput(
                "Welch segment length must be at least 2".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(RevarError::InvalidInput(format!(
                "Welch overlap must lie in [0, 1), got {}",
                self.overlap
            )));
        }
        if n_steps < self.segment_length {
            return Err(RevarError::InvalidInput(format!(
                "series of {n_steps} steps is shorter than the Welch segment length {}; \
                 pass a smaller --segment",
                self.segment_length
            )));
        }
        Ok(())
    }
}

/// One-sided averaged power spectral density.
#[derive(Debug, Clone)]
pub struct SpectrumEstimate {
    /// Strictly increasing, from 0 to the Nyquist frequency.
    pub frequencies: Array1<f64>,
    /// Power per Hz (or per cycles/step when the sampling rate is 1).
    pub power: Array1<f64>,
    pub config: WelchConfig,
    pub n_segments: usize,
}

impl SpectrumEstimate {
    /// Trapezoid-free integral: bin power times bin width.
    pub fn integrated_power(&self) -> f64 {
        let df = if self.frequencies.len() > 1 {
            self.frequencies[1] - self.frequencies[0]
        } else {
            0.0
        };
        linalg::blocked_sum(self.power.as_slice().expect("contiguous")) * df
    }
}

/// Shared plan so repeated Welch runs at one segment length reuse the FFT.
struct WelchPlan {
    fft: Arc<dyn rustfft::Fft<f64>>,
    window: Vec<f64>,
    window_power: f64,
    segment_length: usize,
    hop: usize,
}

impl WelchPlan {
    fn new(cfg: &WelchConfig) -> Self {
        let n = cfg.segment_length;
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let window: Vec<f64> = (0..n).map(|i| cfg.window.coefficient(i, n)).collect();
        let window_power = window.iter().map(|w| w * w).sum();
        WelchPlan {
            fft,
            window,
            window_power,
            segment_length: n,
            hop: cfg.hop(),
        }
    }

    fn n_bins(&self) -> usize {
        self.segment_length / 2 + 1
    }

    fn n_segments(&self, len: usize) -> usize {
        if len < self.segment_length {
            0
        } else {
            1 + (len - self.segment_length) / self.hop
        }
    }

    /// Accumulate the averaged one-sided periodogram of one signal into `acc`
    /// (already scaled by `1 / (fs * window_power * n_segments)` at the end).
    fn accumulate(&self, signal: &[f64], acc: &mut [f64]) {
        let n = self.segment_length;
        let mut buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); n];
        let segments = self.n_segments(signal.len());
        for s in 0..segments {
            let start = s * self.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex::new(signal[start + i] * self.window[i], 0.0);
            }
            self.fft.process(&mut buf);
            for (k, a) in acc.iter_mut().enumerate() {
                *a += buf[k].norm_sqr();
            }
        }
    }
}

fn finalize_psd(
    mut acc: Vec<f64>,
    plan: &WelchPlan,
    fs: f64,
    n_signals: usize,
    n_segments: usize,
    cfg: &WelchConfig,
) -> SpectrumEstimate {
    let n = plan.segment_length;
    let norm = 1.0 / (fs * plan.window_power * (n_segments * n_signals) as f64);
    let nyquist_is_exact = n % 2 == 0;
    let bins = acc.len();
    for (k, a) in acc.iter_mut().enumerate() {
        let one_sided = if k == 0 || (nyquist_is_exact && k == bins - 1) {
            1.0
        } else {
            2.0
        };
        *a *= norm * one_sided;
    }
    let frequencies = Array1::from_iter((0..bins).map(|k| k as f64 * fs / n as f64));
    SpectrumEstimate {
        frequencies,
        power: Array1::from_vec(acc),
        config: *cfg,
        n_segments,
    }
}

/// Welch PSD of each column of `data`, averaged across columns.
pub fn average_column_psd(
    data: ArrayView2<'_, f64>,
    fs: f64,
    cfg: &WelchConfig,
) -> Result<SpectrumEstimate> {
    cfg.validate(data.nrows())?;
    if data.ncols() == 0 {
        return Err(RevarError::InvalidInput("no signals to average".into()));
    }
    let plan = WelchPlan::new(cfg);
    let n_segments = plan.n_segments(data.nrows());
    let partials: Vec<Vec<f64>> = (0..data.ncols())
        .into_par_iter()
        .map(|j| {
            let signal: Vec<f64> = data.column(j).to_vec();
            let mut acc = vec![0.0f64; plan.n_bins()];
            plan.accumulate(&signal, &mut acc);
            acc
        })
        .collect();
    let mut acc = vec![0.0f64; plan.n_bins()];
    for p in partials {
        for (a, v) in acc.iter_mut().zip(p.iter()) {
            *a += v;
        }
    }
    Ok(finalize_psd(acc, &plan, fs, data.ncols(), n_segments, cfg))
}

/// Temporal power spectrum of a series: per-pixel Welch PSD averaged over the
/// aperture.
pub fn tps(series: &PhaseScreenSeries, cfg: &WelchConfig) -> Result<SpectrumEstimate> {
    average_column_psd(
        series.frames().view(),
        series.sampling_frequency(),
        cfg,
    )
}

/// Streamwise (x-direction) slopes of every frame: central differences where
/// both horizontal neighbors are masked, one-sided at mask edges, scaled by
/// the pixel pitch. Pixels with no masked horizontal neighbor drop out of the
/// slope aperture.
pub fn streamwise_slopes(series: &PhaseScreenSeries) -> Result<PhaseScreenSeries> {
    let geom = series.geometry();
    let rows = geom.rows();
    let cols = geom.cols();
    let pitch = geom.pixel_pitch_x();

    // Slope stencil per masked pixel: (left neighbor, right neighbor).
    #[derive(Clone, Copy)]
    enum Stencil {
        Central(usize, usize),
        Forward(usize, usize),
        Backward(usize, usize),
    }
    let mut slope_mask = vec![false; rows * cols];
    let mut stencils: Vec<Stencil> = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let here = match geom.index_of(r, c) {
                Some(i) => i,
                None => continue,
            };
            let left = c.checked_sub(1).and_then(|cc| geom.index_of(r, cc));
            let right = geom.index_of(r, c + 1);
            let stencil = match (left, right) {
                (Some(l), Some(rr)) => Some(Stencil::Central(l, rr)),
                (None, Some(rr)) => Some(Stencil::Forward(here, rr)),
                (Some(l), None) => Some(Stencil::Backward(l, here)),
                (None, None) => None,
            };
            if let Some(s) = stencil {
                slope_mask[r * cols + c] = true;
                stencils.push(s);
            }
        }
    }
    if stencils.is_empty() {
        return Err(RevarError::InvalidInput(
            "no row of the aperture has two adjacent masked pixels; slopes are undefined"
                .into(),
        ));
    }
    let slope_geom = ApertureGeometry::with_pitch(
        rows,
        cols,
        slope_mask,
        geom.pixel_pitch_x(),
        geom.pixel_pitch_y(),
    )?;

    let n_t = series.n_frames();
    let mut out = Array2::zeros((n_t, stencils.len()));
    for (n, frame) in series.frames().outer_iter().enumerate() {
        for (k, st) in stencils.iter().enumerate() {
            out[(n, k)] = match *st {
                Stencil::Central(l, r) => (frame[r] - frame[l]) / (2.0 * pitch),
                Stencil::Forward(here, r) => (frame[r] - frame[here]) / pitch,
                Stencil::Backward(l, here) => (frame[here] - frame[l]) / pitch,
            };
        }
    }
    PhaseScreenSeries::new(
        slope_geom,
        out,
        series.sampling_frequency(),
        format!("{} (streamwise slopes)", series.label()),
    )
}

/// Root-mean-square OPD over all masked pixels and frames. With
/// `remove_piston` the per-frame spatial mean is subtracted first.
pub fn opd_rms(series: &PhaseScreenSeries, remove_piston: bool) -> f64 {
    let frames = series.frames();
    let partials: Vec<f64> = frames
        .outer_iter()
        .map(|frame| {
            let piston = if remove_piston {
                linalg::blocked_mean(frame.as_slice().expect("contiguous"))
            } else {
                0.0
            };
            frame.iter().map(|v| (v - piston) * (v - piston)).sum()
        })
        .collect();
    let total = linalg::blocked_sum(&partials);
    (total / (frames.nrows() * frames.ncols()) as f64).sqrt()
}

/// 2D structure function on a displacement grid `[-max..max]^2` (pixels).
#[derive(Debug, Clone)]
pub struct StructureFunction2D {
    pub max_displacement: usize,
    /// `(2*max+1) x (2*max+1)`, indexed `[dy + max, dx + max]`.
    pub values: Array2<f64>,
    pub counts: Array2<u64>,
    pub pixel_pitch_x: f64,
    pub pixel_pitch_y: f64,
}

impl StructureFunction2D {
    pub fn value_at(&self, dx: i64, dy: i64) -> Option<(f64, u64)> {
        let m = self.max_displacement as i64;
        if dx.abs() > m || dy.abs() > m {
            return None;
        }
        let (iy, ix) = ((dy + m) as usize, (dx + m) as usize);
        let count = self.counts[(iy, ix)];
        if count == 0 {
            None
        } else {
            Some((self.values[(iy, ix)], count))
        }
    }
}

/// Time-and-space averaged squared OPD difference per displacement.
///
/// Computed from the time-averaged Gram matrix of the frames:
/// `mean_t (a - b)^2 = q_a + q_b - 2 G_ab`; pairs are enumerated once per
/// displacement half-plane and mirrored so `D(delta) = D(-delta)` exactly.
pub fn structure_function(
    series: &PhaseScreenSeries,
    max_displacement: usize,
) -> Result<StructureFunction2D> {
    let geom = series.geometry();
    if max_displacement == 0
        || max_displacement >= geom.rows().max(geom.cols())
    {
        return Err(RevarError::InvalidInput(format!(
            "max displacement {max_displacement} must be positive and inside the {}x{} grid",
            geom.rows(),
            geom.cols()
        )));
    }
    let frames = series.frames();
    let n_t = frames.nrows();
    let gram = frames.t().dot(frames) / n_t as f64;

    let m = max_displacement as i64;
    let side = 2 * max_displacement + 1;
    let mut values = Array2::<f64>::zeros((side, side));
    let mut counts = Array2::<u64>::zeros((side, side));

    for dy in 0..=m {
        let dx_min = if dy == 0 { 0 } else { -m };
        for dx in dx_min..=m {
            let mut sum = 0.0;
            let mut count = 0u64;
            for flat in 0..geom.n_pixels() {
                let (r, c) = geom.coords_of(flat);
                let (r2, c2) = (r as i64 + dy, c as i64 + dx);
                if r2 < 0 || c2 < 0 {
                    continue;
                }
                if let Some(other) = geom.index_of(r2 as usize, c2 as usize) {
                    sum += gram[(flat, flat)] + gram[(other, other)] - 2.0 * gram[(flat, other)];
                    count += 1;
                }
            }
            let (iy, ix) = ((dy + m) as usize, (dx + m) as usize);
            let (jy, jx) = ((-dy + m) as usize, (-dx + m) as usize);
            if count > 0 {
                let v = sum / count as f64;
                values[(iy, ix)] = v;
                counts[(iy, ix)] = count;
                values[(jy, jx)] = v;
                counts[(jy, jx)] = count;
            }
        }
    }
    Ok(StructureFunction2D {
        max_displacement,
        values,
        counts,
        pixel_pitch_x: geom.pixel_pitch_x(),
        pixel_pitch_y: geom.pixel_pitch_y(),
    })
}

/// Normalized root-mean-square error with a reference-RMS denominator.
/// Curves must share their sample grid; no resampling happens here.
pub fn nrmse(estimate: ArrayView1<'_, f64>, reference: ArrayView1<'_, f64>) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(RevarError::dims(
            "NRMSE curves",
            reference.len(),
            estimate.len(),
        ));
    }
    if estimate.is_empty() {
        return Err(RevarError::InvalidInput("empty NRMSE curves".into()));
    }
    let sq_err: Vec<f64> = estimate
        .iter()
        .zip(reference.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .collect();
    let sq_ref: Vec<f64> = reference.iter().map(|b| b * b).collect();
    let denom = linalg::blocked_mean(&sq_ref).sqrt();
    if denom == 0.0 {
        return Err(RevarError::InvalidInput(
            "NRMSE reference curve is identically zero".into(),
        ));
    }
    Ok(linalg::blocked_mean(&sq_err).sqrt() / denom)
}

/// NRMSE between two spectra; their frequency grids must match exactly.
pub fn nrmse_spectra(estimate: &SpectrumEstimate, reference: &SpectrumEstimate) -> Result<f64> {
    if estimate.frequencies.len() != reference.frequencies.len()
        || estimate
            .frequencies
            .iter()
            .zip(reference.frequencies.iter())
            .any(|(a, b)| a != b)
    {
        return Err(RevarError::InvalidInput(
            "spectra are sampled on different frequency grids; \
             compare with identical Welch settings and sampling rates"
                .into(),
        ));
    }
    nrmse(estimate.power.view(), reference.power.view())
}

/// Pre-multiplied spectrum over Strouhal number: abscissa `St = f δ / U_c`,
/// ordinate `St * S(f)`, optionally truncated at `max_strouhal`.
pub fn premultiplied_strouhal(
    spectrum: &SpectrumEstimate,
    delta: f64,
    convective_velocity: f64,
    max_strouhal: Option<f64>,
) -> Result<(Array1<f64>, Array1<f64>)> {
    if !(delta > 0.0 && convective_velocity > 0.0) {
        return Err(RevarError::InvalidInput(
            "boundary-layer length and convective velocity must be positive".into(),
        ));
    }
    let mut st = Vec::new();
    let mut pre = Vec::new();
    for (&f, &p) in spectrum.frequencies.iter().zip(spectrum.power.iter()) {
        let s = f * delta / convective_velocity;
        if let Some(cap) = max_strouhal {
            if s > cap {
                break;
            }
        }
        st.push(s);
        pre.push(s * p);
    }
    Ok((Array1::from_vec(st), Array1::from_vec(pre)))
}

/// Settings for the paired reference/synthetic comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationConfig {
    pub welch: WelchConfig,
    pub max_displacement: usize,
    /// Displacements with fewer pairs than this are excluded from the
    /// structure-function comparison.
    pub min_pair_count: u64,
    pub remove_piston: bool,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            welch: WelchConfig::default(),
            max_displacement: 8,
            min_pair_count: 100,
            remove_piston: false,
        }
    }
}

/// A reference curve and the synthetic curve sampled on the same grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairedCurve {
    pub grid: Vec<f64>,
    pub reference: Vec<f64>,
    pub synthetic: Vec<f64>,
}

/// Structure-function comparison points (common displacements only).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairedStructureFunction {
    pub displacements: Vec<(i64, i64)>,
    pub reference_sqrt: Vec<f64>,
    pub synthetic_sqrt: Vec<f64>,
    pub counts: Vec<u64>,
}

/// The four scalar errors plus the paired curves they were computed from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub slopes_tps_nrmse: f64,
    pub opd_tps_nrmse: f64,
    pub opd_rms_relative_error: f64,
    pub structure_function_nrmse: f64,
    pub opd_rms_reference: f64,
    pub opd_rms_synthetic: f64,
    pub opd_spectrum: PairedCurve,
    pub slopes_spectrum: PairedCurve,
    pub structure_function: PairedStructureFunction,
}

impl EvaluationReport {
    /// Mean of per-replicate reports: scalar errors and synthetic curves are
    /// averaged; the reference side is common to all replicates.
    pub fn average(reports: &[EvaluationReport]) -> Result<EvaluationReport> {
        if reports.is_empty() {
            return Err(RevarError::InvalidInput("no reports to average".into()));
        }
        let mut out = reports[0].clone();
        let k = reports.len() as f64;
        let mean =
            |f: &dyn Fn(&EvaluationReport) -> f64| reports.iter().map(|r| f(r)).sum::<f64>() / k;
        out.slopes_tps_nrmse = mean(&|r| r.slopes_tps_nrmse);
        out.opd_tps_nrmse = mean(&|r| r.opd_tps_nrmse);
        out.opd_rms_relative_error = mean(&|r| r.opd_rms_relative_error);
        out.structure_function_nrmse = mean(&|r| r.structure_function_nrmse);
        out.opd_rms_synthetic = mean(&|r| r.opd_rms_synthetic);
        for i in 0..out.opd_spectrum.synthetic.len() {
            out.opd_spectrum.synthetic[i] =
                reports.iter().map(|r| r.opd_spectrum.synthetic[i]).sum::<f64>() / k;
        }
        for i in 0..out.slopes_spectrum.synthetic.len() {
            out.slopes_spectrum.synthetic[i] = reports
                .iter()
                .map(|r| r.slopes_spectrum.synthetic[i])
                .sum::<f64>()
                / k;
        }
        for i in 0..out.structure_function.synthetic_sqrt.len() {
            out.structure_function.synthetic_sqrt[i] = reports
                .iter()
                .map(|r| r.structure_function.synthetic_sqrt[i])
                .sum::<f64>()
                / k;
        }
        Ok(out)
    }
}

/// Compare a synthetic series against a reference with identical spectral
/// settings on both sides.
pub fn evaluate(
    reference: &PhaseScreenSeries,
    synthetic: &PhaseScreenSeries,
    cfg: &EvaluationConfig,
) -> Result<EvaluationReport> {
    if reference.geometry() != synthetic.geometry() {
        return Err(RevarError::InvalidInput(
            "reference and synthetic series have different aperture geometries".into(),
        ));
    }
    if reference.sampling_frequency() != synthetic.sampling_frequency() {
        return Err(RevarError::InvalidInput(
            "reference and synthetic series have different sampling frequencies".into(),
        ));
    }

    let ref_opd_tps = tps(reference, &cfg.welch)?;
    let syn_opd_tps = tps(synthetic, &cfg.welch)?;
    let opd_tps_nrmse = nrmse_spectra(&syn_opd_tps, &ref_opd_tps)?;

    let ref_slopes = streamwise_slopes(reference)?;
    let syn_slopes = streamwise_slopes(synthetic)?;
    let ref_slopes_tps = tps(&ref_slopes, &cfg.welch)?;
    let syn_slopes_tps = tps(&syn_slopes, &cfg.welch)?;
    let slopes_tps_nrmse = nrmse_spectra(&syn_slopes_tps, &ref_slopes_tps)?;

    let rms_ref = opd_rms(reference, cfg.remove_piston);
    let rms_syn = opd_rms(synthetic, cfg.remove_piston);
    if rms_ref == 0.0 {
        return Err(RevarError::InvalidInput(
            "reference series has zero RMS".into(),
        ));
    }
    let opd_rms_relative_error = (rms_syn - rms_ref).abs() / rms_ref;

    let ref_sf = structure_function(reference, cfg.max_displacement)?;
    let syn_sf = structure_function(synthetic, cfg.max_displacement)?;
    let m = cfg.max_displacement as i64;
    let mut displacements = Vec::new();
    let mut ref_sqrt = Vec::new();
    let mut syn_sqrt = Vec::new();
    let mut counts = Vec::new();
    for dy in -m..=m {
        for dx in -m..=m {
            if dx == 0 && dy == 0 {
                continue;
            }
            if let (Some((rv, rc)), Some((sv, sc))) =
                (ref_sf.value_at(dx, dy), syn_sf.value_at(dx, dy))
            {
                if rc >= cfg.min_pair_count && sc >= cfg.min_pair_count {
                    displacements.push((dx, dy));
                    ref_sqrt.push(rv.max(0.0).sqrt());
                    syn_sqrt.push(sv.max(0.0).sqrt());
                    counts.push(rc.min(sc));
                }
            }
        }
    }
    if displacements.is_empty() {
        return Err(RevarError::InvalidInput(format!(
            "no structure-function displacement has {} pairs on both sides",
            cfg.min_pair_count
        )));
    }
    let structure_function_nrmse = nrmse(
        Array1::from_vec(syn_sqrt.clone()).view(),
        Array1::from_vec(ref_sqrt.clone()).view(),
    )?;

    Ok(EvaluationReport {
        slopes_tps_nrmse,
        opd_tps_nrmse,
        opd_rms_relative_error,
        structure_function_nrmse,
        opd_rms_reference: rms_ref,
        opd_rms_synthetic: rms_syn,
        opd_spectrum: PairedCurve {
            grid: ref_opd_tps.frequencies.to_vec(),
            reference: ref_opd_tps.power.to_vec(),
            synthetic: syn_opd_tps.power.to_vec(),
        },
        slopes_spectrum: PairedCurve {
            grid: ref_slopes_tps.frequencies.to_vec(),
            reference: ref_slopes_tps.power.to_vec(),
            synthetic: syn_slopes_tps.power.to_vec(),
        },
        structure_function: PairedStructureFunction {
            displacements,
            reference_sqrt: ref_sqrt,
            synthetic_sqrt: syn_sqrt,
            counts,
        },
    })
}
