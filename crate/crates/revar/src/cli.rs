//! Command-line interface: `fit`, `generate`, `evaluate`, `sweep-lags`,
//! `make-oracle`, and `info`.
//!
//! Every command is deterministic given its flags; generation commands take a
//! mandatory `--seed` and nothing reads the environment. Exit code 2 marks
//! rejected inputs, 3 numerical or stability failures.

use crate::error::{Result, RevarError};
use crate::longrange::AlphaForm;
use crate::metrics::{EvaluationConfig, EvaluationReport, StructureFunction2D, WelchConfig, WindowKind};

use crate::oracle::{self, LongRangeOracleParams, OracleKind, OracleSpec};
use crate::persistence;
use crate::pipeline::{self, FitConfig, ReplicateConfig};
use crate::plot;

use crate::synthesis::{self, InitialStats, SynthesisConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "revar",
    version,
    about = "Fit a re-whitened vector autoregression to phase-screen data and synthesize \
             statistically matched series"
)]
pub struct Cli {
    /// Rayon thread count (defaults to the machine's cores). Results are
    /// identical for any value.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum WindowArg {
    Hamming,
    Hann,
    Rectangular,
}

impl From<WindowArg> for WindowKind {
    fn from(w: WindowArg) -> Self {
        match w {
            WindowArg::Hamming => WindowKind::Hamming,
            WindowArg::Hann => WindowKind::Hann,
            WindowArg::Rectangular => WindowKind::Rectangular,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum AlphaFormArg {
    /// alpha = 2 pi f_cut
    Linear,
    /// alpha = 1 - exp(-2 pi f_cut)
    Exact,
}

impl From<AlphaFormArg> for AlphaForm {
    fn from(a: AlphaFormArg) -> Self {
        match a {
            AlphaFormArg::Linear => AlphaForm::Linear,
            AlphaFormArg::Exact => AlphaForm::Exact,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum BaselineArg {
    /// Single-lag full-space VAR.
    Vogel,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum InitStatsArg {
    /// Initial lag vectors scaled by the first-PCA variances.
    Pca,
    /// Initial lag vectors drawn through the residual coloring map.
    Residual,
}

impl From<InitStatsArg> for InitialStats {
    fn from(v: InitStatsArg) -> Self {
        match v {
            InitStatsArg::Pca => InitialStats::Pca,
            InitStatsArg::Residual => InitialStats::Residual,
        }
    }
}

#[derive(Args, Clone)]
pub struct WelchArgs {
    /// Welch segment length.
    #[arg(long, default_value_t = 1024)]
    pub segment: usize,
    /// Welch overlap fraction in [0, 1).
    #[arg(long, default_value_t = 0.5)]
    pub overlap: f64,
    #[arg(long, value_enum, default_value_t = WindowArg::Hamming)]
    pub window: WindowArg,
}

impl WelchArgs {
    fn to_config(&self) -> WelchConfig {
        WelchConfig {
            segment_length: self.segment,
            overlap: self.overlap,
            window: self.window.into(),
        }
    }
}

#[derive(Subcommand)]
pub enum Command {
    /// Estimate model parameters from a PSS container.
    Fit {
        /// Input PSS directory.
        input: PathBuf,
        /// Output model directory.
        #[arg(short, long)]
        output: PathBuf,
        /// Number of time lags.
        #[arg(long, default_value_t = 4)]
        lags: usize,
        /// Number of low-pass filters.
        #[arg(long, default_value_t = 2)]
        filters: usize,
        /// Spatial variance fraction selecting the prediction subspace.
        #[arg(long, default_value_t = 0.99)]
        variance_fraction: f64,
        /// Leading fraction of frames used for estimation.
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        #[command(flatten)]
        welch: WelchArgs,
        /// Baseline configuration preset.
        #[arg(long, value_enum)]
        baseline: Option<BaselineArg>,
        /// Mapping from cut-off frequency to filter gain.
        #[arg(long, value_enum, default_value_t = AlphaFormArg::Linear)]
        alpha_form: AlphaFormArg,
        /// Where to write the fit report (default: <output>/fit_report.json).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Replace the output directory if it exists.
        #[arg(long)]
        force: bool,
    },
    /// Generate a synthetic PSS container from a fitted model.
    Generate {
        /// Model directory.
        model: PathBuf,
        /// Output PSS directory.
        #[arg(short, long)]
        output: PathBuf,
        /// Number of frames to synthesize.
        #[arg(long)]
        frames: usize,
        /// Noise seed (mandatory: there is no ambient randomness).
        #[arg(long)]
        seed: u64,
        /// Frames generated and discarded before the first emitted one.
        #[arg(long, default_value_t = 0)]
        burn_in: usize,
        /// Also write the leading-coefficient rows as coeffs.f64.
        #[arg(long)]
        emit_coefficients: bool,
        /// Statistics of the initial lag vectors.
        #[arg(long, value_enum, default_value_t = InitStatsArg::Pca)]
        init_stats: InitStatsArg,
        #[arg(long)]
        force: bool,
    },
    /// Compare a synthetic series (or fresh model replicates) to a reference.
    Evaluate {
        /// Reference PSS directory.
        #[arg(long)]
        reference: PathBuf,
        /// Synthetic PSS directory to compare directly.
        #[arg(long, conflicts_with = "model")]
        synthetic: Option<PathBuf>,
        /// Model directory: generate replicates and average their reports.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Output report directory.
        #[arg(short, long)]
        output: PathBuf,
        /// Replicates when evaluating a model.
        #[arg(long, default_value_t = 20)]
        replicates: usize,
        /// Replicate length as a multiple of the reference length.
        #[arg(long, default_value_t = 20.0)]
        length_factor: f64,
        /// Noise seed (mandatory with --model).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0)]
        burn_in: usize,
        #[command(flatten)]
        welch: WelchArgs,
        /// Largest structure-function displacement in pixels.
        #[arg(long, default_value_t = 8)]
        max_displacement: usize,
        /// Minimum pixel pairs for a displacement to enter the comparison.
        #[arg(long, default_value_t = 100)]
        min_pair_count: u64,
        /// Subtract each frame's spatial mean before the RMS comparison.
        #[arg(long)]
        remove_piston: bool,
        #[arg(long)]
        force: bool,
    },
    /// Fit and evaluate across a list of lag counts.
    SweepLags {
        /// Input PSS directory.
        input: PathBuf,
        /// Output directory for the sweep table and plots.
        #[arg(short, long)]
        output: PathBuf,
        /// Comma-separated lag counts, e.g. 1,2,3,4,5,6.
        #[arg(long, value_delimiter = ',', required = true)]
        lags: Vec<usize>,
        /// Noise seed for replicate generation.
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        filters: usize,
        #[arg(long, default_value_t = 0.99)]
        variance_fraction: f64,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        #[arg(long, default_value_t = 20)]
        replicates: usize,
        /// Replicate length as a multiple of the held-out split.
        #[arg(long, default_value_t = 20.0)]
        length_factor: f64,
        #[arg(long, default_value_t = 0)]
        burn_in: usize,
        #[command(flatten)]
        welch: WelchArgs,
        #[arg(long, default_value_t = 8)]
        max_displacement: usize,
        #[arg(long, default_value_t = 100)]
        min_pair_count: u64,
        #[arg(long)]
        force: bool,
    },
    /// Generate a deterministic synthetic dataset with known ground truth.
    MakeOracle {
        #[arg(long, value_enum)]
        kind: OracleKindArg,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 5)]
        rows: usize,
        #[arg(long, default_value_t = 5)]
        cols: usize,
        #[arg(long)]
        frames: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1000.0)]
        sampling_frequency: f64,
        /// Write the ground-truth model container here (longrange-ar only).
        #[arg(long)]
        theta_out: Option<PathBuf>,
        /// Dynamic subspace size (longrange-ar).
        #[arg(long, default_value_t = 20)]
        components: usize,
        #[arg(long, default_value_t = 3)]
        oracle_lags: usize,
        #[arg(long, default_value_t = 2)]
        oracle_filters: usize,
        /// Spectral peak of the oracle dynamics in cycles/step (longrange-ar).
        #[arg(long, default_value_t = 0.12)]
        peak_frequency: f64,
        #[arg(long, default_value_t = 0.02)]
        tail_fraction: f64,
        /// Noise scale for the white-noise kind.
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Additive measurement noise for the translating/sinusoids kinds.
        #[arg(long, default_value_t = 0.02)]
        noise_sigma: f64,
        /// Translation speed in pixels/step (translating kind).
        #[arg(long, default_value_t = 0.25)]
        speed: f64,
        /// Number of spatial modes (sinusoids kind).
        #[arg(long, default_value_t = 4)]
        modes: usize,
        #[arg(long)]
        force: bool,
    },
    /// Print a summary of a PSS or model container.
    Info { path: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
pub enum OracleKindArg {
    WhiteNoise,
    Translating,
    Sinusoids,
    LongrangeAr,
}

pub fn run() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| RevarError::InvalidInput(format!("thread pool: {e}")))?;
    }
    dispatch(cli.command)
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Fit {
            input,
            output,
            lags,
            filters,
            variance_fraction,
            train_fraction,
            welch,
            baseline,
            alpha_form,
            report,
            force,
        } => {
            let series = persistence::read_pss(&input)?;
            let cfg = FitConfig {
                n_lags: lags,
                n_filters: filters,
                variance_fraction,
                train_fraction,
                welch: welch.to_config(),
                baseline_vogel: matches!(baseline, Some(BaselineArg::Vogel)),
                alpha_form: alpha_form.into(),
                ..FitConfig::default()
            };
            let (model, fit_report) = pipeline::fit(&series, &cfg)?;
            persistence::save_model(&model, &output, force)?;
            let report_path = report.unwrap_or_else(|| output.join("fit_report.json"));
            persistence::write_report(&report_path, &fit_report)?;
            println!(
                "fit: {} frames -> N_c={} of {}, f_c={}, alphas={:?}",
                fit_report.n_train,
                fit_report.n_components,
                model.n_pixels(),
                fit_report
                    .cutoff_frequency
                    .map(|f| format!("{f:.5} cycles/step"))
                    .unwrap_or_else(|| "n/a".into()),
                fit_report.alphas,
            );
            println!(
                "fit: training MSE {:.6e}, residual whiteness: offdiag {:.3e}, autocorr {:.3e}",
                fit_report.training_mse_total,
                fit_report.whiteness.max_offdiag_covariance,
                fit_report.whiteness.max_lag_autocorrelation,
            );
            println!("model written to {}", output.display());
            Ok(())
        }
        Command::Generate {
            model,
            output,
            frames,
            seed,
            burn_in,
            emit_coefficients,
            init_stats,
            force,
        } => {
            let model = persistence::load_model(&model)?;
            let mut cfg = SynthesisConfig::new(frames, seed);
            cfg.burn_in = burn_in;
            cfg.emit_coefficients = emit_coefficients;
            cfg.init_stats = init_stats.into();
            let out = synthesis::generate(&model, &cfg)?;
            persistence::write_pss(
                &out.series,
                &output,
                Some(&out.provenance),
                out.coefficients.as_ref(),
                force,
            )?;
            println!(
                "generated {} frames (seed {seed}, generator {}) -> {}",
                frames,
                out.provenance.generator,
                output.display()
            );
            Ok(())
        }
        Command::Evaluate {
            reference,
            synthetic,
            model,
            output,
            replicates,
            length_factor,
            seed,
            burn_in,
            welch,
            max_displacement,
            min_pair_count,
            remove_piston,
            force,
        } => {
            let reference = persistence::read_pss(&reference)?;
            let eval_cfg = EvaluationConfig {
                welch: welch.to_config(),
                max_displacement,
                min_pair_count,
                remove_piston,
            };
            let report = match (synthetic, model) {
                (Some(syn_path), None) => {
                    let synthetic = persistence::read_pss(&syn_path)?;
                    crate::metrics::evaluate(&reference, &synthetic, &eval_cfg)?
                }
                (None, Some(model_path)) => {
                    let seed = seed.ok_or_else(|| {
                        RevarError::InvalidInput(
                            "--seed is required when evaluating a model".into(),
                        )
                    })?;
                    let model = persistence::load_model(&model_path)?;
                    let frames =
                        ((reference.n_frames() as f64 * length_factor).round() as usize).max(1);
                    let rep = ReplicateConfig {
                        replicates,
                        frames_per_replicate: frames,
                        seed,
                        burn_in,
                    };
                    let (avg, _) = pipeline::evaluate_model(&model, &reference, &rep, &eval_cfg)?;
                    avg
                }
                (None, None) => {
                    return Err(RevarError::InvalidInput(
                        "pass either --synthetic or --model".into(),
                    ))
                }
                (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
            };
            write_evaluation_outputs(&output, &report, max_displacement, force)?;
            println!(
                "slopes TPS NRMSE {:.4} | OPD TPS NRMSE {:.4} | OPD_rms rel err {:.4} | \
                 structure fn NRMSE {:.4}",
                report.slopes_tps_nrmse,
                report.opd_tps_nrmse,
                report.opd_rms_relative_error,
                report.structure_function_nrmse
            );
            println!("report written to {}", output.display());
            Ok(())
        }
        Command::SweepLags {
            input,
            output,
            lags,
            seed,
            filters,
            variance_fraction,
            train_fraction,
            replicates,
            length_factor,
            burn_in,
            welch,
            max_displacement,
            min_pair_count,
            force,
        } => {
            let series = persistence::read_pss(&input)?;
            let base = FitConfig {
                n_filters: filters,
                variance_fraction,
                train_fraction,
                welch: welch.to_config(),
                ..FitConfig::default()
            };
            let n_train =
                ((series.n_frames() as f64 * train_fraction).floor() as usize).max(2);
            let heldout_len = series.n_frames().saturating_sub(n_train).max(1);
            let rep = ReplicateConfig {
                replicates,
                frames_per_replicate: ((heldout_len as f64 * length_factor).round() as usize)
                    .max(1),
                seed,
                burn_in,
            };
            let eval_cfg = EvaluationConfig {
                welch: welch.to_config(),
                max_displacement,
                min_pair_count,
                remove_piston: false,
            };
            let sweep = pipeline::sweep_lags(&series, &lags, &base, &rep, &eval_cfg)?;
            std::fs::create_dir_all(&output).map_err(|e| RevarError::io(&output, e))?;
            if !force && output.join("sweep.json").exists() {
                return Err(RevarError::InvalidInput(format!(
                    "{} already contains a sweep; pass --force",
                    output.display()
                )));
            }
            persistence::write_report(&output.join("sweep.json"), &sweep)?;
            let mut csv = String::from(
                "n_lags,n_components,training_mse,opd_tps_nrmse,slopes_tps_nrmse,\
                 opd_rms_relative_error,structure_function_nrmse\n",
            );
            for r in &sweep.rows {
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    r.n_lags,
                    r.n_components,
                    r.training_mse_total,
                    r.opd_tps_nrmse,
                    r.slopes_tps_nrmse,
                    r.opd_rms_relative_error,
                    r.structure_function_nrmse
                ));
            }
            let csv_path = output.join("sweep.csv");
            std::fs::write(&csv_path, csv).map_err(|e| RevarError::io(&csv_path, e))?;
            plot::write_sweep_svg(
                &output.join("sweep.svg"),
                &lags,
                &[
                    (
                        "OPD TPS NRMSE",
                        sweep.rows.iter().map(|r| r.opd_tps_nrmse).collect(),
                    ),
                    (
                        "slopes TPS NRMSE",
                        sweep.rows.iter().map(|r| r.slopes_tps_nrmse).collect(),
                    ),
                ],
                "TPS error vs number of lags",
            )?;
            for r in &sweep.rows {
                println!(
                    "N_L={}: train MSE {:.6e}, OPD TPS {:.4}, slopes TPS {:.4}",
                    r.n_lags, r.training_mse_total, r.opd_tps_nrmse, r.slopes_tps_nrmse
                );
            }
            Ok(())
        }
        Command::MakeOracle {
            kind,
            output,
            rows,
            cols,
            frames,
            seed,
            sampling_frequency,
            theta_out,
            components,
            oracle_lags,
            oracle_filters,
            peak_frequency,
            tail_fraction,
            sigma,
            noise_sigma,
            speed,
            modes,
            force,
        } => {
            let kind = match kind {
                OracleKindArg::WhiteNoise => OracleKind::WhiteNoise { sigma },
                OracleKindArg::Translating => OracleKind::TranslatingPattern {
                    speed,
                    noise_sigma,
                },
                OracleKindArg::Sinusoids => OracleKind::Sinusoids {
                    n_modes: modes,
                    noise_sigma,
                },
                OracleKindArg::LongrangeAr => OracleKind::LongRangeAr(LongRangeOracleParams {
                    rows,
                    cols,
                    n_components: components,
                    n_lags: oracle_lags,
                    n_filters: oracle_filters,
                    peak_frequency,
                    tail_fraction,
                    sampling_frequency,
                }),
            };
            let spec = OracleSpec {
                kind,
                rows,
                cols,
                n_frames: frames,
                sampling_frequency,
            };
            let out = oracle::make_oracle(&spec, seed)?;
            persistence::write_pss(&out.series, &output, None, None, force)?;
            println!("oracle dataset written to {}", output.display());
            if let Some(theta_path) = theta_out {
                match out.model {
                    Some(model) => {
                        persistence::save_model(&model, &theta_path, force)?;
                        println!("ground-truth model written to {}", theta_path.display());
                    }
                    None => {
                        return Err(RevarError::InvalidInput(
                            "--theta-out applies only to the longrange-ar oracle".into(),
                        ))
                    }
                }
            }
            Ok(())
        }
        Command::Info { path } => info(&path),
    }
}

fn write_evaluation_outputs(
    output: &Path,
    report: &EvaluationReport,
    max_displacement: usize,
    force: bool,
) -> Result<()> {
    if output.join("report.json").exists() && !force {
        return Err(RevarError::InvalidInput(format!(
            "{} already contains a report; pass --force",
            output.display()
        )));
    }
    std::fs::create_dir_all(output).map_err(|e| RevarError::io(output, e))?;
    persistence::write_report(&output.join("report.json"), report)?;

    persistence::write_spectrum_csv(
        &output.join("tps_opd_reference.csv"),
        &report.opd_spectrum.grid,
        &report.opd_spectrum.reference,
    )?;
    persistence::write_spectrum_csv(
        &output.join("tps_opd_synthetic.csv"),
        &report.opd_spectrum.grid,
        &report.opd_spectrum.synthetic,
    )?;
    persistence::write_spectrum_csv(
        &output.join("tps_slopes_reference.csv"),
        &report.slopes_spectrum.grid,
        &report.slopes_spectrum.reference,
    )?;
    persistence::write_spectrum_csv(
        &output.join("tps_slopes_synthetic.csv"),
        &report.slopes_spectrum.grid,
        &report.slopes_spectrum.synthetic,
    )?;

    let sf = &report.structure_function;
    let squared = |v: &[f64]| v.iter().map(|s| s * s).collect::<Vec<f64>>();
    persistence::write_structure_csv(
        &output.join("structure_function_reference.csv"),
        &sf.displacements,
        &squared(&sf.reference_sqrt),
        &sf.counts,
    )?;
    persistence::write_structure_csv(
        &output.join("structure_function_synthetic.csv"),
        &sf.displacements,
        &squared(&sf.synthetic_sqrt),
        &sf.counts,
    )?;

    plot::write_paired_spectrum_svg(
        &output.join("tps_opd.svg"),
        &report.opd_spectrum,
        "OPD temporal power spectrum",
    )
    .ok();
    plot::write_paired_spectrum_svg(
        &output.join("tps_slopes.svg"),
        &report.slopes_spectrum,
        "Streamwise-slope temporal power spectrum",
    )
    .ok();

    for (name, sqrt_values) in [
        ("structure_function_reference.svg", &sf.reference_sqrt),
        ("structure_function_synthetic.svg", &sf.synthetic_sqrt),
    ] {
        let side = 2 * max_displacement + 1;
        let mut values = Array2::<f64>::zeros((side, side));
        let mut counts = Array2::<u64>::zeros((side, side));
        for ((dx, dy), (v, c)) in sf
            .displacements
            .iter()
            .zip(sqrt_values.iter().zip(sf.counts.iter()))
        {
            let iy = (dy + max_displacement as i64) as usize;
            let ix = (dx + max_displacement as i64) as usize;
            values[(iy, ix)] = v * v;
            counts[(iy, ix)] = *c;
        }
        let grid = StructureFunction2D {
            max_displacement,
            values,
            counts,
            pixel_pitch_x: 1.0,
            pixel_pitch_y: 1.0,
        };
        plot::write_structure_svg(&output.join(name), &grid, "OPD structure function").ok();
    }
    Ok(())
}

fn info(path: &Path) -> Result<()> {
    if path.join("meta.json").exists() {
        let meta = persistence::read_json_value(&path.join("meta.json"))?;
        println!("PSS container {}", path.display());
        for key in [
            "format_version",
            "rows",
            "cols",
            "n_pixels",
            "n_frames",
            "sampling_frequency_hz",
            "units",
            "label",
        ] {
            if let Some(v) = meta.get(key) {
                println!("  {key}: {v}");
            }
        }
        if let Some(p) = meta.get("synthesis") {
            println!("  synthesis: {p}");
        }
        Ok(())
    } else if path.join("model.json").exists() {
        let meta = persistence::read_json_value(&path.join("model.json"))?;
        println!("model container {}", path.display());
        for key in [
            "format_version",
            "n_pixels",
            "n_components",
            "n_lags",
            "n_filters",
            "alphas",
            "content_hash",
        ] {
            if let Some(v) = meta.get(key) {
                println!("  {key}: {v}");
            }
        }
        if let Some(p) = meta.get("provenance") {
            if let Some(f) = p.get("cutoff_frequency") {
                println!("  cutoff_frequency: {f} cycles/step");
            }
            if let Some(n) = p.get("n_train_steps") {
                println!("  n_train_steps: {n}");
            }
        }
        Ok(())
    } else {
        Err(RevarError::format(
            path,
            "neither meta.json (PSS) nor model.json (model) found",
        ))
    }
}
