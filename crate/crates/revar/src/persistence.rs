//! On-disk containers: phase-screen series (`PSS`) and fitted models.
//!
//! Both are directories holding a small JSON metadata file plus raw arrays of
//! little-endian IEEE-754 doubles, so they are trivially inspectable from any
//! language and round-trip bit-exactly. Writes go to a temporary sibling
//! directory followed by a rename. Byte-level layout is documented in
//! `docs/formats.md`.

use crate::error::{Result, RevarError};
use crate::geometry::ApertureGeometry;
use crate::longrange::PredictorWeights;
use crate::model::{Provenance, RevarModel};
use crate::series::PhaseScreenSeries;
use crate::synthesis::SynthesisProvenance;
use crate::whitening::WhiteningTransform;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub const PSS_FORMAT_VERSION: u32 = 1;
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// The model container's array files, in hash order.
const MODEL_ARRAYS: [&str; 9] = [
    "mu_X.f64",
    "sigma_X.f64",
    "E.f64",
    "lambda.f64",
    "A_X.f64",
    "A_Y.f64",
    "mu_xi.f64",
    "U.f64",
    "sigma_xi.f64",
];

#[derive(Debug, Serialize, Deserialize)]
struct GeometryMeta {
    rows: usize,
    cols: usize,
    mask: String,
    pixel_pitch_x_m: f64,
    pixel_pitch_y_m: f64,
}

impl GeometryMeta {
    fn from_geometry(g: &ApertureGeometry) -> Self {
        GeometryMeta {
            rows: g.rows(),
            cols: g.cols(),
            mask: g.mask_bitstring(),
            pixel_pitch_x_m: g.pixel_pitch_x(),
            pixel_pitch_y_m: g.pixel_pitch_y(),
        }
    }

    fn to_geometry(&self, path: &Path) -> Result<ApertureGeometry> {
        ApertureGeometry::from_bitstring(
            self.rows,
            self.cols,
            &self.mask,
            self.pixel_pitch_x_m,
            self.pixel_pitch_y_m,
        )
        .map_err(|e| RevarError::format(path, format!("bad geometry: {e}")))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PssMeta {
    format_version: u32,
    #[serde(flatten)]
    geometry: GeometryMeta,
    n_pixels: usize,
    n_frames: usize,
    sampling_frequency_hz: f64,
    units: String,
    label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    synthesis: Option<SynthesisProvenance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coefficient_columns: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelMeta {
    format_version: u32,
    n_pixels: usize,
    n_components: usize,
    n_lags: usize,
    n_filters: usize,
    alphas: Vec<f64>,
    inverse_floor: f64,
    geometry: GeometryMeta,
    provenance: Provenance,
    content_hash: String,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| RevarError::format(path, e.to_string()))?;
    fs::write(path, text).map_err(|e| RevarError::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| RevarError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| RevarError::format(path, e.to_string()))
}

fn write_f64_file(path: &Path, values: &[f64]) -> Result<()> {
    let file = File::create(path).map_err(|e| RevarError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for &v in values {
        w.write_f64::<LittleEndian>(v)
            .map_err(|e| RevarError::io(path, e))?;
    }
    w.flush().map_err(|e| RevarError::io(path, e))
}

fn read_f64_file(path: &Path, expected_len: usize) -> Result<Vec<f64>> {
    let meta = fs::metadata(path).map_err(|e| RevarError::io(path, e))?;
    let expected_bytes = expected_len as u64 * 8;
    if meta.len() != expected_bytes {
        return Err(RevarError::format(
            path,
            format!("expected {expected_bytes} bytes, found {}", meta.len()),
        ));
    }
    let file = File::open(path).map_err(|e| RevarError::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut out = vec![0.0f64; expected_len];
    r.read_f64_into::<LittleEndian>(&mut out)
        .map_err(|e| RevarError::io(path, e))?;
    Ok(out)
}

/// Run `fill` against a temporary sibling directory, then rename it over the
/// destination.
fn write_container<F: FnOnce(&Path) -> Result<()>>(
    path: &Path,
    overwrite: bool,
    fill: F,
) -> Result<()> {
    if path.exists() {
        if !overwrite {
            return Err(RevarError::InvalidInput(format!(
                "{} already exists; pass --force to replace it",
                path.display()
            )));
        }
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| RevarError::io(&tmp, e))?;
    }
    fs::create_dir_all(&tmp).map_err(|e| RevarError::io(&tmp, e))?;
    match fill(&tmp) {
        Ok(()) => {
            if path.exists() {
                fs::remove_dir_all(path).map_err(|e| RevarError::io(path, e))?;
            }
            fs::rename(&tmp, path).map_err(|e| RevarError::io(path, e))
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&tmp);
            Err(e)
        }
    }
}

/// Write a series as a PSS container, optionally with synthesis provenance
/// and a coefficient sidecar.
pub fn write_pss(
    series: &PhaseScreenSeries,
    path: &Path,
    synthesis: Option<&SynthesisProvenance>,
    coefficients: Option<&Array2<f64>>,
    overwrite: bool,
) -> Result<()> {
    write_container(path, overwrite, |dir| {
        let meta = PssMeta {
            format_version: PSS_FORMAT_VERSION,
            geometry: GeometryMeta::from_geometry(series.geometry()),
            n_pixels: series.n_pixels(),
            n_frames: series.n_frames(),
            sampling_frequency_hz: series.sampling_frequency(),
            units: "microns".into(),
            label: series.label().to_string(),
            synthesis: synthesis.cloned(),
            coefficient_columns: coefficients.map(|c| c.ncols()),
        };
        write_json(&dir.join("meta.json"), &meta)?;
        write_f64_file(
            &dir.join("frames.f64"),
            series.frames().as_slice().expect("contiguous frames"),
        )?;
        if let Some(c) = coefficients {
            write_f64_file(
                &dir.join("coeffs.f64"),
                c.as_slice().expect("contiguous coefficients"),
            )?;
        }
        Ok(())
    })
}

/// Streaming PSS reader; frames are delivered one at a time.
pub struct PssReader {
    geometry: ApertureGeometry,
    n_frames: usize,
    sampling_frequency: f64,
    label: String,
    reader: BufReader<File>,
    frames_read: usize,
}

impl PssReader {
    pub fn open(path: &Path) -> Result<Self> {
        let meta_path = path.join("meta.json");
        if !meta_path.exists() {
            return Err(RevarError::format(
                path,
                "not a PSS container: meta.json is missing",
            ));
        }
        let meta: PssMeta = read_json(&meta_path)?;
        if meta.format_version != PSS_FORMAT_VERSION {
            return Err(RevarError::format(
                &meta_path,
                format!(
                    "unsupported PSS format version {} (this build reads {})",
                    meta.format_version, PSS_FORMAT_VERSION
                ),
            ));
        }
        let geometry = meta.geometry.to_geometry(&meta_path)?;
        if geometry.n_pixels() != meta.n_pixels {
            return Err(RevarError::format(
                &meta_path,
                format!(
                    "mask selects {} pixels but n_pixels says {}",
                    geometry.n_pixels(),
                    meta.n_pixels
                ),
            ));
        }
        if meta.n_frames == 0 {
            return Err(RevarError::format(&meta_path, "n_frames is zero"));
        }
        let frames_path = path.join("frames.f64");
        let file_len = fs::metadata(&frames_path)
            .map_err(|e| RevarError::io(&frames_path, e))?
            .len();
        let expected = meta.n_frames as u64 * meta.n_pixels as u64 * 8;
        if file_len != expected {
            return Err(RevarError::format(
                &frames_path,
                format!(
                    "expected {} bytes ({} frames x {} pixels x 8), found {}",
                    expected, meta.n_frames, meta.n_pixels, file_len
                ),
            ));
        }
        let file = File::open(&frames_path).map_err(|e| RevarError::io(&frames_path, e))?;
        Ok(PssReader {
            geometry,
            n_frames: meta.n_frames,
            sampling_frequency: meta.sampling_frequency_hz,
            label: meta.label,
            reader: BufReader::new(file),
            frames_read: 0,
        })
    }

    pub fn geometry(&self) -> &ApertureGeometry {
        &self.geometry
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn sampling_frequency(&self) -> f64 {
        self.sampling_frequency
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Next frame, or `None` past the end.
    pub fn next_frame(&mut self) -> Result<Option<Array1<f64>>> {
        if self.frames_read >= self.n_frames {
            return Ok(None);
        }
        let mut buf = vec![0.0f64; self.geometry.n_pixels()];
        self.reader
            .read_f64_into::<LittleEndian>(&mut buf)
            .map_err(|e| RevarError::Io {
                path: PathBuf::from("frames.f64"),
                source: e,
            })?;
        self.frames_read += 1;
        Ok(Some(Array1::from_vec(buf)))
    }
}

/// Read a whole PSS container into memory.
pub fn read_pss(path: &Path) -> Result<PhaseScreenSeries> {
    let mut reader = PssReader::open(path)?;
    let n_p = reader.geometry().n_pixels();
    let mut frames = Array2::zeros((reader.n_frames(), n_p));
    let mut n = 0;
    while let Some(frame) = reader.next_frame()? {
        frames.row_mut(n).assign(&frame);
        n += 1;
    }
    PhaseScreenSeries::new(
        reader.geometry().clone(),
        frames,
        reader.sampling_frequency(),
        reader.label().to_string(),
    )
}

/// Read the coefficient sidecar of a PSS container, if present.
pub fn read_coefficients(path: &Path) -> Result<Option<Array2<f64>>> {
    let meta: PssMeta = read_json(&path.join("meta.json"))?;
    let Some(n_c) = meta.coefficient_columns else {
        return Ok(None);
    };
    let values = read_f64_file(&path.join("coeffs.f64"), meta.n_frames * n_c)?;
    Ok(Some(
        Array2::from_shape_vec((meta.n_frames, n_c), values).expect("shape checked"),
    ))
}

fn model_array_bytes(model: &RevarModel) -> Vec<(&'static str, Vec<f64>)> {
    let flat2 = |m: &Array2<f64>| m.iter().cloned().collect::<Vec<f64>>();
    let mut a_x = Vec::new();
    for m in &model.weights.lag_weights {
        a_x.extend(m.iter().cloned());
    }
    let mut a_y = Vec::new();
    for m in &model.weights.filter_weights {
        a_y.extend(m.iter().cloned());
    }
    vec![
        ("mu_X.f64", model.mean.to_vec()),
        ("sigma_X.f64", model.std.to_vec()),
        ("E.f64", flat2(&model.basis)),
        ("lambda.f64", model.lambda.to_vec()),
        ("A_X.f64", a_x),
        ("A_Y.f64", a_y),
        ("mu_xi.f64", model.whitening.mean.to_vec()),
        ("U.f64", flat2(&model.whitening.basis)),
        ("sigma_xi.f64", model.whitening.eigenvalues.to_vec()),
    ]
}

/// SHA-256 over the little-endian bytes of every model array, in container
/// order.
pub fn model_content_hash(model: &RevarModel) -> String {
    let mut hasher = Sha256::new();
    for (_, values) in model_array_bytes(model) {
        for v in values {
            hasher.update(v.to_le_bytes());
        }
    }
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Write a model container: `model.json` plus raw array files.
pub fn save_model(model: &RevarModel, path: &Path, overwrite: bool) -> Result<()> {
    let meta = ModelMeta {
        format_version: MODEL_FORMAT_VERSION,
        n_pixels: model.n_pixels(),
        n_components: model.n_components,
        n_lags: model.n_lags(),
        n_filters: model.n_filters(),
        alphas: model.alphas.clone(),
        inverse_floor: model.whitening.inverse_floor,
        geometry: GeometryMeta::from_geometry(&model.geometry),
        provenance: model.provenance.clone(),
        content_hash: model_content_hash(model),
    };
    write_container(path, overwrite, |dir| {
        write_json(&dir.join("model.json"), &meta)?;
        for (name, values) in model_array_bytes(model) {
            write_f64_file(&dir.join(name), &values)?;
        }
        Ok(())
    })
}

/// Load and revalidate a model container. The content hash must match and
/// the bases pass a deterministic 16-pair orthonormality spot check.
pub fn load_model(path: &Path) -> Result<RevarModel> {
    let meta_path = path.join("model.json");
    if !meta_path.exists() {
        return Err(RevarError::format(
            path,
            "not a model container: model.json is missing",
        ));
    }
    let meta: ModelMeta = read_json(&meta_path)?;
    if meta.format_version != MODEL_FORMAT_VERSION {
        return Err(RevarError::format(
            &meta_path,
            format!(
                "unsupported model format version {} (this build reads {})",
                meta.format_version, MODEL_FORMAT_VERSION
            ),
        ));
    }
    let geometry = meta.geometry.to_geometry(&meta_path)?;
    let n_p = geometry.n_pixels();
    if n_p != meta.n_pixels {
        return Err(RevarError::format(
            &meta_path,
            format!("mask selects {n_p} pixels but n_pixels says {}", meta.n_pixels),
        ));
    }
    let n_c = meta.n_components;
    let lens: [usize; 9] = [
        n_p,
        n_p,
        n_p * n_p,
        n_p,
        meta.n_lags * n_c * n_c,
        meta.n_filters * n_c * n_c,
        n_p,
        n_p * n_p,
        n_p,
    ];
    let mut arrays = Vec::with_capacity(MODEL_ARRAYS.len());
    for (name, len) in MODEL_ARRAYS.iter().zip(lens) {
        arrays.push(read_f64_file(&path.join(name), len)?);
    }

    let mut hasher = Sha256::new();
    for values in &arrays {
        for v in values {
            hasher.update(v.to_le_bytes());
        }
    }
    let hash = hex_string(&hasher.finalize());
    if hash != meta.content_hash {
        return Err(RevarError::format(
            path,
            format!(
                "content hash mismatch: arrays hash to {hash} but model.json records {}",
                meta.content_hash
            ),
        ));
    }

    let [mu_x, sigma_x, e, lambda, a_x, a_y, mu_xi, u, sigma_xi] =
        <[Vec<f64>; 9]>::try_from(arrays).expect("nine arrays");
    let unflatten_block = |data: Vec<f64>, count: usize| -> Vec<Array2<f64>> {
        (0..count)
            .map(|i| {
                Array2::from_shape_vec(
                    (n_c, n_c),
                    data[i * n_c * n_c..(i + 1) * n_c * n_c].to_vec(),
                )
                .expect("length checked")
            })
            .collect()
    };
    let model = RevarModel {
        geometry,
        mean: Array1::from_vec(mu_x),
        std: Array1::from_vec(sigma_x),
        basis: Array2::from_shape_vec((n_p, n_p), e).expect("length checked"),
        lambda: Array1::from_vec(lambda),
        n_components: n_c,
        alphas: meta.alphas,
        weights: PredictorWeights {
            lag_weights: unflatten_block(a_x, meta.n_lags),
            filter_weights: unflatten_block(a_y, meta.n_filters),
        },
        whitening: WhiteningTransform {
            mean: Array1::from_vec(mu_xi),
            basis: Array2::from_shape_vec((n_p, n_p), u).expect("length checked"),
            eigenvalues: Array1::from_vec(sigma_xi),
            inverse_floor: meta.inverse_floor,
        },
        provenance: meta.provenance,
    };
    model
        .validate_structure()
        .map_err(|e| RevarError::format(path, format!("refusing to load: {e}")))?;
    model
        .spot_check_orthonormality(16)
        .map_err(|e| RevarError::format(path, format!("refusing to load: {e}")))?;
    Ok(model)
}

/// Write `frequency_hz,power` rows.
pub fn write_spectrum_csv(path: &Path, frequencies: &[f64], power: &[f64]) -> Result<()> {
    let mut out = String::from("frequency_hz,power\n");
    for (f, p) in frequencies.iter().zip(power.iter()) {
        out.push_str(&format!("{f},{p}\n"));
    }
    fs::write(path, out).map_err(|e| RevarError::io(path, e))
}

/// Write `dx,dy,D,count` rows for every present displacement.
pub fn write_structure_csv(
    path: &Path,
    displacements: &[(i64, i64)],
    values: &[f64],
    counts: &[u64],
) -> Result<()> {
    let mut out = String::from("dx,dy,D,count\n");
    for ((d, v), c) in displacements.iter().zip(values.iter()).zip(counts.iter()) {
        out.push_str(&format!("{},{},{v},{c}\n", d.0, d.1));
    }
    fs::write(path, out).map_err(|e| RevarError::io(path, e))
}

/// Serialize any report as pretty JSON.
pub fn write_report<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    write_json(path, report)
}

/// Read arbitrary JSON (used by `info` and tests).
pub fn read_json_value(path: &Path) -> Result<serde_json::Value> {
    read_json(path)
}

/// Raw f64 export used for oracle sidecars and diagnostics.
pub fn write_f64_array(path: &Path, values: &[f64]) -> Result<()> {
    write_f64_file(path, values)
}

pub fn read_f64_array(path: &Path, expected_len: usize) -> Result<Vec<f64>> {
    read_f64_file(path, expected_len)
}
