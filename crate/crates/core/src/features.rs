//! Per-subcarrier autocorrelation features.
//!
//! The classifier input is an `l x N_s` matrix whose column `f` holds the
//! normalized autocorrelation of the power series `|H(t, f)|^2` at lags
//! `1..=l` samples. Lag 0 is always 1 and is not stored. Row 0 (lag one
//! sample) is the motion statistic of each subcarrier.

use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::sim::{Class, CsiRecording};

/// Analysis window, stride and number of lags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcfParams {
    pub window_s: f64,
    pub stride_s: f64,
    pub lags: usize,
}

impl Default for AcfParams {
    fn default() -> Self {
        AcfParams {
            window_s: 10.0,
            stride_s: 1.0,
            lags: 150,
        }
    }
}

/// How a sample came to exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Original,
    /// Output link block `i` is input link block `order[i]`.
    Permuted {
        order: Vec<usize>,
    },
    /// Link blocks drawn from two same-class parents; `from_first[i]` says
    /// whether block `i` came from the first parent.
    Mixed {
        parents: [String; 2],
        from_first: Vec<bool>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcfSample {
    /// `lags x (num_links * subcarriers_per_link)`, link-major columns.
    pub matrix: Array2<f64>,
    pub lag_step_s: f64,
    pub label: Class,
    pub num_links: usize,
    /// Mean motion statistic over each link's subcarriers.
    pub per_link_motion_stat: Vec<f64>,
    pub window_start_s: f64,
    pub source: String,
    /// Columns zeroed because their power series was constant.
    pub dead_columns: Vec<usize>,
    pub provenance: Provenance,
}

impl AcfSample {
    pub fn lags(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn width(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn subcarriers_per_link(&self) -> usize {
        self.width() / self.num_links
    }

    /// Motion statistic of every column.
    pub fn motion_statistics(&self) -> Vec<f64> {
        self.matrix.row(0).to_vec()
    }

    /// Identifies the window: source recording plus start time.
    pub fn id(&self) -> String {
        format!("{}@{}", self.source, self.window_start_s)
    }

    pub fn recompute_link_stats(&mut self) {
        self.per_link_motion_stat = link_means(&self.matrix.row(0).to_vec(), self.num_links);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        container::encode(
            &SampleFile {
                format: SAMPLE_FORMAT.into(),
                meta: self.meta(0),
            },
            self.payload(),
        )
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, payload): (SampleFile, _) = container::decode(bytes)?;
        if h.format != SAMPLE_FORMAT {
            return Err(Error::Format(format!("not an ACF sample: {}", h.format)));
        }
        h.meta.build(&payload)
    }

    fn meta(&self, offset: usize) -> SampleMeta {
        SampleMeta {
            offset,
            rows: self.lags(),
            cols: self.width(),
            label: self.label,
            lag_step_s: self.lag_step_s,
            num_links: self.num_links,
            per_link_motion_stat: self.per_link_motion_stat.clone(),
            window_start_s: self.window_start_s,
            source: self.source.clone(),
            dead_columns: self.dead_columns.clone(),
            provenance: self.provenance.clone(),
        }
    }

    fn payload(&self) -> impl Iterator<Item = f32> + '_ {
        self.matrix.iter().map(|&v| v as f32)
    }
}

const SAMPLE_FORMAT: &str = "acf-sample/1";
const BATCH_FORMAT: &str = "acf-batch/1";

#[derive(Serialize, Deserialize)]
struct SampleFile {
    format: String,
    #[serde(flatten)]
    meta: SampleMeta,
}

#[derive(Serialize, Deserialize)]
struct SampleMeta {
    /// Offset into the payload, in values.
    offset: usize,
    rows: usize,
    cols: usize,
    label: Class,
    lag_step_s: f64,
    num_links: usize,
    per_link_motion_stat: Vec<f64>,
    window_start_s: f64,
    source: String,
    dead_columns: Vec<usize>,
    provenance: Provenance,
}

impl SampleMeta {
    fn build(self, payload: &[f32]) -> Result<AcfSample> {
        let n = self.rows * self.cols;
        let values = payload
            .get(self.offset..self.offset + n)
            .ok_or_else(|| Error::Format("sample runs past the payload".into()))?;
        let matrix = Array2::from_shape_vec((self.rows, self.cols), values.iter().map(|&v| v as f64).collect())
            .map_err(|e| Error::Format(e.to_string()))?;
        Ok(AcfSample {
            matrix,
            lag_step_s: self.lag_step_s,
            label: self.label,
            num_links: self.num_links,
            per_link_motion_stat: self.per_link_motion_stat,
            window_start_s: self.window_start_s,
            source: self.source,
            dead_columns: self.dead_columns,
            provenance: self.provenance,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct BatchFile {
    format: String,
    samples: Vec<SampleMeta>,
}

/// Concatenates samples behind an index table of payload offsets.
pub fn encode_batch(samples: &[AcfSample]) -> Result<Vec<u8>> {
    let mut offset = 0;
    let mut index = Vec::with_capacity(samples.len());
    for s in samples {
        index.push(s.meta(offset));
        offset += s.matrix.len();
    }
    let header = BatchFile {
        format: BATCH_FORMAT.into(),
        samples: index,
    };
    container::encode(&header, samples.iter().flat_map(|s| s.payload()))
}

pub fn decode_batch(bytes: &[u8]) -> Result<Vec<AcfSample>> {
    let (h, payload): (BatchFile, Vec<f32>) = container::decode(bytes)?;
    if h.format != BATCH_FORMAT {
        return Err(Error::Format(format!("not an ACF batch: {}", h.format)));
    }
    h.samples.into_iter().map(|m| m.build(&payload)).collect()
}

pub fn save_batch(path: &Path, samples: &[AcfSample]) -> Result<()> {
    container::write_atomic(path, &encode_batch(samples)?)
}

pub fn load_batch(path: &Path) -> Result<Vec<AcfSample>> {
    decode_batch(&std::fs::read(path)?)
}

pub fn power_response(h: &[Complex64]) -> Vec<f64> {
    h.iter().map(|c| c.norm_sqr()).collect()
}

/// Biased, mean-subtracted autocorrelation at lags `0..=lags`.
///
/// Dividing every lag by the same full-length sum keeps `|rho| <= 1`.
pub fn acf_with_zero_lag(g: &[f64], lags: usize) -> Result<Vec<f64>> {
    let n = g.len();
    if n < lags + 2 {
        return Err(Error::ShapeMismatch(format!(
            "series of {n} samples is too short for {lags} lags"
        )));
    }
    if g.iter().all(|&v| v == g[0]) {
        return Err(Error::DegenerateSeries);
    }
    let mean = g.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = g.iter().map(|v| v - mean).collect();
    let var: f64 = centred.iter().map(|v| v * v).sum();
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::DegenerateSeries);
    }
    Ok((0..=lags)
        .map(|tau| {
            let cov: f64 = centred[..n - tau].iter().zip(&centred[tau..]).map(|(a, b)| a * b).sum();
            cov / var
        })
        .collect())
}

/// Autocorrelation at lags `1..=lags`.
pub fn acf(g: &[f64], lags: usize) -> Result<Vec<f64>> {
    let mut full = acf_with_zero_lag(g, lags)?;
    debug_assert_eq!(full[0], 1.0);
    full.remove(0);
    Ok(full)
}

pub fn motion_statistic(rho: &[f64]) -> Result<f64> {
    rho.first()
        .copied()
        .ok_or_else(|| Error::ShapeMismatch("autocorrelation has no lags".into()))
}

fn link_means(psi: &[f64], links: usize) -> Vec<f64> {
    let per = psi.len() / links;
    psi.chunks(per).map(|c| c.iter().sum::<f64>() / per as f64).collect()
}

/// ACF matrix of the window starting at `window_start_s`.
pub fn acf_matrix(recording: &CsiRecording, window_start_s: f64, params: &AcfParams) -> Result<AcfSample> {
    let fs = recording.sample_rate_hz;
    let start = (window_start_s * fs).round();
    let len = (params.window_s * fs).round() as usize;
    if start < 0.0 || start as usize + len > recording.num_samples || len == 0 {
        return Err(Error::WindowOutOfRange {
            start_s: window_start_s,
            window_s: params.window_s,
            duration_s: recording.duration_s(),
        });
    }
    let start = start as usize;
    let (links, k) = (recording.num_links, recording.num_subcarriers);
    if k == 0 {
        return Err(Error::NoSubcarriers);
    }
    let width = links * k;
    let mut matrix = Array2::zeros((params.lags, width));
    let mut dead = Vec::new();
    for link in 0..links {
        for sc in 0..k {
            let col = link * k + sc;
            let g = power_response(&recording.series(link, sc, start, len));
            match acf(&g, params.lags) {
                Ok(rho) => {
                    for (r, v) in rho.into_iter().enumerate() {
                        matrix[[r, col]] = v;
                    }
                }
                Err(Error::DegenerateSeries) => dead.push(col),
                Err(e) => return Err(e),
            }
        }
    }
    if !dead.is_empty() {
        log::debug!("{} dead subcarriers in window at {window_start_s} s", dead.len());
    }
    let psi = matrix.row(0).to_vec();
    Ok(AcfSample {
        matrix,
        lag_step_s: 1.0 / fs,
        label: recording.scenario.class_label,
        num_links: links,
        per_link_motion_stat: link_means(&psi, links),
        window_start_s,
        source: String::new(),
        dead_columns: dead,
        provenance: Provenance::Original,
    })
}

/// Every full window at the configured stride.
pub fn window_starts(recording: &CsiRecording, params: &AcfParams) -> Vec<f64> {
    let duration = recording.duration_s();
    let mut starts = Vec::new();
    let mut i = 0usize;
    loop {
        let s = i as f64 * params.stride_s;
        if s + params.window_s > duration + 1e-9 {
            break;
        }
        starts.push(s);
        i += 1;
        if params.stride_s <= 0.0 {
            break;
        }
    }
    starts
}

pub fn extract_windows(recording: &CsiRecording, params: &AcfParams, source: &str) -> Result<Vec<AcfSample>> {
    let starts = window_starts(recording, params);
    if starts.is_empty() {
        return Err(Error::DurationTooShort {
            duration_s: recording.duration_s(),
            window_s: params.window_s,
        });
    }
    starts
        .into_iter()
        .map(|s| {
            let mut sample = acf_matrix(recording, s, params)?;
            sample.source = source.to_string();
            Ok(sample)
        })
        .collect()
}

/// Highest motion statistic within a link's block; ties go to the lower index.
/// Returns the subcarrier index within the link.
pub fn most_sensitive_subcarrier(sample: &AcfSample, link: usize) -> Result<usize> {
    if link >= sample.num_links {
        return Err(Error::ShapeMismatch(format!("link {link} of {}", sample.num_links)));
    }
    let k = sample.subcarriers_per_link();
    let row = sample.matrix.row(0);
    let mut best = 0;
    for sc in 1..k {
        if row[link * k + sc] > row[link * k + best] {
            best = sc;
        }
    }
    Ok(best)
}

/// Motion-statistic weighted average of all columns.
pub fn mrc_average(sample: &AcfSample) -> Result<Vec<f64>> {
    let weights: Vec<f64> = sample.matrix.row(0).iter().map(|&p| p.max(0.0)).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::AllStatic);
    }
    let w = ndarray::Array1::from_iter(weights.into_iter().map(|v| v / total));
    Ok(sample.matrix.dot(&w).to_vec())
}
