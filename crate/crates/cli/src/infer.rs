use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use cpd_core::container::write_atomic;
use cpd_core::eval::{argmax, smooth_probabilities};
use cpd_core::features::extract_windows;
use cpd_core::model::{predict_proba, Checkpoint};
use cpd_core::{Class, CsiRecording};

use crate::config::Config;

pub fn run(config: &Config, recording: &Path, checkpoint: &Path, out: Option<&Path>) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    if ckpt.config.num_classes != 3 {
        bail!(
            "inference needs a three-class checkpoint, got {} classes",
            ckpt.config.num_classes
        );
    }
    let rec = CsiRecording::load(recording).with_context(|| format!("loading {}", recording.display()))?;
    let mut acf = config.data.acf;
    if acf.lags != ckpt.config.lags {
        log::warn!(
            "using the checkpoint's {} lags instead of the configured {}",
            ckpt.config.lags,
            acf.lags
        );
        acf.lags = ckpt.config.lags;
    }
    let source = recording
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let windows = extract_windows(&rec, &acf, &source)?;
    let probs = windows
        .iter()
        .map(|w| predict_proba(w.matrix.view(), &ckpt.params, &ckpt.config))
        .collect::<cpd_core::Result<Vec<_>>>()?;
    let smooth = smooth_probabilities(&probs, config.eval.smoothing_window)?;

    let mut csv = String::from("window_start_s,p_empty,p_adult,p_child,decision\n");
    for ((w, p), s) in windows.iter().zip(&probs).zip(&smooth) {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            w.window_start_s,
            p[0],
            p[1],
            p[2],
            Class::ALL[argmax(s)]
        );
    }
    match out {
        Some(path) => write_atomic(path, csv.as_bytes())?,
        None => std::io::stdout().write_all(csv.as_bytes())?,
    }
    Ok(())
}
