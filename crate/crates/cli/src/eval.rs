use std::path::Path;

use anyhow::{bail, Context, Result};
use cpd_core::container::write_atomic;
use cpd_core::eval::{
    compute_metrics, confusion_csv, decisions, flip_count, metrics_csv, roc_csv, roc_points, smooth_probabilities,
    Metrics,
};
use cpd_core::model::{Checkpoint, LossKind};
use cpd_core::train::evaluate;
use cpd_core::{AcfSample, Class, Split};
use serde::Serialize;

use crate::config::Config;
use crate::manifest::load_split;

#[derive(Debug, Serialize)]
pub struct Variant {
    #[serde(flatten)]
    pub metrics: Metrics,
    /// Decision changes between consecutive windows of the same recording.
    pub flips: usize,
    /// Area under the child-versus-rest ROC curve.
    pub child_auc: f64,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub split: Split,
    pub windows: usize,
    pub recordings: usize,
    pub smoothing_window: usize,
    pub unsmoothed: Variant,
    pub smoothed: Variant,
}

/// Index ranges of consecutive windows from the same recording.
fn recordings(samples: &[AcfSample]) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=samples.len() {
        if i == samples.len() || samples[i].source != samples[start].source {
            out.push(start..i);
            start = i;
        }
    }
    out
}

fn variant(probs: &[Vec<f64>], labels: &[Class], groups: &[std::ops::Range<usize>]) -> Result<(Variant, String)> {
    let predicted: Vec<Class> = decisions(probs).into_iter().map(|i| Class::ALL[i]).collect();
    let metrics = compute_metrics(&predicted, labels)?;
    let d = decisions(probs);
    let flips = groups.iter().map(|g| flip_count(&d[g.clone()])).sum();
    let scores: Vec<f64> = probs.iter().map(|p| p[Class::Child.index()]).collect();
    let positive: Vec<bool> = labels.iter().map(|&l| l == Class::Child).collect();
    let roc = roc_points(&scores, &positive)?;
    let v = Variant {
        child_auc: roc.auc(),
        metrics,
        flips,
    };
    Ok((v, roc_csv(&roc)))
}

pub fn run(config: &Config, checkpoint: &Path, split: Split, out: &Path) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    if ckpt.config.num_classes != 3 {
        bail!(
            "evaluation needs a three-class checkpoint, got {} classes",
            ckpt.config.num_classes
        );
    }
    let samples = load_split(&config.data.dir, split)?;
    let (lags, width) = (samples[0].lags(), samples[0].width());
    if (lags, width) != (ckpt.config.lags, ckpt.config.width) {
        return Err(cpd_core::Error::ShapeMismatch(format!(
            "checkpoint expects {}x{} inputs, the {} split holds {lags}x{width}",
            ckpt.config.lags,
            ckpt.config.width,
            split.name()
        ))
        .into());
    }
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    config.snapshot(out)?;

    let raw = evaluate(&samples, &ckpt.params, &ckpt.config, LossKind::CrossEntropy)?.probabilities;
    let groups = recordings(&samples);
    let mut smooth = Vec::with_capacity(raw.len());
    for g in &groups {
        smooth.extend(smooth_probabilities(&raw[g.clone()], config.eval.smoothing_window)?);
    }
    let labels: Vec<Class> = samples.iter().map(|s| s.label).collect();
    let (unsmoothed, roc_raw) = variant(&raw, &labels, &groups)?;
    let (smoothed, roc_smooth) = variant(&smooth, &labels, &groups)?;

    write_atomic(&out.join("metrics.csv"), metrics_csv(&unsmoothed.metrics).as_bytes())?;
    write_atomic(
        &out.join("metrics_smoothed.csv"),
        metrics_csv(&smoothed.metrics).as_bytes(),
    )?;
    write_atomic(
        &out.join("confusion.csv"),
        confusion_csv(&unsmoothed.metrics).as_bytes(),
    )?;
    write_atomic(
        &out.join("confusion_smoothed.csv"),
        confusion_csv(&smoothed.metrics).as_bytes(),
    )?;
    write_atomic(&out.join("roc.csv"), roc_raw.as_bytes())?;
    write_atomic(&out.join("roc_smoothed.csv"), roc_smooth.as_bytes())?;
    println!(
        "{}: accuracy {:.3} (smoothed {:.3}), child tpr {:.3}, empty-as-child fpr {:.3}, flips {} -> {}",
        split.name(),
        unsmoothed.metrics.accuracy,
        smoothed.metrics.accuracy,
        unsmoothed.metrics.tpr,
        unsmoothed.metrics.fpr,
        unsmoothed.flips,
        smoothed.flips
    );
    let report = Report {
        split,
        windows: samples.len(),
        recordings: groups.len(),
        smoothing_window: config.eval.smoothing_window,
        unsmoothed,
        smoothed,
    };
    write_atomic(&out.join("metrics.json"), &serde_json::to_vec_pretty(&report)?)?;
    Ok(())
}
