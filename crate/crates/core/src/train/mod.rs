//! Two-stage training: binary presence pretraining, then three-class
//! fine-tuning with a fresh head.

pub mod adam;
pub mod augment;
pub mod loss;

use std::borrow::Cow;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::container::write_atomic;
use crate::error::{Error, Result};
use crate::features::AcfSample;
use crate::model::{
    batch_logits, class_probabilities, model_gradients, Checkpoint, LossKind, LossSpec, ModelConfig, ModelParams,
};
use crate::seed::{self, Purpose};
use crate::sim::Class;

pub use adam::{adam_step, adam_update, AdamConfig, AdamState};
pub use augment::{augment_link_mix, augment_link_permutation, links_by_sensitivity, permute_link_blocks};
pub use loss::{bce_loss, cross_entropy_loss, sigmoid, LossOutput};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub link_permutation: bool,
    pub link_mix: bool,
    /// Permuted variants drawn per original sample and epoch.
    pub permuted_copies: usize,
    /// Mixed variants drawn per original sample and epoch.
    pub mixed_copies: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            link_permutation: true,
            link_mix: true,
            permuted_copies: 2,
            mixed_copies: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub stage: u8,
    pub lr: f64,
    pub betas: [f64; 2],
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without a validation-loss improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub augment: AugmentConfig,
    /// Stage 2 only: train the head alone.
    pub freeze_encoder: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            stage: 1,
            lr: 1e-3,
            betas: [0.9, 0.999],
            eps: 1e-8,
            batch_size: 32,
            epochs: 200,
            patience: 20,
            seed: 0,
            augment: AugmentConfig::default(),
            freeze_encoder: false,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.betas[0],
            beta2: self.betas[1],
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.adam().validate()?;
        if !(1..=2).contains(&self.stage) {
            return Err(Error::InvalidConfig(format!(
                "stage must be 1 or 2, got {}",
                self.stage
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig(
                "batch size and epoch count must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation loss.
    pub best: Checkpoint,
    pub best_epoch: usize,
    pub last: Checkpoint,
    pub history: Vec<EpochRecord>,
    /// Loss on the unaugmented training set before the first update.
    pub initial_train_loss: f64,
    /// Loss on the unaugmented training set with the best parameters.
    pub final_train_loss: f64,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    /// Softmax of the logits, one row per sample.
    pub probabilities: Vec<Vec<f64>>,
    pub predictions: Vec<usize>,
}

/// Class index a sample is trained against under `kind`.
pub fn target(sample: &AcfSample, kind: LossKind) -> usize {
    match kind {
        LossKind::Bce => usize::from(sample.label.is_presence()),
        LossKind::CrossEntropy => sample.label.index(),
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Loss and accuracy without any parameter update.
pub fn evaluate(
    samples: &[AcfSample],
    params: &ModelParams,
    config: &ModelConfig,
    kind: LossKind,
) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("evaluation set".into()));
    }
    let inputs: Vec<ArrayView2<f64>> = samples.iter().map(|s| s.matrix.view()).collect();
    let logits = batch_logits(&inputs, params, config)?;
    let targets: Vec<usize> = samples.iter().map(|s| target(s, kind)).collect();
    let loss = match kind {
        LossKind::Bce => {
            let margins: Vec<f64> = logits.iter().map(|z| z[1] - z[0]).collect();
            let labels: Vec<bool> = targets.iter().map(|&t| t == 1).collect();
            bce_loss(&margins, &labels).loss
        }
        LossKind::CrossEntropy => cross_entropy_loss(&logits, &targets)?.loss,
    };
    let probabilities: Vec<Vec<f64>> = logits.iter().map(|z| class_probabilities(z)).collect();
    let predictions: Vec<usize> = probabilities.iter().map(|p| argmax(p)).collect();
    let correct = predictions.iter().zip(&targets).filter(|(p, t)| p == t).count();
    Ok(Evaluation {
        loss,
        accuracy: correct as f64 / samples.len() as f64,
        probabilities,
        predictions,
    })
}

/// Originals plus this epoch's augmented variants.
fn epoch_samples<'a>(
    train: &'a [AcfSample],
    augment: &AugmentConfig,
    rng: &mut impl Rng,
) -> Result<Vec<Cow<'a, AcfSample>>> {
    let mut out: Vec<Cow<AcfSample>> = train.iter().map(Cow::Borrowed).collect();
    let by_class: Vec<Vec<usize>> = Class::ALL
        .iter()
        .map(|c| (0..train.len()).filter(|&i| train[i].label == *c).collect())
        .collect();
    for (i, s) in train.iter().enumerate() {
        if augment.link_permutation {
            for _ in 0..augment.permuted_copies {
                out.push(Cow::Owned(augment_link_permutation(s, rng)));
            }
        }
        if augment.link_mix {
            let peers = &by_class[s.label.index()];
            if peers.len() < 2 {
                continue;
            }
            for _ in 0..augment.mixed_copies {
                let mut j = peers[rng.random_range(0..peers.len())];
                while j == i {
                    j = peers[rng.random_range(0..peers.len())];
                }
                out.push(Cow::Owned(augment_link_mix(s, &train[j])?));
            }
        }
    }
    Ok(out)
}

fn metrics_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_loss,val_loss,val_accuracy\n");
    for r in history {
        let _ = writeln!(s, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.val_accuracy);
    }
    s
}

#[derive(Serialize)]
struct RunSnapshot<'a> {
    train: &'a TrainConfig,
    model: &'a ModelConfig,
}

/// Files written into a training run directory.
pub struct RunFiles {
    pub dir: PathBuf,
}

impl RunFiles {
    pub fn config(&self) -> PathBuf {
        self.dir.join("config.json")
    }
    pub fn metrics(&self) -> PathBuf {
        self.dir.join("metrics.csv")
    }
    pub fn best(&self) -> PathBuf {
        self.dir.join("best.ckpt")
    }
    pub fn last(&self) -> PathBuf {
        self.dir.join("final.ckpt")
    }
    /// Parameters at the start of the epoch in which training diverged.
    pub fn last_good(&self) -> PathBuf {
        self.dir.join("last_good.ckpt")
    }
}

fn fit(
    train: &[AcfSample],
    val: &[AcfSample],
    init: ModelParams,
    model: &ModelConfig,
    kind: LossKind,
    config: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    model.validate()?;
    init.check_config(model)?;
    if train.is_empty() {
        return Err(Error::EmptyInput("training set".into()));
    }
    if val.is_empty() {
        return Err(Error::EmptyInput("validation set".into()));
    }
    let files = out_dir.map(|d| RunFiles { dir: d.to_path_buf() });
    if let Some(f) = &files {
        std::fs::create_dir_all(&f.dir)?;
        let snapshot = serde_json::to_vec_pretty(&RunSnapshot { train: config, model })?;
        write_atomic(&f.config(), &snapshot)?;
    }

    let adam = config.adam();
    let spec = LossSpec::mean(kind);
    let mut params = init;
    let mut state = AdamState::new(params.len());
    let initial_train_loss = evaluate(train, &params, model, kind)?.loss;
    let mut best = (params.clone(), f64::INFINITY, 0usize);
    let mut history = Vec::new();
    let mut stale = 0;

    for epoch in 1..=config.epochs {
        let mut aug_rng = seed::rng(config.seed, Purpose::Augment, epoch as u64);
        let samples = epoch_samples(train, &config.augment, &mut aug_rng)?;
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut seed::rng(config.seed, Purpose::Shuffle, epoch as u64));

        let epoch_start = params.clone();
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(ArrayView2<f64>, usize)> = chunk
                .iter()
                .map(|&i| (samples[i].matrix.view(), target(&samples[i], kind)))
                .collect();
            let step = model_gradients(&batch, &params, model, &spec).and_then(|mut g| {
                if !g.loss.is_finite() {
                    return Err(Error::NonFiniteGradient("loss".into()));
                }
                if config.freeze_encoder {
                    let zero = g.grads.zeros_like();
                    g.grads.encoder = zero.encoder;
                }
                let mut next = params.clone();
                adam_step(&mut next, &g.grads, &mut state, &adam)?;
                if let Some(name) = next.first_non_finite() {
                    return Err(Error::NonFiniteGradient(name));
                }
                Ok((g.loss, next))
            });
            match step {
                Ok((l, next)) => {
                    loss_sum += l * chunk.len() as f64;
                    params = next;
                }
                Err(e @ (Error::NonFiniteGradient(_) | Error::NonFiniteActivation(_))) => {
                    log::error!("training diverged in epoch {epoch}: {e}");
                    if let Some(f) = &files {
                        Checkpoint {
                            config: model.clone(),
                            params: epoch_start,
                        }
                        .save(&f.last_good())?;
                    }
                    return Err(Error::Diverged { epoch });
                }
                Err(e) => return Err(e),
            }
        }
        let train_loss = loss_sum / samples.len() as f64;
        let v = evaluate(val, &params, model, kind)?;
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss: v.loss,
            val_accuracy: v.accuracy,
        };
        log::info!(
            "stage {} epoch {epoch}: train loss {train_loss:.4}, val loss {:.4}, val accuracy {:.3}",
            config.stage,
            v.loss,
            v.accuracy
        );
        history.push(record);
        if let Some(f) = &files {
            write_atomic(&f.metrics(), metrics_csv(&history).as_bytes())?;
        }
        if v.loss < best.1 {
            best = (params.clone(), v.loss, epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                log::info!("early stop after epoch {epoch}; best epoch {}", best.2);
                break;
            }
        }
    }

    let best_ckpt = Checkpoint {
        config: model.clone(),
        params: best.0,
    };
    let last = Checkpoint {
        config: model.clone(),
        params,
    };
    if let Some(f) = &files {
        best_ckpt.save(&f.best())?;
        last.save(&f.last())?;
    }
    let final_train_loss = evaluate(train, &best_ckpt.params, model, kind)?.loss;
    Ok(TrainOutcome {
        best: best_ckpt,
        best_epoch: best.2,
        last,
        history,
        initial_train_loss,
        final_train_loss,
    })
}

/// Presence-versus-empty pretraining of the encoder with a two-logit head.
///
/// `model.num_classes` must be 2. Adult and child samples are the presence
/// class.
pub fn train_stage1(
    train: &[AcfSample],
    val: &[AcfSample],
    model: &ModelConfig,
    config: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    if model.num_classes != 2 {
        return Err(Error::InvalidConfig(format!(
            "stage 1 needs a two-class head, got {}",
            model.num_classes
        )));
    }
    let init = ModelParams::init(model, config.seed)?;
    fit(train, val, init, model, LossKind::Bce, config, out_dir)
}

/// Three-class fine-tuning. The encoder starts from `stage1` when given and
/// from a random draw otherwise; the head is always freshly initialized.
pub fn train_stage2(
    train: &[AcfSample],
    val: &[AcfSample],
    stage1: Option<&Checkpoint>,
    model: &ModelConfig,
    config: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    if model.num_classes != 3 {
        return Err(Error::InvalidConfig(format!(
            "stage 2 needs a three-class head, got {}",
            model.num_classes
        )));
    }
    let init = match stage1 {
        Some(ckpt) => {
            let mut expected = model.clone();
            expected.num_classes = ckpt.config.num_classes;
            if ckpt.config != expected {
                return Err(Error::InvalidConfig(
                    "stage-1 checkpoint encoder does not match the stage-2 model configuration".into(),
                ));
            }
            ckpt.params.check_config(&ckpt.config)?;
            ckpt.params.with_new_head(model, config.seed)?
        }
        None => ModelParams::init(model, config.seed)?,
    };
    fit(train, val, init, model, LossKind::CrossEntropy, config, out_dir)
}
