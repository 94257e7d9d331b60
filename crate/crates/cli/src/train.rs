use std::path::Path;

use anyhow::{Context, Result};
use cpd_core::model::Checkpoint;
use cpd_core::train::{train_stage1, train_stage2, RunFiles};
use cpd_core::Split;

use crate::config::Config;
use crate::manifest::load_split;

pub fn run(config: &Config, stage: u8, out: &Path, stage1_checkpoint: Option<&Path>) -> Result<()> {
    let data = &config.data.dir;
    let train_split = if stage == 1 { Split::Pretrain } else { Split::Train };
    let train = load_split(data, train_split)?;
    let val = load_split(data, Split::Val)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    config.snapshot(out)?;

    let train_config = config.train_config(stage);
    let outcome = if stage == 1 {
        train_stage1(&train, &val, &config.model_config(2), &train_config, Some(out))?
    } else {
        let path = stage1_checkpoint.context("stage 2 needs --stage1-checkpoint")?;
        let ckpt = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
        train_stage2(
            &train,
            &val,
            Some(&ckpt),
            &config.model_config(3),
            &train_config,
            Some(out),
        )?
    };
    let best = outcome.history.iter().find(|r| r.epoch == outcome.best_epoch);
    if let Some(r) = best {
        println!(
            "stage {stage}: best epoch {} of {}, val loss {:.4}, val accuracy {:.3}",
            r.epoch,
            outcome.history.len(),
            r.val_loss,
            r.val_accuracy
        );
    }
    println!(
        "best checkpoint: {}",
        RunFiles { dir: out.to_path_buf() }.best().display()
    );
    Ok(())
}
