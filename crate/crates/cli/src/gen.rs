use anyhow::{Context, Result};
use cpd_core::container::write_atomic;
use cpd_core::dataset::{featurize, recording_id, synthesize};
use cpd_core::features::save_batch;
use cpd_core::sim::make_scenario_bank;
use cpd_core::{Class, Split};

use crate::config::Config;
use crate::manifest::{features_path, recording_path, Manifest, RecordingEntry, SplitEntry, MANIFEST};

/// Recordings synthesized and featurized together; bounds peak memory.
const CHUNK: usize = 32;

pub fn run(config: &Config) -> Result<()> {
    let dir = &config.data.dir;
    std::fs::create_dir_all(dir.join("recordings")).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::create_dir_all(dir.join("features"))?;
    config.snapshot(dir)?;

    let c = config.data.counts;
    let mut splits = Vec::new();
    for (split, count) in [
        (Split::Pretrain, c.pretrain),
        (Split::Train, c.train),
        (Split::Val, c.val),
        (Split::Test, c.test),
    ] {
        if count == 0 {
            continue;
        }
        let bank = make_scenario_bank(split, count, config.seed, &config.data.bank)?;
        let mut samples = Vec::new();
        let mut recordings = Vec::with_capacity(count);
        let mut class_counts = [0usize; 3];
        for (chunk_index, chunk) in bank.chunks(CHUNK).enumerate() {
            let ids: Vec<String> = (0..chunk.len())
                .map(|i| recording_id(split, chunk_index * CHUNK + i))
                .collect();
            let recs = synthesize(chunk)?;
            for (rec, id) in recs.iter().zip(&ids) {
                let path = recording_path(id);
                rec.save(&dir.join(&path))?;
                class_counts[rec.scenario.class_label.index()] += 1;
                recordings.push(RecordingEntry {
                    id: id.clone(),
                    path,
                    label: rec.scenario.class_label,
                    scenario: rec.scenario.clone(),
                });
            }
            samples.extend(featurize(&recs, &ids, &config.data.acf)?);
        }
        let features = features_path(split);
        save_batch(&dir.join(&features), &samples)?;
        println!(
            "{:<8} {:>5} recordings {:>6} windows  {}",
            split.name(),
            count,
            samples.len(),
            Class::ALL
                .iter()
                .map(|c| format!("{c} {}", class_counts[c.index()]))
                .collect::<Vec<_>>()
                .join("  ")
        );
        splits.push(SplitEntry {
            split,
            features,
            windows: samples.len(),
            class_counts,
            recordings,
        });
    }
    let manifest = Manifest {
        seed: config.seed,
        splits,
    };
    write_atomic(&dir.join(MANIFEST), &serde_json::to_vec_pretty(&manifest)?)?;
    log::info!("dataset written to {}", dir.display());
    Ok(())
}
