//! Scenario banks turned into recordings and feature windows.

use rayon::prelude::*;

use crate::error::Result;
use crate::features::{extract_windows, AcfParams, AcfSample};
use crate::sim::{make_scenario_bank, synth_csi, BankSettings, CsiRecording, ScenarioConfig, Split};

/// Stable identifier of the `index`-th recording of a split.
pub fn recording_id(split: Split, index: usize) -> String {
    format!("{}-{index:05}", split.name())
}

/// Synthesizes scenarios in parallel, keeping their order.
pub fn synthesize(scenarios: &[ScenarioConfig]) -> Result<Vec<CsiRecording>> {
    scenarios.par_iter().map(synth_csi).collect()
}

/// Synthesizes every scenario of a bank, in bank order.
pub fn generate_recordings(
    split: Split,
    count: usize,
    seed: u64,
    settings: &BankSettings,
) -> Result<Vec<CsiRecording>> {
    synthesize(&make_scenario_bank(split, count, seed, settings)?)
}

/// All windows of all recordings, grouped by recording in input order.
pub fn featurize(recordings: &[CsiRecording], ids: &[String], params: &AcfParams) -> Result<Vec<AcfSample>> {
    let per: Vec<Vec<AcfSample>> = recordings
        .par_iter()
        .zip(ids)
        .map(|(r, id)| extract_windows(r, params, id))
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// Recordings and feature windows for one split.
pub fn generate_split(
    split: Split,
    count: usize,
    seed: u64,
    settings: &BankSettings,
    params: &AcfParams,
) -> Result<Vec<AcfSample>> {
    let recordings = generate_recordings(split, count, seed, settings)?;
    let ids: Vec<String> = (0..count).map(|i| recording_id(split, i)).collect();
    featurize(&recordings, &ids, params)
}
