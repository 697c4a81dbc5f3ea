//! Model checkpoints: a versioned JSON container holding the config, every
//! named parameter array, and the feature scaler needed to map forecasts
//! back to percent. JSON numbers round-trip f64 exactly (shortest
//! representation), so save/load is lossless and byte-deterministic.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ChannelScaler;
use crate::model::{ForecastModel, ModelConfig, Param};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    config: ModelConfig,
    scaler: ChannelScaler,
    params: Vec<Param>,
}

pub fn save(model: &ForecastModel, scaler: &ChannelScaler, path: &Path) -> Result<()> {
    let file = CheckpointFile {
        format_version: CHECKPOINT_VERSION,
        config: model.config.clone(),
        scaler: scaler.clone(),
        params: model.params.clone(),
    };
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Checkpoint(format!("serialize: {e}")))?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(ForecastModel, ChannelScaler)> {
    let text = std::fs::read_to_string(path)?;
    let file: CheckpointFile =
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("parse: {e}")))?;
    if file.format_version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {} not supported (expected {CHECKPOINT_VERSION})",
            file.format_version
        )));
    }
    // The parameter list must match what the config would construct.
    let fresh = ForecastModel::new(file.config.clone())?;
    if fresh.params.len() != file.params.len()
        || fresh
            .params
            .iter()
            .zip(&file.params)
            .any(|(a, b)| a.name != b.name || a.shape != b.shape || a.trainable != b.trainable)
    {
        return Err(Error::Checkpoint(
            "parameter list does not match the stored config".into(),
        ));
    }
    Ok((
        ForecastModel {
            config: file.config,
            params: file.params,
        },
        file.scaler,
    ))
}
