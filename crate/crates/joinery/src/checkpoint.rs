//! Checkpoint files: the training config, normalization stats and every
//! parameter array stored by name and shape.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use joinery_core::data::NormStats;
use joinery_core::policy::{Checkpoint, EpochLoss, PolicyConfig, PolicyError, UNet};
use serde::{Deserialize, Serialize};

use crate::Error;

pub const FORMAT: &str = "joinery-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    config: PolicyConfig,
    stats: NormStats,
    stats_hash: u64,
    best_val: f64,
    best_epoch: usize,
    history: Vec<EpochLoss>,
    arrays: Vec<NamedArray>,
}

pub fn to_json(ckpt: &Checkpoint) -> Result<String, Error> {
    let net = ckpt.network()?;
    let arrays = net
        .entries
        .iter()
        .map(|e| NamedArray {
            name: e.name.clone(),
            shape: e.shape.clone(),
            data: ckpt.params[e.offset..e.offset + e.len()].to_vec(),
        })
        .collect();
    let file = CheckpointFile {
        format: FORMAT.into(),
        config: ckpt.config.clone(),
        stats: ckpt.stats.clone(),
        stats_hash: ckpt.stats_hash,
        best_val: ckpt.best_val,
        best_epoch: ckpt.best_epoch,
        history: ckpt.history.clone(),
        arrays,
    };
    Ok(serde_json::to_string(&file)?)
}

/// Parses a checkpoint and checks every array against the architecture the
/// config describes.
pub fn from_json(text: &str) -> Result<Checkpoint, Error> {
    let file: CheckpointFile = serde_json::from_str(text)?;
    if file.format != FORMAT {
        return Err(Error::Format(format!("unknown checkpoint format {:?}", file.format)));
    }
    let net = UNet::new(file.config.arch.clone(), file.config.horizons().obs_dim(), file.config.t_p)
        .map_err(PolicyError::from)?;
    if file.arrays.len() != net.entries.len() {
        return Err(Error::Format(format!("expected {} arrays, found {}", net.entries.len(), file.arrays.len())));
    }
    let mut params = vec![0.0; net.n_params];
    for e in &net.entries {
        let a = file
            .arrays
            .iter()
            .find(|a| a.name == e.name)
            .ok_or_else(|| Error::Format(format!("missing array {}", e.name)))?;
        if a.shape != e.shape || a.data.len() != e.len() {
            return Err(Error::Format(format!("array {} has shape {:?}, expected {:?}", e.name, a.shape, e.shape)));
        }
        params[e.offset..e.offset + e.len()].copy_from_slice(&a.data);
    }
    let ckpt = Checkpoint {
        config: file.config,
        stats: file.stats,
        stats_hash: file.stats_hash,
        params,
        best_val: file.best_val,
        best_epoch: file.best_epoch,
        history: file.history,
    };
    ckpt.network()?;
    ckpt.verify_stats(None)?;
    Ok(ckpt)
}

pub fn save(ckpt: &Checkpoint, path: &Path) -> Result<(), Error> {
    fs::write(path, to_json(ckpt)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint, Error> {
    from_json(&fs::read_to_string(path).map_err(|e| Error::from(e).context(path))?).map_err(|e| e.context(path))
}

/// Per-epoch losses as CSV; a missing validation loss is an empty cell.
pub fn loss_csv(history: &[EpochLoss]) -> String {
    let mut s = String::from("epoch,train_mse,val_mse\n");
    for h in history {
        let val = h.val_mse.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{}", h.epoch, h.train_mse, val);
    }
    s
}
