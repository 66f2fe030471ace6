//! Dataset manifests: which episode files form a dataset, their train/val
//! split and the normalization fitted on the training part.

use std::fs;
use std::path::{Path, PathBuf};

use joinery_core::data::{dataset_from_split, fit_stats, preprocess, split_episodes, Dataset, Horizons, NormStats, PrepConfig, Trajectory};
use joinery_core::demo::EpisodeRecord;
use serde::{Deserialize, Serialize};

use crate::episode_io::load_episode;
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub episodes: Vec<ManifestEntry>,
    pub prep: PrepConfig,
    pub stats: NormStats,
    pub stats_hash: u64,
}

impl DatasetManifest {
    /// Splits episodes per episode and fits normalization on the training
    /// split.
    pub fn build(
        paths: Vec<PathBuf>,
        trajs: &[Trajectory],
        prep: PrepConfig,
        val_frac: f64,
        seed: u64,
    ) -> Result<Self, Error> {
        let (train, val) = split_episodes(trajs.len(), val_frac, seed);
        let refs: Vec<&Trajectory> = train.iter().map(|&i| &trajs[i]).collect();
        let stats = fit_stats(&refs)?;
        let episodes = paths
            .into_iter()
            .enumerate()
            .map(|(i, path)| ManifestEntry { path, split: if val.contains(&i) { Split::Val } else { Split::Train } })
            .collect();
        Ok(Self { episodes, prep, stats_hash: stats.fingerprint(), stats })
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let m: Self = serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| Error::from(e).context(path))?;
        if m.stats.fingerprint() != m.stats_hash {
            return Err(Error::Format(format!("{}: stats hash does not match stats", path.display())));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn resolve(&self, base: &Path) -> Vec<PathBuf> {
        self.episodes.iter().map(|e| if e.path.is_absolute() { e.path.clone() } else { base.join(&e.path) }).collect()
    }

    /// Preprocesses the listed episodes and windows them for `horizons`.
    pub fn dataset(&self, base: &Path, horizons: Horizons) -> Result<Dataset, Error> {
        let trajs = self
            .resolve(base)
            .iter()
            .map(|p| preprocess(&load_episode(p)?, &self.prep).map_err(|e| Error::from(e).context(p)))
            .collect::<Result<Vec<_>, Error>>()?;
        Ok(self.dataset_from(&trajs, horizons))
    }

    /// Windows already preprocessed trajectories listed in manifest order.
    pub fn dataset_from(&self, trajs: &[Trajectory], horizons: Horizons) -> Dataset {
        let ids = |s: Split| self.episodes.iter().enumerate().filter(|(_, e)| e.split == s).map(|(i, _)| i).collect();
        dataset_from_split(trajs, ids(Split::Train), ids(Split::Val), self.stats.clone(), horizons)
    }
}

/// Preprocesses episodes, rejecting any that fail validation.
pub fn preprocess_all(eps: &[EpisodeRecord], prep: &PrepConfig) -> Result<Vec<Trajectory>, Error> {
    eps.iter()
        .map(|ep| {
            let errs = ep.validate();
            if let Some(e) = errs.first() {
                return Err(Error::Format(format!("episode {}: {e}", ep.meta.episode_id)));
            }
            preprocess(ep, prep).map_err(|e| Error::Format(format!("episode {}: {e}", ep.meta.episode_id)))
        })
        .collect()
}
