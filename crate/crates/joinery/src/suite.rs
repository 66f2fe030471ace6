//! Experiment suites: a TOML manifest of demonstration sets and experiments.
//! Each experiment trains one model per seed (or reuses an identical one),
//! evaluates them and lands in a named table.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use joinery_core::data::{build_dataset, PrepConfig, Trajectory};
use joinery_core::demo::{collect_batch, BatchSpec, ExpertParams};
use joinery_core::eval::{evaluate, ExperimentReport, RolloutConfig};
use joinery_core::policy::{train, Checkpoint, Policy, PolicyConfig};
use joinery_core::sim::SimConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::manifest::preprocess_all;
use crate::{checkpoint, report, Error};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoSet {
    pub name: String,
    pub n: usize,
    #[serde(default)]
    pub recovery_frac: f64,
    #[serde(default)]
    pub offset_max: f64,
    #[serde(default)]
    pub seed: u64,
}

/// How force enters an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Trained and evaluated with pose and F/T.
    #[default]
    Full,
    /// The full models, evaluated with the wrench zeroed.
    Masked,
    /// Trained without any wrench history.
    PoseOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub label: String,
    pub table: String,
    /// Name of a [`DemoSet`].
    pub demos: String,
    /// Use only the first `n_demos` episodes of the set.
    pub n_demos: Option<usize>,
    #[serde(default)]
    pub variant: Variant,
    /// Overrides on [`PolicyConfig::desk`].
    #[serde(default)]
    pub policy: toml::Table,
    /// Overrides on the rollout defaults; `t_a`, `k_inf` and `eta` default
    /// to the policy's values.
    #[serde(default)]
    pub rollout: toml::Table,
    #[serde(default = "default_seeds")]
    pub train_seeds: Vec<u64>,
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3]
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteManifest {
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub expert: ExpertParams,
    #[serde(default)]
    pub prep: PrepConfig,
    #[serde(default)]
    pub demos: Vec<DemoSet>,
    #[serde(default)]
    pub experiments: Vec<Experiment>,
}

impl SuiteManifest {
    pub fn parse(text: &str) -> Result<Self, Error> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::from(e).context(path))?).map_err(|e| e.context(path))
    }
}

/// Recursively overlays `over` onto `base`.
fn overlay(base: &mut toml::Table, over: &toml::Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => overlay(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// `base` with the keys of `over` replaced.
pub fn with_overrides<T: Serialize + DeserializeOwned>(base: &T, over: &toml::Table) -> Result<T, Error> {
    let mut t = toml::Table::try_from(base).map_err(|e| Error::Format(e.to_string()))?;
    overlay(&mut t, over);
    Ok(t.try_into()?)
}

impl Experiment {
    pub fn policy_config(&self) -> Result<PolicyConfig, Error> {
        let mut cfg = with_overrides(&PolicyConfig::desk(), &self.policy)?;
        if self.variant == Variant::PoseOnly {
            cfg.t_o_f = 0;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn rollout_config(&self, policy: &PolicyConfig) -> Result<RolloutConfig, Error> {
        let base = RolloutConfig { t_a: policy.t_a, k_inf: policy.k_inf, eta: policy.eta, ..RolloutConfig::default() };
        let mut cfg = with_overrides(&base, &self.rollout)?;
        cfg.models_per_config = self.train_seeds.len();
        if self.variant == Variant::Masked {
            cfg.ft_mask = true;
        }
        cfg.validate(policy.t_p)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub label: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub reports: Vec<ExperimentReport>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SuiteReport {
    /// In order of first appearance in the manifest.
    pub tables: Vec<Table>,
    pub failures: Vec<Failure>,
}

impl SuiteReport {
    pub fn find(&self, label: &str) -> Option<&ExperimentReport> {
        self.tables.iter().flat_map(|t| &t.reports).find(|r| r.label == label)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Writes `suite.json`, then per table `<name>.csv`, `<name>_rollouts.csv`,
    /// `<name>.md` and `<name>.svg`; failures go to `failures.txt`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, Error> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut put = |name: String, body: String| -> Result<(), Error> {
            let p = dir.join(name);
            fs::write(&p, body)?;
            written.push(p);
            Ok(())
        };
        put("suite.json".into(), serde_json::to_string_pretty(self)?)?;
        for t in &self.tables {
            put(format!("{}.csv", t.name), report::summary_csv(&t.reports))?;
            put(format!("{}_rollouts.csv", t.name), report::rollouts_csv(&t.reports))?;
            put(format!("{}.md", t.name), report::markdown(&t.reports))?;
            put(format!("{}.svg", t.name), report::svg(&t.reports))?;
        }
        if !self.failures.is_empty() {
            let text: String = self.failures.iter().map(|f| format!("{}: {}\n", f.label, f.error)).collect();
            put("failures.txt".into(), text)?;
        }
        Ok(written)
    }
}

/// Runs every experiment. Demonstration sets and trained models are built
/// once and shared; with `cache_dir`, checkpoints are also stored there and
/// reused by later runs. A failing experiment is recorded and skipped.
pub struct SuiteRunner<'a> {
    manifest: &'a SuiteManifest,
    cache_dir: Option<PathBuf>,
    trajs: HashMap<String, Vec<Trajectory>>,
    models: HashMap<String, Checkpoint>,
    /// Evaluations keyed by models and rollout settings; identical
    /// experiments under another label reuse them.
    evals: HashMap<String, ExperimentReport>,
    log: &'a mut dyn FnMut(&str),
}

impl<'a> SuiteRunner<'a> {
    pub fn new(manifest: &'a SuiteManifest, cache_dir: Option<PathBuf>, log: &'a mut dyn FnMut(&str)) -> Self {
        Self { manifest, cache_dir, trajs: HashMap::new(), models: HashMap::new(), evals: HashMap::new(), log }
    }

    pub fn run(mut self) -> SuiteReport {
        let mut out = SuiteReport::default();
        for exp in &self.manifest.experiments {
            (self.log)(&format!("experiment {:?}", exp.label));
            match self.experiment(exp) {
                Ok(r) => {
                    (self.log)(&format!("  avg total SR {:.1}%", r.avg_total_sr));
                    match out.tables.iter_mut().find(|t| t.name == exp.table) {
                        Some(t) => t.reports.push(r),
                        None => out.tables.push(Table { name: exp.table.clone(), reports: vec![r] }),
                    }
                }
                Err(e) => {
                    (self.log)(&format!("  failed: {e}"));
                    out.failures.push(Failure { label: exp.label.clone(), error: e.to_string() });
                }
            }
        }
        out
    }

    fn experiment(&mut self, exp: &Experiment) -> Result<ExperimentReport, Error> {
        let policy = exp.policy_config()?;
        let rollout = exp.rollout_config(&policy)?;
        if exp.train_seeds.is_empty() {
            return Err(Error::Format("no training seeds".into()));
        }
        let mut keys = Vec::new();
        let mut models = Vec::new();
        for &s in &exp.train_seeds {
            let (key, ckpt) = self.model(exp, &policy, s)?;
            keys.push(key);
            models.push(Policy::from_checkpoint(&ckpt)?);
        }
        let eval_key = serde_json::to_string(&(&keys, &rollout))?;
        if let Some(r) = self.evals.get(&eval_key) {
            (self.log)("  same models and rollouts as an earlier experiment");
            return Ok(ExperimentReport { label: exp.label.clone(), ..r.clone() });
        }
        let log = &mut self.log;
        let mut done = 0;
        let r = evaluate(&exp.label, &self.manifest.sim, &models, &rollout, &mut |_| {
            done += 1;
            if done % 20 == 0 {
                log(&format!("  {done} rollouts"));
            }
        })?;
        self.evals.insert(eval_key, r.clone());
        Ok(r)
    }

    fn demo_set(&self, name: &str) -> Result<&'a DemoSet, Error> {
        let m: &'a SuiteManifest = self.manifest;
        m.demos.iter().find(|d| d.name == name).ok_or_else(|| Error::Format(format!("unknown demo set {name:?}")))
    }

    fn collect(&mut self, name: &str) -> Result<(), Error> {
        if !self.trajs.contains_key(name) {
            let set = self.demo_set(name)?;
            (self.log)(&format!("  collecting {} demos for {name:?}", set.n));
            let spec = BatchSpec { n: set.n, recovery_frac: set.recovery_frac, offset_max: set.offset_max, seed: set.seed };
            let eps = collect_batch(&self.manifest.sim, &spec, &self.manifest.expert, &mut |_, _| {})?;
            self.trajs.insert(name.to_string(), preprocess_all(&eps, &self.manifest.prep)?);
        }
        Ok(())
    }

    fn model(&mut self, exp: &Experiment, policy: &PolicyConfig, seed: u64) -> Result<(String, Checkpoint), Error> {
        let total = self.demo_set(&exp.demos)?.n;
        let n = exp.n_demos.unwrap_or(total);
        if n == 0 || n > total {
            return Err(Error::Format(format!("n_demos {n} not in 1..={total}")));
        }
        let key = model_key(self.manifest, &exp.demos, n, policy, seed)?;
        if let Some(c) = self.models.get(&key) {
            return Ok((key, c.clone()));
        }
        let file = self.cache_dir.as_ref().map(|d| d.join(format!("{:016x}.json", fnv(&key))));
        if let Some(f) = file.as_ref().filter(|f| f.exists()) {
            let c = checkpoint::load(f)?;
            if c.config == *policy {
                (self.log)(&format!("  loaded {}", f.display()));
                self.models.insert(key.clone(), c.clone());
                return Ok((key, c));
            }
        }
        self.collect(&exp.demos)?;
        let ds = build_dataset(&self.trajs[&exp.demos][..n], policy.horizons(), policy.val_frac, seed)?;
        (self.log)(&format!("  training seed {seed} on {n} demos ({} samples)", ds.train.len()));
        let c = train(&ds, policy, seed, &mut |_| {})?;
        if let Some(f) = file {
            fs::create_dir_all(f.parent().expect("cache file has a parent"))?;
            checkpoint::save(&c, &f)?;
        }
        self.models.insert(key.clone(), c.clone());
        Ok((key, c))
    }
}

/// Everything a trained model depends on.
fn model_key(m: &SuiteManifest, demos: &str, n: usize, policy: &PolicyConfig, seed: u64) -> Result<String, Error> {
    let set = m.demos.iter().find(|d| d.name == demos);
    Ok(serde_json::to_string(&(&m.sim, &m.expert, &m.prep, set, n, policy, seed))?)
}

fn fnv(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn run_suite(manifest: &SuiteManifest, cache_dir: Option<PathBuf>, log: &mut dyn FnMut(&str)) -> SuiteReport {
    SuiteRunner::new(manifest, cache_dir, log).run()
}
