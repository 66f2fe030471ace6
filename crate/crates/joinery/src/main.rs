use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use joinery::checkpoint;
use joinery::episode_io::{list_episodes, load_episode, save_episodes};
use joinery::manifest::{preprocess_all, DatasetManifest};
use joinery::report::{self, Format};
use joinery::suite::{run_suite, with_overrides, SuiteManifest, SuiteReport};
use joinery::teleop::{serve, SessionConfig};
use joinery::Error;
use joinery_core::data::PrepConfig;
use joinery_core::demo::{collect_batch, BatchSpec, ExpertParams};
use joinery_core::eval::{evaluate, ExperimentReport, RolloutConfig};
use joinery_core::policy::{train, Policy, PolicyConfig};
use joinery_core::sim::SimConfig;

#[derive(Parser)]
#[command(name = "joinery", version, about = "Mortise-and-tenon insertion: demos, diffusion policy training and evaluation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Demonstration collection.
    Demo {
        #[command(subcommand)]
        cmd: DemoCmd,
    },
    /// Dataset preparation.
    Data {
        #[command(subcommand)]
        cmd: DataCmd,
    },
    /// Train one model per seed.
    Train(TrainArgs),
    /// Roll out trained models and report success rates.
    Eval(EvalArgs),
    /// Experiment suites.
    Suite {
        #[command(subcommand)]
        cmd: SuiteCmd,
    },
    /// Render saved reports.
    Report {
        #[command(subcommand)]
        cmd: ReportCmd,
    },
}

#[derive(Args)]
struct SimArgs {
    /// TOML or JSON overrides on the default simulator settings.
    #[arg(long)]
    sim: Option<PathBuf>,
}

impl SimArgs {
    fn load(&self) -> Result<SimConfig, Error> {
        match &self.sim {
            Some(p) => with_overrides(&SimConfig::default(), &read_table(p)?),
            None => Ok(SimConfig::default()),
        }
    }
}

#[derive(Subcommand)]
enum DemoCmd {
    /// Record scripted expert demonstrations.
    Collect {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0.25)]
        recovery_frac: f64,
        /// mm
        #[arg(long, default_value_t = 10.0)]
        offset_max: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "episodes")]
        out: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Serve the teleoperation WebSocket endpoint.
    Serve {
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Robot mm per controller unit.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Operator-to-world rotation, degrees.
        #[arg(long, default_value_t = 0.0)]
        frame_alignment: f64,
        #[arg(long, default_value_t = 10.0)]
        offset_max: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "episodes")]
        out: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
    },
}

#[derive(Subcommand)]
enum DataCmd {
    /// Validate and split episodes, fit normalization, write a manifest.
    Prep {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "episodes")]
        episodes: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        val_frac: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// Flat TOML or JSON overrides on the desk preset (t_p, t_a, k, lr, wd, ...).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset manifest from `data prep`.
    #[arg(long)]
    manifest: PathBuf,
    /// Number of models; seeds are `seed`, `seed + 1`, ...
    #[arg(long, default_value_t = 4)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "checkpoints")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Comma-separated checkpoint files.
    #[arg(long, value_delimiter = ',', required = true)]
    checkpoints: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0,5,10")]
    offsets: Vec<f64>,
    #[arg(long, default_value_t = 32)]
    kinf: usize,
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
    #[arg(long, default_value_t = 8)]
    ta: usize,
    /// Zero the measured wrench before it reaches the policy.
    #[arg(long)]
    mask_ft: bool,
    /// Seconds between predicted poses; defaults to the training data's spacing.
    #[arg(long)]
    action_period: Option<f64>,
    #[arg(long, default_value_t = 5)]
    rollouts: usize,
    /// Simulated seconds per rollout.
    #[arg(long, default_value_t = 20.0)]
    time_budget: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "eval")]
    label: String,
    /// Dataset manifest whose stats the checkpoints must match.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Where to write the JSON report.
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
    #[command(flatten)]
    sim: SimArgs,
}

#[derive(Subcommand)]
enum SuiteCmd {
    /// Run every experiment of a suite manifest.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "suite-out")]
        out: PathBuf,
        /// Checkpoint cache shared between runs.
        #[arg(long)]
        cache: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ReportCmd {
    /// Render a suite or eval report.
    Emit {
        #[arg(long, value_enum)]
        format: Format,
        /// `suite.json` from `suite run` or a report from `eval`.
        #[arg(long, default_value = "suite-out/suite.json")]
        input: PathBuf,
        /// Only this table of a suite report.
        #[arg(long)]
        table: Option<String>,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_table(path: &Path) -> Result<toml::Table, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).context(path))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str::<toml::Table>(&text).map_err(Error::from)
    } else {
        toml::from_str(&text).map_err(Error::from)
    };
    parsed.map_err(|e| e.context(path))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.cmd {
        Cmd::Demo { cmd: DemoCmd::Collect { n, recovery_frac, offset_max, seed, out, sim } } => {
            let spec = BatchSpec { n, recovery_frac, offset_max, seed };
            let eps = collect_batch(&sim.load()?, &spec, &ExpertParams::default(), &mut |i, ep| {
                eprintln!("episode {i}: {} ({:?}, offset {:.2} mm)", ep.meta.episode_id, ep.meta.demo_type, ep.meta.mortise_offset)
            })?;
            let paths = save_episodes(&eps, &out)?;
            println!("wrote {} episodes to {}", paths.len(), out.display());
        }
        Cmd::Demo { cmd: DemoCmd::Serve { port, host, scale, frame_alignment, offset_max, seed, out, sim } } => {
            let cfg = SessionConfig {
                sim: sim.load()?,
                scale,
                frame_alignment: frame_alignment.to_radians(),
                offset_max,
                seed,
                out_dir: out,
                ..SessionConfig::default()
            };
            let listener = TcpListener::bind((host.as_str(), port))?;
            eprintln!("listening on ws://{}", listener.local_addr()?);
            serve(listener, &cfg, None, &mut |m| eprintln!("{m}"))?;
        }
        Cmd::Data { cmd: DataCmd::Prep { manifest, episodes, val_frac, seed } } => {
            let paths = list_episodes(&episodes)?;
            let eps = paths.iter().map(|p| load_episode(p)).collect::<Result<Vec<_>, _>>()?;
            let prep = PrepConfig::default();
            let trajs = preprocess_all(&eps, &prep)?;
            let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
            let base = fs::canonicalize(if base.as_os_str().is_empty() { Path::new(".") } else { &base })?;
            let rel = paths
                .iter()
                .map(|p| {
                    let abs = fs::canonicalize(p)?;
                    Ok(abs.strip_prefix(&base).map(Path::to_path_buf).unwrap_or(abs))
                })
                .collect::<Result<Vec<_>, Error>>()?;
            let m = DatasetManifest::build(rel, &trajs, prep, val_frac, seed)?;
            m.save(&manifest)?;
            println!("{} episodes, stats hash {:016x} -> {}", m.episodes.len(), m.stats_hash, manifest.display());
        }
        Cmd::Train(a) => {
            let over = a.config.as_deref().map(read_table).transpose()?.unwrap_or_default();
            let cfg: PolicyConfig = with_overrides(&PolicyConfig::desk(), &over)?;
            cfg.validate()?;
            let m = DatasetManifest::load(&a.manifest)?;
            let ds = m.dataset(a.manifest.parent().unwrap_or(Path::new(".")), cfg.horizons())?;
            fs::create_dir_all(&a.out)?;
            for seed in a.seed..a.seed + a.seeds {
                eprintln!("seed {seed}: {} train / {} val samples", ds.train.len(), ds.val.len());
                let ckpt = train(&ds, &cfg, seed, &mut |e| {
                    eprintln!("  epoch {:4} train {:.5} val {}", e.epoch, e.train_mse, e.val_mse.map_or("-".into(), |v| format!("{v:.5}")))
                })?;
                let path = a.out.join(format!("seed{seed}.json"));
                checkpoint::save(&ckpt, &path)?;
                fs::write(a.out.join(format!("seed{seed}_loss.csv")), checkpoint::loss_csv(&ckpt.history))?;
                println!("{} (best epoch {}, loss {:.5})", path.display(), ckpt.best_epoch, ckpt.best_val);
            }
        }
        Cmd::Eval(a) => {
            let expected = a.manifest.as_deref().map(DatasetManifest::load).transpose()?;
            let models = a
                .checkpoints
                .iter()
                .map(|p| {
                    let c = checkpoint::load(p)?;
                    c.verify_stats(expected.as_ref().map(|m| &m.stats)).map_err(|e| Error::from(e).context(p))?;
                    Ok(Policy::from_checkpoint(&c)?)
                })
                .collect::<Result<Vec<_>, Error>>()?;
            let cfg = RolloutConfig {
                k_inf: a.kinf,
                eta: a.eta,
                t_a: a.ta,
                offsets: a.offsets,
                rollouts_per_model: a.rollouts,
                models_per_config: models.len(),
                time_budget: a.time_budget,
                ft_mask: a.mask_ft,
                action_period: a.action_period,
                seed: a.seed,
            };
            let r = evaluate(&a.label, &a.sim.load()?, &models, &cfg, &mut |r| {
                eprintln!("model {} offset {} #{}: {:?}", r.model, r.result.offset, r.repeat, r.result.outcome)
            })?;
            fs::write(&a.out, serde_json::to_string_pretty(&r)?)?;
            print!("{}", report::markdown(std::slice::from_ref(&r)));
        }
        Cmd::Suite { cmd: SuiteCmd::Run { manifest, out, cache } } => {
            let m = SuiteManifest::load(&manifest)?;
            let r = run_suite(&m, cache, &mut |s| eprintln!("{s}"));
            for p in r.write(&out)? {
                println!("{}", p.display());
            }
            for f in &r.failures {
                eprintln!("failed: {}: {}", f.label, f.error);
            }
        }
        Cmd::Report { cmd: ReportCmd::Emit { format, input, table, out } } => {
            let text = fs::read_to_string(&input).map_err(|e| Error::from(e).context(&input))?;
            let reports: Vec<ExperimentReport> = if let Ok(s) = serde_json::from_str::<SuiteReport>(&text) {
                match &table {
                    Some(t) => s.table(t).ok_or_else(|| Error::Format(format!("no table {t:?}")))?.reports.clone(),
                    None => s.tables.into_iter().flat_map(|t| t.reports).collect(),
                }
            } else {
                vec![serde_json::from_str(&text).map_err(|e| Error::from(e).context(&input))?]
            };
            let body = report::render(&reports, format);
            match out {
                Some(p) => fs::write(p, body)?,
                None => print!("{body}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
