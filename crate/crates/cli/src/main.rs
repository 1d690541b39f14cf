//! `gdn-lab`: simulate agent-based models, build ramification datasets,
//! train GDN surrogates and ablations, and evaluate them.
//!
//! Exit status: 0 on success, 1 on a usage error, 2 when a stage fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use gdn_core::abm::snapshot::{self, SnapshotHeader};
use gdn_core::checkpoint::{load_model, save_model};
use gdn_core::eval::{
    compare, micro_eval, split_ensemble_floor, split_half_floor, truth_ensemble, write_ensemble_csv, write_macro_csv,
    write_micro_csv, Ensemble,
};
use gdn_core::files::{create_dir, sha256_file, write_json};
use gdn_core::gdn::Architecture;
use gdn_core::pipeline::{
    ar1_report, export_plot_data, rollout_ensembles, run_pipeline, simulate_to, train_model, ExperimentConfig,
    ExportFormat, ModelChoice, TrainSummary,
};
use gdn_core::ramify;
use gdn_core::surrogate::{rollout, Surrogate as _};

#[derive(Parser, Debug)]
#[command(name = "gdn-lab", version, about = "Agent-based model lab with graph diffusion surrogates")]
struct Cli {
    /// Root for default output locations.
    #[arg(long, global = true, env = "GDN_LAB_OUT", default_value = "runs")]
    out_root: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// Experiment config file (JSON).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in config: xi1, xi2, xi3, psi1..psi4 or desk.
    #[arg(long)]
    preset: Option<String>,
    /// Overrides the config's root seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut c = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => ExperimentConfig::preset(name)?,
            (None, None) => bail!(Usage("pass --config <file> or --preset <name>".into())),
        };
        if let Some(s) = self.seed {
            c.seed = s;
        }
        Ok(c)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Ablation {
    DiffusionOnly,
    GnnOnly,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ArchChoice {
    Wide,
    Desk,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ground-truth trajectory as a JSON-lines snapshot.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Transitions to simulate (default: the eval horizon).
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Training ramification (`<out>/train`) and out-of-training
    /// ramification (`<out>/eval`).
    Ramify {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Main-branch transitions T.
        #[arg(long)]
        steps: Option<usize>,
        /// Siblings per step R.
        #[arg(long)]
        branches: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fits the GDN or an ablation to a training ramification.
    Train {
        /// Training ramification directory.
        #[arg(long)]
        dataset: PathBuf,
        /// Training settings; architecture and rates default to the full
        /// network without one.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        ablation: Option<Ablation>,
        #[arg(long, value_enum)]
        arch: Option<ArchChoice>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Diffusion learning rate; the GNN uses twice this.
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        tau_max: Option<usize>,
        /// Stop after this many optimizer steps.
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        checkpoint_out: PathBuf,
    },
    /// Surrogate trajectories from a state snapshot, written as a snapshot
    /// whose run index is the branch column.
    Rollout {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Snapshot file holding the initial state.
        #[arg(long)]
        init_state: PathBuf,
        /// Which `t` of the snapshot to start from (default: the first).
        #[arg(long)]
        init_t: Option<usize>,
        #[arg(long, default_value_t = 25)]
        steps: usize,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-agent EMD against an out-of-training ramification.
    EvalMicro {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Evaluation ramification directory.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// sMAPE of ensemble means, surrogate against ground truth, from the
    /// initial state of a training ramification.
    EvalMacro {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Training ramification directory (engine and initial state).
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 25)]
        horizon: usize,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// AR(1) forecasts fitted on the training main branch, scored like
    /// eval-macro.
    BaselineAr1 {
        /// Training ramification directory.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 25)]
        horizon: usize,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// CSV tables from a snapshot (.jsonl) or an ensemble (.json).
    Export {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Every stage in order, resuming from completed ones.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory (default: the config's, else <out-root>/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Marks an error as a usage problem (exit status 1).
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<Usage>() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn default_out(root: &Path, name: &str, rel: &str) -> PathBuf {
    root.join(name).join(rel)
}

fn parent_dir(path: &Path) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(p)?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { cfg, steps, out } => {
            let c = cfg.load()?;
            let engine = c.abm.engine(steps.unwrap_or(c.eval.horizon), c.seed)?;
            let out = out.unwrap_or_else(|| default_out(&cli.out_root, &c.name, "simulate/trajectory.jsonl"));
            parent_dir(&out)?;
            let traj = simulate_to(&engine, &out)?;
            println!("wrote {} states to {}", traj.len(), out.display());
        }
        Command::Ramify {
            cfg,
            steps,
            branches,
            out,
        } => {
            let mut c = cfg.load()?;
            if let Some(t) = steps {
                c.ramification.steps = t;
            }
            if let Some(r) = branches {
                c.ramification.branches = r;
            }
            c.validate()?;
            let out = out.unwrap_or_else(|| default_out(&cli.out_root, &c.name, "ramify"));
            let engine = c.abm.engine(c.ramification.steps, c.seed)?;
            let (train, eval) =
                gdn_core::pipeline::ramify_to(&engine, &c.ramification, &c.eval, c.seed, &out)?;
            println!(
                "wrote {} training tuples ({} steps x {} branches x {} agents) and {} evaluation steps to {}",
                train.num_tuples(),
                train.steps(),
                train.branches,
                train.num_agents(),
                eval.steps(),
                out.display()
            );
        }
        Command::Train {
            dataset,
            config,
            ablation,
            arch,
            epochs,
            lr,
            tau_max,
            max_steps,
            seed,
            checkpoint_out,
        } => {
            let mut training = match config {
                Some(p) => ExperimentConfig::load(&p)?.training,
                None => Default::default(),
            };
            if let Some(a) = ablation {
                training.model = match a {
                    Ablation::DiffusionOnly => ModelChoice::DiffusionOnly,
                    Ablation::GnnOnly => ModelChoice::GnnOnly,
                };
            }
            if let Some(a) = arch {
                training.architecture = match a {
                    ArchChoice::Wide => Architecture::wide(),
                    ArchChoice::Desk => Architecture::desk(),
                };
            }
            if let Some(e) = epochs {
                training.epochs = e;
            }
            if let Some(lr) = lr {
                training.lr_diffusion = lr;
                training.lr_gnn = 2.0 * lr;
            }
            if let Some(t) = tau_max {
                training.schedule.tau_max = t;
            }
            if max_steps.is_some() {
                training.max_steps = max_steps;
            }
            let data = ramify::load(&dataset).with_context(|| format!("loading {}", dataset.display()))?;
            let (model, report) = train_model(&training, &data, seed)?;
            let fingerprint = gdn_core::files::sha256_bytes(
                format!(
                    "{}|{}|{seed}",
                    serde_json::to_string(&training)?,
                    sha256_file(&dataset.join(ramify::MANIFEST_FILE))?
                )
                .as_bytes(),
            );
            parent_dir(&checkpoint_out)?;
            save_model(&checkpoint_out, &model, &fingerprint)?;
            let summary = checkpoint_out.with_extension("summary.json");
            write_json(&summary, &TrainSummary::new(&model, &report))?;
            let last = report.epoch_means.last().copied().unwrap_or(f64::NAN);
            println!(
                "trained {} for {} steps ({} epochs), last epoch loss {last:.5}; checkpoint {}",
                model.label(),
                report.steps,
                report.epochs,
                checkpoint_out.display()
            );
        }
        Command::Rollout {
            checkpoint,
            init_state,
            init_t,
            steps,
            runs,
            seed,
            out,
        } => {
            let model = load_model(&checkpoint)?;
            let (header, states) = snapshot::load(&init_state)?;
            let init = match init_t {
                Some(t) => states.iter().find(|(_, s)| s.t == t),
                None => states.first(),
            }
            .map(|(_, s)| s.clone())
            .with_context(|| format!("no initial state in {}", init_state.display()))?;
            let trajs = rollout(&model, &init, steps, runs, seed)?;
            parent_dir(&out)?;
            let header = SnapshotHeader::new(&header.engine, seed);
            snapshot::save(
                &out,
                &header,
                trajs.iter().enumerate().flat_map(|(r, tr)| tr.iter().map(move |s| (r, s))),
            )?;
            println!("wrote {runs} rollouts of {steps} steps from t={} to {}", init.t, out.display());
        }
        Command::EvalMicro {
            checkpoint,
            dataset,
            samples,
            seed,
            out,
        } => {
            let model = load_model(&checkpoint)?;
            let data = ramify::load(&dataset)?;
            create_dir(&out)?;
            let report = micro_eval(&data, &model, samples, seed)?;
            let floor = split_half_floor(&data)?;
            write_micro_csv(&out.join("micro.csv"), &report)?;
            write_json(
                &out.join("micro.json"),
                &serde_json::json!({
                    "model": report.model, "mean_emd": report.mean, "entries": report.entries.len(),
                    "reference_samples": report.reference_samples, "samples": report.samples,
                    "split_half_floor": floor.mean,
                }),
            )?;
            println!(
                "{}: mean EMD {:.5} over {} cells (split-half floor {:.5})",
                report.model,
                report.mean,
                report.entries.len(),
                floor.mean
            );
        }
        Command::EvalMacro {
            checkpoint,
            dataset,
            horizon,
            runs,
            seed,
            out,
        } => {
            let model = load_model(&checkpoint)?;
            let data = ramify::load(&dataset)?;
            create_dir(&out)?;
            let (truth, pred) = rollout_ensembles(&data.engine, &model, &data.main[0], horizon, runs, seed)?;
            let report = compare(&model.label(), &truth, &pred)?;
            let floor = split_ensemble_floor(&truth)?;
            write_ensemble_files(&out, "truth", &truth)?;
            write_ensemble_files(&out, "model", &pred)?;
            write_macro_csv(&out.join("macro.csv"), &report)?;
            write_json(&out.join("macro.json"), &report)?;
            println!(
                "{}: sMAPE {:.5} (split-ensemble floor {:.5})",
                report.model, report.smape, floor.smape
            );
        }
        Command::BaselineAr1 {
            dataset,
            horizon,
            runs,
            seed,
            out,
        } => {
            let data = ramify::load(&dataset)?;
            create_dir(&out)?;
            let truth = truth_ensemble(&data.engine, &data.main[0], horizon, runs, seed)?;
            let (models, report) = ar1_report(&data.engine, &data, &truth, seed)?;
            write_macro_csv(&out.join("ar1_macro.csv"), &report)?;
            write_json(&out.join("ar1.json"), &serde_json::json!({ "models": models, "report": report }))?;
            for m in &models {
                println!("{}: phi {:.4} sigma {:.4}", m.series, m.phi, m.sigma);
            }
            println!("ar1: sMAPE {:.5}", report.smape);
        }
        Command::Export { input, format, out } => {
            let format: ExportFormat = format.parse().map_err(|e: gdn_core::Error| Usage(e.to_string()))?;
            for p in export_plot_data(&input, format, &out)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Run { cfg, out } => {
            let c = cfg.load()?;
            let dir = out
                .or_else(|| c.output.clone())
                .unwrap_or_else(|| cli.out_root.join(&c.name));
            let run = run_pipeline(&c, &dir)?;
            for s in &run.manifest.stages {
                let how = if run.skipped.contains(&s.name) { "up to date" } else { "done" };
                println!("{:<9} {how}", s.name);
            }
            println!("{} files listed in {}", run.manifest.files.len(), dir.join("run_manifest.json").display());
        }
    }
    Ok(())
}

fn write_ensemble_files(dir: &Path, name: &str, e: &Ensemble) -> Result<()> {
    write_json(&dir.join(format!("{name}.json")), e)?;
    write_ensemble_csv(&dir.join(format!("{name}.csv")), e)?;
    Ok(())
}
