//! `latentlab`: generate graph-QA datasets, train the three regimes,
//! probe internal representations, and reproduce the reference tables
//! and figures at desk scale.
//!
//! Exit codes: 0 success, 1 I/O or internal error, 2 configuration
//! error, 3 generation infeasible, 4 training divergence, 5 metric
//! invariant violation, 6 reproduction checks failed.

use anyhow::Context;
use clap::{Parser, Subcommand};
use latentlab::decode::{AnswerRule, LatentN};
use latentlab::exp::{
    force_single_thread, run_reproduce, versioned_output_dir, ExperimentConfig, ReproTarget,
    RunManifest,
};
use latentlab::model::{load_checkpoint, save_checkpoint};
use latentlab::probes::report::{
    write_ablation_csv, write_belief_csv, write_entropy_profile_csv, write_intervention_csv,
};
use latentlab::probes::{
    probe_layers, run_belief_evolution, run_entropy_comparison, run_no_latent_ablation,
    run_token_intervention, BeliefMode,
};
use latentlab::taskgen::{natural_text_of, read_dataset, DatasetRecord};
use latentlab::training::{sequence_ids, train_run, write_metrics_csv, Regime};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "latentlab",
    version,
    about = "Latent chain-of-thought laboratory"
)]
struct Cli {
    /// Key=value configuration file; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root (defaults to $LATENTLAB_OUT, then "runs/latest").
    #[arg(long, global = true)]
    out: Option<String>,
    /// Force fully deterministic single-threaded execution.
    #[arg(long, global = true)]
    single_thread: bool,
    /// Restrict task depths, e.g. 4..5.
    #[arg(long, global = true)]
    depth_range: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the train/val/test dataset files.
    Gen {
        #[arg(long)]
        train: Option<usize>,
        #[arg(long)]
        val: Option<usize>,
        #[arg(long)]
        test: Option<usize>,
    },
    /// Train one regime and save the best checkpoint.
    Train {
        #[arg(long)]
        regime: Option<String>,
        #[arg(long)]
        layers: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Existing dataset directory; generated under the run dir when absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run one probe against a checkpoint and emit its CSVs and SVGs.
    Probe {
        #[arg(long)]
        checkpoint: PathBuf,
        /// entropy | intervention | belief | ablation | uniform | depth-sweep
        #[arg(long)]
        which: String,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Number of test tasks to probe.
        #[arg(long, default_value_t = 50)]
        tasks: usize,
        /// Belief mode: latents | cot.
        #[arg(long, default_value = "latents")]
        mode: String,
    },
    /// Rebuild a reference table or figure end to end.
    Reproduce {
        /// table2b | fig3 | fig5 | fig6
        target: String,
    },
}

fn effective_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    } else if cli.config.is_none() {
        if let Ok(root) = std::env::var("LATENTLAB_OUT") {
            cfg.out = root;
        }
    }
    if cli.single_thread {
        cfg.single_thread = true;
    }
    if let Some(range) = &cli.depth_range {
        let (lo, hi) = range
            .split_once("..")
            .with_context(|| format!("bad --depth-range {range:?}, expected lo..hi"))?;
        cfg.depth_min = lo.trim().parse().context("depth range lower bound")?;
        cfg.depth_max = hi.trim().parse().context("depth range upper bound")?;
    }
    Ok(cfg)
}

fn load_or_generate_data(
    cfg: &ExperimentConfig,
    dir: &Path,
) -> anyhow::Result<(Vec<DatasetRecord>, Vec<DatasetRecord>, Vec<DatasetRecord>)> {
    if !dir.join("train.txt").exists() {
        latentlab::taskgen::emit_dataset(&cfg.dataset_params(), dir)?;
    }
    Ok((
        read_dataset(&dir.join("train.txt"))?,
        read_dataset(&dir.join("val.txt"))?,
        read_dataset(&dir.join("test.txt"))?,
    ))
}

fn cmd_gen(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let run_dir = versioned_output_dir(Path::new(&cfg.out));
    let data_dir = run_dir.join(&cfg.data_dir);
    let sizes = latentlab::taskgen::emit_dataset(&cfg.dataset_params(), &data_dir)?;
    let mut manifest = RunManifest::new(cfg.to_text());
    for name in ["train.txt", "val.txt", "test.txt"] {
        manifest.record_file(&run_dir, &data_dir.join(name))?;
    }
    manifest.write(&run_dir.join("manifest.txt"))?;
    println!(
        "wrote {} train / {} val / {} test records to {}",
        sizes.train,
        sizes.val,
        sizes.test,
        data_dir.display()
    );
    if let Some(first) = read_dataset(&data_dir.join("train.txt"))?.first() {
        println!("sample: {}", natural_text_of(first));
    }
    Ok(())
}

fn cmd_train(cfg: &ExperimentConfig, data: Option<PathBuf>) -> anyhow::Result<()> {
    let run_dir = versioned_output_dir(Path::new(&cfg.out));
    let data_dir = data.unwrap_or_else(|| run_dir.join(&cfg.data_dir));
    let (train, val, _) = load_or_generate_data(cfg, &data_dir)?;

    let tc = cfg.train_config();
    let outcome = train_run(&train, &val, &tc)?;

    let mut manifest = RunManifest::new(cfg.to_text());
    match cfg.regime {
        Regime::CotThenCoconut => {
            manifest.notes.push(format!(
                "phase 1: cot epochs 0..{}",
                cfg.cot_pretrain_epochs
            ));
            manifest.notes.push(format!(
                "phase 2: stepwise latent epochs {}..{}",
                cfg.cot_pretrain_epochs, cfg.total_epochs
            ));
        }
        other => manifest
            .notes
            .push(format!("single phase: {}", other.label())),
    }
    manifest
        .notes
        .push("validation decodes each phase with its own mode".into());

    let ckpt = run_dir
        .join(&cfg.checkpoints_dir)
        .join(format!("{}_best.ltc", cfg.regime.label()));
    save_checkpoint(&outcome.params, &ckpt, &cfg.to_text())?;
    manifest.record_file(&run_dir, &ckpt)?;
    let metrics = run_dir.join(&cfg.reports_dir).join("metrics.csv");
    write_metrics_csv(&outcome.metrics, &metrics)?;
    manifest.record_file(&run_dir, &metrics)?;
    manifest.write(&run_dir.join("manifest.txt"))?;

    println!(
        "best epoch {} val accuracy {:.3}; checkpoint {}",
        outcome.best_epoch,
        outcome.best_val_accuracy,
        ckpt.display()
    );
    Ok(())
}

fn cmd_probe(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    which: &str,
    data: Option<PathBuf>,
    tasks: usize,
    mode: &str,
) -> anyhow::Result<()> {
    let run_dir = versioned_output_dir(Path::new(&cfg.out));
    let reports = run_dir.join(&cfg.reports_dir);
    let mut manifest = RunManifest::new(cfg.to_text());

    if which == "depth-sweep" {
        let bundle = run_reproduce(ReproTarget::Table2b, cfg, &run_dir)?;
        for check in &bundle.checks {
            println!("{}", check.render());
        }
        return Ok(());
    }

    let (params, ckpt_cfg_text) = load_checkpoint(checkpoint)?;
    let ckpt_cfg = ExperimentConfig::from_text(&ckpt_cfg_text).unwrap_or_else(|_| cfg.clone());
    let data_dir = data.unwrap_or_else(|| run_dir.join(&cfg.data_dir));
    let (_, _, test) = load_or_generate_data(cfg, &data_dir)?;
    let subset: Vec<DatasetRecord> = test.into_iter().take(tasks).collect();
    let (_, spec, _) = sequence_ids(cfg.use_natural);
    let lens = cfg.lens_mode();

    match which {
        "entropy" => {
            let layers = probe_layers(params.config.num_layers)?;
            let (soft, discrete) = run_entropy_comparison(
                &params,
                &subset,
                &cfg.soft_config(),
                spec.eos,
                cfg.probe_checkpoint_every,
                &layers,
                lens,
            )?;
            let csv = reports.join("entropy_profile.csv");
            write_entropy_profile_csv(&[&soft, &discrete], &csv)?;
            manifest.record_file(&run_dir, &csv)?;
            plot_entropy(&reports, &csv, &mut manifest, &run_dir)?;
        }
        "intervention" => {
            let layers = probe_layers(params.config.num_layers)?;
            let mut all = Vec::new();
            for (i, rec) in subset.iter().take(5).enumerate() {
                let records = run_token_intervention(
                    &params,
                    &rec.symbolic.prompt_tokens,
                    &cfg.soft_config(),
                    rec.task.depth,
                    cfg.probe_intervention_every,
                    &layers,
                    lens,
                )?;
                all.extend(records);
                // companion decode trace, referenced by run id
                let boundary = latentlab::decode::SoftBoundary {
                    end_thinking_tokens: vec![spec.end_latent],
                    thinking_budget: rec.task.depth,
                    eos: spec.eos,
                };
                let (_, trace) = latentlab::decode::soft_thinking_decode(
                    &params,
                    &rec.symbolic.prompt_tokens,
                    &cfg.soft_config(),
                    &boundary,
                )?;
                let trace_path = reports.join(format!("decode_trace_task{i}.txt"));
                latentlab::decode::write_trace_file(&trace, &trace_path)?;
                manifest.record_file(&run_dir, &trace_path)?;
            }
            let csv = reports.join("intervention.csv");
            write_intervention_csv(&all, &csv)?;
            manifest.record_file(&run_dir, &csv)?;
        }
        "belief" => {
            let belief_mode = if mode == "cot" {
                BeliefMode::CotPositions
            } else {
                BeliefMode::CoconutLatents
            };
            let profiles = run_belief_evolution(&params, &subset, belief_mode, &spec, lens)?;
            let csv = reports.join("belief.csv");
            write_belief_csv(&profiles, &csv)?;
            manifest.record_file(&run_dir, &csv)?;
        }
        "ablation" => {
            // decode layout follows the checkpoint's training regime
            let (latent_n, answer) = match ckpt_cfg.regime {
                Regime::CoconutFinetune => (
                    LatentN::Fixed(ckpt_cfg.max_stage * ckpt_cfg.c_thought),
                    AnswerRule::UntilEos,
                ),
                Regime::Cot => (LatentN::Depth, AnswerRule::UntilEos),
                _ => (LatentN::Depth, AnswerRule::FirstToken),
            };
            let results =
                run_no_latent_ablation(&params, &subset, latent_n, answer, &spec, cfg.use_natural)?;
            let csv = reports.join("ablation.csv");
            write_ablation_csv(&results, &csv)?;
            manifest.record_file(&run_dir, &csv)?;
            for r in &results {
                println!("{}: {:.1}%", r.condition.label(), r.accuracy() * 100.0);
            }
        }
        "uniform" => {
            let bundle = run_reproduce(ReproTarget::Fig5, cfg, &run_dir)?;
            for check in &bundle.checks {
                println!("{}", check.render());
            }
            return Ok(());
        }
        other => anyhow::bail!("unknown probe {other:?} (expected entropy, intervention, belief, ablation, uniform, depth-sweep)"),
    }
    manifest.write(&run_dir.join("manifest.txt"))?;
    println!("probe reports written to {}", reports.display());
    Ok(())
}

fn plot_entropy(
    reports: &Path,
    csv: &Path,
    manifest: &mut RunManifest,
    run_dir: &Path,
) -> anyhow::Result<()> {
    use latentlab::probes::report::read_csv;
    use latentlab::probes::svg::{write_line_plot, Series};
    let (_, rows) = read_csv(csv)?;
    let mut by_strategy: std::collections::BTreeMap<String, Vec<(f64, f64, f64)>> =
        std::collections::BTreeMap::new();
    for row in rows {
        if row[1] != "all" {
            continue;
        }
        by_strategy.entry(row[2].clone()).or_default().push((
            row[0].parse().unwrap_or(0.0),
            row[3].parse().unwrap_or(0.0),
            row[4].parse().unwrap_or(0.0),
        ));
    }
    let series: Vec<Series> = by_strategy
        .into_iter()
        .map(|(label, mut pts)| {
            pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            Series {
                label,
                points: pts.iter().map(|p| (p.0, p.1)).collect(),
                band: Some(pts.iter().map(|p| p.2).collect()),
            }
        })
        .collect();
    let svg = reports.join("entropy_profile.svg");
    write_line_plot(
        &series,
        "Lens entropy by layer",
        "layer",
        "entropy (nats)",
        &svg,
    )?;
    manifest.record_file(run_dir, &svg)?;
    Ok(())
}

fn cmd_reproduce(cfg: &ExperimentConfig, target: &str) -> anyhow::Result<bool> {
    let target = ReproTarget::parse(target).with_context(|| {
        format!("unknown target {target:?} (expected table2b, fig3, fig5, fig6)")
    })?;
    let bundle = run_reproduce(target, cfg, Path::new(&cfg.out))?;
    for check in &bundle.checks {
        println!("{}", check.render());
    }
    println!("report bundle: {}", bundle.dir.display());
    Ok(bundle.all_passed())
}

/// Walks the error chain and picks the documented exit code.
fn exit_code_for(err: &anyhow::Error) -> ExitCode {
    use latentlab::probes::ProbeError;
    use latentlab::taskgen::TaskGenError;
    use latentlab::training::TrainError;
    for cause in err.chain() {
        if cause
            .downcast_ref::<latentlab::exp::ConfigError>()
            .is_some()
        {
            return ExitCode::from(2);
        }
        if let Some(t) = cause.downcast_ref::<TaskGenError>() {
            if matches!(
                t,
                TaskGenError::Infeasible(_) | TaskGenError::VocabOverflow { .. }
            ) {
                return ExitCode::from(3);
            }
        }
        if let Some(t) = cause.downcast_ref::<TrainError>() {
            if matches!(
                t,
                TrainError::Divergence { .. } | TrainError::NonFiniteGrad(_)
            ) {
                return ExitCode::from(4);
            }
        }
        if let Some(p) = cause.downcast_ref::<ProbeError>() {
            match p {
                ProbeError::InvariantViolation(_) => return ExitCode::from(5),
                ProbeError::Train(TrainError::Divergence { .. }) => return ExitCode::from(4),
                ProbeError::Task(TaskGenError::Infeasible(_)) => return ExitCode::from(3),
                _ => {}
            }
        }
    }
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match effective_config(&cli) {
        Ok(cfg) => cfg,
        Err(err) => {
            eprintln!("error: {err:#}");
            return exit_code_for(&err);
        }
    };
    if cfg.single_thread {
        force_single_thread();
    }
    let result: anyhow::Result<bool> = match &cli.command {
        Command::Gen { train, val, test } => {
            let mut cfg = cfg.clone();
            if let Some(n) = train {
                cfg.train_size = *n;
            }
            if let Some(n) = val {
                cfg.val_size = *n;
            }
            if let Some(n) = test {
                cfg.test_size = *n;
            }
            cmd_gen(&cfg).map(|_| true)
        }
        Command::Train {
            regime,
            layers,
            dim,
            epochs,
            lr,
            data,
        } => {
            let mut cfg = cfg.clone();
            if let Some(r) = regime {
                match Regime::parse(r) {
                    Some(reg) => cfg.regime = reg,
                    None => {
                        eprintln!("error: unknown regime {r:?}");
                        return ExitCode::from(2);
                    }
                }
            }
            if let Some(l) = layers {
                cfg.num_layers = *l;
            }
            if let Some(d) = dim {
                cfg.model_dim = *d;
            }
            if let Some(e) = epochs {
                cfg.total_epochs = *e;
            }
            if let Some(lr) = lr {
                cfg.lr = *lr;
            }
            cmd_train(&cfg, data.clone()).map(|_| true)
        }
        Command::Probe {
            checkpoint,
            which,
            data,
            tasks,
            mode,
        } => cmd_probe(&cfg, checkpoint, which, data.clone(), *tasks, mode).map(|_| true),
        Command::Reproduce { target } => cmd_reproduce(&cfg, target),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some reproduction checks failed (see comparison.txt)");
            ExitCode::from(6)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            exit_code_for(&err)
        }
    }
}
