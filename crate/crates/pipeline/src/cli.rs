//! `neopain` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use neopain_core::classify::{self, TrainedModel};
use neopain_core::cnn::Phase;
use neopain_core::eval::{self, percent};
use neopain_core::FeatureMatrix;
use serde::Serialize;

use crate::compare::{compare_across, compare_in_report};
use crate::config::{FusionConfig, PipelineConfig};
use crate::error::{Error, Result, StageExt};
use crate::extract::{extract_deep, load_network, weight_source};
use crate::fuse::fuse;
use crate::manifest::DatasetManifest;
use crate::report::render_table;
use crate::run::{rank, run_pipeline, select_features, RunReport};
use crate::strain::extract_strain;
use crate::synth::gen_synthetic;

#[derive(Debug, Parser)]
#[command(name = "neopain", version, about = "Pain-expression feature pipeline")]
struct Cli {
    /// Pipeline config (JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset manifest CSV.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Weight file or `random:SEED`; overrides the config.
    #[arg(long, global = true)]
    weights: Option<String>,
    /// Split seed (generator seed for gen-synthetic).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Deep features for every configured tap, one CSV per tap.
    Extract,
    /// Per-video strain features.
    Strain,
    /// Join top strain and top deep features per video.
    Fuse {
        #[arg(long)]
        strain: PathBuf,
        #[arg(long)]
        deep: PathBuf,
        #[arg(long)]
        strain_n: Option<usize>,
        #[arg(long)]
        deep_n: Option<usize>,
    },
    /// Rank features on the training subjects.
    Select {
        #[arg(long)]
        features: PathBuf,
    },
    /// Select on the training subjects and train a model.
    Train {
        #[arg(long)]
        features: PathBuf,
    },
    /// Score a saved model on the test subjects.
    Evaluate {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Paired AUC test between two report records.
    Compare {
        #[arg(long)]
        report: PathBuf,
        /// Record key, `arch/tap/selection/classifier`.
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        /// Second report holding record `b`.
        #[arg(long)]
        report_b: Option<PathBuf>,
    },
    /// Split, extract, select, train and evaluate every configured experiment.
    Run,
    /// Write a synthetic two-class dataset.
    GenSynthetic {
        #[arg(long, default_value_t = 8)]
        subjects: usize,
        #[arg(long, default_value_t = 10)]
        frames: usize,
    },
    /// Render a report as a table.
    Report {
        #[arg(long)]
        report: PathBuf,
    },
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            e.exit_code()
        }
    }
}

fn required<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| Error::Usage(format!("--{flag} is required for this command")))
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.split.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn matrix_split(m: &FeatureMatrix, cfg: &PipelineConfig) -> Result<neopain_core::eval::SplitPlan> {
    eval::subject_split(m.subject_ids(), cfg.split.test_fraction, cfg.split.seed).stage("split")
}

fn tap_file_name(arch: &str, layer: &str, phase: Phase) -> String {
    let slug: String = layer
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect();
    let phase = match phase {
        Phase::PreReLU => "pre",
        Phase::PostReLU => "post",
    };
    format!("{arch}_{slug}_{phase}.csv")
}

fn dispatch(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::Usage("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::GenSynthetic { subjects, frames } => {
            let out = required(&cli.out, "out")?;
            let m = gen_synthetic(out, *subjects, *frames, cli.seed.unwrap_or(0))?;
            println!("wrote {} videos to {}", m.len(), out.display());
            Ok(())
        }
        Command::Extract => {
            let cfg = load_config(&cli)?;
            let manifest = DatasetManifest::load(required(&cli.manifest, "manifest")?)?;
            let out = required(&cli.out, "out")?;
            std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            let mut failures = Vec::new();
            let experiments = cfg.experiments();
            let mut archs: Vec<&str> = experiments.iter().map(|e| e.architecture.as_str()).collect();
            archs.dedup();
            for arch in archs {
                let taps: Vec<_> = experiments
                    .iter()
                    .filter(|e| e.architecture == arch)
                    .map(|e| e.tap.clone())
                    .collect();
                let net = load_network(arch, &weight_source(&cfg, arch, cli.weights.as_deref())?)?;
                let ex = extract_deep(&manifest, &net, &taps, &cfg.preprocess)?;
                for (tap, m) in &ex.matrices {
                    let path = out.join(tap_file_name(arch, &tap.layer, tap.phase));
                    m.save(&path).stage("extract")?;
                    println!("{}: {} rows × {} features", path.display(), m.len(), m.width());
                }
                failures.extend(ex.failures);
            }
            if cfg.fusion.is_some() {
                let (m, mut f) = extract_strain(&manifest, &cfg.preprocess, &cfg.strain)?;
                let path = out.join("strain.csv");
                m.save(&path).stage("strain")?;
                println!("{}: {} rows × {} features", path.display(), m.len(), m.width());
                failures.append(&mut f);
            }
            for f in &failures {
                eprintln!("failed: {} [{}]: {}", f.video_id, f.stage, f.message);
            }
            if !failures.is_empty() {
                write_json(&failures, Some(&out.join("failures.json")))?;
            }
            Ok(())
        }
        Command::Strain => {
            let cfg = load_config(&cli)?;
            let manifest = DatasetManifest::load(required(&cli.manifest, "manifest")?)?;
            let out = required(&cli.out, "out")?;
            let (m, failures) = extract_strain(&manifest, &cfg.preprocess, &cfg.strain)?;
            m.save(out).stage("strain")?;
            for f in &failures {
                eprintln!("failed: {} [{}]: {}", f.video_id, f.stage, f.message);
            }
            Ok(())
        }
        Command::Fuse { strain, deep, strain_n, deep_n } => {
            let cfg = load_config(&cli)?;
            let out = required(&cli.out, "out")?;
            let base = cfg.fusion.unwrap_or(FusionConfig { strain_n: 5, deep_n: 10 });
            let fusion = FusionConfig {
                strain_n: strain_n.unwrap_or(base.strain_n),
                deep_n: deep_n.unwrap_or(base.deep_n),
            };
            let strain = FeatureMatrix::load(strain).stage("fuse")?;
            let deep = FeatureMatrix::load(deep).stage("fuse")?;
            let plan = matrix_split(&strain, &cfg)?;
            let fused = fuse(&strain, &deep, &plan, &cfg.selector, fusion)?;
            fused.save(out).stage("fuse")?;
            println!("{}: {} rows × {} features", out.display(), fused.len(), fused.width());
            Ok(())
        }
        Command::Select { features } => {
            let cfg = load_config(&cli)?;
            let m = FeatureMatrix::load(features).stage("select")?;
            let plan = matrix_split(&m, &cfg)?;
            let train = m.select_rows(&m.rows_for_subjects(&plan.train_set()));
            let ranking = rank(&train, &cfg.selector)?;
            match &cli.out {
                Some(p) => {
                    let file = std::fs::File::create(p).map_err(|e| Error::io(p, e))?;
                    ranking.write_csv(file).stage("select")
                }
                None => ranking.write_csv(std::io::stdout().lock()).stage("select"),
            }
        }
        Command::Train { features } => {
            let cfg = load_config(&cli)?;
            let out = required(&cli.out, "out")?;
            let m = FeatureMatrix::load(features).stage("train")?;
            let plan = matrix_split(&m, &cfg)?;
            let names = select_features(&m, &plan, &cfg.selector)?;
            let train = m
                .select_rows(&m.rows_for_subjects(&plan.train_set()))
                .select_columns(&names)
                .stage("train")?;
            let model = classify::train(&train, cfg.classifier.kind, &cfg.classifier.params).stage("train")?;
            model.save(out).stage("train")?;
            println!("{} model on {} rows, features: {}", cfg.classifier.kind.display_name(), train.len(), names.join(", "));
            Ok(())
        }
        Command::Evaluate { features, model } => {
            let cfg = load_config(&cli)?;
            let m = FeatureMatrix::load(features).stage("evaluate")?;
            let model = TrainedModel::load(model).stage("evaluate")?;
            let plan = matrix_split(&m, &cfg)?;
            let test = m
                .select_rows(&m.rows_for_subjects(&plan.test_set()))
                .select_columns(model.feature_names())
                .stage("evaluate")?;
            let preds = model.predict_matrix(&test).stage("predict")?;
            let labels: Vec<_> = preds.iter().map(|p| p.label).collect();
            let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
            let accuracy = eval::accuracy(&labels, test.labels()).stage("evaluate")?;
            let (neg, pos) = test.class_counts();
            let auc = if neg > 0 && pos > 0 {
                Some(eval::auc(&eval::ScoredSet::unnamed(scores, test.labels().to_vec()).stage("evaluate")?).stage("evaluate")?)
            } else {
                None
            };
            #[derive(Serialize)]
            struct Summary {
                instances: usize,
                accuracy: f64,
                auc: Option<f64>,
            }
            eprintln!("accuracy {}%", percent(accuracy));
            write_json(&Summary { instances: test.len(), accuracy, auc }, cli.out.as_deref())
        }
        Command::Compare { report, a, b, report_b } => {
            let mut ra = RunReport::load(report)?;
            let rec = match report_b {
                Some(pb) => {
                    let rb = RunReport::load(pb)?;
                    let rec = compare_across(&ra, a, &rb, b)?;
                    ra.comparisons.push(rec.clone());
                    rec
                }
                None => compare_in_report(&mut ra, a, b)?,
            };
            println!(
                "AUC {:.3} vs {:.3}, z = {:.3}, p = {:.4}, significant: {}",
                rec.result.auc_a, rec.result.auc_b, rec.result.z, rec.result.p, rec.result.significant
            );
            if let Some(out) = &cli.out {
                ra.save(out)?;
            }
            Ok(())
        }
        Command::Run => {
            let cfg = load_config(&cli)?;
            let manifest = DatasetManifest::load(required(&cli.manifest, "manifest")?)?;
            let report = run_pipeline(&manifest, &cfg, cli.weights.as_deref())?;
            if let Some(out) = &cli.out {
                report.save(out)?;
            }
            print!("{}", render_table(&report));
            Ok(())
        }
        Command::Report { report } => {
            let table = render_table(&RunReport::load(report)?);
            match &cli.out {
                Some(p) => std::fs::write(p, table).map_err(|e| Error::io(p, e)),
                None => {
                    print!("{table}");
                    Ok(())
                }
            }
        }
    }
}
