use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use mmn_core::anomaly::{cohort_scores_with, read_scores_csv, write_reports_json, write_scores_csv, DetectOptions};
use mmn_core::conv::FeatureMap;
use mmn_core::io::{
    load_manifest, qc_filter, read_atlas_csv, read_fs_curv, read_fs_surface, read_model, synth_generate,
    write_atlas_csv, write_fs_surface, write_model, write_subject, RunConfig, Split,
};
use mmn_core::mesh::{icosphere, resample_barycentric, resample_labels, Hemisphere};
use mmn_core::net::{train, MmnModel};
use mmn_core::stats::{effect_report, filter_effects, read_stats_csv, write_stats_csv, write_stats_svg};
use mmn_core::{Error, Result};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "mmn", version, about = "Masked mesh network for cortical anomaly detection")]
struct Cli {
    /// Overrides the seed of the config file (training and synthesis).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Hemi {
    Lh,
    Rh,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Writes the order-k icosphere as a FreeSurfer surface.
    Icosphere {
        #[arg(long)]
        order: u32,
    },
    /// Resamples per-vertex curv files from a registered sphere onto the
    /// icosphere and writes one subject feature file.
    Resample {
        /// Registered spherical surface of the subject.
        #[arg(long)]
        surface: PathBuf,
        /// One curv file per channel, in channel order.
        #[arg(long, num_args = 1.., required = true)]
        curv: Vec<PathBuf>,
        /// Channel names (defaults to the curv file names).
        #[arg(long, num_args = 1..)]
        name: Vec<String>,
        #[arg(long)]
        order: Option<u32>,
        #[arg(long)]
        id: String,
        /// Atlas CSV on the subject surface, resampled alongside.
        #[arg(long)]
        atlas: Option<PathBuf>,
        #[arg(long, requires = "atlas")]
        atlas_names: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "lh")]
        hemisphere: Hemi,
    },
    /// Generates a seeded synthetic cohort with a manifest.
    Synth,
    /// Trains a model on the train and val splits of a manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Skips the Euler-number quality filter.
        #[arg(long)]
        no_qc: bool,
    },
    /// Scores every ROI of the selected subjects.
    Detect {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Keeps only subjects of this group.
        #[arg(long)]
        group: Option<String>,
        /// Residuals in feature units instead of z-scores.
        #[arg(long)]
        raw: bool,
    },
    /// Per-ROI group comparison of two score tables.
    Stats {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Filters a stats table to significant ROIs, largest effect first.
    Report {
        #[arg(long)]
        stats: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
    },
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::defaults(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let out = cli.out.as_path();
    match cli.command {
        Command::Icosphere { order } => {
            let mesh = icosphere(order)?;
            let path = out.join(format!("icosphere-{order}.surf"));
            write_fs_surface(&path, &mesh, &format!("icosphere order {order}"))?;
            println!(
                "{} vertices, {} facets -> {}",
                mesh.vertex_count(),
                mesh.facet_count(),
                path.display()
            );
        }
        Command::Resample {
            surface,
            curv,
            name,
            order,
            id,
            atlas,
            atlas_names,
            hemisphere,
        } => {
            let order = order.unwrap_or(cfg.order);
            if !name.is_empty() && name.len() != curv.len() {
                return Err(Error::Usage(format!(
                    "{} names for {} curv files",
                    name.len(),
                    curv.len()
                )));
            }
            let src = read_fs_surface(&surface)?;
            let dst = icosphere(order)?;
            let mut channels = Vec::with_capacity(curv.len());
            for p in &curv {
                let values: Vec<f64> = read_fs_curv(p)?.into_iter().map(f64::from).collect();
                if values.len() != src.vertex_count() {
                    return Err(Error::Invariant(format!(
                        "{}: {} values for a surface with {} vertices",
                        p.display(),
                        values.len(),
                        src.vertex_count()
                    )));
                }
                channels.push(resample_barycentric(&src, &values, &dst)?);
            }
            let names = if name.is_empty() {
                curv.iter()
                    .map(|p| {
                        p.file_name()
                            .map_or_else(String::new, |n| n.to_string_lossy().into_owned())
                    })
                    .collect()
            } else {
                name
            };
            let features = FeatureMap::from_channels(&channels, order)?;
            let path = out.join(format!("{id}.smmn"));
            write_subject(&path, &names, &features)?;
            println!("{id}: {} channels on order {order} -> {}", names.len(), path.display());
            if let Some(atlas) = atlas {
                let hemi = match hemisphere {
                    Hemi::Lh => Hemisphere::Left,
                    Hemi::Rh => Hemisphere::Right,
                };
                let labels = read_atlas_csv(&atlas, src.vertex_count(), atlas_names.as_deref(), hemi)?;
                let resampled = resample_labels(&src, &labels, &dst)?;
                let apath = out.join(format!("{id}.atlas.csv"));
                let npath = out.join(format!("{id}.atlas_names.csv"));
                let mut names_w = create(&npath)?;
                write_atlas_csv(&resampled, create(&apath)?, Some(&mut names_w))?;
                println!("atlas -> {}", apath.display());
            }
        }
        Command::Synth => {
            let manifest = synth_generate(&cfg.synth, out)?;
            println!(
                "{} subjects -> {}",
                manifest.subjects.len(),
                out.join("manifest.json").display()
            );
        }
        Command::Train { manifest, no_qc } => {
            let mut m = load_manifest(&manifest)?;
            if !no_qc {
                let (kept, excluded) = qc_filter(&m);
                if !excluded.is_empty() {
                    warn!("quality filter excluded {}: {}", excluded.len(), excluded.join(", "));
                }
                m = kept;
            }
            let train_set = m.load_subjects(|e| e.split == Split::Train)?;
            let val_set = m.load_subjects(|e| e.split == Split::Val)?;
            let in_channels = train_set
                .first()
                .map(|s| s.features.channels())
                .ok_or_else(|| Error::Usage("manifest has no training subjects".into()))?;
            let mut model = MmnModel::seeded(cfg.model_config(in_channels), cfg.train.seed)?;
            info!(
                "training {} parameters on {} subjects ({} validation)",
                model.parameter_count(),
                train_set.len(),
                val_set.len()
            );
            let started = Instant::now();
            let history = train(&mut model, &train_set, &val_set, &cfg.train)?;
            info!("training took {:.1?}", started.elapsed());
            write_model(out.join("model.smmn"), &model)?;
            write_json(&out.join("history.json"), &history)?;
            println!(
                "best epoch {} val loss {:.6} ({:.3} of initial) -> {}",
                history.best_epoch,
                history.best_val_loss,
                history.best_val_loss / history.initial_val_loss(),
                out.join("model.smmn").display()
            );
        }
        Command::Detect {
            manifest,
            model,
            split,
            group,
            raw,
        } => {
            let m = load_manifest(&manifest)?;
            let model = read_model(&model)?;
            let atlas = m.load_atlas()?;
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Val => Split::Val,
                SplitArg::Test => Split::Test,
            };
            let subjects =
                m.load_subjects(|e| e.split == split && group.as_ref().is_none_or(|g| e.group.as_ref() == Some(g)))?;
            if subjects.is_empty() {
                return Err(Error::Usage("no subjects match the split and group".into()));
            }
            let scores = cohort_scores_with(&model, &subjects, &atlas, DetectOptions { raw_space: raw });
            let label = group.unwrap_or_else(|| format!("{split:?}").to_lowercase());
            let csv_path = out.join(format!("scores_{label}.csv"));
            write_scores_csv(&scores.rows(), create(&csv_path)?)?;
            write_reports_json(&scores.reports, create(&out.join(format!("scores_{label}.json")))?)?;
            println!("{} subjects scored -> {}", scores.reports.len(), csv_path.display());
            if let Some((id, e)) = scores.failures.first() {
                for (id, e) in &scores.failures {
                    warn!("{id}: {e}");
                }
                return Err(Error::Invariant(format!(
                    "{} subjects could not be scored, first {id}: {e}",
                    scores.failures.len()
                )));
            }
        }
        Command::Stats { a, b, alpha } => {
            let alpha = alpha.unwrap_or(cfg.alpha);
            let ra = read_scores_csv(open(&a)?)?;
            let rb = read_scores_csv(open(&b)?)?;
            let report = effect_report(&ra, &rb, alpha)?;
            let path = out.join("stats.csv");
            write_stats_csv(&report.all, create(&path)?)?;
            println!(
                "{} tests, {} significant at q < {alpha} -> {}",
                report.all.len(),
                report.filtered.len(),
                path.display()
            );
        }
        Command::Report { stats, alpha } => {
            let alpha = alpha.unwrap_or(cfg.alpha);
            let all = read_stats_csv(open(&stats)?)?;
            let filtered = filter_effects(&all, alpha);
            write_stats_csv(&filtered, create(&out.join("report.csv"))?)?;
            write_json(&out.join("report.json"), &filtered)?;
            write_stats_svg(&filtered, create(&out.join("report.svg"))?)?;
            for g in &filtered {
                println!(
                    "{} channel {} roi {} {}: eta2 {:.3} q {:.3e}",
                    g.hemisphere,
                    g.channel,
                    g.roi_id,
                    g.roi_name,
                    g.eta2.unwrap_or(f64::NAN),
                    g.q.unwrap_or(f64::NAN)
                );
            }
            println!(
                "{} of {} ROIs significant -> {}",
                filtered.len(),
                all.len(),
                out.join("report.csv").display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) | Error::Config(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
