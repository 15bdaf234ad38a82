//! `mvar` — simulate, fit, evaluate and export multi-subject VAR
//! connectivity models.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mvar_core::gibbs::{self, ChainConfig};
use mvar_core::hyper::Hyperparameters;
use mvar_core::io::{self, ExportMode};
use mvar_core::sim::SimulationConfig;
use mvar_core::vb::{self, state::FitWorkspace};
use mvar_core::{Error, Result};

#[derive(Parser)]
#[command(name = "mvar", version, about = "Multi-subject Bayesian VAR connectivity inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Vb,
    Gibbs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    R10,
    R30,
    R90,
}

#[derive(Clone, Copy, ValueEnum)]
enum EdgeFilter {
    All,
    Unique,
    Shared,
}

impl From<EdgeFilter> for ExportMode {
    fn from(f: EdgeFilter) -> Self {
        match f {
            EdgeFilter::All => ExportMode::All,
            EdgeFilter::Unique => ExportMode::UniqueOnly,
            EdgeFilter::Shared => ExportMode::SharedOnly,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known ground truth.
    Simulate {
        /// Stock protocol to use when no config file is given.
        #[arg(long, value_enum, default_value = "r10")]
        preset: Preset,
        /// JSON file holding a full simulation config (overrides --preset).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Replicate index folded into the RNG stream.
        #[arg(long, default_value_t = 0)]
        replicate: usize,
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Fit the model to a dataset.
    Fit {
        #[arg(long)]
        manifest: PathBuf,
        /// JSON file of hyperparameters; defaults apply otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "vb")]
        backend: Backend,
        /// Selection threshold on inclusion probabilities.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Score a fit against ground truth.
    Evaluate {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Re-export the edge CSV from a saved fit.
    Export {
        #[arg(long)]
        fit: PathBuf,
        /// Manifest supplying ROI names; generic names are used otherwise.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "all")]
        filter: EdgeFilter,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run both backends on one dataset and report side by side.
    Compare {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output_dir: PathBuf,
    },
}

fn load_hyper(path: &Option<PathBuf>) -> Result<Hyperparameters> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(format!("{}: {e}", p.display())))?;
            Ok(serde_json::from_str(&text).map_err(|e| Error::io(format!("{}: {e}", p.display())))?)
        }
        None => Ok(Hyperparameters::default()),
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate {
            preset,
            config,
            seed,
            replicate,
            output_dir,
        } => {
            let mut sim_config = match config {
                Some(p) => {
                    let text = fs::read_to_string(&p)
                        .map_err(|e| Error::io(format!("{}: {e}", p.display())))?;
                    serde_json::from_str::<SimulationConfig>(&text)
                        .map_err(|e| Error::io(format!("{}: {e}", p.display())))?
                }
                None => match preset {
                    Preset::R10 => SimulationConfig::preset_r10(seed),
                    Preset::R30 => SimulationConfig::preset_r30(seed),
                    Preset::R90 => SimulationConfig::preset_r90(seed),
                },
            };
            sim_config.seed = seed;
            sim_config.validate()?;
            let (dataset, truth) = mvar_core::sim::generate_replicate(&sim_config, replicate)?;
            let manifest = io::save_dataset(&output_dir, &dataset, Some(&truth.structural))?;
            io::save_truth(&output_dir.join("truth.json"), &truth)?;
            fs::write(
                output_dir.join("sim_config.json"),
                serde_json::to_string_pretty(&sim_config)?,
            )?;
            eprintln!(
                "wrote {} subjects to {} (manifest {})",
                dataset.n_subjects(),
                output_dir.display(),
                manifest.display()
            );
            Ok(())
        }
        Command::Fit {
            manifest,
            config,
            seed,
            backend,
            threshold,
            max_iters,
            output_dir,
        } => {
            let (dataset, structural, smoothing) = io::load_dataset(&manifest)?;
            if manifest_has_no_smoothing(&smoothing) {
                eprintln!("no smoothing matrix supplied; using identity (no smoothing)");
            }
            let mut hyper = load_hyper(&config)?;
            if let Some(t) = threshold {
                hyper.selection_threshold = t;
            }
            if let Some(m) = max_iters {
                hyper.max_iters = m;
            }
            fs::create_dir_all(&output_dir)?;
            let start = std::time::Instant::now();
            let fit = match backend {
                Backend::Vb => vb::fit(
                    &dataset,
                    structural.as_ref(),
                    smoothing.as_ref(),
                    &hyper,
                    seed,
                )?,
                Backend::Gibbs => {
                    let resolved = hyper.validate(dataset.n_groups)?;
                    let ws = FitWorkspace::new(
                        &dataset,
                        structural.as_ref(),
                        smoothing.as_ref(),
                        resolved,
                    )?;
                    let chain = ChainConfig {
                        n_iters: max_iters.map(|m| m.max(2)).unwrap_or(40_000),
                        burn_in: max_iters.map(|m| m.max(2) / 4).unwrap_or(10_000),
                        thin: 1,
                        seed,
                    };
                    let summary = gibbs::run_chain(&ws, &chain)?;
                    fs::write(
                        output_dir.join("geweke.json"),
                        serde_json::to_string_pretty(&summary.geweke)?,
                    )?;
                    summary.to_fit_result(&ws, &chain, start.elapsed().as_secs_f64())
                }
            };
            io::save_fit_result(&output_dir.join("fit.json"), &fit)?;
            let csv = io::export_edges(&fit, &dataset.roi_names, ExportMode::All)?;
            fs::write(output_dir.join("edges.csv"), csv)?;
            fs::write(
                output_dir.join("timing.json"),
                format!("{{\n  \"wall_time_secs\": {}\n}}\n", start.elapsed().as_secs_f64()),
            )?;
            eprintln!(
                "fit complete: {} iterations, {:.1}s wall",
                fit.iterations,
                start.elapsed().as_secs_f64()
            );
            Ok(())
        }
        Command::Evaluate {
            truth,
            fit,
            output_dir,
        } => {
            let truth = io::load_truth(&truth)?;
            let fit = io::load_fit_result(&fit)?;
            let rows = io::evaluate_fit(&fit, &truth)?;
            fs::create_dir_all(&output_dir)?;
            fs::write(output_dir.join("scores.csv"), io::scores_csv(&rows))?;
            for r in &rows {
                eprintln!(
                    "group {}: fpr {:.4}, fnr {:.4}, acc {:.4}, f1 {:.4}, mse {:.6}",
                    r.group, r.score.fpr, r.score.fnr, r.score.accuracy, r.score.f1, r.mse
                );
            }
            Ok(())
        }
        Command::Export {
            fit,
            manifest,
            filter,
            output,
        } => {
            let fit = io::load_fit_result(&fit)?;
            let roi_names: Vec<String> = match manifest {
                Some(m) => io::load_dataset(&m)?.0.roi_names,
                None => (1..=fit.n_regions).map(|j| format!("ROI_{j}")).collect(),
            };
            let csv = io::export_edges(&fit, &roi_names, filter.into())?;
            fs::write(&output, csv)?;
            Ok(())
        }
        Command::Compare {
            manifest,
            config,
            truth,
            seed,
            output_dir,
        } => {
            let (dataset, structural, smoothing) = io::load_dataset(&manifest)?;
            let hyper = load_hyper(&config)?;
            fs::create_dir_all(&output_dir)?;

            let t0 = std::time::Instant::now();
            let vb_fit = vb::fit(
                &dataset,
                structural.as_ref(),
                smoothing.as_ref(),
                &hyper,
                seed,
            )?;
            let vb_secs = t0.elapsed().as_secs_f64();
            io::save_fit_result(&output_dir.join("fit_vb.json"), &vb_fit)?;

            let resolved = hyper.validate(dataset.n_groups)?;
            let ws = FitWorkspace::new(&dataset, structural.as_ref(), smoothing.as_ref(), resolved)?;
            let dim = dataset.coeff_index().len();
            let mut warning = None;
            let mut gibbs_fit = None;
            let mut gibbs_secs = 0.0;
            if dim <= gibbs::SIZE_GUARD {
                let chain = ChainConfig { seed, ..ChainConfig::default() };
                let t1 = std::time::Instant::now();
                let summary = gibbs::run_chain(&ws, &chain)?;
                gibbs_secs = t1.elapsed().as_secs_f64();
                let fit = summary.to_fit_result(&ws, &chain, gibbs_secs);
                io::save_fit_result(&output_dir.join("fit_gibbs.json"), &fit)?;
                gibbs_fit = Some(fit);
            } else {
                warning = Some(format!(
                    "Gibbs oracle refused: {dim} coefficients exceed the guard of {}; \
                     VB-only report",
                    gibbs::SIZE_GUARD
                ));
            }

            let truth_file = match truth {
                Some(p) => Some(io::load_truth(&p)?),
                None => None,
            };
            let mut report = serde_json::Map::new();
            report.insert("vb_wall_secs".into(), vb_secs.into());
            if gibbs_fit.is_some() {
                report.insert("gibbs_wall_secs".into(), gibbs_secs.into());
            }
            if let Some(w) = &warning {
                report.insert("warning".into(), w.clone().into());
                eprintln!("{w}");
            }
            if let Some(t) = &truth_file {
                let vb_rows = io::evaluate_fit(&vb_fit, t)?;
                report.insert("vb_scores".into(), serde_json::to_value(&vb_rows)?);
                if let Some(gf) = &gibbs_fit {
                    let rows = io::evaluate_fit(gf, t)?;
                    report.insert("gibbs_scores".into(), serde_json::to_value(&rows)?);
                }
            }
            if let Some(gf) = &gibbs_fit {
                let pairs: Vec<Vec<f64>> = vb_fit
                    .groups
                    .iter()
                    .zip(&gf.groups)
                    .flat_map(|(vg, gg)| {
                        vg.mpp
                            .iter()
                            .zip(&gg.mpp)
                            .map(|(&a, &b)| vec![a, b])
                            .collect::<Vec<_>>()
                    })
                    .collect();
                report.insert("mpp_pairs".into(), serde_json::to_value(pairs)?);
            }
            fs::write(
                output_dir.join("report.json"),
                serde_json::to_string_pretty(&serde_json::Value::Object(report))?,
            )?;
            eprintln!("compare finished: vb {vb_secs:.1}s, gibbs {gibbs_secs:.1}s");
            Ok(())
        }
    }
}

fn manifest_has_no_smoothing(s: &Option<mvar_core::SmoothingMatrix>) -> bool {
    s.is_none()
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
