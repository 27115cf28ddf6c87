//! Batch CLI over the library: synthetic samples, persistence extraction,
//! pseudolikelihood fits, MCMC replication, goodness of fit, and full
//! experiments. Exit codes: 0 success, 2 invalid input, 3 fit failure.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tda_replicate::cubical;
use tda_replicate::diagram::{self, FiltrationConvention, PersistenceDiagram};
use tda_replicate::error::Result;
use tda_replicate::fit::{self, FitConfig, FittedModel, SearchMode};
use tda_replicate::gibbs::{self, ModelParams, QuadratureSpec, Variant, DEFAULT_QUAD_NODES};
use tda_replicate::gof::{self, GofTags, NN_ORDERS};
use tda_replicate::harness::{self, ExperimentConfig, ExperimentResult};
use tda_replicate::kde;
use tda_replicate::mcmc::{self, McmcConfig, DEFAULT_PROPOSAL_CUTOFF};
use tda_replicate::synthetic::{self, ShapeSpec};

#[derive(Parser)]
#[command(
    name = "tda-replicate",
    version,
    about = "Gibbs point-process models for persistence diagrams: fit, replicate, check"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    match s {
        "original" => Ok(Variant::Original),
        "modified" => Ok(Variant::Modified),
        other => Err(format!("unknown variant {other:?} (original|modified)")),
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw a synthetic point sample from a shape spec (JSON) into a CSV.
    Sample {
        /// Shape spec, e.g. {"kind":"circle","radii":[1.0],"n":300,"seed":0}
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the spec.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Smooth a sample with a fixed-bandwidth KDE and extract the
    /// persistence diagrams of its upper-level sets.
    Persist {
        #[arg(long)]
        points: PathBuf,
        /// KDE bandwidth per axis.
        #[arg(long, default_value_t = 0.1)]
        eta: f64,
        /// Field grid points per axis.
        #[arg(long)]
        resolution: usize,
        /// Homology ranks to keep, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        ranks: Vec<usize>,
        /// Margin added to the data range on every axis.
        #[arg(long, default_value_t = 0.0)]
        padding: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the interaction model to one diagram by maximum pseudolikelihood.
    Fit {
        #[arg(long)]
        diagrams: PathBuf,
        #[arg(long, default_value_t = 0)]
        rank: usize,
        #[arg(long, value_parser = parse_variant)]
        variant: Variant,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 0.0)]
        alpha_lo: f64,
        #[arg(long, default_value_t = 4.0)]
        alpha_hi: f64,
        /// Search Θ once at the profiled α instead of per probe.
        #[arg(long)]
        one_shot: bool,
        #[arg(long, default_value_t = DEFAULT_QUAD_NODES)]
        quad_nodes: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate replicated diagrams from a fitted model via MCMC.
    Replicate {
        #[arg(long)]
        diagrams: PathBuf,
        #[arg(long, default_value_t = 0)]
        rank: usize,
        /// Fit artifact (JSON) or bare model parameters.
        #[arg(long)]
        fit: PathBuf,
        #[arg(long, default_value_t = 100)]
        grid: usize,
        #[arg(long, default_value_t = 25)]
        burn_in: usize,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_PROPOSAL_CUTOFF)]
        cutoff: f64,
        /// Refit the proposal to the chain state each sweep.
        #[arg(long)]
        rebuild: bool,
        /// Output directory: rep_<i>.csv per replicate plus rates.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare aligned real and simulated diagrams: bottleneck, Wasserstein,
    /// and nearest-neighbor statistics.
    Gof {
        /// Real diagram CSV; repeat to align several pairs.
        #[arg(long, required = true)]
        real: Vec<PathBuf>,
        /// Simulated diagram CSV, aligned with --real.
        #[arg(long, required = true)]
        sim: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        rank: usize,
        #[arg(long, value_parser = parse_variant, default_value = "original")]
        variant: Variant,
        #[arg(long, default_value_t = 100)]
        grid: usize,
        #[arg(long, default_value_t = 25)]
        burn_in: usize,
        /// Also print neighbor means in projected (birth, persistence)
        /// coordinates.
        #[arg(long)]
        nn_ppd: bool,
        #[arg(long)]
        out: PathBuf,
        /// Optional long-format CSV next to the JSON report.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the full simulation study described by a config file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the master seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also render plots into <output_dir>/plots.
        #[arg(long)]
        plots: bool,
    },
    /// Render box-plot SVGs and the long-format CSV from a run manifest.
    Plot {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_pd(path: &PathBuf, rank: usize) -> Result<PersistenceDiagram> {
    diagram::load_diagram(path, FiltrationConvention::SUPERLEVEL, Some(rank))
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Sample { config, seed, out } => {
            let mut spec: ShapeSpec = serde_json::from_str(&fs::read_to_string(&config)?)?;
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            let cloud = synthetic::sample(&spec)?;
            synthetic::save_points(&cloud, &out)?;
            println!("wrote {} points to {}", cloud.len(), out.display());
        }
        Cmd::Persist {
            points,
            eta,
            resolution,
            ranks,
            padding,
            out,
        } => {
            let cloud = synthetic::load_points(&points)?;
            let field_kde = kde::fit_kde(&cloud, Some(vec![eta; cloud.dim]))?;
            let ranges: Vec<(f64, f64)> = kde::data_range(&cloud)
                .into_iter()
                .map(|(lo, hi)| (lo - padding, hi + padding))
                .collect();
            let field = kde::kde_grid(&field_kde, &ranges, resolution)?;
            let max_rank = ranks.iter().copied().max().ok_or_else(|| {
                tda_replicate::error::Error::InvalidArgument("no ranks requested".into())
            })?;
            let pds = if max_rank == 0 {
                vec![cubical::h0_superlevel(&field)?]
            } else {
                cubical::cubical_persistence(&field, max_rank)?
            };
            let kept: Vec<PersistenceDiagram> = pds
                .into_iter()
                .filter(|pd| ranks.contains(&pd.rank))
                .collect();
            diagram::save_diagrams(&kept, &out)?;
            for pd in &kept {
                println!("rank {}: {} points", pd.rank, pd.len());
            }
            println!("wrote {}", out.display());
        }
        Cmd::Fit {
            diagrams,
            rank,
            variant,
            k,
            alpha_lo,
            alpha_hi,
            one_shot,
            quad_nodes,
            out,
        } => {
            let pd = load_pd(&diagrams, rank)?;
            let ppd = diagram::to_ppd(&pd)?;
            let model_kde = gibbs::fit_ppd_kde(&ppd)?;
            let mut quad = QuadratureSpec::from_ppd_kde(&ppd, &model_kde)?;
            quad.nodes = (quad_nodes, quad_nodes);
            let config = FitConfig {
                alpha_range: (alpha_lo, alpha_hi),
                mode: if one_shot {
                    SearchMode::OneShot
                } else {
                    SearchMode::Profile
                },
                ..FitConfig::default()
            };
            let model = fit::fit_model(&ppd, variant, k, &model_kde, &quad, &config)?;
            fs::write(&out, serde_json::to_string_pretty(&model)? + "\n")?;
            println!(
                "{} K={}: alpha = {:.6}, theta = {:?}, logPL = {:.6}{}",
                variant.name(),
                k,
                model.params.alpha,
                model.params.theta,
                model.logpl,
                if model.diagnostics.fallback {
                    " (fallback range)"
                } else {
                    ""
                }
            );
            println!("wrote {}", out.display());
        }
        Cmd::Replicate {
            diagrams,
            rank,
            fit,
            grid,
            burn_in,
            replicates,
            seed,
            cutoff,
            rebuild,
            out,
        } => {
            let pd = load_pd(&diagrams, rank)?;
            let raw = fs::read_to_string(&fit)?;
            let params: ModelParams = match serde_json::from_str::<FittedModel>(&raw) {
                Ok(model) => model.params,
                Err(_) => serde_json::from_str(&raw)?,
            };
            let config = McmcConfig {
                grid_size: grid,
                burn_in,
                replicates,
                seed,
                cutoff,
                rebuild_each_sweep: rebuild,
                ..McmcConfig::default()
            };
            let set = mcmc::replicate(&pd, &params, &config)?;
            fs::create_dir_all(&out)?;
            for (b, d) in set.diagrams.iter().enumerate() {
                diagram::save_diagram(d, &out.join(format!("rep_{b}.csv")))?;
            }
            let mean = set.acceptance_rates.iter().sum::<f64>()
                / set.acceptance_rates.len() as f64;
            let rates = serde_json::json!({
                "seed": seed,
                "mean_acceptance": mean,
                "acceptance_rates": set.acceptance_rates,
                "null_escapes": set.null_escapes,
            });
            fs::write(
                out.join("rates.json"),
                serde_json::to_string_pretty(&rates)? + "\n",
            )?;
            println!(
                "{} replicate(s) into {}; mean acceptance {:.3}",
                set.diagrams.len(),
                out.display(),
                mean
            );
        }
        Cmd::Gof {
            real,
            sim,
            rank,
            variant,
            grid,
            burn_in,
            nn_ppd,
            out,
            csv,
        } => {
            let reals = real
                .iter()
                .map(|p| load_pd(p, rank))
                .collect::<Result<Vec<_>>>()?;
            let sims = sim
                .iter()
                .map(|p| load_pd(p, rank))
                .collect::<Result<Vec<_>>>()?;
            let tags = GofTags {
                variant,
                grid_size: grid,
                burn_in,
            };
            let report = gof::gof_report(&reals, &sims, tags)?;
            println!(
                "{} pair(s): median bottleneck {:.6}, median wasserstein {:.6}",
                report.per_replicate.len(),
                report.median_bottleneck(),
                report.median_wasserstein()
            );
            if nn_ppd {
                for (i, pd) in reals.iter().enumerate() {
                    let ppd = diagram::to_ppd(pd)?;
                    let means = gof::nn_stats_points(&ppd.points, &NN_ORDERS)?;
                    println!("real {i} projected nn means: {means:?}");
                }
            }
            if let Some(csv_path) = csv {
                fs::write(&csv_path, report.to_csv())?;
            }
            fs::write(
                &out,
                serde_json::to_string_pretty(&harness::GofEntry { rank, report })? + "\n",
            )?;
            println!("wrote {}", out.display());
        }
        Cmd::Experiment {
            config,
            seed,
            out,
            plots,
        } => {
            let mut config = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                config.master_seed = seed;
            }
            if let Some(out) = out {
                config.output_dir = out;
            }
            let result = harness::run_experiment(&config)?;
            let failed = result
                .records
                .iter()
                .filter(|r| r.outcome != harness::RepOutcome::Ok)
                .count();
            println!(
                "{} replication(s), {} failed; manifest at {}",
                result.records.len(),
                failed,
                config.output_dir.join("manifest.json").display()
            );
            if plots {
                let plot_dir = config.output_dir.join("plots");
                let manifest = harness::emit_plots(&result, &plot_dir)?;
                println!(
                    "{} figure(s) in {}",
                    manifest.figures.len(),
                    plot_dir.display()
                );
            }
        }
        Cmd::Plot { manifest, out } => {
            let result = ExperimentResult::load(&manifest)?;
            let plot_manifest = harness::emit_plots(&result, &out)?;
            println!(
                "{} figure(s), {} omitted, {} data rows in {}",
                plot_manifest.figures.len(),
                plot_manifest.omitted.len(),
                plot_manifest.csv_rows,
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
