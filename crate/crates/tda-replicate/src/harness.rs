//! Experiment orchestration: sample → smooth → persistence → fit →
//! replicate → goodness of fit, with every intermediate persisted so
//! interrupted runs resume from disk. Artifacts are keyed by replication
//! index; pointing a changed config at an old output directory is on the
//! caller.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cubical;
use crate::diagram::{self, FiltrationConvention, PersistenceDiagram};
use crate::error::{Error, Result};
use crate::fit::{self, EstimateSummary, FitConfig, FittedModel, SearchMode};
use crate::gibbs::{self, EvalOptions, QuadratureSpec, Variant, DEFAULT_QUAD_NODES};
use crate::gof::{self, GofReport, GofTags};
use crate::kde;
use crate::mcmc::{self, McmcConfig, DEFAULT_PROPOSAL_CUTOFF};
use crate::rng::fanout_seed;
use crate::synthetic::{self, ShapeKind, ShapeSpec};

fn default_eta() -> f64 {
    0.1
}
fn default_k() -> usize {
    3
}
fn default_variants() -> Vec<Variant> {
    vec![Variant::Original, Variant::Modified]
}
fn default_replicates() -> usize {
    1
}
fn default_alpha_range() -> (f64, f64) {
    fit::DEFAULT_ALPHA_RANGE
}
fn default_quad_nodes() -> usize {
    DEFAULT_QUAD_NODES
}
fn default_cutoff() -> f64 {
    DEFAULT_PROPOSAL_CUTOFF
}

/// Everything one simulation study needs: the sampled shape, the field
/// smoothing, which ranks to fit, and the sampler settings swept over.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub shape: ShapeSpec,
    pub replications: usize,
    /// Fixed per-axis KDE bandwidth for the filtration field.
    #[serde(default = "default_eta")]
    pub filtration_eta: f64,
    /// Grid points per axis for the filtration field.
    pub field_resolution: usize,
    /// Extra margin added to the data range on every axis.
    #[serde(default)]
    pub field_padding: f64,
    pub homology_ranks: Vec<usize>,
    #[serde(default = "default_k", rename = "K")]
    pub k: usize,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    pub grid_sizes: Vec<usize>,
    pub burn_ins: Vec<usize>,
    /// Replicated diagrams extracted per (grid, burn-in) chain.
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_alpha_range")]
    pub alpha_range: (f64, f64),
    #[serde(default)]
    pub search_mode: SearchMode,
    #[serde(default = "default_quad_nodes")]
    pub quad_nodes: usize,
    #[serde(default = "default_cutoff")]
    pub proposal_cutoff: f64,
    /// Refit the proposal density to the chain state each sweep instead of
    /// freezing the initial proposal.
    #[serde(default)]
    pub rebuild_proposal: bool,
    #[serde(default)]
    pub master_seed: u64,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Ten replications of a 300-point unit circle on a 50-point field grid:
    /// the full-size study shrunk to minutes of compute.
    pub fn desk(output_dir: impl Into<PathBuf>) -> Self {
        Self {
            shape: ShapeSpec::circle(300, 1.0, 0),
            replications: 10,
            filtration_eta: default_eta(),
            field_resolution: 50,
            field_padding: 0.0,
            homology_ranks: vec![0],
            k: default_k(),
            variants: default_variants(),
            grid_sizes: vec![50],
            burn_ins: vec![25],
            replicates: default_replicates(),
            alpha_range: default_alpha_range(),
            search_mode: SearchMode::default(),
            quad_nodes: default_quad_nodes(),
            proposal_cutoff: default_cutoff(),
            rebuild_proposal: false,
            master_seed: 0,
            output_dir: output_dir.into(),
        }
    }

    /// The full-size unit-circle study: 100 replications of 1000 points,
    /// field resolution 100, proposal grids {25, 50, 100} × burn-ins
    /// {25, 50, 100}. Hours of compute on one core.
    pub fn paper(output_dir: impl Into<PathBuf>) -> Self {
        Self {
            shape: ShapeSpec::circle(1000, 1.0, 0),
            replications: 100,
            field_resolution: 100,
            grid_sizes: vec![25, 50, 100],
            burn_ins: vec![25, 50, 100],
            ..Self::desk(output_dir)
        }
    }

    /// The homology ranks fitted per shape: circles carry enough points
    /// only in rank 0; spheres support one rank per intrinsic dimension.
    pub fn default_ranks(kind: ShapeKind) -> Vec<usize> {
        match kind {
            ShapeKind::Circle | ShapeKind::Concentric | ShapeKind::Distinct => vec![0],
            ShapeKind::Sphere2 => vec![0, 1],
            ShapeKind::Sphere3 => vec![0, 1, 2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        let fail = |msg: String| Err(Error::InvalidArgument(msg));
        if self.replications == 0 {
            return fail("need at least one replication".into());
        }
        if !(self.filtration_eta > 0.0) || !self.filtration_eta.is_finite() {
            return fail(format!(
                "filtration bandwidth must be positive, got {}",
                self.filtration_eta
            ));
        }
        if self.field_resolution < 2 {
            return fail("field resolution must be at least 2".into());
        }
        if !self.field_padding.is_finite() || self.field_padding < 0.0 {
            return fail(format!("field padding must be >= 0, got {}", self.field_padding));
        }
        let dim = self.shape.kind.ambient_dim();
        cubical::check_grid_budget(&vec![self.field_resolution; dim])?;
        if self.shape.kind == ShapeKind::Sphere3 && self.field_resolution > 15 {
            return fail(format!(
                "4-dimensional fields are capped at resolution 15, got {}",
                self.field_resolution
            ));
        }
        if self.homology_ranks.is_empty() {
            return fail("need at least one homology rank".into());
        }
        let mut seen = BTreeSet::new();
        for &r in &self.homology_ranks {
            if r >= dim {
                return fail(format!(
                    "rank {r} is out of range for a {dim}-dimensional field"
                ));
            }
            if !seen.insert(r) {
                return fail(format!("rank {r} listed twice"));
            }
        }
        if self.k == 0 {
            return fail("neighbor count K must be positive".into());
        }
        if self.variants.is_empty() {
            return fail("need at least one model variant".into());
        }
        if self.variants.len() > 2 || (self.variants.len() == 2 && self.variants[0] == self.variants[1]) {
            return fail("variant listed twice".into());
        }
        for (name, list, min) in [
            ("grid size", &self.grid_sizes, 2usize),
            ("burn-in", &self.burn_ins, 1usize),
        ] {
            if list.is_empty() {
                return fail(format!("need at least one {name}"));
            }
            let mut seen = BTreeSet::new();
            for &v in list {
                if v < min {
                    return fail(format!("{name} must be at least {min}, got {v}"));
                }
                if !seen.insert(v) {
                    return fail(format!("{name} {v} listed twice"));
                }
            }
        }
        if self.replicates == 0 {
            return fail("need at least one replicate per chain".into());
        }
        let (lo, hi) = self.alpha_range;
        if !lo.is_finite() || !hi.is_finite() || lo < 0.0 || lo >= hi {
            return fail(format!("alpha range must satisfy 0 <= lo < hi, got ({lo}, {hi})"));
        }
        if self.quad_nodes < 2 {
            return fail("need at least 2 quadrature nodes per axis".into());
        }
        if !self.proposal_cutoff.is_finite() || self.proposal_cutoff < 0.0 {
            return fail(format!(
                "proposal cutoff must be >= 0, got {}",
                self.proposal_cutoff
            ));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let config: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &(serde_json::to_string_pretty(self)? + "\n"))
    }
}

/// Did one replication survive the whole pipeline?
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RepOutcome {
    Ok,
    Failed { error: String },
}

/// Chain bookkeeping for one (rank, variant, grid, burn-in) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub seed: u64,
    pub mean_acceptance: f64,
    /// One entry per sweep, `burn_in × replicates` in total.
    pub acceptance_rates: Vec<f64>,
    pub null_escapes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub index: usize,
    pub seed: u64,
    pub outcome: RepOutcome,
    /// Diagram cardinality per fitted rank, keyed `r<rank>`.
    pub points: BTreeMap<String, usize>,
    /// Fitted models keyed `r<rank>_<variant>`.
    pub fits: BTreeMap<String, FittedModel>,
    /// Chains keyed `r<rank>_<variant>_g<grid>_b<burn>`.
    pub sims: BTreeMap<String, SimRecord>,
}

/// One goodness-of-fit report plus the rank it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofEntry {
    pub rank: usize,
    pub report: GofReport,
}

/// Everything `run_experiment` produces; serialized as the run manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub records: Vec<ReplicationRecord>,
    /// Estimate summaries keyed `r<rank>_<variant>`.
    pub summaries: BTreeMap<String, EstimateSummary>,
    /// Reports keyed `r<rank>_<variant>_g<grid>_b<burn>`.
    pub gof: BTreeMap<String, GofEntry>,
    /// Cells whose report could not be computed, with the reason.
    pub gof_errors: BTreeMap<String, String>,
}

impl ExperimentResult {
    pub fn manifest_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Writes via a temp file in the same directory and renames into place, so
/// concurrent or interrupted runs never observe a half-written artifact.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.persist(path).map_err(|e| Error::from(e.error))?;
    Ok(())
}

fn save_diagrams_atomic(pds: &[PersistenceDiagram], path: &Path) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    diagram::save_diagrams(pds, tmp.path())?;
    tmp.persist(path).map_err(|e| Error::from(e.error))?;
    Ok(())
}

fn rep_dir(config: &ExperimentConfig, index: usize) -> PathBuf {
    config.output_dir.join(format!("rep_{index:03}"))
}

fn fit_key(rank: usize, variant: Variant) -> String {
    format!("r{rank}_{}", variant.name())
}

fn sim_key(rank: usize, variant: Variant, grid: usize, burn: usize) -> String {
    format!("{}_g{grid}_b{burn}", fit_key(rank, variant))
}

/// In-memory payload of one replication: the record that goes into the
/// manifest plus the diagrams the aggregation stages need.
struct RepData {
    record: ReplicationRecord,
    reals: BTreeMap<usize, PersistenceDiagram>,
    sims: BTreeMap<String, Vec<PersistenceDiagram>>,
}

/// Real diagrams for one replication: loaded from disk when present,
/// otherwise sample → fixed-η KDE field → cubical persistence, persisted.
/// Ranks absent from a persisted file are empty diagrams.
fn real_diagrams(
    config: &ExperimentConfig,
    dir: &Path,
    seed: u64,
) -> Result<BTreeMap<usize, PersistenceDiagram>> {
    let path = dir.join("real.csv");
    let pds = if path.exists() {
        diagram::load_diagrams(&path, FiltrationConvention::SUPERLEVEL)?
    } else {
        let mut spec = config.shape.clone();
        spec.seed = seed;
        let cloud = synthetic::sample(&spec)?;
        let field_kde = kde::fit_kde(&cloud, Some(vec![config.filtration_eta; cloud.dim]))?;
        let ranges: Vec<(f64, f64)> = kde::data_range(&cloud)
            .into_iter()
            .map(|(lo, hi)| (lo - config.field_padding, hi + config.field_padding))
            .collect();
        let field = kde::kde_grid(&field_kde, &ranges, config.field_resolution)?;
        let max_rank = *config.homology_ranks.iter().max().unwrap();
        let pds = if max_rank == 0 {
            vec![cubical::h0_superlevel(&field)?]
        } else {
            cubical::cubical_persistence(&field, max_rank)?
        };
        save_diagrams_atomic(&pds, &path)?;
        pds
    };
    config
        .homology_ranks
        .iter()
        .map(|&rank| {
            let pd = match pds.iter().find(|pd| pd.rank == rank) {
                Some(pd) => pd.clone(),
                None => {
                    PersistenceDiagram::new(rank, Vec::new(), FiltrationConvention::SUPERLEVEL)?
                }
            };
            Ok((rank, pd))
        })
        .collect()
}

fn try_replication(config: &ExperimentConfig, index: usize, seed: u64) -> Result<RepData> {
    let dir = rep_dir(config, index);
    fs::create_dir_all(&dir)?;
    let reals = real_diagrams(config, &dir, seed)?;

    let mut record = ReplicationRecord {
        index,
        seed,
        outcome: RepOutcome::Ok,
        points: reals
            .iter()
            .map(|(&rank, pd)| (format!("r{rank}"), pd.len()))
            .collect(),
        fits: BTreeMap::new(),
        sims: BTreeMap::new(),
    };
    let mut sims = BTreeMap::new();

    // Chain seeds fan out from the replication seed by cell number, in
    // config order, so they are stable whether or not a stage was resumed.
    let mut cell = 0u64;
    for &rank in &config.homology_ranks {
        let pd = &reals[&rank];
        let ppd = diagram::to_ppd(pd)?;
        let model_kde = gibbs::fit_ppd_kde(&ppd)?;
        let mut quad = QuadratureSpec::from_ppd_kde(&ppd, &model_kde)?;
        quad.nodes = (config.quad_nodes, config.quad_nodes);
        for &variant in &config.variants {
            let fkey = fit_key(rank, variant);
            let fit_path = dir.join(format!("fit_{fkey}.json"));
            let model: FittedModel = if fit_path.exists() {
                serde_json::from_str(&fs::read_to_string(&fit_path)?)?
            } else {
                let fc = FitConfig {
                    alpha_range: config.alpha_range,
                    mode: config.search_mode,
                    opts: EvalOptions::default(),
                };
                let model = fit::fit_model(&ppd, variant, config.k, &model_kde, &quad, &fc)?;
                write_atomic(&fit_path, &(serde_json::to_string_pretty(&model)? + "\n"))?;
                model
            };
            for &grid in &config.grid_sizes {
                for &burn in &config.burn_ins {
                    cell += 1;
                    let skey = sim_key(rank, variant, grid, burn);
                    let chain_seed = fanout_seed(seed, cell);
                    let meta_path = dir.join(format!("sim_{skey}.json"));
                    let diagram_paths: Vec<PathBuf> = (0..config.replicates)
                        .map(|b| dir.join(format!("sim_{skey}_{b}.csv")))
                        .collect();
                    let cached = meta_path.exists() && diagram_paths.iter().all(|p| p.exists());
                    let (chain_diagrams, sim_record) = if cached {
                        let rec: SimRecord = serde_json::from_str(&fs::read_to_string(&meta_path)?)?;
                        let ds = diagram_paths
                            .iter()
                            .map(|p| {
                                diagram::load_diagram(p, FiltrationConvention::SUPERLEVEL, Some(rank))
                            })
                            .collect::<Result<Vec<_>>>()?;
                        (ds, rec)
                    } else {
                        let mc = McmcConfig {
                            grid_size: grid,
                            burn_in: burn,
                            replicates: config.replicates,
                            seed: chain_seed,
                            cutoff: config.proposal_cutoff,
                            rebuild_each_sweep: config.rebuild_proposal,
                            opts: EvalOptions::default(),
                        };
                        let set = mcmc::replicate(pd, &model.params, &mc)?;
                        for (b, d) in set.diagrams.iter().enumerate() {
                            save_diagrams_atomic(std::slice::from_ref(d), &diagram_paths[b])?;
                        }
                        let rates = set.acceptance_rates;
                        let rec = SimRecord {
                            seed: chain_seed,
                            mean_acceptance: rates.iter().sum::<f64>() / rates.len() as f64,
                            acceptance_rates: rates,
                            null_escapes: set.null_escapes,
                        };
                        write_atomic(&meta_path, &(serde_json::to_string_pretty(&rec)? + "\n"))?;
                        (set.diagrams, rec)
                    };
                    record.sims.insert(skey.clone(), sim_record);
                    sims.insert(skey, chain_diagrams);
                }
            }
            record.fits.insert(fkey, model);
        }
    }
    Ok(RepData {
        record,
        reals,
        sims,
    })
}

fn run_replication(config: &ExperimentConfig, index: usize) -> RepData {
    let seed = fanout_seed(config.master_seed, index as u64);
    try_replication(config, index, seed).unwrap_or_else(|e| RepData {
        record: ReplicationRecord {
            index,
            seed,
            outcome: RepOutcome::Failed {
                error: e.to_string(),
            },
            points: BTreeMap::new(),
            fits: BTreeMap::new(),
            sims: BTreeMap::new(),
        },
        reals: BTreeMap::new(),
        sims: BTreeMap::new(),
    })
}

/// Worker count: `TDA_REPLICATE_THREADS` when set to a positive integer,
/// otherwise rayon's default.
fn thread_cap() -> Option<usize> {
    std::env::var("TDA_REPLICATE_THREADS")
        .ok()?
        .parse()
        .ok()
        .filter(|&n| n > 0)
}

/// Runs the full study: replications in parallel (each stage cached on
/// disk), then per-variant estimate summaries and per-cell goodness-of-fit
/// reports, and finally the manifest. More than half the replications
/// failing aborts the experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    fs::create_dir_all(&config.output_dir)?;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Experiment(format!("could not start worker pool: {e}")))?;
    let reps: Vec<RepData> = pool.install(|| {
        (0..config.replications)
            .into_par_iter()
            .map(|i| run_replication(config, i))
            .collect()
    });

    let failures: Vec<(usize, &str)> = reps
        .iter()
        .filter_map(|r| match &r.record.outcome {
            RepOutcome::Ok => None,
            RepOutcome::Failed { error } => Some((r.record.index, error.as_str())),
        })
        .collect();
    if failures.len() * 2 > config.replications {
        let (index, error) = failures[0];
        return Err(Error::Experiment(format!(
            "{} of {} replications failed; first failure (replication {index}): {error}",
            failures.len(),
            config.replications
        )));
    }
    let ok: Vec<&RepData> = reps
        .iter()
        .filter(|r| r.record.outcome == RepOutcome::Ok)
        .collect();

    let mut summaries = BTreeMap::new();
    for &rank in &config.homology_ranks {
        for &variant in &config.variants {
            let key = fit_key(rank, variant);
            let models: Vec<FittedModel> =
                ok.iter().map(|r| r.record.fits[&key].clone()).collect();
            if models.is_empty() {
                continue;
            }
            let summary = fit::summarize_estimates(&models)?;
            write_atomic(
                &config.output_dir.join(format!("estimates_{key}.csv")),
                &summary.to_csv(),
            )?;
            summaries.insert(key, summary);
        }
    }

    let mut gof_entries = BTreeMap::new();
    let mut gof_errors = BTreeMap::new();
    for &rank in &config.homology_ranks {
        for &variant in &config.variants {
            for &grid in &config.grid_sizes {
                for &burn in &config.burn_ins {
                    let key = sim_key(rank, variant, grid, burn);
                    let json_path = config.output_dir.join(format!("gof_{key}.json"));
                    let entry = if json_path.exists() {
                        serde_json::from_str(&fs::read_to_string(&json_path)?)?
                    } else {
                        let mut reals = Vec::new();
                        let mut sims = Vec::new();
                        for r in &ok {
                            for sim in &r.sims[&key] {
                                reals.push(r.reals[&rank].clone());
                                sims.push(sim.clone());
                            }
                        }
                        let tags = GofTags {
                            variant,
                            grid_size: grid,
                            burn_in: burn,
                        };
                        match gof::gof_report(&reals, &sims, tags) {
                            Ok(report) => {
                                let entry = GofEntry { rank, report };
                                write_atomic(
                                    &json_path,
                                    &(serde_json::to_string_pretty(&entry)? + "\n"),
                                )?;
                                entry
                            }
                            Err(e) => {
                                gof_errors.insert(key, e.to_string());
                                continue;
                            }
                        }
                    };
                    write_atomic(
                        &config.output_dir.join(format!("gof_{key}.csv")),
                        &entry.report.to_csv(),
                    )?;
                    gof_entries.insert(key, entry);
                }
            }
        }
    }

    let result = ExperimentResult {
        config: config.clone(),
        records: reps.into_iter().map(|r| r.record).collect(),
        summaries,
        gof: gof_entries,
        gof_errors,
    };
    write_atomic(&config.output_dir.join("manifest.json"), &result.manifest_json()?)?;
    Ok(result)
}

// ---------------------------------------------------------------------------
// Plot emission: self-contained SVG box plots plus the long-format CSV.

struct FiveNum {
    min: f64,
    q1: f64,
    median: f64,
    q3: f64,
    max: f64,
}

/// Linear-interpolation quantile on a sorted slice (the common "type 7"
/// convention: h = (n−1)p).
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn five_number(values: &[f64]) -> FiveNum {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    FiveNum {
        min: sorted[0],
        q1: quantile(&sorted, 0.25),
        median: quantile(&sorted, 0.5),
        q3: quantile(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    }
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() < 1e-3 || v.abs() >= 1e4 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// One row of labeled boxes with whiskers to the extremes; everything is
/// assembled as text so the output is bit-stable.
fn box_plot_svg(title: &str, y_label: &str, groups: &[(String, Vec<f64>)]) -> String {
    const ML: f64 = 70.0;
    const MR: f64 = 18.0;
    const MT: f64 = 42.0;
    const MB: f64 = 70.0;
    const SLOT: f64 = 92.0;
    const BOX: f64 = 44.0;
    const PLOT_H: f64 = 320.0;

    let stats: Vec<(&str, FiveNum)> = groups
        .iter()
        .map(|(label, values)| (label.as_str(), five_number(values)))
        .collect();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, s) in &stats {
        lo = lo.min(s.min);
        hi = hi.max(s.max);
    }
    if !(hi > lo) {
        lo -= 0.5;
        hi += 0.5;
    } else {
        let pad = 0.05 * (hi - lo);
        lo -= pad;
        hi += pad;
    }
    let width = ML + MR + SLOT * groups.len() as f64;
    let height = MT + PLOT_H + MB;
    let y = |v: f64| MT + PLOT_H * (hi - v) / (hi - lo);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{width:.0}\" height=\"{height:.0}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{title}</text>\n",
        width / 2.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"12\" \
         transform=\"rotate(-90 16 {:.1})\">{y_label}</text>\n",
        MT + PLOT_H / 2.0,
        MT + PLOT_H / 2.0
    ));
    svg.push_str(&format!(
        "<line x1=\"{ML:.1}\" y1=\"{MT:.1}\" x2=\"{ML:.1}\" y2=\"{:.1}\" stroke=\"#333\"/>\n",
        MT + PLOT_H
    ));
    for t in 0..5 {
        let v = lo + (hi - lo) * t as f64 / 4.0;
        let ty = y(v);
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{ty:.1}\" x2=\"{ML:.1}\" y2=\"{ty:.1}\" stroke=\"#333\"/>\n",
            ML - 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"11\">{}</text>\n",
            ML - 8.0,
            ty + 4.0,
            fmt_tick(v)
        ));
    }
    for (i, (label, s)) in stats.iter().enumerate() {
        let cx = ML + SLOT * (i as f64 + 0.5);
        let cap = BOX / 2.0 - 6.0;
        svg.push_str(&format!(
            "<line x1=\"{cx:.1}\" y1=\"{:.1}\" x2=\"{cx:.1}\" y2=\"{:.1}\" stroke=\"#333\"/>\n",
            y(s.max),
            y(s.min)
        ));
        for v in [s.min, s.max] {
            svg.push_str(&format!(
                "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#333\"/>\n",
                cx - cap,
                y(v),
                cx + cap,
                y(v)
            ));
        }
        svg.push_str(&format!(
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{BOX:.1}\" height=\"{:.1}\" \
             fill=\"#a8c6e8\" stroke=\"#234\"/>\n",
            cx - BOX / 2.0,
            y(s.q3),
            (y(s.q1) - y(s.q3)).max(0.0)
        ));
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#123\" stroke-width=\"2\"/>\n",
            cx - BOX / 2.0,
            y(s.median),
            cx + BOX / 2.0,
            y(s.median)
        ));
        svg.push_str(&format!(
            "<text x=\"{cx:.1}\" y=\"{:.1}\" text-anchor=\"start\" font-size=\"11\" \
             transform=\"rotate(30 {cx:.1} {:.1})\">{label}</text>\n",
            MT + PLOT_H + 16.0,
            MT + PLOT_H + 16.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn ordinal(k: usize) -> &'static str {
    match k {
        1 => "1st",
        2 => "2nd",
        3 => "3rd",
        _ => "nth",
    }
}

/// What `emit_plots` wrote and what it had to leave out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotManifest {
    pub figures: Vec<String>,
    pub omitted: Vec<String>,
    /// Data rows in `gof_long.csv`.
    pub csv_rows: usize,
}

/// Renders the distance and neighbor-statistic box plots per rank, writes
/// the combined long-format CSV, and notes skipped panels in a manifest.
pub fn emit_plots(result: &ExperimentResult, out_dir: &Path) -> Result<PlotManifest> {
    if result.gof.is_empty() {
        return Err(Error::InvalidArgument(
            "nothing to plot: the experiment produced no goodness-of-fit reports".into(),
        ));
    }
    fs::create_dir_all(out_dir)?;

    let mut csv = String::from("rank,replicate,metric,value,variant,grid_size,burn_in\n");
    let mut csv_rows = 0usize;
    for entry in result.gof.values() {
        let tags = entry.report.tags;
        let mut push = |i: usize, metric: &str, value: f64| {
            csv.push_str(&format!(
                "{},{i},{metric},{value},{},{},{}\n",
                entry.rank,
                tags.variant.name(),
                tags.grid_size,
                tags.burn_in
            ));
            csv_rows += 1;
        };
        for (i, d) in entry.report.per_replicate.iter().enumerate() {
            push(i, "bottleneck", d.bottleneck);
            push(i, "wasserstein", d.wasserstein);
            for (k, (r, s)) in entry.report.real_nn[i]
                .iter()
                .zip(&entry.report.sim_nn[i])
                .enumerate()
            {
                push(i, &format!("nn{}_real", k + 1), *r);
                push(i, &format!("nn{}_sim", k + 1), *s);
            }
        }
    }
    write_atomic(&out_dir.join("gof_long.csv"), &csv)?;

    let ranks: BTreeSet<usize> = result.gof.values().map(|e| e.rank).collect();
    let mut figures = Vec::new();
    let mut omitted = Vec::new();
    let mut emit = |name: String, title: String, groups: Vec<(String, Vec<f64>)>| -> Result<()> {
        let groups: Vec<(String, Vec<f64>)> =
            groups.into_iter().filter(|(_, v)| !v.is_empty()).collect();
        if groups.is_empty() {
            omitted.push(name);
            return Ok(());
        }
        write_atomic(
            &out_dir.join(&name),
            &box_plot_svg(&title, "distance", &groups),
        )?;
        figures.push(name);
        Ok(())
    };

    for &rank in &ranks {
        // Panel order: variant first (original before modified), then grid,
        // then burn-in, matching how the study tables read.
        let mut entries: Vec<&GofEntry> = result.gof.values().filter(|e| e.rank == rank).collect();
        entries.sort_by_key(|e| {
            (
                e.report.tags.variant != Variant::Original,
                e.report.tags.grid_size,
                e.report.tags.burn_in,
            )
        });
        let label = |e: &GofEntry| {
            format!(
                "{} g{} b{}",
                e.report.tags.variant.name(),
                e.report.tags.grid_size,
                e.report.tags.burn_in
            )
        };

        for (metric, pick) in [
            (
                "bottleneck",
                Box::new(|d: &gof::PairDistances| d.bottleneck) as Box<dyn Fn(&gof::PairDistances) -> f64>,
            ),
            ("wasserstein", Box::new(|d: &gof::PairDistances| d.wasserstein)),
        ] {
            let groups: Vec<(String, Vec<f64>)> = entries
                .iter()
                .map(|e| (label(e), e.report.per_replicate.iter().map(&pick).collect()))
                .collect();
            emit(
                format!("dist_{metric}_r{rank}.svg"),
                format!("{metric} distance to the real diagram, rank {rank}"),
                groups,
            )?;
        }

        for k in 1..=3usize {
            let mut groups = Vec::new();
            if let Some(first) = entries.first() {
                groups.push((
                    "real".to_string(),
                    first.report.real_nn.iter().map(|row| row[k - 1]).collect(),
                ));
            }
            for e in &entries {
                groups.push((
                    label(e),
                    e.report.sim_nn.iter().map(|row| row[k - 1]).collect(),
                ));
            }
            emit(
                format!("nn{k}_r{rank}.svg"),
                format!("mean {}-neighbor distance, rank {rank}", ordinal(k)),
                groups,
            )?;
        }
    }

    let manifest = PlotManifest {
        figures,
        omitted,
        csv_rows,
    };
    write_atomic(
        &out_dir.join("plots_manifest.json"),
        &(serde_json::to_string_pretty(&manifest)? + "\n"),
    )?;
    Ok(manifest)
}
