//! Metropolis–Hastings replication of projected diagrams: a gridded KDE
//! inverse-transform proposal, the acceptance ratio against the fitted
//! conditional densities, sequential-scan sweeps, and burn-in-spaced
//! replicate extraction.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::diagram::{from_ppd, to_ppd, PersistenceDiagram, ProjectedDiagram};
use crate::error::{Error, Result};
use crate::gibbs::{fit_ppd_kde, Conditional, EvalOptions, ModelParams, QuadratureSpec};
use crate::kde::{kde_eval_unchecked, Kde};
use crate::rng::{rng_from_seed, Rng};

/// Proposal cells whose raw KDE value falls below this are dropped.
pub const DEFAULT_PROPOSAL_CUTOFF: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    /// Proposal lattice cells per axis.
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    /// Sweeps between consecutive extracted replicates (and before the
    /// first).
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// Number of replicated diagrams to extract.
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    /// Refit the proposal KDE to the current state before every sweep
    /// instead of holding the initial proposal fixed (sensitivity mode; the
    /// conditional densities always keep the model's KDE).
    #[serde(default)]
    pub rebuild_each_sweep: bool,
    #[serde(default)]
    pub opts: EvalOptions,
}

fn default_grid_size() -> usize {
    100
}
fn default_burn_in() -> usize {
    25
}
fn default_replicates() -> usize {
    1
}
fn default_cutoff() -> f64 {
    DEFAULT_PROPOSAL_CUTOFF
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            grid_size: default_grid_size(),
            burn_in: default_burn_in(),
            replicates: default_replicates(),
            seed: 0,
            cutoff: default_cutoff(),
            rebuild_each_sweep: false,
            opts: EvalOptions::default(),
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 2 {
            return Err(Error::InvalidArgument(format!(
                "proposal grid needs at least 2 cells per axis, got {}",
                self.grid_size
            )));
        }
        if self.burn_in == 0 || self.replicates == 0 {
            return Err(Error::InvalidArgument(
                "burn-in and replicate counts must be positive".into(),
            ));
        }
        if !(self.cutoff >= 0.0) || !self.cutoff.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "proposal cutoff must be a nonnegative real, got {}",
                self.cutoff
            )));
        }
        Ok(())
    }
}

/// Inverse-transform sampler over a square lattice of PPD-space cells:
/// cell masses proportional to the KDE at the cell centers, with cells
/// below the cutoff dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct GridProposal {
    lo: (f64, f64),
    cell: (f64, f64),
    size: usize,
    probs: Vec<f64>,
    cdf: Vec<f64>,
    cutoff: f64,
}

impl GridProposal {
    /// Cells per axis.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Normalized cell masses in flat order (x² axis fastest).
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn cell_area(&self) -> f64 {
        self.cell.0 * self.cell.1
    }

    pub fn cell_center(&self, flat: usize) -> [f64; 2] {
        let (i1, i2) = (flat / self.size, flat % self.size);
        [
            self.lo.0 + (i1 as f64 + 0.5) * self.cell.0,
            self.lo.1 + (i2 as f64 + 0.5) * self.cell.1,
        ]
    }

    /// Flat index of the cell containing p, or None outside the lattice.
    pub fn cell_of(&self, p: &[f64; 2]) -> Option<usize> {
        let coord = |v: f64, lo: f64, w: f64| -> Option<usize> {
            let t = (v - lo) / w;
            if t < 0.0 || t > self.size as f64 {
                return None;
            }
            // A point exactly on the upper edge belongs to the last cell.
            Some((t as usize).min(self.size - 1))
        };
        let i1 = coord(p[0], self.lo.0, self.cell.0)?;
        let i2 = coord(p[1], self.lo.1, self.cell.1)?;
        Some(i1 * self.size + i2)
    }

    /// Proposal density at a location: the containing cell's mass spread
    /// uniformly over the cell, zero outside the lattice.
    pub fn density_at(&self, p: &[f64; 2]) -> f64 {
        match self.cell_of(p) {
            Some(flat) => self.probs[flat] / self.cell_area(),
            None => 0.0,
        }
    }
}

/// Builds the proposal over the diagram's quadrature box: KDE at each of
/// grid_size² cell centers, cells with raw value below `cutoff` dropped,
/// remaining mass normalized into a CDF.
pub fn build_proposal(
    ppd: &ProjectedDiagram,
    kde: &Kde,
    grid_size: usize,
    cutoff: f64,
) -> Result<GridProposal> {
    let quad = QuadratureSpec::from_ppd_kde(ppd, kde)?;
    build_proposal_on_box(kde, quad.x1, quad.x2, grid_size, cutoff)
}

fn build_proposal_on_box(
    kde: &Kde,
    x1: (f64, f64),
    x2: (f64, f64),
    grid_size: usize,
    cutoff: f64,
) -> Result<GridProposal> {
    if grid_size < 2 {
        return Err(Error::InvalidArgument(format!(
            "proposal grid needs at least 2 cells per axis, got {grid_size}"
        )));
    }
    if !(cutoff >= 0.0) || !cutoff.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "proposal cutoff must be a nonnegative real, got {cutoff}"
        )));
    }
    let cell = (
        (x1.1 - x1.0) / grid_size as f64,
        (x2.1 - x2.0) / grid_size as f64,
    );
    let mut proposal = GridProposal {
        lo: (x1.0, x2.0),
        cell,
        size: grid_size,
        probs: Vec::with_capacity(grid_size * grid_size),
        cdf: Vec::with_capacity(grid_size * grid_size),
        cutoff,
    };
    let mut total = 0.0;
    for flat in 0..grid_size * grid_size {
        let raw = kde_eval_unchecked(kde, &proposal.cell_center(flat));
        let mass = if raw < cutoff { 0.0 } else { raw };
        proposal.probs.push(mass);
        total += mass;
    }
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::EmptyProposal { cutoff });
    }
    let mut acc = 0.0;
    for p in &mut proposal.probs {
        *p /= total;
        acc += *p;
        proposal.cdf.push(acc);
    }
    Ok(proposal)
}

/// One draw: a cell by inverse CDF, then a uniform jitter inside it.
/// Consumes exactly three uniforms.
pub fn sample_proposal(proposal: &GridProposal, rng: &mut Rng) -> [f64; 2] {
    let u: f64 = rng.gen();
    let flat = proposal
        .cdf
        .partition_point(|&c| c < u)
        .min(proposal.len() - 1);
    let (i1, i2) = (flat / proposal.size, flat % proposal.size);
    let j1: f64 = rng.gen();
    let j2: f64 = rng.gen();
    [
        proposal.lo.0 + (i1 as f64 + j1) * proposal.cell.0,
        proposal.lo.1 + (i2 as f64 + j2) * proposal.cell.1,
    ]
}

/// min{1, (f⋆·qₓ)/(fₓ·q⋆)} with the zero-denominator convention: a state
/// with no mass under the model or the proposal is always left.
pub fn acceptance_ratio(f_star: f64, q_x: f64, f_x: f64, q_star: f64) -> f64 {
    let denom = f_x * q_star;
    if denom == 0.0 {
        return 1.0;
    }
    (f_star * q_x / denom).min(1.0)
}

/// Acceptance probability for replacing `x` by `x_star` given the rest of
/// the diagram: both conditional densities share the conditioning on x's
/// neighbor set (and hence one normalization integral), and both proposal
/// masses come from the same fixed grid.
#[allow(clippy::too_many_arguments)]
pub fn acceptance_prob(
    x: &[f64; 2],
    x_star: &[f64; 2],
    context: &[[f64; 2]],
    params: &ModelParams,
    proposal: &GridProposal,
    kde: &Kde,
    quad: &QuadratureSpec,
    opts: EvalOptions,
) -> Result<f64> {
    acceptance_parts(x, x_star, context, params, proposal, kde, quad, opts).map(|(rho, _)| rho)
}

/// (ρ, hit-the-null-convention flag); the flag feeds the sweep's escape
/// counter.
#[allow(clippy::too_many_arguments)]
fn acceptance_parts(
    x: &[f64; 2],
    x_star: &[f64; 2],
    context: &[[f64; 2]],
    params: &ModelParams,
    proposal: &GridProposal,
    kde: &Kde,
    quad: &QuadratureSpec,
    opts: EvalOptions,
) -> Result<(f64, bool)> {
    let cond = Conditional::new(x, context, params, kde, quad, opts)?;
    let q_x = proposal.density_at(x);
    let q_star = proposal.density_at(x_star);
    if q_star == 0.0 {
        // Denominator vanishes: escape by convention.
        return Ok((1.0, true));
    }
    if q_x == 0.0 {
        return Ok((0.0, false));
    }
    let ln_fx = cond.log_density();
    let ln_fs = cond.log_density_at(x_star, kde_eval_unchecked(kde, x_star));
    let rho = ((ln_fs - ln_fx).exp() * (q_x / q_star)).min(1.0);
    Ok((rho, false))
}

/// Tally of one sweep over the diagram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub accepted: usize,
    /// Updates that took the zero-denominator escape.
    pub null_escapes: usize,
}

/// One sequential scan: points are visited in index order, each proposed a
/// replacement and updated in place, so later points see earlier moves.
/// Exactly one proposal draw and one acceptance decision per point.
#[allow(clippy::too_many_arguments)]
pub(crate) fn mcmc_sweep_points(
    points: &mut [[f64; 2]],
    params: &ModelParams,
    proposal: &GridProposal,
    kde: &Kde,
    quad: &QuadratureSpec,
    opts: EvalOptions,
    rng: &mut Rng,
    rho_override: Option<f64>,
) -> Result<SweepOutcome> {
    let n = points.len();
    if n <= params.k {
        return Err(Error::InvalidArgument(format!(
            "need more points than neighbors: N = {n}, K = {}",
            params.k
        )));
    }
    let mut context = Vec::with_capacity(n - 1);
    let mut accepted = 0;
    let mut null_escapes = 0;
    for k in 0..n {
        // Fixed draw order (proposal, then decision) keeps the stream
        // aligned for the forced-ρ test hook.
        let x_star = sample_proposal(proposal, rng);
        let u: f64 = rng.gen();
        let (rho, escaped) = match rho_override {
            Some(r) => (r, false),
            None => {
                context.clear();
                context.extend_from_slice(&points[..k]);
                context.extend_from_slice(&points[k + 1..]);
                acceptance_parts(
                    &points[k], &x_star, &context, params, proposal, kde, quad, opts,
                )?
            }
        };
        if escaped {
            null_escapes += 1;
        }
        if u < rho {
            points[k] = x_star;
            accepted += 1;
        }
    }
    Ok(SweepOutcome {
        accepted,
        null_escapes,
    })
}

/// One Metropolis–Hastings sweep over a diagram; returns the updated
/// diagram and the sweep tally.
pub fn mcmc_sweep(
    ppd: &ProjectedDiagram,
    params: &ModelParams,
    proposal: &GridProposal,
    kde: &Kde,
    quad: &QuadratureSpec,
    opts: EvalOptions,
    rng: &mut Rng,
) -> Result<(ProjectedDiagram, SweepOutcome)> {
    let mut points = ppd.points.clone();
    let outcome = mcmc_sweep_points(
        &mut points,
        params,
        proposal,
        kde,
        quad,
        opts,
        rng,
        None,
    )?;
    let updated = ProjectedDiagram::new(points, ppd.source_rank, ppd.convention)?;
    Ok((updated, outcome))
}

/// The replicated diagrams with per-sweep acceptance rates.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateSet {
    pub diagrams: Vec<PersistenceDiagram>,
    /// One entry per sweep, `burn_in × replicates` in total.
    pub acceptance_rates: Vec<f64>,
    pub null_escapes: usize,
}

/// Generates `replicates` diagrams from one: the chain starts at the
/// original PPD, runs `burn_in` sweeps between consecutive extractions, and
/// maps each extracted state back to birth/death coordinates. The KDE,
/// quadrature box, and proposal are derived from the original diagram, as
/// they were for the fit; cardinality never changes.
pub fn replicate(
    pd: &PersistenceDiagram,
    params: &ModelParams,
    config: &McmcConfig,
) -> Result<ReplicateSet> {
    config.validate()?;
    params.validate()?;
    let ppd = to_ppd(pd)?;
    let kde = fit_ppd_kde(&ppd)?;
    let quad = QuadratureSpec::from_ppd_kde(&ppd, &kde)?;
    let mut proposal = build_proposal(&ppd, &kde, config.grid_size, config.cutoff)?;
    let mut rng = rng_from_seed(config.seed);
    let mut points = ppd.points.clone();
    let n = points.len();
    let mut diagrams = Vec::with_capacity(config.replicates);
    let mut acceptance_rates = Vec::with_capacity(config.replicates * config.burn_in);
    let mut null_escapes = 0;
    for _ in 0..config.replicates {
        for _ in 0..config.burn_in {
            if config.rebuild_each_sweep {
                let state =
                    ProjectedDiagram::new(points.clone(), ppd.source_rank, ppd.convention)?;
                let state_kde = fit_ppd_kde(&state)?;
                proposal =
                    build_proposal_on_box(&state_kde, quad.x1, quad.x2, config.grid_size, config.cutoff)?;
            }
            let outcome = mcmc_sweep_points(
                &mut points,
                params,
                &proposal,
                &kde,
                &quad,
                config.opts,
                &mut rng,
                None,
            )?;
            acceptance_rates.push(outcome.accepted as f64 / n as f64);
            null_escapes += outcome.null_escapes;
        }
        let state = ProjectedDiagram::new(points.clone(), ppd.source_rank, ppd.convention)?;
        diagrams.push(from_ppd(&state)?);
    }
    Ok(ReplicateSet {
        diagrams,
        acceptance_rates,
        null_escapes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::FiltrationConvention;
    use crate::gibbs::Variant;
    use crate::kde::{fit_kde, kde_eval};
    use crate::synthetic::PointCloud;

    fn ppd(points: Vec<[f64; 2]>) -> ProjectedDiagram {
        ProjectedDiagram::new(points, 0, FiltrationConvention::SUPERLEVEL).unwrap()
    }

    fn scatter(n: usize, seed: u64) -> ProjectedDiagram {
        let mut rng = rng_from_seed(seed);
        ppd((0..n)
            .map(|_| [rng.gen_range(0.0..2.0), rng.gen_range(0.1..1.1)])
            .collect())
    }

    #[test]
    fn retained_cells_respect_the_cutoff_and_masses_normalize() {
        for seed in 0..5 {
            let d = scatter(14, seed);
            let kde = fit_ppd_kde(&d).unwrap();
            let proposal = build_proposal(&d, &kde, 25, DEFAULT_PROPOSAL_CUTOFF).unwrap();
            let total: f64 = proposal.probs().iter().sum();
            assert!((total - 1.0).abs() <= 1e-12, "mass {total} at seed {seed}");
            for (flat, &p) in proposal.probs().iter().enumerate() {
                if p > 0.0 {
                    let raw = kde_eval(&kde, &proposal.cell_center(flat)).unwrap();
                    assert!(raw >= DEFAULT_PROPOSAL_CUTOFF, "cell {flat} kept at {raw}");
                }
            }
        }
    }

    #[test]
    fn tight_kde_concentrates_mass_on_the_sample() {
        let sample_pt = [0.7, 0.4];
        let d = ppd(vec![sample_pt]);
        let cloud = PointCloud::new(2, vec![sample_pt.to_vec()]).unwrap();
        let kde = fit_kde(&cloud, Some(vec![0.02, 0.02])).unwrap();
        let proposal = build_proposal(&d, &kde, 5, DEFAULT_PROPOSAL_CUTOFF).unwrap();
        let argmax = proposal
            .probs()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(Some(argmax), proposal.cell_of(&sample_pt));

        // A cutoff above every off-peak cell leaves a single retained cell;
        // all draws land inside it.
        let single = build_proposal(&d, &kde, 5, 300.0).unwrap();
        assert_eq!(single.probs().iter().filter(|&&p| p > 0.0).count(), 1);
        let mut rng = rng_from_seed(3);
        for _ in 0..200 {
            let s = sample_proposal(&single, &mut rng);
            assert_eq!(single.cell_of(&s), Some(argmax));
            assert!(s[1] >= 0.0);
        }

        assert!(matches!(
            build_proposal(&d, &kde, 5, 1e9),
            Err(Error::EmptyProposal { cutoff }) if cutoff == 1e9
        ));
    }

    #[test]
    fn sampled_cell_frequencies_match_the_masses() {
        let d = scatter(10, 11);
        let kde = fit_ppd_kde(&d).unwrap();
        let proposal = build_proposal(&d, &kde, 8, DEFAULT_PROPOSAL_CUTOFF).unwrap();
        let mut rng = rng_from_seed(5);
        let draws = 100_000;
        let mut counts = vec![0usize; proposal.len()];
        for _ in 0..draws {
            let s = sample_proposal(&proposal, &mut rng);
            assert!(s[1] >= 0.0);
            counts[proposal.cell_of(&s).expect("sample inside lattice")] += 1;
        }
        let max_dev = counts
            .iter()
            .zip(proposal.probs())
            .map(|(&c, &p)| (c as f64 / draws as f64 - p).abs())
            .fold(0.0, f64::max);
        assert!(max_dev <= 0.01, "max deviation {max_dev}");
    }

    #[test]
    fn ratio_conventions_and_direct_values() {
        assert_eq!(acceptance_ratio(1.0, 1.0, 2.0, 1.0), 0.5);
        assert_eq!(acceptance_ratio(2.0, 1.0, 1.0, 1.0), 1.0);
        assert_eq!(acceptance_ratio(0.5, 0.0, 1.0, 1.0), 0.0);
        // Vanishing denominator: escape.
        assert_eq!(acceptance_ratio(0.1, 1.0, 0.0, 1.0), 1.0);
        assert_eq!(acceptance_ratio(0.1, 1.0, 1.0, 0.0), 1.0);
    }

    #[test]
    fn identity_and_flat_model_moves_always_accept() {
        let d = scatter(8, 2);
        let kde = fit_ppd_kde(&d).unwrap();
        let quad = QuadratureSpec::from_ppd_kde(&d, &kde).unwrap();
        let proposal = build_proposal(&d, &kde, 10, DEFAULT_PROPOSAL_CUTOFF).unwrap();
        let params = ModelParams::new(Variant::Modified, vec![0.2, -0.1], 0.8).unwrap();
        let context: Vec<[f64; 2]> = d.points[1..].to_vec();
        let x = d.points[0];

        let rho = acceptance_prob(
            &x,
            &x,
            &context,
            &params,
            &proposal,
            &kde,
            &quad,
            EvalOptions::default(),
        )
        .unwrap();
        assert_eq!(rho, 1.0, "identity move must always accept");

        // Θ = 0, α = 0 flattens the model, so the ratio reduces to the
        // proposal masses; within one cell it is exactly one.
        let flat = ModelParams::new(Variant::Original, vec![0.0, 0.0], 0.0).unwrap();
        let cell = proposal.cell_of(&x).unwrap();
        let near = proposal.cell_center(cell);
        let rho = acceptance_prob(
            &x,
            &near,
            &context,
            &flat,
            &proposal,
            &kde,
            &quad,
            EvalOptions::default(),
        )
        .unwrap();
        assert_eq!(rho, 1.0);

        // Across cells the flat-model ratio is exactly the mass ratio.
        let other = proposal
            .probs()
            .iter()
            .enumerate()
            .find(|&(i, &p)| p > 0.0 && i != cell)
            .unwrap()
            .0;
        let y = proposal.cell_center(other);
        let rho = acceptance_prob(
            &x,
            &y,
            &context,
            &flat,
            &proposal,
            &kde,
            &quad,
            EvalOptions::default(),
        )
        .unwrap();
        let expect = (proposal.probs()[cell] / proposal.probs()[other]).min(1.0);
        assert!((rho - expect).abs() <= 1e-12, "{rho} vs {expect}");
    }

    #[test]
    fn two_cell_chain_matches_its_stationary_law() {
        // Hand-specified target on two states with a uniform proposal; the
        // empirical occupancy after 1e5 Metropolis-Hastings steps must sit
        // within total variation 0.02 of the target.
        let f = [0.3, 0.7];
        let q = [0.5, 0.5];
        let mut rng = rng_from_seed(99);
        let mut state = 0usize;
        let mut counts = [0usize; 2];
        let steps = 100_000;
        for _ in 0..steps {
            let star = usize::from(rng.gen::<f64>() < q[1]);
            let rho = acceptance_ratio(f[star], q[state], f[state], q[star]);
            if rng.gen::<f64>() < rho {
                state = star;
            }
            counts[state] += 1;
        }
        let tv = 0.5
            * ((counts[0] as f64 / steps as f64 - f[0]).abs()
                + (counts[1] as f64 / steps as f64 - f[1]).abs());
        assert!(tv <= 0.02, "total variation {tv}");
    }

    #[test]
    fn forced_rejection_is_a_no_op_and_forced_acceptance_moves_everyone() {
        let d = scatter(9, 4);
        let kde = fit_ppd_kde(&d).unwrap();
        let quad = QuadratureSpec::from_ppd_kde(&d, &kde).unwrap();
        let proposal = build_proposal(&d, &kde, 12, DEFAULT_PROPOSAL_CUTOFF).unwrap();
        let params = ModelParams::new(Variant::Modified, vec![0.1], 0.5).unwrap();

        let mut frozen = d.points.clone();
        let mut rng = rng_from_seed(8);
        let out = mcmc_sweep_points(
            &mut frozen,
            &params,
            &proposal,
            &kde,
            &quad,
            EvalOptions::default(),
            &mut rng,
            Some(0.0),
        )
        .unwrap();
        assert_eq!(out.accepted, 0);
        assert_eq!(frozen, d.points, "rejected sweep must not move points");

        let mut moved = d.points.clone();
        let mut rng = rng_from_seed(8);
        let out = mcmc_sweep_points(
            &mut moved,
            &params,
            &proposal,
            &kde,
            &quad,
            EvalOptions::default(),
            &mut rng,
            Some(1.0),
        )
        .unwrap();
        assert_eq!(out.accepted, moved.len());
        assert!(moved.iter().all(|p| p[1] >= 0.0));
        // Same stream, so the accepted states are exactly the draws the
        // frozen sweep discarded.
        assert_ne!(moved, d.points);
    }

    #[test]
    fn sweeps_count_draws_and_propagate_model_errors() {
        let d = scatter(7, 6);
        let kde = fit_ppd_kde(&d).unwrap();
        let quad = QuadratureSpec::from_ppd_kde(&d, &kde).unwrap();
        let proposal = build_proposal(&d, &kde, 10, DEFAULT_PROPOSAL_CUTOFF).unwrap();
        let params = ModelParams::new(Variant::Modified, vec![0.1, 0.05], 0.5).unwrap();
        let mut rng = rng_from_seed(10);
        let (next, out) = mcmc_sweep(
            &d,
            &params,
            &proposal,
            &kde,
            &quad,
            EvalOptions::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(next.points.len(), d.points.len());
        assert!(out.accepted <= d.points.len());

        let too_many = ModelParams::new(Variant::Modified, vec![0.1; 7], 0.5).unwrap();
        assert!(matches!(
            mcmc_sweep(
                &d,
                &too_many,
                &proposal,
                &kde,
                &quad,
                EvalOptions::default(),
                &mut rng
            ),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn replication_conserves_cardinality_and_replays_bitwise() {
        let d = scatter(10, 12);
        let pd = from_ppd(&d).unwrap();
        let params = ModelParams::new(Variant::Modified, vec![0.3, -0.1], 0.6).unwrap();
        let config = McmcConfig {
            grid_size: 20,
            burn_in: 5,
            replicates: 3,
            seed: 21,
            ..McmcConfig::default()
        };
        let run = replicate(&pd, &params, &config).unwrap();
        assert_eq!(run.diagrams.len(), 3);
        assert_eq!(run.acceptance_rates.len(), 15);
        let kde = fit_ppd_kde(&d).unwrap();
        let quad = QuadratureSpec::from_ppd_kde(&d, &kde).unwrap();
        for rep in &run.diagrams {
            assert_eq!(rep.pairs.len(), pd.pairs.len());
            assert_eq!(rep.rank, pd.rank);
            let back = to_ppd(rep).unwrap();
            for p in &back.points {
                assert!(p[1] >= 0.0);
                assert!(p[0] >= quad.x1.0 && p[0] <= quad.x1.1);
                assert!(p[1] >= quad.x2.0 && p[1] <= quad.x2.1);
            }
        }
        // Acceptance rates are rates.
        assert!(run
            .acceptance_rates
            .iter()
            .all(|r| (0.0..=1.0).contains(r)));

        let again = replicate(&pd, &params, &config).unwrap();
        assert_eq!(run.diagrams, again.diagrams);
        assert_eq!(run.acceptance_rates, again.acceptance_rates);

        // Rebuilding the proposal every sweep changes the path but keeps
        // the invariants.
        let rebuilt = replicate(
            &pd,
            &params,
            &McmcConfig {
                rebuild_each_sweep: true,
                ..config
            },
        )
        .unwrap();
        assert_eq!(rebuilt.diagrams.len(), 3);
        assert!(rebuilt.diagrams.iter().all(|r| r.pairs.len() == pd.pairs.len()));
    }

    #[test]
    fn single_replicate_runs_exactly_the_burn_in() {
        let d = scatter(8, 13);
        let pd = from_ppd(&d).unwrap();
        let params = ModelParams::new(Variant::Original, vec![0.2], 0.0).unwrap();
        let config = McmcConfig {
            grid_size: 15,
            burn_in: 25,
            replicates: 1,
            seed: 1,
            ..McmcConfig::default()
        };
        let run = replicate(&pd, &params, &config).unwrap();
        assert_eq!(run.diagrams.len(), 1);
        assert_eq!(run.acceptance_rates.len(), 25);
    }

    #[test]
    fn config_validation_rejects_degenerate_settings() {
        let bad = [
            McmcConfig {
                grid_size: 1,
                ..McmcConfig::default()
            },
            McmcConfig {
                burn_in: 0,
                ..McmcConfig::default()
            },
            McmcConfig {
                replicates: 0,
                ..McmcConfig::default()
            },
            McmcConfig {
                cutoff: -0.5,
                ..McmcConfig::default()
            },
        ];
        for config in bad {
            assert!(matches!(
                config.validate(),
                Err(Error::InvalidArgument(_))
            ));
        }
        assert!(McmcConfig::default().validate().is_ok());
    }

    #[test]
    fn uniform_proposal_with_flat_model_accepts_everything() {
        // Hand-built uniform proposal over the box; with Θ = 0, α = 0 the
        // conditional density is flat too, so every ratio is exactly one.
        let d = scatter(6, 14);
        let kde = fit_ppd_kde(&d).unwrap();
        let quad = QuadratureSpec::from_ppd_kde(&d, &kde).unwrap();
        let size = 4usize;
        let len = size * size;
        let probs = vec![1.0 / len as f64; len];
        let cdf: Vec<f64> = probs
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        let uniform = GridProposal {
            lo: (quad.x1.0, quad.x2.0),
            cell: (
                (quad.x1.1 - quad.x1.0) / size as f64,
                (quad.x2.1 - quad.x2.0) / size as f64,
            ),
            size,
            probs,
            cdf,
            cutoff: 0.0,
        };
        let flat = ModelParams::new(Variant::Modified, vec![0.0, 0.0], 0.0).unwrap();
        let mut rng = rng_from_seed(15);
        let context: Vec<[f64; 2]> = d.points[1..].to_vec();
        for _ in 0..25 {
            let x_star = sample_proposal(&uniform, &mut rng);
            let rho = acceptance_prob(
                &d.points[0],
                &x_star,
                &context,
                &flat,
                &uniform,
                &kde,
                &quad,
                EvalOptions::default(),
            )
            .unwrap();
            assert_eq!(rho, 1.0);
        }
    }
}
