//! Nearest-neighbor Gibbs models on projected persistence diagrams.
//!
//! Two variants share the interaction energy Σₖ θₖ·(distance to the k-th
//! nearest neighbor). The original variant multiplies the density by
//! KDE(x)^α; the modified variant instead scales the energy by KDE(x)^α
//! inside the exponential. Conditional densities are self-normalized by
//! tensor-product trapezoidal quadrature over a finite box, and the
//! log-pseudolikelihood is the sum of per-point log conditionals.
//!
//! Inside the normalization integral the neighbor set of the integration
//! variable z is frozen to the anchor point's neighbors (the literal
//! reading of the conditional Hamiltonian). [`EvalOptions::renormalize_neighbors`]
//! switches to recomputing z's own nearest context points instead; both
//! behaviors are exercised by tests.

use serde::{Deserialize, Serialize};

use crate::diagram::ProjectedDiagram;
use crate::error::{Error, Result};
use crate::kde::{kde_eval_unchecked, Kde};
use crate::synthetic::PointCloud;
use crate::util;

/// KDE values are floored here before exponentiation so that KDE(x)=0 with
/// α>0 cannot produce 0⁰; the same constant is the degeneracy threshold for
/// normalization integrals.
pub const KDE_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Original,
    Modified,
}

impl Variant {
    /// The serialized (snake_case) name, for file names and CSV tags.
    pub fn name(self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::Modified => "modified",
        }
    }
}

/// Interaction model: cluster size K, weights θ₁..θ_K, and density exponent α.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub variant: Variant,
    #[serde(rename = "K")]
    pub k: usize,
    pub theta: Vec<f64>,
    pub alpha: f64,
}

impl ModelParams {
    pub fn new(variant: Variant, theta: Vec<f64>, alpha: f64) -> Result<Self> {
        let params = Self {
            variant,
            k: theta.len(),
            theta,
            alpha,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.theta.len() != self.k {
            return Err(Error::InvalidArgument(format!(
                "theta has {} entries for K = {}",
                self.theta.len(),
                self.k
            )));
        }
        if self.theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("theta must be finite".into()));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "alpha must be a nonnegative real, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Quadrature box over (x¹, x²) with per-axis node counts; realizes the
/// normalization integral over ℝ×ℝ₊ on a finite window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub x1: (f64, f64),
    pub x2: (f64, f64),
    pub nodes: (usize, usize),
}

pub const DEFAULT_QUAD_NODES: usize = 64;

impl QuadratureSpec {
    pub fn new(x1: (f64, f64), x2: (f64, f64), nodes: (usize, usize)) -> Result<Self> {
        let spec = Self { x1, x2, nodes };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in [self.x1, self.x2] {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "degenerate quadrature axis [{lo}, {hi}]"
                )));
            }
        }
        if self.x2.0 < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "x2 axis starts at {}, below the persistence half-plane",
                self.x2.0
            )));
        }
        if self.nodes.0 < 8 || self.nodes.1 < 8 {
            return Err(Error::InvalidArgument(format!(
                "quadrature needs at least 8 nodes per axis, got {:?}",
                self.nodes
            )));
        }
        Ok(())
    }

    /// Data range of the PPD inflated by 3 KDE bandwidths per axis, clipped
    /// below at x² = 0, with the default 64×64 nodes.
    pub fn from_ppd_kde(ppd: &ProjectedDiagram, kde: &Kde) -> Result<Self> {
        if ppd.is_empty() {
            return Err(Error::InvalidArgument(
                "cannot size a quadrature box from an empty diagram".into(),
            ));
        }
        let (h1, h2) = (kde.bandwidth()[0], kde.bandwidth()[1]);
        let lo = |j: usize| {
            ppd.points
                .iter()
                .map(|p| p[j])
                .fold(f64::INFINITY, f64::min)
        };
        let hi = |j: usize| {
            ppd.points
                .iter()
                .map(|p| p[j])
                .fold(f64::NEG_INFINITY, f64::max)
        };
        Self::new(
            (lo(0) - 3.0 * h1, hi(0) + 3.0 * h1),
            ((lo(1) - 3.0 * h2).max(0.0), hi(1) + 3.0 * h2),
            (DEFAULT_QUAD_NODES, DEFAULT_QUAD_NODES),
        )
    }

    pub fn area(&self) -> f64 {
        (self.x1.1 - self.x1.0) * (self.x2.1 - self.x2.0)
    }

    pub(crate) fn grid(&self) -> QuadGrid {
        QuadGrid::new(self)
    }
}

/// Materialized trapezoid rule: node coordinates and weights per axis.
pub(crate) struct QuadGrid {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
}

impl QuadGrid {
    fn new(spec: &QuadratureSpec) -> Self {
        let weights = |lo: f64, hi: f64, n: usize| {
            let h = (hi - lo) / (n - 1) as f64;
            let mut w = vec![h; n];
            w[0] = 0.5 * h;
            w[n - 1] = 0.5 * h;
            w
        };
        Self {
            x1: util::linspace(spec.x1.0, spec.x1.1, spec.nodes.0),
            x2: util::linspace(spec.x2.0, spec.x2.1, spec.nodes.1),
            w1: weights(spec.x1.0, spec.x1.1, spec.nodes.0),
            w2: weights(spec.x2.0, spec.x2.1, spec.nodes.1),
        }
    }

    pub fn len(&self) -> usize {
        self.x1.len() * self.x2.len()
    }

    /// Node coordinates in flat order (x2 axis fastest).
    pub fn node(&self, flat: usize) -> [f64; 2] {
        [self.x1[flat / self.x2.len()], self.x2[flat % self.x2.len()]]
    }
}

/// How conditional densities treat the neighbor set inside the
/// normalization integral.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// `false` (default): the anchor's K nearest neighbors stay frozen
    /// across the integration box — the conditional formula read literally.
    /// `true`: the integrand at z uses z's own K nearest context points
    /// instead. Fitted parameters differ between the two readings; chain
    /// acceptance ratios do not (the constant cancels).
    #[serde(default)]
    pub renormalize_neighbors: bool,
}

/// Per-point K-nearest-neighbor distances within the diagram itself;
/// entry (i, k) is the distance from point i to its (k+1)-th nearest other
/// point, rows nondecreasing.
pub fn knn_distances(ppd: &ProjectedDiagram, k: usize) -> Result<Vec<Vec<f64>>> {
    util::knn_distance_rows(&ppd.points, k)
}

#[inline]
fn kde_pow_alpha(v: f64, alpha: f64) -> f64 {
    v.max(KDE_FLOOR).powf(alpha)
}

#[inline]
fn interaction(theta: &[f64], dists: &[f64]) -> f64 {
    let mut e = 0.0;
    for (t, d) in theta.iter().zip(dists) {
        e += t * d;
    }
    e
}

/// Point's own energy term: the plain weighted distance sum for the
/// original variant, scaled by KDE(x)^α for the modified one.
pub fn local_energy(
    x: &[f64; 2],
    neighbor_dists: &[f64],
    params: &ModelParams,
    kde: &Kde,
) -> Result<f64> {
    params.validate()?;
    if neighbor_dists.len() != params.k {
        return Err(Error::InvalidArgument(format!(
            "{} neighbor distances for K = {}",
            neighbor_dists.len(),
            params.k
        )));
    }
    if neighbor_dists.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument(
            "neighbor distances must be sorted ascending".into(),
        ));
    }
    let e = interaction(&params.theta, neighbor_dists);
    Ok(match params.variant {
        Variant::Original => e,
        Variant::Modified => e * kde_pow_alpha(kde_eval_unchecked(kde, x), params.alpha),
    })
}

/// Unnormalized density at a location with the given neighbor distances.
#[inline]
fn numerator(params: &ModelParams, kde_v: f64, energy: f64) -> f64 {
    numerator_pow(params.variant, kde_pow_alpha(kde_v, params.alpha), energy)
}

/// Same numerator with KDE^α already computed; lets a Θ search at fixed α
/// hoist the power out of the node loop without changing a single bit.
#[inline]
fn numerator_pow(variant: Variant, kde_pow: f64, energy: f64) -> f64 {
    match variant {
        Variant::Original => kde_pow * (-energy).exp(),
        Variant::Modified => (-(energy * kde_pow)).exp(),
    }
}

#[inline]
fn ln_numerator(params: &ModelParams, kde_v: f64, energy: f64) -> f64 {
    match params.variant {
        Variant::Original => params.alpha * kde_v.max(KDE_FLOOR).ln() - energy,
        Variant::Modified => -(energy * kde_pow_alpha(kde_v, params.alpha)),
    }
}

/// The anchor's K nearest context points with their distances, ascending,
/// distance ties broken by context index.
fn nearest_context(x: &[f64; 2], context: &[[f64; 2]], k: usize) -> (Vec<[f64; 2]>, Vec<f64>) {
    let mut order: Vec<(f64, usize)> = context
        .iter()
        .enumerate()
        .map(|(j, c)| (util::euclid(x, c), j))
        .collect();
    order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    order.truncate(k);
    (
        order.iter().map(|&(_, j)| context[j]).collect(),
        order.iter().map(|&(d, _)| d).collect(),
    )
}

/// Distances from z to its K nearest context points, ascending.
fn knn_row(z: &[f64; 2], context: &[[f64; 2]], k: usize, out: &mut Vec<f64>) {
    out.clear();
    out.extend(context.iter().map(|c| util::euclid(z, c)));
    let kth = k - 1;
    out.select_nth_unstable_by(kth, f64::total_cmp);
    out.truncate(k);
    out.sort_unstable_by(f64::total_cmp);
}

/// Normalization integral of the numerator over the grid; `row` must fill
/// the neighbor-distance row for a flat node index. Accumulation order is
/// fixed (x2 axis fastest) so independently built inputs reproduce the sum
/// bitwise.
fn z_integral(
    params: &ModelParams,
    grid: &QuadGrid,
    kde_nodes: &[f64],
    mut row: impl FnMut(usize, &mut Vec<f64>),
) -> f64 {
    let mut sum = 0.0;
    let mut dists = Vec::with_capacity(params.k);
    let mut flat = 0;
    for (i1, w1) in grid.w1.iter().enumerate() {
        let _ = i1;
        for w2 in &grid.w2 {
            row(flat, &mut dists);
            let e = interaction(&params.theta, &dists);
            sum += w1 * w2 * numerator(params, kde_nodes[flat], e);
            flat += 1;
        }
    }
    sum
}

/// [`z_integral`] with KDE^α per node precomputed; same accumulation order,
/// bitwise-equal result.
fn z_integral_pow(
    theta: &[f64],
    variant: Variant,
    grid: &QuadGrid,
    pow_nodes: &[f64],
    mut row: impl FnMut(usize, &mut Vec<f64>),
) -> f64 {
    let mut sum = 0.0;
    let mut dists = Vec::with_capacity(theta.len());
    let mut flat = 0;
    for w1 in &grid.w1 {
        for w2 in &grid.w2 {
            row(flat, &mut dists);
            let e = interaction(theta, &dists);
            sum += w1 * w2 * numerator_pow(variant, pow_nodes[flat], e);
            flat += 1;
        }
    }
    sum
}

/// One point's conditional model given a fixed context: the anchor's
/// neighbor set and the normalization constant are computed once, so
/// densities of other locations under the same conditioning (as needed by
/// the sampler's acceptance ratio) share a single Z.
pub struct Conditional {
    params: ModelParams,
    neighbor_points: Vec<[f64; 2]>,
    neighbor_dists: Vec<f64>,
    kde_anchor: f64,
    ln_z: f64,
    z: f64,
}

impl Conditional {
    pub fn new(
        anchor: &[f64; 2],
        context: &[[f64; 2]],
        params: &ModelParams,
        kde: &Kde,
        quad: &QuadratureSpec,
        opts: EvalOptions,
    ) -> Result<Self> {
        params.validate()?;
        quad.validate()?;
        if kde.dim() != 2 {
            return Err(Error::InvalidArgument(format!(
                "model KDE must be 2-dimensional, got {}",
                kde.dim()
            )));
        }
        if context.len() < params.k {
            return Err(Error::InvalidArgument(format!(
                "context has {} points, K = {} requires more",
                context.len(),
                params.k
            )));
        }
        let (neighbor_points, neighbor_dists) = nearest_context(anchor, context, params.k);
        let grid = quad.grid();
        let kde_nodes: Vec<f64> = (0..grid.len())
            .map(|flat| kde_eval_unchecked(kde, &grid.node(flat)))
            .collect();
        let z = if opts.renormalize_neighbors {
            z_integral(params, &grid, &kde_nodes, |flat, out| {
                knn_row(&grid.node(flat), context, params.k, out)
            })
        } else {
            z_integral(params, &grid, &kde_nodes, |flat, out| {
                let zp = grid.node(flat);
                out.clear();
                out.extend(neighbor_points.iter().map(|nb| util::euclid(&zp, nb)));
            })
        };
        if !(z >= KDE_FLOOR) || !z.is_finite() {
            return Err(Error::DegenerateNormalization { z, point: None });
        }
        Ok(Self {
            params: params.clone(),
            neighbor_points,
            neighbor_dists,
            kde_anchor: kde_eval_unchecked(kde, anchor),
            ln_z: z.ln(),
            z,
        })
    }

    /// The normalization constant shared by every density under this
    /// conditioning.
    pub fn normalization(&self) -> f64 {
        self.z
    }

    /// Log density of a location under the anchor's conditioning (the
    /// frozen neighbor set), with the location's own KDE value.
    pub fn log_density_at(&self, p: &[f64; 2], kde_p: f64) -> f64 {
        let dists: Vec<f64> = self
            .neighbor_points
            .iter()
            .map(|nb| util::euclid(p, nb))
            .collect();
        ln_numerator(&self.params, kde_p, interaction(&self.params.theta, &dists)) - self.ln_z
    }

    /// Log density of the anchor itself.
    pub fn log_density(&self) -> f64 {
        ln_numerator(
            &self.params,
            self.kde_anchor,
            interaction(&self.params.theta, &self.neighbor_dists),
        ) - self.ln_z
    }
}

/// Log of the conditional density of `x` given the remaining points.
pub fn log_conditional_density(
    x: &[f64; 2],
    context: &[[f64; 2]],
    params: &ModelParams,
    kde: &Kde,
    quad: &QuadratureSpec,
    opts: EvalOptions,
) -> Result<f64> {
    Ok(Conditional::new(x, context, params, kde, quad, opts)?.log_density())
}

/// Conditional density of `x` given the remaining points; see
/// [`log_conditional_density`] for the exact log form.
pub fn conditional_density(
    x: &[f64; 2],
    context: &[[f64; 2]],
    params: &ModelParams,
    kde: &Kde,
    quad: &QuadratureSpec,
    opts: EvalOptions,
) -> Result<f64> {
    Ok(log_conditional_density(x, context, params, kde, quad, opts)?.exp())
}

/// Everything about a diagram that the pseudolikelihood needs and that does
/// not depend on (θ, α): per-point neighbor distances, KDE values at the
/// points and quadrature nodes, and per-point neighbor-distance rows at
/// every node. Lets a fit sweep parameters at a few milliseconds per
/// evaluation. Evaluations reproduce the uncached per-point path bitwise:
/// rows are precomputed by the same functions in the same order the direct
/// path uses.
pub struct PseudolikelihoodCache {
    k: usize,
    point_dists: Vec<Vec<f64>>,
    kde_points: Vec<f64>,
    kde_nodes: Vec<f64>,
    grid: QuadGrid,
    /// per point: node-major rows, `nodes × k` values
    rows: Vec<Vec<f64>>,
}

impl PseudolikelihoodCache {
    pub fn new(
        ppd: &ProjectedDiagram,
        k: usize,
        kde: &Kde,
        quad: &QuadratureSpec,
        opts: EvalOptions,
    ) -> Result<Self> {
        quad.validate()?;
        if kde.dim() != 2 {
            return Err(Error::InvalidArgument(format!(
                "model KDE must be 2-dimensional, got {}",
                kde.dim()
            )));
        }
        let n = ppd.len();
        if n <= k {
            return Err(Error::InvalidArgument(format!(
                "need more points than neighbors: N = {n}, K = {k}"
            )));
        }
        let grid = quad.grid();
        let kde_nodes: Vec<f64> = (0..grid.len())
            .map(|flat| kde_eval_unchecked(kde, &grid.node(flat)))
            .collect();
        let kde_points: Vec<f64> = ppd
            .points
            .iter()
            .map(|p| kde_eval_unchecked(kde, p))
            .collect();

        let mut point_dists = Vec::with_capacity(n);
        let mut rows = Vec::with_capacity(n);
        let mut context: Vec<[f64; 2]> = Vec::with_capacity(n - 1);
        let mut scratch = Vec::new();
        for i in 0..n {
            context.clear();
            context.extend(ppd.points.iter().take(i));
            context.extend(ppd.points.iter().skip(i + 1));
            let (nbr_points, nbr_dists) = nearest_context(&ppd.points[i], &context, k);
            let mut point_rows = Vec::with_capacity(grid.len() * k);
            for flat in 0..grid.len() {
                let zp = grid.node(flat);
                if opts.renormalize_neighbors {
                    knn_row(&zp, &context, k, &mut scratch);
                    point_rows.extend_from_slice(&scratch);
                } else {
                    point_rows.extend(nbr_points.iter().map(|nb| util::euclid(&zp, nb)));
                }
            }
            point_dists.push(nbr_dists);
            rows.push(point_rows);
        }
        Ok(Self {
            k,
            point_dists,
            kde_points,
            kde_nodes,
            grid,
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.point_dists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_dists.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// KDE^α over the data points and the quadrature nodes. A Θ search holds
    /// α fixed, so computing these once per α probe removes every `powf`
    /// from the inner loop; [`Self::eval_with_pow`] then reproduces
    /// [`Self::eval`] bitwise.
    pub(crate) fn pow_tables(&self, alpha: f64) -> (Vec<f64>, Vec<f64>) {
        let points = self
            .kde_points
            .iter()
            .map(|&v| kde_pow_alpha(v, alpha))
            .collect();
        let nodes = self
            .kde_nodes
            .iter()
            .map(|&v| kde_pow_alpha(v, alpha))
            .collect();
        (points, nodes)
    }

    /// [`Self::eval`] with the KDE powers supplied by [`Self::pow_tables`];
    /// `params.alpha` must be the α the tables were built at.
    pub(crate) fn eval_with_pow(
        &self,
        params: &ModelParams,
        pow_points: &[f64],
        pow_nodes: &[f64],
    ) -> Result<f64> {
        params.validate()?;
        if params.k != self.k {
            return Err(Error::InvalidArgument(format!(
                "cache built for K = {}, parameters have K = {}",
                self.k, params.k
            )));
        }
        debug_assert_eq!(pow_points.len(), self.kde_points.len());
        debug_assert_eq!(pow_nodes.len(), self.kde_nodes.len());
        let mut total = 0.0;
        for i in 0..self.len() {
            let rows = &self.rows[i];
            let z = z_integral_pow(
                &params.theta,
                params.variant,
                &self.grid,
                pow_nodes,
                |flat, out| {
                    out.clear();
                    out.extend_from_slice(&rows[flat * self.k..(flat + 1) * self.k]);
                },
            );
            if !(z >= KDE_FLOOR) || !z.is_finite() {
                return Err(Error::DegenerateNormalization { z, point: Some(i) });
            }
            let e = interaction(&params.theta, &self.point_dists[i]);
            let lnum = match params.variant {
                Variant::Original => params.alpha * self.kde_points[i].max(KDE_FLOOR).ln() - e,
                Variant::Modified => -(e * pow_points[i]),
            };
            total += lnum - z.ln();
        }
        Ok(total)
    }

    /// Log-pseudolikelihood at the given parameters: the sum over points of
    /// log conditional densities, each normalized by its own quadrature
    /// integral.
    pub fn eval(&self, params: &ModelParams) -> Result<f64> {
        params.validate()?;
        if params.k != self.k {
            return Err(Error::InvalidArgument(format!(
                "cache built for K = {}, parameters have K = {}",
                self.k, params.k
            )));
        }
        let mut total = 0.0;
        for i in 0..self.len() {
            let rows = &self.rows[i];
            let z = z_integral(params, &self.grid, &self.kde_nodes, |flat, out| {
                out.clear();
                out.extend_from_slice(&rows[flat * self.k..(flat + 1) * self.k]);
            });
            if !(z >= KDE_FLOOR) || !z.is_finite() {
                return Err(Error::DegenerateNormalization { z, point: Some(i) });
            }
            let e = interaction(&params.theta, &self.point_dists[i]);
            total += ln_numerator(params, self.kde_points[i], e) - z.ln();
        }
        Ok(total)
    }
}

/// Log-pseudolikelihood of a diagram under the model: the sum over points
/// of the log conditional density of each point given the others. Equals
/// the sum of [`log_conditional_density`] calls bitwise.
pub fn log_pseudolikelihood(
    ppd: &ProjectedDiagram,
    params: &ModelParams,
    kde: &Kde,
    quad: &QuadratureSpec,
    opts: EvalOptions,
) -> Result<f64> {
    params.validate()?;
    PseudolikelihoodCache::new(ppd, params.k, kde, quad, opts)?.eval(params)
}

/// KDE over the diagram's own points with plug-in bandwidths; the estimator
/// both model variants weight by and the proposal samples from.
pub fn fit_ppd_kde(ppd: &ProjectedDiagram) -> Result<Kde> {
    let cloud = PointCloud::new(2, ppd.points.iter().map(|p| p.to_vec()).collect())?;
    crate::kde::fit_kde(&cloud, None)
}
