//! Maximum pseudolikelihood fitting: a golden-section search over the
//! density exponent α wrapped around a derivative-free Θ search, BIC-based
//! selection of the cluster size K, and sign-pattern summaries of repeated
//! fits.

use serde::{Deserialize, Serialize};

use crate::diagram::ProjectedDiagram;
use crate::error::{Error, Result};
use crate::gibbs::{EvalOptions, ModelParams, PseudolikelihoodCache, QuadratureSpec, Variant};
use crate::kde::Kde;

/// Width the α search narrows its bracket to.
pub const ALPHA_TOL: f64 = 1e-3;
/// Θ search stops when the simplex's log-pseudolikelihood spread falls
/// below this.
pub const THETA_SPREAD_TOL: f64 = 1e-6;
pub const THETA_MAX_ITERS: usize = 500;
/// A Θ candidate with ‖Θ‖∞ beyond this aborts the fit; runaway searches
/// become diagnosable errors instead of overflow.
pub const DIVERGENCE_GUARD: f64 = 1e3;
pub const DEFAULT_ALPHA_RANGE: (f64, f64) = (0.0, 4.0);
/// Range retried automatically when the default range degenerates.
pub const FALLBACK_ALPHA_RANGE: (f64, f64) = (0.0, 1.0);

/// How the α search treats Θ at each probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Maximize the profile: a full Θ search at every α probe.
    #[default]
    Profile,
    /// Search α with Θ pinned at zero, then fit Θ once at the chosen α.
    OneShot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    #[serde(default = "default_alpha_range")]
    pub alpha_range: (f64, f64),
    #[serde(default)]
    pub mode: SearchMode,
    #[serde(default)]
    pub opts: EvalOptions,
}

fn default_alpha_range() -> (f64, f64) {
    DEFAULT_ALPHA_RANGE
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            alpha_range: DEFAULT_ALPHA_RANGE,
            mode: SearchMode::default(),
            opts: EvalOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Number of α values the outer search evaluated.
    pub alpha_probes: usize,
    /// Θ-search iterations summed over all α probes.
    pub theta_iterations: usize,
    /// Whether the Θ search at the returned α met the spread tolerance
    /// before the iteration cap.
    pub converged: bool,
    /// Whether the returned model came from the reduced α range after the
    /// configured range degenerated.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub params: ModelParams,
    pub logpl: f64,
    pub aic: f64,
    pub bic: f64,
    /// α range the returned estimate was searched on.
    pub alpha_range: (f64, f64),
    pub diagnostics: FitDiagnostics,
}

/// One row of a sign-pattern summary: '+' per nonnegative θ̂ coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub theta_signs: String,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub percent: f64,
    pub count: usize,
}

/// Distribution of estimates across repeated fits, grouped by the sign
/// pattern of Θ̂.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub rows: Vec<SummaryRow>,
}

impl EstimateSummary {
    /// CSV table with one row per sign pattern.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta_signs,alpha_min,alpha_max,percent,count\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.theta_signs, r.alpha_min, r.alpha_max, r.percent, r.count
            ));
        }
        out
    }
}

const INVPHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section maximization of `f` on [lo, hi] to bracket width `tol`.
/// Every evaluated abscissa is appended to `probed`; any probe error aborts
/// the search. Returns the best probe seen (first one on ties). An interval
/// no wider than `tol` is evaluated once at `lo`.
fn golden_max<P>(
    lo: f64,
    hi: f64,
    tol: f64,
    probed: &mut Vec<f64>,
    mut f: impl FnMut(f64) -> Result<(f64, P)>,
) -> Result<(f64, f64, P)> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "degenerate search interval [{lo}, {hi}]"
        )));
    }
    let mut best: Option<(f64, f64, P)> = None;
    let mut eval = |x: f64, best: &mut Option<(f64, f64, P)>, probed: &mut Vec<f64>| -> Result<f64> {
        probed.push(x);
        let (fx, payload) = f(x)?;
        if best.as_ref().is_none_or(|b| fx > b.1) {
            *best = Some((x, fx, payload));
        }
        Ok(fx)
    };
    if hi - lo <= tol {
        eval(lo, &mut best, probed)?;
        let (x, fx, p) = best.unwrap();
        return Ok((x, fx, p));
    }
    let mut a = lo;
    let mut b = hi;
    let mut x1 = b - INVPHI * (b - a);
    let mut x2 = a + INVPHI * (b - a);
    let mut f1 = eval(x1, &mut best, probed)?;
    let mut f2 = eval(x2, &mut best, probed)?;
    while b - a > tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INVPHI * (b - a);
            f1 = eval(x1, &mut best, probed)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INVPHI * (b - a);
            f2 = eval(x2, &mut best, probed)?;
        }
    }
    let (x, fx, p) = best.unwrap();
    Ok((x, fx, p))
}

struct ThetaFit {
    theta: Vec<f64>,
    logpl: f64,
    iterations: usize,
    converged: bool,
}

/// Nelder–Mead maximization of the log-pseudolikelihood over Θ at fixed α,
/// from `init` with an axis step of 0.25. Reflection 1, expansion 2,
/// contraction 0.5, shrink 0.5; stops when the vertex spread drops below
/// [`THETA_SPREAD_TOL`] or after [`THETA_MAX_ITERS`] iterations.
fn theta_search(
    cache: &PseudolikelihoodCache,
    variant: Variant,
    alpha: f64,
    pow_points: &[f64],
    pow_nodes: &[f64],
    init: &[f64],
) -> Result<ThetaFit> {
    let k = cache.k();
    debug_assert_eq!(init.len(), k);
    let eval = |theta: &[f64]| -> Result<f64> {
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::DivergingEstimate {
                norm: f64::INFINITY,
                guard: DIVERGENCE_GUARD,
            });
        }
        let norm = theta.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        if norm > DIVERGENCE_GUARD {
            return Err(Error::DivergingEstimate {
                norm,
                guard: DIVERGENCE_GUARD,
            });
        }
        let params = ModelParams {
            variant,
            k,
            theta: theta.to_vec(),
            alpha,
        };
        cache.eval_with_pow(&params, pow_points, pow_nodes)
    };

    // K+1 vertices: the start point and one axis perturbation per coordinate.
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(k + 1);
    simplex.push((init.to_vec(), eval(init)?));
    for i in 0..k {
        let mut v = init.to_vec();
        v[i] += 0.25;
        let fv = eval(&v)?;
        simplex.push((v, fv));
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < THETA_MAX_ITERS {
        // Best first; stable sort keeps insertion order on exact ties.
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        if simplex[0].1 - simplex[k].1 < THETA_SPREAD_TOL {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; k];
        for (v, _) in &simplex[..k] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x;
            }
        }
        for c in &mut centroid {
            *c /= k as f64;
        }
        let worst = simplex[k].clone();
        let blend = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = blend(1.0);
        let fr = eval(&xr)?;
        if fr > simplex[0].1 {
            let xe = blend(2.0);
            let fe = eval(&xe)?;
            simplex[k] = if fe > fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr > simplex[k - 1].1 {
            simplex[k] = (xr, fr);
            continue;
        }
        let xc = if fr > worst.1 { blend(0.5) } else { blend(-0.5) };
        let fc = eval(&xc)?;
        if fc > fr.max(worst.1) {
            simplex[k] = (xc, fc);
            continue;
        }
        // Shrink toward the best vertex.
        let best = simplex[0].0.clone();
        for (v, fv) in &mut simplex[1..] {
            for (x, b) in v.iter_mut().zip(&best) {
                *x = b + 0.5 * (*x - b);
            }
            *fv = eval(v)?;
        }
    }
    simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
    let (theta, logpl) = simplex.swap_remove(0);
    Ok(ThetaFit {
        theta,
        logpl,
        iterations,
        converged,
    })
}

struct AlphaSearch {
    alpha: f64,
    theta: Vec<f64>,
    logpl: f64,
    alpha_probes: usize,
    theta_iterations: usize,
    converged: bool,
}

/// Outer α search on `range`; every probe failure (degenerate normalization,
/// diverging Θ, …) aborts the whole range with a fit-failure carrying the
/// probed α values.
fn search_alpha(
    cache: &PseudolikelihoodCache,
    variant: Variant,
    range: (f64, f64),
    mode: SearchMode,
) -> Result<AlphaSearch> {
    let (lo, hi) = range;
    if !(lo >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha range must start at a nonnegative value, got {lo}"
        )));
    }
    let k = cache.k();
    let zeros = vec![0.0; k];
    let mut probed = Vec::new();
    let mut theta_iterations = 0;

    let fail = |probed: Vec<f64>, e: Error| Error::FitFailure {
        lo,
        hi,
        probed,
        cause: e.to_string(),
    };

    match mode {
        SearchMode::Profile => {
            let probe = |alpha: f64| -> Result<(f64, ThetaFit)> {
                let (pow_points, pow_nodes) = cache.pow_tables(alpha);
                let fit = theta_search(cache, variant, alpha, &pow_points, &pow_nodes, &zeros)?;
                Ok((fit.logpl, fit))
            };
            match golden_max(lo, hi, ALPHA_TOL, &mut probed, |a| {
                let r = probe(a);
                if let Ok((_, fit)) = &r {
                    theta_iterations += fit.iterations;
                }
                r
            }) {
                Ok((alpha, _, fit)) => Ok(AlphaSearch {
                    alpha,
                    theta: fit.theta,
                    logpl: fit.logpl,
                    alpha_probes: probed.len(),
                    theta_iterations,
                    converged: fit.converged,
                }),
                Err(e @ Error::InvalidArgument(_)) => Err(e),
                Err(e) => Err(fail(probed, e)),
            }
        }
        SearchMode::OneShot => {
            let searched = golden_max(lo, hi, ALPHA_TOL, &mut probed, |alpha| {
                let (pow_points, pow_nodes) = cache.pow_tables(alpha);
                let params = ModelParams {
                    variant,
                    k,
                    theta: zeros.clone(),
                    alpha,
                };
                cache
                    .eval_with_pow(&params, &pow_points, &pow_nodes)
                    .map(|v| (v, ()))
            });
            let alpha = match searched {
                Ok((alpha, _, ())) => alpha,
                Err(e @ Error::InvalidArgument(_)) => return Err(e),
                Err(e) => return Err(fail(probed, e)),
            };
            let (pow_points, pow_nodes) = cache.pow_tables(alpha);
            let fit = theta_search(cache, variant, alpha, &pow_points, &pow_nodes, &zeros)
                .map_err(|e| fail(probed.clone(), e))?;
            Ok(AlphaSearch {
                alpha,
                theta: fit.theta,
                logpl: fit.logpl,
                alpha_probes: probed.len(),
                theta_iterations: fit.iterations,
                converged: fit.converged,
            })
        }
    }
}

/// Maximizer of the profile log-pseudolikelihood α ↦ max_Θ logPL(α, Θ) on
/// `range`, to a bracket width of [`ALPHA_TOL`].
pub fn fit_alpha(
    ppd: &ProjectedDiagram,
    variant: Variant,
    k: usize,
    range: (f64, f64),
    kde: &Kde,
    quad: &QuadratureSpec,
    opts: EvalOptions,
) -> Result<f64> {
    let cache = PseudolikelihoodCache::new(ppd, k, kde, quad, opts)?;
    Ok(search_alpha(&cache, variant, range, SearchMode::Profile)?.alpha)
}

/// Θ maximizing the log-pseudolikelihood at fixed α, from `init` (zeros by
/// default), with the value attained. The returned value reproduces
/// [`crate::gibbs::log_pseudolikelihood`] at the fitted parameters bitwise.
pub fn fit_theta(
    ppd: &ProjectedDiagram,
    variant: Variant,
    k: usize,
    alpha: f64,
    kde: &Kde,
    quad: &QuadratureSpec,
    init: Option<Vec<f64>>,
    opts: EvalOptions,
) -> Result<(Vec<f64>, f64)> {
    let init = init.unwrap_or_else(|| vec![0.0; k]);
    if init.len() != k {
        return Err(Error::InvalidArgument(format!(
            "initial theta has {} entries for K = {k}",
            init.len()
        )));
    }
    let cache = PseudolikelihoodCache::new(ppd, k, kde, quad, opts)?;
    let (pow_points, pow_nodes) = cache.pow_tables(alpha);
    let fit = theta_search(&cache, variant, alpha, &pow_points, &pow_nodes, &init)?;
    Ok((fit.theta, fit.logpl))
}

/// Full fit of one variant at one cluster size: α search (outer) with Θ
/// search (inner), AIC/BIC filled from the attained log-pseudolikelihood.
/// If the configured α range fails everywhere, the search is retried once
/// on [`FALLBACK_ALPHA_RANGE`] and the fallback is recorded.
pub fn fit_model(
    ppd: &ProjectedDiagram,
    variant: Variant,
    k: usize,
    kde: &Kde,
    quad: &QuadratureSpec,
    config: &FitConfig,
) -> Result<FittedModel> {
    let cache = PseudolikelihoodCache::new(ppd, k, kde, quad, config.opts)?;
    let (search, range, fallback) =
        match search_alpha(&cache, variant, config.alpha_range, config.mode) {
            Ok(s) => (s, config.alpha_range, false),
            Err(Error::FitFailure { .. }) if config.alpha_range != FALLBACK_ALPHA_RANGE => {
                let s = search_alpha(&cache, variant, FALLBACK_ALPHA_RANGE, config.mode)?;
                (s, FALLBACK_ALPHA_RANGE, true)
            }
            Err(e) => return Err(e),
        };

    let n = ppd.len() as f64;
    let n_params = (k + 1) as f64;
    let logpl = search.logpl;
    Ok(FittedModel {
        params: ModelParams {
            variant,
            k,
            theta: search.theta,
            alpha: search.alpha,
        },
        logpl,
        aic: 2.0 * n_params - 2.0 * logpl,
        bic: n_params * n.ln() - 2.0 * logpl,
        alpha_range: range,
        diagnostics: FitDiagnostics {
            alpha_probes: search.alpha_probes,
            theta_iterations: search.theta_iterations,
            converged: search.converged,
            fallback,
        },
    })
}

/// Fits every candidate K and keeps the model minimizing BIC, ties toward
/// smaller K. Fails only if every candidate fails, with the per-K causes.
pub fn select_k(
    ppd: &ProjectedDiagram,
    variant: Variant,
    candidates: &[usize],
    kde: &Kde,
    quad: &QuadratureSpec,
    config: &FitConfig,
) -> Result<FittedModel> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument(
            "no candidate cluster sizes to select over".into(),
        ));
    }
    let mut fitted = Vec::new();
    let mut failures = Vec::new();
    for &k in candidates {
        match fit_model(ppd, variant, k, kde, quad, config) {
            Ok(m) => fitted.push(m),
            Err(e) => failures.push(format!("K = {k}: {e}")),
        }
    }
    pick_best(fitted).ok_or_else(|| Error::SelectionFailed(failures.join("; ")))
}

/// Minimum-BIC model, ties broken toward smaller K.
fn pick_best(models: Vec<FittedModel>) -> Option<FittedModel> {
    models
        .into_iter()
        .min_by(|a, b| a.bic.total_cmp(&b.bic).then(a.params.k.cmp(&b.params.k)))
}

/// Groups fitted models by the sign pattern of Θ̂ ('+' for θ̂ ≥ 0) and
/// reports each group's α̂ range and share. Rows are ordered by descending
/// frequency, then pattern.
pub fn summarize_estimates(models: &[FittedModel]) -> Result<EstimateSummary> {
    let first = models
        .first()
        .ok_or_else(|| Error::InvalidArgument("no models to summarize".into()))?;
    if models.iter().any(|m| {
        m.params.variant != first.params.variant || m.params.k != first.params.k
    }) {
        return Err(Error::InvalidArgument(
            "summary requires models sharing variant and K".into(),
        ));
    }
    let mut groups: std::collections::BTreeMap<String, (usize, f64, f64)> =
        std::collections::BTreeMap::new();
    for m in models {
        let pattern: String = m
            .params
            .theta
            .iter()
            .map(|&t| if t >= 0.0 { '+' } else { '-' })
            .collect();
        let entry = groups
            .entry(pattern)
            .or_insert((0, f64::INFINITY, f64::NEG_INFINITY));
        entry.0 += 1;
        entry.1 = entry.1.min(m.params.alpha);
        entry.2 = entry.2.max(m.params.alpha);
    }
    let total = models.len() as f64;
    let mut rows: Vec<SummaryRow> = groups
        .into_iter()
        .map(|(theta_signs, (count, alpha_min, alpha_max))| SummaryRow {
            theta_signs,
            alpha_min,
            alpha_max,
            percent: 100.0 * count as f64 / total,
            count,
        })
        .collect();
    rows.sort_by(|a, b| b.count.cmp(&a.count).then(a.theta_signs.cmp(&b.theta_signs)));
    Ok(EstimateSummary { rows })
}
