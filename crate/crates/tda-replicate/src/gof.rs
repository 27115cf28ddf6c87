//! Goodness-of-fit machinery: bottleneck and Wasserstein distances between
//! diagrams (diagonal-augmented, L∞ ground metric, solved exactly), nearest-
//! neighbor distance statistics, and per-replicate reports.

use serde::{Deserialize, Serialize};

use crate::diagram::PersistenceDiagram;
use crate::error::{Error, Result};
use crate::gibbs::Variant;
use crate::util;

#[inline]
fn linf(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).abs().max((a[1] - b[1]).abs())
}

/// L∞ distance from a point to the diagonal (half its persistence).
#[inline]
fn diag_cost(p: &[f64; 2]) -> f64 {
    (p[0] - p[1]).abs() / 2.0
}

fn as_points(pd: &PersistenceDiagram) -> Vec<[f64; 2]> {
    pd.pairs.iter().map(|p| [p.birth, p.death]).collect()
}

fn check_conventions(pd1: &PersistenceDiagram, pd2: &PersistenceDiagram) -> Result<()> {
    if pd1.convention != pd2.convention {
        return Err(Error::InvalidArgument(
            "cannot compare diagrams built under different filtration directions".into(),
        ));
    }
    Ok(())
}

/// Bottleneck distance: the smallest ε admitting a perfect matching between
/// the diagrams (points may match the diagonal at half their persistence)
/// with every matched pair within L∞ distance ε. Exact: the answer is one
/// of the finitely many candidate costs, found by binary search with a
/// bipartite feasibility check at each probe.
pub fn bottleneck(pd1: &PersistenceDiagram, pd2: &PersistenceDiagram) -> Result<f64> {
    check_conventions(pd1, pd2)?;
    let a = as_points(pd1);
    let b = as_points(pd2);
    if a.is_empty() && b.is_empty() {
        return Ok(0.0);
    }
    let mut candidates = vec![0.0];
    for p in &a {
        candidates.push(diag_cost(p));
        for q in &b {
            candidates.push(linf(p, q));
        }
    }
    for q in &b {
        candidates.push(diag_cost(q));
    }
    candidates.sort_unstable_by(f64::total_cmp);
    candidates.dedup();
    // Smallest feasible candidate; feasibility is monotone in the threshold.
    let mut lo = 0usize;
    let mut hi = candidates.len() - 1;
    debug_assert!(matching_feasible(&a, &b, candidates[hi]));
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if matching_feasible(&a, &b, candidates[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(candidates[lo])
}

/// Is there a perfect matching of the diagonal-augmented diagrams using
/// only pairs at L∞ cost ≤ t? Left side: points of `a` then one diagonal
/// slot per point of `b`; right side: points of `b` then one slot per point
/// of `a`. Kuhn's augmenting-path matching.
fn matching_feasible(a: &[[f64; 2]], b: &[[f64; 2]], t: f64) -> bool {
    let (n1, n2) = (a.len(), b.len());
    let n = n1 + n2;
    let edge = |l: usize, r: usize| -> bool {
        match (l < n1, r < n2) {
            (true, true) => linf(&a[l], &b[r]) <= t,
            (true, false) => diag_cost(&a[l]) <= t,
            (false, true) => diag_cost(&b[r]) <= t,
            (false, false) => true,
        }
    };
    let mut matched_right: Vec<Option<usize>> = vec![None; n];
    fn augment(
        l: usize,
        n: usize,
        edge: &dyn Fn(usize, usize) -> bool,
        visited: &mut [bool],
        matched_right: &mut [Option<usize>],
    ) -> bool {
        for r in 0..n {
            if !visited[r] && edge(l, r) {
                visited[r] = true;
                if matched_right[r].is_none()
                    || augment(matched_right[r].unwrap(), n, edge, visited, matched_right)
                {
                    matched_right[r] = Some(l);
                    return true;
                }
            }
        }
        false
    }
    for l in 0..n {
        let mut visited = vec![false; n];
        if !augment(l, n, &edge, &mut visited, &mut matched_right) {
            return false;
        }
    }
    true
}

/// Wasserstein distance of order p ≥ 1: the minimum over diagonal-augmented
/// matchings of (Σ cost^p)^{1/p} with L∞ ground costs, solved exactly as an
/// assignment problem on the (n1+n2)² augmented cost matrix.
pub fn wasserstein(pd1: &PersistenceDiagram, pd2: &PersistenceDiagram, p: f64) -> Result<f64> {
    check_conventions(pd1, pd2)?;
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "Wasserstein order must be a real ≥ 1, got {p}"
        )));
    }
    let mut a = as_points(pd1);
    let mut b = as_points(pd2);
    // Canonical argument order makes the distance exactly symmetric: ties
    // between optimal assignments could otherwise sum in different orders.
    let key = |pts: &[[f64; 2]]| {
        (
            pts.len(),
            pts.iter()
                .flat_map(|p| p.iter().map(|v| v.to_bits()))
                .collect::<Vec<u64>>(),
        )
    };
    if key(&a) > key(&b) {
        std::mem::swap(&mut a, &mut b);
    }
    let (n1, n2) = (a.len(), b.len());
    let n = n1 + n2;
    if n == 0 {
        return Ok(0.0);
    }
    let pow = |c: f64| if p == 1.0 { c } else { c.powf(p) };
    let mut cost = vec![vec![0.0; n]; n];
    for (i, pa) in a.iter().enumerate() {
        let to_diag = pow(diag_cost(pa));
        for j in 0..n {
            cost[i][j] = if j < n2 { pow(linf(pa, &b[j])) } else { to_diag };
        }
    }
    for (j, pb) in b.iter().enumerate() {
        let to_diag = pow(diag_cost(pb));
        for row in cost.iter_mut().skip(n1) {
            row[j] = to_diag;
        }
    }
    let total = assignment_min_cost(&cost);
    Ok(if p == 1.0 { total } else { total.powf(1.0 / p) })
}

/// Minimum-cost perfect assignment on a square matrix: the shortest-
/// augmenting-path form of the Hungarian algorithm with row/column
/// potentials, O(n³). Returns the sum of the selected entries.
fn assignment_min_cost(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    if n == 0 {
        return 0.0;
    }
    // 1-based arrays; p[j] is the row matched to column j, 0 when free.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| cost[p[j] - 1][j - 1]).sum()
}

/// Mean distance to the k-th nearest other diagram point, for each k in
/// `orders`, measured in birth/death coordinates.
pub fn nn_stats(pd: &PersistenceDiagram, orders: &[usize]) -> Result<Vec<f64>> {
    nn_stats_points(&as_points(pd), orders)
}

/// [`nn_stats`] on raw coordinates, usable on projected diagrams as well.
pub fn nn_stats_points(points: &[[f64; 2]], orders: &[usize]) -> Result<Vec<f64>> {
    if orders.is_empty() || orders.iter().any(|&k| k == 0) {
        return Err(Error::InvalidArgument(
            "neighbor orders must be positive".into(),
        ));
    }
    let kmax = *orders.iter().max().unwrap();
    let rows = util::knn_distance_rows(points, kmax)?;
    let n = points.len() as f64;
    Ok(orders
        .iter()
        .map(|&k| rows.iter().map(|row| row[k - 1]).sum::<f64>() / n)
        .collect())
}

/// The neighbor orders the study reports.
pub const NN_ORDERS: [usize; 3] = [1, 2, 3];

/// Which model/sampler settings a report row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GofTags {
    pub variant: Variant,
    pub grid_size: usize,
    pub burn_in: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairDistances {
    pub bottleneck: f64,
    pub wasserstein: f64,
}

/// Distances and NN statistics for an aligned list of (real, simulated)
/// diagram pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub tags: GofTags,
    pub per_replicate: Vec<PairDistances>,
    /// Per real diagram: mean 1st/2nd/3rd NN distances.
    pub real_nn: Vec<[f64; 3]>,
    /// Per simulated diagram, aligned with `real_nn`.
    pub sim_nn: Vec<[f64; 3]>,
}

impl GofReport {
    pub fn median_bottleneck(&self) -> f64 {
        median(self.per_replicate.iter().map(|p| p.bottleneck).collect())
    }

    pub fn median_wasserstein(&self) -> f64 {
        median(self.per_replicate.iter().map(|p| p.wasserstein).collect())
    }

    /// Long-format CSV: replicate, metric, value, variant, grid, burn-in.
    pub fn to_csv(&self) -> String {
        let variant = self.tags.variant.name();
        let mut out = String::from("replicate,metric,value,variant,grid_size,burn_in\n");
        let mut push = |i: usize, metric: &str, value: f64| {
            out.push_str(&format!(
                "{i},{metric},{value},{variant},{},{}\n",
                self.tags.grid_size, self.tags.burn_in
            ));
        };
        for (i, d) in self.per_replicate.iter().enumerate() {
            push(i, "bottleneck", d.bottleneck);
            push(i, "wasserstein", d.wasserstein);
            for (k, (r, s)) in self.real_nn[i].iter().zip(&self.sim_nn[i]).enumerate() {
                push(i, &format!("nn{}_real", k + 1), *r);
                push(i, &format!("nn{}_sim", k + 1), *s);
            }
        }
        out
    }
}

/// Median with the even-count average convention; NaN on empty input.
pub fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_unstable_by(f64::total_cmp);
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        0.5 * (xs[mid - 1] + xs[mid])
    }
}

/// Pairs each real diagram with its simulated counterpart: bottleneck and
/// order-1 Wasserstein per pair, NN means per diagram.
pub fn gof_report(
    real: &[PersistenceDiagram],
    sim: &[PersistenceDiagram],
    tags: GofTags,
) -> Result<GofReport> {
    if real.len() != sim.len() {
        return Err(Error::InvalidArgument(format!(
            "{} real diagrams against {} simulated",
            real.len(),
            sim.len()
        )));
    }
    let mut per_replicate = Vec::with_capacity(real.len());
    let mut real_nn = Vec::with_capacity(real.len());
    let mut sim_nn = Vec::with_capacity(real.len());
    for (r, s) in real.iter().zip(sim) {
        per_replicate.push(PairDistances {
            bottleneck: bottleneck(r, s)?,
            wasserstein: wasserstein(r, s, 1.0)?,
        });
        let rn = nn_stats(r, &NN_ORDERS)?;
        let sn = nn_stats(s, &NN_ORDERS)?;
        real_nn.push([rn[0], rn[1], rn[2]]);
        sim_nn.push([sn[0], sn[1], sn[2]]);
    }
    Ok(GofReport {
        tags,
        per_replicate,
        real_nn,
        sim_nn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::{DiagramPoint, FiltrationConvention};
    use proptest::prelude::*;
    use rand::Rng as _;

    fn pd(points: &[(f64, f64)], convention: FiltrationConvention) -> PersistenceDiagram {
        let pairs = points
            .iter()
            .map(|&(b, d)| DiagramPoint::new(b, d))
            .collect();
        PersistenceDiagram::new(0, pairs, convention).unwrap()
    }

    fn sub(points: &[(f64, f64)]) -> PersistenceDiagram {
        pd(points, FiltrationConvention::SUBLEVEL)
    }

    /// All augmented matchings by brute force: every subset of each diagram
    /// goes to the diagonal, the rest carry a bijection. Returns the
    /// minimal max-cost and the minimal summed cost.
    fn oracle(a: &[[f64; 2]], b: &[[f64; 2]]) -> (f64, f64) {
        fn perms(
            a_rest: &[usize],
            b_rest: &mut Vec<usize>,
            chosen: &mut Vec<(usize, usize)>,
            a: &[[f64; 2]],
            b: &[[f64; 2]],
            base_max: f64,
            base_sum: f64,
            best: &mut (f64, f64),
        ) {
            if a_rest.is_empty() {
                best.0 = best.0.min(base_max);
                best.1 = best.1.min(base_sum);
                return;
            }
            let i = a_rest[0];
            for pos in 0..b_rest.len() {
                let j = b_rest.remove(pos);
                chosen.push((i, j));
                let c = linf(&a[i], &b[j]);
                perms(
                    &a_rest[1..],
                    b_rest,
                    chosen,
                    a,
                    b,
                    base_max.max(c),
                    base_sum + c,
                    best,
                );
                chosen.pop();
                b_rest.insert(pos, j);
            }
        }

        let (n1, n2) = (a.len(), b.len());
        let mut best = (f64::INFINITY, f64::INFINITY);
        for mask1 in 0..1u32 << n1 {
            for mask2 in 0..1u32 << n2 {
                let a_kept: Vec<usize> =
                    (0..n1).filter(|i| mask1 & (1 << i) == 0).collect();
                let b_kept: Vec<usize> =
                    (0..n2).filter(|j| mask2 & (1 << j) == 0).collect();
                if a_kept.len() != b_kept.len() {
                    continue;
                }
                let mut base_max = 0.0f64;
                let mut base_sum = 0.0f64;
                for i in 0..n1 {
                    if mask1 & (1 << i) != 0 {
                        let c = diag_cost(&a[i]);
                        base_max = base_max.max(c);
                        base_sum += c;
                    }
                }
                for j in 0..n2 {
                    if mask2 & (1 << j) != 0 {
                        let c = diag_cost(&b[j]);
                        base_max = base_max.max(c);
                        base_sum += c;
                    }
                }
                let mut b_rest = b_kept.clone();
                perms(
                    &a_kept,
                    &mut b_rest,
                    &mut Vec::new(),
                    a,
                    b,
                    base_max,
                    base_sum,
                    &mut best,
                );
            }
        }
        best
    }

    #[test]
    fn identical_diagrams_are_at_distance_zero() {
        let d = sub(&[(0.0, 2.0), (1.0, 4.0), (0.5, 0.9)]);
        assert_eq!(bottleneck(&d, &d).unwrap(), 0.0);
        assert_eq!(wasserstein(&d, &d, 1.0).unwrap(), 0.0);
        let empty = sub(&[]);
        assert_eq!(bottleneck(&empty, &empty).unwrap(), 0.0);
        assert_eq!(wasserstein(&empty, &empty, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn lone_point_matches_the_diagonal() {
        let one = sub(&[(0.0, 2.0)]);
        let none = sub(&[]);
        assert_eq!(bottleneck(&one, &none).unwrap(), 1.0);
        assert_eq!(bottleneck(&none, &one).unwrap(), 1.0);
        assert_eq!(wasserstein(&one, &none, 1.0).unwrap(), 1.0);
        assert_eq!(wasserstein(&none, &one, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn direct_match_beats_the_diagonal_detour() {
        // Single points (0,4) and (0,3): matching them costs 1; sending
        // both to the diagonal costs max(2, 1.5) or 3.5 summed.
        let a = sub(&[(0.0, 4.0)]);
        let b = sub(&[(0.0, 3.0)]);
        assert_eq!(bottleneck(&a, &b).unwrap(), 1.0);
        assert_eq!(wasserstein(&a, &b, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn mixed_conventions_are_rejected() {
        let a = sub(&[(0.0, 1.0)]);
        let b = pd(&[(1.0, 0.0)], FiltrationConvention::SUPERLEVEL);
        assert!(matches!(bottleneck(&a, &b), Err(Error::InvalidArgument(_))));
        assert!(matches!(
            wasserstein(&a, &b, 1.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            wasserstein(&a, &a, 0.5),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn exhaustive_oracle_agrees_on_random_small_diagrams() {
        let mut rng = crate::rng::rng_from_seed(31);
        for case in 0..60 {
            let na = rng.gen_range(0..=5);
            let nb = rng.gen_range(0..=5);
            let mut draw = |n: usize| -> Vec<(f64, f64)> {
                (0..n)
                    .map(|_| {
                        let b: f64 = rng.gen_range(-2.0..2.0);
                        let pers: f64 = rng.gen_range(0.0..2.5);
                        (b, b + pers)
                    })
                    .collect()
            };
            let da = sub(&draw(na));
            let db = sub(&draw(nb));
            let pa: Vec<[f64; 2]> = da.pairs.iter().map(|p| [p.birth, p.death]).collect();
            let pb: Vec<[f64; 2]> = db.pairs.iter().map(|p| [p.birth, p.death]).collect();
            let (want_b, want_w) = oracle(&pa, &pb);
            let got_b = bottleneck(&da, &db).unwrap();
            let got_w = wasserstein(&da, &db, 1.0).unwrap();
            assert_eq!(got_b, want_b, "bottleneck case {case} ({na} vs {nb} pts)");
            assert!(
                (got_w - want_w).abs() <= 1e-9,
                "wasserstein case {case}: {got_w} vs {want_w}"
            );
        }
    }

    #[test]
    fn neighbor_means_match_hand_enumeration() {
        let d = pd(
            &[(0.0, 0.0), (1.0, 0.0), (3.0, 0.0)],
            FiltrationConvention::SUPERLEVEL,
        );
        let means = nn_stats(&d, &[1, 2]).unwrap();
        assert_eq!(means[0], 4.0 / 3.0);
        assert_eq!(means[1], (3.0 + 2.0 + 3.0) / 3.0);

        let coincident = sub(&[(1.0, 2.0); 4]);
        assert_eq!(nn_stats(&coincident, &[1, 2, 3]).unwrap(), vec![0.0; 3]);

        let mut rng = crate::rng::rng_from_seed(17);
        let pts: Vec<(f64, f64)> = (0..10)
            .map(|_| {
                let b: f64 = rng.gen_range(0.0..1.0);
                (b, b + rng.gen_range(0.0..1.0))
            })
            .collect();
        let means = nn_stats(&sub(&pts), &[1, 2, 3]).unwrap();
        assert!(means[0] <= means[1] && means[1] <= means[2]);

        assert!(matches!(
            nn_stats(&d, &[3]),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            nn_stats(&d, &[0]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn copied_diagrams_produce_a_zero_report() {
        let reals = vec![
            sub(&[(0.0, 1.0), (0.2, 2.0), (0.4, 0.9), (1.0, 1.5), (0.1, 0.3)]),
            sub(&[(0.0, 2.0), (0.5, 1.5), (0.2, 0.8), (0.9, 2.2), (0.3, 0.6)]),
        ];
        let tags = GofTags {
            variant: Variant::Modified,
            grid_size: 50,
            burn_in: 25,
        };
        let report = gof_report(&reals, &reals.clone(), tags).unwrap();
        assert_eq!(report.per_replicate.len(), 2);
        for d in &report.per_replicate {
            assert_eq!(d.bottleneck, 0.0);
            assert_eq!(d.wasserstein, 0.0);
        }
        assert_eq!(report.real_nn, report.sim_nn);
        assert_eq!(report.median_bottleneck(), 0.0);

        let csv = report.to_csv();
        assert!(csv.starts_with("replicate,metric,value,variant,grid_size,burn_in\n"));
        assert!(csv.contains("0,bottleneck,0,modified,50,25"));
        assert!(csv.contains("1,nn3_sim,"));
        assert_eq!(csv.lines().count(), 1 + 2 * 8);

        assert!(matches!(
            gof_report(&reals, &reals[..1], tags),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn medians_follow_the_even_count_convention() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(Vec::new()).is_nan());
    }

    fn diagram_strategy(max_pts: usize) -> impl Strategy<Value = PersistenceDiagram> {
        prop::collection::vec((-5.0..5.0f64, 0.0..3.0f64), 0..=max_pts).prop_map(|pts| {
            let pairs = pts
                .into_iter()
                .map(|(b, pers)| DiagramPoint::new(b, b + pers))
                .collect();
            PersistenceDiagram::new(0, pairs, FiltrationConvention::SUBLEVEL).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn metric_axioms_hold(
            a in diagram_strategy(6),
            b in diagram_strategy(6),
            c in diagram_strategy(6),
        ) {
            let bot = |x: &PersistenceDiagram, y: &PersistenceDiagram| bottleneck(x, y).unwrap();
            let w1 = |x: &PersistenceDiagram, y: &PersistenceDiagram| wasserstein(x, y, 1.0).unwrap();

            prop_assert_eq!(bot(&a, &a), 0.0);
            prop_assert_eq!(w1(&a, &a), 0.0);

            let (bab, bba) = (bot(&a, &b), bot(&b, &a));
            prop_assert_eq!(bab, bba);
            let (wab, wba) = (w1(&a, &b), w1(&b, &a));
            prop_assert_eq!(wab, wba);

            prop_assert!(bab >= 0.0 && wab >= 0.0);
            // The bottleneck takes the max where Wasserstein sums.
            prop_assert!(bab <= wab + 1e-9);

            prop_assert!(bot(&a, &c) <= bab + bot(&b, &c) + 1e-9);
            prop_assert!(w1(&a, &c) <= wab + w1(&b, &c) + 1e-9);
        }
    }
}
