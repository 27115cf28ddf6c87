//! Multivariate Gaussian kernel density estimation with a diagonal bandwidth,
//! plus evaluation on regular grids.
//!
//! The estimate at p is
//!
//! ```text
//! f(p) = 1/(n · prod_j sqrt(2π) η_j) · Σ_i exp(−Σ_j (p_j − z_ij)² / (2 η_j²))
//! ```
//!
//! With a scalar bandwidth (all η_j equal) this is the textbook isotropic
//! form. Two instances appear in the pipeline and must not be conflated: the
//! filtration KDE over the raw sample always uses the fixed scalar bandwidth
//! η = 0.1, while the model/proposal KDE over projected diagram points uses
//! the plug-in surrogate of [`fit_kde`] unless an explicit bandwidth is
//! injected.

use std::path::Path;

use crate::error::{Error, Result};
use crate::synthetic::PointCloud;
use crate::util;

/// How many bandwidths away a sample can sit before its kernel contribution
/// is skipped; exp(−12²/2) ≈ 5e−32 is below every tolerance in this crate.
const EARLY_EXIT_BANDWIDTHS: f64 = 12.0;

/// A fitted Gaussian KDE.
#[derive(Debug, Clone)]
pub struct Kde {
    samples: PointCloud,
    bandwidth: Vec<f64>,
    norm: f64,
}

impl Kde {
    pub fn dim(&self) -> usize {
        self.samples.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }

    pub fn samples(&self) -> &PointCloud {
        &self.samples
    }
}

/// Fits a KDE to `points`. When `bandwidth` is omitted, applies Silverman's
/// diagonal rule per axis:
///
/// ```text
/// η_j = σ̂_j · (4 / ((D+2) n))^(1/(D+4))
/// ```
///
/// a plug-in surrogate that needs at least two points and positive variance
/// on every axis.
pub fn fit_kde(points: &PointCloud, bandwidth: Option<Vec<f64>>) -> Result<Kde> {
    let d = points.dim;
    let n = points.len();
    let bandwidth = match bandwidth {
        Some(bw) => {
            if bw.len() != d {
                return Err(Error::InvalidArgument(format!(
                    "bandwidth has {} entries, expected {d}",
                    bw.len()
                )));
            }
            if bw.iter().any(|&h| !(h > 0.0) || !h.is_finite()) {
                return Err(Error::InvalidArgument(
                    "bandwidth entries must be positive and finite".into(),
                ));
            }
            bw
        }
        None => {
            if n < 2 {
                return Err(Error::InvalidArgument(
                    "plug-in bandwidth needs at least two points (variance undefined)".into(),
                ));
            }
            let factor = (4.0 / ((d as f64 + 2.0) * n as f64)).powf(1.0 / (d as f64 + 4.0));
            let mut bw = Vec::with_capacity(d);
            for j in 0..d {
                let mean = points.points.iter().map(|p| p[j]).sum::<f64>() / n as f64;
                let var = points
                    .points
                    .iter()
                    .map(|p| (p[j] - mean) * (p[j] - mean))
                    .sum::<f64>()
                    / (n as f64 - 1.0);
                let h = var.sqrt() * factor;
                if !(h > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "plug-in bandwidth degenerate on axis {j} (zero variance)"
                    )));
                }
                bw.push(h);
            }
            bw
        }
    };
    let mut norm = n as f64;
    for &h in &bandwidth {
        norm *= (std::f64::consts::TAU).sqrt() * h;
    }
    Ok(Kde {
        samples: points.clone(),
        bandwidth,
        norm,
    })
}

/// Evaluates the density at `p`.
pub fn kde_eval(kde: &Kde, p: &[f64]) -> Result<f64> {
    if p.len() != kde.dim() {
        return Err(Error::InvalidArgument(format!(
            "point has {} coordinates, KDE is {}-dimensional",
            p.len(),
            kde.dim()
        )));
    }
    Ok(kde_eval_unchecked(kde, p))
}

/// Evaluation without the dimension check, for grid loops that already
/// validated their inputs.
#[inline]
pub(crate) fn kde_eval_unchecked(kde: &Kde, p: &[f64]) -> f64 {
    let mut sum = 0.0;
    'samples: for z in &kde.samples.points {
        let mut expo = 0.0;
        for j in 0..p.len() {
            let dz = (p[j] - z[j]) / kde.bandwidth[j];
            if dz.abs() > EARLY_EXIT_BANDWIDTHS {
                continue 'samples;
            }
            expo += dz * dz;
        }
        sum += (-0.5 * expo).exp();
    }
    sum / kde.norm
}

/// A density sampled on a regular grid: per-axis sorted coordinates and a
/// row-major value array (axis 0 slowest).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub axes: Vec<Vec<f64>>,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(axes: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        let shape: Vec<usize> = axes.iter().map(|a| a.len()).collect();
        let total: usize = shape.iter().product();
        if shape.iter().any(|&n| n == 0) || total == 0 {
            return Err(Error::InvalidArgument("field has an empty axis".into()));
        }
        if values.len() != total {
            return Err(Error::InvalidArgument(format!(
                "field has {} values, shape {shape:?} needs {total}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "field values must be finite".into(),
            ));
        }
        Ok(Self {
            axes,
            shape,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Evaluates `kde` on a regular grid with `resolution` nodes per axis over
/// `box_per_axis` = [(min, max); D].
pub fn kde_grid(kde: &Kde, box_per_axis: &[(f64, f64)], resolution: usize) -> Result<ScalarField> {
    if box_per_axis.len() != kde.dim() {
        return Err(Error::InvalidArgument(format!(
            "box has {} axes, KDE is {}-dimensional",
            box_per_axis.len(),
            kde.dim()
        )));
    }
    if resolution < 2 {
        return Err(Error::InvalidArgument(format!(
            "grid resolution must be at least 2, got {resolution}"
        )));
    }
    for &(lo, hi) in box_per_axis {
        if !(lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "degenerate box axis [{lo}, {hi}]"
            )));
        }
    }
    let d = kde.dim();
    let axes: Vec<Vec<f64>> = box_per_axis
        .iter()
        .map(|&(lo, hi)| util::linspace(lo, hi, resolution))
        .collect();
    let total = resolution.pow(d as u32);
    let mut values = vec![0.0; total];
    // Pure per-node map; order of evaluation cannot affect any value.
    let mut p = vec![0.0; d];
    let mut idx = vec![0usize; d];
    for (flat, value) in values.iter_mut().enumerate() {
        let mut rem = flat;
        for a in (0..d).rev() {
            idx[a] = rem % resolution;
            rem /= resolution;
        }
        for a in 0..d {
            p[a] = axes[a][idx[a]];
        }
        *value = kde_eval_unchecked(kde, &p);
    }
    ScalarField::new(axes, values)
}

/// Per-axis (min, max) of a point cloud.
pub fn data_range(points: &PointCloud) -> Vec<(f64, f64)> {
    (0..points.dim)
        .map(|j| {
            let lo = points.points.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min);
            let hi = points
                .points
                .iter()
                .map(|p| p[j])
                .fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        })
        .collect()
}

/// Writes a field as text: a shape line, one `axis` line per dimension, then
/// the values row-major, one line per innermost row.
pub fn save_field(field: &ScalarField, path: &Path) -> Result<()> {
    let mut out = String::new();
    let shape: Vec<String> = field.shape.iter().map(|n| n.to_string()).collect();
    out.push_str(&format!("shape,{}\n", shape.join(",")));
    for axis in &field.axes {
        let coords: Vec<String> = axis.iter().map(|&x| util::fmt_f64(x)).collect();
        out.push_str(&format!("axis,{}\n", coords.join(",")));
    }
    out.push_str("values\n");
    let row = *field.shape.last().expect("validated nonempty");
    for chunk in field.values.chunks(row) {
        let vals: Vec<String> = chunk.iter().map(|&x| util::fmt_f64(x)).collect();
        out.push_str(&vals.join(","));
        out.push('\n');
    }
    util::write_atomic(path, out.as_bytes())
}

/// Reads a field written by [`save_field`].
pub fn load_field(path: &Path) -> Result<ScalarField> {
    let (header, rows) = util::read_csv(path)?;
    if header.first().map(String::as_str) != Some("shape") {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            msg: "expected a `shape` line".into(),
        });
    }
    let shape: Vec<usize> = header[1..]
        .iter()
        .map(|s| util::parse_usize(s, path, 1))
        .collect::<Result<_>>()?;
    let d = shape.len();
    let mut axes = Vec::with_capacity(d);
    let mut values = Vec::new();
    let mut in_values = false;
    for (line, row) in rows {
        match row.first().map(String::as_str) {
            Some("axis") if !in_values => {
                let coords: Vec<f64> = row[1..]
                    .iter()
                    .map(|s| util::parse_f64(s, path, line))
                    .collect::<Result<_>>()?;
                axes.push(coords);
            }
            Some("values") if !in_values => in_values = true,
            _ if in_values => {
                for field in &row {
                    values.push(util::parse_f64(field, path, line)?);
                }
            }
            _ => {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line,
                    msg: format!("unexpected row {row:?}"),
                })
            }
        }
    }
    if axes.len() != d {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            msg: format!("expected {d} axis lines, found {}", axes.len()),
        });
    }
    ScalarField::new(axes, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(dim: usize, pts: &[&[f64]]) -> PointCloud {
        PointCloud::new(dim, pts.iter().map(|p| p.to_vec()).collect()).unwrap()
    }

    #[test]
    fn single_sample_peak_value() {
        // One sample, η = 1: the density at the sample is the Gaussian peak
        // 1/sqrt(2π) ≈ 0.3989422804014327.
        let kde = fit_kde(&cloud(1, &[&[2.0]]), Some(vec![1.0])).unwrap();
        let v = kde_eval(&kde, &[2.0]).unwrap();
        assert!((v - 0.3989422804014327).abs() < 1e-15);
    }

    #[test]
    fn two_sample_midpoint_value() {
        // Samples 0 and 2, η = 1, evaluated at 1: both kernels contribute
        // exp(−1/2), so f(1) = exp(−1/2)/sqrt(2π) ≈ 0.24197072451914337.
        let kde = fit_kde(&cloud(1, &[&[0.0], &[2.0]]), Some(vec![1.0])).unwrap();
        let v = kde_eval(&kde, &[1.0]).unwrap();
        assert!((v - 0.24197072451914337).abs() < 1e-15);
    }

    #[test]
    fn far_field_is_negligible() {
        let kde = fit_kde(&cloud(2, &[&[0.0, 0.0], &[1.0, 1.0]]), Some(vec![0.5, 0.5]))
            .unwrap();
        let v = kde_eval(&kde, &[100.0, 100.0]).unwrap();
        assert!(v < 1e-30);
    }

    #[test]
    fn symmetric_around_a_single_sample() {
        let kde = fit_kde(&cloud(2, &[&[1.0, -2.0]]), Some(vec![0.3, 0.7])).unwrap();
        for delta in [[0.1, 0.0], [0.0, 0.2], [0.25, -0.15]] {
            let plus = kde_eval(&kde, &[1.0 + delta[0], -2.0 + delta[1]]).unwrap();
            let minus = kde_eval(&kde, &[1.0 - delta[0], -2.0 - delta[1]]).unwrap();
            assert_eq!(plus, minus);
        }
    }

    #[test]
    fn density_normalizes_to_one() {
        // Trapezoid over a box 6η past the extremes captures all but ~1e−9 of
        // the mass; grid fine enough to keep quadrature error under 1e−3.
        for (pts, eta) in [
            (cloud(1, &[&[0.0], &[1.0], &[0.3]]), vec![0.2]),
            (cloud(2, &[&[0.0, 0.0], &[1.0, 0.5], &[-0.4, 0.8]]), vec![0.3, 0.25]),
        ] {
            let kde = fit_kde(&pts, Some(eta)).unwrap();
            let d = kde.dim();
            let boxes: Vec<(f64, f64)> = data_range(&pts)
                .iter()
                .zip(kde.bandwidth())
                .map(|(&(lo, hi), &h)| (lo - 6.0 * h, hi + 6.0 * h))
                .collect();
            let res = 201;
            let field = kde_grid(&kde, &boxes, res).unwrap();
            let mut mass = 0.0;
            let weight = |i: usize| if i == 0 || i == res - 1 { 0.5 } else { 1.0 };
            let steps: Vec<f64> = boxes
                .iter()
                .map(|&(lo, hi)| (hi - lo) / (res - 1) as f64)
                .collect();
            for (flat, &v) in field.values.iter().enumerate() {
                let mut w = 1.0;
                let mut rem = flat;
                for a in (0..d).rev() {
                    let i = rem % res;
                    rem /= res;
                    w *= weight(i) * steps[a];
                }
                mass += w * v;
            }
            assert!((mass - 1.0).abs() < 1e-3, "mass {mass}");
        }
    }

    #[test]
    fn bandwidth_sweep_stays_finite() {
        let kde_pts = cloud(2, &[&[0.0, 0.0], &[1.0, 1.0], &[0.5, 0.2]]);
        for i in 0..=60 {
            let eta = 1e-3 * (10.0f64 / 1e-3).powf(i as f64 / 60.0);
            let kde = fit_kde(&kde_pts, Some(vec![eta, eta])).unwrap();
            let v = kde_eval(&kde, &[0.5, 0.5]).unwrap();
            assert!(v.is_finite() && v >= 0.0, "eta {eta} gave {v}");
        }
    }

    #[test]
    fn plugin_bandwidth_is_positive_and_single_point_fails() {
        let mut pts = Vec::new();
        for i in 0..1000 {
            let t = i as f64 / 1000.0;
            pts.push(vec![t.sin(), 0.5 + 0.3 * (7.0 * t).cos()]);
        }
        let kde = fit_kde(&PointCloud::new(2, pts).unwrap(), None).unwrap();
        assert_eq!(kde.bandwidth().len(), 2);
        assert!(kde.bandwidth().iter().all(|&h| h > 0.0));

        assert!(fit_kde(&cloud(1, &[&[1.0]]), None).is_err());
        // Zero variance on an axis is also degenerate.
        assert!(fit_kde(&cloud(2, &[&[0.0, 1.0], &[0.0, 2.0]]), None).is_err());
        // Explicit bandwidth is stored verbatim.
        let kde = fit_kde(&cloud(2, &[&[0.0, 1.0]]), Some(vec![0.1, 0.1])).unwrap();
        assert_eq!(kde.bandwidth(), &[0.1, 0.1]);
        assert!(fit_kde(&cloud(1, &[&[0.0]]), Some(vec![0.0])).is_err());
    }

    #[test]
    fn grid_shapes_match_resolution() {
        let kde2 = fit_kde(&cloud(2, &[&[0.0, 0.0], &[1.0, 1.0]]), Some(vec![0.2, 0.2]))
            .unwrap();
        let f = kde_grid(&kde2, &[(0.0, 1.0), (0.0, 1.0)], 100).unwrap();
        assert_eq!(f.shape, vec![100, 100]);
        assert_eq!(f.len(), 10_000);

        let kde4 = fit_kde(
            &cloud(4, &[&[0.0, 0.0, 0.0, 0.0], &[1.0, 1.0, 1.0, 1.0]]),
            Some(vec![0.3; 4]),
        )
        .unwrap();
        let f = kde_grid(&kde4, &[(0.0, 1.0); 4], 15).unwrap();
        assert_eq!(f.shape, vec![15, 15, 15, 15]);
        assert_eq!(f.len(), 50_625);

        assert!(kde_grid(&kde2, &[(0.0, 1.0), (0.0, 1.0)], 1).is_err());
        assert!(kde_grid(&kde2, &[(1.0, 0.0), (0.0, 1.0)], 10).is_err());
    }

    #[test]
    fn constant_sample_peaks_at_nearest_node() {
        let kde = fit_kde(
            &cloud(2, &[&[0.52, 0.52], &[0.52, 0.52]]),
            Some(vec![0.2, 0.2]),
        )
        .unwrap();
        let f = kde_grid(&kde, &[(0.0, 1.0), (0.0, 1.0)], 11).unwrap();
        let argmax = f
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        // Nearest node to (0.52, 0.52) on the 11-point grid is (0.5, 0.5).
        assert_eq!((argmax / 11, argmax % 11), (5, 5));
    }

    #[test]
    fn field_roundtrips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.csv");
        let kde = fit_kde(&cloud(2, &[&[0.0, 0.1], &[0.7, 0.9]]), Some(vec![0.2, 0.3]))
            .unwrap();
        let field = kde_grid(&kde, &[(0.0, 1.0), (0.0, 1.0)], 8).unwrap();
        save_field(&field, &path).unwrap();
        let back = load_field(&path).unwrap();
        assert_eq!(field, back);
    }
}
