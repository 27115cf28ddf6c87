//! Seedable samplers for the synthetic shapes used in the simulation study:
//! circles (single, concentric, distinct) and spheres S² / S³.
//!
//! All samplers place points exactly on the curve or surface (no noise) and
//! are bitwise deterministic for a fixed seed.

use std::f64::consts::TAU;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng};
use crate::util;

/// A finite set of D-dimensional points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
}

impl PointCloud {
    pub fn new(dim: usize, points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("point cloud is empty".into()));
        }
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::InvalidArgument(format!(
                "point has {} coordinates, expected {dim}",
                p.len()
            )));
        }
        Ok(Self { dim, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    /// One circle of radius `radii[0]` centered at the origin.
    Circle,
    /// Two concentric circles; the point count splits by `fractions`.
    Concentric,
    /// Two disjoint circles on the x-axis with gap `separation`; points split
    /// evenly, so `n` must be even.
    Distinct,
    /// The sphere S² in ℝ³.
    Sphere2,
    /// The sphere S³ in ℝ⁴.
    Sphere3,
}

impl ShapeKind {
    /// Ambient dimension of the sampled points.
    pub fn ambient_dim(self) -> usize {
        match self {
            ShapeKind::Circle | ShapeKind::Concentric | ShapeKind::Distinct => 2,
            ShapeKind::Sphere2 => 3,
            ShapeKind::Sphere3 => 4,
        }
    }
}

/// Geometry plus sample size and seed for one synthetic draw.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    /// One radius for circle/spheres, two for concentric/distinct.
    pub radii: Vec<f64>,
    /// Gap between the two distinct circles (ignored otherwise).
    #[serde(default)]
    pub separation: f64,
    /// Point-count fractions per concentric circle; must sum to 1.
    #[serde(default)]
    pub fractions: Vec<f64>,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ShapeSpec {
    pub fn circle(n: usize, r: f64, seed: u64) -> Self {
        Self {
            kind: ShapeKind::Circle,
            radii: vec![r],
            separation: 0.0,
            fractions: Vec::new(),
            n,
            seed,
        }
    }

    pub fn concentric(n: usize, r1: f64, r2: f64, seed: u64) -> Self {
        Self {
            kind: ShapeKind::Concentric,
            radii: vec![r1, r2],
            separation: 0.0,
            fractions: vec![0.4, 0.6],
            n,
            seed,
        }
    }

    pub fn distinct(n: usize, r1: f64, r2: f64, separation: f64, seed: u64) -> Self {
        Self {
            kind: ShapeKind::Distinct,
            radii: vec![r1, r2],
            separation,
            fractions: Vec::new(),
            n,
            seed,
        }
    }

    pub fn sphere(n: usize, sphere_dim: usize, r: f64, seed: u64) -> Result<Self> {
        let kind = match sphere_dim {
            2 => ShapeKind::Sphere2,
            3 => ShapeKind::Sphere3,
            d => {
                return Err(Error::InvalidArgument(format!(
                    "unsupported sphere dimension {d}, expected 2 or 3"
                )))
            }
        };
        Ok(Self {
            kind,
            radii: vec![r],
            separation: 0.0,
            fractions: Vec::new(),
            n,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("n must be positive".into()));
        }
        let want_radii = match self.kind {
            ShapeKind::Circle | ShapeKind::Sphere2 | ShapeKind::Sphere3 => 1,
            ShapeKind::Concentric | ShapeKind::Distinct => 2,
        };
        if self.radii.len() != want_radii {
            return Err(Error::InvalidArgument(format!(
                "{:?} expects {want_radii} radius value(s), got {}",
                self.kind,
                self.radii.len()
            )));
        }
        if self.radii.iter().any(|&r| r <= 0.0) {
            return Err(Error::InvalidArgument("radii must be positive".into()));
        }
        match self.kind {
            ShapeKind::Concentric => {
                let f = &self.fractions;
                if f.len() != 2 || f.iter().any(|&x| x <= 0.0 || x >= 1.0) {
                    return Err(Error::InvalidArgument(
                        "concentric needs two fractions in (0,1)".into(),
                    ));
                }
                if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument("fractions must sum to 1".into()));
                }
            }
            ShapeKind::Distinct => {
                if self.n % 2 != 0 {
                    return Err(Error::InvalidArgument(format!(
                        "distinct circles need an even n, got {}",
                        self.n
                    )));
                }
                if self.separation < 0.0 {
                    return Err(Error::InvalidArgument(
                        "separation must be nonnegative".into(),
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Samples any shape per its spec.
pub fn sample(spec: &ShapeSpec) -> Result<PointCloud> {
    spec.validate()?;
    match spec.kind {
        ShapeKind::Circle => sample_circle(spec.n, spec.radii[0], [0.0, 0.0], spec.seed),
        ShapeKind::Concentric | ShapeKind::Distinct => sample_two_circles(spec),
        ShapeKind::Sphere2 => sample_sphere(spec.n, 2, spec.radii[0], spec.seed),
        ShapeKind::Sphere3 => sample_sphere(spec.n, 3, spec.radii[0], spec.seed),
    }
}

/// `n` points uniform in angle on the circle of radius `r` around `center`.
pub fn sample_circle(n: usize, r: f64, center: [f64; 2], seed: u64) -> Result<PointCloud> {
    if n == 0 || r <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "need n >= 1 and r > 0, got n = {n}, r = {r}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let points = circle_points(n, r, center, &mut rng);
    PointCloud::new(2, points)
}

fn circle_points(n: usize, r: f64, center: [f64; 2], rng: &mut Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let theta = rng.gen::<f64>() * TAU;
            vec![center[0] + r * theta.cos(), center[1] + r * theta.sin()]
        })
        .collect()
}

/// Samples the concentric or distinct two-circle layouts.
///
/// Concentric: `round(fractions[0]·n)` points on the first radius, the rest
/// on the second, both centered at the origin. Distinct: `n/2` points per
/// circle; the first circle is centered at the origin and the second on the
/// x-axis at distance `r1 + separation + r2`, leaving a gap of `separation`
/// between the curves.
pub fn sample_two_circles(spec: &ShapeSpec) -> Result<PointCloud> {
    if !matches!(spec.kind, ShapeKind::Concentric | ShapeKind::Distinct) {
        return Err(Error::InvalidArgument(format!(
            "sample_two_circles expects concentric or distinct, got {:?}",
            spec.kind
        )));
    }
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let (r1, r2) = (spec.radii[0], spec.radii[1]);
    let points = match spec.kind {
        ShapeKind::Concentric => {
            let n1 = (spec.fractions[0] * spec.n as f64).round() as usize;
            let mut pts = circle_points(n1, r1, [0.0, 0.0], &mut rng);
            pts.extend(circle_points(spec.n - n1, r2, [0.0, 0.0], &mut rng));
            pts
        }
        ShapeKind::Distinct => {
            let half = spec.n / 2;
            let c2 = [r1 + spec.separation + r2, 0.0];
            let mut pts = circle_points(half, r1, [0.0, 0.0], &mut rng);
            pts.extend(circle_points(half, r2, c2, &mut rng));
            pts
        }
        _ => unreachable!("kind checked above"),
    };
    PointCloud::new(2, points)
}

/// `n` uniform points on the sphere S^dim of radius `r`, via normalized
/// isotropic Gaussian draws (exact uniformity in any dimension).
pub fn sample_sphere(n: usize, dim: usize, r: f64, seed: u64) -> Result<PointCloud> {
    if !(dim == 2 || dim == 3) {
        return Err(Error::InvalidArgument(format!(
            "unsupported sphere dimension {dim}, expected 2 or 3"
        )));
    }
    if n == 0 || r <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "need n >= 1 and r > 0, got n = {n}, r = {r}"
        )));
    }
    let ambient = dim + 1;
    let mut rng = rng_from_seed(seed);
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        let g: Vec<f64> = (0..ambient).map(|_| standard_normal(&mut rng)).collect();
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        // A zero vector cannot be normalized; redraw (probability ~0).
        if norm > 0.0 {
            points.push(g.iter().map(|x| r * x / norm).collect());
        }
    }
    PointCloud::new(ambient, points)
}

/// Box-Muller transform; two uniforms per normal keeps the draw count per
/// point fixed, which the determinism contract relies on.
fn standard_normal(rng: &mut Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

/// Writes a point cloud as CSV with header `x1,...,xD`.
pub fn save_points(cloud: &PointCloud, path: &Path) -> Result<()> {
    let mut out = String::new();
    let header: Vec<String> = (1..=cloud.dim).map(|j| format!("x{j}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for p in &cloud.points {
        let row: Vec<String> = p.iter().map(|&x| util::fmt_f64(x)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    util::write_atomic(path, out.as_bytes())
}

/// Reads a point cloud written by [`save_points`].
pub fn load_points(path: &Path) -> Result<PointCloud> {
    let (header, rows) = util::read_csv(path)?;
    let dim = header.len();
    if dim == 0 || header[0] != "x1" {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            msg: format!("expected header x1,...,xD, found {header:?}"),
        });
    }
    let mut points = Vec::with_capacity(rows.len());
    for (line, row) in rows {
        util::expect_fields(&row, dim, path, line)?;
        let mut p = Vec::with_capacity(dim);
        for field in &row {
            p.push(util::parse_f64(field, path, line)?);
        }
        points.push(p);
    }
    PointCloud::new(dim, points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::euclid;

    const NORM_TOL: f64 = 1e-12;

    #[test]
    fn circle_points_sit_on_the_circle() {
        let cloud = sample_circle(1000, 1.0, [0.0, 0.0], 7).unwrap();
        assert_eq!(cloud.len(), 1000);
        for p in &cloud.points {
            assert!((euclid(p, &[0.0, 0.0]) - 1.0).abs() < NORM_TOL);
        }
        // Off-center, different radius.
        let cloud = sample_circle(4, 2.0, [1.0, 1.0], 0).unwrap();
        for p in &cloud.points {
            assert!((euclid(p, &[1.0, 1.0]) - 2.0).abs() < NORM_TOL);
        }
        let single = sample_circle(1, 1.0, [0.0, 0.0], 3).unwrap();
        assert_eq!(single.len(), 1);
        assert!(sample_circle(0, 1.0, [0.0, 0.0], 0).is_err());
        assert!(sample_circle(5, -1.0, [0.0, 0.0], 0).is_err());
    }

    #[test]
    fn concentric_split_is_rounded_fraction() {
        let spec = ShapeSpec::concentric(1000, 0.5, 1.2, 11);
        let cloud = sample_two_circles(&spec).unwrap();
        let inner = cloud
            .points
            .iter()
            .filter(|p| (euclid(p, &[0.0, 0.0]) - 0.5).abs() < NORM_TOL)
            .count();
        let outer = cloud
            .points
            .iter()
            .filter(|p| (euclid(p, &[0.0, 0.0]) - 1.2).abs() < NORM_TOL)
            .count();
        assert_eq!((inner, outer), (400, 600));
    }

    #[test]
    fn concentric_equal_radii_degenerates_to_one_circle() {
        let spec = ShapeSpec::concentric(10, 1.0, 1.0, 5);
        let cloud = sample_two_circles(&spec).unwrap();
        for p in &cloud.points {
            assert!((euclid(p, &[0.0, 0.0]) - 1.0).abs() < NORM_TOL);
        }
    }

    #[test]
    fn distinct_circles_have_the_specified_gap() {
        // Radii 0.5 and 1.2 with gap 1.5: centers 0.5+1.5+1.2 = 3.2 apart.
        let spec = ShapeSpec::distinct(1300, 0.5, 1.2, 1.5, 2);
        let cloud = sample_two_circles(&spec).unwrap();
        let c2 = [3.2, 0.0];
        let on_first = cloud
            .points
            .iter()
            .filter(|p| (euclid(p, &[0.0, 0.0]) - 0.5).abs() < NORM_TOL)
            .count();
        let on_second = cloud
            .points
            .iter()
            .filter(|p| (euclid(p, &c2) - 1.2).abs() < NORM_TOL)
            .count();
        assert_eq!((on_first, on_second), (650, 650));
        // Odd counts cannot split evenly.
        let odd = ShapeSpec::distinct(1301, 0.5, 1.2, 1.5, 2);
        assert!(sample_two_circles(&odd).is_err());
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let spec = ShapeSpec::circle(10, 1.0, 0);
        assert!(sample_two_circles(&spec).is_err());
    }

    #[test]
    fn spheres_have_exact_norm_and_right_ambient_dim() {
        for (dim, ambient) in [(2usize, 3usize), (3, 4)] {
            let cloud = sample_sphere(1000, dim, 1.0, 3).unwrap();
            assert_eq!(cloud.dim, ambient);
            assert_eq!(cloud.len(), 1000);
            let origin = vec![0.0; ambient];
            for p in &cloud.points {
                assert!((euclid(p, &origin) - 1.0).abs() < NORM_TOL);
            }
        }
        let one = sample_sphere(1, 2, 5.0, 9).unwrap();
        assert!((euclid(&one.points[0], &[0.0, 0.0, 0.0]) - 5.0).abs() < NORM_TOL);
        assert!(sample_sphere(10, 4, 1.0, 0).is_err());
    }

    #[test]
    fn sphere_coordinates_are_centered() {
        // Uniformity smoke check: every coordinate mean near zero.
        let cloud = sample_sphere(10_000, 2, 1.0, 123).unwrap();
        for j in 0..3 {
            let mean =
                cloud.points.iter().map(|p| p[j]).sum::<f64>() / cloud.len() as f64;
            assert!(mean.abs() < 0.05, "coordinate {j} mean {mean}");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = ShapeSpec::distinct(100, 0.5, 1.1, 1.5, 99);
        let a = sample(&spec).unwrap();
        let b = sample(&spec).unwrap();
        assert_eq!(a, b);
        let other = sample(&ShapeSpec::distinct(100, 0.5, 1.1, 1.5, 98)).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn point_csv_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pts.csv");
        let cloud = sample_sphere(50, 3, 1.0, 4).unwrap();
        save_points(&cloud, &path).unwrap();
        let back = load_points(&path).unwrap();
        assert_eq!(cloud, back);
    }
}
