//! Persistence diagrams, the projection to (birth, persistence) coordinates,
//! and CSV round-tripping.
//!
//! A diagram records when features of one homology rank appear and disappear
//! along a filtration. Under the superlevel convention used by the rest of
//! the pipeline, features are born at high field values and die lower, so
//! `birth >= death`; the projected diagram (PPD) places every point in
//! ℝ × ℝ₊ as `(x1, x2)` with `x2 = |death − birth|` and the orientation
//! recorded so the mapping stays invertible.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiltrationDirection {
    /// Features live in `{f >= t}` with t decreasing: birth >= death.
    Superlevel,
    /// Features live in `{f <= t}` with t increasing: birth <= death.
    Sublevel,
}

/// What death value an essential (never-dying) class was assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EssentialDeath {
    /// Superlevel essentials die at the global field minimum.
    FieldMin,
    /// Sublevel essentials die at the global field maximum.
    FieldMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiltrationConvention {
    pub direction: FiltrationDirection,
    pub essential_death: EssentialDeath,
}

impl FiltrationConvention {
    pub const SUPERLEVEL: Self = Self {
        direction: FiltrationDirection::Superlevel,
        essential_death: EssentialDeath::FieldMin,
    };
    pub const SUBLEVEL: Self = Self {
        direction: FiltrationDirection::Sublevel,
        essential_death: EssentialDeath::FieldMax,
    };

    /// Birth/death orientation check for one pair.
    fn pair_ok(&self, birth: f64, death: f64) -> bool {
        match self.direction {
            FiltrationDirection::Superlevel => birth >= death,
            FiltrationDirection::Sublevel => birth <= death,
        }
    }
}

/// One birth/death pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagramPoint {
    pub birth: f64,
    pub death: f64,
}

impl DiagramPoint {
    pub fn new(birth: f64, death: f64) -> Self {
        Self { birth, death }
    }

    pub fn persistence(&self) -> f64 {
        (self.birth - self.death).abs()
    }
}

/// The multiset of birth/death pairs for one homology rank.
#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceDiagram {
    pub rank: usize,
    pub pairs: Vec<DiagramPoint>,
    pub convention: FiltrationConvention,
}

impl PersistenceDiagram {
    pub fn new(
        rank: usize,
        pairs: Vec<DiagramPoint>,
        convention: FiltrationConvention,
    ) -> Result<Self> {
        for p in &pairs {
            if !p.birth.is_finite() || !p.death.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite diagram pair ({}, {})",
                    p.birth, p.death
                )));
            }
            if !convention.pair_ok(p.birth, p.death) {
                return Err(Error::InvalidArgument(format!(
                    "pair ({}, {}) violates the {:?} orientation",
                    p.birth, p.death, convention.direction
                )));
            }
        }
        Ok(Self {
            rank,
            pairs,
            convention,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// A diagram in projected coordinates (x1, x2) ∈ ℝ × ℝ₊.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedDiagram {
    pub points: Vec<[f64; 2]>,
    pub source_rank: usize,
    pub convention: FiltrationConvention,
}

impl ProjectedDiagram {
    pub fn new(
        points: Vec<[f64; 2]>,
        source_rank: usize,
        convention: FiltrationConvention,
    ) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !(p[1] >= 0.0) || !p[0].is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "PPD point ({}, {}) outside ℝ × ℝ₊",
                p[0], p[1]
            )));
        }
        Ok(Self {
            points,
            source_rank,
            convention,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Projects a diagram: sublevel pairs map to `(birth, death − birth)`,
/// superlevel pairs to `(death, birth − death)`, so the persistence
/// coordinate x2 is nonnegative either way. An orientation violation in the
/// input is an error, never a clamp.
///
/// The mapping is inverted by [`from_ppd`]. Over the reals the two are
/// mutually inverse; in floating point the subtraction here rounds once, so
/// the reconstructed endpoint can differ from the original by one rounding
/// at the persistence scale. The roundtrip is bitwise exact whenever the
/// persistence is representable (lattice-valued fields, shared binades).
pub fn to_ppd(pd: &PersistenceDiagram) -> Result<ProjectedDiagram> {
    let mut points = Vec::with_capacity(pd.pairs.len());
    for p in &pd.pairs {
        if !pd.convention.pair_ok(p.birth, p.death) {
            return Err(Error::InvalidArgument(format!(
                "pair ({}, {}) has negative persistence under {:?}",
                p.birth, p.death, pd.convention.direction
            )));
        }
        let pt = match pd.convention.direction {
            FiltrationDirection::Sublevel => [p.birth, p.death - p.birth],
            FiltrationDirection::Superlevel => [p.death, p.birth - p.death],
        };
        points.push(pt);
    }
    ProjectedDiagram::new(points, pd.rank, pd.convention)
}

/// Inverts [`to_ppd`]: a superlevel point (x1, x2) maps back to
/// `(birth, death) = (x1 + x2, x1)`, a sublevel point to `(x1, x1 + x2)`.
pub fn from_ppd(ppd: &ProjectedDiagram) -> Result<PersistenceDiagram> {
    let pairs = ppd
        .points
        .iter()
        .map(|p| match ppd.convention.direction {
            FiltrationDirection::Superlevel => DiagramPoint::new(p[0] + p[1], p[0]),
            FiltrationDirection::Sublevel => DiagramPoint::new(p[0], p[0] + p[1]),
        })
        .collect();
    PersistenceDiagram::new(ppd.source_rank, pairs, ppd.convention)
}

/// Writes one or more diagrams as CSV rows `rank,birth,death`.
pub fn save_diagrams(pds: &[PersistenceDiagram], path: &Path) -> Result<()> {
    let mut out = String::from("rank,birth,death\n");
    for pd in pds {
        for p in &pd.pairs {
            out.push_str(&format!(
                "{},{},{}\n",
                pd.rank,
                util::fmt_f64(p.birth),
                util::fmt_f64(p.death)
            ));
        }
    }
    util::write_atomic(path, out.as_bytes())
}

pub fn save_diagram(pd: &PersistenceDiagram, path: &Path) -> Result<()> {
    save_diagrams(std::slice::from_ref(pd), path)
}

/// Reads every rank present in a diagram CSV, validating pairs against the
/// given convention. Ranks come back sorted. A header-only file is an empty
/// rank-0 diagram list.
pub fn load_diagrams(
    path: &Path,
    convention: FiltrationConvention,
) -> Result<Vec<PersistenceDiagram>> {
    let (header, rows) = util::read_csv(path)?;
    if header != ["rank", "birth", "death"] {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            msg: format!("expected header rank,birth,death, found {header:?}"),
        });
    }
    let mut by_rank: BTreeMap<usize, Vec<DiagramPoint>> = BTreeMap::new();
    for (line, row) in rows {
        util::expect_fields(&row, 3, path, line)?;
        let rank = util::parse_usize(&row[0], path, line)?;
        let birth = util::parse_f64(&row[1], path, line)?;
        let death = util::parse_f64(&row[2], path, line)?;
        if !convention.pair_ok(birth, death) {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line,
                msg: format!(
                    "pair ({birth}, {death}) has negative persistence under {:?}",
                    convention.direction
                ),
            });
        }
        by_rank.entry(rank).or_default().push(DiagramPoint::new(birth, death));
    }
    by_rank
        .into_iter()
        .map(|(rank, pairs)| PersistenceDiagram::new(rank, pairs, convention))
        .collect()
}

/// Reads a single-rank diagram file; `rank` selects when several are present.
pub fn load_diagram(
    path: &Path,
    convention: FiltrationConvention,
    rank: Option<usize>,
) -> Result<PersistenceDiagram> {
    let mut pds = load_diagrams(path, convention)?;
    match rank {
        Some(r) => pds
            .into_iter()
            .find(|pd| pd.rank == r)
            .ok_or_else(|| Error::InvalidArgument(format!("no rank-{r} rows in {path:?}"))),
        None => {
            if pds.len() > 1 {
                return Err(Error::InvalidArgument(format!(
                    "{path:?} holds {} ranks; pass the rank to select one",
                    pds.len()
                )));
            }
            Ok(pds.pop().unwrap_or(PersistenceDiagram {
                rank: 0,
                pairs: Vec::new(),
                convention,
            }))
        }
    }
}

/// Writes a PPD as CSV `x1,x2,rank`.
pub fn save_ppd(ppd: &ProjectedDiagram, path: &Path) -> Result<()> {
    let mut out = String::from("x1,x2,rank\n");
    for p in &ppd.points {
        out.push_str(&format!(
            "{},{},{}\n",
            util::fmt_f64(p[0]),
            util::fmt_f64(p[1]),
            ppd.source_rank
        ));
    }
    util::write_atomic(path, out.as_bytes())
}

pub fn load_ppd(path: &Path, convention: FiltrationConvention) -> Result<ProjectedDiagram> {
    let (header, rows) = util::read_csv(path)?;
    if header != ["x1", "x2", "rank"] {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            msg: format!("expected header x1,x2,rank, found {header:?}"),
        });
    }
    let mut points = Vec::with_capacity(rows.len());
    let mut rank = 0usize;
    for (line, row) in rows {
        util::expect_fields(&row, 3, path, line)?;
        let x1 = util::parse_f64(&row[0], path, line)?;
        let x2 = util::parse_f64(&row[1], path, line)?;
        rank = util::parse_usize(&row[2], path, line)?;
        points.push([x1, x2]);
    }
    ProjectedDiagram::new(points, rank, convention)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn pd(
        rank: usize,
        pairs: &[(f64, f64)],
        convention: FiltrationConvention,
    ) -> PersistenceDiagram {
        PersistenceDiagram::new(
            rank,
            pairs.iter().map(|&(b, d)| DiagramPoint::new(b, d)).collect(),
            convention,
        )
        .unwrap()
    }

    #[test]
    fn sublevel_projection_is_birth_persistence() {
        let ppd = to_ppd(&pd(1, &[(2.0, 5.0)], FiltrationConvention::SUBLEVEL)).unwrap();
        assert_eq!(ppd.points, vec![[2.0, 3.0]]);
    }

    #[test]
    fn zero_persistence_lands_on_the_axis() {
        let ppd = to_ppd(&pd(0, &[(1.0, 1.0)], FiltrationConvention::SUPERLEVEL)).unwrap();
        assert_eq!(ppd.points, vec![[1.0, 0.0]]);
        let back = from_ppd(&ppd).unwrap();
        assert_eq!(back.pairs, vec![DiagramPoint::new(1.0, 1.0)]);
    }

    #[test]
    fn empty_diagram_projects_to_empty() {
        let ppd = to_ppd(&pd(0, &[], FiltrationConvention::SUPERLEVEL)).unwrap();
        assert!(ppd.is_empty());
    }

    #[test]
    fn superlevel_back_mapping_reads_as_birth_death() {
        // (x1, x2) = (2, 3) maps to birth = x1 + x2 = 5, death = x1 = 2.
        let ppd =
            ProjectedDiagram::new(vec![[2.0, 3.0]], 0, FiltrationConvention::SUPERLEVEL)
                .unwrap();
        let pd = from_ppd(&ppd).unwrap();
        assert_eq!(pd.pairs, vec![DiagramPoint::new(5.0, 2.0)]);
    }

    #[test]
    fn orientation_violations_error_rather_than_clamp() {
        // birth < death is invalid under superlevel.
        assert!(PersistenceDiagram::new(
            0,
            vec![DiagramPoint::new(1.0, 2.0)],
            FiltrationConvention::SUPERLEVEL
        )
        .is_err());
        assert!(ProjectedDiagram::new(vec![[0.0, -0.1]], 0, FiltrationConvention::SUPERLEVEL)
            .is_err());
    }

    #[test]
    fn projection_roundtrips_on_random_diagrams() {
        // Values are drawn on a dyadic lattice (multiples of 2⁻¹⁰) so the
        // projection's subtraction is exact and the roundtrip is a bitwise
        // identity. For arbitrary reals the difference itself rounds, which
        // makes a bitwise roundtrip unattainable in principle; that regime is
        // covered by the one-rounding bound test below.
        let mut rng = crate::rng::rng_from_seed(2024);
        for case in 0..50 {
            let convention = if case % 2 == 0 {
                FiltrationConvention::SUPERLEVEL
            } else {
                FiltrationConvention::SUBLEVEL
            };
            let n = rng.gen_range(0..30);
            let pairs: Vec<DiagramPoint> = (0..n)
                .map(|_| {
                    let a = rng.gen_range(-10_240..10_240) as f64 / 1024.0;
                    let b = rng.gen_range(-10_240..10_240) as f64 / 1024.0;
                    match convention.direction {
                        FiltrationDirection::Superlevel => {
                            DiagramPoint::new(a.max(b), a.min(b))
                        }
                        FiltrationDirection::Sublevel => {
                            DiagramPoint::new(a.min(b), a.max(b))
                        }
                    }
                })
                .collect();
            let original = PersistenceDiagram::new(case % 3, pairs, convention).unwrap();
            let back = from_ppd(&to_ppd(&original).unwrap()).unwrap();
            assert_eq!(original, back);
        }
    }

    #[test]
    fn projection_roundtrip_on_arbitrary_reals_is_within_one_rounding() {
        let mut rng = crate::rng::rng_from_seed(2025);
        for _ in 0..100_000 {
            let scale = 10f64.powi(rng.gen_range(-6..7));
            let a: f64 = rng.gen_range(-10.0..10.0) * scale;
            let b: f64 = rng.gen_range(-10.0..10.0) * scale;
            let original =
                pd(1, &[(a.max(b), a.min(b))], FiltrationConvention::SUPERLEVEL);
            let back = from_ppd(&to_ppd(&original).unwrap()).unwrap();
            // death is carried through untouched; birth is reconstructed and
            // may differ by at most one rounding at the operand scale
            assert_eq!(original.pairs[0].death, back.pairs[0].death);
            let (want, got) = (original.pairs[0].birth, back.pairs[0].birth);
            let bound = 2.0 * f64::EPSILON * want.abs().max(back.pairs[0].death.abs());
            assert!(
                (want - got).abs() <= bound,
                "birth {want:e} came back as {got:e}"
            );
        }
    }

    #[test]
    fn diagram_csv_roundtrips_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pd.csv");
        let mut rng = crate::rng::rng_from_seed(5);
        for _ in 0..100 {
            let n = rng.gen_range(0..20);
            let pairs: Vec<(f64, f64)> = (0..n)
                .map(|_| {
                    let a: f64 = rng.gen_range(-3.0..7.0);
                    let b: f64 = rng.gen_range(-3.0..7.0);
                    (a.max(b), a.min(b))
                })
                .collect();
            let original = pd(1, &pairs, FiltrationConvention::SUPERLEVEL);
            save_diagram(&original, &path).unwrap();
            let back = load_diagram(&path, FiltrationConvention::SUPERLEVEL, None).unwrap();
            if original.is_empty() {
                assert!(back.is_empty());
            } else {
                assert_eq!(original, back);
            }
        }
    }

    #[test]
    fn csv_negative_persistence_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "rank,birth,death\n0,2.0,1.0\n").unwrap();
        // Under sublevel, death < birth is negative persistence.
        let err = load_diagram(&path, FiltrationConvention::SUBLEVEL, None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn csv_malformed_row_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "rank,birth,death\n0,1.0,0.5\n0,oops,0.1\n").unwrap();
        let err = load_diagram(&path, FiltrationConvention::SUPERLEVEL, None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn header_only_csv_is_an_empty_diagram() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, "rank,birth,death\n").unwrap();
        let pd = load_diagram(&path, FiltrationConvention::SUPERLEVEL, None).unwrap();
        assert!(pd.is_empty());
    }

    #[test]
    fn multi_rank_files_group_by_rank() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("multi.csv");
        let pds = vec![
            pd(0, &[(3.0, 1.0), (2.0, 1.0)], FiltrationConvention::SUPERLEVEL),
            pd(1, &[(0.5, 0.2)], FiltrationConvention::SUPERLEVEL),
        ];
        save_diagrams(&pds, &path).unwrap();
        let back = load_diagrams(&path, FiltrationConvention::SUPERLEVEL).unwrap();
        assert_eq!(back, pds);
        let h1 = load_diagram(&path, FiltrationConvention::SUPERLEVEL, Some(1)).unwrap();
        assert_eq!(h1, pds[1]);
        assert!(load_diagram(&path, FiltrationConvention::SUPERLEVEL, None).is_err());
    }

    #[test]
    fn ppd_csv_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ppd.csv");
        let ppd = ProjectedDiagram::new(
            vec![[0.5, 1.5], [-0.25, 0.0]],
            2,
            FiltrationConvention::SUPERLEVEL,
        )
        .unwrap();
        save_ppd(&ppd, &path).unwrap();
        let back = load_ppd(&path, FiltrationConvention::SUPERLEVEL).unwrap();
        assert_eq!(ppd, back);
    }
}
