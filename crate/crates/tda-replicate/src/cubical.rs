//! Persistent homology of superlevel sets of a gridded scalar field.
//!
//! Rank 0 has a fast dedicated union-find sweep ([`h0_superlevel`]); all
//! ranks go through boundary-matrix reduction of a cubical complex
//! ([`cubical_persistence`]). Superlevel filtration of `f` is computed as
//! the sublevel filtration of `-f`, with the vertex-valued (V-)construction:
//! a cube enters when the last of its vertices does. Essential classes get
//! a finite death at the global field minimum so downstream projected
//! coordinates stay finite; the convention records this.

use crate::diagram::{DiagramPoint, FiltrationConvention, PersistenceDiagram};
use crate::error::{Error, Result};
use crate::kde::ScalarField;

/// Cap on Khalimsky positions (cells of every dimension) per complex; the
/// reduction keeps several per-cell arrays, so this bounds peak memory to a
/// few hundred MB.
const GRID_CELL_BUDGET: usize = 20_000_000;

/// Number of cells the cubical complex on `shape` would hold, validated
/// against the allocation budget before anything is built.
pub fn check_grid_budget(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "grid shape {shape:?} has an empty axis"
        )));
    }
    let cells = shape.iter().fold(1u128, |acc, &n| acc * (2 * n - 1) as u128);
    if cells > GRID_CELL_BUDGET as u128 {
        return Err(Error::ResourceLimit {
            cells: cells.min(usize::MAX as u128) as usize,
            budget: GRID_CELL_BUDGET,
        });
    }
    Ok(cells as usize)
}

/// Sorts pairs into the canonical order used by every diagram produced here.
fn canonical(mut pairs: Vec<DiagramPoint>) -> Vec<DiagramPoint> {
    pairs.sort_by(|a, b| {
        a.birth
            .total_cmp(&b.birth)
            .then(a.death.total_cmp(&b.death))
    });
    pairs
}

/// Connected components of superlevel sets via a descending union-find
/// sweep. A component is born at its maximum node; when two merge, the one
/// with the younger (lower, ties by node index) birth dies at the merge
/// level; the survivor of the whole sweep dies at the global minimum.
/// Zero-persistence finite pairs are dropped.
pub fn h0_superlevel(field: &ScalarField) -> Result<PersistenceDiagram> {
    let n = field.values.len();
    let f = &field.values;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| f[b].total_cmp(&f[a]).then(a.cmp(&b)));
    let mut sweep_rank = vec![0usize; n];
    for (r, &v) in order.iter().enumerate() {
        sweep_rank[v] = r;
    }

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }

    let strides = row_major_strides(&field.shape);
    let mut pairs = Vec::new();
    let mut coords = vec![0usize; field.shape.len()];
    for &v in &order {
        decode(v, &field.shape, &strides, &mut coords);
        for a in 0..coords.len() {
            for step in [-1isize, 1] {
                let c = coords[a] as isize + step;
                if c < 0 || c as usize >= field.shape[a] {
                    continue;
                }
                let u = (v as isize + step * strides[a] as isize) as usize;
                if sweep_rank[u] > sweep_rank[v] {
                    continue; // not yet in the superlevel set
                }
                let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
                if ru == rv {
                    continue;
                }
                // the root processed earlier is the older component
                let (older, younger) = if sweep_rank[ru] < sweep_rank[rv] {
                    (ru, rv)
                } else {
                    (rv, ru)
                };
                if f[younger] > f[v] {
                    pairs.push(DiagramPoint::new(f[younger], f[v]));
                }
                parent[younger] = older;
            }
        }
    }

    let global_min = f.iter().copied().fold(f64::INFINITY, f64::min);
    for v in 0..n {
        if find(&mut parent, v) == v {
            pairs.push(DiagramPoint::new(f[v], global_min));
        }
    }
    PersistenceDiagram::new(0, canonical(pairs), FiltrationConvention::SUPERLEVEL)
}

fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for a in (0..shape.len().saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * shape[a + 1];
    }
    strides
}

fn decode(mut idx: usize, shape: &[usize], strides: &[usize], out: &mut [usize]) {
    for a in 0..shape.len() {
        out[a] = idx / strides[a];
        idx %= strides[a];
    }
    debug_assert!(out.iter().zip(shape).all(|(&c, &n)| c < n));
}

/// One cell of the complex: its Khalimsky index, negated-field value, and
/// dimension (number of odd Khalimsky coordinates).
struct Cell {
    kidx: u32,
    g: f64,
    dim: u8,
}

/// The filtered complex shared by the clearing reduction and the reference
/// reduction: cells of dimension ≤ dmax sorted by (value, dim, index).
struct Complex {
    cells: Vec<Cell>,
    /// filtration position -> cell id
    order: Vec<u32>,
    /// Khalimsky index -> filtration position (u32::MAX when not enumerated)
    filt_of_kidx: Vec<u32>,
    /// Khalimsky position-space strides, axis 0 slowest
    pstrides: Vec<usize>,
    extents: Vec<usize>,
}

impl Complex {
    /// Filtration positions of the boundary facets of a cell, sorted.
    fn facets(&self, cid: u32, out: &mut Vec<u32>) {
        out.clear();
        let kidx = self.cells[cid as usize].kidx as usize;
        let mut rem = kidx;
        for (a, (&m, &stride)) in self.extents.iter().zip(&self.pstrides).enumerate() {
            let c = rem / stride;
            rem %= stride;
            debug_assert!(c < m, "axis {a} coordinate out of range");
            if c % 2 == 1 {
                out.push(self.filt_of_kidx[kidx - stride]);
                out.push(self.filt_of_kidx[kidx + stride]);
            }
        }
        debug_assert!(out.iter().all(|&p| p != u32::MAX));
        out.sort_unstable();
    }
}

fn build_complex(field: &ScalarField, dmax: usize) -> Result<Complex> {
    let total = check_grid_budget(&field.shape)?;
    let d = field.shape.len();
    let extents: Vec<usize> = field.shape.iter().map(|&n| 2 * n - 1).collect();
    let pstrides = row_major_strides(&extents);
    let nstrides = row_major_strides(&field.shape);

    let mut cells = Vec::new();
    let mut filt_of_kidx = vec![u32::MAX; total];
    let mut coords = vec![0usize; d];
    for kidx in 0..total {
        decode(kidx, &extents, &pstrides, &mut coords);
        let dim = coords.iter().filter(|&&c| c % 2 == 1).count();
        if dim > dmax {
            continue;
        }
        // value = max of -f over the cube's vertices = -(min f): the cube
        // enters the sublevel filtration of -f with its last vertex
        let base: usize = coords
            .iter()
            .zip(&nstrides)
            .map(|(&c, &s)| (c / 2) * s)
            .sum();
        let odd: Vec<usize> = (0..d).filter(|&a| coords[a] % 2 == 1).collect();
        let mut g = f64::NEG_INFINITY;
        for mask in 0..1usize << odd.len() {
            let node: usize = base
                + odd
                    .iter()
                    .enumerate()
                    .filter(|&(bit, _)| mask >> bit & 1 == 1)
                    .map(|(_, &a)| nstrides[a])
                    .sum::<usize>();
            g = g.max(-field.values[node]);
        }
        cells.push(Cell {
            kidx: kidx as u32,
            g,
            dim: dim as u8,
        });
    }

    let mut by_filtration: Vec<u32> = (0..cells.len() as u32).collect();
    // faces precede cofaces: a face's value is a max over fewer vertices,
    // and at equal values the lower dimension wins
    by_filtration.sort_unstable_by(|&a, &b| {
        let (ca, cb) = (&cells[a as usize], &cells[b as usize]);
        ca.g.total_cmp(&cb.g)
            .then(ca.dim.cmp(&cb.dim))
            .then(ca.kidx.cmp(&cb.kidx))
    });
    for (pos, &cid) in by_filtration.iter().enumerate() {
        filt_of_kidx[cells[cid as usize].kidx as usize] = pos as u32;
    }
    Ok(Complex {
        cells,
        order: by_filtration,
        filt_of_kidx,
        pstrides,
        extents,
    })
}

/// Symmetric difference of two sorted position lists (mod-2 column sum).
fn xor_merge(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

fn validate_rank(field: &ScalarField, max_rank: usize) -> Result<usize> {
    let d = field.dim();
    if !(2..=4).contains(&d) {
        return Err(Error::InvalidArgument(format!(
            "cubical persistence supports 2 to 4 axes, field has {d}"
        )));
    }
    if max_rank == 0 || max_rank > d - 1 {
        return Err(Error::InvalidArgument(format!(
            "max_rank must lie in 1..={}, got {max_rank}",
            d - 1
        )));
    }
    Ok(max_rank + 1)
}

/// Turns per-rank (birth filtration position, death position) pairs plus
/// essential birth cells into superlevel diagrams in original field values.
fn assemble_diagrams(
    complex: &Complex,
    field: &ScalarField,
    max_rank: usize,
    finite: Vec<Vec<(u32, u32)>>,
    essential: Vec<Vec<u32>>,
) -> Result<Vec<PersistenceDiagram>> {
    let global_min = field.values.iter().copied().fold(f64::INFINITY, f64::min);
    let cell_f = |pos: u32| -complex.cells[complex.order[pos as usize] as usize].g;
    (0..=max_rank)
        .map(|k| {
            let mut pairs: Vec<DiagramPoint> = finite[k]
                .iter()
                .map(|&(b, d)| DiagramPoint::new(cell_f(b), cell_f(d)))
                .filter(|p| p.birth > p.death)
                .collect();
            pairs.extend(
                essential[k]
                    .iter()
                    .map(|&b| DiagramPoint::new(cell_f(b), global_min)),
            );
            PersistenceDiagram::new(k, canonical(pairs), FiltrationConvention::SUPERLEVEL)
        })
        .collect()
}

/// Superlevel persistence diagrams of ranks `0..=max_rank` by boundary
/// matrix reduction with the clearing optimization: dimensions are reduced
/// from the top down, and every pivot found clears its paired lower cell,
/// whose column is then known to reduce to zero and is skipped.
pub fn cubical_persistence(
    field: &ScalarField,
    max_rank: usize,
) -> Result<Vec<PersistenceDiagram>> {
    let dmax = validate_rank(field, max_rank)?;
    let complex = build_complex(field, dmax)?;
    let ncells = complex.cells.len();

    let mut by_dim: Vec<Vec<u32>> = vec![Vec::new(); dmax + 1];
    for (pos, &cid) in complex.order.iter().enumerate() {
        by_dim[complex.cells[cid as usize].dim as usize].push(pos as u32);
    }

    let mut paired = vec![false; ncells]; // cell was a pivot row (a birth)
    let mut positive = vec![false; ncells];
    let mut finite: Vec<Vec<(u32, u32)>> = vec![Vec::new(); dmax];
    let mut scratch = Vec::new();
    for d in (1..=dmax).rev() {
        let mut pivot_owner: Vec<u32> = vec![u32::MAX; ncells];
        let mut stored: Vec<Vec<u32>> = Vec::new();
        for &fp in &by_dim[d] {
            let cid = complex.order[fp as usize];
            if paired[cid as usize] {
                positive[cid as usize] = true; // cleared: known positive
                continue;
            }
            complex.facets(cid, &mut scratch);
            let mut col = scratch.clone();
            loop {
                let Some(&low) = col.last() else {
                    positive[cid as usize] = true;
                    break;
                };
                let owner = pivot_owner[low as usize];
                if owner == u32::MAX {
                    pivot_owner[low as usize] = stored.len() as u32;
                    stored.push(col);
                    paired[complex.order[low as usize] as usize] = true;
                    finite[d - 1].push((low, fp));
                    break;
                }
                col = xor_merge(&col, &stored[owner as usize]);
            }
        }
    }

    let mut essential: Vec<Vec<u32>> = vec![Vec::new(); max_rank + 1];
    for (pos, &cid) in complex.order.iter().enumerate() {
        let dim = complex.cells[cid as usize].dim as usize;
        if dim > max_rank || paired[cid as usize] {
            continue;
        }
        if dim == 0 || positive[cid as usize] {
            essential[dim].push(pos as u32);
        }
    }
    // the full grid complex is a solid box, so only rank 0 can be essential
    debug_assert!(essential.iter().skip(1).all(|e| e.is_empty()));

    assemble_diagrams(&complex, field, max_rank, finite, essential)
}

/// Textbook single-pass column reduction without clearing or dimension
/// splitting, toggling entries through a `BTreeSet` instead of merging
/// sorted vectors. Slow and memory-hungry; retained as an independent
/// cross-check of [`cubical_persistence`] on small grids.
#[doc(hidden)]
pub fn reference_persistence(
    field: &ScalarField,
    max_rank: usize,
) -> Result<Vec<PersistenceDiagram>> {
    use std::collections::BTreeSet;
    let dmax = validate_rank(field, max_rank)?;
    let complex = build_complex(field, dmax)?;
    let ncells = complex.cells.len();

    let mut pivot_owner: Vec<u32> = vec![u32::MAX; ncells];
    let mut stored: Vec<BTreeSet<u32>> = Vec::new();
    let mut birth_of_pivot = vec![false; ncells];
    let mut positive = vec![false; ncells];
    let mut finite: Vec<Vec<(u32, u32)>> = vec![Vec::new(); dmax];
    let mut scratch = Vec::new();
    for fp in 0..ncells as u32 {
        let cid = complex.order[fp as usize];
        let dim = complex.cells[cid as usize].dim as usize;
        if dim == 0 {
            positive[fp as usize] = true;
            continue;
        }
        complex.facets(cid, &mut scratch);
        let mut col: BTreeSet<u32> = scratch.iter().copied().collect();
        loop {
            let Some(&low) = col.last() else {
                positive[fp as usize] = true;
                break;
            };
            let owner = pivot_owner[low as usize];
            if owner == u32::MAX {
                pivot_owner[low as usize] = stored.len() as u32;
                birth_of_pivot[low as usize] = true;
                finite[dim - 1].push((low, fp));
                stored.push(col);
                break;
            }
            for &e in &stored[owner as usize] {
                if !col.remove(&e) {
                    col.insert(e);
                }
            }
        }
    }

    let mut essential: Vec<Vec<u32>> = vec![Vec::new(); max_rank + 1];
    for fp in 0..ncells as u32 {
        let dim = complex.cells[complex.order[fp as usize] as usize].dim as usize;
        if dim <= max_rank && positive[fp as usize] && !birth_of_pivot[fp as usize] {
            essential[dim].push(fp);
        }
    }
    assemble_diagrams(&complex, field, max_rank, finite, essential)
}
