//! Small shared helpers: float round-tripping, grids, CSV plumbing.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Formats a float with 17 significant digits, enough to round-trip any f64
/// exactly through decimal text.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Parses a float, reporting the file location on failure.
pub fn parse_f64(s: &str, path: &Path, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line,
        msg: format!("bad float {s:?}: {e}"),
    })
}

pub fn parse_usize(s: &str, path: &Path, line: usize) -> Result<usize> {
    s.trim().parse::<usize>().map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line,
        msg: format!("bad integer {s:?}: {e}"),
    })
}

/// `n` evenly spaced values covering [lo, hi] inclusive, endpoints exact.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "linspace needs at least two points");
    let step = (hi - lo) / (n - 1) as f64;
    let mut v: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
    v[n - 1] = hi;
    v
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// For each point, the distances to its `k` nearest other points, ascending.
/// Errors when fewer than `k` other points exist.
pub fn knn_distance_rows(points: &[[f64; 2]], k: usize) -> Result<Vec<Vec<f64>>> {
    let n = points.len();
    if n <= k {
        return Err(Error::InvalidArgument(format!(
            "need more points than neighbors: N = {n}, K = {k}"
        )));
    }
    let mut rows = Vec::with_capacity(n);
    let mut dists = Vec::with_capacity(n - 1);
    for (i, p) in points.iter().enumerate() {
        dists.clear();
        for (j, q) in points.iter().enumerate() {
            if i != j {
                dists.push(euclid(p, q));
            }
        }
        dists.sort_by(|a, b| a.total_cmp(b));
        rows.push(dists[..k].to_vec());
    }
    Ok(rows)
}

/// Writes a file atomically: the content lands in a temp file in the target
/// directory and is renamed into place, so readers never observe a partial
/// artifact.
pub fn write_atomic(path: &Path, content: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = match dir {
        Some(dir) => tempfile::NamedTempFile::new_in(dir)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(content)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Reads a CSV written by this crate: returns the header fields and the data
/// rows paired with their 1-based line numbers. No quoting is supported; none
/// of our formats needs it.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<(usize, Vec<String>)>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let header = match lines.next() {
        Some((_, h)) => h.split(',').map(|s| s.trim().to_string()).collect(),
        None => {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: 1,
                msg: "empty file, expected a header row".into(),
            })
        }
    };
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        rows.push((
            idx + 1,
            line.split(',').map(|s| s.trim().to_string()).collect(),
        ));
    }
    Ok((header, rows))
}

/// Checks a CSV row's field count against the header.
pub fn expect_fields(row: &[String], want: usize, path: &Path, line: usize) -> Result<()> {
    if row.len() != want {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line,
            msg: format!("expected {want} fields, found {}", row.len()),
        });
    }
    Ok(())
}
