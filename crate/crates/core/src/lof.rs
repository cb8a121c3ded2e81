//! Local Outlier Factor with exact, tie-aware k-nearest neighbours.
//!
//! For a point `x` with k-distance `D_k(x)` and neighbourhood `L_k(x)` (every
//! other point within `D_k(x)`, so ties can push `|L_k(x)|` above `k`):
//!
//! ```text
//! R_k(x, y)  = max(d(x, y), D_k(y))
//! AR_k(x)    = mean over y in L_k(x) of R_k(x, y)
//! LOF_k(x)   = mean over y in L_k(x) of AR_k(x) / AR_k(y)
//! ```
//!
//! Neighbour search is a blocked brute-force scan over squared Euclidean
//! distances, parallel over query blocks. Every pairwise value is computed
//! by the same fixed-order kernel no matter how the work is split, so results
//! are bit-identical for any number of threads.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Edge length of the square distance tiles handed to a [`DistanceSource`].
const TILE: usize = 128;

/// Squared Euclidean distance with eight independent accumulators, combined
/// in a fixed order. Symmetric bit-for-bit in its arguments.
#[inline]
pub fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        let d = x - y;
        tail += d * d;
    }
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// Anything that can report squared distances between its points in tiles.
pub trait DistanceSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fills `out[r * cols.len() + c]` with the squared distance between
    /// point `rows.start + r` and point `cols.start + c`.
    fn sq_distance_tile(&self, rows: Range<usize>, cols: Range<usize>, out: &mut [f64]);

    fn sq_distance(&self, i: usize, j: usize) -> f64 {
        let mut out = [0.0];
        self.sq_distance_tile(i..i + 1, j..j + 1, &mut out);
        out[0]
    }
}

/// Dense row-major point set with finite coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    data: Vec<f64>,
    dim: usize,
}

impl PointSet {
    pub fn from_flat(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("points must have at least one coordinate"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::input(format!(
                "{} values do not split into rows of {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::input(format!(
                "non-finite coordinate in point {} (component {})",
                pos / dim,
                pos % dim
            )));
        }
        Ok(PointSet { data, dim })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(1);
        if rows.iter().any(|r| r.as_ref().len() != dim) {
            return Err(Error::input("points have mixed dimensions"));
        }
        let data = rows
            .iter()
            .flat_map(|r| r.as_ref().iter().copied())
            .collect();
        Self::from_flat(data, dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

impl DistanceSource for PointSet {
    fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    fn sq_distance_tile(&self, rows: Range<usize>, cols: Range<usize>, out: &mut [f64]) {
        let width = cols.len();
        for (r, i) in rows.enumerate() {
            let a = self.row(i);
            let line = &mut out[r * width..(r + 1) * width];
            for (slot, j) in line.iter_mut().zip(cols.clone()) {
                *slot = squared_euclidean(a, self.row(j));
            }
        }
    }
}

/// Stride-1 windows of `width` consecutive rows of a point set, viewed as the
/// concatenation of their members.
///
/// The squared distance between two windows is the sum of the squared
/// distances between aligned members, so a tile of window distances is
/// assembled from a slightly larger tile of member distances instead of
/// touching `width * dim` coordinates per pair.
#[derive(Debug, Clone, Copy)]
pub struct WindowedPoints<'a> {
    members: &'a PointSet,
    width: usize,
}

impl<'a> WindowedPoints<'a> {
    pub fn new(members: &'a PointSet, width: usize) -> Result<Self> {
        if width == 0 {
            return Err(Error::config("window width must be at least 1"));
        }
        if members.len() < width {
            return Err(Error::input(format!(
                "{} entries are fewer than the window width {width}",
                members.len()
            )));
        }
        Ok(WindowedPoints { members, width })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Dimension of a concatenated window.
    pub fn dim(&self) -> usize {
        self.width * self.members.dim()
    }
}

impl DistanceSource for WindowedPoints<'_> {
    fn len(&self) -> usize {
        self.members.len() + 1 - self.width
    }

    fn sq_distance_tile(&self, rows: Range<usize>, cols: Range<usize>, out: &mut [f64]) {
        let w = self.width;
        let member_cols = cols.len() + w - 1;
        let member_rows = rows.len() + w - 1;
        let mut members = vec![0.0; member_rows * member_cols];
        self.members.sq_distance_tile(
            rows.start..rows.end + w - 1,
            cols.start..cols.end + w - 1,
            &mut members,
        );
        let width = cols.len();
        for r in 0..rows.len() {
            for c in 0..width {
                let mut s = 0.0;
                for t in 0..w {
                    s += members[(r + t) * member_cols + c + t];
                }
                out[r * width + c] = s;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// k-distances and neighbourhoods of every point.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodTable {
    pub k: usize,
    pub k_distance: Vec<f64>,
    /// Sorted by distance, then index. Never contains the point itself.
    pub neighbors: Vec<Vec<Neighbor>>,
}

impl NeighborhoodTable {
    pub fn len(&self) -> usize {
        self.k_distance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k_distance.is_empty()
    }
}

/// Running candidate list for one query. Holds every candidate not yet known
/// to be farther than the current k-th best, which keeps exact ties.
struct Candidates {
    items: Vec<(f64, u32)>,
    threshold: f64,
    cap: usize,
}

impl Candidates {
    fn new(k: usize) -> Self {
        Candidates {
            items: Vec::with_capacity(4 * k),
            threshold: f64::INFINITY,
            cap: (4 * k).max(64),
        }
    }

    #[inline]
    fn offer(&mut self, sq: f64, index: usize, k: usize) {
        if sq <= self.threshold {
            self.items.push((sq, index as u32));
            if self.items.len() >= self.cap {
                self.prune(k);
            }
        }
    }

    fn prune(&mut self, k: usize) {
        if self.items.len() <= k {
            return;
        }
        self.items
            .select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0));
        let kth = self.items[k - 1].0;
        self.items.retain(|c| c.0 <= kth);
        self.threshold = kth;
        // Large tie groups would otherwise trigger a prune on every offer.
        self.cap = self.cap.max(2 * self.items.len());
    }

    fn finish(mut self, k: usize) -> (f64, Vec<Neighbor>) {
        self.prune(k);
        self.items
            .sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let kth = self.items[k - 1].0;
        let neighbors = self
            .items
            .iter()
            .map(|&(sq, j)| Neighbor {
                index: j as usize,
                distance: sq.sqrt(),
            })
            .collect();
        (kth.sqrt(), neighbors)
    }
}

fn search_block<S: DistanceSource + ?Sized>(
    points: &S,
    rows: Range<usize>,
    k: usize,
) -> Vec<(f64, Vec<Neighbor>)> {
    let n = points.len();
    let mut candidates: Vec<Candidates> = rows.clone().map(|_| Candidates::new(k)).collect();
    let mut tile = vec![0.0; rows.len() * TILE];
    for start in (0..n).step_by(TILE) {
        let cols = start..(start + TILE).min(n);
        let width = cols.len();
        let tile = &mut tile[..rows.len() * width];
        points.sq_distance_tile(rows.clone(), cols.clone(), tile);
        for (r, cand) in candidates.iter_mut().enumerate() {
            let query = rows.start + r;
            for (c, &sq) in tile[r * width..(r + 1) * width].iter().enumerate() {
                let j = start + c;
                if j != query {
                    cand.offer(sq, j, k);
                }
            }
        }
    }
    candidates.into_iter().map(|c| c.finish(k)).collect()
}

/// Exact k-nearest-neighbour table, ties at the k-distance included.
pub fn knn<S: DistanceSource + ?Sized>(points: &S, k: usize) -> Result<NeighborhoodTable> {
    let n = points.len();
    if k == 0 {
        return Err(Error::config("k must be at least 1"));
    }
    if k >= n {
        return Err(Error::config(format!("k = {k} needs more than {n} points")));
    }
    if n > u32::MAX as usize {
        return Err(Error::input("too many points"));
    }
    let starts: Vec<usize> = (0..n).step_by(TILE).collect();
    let blocks: Vec<Vec<(f64, Vec<Neighbor>)>> = starts
        .par_iter()
        .map(|&s| search_block(points, s..(s + TILE).min(n), k))
        .collect();

    let mut k_distance = Vec::with_capacity(n);
    let mut neighbors = Vec::with_capacity(n);
    for (kd, nb) in blocks.into_iter().flatten() {
        k_distance.push(kd);
        neighbors.push(nb);
    }
    Ok(NeighborhoodTable {
        k,
        k_distance,
        neighbors,
    })
}

/// `R_k(x, y)`; `y` must be in the neighbourhood of `x`.
pub fn reachability(table: &NeighborhoodTable, x: usize, y: usize) -> Result<f64> {
    let nb = table
        .neighbors
        .get(x)
        .ok_or_else(|| Error::input(format!("point {x} out of range")))?;
    let hit = nb
        .iter()
        .find(|n| n.index == y)
        .ok_or_else(|| Error::input(format!("point {y} is not a neighbour of {x}")))?;
    Ok(reach(hit.distance, table.k_distance[y]))
}

#[inline]
fn reach(distance: f64, k_distance_of_y: f64) -> f64 {
    distance.max(k_distance_of_y)
}

/// `AR_k(x)`, averaged over all of `L_k(x)` (not just `k`).
pub fn avg_reachability(table: &NeighborhoodTable, x: usize) -> f64 {
    let nb = &table.neighbors[x];
    let total: f64 = nb
        .iter()
        .map(|n| reach(n.distance, table.k_distance[n.index]))
        .sum();
    total / nb.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LofScores {
    pub ar: Vec<f64>,
    pub lof: Vec<f64>,
}

/// Ratio `AR_k(x) / AR_k(y)` with duplicate handling: `0 / 0` is 1 and
/// `a / 0` for `a > 0` is `+inf`.
#[inline]
pub fn density_ratio(ar_x: f64, ar_y: f64) -> f64 {
    if ar_y == 0.0 {
        if ar_x == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        ar_x / ar_y
    }
}

pub fn lof_from_table(table: &NeighborhoodTable) -> LofScores {
    let n = table.len();
    let ar: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|x| avg_reachability(table, x))
        .collect();
    let lof = (0..n)
        .into_par_iter()
        .map(|x| {
            let nb = &table.neighbors[x];
            let total: f64 = nb.iter().map(|n| density_ratio(ar[x], ar[n.index])).sum();
            total / nb.len() as f64
        })
        .collect();
    LofScores { ar, lof }
}

pub fn lof_scores<S: DistanceSource + ?Sized>(points: &S, k: usize) -> Result<LofScores> {
    Ok(lof_from_table(&knn(points, k)?))
}
