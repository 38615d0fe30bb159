//! Boxes, uniform grids and ball covers under the infinity norm.
//!
//! Grid cells are half-open hypercubes `[a + kη, a + (k+1)η)` per axis, so a
//! point on a cell face belongs to the upper cell. The upper face of the
//! covered box is the one exception: it belongs to the last cell.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("box axis {axis}: lower {lower} exceeds upper {upper}")]
    Inverted { axis: usize, lower: f64, upper: f64 },
    #[error("non-finite coordinate on axis {0}")]
    NonFinite(usize),
    #[error("cell width must be positive and finite, got {0}")]
    Width(f64),
    #[error("point {point:?} is outside the covered box")]
    OutOfDomain { point: Vec<f64> },
    #[error("grid has {cells} cells, limit is {limit}")]
    TooLarge { cells: u128, limit: u128 },
}

/// The norm used for balls, distances and the constants L, M.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    Infinity,
}

impl Norm {
    pub fn norm(self, v: &[f64]) -> f64 {
        match self {
            Norm::Infinity => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    pub fn dist(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Norm::Infinity => a
                .iter()
                .zip(b)
                .fold(0.0, |m, (x, y)| m.max((x - y).abs())),
        }
    }
}

/// Closed axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, GeometryError> {
        if lower.len() != upper.len() {
            return Err(GeometryError::Dimension {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (axis, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(GeometryError::NonFinite(axis));
            }
            if lo > hi {
                return Err(GeometryError::Inverted {
                    axis,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(Bounds { lower, upper })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self, GeometryError> {
        Bounds::new(vec![lo], vec![hi])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }

    pub fn contains_box(&self, other: &Bounds) -> bool {
        (0..self.dim()).all(|i| self.lower[i] <= other.lower[i] && other.upper[i] <= self.upper[i])
    }

    /// Whether `center ± radius` (closed) lies inside this box.
    pub fn contains_ball(&self, center: &[f64], radius: f64) -> bool {
        (0..self.dim())
            .all(|i| self.lower[i] <= center[i] - radius && center[i] + radius <= self.upper[i])
    }

    pub fn intersection(&self, other: &Bounds) -> Option<Bounds> {
        let lower: Vec<f64> = (0..self.dim())
            .map(|i| self.lower[i].max(other.lower[i]))
            .collect();
        let upper: Vec<f64> = (0..self.dim())
            .map(|i| self.upper[i].min(other.upper[i]))
            .collect();
        lower
            .iter()
            .zip(&upper)
            .all(|(l, u)| l <= u)
            .then_some(Bounds { lower, upper })
    }

    /// `{x : x + εB ⊆ self}`; `None` when an axis collapses.
    pub fn erode(&self, eps: f64) -> Option<Bounds> {
        debug_assert!(eps >= 0.0);
        let lower: Vec<f64> = self.lower.iter().map(|l| l + eps).collect();
        let upper: Vec<f64> = self.upper.iter().map(|u| u - eps).collect();
        lower
            .iter()
            .zip(&upper)
            .all(|(l, u)| l <= u)
            .then_some(Bounds { lower, upper })
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.lower.iter().zip(&self.upper).all(|(l, u)| l == u)
    }
}

/// `erode_box`: a thin free-function form of [`Bounds::erode`].
pub fn erode_box(b: &Bounds, eps: f64) -> Option<Bounds> {
    b.erode(eps)
}

/// Relative tolerance used when a quotient is meant to be an integer.
const SNAP: f64 = 1e-9;

fn snap_floor(q: f64) -> i64 {
    let r = q.round();
    if (q - r).abs() <= SNAP * q.abs().max(1.0) {
        r as i64
    } else {
        q.floor() as i64
    }
}

fn snap_ceil(q: f64) -> i64 {
    let r = q.round();
    if (q - r).abs() <= SNAP * q.abs().max(1.0) {
        r as i64
    } else {
        q.ceil() as i64
    }
}

/// Inclusive range of local cell indices along each axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellRange {
    pub lo: Vec<usize>,
    pub hi: Vec<usize>,
}

impl CellRange {
    pub fn len(&self) -> usize {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| h - l + 1)
            .product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Uniform grid of width `eta` over a covered box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    eta: f64,
    anchor: Vec<f64>,
    covered: Bounds,
    /// Lattice index of the first cell on each axis.
    first: Vec<i64>,
    counts: Vec<usize>,
    strides: Vec<usize>,
}

impl Grid {
    /// Grid anchored at the lower corner of `covered`.
    pub fn new(covered: Bounds, eta: f64) -> Result<Self, GeometryError> {
        let anchor = covered.lower.clone();
        Grid::anchored(covered, eta, anchor)
    }

    pub fn anchored(covered: Bounds, eta: f64, anchor: Vec<f64>) -> Result<Self, GeometryError> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(GeometryError::Width(eta));
        }
        if anchor.len() != covered.dim() {
            return Err(GeometryError::Dimension {
                expected: covered.dim(),
                got: anchor.len(),
            });
        }
        let n = covered.dim();
        let mut first = Vec::with_capacity(n);
        let mut counts = Vec::with_capacity(n);
        for i in 0..n {
            let k0 = snap_floor((covered.lower[i] - anchor[i]) / eta);
            let k1 = if covered.upper[i] == covered.lower[i] {
                k0
            } else {
                (snap_ceil((covered.upper[i] - anchor[i]) / eta) - 1).max(k0)
            };
            first.push(k0);
            counts.push((k1 - k0 + 1) as usize);
        }
        let mut strides = vec![1usize; n];
        for i in (0..n.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1].saturating_mul(counts[i + 1]);
        }
        Ok(Grid {
            eta,
            anchor,
            covered,
            first,
            counts,
            strides,
        })
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn covered(&self) -> &Bounds {
        &self.covered
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Total cell count, computed without overflow.
    pub fn cell_count_wide(&self) -> u128 {
        self.counts.iter().map(|&c| c as u128).product()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn check_size(&self, limit: usize) -> Result<(), GeometryError> {
        let cells = self.cell_count_wide();
        if cells > limit as u128 {
            return Err(GeometryError::TooLarge {
                cells,
                limit: limit as u128,
            });
        }
        Ok(())
    }

    fn axis_index(&self, axis: usize, v: f64) -> usize {
        let k = snap_floor((v - self.anchor[axis]) / self.eta) - self.first[axis];
        k.clamp(0, self.counts[axis] as i64 - 1) as usize
    }

    /// Local multi-index of the cell containing `x`.
    pub fn cell_index(&self, x: &[f64]) -> Result<Vec<usize>, GeometryError> {
        if x.len() != self.dim() {
            return Err(GeometryError::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if !self.covered.contains(x) {
            return Err(GeometryError::OutOfDomain { point: x.to_vec() });
        }
        Ok((0..self.dim()).map(|i| self.axis_index(i, x[i])).collect())
    }

    pub fn flat_index(&self, x: &[f64]) -> Result<usize, GeometryError> {
        Ok(self.flatten(&self.cell_index(x)?))
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for (i, s) in self.strides.iter().enumerate() {
            idx[i] = flat / s;
            flat %= s;
        }
        idx
    }

    fn axis_lower(&self, axis: usize, k: usize) -> f64 {
        self.anchor[axis] + (self.first[axis] + k as i64) as f64 * self.eta
    }

    pub fn axis_center(&self, axis: usize, k: usize) -> f64 {
        self.anchor[axis] + ((self.first[axis] + k as i64) as f64 + 0.5) * self.eta
    }

    /// Center of the cell clamped into the covered box.
    pub fn axis_rep(&self, axis: usize, k: usize) -> f64 {
        self.axis_center(axis, k)
            .clamp(self.covered.lower[axis], self.covered.upper[axis])
    }

    pub fn cell_center(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(a, &k)| self.axis_center(a, k))
            .collect()
    }

    /// Representative point of a cell: its center, clamped into the covered
    /// box. Every point of `cell ∩ covered` lies within `η/2` of it.
    pub fn representative(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(a, &k)| self.axis_rep(a, k))
            .collect()
    }

    pub fn representative_flat(&self, flat: usize) -> Vec<f64> {
        self.representative(&self.unflatten(flat))
    }

    /// Closed hypercube of a cell.
    pub fn cell_box(&self, idx: &[usize]) -> Bounds {
        let lower: Vec<f64> = idx
            .iter()
            .enumerate()
            .map(|(a, &k)| self.axis_lower(a, k))
            .collect();
        let upper = idx
            .iter()
            .enumerate()
            .map(|(a, &k)| self.axis_lower(a, k + 1))
            .collect();
        Bounds { lower, upper }
    }

    /// Closed cell hypercube intersected with the covered box.
    pub fn cell_box_clipped(&self, idx: &[usize]) -> Bounds {
        let b = self.cell_box(idx);
        b.intersection(&self.covered).unwrap_or(b)
    }

    /// Cells on `axis` satisfying a predicate that is true on a contiguous
    /// run of indices, which lies within `[lo, hi]`.
    fn trim(&self, axis: usize, lo: i64, hi: i64, keep: impl Fn(usize) -> bool) -> Option<(usize, usize)> {
        let max = self.counts[axis] as i64 - 1;
        let (mut lo, mut hi) = (lo.max(0), hi.min(max));
        while lo <= hi && !keep(lo as usize) {
            lo += 1;
        }
        while hi >= lo && !keep(hi as usize) {
            hi -= 1;
        }
        (lo <= hi).then_some((lo as usize, hi as usize))
    }

    /// Cells whose closed hypercube meets the closed ball `center ± radius`.
    pub fn ball_cover_range(&self, center: &[f64], radius: f64) -> Option<CellRange> {
        let mut lo = Vec::with_capacity(self.dim());
        let mut hi = Vec::with_capacity(self.dim());
        for a in 0..self.dim() {
            let (c, e) = (center[a], self.eta);
            let from = ((c - radius - self.anchor[a]) / e).floor() as i64 - 1 - self.first[a];
            let to = ((c + radius - self.anchor[a]) / e).floor() as i64 + 1 - self.first[a];
            let (l, h) = self.trim(a, from, to, |k| {
                self.axis_lower(a, k) <= c + radius && self.axis_lower(a, k + 1) >= c - radius
            })?;
            lo.push(l);
            hi.push(h);
        }
        Some(CellRange { lo, hi })
    }

    /// Cells whose representative lies within `radius` of `point`.
    pub fn near_representatives(&self, point: &[f64], radius: f64) -> Option<CellRange> {
        let mut lo = Vec::with_capacity(self.dim());
        let mut hi = Vec::with_capacity(self.dim());
        let half = 0.5 * self.eta;
        for a in 0..self.dim() {
            let p = point[a];
            // Clamping moves a representative by at most η/2, so the range of
            // centers within radius + η/2 (plus one cell of slack) bounds it.
            let from = ((p - radius - half - self.anchor[a]) / self.eta - 0.5).floor() as i64
                - 1
                - self.first[a];
            let to = ((p + radius + half - self.anchor[a]) / self.eta - 0.5).ceil() as i64 + 1
                - self.first[a];
            let (l, h) = self.trim(a, from, to, |k| (self.axis_rep(a, k) - p).abs() <= radius)?;
            lo.push(l);
            hi.push(h);
        }
        Some(CellRange { lo, hi })
    }

    /// Flat indices of every cell in a range, in increasing order.
    pub fn expand(&self, range: &CellRange) -> Vec<usize> {
        let n = self.dim();
        let mut out = Vec::with_capacity(range.len());
        let mut idx = range.lo.clone();
        loop {
            out.push(self.flatten(&idx));
            let mut a = n;
            loop {
                if a == 0 {
                    return out;
                }
                a -= 1;
                if idx[a] < range.hi[a] {
                    idx[a] += 1;
                    break;
                }
                idx[a] = range.lo[a];
            }
        }
    }

    /// `ball_cover`: flat indices of cells meeting the closed ball.
    pub fn ball_cover(&self, center: &[f64], radius: f64) -> Vec<usize> {
        self.ball_cover_range(center, radius)
            .map(|r| self.expand(&r))
            .unwrap_or_default()
    }
}
