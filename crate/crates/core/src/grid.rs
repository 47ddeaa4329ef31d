//! Cell grids on `[0, x_max]`.
//!
//! The default family is geometric near the origin, where stationary densities
//! may blow up like `x^(a eps - 1)`, glued to uniform spacing further out. Cell
//! `k` spans `[edges[k], edges[k+1]]`; cell 0 always starts at the origin.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    edges: Vec<f64>,
    centers: Vec<f64>,
    widths: Vec<f64>,
}

impl CellGrid {
    pub fn from_edges(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 3 {
            return Err(Error::InvalidSpec("grid needs at least two cells".into()));
        }
        if edges[0] != 0.0 {
            return Err(Error::InvalidSpec("first grid edge must be 0".into()));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::InvalidSpec("grid edges must be strictly increasing".into()));
        }
        let centers = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let widths = edges.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self { edges, centers, widths })
    }

    pub fn uniform(cells: usize, x_max: f64) -> Result<Self> {
        if cells < 2 || !(x_max > 0.0) {
            return Err(Error::InvalidSpec("uniform grid needs >= 2 cells and x_max > 0".into()));
        }
        let h = x_max / cells as f64;
        let mut edges: Vec<f64> = (0..=cells).map(|i| i as f64 * h).collect();
        edges[cells] = x_max;
        Self::from_edges(edges)
    }

    /// Geometric cells from `x_min` up to `x_glue`, uniform cells up to
    /// `x_max`, with matching widths at the glue point and `cells` cells in total.
    pub fn hybrid(cells: usize, x_min: f64, x_glue: f64, x_max: f64) -> Result<Self> {
        if !(x_min > 0.0 && x_min < x_glue && x_glue < x_max) {
            return Err(Error::InvalidSpec(format!(
                "hybrid grid needs 0 < x_min < x_glue < x_max (got {x_min}, {x_glue}, {x_max})"
            )));
        }
        if cells < 8 {
            return Err(Error::InvalidSpec("hybrid grid needs at least 8 cells".into()));
        }
        let span = x_max - x_glue;
        // geometric ratio follows the glue width until the ratio reaches 2
        let count = |h: f64| -> (usize, usize) {
            let ratio = x_glue / (x_glue - h.min(0.5 * x_glue));
            let n_geo = ((x_glue / x_min).ln() / ratio.ln()).ceil() as usize;
            let n_uni = (span / h).ceil() as usize;
            (n_geo, n_uni)
        };
        // total cell count decreases with the glue width h
        let (mut lo, mut hi) = (span / cells as f64 * 1e-3, span);
        let total = |h: f64| {
            let (g, u) = count(h);
            1 + g + u
        };
        if total(hi) > cells {
            return Err(Error::InvalidSpec(format!(
                "{cells} cells cannot resolve [{x_min}, {x_max}] with glue at {x_glue}"
            )));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if total(mid) > cells {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let h = hi;
        let (n_geo, _) = count(h);
        let n_uni = cells - 1 - n_geo;
        let ratio = (x_glue / x_min).powf(1.0 / n_geo as f64);
        let mut edges = Vec::with_capacity(cells + 1);
        edges.push(0.0);
        for j in (1..=n_geo).rev() {
            edges.push(if j == n_geo { x_min } else { x_glue * ratio.powi(-(j as i32)) });
        }
        let du = span / n_uni as f64;
        for i in 0..=n_uni {
            edges.push(if i == n_uni { x_max } else { x_glue + i as f64 * du });
        }
        Self::from_edges(edges)
    }

    pub fn len(&self) -> usize {
        self.widths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.widths.is_empty()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn x_max(&self) -> f64 {
        *self.edges.last().expect("grid has edges")
    }

    /// Index of the cell containing `x`, or `None` outside `[0, x_max)`.
    pub fn locate(&self, x: f64) -> Option<usize> {
        if !(x >= 0.0) || x >= self.x_max() {
            return None;
        }
        let k = self.edges.partition_point(|e| *e <= x);
        Some(k.saturating_sub(1).min(self.len() - 1))
    }

    /// Same grid with every cell split in two.
    pub fn refined(&self) -> Self {
        let mut edges = Vec::with_capacity(2 * self.len() + 1);
        for w in self.edges.windows(2) {
            edges.push(w[0]);
            if w[0] == 0.0 {
                // keep the geometric character next to the origin
                edges.push(0.5 * w[1]);
            } else {
                edges.push(0.5 * (w[0] + w[1]));
            }
        }
        edges.push(self.x_max());
        Self::from_edges(edges).expect("refinement keeps edges increasing")
    }
}

/// Grid block of a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Cells per axis.
    pub cells: usize,
    /// Right end of the domain; defaults to `K + (40 + 2a) b`, far enough
    /// into the exponential tail that the neglected mass is below 1e-12.
    #[serde(default)]
    pub x_max: Option<f64>,
    /// Where geometric spacing hands over to uniform spacing; defaults to `K / 10`.
    #[serde(default)]
    pub x_glue: Option<f64>,
    /// Smallest positive edge as a fraction of `x_glue`.
    #[serde(default = "default_origin_ratio")]
    pub origin_ratio: f64,
}

fn default_origin_ratio() -> f64 {
    1e-6
}

pub fn default_x_max(a: f64, b: f64, k: f64) -> f64 {
    k + (40.0 + 2.0 * a) * b
}

impl GridSpec {
    pub fn new(cells: usize) -> Self {
        Self {
            cells,
            x_max: None,
            x_glue: None,
            origin_ratio: default_origin_ratio(),
        }
    }

    pub fn with_x_max(mut self, x_max: f64) -> Self {
        self.x_max = Some(x_max);
        self
    }

    /// Builds the grid given the natural scales of the problem.
    pub fn build(&self, a: f64, b: f64, k: f64) -> Result<CellGrid> {
        let x_max = self.x_max.unwrap_or_else(|| default_x_max(a, b, k));
        let x_glue = self.x_glue.unwrap_or(k / 10.0).min(0.25 * x_max);
        CellGrid::hybrid(self.cells, x_glue * self.origin_ratio, x_glue, x_max)
    }
}
