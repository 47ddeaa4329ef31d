//! Dimension-split integrator for networks of `n <= 3` genes on tensor grids.
//!
//! Each axis sweep applies, fiber by fiber, the implicit balanced step of
//! [`crate::chain`] for that gene's bursts and degradation with the input
//! function evaluated at the full coordinates of the fiber. A fiber's chain is
//! balanced in the one-gene equilibrium of that fiber,
//! `psi(x) ~ x^(a c_0 - 1) exp(a R(x) - x / b)` with `c_0 = c(0)` and
//! `R(x) = int_0^x (c(s) - c_0) / s ds`, so a network of independent genes
//! keeps the product of its one-gene stationary densities exactly.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{AxisKernel, ChainOperator};
use crate::entropy::{self, EntropyFunction, EntropyTrace, TraceRow, PI_FLOOR};
use crate::error::{Error, Result};
use crate::grid::{CellGrid, GridSpec};
use crate::model::{InputFunction, ModelSpecND};
use crate::quadrature::{gauss_legendre, integrate_power_weight};
use crate::solver1d::StepStats;

/// Largest supported number of genes.
pub const MAX_GENES: usize = 3;

/// Order of the axis sweeps within a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplitOrder {
    /// Axes `0, 1, ..` with full steps.
    #[default]
    Lie,
    /// Half steps around a full step of the last axis.
    Strang,
    /// Average of the forward and reverse Lie orders; commutes with axis swaps.
    Symmetric,
}

/// Binding constant that sets the default grid extent of a gene.
pub fn natural_scale(input: &InputFunction, b: f64) -> f64 {
    match input {
        InputFunction::Constant => b,
        InputFunction::Hill { k, .. } | InputFunction::Repressor { k, .. } => *k,
        InputFunction::Paired { k_self, k_other, .. } => k_self.max(*k_other),
    }
}

/// Builds one grid per gene from a common cell count.
pub fn build_grids(spec: &ModelSpecND, grid: &GridSpec) -> Result<Vec<CellGrid>> {
    spec.genes
        .iter()
        .map(|g| grid.build(g.burst_frequency(), g.b, natural_scale(&g.input, g.b)))
        .collect()
}

/// Row-major tensor layout, last axis fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub dims: Vec<usize>,
    pub strides: Vec<usize>,
    pub total: usize,
}

impl Layout {
    pub fn new(dims: &[usize]) -> Self {
        let mut strides = vec![1; dims.len()];
        for i in (0..dims.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * dims[i + 1];
        }
        Self {
            dims: dims.to_vec(),
            strides,
            total: dims.iter().product(),
        }
    }

    pub fn fibers(&self, axis: usize) -> usize {
        self.total / self.dims[axis]
    }

    /// Flat index of the first cell of fiber `f` along `axis`.
    pub fn fiber_base(&self, axis: usize, f: usize) -> usize {
        let s = self.strides[axis];
        (f / s) * s * self.dims[axis] + f % s
    }

    pub fn unravel(&self, mut flat: usize, out: &mut [usize]) {
        for (o, s) in out.iter_mut().zip(&self.strides) {
            *o = flat / s;
            flat %= s;
        }
    }
}

/// Joint density stored as cell masses.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityFieldND {
    pub grids: Arc<Vec<CellGrid>>,
    pub masses: Vec<f64>,
    pub time: f64,
}

impl DensityFieldND {
    pub fn layout(&self) -> Layout {
        Layout::new(&self.grids.iter().map(|g| g.len()).collect::<Vec<_>>())
    }

    pub fn mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Product of one cell-mass vector per axis.
    pub fn product(grids: Arc<Vec<CellGrid>>, factors: &[Vec<f64>]) -> Result<Self> {
        if factors.len() != grids.len() || factors.iter().zip(grids.iter()).any(|(f, g)| f.len() != g.len()) {
            return Err(Error::Domain("product factors do not match the grids".into()));
        }
        let layout = Layout::new(&grids.iter().map(|g| g.len()).collect::<Vec<_>>());
        let mut idx = vec![0; grids.len()];
        let masses = (0..layout.total)
            .map(|flat| {
                layout.unravel(flat, &mut idx);
                idx.iter().zip(factors).map(|(i, f)| f[*i]).product()
            })
            .collect();
        Ok(Self { grids, masses, time: 0.0 })
    }

    /// Cell masses of the marginal along `axis`.
    pub fn marginal(&self, axis: usize) -> Vec<f64> {
        let layout = self.layout();
        let mut out = vec![0.0; layout.dims[axis]];
        let mut idx = vec![0; layout.dims.len()];
        for (flat, m) in self.masses.iter().enumerate() {
            layout.unravel(flat, &mut idx);
            out[idx[axis]] += m;
        }
        out
    }

    pub fn l1_distance(&self, other: &[f64]) -> f64 {
        self.masses.iter().zip(other).map(|(a, b)| (a - b).abs()).sum()
    }

    /// Flattened snapshot: one row per cell with midpoints, mass and density.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let layout = self.layout();
        let dims: Vec<String> = layout.dims.iter().map(|d| d.to_string()).collect();
        writeln!(w, "# axes = {}", dims.join("x"))?;
        for (i, g) in self.grids.iter().enumerate() {
            writeln!(w, "# x_max[{i}] = {}", g.x_max())?;
        }
        writeln!(w, "# t = {}", self.time)?;
        let names: Vec<String> = (0..layout.dims.len()).map(|i| format!("x{i}")).collect();
        writeln!(w, "{},mass,density", names.join(","))?;
        let mut idx = vec![0; layout.dims.len()];
        for (flat, m) in self.masses.iter().enumerate() {
            layout.unravel(flat, &mut idx);
            let mut vol = 1.0;
            for (axis, i) in idx.iter().enumerate() {
                write!(w, "{},", self.grids[axis].centers()[*i])?;
                vol *= self.grids[axis].widths()[*i];
            }
            writeln!(w, "{:e},{:e}", m, m / vol)?;
        }
        Ok(())
    }
}

/// Cell masses, summing to one, of the one-gene equilibrium of a fiber with
/// burst frequency `a`, burst size `b` and input `c` along the fiber.
pub fn fiber_equilibrium<C: Fn(f64) -> f64>(grid: &CellGrid, a: f64, b: f64, c: C) -> Result<Vec<f64>> {
    let (gl8_x, gl8_w) = gauss_legendre(8);
    let (gl16_x, gl16_w) = gauss_legendre(16);
    let c0 = c(0.0);
    let alpha = a * c0 - 1.0;
    // int_lo^hi (c(s) - c0) / s ds
    let excess = |lo: f64, hi: f64| -> f64 {
        let (m, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        gl8_x
            .iter()
            .zip(&gl8_w)
            .map(|(t, w)| {
                let s = m + r * t;
                w * (c(s) - c0) / s
            })
            .sum::<f64>()
            * r
    };
    let e = grid.edges();
    let n = grid.len();
    let mut log_mass = Vec::with_capacity(n);
    let first = integrate_power_weight(
        |x| if x > 0.0 { (a * excess(0.0, x) - x / b).exp() } else { 1.0 },
        alpha,
        e[1],
        1e-10,
        0.0,
    )?;
    log_mass.push(first.value.ln());
    let mut r_edge = excess(0.0, e[1]);
    for k in 1..n {
        let (lo, hi) = (e[k], e[k + 1]);
        let (m, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        let terms: Vec<f64> = gl16_x
            .iter()
            .zip(&gl16_w)
            .map(|(t, w)| {
                let x = m + r * t;
                (w * r).ln() + alpha * x.ln() + a * (r_edge + excess(lo, x)) - x / b
            })
            .collect();
        let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        log_mass.push(top + terms.iter().map(|v| (v - top).exp()).sum::<f64>().ln());
        r_edge += excess(lo, hi);
    }
    let top = log_mass.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut masses: Vec<f64> = log_mass.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = masses.iter().sum();
    for v in masses.iter_mut() {
        // keep the far tail strictly positive so degradation rates stay finite
        *v = (*v / total).max(1e-290);
    }
    Ok(masses)
}

struct AxisPart {
    kernel: AxisKernel,
    fibers: Vec<ChainOperator>,
}

/// Integrator for one network on one tensor grid.
pub struct SolverND {
    spec: ModelSpecND,
    grids: Arc<Vec<CellGrid>>,
    layout: Layout,
    axes: Vec<AxisPart>,
    order: SplitOrder,
}

impl std::fmt::Debug for SolverND {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SolverND")
            .field("spec", &self.spec)
            .field("dims", &self.layout.dims)
            .field("order", &self.order)
            .finish()
    }
}

impl SolverND {
    pub fn new(spec: &ModelSpecND, grids: Arc<Vec<CellGrid>>, order: SplitOrder) -> Result<Self> {
        spec.validate()?;
        let n = spec.dim();
        if n > MAX_GENES {
            return Err(Error::InvalidSpec(format!("at most {MAX_GENES} genes are supported, got {n}")));
        }
        if grids.len() != n {
            return Err(Error::InvalidSpec(format!("{} grids for {n} genes", grids.len())));
        }
        let layout = Layout::new(&grids.iter().map(|g| g.len()).collect::<Vec<_>>());
        let mut axes = Vec::with_capacity(n);
        for (i, gene) in spec.genes.iter().enumerate() {
            let gamma = gene.degradation.rate();
            if gamma != 1.0 {
                return Err(Error::InvalidSpec(format!(
                    "gene {i}: only unit degradation rate is supported by the grid solver, got {gamma}"
                )));
            }
            let a = gene.burst_frequency();
            let kernel = AxisKernel::new(&grids[i], gene.b)?;
            let fibers = (0..layout.fibers(i))
                .into_par_iter()
                .map(|f| {
                    let base = layout.fiber_base(i, f);
                    let mut idx = vec![0; n];
                    layout.unravel(base, &mut idx);
                    let mut x: Vec<f64> = idx.iter().enumerate().map(|(ax, k)| grids[ax].centers()[*k]).collect();
                    let c_at = |xi: f64, x: &mut Vec<f64>| {
                        x[i] = xi;
                        gene.input.eval_unchecked(x)
                    };
                    let rate: Vec<f64> = grids[i].centers().iter().map(|&xi| a * c_at(xi, &mut x)).collect();
                    let pi = if gene.input.depends_on(i) {
                        let cell = std::cell::RefCell::new(x.clone());
                        fiber_equilibrium(&grids[i], a, gene.b, |s| c_at(s, &mut cell.borrow_mut()))?
                    } else {
                        let c0 = c_at(0.0, &mut x);
                        fiber_equilibrium(&grids[i], a, gene.b, |_| c0)?
                    };
                    ChainOperator::new(&kernel, rate, &pi)
                })
                .collect::<Result<Vec<_>>>()?;
            axes.push(AxisPart { kernel, fibers });
        }
        Ok(Self {
            spec: spec.clone(),
            grids,
            layout,
            axes,
            order,
        })
    }

    pub fn spec(&self) -> &ModelSpecND {
        &self.spec
    }

    pub fn grids(&self) -> &Arc<Vec<CellGrid>> {
        &self.grids
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn order(&self) -> SplitOrder {
        self.order
    }

    /// Product of each gene's open-loop gamma density, the default initial state.
    pub fn gamma_field(&self) -> Result<DensityFieldND> {
        let factors = self
            .spec
            .genes
            .iter()
            .zip(self.grids.iter())
            .map(|(g, grid)| fiber_equilibrium(grid, g.burst_frequency(), g.b, |_| 1.0))
            .collect::<Result<Vec<_>>>()?;
        DensityFieldND::product(Arc::clone(&self.grids), &factors)
    }

    /// Implicit balanced step along one axis for every fiber.
    pub fn sweep_axis(&self, axis: usize, dt: f64, m: &mut [f64]) {
        let n = self.layout.dims[axis];
        let s = self.layout.strides[axis];
        let part = &self.axes[axis];
        let layout = &self.layout;
        let mut buf = vec![0.0; layout.total];
        {
            let src: &[f64] = m;
            buf.par_chunks_mut(n).enumerate().for_each(|(f, chunk)| {
                let base = layout.fiber_base(axis, f);
                for (k, v) in chunk.iter_mut().enumerate() {
                    *v = src[base + k * s];
                }
                let mut scratch = vec![0.0; n];
                part.fibers[f].solve_implicit(&part.kernel, dt, chunk, &mut scratch);
            });
        }
        for (f, chunk) in buf.chunks(n).enumerate() {
            let base = layout.fiber_base(axis, f);
            for (k, v) in chunk.iter().enumerate() {
                m[base + k * s] = *v;
            }
        }
    }

    fn sweep_sequence(&self, dt: f64, m: &mut [f64], reverse: bool) {
        let n = self.axes.len();
        for j in 0..n {
            let axis = if reverse { n - 1 - j } else { j };
            self.sweep_axis(axis, dt, m);
        }
    }

    /// Advances `field` by `dt`, clipping negative masses.
    pub fn step(&self, field: &mut DensityFieldND, dt: f64) -> Result<StepStats> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain(format!("time step must be positive, got {dt}")));
        }
        let n = self.axes.len();
        match self.order {
            SplitOrder::Lie => self.sweep_sequence(dt, &mut field.masses, false),
            SplitOrder::Strang => {
                for axis in 0..n - 1 {
                    self.sweep_axis(axis, 0.5 * dt, &mut field.masses);
                }
                self.sweep_axis(n - 1, dt, &mut field.masses);
                for axis in (0..n - 1).rev() {
                    self.sweep_axis(axis, 0.5 * dt, &mut field.masses);
                }
            }
            SplitOrder::Symmetric => {
                let mut other = field.masses.clone();
                self.sweep_sequence(dt, &mut field.masses, false);
                self.sweep_sequence(dt, &mut other, true);
                for (a, b) in field.masses.iter_mut().zip(&other) {
                    *a = 0.5 * (*a + b);
                }
            }
        }
        field.time += dt;
        let mut stats = StepStats {
            clipped: 0.0,
            min_before_clip: f64::INFINITY,
        };
        for (k, v) in field.masses.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { time: field.time, cell: k });
            }
            stats.min_before_clip = stats.min_before_clip.min(*v);
            if *v < 0.0 {
                stats.clipped -= *v;
                *v = 0.0;
            }
        }
        Ok(stats)
    }

    /// `L m` for the unsplit semi-discrete generator.
    pub fn generator(&self, m: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.layout.total];
        for (axis, part) in self.axes.iter().enumerate() {
            let n = self.layout.dims[axis];
            let s = self.layout.strides[axis];
            let mut fiber = vec![0.0; n];
            let mut dm = vec![0.0; n];
            for (f, op) in part.fibers.iter().enumerate() {
                let base = self.layout.fiber_base(axis, f);
                for k in 0..n {
                    fiber[k] = m[base + k * s];
                }
                op.apply(&part.kernel, &fiber, &mut dm);
                for k in 0..n {
                    out[base + k * s] += dm[k];
                }
            }
        }
        out
    }

    /// Jump Dirichlet form summed over axes: the entropy production of the
    /// bursts relative to the reference masses `pbar`.
    pub fn jump_dissipation(&self, pbar: &[f64], m: &[f64]) -> f64 {
        let u = entropy::ratio(m, pbar);
        self.axes
            .iter()
            .enumerate()
            .map(|(axis, part)| {
                let n = self.layout.dims[axis];
                let s = self.layout.strides[axis];
                (0..part.fibers.len())
                    .into_par_iter()
                    .map(|f| {
                        let base = self.layout.fiber_base(axis, f);
                        let rate = part.fibers[f].rate();
                        let w: Vec<f64> = (0..n).map(|k| pbar[base + k * s] * rate[k]).collect();
                        let uf: Vec<f64> = (0..n).map(|k| u[base + k * s]).collect();
                        part.kernel.dirichlet(&w, &uf)
                    })
                    .sum::<f64>()
            })
            .sum()
    }

    /// Diagnostics relative to the reference masses `pbar`.
    pub fn observe(&self, field: &DensityFieldND, pbar: &[f64]) -> TraceRow {
        let u = entropy::ratio(&field.masses, pbar);
        let (mut umin, mut umax) = (f64::INFINITY, f64::NEG_INFINITY);
        for (u, p) in u.iter().zip(pbar) {
            if *p >= PI_FLOOR {
                umin = umin.min(*u);
                umax = umax.max(*u);
            }
        }
        TraceRow {
            t: field.time,
            g2: entropy::g2(&field.masses, pbar),
            d2: self.jump_dissipation(pbar, &field.masses),
            dg2dt: 0.0,
            mass: field.mass(),
            umin,
            umax,
            d_scheme: 0.0,
        }
    }

    /// Fixed-step run recording diagnostics against `pbar` every `observe_every`.
    pub fn run<O>(
        &self,
        field: &mut DensityFieldND,
        pbar: &[f64],
        dt: f64,
        t_end: f64,
        observe_every: f64,
        mut observer: O,
    ) -> Result<(EntropyTrace, f64)>
    where
        O: FnMut(&DensityFieldND, &TraceRow),
    {
        let steps = (t_end / dt).round() as usize;
        let stride = ((observe_every / dt).round() as usize).max(1);
        let mut trace = EntropyTrace::default();
        let row = self.observe(field, pbar);
        observer(field, &row);
        trace.push(row);
        let mut clipped = 0.0;
        let t0 = field.time;
        let mut next = field.clone();
        for i in 1..=steps {
            let observed = i % stride == 0 || i == steps;
            let g_prev = if observed { entropy::g2(&field.masses, pbar) } else { 0.0 };
            clipped += self.step(&mut next, dt)?.clipped;
            next.time = t0 + i as f64 * dt;
            field.masses.copy_from_slice(&next.masses);
            field.time = next.time;
            if observed {
                let mut row = self.observe(field, pbar);
                row.dg2dt = (row.g2 - g_prev) / dt;
                observer(field, &row);
                trace.push(row);
            }
        }
        if trace.len() > 1 {
            trace.rows[0].dg2dt = trace.rows[1].dg2dt;
        }
        Ok((trace, clipped))
    }
}

/// Options of [`compute_stationary_nd`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryOptions {
    pub dt: f64,
    /// Mass-normalised L1 drift per unit time at which the iteration stops.
    pub tolerance: f64,
    /// Interval over which the drift is measured.
    pub check_every: f64,
    pub t_max: f64,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        Self {
            dt: 0.05,
            tolerance: 1e-6,
            check_every: 1.0,
            t_max: 5000.0,
        }
    }
}

/// Numerically computed stationary joint density.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryProfileND {
    pub field: DensityFieldND,
    /// L1 norm of the unsplit generator applied to the profile.
    pub residual: f64,
    /// Last measured drift per unit time.
    pub drift: f64,
    /// `max |x_i P| ` at both ends of every axis, per axis.
    pub boundary_flux: Vec<f64>,
}

impl StationaryProfileND {
    pub fn masses(&self) -> &[f64] {
        &self.field.masses
    }
}

/// Long-time integration from the product of gamma densities until the drift
/// per unit time drops below `options.tolerance`.
pub fn compute_stationary_nd(solver: &SolverND, options: StationaryOptions) -> Result<StationaryProfileND> {
    let mut field = solver.gamma_field()?;
    let per_check = ((options.check_every / options.dt).round() as usize).max(1);
    let interval = per_check as f64 * options.dt;
    let mut drift = f64::INFINITY;
    while field.time < options.t_max {
        let before = field.masses.clone();
        for _ in 0..per_check {
            solver.step(&mut field, options.dt)?;
        }
        let total = field.mass();
        drift = field.l1_distance(&before) / total / interval;
        if drift < options.tolerance {
            break;
        }
    }
    if !(drift < options.tolerance) {
        return Err(Error::NotConverged { time: field.time, drift });
    }
    let total = field.mass();
    field.masses.iter_mut().for_each(|m| *m /= total);
    let residual = solver.generator(&field.masses).iter().map(|v| v.abs()).sum();
    let u = vec![1.0; field.masses.len()];
    let boundary_flux = boundary_flux_check(&field, &u, None);
    Ok(StationaryProfileND {
        field,
        residual,
        drift,
        boundary_flux,
    })
}

/// `max |H(u) x_i P|` over the first and last cell of every fiber of each axis.
/// With `h = None` the factor `H(u)` is replaced by `u`.
pub fn boundary_flux_check(profile: &DensityFieldND, u: &[f64], h: Option<EntropyFunction>) -> Vec<f64> {
    let layout = profile.layout();
    let grids = &profile.grids;
    let mut idx = vec![0; layout.dims.len()];
    (0..layout.dims.len())
        .map(|axis| {
            let n = layout.dims[axis];
            let s = layout.strides[axis];
            let mut worst = 0.0f64;
            for f in 0..layout.fibers(axis) {
                let base = layout.fiber_base(axis, f);
                for k in [0, n - 1] {
                    let flat = base + k * s;
                    layout.unravel(flat, &mut idx);
                    let vol: f64 = idx.iter().enumerate().map(|(ax, i)| grids[ax].widths()[*i]).product();
                    let density = profile.masses[flat] / vol;
                    let factor = match h {
                        Some(h) => h.eval(u[flat]),
                        None => u[flat],
                    };
                    worst = worst.max((factor * grids[axis].centers()[k] * density).abs());
                }
            }
            worst
        })
        .collect()
}

/// Threshold below which boundary fluxes count as vanishing.
pub const BOUNDARY_FLUX_LIMIT: f64 = 1e-8;

/// Interior local maxima of the cell-average density of a 2D field, with
/// their heights; neighbours are the eight surrounding cells.
pub fn peaks_2d(field: &DensityFieldND, min_relative_height: f64) -> Vec<(f64, f64, f64)> {
    let layout = field.layout();
    assert_eq!(layout.dims.len(), 2, "peaks_2d needs a two-gene field");
    let (n0, n1) = (layout.dims[0], layout.dims[1]);
    let g = &field.grids;
    let dens = |i: usize, j: usize| field.masses[i * n1 + j] / (g[0].widths()[i] * g[1].widths()[j]);
    let top = (0..n0)
        .flat_map(|i| (0..n1).map(move |j| (i, j)))
        .map(|(i, j)| dens(i, j))
        .fold(0.0f64, f64::max);
    let mut out = Vec::new();
    for i in 1..n0 - 1 {
        for j in 1..n1 - 1 {
            let v = dens(i, j);
            if v < min_relative_height * top {
                continue;
            }
            let mut is_max = true;
            for di in [-1i64, 0, 1] {
                for dj in [-1i64, 0, 1] {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (a, b) = ((i as i64 + di) as usize, (j as i64 + dj) as usize);
                    if dens(a, b) > v || (dens(a, b) == v && (di, dj) < (0, 0)) {
                        is_max = false;
                    }
                }
            }
            if is_max {
                out.push((g[0].centers()[i], g[1].centers()[j], v));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::DiscreteModel1D;
    use crate::model::{Degradation, GeneSpec, ModelSpec1D};

    fn hill_gene(axis: usize, k_m: f64, b: f64) -> GeneSpec {
        GeneSpec {
            k_m,
            b,
            input: InputFunction::Hill { axis, k: 45.0, h: -4, eps: 0.15 },
            degradation: Degradation::default(),
        }
    }

    #[test]
    fn layout_fibers_cover_tensor() {
        let l = Layout::new(&[3, 4, 5]);
        for axis in 0..3 {
            let mut seen = vec![0; l.total];
            for f in 0..l.fibers(axis) {
                for k in 0..l.dims[axis] {
                    seen[l.fiber_base(axis, f) + k * l.strides[axis]] += 1;
                }
            }
            assert!(seen.iter().all(|c| *c == 1));
        }
    }

    #[test]
    fn fiber_equilibrium_matches_closed_form() {
        let spec = ModelSpec1D::new(5.0, 10.0, 45.0, -4, 0.15).unwrap();
        let grid = Arc::new(GridSpec::new(512).build(5.0, 10.0, 45.0).unwrap());
        let exact = DiscreteModel1D::new(&spec, Arc::clone(&grid)).unwrap();
        let numeric = fiber_equilibrium(&grid, 5.0, 10.0, |x| spec.c(x)).unwrap();
        let l1: f64 = numeric.iter().zip(exact.pi()).map(|(a, b)| (a - b).abs()).sum();
        assert!(l1 < 1e-10, "{l1}");
    }

    #[test]
    fn one_gene_matches_solver1d() {
        use crate::solver1d::{Scheme, Solver1D};
        let spec = ModelSpec1D::new(10.0, 5.0, 45.0, -4, 0.15).unwrap();
        let grid = GridSpec::new(512).build(10.0, 5.0, 45.0).unwrap();
        let s1 = Solver1D::new(&spec, Arc::new(grid.clone()), Scheme::WellBalanced).unwrap();
        let sn = SolverND::new(&spec.to_nd(), Arc::new(vec![grid]), SplitOrder::Lie).unwrap();
        let mut f1 = s1.gamma_field().unwrap();
        let mut fnd = sn.gamma_field().unwrap();
        assert!(fnd.l1_distance(&f1.masses) < 1e-10);
        for _ in 0..100 {
            s1.step(&mut f1, 0.01).unwrap();
            sn.step(&mut fnd, 0.01).unwrap();
        }
        assert!(fnd.l1_distance(&f1.masses) < 1e-9, "{}", fnd.l1_distance(&f1.masses));
    }

    #[test]
    fn independent_genes_keep_product_form() {
        let spec = ModelSpecND::new(vec![hill_gene(0, 5.0, 10.0), hill_gene(1, 5.0, 10.0)]).unwrap();
        let grids = Arc::new(build_grids(&spec, &GridSpec::new(64)).unwrap());
        let solver = SolverND::new(&spec, Arc::clone(&grids), SplitOrder::Lie).unwrap();
        let m1 = ModelSpec1D::new(5.0, 10.0, 45.0, -4, 0.15).unwrap();
        let s1 = crate::solver1d::Solver1D::new(&m1, Arc::new(grids[0].clone()), Default::default()).unwrap();
        let mut f = solver.gamma_field().unwrap();
        let mut g = s1.gamma_field().unwrap();
        for _ in 0..50 {
            solver.step(&mut f, 0.02).unwrap();
            s1.step(&mut g, 0.02).unwrap();
        }
        let product = DensityFieldND::product(Arc::clone(&grids), &[g.masses.clone(), g.masses.clone()]).unwrap();
        assert!(f.l1_distance(&product.masses) < 1e-10, "{}", f.l1_distance(&product.masses));
    }

    #[test]
    fn symmetric_order_commutes_with_swap() {
        let gene = |regulator| GeneSpec {
            k_m: 8.0,
            b: 16.0,
            input: InputFunction::Repressor { regulator, k: 45.0, h: 4, eps: 0.15 },
            degradation: Degradation::default(),
        };
        let spec = ModelSpecND::new(vec![gene(1), gene(0)]).unwrap();
        let grids = Arc::new(build_grids(&spec, &GridSpec::new(48)).unwrap());
        let solver = SolverND::new(&spec, grids, SplitOrder::Symmetric).unwrap();
        let mut f = solver.gamma_field().unwrap();
        for _ in 0..20 {
            solver.step(&mut f, 0.05).unwrap();
        }
        let n = 48;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((f.masses[i * n + j] - f.masses[j * n + i]).abs());
            }
        }
        assert!(worst < 1e-14, "{worst}");
        assert!((f.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unit_ratio_has_zero_flux() {
        let spec = ModelSpecND::new(vec![hill_gene(0, 5.0, 10.0)]).unwrap();
        let grids = Arc::new(build_grids(&spec, &GridSpec::new(64)).unwrap());
        let solver = SolverND::new(&spec, grids, SplitOrder::Lie).unwrap();
        let f = solver.gamma_field().unwrap();
        let u = vec![1.0; f.masses.len()];
        let flux = boundary_flux_check(&f, &u, Some(EntropyFunction::Quadratic));
        assert_eq!(flux, vec![0.0]);
        let raw = boundary_flux_check(&f, &u, None);
        assert!(raw[0] < BOUNDARY_FLUX_LIMIT, "{raw:?}");
    }

    #[test]
    fn lie_strang_defect_is_first_order() {
        let gene = |regulator| GeneSpec {
            k_m: 8.0,
            b: 16.0,
            input: InputFunction::Repressor { regulator, k: 45.0, h: 4, eps: 0.15 },
            degradation: Degradation::default(),
        };
        let spec = ModelSpecND::new(vec![gene(1), gene(0)]).unwrap();
        let grids = Arc::new(build_grids(&spec, &GridSpec::new(32)).unwrap());
        let lie = SolverND::new(&spec, Arc::clone(&grids), SplitOrder::Lie).unwrap();
        let strang = SolverND::new(&spec, grids, SplitOrder::Strang).unwrap();
        let defect = |dt: f64| {
            let mut a = lie.gamma_field().unwrap();
            let mut b = strang.gamma_field().unwrap();
            for _ in 0..(1.0 / dt).round() as usize {
                lie.step(&mut a, dt).unwrap();
                strang.step(&mut b, dt).unwrap();
            }
            a.l1_distance(&b.masses)
        };
        let ratio = defect(0.02) / defect(0.01);
        assert!((ratio - 2.0).abs() < 0.3, "{ratio}");
    }

    #[test]
    fn one_gene_stationary_matches_analytic() {
        let spec = ModelSpec1D::new(5.0, 10.0, 45.0, -4, 0.15).unwrap();
        let grid = GridSpec::new(256).build(5.0, 10.0, 45.0).unwrap();
        let exact = DiscreteModel1D::new(&spec, Arc::new(grid.clone())).unwrap();
        let solver = SolverND::new(&spec.to_nd(), Arc::new(vec![grid]), SplitOrder::Lie).unwrap();
        let prof = compute_stationary_nd(&solver, StationaryOptions { dt: 0.05, ..Default::default() }).unwrap();
        let l1 = prof.field.l1_distance(exact.pi());
        assert!(l1 < 1e-3, "{l1}");
        assert!(prof.residual < 1e-4, "{}", prof.residual);
        assert!((prof.field.mass() - 1.0).abs() < 1e-12);
    }
}
