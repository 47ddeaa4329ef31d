//! Exact simulation of the burst process behind the density equations.
//!
//! Between bursts every protein decays deterministically,
//! `x_i(t) = x_i(t0) exp(-gamma_i (t - t0))`. Gene `i` fires at rate
//! `k_m^i c_i(x)`; epochs come from thinning a Poisson clock of rate `k_m^i`
//! (accept with probability `c_i <= 1`), and a burst adds an exponential
//! amount of mean `b_i` to `x_i`. There is no time discretisation error.
//!
//! Each gene draws from its own ChaCha stream derived from the master seed,
//! so trajectories do not depend on how many genes precede it in the loop.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::CellGrid;
use crate::model::{ModelSpec1D, ModelSpecND};
use crate::stationary::{cell_integrals, Stationary};

/// Lag-1 autocorrelation above which the sampling stride is flagged.
pub const AUTOCORRELATION_WARN: f64 = 0.5;

/// When to record states along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampling {
    /// Time discarded before the first sample.
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
    /// Time between samples.
    #[serde(default = "default_stride")]
    pub stride: f64,
    /// Keep every burst (time, gene, post-burst state).
    #[serde(default)]
    pub record_events: bool,
}

fn default_burn_in() -> f64 {
    50.0
}

fn default_stride() -> f64 {
    1.0
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            burn_in: default_burn_in(),
            stride: default_stride(),
            record_events: false,
        }
    }
}

impl Sampling {
    /// End time that yields `samples` samples.
    pub fn t_end_for(&self, samples: usize) -> f64 {
        self.burn_in + self.stride * samples.saturating_sub(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub seed: u64,
    pub dim: usize,
    /// Accepted burst epochs, strictly increasing.
    pub event_times: Vec<f64>,
    pub event_genes: Vec<usize>,
    /// Post-burst states, `dim` values per event.
    pub event_states: Vec<f64>,
    pub sample_times: Vec<f64>,
    /// `dim` values per sample.
    pub samples: Vec<f64>,
    /// Candidate epochs drawn from the majorant clocks.
    pub proposals: usize,
    pub bursts: usize,
    pub final_state: Vec<f64>,
}

impl Trajectory {
    pub fn sample_count(&self) -> usize {
        self.sample_times.len()
    }

    /// Samples of coordinate `axis`.
    pub fn coordinate(&self, axis: usize) -> Vec<f64> {
        self.samples.iter().skip(axis).step_by(self.dim).copied().collect()
    }

    /// Lag-1 autocorrelation of each coordinate's samples.
    pub fn lag1_autocorrelation(&self) -> Vec<f64> {
        (0..self.dim).map(|i| lag1_autocorrelation(&self.coordinate(i))).collect()
    }

    /// Human-readable warnings about the sample stream.
    pub fn warnings(&self) -> Vec<String> {
        self.lag1_autocorrelation()
            .iter()
            .enumerate()
            .filter(|(_, r)| **r > AUTOCORRELATION_WARN)
            .map(|(i, r)| format!("coordinate {i}: lag-1 autocorrelation {r:.3} > {AUTOCORRELATION_WARN}; consider a longer stride"))
            .collect()
    }

    pub fn write_samples_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let names: Vec<String> = (0..self.dim).map(|i| format!("x{i}")).collect();
        writeln!(w, "t,{}", names.join(","))?;
        for (k, t) in self.sample_times.iter().enumerate() {
            let row: Vec<String> = self.samples[k * self.dim..(k + 1) * self.dim]
                .iter()
                .map(|v| format!("{v:e}"))
                .collect();
            writeln!(w, "{t},{}", row.join(","))?;
        }
        Ok(())
    }
}

pub fn lag1_autocorrelation(x: &[f64]) -> f64 {
    if x.len() < 3 {
        return 0.0;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    if var == 0.0 {
        return 0.0;
    }
    let cov: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    cov / var
}

/// Simulates the network from `x0` up to `t_end`.
pub fn simulate_nd(spec: &ModelSpecND, x0: &[f64], t_end: f64, seed: u64, sampling: &Sampling) -> Result<Trajectory> {
    spec.validate_with(true)?;
    let n = spec.dim();
    if x0.len() != n {
        return Err(Error::InvalidSpec(format!("initial state has {} components for {n} genes", x0.len())));
    }
    if let Some(v) = x0.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!("initial state must be finite and >= 0, got {v}")));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) || !(sampling.burn_in >= 0.0) || !(sampling.stride > 0.0) {
        return Err(Error::InvalidSpec("need t_end >= 0, burn_in >= 0 and stride > 0".into()));
    }
    let majorant: Vec<f64> = spec.genes.iter().map(|g| g.k_m).collect();
    let gamma: Vec<f64> = spec.genes.iter().map(|g| g.degradation.rate()).collect();
    let mut streams: Vec<ChaCha8Rng> = (0..n)
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(i as u64);
            r
        })
        .collect();
    let clock = |rng: &mut ChaCha8Rng, rate: f64| -> f64 {
        if rate > 0.0 {
            Exp::new(rate).expect("positive rate").sample(rng)
        } else {
            f64::INFINITY
        }
    };
    let mut next: Vec<f64> = (0..n).map(|i| clock(&mut streams[i], majorant[i])).collect();

    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut traj = Trajectory {
        seed,
        dim: n,
        event_times: Vec::new(),
        event_genes: Vec::new(),
        event_states: Vec::new(),
        sample_times: Vec::new(),
        samples: Vec::new(),
        proposals: 0,
        bursts: 0,
        final_state: Vec::new(),
    };
    let mut sample_index = 0usize;
    let sample_time = |k: usize| sampling.burn_in + sampling.stride * k as f64;

    loop {
        let (gene, t_next) = next
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best });
        let horizon = t_next.min(t_end);
        while sample_time(sample_index) <= horizon {
            let ts = sample_time(sample_index);
            traj.sample_times.push(ts);
            traj.samples.extend(x.iter().zip(&gamma).map(|(v, g)| v * (-(g * (ts - t))).exp()));
            sample_index += 1;
        }
        if t_next > t_end {
            for (v, g) in x.iter_mut().zip(&gamma) {
                *v *= (-(g * (t_end - t))).exp();
            }
            break;
        }
        for (v, g) in x.iter_mut().zip(&gamma) {
            *v *= (-(g * (t_next - t))).exp();
        }
        t = t_next;
        traj.proposals += 1;
        let rng = &mut streams[gene];
        let accept: f64 = rng.random();
        if accept < spec.genes[gene].input.eval_unchecked(&x) {
            let size: f64 = Exp1.sample(rng);
            x[gene] += spec.genes[gene].b * size;
            traj.bursts += 1;
            if sampling.record_events {
                traj.event_times.push(t);
                traj.event_genes.push(gene);
                traj.event_states.extend_from_slice(&x);
            }
        }
        next[gene] = t + clock(&mut streams[gene], majorant[gene]);
    }
    traj.final_state = x;
    Ok(traj)
}

/// One self-regulated gene; `a = 0` gives pure decay.
pub fn simulate_1d(spec: &ModelSpec1D, x0: f64, t_end: f64, seed: u64, sampling: &Sampling) -> Result<Trajectory> {
    simulate_nd(&spec.to_nd(), &[x0], t_end, seed, sampling)
}

/// Normalised histogram on a tensor grid. Samples outside the grid are
/// counted in `overflow`; heights are normalised by the total count, so the
/// histogram mass plus the overflow fraction is one.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDensity {
    pub edges: Vec<Vec<f64>>,
    pub counts: Vec<u64>,
    pub heights: Vec<f64>,
    pub overflow: u64,
    pub samples: usize,
}

impl EmpiricalDensity {
    pub fn dims(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.len() - 1).collect()
    }

    /// Bin masses (count / samples).
    pub fn masses(&self) -> Vec<f64> {
        self.counts.iter().map(|c| *c as f64 / self.samples as f64).collect()
    }

    pub fn overflow_fraction(&self) -> f64 {
        self.overflow as f64 / self.samples as f64
    }

    /// Integral of the heights over the grid.
    pub fn mass(&self) -> f64 {
        self.masses().iter().sum()
    }

    /// One row per bin: lower edges, upper edges, count, height.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.edges.len();
        writeln!(w, "# samples = {}", self.samples)?;
        writeln!(w, "# overflow = {}", self.overflow)?;
        let mut head: Vec<String> = (0..d).map(|i| format!("lo{i}")).collect();
        head.extend((0..d).map(|i| format!("hi{i}")));
        writeln!(w, "{},count,density", head.join(","))?;
        let dims = self.dims();
        let mut idx = vec![0; d];
        for (flat, c) in self.counts.iter().enumerate() {
            unravel(&dims, flat, &mut idx);
            let lo: Vec<String> = idx.iter().enumerate().map(|(a, i)| self.edges[a][*i].to_string()).collect();
            let hi: Vec<String> = idx.iter().enumerate().map(|(a, i)| self.edges[a][*i + 1].to_string()).collect();
            writeln!(w, "{},{},{},{:e}", lo.join(","), hi.join(","), c, self.heights[flat])?;
        }
        Ok(())
    }
}

fn unravel(dims: &[usize], mut flat: usize, out: &mut [usize]) {
    for a in (0..dims.len()).rev() {
        out[a] = flat % dims[a];
        flat /= dims[a];
    }
}

fn bin_of(edges: &[f64], x: f64) -> Option<usize> {
    if !(x >= edges[0]) || x >= edges[edges.len() - 1] {
        return None;
    }
    Some(edges.partition_point(|e| *e <= x) - 1)
}

/// Histogram of `dim`-component samples on per-axis edges (row-major, last axis fastest).
pub fn empirical_density(samples: &[f64], dim: usize, edges: &[Vec<f64>]) -> Result<EmpiricalDensity> {
    if samples.is_empty() || dim == 0 || !samples.len().is_multiple_of(dim) {
        return Err(Error::Domain("histogram needs at least one complete sample".into()));
    }
    if edges.len() != dim || edges.iter().any(|e| e.len() < 2 || e.windows(2).any(|w| !(w[1] > w[0]))) {
        return Err(Error::InvalidSpec("histogram edges must be increasing, one list per axis".into()));
    }
    let dims: Vec<usize> = edges.iter().map(|e| e.len() - 1).collect();
    let total: usize = dims.iter().product();
    let mut counts = vec![0u64; total];
    let mut overflow = 0;
    'outer: for s in samples.chunks(dim) {
        let mut flat = 0;
        for (a, x) in s.iter().enumerate() {
            match bin_of(&edges[a], *x) {
                Some(k) => flat = flat * dims[a] + k,
                None => {
                    overflow += 1;
                    continue 'outer;
                }
            }
        }
        counts[flat] += 1;
    }
    let n = samples.len() / dim;
    let mut idx = vec![0; dim];
    let heights = counts
        .iter()
        .enumerate()
        .map(|(flat, c)| {
            unravel(&dims, flat, &mut idx);
            let vol: f64 = idx.iter().enumerate().map(|(a, i)| edges[a][i + 1] - edges[a][*i]).product();
            *c as f64 / n as f64 / vol
        })
        .collect();
    Ok(EmpiricalDensity {
        edges: edges.to_vec(),
        counts,
        heights,
        overflow,
        samples: n,
    })
}

/// `bins` uniform bins on `[0, max sample]`.
pub fn default_edges(values: &[f64], bins: usize) -> Vec<f64> {
    let top = values.iter().copied().fold(0.0f64, f64::max);
    // all samples at (or numerically at) the origin: fall back to a unit range
    let hi = if top > 1e-300 { top * (1.0 + 1e-12) } else { 1.0 };
    (0..=bins).map(|k| hi * k as f64 / bins as f64).collect()
}

/// Exact stationary mass of every bin and of the region beyond the last edge.
pub fn stationary_bin_masses(stationary: &Stationary, edges: &[f64]) -> Result<(Vec<f64>, f64)> {
    // integrate on a finer grid so the fixed-order rule resolves each bin
    const SPLIT: usize = 16;
    let mut fine = Vec::with_capacity((edges.len() - 1) * SPLIT + 1);
    for w in edges.windows(2) {
        for s in 0..SPLIT {
            fine.push(w[0] + (w[1] - w[0]) * s as f64 / SPLIT as f64);
        }
    }
    fine.push(edges[edges.len() - 1]);
    if fine[0] > 0.0 {
        return Err(Error::InvalidSpec("stationary bins must start at the origin".into()));
    }
    let grid = CellGrid::from_edges(fine)?;
    let fine_masses = cell_integrals(&grid, |x| stationary.log_density(x), stationary.exponents().origin)?;
    let masses: Vec<f64> = fine_masses.chunks(SPLIT).map(|c| c.iter().sum()).collect();
    let inside: f64 = masses.iter().sum();
    Ok((masses, (1.0 - inside).max(0.0)))
}

/// `bins` uniform bins on `[0, x_hi]`, with `x_hi` the point beyond which the
/// stationary law keeps mass `tail`.
pub fn stationary_edges(stationary: &Stationary, bins: usize, tail: f64) -> Result<Vec<f64>> {
    let tail_beyond = |x: f64| stationary_bin_masses(stationary, &[0.0, 0.5 * x, x]).map(|(_, t)| t);
    let mut hi = stationary.spec().b;
    while tail_beyond(hi)? > tail {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if tail_beyond(mid)? > tail {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0..=bins).map(|k| hi * k as f64 / bins as f64).collect())
}

/// L1 distance between a one-gene histogram and the exact stationary law,
/// overflow included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationaryComparison {
    pub l1: f64,
    pub samples: usize,
    pub bins: usize,
    pub overflow_empirical: f64,
    pub overflow_exact: f64,
}

pub fn compare_with_stationary(hist: &EmpiricalDensity, stationary: &Stationary) -> Result<StationaryComparison> {
    if hist.edges.len() != 1 {
        return Err(Error::InvalidSpec("stationary comparison needs a one-gene histogram".into()));
    }
    let (exact, tail) = stationary_bin_masses(stationary, &hist.edges[0])?;
    let emp = hist.masses();
    let l1 = emp.iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum::<f64>() + (hist.overflow_fraction() - tail).abs();
    Ok(StationaryComparison {
        l1,
        samples: hist.samples,
        bins: exact.len(),
        overflow_empirical: hist.overflow_fraction(),
        overflow_exact: tail,
    })
}

/// Kolmogorov–Smirnov statistic of `draws` against Exponential(`rate`).
pub fn ks_exponential(draws: &[f64], rate: f64) -> f64 {
    let mut v = draws.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = 1.0 - (-rate * x).exp();
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at the 1% level.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

/// `sum_j |v_i - v_j| / n` for every `i`, by sorting.
fn distance_row_means(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| v[*a].total_cmp(&v[*b]));
    let total: f64 = v.iter().sum();
    let mut below = 0.0;
    let mut out = vec![0.0; n];
    for (rank, &i) in order.iter().enumerate() {
        let x = v[i];
        let above = total - below - x;
        out[i] = (x * rank as f64 - below + above - x * (n - rank - 1) as f64) / n as f64;
        below += x;
    }
    out
}

/// Sample distance correlation of two scalar series.
///
/// Uses the double-centring identity, so only `sum |x_i - x_j| |y_i - y_j|`
/// needs the quadratic pass.
pub fn distance_correlation(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let (ax, ay) = (distance_row_means(x), distance_row_means(y));
    let gx = ax.iter().sum::<f64>() / nf;
    let gy = ay.iter().sum::<f64>() / nf;
    let cross: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let (xi, yi) = (x[i], y[i]);
            x[i + 1..].iter().zip(&y[i + 1..]).map(|(xj, yj)| (xi - xj).abs() * (yi - yj).abs()).sum::<f64>()
        })
        .sum::<f64>()
        * 2.0;
    // sum over pairs of |v_i - v_j|^2
    let squares = |v: &[f64]| {
        let s: f64 = v.iter().sum();
        let s2: f64 = v.iter().map(|a| a * a).sum();
        2.0 * nf * s2 - 2.0 * s * s
    };
    let centred = |pair: f64, r: &[f64], q: &[f64], g: f64, h: f64| {
        pair - 2.0 * nf * r.iter().zip(q).map(|(a, b)| a * b).sum::<f64>() + nf * nf * g * h
    };
    let sxy = centred(cross, &ax, &ay, gx, gy);
    let sxx = centred(squares(x), &ax, &ax, gx, gx);
    let syy = centred(squares(y), &ay, &ay, gy, gy);
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    (sxy.max(0.0) / (sxx * syy).sqrt()).sqrt()
}

/// Local maxima of a 2D histogram's heights over the eight neighbours,
/// keeping those with height at least `min_relative` of the maximum.
/// Returns bin indices.
pub fn histogram_modes_2d(hist: &EmpiricalDensity, min_relative: f64) -> Vec<(usize, usize)> {
    let dims = hist.dims();
    assert_eq!(dims.len(), 2, "histogram_modes_2d needs a 2D histogram");
    let (n0, n1) = (dims[0], dims[1]);
    let h = |i: usize, j: usize| hist.heights[i * n1 + j];
    let top = hist.heights.iter().copied().fold(0.0, f64::max);
    let mut out = Vec::new();
    for i in 0..n0 {
        for j in 0..n1 {
            let v = h(i, j);
            if v < min_relative * top || v == 0.0 {
                continue;
            }
            let mut is_max = true;
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if (di, dj) == (0, 0) || a < 0 || b < 0 || a >= n0 as i64 || b >= n1 as i64 {
                        continue;
                    }
                    let w = h(a as usize, b as usize);
                    if w > v || (w == v && (di, dj) < (0, 0)) {
                        is_max = false;
                    }
                }
            }
            if is_max {
                out.push((i, j));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Degradation, GeneSpec, InputFunction};

    fn events_only() -> Sampling {
        Sampling {
            burn_in: 0.0,
            stride: 1.0,
            record_events: true,
        }
    }

    #[test]
    fn open_loop_waiting_times_are_exponential() {
        let spec = ModelSpec1D::new(5.0, 10.0, 45.0, -4, 1.0).unwrap();
        let traj = simulate_1d(&spec, 1.0, 2100.0, 7, &events_only()).unwrap();
        assert_eq!(traj.proposals, traj.bursts);
        let gaps: Vec<f64> = traj.event_times.windows(2).take(10_000).map(|w| w[1] - w[0]).collect();
        assert_eq!(gaps.len(), 10_000);
        let d = ks_exponential(&gaps, 5.0);
        assert!(d < ks_critical_1pct(gaps.len()), "{d}");
    }

    #[test]
    fn constant_input_thins_to_scaled_rate() {
        // With H < 0 and x far below K the input sits at eps.
        let gene = GeneSpec {
            k_m: 4.0,
            b: 1e-9,
            input: InputFunction::Hill { axis: 0, k: 1e-6, h: -8, eps: 0.25 },
            degradation: Degradation::default(),
        };
        let spec = ModelSpecND::new(vec![gene]).unwrap();
        // bursts of size ~1e-9 keep x << K for the whole run
        let traj = simulate_nd(&spec, &[0.0], 11_000.0, 3, &events_only()).unwrap();
        assert!(traj.event_states.iter().all(|x| *x < 1e-7));
        let gaps: Vec<f64> = traj.event_times.windows(2).take(10_000).map(|w| w[1] - w[0]).collect();
        assert_eq!(gaps.len(), 10_000);
        let d = ks_exponential(&gaps, 1.0);
        assert!(d < ks_critical_1pct(gaps.len()), "{d}");
    }

    #[test]
    fn silent_gene_decays_exactly() {
        let spec = ModelSpec1D { a: 0.0, b: 10.0, k: 45.0, h: -4, eps: 0.15 };
        let s = Sampling { burn_in: 0.0, stride: 0.5, record_events: true };
        let traj = simulate_1d(&spec, 3.0, 5.0, 1, &s).unwrap();
        assert_eq!(traj.bursts, 0);
        for (t, x) in traj.sample_times.iter().zip(&traj.samples) {
            assert_eq!(*x, 3.0 * (-t).exp());
        }
        assert_eq!(traj.sample_count(), 11);
    }

    #[test]
    fn identical_seeds_reproduce() {
        let spec = ModelSpec1D::new(10.0, 5.0, 45.0, -4, 0.15).unwrap();
        let s = Sampling { record_events: true, ..Default::default() };
        let a = simulate_1d(&spec, 0.0, 300.0, 42, &s).unwrap();
        let b = simulate_1d(&spec, 0.0, 300.0, 42, &s).unwrap();
        let c = simulate_1d(&spec, 0.0, 300.0, 43, &s).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.samples, c.samples);
        assert!(a.event_times.windows(2).all(|w| w[1] > w[0]));
        assert!(a.samples.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn one_gene_network_reproduces_1d_path() {
        let spec = ModelSpec1D::new(5.0, 10.0, 45.0, -4, 0.15).unwrap();
        let s = Sampling::default();
        let a = simulate_1d(&spec, 2.0, 200.0, 9, &s).unwrap();
        let b = simulate_nd(&spec.to_nd(), &[2.0], 200.0, 9, &s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn histogram_of_single_sample_is_indicator() {
        let edges = vec![vec![0.0, 1.0, 2.0, 4.0]];
        let h = empirical_density(&[2.5], 1, &edges).unwrap();
        assert_eq!(h.counts, vec![0, 0, 1]);
        assert_eq!(h.heights, vec![0.0, 0.0, 0.5]);
        assert_eq!(h.mass(), 1.0);
        let h = empirical_density(&[2.5, 7.0], 1, &edges).unwrap();
        assert_eq!(h.overflow, 1);
        assert_eq!(h.mass() + h.overflow_fraction(), 1.0);
        assert!(empirical_density(&[], 1, &edges).is_err());
    }

    #[test]
    fn uniform_samples_give_flat_histogram() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..40_000).map(|_| rng.random::<f64>()).collect();
        let edges = vec![(0..=20).map(|k| k as f64 / 20.0).collect::<Vec<_>>()];
        let h = empirical_density(&xs, 1, &edges).unwrap();
        // binomial standard deviation of a height is sqrt(p(1-p)/n)/w ~ 0.022
        assert!(h.heights.iter().all(|v| (v - 1.0).abs() < 0.1), "{:?}", h.heights);
    }

    #[test]
    fn exact_bin_masses_sum_to_one() {
        let st = Stationary::new(&ModelSpec1D::new(5.0, 10.0, 45.0, -4, 0.15).unwrap()).unwrap();
        let edges: Vec<f64> = (0..=30).map(|k| 10.0 * k as f64).collect();
        let (m, tail) = stationary_bin_masses(&st, &edges).unwrap();
        assert!((m.iter().sum::<f64>() + tail - 1.0).abs() < 1e-12);
        assert!((0.0..1e-6).contains(&tail));
    }

    #[test]
    fn shape1_stationary_agreement_short() {
        let spec = ModelSpec1D::new(5.0, 10.0, 45.0, -4, 0.15).unwrap();
        let s = Sampling::default();
        let traj = simulate_1d(&spec, 0.0, s.t_end_for(20_000), 11, &s).unwrap();
        assert_eq!(traj.sample_count(), 20_000);
        let edges = default_edges(&traj.samples, 40);
        let h = empirical_density(&traj.samples, 1, &[edges]).unwrap();
        let cmp = compare_with_stationary(&h, &Stationary::new(&spec).unwrap()).unwrap();
        assert!(cmp.l1 < 0.1, "{cmp:?}");
    }

    #[test]
    fn distance_correlation_detects_dependence() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        let sq: Vec<f64> = x.iter().map(|v| (v - 0.5) * (v - 0.5)).collect();
        assert!(distance_correlation(&x, &y) < 0.08);
        assert!(distance_correlation(&x, &sq) > 0.3);
        assert!((distance_correlation(&x, &x) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distance_correlation_matches_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..300).map(|_| rng.random::<f64>() * 10.0).collect();
        let y: Vec<f64> = x.iter().map(|v| v.sin() + rng.random::<f64>()).collect();
        let n = x.len();
        let centred = |v: &[f64]| {
            let d: Vec<Vec<f64>> = v.iter().map(|a| v.iter().map(|b| (a - b).abs()).collect()).collect();
            let r: Vec<f64> = d.iter().map(|row| row.iter().sum::<f64>() / n as f64).collect();
            let g = r.iter().sum::<f64>() / n as f64;
            (0..n).map(|i| (0..n).map(|j| d[i][j] - r[i] - r[j] + g).collect::<Vec<_>>()).collect::<Vec<_>>()
        };
        let (a, b) = (centred(&x), centred(&y));
        let dot = |p: &Vec<Vec<f64>>, q: &Vec<Vec<f64>>| -> f64 {
            p.iter().flatten().zip(q.iter().flatten()).map(|(u, v)| u * v).sum()
        };
        let direct = (dot(&a, &b) / (dot(&a, &a) * dot(&b, &b)).sqrt()).sqrt();
        assert!((distance_correlation(&x, &y) - direct).abs() < 1e-10);
    }
}
