//! Relative entropy functionals, their production and the decay-rate fit.
//!
//! Densities are represented by cell masses `m` and the stationary state by
//! cell masses `pi`, both summing to one on the grid, so `u = m / pi` is the
//! ratio of cell averages. All double integrals become sums over cell pairs
//! with the burst weights of [`crate::chain`], which makes the discrete
//! identities exact rather than approximate.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discrete::DiscreteModel1D;
use crate::error::{Error, Result};

/// Cells with a stationary mass below this are excluded from `u`.
pub const PI_FLOOR: f64 = 1e-300;

/// Rounding floor of `G_2` for masses accurate to double precision.
pub const G2_FLOOR: f64 = 1e-26;

/// Tolerated deviation of a density's total mass from one.
pub const MASS_TOL: f64 = 1e-8;

/// Convex function `H` with `H(1) = 0` used in `G_H = sum H(u) pi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EntropyFunction {
    /// `(u - 1)^2`
    #[default]
    Quadratic,
    /// `u ln u - u + 1`
    Boltzmann,
    /// `u^p - 1 - p (u - 1)` for `p > 1`
    Power { p: f64 },
}

impl EntropyFunction {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Self::Quadratic => (u - 1.0) * (u - 1.0),
            Self::Boltzmann => {
                if u > 0.0 {
                    u * u.ln() - u + 1.0
                } else {
                    1.0
                }
            }
            Self::Power { p } => u.powf(p) - 1.0 - p * (u - 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeEntropy {
    pub value: f64,
    pub excluded_cells: usize,
    /// Mass of `m` sitting in excluded cells.
    pub excluded_mass: f64,
}

/// Rejects masses that are not a probability density on the grid.
pub fn check_density(m: &[f64]) -> Result<()> {
    if let Some(k) = m.iter().position(|v| !v.is_finite() || *v < -1e-12) {
        return Err(Error::Domain(format!("density has invalid mass {} in cell {k}", m[k])));
    }
    let total: f64 = m.iter().sum();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::Domain(format!("density has mass {total}, expected 1")));
    }
    Ok(())
}

/// `sum_k H(m_k / pi_k) pi_k` over cells with `pi_k >= PI_FLOOR`.
pub fn relative_entropy(m: &[f64], pi: &[f64], h: EntropyFunction) -> Result<RelativeEntropy> {
    if m.len() != pi.len() {
        return Err(Error::Domain(format!("{} masses against {} reference cells", m.len(), pi.len())));
    }
    check_density(m)?;
    let mut out = RelativeEntropy {
        value: 0.0,
        excluded_cells: 0,
        excluded_mass: 0.0,
    };
    for (&mk, &pk) in m.iter().zip(pi) {
        if pk < PI_FLOOR {
            out.excluded_cells += 1;
            out.excluded_mass += mk;
        } else {
            out.value += h.eval(mk / pk) * pk;
        }
    }
    Ok(out)
}

/// `G_2 = sum (u - 1)^2 pi` without validation.
pub fn g2(m: &[f64], pi: &[f64]) -> f64 {
    m.iter()
        .zip(pi)
        .filter(|(_, p)| **p >= PI_FLOOR)
        .map(|(m, p)| {
            let d = m - p;
            d * d / p
        })
        .sum()
}

/// `u = m / pi`, zero in excluded cells.
pub fn ratio(m: &[f64], pi: &[f64]) -> Vec<f64> {
    m.iter()
        .zip(pi)
        .map(|(m, p)| if *p >= PI_FLOOR { m / p } else { 0.0 })
        .collect()
}

/// `H_2 = sum_{j<k} pi_j pi_k (u_k - u_j)^2` by direct double summation.
pub fn h2_functional(m: &[f64], pi: &[f64]) -> f64 {
    let u = ratio(m, pi);
    let mut total = 0.0;
    for k in 1..u.len() {
        let mut inner = 0.0;
        for j in 0..k {
            let d = u[k] - u[j];
            inner += pi[j] * d * d;
        }
        total += pi[k] * inner;
    }
    total
}

/// Same as [`h2_functional`] in O(N): `S0 sum pi (u - mean)^2`.
pub fn h2_fast(m: &[f64], pi: &[f64]) -> f64 {
    let u = ratio(m, pi);
    let s0: f64 = pi.iter().sum();
    let mean = pi.iter().zip(&u).map(|(p, u)| p * u).sum::<f64>() / s0;
    s0 * pi.iter().zip(&u).map(|(p, u)| p * (u - mean) * (u - mean)).sum::<f64>()
}

/// `D_2 = a sum_j c_j pi_j sum_{k>j} W_jk (u_k - u_j)^2` in O(N).
pub fn entropy_production_d2(model: &DiscreteModel1D, m: &[f64]) -> f64 {
    let u = ratio(m, model.pi());
    let mut w = Vec::new();
    model.chain().jump_dissipation(model.kernel(), model.pi(), &u, &mut w)
}

/// [`entropy_production_d2`] by direct O(N^2) summation.
pub fn entropy_production_d2_direct(model: &DiscreteModel1D, m: &[f64]) -> f64 {
    let u = ratio(m, model.pi());
    let w: Vec<f64> = model.pi().iter().zip(model.chain().rate()).map(|(p, r)| p * r).collect();
    model.kernel().dirichlet_direct(model.grid(), model.spec().b, &w, &u)
}

/// Band functional `D(u) = sum_j pi_j sum_k |cell_k ∩ (x_j, x_j + 1)| (u_k - u_j)^2`.
pub fn band_functional(model: &DiscreteModel1D, m: &[f64]) -> f64 {
    let pi = model.pi();
    let u = ratio(m, pi);
    let grid = model.grid();
    let (e, x) = (grid.edges(), grid.centers());
    let n = grid.len();
    let mut total = 0.0;
    for j in 0..n {
        let top = x[j] + 1.0;
        let mut inner = 0.0;
        for k in j + 1..n {
            if e[k] >= top {
                break;
            }
            let overlap = e[k + 1].min(top) - e[k];
            let d = u[k] - u[j];
            inner += overlap * d * d;
        }
        total += pi[j] * inner;
    }
    total
}

/// One observation of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub g2: f64,
    pub d2: f64,
    /// Finite-difference slope of `G_2`.
    pub dg2dt: f64,
    pub mass: f64,
    pub umin: f64,
    pub umax: f64,
    /// Dissipation of the discretised degradation term (zero in the continuum).
    pub d_scheme: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EntropyTrace {
    pub rows: Vec<TraceRow>,
}

impl EntropyTrace {
    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Central differences inside, one-sided at the ends.
    pub fn finalize(&mut self) {
        let n = self.rows.len();
        if n < 2 {
            return;
        }
        let slope = |i: usize, j: usize, r: &[TraceRow]| (r[j].g2 - r[i].g2) / (r[j].t - r[i].t);
        let d: Vec<f64> = (0..n)
            .map(|i| {
                if i == 0 {
                    slope(0, 1, &self.rows)
                } else if i == n - 1 {
                    slope(n - 2, n - 1, &self.rows)
                } else {
                    slope(i - 1, i + 1, &self.rows)
                }
            })
            .collect();
        for (row, d) in self.rows.iter_mut().zip(d) {
            row.dg2dt = d;
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,G2,D2,dG2dt,mass,umin,umax")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:.15},{:e},{:e}",
                r.t, r.g2, r.d2, r.dg2dt, r.mass, r.umin, r.umax
            )?;
        }
        Ok(())
    }
}

/// Least-squares exponential fit of the tail of a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// Rate of the weighted L2 norm, `sqrt(G_2) ~ exp(-lambda t)`.
    pub lambda_est: f64,
    /// Rate of `G_2` itself, `2 lambda`.
    pub g2_rate: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Fits `log G_2` on the largest suffix window with `R^2 >= 0.99`.
///
/// Rows after `G_2` first drops to ten times [`G2_FLOOR`] are ignored.
pub fn fit_decay_rate(trace: &EntropyTrace) -> Result<DecayFit> {
    let usable: Vec<(f64, f64)> = trace
        .rows
        .iter()
        .take_while(|r| r.g2.is_finite() && r.g2 > 10.0 * G2_FLOOR)
        .map(|r| (r.t, r.g2.ln()))
        .collect();
    if usable.len() < 10 {
        return Err(Error::NoLinearRegime(format!(
            "{} rows above the entropy floor, need 10",
            usable.len()
        )));
    }
    let n = usable.len();
    let (mut st, mut sy, mut stt, mut syy, mut sty) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut best = None;
    for s in (0..n).rev() {
        let (t, y) = usable[s];
        st += t;
        sy += y;
        stt += t * t;
        syy += y * y;
        sty += t * y;
        let k = (n - s) as f64;
        if n - s < 5 {
            continue;
        }
        let vt = stt - st * st / k;
        let vy = syy - sy * sy / k;
        let cov = sty - st * sy / k;
        if vt <= 0.0 {
            continue;
        }
        let slope = cov / vt;
        let r2 = if vy <= 1e-300 { 1.0 } else { (cov * cov / (vt * vy)).min(1.0) };
        if r2 >= 0.99 {
            best = Some(DecayFit {
                lambda_est: -slope / 2.0,
                g2_rate: -slope,
                t_start: usable[s].0,
                t_end: usable[n - 1].0,
                r_squared: r2,
                points: n - s,
            });
        }
    }
    best.ok_or_else(|| Error::NoLinearRegime("no suffix of at least 5 rows reaches R^2 >= 0.99".into()))
}

/// Random probability density on the model's grid: a share of the
/// stationary density mixed with one to three log-normal bumps placed
/// between its 1% and 99% quantiles.
pub fn random_probe_density<R: Rng>(model: &DiscreteModel1D, rng: &mut R) -> Result<Vec<f64>> {
    let pi = model.pi();
    let x = model.grid().centers();
    let mut cum = 0.0;
    let (mut lo, mut hi) = (x[0], x[x.len() - 1]);
    let mut found_lo = false;
    for (k, p) in pi.iter().enumerate() {
        cum += p;
        if !found_lo && cum >= 0.01 {
            lo = x[k];
            found_lo = true;
        }
        if cum >= 0.99 {
            hi = x[k];
            break;
        }
    }
    let lo = lo.max(1e-3);
    let hi = hi.max(2.0 * lo);
    let share: f64 = rng.random_range(0.0..0.5);
    let bumps = rng.random_range(1..=3usize);
    let comps: Vec<(f64, f64, f64)> = (0..bumps)
        .map(|_| {
            let mu = rng.random_range(lo.ln()..hi.ln());
            let sigma = rng.random_range(0.15..0.6);
            let w: f64 = rng.random_range(0.2..1.0);
            (mu, sigma, w)
        })
        .collect();
    let wsum: f64 = comps.iter().map(|c| c.2).sum();
    let st = model.stationary();
    let log_mix = |x: f64| {
        let lx = x.ln();
        let mut terms: Vec<f64> = comps
            .iter()
            .map(|(mu, s, w)| {
                let z = (lx - mu) / s;
                ((1.0 - share) * w / wsum).ln() - 0.5 * z * z - lx - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            })
            .collect();
        if share > 0.0 {
            terms.push(share.ln() + st.log_density(x));
        }
        let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return top;
        }
        top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
    };
    let origin = if share > 0.0 { st.exponents().origin } else { 0.0 };
    model.project_log_density(log_mix, origin)
}

/// Empirical constants of the entropy inequalities over random densities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub samples: usize,
    pub skipped: usize,
    /// `2 beta` estimate: smallest `D_2 / G_2`.
    pub min_d2_over_g2: f64,
    /// Smallest `D_2 / D`.
    pub alpha_hat: f64,
    /// `a eps exp(-1/b) / b`: the explicit constant with `alpha D <= D_2`.
    pub alpha_bound: f64,
    /// Samples with `D > D_2 / alpha_bound`.
    pub violations: usize,
    /// Smallest relative slack `1 - alpha_bound D / D_2`.
    pub worst_margin: f64,
    /// Samples violating the bound with an additional factor `1 / a`.
    pub scaled_violations: usize,
    /// Largest `|G_2 - H_2| / G_2`.
    pub max_g2_h2_gap: f64,
}

impl ProbeReport {
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "samples = {}", self.samples)?;
        writeln!(w, "skipped = {}", self.skipped)?;
        writeln!(w, "min_d2_over_g2 = {:e}", self.min_d2_over_g2)?;
        writeln!(w, "alpha_hat = {:e}", self.alpha_hat)?;
        writeln!(w, "alpha_bound = {:e}", self.alpha_bound)?;
        writeln!(w, "violations = {}", self.violations)?;
        writeln!(w, "worst_margin = {:e}", self.worst_margin)?;
        writeln!(w, "scaled_violations = {}", self.scaled_violations)?;
        writeln!(w, "max_g2_h2_gap = {:e}", self.max_g2_h2_gap)
    }
}

/// Evaluates `G_2`, `H_2`, `D` and `D_2` on `count` seeded random densities.
pub fn probe_inequalities(model: &DiscreteModel1D, count: usize, seed: u64) -> Result<ProbeReport> {
    let spec = model.spec();
    let alpha_bound = spec.a * spec.eps * (-1.0 / spec.b).exp() / spec.b;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ProbeReport {
        samples: 0,
        skipped: 0,
        min_d2_over_g2: f64::INFINITY,
        alpha_hat: f64::INFINITY,
        alpha_bound,
        violations: 0,
        worst_margin: f64::INFINITY,
        scaled_violations: 0,
        max_g2_h2_gap: 0.0,
    };
    for _ in 0..count {
        let m = random_probe_density(model, &mut rng)?;
        let g = g2(&m, model.pi());
        if g < 10.0 * G2_FLOOR {
            report.skipped += 1;
            continue;
        }
        report.samples += 1;
        let h = h2_functional(&m, model.pi());
        let d2 = entropy_production_d2(model, &m);
        let band = band_functional(model, &m);
        report.max_g2_h2_gap = report.max_g2_h2_gap.max((g - h).abs() / g);
        report.min_d2_over_g2 = report.min_d2_over_g2.min(d2 / g);
        if band > 0.0 {
            report.alpha_hat = report.alpha_hat.min(d2 / band);
        }
        let slack = 1.0 - alpha_bound * band / d2;
        report.worst_margin = report.worst_margin.min(slack);
        if alpha_bound * band > d2 * (1.0 + 1e-12) {
            report.violations += 1;
        }
        if alpha_bound * band > d2 / spec.a * (1.0 + 1e-12) {
            report.scaled_violations += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{CellGrid, GridSpec};
    use crate::model::ModelSpec1D;
    use std::sync::Arc;

    fn shape1(cells: usize) -> DiscreteModel1D {
        let spec = ModelSpec1D::new(5.0, 10.0, 45.0, -4, 0.15).unwrap();
        let grid = GridSpec::new(cells).build(spec.a, spec.b, spec.k).unwrap();
        DiscreteModel1D::new(&spec, Arc::new(grid)).unwrap()
    }

    #[test]
    fn stationary_has_zero_entropy() {
        let model = shape1(512);
        let pi = model.pi().to_vec();
        for h in [EntropyFunction::Quadratic, EntropyFunction::Boltzmann, EntropyFunction::Power { p: 3.0 }] {
            assert!(relative_entropy(&pi, &pi, h).unwrap().value.abs() < 1e-15);
        }
        assert_eq!(entropy_production_d2(&model, &pi), 0.0);
        assert_eq!(band_functional(&model, &pi), 0.0);
    }

    #[test]
    fn unnormalised_density_is_rejected() {
        let model = shape1(256);
        let twice: Vec<f64> = model.pi().iter().map(|p| 2.0 * p).collect();
        assert!(relative_entropy(&twice, model.pi(), EntropyFunction::Quadratic).is_err());
    }

    #[test]
    fn two_cell_production_by_hand() {
        let spec = ModelSpec1D::new(2.0, 3.0, 1.0, 1, 1.0).unwrap();
        let grid = CellGrid::from_edges(vec![0.0, 1.0, 3.0]).unwrap();
        let model = DiscreteModel1D::new(&spec, Arc::new(grid)).unwrap();
        let pi = model.pi().to_vec();
        let m = vec![0.25, 0.75];
        let u = [0.25 / pi[0], 0.75 / pi[1]];
        // burst from x = 0.5 into [1, 3]
        let w = (-0.5f64 / 3.0).exp() * (1.0 - (-2.0f64 / 3.0).exp());
        let expected = 2.0 * pi[0] * w * (u[1] - u[0]).powi(2);
        let got = entropy_production_d2(&model, &m);
        assert!((got / expected - 1.0).abs() < 1e-14, "{got} vs {expected}");
        let h2 = pi[0] * pi[1] * (u[1] - u[0]).powi(2);
        assert!((h2_functional(&m, &pi) / h2 - 1.0).abs() < 1e-14);
        // band: x_0 + 1 = 1.5 overlaps [1, 3] by 0.5
        let band = pi[0] * 0.5 * (u[1] - u[0]).powi(2);
        assert!((band_functional(&model, &m) / band - 1.0).abs() < 1e-14);
    }

    #[test]
    fn production_fast_matches_direct() {
        let model = shape1(1024);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let m = random_probe_density(&model, &mut rng).unwrap();
            let fast = entropy_production_d2(&model, &m);
            let slow = entropy_production_d2_direct(&model, &m);
            assert!((fast / slow - 1.0).abs() < 1e-10, "{fast} vs {slow}");
        }
    }

    #[test]
    fn g2_equals_h2_on_random_densities() {
        let model = shape1(512);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let m = random_probe_density(&model, &mut rng).unwrap();
            check_density(&m).unwrap();
            let g = g2(&m, model.pi());
            assert!((h2_functional(&m, model.pi()) / g - 1.0).abs() < 1e-9);
            assert!((h2_fast(&m, model.pi()) / g - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn synthetic_exponential_fit() {
        let mut trace = EntropyTrace::default();
        for i in 0..50 {
            let t = i as f64 * 0.2;
            trace.push(TraceRow {
                t,
                g2: (-2.0 * t).exp(),
                d2: 0.0,
                dg2dt: 0.0,
                mass: 1.0,
                umin: 1.0,
                umax: 1.0,
                d_scheme: 0.0,
            });
        }
        let fit = fit_decay_rate(&trace).unwrap();
        assert!((fit.lambda_est - 1.0).abs() < 1e-12);
        assert!((fit.g2_rate - 2.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(fit.points, 50);
    }

    #[test]
    fn short_trace_has_no_regime() {
        let mut trace = EntropyTrace::default();
        for i in 0..5 {
            trace.push(TraceRow {
                t: i as f64,
                g2: 1.0,
                d2: 0.0,
                dg2dt: 0.0,
                mass: 1.0,
                umin: 1.0,
                umax: 1.0,
                d_scheme: 0.0,
            });
        }
        assert!(matches!(fit_decay_rate(&trace), Err(Error::NoLinearRegime(_))));
    }

    #[test]
    fn probe_constants_hold() {
        let model = shape1(512);
        let r = probe_inequalities(&model, 40, 3).unwrap();
        assert_eq!(r.samples + r.skipped, 40);
        assert!(r.min_d2_over_g2 > 0.0);
        assert_eq!(r.violations, 0, "{r:?}");
        assert!(r.alpha_hat >= r.alpha_bound);
    }
}
