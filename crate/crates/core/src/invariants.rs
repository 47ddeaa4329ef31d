//! Structural checks along a run: mass conservation, positivity, the maximum
//! principle for `u = p / P`, L1 contraction between two solutions and decay
//! of the weighted L2 norm `sum P u^2`.

use std::io::Write;

use serde::Serialize;

use crate::entropy::{ratio, PI_FLOOR};
use crate::error::Result;
use crate::solver1d::StepStats;

/// Worst violations observed over a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvariantReport {
    pub steps: usize,
    pub duration: f64,
    pub max_mass_drift: f64,
    /// Total clipped mass divided by the run duration.
    pub clip_rate: f64,
    pub min_before_clip: f64,
    /// Largest growth of `max u` or decrease of `min u` in one step,
    /// relative to `max(1, max |u|)` at the start.
    pub max_principle_breach: f64,
    /// Largest one-step increase of the L1 distance between the two solutions.
    pub l1_breach: f64,
    /// Largest one-step increase of `sum m^2 / P`, relative to its initial value.
    pub l2_breach: f64,
}

/// Acceptance limits for an [`InvariantReport`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantLimits {
    pub mass: f64,
    pub clip_rate: f64,
    pub max_principle: f64,
    pub l1: f64,
    pub l2: f64,
}

impl InvariantLimits {
    pub const ONE_D: Self = Self {
        mass: 1e-6,
        clip_rate: 1e-8,
        max_principle: 1e-6,
        l1: 1e-8,
        l2: 1e-6,
    };
    pub const N_D: Self = Self {
        mass: 1e-5,
        clip_rate: 1e-8,
        max_principle: 1e-6,
        l1: 1e-6,
        l2: 1e-6,
    };
}

/// One named pass/fail line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl InvariantReport {
    pub fn checks(&self, limits: &InvariantLimits) -> Vec<Check> {
        let c = |name, value: f64, limit: f64| Check {
            name,
            value,
            limit,
            pass: value < limit,
        };
        vec![
            c("mass_drift", self.max_mass_drift, limits.mass),
            c("clip_rate", self.clip_rate, limits.clip_rate),
            c("max_principle", self.max_principle_breach, limits.max_principle),
            c("l1_contraction", self.l1_breach, limits.l1),
            c("l2_bound", self.l2_breach, limits.l2),
        ]
    }

    pub fn passes(&self, limits: &InvariantLimits) -> bool {
        self.checks(limits).iter().all(|c| c.pass)
    }
}

pub fn write_checks<W: Write>(mut w: W, checks: &[Check]) -> std::io::Result<()> {
    for c in checks {
        writeln!(
            w,
            "{:<16} {} value={:.3e} limit={:.1e}",
            c.name,
            if c.pass { "PASS" } else { "FAIL" },
            c.value,
            c.limit
        )?;
    }
    Ok(())
}

fn u_range(m: &[f64], pi: &[f64]) -> (f64, f64) {
    ratio(m, pi)
        .iter()
        .zip(pi)
        .filter(|(_, p)| **p >= PI_FLOOR)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (u, _)| (lo.min(*u), hi.max(*u)))
}

fn weighted_l2(m: &[f64], pi: &[f64]) -> f64 {
    m.iter()
        .zip(pi)
        .filter(|(_, p)| **p >= PI_FLOOR)
        .map(|(m, p)| m * m / p)
        .sum()
}

/// Advances two solutions `p` and `q` with `step` and records the worst
/// violations. `pi` must be the fixed point of `step`.
pub fn run_battery<S>(pi: &[f64], p: &mut [f64], q: &mut [f64], dt: f64, steps: usize, mut step: S) -> Result<InvariantReport>
where
    S: FnMut(&mut [f64]) -> Result<StepStats>,
{
    let mass0: f64 = p.iter().sum();
    let (mut lo, mut hi) = u_range(p, pi);
    let scale = hi.abs().max(lo.abs()).max(1.0);
    let l2_0 = weighted_l2(p, pi);
    let mut l2 = l2_0;
    let mut dist: f64 = p.iter().zip(q.iter()).map(|(a, b)| (a - b).abs()).sum();
    let mut report = InvariantReport {
        steps,
        duration: steps as f64 * dt,
        max_mass_drift: 0.0,
        clip_rate: 0.0,
        min_before_clip: f64::INFINITY,
        max_principle_breach: 0.0,
        l1_breach: 0.0,
        l2_breach: 0.0,
    };
    let mut clipped = 0.0;
    for _ in 0..steps {
        let sp = step(p)?;
        let sq = step(q)?;
        clipped += sp.clipped + sq.clipped;
        report.min_before_clip = report.min_before_clip.min(sp.min_before_clip).min(sq.min_before_clip);
        let mass: f64 = p.iter().sum();
        report.max_mass_drift = report.max_mass_drift.max((mass - mass0).abs());
        let (nlo, nhi) = u_range(p, pi);
        report.max_principle_breach = report
            .max_principle_breach
            .max((nhi - hi) / scale)
            .max((lo - nlo) / scale);
        lo = nlo;
        hi = nhi;
        let nl2 = weighted_l2(p, pi);
        report.l2_breach = report.l2_breach.max((nl2 - l2) / l2_0);
        l2 = nl2;
        let nd: f64 = p.iter().zip(q.iter()).map(|(a, b)| (a - b).abs()).sum();
        report.l1_breach = report.l1_breach.max(nd - dist);
        dist = nd;
    }
    report.clip_rate = clipped / report.duration.max(f64::MIN_POSITIVE);
    Ok(report)
}
