//! Well-balanced finite-volume operator for one axis of the burst equation.
//!
//! Cell masses evolve as a continuous-time Markov chain. A burst from cell `j`
//! starts at the midpoint `x_j` and lands in cell `k > j` with probability
//! `W_jk = exp(-(e_k - x_j) / b) (1 - exp(-h_k / b))`; bursts that stay inside
//! cell `j` are no-ops and bursts past `x_max` are suppressed. Degradation
//! moves mass from cell `k` to `k - 1` at rate `T_k = F_k / pi_k`, where
//! `F_k` is the burst flux across edge `e_k` in the reference state `pi`.
//! Every edge is then balanced in `pi`, so `pi` is an exact invariant of the
//! discrete operator and of its implicit Euler step.
//!
//! All sums over bursts use the recurrence
//! `A_{k+1} = exp(-h_k / b) A_k + (term at k)`, so applying the operator or
//! solving the implicit step costs O(N).

use crate::error::{Error, Result};
use crate::grid::CellGrid;

/// Grid- and burst-size-dependent factors shared by every fiber of an axis.
#[derive(Debug, Clone)]
pub struct AxisKernel {
    /// `exp(-h_k / b)`
    decay: Vec<f64>,
    /// `exp(-(e_{k+1} - x_k) / b)`: leaving the source half-cell
    leave: Vec<f64>,
    /// `1 - exp(-h_k / b)`: landing inside cell `k`
    land: Vec<f64>,
    /// `1 - exp(-(e_N - e_k) / b)` for every edge: staying inside the domain
    reach: Vec<f64>,
}

impl AxisKernel {
    pub fn new(grid: &CellGrid, b: f64) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::InvalidSpec(format!("burst size must be positive, got {b}")));
        }
        let e = grid.edges();
        let n = grid.len();
        let x_max = grid.x_max();
        let decay = grid.widths().iter().map(|h| (-h / b).exp()).collect();
        let land = grid.widths().iter().map(|h| -(-h / b).exp_m1()).collect();
        let leave = (0..n).map(|k| (-(e[k + 1] - grid.centers()[k]) / b).exp()).collect();
        let reach = e.iter().map(|ek| -(-(x_max - ek) / b).exp_m1()).collect();
        Ok(Self {
            decay,
            leave,
            land,
            reach,
        })
    }

    pub fn len(&self) -> usize {
        self.decay.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decay.is_empty()
    }

    /// Jump Dirichlet form `sum_j w_j sum_{k>j} W_jk (u_k - u_j)^2`.
    ///
    /// Suffix recurrences on differences of `u` keep cancellation bounded.
    pub fn dirichlet(&self, weight: &[f64], u: &[f64]) -> f64 {
        let n = self.len();
        // z0, z1, z2 over k >= i with factors exp(-(e_k - e_i)/b) land_k
        let (mut z0, mut z1, mut z2) = (self.land[n - 1], 0.0, 0.0);
        let mut total = 0.0;
        for j in (0..n - 1).rev() {
            let d = u[j + 1] - u[j];
            total += weight[j] * self.leave[j] * (z2 + d * (2.0 * z1 + d * z0));
            let r = self.decay[j];
            z2 = r * (z2 + d * (2.0 * z1 + d * z0));
            z1 = r * (z1 + d * z0);
            z0 = self.land[j] + r * z0;
        }
        total
    }

    /// Same quantity by direct double summation.
    pub fn dirichlet_direct(&self, grid: &CellGrid, b: f64, weight: &[f64], u: &[f64]) -> f64 {
        let e = grid.edges();
        let x = grid.centers();
        let n = self.len();
        let mut total = 0.0;
        for j in 0..n {
            let mut inner = 0.0;
            for k in j + 1..n {
                let w = (-(e[k] - x[j]) / b).exp() * self.land[k];
                let d = u[k] - u[j];
                inner += w * d * d;
            }
            total += weight[j] * inner;
        }
        total
    }
}

/// Rates of the chain on one fiber.
#[derive(Debug, Clone)]
pub struct ChainOperator {
    /// burst rate `a c_k`
    rate: Vec<f64>,
    /// total rate of bursts leaving cell `k` and staying in the domain
    out: Vec<f64>,
    /// degradation rate `T_k` from cell `k` to `k - 1`
    down: Vec<f64>,
}

impl ChainOperator {
    /// Builds the chain balanced in the reference masses `pi` (all > 0).
    pub fn new(kernel: &AxisKernel, rate: Vec<f64>, pi: &[f64]) -> Result<Self> {
        let n = kernel.len();
        if rate.len() != n || pi.len() != n {
            return Err(Error::InvalidSpec(format!(
                "fiber length mismatch: {n} cells, {} rates, {} reference masses",
                rate.len(),
                pi.len()
            )));
        }
        if let Some(k) = pi.iter().position(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidSpec(format!("reference mass in cell {k} is {}", pi[k])));
        }
        let out = (0..n).map(|k| rate[k] * kernel.leave[k] * kernel.reach[k + 1]).collect();
        let mut down = vec![0.0; n];
        let mut acc = 0.0;
        for k in 1..n {
            acc = kernel.decay[k - 1] * acc + pi[k - 1] * rate[k - 1] * kernel.leave[k - 1];
            down[k] = acc * kernel.reach[k] / pi[k];
        }
        Ok(Self { rate, out, down })
    }

    pub fn len(&self) -> usize {
        self.rate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rate.is_empty()
    }

    pub fn rate(&self) -> &[f64] {
        &self.rate
    }

    pub fn down(&self) -> &[f64] {
        &self.down
    }

    /// `dm/dt` for masses `m`.
    pub fn apply(&self, kernel: &AxisKernel, m: &[f64], dm: &mut [f64]) {
        let n = self.len();
        let mut gain = 0.0;
        for k in 0..n {
            if k > 0 {
                gain = kernel.decay[k - 1] * gain + m[k - 1] * self.rate[k - 1] * kernel.leave[k - 1];
            }
            let up = if k + 1 < n { self.down[k + 1] * m[k + 1] } else { 0.0 };
            dm[k] = kernel.land[k] * gain - (self.out[k] + self.down[k]) * m[k] + up;
        }
    }

    /// Solves `(I - dt L) m_new = m_old` in place.
    ///
    /// Forward elimination writes `m_k = alpha_k + beta_k m_{k+1}` and carries
    /// the burst sum into cell `k` as `p_k + q_k m_k`; back substitution
    /// finishes. `scratch` must hold `n` entries.
    pub fn solve_implicit(&self, kernel: &AxisKernel, dt: f64, m: &mut [f64], scratch: &mut [f64]) {
        let n = self.len();
        let beta = &mut scratch[..n];
        let (mut p, mut q) = (0.0, 0.0);
        for k in 0..n {
            let g = kernel.land[k];
            let pivot = 1.0 + dt * (self.down[k] + self.out[k]) - dt * g * q;
            let next_down = if k + 1 < n { self.down[k + 1] } else { 0.0 };
            let alpha = (m[k] + dt * g * p) / pivot;
            beta[k] = dt * next_down / pivot;
            m[k] = alpha;
            if k + 1 < n {
                let w = kernel.decay[k] * q + self.rate[k] * kernel.leave[k];
                p = kernel.decay[k] * p + w * alpha;
                q = w * beta[k];
            }
        }
        for k in (0..n - 1).rev() {
            m[k] += beta[k] * m[k + 1];
        }
    }

    /// Jump Dirichlet form of `u = m / pi` weighted by `pi`: the entropy
    /// production of the burst part.
    pub fn jump_dissipation(&self, kernel: &AxisKernel, pi: &[f64], u: &[f64], weight: &mut Vec<f64>) -> f64 {
        weight.clear();
        weight.extend(pi.iter().zip(&self.rate).map(|(p, r)| p * r));
        kernel.dirichlet(weight, u)
    }

    /// Dissipation of the degradation part, `sum_k pi_k T_k (u_k - u_{k-1})^2`.
    pub fn transport_dissipation(&self, pi: &[f64], u: &[f64]) -> f64 {
        (1..self.len())
            .map(|k| {
                let d = u[k] - u[k - 1];
                pi[k] * self.down[k] * d * d
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize, seed: u64) -> (CellGrid, AxisKernel, ChainOperator, Vec<f64>) {
        let grid = CellGrid::hybrid(n, 1e-4, 0.5, 60.0).unwrap();
        let b = 4.0;
        let kernel = AxisKernel::new(&grid, b).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rate: Vec<f64> = (0..n).map(|_| 3.0 * (0.2 + rng.random::<f64>())).collect();
        let mut pi: Vec<f64> = (0..n).map(|_| 0.1 + rng.random::<f64>()).collect();
        let s: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= s);
        let op = ChainOperator::new(&kernel, rate, &pi).unwrap();
        (grid, kernel, op, pi)
    }

    #[test]
    fn reference_state_is_invariant() {
        let (_, kernel, op, pi) = setup(200, 1);
        let mut dm = vec![0.0; 200];
        op.apply(&kernel, &pi, &mut dm);
        let worst = dm.iter().zip(&pi).map(|(d, p)| (d / p).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-11, "{worst}");
        let mut m = pi.clone();
        let mut scratch = vec![0.0; 200];
        op.solve_implicit(&kernel, 0.1, &mut m, &mut scratch);
        for (a, b) in m.iter().zip(&pi) {
            assert!((a / b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn generator_conserves_mass() {
        let (_, kernel, op, _) = setup(150, 2);
        let m: Vec<f64> = (0..150).map(|k| ((k * 37) % 11) as f64).collect();
        let mut dm = vec![0.0; 150];
        op.apply(&kernel, &m, &mut dm);
        let total: f64 = dm.iter().sum();
        let scale: f64 = dm.iter().map(|v| v.abs()).sum();
        assert!(total.abs() < 1e-13 * scale, "{total}");
    }

    #[test]
    fn implicit_step_inverts_operator() {
        let (_, kernel, op, _) = setup(120, 3);
        let old: Vec<f64> = (0..120).map(|k| 1.0 + (k as f64 * 0.3).sin()).collect();
        let mut m = old.clone();
        let mut scratch = vec![0.0; 120];
        let dt = 0.05;
        op.solve_implicit(&kernel, dt, &mut m, &mut scratch);
        let mut dm = vec![0.0; 120];
        op.apply(&kernel, &m, &mut dm);
        for k in 0..120 {
            let resid = m[k] - dt * dm[k] - old[k];
            assert!(resid.abs() < 1e-12, "cell {k}: {resid}");
            assert!(m[k] >= 0.0);
        }
        let before: f64 = old.iter().sum();
        let after: f64 = m.iter().sum();
        assert!((before - after).abs() < 1e-12 * before);
    }

    #[test]
    fn dirichlet_fast_matches_direct() {
        let (grid, kernel, _, _) = setup(300, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
        let u: Vec<f64> = (0..300).map(|k| 1.0 + 0.5 * (k as f64 * 0.05).cos()).collect();
        let fast = kernel.dirichlet(&w, &u);
        let slow = kernel.dirichlet_direct(&grid, 4.0, &w, &u);
        assert!((fast / slow - 1.0).abs() < 1e-12, "{fast} vs {slow}");
    }

    #[test]
    fn dissipation_equals_entropy_decay() {
        // d/dt sum m^2/pi = -(jump + transport dissipation)
        let (_, kernel, op, pi) = setup(100, 5);
        let m: Vec<f64> = pi.iter().enumerate().map(|(k, p)| p * (1.0 + 0.3 * (k as f64 * 0.2).sin())).collect();
        let u: Vec<f64> = m.iter().zip(&pi).map(|(m, p)| m / p).collect();
        let mut dm = vec![0.0; 100];
        op.apply(&kernel, &m, &mut dm);
        let dg: f64 = dm.iter().zip(&u).map(|(d, u)| 2.0 * u * d).sum();
        let mut buf = Vec::new();
        let diss = op.jump_dissipation(&kernel, &pi, &u, &mut buf) + op.transport_dissipation(&pi, &u);
        assert!((dg + diss).abs() < 1e-11 * diss, "{dg} vs {diss}");
    }
}
