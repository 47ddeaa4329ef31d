//! A one-gene model discretised on a cell grid: stationary cell masses,
//! burst rates at cell midpoints and the balanced chain built from them.

use std::sync::Arc;

use crate::chain::{AxisKernel, ChainOperator};
use crate::error::{Error, Result};
use crate::grid::CellGrid;
use crate::model::ModelSpec1D;
use crate::stationary::Stationary;

#[derive(Debug, Clone)]
pub struct DiscreteModel1D {
    spec: ModelSpec1D,
    grid: Arc<CellGrid>,
    stationary: Stationary,
    pi: Vec<f64>,
    c: Vec<f64>,
    kernel: AxisKernel,
    chain: ChainOperator,
}

impl DiscreteModel1D {
    pub fn new(spec: &ModelSpec1D, grid: Arc<CellGrid>) -> Result<Self> {
        let stationary = Stationary::new(spec)?;
        let pi = stationary.cell_masses(&grid)?;
        if let Some(k) = pi.iter().position(|p| !(*p > 0.0)) {
            return Err(Error::InvalidSpec(format!(
                "stationary mass underflows in cell {k} at x = {}; shrink x_max",
                grid.centers()[k]
            )));
        }
        let c: Vec<f64> = grid.centers().iter().map(|&x| spec.c(x)).collect();
        let kernel = AxisKernel::new(&grid, spec.b)?;
        let rate = c.iter().map(|c| spec.a * c).collect();
        let chain = ChainOperator::new(&kernel, rate, &pi)?;
        Ok(Self {
            spec: *spec,
            grid,
            stationary,
            pi,
            c,
            kernel,
            chain,
        })
    }

    pub fn spec(&self) -> &ModelSpec1D {
        &self.spec
    }

    pub fn grid(&self) -> &Arc<CellGrid> {
        &self.grid
    }

    pub fn stationary(&self) -> &Stationary {
        &self.stationary
    }

    /// Stationary cell masses, summing to one.
    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    /// Input function at cell midpoints.
    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn kernel(&self) -> &AxisKernel {
        &self.kernel
    }

    pub fn chain(&self) -> &ChainOperator {
        &self.chain
    }

    /// Masses of a density given in log form, normalised over the grid.
    pub fn project_log_density<F: Fn(f64) -> f64>(&self, log_density: F, origin_exponent: f64) -> Result<Vec<f64>> {
        let mut m = crate::stationary::cell_integrals(&self.grid, log_density, origin_exponent)?;
        let total: f64 = m.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Domain(format!("density has grid mass {total}")));
        }
        m.iter_mut().for_each(|v| *v /= total);
        Ok(m)
    }

    /// Gamma density `x^(a-1) e^(-x/b) / (b^a Gamma(a))` projected on the grid:
    /// the open-loop stationary state with this model's burst parameters.
    pub fn gamma_masses(&self) -> Result<Vec<f64>> {
        let (a, b) = (self.spec.a, self.spec.b);
        self.project_log_density(|x| (a - 1.0) * x.ln() - x / b, a - 1.0)
    }
}
