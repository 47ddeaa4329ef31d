//! Closed-form stationary density of the one-gene model, its normalisation,
//! endpoint behaviour and qualitative shape.
//!
//! Up to normalisation the stationary density is
//! `[x^H + K^H]^(a (eps - 1) / H) x^(a - 1) exp(-x / b)`. It is evaluated in
//! log form, `ln(x^H + K^H)` being a log-sum-exp of `H ln x` and `H ln K`,
//! so that neither sign of `H` overflows near the origin or in the tail.

use std::fmt;

use crate::error::{Error, Result};
use crate::grid::{CellGrid, GridSpec};
use crate::model::ModelSpec1D;
use crate::quadrature::{gauss_legendre, integrate, integrate_power_weight, integrate_to_infinity};

const QUAD_REL_TOL: f64 = 1e-13;

fn log_add_exp(u: f64, v: f64) -> f64 {
    let (hi, lo) = if u > v { (u, v) } else { (v, u) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Natural log of the unnormalised stationary density at `x > 0`.
pub fn log_stationary_unnormalized(x: f64, spec: &ModelSpec1D) -> f64 {
    let lx = x.ln();
    let h = f64::from(spec.h);
    let q = spec.a * (spec.eps - 1.0) / h;
    let bracket = if q == 0.0 {
        0.0
    } else {
        q * log_add_exp(h * lx, h * spec.k.ln())
    };
    bracket + (spec.a - 1.0) * lx - x / spec.b
}

/// Unnormalised stationary density (normalising constant excluded).
pub fn stationary_unnormalized(x: f64, spec: &ModelSpec1D) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("stationary density needs x > 0, got {x}")));
    }
    Ok(log_stationary_unnormalized(x, spec).exp())
}

/// Power-law behaviour of the stationary density at both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndpointExponents {
    /// `P(x) ~ x^origin` as `x -> 0`.
    pub origin: f64,
    /// `P(x) ~ x^tail exp(-x / b)` as `x -> inf`.
    pub tail: f64,
    pub tail_rate: f64,
}

pub fn endpoint_exponents(spec: &ModelSpec1D) -> EndpointExponents {
    let (origin, tail) = if spec.eps == 1.0 {
        (spec.a - 1.0, spec.a - 1.0)
    } else if spec.h > 0 {
        (spec.a - 1.0, spec.a * spec.eps - 1.0)
    } else {
        (spec.a * spec.eps - 1.0, spec.a - 1.0)
    };
    EndpointExponents {
        origin,
        tail,
        tail_rate: 1.0 / spec.b,
    }
}

/// Cell integrals of `exp(log_density)` on `grid`.
///
/// Cell 0 is integrated adaptively with the weight `x^origin_exponent`
/// factored out; every other cell uses a 16-point Gauss–Legendre rule.
pub fn cell_integrals<F: Fn(f64) -> f64>(grid: &CellGrid, log_density: F, origin_exponent: f64) -> Result<Vec<f64>> {
    let (nodes, weights) = gauss_legendre(16);
    let edges = grid.edges();
    let mut out = Vec::with_capacity(grid.len());
    let alpha = origin_exponent.max(-1.0 + 1e-12);
    let hi0 = edges[1];
    let first = integrate_power_weight(
        |x| {
            if x <= 0.0 {
                // limit of the regular factor at the origin
                let xs = hi0 * 1e-12;
                (log_density(xs) - alpha * xs.ln()).exp()
            } else {
                (log_density(x) - alpha * x.ln()).exp()
            }
        },
        alpha,
        hi0,
        1e-12,
        0.0,
    )?;
    out.push(first.value);
    for w in edges[1..].windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (c, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        let s: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(t, wt)| wt * log_density(c + r * t).exp())
            .sum();
        out.push(s * r);
    }
    Ok(out)
}

/// A normalised stationary density.
#[derive(Debug, Clone)]
pub struct Stationary {
    spec: ModelSpec1D,
    log_z: f64,
    exponents: EndpointExponents,
}

impl Stationary {
    /// Computes `Z = 1 / int_0^inf P_unnormalised` by adaptive quadrature.
    pub fn new(spec: &ModelSpec1D) -> Result<Self> {
        spec.validate()?;
        let exponents = endpoint_exponents(spec);
        let split = spec.b.min(spec.k);
        let x_far = 50.0 * spec.b.max(spec.k);
        // shift by the log density at a representative level to keep the integrand O(1)
        let shift = (1..=400)
            .map(|i| split * 1e-2 * (x_far / (split * 1e-2)).powf(i as f64 / 400.0))
            .map(|x| log_stationary_unnormalized(x, spec))
            .fold(f64::NEG_INFINITY, f64::max);
        let f = |x: f64| (log_stationary_unnormalized(x, spec) - shift).exp();
        let alpha = exponents.origin;
        let head = integrate_power_weight(
            |x| {
                let x = x.max(f64::MIN_POSITIVE);
                (log_stationary_unnormalized(x, spec) - alpha * x.ln() - shift).exp()
            },
            alpha,
            split,
            QUAD_REL_TOL,
            0.0,
        )?;
        let body = integrate(f, split, x_far, QUAD_REL_TOL, 0.0)?;
        let tail = integrate_to_infinity(f, x_far, 1e-10, 1e-300)?;
        let total = head.value + body.value + tail.value;
        Ok(Self {
            spec: *spec,
            log_z: -(total.ln() + shift),
            exponents,
        })
    }

    pub fn spec(&self) -> &ModelSpec1D {
        &self.spec
    }

    /// Normalising constant `Z`.
    pub fn z(&self) -> f64 {
        self.log_z.exp()
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    pub fn exponents(&self) -> EndpointExponents {
        self.exponents
    }

    pub fn log_density(&self, x: f64) -> f64 {
        self.log_z + log_stationary_unnormalized(x, &self.spec)
    }

    pub fn density(&self, x: f64) -> f64 {
        self.log_density(x).exp()
    }

    /// Masses of the stationary density in each cell, rescaled to sum to one
    /// over the grid.
    pub fn cell_masses(&self, grid: &CellGrid) -> Result<Vec<f64>> {
        let mut m = cell_integrals(grid, |x| self.log_density(x), self.exponents.origin)?;
        let total: f64 = m.iter().sum();
        m.iter_mut().for_each(|v| *v /= total);
        Ok(m)
    }

    /// Samples on the given abscissae (all > 0).
    pub fn profile(&self, xs: Vec<f64>) -> Result<StationaryProfile> {
        if xs.is_empty() || xs[0] <= 0.0 || xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidSpec("profile abscissae must be positive and increasing".into()));
        }
        let values = xs.iter().map(|&x| self.density(x)).collect();
        let mass = self.mass_check()?;
        Ok(StationaryProfile {
            grid: xs,
            values,
            z: self.z(),
            origin_exponent: self.exponents.origin,
            tail_exponent: self.exponents.tail,
            mass,
        })
    }

    /// Independent quadrature of the normalised density, split differently from [`Stationary::new`].
    pub fn mass_check(&self) -> Result<f64> {
        let alpha = self.exponents.origin;
        let split = 0.5 * self.spec.k.max(self.spec.b);
        let head = integrate_power_weight(
            |x| {
                let x = x.max(f64::MIN_POSITIVE);
                (self.log_density(x) - alpha * x.ln()).exp()
            },
            alpha,
            split,
            QUAD_REL_TOL,
            0.0,
        )?;
        let tail = integrate_to_infinity(|x| self.density(x), split, QUAD_REL_TOL, 1e-300)?;
        Ok(head.value + tail.value)
    }
}

/// Quadrature and sampling options for [`normalize`].
#[derive(Debug, Clone)]
pub struct ProfileConfig {
    pub grid: GridSpec,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self { grid: GridSpec::new(4096) }
    }
}

/// Normalised stationary samples with their normalising constant.
#[derive(Debug, Clone)]
pub struct StationaryProfile {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub z: f64,
    pub origin_exponent: f64,
    pub tail_exponent: f64,
    pub mass: f64,
}

/// Normalised profile sampled at the positive edges of the configured grid.
pub fn normalize(spec: &ModelSpec1D, config: &ProfileConfig) -> Result<StationaryProfile> {
    let st = Stationary::new(spec)?;
    let grid = config.grid.build(spec.a, spec.b, spec.k)?;
    st.profile(grid.edges()[1..].to_vec())
}

/// Behaviour of the stationary density at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OriginLimit {
    Infinite,
    Zero,
    Finite(f64),
}

/// The five qualitative regimes, plus the boundary `a eps = 1` (or `a = 1`)
/// where the density has a finite positive limit at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeCase {
    /// Single peak at the origin.
    One,
    /// Peak at the origin and one interior peak.
    Two,
    /// Single interior peak on the low-expression side (below `K`).
    Three,
    /// Two interior peaks.
    Four,
    /// Single interior peak on the high-expression side (at or above `K`).
    Five,
    /// Finite positive limit at the origin.
    Boundary,
    /// Peak pattern not covered by the taxonomy at this resolution.
    Unclassified,
}

impl ShapeCase {
    pub fn id(&self) -> Option<u8> {
        match self {
            Self::One => Some(1),
            Self::Two => Some(2),
            Self::Three => Some(3),
            Self::Four => Some(4),
            Self::Five => Some(5),
            Self::Boundary | Self::Unclassified => None,
        }
    }
}

impl fmt::Display for ShapeCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.id() {
            Some(id) => write!(f, "case {id}"),
            None if *self == Self::Boundary => write!(f, "boundary"),
            None => write!(f, "unclassified"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeClass {
    pub case: ShapeCase,
    pub origin_limit: OriginLimit,
    pub peak_locations: Vec<f64>,
    pub peak_prominences: Vec<f64>,
}

/// Interior local maxima with their topographic prominence.
fn interior_peaks(xs: &[f64], ys: &[f64]) -> Vec<(usize, f64)> {
    let n = ys.len();
    let mut peaks = Vec::new();
    for i in 1..n.saturating_sub(1) {
        if !(ys[i] > ys[i - 1] && ys[i] >= ys[i + 1]) {
            continue;
        }
        let mut left_min = ys[i];
        for j in (0..i).rev() {
            if ys[j] > ys[i] {
                break;
            }
            left_min = left_min.min(ys[j]);
        }
        let mut right_min = ys[i];
        for &y in &ys[i + 1..] {
            if y > ys[i] {
                break;
            }
            right_min = right_min.min(y);
        }
        peaks.push((i, ys[i] - left_min.max(right_min)));
    }
    let _ = xs;
    peaks
}

/// Relative prominence a peak needs to count.
pub const PEAK_PROMINENCE: f64 = 0.01;

/// Classifies a normalised profile.
///
/// Interior peaks are local maxima whose prominence is at least 1% of the
/// largest interior value; peaks between a tenth of that and the threshold
/// make the result ambiguous.
pub fn classify_shape(profile: &StationaryProfile, spec: &ModelSpec1D) -> Result<ShapeClass> {
    let ex = endpoint_exponents(spec);
    let origin_limit = if ex.origin < 0.0 {
        OriginLimit::Infinite
    } else if ex.origin > 0.0 {
        OriginLimit::Zero
    } else {
        OriginLimit::Finite(profile.z * (log_stationary_unnormalized(1e-200, spec)).exp())
    };
    let peaks = interior_peaks(&profile.grid, &profile.values);
    // the singular origin would dominate a plain global maximum
    let reference = peaks
        .iter()
        .map(|(i, _)| profile.values[*i])
        .fold(0.0f64, f64::max)
        .max(if ex.origin >= 0.0 {
            profile.values.iter().copied().fold(0.0, f64::max)
        } else {
            0.0
        });
    let threshold = PEAK_PROMINENCE * reference;
    let mut locations = Vec::new();
    let mut prominences = Vec::new();
    for &(i, prom) in &peaks {
        if prom >= threshold {
            locations.push(profile.grid[i]);
            prominences.push(prom);
        } else if prom >= 0.1 * threshold {
            return Err(Error::AmbiguousShape {
                x: profile.grid[i],
                prominence: prom,
                threshold,
            });
        }
    }
    let case = match (origin_limit, locations.len()) {
        (OriginLimit::Finite(_), _) => ShapeCase::Boundary,
        (OriginLimit::Infinite, 0) => ShapeCase::One,
        (OriginLimit::Infinite, 1) => ShapeCase::Two,
        (OriginLimit::Zero, 1) if locations[0] < spec.k => ShapeCase::Three,
        (OriginLimit::Zero, 1) => ShapeCase::Five,
        (OriginLimit::Zero, 2) => ShapeCase::Four,
        _ => ShapeCase::Unclassified,
    };
    Ok(ShapeClass {
        case,
        origin_limit,
        peak_locations: locations,
        peak_prominences: prominences,
    })
}
