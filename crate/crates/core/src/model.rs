//! Network parameters, Hill-type input functions and the exponential burst kernel.
//!
//! All quantities are dimensionless: time is measured in units of the protein
//! lifetime and protein levels in molecule-number units.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability that the promoter is inactive, `x^H / (x^H + K^H)`.
///
/// Evaluated as `1 / (1 + exp(H (ln K - ln x)))`, which is finite for every
/// `x >= 0` and both signs of `H`. For `H < 0` the limit at the origin is 1.
pub fn hill_rho(x: f64, k: f64, h: i32) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("protein level must be >= 0, got {x}")));
    }
    Ok(rho_unchecked(x, k, h))
}

#[inline]
fn rho_unchecked(x: f64, k: f64, h: i32) -> f64 {
    if x == 0.0 {
        return if h > 0 { 0.0 } else { 1.0 };
    }
    let z = f64::from(h) * (k.ln() - x.ln());
    if z > 700.0 {
        0.0
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// Conditional density of a burst of size `delta`: `exp(-delta/b) / b`.
pub fn burst_kernel(delta: f64, b: f64) -> Result<f64> {
    if !(delta >= 0.0) {
        return Err(Error::Domain(format!("burst size must be >= 0, got {delta}")));
    }
    if !(b > 0.0) {
        return Err(Error::Domain(format!("mean burst size must be > 0, got {b}")));
    }
    Ok((-delta / b).exp() / b)
}

/// Self-regulated single gene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec1D {
    /// Burst frequency `k_m / gamma_x`.
    pub a: f64,
    /// Mean burst size `k_x / gamma_m`.
    pub b: f64,
    /// Equilibrium binding constant.
    pub k: f64,
    /// Hill coefficient; positive for negative feedback, negative for positive feedback.
    pub h: i32,
    /// Leakage `k_eps / k_m`, in (0, 1]. `eps = 1` is the open loop.
    pub eps: f64,
}

impl ModelSpec1D {
    pub fn new(a: f64, b: f64, k: f64, h: i32, eps: f64) -> Result<Self> {
        let spec = Self { a, b, k, h, eps };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidSpec(what.to_string()));
        if !(self.a > 0.0 && self.a.is_finite()) {
            return bad("burst frequency a must be > 0");
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return bad("burst size b must be > 0");
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return bad("binding constant K must be > 0");
        }
        if self.h == 0 {
            return bad("Hill coefficient H must be nonzero");
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return bad("leakage eps must lie in (0, 1]");
        }
        Ok(())
    }

    /// The input function `c(x)` of this gene.
    pub fn input(&self) -> InputFunction {
        InputFunction::Hill {
            axis: 0,
            k: self.k,
            h: self.h,
            eps: self.eps,
        }
    }

    /// `c(x) = (K^H + eps x^H) / (K^H + x^H)`.
    #[inline]
    pub fn c(&self, x: f64) -> f64 {
        1.0 - (1.0 - self.eps) * rho_unchecked(x, self.k, self.h)
    }

    /// View as a one-gene network with unit degradation.
    pub fn to_nd(&self) -> ModelSpecND {
        ModelSpecND {
            genes: vec![GeneSpec {
                k_m: self.a,
                b: self.b,
                input: self.input(),
                degradation: Degradation::Constant { rate: 1.0 },
            }],
        }
    }
}

fn default_axis() -> usize {
    0
}

/// Transcription modulation `c(x)` with image in `[eps_min, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputFunction {
    /// Unregulated transcription, `c = 1`.
    Constant,
    /// `(K^H + eps x^H) / (K^H + x^H)` of coordinate `axis`.
    Hill {
        #[serde(default = "default_axis")]
        axis: usize,
        k: f64,
        h: i32,
        eps: f64,
    },
    /// Two-promoter-site regulation by a gene's own product (`self_axis`) and
    /// another product (`other_axis`), with three leakage levels for the
    /// partially and fully bound states.
    Paired {
        self_axis: usize,
        other_axis: usize,
        k_self: f64,
        h_self: i32,
        k_other: f64,
        h_other: i32,
        /// Leakage when both sites, only the other site, only the own site are bound.
        eps: [f64; 3],
    },
    /// Repression by the product of gene `regulator`:
    /// `(K^H + eps x_r^H) / (K^H + x_r^H)`.
    Repressor {
        regulator: usize,
        k: f64,
        h: i32,
        eps: f64,
    },
}

impl InputFunction {
    /// Smallest value the function can take.
    pub fn eps_min(&self) -> f64 {
        match self {
            Self::Constant => 1.0,
            Self::Hill { eps, .. } | Self::Repressor { eps, .. } => eps.min(1.0),
            Self::Paired { eps, .. } => eps.iter().copied().fold(1.0, f64::min),
        }
    }

    /// Largest state index the function reads.
    pub fn max_axis(&self) -> Option<usize> {
        match self {
            Self::Constant => None,
            Self::Hill { axis, .. } => Some(*axis),
            Self::Repressor { regulator, .. } => Some(*regulator),
            Self::Paired {
                self_axis,
                other_axis,
                ..
            } => Some((*self_axis).max(*other_axis)),
        }
    }

    /// Whether the value depends on coordinate `axis`.
    pub fn depends_on(&self, axis: usize) -> bool {
        match self {
            Self::Constant => false,
            Self::Hill { axis: a, .. } => *a == axis,
            Self::Repressor { regulator, .. } => *regulator == axis,
            Self::Paired {
                self_axis,
                other_axis,
                ..
            } => *self_axis == axis || *other_axis == axis,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if let Some(ax) = self.max_axis() {
            if ax >= dim {
                return Err(Error::InvalidSpec(format!(
                    "input function reads coordinate {ax} but the state has {dim} components"
                )));
            }
        }
        let check = |k: f64, h: i32, eps: &[f64]| -> Result<()> {
            if !(k > 0.0 && k.is_finite()) || h == 0 {
                return Err(Error::InvalidSpec(format!(
                    "Hill parameters need K > 0 and H != 0 (K = {k}, H = {h})"
                )));
            }
            if eps.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
                return Err(Error::InvalidSpec(format!("leakage values must lie in (0, 1]: {eps:?}")));
            }
            Ok(())
        };
        match self {
            Self::Constant => Ok(()),
            Self::Hill { k, h, eps, .. } | Self::Repressor { k, h, eps, .. } => check(*k, *h, &[*eps]),
            Self::Paired {
                self_axis,
                other_axis,
                k_self,
                h_self,
                k_other,
                h_other,
                eps,
            } => {
                if self_axis == other_axis {
                    return Err(Error::InvalidSpec("paired input needs two distinct axes".into()));
                }
                check(*k_self, *h_self, eps)?;
                check(*k_other, *h_other, eps)
            }
        }
    }

    /// Evaluates `c(x)`; checks arity and sign of the state.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if let Some(ax) = self.max_axis() {
            if ax >= x.len() {
                return Err(Error::InvalidSpec(format!(
                    "input function reads coordinate {ax} of a {}-component state",
                    x.len()
                )));
            }
        }
        if let Some(v) = x.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::Domain(format!("state components must be >= 0, got {v}")));
        }
        Ok(self.eval_unchecked(x))
    }

    /// Evaluation without arity or sign checks, for inner loops.
    #[inline]
    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            Self::Constant => 1.0,
            Self::Hill { axis, k, h, eps } => 1.0 - (1.0 - eps) * rho_unchecked(x[*axis], *k, *h),
            Self::Repressor { regulator, k, h, eps } => {
                1.0 - (1.0 - eps) * rho_unchecked(x[*regulator], *k, *h)
            }
            Self::Paired {
                self_axis,
                other_axis,
                k_self,
                h_self,
                k_other,
                h_other,
                eps,
            } => {
                // Dividing the rational form by K_s^H_s K_o^H_o turns it into a
                // convex combination of {eps_1, eps_2, eps_3, 1}.
                let rs = rho_unchecked(x[*self_axis], *k_self, *h_self);
                let ro = rho_unchecked(x[*other_axis], *k_other, *h_other);
                eps[0] * rs * ro + eps[1] * (1.0 - rs) * ro + eps[2] * rs * (1.0 - ro) + (1.0 - rs) * (1.0 - ro)
            }
        }
    }
}

/// Degradation rate `gamma_x^i`. Only constant rates are supported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Degradation {
    Constant { rate: f64 },
}

impl Degradation {
    pub fn rate(&self) -> f64 {
        match self {
            Self::Constant { rate } => *rate,
        }
    }
}

impl Default for Degradation {
    fn default() -> Self {
        Self::Constant { rate: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneSpec {
    /// Transcription rate `k_m^i`.
    pub k_m: f64,
    /// Mean burst size `b_i`.
    pub b: f64,
    pub input: InputFunction,
    #[serde(default)]
    pub degradation: Degradation,
}

impl GeneSpec {
    /// Dimensionless burst frequency `k_m / gamma`.
    pub fn burst_frequency(&self) -> f64 {
        self.k_m / self.degradation.rate()
    }
}

/// A network of `n` genes, each producing one protein in bursts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpecND {
    pub genes: Vec<GeneSpec>,
}

impl ModelSpecND {
    pub fn new(genes: Vec<GeneSpec>) -> Result<Self> {
        let spec = Self { genes };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.genes.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with(false)
    }

    /// As [`ModelSpecND::validate`]; with `allow_silent` a gene may have
    /// `k_m = 0` (pure decay), which only the stochastic simulator accepts.
    pub fn validate_with(&self, allow_silent: bool) -> Result<()> {
        let n = self.genes.len();
        if n == 0 {
            return Err(Error::InvalidSpec("network needs at least one gene".into()));
        }
        for (i, g) in self.genes.iter().enumerate() {
            if !((g.k_m > 0.0 || (allow_silent && g.k_m == 0.0)) && g.k_m.is_finite()) {
                return Err(Error::InvalidSpec(format!("gene {i}: k_m must be > 0")));
            }
            if !(g.b > 0.0 && g.b.is_finite()) {
                return Err(Error::InvalidSpec(format!("gene {i}: b must be > 0")));
            }
            let rate = g.degradation.rate();
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(Error::InvalidSpec(format!("gene {i}: degradation rate must be > 0")));
            }
            g.input.validate(n)?;
        }
        Ok(())
    }

    /// The network is a product of independent genes when every input reads
    /// only its own coordinate.
    pub fn is_separable(&self) -> bool {
        self.genes.iter().enumerate().all(|(i, g)| {
            (0..self.dim()).all(|j| j == i || !g.input.depends_on(j))
        })
    }

    /// Each gene as a one-dimensional model, when separable with Hill or constant inputs.
    pub fn marginal_models(&self) -> Option<Vec<ModelSpec1D>> {
        if !self.is_separable() {
            return None;
        }
        self.genes
            .iter()
            .map(|g| {
                let a = g.burst_frequency();
                // Burst sizes are unaffected by gamma_x; time is rescaled per gene.
                match &g.input {
                    InputFunction::Constant => Some(ModelSpec1D {
                        a,
                        b: g.b,
                        k: 1.0,
                        h: 1,
                        eps: 1.0,
                    }),
                    InputFunction::Hill { k, h, eps, .. } => Some(ModelSpec1D {
                        a,
                        b: g.b,
                        k: *k,
                        h: *h,
                        eps: *eps,
                    }),
                    _ => None,
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rho_at_binding_constant_is_half() {
        assert_eq!(hill_rho(45.0, 45.0, -4).unwrap(), 0.5);
        assert_eq!(hill_rho(45.0, 45.0, 3).unwrap(), 0.5);
    }

    #[test]
    fn rho_limits_at_origin() {
        assert_eq!(hill_rho(0.0, 45.0, 2).unwrap(), 0.0);
        assert_eq!(hill_rho(0.0, 45.0, -4).unwrap(), 1.0);
        assert!(hill_rho(1e-300, 45.0, -4).unwrap() == 1.0);
    }

    #[test]
    fn rho_rationalized_value() {
        // 90^-4 / (90^-4 + 45^-4) = 45^4 / (45^4 + 90^4) = 1/17
        let exact = 45f64.powi(4) / (45f64.powi(4) + 90f64.powi(4));
        let r = hill_rho(90.0, 45.0, -4).unwrap();
        assert!((r - 1.0 / 17.0).abs() < 1e-15);
        assert!((r - exact).abs() < 1e-15);
    }

    #[test]
    fn rho_rejects_negative_level() {
        assert!(matches!(hill_rho(-1.0, 45.0, 2), Err(Error::Domain(_))));
        assert!(matches!(hill_rho(f64::NAN, 45.0, 2), Err(Error::Domain(_))));
    }

    #[test]
    fn open_loop_input_is_one() {
        let c = InputFunction::Hill { axis: 0, k: 45.0, h: -4, eps: 1.0 };
        for x in [0.0, 1e-3, 10.0, 45.0, 1e6] {
            assert_eq!(c.eval(&[x]).unwrap(), 1.0);
        }
        assert_eq!(InputFunction::Constant.eval(&[3.0, 4.0]).unwrap(), 1.0);
    }

    #[test]
    fn positive_feedback_input_tends_to_one() {
        let c = InputFunction::Hill { axis: 0, k: 45.0, h: -4, eps: 0.15 };
        assert!((c.eval(&[1e9]).unwrap() - 1.0).abs() < 1e-12);
        assert!((c.eval(&[0.0]).unwrap() - 0.15).abs() < 1e-15);
    }

    #[test]
    fn repressor_at_binding_constant() {
        let c = InputFunction::Repressor { regulator: 1, k: 45.0, h: 4, eps: 0.15 };
        // (1 + 0.15) / 2
        assert!((c.eval(&[3.0, 45.0]).unwrap() - 0.575).abs() < 1e-15);
    }

    #[test]
    fn paired_matches_rational_form() {
        let c = InputFunction::Paired {
            self_axis: 0,
            other_axis: 1,
            k_self: 45.0,
            h_self: -4,
            k_other: 45.0,
            h_other: 2,
            eps: [0.002, 0.02, 0.2],
        };
        for &(x1, x2) in &[(10.0, 20.0), (45.0, 45.0), (100.0, 3.0), (0.5, 300.0)] {
            let (a, b) = (f64::powi(x1, -4), f64::powi(x2, 2));
            let (ka, kb) = (f64::powi(45.0, -4), f64::powi(45.0, 2));
            let num = 0.002 * a * b + 0.02 * ka * b + 0.2 * a * kb + ka * kb;
            let den = a * b + ka * b + a * kb + ka * kb;
            let v = c.eval(&[x1, x2]).unwrap();
            assert!((v - num / den).abs() < 1e-13, "{x1} {x2}: {v} vs {}", num / den);
        }
    }

    #[test]
    fn arity_mismatch_is_reported() {
        let c = InputFunction::Repressor { regulator: 1, k: 45.0, h: 4, eps: 0.15 };
        assert!(matches!(c.eval(&[1.0]), Err(Error::InvalidSpec(_))));
        assert!(c.validate(1).is_err());
        assert!(c.validate(2).is_ok());
    }

    #[test]
    fn kernel_values() {
        assert_eq!(burst_kernel(0.0, 10.0).unwrap(), 0.1);
        let v = burst_kernel(16.0, 16.0).unwrap();
        assert!((v - (-1f64).exp() / 16.0).abs() < 1e-17);
        assert!((v - 0.022_992_465_073_215_146).abs() < 1e-15);
        assert!(burst_kernel(-1.0, 1.0).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec1D::new(5.0, 10.0, 45.0, -4, 0.15).is_ok());
        assert!(ModelSpec1D::new(0.0, 10.0, 45.0, -4, 0.15).is_err());
        assert!(ModelSpec1D::new(5.0, 10.0, 45.0, 0, 0.15).is_err());
        assert!(ModelSpec1D::new(5.0, 10.0, 45.0, 2, 1.5).is_err());
        assert!(ModelSpec1D::new(5.0, 10.0, 45.0, 2, 0.0).is_err());
    }

    fn variants() -> Vec<InputFunction> {
        vec![
            InputFunction::Hill { axis: 0, k: 45.0, h: -4, eps: 0.15 },
            InputFunction::Hill { axis: 1, k: 30.0, h: 2, eps: 0.3 },
            InputFunction::Repressor { regulator: 1, k: 45.0, h: 4, eps: 0.15 },
            InputFunction::Paired {
                self_axis: 0,
                other_axis: 1,
                k_self: 45.0,
                h_self: -4,
                k_other: 45.0,
                h_other: 2,
                eps: [0.002, 0.02, 0.2],
            },
            InputFunction::Paired {
                self_axis: 1,
                other_axis: 0,
                k_self: 70.0,
                h_self: 2,
                k_other: 70.0,
                h_other: -6,
                eps: [0.002, 0.1, 0.2],
            },
        ]
    }

    #[test]
    fn image_bounds_on_many_states() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for c in variants() {
            let lo = c.eps_min();
            for _ in 0..10_000 {
                let x = [rng.random::<f64>() * 500.0, rng.random::<f64>() * 500.0];
                let v = c.eval(&x).unwrap();
                assert!(v >= lo - 1e-15 && v <= 1.0 + 1e-15, "{c:?} at {x:?}: {v}");
            }
        }
    }

    proptest! {
        #[test]
        fn hill_input_is_monotone(x1 in 0.0f64..1e4, x2 in 0.0f64..1e4, k in 0.1f64..200.0, h in 1i32..8, eps in 0.01f64..0.99) {
            let (lo, hi) = if x1 < x2 { (x1, x2) } else { (x2, x1) };
            let neg = InputFunction::Hill { axis: 0, k, h, eps };
            let pos = InputFunction::Hill { axis: 0, k, h: -h, eps };
            prop_assert!(neg.eval(&[lo]).unwrap() >= neg.eval(&[hi]).unwrap());
            prop_assert!(pos.eval(&[lo]).unwrap() <= pos.eval(&[hi]).unwrap());
        }

        #[test]
        fn rho_complement_identity(x in 1e-6f64..1e6, k in 0.1f64..200.0, h in 1i32..10) {
            let s = hill_rho(x, k, h).unwrap() + hill_rho(x, k, -h).unwrap();
            prop_assert!((s - 1.0).abs() < 1e-14);
        }
    }
}
