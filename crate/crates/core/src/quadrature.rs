//! Adaptive Gauss–Kronrod integration and fixed Gauss–Legendre rules.
//!
//! Integrable power singularities at the left endpoint are removed with the
//! substitution `t = x^(alpha + 1)`, which maps `x^alpha dx` to `dt / (alpha + 1)`.

use std::collections::BinaryHeap;
use std::cmp::Ordering;

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Quad {
    let c = 0.5 * (lo + hi);
    let r = 0.5 * (hi - lo);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = r * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Quad {
        value: kronrod * r,
        error: ((kronrod - gauss) * r).abs(),
    }
}

struct Piece {
    lo: f64,
    hi: f64,
    q: Quad,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.q.error == other.q.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.q.error.total_cmp(&other.q.error)
    }
}

/// Globally adaptive G7/K15 integration of `f` over `[lo, hi]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, rel_tol: f64, abs_tol: f64) -> Result<Quad> {
    const MAX_PIECES: usize = 4000;
    let first = gk15(&f, lo, hi);
    let mut heap = BinaryHeap::new();
    heap.push(Piece { lo, hi, q: first });
    let (mut value, mut error) = (first.value, first.error);
    while error > abs_tol.max(rel_tol * value.abs()) {
        if heap.len() >= MAX_PIECES {
            return Err(Error::Quadrature {
                lo,
                hi,
                estimate: value,
                error,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if !(mid > worst.lo && mid < worst.hi) {
            // interval exhausted at double precision
            heap.push(worst);
            break;
        }
        let left = gk15(&f, worst.lo, mid);
        let right = gk15(&f, mid, worst.hi);
        value += left.value + right.value - worst.q.value;
        error += left.error + right.error - worst.q.error;
        heap.push(Piece { lo: worst.lo, hi: mid, q: left });
        heap.push(Piece { lo: mid, hi: worst.hi, q: right });
    }
    // re-sum to shed accumulated cancellation in the running totals
    let (value, error) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), p| (v + p.q.value, e + p.q.error));
    if !value.is_finite() {
        return Err(Error::Quadrature {
            lo,
            hi,
            estimate: value,
            error,
        });
    }
    Ok(Quad { value, error })
}

/// `int_lo^inf f(x) dx` through `x = lo + t / (1 - t)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, lo: f64, rel_tol: f64, abs_tol: f64) -> Result<Quad> {
    integrate(
        |t| {
            if t >= 1.0 {
                return 0.0;
            }
            let s = 1.0 - t;
            let v = f(lo + t / s) / (s * s);
            if v.is_finite() { v } else { 0.0 }
        },
        0.0,
        1.0,
        rel_tol,
        abs_tol,
    )
}

/// `int_0^hi x^alpha g(x) dx` for `alpha > -1` and bounded `g`.
pub fn integrate_power_weight<G: Fn(f64) -> f64>(
    g: G,
    alpha: f64,
    hi: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Quad> {
    if !(alpha > -1.0) {
        return Err(Error::Domain(format!("power weight x^{alpha} is not integrable at 0")));
    }
    let p = alpha + 1.0;
    let t_hi = hi.powf(p);
    let q = integrate(|t| g(t.powf(1.0 / p)), 0.0, t_hi, rel_tol, abs_tol * p)?;
    Ok(Quad {
        value: q.value / p,
        error: q.error / p,
    })
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            // p1 = P_n(x), p0 = P_{n-1}(x)
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}
