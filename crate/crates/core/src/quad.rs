//! One-dimensional adaptive quadrature plus the closed-form radial and
//! angular integrals that the moment calculations reduce to.

use crate::error::{Error, Result};
use crate::special::{gamma, ln_gamma};
use std::collections::BinaryHeap;

// 15-point Kronrod extension of the 7-point Gauss rule on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_813,
    0.949_107_912_342_759,
    0.864_864_423_359_769,
    0.741_531_185_599_394,
    0.586_087_235_467_691,
    0.405_845_151_377_397,
    0.207_784_955_007_898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529,
    0.063_092_092_629_979,
    0.104_790_010_322_250,
    0.140_653_259_715_525,
    0.169_004_726_639_267,
    0.190_350_578_064_785,
    0.204_432_940_075_298,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_870,
    0.279_705_391_489_277,
    0.381_830_050_505_119,
    0.417_959_183_673_469,
];

/// Value plus a conservative error estimate.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<(f64, f64)> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    if !fc.is_finite() {
        return Err(Error::Singularity(format!("integrand non-finite at {c}")));
    }
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for (j, &x) in XGK.iter().enumerate().take(7) {
        let f1 = f(c - h * x);
        let f2 = f(c + h * x);
        if !f1.is_finite() || !f2.is_finite() {
            return Err(Error::Singularity(format!(
                "integrand non-finite near {}",
                c - h * x
            )));
        }
        kron += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    Ok((kron * h, (kron - gauss).abs() * h))
}

struct Panel {
    err: f64,
    a: f64,
    b: f64,
    val: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Adaptive Gauss-Kronrod integration of `f` over [a, b].
///
/// Splits the worst panel until the summed error estimate drops below
/// `tol * max(1, |integral|)`. Fails with `SolverFailure` if the panel
/// budget is exhausted first.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<QuadResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "quadrature tolerance must be positive, got {tol}"
        )));
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidArgument(
            "quadrature endpoints must be finite; substitute the tail first".into(),
        ));
    }
    if a == b {
        return Ok(QuadResult { value: 0.0, error: 0.0 });
    }
    let (v, e) = gk15(&f, a, b)?;
    let mut heap = BinaryHeap::new();
    heap.push(Panel { err: e, a, b, val: v });
    let mut total_val = v;
    let mut total_err = e;
    let budget = 4000;
    for _ in 0..budget {
        if total_err <= tol * total_val.abs().max(1.0) {
            break;
        }
        let worst = heap.pop().expect("heap cannot be empty while error is positive");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval hit floating-point resolution; accept what we have
            heap.push(worst);
            break;
        }
        let (v1, e1) = gk15(&f, worst.a, mid)?;
        let (v2, e2) = gk15(&f, mid, worst.b)?;
        total_val += v1 + v2 - worst.val;
        total_err += e1 + e2 - worst.err;
        heap.push(Panel { err: e1, a: worst.a, b: mid, val: v1 });
        heap.push(Panel { err: e2, a: mid, b: worst.b, val: v2 });
    }
    if total_err > tol * total_val.abs().max(1.0) {
        return Err(Error::SolverFailure(format!(
            "quadrature did not reach tol {tol:.1e}: value {total_val:.6e}, error {total_err:.1e}"
        )));
    }
    Ok(QuadResult { value: total_val, error: total_err })
}

/// Integral of `f` over [0, inf), folding the tail onto (0, 1] by u -> 1/u.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, tol: f64) -> Result<QuadResult> {
    let head = integrate(&f, 0.0, 1.0, 0.5 * tol)?;
    let tail = integrate(|u| f(1.0 / u) / (u * u), 0.0, 1.0, 0.5 * tol)?;
    Ok(QuadResult {
        value: head.value + tail.value,
        error: head.error + tail.error,
    })
}

/// Closed form for int_0^inf r^a (1 + r^2)^{-q} dr, valid for a > -1 and
/// 2q > a + 1: Gamma((a+1)/2) Gamma(q - (a+1)/2) / (2 Gamma(q)).
pub fn radial_power_integral(a: f64, q: f64) -> Result<f64> {
    let s = 0.5 * (a + 1.0);
    if !(a > -1.0) {
        return Err(Error::InvalidArgument(format!(
            "radial integral diverges at the origin for exponent {a}"
        )));
    }
    if !(q > s) {
        return Err(Error::InvalidArgument(format!(
            "radial integral diverges at infinity: exponent {a}, decay {q}"
        )));
    }
    Ok((ln_gamma(s)? + ln_gamma(q - s)? - ln_gamma(q)?).exp() / 2.0)
}

/// Surface moment int_{S^{n-1}} |w_1|^beta dsigma
/// = 2 pi^{(n-1)/2} Gamma((beta+1)/2) / Gamma((n+beta)/2).
pub fn angular_moment(n_dim: u32, beta: f64) -> Result<f64> {
    if n_dim < 2 {
        return Err(Error::InvalidArgument(
            "angular moment needs ambient dimension >= 2".into(),
        ));
    }
    if !(beta > -1.0) {
        return Err(Error::InvalidArgument(format!(
            "angular moment diverges for weight exponent {beta}"
        )));
    }
    let nf = n_dim as f64;
    Ok(2.0 * std::f64::consts::PI.powf(0.5 * (nf - 1.0)) * gamma(0.5 * (beta + 1.0))?
        / gamma(0.5 * (nf + beta))?)
}

/// Slab marginal constant: int_{R^m} (1 + |t|^2)^{-q} dt
/// = pi^{m/2} Gamma(q - m/2) / Gamma(q), for 2q > m.
pub fn slab_marginal_constant(m_dim: u32, q: f64) -> Result<f64> {
    let half = m_dim as f64 / 2.0;
    if !(q > half) {
        return Err(Error::InvalidArgument(format!(
            "slab marginal diverges: dimension {m_dim}, decay {q}"
        )));
    }
    Ok(std::f64::consts::PI.powf(half) * (ln_gamma(q - half)? - ln_gamma(q)?).exp())
}
