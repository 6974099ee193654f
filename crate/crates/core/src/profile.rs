//! Potential profiles: flat background with localized power-law dips around
//! each lattice point of the strip.
//!
//! A profile is K(y) = 1 + cut(|yhat|/delta) sum_i a_i |yhat_i|^{b_i}, where
//! yhat is y with the periodic coordinates folded into the base cell. The
//! cutoff is smooth, equal to 1 on [0, 1/2] and 0 from 1 on, so K is exactly
//! flat away from the lattice and the dips never overlap.

use crate::bubble::Dimension;
use crate::error::{Error, Result};

/// One power-law well in a single coordinate direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipTerm {
    /// 0-based coordinate index the well varies in.
    pub coord: usize,
    /// Signed strength; wells that drive concentration are negative.
    pub amplitude: f64,
    /// Power of the well, strictly between n-2 and n.
    pub exponent: f64,
}

/// A single potential: background 1 plus localized dips.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PotentialProfile {
    pub terms: Vec<DipTerm>,
    /// Support radius of the cutoff around each lattice point.
    pub cutoff_radius: f64,
}

/// Smooth transition equal to 1 for u <= 1/2 and 0 for u >= 1.
pub fn smooth_step_down(u: f64) -> f64 {
    fn bump(t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            (-1.0 / t).exp()
        }
    }
    let rise = bump(2.0 - 2.0 * u);
    let fall = bump(2.0 * u - 1.0);
    if rise == 0.0 {
        0.0
    } else {
        rise / (rise + fall)
    }
}

/// Fold the first k coordinates of `y` into [-period/2, period/2).
fn periodize(dim: Dimension, period: f64, y: &[f64], out: &mut [f64]) {
    let k = dim.k() as usize;
    for (i, (o, v)) in out.iter_mut().zip(y).enumerate() {
        *o = if i < k {
            v - period * (v / period).round()
        } else {
            *v
        };
    }
}

impl PotentialProfile {
    /// Structural admissibility of the dips. Each failed inequality is
    /// reported by name so configuration errors are actionable.
    pub fn validate(&self, dim: Dimension, period: f64) -> Result<()> {
        let nf = dim.nf();
        if self.terms.is_empty() {
            return Err(Error::InvalidArgument(
                "potential needs at least one dip term".into(),
            ));
        }
        for t in &self.terms {
            if t.coord >= dim.n() as usize {
                return Err(Error::InvalidArgument(format!(
                    "dip coordinate {} out of range for ambient dimension {}",
                    t.coord,
                    dim.n()
                )));
            }
            if t.amplitude == 0.0 || !t.amplitude.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "dip amplitude must be finite and nonzero, got {}",
                    t.amplitude
                )));
            }
            if !(t.exponent > nf - 2.0) {
                return Err(Error::InvalidArgument(format!(
                    "dip exponent {} must exceed n - 2 = {}",
                    t.exponent,
                    nf - 2.0
                )));
            }
            if !(t.exponent < nf) {
                return Err(Error::InvalidArgument(format!(
                    "dip exponent {} must stay below n = {nf}",
                    t.exponent
                )));
            }
        }
        let min_b = self.terms.iter().map(|t| t.exponent).fold(f64::INFINITY, f64::min);
        let max_b = self.terms.iter().map(|t| t.exponent).fold(0.0, f64::max);
        if max_b > min_b * (1.0 + 1.0 / (nf - 2.0)) {
            return Err(Error::InvalidArgument(format!(
                "dip exponents too spread: {max_b} exceeds {min_b} * (1 + 1/(n-2))"
            )));
        }
        let total: f64 = self.terms.iter().map(|t| t.amplitude).sum();
        if !(total < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "dip amplitudes must sum negative to attract concentration, got {total}"
            )));
        }
        if !(self.cutoff_radius > 0.0) || !(self.cutoff_radius < 0.5 * period) {
            return Err(Error::InvalidArgument(format!(
                "cutoff radius {} must lie strictly between 0 and period/2 = {}",
                self.cutoff_radius,
                0.5 * period
            )));
        }
        let depth: f64 = self
            .terms
            .iter()
            .map(|t| t.amplitude.abs() * self.cutoff_radius.powf(t.exponent))
            .sum();
        if !(depth < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "dip depth {depth} reaches the background level; potential would not stay positive"
            )));
        }
        Ok(())
    }

    /// K(y) for the strip geometry; periodic in the first k coordinates.
    pub fn value(&self, dim: Dimension, period: f64, y: &[f64]) -> f64 {
        let mut folded = vec![0.0; y.len()];
        periodize(dim, period, y, &mut folded);
        let r = folded.iter().map(|v| v * v).sum::<f64>().sqrt();
        let cut = smooth_step_down(r / self.cutoff_radius);
        if cut == 0.0 {
            return 1.0;
        }
        let dip: f64 = self
            .terms
            .iter()
            .map(|t| t.amplitude * folded[t.coord].abs().powf(t.exponent))
            .sum();
        1.0 + cut * dip
    }

    /// Sum of dip strengths; the attraction driving the reduced equations.
    pub fn amplitude_sum(&self) -> f64 {
        self.terms.iter().map(|t| t.amplitude).sum()
    }
}
