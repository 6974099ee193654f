//! The finite-dimensional balance that pins the concentration parameters.
//!
//! Projecting the residual of the projected pair onto the translation and
//! dilation modes leaves n + 1 scalar balances. At leading order the n
//! translation components are linear in the scaled offset mu x_h, and the
//! dilation component balances the potential wells (decaying like
//! mu^{-beta}) against the attraction between a bubble and its periodic
//! images (decaying like mu^{-(n-2)} L^{-(n-2)}). This module assembles the
//! balance coefficients from closed-form profile integrals, solves the
//! system for (x_L, mu_L), and runs finite-mu crosschecks that measure what
//! the leading-order assembly drops.

use rayon::prelude::*;

use crate::ansatz::AnsatzField;
use crate::bubble::{Dimension, SyncCouple};
use crate::error::{Error, Result};
use crate::lattice::StripLattice;
use crate::moments::{
    dilation_mass, dilation_mass_quadrature, total_mass, total_mass_quadrature,
    weighted_dilation_pairing, weighted_dilation_pairing_quadrature, weighted_gradient_pairing,
    weighted_gradient_pairing_quadrature,
};
use crate::norm::{Cloud, WeightField};
use crate::profile::PotentialProfile;
use crate::quad::{integrate, integrate_to_infinity, slab_marginal_constant};

/// Tolerance used for the dual-route error estimates of the assembled
/// constants.
const CONSTANT_TOL: f64 = 1e-11;

/// A value together with the certified error of its computation route (the
/// dual-route disagreement for quadratures, the truncation tail for lattice
/// sums).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certified {
    pub value: f64,
    pub error: f64,
}

/// One potential well feeding a translation balance.
#[derive(Debug, Clone)]
struct GradTerm {
    coord: usize,
    amplitude: f64,
    exponent: f64,
    /// Pairing of the well's gradient with the translation mode.
    pairing: Certified,
}

/// Per-equation data: the shared amplitude power, the leading well set, and
/// the translation pairings of every well.
#[derive(Debug, Clone)]
struct BalanceRow {
    /// s^crit for the first component, t^crit for the second.
    scale_pow: f64,
    /// Smallest well exponent in this row.
    leading_exponent: f64,
    /// Sum of amplitudes over wells at the leading exponent.
    leading_amplitude: f64,
    /// Pairing of the leading wells with the dilation mode.
    dip_pairing: Certified,
    grad_terms: Vec<GradTerm>,
}

/// Assembled coefficients of the reduced balances for one configuration.
/// Period-independent: the period enters only when a balance is evaluated.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    dim: Dimension,
    sync: SyncCouple,
    theta: f64,
    rows: [BalanceRow; 2],
    /// Total mass of the standard source profile.
    mass: Certified,
    /// Pairing of the degree-two source power with the dilation mode;
    /// negative.
    dil_mass: Certified,
    /// Image interaction constant at unit period.
    s_unit: Certified,
}

/// Translation components plus the dilation component, in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedResidual(pub Vec<f64>);

/// Finite-mu check of one translation balance against its linearization.
#[derive(Debug, Clone, Copy)]
pub struct OffsetBalanceReport {
    /// Coordinate the check ran on.
    pub coordinate: usize,
    /// Full well integral at the shifted center, by quadrature.
    pub full: f64,
    /// Linear model: balance slope times the scaled offset.
    pub linear: f64,
    /// |full - linear| / |linear|.
    pub rel_dev: f64,
    /// Expected relative size of the dropped terms, (mu x_h)^2.
    pub predicted_quadratic: f64,
    /// Deviation from linearity when the offset is halved.
    pub halving_rel_dev: f64,
}

/// Finite-mu check of the two dilation balance terms; their ratio crosses
/// -1 at the balance scale.
#[derive(Debug, Clone, Copy)]
pub struct DilationBalanceReport {
    pub term_dip: f64,
    pub term_interaction: f64,
    pub ratio: f64,
}

/// Measured decay of the weighted residual norm across a scale grid.
#[derive(Debug, Clone)]
pub struct ScalingStudy {
    pub mu_grid: Vec<f64>,
    pub norms: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Largest pointwise log-residual against the fitted line.
    pub max_fit_residual: f64,
    pub levels: u32,
}

fn certify(closed: f64, quadrature: f64) -> Certified {
    Certified {
        value: closed,
        error: (closed - quadrature).abs() + CONSTANT_TOL * closed.abs(),
    }
}

impl ReducedSystem {
    /// Assemble the balance coefficients for a pair of potentials. The
    /// profiles must be admissible at `period_floor`, the smallest period
    /// the system will be solved at; `theta` is the offset-regime exponent
    /// used by the |x_L| <= mu_L^{-1-theta} check.
    pub fn new(
        dim: Dimension,
        sync: SyncCouple,
        k1: &PotentialProfile,
        k2: &PotentialProfile,
        theta: f64,
        period_floor: f64,
    ) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "offset-regime exponent must be positive and finite, got {theta}"
            )));
        }
        k1.validate(dim, period_floor)?;
        k2.validate(dim, period_floor)?;
        let mass = certify(total_mass(dim)?, total_mass_quadrature(dim, CONSTANT_TOL)?);
        let dil_mass = certify(dilation_mass(dim)?, dilation_mass_quadrature(dim, CONSTANT_TOL)?);
        let unit_lattice = StripLattice::new(dim, 1.0)?;
        let s_sum = unit_lattice.lattice_constant(1e-10)?;
        let s_unit = Certified { value: s_sum.value, error: s_sum.tail };
        let crit = dim.crit();
        let scale_pows = [sync.s.powf(crit), sync.t.powf(crit)];
        let mut rows = Vec::with_capacity(2);
        for (profile, scale_pow) in [k1, k2].into_iter().zip(scale_pows) {
            let leading_exponent = profile
                .terms
                .iter()
                .map(|t| t.exponent)
                .fold(f64::INFINITY, f64::min);
            let leading_amplitude: f64 = profile
                .terms
                .iter()
                .filter(|t| t.exponent == leading_exponent)
                .map(|t| t.amplitude)
                .sum();
            let dip_pairing = certify(
                weighted_dilation_pairing(dim, leading_exponent)?,
                weighted_dilation_pairing_quadrature(dim, leading_exponent, CONSTANT_TOL)?,
            );
            let mut grad_terms = Vec::with_capacity(profile.terms.len());
            for t in &profile.terms {
                grad_terms.push(GradTerm {
                    coord: t.coord,
                    amplitude: t.amplitude,
                    exponent: t.exponent,
                    pairing: certify(
                        weighted_gradient_pairing(dim, t.exponent)?,
                        weighted_gradient_pairing_quadrature(dim, t.exponent, CONSTANT_TOL)?,
                    ),
                });
            }
            rows.push(BalanceRow {
                scale_pow,
                leading_exponent,
                leading_amplitude,
                dip_pairing,
                grad_terms,
            });
        }
        let rows: [BalanceRow; 2] = match rows.try_into() {
            Ok(r) => r,
            Err(_) => unreachable!("two rows were pushed"),
        };
        Ok(ReducedSystem { dim, sync, theta, rows, mass, dil_mass, s_unit })
    }

    pub fn dim(&self) -> Dimension {
        self.dim
    }

    pub fn sync(&self) -> SyncCouple {
        self.sync
    }

    pub fn mass(&self) -> Certified {
        self.mass
    }

    pub fn interaction_constant(&self) -> Certified {
        self.s_unit
    }

    /// Leading well exponents of the two equations.
    pub fn leading_exponents(&self) -> (f64, f64) {
        (self.rows[0].leading_exponent, self.rows[1].leading_exponent)
    }

    /// Well side of the dilation balance, summed over both equations;
    /// negative for attractive wells. Scales like mu^{-beta_l} per row.
    pub fn dip_balance_term(&self, mu: f64) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                -r.scale_pow
                    * r.leading_amplitude
                    * r.dip_pairing.value
                    * mu.powf(-r.leading_exponent)
            })
            .sum()
    }

    /// Same term with the pairings re-derived by literal quadrature; the
    /// independent route for the balance crosscheck.
    fn dip_balance_term_quadrature(&self, mu: f64) -> Result<f64> {
        let mut sum = 0.0;
        for r in &self.rows {
            let pairing =
                weighted_dilation_pairing_quadrature(self.dim, r.leading_exponent, 1e-10)?;
            sum += -r.scale_pow * r.leading_amplitude * pairing * mu.powf(-r.leading_exponent);
        }
        Ok(sum)
    }

    /// Image attraction side of the dilation balance; positive. The mass
    /// factors of the two components enter through the synchronization
    /// ratio, and the whole term scales like mu^{-(n-2)} L^{-(n-2)}.
    pub fn interaction_balance_term(&self, mu: f64, l_period: f64) -> f64 {
        let crit = self.dim.crit();
        let der0 = self.sync.s * self.dil_mass.value;
        let der0_v = self.sync.kappa.powf(crit - 1.0) * der0;
        let b1 = self.sync.s * self.mass.value;
        let b2 = self.sync.t * self.mass.value;
        let decay = (mu * l_period).powf(2.0 - self.dim.nf());
        -(crit - 1.0) * self.s_unit.value * (b1 * der0 + b2 * der0_v) * decay
    }

    /// Coefficient of mu x_h in translation balance `coord`; the sum of
    /// every well on that coordinate, each at its own power of mu.
    pub fn offset_balance_slope(&self, coord: usize, mu: f64) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                r.grad_terms
                    .iter()
                    .filter(|t| t.coord == coord)
                    .map(|t| r.scale_pow * t.amplitude * t.pairing.value * mu.powf(1.0 - t.exponent))
                    .sum::<f64>()
            })
            .sum()
    }

    /// The n + 1 leading-order balances at (x, mu, L): translation
    /// components first, the dilation balance last.
    pub fn reduced_residual(&self, x: &[f64], mu: f64, l_period: f64) -> Result<ReducedResidual> {
        let n = self.dim.n() as usize;
        if x.len() != n {
            return Err(Error::InvalidArgument(format!(
                "offset has {} coordinates, ambient dimension is {n}",
                x.len()
            )));
        }
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "concentration scale must be positive and finite, got {mu}"
            )));
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "offset must stay inside the unit ball, got |x| = {norm}"
            )));
        }
        let mut out = Vec::with_capacity(n + 1);
        for (h, xh) in x.iter().enumerate() {
            out.push(self.offset_balance_slope(h, mu) * mu * xh);
        }
        out.push(self.dip_balance_term(mu) + self.interaction_balance_term(mu, l_period));
        Ok(ReducedResidual(out))
    }

    /// Exponent of the scale law mu_L ~ L^p implied by the leading well
    /// exponent: p = (n-2)/(beta - (n-2)).
    fn bracket_exponent(&self) -> f64 {
        let beta = self.rows[0].leading_exponent.min(self.rows[1].leading_exponent);
        let nm2 = self.dim.nf() - 2.0;
        nm2 / (beta - nm2)
    }

    /// Per-coordinate gradient of the image kernel summed over the shifted
    /// lattice. Opposite shifts contribute exact negations, so the sum is
    /// grouped in pairs and comes out identically zero on the centered
    /// lattice; the grouping is an exact rearrangement of the finite sum.
    fn lattice_gradient_sum(&self, l_period: f64) -> Vec<f64> {
        let n = self.dim.n() as usize;
        let k = self.dim.k() as usize;
        let nf = self.dim.nf();
        let area = crate::special::sphere_area(self.dim.n())
            .expect("dimension was validated at construction");
        let mut sums = vec![0.0; n];
        let radius: i64 = 6;
        let mut shift = vec![-radius; k];
        'outer: loop {
            let positive_rep = shift.iter().find(|&&v| v != 0).is_some_and(|&v| v > 0);
            if positive_rep {
                let r2: f64 = shift
                    .iter()
                    .map(|&v| {
                        let z = l_period * v as f64;
                        z * z
                    })
                    .sum();
                let w = r2.powf(-0.5 * nf) / area;
                for h in 0..k {
                    let z = l_period * shift[h] as f64;
                    sums[h] += z * w + (-z) * w;
                }
            }
            for i in 0..k {
                shift[i] += 1;
                if shift[i] <= radius {
                    continue 'outer;
                }
                shift[i] = -radius;
            }
            break;
        }
        sums
    }

    /// Solve the reduced system at period L: a safeguarded Newton iteration
    /// on log mu zeroes the dilation balance at x = 0, then one fixed-point
    /// refresh recovers x from the translation balances with the attraction
    /// side set to its evaluated lattice sum.
    pub fn solve_reduced(&self, l_period: f64) -> Result<(Vec<f64>, f64)> {
        if !(l_period >= 2.0) {
            return Err(Error::InvalidArgument(format!(
                "reduction studies need period >= 2, got {l_period}"
            )));
        }
        let p = self.bracket_exponent();
        let mut lo = (1e-4f64).ln() + p * l_period.ln();
        let mut hi = (1e6f64).ln() + p * l_period.ln();
        let f = |u: f64| -> (f64, f64, f64) {
            let mu = u.exp();
            let dip = self.dip_balance_term(mu);
            let inter = self.interaction_balance_term(mu, l_period);
            let slope_dip: f64 = self
                .rows
                .iter()
                .map(|r| {
                    r.leading_exponent
                        * r.scale_pow
                        * r.leading_amplitude
                        * r.dip_pairing.value
                        * mu.powf(-r.leading_exponent)
                })
                .sum();
            let slope = slope_dip - (self.dim.nf() - 2.0) * inter;
            (dip + inter, slope, dip.abs() + inter.abs())
        };
        let (f_lo, _, _) = f(lo);
        let (f_hi, _, _) = f(hi);
        if !(f_lo < 0.0 && f_hi > 0.0) {
            return Err(Error::SolverFailure(format!(
                "dilation balance does not change sign on [1e-4, 1e6] x L^{p:.3} at L = {l_period}"
            )));
        }
        let mut u = 0.5 * (lo + hi);
        let mut mu = f64::NAN;
        let mut converged = false;
        for _ in 0..200 {
            let (val, slope, scale) = f(u);
            if val.abs() <= 1e-13 * scale {
                mu = u.exp();
                converged = true;
                break;
            }
            if val < 0.0 {
                lo = u;
            } else {
                hi = u;
            }
            let newton = u - val / slope;
            u = if slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        if !converged {
            return Err(Error::SolverFailure(
                "dilation balance Newton iteration did not converge".into(),
            ));
        }
        let forcing = self.lattice_gradient_sum(l_period);
        let crit = self.dim.crit();
        let amp = (crit - 1.0)
            * self.sync.s
            * self.sync.s
            * self.mass.value
            * self.mass.value
            * mu.powf(2.0 - self.dim.nf());
        let n = self.dim.n() as usize;
        let mut x = vec![0.0; n];
        for h in 0..n {
            let rhs = amp * forcing[h];
            if rhs != 0.0 {
                x[h] = rhs / (self.offset_balance_slope(h, mu) * mu);
            }
        }
        let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let limit = mu.powf(-1.0 - self.theta);
        if x_norm > limit {
            return Err(Error::SolverFailure(format!(
                "offset |x| = {x_norm:.3e} left the concentration regime (limit {limit:.3e})"
            )));
        }
        Ok((x, mu))
    }

    /// Closed-form constant of the scale law mu_L = c0 L^p, from the
    /// dilation balance evaluated at unit scale and period. Needs both
    /// equations to share one leading exponent.
    pub fn c0(&self) -> Result<f64> {
        let (b1, b2) = self.leading_exponents();
        if b1 != b2 {
            return Err(Error::ConfigError(format!(
                "closed-form scale constant needs matching leading exponents, got {b1} and {b2}"
            )));
        }
        let dip = self.dip_balance_term(1.0);
        let inter = self.interaction_balance_term(1.0, 1.0);
        if !(dip < 0.0) {
            return Err(Error::ConfigError(format!(
                "well side of the dilation balance must be negative (attractive wells), got {dip:.3e}"
            )));
        }
        if !(inter > 0.0) {
            return Err(Error::ConfigError(format!(
                "interaction side of the dilation balance must be positive, got {inter:.3e}"
            )));
        }
        let expo = b1 - (self.dim.nf() - 2.0);
        Ok((-dip / inter).powf(expo.recip()))
    }

    /// Exponent p of the scale law mu_L = c0 L^p.
    pub fn scaling_exponent(&self) -> Result<f64> {
        let (b1, b2) = self.leading_exponents();
        if b1 != b2 {
            return Err(Error::ConfigError(format!(
                "scale-law exponent needs matching leading exponents, got {b1} and {b2}"
            )));
        }
        Ok(self.bracket_exponent())
    }

    /// One-dimensional well-gradient moment at offset c:
    /// the integral over the real line of |t+c|^beta t (1+t^2)^{-(n+3)/2}.
    fn offset_gradient_moment(&self, c: f64, beta: f64, tol: f64) -> Result<f64> {
        if c < 0.0 {
            return Ok(-self.offset_gradient_moment(-c, beta, tol)?);
        }
        let nf = self.dim.nf();
        let w = move |t: f64| (1.0 + t * t).powf(-0.5 * (nf + 3.0));
        let plus = integrate_to_infinity(move |t: f64| (t + c).powf(beta) * t * w(t), tol)?;
        // the |t-c| kink splits the negative half line at t = c
        let inner = if c > 0.0 {
            integrate(move |t: f64| (c - t).powf(beta) * t * w(t), 0.0, c, tol)?.value
        } else {
            0.0
        };
        let outer =
            integrate_to_infinity(move |u: f64| u.powf(beta) * (u + c) * w(u + c), tol)?;
        Ok(plus.value - inner - outer.value)
    }

    /// Full well-gradient integral of the first equation at a shifted
    /// center, reduced to one dimension through the transverse marginal.
    fn offset_well_integral(&self, coord: usize, mu_x: f64, mu: f64) -> Result<f64> {
        let dim = self.dim;
        let nf = dim.nf();
        let grad_amp = -(nf - 2.0) * dim.bubble_constant().powf(dim.crit());
        let marginal = slab_marginal_constant(dim.n() - 1, nf + 1.0)?;
        let mut sum = 0.0;
        for r in &self.rows {
            for t in r.grad_terms.iter().filter(|t| t.coord == coord) {
                let j = self.offset_gradient_moment(mu_x, t.exponent, 1e-11)?;
                sum += r.scale_pow
                    * t.amplitude
                    * mu.powf(1.0 - t.exponent)
                    * grad_amp
                    * marginal
                    * j;
            }
        }
        Ok(sum)
    }

    /// Check one translation balance at finite mu: the full shifted well
    /// integral against its linearization in mu x_h, with a halved-offset
    /// probe of the linearity budget.
    pub fn offset_balance_crosscheck(&self, x: &[f64], mu: f64) -> Result<OffsetBalanceReport> {
        let n = self.dim.n() as usize;
        if x.len() != n {
            return Err(Error::InvalidArgument(format!(
                "offset has {} coordinates, ambient dimension is {n}",
                x.len()
            )));
        }
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "concentration scale must be positive and finite, got {mu}"
            )));
        }
        for (h, xh) in x.iter().enumerate() {
            if (mu * xh).abs() > 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "scaled offset mu x_{h} = {} leaves the unit window",
                    mu * xh
                )));
            }
        }
        let coordinate = (0..n)
            .max_by(|&a, &b| x[a].abs().partial_cmp(&x[b].abs()).expect("finite offsets"))
            .unwrap_or(0);
        let mu_x = mu * x[coordinate];
        if mu_x == 0.0 {
            return Ok(OffsetBalanceReport {
                coordinate,
                full: 0.0,
                linear: 0.0,
                rel_dev: 0.0,
                predicted_quadratic: 0.0,
                halving_rel_dev: 0.0,
            });
        }
        let full = self.offset_well_integral(coordinate, mu_x, mu)?;
        let linear = self.offset_balance_slope(coordinate, mu) * mu_x;
        let rel_dev = (full - linear).abs() / linear.abs();
        let half = self.offset_well_integral(coordinate, 0.5 * mu_x, mu)?;
        let halving_rel_dev = (half - 0.5 * full).abs() / (0.5 * full).abs();
        Ok(OffsetBalanceReport {
            coordinate,
            full,
            linear,
            rel_dev,
            predicted_quadratic: mu_x * mu_x,
            halving_rel_dev,
        })
    }

    /// Evaluate the two dilation balance terms at (mu, L) with the well
    /// side re-derived by literal quadrature; the ratio crosses -1 at the
    /// balance scale, the well term dominates below it, the interaction
    /// term above.
    pub fn dilation_balance_crosscheck(&self, mu: f64, l_period: f64) -> Result<DilationBalanceReport> {
        if !(mu > 0.0) || !(l_period > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "balance check needs positive scale and period, got mu = {mu}, L = {l_period}"
            )));
        }
        let term_dip = self.dip_balance_term_quadrature(mu)?;
        let term_interaction = self.interaction_balance_term(mu, l_period);
        Ok(DilationBalanceReport {
            term_dip,
            term_interaction,
            ratio: term_dip / term_interaction,
        })
    }
}

/// Measure the weighted residual norm of the projected pair across a scale
/// grid and fit its log-log decay. The grid must span at least one decade;
/// grid points evaluate independently and in parallel.
pub fn residual_scaling_study(
    lattice: &StripLattice,
    sync: SyncCouple,
    k1: &PotentialProfile,
    k2: &PotentialProfile,
    vartheta: f64,
    levels: u32,
    mu_grid: &[f64],
) -> Result<ScalingStudy> {
    if mu_grid.len() < 2 {
        return Err(Error::InvalidArgument(
            "scaling study needs at least two scales".into(),
        ));
    }
    let (mut min, mut max) = (f64::INFINITY, 0.0f64);
    for &mu in mu_grid {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "scale grid entries must be positive and finite, got {mu}"
            )));
        }
        min = min.min(mu);
        max = max.max(mu);
    }
    if max < 10.0 * min {
        return Err(Error::InvalidArgument(format!(
            "scale grid must span at least one decade, got [{min}, {max}]"
        )));
    }
    let dim = lattice.dim();
    let center = vec![0.0; dim.n() as usize];
    let norms: Vec<f64> = mu_grid
        .par_iter()
        .map(|&mu| -> Result<f64> {
            let af = AnsatzField::new(lattice.clone(), sync, center.clone(), mu)?;
            let wf = WeightField::new(lattice.clone(), center.clone(), mu, vartheta)?;
            let cloud = Cloud::generate(dim, lattice.period(), &center, mu, levels)?;
            af.ell_pair_norm(k1, k2, &wf, &cloud.points, 1e-8)
        })
        .collect::<Result<Vec<f64>>>()?;
    let xs: Vec<f64> = mu_grid.iter().map(|m| m.ln()).collect();
    let ys: Vec<f64> = norms
        .iter()
        .map(|&n| {
            if n > 0.0 {
                Ok(n.ln())
            } else {
                Err(Error::Singularity(
                    "residual norm vanished on the cloud; log fit undefined".into(),
                ))
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let m = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / m;
    let y_mean = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean) * (x - x_mean)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - x_mean) * (y - y_mean)).sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let max_fit_residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (slope * x + intercept)).abs())
        .fold(0.0, f64::max);
    Ok(ScalingStudy {
        mu_grid: mu_grid.to_vec(),
        norms,
        slope,
        intercept,
        max_fit_residual,
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bubble::solve_synchronized;
    use crate::profile::DipTerm;

    fn dim5() -> Dimension {
        Dimension::new(5, 1).unwrap()
    }

    fn well_profile(amplitude: f64, exponent: f64) -> PotentialProfile {
        let terms = (0..5)
            .map(|i| DipTerm { coord: i, amplitude, exponent })
            .collect();
        PotentialProfile { terms, cutoff_radius: 0.25 }
    }

    fn default_system() -> ReducedSystem {
        let dim = dim5();
        let sync = solve_synchronized(dim).unwrap();
        let k = well_profile(-1.0, 3.5);
        ReducedSystem::new(dim, sync, &k, &k, 0.1, 2.0).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn balance_coefficients_match_the_frozen_run() {
        let rs = default_system();
        assert!(rel(rs.dip_balance_term(1.0), -1_895.800_768_375_853_07) < 1e-12);
        // the interaction constant carries the certified tail of the
        // truncated image sum, so the match is at that level, not 1e-12
        let inter = rs.interaction_balance_term(1.0, 1.0);
        assert!(rel(inter, 18_008.021_877_980_806_2) < 2e-10);
        assert!(rs.interaction_constant().error < 1e-9 * rs.interaction_constant().value);
    }

    #[test]
    fn scale_constant_reference() {
        let rs = default_system();
        let c0 = rs.c0().unwrap();
        // doubled sensitivity: c0 squares the term ratio at these exponents
        assert!(rel(c0, 0.011_082_898_877_577_763_0) < 5e-10);
        assert_eq!(rs.scaling_exponent().unwrap(), 6.0);
    }

    #[test]
    fn solver_hits_the_closed_form_scale_law() {
        let rs = default_system();
        let c0 = rs.c0().unwrap();
        let frozen = [
            (2.0, 0.709_305_528_164_976_831),
            (3.0, 8.079_433_281_754_189_21),
            (4.0, 45.395_553_802_558_517_2),
        ];
        for (l, want) in frozen {
            let (x, mu) = rs.solve_reduced(l).unwrap();
            assert!(rel(mu, want) < 1e-9, "L = {l}: {mu} vs {want}");
            assert!((mu * l.powf(-6.0) / c0 - 1.0).abs() < 1e-9);
            for xh in x {
                assert_eq!(xh, 0.0);
            }
        }
    }

    #[test]
    fn solved_point_zeroes_the_dilation_balance() {
        let rs = default_system();
        let (x, mu) = rs.solve_reduced(3.0).unwrap();
        let res = rs.reduced_residual(&x, mu, 3.0).unwrap();
        let scale = rs.dip_balance_term(mu).abs() + rs.interaction_balance_term(mu, 3.0).abs();
        assert!(res.0[5].abs() < 1e-10 * scale);
    }

    #[test]
    fn residual_components_are_odd_in_the_offset() {
        let rs = default_system();
        let x = [1e-3, -2e-3, 5e-4, 0.0, 1e-3];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let plus = rs.reduced_residual(&x, 30.0, 2.0).unwrap();
        let minus = rs.reduced_residual(&neg, 30.0, 2.0).unwrap();
        for h in 0..5 {
            assert_eq!(plus.0[h], -minus.0[h]);
        }
        assert_eq!(plus.0[5], minus.0[5]);
    }

    #[test]
    fn balance_changes_sign_across_the_concentration_scale() {
        // mu_L(4) = 45.4 sits between the probes
        let rs = default_system();
        let low = rs.reduced_residual(&[0.0; 5], 10.0, 4.0).unwrap();
        let high = rs.reduced_residual(&[0.0; 5], 1e6, 4.0).unwrap();
        assert!(low.0[5] < 0.0, "well side should dominate below the balance");
        assert!(high.0[5] > 0.0, "interaction should dominate above the balance");
    }

    #[test]
    fn balance_terms_scale_with_their_stated_powers() {
        let rs = default_system();
        let mu = 17.0;
        let dip_ratio = rs.dip_balance_term(2.0 * mu) / rs.dip_balance_term(mu);
        assert!(rel(dip_ratio, 2.0f64.powf(-3.5)) < 1e-12);
        let int_ratio =
            rs.interaction_balance_term(2.0 * mu, 3.0) / rs.interaction_balance_term(mu, 3.0);
        assert!(rel(int_ratio, 2.0f64.powf(-3.0)) < 1e-12);
        let l_ratio =
            rs.interaction_balance_term(mu, 4.0) / rs.interaction_balance_term(mu, 2.0);
        assert!(rel(l_ratio, 2.0f64.powf(-3.0)) < 1e-12);
    }

    #[test]
    fn weaker_wells_concentrate_later() {
        let dim = dim5();
        let sync = solve_synchronized(dim).unwrap();
        let strong = well_profile(-1.0, 3.5);
        let weak = well_profile(-0.5, 3.5);
        let rs_strong = ReducedSystem::new(dim, sync, &strong, &strong, 0.1, 2.0).unwrap();
        let rs_weak = ReducedSystem::new(dim, sync, &weak, &weak, 0.1, 2.0).unwrap();
        // halving the well depth halves the well side of the balance, so the
        // crossing scale drops by 2^2 at these exponents
        let c_strong = rs_strong.c0().unwrap();
        let c_weak = rs_weak.c0().unwrap();
        assert!(rel(c_weak, 0.25 * c_strong) < 1e-12);
    }

    #[test]
    fn far_out_of_balance_wells_fail_the_bracket() {
        let dim = dim5();
        let sync = solve_synchronized(dim).unwrap();
        let faint = well_profile(-1e-12, 3.9);
        let rs = ReducedSystem::new(dim, sync, &faint, &faint, 0.1, 2.0).unwrap();
        assert!(matches!(rs.solve_reduced(2.0), Err(Error::SolverFailure(_))));
    }

    #[test]
    fn mismatched_exponents_refuse_the_closed_form() {
        let dim = dim5();
        let sync = solve_synchronized(dim).unwrap();
        let k1 = well_profile(-1.0, 3.5);
        let k2 = well_profile(-1.0, 3.4);
        let rs = ReducedSystem::new(dim, sync, &k1, &k2, 0.1, 2.0).unwrap();
        assert!(matches!(rs.c0(), Err(Error::ConfigError(_))));
        assert!(matches!(rs.scaling_exponent(), Err(Error::ConfigError(_))));
        // the solver itself does not need matching exponents
        assert!(rs.solve_reduced(2.0).is_ok());
    }

    #[test]
    fn offset_moment_slope_matches_the_closed_pairing() {
        // derivative of the one-dimensional moment route at zero offset
        // against the closed-form translation pairing
        let rs = default_system();
        let c = 1e-6;
        let full = rs.offset_well_integral(2, c, 1.0).unwrap();
        let slope = rs.offset_balance_slope(2, 1.0);
        assert!(rel(full / c, slope) < 1e-5, "{} vs {slope}", full / c);
    }

    #[test]
    fn offset_balance_stays_linear_at_small_offsets() {
        let rs = default_system();
        let mu = 1e3;
        let mut x = [0.0; 5];
        x[1] = 1e-4;
        let rep = rs.offset_balance_crosscheck(&x, mu).unwrap();
        assert_eq!(rep.coordinate, 1);
        assert!(rep.rel_dev < 0.2, "relative deviation {}", rep.rel_dev);
        assert!(
            rep.halving_rel_dev < 10.0 * rep.predicted_quadratic + 1e-9,
            "halving deviation {} vs budget {}",
            rep.halving_rel_dev,
            rep.predicted_quadratic
        );
        let zero = rs.offset_balance_crosscheck(&[0.0; 5], mu).unwrap();
        assert_eq!(zero.full, 0.0);
        assert_eq!(zero.linear, 0.0);
    }

    #[test]
    fn dilation_balance_ratio_crosses_minus_one() {
        let rs = default_system();
        let (_, mu_l) = rs.solve_reduced(3.0).unwrap();
        let at = rs.dilation_balance_crosscheck(mu_l, 3.0).unwrap();
        assert!((at.ratio + 1.0).abs() < 0.2, "ratio {}", at.ratio);
        let below = rs.dilation_balance_crosscheck(0.25 * mu_l, 3.0).unwrap();
        assert!(below.ratio.abs() > 1.0, "well term should dominate, ratio {}", below.ratio);
        let above = rs.dilation_balance_crosscheck(4.0 * mu_l, 3.0).unwrap();
        assert!(above.ratio.abs() < 1.0, "interaction should dominate, ratio {}", above.ratio);
    }

    #[test]
    fn residual_norms_decay_like_the_predicted_power() {
        let dim = dim5();
        let lat = StripLattice::new(dim, 2.0).unwrap();
        let sync = solve_synchronized(dim).unwrap();
        let k = well_profile(-1.0, 3.5);
        let grid = [20.0, 45.0, 95.0, 200.0];
        let study = residual_scaling_study(&lat, sync, &k, &k, 0.01, 1, &grid).unwrap();
        assert!(
            study.slope > -2.3 && study.slope < -1.7,
            "slope {} norms {:?}",
            study.slope,
            study.norms
        );
        let refined = residual_scaling_study(&lat, sync, &k, &k, 0.01, 2, &grid).unwrap();
        assert!(
            (refined.slope - study.slope).abs() < 0.1,
            "refinement moved the slope from {} to {}",
            study.slope,
            refined.slope
        );
    }

    #[test]
    fn study_rejects_degenerate_grids() {
        let dim = dim5();
        let lat = StripLattice::new(dim, 2.0).unwrap();
        let sync = solve_synchronized(dim).unwrap();
        let k = well_profile(-1.0, 3.5);
        assert!(residual_scaling_study(&lat, sync, &k, &k, 0.01, 0, &[50.0]).is_err());
        assert!(residual_scaling_study(&lat, sync, &k, &k, 0.01, 0, &[50.0, 80.0]).is_err());
        assert!(residual_scaling_study(&lat, sync, &k, &k, 0.01, 0, &[50.0, -1.0]).is_err());
    }
}
