//! Weighted integrals of the standard profile.
//!
//! Every quantity is offered twice: a closed Beta-function form obtained by
//! integration by parts, and a direct adaptive-quadrature route on the
//! literal integrand. The two agree only when the underlying calculus
//! identity holds, so their comparison doubles as a correctness check.
//!
//! All integrals are taken at unit scale and center; callers restore scale
//! and amplitude factors themselves.

use crate::bubble::{dilation_mode, Dimension};
use crate::error::{Error, Result};
use crate::quad::{angular_moment, integrate, integrate_to_infinity, radial_power_integral};
use crate::special::sphere_area;

/// int W^{crit-1} = C^{crit-1} area(S^{n-1}) / n.
pub fn total_mass(dim: Dimension) -> Result<f64> {
    let c = dim.bubble_constant().powf(dim.crit() - 1.0);
    Ok(c * sphere_area(dim.n())? / dim.nf())
}

/// Same integral by adaptive quadrature on the radial profile.
pub fn total_mass_quadrature(dim: Dimension, tol: f64) -> Result<f64> {
    let nf = dim.nf();
    let c = dim.bubble_constant().powf(dim.crit() - 1.0);
    let r = integrate_to_infinity(
        move |r| r.powf(nf - 1.0) * (1.0 + r * r).powf(-0.5 * (nf + 2.0)),
        tol,
    )?;
    Ok(c * sphere_area(dim.n())? * r.value)
}

/// int W^{crit} (the critical energy density).
pub fn crit_integral(dim: Dimension) -> Result<f64> {
    let nf = dim.nf();
    let c = dim.bubble_constant().powf(dim.crit());
    Ok(c * sphere_area(dim.n())? * radial_power_integral(nf - 1.0, nf)?)
}

/// int |y_1|^beta W^{crit}; convergent for beta < n.
pub fn weighted_crit_integral(dim: Dimension, beta: f64) -> Result<f64> {
    let nf = dim.nf();
    if !(beta < nf) {
        return Err(Error::InvalidArgument(format!(
            "weight exponent {beta} makes the profile moment diverge (needs beta < {nf})"
        )));
    }
    let c = dim.bubble_constant().powf(dim.crit());
    Ok(c * angular_moment(dim.n(), beta)? * radial_power_integral(nf - 1.0 + beta, nf)?)
}

/// Pairing of the weighted source with the dilation mode:
/// int |y_1|^beta W^{crit-1} psi, with psi the scale derivative at unit
/// scale. Closed form -(beta/crit) int |y_1|^beta W^{crit}.
pub fn weighted_dilation_pairing(dim: Dimension, beta: f64) -> Result<f64> {
    Ok(-(beta / dim.crit()) * weighted_crit_integral(dim, beta)?)
}

/// Same pairing by quadrature on the literal radial integrand.
pub fn weighted_dilation_pairing_quadrature(dim: Dimension, beta: f64, tol: f64) -> Result<f64> {
    let nf = dim.nf();
    let cm1 = dim.bubble_constant().powf(dim.crit() - 1.0);
    let r = integrate_to_infinity(
        move |r: f64| {
            let src = cm1 * (1.0 + r * r).powf(-0.5 * (nf + 2.0));
            r.powf(nf - 1.0 + beta) * src * dilation_mode(dim, r)
        },
        tol,
    )?;
    Ok(angular_moment(dim.n(), beta)? * r.value)
}

/// Pairing of the gradient of the weight with the translation mode:
/// int beta |y_h|^{beta-2} y_h W^{crit-1} d_h W.
/// Closed form -(beta (beta-1) / crit) int |y_h|^{beta-2} W^{crit}.
pub fn weighted_gradient_pairing(dim: Dimension, beta: f64) -> Result<f64> {
    if !(beta > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "gradient pairing needs weight exponent > 1, got {beta}"
        )));
    }
    Ok(-(beta * (beta - 1.0) / dim.crit()) * weighted_crit_integral(dim, beta - 2.0)?)
}

/// Same pairing by quadrature: the angular average turns the integrand into
/// beta r^{n+beta-2} W^{crit-1}(r) W'(r) against the |w_h|^beta sphere moment.
pub fn weighted_gradient_pairing_quadrature(dim: Dimension, beta: f64, tol: f64) -> Result<f64> {
    let nf = dim.nf();
    let c = dim.bubble_constant();
    let cm1 = c.powf(dim.crit() - 1.0);
    let r = integrate_to_infinity(
        move |r: f64| {
            let src = cm1 * (1.0 + r * r).powf(-0.5 * (nf + 2.0));
            let wprime = -(nf - 2.0) * c * r * (1.0 + r * r).powf(-0.5 * nf);
            beta * r.powf(nf + beta - 2.0) * src * wprime
        },
        tol,
    )?;
    Ok(angular_moment(dim.n(), beta)? * r.value)
}

/// int W^{crit-2} psi = -(n-2)/(2 (crit-1)) int W^{crit-1}.
pub fn dilation_mass(dim: Dimension) -> Result<f64> {
    Ok(-dim.half_nm2() / (dim.crit() - 1.0) * total_mass(dim)?)
}

/// Same by quadrature on the literal integrand.
pub fn dilation_mass_quadrature(dim: Dimension, tol: f64) -> Result<f64> {
    let nf = dim.nf();
    let cm2 = dim.bubble_constant().powf(dim.crit() - 2.0);
    let r = integrate_to_infinity(
        move |r: f64| {
            let wpow = cm2 * (1.0 + r * r).powf(-2.0);
            r.powf(nf - 1.0) * wpow * dilation_mode(dim, r)
        },
        tol,
    )?;
    Ok(sphere_area(dim.n())? * r.value)
}

/// Both sides of the exact truncated dilation balance on the ball of radius
/// `t_radius`:
///
///   (crit-1) int_B |y_i|^b W^{crit-2} psi
///     = -((n-2)/2 + b) int_B |y_i|^b W^{crit-1} + boundary flux.
///
/// The boundary flux T^{n+b} W^{crit-1}(T) restores exactness at every
/// truncation radius, which is what makes the balance testable even where
/// the full-space moments diverge.
pub fn truncated_dilation_balance(
    dim: Dimension,
    beta: f64,
    t_radius: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    if !(t_radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "truncation radius must be positive, got {t_radius}"
        )));
    }
    let nf = dim.nf();
    let crit = dim.crit();
    let am = angular_moment(dim.n(), beta)?;
    let cm1 = dim.bubble_constant().powf(crit - 1.0);
    let cm2 = dim.bubble_constant().powf(crit - 2.0);
    let lhs_rad = integrate(
        move |r: f64| {
            let wpow = cm2 * (1.0 + r * r).powf(-2.0);
            r.powf(nf - 1.0 + beta) * wpow * dilation_mode(dim, r)
        },
        0.0,
        t_radius,
        tol,
    )?;
    let lhs = (crit - 1.0) * am * lhs_rad.value;
    let mass_rad = integrate(
        move |r: f64| r.powf(nf - 1.0 + beta) * (1.0 + r * r).powf(-0.5 * (nf + 2.0)),
        0.0,
        t_radius,
        tol,
    )?;
    let flux = am * cm1 * t_radius.powf(nf + beta) * (1.0 + t_radius * t_radius).powf(-0.5 * (nf + 2.0));
    let rhs = -(dim.half_nm2() + beta) * am * cm1 * mass_rad.value + flux;
    Ok((lhs, rhs))
}
