//! Weighted sup-norms adapted to a periodic array of concentrating bubbles,
//! and the deterministic evaluation cloud the sup is taken over.

use crate::bubble::Dimension;
use crate::error::{Error, Result};
use crate::lattice::{KernelSum, StripLattice};

/// Weight family around one bubble and its lattice translates.
///
/// The damping factor sigma flattens the weight inside the concentration
/// core; the image sums carry certified truncation tails like the Green's
/// function sums do.
#[derive(Debug, Clone)]
pub struct WeightField {
    lattice: StripLattice,
    center: Vec<f64>,
    scale: f64,
    theta: f64,
}

impl WeightField {
    pub fn new(lattice: StripLattice, center: Vec<f64>, scale: f64, theta: f64) -> Result<Self> {
        let dim = lattice.dim();
        if center.len() != dim.n() as usize {
            return Err(Error::InvalidArgument(format!(
                "weight center has {} coordinates, ambient dimension is {}",
                center.len(),
                dim.n()
            )));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "weight scale must be positive and finite, got {scale}"
            )));
        }
        let limit = dim.half_nm2() - f64::from(dim.k());
        if !(theta > 0.0) || !(theta < limit) {
            return Err(Error::InvalidArgument(format!(
                "decay offset {theta} must lie strictly between 0 and (n-2)/2 - k = {limit}"
            )));
        }
        Ok(WeightField { lattice, center, scale, theta })
    }

    /// Decay split exponent (n-2)/2 - theta.
    pub fn tau(&self) -> f64 {
        self.lattice.dim().half_nm2() - self.theta
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn lattice(&self) -> &StripLattice {
        &self.lattice
    }

    fn dist_to_center(&self, y: &[f64]) -> f64 {
        y.iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Core damping min(1, ((1 + mu d)/mu)^{tau - 1}) with d = |y - x|.
    pub fn sigma(&self, y: &[f64]) -> f64 {
        let d = self.dist_to_center(y);
        let base = (1.0 + self.scale * d) / self.scale;
        base.powf(self.tau() - 1.0).min(1.0)
    }

    /// Image sum sum_j (1 + mu |y - x_j|)^{-q} with a certified tail.
    fn image_sum(&self, y: &[f64], q: f64, rel_tol: f64) -> Result<KernelSum> {
        let dim = self.lattice.dim();
        let period = self.lattice.period();
        let kf = f64::from(dim.k());
        if !(q > kf) {
            return Err(Error::InvalidArgument(format!(
                "weight image sum diverges: decay {q} must exceed periodic rank {kf}"
            )));
        }
        let (dk, rest2) = self.lattice.split(y, &self.center);
        let dprime = dk.iter().map(|d| d * d).sum::<f64>().sqrt();
        let mu = self.scale;
        let mut radius = ((2.0 * dprime / period).ceil() as i64).max(4);
        let mut buf = Vec::new();
        let mut acc = 0.0;
        let add = |from: i64, to: i64, buf: &mut Vec<[i64; 4]>, acc: &mut f64| {
            for m in from..=to {
                self.lattice.shell(m, buf);
                for p in buf.iter() {
                    let d = self.lattice.shifted_dist2(&dk, rest2, p).sqrt();
                    *acc += (1.0 + mu * d).powf(-q);
                }
            }
        };
        add(0, radius, &mut buf, &mut acc);
        loop {
            let rf = radius as f64;
            let eff = 1.0 - dprime / (period * (rf + 1.0));
            let tail = 2.0 * kf * 3.0f64.powf(kf - 1.0) * (mu * period * eff).powf(-q)
                * rf.powf(kf - q)
                / (q - kf);
            if tail <= rel_tol * acc.abs().max(f64::MIN_POSITIVE) {
                return Ok(KernelSum { value: acc, tail });
            }
            let next = radius * 2;
            let points = (2 * next as u64 + 1).pow(dim.k());
            if points > 20_000_000 {
                return Err(Error::TruncationFailure { value: acc, tail });
            }
            add(radius + 1, next, &mut buf, &mut acc);
            radius = next;
        }
    }

    /// Weight for first-order error fields:
    /// sigma(y) mu^{(n-2)/2} sum_j (1 + mu |y - x_j|)^{-((n-2)/2 + tau)}.
    pub fn star(&self, y: &[f64], rel_tol: f64) -> Result<f64> {
        let dim = self.lattice.dim();
        let q = dim.half_nm2() + self.tau();
        let s = self.image_sum(y, q, rel_tol)?;
        Ok(self.sigma(y) * self.scale.powf(dim.half_nm2()) * s.value)
    }

    /// Weight for source-level error fields, two powers stronger:
    /// sigma(y) mu^{(n+2)/2} sum_j (1 + mu |y - x_j|)^{-((n+2)/2 + tau)}.
    pub fn source_star(&self, y: &[f64], rel_tol: f64) -> Result<f64> {
        let dim = self.lattice.dim();
        let q = 0.5 * (dim.nf() + 2.0) + self.tau();
        let s = self.image_sum(y, q, rel_tol)?;
        Ok(self.sigma(y) * self.scale.powf(0.5 * (dim.nf() + 2.0)) * s.value)
    }

    /// Image sum without the core damping, used by the uniformity checks.
    pub fn star_undamped(&self, y: &[f64], rel_tol: f64) -> Result<f64> {
        let dim = self.lattice.dim();
        let q = dim.half_nm2() + self.tau();
        let s = self.image_sum(y, q, rel_tol)?;
        Ok(self.scale.powf(dim.half_nm2()) * s.value)
    }
}

/// Deterministic evaluation points: log-spaced shells around the bubble
/// center in fixed directions, plus a far field along the last axis.
/// Periodic coordinates are clamped into the cell with a safety margin.
#[derive(Debug, Clone)]
pub struct Cloud {
    pub points: Vec<Vec<f64>>,
    shells: Vec<f64>,
    levels: u32,
}

/// Margin kept to the periodic cell boundary when clamping.
pub const CELL_MARGIN: f64 = 0.1;

impl Cloud {
    /// Shells from 0.1/scale out to 1, count 8 * 2^levels, fixed directions
    /// (+-e_i and two diagonals), plus six far points on [2, 10 period].
    pub fn generate(dim: Dimension, period: f64, center: &[f64], scale: f64, levels: u32) -> Result<Cloud> {
        if !(scale > 0.0) || !(period > 0.0) {
            return Err(Error::InvalidArgument(
                "cloud needs positive scale and period".into(),
            ));
        }
        if levels > 8 {
            return Err(Error::InvalidArgument(format!(
                "cloud refinement level {levels} too deep (max 8)"
            )));
        }
        // denominators double under refinement, so coarse shells reappear
        // exactly in the refined cloud
        let n_shells = 8usize << levels;
        let r_min = 0.1 / scale;
        let r_max = 1.0;
        let ratio = (r_max / r_min).ln();
        let shells: Vec<f64> = (0..=n_shells)
            .map(|i| r_min * (ratio * i as f64 / n_shells as f64).exp())
            .collect();
        let mut points = Vec::new();
        let n = dim.n() as usize;
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        for i in 0..n {
            let mut d = vec![0.0; n];
            d[i] = 1.0;
            dirs.push(d.clone());
            d[i] = -1.0;
            dirs.push(d);
        }
        let inv = (n as f64).sqrt().recip();
        dirs.push(vec![inv; n]);
        dirs.push((0..n).map(|i| if i % 2 == 0 { inv } else { -inv }).collect());
        for r in &shells {
            for d in &dirs {
                let mut p: Vec<f64> = center.iter().zip(d).map(|(c, di)| c + r * di).collect();
                clamp_periodic(dim, period, &mut p);
                points.push(p);
            }
        }
        let far_lo: f64 = 2.0;
        let far_hi = 10.0 * period;
        for i in 0..6 {
            let t = far_lo * ((far_hi / far_lo).ln() * i as f64 / 5.0).exp();
            let mut p = center.to_vec();
            p[n - 1] += t;
            clamp_periodic(dim, period, &mut p);
            points.push(p);
        }
        Ok(Cloud { points, shells, levels })
    }

    /// Same construction one level deeper; the shell set is a superset, so
    /// every coarse point appears in the refined cloud.
    pub fn refine(&self, dim: Dimension, period: f64, center: &[f64], scale: f64) -> Result<Cloud> {
        Cloud::generate(dim, period, center, scale, self.levels + 1)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn shell_radii(&self) -> &[f64] {
        &self.shells
    }
}

fn clamp_periodic(dim: Dimension, period: f64, p: &mut [f64]) {
    let k = dim.k() as usize;
    let lim = 0.5 * period - CELL_MARGIN;
    for v in p.iter_mut().take(k) {
        *v = v.clamp(-lim, lim);
    }
}

/// max |f(y)| / w(y) over the given points.
pub fn weighted_sup<F, W>(points: &[Vec<f64>], f: F, w: W) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
    W: Fn(&[f64]) -> Result<f64>,
{
    let mut best = 0.0f64;
    for p in points {
        let weight = w(p)?;
        if !(weight > 0.0) {
            return Err(Error::InvalidArgument(
                "norm weight must be positive on the evaluation cloud".into(),
            ));
        }
        best = best.max(f(p)?.abs() / weight);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bubble::Bubble;

    fn dim5() -> Dimension {
        Dimension::new(5, 1).unwrap()
    }

    fn field(period: f64, mu: f64) -> WeightField {
        let lat = StripLattice::new(dim5(), period).unwrap();
        WeightField::new(lat, vec![0.0; 5], mu, 0.01).unwrap()
    }

    #[test]
    fn sigma_reference_value() {
        // (1 + mu d)/mu = 0.15 at mu = 10, d = 0.05; tau - 1 = 0.49
        let w = field(2.0, 10.0);
        let y = [0.05, 0.0, 0.0, 0.0, 0.0];
        assert!((w.sigma(&y) - 0.394_715_987_141_756_6).abs() < 1e-14);
        // far away the damping saturates at 1
        assert_eq!(w.sigma(&[0.9, 2.0, 0.0, 0.0, 0.0]), 1.0);
    }

    #[test]
    fn theta_range_is_enforced() {
        let lat = StripLattice::new(dim5(), 2.0).unwrap();
        assert!(WeightField::new(lat.clone(), vec![0.0; 5], 10.0, 0.0).is_err());
        assert!(WeightField::new(lat.clone(), vec![0.0; 5], 10.0, 0.5).is_err());
        assert!(WeightField::new(lat, vec![0.0; 5], 10.0, 0.3).is_ok());
    }

    #[test]
    fn source_weight_decays_faster_than_field_weight() {
        let w = field(2.0, 20.0);
        for y in [
            [0.3, 0.1, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.5, 0.0, 0.0],
            [0.8, 0.0, 0.0, 0.0, 2.0],
        ] {
            let s = w.star(&y, 1e-8).unwrap();
            let d = w.source_star(&y, 1e-8).unwrap();
            assert!(s > 0.0 && d > 0.0);
            // two extra powers of (1 + mu d) cost more than the mu^2 gain at these distances
            assert!(d < s * w.scale() * w.scale());
        }
    }

    #[test]
    fn image_sum_tail_is_honest() {
        let w = field(1.5, 7.0);
        let y = [0.4, -0.2, 0.3, 0.0, 0.1];
        let coarse = w.star(&y, 1e-2).unwrap();
        let fine = w.star(&y, 1e-10).unwrap();
        assert!((coarse - fine).abs() <= 1e-2 * fine * 1.01 + 1e-14);
    }

    #[test]
    fn undamped_profile_ratio_is_scale_uniform() {
        // the first profile over the undamped weight stays within a fixed
        // factor as the concentration scale moves over two decades
        let dim = dim5();
        let mut ratios = Vec::new();
        for mu in [10.0, 100.0, 1000.0] {
            let w = field(2.0, mu);
            let u = Bubble::new(dim, vec![0.0; 5], mu).unwrap();
            let cloud = Cloud::generate(dim, 2.0, &[0.0; 5], mu, 1).unwrap();
            let r = weighted_sup(
                &cloud.points,
                |y| Ok(u.value(y)),
                |y| w.star_undamped(y, 1e-8),
            )
            .unwrap();
            ratios.push(r);
        }
        let max = ratios.iter().cloned().fold(0.0, f64::max);
        let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / min < 3.0, "ratios {ratios:?}");
    }

    #[test]
    fn cloud_refinement_is_a_superset() {
        let dim = dim5();
        let c0 = Cloud::generate(dim, 2.0, &[0.0; 5], 50.0, 0).unwrap();
        let c1 = c0.refine(dim, 2.0, &[0.0; 5], 50.0).unwrap();
        assert!(c1.len() > c0.len());
        for r in c0.shell_radii() {
            assert!(
                c1.shell_radii().iter().any(|s| (s - r).abs() < 1e-12 * r),
                "shell {r} lost in refinement"
            );
        }
    }

    #[test]
    fn cloud_respects_cell_margin() {
        let dim = dim5();
        let c = Cloud::generate(dim, 2.0, &[0.0; 5], 3.0, 2).unwrap();
        assert!(c.len() > 300);
        for p in &c.points {
            assert!(p[0].abs() <= 1.0 - CELL_MARGIN + 1e-12);
        }
        // far field reaches out along the last axis
        assert!(c.points.iter().any(|p| p[4] >= 19.9));
    }

    #[test]
    fn weighted_sup_requires_positive_weight() {
        let pts = vec![vec![0.0; 5]];
        let r = weighted_sup(&pts, |_| Ok(1.0), |_| Ok(0.0));
        assert!(r.is_err());
    }
}
