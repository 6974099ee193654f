//! Periodic Green's function sums on the strip.
//!
//! The strip is periodic with spacing `period` in the first k coordinates
//! and free in the rest, so its Green's function is the free Newtonian
//! kernel summed over the integer lattice of period shifts. Every truncated
//! sum here returns a certified bound on the dropped tail; callers decide
//! whether that bound is small enough instead of trusting a heuristic.

use crate::bubble::Dimension;
use crate::error::{Error, Result};
use crate::special::sphere_area;

/// Truncated lattice sum together with a certified bound on what was cut.
#[derive(Debug, Clone, Copy)]
pub struct KernelSum {
    pub value: f64,
    pub tail: f64,
}

/// Hard cap on enumerated lattice points per evaluation.
const MAX_POINTS: u64 = 20_000_000;

/// The strip geometry: ambient dimension, periodic rank, and spacing.
#[derive(Debug, Clone)]
pub struct StripLattice {
    dim: Dimension,
    period: f64,
    kernel_const: f64,
}

impl StripLattice {
    pub fn new(dim: Dimension, period: f64) -> Result<Self> {
        if dim.k() == 0 {
            return Err(Error::InvalidArgument(
                "strip needs at least one periodic direction".into(),
            ));
        }
        if dim.k() > 4 {
            return Err(Error::InvalidArgument(format!(
                "periodic rank {} not supported (max 4)",
                dim.k()
            )));
        }
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "period must be positive and finite, got {period}"
            )));
        }
        let nf = dim.nf();
        let kernel_const = 1.0 / ((nf - 2.0) * sphere_area(dim.n())?);
        Ok(StripLattice { dim, period, kernel_const })
    }

    pub fn dim(&self) -> Dimension {
        self.dim
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Normalizing constant of the Newtonian kernel, 1/((n-2) area(S^{n-1})).
    pub fn kernel_constant(&self) -> f64 {
        self.kernel_const
    }

    /// Free-space kernel c |z - y|^{2-n}.
    pub fn free_kernel(&self, z: &[f64], y: &[f64]) -> Result<f64> {
        self.check_points(z, y)?;
        let d2: f64 = z.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 < 1e-28 {
            return Err(Error::Singularity(format!(
                "kernel evaluated at coincident points (distance^2 = {d2:.1e})"
            )));
        }
        Ok(self.kernel_const * d2.powf(0.5 * (2.0 - self.dim.nf())))
    }

    fn check_points(&self, z: &[f64], y: &[f64]) -> Result<()> {
        let n = self.dim.n() as usize;
        if z.len() != n || y.len() != n {
            return Err(Error::InvalidArgument(format!(
                "points must have {n} coordinates, got {} and {}",
                z.len(),
                y.len()
            )));
        }
        Ok(())
    }

    /// All shifts with sup-norm exactly `m`, sorted by (squared length,
    /// lexicographic) so the summation order is reproducible.
    pub(crate) fn shell(&self, m: i64, out: &mut Vec<[i64; 4]>) {
        out.clear();
        if m == 0 {
            out.push([0; 4]);
            return;
        }
        let k = self.dim.k() as usize;
        let mut p = [0i64; 4];
        fill_shell(&mut p, 0, k, m, false, out);
        out.sort_unstable_by_key(|p| {
            let len2: i64 = p.iter().map(|c| c * c).sum();
            (len2, *p)
        });
    }

    pub(crate) fn shifted_dist2(&self, dk: &[f64], rest2: f64, p: &[i64; 4]) -> f64 {
        let mut d2 = rest2;
        for (i, d) in dk.iter().enumerate() {
            let s = d + self.period * p[i] as f64;
            d2 += s * s;
        }
        d2
    }

    /// Kernel sum over all shifts with sup-norm at most `radius`.
    pub fn sum_to_radius(&self, z: &[f64], y: &[f64], radius: i64) -> Result<f64> {
        self.check_points(z, y)?;
        let (dk, rest2) = self.split(z, y);
        let mut acc = 0.0;
        let mut buf = Vec::new();
        for m in 0..=radius {
            acc += self.add_shell(&dk, rest2, m, &mut buf)?;
        }
        Ok(acc)
    }

    pub(crate) fn split(&self, z: &[f64], y: &[f64]) -> (Vec<f64>, f64) {
        let k = self.dim.k() as usize;
        let dk: Vec<f64> = z[..k].iter().zip(&y[..k]).map(|(a, b)| a - b).collect();
        let rest2: f64 = z[k..].iter().zip(&y[k..]).map(|(a, b)| (a - b) * (a - b)).sum();
        (dk, rest2)
    }

    fn add_shell(&self, dk: &[f64], rest2: f64, m: i64, buf: &mut Vec<[i64; 4]>) -> Result<f64> {
        let expo = 0.5 * (2.0 - self.dim.nf());
        self.shell(m, buf);
        let mut acc = 0.0;
        for p in buf.iter() {
            let d2 = self.shifted_dist2(dk, rest2, p);
            if d2 < 1e-28 {
                return Err(Error::Singularity(
                    "lattice image coincides with the evaluation point".into(),
                ));
            }
            acc += self.kernel_const * d2.powf(expo);
        }
        Ok(acc)
    }

    /// Certified bound on the kernel sum over all shifts with sup-norm
    /// beyond `radius`, given the in-plane offset length `dprime`.
    ///
    /// Counting shifts shell by shell and bounding each image distance below
    /// by m (period - dprime/(radius+1)) gives
    /// 2k 3^{k-1} c (period - dprime/(radius+1))^{2-n} radius^{k+2-n} / (n-2-k).
    fn tail_bound(&self, dprime: f64, radius: i64) -> f64 {
        let nf = self.dim.nf();
        let k = self.dim.k() as f64;
        let rf = radius as f64;
        let eff = self.period - dprime / (rf + 1.0);
        debug_assert!(eff > 0.0, "tail bound needs radius > dprime/period - 1");
        2.0 * k
            * 3.0f64.powf(k - 1.0)
            * self.kernel_const
            * eff.powf(2.0 - nf)
            * rf.powf(k + 2.0 - nf)
            / (nf - 2.0 - k)
    }

    /// Green's function of the strip by image summation, refined by radius
    /// doubling until the certified tail drops below `rel_tol` times the
    /// value. Fails with `TruncationFailure` when the point budget runs out.
    pub fn green(&self, z: &[f64], y: &[f64], rel_tol: f64) -> Result<KernelSum> {
        self.kernel_images(z, y, rel_tol, 0)
    }

    /// Kernel sum over the shifted copies only (sup-norm >= 1). Stays finite
    /// for z arbitrarily close to y, unlike `green` minus the free kernel.
    pub fn green_images(&self, z: &[f64], y: &[f64], rel_tol: f64) -> Result<KernelSum> {
        self.kernel_images(z, y, rel_tol, 1)
    }

    fn kernel_images(
        &self,
        z: &[f64],
        y: &[f64],
        rel_tol: f64,
        first_shell: i64,
    ) -> Result<KernelSum> {
        self.check_points(z, y)?;
        if !(rel_tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "relative tolerance must be positive, got {rel_tol}"
            )));
        }
        let (dk, rest2) = self.split(z, y);
        let dprime = dk.iter().map(|d| d * d).sum::<f64>().sqrt();
        let mut radius = ((2.0 * dprime / self.period).ceil() as i64).max(4);
        let mut buf = Vec::new();
        let mut acc = 0.0;
        for m in first_shell..=radius {
            acc += self.add_shell(&dk, rest2, m, &mut buf)?;
        }
        loop {
            let tail = self.tail_bound(dprime, radius);
            if tail <= rel_tol * acc.abs().max(f64::MIN_POSITIVE) {
                return Ok(KernelSum { value: acc, tail });
            }
            let next = radius * 2;
            let points = (2 * next as u64 + 1).pow(self.dim.k());
            if points > MAX_POINTS {
                return Err(Error::TruncationFailure { value: acc, tail });
            }
            for m in radius + 1..=next {
                acc += self.add_shell(&dk, rest2, m, &mut buf)?;
            }
            radius = next;
        }
    }

    /// Interaction constant of the lattice at unit spacing:
    /// c sum_{P != 0} |P|^{2-n}. Scale by period^{2-n} for physical spacing.
    pub fn lattice_constant(&self, rel_tol: f64) -> Result<KernelSum> {
        if !(rel_tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "relative tolerance must be positive, got {rel_tol}"
            )));
        }
        let expo = 0.5 * (2.0 - self.dim.nf());
        let nf = self.dim.nf();
        let k = self.dim.k() as f64;
        let mut buf = Vec::new();
        let mut acc = 0.0;
        let mut radius = 4i64;
        let add = |from: i64, to: i64, buf: &mut Vec<[i64; 4]>, acc: &mut f64| {
            for m in from..=to {
                self.shell(m, buf);
                for p in buf.iter() {
                    let len2: i64 = p.iter().map(|c| c * c).sum();
                    *acc += self.kernel_const * (len2 as f64).powf(expo);
                }
            }
        };
        add(1, radius, &mut buf, &mut acc);
        loop {
            let rf = radius as f64;
            let tail = 2.0 * k * 3.0f64.powf(k - 1.0) * self.kernel_const * rf.powf(k + 2.0 - nf)
                / (nf - 2.0 - k);
            if tail <= rel_tol * acc {
                return Ok(KernelSum { value: acc, tail });
            }
            let next = radius * 2;
            let points = (2 * next as u64 + 1).pow(self.dim.k());
            if points > MAX_POINTS {
                return Err(Error::TruncationFailure { value: acc, tail });
            }
            add(radius + 1, next, &mut buf, &mut acc);
            radius = next;
        }
    }
}

// Emits only points that touch the shell: once every remaining coordinate
// would be free, the last one is forced to +-m, keeping the cost
// proportional to the shell size rather than the enclosing cube.
fn fill_shell(p: &mut [i64; 4], idx: usize, k: usize, m: i64, saturated: bool, out: &mut Vec<[i64; 4]>) {
    if idx == k {
        debug_assert!(saturated);
        out.push(*p);
        return;
    }
    if idx == k - 1 && !saturated {
        for c in [-m, m] {
            p[idx] = c;
            out.push(*p);
        }
        p[idx] = 0;
        return;
    }
    for c in -m..=m {
        p[idx] = c;
        fill_shell(p, idx + 1, k, m, saturated || c.abs() == m, out);
    }
    p[idx] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::zeta;

    fn lat(n: u32, k: u32, period: f64) -> StripLattice {
        StripLattice::new(Dimension::new(n, k).unwrap(), period).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn kernel_constant_reference() {
        assert!(rel(lat(5, 1, 1.0).kernel_constant(), 0.012_665_147_955_292_221) < 1e-14);
    }

    #[test]
    fn free_kernel_is_harmonic_away_from_the_pole() {
        let l = lat(5, 1, 1.0);
        let y = [0.0; 5];
        let z = [0.7, -0.3, 0.2, 0.5, -0.1];
        let h = 1e-3;
        let f0 = l.free_kernel(&z, &y).unwrap();
        let mut lap = 0.0;
        for i in 0..5 {
            let mut zp = z;
            zp[i] += h;
            let fp = l.free_kernel(&zp, &y).unwrap();
            zp[i] -= 2.0 * h;
            let fm = l.free_kernel(&zp, &y).unwrap();
            lap += (fp + fm - 2.0 * f0) / (h * h);
        }
        // scale of individual second derivatives is f0/d^2 = O(f0)
        assert!(lap.abs() < 1e-6 * f0.abs().max(1.0));
    }

    #[test]
    fn coincident_points_are_singular() {
        let l = lat(5, 1, 1.0);
        assert!(matches!(
            l.free_kernel(&[0.0; 5], &[0.0; 5]),
            Err(Error::Singularity(_))
        ));
    }

    #[test]
    fn lattice_constant_matches_zeta_route_rank_one() {
        // rank-1 sum telescopes to 2 zeta(n-2) times the kernel constant
        for (n, want) in [(5u32, 0.030_448_457_058_393_271), (7, 0.012_540_941_699_904_991)] {
            let l = lat(n, 1, 1.0);
            let s = l.lattice_constant(1e-10).unwrap();
            let closed = 2.0 * l.kernel_constant() * zeta(f64::from(n) - 2.0).unwrap();
            assert!(rel(s.value, closed) < 2e-10, "n = {n}");
            assert!(rel(closed, want) < 1e-13, "n = {n}");
            assert!(s.tail <= 1e-10 * s.value * 1.0000001);
        }
    }

    #[test]
    fn lattice_constant_rank_two_against_plain_double_loop() {
        let l = lat(7, 2, 1.0);
        let s = l.lattice_constant(1e-6).unwrap();
        let mut direct = 0.0;
        let lim = 300i64;
        for a in -lim..=lim {
            for b in -lim..=lim {
                if a == 0 && b == 0 {
                    continue;
                }
                direct += l.kernel_constant() * ((a * a + b * b) as f64).powf(-2.5);
            }
        }
        assert!(rel(s.value, direct) < 5e-6, "{} vs {direct}", s.value);
    }

    #[test]
    fn half_offset_green_closed_form() {
        // offset period/2 along the periodic axis at unit period:
        // sum |1/2 + j|^{-3} = 14 zeta(3), so G = 14 c zeta(3)
        let l = lat(5, 1, 1.0);
        let z = [0.5, 0.0, 0.0, 0.0, 0.0];
        let y = [0.0; 5];
        let g = l.green(&z, &y, 1e-9).unwrap();
        let closed = 14.0 * l.kernel_constant() * zeta(3.0).unwrap();
        assert!(rel(closed, 0.213_139_199_408_752_895) < 1e-13);
        assert!((g.value - closed).abs() <= g.tail + 1e-12 * closed);
    }

    #[test]
    fn green_is_symmetric_and_periodic() {
        let l = lat(5, 1, 2.0);
        let z = [0.3, -0.4, 0.8, 0.1, -0.2];
        let y = [-0.6, 0.5, 0.0, 0.3, 0.9];
        let tol = 1e-8;
        let a = l.green(&z, &y, tol).unwrap();
        let b = l.green(&y, &z, tol).unwrap();
        assert!((a.value - b.value).abs() <= a.tail + b.tail + 1e-13 * a.value);
        let mut zs = z;
        zs[0] += 2.0;
        let c = l.green(&zs, &y, tol).unwrap();
        assert!((a.value - c.value).abs() <= a.tail + c.tail + 1e-13 * a.value);
    }

    #[test]
    fn certified_tail_dominates_refinement_error() {
        let l = lat(5, 1, 1.5);
        let z = [0.2, 0.1, -0.3, 0.4, 0.0];
        let y = [-0.3, 0.2, 0.5, -0.1, 0.6];
        let (dk, _) = l.split(&z, &y);
        let dprime = dk.iter().map(|d| d * d).sum::<f64>().sqrt();
        for radius in [4i64, 8, 16, 32] {
            let coarse = l.sum_to_radius(&z, &y, radius).unwrap();
            let fine = l.sum_to_radius(&z, &y, 4 * radius).unwrap();
            assert!(
                (fine - coarse).abs() <= l.tail_bound(dprime, radius),
                "radius {radius}"
            );
        }
    }

    #[test]
    fn image_sum_skips_the_principal_term() {
        let l = lat(5, 1, 2.0);
        let z = [0.3, -0.1, 0.2, 0.0, 0.4];
        let y = [-0.2, 0.5, 0.1, 0.3, -0.3];
        let full = l.green(&z, &y, 1e-10).unwrap();
        let imgs = l.green_images(&z, &y, 1e-10).unwrap();
        let free = l.free_kernel(&z, &y).unwrap();
        assert!(
            (full.value - free - imgs.value).abs() <= full.tail + imgs.tail + 1e-13 * full.value
        );
    }

    #[test]
    fn image_sum_at_zero_offset_matches_the_lattice_constant() {
        let l = lat(5, 1, 2.0);
        let x = [0.0; 5];
        let imgs = l.green_images(&x, &x, 1e-10).unwrap();
        let s = l.lattice_constant(1e-10).unwrap();
        let closed = s.value * 2.0f64.powf(2.0 - 5.0);
        assert!(
            (imgs.value - closed).abs() <= imgs.tail + s.tail + 1e-12 * closed,
            "{} vs {closed}",
            imgs.value
        );
    }

    #[test]
    fn impossible_tolerance_reports_truncation() {
        let l = lat(5, 1, 1.0);
        let z = [0.5, 0.0, 0.0, 0.0, 0.0];
        let y = [0.0; 5];
        match l.green(&z, &y, 1e-30) {
            Err(Error::TruncationFailure { value, tail }) => {
                assert!(value > 0.0);
                assert!(tail > 0.0);
            }
            other => panic!("expected truncation failure, got {other:?}"),
        }
    }

    #[test]
    fn shell_counts_are_correct() {
        let l = lat(7, 2, 1.0);
        let mut buf = Vec::new();
        l.shell(0, &mut buf);
        assert_eq!(buf.len(), 1);
        l.shell(1, &mut buf);
        assert_eq!(buf.len(), 8);
        l.shell(3, &mut buf);
        assert_eq!(buf.len(), 49 - 25);
    }
}
