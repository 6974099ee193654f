//! Standard concentrating profiles, their exact derivatives, and the
//! amplitude synchronization for the two-component ansatz.

use crate::error::{Error, Result};

/// Ambient dimension together with the number of periodic directions.
///
/// The first `k` coordinates are periodic on the strip; the geometric side
/// only needs 2k < n - 2 so the lattice sums converge, while the solver's
/// profile validation imposes the stricter structural bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dimension {
    n: u32,
    k: u32,
}

impl Dimension {
    pub fn new(n: u32, k: u32) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidArgument(format!(
                "ambient dimension must be at least 3, got {n}"
            )));
        }
        if 2 * k >= n - 2 {
            return Err(Error::InvalidArgument(format!(
                "need 2k < n - 2 for convergent periodic sums, got n = {n}, k = {k}"
            )));
        }
        Ok(Dimension { n, k })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn nf(&self) -> f64 {
        f64::from(self.n)
    }

    /// Critical Sobolev exponent 2n/(n-2).
    pub fn crit(&self) -> f64 {
        2.0 * self.nf() / (self.nf() - 2.0)
    }

    /// (n-2)/2, the concentration rate of the profile amplitude.
    pub fn half_nm2(&self) -> f64 {
        0.5 * (self.nf() - 2.0)
    }

    /// Normalization (n(n-2))^{(n-2)/4} making the profile solve
    /// -Lap W = W^{crit - 1} exactly.
    pub fn bubble_constant(&self) -> f64 {
        let nf = self.nf();
        (nf * (nf - 2.0)).powf((nf - 2.0) / 4.0)
    }
}

/// Which parameter a closed-form derivative is taken in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BubbleDirection {
    /// Partial derivative in center coordinate `x_h` (0-based index).
    Center(usize),
    /// Partial derivative in the concentration scale.
    Scale,
}

/// A single concentrating profile W_{x, mu}.
#[derive(Debug, Clone)]
pub struct Bubble {
    dim: Dimension,
    center: Vec<f64>,
    scale: f64,
}

impl Bubble {
    pub fn new(dim: Dimension, center: Vec<f64>, scale: f64) -> Result<Self> {
        if center.len() != dim.n() as usize {
            return Err(Error::InvalidArgument(format!(
                "center has {} coordinates, ambient dimension is {}",
                center.len(),
                dim.n()
            )));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "concentration scale must be positive and finite, got {scale}"
            )));
        }
        Ok(Bubble { dim, center, scale })
    }

    /// Unit-scale profile centered at the origin.
    pub fn standard(dim: Dimension) -> Self {
        Bubble {
            dim,
            center: vec![0.0; dim.n() as usize],
            scale: 1.0,
        }
    }

    pub fn dim(&self) -> Dimension {
        self.dim
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    fn shape(&self, y: &[f64]) -> (f64, f64) {
        let r2: f64 = y
            .iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let mu2 = self.scale * self.scale;
        (r2, 1.0 + mu2 * r2)
    }

    /// W(y) = C mu^{(n-2)/2} (1 + mu^2 |y - x|^2)^{-(n-2)/2}.
    pub fn value(&self, y: &[f64]) -> f64 {
        let (_, q) = self.shape(y);
        self.dim.bubble_constant() * self.scale.powf(self.dim.half_nm2()) * q.powf(-self.dim.half_nm2())
    }

    /// The exact source W^{crit-1}; equals -Lap W pointwise.
    pub fn source(&self, y: &[f64]) -> f64 {
        self.value(y).powf(self.dim.crit() - 1.0)
    }

    /// Closed-form Laplacian, -W^{crit-1}.
    pub fn laplacian(&self, y: &[f64]) -> f64 {
        -self.source(y)
    }

    /// Closed-form parameter derivatives:
    /// in x_h: (n-2) C mu^{(n-2)/2} mu^2 (y_h - x_h) q^{-n/2},
    /// in mu:  (n-2)/2 C mu^{(n-4)/2} (1 - mu^2 r^2) q^{-n/2}.
    pub fn derivative(&self, dir: BubbleDirection, y: &[f64]) -> Result<f64> {
        let nf = self.dim.nf();
        let c = self.dim.bubble_constant();
        let (r2, q) = self.shape(y);
        let qp = q.powf(-0.5 * nf);
        match dir {
            BubbleDirection::Center(h) => {
                if h >= self.center.len() {
                    return Err(Error::InvalidArgument(format!(
                        "center index {h} out of range for dimension {}",
                        self.dim.n()
                    )));
                }
                let mu = self.scale;
                Ok((nf - 2.0) * c * mu.powf(self.dim.half_nm2()) * mu * mu * (y[h] - self.center[h]) * qp)
            }
            BubbleDirection::Scale => {
                let mu = self.scale;
                Ok(0.5 * (nf - 2.0) * c * mu.powf(0.5 * (nf - 4.0)) * (1.0 - mu * mu * r2) * qp)
            }
        }
    }
}

/// Scale derivative of the unit profile at the origin, radial closed form:
/// (n-2)/2 C (1 - r^2) (1 + r^2)^{-n/2}. This is the kernel direction that
/// pairs with the concentration-rate equation.
pub fn dilation_mode(dim: Dimension, r: f64) -> f64 {
    let nf = dim.nf();
    0.5 * (nf - 2.0) * dim.bubble_constant() * (1.0 - r * r) * (1.0 + r * r).powf(-0.5 * nf)
}

/// Amplitudes (s, t) with t = kappa s making (sW, tW) solve the coupled
/// system with unit potentials.
#[derive(Debug, Clone, Copy)]
pub struct SyncCouple {
    pub kappa: f64,
    pub s: f64,
    pub t: f64,
    crit: f64,
}

impl SyncCouple {
    /// Coefficient with -Lap U = c_u U^{crit-1} for U = sW; equals s^{-(crit-2)}.
    pub fn source_coefficient_u(&self) -> f64 {
        self.s.powf(-(self.crit - 2.0))
    }

    /// Coefficient with -Lap V = c_v V^{crit-1} for V = tW; equals t^{-(crit-2)}.
    pub fn source_coefficient_v(&self) -> f64 {
        self.t.powf(-(self.crit - 2.0))
    }
}

/// Balance polynomial for the amplitude ratio:
/// g(kappa) = 2 + kappa^{crit/2} - kappa^{crit/2 - 1} - 2 kappa^{crit - 1}.
pub fn sync_polynomial(dim: Dimension, kappa: f64) -> f64 {
    let p = 0.5 * dim.crit();
    2.0 + kappa.powf(p) - kappa.powf(p - 1.0) - 2.0 * kappa.powf(dim.crit() - 1.0)
}

/// Solve for the synchronized amplitudes. Scans (0, 10] for roots of the
/// balance polynomial, refines by bisection, and snaps the symmetric root
/// to exactly 1 so downstream algebra stays exact.
pub fn solve_synchronized(dim: Dimension) -> Result<SyncCouple> {
    let g = |k: f64| sync_polynomial(dim, k);
    let mut roots = Vec::new();
    let steps = 1000;
    let lo = 1e-3;
    let hi = 10.0;
    let mut prev_k = lo;
    let mut prev_g = g(lo);
    for i in 1..=steps {
        let k = lo + (hi - lo) * i as f64 / steps as f64;
        let gk = g(k);
        if gk == 0.0 {
            roots.push(k);
        } else if prev_g * gk < 0.0 {
            let (mut a, mut b) = (prev_k, k);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let gm = g(m);
                if gm == 0.0 {
                    a = m;
                    b = m;
                    break;
                }
                if g(a) * gm < 0.0 {
                    b = m;
                } else {
                    a = m;
                }
            }
            roots.push(0.5 * (a + b));
        }
        prev_k = k;
        prev_g = gk;
    }
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let mut kappa = *roots
        .first()
        .ok_or_else(|| Error::SolverFailure("amplitude balance has no positive root".into()))?;
    if (kappa - 1.0).abs() < 1e-6 {
        kappa = 1.0;
    }
    if g(kappa).abs() > 1e-10 {
        return Err(Error::SolverFailure(format!(
            "amplitude balance residual {:.2e} at kappa = {kappa}",
            g(kappa)
        )));
    }
    let crit = dim.crit();
    let s = (2.0 / (2.0 + kappa.powf(0.5 * crit))).powf(1.0 / (crit - 2.0));
    Ok(SyncCouple { kappa, s, t: kappa * s, crit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dim5() -> Dimension {
        Dimension::new(5, 1).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn dimension_guards() {
        assert!(Dimension::new(2, 0).is_err());
        assert!(Dimension::new(5, 2).is_err()); // 4 >= 3
        assert!(Dimension::new(7, 2).is_ok()); // 4 < 5
        assert!(Dimension::new(6, 2).is_err()); // 4 >= 4
    }

    #[test]
    fn normalization_constant_reference() {
        assert!(rel(dim5().bubble_constant(), 7.621_991_222_319_221_04) < 1e-14);
        assert!(rel(dim5().crit(), 10.0 / 3.0) < 1e-15);
    }

    #[test]
    fn peak_value_is_the_constant() {
        let w = Bubble::standard(dim5());
        assert!(rel(w.value(&[0.0; 5]), dim5().bubble_constant()) < 1e-14);
    }

    #[test]
    fn dilation_mode_at_origin() {
        // (n-2)/2 * C at r = 0
        assert!(rel(dilation_mode(dim5(), 0.0), 11.432_986_833_478_831_57) < 1e-14);
        // vanishes exactly on the unit sphere
        assert_eq!(dilation_mode(dim5(), 1.0), 0.0);
    }

    #[test]
    fn closed_laplacian_matches_finite_differences() {
        let dim = dim5();
        let w = Bubble::new(dim, vec![0.3, -0.2, 0.0, 0.1, -0.4], 1.7).unwrap();
        let pts: [[f64; 5]; 3] = [
            [0.0, 0.0, 0.0, 0.0, 0.0],
            [0.5, 0.1, -0.3, 0.2, 0.6],
            [-1.0, 0.4, 0.4, -0.2, 0.0],
        ];
        let h = 1e-4;
        for p in pts {
            let mut lap = 0.0;
            let f0 = w.value(&p);
            for i in 0..5 {
                let mut pp = p;
                pp[i] += h;
                let fp = w.value(&pp);
                pp[i] -= 2.0 * h;
                let fm = w.value(&pp);
                lap += (fp + fm - 2.0 * f0) / (h * h);
            }
            assert!(rel(lap, w.laplacian(&p)) < 1e-5, "at {p:?}");
        }
    }

    #[test]
    fn closed_derivatives_match_finite_differences() {
        let dim = dim5();
        let center = vec![0.1, -0.3, 0.2, 0.0, 0.5];
        let mu = 2.3;
        let y = [0.4, 0.0, -0.1, 0.3, 0.2];
        let h = 1e-6;
        for idx in 0..5 {
            let mut cp = center.clone();
            cp[idx] += h;
            let mut cm = center.clone();
            cm[idx] -= h;
            let fd = (Bubble::new(dim, cp, mu).unwrap().value(&y)
                - Bubble::new(dim, cm, mu).unwrap().value(&y))
                / (2.0 * h);
            let closed = Bubble::new(dim, center.clone(), mu)
                .unwrap()
                .derivative(BubbleDirection::Center(idx), &y)
                .unwrap();
            assert!((fd - closed).abs() < 1e-7 * (1.0 + closed.abs()), "idx {idx}");
        }
        let fd = (Bubble::new(dim, center.clone(), mu + h).unwrap().value(&y)
            - Bubble::new(dim, center.clone(), mu - h).unwrap().value(&y))
            / (2.0 * h);
        let closed = Bubble::new(dim, center, mu)
            .unwrap()
            .derivative(BubbleDirection::Scale, &y)
            .unwrap();
        assert!((fd - closed).abs() < 1e-7 * (1.0 + closed.abs()));
    }

    #[test]
    fn synchronization_solves_exactly() {
        for n in [5u32, 6, 7] {
            let dim = Dimension::new(n, 1).unwrap();
            let sc = solve_synchronized(dim).unwrap();
            assert_eq!(sc.kappa, 1.0, "n = {n}");
            assert!(sync_polynomial(dim, sc.kappa).abs() < 1e-12);
            // amplitude relation s^{crit-2} (2 + kappa^{crit/2}) = 2
            let resid = sc.s.powf(dim.crit() - 2.0) * (2.0 + sc.kappa.powf(0.5 * dim.crit())) - 2.0;
            assert!(resid.abs() < 1e-12, "n = {n}: {resid:.2e}");
            assert_eq!(sc.s, sc.t);
        }
    }

    #[test]
    fn synchronized_amplitude_reference_values() {
        let sc = solve_synchronized(dim5()).unwrap();
        assert!(rel(sc.s, 0.737_787_946_466_881_06) < 1e-14);
        assert!(rel(sc.source_coefficient_u(), 1.5) < 1e-13);
        assert!(rel(sc.source_coefficient_v(), 1.5) < 1e-13);
        let d6 = Dimension::new(6, 1).unwrap();
        assert!(rel(solve_synchronized(d6).unwrap().s, 2.0 / 3.0) < 1e-14);
    }

    proptest! {
        // W_{x,mu}(y) = mu^{(n-2)/2} W_{0,1}(mu (y - x))
        #[test]
        fn scaling_identity(
            mu in 0.2f64..50.0,
            x in prop::array::uniform5(-2.0f64..2.0),
            y in prop::array::uniform5(-3.0f64..3.0),
        ) {
            let dim = dim5();
            let w = Bubble::new(dim, x.to_vec(), mu).unwrap();
            let unit = Bubble::standard(dim);
            let z: Vec<f64> = y.iter().zip(&x).map(|(a, b)| mu * (a - b)).collect();
            let lhs = w.value(&y);
            let rhs = mu.powf(dim.half_nm2()) * unit.value(&z);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-12));
        }

        // the source really is the negative Laplacian, at random points
        #[test]
        fn source_is_negative_laplacian(
            y in prop::array::uniform5(-2.0f64..2.0),
            mu in 0.5f64..5.0,
        ) {
            let w = Bubble::new(dim5(), vec![0.0; 5], mu).unwrap();
            let h = 1e-4f64;
            let f0 = w.value(&y);
            let mut lap = 0.0;
            for i in 0..5 {
                let mut p = y;
                p[i] += h;
                let fp = w.value(&p);
                p[i] -= 2.0 * h;
                let fm = w.value(&p);
                lap += (fp + fm - 2.0 * f0) / (h * h);
            }
            let target = -w.source(&y);
            prop_assert!((lap - target).abs() < 2e-4 * (1.0 + target.abs()));
        }
    }
}
