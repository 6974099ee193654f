//! Deterministic sharded Monte Carlo integration.
//!
//! Work is split over a fixed number of independent counter-mode RNG
//! streams and the partial sums are reduced in stream order, so results are
//! bit-identical for a given (seed, sample count) regardless of how many
//! threads actually ran the shards.

use crate::error::{Error, Result};
use crate::quad::radial_power_integral;
use crate::special::sphere_area;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Fill `out` with standard normal draws (Box-Muller; two per transform).
fn fill_standard_normal(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let mut i = 0;
    while i < out.len() {
        let u1: f64 = rng.gen::<f64>().max(1e-300);
        let u2: f64 = rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let th = 2.0 * std::f64::consts::PI * u2;
        out[i] = r * th.cos();
        i += 1;
        if i < out.len() {
            out[i] = r * th.sin();
            i += 1;
        }
    }
}

/// Number of independent RNG streams; fixed so reductions are reproducible.
pub const SHARDS: u64 = 256;

#[derive(Debug, Clone, Copy)]
pub struct McConfig {
    pub samples: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: u64,
}

impl McEstimate {
    /// Absolute deviation of `reference` in units of the standard error.
    pub fn sigma_distance(&self, reference: f64) -> f64 {
        if self.std_err == 0.0 {
            if self.mean == reference {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - reference).abs() / self.std_err
        }
    }
}

/// A proposal distribution on R^d with evaluable density.
pub trait Sampler: Sync {
    fn dim(&self) -> usize;
    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [f64]);
    fn density(&self, w: &[f64]) -> f64;
}

/// Heavy-tailed radial proposal matching the profile source shape:
/// p(w) proportional to (1 + |w|^2)^{-(n+2)/2}.
///
/// The radial CDF is (r^2/(1+r^2))^{n/2}, inverted in closed form, so no
/// rejection step is needed and the draw count per sample is fixed.
pub struct BubbleShapeSampler {
    n: usize,
    norm: f64,
}

impl BubbleShapeSampler {
    pub fn new(n_dim: u32) -> Result<Self> {
        let nf = f64::from(n_dim);
        let norm = sphere_area(n_dim)? * radial_power_integral(nf - 1.0, 0.5 * (nf + 2.0))?;
        Ok(BubbleShapeSampler { n: n_dim as usize, norm })
    }

    fn radius_from_uniform(&self, v: f64) -> f64 {
        let nf = self.n as f64;
        let v = v.clamp(1e-16, 1.0 - 1e-16);
        let a = v.powf(1.0 / nf);
        a / (1.0 - v.powf(2.0 / nf)).sqrt()
    }
}

impl Sampler for BubbleShapeSampler {
    fn dim(&self) -> usize {
        self.n
    }

    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let r = self.radius_from_uniform(rng.gen::<f64>());
        loop {
            fill_standard_normal(rng, out);
            let len2: f64 = out.iter().map(|g| g * g).sum();
            if len2 > 0.0 {
                let scale = r / len2.sqrt();
                for o in out.iter_mut() {
                    *o *= scale;
                }
                return;
            }
        }
    }

    fn density(&self, w: &[f64]) -> f64 {
        let r2: f64 = w.iter().map(|x| x * x).sum();
        let nf = self.n as f64;
        (1.0 + r2).powf(-0.5 * (nf + 2.0)) / self.norm
    }
}

/// Proposal concentrating like the Newtonian kernel around a point:
/// q(z) proportional to |z - c|^{2-n} on the ball of radius rho.
///
/// Used to keep ratios finite when the integrand itself carries the kernel
/// singularity.
pub struct KernelBallSampler {
    center: Vec<f64>,
    radius: f64,
    norm: f64,
}

impl KernelBallSampler {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "kernel ball radius must be positive, got {radius}"
            )));
        }
        let n = center.len() as u32;
        // int_{B_rho} |z-c|^{2-n} dz = area(S^{n-1}) rho^2 / 2
        let norm = sphere_area(n)? * radius * radius / 2.0;
        Ok(KernelBallSampler { center, radius, norm })
    }
}

impl Sampler for KernelBallSampler {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        // radial CDF r^2/rho^2 regardless of dimension
        let v: f64 = rng.gen::<f64>().max(1e-16);
        let r = self.radius * v.sqrt();
        loop {
            fill_standard_normal(rng, out);
            let len2: f64 = out.iter().map(|g| g * g).sum();
            if len2 > 0.0 {
                let scale = r / len2.sqrt();
                for (o, c) in out.iter_mut().zip(&self.center) {
                    *o = c + *o * scale;
                }
                return;
            }
        }
    }

    fn density(&self, w: &[f64]) -> f64 {
        let r2: f64 = w
            .iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if r2 > self.radius * self.radius {
            return 0.0;
        }
        let nf = self.center.len() as f64;
        r2.powf(0.5 * (2.0 - nf)) / self.norm
    }
}

/// Two-component mixture; draws from `a` with probability `weight_a`.
pub struct Mixture<A: Sampler, B: Sampler> {
    pub a: A,
    pub b: B,
    pub weight_a: f64,
}

impl<A: Sampler, B: Sampler> Sampler for Mixture<A, B> {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        if rng.gen::<f64>() < self.weight_a {
            self.a.draw(rng, out);
        } else {
            self.b.draw(rng, out);
        }
    }

    fn density(&self, w: &[f64]) -> f64 {
        self.weight_a * self.a.density(w) + (1.0 - self.weight_a) * self.b.density(w)
    }
}

/// Importance-sampled integral of `f` over R^d: E[f(W)/p(W)] under the
/// proposal. Shard sums are combined in fixed order, so the result depends
/// only on (seed, samples), never on thread scheduling.
pub fn estimate<S, F>(sampler: &S, f: &F, cfg: &McConfig) -> Result<McEstimate>
where
    S: Sampler,
    F: Fn(&[f64]) -> f64 + Sync,
{
    if cfg.samples == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let base = cfg.samples / SHARDS;
    let rem = cfg.samples % SHARDS;
    let partials: Vec<Result<(f64, f64, u64)>> = (0..SHARDS)
        .into_par_iter()
        .map(|shard| {
            let count = base + u64::from(shard < rem);
            if count == 0 {
                return Ok((0.0, 0.0, 0));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(shard);
            let mut buf = vec![0.0; sampler.dim()];
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..count {
                sampler.draw(&mut rng, &mut buf);
                let p = sampler.density(&buf);
                if !(p > 0.0) {
                    return Err(Error::OracleFailure(
                        "proposal produced a point with nonpositive density".into(),
                    ));
                }
                let v = f(&buf) / p;
                if !v.is_finite() {
                    return Err(Error::Singularity(
                        "integrand ratio non-finite during sampling".into(),
                    ));
                }
                sum += v;
                sumsq += v * v;
            }
            Ok((sum, sumsq, count))
        })
        .collect();
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    let mut n = 0u64;
    for p in partials {
        let (s, s2, c) = p?;
        sum += s;
        sumsq += s2;
        n += c;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 {
        ((sumsq - nf * mean * mean) / (nf - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(McEstimate {
        mean,
        std_err: (var / nf).sqrt(),
        samples: n,
    })
}
