//! The computations behind the binary's subcommands.
//!
//! Each command takes a validated configuration, runs one study, and
//! returns a report ready to be written: `constants` tabulates every
//! assembled constant with its identity-check residual, `green` probes the
//! periodic kernel, `project` checks the projected pair against its
//! monopole model, `residual` measures the weighted defect decay, `reduce`
//! solves the concentration balance at one period, and `sweep` maps the
//! scale law across the period grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ansatz::AnsatzField;
use crate::bubble::{solve_synchronized, sync_polynomial, Dimension, SyncCouple};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::lattice::StripLattice;
use crate::mc::McConfig;
use crate::moments::{
    crit_integral, dilation_mass, dilation_mass_quadrature, total_mass, total_mass_quadrature,
    weighted_crit_integral, weighted_dilation_pairing, weighted_dilation_pairing_quadrature,
    weighted_gradient_pairing, weighted_gradient_pairing_quadrature,
};
use crate::norm::Cloud;
use crate::reduction::{residual_scaling_study, ReducedSystem};
use crate::report::{Cell, Report};
use crate::special::{sphere_area, zeta};

/// RNG stream for point sampling, outside the 0..256 range the Monte Carlo
/// shards use.
const SAMPLING_STREAM: u64 = 999;

fn base_report(name: &str, columns: &[&str], cfg: &RunConfig) -> Report {
    let mut report = Report::new(name, columns);
    report.set_config_echo(&cfg.entries());
    report.set_meta_int("seed", cfg.mc_seed);
    report
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn reduced_system(cfg: &RunConfig, dim: Dimension, sync: SyncCouple) -> Result<ReducedSystem> {
    let floor = cfg
        .period_grid
        .iter()
        .fold(cfg.period, |acc, &l| acc.min(l));
    ReducedSystem::new(dim, sync, &cfg.profile1, &cfg.profile2, cfg.theta, floor)
}

/// Every named constant with value, computation route, certified error,
/// and the residual of its independent identity check.
pub fn cmd_constants(cfg: &RunConfig) -> Result<Report> {
    let dim = cfg.dim();
    let sync = solve_synchronized(dim)?;
    let crit = dim.crit();
    let mut report = base_report(
        "constants",
        &["name", "value", "error", "method", "check", "check_residual"],
        cfg,
    );
    let mut push = |name: &str, value: f64, error: f64, method: &str, check: &str, res: f64| {
        report
            .push_row(vec![
                name.into(),
                value.into(),
                error.into(),
                method.into(),
                check.into(),
                res.into(),
            ])
            .expect("fixed width");
    };
    push(
        "kappa",
        sync.kappa,
        0.0,
        "amplitude-ratio polynomial root (bisection scan)",
        "balance polynomial residual",
        sync_polynomial(dim, sync.kappa).abs(),
    );
    let s_target = 2.0 / (2.0 + sync.kappa.powf(0.5 * crit));
    push(
        "s",
        sync.s,
        0.0,
        "closed form from kappa",
        "s^(2*-2) - 2/(2 + kappa^(2*/2))",
        (sync.s.powf(crit - 2.0) - s_target).abs(),
    );
    push(
        "t",
        sync.t,
        0.0,
        "closed form from kappa",
        "t - kappa s",
        (sync.t - sync.kappa * sync.s).abs(),
    );
    push(
        "bubble_constant",
        dim.bubble_constant(),
        0.0,
        "closed form (n (n - 2))^((n - 2)/4)",
        "definition (no independent route)",
        0.0,
    );
    push(
        "sphere_area",
        sphere_area(dim.n())?,
        0.0,
        "closed form 2 pi^(n/2) / Gamma(n/2)",
        "definition (no independent route)",
        0.0,
    );
    let m0 = total_mass(dim)?;
    let m0_quad = total_mass_quadrature(dim, cfg.tol_constants)?;
    push(
        "total_mass",
        m0,
        (m0 - m0_quad).abs(),
        "closed form C^(2*-1) area(S^(n-1)) / n",
        "adaptive quadrature of the radial profile",
        rel(m0, m0_quad),
    );
    push(
        "crit_integral",
        crit_integral(dim)?,
        0.0,
        "beta-gamma closed form",
        "weighted pairing rows exercise it below",
        0.0,
    );
    let dm = dilation_mass(dim)?;
    let dm_quad = dilation_mass_quadrature(dim, cfg.tol_constants)?;
    push(
        "dilation_mass",
        dm,
        (dm - dm_quad).abs(),
        "dilation pairing identity -(n-2)/(2 (2*-1)) total_mass",
        "adaptive quadrature of the literal pairing",
        rel(dm, dm_quad),
    );
    let mut exponents: Vec<f64> = cfg
        .profile1
        .terms
        .iter()
        .chain(&cfg.profile2.terms)
        .map(|t| t.exponent)
        .collect();
    exponents.sort_by(|a, b| a.partial_cmp(b).expect("validated finite"));
    exponents.dedup();
    for beta in exponents {
        let wci = weighted_crit_integral(dim, beta)?;
        push(
            &format!("weighted_crit_integral({beta})"),
            wci,
            0.0,
            "beta-gamma closed form",
            "pairings below divide through it",
            0.0,
        );
        let wdp = weighted_dilation_pairing(dim, beta)?;
        let wdp_quad = weighted_dilation_pairing_quadrature(dim, beta, cfg.tol_constants)?;
        push(
            &format!("dilation_pairing({beta})"),
            wdp,
            (wdp - wdp_quad).abs(),
            "weighted dilation identity -(beta/2*) weighted_crit_integral",
            "adaptive quadrature of the literal pairing",
            rel(wdp, wdp_quad),
        );
        let wgp = weighted_gradient_pairing(dim, beta)?;
        let wgp_quad = weighted_gradient_pairing_quadrature(dim, beta, cfg.tol_constants)?;
        push(
            &format!("gradient_pairing({beta})"),
            wgp,
            (wgp - wgp_quad).abs(),
            "weighted gradient identity -(beta (beta-1)/2*) weighted_crit_integral(beta-2)",
            "adaptive quadrature of the literal pairing",
            rel(wgp, wgp_quad),
        );
    }
    let lattice = StripLattice::new(dim, cfg.period)?;
    let s_sum = lattice.lattice_constant(cfg.tol_constants)?;
    // the sum runs at unit spacing; the physical constant carries the
    // period scaling
    let spacing = cfg.period.powf(2.0 - dim.nf());
    if dim.k() == 1 {
        let closed =
            2.0 * lattice.kernel_constant() * zeta(dim.nf() - 2.0)? * spacing;
        push(
            "lattice_constant",
            s_sum.value * spacing,
            s_sum.tail * spacing,
            "image kernel sum with certified tail",
            "zeta reduction 2 c_n zeta(n-2) L^(2-n)",
            rel(s_sum.value * spacing, closed),
        );
    } else {
        push(
            "lattice_constant",
            s_sum.value * spacing,
            s_sum.tail * spacing,
            "image kernel sum with certified tail",
            "certified relative tail",
            s_sum.tail / s_sum.value,
        );
    }
    Ok(report)
}

/// Draw one point pair in the periodic cell with a minimum separation.
fn draw_pair(rng: &mut ChaCha8Rng, n: usize, period: f64) -> (Vec<f64>, Vec<f64>) {
    loop {
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..n).map(|_| (rng.gen::<f64>() - 0.5) * period).collect()
        };
        let z = draw(rng);
        let y = draw(rng);
        let d2: f64 = z.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 > 0.0025 {
            return (z, y);
        }
    }
}

/// Probe the periodic kernel: symmetry in its arguments and invariance
/// under whole-period shifts, both judged against the certified truncation
/// tails of the two evaluations.
pub fn cmd_green(cfg: &RunConfig) -> Result<Report> {
    let dim = cfg.dim();
    let lattice = StripLattice::new(dim, cfg.period)?;
    let mut report = base_report(
        "green",
        &[
            "pair",
            "green_value",
            "certified_tail",
            "symmetry_dev",
            "periodicity_dev",
            "tail_budget",
        ],
        cfg,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.mc_seed);
    rng.set_stream(SAMPLING_STREAM);
    let n = dim.n() as usize;
    for pair in 0..20i64 {
        let (z, y) = draw_pair(&mut rng, n, cfg.period);
        let g = lattice.green(&z, &y, cfg.tol_fields)?;
        let g_swapped = lattice.green(&y, &z, cfg.tol_fields)?;
        let mut z_shift = z.clone();
        z_shift[0] += cfg.period;
        let g_shifted = lattice.green(&z_shift, &y, cfg.tol_fields)?;
        let budget = g.tail + g_swapped.tail.max(g_shifted.tail);
        report.push_row(vec![
            pair.into(),
            g.value.into(),
            g.tail.into(),
            (g.value - g_swapped.value).abs().into(),
            (g.value - g_shifted.value).abs().into(),
            budget.into(),
        ])?;
    }
    let s_sum = lattice.lattice_constant(cfg.tol_constants)?;
    let spacing = cfg.period.powf(2.0 - dim.nf());
    report.set_meta_float("lattice_constant", s_sum.value * spacing);
    report.set_meta_float("lattice_constant_tail", s_sum.tail * spacing);
    if dim.k() == 1 {
        let closed = 2.0 * lattice.kernel_constant() * zeta(dim.nf() - 2.0)? * spacing;
        report.set_meta_float("lattice_constant_zeta", closed);
        report.set_meta_float(
            "lattice_constant_zeta_rel_dev",
            rel(s_sum.value * spacing, closed),
        );
    }
    Ok(report)
}

/// Fixed unit-ball probe set for the monopole-deviation estimate: a few
/// radii along the periodic axis (both ways), a free axis, and two
/// diagonals, clipped to stay inside the periodic cell.
pub fn expansion_probes(dim: Dimension, period: f64) -> Vec<Vec<f64>> {
    let n = dim.n() as usize;
    let k = dim.k() as usize;
    let clip = 0.5 * period - 0.1;
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    let mut d = vec![0.0; n];
    d[0] = 1.0;
    dirs.push(d.clone());
    d[0] = -1.0;
    dirs.push(d);
    let mut d = vec![0.0; n];
    d[n - 1] = 1.0;
    dirs.push(d);
    let half = 0.5f64.sqrt();
    let mut d = vec![0.0; n];
    d[0] = half;
    d[n - 1] = half;
    dirs.push(d);
    let mut d = vec![0.0; n];
    d[n - 2] = half;
    d[n - 1] = half;
    dirs.push(d);
    let mut points = Vec::new();
    for dir in &dirs {
        for radius in [0.3, 0.6, 0.95] {
            let mut y: Vec<f64> = dir.iter().map(|v| radius * v).collect();
            for v in y.iter_mut().take(k) {
                *v = v.clamp(-clip, clip);
            }
            points.push(y);
        }
    }
    points
}

/// Check the projected pair at the concentration scale of each period:
/// the pointwise bound against the bubble array over the full cloud, and
/// the Monte Carlo deviation from the monopole model over the probe set,
/// scaled by its predicted size.
pub fn cmd_project(cfg: &RunConfig) -> Result<Report> {
    let dim = cfg.dim();
    let sync = solve_synchronized(dim)?;
    let rs = reduced_system(cfg, dim, sync)?;
    let mut report = base_report(
        "project",
        &[
            "l_period",
            "mu",
            "cloud_points",
            "max_projection_ratio",
            "probe_points",
            "value_dev",
            "value_sigma",
            "predicted_scale",
            "scaled_ratio",
            "far_bound",
        ],
        cfg,
    );
    let center = vec![0.0; dim.n() as usize];
    let mc = McConfig { samples: cfg.mc_samples, seed: cfg.mc_seed };
    for &l_period in &cfg.period_grid {
        let (_, mu) = rs.solve_reduced(l_period)?;
        let lattice = StripLattice::new(dim, l_period)?;
        let af = AnsatzField::new(lattice, sync, center.clone(), mu)?;
        let cloud = Cloud::generate(dim, l_period, &center, mu, cfg.cloud_levels)?;
        let mut max_ratio = 0.0f64;
        for y in &cloud.points {
            let pu = af.projected_bubble(y)?;
            let array = af.bubble_array_value(y, cfg.tol_fields)?;
            max_ratio = max_ratio.max(pu.u / (sync.s * array.value));
        }
        let probes = expansion_probes(dim, l_period);
        let expansion = af.expansion_report(&probes, 1, &mc, false)?;
        report.push_row(vec![
            l_period.into(),
            mu.into(),
            cloud.len().into(),
            max_ratio.into(),
            probes.len().into(),
            expansion.value_dev.into(),
            expansion.value_sigma.into(),
            expansion.predicted_scale.into(),
            (expansion.value_dev / expansion.predicted_scale).into(),
            expansion.far_bound.into(),
        ])?;
    }
    report.set_meta_int("mc.samples_per_probe", cfg.mc_samples);
    Ok(report)
}

/// Measure the weighted residual norm across the configured scale grid and
/// fit the log-log decay.
pub fn cmd_residual(cfg: &RunConfig) -> Result<Report> {
    let dim = cfg.dim();
    let sync = solve_synchronized(dim)?;
    let lattice = StripLattice::new(dim, cfg.period)?;
    let study = residual_scaling_study(
        &lattice,
        sync,
        &cfg.profile1,
        &cfg.profile2,
        cfg.vartheta,
        cfg.cloud_levels,
        &cfg.residual_mu_grid,
    )?;
    let mut report = base_report("residual", &["mu", "weighted_residual_norm"], cfg);
    for (mu, norm) in study.mu_grid.iter().zip(&study.norms) {
        report.push_row(vec![(*mu).into(), (*norm).into()])?;
    }
    report.set_meta_float("slope", study.slope);
    report.set_meta_float("intercept", study.intercept);
    report.set_meta_float("max_fit_residual", study.max_fit_residual);
    report.set_meta_int("cloud_levels", u64::from(study.levels));
    Ok(report)
}

fn reduce_row(
    rs: &ReducedSystem,
    l_period: f64,
    scale_law: Option<(f64, f64)>,
) -> Result<Vec<Cell>> {
    let (x, mu) = rs.solve_reduced(l_period)?;
    let offset_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let dip = rs.dip_balance_term(mu);
    let inter = rs.interaction_balance_term(mu, l_period);
    let (predicted, ratio) = match scale_law {
        Some((c0, p)) => {
            let predicted = c0 * l_period.powf(p);
            (predicted, mu / predicted)
        }
        None => (f64::NAN, f64::NAN),
    };
    Ok(vec![
        l_period.into(),
        mu.into(),
        offset_norm.into(),
        dip.into(),
        inter.into(),
        (dip + inter).into(),
        predicted.into(),
        ratio.into(),
    ])
}

const REDUCE_COLUMNS: [&str; 8] = [
    "l_period",
    "mu_l",
    "offset_norm",
    "dip_term",
    "interaction_term",
    "balance_residual",
    "scale_law_prediction",
    "scale_law_ratio",
];

/// The closed-form scale law when both potentials share one leading
/// exponent; `None` (reported as NaN columns) when they do not.
fn scale_law(rs: &ReducedSystem) -> Option<(f64, f64)> {
    match (rs.c0(), rs.scaling_exponent()) {
        (Ok(c0), Ok(p)) => Some((c0, p)),
        _ => None,
    }
}

/// Solve the concentration balance at the configured period.
pub fn cmd_reduce(cfg: &RunConfig) -> Result<Report> {
    let dim = cfg.dim();
    let sync = solve_synchronized(dim)?;
    let rs = reduced_system(cfg, dim, sync)?;
    let law = scale_law(&rs);
    let mut report = base_report("reduce", &REDUCE_COLUMNS, cfg);
    report.push_row(reduce_row(&rs, cfg.period, law)?)?;
    if let Some((c0, p)) = law {
        report.set_meta_float("c0", c0);
        report.set_meta_float("scaling_exponent", p);
    } else {
        report.set_meta_str(
            "scale_law",
            "unavailable: leading exponents of the two potentials differ",
        );
    }
    report.set_meta_float("theta", cfg.theta);
    Ok(report)
}

/// Solve the balance across the period grid and fit the scale-law
/// exponent; the slope column holds the pointwise log-log derivative.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Report> {
    let dim = cfg.dim();
    let sync = solve_synchronized(dim)?;
    let rs = reduced_system(cfg, dim, sync)?;
    let law = scale_law(&rs);
    if cfg.period_grid.len() < 2 {
        return Err(Error::InvalidArgument(
            "sweep needs at least two periods in period.grid".into(),
        ));
    }
    let mut grid = cfg.period_grid.clone();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("validated finite"));
    let mut columns: Vec<&str> = REDUCE_COLUMNS.to_vec();
    columns.push("local_exponent");
    let mut report = base_report("sweep", &columns, cfg);
    let mut mus = Vec::with_capacity(grid.len());
    let mut rows = Vec::with_capacity(grid.len());
    for &l_period in &grid {
        let row = reduce_row(&rs, l_period, law)?;
        let &Cell::Float(mu) = &row[1] else { unreachable!("mu column is a float") };
        mus.push(mu);
        rows.push(row);
    }
    let ln_l: Vec<f64> = grid.iter().map(|l| l.ln()).collect();
    let ln_mu: Vec<f64> = mus.iter().map(|m| m.ln()).collect();
    for (i, mut row) in rows.into_iter().enumerate() {
        // log-log derivative of the table: centered where possible,
        // one-sided at the ends
        let (a, b) = match i {
            0 => (0, 1),
            i if i == grid.len() - 1 => (i - 1, i),
            i => (i - 1, i + 1),
        };
        let local = (ln_mu[b] - ln_mu[a]) / (ln_l[b] - ln_l[a]);
        row.push(local.into());
        report.push_row(row)?;
    }
    let m = ln_l.len() as f64;
    let x_mean = ln_l.iter().sum::<f64>() / m;
    let y_mean = ln_mu.iter().sum::<f64>() / m;
    let sxx: f64 = ln_l.iter().map(|x| (x - x_mean) * (x - x_mean)).sum();
    let sxy: f64 = ln_l.iter().zip(&ln_mu).map(|(x, y)| (x - x_mean) * (y - y_mean)).sum();
    let fitted = sxy / sxx;
    report.set_meta_float("fitted_exponent", fitted);
    report.set_meta_float("fitted_prefactor", (y_mean - fitted * x_mean).exp());
    if let Some((c0, p)) = law {
        report.set_meta_float("c0", c0);
        report.set_meta_float("scaling_exponent", p);
    }
    Ok(report)
}
