//! Run configuration for the command line tools.
//!
//! The on-disk format is a flat list of `key = value` lines with dotted
//! section keys, `#` comments, and comma-separated lists. Every key has a
//! default, so an empty file (or no file) describes the standard study:
//! n = 5, k = 1, five symmetric wells of depth 1 and decay 3.5 in both
//! potentials.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::bubble::Dimension;
use crate::error::{Error, Result};
use crate::profile::{DipTerm, PotentialProfile};

/// Everything a run needs: geometry, potentials, norm and quadrature
/// settings, and output location.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n: u32,
    pub k: u32,
    /// Period used by single-period commands.
    pub period: f64,
    /// Periods visited by the sweep command.
    pub period_grid: Vec<f64>,
    pub profile1: PotentialProfile,
    pub profile2: PotentialProfile,
    /// Offset of the error-norm weight exponent from its ceiling.
    pub vartheta: f64,
    /// Cloud refinement level for field studies.
    pub cloud_levels: u32,
    /// Relative tolerance for assembled constants and lattice sums.
    pub tol_constants: f64,
    /// Relative tolerance for pointwise field evaluations.
    pub tol_fields: f64,
    pub mc_samples: u64,
    pub mc_seed: u64,
    /// Offset-regime exponent of the reduced solve.
    pub theta: f64,
    /// Scale grid for the residual decay study.
    pub residual_mu_grid: Vec<f64>,
    pub out_dir: PathBuf,
}

/// One depth-|amplitude| well per coordinate, decaying half a power above
/// the admissibility floor n - 2; gives decay 3.5 in dimension 5.
fn symmetric_wells(dim_n: u32, amplitude: f64) -> PotentialProfile {
    let exponent = f64::from(dim_n) - 1.5;
    let terms = (0..dim_n as usize)
        .map(|coord| DipTerm { coord, amplitude, exponent })
        .collect();
    PotentialProfile { terms, cutoff_radius: 0.25 }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: 5,
            k: 1,
            period: 2.0,
            period_grid: vec![2.0, 3.0, 4.0],
            profile1: symmetric_wells(5, -1.0),
            profile2: symmetric_wells(5, -1.0),
            vartheta: 0.01,
            cloud_levels: 2,
            tol_constants: 1e-10,
            tol_fields: 1e-8,
            mc_samples: 10_000_000,
            mc_seed: 424_242,
            theta: 0.1,
            residual_mu_grid: vec![20.0, 45.0, 95.0, 200.0],
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse_f64(key: &str, raw: &str) -> Result<f64> {
    raw.parse::<f64>().map_err(|_| {
        Error::ConfigError(format!("{key}: expected a number, got {raw:?}"))
    })
}

fn parse_u32(key: &str, raw: &str) -> Result<u32> {
    raw.parse::<u32>().map_err(|_| {
        Error::ConfigError(format!("{key}: expected a nonnegative integer, got {raw:?}"))
    })
}

fn parse_u64(key: &str, raw: &str) -> Result<u64> {
    raw.parse::<u64>().map_err(|_| {
        Error::ConfigError(format!("{key}: expected a nonnegative integer, got {raw:?}"))
    })
}

fn parse_f64_list(key: &str, raw: &str) -> Result<Vec<f64>> {
    raw.split(',').map(|part| parse_f64(key, part.trim())).collect()
}

fn parse_usize_list(key: &str, raw: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|part| {
            part.trim().parse::<usize>().map_err(|_| {
                Error::ConfigError(format!(
                    "{key}: expected a list of coordinate indices, got {raw:?}"
                ))
            })
        })
        .collect()
}

/// Raw overrides for one potential before the term lists are zipped.
#[derive(Default)]
struct ProfileDraft {
    coords: Option<Vec<usize>>,
    amplitudes: Option<Vec<f64>>,
    exponents: Option<Vec<f64>>,
    cutoff: Option<f64>,
}

impl ProfileDraft {
    fn apply(self, name: &str, base: &mut PotentialProfile) -> Result<()> {
        let any_list =
            self.coords.is_some() || self.amplitudes.is_some() || self.exponents.is_some();
        if any_list {
            let coords = self.coords.ok_or_else(|| {
                Error::ConfigError(format!("{name}: coords, amplitudes, and exponents go together"))
            })?;
            let amplitudes = self.amplitudes.ok_or_else(|| {
                Error::ConfigError(format!("{name}: coords, amplitudes, and exponents go together"))
            })?;
            let exponents = self.exponents.ok_or_else(|| {
                Error::ConfigError(format!("{name}: coords, amplitudes, and exponents go together"))
            })?;
            if coords.len() != amplitudes.len() || coords.len() != exponents.len() {
                return Err(Error::ConfigError(format!(
                    "{name}: term lists disagree in length ({}, {}, {})",
                    coords.len(),
                    amplitudes.len(),
                    exponents.len()
                )));
            }
            base.terms = coords
                .into_iter()
                .zip(amplitudes)
                .zip(exponents)
                .map(|((coord, amplitude), exponent)| DipTerm { coord, amplitude, exponent })
                .collect();
        }
        if let Some(cutoff) = self.cutoff {
            base.cutoff_radius = cutoff;
        }
        Ok(())
    }
}

impl RunConfig {
    /// Parse a configuration text on top of the defaults. Unknown and
    /// duplicate keys are errors so typos cannot silently fall back.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut raw: BTreeMap<String, String> = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::ConfigError(format!(
                    "line {}: expected `key = value`, got {line:?}",
                    idx + 1
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if raw.insert(key.clone(), value).is_some() {
                return Err(Error::ConfigError(format!("duplicate key {key}")));
            }
        }
        let mut cfg = RunConfig::default();
        let mut draft1 = ProfileDraft::default();
        let mut draft2 = ProfileDraft::default();
        let mut n_override = None;
        for (key, value) in &raw {
            match key.as_str() {
                "dimension.n" => n_override = Some(parse_u32(key, value)?),
                "dimension.k" => cfg.k = parse_u32(key, value)?,
                "period.l" => cfg.period = parse_f64(key, value)?,
                "period.grid" => cfg.period_grid = parse_f64_list(key, value)?,
                "profile1.coords" => draft1.coords = Some(parse_usize_list(key, value)?),
                "profile1.amplitudes" => draft1.amplitudes = Some(parse_f64_list(key, value)?),
                "profile1.exponents" => draft1.exponents = Some(parse_f64_list(key, value)?),
                "profile1.cutoff" => draft1.cutoff = Some(parse_f64(key, value)?),
                "profile2.coords" => draft2.coords = Some(parse_usize_list(key, value)?),
                "profile2.amplitudes" => draft2.amplitudes = Some(parse_f64_list(key, value)?),
                "profile2.exponents" => draft2.exponents = Some(parse_f64_list(key, value)?),
                "profile2.cutoff" => draft2.cutoff = Some(parse_f64(key, value)?),
                "norm.vartheta" => cfg.vartheta = parse_f64(key, value)?,
                "norm.cloud_levels" => cfg.cloud_levels = parse_u32(key, value)?,
                "quad.tol_constants" => cfg.tol_constants = parse_f64(key, value)?,
                "quad.tol_fields" => cfg.tol_fields = parse_f64(key, value)?,
                "mc.samples" => cfg.mc_samples = parse_u64(key, value)?,
                "mc.seed" => cfg.mc_seed = parse_u64(key, value)?,
                "reduction.theta" => cfg.theta = parse_f64(key, value)?,
                "residual.mu_grid" => cfg.residual_mu_grid = parse_f64_list(key, value)?,
                "output.dir" => cfg.out_dir = PathBuf::from(value),
                _ => {
                    return Err(Error::ConfigError(format!("unknown key {key}")));
                }
            }
        }
        if let Some(n) = n_override {
            if n != cfg.n {
                // the default wells live on every coordinate with a decay
                // tied to n, so a new dimension reshapes them unless the
                // file overrides the term lists
                cfg.n = n;
                let wells = symmetric_wells(n, -1.0);
                cfg.profile1.terms = wells.terms.clone();
                cfg.profile2.terms = wells.terms;
            }
        }
        draft1.apply("profile1", &mut cfg.profile1)?;
        draft2.apply("profile2", &mut cfg.profile2)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read and parse a configuration file.
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::ConfigError(format!("cannot read config {}: {e}", path.display()))
        })?;
        RunConfig::parse(&text)
    }

    /// Check every structural hypothesis, naming the violated inequality.
    pub fn validate(&self) -> Result<()> {
        let dim = Dimension::new(self.n, self.k).map_err(|e| match e {
            Error::InvalidArgument(msg) => Error::ConfigError(msg),
            other => other,
        })?;
        if !(self.period > 0.0) || !self.period.is_finite() {
            return Err(Error::ConfigError(format!(
                "need period.l > 0, got {}",
                self.period
            )));
        }
        if self.period_grid.is_empty() {
            return Err(Error::ConfigError("period.grid must not be empty".into()));
        }
        for &l in &self.period_grid {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::ConfigError(format!(
                    "need every period.grid entry > 0, got {l}"
                )));
            }
        }
        let min_period = self
            .period_grid
            .iter()
            .fold(self.period, |acc, &l| acc.min(l));
        for (name, profile) in [("profile1", &self.profile1), ("profile2", &self.profile2)] {
            profile.validate(dim, min_period).map_err(|e| match e {
                Error::InvalidArgument(msg) => Error::ConfigError(format!("{name}: {msg}")),
                other => other,
            })?;
        }
        let theta_ceiling = 0.5 * (dim.nf() - 2.0) - dim.k() as f64;
        if !(self.vartheta > 0.0 && self.vartheta < theta_ceiling) {
            return Err(Error::ConfigError(format!(
                "need 0 < norm.vartheta < (n - 2)/2 - k = {theta_ceiling}, got {}",
                self.vartheta
            )));
        }
        if self.cloud_levels > 8 {
            return Err(Error::ConfigError(format!(
                "need norm.cloud_levels <= 8, got {}",
                self.cloud_levels
            )));
        }
        for (key, tol) in [
            ("quad.tol_constants", self.tol_constants),
            ("quad.tol_fields", self.tol_fields),
        ] {
            if !(tol > 0.0 && tol < 1.0) {
                return Err(Error::ConfigError(format!("need 0 < {key} < 1, got {tol}")));
            }
        }
        if self.mc_samples < 1000 {
            return Err(Error::ConfigError(format!(
                "need mc.samples >= 1000 for stable error bars, got {}",
                self.mc_samples
            )));
        }
        if !(self.theta > 0.0) || !self.theta.is_finite() {
            return Err(Error::ConfigError(format!(
                "need reduction.theta > 0, got {}",
                self.theta
            )));
        }
        if self.residual_mu_grid.len() < 2 {
            return Err(Error::ConfigError(
                "residual.mu_grid needs at least two scales".into(),
            ));
        }
        for &mu in &self.residual_mu_grid {
            if !(mu > 0.0) || !mu.is_finite() {
                return Err(Error::ConfigError(format!(
                    "need every residual.mu_grid entry > 0, got {mu}"
                )));
            }
        }
        Ok(())
    }

    /// The validated geometry.
    pub fn dim(&self) -> Dimension {
        Dimension::new(self.n, self.k).expect("validated at construction")
    }

    /// Canonical key/value listing, used to echo the configuration into
    /// report metadata. Round-trips through `parse`.
    pub fn entries(&self) -> Vec<(String, String)> {
        fn list(values: &[f64]) -> String {
            values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
        }
        fn coords(profile: &PotentialProfile) -> String {
            profile
                .terms
                .iter()
                .map(|t| t.coord.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        }
        let amps =
            |p: &PotentialProfile| list(&p.terms.iter().map(|t| t.amplitude).collect::<Vec<_>>());
        let exps =
            |p: &PotentialProfile| list(&p.terms.iter().map(|t| t.exponent).collect::<Vec<_>>());
        vec![
            ("dimension.n".into(), self.n.to_string()),
            ("dimension.k".into(), self.k.to_string()),
            ("period.l".into(), self.period.to_string()),
            ("period.grid".into(), list(&self.period_grid)),
            ("profile1.coords".into(), coords(&self.profile1)),
            ("profile1.amplitudes".into(), amps(&self.profile1)),
            ("profile1.exponents".into(), exps(&self.profile1)),
            ("profile1.cutoff".into(), self.profile1.cutoff_radius.to_string()),
            ("profile2.coords".into(), coords(&self.profile2)),
            ("profile2.amplitudes".into(), amps(&self.profile2)),
            ("profile2.exponents".into(), exps(&self.profile2)),
            ("profile2.cutoff".into(), self.profile2.cutoff_radius.to_string()),
            ("norm.vartheta".into(), self.vartheta.to_string()),
            ("norm.cloud_levels".into(), self.cloud_levels.to_string()),
            ("quad.tol_constants".into(), self.tol_constants.to_string()),
            ("quad.tol_fields".into(), self.tol_fields.to_string()),
            ("mc.samples".into(), self.mc_samples.to_string()),
            ("mc.seed".into(), self.mc_seed.to_string()),
            ("reduction.theta".into(), self.theta.to_string()),
            ("residual.mu_grid".into(), list(&self.residual_mu_grid)),
            ("output.dir".into(), self.out_dir.display().to_string()),
        ]
    }

    /// A fully commented example file that parses back to the defaults.
    pub fn example_text() -> String {
        String::from(
            "# geometry: ambient dimension and number of periodic coordinates\n\
             dimension.n = 5\n\
             dimension.k = 1\n\n\
             # periodic cell size; the grid drives the sweep command\n\
             period.l = 2.0\n\
             period.grid = 2, 3, 4\n\n\
             # potential wells: parallel lists, one entry per well\n\
             profile1.coords = 0, 1, 2, 3, 4\n\
             profile1.amplitudes = -1, -1, -1, -1, -1\n\
             profile1.exponents = 3.5, 3.5, 3.5, 3.5, 3.5\n\
             profile1.cutoff = 0.25\n\
             profile2.coords = 0, 1, 2, 3, 4\n\
             profile2.amplitudes = -1, -1, -1, -1, -1\n\
             profile2.exponents = 3.5, 3.5, 3.5, 3.5, 3.5\n\
             profile2.cutoff = 0.25\n\n\
             # weighted-norm and cloud settings\n\
             norm.vartheta = 0.01\n\
             norm.cloud_levels = 2\n\n\
             # quadrature and Monte Carlo settings\n\
             quad.tol_constants = 1e-10\n\
             quad.tol_fields = 1e-8\n\
             mc.samples = 10000000\n\
             mc.seed = 424242\n\n\
             # reduced-solve offset regime and residual-study scale grid\n\
             reduction.theta = 0.1\n\
             residual.mu_grid = 20, 45, 95, 200\n\n\
             # report directory\n\
             output.dir = out\n",
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_the_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn example_text_round_trips_to_defaults() {
        let cfg = RunConfig::parse(&RunConfig::example_text()).unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn entries_round_trip_through_parse() {
        let text = "profile1.coords = 0, 2\nprofile1.amplitudes = -0.5, -0.25\n\
                    profile1.exponents = 3.2, 3.4\nmc.seed = 7\nperiod.l = 3.0\n";
        let cfg = RunConfig::parse(text).unwrap();
        let echo: String = cfg
            .entries()
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        assert_eq!(RunConfig::parse(&echo).unwrap(), cfg);
    }

    #[test]
    fn comments_and_spacing_are_ignored() {
        let cfg = RunConfig::parse("  # leading comment\n mc.seed=9 # trailing\n\n").unwrap();
        assert_eq!(cfg.mc_seed, 9);
    }

    #[test]
    fn unknown_and_duplicate_keys_are_rejected() {
        assert!(matches!(
            RunConfig::parse("mc.sample = 5\n"),
            Err(Error::ConfigError(msg)) if msg.contains("unknown key mc.sample")
        ));
        assert!(matches!(
            RunConfig::parse("mc.seed = 5\nmc.seed = 6\n"),
            Err(Error::ConfigError(msg)) if msg.contains("duplicate")
        ));
        assert!(matches!(
            RunConfig::parse("just words\n"),
            Err(Error::ConfigError(msg)) if msg.contains("key = value")
        ));
    }

    #[test]
    fn dimension_violation_names_the_inequality() {
        let err = RunConfig::parse("dimension.k = 3\n").unwrap_err();
        match err {
            Error::ConfigError(msg) => assert!(msg.contains("2k < n - 2"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn profile_lists_must_agree_in_length() {
        let err = RunConfig::parse(
            "profile1.coords = 0, 1\nprofile1.amplitudes = -1\nprofile1.exponents = 3.5, 3.5\n",
        )
        .unwrap_err();
        match err {
            Error::ConfigError(msg) => assert!(msg.contains("length"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn vartheta_ceiling_is_enforced_and_named() {
        let err = RunConfig::parse("norm.vartheta = 0.6\n").unwrap_err();
        match err {
            Error::ConfigError(msg) => assert!(msg.contains("(n - 2)/2 - k"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn dimension_override_reshapes_default_wells() {
        let cfg = RunConfig::parse("dimension.n = 6\n").unwrap();
        assert_eq!(cfg.profile1.terms.len(), 6);
        assert_eq!(cfg.profile1.terms[0].exponent, 4.5);
        assert!(cfg.validate().is_ok());
    }
}
