//! Plain-text scenario configuration.
//!
//! One `section.key = value` assignment per line; `#` starts a comment.
//! Vectors and lists are whitespace-separated numbers.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid configuration: {key} {invariant}")]
    Validation { key: &'static str, invariant: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    FreeFas,
    PotentialFas,
    ConesScaling,
    StatphaseBench,
    ContinuitySuite,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::FreeFas,
        Scenario::PotentialFas,
        Scenario::ConesScaling,
        Scenario::StatphaseBench,
        Scenario::ContinuitySuite,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::FreeFas => "free-fas",
            Scenario::PotentialFas => "potential-fas",
            Scenario::ConesScaling => "cones-scaling",
            Scenario::StatphaseBench => "statphase-bench",
            Scenario::ContinuitySuite => "continuity-suite",
        }
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Scenario::ALL
            .iter()
            .find(|sc| sc.name() == s)
            .copied()
            .ok_or_else(|| {
                let names: Vec<_> = Scenario::ALL.iter().map(|s| s.name()).collect();
                format!("unknown scenario '{s}' (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PacketConfig {
    pub k0: [f64; 3],
    pub sigma: f64,
    pub m: f64,
    /// `(re, im)` of the two spin channels
    pub spin_mix: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridConfig {
    pub k_max: f64,
    pub lmax: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConeConfig {
    pub axis: [f64; 3],
    pub half_angle: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetectorConfig {
    pub r_list: Vec<f64>,
    /// radius of the full-sphere crossing check; 0 disables it
    pub full_sphere_radius: f64,
    pub lambda_list: Vec<f64>,
    /// 0 picks the default for the cone
    pub n_theta: usize,
    pub n_phi: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PotentialConfig {
    pub coupling: f64,
    pub width: f64,
    pub half_width: f64,
    pub n: usize,
    pub n_radii: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConesConfig {
    pub k: [f64; 3],
    pub lambda_list: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatphaseConfig {
    pub y: [f64; 3],
    pub y_far: [f64; 3],
    pub mu_list: Vec<f64>,
    pub chi_r1: f64,
    pub chi_r2: f64,
    pub k_cut: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContinuityConfig {
    pub points: usize,
    pub h: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TolConfig {
    pub lse: f64,
    pub max_iter: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub packet: PacketConfig,
    pub grid: GridConfig,
    pub cone: ConeConfig,
    pub detector: DetectorConfig,
    pub potential: PotentialConfig,
    pub cones: ConesConfig,
    pub statphase: StatphaseConfig,
    pub continuity: ContinuityConfig,
    pub tol: TolConfig,
    pub threads: usize,
    pub out_dir: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario: Scenario::FreeFas,
            packet: PacketConfig {
                k0: [2.0, 0.0, 0.0],
                sigma: 0.5,
                m: 1.0,
                spin_mix: [1.0, 0.0, 0.0, 0.0],
            },
            grid: GridConfig { k_max: 5.0, lmax: 26 },
            cone: ConeConfig {
                axis: [1.0, 0.0, 0.0],
                half_angle: 0.3,
            },
            detector: DetectorConfig {
                r_list: vec![30.0, 60.0, 120.0],
                full_sphere_radius: 60.0,
                lambda_list: vec![30.0, 60.0],
                n_theta: 0,
                n_phi: 0,
            },
            potential: PotentialConfig {
                coupling: 0.05,
                width: 1.0,
                half_width: 8.0,
                n: 32,
                n_radii: 40,
            },
            cones: ConesConfig {
                k: [2.0, 0.0, 0.0],
                lambda_list: vec![25.0, 50.0, 100.0, 200.0],
            },
            statphase: StatphaseConfig {
                y: [0.6, 0.0, 0.0],
                y_far: [1.5, 0.0, 0.0],
                mu_list: vec![25.0, 50.0, 100.0, 250.0],
                chi_r1: 6.0,
                chi_r2: 8.0,
                k_cut: 8.0,
            },
            continuity: ContinuityConfig {
                points: 50,
                h: 0.02,
                seed: 20,
            },
            tol: TolConfig {
                lse: 1e-12,
                max_iter: 200,
            },
            threads: 1,
            out_dir: None,
        }
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ")
}

impl ScenarioConfig {
    /// The configuration as parseable text.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("scenario", self.scenario.name().into());
        kv("packet.k0", fmt_list(&self.packet.k0));
        kv("packet.sigma", format!("{}", self.packet.sigma));
        kv("packet.m", format!("{}", self.packet.m));
        kv("packet.spin_mix", fmt_list(&self.packet.spin_mix));
        kv("grid.k_max", format!("{}", self.grid.k_max));
        kv("grid.lmax", format!("{}", self.grid.lmax));
        kv("cone.axis", fmt_list(&self.cone.axis));
        kv("cone.half_angle", format!("{}", self.cone.half_angle));
        kv("detector.r_list", fmt_list(&self.detector.r_list));
        kv("detector.full_sphere_radius", format!("{}", self.detector.full_sphere_radius));
        kv("detector.lambda_list", fmt_list(&self.detector.lambda_list));
        kv("detector.n_theta", format!("{}", self.detector.n_theta));
        kv("detector.n_phi", format!("{}", self.detector.n_phi));
        kv("potential.coupling", format!("{}", self.potential.coupling));
        kv("potential.width", format!("{}", self.potential.width));
        kv("potential.half_width", format!("{}", self.potential.half_width));
        kv("potential.n", format!("{}", self.potential.n));
        kv("potential.n_radii", format!("{}", self.potential.n_radii));
        kv("cones.k", fmt_list(&self.cones.k));
        kv("cones.lambda_list", fmt_list(&self.cones.lambda_list));
        kv("statphase.y", fmt_list(&self.statphase.y));
        kv("statphase.y_far", fmt_list(&self.statphase.y_far));
        kv("statphase.mu_list", fmt_list(&self.statphase.mu_list));
        kv("statphase.chi_r1", format!("{}", self.statphase.chi_r1));
        kv("statphase.chi_r2", format!("{}", self.statphase.chi_r2));
        kv("statphase.k_cut", format!("{}", self.statphase.k_cut));
        kv("continuity.points", format!("{}", self.continuity.points));
        kv("continuity.h", format!("{}", self.continuity.h));
        kv("continuity.seed", format!("{}", self.continuity.seed));
        kv("tol.lse", format!("{:e}", self.tol.lse));
        kv("tol.max_iter", format!("{}", self.tol.max_iter));
        kv("run.threads", format!("{}", self.threads));
        if let Some(d) = &self.out_dir {
            kv("run.out_dir", d.display().to_string());
        }
        s
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn bad(key: &'static str, invariant: &str) -> Result<(), ConfigError> {
            Err(ConfigError::Validation {
                key,
                invariant: invariant.into(),
            })
        }
        fn increasing(v: &[f64]) -> bool {
            !v.is_empty() && v.iter().all(|x| *x > 0.0 && x.is_finite()) && v.windows(2).all(|w| w[1] > w[0])
        }
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if !pos(self.packet.sigma) {
            return bad("packet.sigma", "must be positive");
        }
        if !pos(self.packet.m) {
            return bad("packet.m", "must be positive");
        }
        if self.packet.k0.iter().any(|x| !x.is_finite()) {
            return bad("packet.k0", "must be finite");
        }
        if self.packet.spin_mix.iter().all(|x| *x == 0.0) || self.packet.spin_mix.iter().any(|x| !x.is_finite()) {
            return bad("packet.spin_mix", "must be finite and non-zero");
        }
        if !pos(self.grid.k_max) {
            return bad("grid.k_max", "must be positive");
        }
        if self.grid.lmax == 0 {
            return bad("grid.lmax", "must be positive");
        }
        let axis_norm = self.cone.axis.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !pos(axis_norm) {
            return bad("cone.axis", "must be a non-zero vector");
        }
        if !(self.cone.half_angle > 0.0 && self.cone.half_angle <= std::f64::consts::PI) {
            return bad("cone.half_angle", "must lie in (0, pi]");
        }
        if !increasing(&self.detector.r_list) {
            return bad("detector.r_list", "must be non-empty, positive and increasing");
        }
        if !(self.detector.full_sphere_radius >= 0.0) {
            return bad("detector.full_sphere_radius", "must be non-negative");
        }
        if !increasing(&self.detector.lambda_list) {
            return bad("detector.lambda_list", "must be non-empty, positive and increasing");
        }
        if (self.detector.n_theta == 0) != (self.detector.n_phi == 0) {
            return bad("detector.n_theta", "and detector.n_phi must be both zero or both positive");
        }
        if !(self.potential.coupling >= 0.0 && self.potential.coupling.is_finite()) {
            return bad("potential.coupling", "must be non-negative");
        }
        if !pos(self.potential.width) {
            return bad("potential.width", "must be positive");
        }
        if !pos(self.potential.half_width) {
            return bad("potential.half_width", "must be positive");
        }
        if self.potential.n < 4 {
            return bad("potential.n", "must be at least 4");
        }
        if self.potential.n_radii < 2 {
            return bad("potential.n_radii", "must be at least 2");
        }
        if !increasing(&self.cones.lambda_list) {
            return bad("cones.lambda_list", "must be non-empty, positive and increasing");
        }
        if !increasing(&self.statphase.mu_list) {
            return bad("statphase.mu_list", "must be non-empty, positive and increasing");
        }
        let mu = &self.statphase.mu_list;
        if mu.len() < 2 || mu[mu.len() - 1] < 10.0 * mu[0] * (1.0 - 1e-12) {
            return bad("statphase.mu_list", "must span at least one decade");
        }
        if !(pos(self.statphase.chi_r1) && self.statphase.chi_r2 > self.statphase.chi_r1) {
            return bad("statphase.chi_r1", "must be positive and below statphase.chi_r2");
        }
        if !(self.statphase.k_cut >= self.statphase.chi_r2) {
            return bad("statphase.k_cut", "must be at least statphase.chi_r2");
        }
        if self.continuity.points == 0 {
            return bad("continuity.points", "must be positive");
        }
        if !pos(self.continuity.h) {
            return bad("continuity.h", "must be positive");
        }
        if !pos(self.tol.lse) {
            return bad("tol.lse", "must be positive");
        }
        if self.tol.max_iter == 0 {
            return bad("tol.max_iter", "must be positive");
        }
        if self.threads == 0 {
            return bad("run.threads", "must be positive");
        }
        Ok(())
    }
}

fn parse_f64(v: &str) -> Result<f64, String> {
    v.parse::<f64>().map_err(|_| format!("expected a number, got '{v}'"))
}

fn parse_usize(v: &str) -> Result<usize, String> {
    v.parse::<usize>().map_err(|_| format!("expected a non-negative integer, got '{v}'"))
}

fn parse_list(v: &str) -> Result<Vec<f64>, String> {
    v.split_whitespace().map(parse_f64).collect()
}

fn parse_array<const N: usize>(v: &str) -> Result<[f64; N], String> {
    let list = parse_list(v)?;
    list.try_into()
        .map_err(|l: Vec<f64>| format!("expected {N} numbers, got {}", l.len()))
}

fn assign(c: &mut ScenarioConfig, key: &str, v: &str) -> Result<(), String> {
    match key {
        "scenario" | "scenario.name" => c.scenario = v.parse()?,
        "packet.k0" => c.packet.k0 = parse_array(v)?,
        "packet.sigma" => c.packet.sigma = parse_f64(v)?,
        "packet.m" => c.packet.m = parse_f64(v)?,
        "packet.spin_mix" => c.packet.spin_mix = parse_array(v)?,
        "grid.k_max" => c.grid.k_max = parse_f64(v)?,
        "grid.lmax" => c.grid.lmax = parse_usize(v)?,
        "cone.axis" => c.cone.axis = parse_array(v)?,
        "cone.half_angle" => c.cone.half_angle = parse_f64(v)?,
        "detector.r_list" => c.detector.r_list = parse_list(v)?,
        "detector.full_sphere_radius" => c.detector.full_sphere_radius = parse_f64(v)?,
        "detector.lambda_list" => c.detector.lambda_list = parse_list(v)?,
        "detector.n_theta" => c.detector.n_theta = parse_usize(v)?,
        "detector.n_phi" => c.detector.n_phi = parse_usize(v)?,
        "potential.coupling" => c.potential.coupling = parse_f64(v)?,
        "potential.width" => c.potential.width = parse_f64(v)?,
        "potential.half_width" => c.potential.half_width = parse_f64(v)?,
        "potential.n" => c.potential.n = parse_usize(v)?,
        "potential.n_radii" => c.potential.n_radii = parse_usize(v)?,
        "cones.k" => c.cones.k = parse_array(v)?,
        "cones.lambda_list" => c.cones.lambda_list = parse_list(v)?,
        "statphase.y" => c.statphase.y = parse_array(v)?,
        "statphase.y_far" => c.statphase.y_far = parse_array(v)?,
        "statphase.mu_list" => c.statphase.mu_list = parse_list(v)?,
        "statphase.chi_r1" => c.statphase.chi_r1 = parse_f64(v)?,
        "statphase.chi_r2" => c.statphase.chi_r2 = parse_f64(v)?,
        "statphase.k_cut" => c.statphase.k_cut = parse_f64(v)?,
        "continuity.points" => c.continuity.points = parse_usize(v)?,
        "continuity.h" => c.continuity.h = parse_f64(v)?,
        "continuity.seed" => c.continuity.seed = v.parse().map_err(|_| format!("expected an integer seed, got '{v}'"))?,
        "tol.lse" => c.tol.lse = parse_f64(v)?,
        "tol.max_iter" => c.tol.max_iter = parse_usize(v)?,
        "run.threads" => c.threads = parse_usize(v)?,
        "run.out_dir" => c.out_dir = Some(PathBuf::from(v)),
        _ => return Err(format!("unknown key '{key}'")),
    }
    Ok(())
}

/// Parses and validates a configuration; unset keys keep their defaults.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut c = ScenarioConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| ConfigError::Parse { line: i + 1, msg };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err("expected 'section.key = value'".into()))?;
        let (key, value) = (key.trim(), value.trim());
        if value.is_empty() {
            return Err(err(format!("missing value for '{key}'")));
        }
        assign(&mut c, key, value).map_err(err)?;
    }
    c.validate()?;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_gives_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c, ScenarioConfig::default());
        assert_eq!(c.scenario, Scenario::FreeFas);
    }

    #[test]
    fn vector_values() {
        let c = parse_config("packet.k0 = 2 0 0\n").unwrap();
        assert_eq!(c.packet.k0, [2.0, 0.0, 0.0]);
        let c = parse_config("  # comment\ncones.k = 1.5 0.5 0 # trailing\n").unwrap();
        assert_eq!(c.cones.k, [1.5, 0.5, 0.0]);
    }

    #[test]
    fn negative_half_angle_is_a_validation_error() {
        match parse_config("cone.half_angle = -1") {
            Err(ConfigError::Validation { key, .. }) => assert_eq!(key, "cone.half_angle"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_key_reports_line() {
        let e = parse_config("packet.m = 1\n\npacket.mass = 2\n").unwrap_err();
        assert_eq!(
            e,
            ConfigError::Parse {
                line: 3,
                msg: "unknown key 'packet.mass'".into()
            }
        );
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(parse_config("packet.k0 2 0 0"), Err(ConfigError::Parse { line: 1, .. })));
        assert!(matches!(parse_config("packet.k0 = 2 0"), Err(ConfigError::Parse { line: 1, .. })));
        assert!(matches!(parse_config("x\npacket.sigma = abc"), Err(ConfigError::Parse { line: 1, .. })));
        assert!(matches!(parse_config("packet.sigma = abc"), Err(ConfigError::Parse { line: 1, .. })));
        assert!(matches!(parse_config("scenario = nope"), Err(ConfigError::Parse { line: 1, .. })));
    }

    #[test]
    fn lists_must_increase() {
        let e = parse_config("detector.r_list = 60 30").unwrap_err();
        assert!(matches!(e, ConfigError::Validation { key: "detector.r_list", .. }));
        let e = parse_config("statphase.mu_list = 25 50").unwrap_err();
        assert!(e.to_string().contains("decade"));
    }

    #[test]
    fn defaults_round_trip_through_text() {
        let mut c = ScenarioConfig::default();
        c.scenario = Scenario::PotentialFas;
        c.potential.coupling = 10.0;
        c.out_dir = Some("out/x".into());
        assert_eq!(parse_config(&c.to_text()).unwrap(), c);
    }
}
