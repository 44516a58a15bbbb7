//! Flat `key = value` configuration files.
//!
//! Lines are `key = value`; keys may carry dotted section prefixes
//! (`measure.kind`, `grid.t`). `#` starts a comment line. Lists are
//! comma-separated, and a number may be written `exp(x)` for `e^x`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fragstorm_core::asymptotics::LConvention;
use fragstorm_core::fragsim::{CmjMode, DEFAULT_MAX_EVENTS};
use fragstorm_core::{DislocationMeasure, MassPartition, SlowlyVaryingHandle};

use crate::error::ConfigError;

type Result<T> = std::result::Result<T, ConfigError>;

/// Every key the harness understands.
pub const KEYS: &[&str] = &[
    "experiment",
    "seed",
    "replicas",
    "alpha",
    "t_end",
    "measure.kind",
    "measure.rate",
    "measure.k",
    "measure.atoms",
    "measure.theta",
    "measure.ell",
    "measure.ell_c",
    "measure.ell_p",
    "grid.t",
    "grid.h",
    "grid.w",
    "grid.q",
    "grid.delta",
    "grid.theta",
    "grid.alpha",
    "grid.epsilon",
    "sim.jump_floor",
    "sim.floor_h",
    "sim.floor_margin",
    "sim.max_events",
    "spine.jp_c",
    "cmj.generations",
    "cmj.height_cap",
    "cmj.truncation_m",
    "cmj.a",
    "cmj.mode",
    "cmj.max_children",
    "variational.n_trunc",
    "asymptotics.convention",
    "output.path",
    "output.format",
    "dump.trajectory",
    "dump.cmj",
    "dump.path",
];

/// Parsed but untyped configuration; keys are kept sorted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: n + 1,
                reason: "expected `key = value`".into(),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || !k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
                return Err(ConfigError::Syntax {
                    line: n + 1,
                    reason: format!("bad key `{k}`"),
                });
            }
            if !KEYS.contains(&k) {
                return Err(ConfigError::UnknownKey(k.into()));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(ConfigError::Syntax {
                    line: n + 1,
                    reason: format!("duplicate key `{k}`"),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Overrides a key, as the command line does.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| ConfigError::field(key, e.to_string())))
            .transpose()
    }

    fn real(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|v| parse_real(key, v)).transpose()
    }

    fn reals(&self, key: &str) -> Result<Vec<f64>> {
        match self.get(key) {
            None => Ok(Vec::new()),
            Some(v) => v.split(',').map(|x| parse_real(key, x.trim())).collect(),
        }
    }
}

fn parse_real(key: &str, s: &str) -> Result<f64> {
    let x = match s.strip_prefix("exp(").and_then(|r| r.strip_suffix(')')) {
        Some(inner) => inner.trim().parse::<f64>().map(f64::exp),
        None => s.parse::<f64>(),
    }
    .map_err(|_| ConfigError::field(key, format!("`{s}` is not a number")))?;
    if x.is_nan() {
        return Err(ConfigError::field(key, "NaN is not allowed"));
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Experiment {
    Simulate,
    Spine,
    VerifyPhi,
    VerifyTails,
    Variational,
    Asymptotics,
    Mto,
    Antichain,
    Report,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Spine => "spine",
            Self::VerifyPhi => "verify-phi",
            Self::VerifyTails => "verify-tails",
            Self::Variational => "variational",
            Self::Asymptotics => "asymptotics",
            Self::Mto => "mto",
            Self::Antichain => "antichain",
            Self::Report => "report",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        <Self as clap::ValueEnum>::value_variants()
            .iter()
            .copied()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(format!("unknown format `{s}` (csv or json)")),
        }
    }
}

/// Grid parameters; paired grids (`t` with `h`, `t` with `w`) must have equal length.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grid {
    pub t: Vec<f64>,
    pub h: Vec<f64>,
    pub w: Vec<f64>,
    pub q: Vec<f64>,
    pub delta: Vec<f64>,
    pub theta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub epsilon: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmjConfig {
    pub generations: u32,
    pub height_cap: Option<f64>,
    pub truncation_m: Option<f64>,
    pub a: f64,
    pub mode: CmjMode,
    pub max_children: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dumps {
    pub trajectory: Option<PathBuf>,
    pub cmj: Option<PathBuf>,
    pub path: Option<PathBuf>,
}

/// A validated experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub measure: DislocationMeasure,
    pub alpha: f64,
    pub t_end: Option<f64>,
    pub grid: Grid,
    pub replicas: u64,
    pub seed: u64,
    pub jump_floor: f64,
    pub floor_h: Option<f64>,
    pub floor_margin: f64,
    pub max_events: u64,
    pub jp_c: f64,
    pub cmj: CmjConfig,
    pub n_trunc: usize,
    pub convention: LConvention,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub dumps: Dumps,
    /// The resolved key/value pairs, echoed into every result table.
    pub raw: RawConfig,
}

impl ExperimentConfig {
    /// Validates `raw` for `experiment`.
    pub fn from_raw(experiment: Experiment, raw: RawConfig) -> Result<Self> {
        if let Some(e) = raw.get("experiment") {
            let named: Experiment = e.parse().map_err(|r: String| ConfigError::field("experiment", r))?;
            if named != experiment {
                return Err(ConfigError::field(
                    "experiment",
                    format!("config is for `{}`, not `{}`", named.name(), experiment.name()),
                ));
            }
        }
        let replicas = raw.parsed::<u64>("replicas")?.unwrap_or(1);
        if replicas < 1 {
            return Err(ConfigError::field("replicas", "must be at least 1"));
        }
        let alpha = raw.real("alpha")?.unwrap_or(1.0);
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(ConfigError::field("alpha", "must be positive"));
        }
        let t_end = raw.real("t_end")?;
        if t_end.is_some_and(|t| !(t > 0.0 && t.is_finite())) {
            return Err(ConfigError::field("t_end", "must be positive and finite"));
        }
        let grid = Grid {
            t: raw.reals("grid.t")?,
            h: raw.reals("grid.h")?,
            w: raw.reals("grid.w")?,
            q: raw.reals("grid.q")?,
            delta: raw.reals("grid.delta")?,
            theta: raw.reals("grid.theta")?,
            alpha: raw.reals("grid.alpha")?,
            epsilon: raw.reals("grid.epsilon")?,
        };
        let jump_floor = raw.real("sim.jump_floor")?.unwrap_or(0.0);
        if !(0.0..=0.5).contains(&jump_floor) {
            return Err(ConfigError::field("sim.jump_floor", "must lie in [0, 1/2]"));
        }
        let floor_h = raw.real("sim.floor_h")?;
        if floor_h.is_some_and(|h| !(h > 0.0)) {
            return Err(ConfigError::field("sim.floor_h", "must be positive"));
        }
        let floor_margin = raw.real("sim.floor_margin")?.unwrap_or(2.5);
        if !(floor_margin > core::f64::consts::LN_2) {
            return Err(ConfigError::field("sim.floor_margin", "must exceed log 2"));
        }
        let cmj = CmjConfig {
            generations: raw.parsed("cmj.generations")?.unwrap_or(1_000_000),
            height_cap: raw.real("cmj.height_cap")?,
            truncation_m: raw.real("cmj.truncation_m")?,
            a: raw.real("cmj.a")?.unwrap_or(0.5),
            mode: match raw.get("cmj.mode") {
                None | Some("observation") => CmjMode::Observation,
                Some("event") => CmjMode::Event,
                Some(m) => return Err(ConfigError::field("cmj.mode", format!("unknown mode `{m}`"))),
            },
            max_children: raw.parsed("cmj.max_children")?.unwrap_or(1_000_000),
        };
        let convention = match raw.get("asymptotics.convention") {
            None | Some("direct") => LConvention::Direct,
            Some("reciprocal") => LConvention::Reciprocal,
            Some(c) => {
                return Err(ConfigError::field(
                    "asymptotics.convention",
                    format!("unknown convention `{c}`"),
                ))
            }
        };
        let format = match raw.get("output.format") {
            None => Format::Csv,
            Some(f) => f.parse().map_err(|r: String| ConfigError::field("output.format", r))?,
        };
        let path = |k: &str| raw.get(k).map(PathBuf::from);
        Ok(Self {
            experiment,
            measure: measure_from(&raw)?,
            alpha,
            t_end,
            grid,
            replicas,
            seed: raw.parsed("seed")?.unwrap_or(0),
            jump_floor,
            floor_h,
            floor_margin,
            max_events: raw.parsed("sim.max_events")?.unwrap_or(DEFAULT_MAX_EVENTS),
            jp_c: raw.real("spine.jp_c")?.unwrap_or(1.0),
            cmj,
            n_trunc: raw.parsed("variational.n_trunc")?.unwrap_or(500),
            convention,
            output: path("output.path"),
            format,
            dumps: Dumps {
                trajectory: path("dump.trajectory"),
                cmj: path("dump.cmj"),
                path: path("dump.path"),
            },
            raw,
        })
    }

    /// Reads and validates a config file.
    pub fn load(experiment: Experiment, path: &Path) -> Result<Self> {
        Self::from_raw(experiment, RawConfig::load(path)?)
    }

    /// Fails unless the measure can be simulated with the configured jump floor.
    pub fn require_simulable(&self) -> Result<()> {
        if !self.measure.is_finite() && self.jump_floor <= 0.0 {
            return Err(ConfigError::field(
                "sim.jump_floor",
                "an infinite-activity measure needs a positive jump floor",
            ));
        }
        Ok(())
    }

    /// `grid.t` zipped with another grid of the same length.
    pub fn paired(&self, other: &'static str) -> Result<Vec<(f64, f64)>> {
        let ys = match other {
            "grid.h" => &self.grid.h,
            "grid.w" => &self.grid.w,
            _ => unreachable!("no such paired grid"),
        };
        if self.grid.t.is_empty() || self.grid.t.len() != ys.len() {
            return Err(ConfigError::field(
                other,
                "needs the same nonzero number of entries as grid.t",
            ));
        }
        Ok(self.grid.t.iter().copied().zip(ys.iter().copied()).collect())
    }
}

fn measure_from(raw: &RawConfig) -> Result<DislocationMeasure> {
    let kind = raw.get("measure.kind").unwrap_or("uniform_binary");
    let rate = raw.real("measure.rate")?.unwrap_or(1.0);
    let wrap = |field: &'static str| move |e: fragstorm_core::Error| ConfigError::field(field, e.to_string());
    match kind {
        "uniform_binary" => DislocationMeasure::uniform_binary(rate).map_err(wrap("measure.rate")),
        "k_split" => {
            let k = raw
                .parsed::<usize>("measure.k")?
                .ok_or_else(|| ConfigError::field("measure.k", "required for k_split"))?;
            DislocationMeasure::k_split(k, rate).map_err(wrap("measure.k"))
        }
        "finite_discrete" => {
            let spec = raw
                .get("measure.atoms")
                .ok_or_else(|| ConfigError::field("measure.atoms", "required for finite_discrete"))?;
            let mut atoms = Vec::new();
            for atom in spec.split(';').map(str::trim).filter(|a| !a.is_empty()) {
                let (masses, r) = atom
                    .split_once('@')
                    .ok_or_else(|| ConfigError::field("measure.atoms", "each atom is `s1 s2 ... @ rate`"))?;
                let masses = masses
                    .split_whitespace()
                    .map(|x| parse_real("measure.atoms", x))
                    .collect::<Result<Vec<_>>>()?;
                let p = MassPartition::new(masses).map_err(wrap("measure.atoms"))?;
                atoms.push((p, parse_real("measure.atoms", r.trim())?));
            }
            DislocationMeasure::finite_discrete(atoms).map_err(wrap("measure.atoms"))
        }
        "crumble_binary" => {
            let theta = raw
                .real("measure.theta")?
                .ok_or_else(|| ConfigError::field("measure.theta", "required for crumble_binary"))?;
            let c = raw.real("measure.ell_c")?.unwrap_or(1.0);
            let ell = match raw.get("measure.ell").unwrap_or("constant") {
                "constant" => SlowlyVaryingHandle::constant(c),
                "log_power" => SlowlyVaryingHandle::log_power(c, raw.real("measure.ell_p")?.unwrap_or(1.0)),
                other => return Err(ConfigError::field("measure.ell", format!("unknown family `{other}`"))),
            }
            .map_err(wrap("measure.ell_c"))?;
            DislocationMeasure::crumble_binary(theta, ell).map_err(wrap("measure.theta"))
        }
        other => Err(ConfigError::field("measure.kind", format!("unknown measure `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fragstorm_core::partitions::MeasureKind;

    #[test]
    fn parses_sections_comments_and_lists() {
        let raw = RawConfig::parse("# demo\nalpha = 2\n\ngrid.t = 1e3, exp(10)\nmeasure.kind = k_split\nmeasure.k = 3\n")
            .unwrap();
        let cfg = ExperimentConfig::from_raw(Experiment::Asymptotics, raw).unwrap();
        assert_eq!(cfg.alpha, 2.0);
        assert_eq!(cfg.grid.t, vec![1e3, 10f64.exp()]);
        assert!(cfg.measure.is_lattice());
        assert_eq!(cfg.replicas, 1);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(RawConfig::parse("alpha 2"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(RawConfig::parse("colour = red"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(RawConfig::parse("alpha = 1\nalpha = 2"), Err(ConfigError::Syntax { line: 2, .. })));
        let bad = |text: &str| ExperimentConfig::from_raw(Experiment::Simulate, RawConfig::parse(text).unwrap());
        assert!(bad("replicas = 0").is_err());
        assert!(bad("alpha = -1").is_err());
        assert!(bad("measure.kind = crumble_binary").is_err());
        assert!(bad("measure.kind = crumble_binary\nmeasure.theta = 1.5").is_err());
        assert!(bad("experiment = spine").is_err());
        assert!(bad("grid.t = 1, x").is_err());
    }

    #[test]
    fn finite_discrete_atoms() {
        let raw = RawConfig::parse("measure.kind = finite_discrete\nmeasure.atoms = 0.5 0.5 @ 1; 0.7 0.2 0.1 @ 0.5").unwrap();
        let cfg = ExperimentConfig::from_raw(Experiment::VerifyPhi, raw).unwrap();
        match cfg.measure.kind() {
            MeasureKind::FiniteDiscrete { atoms, total } => {
                assert_eq!(atoms.len(), 2);
                assert_eq!(*total, 1.5);
            }
            k => panic!("{k:?}"),
        }
    }
}
