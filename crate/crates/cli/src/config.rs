//! Run configuration: a JSON document with unit-tagged quantities.
//!
//! Lengths are in λ and rates in γ_L. A quantity may be a bare number or a
//! string carrying its unit, e.g. `"0.1 lambda"` or `"0.01 gamma_L"`.

use std::fmt;
use std::marker::PhantomData;

use anyhow::Result;
use array_emitters_core::two_impurity::DetuningRule;
use array_emitters_core::{Configuration, Handedness, ImpuritySpec, ImpurityTemplate, LatticeConfig};
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    Band,
    ImpurityMap,
    TwoImpurityMap,
    DistanceScan,
    SpacingScan,
    ReachScan,
    Dynamics,
    ToyCheck,
}

impl Study {
    pub fn as_str(self) -> &'static str {
        match self {
            Study::Band => "band",
            Study::ImpurityMap => "impurity-map",
            Study::TwoImpurityMap => "two-impurity-map",
            Study::DistanceScan => "distance-scan",
            Study::SpacingScan => "spacing-scan",
            Study::ReachScan => "reach-scan",
            Study::Dynamics => "dynamics",
            Study::ToyCheck => "toy-check",
        }
    }
}

/// Invalid configuration; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

pub trait Unit {
    const NAME: &'static str;
    const ALIASES: &'static [&'static str];
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lambda;
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaL;
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InverseGammaL;

impl Unit for Lambda {
    const NAME: &'static str = "lambda";
    const ALIASES: &'static [&'static str] = &["lambda", "λ"];
}

impl Unit for GammaL {
    const NAME: &'static str = "gamma_L";
    const ALIASES: &'static [&'static str] = &["gamma_L", "γ_L"];
}

impl Unit for InverseGammaL {
    const NAME: &'static str = "1/gamma_L";
    const ALIASES: &'static [&'static str] = &["1/gamma_L", "1/γ_L"];
}

const ALL_UNITS: &[&str] = &["lambda", "λ", "gamma_L", "γ_L", "1/gamma_L", "1/γ_L"];

/// A number in the unit `U`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quantity<U>(pub f64, PhantomData<U>);

impl<U> Quantity<U> {
    pub const fn new(v: f64) -> Self {
        Self(v, PhantomData)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

pub type Length = Quantity<Lambda>;
pub type Rate = Quantity<GammaL>;
pub type Time = Quantity<InverseGammaL>;

impl<U> Serialize for Quantity<U> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

fn parse_quantity<U: Unit>(text: &str) -> std::result::Result<f64, String> {
    let text = text.trim();
    let split = text.find(|c: char| c.is_whitespace()).unwrap_or(text.len());
    let (num, unit) = text.split_at(split);
    let unit = unit.trim();
    let value: f64 = num.parse().map_err(|_| format!("cannot read a number from {text:?}"))?;
    if unit.is_empty() || U::ALIASES.contains(&unit) {
        Ok(value)
    } else if ALL_UNITS.contains(&unit) {
        Err(format!("unit-suffix mismatch: expected {}, found {unit}", U::NAME))
    } else {
        Err(format!("unknown unit {unit:?}, expected {}", U::NAME))
    }
}

impl<'de, U: Unit> Deserialize<'de> for Quantity<U> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V<U>(PhantomData<U>);
        impl<U: Unit> Visitor<'_> for V<U> {
            type Value = Quantity<U>;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "a number or a string like \"1.5 {}\"", U::NAME)
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Self::Value, E> {
                Ok(Quantity::new(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Self::Value, E> {
                Ok(Quantity::new(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Self::Value, E> {
                Ok(Quantity::new(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Self::Value, E> {
                parse_quantity::<U>(v).map(Quantity::new).map_err(E::custom)
            }
        }
        d.deserialize_any(V(PhantomData))
    }
}

/// Either an explicit list or `count` evenly spaced values from `start` to `stop`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, bound(serialize = "", deserialize = "U: Unit"))]
pub enum Grid<U> {
    List(Vec<Quantity<U>>),
    Range { start: Quantity<U>, stop: Quantity<U>, count: usize },
}

impl<U> Grid<U> {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::List(v) => v.iter().map(|q| q.0).collect(),
            Grid::Range { start, stop, count } => match count {
                0 => Vec::new(),
                1 => vec![start.0],
                n => (0..*n).map(|i| start.0 + (stop.0 - start.0) * i as f64 / (*n - 1) as f64).collect(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    #[serde(default = "default_spacing")]
    pub spacing: Length,
    /// Sites per side of a square array; overridden by `nx`/`ny`.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub nx: Option<usize>,
    #[serde(default)]
    pub ny: Option<usize>,
    #[serde(default = "default_handedness")]
    pub handedness: Handedness,
}

fn default_spacing() -> Length {
    Length::new(0.2)
}

fn default_handedness() -> Handedness {
    Handedness::Right
}

pub const DEFAULT_N: usize = 10;

impl Default for LatticeSection {
    fn default() -> Self {
        Self { spacing: default_spacing(), n: None, nx: None, ny: None, handedness: default_handedness() }
    }
}

impl LatticeSection {
    pub fn dims(&self) -> (usize, usize) {
        let n = self.n.unwrap_or(DEFAULT_N);
        (self.nx.unwrap_or(n), self.ny.unwrap_or(n))
    }

    pub fn config(&self) -> Result<LatticeConfig> {
        let (nx, ny) = self.dims();
        LatticeConfig::new(self.spacing.0, nx, ny, self.handedness).map_err(|e| invalid(format!("lattice: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpuritySection {
    #[serde(default = "default_gamma")]
    pub gamma: Rate,
    #[serde(default = "default_configuration")]
    pub configuration: Configuration,
    /// Position inside the plaquette as a fraction of the spacing; center if absent.
    #[serde(default)]
    pub offset_fraction: Option<[f64; 2]>,
}

fn default_gamma() -> Rate {
    Rate::new(array_emitters_core::geometry::DEFAULT_GAMMA_I)
}

fn default_configuration() -> Configuration {
    Configuration::Identical
}

impl Default for ImpuritySection {
    fn default() -> Self {
        Self { gamma: default_gamma(), configuration: default_configuration(), offset_fraction: None }
    }
}

impl ImpuritySection {
    pub fn template(&self) -> ImpurityTemplate {
        ImpurityTemplate { gamma: self.gamma.0, configuration: self.configuration, offset_fraction: self.offset_fraction }
    }
}

/// An impurity at a fixed plaquette, used by the dynamics study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpurityEntry {
    pub plaquette: [usize; 2],
    #[serde(default)]
    pub offset: Option<[Length; 2]>,
    #[serde(default = "default_gamma")]
    pub gamma: Rate,
    #[serde(default = "default_configuration")]
    pub configuration: Configuration,
}

impl ImpurityEntry {
    pub fn spec(&self) -> ImpuritySpec {
        let s = ImpuritySpec::centered((self.plaquette[0], self.plaquette[1]), self.gamma.0, self.configuration);
        match self.offset {
            Some([x, y]) => s.with_offset(x.0, y.0),
            None => s,
        }
    }
}

/// A fixed detuning or a rule evaluated per spacing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DetuningSection {
    Value(Rate),
    Rule(DetuningRule),
}

impl DetuningSection {
    pub fn rule(self) -> DetuningRule {
        match self {
            DetuningSection::Value(v) => DetuningRule::Fixed { value: v.0 },
            DetuningSection::Rule(r) => r,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    /// Lattice spacings.
    #[serde(default)]
    pub a: Option<Grid<Lambda>>,
    /// Lattice-impurity detunings.
    #[serde(default)]
    pub delta: Option<Grid<GammaL>>,
    /// Impurity separations in plaquettes.
    #[serde(default)]
    pub m: Option<Vec<usize>>,
    /// Array sizes (sites per side) for convergence maps.
    #[serde(default)]
    pub n: Option<Vec<usize>>,
    /// Brillouin-zone points per axis.
    #[serde(default)]
    pub k: Option<usize>,
    /// Evolution times.
    #[serde(default)]
    pub t: Option<Grid<InverseGammaL>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    #[serde(default = "default_omega_l")]
    pub omega_l: Rate,
    /// Direct impurity drive; `Ω_L √(γ_I/γ_L)` for a plane wave if absent.
    #[serde(default)]
    pub omega_i: Option<Rate>,
}

fn default_omega_l() -> Rate {
    Rate::new(0.01)
}

impl Default for DriveSection {
    fn default() -> Self {
        Self { omega_l: default_omega_l(), omega_i: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub study: Option<Study>,
    #[serde(default)]
    pub lattice: LatticeSection,
    #[serde(default)]
    pub impurity: ImpuritySection,
    #[serde(default)]
    pub impurities: Vec<ImpurityEntry>,
    /// Pair separation in plaquettes for two-impurity studies.
    #[serde(default = "default_separation")]
    pub separation: usize,
    #[serde(default)]
    pub detuning: Option<DetuningSection>,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub drive: DriveSection,
    /// Real-space patch (sites per side) for lattice sums.
    #[serde(default = "default_patch")]
    pub patch: usize,
    #[serde(default = "default_threshold")]
    pub reach_threshold: f64,
    /// Write every `output_stride`-th time sample of the dynamics.
    #[serde(default = "default_stride")]
    pub output_stride: usize,
    /// Recorded for reproducibility; every study is deterministic.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing)]
    pub threads: Option<usize>,
}

fn default_separation() -> usize {
    1
}

fn default_patch() -> usize {
    array_emitters_core::band::DEFAULT_PATCH
}

fn default_threshold() -> f64 {
    1.0
}

fn default_stride() -> usize {
    1
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        invalid(format!("config field `{path}`: {}", e.inner()))
    })
}

impl RunConfig {
    /// The study this config runs, reconciling the command line with the file.
    pub fn resolve_study(&self, cli: Option<Study>) -> Result<Study> {
        match (cli, self.study) {
            (Some(a), Some(b)) if a != b => {
                Err(invalid(format!("command line asks for {} but the config is for {}", a.as_str(), b.as_str())))
            }
            (Some(a), _) | (None, Some(a)) => Ok(a),
            (None, None) => Err(invalid("no study given")),
        }
    }

    pub fn detuning_rule(&self) -> DetuningRule {
        self.detuning.map(DetuningSection::rule).unwrap_or_else(|| DetuningRule::default_for(self.impurity.configuration))
    }

    pub fn a_values(&self, default: &[f64]) -> Vec<f64> {
        self.grids.a.as_ref().map(Grid::values).unwrap_or_else(|| default.to_vec())
    }

    pub fn validate(&self, study: Study) -> Result<()> {
        let lattice = self.lattice.config()?;
        let check_grid = |name: &str, v: Option<Vec<f64>>, positive: bool| -> Result<()> {
            if let Some(v) = v {
                if v.is_empty() {
                    return Err(invalid(format!("grids.{name} is empty")));
                }
                if v.iter().any(|x| !x.is_finite() || (positive && *x <= 0.0)) {
                    return Err(invalid(format!("grids.{name} has non-finite or non-positive values")));
                }
            }
            Ok(())
        };
        check_grid("a", self.grids.a.as_ref().map(Grid::values), true)?;
        check_grid("delta", self.grids.delta.as_ref().map(Grid::values), false)?;
        if let Some(t) = self.grids.t.as_ref().map(Grid::values) {
            if t.is_empty() || t.iter().any(|x| !x.is_finite() || *x < 0.0) || t.windows(2).any(|w| w[1] < w[0]) {
                return Err(invalid("grids.t must be non-empty, non-negative and increasing"));
            }
        }
        if matches!(&self.grids.m, Some(m) if m.is_empty() || m.contains(&0)) {
            return Err(invalid("grids.m must be non-empty with positive separations"));
        }
        if matches!(&self.grids.n, Some(n) if n.is_empty() || n.iter().any(|&k| k < 2)) {
            return Err(invalid("grids.n must be non-empty with sizes of at least 2"));
        }
        if matches!(self.grids.k, Some(k) if k < 2) {
            return Err(invalid("grids.k must be at least 2"));
        }
        if !(self.impurity.gamma.0 > 0.0) {
            return Err(invalid("impurity.gamma must be positive"));
        }
        if let Some([fx, fy]) = self.impurity.offset_fraction {
            if !(fx > 0.0 && fx < 1.0 && fy > 0.0 && fy < 1.0) {
                return Err(invalid("impurity.offset_fraction must lie strictly inside (0, 1)"));
            }
        }
        if self.patch < 2 {
            return Err(invalid("patch must be at least 2"));
        }
        if self.output_stride == 0 {
            return Err(invalid("output_stride must be at least 1"));
        }
        if self.separation == 0 {
            return Err(invalid("separation must be at least 1"));
        }
        if matches!(self.threads, Some(0)) {
            return Err(invalid("threads must be at least 1"));
        }
        if study == Study::Dynamics && !self.impurities.is_empty() {
            if self.impurities.len() != 2 {
                return Err(invalid("dynamics takes exactly two explicit impurities"));
            }
            let specs: Vec<ImpuritySpec> = self.impurities.iter().map(ImpurityEntry::spec).collect();
            array_emitters_core::build_geometry(lattice, &specs).map_err(|e| invalid(format!("impurities: {e}")))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(r#"{"study": "toy-check"}"#).unwrap();
        assert_eq!(c.study, Some(Study::ToyCheck));
        assert_eq!(c.impurity.gamma.0, 0.01);
        assert_eq!(c.lattice.dims(), (10, 10));
        assert_eq!(c.patch, 40);
        c.validate(Study::ToyCheck).unwrap();
    }

    #[test]
    fn unit_suffixes() {
        let c = parse_config(r#"{"lattice": {"spacing": "0.1 lambda", "n": 10}, "impurity": {"gamma": "0.02 gamma_L"}}"#)
            .unwrap();
        assert_eq!(c.lattice.spacing.0, 0.1);
        assert_eq!(c.impurity.gamma.0, 0.02);
        let e = parse_config(r#"{"lattice": {"spacing": "0.1 gamma_L"}}"#).unwrap_err().to_string();
        assert!(e.contains("lattice.spacing") && e.contains("unit-suffix mismatch"), "{e}");
    }

    #[test]
    fn unknown_field_is_named() {
        let e = parse_config(r#"{"lattice": {"spacing": 0.1, "colour": 3}}"#).unwrap_err();
        assert!(e.downcast_ref::<ConfigError>().is_some());
        assert!(e.to_string().contains("colour"), "{e}");
    }

    #[test]
    fn grids_and_detuning_forms() {
        let c = parse_config(
            r#"{"grids": {"a": {"start": 0.1, "stop": 0.3, "count": 3}, "delta": [1, "2 gamma_L"]},
                "detuning": {"rule": "band-edge", "factor": 1.05}}"#,
        )
        .unwrap();
        assert_eq!(c.grids.a.unwrap().values(), vec![0.1, 0.2, 0.3]);
        assert_eq!(c.grids.delta.unwrap().values(), vec![1.0, 2.0]);
        assert_eq!(c.detuning.unwrap().rule(), DetuningRule::BandEdge { factor: 1.05 });
        let c = parse_config(r#"{"detuning": 2.5}"#).unwrap();
        assert_eq!(c.detuning_rule(), DetuningRule::Fixed { value: 2.5 });
    }

    #[test]
    fn dynamics_pair_config() {
        let c = parse_config(
            r#"{"study": "dynamics", "lattice": {"spacing": 0.1, "n": 10},
                "impurity": {"configuration": "orthogonal"}, "separation": 4}"#,
        )
        .unwrap();
        assert_eq!(c.impurity.configuration, Configuration::Orthogonal);
        assert_eq!(c.separation, 4);
        assert_eq!(c.detuning_rule(), DetuningRule::BandEdge { factor: 1.05 });
        c.validate(Study::Dynamics).unwrap();
    }

    #[test]
    fn validation_errors() {
        let c = parse_config(r#"{"grids": {"delta": []}}"#).unwrap();
        assert!(c.validate(Study::ImpurityMap).is_err());
        let c = parse_config(r#"{"lattice": {"spacing": -1}}"#).unwrap();
        assert!(c.validate(Study::Band).is_err());
        let c = parse_config(r#"{"study": "band"}"#).unwrap();
        assert!(c.resolve_study(Some(Study::Dynamics)).is_err());
    }
}
