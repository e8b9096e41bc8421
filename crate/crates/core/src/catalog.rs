//! Constituent taxonomy and the catalog of sampled configuration parameters.
//!
//! Every run of the simulator is governed by one [`ExperimentConfig`]: one
//! value per sampled parameter, in the fixed [`ConfigSpace`] order, plus the
//! seed that drives topology and event generation.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::sim::WorldConfig;

/// Task-based energy constituent. Every energy counter belongs to exactly one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constituent {
    Individual,
    Local,
    Global,
    Environment,
    Sink,
}

impl Constituent {
    pub const ALL: [Constituent; 5] = [
        Constituent::Individual,
        Constituent::Local,
        Constituent::Global,
        Constituent::Environment,
        Constituent::Sink,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Constituent::Individual => "individual",
            Constituent::Local => "local",
            Constituent::Global => "global",
            Constituent::Environment => "environment",
            Constituent::Sink => "sink",
        }
    }
}

impl fmt::Display for Constituent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Continuous,
    Integer,
}

/// The eight sampled parameters, in column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Param {
    TransmissionInterval,
    NumHops,
    SensorInterval,
    SenseRadius,
    NetDensity,
    TransmissionRadius,
    NumSinks,
    NumNeighbors,
}

impl Param {
    pub const ALL: [Param; 8] = [
        Param::TransmissionInterval,
        Param::NumHops,
        Param::SensorInterval,
        Param::SenseRadius,
        Param::NetDensity,
        Param::TransmissionRadius,
        Param::NumSinks,
        Param::NumNeighbors,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Param::TransmissionInterval => "transmission_interval",
            Param::NumHops => "num_hops",
            Param::SensorInterval => "sensor_interval",
            Param::SenseRadius => "sense_radius",
            Param::NetDensity => "net_density",
            Param::TransmissionRadius => "transmission_radius",
            Param::NumSinks => "num_sinks",
            Param::NumNeighbors => "num_neighbors",
        }
    }

    /// Short symbol, also used as the dataset column header.
    pub fn symbol(self) -> &'static str {
        match self {
            Param::TransmissionInterval => "g_Tx",
            Param::NumHops => "h_iD",
            Param::SensorInterval => "g_sense",
            Param::SenseRadius => "r_sense",
            Param::NetDensity => "net_dens",
            Param::TransmissionRadius => "r_Tx",
            Param::NumSinks => "snk",
            Param::NumNeighbors => "n",
        }
    }

    /// Looks a parameter up by either its name or its symbol.
    pub fn lookup(key: &str) -> Option<Param> {
        Param::ALL.into_iter().find(|p| p.name() == key || p.symbol() == key)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDescriptor {
    pub name: String,
    pub symbol: String,
    pub constituent: Constituent,
    pub kind: ParamKind,
    pub lower: f64,
    pub upper: f64,
    pub default: f64,
    pub sampled: bool,
}

impl ParameterDescriptor {
    fn new(param: Param, constituent: Constituent, kind: ParamKind, bounds: (f64, f64), default: f64) -> Self {
        ParameterDescriptor {
            name: param.name().to_string(),
            symbol: param.symbol().to_string(),
            constituent,
            kind,
            lower: bounds.0,
            upper: bounds.1,
            default,
            sampled: true,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("config has {got} values but the space has {expected} parameters")]
    Arity { expected: usize, got: usize },
    #[error("config space must list exactly the sampled parameters in order; position {position} holds `{found}`, expected `{expected}`")]
    Layout {
        position: usize,
        expected: &'static str,
        found: String,
    },
    #[error("descriptor `{name}` is inconsistent: {reason}")]
    Descriptor { name: String, reason: String },
    #[error("invalid configuration: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

/// One broken bound: the parameter and a human-readable form of the bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub parameter: String,
    pub bound: String,
    pub value: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {} violates {}", self.parameter, self.value, self.bound)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSpace {
    pub descriptors: Vec<ParameterDescriptor>,
    pub world_defaults: WorldConfig,
}

/// The built-in eight-parameter space.
pub fn default_space() -> ConfigSpace {
    use Constituent::*;
    use ParamKind::*;
    let descriptors = vec![
        ParameterDescriptor::new(Param::TransmissionInterval, Global, Continuous, (1.0, 15.0), 5.0),
        ParameterDescriptor::new(Param::NumHops, Global, Integer, (0.0, 8.0), 3.0),
        ParameterDescriptor::new(Param::SensorInterval, Individual, Continuous, (0.5, 5.0), 2.0),
        ParameterDescriptor::new(Param::SenseRadius, Individual, Continuous, (5.0, 30.0), 15.0),
        ParameterDescriptor::new(Param::NetDensity, Global, Integer, (20.0, 150.0), 60.0),
        ParameterDescriptor::new(Param::TransmissionRadius, Local, Continuous, (10.0, 60.0), 30.0),
        ParameterDescriptor::new(Param::NumSinks, Global, Integer, (1.0, 5.0), 2.0),
        ParameterDescriptor::new(Param::NumNeighbors, Local, Integer, (1.0, 10.0), 5.0),
    ];
    ConfigSpace {
        descriptors,
        world_defaults: WorldConfig::default(),
    }
}

impl ConfigSpace {
    /// Structural check: the fixed parameter order and per-descriptor consistency.
    pub fn check(&self) -> Result<(), ConfigError> {
        if self.descriptors.len() != Param::ALL.len() {
            return Err(ConfigError::Arity {
                expected: Param::ALL.len(),
                got: self.descriptors.len(),
            });
        }
        for (position, (d, p)) in self.descriptors.iter().zip(Param::ALL).enumerate() {
            if d.name != p.name() {
                return Err(ConfigError::Layout {
                    position,
                    expected: p.name(),
                    found: d.name.clone(),
                });
            }
            let bad = |reason: &str| {
                Err(ConfigError::Descriptor {
                    name: d.name.clone(),
                    reason: reason.to_string(),
                })
            };
            if !(d.lower.is_finite() && d.upper.is_finite() && d.default.is_finite()) {
                return bad("bounds must be finite");
            }
            if !(d.lower <= d.default && d.default <= d.upper) {
                return bad("requires lower <= default <= upper");
            }
            if d.kind == ParamKind::Integer
                && (d.lower.fract() != 0.0 || d.upper.fract() != 0.0 || d.default.fract() != 0.0)
            {
                return bad("integer parameter with fractional bound");
            }
        }
        Ok(())
    }

    pub fn descriptor(&self, param: Param) -> &ParameterDescriptor {
        &self.descriptors[param.index()]
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    /// Config with every parameter at its default.
    pub fn defaults(&self, seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            values: self.descriptors.iter().map(|d| d.default).collect(),
            seed,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config space serializes")
    }

    /// Hex SHA-256 of the canonical (compact) JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config space serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub values: Vec<f64>,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn get(&self, param: Param) -> f64 {
        self.values[param.index()]
    }

    pub fn set(&mut self, param: Param, value: f64) {
        self.values[param.index()] = value;
    }

    pub fn with(mut self, param: Param, value: f64) -> Self {
        self.set(param, value);
        self
    }

    /// Integer-kind parameters as counts. Only meaningful on a validated config.
    pub fn count(&self, param: Param) -> usize {
        self.get(param).round().max(0.0) as usize
    }
}

/// Stream id for configuration sampling; the simulator uses other streams of the same seed.
pub(crate) const SAMPLING_STREAM: u64 = 0;

fn draw(rng: &mut ChaCha8Rng, kind: ParamKind, lower: f64, upper: f64) -> f64 {
    match kind {
        ParamKind::Continuous if lower < upper => rng.random_range(lower..=upper),
        ParamKind::Continuous => lower,
        ParamKind::Integer => {
            let (lo, hi) = (lower as i64, upper as i64);
            rng.random_range(lo..=hi) as f64
        }
    }
}

/// Draws every sampled parameter uniformly from its range, then redraws
/// `h_iD` from the values allowed by the drawn network density.
pub fn sample_config(space: &ConfigSpace, seed: u64) -> ExperimentConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SAMPLING_STREAM);
    let mut values: Vec<f64> = space
        .descriptors
        .iter()
        .map(|d| draw(&mut rng, d.kind, d.lower, d.upper))
        .collect();

    let hops = space.descriptor(Param::NumHops);
    let dens = values[Param::NetDensity.index()];
    let max_hops = (dens - 2.0).min(hops.upper);
    if values[Param::NumHops.index()] > max_hops {
        values[Param::NumHops.index()] = draw(&mut rng, hops.kind, hops.lower, max_hops.max(hops.lower));
    }
    ExperimentConfig { values, seed }
}

fn hard_bounds(param: Param, v: f64) -> Option<&'static str> {
    let ok = match param {
        Param::TransmissionInterval => v > 0.0,
        Param::NumHops => v >= 0.0,
        Param::SensorInterval => v >= 0.0,
        Param::SenseRadius => v > 0.0,
        Param::NetDensity => v >= 2.0,
        Param::TransmissionRadius => v >= 0.0,
        Param::NumSinks => v > 0.0,
        Param::NumNeighbors => v >= 1.0,
    };
    if ok {
        return None;
    }
    Some(match param {
        Param::TransmissionInterval => "g_Tx > 0",
        Param::NumHops => "0 <= h_iD",
        Param::SensorInterval => "g_sense >= 0",
        Param::SenseRadius => "r_sense > 0",
        Param::NetDensity => "net_dens >= 2",
        Param::TransmissionRadius => "r_Tx >= 0",
        Param::NumSinks => "Snk > 0",
        Param::NumNeighbors => "n >= 1",
    })
}

/// Returns every broken bound; an empty list means the config is usable.
pub fn validate(config: &ExperimentConfig, space: &ConfigSpace) -> Result<Vec<Violation>, ConfigError> {
    if config.values.len() != space.descriptors.len() {
        return Err(ConfigError::Arity {
            expected: space.descriptors.len(),
            got: config.values.len(),
        });
    }
    let mut out = Vec::new();
    for ((d, &v), param) in space.descriptors.iter().zip(&config.values).zip(Param::ALL) {
        let mut push = |bound: String| {
            out.push(Violation {
                parameter: d.symbol.clone(),
                bound,
                value: v,
            })
        };
        if !v.is_finite() {
            push("finite value".into());
            continue;
        }
        if let Some(bound) = hard_bounds(param, v) {
            push(bound.into());
        }
        if v < d.lower || v > d.upper {
            push(format!("{} <= {} <= {}", d.lower, d.symbol, d.upper));
        }
        if d.kind == ParamKind::Integer && v.fract() != 0.0 {
            push(format!("{} integral", d.symbol));
        }
    }
    let hops = config.get(Param::NumHops);
    let dens = config.get(Param::NetDensity);
    if hops.is_finite() && dens.is_finite() && hops >= dens - 1.0 {
        out.push(Violation {
            parameter: Param::NumHops.symbol().into(),
            bound: "h_iD < net_dens - 1".into(),
            value: hops,
        });
    }
    Ok(out)
}

/// [`validate`] folded into a single `Result`.
pub fn ensure_valid(config: &ExperimentConfig, space: &ConfigSpace) -> Result<(), ConfigError> {
    let violations = validate(config, space)?;
    if violations.is_empty() {
        Ok(())
    } else {
        Err(ConfigError::Invalid(violations))
    }
}
