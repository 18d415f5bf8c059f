//! Tunable parameter spaces and the mapping between the optimizer's unit
//! cube and raw system parameter values.
//!
//! The optimizer works on normalized points in `[0,1]^n` ([`AlgoPoint`]);
//! each coordinate is mapped onto the raw units of one [`ParameterSpec`]
//! by [`ParameterSpace::map_to_system`]. Integer-like kinds (integer,
//! boolean, categorical) use a floor map so the tuned value is always a
//! valid discrete setting.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Errors from parameter-space construction and mapping.
#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("parameter space must contain at least one parameter")]
    EmptySpace,
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("parameter `{name}`: bounds must satisfy min < max (got {min} .. {max})")]
    InvalidBounds { name: String, min: f64, max: f64 },
    #[error("parameter `{name}`: default {default} outside [{min}, {max}]")]
    DefaultOutOfRange {
        name: String,
        default: f64,
        min: f64,
        max: f64,
    },
    #[error("parameter `{name}`: resolution {resolution} must be positive and at most max - min")]
    BadResolution { name: String, resolution: f64 },
    #[error("categorical parameter `{name}` needs at least 2 categories")]
    TooFewCategories { name: String },
    #[error("parameter `{name}`: unknown category `{category}`")]
    UnknownCategory { name: String, category: String },
    #[error("dimension mismatch: space has {expected} parameters, point has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coordinate {index} = {value} outside [0, 1]; project the point first")]
    CoordinateOutOfRange { index: usize, value: f64 },
    #[error("coordinate {index} is not finite")]
    NonFinite { index: usize },
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("parameter `{name}`: value {value} outside [{min}, {max}]")]
    ValueOutOfRange {
        name: String,
        value: f64,
        min: f64,
        max: f64,
    },
}

/// The kind of a tunable parameter.
///
/// Boolean and categorical parameters are handled as integer indices so
/// the same floor mapping applies to all discrete kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Real,
    Integer,
    Boolean,
    Categorical,
}

impl ParamKind {
    /// True for kinds mapped through the floor function.
    pub fn is_discrete(self) -> bool {
        !matches!(self, ParamKind::Real)
    }
}

/// Declarative description of one tunable knob: kind, raw bounds, default,
/// and the smallest meaningful change in raw units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    name: String,
    kind: ParamKind,
    min: f64,
    max: f64,
    default: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    categories: Vec<String>,
    resolution: f64,
}

impl ParameterSpec {
    /// A real-valued parameter. Resolution defaults to `(max - min) / 100`.
    pub fn real(name: &str, min: f64, max: f64, default: f64) -> Result<Self, SpaceError> {
        Self::validate_new(ParameterSpec {
            name: name.to_string(),
            kind: ParamKind::Real,
            min,
            max,
            default,
            categories: Vec::new(),
            resolution: (max - min) / 100.0,
        })
    }

    /// An integer-valued parameter with resolution 1.
    pub fn integer(name: &str, min: i64, max: i64, default: i64) -> Result<Self, SpaceError> {
        Self::validate_new(ParameterSpec {
            name: name.to_string(),
            kind: ParamKind::Integer,
            min: min as f64,
            max: max as f64,
            default: default as f64,
            categories: Vec::new(),
            resolution: 1.0,
        })
    }

    /// A boolean parameter, encoded as the integer range {0, 1}.
    pub fn boolean(name: &str, default: bool) -> Result<Self, SpaceError> {
        Self::validate_new(ParameterSpec {
            name: name.to_string(),
            kind: ParamKind::Boolean,
            min: 0.0,
            max: 1.0,
            default: if default { 1.0 } else { 0.0 },
            categories: Vec::new(),
            resolution: 1.0,
        })
    }

    /// A categorical parameter, encoded as an integer index into `categories`.
    pub fn categorical(
        name: &str,
        categories: &[&str],
        default: &str,
    ) -> Result<Self, SpaceError> {
        if categories.len() < 2 {
            return Err(SpaceError::TooFewCategories {
                name: name.to_string(),
            });
        }
        let index = categories.iter().position(|c| *c == default).ok_or_else(|| {
            SpaceError::UnknownCategory {
                name: name.to_string(),
                category: default.to_string(),
            }
        })?;
        Self::validate_new(ParameterSpec {
            name: name.to_string(),
            kind: ParamKind::Categorical,
            min: 0.0,
            max: (categories.len() - 1) as f64,
            default: index as f64,
            categories: categories.iter().map(|c| c.to_string()).collect(),
            resolution: 1.0,
        })
    }

    /// Override the resolution of a real parameter.
    pub fn with_resolution(mut self, resolution: f64) -> Result<Self, SpaceError> {
        self.resolution = resolution;
        Self::validate_new(self)
    }

    fn validate_new(spec: ParameterSpec) -> Result<Self, SpaceError> {
        spec.validate()?;
        Ok(spec)
    }

    /// Check all construction invariants. Used both by the constructors and
    /// after deserializing an untrusted document.
    pub fn validate(&self) -> Result<(), SpaceError> {
        let name = || self.name.clone();
        if !self.min.is_finite() || !self.max.is_finite() || self.min >= self.max {
            return Err(SpaceError::InvalidBounds {
                name: name(),
                min: self.min,
                max: self.max,
            });
        }
        if !(self.default >= self.min && self.default <= self.max) {
            return Err(SpaceError::DefaultOutOfRange {
                name: name(),
                default: self.default,
                min: self.min,
                max: self.max,
            });
        }
        if self.kind.is_discrete() {
            let integral = |v: f64| v.fract() == 0.0;
            if !(integral(self.min) && integral(self.max) && integral(self.default)) {
                return Err(SpaceError::DefaultOutOfRange {
                    name: name(),
                    default: self.default,
                    min: self.min,
                    max: self.max,
                });
            }
            if self.resolution != 1.0 {
                return Err(SpaceError::BadResolution {
                    name: name(),
                    resolution: self.resolution,
                });
            }
        }
        match self.kind {
            ParamKind::Boolean if self.min != 0.0 || self.max != 1.0 => {
                return Err(SpaceError::InvalidBounds {
                    name: name(),
                    min: self.min,
                    max: self.max,
                })
            }
            ParamKind::Categorical => {
                if self.categories.len() < 2 {
                    return Err(SpaceError::TooFewCategories { name: name() });
                }
                if self.max != (self.categories.len() - 1) as f64 || self.min != 0.0 {
                    return Err(SpaceError::InvalidBounds {
                        name: name(),
                        min: self.min,
                        max: self.max,
                    });
                }
            }
            _ => {}
        }
        if !(self.resolution > 0.0 && self.resolution <= self.max - self.min) {
            return Err(SpaceError::BadResolution {
                name: name(),
                resolution: self.resolution,
            });
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ParamKind {
        self.kind
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    /// Raw default value (index for categorical, 0/1 for boolean).
    pub fn default_raw(&self) -> f64 {
        self.default
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// Width of the raw range, `max - min`.
    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    /// Map one normalized coordinate to a raw value.
    ///
    /// Real kinds map linearly; discrete kinds floor the linear image and
    /// clamp to the raw bounds (the clamp guards the `t = 1` edge under
    /// floating point). The floor tolerates one part in 10^12 of
    /// representation error so that normalizing an integer value and
    /// mapping it back reproduces the value exactly.
    pub fn map_coord(&self, t: f64) -> RawValue {
        let linear = self.span() * t + self.min;
        match self.kind {
            ParamKind::Real => RawValue::Real(linear),
            _ => {
                let nudged = linear + linear.abs().max(1.0) * 1e-12;
                let v = nudged.floor() as i64;
                RawValue::Int(v.clamp(self.min as i64, self.max as i64))
            }
        }
    }

    /// Normalize a raw value into `[0, 1]`.
    pub fn normalize(&self, raw: f64) -> f64 {
        (raw - self.min) / self.span()
    }

    /// Render a raw value the way the target system expects it: booleans as
    /// `true`/`false`, categoricals as the category string, reals with six
    /// significant digits, integers verbatim.
    pub fn render(&self, value: &RawValue) -> String {
        match (self.kind, value) {
            (ParamKind::Boolean, v) => {
                if v.as_f64() != 0.0 { "true" } else { "false" }.to_string()
            }
            (ParamKind::Categorical, v) => {
                let idx = (v.as_f64() as usize).min(self.categories.len() - 1);
                self.categories[idx].clone()
            }
            (_, RawValue::Int(v)) => v.to_string(),
            (_, RawValue::Real(v)) => format_sig6(*v),
        }
    }
}

/// Round to six significant digits and print the shortest representation.
fn format_sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor();
    let scale = 10f64.powf(5.0 - magnitude);
    let rounded = (v * scale).round() / scale;
    format!("{rounded}")
}

/// One raw parameter value; integer kinds (including boolean and
/// categorical indices) are held as `Int`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawValue {
    Int(i64),
    Real(f64),
}

impl RawValue {
    pub fn as_f64(&self) -> f64 {
        match self {
            RawValue::Int(v) => *v as f64,
            RawValue::Real(v) => *v,
        }
    }
}

/// A normalized optimizer iterate in (or near) the unit cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoPoint(Vec<f64>);

impl AlgoPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        AlgoPoint(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Component-wise clamp into `[0, 1]`. Idempotent; the identity on
    /// points already inside the cube. Fails on non-finite coordinates.
    pub fn project(&self) -> Result<AlgoPoint, SpaceError> {
        let mut out = Vec::with_capacity(self.0.len());
        for (index, &c) in self.0.iter().enumerate() {
            if !c.is_finite() {
                return Err(SpaceError::NonFinite { index });
            }
            out.push(c.clamp(0.0, 1.0));
        }
        Ok(AlgoPoint(out))
    }

    pub fn in_unit_cube(&self) -> bool {
        self.0.iter().all(|&c| (0.0..=1.0).contains(&c))
    }

    /// The point shifted by `step`, without projection.
    pub fn offset(&self, step: &[f64]) -> AlgoPoint {
        AlgoPoint(self.0.iter().zip(step).map(|(c, s)| c + s).collect())
    }
}

/// The raw system-facing parameter vector, aligned with its
/// [`ParameterSpace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    values: Vec<RawValue>,
}

impl SystemConfig {
    pub fn new(values: Vec<RawValue>) -> Self {
        SystemConfig { values }
    }

    pub fn values(&self) -> &[RawValue] {
        &self.values
    }

    pub fn get(&self, i: usize) -> RawValue {
        self.values[i]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// The ordered collection of parameter specs; list order defines the
/// coordinate index of each knob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    specs: Vec<ParameterSpec>,
}

impl ParameterSpace {
    pub fn new(specs: Vec<ParameterSpec>) -> Result<Self, SpaceError> {
        let space = ParameterSpace { specs };
        space.validate()?;
        Ok(space)
    }

    /// Re-check every invariant; used after deserializing a checkpoint or
    /// config document.
    pub fn validate(&self) -> Result<(), SpaceError> {
        if self.specs.is_empty() {
            return Err(SpaceError::EmptySpace);
        }
        let mut seen = std::collections::HashSet::new();
        for spec in &self.specs {
            spec.validate()?;
            if !seen.insert(spec.name.as_str()) {
                return Err(SpaceError::DuplicateName(spec.name.clone()));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.specs.len()
    }

    pub fn specs(&self) -> &[ParameterSpec] {
        &self.specs
    }

    pub fn spec(&self, i: usize) -> &ParameterSpec {
        &self.specs[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    /// Map a normalized point to raw system values.
    ///
    /// Every coordinate must already lie in `[0, 1]`; callers project
    /// first. Each raw result lands inside its spec's `[min, max]`.
    pub fn map_to_system(&self, point: &AlgoPoint) -> Result<SystemConfig, SpaceError> {
        if point.dim() != self.dim() {
            return Err(SpaceError::DimensionMismatch {
                expected: self.dim(),
                got: point.dim(),
            });
        }
        let mut values = Vec::with_capacity(self.dim());
        for (index, (&t, spec)) in point.coords().iter().zip(&self.specs).enumerate() {
            if !t.is_finite() {
                return Err(SpaceError::NonFinite { index });
            }
            if !(0.0..=1.0).contains(&t) {
                return Err(SpaceError::CoordinateOutOfRange { index, value: t });
            }
            values.push(spec.map_coord(t));
        }
        Ok(SystemConfig { values })
    }

    /// The normalized point whose image is each spec's default value.
    pub fn default_point(&self) -> AlgoPoint {
        AlgoPoint(
            self.specs
                .iter()
                .map(|s| s.normalize(s.default_raw()))
                .collect(),
        )
    }

    /// Normalize a raw config back into the unit cube.
    pub fn normalize(&self, config: &SystemConfig) -> Result<AlgoPoint, SpaceError> {
        if config.len() != self.dim() {
            return Err(SpaceError::DimensionMismatch {
                expected: self.dim(),
                got: config.len(),
            });
        }
        Ok(AlgoPoint(
            config
                .values()
                .iter()
                .zip(&self.specs)
                .map(|(v, s)| s.normalize(v.as_f64()))
                .collect(),
        ))
    }

    /// Check that a raw config is dimensionally consistent and every value
    /// lies inside its spec's bounds (integral for discrete kinds).
    pub fn validate_config(&self, config: &SystemConfig) -> Result<(), SpaceError> {
        if config.len() != self.dim() {
            return Err(SpaceError::DimensionMismatch {
                expected: self.dim(),
                got: config.len(),
            });
        }
        for (v, spec) in config.values().iter().zip(&self.specs) {
            let raw = v.as_f64();
            if !(raw >= spec.min && raw <= spec.max) {
                return Err(SpaceError::ValueOutOfRange {
                    name: spec.name.clone(),
                    value: raw,
                    min: spec.min,
                    max: spec.max,
                });
            }
            if spec.kind.is_discrete() && raw.fract() != 0.0 {
                return Err(SpaceError::ValueOutOfRange {
                    name: spec.name.clone(),
                    value: raw,
                    min: spec.min,
                    max: spec.max,
                });
            }
        }
        Ok(())
    }

    /// Value of the named parameter in a config, if the parameter exists.
    pub fn value_of(&self, config: &SystemConfig, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| config.get(i).as_f64())
    }

    /// A short hex digest of the space definition, used to refuse resuming a
    /// checkpoint against a different space.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for spec in &self.specs {
            hasher.update(spec.name.as_bytes());
            hasher.update([0u8]);
            hasher.update(format!("{:?}", spec.kind).as_bytes());
            hasher.update(spec.min.to_le_bytes());
            hasher.update(spec.max.to_le_bytes());
            hasher.update(spec.default.to_le_bytes());
            hasher.update(spec.resolution.to_le_bytes());
            for c in &spec.categories {
                hasher.update(c.as_bytes());
                hasher.update([1u8]);
            }
            hasher.update([2u8]);
        }
        hex::encode(&hasher.finalize()[..8])
    }
}
