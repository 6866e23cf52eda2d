//! Fixed-length simulation context vectors.
//!
//! The full simulation state never reaches the learner. Environments expose
//! raw quantities through [`ContextSource`] and a [`ContextSchema`] decides
//! which of them, in which order, make up the context vector.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContextError {
    #[error("state does not provide quantity `{extractor}` for feature `{feature}`")]
    Missing { feature: String, extractor: String },
    #[error("feature `{feature}` is not finite ({value})")]
    NonFinite { feature: String, value: f64 },
    #[error("context has {got} values, schema `{schema}` expects {expected}")]
    Length {
        schema: String,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub unit: String,
    pub extractor: String,
}

impl FeatureSpec {
    pub fn new(name: &str, unit: &str, extractor: &str) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
            extractor: extractor.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSchema {
    pub id: String,
    pub features: Vec<FeatureSpec>,
}

impl ContextSchema {
    /// Flow-heat feature list. The permeability estimate is only meaningful
    /// for heterogeneous fields and is dropped otherwise.
    pub fn flow_heat(heterogeneous: bool) -> Self {
        let mut features = vec![
            FeatureSpec::new("time_step", "s", extract::TIME_STEP),
            FeatureSpec::new("min_temperature", "K", extract::MIN_TEMPERATURE),
            FeatureSpec::new("max_temperature", "K", extract::MAX_TEMPERATURE),
            FeatureSpec::new("cfl", "-", extract::CFL),
            FeatureSpec::new("max_advective_flux", "J/s", extract::MAX_ADVECTIVE_FLUX),
            FeatureSpec::new("mean_advective_flux", "J/s", extract::MEAN_ADVECTIVE_FLUX),
            FeatureSpec::new("max_diffusive_flux", "J/s", extract::MAX_DIFFUSIVE_FLUX),
            FeatureSpec::new("mean_diffusive_flux", "J/s", extract::MEAN_DIFFUSIVE_FLUX),
        ];
        if heterogeneous {
            features.push(FeatureSpec::new(
                "permeable_fraction",
                "-",
                extract::PERMEABLE_FRACTION,
            ));
        }
        let id = if heterogeneous {
            "flow_heat_heterogeneous"
        } else {
            "flow_heat_uniform"
        };
        Self {
            id: id.into(),
            features,
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("schema serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Context vector c: finite values, one per schema feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Context {
    pub values: Vec<f64>,
    pub schema_id: String,
}

impl Context {
    pub fn new(schema: &ContextSchema, values: Vec<f64>) -> Result<Self, ContextError> {
        if values.len() != schema.len() {
            return Err(ContextError::Length {
                schema: schema.id.clone(),
                expected: schema.len(),
                got: values.len(),
            });
        }
        for (f, v) in schema.features.iter().zip(&values) {
            if !v.is_finite() {
                return Err(ContextError::NonFinite {
                    feature: f.name.clone(),
                    value: *v,
                });
            }
        }
        Ok(Self {
            values,
            schema_id: schema.id.clone(),
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Anything that can answer extractor queries about its current state.
pub trait ContextSource {
    fn quantity(&self, extractor: &str) -> Option<f64>;
}

pub fn extract_context(
    state: &impl ContextSource,
    schema: &ContextSchema,
) -> Result<Context, ContextError> {
    let values = schema
        .features
        .iter()
        .map(|f| {
            state
                .quantity(&f.extractor)
                .ok_or_else(|| ContextError::Missing {
                    feature: f.name.clone(),
                    extractor: f.extractor.clone(),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Context::new(schema, values)
}

/// Extractor identifiers understood by [`FlowSnapshot`].
pub mod extract {
    pub const TIME_STEP: &str = "time_step";
    pub const MIN_TEMPERATURE: &str = "min_temperature";
    pub const MAX_TEMPERATURE: &str = "max_temperature";
    pub const CFL: &str = "cfl";
    pub const MAX_ADVECTIVE_FLUX: &str = "max_advective_flux";
    pub const MEAN_ADVECTIVE_FLUX: &str = "mean_advective_flux";
    pub const MAX_DIFFUSIVE_FLUX: &str = "max_diffusive_flux";
    pub const MEAN_DIFFUSIVE_FLUX: &str = "mean_diffusive_flux";
    pub const PERMEABLE_FRACTION: &str = "permeable_fraction";
}

/// Per-face quantities of a finite-volume state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceSnapshot {
    /// Darcy velocity normal to the face \[m/s\].
    pub velocity: f64,
    /// Advective enthalpy flux through the face \[J/s\].
    pub advective_flux: f64,
    /// Conductive (Fourier) flux through the face \[J/s\].
    pub diffusive_flux: f64,
}

/// The raw quantities of a flow-heat state needed by the context features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSnapshot {
    pub time_step: f64,
    pub temperature: Vec<f64>,
    pub faces: Vec<FaceSnapshot>,
    /// Characteristic cell length: the smallest cell edge \[m\].
    pub cell_length: f64,
    pub permeability: Option<Vec<f64>>,
    pub permeability_threshold: f64,
}

fn max_abs(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, |m, v| m.max(v.abs()))
}

/// Mean of absolute values, summed in sorted order so that any permutation of
/// the input gives a bit-identical result.
fn mean_abs(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.map(f64::abs).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v.iter().sum::<f64>() / v.len() as f64)
}

impl FlowSnapshot {
    pub fn cfl(&self) -> f64 {
        max_abs(self.faces.iter().map(|f| f.velocity)) * self.time_step / self.cell_length
    }
}

impl ContextSource for FlowSnapshot {
    fn quantity(&self, extractor: &str) -> Option<f64> {
        let faces = || self.faces.iter();
        match extractor {
            extract::TIME_STEP => Some(self.time_step),
            extract::MIN_TEMPERATURE => self.temperature.iter().copied().reduce(f64::min),
            extract::MAX_TEMPERATURE => self.temperature.iter().copied().reduce(f64::max),
            extract::CFL => (self.cell_length > 0.0).then(|| self.cfl()),
            extract::MAX_ADVECTIVE_FLUX => Some(max_abs(faces().map(|f| f.advective_flux))),
            extract::MEAN_ADVECTIVE_FLUX => mean_abs(faces().map(|f| f.advective_flux)),
            extract::MAX_DIFFUSIVE_FLUX => Some(max_abs(faces().map(|f| f.diffusive_flux))),
            extract::MEAN_DIFFUSIVE_FLUX => mean_abs(faces().map(|f| f.diffusive_flux)),
            extract::PERMEABLE_FRACTION => {
                let k = self.permeability.as_ref()?;
                if k.is_empty() {
                    return None;
                }
                let above = k.iter().filter(|&&v| v > self.permeability_threshold).count();
                Some(above as f64 / k.len() as f64)
            }
            _ => None,
        }
    }
}
