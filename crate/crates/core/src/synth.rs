//! Synthetic record stores: Lorentzian peaks whose positions and heights follow
//! chosen scaling forms, sampled on the sweep grid.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fss::{Observable, ScalingModel};
use crate::model::ModelVariant;
use crate::observables::EngineKind;
use crate::sweep::{grid_value, RecordStore, SweepRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingLaw {
    pub model: ScalingModel,
    pub params: Vec<f64>,
}

impl ScalingLaw {
    pub fn eval(&self, length: f64) -> f64 {
        self.model.eval(&self.params, length)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub id: String,
    #[serde(default = "default_variant")]
    pub variant: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jz: Option<f64>,
    pub spin: u32,
    pub lengths: Vec<usize>,
    /// Quantity carrying the peak; the other stored quantities are zero.
    #[serde(default = "default_observable")]
    pub observable: Observable,
    pub position: ScalingLaw,
    pub height: ScalingLaw,
    /// Half width at half maximum of the Lorentzian.
    #[serde(default = "default_width")]
    pub width: f64,
    /// Samples cover `position +/- half_span`.
    #[serde(default = "default_half_span")]
    pub half_span: f64,
    #[serde(default = "default_step")]
    pub grid_step: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_variant() -> String {
    "u".into()
}
fn default_observable() -> Observable {
    Observable::SPrime
}
fn default_width() -> f64 {
    0.05
}
fn default_half_span() -> f64 {
    0.05
}
fn default_step() -> f64 {
    1e-3
}
fn default_delta() -> f64 {
    crate::observables::DEFAULT_DELTA
}

impl SynthSpec {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse { path: origin.to_path_buf(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?, path)
    }

    pub fn records(&self) -> Result<Vec<SweepRecord>> {
        let variant = ModelVariant::from_tag(&self.variant, self.jz)?;
        if self.lengths.is_empty() || !(self.width > 0.0 && self.half_span > 0.0 && self.grid_step > 0.0) {
            return Err(Error::InvalidInput("synthetic spec needs lengths and positive width, span and step".into()));
        }
        if self.position.params.len() != self.position.model.parameter_count()
            || self.height.params.len() != self.height.model.parameter_count()
        {
            return Err(Error::InvalidInput("scaling-law parameter count does not match its model".into()));
        }
        let mut out = Vec::new();
        for &length in &self.lengths {
            let centre = self.position.eval(length as f64);
            let height = self.height.eval(length as f64);
            if !centre.is_finite() || !height.is_finite() {
                return Err(Error::InvalidInput(format!("scaling laws are not finite at L = {length}")));
            }
            let lo = ((centre - self.half_span) / self.grid_step).floor() as i64;
            let hi = ((centre + self.half_span) / self.grid_step).ceil() as i64;
            for d_index in lo..=hi {
                let d = grid_value(d_index, self.grid_step);
                let u = (d - centre) / self.width;
                let y = height / (1.0 + u * u);
                let mut r = SweepRecord {
                    plan_id: self.id.clone(),
                    timestamp: 0,
                    code_version: crate::CODE_VERSION.to_string(),
                    variant: variant.label(),
                    jz: variant.jz(),
                    spin: self.spin,
                    length,
                    d,
                    d_index,
                    grid_step: self.grid_step,
                    delta: self.delta,
                    engine: EngineKind::Synthetic,
                    epsilon: 0.0,
                    energy: 0.0,
                    fidelity: 1.0,
                    infidelity: 0.0,
                    chi_f: 0.0,
                    entropy: 0.0,
                    entropy_derivative: 0.0,
                    max_bond: 0,
                    converged: true,
                    bond_cap_reached: false,
                    max_truncation_error: 0.0,
                    sweeps: 0,
                };
                match self.observable {
                    Observable::ChiF => r.chi_f = y,
                    Observable::SPrime => r.entropy_derivative = y,
                    Observable::Entropy => r.entropy = y,
                    Observable::Infidelity => r.infidelity = y,
                    Observable::Energy => r.energy = y,
                }
                out.push(r);
            }
        }
        Ok(out)
    }

    /// Appends the records to `store`; returns how many were written.
    pub fn write(&self, store: &RecordStore) -> Result<usize> {
        let records = self.records()?;
        for r in &records {
            store.append(r)?;
        }
        Ok(records.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fss::find_peak;
    use crate::sweep::load_series;

    #[test]
    fn peaks_sit_on_the_scaling_law() {
        let spec = SynthSpec {
            id: "t".into(),
            variant: "u".into(),
            jz: None,
            spin: 2,
            lengths: vec![32, 64],
            observable: Observable::SPrime,
            position: ScalingLaw { model: ScalingModel::SprimePosBkt, params: vec![1.0979, 3.597, 0.0, 0.0] },
            height: ScalingLaw { model: ScalingModel::SprimeHeightBkt, params: vec![0.00648, 3.0, 0.0, 0.0, 0.2] },
            width: 0.05,
            half_span: 0.05,
            grid_step: 1e-3,
            delta: 5e-4,
        };
        let records = spec.records().unwrap();
        for l in [32, 64] {
            let s = load_series(&records, "u", 2, l, Observable::SPrime).unwrap();
            let p = find_peak(&s, None).unwrap();
            let err = (p.position - spec.position.eval(l as f64)).abs();
            assert!(err < 1e-6, "{err:e}");
        }
    }
}
