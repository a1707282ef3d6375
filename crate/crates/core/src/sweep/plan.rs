use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChainSpec, ModelVariant};
use crate::observables::{EngineConfig, DEFAULT_DELTA};

/// Default spacing of the coupling grid.
pub const DEFAULT_GRID_STEP: f64 = 1e-3;

fn default_grid_step() -> f64 {
    DEFAULT_GRID_STEP
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

fn default_true() -> bool {
    true
}

/// Declarative description of a family of coupling scans, read from TOML.
///
/// ```toml
/// id = "s1-small"
/// variant = "u"
/// spin = 1
/// lengths = [32, 64]
/// window = [0.30, 0.45]
/// grid_step = 1e-3
/// delta = 5e-4
///
/// [engine]
/// kind = "dmrg"
/// epsilon = 1e-10
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    pub id: String,
    /// `u`, `ladder` or `u-jz`.
    pub variant: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jz: Option<f64>,
    pub spin: u32,
    pub lengths: Vec<usize>,
    pub window: [f64; 2],
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Chain DMRG solves along the grid of each length, each warm-started from the previous point.
    #[serde(default = "default_true")]
    pub warm_start: bool,
    pub engine: EngineConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl SweepPlan {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let plan: SweepPlan =
            toml::from_str(text).map_err(|e| Error::Parse { path: origin.to_path_buf(), message: e.to_string() })?;
        plan.validate().map_err(|e| Error::Parse { path: origin.to_path_buf(), message: e.to_string() })?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        SweepPlan::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }

    pub fn model_variant(&self) -> Result<ModelVariant> {
        ModelVariant::from_tag(&self.variant, self.jz)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        self.model_variant()?;
        if self.lengths.is_empty() {
            return bad("key 'lengths' must list at least one chain length".into());
        }
        for &l in &self.lengths {
            ChainSpec::new(self.model_variant()?, self.spin, l, self.window[0])?;
        }
        let mut sorted = self.lengths.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.lengths.len() {
            return bad("key 'lengths' contains duplicates".into());
        }
        if !(self.window[0].is_finite() && self.window[1].is_finite() && self.window[0] <= self.window[1]) {
            return bad(format!("key 'window' must be an ordered pair, got {:?}", self.window));
        }
        if !(self.grid_step > 0.0 && self.grid_step.is_finite()) {
            return bad(format!("key 'grid_step' must be positive, got {}", self.grid_step));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad(format!("key 'delta' must be positive, got {}", self.delta));
        }
        if let EngineConfig::Dmrg(s) = &self.engine {
            s.validate()?;
        }
        if self.grid().is_empty() {
            return bad("the window contains no grid point".into());
        }
        Ok(())
    }

    /// Grid points `(index, D)` with `D = index * grid_step` inside the window.
    pub fn grid(&self) -> Vec<(i64, f64)> {
        grid_points(self.window[0], self.window[1], self.grid_step)
    }

    pub fn spec(&self, length: usize, d: f64) -> Result<ChainSpec> {
        ChainSpec::new(self.model_variant()?, self.spin, length, d)
    }

    /// Log partition name, one per `(variant, S, L)`.
    pub fn partition(&self, length: usize) -> Result<String> {
        Ok(partition_name(&self.model_variant()?.label(), self.spin, length))
    }
}

pub fn partition_name(variant_label: &str, spin: u32, length: usize) -> String {
    format!("{variant_label}_S{spin}_L{length}")
}

/// Coupling for grid index `index`. When `1/step` is an integer the value is
/// `index / (1/step)`, which is the correctly rounded decimal.
pub fn grid_value(index: i64, step: f64) -> f64 {
    let inv = (1.0 / step).round();
    if inv >= 1.0 && (inv * step - 1.0).abs() < 1e-12 {
        index as f64 / inv
    } else {
        index as f64 * step
    }
}

pub fn grid_points(lo: f64, hi: f64, step: f64) -> Vec<(i64, f64)> {
    let first = (lo / step - 1e-9).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    (first..=last).map(|i| (i, grid_value(i, step))).collect()
}
