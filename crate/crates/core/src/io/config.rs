use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::glmb::{Factoring, TrackerConfig};
use crate::kinematics::{
    default_gate_gamma, FieldOfView, MeasurementMode, MotionModel, SensorModel,
};
use crate::sim::matrix;

use super::InputError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactoringKey {
    MergeSplit,
    Single,
}

/// Tracker configuration file: flat TOML, unknown keys rejected. Budgets
/// and tolerances fall back to the defaults of [`TrackerConfig::new`];
/// model matrices are required.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub window_n: Option<usize>,
    pub max_children_per_hypo: Option<usize>,
    pub max_product_hypos: Option<usize>,
    pub max_hypos_per_factor: Option<usize>,
    pub independence_tol: Option<f64>,
    pub gate_gamma: Option<f64>,
    pub empty_factor_tol: Option<f64>,
    pub birth_prob: Option<f64>,
    pub birth_cov: Vec<Vec<f64>>,
    pub transition: Vec<Vec<f64>>,
    pub process_noise: Vec<Vec<f64>>,
    pub survival_prob: f64,
    pub observation: Vec<Vec<f64>>,
    pub measurement_noise: Vec<Vec<f64>>,
    pub detect_prob: f64,
    pub clutter_density: f64,
    pub fov_min: Vec<f64>,
    pub fov_max: Vec<f64>,
    pub mode_offsets: Option<Vec<Vec<f64>>>,
    pub mode_weights: Option<Vec<f64>>,
    pub factoring: Option<FactoringKey>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, InputError> {
        toml::from_str(text).map_err(|e| InputError::Config(e.to_string()))
    }

    pub fn into_tracker_config(self) -> Result<TrackerConfig, InputError> {
        let m = |rows: &[Vec<f64>], what: &str| matrix(rows, what).map_err(InputError::Config);
        let modes = match (self.mode_offsets, self.mode_weights) {
            (None, None) => Vec::new(),
            (Some(offsets), Some(weights)) if offsets.len() == weights.len() => offsets
                .into_iter()
                .zip(weights)
                .map(|(o, weight)| MeasurementMode {
                    offset: DVector::from_vec(o),
                    weight,
                })
                .collect(),
            _ => {
                return Err(InputError::Config(
                    "mode_offsets and mode_weights must be given together with equal lengths"
                        .into(),
                ))
            }
        };
        let motion = MotionModel {
            transition: m(&self.transition, "transition")?,
            process_noise: m(&self.process_noise, "process_noise")?,
            survival_prob: self.survival_prob,
        };
        let sensor = SensorModel {
            observation: m(&self.observation, "observation")?,
            noise: m(&self.measurement_noise, "measurement_noise")?,
            detect_prob: self.detect_prob,
            clutter_density: self.clutter_density,
            fov: FieldOfView {
                lower: self.fov_min,
                upper: self.fov_max,
            },
            modes,
        };
        let birth_cov: DMatrix<f64> = m(&self.birth_cov, "birth_cov")?;
        let mut cfg = TrackerConfig::new(motion, sensor, birth_cov);
        let dz = cfg.sensor.meas_dim();
        cfg.gate_gamma = self.gate_gamma.unwrap_or_else(|| default_gate_gamma(dz));
        if let Some(v) = self.window_n {
            cfg.window_n = v;
        }
        if let Some(v) = self.max_children_per_hypo {
            cfg.max_children_per_hypo = v;
        }
        if let Some(v) = self.max_product_hypos {
            cfg.max_product_hypos = v;
        }
        if let Some(v) = self.max_hypos_per_factor {
            cfg.max_hypos_per_factor = v;
        }
        if let Some(v) = self.independence_tol {
            cfg.independence_tol = v;
        }
        if let Some(v) = self.empty_factor_tol {
            cfg.empty_factor_tol = v;
        }
        if let Some(v) = self.birth_prob {
            cfg.birth_prob = v;
        }
        cfg.factoring = match self.factoring {
            None | Some(FactoringKey::MergeSplit) => Factoring::MergeSplit,
            Some(FactoringKey::Single) => Factoring::Single,
        };
        cfg.validate()
            .map_err(|e| InputError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

/// Reads and validates a tracker configuration.
pub fn parse_config(text: &str) -> Result<TrackerConfig, InputError> {
    ConfigFile::parse(text)?.into_tracker_config()
}
