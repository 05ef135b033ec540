//! Likelihood matrix of one hypothesis: rows are tracks (existing, then
//! birth candidates), columns are three blocks: detected by measurement j,
//! missed, died. The missed and died blocks are diagonal.

use std::collections::HashMap;
use std::sync::Arc;

use crate::assignment::CostMatrix;
use crate::kinematics::{
    gating_modes, log_eta_detected, missed_prob, update_log, GaussianDensity, KinematicsError,
    Measurement,
};
use crate::model::{DensityIndex, Hypothesis, LabeledTrack, TrackLabel};

use super::TrackerConfig;

/// Posterior of one measurement mode for a detected (track, measurement) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeComponent {
    pub mode: u32,
    pub log_eta: f64,
    pub posterior: GaussianDensity,
}

/// Gated (track, measurement) pair. `log_eta` sums the gating modes.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionEntry {
    pub log_eta: f64,
    pub components: Vec<ModeComponent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Existing,
    Birth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackRow {
    pub label: TrackLabel,
    pub density_index: DensityIndex,
    pub kind: RowKind,
    /// Predicted density (birth density for birth rows).
    pub predicted: GaussianDensity,
}

#[derive(Debug, Clone)]
pub struct LikelihoodMatrix {
    pub track_rows: Vec<TrackRow>,
    pub meas_cols: Vec<Measurement>,
    log_eta: Vec<f64>,
    detections: Vec<Option<Arc<DetectionEntry>>>,
}

impl LikelihoodMatrix {
    pub fn rows(&self) -> usize {
        self.track_rows.len()
    }

    pub fn num_meas(&self) -> usize {
        self.meas_cols.len()
    }

    pub fn cols(&self) -> usize {
        self.num_meas() + 2 * self.rows()
    }

    pub fn missed_col(&self, row: usize) -> usize {
        self.num_meas() + row
    }

    pub fn died_col(&self, row: usize) -> usize {
        self.num_meas() + self.rows() + row
    }

    pub fn log_eta(&self, row: usize, col: usize) -> f64 {
        self.log_eta[row * self.cols() + col]
    }

    /// Entry in likelihood (not log) form.
    pub fn eta(&self, row: usize, col: usize) -> f64 {
        self.log_eta(row, col).exp()
    }

    pub fn detection(&self, row: usize, meas: usize) -> Option<&DetectionEntry> {
        self.detections[row * self.num_meas() + meas].as_deref()
    }

    /// Negative log of the matrix; zero likelihoods become `+inf`.
    pub fn cost_matrix(&self) -> CostMatrix {
        let mut c = CostMatrix::filled(self.rows(), self.cols(), f64::INFINITY);
        for r in 0..self.rows() {
            for col in 0..self.cols() {
                let l = self.log_eta(r, col);
                if l > f64::NEG_INFINITY {
                    c.set(r, col, -l);
                }
            }
        }
        c
    }
}

/// Reuses Kalman updates across hypotheses that share a density.
#[derive(Debug, Default)]
pub(crate) struct DetectionCache {
    entries: HashMap<(TrackLabel, DensityIndex, usize), Option<Arc<DetectionEntry>>>,
}

fn detection_entry(
    g: &GaussianDensity,
    survival: f64,
    z: &Measurement,
    cfg: &TrackerConfig,
) -> Result<Option<DetectionEntry>, KinematicsError> {
    let s = &cfg.sensor;
    let mut components = Vec::new();
    for mode in gating_modes(g, s, &z.z, cfg.gate_gamma)? {
        let (posterior, ll) = update_log(g, s, &z.z, mode)?;
        let log_eta = log_eta_detected(survival, s, ll);
        if log_eta > f64::NEG_INFINITY {
            components.push(ModeComponent {
                mode,
                log_eta,
                posterior,
            });
        }
    }
    if components.is_empty() {
        return Ok(None);
    }
    let log_eta = crate::model::log_sum_exp(components.iter().map(|c| c.log_eta));
    Ok(Some(DetectionEntry {
        log_eta,
        components,
    }))
}

/// Builds the matrix for a hypothesis whose tracks are already predicted.
///
/// Birth candidates use `birth_prob` in place of the survival probability.
/// A birth candidate is tied to the measurement it was lifted from (same
/// frame and index): it can only be detected by that measurement, and it
/// has no missed entry, so an unused candidate simply does not exist.
pub fn build_likelihood_matrix(
    h: &Hypothesis,
    births: &[LabeledTrack],
    meas: &[Measurement],
    cfg: &TrackerConfig,
) -> Result<LikelihoodMatrix, KinematicsError> {
    build_cached(h, births, meas, cfg, &mut DetectionCache::default())
}

pub(crate) fn build_cached(
    h: &Hypothesis,
    births: &[LabeledTrack],
    meas: &[Measurement],
    cfg: &TrackerConfig,
    cache: &mut DetectionCache,
) -> Result<LikelihoodMatrix, KinematicsError> {
    let mut track_rows: Vec<TrackRow> = h
        .tracks
        .iter()
        .map(|t| TrackRow {
            label: t.label,
            density_index: t.density_index.clone(),
            kind: RowKind::Existing,
            predicted: t.density.clone(),
        })
        .collect();
    track_rows.extend(births.iter().map(|b| TrackRow {
        label: b.label,
        density_index: b.density_index.clone(),
        kind: RowKind::Birth,
        predicted: b.density.clone(),
    }));

    let rows = track_rows.len();
    let m = meas.len();
    let cols = m + 2 * rows;
    let mut log_eta = vec![f64::NEG_INFINITY; rows * cols];
    let mut detections = vec![None; rows * m];
    let ps = cfg.motion.survival_prob;

    for (r, row) in track_rows.iter().enumerate() {
        let (survival, missed) = match row.kind {
            RowKind::Existing => (
                ps,
                missed_prob(ps, &cfg.sensor, cfg.sensor.sees(&row.predicted)),
            ),
            RowKind::Birth => (cfg.birth_prob, 0.0),
        };
        for (j, z) in meas.iter().enumerate() {
            if row.kind == RowKind::Birth
                && (z.id.frame, z.id.index) != (row.label.birth_frame, row.label.birth_index)
            {
                continue;
            }
            let entry = match row.kind {
                RowKind::Existing => {
                    let key = (row.label, row.density_index.clone(), j);
                    match cache.entries.get(&key) {
                        Some(e) => e.clone(),
                        None => {
                            let e =
                                detection_entry(&row.predicted, survival, z, cfg)?.map(Arc::new);
                            cache.entries.insert(key, e.clone());
                            e
                        }
                    }
                }
                RowKind::Birth => detection_entry(&row.predicted, survival, z, cfg)?.map(Arc::new),
            };
            if let Some(e) = entry {
                log_eta[r * cols + j] = e.log_eta;
                detections[r * m + j] = Some(e);
            }
        }
        log_eta[r * cols + m + r] = missed.ln();
        log_eta[r * cols + m + rows + r] = (1.0 - survival).ln();
    }

    Ok(LikelihoodMatrix {
        track_rows,
        meas_cols: meas.to_vec(),
        log_eta,
        detections,
    })
}
