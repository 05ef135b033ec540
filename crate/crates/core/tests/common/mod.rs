#![allow(dead_code)]

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use factored_glmb::glmb::marginalize_history;
use factored_glmb::glmb::TrackerConfig;
use factored_glmb::kinematics::{default_gate_gamma, FieldOfView};
use factored_glmb::merge_split::{process_frame, EventSink, TrackerEvent};
use factored_glmb::model::{FactorId, FilterState, TrackLabel};
use factored_glmb::sim::{
    generate_truth, simulate, Frame, GroundTruthTrack, ScenarioSpec, TargetSpec,
};

pub const ACCEL_VAR: f64 = 0.01;

pub fn target(birth: u64, state: [f64; 4]) -> TargetSpec {
    TargetSpec {
        birth_frame: birth,
        death_frame: None,
        state: state.to_vec(),
    }
}

/// Planar constant-velocity scenario with unit position noise.
pub fn planar_spec(
    frames: u64,
    pd: f64,
    clutter_rate: f64,
    half_width: [f64; 2],
    targets: Vec<TargetSpec>,
) -> ScenarioSpec {
    ScenarioSpec {
        frames,
        dt: 1.0,
        transition: vec![
            vec![1.0, 0.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ],
        process_noise: None,
        observation: vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]],
        measurement_noise: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        detect_prob: pd,
        clutter_rate,
        fov_min: vec![-half_width[0], -half_width[1]],
        fov_max: vec![half_width[0], half_width[1]],
        targets,
    }
}

/// Tracker matched to a planar scenario. The birth probability is set so
/// that a lone new measurement starts a track with existence near 1%.
pub fn tracker_for(spec: &ScenarioSpec) -> TrackerConfig {
    let fov = FieldOfView {
        lower: spec.fov_min.clone(),
        upper: spec.fov_max.clone(),
    };
    let kappa = spec.clutter_rate.max(0.05) / fov.volume();
    let mut cfg = TrackerConfig::planar_cv(fov, 1.0, ACCEL_VAR, spec.detect_prob, kappa, 1.0, 1.0);
    // birth density at its own measurement: N(0; 0, R + P_b) with R + P_b = 2 I
    let at_birth = 1.0 / (2.0 * std::f64::consts::PI * 2.0);
    let ratio = 0.01;
    let odds = spec.detect_prob * at_birth / kappa;
    cfg.birth_prob = ratio / (odds + ratio);
    cfg
}

/// Gate radius of a track in steady state: `sqrt(gamma * max eig(S))`
/// with `S` the innovation covariance the Riccati recursion converges to.
pub fn steady_state_gate_radius(cfg: &TrackerConfig) -> f64 {
    let f = &cfg.motion.transition;
    let q = &cfg.motion.process_noise;
    let h = &cfg.sensor.observation;
    let r = &cfg.sensor.noise;
    let mut p = cfg.birth_cov.clone();
    let mut s = DMatrix::zeros(2, 2);
    for _ in 0..500 {
        let pp = f * &p * f.transpose() + q;
        s = h * &pp * h.transpose() + r;
        let k = &pp * h.transpose() * s.clone().try_inverse().unwrap();
        p = (DMatrix::identity(4, 4) - &k * h) * &pp;
    }
    let gamma = default_gate_gamma(2);
    (gamma * s.symmetric_eigenvalues().max()).sqrt()
}

pub struct FrameRecord {
    pub frame: u64,
    pub num_factors: usize,
    pub total_hypos: usize,
    /// Label sets of factors whose existence probability is at least 0.5.
    pub confirmed: Vec<BTreeSet<TrackLabel>>,
    /// Every factor with its label set.
    pub factors: Vec<(FactorId, BTreeSet<TrackLabel>)>,
    /// Tracks of each factor's maximum-weight hypothesis, with positions.
    pub map_tracks: Vec<(TrackLabel, DVector<f64>)>,
    pub weight_sums: Vec<f64>,
    /// Largest relative change of a factor's total weight under
    /// history marginalization.
    pub marginal_rel_err: f64,
}

/// Collects factor-level events only.
#[derive(Default)]
pub struct FactorEvents(pub Vec<TrackerEvent>);

impl EventSink for FactorEvents {
    fn record(&mut self, event: TrackerEvent) {
        self.0.push(event);
    }
}

pub struct Run {
    pub records: Vec<FrameRecord>,
    pub events: Vec<TrackerEvent>,
}

pub fn run(cfg: TrackerConfig, frames: &[Frame]) -> Run {
    let mut state = FilterState::new(cfg);
    let mut events = FactorEvents::default();
    let mut records = Vec::new();
    for fr in frames {
        process_frame(&mut state, fr.frame, &fr.measurements, &mut events).unwrap();
        records.push(FrameRecord {
            frame: fr.frame,
            num_factors: state.factors.len(),
            total_hypos: state.total_hypotheses(),
            confirmed: state
                .factors
                .iter()
                .filter(|f| f.existence_prob() >= 0.5)
                .map(|f| f.label_set().clone())
                .collect(),
            factors: state
                .factors
                .iter()
                .map(|f| (f.id, f.label_set().clone()))
                .collect(),
            map_tracks: state
                .factors
                .iter()
                .filter_map(|f| f.map_hypothesis())
                .flat_map(|h| {
                    h.tracks
                        .iter()
                        .map(|t| (t.label, t.density.mean.rows(0, 2).into_owned()))
                })
                .collect(),
            weight_sums: state
                .factors
                .iter()
                .map(|f| f.hypotheses().iter().map(|h| h.weight()).sum())
                .collect(),
            marginal_rel_err: state
                .factors
                .iter()
                .map(|f| {
                    let before = f.total_weight();
                    ((marginalize_history(f).total_weight() - before) / before).abs()
                })
                .fold(0.0, f64::max),
        });
    }
    Run {
        records,
        events: events.0,
    }
}

pub fn scenario(spec: &ScenarioSpec, seed: u64) -> (Vec<GroundTruthTrack>, Vec<Frame>) {
    (
        generate_truth(spec, seed).unwrap(),
        simulate(spec, seed).unwrap(),
    )
}

pub fn distance(truth: &[GroundTruthTrack], a: usize, b: usize, frame: u64) -> Option<f64> {
    let xa = truth[a].state_at(frame)?;
    let xb = truth[b].state_at(frame)?;
    Some((xa - xb).rows(0, 2).norm())
}

/// True when some MAP track lies within `radius` of the target's position.
pub fn target_in_map(rec: &FrameRecord, truth: &GroundTruthTrack, radius: f64) -> bool {
    let Some(x) = truth.state_at(rec.frame) else {
        return false;
    };
    let p = x.rows(0, 2).into_owned();
    rec.map_tracks
        .iter()
        .any(|(_, m)| (m - &p).norm() <= radius)
}
