//! Synthetic ground truth and measurement frames.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::Deserialize;
use thiserror::Error;

use crate::kinematics::{FieldOfView, Measurement, SensorModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
}

/// One simulated object. It exists on frames `birth_frame..death_frame`
/// (or to the end of the scenario when `death_frame` is absent).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub birth_frame: u64,
    pub death_frame: Option<u64>,
    pub state: Vec<f64>,
}

fn default_dt() -> f64 {
    1.0
}

/// Scenario description. Frames are numbered from zero.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub frames: u64,
    /// Seconds between frames; only used for the timestamps.
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub transition: Vec<Vec<f64>>,
    /// Noise added to the true trajectories; zero when absent.
    #[serde(default)]
    pub process_noise: Option<Vec<Vec<f64>>>,
    pub observation: Vec<Vec<f64>>,
    pub measurement_noise: Vec<Vec<f64>>,
    pub detect_prob: f64,
    pub clutter_rate: f64,
    pub fov_min: Vec<f64>,
    pub fov_max: Vec<f64>,
    #[serde(default)]
    pub targets: Vec<TargetSpec>,
}

pub(crate) fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, String> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(format!("{what} must be a non-empty rectangular matrix"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

impl ScenarioSpec {
    pub fn transition(&self) -> Result<DMatrix<f64>, SimError> {
        matrix(&self.transition, "transition").map_err(SimError::InvalidSpec)
    }

    pub fn fov(&self) -> FieldOfView {
        FieldOfView {
            lower: self.fov_min.clone(),
            upper: self.fov_max.clone(),
        }
    }

    /// Sensor seen by the simulator. Its clutter density is the clutter
    /// rate spread uniformly over the field of view.
    pub fn sensor(&self) -> Result<SensorModel, SimError> {
        let bad = SimError::InvalidSpec;
        let observation = matrix(&self.observation, "observation").map_err(bad)?;
        let noise = matrix(&self.measurement_noise, "measurement_noise").map_err(bad)?;
        let fov = self.fov();
        Ok(SensorModel {
            observation,
            noise,
            detect_prob: self.detect_prob,
            clutter_density: self.clutter_rate / fov.volume(),
            fov,
            modes: Vec::new(),
        })
    }

    fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidSpec(m));
        let f = self.transition()?;
        let n = f.nrows();
        if f.ncols() != n {
            return bad("transition must be square".into());
        }
        let s = self.sensor()?;
        let dz = s.meas_dim();
        if s.state_dim() != n || s.noise.shape() != (dz, dz) {
            return bad("observation and noise dimensions disagree with the state".into());
        }
        if self.fov_min.len() != dz || self.fov_max.len() != dz {
            return bad(
                "field of view bounds must have one entry per measurement dimension".into(),
            );
        }
        if self
            .fov_min
            .iter()
            .zip(&self.fov_max)
            .any(|(lo, hi)| lo.partial_cmp(hi) != Some(std::cmp::Ordering::Less))
        {
            return bad("field of view is empty".into());
        }
        if !(0.0..=1.0).contains(&self.detect_prob) {
            return bad(format!(
                "detection probability {} outside [0, 1]",
                self.detect_prob
            ));
        }
        if !(self.clutter_rate >= 0.0 && self.clutter_rate.is_finite()) {
            return bad(format!(
                "clutter rate {} must be finite and non-negative",
                self.clutter_rate
            ));
        }
        if let Some(q) = &self.process_noise {
            let q = matrix(q, "process_noise").map_err(SimError::InvalidSpec)?;
            if q.shape() != (n, n) {
                return bad("process_noise must match the state dimension".into());
            }
        }
        for (i, t) in self.targets.iter().enumerate() {
            if t.state.len() != n {
                return bad(format!(
                    "target {i}: state has {} entries, expected {n}",
                    t.state.len()
                ));
            }
            if let Some(d) = t.death_frame {
                if d < t.birth_frame {
                    return bad(format!(
                        "target {i}: death frame {d} precedes birth frame {}",
                        t.birth_frame
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthTrack {
    pub birth_frame: u64,
    pub death_frame: u64,
    /// State on each frame of `birth_frame..death_frame`.
    pub states: Vec<DVector<f64>>,
}

impl GroundTruthTrack {
    pub fn state_at(&self, frame: u64) -> Option<&DVector<f64>> {
        if frame < self.birth_frame {
            return None;
        }
        self.states.get((frame - self.birth_frame) as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub frame: u64,
    pub time: f64,
    pub measurements: Vec<Measurement>,
}

/// Square-root factor of a positive semidefinite matrix, via its
/// eigendecomposition so that singular covariances are allowed.
fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d)
}

fn gaussian(rng: &mut ChaCha8Rng, sqrt: &DMatrix<f64>) -> DVector<f64> {
    let w = DVector::from_fn(sqrt.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    sqrt * w
}

/// Propagates every target through the transition, adding process noise
/// when the scenario has it. Deterministic for a given seed.
pub fn generate_truth(spec: &ScenarioSpec, seed: u64) -> Result<Vec<GroundTruthTrack>, SimError> {
    spec.validate()?;
    let f = spec.transition()?;
    let q = match &spec.process_noise {
        Some(q) => Some(sqrt_psd(
            &matrix(q, "process_noise").map_err(SimError::InvalidSpec)?,
        )),
        None => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(spec
        .targets
        .iter()
        .map(|t| {
            let death = t
                .death_frame
                .unwrap_or(spec.frames)
                .min(spec.frames)
                .max(t.birth_frame);
            let mut x = DVector::from_vec(t.state.clone());
            let mut states = Vec::with_capacity((death - t.birth_frame) as usize);
            for _ in t.birth_frame..death {
                states.push(x.clone());
                x = &f * x;
                if let Some(q) = &q {
                    x += gaussian(&mut rng, q);
                }
            }
            GroundTruthTrack {
                birth_frame: t.birth_frame,
                death_frame: death,
                states,
            }
        })
        .collect())
}

/// Measurements of one frame: each live target inside the field of view is
/// detected with probability `P_D`, plus Poisson clutter spread uniformly
/// over the field of view. The order within the frame is shuffled.
pub fn generate_frame(
    truth: &[GroundTruthTrack],
    frame: u64,
    time: f64,
    sensor: &SensorModel,
    clutter_rate: f64,
    seed: u64,
) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame);
    let r = sqrt_psd(&sensor.noise);
    let mut zs: Vec<DVector<f64>> = Vec::new();
    for t in truth {
        let Some(x) = t.state_at(frame) else { continue };
        let hx = &sensor.observation * x;
        if !sensor.fov.contains(&hx) {
            continue;
        }
        if rng.random::<f64>() < sensor.detect_prob {
            zs.push(hx + gaussian(&mut rng, &r));
        }
    }
    if clutter_rate > 0.0 {
        let n = Poisson::new(clutter_rate)
            .expect("positive rate")
            .sample(&mut rng) as usize;
        let fov = &sensor.fov;
        for _ in 0..n {
            zs.push(DVector::from_fn(fov.lower.len(), |i, _| {
                rng.random_range(fov.lower[i]..fov.upper[i])
            }));
        }
    }
    zs.shuffle(&mut rng);
    let measurements = zs
        .into_iter()
        .enumerate()
        .map(|(i, z)| Measurement::new(frame, i as u32, z))
        .collect();
    Frame {
        frame,
        time,
        measurements,
    }
}

/// Every frame of the scenario.
pub fn simulate(spec: &ScenarioSpec, seed: u64) -> Result<Vec<Frame>, SimError> {
    let truth = generate_truth(spec, seed)?;
    let sensor = spec.sensor()?;
    Ok((0..spec.frames)
        .map(|k| {
            generate_frame(
                &truth,
                k,
                k as f64 * spec.dt,
                &sensor,
                spec.clutter_rate,
                seed,
            )
        })
        .collect())
}
