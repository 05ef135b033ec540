//! Gaussian track densities with linear motion and sensor models.
//!
//! Kalman prediction and update, Mahalanobis gating, and the
//! clutter-normalized association likelihoods that fill the rows of a
//! likelihood matrix: detected (`eta_detected`), missed (`eta_missed`) and
//! died (`eta_died`).

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::model::MeasurementId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("innovation covariance is not symmetric positive definite")]
    SingularInnovation,
    #[error("covariance is not symmetric positive definite")]
    InvalidCovariance,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("sensor has no measurement mode {0}")]
    UnknownMode(u32),
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDensity {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianDensity {
    /// Checks symmetry (1e-12 relative) and positive definiteness.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self, KinematicsError> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(KinematicsError::Dimension(format!(
                "mean has {n} entries but covariance is {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let scale = cov.amax().max(f64::MIN_POSITIVE);
        if (&cov - cov.transpose()).amax() > 1e-12 * scale {
            return Err(KinematicsError::InvalidCovariance);
        }
        if Cholesky::new(cov.clone()).is_none() {
            return Err(KinematicsError::InvalidCovariance);
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Linear motion over one frame step.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel {
    pub transition: DMatrix<f64>,
    pub process_noise: DMatrix<f64>,
    pub survival_prob: f64,
}

impl MotionModel {
    /// Nearly-constant-velocity model in `spatial_dims` dimensions with
    /// state layout `[p_1..p_d, v_1..v_d]` and white-acceleration noise of
    /// spectral density `accel_var`.
    pub fn constant_velocity(
        spatial_dims: usize,
        dt: f64,
        accel_var: f64,
        survival_prob: f64,
    ) -> Self {
        let d = spatial_dims;
        let mut f = DMatrix::identity(2 * d, 2 * d);
        let mut q = DMatrix::zeros(2 * d, 2 * d);
        for i in 0..d {
            f[(i, d + i)] = dt;
            q[(i, i)] = accel_var * dt.powi(3) / 3.0;
            q[(i, d + i)] = accel_var * dt.powi(2) / 2.0;
            q[(d + i, i)] = accel_var * dt.powi(2) / 2.0;
            q[(d + i, d + i)] = accel_var * dt;
        }
        Self {
            transition: f,
            process_noise: q,
            survival_prob,
        }
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        let n = self.transition.nrows();
        if self.transition.ncols() != n || self.process_noise.shape() != (n, n) {
            return Err(KinematicsError::Dimension(
                "transition and process noise must be square and equal-sized".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.survival_prob) {
            return Err(KinematicsError::InvalidParameter(format!(
                "survival probability {} outside [0, 1]",
                self.survival_prob
            )));
        }
        let eig = self.process_noise.clone().symmetric_eigenvalues();
        if eig
            .iter()
            .any(|&e| e < -1e-12 * self.process_noise.amax().max(1.0))
        {
            return Err(KinematicsError::InvalidParameter(
                "process noise is not positive semidefinite".into(),
            ));
        }
        Ok(())
    }
}

/// Axis-aligned box in measurement space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldOfView {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl FieldOfView {
    pub fn contains(&self, z: &DVector<f64>) -> bool {
        z.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| hi - lo)
            .product()
    }
}

/// One component of a mixture measurement likelihood: the measurement is
/// explained by `H x + offset` with prior probability `weight`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMode {
    pub offset: DVector<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    pub observation: DMatrix<f64>,
    pub noise: DMatrix<f64>,
    pub detect_prob: f64,
    pub clutter_density: f64,
    pub fov: FieldOfView,
    /// Empty for a unimodal likelihood.
    pub modes: Vec<MeasurementMode>,
}

impl SensorModel {
    /// Sensor observing the first `spatial_dims` state components with
    /// isotropic noise of standard deviation `noise_std`.
    pub fn position_only(
        spatial_dims: usize,
        state_dim: usize,
        noise_std: f64,
        detect_prob: f64,
        clutter_density: f64,
        fov: FieldOfView,
    ) -> Self {
        let mut h = DMatrix::zeros(spatial_dims, state_dim);
        for i in 0..spatial_dims {
            h[(i, i)] = 1.0;
        }
        Self {
            observation: h,
            noise: DMatrix::identity(spatial_dims, spatial_dims) * noise_std * noise_std,
            detect_prob,
            clutter_density,
            fov,
            modes: Vec::new(),
        }
    }

    pub fn meas_dim(&self) -> usize {
        self.observation.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.observation.ncols()
    }

    /// Number of likelihood modes (one for a unimodal sensor).
    pub fn num_modes(&self) -> usize {
        self.modes.len().max(1)
    }

    fn mode(&self, mode: u32) -> Result<(Option<&DVector<f64>>, f64), KinematicsError> {
        if self.modes.is_empty() {
            return if mode == 0 {
                Ok((None, 1.0))
            } else {
                Err(KinematicsError::UnknownMode(mode))
            };
        }
        self.modes
            .get(mode as usize)
            .map(|m| (Some(&m.offset), m.weight))
            .ok_or(KinematicsError::UnknownMode(mode))
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        let dz = self.meas_dim();
        if self.noise.shape() != (dz, dz) {
            return Err(KinematicsError::Dimension(
                "measurement noise must be d_z x d_z".into(),
            ));
        }
        if Cholesky::new(self.noise.clone()).is_none() {
            return Err(KinematicsError::InvalidParameter(
                "measurement noise is not positive definite".into(),
            ));
        }
        if !(self.detect_prob > 0.0 && self.detect_prob <= 1.0) {
            return Err(KinematicsError::InvalidParameter(format!(
                "detection probability {} outside (0, 1]",
                self.detect_prob
            )));
        }
        if self.clutter_density.is_nan() || self.clutter_density <= 0.0 {
            return Err(KinematicsError::InvalidParameter(
                "clutter density must be positive".into(),
            ));
        }
        if self.fov.lower.len() != dz || self.fov.upper.len() != dz {
            return Err(KinematicsError::Dimension(
                "field of view bounds must have d_z entries".into(),
            ));
        }
        if !self.modes.is_empty() {
            let total: f64 = self.modes.iter().map(|m| m.weight).sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(KinematicsError::InvalidParameter(format!(
                    "mode weights sum to {total}, expected 1"
                )));
            }
            if self
                .modes
                .iter()
                .any(|m| m.offset.len() != dz || m.weight < 0.0)
            {
                return Err(KinematicsError::InvalidParameter(
                    "mode offsets must have d_z entries and non-negative weights".into(),
                ));
            }
        }
        Ok(())
    }

    /// Predicted measurement (without mode offset) lies inside the field of view.
    pub fn sees(&self, g: &GaussianDensity) -> bool {
        self.fov.contains(&(&self.observation * &g.mean))
    }

    /// Maps a measurement back to state space with the pseudo-inverse of the
    /// observation matrix. For a position-only sensor this is the zero-velocity
    /// lift `(z, 0)`.
    pub fn lift(&self, z: &DVector<f64>) -> DVector<f64> {
        let pinv = self
            .observation
            .clone()
            .pseudo_inverse(1e-12)
            .expect("pseudo-inverse of a finite matrix");
        pinv * z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub id: MeasurementId,
    pub z: DVector<f64>,
}

impl Measurement {
    pub fn new(frame: u64, index: u32, z: DVector<f64>) -> Self {
        Self {
            id: MeasurementId::new(frame, index),
            z,
        }
    }
}

pub fn predict(g: &GaussianDensity, m: &MotionModel) -> GaussianDensity {
    let mean = &m.transition * &g.mean;
    let cov = &m.transition * &g.cov * m.transition.transpose() + &m.process_noise;
    GaussianDensity {
        mean,
        cov: symmetrize(cov),
    }
}

struct Innovation {
    residual: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

fn innovation(
    g: &GaussianDensity,
    s: &SensorModel,
    z: &DVector<f64>,
    offset: Option<&DVector<f64>>,
) -> Result<Innovation, KinematicsError> {
    if z.len() != s.meas_dim() {
        return Err(KinematicsError::Dimension(format!(
            "measurement has {} entries, sensor expects {}",
            z.len(),
            s.meas_dim()
        )));
    }
    let h = &s.observation;
    let mut predicted = h * &g.mean;
    if let Some(off) = offset {
        predicted += off;
    }
    let cov = symmetrize(h * &g.cov * h.transpose() + &s.noise);
    let chol = Cholesky::new(cov).ok_or(KinematicsError::SingularInnovation)?;
    Ok(Innovation {
        residual: z - predicted,
        chol,
    })
}

impl Innovation {
    fn mahalanobis_sq(&self) -> f64 {
        let w = self
            .chol
            .l()
            .solve_lower_triangular(&self.residual)
            .expect("triangular solve");
        w.norm_squared()
    }

    fn log_pdf(&self) -> f64 {
        let d = self.residual.len() as f64;
        let log_det: f64 = self.chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
        -0.5 * (self.mahalanobis_sq() + log_det + d * (2.0 * PI).ln())
    }
}

/// Kalman update returning the posterior and the log of the predictive
/// likelihood times the mode weight.
pub fn update_log(
    g: &GaussianDensity,
    s: &SensorModel,
    z: &DVector<f64>,
    mode: u32,
) -> Result<(GaussianDensity, f64), KinematicsError> {
    let (offset, weight) = s.mode(mode)?;
    let inn = innovation(g, s, z, offset)?;
    let h = &s.observation;
    // K = P H^T S^-1, computed as (S^-1 H P)^T
    let gain = inn.chol.solve(&(h * &g.cov)).transpose();
    let mean = &g.mean + &gain * &inn.residual;
    let n = g.dim();
    let i_kh = DMatrix::identity(n, n) - &gain * h;
    let cov = &i_kh * &g.cov * i_kh.transpose() + &gain * &s.noise * gain.transpose();
    Ok((
        GaussianDensity {
            mean,
            cov: symmetrize(cov),
        },
        inn.log_pdf() + weight.ln(),
    ))
}

/// Kalman update (Joseph form) with the mode's offset applied to the
/// predicted measurement. The returned likelihood is the predictive Gaussian
/// density at `z` times the mode weight.
pub fn update(
    g: &GaussianDensity,
    s: &SensorModel,
    z: &DVector<f64>,
    mode: u32,
) -> Result<(GaussianDensity, f64), KinematicsError> {
    update_log(g, s, z, mode).map(|(post, ll)| (post, ll.exp()))
}

/// Squared Mahalanobis distance of the innovation for one mode.
pub fn mahalanobis_sq(
    g: &GaussianDensity,
    s: &SensorModel,
    z: &DVector<f64>,
    mode: u32,
) -> Result<f64, KinematicsError> {
    let (offset, _) = s.mode(mode)?;
    Ok(innovation(g, s, z, offset)?.mahalanobis_sq())
}

/// True iff the innovation's squared Mahalanobis distance, minimized over
/// the sensor's modes, is at most `gamma`.
pub fn gate(
    g: &GaussianDensity,
    s: &SensorModel,
    z: &DVector<f64>,
    gamma: f64,
) -> Result<bool, KinematicsError> {
    Ok(gating_modes(g, s, z, gamma)?.next().is_some())
}

/// Modes under which `z` falls inside the gate.
pub fn gating_modes<'a>(
    g: &GaussianDensity,
    s: &'a SensorModel,
    z: &DVector<f64>,
    gamma: f64,
) -> Result<impl Iterator<Item = u32> + 'a, KinematicsError> {
    let mut inside = Vec::new();
    for mode in 0..s.num_modes() as u32 {
        if mahalanobis_sq(g, s, z, mode)? <= gamma {
            inside.push(mode);
        }
    }
    Ok(inside.into_iter())
}

/// `P_S * P_D * likelihood / kappa` for a gated (track, measurement, mode).
pub fn eta_detected(
    g: &GaussianDensity,
    s: &SensorModel,
    m: &MotionModel,
    z: &DVector<f64>,
    mode: u32,
) -> Result<f64, KinematicsError> {
    let (_, ll) = update_log(g, s, z, mode)?;
    Ok(log_eta_detected(m.survival_prob, s, ll).exp())
}

/// Log form of the detected entry given the predictive log-likelihood and
/// the survival (or birth) probability standing in for `P_S`.
pub fn log_eta_detected(survival: f64, s: &SensorModel, log_likelihood: f64) -> f64 {
    survival.ln() + s.detect_prob.ln() + log_likelihood - s.clutter_density.ln()
}

/// Survived but not detected. A track outside the field of view cannot be
/// detected, so its miss carries no information beyond survival.
pub fn eta_missed(m: &MotionModel, s: &SensorModel, in_fov: bool) -> f64 {
    missed_prob(m.survival_prob, s, in_fov)
}

pub fn missed_prob(survival: f64, s: &SensorModel, in_fov: bool) -> f64 {
    if in_fov {
        survival * (1.0 - s.detect_prob)
    } else {
        survival
    }
}

pub fn eta_died(m: &MotionModel) -> f64 {
    1.0 - m.survival_prob
}

/// Chi-square quantile at probability 0.9999 for `dof` degrees of freedom.
pub fn default_gate_gamma(dof: usize) -> f64 {
    ChiSquared::new(dof as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.9999)
}

pub fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}
