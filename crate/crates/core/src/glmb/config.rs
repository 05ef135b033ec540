use nalgebra::{Cholesky, DMatrix};

use crate::kinematics::{
    default_gate_gamma, FieldOfView, KinematicsError, MotionModel, SensorModel,
};

/// How the multitarget density is organised into factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Factoring {
    /// Merge factors coupled by measurements and split them back when the
    /// independence test passes.
    #[default]
    MergeSplit,
    /// One global factor that every measurement updates.
    Single,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    /// Length of the association window that identifies a density.
    pub window_n: usize,
    pub max_children_per_hypo: usize,
    /// Product hypotheses kept when factors merge.
    pub max_product_hypos: usize,
    pub max_hypos_per_factor: usize,
    /// Largest joint-table reconstruction error that still allows a split.
    pub independence_tol: f64,
    pub gate_gamma: f64,
    /// Factors whose existence probability falls below this are dropped.
    pub empty_factor_tol: f64,
    pub birth_prob: f64,
    pub birth_cov: DMatrix<f64>,
    pub motion: MotionModel,
    pub sensor: SensorModel,
    pub factoring: Factoring,
}

impl TrackerConfig {
    /// Configuration with the default budgets: at most 10 children per
    /// hypothesis, 30 product hypotheses per merge, 30 hypotheses per factor.
    pub fn new(motion: MotionModel, sensor: SensorModel, birth_cov: DMatrix<f64>) -> Self {
        let gate_gamma = default_gate_gamma(sensor.meas_dim());
        Self {
            window_n: 3,
            max_children_per_hypo: 10,
            max_product_hypos: 30,
            max_hypos_per_factor: 30,
            independence_tol: 1e-2,
            gate_gamma,
            empty_factor_tol: 1e-3,
            birth_prob: 0.01,
            birth_cov,
            motion,
            sensor,
            factoring: Factoring::MergeSplit,
        }
    }

    /// 2-D position sensor with a nearly-constant-velocity target model,
    /// state `[x, y, vx, vy]`.
    pub fn planar_cv(
        fov: FieldOfView,
        noise_std: f64,
        accel_var: f64,
        detect_prob: f64,
        clutter_density: f64,
        birth_pos_std: f64,
        birth_vel_std: f64,
    ) -> Self {
        let motion = MotionModel::constant_velocity(2, 1.0, accel_var, 0.99);
        let sensor = SensorModel::position_only(2, 4, noise_std, detect_prob, clutter_density, fov);
        let birth_cov = DMatrix::from_diagonal(&nalgebra::dvector![
            birth_pos_std * birth_pos_std,
            birth_pos_std * birth_pos_std,
            birth_vel_std * birth_vel_std,
            birth_vel_std * birth_vel_std
        ]);
        Self::new(motion, sensor, birth_cov)
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        let bad = |what: &str| Err(KinematicsError::InvalidParameter(what.to_string()));
        if self.window_n == 0
            || self.max_children_per_hypo == 0
            || self.max_product_hypos == 0
            || self.max_hypos_per_factor == 0
        {
            return bad("window and hypothesis budgets must be at least 1");
        }
        if !(self.independence_tol > 0.0 && self.gate_gamma > 0.0 && self.empty_factor_tol >= 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.birth_prob > 0.0 && self.birth_prob < 1.0) {
            return bad("birth probability must lie in (0, 1)");
        }
        self.motion.validate()?;
        self.sensor.validate()?;
        let n = self.motion.transition.nrows();
        if self.sensor.state_dim() != n || self.birth_cov.shape() != (n, n) {
            return Err(KinematicsError::Dimension(
                "motion, sensor and birth covariance disagree on the state dimension".into(),
            ));
        }
        if Cholesky::new(self.birth_cov.clone()).is_none() {
            return bad("birth covariance is not positive definite");
        }
        Ok(())
    }
}
