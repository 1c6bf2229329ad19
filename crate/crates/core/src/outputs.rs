//! Output embedding: turns discrete planner results into continuous
//! whole-body task references and evaluates the matching actual outputs with
//! their Jacobians.
//!
//! Planar walking outputs, in order: CoM height over the stance sole, pelvis
//! pitch, swing-sole x and z relative to the stance sole, swing-foot pitch.
//! During double support only the first two are active (the rest are pinned
//! by the contact constraints).

use nalgebra::{DMatrix, DVector, Vector3};

use crate::planar::Vec2;
use crate::planner::{PlannerOutput, Side};
use crate::rigid_body::{
    com_jacobian, com_jdot_times_v, com_position, jdot_times_v_with, orientation_of,
    point_jacobian_with, PlanarModel, RobotState,
};
use crate::{Error, Result};

/// Number of tracked outputs during single support.
pub const N_OUTPUTS_SS: usize = 5;
/// Active outputs during double support (CoM height, pelvis pitch).
pub const N_OUTPUTS_DS: usize = 2;

/// Index names for the SS output vector.
pub mod idx {
    pub const Z_COM: usize = 0;
    pub const PELVIS_PITCH: usize = 1;
    pub const SWING_X: usize = 2;
    pub const SWING_Z: usize = 3;
    pub const SWING_PITCH: usize = 4;
}

/// Per-output weights and PD gains.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OutputSpec {
    /// LIP CoM height; the z_com reference.
    pub z0: f64,
    /// Swing apex height.
    pub z_apex: f64,
    /// QP weight per SS output.
    pub weights: [f64; N_OUTPUTS_SS],
    pub k_p: [f64; N_OUTPUTS_SS],
    pub k_d: [f64; N_OUTPUTS_SS],
}

impl OutputSpec {
    pub fn validate(&self) -> Result<()> {
        if self.z0 <= 0.0 || self.z_apex <= 0.0 {
            return Err(Error::InvalidParam("z0 and z_apex must be positive".into()));
        }
        if self.weights.iter().any(|w| *w <= 0.0) {
            return Err(Error::InvalidParam("output weights must be positive".into()));
        }
        if self.k_p.iter().chain(self.k_d.iter()).any(|k| *k < 0.0) {
            return Err(Error::InvalidParam("gains must be non-negative".into()));
        }
        Ok(())
    }
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            z0: 0.75,
            z_apex: 0.08,
            weights: [1.0, 1.0, 10.0, 10.0, 1.0],
            k_p: [100.0; N_OUTPUTS_SS],
            k_d: [20.0; N_OUTPUTS_SS],
        }
    }
}

/// Bezier curve with de Casteljau evaluation and time-scaled derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct BezierCurve {
    pub points: Vec<f64>,
    pub duration: f64,
}

/// Value and first two time derivatives at a phase point, plus whether the
/// query had to be clamped into [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BezierEval {
    pub value: f64,
    pub d_dt: f64,
    pub d2_dt2: f64,
    pub clamped: bool,
}

impl BezierCurve {
    pub fn new(points: Vec<f64>, duration: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParam("Bezier needs control points".into()));
        }
        if !(duration > 0.0) {
            return Err(Error::InvalidParam(format!(
                "Bezier duration must be > 0, got {duration}"
            )));
        }
        Ok(Self { points, duration })
    }

    fn de_casteljau(points: &[f64], s: f64) -> f64 {
        let mut work = points.to_vec();
        for level in (1..work.len()).rev() {
            for i in 0..level {
                work[i] = (1.0 - s) * work[i] + s * work[i + 1];
            }
        }
        work[0]
    }

    /// Evaluate value and derivatives at normalized phase `s`.
    pub fn eval(&self, s: f64) -> BezierEval {
        let clamped = !(0.0..=1.0).contains(&s);
        let s = s.clamp(0.0, 1.0);
        let d = self.points.len() - 1;
        let value = Self::de_casteljau(&self.points, s);

        let mut d_dt = 0.0;
        let mut d2_dt2 = 0.0;
        if d >= 1 {
            let hodo: Vec<f64> = (0..d)
                .map(|i| d as f64 * (self.points[i + 1] - self.points[i]))
                .collect();
            d_dt = Self::de_casteljau(&hodo, s) / self.duration;
            if d >= 2 {
                let hodo2: Vec<f64> = (0..d - 1)
                    .map(|i| (d - 1) as f64 * (hodo[i + 1] - hodo[i]))
                    .collect();
                d2_dt2 = Self::de_casteljau(&hodo2, s) / (self.duration * self.duration);
            }
        }
        BezierEval {
            value,
            d_dt,
            d2_dt2,
            clamped,
        }
    }
}

/// The quintic smoothstep profile `sigma` used for swing retargeting: a
/// degree-5 Bezier from 0 to 1 with zero end velocity and acceleration.
fn smoothstep5(duration: f64) -> BezierCurve {
    BezierCurve {
        points: vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0],
        duration,
    }
}

/// Swing-height profile: zero at both ends with zero end velocities and the
/// apex at midphase equal to `z_apex` (control values 1.6 z_apex).
fn swing_height_curve(z_apex: f64, duration: f64) -> BezierCurve {
    let a = 1.6 * z_apex;
    BezierCurve {
        points: vec![0.0, 0.0, a, a, 0.0, 0.0],
        duration,
    }
}

/// Gait phase of the full-model pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WalkPhase {
    /// Single support on the given stance side.
    Ss(Side),
    /// Double support, transferring stance from `from` to its opposite.
    Ds { from: Side },
}

impl WalkPhase {
    /// The foot used as the position reference (current stance in SS; the
    /// newly landed foot in DS).
    pub fn reference_side(&self) -> Side {
        match self {
            WalkPhase::Ss(s) => *s,
            WalkPhase::Ds { from } => from.other(),
        }
    }

    pub fn is_ss(&self) -> bool {
        matches!(self, WalkPhase::Ss(_))
    }
}

/// Values recorded at the start of a swing phase; anchors the swing
/// trajectories so re-planning never teleports the references.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftoffSnapshot {
    /// Swing-sole x relative to the stance sole at liftoff.
    pub swing_x: f64,
    /// Swing-sole height at liftoff.
    pub swing_z: f64,
}

/// Desired outputs with their first two derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct DesiredOutputs {
    pub y: DVector<f64>,
    pub y_dot: DVector<f64>,
    pub y_ddot: DVector<f64>,
}

/// Build the desired output trajectories for the current phase time.
///
/// - CoM height: constant `z0`; pelvis pitch: 0; swing pitch: 0.
/// - Swing x: quintic blend from the liftoff snapshot to the live planner
///   target; rebuilding the curve from the frozen snapshot every call keeps
///   the reference continuous under re-planning.
/// - Swing z: quintic dome through `z_apex`, zero at both ends.
///
/// In DS only `(z_com, pelvis_pitch)` are produced.
pub fn build_desired_outputs(
    planner_out: &PlannerOutput,
    phase: WalkPhase,
    t_in_phase: f64,
    phase_duration: f64,
    spec: &OutputSpec,
    liftoff: &LiftoffSnapshot,
) -> DesiredOutputs {
    match phase {
        WalkPhase::Ds { .. } => {
            let y = DVector::from_vec(vec![spec.z0, 0.0]);
            DesiredOutputs {
                y,
                y_dot: DVector::zeros(N_OUTPUTS_DS),
                y_ddot: DVector::zeros(N_OUTPUTS_DS),
            }
        }
        WalkPhase::Ss(_) => {
            let s = (t_in_phase / phase_duration).clamp(0.0, 1.0);
            let sigma = smoothstep5(phase_duration).eval(s);
            let target = planner_out.u_sw_x;
            let span = target - liftoff.swing_x;
            let x = liftoff.swing_x + span * sigma.value;
            let x_dot = span * sigma.d_dt;
            let x_ddot = span * sigma.d2_dt2;

            let zc = swing_height_curve(spec.z_apex, phase_duration).eval(s);

            let y = DVector::from_vec(vec![spec.z0, 0.0, x, zc.value, 0.0]);
            let mut y_dot = DVector::zeros(N_OUTPUTS_SS);
            let mut y_ddot = DVector::zeros(N_OUTPUTS_SS);
            y_dot[idx::SWING_X] = x_dot;
            y_dot[idx::SWING_Z] = zc.d_dt;
            y_ddot[idx::SWING_X] = x_ddot;
            y_ddot[idx::SWING_Z] = zc.d2_dt2;
            DesiredOutputs { y, y_dot, y_ddot }
        }
    }
}

/// Actual outputs with Jacobian and acceleration bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ActualOutputs {
    pub y: DVector<f64>,
    pub y_dot: DVector<f64>,
    pub j: DMatrix<f64>,
    pub jdot_v: DVector<f64>,
}

/// Evaluate the actual outputs from the full-model state.
///
/// All positions are relative to the reference (stance) sole point, so every
/// output is invariant under world translation.
pub fn compute_actual_outputs(
    model: &PlanarModel,
    state: &RobotState,
    phase: WalkPhase,
) -> Result<ActualOutputs> {
    let feet = model
        .feet
        .ok_or_else(|| Error::Model("model declares no feet".into()))?;
    let (stance_body, swing_body) = match phase.reference_side() {
        Side::Left => (feet.left, feet.right),
        Side::Right => (feet.right, feet.left),
    };
    let sole = feet.geom.ankle_sole();
    let kin = model.kinematics(&state.q);
    let n = model.dof();

    let j_stance = point_jacobian_with(model, &kin, stance_body, sole);
    let b_stance = jdot_times_v_with(model, &kin, &state.v, stance_body, sole);
    let stance_pos = kin.poses[stance_body].transform_point(sole);

    let com = com_position(model, &kin);
    let j_com = com_jacobian(model, &kin);
    let b_com = com_jdot_times_v(model, &kin, &state.v);

    let active = match phase {
        WalkPhase::Ss(_) => N_OUTPUTS_SS,
        WalkPhase::Ds { .. } => N_OUTPUTS_DS,
    };
    let mut y = DVector::zeros(active);
    let mut j = DMatrix::zeros(active, n);
    let mut jdot_v = DVector::zeros(active);

    // z_com relative to the stance sole
    y[idx::Z_COM] = com.y - stance_pos.y;
    j.row_mut(idx::Z_COM)
        .copy_from(&(j_com.row(1) - j_stance.row(1)));
    jdot_v[idx::Z_COM] = b_com.y - b_stance[1];

    // pelvis pitch is the base coordinate itself
    y[idx::PELVIS_PITCH] = state.q[2];
    j[(idx::PELVIS_PITCH, 2)] = 1.0;

    if phase.is_ss() {
        let j_swing = point_jacobian_with(model, &kin, swing_body, sole);
        let b_swing = jdot_times_v_with(model, &kin, &state.v, swing_body, sole);
        let swing_pos = kin.poses[swing_body].transform_point(sole);

        y[idx::SWING_X] = swing_pos.x - stance_pos.x;
        y[idx::SWING_Z] = swing_pos.y - stance_pos.y;
        y[idx::SWING_PITCH] = orientation_of(model, &state.q, swing_body);
        for col in 0..n {
            j[(idx::SWING_X, col)] = j_swing[(0, col)] - j_stance[(0, col)];
            j[(idx::SWING_Z, col)] = j_swing[(1, col)] - j_stance[(1, col)];
            j[(idx::SWING_PITCH, col)] = j_swing[(2, col)];
        }
        jdot_v[idx::SWING_X] = b_swing[0] - b_stance[0];
        jdot_v[idx::SWING_Z] = b_swing[1] - b_stance[1];
        jdot_v[idx::SWING_PITCH] = 0.0;
    }

    let y_dot = &j * &state.v;
    Ok(ActualOutputs {
        y,
        y_dot,
        j,
        jdot_v,
    })
}

/// PD target acceleration `-K_p y_err - K_d y_err_dot` with diagonal gains.
pub fn target_acceleration(
    y_err: &DVector<f64>,
    y_err_dot: &DVector<f64>,
    k_p: &[f64],
    k_d: &[f64],
) -> DVector<f64> {
    DVector::from_fn(y_err.len(), |i, _| {
        -k_p[i] * y_err[i] - k_d[i] * y_err_dot[i]
    })
}

/// Everything the whole-body controllers need about the current tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSet {
    pub y_err: DVector<f64>,
    pub y_err_dot: DVector<f64>,
    pub j_y: DMatrix<f64>,
    pub jdot_v: DVector<f64>,
    /// Total commanded output acceleration: desired feedforward plus the PD
    /// tracking term.
    pub y_tgt_ddot: DVector<f64>,
    pub weights: DVector<f64>,
    /// Desired output values/rates, kept for IK-style controllers.
    pub y_des: DVector<f64>,
    pub y_des_dot: DVector<f64>,
}

/// Combine actual and desired outputs into a [`TaskSet`].
pub fn build_task_set(
    actual: &ActualOutputs,
    desired: &DesiredOutputs,
    spec: &OutputSpec,
) -> TaskSet {
    let active = actual.y.len();
    let y_err = &actual.y - &desired.y;
    let y_err_dot = &actual.y_dot - &desired.y_dot;
    let pd = target_acceleration(&y_err, &y_err_dot, &spec.k_p[..active], &spec.k_d[..active]);
    TaskSet {
        y_err: y_err.clone(),
        y_err_dot,
        j_y: actual.j.clone(),
        jdot_v: actual.jdot_v.clone(),
        y_tgt_ddot: &desired.y_ddot + pd,
        weights: DVector::from_row_slice(&spec.weights[..active]),
        y_des: desired.y.clone(),
        y_des_dot: desired.y_dot.clone(),
    }
}

/// Trivial fixed-pose standing mode: every generalized coordinate is an
/// output regulated to a reference configuration. Fully determines the
/// commanded acceleration, which walking's reduced output set deliberately
/// does not.
pub fn standing_task_set(
    model: &PlanarModel,
    state: &RobotState,
    q_ref: &DVector<f64>,
    k_p: f64,
    k_d: f64,
) -> TaskSet {
    let n = model.dof();
    let y_err = &state.q - q_ref;
    let y_err_dot = state.v.clone();
    let kp = vec![k_p; n];
    let kd = vec![k_d; n];
    let y_tgt_ddot = target_acceleration(&y_err, &y_err_dot, &kp, &kd);
    // inertia-weighted acceleration errors: light distal coordinates do not
    // dominate the cost, and the condensed Hessian stays well scaled
    let d = crate::rigid_body::mass_matrix(model, &state.q);
    TaskSet {
        y_err,
        y_err_dot,
        j_y: DMatrix::identity(n, n),
        jdot_v: DVector::zeros(n),
        y_tgt_ddot,
        weights: DVector::from_fn(n, |i, _| d[(i, i)]),
        y_des: q_ref.clone(),
        y_des_dot: DVector::zeros(n),
    }
}

/// Snapshot the swing-foot state at liftoff (start of an SS phase).
pub fn take_liftoff_snapshot(
    model: &PlanarModel,
    state: &RobotState,
    stance: Side,
) -> Result<LiftoffSnapshot> {
    let feet = model
        .feet
        .ok_or_else(|| Error::Model("model declares no feet".into()))?;
    let (stance_body, swing_body) = match stance {
        Side::Left => (feet.left, feet.right),
        Side::Right => (feet.right, feet.left),
    };
    let kin = model.kinematics(&state.q);
    let sole = feet.geom.ankle_sole();
    let stance_pos = kin.poses[stance_body].transform_point(sole);
    let swing_pos = kin.poses[swing_body].transform_point(sole);
    Ok(LiftoffSnapshot {
        swing_x: swing_pos.x - stance_pos.x,
        swing_z: swing_pos.y - stance_pos.y,
    })
}

/// Convenience: bias of a body point as a `Vector3` (x, z, pitch).
pub fn point_bias(model: &PlanarModel, state: &RobotState, body: usize, local: Vec2) -> Vector3<f64> {
    crate::rigid_body::jdot_times_v(model, &state.q, &state.v, body, local)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::PlannerOutput;
    use crate::rigid_body::reference_biped;
    use crate::rom::RomState;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn planner_out(u_x: f64) -> PlannerOutput {
        PlannerOutput {
            u_sw_x: u_x,
            u_sw_y: 0.0,
            t_to_impact: 0.1,
            predicted_preimpact_x: RomState::default(),
            predicted_preimpact_y: RomState::default(),
        }
    }

    #[test]
    fn constant_bezier_is_flat() {
        let c = BezierCurve::new(vec![2.5; 6], 0.4).unwrap();
        for s in [0.0, 0.3, 1.0] {
            let e = c.eval(s);
            assert_relative_eq!(e.value, 2.5);
            assert_relative_eq!(e.d_dt, 0.0);
            assert_relative_eq!(e.d2_dt2, 0.0);
            assert!(!e.clamped);
        }
    }

    #[test]
    fn bezier_hits_endpoints_and_clamps() {
        let c = BezierCurve::new(vec![1.0, -0.5, 2.0, 3.0], 1.0).unwrap();
        assert_relative_eq!(c.eval(0.0).value, 1.0);
        assert_relative_eq!(c.eval(1.0).value, 3.0);
        let e = c.eval(1.2);
        assert!(e.clamped);
        assert_relative_eq!(e.value, 3.0);
    }

    #[test]
    fn bezier_derivatives_match_finite_differences() {
        let c = BezierCurve::new(vec![0.0, 0.2, -0.1, 0.5, 0.4], 0.35).unwrap();
        let eps = 1e-6;
        for s in [0.1, 0.37, 0.82] {
            let e = c.eval(s);
            // d/dt = d/ds / duration
            let fd = (c.eval(s + eps).value - c.eval(s - eps).value) / (2.0 * eps) / c.duration;
            assert!((e.d_dt - fd).abs() < 1e-6, "{} vs {}", e.d_dt, fd);
            let fd2 = (c.eval(s + eps).d_dt - c.eval(s - eps).d_dt) / (2.0 * eps) / c.duration;
            assert!((e.d2_dt2 - fd2).abs() < 1e-5, "{} vs {}", e.d2_dt2, fd2);
        }
    }

    #[test]
    fn swing_height_profile_shape() {
        let z_apex = 0.08;
        let c = swing_height_curve(z_apex, 0.35);
        assert_relative_eq!(c.eval(0.0).value, 0.0);
        assert_relative_eq!(c.eval(1.0).value, 0.0);
        assert_relative_eq!(c.eval(0.5).value, z_apex, epsilon = 1e-12);
        assert_relative_eq!(c.eval(0.0).d_dt, 0.0);
        assert_relative_eq!(c.eval(1.0).d_dt, 0.0);
        let mut max = 0.0_f64;
        for i in 0..=1000 {
            let v = c.eval(i as f64 / 1000.0).value;
            assert!(v >= -1e-12, "negative height {v}");
            max = max.max(v);
        }
        assert!((max - z_apex).abs() <= 0.01 * z_apex, "apex {max}");
    }

    #[test]
    fn desired_swing_respects_boundaries_and_retargeting() {
        let spec = OutputSpec::default();
        let lift = LiftoffSnapshot {
            swing_x: -0.15,
            swing_z: 0.0,
        };
        let t_ss = 0.35;
        // at liftoff the reference equals the snapshot
        let d0 = build_desired_outputs(
            &planner_out(0.2),
            WalkPhase::Ss(Side::Left),
            0.0,
            t_ss,
            &spec,
            &lift,
        );
        assert_relative_eq!(d0.y[idx::SWING_X], -0.15, epsilon = 1e-12);
        assert_relative_eq!(d0.y[idx::SWING_Z], 0.0, epsilon = 1e-12);
        // at touchdown the reference equals the commanded placement
        let d1 = build_desired_outputs(
            &planner_out(0.2),
            WalkPhase::Ss(Side::Left),
            t_ss,
            t_ss,
            &spec,
            &lift,
        );
        assert_relative_eq!(d1.y[idx::SWING_X], 0.2, epsilon = 1e-12);
        assert_relative_eq!(d1.y[idx::SWING_Z], 0.0, epsilon = 1e-12);
        // z_com and pitch references are constant
        assert_relative_eq!(d1.y[idx::Z_COM], spec.z0);
        assert_relative_eq!(d1.y[idx::PELVIS_PITCH], 0.0);
    }

    #[test]
    fn retargeting_moves_endpoint_but_not_current_value_much() {
        let spec = OutputSpec::default();
        let lift = LiftoffSnapshot {
            swing_x: -0.1,
            swing_z: 0.0,
        };
        let t_ss = 0.35;
        let delta = 0.05;
        for (s, within) in [(0.1, 0.01), (0.5, 0.5), (0.9, 1.0)] {
            let a = build_desired_outputs(
                &planner_out(0.2),
                WalkPhase::Ss(Side::Right),
                s * t_ss,
                t_ss,
                &spec,
                &lift,
            );
            let b = build_desired_outputs(
                &planner_out(0.2 + delta),
                WalkPhase::Ss(Side::Right),
                s * t_ss,
                t_ss,
                &spec,
                &lift,
            );
            let jump = (b.y[idx::SWING_X] - a.y[idx::SWING_X]).abs();
            assert!(jump <= delta * within + 1e-12, "jump {jump} at s={s}");
            // terminal target moves by the full delta
            let a1 = build_desired_outputs(
                &planner_out(0.2),
                WalkPhase::Ss(Side::Right),
                t_ss,
                t_ss,
                &spec,
                &lift,
            );
            let b1 = build_desired_outputs(
                &planner_out(0.2 + delta),
                WalkPhase::Ss(Side::Right),
                t_ss,
                t_ss,
                &spec,
                &lift,
            );
            assert_relative_eq!(b1.y[idx::SWING_X] - a1.y[idx::SWING_X], delta, epsilon = 1e-12);
        }
    }

    #[test]
    fn desired_outputs_are_c1_without_retargeting() {
        let spec = OutputSpec::default();
        let lift = LiftoffSnapshot {
            swing_x: -0.12,
            swing_z: 0.0,
        };
        let t_ss = 0.35;
        let out = planner_out(0.18);
        let dt = 1e-7;
        for t in [0.05, 0.17, 0.3] {
            let a = build_desired_outputs(&out, WalkPhase::Ss(Side::Left), t, t_ss, &spec, &lift);
            let b =
                build_desired_outputs(&out, WalkPhase::Ss(Side::Left), t + dt, t_ss, &spec, &lift);
            for i in 0..N_OUTPUTS_SS {
                // velocity reference is continuous: jump bounded by accel * dt
                assert!((b.y_dot[i] - a.y_dot[i]).abs() < 1e-4 * dt / 1e-7);
                // position consistent with velocity
                assert!((b.y[i] - a.y[i] - a.y_dot[i] * dt).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ds_outputs_are_the_stance_consistent_subset() {
        let spec = OutputSpec::default();
        let lift = LiftoffSnapshot {
            swing_x: 0.0,
            swing_z: 0.0,
        };
        let d = build_desired_outputs(
            &planner_out(0.2),
            WalkPhase::Ds { from: Side::Left },
            0.05,
            0.1,
            &spec,
            &lift,
        );
        assert_eq!(d.y.len(), N_OUTPUTS_DS);
        assert_relative_eq!(d.y[idx::Z_COM], spec.z0);
    }

    #[test]
    fn actual_outputs_match_geometry_and_are_translation_invariant() {
        let model = reference_biped();
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let mut q = DVector::from_fn(model.dof(), |_, _| rng.gen_range(-0.3..0.3));
        q[1] += 0.8;
        let v = DVector::from_fn(model.dof(), |_, _| rng.gen_range(-1.0..1.0));
        let state = RobotState::new(q.clone(), v.clone()).unwrap();
        let out = compute_actual_outputs(&model, &state, WalkPhase::Ss(Side::Left)).unwrap();

        // y_dot == J v identically
        assert!((&out.y_dot - &out.j * &v).amax() < 1e-12);

        // translate the whole robot in x: nothing changes
        let mut q2 = q.clone();
        q2[0] += 3.7;
        let state2 = RobotState::new(q2, v.clone()).unwrap();
        let out2 = compute_actual_outputs(&model, &state2, WalkPhase::Ss(Side::Left)).unwrap();
        assert!((&out.y - &out2.y).amax() < 1e-12);

        // symmetric standing pose: swing x equals inter-foot distance (zero
        // here since the legs coincide), pelvis pitch zero
        let mut q0 = DVector::zeros(model.dof());
        q0[1] = 0.85;
        let s0 = RobotState::new(q0, DVector::zeros(model.dof())).unwrap();
        let o0 = compute_actual_outputs(&model, &s0, WalkPhase::Ss(Side::Left)).unwrap();
        assert_relative_eq!(o0.y[idx::SWING_X], 0.0, epsilon = 1e-12);
        assert_relative_eq!(o0.y[idx::PELVIS_PITCH], 0.0);
    }

    #[test]
    fn output_jacobian_matches_finite_differences() {
        let model = reference_biped();
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let mut q = DVector::from_fn(model.dof(), |_, _| rng.gen_range(-0.3..0.3));
        q[1] += 0.8;
        let v = DVector::zeros(model.dof());
        let eval = |q: &DVector<f64>| {
            let st = RobotState::new(q.clone(), v.clone()).unwrap();
            compute_actual_outputs(&model, &st, WalkPhase::Ss(Side::Right))
                .unwrap()
                .y
        };
        let state = RobotState::new(q.clone(), v.clone()).unwrap();
        let out = compute_actual_outputs(&model, &state, WalkPhase::Ss(Side::Right)).unwrap();
        let eps = 1e-6;
        for i in 0..model.dof() {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[i] += eps;
            qm[i] -= eps;
            let fd = (eval(&qp) - eval(&qm)) / (2.0 * eps);
            for r in 0..N_OUTPUTS_SS {
                assert!(
                    (out.j[(r, i)] - fd[r]).abs() < 1e-5,
                    "row {r} dof {i}: {} vs {}",
                    out.j[(r, i)],
                    fd[r]
                );
            }
        }
    }

    #[test]
    fn target_acceleration_formula() {
        let y = DVector::from_vec(vec![0.01]);
        let ydot = DVector::from_vec(vec![0.0]);
        let a = target_acceleration(&y, &ydot, &[100.0], &[20.0]);
        assert_relative_eq!(a[0], -1.0, epsilon = 1e-15);
        let zero = target_acceleration(
            &DVector::zeros(2),
            &DVector::zeros(2),
            &[100.0, 50.0],
            &[20.0, 10.0],
        );
        assert!(zero.amax() < 1e-15);
        // critically damped closed loop: s^2 + 20 s + 100 has a double root
        let disc: f64 = 20.0 * 20.0 - 4.0 * 100.0;
        assert_relative_eq!(disc, 0.0);
    }
}
