//! Full-pipeline planar walking simulation: time-scheduled controller state
//! machine, constrained forward dynamics with Baumgarte stabilization,
//! plastic impact maps at touchdown, and closed-loop execution of
//! planner + output embedding + whole-body controller.

use nalgebra::{DMatrix, DVector};

use crate::contact::{build_constraints, ConstraintSet, ContactMode};
use crate::outputs::{
    build_desired_outputs, build_task_set, compute_actual_outputs, idx, take_liftoff_snapshot,
    LiftoffSnapshot, OutputSpec, WalkPhase, N_OUTPUTS_SS,
};
use crate::planner::{Planner, PlannerConfig, PlannerOutput, Side};
use crate::rom::{GaitTiming, LipParams, RomState};
use crate::rom_sim::CommandProfile;
use crate::rigid_body::{
    bias_forces, com_position, forward_dynamics_unconstrained, mass_matrix,
    normalized_angular_momentum, PlanarModel, RobotState,
};
use crate::wbc::{
    gravity_feedforward, inverse_dynamics, pd_with_feedforward, pos_ik, tsc_qp, vel_ik,
    SolverLimits,
};
use crate::{Error, Result};

/// Which low-level controller closes the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    TscQp,
    Id,
    VelIk,
    PosIk,
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ControllerKind::TscQp => "tsc-qp",
            ControllerKind::Id => "id",
            ControllerKind::VelIk => "vel-ik",
            ControllerKind::PosIk => "pos-ik",
        };
        f.write_str(s)
    }
}

/// Baumgarte stabilization gains on the contact constraints:
/// `J qdd = -Jdot v - alpha (J v) - beta (position drift)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Baumgarte {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for Baumgarte {
    fn default() -> Self {
        // critically damped pair at alpha = 50 1/s
        Self {
            alpha: 50.0,
            beta: 625.0,
        }
    }
}

/// Joint PD gains used by the IK controllers' position loops.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPd {
    pub k_p: DVector<f64>,
    pub k_d: DVector<f64>,
}

impl JointPd {
    pub fn uniform(m: usize, k_p: f64, k_d: f64) -> Self {
        Self {
            k_p: DVector::from_element(m, k_p),
            k_d: DVector::from_element(m, k_d),
        }
    }
}

/// Full simulation configuration.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub lip: LipParams,
    pub timing: GaitTiming,
    pub planner: PlannerConfig,
    pub outputs: OutputSpec,
    pub controller: ControllerKind,
    pub limits: SolverLimits,
    pub joint_pd: JointPd,
    pub mu: f64,
    pub baumgarte: Baumgarte,
    pub command: CommandProfile,
    pub dt_sim: f64,
    pub dt_ctrl: f64,
    pub duration: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_sim > 0.0 && self.dt_ctrl >= self.dt_sim && self.duration > 0.0) {
            return Err(Error::InvalidParam(
                "need 0 < dt_sim <= dt_ctrl and duration > 0".into(),
            ));
        }
        self.outputs.validate()?;
        if self.mu <= 0.0 {
            return Err(Error::InvalidParam("mu must be positive".into()));
        }
        Ok(())
    }
}

/// One control-tick record. Output vectors always carry the SS layout; the
/// swing entries are NaN during double support.
#[derive(Debug, Clone)]
pub struct SimTick {
    pub t: f64,
    pub phase: WalkPhase,
    pub q: DVector<f64>,
    pub v: DVector<f64>,
    pub y_a: [f64; N_OUTPUTS_SS],
    pub y_d: [f64; N_OUTPUTS_SS],
    pub tau: DVector<f64>,
    /// Stacked contact point forces, padded with zeros to 8 entries.
    pub forces: [f64; 8],
    pub rom: RomState,
    pub u_commanded: f64,
}

/// Per-step record written at each touchdown.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    pub step_idx: usize,
    pub t_touchdown: f64,
    pub u_commanded: f64,
    pub u_realized: f64,
    pub preimpact_rom: RomState,
    pub v_mean_x: f64,
}

/// Full run log with summary metrics.
#[derive(Debug, Clone)]
pub struct SimTrace {
    pub ticks: Vec<SimTick>,
    pub steps: Vec<StepRecord>,
    /// Time of the fall, if the run terminated early.
    pub fell_at: Option<f64>,
    pub controller: ControllerKind,
}

impl SimTrace {
    /// RMS tracking error of one output over its active (non-NaN) ticks.
    pub fn rms_output_error(&self, output: usize) -> f64 {
        let mut acc = 0.0;
        let mut n = 0usize;
        for tick in &self.ticks {
            let e = tick.y_a[output] - tick.y_d[output];
            if e.is_finite() {
                acc += e * e;
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            (acc / n as f64).sqrt()
        }
    }
}

/// Result of a constrained forward-dynamics solve.
#[derive(Debug, Clone)]
pub struct ConstrainedDynamics {
    pub qdd: DVector<f64>,
    pub forces: DVector<f64>,
    /// Constraint redundancy forced a least-squares force resolution.
    pub degraded: bool,
}

/// Solve the contact-constrained equation of motion
/// `[D, -J'; J, 0] [qdd; f] = [B tau - H; rhs_c]` with the Baumgarte-
/// stabilized constraint right-hand side. Redundant (rank-deficient)
/// constraint stacks are handled by a null-space solve with minimum-norm
/// forces.
pub fn constrained_forward_dynamics(
    model: &PlanarModel,
    state: &RobotState,
    tau_actuated: &DVector<f64>,
    constraints: &ConstraintSet,
    stab: &Baumgarte,
    position_error: Option<&DVector<f64>>,
) -> Result<ConstrainedDynamics> {
    if constraints.is_empty() {
        return Ok(ConstrainedDynamics {
            qdd: forward_dynamics_unconstrained(model, &state.q, &state.v, tau_actuated),
            forces: DVector::zeros(0),
            degraded: false,
        });
    }
    let n = model.dof();
    let h = constraints.h();
    let d = mass_matrix(model, &state.q);
    let bias = bias_forces(model, &state.q, &state.v);
    let mut rhs_force = -bias;
    for (col, dof) in model.actuated_dofs().iter().enumerate() {
        rhs_force[*dof] += tau_actuated[col];
    }

    let mut rhs_c = -&constraints.jdot_v - (&constraints.j * &state.v) * stab.alpha;
    if let Some(err) = position_error {
        rhs_c -= err * stab.beta;
    }

    // minimum-norm particular solution of J qdd = rhs_c plus the null space
    let svd = constraints.j.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = 1e-10 * smax.max(1.0);
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
    let degraded = rank < h;
    let qdd_p = svd
        .clone()
        .solve(&rhs_c, tol)
        .map_err(|m| Error::InvalidParam(m.into()))?;

    let z = nullspace_basis(&svd, n, rank)?;
    let qdd = if z.ncols() == 0 {
        qdd_p
    } else {
        let h_red = z.transpose() * &d * &z;
        let g_red = z.transpose() * (&d * &qdd_p - &rhs_force);
        let chol = h_red
            .cholesky()
            .ok_or_else(|| Error::InvalidParam("singular reduced inertia".into()))?;
        let y = -chol.solve(&g_red);
        &qdd_p + z * y
    };

    // minimum-norm forces matching the dynamics residual
    let resid = &d * &qdd - &rhs_force;
    let jt = constraints.j.transpose();
    let jt_svd = jt.svd(true, true);
    let forces = jt_svd
        .solve(&resid, tol)
        .map_err(|m| Error::InvalidParam(m.into()))?;

    Ok(ConstrainedDynamics {
        qdd,
        forces,
        degraded,
    })
}

/// Orthonormal basis of the null space of a matrix from its SVD (computed
/// via the projector; nalgebra's thin SVD lacks the trailing right singular
/// vectors).
fn nullspace_basis(
    svd: &nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>,
    n: usize,
    rank: usize,
) -> Result<DMatrix<f64>> {
    let null_dim = n - rank;
    if null_dim == 0 {
        return Ok(DMatrix::zeros(n, 0));
    }
    let v_t = svd.v_t.as_ref().expect("svd with vectors");
    // projector onto the row space: P = sum_{i<rank} v_i v_i'
    let mut p = DMatrix::identity(n, n);
    for i in 0..rank {
        let vi = v_t.row(i).transpose();
        p -= &vi * vi.transpose();
    }
    let eig = nalgebra::SymmetricEigen::new(p);
    let mut z = DMatrix::zeros(n, null_dim);
    let mut col = 0;
    for i in 0..n {
        if eig.eigenvalues[i] > 0.5 {
            if col == null_dim {
                return Err(Error::InvalidParam("null-space extraction failed".into()));
            }
            z.set_column(col, &eig.eigenvectors.column(i));
            col += 1;
        }
    }
    if col != null_dim {
        return Err(Error::InvalidParam("null-space extraction failed".into()));
    }
    Ok(z)
}

/// Plastic impact: projects the velocity onto the constraint manifold of the
/// newly active contacts, `min (v+ - v-)' D (v+ - v-)` s.t. `J v+ = 0`.
/// Returns the post-impact velocity and the impulses.
pub fn impact_map(
    model: &PlanarModel,
    state_pre: &RobotState,
    new_constraints: &ConstraintSet,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if new_constraints.is_empty() {
        return Ok((state_pre.v.clone(), DVector::zeros(0)));
    }
    let d = mass_matrix(model, &state_pre.q);
    let chol = d
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidParam("singular mass matrix".into()))?;
    let j = &new_constraints.j;
    let d_inv_jt = chol.solve(&j.transpose());
    let delassus = j * &d_inv_jt;
    let jv = j * &state_pre.v;

    let svd = delassus.svd(true, true);
    let tol = 1e-10 * svd.singular_values.max().max(1.0);
    let lambda = -svd
        .solve(&jv, tol)
        .map_err(|m| Error::InvalidParam(m.into()))?;
    let v_plus = &state_pre.v + d_inv_jt * &lambda;
    Ok((v_plus, lambda))
}

// ---------------------------------------------------------------------------
// standing pose construction
// ---------------------------------------------------------------------------

/// Two-link leg IK: joint angles `(q_hip, q_knee)` placing the ankle at
/// `target` relative to the hip (knee-backward branch).
pub fn leg_ik(l1: f64, l2: f64, target: crate::planar::Vec2) -> Result<(f64, f64)> {
    let r = target.norm();
    if r > l1 + l2 - 1e-9 || r < (l1 - l2).abs() + 1e-9 {
        return Err(Error::InvalidParam(format!(
            "leg target at distance {r} unreachable for links {l1}, {l2}"
        )));
    }
    let cos_gamma = ((l1 * l1 + l2 * l2 - r * r) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let gamma = cos_gamma.acos();
    let q_knee = -(std::f64::consts::PI - gamma);
    let psi = f64::atan2(-target.x, -target.y);
    let cos_beta = ((l1 * l1 + r * r - l2 * l2) / (2.0 * l1 * r)).clamp(-1.0, 1.0);
    let q_hip = psi + cos_beta.acos();
    Ok((q_hip, q_knee))
}

/// Build a flat-footed standing configuration with the ankles at the given
/// x offsets (soles on the ground) and the whole-model CoM height at `z_com`.
pub fn standing_pose(model: &PlanarModel, z_com: f64, ankle_x: [f64; 2]) -> Result<DVector<f64>> {
    let feet = model
        .feet
        .ok_or_else(|| Error::Model("model declares no feet".into()))?;
    // thigh/shank lengths from the joint anchors
    let l_thigh = model.links[model.links[feet.left].parent.unwrap()]
        .joint_pos
        .norm()
        .max(1e-9);
    // joint_pos of the shank link is the thigh length; of the foot link the shank length
    let shank_idx = model.links[feet.left].parent.unwrap();
    let l1 = model.links[shank_idx].joint_pos.norm();
    let l2 = model.links[feet.left].joint_pos.norm();
    let _ = l_thigh;
    let ankle_z = feet.geom.sole_drop;

    let build = |hip_z: f64| -> Result<DVector<f64>> {
        let mut q = DVector::zeros(model.dof());
        q[1] = hip_z;
        for (side, ax) in [(Side::Left, ankle_x[0]), (Side::Right, ankle_x[1])] {
            let foot = match side {
                Side::Left => feet.left,
                Side::Right => feet.right,
            };
            let shank = model.links[foot].parent.unwrap();
            let thigh = model.links[shank].parent.unwrap();
            let target = crate::planar::Vec2::new(ax - 0.0, ankle_z - hip_z);
            let (q_hip, q_knee) = leg_ik(l1, l2, target)?;
            q[model.joint_dof(thigh)] = q_hip;
            q[model.joint_dof(shank)] = q_knee;
            q[model.joint_dof(foot)] = -(q_hip + q_knee);
        }
        Ok(q)
    };

    // bisect the hip height for the requested CoM height
    let mut lo = 0.4 * (l1 + l2);
    let mut hi = 0.995 * (l1 + l2) + ankle_z;
    let com_err = |hip_z: f64| -> Result<f64> {
        let q = build(hip_z)?;
        let kin = model.kinematics(&q);
        Ok(com_position(model, &kin).y - z_com)
    };
    if com_err(lo)? > 0.0 || com_err(hi)? < 0.0 {
        return Err(Error::InvalidParam(format!(
            "z_com {z_com} unreachable by the leg geometry"
        )));
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if com_err(mid)? > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    build(0.5 * (lo + hi))
}

// ---------------------------------------------------------------------------
// the walking pipeline
// ---------------------------------------------------------------------------

struct PhaseState {
    phase: WalkPhase,
    t_in_phase: f64,
    snapshot: LiftoffSnapshot,
    /// World x anchors of the active contact points (Baumgarte targets).
    anchors_x: Vec<f64>,
    step_idx: usize,
}

fn contact_mode_for(phase: WalkPhase, t_ds: f64) -> ContactMode {
    match phase {
        WalkPhase::Ss(Side::Left) => ContactMode::single_support(true),
        WalkPhase::Ss(Side::Right) => ContactMode::single_support(false),
        WalkPhase::Ds { .. } => {
            let _ = t_ds;
            ContactMode::double_support()
        }
    }
}

/// Sole-point world positions of both feet (left, right).
fn sole_positions(model: &PlanarModel, q: &DVector<f64>) -> (crate::planar::Vec2, crate::planar::Vec2) {
    let feet = model.feet.expect("feet");
    let kin = model.kinematics(q);
    let sole = feet.geom.ankle_sole();
    (
        kin.poses[feet.left].transform_point(sole),
        kin.poses[feet.right].transform_point(sole),
    )
}

/// ROM state estimate: CoM relative to the stance sole point, plus the
/// mass-normalized whole-body angular momentum about that point.
pub fn estimate_rom_state(model: &PlanarModel, state: &RobotState, stance: Side) -> RomState {
    let feet = model.feet.expect("feet");
    let body = match stance {
        Side::Left => feet.left,
        Side::Right => feet.right,
    };
    let kin = model.kinematics(&state.q);
    let pivot = kin.poses[body].transform_point(feet.geom.ankle_sole());
    let vel = model.velocities(&kin, &state.v);
    let com = com_position(model, &kin);
    RomState {
        p: com.x - pivot.x,
        l: normalized_angular_momentum(model, &kin, &vel, pivot),
    }
}

/// Run the closed-loop walking simulation.
pub fn run_walking(model: &PlanarModel, config: &SimConfig) -> Result<SimTrace> {
    config.validate()?;
    if model.feet.is_none() {
        return Err(Error::Model("walking needs a biped model with feet".into()));
    }
    let planner = Planner::new(config.planner.clone(), config.lip, config.timing)?;
    let m = model.actuated_dofs().len();

    let q0 = standing_pose(model, config.outputs.z0, [0.0, 0.0])?;
    let mut state = RobotState::new(q0, DVector::zeros(model.dof()))?;

    let mut ps = PhaseState {
        phase: WalkPhase::Ss(Side::Left),
        t_in_phase: 0.0,
        snapshot: take_liftoff_snapshot(model, &state, Side::Left)?,
        anchors_x: Vec::new(),
        step_idx: 0,
    };
    let mut constraints = build_constraints(
        model,
        &state.q,
        &state.v,
        contact_mode_for(ps.phase, config.timing.t_ds),
        config.mu,
    )?;
    ps.anchors_x = constraints.points.iter().map(|p| p.world.x).collect();

    let mut trace = SimTrace {
        ticks: Vec::new(),
        steps: Vec::new(),
        fell_at: None,
        controller: config.controller,
    };
    let mut last_plan: Option<PlannerOutput> = None;
    let mut com_x_at_step = {
        let kin = model.kinematics(&state.q);
        com_position(model, &kin).x
    };

    let n_ticks = (config.duration / config.dt_ctrl).round() as usize;
    let substeps = (config.dt_ctrl / config.dt_sim).round().max(1.0) as usize;
    let dt_sub = config.dt_ctrl / substeps as f64;
    let mut t = 0.0;

    for _ in 0..n_ticks {
        // --- phase schedule ---
        let phase_duration = match ps.phase {
            WalkPhase::Ss(_) => config.timing.t_ss,
            WalkPhase::Ds { .. } => config.timing.t_ds,
        };
        if ps.t_in_phase >= phase_duration - 1e-9 {
            match ps.phase {
                WalkPhase::Ss(side) => {
                    // touchdown: record the step, then enter DS (or switch
                    // stance directly when t_ds = 0)
                    let committed = last_plan.map(|p| p.u_sw_x).unwrap_or(0.0);
                    let (left, right) = sole_positions(model, &state.q);
                    let (stance_pos, swing_pos) = match side {
                        Side::Left => (left, right),
                        Side::Right => (right, left),
                    };
                    let pre_rom = estimate_rom_state(model, &state, side);
                    let kin = model.kinematics(&state.q);
                    let com_x = com_position(model, &kin).x;
                    trace.steps.push(StepRecord {
                        step_idx: ps.step_idx,
                        t_touchdown: t,
                        u_commanded: committed,
                        u_realized: swing_pos.x - stance_pos.x,
                        preimpact_rom: pre_rom,
                        v_mean_x: (com_x - com_x_at_step) / config.timing.step_period(),
                    });
                    com_x_at_step = com_x;
                    ps.step_idx += 1;

                    ps.phase = if config.timing.t_ds > 0.0 {
                        WalkPhase::Ds { from: side }
                    } else {
                        WalkPhase::Ss(side.other())
                    };
                    ps.t_in_phase = 0.0;

                    // impact with the newly enlarged contact set
                    let new_mode = contact_mode_for(ps.phase, config.timing.t_ds);
                    let new_constraints =
                        build_constraints(model, &state.q, &state.v, new_mode, config.mu)?;
                    let (v_plus, _impulse) = impact_map(model, &state, &new_constraints)?;
                    state.v = v_plus;
                    constraints = new_constraints;
                    // Baumgarte z targets are the ground; x anchors where the
                    // points actually landed
                    ps.anchors_x = constraints.points.iter().map(|p| p.world.x).collect();
                    if let WalkPhase::Ss(new_side) = ps.phase {
                        ps.snapshot = take_liftoff_snapshot(model, &state, new_side)?;
                    }
                }
                WalkPhase::Ds { from } => {
                    // lift-off: shrink the contact set, no impact
                    ps.phase = WalkPhase::Ss(from.other());
                    ps.t_in_phase = 0.0;
                    let new_mode = contact_mode_for(ps.phase, config.timing.t_ds);
                    constraints =
                        build_constraints(model, &state.q, &state.v, new_mode, config.mu)?;
                    ps.anchors_x = constraints.points.iter().map(|p| p.world.x).collect();
                    ps.snapshot = take_liftoff_snapshot(model, &state, from.other())?;
                }
            }
        }

        // --- estimate, plan, embed ---
        let cmd = config.command.at(t);
        let rom_pivot_side = match ps.phase {
            WalkPhase::Ss(s) => s,
            WalkPhase::Ds { from } => from,
        };
        let rom = estimate_rom_state(model, &state, rom_pivot_side);
        if ps.phase.is_ss() {
            let out = planner.plan(
                rom,
                RomState::default(),
                ps.t_in_phase.min(config.timing.t_ss),
                rom_pivot_side,
                cmd,
            )?;
            last_plan = Some(out);
        }
        let plan = last_plan.expect("ss runs first");
        let desired = build_desired_outputs(
            &plan,
            ps.phase,
            ps.t_in_phase,
            phase_duration,
            &config.outputs,
            &ps.snapshot,
        );

        // refresh constraint kinematics at the control rate
        constraints = build_constraints(
            model,
            &state.q,
            &state.v,
            contact_mode_for(ps.phase, config.timing.t_ds),
            config.mu,
        )?;
        let actual = compute_actual_outputs(model, &state, ps.phase)?;
        let tasks = build_task_set(&actual, &desired, &config.outputs);

        // --- controller ---
        let tau = match config.controller {
            ControllerKind::TscQp => {
                tsc_qp(model, &state, &tasks, &constraints, &config.limits)?
                    .0
                    .tau
            }
            ControllerKind::Id => {
                inverse_dynamics(model, &state, &tasks, &constraints, &config.limits)?
                    .0
                    .tau
            }
            ControllerKind::VelIk | ControllerKind::PosIk => {
                let ik = if config.controller == ControllerKind::VelIk {
                    vel_ik(model, &state, &tasks, &constraints, &config.limits)?
                } else {
                    pos_ik(
                        model,
                        &state,
                        &desired,
                        ps.phase,
                        contact_mode_for(ps.phase, config.timing.t_ds),
                        config.mu,
                        &config.limits,
                    )?
                };
                let tau_ff = gravity_feedforward(model, &state, &constraints, &config.limits)?;
                let dofs = model.actuated_dofs();
                let q_m = DVector::from_iterator(m, dofs.iter().map(|d| state.q[*d]));
                let v_m = DVector::from_iterator(m, dofs.iter().map(|d| state.v[*d]));
                let tau = pd_with_feedforward(
                    &config.joint_pd.k_p,
                    &config.joint_pd.k_d,
                    &ik.q_m_des,
                    &ik.v_m_des,
                    &q_m,
                    &v_m,
                    &tau_ff,
                );
                // respect the torque limits the dynamics controllers obey
                DVector::from_fn(m, |i, _| {
                    tau[i].clamp(config.limits.tau_lb[i], config.limits.tau_ub[i])
                })
            }
        };

        // --- log ---
        let mut y_a = [f64::NAN; N_OUTPUTS_SS];
        let mut y_d = [f64::NAN; N_OUTPUTS_SS];
        for i in 0..actual.y.len() {
            y_a[i] = actual.y[i];
            y_d[i] = desired.y[i];
        }
        let mut forces_arr = [0.0; 8];
        trace.ticks.push(SimTick {
            t,
            phase: ps.phase,
            q: state.q.clone(),
            v: state.v.clone(),
            y_a,
            y_d,
            tau: tau.clone(),
            forces: forces_arr,
            rom,
            u_commanded: plan.u_sw_x,
        });

        // --- integrate with the command held ---
        let mut last_forces = DVector::zeros(constraints.h());
        for _ in 0..substeps {
            let sub_constraints =
                build_constraints(model, &state.q, &state.v, contact_mode_for(ps.phase, config.timing.t_ds), config.mu)?;
            let pos_err = DVector::from_fn(sub_constraints.h(), |row, _| {
                let point = &sub_constraints.points[row / 2];
                if row % 2 == 0 {
                    point.world.x - ps.anchors_x[row / 2]
                } else {
                    point.world.y
                }
            });
            let dyn_res = constrained_forward_dynamics(
                model,
                &state,
                &tau,
                &sub_constraints,
                &config.baumgarte,
                Some(&pos_err),
            )?;
            state.v += &dyn_res.qdd * dt_sub;
            state.q += &state.v * dt_sub;
            last_forces = dyn_res.forces;
        }
        for (i, f) in last_forces.iter().enumerate().take(8) {
            forces_arr[i] = *f;
        }
        if let Some(tick) = trace.ticks.last_mut() {
            tick.forces = forces_arr;
        }

        t += config.dt_ctrl;
        ps.t_in_phase += config.dt_ctrl;

        // --- fall detection ---
        let pelvis_z = state.q[1];
        if !(0.5 * config.outputs.z0..=1.5 * config.outputs.z0).contains(&pelvis_z)
            || !state.q.iter().all(|x| x.is_finite())
        {
            trace.fell_at = Some(t);
            break;
        }
    }
    Ok(trace)
}

/// Trapezoidal `int |y_a - y_d| dt` per output over `[t0, t1]`, skipping
/// samples where the output is inactive.
pub fn integrated_output_error(
    trace: &SimTrace,
    window: (f64, f64),
) -> Result<[f64; N_OUTPUTS_SS]> {
    let (t0, t1) = window;
    if trace.ticks.is_empty()
        || t1 <= t0
        || t0 < trace.ticks[0].t - 1e-9
        || t1 > trace.ticks.last().unwrap().t + 1e-9
    {
        return Err(Error::InvalidParam(format!(
            "window [{t0}, {t1}] outside the trace"
        )));
    }
    let mut acc = [0.0; N_OUTPUTS_SS];
    for pair in trace.ticks.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.t < t0 - 1e-12 || b.t > t1 + 1e-12 {
            continue;
        }
        let dt = b.t - a.t;
        for i in 0..N_OUTPUTS_SS {
            let ea = (a.y_a[i] - a.y_d[i]).abs();
            let eb = (b.y_a[i] - b.y_d[i]).abs();
            if ea.is_finite() && eb.is_finite() {
                acc[i] += 0.5 * (ea + eb) * dt;
            }
        }
    }
    Ok(acc)
}

/// Stepwise mean-velocity error against the command profile, per step.
pub fn step_velocity_errors(trace: &SimTrace, command: &CommandProfile) -> Vec<(usize, f64)> {
    trace
        .steps
        .iter()
        .map(|s| (s.step_idx, s.v_mean_x - command.at(s.t_touchdown).v_x_des))
        .collect()
}

/// Convenience accessor for tests: swing-height RMS during single support.
pub fn swing_height_rms(trace: &SimTrace) -> f64 {
    let mut acc = 0.0;
    let mut n = 0;
    for tick in &trace.ticks {
        if tick.phase.is_ss() {
            let e = tick.y_a[idx::SWING_Z] - tick.y_d[idx::SWING_Z];
            if e.is_finite() {
                acc += e * e;
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        (acc / n as f64).sqrt()
    }
}
