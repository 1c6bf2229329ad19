//! Whole-body controllers: task-space QP, projection inverse dynamics,
//! velocity IK, and position IK, sharing a dense QP solver and damped
//! pseudoinverse machinery.
//!
//! The dynamics-based controllers work on the condensed decision vector
//! `u = (tau, f)`: accelerations are eliminated through the equation of
//! motion, `qdd = D^-1 (B tau + J' f - H)`, which keeps the QP Hessian
//! positive definite and makes the no-inequality QP and the projection
//! inverse-dynamics solve the same optimization by construction.

pub mod qp;

use nalgebra::{DMatrix, DVector};

use crate::contact::{build_constraints, ConstraintSet, ContactMode};
use crate::outputs::{compute_actual_outputs, DesiredOutputs, TaskSet, WalkPhase};
use crate::rigid_body::{bias_forces, mass_matrix, PlanarModel, RobotState};
use crate::{Error, Result};

pub use qp::{solve_qp, KktResiduals, QpProblem, QpSolution};

/// How a command should be applied by the robot or simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandMode {
    /// Apply `tau` directly.
    Torque,
    /// Track `(q_m_des, v_m_des)` with a joint PD plus `tau_ff`.
    PositionLoop,
}

/// Low-level command for the actuated joints.
#[derive(Debug, Clone, PartialEq)]
pub struct TorqueCommand {
    pub tau: DVector<f64>,
    pub q_m_des: DVector<f64>,
    pub v_m_des: DVector<f64>,
    pub tau_ff: DVector<f64>,
    pub mode: CommandMode,
}

impl TorqueCommand {
    pub fn torque(tau: DVector<f64>) -> Self {
        let m = tau.len();
        Self {
            tau,
            q_m_des: DVector::zeros(m),
            v_m_des: DVector::zeros(m),
            tau_ff: DVector::zeros(m),
            mode: CommandMode::Torque,
        }
    }
}

/// Diagnostics of a dynamics-based controller solve.
#[derive(Debug, Clone)]
pub struct SolveInfo {
    pub qdd: DVector<f64>,
    pub forces: DVector<f64>,
    pub active_inequalities: Vec<usize>,
    /// Max-norm residual of `D qdd + H - B tau - J' f`.
    pub dynamics_residual: f64,
    pub kkt_max: f64,
    /// Rank deficiency or damping was encountered.
    pub degraded: bool,
}

/// Solver tolerances, torque limits, and pseudoinverse safeguards.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverLimits {
    pub tau_lb: DVector<f64>,
    pub tau_ub: DVector<f64>,
    pub qp_max_iter: usize,
    pub kkt_tol: f64,
    /// Tikhonov damping engaged when a pseudoinverse's smallest retained
    /// singular value falls below `sigma_min`.
    pub damping: f64,
    pub sigma_min: f64,
    pub ik_eps: f64,
    pub ik_max_iter: usize,
    /// Regularization on the torque / contact-force blocks, relative to the
    /// task Hessian scale.
    pub reg_tau: f64,
    pub reg_force: f64,
    /// Penalty weight for optional contact-inequality slack (None = hard).
    pub grf_slack_penalty: Option<f64>,
}

impl SolverLimits {
    pub fn new(n_actuated: usize, tau_max: f64) -> Result<Self> {
        if tau_max <= 0.0 {
            return Err(Error::InvalidParam("tau_max must be positive".into()));
        }
        Ok(Self {
            tau_lb: DVector::from_element(n_actuated, -tau_max),
            tau_ub: DVector::from_element(n_actuated, tau_max),
            qp_max_iter: 500,
            kkt_tol: 1e-8,
            damping: 1e-6,
            sigma_min: 1e-4,
            ik_eps: 1e-8,
            ik_max_iter: 50,
            reg_tau: 1e-8,
            reg_force: 1e-10,
            grf_slack_penalty: None,
        })
    }

    fn validate(&self) -> Result<()> {
        if self
            .tau_lb
            .iter()
            .zip(self.tau_ub.iter())
            .any(|(lo, hi)| lo >= hi)
        {
            return Err(Error::InvalidParam(
                "torque bounds must satisfy tau_lb < tau_ub".into(),
            ));
        }
        if self.kkt_tol <= 0.0 || self.ik_eps <= 0.0 {
            return Err(Error::InvalidParam("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Shared assembly of the condensed task-space problem, expressed in the
/// column-equilibrated variable `u_tilde = diag(1/cs) (tau, f)`. The
/// equilibration bounds the Hessian scale so the QP valley (the directions
/// the tasks leave free) is resolved identically by the active-set and
/// null-space solvers.
struct Condensed {
    /// `qdd = s_mat * u_tilde + s0` (s_mat already includes the scaling).
    s_mat: DMatrix<f64>,
    s0: DVector<f64>,
    /// Hessian and gradient of the (task + regularization) cost.
    h: DMatrix<f64>,
    g: DVector<f64>,
    /// Condensed holonomic equality `e u_tilde = d`.
    e: DMatrix<f64>,
    d: DVector<f64>,
    /// Column scales: physical `u = cs .* u_tilde`.
    cs: DVector<f64>,
    m: usize,
    h_rows: usize,
    d_mat: DMatrix<f64>,
    h_bias: DVector<f64>,
    /// Generalized-force map `[B, J']` in physical force units.
    bj: DMatrix<f64>,
}

fn condense(
    model: &PlanarModel,
    state: &RobotState,
    tasks: &TaskSet,
    constraints: &ConstraintSet,
    limits: &SolverLimits,
) -> Result<Condensed> {
    let n = model.dof();
    let m = model.actuated_dofs().len();
    let h_rows = constraints.h();
    let nu = m + h_rows;

    let d_mat = mass_matrix(model, &state.q);
    let h_bias = bias_forces(model, &state.q, &state.v);
    let b_mat = model.actuation_matrix();

    // generalized-force map [B, J'] and its D^-1 image
    let mut bj = DMatrix::zeros(n, nu);
    bj.view_mut((0, 0), (n, m)).copy_from(&b_mat);
    if h_rows > 0 {
        bj.view_mut((0, m), (n, h_rows))
            .copy_from(&constraints.j.transpose());
    }
    let d_chol = qp::spd_cholesky(d_mat.clone())?;
    let s_phys = d_chol.solve(&bj);
    let s0 = -d_chol.solve(&h_bias);

    // task residual in physical u: A u + c, weighted by Q
    let a_phys = &tasks.j_y * &s_phys;
    let c_task = &tasks.j_y * &s0 + &tasks.jdot_v - &tasks.y_tgt_ddot;
    let q_diag = DMatrix::from_diagonal(&tasks.weights);

    // column equilibration from the weighted task matrix
    let sqrt_q = DVector::from_fn(tasks.weights.len(), |i, _| tasks.weights[i].sqrt());
    let mut cs = DVector::from_element(nu, 1.0);
    let mut max_norm = 0.0_f64;
    let mut norms = vec![0.0; nu];
    for j in 0..nu {
        let mut acc = 0.0;
        for i in 0..a_phys.nrows() {
            let v = sqrt_q[i] * a_phys[(i, j)];
            acc += v * v;
        }
        norms[j] = acc.sqrt();
        max_norm = max_norm.max(norms[j]);
    }
    if max_norm > 0.0 {
        for j in 0..nu {
            cs[j] = 1.0 / norms[j].max(1e-8 * max_norm);
        }
    }

    let mut s_mat = s_phys;
    for j in 0..nu {
        for i in 0..n {
            s_mat[(i, j)] *= cs[j];
        }
    }
    let mut a_task = a_phys;
    for j in 0..nu {
        for i in 0..a_task.nrows() {
            a_task[(i, j)] *= cs[j];
        }
    }
    let mut h = a_task.transpose() * &q_diag * &a_task;
    let g = a_task.transpose() * (&q_diag * &c_task);

    for i in 0..m {
        h[(i, i)] += limits.reg_tau;
    }
    for i in m..nu {
        h[(i, i)] += limits.reg_force;
    }

    // holonomic constraint J qdd = -jdot_v condensed into u. The stacked
    // rows are rank deficient for flat feet (duplicate x-rows) and their
    // right-hand side carries integration noise in the deficient direction,
    // so project it onto the range of E to keep the equalities consistent.
    let (e, d) = if h_rows > 0 {
        let e = &constraints.j * &s_mat;
        let d_raw = -&constraints.jdot_v - &constraints.j * &s0;
        let svd = e.clone().svd(true, false);
        let tol = 1e-10 * svd.singular_values.max().max(1.0);
        let u_mat = svd.u.as_ref().expect("svd with u");
        let mut d = DVector::zeros(h_rows);
        for i in 0..svd.singular_values.len() {
            if svd.singular_values[i] > tol {
                let ui = u_mat.column(i);
                d += ui * ui.dot(&d_raw);
            }
        }
        if std::env::var("STRIDER_QP_TRACE").is_ok() {
            eprintln!("condense: sigma(E) = {:?}", svd.singular_values.as_slice());
            eprintln!("condense: |d_raw - d_proj| = {:.3e}", (&d_raw - &d).amax());
        }
        (e, d)
    } else {
        (DMatrix::zeros(0, nu), DVector::zeros(0))
    };

    Ok(Condensed {
        s_mat,
        s0,
        h: h * 2.0,
        g: g * 2.0,
        e,
        d,
        cs,
        m,
        h_rows,
        d_mat,
        h_bias,
        bj,
    })
}

fn reconstruct(
    con: &Condensed,
    u_tilde: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>, DVector<f64>, f64) {
    let u_phys = DVector::from_fn(u_tilde.len(), |i, _| con.cs[i] * u_tilde[i]);
    let tau = u_phys.rows(0, con.m).into_owned();
    let forces = u_phys.rows(con.m, con.h_rows).into_owned();
    let qdd = &con.s_mat * u_tilde + &con.s0;
    let resid = &con.d_mat * &qdd + &con.h_bias - &con.bj * &u_phys;
    (tau, forces, qdd, resid.amax())
}

/// Task-space control QP: minimizes the weighted task-acceleration error
/// over `(qdd, tau, f)` subject to the dynamics, the holonomic contact
/// constraints, contact-force feasibility, and torque limits.
pub fn tsc_qp(
    model: &PlanarModel,
    state: &RobotState,
    tasks: &TaskSet,
    constraints: &ConstraintSet,
    limits: &SolverLimits,
) -> Result<(TorqueCommand, SolveInfo)> {
    limits.validate()?;
    if constraints.is_empty() {
        return Err(Error::InvalidParam(
            "tsc_qp requires at least one active contact".into(),
        ));
    }
    let con = condense(model, state, tasks, constraints, limits)?;
    let nu = con.m + con.h_rows;

    // inequalities on the scaled variable: torque box + contact feasibility
    let n_grf = constraints.a_grf.nrows();
    let mut a_in = DMatrix::zeros(2 * con.m + n_grf, nu);
    let mut b_in = DVector::zeros(2 * con.m + n_grf);
    for i in 0..con.m {
        a_in[(i, i)] = con.cs[i];
        b_in[i] = limits.tau_ub[i];
        a_in[(con.m + i, i)] = -con.cs[i];
        b_in[con.m + i] = -limits.tau_lb[i];
    }
    for r in 0..n_grf {
        for c in 0..con.h_rows {
            a_in[(2 * con.m + r, con.m + c)] = constraints.a_grf[(r, c)] * con.cs[con.m + c];
        }
    }
    b_in.rows_mut(2 * con.m, n_grf).copy_from(&constraints.b_grf);

    let problem = QpProblem {
        h: con.h.clone(),
        g: con.g.clone(),
        a_eq: con.e.clone(),
        b_eq: con.d.clone(),
        a_in,
        b_in,
    };

    let sol = match solve_qp(&problem, limits.qp_max_iter, limits.kkt_tol) {
        Ok(sol) => sol,
        Err(Error::QpInfeasible { index, violation }) => {
            let Some(penalty) = limits.grf_slack_penalty else {
                return Err(Error::QpInfeasible { index, violation });
            };
            solve_with_grf_slack(&problem, con.m, penalty, limits)?
        }
        Err(e) => return Err(e),
    };

    let (tau, forces, qdd, dynamics_residual) = reconstruct(&con, &sol.x);
    // report only inequality activity on the original rows (ignore slack)
    let active_inequalities = sol
        .active_inequalities
        .iter()
        .copied()
        .filter(|i| *i < 2 * con.m + n_grf)
        .collect();
    Ok((
        TorqueCommand::torque(tau),
        SolveInfo {
            qdd,
            forces,
            active_inequalities,
            dynamics_residual,
            kkt_max: sol.kkt.max(),
            degraded: false,
        },
    ))
}

/// Re-solve with non-negative slack on the contact-force rows, penalized
/// quadratically; used only when the hard problem is infeasible.
fn solve_with_grf_slack(
    problem: &QpProblem,
    m: usize,
    penalty: f64,
    limits: &SolverLimits,
) -> Result<QpSolution> {
    let nu = problem.dim();
    let n_grf = problem.a_in.nrows() - 2 * m;
    let total = nu + n_grf;

    let mut h = DMatrix::zeros(total, total);
    h.view_mut((0, 0), (nu, nu)).copy_from(&problem.h);
    let scale = problem.h.amax().max(1.0);
    for i in 0..n_grf {
        h[(nu + i, nu + i)] = 2.0 * penalty * scale;
    }
    let mut g = DVector::zeros(total);
    g.rows_mut(0, nu).copy_from(&problem.g);

    let mut a_eq = DMatrix::zeros(problem.a_eq.nrows(), total);
    a_eq.view_mut((0, 0), (problem.a_eq.nrows(), nu))
        .copy_from(&problem.a_eq);

    // torque box unchanged; grf rows get -s; s >= 0
    let rows = problem.a_in.nrows() + n_grf;
    let mut a_in = DMatrix::zeros(rows, total);
    let mut b_in = DVector::zeros(rows);
    a_in.view_mut((0, 0), (problem.a_in.nrows(), nu))
        .copy_from(&problem.a_in);
    b_in.rows_mut(0, problem.a_in.nrows())
        .copy_from(&problem.b_in);
    for i in 0..n_grf {
        a_in[(2 * m + i, nu + i)] = -1.0;
        a_in[(problem.a_in.nrows() + i, nu + i)] = -1.0; // -s <= 0
    }

    let relaxed = QpProblem {
        h,
        g,
        a_eq,
        b_eq: problem.b_eq.clone(),
        a_in,
        b_in,
    };
    let mut sol = solve_qp(&relaxed, limits.qp_max_iter, limits.kkt_tol)?;
    sol.x = sol.x.rows(0, nu).into_owned();
    Ok(sol)
}

/// Projection inverse dynamics: the same task-space problem restricted to
/// its equality constraints, solved directly through a null-space
/// factorization of the constrained dynamics. Coincides with [`tsc_qp`]
/// whenever the QP reports no active inequality constraints.
pub fn inverse_dynamics(
    model: &PlanarModel,
    state: &RobotState,
    tasks: &TaskSet,
    constraints: &ConstraintSet,
    limits: &SolverLimits,
) -> Result<(TorqueCommand, SolveInfo)> {
    limits.validate()?;
    let con = condense(model, state, tasks, constraints, limits)?;
    let (u, degraded) = qp::solve_equality_qp(&con.h, &con.g, &con.e, &con.d)?;
    let (tau, forces, qdd, dynamics_residual) = reconstruct(&con, &u);
    Ok((
        TorqueCommand::torque(tau),
        SolveInfo {
            qdd,
            forces,
            active_inequalities: Vec::new(),
            dynamics_residual,
            kkt_max: 0.0,
            degraded,
        },
    ))
}

/// Contact-consistent gravity feedforward: the inverse-dynamics problem with
/// zero target acceleration, i.e. the minimum-norm `(tau, f)` realizing
/// `qdd = 0` at the current state.
pub fn gravity_feedforward(
    model: &PlanarModel,
    state: &RobotState,
    constraints: &ConstraintSet,
    limits: &SolverLimits,
) -> Result<DVector<f64>> {
    let n = model.dof();
    let m = model.actuated_dofs().len();
    let h_rows = constraints.h();
    let nu = m + h_rows;
    let h_bias = bias_forces(model, &state.q, &state.v);
    let b_mat = model.actuation_matrix();
    let mut bj = DMatrix::zeros(n, nu);
    bj.view_mut((0, 0), (n, m)).copy_from(&b_mat);
    if h_rows > 0 {
        bj.view_mut((0, m), (n, h_rows))
            .copy_from(&constraints.j.transpose());
    }
    let mut h = DMatrix::zeros(nu, nu);
    for i in 0..m {
        h[(i, i)] = 2.0 * limits.reg_tau;
    }
    for i in m..nu {
        h[(i, i)] = 2.0 * limits.reg_force;
    }
    let (u, _) = qp::solve_equality_qp(&h, &DVector::zeros(nu), &bj, &h_bias)?;
    Ok(u.rows(0, m).into_owned())
}

/// Truncated or damped pseudoinverse application `M^+ rhs`.
///
/// Damping switches on when the smallest retained singular value drops below
/// `sigma_min`; the boolean reports whether it engaged.
pub fn damped_pinv_apply(
    m: &DMatrix<f64>,
    rhs: &DVector<f64>,
    sigma_min: f64,
    damping: f64,
) -> (DVector<f64>, bool) {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let trunc_tol = 1e-12 * smax.max(1.0);
    let retained_min = svd
        .singular_values
        .iter()
        .copied()
        .filter(|s| *s > trunc_tol)
        .fold(f64::INFINITY, f64::min);
    let damped = retained_min < sigma_min;

    let u_t_b = svd.u.as_ref().unwrap().transpose() * rhs;
    let mut y = DVector::zeros(svd.singular_values.len());
    for i in 0..svd.singular_values.len() {
        let s = svd.singular_values[i];
        if s > trunc_tol {
            y[i] = if damped {
                s / (s * s + damping * damping) * u_t_b[i]
            } else {
                u_t_b[i] / s
            };
        }
    }
    (svd.v_t.as_ref().unwrap().transpose() * y, damped)
}

/// Null-space projector of a constraint Jacobian, `N = I - J^+ J`.
pub fn nullspace_projector(j_hol: &DMatrix<f64>) -> DMatrix<f64> {
    let n = j_hol.ncols();
    if j_hol.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let svd = j_hol.clone().svd(true, true);
    let tol = 1e-10 * svd.singular_values.max().max(1.0);
    let pinv = svd.pseudo_inverse(tol).expect("svd computed");
    DMatrix::identity(n, n) - pinv * j_hol
}

/// Velocity-IK result.
#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub q_des: DVector<f64>,
    pub v_des: DVector<f64>,
    /// Actuated sub-vectors, per the model's actuation selection.
    pub q_m_des: DVector<f64>,
    pub v_m_des: DVector<f64>,
    pub damped: bool,
    pub iterations: usize,
    pub converged: bool,
}

/// Velocity-based IK: one constraint-consistent least-squares step
/// `q_des = q + Jbar^+ (y_d - y_a)`, `v_des = Jbar^+ y_d_dot`, with
/// `Jbar = J_y (I - J_hol^+ J_hol)`.
pub fn vel_ik(
    model: &PlanarModel,
    state: &RobotState,
    tasks: &TaskSet,
    constraints: &ConstraintSet,
    limits: &SolverLimits,
) -> Result<IkSolution> {
    let n_proj = nullspace_projector(&constraints.j);
    let j_bar = &tasks.j_y * &n_proj;
    // y_err = y_a - y_d, the update drives toward y_d
    let (dq, damped1) = damped_pinv_apply(&j_bar, &(-&tasks.y_err), limits.sigma_min, limits.damping);
    let (v_des, damped2) =
        damped_pinv_apply(&j_bar, &tasks.y_des_dot, limits.sigma_min, limits.damping);
    let q_des = &state.q + dq;
    let dofs = model.actuated_dofs();
    Ok(IkSolution {
        q_m_des: DVector::from_iterator(dofs.len(), dofs.iter().map(|d| q_des[*d])),
        v_m_des: DVector::from_iterator(dofs.len(), dofs.iter().map(|d| v_des[*d])),
        q_des,
        v_des,
        damped: damped1 || damped2,
        iterations: 1,
        converged: true,
    })
}

/// Generic damped Newton iteration for position-level IK.
///
/// `eval(q)` returns the actual outputs `y_a(q)`, the task Jacobian, and the
/// holonomic Jacobian at `q`. Iterates
/// `q <- q + Jbar(q)^+ (y_d - y_a(q))` with residual-halving safeguarding
/// until `||y_d - y_a|| < eps` or the iteration cap.
pub fn newton_ik(
    mut eval: impl FnMut(&DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)>,
    q0: &DVector<f64>,
    y_d: &DVector<f64>,
    limits: &SolverLimits,
) -> Result<(DVector<f64>, usize, bool, bool)> {
    let mut q = q0.clone();
    let (y0, _, _) = eval(&q)?;
    let mut residual = (y_d - y0).norm();
    let mut any_damped = false;
    for iter in 0..limits.ik_max_iter {
        if residual < limits.ik_eps {
            return Ok((q, iter, true, any_damped));
        }
        let (y_a, j_y, j_hol) = eval(&q)?;
        let n_proj = nullspace_projector(&j_hol);
        let j_bar = &j_y * n_proj;
        let (step, damped) =
            damped_pinv_apply(&j_bar, &(y_d - &y_a), limits.sigma_min, limits.damping);
        any_damped |= damped;

        // reject residual growth by halving the step
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..25 {
            let q_try = &q + &step * alpha;
            let (y_try, _, _) = eval(&q_try)?;
            let r_try = (y_d - y_try).norm();
            if r_try < residual {
                q = q_try;
                residual = r_try;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Ok((q, iter + 1, residual < limits.ik_eps, any_damped));
        }
    }
    Ok((q, limits.ik_max_iter, residual < limits.ik_eps, any_damped))
}

/// Position-based IK for the walking outputs: Newton iteration on the
/// configuration, rebuilding outputs and contact Jacobians at each iterate,
/// then one velocity-IK step for consistent rates.
pub fn pos_ik(
    model: &PlanarModel,
    state: &RobotState,
    desired: &DesiredOutputs,
    phase: WalkPhase,
    mode: ContactMode,
    mu: f64,
    limits: &SolverLimits,
) -> Result<IkSolution> {
    let v_zero = DVector::zeros(model.dof());
    let eval = |q: &DVector<f64>| -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let st = RobotState {
            q: q.clone(),
            v: v_zero.clone(),
        };
        let out = compute_actual_outputs(model, &st, phase)?;
        let cons = build_constraints(model, q, &v_zero, mode, mu)?;
        Ok((out.y, out.j, cons.j))
    };
    let (q_des, iterations, converged, damped) = newton_ik(eval, &state.q, &desired.y, limits)?;

    // consistent velocities at the converged configuration
    let st = RobotState {
        q: q_des.clone(),
        v: state.v.clone(),
    };
    let out = compute_actual_outputs(model, &st, phase)?;
    let cons = build_constraints(model, &q_des, &state.v, mode, mu)?;
    let n_proj = nullspace_projector(&cons.j);
    let j_bar = &out.j * n_proj;
    let (v_des, damped2) =
        damped_pinv_apply(&j_bar, &desired.y_dot, limits.sigma_min, limits.damping);

    let dofs = model.actuated_dofs();
    Ok(IkSolution {
        q_m_des: DVector::from_iterator(dofs.len(), dofs.iter().map(|d| q_des[*d])),
        v_m_des: DVector::from_iterator(dofs.len(), dofs.iter().map(|d| v_des[*d])),
        q_des,
        v_des,
        damped: damped || damped2,
        iterations,
        converged,
    })
}

/// Joint-space PD with feedforward: `tau = tau_ff + Kp (q_d - q) + Kd (v_d - v)`.
pub fn pd_with_feedforward(
    k_p: &DVector<f64>,
    k_d: &DVector<f64>,
    q_m_des: &DVector<f64>,
    v_m_des: &DVector<f64>,
    q_m: &DVector<f64>,
    v_m: &DVector<f64>,
    tau_ff: &DVector<f64>,
) -> DVector<f64> {
    DVector::from_fn(q_m.len(), |i, _| {
        tau_ff[i] + k_p[i] * (q_m_des[i] - q_m[i]) + k_d[i] * (v_m_des[i] - v_m[i])
    })
}
