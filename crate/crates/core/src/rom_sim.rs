//! Closed-loop hybrid simulation at the reduced-order level.
//!
//! A LIP-family plant (with or without a double-support phase) is driven by
//! any planner. Flows are evaluated with the exact closed-form transition
//! matrices, so the only approximation in a matched planner/plant pairing is
//! floating-point rounding. Used for planner benchmarking.

use nalgebra::Vector3;

use crate::planner::{Planner, PlannerOutput, Side, VelocityCommand};
use crate::rom::{ds_flow, impact_update, ss_flow, zmp_transition, GaitTiming, LipParams, RomState};
use crate::{Error, Result};

/// What the plant does during double support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RomPlantKind {
    /// No DS phase: the stance switch fires at the end of every SS phase.
    SsOnly,
    /// Constant CoM velocity during DS (the H-LIP assumption).
    SsDsConstantVelocity,
    /// ZMP sweeps linearly from the old to the new pivot during DS
    /// (the flat-foot MLIP assumption).
    SsDsLinearZmp,
}

/// Plant configuration for a ROM-level run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RomPlantConfig {
    pub params: LipParams,
    pub timing: GaitTiming,
    pub kind: RomPlantKind,
    /// Trace/re-plan tick. Must satisfy `0 < dt <= t_ss / 10`.
    pub dt: f64,
}

impl RomPlantConfig {
    pub fn new(params: LipParams, timing: GaitTiming, kind: RomPlantKind, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt <= timing.t_ss / 10.0) {
            return Err(Error::InvalidParam(format!(
                "rom sim dt must be in (0, t_ss/10] = (0, {}], got {dt}",
                timing.t_ss / 10.0
            )));
        }
        if kind == RomPlantKind::SsOnly && timing.t_ds != 0.0 {
            return Err(Error::InvalidParam(
                "SS-only plant requires t_ds = 0 so planner and plant timing agree".into(),
            ));
        }
        Ok(Self {
            params,
            timing,
            kind,
            dt,
        })
    }
}

/// Piecewise-constant velocity command schedule. Entries are
/// `(activation time, command)` with strictly increasing times starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandProfile {
    entries: Vec<(f64, VelocityCommand)>,
}

impl CommandProfile {
    pub fn new(entries: Vec<(f64, VelocityCommand)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidParam("command profile is empty".into()));
        }
        if entries[0].0 != 0.0 {
            return Err(Error::InvalidParam(
                "command profile must start at t = 0".into(),
            ));
        }
        if entries.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidParam(
                "command profile times must be strictly increasing".into(),
            ));
        }
        Ok(Self { entries })
    }

    pub fn constant(cmd: VelocityCommand) -> Self {
        Self {
            entries: vec![(0.0, cmd)],
        }
    }

    pub fn at(&self, t: f64) -> &VelocityCommand {
        let mut current = &self.entries[0].1;
        for (start, cmd) in &self.entries {
            if t >= *start {
                current = cmd;
            } else {
                break;
            }
        }
        current
    }

    pub fn entries(&self) -> &[(f64, VelocityCommand)] {
        &self.entries
    }
}

/// Gait phase of the ROM plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RomPhase {
    Ss,
    Ds,
}

/// One trace sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RomTick {
    pub t: f64,
    pub phase: RomPhase,
    pub x: RomState,
    pub y: RomState,
    pub step_idx: usize,
}

/// Per-step record, written at each stance switch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RomStep {
    pub step_idx: usize,
    pub t_touchdown: f64,
    pub u_x: f64,
    pub u_y: f64,
    /// State at the end of the SS phase (the S2S discrete state).
    pub preimpact_x: RomState,
    pub preimpact_y: RomState,
    /// Mean world-frame CoM velocity over the step.
    pub v_mean_x: f64,
    pub v_mean_y: f64,
}

/// Full run log.
#[derive(Debug, Clone, PartialEq)]
pub struct RomTrace {
    pub ticks: Vec<RomTick>,
    pub steps: Vec<RomStep>,
    pub unstable: bool,
}

/// Per-axis plant state: the ROM state plus the world pivot location and the
/// ZMP coordinate (used only by the linear-ZMP plant).
#[derive(Debug, Clone, Copy)]
struct AxisState {
    x: RomState,
    pivot_world: f64,
    p_zmp: f64,
}

impl AxisState {
    fn com_world(&self) -> f64 {
        self.pivot_world + self.x.p
    }
}

fn flow_axis(cfg: &RomPlantConfig, s: &mut AxisState, phase: RomPhase, dt: f64, zmp_rate: f64) {
    match (phase, cfg.kind) {
        (RomPhase::Ss, RomPlantKind::SsDsLinearZmp) => {
            // ZMP held where it is; exact three-state flow
            let m = zmp_transition(&cfg.params, dt);
            let v = m * Vector3::new(s.x.p, s.x.l, s.p_zmp);
            s.x = RomState::new(v.x, v.y);
            s.p_zmp = v.z;
        }
        (RomPhase::Ss, _) => {
            s.x = ss_flow(&cfg.params, s.x, dt).expect("finite state");
        }
        (RomPhase::Ds, RomPlantKind::SsDsConstantVelocity) => {
            s.x = ds_flow(&cfg.params, s.x, dt).expect("finite state");
        }
        (RomPhase::Ds, RomPlantKind::SsDsLinearZmp) => {
            let m = zmp_transition(&cfg.params, dt);
            let forced = zmp_rate_response_local(&cfg.params, dt) * zmp_rate;
            let v = m * Vector3::new(s.x.p, s.x.l, s.p_zmp) + forced;
            s.x = RomState::new(v.x, v.y);
            s.p_zmp = v.z;
        }
        (RomPhase::Ds, RomPlantKind::SsOnly) => unreachable!("SS-only plant has no DS phase"),
    }
}

// same closed form as rom::zmp_rate_response, re-derived here to keep the
// plant self-contained over the public rom API
fn zmp_rate_response_local(params: &LipParams, dt: f64) -> Vector3<f64> {
    let l = params.lambda;
    let (s, c) = ((l * dt).sinh(), (l * dt).cosh());
    Vector3::new(dt - s / l, -params.z0 * (c - 1.0), dt)
}

/// Run a closed-loop ROM simulation for `n_steps` stance switches.
///
/// SS and DS phases alternate on the fixed gait schedule. The planner is
/// queried every tick during SS; the final commanded placement is committed
/// at the SS-to-DS transition (touchdown) and the stance switch re-anchors
/// the state at the end of DS. Divergence (state norm above 1e3) stops the
/// run and tags the trace unstable.
pub fn run_rom_sim(
    plant: &RomPlantConfig,
    planner: &Planner,
    profile: &CommandProfile,
    n_steps: usize,
) -> Result<RomTrace> {
    if n_steps == 0 {
        return Err(Error::InvalidParam("n_steps must be >= 1".into()));
    }
    if planner.timing != plant.timing || planner.params != plant.params {
        return Err(Error::InvalidParam(
            "planner and plant must share LipParams and GaitTiming".into(),
        ));
    }

    let mut ax = AxisState {
        x: RomState::default(),
        pivot_world: 0.0,
        p_zmp: 0.0,
    };
    let mut ay = AxisState {
        x: RomState::default(),
        pivot_world: 0.0,
        p_zmp: 0.0,
    };
    let mut stance = Side::Left;
    let mut t = 0.0;
    let mut trace = RomTrace {
        ticks: Vec::new(),
        steps: Vec::new(),
        unstable: false,
    };
    let mut com_x_at_last_step = ax.com_world();
    let mut com_y_at_last_step = ay.com_world();

    'steps: for step_idx in 0..n_steps {
        // --- single support ---
        let mut t_in = 0.0;
        let mut last_plan: Option<PlannerOutput> = None;
        while t_in < plant.timing.t_ss - 1e-12 {
            let cmd = profile.at(t);
            let out = planner.plan(ax.x, ay.x, t_in, stance, cmd)?;
            last_plan = Some(out);
            trace.ticks.push(RomTick {
                t,
                phase: RomPhase::Ss,
                x: ax.x,
                y: ay.x,
                step_idx,
            });
            let dt = plant.dt.min(plant.timing.t_ss - t_in);
            flow_axis(plant, &mut ax, RomPhase::Ss, dt, 0.0);
            flow_axis(plant, &mut ay, RomPhase::Ss, dt, 0.0);
            t += dt;
            t_in += dt;
            if state_diverged(&ax, &ay) {
                trace.unstable = true;
                break 'steps;
            }
        }
        let committed = last_plan.expect("at least one SS tick");
        let preimpact_x = ax.x;
        let preimpact_y = ay.x;

        // --- double support (foot already placed at u_sw) ---
        if plant.kind != RomPlantKind::SsOnly && plant.timing.t_ds > 0.0 {
            let rate_x = committed.u_sw_x / plant.timing.t_ds;
            let rate_y = committed.u_sw_y / plant.timing.t_ds;
            let mut t_ds_in = 0.0;
            while t_ds_in < plant.timing.t_ds - 1e-12 {
                trace.ticks.push(RomTick {
                    t,
                    phase: RomPhase::Ds,
                    x: ax.x,
                    y: ay.x,
                    step_idx,
                });
                let dt = plant.dt.min(plant.timing.t_ds - t_ds_in);
                flow_axis(plant, &mut ax, RomPhase::Ds, dt, rate_x);
                flow_axis(plant, &mut ay, RomPhase::Ds, dt, rate_y);
                t += dt;
                t_ds_in += dt;
                if state_diverged(&ax, &ay) {
                    trace.unstable = true;
                    break 'steps;
                }
            }
        }

        // --- stance switch ---
        ax.x = impact_update(ax.x, committed.u_sw_x);
        ay.x = impact_update(ay.x, committed.u_sw_y);
        ax.p_zmp -= committed.u_sw_x;
        ay.p_zmp -= committed.u_sw_y;
        ax.pivot_world += committed.u_sw_x;
        ay.pivot_world += committed.u_sw_y;
        stance = stance.other();

        let period = plant.timing.step_period();
        trace.steps.push(RomStep {
            step_idx,
            t_touchdown: t,
            u_x: committed.u_sw_x,
            u_y: committed.u_sw_y,
            preimpact_x,
            preimpact_y,
            v_mean_x: (ax.com_world() - com_x_at_last_step) / period,
            v_mean_y: (ay.com_world() - com_y_at_last_step) / period,
        });
        com_x_at_last_step = ax.com_world();
        com_y_at_last_step = ay.com_world();
    }

    Ok(trace)
}

fn state_diverged(ax: &AxisState, ay: &AxisState) -> bool {
    let norm = (ax.x.p.powi(2) + ax.x.l.powi(2) + ay.x.p.powi(2) + ay.x.l.powi(2)).sqrt();
    !norm.is_finite() || norm > 1e3
}

/// Per-step velocity tracking metrics for a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    pub step_idx: usize,
    pub v_error_x: f64,
    pub v_error_y: f64,
}

/// Summary table computed from a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct RomMetrics {
    pub per_step: Vec<StepMetrics>,
    /// First step index after which every later x-velocity error stays below
    /// the settling tolerance, if any.
    pub settling_step: Option<usize>,
    pub settling_tol: f64,
    pub stable: bool,
}

/// Per-step velocity error against the active command and a settling count.
pub fn stepwise_metrics(trace: &RomTrace, profile: &CommandProfile) -> Result<RomMetrics> {
    if trace.ticks.is_empty() {
        return Err(Error::InvalidParam("empty trace".into()));
    }
    let per_step: Vec<StepMetrics> = trace
        .steps
        .iter()
        .map(|s| {
            let cmd = profile.at(s.t_touchdown);
            StepMetrics {
                step_idx: s.step_idx,
                v_error_x: s.v_mean_x - cmd.v_x_des,
                v_error_y: s.v_mean_y - cmd.v_y_des,
            }
        })
        .collect();
    let settling_tol = 1e-8;
    let settling_step = per_step
        .iter()
        .position(|m| {
            per_step[m.step_idx..]
                .iter()
                .all(|later| later.v_error_x.abs() <= settling_tol)
        })
        .map(|i| per_step[i].step_idx);
    Ok(RomMetrics {
        per_step,
        settling_step,
        settling_tol,
        stable: !trace.unstable,
    })
}
