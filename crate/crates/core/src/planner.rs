//! Foot-placement laws and gain synthesis for the four step planners.
//!
//! Sagittal walking is a period-1 orbit; lateral walking alternates stance
//! sides and uses a period-2 orbit. All placements are expressed relative to
//! the current stance foot, so planner outputs are invariant under world
//! translations.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::rom::{
    self, dcm_transform, predict_preimpact, reduce_zmp, GaitTiming, LipParams, RomModel, RomState,
    S2SMap, ZmpPolicy,
};
use crate::{Error, Result};

/// Commanded walking velocity and nominal lateral stance separation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VelocityCommand {
    pub v_x_des: f64,
    pub v_y_des: f64,
    pub step_width: f64,
}

impl VelocityCommand {
    pub fn new(v_x_des: f64, v_y_des: f64, step_width: f64) -> Result<Self> {
        if step_width < 0.0 {
            return Err(Error::InvalidParam(format!(
                "step_width must be >= 0, got {step_width}"
            )));
        }
        Ok(Self {
            v_x_des,
            v_y_des,
            step_width,
        })
    }
}

/// Periodic orbit of an S2S map: pre-impact state and nominal step size.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub x_star: DVector<f64>,
    pub u_star: f64,
}

/// Feedback gain row for `u = K (x - x*) + u*`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackGain {
    pub k: RowDVector<f64>,
    pub kind: GainKind,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainKind {
    Deadbeat,
    Lqr,
    Custom,
}

/// Which stance leg the planner is currently standing on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// Planner result for one query: touchdown targets relative to the stance
/// foot, remaining single-support time, and the per-axis pre-impact
/// predictions they were computed from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerOutput {
    pub u_sw_x: f64,
    pub u_sw_y: f64,
    pub t_to_impact: f64,
    pub predicted_preimpact_x: RomState,
    pub predicted_preimpact_y: RomState,
}

/// Desired pre-impact angular momentum for a forward velocity command,
/// `L_des = z0 v_des`.
pub fn alip_desired_momentum(params: &LipParams, v_des: f64) -> f64 {
    params.z0 * v_des
}

/// Momentum-regulating foot placement.
///
/// Predicts the pre-impact state from the closed-form flow and places the
/// foot so that the momentum one further step ahead equals the target:
/// deadbeat for `alpha = 0`, or converging at rate `alpha` toward `L_des`.
pub fn alip_foot_placement(
    params: &LipParams,
    timing: &GaitTiming,
    x_now: RomState,
    t_in_step: f64,
    v_des: f64,
    alpha: f64,
) -> Result<f64> {
    if timing.t_ss <= 0.0 {
        return Err(Error::InvalidParam(
            "alip_foot_placement: T_ss = 0 makes the sinh denominator vanish".into(),
        ));
    }
    if !(0.0..=timing.t_ss + 1e-12).contains(&t_in_step) {
        return Err(Error::InvalidParam(format!(
            "t_in_step {} outside [0, {}]",
            t_in_step, timing.t_ss
        )));
    }
    let pre = predict_preimpact(params, x_now, (timing.t_ss - t_in_step).max(0.0))?;
    let l_des = alip_desired_momentum(params, v_des);
    let l_target = l_des + alpha * (pre.l - l_des);
    let lt = params.lambda * timing.t_ss;
    let denom = params.z0 * params.lambda * lt.sinh();
    Ok((denom * pre.p + lt.cosh() * pre.l - l_target) / denom)
}

/// Nominal step size and periodic state of an S2S map for a velocity command.
///
/// `u* = v_des (T_ss + T_ds)`, `x* = (I - A)^-1 B u*`.
pub fn fixed_point(map: &S2SMap, timing: &GaitTiming, v_des: f64) -> Result<FixedPoint> {
    let u_star = v_des * timing.step_period();
    let x_star = solve_i_minus_a(map, &(&map.b * u_star))?;
    let residual = (&x_star - map.step(&x_star, u_star)).amax();
    debug_assert!(residual < 1e-10, "fixed point residual {residual}");
    Ok(FixedPoint { x_star, u_star })
}

fn solve_i_minus_a(map: &S2SMap, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let n = map.dim();
    let i_minus_a = DMatrix::identity(n, n) - &map.a;
    let lu = i_minus_a.clone().lu();
    match lu.solve(rhs) {
        Some(x) if x.iter().all(|v| v.is_finite()) && (&i_minus_a * &x - rhs).amax() < 1e-8 => {
            Ok(x)
        }
        _ => Err(Error::Singular {
            context: format!("(I - A) for the {} S2S map", map.model),
            eigenvalue: 1.0,
        }),
    }
}

/// Deadbeat gain: places every closed-loop eigenvalue of `A + B K` at zero.
///
/// Scalar maps use `k = -a/b`; larger maps use Ackermann's formula with the
/// characteristic polynomial `s^n`.
pub fn deadbeat_gain(map: &S2SMap) -> Result<FeedbackGain> {
    let n = map.dim();
    let k = if n == 1 {
        let b = map.b[0];
        if b.abs() < 1e-14 {
            return Err(Error::Uncontrollable { rank: 0, dim: 1 });
        }
        RowDVector::from_element(1, -map.a[(0, 0)] / b)
    } else {
        // controllability matrix [B, AB, ..., A^{n-1}B]
        let mut ctrb = DMatrix::zeros(n, n);
        let mut col = map.b.clone();
        for j in 0..n {
            ctrb.set_column(j, &col);
            col = &map.a * col;
        }
        let svd = ctrb.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let rank = svd.singular_values.iter().filter(|s| **s > 1e-10 * smax).count();
        if rank < n {
            return Err(Error::Uncontrollable { rank, dim: n });
        }
        // Ackermann: K = -e_n^T C^-1 A^n (for u = +K x conventions)
        let mut a_pow = DMatrix::identity(n, n);
        for _ in 0..n {
            a_pow = &a_pow * &map.a;
        }
        let inv = ctrb
            .try_inverse()
            .ok_or(Error::Uncontrollable { rank, dim: n })?;
        let mut e_n = RowDVector::zeros(n);
        e_n[n - 1] = 1.0;
        -(e_n * inv * a_pow)
    };
    let gain = FeedbackGain {
        k,
        kind: GainKind::Deadbeat,
        alpha: 0.0,
    };
    debug_assert!(closed_loop_nilpotency(map, &gain) < 1e-8);
    Ok(gain)
}

/// Norm of `(A + B K)^n`; zero (to tolerance) for a deadbeat gain.
pub fn closed_loop_nilpotency(map: &S2SMap, gain: &FeedbackGain) -> f64 {
    let n = map.dim();
    let acl = &map.a + &map.b * &gain.k;
    let mut m = DMatrix::identity(n, n);
    for _ in 0..n {
        m = &m * &acl;
    }
    m.amax()
}

/// Discrete LQR gain from fixed-point iteration of the Riccati equation.
pub fn lqr_gain(map: &S2SMap, q_weight: &DVector<f64>, r_weight: f64) -> Result<FeedbackGain> {
    let n = map.dim();
    if q_weight.len() != n {
        return Err(Error::InvalidParam(format!(
            "LQR Q diagonal has length {}, map dimension is {}",
            q_weight.len(),
            n
        )));
    }
    if q_weight.iter().any(|q| *q < 0.0) || r_weight <= 0.0 {
        return Err(Error::InvalidParam(
            "LQR weights must satisfy Q >= 0, R > 0".into(),
        ));
    }
    let q = DMatrix::from_diagonal(q_weight);
    let a_t = map.a.transpose();
    let b = DMatrix::from_column_slice(n, 1, map.b.as_slice());
    let b_t = b.transpose();

    let mut p = q.clone();
    let max_iter = 10_000;
    let mut converged = false;
    for _ in 0..max_iter {
        let r_bpb = r_weight + (&b_t * &p * &b)[(0, 0)];
        let next = &a_t * &p * &map.a - (&a_t * &p * &b) * (&b_t * &p * &map.a) / r_bpb + &q;
        let delta = (&next - &p).amax();
        p = next;
        if delta < 1e-12 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::RiccatiNoConvergence(max_iter));
    }
    let r_bpb = r_weight + (&b_t * &p * &b)[(0, 0)];
    let k = -(&b_t * &p * &map.a) / r_bpb;
    Ok(FeedbackGain {
        k: RowDVector::from_row_slice(k.row(0).transpose().as_slice()),
        kind: GainKind::Lqr,
        alpha: 0.0,
    })
}

/// Riccati residual `|| P - (A'PA - A'PB (R + B'PB)^-1 B'PA + Q) ||` for a
/// candidate gain's value matrix; used by diagnostics.
pub fn dare_residual(map: &S2SMap, q_weight: &DVector<f64>, r_weight: f64, p: &DMatrix<f64>) -> f64 {
    let q = DMatrix::from_diagonal(q_weight);
    let n = map.dim();
    let b = DMatrix::from_column_slice(n, 1, map.b.as_slice());
    let a_t = map.a.transpose();
    let b_t = b.transpose();
    let r_bpb = r_weight + (&b_t * p * &b)[(0, 0)];
    let next = &a_t * p * &map.a - (&a_t * p * &b) * (&b_t * p * &map.a) / r_bpb + q;
    (p - next).amax()
}

/// Spectral radius of the closed loop `A + B K`.
pub fn closed_loop_spectral_radius(map: &S2SMap, gain: &FeedbackGain) -> f64 {
    let acl = &map.a + &map.b * &gain.k;
    acl.complex_eigenvalues().iter().map(|e| e.norm()).fold(0.0, f64::max)
}

/// The affine step-size law `u = K (x_hat - x*) + u*`.
pub fn step_feedback(fp: &FixedPoint, gain: &FeedbackGain, x_hat_preimpact: &DVector<f64>) -> f64 {
    (&gain.k * (x_hat_preimpact - &fp.x_star))[0] + fp.u_star
}

/// Period-2 lateral orbit: alternating nominal inputs with
/// `u_L + u_R = 2 v_y (T_ss + T_ds)` split symmetrically around
/// `+-step_width`. Returns the fixed point used in left stance first.
pub fn lateral_fixed_point(
    map: &S2SMap,
    timing: &GaitTiming,
    v_y_des: f64,
    step_width: f64,
) -> Result<(FixedPoint, FixedPoint)> {
    let drift = v_y_des * timing.step_period();
    let u_left = step_width + drift;
    let u_right = -step_width + drift;

    // two-step composition: x_L = A(A x_L + B u_L) + B u_R
    let n = map.dim();
    let a2 = &map.a * &map.a;
    let rhs_left = &map.a * (&map.b * u_left) + &map.b * u_right;
    let i_minus_a2 = DMatrix::identity(n, n) - &a2;
    let lu = i_minus_a2.clone().lu();
    let x_left = lu.solve(&rhs_left).ok_or(Error::Singular {
        context: format!("(I - A^2) for the {} lateral orbit", map.model),
        eigenvalue: 1.0,
    })?;
    if (&i_minus_a2 * &x_left - &rhs_left).amax() > 1e-8 {
        return Err(Error::Singular {
            context: format!("(I - A^2) for the {} lateral orbit", map.model),
            eigenvalue: 1.0,
        });
    }
    let x_right = map.step(&x_left, u_left);
    Ok((
        FixedPoint {
            x_star: x_left,
            u_star: u_left,
        },
        FixedPoint {
            x_star: x_right,
            u_star: u_right,
        },
    ))
}

/// Desired lateral pre-impact momentum for the momentum-regulating planner:
/// the period-2 orbit value plus the commanded drift term. The sign of the
/// width term alternates with the stance side.
pub fn alip_lateral_desired_momentum(
    params: &LipParams,
    timing: &GaitTiming,
    v_y_des: f64,
    step_width: f64,
    stance: Side,
) -> f64 {
    let lt = params.lambda * timing.t_ss;
    let orbit = params.z0 * params.lambda * step_width * lt.sinh() / (2.0 * (1.0 + lt.cosh()));
    let signed = match stance {
        Side::Left => orbit,
        Side::Right => -orbit,
    };
    params.z0 * v_y_des + signed
}

/// Planner configuration: model choice plus gain synthesis options.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PlannerConfig {
    pub kind: RomModel,
    pub gain: GainConfig,
    /// Convergence rate for the momentum planner (0 = deadbeat).
    #[serde(default)]
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GainConfig {
    Deadbeat,
    Lqr { q: Vec<f64>, r: f64 },
}

impl Default for GainConfig {
    fn default() -> Self {
        GainConfig::Deadbeat
    }
}

/// A fully synthesized planner. Construction computes the S2S map, feedback
/// gain, and the linear dependence of the fixed points on the command, so
/// every [`Planner::plan`] call is a pure function of its arguments.
#[derive(Debug, Clone)]
pub struct Planner {
    pub config: PlannerConfig,
    pub params: LipParams,
    pub timing: GaitTiming,
    /// Map used for synthesis (MLIP is reduced to its (p, L) block).
    pub map: Option<S2SMap>,
    pub gain: Option<FeedbackGain>,
    /// `x* / u*`: fixed point per unit nominal step.
    x_star_per_u: Option<DVector<f64>>,
    /// Lateral period-2 solves, linear in (u_L, u_R).
    lat_from_ul: Option<DVector<f64>>,
    lat_from_ur: Option<DVector<f64>>,
}

impl Planner {
    pub fn new(config: PlannerConfig, params: LipParams, timing: GaitTiming) -> Result<Self> {
        let map = match config.kind {
            RomModel::Alip => None,
            RomModel::Hlip => Some(rom::s2s_hlip(&params, &timing)),
            RomModel::Mlip => Some(reduce_zmp(&rom::s2s_mlip(
                &params,
                &timing,
                ZmpPolicy::FlatFoot,
            ))?),
            RomModel::Dcm => Some(rom::s2s_dcm(&params, &timing)),
        };
        let gain = match (&map, &config.gain) {
            (Some(m), GainConfig::Deadbeat) => Some(deadbeat_gain(m)?),
            (Some(m), GainConfig::Lqr { q, r }) => {
                Some(lqr_gain(m, &DVector::from_vec(q.clone()), *r)?)
            }
            (None, _) => None,
        };
        let (x_star_per_u, lat_from_ul, lat_from_ur) = match &map {
            Some(m) => {
                let unit = fixed_point(m, &timing, 1.0 / timing.step_period())?;
                let (from_ul, from_ur) = lateral_solve_columns(m)?;
                (Some(unit.x_star), Some(from_ul), Some(from_ur))
            }
            None => (None, None, None),
        };
        Ok(Self {
            config,
            params,
            timing,
            map,
            gain,
            x_star_per_u,
            lat_from_ul,
            lat_from_ur,
        })
    }

    /// Fixed point for a sagittal velocity command.
    pub fn sagittal_fixed_point(&self, v_des: f64) -> Option<FixedPoint> {
        let per_u = self.x_star_per_u.as_ref()?;
        let u_star = v_des * self.timing.step_period();
        Some(FixedPoint {
            x_star: per_u * u_star,
            u_star,
        })
    }

    /// Lateral period-2 fixed points for a command, left-stance first.
    pub fn lateral_fixed_points(&self, cmd: &VelocityCommand) -> Option<(FixedPoint, FixedPoint)> {
        let map = self.map.as_ref()?;
        let from_ul = self.lat_from_ul.as_ref()?;
        let from_ur = self.lat_from_ur.as_ref()?;
        let drift = cmd.v_y_des * self.timing.step_period();
        let u_left = cmd.step_width + drift;
        let u_right = -cmd.step_width + drift;
        let x_left = from_ul * u_left + from_ur * u_right;
        let x_right = map.step(&x_left, u_left);
        Some((
            FixedPoint {
                x_star: x_left,
                u_star: u_left,
            },
            FixedPoint {
                x_star: x_right,
                u_star: u_right,
            },
        ))
    }

    fn state_vector(&self, pre: RomState) -> DVector<f64> {
        match self.config.kind {
            RomModel::Dcm => {
                let (_, xi) = dcm_transform(&self.params, pre);
                DVector::from_element(1, xi)
            }
            _ => DVector::from_vec(vec![pre.p, pre.l]),
        }
    }

    /// Touchdown targets for the current state. `rom_x`/`rom_y` are the
    /// per-axis states at time `t_in_step` into the single-support phase;
    /// `stance` selects the lateral orbit branch.
    pub fn plan(
        &self,
        rom_x: RomState,
        rom_y: RomState,
        t_in_step: f64,
        stance: Side,
        cmd: &VelocityCommand,
    ) -> Result<PlannerOutput> {
        if !(0.0..=self.timing.t_ss + 1e-9).contains(&t_in_step) {
            return Err(Error::InvalidParam(format!(
                "t_in_step {} outside [0, {}]",
                t_in_step, self.timing.t_ss
            )));
        }
        let t_rem = (self.timing.t_ss - t_in_step).max(0.0);
        let pre_x = predict_preimpact(&self.params, rom_x, t_rem)?;
        let pre_y = predict_preimpact(&self.params, rom_y, t_rem)?;

        let u_sw_x = match self.config.kind {
            RomModel::Alip => alip_foot_placement(
                &self.params,
                &self.timing,
                rom_x,
                t_in_step,
                cmd.v_x_des,
                self.config.alpha,
            )?,
            _ => {
                let fp = self.sagittal_fixed_point(cmd.v_x_des).expect("map present");
                let gain = self.gain.as_ref().expect("gain present");
                step_feedback(&fp, gain, &self.state_vector(pre_x))
            }
        };

        let u_sw_y = match self.config.kind {
            RomModel::Alip => {
                let l_des = alip_lateral_desired_momentum(
                    &self.params,
                    &self.timing,
                    cmd.v_y_des,
                    cmd.step_width,
                    stance,
                );
                lateral_momentum_placement(&self.params, &self.timing, pre_y, l_des)
            }
            _ => {
                let (left, right) = self.lateral_fixed_points(cmd).expect("map present");
                let fp = match stance {
                    Side::Left => left,
                    Side::Right => right,
                };
                let gain = self.gain.as_ref().expect("gain present");
                step_feedback(&fp, gain, &self.state_vector(pre_y))
            }
        };

        Ok(PlannerOutput {
            u_sw_x,
            u_sw_y,
            t_to_impact: t_rem,
            predicted_preimpact_x: pre_x,
            predicted_preimpact_y: pre_y,
        })
    }
}

/// ALIP-style placement from an already-predicted pre-impact state toward a
/// target next-step momentum; the sign conventions match the sagittal law.
fn lateral_momentum_placement(
    params: &LipParams,
    timing: &GaitTiming,
    pre: RomState,
    l_target: f64,
) -> f64 {
    let lt = params.lambda * timing.t_ss;
    let denom = params.z0 * params.lambda * lt.sinh();
    (denom * pre.p + lt.cosh() * pre.l - l_target) / denom
}

/// Columns of the lateral period-2 solve: `x_L = (I - A^2)^-1 (A B u_L + B u_R)`,
/// returned as the `u_L` and `u_R` columns.
fn lateral_solve_columns(map: &S2SMap) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = map.dim();
    let a2 = &map.a * &map.a;
    let i_minus_a2 = DMatrix::identity(n, n) - &a2;
    let lu = i_minus_a2.lu();
    let err = || Error::Singular {
        context: format!("(I - A^2) for the {} lateral orbit", map.model),
        eigenvalue: 1.0,
    };
    let from_ur = lu.solve(&map.b).ok_or_else(err)?;
    let from_ul = lu.solve(&(&map.a * &map.b)).ok_or_else(err)?;
    Ok((from_ul, from_ur))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> LipParams {
        LipParams::new(0.8, 9.81).unwrap()
    }

    fn timing() -> GaitTiming {
        GaitTiming::new(0.35, 0.1).unwrap()
    }

    #[test]
    fn desired_momentum_is_linear() {
        let p = LipParams::new(1.0, 9.81).unwrap();
        assert_eq!(alip_desired_momentum(&p, 0.0), 0.0);
        assert_eq!(alip_desired_momentum(&p, 0.5), 0.5);
        assert_eq!(
            alip_desired_momentum(&p, 2.0 * 0.7),
            2.0 * alip_desired_momentum(&p, 0.7)
        );
    }

    #[test]
    fn alip_placement_zero_for_rest_command() {
        let u = alip_foot_placement(&params(), &timing(), RomState::default(), 0.0, 0.0, 0.0)
            .unwrap();
        assert_eq!(u, 0.0);
    }

    #[test]
    fn alip_rejects_zero_step_duration() {
        let bad = GaitTiming {
            t_ss: 0.0,
            t_ds: 0.0,
        };
        assert!(alip_foot_placement(&params(), &bad, RomState::default(), 0.0, 0.1, 0.0).is_err());
    }

    #[test]
    fn hlip_nominal_step_size() {
        let map = rom::s2s_hlip(&params(), &timing());
        let fp = fixed_point(&map, &timing(), 0.3).unwrap();
        assert_relative_eq!(fp.u_star, 0.135, epsilon = 1e-15);
        // one S2S step from x* with u* returns to x*
        let next = map.step(&fp.x_star, fp.u_star);
        assert!((next - &fp.x_star).amax() < 1e-10);
    }

    #[test]
    fn zero_command_gives_zero_fixed_point() {
        let map = rom::s2s_hlip(&params(), &timing());
        let fp = fixed_point(&map, &timing(), 0.0).unwrap();
        assert_eq!(fp.u_star, 0.0);
        assert!(fp.x_star.amax() < 1e-15);
    }

    #[test]
    fn dcm_fixed_point_matches_scalar_formula() {
        let map = rom::s2s_dcm(&params(), &timing());
        let fp = fixed_point(&map, &timing(), 0.4).unwrap();
        let expected = map.b[0] * fp.u_star / (1.0 - map.a[(0, 0)]);
        assert_relative_eq!(fp.x_star[0], expected, epsilon = 1e-12);
    }

    #[test]
    fn full_mlip_map_fixed_point_is_singular_at_one() {
        // the unreduced 3-state map conserves the ZMP coordinate, so (I - A)
        // carries an exact eigenvalue at 1
        let map = rom::s2s_mlip(&params(), &timing(), ZmpPolicy::FlatFoot);
        let err = fixed_point(&map, &timing(), 0.3).unwrap_err();
        match err {
            Error::Singular { eigenvalue, .. } => assert_eq!(eigenvalue, 1.0),
            other => panic!("expected singular error, got {other}"),
        }
    }

    #[test]
    fn scalar_deadbeat_gain() {
        let map = S2SMap::new(
            DMatrix::from_element(1, 1, 2.0),
            DVector::from_element(1, -1.0),
            RomModel::Dcm,
        )
        .unwrap();
        let g = deadbeat_gain(&map).unwrap();
        assert_relative_eq!(g.k[0], 2.0, epsilon = 1e-14);
        assert!(closed_loop_nilpotency(&map, &g) < 1e-14);
    }

    #[test]
    fn hlip_deadbeat_is_nilpotent_and_settles_in_two_steps() {
        let map = rom::s2s_hlip(&params(), &timing());
        let g = deadbeat_gain(&map).unwrap();
        assert!(closed_loop_nilpotency(&map, &g) < 1e-8);

        let fp = fixed_point(&map, &timing(), 0.25).unwrap();
        let mut x = DVector::from_vec(vec![0.3, -0.4]);
        for _ in 0..2 {
            let u = step_feedback(&fp, &g, &x);
            x = map.step(&x, u);
        }
        assert!((x - &fp.x_star).amax() < 1e-10);
    }

    #[test]
    fn uncontrollable_pair_is_rejected() {
        let map = S2SMap::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.5, 0.5])),
            DVector::from_vec(vec![1.0, 0.0]),
            RomModel::Hlip,
        )
        .unwrap();
        assert!(matches!(deadbeat_gain(&map), Err(Error::Uncontrollable { .. })));
    }

    #[test]
    fn lqr_stabilizes_scalar_unstable_map() {
        let map = S2SMap::new(
            DMatrix::from_element(1, 1, 1.5),
            DVector::from_element(1, 1.0),
            RomModel::Dcm,
        )
        .unwrap();
        let g = lqr_gain(&map, &DVector::from_element(1, 1.0), 1.0).unwrap();
        let acl = map.a[(0, 0)] + map.b[0] * g.k[0];
        assert!(acl.abs() < 1.0, "closed loop {acl}");
    }

    #[test]
    fn lqr_approaches_deadbeat_for_large_q() {
        let map = S2SMap::new(
            DMatrix::from_element(1, 1, 1.5),
            DVector::from_element(1, 1.0),
            RomModel::Dcm,
        )
        .unwrap();
        let g = lqr_gain(&map, &DVector::from_element(1, 1e9), 1.0).unwrap();
        assert_relative_eq!(g.k[0], -1.5, max_relative = 1e-6);
    }

    #[test]
    fn step_feedback_at_fixed_point_returns_nominal() {
        let map = rom::s2s_hlip(&params(), &timing());
        let fp = fixed_point(&map, &timing(), 0.3).unwrap();
        let g = deadbeat_gain(&map).unwrap();
        assert_relative_eq!(step_feedback(&fp, &g, &fp.x_star), fp.u_star, epsilon = 1e-12);
        let zero_fp = fixed_point(&map, &timing(), 0.0).unwrap();
        assert_eq!(step_feedback(&zero_fp, &g, &DVector::zeros(2)), 0.0);
    }

    #[test]
    fn lateral_orbit_is_symmetric_and_periodic() {
        let map = rom::s2s_hlip(&params(), &timing());
        let (left, right) = lateral_fixed_point(&map, &timing(), 0.0, 0.2).unwrap();
        assert_relative_eq!(left.u_star, 0.2, epsilon = 1e-15);
        assert_relative_eq!(right.u_star, -0.2, epsilon = 1e-15);
        // mirror symmetry
        assert_relative_eq!(left.x_star[0], -right.x_star[0], epsilon = 1e-10);
        // two-step rollout returns to the left fixed point
        let x1 = map.step(&left.x_star, left.u_star);
        let x2 = map.step(&x1, right.u_star);
        assert!((x2 - &left.x_star).amax() < 1e-10);
    }

    #[test]
    fn degenerate_lateral_orbit_is_the_origin() {
        let map = rom::s2s_hlip(&params(), &timing());
        let (left, right) = lateral_fixed_point(&map, &timing(), 0.0, 0.0).unwrap();
        assert!(left.x_star.amax() < 1e-12);
        assert!(right.x_star.amax() < 1e-12);
        assert_eq!(left.u_star, 0.0);
        assert_eq!(right.u_star, 0.0);
    }

    #[test]
    fn planner_at_fixed_point_returns_nominal_step() {
        let cfg = PlannerConfig {
            kind: RomModel::Hlip,
            gain: GainConfig::Deadbeat,
            alpha: 0.0,
        };
        let planner = Planner::new(cfg, params(), timing()).unwrap();
        let cmd = VelocityCommand::new(0.3, 0.0, 0.2).unwrap();
        let fp = planner.sagittal_fixed_point(0.3).unwrap();
        // start SS at the state that flows into x* at the end of the phase
        let pre = RomState::new(fp.x_star[0], fp.x_star[1]);
        let out = planner
            .plan(pre, RomState::default(), timing().t_ss, Side::Left, &cmd)
            .unwrap();
        assert_relative_eq!(out.u_sw_x, fp.u_star, epsilon = 1e-10);
        assert_relative_eq!(out.t_to_impact, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn alip_and_hlip_agree_at_rest_from_origin() {
        let cmd = VelocityCommand::new(0.0, 0.0, 0.0).unwrap();
        for kind in [RomModel::Alip, RomModel::Hlip] {
            let planner = Planner::new(
                PlannerConfig {
                    kind,
                    gain: GainConfig::Deadbeat,
                    alpha: 0.0,
                },
                params(),
                timing(),
            )
            .unwrap();
            let out = planner
                .plan(RomState::default(), RomState::default(), 0.1, Side::Left, &cmd)
                .unwrap();
            assert_relative_eq!(out.u_sw_x, 0.0, epsilon = 1e-12);
            assert_relative_eq!(out.u_sw_y, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn replanning_is_flow_consistent() {
        // planning later from the consistently flowed state gives the same target
        let planner = Planner::new(
            PlannerConfig {
                kind: RomModel::Hlip,
                gain: GainConfig::Deadbeat,
                alpha: 0.0,
            },
            params(),
            timing(),
        )
        .unwrap();
        let cmd = VelocityCommand::new(0.4, 0.1, 0.15).unwrap();
        let x0 = RomState::new(0.05, 0.3);
        let y0 = RomState::new(-0.08, 0.05);
        let t0 = 0.1;
        let dt = 0.13;
        let out0 = planner.plan(x0, y0, t0, Side::Right, &cmd).unwrap();
        let x1 = ss_flow_state(&planner.params, x0, dt);
        let y1 = ss_flow_state(&planner.params, y0, dt);
        let out1 = planner.plan(x1, y1, t0 + dt, Side::Right, &cmd).unwrap();
        assert_relative_eq!(out0.u_sw_x, out1.u_sw_x, epsilon = 1e-8);
        assert_relative_eq!(out0.u_sw_y, out1.u_sw_y, epsilon = 1e-8);
    }

    fn ss_flow_state(p: &LipParams, x: RomState, dt: f64) -> RomState {
        crate::rom::ss_flow(p, x, dt).unwrap()
    }

    #[test]
    fn planner_is_deterministic() {
        let planner = Planner::new(
            PlannerConfig {
                kind: RomModel::Dcm,
                gain: GainConfig::Deadbeat,
                alpha: 0.0,
            },
            params(),
            timing(),
        )
        .unwrap();
        let cmd = VelocityCommand::new(0.2, -0.1, 0.18).unwrap();
        let x = RomState::new(0.03, 0.21);
        let y = RomState::new(0.01, -0.02);
        let a = planner.plan(x, y, 0.2, Side::Left, &cmd).unwrap();
        let b = planner.plan(x, y, 0.2, Side::Left, &cmd).unwrap();
        assert_eq!(a.u_sw_x.to_bits(), b.u_sw_x.to_bits());
        assert_eq!(a.u_sw_y.to_bits(), b.u_sw_y.to_bits());
    }
}
