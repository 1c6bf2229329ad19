//! Linear-inverted-pendulum family: closed-form flows, impact maps, and the
//! step-to-step (S2S) linear maps used by every planner.
//!
//! The continuous single-support (SS) dynamics use the state `x = (p, L)`,
//! with `p` the horizontal CoM position relative to the stance pivot and `L`
//! the mass-normalized angular momentum about the pivot:
//!
//! ```text
//!   d/dt [p; L] = [0, 1/z0; g, 0] [p; L]            (single support)
//!   d/dt [p; L] = [0, 1/z0; 0, 0] [p; L]            (double support, H-LIP)
//!   x+ = x- + [-1; 0] * u_sw                        (stance switch)
//! ```
//!
//! The three-state variant appends the ZMP position `p_zmp` as a state and
//! drives it with a rate input during double support.
//!
//! Everything here is evaluated in closed form (cosh/sinh transition matrices
//! and exact convolution integrals); no numerical integration is involved.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::{Error, Result};

/// Pendulum parameters. `lambda = sqrt(g / z0)` is derived at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipParams {
    pub z0: f64,
    pub g: f64,
    pub lambda: f64,
}

impl LipParams {
    pub fn new(z0: f64, g: f64) -> Result<Self> {
        if !(z0 > 0.0 && z0.is_finite()) {
            return Err(Error::InvalidParam(format!("z0 must be positive, got {z0}")));
        }
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::InvalidParam(format!("g must be positive, got {g}")));
        }
        Ok(Self {
            z0,
            g,
            lambda: (g / z0).sqrt(),
        })
    }
}

/// Gait phase durations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitTiming {
    pub t_ss: f64,
    pub t_ds: f64,
}

impl GaitTiming {
    pub fn new(t_ss: f64, t_ds: f64) -> Result<Self> {
        if !(t_ss > 0.0 && t_ss.is_finite()) {
            return Err(Error::InvalidParam(format!("t_ss must be positive, got {t_ss}")));
        }
        if !(t_ds >= 0.0 && t_ds.is_finite()) {
            return Err(Error::InvalidParam(format!("t_ds must be >= 0, got {t_ds}")));
        }
        Ok(Self { t_ss, t_ds })
    }

    /// Duration of one full step (SS + DS).
    pub fn step_period(&self) -> f64 {
        self.t_ss + self.t_ds
    }
}

/// Two-state ROM state: position and mass-normalized angular momentum.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RomState {
    pub p: f64,
    pub l: f64,
}

impl RomState {
    pub fn new(p: f64, l: f64) -> Self {
        Self { p, l }
    }

    pub fn is_finite(&self) -> bool {
        self.p.is_finite() && self.l.is_finite()
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.p, self.l)
    }

    pub fn from_vector(v: Vector2<f64>) -> Self {
        Self { p: v.x, l: v.y }
    }
}

/// Three-state ROM state with the ZMP as an explicit state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RomStateZ {
    pub p: f64,
    pub l: f64,
    pub p_zmp: f64,
}

impl RomStateZ {
    pub fn new(p: f64, l: f64, p_zmp: f64) -> Self {
        Self { p, l, p_zmp }
    }

    pub fn is_finite(&self) -> bool {
        self.p.is_finite() && self.l.is_finite() && self.p_zmp.is_finite()
    }

    pub fn pl(&self) -> RomState {
        RomState::new(self.p, self.l)
    }
}

/// Which reduced-order model an S2S map belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RomModel {
    Alip,
    Hlip,
    Mlip,
    Dcm,
}

impl std::fmt::Display for RomModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RomModel::Alip => "alip",
            RomModel::Hlip => "hlip",
            RomModel::Mlip => "mlip",
            RomModel::Dcm => "dcm",
        };
        f.write_str(s)
    }
}

/// Discrete step-to-step system `x_{k+1} = A x_k + B u_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct S2SMap {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub model: RomModel,
}

impl S2SMap {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, model: RomModel) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.len() != n || !(1..=3).contains(&n) {
            return Err(Error::InvalidParam(format!(
                "inconsistent S2S dimensions: A is {}x{}, B is {}",
                a.nrows(),
                a.ncols(),
                b.len()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) || b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("S2S map entries"));
        }
        Ok(Self { a, b, model })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// One application of the map.
    pub fn step(&self, x: &DVector<f64>, u: f64) -> DVector<f64> {
        &self.a * x + &self.b * u
    }
}

/// Closed-form SS transition matrix `exp(A_ss * t)`.
pub fn ss_transition(params: &LipParams, dt: f64) -> Matrix2<f64> {
    let l = params.lambda;
    let (s, c) = ((l * dt).sinh(), (l * dt).cosh());
    Matrix2::new(c, s / (params.z0 * l), params.z0 * l * s, c)
}

/// Exact single-support flow over `dt >= 0`.
pub fn ss_flow(params: &LipParams, x: RomState, dt: f64) -> Result<RomState> {
    if !x.is_finite() {
        return Err(Error::NonFinite("ss_flow state"));
    }
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParam(format!("ss_flow dt must be >= 0, got {dt}")));
    }
    Ok(RomState::from_vector(ss_transition(params, dt) * x.to_vector()))
}

/// Exact double-support flow: constant angular momentum, `p` drifts at `L/z0`.
pub fn ds_flow(params: &LipParams, x: RomState, dt: f64) -> Result<RomState> {
    if !x.is_finite() {
        return Err(Error::NonFinite("ds_flow state"));
    }
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParam(format!("ds_flow dt must be >= 0, got {dt}")));
    }
    Ok(RomState::new(x.p + x.l / params.z0 * dt, x.l))
}

/// Stance-switch update: re-anchors the state to the new pivot at offset
/// `u_sw` from the old one. `L` is unchanged (angular momentum about ground
/// points coincides at constant height).
pub fn impact_update(x: RomState, u_sw: f64) -> RomState {
    RomState::new(x.p - u_sw, x.l)
}

/// Predicted pre-impact state after `t_remaining` more seconds of SS flow.
pub fn predict_preimpact(params: &LipParams, x: RomState, t_remaining: f64) -> Result<RomState> {
    ss_flow(params, x, t_remaining)
}

/// H-LIP step-to-step map: SS flow composed with DS flow and the impact.
///
/// `A = exp(A_ss T_ss) exp(A_ds T_ds)`, `B = exp(A_ss T_ss) B_delta`. The DS
/// factor is exact since `A_ds` is nilpotent.
pub fn s2s_hlip(params: &LipParams, timing: &GaitTiming) -> S2SMap {
    let e_ss = ss_transition(params, timing.t_ss);
    let e_ds = Matrix2::new(1.0, timing.t_ds / params.z0, 0.0, 1.0);
    let a = e_ss * e_ds;
    let b = e_ss * Vector2::new(-1.0, 0.0);
    S2SMap {
        a: DMatrix::from_column_slice(2, 2, a.as_slice()),
        b: DVector::from_column_slice(b.as_slice()),
        model: RomModel::Hlip,
    }
}

/// ZMP evolution policy for the three-state map. Only the flat-foot policy
/// (piecewise-constant ZMP in SS, linear sweep in DS) is provided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZmpPolicy {
    #[default]
    FlatFoot,
}

/// `exp(A_ct t)` for the three-state dynamics, in closed form.
///
/// `A_ct` is block upper-triangular, `[[A_ss, c], [0, 0]]` with
/// `c = (0, -g)`, so the exponential is `[[E(t), W(t)], [0, 1]]` where
/// `W(t) = int_0^t exp(A_ss s) ds * c`. Using `g/(z0 lambda^2) = 1` the
/// coupling column reduces to `W = (1 - cosh, -z0 lambda sinh)`.
pub fn zmp_transition(params: &LipParams, dt: f64) -> nalgebra::Matrix3<f64> {
    let e = ss_transition(params, dt);
    let l = params.lambda;
    let (s, c) = ((l * dt).sinh(), (l * dt).cosh());
    let w0 = 1.0 - c;
    let w1 = -params.z0 * l * s;
    nalgebra::Matrix3::new(
        e[(0, 0)], e[(0, 1)], w0, //
        e[(1, 0)], e[(1, 1)], w1, //
        0.0, 0.0, 1.0,
    )
}

/// `int_0^t exp(A_ct s) ds * B_ct` in closed form (response of the state to a
/// unit ZMP rate held over `[0, t]`).
fn zmp_rate_response(params: &LipParams, dt: f64) -> nalgebra::Vector3<f64> {
    let l = params.lambda;
    let (s, c) = ((l * dt).sinh(), (l * dt).cosh());
    nalgebra::Vector3::new(dt - s / l, -params.z0 * (c - 1.0), dt)
}

/// Three-state (MLIP) step-to-step map with the ZMP as an explicit state.
///
/// DS drives the ZMP at the constant rate `u_sw / T_ds`; the stance switch
/// shifts both `p` and `p_zmp` by `-u_sw`. For `t_ds = 0` the DS sweep and
/// the switch collapse into a single transition (the `t_ds -> 0` limit of the
/// general map), which keeps the `(p, L)` block identical to the H-LIP map.
pub fn s2s_mlip(params: &LipParams, timing: &GaitTiming, _policy: ZmpPolicy) -> S2SMap {
    let e_ss = zmp_transition(params, timing.t_ss);
    let impact = nalgebra::Vector3::new(-1.0, 0.0, -1.0);
    let (a, b) = if timing.t_ds > 0.0 {
        let e_ds = zmp_transition(params, timing.t_ds);
        let sweep = zmp_rate_response(params, timing.t_ds) / timing.t_ds;
        (e_ss * e_ds, e_ss * (sweep + impact))
    } else {
        // limit of zmp_rate_response(t)/t as t -> 0 is B_ct = (0, 0, 1)
        let sweep = nalgebra::Vector3::new(0.0, 0.0, 1.0);
        (e_ss, e_ss * (sweep + impact))
    };
    S2SMap {
        a: DMatrix::from_column_slice(3, 3, a.as_slice()),
        b: DVector::from_column_slice(b.as_slice()),
        model: RomModel::Mlip,
    }
}

/// Reduce the three-state map to its `(p, L)` block.
///
/// `{p_zmp = 0}` is an invariant subspace of the MLIP map (the ZMP returns to
/// the new pivot after every switch), and the full map always carries an
/// eigenvalue at exactly 1 on the ZMP coordinate, which makes `(I - A)`
/// singular and the pair uncontrollable. Planner synthesis therefore acts on
/// this exact reduction.
pub fn reduce_zmp(map: &S2SMap) -> Result<S2SMap> {
    if map.dim() != 3 {
        return Err(Error::InvalidParam(format!(
            "reduce_zmp expects a 3-state map, got {}",
            map.dim()
        )));
    }
    S2SMap::new(
        map.a.view((0, 0), (2, 2)).into_owned(),
        map.b.rows(0, 2).into_owned(),
        map.model,
    )
}

/// Transform `(p, L)` into `(p, xi)` with `xi = p + L / (lambda z0)` the
/// divergent component of motion.
pub fn dcm_transform(params: &LipParams, x: RomState) -> (f64, f64) {
    (x.p, x.p + x.l / (params.lambda * params.z0))
}

/// Inverse of [`dcm_transform`].
pub fn dcm_inverse(params: &LipParams, p: f64, xi: f64) -> RomState {
    RomState::new(p, (xi - p) * params.lambda * params.z0)
}

/// The `(p, L) -> (p, xi)` change-of-basis matrix.
pub fn dcm_basis(params: &LipParams) -> Matrix2<f64> {
    Matrix2::new(1.0, 0.0, 1.0, 1.0 / (params.lambda * params.z0))
}

/// Scalar DCM step-to-step map `xi_{k+1} = a xi_k + b u_k`.
///
/// `a = exp(lambda (T_ss + T_ds))`; `b` uses the ZMP-sweep DS assumption,
/// with the removable `T_ds = 0` singularity evaluated by its limit.
pub fn s2s_dcm(params: &LipParams, timing: &GaitTiming) -> S2SMap {
    let l = params.lambda;
    let a = (l * timing.step_period()).exp();
    let b = if timing.t_ds > 0.0 {
        -(l * timing.t_ss).exp() * ((l * timing.t_ds).exp() - 1.0) / (l * timing.t_ds)
    } else {
        -(l * timing.t_ss).exp()
    };
    S2SMap {
        a: DMatrix::from_element(1, 1, a),
        b: DVector::from_element(1, b),
        model: RomModel::Dcm,
    }
}
