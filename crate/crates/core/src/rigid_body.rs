//! Planar floating-base articulated dynamics.
//!
//! Models are trees of links in the sagittal plane: link 0 is the floating
//! base with coordinates (x, z, pitch), every other link hangs from its
//! parent by a revolute joint at a fixed anchor point. Mass matrices come
//! from the composite-rigid-body algorithm, bias/gravity forces from the
//! recursive Newton-Euler algorithm, both specialized to planar trees and
//! evaluated in world coordinates (moments about the world origin).
//!
//! Generalized coordinates: `q = [x, z, pitch, joint_1, ..., joint_nj]`,
//! velocities are their time derivatives.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::Deserialize;

use crate::planar::{cross_y, rot_vel, Pose2, Rot2, Vec2};
use crate::{Error, Result};

/// One link of the tree. The link frame sits at the joint connecting it to
/// its parent; geometry (`com`, child joint anchors) is expressed there.
#[derive(Debug, Clone)]
pub struct Link {
    pub name: String,
    /// `None` for the floating base (link 0 only).
    pub parent: Option<usize>,
    /// Joint anchor in the parent frame (unused for the base).
    pub joint_pos: Vec2,
    pub mass: f64,
    /// Rotational inertia about the link CoM.
    pub inertia: f64,
    /// CoM offset in the link frame.
    pub com: Vec2,
    /// Characteristic length, for reference only.
    pub length: f64,
    /// Whether the joint driving this link is motorized (base excluded).
    pub actuated: bool,
}

/// Foot geometry: half-width and front/back sole levers for the 6D wrench
/// map. In the planar model `l_b`/`l_f` double as the heel/toe offsets and
/// `sole_drop` is the vertical ankle-to-sole distance.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FootGeometry {
    pub w: f64,
    pub l_b: f64,
    pub l_f: f64,
    #[serde(default)]
    pub sole_drop: f64,
}

impl FootGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.w <= 0.0 || self.l_b <= 0.0 || self.l_f <= 0.0 || self.sole_drop < 0.0 {
            return Err(Error::Model(format!(
                "foot geometry must be positive: w={}, l_b={}, l_f={}, sole_drop={}",
                self.w, self.l_b, self.l_f, self.sole_drop
            )));
        }
        Ok(())
    }

    /// Heel contact point in the foot frame.
    pub fn heel(&self) -> Vec2 {
        Vec2::new(-self.l_b, -self.sole_drop)
    }

    /// Toe contact point in the foot frame.
    pub fn toe(&self) -> Vec2 {
        Vec2::new(self.l_f, -self.sole_drop)
    }

    /// Sole point directly under the ankle (the stance pivot).
    pub fn ankle_sole(&self) -> Vec2 {
        Vec2::new(0.0, -self.sole_drop)
    }
}

/// Foot body indices for a biped model.
#[derive(Debug, Clone, Copy)]
pub struct Feet {
    pub left: usize,
    pub right: usize,
    pub geom: FootGeometry,
}

/// Planar kinematic tree with link inertial data.
#[derive(Debug, Clone)]
pub struct PlanarModel {
    pub links: Vec<Link>,
    pub gravity: f64,
    pub feet: Option<Feet>,
}

impl PlanarModel {
    pub fn new(links: Vec<Link>, gravity: f64, feet: Option<Feet>) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::Model("model has no links".into()));
        }
        if links[0].parent.is_some() {
            return Err(Error::Model("link 0 must be the floating base".into()));
        }
        for (i, link) in links.iter().enumerate() {
            if !(link.mass > 0.0 && link.mass.is_finite()) {
                return Err(Error::Model(format!("link {} mass must be > 0", link.name)));
            }
            if link.inertia < 0.0 {
                return Err(Error::Model(format!(
                    "link {} inertia must be >= 0",
                    link.name
                )));
            }
            match link.parent {
                None if i != 0 => {
                    return Err(Error::Model(format!("link {} has no parent", link.name)));
                }
                Some(p) if p >= i => {
                    return Err(Error::Model(format!(
                        "link {} parent index {} must precede it (acyclic tree order)",
                        link.name, p
                    )));
                }
                _ => {}
            }
        }
        if let Some(f) = &feet {
            f.geom.validate()?;
            if f.left >= links.len() || f.right >= links.len() || f.left == f.right {
                return Err(Error::Model("invalid foot link indices".into()));
            }
        }
        Ok(Self {
            links,
            gravity,
            feet,
        })
    }

    /// Total degrees of freedom (3 base + one per joint).
    pub fn dof(&self) -> usize {
        self.links.len() + 2
    }

    /// Generalized-coordinate index of link `i`'s joint (i >= 1).
    pub fn joint_dof(&self, link: usize) -> usize {
        link + 2
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.name == name)
    }

    /// Indices of actuated coordinates, in link order.
    pub fn actuated_dofs(&self) -> Vec<usize> {
        self.links
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, l)| l.actuated)
            .map(|(i, _)| self.joint_dof(i))
            .collect()
    }

    /// Actuation selection matrix `B` (dof x m), one unit entry per column.
    pub fn actuation_matrix(&self) -> DMatrix<f64> {
        let dofs = self.actuated_dofs();
        let mut b = DMatrix::zeros(self.dof(), dofs.len());
        for (col, dof) in dofs.iter().enumerate() {
            b[(*dof, col)] = 1.0;
        }
        b
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    /// Forward kinematics for all links.
    pub fn kinematics(&self, q: &DVector<f64>) -> Kinematics {
        assert_eq!(q.len(), self.dof(), "configuration dimension mismatch");
        let mut poses = Vec::with_capacity(self.links.len());
        poses.push(Pose2 {
            rot: Rot2::new(q[2]),
            pos: Vec2::new(q[0], q[1]),
        });
        for (i, link) in self.links.iter().enumerate().skip(1) {
            let parent: &Pose2 = &poses[link.parent.unwrap()];
            let anchor = parent.transform_point(link.joint_pos);
            let rot = parent.rot.compose(&Rot2::new(q[self.joint_dof(i)]));
            poses.push(Pose2 { rot, pos: anchor });
        }
        let coms = self
            .links
            .iter()
            .zip(&poses)
            .map(|(l, p)| p.transform_point(l.com))
            .collect();
        Kinematics { poses, coms }
    }

    /// Velocity-level kinematics: angular rates and anchor/CoM velocities.
    pub fn velocities(&self, kin: &Kinematics, v: &DVector<f64>) -> LinkVelocities {
        let n = self.links.len();
        let mut omega = vec![0.0; n];
        let mut v_anchor = vec![Vec2::zeros(); n];
        let mut v_com = vec![Vec2::zeros(); n];
        omega[0] = v[2];
        v_anchor[0] = Vec2::new(v[0], v[1]);
        for i in 1..n {
            let p = self.links[i].parent.unwrap();
            let r = kin.poses[i].pos - kin.poses[p].pos;
            omega[i] = omega[p] + v[self.joint_dof(i)];
            v_anchor[i] = v_anchor[p] + rot_vel(omega[p], r);
        }
        for i in 0..n {
            v_com[i] = v_anchor[i] + rot_vel(omega[i], kin.coms[i] - kin.poses[i].pos);
        }
        LinkVelocities {
            omega,
            v_anchor,
            v_com,
        }
    }
}

/// Poses and world CoM positions for every link.
#[derive(Debug, Clone)]
pub struct Kinematics {
    pub poses: Vec<Pose2>,
    pub coms: Vec<Vec2>,
}

/// Per-link velocity quantities.
#[derive(Debug, Clone)]
pub struct LinkVelocities {
    pub omega: Vec<f64>,
    pub v_anchor: Vec<Vec2>,
    pub v_com: Vec<Vec2>,
}

/// Configuration and velocity of the full model.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub q: DVector<f64>,
    pub v: DVector<f64>,
}

impl RobotState {
    pub fn new(q: DVector<f64>, v: DVector<f64>) -> Result<Self> {
        if q.len() != v.len() {
            return Err(Error::InvalidParam(format!(
                "state dimensions differ: q {}, v {}",
                q.len(),
                v.len()
            )));
        }
        if q.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("robot state"));
        }
        Ok(Self { q, v })
    }

    pub fn zeros(dof: usize) -> Self {
        Self {
            q: DVector::zeros(dof),
            v: DVector::zeros(dof),
        }
    }
}

/// Planar spatial inertia of one link about the world origin, acting on
/// motion vectors ordered `(omega, vx, vz)`.
fn spatial_inertia_world(mass: f64, inertia_com: f64, com_world: Vec2) -> Matrix3<f64> {
    let (cx, cz) = (com_world.x, com_world.y);
    Matrix3::new(
        inertia_com + mass * (cx * cx + cz * cz),
        mass * cz,
        -mass * cx,
        mass * cz,
        mass,
        0.0,
        -mass * cx,
        0.0,
        mass,
    )
}

/// Motion-subspace column of one coordinate about the world origin: a unit
/// rate of the dof produces this spatial motion `(omega, vx, vz)`.
fn motion_subspace(kin: &Kinematics, dof: usize) -> Vector3<f64> {
    match dof {
        0 => Vector3::new(0.0, 1.0, 0.0),
        1 => Vector3::new(0.0, 0.0, 1.0),
        _ => {
            // revolute about the anchor of the dof's link; base pitch rotates
            // about the base origin
            let link = if dof == 2 { 0 } else { dof - 2 };
            let v = rot_vel(1.0, -kin.poses[link].pos);
            Vector3::new(1.0, v.x, v.y)
        }
    }
}

/// Dofs on the support path of a link, base dofs included.
fn supporting_dofs(model: &PlanarModel, mut link: usize) -> Vec<usize> {
    let mut dofs = Vec::new();
    loop {
        if link == 0 {
            dofs.extend_from_slice(&[0, 1, 2]);
            break;
        }
        dofs.push(model.joint_dof(link));
        link = model.links[link].parent.unwrap();
    }
    dofs
}

/// Mass matrix via the composite-rigid-body algorithm.
///
/// Composite spatial inertias are accumulated leaves-to-root in world
/// coordinates; `D[j, k] = phi_j^T (I^c_{link(k)} phi_k)` for every dof `j`
/// on the support path of dof `k`.
pub fn mass_matrix(model: &PlanarModel, q: &DVector<f64>) -> DMatrix<f64> {
    let kin = model.kinematics(q);
    let n_links = model.links.len();
    let dof = model.dof();

    let mut composite: Vec<Matrix3<f64>> = model
        .links
        .iter()
        .zip(&kin.coms)
        .map(|(l, c)| spatial_inertia_world(l.mass, l.inertia, *c))
        .collect();
    for i in (1..n_links).rev() {
        let child = composite[i];
        composite[model.links[i].parent.unwrap()] += child;
    }

    let phi: Vec<Vector3<f64>> = (0..dof).map(|j| motion_subspace(&kin, j)).collect();

    let mut d = DMatrix::zeros(dof, dof);
    for link in 0..n_links {
        let own: &[usize] = if link == 0 { &[0, 1, 2] } else { &[link + 2] };
        let support = supporting_dofs(model, link);
        for &k in own {
            let f = composite[link] * phi[k];
            for &j in &support {
                let val = phi[j].dot(&f);
                d[(j, k)] = val;
                d[(k, j)] = val;
            }
        }
    }
    d
}

/// Inverse dynamics via the recursive Newton-Euler algorithm: generalized
/// forces required to realize accelerations `a` at state `(q, v)`, gravity
/// included.
pub fn rnea(
    model: &PlanarModel,
    q: &DVector<f64>,
    v: &DVector<f64>,
    a: &DVector<f64>,
) -> DVector<f64> {
    let kin = model.kinematics(q);
    let n = model.links.len();
    let g_vec = Vec2::new(0.0, -model.gravity);

    // forward pass: rates, angular accelerations, anchor accelerations
    let vel = model.velocities(&kin, v);
    let mut alpha = vec![0.0; n];
    let mut a_anchor = vec![Vec2::zeros(); n];
    alpha[0] = a[2];
    a_anchor[0] = Vec2::new(a[0], a[1]);
    for i in 1..n {
        let p = model.links[i].parent.unwrap();
        let r = kin.poses[i].pos - kin.poses[p].pos;
        alpha[i] = alpha[p] + a[model.joint_dof(i)];
        a_anchor[i] = a_anchor[p] + rot_vel(alpha[p], r) - vel.omega[p] * vel.omega[p] * r;
    }

    // net inertial-minus-gravity wrench per link, about its own anchor
    let mut f_net = vec![Vec2::zeros(); n];
    let mut n_net = vec![0.0; n];
    for i in 0..n {
        let rc = kin.coms[i] - kin.poses[i].pos;
        let a_com = a_anchor[i] + rot_vel(alpha[i], rc) - vel.omega[i] * vel.omega[i] * rc;
        let link = &model.links[i];
        let force = link.mass * (a_com - g_vec);
        f_net[i] = force;
        n_net[i] = link.inertia * alpha[i] + cross_y(rc, force);
    }

    // backward pass: accumulate child wrenches into parents
    for i in (1..n).rev() {
        let p = model.links[i].parent.unwrap();
        let r = kin.poses[i].pos - kin.poses[p].pos;
        let (f_i, n_i) = (f_net[i], n_net[i]);
        f_net[p] += f_i;
        n_net[p] += n_i + cross_y(r, f_i);
    }

    let mut tau = DVector::zeros(model.dof());
    tau[0] = f_net[0].x;
    tau[1] = f_net[0].y;
    tau[2] = n_net[0];
    for i in 1..n {
        tau[model.joint_dof(i)] = n_net[i];
    }
    tau
}

/// Centrifugal, Coriolis, and gravity forces: inverse dynamics at zero
/// acceleration.
pub fn bias_forces(model: &PlanarModel, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    rnea(model, q, v, &DVector::zeros(model.dof()))
}

/// Gravity generalized forces.
pub fn gravity_vector(model: &PlanarModel, q: &DVector<f64>) -> DVector<f64> {
    let zero = DVector::zeros(model.dof());
    rnea(model, q, &zero, &zero)
}

/// World pose of a body-fixed point: position and absolute orientation.
pub fn frame_kinematics(
    model: &PlanarModel,
    q: &DVector<f64>,
    body: usize,
    local_point: Vec2,
) -> Result<(Vec2, f64)> {
    if body >= model.links.len() {
        return Err(Error::InvalidParam(format!("body index {body} out of range")));
    }
    let kin = model.kinematics(q);
    let pos = kin.poses[body].transform_point(local_point);
    Ok((pos, orientation_of(model, q, body)))
}

/// Absolute pitch of a body: base angle plus the joint angles on its chain.
pub fn orientation_of(model: &PlanarModel, q: &DVector<f64>, body: usize) -> f64 {
    let mut angle = 0.0;
    let mut link = body;
    loop {
        if link == 0 {
            angle += q[2];
            break;
        }
        angle += q[model.joint_dof(link)];
        link = model.links[link].parent.unwrap();
    }
    angle
}

/// Geometric point Jacobian, rows `(x, z, pitch)`.
pub fn point_jacobian(
    model: &PlanarModel,
    q: &DVector<f64>,
    body: usize,
    local_point: Vec2,
) -> DMatrix<f64> {
    let kin = model.kinematics(q);
    point_jacobian_with(model, &kin, body, local_point)
}

/// Same as [`point_jacobian`] with precomputed kinematics.
pub fn point_jacobian_with(
    model: &PlanarModel,
    kin: &Kinematics,
    body: usize,
    local_point: Vec2,
) -> DMatrix<f64> {
    let pw = kin.poses[body].transform_point(local_point);
    let mut j = DMatrix::zeros(3, model.dof());
    j[(0, 0)] = 1.0;
    j[(1, 1)] = 1.0;
    for dof in supporting_dofs(model, body) {
        if dof == 0 || dof == 1 {
            continue;
        }
        let link = if dof == 2 { 0 } else { dof - 2 };
        let lin = rot_vel(1.0, pw - kin.poses[link].pos);
        j[(0, dof)] = lin.x;
        j[(1, dof)] = lin.y;
        j[(2, dof)] = 1.0;
    }
    j
}

/// Acceleration bias of a body-fixed point, `Jdot(q, v) v`, rows
/// `(x, z, pitch)`. The pitch component is identically zero in the plane.
pub fn jdot_times_v(
    model: &PlanarModel,
    q: &DVector<f64>,
    v: &DVector<f64>,
    body: usize,
    local_point: Vec2,
) -> Vector3<f64> {
    let kin = model.kinematics(q);
    jdot_times_v_with(model, &kin, v, body, local_point)
}

/// Same as [`jdot_times_v`] with precomputed kinematics.
pub fn jdot_times_v_with(
    model: &PlanarModel,
    kin: &Kinematics,
    v: &DVector<f64>,
    body: usize,
    local_point: Vec2,
) -> Vector3<f64> {
    // point acceleration with q_ddot = 0; planar bodies have no gyroscopic
    // angular acceleration, so every alpha vanishes
    let vel = model.velocities(kin, v);
    let n = model.links.len();
    let mut a_anchor = vec![Vec2::zeros(); n];
    for i in 1..n {
        let p = model.links[i].parent.unwrap();
        let r = kin.poses[i].pos - kin.poses[p].pos;
        a_anchor[i] = a_anchor[p] - vel.omega[p] * vel.omega[p] * r;
    }
    let rw = kin.poses[body].transform_point(local_point) - kin.poses[body].pos;
    let a = a_anchor[body] - vel.omega[body] * vel.omega[body] * rw;
    Vector3::new(a.x, a.y, 0.0)
}

/// Whole-model CoM position.
pub fn com_position(model: &PlanarModel, kin: &Kinematics) -> Vec2 {
    let m = model.total_mass();
    model
        .links
        .iter()
        .zip(&kin.coms)
        .map(|(l, c)| l.mass * c)
        .sum::<Vec2>()
        / m
}

/// Whole-model CoM Jacobian (x, z rows).
pub fn com_jacobian(model: &PlanarModel, kin: &Kinematics) -> DMatrix<f64> {
    let m = model.total_mass();
    let mut j = DMatrix::zeros(2, model.dof());
    for (i, link) in model.links.iter().enumerate() {
        let ji = point_jacobian_with(model, kin, i, link.com);
        j += ji.rows(0, 2) * (link.mass / m);
    }
    j
}

/// `Jdot v` of the whole-model CoM (x, z).
pub fn com_jdot_times_v(model: &PlanarModel, kin: &Kinematics, v: &DVector<f64>) -> Vec2 {
    let m = model.total_mass();
    let mut a = Vec2::zeros();
    for (i, link) in model.links.iter().enumerate() {
        let ai = jdot_times_v_with(model, kin, v, i, link.com);
        a += Vec2::new(ai.x, ai.y) * (link.mass / m);
    }
    a
}

/// Mass-normalized angular momentum of the whole model about a world point.
pub fn normalized_angular_momentum(
    model: &PlanarModel,
    kin: &Kinematics,
    vel: &LinkVelocities,
    about: Vec2,
) -> f64 {
    let mut l = 0.0;
    for (i, link) in model.links.iter().enumerate() {
        l += link.inertia * vel.omega[i] + link.mass * cross_y(kin.coms[i] - about, vel.v_com[i]);
    }
    l / model.total_mass()
}

/// Kinetic plus potential energy, from per-link sums.
pub fn total_energy(model: &PlanarModel, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let kin = model.kinematics(q);
    let vel = model.velocities(&kin, v);
    let mut e = 0.0;
    for (i, link) in model.links.iter().enumerate() {
        e += 0.5 * link.mass * vel.v_com[i].norm_squared()
            + 0.5 * link.inertia * vel.omega[i] * vel.omega[i]
            + link.mass * model.gravity * kin.coms[i].y;
    }
    e
}

/// Unconstrained forward dynamics `v_dot = D^-1 (B tau - H)`.
pub fn forward_dynamics_unconstrained(
    model: &PlanarModel,
    q: &DVector<f64>,
    v: &DVector<f64>,
    tau_actuated: &DVector<f64>,
) -> DVector<f64> {
    let d = mass_matrix(model, q);
    let h = bias_forces(model, q, v);
    let mut rhs = -h;
    for (col, dof) in model.actuated_dofs().iter().enumerate() {
        rhs[*dof] += tau_actuated[col];
    }
    d.cholesky()
        .expect("mass matrix must be positive definite")
        .solve(&rhs)
}

// ---------------------------------------------------------------------------
// Model description file (TOML)
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    #[allow(dead_code)]
    name: String,
    gravity: f64,
    #[serde(default)]
    feet: Option<FeetFile>,
    links: Vec<LinkFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeetFile {
    left: String,
    right: String,
    geometry: FootGeometry,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkFile {
    name: String,
    /// Parent link name, or "world" for the floating base.
    parent: String,
    #[serde(default)]
    joint_pos: [f64; 2],
    mass: f64,
    inertia: f64,
    com: [f64; 2],
    #[serde(default)]
    length: f64,
    #[serde(default)]
    actuated: bool,
}

/// Parse a model description file. The schema is documented in
/// `docs/model-format.md` at the repository root.
pub fn parse_model(text: &str) -> Result<PlanarModel> {
    let file: ModelFile =
        toml::from_str(text).map_err(|e| Error::Model(format!("model file: {e}")))?;
    let mut links = Vec::with_capacity(file.links.len());
    let mut names: Vec<String> = Vec::new();
    for (i, lf) in file.links.iter().enumerate() {
        let parent = if lf.parent == "world" {
            if i != 0 {
                return Err(Error::Model(format!(
                    "link {}: only the first link may attach to world",
                    lf.name
                )));
            }
            None
        } else {
            Some(names.iter().position(|n| *n == lf.parent).ok_or_else(|| {
                Error::Model(format!(
                    "link {}: parent {} not defined before it",
                    lf.name, lf.parent
                ))
            })?)
        };
        links.push(Link {
            name: lf.name.clone(),
            parent,
            joint_pos: Vec2::new(lf.joint_pos[0], lf.joint_pos[1]),
            mass: lf.mass,
            inertia: lf.inertia,
            com: Vec2::new(lf.com[0], lf.com[1]),
            length: lf.length,
            actuated: lf.actuated,
        });
        names.push(lf.name.clone());
    }
    let feet = match file.feet {
        Some(f) => {
            let left = names
                .iter()
                .position(|n| *n == f.left)
                .ok_or_else(|| Error::Model(format!("left foot link {} not found", f.left)))?;
            let right = names
                .iter()
                .position(|n| *n == f.right)
                .ok_or_else(|| Error::Model(format!("right foot link {} not found", f.right)))?;
            Some(Feet {
                left,
                right,
                geom: f.geometry,
            })
        }
        None => None,
    };
    PlanarModel::new(links, file.gravity, feet)
}

/// Load a model from a file path.
pub fn load_model(path: &std::path::Path) -> Result<PlanarModel> {
    parse_model(&std::fs::read_to_string(path)?)
}

/// The reference 7-link biped used by the walking experiments and tests:
/// torso (base) plus thigh, shank, and foot per leg. All values are invented
/// desk-scale parameters.
pub fn reference_biped() -> PlanarModel {
    parse_model(REFERENCE_BIPED_TOML).expect("reference model is valid")
}

/// TOML source of the reference model; also shipped at `models/biped7.toml`.
pub const REFERENCE_BIPED_TOML: &str = r#"
name = "biped7"
gravity = 9.81

[feet]
left = "l_foot"
right = "r_foot"

[feet.geometry]
w = 0.04
l_b = 0.07
l_f = 0.13
sole_drop = 0.05

[[links]]
name = "torso"
parent = "world"
mass = 10.0
inertia = 0.2
com = [0.0, 0.25]
length = 0.5

[[links]]
name = "l_thigh"
parent = "torso"
joint_pos = [0.0, 0.0]
mass = 1.5
inertia = 0.02
com = [0.0, -0.2]
length = 0.4
actuated = true

[[links]]
name = "l_shank"
parent = "l_thigh"
joint_pos = [0.0, -0.4]
mass = 1.0
inertia = 0.013
com = [0.0, -0.2]
length = 0.4
actuated = true

[[links]]
name = "l_foot"
parent = "l_shank"
joint_pos = [0.0, -0.4]
mass = 0.3
inertia = 0.001
com = [0.03, -0.04]
length = 0.2
actuated = true

[[links]]
name = "r_thigh"
parent = "torso"
joint_pos = [0.0, 0.0]
mass = 1.5
inertia = 0.02
com = [0.0, -0.2]
length = 0.4
actuated = true

[[links]]
name = "r_shank"
parent = "r_thigh"
joint_pos = [0.0, -0.4]
mass = 1.0
inertia = 0.013
com = [0.0, -0.2]
length = 0.4
actuated = true

[[links]]
name = "r_foot"
parent = "r_shank"
joint_pos = [0.0, -0.4]
mass = 0.3
inertia = 0.001
com = [0.03, -0.04]
length = 0.2
actuated = true
"#;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pendulum() -> PlanarModel {
        PlanarModel::new(
            vec![
                Link {
                    name: "base".into(),
                    parent: None,
                    joint_pos: Vec2::zeros(),
                    mass: 1.0,
                    inertia: 0.1,
                    com: Vec2::zeros(),
                    length: 0.0,
                    actuated: false,
                },
                Link {
                    name: "rod".into(),
                    parent: Some(0),
                    joint_pos: Vec2::zeros(),
                    mass: 2.0,
                    inertia: 0.05,
                    com: Vec2::new(0.0, -0.3),
                    length: 0.6,
                    actuated: true,
                },
            ],
            9.81,
            None,
        )
        .unwrap()
    }

    fn random_state(model: &PlanarModel, rng: &mut ChaCha8Rng) -> (DVector<f64>, DVector<f64>) {
        let dof = model.dof();
        let q = DVector::from_fn(dof, |_, _| rng.gen_range(-1.0..1.0));
        let v = DVector::from_fn(dof, |_, _| rng.gen_range(-1.0..1.0));
        (q, v)
    }

    #[test]
    fn pendulum_joint_inertia_is_textbook() {
        // joint-joint mass matrix entry about a pivot: I_com + m l_com^2
        let model = pendulum();
        let q = DVector::zeros(4);
        let d = mass_matrix(&model, &q);
        assert_relative_eq!(d[(3, 3)], 0.05 + 2.0 * 0.09, epsilon = 1e-12);
    }

    #[test]
    fn mass_matrix_is_symmetric_positive_definite() {
        let model = reference_biped();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let (q, _) = random_state(&model, &mut rng);
            let d = mass_matrix(&model, &q);
            assert!((d.clone() - d.transpose()).amax() < 1e-12, "not symmetric");
            let eig = d.symmetric_eigenvalues();
            assert!(eig.min() > 1e-6, "min eigenvalue {}", eig.min());
        }
    }

    #[test]
    fn crba_matches_rnea() {
        // D a + H = RNEA(q, v, a)
        let model = reference_biped();
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..100 {
            let (q, v) = random_state(&model, &mut rng);
            let a = DVector::from_fn(model.dof(), |_, _| rng.gen_range(-2.0..2.0));
            let lhs = mass_matrix(&model, &q) * &a + bias_forces(&model, &q, &v);
            let rhs = rnea(&model, &q, &v, &a);
            assert!(
                (&lhs - &rhs).amax() < 1e-9,
                "mismatch {:.3e}",
                (&lhs - &rhs).amax()
            );
        }
    }

    #[test]
    fn bias_at_rest_is_gravity() {
        let model = reference_biped();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let (q, _) = random_state(&model, &mut rng);
        let h = bias_forces(&model, &q, &DVector::zeros(model.dof()));
        let g = gravity_vector(&model, &q);
        assert!((h - g).amax() < 1e-14);
    }

    #[test]
    fn zero_gravity_rest_bias_vanishes() {
        let mut model = reference_biped();
        model.gravity = 0.0;
        let q = DVector::from_fn(model.dof(), |i, _| 0.1 * i as f64);
        let h = bias_forces(&model, &q, &DVector::zeros(model.dof()));
        assert!(h.amax() < 1e-14);
    }

    #[test]
    fn horizontal_pendulum_gravity_torque() {
        let model = pendulum();
        // joint angle -pi/2 tips the downward rod forward to horizontal (+x)
        let mut q = DVector::zeros(4);
        q[3] = -std::f64::consts::FRAC_PI_2;
        let g = gravity_vector(&model, &q);
        // magnitude m g l_com; com at +x and gravity torques it toward -x
        // (negative pitch), so the holding torque is negative
        assert_relative_eq!(g[3], -2.0 * 9.81 * 0.3, epsilon = 1e-12);
        // vertical configuration: moments vanish
        let g0 = gravity_vector(&model, &DVector::zeros(4));
        assert!(g0[3].abs() < 1e-14);
    }

    #[test]
    fn gravity_matches_potential_energy_gradient() {
        let model = reference_biped();
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let (q, _) = random_state(&model, &mut rng);
        let u = |q: &DVector<f64>| {
            let kin = model.kinematics(q);
            model
                .links
                .iter()
                .zip(&kin.coms)
                .map(|(l, c)| l.mass * model.gravity * c.y)
                .sum::<f64>()
        };
        let g = gravity_vector(&model, &q);
        let eps = 1e-6;
        for i in 0..model.dof() {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[i] += eps;
            qm[i] -= eps;
            let fd = (u(&qp) - u(&qm)) / (2.0 * eps);
            assert!(
                (g[i] - fd).abs() < 1e-6,
                "dof {i}: analytic {} vs fd {}",
                g[i],
                fd
            );
        }
    }

    #[test]
    fn frame_kinematics_of_straight_leg() {
        let model = reference_biped();
        let mut q = DVector::zeros(model.dof());
        q[1] = 0.9;
        let foot = model.feet.unwrap().left;
        let (pos, angle) = frame_kinematics(&model, &q, foot, Vec2::zeros()).unwrap();
        assert_relative_eq!(pos.x, 0.0, epsilon = 1e-14);
        assert_relative_eq!(pos.y, 0.9 - 0.8, epsilon = 1e-14);
        assert_relative_eq!(angle, 0.0, epsilon = 1e-14);
        assert!(frame_kinematics(&model, &q, 99, Vec2::zeros()).is_err());
    }

    #[test]
    fn base_identity_pose_at_zero_config() {
        let model = reference_biped();
        let q = DVector::zeros(model.dof());
        let (pos, angle) = frame_kinematics(&model, &q, 0, Vec2::zeros()).unwrap();
        assert_eq!(pos, Vec2::zeros());
        assert_eq!(angle, 0.0);
    }

    #[test]
    fn point_jacobian_matches_finite_differences() {
        let model = reference_biped();
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let local = Vec2::new(0.05, -0.02);
        for _ in 0..20 {
            let (q, _) = random_state(&model, &mut rng);
            for body in [0usize, 2, 3, 6] {
                let j = point_jacobian(&model, &q, body, local);
                let eps = 1e-6;
                for i in 0..model.dof() {
                    let mut qp = q.clone();
                    let mut qm = q.clone();
                    qp[i] += eps;
                    qm[i] -= eps;
                    let (pp, ap) = frame_kinematics(&model, &qp, body, local).unwrap();
                    let (pm, am) = frame_kinematics(&model, &qm, body, local).unwrap();
                    let fd = [
                        (pp.x - pm.x) / (2.0 * eps),
                        (pp.y - pm.y) / (2.0 * eps),
                        (ap - am) / (2.0 * eps),
                    ];
                    for r in 0..3 {
                        assert!(
                            (j[(r, i)] - fd[r]).abs() < 1e-5,
                            "body {body} row {r} dof {i}: {} vs {}",
                            j[(r, i)],
                            fd[r]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn base_point_jacobian_is_identity_block() {
        let model = reference_biped();
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let (q, _) = random_state(&model, &mut rng);
        let j = point_jacobian(&model, &q, 0, Vec2::zeros());
        assert_relative_eq!(j[(0, 0)], 1.0);
        assert_relative_eq!(j[(1, 1)], 1.0);
        assert_relative_eq!(j[(2, 2)], 1.0);
        // base origin coincides with the pitch axis: no lever arm
        assert!(j[(0, 2)].abs() < 1e-14 && j[(1, 2)].abs() < 1e-14);
        // joints do not move the base
        for dof in 3..model.dof() {
            assert!(j.column(dof).amax() < 1e-14);
        }
    }

    #[test]
    fn jacobian_times_v_matches_point_velocity() {
        let model = reference_biped();
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        let (q, v) = random_state(&model, &mut rng);
        let kin = model.kinematics(&q);
        let vel = model.velocities(&kin, &v);
        for body in 0..model.links.len() {
            let local = model.links[body].com;
            let j = point_jacobian_with(&model, &kin, body, local);
            let jv = j * &v;
            assert!((jv[0] - vel.v_com[body].x).abs() < 1e-12);
            assert!((jv[1] - vel.v_com[body].y).abs() < 1e-12);
            assert!((jv[2] - vel.omega[body]).abs() < 1e-12);
        }
    }

    #[test]
    fn jdot_v_vanishes_at_rest_and_matches_fd() {
        let model = reference_biped();
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let (q, v) = random_state(&model, &mut rng);
        let local = Vec2::new(-0.03, 0.01);
        let body = 5;

        let at_rest = jdot_times_v(&model, &q, &DVector::zeros(model.dof()), body, local);
        assert!(at_rest.amax() < 1e-14);

        // Jdot v = ((J(q + eps v) - J(q - eps v)) / 2 eps) v
        let eps = 1e-6;
        let jp = point_jacobian(&model, &(&q + &v * eps), body, local);
        let jm = point_jacobian(&model, &(&q - &v * eps), body, local);
        let fd = (jp - jm) * &v / (2.0 * eps);
        let got = jdot_times_v(&model, &q, &v, body, local);
        for r in 0..3 {
            assert!(
                (got[r] - fd[r]).abs() < 1e-5,
                "row {r}: {} vs {}",
                got[r],
                fd[r]
            );
        }
    }

    #[test]
    fn com_jacobian_matches_momentum() {
        // total linear momentum: M * J_com v = sum m_i v_ci
        let model = reference_biped();
        let mut rng = ChaCha8Rng::seed_from_u64(39);
        let (q, v) = random_state(&model, &mut rng);
        let kin = model.kinematics(&q);
        let vel = model.velocities(&kin, &v);
        let jc = com_jacobian(&model, &kin);
        let vc = jc * &v;
        let momentum: Vec2 = model
            .links
            .iter()
            .zip(&vel.v_com)
            .map(|(l, vi)| l.mass * vi)
            .sum();
        assert!((vc[0] * model.total_mass() - momentum.x).abs() < 1e-10);
        assert!((vc[1] * model.total_mass() - momentum.y).abs() < 1e-10);
    }

    #[test]
    fn model_file_roundtrip_and_validation() {
        let model = reference_biped();
        assert_eq!(model.links.len(), 7);
        assert_eq!(model.dof(), 9);
        assert_eq!(model.actuated_dofs(), vec![3, 4, 5, 6, 7, 8]);
        let b = model.actuation_matrix();
        assert_eq!((b.nrows(), b.ncols()), (9, 6));
        assert_relative_eq!(model.total_mass(), 15.6, epsilon = 1e-12);

        // unknown keys are rejected
        let bad = REFERENCE_BIPED_TOML.replace("gravity = 9.81", "gravity = 9.81\nbogus = 1");
        assert!(parse_model(&bad).is_err());

        // bad mass is rejected
        let bad = REFERENCE_BIPED_TOML.replace("mass = 10.0", "mass = -1.0");
        assert!(parse_model(&bad).is_err());
    }
}
