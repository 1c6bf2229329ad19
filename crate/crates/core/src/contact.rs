//! Holonomic contact machinery: stacked point-constraint Jacobians, the
//! multi-point force to 6D wrench map, and friction feasibility inequalities.
//!
//! Contact is modeled by pinning representative points on the foot sole: two
//! points (heel and toe) for a planar line foot, which constrains foot
//! translation and pitch together.

use nalgebra::{DMatrix, DVector, Matrix6, Vector6};

use crate::planar::Vec2;
use crate::rigid_body::{
    jdot_times_v_with, point_jacobian_with, FootGeometry, PlanarModel,
};
use crate::{Error, Result};

/// Contact condition of one foot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FootContact {
    #[default]
    Swing,
    /// Heel and toe pinned (planar line contact).
    Line,
}

/// Contact condition of both feet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ContactMode {
    pub left: FootContact,
    pub right: FootContact,
}

impl ContactMode {
    pub fn single_support(stance_left: bool) -> Self {
        if stance_left {
            Self {
                left: FootContact::Line,
                right: FootContact::Swing,
            }
        } else {
            Self {
                left: FootContact::Swing,
                right: FootContact::Line,
            }
        }
    }

    pub fn double_support() -> Self {
        Self {
            left: FootContact::Line,
            right: FootContact::Line,
        }
    }

    pub fn any_contact(&self) -> bool {
        self.left == FootContact::Line || self.right == FootContact::Line
    }
}

/// One constrained contact point.
#[derive(Debug, Clone, Copy)]
pub struct ContactPoint {
    /// Body carrying the point.
    pub body: usize,
    /// Point in the body frame.
    pub local: Vec2,
    /// Current world position.
    pub world: Vec2,
}

/// Stacked holonomic constraints plus force-feasibility inequalities.
///
/// Rows of `j` come in (x, z) pairs per contact point, in the order of
/// `points`; `forces` in the controllers use the same layout.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub j: DMatrix<f64>,
    pub jdot_v: DVector<f64>,
    pub points: Vec<ContactPoint>,
    /// Friction feasibility `A_grf f <= b_grf` on the stacked point forces.
    pub a_grf: DMatrix<f64>,
    pub b_grf: DVector<f64>,
}

impl ConstraintSet {
    /// Number of constraint rows (2 per point).
    pub fn h(&self) -> usize {
        self.j.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Stack the point Jacobians (x, z rows) of every active contact point and
/// attach the friction inequalities. Swing-only modes yield an empty set.
pub fn build_constraints(
    model: &PlanarModel,
    q: &DVector<f64>,
    v: &DVector<f64>,
    mode: ContactMode,
    mu: f64,
) -> Result<ConstraintSet> {
    let feet = model
        .feet
        .ok_or_else(|| Error::Model("model declares no feet".into()))?;
    let kin = model.kinematics(q);
    let mut points = Vec::new();
    for (foot, state) in [(feet.left, mode.left), (feet.right, mode.right)] {
        if state == FootContact::Line {
            for local in [feet.geom.heel(), feet.geom.toe()] {
                points.push(ContactPoint {
                    body: foot,
                    local,
                    world: kin.poses[foot].transform_point(local),
                });
            }
        }
    }

    let n = model.dof();
    let h = 2 * points.len();
    let mut j = DMatrix::zeros(h, n);
    let mut jdot_v = DVector::zeros(h);
    for (k, p) in points.iter().enumerate() {
        let jp = point_jacobian_with(model, &kin, p.body, p.local);
        let bias = jdot_times_v_with(model, &kin, v, p.body, p.local);
        j.rows_mut(2 * k, 2).copy_from(&jp.rows(0, 2));
        jdot_v[2 * k] = bias[0];
        jdot_v[2 * k + 1] = bias[1];
    }

    let (a_grf, b_grf) = friction_constraints(points.len(), mu)?;
    Ok(ConstraintSet {
        j,
        jdot_v,
        points,
        a_grf,
        b_grf,
    })
}

/// Planar friction pyramid per contact point: `|f_x| <= mu f_z` as two rows
/// on the stacked `(f_x, f_z)` force layout. The pair implies `f_z >= 0`.
pub fn friction_constraints(n_points: usize, mu: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if mu <= 0.0 {
        return Err(Error::InvalidParam(format!("mu must be > 0, got {mu}")));
    }
    let mut a = DMatrix::zeros(2 * n_points, 2 * n_points);
    for k in 0..n_points {
        a[(2 * k, 2 * k)] = 1.0;
        a[(2 * k, 2 * k + 1)] = -mu;
        a[(2 * k + 1, 2 * k)] = -1.0;
        a[(2 * k + 1, 2 * k + 1)] = -mu;
    }
    Ok((a, DVector::zeros(2 * n_points)))
}

/// Point-force to wrench conversion for a plane foot with representative
/// points at left-front `(l_f, w)`, right-front `(l_f, -w)`, and mid-back
/// `(-l_b, 0)` (x forward, y left, z up, moments about the ankle origin).
///
/// Maps `(f_LF_x, f_LF_y, f_LF_z, f_RF_x, f_RF_z, f_MB_z)` to
/// `(f_x, f_y, f_z, m_x, m_y, m_z)`; full rank for positive geometry.
pub fn wrench_map(geom: &FootGeometry) -> Result<Matrix6<f64>> {
    geom.validate()?;
    let (w, lb, lf) = (geom.w, geom.l_b, geom.l_f);
    #[rustfmt::skip]
    let m = Matrix6::new(
        1.0, 0.0, 0.0, 1.0, 0.0, 0.0,
        0.0, 1.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 1.0, 0.0, 1.0, 1.0,
        0.0, 0.0,   w, 0.0,  -w, 0.0,
        0.0, 0.0, -lf, 0.0, -lf,  lb,
        -w,   lf, 0.0,   w, 0.0, 0.0,
    );
    Ok(m)
}

/// Apply the wrench map to stacked point forces.
pub fn point_forces_to_wrench(geom: &FootGeometry, f: &Vector6<f64>) -> Result<Vector6<f64>> {
    Ok(wrench_map(geom)? * f)
}

/// Resultant ZMP of planar stacked point forces `(f_x, f_z)` per point,
/// relative to the ankle. `None` when the normal force vanishes.
pub fn planar_zmp(points_x: &[f64], forces: &DVector<f64>) -> Option<f64> {
    assert_eq!(forces.len(), 2 * points_x.len());
    let fz: f64 = (0..points_x.len()).map(|k| forces[2 * k + 1]).sum();
    if fz.abs() < 1e-12 {
        return None;
    }
    let moment: f64 = (0..points_x.len())
        .map(|k| points_x[k] * forces[2 * k + 1])
        .sum();
    Some(moment / fz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rigid_body::reference_biped;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn geom() -> FootGeometry {
        FootGeometry {
            w: 0.04,
            l_b: 0.07,
            l_f: 0.13,
            sole_drop: 0.05,
        }
    }

    #[test]
    fn swing_only_mode_is_empty() {
        let model = reference_biped();
        let q = DVector::zeros(model.dof());
        let v = DVector::zeros(model.dof());
        let set = build_constraints(
            &model,
            &q,
            &v,
            ContactMode {
                left: FootContact::Swing,
                right: FootContact::Swing,
            },
            0.8,
        )
        .unwrap();
        assert_eq!(set.h(), 0);
        assert!(set.is_empty());
    }

    #[test]
    fn single_stance_has_four_rows_rank_three() {
        let model = reference_biped();
        let mut q = DVector::zeros(model.dof());
        q[1] = 0.85;
        let v = DVector::zeros(model.dof());
        let set = build_constraints(&model, &q, &v, ContactMode::single_support(true), 0.8)
            .unwrap();
        assert_eq!(set.h(), 4);
        // flat foot: heel and toe share height, so the two x-rows coincide
        let svd = set.j.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let rank = svd
            .singular_values
            .iter()
            .filter(|s| **s > 1e-9 * smax)
            .count();
        assert_eq!(rank, 3);

        // the rank stays 3 for any foot attitude: both point velocities are
        // images of the same 3-dim rigid velocity field
        let mut q2 = q.clone();
        q2[5] = 0.3; // left ankle
        let set2 = build_constraints(&model, &q2, &v, ContactMode::single_support(true), 0.8)
            .unwrap();
        let svd2 = set2.j.clone().svd(false, false);
        let rank2 = svd2
            .singular_values
            .iter()
            .filter(|s| **s > 1e-9 * svd2.singular_values.max())
            .count();
        assert_eq!(rank2, 3);
    }

    #[test]
    fn double_support_stacks_both_feet() {
        let model = reference_biped();
        let mut q = DVector::zeros(model.dof());
        q[1] = 0.85;
        let v = DVector::zeros(model.dof());
        let set =
            build_constraints(&model, &q, &v, ContactMode::double_support(), 0.8).unwrap();
        assert_eq!(set.h(), 8);
        assert_eq!(set.points.len(), 4);
        assert_eq!(set.a_grf.nrows(), 8);
    }

    #[test]
    fn wrench_map_matches_cross_product_oracle() {
        // brute-force wrench: f = sum f_i, m = sum r_i x f_i at the
        // documented point coordinates
        let g = geom();
        let m = wrench_map(&g).unwrap();
        let r_lf = Vector3::new(g.l_f, g.w, 0.0);
        let r_rf = Vector3::new(g.l_f, -g.w, 0.0);
        let r_mb = Vector3::new(-g.l_b, 0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..10_000 {
            let f: Vector6<f64> = Vector6::from_fn(|_, _| rng.gen_range(-10.0..10.0));
            let f_lf = Vector3::new(f[0], f[1], f[2]);
            let f_rf = Vector3::new(f[3], 0.0, f[4]);
            let f_mb = Vector3::new(0.0, 0.0, f[5]);
            let force = f_lf + f_rf + f_mb;
            let moment = r_lf.cross(&f_lf) + r_rf.cross(&f_rf) + r_mb.cross(&f_mb);
            let got = m * f;
            for i in 0..3 {
                assert!((got[i] - force[i]).abs() < 1e-12);
                assert!((got[3 + i] - moment[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn wrench_map_is_full_rank_and_zero_maps_to_zero() {
        let m = wrench_map(&geom()).unwrap();
        assert!((m * Vector6::zeros()).amax() < 1e-15);
        let svd = m.svd(false, false);
        let rank = svd
            .singular_values
            .iter()
            .filter(|s| **s > 1e-12 * svd.singular_values.max())
            .count();
        assert_eq!(rank, 6);
        assert!(m.determinant().abs() > 1e-9);

        let bad = FootGeometry {
            w: -1.0,
            ..geom()
        };
        assert!(wrench_map(&bad).is_err());
    }

    #[test]
    fn friction_feasibility_basics() {
        let (a, b) = friction_constraints(2, 0.8).unwrap();
        // straight stance, half the weight per point, no tangential force
        let f = DVector::from_vec(vec![0.0, 76.5, 0.0, 76.5]);
        assert!((a.clone() * &f - &b).max() <= 0.0);
        // pulling on the ground is infeasible
        let f_neg = DVector::from_vec(vec![0.0, 76.5, 0.0, -1.0]);
        assert!((a.clone() * &f_neg - &b).max() > 0.0);
        // exceeding the pyramid is infeasible
        let f_slip = DVector::from_vec(vec![70.0, 76.5, 0.0, 76.5]);
        assert!((a * &f_slip - &b).max() > 0.0);
        assert!(friction_constraints(2, 0.0).is_err());
    }

    #[test]
    fn feasible_forces_keep_zmp_inside_support() {
        // sample random feasible point forces at heel (-l_b) and toe (+l_f):
        // the resultant ZMP always lies within [-l_b, l_f]
        let g = geom();
        let (a, b) = friction_constraints(2, 0.8).unwrap();
        let xs = [-g.l_b, g.l_f];
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut checked = 0;
        while checked < 2_000 {
            let f = DVector::from_fn(4, |i, _| {
                if i % 2 == 1 {
                    rng.gen_range(0.0..100.0)
                } else {
                    rng.gen_range(-100.0..100.0)
                }
            });
            if (a.clone() * &f - &b).max() > 0.0 {
                continue;
            }
            checked += 1;
            if let Some(zmp) = planar_zmp(&xs, &f) {
                assert!(
                    (-g.l_b - 1e-9..=g.l_f + 1e-9).contains(&zmp),
                    "zmp {zmp} outside [{}, {}]",
                    -g.l_b,
                    g.l_f
                );
            }
        }
    }

    #[test]
    fn constraint_rows_match_point_jacobians() {
        use crate::rigid_body::point_jacobian;
        let model = reference_biped();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let q = DVector::from_fn(model.dof(), |_, _| rng.gen_range(-0.5..0.5));
        let v = DVector::from_fn(model.dof(), |_, _| rng.gen_range(-1.0..1.0));
        let set = build_constraints(&model, &q, &v, ContactMode::single_support(false), 0.8)
            .unwrap();
        let feet = model.feet.unwrap();
        for (k, p) in set.points.iter().enumerate() {
            assert_eq!(p.body, feet.right);
            let j = point_jacobian(&model, &q, p.body, p.local);
            assert!((set.j.rows(2 * k, 2) - j.rows(0, 2)).amax() < 1e-14);
        }
    }
}
