//! Planar (sagittal x-z) geometry helpers.
//!
//! Conventions used throughout the crate: x points forward, z points up, and
//! the rotation coordinate is the angle about the +y axis (out of plane), so a
//! positive pitch leans the body forward. Under this convention the scalar
//! angular momentum of forward motion is positive and the pendulum equation
//! reads `L_dot = g * p` with no sign flips.

use nalgebra::Vector2;

/// 2D vector in the x-z plane.
pub type Vec2 = Vector2<f64>;

/// Rotation by `theta` about +y, acting on (x, z) coordinates.
///
/// Maps +z toward +x for positive angles (forward lean).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rot2 {
    pub cos: f64,
    pub sin: f64,
}

impl Rot2 {
    pub fn new(theta: f64) -> Self {
        Self {
            cos: theta.cos(),
            sin: theta.sin(),
        }
    }

    pub fn identity() -> Self {
        Self { cos: 1.0, sin: 0.0 }
    }

    /// Rotate a vector: `[c s; -s c] * v`.
    pub fn apply(&self, v: Vec2) -> Vec2 {
        Vec2::new(self.cos * v.x + self.sin * v.y, -self.sin * v.x + self.cos * v.y)
    }

    /// Inverse rotation.
    pub fn inv_apply(&self, v: Vec2) -> Vec2 {
        Vec2::new(self.cos * v.x - self.sin * v.y, self.sin * v.x + self.cos * v.y)
    }

    /// Compose two rotations (angles add).
    pub fn compose(&self, other: &Rot2) -> Rot2 {
        Rot2 {
            cos: self.cos * other.cos - self.sin * other.sin,
            sin: self.sin * other.cos + self.cos * other.sin,
        }
    }
}

/// Rigid planar pose: rotation plus translation of the frame origin.
#[derive(Debug, Clone, Copy)]
pub struct Pose2 {
    pub rot: Rot2,
    pub pos: Vec2,
}

impl Pose2 {
    pub fn identity() -> Self {
        Self {
            rot: Rot2::identity(),
            pos: Vec2::zeros(),
        }
    }

    /// Map a point from this frame into the parent frame.
    pub fn transform_point(&self, local: Vec2) -> Vec2 {
        self.pos + self.rot.apply(local)
    }

    /// Frame composition: `self` then `child` (child expressed in `self`).
    pub fn compose(&self, child: &Pose2) -> Pose2 {
        Pose2 {
            rot: self.rot.compose(&child.rot),
            pos: self.transform_point(child.pos),
        }
    }
}

/// Scalar cross product about +y: `(a x b) . y_hat = a.z*b.x - a.x*b.z`.
///
/// With `a` a lever arm and `b` a force this is the pitch moment; with
/// `a = r - pivot` and `b = m v` it is the angular momentum about the pivot.
pub fn cross_y(a: Vec2, b: Vec2) -> f64 {
    a.y * b.x - a.x * b.y
}

/// Velocity of a point at offset `r` on a body spinning at rate `omega`
/// (about +y): `omega * y_hat x r`.
pub fn rot_vel(omega: f64, r: Vec2) -> Vec2 {
    Vec2::new(omega * r.y, -omega * r.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn positive_pitch_leans_forward() {
        let r = Rot2::new(0.1);
        let up = r.apply(Vec2::new(0.0, 1.0));
        assert!(up.x > 0.0, "positive pitch should tilt +z toward +x");
        assert_relative_eq!(up.norm(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rotation_roundtrip() {
        let r = Rot2::new(0.73);
        let v = Vec2::new(0.3, -1.2);
        let back = r.inv_apply(r.apply(v));
        assert_relative_eq!(back.x, v.x, epsilon = 1e-14);
        assert_relative_eq!(back.y, v.y, epsilon = 1e-14);
    }

    #[test]
    fn forward_motion_has_positive_momentum() {
        // point mass at height z0 moving forward about a ground pivot
        let r = Vec2::new(0.0, 0.8);
        let v = Vec2::new(1.0, 0.0);
        assert!(cross_y(r, v) > 0.0);
    }

    #[test]
    fn rot_vel_matches_finite_difference() {
        let r0 = Vec2::new(0.4, -0.2);
        let omega = 1.7;
        let eps = 1e-7;
        let moved = Rot2::new(omega * eps).apply(r0);
        let fd = (moved - r0) / eps;
        let an = rot_vel(omega, r0);
        assert_relative_eq!(fd.x, an.x, epsilon = 1e-6);
        assert_relative_eq!(fd.y, an.y, epsilon = 1e-6);
    }

    #[test]
    fn pose_composition_matches_sequential_transform() {
        let a = Pose2 {
            rot: Rot2::new(0.3),
            pos: Vec2::new(1.0, 2.0),
        };
        let b = Pose2 {
            rot: Rot2::new(-0.9),
            pos: Vec2::new(0.5, -0.1),
        };
        let p = Vec2::new(-0.2, 0.7);
        let via_compose = a.compose(&b).transform_point(p);
        let sequential = a.transform_point(b.transform_point(p));
        assert_relative_eq!(via_compose.x, sequential.x, epsilon = 1e-14);
        assert_relative_eq!(via_compose.y, sequential.y, epsilon = 1e-14);
    }
}
