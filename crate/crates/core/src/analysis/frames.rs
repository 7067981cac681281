//! Rigid transform from the tracker sensor frame to the handle point.

use crate::trial::Pose6;
use nalgebra::{Matrix3, Rotation3, Vector3};

/// A fixed rigid offset: where the handle point sits in the sensor frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidOffset {
    pub translation_mm: Vector3<f64>,
    pub rotation: Rotation3<f64>,
}

impl RigidOffset {
    pub fn identity() -> Self {
        Self {
            translation_mm: Vector3::zeros(),
            rotation: Rotation3::identity(),
        }
    }

    /// Builds an offset from a raw matrix, validating orthonormality
    /// (within 1e−9) and a +1 determinant.
    pub fn from_parts(translation_mm: Vector3<f64>, rotation: Matrix3<f64>) -> Result<Self, String> {
        let gram = rotation.transpose() * rotation;
        let defect = (gram - Matrix3::identity()).norm();
        if defect > 1e-9 {
            return Err(format!("rotation not orthonormal (defect {defect:.3e})"));
        }
        if rotation.determinant() <= 0.0 {
            return Err("rotation determinant must be +1".into());
        }
        Ok(Self {
            translation_mm,
            rotation: Rotation3::from_matrix_unchecked(rotation),
        })
    }

    pub fn from_euler_deg(
        translation_mm: Vector3<f64>,
        roll_deg: f64,
        pitch_deg: f64,
        yaw_deg: f64,
    ) -> Self {
        Self {
            translation_mm,
            rotation: Rotation3::from_euler_angles(
                roll_deg.to_radians(),
                pitch_deg.to_radians(),
                yaw_deg.to_radians(),
            ),
        }
    }

    pub fn inverse(&self) -> Self {
        let inv_rot = self.rotation.inverse();
        Self {
            translation_mm: -(inv_rot * self.translation_mm),
            rotation: inv_rot,
        }
    }
}

fn pose_rotation(pose: &Pose6) -> Rotation3<f64> {
    // Yaw about z, pitch about y, roll about x, composed Rz·Ry·Rx.
    Rotation3::from_euler_angles(
        pose.roll_deg.to_radians(),
        pose.pitch_deg.to_radians(),
        pose.yaw_deg.to_radians(),
    )
}

fn normalize_deg(angle: f64) -> f64 {
    let mut a = angle % 360.0;
    if a <= -180.0 {
        a += 360.0;
    } else if a > 180.0 {
        a -= 360.0;
    }
    a
}

/// Transforms a sensor-frame pose to the handle point: the offset is applied
/// in the sensor's body frame.
pub fn to_handle_frame(sensor_pose: &Pose6, offset: &RigidOffset) -> Pose6 {
    let r_s = pose_rotation(sensor_pose);
    let p_s = Vector3::new(sensor_pose.x_mm, sensor_pose.y_mm, sensor_pose.z_mm);

    let r_h = r_s * offset.rotation;
    let p_h = p_s + r_s * offset.translation_mm;

    let (roll, pitch, yaw) = r_h.euler_angles();
    Pose6 {
        t_s: sensor_pose.t_s,
        x_mm: p_h.x,
        y_mm: p_h.y,
        z_mm: p_h.z,
        yaw_deg: normalize_deg(yaw.to_degrees()),
        pitch_deg: normalize_deg(pitch.to_degrees()),
        roll_deg: normalize_deg(roll.to_degrees()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn pose(x: f64, y: f64, z: f64, yaw: f64, pitch: f64, roll: f64) -> Pose6 {
        Pose6 {
            t_s: 0.0,
            x_mm: x,
            y_mm: y,
            z_mm: z,
            yaw_deg: yaw,
            pitch_deg: pitch,
            roll_deg: roll,
        }
    }

    fn pose_distance(a: &Pose6, b: &Pose6) -> f64 {
        let lin = ((a.x_mm - b.x_mm).powi(2)
            + (a.y_mm - b.y_mm).powi(2)
            + (a.z_mm - b.z_mm).powi(2))
        .sqrt();
        let ang = ((normalize_deg(a.yaw_deg - b.yaw_deg)).powi(2)
            + (normalize_deg(a.pitch_deg - b.pitch_deg)).powi(2)
            + (normalize_deg(a.roll_deg - b.roll_deg)).powi(2))
        .sqrt();
        lin + ang
    }

    #[test]
    fn identity_offset_is_identity_map() {
        let p = pose(1.5, -2.0, 3.0, 20.0, -15.0, 40.0);
        let out = to_handle_frame(&p, &RigidOffset::identity());
        assert!(pose_distance(&p, &out) < 1e-12);
    }

    #[test]
    fn lever_arm_rotates_with_the_pose() {
        // Hand-composed: a +10 mm z offset in the sensor frame, with the
        // sensor rolled +90° about x, maps body-z onto world −y.
        let p = pose(0.0, 0.0, 0.0, 0.0, 0.0, 90.0);
        let offset = RigidOffset::from_euler_deg(Vector3::new(0.0, 0.0, 10.0), 0.0, 0.0, 0.0);
        let out = to_handle_frame(&p, &offset);
        assert!((out.x_mm - 0.0).abs() < 1e-9);
        assert!((out.y_mm - (-10.0)).abs() < 1e-9, "y = {}", out.y_mm);
        assert!((out.z_mm - 0.0).abs() < 1e-9, "z = {}", out.z_mm);
        assert!((out.roll_deg - 90.0).abs() < 1e-9);
    }

    #[test]
    fn inverse_composition_roundtrips() {
        let mut rng = StdRng::seed_from_u64(4);
        let offset = RigidOffset::from_euler_deg(Vector3::new(3.0, -7.0, 12.0), 25.0, -40.0, 110.0);
        let inverse = offset.inverse();
        for _ in 0..100 {
            let p = pose(
                rng.gen_range(-100.0..100.0),
                rng.gen_range(-100.0..100.0),
                rng.gen_range(-100.0..100.0),
                rng.gen_range(-170.0..170.0),
                rng.gen_range(-80.0..80.0),
                rng.gen_range(-170.0..170.0),
            );
            let out = to_handle_frame(&to_handle_frame(&p, &offset), &inverse);
            assert!(pose_distance(&p, &out) < 1e-9, "{p:?} vs {out:?}");
        }
    }

    #[test]
    fn raw_matrix_validation() {
        let bad = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.1, 0.0, 0.0, 1.0);
        assert!(RigidOffset::from_parts(Vector3::zeros(), bad).is_err());
        let reflection = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RigidOffset::from_parts(Vector3::zeros(), reflection).is_err());
        let good = Rotation3::from_euler_angles(0.3, -0.2, 1.0);
        assert!(RigidOffset::from_parts(Vector3::zeros(), *good.matrix()).is_ok());
    }
}
