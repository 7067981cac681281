//! Planar five-bar pantograph kinematics, Jacobians, and force capability.
//!
//! Geometry and conventions: the two motor axes sit at (−d/2, 0) and
//! (+d/2, 0) in the pantograph plane, u pointing from the left motor to the
//! right motor and v up. Upper links of length `a` are driven directly; lower
//! links of length `b` meet at the end-effector. Joint angles are measured
//! counterclockwise from the +u axis.
//!
//! The working branch is fixed: the inverse kinematics bends both elbows
//! outward (left elbow to the −u side of its motor-to-point chord, right
//! elbow to the +u side), and the forward kinematics picks the circle
//! intersection on the distal side of the elbow chord, i.e. the side away
//! from the base midpoint. Points whose elbows-outward solution does not land
//! on that branch are treated as outside the working workspace.

use crate::config::PantographConfig;
use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::sync::OnceLock;
use thiserror::Error;

/// Tolerance on `2b − ‖E1−E2‖` below which the two forward-kinematics
/// solutions are considered coincident.
const BRANCH_TOL_MM: f64 = 1e-9;
/// Elbow-chord determinant magnitude below which the forward configuration is
/// treated as singular (scale-relative, multiplied by b²).
const FORWARD_SINGULAR_TOL: f64 = 1e-9;
/// Agreement required between `fk(ik(p))` and `p` for `p` to count as being
/// on the working branch.
const ROUNDTRIP_TOL_MM: f64 = 1e-9;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum KinematicsError {
    #[error("unreachable configuration: elbow separation {separation_mm:.6} mm vs limit {limit_mm:.6} mm")]
    UnreachableConfiguration { separation_mm: f64, limit_mm: f64 },
    #[error("singular branch: forward solutions coincide (elbow separation {separation_mm:.6} mm)")]
    SingularBranch { separation_mm: f64 },
    #[error("point ({u_mm:.3}, {v_mm:.3}) mm is outside the working workspace")]
    OutOfWorkspace { u_mm: f64, v_mm: f64 },
    #[error("joint angle {angle_rad:.6} rad violates the limit [{min_rad:.6}, {max_rad:.6}]")]
    JointLimit {
        angle_rad: f64,
        min_rad: f64,
        max_rad: f64,
    },
    #[error("singular configuration: |det J| = {det_abs:.3e} mm²/rad²")]
    SingularConfiguration { det_abs: f64 },
    #[error("empty workspace for this configuration")]
    EmptyWorkspace,
}

/// End-effector position in the pantograph plane, mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub u_mm: f64,
    pub v_mm: f64,
}

impl PlanarPoint {
    pub fn new(u_mm: f64, v_mm: f64) -> Self {
        Self { u_mm, v_mm }
    }

    pub fn distance_to(&self, other: &PlanarPoint) -> f64 {
        (self.u_mm - other.u_mm).hypot(self.v_mm - other.v_mm)
    }

    pub fn offset_by(&self, offset: Vector2<f64>) -> PlanarPoint {
        PlanarPoint::new(self.u_mm + offset.x, self.v_mm + offset.y)
    }

    fn vec(&self) -> Vector2<f64> {
        Vector2::new(self.u_mm, self.v_mm)
    }
}

/// Output-shaft angles of the left and right motors, rad CCW from +u.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointAngles {
    pub theta1_rad: f64,
    pub theta2_rad: f64,
}

impl JointAngles {
    pub fn new(theta1_rad: f64, theta2_rad: f64) -> Self {
        Self {
            theta1_rad,
            theta2_rad,
        }
    }
}

/// One cell of a force map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceCell {
    pub point: PlanarPoint,
    /// Isotropic force in newtons; zero at singular configurations.
    pub force_n: f64,
    pub reachable: bool,
}

/// Dense sampling of the isotropic force over a rectangle.
///
/// Cells are stored row-major: the v rows scan from `v_min` up, and within a
/// row u scans from `u_min` up.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceMap {
    pub u_min_mm: f64,
    pub u_max_mm: f64,
    pub v_min_mm: f64,
    pub v_max_mm: f64,
    pub nu: usize,
    pub nv: usize,
    pub cells: Vec<ForceCell>,
}

impl ForceMap {
    pub fn cell(&self, iu: usize, iv: usize) -> &ForceCell {
        &self.cells[iv * self.nu + iu]
    }

    /// Writes the map as CSV with header `u_mm,v_mm,force_N,reachable`
    /// (reachable encoded as 1/0), in storage order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "u_mm,v_mm,force_N,reachable")?;
        for cell in &self.cells {
            writeln!(
                w,
                "{},{},{},{}",
                cell.point.u_mm,
                cell.point.v_mm,
                cell.force_n,
                u8::from(cell.reachable)
            )?;
        }
        Ok(())
    }
}

/// Endpoint-exact linear interpolation used for grid coordinates: symmetric
/// bounds produce exactly mirrored sample positions.
fn lerp_grid(min: f64, max: f64, i: usize, n: usize) -> f64 {
    if n == 1 {
        return 0.5 * (min + max);
    }
    let k = (n - 1) as f64;
    (min * ((n - 1 - i) as f64) + max * (i as f64)) / k
}

fn normalize_angle(theta: f64) -> f64 {
    // Normalizes to (−π, π].
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut t = theta % two_pi;
    if t <= -std::f64::consts::PI {
        t += two_pi;
    } else if t > std::f64::consts::PI {
        t -= two_pi;
    }
    t
}

fn rot90ccw(v: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}

fn cross2(a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

/// A pantograph mechanism with a cached workspace center.
#[derive(Debug)]
pub struct Pantograph {
    cfg: PantographConfig,
    center: OnceLock<Result<PlanarPoint, KinematicsError>>,
}

impl Clone for Pantograph {
    fn clone(&self) -> Self {
        Self {
            cfg: self.cfg.clone(),
            center: OnceLock::new(),
        }
    }
}

impl Pantograph {
    pub fn new(cfg: PantographConfig) -> Self {
        Self {
            cfg,
            center: OnceLock::new(),
        }
    }

    pub fn config(&self) -> &PantographConfig {
        &self.cfg
    }

    /// Position of the left (i = 0) or right (i = 1) motor axis.
    fn motor_axis(&self, i: usize) -> Vector2<f64> {
        let half = 0.5 * self.cfg.base_separation_d_mm;
        match i {
            0 => Vector2::new(-half, 0.0),
            _ => Vector2::new(half, 0.0),
        }
    }

    fn elbows(&self, q: JointAngles) -> [Vector2<f64>; 2] {
        let a = self.cfg.upper_link_a_mm;
        [
            self.motor_axis(0) + a * Vector2::new(q.theta1_rad.cos(), q.theta1_rad.sin()),
            self.motor_axis(1) + a * Vector2::new(q.theta2_rad.cos(), q.theta2_rad.sin()),
        ]
    }

    fn check_joint_limit(&self, theta: f64) -> Result<(), KinematicsError> {
        let t = normalize_angle(theta);
        if t < self.cfg.joint_angle_min_rad || t > self.cfg.joint_angle_max_rad {
            return Err(KinematicsError::JointLimit {
                angle_rad: t,
                min_rad: self.cfg.joint_angle_min_rad,
                max_rad: self.cfg.joint_angle_max_rad,
            });
        }
        Ok(())
    }

    /// End-effector position for the given joint angles on the working
    /// branch (distal circle–circle intersection).
    pub fn forward_kinematics(&self, q: JointAngles) -> Result<PlanarPoint, KinematicsError> {
        let b = self.cfg.lower_link_b_mm;
        let [e1, e2] = self.elbows(q);
        let chord = e2 - e1;
        let sep = chord.norm();

        if sep > 2.0 * b + BRANCH_TOL_MM {
            return Err(KinematicsError::UnreachableConfiguration {
                separation_mm: sep,
                limit_mm: 2.0 * b,
            });
        }
        if sep < BRANCH_TOL_MM {
            // Coincident elbows: the circles overlap everywhere.
            return Err(KinematicsError::UnreachableConfiguration {
                separation_mm: sep,
                limit_mm: 2.0 * b,
            });
        }
        if (2.0 * b - sep).abs() <= BRANCH_TOL_MM {
            return Err(KinematicsError::SingularBranch { separation_mm: sep });
        }

        let mid = 0.5 * (e1 + e2);
        let h = (b * b - 0.25 * sep * sep).max(0.0).sqrt();
        let n = rot90ccw(chord / sep);

        // Distal side: away from the base midpoint (the origin). When the
        // origin lies on the chord, fall back to the lower solution.
        let origin_side = cross2(chord, -e1);
        let p = if origin_side.abs() > BRANCH_TOL_MM * sep {
            if origin_side > 0.0 {
                mid - h * n
            } else {
                mid + h * n
            }
        } else if n.y <= 0.0 {
            mid + h * n
        } else {
            mid - h * n
        };
        Ok(PlanarPoint::new(p.x, p.y))
    }

    /// Joint angles reaching `p` with both elbows bent outward.
    ///
    /// Succeeds only for points on the working branch: the returned angles
    /// are guaranteed to forward-map back onto `p`.
    pub fn inverse_kinematics(&self, p: PlanarPoint) -> Result<JointAngles, KinematicsError> {
        let a = self.cfg.upper_link_a_mm;
        let b = self.cfg.lower_link_b_mm;
        if !p.u_mm.is_finite() || !p.v_mm.is_finite() {
            return Err(KinematicsError::OutOfWorkspace {
                u_mm: p.u_mm,
                v_mm: p.v_mm,
            });
        }

        let mut theta = [0.0_f64; 2];
        for i in 0..2 {
            let axis = self.motor_axis(i);
            let rel = p.vec() - axis;
            let r = rel.norm();
            if r > a + b + BRANCH_TOL_MM || r < (a - b).abs() - BRANCH_TOL_MM || r == 0.0 {
                return Err(KinematicsError::OutOfWorkspace {
                    u_mm: p.u_mm,
                    v_mm: p.v_mm,
                });
            }
            let cos_gamma = ((a * a + r * r - b * b) / (2.0 * a * r)).clamp(-1.0, 1.0);
            let gamma = cos_gamma.acos();
            let phi = rel.y.atan2(rel.x);
            // Left elbow rotates clockwise off the chord, right elbow
            // counterclockwise: both bend outward.
            theta[i] = normalize_angle(if i == 0 { phi - gamma } else { phi + gamma });
        }

        let q = JointAngles::new(theta[0], theta[1]);
        self.check_joint_limit(q.theta1_rad)?;
        self.check_joint_limit(q.theta2_rad)?;

        // Reject points whose elbows-outward assembly is not the working
        // (distal) branch of the forward map.
        match self.forward_kinematics(q) {
            Ok(back) if back.distance_to(&p) <= ROUNDTRIP_TOL_MM => Ok(q),
            _ => Err(KinematicsError::OutOfWorkspace {
                u_mm: p.u_mm,
                v_mm: p.v_mm,
            }),
        }
    }

    /// Jacobian mapping joint velocities (rad/s) to end-effector velocities
    /// (mm/s), derived from the lower-link length constraints.
    pub fn jacobian(&self, q: JointAngles) -> Result<Matrix2<f64>, KinematicsError> {
        let b = self.cfg.lower_link_b_mm;
        let p = self.forward_kinematics(q)?;
        let [e1, e2] = self.elbows(q);
        let w1 = p.vec() - e1;
        let w2 = p.vec() - e2;

        // Rows of A are the lower-link directions; B is diagonal with the
        // projections of the elbow velocities onto them.
        let det_a = cross2(w1, w2);
        if det_a.abs() < FORWARD_SINGULAR_TOL * b * b {
            return Err(KinematicsError::SingularConfiguration { det_abs: 0.0 });
        }
        let b1 = w1.dot(&rot90ccw(e1 - self.motor_axis(0)));
        let b2 = w2.dot(&rot90ccw(e2 - self.motor_axis(1)));

        let j = Matrix2::new(
            w2.y * b1 / det_a,
            -w1.y * b2 / det_a,
            -w2.x * b1 / det_a,
            w1.x * b2 / det_a,
        );
        let det_j = j.determinant().abs();
        if det_j < self.cfg.singularity_tol_mm2_per_rad2 {
            return Err(KinematicsError::SingularConfiguration { det_abs: det_j });
        }
        Ok(j)
    }

    /// Sines of the transmission angles at `q`: both elbow angles (between
    /// upper and lower link) and the angle between the two lower links at the
    /// end-effector.
    pub fn transmission_sines(&self, q: JointAngles) -> Result<[f64; 3], KinematicsError> {
        let p = self.forward_kinematics(q)?;
        let [e1, e2] = self.elbows(q);
        let w1 = (p.vec() - e1).normalize();
        let w2 = (p.vec() - e2).normalize();
        let u1 = (e1 - self.motor_axis(0)).normalize();
        let u2 = (e2 - self.motor_axis(1)).normalize();
        Ok([
            cross2(u1, w1).abs(),
            cross2(u2, w2).abs(),
            cross2(w1, w2).abs(),
        ])
    }

    /// Radius of the largest disc of end-effector forces achievable in every
    /// direction under the joint torque limits; zero at singular
    /// configurations and at configurations below the transmission-angle
    /// margin, where force output is not controllable.
    pub fn isotropic_force(&self, p: PlanarPoint) -> Result<f64, KinematicsError> {
        let q = self.inverse_kinematics(p)?;
        let j = match self.jacobian(q) {
            Ok(j) => j,
            Err(KinematicsError::SingularConfiguration { .. }) => return Ok(0.0),
            Err(e) => return Err(e),
        };
        let sines = self.transmission_sines(q)?;
        if sines.iter().any(|s| *s < self.cfg.transmission_margin_sin) {
            return Ok(0.0);
        }
        Ok(self.isotropic_force_from_jacobian(&j))
    }

    /// Closed form: the force disc radius is limited per motor by
    /// τ_max / ‖column_i(J)‖ (torques in N·mm against a Jacobian in mm/rad).
    pub fn isotropic_force_from_jacobian(&self, j: &Matrix2<f64>) -> f64 {
        let tau_max_nmm = self.cfg.max_output_torque_nm() * 1000.0;
        let c1 = j.column(0).norm();
        let c2 = j.column(1).norm();
        if c1 == 0.0 || c2 == 0.0 {
            return 0.0;
        }
        (tau_max_nmm / c1).min(tau_max_nmm / c2)
    }

    fn force_cell(&self, point: PlanarPoint) -> ForceCell {
        match self.isotropic_force(point) {
            Ok(force_n) => ForceCell {
                point,
                force_n,
                reachable: true,
            },
            Err(_) => ForceCell {
                point,
                force_n: 0.0,
                reachable: false,
            },
        }
    }

    /// Samples the isotropic force over a rectangle. Runs cells in parallel
    /// when the `parallel` feature is enabled; output is identical to
    /// [`Pantograph::force_map_serial`] either way.
    pub fn force_map(
        &self,
        u_range_mm: (f64, f64),
        v_range_mm: (f64, f64),
        nu: usize,
        nv: usize,
    ) -> ForceMap {
        let points = self.grid_points(u_range_mm, v_range_mm, nu, nv);
        #[cfg(feature = "parallel")]
        let cells = {
            use rayon::prelude::*;
            points.par_iter().map(|&p| self.force_cell(p)).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let cells = points.iter().map(|&p| self.force_cell(p)).collect();
        ForceMap {
            u_min_mm: u_range_mm.0,
            u_max_mm: u_range_mm.1,
            v_min_mm: v_range_mm.0,
            v_max_mm: v_range_mm.1,
            nu,
            nv,
            cells,
        }
    }

    /// Sequential reference evaluation of [`Pantograph::force_map`].
    pub fn force_map_serial(
        &self,
        u_range_mm: (f64, f64),
        v_range_mm: (f64, f64),
        nu: usize,
        nv: usize,
    ) -> ForceMap {
        let points = self.grid_points(u_range_mm, v_range_mm, nu, nv);
        let cells = points.iter().map(|&p| self.force_cell(p)).collect();
        ForceMap {
            u_min_mm: u_range_mm.0,
            u_max_mm: u_range_mm.1,
            v_min_mm: v_range_mm.0,
            v_max_mm: v_range_mm.1,
            nu,
            nv,
            cells,
        }
    }

    fn grid_points(
        &self,
        u_range_mm: (f64, f64),
        v_range_mm: (f64, f64),
        nu: usize,
        nv: usize,
    ) -> Vec<PlanarPoint> {
        let mut points = Vec::with_capacity(nu * nv);
        for iv in 0..nv {
            let v = lerp_grid(v_range_mm.0, v_range_mm.1, iv, nv);
            for iu in 0..nu {
                let u = lerp_grid(u_range_mm.0, u_range_mm.1, iu, nu);
                points.push(PlanarPoint::new(u, v));
            }
        }
        points
    }

    /// Isotropic force guaranteed over the whole guard disc around `p`: the
    /// minimum of [`Pantograph::isotropic_force`] over the disc center and 16
    /// boundary samples. Zero if any sample is unreachable.
    pub fn guarded_region_force(&self, p: PlanarPoint) -> f64 {
        let radius = self.cfg.center_guard_radius_mm;
        let mut min_force = match self.isotropic_force(p) {
            Ok(f) => f,
            Err(_) => return 0.0,
        };
        if radius > 0.0 {
            for k in 0..16 {
                let phi = 2.0 * std::f64::consts::PI * (k as f64) / 16.0;
                let sample =
                    PlanarPoint::new(p.u_mm + radius * phi.cos(), p.v_mm + radius * phi.sin());
                match self.isotropic_force(sample) {
                    Ok(f) => min_force = min_force.min(f),
                    Err(_) => return 0.0,
                }
            }
        }
        min_force
    }

    /// The cue origin: the point maximizing the isotropic force guaranteed
    /// over the guard disc, found by a 1 mm coarse scan followed by three
    /// rounds of 10× local grid refinement. Cached per instance.
    pub fn workspace_center(&self) -> Result<PlanarPoint, KinematicsError> {
        self.center
            .get_or_init(|| self.compute_workspace_center())
            .clone()
    }

    fn compute_workspace_center(&self) -> Result<PlanarPoint, KinematicsError> {
        let reach = self.cfg.upper_link_a_mm
            + self.cfg.lower_link_b_mm
            + 0.5 * self.cfg.base_separation_d_mm;
        let r = reach.ceil();

        let mut best: Option<(f64, PlanarPoint)> = None;
        let consider = |pg: &Self, p: PlanarPoint, best: &mut Option<(f64, PlanarPoint)>| {
            let f = pg.guarded_region_force(p);
            if f > 0.0 && best.as_ref().map_or(true, |(bf, _)| f > *bf) {
                *best = Some((f, p));
            }
        };

        // Coarse 1 mm scan of the lower half-plane.
        let nu = (2.0 * r) as usize + 1;
        let nv = r as usize + 1;
        for iv in 0..nv {
            let v = lerp_grid(-r, 0.0, iv, nv);
            for iu in 0..nu {
                let u = lerp_grid(-r, r, iu, nu);
                consider(self, PlanarPoint::new(u, v), &mut best);
            }
        }
        let (_, mut center) = best.ok_or(KinematicsError::EmptyWorkspace)?;

        let mut step = 1.0;
        for _ in 0..3 {
            step /= 10.0;
            let mut local_best = best;
            for iv in -10..=10_i64 {
                for iu in -10..=10_i64 {
                    let p = PlanarPoint::new(
                        center.u_mm + step * iu as f64,
                        center.v_mm + step * iv as f64,
                    );
                    consider(self, p, &mut local_best);
                }
            }
            best = local_best;
            center = best.expect("refinement keeps the previous best").1;
        }
        Ok(center)
    }
}
