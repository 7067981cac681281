//! Discrete-time simulation of the motor + gearbox + encoder plant under the
//! PD current controller.
//!
//! Each pantograph motor is modeled at the gearbox output shaft: reflected
//! inertia, viscous damping, and a torque proportional to the clamped motor
//! current. The loop runs one semi-implicit Euler physics step per control
//! step, mirroring the sampled-data structure of the real system. Position
//! feedback passes through the quadrature encoder model; the reference is
//! quantized through the same model so the loop is quiescent at rest.

use crate::config::{ControllerGains, LoopConfig, PantographConfig};
use crate::cues::{cue_waveform, CueSpec};
use crate::kinematics::{JointAngles, KinematicsError, Pantograph, PlanarPoint};
use serde::Serialize;
use std::io::Write;
use thiserror::Error;

/// Velocity magnitude treated as a numerical explosion, rad/s.
const OMEGA_SANITY_RAD_PER_S: f64 = 1e6;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ActuationError {
    #[error("numerical blowup: |omega| = {omega_rad_per_s:.3e} rad/s at t = {time_s:.6} s (check dt and plant parameters)")]
    NumericalBlowup { omega_rad_per_s: f64, time_s: f64 },
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// Commanded current with a saturation flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentCommand {
    pub amps: f64,
    pub saturated: bool,
}

/// PD control law: desired output-shaft torque converted to motor current
/// through the gearbox and torque constant, clamped to the current limit.
pub fn pd_current(
    gains: &ControllerGains,
    cfg: &PantographConfig,
    theta_err_rad: f64,
    theta_err_rate_rad_per_s: f64,
) -> CurrentCommand {
    let torque =
        gains.kp_nm_per_rad * theta_err_rad + gains.kd_nm_s_per_rad * theta_err_rate_rad_per_s;
    let unclamped = torque / (cfg.gear_ratio * cfg.torque_constant_kt_nm_per_a);
    let limit = cfg.current_limit_imax_a;
    let amps = unclamped.clamp(-limit, limit);
    CurrentCommand {
        amps,
        saturated: amps != unclamped,
    }
}

/// Floor-quantized encoder reading for an output-shaft angle.
pub fn encoder_read(cfg: &PantographConfig, theta_out_rad: f64) -> i64 {
    let counts = theta_out_rad / (2.0 * std::f64::consts::PI) * cfg.counts_per_output_rev();
    counts.floor() as i64
}

/// Integration state of one motor, at the gearbox output shaft.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorState {
    pub theta_out_rad: f64,
    pub omega_rad_per_s: f64,
    pub time_s: f64,
    pub last_encoder_count: i64,
}

impl MotorState {
    pub fn at_rest(cfg: &PantographConfig, theta_out_rad: f64) -> Self {
        Self {
            theta_out_rad,
            omega_rad_per_s: 0.0,
            time_s: 0.0,
            last_encoder_count: encoder_read(cfg, theta_out_rad),
        }
    }
}

/// One semi-implicit Euler step of the plant under a commanded current.
pub fn plant_step(
    state: &MotorState,
    i_cmd_a: f64,
    dt_s: f64,
    loop_cfg: &LoopConfig,
    cfg: &PantographConfig,
) -> Result<MotorState, ActuationError> {
    let i = i_cmd_a.clamp(-loop_cfg.current_limit_a, loop_cfg.current_limit_a);
    let torque = cfg.gear_ratio * cfg.torque_constant_kt_nm_per_a * i
        - loop_cfg.viscous_damping_nm_s_per_rad * state.omega_rad_per_s;
    let omega = state.omega_rad_per_s + torque / loop_cfg.motor_inertia_reflected_kg_m2 * dt_s;
    if !omega.is_finite() || omega.abs() > OMEGA_SANITY_RAD_PER_S {
        return Err(ActuationError::NumericalBlowup {
            omega_rad_per_s: omega,
            time_s: state.time_s,
        });
    }
    let theta = state.theta_out_rad + omega * dt_s;
    Ok(MotorState {
        theta_out_rad: theta,
        omega_rad_per_s: omega,
        time_s: state.time_s + dt_s,
        last_encoder_count: encoder_read(cfg, theta),
    })
}

/// One recorded control step of a two-pantograph tracking run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingSample {
    pub t_s: f64,
    pub ref_left: PlanarPoint,
    pub act_left: PlanarPoint,
    pub ref_right: PlanarPoint,
    pub act_right: PlanarPoint,
    /// Current of the more heavily loaded motor per side, A.
    pub current_left_a: f64,
    pub current_right_a: f64,
}

/// Per-axis tracking error statistics for one pantograph, mm.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct AxisErrors {
    pub max_u_mm: f64,
    pub max_v_mm: f64,
    pub rms_u_mm: f64,
    pub rms_v_mm: f64,
}

/// Result of simulating the closed loop over one cue.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingResult {
    pub samples: Vec<TrackingSample>,
    pub max_error_mm: f64,
    pub rms_error_mm: f64,
    pub left_errors: AxisErrors,
    pub right_errors: AxisErrors,
    /// Fraction of control steps where at least one motor saturated.
    pub saturation_fraction: f64,
}

impl TrackingResult {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "t_s,ref_left_u,ref_left_v,act_left_u,act_left_v,ref_right_u,ref_right_v,act_right_u,act_right_v,i_left_A,i_right_A"
        )?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                s.t_s,
                s.ref_left.u_mm,
                s.ref_left.v_mm,
                s.act_left.u_mm,
                s.act_left.v_mm,
                s.ref_right.u_mm,
                s.ref_right.v_mm,
                s.act_right.u_mm,
                s.act_right.v_mm,
                s.current_left_a,
                s.current_right_a
            )?;
        }
        Ok(())
    }
}

/// Controller state for one motor: previous reference and the filtered
/// measured velocity.
struct MotorLoop {
    state: MotorState,
    prev_ref_rad: f64,
    prev_count: i64,
    vel_filt_rad_per_s: f64,
}

struct PantographLoop {
    motors: [MotorLoop; 2],
}

impl PantographLoop {
    fn new(cfg: &PantographConfig, q0: JointAngles) -> Self {
        let mk = |theta: f64| MotorLoop {
            state: MotorState::at_rest(cfg, theta),
            prev_ref_rad: theta,
            prev_count: encoder_read(cfg, theta),
            vel_filt_rad_per_s: 0.0,
        };
        Self {
            motors: [mk(q0.theta1_rad), mk(q0.theta2_rad)],
        }
    }

    fn actual_angles(&self) -> JointAngles {
        JointAngles::new(
            self.motors[0].state.theta_out_rad,
            self.motors[1].state.theta_out_rad,
        )
    }

    /// Runs one control step toward `q_ref`; returns the signed current of
    /// the more heavily loaded motor and whether any motor saturated.
    fn step(
        &mut self,
        q_ref: JointAngles,
        gains: &ControllerGains,
        loop_cfg: &LoopConfig,
        cfg: &PantographConfig,
    ) -> Result<(f64, bool), ActuationError> {
        let dt = loop_cfg.dt();
        let rad_per_count = cfg.rad_per_count();
        let alpha = {
            let tau = 1.0 / (2.0 * std::f64::consts::PI * loop_cfg.derivative_filter_cutoff_hz);
            dt / (dt + tau)
        };

        let refs = [q_ref.theta1_rad, q_ref.theta2_rad];
        let mut worst_current = 0.0_f64;
        let mut any_saturated = false;
        for (m, &theta_ref) in self.motors.iter_mut().zip(refs.iter()) {
            // Position error in count space: quantizing the reference through
            // the same encoder model keeps the loop exactly quiescent at rest.
            let err_counts = encoder_read(cfg, theta_ref) - m.state.last_encoder_count;
            let theta_err = err_counts as f64 * rad_per_count;

            let ref_rate = (theta_ref - m.prev_ref_rad) / dt;
            // Backward difference of the quantized position, low-passed.
            let raw_meas_rate = (m.state.last_encoder_count - m.prev_count) as f64
                * rad_per_count
                / dt;
            m.vel_filt_rad_per_s += alpha * (raw_meas_rate - m.vel_filt_rad_per_s);
            let theta_err_rate = ref_rate - m.vel_filt_rad_per_s;

            let cmd = pd_current(gains, cfg, theta_err, theta_err_rate);
            m.prev_count = m.state.last_encoder_count;
            m.state = plant_step(&m.state, cmd.amps, dt, loop_cfg, cfg)?;
            m.prev_ref_rad = theta_ref;
            if cmd.amps.abs() > worst_current.abs() {
                worst_current = cmd.amps;
            }
            any_saturated |= cmd.saturated;
        }
        Ok((worst_current, any_saturated))
    }
}

/// Simulates both pantographs tracking a cue at the control rate, from cue
/// onset to 0.2 s past cue end.
pub fn track_trajectory(
    cue: &CueSpec,
    cfg: &PantographConfig,
    gains: &ControllerGains,
    loop_cfg: &LoopConfig,
) -> Result<TrackingResult, ActuationError> {
    let pantograph = Pantograph::new(cfg.clone());
    let center = pantograph.workspace_center()?;
    let dt = loop_cfg.dt();
    let n_steps = ((cue.total_duration_s() + 0.2) / dt).ceil() as usize;

    let q0 = pantograph.inverse_kinematics(center)?;
    let mut left = PantographLoop::new(cfg, q0);
    let mut right = PantographLoop::new(cfg, q0);

    let mut samples = Vec::with_capacity(n_steps + 1);
    let mut saturated_steps = 0usize;
    let mut sum_sq = [0.0_f64; 4];
    let mut max_abs = [0.0_f64; 4];
    let mut max_error = 0.0_f64;
    let mut sum_sq_norm = 0.0_f64;
    let mut current_left = 0.0;
    let mut current_right = 0.0;

    for k in 0..=n_steps {
        let t = k as f64 * dt;
        let frame = cue_waveform(cue, t);
        let ref_left = center.offset_by(frame.left_offset_mm);
        let ref_right = center.offset_by(frame.right_offset_mm);
        let q_ref_left = pantograph.inverse_kinematics(ref_left)?;
        let q_ref_right = pantograph.inverse_kinematics(ref_right)?;

        let act_left = pantograph.forward_kinematics(left.actual_angles())?;
        let act_right = pantograph.forward_kinematics(right.actual_angles())?;

        let errs = [
            act_left.u_mm - ref_left.u_mm,
            act_left.v_mm - ref_left.v_mm,
            act_right.u_mm - ref_right.u_mm,
            act_right.v_mm - ref_right.v_mm,
        ];
        for (i, e) in errs.iter().enumerate() {
            sum_sq[i] += e * e;
            max_abs[i] = max_abs[i].max(e.abs());
        }
        let el = errs[0].hypot(errs[1]);
        let er = errs[2].hypot(errs[3]);
        max_error = max_error.max(el).max(er);
        sum_sq_norm += el * el + er * er;

        samples.push(TrackingSample {
            t_s: t,
            ref_left,
            act_left,
            ref_right,
            act_right,
            current_left_a: current_left,
            current_right_a: current_right,
        });

        if k < n_steps {
            let (cl, sat_l) = left.step(q_ref_left, gains, loop_cfg, cfg)?;
            let (cr, sat_r) = right.step(q_ref_right, gains, loop_cfg, cfg)?;
            current_left = cl;
            current_right = cr;
            if sat_l || sat_r {
                saturated_steps += 1;
            }
        }
    }

    let n = samples.len() as f64;
    let axis = |i: usize, j: usize| AxisErrors {
        max_u_mm: max_abs[i],
        max_v_mm: max_abs[j],
        rms_u_mm: (sum_sq[i] / n).sqrt(),
        rms_v_mm: (sum_sq[j] / n).sqrt(),
    };
    Ok(TrackingResult {
        max_error_mm: max_error,
        rms_error_mm: (sum_sq_norm / (2.0 * n)).sqrt(),
        left_errors: axis(0, 1),
        right_errors: axis(2, 3),
        saturation_fraction: saturated_steps as f64 / n_steps.max(1) as f64,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{CueDefaults, DeviceConfig};
    use crate::cues::Direction;

    #[test]
    fn pd_current_zero_error_is_zero() {
        let cfg = PantographConfig::default();
        let gains = ControllerGains::default();
        let cmd = pd_current(&gains, &cfg, 0.0, 0.0);
        assert_eq!(cmd.amps, 0.0);
        assert!(!cmd.saturated);
    }

    #[test]
    fn pd_current_hand_value_and_saturation() {
        let cfg = PantographConfig::default();
        let gains = ControllerGains::default();
        // kp·0.1 / (64·kt) ≈ 4.3846 A, clamped to the 1 A limit.
        let unclamped: f64 = 5.5 * 0.1 / (64.0 * 0.00196);
        assert!((unclamped - 4.384_566_326_530_612).abs() < 1e-12);
        let cmd = pd_current(&gains, &cfg, 0.1, 0.0);
        assert_eq!(cmd.amps, 1.0);
        assert!(cmd.saturated);
    }

    #[test]
    fn pd_current_linear_below_saturation() {
        let cfg = PantographConfig::default();
        let gains = ControllerGains::default();
        let base = pd_current(&gains, &cfg, 1e-3, 2e-3);
        assert!(!base.saturated);
        for alpha in [0.25, 0.5, 2.0] {
            let scaled = pd_current(&gains, &cfg, alpha * 1e-3, alpha * 2e-3);
            assert!((scaled.amps - alpha * base.amps).abs() < 1e-12);
        }
    }

    #[test]
    fn pd_implements_the_control_law_below_saturation() {
        let cfg = PantographConfig::default();
        let gains = ControllerGains::default();
        // Independent algebraic route.
        let formula = |e: f64, de: f64| (5.5 * e + 0.004 * de) / (64.0 * 0.00196);
        for (e, de) in [(1e-3, 0.0), (0.0, 1.0), (5e-3, -2.0), (-2e-3, 0.5)] {
            let cmd = pd_current(&gains, &cfg, e, de);
            assert!(!cmd.saturated);
            assert!((cmd.amps - formula(e, de)).abs() < 1e-12);
        }
    }

    #[test]
    fn encoder_zero_full_rev_and_step() {
        let cfg = PantographConfig::default();
        assert_eq!(encoder_read(&cfg, 0.0), 0);
        // One full output revolution: 50 counts × 4 quadrature × 64:1.
        assert_eq!(encoder_read(&cfg, 2.0 * std::f64::consts::PI), 12800);
        let step = cfg.rad_per_count();
        assert!((step - 2.0 * std::f64::consts::PI / 12800.0).abs() < 1e-18);
        assert!((step - 4.908_738_521_234_052e-4).abs() < 1e-12);
    }

    #[test]
    fn encoder_monotone_and_within_one_count() {
        let cfg = PantographConfig::default();
        let mut prev = i64::MIN;
        for k in -200..200 {
            let theta = k as f64 * 1e-3;
            let c = encoder_read(&cfg, theta);
            assert!(c >= prev);
            prev = c;
            // Quantization error below one count.
            let back = c as f64 * cfg.rad_per_count();
            assert!((theta - back).abs() < cfg.rad_per_count());
        }
    }

    #[test]
    fn plant_equilibrium_only_advances_time() {
        let cfg = PantographConfig::default();
        let lc = LoopConfig::default();
        let s0 = MotorState::at_rest(&cfg, 0.3);
        let s1 = plant_step(&s0, 0.0, lc.dt(), &lc, &cfg).unwrap();
        assert_eq!(s1.theta_out_rad, s0.theta_out_rad);
        assert_eq!(s1.omega_rad_per_s, 0.0);
        assert!(s1.time_s > s0.time_s);
    }

    #[test]
    fn plant_constant_current_matches_discrete_first_order_response() {
        let cfg = PantographConfig::default();
        let lc = LoopConfig::default();
        let dt = lc.dt();
        let tau = cfg.gear_ratio * cfg.torque_constant_kt_nm_per_a * 0.5;
        let omega_ss = tau / lc.viscous_damping_nm_s_per_rad;
        let lambda = lc.viscous_damping_nm_s_per_rad / lc.motor_inertia_reflected_kg_m2 * dt;

        let mut s = MotorState::at_rest(&cfg, 0.0);
        let mut prev_omega = 0.0;
        for k in 1..=2000 {
            s = plant_step(&s, 0.5, dt, &lc, &cfg).unwrap();
            // Independent closed form of the same recurrence.
            let expected = omega_ss * (1.0 - (1.0 - lambda).powi(k));
            assert!(
                (s.omega_rad_per_s - expected).abs() < 1e-9 * omega_ss,
                "step {k}: {} vs {}",
                s.omega_rad_per_s,
                expected
            );
            assert!(s.omega_rad_per_s >= prev_omega);
            prev_omega = s.omega_rad_per_s;
        }
        assert!(s.omega_rad_per_s < omega_ss);
    }

    #[test]
    fn plant_zero_input_dissipates() {
        let cfg = PantographConfig::default();
        let lc = LoopConfig::default();
        let mut s = MotorState {
            theta_out_rad: 0.0,
            omega_rad_per_s: 5.0,
            time_s: 0.0,
            last_encoder_count: 0,
        };
        let mut ke = 0.5 * lc.motor_inertia_reflected_kg_m2 * s.omega_rad_per_s.powi(2);
        for _ in 0..500 {
            s = plant_step(&s, 0.0, lc.dt(), &lc, &cfg).unwrap();
            let ke_new = 0.5 * lc.motor_inertia_reflected_kg_m2 * s.omega_rad_per_s.powi(2);
            assert!(ke_new < ke);
            ke = ke_new;
        }
    }

    #[test]
    fn plant_blowup_detected() {
        let cfg = PantographConfig::default();
        let mut lc = LoopConfig::default();
        lc.motor_inertia_reflected_kg_m2 = 1e-12;
        lc.current_limit_a = 1e6;
        let s = MotorState {
            theta_out_rad: 0.0,
            omega_rad_per_s: 10.0,
            time_s: 0.0,
            last_encoder_count: 0,
        };
        assert!(matches!(
            plant_step(&s, 1.0, 1.0, &lc, &cfg),
            Err(ActuationError::NumericalBlowup { .. })
        ));
    }

    fn default_cue(direction: Direction) -> CueSpec {
        CueSpec::from_defaults(direction, &CueDefaults::default())
    }

    #[test]
    fn zero_amplitude_cue_tracks_exactly() {
        let dc = DeviceConfig::default();
        let mut cue = default_cue(Direction::Up);
        cue.amplitude_mm = 0.0;
        let result =
            track_trajectory(&cue, &dc.pantograph, &dc.controller, &dc.control_loop).unwrap();
        assert!(result.max_error_mm < 1e-9, "max error {}", result.max_error_mm);
        assert_eq!(result.saturation_fraction, 0.0);
    }

    #[test]
    fn default_cues_track_within_budget() {
        let dc = DeviceConfig::default();
        for d in Direction::ALL {
            let result = track_trajectory(
                &default_cue(d),
                &dc.pantograph,
                &dc.controller,
                &dc.control_loop,
            )
            .unwrap();
            assert!(
                result.max_error_mm < 0.3,
                "{d}: max error {} mm",
                result.max_error_mm
            );
        }
    }

    #[test]
    fn tracking_stays_inside_inflated_cue_circle() {
        let dc = DeviceConfig::default();
        let pantograph = Pantograph::new(dc.pantograph.clone());
        let center = pantograph.workspace_center().unwrap();
        for d in Direction::ALL {
            let result = track_trajectory(
                &default_cue(d),
                &dc.pantograph,
                &dc.controller,
                &dc.control_loop,
            )
            .unwrap();
            let allowed = dc.cue.region_radius_mm + result.max_error_mm + 1e-9;
            for s in &result.samples {
                assert!(s.act_left.distance_to(&center) <= allowed);
                assert!(s.act_right.distance_to(&center) <= allowed);
            }
        }
    }

    #[test]
    fn doubling_control_rate_does_not_degrade_tracking() {
        let dc = DeviceConfig::default();
        let cue = default_cue(Direction::Up);
        let base =
            track_trajectory(&cue, &dc.pantograph, &dc.controller, &dc.control_loop).unwrap();
        let mut fast_loop = dc.control_loop;
        fast_loop.control_rate_hz *= 2.0;
        let fast = track_trajectory(&cue, &dc.pantograph, &dc.controller, &fast_loop).unwrap();
        assert!(
            fast.max_error_mm <= base.max_error_mm * 1.10,
            "{} vs {}",
            fast.max_error_mm,
            base.max_error_mm
        );
    }

    #[test]
    fn tracking_is_deterministic() {
        let dc = DeviceConfig::default();
        let cue = default_cue(Direction::TwistLeft);
        let a = track_trajectory(&cue, &dc.pantograph, &dc.controller, &dc.control_loop).unwrap();
        let b = track_trajectory(&cue, &dc.pantograph, &dc.controller, &dc.control_loop).unwrap();
        assert_eq!(a, b);
    }
}
