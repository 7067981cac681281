//! Device configuration: linkage geometry, drivetrain constants, controller
//! gains, loop parameters, cue defaults, and analysis parameters.
//!
//! Everything lives in one hierarchical TOML document so a single file fully
//! describes a device and an experiment. Key names carry explicit units
//! (`_mm`, `_s`, `_hz`, `_a`, ...). Unknown keys are rejected on parse.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("failed to serialize config: {0}")]
    Emit(#[from] toml::ser::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Five-bar pantograph geometry and drivetrain constants.
///
/// Angles are output-shaft angles measured counterclockwise from the +u axis;
/// the u/v plane has its origin at the midpoint between the two motor axes,
/// u pointing toward the right motor and v up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PantographConfig {
    pub upper_link_a_mm: f64,
    pub lower_link_b_mm: f64,
    /// Distance between the two motor axes. Not a published dimension; the
    /// default is comparable to the link scale and configurable.
    pub base_separation_d_mm: f64,
    pub joint_angle_min_rad: f64,
    pub joint_angle_max_rad: f64,
    pub torque_constant_kt_nm_per_a: f64,
    pub gear_ratio: f64,
    pub current_limit_imax_a: f64,
    pub encoder_counts_per_motor_rev: u32,
    /// Quadrature decoding multiplier applied to the raw encoder line count.
    pub quadrature_multiplier: u32,
    pub gearbox_efficiency: f64,
    /// Jacobian determinant magnitude below which a configuration is treated
    /// as singular.
    pub singularity_tol_mm2_per_rad2: f64,
    /// Minimum sine of the transmission angles (elbow angles and the angle
    /// between the lower links) for force output to count as controllable.
    /// Configurations under this margin report zero isotropic force.
    pub transmission_margin_sin: f64,
    /// The workspace center maximizes the isotropic force guaranteed over a
    /// disc of this radius (the cue region), not just at a single point.
    pub center_guard_radius_mm: f64,
}

impl Default for PantographConfig {
    fn default() -> Self {
        Self {
            upper_link_a_mm: 10.0,
            lower_link_b_mm: 13.0,
            base_separation_d_mm: 15.0,
            joint_angle_min_rad: -PI,
            joint_angle_max_rad: PI,
            torque_constant_kt_nm_per_a: 0.00196,
            gear_ratio: 64.0,
            current_limit_imax_a: 1.0,
            encoder_counts_per_motor_rev: 50,
            quadrature_multiplier: 4,
            gearbox_efficiency: 1.0,
            singularity_tol_mm2_per_rad2: 1e-6,
            transmission_margin_sin: 0.1,
            center_guard_radius_mm: 3.0,
        }
    }
}

impl PantographConfig {
    /// Maximum continuous output-shaft torque, N·m.
    pub fn max_output_torque_nm(&self) -> f64 {
        self.gear_ratio * self.torque_constant_kt_nm_per_a * self.current_limit_imax_a
            * self.gearbox_efficiency
    }

    /// Encoder counts per output-shaft revolution after quadrature decoding
    /// and the gearbox.
    pub fn counts_per_output_rev(&self) -> f64 {
        f64::from(self.encoder_counts_per_motor_rev)
            * f64::from(self.quadrature_multiplier)
            * self.gear_ratio
    }

    /// Output-shaft angle represented by one encoder count, rad.
    pub fn rad_per_count(&self) -> f64 {
        2.0 * PI / self.counts_per_output_rev()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.upper_link_a_mm <= 0.0 || self.lower_link_b_mm <= 0.0 {
            return Err(ConfigError::Invalid("link lengths must be positive".into()));
        }
        if self.base_separation_d_mm < 0.0 {
            return Err(ConfigError::Invalid(
                "base separation must be non-negative".into(),
            ));
        }
        if 2.0 * (self.upper_link_a_mm + self.lower_link_b_mm) <= self.base_separation_d_mm {
            return Err(ConfigError::Invalid(format!(
                "unreachable geometry: 2(a+b) = {} mm must exceed d = {} mm",
                2.0 * (self.upper_link_a_mm + self.lower_link_b_mm),
                self.base_separation_d_mm
            )));
        }
        if self.joint_angle_min_rad >= self.joint_angle_max_rad {
            return Err(ConfigError::Invalid("empty joint angle range".into()));
        }
        if self.torque_constant_kt_nm_per_a <= 0.0
            || self.gear_ratio <= 0.0
            || self.current_limit_imax_a <= 0.0
        {
            return Err(ConfigError::Invalid(
                "drivetrain constants must be positive".into(),
            ));
        }
        if self.encoder_counts_per_motor_rev == 0 || self.quadrature_multiplier == 0 {
            return Err(ConfigError::Invalid("encoder resolution must be nonzero".into()));
        }
        if !(0.0..=1.0).contains(&self.gearbox_efficiency) || self.gearbox_efficiency == 0.0 {
            return Err(ConfigError::Invalid(
                "gearbox efficiency must be in (0, 1]".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.transmission_margin_sin) {
            return Err(ConfigError::Invalid(
                "transmission margin must be in [0, 1)".into(),
            ));
        }
        if self.center_guard_radius_mm < 0.0 {
            return Err(ConfigError::Invalid(
                "center guard radius must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// PD gains of the joint-space current controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerGains {
    pub kp_nm_per_rad: f64,
    pub kd_nm_s_per_rad: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            kp_nm_per_rad: 5.5,
            kd_nm_s_per_rad: 0.004,
        }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.kp_nm_per_rad <= 0.0 {
            return Err(ConfigError::Invalid("kp must be positive".into()));
        }
        if self.kd_nm_s_per_rad < 0.0 {
            return Err(ConfigError::Invalid("kd must be non-negative".into()));
        }
        Ok(())
    }
}

/// Control-loop and plant parameters for the discrete-time simulation.
///
/// The inertia and damping are reflected to the gearbox output shaft. They
/// are not published constants; the defaults keep the documented gains stable
/// at the documented loop rate and settle well inside a cue ramp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopConfig {
    pub control_rate_hz: f64,
    pub motor_inertia_reflected_kg_m2: f64,
    pub viscous_damping_nm_s_per_rad: f64,
    pub current_limit_a: f64,
    /// First-order low-pass cutoff applied to the measured velocity before
    /// the derivative term.
    pub derivative_filter_cutoff_hz: f64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            control_rate_hz: 830.0,
            motor_inertia_reflected_kg_m2: 1e-4,
            viscous_damping_nm_s_per_rad: 0.02,
            current_limit_a: 1.0,
            derivative_filter_cutoff_hz: 50.0,
        }
    }
}

impl LoopConfig {
    pub fn dt(&self) -> f64 {
        1.0 / self.control_rate_hz
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.control_rate_hz <= 0.0 {
            return Err(ConfigError::Invalid("control rate must be positive".into()));
        }
        if self.motor_inertia_reflected_kg_m2 <= 0.0 {
            return Err(ConfigError::Invalid("inertia must be positive".into()));
        }
        if self.viscous_damping_nm_s_per_rad < 0.0 {
            return Err(ConfigError::Invalid("damping must be non-negative".into()));
        }
        if self.current_limit_a <= 0.0 {
            return Err(ConfigError::Invalid("current limit must be positive".into()));
        }
        if self.derivative_filter_cutoff_hz <= 0.0 {
            return Err(ConfigError::Invalid(
                "derivative filter cutoff must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Shape of the cue displacement ramps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RampShape {
    /// Quintic minimum-jerk ramp (zero end-point velocity and acceleration).
    #[default]
    MinimumJerk,
    Linear,
}

/// Default cue amplitude and timing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CueDefaults {
    pub amplitude_mm: f64,
    pub ramp_out_s: f64,
    pub hold_s: f64,
    pub ramp_back_s: f64,
    /// Radius of the workspace circle the cues are required to stay inside.
    pub region_radius_mm: f64,
    pub ramp_shape: RampShape,
}

impl Default for CueDefaults {
    fn default() -> Self {
        Self {
            amplitude_mm: 3.0,
            ramp_out_s: 0.2,
            hold_s: 0.6,
            ramp_back_s: 0.5,
            region_radius_mm: 3.0,
            ramp_shape: RampShape::MinimumJerk,
        }
    }
}

impl CueDefaults {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.amplitude_mm < 0.0 {
            return Err(ConfigError::Invalid("cue amplitude must be non-negative".into()));
        }
        if self.ramp_out_s <= 0.0 || self.hold_s <= 0.0 || self.ramp_back_s <= 0.0 {
            return Err(ConfigError::Invalid("cue durations must be positive".into()));
        }
        if self.region_radius_mm <= 0.0 {
            return Err(ConfigError::Invalid("cue region radius must be positive".into()));
        }
        Ok(())
    }
}

/// Parameters of the motion-trial analysis pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisParams {
    /// Zero-phase low-pass cutoff applied to pose channels before
    /// differentiation. Zero disables smoothing.
    pub smoothing_cutoff_hz: f64,
    /// Lever arm used to express rotational channels in millimeters so that
    /// translation and rotation accelerations are comparable.
    pub rotation_lever_arm_mm: f64,
    /// Delay detection threshold as a multiple of the pre-cue acceleration
    /// noise floor.
    pub delay_threshold_factor: f64,
    /// Minimum acceleration noise floor, mm/s² equivalent.
    pub delay_min_floor_mm_per_s2: f64,
    /// Length of the pre-cue window used for baseline re-zeroing and the
    /// noise floor.
    pub baseline_window_s: f64,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self {
            smoothing_cutoff_hz: 8.0,
            rotation_lever_arm_mm: 100.0,
            delay_threshold_factor: 5.0,
            delay_min_floor_mm_per_s2: 10.0,
            baseline_window_s: 0.2,
        }
    }
}

impl AnalysisParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.smoothing_cutoff_hz < 0.0 {
            return Err(ConfigError::Invalid("smoothing cutoff must be >= 0".into()));
        }
        if self.rotation_lever_arm_mm <= 0.0 {
            return Err(ConfigError::Invalid("lever arm must be positive".into()));
        }
        if self.delay_threshold_factor <= 0.0 || self.delay_min_floor_mm_per_s2 <= 0.0 {
            return Err(ConfigError::Invalid(
                "delay detection thresholds must be positive".into(),
            ));
        }
        if self.baseline_window_s <= 0.0 {
            return Err(ConfigError::Invalid("baseline window must be positive".into()));
        }
        Ok(())
    }
}

/// The complete device + experiment configuration document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceConfig {
    pub pantograph: PantographConfig,
    pub controller: ControllerGains,
    #[serde(rename = "loop")]
    pub control_loop: LoopConfig,
    pub cue: CueDefaults,
    pub analysis: AnalysisParams,
}

impl DeviceConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.pantograph.validate()?;
        self.controller.validate()?;
        self.control_loop.validate()?;
        self.cue.validate()?;
        self.analysis.validate()?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: DeviceConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        DeviceConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_roundtrip_is_identical() {
        let cfg = DeviceConfig::default();
        let text = cfg.to_toml_string().unwrap();
        let reparsed = DeviceConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, reparsed);
        // Emitting the reparsed config reproduces the same bytes.
        assert_eq!(text, reparsed.to_toml_string().unwrap());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut text = DeviceConfig::default().to_toml_string().unwrap();
        text.push_str("\n[pantograph2]\nfoo = 1\n");
        assert!(DeviceConfig::from_toml_str(&text).is_err());

        let bad_field = "[pantograph]\nupper_link_a_mm = 10.0\nnot_a_field = 3\n";
        assert!(DeviceConfig::from_toml_str(bad_field).is_err());
    }

    #[test]
    fn reachability_is_enforced() {
        let mut cfg = DeviceConfig::default();
        cfg.pantograph.base_separation_d_mm = 100.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn drivetrain_helpers() {
        let p = PantographConfig::default();
        assert_eq!(p.counts_per_output_rev(), 12800.0);
        assert!((p.max_output_torque_nm() - 0.12544).abs() < 1e-12);
    }
}
