//! 4-DOF guidance cues encoded as synchronized left/right end-effector
//! waveforms.
//!
//! Translation cues move both end-effectors in the same direction; rotation
//! cues move them in opposite directions, producing a couple about the
//! handle. All eight cues share one scalar magnitude profile: ramp out to the
//! amplitude, hold, and ramp back more slowly.

use crate::config::{CueDefaults, PantographConfig, RampShape};
use crate::kinematics::{Pantograph, PlanarPoint};
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use thiserror::Error;

/// The eight cardinal guidance cues, in canonical reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Forward,
    Backward,
    Up,
    Down,
    TwistLeft,
    TwistRight,
    TiltLeft,
    TiltRight,
}

impl Direction {
    pub const ALL: [Direction; 8] = [
        Direction::Forward,
        Direction::Backward,
        Direction::Up,
        Direction::Down,
        Direction::TwistLeft,
        Direction::TwistRight,
        Direction::TiltLeft,
        Direction::TiltRight,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|d| *d == self).unwrap()
    }

    pub fn is_rotation(self) -> bool {
        matches!(
            self,
            Direction::TwistLeft | Direction::TwistRight | Direction::TiltLeft | Direction::TiltRight
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::TwistLeft => "twist-left",
            Direction::TwistRight => "twist-right",
            Direction::TiltLeft => "tilt-left",
            Direction::TiltRight => "tilt-right",
        }
    }

    pub fn parse(s: &str) -> Option<Direction> {
        Direction::ALL.iter().copied().find(|d| d.as_str() == s)
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One guidance cue: direction plus amplitude and timing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CueSpec {
    pub direction: Direction,
    pub amplitude_mm: f64,
    pub ramp_out_s: f64,
    pub hold_s: f64,
    pub ramp_back_s: f64,
    #[serde(default)]
    pub ramp_shape: RampShape,
}

impl CueSpec {
    pub fn from_defaults(direction: Direction, defaults: &CueDefaults) -> Self {
        Self {
            direction,
            amplitude_mm: defaults.amplitude_mm,
            ramp_out_s: defaults.ramp_out_s,
            hold_s: defaults.hold_s,
            ramp_back_s: defaults.ramp_back_s,
            ramp_shape: defaults.ramp_shape,
        }
    }

    pub fn total_duration_s(&self) -> f64 {
        self.ramp_out_s + self.hold_s + self.ramp_back_s
    }

    /// Scalar magnitude profile in [0, 1]; exactly 1 on the hold plateau and
    /// exactly 0 outside the cue.
    pub fn profile(&self, t_s: f64) -> f64 {
        let ramp = |tau: f64| match self.ramp_shape {
            RampShape::MinimumJerk => min_jerk(tau),
            RampShape::Linear => tau,
        };
        if t_s <= 0.0 {
            0.0
        } else if t_s < self.ramp_out_s {
            ramp(t_s / self.ramp_out_s)
        } else if t_s <= self.ramp_out_s + self.hold_s {
            1.0
        } else if t_s < self.total_duration_s() {
            1.0 - ramp((t_s - self.ramp_out_s - self.hold_s) / self.ramp_back_s)
        } else {
            0.0
        }
    }
}

/// Quintic minimum-jerk smoothstep on [0, 1].
pub fn min_jerk(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    let t3 = t * t * t;
    t3 * (10.0 - 15.0 * t + 6.0 * t * t)
}

/// Left/right end-effector offsets from the workspace center at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CueFrame {
    pub t_s: f64,
    pub left_offset_mm: Vector2<f64>,
    pub right_offset_mm: Vector2<f64>,
}

/// Unit motion directions (u, v) for the left and right end-effectors.
///
/// Sign conventions form a right-handed device frame with +x distal and +z
/// up: twist-left yaws the hand left (right finger leads forward), tilt-right
/// raises the left finger.
pub fn direction_vectors(d: Direction) -> (Vector2<f64>, Vector2<f64>) {
    let (l, r) = match d {
        Direction::Forward => ((1.0, 0.0), (1.0, 0.0)),
        Direction::Backward => ((-1.0, 0.0), (-1.0, 0.0)),
        Direction::Up => ((0.0, 1.0), (0.0, 1.0)),
        Direction::Down => ((0.0, -1.0), (0.0, -1.0)),
        Direction::TwistLeft => ((-1.0, 0.0), (1.0, 0.0)),
        Direction::TwistRight => ((1.0, 0.0), (-1.0, 0.0)),
        Direction::TiltLeft => ((0.0, -1.0), (0.0, 1.0)),
        Direction::TiltRight => ((0.0, 1.0), (0.0, -1.0)),
    };
    (Vector2::new(l.0, l.1), Vector2::new(r.0, r.1))
}

/// Evaluates the cue waveform at time `t_s` since cue onset.
pub fn cue_waveform(spec: &CueSpec, t_s: f64) -> CueFrame {
    let s = spec.profile(t_s) * spec.amplitude_mm;
    let (l, r) = direction_vectors(spec.direction);
    CueFrame {
        t_s,
        left_offset_mm: s * l,
        right_offset_mm: s * r,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CueViolationKind {
    /// Sample leaves the cue-region circle around the workspace center.
    OutsideRegion,
    /// Sample leaves the reachable workspace.
    OutsideWorkspace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CueViolation {
    pub t_s: f64,
    /// 0 = left pantograph, 1 = right.
    pub side: u8,
    pub point: PlanarPoint,
    pub kind: CueViolationKind,
}

/// Report listing every waveform sample that violates the cue region.
#[derive(Debug, Clone, Error)]
pub struct CueRegionReport {
    pub violations: Vec<CueViolation>,
}

impl fmt::Display for CueRegionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "cue leaves its region at {} samples:", self.violations.len())?;
        for v in self.violations.iter().take(5) {
            writeln!(
                f,
                "  t = {:.3} s, side {}, ({:.3}, {:.3}) mm: {:?}",
                v.t_s, v.side, v.point.u_mm, v.point.v_mm, v.kind
            )?;
        }
        if self.violations.len() > 5 {
            writeln!(f, "  ... and {} more", self.violations.len() - 5)?;
        }
        Ok(())
    }
}

/// Confirms every waveform sample (1 ms sampling) stays within the cue-region
/// circle about the workspace center and inside the reachable workspace.
pub fn validate_cue_region(
    spec: &CueSpec,
    cfg: &PantographConfig,
    defaults: &CueDefaults,
) -> Result<(), CueRegionReport> {
    let pantograph = Pantograph::new(cfg.clone());
    let center = match pantograph.workspace_center() {
        Ok(c) => c,
        Err(_) => {
            return Err(CueRegionReport {
                violations: vec![CueViolation {
                    t_s: 0.0,
                    side: 0,
                    point: PlanarPoint::new(f64::NAN, f64::NAN),
                    kind: CueViolationKind::OutsideWorkspace,
                }],
            })
        }
    };
    let radius = defaults.region_radius_mm;

    let n = (spec.total_duration_s() / 0.001).ceil() as usize + 1;
    let mut violations = Vec::new();
    for k in 0..=n {
        let t = k as f64 * 0.001;
        let frame = cue_waveform(spec, t);
        for (side, offset) in [(0u8, frame.left_offset_mm), (1u8, frame.right_offset_mm)] {
            let point = center.offset_by(offset);
            if offset.norm() > radius + 1e-9 {
                violations.push(CueViolation {
                    t_s: t,
                    side,
                    point,
                    kind: CueViolationKind::OutsideRegion,
                });
            } else if pantograph.inverse_kinematics(point).is_err() {
                violations.push(CueViolation {
                    t_s: t,
                    side,
                    point,
                    kind: CueViolationKind::OutsideWorkspace,
                });
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(CueRegionReport { violations })
    }
}

/// One entry of a cue script file: a cue plus its start time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub direction: Direction,
    pub amplitude_mm: f64,
    pub ramp_out_s: f64,
    pub hold_s: f64,
    pub ramp_back_s: f64,
    pub start_time_s: f64,
    #[serde(default)]
    pub ramp_shape: RampShape,
}

impl ScriptEntry {
    pub fn cue(&self) -> CueSpec {
        CueSpec {
            direction: self.direction,
            amplitude_mm: self.amplitude_mm,
            ramp_out_s: self.ramp_out_s,
            hold_s: self.hold_s,
            ramp_back_s: self.ramp_back_s,
            ramp_shape: self.ramp_shape,
        }
    }

    pub fn from_cue(cue: CueSpec, start_time_s: f64) -> Self {
        Self {
            direction: cue.direction,
            amplitude_mm: cue.amplitude_mm,
            ramp_out_s: cue.ramp_out_s,
            hold_s: cue.hold_s,
            ramp_back_s: cue.ramp_back_s,
            start_time_s,
            ramp_shape: cue.ramp_shape,
        }
    }
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("failed to read cue script: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid cue script: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid cue script: {0}")]
    Invalid(String),
}

/// Loads a JSON cue script (an array of [`ScriptEntry`]).
pub fn load_script(path: &Path) -> Result<Vec<ScriptEntry>, ScriptError> {
    let text = std::fs::read_to_string(path)?;
    let entries: Vec<ScriptEntry> = serde_json::from_str(&text)?;
    for (i, e) in entries.iter().enumerate() {
        if e.amplitude_mm < 0.0 {
            return Err(ScriptError::Invalid(format!(
                "entry {i}: amplitude must be non-negative"
            )));
        }
        if e.ramp_out_s <= 0.0 || e.hold_s <= 0.0 || e.ramp_back_s <= 0.0 {
            return Err(ScriptError::Invalid(format!(
                "entry {i}: durations must be positive"
            )));
        }
        if e.start_time_s < 0.0 {
            return Err(ScriptError::Invalid(format!(
                "entry {i}: start time must be non-negative"
            )));
        }
    }
    Ok(entries)
}

/// The default script: all eight cues with the configured defaults, spaced
/// one second apart.
pub fn default_script(defaults: &CueDefaults) -> Vec<ScriptEntry> {
    Direction::ALL
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            ScriptEntry::from_cue(
                CueSpec::from_defaults(d, defaults),
                i as f64 * (defaults.ramp_out_s + defaults.hold_s + defaults.ramp_back_s + 1.0),
            )
        })
        .collect()
}
