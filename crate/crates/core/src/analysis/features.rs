//! Per-trial feature extraction: motion delay and peak displacements.

use crate::analysis::filter::{kinematics_of_trial, TrialKinematics};
use crate::analysis::AnalysisError;
use crate::config::AnalysisParams;
use crate::cues::Direction;
use crate::trial::{Dof, Part, TrialRecord};
use serde::Serialize;

/// Scale factor expressing a rotational channel (deg) in millimeters.
fn rotation_scale(params: &AnalysisParams) -> f64 {
    params.rotation_lever_arm_mm * std::f64::consts::PI / 180.0
}

/// Detects the motion delay: the time from cue onset to the first local
/// maximum of any DOF's |acceleration| that exceeds the per-channel
/// threshold. Rotational channels are scaled by the configured lever arm so
/// all six accelerations are commensurate.
///
/// The threshold is `delay_threshold_factor` times the pre-cue RMS
/// acceleration (floored at `delay_min_floor_mm_per_s2`).
pub fn detect_delay(
    kin: &TrialKinematics,
    cue_onset_s: f64,
    params: &AnalysisParams,
) -> Result<f64, AnalysisError> {
    let n = kin.t_s.len();
    if n < 5 {
        return Err(AnalysisError::TooShort { needed: 5, got: n });
    }
    let rot = rotation_scale(params);
    let scale = |d: Dof| if d.is_rotation() { rot } else { 1.0 };

    // Pre-cue noise floor per channel, skipping the edge-affected first
    // samples of the one-sided derivative stencils.
    let pre_end = kin.t_s.partition_point(|&t| t < cue_onset_s);
    let pre_start = 2.min(pre_end);
    let mut thresholds = [0.0f64; 6];
    for d in Dof::ALL {
        let acc = &kin.acceleration[d.index()];
        let window = &acc[pre_start..pre_end];
        let rms = if window.is_empty() {
            0.0
        } else {
            (window.iter().map(|a| a * a).sum::<f64>() / window.len() as f64).sqrt()
        };
        let floor = (rms * scale(d)).max(params.delay_min_floor_mm_per_s2);
        thresholds[d.index()] = params.delay_threshold_factor * floor;
    }

    let start = kin.index_at(cue_onset_s).max(1);
    for i in start..n - 1 {
        for d in Dof::ALL {
            let acc = &kin.acceleration[d.index()];
            let s = scale(d);
            let mag = (acc[i] * s).abs();
            if mag > thresholds[d.index()]
                && mag >= (acc[i - 1] * s).abs()
                && mag >= (acc[i + 1] * s).abs()
            {
                return Ok(kin.t_s[i] - cue_onset_s);
            }
        }
    }
    Err(AnalysisError::NoMotionDetected)
}

/// Signed peak displacement per DOF: the value of the maximal absolute
/// excursion from the re-zeroed baseline within the window.
pub fn peak_displacement(
    kin: &TrialKinematics,
    window: (f64, f64),
) -> Result<[f64; 6], AnalysisError> {
    let start = kin.index_at(window.0);
    let end = kin.t_s.partition_point(|&t| t <= window.1);
    if start >= end {
        return Err(AnalysisError::TooShort { needed: 1, got: 0 });
    }
    let mut peaks = [0.0f64; 6];
    for d in Dof::ALL {
        let series = &kin.displacement[d.index()][start..end];
        let mut best = 0.0f64;
        for &v in series {
            if v.abs() > best.abs() {
                best = v;
            }
        }
        peaks[d.index()] = best;
    }
    Ok(peaks)
}

/// Extracted features of one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialFeatures {
    pub subject_id: String,
    pub part: Part,
    pub cue: Direction,
    pub repeats: u32,
    /// None when no acceleration peak crossed the detection threshold.
    pub delay_s: Option<f64>,
    /// Signed peaks, mm ×3 then deg ×3.
    pub peaks: [f64; 6],
    /// Norm of the peaks with rotations scaled to mm equivalents.
    pub peak_magnitude: f64,
}

/// Runs the full per-trial pipeline: smoothing, differentiation, delay
/// detection, and peak extraction over the post-onset window.
pub fn extract_features(
    trial: &TrialRecord,
    params: &AnalysisParams,
) -> Result<TrialFeatures, AnalysisError> {
    let kin = kinematics_of_trial(trial, params)?;
    let delay_s = match detect_delay(&kin, 0.0, params) {
        Ok(d) => Some(d),
        Err(AnalysisError::NoMotionDetected) => None,
        Err(e) => return Err(e),
    };
    let end = *kin.t_s.last().unwrap();
    let peaks = peak_displacement(&kin, (0.0, end))?;

    let rot = rotation_scale(params);
    let peak_magnitude = peaks
        .iter()
        .zip(Dof::ALL.iter())
        .map(|(p, d)| {
            let s = if d.is_rotation() { rot } else { 1.0 };
            (p * s).powi(2)
        })
        .sum::<f64>()
        .sqrt();

    Ok(TrialFeatures {
        subject_id: trial.subject_id.clone(),
        part: trial.part,
        cue: trial.cue,
        repeats: trial.repeats,
        delay_s,
        peaks,
        peak_magnitude,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cues::min_jerk;
    use crate::synth::ACCEL_PEAK_FRACTION;
    use crate::trial::Pose6;

    /// Noiseless minimum-jerk rise on one DOF starting at `onset`.
    fn min_jerk_trial(dof: Dof, onset: f64, move_dur: f64, gain: f64) -> TrialRecord {
        let rate = 80.0;
        let n = 360;
        TrialRecord {
            subject_id: "s01".into(),
            part: Part::Part1,
            trial_index: 0,
            cue: Direction::Up,
            repeats: 1,
            samples: (0..n)
                .map(|k| {
                    let t = -0.4 + k as f64 / rate;
                    let tau = (t - onset) / move_dur;
                    let mut p = Pose6::zero(t);
                    *p.dof_mut(dof) = gain * min_jerk(tau.clamp(0.0, 1.0));
                    p
                })
                .collect(),
        }
    }

    #[test]
    fn delay_within_one_sample_of_analytic_peak() {
        let params = AnalysisParams::default();
        let move_dur = 0.4;
        for onset in [0.119, 0.33, 1.25] {
            let trial = min_jerk_trial(Dof::Z, onset, move_dur, 20.0);
            let kin = kinematics_of_trial(&trial, &params).unwrap();
            let delay = detect_delay(&kin, 0.0, &params).unwrap();
            let analytic = onset + ACCEL_PEAK_FRACTION * move_dur;
            assert!(
                (delay - analytic).abs() <= 0.0126,
                "onset {onset}: detected {delay}, analytic {analytic}"
            );
        }
    }

    #[test]
    fn rotational_channels_detected_too() {
        let params = AnalysisParams::default();
        let trial = min_jerk_trial(Dof::Yaw, 0.5, 0.4, 25.0);
        let kin = kinematics_of_trial(&trial, &params).unwrap();
        let delay = detect_delay(&kin, 0.0, &params).unwrap();
        let analytic = 0.5 + ACCEL_PEAK_FRACTION * 0.4;
        assert!((delay - analytic).abs() <= 0.0126, "{delay} vs {analytic}");
    }

    #[test]
    fn flat_trial_has_no_motion() {
        let params = AnalysisParams::default();
        let trial = min_jerk_trial(Dof::Z, 1.0, 0.4, 0.0);
        let kin = kinematics_of_trial(&trial, &params).unwrap();
        assert!(matches!(
            detect_delay(&kin, 0.0, &params),
            Err(AnalysisError::NoMotionDetected)
        ));
    }

    #[test]
    fn peaks_recover_signed_construction() {
        let params = AnalysisParams {
            smoothing_cutoff_hz: 0.0,
            ..AnalysisParams::default()
        };
        let trial = min_jerk_trial(Dof::Z, 0.4, 0.4, 20.0);
        let kin = kinematics_of_trial(&trial, &params).unwrap();
        let peaks = peak_displacement(&kin, (0.0, 4.0)).unwrap();
        assert!((peaks[Dof::Z.index()] - 20.0).abs() < 1e-9);
        for d in [Dof::X, Dof::Y, Dof::Yaw, Dof::Pitch, Dof::Roll] {
            assert_eq!(peaks[d.index()], 0.0);
        }

        let down = min_jerk_trial(Dof::X, 0.4, 0.4, -20.0);
        let kin = kinematics_of_trial(&down, &params).unwrap();
        let peaks = peak_displacement(&kin, (0.0, 4.0)).unwrap();
        assert!((peaks[Dof::X.index()] + 20.0).abs() < 1e-9);
    }

    #[test]
    fn features_on_noiseless_synthetic_close_the_loop() {
        let profile = crate::synth::SubjectProfile {
            subject_id: "s01".into(),
            responder_class: crate::synth::ResponderClass::Fast,
            mean_delay_s: 0.33,
            delay_sd_s: 0.0,
            experience_level: 2,
            per_cue_gain: [20.0; 8],
            gain_noise_frac: 0.0,
            coupling: vec![crate::synth::CouplingLeak {
                cue: Direction::Forward,
                dof: Dof::Z,
                fraction: -0.3,
            }],
            misclassification: {
                let mut m = [[0.0; 8]; 8];
                for (i, row) in m.iter_mut().enumerate() {
                    row[i] = 1.0;
                }
                m
            },
            repeat_rate: 0.0,
        };
        let recipe = crate::synth::StudyRecipe {
            measurement_noise_mm: 0.0,
            measurement_noise_deg: 0.0,
            rotation_delay_penalty_s: 0.0,
            ..crate::synth::StudyRecipe::default()
        };
        let params = AnalysisParams::default();

        let trial = crate::synth::synth_movement_trial(
            &profile,
            &recipe,
            Direction::Forward,
            Part::Part1,
            0,
            11,
        );
        let features = extract_features(&trial, &params).unwrap();
        let delay = features.delay_s.unwrap();
        assert!((delay - 0.33).abs() <= 0.0126, "delay {delay}");
        // Peak x at the gain, peak z at the coupled leak.
        assert!((features.peaks[Dof::X.index()] - 20.0).abs() < 0.05);
        assert!((features.peaks[Dof::Z.index()] + 6.0).abs() < 0.05);
    }
}
