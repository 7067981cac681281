//! Zero-phase smoothing and numerical differentiation of pose channels.

use crate::analysis::AnalysisError;
use crate::config::AnalysisParams;
use crate::trial::{Dof, TrialRecord};

/// Second-order Butterworth low-pass section (bilinear transform with
/// frequency prewarping).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    pub fn lowpass(cutoff_hz: f64, sample_rate_hz: f64) -> Self {
        let k = (std::f64::consts::PI * cutoff_hz / sample_rate_hz).tan();
        let q = std::f64::consts::FRAC_1_SQRT_2;
        let norm = 1.0 / (1.0 + k / q + k * k);
        Self {
            b0: k * k * norm,
            b1: 2.0 * k * k * norm,
            b2: k * k * norm,
            a1: 2.0 * (k * k - 1.0) * norm,
            a2: (1.0 - k / q + k * k) * norm,
        }
    }

    /// Single-pass magnitude response at a frequency.
    pub fn magnitude(&self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * freq_hz / sample_rate_hz;
        let (c1, s1) = (w.cos(), w.sin());
        let (c2, s2) = ((2.0 * w).cos(), (2.0 * w).sin());
        let num_re = self.b0 + self.b1 * c1 + self.b2 * c2;
        let num_im = -(self.b1 * s1 + self.b2 * s2);
        let den_re = 1.0 + self.a1 * c1 + self.a2 * c2;
        let den_im = -(self.a1 * s1 + self.a2 * s2);
        (num_re.hypot(num_im)) / (den_re.hypot(den_im))
    }

    /// Direct-form II transposed, with state initialized so a constant input
    /// passes through without a transient.
    fn filter_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let x0 = x.first().copied().unwrap_or(0.0);
        let mut z1 = x0 * (1.0 - self.b0);
        let mut z2 = x0 * (self.b2 - self.a2);
        for &xi in x {
            let y = self.b0 * xi + z1;
            z1 = self.b1 * xi - self.a1 * y + z2;
            z2 = self.b2 * xi - self.a2 * y;
            out.push(y);
        }
    }
}

/// Forward-backward (zero-phase) filtering with odd-reflection padding.
/// The effective amplitude response is the square of the single pass.
pub fn filtfilt(filter: &Biquad, x: &[f64]) -> Vec<f64> {
    if x.len() < 2 {
        return x.to_vec();
    }
    let pad = 24.min(x.len() - 1);
    let mut padded = Vec::with_capacity(x.len() + 2 * pad);
    let first = x[0];
    for i in (1..=pad).rev() {
        padded.push(2.0 * first - x[i]);
    }
    padded.extend_from_slice(x);
    let last = x[x.len() - 1];
    for i in 1..=pad {
        padded.push(2.0 * last - x[x.len() - 1 - i]);
    }

    let mut forward = Vec::new();
    filter.filter_into(&padded, &mut forward);
    forward.reverse();
    let mut backward = Vec::new();
    filter.filter_into(&forward, &mut backward);
    backward.reverse();
    backward[pad..pad + x.len()].to_vec()
}

fn central_derivative(x: &[f64], dt: f64) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    out[0] = (x[1] - x[0]) / dt;
    out[n - 1] = (x[n - 1] - x[n - 2]) / dt;
    for i in 1..n - 1 {
        out[i] = (x[i + 1] - x[i - 1]) / (2.0 * dt);
    }
    out
}

/// Displacement, velocity, and acceleration series for the six pose
/// channels of one trial, time-aligned with the input samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialKinematics {
    pub t_s: Vec<f64>,
    pub dt_s: f64,
    /// Low-passed displacement re-zeroed to the pre-cue baseline;
    /// millimeters for X/Y/Z, degrees for yaw/pitch/roll.
    pub displacement: [Vec<f64>; 6],
    pub velocity: [Vec<f64>; 6],
    pub acceleration: [Vec<f64>; 6],
}

impl TrialKinematics {
    /// Index of the first sample at or after a time.
    pub fn index_at(&self, t: f64) -> usize {
        self.t_s.partition_point(|&s| s < t)
    }
}

/// Smooths and differentiates a trial.
///
/// Displacement is re-zeroed to the mean of the pre-cue window (`t` in
/// `[−baseline_window_s, 0)`); if the trial has no pre-cue samples the first
/// sample serves as the baseline. Velocity and acceleration come from
/// central differences after the zero-phase low-pass (disabled when the
/// cutoff is zero).
pub fn kinematics_of_trial(
    trial: &TrialRecord,
    params: &AnalysisParams,
) -> Result<TrialKinematics, AnalysisError> {
    let n = trial.samples.len();
    if n < 5 {
        return Err(AnalysisError::TooShort { needed: 5, got: n });
    }
    let t_s: Vec<f64> = trial.samples.iter().map(|p| p.t_s).collect();
    let dt_s = (t_s[n - 1] - t_s[0]) / (n - 1) as f64;
    let sample_rate = 1.0 / dt_s;

    let filter = (params.smoothing_cutoff_hz > 0.0)
        .then(|| Biquad::lowpass(params.smoothing_cutoff_hz, sample_rate));

    let mut displacement: [Vec<f64>; 6] = Default::default();
    let mut velocity: [Vec<f64>; 6] = Default::default();
    let mut acceleration: [Vec<f64>; 6] = Default::default();

    let baseline_range = {
        let start = t_s.partition_point(|&s| s < -params.baseline_window_s);
        let end = t_s.partition_point(|&s| s < 0.0);
        start..end
    };

    for d in Dof::ALL {
        let raw: Vec<f64> = trial.samples.iter().map(|p| p.dof(d)).collect();
        let mut smooth = match &filter {
            Some(f) => filtfilt(f, &raw),
            None => raw,
        };
        let baseline = if baseline_range.is_empty() {
            smooth[0]
        } else {
            smooth[baseline_range.clone()].iter().sum::<f64>() / baseline_range.len() as f64
        };
        for v in &mut smooth {
            *v -= baseline;
        }
        let vel = central_derivative(&smooth, dt_s);
        let acc = central_derivative(&vel, dt_s);
        displacement[d.index()] = smooth;
        velocity[d.index()] = vel;
        acceleration[d.index()] = acc;
    }

    Ok(TrialKinematics {
        t_s,
        dt_s,
        displacement,
        velocity,
        acceleration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cues::Direction;
    use crate::trial::{Part, Pose6};

    fn trial_from_channel(dof: Dof, values: &[f64], rate_hz: f64, t0: f64) -> TrialRecord {
        TrialRecord {
            subject_id: "s01".into(),
            part: Part::Part1,
            trial_index: 0,
            cue: Direction::Up,
            repeats: 1,
            samples: values
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    let mut p = Pose6::zero(t0 + k as f64 / rate_hz);
                    *p.dof_mut(dof) = *v;
                    p
                })
                .collect(),
        }
    }

    #[test]
    fn constant_pose_has_zero_derivatives() {
        let values = vec![7.25; 100];
        let trial = trial_from_channel(Dof::X, &values, 80.0, -0.4);
        let kin = kinematics_of_trial(&trial, &AnalysisParams::default()).unwrap();
        for i in 0..values.len() {
            assert!(kin.displacement[0][i].abs() < 1e-9);
            assert!(kin.velocity[0][i].abs() < 1e-9);
            assert!(kin.acceleration[0][i].abs() < 1e-9);
        }
    }

    #[test]
    fn quadratic_recovers_acceleration_without_filter() {
        let accel = 3.7;
        let rate = 80.0;
        let values: Vec<f64> = (0..200)
            .map(|k| {
                let t = k as f64 / rate;
                0.5 * accel * t * t
            })
            .collect();
        let trial = trial_from_channel(Dof::Z, &values, rate, 0.0);
        let params = AnalysisParams {
            smoothing_cutoff_hz: 0.0,
            ..AnalysisParams::default()
        };
        let kin = kinematics_of_trial(&trial, &params).unwrap();
        for i in 2..198 {
            assert!(
                (kin.acceleration[Dof::Z.index()][i] - accel).abs() < 1e-6,
                "i = {i}: {}",
                kin.acceleration[Dof::Z.index()][i]
            );
        }
    }

    #[test]
    fn sinusoid_attenuation_matches_analytic_response() {
        let rate = 80.0;
        let freq = 2.0;
        let n = 640;
        let values: Vec<f64> = (0..n)
            .map(|k| (2.0 * std::f64::consts::PI * freq * k as f64 / rate).sin())
            .collect();
        let filter = Biquad::lowpass(8.0, rate);
        let filtered = filtfilt(&filter, &values);

        // Least-squares amplitude of the filtered sinusoid over the interior.
        let mut ss = 0.0;
        let mut sc = 0.0;
        let mut n_used = 0.0;
        for k in 100..n - 100 {
            let phase = 2.0 * std::f64::consts::PI * freq * k as f64 / rate;
            ss += filtered[k] * phase.sin();
            sc += filtered[k] * phase.cos();
            n_used += 1.0;
        }
        let amp = 2.0 * (ss / n_used).hypot(sc / n_used);

        // Zero-phase filtering applies the magnitude response twice.
        let expected = filter.magnitude(freq, rate).powi(2);
        assert!(
            (amp - expected).abs() / expected < 0.02,
            "amp {amp} vs analytic {expected}"
        );
    }

    #[test]
    fn filter_unity_gain_at_dc() {
        let filter = Biquad::lowpass(8.0, 80.0);
        assert!((filter.magnitude(0.0, 80.0) - 1.0).abs() < 1e-12);
        // Half-power at the cutoff.
        let at_cutoff = filter.magnitude(8.0, 80.0);
        assert!((at_cutoff - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn too_short_rejected() {
        let trial = trial_from_channel(Dof::X, &[0.0, 1.0, 2.0], 80.0, 0.0);
        assert!(matches!(
            kinematics_of_trial(&trial, &AnalysisParams::default()),
            Err(AnalysisError::TooShort { .. })
        ));
    }

    #[test]
    fn baseline_rezeroes_to_precue_mean() {
        let mut values = vec![5.0; 32];
        values.extend(vec![9.0; 100]);
        let trial = trial_from_channel(Dof::Y, &values, 80.0, -0.4);
        let params = AnalysisParams {
            smoothing_cutoff_hz: 0.0,
            ..AnalysisParams::default()
        };
        let kin = kinematics_of_trial(&trial, &params).unwrap();
        // Pre-cue samples sit at zero after re-zeroing.
        assert!(kin.displacement[Dof::Y.index()][5].abs() < 1e-12);
        assert!((kin.displacement[Dof::Y.index()][100] - 4.0).abs() < 1e-12);
    }
}
