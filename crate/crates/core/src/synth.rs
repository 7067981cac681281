//! Deterministic synthetic-subject and trial-log generator.
//!
//! The generator reproduces the response phenomenology the analysis pipeline
//! must recover: two responder populations with distinct delays, per-cue
//! motion in the expected DOF with cross-DOF coupling leaks, measurement
//! noise, and forced-choice confusions. Everything is a pure function of
//! (recipe, seed): random streams are split per (subject, part, trial) with a
//! splitmix64 chain, so regenerating any subset is reproducible across
//! platforms.
//!
//! Delay convention: a profile's `mean_delay_s` is the time from cue onset to
//! the first acceleration peak of the hand — the quantity the analysis
//! detects — so movement onset is placed `ACCEL_PEAK_FRACTION` of the
//! movement duration earlier.

use crate::cues::Direction;
use crate::trial::{
    write_choice_csv, write_movement_csv, write_subjects_csv, ChoiceRecord, Dof, Part, Pose6,
    SubjectInfo, TrialRecord,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Fraction of a minimum-jerk movement at which its acceleration peaks:
/// (1 − 1/√3)/2.
pub const ACCEL_PEAK_FRACTION: f64 = 0.211_324_865_405_187_1;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid recipe: {0}")]
    InvalidRecipe(String),
    #[error("failed to write study files: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to serialize manifest: {0}")]
    Manifest(#[from] serde_json::Error),
}

/// Responder population a subject belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResponderClass {
    Fast,
    Slow,
}

/// Signed motion expected in response to a cue: the cued DOF and its sign in
/// the device frame (+x distal, +z up, right-handed).
pub fn expected_motion(cue: Direction) -> (Dof, f64) {
    match cue {
        Direction::Forward => (Dof::X, 1.0),
        Direction::Backward => (Dof::X, -1.0),
        Direction::Up => (Dof::Z, 1.0),
        Direction::Down => (Dof::Z, -1.0),
        Direction::TwistLeft => (Dof::Yaw, 1.0),
        Direction::TwistRight => (Dof::Yaw, -1.0),
        Direction::TiltLeft => (Dof::Roll, -1.0),
        Direction::TiltRight => (Dof::Roll, 1.0),
    }
}

/// A cross-DOF leak: responding to `cue` also moves `dof` by
/// `fraction` of the cue gain (signed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingLeak {
    pub cue: Direction,
    pub dof: Dof,
    pub fraction: f64,
}

/// Ground-truth description of one synthetic subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub subject_id: String,
    pub responder_class: ResponderClass,
    /// Mean time from cue onset to the first acceleration peak, s.
    pub mean_delay_s: f64,
    pub delay_sd_s: f64,
    pub experience_level: u8,
    /// Peak response magnitude per cue, mm for translations and deg for
    /// rotations, in canonical cue order.
    pub per_cue_gain: [f64; 8],
    /// Standard deviation of the multiplicative peak-magnitude noise.
    pub gain_noise_frac: f64,
    pub coupling: Vec<CouplingLeak>,
    /// Row-stochastic response matrix for the forced-choice task, rows and
    /// columns in canonical cue order.
    pub misclassification: [[f64; 8]; 8],
    pub repeat_rate: f64,
}

impl SubjectProfile {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.mean_delay_s <= 0.0 || self.delay_sd_s < 0.0 {
            return Err(SynthError::InvalidRecipe(format!(
                "{}: delay parameters must be positive",
                self.subject_id
            )));
        }
        if self.per_cue_gain.iter().any(|g| *g <= 0.0) {
            return Err(SynthError::InvalidRecipe(format!(
                "{}: gains must be positive",
                self.subject_id
            )));
        }
        for (i, row) in self.misclassification.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 || row.iter().any(|p| *p < 0.0) {
                return Err(SynthError::InvalidRecipe(format!(
                    "{}: misclassification row {i} sums to {sum}, expected 1",
                    self.subject_id
                )));
            }
        }
        Ok(())
    }
}

/// Everything needed to generate a full study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyRecipe {
    pub fast_subjects: usize,
    pub slow_subjects: usize,
    pub trials_per_cue_per_part: usize,
    pub choice_trials_per_cue: usize,

    pub fast_mean_delay_s: f64,
    pub slow_mean_delay_s: f64,
    pub fast_delay_sd_s: f64,
    pub slow_delay_sd_s: f64,
    /// Additional mean delay of rotation cues over translation cues, split
    /// symmetrically so class means stay put.
    pub rotation_delay_penalty_s: f64,
    /// Injected linear effect of experience level on delay, s per level.
    pub experience_slope_s_per_level: f64,

    pub translation_gain_mm: f64,
    pub rotation_gain_deg: f64,
    pub fast_gain_noise_frac: f64,
    pub slow_gain_noise_frac: f64,

    /// Number of leading subjects with a forward-cue downward-z leak.
    pub coupled_subjects: usize,
    pub forward_down_coupling_frac: f64,
    /// Pitch leak applieduniformly to both tilt cues.
    pub tilt_pitch_coupling_frac: f64,

    pub measurement_noise_mm: f64,
    pub measurement_noise_deg: f64,

    pub move_duration_s: f64,
    pub hold_duration_s: f64,
    pub return_duration_s: f64,
    pub with_return: bool,
    pub pre_cue_s: f64,
    pub trial_duration_s: f64,
    pub sample_rate_hz: f64,
    pub repeat_rate: f64,
}

impl Default for StudyRecipe {
    fn default() -> Self {
        Self {
            fast_subjects: 13,
            slow_subjects: 7,
            trials_per_cue_per_part: 10,
            choice_trials_per_cue: 3,
            fast_mean_delay_s: 0.33,
            slow_mean_delay_s: 1.56,
            fast_delay_sd_s: 0.08,
            slow_delay_sd_s: 0.25,
            rotation_delay_penalty_s: 0.119,
            experience_slope_s_per_level: -0.041,
            translation_gain_mm: 25.0,
            rotation_gain_deg: 25.0,
            fast_gain_noise_frac: 0.05,
            slow_gain_noise_frac: 0.20,
            coupled_subjects: 4,
            forward_down_coupling_frac: -0.30,
            tilt_pitch_coupling_frac: 0.15,
            measurement_noise_mm: 0.1,
            measurement_noise_deg: 0.1,
            move_duration_s: 0.4,
            hold_duration_s: 0.4,
            return_duration_s: 0.7,
            with_return: true,
            pre_cue_s: 0.4,
            trial_duration_s: 4.5,
            sample_rate_hz: 80.0,
            repeat_rate: 0.0,
        }
    }
}

impl StudyRecipe {
    pub fn subject_count(&self) -> usize {
        self.fast_subjects + self.slow_subjects
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.subject_count() == 0 {
            return Err(SynthError::InvalidRecipe("no subjects".into()));
        }
        if self.trials_per_cue_per_part == 0 || self.choice_trials_per_cue == 0 {
            return Err(SynthError::InvalidRecipe("trial counts must be positive".into()));
        }
        if self.sample_rate_hz <= 0.0 || self.trial_duration_s <= 0.0 {
            return Err(SynthError::InvalidRecipe("invalid sampling setup".into()));
        }
        if self.move_duration_s <= 0.0 || self.return_duration_s <= 0.0 {
            return Err(SynthError::InvalidRecipe("movement durations must be positive".into()));
        }
        let motion = self.move_duration_s
            + self.hold_duration_s
            + if self.with_return { self.return_duration_s } else { 0.0 };
        let latest_onset = self.slow_mean_delay_s + 4.0 * self.slow_delay_sd_s;
        if latest_onset + motion > self.trial_duration_s - self.pre_cue_s {
            return Err(SynthError::InvalidRecipe(
                "trial too short for the slow responder motion".into(),
            ));
        }
        Ok(())
    }
}

/// Default forced-choice response template: mostly correct with sparse
/// adjacent-direction confusions (counts out of 60 trials per cue).
pub fn default_misclassification() -> [[f64; 8]; 8] {
    const COUNTS: [[u32; 8]; 8] = [
        [58, 1, 1, 0, 0, 0, 0, 0],
        [1, 57, 0, 2, 0, 0, 0, 0],
        [1, 0, 56, 0, 1, 0, 0, 2],
        [1, 1, 2, 55, 0, 0, 1, 0],
        [0, 1, 0, 0, 56, 2, 1, 0],
        [0, 0, 0, 0, 1, 58, 0, 1],
        [0, 0, 0, 1, 0, 0, 58, 1],
        [0, 0, 0, 0, 0, 2, 1, 57],
    ];
    let mut m = [[0.0; 8]; 8];
    for (i, row) in COUNTS.iter().enumerate() {
        let total: u32 = row.iter().sum();
        for (j, c) in row.iter().enumerate() {
            m[i][j] = f64::from(*c) / f64::from(total);
        }
    }
    m
}

/// Splitmix64-based seed derivation for per-(domain, subject, part, trial)
/// random streams.
fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut state = master;
    let mut mix = |v: u64| {
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(v);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        state = z ^ (z >> 31);
    };
    for &p in parts {
        mix(p);
    }
    state
}

const DOMAIN_MOVEMENT: u64 = 1;
const DOMAIN_CHOICE: u64 = 2;
const DOMAIN_ORDER: u64 = 3;

/// Builds the per-subject ground-truth profiles for a recipe.
///
/// Experience levels cycle 1-2-3 with the last subject of each class set so
/// both class means are exactly 2: the experience effect stays orthogonal to
/// the responder-class split, which would otherwise bias its recovery.
pub fn build_profiles(recipe: &StudyRecipe) -> Vec<SubjectProfile> {
    let mut profiles = Vec::with_capacity(recipe.subject_count());
    let misclassification = default_misclassification();

    let class_levels = |n: usize| -> Vec<u8> {
        if n == 0 {
            return Vec::new();
        }
        let mut levels: Vec<u8> = (0..n - 1).map(|i| [1u8, 2, 3][i % 3]).collect();
        let sum: i64 = levels.iter().map(|l| i64::from(*l)).sum();
        let last = (2 * n as i64 - sum).clamp(1, 4) as u8;
        levels.push(last);
        levels
    };
    let fast_levels = class_levels(recipe.fast_subjects);
    let slow_levels = class_levels(recipe.slow_subjects);

    for i in 0..recipe.subject_count() {
        let is_fast = i < recipe.fast_subjects;
        let (class, class_mean, delay_sd, gain_noise, level) = if is_fast {
            (
                ResponderClass::Fast,
                recipe.fast_mean_delay_s,
                recipe.fast_delay_sd_s,
                recipe.fast_gain_noise_frac,
                fast_levels[i],
            )
        } else {
            (
                ResponderClass::Slow,
                recipe.slow_mean_delay_s,
                recipe.slow_delay_sd_s,
                recipe.slow_gain_noise_frac,
                slow_levels[i - recipe.fast_subjects],
            )
        };

        let mean_delay =
            class_mean + recipe.experience_slope_s_per_level * (f64::from(level) - 2.0);

        let mut per_cue_gain = [0.0; 8];
        for d in Direction::ALL {
            per_cue_gain[d.index()] = if d.is_rotation() {
                recipe.rotation_gain_deg
            } else {
                recipe.translation_gain_mm
            };
        }

        let mut coupling = Vec::new();
        if i < recipe.coupled_subjects && recipe.forward_down_coupling_frac != 0.0 {
            coupling.push(CouplingLeak {
                cue: Direction::Forward,
                dof: Dof::Z,
                fraction: recipe.forward_down_coupling_frac,
            });
        }
        if recipe.tilt_pitch_coupling_frac != 0.0 {
            for cue in [Direction::TiltLeft, Direction::TiltRight] {
                coupling.push(CouplingLeak {
                    cue,
                    dof: Dof::Pitch,
                    fraction: recipe.tilt_pitch_coupling_frac,
                });
            }
        }

        profiles.push(SubjectProfile {
            subject_id: format!("s{:02}", i + 1),
            responder_class: class,
            mean_delay_s: mean_delay,
            delay_sd_s: delay_sd,
            experience_level: level,
            per_cue_gain,
            gain_noise_frac: gain_noise,
            coupling,
            misclassification,
            repeat_rate: recipe.repeat_rate,
        });
    }
    profiles
}

/// Signed mean delay offset for a cue (rotation/translation split).
fn cue_delay_offset(recipe: &StudyRecipe, cue: Direction) -> f64 {
    if cue.is_rotation() {
        0.5 * recipe.rotation_delay_penalty_s
    } else {
        -0.5 * recipe.rotation_delay_penalty_s
    }
}

/// Minimum-jerk out / hold / minimum-jerk back movement profile in [0, 1].
fn movement_profile(recipe: &StudyRecipe, t_since_onset: f64) -> f64 {
    if t_since_onset <= 0.0 {
        return 0.0;
    }
    let t1 = recipe.move_duration_s;
    let t2 = t1 + recipe.hold_duration_s;
    if t_since_onset < t1 {
        crate::cues::min_jerk(t_since_onset / t1)
    } else if t_since_onset <= t2 || !recipe.with_return {
        1.0
    } else if t_since_onset < t2 + recipe.return_duration_s {
        1.0 - crate::cues::min_jerk((t_since_onset - t2) / recipe.return_duration_s)
    } else {
        0.0
    }
}

/// Generates one movement trial for a subject.
pub fn synth_movement_trial(
    profile: &SubjectProfile,
    recipe: &StudyRecipe,
    cue: Direction,
    part: Part,
    trial_index: u32,
    master_seed: u64,
) -> TrialRecord {
    let subject_num = profile
        .subject_id
        .trim_start_matches(|c: char| !c.is_ascii_digit())
        .parse::<u64>()
        .unwrap_or(0);
    let seed = derive_seed(
        master_seed,
        &[
            DOMAIN_MOVEMENT,
            subject_num,
            u64::from(part.number()),
            u64::from(trial_index),
        ],
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Delay of the first acceleration peak; onset sits earlier by the peak
    // fraction of the movement. Resample until the motion fits the trial.
    let mean = profile.mean_delay_s + cue_delay_offset(recipe, cue);
    let delay_dist = Normal::new(mean, profile.delay_sd_s.max(1e-12)).unwrap();
    let motion_len = recipe.move_duration_s
        + recipe.hold_duration_s
        + if recipe.with_return { recipe.return_duration_s } else { 0.0 };
    let trial_end = recipe.trial_duration_s - recipe.pre_cue_s;
    let onset = loop {
        let delay: f64 = delay_dist.sample(&mut rng);
        let onset = delay - ACCEL_PEAK_FRACTION * recipe.move_duration_s;
        if onset > 0.0 && onset + motion_len < trial_end - 0.05 {
            break onset;
        }
    };

    let gain_mult = loop {
        let m: f64 = 1.0 + profile.gain_noise_frac * rng.sample::<f64, _>(rand_distr::StandardNormal);
        if m > 0.05 {
            break m;
        }
    };

    // Signed peak displacement per DOF.
    let mut amplitude = [0.0_f64; 6];
    let (primary, sign) = expected_motion(cue);
    amplitude[primary.index()] = sign * profile.per_cue_gain[cue.index()] * gain_mult;
    for leak in &profile.coupling {
        if leak.cue == cue {
            amplitude[leak.dof.index()] += leak.fraction * profile.per_cue_gain[cue.index()] * gain_mult;
        }
    }

    let repeats = if profile.repeat_rate > 0.0 {
        let mut r = 1u32;
        while rng.gen::<f64>() < profile.repeat_rate && r < 10 {
            r += 1;
        }
        r
    } else {
        1
    };

    let n = (recipe.trial_duration_s * recipe.sample_rate_hz).round() as usize;
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let t = -recipe.pre_cue_s + k as f64 / recipe.sample_rate_hz;
        let m = movement_profile(recipe, t - onset);
        let mut pose = Pose6::zero(t);
        for d in Dof::ALL {
            let noise_sd = if d.is_rotation() {
                recipe.measurement_noise_deg
            } else {
                recipe.measurement_noise_mm
            };
            let noise = if noise_sd > 0.0 {
                noise_sd * rng.sample::<f64, _>(rand_distr::StandardNormal)
            } else {
                0.0
            };
            *pose.dof_mut(d) = amplitude[d.index()] * m + noise;
        }
        samples.push(pose);
    }

    TrialRecord {
        subject_id: profile.subject_id.clone(),
        part,
        trial_index,
        cue,
        repeats,
        samples,
    }
}

/// Samples one forced-choice response from the cue's misclassification row.
pub fn synth_forced_choice(
    profile: &SubjectProfile,
    cue: Direction,
    trial_index: u32,
    master_seed: u64,
) -> Direction {
    let subject_num = profile
        .subject_id
        .trim_start_matches(|c: char| !c.is_ascii_digit())
        .parse::<u64>()
        .unwrap_or(0);
    let seed = derive_seed(
        master_seed,
        &[DOMAIN_CHOICE, subject_num, u64::from(trial_index)],
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let row = &profile.misclassification[cue.index()];
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (j, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return Direction::ALL[j];
        }
    }
    Direction::ALL[7]
}

/// Seeded Fisher–Yates permutation of the per-part cue order.
fn cue_order(
    recipe_trials_per_cue: usize,
    subject_num: u64,
    part_tag: u64,
    master_seed: u64,
) -> Vec<Direction> {
    let mut order: Vec<Direction> = Direction::ALL
        .iter()
        .flat_map(|d| std::iter::repeat(*d).take(recipe_trials_per_cue))
        .collect();
    let seed = derive_seed(master_seed, &[DOMAIN_ORDER, subject_num, part_tag]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    order
}

/// A fully generated study, before serialization.
#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    pub manifest: Manifest,
    pub movement: Vec<TrialRecord>,
    pub choices: Vec<ChoiceRecord>,
}

/// Ground truth written next to the logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub recipe: StudyRecipe,
    pub profiles: Vec<SubjectProfile>,
}

fn subject_trials(
    profile: &SubjectProfile,
    recipe: &StudyRecipe,
    subject_num: u64,
    master_seed: u64,
) -> (Vec<TrialRecord>, Vec<ChoiceRecord>) {
    let mut movement = Vec::new();
    for part in [Part::Part1, Part::Part3] {
        let order = cue_order(
            recipe.trials_per_cue_per_part,
            subject_num,
            u64::from(part.number()),
            master_seed,
        );
        for (idx, cue) in order.iter().enumerate() {
            movement.push(synth_movement_trial(
                profile,
                recipe,
                *cue,
                part,
                idx as u32,
                master_seed,
            ));
        }
    }

    let order = cue_order(recipe.choice_trials_per_cue, subject_num, 2, master_seed);
    let choices = order
        .iter()
        .enumerate()
        .map(|(idx, cue)| {
            let response = synth_forced_choice(profile, *cue, idx as u32, master_seed);
            ChoiceRecord {
                subject_id: profile.subject_id.clone(),
                trial_index: idx as u32,
                cue: cue.as_str().to_string(),
                response: response.as_str().to_string(),
                repeats: 1,
            }
        })
        .collect();

    (movement, choices)
}

/// Generates the full study for a recipe and seed. Per-subject generation
/// runs in parallel when the `parallel` feature is enabled; output order and
/// content are identical either way.
pub fn synth_study(recipe: &StudyRecipe, seed: u64) -> Result<Study, SynthError> {
    recipe.validate()?;
    let profiles = build_profiles(recipe);
    for p in &profiles {
        p.validate()?;
    }

    let indexed: Vec<(u64, &SubjectProfile)> = profiles
        .iter()
        .enumerate()
        .map(|(i, p)| (i as u64 + 1, p))
        .collect();

    #[cfg(feature = "parallel")]
    let per_subject: Vec<(Vec<TrialRecord>, Vec<ChoiceRecord>)> = {
        use rayon::prelude::*;
        indexed
            .par_iter()
            .map(|(num, p)| subject_trials(p, recipe, *num, seed))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_subject: Vec<(Vec<TrialRecord>, Vec<ChoiceRecord>)> = indexed
        .iter()
        .map(|(num, p)| subject_trials(p, recipe, *num, seed))
        .collect();

    let mut movement = Vec::new();
    let mut choices = Vec::new();
    for (m, c) in per_subject {
        movement.extend(m);
        choices.extend(c);
    }

    Ok(Study {
        manifest: Manifest {
            seed,
            recipe: recipe.clone(),
            profiles,
        },
        movement,
        choices,
    })
}

/// Writes `manifest.json`, `movement_trials.csv`, `choices.csv`, and
/// `subjects.csv` into `dir`.
pub fn write_study(study: &Study, dir: &Path) -> Result<(), SynthError> {
    std::fs::create_dir_all(dir)?;

    let manifest = serde_json::to_string_pretty(&study.manifest)?;
    std::fs::write(dir.join("manifest.json"), manifest + "\n")?;

    let mut movement = Vec::new();
    write_movement_csv(&mut movement, &study.movement)?;
    std::fs::write(dir.join("movement_trials.csv"), movement)?;

    let mut choices = Vec::new();
    write_choice_csv(&mut choices, &study.choices)?;
    std::fs::write(dir.join("choices.csv"), choices)?;

    let subjects: Vec<SubjectInfo> = study
        .manifest
        .profiles
        .iter()
        .map(|p| SubjectInfo {
            subject_id: p.subject_id.clone(),
            experience_level: p.experience_level,
        })
        .collect();
    let mut buf = Vec::new();
    write_subjects_csv(&mut buf, &subjects)?;
    std::fs::write(dir.join("subjects.csv"), buf)?;
    Ok(())
}
