//! Trial-log data model and file formats.
//!
//! Two plain CSV formats cover the study:
//!
//! * movement trial log: header
//!   `subject_id,part,trial_index,cue,repeats,t_s,x_mm,y_mm,z_mm,yaw_deg,pitch_deg,roll_deg`,
//!   one row per 80 Hz sample, samples of one trial contiguous;
//! * choice log: header `subject_id,trial_index,cue,response,repeats`.
//!
//! A third file, `subjects.csv` (`subject_id,experience_level`), carries the
//! self-rated haptics experience used as a regression covariate.

use crate::cues::Direction;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

pub const MOVEMENT_HEADER: &str =
    "subject_id,part,trial_index,cue,repeats,t_s,x_mm,y_mm,z_mm,yaw_deg,pitch_deg,roll_deg";
pub const CHOICE_HEADER: &str = "subject_id,trial_index,cue,response,repeats";
pub const SUBJECTS_HEADER: &str = "subject_id,experience_level";

#[derive(Debug, Error)]
pub enum TrialIoError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {message}")]
    Schema {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: file contains no data rows")]
    EmptyFile { path: String },
}

fn schema_err(path: &Path, line: usize, message: impl Into<String>) -> TrialIoError {
    TrialIoError::Schema {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// The six pose degrees of freedom, in log-column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dof {
    X,
    Y,
    Z,
    Yaw,
    Pitch,
    Roll,
}

impl Dof {
    pub const ALL: [Dof; 6] = [Dof::X, Dof::Y, Dof::Z, Dof::Yaw, Dof::Pitch, Dof::Roll];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|d| *d == self).unwrap()
    }

    pub fn is_rotation(self) -> bool {
        matches!(self, Dof::Yaw | Dof::Pitch | Dof::Roll)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dof::X => "x",
            Dof::Y => "y",
            Dof::Z => "z",
            Dof::Yaw => "yaw",
            Dof::Pitch => "pitch",
            Dof::Roll => "roll",
        }
    }
}

impl fmt::Display for Dof {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Handle pose sample: position in mm, orientation in degrees, timestamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose6 {
    pub t_s: f64,
    pub x_mm: f64,
    pub y_mm: f64,
    pub z_mm: f64,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub roll_deg: f64,
}

impl Pose6 {
    pub fn zero(t_s: f64) -> Self {
        Self {
            t_s,
            x_mm: 0.0,
            y_mm: 0.0,
            z_mm: 0.0,
            yaw_deg: 0.0,
            pitch_deg: 0.0,
            roll_deg: 0.0,
        }
    }

    pub fn dof(&self, d: Dof) -> f64 {
        match d {
            Dof::X => self.x_mm,
            Dof::Y => self.y_mm,
            Dof::Z => self.z_mm,
            Dof::Yaw => self.yaw_deg,
            Dof::Pitch => self.pitch_deg,
            Dof::Roll => self.roll_deg,
        }
    }

    pub fn dof_mut(&mut self, d: Dof) -> &mut f64 {
        match d {
            Dof::X => &mut self.x_mm,
            Dof::Y => &mut self.y_mm,
            Dof::Z => &mut self.z_mm,
            Dof::Yaw => &mut self.yaw_deg,
            Dof::Pitch => &mut self.pitch_deg,
            Dof::Roll => &mut self.roll_deg,
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.t_s,
            self.x_mm,
            self.y_mm,
            self.z_mm,
            self.yaw_deg,
            self.pitch_deg,
            self.roll_deg,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Which movement part of the study a trial belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Part {
    Part1,
    Part3,
}

impl Part {
    pub fn number(self) -> u8 {
        match self {
            Part::Part1 => 1,
            Part::Part3 => 3,
        }
    }

    pub fn from_number(n: u8) -> Option<Part> {
        match n {
            1 => Some(Part::Part1),
            3 => Some(Part::Part3),
            _ => None,
        }
    }
}

/// One movement trial: a cue and the hand-pose time series it evoked.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub subject_id: String,
    pub part: Part,
    pub trial_index: u32,
    pub cue: Direction,
    pub repeats: u32,
    pub samples: Vec<Pose6>,
}

impl TrialRecord {
    /// Mean sample rate over the trial, Hz.
    pub fn sample_rate_hz(&self) -> f64 {
        if self.samples.len() < 2 {
            return f64::NAN;
        }
        let span = self.samples.last().unwrap().t_s - self.samples[0].t_s;
        (self.samples.len() - 1) as f64 / span
    }
}

/// One forced-choice trial. Cue and response stay as strings so malformed
/// labels surface in the analysis with context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceRecord {
    pub subject_id: String,
    pub trial_index: u32,
    pub cue: String,
    pub response: String,
    pub repeats: u32,
}

/// Subject metadata shipped alongside the logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectInfo {
    pub subject_id: String,
    pub experience_level: u8,
}

pub fn write_movement_csv<W: Write>(w: &mut W, trials: &[TrialRecord]) -> std::io::Result<()> {
    writeln!(w, "{MOVEMENT_HEADER}")?;
    for t in trials {
        for s in &t.samples {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                t.subject_id,
                t.part.number(),
                t.trial_index,
                t.cue,
                t.repeats,
                s.t_s,
                s.x_mm,
                s.y_mm,
                s.z_mm,
                s.yaw_deg,
                s.pitch_deg,
                s.roll_deg
            )?;
        }
    }
    Ok(())
}

pub fn write_choice_csv<W: Write>(w: &mut W, choices: &[ChoiceRecord]) -> std::io::Result<()> {
    writeln!(w, "{CHOICE_HEADER}")?;
    for c in choices {
        writeln!(
            w,
            "{},{},{},{},{}",
            c.subject_id, c.trial_index, c.cue, c.response, c.repeats
        )?;
    }
    Ok(())
}

pub fn write_subjects_csv<W: Write>(w: &mut W, subjects: &[SubjectInfo]) -> std::io::Result<()> {
    writeln!(w, "{SUBJECTS_HEADER}")?;
    for s in subjects {
        writeln!(w, "{},{}", s.subject_id, s.experience_level)?;
    }
    Ok(())
}

fn parse_f64(path: &Path, line: usize, field: &str, value: &str) -> Result<f64, TrialIoError> {
    let v: f64 = value
        .parse()
        .map_err(|_| schema_err(path, line, format!("invalid {field}: {value:?}")))?;
    if !v.is_finite() {
        return Err(schema_err(path, line, format!("non-finite {field}: {value:?}")));
    }
    Ok(v)
}

fn parse_u32(path: &Path, line: usize, field: &str, value: &str) -> Result<u32, TrialIoError> {
    value
        .parse()
        .map_err(|_| schema_err(path, line, format!("invalid {field}: {value:?}")))
}

/// Loads and validates a movement trial log.
///
/// Rejects a wrong header, wrong column counts (including truncated final
/// lines), non-finite values, unknown cue labels, non-monotone timestamps,
/// and interleaved (non-contiguous) trials, naming the offending line.
pub fn load_trials(path: &Path) -> Result<Vec<TrialRecord>, TrialIoError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();

    match lines.next() {
        Some((_, header)) if header.trim_end() == MOVEMENT_HEADER => {}
        Some((_, header)) => {
            return Err(schema_err(path, 1, format!("unexpected header {header:?}")))
        }
        None => {
            return Err(TrialIoError::EmptyFile {
                path: path.display().to_string(),
            })
        }
    }

    let mut trials: Vec<TrialRecord> = Vec::new();
    let mut seen: BTreeMap<(String, u8, u32), usize> = BTreeMap::new();
    let mut rows = 0usize;

    for (idx, row) in lines {
        let line = idx + 1;
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 12 {
            return Err(schema_err(
                path,
                line,
                format!("expected 12 columns, found {}", fields.len()),
            ));
        }
        rows += 1;

        let subject_id = fields[0].to_string();
        let part_num: u8 = fields[1]
            .parse()
            .map_err(|_| schema_err(path, line, format!("invalid part: {:?}", fields[1])))?;
        let part = Part::from_number(part_num).ok_or_else(|| {
            schema_err(path, line, format!("part must be 1 or 3, found {part_num}"))
        })?;
        let trial_index = parse_u32(path, line, "trial_index", fields[2])?;
        let cue = Direction::parse(fields[3])
            .ok_or_else(|| schema_err(path, line, format!("unknown cue: {:?}", fields[3])))?;
        let repeats = parse_u32(path, line, "repeats", fields[4])?;
        let pose = Pose6 {
            t_s: parse_f64(path, line, "t_s", fields[5])?,
            x_mm: parse_f64(path, line, "x_mm", fields[6])?,
            y_mm: parse_f64(path, line, "y_mm", fields[7])?,
            z_mm: parse_f64(path, line, "z_mm", fields[8])?,
            yaw_deg: parse_f64(path, line, "yaw_deg", fields[9])?,
            pitch_deg: parse_f64(path, line, "pitch_deg", fields[10])?,
            roll_deg: parse_f64(path, line, "roll_deg", fields[11])?,
        };

        let key = (subject_id.clone(), part_num, trial_index);
        let is_current = trials.last().map_or(false, |t: &TrialRecord| {
            t.subject_id == subject_id && t.part == part && t.trial_index == trial_index
        });
        if is_current {
            let current = trials.last_mut().unwrap();
            if current.cue != cue || current.repeats != repeats {
                return Err(schema_err(
                    path,
                    line,
                    "cue/repeats change within a trial".to_string(),
                ));
            }
            let prev_t = current.samples.last().unwrap().t_s;
            if pose.t_s <= prev_t {
                return Err(schema_err(
                    path,
                    line,
                    format!(
                        "timestamps not strictly increasing ({} after {prev_t})",
                        pose.t_s
                    ),
                ));
            }
            current.samples.push(pose);
        } else {
            if seen.contains_key(&key) {
                return Err(schema_err(
                    path,
                    line,
                    format!("trial {key:?} is not contiguous"),
                ));
            }
            seen.insert(key, trials.len());
            trials.push(TrialRecord {
                subject_id,
                part,
                trial_index,
                cue,
                repeats,
                samples: vec![pose],
            });
        }
    }

    if rows == 0 {
        return Err(TrialIoError::EmptyFile {
            path: path.display().to_string(),
        });
    }
    Ok(trials)
}

/// Loads a choice log.
pub fn load_choices(path: &Path) -> Result<Vec<ChoiceRecord>, TrialIoError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == CHOICE_HEADER => {}
        Some((_, header)) => {
            return Err(schema_err(path, 1, format!("unexpected header {header:?}")))
        }
        None => {
            return Err(TrialIoError::EmptyFile {
                path: path.display().to_string(),
            })
        }
    }
    let mut out = Vec::new();
    for (idx, row) in lines {
        let line = idx + 1;
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 5 {
            return Err(schema_err(
                path,
                line,
                format!("expected 5 columns, found {}", fields.len()),
            ));
        }
        out.push(ChoiceRecord {
            subject_id: fields[0].to_string(),
            trial_index: parse_u32(path, line, "trial_index", fields[1])?,
            cue: fields[2].to_string(),
            response: fields[3].to_string(),
            repeats: parse_u32(path, line, "repeats", fields[4])?,
        });
    }
    if out.is_empty() {
        return Err(TrialIoError::EmptyFile {
            path: path.display().to_string(),
        });
    }
    Ok(out)
}

/// Loads subject metadata.
pub fn load_subjects(path: &Path) -> Result<Vec<SubjectInfo>, TrialIoError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == SUBJECTS_HEADER => {}
        Some((_, header)) => {
            return Err(schema_err(path, 1, format!("unexpected header {header:?}")))
        }
        None => {
            return Err(TrialIoError::EmptyFile {
                path: path.display().to_string(),
            })
        }
    }
    let mut out = Vec::new();
    for (idx, row) in lines {
        let line = idx + 1;
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 2 {
            return Err(schema_err(
                path,
                line,
                format!("expected 2 columns, found {}", fields.len()),
            ));
        }
        let level: u8 = fields[1].parse().map_err(|_| {
            schema_err(path, line, format!("invalid experience level {:?}", fields[1]))
        })?;
        out.push(SubjectInfo {
            subject_id: fields[0].to_string(),
            experience_level: level,
        });
    }
    if out.is_empty() {
        return Err(TrialIoError::EmptyFile {
            path: path.display().to_string(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_trial() -> TrialRecord {
        TrialRecord {
            subject_id: "s01".into(),
            part: Part::Part1,
            trial_index: 0,
            cue: Direction::Up,
            repeats: 1,
            samples: (0..8)
                .map(|k| {
                    let mut p = Pose6::zero(k as f64 / 80.0);
                    p.z_mm = k as f64 * 0.5;
                    p
                })
                .collect(),
        }
    }

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn movement_roundtrip_is_lossless() {
        let trials = vec![sample_trial(), {
            let mut t = sample_trial();
            t.trial_index = 1;
            t.cue = Direction::TiltRight;
            t.samples.iter_mut().for_each(|p| p.roll_deg = -3.25e-7);
            t
        }];
        let mut buf = Vec::new();
        write_movement_csv(&mut buf, &trials).unwrap();
        let f = write_temp(std::str::from_utf8(&buf).unwrap());
        let back = load_trials(f.path()).unwrap();
        assert_eq!(trials, back);
    }

    #[test]
    fn decreasing_timestamps_rejected() {
        let csv = format!(
            "{MOVEMENT_HEADER}\ns01,1,0,up,1,0.0,0,0,0,0,0,0\ns01,1,0,up,1,-0.01,0,0,0,0,0,0\n"
        );
        let f = write_temp(&csv);
        match load_trials(f.path()) {
            Err(TrialIoError::Schema { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_final_line_names_the_line() {
        let csv = format!(
            "{MOVEMENT_HEADER}\ns01,1,0,up,1,0.0,0,0,0,0,0,0\ns01,1,0,up,1,0.0125,0,0\n"
        );
        let f = write_temp(&csv);
        match load_trials(f.path()) {
            Err(TrialIoError::Schema { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("12 columns"));
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn nan_rejected() {
        let csv = format!("{MOVEMENT_HEADER}\ns01,1,0,up,1,0.0,NaN,0,0,0,0,0\n");
        let f = write_temp(&csv);
        assert!(matches!(load_trials(f.path()), Err(TrialIoError::Schema { .. })));
    }

    #[test]
    fn interleaved_trials_rejected() {
        let csv = format!(
            "{MOVEMENT_HEADER}\n\
             s01,1,0,up,1,0.0,0,0,0,0,0,0\n\
             s01,1,1,down,1,0.0,0,0,0,0,0,0\n\
             s01,1,0,up,1,0.0125,0,0,0,0,0,0\n"
        );
        let f = write_temp(&csv);
        match load_trials(f.path()) {
            Err(TrialIoError::Schema { line, message, .. }) => {
                assert_eq!(line, 4);
                assert!(message.contains("contiguous"));
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn empty_and_header_only_files() {
        let f = write_temp("");
        assert!(matches!(load_trials(f.path()), Err(TrialIoError::EmptyFile { .. })));
        let f = write_temp(&format!("{MOVEMENT_HEADER}\n"));
        assert!(matches!(load_trials(f.path()), Err(TrialIoError::EmptyFile { .. })));
    }

    #[test]
    fn choice_roundtrip() {
        let choices = vec![
            ChoiceRecord {
                subject_id: "s01".into(),
                trial_index: 0,
                cue: "up".into(),
                response: "down".into(),
                repeats: 2,
            },
            ChoiceRecord {
                subject_id: "s02".into(),
                trial_index: 5,
                cue: "tilt-left".into(),
                response: "tilt-left".into(),
                repeats: 1,
            },
        ];
        let mut buf = Vec::new();
        write_choice_csv(&mut buf, &choices).unwrap();
        let f = write_temp(std::str::from_utf8(&buf).unwrap());
        assert_eq!(load_choices(f.path()).unwrap(), choices);
    }

    #[test]
    fn subjects_roundtrip() {
        let subjects = vec![
            SubjectInfo {
                subject_id: "s01".into(),
                experience_level: 3,
            },
            SubjectInfo {
                subject_id: "s02".into(),
                experience_level: 1,
            },
        ];
        let mut buf = Vec::new();
        write_subjects_csv(&mut buf, &subjects).unwrap();
        let f = write_temp(std::str::from_utf8(&buf).unwrap());
        assert_eq!(load_subjects(f.path()).unwrap(), subjects);
    }

    #[test]
    fn sample_rate_estimate() {
        let t = sample_trial();
        assert!((t.sample_rate_hz() - 80.0).abs() < 0.5);
    }
}
