//! Study-level aggregation: runs the full pipeline over trial and choice
//! logs and assembles the report.

use crate::analysis::cluster::{cluster_responders, ResponderClusters, SubjectFeatures};
use crate::analysis::confusion::{confusion_stats, ConfusionStats};
use crate::analysis::features::{extract_features, TrialFeatures};
use crate::analysis::mixture::{delay_mixture, MixtureFit};
use crate::analysis::stats::{
    anova_with_bonferroni, ols_fit, t_quantile, welch_t_test, AnovaResult, AnovaRow, Design,
};
use crate::analysis::AnalysisError;
use crate::config::AnalysisParams;
use crate::cues::Direction;
use crate::trial::{ChoiceRecord, Dof, Part, SubjectInfo, TrialRecord};
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

/// Everything the study summary is computed from.
pub struct AnalysisInputs<'a> {
    pub trials: &'a [TrialRecord],
    pub choices: Option<&'a [ChoiceRecord]>,
    pub subjects: Option<&'a [SubjectInfo]>,
    pub params: AnalysisParams,
}

#[derive(Debug, Clone, Serialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_stat: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DelayModel {
    /// Whether the experience covariate was available and included.
    pub includes_experience: bool,
    pub n: usize,
    pub r_squared: f64,
    pub coefficients: Vec<Coefficient>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PeakCell {
    pub cue: String,
    pub part: u8,
    pub dof: String,
    pub n: usize,
    pub mean: f64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DofAnova {
    pub dof: String,
    #[serde(flatten)]
    pub result: AnovaResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct DelaySplit {
    pub rotation_mean_s: f64,
    pub translation_mean_s: f64,
    /// Rotation minus translation, signed.
    pub difference_s: f64,
    pub p_value: f64,
}

/// The complete deterministic study report.
#[derive(Debug, Clone, Serialize)]
pub struct StudySummary {
    pub n_subjects: usize,
    pub n_movement_trials: usize,
    pub n_delays_detected: usize,
    pub n_no_motion: usize,
    pub subject_features: Vec<SubjectFeatures>,
    pub clusters: ResponderClusters,
    pub delay_mixture: MixtureFit,
    pub delay_model: DelayModel,
    pub delay_rotation_vs_translation: DelaySplit,
    pub peaks: Vec<PeakCell>,
    pub peak_anova: Vec<DofAnova>,
    pub confusion: Option<ConfusionStats>,
}

impl StudySummary {
    /// One-paragraph headline for terminal output.
    pub fn headline(&self) -> String {
        let mut lines = vec![format!(
            "subjects: {} ({} fast / {} slow); movement trials: {} ({} with detected motion)",
            self.n_subjects,
            self.clusters.fast_subjects.len(),
            self.clusters.slow_subjects.len(),
            self.n_movement_trials,
            self.n_delays_detected,
        )];
        lines.push(format!(
            "delay mixture means: {:.3} s / {:.3} s (weights {:.2}/{:.2})",
            self.delay_mixture.means[0],
            self.delay_mixture.means[1],
            self.delay_mixture.weights[0],
            self.delay_mixture.weights[1],
        ));
        if let Some(c) = &self.confusion {
            lines.push(format!(
                "forced choice: {:.1}% correct over {} trials",
                c.overall_percent_correct, c.total_trials
            ));
        }
        lines.join("\n")
    }
}

fn features_for_all(
    trials: &[TrialRecord],
    params: &AnalysisParams,
) -> Result<Vec<TrialFeatures>, AnalysisError> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        trials
            .par_iter()
            .map(|t| extract_features(t, params))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        trials.iter().map(|t| extract_features(t, params)).collect()
    }
}

/// Sequential reference implementation of the feature pass, for
/// parallel-vs-serial comparisons.
pub fn features_for_all_serial(
    trials: &[TrialRecord],
    params: &AnalysisParams,
) -> Result<Vec<TrialFeatures>, AnalysisError> {
    trials.iter().map(|t| extract_features(t, params)).collect()
}

/// Runs the complete pipeline over validated logs.
pub fn summarize_study(inputs: &AnalysisInputs) -> Result<StudySummary, AnalysisError> {
    if inputs.trials.is_empty() {
        return Err(AnalysisError::InsufficientData("no trials found".into()));
    }
    let params = &inputs.params;
    let features = features_for_all(inputs.trials, params)?;

    // Per-subject aggregates in sorted subject order.
    let mut by_subject: BTreeMap<&str, Vec<&TrialFeatures>> = BTreeMap::new();
    for f in &features {
        by_subject.entry(&f.subject_id).or_default().push(f);
    }

    let mut subject_features = Vec::with_capacity(by_subject.len());
    for (subject, trials) in &by_subject {
        let delays: Vec<f64> = trials.iter().filter_map(|f| f.delay_s).collect();
        if delays.is_empty() {
            return Err(AnalysisError::InsufficientData(format!(
                "subject {subject} has no trials with detected motion"
            )));
        }
        let mean_delay = delays.iter().sum::<f64>() / delays.len() as f64;
        let mags: Vec<f64> = trials.iter().map(|f| f.peak_magnitude).collect();
        let mag_mean = mags.iter().sum::<f64>() / mags.len() as f64;
        let variance = if mags.len() > 1 {
            mags.iter().map(|m| (m - mag_mean).powi(2)).sum::<f64>() / (mags.len() - 1) as f64
        } else {
            0.0
        };
        subject_features.push(SubjectFeatures {
            subject_id: (*subject).to_string(),
            mean_delay_s: mean_delay,
            peak_magnitude_variance: variance,
        });
    }

    let clusters = cluster_responders(&subject_features)?;

    let all_delays: Vec<f64> = features.iter().filter_map(|f| f.delay_s).collect();
    let delay_mixture = delay_mixture(&all_delays)?;

    // Delay regression: set number, experience (when available), cue.
    let experience: Option<BTreeMap<&str, f64>> = match inputs.subjects {
        Some(subjects) => {
            let map: BTreeMap<&str, f64> = subjects
                .iter()
                .map(|s| (s.subject_id.as_str(), f64::from(s.experience_level)))
                .collect();
            for subject in by_subject.keys() {
                if !map.contains_key(subject) {
                    return Err(AnalysisError::MissingSubjectInfo {
                        subject_id: (*subject).to_string(),
                    });
                }
            }
            Some(map)
        }
        None => None,
    };

    let delayed: Vec<&TrialFeatures> = features.iter().filter(|f| f.delay_s.is_some()).collect();
    let y: Vec<f64> = delayed.iter().map(|f| f.delay_s.unwrap()).collect();
    let sets: Vec<f64> = delayed.iter().map(|f| f64::from(f.part.number())).collect();
    let cues: Vec<String> = delayed.iter().map(|f| f.cue.as_str().to_string()).collect();

    let mut design = Design::new(y.len()).numeric("set", &sets);
    if let Some(map) = &experience {
        let levels: Vec<f64> = delayed
            .iter()
            .map(|f| map[f.subject_id.as_str()])
            .collect();
        design = design.numeric("experience", &levels);
    }
    design = design.categorical("cue", &cues);
    let fit = ols_fit(&design, &y)?;
    let delay_model = DelayModel {
        includes_experience: experience.is_some(),
        n: y.len(),
        r_squared: fit.r_squared,
        coefficients: fit
            .names
            .iter()
            .enumerate()
            .map(|(i, name)| Coefficient {
                name: name.clone(),
                estimate: fit.coefficients[i],
                std_error: fit.std_errors[i],
                t_stat: fit.t_stats[i],
                p_value: fit.p_values[i],
            })
            .collect(),
    };

    // Rotation vs translation delays.
    let rotation: Vec<f64> = delayed
        .iter()
        .filter(|f| f.cue.is_rotation())
        .map(|f| f.delay_s.unwrap())
        .collect();
    let translation: Vec<f64> = delayed
        .iter()
        .filter(|f| !f.cue.is_rotation())
        .map(|f| f.delay_s.unwrap())
        .collect();
    let delay_rotation_vs_translation = if rotation.len() >= 2 && translation.len() >= 2 {
        let w = welch_t_test(&rotation, &translation)?;
        DelaySplit {
            rotation_mean_s: w.mean_a,
            translation_mean_s: w.mean_b,
            difference_s: w.mean_a - w.mean_b,
            p_value: w.p_value,
        }
    } else {
        DelaySplit {
            rotation_mean_s: f64::NAN,
            translation_mean_s: f64::NAN,
            difference_s: f64::NAN,
            p_value: f64::NAN,
        }
    };

    // Per-cue per-part peak means with 95% t-intervals.
    let mut peaks = Vec::new();
    for cue in Direction::ALL {
        for part in [Part::Part1, Part::Part3] {
            let cell: Vec<&TrialFeatures> = features
                .iter()
                .filter(|f| f.cue == cue && f.part == part)
                .collect();
            if cell.is_empty() {
                continue;
            }
            for dof in Dof::ALL {
                let values: Vec<f64> = cell.iter().map(|f| f.peaks[dof.index()]).collect();
                let n = values.len();
                let mean = values.iter().sum::<f64>() / n as f64;
                let half = if n > 1 {
                    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                        / (n - 1) as f64;
                    t_quantile(0.95, (n - 1) as f64) * (var / n as f64).sqrt()
                } else {
                    0.0
                };
                peaks.push(PeakCell {
                    cue: cue.as_str().to_string(),
                    part: part.number(),
                    dof: dof.as_str().to_string(),
                    n,
                    mean,
                    ci95_lo: mean - half,
                    ci95_hi: mean + half,
                });
            }
        }
    }

    // Per-DOF ANOVA across cues with subject blocking, Bonferroni pairwise.
    let mut peak_anova = Vec::new();
    for dof in Dof::ALL {
        let rows: Vec<AnovaRow> = features
            .iter()
            .map(|f| AnovaRow {
                group: f.cue.as_str().to_string(),
                block: f.subject_id.clone(),
                value: f.peaks[dof.index()],
            })
            .collect();
        let result = anova_with_bonferroni(&rows, 0.01)?;
        peak_anova.push(DofAnova {
            dof: dof.as_str().to_string(),
            result,
        });
    }

    let confusion = match inputs.choices {
        Some(choices) if !choices.is_empty() => Some(confusion_stats(choices)?),
        _ => None,
    };

    Ok(StudySummary {
        n_subjects: by_subject.len(),
        n_movement_trials: features.len(),
        n_delays_detected: all_delays.len(),
        n_no_motion: features.len() - all_delays.len(),
        subject_features,
        clusters,
        delay_mixture,
        delay_model,
        delay_rotation_vs_translation,
        peaks,
        peak_anova,
        confusion,
    })
}

/// Serializes the report to pretty JSON (deterministic for identical
/// summaries).
pub fn write_report_json(summary: &StudySummary, path: &Path) -> Result<(), AnalysisError> {
    let json = serde_json::to_string_pretty(summary)
        .map_err(|e| AnalysisError::InsufficientData(format!("serialization failed: {e}")))?;
    std::fs::write(path, json + "\n").map_err(crate::trial::TrialIoError::from)?;
    Ok(())
}

/// Writes flat CSV tables next to the JSON report: peak cells, the confusion
/// matrix, and the delay-model coefficients.
pub fn write_report_csvs(summary: &StudySummary, dir: &Path) -> Result<(), AnalysisError> {
    let io = |e: std::io::Error| AnalysisError::Io(crate::trial::TrialIoError::from(e));
    std::fs::create_dir_all(dir).map_err(io)?;

    let mut peaks = Vec::new();
    writeln!(peaks, "cue,part,dof,n,mean,ci95_lo,ci95_hi").map_err(io)?;
    for p in &summary.peaks {
        writeln!(
            peaks,
            "{},{},{},{},{},{},{}",
            p.cue, p.part, p.dof, p.n, p.mean, p.ci95_lo, p.ci95_hi
        )
        .map_err(io)?;
    }
    std::fs::write(dir.join("peaks.csv"), peaks).map_err(io)?;

    if let Some(c) = &summary.confusion {
        let mut table = Vec::new();
        writeln!(table, "cue,{}", c.directions.join(",")).map_err(io)?;
        for (i, d) in c.directions.iter().enumerate() {
            let row: Vec<String> = c.matrix_percent[i].iter().map(|v| format!("{v:.1}")).collect();
            writeln!(table, "{d},{}", row.join(",")).map_err(io)?;
        }
        std::fs::write(dir.join("confusion.csv"), table).map_err(io)?;
    }

    let mut model = Vec::new();
    writeln!(model, "name,estimate,std_error,t_stat,p_value").map_err(io)?;
    for c in &summary.delay_model.coefficients {
        writeln!(
            model,
            "{},{},{},{},{}",
            c.name, c.estimate, c.std_error, c.t_stat, c.p_value
        )
        .map_err(io)?;
    }
    std::fs::write(dir.join("delay_model.csv"), model).map_err(io)?;
    Ok(())
}
