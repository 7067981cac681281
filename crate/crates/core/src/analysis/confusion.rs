//! Forced-choice confusion statistics.

use crate::analysis::AnalysisError;
use crate::cues::Direction;
use crate::trial::ChoiceRecord;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusionStats {
    /// Row/column labels in canonical reporting order.
    pub directions: Vec<String>,
    pub counts: [[u64; 8]; 8],
    /// Row-normalized percentages (rows with no trials stay at zero).
    pub matrix_percent: [[f64; 8]; 8],
    pub row_totals: [u64; 8],
    pub total_trials: u64,
    /// Diagonal share of all trials, percent.
    pub overall_percent_correct: f64,
}

/// Builds the row-normalized confusion matrix from a choice log.
pub fn confusion_stats(choices: &[ChoiceRecord]) -> Result<ConfusionStats, AnalysisError> {
    let mut counts = [[0u64; 8]; 8];
    for c in choices {
        let cue = Direction::parse(&c.cue).ok_or_else(|| AnalysisError::UnknownLabel {
            label: c.cue.clone(),
        })?;
        let response = Direction::parse(&c.response).ok_or_else(|| AnalysisError::UnknownLabel {
            label: c.response.clone(),
        })?;
        counts[cue.index()][response.index()] += 1;
    }

    let mut matrix_percent = [[0.0f64; 8]; 8];
    let mut row_totals = [0u64; 8];
    let mut total = 0u64;
    let mut correct = 0u64;
    for i in 0..8 {
        let row_total: u64 = counts[i].iter().sum();
        row_totals[i] = row_total;
        total += row_total;
        correct += counts[i][i];
        if row_total > 0 {
            for j in 0..8 {
                matrix_percent[i][j] = 100.0 * counts[i][j] as f64 / row_total as f64;
            }
        }
    }

    Ok(ConfusionStats {
        directions: Direction::ALL.iter().map(|d| d.as_str().to_string()).collect(),
        counts,
        matrix_percent,
        row_totals,
        total_trials: total,
        overall_percent_correct: if total > 0 {
            100.0 * correct as f64 / total as f64
        } else {
            0.0
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn record(cue: Direction, response: Direction, idx: u32) -> ChoiceRecord {
        ChoiceRecord {
            subject_id: "s01".into(),
            trial_index: idx,
            cue: cue.as_str().into(),
            response: response.as_str().into(),
            repeats: 1,
        }
    }

    #[test]
    fn all_correct_is_identity_times_100() {
        let mut choices = Vec::new();
        for d in Direction::ALL {
            for k in 0..5 {
                choices.push(record(d, d, k));
            }
        }
        let stats = confusion_stats(&choices).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let expected = if i == j { 100.0 } else { 0.0 };
                assert_eq!(stats.matrix_percent[i][j], expected);
            }
        }
        assert_eq!(stats.overall_percent_correct, 100.0);
    }

    #[test]
    fn rows_sum_to_100() {
        let mut rng = StdRng::seed_from_u64(3);
        let mut choices = Vec::new();
        for (k, d) in Direction::ALL.iter().cycle().take(400).enumerate() {
            let response = Direction::ALL[rng.gen_range(0..8)];
            choices.push(record(*d, response, k as u32));
        }
        let stats = confusion_stats(&choices).unwrap();
        for i in 0..8 {
            let sum: f64 = stats.matrix_percent[i].iter().sum();
            assert!((sum - 100.0).abs() < 0.1, "row {i} sums to {sum}");
        }
    }

    #[test]
    fn uniform_responses_sit_near_chance() {
        let mut rng = StdRng::seed_from_u64(8);
        let mut choices = Vec::new();
        for k in 0..48_000u32 {
            let cue = Direction::ALL[(k % 8) as usize];
            let response = Direction::ALL[rng.gen_range(0..8)];
            choices.push(record(cue, response, k));
        }
        let stats = confusion_stats(&choices).unwrap();
        for i in 0..8 {
            assert!(
                (stats.matrix_percent[i][i] - 12.5).abs() < 1.5,
                "diagonal {i}: {}",
                stats.matrix_percent[i][i]
            );
        }
        assert!((stats.overall_percent_correct - 12.5).abs() < 0.5);
    }

    #[test]
    fn unknown_label_rejected() {
        let mut c = record(Direction::Up, Direction::Up, 0);
        c.response = "sideways".into();
        assert!(matches!(
            confusion_stats(&[c]),
            Err(AnalysisError::UnknownLabel { .. })
        ));
    }
}
