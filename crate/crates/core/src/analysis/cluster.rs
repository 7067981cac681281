//! Responder clustering: 2-means on standardized (mean delay, peak-magnitude
//! variance) subject features.

use crate::analysis::AnalysisError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Per-subject clustering features.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubjectFeatures {
    pub subject_id: String,
    pub mean_delay_s: f64,
    pub peak_magnitude_variance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResponderClusters {
    pub fast_subjects: Vec<String>,
    pub slow_subjects: Vec<String>,
    /// Centroids in feature units: (mean delay s, peak-magnitude variance).
    pub fast_centroid: (f64, f64),
    pub slow_centroid: (f64, f64),
}

const RESTARTS: u64 = 8;
const MAX_ITERS: usize = 100;

fn lloyd(points: &[(f64, f64)], mut centroids: [(f64, f64); 2]) -> (Vec<usize>, [(f64, f64); 2], f64) {
    let dist2 = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);
    let mut assignments = vec![0usize; points.len()];
    for _ in 0..MAX_ITERS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let c = if dist2(*p, centroids[0]) <= dist2(*p, centroids[1]) { 0 } else { 1 };
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
        }
        let mut sums = [(0.0, 0.0); 2];
        let mut counts = [0usize; 2];
        for (i, p) in points.iter().enumerate() {
            let c = assignments[i];
            sums[c].0 += p.0;
            sums[c].1 += p.1;
            counts[c] += 1;
        }
        for c in 0..2 {
            if counts[c] == 0 {
                // Reseed an empty cluster with the point farthest from the
                // other centroid.
                let other = centroids[1 - c];
                let far = points
                    .iter()
                    .enumerate()
                    .max_by(|(_, a), (_, b)| {
                        dist2(**a, other).partial_cmp(&dist2(**b, other)).unwrap()
                    })
                    .map(|(i, _)| i)
                    .unwrap();
                centroids[c] = points[far];
                changed = true;
            } else {
                centroids[c] = (sums[c].0 / counts[c] as f64, sums[c].1 / counts[c] as f64);
            }
        }
        if !changed {
            break;
        }
    }
    let sse: f64 = points
        .iter()
        .zip(&assignments)
        .map(|(p, c)| dist2(*p, centroids[*c]))
        .sum();
    (assignments, centroids, sse)
}

/// 2-means clustering of subjects, deterministic via fixed multi-start
/// seeds. The cluster with the lower mean delay is labeled fast.
pub fn cluster_responders(features: &[SubjectFeatures]) -> Result<ResponderClusters, AnalysisError> {
    if features.len() < 2 {
        return Err(AnalysisError::InsufficientData(
            "clustering needs at least 2 subjects".into(),
        ));
    }
    let raw: Vec<(f64, f64)> = features
        .iter()
        .map(|f| (f.mean_delay_s, f.peak_magnitude_variance))
        .collect();
    if raw.iter().all(|p| *p == raw[0]) {
        return Err(AnalysisError::DegenerateFeatures);
    }

    // Standardize each feature; a constant feature contributes zero.
    let n = raw.len() as f64;
    let standardize = |get: fn(&(f64, f64)) -> f64| {
        let mean = raw.iter().map(get).sum::<f64>() / n;
        let var = raw.iter().map(|p| (get(p) - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        move |v: f64| if sd > 0.0 { (v - mean) / sd } else { 0.0 }
    };
    let zx = standardize(|p| p.0);
    let zy = standardize(|p| p.1);
    let points: Vec<(f64, f64)> = raw.iter().map(|p| (zx(p.0), zy(p.1))).collect();

    let mut best: Option<(Vec<usize>, [(f64, f64); 2], f64)> = None;
    for restart in 0..RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + restart);
        let i = rng.gen_range(0..points.len());
        let mut j = rng.gen_range(0..points.len());
        let mut guard = 0;
        while points[j] == points[i] && guard < 64 {
            j = rng.gen_range(0..points.len());
            guard += 1;
        }
        if points[j] == points[i] {
            // All candidates identical under this restart; pick the first
            // differing point deterministically.
            j = points
                .iter()
                .position(|p| *p != points[i])
                .expect("non-degenerate by the check above");
        }
        let result = lloyd(&points, [points[i], points[j]]);
        if best.as_ref().map_or(true, |(_, _, sse)| result.2 < *sse) {
            best = Some(result);
        }
    }
    let (assignments, _, _) = best.expect("at least one restart");

    // Unstandardized centroids and fast/slow labeling by mean delay.
    let mut sums = [(0.0, 0.0); 2];
    let mut counts = [0usize; 2];
    for (i, c) in assignments.iter().enumerate() {
        sums[*c].0 += raw[i].0;
        sums[*c].1 += raw[i].1;
        counts[*c] += 1;
    }
    let centroid = |c: usize| {
        (
            sums[c].0 / counts[c].max(1) as f64,
            sums[c].1 / counts[c].max(1) as f64,
        )
    };
    let (c0, c1) = (centroid(0), centroid(1));
    let fast_cluster = if c0.0 <= c1.0 { 0 } else { 1 };

    let mut fast_subjects = Vec::new();
    let mut slow_subjects = Vec::new();
    for (f, c) in features.iter().zip(&assignments) {
        if *c == fast_cluster {
            fast_subjects.push(f.subject_id.clone());
        } else {
            slow_subjects.push(f.subject_id.clone());
        }
    }
    let (fast_centroid, slow_centroid) = if fast_cluster == 0 { (c0, c1) } else { (c1, c0) };

    Ok(ResponderClusters {
        fast_subjects,
        slow_subjects,
        fast_centroid,
        slow_centroid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn features(points: &[(f64, f64)]) -> Vec<SubjectFeatures> {
        points
            .iter()
            .enumerate()
            .map(|(i, (d, v))| SubjectFeatures {
                subject_id: format!("s{:02}", i + 1),
                mean_delay_s: *d,
                peak_magnitude_variance: *v,
            })
            .collect()
    }

    #[test]
    fn separated_clouds_recovered_exactly() {
        let mut pts = Vec::new();
        for i in 0..13 {
            pts.push((0.33 + 0.002 * i as f64, 1.5 + 0.05 * i as f64));
        }
        for i in 0..7 {
            pts.push((1.56 + 0.004 * i as f64, 25.0 + 0.4 * i as f64));
        }
        let clusters = cluster_responders(&features(&pts)).unwrap();
        assert_eq!(clusters.fast_subjects.len(), 13);
        assert_eq!(clusters.slow_subjects.len(), 7);
        assert!(clusters.fast_subjects.iter().all(|s| {
            s[1..].parse::<usize>().unwrap() <= 13
        }));
        assert!(clusters.fast_centroid.0 < clusters.slow_centroid.0);
    }

    #[test]
    fn duplication_preserves_centroids() {
        let pts = vec![
            (0.3, 1.0),
            (0.35, 1.2),
            (0.32, 0.9),
            (1.5, 20.0),
            (1.6, 22.0),
        ];
        let once = cluster_responders(&features(&pts)).unwrap();
        let doubled: Vec<(f64, f64)> = pts.iter().chain(pts.iter()).copied().collect();
        let twice = cluster_responders(&features(&doubled)).unwrap();
        assert!((once.fast_centroid.0 - twice.fast_centroid.0).abs() < 1e-12);
        assert!((once.fast_centroid.1 - twice.fast_centroid.1).abs() < 1e-12);
        assert!((once.slow_centroid.0 - twice.slow_centroid.0).abs() < 1e-12);
        assert_eq!(twice.fast_subjects.len(), 2 * once.fast_subjects.len());
    }

    #[test]
    fn identical_points_degenerate() {
        let pts = vec![(0.5, 2.0); 6];
        assert!(matches!(
            cluster_responders(&features(&pts)),
            Err(AnalysisError::DegenerateFeatures)
        ));
    }

    #[test]
    fn deterministic_across_calls() {
        let pts = vec![
            (0.31, 1.1),
            (0.29, 0.8),
            (0.40, 1.4),
            (1.49, 19.0),
            (1.62, 24.0),
            (1.55, 21.0),
        ];
        let a = format!("{:?}", cluster_responders(&features(&pts)).unwrap());
        let b = format!("{:?}", cluster_responders(&features(&pts)).unwrap());
        assert_eq!(a, b);
    }
}
