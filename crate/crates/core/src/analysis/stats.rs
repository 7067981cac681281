//! Least-squares regression and fixed-effects ANOVA.

use crate::analysis::AnalysisError;
use nalgebra::{DMatrix, DVector, RowDVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};
use std::collections::BTreeMap;

/// A regression design matrix with named columns. Categorical predictors are
/// expanded to reference-level dummy columns (levels sorted, first level is
/// the reference).
#[derive(Debug, Clone)]
pub struct Design {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    n: usize,
}

impl Design {
    pub fn new(n: usize) -> Self {
        Self {
            names: vec!["intercept".into()],
            columns: vec![vec![1.0; n]],
            n,
        }
    }

    pub fn numeric(mut self, name: &str, values: &[f64]) -> Self {
        assert_eq!(values.len(), self.n, "predictor length mismatch");
        self.names.push(name.into());
        self.columns.push(values.to_vec());
        self
    }

    pub fn categorical(mut self, name: &str, labels: &[String]) -> Self {
        assert_eq!(labels.len(), self.n, "predictor length mismatch");
        let mut levels: Vec<&String> = labels.iter().collect();
        levels.sort();
        levels.dedup();
        for level in levels.iter().skip(1) {
            self.names.push(format!("{name}[{level}]"));
            self.columns.push(
                labels
                    .iter()
                    .map(|l| if l == *level { 1.0 } else { 0.0 })
                    .collect(),
            );
        }
        self
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.columns.len(), |i, j| self.columns[j][i])
    }
}

/// A fitted ordinary-least-squares model.
#[derive(Debug, Clone, Serialize)]
pub struct OlsFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r_squared: f64,
    pub rss: f64,
    pub df_resid: f64,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl OlsFit {
    pub fn coefficient(&self, name: &str) -> Option<(f64, f64, f64)> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| (self.coefficients[i], self.std_errors[i], self.p_values[i]))
    }
}

fn two_sided_t_p(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    if df <= 0.0 {
        return f64::NAN;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid t distribution");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

fn f_p_value(f: f64, df1: f64, df2: f64) -> f64 {
    if !f.is_finite() {
        return 0.0;
    }
    if df1 <= 0.0 || df2 <= 0.0 {
        return f64::NAN;
    }
    let dist = FisherSnedecor::new(df1, df2).expect("valid F distribution");
    (1.0 - dist.cdf(f.max(0.0))).clamp(0.0, 1.0)
}

/// Fits y against the design by QR decomposition with column pivoting.
/// Rank deficiency is reported with the names of the collinear columns.
pub fn ols_fit(design: &Design, y: &[f64]) -> Result<OlsFit, AnalysisError> {
    let n = design.n;
    let p = design.columns.len();
    if y.len() != n {
        return Err(AnalysisError::InsufficientData(format!(
            "response length {} does not match design rows {n}",
            y.len()
        )));
    }
    if n <= p {
        return Err(AnalysisError::InsufficientData(format!(
            "need more observations ({n}) than parameters ({p})"
        )));
    }

    let x = design.matrix();
    let yv = DVector::from_column_slice(y);
    let qr = x.clone().col_piv_qr();

    // Recover the column permutation as an index vector.
    let mut idx = RowDVector::from_fn(p, |_, j| j as f64);
    qr.p().permute_columns(&mut idx);
    let perm: Vec<usize> = idx.iter().map(|v| *v as usize).collect();

    let r = qr.r();
    let r00 = r[(0, 0)].abs().max(f64::MIN_POSITIVE);
    let tol = 1e-10 * r00 * (n.max(p) as f64);
    let rank = (0..p).take_while(|&k| r[(k, k)].abs() > tol).count();
    if rank < p {
        let columns = (rank..p).map(|k| design.names[perm[k]].clone()).collect();
        return Err(AnalysisError::RankDeficient { columns });
    }

    // β: solve R z = Qᵀ y, then undo the permutation.
    let qty = qr.q().transpose() * &yv;
    let z = r
        .solve_upper_triangular(&qty.rows(0, p).into_owned())
        .ok_or_else(|| AnalysisError::RankDeficient {
            columns: vec!["<r singular>".into()],
        })?;
    let mut beta = vec![0.0; p];
    for k in 0..p {
        beta[perm[k]] = z[k];
    }

    let fitted = &x * DVector::from_column_slice(&beta);
    let residuals: Vec<f64> = (0..n).map(|i| y[i] - fitted[i]).collect();
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let df_resid = (n - p) as f64;
    let sigma2 = rss / df_resid;

    // (XᵀX)⁻¹ diag through R⁻¹: invert R by back-substitution on the identity.
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| AnalysisError::RankDeficient {
            columns: vec!["<r singular>".into()],
        })?;
    let mut std_errors = vec![0.0; p];
    for k in 0..p {
        let row_norm2: f64 = (0..p).map(|j| r_inv[(k, j)].powi(2)).sum();
        std_errors[perm[k]] = (sigma2 * row_norm2).sqrt();
    }

    let y_mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };

    let t_stats: Vec<f64> = beta
        .iter()
        .zip(&std_errors)
        .map(|(b, se)| if *se > 0.0 { b / se } else { f64::INFINITY * b.signum() })
        .collect();
    let p_values: Vec<f64> = t_stats.iter().map(|t| two_sided_t_p(*t, df_resid)).collect();

    Ok(OlsFit {
        names: design.names.clone(),
        coefficients: beta,
        std_errors,
        t_stats,
        p_values,
        r_squared,
        rss,
        df_resid,
        residuals,
    })
}

/// Welch's two-sample t-test.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WelchResult {
    pub mean_a: f64,
    pub mean_b: f64,
    pub t_stat: f64,
    pub df: f64,
    pub p_value: f64,
}

pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult, AnalysisError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(AnalysisError::InsufficientData(
            "welch t-test needs at least 2 observations per group".into(),
        ));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64], m: f64| v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (var(a, ma), var(b, mb));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let se2 = va / na + vb / nb;

    if se2 == 0.0 {
        let same = ma == mb;
        return Ok(WelchResult {
            mean_a: ma,
            mean_b: mb,
            t_stat: if same { 0.0 } else { f64::INFINITY },
            df: na + nb - 2.0,
            p_value: if same { 1.0 } else { 0.0 },
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2.powi(2) / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    Ok(WelchResult {
        mean_a: ma,
        mean_b: mb,
        t_stat: t,
        df,
        p_value: two_sided_t_p(t, df),
    })
}

/// One observation for the ANOVA: a value grouped by factor level and
/// blocked by subject.
#[derive(Debug, Clone)]
pub struct AnovaRow {
    pub group: String,
    pub block: String,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairwiseComparison {
    pub group_a: String,
    pub group_b: String,
    pub mean_a: f64,
    pub mean_b: f64,
    pub p_raw: f64,
    /// Significant at the Bonferroni-adjusted level alpha / n_comparisons.
    pub significant: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnovaResult {
    /// None when the groups are degenerate (zero residual variance).
    pub f_stat: Option<f64>,
    pub p_value: Option<f64>,
    pub df_group: f64,
    pub df_resid: f64,
    pub degenerate: bool,
    pub alpha: f64,
    pub n_comparisons: usize,
    pub group_means: BTreeMap<String, f64>,
    pub pairwise: Vec<PairwiseComparison>,
}

/// Fixed-effects one-way ANOVA on the group factor with the block entered
/// additively, followed by Bonferroni-corrected pairwise Welch t-tests.
pub fn anova_with_bonferroni(rows: &[AnovaRow], alpha: f64) -> Result<AnovaResult, AnalysisError> {
    let mut by_group: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in rows {
        by_group.entry(&r.group).or_default().push(r.value);
    }
    if by_group.len() < 2 {
        return Err(AnalysisError::InsufficientData(
            "anova needs at least 2 groups".into(),
        ));
    }
    if by_group.values().any(|v| v.len() < 2) {
        return Err(AnalysisError::InsufficientData(
            "anova needs at least 2 observations per group".into(),
        ));
    }

    let n = rows.len();
    let y: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let groups: Vec<String> = rows.iter().map(|r| r.group.clone()).collect();
    let blocks: Vec<String> = rows.iter().map(|r| r.block.clone()).collect();

    let full = Design::new(n)
        .categorical("block", &blocks)
        .categorical("group", &groups);
    let reduced = Design::new(n).categorical("block", &blocks);

    let k = by_group.len();
    let df_group = (k - 1) as f64;

    let fit_full = ols_fit(&full, &y)?;
    let fit_reduced = ols_fit(&reduced, &y)?;

    let scale: f64 = y.iter().map(|v| v * v).sum::<f64>().max(1.0);
    let degenerate = fit_full.rss <= 1e-12 * scale;
    let (f_stat, p_value) = if degenerate {
        (None, None)
    } else {
        let f = ((fit_reduced.rss - fit_full.rss) / df_group) / (fit_full.rss / fit_full.df_resid);
        (Some(f), Some(f_p_value(f, df_group, fit_full.df_resid)))
    };

    let group_means: BTreeMap<String, f64> = by_group
        .iter()
        .map(|(g, v)| ((*g).to_string(), v.iter().sum::<f64>() / v.len() as f64))
        .collect();

    let names: Vec<&str> = by_group.keys().copied().collect();
    let n_comparisons = k * (k - 1) / 2;
    let adjusted_alpha = alpha / n_comparisons as f64;
    let mut pairwise = Vec::with_capacity(n_comparisons);
    for i in 0..names.len() {
        for j in i + 1..names.len() {
            let w = welch_t_test(&by_group[names[i]], &by_group[names[j]])?;
            pairwise.push(PairwiseComparison {
                group_a: names[i].to_string(),
                group_b: names[j].to_string(),
                mean_a: w.mean_a,
                mean_b: w.mean_b,
                p_raw: w.p_value,
                significant: !degenerate && w.p_value < adjusted_alpha,
            });
        }
    }

    Ok(AnovaResult {
        f_stat,
        p_value,
        df_group,
        df_resid: fit_full.df_resid,
        degenerate,
        alpha,
        n_comparisons,
        group_means,
        pairwise,
    })
}

/// Student-t quantile for two-sided confidence intervals.
pub fn t_quantile(confidence: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df.max(1.0)).expect("valid t distribution");
    dist.inverse_cdf(0.5 + confidence / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    #[test]
    fn ols_hand_computable_line() {
        // x = 0..3, y = 1 + 2x: exact fit.
        let design = Design::new(4).numeric("x", &[0.0, 1.0, 2.0, 3.0]);
        let fit = ols_fit(&design, &[1.0, 3.0, 5.0, 7.0]).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ols_exact_fit_on_noiseless_predictor() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|v| -0.7 + 3.25 * v).collect();
        let fit = ols_fit(&Design::new(50).numeric("x", &x), &y).unwrap();
        assert!((fit.coefficients[1] - 3.25).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ols_standard_errors_match_direct_inverse() {
        let mut rng = StdRng::seed_from_u64(9);
        let n = 120;
        let x1: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
        let noise = Normal::new(0.0, 0.5).unwrap();
        let y: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.8 * x1[i] - 0.3 * x2[i] + noise.sample(&mut rng))
            .collect();
        let design = Design::new(n).numeric("x1", &x1).numeric("x2", &x2);
        let fit = ols_fit(&design, &y).unwrap();

        // Independent route: (XᵀX)⁻¹ by direct inversion.
        let x = design.matrix();
        let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
        let sigma2 = fit.rss / fit.df_resid;
        for j in 0..3 {
            let expected = (sigma2 * xtx_inv[(j, j)]).sqrt();
            assert!(
                (fit.std_errors[j] - expected).abs() < 1e-10,
                "se[{j}]: {} vs {}",
                fit.std_errors[j],
                expected
            );
        }
    }

    #[test]
    fn ols_residuals_orthogonal_to_design() {
        let mut rng = StdRng::seed_from_u64(10);
        let n = 200;
        let x1: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let labels: Vec<String> = (0..n).map(|i| format!("g{}", i % 4)).collect();
        let y: Vec<f64> = (0..n).map(|i| x1[i] * 2.0 + (i % 4) as f64 + rng.gen_range(-0.1..0.1)).collect();
        let design = Design::new(n).numeric("x1", &x1).categorical("g", &labels);
        let fit = ols_fit(&design, &y).unwrap();

        let x = design.matrix();
        let r = DVector::from_column_slice(&fit.residuals);
        let xtr = x.transpose() * &r;
        let scale = y.iter().map(|v| v.abs()).fold(0.0f64, f64::max) * n as f64;
        for j in 0..xtr.len() {
            assert!(xtr[j].abs() / scale < 1e-8, "column {j}: {}", xtr[j]);
        }
    }

    #[test]
    fn ols_rank_deficiency_names_columns() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let y: Vec<f64> = x.iter().map(|v| v + 1.0).collect();
        let design = Design::new(20).numeric("a", &x).numeric("b", &x2);
        match ols_fit(&design, &y) {
            Err(AnalysisError::RankDeficient { columns }) => {
                assert!(!columns.is_empty());
                assert!(columns.iter().all(|c| ["a", "b", "intercept"].contains(&c.as_str())));
            }
            other => panic!("expected RankDeficient, got {other:?}"),
        }
    }

    #[test]
    fn ols_recovers_slope_with_noise_and_strong_significance() {
        // Injected slope −0.041 per level, noise sd 0.1, n = 3200.
        let mut rng = StdRng::seed_from_u64(123);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let n = 3200;
        let levels: Vec<f64> = (0..n).map(|i| (i % 4 + 1) as f64).collect();
        let y: Vec<f64> = levels
            .iter()
            .map(|l| 0.5 - 0.041 * l + noise.sample(&mut rng))
            .collect();
        let fit = ols_fit(&Design::new(n).numeric("experience", &levels), &y).unwrap();
        let (slope, _, p) = fit.coefficient("experience").unwrap();
        assert!(
            (slope - (-0.041)).abs() < 0.1 * 0.041,
            "slope {slope} off by more than 10%"
        );
        assert!(p < 1e-3, "p = {p}");
    }

    #[test]
    fn welch_separated_groups() {
        let a = vec![0.1, -0.2, 0.05, 0.0, 0.15];
        let b = vec![10.0, 10.1, 9.9, 10.05, 9.95];
        let w = welch_t_test(&a, &b).unwrap();
        assert!(w.p_value < 1e-6);
    }

    #[test]
    fn anova_identical_groups_flagged_degenerate() {
        let rows: Vec<AnovaRow> = (0..40)
            .map(|i| AnovaRow {
                group: format!("g{}", i % 4),
                block: format!("s{}", i % 5),
                value: 3.0,
            })
            .collect();
        let res = anova_with_bonferroni(&rows, 0.05).unwrap();
        assert!(res.degenerate);
        assert!(res.f_stat.is_none());
        assert!(res.pairwise.iter().all(|p| !p.significant));
    }

    #[test]
    fn anova_separated_groups_significant() {
        let mut rng = StdRng::seed_from_u64(21);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut rows = Vec::new();
        for i in 0..50 {
            rows.push(AnovaRow {
                group: "a".into(),
                block: format!("s{}", i % 10),
                value: noise.sample(&mut rng),
            });
            rows.push(AnovaRow {
                group: "b".into(),
                block: format!("s{}", i % 10),
                value: 10.0 + noise.sample(&mut rng),
            });
        }
        let res = anova_with_bonferroni(&rows, 0.01).unwrap();
        assert!(res.p_value.unwrap() < 1e-9);
        assert_eq!(res.pairwise.len(), 1);
        assert!(res.pairwise[0].significant);
    }

    #[test]
    fn anova_block_absorbs_subject_offsets() {
        // Two groups identical within subject; large between-subject offsets.
        // Blocking keeps the group factor non-significant.
        let mut rows = Vec::new();
        let mut rng = StdRng::seed_from_u64(33);
        let noise = Normal::new(0.0, 0.01).unwrap();
        for s in 0..8 {
            let offset = s as f64 * 50.0;
            for _ in 0..6 {
                rows.push(AnovaRow {
                    group: "a".into(),
                    block: format!("s{s}"),
                    value: offset + noise.sample(&mut rng),
                });
                rows.push(AnovaRow {
                    group: "b".into(),
                    block: format!("s{s}"),
                    value: offset + noise.sample(&mut rng),
                });
            }
        }
        let res = anova_with_bonferroni(&rows, 0.05).unwrap();
        assert!(res.p_value.unwrap() > 0.05, "p = {:?}", res.p_value);
    }

    #[test]
    fn t_quantile_matches_known_values() {
        // Classic table values: t(0.975, 10) ≈ 2.228, t(0.975, 199) ≈ 1.972.
        assert!((t_quantile(0.95, 10.0) - 2.228).abs() < 5e-3);
        assert!((t_quantile(0.95, 199.0) - 1.972).abs() < 5e-3);
    }
}
