//! Two-component 1-D Gaussian mixture for the delay distribution.

use crate::analysis::AnalysisError;
use serde::Serialize;

const MAX_ITERS: usize = 500;
const LL_TOL: f64 = 1e-10;
const VAR_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MixtureFit {
    /// Component means, sorted ascending.
    pub means: [f64; 2],
    pub sds: [f64; 2],
    pub weights: [f64; 2],
    pub log_likelihood: f64,
    pub iterations: usize,
    /// False when EM hit the iteration cap; the best-so-far fit is returned.
    pub converged: bool,
}

fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean).powi(2) / var)
}

/// Interpolated percentile of sorted data (0 ≤ q ≤ 1).
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Fits a two-component Gaussian mixture by EM with deterministic
/// initialization at the 25th/75th percentiles. The input order does not
/// matter: data are sorted into a canonical order before fitting.
pub fn delay_mixture(delays: &[f64]) -> Result<MixtureFit, AnalysisError> {
    if delays.len() < 4 {
        return Err(AnalysisError::InsufficientData(
            "mixture fit needs at least 4 delays".into(),
        ));
    }
    let mut data = delays.to_vec();
    data.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = data.len() as f64;

    let sample_mean = data.iter().sum::<f64>() / n;
    let sample_var = (data.iter().map(|x| (x - sample_mean).powi(2)).sum::<f64>() / n)
        .max(VAR_FLOOR);

    let mut means = [percentile(&data, 0.25), percentile(&data, 0.75)];
    let mut vars = [sample_var, sample_var];
    let mut weights: [f64; 2] = [0.5, 0.5];

    let mut ll_prev = f64::NEG_INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut resp = vec![0.0f64; data.len()];

    while iterations < MAX_ITERS {
        iterations += 1;

        // E step: responsibility of component 0 for each point.
        let mut ll = 0.0;
        for (i, &x) in data.iter().enumerate() {
            let l0 = weights[0].max(1e-300).ln() + log_normal_pdf(x, means[0], vars[0]);
            let l1 = weights[1].max(1e-300).ln() + log_normal_pdf(x, means[1], vars[1]);
            let m = l0.max(l1);
            let e0 = (l0 - m).exp();
            let e1 = (l1 - m).exp();
            resp[i] = e0 / (e0 + e1);
            ll += m + (e0 + e1).ln();
        }

        // M step.
        let n0: f64 = resp.iter().sum();
        let n1 = n - n0;
        if n0 > 1e-9 {
            means[0] = data.iter().zip(&resp).map(|(x, r)| x * r).sum::<f64>() / n0;
            vars[0] = (data
                .iter()
                .zip(&resp)
                .map(|(x, r)| r * (x - means[0]).powi(2))
                .sum::<f64>()
                / n0)
                .max(VAR_FLOOR);
        }
        if n1 > 1e-9 {
            means[1] = data.iter().zip(&resp).map(|(x, r)| x * (1.0 - r)).sum::<f64>() / n1;
            vars[1] = (data
                .iter()
                .zip(&resp)
                .map(|(x, r)| (1.0 - r) * (x - means[1]).powi(2))
                .sum::<f64>()
                / n1)
                .max(VAR_FLOOR);
        }
        weights = [n0 / n, n1 / n];

        if (ll - ll_prev).abs() < LL_TOL * (1.0 + ll.abs()) {
            ll_prev = ll;
            converged = true;
            break;
        }
        ll_prev = ll;
    }

    // Report components sorted by mean.
    let order = if means[0] <= means[1] { [0, 1] } else { [1, 0] };
    Ok(MixtureFit {
        means: [means[order[0]], means[order[1]]],
        sds: [vars[order[0]].sqrt(), vars[order[1]].sqrt()],
        weights: [weights[order[0]], weights[order[1]]],
        log_likelihood: ll_prev,
        iterations,
        converged,
    })
}
