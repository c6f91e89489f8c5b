//! Power-model regression `y ~ a * n^b`.
//!
//! Ordinary least squares on `(ln n, ln y)` gives the starting point; Gauss-Newton
//! on the untransformed residuals `y - a n^b` refines it.

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};

const MAX_ITERATIONS: usize = 100;
const STEP_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub a: f64,
    pub b: f64,
    /// Coefficient of determination of the fitted curve on log-log scale.
    pub r_squared: f64,
    /// `(y - a n^b) / y` per point.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

impl PowerFit {
    pub fn predict(&self, n: f64) -> f64 {
        self.a * n.powf(self.b)
    }
}

fn sum_sq(points: &[(f64, f64)], a: f64, b: f64) -> f64 {
    points.iter().map(|&(n, y)| (y - a * n.powf(b)).powi(2)).sum()
}

fn log_log_ols(points: &[(f64, f64)]) -> (f64, f64) {
    let m = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    ((my - b * mx).exp(), b)
}

pub fn fit_power_model(points: &[(f64, f64)]) -> Result<PowerFit> {
    if points.len() < 3 {
        return Err(arg_err(format!("power fit needs at least 3 points, got {}", points.len())));
    }
    if let Some(&(n, y)) = points.iter().find(|&&(n, y)| !(n > 0.0 && y > 0.0) || !n.is_finite() || !y.is_finite()) {
        return Err(arg_err(format!("power fit needs positive finite data, got ({n}, {y})")));
    }
    let distinct_n = {
        let mut ns: Vec<f64> = points.iter().map(|p| p.0).collect();
        ns.sort_by(f64::total_cmp);
        ns.dedup();
        ns.len()
    };
    if distinct_n < 2 {
        return Err(arg_err("power fit needs at least two distinct n"));
    }

    let (mut a, mut b) = log_log_ols(points);
    let mut current = sum_sq(points, a, b);
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        // Normal equations of the linearised problem.
        let (mut jtj00, mut jtj01, mut jtj11, mut jtr0, mut jtr1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(n, y) in points {
            let nb = n.powf(b);
            let r = y - a * nb;
            let ja = nb;
            let jb = a * nb * n.ln();
            jtj00 += ja * ja;
            jtj01 += ja * jb;
            jtj11 += jb * jb;
            jtr0 += ja * r;
            jtr1 += jb * r;
        }
        let det = jtj00 * jtj11 - jtj01 * jtj01;
        if det.abs() <= f64::EPSILON * jtj00 * jtj11 || !det.is_finite() {
            break;
        }
        let da = (jtr0 * jtj11 - jtr1 * jtj01) / det;
        let db = (jtj00 * jtr1 - jtj01 * jtr0) / det;

        // Step halving keeps the sum of squares from increasing.
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let (na, nb) = (a + scale * da, b + scale * db);
            let s = sum_sq(points, na, nb);
            if na > 0.0 && s <= current {
                accepted = Some((na, nb, s));
                break;
            }
            scale *= 0.5;
        }
        let Some((na, nb, s)) = accepted else { break };
        let rel_step = ((na - a) / a).abs().max((nb - b).abs() / (1.0 + b.abs()));
        a = na;
        b = nb;
        current = s;
        if rel_step < STEP_TOLERANCE {
            break;
        }
    }

    let log_ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mean = log_ys.iter().sum::<f64>() / log_ys.len() as f64;
    let ss_tot: f64 = log_ys.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|&(n, y)| (y.ln() - (a.ln() + b * n.ln())).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res <= 1e-20 {
        1.0
    } else {
        0.0
    };
    let residuals = points.iter().map(|&(n, y)| (y - a * n.powf(b)) / y).collect();
    Ok(PowerFit {
        a,
        b,
        r_squared,
        residuals,
        iterations,
    })
}
