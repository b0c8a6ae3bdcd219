use super::{GmmModel, SampleSet};
use crate::numerics::{max_weight_assignment, min_cost_assignment};

/// Variances are clamped to this value when scoring samples, so components
/// with a collapsed coordinate still assign nearby points.
pub const CLASSIFY_VARIANCE_FLOOR: f64 = 1e-3;

pub(super) fn log_density(model: &GmmModel, i: usize, y: &[f64], floor: f64) -> f64 {
    let w = model.weights[i];
    if w <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let quad: f64 = y
        .iter()
        .zip(&model.means[i])
        .zip(&model.variances[i])
        .map(|((x, mu), v)| {
            let v = v.max(floor);
            (2.0 * std::f64::consts::PI * v).ln() + (x - mu).powi(2) / v
        })
        .sum();
    w.ln() - 0.5 * quad
}

/// Index of the component with the largest `omega_i N(y; mu_i, Sigma_i)`.
pub fn classify(model: &GmmModel, samples: &SampleSet) -> Vec<usize> {
    samples
        .rows()
        .map(|y| {
            let mut best = (0, f64::NEG_INFINITY);
            for i in 0..model.r() {
                let s = log_density(model, i, y, CLASSIFY_VARIANCE_FLOOR);
                if s > best.1 {
                    best = (i, s);
                }
            }
            best.0
        })
        .collect()
}

/// Fraction of samples labeled correctly under the best one-to-one matching
/// of predicted to true components.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(predicted.len(), truth.len(), "label counts differ");
    if predicted.is_empty() {
        return 1.0;
    }
    let k = predicted.iter().chain(truth).max().map_or(0, |&x| x + 1);
    let mut confusion = vec![vec![0.0; k]; k];
    for (&p, &t) in predicted.iter().zip(truth) {
        confusion[p][t] += 1.0;
    }
    let assign = max_weight_assignment(&confusion);
    let hits: f64 = assign.iter().enumerate().map(|(p, &t)| confusion[p][t]).sum();
    hits / predicted.len() as f64
}

fn component_gap(a: &GmmModel, i: usize, b: &GmmModel, j: usize) -> f64 {
    let mu = a.means[i].iter().zip(&b.means[j]).map(|(x, y)| (x - y).abs());
    let var = a.variances[i].iter().zip(&b.variances[j]).map(|(x, y)| (x - y).abs());
    mu.chain(var).fold((a.weights[i] - b.weights[j]).abs(), f64::max)
}

/// Largest absolute difference over weights, means and variances after
/// matching components optimally.
pub fn parameter_error(truth: &GmmModel, est: &GmmModel) -> f64 {
    assert_eq!(truth.r(), est.r(), "component counts differ");
    let cost: Vec<Vec<f64>> = (0..truth.r())
        .map(|i| (0..est.r()).map(|j| component_gap(truth, i, est, j)).collect())
        .collect();
    let assign = min_cost_assignment(&cost);
    assign.iter().enumerate().map(|(i, &j)| cost[i][j]).fold(0.0, f64::max)
}
