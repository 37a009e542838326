//! Central finite-difference check of the hand-written backward pass.

use serde::{Deserialize, Serialize};

use super::layers::Params;
use super::train::Example;
use super::transformer::TransformerModel;
use crate::Result;

/// Gradients below this magnitude are compared absolutely rather than relatively.
pub const GRADIENT_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `name[index]` of the worst parameter.
    pub worst: String,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

/// `|a - n| / max(|a|, |n|, GRADIENT_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADIENT_FLOOR)
}

fn total_loss(model: &TransformerModel<f64>, batch: &[Example]) -> Result<f64> {
    let mut sum = 0.0;
    for ex in batch {
        sum += model.loss(&ex.source, &ex.target)?.loss;
    }
    Ok(sum)
}

/// Analytic gradient of the summed batch loss, with dropout disabled.
pub fn analytic_gradient(model: &TransformerModel<f64>, batch: &[Example]) -> Result<TransformerModel<f64>> {
    let mut grad = model.zeros_like();
    for ex in batch {
        model.loss_and_grad(&ex.source, &ex.target, &mut grad, None)?;
    }
    Ok(grad)
}

/// Compare every parameter (or, with `stride > 1`, every `stride`-th one) of
/// `analytic` against `(L(θ + h) − L(θ − h)) / 2h`.
pub fn compare_gradients(
    model: &TransformerModel<f64>,
    batch: &[Example],
    analytic: &TransformerModel<f64>,
    step: f64,
    stride: usize,
) -> Result<GradCheckReport> {
    let mut names = Vec::new();
    let mut grads = Vec::new();
    analytic.visit("", &mut |name, g| {
        names.push(name.to_string());
        grads.push(g.to_vec());
    });
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: String::new(),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut probe = model.clone();
    for (t, g) in grads.iter().enumerate() {
        for i in (0..g.len()).step_by(stride.max(1)) {
            let original = nth(&mut probe, t)[i];
            nth(&mut probe, t)[i] = original + step;
            let plus = total_loss(&probe, batch)?;
            nth(&mut probe, t)[i] = original - step;
            let minus = total_loss(&probe, batch)?;
            nth(&mut probe, t)[i] = original;
            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(g[i], numeric);
            report.checked += 1;
            if err > report.max_relative_error || report.worst.is_empty() {
                report.max_relative_error = err;
                report.worst = format!("{}[{i}]", names[t]);
                report.analytic = g[i];
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

fn nth(model: &mut TransformerModel<f64>, t: usize) -> &mut [f64] {
    let mut out = None;
    let mut k = 0;
    model.visit_mut("", &mut |_, p| {
        if k == t {
            out = Some(p);
        }
        k += 1;
    });
    out.expect("tensor index in range")
}

/// Check all parameters of a dropout-free model on a small batch.
pub fn gradient_check(model: &TransformerModel<f64>, batch: &[Example], step: f64) -> Result<GradCheckReport> {
    let mut m = model.clone();
    m.config.dropout = 0.0;
    let analytic = analytic_gradient(&m, batch)?;
    compare_gradients(&m, batch, &analytic, step, 1)
}
