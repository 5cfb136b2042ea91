//! Central finite-difference verification of the analytic gradients.

use serde::Serialize;

use crate::error::Result;
use crate::geometry::SpatialFeature;
use crate::model::{ScoreRequest, ScrcConfig, ScrcModel, VisualInput};
use crate::nncore::{init_uniform, Rng};
use crate::textproc::TokenSequence;

pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub parameters_checked: usize,
    pub step: f64,
    /// Largest per-element `|a − n| / max(|a|, |n|, 1e-8)`.
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    /// Largest per-tensor `‖a − n‖ / max(‖a‖, ‖n‖)`.
    pub max_tensor_relative_error: f64,
    /// `ε · |loss| / step`: the absolute error central differences cannot resolve below.
    pub roundoff_floor: f64,
    pub worst_parameter: String,
    pub worst_element: usize,
    pub analytic: f64,
    pub numeric: f64,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn total_loss(model: &ScrcModel<f64>, requests: &[ScoreRequest<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for r in requests {
        total -= model.sequence_log_prob(r)?;
    }
    Ok(total)
}

/// Compares `∂/∂θ Σ −log p` against central differences for every parameter element.
pub fn check_gradients(model: &ScrcModel<f64>, requests: &[ScoreRequest<f64>], step: f64) -> Result<GradCheckReport> {
    let mut analytic = model.clone();
    analytic.params.zero_grads();
    for r in requests {
        analytic.loss_and_backward(r, 1.0)?;
    }
    let grads: Vec<(String, Vec<f64>)> = analytic
        .params
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.grad.data().to_vec()))
        .collect();

    let mut probe = model.clone();
    let mut report = GradCheckReport {
        parameters_checked: 0,
        step,
        max_relative_error: 0.0,
        max_absolute_error: 0.0,
        max_tensor_relative_error: 0.0,
        roundoff_floor: f64::EPSILON * total_loss(model, requests)?.abs() / step,
        worst_parameter: String::new(),
        worst_element: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    for (ti, (name, grad)) in grads.iter().enumerate() {
        let (mut diff_sq, mut a_sq, mut n_sq) = (0.0, 0.0, 0.0);
        for (e, &a) in grad.iter().enumerate() {
            let original = probe.params.named_tensors()[ti].1.value.data()[e];
            set_element(&mut probe, ti, e, original + step);
            let plus = total_loss(&probe, requests)?;
            set_element(&mut probe, ti, e, original - step);
            let minus = total_loss(&probe, requests)?;
            set_element(&mut probe, ti, e, original);
            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(a, numeric);
            diff_sq += (a - numeric).powi(2);
            a_sq += a * a;
            n_sq += numeric * numeric;
            report.max_absolute_error = report.max_absolute_error.max((a - numeric).abs());
            report.parameters_checked += 1;
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst_parameter = name.clone();
                report.worst_element = e;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
        let denom = a_sq.max(n_sq).sqrt();
        if denom > 0.0 {
            report.max_tensor_relative_error = report.max_tensor_relative_error.max(diff_sq.sqrt() / denom);
        }
    }
    Ok(report)
}

fn set_element(model: &mut ScrcModel<f64>, tensor: usize, element: usize, value: f64) {
    model.params.named_tensors_mut()[tensor].1.value.data_mut()[element] = value;
}

/// Small random model (vocab 12, embed 6, hidden 8, feat 5) with random biases, plus a few
/// random queries and visual inputs.
pub fn tiny_fixture(seed: u64, config: Option<ScrcConfig>) -> (ScrcModel<f64>, Vec<ScoreRequest<f64>>) {
    let cfg = config.unwrap_or_else(|| ScrcConfig::new(12, 6, 8, 5));
    let mut rng = Rng::new(seed);
    let mut model = ScrcModel::<f64>::random(cfg, &mut rng, 0.5).expect("valid tiny config");
    for (name, t) in model.params.named_tensors_mut() {
        if name.ends_with(".b") || name == "bias" {
            let (r, c) = t.value.shape();
            t.value = init_uniform(&mut rng, r, c, 0.5);
        }
    }
    let requests = (0..3)
        .map(|i| {
            let len = 2 + i;
            let query = TokenSequence::new((0..len).map(|_| rng.below(cfg.vocab_size) as u32).collect());
            let x0 = rng.uniform(-1.0, 0.0);
            let y0 = rng.uniform(-1.0, 0.0);
            let x1 = rng.uniform(0.1, 1.0);
            let y1 = rng.uniform(0.1, 1.0);
            ScoreRequest {
                query,
                visual: VisualInput {
                    x_box: (0..cfg.feat_dim).map(|_| rng.uniform(-1.0, 1.0)).collect(),
                    x_context: (0..cfg.feat_dim).map(|_| rng.uniform(-1.0, 1.0)).collect(),
                    x_spatial: SpatialFeature([x0, y0, x1, y1, (x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0]),
                },
            }
        })
        .collect();
    (model, requests)
}
