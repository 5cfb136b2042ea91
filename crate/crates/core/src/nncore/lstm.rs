//! LSTM unit with exact analytic gradients.
//!
//! Gates: `i, f, o = σ(W_x x + W_h h_prev + b)`, `g = tanh(W_x x + W_h h_prev + b)`.
//! Recurrence: `c = f ⊙ c_prev + i ⊙ g`, `h = o ⊙ tanh(c)`.

use crate::error::{Result, ScrcError};
use crate::nncore::activations::{sigmoid, tanh_act};
use crate::nncore::{init_uniform, ParamTensor, Rng, Scalar};

/// Weights feeding one gate.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams<F> {
    /// hidden × input_dim
    pub input_weights: ParamTensor<F>,
    /// hidden × hidden
    pub recurrent_weights: ParamTensor<F>,
    /// hidden × 1
    pub bias: ParamTensor<F>,
}

impl<F: Scalar> GateParams<F> {
    fn zeros(hidden: usize, input_dim: usize) -> Self {
        GateParams {
            input_weights: ParamTensor::zeros(hidden, input_dim),
            recurrent_weights: ParamTensor::zeros(hidden, hidden),
            bias: ParamTensor::zeros(hidden, 1),
        }
    }

    fn random(rng: &mut Rng, hidden: usize, input_dim: usize, radius: f64) -> Self {
        GateParams {
            input_weights: ParamTensor::new(init_uniform(rng, hidden, input_dim, radius)),
            recurrent_weights: ParamTensor::new(init_uniform(rng, hidden, hidden, radius)),
            bias: ParamTensor::zeros(hidden, 1),
        }
    }

    /// `W_x x + W_h h + b`
    fn preactivation(&self, x: &[F], h: &[F]) -> Result<Vec<F>> {
        let mut out = self.bias.value.data().to_vec();
        self.input_weights.value.matvec_acc(x, &mut out)?;
        self.recurrent_weights.value.matvec_acc(h, &mut out)?;
        Ok(out)
    }

    fn accumulate(&mut self, da: &[F], x: &[F], h_prev: &[F]) -> Result<()> {
        self.input_weights.grad.add_outer(da, x, F::one())?;
        self.recurrent_weights.grad.add_outer(da, h_prev, F::one())?;
        for (g, &d) in self.bias.grad.data_mut().iter_mut().zip(da) {
            *g = *g + d;
        }
        Ok(())
    }

    fn tensors_mut(&mut self) -> [(&'static str, &mut ParamTensor<F>); 3] {
        [
            ("w_x", &mut self.input_weights),
            ("w_h", &mut self.recurrent_weights),
            ("b", &mut self.bias),
        ]
    }

    fn tensors(&self) -> [(&'static str, &ParamTensor<F>); 3] {
        [
            ("w_x", &self.input_weights),
            ("w_h", &self.recurrent_weights),
            ("b", &self.bias),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<F> {
    pub input_gate: GateParams<F>,
    pub forget_gate: GateParams<F>,
    pub output_gate: GateParams<F>,
    pub cell_gate: GateParams<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<F> {
    pub h: Vec<F>,
    pub c: Vec<F>,
}

impl<F: Scalar> LstmState<F> {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![F::zero(); hidden],
            c: vec![F::zero(); hidden],
        }
    }
}

/// Forward intermediates of one step, consumed by [`LstmParams::step_backward`].
#[derive(Debug, Clone)]
pub struct StepCache<F> {
    pub x: Vec<F>,
    pub h_prev: Vec<F>,
    pub c_prev: Vec<F>,
    pub i: Vec<F>,
    pub f: Vec<F>,
    pub o: Vec<F>,
    pub g: Vec<F>,
    pub c: Vec<F>,
    pub tanh_c: Vec<F>,
}

/// Gradients flowing out of one step.
#[derive(Debug, Clone)]
pub struct StepGrads<F> {
    pub dx: Vec<F>,
    pub dh_prev: Vec<F>,
    pub dc_prev: Vec<F>,
}

const GATE_NAMES: [&str; 4] = ["input_gate", "forget_gate", "output_gate", "cell_gate"];

impl<F: Scalar> LstmParams<F> {
    pub fn zeros(hidden: usize, input_dim: usize) -> Self {
        LstmParams {
            input_gate: GateParams::zeros(hidden, input_dim),
            forget_gate: GateParams::zeros(hidden, input_dim),
            output_gate: GateParams::zeros(hidden, input_dim),
            cell_gate: GateParams::zeros(hidden, input_dim),
        }
    }

    /// Uniform(−radius, radius) weights, zero biases.
    pub fn random(rng: &mut Rng, hidden: usize, input_dim: usize, radius: f64) -> Self {
        LstmParams {
            input_gate: GateParams::random(rng, hidden, input_dim, radius),
            forget_gate: GateParams::random(rng, hidden, input_dim, radius),
            output_gate: GateParams::random(rng, hidden, input_dim, radius),
            cell_gate: GateParams::random(rng, hidden, input_dim, radius),
        }
    }

    pub fn hidden(&self) -> usize {
        self.input_gate.recurrent_weights.value.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.input_gate.input_weights.value.cols()
    }

    pub fn gates(&self) -> [&GateParams<F>; 4] {
        [&self.input_gate, &self.forget_gate, &self.output_gate, &self.cell_gate]
    }

    pub fn gates_mut(&mut self) -> [&mut GateParams<F>; 4] {
        [
            &mut self.input_gate,
            &mut self.forget_gate,
            &mut self.output_gate,
            &mut self.cell_gate,
        ]
    }

    /// Checks that every gate agrees on hidden and input dimensions.
    pub fn validate(&self) -> Result<()> {
        let (hidden, input_dim) = (self.hidden(), self.input_dim());
        for (name, gate) in GATE_NAMES.iter().zip(self.gates()) {
            let ok = gate.input_weights.shape() == (hidden, input_dim)
                && gate.recurrent_weights.shape() == (hidden, hidden)
                && gate.bias.shape() == (hidden, 1);
            if !ok {
                return Err(ScrcError::shape(
                    "LstmParams::validate",
                    format!("hidden {hidden}, input {input_dim}"),
                    format!(
                        "{name}: w_x {:?}, w_h {:?}, b {:?}",
                        gate.input_weights.shape(),
                        gate.recurrent_weights.shape(),
                        gate.bias.shape()
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn step(&self, x: &[F], prev: &LstmState<F>) -> Result<(LstmState<F>, StepCache<F>)> {
        let hidden = self.hidden();
        if x.len() != self.input_dim() {
            return Err(ScrcError::shape("lstm_step input", self.input_dim(), x.len()));
        }
        if prev.h.len() != hidden || prev.c.len() != hidden {
            return Err(ScrcError::shape(
                "lstm_step state",
                hidden,
                format!("h {}, c {}", prev.h.len(), prev.c.len()),
            ));
        }

        let i: Vec<F> = self
            .input_gate
            .preactivation(x, &prev.h)?
            .into_iter()
            .map(sigmoid)
            .collect();
        let f: Vec<F> = self
            .forget_gate
            .preactivation(x, &prev.h)?
            .into_iter()
            .map(sigmoid)
            .collect();
        let o: Vec<F> = self
            .output_gate
            .preactivation(x, &prev.h)?
            .into_iter()
            .map(sigmoid)
            .collect();
        let g: Vec<F> = self
            .cell_gate
            .preactivation(x, &prev.h)?
            .into_iter()
            .map(tanh_act)
            .collect();

        let c: Vec<F> = (0..hidden).map(|k| f[k] * prev.c[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<F> = c.iter().map(|&v| tanh_act(v)).collect();
        let h: Vec<F> = o.iter().zip(&tanh_c).map(|(&o, &t)| o * t).collect();

        let state = LstmState { h, c: c.clone() };
        let cache = StepCache {
            x: x.to_vec(),
            h_prev: prev.h.clone(),
            c_prev: prev.c.clone(),
            i,
            f,
            o,
            g,
            c,
            tanh_c,
        };
        Ok((state, cache))
    }

    /// Backpropagates `dh`, `dc` (gradients w.r.t. this step's outputs) through one step,
    /// accumulating parameter gradients into `grad` fields.
    pub fn step_backward(&mut self, cache: &StepCache<F>, dh: &[F], dc: &[F]) -> Result<StepGrads<F>> {
        let hidden = self.hidden();
        let cache_ok = cache.x.len() == self.input_dim()
            && [
                &cache.h_prev,
                &cache.c_prev,
                &cache.i,
                &cache.f,
                &cache.o,
                &cache.g,
                &cache.c,
                &cache.tanh_c,
            ]
            .iter()
            .all(|v| v.len() == hidden);
        if !cache_ok {
            return Err(ScrcError::Contract(format!(
                "step cache (input {}, hidden {}) does not match LSTM (input {}, hidden {hidden})",
                cache.x.len(),
                cache.h_prev.len(),
                self.input_dim()
            )));
        }
        if dh.len() != hidden || dc.len() != hidden {
            return Err(ScrcError::Contract(format!(
                "upstream gradients have lengths {}/{}, expected {hidden}",
                dh.len(),
                dc.len()
            )));
        }

        let one = F::one();
        let mut da_i = vec![F::zero(); hidden];
        let mut da_f = vec![F::zero(); hidden];
        let mut da_o = vec![F::zero(); hidden];
        let mut da_g = vec![F::zero(); hidden];
        let mut dc_prev = vec![F::zero(); hidden];
        for k in 0..hidden {
            let (i, f, o, g, t) = (cache.i[k], cache.f[k], cache.o[k], cache.g[k], cache.tanh_c[k]);
            let dc_total = dc[k] + dh[k] * o * (one - t * t);
            da_o[k] = dh[k] * t * o * (one - o);
            da_i[k] = dc_total * g * i * (one - i);
            da_f[k] = dc_total * cache.c_prev[k] * f * (one - f);
            da_g[k] = dc_total * i * (one - g * g);
            dc_prev[k] = dc_total * f;
        }

        let mut dx = vec![F::zero(); cache.x.len()];
        let mut dh_prev = vec![F::zero(); hidden];
        for (gate, da) in self.gates_mut().into_iter().zip([&da_i, &da_f, &da_o, &da_g]) {
            gate.accumulate(da, &cache.x, &cache.h_prev)?;
            gate.input_weights.value.matvec_t_acc(da, &mut dx)?;
            gate.recurrent_weights.value.matvec_t_acc(da, &mut dh_prev)?;
        }
        Ok(StepGrads { dx, dh_prev, dc_prev })
    }

    pub fn named_tensors_mut(&mut self, prefix: &str) -> Vec<(String, &mut ParamTensor<F>)> {
        let mut out = Vec::with_capacity(12);
        for (gate_name, gate) in GATE_NAMES.iter().zip(self.gates_mut()) {
            for (name, tensor) in gate.tensors_mut() {
                out.push((format!("{prefix}.{gate_name}.{name}"), tensor));
            }
        }
        out
    }

    pub fn named_tensors(&self, prefix: &str) -> Vec<(String, &ParamTensor<F>)> {
        let mut out = Vec::with_capacity(12);
        for (gate_name, gate) in GATE_NAMES.iter().zip(self.gates()) {
            for (name, tensor) in gate.tensors() {
                out.push((format!("{prefix}.{gate_name}.{name}"), tensor));
            }
        }
        out
    }

    pub fn cast<G: Scalar>(&self) -> LstmParams<G> {
        let cast_gate = |g: &GateParams<F>| GateParams {
            input_weights: g.input_weights.cast(),
            recurrent_weights: g.recurrent_weights.cast(),
            bias: g.bias.cast(),
        };
        LstmParams {
            input_gate: cast_gate(&self.input_gate),
            forget_gate: cast_gate(&self.forget_gate),
            output_gate: cast_gate(&self.output_gate),
            cell_gate: cast_gate(&self.cell_gate),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_params(seed: u64, hidden: usize, input: usize) -> LstmParams<f64> {
        let mut rng = Rng::new(seed);
        let mut p = LstmParams::random(&mut rng, hidden, input, 0.5);
        for gate in p.gates_mut() {
            gate.bias.value = init_uniform(&mut rng, hidden, 1, 0.5);
        }
        p
    }

    #[test]
    fn zero_everything_gives_zero_state() {
        let p = LstmParams::<f64>::zeros(4, 3);
        let (s, _) = p.step(&[0.0; 3], &LstmState::zeros(4)).unwrap();
        assert!(s.h.iter().all(|&v| v == 0.0));
        assert!(s.c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_cell_bias() {
        let mut p = LstmParams::<f64>::zeros(3, 2);
        p.cell_gate.bias.value.fill(20.0);
        let (s, cache) = p.step(&[0.0; 2], &LstmState::zeros(3)).unwrap();
        for k in 0..3 {
            assert_eq!(cache.i[k], 0.5);
            assert!((cache.g[k] - 1.0).abs() < 1e-15);
            assert!((s.c[k] - 0.5).abs() < 1e-15);
            assert!((s.h[k] - 0.5 * 0.5f64.tanh()).abs() < 1e-12);
            assert!((s.h[k] - 0.23106).abs() < 1e-5);
        }
    }

    #[test]
    fn closed_forget_gate_keeps_only_new_content() {
        let mut p = random_params(3, 4, 3);
        for gate in p.gates_mut() {
            gate.input_weights.value.fill(0.0);
            gate.recurrent_weights.value.fill(0.0);
        }
        p.forget_gate.bias.value.fill(-20.0);
        let prev = LstmState {
            h: vec![0.0; 4],
            c: vec![0.0; 4],
        };
        let (s, cache) = p.step(&[0.3, -1.0, 2.0], &prev).unwrap();
        for k in 0..4 {
            assert!((s.c[k] - cache.i[k] * cache.g[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn shape_errors() {
        let p = LstmParams::<f64>::zeros(4, 3);
        assert!(p.step(&[0.0; 2], &LstmState::zeros(4)).is_err());
        assert!(p.step(&[0.0; 3], &LstmState::zeros(5)).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut p = random_params(5, 4, 3);
        let (_, cache) = p.step(&[0.1, 0.2, -0.3], &LstmState::zeros(4)).unwrap();
        let g = p.step_backward(&cache, &[0.0; 4], &[0.0; 4]).unwrap();
        assert!(g.dx.iter().chain(&g.dh_prev).chain(&g.dc_prev).all(|&v| v == 0.0));
        for (_, t) in p.named_tensors("l") {
            assert!(t.grad.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn mismatched_cache_is_contract_error() {
        let small = random_params(5, 4, 3);
        let mut big = random_params(5, 5, 3);
        let (_, cache) = small.step(&[0.1, 0.2, -0.3], &LstmState::zeros(4)).unwrap();
        assert!(matches!(
            big.step_backward(&cache, &[0.0; 5], &[0.0; 5]),
            Err(ScrcError::Contract(_))
        ));
    }

    /// Loss = Σ wh·h_T + Σ wc·c_T after running `xs` from `init`.
    fn run_loss(p: &LstmParams<f64>, xs: &[Vec<f64>], init: &LstmState<f64>, wh: &[f64], wc: &[f64]) -> f64 {
        let mut s = init.clone();
        for x in xs {
            s = p.step(x, &s).unwrap().0;
        }
        s.h.iter().zip(wh).map(|(a, b)| a * b).sum::<f64>() + s.c.iter().zip(wc).map(|(a, b)| a * b).sum::<f64>()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    fn check_bptt(steps: usize, tol: f64) {
        let (hidden, input) = (4, 3);
        let mut rng = Rng::new(11 + steps as u64);
        let p = random_params(17 + steps as u64, hidden, input);
        let xs: Vec<Vec<f64>> = (0..steps)
            .map(|_| (0..input).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect();
        let init = LstmState {
            h: (0..hidden).map(|_| rng.uniform(-0.5, 0.5)).collect(),
            c: (0..hidden).map(|_| rng.uniform(-0.5, 0.5)).collect(),
        };
        let wh: Vec<f64> = (0..hidden).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let wc: Vec<f64> = (0..hidden).map(|_| rng.uniform(-1.0, 1.0)).collect();

        // analytic
        let mut analytic = p.clone();
        let mut caches = Vec::new();
        let mut s = init.clone();
        for x in &xs {
            let (next, cache) = analytic.step(x, &s).unwrap();
            caches.push(cache);
            s = next;
        }
        let (mut dh, mut dc) = (wh.clone(), wc.clone());
        let mut dxs = vec![Vec::new(); steps];
        for (t, cache) in caches.iter().enumerate().rev() {
            let g = analytic.step_backward(cache, &dh, &dc).unwrap();
            dxs[t] = g.dx;
            dh = g.dh_prev;
            dc = g.dc_prev;
        }

        let eps = 1e-5;
        let mut max_err: f64 = 0.0;
        let mut probe = p.clone();
        let analytic_grads: Vec<Vec<f64>> = analytic
            .named_tensors("l")
            .into_iter()
            .map(|(_, t)| t.grad.data().to_vec())
            .collect();
        for (ti, grads) in analytic_grads.iter().enumerate() {
            for (e, &analytic_grad) in grads.iter().enumerate() {
                let orig = probe.named_tensors_mut("l")[ti].1.value.data()[e];
                probe.named_tensors_mut("l")[ti].1.value.data_mut()[e] = orig + eps;
                let plus = run_loss(&probe, &xs, &init, &wh, &wc);
                probe.named_tensors_mut("l")[ti].1.value.data_mut()[e] = orig - eps;
                let minus = run_loss(&probe, &xs, &init, &wh, &wc);
                probe.named_tensors_mut("l")[ti].1.value.data_mut()[e] = orig;
                let numeric = (plus - minus) / (2.0 * eps);
                max_err = max_err.max(rel_err(analytic_grad, numeric));
            }
        }
        // input gradients of the first step
        for j in 0..input {
            let mut xp = xs.clone();
            xp[0][j] += eps;
            let plus = run_loss(&p, &xp, &init, &wh, &wc);
            xp[0][j] -= 2.0 * eps;
            let minus = run_loss(&p, &xp, &init, &wh, &wc);
            max_err = max_err.max(rel_err(dxs[0][j], (plus - minus) / (2.0 * eps)));
        }
        // initial state gradients
        for k in 0..hidden {
            let mut ip = init.clone();
            ip.h[k] += eps;
            let plus = run_loss(&p, &xs, &ip, &wh, &wc);
            ip.h[k] -= 2.0 * eps;
            let minus = run_loss(&p, &xs, &ip, &wh, &wc);
            max_err = max_err.max(rel_err(dh[k], (plus - minus) / (2.0 * eps)));
            let mut ic = init.clone();
            ic.c[k] += eps;
            let plus = run_loss(&p, &xs, &ic, &wh, &wc);
            ic.c[k] -= 2.0 * eps;
            let minus = run_loss(&p, &xs, &ic, &wh, &wc);
            max_err = max_err.max(rel_err(dc[k], (plus - minus) / (2.0 * eps)));
        }
        assert!(max_err < tol, "{steps}-step max relative error {max_err:e}");
    }

    #[test]
    fn single_step_matches_finite_differences() {
        check_bptt(1, 1e-7);
    }

    #[test]
    fn two_step_bptt_matches_finite_differences() {
        check_bptt(2, 1e-6);
    }
}
