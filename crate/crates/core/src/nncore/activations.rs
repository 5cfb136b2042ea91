use crate::error::{Result, ScrcError};
use crate::nncore::Scalar;

/// Logistic sigmoid, evaluated so that neither branch overflows.
#[inline]
pub fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

#[inline]
pub fn tanh_act<F: Scalar>(x: F) -> F {
    x.tanh()
}

pub fn sigmoid_vec<F: Scalar>(xs: &[F]) -> Vec<F> {
    xs.iter().map(|&x| sigmoid(x)).collect()
}

pub fn tanh_vec<F: Scalar>(xs: &[F]) -> Vec<F> {
    xs.iter().map(|&x| tanh_act(x)).collect()
}

pub fn softmax<F: Scalar>(logits: &[F]) -> Result<Vec<F>> {
    let max = max_of(logits)?;
    let exps: Vec<F> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: F = exps.iter().copied().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// `log softmax(logits)`, computed without forming the probabilities first.
pub fn log_softmax<F: Scalar>(logits: &[F]) -> Result<Vec<F>> {
    let max = max_of(logits)?;
    let log_total = logits.iter().map(|&l| (l - max).exp()).sum::<F>().ln();
    Ok(logits.iter().map(|&l| l - max - log_total).collect())
}

fn max_of<F: Scalar>(xs: &[F]) -> Result<F> {
    if xs.is_empty() {
        return Err(ScrcError::shape("softmax", "non-empty logits", "empty"));
    }
    Ok(xs.iter().copied().fold(F::neg_infinity(), F::max))
}
