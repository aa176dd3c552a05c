//! Fully connected layer, ReLU and flattening.

use super::gemm::{gemm, MatRef};
use super::Tensor;
use crate::error::{Error, Result};

/// `y = x W^T + b` for `x` of shape `[B, inputs]`, `weights` `[outputs, inputs]`.
pub fn dense_forward(input: &Tensor, weights: &[f64], bias: &[f64]) -> Result<Tensor> {
    let (b, inputs) = input.dims2()?;
    let outputs = bias.len();
    if outputs == 0 || weights.len() != outputs * inputs {
        return Err(Error::invalid(
            "weights",
            format!(
                "expected {outputs}x{inputs} weights for {inputs} inputs, got {}",
                weights.len()
            ),
        ));
    }
    let mut out: Vec<f64> = bias.iter().copied().cycle().take(b * outputs).collect();
    gemm(
        MatRef::row_major(input.data(), b, inputs),
        MatRef::row_major(weights, outputs, inputs).t(),
        1.0,
        &mut out,
    );
    Tensor::new(vec![b, outputs], out)
}

/// Returns `(grad_input, grad_weights, grad_bias)`.
pub fn dense_backward(grad_out: &Tensor, input: &Tensor, weights: &[f64]) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
    let (b, inputs) = input.dims2()?;
    let (gb, outputs) = grad_out.dims2()?;
    if gb != b || weights.len() != outputs * inputs {
        return Err(Error::invalid(
            "grad_out",
            format!(
                "gradient shape {:?} does not match input {:?}",
                grad_out.shape(),
                input.shape()
            ),
        ));
    }
    let g = MatRef::row_major(grad_out.data(), b, outputs);
    let mut grad_weights = vec![0.0; outputs * inputs];
    gemm(
        g.t(),
        MatRef::row_major(input.data(), b, inputs),
        0.0,
        &mut grad_weights,
    );
    let mut grad_bias = vec![0.0; outputs];
    for row in grad_out.data().chunks_exact(outputs) {
        for (acc, v) in grad_bias.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let mut grad_input = vec![0.0; b * inputs];
    gemm(g, MatRef::row_major(weights, outputs, inputs), 0.0, &mut grad_input);
    Ok((Tensor::new(vec![b, inputs], grad_input)?, grad_weights, grad_bias))
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// Passes the gradient where the forward input was strictly positive.
pub fn relu_backward(grad_out: &Tensor, input: &Tensor) -> Result<Tensor> {
    if grad_out.shape() != input.shape() {
        return Err(Error::invalid("grad_out", "shape differs from the ReLU input"));
    }
    let data = grad_out
        .data()
        .iter()
        .zip(input.data())
        .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

/// `[B, ...] -> [B, prod(...)]`.
pub fn flatten(input: Tensor) -> Result<Tensor> {
    let b = input.batch();
    let features = input.len() / b;
    input.reshape(vec![b, features])
}
