use super::{EncoderError, EncoderParams, Encoding};
use crate::tensor::{dot, Matrix};

/// Denominator floor of [`relative_error`]. Gradients whose true magnitude
/// is below it are compared on an absolute scale instead.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADCHECK_FLOOR)
}

/// Result of comparing one tensor's analytic gradient with central
/// differences.
#[derive(Clone, Debug)]
pub struct TensorCheck {
    pub name: String,
    pub max_relative_error: f64,
    pub max_abs_gradient: f64,
}

/// Input of the encoder under test.
pub enum CheckInput<'a> {
    Tokens(&'a [usize]),
    Records(&'a Matrix),
}

fn run(params: &EncoderParams, input: &CheckInput) -> Result<Encoding, EncoderError> {
    match input {
        CheckInput::Tokens(ids) => params.forward_tokens(ids),
        CheckInput::Records(r) => params.forward_records(r),
    }
}

/// Checks every parameter of `params` for the scalar loss
/// `dot(upstream, pooled)` by central differences with step `eps`.
pub fn gradient_check(
    params: &EncoderParams,
    input: CheckInput,
    upstream: &[f64],
    eps: f64,
) -> Result<Vec<TensorCheck>, EncoderError> {
    let enc = run(params, &input)?;
    let mut grads = params.zeros_like();
    params.backward(&enc, upstream, &mut grads)?;
    let analytic: Vec<(String, Matrix)> =
        grads.named_tensors().into_iter().map(|(n, t)| (n, t.clone())).collect();

    let mut probe = params.clone();
    let mut out = Vec::with_capacity(analytic.len());
    for (ti, (name, g)) in analytic.iter().enumerate() {
        let mut worst = 0.0f64;
        for e in 0..g.len() {
            let original = probe.tensors_mut()[ti].data[e];
            probe.tensors_mut()[ti].data[e] = original + eps;
            let plus = dot(upstream, &run(&probe, &input)?.pooled);
            probe.tensors_mut()[ti].data[e] = original - eps;
            let minus = dot(upstream, &run(&probe, &input)?.pooled);
            probe.tensors_mut()[ti].data[e] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(g.data[e], numeric));
        }
        out.push(TensorCheck {
            name: name.clone(),
            max_relative_error: worst,
            max_abs_gradient: g.max_abs(),
        });
    }
    Ok(out)
}
