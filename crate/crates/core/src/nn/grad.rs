use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::{forward_trace, hadamard, map_derivative, MlpParams, Trace};
use crate::error::{Error, Result};

const NORM_FLOOR: f64 = 1e-12;

/// Reverse pass through the forward graph.
///
/// `out_adjoint` is the adjoint of the final activations; `pre_adjoints`
/// injects additional adjoints directly at each layer's pre-activations.
/// Returns parameter gradients and the adjoint of the input batch.
fn backprop(
    params: &MlpParams,
    trace: &Trace,
    out_adjoint: Option<&Array2<f64>>,
    pre_adjoints: Option<&[Array2<f64>]>,
) -> (MlpParams, Array2<f64>) {
    let mut grads = params.zeros_like();
    let n = trace.input.nrows();
    let mut post_adjoint = out_adjoint.cloned();
    for i in (0..params.layers.len()).rev() {
        let layer = &params.layers[i];
        let act = params.spec.activation(i);
        let mut zeta = match post_adjoint.take() {
            Some(adj) => hadamard(&adj, &map_derivative(act, &trace.pre[i])),
            None => Array2::zeros((n, layer.fan_out())),
        };
        if let Some(extra) = pre_adjoints {
            zeta += &extra[i];
        }
        grads.layers[i].weight = zeta.t().dot(&trace.layer_input(i));
        grads.layers[i].bias = zeta.sum_axis(Axis(0));
        post_adjoint = Some(zeta.dot(&layer.weight));
    }
    (grads, post_adjoint.expect("at least one layer"))
}

/// Gradients of a scalar loss with respect to every parameter, given the
/// loss gradient `upstream` with respect to the network outputs.
pub fn param_gradients(
    params: &MlpParams,
    x: ArrayView2<f64>,
    upstream: ArrayView2<f64>,
) -> Result<MlpParams> {
    let trace = forward_trace(params, x)?;
    if upstream.dim() != trace.output().dim() {
        return Err(Error::validation(format!(
            "upstream gradient shape {:?} does not match output shape {:?}",
            upstream.dim(),
            trace.output().dim()
        )));
    }
    Ok(backprop(params, &trace, Some(&upstream.to_owned()), None).0)
}

fn require_scalar(params: &MlpParams) -> Result<()> {
    let out = params.spec.output_dim();
    if out != 1 {
        return Err(Error::contract(format!(
            "input gradient needs a scalar-output network, this one has {out} outputs"
        )));
    }
    Ok(())
}

/// Row `n` holds the gradient of the scalar output at sample `n` with
/// respect to that sample's input.
pub fn input_gradients(params: &MlpParams, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    require_scalar(params)?;
    let trace = forward_trace(params, x)?;
    let ones = Array2::ones((x.nrows(), 1));
    Ok(backprop(params, &trace, Some(&ones), None).1)
}

pub fn input_gradient(params: &MlpParams, x: ArrayView1<f64>) -> Result<Array1<f64>> {
    let batch = x.insert_axis(Axis(0));
    let g = input_gradients(params, batch)?;
    Ok(g.row(0).to_owned())
}

#[derive(Debug, Clone)]
pub struct Penalty {
    /// `lambda * mean_n (||grad_x D(x_n)|| - 1)^2`.
    pub value: f64,
    /// Exact derivative of `value` with respect to the critic parameters.
    pub grads: MlpParams,
    /// Per-sample input-gradient norms.
    pub norms: Vec<f64>,
}

/// Gradient penalty of a scalar critic on a batch, together with its
/// parameter gradient.
///
/// The input gradient is itself a reverse pass; differentiating the penalty
/// runs that pass backwards once more (adjoints of the per-layer backward
/// signals) and then pushes the resulting pre-activation adjoints through an
/// ordinary reverse pass of the forward graph.
pub fn penalty_gradients(critic: &MlpParams, xhat: ArrayView2<f64>, lambda: f64) -> Result<Penalty> {
    require_scalar(critic)?;
    let n = xhat.nrows();
    if n == 0 {
        return Err(Error::validation("gradient penalty needs a non-empty batch"));
    }
    let trace = forward_trace(critic, xhat)?;
    let depth = critic.layers.len();
    let spec = &critic.spec;

    // Backward signals of D: delta[i] = dD/dZ_i, back[i] = dD/d(input of layer i).
    let mut delta: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); depth];
    let mut back: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); depth];
    delta[depth - 1] = map_derivative(spec.activation(depth - 1), &trace.pre[depth - 1]);
    for i in (0..depth).rev() {
        back[i] = delta[i].dot(&critic.layers[i].weight);
        if i > 0 {
            delta[i - 1] = hadamard(&back[i], &map_derivative(spec.activation(i - 1), &trace.pre[i - 1]));
        }
    }

    let gx = &back[0];
    let norms: Vec<f64> = gx
        .outer_iter()
        .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let scale = lambda / n as f64;
    let value = scale * norms.iter().map(|r| (r - 1.0).powi(2)).sum::<f64>();

    // Adjoint of back[0].
    let mut back_bar = gx.clone();
    for (mut row, &r) in back_bar.outer_iter_mut().zip(&norms) {
        row *= scale * 2.0 * (r - 1.0) / r.max(NORM_FLOOR);
    }

    let mut grads = critic.zeros_like();
    let mut pre_bar: Vec<Array2<f64>> = trace.pre.iter().map(|z| Array2::zeros(z.dim())).collect();
    let mut curvature = false;
    for i in 0..depth {
        let w = &critic.layers[i].weight;
        grads.layers[i].weight += &delta[i].t().dot(&back_bar);
        let delta_bar = back_bar.dot(&w.t());
        let act = spec.activation(i);
        let second = trace.pre[i].mapv(|z| act.second_derivative(z));
        if second.iter().any(|&v| v != 0.0) {
            curvature = true;
            let upstream = if i + 1 < depth {
                hadamard(&delta_bar, &back[i + 1])
            } else {
                delta_bar.clone()
            };
            pre_bar[i] += &hadamard(&upstream, &second);
        }
        if i + 1 < depth {
            back_bar = hadamard(&delta_bar, &map_derivative(act, &trace.pre[i]));
        }
    }
    if curvature {
        let (more, _) = backprop(critic, &trace, None, Some(&pre_bar));
        grads.add_assign(&more);
    }

    Ok(Penalty {
        value,
        grads,
        norms,
    })
}
