//! Central finite-difference verification of [`PolicyNet::backward`].

use super::{OutputGrad, PolicyNet, PolicyOutput, Result};

/// A scalar loss of the network outputs with its analytic output gradient.
pub trait OutputLoss {
    fn loss(&self, out: &PolicyOutput) -> f64;
    fn grad(&self, out: &PolicyOutput) -> OutputGrad;
}

/// Step used by [`grad_check`].
pub const FD_STEP: f64 = 1e-5;

pub fn numeric_gradient<F>(net: &PolicyNet, features: &[f64], loss: F, eps: f64) -> Result<Vec<f64>>
where
    F: Fn(&PolicyOutput) -> f64,
{
    let mut probe = net.clone();
    let mut grad = Vec::with_capacity(net.n_params());
    for i in 0..net.n_params() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + eps;
        let up = loss(&probe.forward(features)?);
        probe.params_mut()[i] = orig - eps;
        let down = loss(&probe.forward(features)?);
        probe.params_mut()[i] = orig;
        grad.push((up - down) / (2.0 * eps));
    }
    Ok(grad)
}

/// `max_i |a_i - n_i| / max(1e-8, |a_i| + |n_i|)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / (a.abs() + n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

pub fn grad_check<L: OutputLoss>(net: &PolicyNet, features: &[f64], loss: &L) -> Result<f64> {
    let out = net.forward(features)?;
    let analytic = net.backward(features, &loss.grad(&out))?;
    let numeric = numeric_gradient(net, features, |o| loss.loss(o), FD_STEP)?;
    Ok(max_relative_error(&analytic, &numeric))
}
