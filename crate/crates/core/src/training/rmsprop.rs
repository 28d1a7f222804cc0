use crate::autograd::ParamStore;
use crate::error::{Error, Result};

/// Per-parameter running averages of squared gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct RmspropState {
    pub accumulators: Vec<Vec<f64>>,
}

impl RmspropState {
    pub fn new(store: &ParamStore) -> Self {
        RmspropState {
            accumulators: store.iter().map(|p| vec![0.0; p.tensor.len()]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rmsprop {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
}

/// `acc ← ρ·acc + (1−ρ)·g²`, `θ ← θ − lr·g / (√acc + ε)`.
pub fn rmsprop_update(
    theta: &mut [f64],
    grad: &[f64],
    acc: &mut [f64],
    opt: &Rmsprop,
) -> Result<()> {
    if theta.len() != grad.len() || theta.len() != acc.len() {
        return Err(Error::shape(
            "rmsprop",
            &[theta.len(), acc.len()],
            &[grad.len()],
        ));
    }
    let Rmsprop {
        learning_rate: lr,
        decay: rho,
        epsilon: eps,
    } = *opt;
    for ((t, &g), a) in theta.iter_mut().zip(grad).zip(acc.iter_mut()) {
        *a = rho * *a + (1.0 - rho) * g * g;
        *t -= lr * g / (a.sqrt() + eps);
    }
    Ok(())
}

/// Applies one step to every parameter using the gradients held in the
/// store. A parameter without a gradient is treated as having a zero one.
pub fn rmsprop_step(store: &mut ParamStore, state: &mut RmspropState, opt: &Rmsprop) -> Result<()> {
    if state.accumulators.len() != store.len() {
        return Err(Error::LengthMismatch {
            left: state.accumulators.len(),
            right: store.len(),
        });
    }
    for (p, acc) in store.iter_mut().zip(&mut state.accumulators) {
        let grad = p.tensor.grad.take();
        match &grad {
            Some(g) => rmsprop_update(p.tensor.values_mut(), g, acc, opt)?,
            None => acc.iter_mut().for_each(|a| *a *= opt.decay),
        }
        p.tensor.grad = grad;
    }
    Ok(())
}
