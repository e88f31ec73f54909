use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::mlp::{MlpParams, MlpSpec};

/// Adam optimizer state for one parameter set.
///
/// First/second-moment accumulators share the parameter shape; `step`
/// increases by one per [`adam_step`] and drives the bias correction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: MlpParams,
    v: MlpParams,
}

impl AdamState {
    pub fn new(spec: &MlpSpec, learning_rate: f64) -> Result<Self> {
        Ok(AdamState {
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: MlpParams::zeros(spec)?,
            v: MlpParams::zeros(spec)?,
        })
    }
}

/// Standard Adam update with bias correction, in place.
pub fn adam_step(state: &mut AdamState, params: &mut MlpParams, grads: &MlpParams) -> Result<()> {
    if params.num_params() != grads.num_params() {
        return Err(Error::Shape("params/grads size mismatch".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);

    let it = params
        .iter_mut_flat()
        .zip(grads.iter_flat())
        .zip(state.m.iter_mut_flat().zip(state.v.iter_mut_flat()));
    for ((p, &g), (m, v)) in it {
        *m = state.beta1 * *m + (1.0 - state.beta1) * g;
        *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}
