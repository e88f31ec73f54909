//! Feed-forward function approximator with hand-rolled reverse-mode
//! gradients, plus the Adam update rule.
//!
//! Everything is `f64`; gradients are checked against central finite
//! differences in the test suite, so keep any numerically creative ideas
//! out of this module.

mod adam;
mod mlp;

pub use adam::{adam_step, AdamState};
pub use mlp::{
    mlp_backward, mlp_forward, mlp_forward_cached, DenseLayer, MlpCache, MlpParams, MlpSpec,
};
