//! Fully-connected networks with reverse-mode parameter gradients,
//! forward-mode input tangents and the Adam update.

mod adam;
mod mlp;
mod model;

pub use adam::{adam_step, AdamState};
pub use mlp::{Activation, ForwardCache, MlpParams};
pub use model::{Affine, Model, ModelPass};
