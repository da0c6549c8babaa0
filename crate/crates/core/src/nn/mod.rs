//! Dense multilayer perceptron with exact first and second derivatives.

mod batch;
mod mlp;
mod params;

pub use batch::LabeledBatch;
pub use mlp::{
    cross_entropy, forward, hessian_vector_product, hessian_vector_product_fd, loss,
    loss_gradient, Logits, PROB_FLOOR,
};
pub use params::{
    glorot_bound, init_parameters, Activation, LayerMut, LayerRef, MlpArchitecture,
    MlpParameters, DEFAULT_HIDDEN_WIDTHS,
};
