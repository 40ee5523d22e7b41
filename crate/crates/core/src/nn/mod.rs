//! The variational autoencoder: a strided 1-D convolutional encoder, two
//! affine latent heads (mean and log-variance), reparameterized Gaussian
//! sampling, and a transposed-convolution decoder, with a hand-written
//! backward pass.

mod kernels;
mod tensor;
mod vae;

pub use kernels::{conv1d, conv1d_input_grad, conv1d_weight_grad, ConvGeometry};
pub use tensor::{BatchTensor, Tensor};
pub use vae::{
    backward, decode, encode, forward, init_params, sample_latent, Activation, ArchSpec, ForwardCache, ForwardOutput,
    Gradients, LatentCode, VaeParams, LEAKY_SLOPE,
};
