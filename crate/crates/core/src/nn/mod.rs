//! Dense neural-network substrate: tensors, layers, a minibatch SGD trainer
//! and a binary weight format.

pub(crate) mod io;
mod layer;
mod tensor;
mod train;

pub use io::{
    decode_network, encode_network, load_weights, save_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION,
};
pub use layer::{Activation, DenseLayer, Network};
pub use tensor::Tensor;
pub use train::{accuracy, cross_entropy, train_sgd, LabeledDataset, TrainConfig};

/// Index of the largest entry. Ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
