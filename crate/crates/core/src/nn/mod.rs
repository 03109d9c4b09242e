//! Feed-forward and convolutional networks with a scalar output, exact
//! parameter gradients and mini-batch SGD.

mod arch;
mod checkpoint;
mod network;
mod train;

pub use arch::{
    ArchitectureId, Family, LayerSpec, Padding, DEFAULT_CONV_HEAD, FULLY_CONNECTED_DEPTH,
    FULLY_CONNECTED_WIDTH, KERNEL_SIZE, SUM_NET_WIDTH,
};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub(crate) use checkpoint::Cursor;
pub use network::{build_network, Activations, Network};
pub use train::{mean_loss, sigmoid, train_sgd, Loss, TrainConfig};
