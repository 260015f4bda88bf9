//! GIN classifier with a virtual node, mean-pool readout and a linear head,
//! plus the loss and the ranking metric used for model selection.

mod batch;
mod classifier;
mod layers;
mod metrics;

pub use batch::GraphBatch;
pub use classifier::{bce_loss, Classifier, ModelConfig};
pub use layers::{gin_layer, mean_pool, virtual_node_pass, GinEps, Mlp};
pub use metrics::roc_auc;
