//! Second-order gradient-boosted trees and the learnable aggregator over their outputs.

mod cnn;
mod ensemble;
mod tree;

pub use cnn::{cnn_train, Cnn, CnnAggregator, CnnArchitecture};
pub use ensemble::{channels_for, margin_log_loss, train_trees, train_trees_traced, GbdtConfig, TreeEnsemble};
pub use tree::{leaf_weight, split_gain, Node, RegressionTree};
