//! Federated isolation forest for univariate sensor telemetry.
//!
//! Clients never share raw readings. Each tree is grown one node per round:
//! every client proposes a split value from its private partition, the server
//! averages the proposals, and the averaged split is broadcast back so every
//! client extends its local copy of the tree. A sequential isolation forest
//! is included as the reference baseline.
//!
//! Modules:
//! - [`iforest`]: tree/forest model, anomaly scoring, sequential baseline, model files
//! - [`protocol`]: the centralized round contract and the federated builders
//! - [`transport`]: loopback and TCP backends carrying round frames
//! - [`eval`]: synthetic data, ROC/PR metrics and the experiment harness

pub mod eval;
pub mod iforest;
pub mod meter;
pub mod protocol;
pub mod seed;
pub mod transport;

pub use iforest::{anomaly_score, c_factor, classify, Builder, Forest, Label, Score, Tree, TreeNode};
pub use protocol::{run_loopback, ClientSpec, FederatedConfig, Phase, RoundMessage};

