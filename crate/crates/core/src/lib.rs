#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Online Frank-Wolfe methods under delayed feedback, centralized and
//! decentralized over a gossip network.

pub mod baselines;
pub mod config;
pub mod de2mfw;
pub mod delay;
pub mod delmfw;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod oracle;
pub mod seed;
pub mod selftest;

pub use baselines::{dgd_run, dofw_run, Dgd, Dofw};
pub use config::ExperimentConfig;
pub use de2mfw::{de2mfw_run, de2mfw_run_with_diagnostics, De2mfw, De2mfwParams, Diagnostics, EmptyFeedbackPolicy};
pub use delay::{AgentSchedules, DelaySchedule, FeedbackBuffer};
pub use delmfw::{delmfw_run, meta_fw_run, AlgoParams, Delmfw, InitPolicy, RunOptions};
pub use error::{Error, Result};
pub use geometry::{ConstraintSet, SetKind};
pub use losses::{LossConstants, LossFunction, LossStream, Sample};
pub use metrics::{Comparator, RunTrace};
pub use network::{GossipMatrix, Topology, TopologyKind};
pub use oracle::{FtplOracle, OnlineLinearOracle};
