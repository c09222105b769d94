//! ICP: a nonparametric prior over DAGs whose nodes carry
//! continuous order values, with exact density evaluation, a generative
//! sampler, reversible-jump MCMC and a sigmoid belief network likelihood.

pub mod chain;
pub mod convnet;
pub mod distribution;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod hyperparams;
pub mod mcmc;
pub mod nlgbn;
pub mod prior;
pub mod rng;
pub mod special;

pub use error::{IcpError, Result};
pub use graph::{
    active_set, count_stats, ActiveNode, CountStats, GraphRecord, Node, NodeId, NodeKind,
    OrderedDag, SortedOrders,
};
pub use hyperparams::Hyperparams;
pub use rng::RngStream;
