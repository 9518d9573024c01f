//! Anytime decentralized coordination of traffic signals.
//!
//! Intersections are agents choosing one of four phases per period. The
//! one-step lookahead of the queue dynamics turns the network balance index
//! into a pairwise-decomposable cost over a coordination graph, which
//! [`nl_coor`] solves by min-sum message passing along a minimum-diameter
//! DAG and [`loc_iai`] refines by local best responses.

pub mod baselines;
pub mod coord_graph;
pub mod dag;
pub mod error;
pub mod harness;
pub mod loc_iai;
pub mod network;
pub mod nl_coor;
pub mod sim;

pub use coord_graph::{build_cg, global_cost, CoordinationGraph, JointAssignment};
pub use error::{Error, Result};
pub use network::{build_grid, load_network, LinkKind, Phase, RoadNetwork};
pub use sim::{balance_index, predict_next_queues, QueueState, Scope, SimConfig, Simulator, TurningModel};
