//! Grid fault simulation and detection at desk scale: transient simulation of
//! the New England 39-bus system, windowed node-feature graph construction,
//! a masked graph neural network trained to flag the bus-15 fault state, and
//! cosine-similarity analysis of how the disturbance spreads across nodes.

pub mod correlation;
pub mod dynamics;
pub mod error;
pub mod features;
pub mod gnn;
pub mod pretrain;
pub mod topology;

pub use error::{Error, Result};
pub use topology::{
    build_adjacency, edge_to_node_transform, hop_distance, AdjacencyMatrix, BranchRecord,
    BusKind, BusRecord, EdgeNodeGraph, GeneratorRecord, GridCase, DEFAULT_FAULT_BUS,
    NE39_BUSES, NE39_GENERATORS,
};
