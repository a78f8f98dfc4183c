#![no_std]
#![doc = "Allocation-only core of an end-to-end steering and speed control stack."]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod control;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod graph;
mod kernels;
pub mod models;
pub mod optim;
pub mod params;
pub mod rng;
pub mod sim;
pub mod tensor;
pub mod train;

pub use error::{CheckpointError, Error, Result};
pub use graph::{Graph, LstmNodes, NodeId, OpKind};
pub use params::{Param, ParamId, ParamStore};
pub use tensor::Tensor;
#[cfg(any(test, feature = "fault-injection"))]
pub use graph::Fault;
