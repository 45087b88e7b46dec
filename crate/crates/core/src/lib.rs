//! Local capacity of wireless ad hoc networks.
//!
//! The local capacity is the average number of transmitters a randomly
//! placed receiver can decode in one slot, `c = lambda * sigma`, where
//! `sigma` is the mean area over which a transmitter's SIR stays above the
//! threshold. The crate computes it for regular grids, node coloring, CSMA
//! and slotted ALOHA.

// `!(x > 0.0)` is how parameter checks reject NaN along with bad values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aloha;
pub mod contour;
pub mod engine;
pub mod error;
pub mod model;
pub mod process;

pub use error::{Error, Result};
pub use model::{ChannelParams, Point2D, Region, TransmitterSet};
