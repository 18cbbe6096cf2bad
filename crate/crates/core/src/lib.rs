//! Tree codes, laminar partitions, immediacy codes and rate bounds.

pub mod bounds;
pub mod code;
pub mod constructions;
pub mod entropy;
pub mod error;
pub mod formats;
pub mod partitions;
pub mod rational;
pub mod verify;

pub use error::{Error, Result};
