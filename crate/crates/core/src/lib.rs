//! Maximin Hamming designs and Gaussian-process surrogates for black-box
//! optimization over unordered categorical lattices.

pub mod acquisition;
pub mod bench;
pub mod bounds;
pub mod encoding;
pub mod error;
pub mod gp;
pub mod maximin;
pub mod seeding;
pub mod sequential;
pub mod simulators;

pub use acquisition::{AcquisitionKind, AcquisitionSpec};
pub use encoding::{Design, Point};
pub use error::{Error, Result};
pub use gp::GpModel;
