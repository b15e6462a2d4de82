pub mod error;
pub mod experiments;
pub mod gibbs;
pub mod glm;
pub mod io;
pub mod math;
pub mod metrics;
pub mod model;
pub mod pg;
pub mod postproc;
pub mod rng;

pub use error::{Error, Result};
