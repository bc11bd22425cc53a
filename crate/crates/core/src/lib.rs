//! Two-stage question answering over knowledge graphs.

pub mod data;
pub mod executor;
pub mod grounder;
pub mod kg;
pub mod model;
pub mod query;
pub mod tensor;
pub mod text;
pub mod train_eval;
pub mod util;
