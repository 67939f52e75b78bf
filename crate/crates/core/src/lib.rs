pub mod autodiff;
pub mod checkpoint;
pub mod cli;
pub mod eval;
pub mod eventlog;
pub mod infer;
pub mod nn;
pub mod pipeline;
pub mod train;
