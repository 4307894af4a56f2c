pub mod advisor;
pub mod bt;
pub mod eval;
pub mod log;
pub mod opponent;
pub mod rts;
pub mod session;
pub mod summarizer;
