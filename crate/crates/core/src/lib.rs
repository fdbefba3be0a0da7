pub mod isa;
pub mod analysis;
pub mod predictor;
pub mod attacks;
pub mod policies;
pub mod pipeline;
pub mod suite;
pub mod cli;
