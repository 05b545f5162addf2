pub mod ablate;
pub mod confidence;
pub mod eval;
pub mod noise;
pub mod synth;
pub mod taxonomy;
pub mod train;
