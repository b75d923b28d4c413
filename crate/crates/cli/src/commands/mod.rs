pub mod ablate;
pub mod denoise;
pub mod eval;
pub mod gen_toy;
pub mod train;
