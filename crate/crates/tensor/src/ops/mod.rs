mod conv;
mod elementwise;
mod norm;
mod reduce;
mod spatial;

pub use spatial::PadMode;
