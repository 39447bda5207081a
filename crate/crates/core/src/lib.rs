pub mod conic;
pub mod distflow;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod misocp;
pub mod render;
pub mod segmentation;
pub mod tracer;
