mod conv;
mod elementwise;
mod linalg;
mod norm;
mod reduce;
mod shape;

pub use elementwise::LEAKY_RELU_SLOPE;
