pub mod bounds;
pub mod classical;
pub mod hierarchy;
pub mod io;
pub mod linalg;
pub mod models;
pub mod qops;
pub mod scenarios;
pub mod sdp;

pub use hierarchy::Operator;

pub type CMatrix = linalg::ComplexMatrix<f64>;
pub type RMatrix = linalg::RealMatrix<f64>;
pub type Complex = linalg::C<f64>;
