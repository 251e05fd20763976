pub mod error;
pub mod gramians;
pub mod io;
pub mod linalg;
pub mod lowrank;
pub mod model;
pub mod quad;
pub mod reduction;
pub mod sim;
pub mod sparse;
