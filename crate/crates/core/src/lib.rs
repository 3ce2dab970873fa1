pub mod distances;
pub mod fitting;
pub mod geometry;
pub mod io;
pub mod sampling;
pub mod scaling;
pub mod special;
pub mod statistics;
