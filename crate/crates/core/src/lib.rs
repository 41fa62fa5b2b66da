pub mod encoder;
pub mod formula;
pub mod harness;
pub mod model;
pub mod trainer;
pub mod variational;
