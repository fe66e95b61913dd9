pub mod bvp;
pub mod config;
pub mod experiments;
pub mod expr;
pub mod fem;
pub mod manufactured;
pub mod mesh;
pub mod nstokes;
pub mod potentials;
pub mod quadrature;
pub mod report;
pub mod saddle;
pub mod sparse;
pub mod tensor;
