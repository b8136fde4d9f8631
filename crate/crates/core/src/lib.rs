pub mod discretization;
pub mod error;
pub mod flow;
pub mod graph;
pub mod health;
pub mod instance;
pub mod special;
pub mod refine;
pub mod verify;
pub mod gen;
