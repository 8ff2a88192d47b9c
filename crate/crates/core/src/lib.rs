pub mod accounting;
pub mod bfgs;
pub mod chinchilla;
pub mod error;
pub mod optimizer;
pub mod planfile;
pub mod records;
pub mod regression;
pub mod report;
pub mod stats;

pub use error::PlannerError;
