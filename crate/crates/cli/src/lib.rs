//! Library surface of the command-line front end: model file I/O, report
//! schema, and the subcommand driver (exposed for integration tests).

pub mod app;
pub mod model;
pub mod report;

pub use app::run;
