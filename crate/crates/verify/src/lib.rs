pub mod commands;
pub mod config;
pub mod paths;
pub mod report;
pub mod suites;
