//! Provider abstractions, mock and HTTP providers, and run orchestration.

pub mod http;
pub mod mock;
pub mod providers;
pub mod run;
