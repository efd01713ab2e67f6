pub mod commands;
pub mod config;
pub mod container;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod pipeline;
pub mod recipe;
