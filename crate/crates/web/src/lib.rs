//! Browser demo for the commander.
//!
//! [`view`] is the thin client: a view model rebuilt from wire frames.
//! [`demo`] runs a local session behind the same frames so the page works
//! without a server. [`bindings`] exposes both to JavaScript.

pub mod bindings;
pub mod demo;
pub mod view;

pub use demo::Demo;
pub use view::{Connection, Entry, Verb, ViewModel};
