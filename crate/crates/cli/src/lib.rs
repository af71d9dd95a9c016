pub mod formats;
pub mod harness;
