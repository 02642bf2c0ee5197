pub mod cache;
pub mod compare;
pub mod criterion;
pub mod digest;
pub mod engine;
pub mod exec;
pub mod oracle;
#[cfg(feature = "native")]
pub mod pipeline;
pub mod source;
pub mod toy;
pub mod verify;
