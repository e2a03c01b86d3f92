pub mod camera;
pub mod error;
pub mod event;
pub mod indexing;
pub mod io;
pub mod so3;
pub mod synth;
pub mod registration;
pub mod contrast;
pub mod averaging;
pub mod vo;
pub mod metrics;
pub mod bench;
