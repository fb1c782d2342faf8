pub mod benchgen;
pub mod callx;
pub mod compat;
pub mod libindex;
pub mod orchestrate;
pub mod par;
pub mod parammap;
pub mod pysrc;
pub mod repair;
pub mod sidecar;
pub mod sigmodel;
pub mod validate;
