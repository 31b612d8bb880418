#![no_std]

extern crate alloc;

pub mod ensemble;
pub mod linalg;
pub mod profile;
pub mod resolvent;
pub mod scalar;
pub mod stability;
pub mod vde;
