#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod comm;
pub mod linalg;
pub mod modeselect;
pub mod scenario;
pub mod sensing;
pub mod solver;
