//! Helpers shared by the integration test targets: brute-force oracles
//! written independently of the library and a central finite-difference
//! gradient checker.

#![allow(dead_code)]

pub mod gradcheck;
pub mod oracles;
