//! Oracles and fixtures shared by the suites and the acceptance run.
#![allow(dead_code)]

pub mod fom;
pub mod fv;
pub mod pod;
pub mod rom;
