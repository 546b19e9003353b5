#![allow(dead_code)]

pub mod captioner;
pub mod e2e;
pub mod gradcheck;
