#![allow(dead_code)]

pub mod linearizability;
pub mod mock_http;
pub mod oracles;
