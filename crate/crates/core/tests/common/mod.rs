#![allow(dead_code)]

pub mod graph_oracle;
pub mod stats_oracle;
pub mod tps_oracle;
