pub mod alpha;
pub mod ast;
pub mod dataset;
pub mod gnn;
pub mod metrics;
pub mod slice;
pub mod training;
