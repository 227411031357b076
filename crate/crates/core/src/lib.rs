pub mod base_flow;
pub mod cli;
pub mod config;
pub mod fiber_metric;
pub mod group_rep;
pub mod holonomy;
pub mod ode;
pub mod quad;
pub mod sections;
