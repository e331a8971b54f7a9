pub mod clock;
pub mod riskmath;
pub mod corpus;
pub mod scorer;
pub mod collector;
pub mod statestore;
pub mod alerting;
pub mod config;
pub mod pipeline;
pub mod analysis;
