pub mod alert;
pub mod anomaly;
pub mod fabric;
pub mod policy;
pub mod scenarios;
pub mod secfn;
pub mod sma;
