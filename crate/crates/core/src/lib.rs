pub mod beam;
pub mod error;
pub mod linalg;
pub mod canonical;
pub mod jet;
pub mod controller;
pub mod observer;
pub mod disturbance;
pub mod metrics;
pub mod parallel;
pub mod report;
pub mod scenario;
pub mod sim;
