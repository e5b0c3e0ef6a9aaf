//! Welfare-aware strategic classification.
//!
//! Agents observe a published scoring policy only through its local
//! Taylor expansion and best respond to it under a quadratic cost. This
//! crate provides the policies and labeling models, the agent response
//! models, welfare and fairness metrics, the regularized training loop
//! with its baselines, and numeric audits of when the welfare objectives
//! align.

pub mod audit;
pub mod data;
pub mod error;
pub mod models;
pub mod optim;
pub mod response;
pub mod train;
pub mod welfare;

pub use data::{Dataset, Sample};
pub use error::{Error, Result};
pub use models::{DomainBox, LabelingModel, Policy, PolicyKind, SmoothFunction};
pub use response::{CostModel, ResponseModel, TaylorExpansion};
pub use train::{Algorithm, TrainConfig, TrainTrace};
pub use welfare::{FairnessReport, WelfareReport};
