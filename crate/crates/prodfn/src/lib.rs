//! Housing-production panels and elasticity estimators.
//!
//! The crate generates synthetic builder-city-period panels in which capital
//! responds to land productivity that the econometrician never observes,
//! recovers hidden components through the zero-profit identity, and estimates
//! output elasticities four ways: a two-step share-regression estimator that
//! handles the productivity channel, plus factor-share, duality, and
//! cost-share baselines. A study runner replicates cells with seeded,
//! parallel-safe randomness and renders the summary tables.

pub mod baselines;
pub mod config;
pub mod dgp;
pub mod error;
pub mod model;
pub mod montecarlo;
pub mod proposed;
pub mod recovery;
pub mod report;
pub mod rng;
pub mod series;

pub use error::{Error, Result};
pub use model::{
    ElasticityPair, Observation, Panel, RentPolicy, ScenarioSpec, TechnologyFamily,
    TechnologyParams, VisibilityMask,
};
pub use proposed::EstimatorOptions;
pub use report::{EstimateReport, Method};
