//! Estimation output shared by every method.

use serde::{Deserialize, Serialize};

/// Method identifiers, matching the CLI contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Traditional factor-share estimator.
    Ols,
    /// Duality-based per-unit-land estimator (assumes constant returns).
    Egs,
    /// Cost-share integration estimator.
    Cdg,
    /// Two-step share-regression estimator with Markov productivity.
    Proposed,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ols, Method::Egs, Method::Cdg, Method::Proposed];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ols => "ols",
            Method::Egs => "egs",
            Method::Cdg => "cdg",
            Method::Proposed => "proposed",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s.to_ascii_lowercase().as_str() {
            "ols" => Some(Method::Ols),
            "egs" => Some(Method::Egs),
            "cdg" => Some(Method::Cdg),
            "proposed" => Some(Method::Proposed),
            _ => None,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Fit diagnostics carried alongside the headline numbers.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Share-regression sum of squares (step 1) or fit SSR for baselines.
    pub objective: f64,
    /// Iterations of the step-1 optimizer, when applicable.
    pub iterations: usize,
    /// Max-norm of the step-1 gradient at the optimum.
    pub gradient_norm: f64,
    /// Max-norm of the step-2 moment residuals, when applicable.
    pub moment_norm: f64,
    /// Transition polynomial degree actually used in step 2.
    pub transition_degree: usize,
    /// Set when the transition regression was degree-reduced for collinearity.
    pub transition_degree_reduced: bool,
}

/// Per-method estimation result.
///
/// Methods that identify only one elasticity leave the other side `None`;
/// study tables print those cells as `--`. Means are arithmetic averages of
/// the per-observation values where the method produces them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: Method,
    pub mean_capital_elasticity: Option<f64>,
    pub mean_land_elasticity: Option<f64>,
    /// Per-observation capital elasticities, in panel order, when produced.
    #[serde(skip)]
    pub capital_elasticities: Vec<f64>,
    /// Per-observation land elasticities, in panel order, when produced.
    #[serde(skip)]
    pub land_elasticities: Vec<f64>,
    pub diagnostics: FitDiagnostics,
}

impl EstimateReport {
    pub fn elasticity(&self, capital_side: bool) -> Option<f64> {
        if capital_side {
            self.mean_capital_elasticity
        } else {
            self.mean_land_elasticity
        }
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
