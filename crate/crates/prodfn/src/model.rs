//! Domain types and closed-form technology formulas.
//!
//! Houses the production technologies (Cobb-Douglas and CES), scenario
//! descriptions, panel observations, and the analytic output elasticities
//! used both as data-generating ground truth and as test oracles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Production technology family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TechnologyFamily {
    CobbDouglas,
    Ces,
}

/// Parameters of the housing production technology `H(K, L)`.
///
/// Cobb-Douglas: `H = K^beta_k * L^beta_l`.
/// CES: `H = (beta_k K^rho + beta_l L^rho)^(alpha_scale / rho)`, with
/// substitution elasticity `1 / (1 - rho)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TechnologyParams {
    pub family: TechnologyFamily,
    /// Capital weight (dimensionless).
    pub beta_k: f64,
    /// Land weight (dimensionless).
    pub beta_l: f64,
    /// CES curvature; unused for Cobb-Douglas.
    pub rho: f64,
    /// Returns-to-scale exponent for CES (1.0 = constant returns).
    pub alpha_scale: f64,
}

impl TechnologyParams {
    pub fn cobb_douglas(beta_k: f64, beta_l: f64) -> Self {
        TechnologyParams {
            family: TechnologyFamily::CobbDouglas,
            beta_k,
            beta_l,
            rho: 0.0,
            alpha_scale: 1.0,
        }
    }

    pub fn ces(beta_k: f64, beta_l: f64, rho: f64, alpha_scale: f64) -> Self {
        TechnologyParams {
            family: TechnologyFamily::Ces,
            beta_k,
            beta_l,
            rho,
            alpha_scale,
        }
    }

    /// Checks the family-specific parameter invariants.
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_k > 0.0) || !(self.beta_l > 0.0) {
            return Err(Error::Config(format!(
                "technology weights must be positive: beta_k={}, beta_l={}",
                self.beta_k, self.beta_l
            )));
        }
        match self.family {
            TechnologyFamily::CobbDouglas => {
                if self.beta_k + self.beta_l > 1.0 + 1e-12 {
                    return Err(Error::Config(format!(
                        "Cobb-Douglas requires beta_k + beta_l <= 1, got {}",
                        self.beta_k + self.beta_l
                    )));
                }
            }
            TechnologyFamily::Ces => {
                if !(self.rho > 0.0 && self.rho < 1.0) {
                    return Err(Error::Config(format!(
                        "CES requires 0 < rho < 1, got {}",
                        self.rho
                    )));
                }
                if !(self.alpha_scale > 0.0 && self.alpha_scale <= 1.0) {
                    return Err(Error::Config(format!(
                        "CES requires 0 < alpha_scale <= 1, got {}",
                        self.alpha_scale
                    )));
                }
            }
        }
        Ok(())
    }

    /// Sum of output elasticities (returns to scale) at interior inputs.
    pub fn returns_to_scale(&self) -> f64 {
        match self.family {
            TechnologyFamily::CobbDouglas => self.beta_k + self.beta_l,
            TechnologyFamily::Ces => self.alpha_scale,
        }
    }
}

/// Pair of output elasticities at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticityPair {
    /// d log H / d log K.
    pub eps_k: f64,
    /// d log H / d log L.
    pub eps_l: f64,
}

/// How generation reacts to an observation whose residual land rent is
/// non-positive (capital outlay at least the housing value).
///
/// High-productivity CES draws can push the capital share above one, so the
/// permissive default keeps the designed distributions intact and counts the
/// occurrences instead of resampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum RentPolicy {
    /// Keep the observation and count it in panel diagnostics.
    #[default]
    Allow,
    /// Abort generation, naming the offending (builder, city, period).
    Error,
}

/// Full description of one simulation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub tech: TechnologyParams,
    /// If false the productivity path is identically zero.
    pub productivity_on: bool,
    /// Builders per city.
    pub n_builders: usize,
    /// Cities.
    pub n_cities: usize,
    /// Periods (at least 2; transitions need lags).
    pub n_periods: usize,
    /// Housing price draw interval.
    pub price_range: (f64, f64),
    /// Land parcel size draw interval.
    pub land_range: (f64, f64),
    /// Std. dev. of the ex post shock.
    pub eps_sd: f64,
    /// Std. dev. of the productivity innovation.
    pub eta_sd: f64,
    /// Initial productivity draw interval.
    pub omega0_range: (f64, f64),
    /// Autoregressive coefficient of the productivity process (default 1).
    pub ar_coef: f64,
    /// Price of capital; the model normalizes it to 1.
    pub capital_price: f64,
    /// Monte Carlo replications.
    pub replications: usize,
    /// Root seed for all streams.
    pub seed: u64,
    #[serde(default)]
    pub rent_policy: RentPolicy,
}

impl ScenarioSpec {
    /// Baseline dimensions and distributions shared by all study cells.
    pub fn baseline(tech: TechnologyParams, productivity_on: bool) -> Self {
        ScenarioSpec {
            tech,
            productivity_on,
            n_builders: 100,
            n_cities: 100,
            n_periods: 6,
            price_range: (0.7, 1.3),
            land_range: (50.0, 100.0),
            eps_sd: 0.1,
            eta_sd: 0.01,
            omega0_range: (1.0, 1.5),
            ar_coef: 1.0,
            capital_price: 1.0,
            replications: 100,
            seed: 42,
            rent_policy: RentPolicy::Allow,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.tech.validate()?;
        if self.n_builders < 1 || self.n_cities < 1 || self.replications < 1 {
            return Err(Error::Config(
                "builders, cities, and replications must be >= 1".into(),
            ));
        }
        if self.n_periods < 2 {
            return Err(Error::Config(
                "at least two periods are required (transitions need lags)".into(),
            ));
        }
        for (name, (lo, hi)) in [
            ("price_range", self.price_range),
            ("land_range", self.land_range),
            ("omega0_range", self.omega0_range),
        ] {
            if !(lo <= hi) {
                return Err(Error::Config(format!("{name} bounds out of order: ({lo}, {hi})")));
            }
        }
        if !(self.price_range.0 > 0.0) || !(self.land_range.0 > 0.0) {
            return Err(Error::Config("prices and land sizes must be positive".into()));
        }
        if self.eps_sd < 0.0 || self.eta_sd < 0.0 {
            return Err(Error::Config("shock standard deviations must be >= 0".into()));
        }
        if (self.capital_price - 1.0).abs() > 1e-12 {
            return Err(Error::Config(
                "the model normalizes the capital price to 1".into(),
            ));
        }
        Ok(())
    }

    pub fn observations_per_replication(&self) -> usize {
        self.n_builders * self.n_cities * self.n_periods
    }
}

/// One builder-city-period record.
///
/// The accounting identities `value = price * output` and
/// `value - capital - rent = 0` hold by construction; `rent` is defined
/// residually. Natural logs of capital, land, and output are cached at
/// construction for the estimation inner loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub builder: u32,
    pub city: u32,
    pub period: u32,
    pub land: f64,
    pub capital: f64,
    pub price: f64,
    pub output: f64,
    pub value: f64,
    pub rent: f64,
    pub omega: f64,
    pub eps: f64,
    /// log(capital)
    pub k: f64,
    /// log(land)
    pub l: f64,
    /// log(output)
    pub y: f64,
}

impl Observation {
    /// Builds a record from inputs and shocks, closing the accounting
    /// identities. Logs are cached here.
    pub fn new(
        builder: u32,
        city: u32,
        period: u32,
        land: f64,
        capital: f64,
        price: f64,
        output: f64,
        omega: f64,
        eps: f64,
    ) -> Self {
        let value = price * output;
        Observation {
            builder,
            city,
            period,
            land,
            capital,
            price,
            output,
            value,
            rent: value - capital,
            omega,
            eps,
            k: capital.ln(),
            l: land.ln(),
            y: output.ln(),
        }
    }
}

/// Which of the three zero-profit components are treated as observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisibilityMask {
    pub capital_observed: bool,
    pub value_observed: bool,
    pub rent_observed: bool,
}

impl VisibilityMask {
    pub const ALL: VisibilityMask = VisibilityMask {
        capital_observed: true,
        value_observed: true,
        rent_observed: true,
    };

    pub const HIDE_CAPITAL: VisibilityMask = VisibilityMask {
        capital_observed: false,
        value_observed: true,
        rent_observed: true,
    };

    pub const HIDE_VALUE: VisibilityMask = VisibilityMask {
        capital_observed: true,
        value_observed: false,
        rent_observed: true,
    };

    /// Recovery needs at least two of the three components.
    pub fn validate(&self) -> Result<()> {
        let observed = [self.capital_observed, self.value_observed, self.rent_observed]
            .iter()
            .filter(|&&b| b)
            .count();
        if observed < 2 {
            return Err(Error::Config(
                "under-determined visibility mask: at least two of capital, value, rent must be observed"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// A balanced builder-city-period panel.
///
/// Observations are stored densely in (city, period, builder) order so the
/// lag link is index arithmetic: each builder is paired with itself at the
/// previous period. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub n_builders: usize,
    pub n_cities: usize,
    pub n_periods: usize,
    pub observations: Vec<Observation>,
    pub mask: VisibilityMask,
    /// Observations generated with non-positive residual rent (see
    /// [`RentPolicy::Allow`]).
    pub nonpositive_rent_count: usize,
}

impl Panel {
    pub fn index(&self, city: usize, period: usize, builder: usize) -> usize {
        (city * self.n_periods + period) * self.n_builders + builder
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// The observation one period earlier for the same builder and city;
    /// `None` in the first period.
    pub fn lag(&self, obs: &Observation) -> Option<&Observation> {
        if obs.period == 0 {
            return None;
        }
        let idx = self.index(obs.city as usize, obs.period as usize - 1, obs.builder as usize);
        Some(&self.observations[idx])
    }
}

/// Cobb-Douglas output elasticities: `(beta_k, beta_l)` independent of inputs.
pub fn cd_elasticities(params: &TechnologyParams, capital: f64, land: f64) -> Result<ElasticityPair> {
    if params.family != TechnologyFamily::CobbDouglas {
        return Err(Error::Domain(
            "cd_elasticities requires a Cobb-Douglas technology".into(),
        ));
    }
    if !(capital > 0.0 && land > 0.0) {
        return Err(Error::Domain(format!(
            "elasticities need positive inputs, got K={capital}, L={land}"
        )));
    }
    Ok(ElasticityPair {
        eps_k: params.beta_k,
        eps_l: params.beta_l,
    })
}

/// CES output elasticities at `(K, L)`:
/// `eps_k = alpha * beta_k K^rho / (beta_k K^rho + beta_l L^rho)`, and
/// `eps_l = alpha - eps_k` so the pair sums to the scale exponent exactly.
pub fn ces_elasticities(params: &TechnologyParams, capital: f64, land: f64) -> Result<ElasticityPair> {
    if params.family != TechnologyFamily::Ces {
        return Err(Error::Domain("ces_elasticities requires a CES technology".into()));
    }
    if !(capital > 0.0 && land > 0.0) {
        return Err(Error::Domain(format!(
            "elasticities need positive inputs, got K={capital}, L={land}"
        )));
    }
    let wk = params.beta_k * capital.powf(params.rho);
    let wl = params.beta_l * land.powf(params.rho);
    let eps_k = params.alpha_scale * wk / (wk + wl);
    Ok(ElasticityPair {
        eps_k,
        eps_l: params.alpha_scale - eps_k,
    })
}

/// Output elasticities for either family.
pub fn elasticities(params: &TechnologyParams, capital: f64, land: f64) -> Result<ElasticityPair> {
    match params.family {
        TechnologyFamily::CobbDouglas => cd_elasticities(params, capital, land),
        TechnologyFamily::Ces => ces_elasticities(params, capital, land),
    }
}

/// log H(K, L) without shocks.
pub fn log_h(params: &TechnologyParams, capital: f64, land: f64) -> f64 {
    match params.family {
        TechnologyFamily::CobbDouglas => {
            params.beta_k * capital.ln() + params.beta_l * land.ln()
        }
        TechnologyFamily::Ces => {
            let inner =
                params.beta_k * capital.powf(params.rho) + params.beta_l * land.powf(params.rho);
            (params.alpha_scale / params.rho) * inner.ln()
        }
    }
}

/// Marginal product of capital, dH/dK.
pub fn marginal_product_k(params: &TechnologyParams, capital: f64, land: f64) -> f64 {
    match params.family {
        TechnologyFamily::CobbDouglas => {
            params.beta_k
                * (params.beta_k * capital.ln() + params.beta_l * land.ln()).exp()
                / capital
        }
        TechnologyFamily::Ces => {
            let inner =
                params.beta_k * capital.powf(params.rho) + params.beta_l * land.powf(params.rho);
            params.alpha_scale
                * params.beta_k
                * capital.powf(params.rho - 1.0)
                * inner.powf(params.alpha_scale / params.rho - 1.0)
        }
    }
}

/// Realized output `Y = H(K, L) * exp(omega + eps)`.
pub fn production_output(
    params: &TechnologyParams,
    capital: f64,
    land: f64,
    omega: f64,
    eps: f64,
) -> Result<f64> {
    if !(capital > 0.0 && land > 0.0) {
        return Err(Error::Domain(format!(
            "production needs positive inputs, got K={capital}, L={land}"
        )));
    }
    Ok((log_h(params, capital, land) + omega + eps).exp())
}
