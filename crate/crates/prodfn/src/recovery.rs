//! Recovery of unobserved components from the zero-profit accounting
//! identity, so estimation can run on incomplete panels.
//!
//! With the capital price normalized to one, `value = capital + rent` links
//! the three components; observing any two recovers the third exactly.

use crate::error::{Error, Result};
use crate::model::{Panel, VisibilityMask};

/// Capital from value and land rent: `K = value - R`.
pub fn recover_capital(value: f64, rent: f64) -> Result<f64> {
    if !(value > rent) {
        return Err(Error::Recovery(format!(
            "cannot recover capital: value {value} <= rent {rent} violates interiority"
        )));
    }
    if !value.is_finite() || !rent.is_finite() {
        return Err(Error::Recovery("cannot recover capital from non-finite inputs".into()));
    }
    Ok(value - rent)
}

/// Housing value from capital and land rent: `value = K + R`.
pub fn recover_value(capital: f64, rent: f64) -> Result<f64> {
    if !(capital > 0.0) || !capital.is_finite() || !rent.is_finite() {
        return Err(Error::Recovery(format!(
            "cannot recover value from capital {capital}, rent {rent}"
        )));
    }
    Ok(capital + rent)
}

/// Replaces masked fields by their zero-profit recoveries, eagerly, so the
/// estimators never see the mask. Log caches of rebuilt fields are refreshed.
pub fn apply_mask(panel: &Panel, mask: VisibilityMask) -> Result<Panel> {
    mask.validate()?;
    if mask.capital_observed && mask.value_observed {
        let mut out = panel.clone();
        out.mask = mask;
        return Ok(out);
    }
    let mut observations = Vec::with_capacity(panel.len());
    for obs in &panel.observations {
        let mut rebuilt = *obs;
        if !mask.capital_observed {
            rebuilt.capital = recover_capital(obs.value, obs.rent)?;
            rebuilt.k = rebuilt.capital.ln();
        }
        if !mask.value_observed {
            rebuilt.value = recover_value(obs.capital, obs.rent)?;
        }
        observations.push(rebuilt);
    }
    Ok(Panel {
        n_builders: panel.n_builders,
        n_cities: panel.n_cities,
        n_periods: panel.n_periods,
        observations,
        mask,
        nonpositive_rent_count: panel.nonpositive_rent_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::generate_panel;
    use crate::model::{ScenarioSpec, TechnologyParams};

    #[test]
    fn recovery_arithmetic() {
        assert_eq!(recover_capital(150.0, 60.0).unwrap(), 90.0);
        assert_eq!(recover_value(90.0, 60.0).unwrap(), 150.0);
        assert!(recover_capital(50.0, 60.0).is_err());
        assert!(recover_value(-1.0, 60.0).is_err());
    }

    #[test]
    fn roundtrip_on_generated_panel() {
        let mut spec = ScenarioSpec::baseline(TechnologyParams::cobb_douglas(0.6, 0.4), true);
        spec.n_builders = 10;
        spec.n_cities = 5;
        let panel = generate_panel(&spec, 0).unwrap();
        for obs in &panel.observations {
            let k = recover_capital(obs.value, obs.value - obs.capital).unwrap();
            assert!((k - obs.capital).abs() <= 1e-12 * obs.capital);
            let v = recover_value(obs.capital, obs.rent).unwrap();
            assert!((v - obs.value).abs() <= 1e-12 * obs.value);
        }
    }

    #[test]
    fn identity_mask_returns_identical_panel() {
        let mut spec = ScenarioSpec::baseline(TechnologyParams::cobb_douglas(0.6, 0.4), true);
        spec.n_builders = 5;
        spec.n_cities = 4;
        let panel = generate_panel(&spec, 0).unwrap();
        let same = apply_mask(&panel, VisibilityMask::ALL).unwrap();
        assert_eq!(panel.observations, same.observations);
    }

    #[test]
    fn masked_panels_match_to_twelve_digits() {
        let mut spec = ScenarioSpec::baseline(TechnologyParams::ces(0.4, 0.6, 0.5, 1.0), true);
        spec.n_builders = 10;
        spec.n_cities = 5;
        let panel = generate_panel(&spec, 2).unwrap();
        for mask in [VisibilityMask::HIDE_CAPITAL, VisibilityMask::HIDE_VALUE] {
            let rebuilt = apply_mask(&panel, mask).unwrap();
            for (a, b) in panel.observations.iter().zip(&rebuilt.observations) {
                assert!((a.capital - b.capital).abs() <= 1e-12 * a.capital);
                assert!((a.value - b.value).abs() <= 1e-12 * a.value);
            }
        }
    }

    #[test]
    fn under_determined_mask_is_rejected() {
        let mut spec = ScenarioSpec::baseline(TechnologyParams::cobb_douglas(0.6, 0.4), true);
        spec.n_builders = 2;
        spec.n_cities = 2;
        let panel = generate_panel(&spec, 0).unwrap();
        let mask = VisibilityMask {
            capital_observed: true,
            value_observed: false,
            rent_observed: false,
        };
        assert!(apply_mask(&panel, mask).is_err());
    }
}
