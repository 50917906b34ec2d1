//! Synthetic panel generation.
//!
//! Draws prices, parcels, and shocks, solves each builder's profit-maximizing
//! capital from the first-order condition, and closes output, value, and land
//! rent through the zero-profit identity.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{
    log_h, marginal_product_k, production_output, elasticities, ElasticityPair, Observation,
    Panel, RentPolicy, ScenarioSpec, TechnologyFamily, TechnologyParams, VisibilityMask,
};
use crate::rng::{DrawPurpose, RngStream};

/// Default tolerance for the CES capital solver, measured on the log-capital
/// interval. Generation error must stay far below statistical noise.
pub const CAPITAL_SOLVER_TOL: f64 = 1e-12;

/// Productivity paths, one row per city, `n_periods` columns.
///
/// With productivity off the matrix is identically zero. Otherwise the
/// initial level is uniform on `omega0_range` and evolves as
/// `omega_t = ar_coef * omega_{t-1} + eta_t`.
pub fn draw_productivity_paths(spec: &ScenarioSpec, replication: u64) -> Vec<Vec<f64>> {
    let mut paths = vec![vec![0.0; spec.n_periods]; spec.n_cities];
    if !spec.productivity_on {
        return paths;
    }
    for (city, path) in paths.iter_mut().enumerate() {
        let mut stream =
            RngStream::derive(spec.seed, replication, city as u64, DrawPurpose::Productivity);
        path[0] = stream.uniform(spec.omega0_range.0, spec.omega0_range.1);
        for t in 1..spec.n_periods {
            path[t] = spec.ar_coef * path[t - 1] + stream.normal(spec.eta_sd);
        }
    }
    paths
}

/// Closed-form Cobb-Douglas capital choice:
/// `K = (P beta_k L^beta_l e^omega)^(1 / (1 - beta_k))`.
pub fn solve_capital_cd(
    params: &TechnologyParams,
    price: f64,
    land: f64,
    omega: f64,
) -> Result<f64> {
    if params.family != TechnologyFamily::CobbDouglas {
        return Err(Error::Domain("solve_capital_cd requires Cobb-Douglas".into()));
    }
    if params.beta_k >= 1.0 {
        return Err(Error::Domain(format!(
            "no interior optimum: beta_k = {} >= 1",
            params.beta_k
        )));
    }
    if !(price > 0.0 && land > 0.0) {
        return Err(Error::Domain(format!(
            "capital choice needs positive price and land, got P={price}, L={land}"
        )));
    }
    let log_k = (price.ln() + params.beta_k.ln() + params.beta_l * land.ln() + omega)
        / (1.0 - params.beta_k);
    Ok(log_k.exp())
}

/// Marginal-value residual of the first-order condition at log-capital `x`,
/// in logs: `log(P) + log(dH/dK) + omega`. Strictly decreasing in `x`.
fn foc_log_residual(params: &TechnologyParams, price: f64, land: f64, omega: f64, x: f64) -> f64 {
    price.ln() + marginal_product_k(params, x.exp(), land).ln() + omega
}

/// CES capital choice by safeguarded bisection/Newton on log capital.
///
/// Strict concavity in capital makes the root unique; for constant returns an
/// interior optimum exists only while `P e^omega beta_k^(1/rho) < 1`, and the
/// solver reports a diagnostic error otherwise.
pub fn solve_capital_ces(
    params: &TechnologyParams,
    price: f64,
    land: f64,
    omega: f64,
    tol: f64,
) -> Result<f64> {
    if params.family != TechnologyFamily::Ces {
        return Err(Error::Domain("solve_capital_ces requires CES".into()));
    }
    if !(price > 0.0 && land > 0.0) {
        return Err(Error::Domain(format!(
            "capital choice needs positive price and land, got P={price}, L={land}"
        )));
    }
    // Initial guess: capital of comparable scale to the parcel.
    let mut lo = land.ln();
    let mut hi = lo;
    let f = |x: f64| foc_log_residual(params, price, land, omega, x);
    let mut f_lo = f(lo);
    let mut f_hi = f_lo;
    // Expand outward: f is decreasing, so push lo down until f(lo) > 0 and
    // hi up until f(hi) < 0.
    let mut width = 1.0;
    for _ in 0..200 {
        if f_lo <= 0.0 {
            lo -= width;
            f_lo = f(lo);
        } else if f_hi >= 0.0 {
            hi += width;
            f_hi = f(hi);
        } else {
            break;
        }
        width *= 2.0;
    }
    if !(f_lo > 0.0 && f_hi < 0.0) {
        return Err(Error::Solver(format!(
            "CES first-order condition could not be bracketed: P={price}, L={land}, omega={omega}, \
             f({lo:.3}) = {f_lo:.3e}, f({hi:.3}) = {f_hi:.3e}; for constant returns an interior \
             optimum requires P * e^omega * beta_k^(1/rho) < 1"
        )));
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fx = f(x);
        if fx > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= tol * (1.0 + x.abs()) {
            break;
        }
        // Newton step from the current point, safeguarded by the bracket.
        let h = 1e-7;
        let df = (f(x + h) - f(x - h)) / (2.0 * h);
        let newton = if df != 0.0 { x - fx / df } else { x };
        x = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(x.exp())
}

/// Capital choice for either family.
pub fn solve_capital(
    params: &TechnologyParams,
    price: f64,
    land: f64,
    omega: f64,
) -> Result<f64> {
    match params.family {
        TechnologyFamily::CobbDouglas => solve_capital_cd(params, price, land, omega),
        TechnologyFamily::Ces => solve_capital_ces(params, price, land, omega, CAPITAL_SOLVER_TOL),
    }
}

/// Draws one replication's panel.
///
/// Per city, prices, parcels, and ex post shocks are drawn from dedicated
/// streams in (builder, period) order, so adding estimators or toggling
/// productivity never perturbs the remaining draws. Capital solves the
/// family's first-order condition at the drawn state, and rent absorbs all
/// profit.
pub fn generate_panel(spec: &ScenarioSpec, replication: u64) -> Result<Panel> {
    spec.validate()?;
    let (n, j_cities, t_periods) = (spec.n_builders, spec.n_cities, spec.n_periods);
    let omega_paths = draw_productivity_paths(spec, replication);
    let mut observations = vec![None; n * j_cities * t_periods];
    let mut nonpositive_rent = 0usize;
    let index = |city: usize, period: usize, builder: usize| {
        (city * t_periods + period) * n + builder
    };

    for city in 0..j_cities {
        let mut price_stream =
            RngStream::derive(spec.seed, replication, city as u64, DrawPurpose::Price);
        let mut land_stream =
            RngStream::derive(spec.seed, replication, city as u64, DrawPurpose::Land);
        let mut eps_stream =
            RngStream::derive(spec.seed, replication, city as u64, DrawPurpose::PostShock);
        let mut prices = vec![0.0; n * t_periods];
        let mut lands = vec![0.0; n * t_periods];
        let mut epses = vec![0.0; n * t_periods];
        for slot in prices.iter_mut() {
            *slot = price_stream.uniform(spec.price_range.0, spec.price_range.1);
        }
        for slot in lands.iter_mut() {
            *slot = land_stream.uniform(spec.land_range.0, spec.land_range.1);
        }
        for slot in epses.iter_mut() {
            *slot = eps_stream.normal(spec.eps_sd);
        }
        for builder in 0..n {
            for period in 0..t_periods {
                let draw = builder * t_periods + period;
                let (price, land, eps) = (prices[draw], lands[draw], epses[draw]);
                let omega = omega_paths[city][period];
                let capital = solve_capital(&spec.tech, price, land, omega)?;
                let output = production_output(&spec.tech, capital, land, omega, eps)?;
                let obs = Observation::new(
                    builder as u32,
                    city as u32,
                    period as u32,
                    land,
                    capital,
                    price,
                    output,
                    omega,
                    eps,
                );
                if obs.rent <= 0.0 {
                    match spec.rent_policy {
                        RentPolicy::Error => {
                            return Err(Error::Generation(format!(
                                "non-positive land rent {:.6e} at builder {}, city {}, period {} \
                                 (value {:.6e} <= capital {:.6e})",
                                obs.rent,
                                builder + 1,
                                city + 1,
                                period + 1,
                                obs.value,
                                obs.capital
                            )));
                        }
                        RentPolicy::Allow => nonpositive_rent += 1,
                    }
                }
                observations[index(city, period, builder)] = Some(obs);
            }
        }
    }

    Ok(Panel {
        n_builders: n,
        n_cities: j_cities,
        n_periods: t_periods,
        observations: observations.into_iter().map(Option::unwrap).collect(),
        mask: VisibilityMask::ALL,
        nonpositive_rent_count: nonpositive_rent,
    })
}

/// Arithmetic mean of the pointwise true elasticities over a panel.
pub fn true_elasticity_summary(panel: &Panel, params: &TechnologyParams) -> Result<ElasticityPair> {
    if panel.is_empty() {
        return Err(Error::Domain("empty panel".into()));
    }
    let mut sum_k = 0.0;
    let mut sum_l = 0.0;
    for obs in &panel.observations {
        let e = elasticities(params, obs.capital, obs.land)?;
        sum_k += e.eps_k;
        sum_l += e.eps_l;
    }
    let n = panel.len() as f64;
    Ok(ElasticityPair {
        eps_k: sum_k / n,
        eps_l: sum_l / n,
    })
}

/// Header of the panel CSV dump.
pub const PANEL_CSV_HEADER: &str = "i,j,t,L,K,P_h,Y,value,R,omega,eps";

fn push_g17(out: &mut String, x: f64) {
    // 17 significant digits round-trip f64 exactly.
    write!(out, "{:.16e}", x).unwrap();
}

/// Renders a panel as CSV with 17-significant-digit values.
///
/// Builder and city ids and periods are 1-based in the file.
pub fn panel_to_csv(panel: &Panel) -> String {
    let mut out = String::with_capacity(panel.len() * 120);
    out.push_str(PANEL_CSV_HEADER);
    out.push('\n');
    for obs in &panel.observations {
        write!(out, "{},{},{},", obs.builder + 1, obs.city + 1, obs.period + 1).unwrap();
        for (idx, v) in [
            obs.land, obs.capital, obs.price, obs.output, obs.value, obs.rent, obs.omega, obs.eps,
        ]
        .into_iter()
        .enumerate()
        {
            if idx > 0 {
                out.push(',');
            }
            push_g17(&mut out, v);
        }
        out.push('\n');
    }
    out
}

/// Which panel columns an estimation run needs, given the visibility mask.
fn required_columns(mask: VisibilityMask) -> Vec<&'static str> {
    let mut cols = vec!["i", "j", "t", "L"];
    if mask.capital_observed {
        cols.push("K");
    }
    if mask.value_observed {
        cols.push("value");
    }
    if mask.rent_observed && !(mask.capital_observed && mask.value_observed) {
        cols.push("R");
    }
    cols
}

/// Parses a panel CSV produced by [`panel_to_csv`] (or any file with the
/// required columns), recovering hidden components per the mask.
///
/// The panel must be balanced: every (builder, city) pair present in every
/// period. Optional columns absent from the file are stored as NaN; they are
/// never read by the estimators.
pub fn panel_from_csv(text: &str, mask: VisibilityMask) -> Result<Panel> {
    mask.validate()?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("empty panel file".into()))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let col = |name: &str| names.iter().position(|&n| n == name);
    let missing: Vec<&str> = required_columns(mask)
        .into_iter()
        .filter(|name| col(name).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "panel file is missing required column(s) for this mask: {}",
            missing.join(", ")
        )));
    }

    struct Raw {
        i: u64,
        j: u64,
        t: u64,
        fields: Vec<f64>,
    }
    let idx_i = col("i").unwrap();
    let idx_j = col("j").unwrap();
    let idx_t = col("t").unwrap();
    let float_cols = ["L", "K", "P_h", "Y", "value", "R", "omega", "eps"];
    let float_idx: Vec<Option<usize>> = float_cols.iter().map(|c| col(c)).collect();

    let mut raws = Vec::new();
    for (line_no, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        let parse_u = |idx: usize| -> Result<u64> {
            cells
                .get(idx)
                .and_then(|s| s.trim().parse::<u64>().ok())
                .ok_or_else(|| {
                    Error::Config(format!("line {}: bad integer in column {}", line_no + 2, names[idx]))
                })
        };
        let mut fields = Vec::with_capacity(float_cols.len());
        for (name, maybe) in float_cols.iter().zip(&float_idx) {
            match maybe {
                Some(idx) => {
                    let v = cells.get(*idx).and_then(|s| s.trim().parse::<f64>().ok());
                    fields.push(v.ok_or_else(|| {
                        Error::Config(format!("line {}: bad number in column {name}", line_no + 2))
                    })?);
                }
                None => fields.push(f64::NAN),
            }
        }
        raws.push(Raw {
            i: parse_u(idx_i)?,
            j: parse_u(idx_j)?,
            t: parse_u(idx_t)?,
            fields,
        });
    }
    if raws.is_empty() {
        return Err(Error::Config("panel file has no observations".into()));
    }

    let mut builders: Vec<u64> = raws.iter().map(|r| r.i).collect();
    let mut cities: Vec<u64> = raws.iter().map(|r| r.j).collect();
    let mut periods: Vec<u64> = raws.iter().map(|r| r.t).collect();
    for list in [&mut builders, &mut cities, &mut periods] {
        list.sort_unstable();
        list.dedup();
    }
    let n = builders.len();
    let j_cities = cities.len();
    let t_periods = periods.len();
    if t_periods < 2 {
        return Err(Error::Config("panel needs at least two periods".into()));
    }
    if raws.len() != n * j_cities * t_periods {
        return Err(Error::Config(format!(
            "unbalanced panel: {} rows, expected {} x {} x {} = {}",
            raws.len(),
            n,
            j_cities,
            t_periods,
            n * j_cities * t_periods
        )));
    }

    let pos = |list: &[u64], v: u64| list.binary_search(&v).unwrap();
    let mut slots: Vec<Option<Observation>> = vec![None; raws.len()];
    for raw in &raws {
        let [land, capital_raw, price, output, value_raw, rent, omega, eps] =
            <[f64; 8]>::try_from(raw.fields.as_slice()).unwrap();
        let capital = if mask.capital_observed {
            capital_raw
        } else {
            crate::recovery::recover_capital(value_raw, rent)?
        };
        let value = if mask.value_observed {
            value_raw
        } else {
            crate::recovery::recover_value(capital_raw, rent)?
        };
        if !(land > 0.0 && capital > 0.0 && value > 0.0) {
            return Err(Error::Config(format!(
                "non-positive land/capital/value at builder {}, city {}, period {}",
                raw.i, raw.j, raw.t
            )));
        }
        let obs = Observation {
            builder: pos(&builders, raw.i) as u32,
            city: pos(&cities, raw.j) as u32,
            period: pos(&periods, raw.t) as u32,
            land,
            capital,
            price,
            output,
            value,
            rent: if rent.is_nan() { value - capital } else { rent },
            omega,
            eps,
            k: capital.ln(),
            l: land.ln(),
            y: output.ln(),
        };
        let idx = (obs.city as usize * t_periods + obs.period as usize) * n + obs.builder as usize;
        if slots[idx].is_some() {
            return Err(Error::Config(format!(
                "duplicate observation for builder {}, city {}, period {}",
                raw.i, raw.j, raw.t
            )));
        }
        slots[idx] = Some(obs);
    }
    if slots.iter().any(Option::is_none) {
        return Err(Error::Config("unbalanced panel: missing (i, j, t) cells".into()));
    }

    Ok(Panel {
        n_builders: n,
        n_cities: j_cities,
        n_periods: t_periods,
        observations: slots.into_iter().map(Option::unwrap).collect(),
        mask,
        nonpositive_rent_count: 0,
    })
}

/// Profit at a candidate capital level, the grid-search oracle target.
pub fn profit(params: &TechnologyParams, price: f64, land: f64, omega: f64, capital: f64) -> f64 {
    price * (log_h(params, capital, land) + omega).exp() - capital
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cd_crs() -> TechnologyParams {
        TechnologyParams::cobb_douglas(0.6, 0.4)
    }

    fn ces_crs() -> TechnologyParams {
        TechnologyParams::ces(0.4, 0.6, 0.5, 1.0)
    }

    #[test]
    fn productivity_off_is_zero() {
        let spec = ScenarioSpec::baseline(cd_crs(), false);
        let paths = draw_productivity_paths(&spec, 0);
        assert!(paths.iter().flatten().all(|&w| w == 0.0));
    }

    #[test]
    fn degenerate_innovation_keeps_initial_level() {
        let mut spec = ScenarioSpec::baseline(cd_crs(), true);
        spec.eta_sd = 0.0;
        let paths = draw_productivity_paths(&spec, 0);
        for path in paths {
            for t in 1..path.len() {
                assert_eq!(path[t], path[0]);
            }
        }
    }

    #[test]
    fn innovation_variance_matches_design() {
        // Moment check against N(0, 0.01^2): pooled increment variance over
        // 1e4 paths should sit within 10% of 1e-4.
        let mut spec = ScenarioSpec::baseline(cd_crs(), true);
        spec.n_cities = 10_000;
        spec.n_builders = 1;
        let paths = draw_productivity_paths(&spec, 0);
        let mut incs = Vec::new();
        for path in &paths {
            for t in 1..path.len() {
                incs.push(path[t] - path[t - 1]);
            }
        }
        let mean = incs.iter().sum::<f64>() / incs.len() as f64;
        let var =
            incs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (incs.len() - 1) as f64;
        assert!((var - 1e-4).abs() < 1e-5, "increment variance {var}");
    }

    #[test]
    fn cd_capital_closed_forms() {
        let k = solve_capital_cd(&cd_crs(), 1.0, 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(k, 0.6_f64.powf(2.5), epsilon = 1e-14);
        let drs = TechnologyParams::cobb_douglas(0.55, 0.35);
        let k = solve_capital_cd(&drs, 1.0, 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(k, 0.55_f64.powf(1.0 / 0.45), epsilon = 1e-14);
    }

    #[test]
    fn cd_capital_rejects_nonconcave() {
        let bad = TechnologyParams {
            family: TechnologyFamily::CobbDouglas,
            beta_k: 1.0,
            beta_l: 0.4,
            rho: 0.0,
            alpha_scale: 1.0,
        };
        assert!(solve_capital_cd(&bad, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn cd_capital_beats_log_grid() {
        let params = cd_crs();
        let (price, land, omega) = (1.1, 70.0, 0.3);
        let k = solve_capital_cd(&params, price, land, omega).unwrap();
        let best = profit(&params, price, land, omega, k);
        let x0 = k.ln();
        for step in 0..10_000 {
            let x = x0 - 0.5 + step as f64 * (1.0 / 10_000.0);
            let candidate = profit(&params, price, land, omega, x.exp());
            assert!(candidate <= best + 1e-12 * best.abs().max(1.0));
        }
    }

    #[test]
    fn ces_capital_closed_form_crs_half_rho() {
        // For alpha = 1, rho = 1/2 the first-order condition reduces to
        // sqrt(L/K) = (1/(P beta_k e^omega) - beta_k) / beta_l.
        let params = ces_crs();
        let (price, land, omega) = (1.0, 50.0, 0.0);
        let s = (1.0 / (price * params.beta_k) - params.beta_k) / params.beta_l;
        let expected = land / (s * s);
        let k = solve_capital_ces(&params, price, land, omega, 1e-13).unwrap();
        assert_abs_diff_eq!(k, expected, epsilon = 1e-9 * expected);
        assert_abs_diff_eq!(k, 4.081632653061224, epsilon = 1e-9);
    }

    #[test]
    fn ces_capital_satisfies_foc() {
        let params = ces_crs();
        for &(price, land, omega) in &[(0.7, 50.0, 1.0), (1.3, 100.0, 1.5), (1.0, 75.0, 1.25)] {
            let k = solve_capital_ces(&params, price, land, omega, 1e-13).unwrap();
            let mv = price * marginal_product_k(&params, k, land) * omega.exp();
            assert!(
                (mv - 1.0).abs() <= 1e-8 * mv.max(1.0),
                "FOC residual {} at P={price}, L={land}, omega={omega}",
                mv - 1.0
            );
        }
    }

    #[test]
    fn ces_capital_matches_grid_search() {
        let params = TechnologyParams::ces(0.35, 0.55, 0.5, 0.9);
        let (price, land, omega) = (1.2, 80.0, 1.1);
        let k = solve_capital_ces(&params, price, land, omega, 1e-13).unwrap();
        // Grid-search oracle over log capital around the solution.
        let x0 = k.ln();
        let mut best_x = x0 - 0.01;
        let mut best = f64::NEG_INFINITY;
        for step in 0..10_000 {
            let x = x0 - 0.01 + step as f64 * (0.02 / 10_000.0);
            let p = profit(&params, price, land, omega, x.exp());
            if p > best {
                best = p;
                best_x = x;
            }
        }
        assert_abs_diff_eq!(best_x.exp(), k, epsilon = 1e-5 * k);
        assert!(profit(&params, price, land, omega, k) >= best - 1e-12 * best.abs());
    }

    #[test]
    fn ces_capital_monotone_in_productivity() {
        let params = ces_crs();
        let k_low = solve_capital_ces(&params, 1.0, 50.0, 1.0, 1e-13).unwrap();
        let k_high = solve_capital_ces(&params, 1.0, 50.0, 1.2, 1e-13).unwrap();
        assert!(k_high > k_low);
    }

    #[test]
    fn ces_capital_unbounded_case_errors() {
        // Constant returns with P e^omega beta_k^(1/rho) >= 1 has no interior
        // optimum; the solver must say so rather than hang.
        let params = TechnologyParams::ces(0.6, 0.4, 0.5, 1.0);
        let err = solve_capital_ces(&params, 1.3, 50.0, 1.5, 1e-13).unwrap_err();
        assert!(format!("{err}").contains("bracketed"));
    }

    #[test]
    fn panel_dimensions_and_balance() {
        let mut spec = ScenarioSpec::baseline(cd_crs(), true);
        spec.n_builders = 7;
        spec.n_cities = 5;
        spec.n_periods = 3;
        let panel = generate_panel(&spec, 0).unwrap();
        assert_eq!(panel.len(), 7 * 5 * 3);
        for obs in &panel.observations {
            if obs.period > 0 {
                let lag = panel.lag(obs).unwrap();
                assert_eq!(lag.builder, obs.builder);
                assert_eq!(lag.city, obs.city);
                assert_eq!(lag.period, obs.period - 1);
            } else {
                assert!(panel.lag(obs).is_none());
            }
        }
    }

    #[test]
    fn panel_invariants_hold() {
        for tech in [cd_crs(), TechnologyParams::cobb_douglas(0.55, 0.35), ces_crs()] {
            let mut spec = ScenarioSpec::baseline(tech, true);
            spec.n_builders = 20;
            spec.n_cities = 10;
            let panel = generate_panel(&spec, 1).unwrap();
            for obs in &panel.observations {
                assert!(obs.land > 0.0 && obs.capital > 0.0 && obs.value > 0.0);
                // zero profit, exact by construction
                assert_eq!(obs.value - obs.capital - obs.rent, 0.0);
                assert!((obs.value - obs.price * obs.output).abs() <= 1e-12 * obs.value);
                // first-order condition at the solved capital
                let mv =
                    obs.price * marginal_product_k(&spec.tech, obs.capital, obs.land) * obs.omega.exp();
                assert!(
                    (mv - 1.0).abs() <= 1e-8 * mv.max(1.0),
                    "FOC residual {:e}",
                    mv - 1.0
                );
            }
        }
    }

    #[test]
    fn cd_share_in_unit_interval_at_baseline() {
        let spec = ScenarioSpec::baseline(cd_crs(), true);
        let panel = generate_panel(&spec, 0).unwrap();
        assert_eq!(panel.nonpositive_rent_count, 0);
        for obs in &panel.observations {
            let share = obs.capital / obs.value;
            assert!(share > 0.0 && share < 1.0);
        }
    }

    #[test]
    fn noise_free_cd_has_constant_share() {
        let mut spec = ScenarioSpec::baseline(cd_crs(), false);
        spec.eps_sd = 0.0;
        spec.n_builders = 10;
        spec.n_cities = 5;
        let panel = generate_panel(&spec, 0).unwrap();
        for obs in &panel.observations {
            assert_abs_diff_eq!(obs.capital / obs.value, 0.6, epsilon = 1e-12);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let mut spec = ScenarioSpec::baseline(ces_crs(), true);
        spec.n_builders = 5;
        spec.n_cities = 4;
        let a = generate_panel(&spec, 3).unwrap();
        let b = generate_panel(&spec, 3).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.observations.iter().zip(&b.observations) {
            assert_eq!(x.capital.to_bits(), y.capital.to_bits());
            assert_eq!(x.value.to_bits(), y.value.to_bits());
            assert_eq!(x.rent.to_bits(), y.rent.to_bits());
        }
    }

    #[test]
    fn rent_policy_error_fires() {
        // An enormous ex post shock makes capital exceed value somewhere.
        let mut spec = ScenarioSpec::baseline(cd_crs(), false);
        spec.eps_sd = 3.0;
        spec.n_builders = 50;
        spec.n_cities = 5;
        spec.rent_policy = RentPolicy::Error;
        let err = generate_panel(&spec, 0).unwrap_err();
        assert!(format!("{err}").contains("non-positive land rent"));
        spec.rent_policy = RentPolicy::Allow;
        let panel = generate_panel(&spec, 0).unwrap();
        assert!(panel.nonpositive_rent_count > 0);
    }

    #[test]
    fn true_summary_for_cd_is_exact() {
        let mut spec = ScenarioSpec::baseline(cd_crs(), true);
        spec.n_builders = 10;
        spec.n_cities = 10;
        let panel = generate_panel(&spec, 0).unwrap();
        let e = true_elasticity_summary(&panel, &spec.tech).unwrap();
        assert_abs_diff_eq!(e.eps_k, 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(e.eps_l, 0.4, epsilon = 1e-12);
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let mut spec = ScenarioSpec::baseline(ces_crs(), true);
        spec.n_builders = 4;
        spec.n_cities = 3;
        spec.n_periods = 2;
        let panel = generate_panel(&spec, 0).unwrap();
        let text = panel_to_csv(&panel);
        let back = panel_from_csv(&text, VisibilityMask::ALL).unwrap();
        assert_eq!(panel.len(), back.len());
        for (a, b) in panel.observations.iter().zip(&back.observations) {
            assert_eq!(a.capital.to_bits(), b.capital.to_bits());
            assert_eq!(a.value.to_bits(), b.value.to_bits());
            assert_eq!(a.land.to_bits(), b.land.to_bits());
            assert_eq!(a.rent.to_bits(), b.rent.to_bits());
            assert_eq!(a.eps.to_bits(), b.eps.to_bits());
        }
    }

    #[test]
    fn csv_missing_column_is_named() {
        let text = "i,j,t,L,value\n1,1,1,50.0,10.0\n1,1,2,50.0,10.0\n";
        let err = panel_from_csv(text, VisibilityMask::ALL).unwrap_err();
        assert!(format!("{err}").contains("K"), "{err}");
        let err = panel_from_csv(text, VisibilityMask::HIDE_CAPITAL).unwrap_err();
        assert!(format!("{err}").contains("R"), "{err}");
    }
}
