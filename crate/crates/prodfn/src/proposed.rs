//! Two-step elasticity estimator robust to unobserved, persistent land
//! productivity.
//!
//! Step 1 fits the capital elasticity surface nonparametrically from the log
//! capital-share equation by sieve nonlinear least squares. Integrating the
//! fitted surface along log capital and removing the step-1 residual from log
//! value leaves a series whose only unknowns are a land-dependent integration
//! constant and the productivity path. Step 2 recovers the constant's series
//! coefficients from moment conditions that exploit the Markov structure of
//! productivity, with the transition polynomial concentrated out.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{Observation, Panel};
use crate::report::{mean, EstimateReport, FitDiagnostics, Method};
use crate::series::{IntegralSurface, PolyBasis};

/// Tuning knobs of the two-step estimator.
#[derive(Debug, Clone)]
pub struct EstimatorOptions {
    /// Total degree of the share sieve in (log capital, log land).
    pub share_degree: usize,
    /// Degree of the land polynomial in the integration constant.
    pub land_degree: usize,
    /// Degree of the productivity transition polynomial.
    pub transition_degree: usize,
    /// Divide the fitted elasticity surface by the sample mean of
    /// `exp(residual)`. Off by default; the share equation is fit without an
    /// ex post shock level correction, which at shock s.d. 0.1 moves the
    /// surface by about 0.5%.
    pub share_correction: bool,
    /// Step-1 gradient requirement: max-norm <= tol * (1 + objective). The
    /// optimizer aims two decades lower and accepts a stall anywhere below
    /// this bound.
    pub gradient_tol: f64,
    /// Step-2 target on the moment max-norm.
    pub moment_tol: f64,
    /// Iteration caps.
    pub max_step1_iterations: usize,
    pub max_step2_iterations: usize,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            share_degree: 2,
            land_degree: 2,
            transition_degree: 3,
            share_correction: false,
            gradient_tol: 1e-8,
            moment_tol: 1e-12,
            max_step1_iterations: 500,
            max_step2_iterations: 200,
        }
    }
}

/// Log capital share in housing value: `log K - log value`.
pub fn log_share(obs: &Observation) -> Result<f64> {
    if !(obs.capital > 0.0 && obs.value > 0.0) {
        return Err(Error::Domain(format!(
            "log share needs positive capital and value, got K={}, value={}",
            obs.capital, obs.value
        )));
    }
    Ok(obs.k - obs.value.ln())
}

/// Step-1 result: the sieve coefficients of the capital elasticity surface,
/// the share-equation residuals, and fit diagnostics.
#[derive(Debug, Clone)]
pub struct ShareFit {
    pub basis: PolyBasis,
    /// Sieve coefficients, one per basis term.
    pub gamma: Vec<f64>,
    /// Residuals with the sign convention `residual = log D_hat - log share`,
    /// so `log share = log D_hat - residual`.
    pub residuals: Vec<f64>,
    /// Sum of squared residuals at the optimum.
    pub objective: f64,
    pub iterations: usize,
    /// Max-norm of the objective gradient at the optimum.
    pub gradient_norm: f64,
    /// Divisor applied to the surface (1.0 unless the level correction is on).
    pub correction: f64,
}

impl ShareFit {
    /// Fitted capital elasticity at a point.
    pub fn elasticity_surface(&self, k: f64, l: f64) -> f64 {
        self.basis.eval(&self.gamma, k, l) / self.correction
    }

    /// Antiderivative of the fitted surface along log capital, zero at k = 0;
    /// the integration constant is recovered separately in step 2.
    pub fn integrate_surface(&self, k: f64, l: f64) -> f64 {
        IntegralSurface::new(&self.basis, &self.gamma).eval(k, l) / self.correction
    }

    /// Partial derivative of the antiderivative with respect to log land.
    pub fn integral_dl(&self, k: f64, l: f64) -> f64 {
        IntegralSurface::new(&self.basis, &self.gamma).eval_dl(k, l) / self.correction
    }
}

/// Fits the share sieve by damped Gauss-Newton with a positivity-respecting
/// backtracking line search on the inner polynomial.
///
/// Initialization is `gamma_0 = exp(mean log share)` with the remaining
/// coefficients zero, which is exact for Cobb-Douglas data.
pub fn fit_share_regression(panel: &Panel, degree: usize) -> Result<ShareFit> {
    fit_share_regression_with(panel, degree, &EstimatorOptions::default())
}

pub fn fit_share_regression_with(
    panel: &Panel,
    degree: usize,
    options: &EstimatorOptions,
) -> Result<ShareFit> {
    let n = panel.len();
    let basis = PolyBasis::complete(degree);
    let m = basis.len();
    if n < m {
        return Err(Error::Fit(format!(
            "share regression needs at least {m} observations, got {n}"
        )));
    }
    let mut targets = Vec::with_capacity(n);
    let mut monomials = Vec::with_capacity(n);
    for obs in &panel.observations {
        targets.push(log_share(obs)?);
        monomials.push(basis.monomials(obs.k, obs.l));
    }

    let mut gamma = vec![0.0; m];
    gamma[0] = (targets.iter().sum::<f64>() / n as f64).exp();

    let eval_poly = |gamma: &[f64]| -> Option<Vec<f64>> {
        let mut values = Vec::with_capacity(n);
        for row in &monomials {
            let p: f64 = row.iter().zip(gamma).map(|(x, g)| x * g).sum();
            if !(p > 0.0) || !p.is_finite() {
                return None;
            }
            values.push(p);
        }
        Some(values)
    };
    let objective = |poly: &[f64]| -> f64 {
        poly.iter()
            .zip(&targets)
            .map(|(&p, &z)| {
                let r = z - p.ln();
                r * r
            })
            .sum()
    };

    let gradient = |poly: &[f64]| -> Vec<f64> {
        let mut grad = vec![0.0; m];
        for (row, (&p, &z)) in monomials.iter().zip(poly.iter().zip(&targets)) {
            let r = z - p.ln();
            let inv_p = 1.0 / p;
            for (g, x) in grad.iter_mut().zip(row) {
                *g -= 2.0 * r * x * inv_p;
            }
        }
        grad
    };
    let inf_norm = |v: &[f64]| v.iter().fold(0.0, |acc: f64, g| acc.max(g.abs()));

    let mut poly = eval_poly(&gamma)
        .ok_or_else(|| Error::Fit("share sieve not positive at initialization".into()))?;
    let mut f_current = objective(&poly);
    let mut grad = gradient(&poly);
    let mut gradient_norm = inf_norm(&grad);
    let mut lambda = 1e-12;
    let mut iterations = 0;

    let target_tol = options.gradient_tol * 1e-2;
    for iter in 0..options.max_step1_iterations {
        iterations = iter;
        if gradient_norm <= target_tol * (1.0 + f_current) {
            break;
        }
        // Exact Hessian of the objective: 2 sum (1 + r) x x^T / p^2.
        let mut hess = DMatrix::<f64>::zeros(m, m);
        for (row, (&p, &z)) in monomials.iter().zip(poly.iter().zip(&targets)) {
            let r = z - p.ln();
            let w = 2.0 * (1.0 + r) / (p * p);
            for a in 0..m {
                for b in a..m {
                    hess[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..m {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        let neg_grad = DVector::from_iterator(m, grad.iter().map(|g| -g));

        // Far from the optimum, damped Newton with an objective-decrease line
        // search; near it, accept on gradient-norm decrease so floating-point
        // plateaus in the objective cannot stall convergence.
        let mut progressed = false;
        while lambda <= 1e14 {
            let mut damped = hess.clone();
            for d in 0..m {
                let scale = hess[(d, d)].abs().max(1e-300);
                damped[(d, d)] += lambda * scale;
            }
            let step = match Cholesky::new(damped) {
                Some(chol) => chol.solve(&neg_grad),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let candidate: Vec<f64> = gamma
                    .iter()
                    .zip(step.iter())
                    .map(|(g, d)| g + scale * d)
                    .collect();
                if let Some(p_new) = eval_poly(&candidate) {
                    let f_new = objective(&p_new);
                    let g_new = gradient(&p_new);
                    let g_norm_new = inf_norm(&g_new);
                    if f_new < f_current || g_norm_new < 0.9 * gradient_norm {
                        gamma = candidate;
                        poly = p_new;
                        f_current = f_new;
                        grad = g_new;
                        gradient_norm = g_norm_new;
                        accepted = true;
                        break;
                    }
                }
                scale *= 0.5;
            }
            if accepted {
                lambda = (lambda * 0.1).max(1e-12);
                progressed = true;
                break;
            }
            lambda *= 10.0;
        }
        if !progressed {
            break;
        }
    }

    if !(gradient_norm <= options.gradient_tol * (1.0 + f_current)) {
        return Err(Error::Fit(format!(
            "share regression did not converge: gradient max-norm {gradient_norm:.3e} \
             after {iterations} iterations (objective {f_current:.6e})"
        )));
    }

    let residuals: Vec<f64> = poly
        .iter()
        .zip(&targets)
        .map(|(&p, &z)| p.ln() - z)
        .collect();
    let correction = if options.share_correction {
        residuals.iter().map(|e| e.exp()).sum::<f64>() / n as f64
    } else {
        1.0
    };

    Ok(ShareFit {
        basis,
        gamma,
        residuals,
        objective: f_current,
        iterations,
        gradient_norm,
        correction,
    })
}

/// Sample analog of the integrated production identity:
/// `H_hat = log value - residual - integral(D_hat)`.
///
/// For noise-free Cobb-Douglas data with unit prices this equals
/// `beta_l * log land + omega` exactly.
pub fn build_h_hat(panel: &Panel, fit: &ShareFit) -> Vec<f64> {
    panel
        .observations
        .iter()
        .zip(&fit.residuals)
        .map(|(obs, &resid)| obs.value.ln() - resid - fit.integrate_surface(obs.k, obs.l))
        .collect()
}

/// Step-2 result: integration-constant coefficients, transition polynomial,
/// recovered productivity path, and innovations.
#[derive(Debug, Clone)]
pub struct Step2Fit {
    /// Land-polynomial coefficients `alpha_1 ... alpha_tau` (no constant),
    /// in raw powers of log land.
    pub alpha: Vec<f64>,
    /// Centering constant used internally (panel mean of log land).
    pub land_center: f64,
    /// Coefficients on centered powers `(l - land_center)^tau`; the
    /// numerically preferred evaluation form of the same polynomial.
    pub alpha_centered: Vec<f64>,
    /// Normalized intercept. Price levels and the productivity mean are not
    /// separately identified, so the intercept is fixed at zero and those
    /// levels ride in the recovered path.
    pub c0: f64,
    /// Transition coefficients, constant first.
    pub delta: Vec<f64>,
    /// Transition degree actually used.
    pub transition_degree: usize,
    /// True when collinearity forced a lower transition degree.
    pub degree_reduced: bool,
    /// Recovered city-period productivity, `[city][period]`.
    pub omega_hat: Vec<Vec<f64>>,
    /// Innovations, one per (city, period >= 2), cities outer.
    pub innovations: Vec<f64>,
    /// Sum of squared innovations.
    pub objective: f64,
    /// Max-norm of the land-moment residuals at the optimum.
    pub moment_norm: f64,
}

/// Cell-level sufficient statistics for step 2.
///
/// The land moments are builder-level, `mean(eta_ijt * phi(l_ijt)^tau) = 0`,
/// but every quantity the solver needs reduces to within-cell means of
/// `H_hat`, of centered land powers up to `2 tau`, and of `H_hat * phi^tau`.
/// Land powers are centered at the panel-wide mean of log land; without
/// centering the moment system suffers catastrophic cancellation between
/// `E[l^(sigma+tau)]` and the transition feedback.
struct CellMoments {
    n_cities: usize,
    n_periods: usize,
    tau: usize,
    /// Centering constant (panel mean of log land).
    center: f64,
    /// Mean of `H_hat` per (city, period) cell.
    h_bar: Vec<f64>,
    /// Mean of `phi^p` per cell, `land_bar[p-1][cell]` for p = 1..=2 tau,
    /// where `phi = l - center`.
    land_bar: Vec<Vec<f64>>,
    /// Mean of `H_hat * phi^tau` per cell, `hl_bar[tau-1][cell]`.
    hl_bar: Vec<Vec<f64>>,
}

impl CellMoments {
    fn build(panel: &Panel, h_hat: &[f64], tau: usize) -> Self {
        let cells = panel.n_cities * panel.n_periods;
        let center =
            panel.observations.iter().map(|o| o.l).sum::<f64>() / panel.len() as f64;
        let mut h_bar = vec![0.0; cells];
        let mut land_bar = vec![vec![0.0; cells]; 2 * tau];
        let mut hl_bar = vec![vec![0.0; cells]; tau];
        for (obs, &h) in panel.observations.iter().zip(h_hat) {
            let cell = obs.city as usize * panel.n_periods + obs.period as usize;
            h_bar[cell] += h;
            let centered = obs.l - center;
            let mut pow = 1.0;
            for (p, bucket) in land_bar.iter_mut().enumerate() {
                pow *= centered;
                bucket[cell] += pow;
                if p < tau {
                    hl_bar[p][cell] += h * pow;
                }
            }
        }
        let inv_n = 1.0 / panel.n_builders as f64;
        for v in h_bar.iter_mut() {
            *v *= inv_n;
        }
        for bucket in land_bar.iter_mut().chain(hl_bar.iter_mut()) {
            for v in bucket.iter_mut() {
                *v *= inv_n;
            }
        }
        CellMoments {
            n_cities: panel.n_cities,
            n_periods: panel.n_periods,
            tau,
            center,
            h_bar,
            land_bar,
            hl_bar,
        }
    }

    /// Cell-level productivity path: within-cell mean of
    /// `H_hat - sum_tau alpha_tau l^tau`.
    fn omega_hat(&self, alpha: &[f64]) -> Vec<f64> {
        let mut omega = self.h_bar.clone();
        for (bucket, &a) in self.land_bar.iter().take(self.tau).zip(alpha) {
            for (w, &b) in omega.iter_mut().zip(bucket) {
                *w -= a * b;
            }
        }
        omega
    }

    /// Within-cell mean of `(H_hat - sum alpha l^sigma) * l^tau` (tau 1-based).
    fn omega_l_bar(&self, alpha: &[f64], tau: usize, cell: usize) -> f64 {
        let mut value = self.hl_bar[tau - 1][cell];
        for (sigma, &a) in alpha.iter().enumerate() {
            value -= a * self.land_bar[sigma + tau][cell];
        }
        value
    }
}

/// Least-squares transition fit with automatic degree reduction when the
/// lagged-productivity design is rank deficient (for example with
/// productivity switched off and no innovation variance).
fn fit_transition(
    x: &[f64],
    y: &[f64],
    max_degree: usize,
) -> Result<(Vec<f64>, Vec<f64>, usize, bool)> {
    let mut degree = max_degree.min(x.len().saturating_sub(1));
    loop {
        let attempt = crate::series::poly_fit_1d(x, y, degree);
        match attempt {
            Ok(delta) => {
                let residuals: Vec<f64> = x
                    .iter()
                    .zip(y)
                    .map(|(&xi, &yi)| yi - crate::series::poly_eval_1d(&delta, xi))
                    .collect();
                return Ok((delta, residuals, degree, degree < max_degree));
            }
            Err(_) if degree > 0 => degree -= 1,
            Err(e) => return Err(e),
        }
    }
}

/// Recovers the integration constant and the productivity transition.
///
/// For candidate land coefficients, city-period productivity is the
/// within-cell mean of `H_hat` minus the land polynomial; the transition
/// polynomial is the least-squares fit of current on lagged productivity;
/// innovations are its residuals. The land coefficients solve the
/// just-identified moment conditions `mean(innovation * l^tau) = 0`, so the
/// moment residuals vanish at the optimum by construction, and the
/// transition-regression orthogonality supplies `mean(innovation) = 0` and
/// `mean(innovation * omega_lag^a) = 0`.
pub fn fit_step2(
    panel: &Panel,
    h_hat: &[f64],
    options: &EstimatorOptions,
) -> Result<Step2Fit> {
    if panel.n_periods < 2 {
        return Err(Error::Domain("step 2 needs at least two periods".into()));
    }
    let tau = options.land_degree;
    if tau == 0 {
        return Err(Error::Config("land degree must be at least 1".into()));
    }
    let cells = CellMoments::build(panel, h_hat, tau);
    let (n_cities, n_periods) = (cells.n_cities, cells.n_periods);
    let transitions = n_cities * (n_periods - 1);

    // Per-transition views: current and lagged cell means.
    let mut cur_cell = Vec::with_capacity(transitions);
    for city in 0..n_cities {
        for t in 1..n_periods {
            cur_cell.push(city * n_periods + t);
        }
    }

    struct Evaluation {
        moments: Vec<f64>,
        delta: Vec<f64>,
        eta: Vec<f64>,
        lag_omega: Vec<f64>,
        degree: usize,
        reduced: bool,
    }
    // Builder-level land moments from cell statistics:
    // mean_obs(eta_ijt l^tau) = mean_cells[(omega-tilde l^tau)-bar - g(lag) l^tau-bar].
    let evaluate = |alpha: &[f64]| -> Result<Evaluation> {
        let omega = cells.omega_hat(alpha);
        let lag_omega: Vec<f64> = cur_cell.iter().map(|&c| omega[c - 1]).collect();
        let cur_omega: Vec<f64> = cur_cell.iter().map(|&c| omega[c]).collect();
        let (delta, eta, degree, reduced) =
            fit_transition(&lag_omega, &cur_omega, options.transition_degree)?;
        let mut moments = vec![0.0; tau];
        for (idx, &c) in cur_cell.iter().enumerate() {
            let g_value = crate::series::poly_eval_1d(&delta, lag_omega[idx]);
            for (t_idx, m) in moments.iter_mut().enumerate() {
                *m += cells.omega_l_bar(alpha, t_idx + 1, c)
                    - g_value * cells.land_bar[t_idx][c];
            }
        }
        for m in moments.iter_mut() {
            *m /= transitions as f64;
        }
        Ok(Evaluation {
            moments,
            delta,
            eta,
            lag_omega,
            degree,
            reduced,
        })
    };

    // Start from the random-walk linearization eta ~ (H - A_lag) - sum alpha
    // (l^sigma - B_lag^sigma) - c, orthogonal to builder-level (l^tau, 1).
    let mut alpha = vec![0.0; tau];
    {
        let dim = tau + 1;
        let mut xtx = DMatrix::<f64>::zeros(dim, dim);
        let mut xty = DVector::<f64>::zeros(dim);
        for &c in &cur_cell {
            let prev = c - 1;
            // instrument rows: l^1..l^tau, then the constant
            for inst in 0..dim {
                let (target, row): (f64, Vec<f64>) = if inst < tau {
                    let target = cells.hl_bar[inst][c] - cells.h_bar[prev] * cells.land_bar[inst][c];
                    let mut row = Vec::with_capacity(dim);
                    for sigma in 0..tau {
                        row.push(
                            cells.land_bar[sigma + inst + 1][c]
                                - cells.land_bar[sigma][prev] * cells.land_bar[inst][c],
                        );
                    }
                    row.push(cells.land_bar[inst][c]);
                    (target, row)
                } else {
                    let target = cells.h_bar[c] - cells.h_bar[prev];
                    let mut row = Vec::with_capacity(dim);
                    for sigma in 0..tau {
                        row.push(cells.land_bar[sigma][c] - cells.land_bar[sigma][prev]);
                    }
                    row.push(1.0);
                    (target, row)
                };
                xty[inst] += target;
                for b in 0..dim {
                    xtx[(inst, b)] += row[b];
                }
            }
        }
        if let Some(solution) = xtx.lu().solve(&xty) {
            if solution.iter().all(|v| v.is_finite()) {
                alpha.copy_from_slice(&solution.as_slice()[..tau]);
            }
        }
    }

    // Newton on the concentrated land moments with the analytic Jacobian,
    // including the transition-fit sensitivity through a Schur complement.
    // The transition refit keeps the lag-orthogonality moments at zero by
    // construction; only the land moments are solved iteratively.
    let norm = |m: &[f64]| m.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()));
    let mut eval = evaluate(&alpha)?;
    let mut stalled = false;
    for _ in 0..options.max_step2_iterations {
        if norm(&eval.moments) <= options.moment_tol {
            break;
        }
        let n_delta = eval.delta.len();
        let g_prime: Vec<f64> = eval
            .lag_omega
            .iter()
            .map(|&x| {
                let mut acc = 0.0;
                let mut pow = 1.0;
                for (a, &d) in eval.delta.iter().enumerate().skip(1) {
                    acc += a as f64 * d * pow;
                    pow *= x;
                }
                acc
            })
            .collect();
        // d eta / d alpha_sigma at fixed delta.
        let deta = |sigma: usize, idx: usize, c: usize| -> f64 {
            -cells.land_bar[sigma][c] + g_prime[idx] * cells.land_bar[sigma][c - 1]
        };
        // Gram of lag powers (the delta normal-equation matrix).
        let mut gram = DMatrix::<f64>::zeros(n_delta, n_delta);
        for &x in &eval.lag_omega {
            let mut pows = Vec::with_capacity(2 * n_delta - 1);
            let mut pow = 1.0;
            for _ in 0..(2 * n_delta - 1) {
                pows.push(pow);
                pow *= x;
            }
            for a in 0..n_delta {
                for b in 0..n_delta {
                    gram[(a, b)] += pows[a + b];
                }
            }
        }
        gram /= transitions as f64;
        let gram_svd = gram.svd(true, true);
        let mut jac = DMatrix::<f64>::zeros(tau, tau);
        for sigma in 0..tau {
            // P_sigma: sensitivity of the delta normal equations to alpha.
            let mut p_vec = DVector::<f64>::zeros(n_delta);
            for (idx, &c) in cur_cell.iter().enumerate() {
                let x = eval.lag_omega[idx];
                let de = deta(sigma, idx, c);
                let mut pow = 1.0;
                for b in 0..n_delta {
                    p_vec[b] += de * pow;
                    pow *= x;
                }
                let mut pow_lower = 1.0;
                for b in 1..n_delta {
                    p_vec[b] -=
                        eval.eta[idx] * b as f64 * pow_lower * cells.land_bar[sigma][c - 1];
                    pow_lower *= x;
                }
            }
            p_vec /= transitions as f64;
            let ddelta = gram_svd
                .solve(&p_vec, 1e-12)
                .map_err(|e| Error::Fit(format!("step-2 transition sensitivity failed: {e}")))?;
            for t_row in 0..tau {
                let mut direct = 0.0;
                let mut via_delta = 0.0;
                for (idx, &c) in cur_cell.iter().enumerate() {
                    // builder-level d eta/d alpha: -l^sigma plus the lag
                    // feedback through g at the cell level
                    direct += -cells.land_bar[sigma + t_row + 1][c]
                        + g_prime[idx] * cells.land_bar[sigma][c - 1] * cells.land_bar[t_row][c];
                    let x = eval.lag_omega[idx];
                    let mut pow = 1.0;
                    let mut g_shift = 0.0;
                    for a in 0..n_delta {
                        g_shift += ddelta[a] * pow;
                        pow *= x;
                    }
                    via_delta -= g_shift * cells.land_bar[t_row][c];
                }
                jac[(t_row, sigma)] = (direct + via_delta) / transitions as f64;
            }
        }
        let rhs = DVector::from_iterator(tau, eval.moments.iter().map(|m| -m));
        let step = jac
            .svd(true, true)
            .solve(&rhs, 1e-13)
            .map_err(|e| Error::Fit(format!("step-2 Jacobian solve failed: {e}")))?;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let candidate: Vec<f64> = alpha
                .iter()
                .zip(step.iter())
                .map(|(a, d)| a + scale * d)
                .collect();
            let trial = evaluate(&candidate)?;
            if norm(&trial.moments) < norm(&eval.moments) {
                alpha = candidate;
                eval = trial;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            stalled = true;
            break;
        }
    }
    let moment_norm_final = norm(&eval.moments);
    if moment_norm_final > options.moment_tol {
        // A stall barely above the target is still far inside the moment
        // invariant; anything worse is a failed fit.
        if !(stalled && moment_norm_final <= 1e-7) {
            return Err(Error::Fit(format!(
                "step-2 moments did not converge: max-norm {moment_norm_final:.3e}"
            )));
        }
    }
    if eval.eta.iter().any(|e| !e.is_finite()) || eval.delta.iter().any(|d| !d.is_finite()) {
        return Err(Error::Fit("step-2 transition fit produced non-finite values".into()));
    }
    let (delta, eta, degree_used, reduced) =
        (eval.delta, eval.eta, eval.degree, eval.reduced);

    let omega_flat = cells.omega_hat(&alpha);
    let omega_hat: Vec<Vec<f64>> = (0..n_cities)
        .map(|city| omega_flat[city * n_periods..(city + 1) * n_periods].to_vec())
        .collect();
    let objective = eta.iter().map(|e| e * e).sum();

    // Expand the centered polynomial into raw powers (constant dropped; it
    // is not identified and rides in the recovered path).
    let mut alpha_raw = vec![0.0; tau];
    for (t_idx, &a) in alpha.iter().enumerate() {
        let degree = t_idx + 1;
        let mut binom = 1.0;
        let mut shift_pow = 1.0;
        // binom(degree, k) (-center)^(degree - k), iterating k = degree..=1
        let mut terms = vec![0.0; degree + 1];
        terms[degree] = 1.0;
        for k in (1..=degree).rev() {
            binom = binom * k as f64 / (degree - k + 1) as f64;
            shift_pow *= -cells.center;
            terms[k - 1] = binom * shift_pow;
        }
        for (k, &t) in terms.iter().enumerate().skip(1) {
            alpha_raw[k - 1] += a * t;
        }
    }

    Ok(Step2Fit {
        alpha: alpha_raw,
        land_center: cells.center,
        alpha_centered: alpha,
        c0: 0.0,
        delta,
        transition_degree: degree_used,
        degree_reduced: reduced,
        omega_hat,
        innovations: eta,
        objective,
        moment_norm: moment_norm_final,
    })
}

/// Land elasticity at a point: the land derivative of the integrated surface
/// plus the derivative of the recovered integration constant, evaluated in
/// the centered form.
pub fn land_elasticity(fit: &ShareFit, step2: &Step2Fit, k: f64, l: f64) -> f64 {
    let mut value = fit.integral_dl(k, l);
    let centered = l - step2.land_center;
    let mut pow = 1.0;
    for (idx, &a) in step2.alpha_centered.iter().enumerate() {
        value += a * (idx as f64 + 1.0) * pow;
        pow *= centered;
    }
    value
}

/// Runs the full two-step pipeline and reports mean elasticities.
pub fn estimate(panel: &Panel, options: &EstimatorOptions) -> Result<EstimateReport> {
    let fit = fit_share_regression_with(panel, options.share_degree, options)
        .map_err(|e| e.in_stage("step1"))?;
    let h_hat = build_h_hat(panel, &fit);
    let step2 = fit_step2(panel, &h_hat, options).map_err(|e| e.in_stage("step2"))?;

    let capital: Vec<f64> = panel
        .observations
        .iter()
        .map(|obs| fit.elasticity_surface(obs.k, obs.l))
        .collect();
    let land: Vec<f64> = panel
        .observations
        .iter()
        .map(|obs| land_elasticity(&fit, &step2, obs.k, obs.l))
        .collect();

    Ok(EstimateReport {
        method: Method::Proposed,
        mean_capital_elasticity: Some(mean(&capital)),
        mean_land_elasticity: Some(mean(&land)),
        capital_elasticities: capital,
        land_elasticities: land,
        diagnostics: FitDiagnostics {
            objective: fit.objective,
            iterations: fit.iterations,
            gradient_norm: fit.gradient_norm,
            moment_norm: step2.moment_norm,
            transition_degree: step2.transition_degree,
            transition_degree_reduced: step2.degree_reduced,
        },
    })
}
