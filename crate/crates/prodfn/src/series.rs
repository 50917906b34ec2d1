//! Complete bivariate polynomial bases and least-squares helpers used by the
//! series estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Complete polynomial basis of a given total degree in `(k, l)`.
///
/// Terms are ordered by total degree, capital exponent first within a degree:
/// degree 2 yields `1, k, l, k^2, kl, l^2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyBasis {
    pub degree: usize,
    /// `(capital exponent, land exponent)` per term.
    pub terms: Vec<(u32, u32)>,
}

impl PolyBasis {
    pub fn complete(degree: usize) -> Self {
        let mut terms = Vec::new();
        for total in 0..=degree as u32 {
            for rl in 0..=total {
                let rk = total - rl;
                terms.push((rk, rl));
            }
        }
        PolyBasis { degree, terms }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Monomial values at `(k, l)`, in term order.
    pub fn monomials(&self, k: f64, l: f64) -> Vec<f64> {
        self.terms
            .iter()
            .map(|&(rk, rl)| k.powi(rk as i32) * l.powi(rl as i32))
            .collect()
    }

    /// Polynomial value `sum coef * k^rk * l^rl`.
    pub fn eval(&self, coef: &[f64], k: f64, l: f64) -> f64 {
        self.terms
            .iter()
            .zip(coef)
            .map(|(&(rk, rl), &c)| c * k.powi(rk as i32) * l.powi(rl as i32))
            .sum()
    }

    /// Partial derivative with respect to `l`.
    pub fn eval_dl(&self, coef: &[f64], k: f64, l: f64) -> f64 {
        self.terms
            .iter()
            .zip(coef)
            .filter(|(&(_, rl), _)| rl > 0)
            .map(|(&(rk, rl), &c)| c * rl as f64 * k.powi(rk as i32) * l.powi(rl as i32 - 1))
            .sum()
    }
}

/// Antiderivative in `k` of a polynomial on a [`PolyBasis`], holding the
/// base coefficients unevaluated so differentiating back returns them
/// bit-exactly. The integration constant is fixed at zero: the value at
/// `k = 0` is 0 for every `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralSurface<'a> {
    basis: &'a PolyBasis,
    coef: &'a [f64],
}

impl<'a> IntegralSurface<'a> {
    pub fn new(basis: &'a PolyBasis, coef: &'a [f64]) -> Self {
        IntegralSurface { basis, coef }
    }

    /// `sum coef / (rk + 1) * k^(rk+1) * l^rl`.
    pub fn eval(&self, k: f64, l: f64) -> f64 {
        self.basis
            .terms
            .iter()
            .zip(self.coef)
            .map(|(&(rk, rl), &c)| {
                c / (rk as f64 + 1.0) * k.powi(rk as i32 + 1) * l.powi(rl as i32)
            })
            .sum()
    }

    /// Partial derivative of the integral with respect to `l`.
    pub fn eval_dl(&self, k: f64, l: f64) -> f64 {
        self.basis
            .terms
            .iter()
            .zip(self.coef)
            .filter(|(&(_, rl), _)| rl > 0)
            .map(|(&(rk, rl), &c)| {
                c * rl as f64 / (rk as f64 + 1.0) * k.powi(rk as i32 + 1) * l.powi(rl as i32 - 1)
            })
            .sum()
    }

    /// Differentiating the antiderivative with respect to `k` recovers the
    /// original coefficients exactly: the `1/(rk+1)` factor cancels
    /// symbolically rather than numerically.
    pub fn d_dk_coefficients(&self) -> &[f64] {
        self.coef
    }
}

/// Least-squares solve of `X beta ~ y` via column-pivoted QR on the design.
///
/// Errors on rank deficiency (relative pivot threshold `1e-12`).
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let (rows, cols) = x.shape();
    if rows < cols {
        return Err(Error::Fit(format!(
            "least squares needs at least as many rows as columns ({rows} < {cols})"
        )));
    }
    let qr = x.clone().col_piv_qr();
    let r = qr.r();
    let max_diag = (0..cols).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if max_diag == 0.0 || (0..cols).any(|i| r[(i, i)].abs() < 1e-12 * max_diag) {
        return Err(Error::Fit("rank-deficient design matrix".into()));
    }
    let mut qty = qr.q().transpose() * y;
    r.solve_upper_triangular_mut(&mut qty);
    qr.p().inv_permute_rows(&mut qty);
    Ok(qty)
}

/// Least-squares fit of `y` on powers `1, x, ..., x^degree`, returning the
/// coefficient vector lowest power first.
pub fn poly_fit_1d(xs: &[f64], ys: &[f64], degree: usize) -> Result<Vec<f64>> {
    let n = xs.len();
    let p = degree + 1;
    let mut design = DMatrix::zeros(n, p);
    for (row, &x) in xs.iter().enumerate() {
        let mut pow = 1.0;
        for col in 0..p {
            design[(row, col)] = pow;
            pow *= x;
        }
    }
    let beta = least_squares(&design, &DVector::from_column_slice(ys))?;
    Ok(beta.iter().copied().collect())
}

/// Evaluates a 1-d polynomial with coefficients lowest power first.
pub fn poly_eval_1d(coef: &[f64], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn complete_basis_degree_two_ordering() {
        let b = PolyBasis::complete(2);
        assert_eq!(b.terms, vec![(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]);
    }

    #[test]
    fn antiderivative_coefficients_roundtrip_exactly() {
        let b = PolyBasis::complete(2);
        let coef = [0.1, -0.03, 0.7, 1.0 / 3.0, -0.11, 0.05];
        let integral = IntegralSurface::new(&b, &coef);
        for (orig, back) in coef.iter().zip(integral.d_dk_coefficients()) {
            assert_eq!(orig.to_bits(), back.to_bits());
        }
    }

    #[test]
    fn integral_is_zero_at_k_zero() {
        let b = PolyBasis::complete(2);
        let coef = [0.4, 0.2, -0.1, 0.05, 0.02, -0.03];
        let integral = IntegralSurface::new(&b, &coef);
        assert_eq!(integral.eval(0.0, 3.7), 0.0);
    }

    #[test]
    fn finite_difference_of_integral_reproduces_surface() {
        let b = PolyBasis::complete(2);
        let coef = [0.4, 0.2, -0.1, 0.05, 0.02, -0.03];
        let integral = IntegralSurface::new(&b, &coef);
        let h = 1e-5;
        for &(k, l) in &[(1.3, 4.0), (5.0, 3.9), (7.7, 4.6), (0.4, 4.2)] {
            let fd = (integral.eval(k + h, l) - integral.eval(k - h, l)) / (2.0 * h);
            assert_abs_diff_eq!(fd, b.eval(&coef, k, l), epsilon = 1e-8);
        }
    }

    #[test]
    fn integral_dl_matches_finite_difference() {
        let b = PolyBasis::complete(2);
        let coef = [0.4, 0.2, -0.1, 0.05, 0.02, -0.03];
        let integral = IntegralSurface::new(&b, &coef);
        let h = 1e-5;
        for &(k, l) in &[(1.3, 4.0), (5.0, 3.9), (7.7, 4.6)] {
            let fd = (integral.eval(k, l + h) - integral.eval(k, l - h)) / (2.0 * h);
            assert_abs_diff_eq!(fd, integral.eval_dl(k, l), epsilon = 1e-7);
        }
    }

    #[test]
    fn least_squares_recovers_exact_coefficients() {
        let xs: Vec<f64> = (0..50).map(|i| 0.1 + i as f64 * 0.07).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| 2.0 - 3.0 * x + 0.5 * x * x).collect();
        let coef = poly_fit_1d(&xs, &ys, 3).unwrap();
        assert_abs_diff_eq!(coef[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(coef[1], -3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(coef[2], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(coef[3], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn least_squares_rejects_rank_deficiency() {
        let x = DMatrix::from_fn(10, 2, |i, j| if j == 0 { 1.0 } else { 2.0 } * (i as f64 + 1.0));
        let y = DVector::from_element(10, 1.0);
        assert!(least_squares(&x, &y).is_err());
    }
}
