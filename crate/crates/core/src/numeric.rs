//! Floating-point specializations of exact polynomials for sampling scans.

use num_traits::ToPrimitive;

use crate::poly::ParamPoly;

/// A polynomial in `x, y, u, v` with `f64` coefficients, obtained by fixing `(a, d)`.
#[derive(Clone, Debug, Default)]
pub struct FloatPoly {
    terms: Vec<([u8; 4], f64)>,
    max_exp: [u8; 4],
}

impl FloatPoly {
    pub fn from_terms(mut terms: Vec<([u8; 4], f64)>) -> FloatPoly {
        terms.retain(|(_, c)| *c != 0.0);
        let mut max_exp = [0u8; 4];
        for (e, _) in &terms {
            for i in 0..4 {
                max_exp[i] = max_exp[i].max(e[i]);
            }
        }
        FloatPoly { terms, max_exp }
    }

    pub fn from_param_poly(p: &ParamPoly, a: f64, d: f64) -> FloatPoly {
        let scale = p.raw_scale().to_f64().unwrap_or(f64::INFINITY) * p.denom().eval_f64(a, d);
        let mut acc: std::collections::BTreeMap<[u8; 4], f64> = Default::default();
        for (m, c) in p.raw_terms() {
            let e = m.exps();
            let coeff = c.to_f64().unwrap_or(f64::NAN) * a.powi(e[4] as i32) * d.powi(e[5] as i32);
            let key = [e[0] as u8, e[1] as u8, e[2] as u8, e[3] as u8];
            *acc.entry(key).or_insert(0.0) += coeff;
        }
        FloatPoly::from_terms(acc.into_iter().map(|(k, c)| (k, c / scale)).collect())
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn eval(&self, p: &[f64; 4]) -> f64 {
        // Power tables are tiny (degree <= ~20), so a stack buffer is enough.
        let mut pows = [[1.0f64; 32]; 4];
        for i in 0..4 {
            let m = self.max_exp[i] as usize;
            for k in 1..=m {
                pows[i][k] = pows[i][k - 1] * p[i];
            }
        }
        self.terms
            .iter()
            .map(|(e, c)| {
                c * pows[0][e[0] as usize] * pows[1][e[1] as usize] * pows[2][e[2] as usize] * pows[3][e[3] as usize]
            })
            .sum()
    }

    pub fn diff(&self, var: usize) -> FloatPoly {
        FloatPoly::from_terms(
            self.terms
                .iter()
                .filter(|(e, _)| e[var] > 0)
                .map(|(e, c)| {
                    let mut e2 = *e;
                    e2[var] -= 1;
                    (e2, c * e[var] as f64)
                })
                .collect(),
        )
    }
}

/// A float polynomial with its gradient and Hessian precomputed.
#[derive(Clone, Debug)]
pub struct FloatJet {
    pub value: FloatPoly,
    pub grad: [FloatPoly; 4],
    pub hess: [[FloatPoly; 4]; 4],
}

impl FloatJet {
    pub fn new(p: FloatPoly) -> FloatJet {
        let grad: [FloatPoly; 4] = std::array::from_fn(|i| p.diff(i));
        let hess = std::array::from_fn(|i| std::array::from_fn(|j| grad[i].diff(j)));
        FloatJet { value: p, grad, hess }
    }

    pub fn eval(&self, p: &[f64; 4]) -> (f64, [f64; 4], [[f64; 4]; 4]) {
        let g = std::array::from_fn(|i| self.grad[i].eval(p));
        let h = std::array::from_fn(|i| std::array::from_fn(|j| self.hess[i][j].eval(p)));
        (self.value.eval(p), g, h)
    }
}

pub fn norm4(p: &[f64; 4]) -> f64 {
    p.iter().map(|c| c * c).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use crate::poly::vars::*;
    use crate::poly::{DenomFactor, DenomToken};

    #[test]
    fn specialization_matches_exact_float_eval() {
        let p = (int(3) * a() * x().pow(2) * y() - d() * v().pow(3) + u())
            .over(DenomToken::factor(DenomFactor::JordanNorm, 2));
        let f = p.to_float(0.3, -0.7);
        let pt = [0.4, -1.2, 2.0, 0.9];
        assert!((f.eval(&pt) - p.eval_f64(&pt, [0.3, -0.7])).abs() < 1e-12);
        let g = f.diff(1).eval(&pt);
        let exact = p.d(crate::poly::Var::Y).eval_f64(&pt, [0.3, -0.7]);
        assert!((g - exact).abs() < 1e-12);
    }
}
