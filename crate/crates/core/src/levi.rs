//! Wirtinger calculus on `C² ≈ R⁴`: complex tangent fields, Levi forms, and a
//! finite-difference oracle.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::poly::{rat, ParamPoly, Rational, Var};

#[derive(Debug, Error)]
pub enum LeviError {
    #[error("the two Levi assemblies disagree; residual has {0} terms")]
    MismatchBetweenFormulas(usize),
    #[error("Levi form has a nonzero imaginary part with {0} terms")]
    NonRealResult(usize),
}

/// `re + i·im` with polynomial parts.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexPolyPair {
    pub re: ParamPoly,
    pub im: ParamPoly,
}

impl ComplexPolyPair {
    pub fn new(re: ParamPoly, im: ParamPoly) -> ComplexPolyPair {
        ComplexPolyPair { re, im }
    }

    pub fn real(re: ParamPoly) -> ComplexPolyPair {
        ComplexPolyPair { re, im: ParamPoly::zero() }
    }

    pub fn zero() -> ComplexPolyPair {
        ComplexPolyPair::real(ParamPoly::zero())
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn conj(&self) -> ComplexPolyPair {
        ComplexPolyPair { re: self.re.clone(), im: -&self.im }
    }

    pub fn add(&self, o: &ComplexPolyPair) -> ComplexPolyPair {
        ComplexPolyPair { re: &self.re + &o.re, im: &self.im + &o.im }
    }

    pub fn sub(&self, o: &ComplexPolyPair) -> ComplexPolyPair {
        ComplexPolyPair { re: &self.re - &o.re, im: &self.im - &o.im }
    }

    pub fn neg(&self) -> ComplexPolyPair {
        ComplexPolyPair { re: -&self.re, im: -&self.im }
    }

    pub fn mul(&self, o: &ComplexPolyPair) -> ComplexPolyPair {
        ComplexPolyPair {
            re: &self.re * &o.re - &self.im * &o.im,
            im: &self.re * &o.im + &self.im * &o.re,
        }
    }

    /// Multiply by a real polynomial.
    pub fn scale(&self, p: &ParamPoly) -> ComplexPolyPair {
        ComplexPolyPair { re: &self.re * p, im: &self.im * p }
    }

    pub fn norm_sqr(&self) -> ParamPoly {
        &self.re * &self.re + &self.im * &self.im
    }

    /// Wirtinger derivative of a complex-valued polynomial.
    pub fn wirtinger(&self, which: Wirtinger) -> ComplexPolyPair {
        let dr = wirtinger(&self.re, which);
        let di = wirtinger(&self.im, which);
        // ∂(re + i im) = ∂re + i ∂im
        ComplexPolyPair { re: &dr.re - &di.im, im: &dr.im + &di.re }
    }

    pub fn eval_f64(&self, p: &[f64; 4], params: [f64; 2]) -> Complex64 {
        Complex64::new(self.re.eval_f64(p, params), self.im.eval_f64(p, params))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wirtinger {
    Z1,
    Z1Bar,
    Z2,
    Z2Bar,
}

/// `∂/∂z₁ = ½(∂x − i∂y)` and its relatives, applied to a real polynomial.
pub fn wirtinger(p: &ParamPoly, which: Wirtinger) -> ComplexPolyPair {
    let half = rat(1, 2);
    let (re_var, im_var, sign) = match which {
        Wirtinger::Z1 => (Var::X, Var::Y, -1),
        Wirtinger::Z1Bar => (Var::X, Var::Y, 1),
        Wirtinger::Z2 => (Var::U, Var::V, -1),
        Wirtinger::Z2Bar => (Var::U, Var::V, 1),
    };
    let re = p.d(re_var).scale_by(&half);
    let im = p.d(im_var).scale_by(&(half * Rational::from_integer(sign.into())));
    ComplexPolyPair { re, im }
}

/// A complex direction field `(λ₁, λ₂)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentField {
    pub l1: ComplexPolyPair,
    pub l2: ComplexPolyPair,
}

impl TangentField {
    pub fn constant(l1: (Rational, Rational), l2: (Rational, Rational)) -> TangentField {
        TangentField {
            l1: ComplexPolyPair::new(ParamPoly::constant(l1.0), ParamPoly::constant(l1.1)),
            l2: ComplexPolyPair::new(ParamPoly::constant(l2.0), ParamPoly::constant(l2.1)),
        }
    }

    pub fn add(&self, o: &TangentField) -> TangentField {
        TangentField { l1: self.l1.add(&o.l1), l2: self.l2.add(&o.l2) }
    }

    pub fn scale(&self, p: &ParamPoly) -> TangentField {
        TangentField { l1: self.l1.scale(p), l2: self.l2.scale(p) }
    }

    pub fn eval_f64(&self, p: &[f64; 4], params: [f64; 2]) -> [Complex64; 2] {
        [self.l1.eval_f64(p, params), self.l2.eval_f64(p, params)]
    }
}

/// `λ_ρ = (ρ_{z₂}, −ρ_{z₁})`, unnormalized.
pub fn tangent_field(rho: &ParamPoly) -> TangentField {
    TangentField { l1: wirtinger(rho, Wirtinger::Z2), l2: wirtinger(rho, Wirtinger::Z1).neg() }
}

/// `ρ_{z₁}λ₁ + ρ_{z₂}λ₂`, which vanishes when `λ` is tangent to the level sets of `ρ`.
pub fn kernel_pairing(rho: &ParamPoly, lambda: &TangentField) -> ComplexPolyPair {
    wirtinger(rho, Wirtinger::Z1)
        .mul(&lambda.l1)
        .add(&wirtinger(rho, Wirtinger::Z2).mul(&lambda.l2))
}

/// The complex Hessian `H_{jk} = ∂²ρ/∂z_j∂z̄_k`: returns `(H₁₁, H₂₂, H₁₂)`,
/// with `H₂₁ = conj(H₁₂)` because `ρ` is real.
pub fn complex_hessian(rho: &ParamPoly) -> (ParamPoly, ParamPoly, ComplexPolyPair) {
    let h11 = wirtinger(rho, Wirtinger::Z1Bar).wirtinger(Wirtinger::Z1);
    let h22 = wirtinger(rho, Wirtinger::Z2Bar).wirtinger(Wirtinger::Z2);
    let h12 = wirtinger(rho, Wirtinger::Z2Bar).wirtinger(Wirtinger::Z1);
    debug_assert!(h11.im.is_zero() && h22.im.is_zero());
    (h11.re, h22.re, h12)
}

/// `Σ H_{jk} λ_j λ̄_k`, with the imaginary part checked to cancel.
pub fn levi_general(rho: &ParamPoly, lambda: &TangentField) -> Result<ParamPoly, LeviError> {
    let (h11, h22, h12) = complex_hessian(rho);
    let h21 = wirtinger(rho, Wirtinger::Z1Bar).wirtinger(Wirtinger::Z2);
    let l = [&lambda.l1, &lambda.l2];
    let h = [
        [ComplexPolyPair::real(h11), h12],
        [h21, ComplexPolyPair::real(h22)],
    ];
    let mut acc = ComplexPolyPair::zero();
    for j in 0..2 {
        for k in 0..2 {
            if h[j][k].is_zero() {
                continue;
            }
            acc = acc.add(&h[j][k].mul(&l[j].mul(&l[k].conj())));
        }
    }
    if !acc.im.is_zero() {
        return Err(LeviError::NonRealResult(acc.im.term_count()));
    }
    Ok(acc.re)
}

/// Complex assembly `ρ_{z₁z̄₁}|ρ_{z₂}|² + ρ_{z₂z̄₂}|ρ_{z₁}|² − 2Re(ρ_{z₂z̄₁}ρ_{z₁}ρ̄_{z₂})`.
pub fn levi_tangent_complex(rho: &ParamPoly) -> ParamPoly {
    let rz1 = wirtinger(rho, Wirtinger::Z1);
    let rz2 = wirtinger(rho, Wirtinger::Z2);
    let (h11, h22, _) = complex_hessian(rho);
    let h21 = wirtinger(rho, Wirtinger::Z1Bar).wirtinger(Wirtinger::Z2);
    let cross = h21.mul(&rz1.mul(&rz2.conj()));
    &h11 * &rz2.norm_sqr() + &h22 * &rz1.norm_sqr() - cross.re.scale_by(&rat(2, 1))
}

/// The same quantity assembled from real partial derivatives only.
pub fn levi_tangent_real(rho: &ParamPoly) -> ParamPoly {
    use Var::*;
    let (px, py, pu, pv) = (rho.d(X), rho.d(Y), rho.d(U), rho.d(V));
    let lap1 = px.d(X) + py.d(Y);
    let lap2 = pu.d(U) + pv.d(V);
    let mix_a = px.d(U) + py.d(V);
    let mix_b = py.d(U) - px.d(V);
    let t1 = &lap1 * &(&pu * &pu + &pv * &pv);
    let t2 = &lap2 * &(&px * &px + &py * &py);
    let t3 = &mix_a * &(&px * &pu + &py * &pv);
    let t4 = &mix_b * &(&pv * &px - &py * &pu);
    (t1 + t2).scale_by(&rat(1, 16)) + (t4 - t3).scale_by(&rat(1, 8))
}

/// `L(ρ; λ_ρ)`, computed by both assemblies and compared.
pub fn levi_tangent(rho: &ParamPoly) -> Result<ParamPoly, LeviError> {
    let c = levi_tangent_complex(rho);
    let r = levi_tangent_real(rho);
    if c != r {
        return Err(LeviError::MismatchBetweenFormulas((&c - &r).term_count()));
    }
    Ok(c)
}

/// Outcome of an exact identity check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CertStatus {
    Exact,
    Failed,
}

/// An exact polynomial identity `left = right`, with its residual.
#[derive(Clone, Debug)]
pub struct Certificate {
    pub name: String,
    pub left: ParamPoly,
    pub right: ParamPoly,
    pub residual: ParamPoly,
    pub status: CertStatus,
    pub notes: Vec<String>,
}

impl Certificate {
    pub fn compare(name: impl Into<String>, left: ParamPoly, right: ParamPoly) -> Certificate {
        let residual = &left - &right;
        let status = if residual.is_zero() { CertStatus::Exact } else { CertStatus::Failed };
        Certificate { name: name.into(), left, right, residual, status, notes: Vec::new() }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Certificate {
        self.notes.push(note.into());
        self
    }

    pub fn is_exact(&self) -> bool {
        self.status == CertStatus::Exact
    }
}

/// The derivative of `s` along a complex direction: `Σ s_{z_j} λ_j`.
pub fn directional(s: &ParamPoly, lambda: &TangentField) -> ComplexPolyPair {
    wirtinger(s, Wirtinger::Z1)
        .mul(&lambda.l1)
        .add(&wirtinger(s, Wirtinger::Z2).mul(&lambda.l2))
}

/// Checks `L(fᵐgⁿ; λ) = m fᵐ⁻¹gⁿ L(f;λ) + n fᵐgⁿ⁻¹ L(g;λ) + 2mn fᵐ⁻¹gⁿ⁻¹ Re(∂f·λ conj(∂g·λ))
/// + m(m−1) fᵐ⁻²gⁿ |∂f·λ|² + n(n−1) fᵐgⁿ⁻² |∂g·λ|²`.
pub fn leibniz_expansion_check(
    f: &ParamPoly,
    g: &ParamPoly,
    m: u32,
    n: u32,
    lambda: &TangentField,
) -> Result<Certificate, LeviError> {
    assert!(m >= 1 && n >= 1, "exponents must be positive");
    let left = levi_general(&(f.pow(m) * g.pow(n)), lambda)?;
    let int = |k: u32| Rational::from_integer(k.into());
    let df = directional(f, lambda);
    let dg = directional(g, lambda);
    let mixed = df.mul(&dg.conj()).re;
    let mut right = (f.pow(m - 1) * g.pow(n)) * levi_general(f, lambda)?.scale_by(&int(m))
        + (f.pow(m) * g.pow(n - 1)) * levi_general(g, lambda)?.scale_by(&int(n))
        + (f.pow(m - 1) * g.pow(n - 1)) * mixed.scale_by(&int(2 * m * n));
    if m >= 2 {
        right = right + (f.pow(m - 2) * g.pow(n)) * df.norm_sqr().scale_by(&int(m * (m - 1)));
    }
    if n >= 2 {
        right = right + (f.pow(m) * g.pow(n - 2)) * dg.norm_sqr().scale_by(&int(n * (n - 1)));
    }
    Ok(Certificate::compare(format!("leibniz expansion m={m} n={n}"), left, right))
}

/// Central-difference complex Hessian of a scalar field at `p`, as `(H₁₁, H₂₂, H₁₂)`.
pub fn finite_diff_complex_hessian<F>(f: &F, p: &[f64; 4], h: f64) -> (f64, f64, Complex64)
where
    F: Fn(&[f64; 4]) -> f64,
{
    let hess = finite_diff_hessian(f, p, h);
    complex_hessian_from_real(&hess)
}

/// `(H₁₁, H₂₂, H₁₂)` from a real Hessian in `(x, y, u, v)`.
pub fn complex_hessian_from_real(r: &[[f64; 4]; 4]) -> (f64, f64, Complex64) {
    let h11 = 0.25 * (r[0][0] + r[1][1]);
    let h22 = 0.25 * (r[2][2] + r[3][3]);
    let h12 = Complex64::new(0.25 * (r[0][2] + r[1][3]), 0.25 * (r[0][3] - r[1][2]));
    (h11, h22, h12)
}

/// `Σ H_{jk} λ_j λ̄_k` for a numeric complex Hessian.
pub fn hermitian_form(h: (f64, f64, Complex64), l: &[Complex64; 2]) -> f64 {
    let (h11, h22, h12) = h;
    h11 * l[0].norm_sqr() + h22 * l[1].norm_sqr() + 2.0 * (h12 * l[0] * l[1].conj()).re
}

pub fn finite_diff_hessian<F>(f: &F, p: &[f64; 4], h: f64) -> [[f64; 4]; 4]
where
    F: Fn(&[f64; 4]) -> f64,
{
    let shifted = |i: usize, si: f64, j: usize, sj: f64| {
        let mut q = *p;
        q[i] += si * h;
        q[j] += sj * h;
        f(&q)
    };
    let f0 = f(p);
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        out[i][i] = (shifted(i, 1.0, i, 0.0) - 2.0 * f0 + shifted(i, -1.0, i, 0.0)) / (h * h);
        for j in 0..i {
            let v = (shifted(i, 1.0, j, 1.0) - shifted(i, 1.0, j, -1.0) - shifted(i, -1.0, j, 1.0)
                + shifted(i, -1.0, j, -1.0))
                / (4.0 * h * h);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

/// Numeric Levi form along `λ`; `h` defaults to `10⁻⁴·max(1, |p|)` when `None`.
pub fn finite_diff_levi<F>(f: &F, p: &[f64; 4], lambda: &[Complex64; 2], h: Option<f64>) -> f64
where
    F: Fn(&[f64; 4]) -> f64,
{
    let h = h.unwrap_or_else(|| 1e-4 * crate::numeric::norm4(p).max(1.0));
    hermitian_form(finite_diff_complex_hessian(f, p, h), lambda)
}

/// Numeric `λ_ρ = (ρ_{z₂}, −ρ_{z₁})` from a real gradient.
pub fn tangent_from_gradient(g: &[f64; 4]) -> [Complex64; 2] {
    [Complex64::new(0.5 * g[2], -0.5 * g[3]), -Complex64::new(0.5 * g[0], -0.5 * g[1])]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal_form::{distance_data, CaseTag};
    use crate::poly::vars::*;

    fn big_v() -> ParamPoly {
        y().pow(2) + v().pow(2)
    }

    fn big_z() -> ParamPoly {
        x().pow(2) + u().pow(2)
    }

    fn rho0() -> ParamPoly {
        let (vv, zz) = (big_v(), big_z());
        zz.pow(2) * &vv + &zz * vv.pow(2)
    }

    #[test]
    fn wirtinger_examples() {
        let w = wirtinger(&big_v(), Wirtinger::Z1);
        assert_eq!(w, ComplexPolyPair::new(ParamPoly::zero(), -y()));
        let w = wirtinger(&(u().pow(2) + x().pow(2)), Wirtinger::Z2);
        assert_eq!(w, ComplexPolyPair::real(u()));
        assert!(wirtinger(&int(7), Wirtinger::Z2Bar).is_zero());
    }

    #[test]
    fn tangent_field_examples() {
        let lz = tangent_field(&big_z());
        assert_eq!(lz, TangentField { l1: ComplexPolyPair::real(u()), l2: ComplexPolyPair::real(-x()) });
        let lv = tangent_field(&big_v());
        assert_eq!(
            lv,
            TangentField {
                l1: ComplexPolyPair::new(ParamPoly::zero(), -v()),
                l2: ComplexPolyPair::new(ParamPoly::zero(), y()),
            }
        );
        let (vv, zz) = (big_v(), big_z());
        let om = &vv + &zz;
        let expect = lz.scale(&((&zz + &om) * &vv)).add(&lv.scale(&((&vv + &om) * &zz)));
        assert_eq!(tangent_field(&rho0()), expect);
    }

    #[test]
    fn kernel_identity_on_corpus() {
        let mut corpus = vec![big_v(), big_z(), rho0()];
        for case in CaseTag::ALL {
            let dd = distance_data(case);
            corpus.push(dd.d_m());
            corpus.push(dd.d_m() * &dd.d_n);
        }
        for rho in &corpus {
            assert!(kernel_pairing(rho, &tangent_field(rho)).is_zero());
        }
    }

    #[test]
    fn levi_general_examples() {
        let lam = TangentField::constant((rat(3, 1), rat(-1, 2)), (rat(2, 7), rat(5, 1)));
        let norm = rat(9, 1) + rat(1, 4) + rat(4, 49) + rat(25, 1);
        let half = ParamPoly::constant(norm * rat(1, 2));
        assert_eq!(levi_general(&big_v(), &lam).unwrap(), half);
        assert_eq!(levi_general(&big_z(), &lam).unwrap(), half);
        let e1 = TangentField::constant((rat(1, 1), rat(0, 1)), (rat(0, 1), rat(0, 1)));
        assert_eq!(levi_general(&x().pow(2), &e1).unwrap(), ParamPoly::constant(rat(1, 2)));
    }

    #[test]
    fn levi_of_z_along_rho0_field() {
        let (vv, zz) = (big_v(), big_z());
        let om = &vv + &zz;
        let lhs = levi_general(&big_z(), &tangent_field(&rho0())).unwrap();
        let rhs = (&vv * &zz * &om * (int(5) * &vv * &zz + om.pow(2))).scale_by(&rat(1, 2));
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn self_constants() {
        let dn = big_v();
        assert_eq!(levi_tangent(&dn).unwrap(), dn.scale_by(&rat(1, 2)));
        for case in CaseTag::ALL {
            let dd = distance_data(case);
            let dm = dd.d_m();
            assert_eq!(levi_tangent(&dm).unwrap(), &dd.levi_constant * &dm, "{case}");
        }
    }

    #[test]
    fn assemblies_agree_on_rho0() {
        let l = levi_tangent(&rho0()).unwrap();
        assert_eq!(l.eval(&[rat(1, 1), rat(1, 1), rat(0, 1), rat(0, 1)], &[rat(0, 1), rat(0, 1)]), rat(54, 1));
    }

    #[test]
    fn leibniz_examples() {
        let lam = tangent_field(&rho0());
        assert!(leibniz_expansion_check(&big_z(), &big_v(), 2, 1, &lam).unwrap().is_exact());
        let dn = big_v();
        assert!(leibniz_expansion_check(&dn, &dn, 1, 1, &lam).unwrap().is_exact());
    }

    #[test]
    fn finite_difference_examples() {
        let r = rho0().to_float(0.0, 0.0);
        let jet = crate::numeric::FloatJet::new(r.clone());
        let p = [1.0, 1.0, 0.0, 0.0];
        let (_, g, _) = jet.eval(&p);
        let lam = tangent_from_gradient(&g);
        let val = finite_diff_levi(&|q: &[f64; 4]| r.eval(q), &p, &lam, None);
        assert!((val - 54.0).abs() < 54.0 * 1e-4, "{val}");

        let dn = big_v().to_float(0.0, 0.0);
        let e1 = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        let val = finite_diff_levi(&|q: &[f64; 4]| dn.eval(q), &[0.3, -2.0, 1.1, 0.7], &e1, None);
        assert!((val - 0.5).abs() < 1e-6);
    }
}
