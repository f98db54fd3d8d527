//! The Levi-form algebra of `ρ = d_M^{α+1}d_N^β + d_M^α d_N^{β+1}`: exact
//! factorization, the closed form of the parameter-free part, its positivity
//! certificate, the small-entry bound, and sampled positivity scans.

use std::collections::BTreeMap;

use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::exec::Execution;
use crate::levi::{self, Certificate, LeviError};
use crate::normal_form::{distance_data, CaseTag, DistanceData, NormalForm};
use crate::poly::{rat, DenomFactor, DenomToken, ParamPoly, PolyError, Rational, SubstitutionTable, Var};
use crate::sphere::{self, SphereExtremum};

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("exponents must satisfy alpha, beta >= 1")]
    InvalidExponents,
    #[error("Levi form is not divisible by the distance factors")]
    NotDivisible(#[source] PolyError),
    #[error(transparent)]
    Levi(#[from] LeviError),
    #[error("polynomials have degrees {q:?} and {r:?}; need equal even homogeneous degrees")]
    DegreeMismatch { q: Option<u32>, r: Option<u32> },
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Entries of `A`: either kept symbolic or fixed to exact rationals.
#[derive(Clone, Debug, PartialEq)]
pub enum Params {
    Symbolic,
    Fixed(Rational, Rational),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RhoSpec {
    pub case: CaseTag,
    pub params: Params,
    pub alpha: u32,
    pub beta: u32,
}

impl RhoSpec {
    pub fn symbolic(case: CaseTag, alpha: u32, beta: u32) -> RhoSpec {
        RhoSpec { case, params: Params::Symbolic, alpha, beta }
    }

    pub fn fixed(nf: &NormalForm, alpha: u32, beta: u32) -> RhoSpec {
        RhoSpec { case: nf.case, params: Params::Fixed(nf.a.clone(), nf.d.clone()), alpha, beta }
    }

    fn validate(&self) -> Result<(), CertifyError> {
        if self.alpha == 0 || self.beta == 0 {
            return Err(CertifyError::InvalidExponents);
        }
        Ok(())
    }

    /// Distance data with the parameters applied; the token stays symbolic
    /// only for [`Params::Symbolic`].
    pub fn distance_data(&self) -> DistanceData {
        let dd = distance_data(self.case);
        match &self.params {
            Params::Symbolic => dd,
            Params::Fixed(a, d) => dd.specialize(a, d),
        }
    }
}

/// `d_M^{α+1}d_N^β + d_M^α d_N^{β+1}` with `d_M` carrying its denominator token.
pub fn build_rho(spec: &RhoSpec) -> Result<ParamPoly, CertifyError> {
    spec.validate()?;
    let dd = spec.distance_data();
    Ok(rho_from(&dd.d_m(), &dd.d_n, spec.alpha, spec.beta))
}

fn rho_from(s: &ParamPoly, t: &ParamPoly, alpha: u32, beta: u32) -> ParamPoly {
    let common = s.pow(alpha) * t.pow(beta);
    &common * &(s + t)
}

/// `ρ` and its gradient vanish at a generic point of `M` and of `N`.
pub fn zero_set_certificates(spec: &RhoSpec) -> Result<Vec<Certificate>, CertifyError> {
    let rho = build_rho(spec)?;
    let dd = spec.distance_data();
    let (s, t) = (ParamPoly::var(Var::X), ParamPoly::var(Var::U));
    let on_m: [ParamPoly; 4] = std::array::from_fn(|i| &s * &dd.m_basis[0][i] + &t * &dd.m_basis[1][i]);
    let on_n = [ParamPoly::var(Var::X), ParamPoly::zero(), ParamPoly::var(Var::U), ParamPoly::zero()];
    let mut out = Vec::new();
    for (label, pt) in [("M", &on_m), ("N", &on_n)] {
        let mut fields = vec![("rho".to_string(), rho.clone())];
        for v in Var::COORDS {
            fields.push((format!("d rho/d{}", v.name()), rho.d(v)));
        }
        for (name, f) in fields {
            out.push(Certificate::compare(format!("{name} vanishes on {label}"), f.compose(pt), ParamPoly::zero()));
        }
    }
    Ok(out)
}

/// `L(d; λ_d) = c·d` for `d_N` and for the case's `d_M`.
pub fn self_constant_certificates(case: CaseTag) -> Result<[Certificate; 2], CertifyError> {
    let dd = distance_data(case);
    let dm = dd.d_m();
    Ok([
        Certificate::compare("L(d_N) = 1/2 d_N", levi::levi_tangent(&dd.d_n)?, dd.d_n.scale_by(&rat(1, 2))),
        Certificate::compare(format!("L(d_M) = c_M d_M ({case})"), levi::levi_tangent(&dm)?, &dd.levi_constant * &dm),
    ])
}

/// The complex-derivative and real-partials assemblies of `L(ρ; λ_ρ)` agree.
pub fn assembly_certificate(rho: &ParamPoly) -> Certificate {
    Certificate::compare(
        "complex assembly equals real-partials assembly",
        levi::levi_tangent_complex(rho),
        levi::levi_tangent_real(rho),
    )
}

/// `k_clear · L(ρ; λ_ρ) = n_M^{3α−2} d_N^{3β−2} P`, with `P = Q + R`.
#[derive(Clone, Debug)]
pub struct FactoredLevi {
    pub spec: RhoSpec,
    /// `L(ρ; λ_ρ)` including its denominator token.
    pub levi: ParamPoly,
    /// Token cleared from `L`: `k_M^{3α+3}`.
    pub clearing: DenomToken,
    /// `k` when `d_M` keeps its own denominator: `k_M^5`.
    pub k: DenomToken,
    /// Denominator factors that also divide every coefficient of `P`.
    pub content: DenomToken,
    pub exponents: (u32, u32),
    pub p: ParamPoly,
    pub q: ParamPoly,
    pub r: ParamPoly,
    pub degree: Option<u32>,
    pub factorization: Certificate,
}

impl FactoredLevi {
    /// Smallest power product `k'` with `k'·L = d_M^{3α−2}d_N^{3β−2}·P'` for
    /// a polynomial `P'`.
    pub fn minimal_k(&self) -> DenomToken {
        self.k.checked_sub(self.content).unwrap_or(self.k)
    }
}

pub fn extract_p(spec: &RhoSpec) -> Result<FactoredLevi, CertifyError> {
    spec.validate()?;
    let sym = distance_data(spec.case);
    let dd = spec.distance_data();
    let rho = rho_from(&dd.d_m(), &dd.d_n, spec.alpha, spec.beta);
    let levi = levi::levi_tangent(&rho)?;
    let ex = (3 * spec.alpha - 2, 3 * spec.beta - 2);
    let clearing = sym.k_m.scaled(3 * spec.alpha + 3);
    let cleared = match &spec.params {
        Params::Symbolic => levi.numerator_over(clearing).ok_or_else(|| {
            CertifyError::Poly(PolyError::NonTrivialDenominator(levi.denom()))
        })?,
        Params::Fixed(a, d) => levi.scale_by(&clearing.eval(a, d)),
    };
    let divisor = dd.n_m.pow(ex.0) * dd.d_n.pow(ex.1);
    let p = cleared.exact_divide(&divisor).map_err(CertifyError::NotDivisible)?;
    let factorization =
        Certificate::compare("cleared Levi form equals n_M^(3a-2) d_N^(3b-2) P", cleared, &divisor * &p);
    let (q, r) = p.split_param_part()?;
    let content = match spec.params {
        Params::Symbolic => param_content(&p),
        Params::Fixed(..) => DenomToken::TRIVIAL,
    };
    let degree = p.metrics().homogeneous_degree;
    Ok(FactoredLevi {
        spec: spec.clone(),
        levi,
        clearing,
        k: sym.k_m.scaled(5),
        content,
        exponents: ex,
        p,
        q,
        r,
        degree,
        factorization,
    })
}

fn param_content(p: &ParamPoly) -> DenomToken {
    let mut out = DenomToken::TRIVIAL;
    let mut rest = p.clone();
    for f in DenomFactor::ALL {
        let fp = f.poly();
        while let Ok(next) = rest.exact_divide(&fp) {
            rest = next;
            out = out.product(DenomToken::factor(f, 1));
        }
    }
    out
}

fn subs(name: &str) -> ParamPoly {
    SubstitutionTable::standard().get(name).cloned().expect("standard binding")
}

/// `(Q, P₀)` with `P₀ = (5VZ + ω²)(2ZV + ω²) − 12Δ²(ω² − VZ)` and `Q = ½ωP₀`.
pub fn closed_form_q() -> (ParamPoly, ParamPoly) {
    let (vv, zz, om, de) = (subs("V"), subs("Z"), subs("omega"), subs("Delta"));
    let vz = &vv * &zz;
    let om2 = om.pow(2);
    let p0 = (vz.scale_by(&rat(5, 1)) + &om2) * (vz.scale_by(&rat(2, 1)) + &om2)
        - (de.pow(2) * (&om2 - &vz)).scale_by(&rat(12, 1));
    let q = (&om * &p0).scale_by(&rat(1, 2));
    (q, p0)
}

/// The positivity identity for `P₀` and its two auxiliary identities.
pub fn sos_certificates() -> [Certificate; 3] {
    let (vv, zz, om, de) = (subs("V"), subs("Z"), subs("omega"), subs("Delta"));
    let (_, p0) = closed_form_q();
    let vz = &vv * &zz;
    let om2 = om.pow(2);
    let x = ParamPoly::var(Var::X);
    let y = ParamPoly::var(Var::Y);
    let u = ParamPoly::var(Var::U);
    let v = ParamPoly::var(Var::V);
    let lagrange = (&x * &y + &u * &v).pow(2);
    let shifted = (&vv + &zz.scale_by(&rat(1, 2))).pow(2) + zz.pow(2).scale_by(&rat(3, 4));
    let main_rhs = (&vz - &om2.scale_by(&rat(5, 44))).pow(2).scale_by(&rat(22, 1))
        + om2.pow(2).scale_by(&rat(63, 88))
        + ((&om2 - &vz) * (&vz - de.pow(2))).scale_by(&rat(12, 1));
    [
        Certificate::compare("P0 = 22(VZ - 5/44 w^2)^2 + 63/88 w^4 + 12(w^2 - VZ)(VZ - D^2)", p0, main_rhs)
            .with_note("every summand is a product of nonnegative factors, so P0 >= 63/88 |p|^8"),
        Certificate::compare("VZ - D^2 = (xy + uv)^2", &vz - &de.pow(2), lagrange),
        Certificate::compare("w^2 - VZ = (V + Z/2)^2 + 3/4 Z^2", &om2 - &vz, shifted),
    ]
}

pub fn sos_certificate_p0() -> Certificate {
    let [main, ..] = sos_certificates();
    main
}

/// Outcome of the exact spot check of `P₀ ≥ 63/88|p|⁸` and `Q ≥ 63/176|p|¹⁰`.
#[derive(Clone, Debug, Serialize)]
pub struct LowerBoundSpotCheck {
    pub points: usize,
    pub p0_failures: usize,
    pub q_failures: usize,
}

pub fn lower_bound_spot_check(n: usize, seed: u64) -> LowerBoundSpotCheck {
    let (q, p0) = closed_form_q();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zero = [Rational::zero(), Rational::zero()];
    let (mut p0_failures, mut q_failures) = (0, 0);
    for _ in 0..n {
        let pt: [Rational; 4] = std::array::from_fn(|_| rat(rng.gen_range(-50..=50), rng.gen_range(1..=20)));
        let r2: Rational = pt.iter().map(|c| c * c).sum();
        if r2.is_zero() {
            continue;
        }
        if p0.eval(&pt, &zero) < rat(63, 88) * num_traits::pow(r2.clone(), 4) {
            p0_failures += 1;
        }
        if q.eval(&pt, &zero) < rat(63, 176) * num_traits::pow(r2, 5) {
            q_failures += 1;
        }
    }
    LowerBoundSpotCheck { points: n, p0_failures, q_failures }
}

/// Small-entry bound `δ = 63/(176·N₀·N₁)` under which `Q ≥ |R|`.
#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub case: CaseTag,
    /// Coordinate monomials `x^α` of `R` with nonzero coefficient `S_α(a, d)`.
    pub n0: usize,
    /// Terms of `R` counted over all six variables.
    pub n0_ungrouped: usize,
    /// `N_α` per coordinate monomial, as `(monomial, value)`.
    pub n_alpha: Vec<(String, String)>,
    pub n1: String,
    pub delta: String,
    pub delta_f64: f64,
    /// Every term of `R` has positive degree in `(a, d)`, so
    /// `|S_α(a, d)| ≤ N_α max(|a|, |d|)` whenever `|a|, |d| ≤ 1`.
    pub domination_checked: bool,
    /// `R ≡ 0`: any entries work in this specialization.
    pub r_vanishes: bool,
    #[serde(skip)]
    pub delta_exact: Rational,
}

pub fn parameter_bound(fl: &FactoredLevi) -> BoundReport {
    let metrics = fl.r.metrics();
    let r_vanishes = fl.r.is_zero();
    let n0 = metrics.term_count;
    let n1 = metrics.max_abs_sum();
    let delta = if r_vanishes {
        Rational::zero()
    } else {
        rat(63, 176) / (Rational::from_integer(n0.into()) * &n1)
    };
    let domination_checked = fl.r.terms().all(|(m, _)| m.has_params())
        && fl.r.coord_degree() == Some(10)
        && metrics.homogeneous_degree == Some(10);
    BoundReport {
        case: fl.spec.case,
        n0,
        n0_ungrouped: metrics.raw_term_count,
        n_alpha: metrics
            .coeff_abs_sums
            .iter()
            .map(|(m, s)| (ParamPoly::monomial(*m, rat(1, 1)).to_string(), s.to_string()))
            .collect(),
        n1: n1.to_string(),
        delta: delta.to_string(),
        delta_f64: delta.to_f64().unwrap_or(0.0),
        domination_checked: domination_checked || r_vanishes,
        r_vanishes,
        delta_exact: delta,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PositivityScan {
    pub a: f64,
    pub d: f64,
    pub min: SphereExtremum,
    pub all_positive: bool,
}

/// Sign of a homogeneous `P` at fixed `(a, d)`, sampled on `S³`.
pub fn positivity_scan(p: &ParamPoly, a: f64, d: f64, n: usize, seed: u64, exec: Execution) -> PositivityScan {
    let fp = p.to_float(a, d);
    let min = sphere::minimize_on_sphere(&|q: &[f64; 4]| fp.eval(q), n, seed, exec);
    let all_positive = min.value > 0.0 && min.sampled > 0.0;
    PositivityScan { a, d, min, all_positive }
}

/// `min (Q − |R|)` over sphere samples at fixed `(a, d)`.
#[derive(Clone, Debug, Serialize)]
pub struct DominationScan {
    pub a: f64,
    pub d: f64,
    pub min_gap: f64,
    pub at: [f64; 4],
    /// `max Q` over the samples, the natural scale for the gap.
    pub scale: f64,
    pub samples: usize,
}

pub fn domination_scan(
    q: &ParamPoly,
    r: &ParamPoly,
    a: f64,
    d: f64,
    n: usize,
    seed: u64,
    exec: Execution,
) -> DominationScan {
    let fq = q.to_float(a, d);
    let fr = r.to_float(a, d);
    let pts = sphere::sphere_points(n, seed);
    let vals = exec.map_slice(&pts, |p| {
        let qv = fq.eval(p);
        (qv - fr.eval(p).abs(), qv)
    });
    let (mut min_gap, mut at, mut scale) = (f64::INFINITY, [0.0; 4], 0.0f64);
    for (p, (gap, qv)) in pts.iter().zip(&vals) {
        scale = scale.max(*qv);
        if *gap < min_gap {
            min_gap = *gap;
            at = *p;
        }
    }
    DominationScan { a, d, min_gap, at, scale, samples: pts.len() }
}

/// Sampled `ε₀ = c / C` with `c = min Q`, `C = max |R|` on the sphere.
#[derive(Clone, Debug, Serialize)]
pub struct Epsilon0 {
    pub c: f64,
    pub big_c: f64,
    /// `None` stands for `+∞` when `R ≡ 0`.
    pub eps0: Option<f64>,
    pub sampled_estimate: bool,
}

pub fn epsilon0(
    q: &ParamPoly,
    r: &ParamPoly,
    params: [f64; 2],
    n: usize,
    seed: u64,
    exec: Execution,
) -> Result<Epsilon0, CertifyError> {
    let dq = q.metrics().homogeneous_degree;
    let dr = r.metrics().homogeneous_degree;
    let even_match = matches!(dq, Some(k) if k % 2 == 0) && (r.is_zero() || dq == dr);
    if !even_match {
        return Err(CertifyError::DegreeMismatch { q: dq, r: dr });
    }
    let fq = q.to_float(params[0], params[1]);
    let c = sphere::minimize_on_sphere(&|p: &[f64; 4]| fq.eval(p), n, seed, exec).value;
    if r.is_zero() {
        return Ok(Epsilon0 { c, big_c: 0.0, eps0: None, sampled_estimate: true });
    }
    let fr = r.to_float(params[0], params[1]);
    let big_c = sphere::maximize_on_sphere(&|p: &[f64; 4]| fr.eval(p).abs(), n, seed, exec).value;
    Ok(Epsilon0 { c, big_c, eps0: Some(c / big_c), sampled_estimate: true })
}

/// Degree of `P` for small `(α, β)` at fixed generic entries.
pub fn degree_survey(case: CaseTag, max_exp: u32) -> BTreeMap<(u32, u32), Option<u32>> {
    let (a, d) = (rat(1, 3), rat(1, 5));
    let mut out = BTreeMap::new();
    for alpha in 1..=max_exp {
        for beta in 1..=max_exp {
            let spec = RhoSpec { case, params: Params::Fixed(a.clone(), d.clone()), alpha, beta };
            let deg = extract_p(&spec).ok().and_then(|f| f.degree);
            out.insert((alpha, beta), deg);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::vars::*;

    fn r4(v: [i64; 4]) -> [Rational; 4] {
        v.map(|c| rat(c, 1))
    }

    #[test]
    fn rho_examples() {
        let spec = RhoSpec { case: CaseTag::Diag, params: Params::Fixed(rat(0, 1), rat(0, 1)), alpha: 1, beta: 1 };
        let zz = x().pow(2) + u().pow(2);
        let vv = v().pow(2) + y().pow(2);
        assert_eq!(build_rho(&spec).unwrap(), zz.pow(2) * &vv + &zz * vv.pow(2));
        let spec12 = RhoSpec { beta: 2, ..spec.clone() };
        assert_eq!(build_rho(&spec12).unwrap(), zz.pow(2) * vv.pow(2) + &zz * vv.pow(3));
        for case in CaseTag::ALL {
            let rho = build_rho(&RhoSpec::symbolic(case, 1, 1)).unwrap();
            let on_n = rho.eval(&[rat(3, 2), rat(0, 1), rat(-7, 3), rat(0, 1)], &[rat(2, 5), rat(1, 3)]);
            assert!(on_n.is_zero());
            assert_eq!(rho.metrics().homogeneous_degree, Some(6));
        }
        assert!(matches!(build_rho(&RhoSpec::symbolic(CaseTag::Diag, 0, 1)), Err(CertifyError::InvalidExponents)));
    }

    #[test]
    fn zero_set_of_rho() {
        for case in CaseTag::ALL {
            for c in zero_set_certificates(&RhoSpec::symbolic(case, 1, 1)).unwrap() {
                assert!(c.is_exact(), "{case}: {}", c.name);
            }
        }
    }

    #[test]
    fn base_identity_and_closed_form() {
        let fl = extract_p(&RhoSpec { case: CaseTag::Diag, params: Params::Fixed(rat(0, 1), rat(0, 1)), alpha: 1, beta: 1 })
            .unwrap();
        assert!(fl.r.is_zero());
        let (q, p0) = closed_form_q();
        assert_eq!(fl.q, q);
        assert_eq!(p0.metrics().homogeneous_degree, Some(8));
        assert_eq!(q.metrics().homogeneous_degree, Some(10));
        let zero = [rat(0, 1), rat(0, 1)];
        assert_eq!(q.eval(&r4([1, 0, 0, 0]), &zero), rat(1, 2));
        assert_eq!(p0.eval(&r4([1, 0, 0, 0]), &zero), rat(1, 1));
        assert_eq!(q.eval(&r4([1, 1, 0, 0]), &zero), rat(54, 1));
        assert_eq!(p0.eval(&r4([1, 1, 0, 0]), &zero), rat(54, 1));
    }

    #[test]
    fn sos_identities_hold() {
        for c in sos_certificates() {
            assert!(c.is_exact(), "{}", c.name);
        }
        let s = lower_bound_spot_check(50, 1);
        assert_eq!((s.p0_failures, s.q_failures), (0, 0));
    }

    #[test]
    fn symbolic_factorization_per_case() {
        // (P terms, N0, N0 over all six variables, N1, delta), matching an independent computer-algebra run.
        let expected = [
            (CaseTag::Diag, 4370, 146, 4298, "741312", "7/2116528128"),
            (CaseTag::ComplexEig, 1884, 266, 1812, "120492", "1/89538944"),
            (CaseTag::NonDiag, 12362, 286, 12290, "52359342", "3/125502849472"),
        ];
        for (case, terms, n0, n0_raw, n1, delta) in expected {
            let fl = extract_p(&RhoSpec::symbolic(case, 1, 1)).unwrap();
            let b = parameter_bound(&fl);
            assert!(fl.factorization.is_exact());
            assert_eq!(fl.degree, Some(10));
            assert_eq!(fl.p.specialize(&rat(0, 1), &rat(0, 1)), closed_form_q().0);
            assert_eq!((fl.p.term_count(), b.n0, b.n0_ungrouped), (terms, n0, n0_raw), "{case}");
            assert_eq!((b.n1.as_str(), b.delta.as_str()), (n1, delta), "{case}");
        }
    }

    #[test]
    fn epsilon0_examples() {
        let qq = (x().pow(2) + y().pow(2) + u().pow(2) + v().pow(2)).pow(2);
        let e = epsilon0(&qq, &x().pow(4), [0.0, 0.0], 2000, 1, Execution::Sequential).unwrap();
        assert!((e.c - 1.0).abs() < 1e-9 && (e.big_c - 1.0).abs() < 1e-6);
        let e = epsilon0(&qq, &ParamPoly::zero(), [0.0, 0.0], 100, 1, Execution::Sequential).unwrap();
        assert_eq!(e.eps0, None);
        assert!(matches!(
            epsilon0(&qq, &x().pow(2), [0.0, 0.0], 10, 1, Execution::Sequential),
            Err(CertifyError::DegreeMismatch { .. })
        ));
    }
}
