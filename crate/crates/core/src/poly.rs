//! Exact polynomials in the real coordinates `x, y, u, v` whose coefficients
//! are rational polynomials in the matrix parameters `a, d`.
//!
//! A [`ParamPoly`] is a numerator table over `Q[x, y, u, v, a, d]` divided by a
//! [`DenomToken`], a power product of the fixed factors
//! `1+a², 1+d², 1+a²+d², (1+a²)²+d²`. Every factor is strictly positive for real
//! `(a, d)`, so the sign of a value is the sign of its numerator.
//!
//! Internally the numerator is stored as integer coefficients over one common
//! positive integer `scale`, which keeps multiplication on the integer fast path.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::hash::BuildHasherDefault;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rustc_hash::FxHasher;
use thiserror::Error;

pub type Rational = BigRational;

type FxMap<K, V> = std::collections::HashMap<K, V, BuildHasherDefault<FxHasher>>;

/// Polynomial variables. The first four are coordinates, the last two are
/// the matrix parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    X,
    Y,
    U,
    V,
    A,
    D,
}

impl Var {
    pub const ALL: [Var; 6] = [Var::X, Var::Y, Var::U, Var::V, Var::A, Var::D];
    pub const COORDS: [Var; 4] = [Var::X, Var::Y, Var::U, Var::V];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_coordinate(self) -> bool {
        self.index() < 4
    }

    pub fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
            Var::U => "u",
            Var::V => "v",
            Var::A => "a",
            Var::D => "d",
        }
    }

    fn from_name(s: &str) -> Option<Var> {
        Var::ALL.into_iter().find(|v| v.name() == s)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

const FIELD_BITS: u32 = 9;
const FIELD_MASK: u64 = (1 << FIELD_BITS) - 1;
const DEG_SHIFT: u32 = 6 * FIELD_BITS;
const MAX_DEGREE: u32 = (1 << FIELD_BITS) - 1;

/// A monomial `x^i y^j u^k v^l a^m d^n`, packed so that integer order on the
/// key is graded lexicographic order with `x > y > u > v > a > d`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Monomial(u64);

impl Monomial {
    pub const ONE: Monomial = Monomial(0);

    pub fn new(exps: [u32; 6]) -> Monomial {
        let deg: u32 = exps.iter().sum();
        assert!(deg <= MAX_DEGREE, "monomial degree {deg} exceeds {MAX_DEGREE}");
        let mut key = (deg as u64) << DEG_SHIFT;
        for (i, e) in exps.iter().enumerate() {
            key |= (*e as u64) << Self::shift(i);
        }
        Monomial(key)
    }

    pub fn var(v: Var, e: u32) -> Monomial {
        let mut exps = [0; 6];
        exps[v.index()] = e;
        Monomial::new(exps)
    }

    fn shift(i: usize) -> u32 {
        (5 - i as u32) * FIELD_BITS
    }

    pub fn exp(self, v: Var) -> u32 {
        ((self.0 >> Self::shift(v.index())) & FIELD_MASK) as u32
    }

    pub fn exps(self) -> [u32; 6] {
        let mut out = [0; 6];
        for (i, e) in out.iter_mut().enumerate() {
            *e = ((self.0 >> Self::shift(i)) & FIELD_MASK) as u32;
        }
        out
    }

    /// Total degree over all six variables.
    pub fn degree(self) -> u32 {
        (self.0 >> DEG_SHIFT) as u32
    }

    /// Degree in the coordinates only.
    pub fn coord_degree(self) -> u32 {
        let e = self.exps();
        e[0] + e[1] + e[2] + e[3]
    }

    pub fn coord_part(self) -> Monomial {
        let mut e = self.exps();
        e[4] = 0;
        e[5] = 0;
        Monomial::new(e)
    }

    pub fn param_part(self) -> Monomial {
        let e = self.exps();
        Monomial::new([0, 0, 0, 0, e[4], e[5]])
    }

    pub fn has_params(self) -> bool {
        let e = self.exps();
        e[4] + e[5] > 0
    }

    pub fn mul(self, other: Monomial) -> Monomial {
        let deg = self.degree() + other.degree();
        assert!(deg <= MAX_DEGREE, "monomial degree {deg} exceeds {MAX_DEGREE}");
        // No field can carry into its neighbour once the total degree fits.
        Monomial(self.0 + other.0)
    }

    pub fn divides(self, other: Monomial) -> bool {
        let (a, b) = (self.exps(), other.exps());
        a.iter().zip(b.iter()).all(|(x, y)| x <= y)
    }

    /// `other / self`; caller checks `self.divides(other)`.
    fn quotient_of(self, other: Monomial) -> Monomial {
        Monomial(other.0 - self.0)
    }

    fn write_factors(self, f: &mut impl fmt::Write) -> Result<bool, fmt::Error> {
        let mut first = true;
        for v in Var::ALL {
            let e = self.exp(v);
            if e == 0 {
                continue;
            }
            if !first {
                f.write_char('*')?;
            }
            first = false;
            if e == 1 {
                f.write_str(v.name())?;
            } else {
                write!(f, "{}^{}", v.name(), e)?;
            }
        }
        Ok(!first)
    }
}

impl fmt::Debug for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        if !self.write_factors(&mut s)? {
            s.push('1');
        }
        f.write_str(&s)
    }
}

/// The fixed positive denominator factors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DenomFactor {
    /// `1 + a²`
    OnePlusA2,
    /// `1 + d²`
    OnePlusD2,
    /// `1 + a² + d²`
    OnePlusA2D2,
    /// `(1 + a²)² + d²`
    JordanNorm,
}

impl DenomFactor {
    pub const ALL: [DenomFactor; 4] = [
        DenomFactor::OnePlusA2,
        DenomFactor::OnePlusD2,
        DenomFactor::OnePlusA2D2,
        DenomFactor::JordanNorm,
    ];

    pub fn label(self) -> &'static str {
        match self {
            DenomFactor::OnePlusA2 => "1+a^2",
            DenomFactor::OnePlusD2 => "1+d^2",
            DenomFactor::OnePlusA2D2 => "1+a^2+d^2",
            DenomFactor::JordanNorm => "(1+a^2)^2+d^2",
        }
    }

    /// The factor as a polynomial in `a, d`.
    pub fn poly(self) -> ParamPoly {
        let one = ParamPoly::one();
        let a2 = ParamPoly::var(Var::A).pow(2);
        let d2 = ParamPoly::var(Var::D).pow(2);
        match self {
            DenomFactor::OnePlusA2 => &one + &a2,
            DenomFactor::OnePlusD2 => &one + &d2,
            DenomFactor::OnePlusA2D2 => &(&one + &a2) + &d2,
            DenomFactor::JordanNorm => &(&one + &a2).pow(2) + &d2,
        }
    }

    pub fn eval(self, a: &Rational, d: &Rational) -> Rational {
        let one = Rational::one();
        let a2 = a * a;
        let d2 = d * d;
        match self {
            DenomFactor::OnePlusA2 => one + a2,
            DenomFactor::OnePlusD2 => one + d2,
            DenomFactor::OnePlusA2D2 => one + a2 + d2,
            DenomFactor::JordanNorm => {
                let s = one + a2;
                &s * &s + d2
            }
        }
    }

    pub fn eval_f64(self, a: f64, d: f64) -> f64 {
        match self {
            DenomFactor::OnePlusA2 => 1.0 + a * a,
            DenomFactor::OnePlusD2 => 1.0 + d * d,
            DenomFactor::OnePlusA2D2 => 1.0 + a * a + d * d,
            DenomFactor::JordanNorm => (1.0 + a * a).powi(2) + d * d,
        }
    }
}

/// Exponent vector over [`DenomFactor::ALL`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DenomToken(pub [u32; 4]);

impl DenomToken {
    pub const TRIVIAL: DenomToken = DenomToken([0; 4]);

    pub fn factor(f: DenomFactor, e: u32) -> DenomToken {
        let mut t = [0; 4];
        t[f as usize] = e;
        DenomToken(t)
    }

    pub fn is_trivial(self) -> bool {
        self.0 == [0; 4]
    }

    pub fn lcm(self, other: DenomToken) -> DenomToken {
        let mut t = self.0;
        for (x, y) in t.iter_mut().zip(other.0) {
            *x = (*x).max(y);
        }
        DenomToken(t)
    }

    pub fn product(self, other: DenomToken) -> DenomToken {
        let mut t = self.0;
        for (x, y) in t.iter_mut().zip(other.0) {
            *x += y;
        }
        DenomToken(t)
    }

    pub fn scaled(self, n: u32) -> DenomToken {
        DenomToken(self.0.map(|e| e * n))
    }

    /// Componentwise `self - other`, or `None` if some exponent would go negative.
    pub fn checked_sub(self, other: DenomToken) -> Option<DenomToken> {
        let mut t = [0; 4];
        for i in 0..4 {
            t[i] = self.0[i].checked_sub(other.0[i])?;
        }
        Some(DenomToken(t))
    }

    pub fn divides(self, other: DenomToken) -> bool {
        other.checked_sub(self).is_some()
    }

    /// The power product as a polynomial in `a, d`.
    pub fn poly(self) -> ParamPoly {
        let mut out = ParamPoly::one();
        for f in DenomFactor::ALL {
            let e = self.0[f as usize];
            if e > 0 {
                out = &out * &f.poly().pow(e);
            }
        }
        out
    }

    pub fn eval(self, a: &Rational, d: &Rational) -> Rational {
        let mut out = Rational::one();
        for f in DenomFactor::ALL {
            let e = self.0[f as usize];
            if e > 0 {
                out *= num_traits::pow(f.eval(a, d), e as usize);
            }
        }
        out
    }

    pub fn eval_f64(self, a: f64, d: f64) -> f64 {
        DenomFactor::ALL
            .iter()
            .map(|f| f.eval_f64(a, d).powi(self.0[*f as usize] as i32))
            .product()
    }

    fn write(self, f: &mut impl fmt::Write) -> fmt::Result {
        let mut first = true;
        for fac in DenomFactor::ALL {
            let e = self.0[fac as usize];
            if e == 0 {
                continue;
            }
            if !first {
                f.write_char('*')?;
            }
            first = false;
            write!(f, "[{}]", fac.label())?;
            if e > 1 {
                write!(f, "^{e}")?;
            }
        }
        if first {
            f.write_char('1')?;
        }
        Ok(())
    }
}

impl fmt::Display for DenomToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f)
    }
}

#[derive(Debug, Error)]
pub enum PolyError {
    #[error("cannot differentiate with respect to parameter `{0}`")]
    NotCoordinate(Var),
    #[error("division is not exact; remainder has {} terms", .remainder.term_count())]
    NotDivisible { remainder: Box<ParamPoly> },
    #[error("division by the zero polynomial")]
    DivisionByZero,
    #[error("operation requires a trivial denominator token, found {0}")]
    NonTrivialDenominator(DenomToken),
    #[error("parse error at column {column}: {message}")]
    Parse { column: usize, message: String },
}

/// An exact polynomial with parametric rational coefficients over a
/// positive denominator token.
#[derive(Clone)]
pub struct ParamPoly {
    /// Sorted by monomial, descending; no zero coefficients.
    terms: Vec<(Monomial, BigInt)>,
    /// Positive; `gcd(scale, all numerators) == 1`.
    scale: BigInt,
    denom: DenomToken,
}

impl ParamPoly {
    pub fn zero() -> ParamPoly {
        ParamPoly {
            terms: Vec::new(),
            scale: BigInt::one(),
            denom: DenomToken::TRIVIAL,
        }
    }

    pub fn one() -> ParamPoly {
        ParamPoly::constant(Rational::one())
    }

    pub fn constant(c: Rational) -> ParamPoly {
        ParamPoly::monomial(Monomial::ONE, c)
    }

    pub fn integer(c: i64) -> ParamPoly {
        ParamPoly::constant(Rational::from_integer(c.into()))
    }

    pub fn var(v: Var) -> ParamPoly {
        ParamPoly::monomial(Monomial::var(v, 1), Rational::one())
    }

    pub fn monomial(m: Monomial, c: Rational) -> ParamPoly {
        if c.is_zero() {
            return ParamPoly::zero();
        }
        let (n, s) = (c.numer().clone(), c.denom().clone());
        ParamPoly {
            terms: vec![(m, n)],
            scale: s,
            denom: DenomToken::TRIVIAL,
        }
    }

    /// Build from `(monomial, coefficient)` pairs; repeated monomials are summed.
    pub fn from_terms<I>(terms: I) -> ParamPoly
    where
        I: IntoIterator<Item = (Monomial, Rational)>,
    {
        let mut acc: BTreeMap<Monomial, Rational> = BTreeMap::new();
        for (m, c) in terms {
            *acc.entry(m).or_insert_with(Rational::zero) += c;
        }
        let lcm = acc
            .values()
            .fold(BigInt::one(), |l, c| l.lcm(c.denom()));
        let terms = acc
            .into_iter()
            .rev()
            .filter(|(_, c)| !c.is_zero())
            .map(|(m, c)| (m, c.numer() * (&lcm / c.denom())))
            .collect();
        ParamPoly::from_parts(terms, lcm, DenomToken::TRIVIAL)
    }

    fn from_parts(terms: Vec<(Monomial, BigInt)>, scale: BigInt, denom: DenomToken) -> ParamPoly {
        let mut p = ParamPoly { terms, scale, denom };
        p.normalize();
        p
    }

    fn normalize(&mut self) {
        if self.terms.is_empty() {
            self.scale = BigInt::one();
            self.denom = DenomToken::TRIVIAL;
            return;
        }
        if self.scale.is_negative() {
            self.scale = -&self.scale;
            for (_, c) in self.terms.iter_mut() {
                *c = -&*c;
            }
        }
        if self.scale.is_one() {
            return;
        }
        let mut g = self.scale.clone();
        for (_, c) in &self.terms {
            if g.is_one() {
                break;
            }
            g = g.gcd(c);
        }
        if !g.is_one() {
            self.scale /= &g;
            for (_, c) in self.terms.iter_mut() {
                *c /= &g;
            }
        }
    }

    fn from_map(map: FxMap<Monomial, BigInt>, scale: BigInt, denom: DenomToken) -> ParamPoly {
        let mut terms: Vec<(Monomial, BigInt)> =
            map.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        terms.sort_unstable_by(|a, b| b.0.cmp(&a.0));
        ParamPoly::from_parts(terms, scale, denom)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn denom(&self) -> DenomToken {
        self.denom
    }

    /// Number of stored numerator terms (over all six variables).
    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    /// Numerator table entries in descending graded-lex order.
    pub fn terms(&self) -> impl Iterator<Item = (Monomial, Rational)> + '_ {
        self.terms
            .iter()
            .map(|(m, c)| (*m, Rational::new(c.clone(), self.scale.clone())))
    }

    pub fn coeff(&self, m: Monomial) -> Rational {
        match self.terms.binary_search_by(|(k, _)| m.cmp(k)) {
            Ok(i) => Rational::new(self.terms[i].1.clone(), self.scale.clone()),
            Err(_) => Rational::zero(),
        }
    }

    pub fn leading(&self) -> Option<(Monomial, Rational)> {
        self.terms().next()
    }

    /// The numerator table alone, with a trivial token.
    pub fn numerator(&self) -> ParamPoly {
        ParamPoly {
            terms: self.terms.clone(),
            scale: self.scale.clone(),
            denom: DenomToken::TRIVIAL,
        }
    }

    /// Divide by the given token (`self / token`).
    pub fn over(&self, token: DenomToken) -> ParamPoly {
        let mut out = self.clone();
        if !out.is_zero() {
            out.denom = out.denom.product(token);
        }
        out
    }

    /// Numerator of `self` rewritten over the larger token `target`.
    /// Returns `None` if `target` is not a multiple of the current token.
    pub fn numerator_over(&self, target: DenomToken) -> Option<ParamPoly> {
        let extra = target.checked_sub(self.denom)?;
        Some(&self.numerator() * &extra.poly())
    }

    /// Both values over the least common token.
    fn aligned(&self, other: &ParamPoly) -> (ParamPoly, ParamPoly, DenomToken) {
        if self.denom == other.denom {
            return (self.numerator(), other.numerator(), self.denom);
        }
        let t = self.denom.lcm(other.denom);
        (
            self.numerator_over(t).expect("lcm"),
            other.numerator_over(t).expect("lcm"),
            t,
        )
    }

    fn add_numerators(p: &ParamPoly, q: &ParamPoly, negate_q: bool) -> ParamPoly {
        let l = p.scale.lcm(&q.scale);
        let fp = &l / &p.scale;
        let fq = &l / &q.scale;
        let mut out = Vec::with_capacity(p.terms.len() + q.terms.len());
        let (mut i, mut j) = (0, 0);
        while i < p.terms.len() || j < q.terms.len() {
            let ord = match (p.terms.get(i), q.terms.get(j)) {
                (Some(a), Some(b)) => b.0.cmp(&a.0),
                (Some(_), None) => Ordering::Less,
                (None, Some(_)) => Ordering::Greater,
                (None, None) => unreachable!(),
            };
            match ord {
                Ordering::Less => {
                    out.push((p.terms[i].0, &p.terms[i].1 * &fp));
                    i += 1;
                }
                Ordering::Greater => {
                    let c = &q.terms[j].1 * &fq;
                    out.push((q.terms[j].0, if negate_q { -c } else { c }));
                    j += 1;
                }
                Ordering::Equal => {
                    let a = &p.terms[i].1 * &fp;
                    let b = &q.terms[j].1 * &fq;
                    let c = if negate_q { a - b } else { a + b };
                    if !c.is_zero() {
                        out.push((p.terms[i].0, c));
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        ParamPoly::from_parts(out, l, DenomToken::TRIVIAL)
    }

    fn add_impl(&self, other: &ParamPoly, negate: bool) -> ParamPoly {
        if other.is_zero() {
            return self.clone();
        }
        if self.is_zero() {
            return if negate { -other } else { other.clone() };
        }
        let (p, q, t) = self.aligned(other);
        let mut out = ParamPoly::add_numerators(&p, &q, negate);
        if !out.is_zero() {
            out.denom = t;
        }
        out
    }

    fn mul_impl(&self, other: &ParamPoly) -> ParamPoly {
        if self.is_zero() || other.is_zero() {
            return ParamPoly::zero();
        }
        let (small, large) = if self.terms.len() <= other.terms.len() {
            (self, other)
        } else {
            (other, self)
        };
        let mut acc: FxMap<Monomial, BigInt> = FxMap::default();
        acc.reserve(large.terms.len() * 2);
        for (ma, ca) in &small.terms {
            for (mb, cb) in &large.terms {
                let prod = ca * cb;
                acc.entry(ma.mul(*mb))
                    .and_modify(|c| *c += &prod)
                    .or_insert(prod);
            }
        }
        ParamPoly::from_map(
            acc,
            &self.scale * &other.scale,
            self.denom.product(other.denom),
        )
    }

    pub fn pow(&self, n: u32) -> ParamPoly {
        let mut result = ParamPoly::one();
        let mut base = self.clone();
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                result = &result * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        result
    }

    pub fn scale_by(&self, c: &Rational) -> ParamPoly {
        if c.is_zero() || self.is_zero() {
            return ParamPoly::zero();
        }
        let terms = self
            .terms
            .iter()
            .map(|(m, x)| (*m, x * c.numer()))
            .collect();
        ParamPoly::from_parts(terms, &self.scale * c.denom(), self.denom)
    }

    /// Formal partial derivative in a coordinate; the token is unchanged.
    pub fn diff(&self, var: Var) -> Result<ParamPoly, PolyError> {
        if !var.is_coordinate() {
            return Err(PolyError::NotCoordinate(var));
        }
        let one = Monomial::var(var, 1);
        let mut terms: Vec<(Monomial, BigInt)> = self
            .terms
            .iter()
            .filter_map(|(m, c)| {
                let e = m.exp(var);
                (e > 0).then(|| (one.quotient_of(*m), c * BigInt::from(e)))
            })
            .collect();
        // Lowering one exponent can reorder terms across degrees.
        terms.sort_unstable_by(|a, b| b.0.cmp(&a.0));
        Ok(ParamPoly::from_parts(
            terms,
            self.scale.clone(),
            if self.terms.is_empty() { DenomToken::TRIVIAL } else { self.denom },
        ))
    }

    /// Derivative in a coordinate; panics on a parameter.
    pub fn d(&self, var: Var) -> ParamPoly {
        self.diff(var).expect("coordinate derivative")
    }

    /// Exact value at a rational point and rational parameters.
    pub fn eval(&self, point: &[Rational; 4], params: &[Rational; 2]) -> Rational {
        let mut vals: Vec<&Rational> = point.iter().collect();
        vals.extend(params.iter());
        let mut cache: Vec<Vec<Rational>> = vals.iter().map(|v| vec![Rational::one(), (*v).clone()]).collect();
        let mut num = BigRational::zero();
        for (m, c) in &self.terms {
            let mut t = Rational::from_integer(c.clone());
            for (i, e) in m.exps().iter().enumerate() {
                let e = *e as usize;
                if e == 0 {
                    continue;
                }
                while cache[i].len() <= e {
                    let next = cache[i].last().unwrap() * vals[i];
                    cache[i].push(next);
                }
                t *= &cache[i][e];
            }
            num += t;
        }
        num / Rational::from_integer(self.scale.clone()) / self.denom.eval(&params[0], &params[1])
    }

    pub fn eval_f64(&self, point: &[f64; 4], params: [f64; 2]) -> f64 {
        let vals = [point[0], point[1], point[2], point[3], params[0], params[1]];
        let scale = self.scale.to_f64().unwrap_or(f64::INFINITY);
        let num: f64 = self
            .terms
            .iter()
            .map(|(m, c)| {
                let mut t = c.to_f64().unwrap_or(f64::NAN);
                for (i, e) in m.exps().iter().enumerate() {
                    if *e > 0 {
                        t *= vals[i].powi(*e as i32);
                    }
                }
                t
            })
            .sum();
        num / scale / self.denom.eval_f64(params[0], params[1])
    }

    /// Substitute rational values for `a, d`, folding the token into the coefficients.
    pub fn specialize(&self, a: &Rational, d: &Rational) -> ParamPoly {
        let mut acc: BTreeMap<Monomial, Rational> = BTreeMap::new();
        for (m, c) in self.terms() {
            let e = m.exps();
            let v = c * num_traits::pow(a.clone(), e[4] as usize) * num_traits::pow(d.clone(), e[5] as usize);
            *acc.entry(m.coord_part()).or_insert_with(Rational::zero) += v;
        }
        let den = self.denom.eval(a, d);
        ParamPoly::from_terms(acc.into_iter().map(|(m, c)| (m, c / &den)))
    }

    /// Substitute polynomials for the four coordinates. Parameters are kept.
    pub fn compose(&self, images: &[ParamPoly; 4]) -> ParamPoly {
        let mut powers: Vec<Vec<ParamPoly>> = images.iter().map(|p| vec![ParamPoly::one(), p.clone()]).collect();
        let mut out = ParamPoly::zero();
        for (m, c) in self.terms() {
            let e = m.exps();
            let mut t = ParamPoly::monomial(m.param_part(), c);
            for i in 0..4 {
                let k = e[i] as usize;
                while powers[i].len() <= k {
                    let next = powers[i].last().unwrap() * &images[i];
                    powers[i].push(next);
                }
                if k > 0 {
                    t = &t * &powers[i][k];
                }
            }
            out = &out + &t;
        }
        out.over(self.denom)
    }

    /// Exact quotient `self / divisor`, failing if the division leaves a remainder.
    pub fn exact_divide(&self, divisor: &ParamPoly) -> Result<ParamPoly, PolyError> {
        if divisor.is_zero() {
            return Err(PolyError::DivisionByZero);
        }
        if self.is_zero() {
            return Ok(ParamPoly::zero());
        }
        // (p / Tp) / (q / Tq) = (p * Tq) / (q * Tp); cancel the common part first.
        let common = DenomToken(std::array::from_fn(|i| self.denom.0[i].min(divisor.denom.0[i])));
        let tp = self.denom.checked_sub(common).unwrap();
        let tq = divisor.denom.checked_sub(common).unwrap();
        let num = if tq.is_trivial() { self.numerator() } else { &self.numerator() * &tq.poly() };
        let quot = divide_numerators(&num, &divisor.numerator())?;
        Ok(quot.over(tp))
    }

    /// Split into the parameter-free part and the remainder.
    pub fn split_param_part(&self) -> Result<(ParamPoly, ParamPoly), PolyError> {
        if !self.denom.is_trivial() {
            return Err(PolyError::NonTrivialDenominator(self.denom));
        }
        let (q, r): (Vec<_>, Vec<_>) = self.terms.iter().cloned().partition(|(m, _)| !m.has_params());
        Ok((
            ParamPoly::from_parts(q, self.scale.clone(), DenomToken::TRIVIAL),
            ParamPoly::from_parts(r, self.scale.clone(), DenomToken::TRIVIAL),
        ))
    }

    /// Group the numerator by coordinate monomial: `x^α -> S_α(a, d)`.
    pub fn coordinate_groups(&self) -> BTreeMap<Monomial, ParamPoly> {
        let mut groups: BTreeMap<Monomial, Vec<(Monomial, Rational)>> = BTreeMap::new();
        for (m, c) in self.terms() {
            groups.entry(m.coord_part()).or_default().push((m.param_part(), c));
        }
        groups
            .into_iter()
            .map(|(k, v)| (k, ParamPoly::from_terms(v)))
            .collect()
    }

    pub fn metrics(&self) -> PolyMetrics {
        let groups = self.coordinate_groups();
        let degrees: std::collections::BTreeSet<u32> = groups.keys().map(|m| m.coord_degree()).collect();
        let homogeneous_degree = if degrees.len() == 1 { degrees.first().copied() } else { None };
        let coeff_abs_sums = groups
            .iter()
            .map(|(m, s)| (*m, s.terms().map(|(_, c)| c.abs()).fold(Rational::zero(), |a, b| a + b)))
            .collect();
        PolyMetrics {
            term_count: groups.len(),
            raw_term_count: self.terms.len(),
            homogeneous_degree,
            coeff_abs_sums,
        }
    }

    /// Whether any stored monomial contains `a` or `d`.
    pub fn has_params(&self) -> bool {
        self.terms.iter().any(|(m, _)| m.has_params()) || !self.denom.is_trivial()
    }

    /// Largest total degree in the coordinates.
    pub fn coord_degree(&self) -> Option<u32> {
        self.terms.iter().map(|(m, _)| m.coord_degree()).max()
    }

    /// Fixed `(a, d)` float specialization of the numerator/denominator.
    pub fn to_float(&self, a: f64, d: f64) -> crate::numeric::FloatPoly {
        crate::numeric::FloatPoly::from_param_poly(self, a, d)
    }

    pub(crate) fn raw_terms(&self) -> &[(Monomial, BigInt)] {
        &self.terms
    }

    pub(crate) fn raw_scale(&self) -> &BigInt {
        &self.scale
    }
}

/// Exact division of trivial-token numerators over `Q[x, y, u, v, a, d]`.
fn divide_numerators(p: &ParamPoly, q: &ParamPoly) -> Result<ParamPoly, PolyError> {
    let (lm, lc) = q.leading().expect("nonzero divisor");
    let q_terms: Vec<(Monomial, Rational)> = q.terms().collect();
    let mut rem: BTreeMap<Monomial, Rational> = p.terms().collect();
    let mut quot: Vec<(Monomial, Rational)> = Vec::new();
    while let Some((m, c)) = rem.pop_last() {
        if !lm.divides(m) {
            rem.insert(m, c);
            let remainder = ParamPoly::from_terms(rem);
            return Err(PolyError::NotDivisible { remainder: Box::new(remainder) });
        }
        let qm = lm.quotient_of(m);
        let qc = c / &lc;
        for (tm, tc) in q_terms.iter().skip(1) {
            let key = tm.mul(qm);
            let delta = tc * &qc;
            match rem.entry(key) {
                std::collections::btree_map::Entry::Occupied(mut e) => {
                    *e.get_mut() -= delta;
                    if e.get().is_zero() {
                        e.remove();
                    }
                }
                std::collections::btree_map::Entry::Vacant(e) => {
                    e.insert(-delta);
                }
            }
        }
        quot.push((qm, qc));
    }
    Ok(ParamPoly::from_terms(quot))
}

/// Term statistics of a polynomial organized as `Σ_α S_α(a, d) x^α`.
#[derive(Clone, Debug)]
pub struct PolyMetrics {
    /// Distinct coordinate monomials `x^α` with `S_α ≠ 0`.
    pub term_count: usize,
    /// Stored terms counted over all six variables.
    pub raw_term_count: usize,
    pub homogeneous_degree: Option<u32>,
    /// `N_α`: sum of absolute values of the coefficients of `S_α`.
    pub coeff_abs_sums: BTreeMap<Monomial, Rational>,
}

impl PolyMetrics {
    pub fn max_abs_sum(&self) -> Rational {
        self.coeff_abs_sums.values().cloned().max().unwrap_or_else(Rational::zero)
    }
}

impl PartialEq for ParamPoly {
    fn eq(&self, other: &ParamPoly) -> bool {
        if self.denom == other.denom {
            return self.terms == other.terms && self.scale == other.scale;
        }
        let (p, q, _) = self.aligned(other);
        p.terms == q.terms && p.scale == q.scale
    }
}

impl Eq for ParamPoly {}

impl std::ops::Add for &ParamPoly {
    type Output = ParamPoly;
    fn add(self, rhs: &ParamPoly) -> ParamPoly {
        self.add_impl(rhs, false)
    }
}

impl std::ops::Sub for &ParamPoly {
    type Output = ParamPoly;
    fn sub(self, rhs: &ParamPoly) -> ParamPoly {
        self.add_impl(rhs, true)
    }
}

impl std::ops::Mul for &ParamPoly {
    type Output = ParamPoly;
    fn mul(self, rhs: &ParamPoly) -> ParamPoly {
        self.mul_impl(rhs)
    }
}

impl std::ops::Neg for &ParamPoly {
    type Output = ParamPoly;
    fn neg(self) -> ParamPoly {
        ParamPoly {
            terms: self.terms.iter().map(|(m, c)| (*m, -c)).collect(),
            scale: self.scale.clone(),
            denom: self.denom,
        }
    }
}

macro_rules! forward_owned {
    ($tr:ident, $f:ident) => {
        impl std::ops::$tr for ParamPoly {
            type Output = ParamPoly;
            fn $f(self, rhs: ParamPoly) -> ParamPoly {
                (&self).$f(&rhs)
            }
        }
        impl std::ops::$tr<&ParamPoly> for ParamPoly {
            type Output = ParamPoly;
            fn $f(self, rhs: &ParamPoly) -> ParamPoly {
                (&self).$f(rhs)
            }
        }
        impl std::ops::$tr<ParamPoly> for &ParamPoly {
            type Output = ParamPoly;
            fn $f(self, rhs: ParamPoly) -> ParamPoly {
                self.$f(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl std::ops::Neg for ParamPoly {
    type Output = ParamPoly;
    fn neg(self) -> ParamPoly {
        -&self
    }
}

impl std::iter::Sum for ParamPoly {
    fn sum<I: Iterator<Item = ParamPoly>>(iter: I) -> ParamPoly {
        iter.fold(ParamPoly::zero(), |a, b| &a + &b)
    }
}

fn write_rational(f: &mut impl fmt::Write, c: &Rational) -> fmt::Result {
    if c.is_integer() {
        write!(f, "{}", c.numer())
    } else {
        write!(f, "{}/{}", c.numer(), c.denom())
    }
}

/// Canonical text: terms in descending graded-lex order, then the token
/// as a product of bracketed factors.
impl fmt::Display for ParamPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        if self.is_zero() {
            s.push('0');
        }
        for (i, (m, c)) in self.terms().enumerate() {
            let mag = c.abs();
            if i == 0 {
                if c.is_negative() {
                    s.push('-');
                }
            } else {
                s.push_str(if c.is_negative() { " - " } else { " + " });
            }
            if m == Monomial::ONE {
                write_rational(&mut s, &mag)?;
            } else {
                if !mag.is_one() {
                    write_rational(&mut s, &mag)?;
                    s.push('*');
                }
                m.write_factors(&mut s)?;
            }
        }
        if self.denom.is_trivial() {
            f.write_str(&s)
        } else {
            write!(f, "({s}) / ")?;
            self.denom.write(f)
        }
    }
}

impl fmt::Debug for ParamPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, PolyError> {
        Err(PolyError::Parse { column: self.pos + 1, message: message.into() })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, b: u8) -> Result<(), PolyError> {
        if self.eat(b) {
            Ok(())
        } else {
            self.err(format!("expected `{}`", b as char))
        }
    }

    fn integer(&mut self) -> Result<BigInt, PolyError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected a number");
        }
        let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        Ok(s.parse().unwrap())
    }

    fn rational(&mut self) -> Result<Rational, PolyError> {
        let n = self.integer()?;
        if self.peek() == Some(b'/') && self.src.get(self.pos + 1).is_some_and(|b| b.is_ascii_digit() || b.is_ascii_whitespace()) {
            // Lookahead: a `/` followed by a token bracket is the token separator.
            let save = self.pos;
            self.pos += 1;
            if self.peek().is_some_and(|b| b.is_ascii_digit()) {
                let d = self.integer()?;
                if d.is_zero() {
                    return self.err("zero denominator");
                }
                return Ok(Rational::new(n, d));
            }
            self.pos = save;
        }
        Ok(Rational::from_integer(n))
    }

    fn exponent(&mut self) -> Result<u32, PolyError> {
        if self.eat(b'^') {
            self.integer()?
                .to_u32()
                .map_or_else(|| self.err("exponent too large"), Ok)
        } else {
            Ok(1)
        }
    }

    fn factor_var(&mut self) -> Result<Var, PolyError> {
        self.skip_ws();
        let c = self.src.get(self.pos).copied();
        match c.and_then(|b| Var::from_name(&(b as char).to_string())) {
            Some(v) => {
                self.pos += 1;
                Ok(v)
            }
            None => self.err("expected a variable"),
        }
    }

    fn term(&mut self) -> Result<(Monomial, Rational), PolyError> {
        let mut coeff = Rational::one();
        let mut exps = [0u32; 6];
        loop {
            if self.peek().is_some_and(|b| b.is_ascii_digit()) {
                coeff *= self.rational()?;
            } else {
                let v = self.factor_var()?;
                exps[v.index()] += self.exponent()?;
            }
            if !self.eat(b'*') {
                break;
            }
        }
        Ok((Monomial::new(exps), coeff))
    }

    fn sum(&mut self) -> Result<ParamPoly, PolyError> {
        let mut terms = Vec::new();
        let mut sign = if self.eat(b'-') { -1 } else { 1 };
        loop {
            let (m, c) = self.term()?;
            terms.push((m, if sign < 0 { -c } else { c }));
            if self.eat(b'+') {
                sign = 1;
            } else if self.eat(b'-') {
                sign = -1;
            } else {
                break;
            }
        }
        Ok(ParamPoly::from_terms(terms))
    }

    fn token(&mut self) -> Result<DenomToken, PolyError> {
        let mut t = DenomToken::TRIVIAL;
        loop {
            self.expect(b'[')?;
            self.skip_ws();
            let rest = &self.src[self.pos..];
            let close = rest.iter().position(|b| *b == b']');
            let Some(close) = close else { return self.err("unterminated factor") };
            let label: String = std::str::from_utf8(&rest[..close])
                .unwrap()
                .chars()
                .filter(|c| !c.is_whitespace())
                .collect();
            let Some(fac) = DenomFactor::ALL.into_iter().find(|f| f.label() == label) else {
                return self.err(format!("unknown denominator factor `{label}`"));
            };
            self.pos += close + 1;
            t.0[fac as usize] += self.exponent()?;
            if !self.eat(b'*') {
                break;
            }
        }
        Ok(t)
    }

    fn poly(&mut self) -> Result<ParamPoly, PolyError> {
        let p = if self.eat(b'(') {
            let p = self.sum()?;
            self.expect(b')')?;
            p
        } else {
            self.sum()?
        };
        let p = if self.eat(b'/') {
            let t = self.token()?;
            p.over(t)
        } else {
            p
        };
        if self.peek().is_some() {
            return self.err("trailing input");
        }
        Ok(p)
    }
}

impl FromStr for ParamPoly {
    type Err = PolyError;

    fn from_str(s: &str) -> Result<ParamPoly, PolyError> {
        Parser { src: s.as_bytes(), pos: 0 }.poly()
    }
}

/// Bindings for the auxiliary symbols used to compress Levi-form algebra.
#[derive(Clone, Debug)]
pub struct SubstitutionTable {
    pub bindings: Vec<(&'static str, ParamPoly)>,
}

impl SubstitutionTable {
    /// `V = v² + y²`, `Z = u² + x²`, `ω = V + Z`, `Δ = xv − uy`.
    pub fn standard() -> SubstitutionTable {
        let x = ParamPoly::var(Var::X);
        let y = ParamPoly::var(Var::Y);
        let u = ParamPoly::var(Var::U);
        let v = ParamPoly::var(Var::V);
        let big_v = &v * &v + &y * &y;
        let big_z = &u * &u + &x * &x;
        let omega = &big_v + &big_z;
        let delta = &x * &v - &u * &y;
        SubstitutionTable {
            bindings: vec![("V", big_v), ("Z", big_z), ("omega", omega), ("Delta", delta)],
        }
    }

    pub fn get(&self, name: &str) -> Option<&ParamPoly> {
        self.bindings.iter().find(|(n, _)| *n == name).map(|(_, p)| p)
    }
}

/// Shorthand constructors used throughout the crate and its tests.
pub mod vars {
    use super::{ParamPoly, Var};

    pub fn x() -> ParamPoly {
        ParamPoly::var(Var::X)
    }
    pub fn y() -> ParamPoly {
        ParamPoly::var(Var::Y)
    }
    pub fn u() -> ParamPoly {
        ParamPoly::var(Var::U)
    }
    pub fn v() -> ParamPoly {
        ParamPoly::var(Var::V)
    }
    pub fn a() -> ParamPoly {
        ParamPoly::var(Var::A)
    }
    pub fn d() -> ParamPoly {
        ParamPoly::var(Var::D)
    }
    pub fn int(c: i64) -> ParamPoly {
        ParamPoly::integer(c)
    }
}

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(n.into(), d.into())
}

#[cfg(test)]
mod tests {
    use super::vars::*;
    use super::*;
    use proptest::prelude::*;

    fn pt(v: [i64; 4]) -> [Rational; 4] {
        v.map(|c| rat(c, 1))
    }

    fn zero_params() -> [Rational; 2] {
        [rat(0, 1), rat(0, 1)]
    }

    #[test]
    fn difference_of_squares() {
        let p = (x() + y()) * (x() - y());
        assert_eq!(p, x().pow(2) - y().pow(2));
    }

    #[test]
    fn zeroth_power_is_one() {
        assert_eq!((y().pow(2) + v().pow(2)).pow(0), ParamPoly::one());
    }

    #[test]
    fn square_of_dn() {
        let dn = y().pow(2) + v().pow(2);
        let expect = y().pow(4) + int(2) * y().pow(2) * v().pow(2) + v().pow(4);
        assert_eq!(&dn * &dn, expect);
    }

    #[test]
    fn derivatives() {
        let dn = y().pow(2) + v().pow(2);
        assert_eq!(dn.d(Var::Y), int(2) * y());
        let p = (x() - a() * y()).pow(2);
        assert_eq!(p.d(Var::Y), int(-2) * a() * (x() - a() * y()));
        assert!(int(7).d(Var::X).is_zero());
        assert!(matches!(p.diff(Var::A), Err(PolyError::NotCoordinate(Var::A))));
        assert!(matches!(p.diff(Var::D), Err(PolyError::NotCoordinate(Var::D))));
    }

    #[test]
    fn evaluation() {
        let dn = y().pow(2) + v().pow(2);
        assert_eq!(dn.eval(&pt([0, 1, 0, 2]), &zero_params()), rat(5, 1));

        // Complex-eigenvalue distance at (a, d) = (0, 1/2), point (1, 0, 0, 0).
        let (aa, dd) = (a(), d());
        let num = (u() - &dd * y() - &aa * v()).pow(2) + (x() - &aa * y() + &dd * v()).pow(2);
        let dm = num.over(DenomToken::factor(DenomFactor::OnePlusA2D2, 1));
        assert_eq!(dm.eval(&pt([1, 0, 0, 0]), &[rat(0, 1), rat(1, 2)]), rat(4, 5));
    }

    #[test]
    fn exact_division() {
        let p = x().pow(2) - y().pow(2);
        assert_eq!(p.exact_divide(&(x() - y())).unwrap(), x() + y());
        let dn = y().pow(2) + v().pow(2);
        assert_eq!((&dn * &dn).exact_divide(&dn).unwrap(), dn);
        match x().pow(2).exact_divide(&(y() + v())) {
            Err(PolyError::NotDivisible { remainder }) => assert!(!remainder.is_zero()),
            other => panic!("expected NotDivisible, got {other:?}"),
        }
        assert!(matches!(x().exact_divide(&ParamPoly::zero()), Err(PolyError::DivisionByZero)));
    }

    #[test]
    fn division_with_tokens() {
        let t = DenomToken::factor(DenomFactor::OnePlusA2, 2);
        let f = DenomFactor::OnePlusA2.poly();
        let p = (&f * &x()).over(t);
        let q = x().over(DenomToken::factor(DenomFactor::OnePlusA2, 1));
        assert_eq!(p.exact_divide(&q).unwrap(), ParamPoly::one());
    }

    #[test]
    fn split_examples() {
        let p = x().pow(10) + a() * x().pow(9) * y();
        let (q, r) = p.split_param_part().unwrap();
        assert_eq!(q, x().pow(10));
        assert_eq!(r, a() * x().pow(9) * y());
        let p = x() * y() + int(3);
        let (q, r) = p.split_param_part().unwrap();
        assert_eq!(q, p);
        assert!(r.is_zero());
        let with_token = x().over(DenomToken::factor(DenomFactor::OnePlusD2, 1));
        assert!(matches!(with_token.split_param_part(), Err(PolyError::NonTrivialDenominator(_))));
    }

    #[test]
    fn metrics_example() {
        let p = a() * x().pow(9) * y() - int(2) * d() * x().pow(9) * y() + int(3) * a() * d() * y().pow(10);
        let m = p.metrics();
        assert_eq!(m.term_count, 2);
        assert_eq!(m.raw_term_count, 3);
        assert_eq!(m.homogeneous_degree, Some(10));
        let xy = Monomial::new([9, 1, 0, 0, 0, 0]);
        let y10 = Monomial::new([0, 10, 0, 0, 0, 0]);
        assert_eq!(m.coeff_abs_sums[&xy], rat(3, 1));
        assert_eq!(m.coeff_abs_sums[&y10], rat(3, 1));
        assert_eq!(ParamPoly::zero().metrics().homogeneous_degree, None);
        assert_eq!((x() + int(1)).metrics().homogeneous_degree, None);
    }

    #[test]
    fn equality_across_tokens() {
        let f = DenomFactor::OnePlusA2;
        let p = (&f.poly() * &x()).over(DenomToken::factor(f, 1));
        assert_eq!(p, x());
        assert_ne!(p, y());
    }

    #[test]
    fn display_is_canonical() {
        let p = int(-2) * x().pow(2) * a() + ParamPoly::constant(rat(3, 2)) * y() - int(1);
        assert_eq!(p.to_string(), "-2*x^2*a + 3/2*y - 1");
        let t = DenomToken([2, 0, 0, 1]);
        let q = (x() + d()).over(t);
        assert_eq!(q.to_string(), "(x + d) / [1+a^2]^2*[(1+a^2)^2+d^2]");
        assert_eq!(q.to_string().parse::<ParamPoly>().unwrap().to_string(), q.to_string());
        assert_eq!("0".parse::<ParamPoly>().unwrap(), ParamPoly::zero());
        assert!("x +* y".parse::<ParamPoly>().is_err());
        assert!("(x) / [1+b^2]".parse::<ParamPoly>().is_err());
    }

    #[test]
    fn substitution_table() {
        let t = SubstitutionTable::standard();
        assert_eq!(t.get("Delta").unwrap(), &(x() * v() - u() * y()));
        assert_eq!(t.get("omega").unwrap(), &(x().pow(2) + y().pow(2) + u().pow(2) + v().pow(2)));
    }

    #[test]
    fn specialize_folds_token() {
        let p = (a() * x() + d()).over(DenomToken::factor(DenomFactor::OnePlusA2D2, 1));
        let s = p.specialize(&rat(1, 1), &rat(1, 1));
        assert_eq!(s, ParamPoly::constant(rat(1, 3)) * (x() + int(1)));
    }

    fn small_poly() -> impl Strategy<Value = ParamPoly> {
        prop::collection::vec(((0u32..3, 0u32..3, 0u32..3, 0u32..3, 0u32..2, 0u32..2), -5i64..6, 1i64..4), 0..6)
            .prop_map(|ts| {
                ParamPoly::from_terms(ts.into_iter().map(|((ex, ey, eu, ev, ea, ed), n, dd)| {
                    (Monomial::new([ex, ey, eu, ev, ea, ed]), rat(n, dd))
                }))
            })
    }

    fn small_token() -> impl Strategy<Value = DenomToken> {
        (0u32..2, 0u32..2, 0u32..2, 0u32..2).prop_map(|(a, b, c, d)| DenomToken([a, b, c, d]))
    }

    fn small_point() -> impl Strategy<Value = ([Rational; 4], [Rational; 2])> {
        prop::array::uniform6((-4i64..5, 1i64..4)).prop_map(|v| {
            let r: Vec<Rational> = v.iter().map(|(n, d)| rat(*n, *d)).collect();
            ([r[0].clone(), r[1].clone(), r[2].clone(), r[3].clone()], [r[4].clone(), r[5].clone()])
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn distributive(p in small_poly(), q in small_poly(), r in small_poly(), t in small_token()) {
            let p = p.over(t);
            prop_assert_eq!((&p + &q) * &r, &p * &r + &q * &r);
        }

        #[test]
        fn leibniz(p in small_poly(), q in small_poly(), t in small_token()) {
            let p = p.over(t);
            for v in Var::COORDS {
                prop_assert_eq!((&p * &q).d(v), p.d(v) * &q + &p * q.d(v));
                prop_assert_eq!((&p + &q).d(v), p.d(v) + q.d(v));
            }
        }

        #[test]
        fn divide_product(p in small_poly(), q in small_poly(), tp in small_token(), tq in small_token()) {
            prop_assume!(!q.is_zero());
            let p = p.over(tp);
            let q = q.over(tq);
            prop_assert_eq!((&p * &q).exact_divide(&q).unwrap(), p);
        }

        #[test]
        fn split_recombines(p in small_poly()) {
            let (q, r) = p.split_param_part().unwrap();
            prop_assert_eq!(&q + &r, p.clone());
            prop_assert!(!q.has_params());
            for (_, s) in r.coordinate_groups() {
                prop_assert!(s.eval(&pt([0, 0, 0, 0]), &zero_params()).is_zero());
            }
        }

        #[test]
        fn eval_is_a_ring_map((pt4, prm) in small_point(), p in small_poly(), q in small_poly(), t in small_token()) {
            let p = p.over(t);
            let ev = |f: &ParamPoly| f.eval(&pt4, &prm);
            prop_assert_eq!(ev(&(&p * &q)), ev(&p) * ev(&q));
            prop_assert_eq!(ev(&(&p - &q)), ev(&p) - ev(&q));
        }

        #[test]
        fn diff_matches_univariate_restriction((pt4, prm) in small_point(), p in small_poly(), t in small_token()) {
            // Restrict to the line point + s*e_x and differentiate the univariate
            // polynomial in s exactly through its coefficients.
            let p = p.over(t);
            let s = ParamPoly::var(Var::X);
            let images = [
                ParamPoly::constant(pt4[0].clone()) + &s,
                ParamPoly::constant(pt4[1].clone()),
                ParamPoly::constant(pt4[2].clone()),
                ParamPoly::constant(pt4[3].clone()),
            ];
            let line = p.compose(&images).specialize(&prm[0], &prm[1]);
            let slope = line.coeff(Monomial::var(Var::X, 1));
            prop_assert_eq!(p.d(Var::X).eval(&pt4, &prm), slope);
        }

        #[test]
        fn diff_matches_finite_difference((pt4, prm) in small_point(), p in small_poly()) {
            use num_traits::ToPrimitive;
            let f: [f64; 4] = std::array::from_fn(|i| pt4[i].to_f64().unwrap());
            let ad = [prm[0].to_f64().unwrap(), prm[1].to_f64().unwrap()];
            for (i, v) in Var::COORDS.into_iter().enumerate() {
                let h = 1e-5;
                let mut fp = f; fp[i] += h;
                let mut fm = f; fm[i] -= h;
                let fd = (p.eval_f64(&fp, ad) - p.eval_f64(&fm, ad)) / (2.0 * h);
                let exact = p.d(v).eval_f64(&f, ad);
                let scale = exact.abs().max(p.eval_f64(&f, ad).abs()).max(1.0);
                prop_assert!((fd - exact).abs() <= 1e-6 * scale, "fd {} exact {}", fd, exact);
            }
        }

        #[test]
        fn text_round_trip(p in small_poly(), t in small_token()) {
            let p = p.over(t);
            let s = p.to_string();
            let back: ParamPoly = s.parse().unwrap();
            prop_assert_eq!(back.to_string(), s);
            prop_assert_eq!(back, p);
        }
    }
}
