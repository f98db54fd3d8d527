//! Reduction of a pair of totally real planes in `C² ≈ R⁴` to the normal form
//! `R² ∪ (A + iI)R²`, classification of `A`, and the exact squared-distance data.
//!
//! Points of `R⁴` are `(x, y, u, v) ≈ (x + iy, u + iv)`.

use std::fmt;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::{vars, DenomFactor, DenomToken, ParamPoly, Rational, Var};

pub type Vec4 = [Rational; 4];
pub type Mat2 = [[Rational; 2]; 2];

#[derive(Debug, Error)]
pub enum NormalFormError {
    #[error("basis vectors are linearly dependent over R")]
    DegenerateBasis,
    #[error("plane {0} is not totally real")]
    NotTotallyReal(&'static str),
    #[error("the planes intersect in more than the origin")]
    NotTransverse,
    #[error("i is an eigenvalue of the reduced matrix")]
    ComplexEigI,
    #[error("eigenvalues of the matrix are irrational; supply (a, d) directly")]
    IrrationalEigenvalues,
    #[error("parameters (a, d) = ({a}, {d}) are outside the valid region for case {case}")]
    InvalidParameters { case: CaseTag, a: String, d: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Which canonical shape `A` takes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CaseTag {
    /// `A = [[a, 0], [0, d]]`
    Diag,
    /// `A = [[a, -d], [d, a]]`, `d ≠ 0`
    ComplexEig,
    /// `A = [[a, d], [0, a]]`, `d ≠ 0`
    NonDiag,
}

impl CaseTag {
    pub const ALL: [CaseTag; 3] = [CaseTag::Diag, CaseTag::ComplexEig, CaseTag::NonDiag];

    pub fn name(self) -> &'static str {
        match self {
            CaseTag::Diag => "diag",
            CaseTag::ComplexEig => "complex",
            CaseTag::NonDiag => "jordan",
        }
    }

    pub fn parse(s: &str) -> Option<CaseTag> {
        match s.to_ascii_lowercase().as_str() {
            "diag" | "1" | "diagonal" => Some(CaseTag::Diag),
            "complex" | "complexeig" | "2" => Some(CaseTag::ComplexEig),
            "jordan" | "nondiag" | "3" => Some(CaseTag::NonDiag),
            _ => None,
        }
    }

    /// The canonical matrix for parameters `(a, d)`.
    pub fn matrix(self, a: &Rational, d: &Rational) -> Mat2 {
        let z = Rational::zero();
        match self {
            CaseTag::Diag => [[a.clone(), z.clone()], [z, d.clone()]],
            CaseTag::ComplexEig => [[a.clone(), -d.clone()], [d.clone(), a.clone()]],
            CaseTag::NonDiag => [[a.clone(), d.clone()], [z, a.clone()]],
        }
    }

    /// Whether `(a, d)` lies in the case's admissible region.
    pub fn admits(self, a: &Rational, d: &Rational) -> bool {
        match self {
            CaseTag::Diag => true,
            CaseTag::ComplexEig => {
                let one = Rational::one();
                let t = &one - d * d;
                !d.is_zero() && !(a * a + &t * &t).is_zero()
            }
            CaseTag::NonDiag => !d.is_zero(),
        }
    }
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A complex 2×2 matrix with exact rational real and imaginary parts.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMat2 {
    pub re: Mat2,
    pub im: Mat2,
}

impl ComplexMat2 {
    pub fn identity() -> ComplexMat2 {
        ComplexMat2 { re: identity2(), im: zero2() }
    }

    /// Apply to a vector of `R⁴ ≈ C²`.
    pub fn apply(&self, p: &Vec4) -> Vec4 {
        let z = [(p[0].clone(), p[1].clone()), (p[2].clone(), p[3].clone())];
        let mut out: Vec<Rational> = Vec::with_capacity(4);
        for r in 0..2 {
            let mut re = Rational::zero();
            let mut im = Rational::zero();
            for (c, zc) in z.iter().enumerate() {
                re += &self.re[r][c] * &zc.0 - &self.im[r][c] * &zc.1;
                im += &self.re[r][c] * &zc.1 + &self.im[r][c] * &zc.0;
            }
            out.push(re);
            out.push(im);
        }
        out.try_into().unwrap()
    }
}

/// Two real planes in `R⁴`, each given by two basis vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanePair {
    pub m: [Vec4; 2],
    pub n: [Vec4; 2],
}

impl PlanePair {
    /// `N = R²` and `M = (A + iI)R²`.
    pub fn from_matrix(a: &Mat2) -> PlanePair {
        PlanePair { m: matrix_plane_basis(a), n: [e(0), e(2)] }
    }

    pub fn validate(&self) -> Result<(), NormalFormError> {
        if !totally_real_check(&self.m)? {
            return Err(NormalFormError::NotTotallyReal("M"));
        }
        if !totally_real_check(&self.n)? {
            return Err(NormalFormError::NotTotallyReal("N"));
        }
        let stacked = [self.m[0].clone(), self.m[1].clone(), self.n[0].clone(), self.n[1].clone()];
        if rank(&stacked) < 4 {
            return Err(NormalFormError::NotTransverse);
        }
        Ok(())
    }
}

/// Result of classifying `A`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalForm {
    pub case: CaseTag,
    pub a: Rational,
    pub d: Rational,
    /// Complex-linear map taking the input `N` to `R²` and `M` to `M(A)` for the
    /// unconjugated `A`; identity when classifying a bare matrix.
    pub reducing_map: ComplexMat2,
    /// Real matrix with `S A S⁻¹` canonical.
    pub conjugator: Mat2,
    /// The matrix before conjugation.
    pub raw_matrix: Mat2,
}

impl NormalForm {
    /// A normal form given directly by its case and parameters.
    pub fn from_params(case: CaseTag, a: Rational, d: Rational) -> Result<NormalForm, NormalFormError> {
        if !case.admits(&a, &d) {
            return Err(NormalFormError::InvalidParameters { case, a: a.to_string(), d: d.to_string() });
        }
        let m = case.matrix(&a, &d);
        Ok(NormalForm {
            case,
            a,
            d,
            reducing_map: ComplexMat2::identity(),
            conjugator: identity2(),
            raw_matrix: m,
        })
    }

    pub fn matrix(&self) -> Mat2 {
        self.case.matrix(&self.a, &self.d)
    }

    /// Full complex-linear map `diag(S) ∘ T` taking the input pair to `R² ∪ M(A_canonical)`.
    pub fn total_map(&self) -> ComplexMat2 {
        let s = &self.conjugator;
        ComplexMat2 { re: mul2(s, &self.reducing_map.re), im: mul2(s, &self.reducing_map.im) }
    }

    pub fn weinstock(&self) -> bool {
        weinstock_check(&self.matrix())
    }
}

fn e(i: usize) -> Vec4 {
    std::array::from_fn(|k| if k == i { Rational::one() } else { Rational::zero() })
}

fn zero2() -> Mat2 {
    std::array::from_fn(|_| std::array::from_fn(|_| Rational::zero()))
}

fn identity2() -> Mat2 {
    std::array::from_fn(|r| std::array::from_fn(|c| if r == c { Rational::one() } else { Rational::zero() }))
}

pub fn mul2(p: &Mat2, q: &Mat2) -> Mat2 {
    std::array::from_fn(|r| std::array::from_fn(|c| &p[r][0] * &q[0][c] + &p[r][1] * &q[1][c]))
}

pub fn det2(m: &Mat2) -> Rational {
    &m[0][0] * &m[1][1] - &m[0][1] * &m[1][0]
}

pub fn inv2(m: &Mat2) -> Option<Mat2> {
    let det = det2(m);
    if det.is_zero() {
        return None;
    }
    Some([
        [&m[1][1] / &det, -&m[0][1] / &det],
        [-&m[1][0] / &det, &m[0][0] / &det],
    ])
}

fn trace2(m: &Mat2) -> Rational {
    &m[0][0] + &m[1][1]
}

/// Multiplication by `i` on `R⁴ ≈ C²`.
pub fn complex_structure(p: &Vec4) -> Vec4 {
    [-p[1].clone(), p[0].clone(), -p[3].clone(), p[2].clone()]
}

/// Rank of a list of rational vectors by Gaussian elimination.
pub fn rank(rows: &[Vec4]) -> usize {
    let mut m: Vec<Vec4> = rows.to_vec();
    let mut rank = 0;
    for col in 0..4 {
        let Some(piv) = (rank..m.len()).find(|&r| !m[r][col].is_zero()) else { continue };
        m.swap(rank, piv);
        let p = m[rank].clone();
        for (r, row) in m.iter_mut().enumerate() {
            if r != rank && !row[col].is_zero() {
                let f = &row[col] / &p[col];
                for k in 0..4 {
                    row[k] = &row[k] - &f * &p[k];
                }
            }
        }
        rank += 1;
    }
    rank
}

/// The real span of `v₁, v₂` meets its image under `i` only at zero.
pub fn totally_real_check(basis: &[Vec4; 2]) -> Result<bool, NormalFormError> {
    if rank(basis) < 2 {
        return Err(NormalFormError::DegenerateBasis);
    }
    let rows = [
        basis[0].clone(),
        basis[1].clone(),
        complex_structure(&basis[0]),
        complex_structure(&basis[1]),
    ];
    Ok(rank(&rows) == 4)
}

/// Columns of `A + iI` as vectors of `R⁴`.
pub fn matrix_plane_basis(a: &Mat2) -> [Vec4; 2] {
    std::array::from_fn(|c| {
        let one = |r: usize| if r == c { Rational::one() } else { Rational::zero() };
        [a[0][c].clone(), one(0), a[1][c].clone(), one(1)]
    })
}

/// Whether `i` is an eigenvalue of a real 2×2 matrix: `tr A = 0` and `det A = 1`.
pub fn has_eigenvalue_i(a: &Mat2) -> bool {
    trace2(a).is_zero() && det2(a).is_one()
}

/// No purely imaginary eigenvalue of modulus greater than one.
pub fn weinstock_check(a: &Mat2) -> bool {
    let t = trace2(a);
    let det = det2(a);
    !(t.is_zero() && det > Rational::one())
}

fn rational_sqrt(q: &Rational) -> Option<Rational> {
    if q.is_negative() {
        return None;
    }
    let n = q.numer().sqrt();
    let d = q.denom().sqrt();
    (&n * &n == *q.numer() && &d * &d == *q.denom()).then(|| Rational::new(n, d))
}

/// Eigenvector of a real 2×2 matrix for the (possibly complex) eigenvalue
/// `lre + i·lim`, returned as (real part, imaginary part).
fn eigenvector(a: &Mat2, lre: &Rational, lim: &Rational) -> (Mat2Col, Mat2Col) {
    let z = Rational::zero();
    if !a[0][1].is_zero() {
        ([a[0][1].clone(), lre - &a[0][0]], [z.clone(), lim.clone()])
    } else if !a[1][0].is_zero() {
        ([lre - &a[1][1], a[1][0].clone()], [lim.clone(), z])
    } else if &a[0][0] == lre {
        ([Rational::one(), z.clone()], [z.clone(), z])
    } else {
        ([z.clone(), Rational::one()], [z.clone(), z])
    }
}

type Mat2Col = [Rational; 2];

fn from_columns(c0: &Mat2Col, c1: &Mat2Col) -> Mat2 {
    [[c0[0].clone(), c1[0].clone()], [c0[1].clone(), c1[1].clone()]]
}

/// Classify a real matrix into one of the three canonical shapes and return
/// the conjugator `S` with `S A S⁻¹` canonical.
///
/// Non-diagonalizable matrices are normalized to the Jordan block with `d = 1`;
/// any nonzero `d` is conjugate to it through `diag(1, c)`.
pub fn classify(a: &Mat2) -> Result<NormalForm, NormalFormError> {
    if has_eigenvalue_i(a) {
        return Err(NormalFormError::ComplexEigI);
    }
    let t = trace2(a);
    let det = det2(a);
    let four = Rational::from_integer(4.into());
    let two = Rational::from_integer(2.into());
    let disc = &t * &t - &four * &det;
    let zero = Rational::zero();
    let (case, pa, pd, e_mat) = if disc.is_positive() {
        let r = rational_sqrt(&disc).ok_or(NormalFormError::IrrationalEigenvalues)?;
        let lo = (&t - &r) / &two;
        let hi = (&t + &r) / &two;
        let (v_lo, _) = eigenvector(a, &lo, &zero);
        let (v_hi, _) = eigenvector(a, &hi, &zero);
        (CaseTag::Diag, lo, hi, from_columns(&v_lo, &v_hi))
    } else if disc.is_zero() {
        let lam = &t / &two;
        let is_scalar = a[0][1].is_zero() && a[1][0].is_zero();
        if is_scalar {
            (CaseTag::Diag, lam.clone(), lam, identity2())
        } else {
            // N = A - λI is nilpotent and nonzero: pick w with N w ≠ 0.
            let nil = [[&a[0][0] - &lam, a[0][1].clone()], [a[1][0].clone(), &a[1][1] - &lam]];
            let w: Mat2Col = if !nil[0][0].is_zero() || !nil[1][0].is_zero() {
                [Rational::one(), zero.clone()]
            } else {
                [zero.clone(), Rational::one()]
            };
            let nw = [
                &nil[0][0] * &w[0] + &nil[0][1] * &w[1],
                &nil[1][0] * &w[0] + &nil[1][1] * &w[1],
            ];
            (CaseTag::NonDiag, lam, Rational::one(), from_columns(&nw, &w))
        }
    } else {
        let beta = rational_sqrt(&(-&disc / &four)).ok_or(NormalFormError::IrrationalEigenvalues)?;
        let alpha = &t / &two;
        // Eigenvalue α − iβ gives A[w_r w_i] = [w_r w_i]·[[α, −β], [β, α]].
        let (wr, wi) = eigenvector(a, &alpha, &-beta.clone());
        (CaseTag::ComplexEig, alpha, beta, from_columns(&wr, &wi))
    };
    if !case.admits(&pa, &pd) {
        return Err(NormalFormError::InvalidParameters { case, a: pa.to_string(), d: pd.to_string() });
    }
    let s = inv2(&e_mat).expect("eigenvector basis is invertible");
    Ok(NormalForm {
        case,
        a: pa,
        d: pd,
        reducing_map: ComplexMat2::identity(),
        conjugator: s,
        raw_matrix: a.clone(),
    })
}

/// Reduce a transverse pair of totally real planes to `R² ∪ M(A)`, then
/// classify `A`.
pub fn reduce_pair(pp: &PlanePair) -> Result<NormalForm, NormalFormError> {
    pp.validate()?;
    // Basis of N as columns of a complex matrix B; T = B⁻¹ sends it to e₁, e₂.
    let col = |p: &Vec4| [(p[0].clone(), p[1].clone()), (p[2].clone(), p[3].clone())];
    let n0 = col(&pp.n[0]);
    let n1 = col(&pp.n[1]);
    let b = ComplexMat2 {
        re: [[n0[0].0.clone(), n1[0].0.clone()], [n0[1].0.clone(), n1[1].0.clone()]],
        im: [[n0[0].1.clone(), n1[0].1.clone()], [n0[1].1.clone(), n1[1].1.clone()]],
    };
    let t = complex_inverse(&b).ok_or(NormalFormError::NotTotallyReal("N"))?;
    let tm: Vec<Vec4> = pp.m.iter().map(|v| t.apply(v)).collect();
    // T(M) has columns P + iQ; A = P Q⁻¹.
    let p: Mat2 = [[tm[0][0].clone(), tm[1][0].clone()], [tm[0][2].clone(), tm[1][2].clone()]];
    let q: Mat2 = [[tm[0][1].clone(), tm[1][1].clone()], [tm[0][3].clone(), tm[1][3].clone()]];
    let q_inv = inv2(&q).ok_or(NormalFormError::NotTransverse)?;
    let a = mul2(&p, &q_inv);
    let mut nf = classify(&a)?;
    nf.reducing_map = t;
    Ok(nf)
}

fn complex_inverse(m: &ComplexMat2) -> Option<ComplexMat2> {
    // det = (a d − b c) for complex entries.
    let cm = |r: usize, c: usize| (m.re[r][c].clone(), m.im[r][c].clone());
    let mulc = |x: &(Rational, Rational), y: &(Rational, Rational)| {
        (&x.0 * &y.0 - &x.1 * &y.1, &x.0 * &y.1 + &x.1 * &y.0)
    };
    let p = mulc(&cm(0, 0), &cm(1, 1));
    let q = mulc(&cm(0, 1), &cm(1, 0));
    let det = (&p.0 - &q.0, &p.1 - &q.1);
    let norm = &det.0 * &det.0 + &det.1 * &det.1;
    if norm.is_zero() {
        return None;
    }
    let inv_det = (&det.0 / &norm, -&det.1 / &norm);
    let adj = [[cm(1, 1), neg_c(&cm(0, 1))], [neg_c(&cm(1, 0)), cm(0, 0)]];
    let mut re = zero2();
    let mut im = zero2();
    for r in 0..2 {
        for c in 0..2 {
            let v = mulc(&adj[r][c], &inv_det);
            re[r][c] = v.0;
            im[r][c] = v.1;
        }
    }
    Some(ComplexMat2 { re, im })
}

fn neg_c(x: &(Rational, Rational)) -> (Rational, Rational) {
    (-&x.0, -&x.1)
}

/// Whether `p` lies in the real span of the columns of `A + iI`.
pub fn in_matrix_plane(a: &Mat2, p: &Vec4) -> bool {
    let basis = matrix_plane_basis(a);
    rank(&[basis[0].clone(), basis[1].clone(), p.clone()]) == 2
}

/// Exact squared-distance data for a normal-form case, symbolic in `(a, d)`.
#[derive(Clone, Debug)]
pub struct DistanceData {
    pub case: CaseTag,
    /// Numerator of `d_M`.
    pub n_m: ParamPoly,
    /// Denominator token of `d_M`.
    pub k_m: DenomToken,
    pub d_n: ParamPoly,
    pub m_basis: [[ParamPoly; 4]; 2],
    pub m_perp_basis: [[ParamPoly; 4]; 2],
    /// `c_M` with `L(d_M; λ_{d_M}) = c_M d_M`.
    pub levi_constant: ParamPoly,
}

impl DistanceData {
    pub fn d_m(&self) -> ParamPoly {
        self.n_m.over(self.k_m)
    }

    /// Specialize every field to concrete `(a, d)`; tokens are folded away.
    pub fn specialize(&self, a: &Rational, d: &Rational) -> DistanceData {
        let sp = |p: &ParamPoly| p.specialize(a, d);
        let spv = |b: &[[ParamPoly; 4]; 2]| b.clone().map(|v| v.map(|c| sp(&c)));
        let k_val = self.k_m.eval(a, d);
        DistanceData {
            case: self.case,
            n_m: sp(&self.n_m).scale_by(&(Rational::one() / k_val)),
            k_m: DenomToken::TRIVIAL,
            d_n: self.d_n.clone(),
            m_basis: spv(&self.m_basis),
            m_perp_basis: spv(&self.m_perp_basis),
            levi_constant: sp(&self.levi_constant),
        }
    }
}

/// Squared distance data for a case with symbolic `(a, d)`.
pub fn distance_data(case: CaseTag) -> DistanceData {
    use vars::*;
    let (x, y, u, v, a, d) = (x(), y(), u(), v(), a(), d());
    let one = int(1);
    let zero = ParamPoly::zero();
    let a2 = a.pow(2);
    let d2 = d.pow(2);
    let d_n = y.pow(2) + v.pow(2);
    match case {
        CaseTag::Diag => {
            // (u − dv)²/(1+d²) + (x − ay)²/(1+a²) over (1+a²)(1+d²).
            let n_m = (&one + &a2) * (&u - &d * &v).pow(2) + (&one + &d2) * (&x - &a * &y).pow(2);
            DistanceData {
                case,
                n_m,
                k_m: DenomToken([1, 1, 0, 0]),
                d_n,
                m_basis: [
                    [a.clone(), one.clone(), zero.clone(), zero.clone()],
                    [zero.clone(), zero.clone(), d.clone(), one.clone()],
                ],
                m_perp_basis: [
                    [one.clone(), -&a, zero.clone(), zero.clone()],
                    [zero.clone(), zero.clone(), one.clone(), -&d],
                ],
                levi_constant: ParamPoly::constant(crate::poly::rat(1, 2)),
            }
        }
        CaseTag::ComplexEig => {
            let n_m = (&u - &d * &y - &a * &v).pow(2) + (&x - &a * &y + &d * &v).pow(2);
            let s = &(&one + &a2) + &d2;
            let c_num = (s.pow(2) - int(4) * &d2).scale_by(&crate::poly::rat(1, 2));
            DistanceData {
                case,
                n_m,
                k_m: DenomToken::factor(DenomFactor::OnePlusA2D2, 1),
                d_n,
                m_basis: [
                    [a.clone(), one.clone(), d.clone(), zero.clone()],
                    [-&d, zero.clone(), a.clone(), one.clone()],
                ],
                m_perp_basis: [
                    [zero.clone(), -&d, one.clone(), -&a],
                    [one.clone(), -&a, zero.clone(), d.clone()],
                ],
                levi_constant: c_num.over(DenomToken::factor(DenomFactor::OnePlusA2D2, 2)),
            }
        }
        CaseTag::NonDiag => {
            let s = &one + &a2;
            let jn = s.pow(2) + &d2;
            let n_m = &jn * (&u - &a * &v).pow(2) + (&s * (&x - &a * &y) - &d * &a * &u - &d * &v).pow(2);
            let inv_s = one.over(DenomToken::factor(DenomFactor::OnePlusA2, 1));
            DistanceData {
                case,
                n_m,
                k_m: DenomToken([1, 0, 0, 1]),
                d_n,
                m_basis: [
                    [a.clone(), one.clone(), zero.clone(), zero.clone()],
                    [d.clone(), zero.clone(), a.clone(), one.clone()],
                ],
                m_perp_basis: [
                    [zero.clone(), zero.clone(), one.clone(), -&a],
                    [one.clone(), -&a, -(&a * &d) * &inv_s, -&d * &inv_s],
                ],
                levi_constant: (&s.pow(2)).scale_by(&crate::poly::rat(1, 2))
                    .over(DenomToken::factor(DenomFactor::JordanNorm, 1)),
            }
        }
    }
}

/// Exact consistency checks on the distance data: `d_M` vanishes on `M`,
/// `d_M(w) = |w|²` on `M⊥`, and the listed bases are orthogonal.
pub fn verify_distance_data(dd: &DistanceData) -> bool {
    let d_m = dd.d_m();
    let at = |vec: &[ParamPoly; 4]| d_m.compose(vec);
    let sq = |vec: &[ParamPoly; 4]| vec.iter().map(|c| c * c).sum::<ParamPoly>();
    let dot = |p: &[ParamPoly; 4], q: &[ParamPoly; 4]| (0..4).map(|i| &p[i] * &q[i]).sum::<ParamPoly>();
    // A generic point of M: s·m₁ + t·m₂ with s, t stand-ins for two coordinates.
    let s = ParamPoly::var(Var::X);
    let t = ParamPoly::var(Var::Y);
    let generic: [ParamPoly; 4] = std::array::from_fn(|i| &s * &dd.m_basis[0][i] + &t * &dd.m_basis[1][i]);
    let vanishes = at(&generic).is_zero();
    let perp = dd.m_perp_basis.iter().all(|w| at(w) == sq(w));
    let ortho = dd
        .m_basis
        .iter()
        .all(|m| dd.m_perp_basis.iter().all(|w| dot(m, w).is_zero()));
    vanishes && perp && ortho
}

/// Text input: a matrix or a plane pair, rationals written as `p/q`.
///
/// ```text
/// # comment
/// A = 0 -2 ; 2 0
/// ```
/// or
/// ```text
/// M = 1 1 0 0 ; 0 0 2 1
/// N = 1 0 0 0 ; 0 0 1 0
/// ```
#[derive(Clone, Debug, PartialEq)]
pub enum PlaneInput {
    Matrix(Mat2),
    Planes(PlanePair),
}

pub fn parse_input(text: &str) -> Result<PlaneInput, NormalFormError> {
    let mut a: Option<Mat2> = None;
    let mut m: Option<[Vec4; 2]> = None;
    let mut n: Option<[Vec4; 2]> = None;
    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| NormalFormError::Parse { line: line_no, message };
        let (key, rest) = line.split_once('=').ok_or_else(|| err("expected `KEY = row ; row`".into()))?;
        let rows: Vec<Vec<Rational>> = rest
            .split(';')
            .map(|row| {
                row.split_whitespace()
                    .map(|tok| parse_rational(tok).ok_or_else(|| err(format!("invalid rational `{tok}`"))))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?;
        match key.trim() {
            "A" => {
                if rows.len() != 2 || rows.iter().any(|r| r.len() != 2) {
                    return Err(err("matrix needs two rows of two entries".into()));
                }
                a = Some(std::array::from_fn(|r| std::array::from_fn(|c| rows[r][c].clone())));
            }
            k @ ("M" | "N") => {
                if rows.len() != 2 || rows.iter().any(|r| r.len() != 4) {
                    return Err(err("plane needs two vectors of four entries".into()));
                }
                let basis: [Vec4; 2] = std::array::from_fn(|r| std::array::from_fn(|c| rows[r][c].clone()));
                if k == "M" {
                    m = Some(basis);
                } else {
                    n = Some(basis);
                }
            }
            other => return Err(err(format!("unknown key `{other}`"))),
        }
    }
    match (a, m, n) {
        (Some(a), None, None) => Ok(PlaneInput::Matrix(a)),
        (None, Some(m), Some(n)) => Ok(PlaneInput::Planes(PlanePair { m, n })),
        _ => Err(NormalFormError::Parse {
            line: last_line.max(1),
            message: "expected either `A` alone or both `M` and `N`".into(),
        }),
    }
}

pub fn parse_rational(s: &str) -> Option<Rational> {
    match s.split_once('/') {
        Some((n, d)) => {
            let d: num_bigint::BigInt = d.parse().ok()?;
            if d.is_zero() {
                return None;
            }
            Some(Rational::new(n.parse().ok()?, d))
        }
        None => parse_decimal(s),
    }
}

/// Exact value of `12`, `-0.25`, `3e-9` or `1.5E+2`.
fn parse_decimal(s: &str) -> Option<Rational> {
    let (mant, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (int_part, frac) = mant.split_once('.').unwrap_or((mant, ""));
    if frac.starts_with(['+', '-']) || !frac.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac}");
    if matches!(digits.as_str(), "" | "-" | "+") {
        return None;
    }
    let n: num_bigint::BigInt = digits.parse().ok()?;
    let shift = exp - frac.len() as i32;
    let ten = Rational::from_integer(10.into());
    let scale = num_traits::pow(ten, shift.unsigned_abs() as usize);
    let n = Rational::from_integer(n);
    Some(if shift >= 0 { n * scale } else { n / scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::rat;
    use proptest::prelude::*;

    fn m2(v: [[i64; 2]; 2]) -> Mat2 {
        v.map(|r| r.map(|c| rat(c, 1)))
    }

    fn v4(v: [i64; 4]) -> Vec4 {
        v.map(|c| rat(c, 1))
    }

    #[test]
    fn rational_literals() {
        assert_eq!(parse_rational("-3/6"), Some(rat(-1, 2)));
        assert_eq!(parse_rational("0.25"), Some(rat(1, 4)));
        assert_eq!(parse_rational("-1.5e-3"), Some(rat(-3, 2000)));
        assert_eq!(parse_rational("2E+2"), Some(rat(200, 1)));
        assert_eq!(parse_rational("7"), Some(rat(7, 1)));
        for bad in ["", "1/0", "e3", "1.2.3", "abc", "1e", "-"] {
            assert_eq!(parse_rational(bad), None, "{bad}");
        }
    }

    #[test]
    fn totally_real_examples() {
        assert!(totally_real_check(&[v4([1, 0, 0, 0]), v4([0, 0, 1, 0])]).unwrap());
        // (1, 0) and (i, 0) span the complex line C × {0}.
        assert!(!totally_real_check(&[v4([1, 0, 0, 0]), v4([0, 1, 0, 0])]).unwrap());
        let jordan = matrix_plane_basis(&m2([[0, 1], [0, 0]]));
        assert!(totally_real_check(&jordan).unwrap());
        assert!(matches!(
            totally_real_check(&[v4([1, 0, 0, 0]), v4([2, 0, 0, 0])]),
            Err(NormalFormError::DegenerateBasis)
        ));
    }

    #[test]
    fn reduce_examples() {
        let pp = PlanePair { m: [v4([0, 1, 0, 0]), v4([0, 0, 0, 1])], n: [v4([1, 0, 0, 0]), v4([0, 0, 1, 0])] };
        let nf = reduce_pair(&pp).unwrap();
        assert_eq!((nf.case, nf.a.clone(), nf.d.clone()), (CaseTag::Diag, rat(0, 1), rat(0, 1)));

        let pp = PlanePair { m: [v4([1, 1, 0, 0]), v4([0, 0, 2, 1])], n: [v4([1, 0, 0, 0]), v4([0, 0, 1, 0])] };
        let nf = reduce_pair(&pp).unwrap();
        assert_eq!(nf.raw_matrix, m2([[1, 0], [0, 2]]));
        assert_eq!((nf.case, nf.a.clone(), nf.d.clone()), (CaseTag::Diag, rat(1, 1), rat(2, 1)));

        // A = [[0, −1], [1, 0]] has eigenvalue i: M(A) is a complex line.
        let pp = PlanePair::from_matrix(&m2([[0, -1], [1, 0]]));
        assert!(matches!(reduce_pair(&pp), Err(NormalFormError::NotTotallyReal("M"))));
        assert!(matches!(classify(&m2([[0, -1], [1, 0]])), Err(NormalFormError::ComplexEigI)));

        let pp = PlanePair { m: [v4([1, 0, 0, 0]), v4([0, 0, 0, 1])], n: [v4([1, 0, 0, 0]), v4([0, 0, 1, 0])] };
        assert!(matches!(reduce_pair(&pp), Err(NormalFormError::NotTransverse)));
    }

    #[test]
    fn classify_examples() {
        let nf = classify(&m2([[1, 0], [0, 2]])).unwrap();
        assert_eq!((nf.case, nf.a.clone(), nf.d.clone()), (CaseTag::Diag, rat(1, 1), rat(2, 1)));
        assert_eq!(nf.conjugator, identity2());

        let nf = classify(&m2([[0, -2], [2, 0]])).unwrap();
        assert_eq!((nf.case, nf.a.clone(), nf.d.clone()), (CaseTag::ComplexEig, rat(0, 1), rat(2, 1)));

        let nf = classify(&m2([[3, 1], [0, 3]])).unwrap();
        assert_eq!((nf.case, nf.a.clone(), nf.d.clone()), (CaseTag::NonDiag, rat(3, 1), rat(1, 1)));

        let nf = classify(&m2([[2, 0], [0, 1]])).unwrap();
        assert_eq!((nf.a.clone(), nf.d.clone()), (rat(1, 1), rat(2, 1)));

        assert!(matches!(classify(&m2([[0, 1], [2, 0]])), Err(NormalFormError::IrrationalEigenvalues)));
    }

    #[test]
    fn conjugator_brings_matrix_to_canonical_shape() {
        for a in [m2([[1, 2], [3, 0]]), m2([[1, -5], [1, -1]]), m2([[2, 1], [-1, 4]]), m2([[5, 0], [3, 5]])] {
            let nf = classify(&a).unwrap();
            let s_inv = inv2(&nf.conjugator).unwrap();
            assert_eq!(mul2(&mul2(&nf.conjugator, &a), &s_inv), nf.matrix(), "{a:?}");
        }
    }

    #[test]
    fn weinstock_examples() {
        assert!(!weinstock_check(&m2([[0, -2], [2, 0]])));
        assert!(weinstock_check(&m2([[0, 0], [0, 0]])));
        let quarter = [[rat(0, 1), rat(-1, 4)], [rat(1, 4), rat(0, 1)]];
        assert!(weinstock_check(&quarter));
    }

    #[test]
    fn distance_examples() {
        let zero = [rat(0, 1), rat(0, 1)];
        let dd = distance_data(CaseTag::Diag);
        let (xx, uu) = (crate::poly::vars::x(), crate::poly::vars::u());
        assert_eq!(dd.d_m().specialize(&zero[0], &zero[1]), &xx * &xx + &uu * &uu);
        assert_eq!(dd.d_m().eval(&v4([1, 1, 0, 0]), &zero), rat(1, 1));
        // Basis vector (a, 1, 0, 0) of M in the diagonal case.
        let pt = [rat(3, 7), rat(1, 1), rat(0, 1), rat(0, 1)];
        assert!(dd.d_m().eval(&pt, &[rat(3, 7), rat(-2, 5)]).is_zero());

        let dd = distance_data(CaseTag::ComplexEig).specialize(&rat(1, 1), &rat(1, 1));
        use crate::poly::vars::*;
        let expect = ((u() - y() - v()).pow(2) + (x() - y() + v()).pow(2)).scale_by(&rat(1, 3));
        assert_eq!(dd.n_m, expect);

        let dd = distance_data(CaseTag::ComplexEig);
        assert_eq!(dd.d_m().eval(&v4([1, 0, 0, 0]), &[rat(0, 1), rat(1, 2)]), rat(4, 5));
    }

    #[test]
    fn distance_data_is_consistent_for_every_case() {
        for case in CaseTag::ALL {
            assert!(verify_distance_data(&distance_data(case)), "{case}");
        }
    }

    #[test]
    fn input_parsing() {
        let inp = parse_input("# rotation\nA = 0 -2 ; 2 0\n").unwrap();
        assert_eq!(inp, PlaneInput::Matrix(m2([[0, -2], [2, 0]])));
        let inp = parse_input("M = 0 1 0 0 ; 0 0 0 1\nN = 1 0 0 0 ; 0 0 1 0").unwrap();
        assert!(matches!(inp, PlaneInput::Planes(_)));
        match parse_input("A = 0 -2 ; 2 0\nB = 1\n") {
            Err(NormalFormError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match parse_input("\nA = 1/0 0 ; 0 1") {
            Err(NormalFormError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    fn small_rat() -> impl Strategy<Value = Rational> {
        (-6i64..7, 1i64..4).prop_map(|(n, d)| rat(n, d))
    }

    fn small_mat() -> impl Strategy<Value = Mat2> {
        prop::array::uniform4(small_rat()).prop_map(|[p, q, r, s]| [[p, q], [r, s]])
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn classify_is_conjugation_invariant(a in small_mat(), s in small_mat()) {
            prop_assume!(!det2(&s).is_zero());
            let Ok(nf) = classify(&a) else { return Ok(()) };
            let sa = mul2(&mul2(&s, &a), &inv2(&s).unwrap());
            let nf2 = classify(&sa).unwrap();
            prop_assert_eq!(nf.case, nf2.case);
            prop_assert_eq!(nf.a, nf2.a);
            prop_assert_eq!(nf.d, nf2.d);
        }

        #[test]
        fn weinstock_is_conjugation_invariant(a in small_mat(), s in small_mat()) {
            prop_assume!(!det2(&s).is_zero());
            let sa = mul2(&mul2(&s, &a), &inv2(&s).unwrap());
            prop_assert_eq!(weinstock_check(&a), weinstock_check(&sa));
        }
    }
}
