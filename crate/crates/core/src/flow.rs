//! The globally patched defining function `ρ₀ = θρ + (1 − θ)σ`, its sublevel
//! boundaries, convexification, and the negative gradient flow onto `M ∪ N`.
//!
//! `θ = χ(|z|)` is a smooth radial cutoff equal to one on `B_r` and zero
//! outside `B_{2r}`; `σ = min(d_M, d_N)`, which is `d_M` on the `M`-tube and
//! `d_N` on the `N`-tube.

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use num_complex::Complex64;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::exec::Execution;
use crate::levi::{complex_hessian_from_real, hermitian_form, tangent_from_gradient};
use crate::normal_form::{distance_data, CaseTag, NormalForm};
use crate::poly::{ParamPoly, Rational};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("tubes of width {eps} meet outside the ball of radius {r}; need eps < {limit}")]
    TubesOverlap { eps: f64, r: f64, limit: f64 },
    #[error("ray lies in M or N and never reaches the level set")]
    RayMiss,
    #[error("gradient vanishes at a boundary sample {0:?}")]
    GradientVanishes([f64; 4]),
    #[error("no convexifying constant below {0}")]
    NoCFound(f64),
    #[error("{0} must be positive")]
    NonPositive(&'static str),
}

fn vec4(p: &[f64; 4]) -> Vector4<f64> {
    Vector4::new(p[0], p[1], p[2], p[3])
}

fn arr4(v: &Vector4<f64>) -> [f64; 4] {
    [v[0], v[1], v[2], v[3]]
}

/// `e^{−1/t}` and its first two derivatives, zero for `t ≤ 0`.
fn bump(t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let l = t.ln();
    let f = (-1.0 / t).exp();
    let f1 = (-1.0 / t - 2.0 * l).exp();
    let f2 = (1.0 - 2.0 * t) * (-1.0 / t - 4.0 * l).exp();
    (f, f1, f2)
}

/// `χ(t)` with its first and second derivatives: one on `t ≤ r`, zero on `t ≥ 2r`.
pub fn cutoff_jet(t: f64, r: f64) -> (f64, f64, f64) {
    let tau = (t - r) / r;
    if tau <= 0.0 {
        return (1.0, 0.0, 0.0);
    }
    if tau >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let (a, a1, a2) = bump(1.0 - tau);
    let (b, b1, b2) = bump(tau);
    // A(τ) = f(1 − τ), B(τ) = f(τ).
    let (da, dda) = (-a1, a2);
    let (db, ddb) = (b1, b2);
    let s = a + b;
    let chi = a / s;
    let num = da * b - a * db;
    let d1 = num / (s * s);
    let dnum = dda * b - a * ddb;
    let d2 = dnum / (s * s) - 2.0 * num * (da + db) / (s * s * s);
    (chi, d1 / r, d2 / (r * r))
}

pub fn cutoff(t: f64, r: f64) -> (f64, f64) {
    let (c, d, _) = cutoff_jet(t, r);
    (c, d)
}

/// Value, gradient and Hessian at a point.
#[derive(Clone, Copy, Debug)]
pub struct Jet {
    pub value: f64,
    pub grad: Vector4<f64>,
    pub hess: Matrix4<f64>,
}

/// `zᵀGz` with `G = Σ wᵢwᵢᵀ` for an orthonormal pair `wᵢ`, evaluated as `Σ (wᵢ·z)²`.
#[derive(Clone, Copy, Debug)]
pub struct QuadForm {
    pub g: Matrix4<f64>,
    pub w: [Vector4<f64>; 2],
}

impl QuadForm {
    /// Read the Gram matrix of a quadratic form with rational coefficients
    /// and pair it with an orthonormal frame of its range.
    pub fn from_poly(p: &ParamPoly, w: [Vector4<f64>; 2]) -> QuadForm {
        let mut g = Matrix4::zeros();
        for (m, c) in p.terms() {
            let e = m.exps();
            let idx: Vec<usize> = (0..4).flat_map(|i| std::iter::repeat(i).take(e[i] as usize)).collect();
            assert_eq!(idx.len(), 2, "not a quadratic form");
            let c = c.to_f64().unwrap_or(f64::NAN);
            if idx[0] == idx[1] {
                g[(idx[0], idx[0])] += c;
            } else {
                g[(idx[0], idx[1])] += 0.5 * c;
                g[(idx[1], idx[0])] += 0.5 * c;
            }
        }
        let frame = w[0] * w[0].transpose() + w[1] * w[1].transpose();
        assert!((frame - g).abs().max() <= 1e-12 * g.abs().max().max(1.0), "frame does not match the form");
        QuadForm { g, w }
    }

    pub fn value(&self, z: &Vector4<f64>) -> f64 {
        let (p, q) = (self.w[0].dot(z), self.w[1].dot(z));
        p * p + q * q
    }

    pub fn jet(&self, z: &Vector4<f64>) -> Jet {
        let (p, q) = (self.w[0].dot(z), self.w[1].dot(z));
        Jet { value: p * p + q * q, grad: 2.0 * (p * self.w[0] + q * self.w[1]), hess: 2.0 * self.g }
    }
}

/// Which expression governs `ρ₀` at a point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Region {
    Core,
    Blend,
    Far,
}

#[derive(Clone, Debug)]
pub struct PatchedField {
    pub case: CaseTag,
    pub a: Rational,
    pub d: Rational,
    pub r: f64,
    pub eps: f64,
    pub dm: QuadForm,
    pub dn: QuadForm,
    /// `min` of `max(d_M, d_N)` on the unit sphere; tubes are disjoint outside
    /// `B_r` when `eps < r²·separation`.
    pub separation: f64,
}

impl PatchedField {
    pub fn region(&self, p: &[f64; 4]) -> Region {
        let s = crate::numeric::norm4(p);
        if s <= self.r {
            Region::Core
        } else if s >= 2.0 * self.r {
            Region::Far
        } else {
            Region::Blend
        }
    }

    /// `ρ = d_M²d_N + d_M d_N²` with derivatives from the chain rule.
    pub fn core_jet(&self, z: &Vector4<f64>) -> Jet {
        let s = self.dm.jet(z);
        let t = self.dn.jet(z);
        let (sv, tv) = (s.value, t.value);
        let fs = 2.0 * sv * tv + tv * tv;
        let ft = sv * sv + 2.0 * sv * tv;
        let (fss, fst, ftt) = (2.0 * tv, 2.0 * (sv + tv), 2.0 * sv);
        let value = sv * sv * tv + sv * tv * tv;
        let grad = fs * s.grad + ft * t.grad;
        let hess = fs * s.hess
            + ft * t.hess
            + fss * s.grad * s.grad.transpose()
            + fst * (s.grad * t.grad.transpose() + t.grad * s.grad.transpose())
            + ftt * t.grad * t.grad.transpose();
        Jet { value, grad, hess }
    }

    /// `σ = min(d_M, d_N)`.
    pub fn far_jet(&self, z: &Vector4<f64>) -> Jet {
        let s = self.dm.jet(z);
        let t = self.dn.jet(z);
        if s.value <= t.value {
            s
        } else {
            t
        }
    }

    pub fn jet(&self, p: &[f64; 4]) -> Jet {
        let z = vec4(p);
        let s = z.norm();
        match self.region(p) {
            Region::Core => self.core_jet(&z),
            Region::Far => self.far_jet(&z),
            Region::Blend => {
                let rho = self.core_jet(&z);
                let sig = self.far_jet(&z);
                let (th, c1, c2) = cutoff_jet(s, self.r);
                let u = z / s;
                let dth = c1 * u;
                let hth = c2 * u * u.transpose() + (c1 / s) * (Matrix4::identity() - u * u.transpose());
                let diff = rho.value - sig.value;
                let dgrad = rho.grad - sig.grad;
                Jet {
                    value: sig.value + th * diff,
                    grad: th * rho.grad + (1.0 - th) * sig.grad + diff * dth,
                    hess: th * rho.hess
                        + (1.0 - th) * sig.hess
                        + dth * dgrad.transpose()
                        + dgrad * dth.transpose()
                        + diff * hth,
                }
            }
        }
    }

    pub fn value(&self, p: &[f64; 4]) -> f64 {
        let z = vec4(p);
        let s = self.dm.value(&z);
        let t = self.dn.value(&z);
        match self.region(p) {
            Region::Core => s * s * t + s * t * t,
            Region::Far => s.min(t),
            Region::Blend => {
                let (th, _) = cutoff(z.norm(), self.r);
                let sig = s.min(t);
                sig + th * (s * s * t + s * t * t - sig)
            }
        }
    }

    pub fn gradient(&self, p: &[f64; 4]) -> [f64; 4] {
        arr4(&self.jet(p).grad)
    }

    /// Euclidean distance to `M ∪ N`.
    pub fn distance_to_union(&self, p: &[f64; 4]) -> f64 {
        let z = vec4(p);
        self.dm.value(&z).min(self.dn.value(&z)).max(0.0).sqrt()
    }

    /// Normalized tangential Levi form `L(ρ₀; λ)/|λ|²` with `λ = λ_{ρ₀}`.
    pub fn tangent_levi(&self, p: &[f64; 4]) -> Option<f64> {
        let jet = self.jet(p);
        tangent_levi_of(&jet)
    }
}

fn tangent_levi_of(jet: &Jet) -> Option<f64> {
    let g = arr4(&jet.grad);
    let lam = tangent_from_gradient(&g);
    let n2 = lam[0].norm_sqr() + lam[1].norm_sqr();
    if n2 == 0.0 {
        return None;
    }
    let h = complex_hessian_from_real(&hess_array(&jet.hess));
    Some(hermitian_form(h, &lam) / n2)
}

fn hess_array(h: &Matrix4<f64>) -> [[f64; 4]; 4] {
    std::array::from_fn(|i| std::array::from_fn(|j| h[(i, j)]))
}

/// Smallest value of `max(d_M, d_N)` on the unit sphere, and a guaranteed lower bound.
fn tube_separation(dm: &QuadForm, dn: &QuadForm) -> f64 {
    let f = |p: &[f64; 4]| {
        let z = vec4(p);
        dm.value(&z).max(dn.value(&z))
    };
    let sampled = crate::sphere::minimize_on_sphere(&f, 4000, 17, Execution::Sequential).value;
    let lower = SymmetricEigen::new(dm.g + dn.g).eigenvalues.min() / 2.0;
    sampled.max(lower)
}

pub fn build_patched(nf: &NormalForm, r: f64, eps: f64) -> Result<PatchedField, FlowError> {
    if r <= 0.0 {
        return Err(FlowError::NonPositive("r"));
    }
    if eps <= 0.0 {
        return Err(FlowError::NonPositive("eps"));
    }
    let dd = distance_data(nf.case).specialize(&nf.a, &nf.d);
    let [(_, m_perp), (_, n_perp)] = plane_frames(nf);
    let dm = QuadForm::from_poly(&dd.n_m, m_perp);
    let dn = QuadForm::from_poly(&dd.d_n, n_perp);
    let separation = tube_separation(&dm, &dn);
    let limit = separation * r * r;
    if eps >= limit {
        return Err(FlowError::TubesOverlap { eps, r, limit });
    }
    Ok(PatchedField { case: nf.case, a: nf.a.clone(), d: nf.d.clone(), r, eps, dm, dn, separation })
}

/// Largest `ε` in `{10⁻², 10⁻³, …, 10⁻⁸}` for which the tubes are disjoint.
pub fn default_eps(nf: &NormalForm, r: f64) -> Option<f64> {
    (2..=8).map(|k| 10f64.powi(-k)).find(|&e| build_patched(nf, r, e).is_ok())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Termination {
    Converged,
    MaxSteps,
    LeftDomain,
    /// Small gradient relative to `ρ₀/|z|` away from `M ∪ N`.
    Stalled,
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowSample {
    pub point: [f64; 4],
    pub value: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowTrace {
    pub samples: Vec<FlowSample>,
    pub termination: Termination,
    pub steps: usize,
    pub rejected: usize,
}

impl FlowTrace {
    pub fn last(&self) -> &FlowSample {
        self.samples.last().expect("trace has a start sample")
    }

    pub fn is_monotone(&self) -> bool {
        self.samples.windows(2).all(|w| w[1].value <= w[0].value + 1e-12)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FlowOptions {
    pub max_steps: usize,
    pub rtol: f64,
    pub atol: f64,
    pub grad_tol: f64,
    pub dist_tol: f64,
    /// Flows leaving `B_{max_radius}` stop with [`Termination::LeftDomain`].
    pub max_radius: f64,
    pub keep_every: usize,
}

impl Default for FlowOptions {
    fn default() -> FlowOptions {
        FlowOptions {
            max_steps: 20_000,
            rtol: 1e-7,
            atol: 1e-13,
            grad_tol: 1e-8,
            dist_tol: 1e-4,
            max_radius: 1e3,
            keep_every: 1,
        }
    }
}

// Dormand–Prince 5(4) tableau.
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate `ẋ = −∇ρ₀(x)` with an embedded 5(4) pair, rejecting any step
/// that increases `ρ₀`.
pub fn flow_integrate(pf: &PatchedField, start: &[f64; 4], opts: &FlowOptions) -> FlowTrace {
    let field = |p: &Vector4<f64>| -vec4(&pf.gradient(&arr4(p)));
    let mut x = vec4(start);
    let mut value = pf.value(start);
    let mut k1 = field(&x);
    let sample = |x: &Vector4<f64>, value: f64, g: &Vector4<f64>| FlowSample {
        point: arr4(x),
        value,
        grad_norm: g.norm(),
    };
    let mut samples = vec![sample(&x, value, &k1)];
    let mut h = 1e-2 / (1.0 + k1.norm());
    let (mut steps, mut rejected) = (0usize, 0usize);
    let termination = loop {
        let gnorm = k1.norm();
        let dist = pf.distance_to_union(&arr4(&x));
        if gnorm < opts.grad_tol && dist < opts.dist_tol {
            break Termination::Converged;
        }
        let radius = x.norm();
        if radius > opts.max_radius {
            break Termination::LeftDomain;
        }
        if value > 0.0 && gnorm * radius < 1e-3 * value && dist >= opts.dist_tol {
            break Termination::Stalled;
        }
        if steps >= opts.max_steps {
            break Termination::MaxSteps;
        }
        let mut k = [Vector4::zeros(); 7];
        k[0] = k1;
        for s in 1..7 {
            let mut y = x;
            for j in 0..s {
                y += h * DP_A[s][j] * k[j];
            }
            k[s] = field(&y);
        }
        let mut x5 = x;
        let mut x4 = x;
        for s in 0..7 {
            x5 += h * DP_B5[s] * k[s];
            x4 += h * DP_B4[s] * k[s];
        }
        let err = (0..4)
            .map(|i| (x5[i] - x4[i]).abs() / (opts.atol + opts.rtol * x[i].abs().max(x5[i].abs())))
            .fold(0.0f64, f64::max);
        let new_value = pf.value(&arr4(&x5));
        if err <= 1.0 && new_value <= value {
            x = x5;
            value = new_value;
            k1 = k[6];
            steps += 1;
            if steps % opts.keep_every.max(1) == 0 {
                samples.push(sample(&x, value, &k1));
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= factor;
        } else {
            rejected += 1;
            let factor = if err > 1.0 { (0.9 * err.powf(-0.25)).clamp(0.1, 0.5) } else { 0.5 };
            h *= factor;
            if h < 1e-300 {
                break Termination::Stalled;
            }
        }
    };
    if samples.last().map(|s| s.point) != Some(arr4(&x)) {
        samples.push(sample(&x, value, &k1));
    }
    FlowTrace { samples, termination, steps, rejected }
}

/// Orthonormal bases `(plane, normal complement)` of `M` and `N`.
pub fn plane_frames(nf: &NormalForm) -> [([Vector4<f64>; 2], [Vector4<f64>; 2]); 2] {
    let dd = distance_data(nf.case).specialize(&nf.a, &nf.d);
    let conv = |v: &[ParamPoly; 4]| {
        Vector4::from_fn(|i, _| {
            v[i].terms().next().map(|(_, c)| c.to_f64().unwrap_or(f64::NAN)).unwrap_or(0.0)
        })
    };
    let ortho = |b: [Vector4<f64>; 2]| {
        let e0 = b[0].normalize();
        let e1 = (b[1] - e0 * e0.dot(&b[1])).normalize();
        [e0, e1]
    };
    let m = ortho([conv(&dd.m_basis[0]), conv(&dd.m_basis[1])]);
    let mp = ortho([conv(&dd.m_perp_basis[0]), conv(&dd.m_perp_basis[1])]);
    let e = |i: usize| Vector4::from_fn(|k, _| if k == i { 1.0 } else { 0.0 });
    [(m, mp), ([e(0), e(2)], [e(1), e(3)])]
}

fn stream_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

fn unit_circle(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let t = rng.gen::<f64>() * std::f64::consts::TAU;
    (t.cos(), t.sin())
}

/// Ray directions: half uniform on `S³`, a quarter each hugging `M` and `N`
/// at log-uniform angular offsets.
fn boundary_direction(frames: &[([Vector4<f64>; 2], [Vector4<f64>; 2]); 2], level: f64, rng: &mut ChaCha8Rng) -> Vector4<f64> {
    let kind = rng.gen_range(0..4);
    if kind < 2 {
        let g: [f64; 4] = std::array::from_fn(|_| rng.sample::<f64, _>(rand::distributions::Standard) - 0.5);
        let v = vec4(&g);
        return if v.norm() > 1e-9 { v.normalize() } else { Vector4::new(1.0, 1.0, 1.0, 1.0).normalize() };
    }
    let (plane, normal) = &frames[kind - 2];
    let (c, s) = unit_circle(rng);
    let (cn, sn) = unit_circle(rng);
    let base = c * plane[0] + s * plane[1];
    let nrm = cn * normal[0] + sn * normal[1];
    let lo = 0.5 * level.log10() - 1.5;
    let offset = 10f64.powf(rng.gen_range(lo..0.0));
    (base + offset * nrm).normalize()
}

/// The point on the ray through `dir` where `ρ₀` first reaches `level`.
pub fn boundary_point_on_ray(pf: &PatchedField, dir: &[f64; 4], level: f64) -> Result<[f64; 4], FlowError> {
    let u = vec4(dir).normalize();
    let at = |t: f64| arr4(&(t * u));
    let core = pf.core_jet(&u).value;
    if core > 0.0 {
        let t = (level / core).powf(1.0 / 6.0);
        if t <= pf.r {
            return Ok(at(t));
        }
    }
    let f = |t: f64| pf.value(&at(t)) - level;
    let mut lo = if core > 0.0 { pf.r.min((level / core).powf(1.0 / 6.0)) } else { 0.0 };
    if f(lo) > 0.0 {
        lo = 0.0;
    }
    let mut hi = pf.r.max(lo) * 2.0;
    while f(hi) <= 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e8 {
            return Err(FlowError::RayMiss);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.abs() <= 1e-12 * level || hi - lo <= f64::EPSILON * hi {
            return Ok(at(mid));
        }
        if fm > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(at(0.5 * (lo + hi)))
}

pub fn boundary_sample(pf: &PatchedField, level: f64, n: usize, seed: u64, exec: Execution) -> Result<Vec<[f64; 4]>, FlowError> {
    if level <= 0.0 {
        return Err(FlowError::NonPositive("level"));
    }
    let nf = NormalForm::from_params(pf.case, pf.a.clone(), pf.d.clone()).expect("field built from a valid form");
    let frames = plane_frames(&nf);
    let pts = exec.map_indexed(n, |i| {
        let mut rng = stream_rng(seed, i);
        loop {
            let dir = boundary_direction(&frames, level, &mut rng);
            match boundary_point_on_ray(pf, &arr4(&dir), level) {
                Ok(p) => return p,
                Err(FlowError::RayMiss) => continue,
                Err(e) => panic!("{e}"),
            }
        }
    });
    Ok(pts)
}

#[derive(Clone, Debug, Serialize)]
pub struct PseudoconvexityScan {
    pub level: f64,
    pub samples: usize,
    /// Smallest `L(ρ₀; λ)/|λ|²` over boundary samples, `λ` the complex tangent.
    pub min_levi: f64,
    pub argmin: [f64; 4],
    pub argmin_region: Region,
    pub max_residual: f64,
    pub per_region: [(Region, usize); 3],
    pub pass: bool,
}

pub fn pseudoconvexity_scan(pf: &PatchedField, level: f64, n: usize, seed: u64, exec: Execution) -> Result<PseudoconvexityScan, FlowError> {
    let pts = boundary_sample(pf, level, n, seed, exec)?;
    let vals = exec.map_slice(&pts, |p| (pf.tangent_levi(p), (pf.value(p) - level).abs() / level));
    let mut best = (f64::INFINITY, [0.0; 4]);
    let mut max_residual = 0.0f64;
    let mut counts = [(Region::Core, 0), (Region::Blend, 0), (Region::Far, 0)];
    for (p, (lv, res)) in pts.iter().zip(&vals) {
        let lv = lv.ok_or(FlowError::GradientVanishes(*p))?;
        max_residual = max_residual.max(*res);
        let idx = match pf.region(p) {
            Region::Core => 0,
            Region::Blend => 1,
            Region::Far => 2,
        };
        counts[idx].1 += 1;
        if lv < best.0 {
            best = (lv, *p);
        }
    }
    Ok(PseudoconvexityScan {
        level,
        samples: pts.len(),
        min_levi: best.0,
        argmin: best.1,
        argmin_region: pf.region(&best.1),
        max_residual,
        per_region: counts,
        pass: best.0 > 0.0,
    })
}

/// `ρ̃ = (ρ₀ − ε)e^{C(ρ₀ − ε)}`.
#[derive(Clone, Debug)]
pub struct Convexified<'a> {
    pub pf: &'a PatchedField,
    pub level: f64,
    pub c: f64,
}

impl Convexified<'_> {
    pub fn value(&self, p: &[f64; 4]) -> f64 {
        let s = self.pf.value(p) - self.level;
        s * (self.c * s).exp()
    }

    /// Complex Hessian `(H₁₁, H₂₂, H₁₂)` of `ρ̃`.
    pub fn complex_hessian(&self, p: &[f64; 4]) -> (f64, f64, Complex64) {
        let jet = self.pf.jet(p);
        let s = jet.value - self.level;
        let e = (self.c * s).exp();
        // φ(s) = s e^{Cs}: φ' = (1 + Cs)e^{Cs}, φ'' = C(2 + Cs)e^{Cs}.
        let d1 = (1.0 + self.c * s) * e;
        let d2 = self.c * (2.0 + self.c * s) * e;
        let hess = d1 * jet.hess + d2 * jet.grad * jet.grad.transpose();
        complex_hessian_from_real(&hess_array(&hess))
    }

    /// Smallest eigenvalue of the complex Hessian of `ρ̃`.
    pub fn min_eigenvalue(&self, p: &[f64; 4]) -> f64 {
        hermitian_min_eig(self.complex_hessian(p))
    }
}

pub fn convexify(pf: &PatchedField, level: f64, c: f64) -> Convexified<'_> {
    Convexified { pf, level, c }
}

/// Smallest eigenvalue of `[[h₁₁, h₁₂], [h̄₁₂, h₂₂]]`.
pub fn hermitian_min_eig(h: (f64, f64, Complex64)) -> f64 {
    let (a, b, c) = h;
    0.5 * (a + b - ((a - b).powi(2) + 4.0 * c.norm_sqr()).sqrt())
}

fn positive_definite(h: (f64, f64, Complex64)) -> bool {
    let (a, b, c) = h;
    a + b > 0.0 && a * b - c.norm_sqr() > 0.0
}

#[derive(Clone, Debug, Serialize)]
pub struct FindC {
    pub c: f64,
    /// Smallest Hessian eigenvalue of `ρ̃` over the samples at `c`.
    pub min_eigenvalue: f64,
    /// Smallest eigenvalue normalized by `|∇ρ₀|²`.
    pub min_eigenvalue_scaled: f64,
    pub samples: usize,
    pub bracket_steps: usize,
}

/// Smallest `C` (to bisection precision) making the complex Hessian of `ρ̃`
/// positive definite at every sample.
pub fn find_c(pf: &PatchedField, level: f64, samples: &[[f64; 4]], exec: Execution) -> Result<FindC, FlowError> {
    const LIMIT: f64 = 1e16;
    let ok = |c: f64| {
        let cv = convexify(pf, level, c);
        exec.map_slice(samples, |p| positive_definite(cv.complex_hessian(p))).into_iter().all(|b| b)
    };
    let mut bracket_steps = 0;
    let c = if ok(0.0) {
        0.0
    } else {
        let mut hi = 1.0;
        while !ok(hi) {
            hi *= 2.0;
            bracket_steps += 1;
            if hi > LIMIT {
                return Err(FlowError::NoCFound(LIMIT));
            }
        }
        let mut lo = if hi == 1.0 { 0.0 } else { hi / 2.0 };
        for _ in 0..60 {
            if hi - lo <= 1e-9 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let cv = convexify(pf, level, c);
    let eigs = exec.map_slice(samples, |p| {
        let e = cv.min_eigenvalue(p);
        let g = pf.jet(p).grad.norm_squared();
        (e, e / g.max(f64::MIN_POSITIVE))
    });
    let min_eigenvalue = eigs.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
    let min_eigenvalue_scaled = eigs.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
    Ok(FindC { c, min_eigenvalue, min_eigenvalue_scaled, samples: samples.len(), bracket_steps })
}

/// Random starting points in `{ρ₀ < level}`, spread along both planes.
pub fn sublevel_starts(pf: &PatchedField, level: f64, n: usize, seed: u64) -> Vec<[f64; 4]> {
    let nf = NormalForm::from_params(pf.case, pf.a.clone(), pf.d.clone()).expect("valid form");
    let frames = plane_frames(&nf);
    (0..n)
        .map(|i| {
            let mut rng = stream_rng(seed ^ 0x5eed, i);
            loop {
                let (plane, normal) = &frames[rng.gen_range(0..2)];
                let radius = 3.0 * pf.r * rng.gen::<f64>();
                let (c, s) = unit_circle(&mut rng);
                let (cn, sn) = unit_circle(&mut rng);
                let base = radius * (c * plane[0] + s * plane[1]);
                let nrm = cn * normal[0] + sn * normal[1];
                let mut off = rng.gen::<f64>() * pf.r;
                for _ in 0..80 {
                    let q = arr4(&(base + off * nrm));
                    if pf.value(&q) < level && pf.distance_to_union(&q) > 0.0 {
                        return q;
                    }
                    off *= 0.7;
                }
            }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalScan {
    pub points: usize,
    /// Smallest `|∇ρ₀|·|z|/ρ₀`; equals 6 on `B_r` and 2 on the far tubes.
    pub min_margin: f64,
    pub at: [f64; 4],
    pub min_grad: f64,
    /// `ρ₀ = 0` exactly at the on-plane grid points and nowhere else.
    pub zero_set_ok: bool,
    pub pass: bool,
}

/// Grid of points at distances `[10⁻², 1]·r` from each plane, base points up
/// to radius `3r`, together with on-plane points.
pub fn critical_scan(pf: &PatchedField, radial: usize, angular: usize, exec: Execution) -> CriticalScan {
    let nf = NormalForm::from_params(pf.case, pf.a.clone(), pf.d.clone()).expect("valid form");
    let frames = plane_frames(&nf);
    let mut pts: Vec<([f64; 4], bool)> = Vec::new();
    let dists: Vec<f64> = (0..5).map(|k| pf.r * 10f64.powf(-2.0 + 0.5 * k as f64)).collect();
    for (plane, normal) in &frames {
        for i in 1..=radial {
            let radius = 3.0 * pf.r * i as f64 / radial as f64;
            for j in 0..angular {
                let t = std::f64::consts::TAU * j as f64 / angular as f64;
                let base = radius * (t.cos() * plane[0] + t.sin() * plane[1]);
                pts.push((arr4(&base), true));
                for k in 0..angular {
                    let s = std::f64::consts::TAU * (k as f64 + 0.5) / angular as f64;
                    let nrm = s.cos() * normal[0] + s.sin() * normal[1];
                    for &dist in &dists {
                        pts.push((arr4(&(base + dist * nrm)), false));
                    }
                }
            }
        }
    }
    let res = exec.map_slice(&pts, |(p, on_plane)| {
        let jet = pf.jet(p);
        let g = jet.grad.norm();
        let radius = crate::numeric::norm4(p);
        let dist = pf.distance_to_union(p);
        let zero_ok = if *on_plane { jet.value.abs() <= 1e-12 * radius.powi(6).max(1.0) && dist <= 1e-10 } else { jet.value > 0.0 };
        let margin = if *on_plane { f64::INFINITY } else { g * radius / jet.value };
        (margin, g, zero_ok)
    });
    let mut best = (f64::INFINITY, [0.0; 4]);
    let mut min_grad = f64::INFINITY;
    let mut zero_set_ok = true;
    for ((p, on_plane), (m, g, z)) in pts.iter().zip(res) {
        zero_set_ok &= z;
        if !on_plane {
            min_grad = min_grad.min(g);
            if m < best.0 {
                best = (m, *p);
            }
        }
    }
    CriticalScan {
        points: pts.len(),
        min_margin: best.0,
        at: best.1,
        min_grad,
        zero_set_ok,
        pass: best.0 > 0.0 && min_grad > 0.0 && zero_set_ok,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::rat;

    fn field(case: CaseTag, a: Rational, d: Rational, eps: f64) -> PatchedField {
        build_patched(&NormalForm::from_params(case, a, d).unwrap(), 1.0, eps).unwrap()
    }

    #[test]
    fn cutoff_examples() {
        assert_eq!(cutoff(0.5, 1.0), (1.0, 0.0));
        assert_eq!(cutoff(3.0, 1.0).0, 0.0);
        let (v, dv) = cutoff(1.5, 1.0);
        assert!(v > 0.0 && v < 1.0 && dv < 0.0);
        for &t in &[1.1, 1.3, 1.5, 1.8, 1.95] {
            let h = 1e-6;
            let (_, d1, d2) = cutoff_jet(t, 1.0);
            let fd1 = (cutoff(t + h, 1.0).0 - cutoff(t - h, 1.0).0) / (2.0 * h);
            let fd2 = (cutoff(t + h, 1.0).1 - cutoff(t - h, 1.0).1) / (2.0 * h);
            assert!((d1 - fd1).abs() < 1e-7 && (d2 - fd2).abs() < 1e-6, "{t}");
        }
    }

    #[test]
    fn patched_values() {
        let pf = field(CaseTag::Diag, rat(0, 1), rat(0, 1), 1e-3);
        let on_n = [2.5, 0.0, -1.0, 0.0];
        assert_eq!(pf.value(&on_n), 0.0);
        assert_eq!(pf.gradient(&on_n), [0.0; 4]);
        let p = [0.3, -0.2, 0.4, 0.1];
        let rho = crate::certify::build_rho(&crate::certify::RhoSpec::symbolic(CaseTag::Diag, 1, 1)).unwrap();
        let exact = rho.eval_f64(&p, [0.0, 0.0]);
        assert!((pf.value(&p) - exact).abs() <= 1e-12 * exact);
        let q = [0.9, 0.5, 0.5, 0.3];
        let s = (q.iter().map(|c| c * c).sum::<f64>()).sqrt();
        assert!(s > 1.0 && s < 2.0);
        let z = vec4(&q);
        let core = pf.core_jet(&z).value;
        let far = pf.far_jet(&z).value;
        let v = pf.value(&q);
        assert!(v > core.min(far) && v < core.max(far));
    }

    #[test]
    fn analytic_jet_matches_finite_differences() {
        let pf = field(CaseTag::NonDiag, rat(1, 50), rat(1, 30), 1e-3);
        for p in [[0.3, 0.2, -0.5, 0.1], [1.0, 0.4, 0.6, -0.3], [1.2, 0.05, -0.4, 0.02], [3.0, 0.01, 0.5, 0.0]] {
            let jet = pf.jet(&p);
            let fd = crate::levi::finite_diff_hessian(&|q: &[f64; 4]| pf.value(q), &p, 1e-4);
            let scale = jet.hess.abs().max().max(1.0);
            for i in 0..4 {
                for j in 0..4 {
                    assert!((jet.hess[(i, j)] - fd[i][j]).abs() < 1e-5 * scale, "{p:?} {i}{j}");
                }
            }
        }
    }

    #[test]
    fn flow_examples() {
        let pf = field(CaseTag::Diag, rat(0, 1), rat(0, 1), 1e-3);
        let t = flow_integrate(&pf, &[0.5, 0.0, 0.2, 0.0], &FlowOptions::default());
        assert_eq!((t.termination, t.steps), (Termination::Converged, 0));
        let t = flow_integrate(&pf, &[0.6, 1e-3, 0.3, -2e-3], &FlowOptions::default());
        assert_eq!(t.termination, Termination::Converged);
        assert!(t.is_monotone());
        assert!(pf.distance_to_union(&t.last().point) < 1e-4);
    }

    #[test]
    fn boundary_examples() {
        let pf = field(CaseTag::Diag, rat(0, 1), rat(0, 1), 1e-3);
        let dir = [1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt(), 0.0, 0.0];
        let p = boundary_point_on_ray(&pf, &dir, 1e-3).unwrap();
        let rho_dir = pf.core_jet(&vec4(&dir)).value;
        let t = (1e-3 / rho_dir).powf(1.0 / 6.0);
        assert!((p[0] - t * dir[0]).abs() < 1e-15);
        assert_eq!(boundary_point_on_ray(&pf, &[1.0, 0.0, 0.0, 0.0], 1e-3), Err(FlowError::RayMiss));
        let pts = boundary_sample(&pf, 1e-3, 500, 3, Execution::Parallel).unwrap();
        assert!(pts.iter().all(|p| (pf.value(p) - 1e-3).abs() < 1e-10 * 1e-3));
    }

    #[test]
    fn convexification_examples() {
        let pf = field(CaseTag::Diag, rat(0, 1), rat(0, 1), 1e-3);
        let p = [0.8, 0.3, -0.2, 0.1];
        let h0 = complex_hessian_from_real(&hess_array(&pf.jet(&p).hess));
        let hc = convexify(&pf, pf.value(&p), 0.0).complex_hessian(&p);
        assert!((h0.0 - hc.0).abs() < 1e-15 && (h0.2 - hc.2).norm() < 1e-15);
    }
}
