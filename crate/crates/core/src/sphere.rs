//! Deterministic quasi-uniform sampling of the unit sphere `S³ ⊂ R⁴` and
//! sampled extremum search with local refinement.

use argmin::core::{CostFunction, Error as ArgminError, Executor};
use argmin::solver::neldermead::NelderMead;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::exec::Execution;
use crate::numeric::norm4;

const REFINE_STARTS: usize = 10;

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    out
}

/// Halton point `i` in bases 2, 3, 5 with a seeded Cranley–Patterson shift.
fn shifted_halton(i: u64, shift: &[f64; 3]) -> [f64; 3] {
    let bases = [2, 3, 5];
    std::array::from_fn(|k| (radical_inverse(i + 1, bases[k]) + shift[k]).fract())
}

/// Uniform map from the unit cube onto unit quaternions.
fn cube_to_sphere(c: [f64; 3]) -> [f64; 4] {
    use std::f64::consts::TAU;
    let (s1, s2) = ((1.0 - c[0]).sqrt(), c[0].sqrt());
    let (t1, t2) = (TAU * c[1], TAU * c[2]);
    [s1 * t1.sin(), s1 * t1.cos(), s2 * t2.sin(), s2 * t2.cos()]
}

pub fn sphere_points(n: usize, seed: u64) -> Vec<[f64; 4]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: [f64; 3] = std::array::from_fn(|_| rng.gen::<f64>());
    (0..n as u64).map(|i| cube_to_sphere(shifted_halton(i, &shift))).collect()
}

pub fn normalize(p: &[f64; 4]) -> [f64; 4] {
    let n = norm4(p);
    p.map(|c| c / n)
}

#[derive(Clone, Debug, Serialize)]
pub struct SphereExtremum {
    /// Best raw sample value before refinement.
    pub sampled: f64,
    /// Best value after refinement.
    pub value: f64,
    pub at: [f64; 4],
    pub samples: usize,
}

struct OnSphere<'a, F> {
    f: &'a F,
}

impl<F: Fn(&[f64; 4]) -> f64> CostFunction for OnSphere<'_, F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> Result<f64, ArgminError> {
        let q = [p[0], p[1], p[2], p[3]];
        if norm4(&q) == 0.0 {
            return Ok(f64::INFINITY);
        }
        Ok((self.f)(&normalize(&q)))
    }
}

fn refine<F: Fn(&[f64; 4]) -> f64>(f: &F, start: [f64; 4], value: f64) -> ([f64; 4], f64) {
    let mut simplex = vec![start.to_vec()];
    for k in 0..4 {
        let mut q = start.to_vec();
        q[k] += 0.05;
        simplex.push(q);
    }
    let solver = match NelderMead::new(simplex).with_sd_tolerance(1e-14) {
        Ok(s) => s,
        Err(_) => return (start, value),
    };
    let result = Executor::new(OnSphere { f }, solver).configure(|s| s.max_iters(400)).run();
    match result {
        Ok(res) => {
            let st = res.state();
            match (&st.best_param, st.best_cost) {
                (Some(p), c) if c < value => (normalize(&[p[0], p[1], p[2], p[3]]), c),
                _ => (start, value),
            }
        }
        Err(_) => (start, value),
    }
}

/// Minimum of `f` over `n` sphere samples, refined by Nelder–Mead from the
/// lowest samples.
pub fn minimize_on_sphere<F>(f: &F, n: usize, seed: u64, exec: Execution) -> SphereExtremum
where
    F: Fn(&[f64; 4]) -> f64 + Sync + Send,
{
    let pts = sphere_points(n.max(1), seed);
    let vals = exec.map_slice(&pts, |p| f(p));
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]).then(i.cmp(&j)));
    let starts: Vec<usize> = order.iter().copied().take(REFINE_STARTS).collect();
    let sampled_min = vals[order[0]];
    let refined = exec.map_slice(&starts, |&i| refine(f, pts[i], vals[i]));
    let (argmin, min) = refined
        .into_iter()
        .fold((pts[order[0]], sampled_min), |best, cand| if cand.1 < best.1 { cand } else { best });
    SphereExtremum { sampled: sampled_min, value: min, at: argmin, samples: pts.len() }
}

/// Maximum of `f`, reported with the same record shape.
pub fn maximize_on_sphere<F>(f: &F, n: usize, seed: u64, exec: Execution) -> SphereExtremum
where
    F: Fn(&[f64; 4]) -> f64 + Sync + Send,
{
    let neg = |p: &[f64; 4]| -f(p);
    let m = minimize_on_sphere(&neg, n, seed, exec);
    SphereExtremum { sampled: -m.sampled, value: -m.value, ..m }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_lie_on_sphere_and_are_reproducible() {
        let p = sphere_points(500, 7);
        assert!(p.iter().all(|q| (norm4(q) - 1.0).abs() < 1e-12));
        assert_eq!(p, sphere_points(500, 7));
        assert_ne!(p, sphere_points(500, 8));
    }

    #[test]
    fn sample_mean_is_near_zero() {
        let p = sphere_points(20000, 1);
        for k in 0..4 {
            let mean: f64 = p.iter().map(|q| q[k]).sum::<f64>() / p.len() as f64;
            assert!(mean.abs() < 5e-3, "{mean}");
            let second: f64 = p.iter().map(|q| q[k] * q[k]).sum::<f64>() / p.len() as f64;
            assert!((second - 0.25).abs() < 5e-3, "{second}");
        }
    }

    #[test]
    fn refinement_finds_known_minimum() {
        // x² + 2y² + 3u² + 4v² has minimum 1 on the sphere at ±e₁.
        let f = |p: &[f64; 4]| p[0] * p[0] + 2.0 * p[1] * p[1] + 3.0 * p[2] * p[2] + 4.0 * p[3] * p[3];
        let m = minimize_on_sphere(&f, 200, 3, Execution::Sequential);
        assert!(m.value <= m.sampled);
        assert!((m.value - 1.0).abs() < 1e-8, "{}", m.value);
        let m = maximize_on_sphere(&f, 200, 3, Execution::Parallel);
        assert!((m.value - 4.0).abs() < 1e-8);
    }
}
