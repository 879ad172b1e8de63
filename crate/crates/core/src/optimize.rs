//! Multi-start quasi-Newton (BFGS) minimization with deterministic seeding.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Options shared by every fitting problem in the crate.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOptions {
    /// A start counts as converged once its cost is at or below this value.
    pub tol: f64,
    /// Maximum number of starts after the first.
    pub max_restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Gradient infinity-norm at which a single BFGS run stops.
    pub gtol: f64,
    /// Cost at which a single BFGS run stops early. Kept well below `tol`
    /// so accepted solutions are polished to near machine precision.
    pub stop_cost: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_restarts: 32, seed: 0, max_iter: 4000, gtol: 1e-13, stop_cost: 1e-13 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub cost: f64,
    pub restarts: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Uniform angles in `(-pi, pi]`.
pub fn random_angles(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| PI - 2.0 * PI * rng.random::<f64>()).collect()
}

/// RNG for start `k` of a run seeded with `seed`.
pub fn start_rng(seed: u64, start: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(start as u64);
    rng
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// One BFGS descent from `x0`. Returns the final point, cost and the number
/// of objective evaluations.
pub fn bfgs<F>(objective: &mut F, x0: Vec<f64>, opts: &OptimizeOptions) -> (Vec<f64>, f64, usize)
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0;
    let (mut f, mut g) = objective(&x);
    let mut evals = 1;
    if n == 0 {
        return (x, f, evals);
    }
    let mut h = vec![0.0; n * n];
    let reset = |h: &mut Vec<f64>| {
        h.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            h[i * n + i] = 1.0;
        }
    };
    reset(&mut h);
    let mut stalls = 0;
    for _ in 0..opts.max_iter {
        if f <= opts.stop_cost || inf_norm(&g) <= opts.gtol {
            break;
        }
        let mut p: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect();
        let mut slope = dot(&p, &g);
        if slope >= 0.0 {
            reset(&mut h);
            p = g.iter().map(|v| -v).collect();
            slope = dot(&p, &g);
        }
        // backtracking line search with Armijo condition
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let xn: Vec<f64> = x.iter().zip(&p).map(|(xi, pi)| xi + step * pi).collect();
            let (fn_, gn) = objective(&xn);
            evals += 1;
            if fn_.is_finite() && fn_ <= f + 1e-4 * step * slope {
                accepted = Some((xn, fn_, gn));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            // no descent along the quasi-Newton direction: try steepest once
            if h.iter().enumerate().all(|(k, v)| *v == if k % (n + 1) == 0 { 1.0 } else { 0.0 }) {
                break;
            }
            reset(&mut h);
            stalls += 1;
            if stalls > 3 {
                break;
            }
            continue;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if f - fn_ <= f64::EPSILON * f.abs() {
            stalls += 1;
        } else {
            stalls = 0;
        }
        x = xn;
        f = fn_;
        g = gn;
        if stalls > 5 {
            break;
        }
        if sy > 1e-300 {
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &y)).collect();
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            let coef = (1.0 + rho * yhy) * rho;
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
    }
    (x, f, evals)
}

/// BFGS from `initial` (if given) and then from seeded random starts until a
/// start reaches `opts.tol` or the restart budget runs out. The best point
/// over all starts is returned either way.
pub fn minimize_multistart<F>(
    objective: &mut F,
    dim: usize,
    initial: Option<Vec<f64>>,
    opts: &OptimizeOptions,
) -> Minimum
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut evaluations = 0;
    let mut initial = initial;
    for start in 0..=opts.max_restarts {
        let x0 = match (start, initial.take()) {
            (0, Some(x)) => x,
            _ => random_angles(dim, &mut start_rng(opts.seed, start)),
        };
        let (x, f, evals) = bfgs(objective, x0, opts);
        evaluations += evals;
        if best.as_ref().is_none_or(|(_, bf)| f < *bf) {
            best = Some((x, f));
        }
        if f <= opts.tol {
            let (x, cost) = best.unwrap();
            return Minimum { x, cost, restarts: start, evaluations, converged: true };
        }
    }
    let (x, cost) = best.unwrap();
    Minimum { x, cost, restarts: opts.max_restarts, evaluations, converged: false }
}

/// Levenberg-Marquardt on a least-squares problem. `residual` returns the
/// residual vector `r` (length `m`), `jacobian` its Jacobian, row-major
/// `m x n`. Returns the final point, `|r|^2` and the number of residual
/// evaluations.
pub fn levenberg_marquardt<R, J>(
    residual: &mut R,
    jacobian: &mut J,
    x0: Vec<f64>,
    max_iter: usize,
    stop: f64,
) -> (Vec<f64>, f64, usize)
where
    R: FnMut(&[f64]) -> Vec<f64>,
    J: FnMut(&[f64]) -> Vec<f64>,
{
    let n = x0.len();
    let mut x = x0;
    let mut r = residual(&x);
    let mut evals = 1;
    let mut f = dot(&r, &r);
    let mut lambda = 1e-3;
    for _ in 0..max_iter {
        if f <= stop || n == 0 {
            break;
        }
        let jac = jacobian(&x);
        let m = r.len();
        let mut jtj = nalgebra::DMatrix::<f64>::zeros(n, n);
        let mut jtr = nalgebra::DVector::<f64>::zeros(n);
        for row in 0..m {
            let jr = &jac[row * n..(row + 1) * n];
            for a in 0..n {
                if jr[a] == 0.0 {
                    continue;
                }
                jtr[a] += jr[a] * r[row];
                for b in a..n {
                    jtj[(a, b)] += jr[a] * jr[b];
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                jtj[(a, b)] = jtj[(b, a)];
            }
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut damped = jtj.clone();
            for a in 0..n {
                damped[(a, a)] += lambda * (jtj[(a, a)] + 1e-12);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&jtr));
            let xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rn = residual(&xn);
            evals += 1;
            let fn_ = dot(&rn, &rn);
            if fn_.is_finite() && fn_ < f {
                x = xn;
                r = rn;
                f = fn_;
                lambda = (lambda / 3.0).max(1e-15);
                improved = true;
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    (x, f, evals)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        (f, g)
    }

    #[test]
    fn bfgs_solves_rosenbrock() {
        let opts = OptimizeOptions { stop_cost: 1e-20, gtol: 1e-12, ..Default::default() };
        let (x, f, _) = bfgs(&mut rosenbrock, vec![-1.2, 1.0], &opts);
        assert!(f < 1e-16, "{f}");
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn levenberg_marquardt_fits_exponential() {
        // y = a exp(b t) sampled without noise
        let ts: Vec<f64> = (0..20).map(|k| k as f64 * 0.1).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 2.0 * (-1.3 * t).exp()).collect();
        let mut res = |x: &[f64]| ts.iter().zip(&ys).map(|(t, y)| x[0] * (x[1] * t).exp() - y).collect();
        let mut jac = |x: &[f64]| ts.iter().flat_map(|t| [(x[1] * t).exp(), x[0] * t * (x[1] * t).exp()]).collect();
        let (x, f, _) = levenberg_marquardt(&mut res, &mut jac, vec![1.0, 0.0], 200, 1e-28);
        assert!(f < 1e-24, "{f}");
        assert!((x[0] - 2.0).abs() < 1e-10 && (x[1] + 1.3).abs() < 1e-10);
    }

    #[test]
    fn random_angles_stay_in_half_open_interval() {
        let mut rng = start_rng(3, 0);
        for a in random_angles(10_000, &mut rng) {
            assert!(a > -PI && a <= PI);
        }
    }

    #[test]
    fn multistart_is_deterministic() {
        // many local minima along each axis
        let mut f = |x: &[f64]| {
            let v = x.iter().map(|a| 1.0 - (3.0 * a).cos() + 0.05 * a * a).sum::<f64>();
            let g = x.iter().map(|a| 3.0 * (3.0 * a).sin() + 0.1 * a).collect();
            (v, g)
        };
        let opts = OptimizeOptions { tol: 1e-12, seed: 42, ..Default::default() };
        let a = minimize_multistart(&mut f, 3, None, &opts);
        let b = minimize_multistart(&mut f, 3, None, &opts);
        assert_eq!(a, b);
        assert!(a.converged);
    }
}
