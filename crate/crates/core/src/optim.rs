//! Box-constrained maximizers: projected Newton and projected BFGS, both with
//! Armijo backtracking along the projected path.

use nalgebra::{DMatrix, DVector};

pub(crate) const SCORE_TOL: f64 = 1e-8;
pub(crate) const STEP_TOL: f64 = 1e-10;
pub(crate) const MAX_ITER: usize = 200;
const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
/// Relative objective gain treated as rounding noise.
const NOISE_GAIN: f64 = 1e-14;
const KINK_STEP: f64 = 1e-8;
/// One-sided slope difference that marks a kink rather than curvature.
const KINK_JUMP: f64 = 1e-5;

/// Objective value and derivatives at a point, in the optimizer's coordinates.
#[derive(Debug, Clone)]
pub(crate) struct Point {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Option<DMatrix<f64>>,
}

pub(crate) trait Objective {
    fn eval(&self, x: &[f64], hessian: bool) -> Point;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Stop {
    Converged,
    MaxIterations,
    LineSearch,
    NonFinite,
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub point: Point,
    pub iterations: usize,
    pub stop: Stop,
    pub blocked: Vec<bool>,
    pub score_norm: f64,
    pub trace: Vec<f64>,
}

pub(crate) struct Bounds<'a> {
    pub lo: &'a [f64],
    pub hi: &'a [f64],
}

impl Bounds<'_> {
    fn clamp(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lo[i], self.hi[i]);
        }
    }

    fn blocked(&self, x: &[f64], g: &[f64]) -> Vec<bool> {
        (0..x.len())
            .map(|i| (x[i] <= self.lo[i] && g[i] < 0.0) || (x[i] >= self.hi[i] && g[i] > 0.0))
            .collect()
    }
}

fn score_norm(p: &Point, blocked: &[bool]) -> f64 {
    p.grad
        .iter()
        .zip(blocked)
        .filter(|(_, &b)| !b)
        .fold(0.0, |m, (g, _)| m.max(g.abs()))
}

/// True when the Newton step `d` predicts a gain below the objective's
/// rounding level, so a failed line search says nothing about optimality.
fn unresolvable(p: &Point, d: &[f64], gnorm: f64) -> bool {
    let gain: f64 = 0.5 * p.grad.iter().zip(d).map(|(g, d)| g * d).sum::<f64>();
    gnorm < 100.0 * SCORE_TOL && gain <= NOISE_GAIN * p.value.abs().max(1.0)
}

fn rel_size(d: &[f64], x: &[f64]) -> f64 {
    d.iter().zip(x).fold(0.0, |m, (d, x)| m.max(d.abs() / x.abs().max(1.0)))
}

/// Solves `(-H_ff + lambda I) d = g_f` on the free coordinates, raising
/// `lambda` until the shifted matrix is positive definite.
fn newton_direction(h: &DMatrix<f64>, g: &[f64], blocked: &[bool]) -> Vec<f64> {
    let free: Vec<usize> = (0..g.len()).filter(|&i| !blocked[i]).collect();
    let mut d = vec![0.0; g.len()];
    if free.is_empty() {
        return d;
    }
    let m = free.len();
    let a = DMatrix::from_fn(m, m, |r, c| -h[(free[r], free[c])]);
    let rhs = DVector::from_iterator(m, free.iter().map(|&i| g[i]));
    let scale = (0..m).fold(0.0f64, |s, i| s.max(a[(i, i)].abs())).max(1e-300);
    let mut lambda = 0.0;
    for _ in 0..80 {
        let shifted = &a + DMatrix::identity(m, m) * lambda;
        if let Some(ch) = shifted.cholesky() {
            let sol = ch.solve(&rhs);
            if sol.iter().all(|v| v.is_finite()) {
                for (j, &i) in free.iter().enumerate() {
                    d[i] = sol[j];
                }
                return d;
            }
        }
        lambda = if lambda == 0.0 { 1e-10 * scale } else { lambda * 10.0 };
    }
    for &i in &free {
        d[i] = g[i];
    }
    d
}

/// Backtracking along `clamp(x + alpha d)` until the Armijo condition holds.
///
/// Close to an optimum the predicted gain drops below the rounding level of
/// the objective and no Armijo step can be verified; the full step is then
/// still taken if it loses nothing and shrinks the score.
fn line_search<O: Objective>(
    obj: &O,
    bounds: &Bounds<'_>,
    x: &[f64],
    current: &Point,
    d: &[f64],
    hessian: bool,
) -> Option<(Vec<f64>, Point)> {
    let mut alpha = 1.0;
    let mut full = None;
    for _ in 0..MAX_HALVINGS {
        let mut trial: Vec<f64> = x.iter().zip(d).map(|(x, d)| x + alpha * d).collect();
        bounds.clamp(&mut trial);
        let moved: f64 = trial
            .iter()
            .zip(x)
            .zip(&current.grad)
            .map(|((t, x), g)| (t - x) * g)
            .sum();
        if trial == x {
            break;
        }
        let p = obj.eval(&trial, hessian);
        if p.value.is_finite() && p.value >= current.value + ARMIJO_C * moved && moved > 0.0 {
            return Some((trial, p));
        }
        if full.is_none() {
            full = Some((trial, p));
        }
        alpha *= 0.5;
    }
    let (trial, p) = full?;
    let before = score_norm(current, &bounds.blocked(x, &current.grad));
    let after = score_norm(&p, &bounds.blocked(&trial, &p.grad));
    (p.value >= current.value && after < before).then_some((trial, p))
}

/// Coordinates where `x` sits on an inward kink: both one-sided slopes point
/// back at `x` and differ by a finite jump. These arise at `rho = +-1` with
/// asymmetric regressors, where the likelihood is smooth only piecewise.
fn kinks<O: Objective>(obj: &O, bounds: &Bounds<'_>, x: &[f64], current: &Point) -> Vec<bool> {
    (0..x.len())
        .map(|i| {
            let h = KINK_STEP * x[i].abs().max(1.0);
            if x[i] - h < bounds.lo[i] || x[i] + h > bounds.hi[i] {
                return false;
            }
            let mut up = x.to_vec();
            let mut dn = x.to_vec();
            up[i] += h;
            dn[i] -= h;
            let right = (obj.eval(&up, false).value - current.value) / h;
            let left = (current.value - obj.eval(&dn, false).value) / h;
            left >= 0.0 && right <= 0.0 && left - right > KINK_JUMP
        })
        .collect()
}

fn finish(x: Vec<f64>, point: Point, iterations: usize, stop: Stop, bounds: &Bounds<'_>, trace: Vec<f64>) -> Outcome {
    let none = vec![false; x.len()];
    finish_frozen(x, point, iterations, stop, bounds, trace, &none)
}

/// As `finish`, leaving coordinates frozen on a kink out of the score norm.
fn finish_frozen(
    x: Vec<f64>,
    point: Point,
    iterations: usize,
    stop: Stop,
    bounds: &Bounds<'_>,
    trace: Vec<f64>,
    frozen: &[bool],
) -> Outcome {
    let blocked = bounds.blocked(&x, &point.grad);
    let free: Vec<bool> = blocked.iter().zip(frozen).map(|(b, f)| *b || *f).collect();
    let score_norm = score_norm(&point, &free);
    Outcome { x, point, iterations, stop, blocked, score_norm, trace }
}

/// Projected Newton ascent using the objective's Hessian at every iterate.
pub(crate) fn newton<O: Objective>(obj: &O, x0: &[f64], bounds: &Bounds<'_>) -> Outcome {
    let mut x = x0.to_vec();
    bounds.clamp(&mut x);
    let mut pt = obj.eval(&x, true);
    let mut trace = vec![pt.value];
    if !pt.value.is_finite() {
        return finish(x, pt, 0, Stop::NonFinite, bounds, trace);
    }
    // Coordinates held fixed on a kink of the objective.
    let mut kinked = vec![false; x.len()];
    for iter in 0..MAX_ITER {
        let mut blocked = bounds.blocked(&x, &pt.grad);
        for (b, k) in blocked.iter_mut().zip(&kinked) {
            *b |= k;
        }
        let gnorm = score_norm(&pt, &blocked);
        let h = pt.hess.as_ref().expect("Newton objective must supply a Hessian");
        let d = newton_direction(h, &pt.grad, &blocked);
        let done = gnorm < SCORE_TOL && rel_size(&d, &x) < STEP_TOL;
        let stalled = done || match line_search(obj, bounds, &x, &pt, &d, true) {
            Some((nx, np)) => {
                x = nx;
                pt = np;
                trace.push(pt.value);
                false
            }
            None if gnorm < SCORE_TOL || unresolvable(&pt, &d, gnorm) => true,
            None => {
                let found = kinks(obj, bounds, &x, &pt);
                if found.iter().zip(&kinked).any(|(f, k)| *f && !*k) {
                    for (k, f) in kinked.iter_mut().zip(&found) {
                        *k |= f;
                    }
                    continue;
                }
                return finish_frozen(x, pt, iter, Stop::LineSearch, bounds, trace, &kinked);
            }
        };
        if stalled {
            // Optimal on the free coordinates; release any frozen coordinate
            // that is no longer a kink before accepting.
            if kinked.iter().any(|k| *k) {
                let found = kinks(obj, bounds, &x, &pt);
                if kinked.iter().zip(&found).any(|(k, f)| *k && !*f) {
                    kinked = found;
                    continue;
                }
            }
            return finish_frozen(x, pt, iter, Stop::Converged, bounds, trace, &kinked);
        }
    }
    finish(x, pt, MAX_ITER, Stop::MaxIterations, bounds, trace)
}

/// Inverse of `-H` (regularized to be positive definite) as the starting
/// quasi-Newton matrix, or a scaled identity when no Hessian is usable.
fn initial_inverse(h: Option<&DMatrix<f64>>, dim: usize) -> DMatrix<f64> {
    if let Some(h) = h {
        if h.iter().all(|v| v.is_finite()) {
            let a = -h;
            let scale = (0..dim).fold(0.0f64, |s, i| s.max(a[(i, i)].abs())).max(1e-300);
            let mut lambda = 0.0;
            for _ in 0..40 {
                let shifted = &a + DMatrix::identity(dim, dim) * lambda;
                if let Some(ch) = shifted.cholesky() {
                    return ch.inverse();
                }
                lambda = if lambda == 0.0 { 1e-8 * scale } else { lambda * 10.0 };
            }
        }
    }
    DMatrix::identity(dim, dim)
}

/// Projected BFGS ascent. The Hessian is requested only to seed (and, after a
/// failed step, reseed) the inverse approximation.
pub(crate) fn bfgs<O: Objective>(obj: &O, x0: &[f64], bounds: &Bounds<'_>) -> Outcome {
    let dim = x0.len();
    let mut x = x0.to_vec();
    bounds.clamp(&mut x);
    let mut pt = obj.eval(&x, true);
    let mut trace = vec![pt.value];
    if !pt.value.is_finite() {
        return finish(x, pt, 0, Stop::NonFinite, bounds, trace);
    }
    let mut hinv = initial_inverse(pt.hess.as_ref(), dim);
    let mut fresh = true;
    for iter in 0..MAX_ITER {
        let blocked = bounds.blocked(&x, &pt.grad);
        let gnorm = score_norm(&pt, &blocked);
        let g = DVector::from_iterator(
            dim,
            pt.grad.iter().zip(&blocked).map(|(g, &b)| if b { 0.0 } else { *g }),
        );
        let mut d: Vec<f64> = (&hinv * &g).iter().copied().collect();
        for (di, &b) in d.iter_mut().zip(&blocked) {
            if b {
                *di = 0.0;
            }
        }
        let slope: f64 = d.iter().zip(g.iter()).map(|(d, g)| d * g).sum();
        if slope <= 0.0 && gnorm > 0.0 {
            if fresh {
                hinv = DMatrix::identity(dim, dim);
            } else {
                hinv = initial_inverse(obj.eval(&x, true).hess.as_ref(), dim);
                fresh = true;
            }
            continue;
        }
        if gnorm < SCORE_TOL && rel_size(&d, &x) < STEP_TOL {
            return finish(x, pt, iter, Stop::Converged, bounds, trace);
        }
        // Curvature pairs are mostly rounding noise this close to the optimum,
        // and a fresh matrix that cannot find ascent has nothing left to
        // learn, so both cases take an exact Newton step instead.
        let polish = gnorm < SCORE_TOL;
        let step = if polish { None } else { line_search(obj, bounds, &x, &pt, &d, false) };
        let Some((nx, np)) = step else {
            if !polish && !fresh {
                hinv = initial_inverse(obj.eval(&x, true).hess.as_ref(), dim);
                fresh = true;
                continue;
            }
            let fallback = if polish { Stop::Converged } else { Stop::LineSearch };
            let Some(h) = obj.eval(&x, true).hess else {
                return finish(x, pt, iter, fallback, bounds, trace);
            };
            let nd = newton_direction(&h, &pt.grad, &blocked);
            if polish && rel_size(&nd, &x) < STEP_TOL {
                return finish(x, pt, iter, Stop::Converged, bounds, trace);
            }
            let Some((nx, np)) = line_search(obj, bounds, &x, &pt, &nd, false) else {
                let stop = if unresolvable(&pt, &nd, gnorm) { Stop::Converged } else { fallback };
                return finish(x, pt, iter, stop, bounds, trace);
            };
            let gain = np.value - pt.value;
            x = nx;
            pt = np;
            trace.push(pt.value);
            if polish && gain <= NOISE_GAIN * pt.value.abs().max(1.0) {
                // Flat to rounding along the step: more steps only drift.
                return finish(x, pt, iter + 1, Stop::Converged, bounds, trace);
            }
            hinv = initial_inverse(Some(&h), dim);
            fresh = true;
            continue;
        };
        // Curvature pair for the minimization of -f.
        let s = DVector::from_iterator(dim, nx.iter().zip(&x).map(|(a, b)| a - b));
        let y = DVector::from_iterator(dim, pt.grad.iter().zip(&np.grad).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() && sy > 0.0 {
            let r = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(dim, dim);
            let left = &eye - (&s * y.transpose()) * r;
            let right = &eye - (&y * s.transpose()) * r;
            hinv = &left * &hinv * &right + (&s * s.transpose()) * r;
            fresh = false;
        }
        x = nx;
        pt = np;
        trace.push(pt.value);
    }
    finish(x, pt, MAX_ITER, Stop::MaxIterations, bounds, trace)
}
