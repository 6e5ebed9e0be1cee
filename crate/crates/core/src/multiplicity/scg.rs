//! Scaled conjugate gradient minimizer.
//!
//! Full-batch second-order-ish optimizer: the curvature along the search
//! direction is estimated from a finite difference of gradients, and a
//! Levenberg-Marquardt style scale lambda keeps the local model positive
//! definite. No line search, one or two gradient evaluations per
//! iteration. The search direction restarts to steepest descent every
//! `dim` iterations.

use crate::scalar::Scalar;

/// A differentiable objective. Implementations must be deterministic:
/// repeated calls at the same point return identical values.
pub trait Objective<T: Scalar> {
    fn dim(&self) -> usize;
    fn loss(&self, w: &[T]) -> T;
    /// Writes the gradient into `grad` and returns the loss at `w`.
    fn loss_grad(&self, w: &[T], grad: &mut [T]) -> T;
}

#[derive(Clone, Copy, Debug)]
pub struct ScgOptions<T> {
    pub max_iters: usize,
    /// Stop once the gradient norm falls below this.
    pub grad_tol: T,
    /// Relative offset for the curvature finite difference.
    pub sigma: T,
    pub lambda_init: T,
}

impl<T: Scalar> Default for ScgOptions<T> {
    fn default() -> Self {
        ScgOptions {
            max_iters: 1000,
            grad_tol: T::of(1e-6),
            sigma: T::of(1e-4),
            lambda_init: T::of(1e-6),
        }
    }
}

/// Why the iteration loop ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScgStop {
    MaxIters,
    GradientTol,
    /// The scale parameter grew past any useful value; steps had shrunk to
    /// nothing.
    ScaleOverflow,
    /// The per-iteration callback returned false.
    Halted,
    /// Loss or gradient became non-finite and could not be recovered.
    NonFinite,
}

/// Snapshot handed to the per-iteration callback.
#[derive(Clone, Copy, Debug)]
pub struct IterInfo<'a, T> {
    /// 1-based count of completed iterations.
    pub iter: usize,
    /// Loss at the current parameters.
    pub loss: T,
    pub grad_norm: T,
    /// True when this iteration moved the parameters.
    pub step_taken: bool,
    pub params: &'a [T],
}

/// Outcome of a minimization run.
#[derive(Clone, Debug)]
pub struct ScgOutcome<T> {
    pub params: Vec<T>,
    pub loss: T,
    pub stop: ScgStop,
    pub iters: usize,
}

const LAMBDA_MAX: f64 = 1e200;

/// Minimize `obj` starting at `w0`. The callback runs after every
/// iteration and may halt the loop by returning false.
pub fn minimize<T, O, F>(obj: &O, w0: Vec<T>, opts: &ScgOptions<T>, mut on_iter: F) -> ScgOutcome<T>
where
    T: Scalar,
    O: Objective<T>,
    F: FnMut(&IterInfo<'_, T>) -> bool,
{
    let dim = obj.dim();
    assert_eq!(w0.len(), dim, "starting point has wrong dimension");
    let restart_period = dim.max(1);

    let mut w = w0;
    let mut grad = vec![T::zero(); dim];
    let mut loss = obj.loss_grad(&w, &mut grad);
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return ScgOutcome {
            params: w,
            loss,
            stop: ScgStop::NonFinite,
            iters: 0,
        };
    }
    // r = -gradient, p = search direction
    let mut r: Vec<T> = grad.iter().map(|&g| -g).collect();
    let mut p = r.clone();
    let mut lambda = opts.lambda_init;
    let mut lambda_bar = T::zero();
    let mut success = true;
    // curvature along p, updated lazily while the direction is unchanged
    let mut delta = T::zero();

    let mut w_trial = vec![T::zero(); dim];
    let mut grad_trial = vec![T::zero(); dim];

    let mut stop = ScgStop::MaxIters;
    let mut iters = 0usize;
    for k in 1..=opts.max_iters {
        iters = k;
        let p_norm_sq = dot(&p, &p);
        let p_norm = p_norm_sq.sqrt();
        if !(p_norm > T::zero()) {
            stop = ScgStop::GradientTol;
            break;
        }

        if success {
            // second-order information from a forward gradient difference
            let sigma_k = opts.sigma / p_norm;
            for i in 0..dim {
                w_trial[i] = w[i] + sigma_k * p[i];
            }
            obj.loss_grad(&w_trial, &mut grad_trial);
            // s = (grad(w + sigma_k p) - grad(w)) / sigma_k; delta = p.s
            let mut d = T::zero();
            for i in 0..dim {
                d += p[i] * (grad_trial[i] - grad[i]);
            }
            delta = d / sigma_k;
        }

        delta += (lambda - lambda_bar) * p_norm_sq;
        if delta <= T::zero() {
            // force a positive definite local model
            lambda_bar = T::of(2.0) * (lambda - delta / p_norm_sq);
            delta = -delta + lambda * p_norm_sq;
            lambda = lambda_bar;
        }

        let mu = dot(&p, &r);
        let alpha = mu / delta;
        for i in 0..dim {
            w_trial[i] = w[i] + alpha * p[i];
        }
        let loss_trial = obj.loss(&w_trial);
        // comparison of predicted and actual reduction; an overflowed trial
        // loss counts as the worst possible outcome so the scale still grows
        // and the next step shrinks
        let raw = T::of(2.0) * delta * (loss - loss_trial) / (mu * mu);
        let reduction = if raw.is_finite() { raw } else { -T::one() };

        let step_taken = reduction >= T::zero();
        if step_taken {
            std::mem::swap(&mut w, &mut w_trial);
            let loss_new = obj.loss_grad(&w, &mut grad);
            let r_old_dot: T = grad.iter().zip(&r).map(|(&g, &ro)| -g * ro).sum();
            let r_new_norm_sq: T = grad.iter().map(|&g| g * g).sum();
            for i in 0..dim {
                r[i] = -grad[i];
            }
            loss = loss_new;
            lambda_bar = T::zero();
            success = true;
            if k % restart_period == 0 {
                p.copy_from_slice(&r);
            } else {
                let beta = (r_new_norm_sq - r_old_dot) / mu;
                for i in 0..dim {
                    p[i] = r[i] + beta * p[i];
                }
            }
            if reduction >= T::of(0.75) {
                lambda = lambda * T::of(0.25);
            }
        } else {
            lambda_bar = lambda;
            success = false;
        }
        if reduction < T::of(0.25) {
            lambda = lambda + delta * (T::one() - reduction) / p_norm_sq;
        }

        let grad_norm = dot(&r, &r).sqrt();
        if !on_iter(&IterInfo {
            iter: k,
            loss,
            grad_norm,
            step_taken,
            params: &w,
        }) {
            stop = ScgStop::Halted;
            break;
        }
        if grad_norm < opts.grad_tol {
            stop = ScgStop::GradientTol;
            break;
        }
        if !lambda.is_finite() || lambda > T::of(LAMBDA_MAX) {
            stop = ScgStop::ScaleOverflow;
            break;
        }
        if !loss.is_finite() {
            stop = ScgStop::NonFinite;
            break;
        }
    }

    ScgOutcome {
        params: w,
        loss,
        stop,
        iters,
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}
