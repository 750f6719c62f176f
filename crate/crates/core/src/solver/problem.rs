use std::sync::atomic::{AtomicU64, Ordering};

use crate::numerics::SeededRng;

/// A two-time-scale problem seen through its joint stochastic oracle.
///
/// `sample` realizes one draw `X ~ ξ` and evaluates both `F(θ, ω, X)` and
/// `G(θ, ω, X)` on it. The remaining methods are exact accessors that only
/// problems with closed-form ground truth provide; they feed the residual
/// probe and never influence a trajectory.
pub trait TwoTimeScaleProblem: Send + Sync {
    fn dim_theta(&self) -> usize;
    fn dim_omega(&self) -> usize;

    /// Writes one joint sample into `f_out` (length d) and `g_out` (length r).
    fn sample(
        &self,
        theta: &[f64],
        omega: &[f64],
        rng: &mut SeededRng,
        f_out: &mut [f64],
        g_out: &mut [f64],
    );

    /// Deterministic mean operators `(F̄(θ, ω), Ḡ(θ, ω))`, when computable.
    fn mean_operators(&self, _theta: &[f64], _omega: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }

    fn grad_h(&self, _theta: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Lower-level root `ω*(θ)`.
    fn omega_star(&self, _theta: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn theta_star(&self) -> Option<Vec<f64>> {
        None
    }

    fn h(&self, _theta: &[f64]) -> Option<f64> {
        None
    }

    fn h_star(&self) -> Option<f64> {
        None
    }
}

/// Wraps a problem and counts oracle calls.
pub struct CountingProblem<P> {
    inner: P,
    calls: AtomicU64,
}

impl<P> CountingProblem<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: TwoTimeScaleProblem> TwoTimeScaleProblem for CountingProblem<P> {
    fn dim_theta(&self) -> usize {
        self.inner.dim_theta()
    }

    fn dim_omega(&self) -> usize {
        self.inner.dim_omega()
    }

    fn sample(
        &self,
        theta: &[f64],
        omega: &[f64],
        rng: &mut SeededRng,
        f_out: &mut [f64],
        g_out: &mut [f64],
    ) {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.sample(theta, omega, rng, f_out, g_out)
    }

    fn mean_operators(&self, theta: &[f64], omega: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        self.inner.mean_operators(theta, omega)
    }

    fn grad_h(&self, theta: &[f64]) -> Option<Vec<f64>> {
        self.inner.grad_h(theta)
    }

    fn omega_star(&self, theta: &[f64]) -> Option<Vec<f64>> {
        self.inner.omega_star(theta)
    }

    fn theta_star(&self) -> Option<Vec<f64>> {
        self.inner.theta_star()
    }

    fn h(&self, theta: &[f64]) -> Option<f64> {
        self.inner.h(theta)
    }

    fn h_star(&self) -> Option<f64> {
        self.inner.h_star()
    }
}

/// Lipschitz, monotonicity, curvature and variance constants of a problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StructuralConstants {
    /// Common Lipschitz constant of F, G, ∇h and ω*; never below 1.
    pub lipschitz: f64,
    pub mu_g: f64,
    /// Strong-convexity or PL constant of h, when h has one.
    pub mu_h: Option<f64>,
    pub variance_bound: f64,
}

impl StructuralConstants {
    /// A Lipschitz constant below 1 is raised to 1 (any larger value is still
    /// a valid constant).
    pub fn new(lipschitz: f64, mu_g: f64, mu_h: Option<f64>, variance_bound: f64) -> Self {
        Self {
            lipschitz: lipschitz.max(1.0),
            mu_g,
            mu_h,
            variance_bound,
        }
    }
}
