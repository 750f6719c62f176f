use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

type StepFn = Arc<dyn Fn(u64) -> f64 + Send + Sync>;

/// Step sizes `(λ_k, α_k, β_k)` at one iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Steps {
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Step-size sequences for the averaging weight λ, the decision step α and
/// the auxiliary step β.
#[derive(Clone)]
pub enum StepSchedule {
    /// `c / (k + τ + 1)` for each of the three sequences.
    Polynomial {
        c_lambda: f64,
        c_alpha: f64,
        c_beta: f64,
        tau: f64,
    },
    /// `λ_k = 1/(4√(k+1))`, `α_k = α₀/√(k+1)`, `β_k = β₀/√(k+1)`.
    SqrtDecay { alpha0: f64, beta0: f64 },
    Custom {
        label: String,
        lambda: StepFn,
        alpha: StepFn,
        beta: StepFn,
    },
}

impl fmt::Debug for StepSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

pub fn make_polynomial_schedule(
    c_lambda: f64,
    c_alpha: f64,
    c_beta: f64,
    tau: f64,
) -> Result<StepSchedule> {
    for (name, v) in [("c_lambda", c_lambda), ("c_alpha", c_alpha), ("c_beta", c_beta)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
    }
    if !(tau.is_finite() && tau >= 1.0) {
        return Err(Error::Config(format!("tau must be at least 1, got {tau}")));
    }
    Ok(StepSchedule::Polynomial {
        c_lambda,
        c_alpha,
        c_beta,
        tau,
    })
}

pub fn make_sqrt_schedule(alpha0: f64, beta0: f64) -> Result<StepSchedule> {
    if !(alpha0.is_finite() && alpha0 > 0.0 && beta0.is_finite()) {
        return Err(Error::Config(format!("alpha0 must be positive, got {alpha0}")));
    }
    if alpha0 > beta0 {
        return Err(Error::Config(format!(
            "alpha0 = {alpha0} exceeds beta0 = {beta0}"
        )));
    }
    Ok(StepSchedule::SqrtDecay { alpha0, beta0 })
}

impl StepSchedule {
    pub fn custom(
        label: impl Into<String>,
        lambda: impl Fn(u64) -> f64 + Send + Sync + 'static,
        alpha: impl Fn(u64) -> f64 + Send + Sync + 'static,
        beta: impl Fn(u64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        StepSchedule::Custom {
            label: label.into(),
            lambda: Arc::new(lambda),
            alpha: Arc::new(alpha),
            beta: Arc::new(beta),
        }
    }

    /// Constant α and β with λ_k = c_λ/(k + offset).
    pub fn constant_with_harmonic_averaging(alpha: f64, beta: f64, c_lambda: f64, offset: f64) -> Self {
        Self::custom(
            format!("constant(alpha={alpha},beta={beta};lambda={c_lambda}/(k+{offset}))"),
            move |k| c_lambda / (k as f64 + offset),
            move |_| alpha,
            move |_| beta,
        )
    }

    /// α = 5e-4, β = 2e-3 constant with λ_k = 4/(5(k+10)); the reference
    /// setting for the off-policy evaluation experiment.
    pub fn tdc_reference() -> Self {
        Self::custom(
            "appendixD(alpha=0.0005,beta=0.002,lambda=4/(5(k+10)))",
            |k| 4.0 / (5.0 * (k as f64 + 10.0)),
            |_| 5e-4,
            |_| 2e-3,
        )
    }

    pub fn lambda(&self, k: u64) -> f64 {
        match self {
            StepSchedule::Polynomial { c_lambda, tau, .. } => c_lambda / (k as f64 + tau + 1.0),
            StepSchedule::SqrtDecay { .. } => 1.0 / (4.0 * (k as f64 + 1.0).sqrt()),
            StepSchedule::Custom { lambda, .. } => lambda(k),
        }
    }

    pub fn alpha(&self, k: u64) -> f64 {
        match self {
            StepSchedule::Polynomial { c_alpha, tau, .. } => c_alpha / (k as f64 + tau + 1.0),
            StepSchedule::SqrtDecay { alpha0, .. } => alpha0 / (k as f64 + 1.0).sqrt(),
            StepSchedule::Custom { alpha, .. } => alpha(k),
        }
    }

    pub fn beta(&self, k: u64) -> f64 {
        match self {
            StepSchedule::Polynomial { c_beta, tau, .. } => c_beta / (k as f64 + tau + 1.0),
            StepSchedule::SqrtDecay { beta0, .. } => beta0 / (k as f64 + 1.0).sqrt(),
            StepSchedule::Custom { beta, .. } => beta(k),
        }
    }

    pub fn steps(&self, k: u64) -> Steps {
        Steps {
            lambda: self.lambda(k),
            alpha: self.alpha(k),
            beta: self.beta(k),
        }
    }

    /// Stable one-line rendering used in output headers.
    pub fn describe(&self) -> String {
        match self {
            StepSchedule::Polynomial {
                c_lambda,
                c_alpha,
                c_beta,
                tau,
            } => format!("poly:{c_lambda},{c_alpha},{c_beta},{tau}"),
            StepSchedule::SqrtDecay { alpha0, beta0 } => format!("sqrt:{alpha0},{beta0}"),
            StepSchedule::Custom { label, .. } => label.clone(),
        }
    }
}
