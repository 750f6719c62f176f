use crate::error::{Error, Result};
use crate::numerics::{all_finite, SeededRng};

use super::{StepSchedule, TwoTimeScaleProblem};

/// Which update rule drives a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// Averaged operator estimates feed the decision updates.
    Fast,
    /// Raw samples feed the decision updates directly.
    Standard,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Fast => "fast",
            Algorithm::Standard => "standard",
        }
    }
}

/// Iterates `(θ_k, ω_k, f_k, g_k)` at iteration `k`.
///
/// Under [`Algorithm::Standard`] `f` and `g` hold the most recent raw samples.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    pub k: u64,
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

impl SolverState {
    /// All-zero initialization.
    pub fn zeros(dim_theta: usize, dim_omega: usize) -> Self {
        Self {
            k: 0,
            theta: vec![0.0; dim_theta],
            omega: vec![0.0; dim_omega],
            f: vec![0.0; dim_theta],
            g: vec![0.0; dim_omega],
        }
    }

    pub fn for_problem(problem: &dyn TwoTimeScaleProblem) -> Self {
        Self::zeros(problem.dim_theta(), problem.dim_omega())
    }

    pub fn with_theta(mut self, theta: Vec<f64>) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_omega(mut self, omega: Vec<f64>) -> Self {
        self.omega = omega;
        self
    }

    pub fn check_dims(&self, problem: &dyn TwoTimeScaleProblem) -> Result<()> {
        let (d, r) = (problem.dim_theta(), problem.dim_omega());
        if self.theta.len() != d || self.f.len() != d || self.omega.len() != r || self.g.len() != r
        {
            return Err(Error::Contract(format!(
                "state dims (θ {}, f {}, ω {}, g {}) do not match problem (d {d}, r {r})",
                self.theta.len(),
                self.f.len(),
                self.omega.len(),
                self.g.len()
            )));
        }
        Ok(())
    }

    fn is_finite(&self) -> bool {
        all_finite(&self.theta) && all_finite(&self.omega) && all_finite(&self.f) && all_finite(&self.g)
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("averaging weight {lambda} is outside (0, 1]")))
    }
}

/// `(1 − λ) v + λ sample`, elementwise.
pub fn averaging_update(v: &[f64], lambda: f64, sample: &[f64]) -> Result<Vec<f64>> {
    if v.len() != sample.len() {
        return Err(Error::Contract(format!(
            "averaging {} entries with a sample of {}",
            v.len(),
            sample.len()
        )));
    }
    check_lambda(lambda)?;
    Ok(v.iter()
        .zip(sample)
        .map(|(a, s)| (1.0 - lambda) * a + lambda * s)
        .collect())
}

fn average_in_place(v: &mut [f64], lambda: f64, sample: &[f64]) {
    for (a, s) in v.iter_mut().zip(sample) {
        *a = (1.0 - lambda) * *a + lambda * s;
    }
}

fn draw(
    state: &SolverState,
    problem: &dyn TwoTimeScaleProblem,
    rng: &mut SeededRng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut fs = vec![0.0; state.theta.len()];
    let mut gs = vec![0.0; state.omega.len()];
    problem.sample(&state.theta, &state.omega, rng, &mut fs, &mut gs);
    if !(all_finite(&fs) && all_finite(&gs)) {
        return Err(Error::NonFinite {
            k: state.k,
            what: "oracle sample".into(),
        });
    }
    Ok((fs, gs))
}

/// One iteration of the averaged method.
///
/// The joint sample is drawn at the pre-update pair `(θ_k, ω_k)`; the
/// decision variables then move along the previous estimates `f_k`, `g_k`,
/// and the estimates absorb the new sample with weight `λ_k`. Exactly one
/// oracle call.
pub fn fast_step(
    state: &mut SolverState,
    problem: &dyn TwoTimeScaleProblem,
    schedule: &StepSchedule,
    rng: &mut SeededRng,
) -> Result<()> {
    let steps = schedule.steps(state.k);
    check_lambda(steps.lambda)?;
    let (fs, gs) = draw(state, problem, rng)?;
    for (t, f) in state.theta.iter_mut().zip(&state.f) {
        *t -= steps.alpha * f;
    }
    for (w, g) in state.omega.iter_mut().zip(&state.g) {
        *w -= steps.beta * g;
    }
    average_in_place(&mut state.f, steps.lambda, &fs);
    average_in_place(&mut state.g, steps.lambda, &gs);
    state.k += 1;
    if !state.is_finite() {
        return Err(Error::NonFinite {
            k: state.k,
            what: "solver state".into(),
        });
    }
    Ok(())
}

/// One iteration of classic two-time-scale stochastic approximation:
/// `θ ← θ − α_k F(θ, ω, X)`, `ω ← ω − β_k G(θ, ω, X)` with a single draw.
pub fn standard_step(
    state: &mut SolverState,
    problem: &dyn TwoTimeScaleProblem,
    schedule: &StepSchedule,
    rng: &mut SeededRng,
) -> Result<()> {
    let steps = schedule.steps(state.k);
    let (fs, gs) = draw(state, problem, rng)?;
    for (t, f) in state.theta.iter_mut().zip(&fs) {
        *t -= steps.alpha * f;
    }
    for (w, g) in state.omega.iter_mut().zip(&gs) {
        *w -= steps.beta * g;
    }
    state.f = fs;
    state.g = gs;
    state.k += 1;
    if !state.is_finite() {
        return Err(Error::NonFinite {
            k: state.k,
            what: "solver state".into(),
        });
    }
    Ok(())
}

pub fn step(
    algorithm: Algorithm,
    state: &mut SolverState,
    problem: &dyn TwoTimeScaleProblem,
    schedule: &StepSchedule,
    rng: &mut SeededRng,
) -> Result<()> {
    match algorithm {
        Algorithm::Fast => fast_step(state, problem, schedule, rng),
        Algorithm::Standard => standard_step(state, problem, schedule, rng),
    }
}
