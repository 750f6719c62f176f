use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lqr::{run_actor_critic, ActorCriticSpec, LqrSystem};
use crate::numerics::stream_seed;
use crate::regmdp::{RegMdp, RegMdpProblem};
use crate::solver::{estimate_rate, run, Metric, RunSpec, SolverState, StructuralConstants, Trace, TwoTimeScaleProblem};
use crate::synthetic::{make_nonconvex, make_pl, make_quadratic};
use crate::tdc::{generate_instance, Td0Problem, TdcInstance, TdcProblem};

use super::aggregate::{running_min, AggregateSeries};
use super::config::{AlgoChoice, Experiment, ExperimentConfig};

/// Tail-rate fit of the experiment's primary metric next to the predicted
/// exponent.
#[derive(Clone, Debug, PartialEq)]
pub struct RateReport {
    pub metric: String,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: f64,
    pub points: usize,
    pub predicted: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub series: AggregateSeries,
    pub rate: Option<RateReport>,
    /// Why no rate was fitted, when it was not.
    pub rate_note: Option<String>,
}

/// A generic problem plus its probe metrics and starting point.
pub struct Prepared {
    pub problem: Box<dyn TwoTimeScaleProblem>,
    pub metrics: Vec<Metric>,
    pub init: Option<SolverState>,
    pub constants: Option<StructuralConstants>,
}

pub fn tdc_instance(cfg: &ExperimentConfig) -> Result<TdcInstance> {
    generate_instance(cfg.states, cfg.actions, cfg.dim, cfg.gamma, cfg.instance_seed)
}

pub fn lqr_system(cfg: &ExperimentConfig) -> Result<LqrSystem> {
    LqrSystem::benchmark_3x2(cfg.psi, cfg.sigma)
}

/// Builds the problem instance of a non-LQR experiment.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let d = cfg.dim;
    let seed = cfg.instance_seed;
    let p = match cfg.experiment {
        Experiment::SyntheticSc => {
            let p = make_quadratic(d, d, seed, cfg.condition_number, cfg.sigma);
            Prepared {
                constants: Some(p.constants()),
                problem: Box::new(p),
                metrics: vec![Metric::Z, Metric::Y, Metric::Lyapunov],
                init: None,
            }
        }
        Experiment::SyntheticPl => {
            let p = make_pl(d, d, seed, cfg.condition_number, cfg.sigma);
            Prepared {
                constants: Some(p.constants()),
                problem: Box::new(p),
                metrics: vec![Metric::X, Metric::Y, Metric::Lyapunov],
                init: None,
            }
        }
        Experiment::SyntheticNc => {
            let p = make_nonconvex(d, d, seed, cfg.sigma);
            let init = SolverState::for_problem(&p).with_theta(p.initial_theta(seed));
            Prepared {
                constants: Some(p.constants()),
                problem: Box::new(p),
                metrics: vec![Metric::GradNormSq, Metric::Y],
                init: Some(init),
            }
        }
        Experiment::Tdc => {
            let instance = tdc_instance(cfg)?;
            let constants = Some(instance.structural_constants()?);
            if cfg.algo == AlgoChoice::Td0 {
                Prepared {
                    problem: Box::new(Td0Problem { instance }),
                    metrics: vec![Metric::Z, Metric::X],
                    init: None,
                    constants,
                }
            } else {
                Prepared {
                    problem: Box::new(TdcProblem { instance }),
                    metrics: vec![Metric::Z, Metric::X, Metric::Y],
                    init: None,
                    constants,
                }
            }
        }
        Experiment::RegMdp => {
            let mdp = RegMdp::random(cfg.states, cfg.actions, cfg.gamma, cfg.tau, seed)?;
            let p = RegMdpProblem::new(mdp)?;
            let constants = Some(p.estimated_constants(&vec![0.0; p.dim_theta()])?);
            Prepared {
                problem: Box::new(p),
                metrics: vec![Metric::X, Metric::Y],
                init: None,
                constants,
            }
        }
        Experiment::Lqr => {
            return Err(Error::Config("lqr runs through the actor-critic driver".into()));
        }
    };
    Ok(p)
}

/// Runs one replica; replica `i` uses seed `stream_seed(cfg.seed, i)`.
fn replica(cfg: &ExperimentConfig, prepared: Option<&Prepared>, lqr: Option<&LqrSystem>, i: usize) -> Result<Trace> {
    let seed = stream_seed(cfg.seed, i as u64);
    let schedule = cfg.schedule.build()?;
    match (prepared, lqr) {
        (Some(p), _) => {
            let mut spec = RunSpec::new(cfg.algo.algorithm(), schedule, cfg.iters, seed)
                .stride(cfg.stride)
                .metrics(p.metrics.clone());
            if let Some(init) = &p.init {
                spec = spec.init(init.clone());
            }
            run(p.problem.as_ref(), &spec)
        }
        (None, Some(sys)) => run_actor_critic(
            sys,
            &ActorCriticSpec {
                algorithm: cfg.algo.algorithm(),
                schedule,
                rule: cfg.critic,
                n_iters: cfg.iters,
                seed,
                stride: cfg.stride,
                initial_gain: None,
            },
        ),
        (None, None) => unreachable!("replica without a problem"),
    }
}

/// Runs every replica of a validated config (concurrently), then reduces in
/// replica order so the result does not depend on scheduling.
pub fn run_traces(cfg: &ExperimentConfig) -> Result<Vec<Trace>> {
    cfg.validate()?;
    if cfg.experiment == Experiment::Lqr {
        let sys = lqr_system(cfg)?;
        (0..cfg.runs)
            .into_par_iter()
            .map(|i| replica(cfg, None, Some(&sys), i))
            .collect()
    } else {
        let p = prepare(cfg)?;
        (0..cfg.runs)
            .into_par_iter()
            .map(|i| replica(cfg, Some(&p), None, i))
            .collect()
    }
}

/// Fit of the experiment's rate metric; the nonconvex experiment uses the
/// running minimum of the mean curve.
pub fn rate_report(cfg: &ExperimentConfig, series: &AggregateSeries) -> Result<RateReport> {
    let metric = cfg.experiment.rate_metric();
    let mut curve = series
        .mean_series(metric)
        .ok_or_else(|| Error::Config(format!("metric {metric} was not recorded")))?;
    if cfg.experiment == Experiment::SyntheticNc {
        curve = running_min(&curve);
    }
    let fit = estimate_rate(&curve, cfg.window)?;
    Ok(RateReport {
        metric: metric.to_string(),
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        window: cfg.window,
        points: fit.points,
        predicted: cfg.experiment.predicted_exponent(),
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let traces = run_traces(cfg)?;
    let series = AggregateSeries::from_traces(&traces)?;
    let (rate, rate_note) = match rate_report(cfg, &series) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(ExperimentResult {
        config: cfg.clone(),
        series,
        rate,
        rate_note,
    })
}
