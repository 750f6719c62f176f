use crate::error::{Error, Result};
use crate::numerics::{stream_seed, SeededRng};

use super::{step, Algorithm, Failure, Metric, ResidualProbe, SolverState, StepSchedule, Trace, TwoTimeScaleProblem};

/// Stream index of the oracle draws within a run seed.
pub const SAMPLING_STREAM: u64 = 0;
/// Stream index of Monte Carlo probe draws within a run seed.
pub const PROBE_STREAM: u64 = 1;

/// Everything that determines one run besides the problem.
#[derive(Clone, Debug)]
pub struct RunSpec {
    pub algorithm: Algorithm,
    pub schedule: StepSchedule,
    pub n_iters: u64,
    pub seed: u64,
    pub stride: u64,
    pub metrics: Vec<Metric>,
    /// Starting point; all-zero when absent.
    pub init: Option<SolverState>,
    pub mc_samples: usize,
}

impl RunSpec {
    pub fn new(algorithm: Algorithm, schedule: StepSchedule, n_iters: u64, seed: u64) -> Self {
        Self {
            algorithm,
            schedule,
            n_iters,
            seed,
            stride: 1,
            metrics: vec![Metric::Z],
            init: None,
            mc_samples: super::probe::DEFAULT_MC_SAMPLES,
        }
    }

    pub fn stride(mut self, stride: u64) -> Self {
        self.stride = stride;
        self
    }

    pub fn metrics(mut self, metrics: impl Into<Vec<Metric>>) -> Self {
        self.metrics = metrics.into();
        self
    }

    pub fn init(mut self, init: SolverState) -> Self {
        self.init = Some(init);
        self
    }
}

/// Indices at which a run of `n_iters` with `stride` records: multiples of
/// the stride plus the final iterate.
pub fn record_points(n_iters: u64, stride: u64) -> impl Iterator<Item = u64> {
    let stride = stride.max(1);
    let last_multiple = n_iters / stride * stride;
    (0..=n_iters / stride)
        .map(move |i| i * stride)
        .chain((last_multiple != n_iters).then_some(n_iters))
}

/// Runs one replica and records the probe metrics every `stride` iterations.
///
/// The result is a pure function of `(problem, spec)`. A non-finite state or
/// metric ends the trace early with a failure flag instead of an error.
pub fn run(problem: &dyn TwoTimeScaleProblem, spec: &RunSpec) -> Result<Trace> {
    if spec.n_iters < 1 || spec.stride < 1 {
        return Err(Error::Config("n_iters and stride must be at least 1".into()));
    }
    let available = ResidualProbe::available(problem);
    if let Some(m) = spec.metrics.iter().find(|m| !available.contains(m)) {
        return Err(Error::Config(format!(
            "metric {} is not available for this problem",
            m.name()
        )));
    }
    let mut state = spec
        .init
        .clone()
        .unwrap_or_else(|| SolverState::for_problem(problem));
    state.check_dims(problem)?;

    let probe = ResidualProbe {
        mc_samples: spec.mc_samples,
        seed: stream_seed(spec.seed, PROBE_STREAM),
    };
    let mut rng = SeededRng::derive(spec.seed, SAMPLING_STREAM);
    let mut trace = Trace::new(spec.metrics.iter().map(|m| m.name().to_string()).collect());

    let points: Vec<u64> = record_points(spec.n_iters, spec.stride).collect();
    let mut next = points.iter().peekable();
    loop {
        if next.peek().is_some_and(|&&p| p == state.k) {
            next.next();
            let values = probe.evaluate_selected(problem, &state, &spec.metrics);
            let row: Vec<f64> = spec
                .metrics
                .iter()
                .map(|m| values.get(*m).unwrap_or(f64::NAN))
                .collect();
            if let Some(i) = row.iter().position(|v| !v.is_finite()) {
                trace.failure = Some(Failure {
                    k: state.k,
                    message: format!("metric {} is {}", spec.metrics[i].name(), row[i]),
                });
                break;
            }
            trace.push(state.k, row);
        }
        if state.k >= spec.n_iters {
            break;
        }
        if let Err(e) = step(spec.algorithm, &mut state, problem, &spec.schedule, &mut rng) {
            trace.failure = Some(Failure {
                k: state.k,
                message: e.to_string(),
            });
            break;
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_points_include_final() {
        assert_eq!(record_points(1, 1).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(record_points(10, 4).collect::<Vec<_>>(), vec![0, 4, 8, 10]);
        assert_eq!(record_points(8, 4).collect::<Vec<_>>(), vec![0, 4, 8]);
    }
}
