//! The averaged two-time-scale method, the classic baseline, step-size
//! schedules, residual probes and rate estimation, all written against the
//! abstract [`TwoTimeScaleProblem`] oracle.

mod algorithm;
mod conditions;
mod probe;
mod problem;
mod run;
mod schedule;
mod trace;

pub use algorithm::{averaging_update, fast_step, standard_step, step, Algorithm, SolverState};
pub use conditions::{check_conditions, ConditionReport, Regime};
pub use probe::{Metric, ProbeValues, ResidualProbe, DEFAULT_MC_SAMPLES};
pub use problem::{CountingProblem, StructuralConstants, TwoTimeScaleProblem};
pub use run::{record_points, run, RunSpec, PROBE_STREAM, SAMPLING_STREAM};
pub use schedule::{make_polynomial_schedule, make_sqrt_schedule, StepSchedule, Steps};
pub use trace::{estimate_rate, Failure, RateFit, Record, Trace};
