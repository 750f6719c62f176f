use std::fmt;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::lqr::CriticRule;
use crate::solver::{make_polynomial_schedule, make_sqrt_schedule, Algorithm, Regime, StepSchedule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Experiment {
    SyntheticSc,
    SyntheticPl,
    SyntheticNc,
    Tdc,
    Lqr,
    RegMdp,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::SyntheticSc,
        Experiment::SyntheticPl,
        Experiment::SyntheticNc,
        Experiment::Tdc,
        Experiment::Lqr,
        Experiment::RegMdp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::SyntheticSc => "synthetic-sc",
            Experiment::SyntheticPl => "synthetic-pl",
            Experiment::SyntheticNc => "synthetic-nc",
            Experiment::Tdc => "tdc",
            Experiment::Lqr => "lqr",
            Experiment::RegMdp => "regmdp",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown experiment `{s}`")))
    }

    /// Regime whose rate the experiment is compared against.
    pub fn regime(self) -> Regime {
        match self {
            Experiment::SyntheticSc | Experiment::Tdc => Regime::StronglyConvex,
            Experiment::SyntheticPl | Experiment::Lqr | Experiment::RegMdp => Regime::Pl,
            Experiment::SyntheticNc => Regime::Nonconvex,
        }
    }

    /// Exponent `p` of the predicted `k^p` decay.
    pub fn predicted_exponent(self) -> f64 {
        match self.regime() {
            Regime::Nonconvex => -0.5,
            _ => -1.0,
        }
    }

    /// Metric the rate is fitted on.
    pub fn rate_metric(self) -> &'static str {
        match self {
            Experiment::SyntheticSc | Experiment::Tdc => "z",
            Experiment::SyntheticPl | Experiment::RegMdp => "x",
            Experiment::SyntheticNc => "grad_norm_sq",
            Experiment::Lqr => "gap",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlgoChoice {
    Fast,
    Standard,
    Td0,
}

impl AlgoChoice {
    pub fn name(self) -> &'static str {
        match self {
            AlgoChoice::Fast => "fast",
            AlgoChoice::Standard => "standard",
            AlgoChoice::Td0 => "td0",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(AlgoChoice::Fast),
            "standard" => Ok(AlgoChoice::Standard),
            "td0" => Ok(AlgoChoice::Td0),
            _ => Err(Error::Parse(format!("unknown algorithm `{s}`"))),
        }
    }

    /// TD(0) runs through the standard step on a problem with a dummy ω.
    pub fn algorithm(self) -> Algorithm {
        match self {
            AlgoChoice::Fast => Algorithm::Fast,
            AlgoChoice::Standard | AlgoChoice::Td0 => Algorithm::Standard,
        }
    }
}

/// Textual step-size family as accepted on the command line.
#[derive(Clone, Debug, PartialEq)]
pub enum ScheduleSpec {
    Poly {
        c_lambda: f64,
        c_alpha: f64,
        c_beta: f64,
        tau: f64,
    },
    Sqrt {
        alpha0: f64,
        beta0: f64,
    },
    /// α = 5e-4, β = 2e-3, λ_k = 4/(5(k+10)).
    AppendixD,
}

fn parse_numbers(token: &str, body: &str, n: usize) -> Result<Vec<f64>> {
    let parts: Vec<&str> = body.split(',').map(str::trim).collect();
    if parts.len() != n {
        return Err(Error::Parse(format!(
            "schedule `{token}` needs {n} comma-separated numbers"
        )));
    }
    parts
        .iter()
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| Error::Parse(format!("malformed number `{p}` in schedule `{token}`")))
        })
        .collect()
}

impl ScheduleSpec {
    pub fn parse(token: &str) -> Result<Self> {
        let token = token.trim();
        if token == "appendixD" {
            return Ok(ScheduleSpec::AppendixD);
        }
        let spec = if let Some(body) = token.strip_prefix("poly:") {
            let v = parse_numbers(token, body, 4)?;
            ScheduleSpec::Poly {
                c_lambda: v[0],
                c_alpha: v[1],
                c_beta: v[2],
                tau: v[3],
            }
        } else if let Some(body) = token.strip_prefix("sqrt:") {
            let v = parse_numbers(token, body, 2)?;
            ScheduleSpec::Sqrt {
                alpha0: v[0],
                beta0: v[1],
            }
        } else {
            return Err(Error::Parse(format!(
                "unknown schedule `{token}` (expected poly:cl,ca,cb,tau, sqrt:a0,b0 or appendixD)"
            )));
        };
        spec.build()?;
        Ok(spec)
    }

    pub fn build(&self) -> Result<StepSchedule> {
        match *self {
            ScheduleSpec::Poly {
                c_lambda,
                c_alpha,
                c_beta,
                tau,
            } => make_polynomial_schedule(c_lambda, c_alpha, c_beta, tau),
            ScheduleSpec::Sqrt { alpha0, beta0 } => make_sqrt_schedule(alpha0, beta0),
            ScheduleSpec::AppendixD => Ok(StepSchedule::tdc_reference()),
        }
    }
}

impl fmt::Display for ScheduleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleSpec::Poly {
                c_lambda,
                c_alpha,
                c_beta,
                tau,
            } => write!(f, "poly:{c_lambda},{c_alpha},{c_beta},{tau}"),
            ScheduleSpec::Sqrt { alpha0, beta0 } => write!(f, "sqrt:{alpha0},{beta0}"),
            ScheduleSpec::AppendixD => f.write_str("appendixD"),
        }
    }
}

/// Fully resolved settings of one experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub algo: AlgoChoice,
    pub schedule: ScheduleSpec,
    pub iters: u64,
    pub runs: usize,
    pub seed: u64,
    pub stride: u64,
    /// Problem-generation seed, independent of the replica seeds.
    pub instance_seed: u64,
    pub states: usize,
    pub actions: usize,
    pub dim: usize,
    pub gamma: f64,
    pub tau: f64,
    /// Noise level: oracle noise for synthetic problems, state and control
    /// noise for LQR.
    pub sigma: f64,
    /// Scale of the LQR initial-state covariance.
    pub psi: f64,
    pub condition_number: f64,
    pub critic: CriticRule,
    pub window: f64,
    pub out: PathBuf,
    out_explicit: bool,
}

/// Keys accepted in config files and as `--key` flags.
pub const CONFIG_KEYS: [&str; 19] = [
    "algo",
    "schedule",
    "iters",
    "runs",
    "seed",
    "stride",
    "instance_seed",
    "states",
    "actions",
    "dim",
    "gamma",
    "tau",
    "sigma",
    "psi",
    "condition_number",
    "critic",
    "window",
    "out",
    "experiment",
];

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| Error::Parse(format!("malformed value `{value}` for `{key}`")))
}

/// Integers may be written in float notation (`2e5`) as long as they are
/// exact.
fn parse_count(key: &str, value: &str) -> Result<u64> {
    if let Ok(v) = value.trim().parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = parse_value(key, value)?;
    if f.is_finite() && f >= 0.0 && f.fract() == 0.0 && f < 1.8e19 {
        Ok(f as u64)
    } else {
        Err(Error::Parse(format!("malformed value `{value}` for `{key}`")))
    }
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let mut cfg = Self {
            experiment,
            algo: AlgoChoice::Fast,
            schedule: ScheduleSpec::Poly {
                c_lambda: 16.0,
                c_alpha: 16.0,
                c_beta: 16.0,
                tau: 63.0,
            },
            iters: 200_000,
            runs: 20,
            seed: 1,
            stride: 1000,
            instance_seed: 1,
            states: 5,
            actions: 5,
            dim: 5,
            gamma: 0.9,
            tau: 0.1,
            sigma: 0.1,
            psi: 1.0,
            condition_number: 2.0,
            critic: CriticRule::TemporalDifference,
            window: 0.9,
            out: PathBuf::new(),
            out_explicit: false,
        };
        match experiment {
            Experiment::SyntheticSc | Experiment::SyntheticPl => {}
            Experiment::SyntheticNc => {
                cfg.schedule = ScheduleSpec::Sqrt {
                    alpha0: 0.0026,
                    beta0: 0.006,
                };
            }
            Experiment::Tdc => {
                cfg.schedule = ScheduleSpec::AppendixD;
                cfg.states = 50;
                cfg.actions = 50;
                cfg.dim = 10;
                cfg.gamma = 0.5;
            }
            Experiment::Lqr => {
                cfg.schedule = ScheduleSpec::Poly {
                    c_lambda: 50.0,
                    c_alpha: 0.2,
                    c_beta: 2.0,
                    tau: 1000.0,
                };
                cfg.sigma = 1.0;
                cfg.stride = 100;
            }
            Experiment::RegMdp => {
                cfg.schedule = ScheduleSpec::Poly {
                    c_lambda: 8.0,
                    c_alpha: 32.0,
                    c_beta: 64.0,
                    tau: 255.0,
                };
            }
        }
        cfg.refresh_out();
        cfg
    }

    fn refresh_out(&mut self) {
        if !self.out_explicit {
            self.out = PathBuf::from(format!(
                "./results/{}-{}-{}.csv",
                self.experiment,
                self.algo.name(),
                self.seed
            ));
        }
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "experiment" => {
                let e = Experiment::from_name(value.trim())?;
                if e != self.experiment {
                    return Err(Error::Parse(format!(
                        "config names experiment `{e}` but `{}` was requested",
                        self.experiment
                    )));
                }
            }
            "algo" => self.algo = AlgoChoice::from_name(value.trim())?,
            "schedule" => self.schedule = ScheduleSpec::parse(value)?,
            "iters" => self.iters = parse_count(key, value)?,
            "runs" => self.runs = parse_count(key, value)? as usize,
            "seed" => self.seed = parse_count(key, value)?,
            "stride" => self.stride = parse_count(key, value)?,
            "instance_seed" => self.instance_seed = parse_count(key, value)?,
            "states" => self.states = parse_count(key, value)? as usize,
            "actions" => self.actions = parse_count(key, value)? as usize,
            "dim" => self.dim = parse_count(key, value)? as usize,
            "gamma" => self.gamma = parse_value(key, value)?,
            "tau" => self.tau = parse_value(key, value)?,
            "sigma" => self.sigma = parse_value(key, value)?,
            "psi" => self.psi = parse_value(key, value)?,
            "condition_number" => self.condition_number = parse_value(key, value)?,
            "critic" => self.critic = CriticRule::from_name(value.trim())?,
            "window" => self.window = parse_value(key, value)?,
            "out" => {
                self.out = PathBuf::from(value.trim());
                self.out_explicit = true;
            }
            _ => return Err(Error::Parse(format!("unknown key `{key}`"))),
        }
        self.refresh_out();
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.algo == AlgoChoice::Td0 && self.experiment != Experiment::Tdc {
            return bad(format!("algo td0 is only available for tdc, not {}", self.experiment));
        }
        if self.runs < 1 {
            return bad("runs must be at least 1".into());
        }
        if self.iters < 1 {
            return bad("iters must be at least 1".into());
        }
        if self.stride < 1 {
            return bad("stride must be at least 1".into());
        }
        if !(self.window > 0.0 && self.window <= 1.0) {
            return bad(format!("window {} outside (0, 1]", self.window));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be non-negative, got {}", self.sigma));
        }
        match self.experiment {
            Experiment::SyntheticSc | Experiment::SyntheticPl | Experiment::SyntheticNc => {
                if self.dim < 2 {
                    return bad("dim must be at least 2".into());
                }
                if !(self.condition_number >= 1.0) {
                    return bad("condition_number must be at least 1".into());
                }
            }
            Experiment::Tdc | Experiment::RegMdp => {
                if self.states < 1 || self.actions < 1 || self.dim < 1 {
                    return bad("states, actions and dim must be positive".into());
                }
                if !(0.0..1.0).contains(&self.gamma) {
                    return bad(format!("gamma {} outside [0, 1)", self.gamma));
                }
                if self.experiment == Experiment::RegMdp && !(self.tau > 0.0) {
                    return bad("tau must be positive".into());
                }
            }
            Experiment::Lqr => {
                if !(self.psi > 0.0) {
                    return bad("psi must be positive".into());
                }
            }
        }
        Ok(())
    }

    /// Every setting as `(key, value)`, in a fixed order, for output headers.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("experiment", self.experiment.to_string()),
            ("algo", self.algo.name().to_string()),
            ("schedule", self.schedule.to_string()),
            ("iters", self.iters.to_string()),
            ("runs", self.runs.to_string()),
            ("seed", self.seed.to_string()),
            ("stride", self.stride.to_string()),
            ("instance_seed", self.instance_seed.to_string()),
            ("states", self.states.to_string()),
            ("actions", self.actions.to_string()),
            ("dim", self.dim.to_string()),
            ("gamma", self.gamma.to_string()),
            ("tau", self.tau.to_string()),
            ("sigma", self.sigma.to_string()),
            ("psi", self.psi.to_string()),
            ("condition_number", self.condition_number.to_string()),
            ("critic", self.critic.name().to_string()),
            ("window", self.window.to_string()),
            ("out", self.out.display().to_string()),
        ]
    }
}

/// Parses a flat `key = value` file; `#` starts a comment.
pub fn parse_config_file(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected key=value, got `{line}`", i + 1)))?;
        let key = key.trim();
        if !CONFIG_KEYS.contains(&key) {
            return Err(Error::Parse(format!("line {}: unknown key `{key}`", i + 1)));
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

/// Resolves a config: per-experiment defaults, then file entries, then
/// command-line overrides.
pub fn resolve_config(
    experiment: Experiment,
    file_entries: &[(String, String)],
    overrides: &[(String, String)],
) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::defaults(experiment);
    for (k, v) in file_entries.iter().chain(overrides) {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly_schedule_parses() {
        let s = ScheduleSpec::parse("poly:0.8,0.0005,0.002,9").unwrap();
        assert_eq!(
            s,
            ScheduleSpec::Poly {
                c_lambda: 0.8,
                c_alpha: 0.0005,
                c_beta: 0.002,
                tau: 9.0
            }
        );
        assert_eq!(ScheduleSpec::parse(&s.to_string()).unwrap(), s);
    }

    #[test]
    fn appendix_d_preset_steps() {
        let cfg = resolve_config(
            Experiment::Tdc,
            &[],
            &[
                ("algo".into(), "fast".into()),
                ("iters".into(), "200000".into()),
                ("runs".into(), "20".into()),
                ("seed".into(), "1".into()),
                ("schedule".into(), "appendixD".into()),
            ],
        )
        .unwrap();
        let s = cfg.schedule.build().unwrap();
        assert_eq!(s.alpha(123), 5e-4);
        assert_eq!(s.beta(0), 2e-3);
        assert!((s.lambda(0) - 0.08).abs() < 1e-15);
        assert!((s.lambda(90) - 0.008).abs() < 1e-15);
    }

    #[test]
    fn default_output_path() {
        let cfg = resolve_config(Experiment::Lqr, &[], &[("algo".into(), "standard".into()), ("seed".into(), "7".into())]).unwrap();
        assert_eq!(cfg.out, PathBuf::from("./results/lqr-standard-7.csv"));
        let cfg = resolve_config(Experiment::Lqr, &[], &[("out".into(), "x.csv".into()), ("seed".into(), "9".into())]).unwrap();
        assert_eq!(cfg.out, PathBuf::from("x.csv"));
    }

    #[test]
    fn overrides_beat_file() {
        let file = parse_config_file("iters = 50 # short\nruns=3\n").unwrap();
        let cfg = resolve_config(Experiment::SyntheticSc, &file, &[("runs".into(), "4".into())]).unwrap();
        assert_eq!((cfg.iters, cfg.runs), (50, 4));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(parse_config_file("bogus=1"), Err(Error::Parse(m)) if m.contains("bogus")));
        assert!(matches!(
            resolve_config(Experiment::SyntheticSc, &[], &[("iters".into(), "ten".into())]),
            Err(Error::Parse(m)) if m.contains("ten")
        ));
        assert!(matches!(
            resolve_config(Experiment::SyntheticSc, &[], &[("algo".into(), "td0".into())]),
            Err(Error::Config(_))
        ));
        assert!(resolve_config(Experiment::SyntheticSc, &[], &[("runs".into(), "0".into())]).is_err());
        assert!(resolve_config(Experiment::SyntheticSc, &[], &[("iters".into(), "0".into())]).is_err());
        assert!(ScheduleSpec::parse("poly:1,2,3").is_err());
        assert!(ScheduleSpec::parse("cosine:1").is_err());
    }

    #[test]
    fn float_notation_counts() {
        let cfg = resolve_config(Experiment::SyntheticSc, &[], &[("iters".into(), "2e5".into())]).unwrap();
        assert_eq!(cfg.iters, 200_000);
        assert!(resolve_config(Experiment::SyntheticSc, &[], &[("iters".into(), "2.5".into())]).is_err());
    }
}
