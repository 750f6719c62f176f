use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::solver::{check_conditions, Regime, StructuralConstants};

use super::config::{parse_config_file, resolve_config, Experiment, ExperimentConfig};
use super::csv::{result_header, write_csv};
use super::experiment::{prepare, run_experiment, tdc_instance};

#[derive(Parser, Debug)]
#[command(name = "tts", version, about = "Two-time-scale stochastic approximation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run replicas of an experiment and write the aggregated CSV.
    Run(RunArgs),
    /// Evaluate the step-size conditions of a schedule and print the table.
    CheckSchedule(CheckArgs),
    /// Print a generated TDC instance in the flat text format.
    DumpInstance(DumpArgs),
}

/// Problem-size and config overrides shared by the subcommands. Values are
/// kept as text and validated by the config layer.
#[derive(Args, Debug, Default)]
struct Overrides {
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    #[arg(long)]
    runs: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    stride: Option<String>,
    #[arg(long)]
    instance_seed: Option<String>,
    #[arg(long)]
    states: Option<String>,
    #[arg(long)]
    actions: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    psi: Option<String>,
    #[arg(long)]
    condition_number: Option<String>,
    /// Critic update for lqr: `td` or `literal`.
    #[arg(long)]
    critic: Option<String>,
    /// Tail fraction used by the rate fit.
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

impl Overrides {
    fn entries(&self) -> Vec<(String, String)> {
        let fields = [
            ("algo", &self.algo),
            ("schedule", &self.schedule),
            ("iters", &self.iters),
            ("runs", &self.runs),
            ("seed", &self.seed),
            ("stride", &self.stride),
            ("instance_seed", &self.instance_seed),
            ("states", &self.states),
            ("actions", &self.actions),
            ("dim", &self.dim),
            ("gamma", &self.gamma),
            ("tau", &self.tau),
            ("sigma", &self.sigma),
            ("psi", &self.psi),
            ("condition_number", &self.condition_number),
            ("critic", &self.critic),
            ("window", &self.window),
            ("out", &self.out),
        ];
        fields
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    /// synthetic-sc, synthetic-pl, synthetic-nc, tdc, lqr or regmdp
    experiment: String,
    /// Flat key=value file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug)]
struct CheckArgs {
    /// Experiment whose problem supplies the structural constants.
    #[arg(long, default_value = "synthetic-sc")]
    experiment: String,
    /// Last k checked.
    #[arg(long, default_value = "100000")]
    horizon: String,
    /// strongly_convex, pl or nonconvex; defaults to the experiment's regime.
    #[arg(long)]
    regime: Option<String>,
    #[arg(long)]
    lipschitz: Option<f64>,
    #[arg(long)]
    mu_g: Option<f64>,
    #[arg(long)]
    mu_h: Option<f64>,
    #[arg(long)]
    variance: Option<f64>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug)]
struct DumpArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    sizes: DumpSizes,
}

#[derive(Args, Debug)]
struct DumpSizes {
    #[arg(long)]
    states: Option<String>,
    #[arg(long)]
    actions: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    instance_seed: Option<String>,
}

/// Resolves `run` arguments into a config.
pub fn parse_config<I, T>(args: I) -> Result<ExperimentConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Parse(e.to_string()))?;
    match cli.command {
        Command::Run(a) => run_config(&a),
        _ => Err(Error::Parse("expected the run subcommand".into())),
    }
}

fn run_config(a: &RunArgs) -> Result<ExperimentConfig> {
    let experiment = Experiment::from_name(&a.experiment)?;
    let file = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })?;
            parse_config_file(&text)?
        }
        None => Vec::new(),
    };
    resolve_config(experiment, &file, &a.overrides.entries())
}

fn cmd_run(a: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = run_config(a)?;
    let result = run_experiment(&cfg)?;
    write_csv(&cfg.out, &result_header(&result), &result.series)?;
    let s = &result.series;
    let metric = cfg.experiment.rate_metric();
    let _ = writeln!(
        out,
        "{} {}: {} of {} replicas completed, final mean {} = {:e}",
        cfg.experiment,
        cfg.algo.name(),
        s.completed,
        cfg.runs,
        metric,
        s.final_mean(metric).unwrap_or(f64::NAN)
    );
    match (&result.rate, &result.rate_note) {
        (Some(r), _) => {
            let _ = writeln!(
                out,
                "rate: slope {:.4} (r^2 {:.4}, window {}, {} points), predicted {}",
                r.slope, r.r_squared, r.window, r.points, r.predicted
            );
        }
        (None, Some(n)) => {
            let _ = writeln!(out, "rate: not fitted ({n})");
        }
        _ => {}
    }
    for (i, f) in &s.flagged {
        let _ = writeln!(out, "flagged replica {i} at k={}: {}", f.k, f.message);
    }
    let _ = writeln!(out, "wrote {}", cfg.out.display());
    Ok(())
}

fn cmd_check(a: &CheckArgs, out: &mut dyn Write) -> Result<()> {
    let experiment = Experiment::from_name(&a.experiment)?;
    let cfg = resolve_config(experiment, &[], &a.overrides.entries())?;
    let horizon: u64 = a
        .horizon
        .parse()
        .map_err(|_| Error::Parse(format!("malformed value `{}` for `horizon`", a.horizon)))?;
    let regime = match &a.regime {
        Some(r) => Regime::from_name(r).ok_or_else(|| Error::Parse(format!("unknown regime `{r}`")))?,
        None => experiment.regime(),
    };
    let derived = if a.lipschitz.is_some() && a.mu_g.is_some() || experiment == Experiment::Lqr {
        None
    } else {
        prepare(&cfg)?.constants
    };
    let constants = match derived {
        Some(c) => StructuralConstants {
            lipschitz: a.lipschitz.unwrap_or(c.lipschitz),
            mu_g: a.mu_g.unwrap_or(c.mu_g),
            mu_h: a.mu_h.or(c.mu_h),
            variance_bound: a.variance.unwrap_or(c.variance_bound),
        },
        None => match (a.lipschitz, a.mu_g) {
            (Some(l), Some(mg)) => StructuralConstants::new(l, mg, a.mu_h, a.variance.unwrap_or(0.0)),
            _ => {
                return Err(Error::Config(format!(
                    "{experiment} has no computed constants; pass --lipschitz and --mu-g"
                )))
            }
        },
    };
    let schedule = cfg.schedule.build()?;
    let reports = check_conditions(&schedule, &constants, regime, horizon);
    let _ = writeln!(out, "schedule {} regime {} horizon {horizon}", cfg.schedule, regime.name());
    let _ = writeln!(
        out,
        "L={} mu_G={} mu_h={} B={}",
        constants.lipschitz,
        constants.mu_g,
        constants.mu_h.map_or("n/a".to_string(), |m| m.to_string()),
        constants.variance_bound
    );
    let width = reports.iter().map(|r| r.id.len()).max().unwrap_or(2);
    let _ = writeln!(out, "{:<width$}  ok   worst_margin  worst_k  condition", "id");
    for r in &reports {
        let _ = writeln!(
            out,
            "{:<width$}  {}  {:>12.4e}  {:>7}  {}",
            r.id,
            if r.satisfied { "yes" } else { "NO " },
            r.worst_margin,
            r.worst_k,
            r.description
        );
    }
    let failed = reports.iter().filter(|r| !r.satisfied).count();
    let _ = writeln!(out, "{} of {} conditions satisfied", reports.len() - failed, reports.len());
    Ok(())
}

fn cmd_dump(a: &DumpArgs, out: &mut dyn Write) -> Result<()> {
    let s = &a.sizes;
    let entries: Vec<(String, String)> = [
        ("states", &s.states),
        ("actions", &s.actions),
        ("dim", &s.dim),
        ("gamma", &s.gamma),
        ("instance_seed", &s.instance_seed),
    ]
    .into_iter()
    .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
    .collect();
    let cfg = resolve_config(Experiment::Tdc, &[], &entries)?;
    let instance = tdc_instance(&cfg)?;
    match &a.out {
        Some(path) => instance.save(path),
        None => {
            let _ = out.write_all(instance.dump().as_bytes());
            Ok(())
        }
    }
}

/// Entry point of the `tts` binary. Returns the process exit code: 0 on
/// success, 1 for usage, config or I/O errors, 2 for numerical failures.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::CheckSchedule(a) => cmd_check(a, out),
        Command::DumpInstance(a) => cmd_dump(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::config::ScheduleSpec;
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = main_with(std::iter::once("tts").chain(args.iter().copied()), &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn parse_config_applies_flags() {
        let cfg = parse_config(["tts", "run", "tdc", "--algo", "fast", "--iters", "200000", "--runs", "20", "--seed", "1", "--schedule", "appendixD"]).unwrap();
        assert_eq!(cfg.schedule, ScheduleSpec::AppendixD);
        assert_eq!((cfg.iters, cfg.runs, cfg.seed), (200_000, 20, 1));
        assert_eq!(cfg.out, PathBuf::from("./results/tdc-fast-1.csv"));
    }

    #[test]
    fn config_file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.cfg");
        std::fs::write(&path, "iters=77\nruns=2\nsigma=0.5\n").unwrap();
        let p = path.to_str().unwrap();
        let cfg = parse_config(["tts", "run", "synthetic-sc", "--config", p, "--runs", "3"]).unwrap();
        assert_eq!((cfg.iters, cfg.runs, cfg.sigma), (77, 3, 0.5));
        std::fs::write(&path, "iterz=77\n").unwrap();
        assert!(matches!(
            parse_config(["tts", "run", "synthetic-sc", "--config", p]),
            Err(Error::Parse(m)) if m.contains("iterz")
        ));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(call(&["run", "nope"]).0, 1);
        assert_eq!(call(&["run", "synthetic-sc", "--bogus", "1"]).0, 1);
        let (code, _, err) = call(&["run", "synthetic-sc", "--iters", "abc"]);
        assert_eq!(code, 1);
        assert!(err.contains("abc"));
        assert_eq!(call(&["--help"]).0, 0);
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("d.csv");
        let (code, _, err) = call(&[
            "run", "synthetic-sc", "--iters", "500", "--runs", "2", "--stride", "100",
            "--schedule", "poly:1,1e6,1e6,1", "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(code, 2, "{err}");
    }

    #[test]
    fn check_schedule_table() {
        let (code, out, err) = call(&["check-schedule", "--experiment", "synthetic-sc", "--horizon", "1000"]);
        assert_eq!(code, 0, "{err}");
        assert!(out.contains("conditions satisfied"));
        let (code, out, _) = call(&["check-schedule", "--experiment", "tdc", "--schedule", "appendixD", "--horizon", "1000", "--states", "5", "--actions", "5", "--dim", "3"]);
        assert_eq!(code, 0);
        assert!(out.contains("mu_G="));
        assert_eq!(call(&["check-schedule", "--experiment", "lqr"]).0, 1);
        let (code, _, _) = call(&["check-schedule", "--experiment", "lqr", "--lipschitz", "10", "--mu-g", "0.5", "--mu-h", "0.1"]);
        assert_eq!(code, 0);
    }

    #[test]
    fn dump_instance_parses_back() {
        let (code, out, _) = call(&["dump-instance", "--states", "4", "--actions", "3", "--dim", "2", "--instance-seed", "9"]);
        assert_eq!(code, 0);
        let inst = crate::tdc::TdcInstance::load(&out).unwrap();
        assert_eq!((inst.mdp.n_states, inst.mdp.n_actions, inst.dim(), inst.seed), (4, 3, 2, 9));
    }
}
