use crate::numerics::{dist_sq, SeededRng};

use super::{SolverState, TwoTimeScaleProblem};

/// Default Monte Carlo budget when a problem has no mean oracle.
pub const DEFAULT_MC_SAMPLES: usize = 10_000;

/// Quantities the probe can report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Metric {
    /// ‖f − F̄(θ, ω)‖²
    DeltaF,
    /// ‖g − Ḡ(θ, ω)‖²
    DeltaG,
    /// ‖ω − ω*(θ)‖²
    Y,
    /// ‖θ − θ*‖²
    Z,
    /// h(θ) − h*
    X,
    /// ‖∇h(θ)‖²
    GradNormSq,
    /// ‖Δf‖² + ‖Δg‖² + (z or x) + y
    Lyapunov,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::DeltaF,
        Metric::DeltaG,
        Metric::Y,
        Metric::Z,
        Metric::X,
        Metric::GradNormSq,
        Metric::Lyapunov,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::DeltaF => "delta_f_sq",
            Metric::DeltaG => "delta_g_sq",
            Metric::Y => "y",
            Metric::Z => "z",
            Metric::X => "x",
            Metric::GradNormSq => "grad_norm_sq",
            Metric::Lyapunov => "lyapunov",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }
}

/// Residuals of one state against the problem's exact accessors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProbeValues {
    pub delta_f_sq: Option<f64>,
    pub delta_g_sq: Option<f64>,
    pub y: Option<f64>,
    pub z: Option<f64>,
    pub x: Option<f64>,
    pub grad_norm_sq: Option<f64>,
    pub lyapunov: Option<f64>,
}

impl ProbeValues {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::DeltaF => self.delta_f_sq,
            Metric::DeltaG => self.delta_g_sq,
            Metric::Y => self.y,
            Metric::Z => self.z,
            Metric::X => self.x,
            Metric::GradNormSq => self.grad_norm_sq,
            Metric::Lyapunov => self.lyapunov,
        }
    }
}

/// Evaluates residuals at a state.
///
/// Mean operators come from the problem when it has a deterministic mean
/// oracle; otherwise from `mc_samples` draws on the probe's own stream, so
/// probing never touches the trajectory's randomness.
#[derive(Clone, Debug)]
pub struct ResidualProbe {
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for ResidualProbe {
    fn default() -> Self {
        Self {
            mc_samples: DEFAULT_MC_SAMPLES,
            seed: 0,
        }
    }
}

impl ResidualProbe {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    /// Which metrics the problem can support.
    pub fn available(problem: &dyn TwoTimeScaleProblem) -> Vec<Metric> {
        let d = problem.dim_theta();
        let probe_theta = vec![0.0; d];
        let mut out = vec![Metric::DeltaF, Metric::DeltaG];
        let has_y = problem.omega_star(&probe_theta).is_some();
        let has_z = problem.theta_star().is_some();
        let has_x = problem.h(&probe_theta).is_some() && problem.h_star().is_some();
        if has_y {
            out.push(Metric::Y);
        }
        if has_z {
            out.push(Metric::Z);
        }
        if has_x {
            out.push(Metric::X);
        }
        if problem.grad_h(&probe_theta).is_some() {
            out.push(Metric::GradNormSq);
        }
        if has_y && (has_z || has_x) {
            out.push(Metric::Lyapunov);
        }
        out
    }

    fn means(&self, problem: &dyn TwoTimeScaleProblem, state: &SolverState) -> (Vec<f64>, Vec<f64>) {
        if let Some(m) = problem.mean_operators(&state.theta, &state.omega) {
            return m;
        }
        let (d, r) = (problem.dim_theta(), problem.dim_omega());
        let mut rng = SeededRng::derive(self.seed, state.k);
        let (mut fm, mut gm) = (vec![0.0; d], vec![0.0; r]);
        let (mut fs, mut gs) = (vec![0.0; d], vec![0.0; r]);
        for _ in 0..self.mc_samples {
            problem.sample(&state.theta, &state.omega, &mut rng, &mut fs, &mut gs);
            fm.iter_mut().zip(&fs).for_each(|(a, b)| *a += b);
            gm.iter_mut().zip(&gs).for_each(|(a, b)| *a += b);
        }
        let n = self.mc_samples.max(1) as f64;
        fm.iter_mut().for_each(|a| *a /= n);
        gm.iter_mut().for_each(|a| *a /= n);
        (fm, gm)
    }

    pub fn evaluate(&self, problem: &dyn TwoTimeScaleProblem, state: &SolverState) -> ProbeValues {
        self.evaluate_selected(problem, state, &Metric::ALL)
    }

    /// Like [`evaluate`](Self::evaluate) but skips quantities none of
    /// `wanted` depends on; the skipped fields are `None`.
    pub fn evaluate_selected(
        &self,
        problem: &dyn TwoTimeScaleProblem,
        state: &SolverState,
        wanted: &[Metric],
    ) -> ProbeValues {
        let want = |m: Metric| wanted.contains(&m);
        let lyap = want(Metric::Lyapunov);
        let (delta_f_sq, delta_g_sq) = if lyap || want(Metric::DeltaF) || want(Metric::DeltaG) {
            let (fbar, gbar) = self.means(problem, state);
            (Some(dist_sq(&state.f, &fbar)), Some(dist_sq(&state.g, &gbar)))
        } else {
            (None, None)
        };
        let y = (lyap || want(Metric::Y))
            .then(|| problem.omega_star(&state.theta).map(|ws| dist_sq(&state.omega, &ws)))
            .flatten();
        let z = (lyap || want(Metric::Z))
            .then(|| problem.theta_star().map(|ts| dist_sq(&state.theta, &ts)))
            .flatten();
        let x = (lyap || want(Metric::X))
            .then(|| match (problem.h(&state.theta), problem.h_star()) {
                (Some(h), Some(hs)) => Some(h - hs),
                _ => None,
            })
            .flatten();
        let grad_norm_sq = want(Metric::GradNormSq)
            .then(|| problem.grad_h(&state.theta).map(|g| g.iter().map(|v| v * v).sum()))
            .flatten();
        let lyapunov = match (delta_f_sq, delta_g_sq, y, z.or(x)) {
            (Some(df), Some(dg), Some(y), Some(upper)) if lyap => Some(df + dg + upper + y),
            _ => None,
        };
        ProbeValues {
            delta_f_sq,
            delta_g_sq,
            y,
            z,
            x,
            grad_norm_sq,
            lyapunov,
        }
    }
}
