//! Linear quadratic regulator: simulation, the single-trajectory
//! actor-critic, and exact solvers (Lyapunov, Riccati, cost and gradients)
//! used as ground truth.

use crate::error::{Error, Result};
use crate::numerics::{dot, stability_test, DenseMatrix, SeededRng};
use crate::solver::{Algorithm, Failure, StepSchedule, Trace};

const LYAPUNOV_TOL: f64 = 1e-12;
const MAX_FIXED_POINT_ITERS: usize = 100_000;

#[derive(Clone, Debug)]
pub struct LqrSystem {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
    pub q: DenseMatrix,
    pub r: DenseMatrix,
    pub psi: DenseMatrix,
    pub sigma: f64,
    psi_factor: DenseMatrix,
}

impl LqrSystem {
    /// `Q` and `R` must be positive definite; `Ψ` may be singular (a zero
    /// noise covariance is allowed for deterministic checks).
    pub fn new(
        a: DenseMatrix,
        b: DenseMatrix,
        q: DenseMatrix,
        r: DenseMatrix,
        psi: DenseMatrix,
        sigma: f64,
    ) -> Result<Self> {
        let n = a.rows();
        if !a.is_square() || b.rows() != n || q.rows() != n || !q.is_square() || psi.rows() != n || !psi.is_square() {
            return Err(Error::Contract("state matrices have inconsistent shapes".into()));
        }
        if !r.is_square() || r.rows() != b.cols() {
            return Err(Error::Contract("R must be d2 x d2".into()));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be nonnegative, got {sigma}")));
        }
        for (name, m) in [("Q", &q), ("R", &r), ("Psi", &psi)] {
            if !m.is_symmetric(1e-12) {
                return Err(Error::Contract(format!("{name} must be symmetric")));
            }
        }
        q.cholesky()?;
        r.cholesky()?;
        let psi_factor = psi.psd_factor()?;
        Ok(Self { a, b, q, r, psi, sigma, psi_factor })
    }

    /// State and control dimensions `(d1, d2)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.a.rows(), self.b.cols())
    }

    /// `Ψ + σ²BBᵀ`
    pub fn psi_sigma(&self) -> DenseMatrix {
        self.psi
            .add(&self.b.matmul(&self.b.transpose()).scale(self.sigma * self.sigma))
    }

    pub fn closed_loop(&self, k: &DenseMatrix) -> DenseMatrix {
        self.a.sub(&self.b.matmul(k))
    }

    pub fn is_stabilizing(&self, k: &DenseMatrix) -> bool {
        stability_test(&self.closed_loop(k))
    }

    /// The 3-state, 2-input benchmark with `Q = I₃`, `R = I₂`.
    pub fn benchmark_3x2(psi_scale: f64, sigma: f64) -> Result<Self> {
        let a = DenseMatrix::from_rows(&[[0.5, 0.01, 0.0], [0.01, 0.5, 0.01], [0.0, 0.01, 0.5]]);
        let b = DenseMatrix::from_rows(&[[1.0, 0.1], [0.0, 0.1], [0.0, 0.1]]);
        Self::new(
            a,
            b,
            DenseMatrix::identity(3),
            DenseMatrix::identity(2),
            DenseMatrix::identity(3).scale(psi_scale),
            sigma,
        )
    }

    pub fn preset(name: &str, psi_scale: f64, sigma: f64) -> Result<Self> {
        match name {
            "paper-lqr-3x2" => Self::benchmark_3x2(psi_scale, sigma),
            other => Err(Error::Config(format!("unknown LQR preset `{other}`"))),
        }
    }
}

/// Upper-triangular row-major scan with off-diagonal entries scaled by √2.
pub fn svec(m: &DenseMatrix) -> Result<Vec<f64>> {
    if !m.is_square() || !m.is_symmetric(1e-10) {
        return Err(Error::Contract("svec needs a symmetric matrix".into()));
    }
    let n = m.rows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        out.push(m[(i, i)]);
        for j in i + 1..n {
            out.push(std::f64::consts::SQRT_2 * m[(i, j)]);
        }
    }
    Ok(out)
}

/// Inverse of [`svec`].
pub fn smat(v: &[f64], n: usize) -> DenseMatrix {
    assert_eq!(v.len(), n * (n + 1) / 2, "svec length mismatch");
    let mut m = DenseMatrix::zeros(n, n);
    let mut idx = 0;
    for i in 0..n {
        m[(i, i)] = v[idx];
        idx += 1;
        for j in i + 1..n {
            let x = v[idx] / std::f64::consts::SQRT_2;
            m[(i, j)] = x;
            m[(j, i)] = x;
            idx += 1;
        }
    }
    m
}

fn stack(x: &[f64], u: &[f64]) -> Vec<f64> {
    x.iter().chain(u).copied().collect()
}

/// `svec(zzᵀ)` for `z = [x; u]`.
pub fn phi_feature(x: &[f64], u: &[f64]) -> Vec<f64> {
    let z = stack(x, u);
    svec(&DenseMatrix::outer(&z, &z)).expect("outer product is symmetric")
}

fn quad_form(m: &DenseMatrix, z: &[f64]) -> f64 {
    crate::numerics::dot(z, &m.matvec(z))
}

/// One environment interaction: `u = −Kx + σ·n₁`, stage cost, and
/// `x' = Ax + Bu + Ψ^{1/2}·n₂`. Control noise is drawn before state noise.
pub fn env_step(
    system: &LqrSystem,
    x: &[f64],
    k: &DenseMatrix,
    rng: &mut SeededRng,
) -> (Vec<f64>, f64, Vec<f64>) {
    let (d1, d2) = system.dims();
    let mut u = k.matvec(x);
    for ui in u.iter_mut() {
        *ui = -*ui + system.sigma * rng.standard_normal();
    }
    let cost = quad_form(&system.q, x) + quad_form(&system.r, &u);
    let mut next = system.a.matvec(x);
    crate::numerics::axpy(1.0, &system.b.matvec(&u), &mut next);
    let noise = system.psi_factor.matvec(&rng.normal_vec(d1));
    crate::numerics::axpy(1.0, &noise, &mut next);
    debug_assert_eq!(u.len(), d2);
    (u, cost, next)
}

/// Solves `P = W + MᵀPM` by fixed-point iteration from `P = W`.
pub fn lyapunov_solve(m: &DenseMatrix, w: &DenseMatrix) -> Result<DenseMatrix> {
    if !stability_test(m) {
        return Err(Error::Unstable);
    }
    let mt = m.transpose();
    let mut p = w.clone();
    for _ in 0..MAX_FIXED_POINT_ITERS {
        let next = w.add(&mt.matmul(&p).matmul(m)).sym_part();
        let delta = next.sub(&p).frobenius_norm();
        p = next;
        if !p.is_finite() {
            return Err(Error::Unstable);
        }
        if delta <= LYAPUNOV_TOL * (1.0 + p.frobenius_norm()) {
            return Ok(p);
        }
    }
    Err(Error::NonConvergence {
        what: "lyapunov fixed point",
        iterations: MAX_FIXED_POINT_ITERS,
    })
}

/// `P_K = Q + KᵀRK + (A−BK)ᵀP_K(A−BK)`
pub fn value_matrix(system: &LqrSystem, k: &DenseMatrix) -> Result<DenseMatrix> {
    let w = system.q.add(&k.transpose().matmul(&system.r).matmul(k));
    lyapunov_solve(&system.closed_loop(k), &w)
}

/// `J(K) = tr(P_KΨ_σ) + σ²tr(R)`
pub fn cost_j(system: &LqrSystem, k: &DenseMatrix) -> Result<f64> {
    let p = value_matrix(system, k)?;
    Ok(p.matmul(&system.psi_sigma()).trace() + system.sigma * system.sigma * system.r.trace())
}

fn gain_error(system: &LqrSystem, k: &DenseMatrix, p: &DenseMatrix) -> DenseMatrix {
    let bt = system.b.transpose();
    let rb = system.r.add(&bt.matmul(p).matmul(&system.b));
    rb.matmul(k).sub(&bt.matmul(p).matmul(&system.a))
}

/// `2(R + BᵀP_KB)K − 2BᵀP_KA`
pub fn natural_gradient_exact(system: &LqrSystem, k: &DenseMatrix) -> Result<DenseMatrix> {
    let p = value_matrix(system, k)?;
    Ok(gain_error(system, k, &p).scale(2.0))
}

/// Stationary state covariance `Σ = Ψ_σ + (A−BK)Σ(A−BK)ᵀ`.
pub fn sigma_k(system: &LqrSystem, k: &DenseMatrix) -> Result<DenseMatrix> {
    lyapunov_solve(&system.closed_loop(k).transpose(), &system.psi_sigma())
}

/// True gradient `∇J(K) = 2E_KΣ_K`.
pub fn gradient_exact(system: &LqrSystem, k: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(natural_gradient_exact(system, k)?.matmul(&sigma_k(system, k)?))
}

/// `Ω_K` assembled from `P_K`.
pub fn omega_exact(system: &LqrSystem, k: &DenseMatrix) -> Result<DenseMatrix> {
    let p = value_matrix(system, k)?;
    Ok(omega_from_value(system, &p))
}

fn omega_from_value(system: &LqrSystem, p: &DenseMatrix) -> DenseMatrix {
    let (d1, d2) = system.dims();
    let (a, b) = (&system.a, &system.b);
    let mut omega = DenseMatrix::zeros(d1 + d2, d1 + d2);
    let atp = a.transpose().matmul(p);
    let btp = b.transpose().matmul(p);
    omega.set_block(0, 0, &system.q.add(&atp.matmul(a)));
    omega.set_block(0, d1, &atp.matmul(b));
    omega.set_block(d1, 0, &btp.matmul(a));
    omega.set_block(d1, d1, &system.r.add(&btp.matmul(b)));
    omega.sym_part()
}

/// Riccati fixed point `(P*, K*)`.
pub fn dare_solve(system: &LqrSystem) -> Result<(DenseMatrix, DenseMatrix)> {
    let (a, b) = (&system.a, &system.b);
    let (at, bt) = (a.transpose(), b.transpose());
    let mut p = system.q.clone();
    for _ in 0..MAX_FIXED_POINT_ITERS {
        let rb = system.r.add(&bt.matmul(&p).matmul(b));
        let k = rb.solve_matrix(&bt.matmul(&p).matmul(a))?;
        let next = system
            .q
            .add(&at.matmul(&p).matmul(a))
            .sub(&at.matmul(&p).matmul(b).matmul(&k))
            .sym_part();
        let delta = next.sub(&p).frobenius_norm();
        p = next;
        if !p.is_finite() {
            return Err(Error::NonConvergence {
                what: "riccati iteration",
                iterations: 0,
            });
        }
        if delta <= LYAPUNOV_TOL * (1.0 + p.frobenius_norm()) {
            let rb = system.r.add(&bt.matmul(&p).matmul(b));
            let k = rb.solve_matrix(&bt.matmul(&p).matmul(a))?;
            return Ok((p, k));
        }
    }
    Err(Error::NonConvergence {
        what: "riccati iteration",
        iterations: MAX_FIXED_POINT_ITERS,
    })
}

/// How the Ω̂ tracking residual is formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CriticRule {
    /// `gΩ ← (1−λ)gΩ − λ·zzᵀ(zᵀΩ̂z + Ĵ − c)`, as listed.
    Literal,
    /// `gΩ ← (1−λ)gΩ + λ·zzᵀ(zᵀΩ̂z − z'ᵀΩ̂z' + Ĵ − c)`: the sample of the
    /// critic's temporal-difference operator, whose root is `(J(K), Ω_K)`.
    TemporalDifference,
}

impl CriticRule {
    pub fn name(self) -> &'static str {
        match self {
            CriticRule::Literal => "literal",
            CriticRule::TemporalDifference => "td",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "literal" => Ok(CriticRule::Literal),
            "td" => Ok(CriticRule::TemporalDifference),
            other => Err(Error::Config(format!("unknown critic rule `{other}`"))),
        }
    }
}

/// One stored interaction `(x, u, c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Interaction {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActorCriticState {
    pub k: u64,
    pub gain: DenseMatrix,
    pub j_hat: f64,
    pub omega_hat: DenseMatrix,
    pub f: DenseMatrix,
    pub g_j: f64,
    pub g_omega: DenseMatrix,
    /// Pending transition `(x_k, u_k, c_k)`.
    pub last: Interaction,
    /// `x_{k+1}`
    pub x: Vec<f64>,
}

impl ActorCriticState {
    /// Zero critic and trackers, `x₀ ∼ N(0, I)`, and the first interaction
    /// taken under `gain`.
    pub fn start(system: &LqrSystem, gain: DenseMatrix, rng: &mut SeededRng) -> Self {
        let (d1, d2) = system.dims();
        let x0 = rng.normal_vec(d1);
        let (u0, c0, x1) = env_step(system, &x0, &gain, rng);
        Self {
            k: 0,
            gain,
            j_hat: 0.0,
            omega_hat: DenseMatrix::zeros(d1 + d2, d1 + d2),
            f: DenseMatrix::zeros(d2, d1),
            g_j: 0.0,
            g_omega: DenseMatrix::zeros(d1 + d2, d1 + d2),
            last: Interaction { x: x0, u: u0, cost: c0 },
            x: x1,
        }
    }

    fn is_finite(&self) -> bool {
        self.gain.is_finite()
            && self.j_hat.is_finite()
            && self.omega_hat.is_finite()
            && self.f.is_finite()
            && self.g_j.is_finite()
            && self.g_omega.is_finite()
            && self.x.iter().all(|v| v.is_finite())
    }
}

/// Sampled actor direction `Ω̂²²K − Ω̂²¹`.
fn actor_direction(omega_hat: &DenseMatrix, gain: &DenseMatrix, d1: usize, d2: usize) -> DenseMatrix {
    let o22 = omega_hat.block(d1, d1, d2, d2);
    let o21 = omega_hat.block(d1, 0, d2, d1);
    o22.matmul(gain).sub(&o21)
}

/// Critic residual sample for Ω̂ in matrix form.
fn critic_sample(
    rule: CriticRule,
    omega_hat: &DenseMatrix,
    j_hat: f64,
    last: &Interaction,
    next: &[f64],
) -> DenseMatrix {
    let z = stack(&last.x, &last.u);
    let zz = DenseMatrix::outer(&z, &z);
    match rule {
        CriticRule::Literal => zz.scale(-(quad_form(omega_hat, &z) + j_hat - last.cost)),
        CriticRule::TemporalDifference => {
            zz.scale(quad_form(omega_hat, &z) - quad_form(omega_hat, next) + j_hat - last.cost)
        }
    }
}

/// One iteration of the averaged actor-critic: draw `u_{k+1}` and
/// `x_{k+2}` under the pre-update gain, update from the pending
/// transition, then shift it.
pub fn alg2_step(
    state: &mut ActorCriticState,
    system: &LqrSystem,
    schedule: &StepSchedule,
    rule: CriticRule,
    rng: &mut SeededRng,
) -> Result<()> {
    let (d1, d2) = system.dims();
    let s = schedule.steps(state.k);
    let (u_next, c_next, x_after) = env_step(system, &state.x, &state.gain, rng);
    let z_next = stack(&state.x, &u_next);

    let dir = actor_direction(&state.omega_hat, &state.gain, d1, d2);
    let gj_sample = state.j_hat - state.last.cost;
    let go_sample = critic_sample(rule, &state.omega_hat, state.j_hat, &state.last, &z_next);

    state.gain.add_scaled(-s.alpha, &state.f);
    state.j_hat -= s.beta * state.g_j;
    state.omega_hat.add_scaled(-s.beta, &state.g_omega);
    state.f = state.f.scale(1.0 - s.lambda).add(&dir.scale(s.lambda));
    state.g_j = (1.0 - s.lambda) * state.g_j + s.lambda * gj_sample;
    state.g_omega = state.g_omega.scale(1.0 - s.lambda).add(&go_sample.scale(s.lambda));

    advance(state, u_next, c_next, x_after)
}

/// Un-averaged counterpart: raw samples drive every variable directly.
pub fn standard_ac_step(
    state: &mut ActorCriticState,
    system: &LqrSystem,
    schedule: &StepSchedule,
    rule: CriticRule,
    rng: &mut SeededRng,
) -> Result<()> {
    let (d1, d2) = system.dims();
    let s = schedule.steps(state.k);
    let (u_next, c_next, x_after) = env_step(system, &state.x, &state.gain, rng);
    let z_next = stack(&state.x, &u_next);

    let dir = actor_direction(&state.omega_hat, &state.gain, d1, d2);
    let gj_sample = state.j_hat - state.last.cost;
    let go_sample = critic_sample(rule, &state.omega_hat, state.j_hat, &state.last, &z_next);

    state.gain.add_scaled(-s.alpha, &dir);
    state.j_hat -= s.beta * gj_sample;
    state.omega_hat.add_scaled(-s.beta, &go_sample);
    state.f = dir;
    state.g_j = gj_sample;
    state.g_omega = go_sample;

    advance(state, u_next, c_next, x_after)
}

fn advance(state: &mut ActorCriticState, u_next: Vec<f64>, c_next: f64, x_after: Vec<f64>) -> Result<()> {
    let x_next = std::mem::replace(&mut state.x, x_after);
    state.last = Interaction { x: x_next, u: u_next, cost: c_next };
    state.k += 1;
    if !state.is_finite() {
        return Err(Error::NonFinite {
            k: state.k,
            what: "actor-critic state".into(),
        });
    }
    Ok(())
}

/// Settings of one actor-critic replica.
#[derive(Clone, Debug)]
pub struct ActorCriticSpec {
    pub algorithm: Algorithm,
    pub schedule: StepSchedule,
    pub rule: CriticRule,
    pub n_iters: u64,
    pub seed: u64,
    pub stride: u64,
    pub initial_gain: Option<DenseMatrix>,
}

/// Metric names recorded by [`run_actor_critic`].
pub const LQR_METRICS: [&str; 4] = ["gap", "y", "z", "stable"];

/// Runs one replica and records `J(K_k) − J(K*)`, the critic error `y`,
/// `‖K_k − K*‖²_F` and a stabilizing flag at each stride point. Leaving the
/// stabilizing set ends the trace with a failure flag.
pub fn run_actor_critic(system: &LqrSystem, spec: &ActorCriticSpec) -> Result<Trace> {
    let (d1, d2) = system.dims();
    let (_, k_star) = dare_solve(system)?;
    let j_star = cost_j(system, &k_star)?;
    let gain = spec.initial_gain.clone().unwrap_or_else(|| DenseMatrix::zeros(d2, d1));
    if !system.is_stabilizing(&gain) {
        return Err(Error::Config("initial gain is not stabilizing".into()));
    }
    let mut rng = SeededRng::derive(spec.seed, crate::solver::SAMPLING_STREAM);
    let mut state = ActorCriticState::start(system, gain, &mut rng);
    let mut trace = Trace::new(LQR_METRICS.iter().map(|s| s.to_string()).collect());
    let points: Vec<u64> = crate::solver::record_points(spec.n_iters, spec.stride).collect();
    let mut next_point = points.iter().peekable();
    loop {
        if next_point.peek().copied() == Some(&state.k) {
            next_point.next();
            if !system.is_stabilizing(&state.gain) {
                trace.failure = Some(Failure {
                    k: state.k,
                    message: "controller left the stabilizing set".into(),
                });
                trace.notes.push(format!("unstable at k={}", state.k));
                break;
            }
            let p = value_matrix(system, &state.gain)?;
            let j = p.matmul(&system.psi_sigma()).trace() + system.sigma * system.sigma * system.r.trace();
            let omega = omega_from_value(system, &p);
            let y = (state.j_hat - j).powi(2) + state.omega_hat.sub(&omega).frobenius_norm_sq();
            let z = state.gain.sub(&k_star).frobenius_norm_sq();
            trace.push(state.k, vec![j - j_star, y, z, 1.0]);
        }
        if state.k >= spec.n_iters {
            break;
        }
        let stepped = match spec.algorithm {
            Algorithm::Fast => alg2_step(&mut state, system, &spec.schedule, spec.rule, &mut rng),
            Algorithm::Standard => standard_ac_step(&mut state, system, &spec.schedule, spec.rule, &mut rng),
        };
        if let Err(e) = stepped {
            trace.failure = Some(Failure { k: state.k, message: e.to_string() });
            break;
        }
    }
    Ok(trace)
}

/// Norm of the empirical mean of `M·[J(K); svec(Ω_K)] − c` over `n`
/// transitions of a trajectory started from the stationary law under `K`.
pub fn critic_operator_residual(sys: &LqrSystem, k: &DenseMatrix, n: usize, seed: u64) -> Result<f64> {
    let j = cost_j(sys, k)?;
    let w = svec(&omega_exact(sys, k)?)?;
    let mut rng = SeededRng::new(seed);
    let factor = sigma_k(sys, k)?.psd_factor()?;
    let mut x = factor.matvec(&rng.normal_vec(sys.dims().0));
    let (mut u, mut c, mut next) = env_step(sys, &x, k, &mut rng);
    let mut acc = vec![0.0; 1 + w.len()];
    for _ in 0..n {
        let (u2, c2, next2) = env_step(sys, &next, k, &mut rng);
        let phi = phi_feature(&x, &u);
        let phi2 = phi_feature(&next, &u2);
        let td = dot(&phi, &w) - dot(&phi2, &w);
        acc[0] += (j - c) / n as f64;
        for (a, p) in acc[1..].iter_mut().zip(&phi) {
            *a += p * (j + td - c) / n as f64;
        }
        x = next;
        u = u2;
        c = c2;
        next = next2;
    }
    Ok(crate::numerics::norm_sq(&acc).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::make_polynomial_schedule;

    fn scalar(a: f64, b: f64, psi: f64, sigma: f64) -> LqrSystem {
        let m = |v: f64| DenseMatrix::from_rows(&[[v]]);
        LqrSystem::new(m(a), m(b), m(1.0), m(1.0), m(psi), sigma).unwrap()
    }

    fn random_symmetric(n: usize, rng: &mut SeededRng) -> DenseMatrix {
        DenseMatrix::from_fn(n, n, |_, _| rng.standard_normal()).sym_part()
    }

    #[test]
    fn svec_examples() {
        let m = DenseMatrix::from_rows(&[[1.0, 2.0], [2.0, 3.0]]);
        assert_eq!(svec(&m).unwrap(), vec![1.0, 2.0 * std::f64::consts::SQRT_2, 3.0]);
        assert_eq!(svec(&DenseMatrix::identity(3)).unwrap(), vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
        let asym = DenseMatrix::from_rows(&[[1.0, 2.0], [0.0, 3.0]]);
        assert!(matches!(svec(&asym), Err(Error::Contract(_))));
    }

    #[test]
    fn svec_inner_product_is_trace() {
        let mut rng = SeededRng::new(1);
        for _ in 0..50 {
            let (m, n) = (random_symmetric(4, &mut rng), random_symmetric(4, &mut rng));
            let lhs = dot(&svec(&m).unwrap(), &svec(&n).unwrap());
            assert!((lhs - m.matmul(&n).trace()).abs() < 1e-10);
            assert!(smat(&svec(&m).unwrap(), 4).sub(&m).max_abs() < 1e-15);
        }
    }

    #[test]
    fn feature_examples() {
        assert!(phi_feature(&[0.0, 0.0], &[0.0]).iter().all(|v| *v == 0.0));
        let f = phi_feature(&[2.0], &[3.0]);
        assert_eq!(f, vec![4.0, 6.0 * std::f64::consts::SQRT_2, 9.0]);
        let mut rng = SeededRng::new(2);
        for _ in 0..50 {
            let (x, u) = (rng.normal_vec(3), rng.normal_vec(2));
            let s = random_symmetric(5, &mut rng);
            let z = stack(&x, &u);
            assert!((dot(&phi_feature(&x, &u), &svec(&s).unwrap()) - quad_form(&s, &z)).abs() < 1e-10);
        }
    }

    #[test]
    fn noiseless_origin_is_fixed() {
        let sys = LqrSystem::benchmark_3x2(0.0, 0.0).unwrap();
        let k = DenseMatrix::from_fn(2, 3, |i, j| 0.1 * (i + j) as f64);
        let (u, c, next) = env_step(&sys, &[0.0; 3], &k, &mut SeededRng::new(3));
        assert_eq!((u, c, next), (vec![0.0; 2], 0.0, vec![0.0; 3]));
        let x = [1.0, -2.0, 0.5];
        let (u, _, _) = env_step(&sys, &x, &k, &mut SeededRng::new(3));
        let expected: Vec<f64> = k.matvec(&x).iter().map(|v| -v).collect();
        assert_eq!(u, expected);
    }

    #[test]
    fn transition_noise_covariance_is_psi_sigma() {
        let sys = LqrSystem::benchmark_3x2(0.5, 0.7).unwrap();
        let k = DenseMatrix::from_fn(2, 3, |i, j| 0.05 * (1 + i + j) as f64);
        let x = [0.3, -0.1, 0.2];
        let mean = sys.closed_loop(&k).matvec(&x);
        let n = 100_000;
        let mut rng = SeededRng::new(4);
        let mut cov = DenseMatrix::zeros(3, 3);
        for _ in 0..n {
            let (_, _, next) = env_step(&sys, &x, &k, &mut rng);
            let e = crate::numerics::sub(&next, &mean);
            cov.add_scaled(1.0 / n as f64, &DenseMatrix::outer(&e, &e));
        }
        let target = sys.psi_sigma();
        for i in 0..3 {
            for j in 0..3 {
                // var of a product of two Gaussians bounded by s_ii s_jj + s_ij²
                let sd = ((target[(i, i)] * target[(j, j)] + target[(i, j)].powi(2)) / n as f64).sqrt();
                assert!((cov[(i, j)] - target[(i, j)]).abs() < 5.0 * sd, "{i},{j}");
            }
        }
    }

    #[test]
    fn lyapunov_examples() {
        let w = DenseMatrix::from_rows(&[[2.0, 1.0], [1.0, 3.0]]);
        assert_eq!(lyapunov_solve(&DenseMatrix::zeros(2, 2), &w).unwrap(), w);
        let p = lyapunov_solve(&DenseMatrix::from_rows(&[[0.5]]), &DenseMatrix::identity(1)).unwrap();
        assert!((p[(0, 0)] - 4.0 / 3.0).abs() < 1e-11);
        let sys = LqrSystem::benchmark_3x2(1.0, 0.0).unwrap();
        let p = value_matrix(&sys, &DenseMatrix::zeros(2, 3)).unwrap();
        let residual = p.sub(&sys.q).sub(&sys.a.transpose().matmul(&p).matmul(&sys.a));
        assert!(residual.frobenius_norm() <= 1e-10);
        assert!(matches!(
            lyapunov_solve(&DenseMatrix::identity(2).scale(1.1), &w),
            Err(Error::Unstable)
        ));
    }

    #[test]
    fn zero_noise_has_zero_cost() {
        let sys = LqrSystem::benchmark_3x2(0.0, 0.0).unwrap();
        let k = DenseMatrix::from_fn(2, 3, |_, _| 0.1);
        assert_eq!(cost_j(&sys, &k).unwrap(), 0.0);
    }

    #[test]
    fn optimal_gain_minimizes_cost() {
        let sys = LqrSystem::benchmark_3x2(1.0, 0.5).unwrap();
        let (_, ks) = dare_solve(&sys).unwrap();
        let j_star = cost_j(&sys, &ks).unwrap();
        let mut rng = SeededRng::new(5);
        for _ in 0..50 {
            let eps = DenseMatrix::from_fn(2, 3, |_, _| 0.1 * rng.standard_normal());
            let k = ks.add(&eps);
            if sys.is_stabilizing(&k) {
                assert!(j_star <= cost_j(&sys, &k).unwrap() + 1e-12);
            }
        }
        assert!(natural_gradient_exact(&sys, &ks).unwrap().max_abs() < 1e-8);
    }

    #[test]
    fn cost_at_zero_gain_regression() {
        // tr(P₀) with P₀ = Σ_t (Aᵀ)^t A^t, accumulated independently here
        let sys = LqrSystem::benchmark_3x2(1.0, 0.0).unwrap();
        let mut term = DenseMatrix::identity(3);
        let mut total = 0.0;
        for _ in 0..2000 {
            total += term.trace();
            term = sys.a.transpose().matmul(&term).matmul(&sys.a);
        }
        let j = cost_j(&sys, &DenseMatrix::zeros(2, 3)).unwrap();
        assert!((j - total).abs() < 1e-10);
        assert!((j - 4.001_660_545_550_647).abs() < 1e-9, "{j}");
    }

    #[test]
    fn scalar_natural_gradient_closed_form() {
        // P = (1 + k²)/(1 − (0.5 − k)²); E = (1 + P)k − 0.5P
        let sys = scalar(0.5, 1.0, 1.0, 0.0);
        for k in [0.0, 0.2, 0.7] {
            let p = (1.0 + k * k) / (1.0 - (0.5 - k) * (0.5 - k));
            let expected = 2.0 * ((1.0 + p) * k - 0.5 * p);
            let got = natural_gradient_exact(&sys, &DenseMatrix::from_rows(&[[k]])).unwrap()[(0, 0)];
            assert!((got - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn scalar_riccati_root() {
        // P = 1 + 0.25P − 0.25P²/(1 + P)  ⇔  P² − 0.25P − 1 = 0
        let sys = scalar(0.5, 1.0, 1.0, 0.0);
        let (p, k) = dare_solve(&sys).unwrap();
        let p = p[(0, 0)];
        assert!((p * p - 0.25 * p - 1.0).abs() < 1e-10);
        assert!((p - (0.25 + 4.0625f64.sqrt()) / 2.0).abs() < 1e-10);
        assert!((k[(0, 0)] - 0.5 * p / (1.0 + p)).abs() < 1e-10);
        let a0 = LqrSystem::new(
            DenseMatrix::zeros(2, 2),
            DenseMatrix::identity(2),
            DenseMatrix::identity(2).scale(2.0),
            DenseMatrix::identity(2),
            DenseMatrix::identity(2),
            0.0,
        )
        .unwrap();
        let (p, k) = dare_solve(&a0).unwrap();
        assert!(p.sub(&a0.q).max_abs() < 1e-14 && k.max_abs() < 1e-14);
    }

    #[test]
    fn state_covariance_examples() {
        let sys = LqrSystem::new(
            DenseMatrix::identity(2),
            DenseMatrix::identity(2),
            DenseMatrix::identity(2),
            DenseMatrix::identity(2),
            DenseMatrix::identity(2),
            0.0,
        )
        .unwrap();
        let s = sigma_k(&sys, &DenseMatrix::identity(2)).unwrap();
        assert!(s.sub(&DenseMatrix::identity(2)).max_abs() < 1e-14);
        let one = scalar(0.9, 1.0, 2.0, 0.0);
        let s = sigma_k(&one, &DenseMatrix::from_rows(&[[0.3]])).unwrap()[(0, 0)];
        assert!((s - 2.0 / (1.0 - 0.36)).abs() < 1e-10);
    }

    #[test]
    fn simulated_state_covariance_matches() {
        let sys = LqrSystem::benchmark_3x2(1.0, 0.5).unwrap();
        let k = DenseMatrix::from_fn(2, 3, |i, j| if i == j { 0.2 } else { 0.0 });
        let target = sigma_k(&sys, &k).unwrap();
        let mut rng = SeededRng::new(6);
        let mut x = vec![0.0; 3];
        for _ in 0..100 {
            x = env_step(&sys, &x, &k, &mut rng).2;
        }
        let n = 200_000;
        let mut cov = DenseMatrix::zeros(3, 3);
        for _ in 0..n {
            cov.add_scaled(1.0 / n as f64, &DenseMatrix::outer(&x, &x));
            x = env_step(&sys, &x, &k, &mut rng).2;
        }
        // closed-loop spectral radius is about 0.5, so correlation inflates
        // the variance by a small factor; tolerance covers it
        let tol = 8.0 * target.max_abs() / (n as f64).sqrt() * 2.0;
        assert!(cov.sub(&target).max_abs() < tol, "{cov:?} vs {target:?}");
    }

    #[test]
    fn gradient_identity_against_finite_differences() {
        let sys = LqrSystem::benchmark_3x2(1.0, 0.5).unwrap();
        let (_, ks) = dare_solve(&sys).unwrap();
        let mut rng = SeededRng::new(7);
        for _ in 0..10 {
            let k = ks.add(&DenseMatrix::from_fn(2, 3, |_, _| 0.2 * rng.standard_normal()));
            let g = gradient_exact(&sys, &k).unwrap();
            let h = 1e-5;
            for i in 0..2 {
                for j in 0..3 {
                    let (mut kp, mut km) = (k.clone(), k.clone());
                    kp[(i, j)] += h;
                    km[(i, j)] -= h;
                    let fd = (cost_j(&sys, &kp).unwrap() - cost_j(&sys, &km).unwrap()) / (2.0 * h);
                    let rel = (g[(i, j)] - fd).abs() / fd.abs().max(1e-6);
                    assert!(rel <= 1e-4, "entry ({i},{j}): {} vs {fd}", g[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn omega_blocks() {
        let sys = LqrSystem::benchmark_3x2(1.0, 0.5).unwrap();
        let k = DenseMatrix::from_fn(2, 3, |i, j| 0.1 * (i as f64 - j as f64));
        let om = omega_exact(&sys, &k).unwrap();
        assert!(om.block(3, 0, 2, 3).sub(&om.block(0, 3, 3, 2).transpose()).max_abs() == 0.0);
        let ng = natural_gradient_exact(&sys, &k).unwrap();
        let via_omega = actor_direction(&om, &k, 3, 2).scale(2.0);
        assert!(ng.sub(&via_omega).max_abs() < 1e-12);
    }

    #[test]
    fn critic_operator_root_is_exact_value() {
        let sys = LqrSystem::benchmark_3x2(1.0, 0.5).unwrap();
        let k = DenseMatrix::from_fn(2, 3, |i, j| if i == j { 0.2 } else { 0.0 });
        let r = critic_operator_residual(&sys, &k, 100_000, 8).unwrap();
        assert!(r < 0.5, "{r}");
    }

    #[test]
    fn zero_trackers_leave_iterates_unchanged() {
        let sys = LqrSystem::benchmark_3x2(1.0, 0.5).unwrap();
        let sched = make_polynomial_schedule(1.0, 0.1, 0.5, 10.0).unwrap();
        let mut rng = SeededRng::new(9);
        let mut st = ActorCriticState::start(&sys, DenseMatrix::zeros(2, 3), &mut rng);
        st.omega_hat = random_symmetric(5, &mut rng);
        st.j_hat = 1.5;
        let before = st.clone();
        alg2_step(&mut st, &sys, &sched, CriticRule::Literal, &mut rng).unwrap();
        assert_eq!(st.gain, before.gain);
        assert_eq!(st.j_hat, before.j_hat);
        assert_eq!(st.omega_hat, before.omega_hat);
    }

    #[test]
    fn full_replacement_sets_actor_tracker() {
        let sys = LqrSystem::benchmark_3x2(1.0, 0.5).unwrap();
        let sched = StepSchedule::custom("one", |_| 1.0, |_| 0.1, |_| 0.5);
        let mut rng = SeededRng::new(10);
        let mut st = ActorCriticState::start(&sys, DenseMatrix::from_fn(2, 3, |_, _| 0.05), &mut rng);
        st.omega_hat = random_symmetric(5, &mut rng);
        let expected = actor_direction(&st.omega_hat, &st.gain, 3, 2);
        alg2_step(&mut st, &sys, &sched, CriticRule::TemporalDifference, &mut rng).unwrap();
        assert_eq!(st.f, expected);
    }

    /// Straight-line transcription of one listed iteration.
    #[test]
    fn single_step_matches_transcription() {
        let sys = LqrSystem::benchmark_3x2(1.0, 0.5).unwrap();
        let sched = make_polynomial_schedule(1.0, 0.1, 0.5, 10.0).unwrap();
        let mut rng = SeededRng::new(11);
        let mut st = ActorCriticState::start(&sys, DenseMatrix::from_fn(2, 3, |i, j| 0.01 * (i + 2 * j) as f64), &mut rng);
        st.f = DenseMatrix::from_fn(2, 3, |_, _| rng.standard_normal());
        st.g_j = 0.7;
        st.g_omega = random_symmetric(5, &mut rng);
        st.omega_hat = random_symmetric(5, &mut rng);
        st.j_hat = 0.3;
        let mut ref_rng = rng.clone();
        let s0 = st.clone();
        alg2_step(&mut st, &sys, &sched, CriticRule::Literal, &mut rng).unwrap();

        let (lam, al, be) = (1.0 / 11.0, 0.1 / 11.0, 0.5 / 11.0);
        let mut u1 = vec![0.0; 2];
        for i in 0..2 {
            let mut acc = 0.0;
            for j in 0..3 {
                acc += s0.gain[(i, j)] * s0.x[j];
            }
            u1[i] = -acc + 0.5 * ref_rng.standard_normal();
        }
        let mut k1 = s0.gain.clone();
        for i in 0..2 {
            for j in 0..3 {
                k1[(i, j)] -= al * s0.f[(i, j)];
            }
        }
        let j1 = s0.j_hat - be * s0.g_j;
        let mut z = s0.last.x.clone();
        z.extend(&s0.last.u);
        let c = s0.last.cost;
        let mut zoz = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                zoz += z[i] * s0.omega_hat[(i, j)] * z[j];
            }
        }
        let mut f1 = DenseMatrix::zeros(2, 3);
        for i in 0..2 {
            for j in 0..3 {
                let mut dir = -s0.omega_hat[(3 + i, j)];
                for l in 0..2 {
                    dir += s0.omega_hat[(3 + i, 3 + l)] * s0.gain[(l, j)];
                }
                f1[(i, j)] = (1.0 - lam) * s0.f[(i, j)] + lam * dir;
            }
        }
        let gj1 = (1.0 - lam) * s0.g_j + lam * (s0.j_hat - c);
        let mut go1 = DenseMatrix::zeros(5, 5);
        let mut om1 = DenseMatrix::zeros(5, 5);
        for i in 0..5 {
            for j in 0..5 {
                om1[(i, j)] = s0.omega_hat[(i, j)] - be * s0.g_omega[(i, j)];
                go1[(i, j)] = (1.0 - lam) * s0.g_omega[(i, j)] - lam * z[i] * z[j] * (zoz + s0.j_hat - c);
            }
        }
        let close = |a: &DenseMatrix, b: &DenseMatrix| a.sub(b).max_abs() < 1e-12;
        assert!(close(&st.gain, &k1));
        assert!((st.j_hat - j1).abs() < 1e-12);
        assert!(close(&st.omega_hat, &om1));
        assert!(close(&st.f, &f1));
        assert!((st.g_j - gj1).abs() < 1e-12);
        assert!(close(&st.g_omega, &go1));
        assert_eq!(st.last.x, s0.x);
        assert!(st.last.u.iter().zip(&u1).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn critic_stays_symmetric() {
        let sys = LqrSystem::benchmark_3x2(1.0, 1.0).unwrap();
        let sched = make_polynomial_schedule(10.0, 0.5, 1.0, 200.0).unwrap();
        let mut rng = SeededRng::new(12);
        let mut st = ActorCriticState::start(&sys, DenseMatrix::zeros(2, 3), &mut rng);
        for _ in 0..2000 {
            alg2_step(&mut st, &sys, &sched, CriticRule::TemporalDifference, &mut rng).unwrap();
            assert_eq!(st.omega_hat, st.omega_hat.transpose());
            assert_eq!(st.g_omega, st.g_omega.transpose());
        }
    }

    #[test]
    fn literal_critic_diverges_and_corrected_one_tracks() {
        let sys = LqrSystem::benchmark_3x2(1.0, 1.0).unwrap();
        // fixed actor isolates the critic
        let sched = StepSchedule::custom("critic", |k| 10.0 / (k as f64 + 201.0), |_| 0.0, |k| 1.0 / (k as f64 + 201.0));
        let k0 = DenseMatrix::zeros(2, 3);
        let target = omega_exact(&sys, &k0).unwrap();
        let j0 = cost_j(&sys, &k0).unwrap();
        let err = |rule| {
            let mut rng = SeededRng::new(13);
            let mut st = ActorCriticState::start(&sys, k0.clone(), &mut rng);
            for _ in 0..20_000 {
                if alg2_step(&mut st, &sys, &sched, rule, &mut rng).is_err() {
                    return f64::INFINITY;
                }
            }
            (st.j_hat - j0).powi(2) + st.omega_hat.sub(&target).frobenius_norm_sq()
        };
        let initial = j0 * j0 + target.frobenius_norm_sq();
        let corrected = err(CriticRule::TemporalDifference);
        let literal = err(CriticRule::Literal);
        assert!(corrected < 0.1 * initial, "{corrected} vs {initial}");
        assert!(!(literal < initial), "{literal}");
    }

    #[test]
    fn run_records_stabilizing_trace() {
        let sys = LqrSystem::benchmark_3x2(1.0, 1.0).unwrap();
        let spec = ActorCriticSpec {
            algorithm: Algorithm::Fast,
            schedule: make_polynomial_schedule(10.0, 0.5, 1.0, 200.0).unwrap(),
            rule: CriticRule::TemporalDifference,
            n_iters: 2000,
            seed: 3,
            stride: 500,
            initial_gain: None,
        };
        let t = run_actor_critic(&sys, &spec).unwrap();
        assert!(t.failure.is_none());
        assert_eq!(t.records.len(), 5);
        assert!(t.series("stable").unwrap().iter().all(|(_, v)| *v == 1.0));
        assert_eq!(t, run_actor_critic(&sys, &spec).unwrap());
    }
}
