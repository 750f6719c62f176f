//! Entropy-regularized tabular MDPs with softmax policies: exact soft values,
//! discounted-visitation sampling, and the policy-gradient / policy-evaluation
//! oracles of the actor-critic formulation. The framework minimizes
//! `h(θ) = −J_τ(π_θ)`.

use crate::error::{Error, Result};
use crate::numerics::{linear_solve, Categorical, DenseMatrix, SeededRng};
use crate::solver::{StructuralConstants, TwoTimeScaleProblem};

const SOFT_VI_TOL: f64 = 1e-12;
const SOFT_VI_MAX_ITERS: usize = 1_000_000;

#[derive(Clone, Debug)]
pub struct RegMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `p[s * n_actions + a][s']`
    pub p: DenseMatrix,
    /// `reward[(s, a)]` in `[0, 1]`
    pub reward: DenseMatrix,
    pub gamma: f64,
    pub tau: f64,
    pub rho0: Vec<f64>,
    next_samplers: Vec<Categorical>,
    start_sampler: Categorical,
}

impl RegMdp {
    pub fn new(
        p: DenseMatrix,
        reward: DenseMatrix,
        gamma: f64,
        tau: f64,
        rho0: Vec<f64>,
    ) -> Result<Self> {
        let (ns, na) = (reward.rows(), reward.cols());
        if p.rows() != ns * na || p.cols() != ns || rho0.len() != ns {
            return Err(Error::Contract("transition tensor or rho0 has wrong shape".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Config(format!("gamma must be in [0,1), got {gamma}")));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Config(format!("tau must be positive, got {tau}")));
        }
        if reward.as_slice().iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Contract("rewards must lie in [0,1]".into()));
        }
        if rho0.iter().any(|x| *x <= 0.0) {
            return Err(Error::Contract("rho0 must have full support".into()));
        }
        let next_samplers = (0..ns * na)
            .map(|i| {
                let row = p.row(i);
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(Error::Contract(format!("transition row {i} is not a distribution")));
                }
                Categorical::new(row)
            })
            .collect::<Result<Vec<_>>>()?;
        let start_sampler = Categorical::new(&rho0)?;
        Ok(Self {
            n_states: ns,
            n_actions: na,
            p,
            reward,
            gamma,
            tau,
            rho0,
            next_samplers,
            start_sampler,
        })
    }

    /// Random instance: `P(·|s,a)` uniform draws normalized, rewards
    /// `Unif(0,1)`, uniform `ρ0`.
    pub fn random(n_states: usize, n_actions: usize, gamma: f64, tau: f64, seed: u64) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Config("need at least one state and one action".into()));
        }
        let mut rng = SeededRng::derive(seed, 0x5E6);
        let mut p = DenseMatrix::from_fn(n_states * n_actions, n_states, |_, _| rng.uniform_open_low());
        for i in 0..p.rows() {
            let row = p.row_mut(i);
            let z: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= z);
        }
        let reward = DenseMatrix::from_fn(n_states, n_actions, |_, _| rng.uniform());
        let rho0 = vec![1.0 / n_states as f64; n_states];
        Self::new(p, reward, gamma, tau, rho0)
    }

    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.p[(s * self.n_actions + a, next)]
    }

    pub fn theta_dim(&self) -> usize {
        self.n_states * self.n_actions
    }

    /// `P_π(s, s')`
    pub fn policy_transition(&self, policy: &DenseMatrix) -> DenseMatrix {
        let n = self.n_states;
        DenseMatrix::from_fn(n, n, |s, t| {
            (0..self.n_actions).map(|a| policy[(s, a)] * self.prob(s, a, t)).sum()
        })
    }

    /// `r̃_π(s) = Σ_a π(a|s)(r(s,a) − τ ln π(a|s))`
    pub fn regularized_reward(&self, policy: &DenseMatrix) -> Vec<f64> {
        (0..self.n_states)
            .map(|s| {
                (0..self.n_actions)
                    .map(|a| {
                        let pi = policy[(s, a)];
                        pi * (self.reward[(s, a)] - self.tau * pi.ln())
                    })
                    .sum()
            })
            .collect()
    }

    /// Solves `(I − γP_π)V = r̃_π`.
    pub fn exact_value(&self, policy: &DenseMatrix) -> Result<Vec<f64>> {
        let m = DenseMatrix::identity(self.n_states).sub(&self.policy_transition(policy).scale(self.gamma));
        linear_solve(&m, &self.regularized_reward(policy))
    }

    /// `J_τ(θ) = ρ0ᵀV^{π_θ}`
    pub fn exact_j(&self, theta: &[f64]) -> Result<f64> {
        let v = self.exact_value(&self.policy(theta))?;
        Ok(crate::numerics::dot(&self.rho0, &v))
    }

    pub fn policy(&self, theta: &[f64]) -> DenseMatrix {
        softmax_policy(&DenseMatrix::from_vec(self.n_states, self.n_actions, theta.to_vec()).expect("theta has S*A entries"))
    }

    /// `d(s) = (1−γ)[ρ0ᵀ(I − γP_π)^{-1}](s)`
    pub fn exact_visitation(&self, policy: &DenseMatrix) -> Result<Vec<f64>> {
        let m = DenseMatrix::identity(self.n_states).sub(&self.policy_transition(policy).scale(self.gamma));
        let mut d = linear_solve(&m.transpose(), &self.rho0)?;
        d.iter_mut().for_each(|x| *x *= 1.0 - self.gamma);
        Ok(d)
    }

    /// `s ∼ d_ρ^π` by a rollout from `ρ0` stopped with probability `1−γ`
    /// before each move, then `a ∼ π(·|s)` and `s' ∼ P(·|s,a)`.
    pub fn sample_visitation(&self, policy: &DenseMatrix, rng: &mut SeededRng) -> (usize, usize, usize) {
        let mut s = self.start_sampler.sample(rng);
        let draw_action = |s: usize, rng: &mut SeededRng| {
            crate::numerics::categorical_sample(policy.row(s), rng).expect("policy rows are distributions")
        };
        while rng.uniform() < self.gamma {
            let a = draw_action(s, rng);
            s = self.next_samplers[s * self.n_actions + a].sample(rng);
        }
        let a = draw_action(s, rng);
        let next = self.next_samplers[s * self.n_actions + a].sample(rng);
        (s, a, next)
    }

    fn td_term(&self, policy: &DenseMatrix, omega: &[f64], s: usize, a: usize, next: usize) -> f64 {
        self.reward[(s, a)] - self.tau * policy[(s, a)].ln() + self.gamma * omega[next] - omega[s]
    }

    /// `−(1/(1−γ))·δ·∇_θ ln π_θ(a|s)`, flattened row-major.
    pub fn sample_f(&self, policy: &DenseMatrix, omega: &[f64], t: (usize, usize, usize), out: &mut [f64]) {
        let (s, a, next) = t;
        out.iter_mut().for_each(|x| *x = 0.0);
        let scale = -self.td_term(policy, omega, s, a, next) / (1.0 - self.gamma);
        let row = &mut out[s * self.n_actions..(s + 1) * self.n_actions];
        for (b, o) in row.iter_mut().enumerate() {
            let indicator = if b == a { 1.0 } else { 0.0 };
            *o = scale * (indicator - policy[(s, b)]);
        }
    }

    /// `(ω(s) − r(s,a) + τ ln π(a|s) − γω(s'))·e_s`
    pub fn sample_g(&self, policy: &DenseMatrix, omega: &[f64], t: (usize, usize, usize), out: &mut [f64]) {
        let (s, a, next) = t;
        out.iter_mut().for_each(|x| *x = 0.0);
        out[s] = -self.td_term(policy, omega, s, a, next);
    }

    /// Exact means of the two samples under `d_ρ^π·π·P`.
    pub fn mean_samples(&self, theta: &[f64], omega: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let policy = self.policy(theta);
        let d = self.exact_visitation(&policy)?;
        let (ns, na) = (self.n_states, self.n_actions);
        let mut f = vec![0.0; ns * na];
        let mut g = vec![0.0; ns];
        for s in 0..ns {
            // expected δ given (s, a)
            let q: Vec<f64> = (0..na)
                .map(|a| {
                    let next: f64 = (0..ns).map(|t| self.prob(s, a, t) * omega[t]).sum();
                    self.reward[(s, a)] - self.tau * policy[(s, a)].ln() + self.gamma * next - omega[s]
                })
                .collect();
            let mean_q: f64 = (0..na).map(|a| policy[(s, a)] * q[a]).sum();
            for b in 0..na {
                // Σ_a π_a q_a (1[a=b] − π_b) = π_b (q_b − E_π q)
                f[s * na + b] = -d[s] * policy[(s, b)] * (q[b] - mean_q) / (1.0 - self.gamma);
            }
            g[s] = -d[s] * mean_q;
        }
        Ok((f, g))
    }

    /// Exact `∇_θ J_τ`.
    pub fn exact_gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let v = self.exact_value(&self.policy(theta))?;
        let (f, _) = self.mean_samples(theta, &v)?;
        Ok(f.into_iter().map(|x| -x).collect())
    }

    /// Jacobian of the mean G in ω: `D_d(I − γP_π)`.
    pub fn g_jacobian(&self, theta: &[f64]) -> Result<DenseMatrix> {
        let policy = self.policy(theta);
        let d = self.exact_visitation(&policy)?;
        let m = DenseMatrix::identity(self.n_states).sub(&self.policy_transition(&policy).scale(self.gamma));
        Ok(DenseMatrix::from_diag(&d).matmul(&m))
    }

    /// Soft value iteration; returns `(V*, π*, J*)`.
    pub fn soft_optimal(&self) -> Result<(Vec<f64>, DenseMatrix, f64)> {
        let (ns, na) = (self.n_states, self.n_actions);
        let mut v = vec![0.0; ns];
        let soft_q = |v: &[f64]| {
            DenseMatrix::from_fn(ns, na, |s, a| {
                self.reward[(s, a)] + self.gamma * (0..ns).map(|t| self.prob(s, a, t) * v[t]).sum::<f64>()
            })
        };
        for _ in 0..SOFT_VI_MAX_ITERS {
            let q = soft_q(&v);
            let next: Vec<f64> = (0..ns)
                .map(|s| {
                    let row = q.row(s);
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    max + self.tau * row.iter().map(|x| ((x - max) / self.tau).exp()).sum::<f64>().ln()
                })
                .collect();
            let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            if delta <= SOFT_VI_TOL {
                let pi = softmax_policy(&soft_q(&v).scale(1.0 / self.tau));
                let j = crate::numerics::dot(&self.rho0, &v);
                return Ok((v, pi, j));
            }
        }
        Err(Error::NonConvergence {
            what: "soft value iteration",
            iterations: SOFT_VI_MAX_ITERS,
        })
    }
}

/// Rowwise softmax with the row maximum subtracted first.
pub fn softmax_policy(theta: &DenseMatrix) -> DenseMatrix {
    let mut out = theta.clone();
    for s in 0..theta.rows() {
        let row = out.row_mut(s);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.iter_mut().for_each(|x| *x = (*x - max).exp());
        let z: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= z);
    }
    out
}

/// Regularized policy optimization as a two-time-scale problem: θ holds the
/// `S×A` logits, ω the value estimate.
#[derive(Clone, Debug)]
pub struct RegMdpProblem {
    pub mdp: RegMdp,
    j_star: f64,
}

impl RegMdpProblem {
    pub fn new(mdp: RegMdp) -> Result<Self> {
        let (_, _, j_star) = mdp.soft_optimal()?;
        Ok(Self { mdp, j_star })
    }

    pub fn j_star(&self) -> f64 {
        self.j_star
    }

    /// Constants for schedule checking. `μ_G` is the smallest symmetric-part
    /// eigenvalue of the mean-G Jacobian at `theta`; `L` is a rough bound
    /// `(1 + γ)(1 + τ ln A)/(1 − γ)²`. No PL constant is reported.
    pub fn estimated_constants(&self, theta: &[f64]) -> Result<StructuralConstants> {
        let m = &self.mdp;
        let mu_g = m.g_jacobian(theta)?.min_sym_eigenvalue();
        let l = (1.0 + m.gamma) * (1.0 + m.tau * (m.n_actions as f64).ln()) / (1.0 - m.gamma).powi(2);
        let b = (1.0 + m.tau * (m.n_actions as f64).ln()) / (1.0 - m.gamma);
        Ok(StructuralConstants::new(l, mu_g, None, 2.0 * b * b))
    }
}

impl TwoTimeScaleProblem for RegMdpProblem {
    fn dim_theta(&self) -> usize {
        self.mdp.theta_dim()
    }

    fn dim_omega(&self) -> usize {
        self.mdp.n_states
    }

    /// One visitation draw shared by both samples.
    fn sample(&self, theta: &[f64], omega: &[f64], rng: &mut SeededRng, f_out: &mut [f64], g_out: &mut [f64]) {
        let policy = self.mdp.policy(theta);
        let t = self.mdp.sample_visitation(&policy, rng);
        self.mdp.sample_f(&policy, omega, t, f_out);
        self.mdp.sample_g(&policy, omega, t, g_out);
    }

    fn mean_operators(&self, theta: &[f64], omega: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        self.mdp.mean_samples(theta, omega).ok()
    }

    fn grad_h(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let g = self.mdp.exact_gradient(theta).ok()?;
        Some(g.into_iter().map(|x| -x).collect())
    }

    fn omega_star(&self, theta: &[f64]) -> Option<Vec<f64>> {
        self.mdp.exact_value(&self.mdp.policy(theta)).ok()
    }

    fn h(&self, theta: &[f64]) -> Option<f64> {
        self.mdp.exact_j(theta).ok().map(|j| -j)
    }

    fn h_star(&self) -> Option<f64> {
        Some(-self.j_star)
    }
}
