//! Closed-form two-time-scale problems with exact ground truth, one per
//! structural regime of the upper-level objective.
//!
//! All three share the same lower level: `ω*(θ) = Wθ + b`,
//! `Ḡ(θ, ω) = C(ω − ω*(θ))` with `C = μ_G·I + skew`, and an upper-level
//! operator `F̄(θ, ω) = ∇h(θ) + D(ω − ω*(θ))` whose coupling `D` biases the
//! gradient whenever ω is off its root. Samples add isotropic Gaussian noise.
//! Spectra and coupling magnitudes are this crate's choices.

use crate::numerics::{DenseMatrix, SeededRng};
use crate::solver::{StructuralConstants, TwoTimeScaleProblem};

/// Upper-level objective `h`.
pub trait Objective: Send + Sync {
    fn value(&self, theta: &[f64]) -> f64;
    fn grad(&self, theta: &[f64]) -> Vec<f64>;
    fn theta_star(&self) -> Option<Vec<f64>>;
    fn h_star(&self) -> f64;
}

/// `h(θ) = ½(θ−θ̄)ᵀQ(θ−θ̄)` with Q symmetric positive definite.
#[derive(Clone, Debug)]
pub struct Quadratic {
    pub q: DenseMatrix,
    pub theta_bar: Vec<f64>,
}

impl Objective for Quadratic {
    fn value(&self, theta: &[f64]) -> f64 {
        let e = crate::numerics::sub(theta, &self.theta_bar);
        0.5 * crate::numerics::dot(&e, &self.q.matvec(&e))
    }

    fn grad(&self, theta: &[f64]) -> Vec<f64> {
        self.q.matvec(&crate::numerics::sub(theta, &self.theta_bar))
    }

    fn theta_star(&self) -> Option<Vec<f64>> {
        Some(self.theta_bar.clone())
    }

    fn h_star(&self) -> f64 {
        0.0
    }
}

/// Rank-deficient least squares `h(θ) = ½‖A(θ−θ̄)‖²`: PL but not strongly
/// convex, with a whole affine set of minimizers.
#[derive(Clone, Debug)]
pub struct LeastSquares {
    pub a: DenseMatrix,
    pub theta_bar: Vec<f64>,
}

impl Objective for LeastSquares {
    fn value(&self, theta: &[f64]) -> f64 {
        let r = self.a.matvec(&crate::numerics::sub(theta, &self.theta_bar));
        0.5 * crate::numerics::norm_sq(&r)
    }

    fn grad(&self, theta: &[f64]) -> Vec<f64> {
        let r = self.a.matvec(&crate::numerics::sub(theta, &self.theta_bar));
        self.a.tr_matvec(&r)
    }

    fn theta_star(&self) -> Option<Vec<f64>> {
        None
    }

    fn h_star(&self) -> f64 {
        0.0
    }
}

/// `h(θ) = Σ (1 − cos θ_i)`: smooth, nonconvex, stationary at multiples of π.
#[derive(Clone, Debug)]
pub struct Cosine;

impl Objective for Cosine {
    fn value(&self, theta: &[f64]) -> f64 {
        theta.iter().map(|t| 1.0 - t.cos()).sum()
    }

    fn grad(&self, theta: &[f64]) -> Vec<f64> {
        theta.iter().map(|t| t.sin()).collect()
    }

    fn theta_star(&self) -> Option<Vec<f64>> {
        None
    }

    fn h_star(&self) -> f64 {
        0.0
    }
}

/// Shared linear lower level and coupling.
#[derive(Clone, Debug)]
pub struct LowerLevel {
    pub w: DenseMatrix,
    pub b: Vec<f64>,
    pub c: DenseMatrix,
    pub coupling: DenseMatrix,
}

impl LowerLevel {
    pub fn omega_star(&self, theta: &[f64]) -> Vec<f64> {
        let mut w = self.w.matvec(theta);
        w.iter_mut().zip(&self.b).for_each(|(a, b)| *a += b);
        w
    }

    fn offset(&self, theta: &[f64], omega: &[f64]) -> Vec<f64> {
        crate::numerics::sub(omega, &self.omega_star(theta))
    }
}

/// Synthetic problem: an objective plus the shared lower level.
#[derive(Clone, Debug)]
pub struct SyntheticProblem<O> {
    pub objective: O,
    pub lower: LowerLevel,
    pub sigma_noise: f64,
    constants: StructuralConstants,
}

pub type QuadraticProblem = SyntheticProblem<Quadratic>;
pub type PlProblem = SyntheticProblem<LeastSquares>;
pub type NonconvexProblem = SyntheticProblem<Cosine>;

impl<O: Objective> SyntheticProblem<O> {
    pub fn constants(&self) -> StructuralConstants {
        self.constants
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.lower.w.cols(), self.lower.w.rows())
    }

    /// `(F̄(θ, ω), Ḡ(θ, ω))` in closed form.
    pub fn means(&self, theta: &[f64], omega: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let off = self.lower.offset(theta, omega);
        let mut f = self.objective.grad(theta);
        let bias = self.lower.coupling.matvec(&off);
        f.iter_mut().zip(&bias).for_each(|(a, b)| *a += b);
        (f, self.lower.c.matvec(&off))
    }
}

impl NonconvexProblem {
    /// Starting point with entries in (0.5, π − 0.5), away from stationary
    /// points; derived from `seed`.
    pub fn initial_theta(&self, seed: u64) -> Vec<f64> {
        let mut rng = SeededRng::derive(seed, 0x6E63);
        (0..self.dims().0)
            .map(|_| 0.5 + (std::f64::consts::PI - 1.0) * rng.uniform())
            .collect()
    }
}

impl<O: Objective> TwoTimeScaleProblem for SyntheticProblem<O> {
    fn dim_theta(&self) -> usize {
        self.dims().0
    }

    fn dim_omega(&self) -> usize {
        self.dims().1
    }

    /// F noise is drawn first, then G noise.
    fn sample(
        &self,
        theta: &[f64],
        omega: &[f64],
        rng: &mut SeededRng,
        f_out: &mut [f64],
        g_out: &mut [f64],
    ) {
        let (f, g) = self.means(theta, omega);
        for (o, m) in f_out.iter_mut().zip(&f) {
            *o = m + self.sigma_noise * rng.standard_normal();
        }
        for (o, m) in g_out.iter_mut().zip(&g) {
            *o = m + self.sigma_noise * rng.standard_normal();
        }
    }

    fn mean_operators(&self, theta: &[f64], omega: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        Some(self.means(theta, omega))
    }

    fn grad_h(&self, theta: &[f64]) -> Option<Vec<f64>> {
        Some(self.objective.grad(theta))
    }

    fn omega_star(&self, theta: &[f64]) -> Option<Vec<f64>> {
        Some(self.lower.omega_star(theta))
    }

    fn theta_star(&self) -> Option<Vec<f64>> {
        self.objective.theta_star()
    }

    fn h(&self, theta: &[f64]) -> Option<f64> {
        Some(self.objective.value(theta))
    }

    fn h_star(&self) -> Option<f64> {
        Some(self.objective.h_star())
    }
}

/// Random orthogonal matrix by Gram–Schmidt on Gaussian columns.
fn random_orthogonal(n: usize, rng: &mut SeededRng) -> DenseMatrix {
    loop {
        let g = DenseMatrix::from_fn(n, n, |_, _| rng.standard_normal());
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut ok = true;
        for j in 0..n {
            let mut v: Vec<f64> = (0..n).map(|i| g[(i, j)]).collect();
            for _ in 0..2 {
                for u in &cols {
                    let p = crate::numerics::dot(&v, u);
                    crate::numerics::axpy(-p, u, &mut v);
                }
            }
            let norm = crate::numerics::norm_sq(&v).sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            cols.push(v);
        }
        if ok {
            return DenseMatrix::from_fn(n, n, |i, j| cols[j][i]);
        }
    }
}

fn spectrum(n: usize, condition_number: f64) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 1.0 + (condition_number - 1.0) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Strong-monotonicity constant of Ḡ and the target spectrum floor.
const MU_G: f64 = 1.0;
const COUPLING_SCALE: f64 = 0.5;

fn make_lower(d: usize, r: usize, rng: &mut SeededRng) -> LowerLevel {
    let sd = COUPLING_SCALE / (d as f64).sqrt();
    let sr = COUPLING_SCALE / (r as f64).sqrt();
    let w = DenseMatrix::from_fn(r, d, |_, _| sd * rng.standard_normal());
    let b = rng.normal_vec(r);
    let m = DenseMatrix::from_fn(r, r, |_, _| sr * rng.standard_normal());
    let skew = m.sub(&m.transpose()).scale(0.5);
    let c = DenseMatrix::identity(r).scale(MU_G).add(&skew);
    let coupling = DenseMatrix::from_fn(d, r, |_, _| sr * rng.standard_normal());
    LowerLevel { w, b, c, coupling }
}

/// Lipschitz and variance constants shared by all three problem types;
/// `upper_theta` bounds the θ-Lipschitz constant of `F̄` and `upper_grad`
/// that of ∇h. Frobenius norms bound the operator norms.
fn constants_for(
    lower: &LowerLevel,
    upper_theta: f64,
    upper_grad: f64,
    mu_h: Option<f64>,
    sigma: f64,
) -> StructuralConstants {
    let (d, r) = (lower.w.cols(), lower.w.rows());
    let l = [
        upper_theta,
        upper_grad,
        lower.coupling.frobenius_norm(),
        lower.c.frobenius_norm(),
        lower.c.matmul(&lower.w).frobenius_norm(),
        lower.w.frobenius_norm(),
    ]
    .into_iter()
    .fold(1.0, f64::max);
    StructuralConstants::new(l, MU_G, mu_h, sigma * sigma * d.max(r) as f64)
}

/// Strongly convex quadratic with `Q` spectrum evenly spaced on
/// `[1, condition_number]`, so `μ_h = 1` and `‖∇²h‖ = condition_number`.
pub fn make_quadratic(
    d: usize,
    r: usize,
    seed: u64,
    condition_number: f64,
    sigma_noise: f64,
) -> QuadraticProblem {
    assert!(d >= 1 && r >= 1 && condition_number >= 1.0);
    let mut rng = SeededRng::derive(seed, 0x5C);
    let u = random_orthogonal(d, &mut rng);
    let q = u
        .matmul(&DenseMatrix::from_diag(&spectrum(d, condition_number)))
        .matmul(&u.transpose())
        .sym_part();
    let theta_bar = rng.normal_vec(d);
    let lower = make_lower(d, r, &mut rng);
    let upper_theta = q.sub(&lower.coupling.matmul(&lower.w)).frobenius_norm();
    let constants = constants_for(&lower, upper_theta, condition_number, Some(1.0), sigma_noise);
    SyntheticProblem {
        objective: Quadratic { q, theta_bar },
        lower,
        sigma_noise,
        constants,
    }
}

/// PL least squares with `A` of rank `d − 1`; the nonzero spectrum of `AᵀA`
/// is evenly spaced on `[1, condition_number]`, so `μ_h = 1`.
pub fn make_pl(d: usize, r: usize, seed: u64, condition_number: f64, sigma_noise: f64) -> PlProblem {
    assert!(d >= 2 && r >= 1 && condition_number >= 1.0);
    let m = d - 1;
    let mut rng = SeededRng::derive(seed, 0x91);
    let u = random_orthogonal(d, &mut rng);
    let s: Vec<f64> = spectrum(m, condition_number).iter().map(|x| x.sqrt()).collect();
    // A = diag(s) Vᵀ with V the first m columns of u
    let a = DenseMatrix::from_fn(m, d, |i, j| s[i] * u[(j, i)]);
    let theta_bar = rng.normal_vec(d);
    let lower = make_lower(d, r, &mut rng);
    let ata = a.transpose().matmul(&a);
    let upper_theta = ata.sub(&lower.coupling.matmul(&lower.w)).frobenius_norm();
    let constants = constants_for(&lower, upper_theta, condition_number, Some(1.0), sigma_noise);
    SyntheticProblem {
        objective: LeastSquares { a, theta_bar },
        lower,
        sigma_noise,
        constants,
    }
}

pub fn make_nonconvex(d: usize, r: usize, seed: u64, sigma_noise: f64) -> NonconvexProblem {
    assert!(d >= 1 && r >= 1);
    let mut rng = SeededRng::derive(seed, 0xC0);
    let lower = make_lower(d, r, &mut rng);
    // ‖diag(cos θ) − DW‖ ≤ 1 + ‖DW‖
    let upper_theta = 1.0 + lower.coupling.matmul(&lower.w).frobenius_norm();
    let constants = constants_for(&lower, upper_theta, 1.0, None, sigma_noise);
    SyntheticProblem {
        objective: Cosine,
        lower,
        sigma_noise,
        constants,
    }
}
