//! Step-size admissibility conditions of the convergence analysis, evaluated
//! numerically. Purely diagnostic: nothing here blocks a run.

use super::{StepSchedule, StructuralConstants};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Regime {
    StronglyConvex,
    Pl,
    Nonconvex,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::StronglyConvex => "strongly_convex",
            Regime::Pl => "pl",
            Regime::Nonconvex => "nonconvex",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "strongly_convex" | "sc" => Some(Regime::StronglyConvex),
            "pl" => Some(Regime::Pl),
            "nonconvex" | "nc" => Some(Regime::Nonconvex),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport {
    pub id: &'static str,
    pub description: &'static str,
    pub satisfied: bool,
    /// Smallest `rhs − lhs` over the horizon (negative when violated).
    pub worst_margin: f64,
    pub worst_k: u64,
}

/// Step sizes at one k plus the constants they imply: `c = step·(k+τ+1)`
/// (τ = 0 outside the polynomial family) and `step₀ = step·√(k+1)`.
struct Point {
    lambda: f64,
    alpha: f64,
    beta: f64,
    c_lambda: f64,
    c_alpha: f64,
    c_beta: f64,
    lambda0: f64,
    alpha0: f64,
    beta0: f64,
}

impl Point {
    fn at(schedule: &StepSchedule, k: u64) -> Self {
        let s = schedule.steps(k);
        let scale = match schedule {
            StepSchedule::Polynomial { tau, .. } => k as f64 + tau + 1.0,
            _ => k as f64 + 1.0,
        };
        let root = (k as f64 + 1.0).sqrt();
        let (c_lambda, c_alpha, c_beta) = match *schedule {
            StepSchedule::Polynomial {
                c_lambda,
                c_alpha,
                c_beta,
                ..
            } => (c_lambda, c_alpha, c_beta),
            _ => (s.lambda * scale, s.alpha * scale, s.beta * scale),
        };
        let (lambda0, alpha0, beta0) = match *schedule {
            StepSchedule::SqrtDecay { alpha0, beta0 } => (0.25, alpha0, beta0),
            _ => (s.lambda * root, s.alpha * root, s.beta * root),
        };
        Self {
            lambda: s.lambda,
            alpha: s.alpha,
            beta: s.beta,
            c_lambda,
            c_alpha,
            c_beta,
            lambda0,
            alpha0,
            beta0,
        }
    }
}

/// Structural constants unpacked; `mu_h` is NaN when the problem has none,
/// which makes every condition that needs it report unsatisfied.
struct K {
    l: f64,
    mg: f64,
    mh: f64,
}

/// `(lhs, rhs)` of an inequality `lhs ≤ rhs`.
type Eval = fn(&K, &Point) -> (f64, f64);

struct Condition {
    id: &'static str,
    description: &'static str,
    eval: Eval,
}

macro_rules! cond {
    ($id:expr, $desc:expr, |$k:ident, $p:ident| $body:expr) => {
        Condition {
            id: $id,
            description: $desc,
            eval: |$k: &K, $p: &Point| $body,
        }
    };
}

fn p4(x: f64) -> f64 {
    x.powi(4)
}

fn p6(x: f64) -> f64 {
    x.powi(6)
}

fn ordering(prefix: &'static str) -> [Condition; 3] {
    let ids: [&'static str; 3] = match prefix {
        "sc" => ["sc.order.alpha_le_beta", "sc.order.beta_le_lambda", "sc.order.lambda_le_quarter"],
        _ => ["pl.order.alpha_le_beta", "pl.order.beta_le_lambda", "pl.order.lambda_le_quarter"],
    };
    [
        cond!(ids[0], "alpha_k <= beta_k", |_k, p| (p.alpha, p.beta)),
        cond!(ids[1], "beta_k <= lambda_k", |_k, p| (p.beta, p.lambda)),
        cond!(ids[2], "lambda_k <= 1/4", |_k, p| (p.lambda, 0.25)),
    ]
}

fn strongly_convex() -> Vec<Condition> {
    let mut v: Vec<Condition> = ordering("sc").into_iter().collect();
    v.extend([
        cond!("sc.c_alpha.ge_8_over_mu_h", "c_alpha >= 8/mu_h", |k, p| (8.0 / k.mh, p.c_alpha)),
        cond!("sc.c_alpha.ge_16_over_mu_h", "c_alpha >= 16/mu_h (used in the rate proof)", |k, p| (
            16.0 / k.mh,
            p.c_alpha
        )),
        cond!("sc.alpha.lambda_over_mu_h", "alpha_k <= lambda_k/mu_h", |k, p| (p.alpha, p.lambda / k.mh)),
        cond!("sc.alpha.mu_h_over_6(L+1)^4", "alpha_k <= mu_h/(6(L+1)^4)", |k, p| (
            p.alpha,
            k.mh / (6.0 * p4(k.l + 1.0))
        )),
        cond!("sc.alpha.8mu_G_over_mu_h_beta", "alpha_k <= (8 mu_G/mu_h) beta_k", |k, p| (
            p.alpha,
            8.0 * k.mg / k.mh * p.beta
        )),
        cond!("sc.alpha.mu_h_mu_G_over_152(L+1)^6_beta", "alpha_k <= mu_h mu_G/(152(L+1)^6) beta_k", |k, p| (
            p.alpha,
            k.mh * k.mg / (152.0 * p6(k.l + 1.0)) * p.beta
        )),
        cond!("sc.alpha.mu_G_beta_over_8(8L^4+9L^2/mu_G)", "alpha_k <= mu_G beta_k/(8(8L^4 + 9L^2/mu_G))", |k, p| (
            p.alpha,
            k.mg * p.beta / (8.0 * (8.0 * p4(k.l) + 9.0 * k.l * k.l / k.mg))
        )),
        cond!("sc.alpha.lambda_over_4(48L^2+10L/mu_G)", "alpha_k <= (lambda_k/4)(48L^2 + 10L/mu_G)^-1", |k, p| (
            p.alpha,
            p.lambda / 4.0 / (48.0 * k.l * k.l + 10.0 * k.l / k.mg)
        )),
        cond!("sc.beta.1_over_240(L+1)^6", "beta_k <= 1/(240(L+1)^6)", |k, p| (
            p.beta,
            1.0 / (240.0 * p6(k.l + 1.0))
        )),
        cond!("sc.beta.1_over_mu_G", "beta_k <= 1/mu_G", |k, p| (p.beta, 1.0 / k.mg)),
        cond!("sc.beta.lambda_over_4(56L^2+9/(2mu_h))", "beta_k <= (lambda_k/4)(56L^2 + 9/(2mu_h))^-1", |k, p| (
            p.beta,
            p.lambda / 4.0 / (56.0 * k.l * k.l + 4.5 / k.mh)
        )),
        cond!("sc.beta.lambda_over_4(48L^2+10L/mu_G)", "beta_k <= (lambda_k/4)(48L^2 + 10L/mu_G)^-1", |k, p| (
            p.beta,
            p.lambda / 4.0 / (48.0 * k.l * k.l + 10.0 * k.l / k.mg)
        )),
        cond!("sc.beta.mu_G_over_168L^4", "beta_k <= mu_G/(168L^4)", |k, p| (p.beta, k.mg / (168.0 * p4(k.l)))),
    ]);
    v
}

fn pl() -> Vec<Condition> {
    let mut v: Vec<Condition> = ordering("pl").into_iter().collect();
    v.extend([
        cond!("pl.c_beta.1_over_L", "c_beta <= 1/L", |k, p| (p.c_beta, 1.0 / k.l)),
        cond!("pl.c_beta.mu_G_over_320L^4_c_lambda", "c_beta <= mu_G/(320L^4) c_lambda", |k, p| (
            p.c_beta,
            k.mg / (320.0 * p4(k.l)) * p.c_lambda
        )),
        cond!("pl.c_beta.mu_h^3_over_480(L+1)^6", "c_beta <= mu_h^3/(480(L+1)^6)", |k, p| (
            p.c_beta,
            k.mh.powi(3) / (480.0 * p6(k.l + 1.0))
        )),
        cond!("pl.c_beta.mu_G_over_8L^2", "c_beta <= mu_G/(8L^2)", |k, p| (p.c_beta, k.mg / (8.0 * k.l * k.l))),
        cond!("pl.beta.lambda_over_4(2L^2/mu_h^3+58L^2)", "beta_k <= (lambda_k/4)(2L^2/mu_h^3 + 58L^2)^-1", |k, p| (
            p.beta,
            p.lambda / 4.0 / (2.0 * k.l * k.l / k.mh.powi(3) + 58.0 * k.l * k.l)
        )),
        cond!("pl.beta.lambda_over_4(50L^2+8/mu_G)", "beta_k <= (lambda_k/4)(50L^2 + 8/mu_G)^-1", |k, p| (
            p.beta,
            p.lambda / 4.0 / (50.0 * k.l * k.l + 8.0 / k.mg)
        )),
        cond!("pl.beta.mu_G_over_320L^4_lambda", "beta_k <= mu_G/(320L^4) lambda_k (used in the rate proof)", |k, p| (
            p.beta,
            k.mg / (320.0 * p4(k.l)) * p.lambda
        )),
        cond!(
            "pl.alpha.mu_G_beta_over_4(14L^3+132(L+1)^6/mu_h^3)",
            "alpha_k <= mu_G beta_k/(4(14L^3 + 132(L+1)^6/mu_h^3))",
            |k, p| (
                p.alpha,
                k.mg * p.beta / (4.0 * (14.0 * k.l.powi(3) + 132.0 * p6(k.l + 1.0) / k.mh.powi(3)))
            )
        ),
        cond!("pl.alpha.mu_h^2_over_3072(L+1)^6_lambda", "alpha_k <= mu_h^2/(3072(L+1)^6) lambda_k", |k, p| (
            p.alpha,
            k.mh * k.mh / (3072.0 * p6(k.l + 1.0)) * p.lambda
        )),
        cond!("pl.c_alpha.ge_2_over_min_mu", "c_alpha >= 2/min{mu_h, mu_G}", |k, p| (
            2.0 / k.mh.min(k.mg),
            p.c_alpha
        )),
    ]);
    v
}

fn nonconvex() -> Vec<Condition> {
    vec![
        cond!("nc.alpha0_le_beta0", "alpha_0 <= beta_0", |_k, p| (p.alpha0, p.beta0)),
        cond!("nc.beta0.1_over_72L", "beta_0 <= 1/(72L)", |k, p| (p.beta0, 1.0 / (72.0 * k.l))),
        cond!("nc.beta0_le_lambda0", "beta_0 <= lambda_0", |_k, p| (p.beta0, p.lambda0)),
        cond!("nc.alpha0.1_over_72L^2", "alpha_0 <= 1/(72L^2)", |k, p| (p.alpha0, 1.0 / (72.0 * k.l * k.l))),
        cond!("nc.proof.beta.lambda_over_4(37L/4+48L^2)", "beta_k <= (lambda_k/4)(37L/4 + 48L^2)^-1", |k, p| (
            p.beta,
            p.lambda / 4.0 / (37.0 * k.l / 4.0 + 48.0 * k.l * k.l)
        )),
        cond!("nc.proof.beta.lambda_over_4(50L^2+8/mu_G)", "beta_k <= (lambda_k/4)(50L^2 + 8/mu_G)^-1", |k, p| (
            p.beta,
            p.lambda / 4.0 / (50.0 * k.l * k.l + 8.0 / k.mg)
        )),
        cond!("nc.proof.alpha.lambda_over_768L^2", "alpha_k <= lambda_k/(768L^2)", |k, p| (
            p.alpha,
            p.lambda / (768.0 * k.l * k.l)
        )),
        cond!("nc.proof.beta.mu_G_over_320L^4_lambda", "beta_k <= mu_G/(320L^4) lambda_k", |k, p| (
            p.beta,
            k.mg / (320.0 * p4(k.l)) * p.lambda
        )),
        cond!("nc.proof.beta.mu_G_over_8L^2", "beta_k <= mu_G/(8L^2)", |k, p| (p.beta, k.mg / (8.0 * k.l * k.l))),
        cond!("nc.proof.alpha.mu_G_over_880L^4_beta", "alpha_k <= mu_G/(880L^4) beta_k", |k, p| (
            p.alpha,
            k.mg / (880.0 * p4(k.l)) * p.beta
        )),
    ]
}

/// Evaluates every inequality of the regime's step-size requirements at each
/// `k` in `0..=horizon` and reports the tightest point of each.
pub fn check_conditions(
    schedule: &StepSchedule,
    constants: &StructuralConstants,
    regime: Regime,
    horizon: u64,
) -> Vec<ConditionReport> {
    let list = match regime {
        Regime::StronglyConvex => strongly_convex(),
        Regime::Pl => pl(),
        Regime::Nonconvex => nonconvex(),
    };
    let kc = K {
        l: constants.lipschitz.max(1.0),
        mg: constants.mu_g,
        mh: constants.mu_h.unwrap_or(f64::NAN),
    };
    let mut reports: Vec<ConditionReport> = list
        .iter()
        .map(|c| ConditionReport {
            id: c.id,
            description: c.description,
            satisfied: true,
            worst_margin: f64::INFINITY,
            worst_k: 0,
        })
        .collect();
    for k in 0..=horizon.max(1) {
        let p = Point::at(schedule, k);
        for (c, r) in list.iter().zip(reports.iter_mut()) {
            let (lhs, rhs) = (c.eval)(&kc, &p);
            let margin = rhs - lhs;
            if !(lhs <= rhs) {
                r.satisfied = false;
            }
            if margin.is_nan() {
                if !r.worst_margin.is_nan() {
                    r.worst_margin = f64::NAN;
                    r.worst_k = k;
                }
            } else if margin < r.worst_margin {
                r.worst_margin = margin;
                r.worst_k = k;
            }
        }
    }
    reports
}
