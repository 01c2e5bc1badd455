//! Last-step solver: alternating minimization of the one-step Lagrangian.
//!
//! For a fixed joint belief the Lagrangian is convex in the policy once the
//! marginals are treated as free variables, and the alternation between exact
//! marginalization and the softmax policy update descends it monotonically.
//! The energy driving the softmax is the per-cell G value: posterior expected
//! cost plus the multiplier-weighted log-marginal penalties.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::infotheory::{marginalize, pr_mem_obs, step_report, StepReport};
use crate::model::{JointBelief, Marginals, ModelSpec, Multipliers, StepPolicy};
use crate::{Error, Result};

/// Starting point for an alternating solve.
#[derive(Debug, Clone)]
pub enum PolicyInit {
    Uniform,
    /// Independent draws from a flat Dirichlet, seeded for reproducibility.
    RandomDirichlet { seed: u64 },
    Warm(StepPolicy),
}

/// Solver controls shared by the one-step and sequential optimizers.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Threshold applied to both the max-abs policy change and the
    /// Lagrangian change; both must fall below it to stop.
    pub tol: f64,
    pub max_iters: usize,
    pub init: PolicyInit,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-9,
            max_iters: 10_000,
            init: PolicyInit::RandomDirichlet { seed: 0 },
        }
    }
}

impl SolveOptions {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        Ok(())
    }

    pub(crate) fn initial_policy(&self, spec: &ModelSpec) -> Result<StepPolicy> {
        match &self.init {
            PolicyInit::Uniform => Ok(StepPolicy::uniform(spec.num_mem, spec.num_obs)),
            PolicyInit::RandomDirichlet { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok(StepPolicy::random_dirichlet(
                    spec.num_mem,
                    spec.num_obs,
                    &mut rng,
                ))
            }
            PolicyInit::Warm(q) => {
                if q.num_mem() != spec.num_mem || q.num_obs() != spec.num_obs {
                    return Err(Error::DimensionMismatch {
                        context: "warm-start policy".into(),
                        expected: format!("{}x{}x{}", spec.num_mem, spec.num_obs, spec.num_mem),
                        found: format!("{}x{}x{}", q.num_mem(), q.num_obs(), q.num_mem()),
                    });
                }
                Ok(q.clone())
            }
        }
    }
}

/// Result of a last-step solve.
#[derive(Debug, Clone)]
pub struct OneStepSolution {
    pub policy: StepPolicy,
    pub marginals: Marginals,
    pub report: StepReport,
    pub iterations: usize,
    pub converged: bool,
    /// Lagrangian after the initial policy and after every update; adjacent
    /// entries are non-increasing.
    pub cost_history: Vec<f64>,
}

/// G energy of a single (m, w, o, m') cell against the given marginals.
/// Returns `+inf` when a penalized marginal vanishes; a zero multiplier
/// silences its term entirely.
pub fn g_pointwise(
    spec: &ModelSpec,
    marg: &Marginals,
    mult: &Multipliers,
    m_prev: usize,
    w: usize,
    o: usize,
    m_next: usize,
) -> f64 {
    let mut g = spec.cost[[w, m_next]];
    for (gamma_x, margv) in [
        (mult.gamma_c(), marg.joint_free[m_next]),
        (mult.gamma_m(), marg.given_obs[[o, m_next]]),
        (mult.gamma_s(), marg.given_mem[[m_prev, m_next]]),
    ] {
        if gamma_x > 0.0 {
            if margv > 0.0 {
                g -= gamma_x * margv.ln();
            } else {
                return f64::INFINITY;
            }
        }
    }
    g
}

/// G energy averaged over the world posterior given (m_prev, o).
pub fn g_expect_world(
    theta: &JointBelief,
    spec: &ModelSpec,
    marg: &Marginals,
    mult: &Multipliers,
    m_prev: usize,
    o: usize,
    m_next: usize,
) -> Result<f64> {
    let mut total = 0.0;
    let mut g = 0.0;
    for w in 0..spec.num_world {
        let u = theta.table()[[m_prev, w]] * spec.obs[[w, o]];
        if u > 0.0 {
            total += u;
            g += u * g_pointwise(spec, marg, mult, m_prev, w, o, m_next);
        }
    }
    if total == 0.0 {
        return Err(Error::UndefinedPosterior { m_prev, obs: o });
    }
    Ok(g / total)
}

/// Softmax policy against arbitrary per-(w, m') costs; shared by the plain
/// update and the lookahead update with cost-to-go folded in.
pub(crate) fn softmax_policy(
    theta: &JointBelief,
    spec: &ModelSpec,
    cost: &Array2<f64>,
    marg: &Marginals,
    mult: &Multipliers,
) -> StepPolicy {
    let (nm, nw, no) = (spec.num_mem, spec.num_world, spec.num_obs);
    let gamma = mult.gamma();
    let uniform = 1.0 / nm as f64;
    let mut table = ndarray::Array3::zeros((nm, no, nm));
    let mut dbar = vec![0.0; nm];
    let mut scores = vec![0.0; nm];
    for m in 0..nm {
        for o in 0..no {
            // Posterior-expected cost for each next state.
            let mut mass = 0.0;
            dbar.fill(0.0);
            for w in 0..nw {
                let u = theta.table()[[m, w]] * spec.obs[[w, o]];
                if u == 0.0 {
                    continue;
                }
                mass += u;
                for (acc, &c) in dbar.iter_mut().zip(cost.row(w).iter()) {
                    *acc += u * c;
                }
            }
            let mut slice = table.slice_mut(ndarray::s![m, o, ..]);
            if mass == 0.0 {
                slice.fill(uniform);
                continue;
            }
            // Log-domain softmax of -G/gamma, stabilized by the running max.
            let mut best = f64::NEG_INFINITY;
            for m2 in 0..nm {
                let mut g = dbar[m2] / mass;
                for (gamma_x, margv) in [
                    (mult.gamma_c(), marg.joint_free[m2]),
                    (mult.gamma_m(), marg.given_obs[[o, m2]]),
                    (mult.gamma_s(), marg.given_mem[[m, m2]]),
                ] {
                    if gamma_x > 0.0 {
                        g = if margv > 0.0 {
                            g - gamma_x * margv.ln()
                        } else {
                            f64::INFINITY
                        };
                    }
                }
                let s = -g / gamma;
                scores[m2] = s;
                if s > best {
                    best = s;
                }
            }
            if best == f64::NEG_INFINITY {
                // Every next state penalized to infinity; nothing to prefer.
                slice.fill(uniform);
                continue;
            }
            let mut z = 0.0;
            for m2 in 0..nm {
                let w = (scores[m2] - best).exp();
                scores[m2] = w;
                z += w;
            }
            for (sv, &w) in slice.iter_mut().zip(scores.iter()) {
                *sv = w / z;
            }
        }
    }
    StepPolicy::new(table).expect("softmax slices are normalized by construction")
}

/// One exact minimization of the Lagrangian in the policy with the marginals
/// held fixed: the softmax of the posterior G energies.
pub fn update_policy_eq1(
    theta: &JointBelief,
    spec: &ModelSpec,
    marg: &Marginals,
    mult: &Multipliers,
) -> Result<StepPolicy> {
    mult.require_positive_gamma()?;
    Ok(softmax_policy(theta, spec, &spec.cost, marg, mult))
}

/// The (m, o) cells that actually occur under the belief; convergence is
/// measured on these only.
pub(crate) fn active_cells(theta: &JointBelief, spec: &ModelSpec) -> Vec<(usize, usize)> {
    let pr_mo = pr_mem_obs(theta, spec);
    let mut cells = Vec::new();
    for m in 0..spec.num_mem {
        for o in 0..spec.num_obs {
            if pr_mo[[m, o]] > 0.0 {
                cells.push((m, o));
            }
        }
    }
    cells
}

/// Alternating minimization for the last step: marginalize, update, repeat
/// until both the policy and the Lagrangian stop moving.
pub fn solve_last_step(
    theta: &JointBelief,
    spec: &ModelSpec,
    mult: &Multipliers,
    opts: &SolveOptions,
) -> Result<OneStepSolution> {
    mult.require_positive_gamma()?;
    opts.validate()?;
    let cells = active_cells(theta, spec);
    let mut q = opts.initial_policy(spec)?;
    let mut marg = marginalize(theta, spec, &q);
    let mut report = step_report(theta, spec, &q, &marg, mult);
    let mut history = vec![report.lagrangian];
    let mut iterations = 0;
    let mut converged = false;
    for r in 1..=opts.max_iters {
        let q_next = softmax_policy(theta, spec, &spec.cost, &marg, mult);
        let marg_next = marginalize(theta, spec, &q_next);
        let report_next = step_report(theta, spec, &q_next, &marg_next, mult);
        let dq = q_next.max_abs_diff_on(&q, &cells);
        let dl = (report_next.lagrangian - report.lagrangian).abs();
        history.push(report_next.lagrangian);
        q = q_next;
        marg = marg_next;
        report = report_next;
        iterations = r;
        if dq < opts.tol && dl < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(OneStepSolution {
        policy: q,
        marginals: marg,
        report,
        iterations,
        converged,
        cost_history: history,
    })
}
