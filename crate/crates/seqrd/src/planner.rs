//! Sequential planning over a finite horizon.
//!
//! The joint belief over (previous memory, world) is a sufficient state for
//! the whole problem and evolves deterministically under a known policy, so
//! planning alternates exact propagation with per-step policy improvement.
//! Three pieces fit together here:
//!
//! * a forward recursion pushing the joint belief through one step,
//! * a backward recursion producing cost-to-go corrections that fold the
//!   future into a modified per-step cost,
//! * the per-step optimizer and the full planner built on both.
//!
//! The per-step optimizer repeats forward propagation, exact marginals, the
//! backward recursion, and one softmax update of the earliest policy; each
//! round is a minorize-minimize step, so the window cost never increases.
//! The full planner sweeps the steps backwards, trying each step against
//! both the freshly rebuilt suffix and the suffix from the previous round,
//! and keeps whichever scores lower.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::infotheory::{marginalize, step_report, StepReport};
use crate::model::{
    fmt_f64, CostToGoVector, JointBelief, Marginals, ModelSpec, Multipliers, StepPolicy,
};
use crate::onestep::{active_cells, softmax_policy, PolicyInit, SolveOptions};
use crate::{Error, Result};

/// A per-step policy sequence covering a horizon window.
pub type Policy = Vec<StepPolicy>;

/// Everything a planning window produces: per-step beliefs, policies,
/// cost-to-go vectors, reports, and the window-averaged Lagrangian.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Joint beliefs entering each step of the window.
    pub beliefs: Vec<JointBelief>,
    pub policies: Vec<StepPolicy>,
    /// Cost-to-go vectors produced by the backward recursion at each step;
    /// entry `j` is the vector handed to the step before `j`.
    pub nus: Vec<CostToGoVector>,
    pub reports: Vec<StepReport>,
    /// Mean per-step Lagrangian over the window.
    pub total_cost: f64,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.policies.len()
    }

    pub fn avg_distortion(&self) -> f64 {
        self.reports.iter().map(|r| r.distortion).sum::<f64>() / self.reports.len() as f64
    }

    /// Window-averaged information rates, the quantities the capacity
    /// constraints bound.
    pub fn avg_rates(&self) -> (f64, f64, f64) {
        let n = self.reports.len() as f64;
        let mut acc = (0.0, 0.0, 0.0);
        for r in &self.reports {
            acc.0 += r.i_c;
            acc.1 += r.i_m;
            acc.2 += r.i_s;
        }
        (acc.0 / n, acc.1 / n, acc.2 / n)
    }
}

/// Controls for the full planner: the inner per-step solver plus the outer
/// stopping rule on the horizon cost.
#[derive(Debug, Clone)]
pub struct PlanOptions {
    pub inner: SolveOptions,
    /// Stop when the horizon cost changes by less than this between outer
    /// rounds; kept looser than the inner tolerance so inner noise cannot
    /// break outer monotonicity.
    pub outer_tol: f64,
    pub outer_max_iters: usize,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            inner: SolveOptions::default(),
            outer_tol: 1e-7,
            outer_max_iters: 500,
        }
    }
}

impl PlanOptions {
    fn validate(&self) -> Result<()> {
        self.inner.validate()?;
        if !(self.outer_tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "outer_tol must be positive, got {}",
                self.outer_tol
            )));
        }
        if self.outer_max_iters == 0 {
            return Err(Error::InvalidArgument(
                "outer_max_iters must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Result of optimizing the earliest step of a window.
#[derive(Debug, Clone)]
pub struct StepOptimization {
    pub policy: StepPolicy,
    /// Self-consistent window trajectory under the final policy.
    pub trajectory: Trajectory,
    /// Window-averaged Lagrangian; equals `trajectory.total_cost`.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub cost_history: Vec<f64>,
}

/// Result of a full planning run.
#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub trajectory: Trajectory,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Horizon cost after initialization and after each outer round.
    pub cost_history: Vec<f64>,
}

/// Push the joint belief through one step: observe, update memory, advance
/// the world.
pub fn forward_step(theta_t: &JointBelief, spec: &ModelSpec, q_t: &StepPolicy) -> Result<JointBelief> {
    if theta_t.num_mem() != spec.num_mem || theta_t.num_world() != spec.num_world {
        return Err(Error::DimensionMismatch {
            context: "forward_step belief".into(),
            expected: format!("{}x{}", spec.num_mem, spec.num_world),
            found: format!("{}x{}", theta_t.num_mem(), theta_t.num_world()),
        });
    }
    if q_t.num_mem() != spec.num_mem || q_t.num_obs() != spec.num_obs {
        return Err(Error::DimensionMismatch {
            context: "forward_step policy".into(),
            expected: format!("{}x{}x{}", spec.num_mem, spec.num_obs, spec.num_mem),
            found: format!("{}x{}x{}", q_t.num_mem(), q_t.num_obs(), q_t.num_mem()),
        });
    }
    let (nm, nw, no) = (spec.num_mem, spec.num_world, spec.num_obs);
    // Joint over (next memory, current world), then advance the world chain.
    let mut mem_world = Array2::zeros((nm, nw));
    let mut acc = vec![0.0; nm];
    for m in 0..nm {
        for w in 0..nw {
            let tw = theta_t.table()[[m, w]];
            if tw == 0.0 {
                continue;
            }
            acc.fill(0.0);
            for o in 0..no {
                let po = spec.obs[[w, o]];
                if po == 0.0 {
                    continue;
                }
                for (a, &qv) in acc.iter_mut().zip(q_t.slice(m, o).iter()) {
                    *a += po * qv;
                }
            }
            for m2 in 0..nm {
                mem_world[[m2, w]] += tw * acc[m2];
            }
        }
    }
    JointBelief::new(mem_world.dot(&spec.trans))
}

/// Per-step cost with the expected cost-to-go of the next world state
/// folded in.
pub fn modified_cost(spec: &ModelSpec, nu_t: &CostToGoVector) -> Array2<f64> {
    &spec.cost + &spec.trans.dot(&nu_t.table.t())
}

/// Softmax policy update against the cost-to-go-corrected step cost.
pub fn update_policy_eq4(
    theta_t: &JointBelief,
    spec: &ModelSpec,
    marg_t: &Marginals,
    mult: &Multipliers,
    nu_t: &CostToGoVector,
) -> Result<StepPolicy> {
    mult.require_positive_gamma()?;
    Ok(softmax_policy(
        theta_t,
        spec,
        &modified_cost(spec, nu_t),
        marg_t,
        mult,
    ))
}

/// One step of the backward recursion: the cost-to-go vector for the
/// previous step, given this step's policy, marginals, and incoming
/// cost-to-go.
///
/// Each (m, w) cell is the expected corrected G energy under the policy
/// minus the policy's expected entropy bonus; cells the belief never visits
/// are computed by the same formula, which needs no conditioning.
pub fn backward_nu(
    theta_t: &JointBelief,
    spec: &ModelSpec,
    q_t: &StepPolicy,
    marg_t: &Marginals,
    mult: &Multipliers,
    nu_t: &CostToGoVector,
) -> CostToGoVector {
    let _ = theta_t;
    let (nm, nw, no) = (spec.num_mem, spec.num_world, spec.num_obs);
    let dmod = modified_cost(spec, nu_t);
    let gamma = mult.gamma();
    let mut out = Array2::zeros((nm, nw));
    // Per (m, o): the policy's log-marginal penalty expectation minus the
    // entropy bonus; neither depends on the world state.
    let mut pen_h = vec![0.0; no];
    for m in 0..nm {
        for (o, ph) in pen_h.iter_mut().enumerate() {
            let mut pen = 0.0;
            let mut entropy = 0.0;
            for (m2, &qv) in q_t.slice(m, o).iter().enumerate() {
                if qv == 0.0 {
                    continue;
                }
                entropy -= qv * qv.ln();
                for (gamma_x, margv) in [
                    (mult.gamma_c(), marg_t.joint_free[m2]),
                    (mult.gamma_m(), marg_t.given_obs[[o, m2]]),
                    (mult.gamma_s(), marg_t.given_mem[[m, m2]]),
                ] {
                    if gamma_x > 0.0 {
                        pen += if margv > 0.0 {
                            -gamma_x * qv * margv.ln()
                        } else {
                            f64::INFINITY
                        };
                    }
                }
            }
            *ph = pen - gamma * entropy;
        }
        for w in 0..nw {
            let dmod_row = dmod.row(w);
            let mut acc = 0.0;
            for o in 0..no {
                let po = spec.obs[[w, o]];
                if po == 0.0 {
                    continue;
                }
                let mut dpart = 0.0;
                for (&qv, &dv) in q_t.slice(m, o).iter().zip(dmod_row.iter()) {
                    if qv != 0.0 {
                        dpart += qv * dv;
                    }
                }
                acc += po * (dpart + pen_h[o]);
            }
            out[[m, w]] = acc;
        }
    }
    CostToGoVector { table: out }
}

/// Beliefs entering each step of a window, starting from `theta_start`.
fn propagate(
    spec: &ModelSpec,
    theta_start: &JointBelief,
    policies: &[StepPolicy],
) -> Result<Vec<JointBelief>> {
    let mut beliefs = Vec::with_capacity(policies.len());
    beliefs.push(theta_start.clone());
    for q in &policies[..policies.len() - 1] {
        let next = forward_step(beliefs.last().unwrap(), spec, q)?;
        beliefs.push(next);
    }
    Ok(beliefs)
}

/// One exact evaluation sweep over a window: forward beliefs, marginals,
/// reports, and the backward cost-to-go chain for the given policies.
fn sweep_pass(
    spec: &ModelSpec,
    theta_start: &JointBelief,
    policies: &[StepPolicy],
    mult: &Multipliers,
) -> Result<Trajectory> {
    let len = policies.len();
    let beliefs = propagate(spec, theta_start, policies)?;
    let mut margs = Vec::with_capacity(len);
    let mut reports = Vec::with_capacity(len);
    for j in 0..len {
        let marg = marginalize(&beliefs[j], spec, &policies[j]);
        reports.push(step_report(&beliefs[j], spec, &policies[j], &marg, mult));
        margs.push(marg);
    }
    let total_cost = reports.iter().map(|r| r.lagrangian).sum::<f64>() / len as f64;
    let mut nus = vec![CostToGoVector::zeros(spec.num_mem, spec.num_world); len];
    let mut incoming = CostToGoVector::zeros(spec.num_mem, spec.num_world);
    for j in (0..len).rev() {
        let nu = backward_nu(&beliefs[j], spec, &policies[j], &margs[j], mult, &incoming);
        incoming = nu.clone();
        nus[j] = nu;
    }
    Ok(Trajectory {
        beliefs,
        policies: policies.to_vec(),
        nus,
        reports,
        total_cost,
    })
}

/// Optimize the earliest policy of a window while the suffix stays fixed.
///
/// Each round re-propagates the window exactly, recomputes every marginal
/// and the backward chain, and replaces the head policy with the softmax
/// against the corrected cost. The window cost is non-increasing across
/// rounds.
pub fn optimize_step(
    theta_t: &JointBelief,
    spec: &ModelSpec,
    mult: &Multipliers,
    suffix: &[StepPolicy],
    opts: &SolveOptions,
) -> Result<StepOptimization> {
    mult.require_positive_gamma()?;
    opts.validate()?;
    let cells = active_cells(theta_t, spec);
    let mut q_t = opts.initial_policy(spec)?;
    let mut policies: Vec<StepPolicy> = Vec::with_capacity(suffix.len() + 1);
    policies.push(q_t.clone());
    policies.extend_from_slice(suffix);

    let mut pass = sweep_pass(spec, theta_t, &policies, mult)?;
    let mut history = vec![pass.total_cost];
    let mut iterations = 0;
    let mut converged = false;
    for r in 1..=opts.max_iters {
        let nu_head = if policies.len() > 1 {
            pass.nus[1].clone()
        } else {
            CostToGoVector::zeros(spec.num_mem, spec.num_world)
        };
        let q_next = softmax_policy(
            theta_t,
            spec,
            &modified_cost(spec, &nu_head),
            &marginalize(theta_t, spec, &q_t),
            mult,
        );
        // The marginals frozen in the update must be the ones of the current
        // policy, which sweep_pass already computed; recomputing them above
        // keeps this function independent of the pass's internal layout.
        let dq = q_next.max_abs_diff_on(&q_t, &cells);
        q_t = q_next;
        policies[0] = q_t.clone();
        let next_pass = sweep_pass(spec, theta_t, &policies, mult)?;
        let dl = (next_pass.total_cost - pass.total_cost).abs();
        pass = next_pass;
        history.push(pass.total_cost);
        iterations = r;
        if dq < opts.tol && dl < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(StepOptimization {
        policy: q_t,
        cost: pass.total_cost,
        trajectory: pass,
        iterations,
        converged,
        cost_history: history,
    })
}

fn initial_policies(
    spec: &ModelSpec,
    opts: &PlanOptions,
    init_policy: Option<&[StepPolicy]>,
) -> Result<Vec<StepPolicy>> {
    let n = spec.horizon;
    if let Some(given) = init_policy {
        if given.len() != n {
            return Err(Error::DimensionMismatch {
                context: "initial policy sequence".into(),
                expected: format!("{n} steps"),
                found: format!("{} steps", given.len()),
            });
        }
        for q in given {
            if q.num_mem() != spec.num_mem || q.num_obs() != spec.num_obs {
                return Err(Error::DimensionMismatch {
                    context: "initial policy sequence".into(),
                    expected: format!("{}x{}x{}", spec.num_mem, spec.num_obs, spec.num_mem),
                    found: format!("{}x{}x{}", q.num_mem(), q.num_obs(), q.num_mem()),
                });
            }
        }
        return Ok(given.to_vec());
    }
    match &opts.inner.init {
        PolicyInit::Uniform => Ok(vec![StepPolicy::uniform(spec.num_mem, spec.num_obs); n]),
        PolicyInit::RandomDirichlet { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Ok((0..n)
                .map(|_| StepPolicy::random_dirichlet(spec.num_mem, spec.num_obs, &mut rng))
                .collect())
        }
        PolicyInit::Warm(q) => {
            if q.num_mem() != spec.num_mem || q.num_obs() != spec.num_obs {
                return Err(Error::DimensionMismatch {
                    context: "warm-start policy".into(),
                    expected: format!("{}x{}x{}", spec.num_mem, spec.num_obs, spec.num_mem),
                    found: format!("{}x{}x{}", q.num_mem(), q.num_obs(), q.num_mem()),
                });
            }
            Ok(vec![q.clone(); n])
        }
    }
}

/// Plan over the full horizon: backward sweeps of per-step optimization,
/// each step tried against both the freshly rebuilt suffix and the previous
/// round's suffix, until the horizon cost settles.
pub fn plan(
    spec: &ModelSpec,
    mult: &Multipliers,
    opts: &PlanOptions,
    init_policy: Option<&[StepPolicy]>,
) -> Result<PlanOutcome> {
    mult.require_positive_gamma()?;
    opts.validate()?;
    spec.validate()?;
    let n = spec.horizon;
    let theta_1 = spec.initial_belief();
    let mut current = initial_policies(spec, opts, init_policy)?;
    let mut pass = sweep_pass(spec, &theta_1, &current, mult)?;
    let mut history = vec![pass.total_cost];
    let step_opts = |warm: StepPolicy| SolveOptions {
        init: PolicyInit::Warm(warm),
        ..opts.inner.clone()
    };
    let mut outer_iterations = 0;
    let mut converged = false;
    for r in 1..=opts.outer_max_iters {
        let previous = current.clone();
        // Beliefs under the prefix of the current round; the prefix below
        // step t is untouched until the sweep reaches it, so these stay
        // valid all the way down.
        let beliefs = propagate(spec, &theta_1, &current)?;
        for t in (0..n).rev() {
            let warm = previous[t].clone();
            let fresh =
                optimize_step(&beliefs[t], spec, mult, &current[t + 1..], &step_opts(warm.clone()))?;
            let winner = if current[t + 1..] != previous[t + 1..] {
                let held = optimize_step(&beliefs[t], spec, mult, &previous[t + 1..], &step_opts(warm))?;
                // Strict inequality: ties go to the freshly built suffix.
                if held.cost < fresh.cost {
                    current[t + 1..].clone_from_slice(&previous[t + 1..]);
                    held
                } else {
                    fresh
                }
            } else {
                fresh
            };
            current[t] = winner.policy;
            if t == 0 {
                pass = winner.trajectory;
            }
        }
        history.push(pass.total_cost);
        outer_iterations = r;
        let delta = (history[r] - history[r - 1]).abs();
        if delta < opts.outer_tol {
            converged = true;
            break;
        }
    }
    Ok(PlanOutcome {
        trajectory: pass,
        outer_iterations,
        converged,
        cost_history: history,
    })
}

/// Evaluate a fixed policy sequence exactly: beliefs, reports, cost-to-go
/// chain, and the horizon-averaged Lagrangian.
pub fn evaluate_policy(spec: &ModelSpec, policy: &[StepPolicy], mult: &Multipliers) -> Result<Trajectory> {
    if policy.len() != spec.horizon {
        return Err(Error::DimensionMismatch {
            context: "policy sequence".into(),
            expected: format!("{} steps", spec.horizon),
            found: format!("{} steps", policy.len()),
        });
    }
    sweep_pass(spec, &spec.initial_belief(), policy, mult)
}

/// Serialize a trajectory for export: beliefs, policies, per-step reports,
/// and the window cost, at full precision.
pub fn trajectory_to_json(traj: &Trajectory) -> String {
    let mut out = String::from("{\n  \"beliefs\": [\n");
    for (i, b) in traj.beliefs.iter().enumerate() {
        out.push_str("    [");
        for m in 0..b.num_mem() {
            if m > 0 {
                out.push_str(", ");
            }
            out.push('[');
            for w in 0..b.num_world() {
                if w > 0 {
                    out.push_str(", ");
                }
                out.push_str(&fmt_f64(b.table()[[m, w]]));
            }
            out.push(']');
        }
        out.push(']');
        if i + 1 < traj.beliefs.len() {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str("  ],\n  \"policies\": [\n");
    for (i, q) in traj.policies.iter().enumerate() {
        out.push_str("    [");
        for m in 0..q.num_mem() {
            if m > 0 {
                out.push_str(", ");
            }
            out.push('[');
            for o in 0..q.num_obs() {
                if o > 0 {
                    out.push_str(", ");
                }
                out.push('[');
                for (m2, v) in q.slice(m, o).iter().enumerate() {
                    if m2 > 0 {
                        out.push_str(", ");
                    }
                    out.push_str(&fmt_f64(*v));
                }
                out.push(']');
            }
            out.push(']');
        }
        out.push(']');
        if i + 1 < traj.policies.len() {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str("  ],\n  \"reports\": [\n");
    for (i, r) in traj.reports.iter().enumerate() {
        out.push_str(&format!(
            "    {{\"distortion\": {}, \"i_c\": {}, \"i_m\": {}, \"i_s\": {}, \"entropy_q\": {}, \"lagrangian\": {}}}",
            fmt_f64(r.distortion),
            fmt_f64(r.i_c),
            fmt_f64(r.i_m),
            fmt_f64(r.i_s),
            fmt_f64(r.entropy_q),
            fmt_f64(r.lagrangian)
        ));
        if i + 1 < traj.reports.len() {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str(&format!(
        "  ],\n  \"total_cost\": {}\n}}\n",
        fmt_f64(traj.total_cost)
    ));
    out
}

/// Parsed form of an exported trajectory; mirrors the JSON exactly.
#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryFile {
    pub beliefs: Vec<Vec<Vec<f64>>>,
    pub policies: Vec<Vec<Vec<Vec<f64>>>>,
    pub reports: Vec<ReportFile>,
    pub total_cost: f64,
}

#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    pub distortion: f64,
    pub i_c: f64,
    pub i_m: f64,
    pub i_s: f64,
    pub entropy_q: f64,
    pub lagrangian: f64,
}

pub fn trajectory_from_json(text: &str, origin: &str) -> Result<TrajectoryFile> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_string(),
        detail: e.to_string(),
    })
}
