//! Brute-force baselines for validating the solvers.
//!
//! Everything here recomputes its answer from first principles: the exact
//! Bayesian filter an unbounded agent would run, Monte-Carlo rollouts
//! against that filter, exhaustive grid search over tiny policy spaces, and
//! dense enumeration of the sequential objective. None of it calls into the
//! solver kernels; the point of this module is to disagree with them loudly
//! if either side is wrong, so the arithmetic is spelled out on purpose even
//! where the solver has an equivalent routine.

use ndarray::{Array1, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{JointBelief, ModelSpec, Multipliers, StepPolicy};
use crate::{Error, Result};

const BELIEF_TOL: f64 = 1e-12;

/// Posterior over the current world state given the observation history.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    dist: Array1<f64>,
}

impl BeliefState {
    pub fn new(dist: Array1<f64>) -> Result<Self> {
        for &v in dist.iter() {
            if v < 0.0 {
                return Err(Error::NegativeEntry {
                    context: "belief state".into(),
                    value: v,
                });
            }
        }
        let mass: f64 = dist.sum();
        if (mass - 1.0).abs() > BELIEF_TOL {
            return Err(Error::NotNormalized {
                context: "belief state".into(),
                mass,
            });
        }
        Ok(BeliefState { dist })
    }

    pub fn dist(&self) -> ArrayView1<'_, f64> {
        self.dist.view()
    }
}

/// Filter initialization: condition the world prior on the first
/// observation.
pub fn initial_belief(spec: &ModelSpec, o: usize) -> Result<BeliefState> {
    let mut post = Array1::zeros(spec.num_world);
    let mut mass = 0.0;
    for w in 0..spec.num_world {
        let v = spec.init_world[w] * spec.obs[[w, o]];
        post[w] = v;
        mass += v;
    }
    if mass <= 0.0 {
        return Err(Error::ImpossibleObservation { obs: o });
    }
    post /= mass;
    BeliefState::new(post)
}

/// One exact filter step: advance the world chain, then condition on the
/// new observation.
pub fn exact_belief_step(b: &BeliefState, spec: &ModelSpec, o: usize) -> Result<BeliefState> {
    let mut post = Array1::zeros(spec.num_world);
    let mut mass = 0.0;
    for w2 in 0..spec.num_world {
        let mut pred = 0.0;
        for w in 0..spec.num_world {
            pred += b.dist[w] * spec.trans[[w, w2]];
        }
        let v = pred * spec.obs[[w2, o]];
        post[w2] = v;
        mass += v;
    }
    if mass <= 0.0 {
        return Err(Error::ImpossibleObservation { obs: o });
    }
    post /= mass;
    BeliefState::new(post)
}

/// Monte-Carlo estimate of what an unconstrained, exactly filtering agent
/// pays on average per step.
#[derive(Debug, Clone, Copy)]
pub struct BaselineEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub num_rollouts: usize,
}

fn sample_index(row: ArrayView1<f64>, u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    row.len() - 1
}

/// Greedy cost minimizer under a belief; ties break to the lowest index.
fn best_action(b: &BeliefState, spec: &ModelSpec) -> usize {
    let mut best = 0;
    let mut best_cost = f64::INFINITY;
    for m in 0..spec.num_mem {
        let mut c = 0.0;
        for w in 0..spec.num_world {
            c += b.dist[w] * spec.cost[[w, m]];
        }
        if c < best_cost {
            best_cost = c;
            best = m;
        }
    }
    best
}

/// Average per-step distortion of the unbounded agent: track the exact
/// belief, act greedily, score against the true world state. Each rollout
/// draws from its own stream of the seeded generator, so the estimate does
/// not depend on execution order.
pub fn unbounded_baseline(spec: &ModelSpec, num_rollouts: usize, seed: u64) -> BaselineEstimate {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for rollout in 0..num_rollouts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(rollout as u64);
        let mut draw = || rand::Rng::random::<f64>(&mut rng);
        let mut w = sample_index(spec.init_world.view(), draw());
        let mut o = sample_index(spec.obs.row(w), draw());
        let mut belief = initial_belief(spec, o).expect("observed outcome has positive probability");
        let mut cost = 0.0;
        for t in 0..spec.horizon {
            cost += spec.cost[[w, best_action(&belief, spec)]];
            if t + 1 < spec.horizon {
                w = sample_index(spec.trans.row(w), draw());
                o = sample_index(spec.obs.row(w), draw());
                belief = exact_belief_step(&belief, spec, o)
                    .expect("observed outcome has positive probability");
            }
        }
        let avg = cost / spec.horizon as f64;
        sum += avg;
        sum_sq += avg * avg;
    }
    let n = num_rollouts as f64;
    let mean = sum / n;
    let var = ((sum_sq - sum * sum / n) / (n - 1.0)).max(0.0);
    BaselineEstimate {
        mean,
        stderr: (var / n).sqrt(),
        num_rollouts,
    }
}

fn xlnx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Scores two-memory one-step policies parameterized by the probability of
/// choosing memory 0 in each (m, o) slice; written out independently of the
/// solver's functionals.
///
/// The exhaustive scan evaluates millions of policies, so everything that
/// does not depend on the policy is tabulated once: slice weights, landing
/// costs, and the entropies of the fixed conditioning marginals. Each call
/// then rebuilds the next-memory marginals from the policy, so every rate
/// term uses marginals consistent with the scored policy.
struct TwoMemScorer {
    num_obs: usize,
    mult: Multipliers,
    /// Weight of each (m, o) slice under theta and the observation model.
    p_mo: Vec<f64>,
    /// Mass-weighted expected cost of landing in memory 0 (resp. 1) from
    /// each slice.
    land0: Vec<f64>,
    land1: Vec<f64>,
    /// Marginals of the slice weights and their `Σ x ln x` sums.
    p_m: [f64; 2],
    p_o: Vec<f64>,
    xlnx_p_m: f64,
    xlnx_p_o: f64,
    /// Scratch: per-observation mass landing in memory 0.
    obs0: Vec<f64>,
}

impl TwoMemScorer {
    fn new(theta: &JointBelief, spec: &ModelSpec, mult: &Multipliers) -> Self {
        let (nw, no) = (spec.num_world, spec.num_obs);
        let mut p_mo = vec![0.0; 2 * no];
        let mut land0 = vec![0.0; 2 * no];
        let mut land1 = vec![0.0; 2 * no];
        for m in 0..2 {
            for o in 0..no {
                let s = m * no + o;
                for w in 0..nw {
                    let mass = theta.table()[[m, w]] * spec.obs[[w, o]];
                    p_mo[s] += mass;
                    land0[s] += mass * spec.cost[[w, 0]];
                    land1[s] += mass * spec.cost[[w, 1]];
                }
            }
        }
        let mut p_m = [0.0; 2];
        let mut p_o = vec![0.0; no];
        for m in 0..2 {
            for o in 0..no {
                p_m[m] += p_mo[m * no + o];
                p_o[o] += p_mo[m * no + o];
            }
        }
        let xlnx_p_m = p_m.iter().map(|&p| xlnx(p)).sum();
        let xlnx_p_o = p_o.iter().map(|&p| xlnx(p)).sum();
        TwoMemScorer {
            num_obs: no,
            mult: *mult,
            p_mo,
            land0,
            land1,
            p_m,
            p_o,
            xlnx_p_m,
            xlnx_p_o,
            obs0: vec![0.0; no],
        }
    }

    /// `neg_h[s]` must equal `x ln x + (1-x) ln (1-x)` for `x = params[s]`;
    /// callers keep it alongside `params` so the grid scan can reuse
    /// per-level entropies instead of recomputing logs.
    fn score(&mut self, params: &[f64], neg_h: &[f64]) -> f64 {
        let no = self.num_obs;
        let mut dist = 0.0;
        let mut free0 = 0.0;
        let mut free1 = 0.0;
        let mut entropy = 0.0;
        let mut mem0 = [0.0; 2];
        self.obs0.fill(0.0);
        for m in 0..2 {
            for o in 0..no {
                let s = m * no + o;
                let x = params[s];
                let p = self.p_mo[s];
                dist += x * self.land0[s] + (1.0 - x) * self.land1[s];
                let px = p * x;
                free0 += px;
                free1 += p - px;
                mem0[m] += px;
                self.obs0[o] += px;
                entropy += p * neg_h[s];
            }
        }
        let mut value = dist;
        if self.mult.gamma_c() > 0.0 {
            let xlnx_free = xlnx(free0) + xlnx(free1);
            value += self.mult.gamma_c() * (entropy - xlnx_free);
        }
        // The memory rate conditions on the observation, so its reference
        // entropy comes from the per-observation joint, and symmetrically
        // for the sensing rate.
        if self.mult.gamma_m() > 0.0 {
            let mut joint = 0.0;
            for o in 0..no {
                joint += xlnx(self.obs0[o]) + xlnx(self.p_o[o] - self.obs0[o]);
            }
            value += self.mult.gamma_m() * (entropy - joint + self.xlnx_p_o);
        }
        if self.mult.gamma_s() > 0.0 {
            let mut joint = 0.0;
            for m in 0..2 {
                joint += xlnx(mem0[m]) + xlnx(self.p_m[m] - mem0[m]);
            }
            value += self.mult.gamma_s() * (entropy - joint + self.xlnx_p_m);
        }
        value
    }
}

/// Exhaustive grid search for the best one-step Lagrangian over two-memory
/// policies, followed by a single coordinate-refinement pass at a hundredth
/// of the grid step.
pub fn grid_search_onestep(
    theta: &JointBelief,
    spec: &ModelSpec,
    mult: &Multipliers,
    grid_step: f64,
) -> Result<f64> {
    if spec.num_mem != 2 {
        return Err(Error::Unsupported(format!(
            "grid search needs exactly 2 memory states, model has {}",
            spec.num_mem
        )));
    }
    if !(grid_step > 0.0 && grid_step <= 0.02) {
        return Err(Error::InvalidArgument(format!(
            "grid_step must be in (0, 0.02], got {grid_step}"
        )));
    }
    let dims = 2 * spec.num_obs;
    let levels = (1.0 / grid_step).round() as usize + 1;
    let combos = (levels as f64).powi(dims as i32);
    if combos > 1e8 {
        return Err(Error::TooLarge(format!(
            "{levels}^{dims} grid points exceed the search budget"
        )));
    }
    let mut scorer = TwoMemScorer::new(theta, spec, mult);
    // Per-level values and slice entropies, shared by every coordinate.
    let level_x: Vec<f64> = (0..levels)
        .map(|i| (i as f64 * grid_step).min(1.0))
        .collect();
    let level_h: Vec<f64> = level_x
        .iter()
        .map(|&x| xlnx(x) + xlnx(1.0 - x))
        .collect();
    let mut params = vec![0.0; dims];
    let mut neg_h = vec![level_h[0]; dims];
    let mut best = f64::INFINITY;
    let mut best_params = params.clone();
    let mut index = vec![0usize; dims];
    loop {
        let value = scorer.score(&params, &neg_h);
        if value < best {
            best = value;
            best_params.copy_from_slice(&params);
        }
        // Odometer increment over the product grid.
        let mut carry = true;
        for (dim, digit) in index.iter_mut().enumerate() {
            *digit += 1;
            if *digit < levels {
                params[dim] = level_x[*digit];
                neg_h[dim] = level_h[*digit];
                carry = false;
                break;
            }
            *digit = 0;
            params[dim] = level_x[0];
            neg_h[dim] = level_h[0];
        }
        if carry {
            break;
        }
    }
    // Local refinement: scan each coordinate over a one-cell neighborhood.
    let fine = grid_step / 100.0;
    let mut refined = best_params;
    for (dim, h) in neg_h.iter_mut().enumerate() {
        *h = xlnx(refined[dim]) + xlnx(1.0 - refined[dim]);
    }
    for dim in 0..dims {
        let center = refined[dim];
        let lo = (center - grid_step).max(0.0);
        let hi = (center + grid_step).min(1.0);
        let mut x = lo;
        let mut best_x = center;
        while x <= hi + fine / 2.0 {
            refined[dim] = x;
            neg_h[dim] = xlnx(x) + xlnx(1.0 - x);
            let value = scorer.score(&refined, &neg_h);
            if value < best {
                best = value;
                best_x = x;
            }
            x += fine;
        }
        refined[dim] = best_x;
        neg_h[dim] = xlnx(best_x) + xlnx(1.0 - best_x);
    }
    Ok(best)
}

/// Exact objective components of a fixed policy sequence, by dense forward
/// propagation of the joint over (previous memory, world).
#[derive(Debug, Clone, Copy)]
pub struct CostBreakdown {
    pub avg_distortion: f64,
    pub avg_i_c: f64,
    pub avg_i_m: f64,
    pub avg_i_s: f64,
}

fn entropy(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

/// Information rates per step via joint entropies, distortion by direct
/// expectation; averages over the horizon.
pub fn enumerate_cost(spec: &ModelSpec, policy: &[StepPolicy]) -> Result<CostBreakdown> {
    if spec.num_mem * spec.num_world > 10_000 {
        return Err(Error::TooLarge(format!(
            "joint support {}x{} exceeds the dense enumeration budget",
            spec.num_mem, spec.num_world
        )));
    }
    if policy.len() != spec.horizon {
        return Err(Error::DimensionMismatch {
            context: "policy sequence".into(),
            expected: format!("{} steps", spec.horizon),
            found: format!("{} steps", policy.len()),
        });
    }
    let (nm, nw, no) = (spec.num_mem, spec.num_world, spec.num_obs);
    let mut joint = vec![0.0; nm * nw];
    for m in 0..nm {
        for w in 0..nw {
            joint[m * nw + w] = spec.init_mem[m] * spec.init_world[w];
        }
    }
    let (mut d_total, mut c_total, mut m_total, mut s_total) = (0.0, 0.0, 0.0, 0.0);
    for q in policy {
        // Step distribution over (m, o, m') plus its relevant collapses.
        let mut p3 = vec![0.0; nm * no * nm];
        let mut step_d = 0.0;
        for m in 0..nm {
            for w in 0..nw {
                let tw = joint[m * nw + w];
                if tw == 0.0 {
                    continue;
                }
                for o in 0..no {
                    let base = tw * spec.obs[[w, o]];
                    if base == 0.0 {
                        continue;
                    }
                    for (m2, &qv) in q.slice(m, o).iter().enumerate() {
                        p3[(m * no + o) * nm + m2] += base * qv;
                        step_d += base * qv * spec.cost[[w, m2]];
                    }
                }
            }
        }
        let mut p_mo = vec![0.0; nm * no];
        let mut p_m2 = vec![0.0; nm];
        let mut p_om2 = vec![0.0; no * nm];
        let mut p_mm2 = vec![0.0; nm * nm];
        let mut p_o = vec![0.0; no];
        let mut p_m = vec![0.0; nm];
        for m in 0..nm {
            for o in 0..no {
                for m2 in 0..nm {
                    let v = p3[(m * no + o) * nm + m2];
                    p_mo[m * no + o] += v;
                    p_m2[m2] += v;
                    p_om2[o * nm + m2] += v;
                    p_mm2[m * nm + m2] += v;
                    p_o[o] += v;
                    p_m[m] += v;
                }
            }
        }
        let h_mo = entropy(&p_mo);
        let h_m2 = entropy(&p_m2);
        let h_mom2 = entropy(&p3);
        d_total += step_d;
        c_total += h_mo + h_m2 - h_mom2;
        m_total += (entropy(&p_om2) - entropy(&p_o)) + (h_mo - entropy(&p_o))
            - (h_mom2 - entropy(&p_o));
        s_total +=
            (entropy(&p_mm2) - entropy(&p_m)) + (h_mo - entropy(&p_m)) - (h_mom2 - entropy(&p_m));
        // Advance the joint to (m', w').
        let mut next = vec![0.0; nm * nw];
        for m in 0..nm {
            for w in 0..nw {
                let tw = joint[m * nw + w];
                if tw == 0.0 {
                    continue;
                }
                for o in 0..no {
                    let base = tw * spec.obs[[w, o]];
                    if base == 0.0 {
                        continue;
                    }
                    for (m2, &qv) in q.slice(m, o).iter().enumerate() {
                        let mass = base * qv;
                        if mass == 0.0 {
                            continue;
                        }
                        for w2 in 0..nw {
                            next[m2 * nw + w2] += mass * spec.trans[[w, w2]];
                        }
                    }
                }
            }
        }
        joint = next;
    }
    let n = spec.horizon as f64;
    Ok(CostBreakdown {
        avg_distortion: d_total / n,
        avg_i_c: c_total / n,
        avg_i_m: m_total / n,
        avg_i_s: s_total / n,
    })
}
