//! Information functionals of a (belief, policy) pair for a single step.
//!
//! For a fixed joint belief over (previous memory, world) and a step policy,
//! the step induces a joint distribution over (m, w, o, m'). This module
//! evaluates its cost and information structure exactly: expected distortion,
//! the three rates charged to the memory channel (combined, memory-only,
//! sensing-only), the policy's conditional entropy, and the one-step
//! Lagrangian that the solvers descend.
//!
//! Conventions: `0 log 0 = 0` and `0 log(0/0) = 0`; conditionals of
//! zero-probability events are uniform and never contribute to an
//! expectation; everything is in nats.

use ndarray::{Array1, Array2, Array4};

use crate::model::{JointBelief, Marginals, ModelSpec, Multipliers, StepPolicy};
use crate::{Error, Result};

/// Cost and information summary of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Expected cost under the step's joint distribution.
    pub distortion: f64,
    /// Combined rate I(M_{t-1}, O_t; M_t), nats.
    pub i_c: f64,
    /// Memory rate I(M_{t-1}; M_t | O_t), nats.
    pub i_m: f64,
    /// Sensing rate I(O_t; M_t | M_{t-1}), nats.
    pub i_s: f64,
    /// Conditional entropy H(M_t | M_{t-1}, O_t) of the policy, nats.
    pub entropy_q: f64,
    /// One-step Lagrangian: distortion plus multiplier-weighted rates.
    pub lagrangian: f64,
}

/// Joint distribution of (previous memory, observation): the belief's memory
/// row pushed through the observation kernel.
pub(crate) fn pr_mem_obs(theta: &JointBelief, spec: &ModelSpec) -> Array2<f64> {
    theta.table().dot(&spec.obs)
}

/// Full joint over (m, w, o, m'): `theta(m,w) * obs(o|w) * q(m'|m,o)`.
pub fn joint_distribution(
    theta: &JointBelief,
    spec: &ModelSpec,
    q: &StepPolicy,
) -> Result<Array4<f64>> {
    if theta.num_mem() != spec.num_mem || theta.num_world() != spec.num_world {
        return Err(Error::DimensionMismatch {
            context: "joint_distribution belief".into(),
            expected: format!("{}x{}", spec.num_mem, spec.num_world),
            found: format!("{}x{}", theta.num_mem(), theta.num_world()),
        });
    }
    if q.num_mem() != spec.num_mem || q.num_obs() != spec.num_obs {
        return Err(Error::DimensionMismatch {
            context: "joint_distribution policy".into(),
            expected: format!("{}x{}x{}", spec.num_mem, spec.num_obs, spec.num_mem),
            found: format!("{}x{}x{}", q.num_mem(), q.num_obs(), q.num_mem()),
        });
    }
    let (nm, nw, no) = (spec.num_mem, spec.num_world, spec.num_obs);
    let mut joint = Array4::zeros((nm, nw, no, nm));
    for m in 0..nm {
        for w in 0..nw {
            let tw = theta.table()[[m, w]];
            for o in 0..no {
                let base = tw * spec.obs[[w, o]];
                let slice = q.slice(m, o);
                for m2 in 0..nm {
                    joint[[m, w, o, m2]] = base * slice[m2];
                }
            }
        }
    }
    Ok(joint)
}

/// Expected cost of the step.
pub fn distortion(theta: &JointBelief, spec: &ModelSpec, q: &StepPolicy) -> f64 {
    let (nm, nw, no) = (spec.num_mem, spec.num_world, spec.num_obs);
    let mut total = 0.0;
    for m in 0..nm {
        for w in 0..nw {
            let tw = theta.table()[[m, w]];
            if tw == 0.0 {
                continue;
            }
            let cost_row = spec.cost.row(w);
            let mut acc = 0.0;
            for o in 0..no {
                let po = spec.obs[[w, o]];
                if po == 0.0 {
                    continue;
                }
                let mut inner = 0.0;
                for (qv, cv) in q.slice(m, o).iter().zip(cost_row.iter()) {
                    inner += qv * cv;
                }
                acc += po * inner;
            }
            total += tw * acc;
        }
    }
    total
}

/// The three next-memory marginals induced by the belief and the policy:
/// unconditional, per observation, and per previous memory. Conditionals of
/// zero-probability events are uniform.
pub fn marginalize(theta: &JointBelief, spec: &ModelSpec, q: &StepPolicy) -> Marginals {
    let (nm, no) = (spec.num_mem, spec.num_obs);
    let pr_mo = pr_mem_obs(theta, spec);
    let uniform = 1.0 / nm as f64;

    let mut joint_free = Array1::zeros(nm);
    for m in 0..nm {
        for o in 0..no {
            let p = pr_mo[[m, o]];
            if p == 0.0 {
                continue;
            }
            for (m2, qv) in q.slice(m, o).iter().enumerate() {
                joint_free[m2] += p * qv;
            }
        }
    }

    let mut given_obs = Array2::zeros((no, nm));
    for o in 0..no {
        let p_o: f64 = (0..nm).map(|m| pr_mo[[m, o]]).sum();
        if p_o > 0.0 {
            for m in 0..nm {
                let w = pr_mo[[m, o]] / p_o;
                if w == 0.0 {
                    continue;
                }
                for (m2, qv) in q.slice(m, o).iter().enumerate() {
                    given_obs[[o, m2]] += w * qv;
                }
            }
        } else {
            given_obs.row_mut(o).fill(uniform);
        }
    }

    let mut given_mem = Array2::zeros((nm, nm));
    for m in 0..nm {
        let p_m: f64 = (0..no).map(|o| pr_mo[[m, o]]).sum();
        if p_m > 0.0 {
            for o in 0..no {
                let w = pr_mo[[m, o]] / p_m;
                if w == 0.0 {
                    continue;
                }
                for (m2, qv) in q.slice(m, o).iter().enumerate() {
                    given_mem[[m, m2]] += w * qv;
                }
            }
        } else {
            given_mem.row_mut(m).fill(uniform);
        }
    }

    Marginals {
        joint_free,
        given_obs,
        given_mem,
    }
}

fn kl_slice(p: ndarray::ArrayView1<f64>, r: ndarray::ArrayView1<f64>) -> f64 {
    let mut kl = 0.0;
    for (&pv, &rv) in p.iter().zip(r.iter()) {
        if pv > 0.0 {
            kl += pv * (pv / rv).ln();
        }
    }
    kl
}

/// The three information rates, computed as policy-vs-marginal divergences
/// averaged over the (memory, observation) distribution.
pub fn information_rates(theta: &JointBelief, spec: &ModelSpec, q: &StepPolicy) -> (f64, f64, f64) {
    let marg = marginalize(theta, spec, q);
    information_rates_with(theta, spec, q, &marg)
}

/// Same as [`information_rates`] with precomputed marginals.
pub fn information_rates_with(
    theta: &JointBelief,
    spec: &ModelSpec,
    q: &StepPolicy,
    marg: &Marginals,
) -> (f64, f64, f64) {
    let (nm, no) = (spec.num_mem, spec.num_obs);
    let pr_mo = pr_mem_obs(theta, spec);
    let (mut i_c, mut i_m, mut i_s) = (0.0, 0.0, 0.0);
    for m in 0..nm {
        for o in 0..no {
            let p = pr_mo[[m, o]];
            if p == 0.0 {
                continue;
            }
            let slice = q.slice(m, o);
            i_c += p * kl_slice(slice, marg.joint_free.view());
            i_m += p * kl_slice(slice, marg.given_obs.row(o));
            i_s += p * kl_slice(slice, marg.given_mem.row(m));
        }
    }
    (i_c, i_m, i_s)
}

/// Conditional entropy of the policy under the belief's (m, o) distribution.
pub fn policy_entropy(theta: &JointBelief, spec: &ModelSpec, q: &StepPolicy) -> f64 {
    let (nm, no) = (spec.num_mem, spec.num_obs);
    let pr_mo = pr_mem_obs(theta, spec);
    let mut h = 0.0;
    for m in 0..nm {
        for o in 0..no {
            let p = pr_mo[[m, o]];
            if p == 0.0 {
                continue;
            }
            for &qv in q.slice(m, o).iter() {
                if qv > 0.0 {
                    h -= p * qv * qv.ln();
                }
            }
        }
    }
    h
}

/// One-step Lagrangian in the cross-entropy-minus-entropy form, evaluated
/// against the supplied marginals (which need not be consistent with `q`).
///
/// A zero marginal at a cell that carries positive policy mass makes the
/// matching term infinite when its multiplier is positive; the result is then
/// `+inf`, never a panic. With consistent marginals this equals
/// `distortion + gamma_c*i_c + gamma_m*i_m + gamma_s*i_s`.
pub fn lagrangian_onestep(
    theta: &JointBelief,
    spec: &ModelSpec,
    q: &StepPolicy,
    marg: &Marginals,
    mult: &Multipliers,
) -> f64 {
    let (nm, no) = (spec.num_mem, spec.num_obs);
    let pr_mo = pr_mem_obs(theta, spec);
    let mut value = distortion(theta, spec, q);
    // Cross-entropy of each marginal family, then minus gamma times the
    // policy entropy; pairs of terms cancel to KL divergences when the
    // marginals are consistent.
    let mut entropy = 0.0;
    for m in 0..nm {
        for o in 0..no {
            let p = pr_mo[[m, o]];
            if p == 0.0 {
                continue;
            }
            for (m2, &qv) in q.slice(m, o).iter().enumerate() {
                if qv == 0.0 {
                    continue;
                }
                entropy -= p * qv * qv.ln();
                for (gamma_x, margv) in [
                    (mult.gamma_c(), marg.joint_free[m2]),
                    (mult.gamma_m(), marg.given_obs[[o, m2]]),
                    (mult.gamma_s(), marg.given_mem[[m, m2]]),
                ] {
                    if gamma_x > 0.0 {
                        if margv > 0.0 {
                            value -= gamma_x * p * qv * margv.ln();
                        } else {
                            return f64::INFINITY;
                        }
                    }
                }
            }
        }
    }
    value - mult.gamma() * entropy
}

/// Full [`StepReport`] for a (belief, policy) pair with precomputed
/// marginals; the Lagrangian uses the weighted-sum form.
pub fn step_report(
    theta: &JointBelief,
    spec: &ModelSpec,
    q: &StepPolicy,
    marg: &Marginals,
    mult: &Multipliers,
) -> StepReport {
    let d = distortion(theta, spec, q);
    let (i_c, i_m, i_s) = information_rates_with(theta, spec, q, marg);
    let entropy_q = policy_entropy(theta, spec, q);
    StepReport {
        distortion: d,
        i_c,
        i_m,
        i_s,
        entropy_q,
        lagrangian: d + mult.gamma_c() * i_c + mult.gamma_m() * i_m + mult.gamma_s() * i_s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_symmetric_channel;
    use ndarray::{arr1, arr2, Array3};

    fn uniform_theta() -> JointBelief {
        JointBelief::uniform(2, 2)
    }

    /// q(m'|m,o) = delta(m' = o).
    fn copy_obs_policy() -> StepPolicy {
        let mut t = Array3::zeros((2, 2, 2));
        for m in 0..2 {
            for o in 0..2 {
                t[[m, o, o]] = 1.0;
            }
        }
        StepPolicy::new(t).unwrap()
    }

    /// q(m'|m,o) = delta(m' = m).
    fn copy_mem_policy() -> StepPolicy {
        let mut t = Array3::zeros((2, 2, 2));
        for m in 0..2 {
            for o in 0..2 {
                t[[m, o, m]] = 1.0;
            }
        }
        StepPolicy::new(t).unwrap()
    }

    /// q(m'|m,o) = out[m'], independent of inputs.
    fn const_policy(out: [f64; 2]) -> StepPolicy {
        let mut t = Array3::zeros((2, 2, 2));
        for m in 0..2 {
            for o in 0..2 {
                for m2 in 0..2 {
                    t[[m, o, m2]] = out[m2];
                }
            }
        }
        StepPolicy::new(t).unwrap()
    }

    #[test]
    fn joint_marginal_over_mem_world_recovers_theta() {
        let spec = build_symmetric_channel();
        let theta = JointBelief::new(arr2(&[[0.1, 0.3], [0.4, 0.2]])).unwrap();
        let q = copy_obs_policy();
        let joint = joint_distribution(&theta, &spec, &q).unwrap();
        for m in 0..2 {
            for w in 0..2 {
                let mass: f64 = joint.slice(ndarray::s![m, w, .., ..]).sum();
                assert!((mass - theta.table()[[m, w]]).abs() < 1e-12);
            }
        }
        assert!((joint.sum() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn joint_of_uniform_inputs_is_scaled_obs_kernel() {
        let spec = build_symmetric_channel();
        let q = StepPolicy::uniform(2, 2);
        let joint = joint_distribution(&uniform_theta(), &spec, &q).unwrap();
        for ((_, w, o, _), &v) in joint.indexed_iter() {
            assert!((v - spec.obs[[w, o]] / 8.0).abs() < 1e-15);
        }
    }

    #[test]
    fn joint_concentrates_under_deterministic_kernels() {
        let mut spec = build_symmetric_channel();
        spec.obs = arr2(&[[1.0, 0.0], [0.0, 1.0]]);
        let q = copy_obs_policy();
        let joint = joint_distribution(&uniform_theta(), &spec, &q).unwrap();
        for ((m, w, o, m2), &v) in joint.indexed_iter() {
            if o == w && m2 == o {
                assert!((v - 0.25).abs() < 1e-15, "({m},{w},{o},{m2})");
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn distortion_of_constant_memory_under_symmetry_is_half() {
        let spec = build_symmetric_channel();
        let d = distortion(&uniform_theta(), &spec, &const_policy([1.0, 0.0]));
        assert!((d - 0.5).abs() < 1e-15);
    }

    #[test]
    fn distortion_vanishes_for_zero_cost() {
        let mut spec = build_symmetric_channel();
        spec.cost = arr2(&[[0.0, 0.0], [0.0, 0.0]]);
        let d = distortion(&uniform_theta(), &spec, &copy_obs_policy());
        assert_eq!(d, 0.0);
    }

    #[test]
    fn distortion_of_copy_policy_is_observation_error() {
        let spec = build_symmetric_channel();
        let d = distortion(&uniform_theta(), &spec, &copy_obs_policy());
        assert!((d - 0.2).abs() < 1e-15);
    }

    #[test]
    fn rates_vanish_for_input_independent_policy() {
        let spec = build_symmetric_channel();
        let (i_c, i_m, i_s) = information_rates(&uniform_theta(), &spec, &const_policy([0.3, 0.7]));
        assert!(i_c.abs() < 1e-15);
        assert!(i_m.abs() < 1e-15);
        assert!(i_s.abs() < 1e-15);
    }

    #[test]
    fn rates_of_copy_policy_match_hand_values() {
        // O is uniform here and copied exactly into M', so the combined and
        // sensing rates are ln 2 while the memory rate vanishes.
        let spec = build_symmetric_channel();
        let (i_c, i_m, i_s) = information_rates(&uniform_theta(), &spec, &copy_obs_policy());
        let ln2 = 2f64.ln();
        assert!((i_c - ln2).abs() < 1e-12);
        assert!(i_m.abs() < 1e-12);
        assert!((i_s - ln2).abs() < 1e-12);
        assert!((i_c - 0.693147).abs() < 1e-6);
    }

    /// Mutual informations computed from entropies of the raw joint, an
    /// algebraic route independent of the divergence forms.
    fn entropy_route_rates(
        theta: &JointBelief,
        spec: &ModelSpec,
        q: &StepPolicy,
    ) -> (f64, f64, f64) {
        let joint = joint_distribution(theta, spec, q).unwrap();
        let (nm, _, no) = (spec.num_mem, spec.num_world, spec.num_obs);
        let h = |probs: &[f64]| -> f64 {
            probs
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| -p * p.ln())
                .sum()
        };
        // Collapse the world axis: distribution over (m, o, m').
        let mut p3 = vec![0.0; nm * no * nm];
        for ((m, _, o, m2), &v) in joint.indexed_iter() {
            p3[(m * no + o) * nm + m2] += v;
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
        let h_mom2 = h(&p3);
        let h_mo = h(&p_mo);
        let h_m2 = h(&p_m2);
        let i_c = h_mo + h_m2 - h_mom2;
        let i_m = (h(&p_om2) - h(&p_o)) + (h_mo - h(&p_o)) - (h_mom2 - h(&p_o));
        let i_s = (h(&p_mm2) - h(&p_m)) + (h_mo - h(&p_m)) - (h_mom2 - h(&p_m));
        (i_c, i_m, i_s)
    }

    #[test]
    fn rates_agree_with_entropy_route() {
        let spec = build_symmetric_channel();
        let theta = JointBelief::new(arr2(&[[0.15, 0.25], [0.35, 0.25]])).unwrap();
        let mut t = Array3::zeros((2, 2, 2));
        let slices = [[0.9, 0.1], [0.3, 0.7], [0.6, 0.4], [0.2, 0.8]];
        for m in 0..2 {
            for o in 0..2 {
                for m2 in 0..2 {
                    t[[m, o, m2]] = slices[m * 2 + o][m2];
                }
            }
        }
        let q = StepPolicy::new(t).unwrap();
        let (i_c, i_m, i_s) = information_rates(&theta, &spec, &q);
        let (e_c, e_m, e_s) = entropy_route_rates(&theta, &spec, &q);
        assert!((i_c - e_c).abs() < 1e-10);
        assert!((i_m - e_m).abs() < 1e-10);
        assert!((i_s - e_s).abs() < 1e-10);
    }

    #[test]
    fn marginals_of_independent_policy_equal_its_output() {
        let spec = build_symmetric_channel();
        let marg = marginalize(&uniform_theta(), &spec, &const_policy([0.3, 0.7]));
        for m2 in 0..2 {
            let expect = [0.3, 0.7][m2];
            assert!((marg.joint_free[m2] - expect).abs() < 1e-12);
            for o in 0..2 {
                assert!((marg.given_obs[[o, m2]] - expect).abs() < 1e-12);
            }
            for m in 0..2 {
                assert!((marg.given_mem[[m, m2]] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn marginal_of_memory_copy_is_memory_marginal() {
        let spec = build_symmetric_channel();
        let theta = JointBelief::new(arr2(&[[0.1, 0.2], [0.35, 0.35]])).unwrap();
        let marg = marginalize(&theta, &spec, &copy_mem_policy());
        assert!((marg.joint_free[0] - 0.3).abs() < 1e-12);
        assert!((marg.joint_free[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn marginals_match_brute_force_sums_of_joint() {
        let spec = build_symmetric_channel();
        let theta = JointBelief::new(arr2(&[[0.05, 0.45], [0.3, 0.2]])).unwrap();
        let q = copy_obs_policy();
        let joint = joint_distribution(&theta, &spec, &q).unwrap();
        let marg = marginalize(&theta, &spec, &q);
        for m2 in 0..2 {
            let direct: f64 = joint.slice(ndarray::s![.., .., .., m2]).sum();
            assert!((marg.joint_free[m2] - direct).abs() < 1e-12);
        }
        for o in 0..2 {
            let p_o: f64 = joint.slice(ndarray::s![.., .., o, ..]).sum();
            for m2 in 0..2 {
                let j: f64 = joint.slice(ndarray::s![.., .., o, m2]).sum();
                assert!((marg.given_obs[[o, m2]] - j / p_o).abs() < 1e-12);
            }
        }
        for m in 0..2 {
            let p_m: f64 = joint.slice(ndarray::s![m, .., .., ..]).sum();
            for m2 in 0..2 {
                let j: f64 = joint.slice(ndarray::s![m, .., .., m2]).sum();
                assert!((marg.given_mem[[m, m2]] - j / p_m).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lagrangian_reduces_to_distortion_for_zero_rate_policies() {
        let spec = build_symmetric_channel();
        let theta = uniform_theta();
        let mult = Multipliers::new(1.0, 0.0, 0.0).unwrap();
        let q = const_policy([0.3, 0.7]);
        let marg = marginalize(&theta, &spec, &q);
        let l = lagrangian_onestep(&theta, &spec, &q, &marg, &mult);
        let d = distortion(&theta, &spec, &q);
        assert!((l - d).abs() < 1e-12);

        let q_u = StepPolicy::uniform(2, 2);
        let marg_u = marginalize(&theta, &spec, &q_u);
        let l_u = lagrangian_onestep(&theta, &spec, &q_u, &marg_u, &mult);
        assert!((l_u - distortion(&theta, &spec, &q_u)).abs() < 1e-12);
    }

    #[test]
    fn lagrangian_equals_weighted_rate_sum_at_consistent_marginals() {
        let spec = build_symmetric_channel();
        let theta = JointBelief::new(arr2(&[[0.15, 0.25], [0.35, 0.25]])).unwrap();
        let mult = Multipliers::new(0.4, 0.25, 0.1).unwrap();
        let q = copy_obs_policy();
        let marg = marginalize(&theta, &spec, &q);
        let l = lagrangian_onestep(&theta, &spec, &q, &marg, &mult);
        let report = step_report(&theta, &spec, &q, &marg, &mult);
        assert!((l - report.lagrangian).abs() < 1e-10);
    }

    #[test]
    fn lagrangian_is_infinite_against_vanishing_marginal() {
        let spec = build_symmetric_channel();
        let theta = uniform_theta();
        let mult = Multipliers::new(1.0, 0.0, 0.0).unwrap();
        let q = copy_obs_policy();
        // Claim the free marginal puts no mass on state 1 even though the
        // policy reaches it.
        let marg = Marginals {
            joint_free: arr1(&[1.0, 0.0]),
            given_obs: arr2(&[[0.5, 0.5], [0.5, 0.5]]),
            given_mem: arr2(&[[0.5, 0.5], [0.5, 0.5]]),
        };
        let l = lagrangian_onestep(&theta, &spec, &q, &marg, &mult);
        assert!(l.is_infinite() && l > 0.0);
    }

    #[test]
    fn zero_multiplier_ignores_vanishing_marginal() {
        let spec = build_symmetric_channel();
        let theta = uniform_theta();
        let mult = Multipliers::new(0.0, 0.0, 1.0).unwrap();
        let q = copy_obs_policy();
        let mut marg = marginalize(&theta, &spec, &q);
        marg.joint_free = arr1(&[1.0, 0.0]);
        let l = lagrangian_onestep(&theta, &spec, &q, &marg, &mult);
        assert!(l.is_finite());
    }

    #[test]
    fn chain_rules_hold_on_fixture() {
        let spec = build_symmetric_channel();
        let theta = JointBelief::new(arr2(&[[0.05, 0.45], [0.3, 0.2]])).unwrap();
        let mut t = Array3::zeros((2, 2, 2));
        let slices = [[0.85, 0.15], [0.4, 0.6], [0.55, 0.45], [0.1, 0.9]];
        for m in 0..2 {
            for o in 0..2 {
                for m2 in 0..2 {
                    t[[m, o, m2]] = slices[m * 2 + o][m2];
                }
            }
        }
        let q = StepPolicy::new(t).unwrap();
        let (i_c, i_m, i_s) = information_rates(&theta, &spec, &q);

        // I(O; M') and I(M; M') from the raw joint.
        let joint = joint_distribution(&theta, &spec, &q).unwrap();
        let h = |probs: &[f64]| -> f64 {
            probs
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| -p * p.ln())
                .sum()
        };
        let mut p_o = vec![0.0; 2];
        let mut p_m2 = vec![0.0; 2];
        let mut p_om2 = vec![0.0; 4];
        let mut p_m = vec![0.0; 2];
        let mut p_mm2 = vec![0.0; 4];
        for ((m, _, o, m2), &v) in joint.indexed_iter() {
            p_o[o] += v;
            p_m2[m2] += v;
            p_om2[o * 2 + m2] += v;
            p_m[m] += v;
            p_mm2[m * 2 + m2] += v;
        }
        let i_obs_next = h(&p_o) + h(&p_m2) - h(&p_om2);
        let i_mem_next = h(&p_m) + h(&p_m2) - h(&p_mm2);
        assert!((i_c - (i_m + i_obs_next)).abs() < 1e-10);
        assert!((i_c - (i_s + i_mem_next)).abs() < 1e-10);

        // Data processing: the world can only reach M' through (M, O).
        let mut p_w = vec![0.0; 2];
        let mut p_wm2 = vec![0.0; 4];
        for ((_, w, _, m2), &v) in joint.indexed_iter() {
            p_w[w] += v;
            p_wm2[w * 2 + m2] += v;
        }
        let i_world_next = h(&p_w) + h(&p_m2) - h(&p_wm2);
        assert!(i_world_next <= i_c + 1e-10);
    }
}
