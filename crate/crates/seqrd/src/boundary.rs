//! Rate-distortion boundary tracing.
//!
//! A solved multiplier point lands somewhere on the boundary of the
//! achievable (memory rate, sensing rate, distortion) region. This module
//! maps multiplier grids to boundary points: it classifies which constraint
//! pattern a solution realizes and where it touches the boundary, inverts
//! desired boundary slopes back into candidate multipliers, drives
//! warm-chained sweeps over multiplier grids, and cross-checks the boundary
//! assembled from two-constraint relaxations against rate targets.

use rayon::prelude::*;

use crate::infotheory::StepReport;
use crate::model::{ModelSpec, Multipliers, StepPolicy};
use crate::planner::{plan, PlanOptions};
use crate::{Error, Result};

/// Slack tolerance for the rate comparisons that select a boundary row.
const RATE_COND_TOL: f64 = 1e-9;

/// Which multiplier pattern a boundary solution realizes. The names follow
/// the sweep CSV vocabulary: each variant says which multipliers vanish.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    GammaMZero,
    GammaSZero,
    GammaMSZero,
    GammaCZero,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::GammaMZero => "GammaM_Zero",
            Regime::GammaSZero => "GammaS_Zero",
            Regime::GammaMSZero => "GammaMS_Zero",
            Regime::GammaCZero => "GammaC_Zero",
        })
    }
}

/// Where a classified solution touches the boundary.
#[derive(Debug, Clone)]
pub struct Classification {
    /// `None` when no row's conditions hold; the solution then witnesses no
    /// boundary point, which is recorded rather than fatal.
    pub regime: Option<Regime>,
    /// One rate point, or both endpoints of the flat interval that the
    /// all-zero memory/sensing row spans.
    pub rate_points: Vec<(f64, f64)>,
    /// Boundary slopes (dD*/dR_M, dD*/dR_S) at the touch point.
    pub subgradient: (f64, f64),
}

/// One solved multiplier point mapped onto the boundary.
#[derive(Debug, Clone)]
pub struct BoundaryPoint {
    pub mult: Multipliers,
    pub r_m: f64,
    pub r_s: f64,
    pub i_c: f64,
    pub i_m: f64,
    pub i_s: f64,
    pub distortion: f64,
    pub lagrangian: f64,
    pub regime: Option<Regime>,
    pub subgradient: (f64, f64),
    pub converged: bool,
    pub iterations: usize,
}

impl BoundaryPoint {
    /// CSV value of the regime column.
    pub fn regime_label(&self) -> String {
        match self.regime {
            Some(r) => r.to_string(),
            None => "Infeasible".to_string(),
        }
    }
}

/// Apply the boundary achievability rows to an averaged solution summary.
///
/// Rows are tried from the most specific multiplier pattern down: both
/// memory-side multipliers zero, then each alone, then the combined-rate
/// multiplier zero. The first row whose multiplier pattern and rate
/// condition both hold wins. When none does, the solution is flagged
/// infeasible and reported at its raw channel rates with the fully combined
/// slopes, so a sweep row still carries usable coordinates.
pub fn classify_regime(report: &StepReport, mult: &Multipliers) -> Classification {
    let (i_c, i_m, i_s) = (report.i_c, report.i_m, report.i_s);
    let (gc, gm, gs) = (mult.gamma_c(), mult.gamma_m(), mult.gamma_s());
    let combined_tight = i_c >= i_m + i_s - RATE_COND_TOL;
    let combined_loose = i_c <= i_m + i_s + RATE_COND_TOL;
    if gm == 0.0 && gs == 0.0 && combined_tight {
        let lo = (i_c - i_s, i_s);
        let hi = (i_m, i_c - i_m);
        let rate_points = if lo == hi { vec![lo] } else { vec![lo, hi] };
        return Classification {
            regime: Some(Regime::GammaMSZero),
            rate_points,
            subgradient: (-gc, -gc),
        };
    }
    if gm == 0.0 && combined_tight {
        return Classification {
            regime: Some(Regime::GammaMZero),
            rate_points: vec![(i_c - i_s, i_s)],
            subgradient: (-gc, -gc - gs),
        };
    }
    if gs == 0.0 && combined_tight {
        return Classification {
            regime: Some(Regime::GammaSZero),
            rate_points: vec![(i_m, i_c - i_m)],
            subgradient: (-gc - gm, -gc),
        };
    }
    if gc == 0.0 && combined_loose {
        return Classification {
            regime: Some(Regime::GammaCZero),
            rate_points: vec![(i_m, i_s)],
            subgradient: (-gm, -gs),
        };
    }
    Classification {
        regime: None,
        rate_points: vec![(i_m, i_s)],
        subgradient: (-(gc + gm), -(gc + gs)),
    }
}

/// Which rate-comparison branch a subgradient inversion should assume.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchHint {
    /// Emit candidates for both branches.
    Any,
    /// Expect the combined rate to sit at or below the channel-rate sum.
    CombinedLoose,
    /// Expect the combined rate to sit at or above the channel-rate sum.
    CombinedTight,
}

/// Invert a desired boundary slope pair into the candidate multipliers that
/// could realize it. Which candidate applies depends on the solution's
/// rates, so all candidates consistent with the hint are returned and the
/// caller solves each.
pub fn multipliers_from_subgradient(
    alpha_m: f64,
    alpha_s: f64,
    hint: BranchHint,
) -> Result<Vec<Multipliers>> {
    if alpha_m < 0.0 || alpha_s < 0.0 || !(alpha_m.is_finite() && alpha_s.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "slopes must be non-negative and finite, got ({alpha_m}, {alpha_s})"
        )));
    }
    if alpha_m == 0.0 && alpha_s == 0.0 {
        return Err(Error::InvalidArgument(
            "slopes must not both be zero".into(),
        ));
    }
    let mut raw = Vec::new();
    if hint != BranchHint::CombinedTight {
        raw.push((0.0, alpha_m, alpha_s));
    }
    if hint != BranchHint::CombinedLoose {
        if alpha_m <= alpha_s {
            raw.push((alpha_m, 0.0, alpha_s - alpha_m));
        }
        if alpha_m >= alpha_s {
            raw.push((alpha_s, alpha_m - alpha_s, 0.0));
        }
    }
    let mut out: Vec<Multipliers> = Vec::new();
    for (gc, gm, gs) in raw {
        if out
            .iter()
            .any(|m| m.gamma_c() == gc && m.gamma_m() == gm && m.gamma_s() == gs)
        {
            continue;
        }
        out.push(Multipliers::new(gc, gm, gs)?);
    }
    Ok(out)
}

/// Sweep controls: the planner configuration plus the number of concurrent
/// warm-start chains.
#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub plan: PlanOptions,
    /// 1 runs the whole grid as one warm-start chain; above 1, points are
    /// partitioned into per-(gamma_m, gamma_s) chains that run in parallel.
    /// Output depends only on the grid, options, and seed, never on
    /// scheduling.
    pub jobs: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            plan: PlanOptions::default(),
            jobs: 1,
        }
    }
}

/// Sweep results plus the run-level statistics the CLI reports.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    /// Boundary points in sweep order (decreasing total multiplier);
    /// interval rows contribute two consecutive points.
    pub points: Vec<BoundaryPoint>,
    /// Planner runs whose solution matched no boundary row.
    pub num_infeasible: usize,
    /// Fraction of runs whose combined rate does not exceed the sum of the
    /// channel rates, the pattern a zero combined-rate multiplier needs.
    pub frac_combined_loose: f64,
}

fn boundary_points_of_run(
    spec: &ModelSpec,
    mult: &Multipliers,
    outcome: &crate::planner::PlanOutcome,
) -> (Vec<BoundaryPoint>, bool, bool) {
    let traj = &outcome.trajectory;
    let (i_c, i_m, i_s) = traj.avg_rates();
    let n = spec.horizon as f64;
    let avg = StepReport {
        distortion: traj.avg_distortion(),
        i_c,
        i_m,
        i_s,
        entropy_q: traj.reports.iter().map(|r| r.entropy_q).sum::<f64>() / n,
        lagrangian: traj.total_cost,
    };
    let class = classify_regime(&avg, mult);
    let infeasible = class.regime.is_none();
    let loose = i_c <= i_m + i_s + RATE_COND_TOL;
    let points = class
        .rate_points
        .iter()
        .map(|&(r_m, r_s)| BoundaryPoint {
            mult: mult.clone(),
            r_m,
            r_s,
            i_c,
            i_m,
            i_s,
            distortion: avg.distortion,
            lagrangian: avg.lagrangian,
            regime: class.regime,
            subgradient: class.subgradient,
            converged: outcome.converged,
            iterations: outcome.outer_iterations,
        })
        .collect();
    (points, infeasible, loose)
}

/// Run a warm-start chain over one ordered slice of the grid.
fn run_chain(
    spec: &ModelSpec,
    grid: &[Multipliers],
    order: &[usize],
    opts: &SweepOptions,
) -> Result<Vec<(usize, Vec<BoundaryPoint>, bool, bool)>> {
    let mut results = Vec::with_capacity(order.len());
    let mut warm: Option<Vec<StepPolicy>> = None;
    for &idx in order {
        let mult = &grid[idx];
        let outcome = plan(spec, mult, &opts.plan, warm.as_deref())?;
        let (points, infeasible, loose) = boundary_points_of_run(spec, mult, &outcome);
        warm = Some(outcome.trajectory.policies.clone());
        results.push((idx, points, infeasible, loose));
    }
    Ok(results)
}

/// Solve every grid point and map it onto the boundary.
///
/// Points are solved in order of decreasing total multiplier so each run
/// warm-starts from a smoother solution. With multiple jobs the grid splits
/// into independent chains sharing a (gamma_m, gamma_s) pair; output order
/// is the global multiplier order either way.
pub fn sweep(spec: &ModelSpec, grid: &[Multipliers], opts: &SweepOptions) -> Result<SweepOutcome> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("sweep grid is empty".into()));
    }
    if opts.jobs == 0 {
        return Err(Error::InvalidArgument("jobs must be at least 1".into()));
    }
    for mult in grid {
        mult.require_positive_gamma()?;
    }
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| {
        grid[b]
            .gamma()
            .partial_cmp(&grid[a].gamma())
            .unwrap()
            .then(a.cmp(&b))
    });
    let chain_results = if opts.jobs == 1 {
        run_chain(spec, grid, &order, opts)?
    } else {
        let mut chains: Vec<((u64, u64), Vec<usize>)> = Vec::new();
        for &idx in &order {
            let key = (grid[idx].gamma_m().to_bits(), grid[idx].gamma_s().to_bits());
            match chains.iter_mut().find(|(k, _)| *k == key) {
                Some((_, members)) => members.push(idx),
                None => chains.push((key, vec![idx])),
            }
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))?;
        let per_chain: Vec<Result<Vec<_>>> = pool.install(|| {
            chains
                .par_iter()
                .map(|(_, members)| run_chain(spec, grid, members, opts))
                .collect()
        });
        let mut merged = Vec::with_capacity(grid.len());
        for chain in per_chain {
            merged.extend(chain?);
        }
        merged
    };
    // Re-emit in the global sweep order regardless of chain layout.
    let mut by_index: Vec<Option<(Vec<BoundaryPoint>, bool, bool)>> = vec![None; grid.len()];
    for (idx, points, infeasible, loose) in chain_results {
        by_index[idx] = Some((points, infeasible, loose));
    }
    let mut points = Vec::new();
    let mut num_infeasible = 0;
    let mut num_loose = 0;
    for &idx in &order {
        let (run_points, infeasible, loose) = by_index[idx]
            .take()
            .expect("every grid index is solved exactly once");
        points.extend(run_points);
        num_infeasible += usize::from(infeasible);
        num_loose += usize::from(loose);
    }
    Ok(SweepOutcome {
        points,
        num_infeasible,
        frac_combined_loose: num_loose as f64 / grid.len() as f64,
    })
}

/// Distortion lower bounds at one rate target, assembled from the three
/// two-constraint relaxations.
#[derive(Debug, Clone, Copy)]
pub struct RateCellBound {
    pub r_m: f64,
    pub r_s: f64,
    /// Best bound from solutions priced only on the channel rates (zero
    /// combined-rate multiplier).
    pub keep_channels: Option<f64>,
    /// Best bound from solutions priced on the combined and sensing rates
    /// (zero memory multiplier).
    pub keep_combined_sensing: Option<f64>,
    /// Best bound from solutions priced on the combined and memory rates
    /// (zero sensing multiplier).
    pub keep_combined_memory: Option<f64>,
    /// Highest of the three; the boundary itself when the relaxations are
    /// swept densely enough.
    pub assembled: Option<f64>,
}

/// Assemble relaxation boundaries at the given rate targets from swept
/// points.
///
/// Each converged point contributes, to every relaxation its multiplier
/// pattern fits, the bound `lagrangian - price of the target rates`; the
/// per-relaxation bound at a target is the best such value. Non-converged
/// points are skipped, since only a true minimum prices a valid bound.
pub fn corollary3_check(points: &[BoundaryPoint], targets: &[(f64, f64)]) -> Vec<RateCellBound> {
    targets
        .iter()
        .map(|&(r_m, r_s)| {
            let mut keep_channels: Option<f64> = None;
            let mut keep_combined_sensing: Option<f64> = None;
            let mut keep_combined_memory: Option<f64> = None;
            for p in points {
                if !p.converged {
                    continue;
                }
                let (gc, gm, gs) = (p.mult.gamma_c(), p.mult.gamma_m(), p.mult.gamma_s());
                let bound = p.lagrangian - gc * (r_m + r_s) - gm * r_m - gs * r_s;
                let fold = |slot: &mut Option<f64>| {
                    *slot = Some(slot.map_or(bound, |b: f64| b.max(bound)));
                };
                if gc == 0.0 {
                    fold(&mut keep_channels);
                }
                if gm == 0.0 {
                    fold(&mut keep_combined_sensing);
                }
                if gs == 0.0 {
                    fold(&mut keep_combined_memory);
                }
            }
            let assembled = [keep_channels, keep_combined_sensing, keep_combined_memory]
                .into_iter()
                .flatten()
                .fold(None, |acc: Option<f64>, b| {
                    Some(acc.map_or(b, |a| a.max(b)))
                });
            RateCellBound {
                r_m,
                r_s,
                keep_channels,
                keep_combined_sensing,
                keep_combined_memory,
                assembled,
            }
        })
        .collect()
}
