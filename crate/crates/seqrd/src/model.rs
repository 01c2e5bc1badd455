//! Problem data: state spaces, kernels, costs, beliefs, policies, multipliers.
//!
//! A model is a hidden Markov chain over world states `w` with an observation
//! kernel, plus a finite memory alphabet `m` and a per-step cost `d(w, m)`.
//! Everything downstream (solvers, sweeps, oracles) consumes a validated
//! [`ModelSpec`] and the small value types defined here. All distributions
//! are dense `f64` tables; all information quantities are in nats.
//!
//! Conventions fixed here and relied on everywhere else:
//!
//! * `trans[w, w']` is the row-stochastic transition kernel, `obs[w, o]` the
//!   row-stochastic observation kernel, `cost[w, m]` the cost table.
//! * A joint belief is a distribution over (previous memory, current world).
//! * A step policy `q[m, o, m']` gives the distribution of the next memory
//!   state for each (previous memory, observation) pair; each such slice is a
//!   distribution on its own.
//! * Models are serialized as a single JSON document with numbers printed at
//!   17 significant digits, which round-trips every `f64` exactly.

use ndarray::{Array1, Array2, Array3, ArrayView1};
use rand::Rng;
use serde::Deserialize;
use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

/// Tolerance for "rows sum to one" checks on kernels and init vectors.
const ROW_SUM_TOL: f64 = 1e-12;
/// Tolerance for total belief mass.
const BELIEF_MASS_TOL: f64 = 1e-10;
/// Tolerance for policy slice normalization.
const POLICY_SLICE_TOL: f64 = 1e-12;

/// A passive POMDP instance: world chain, observation kernel, memory alphabet,
/// cost table, and horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub num_world: usize,
    pub num_obs: usize,
    pub num_mem: usize,
    pub horizon: usize,
    /// Distribution of the first world state.
    pub init_world: Array1<f64>,
    /// Distribution of the memory state before the first observation.
    pub init_mem: Array1<f64>,
    /// `trans[w, w']`: probability the world moves from `w` to `w'`.
    pub trans: Array2<f64>,
    /// `obs[w, o]`: probability of observing `o` in world state `w`.
    pub obs: Array2<f64>,
    /// `cost[w, m]`: cost of holding memory `m` while the world is in `w`.
    pub cost: Array2<f64>,
}

impl ModelSpec {
    /// Checks dimensions, row stochasticity, and cost finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.num_world == 0 || self.num_obs == 0 || self.num_mem == 0 {
            return Err(Error::InvalidArgument(
                "state space sizes must be at least 1".into(),
            ));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        check_dims("trans", self.trans.dim(), (self.num_world, self.num_world))?;
        check_dims("obs", self.obs.dim(), (self.num_world, self.num_obs))?;
        check_dims("cost", self.cost.dim(), (self.num_world, self.num_mem))?;
        if self.init_world.len() != self.num_world {
            return Err(dim_err(
                "init_world",
                format!("length {}", self.num_world),
                format!("length {}", self.init_world.len()),
            ));
        }
        if self.init_mem.len() != self.num_mem {
            return Err(dim_err(
                "init_mem",
                format!("length {}", self.num_mem),
                format!("length {}", self.init_mem.len()),
            ));
        }
        check_stochastic_rows("trans", &self.trans)?;
        check_stochastic_rows("obs", &self.obs)?;
        check_distribution("init_world", self.init_world.view())?;
        check_distribution("init_mem", self.init_mem.view())?;
        for ((w, m), &c) in self.cost.indexed_iter() {
            if !c.is_finite() {
                return Err(Error::NonFinite(format!("cost[{w}, {m}]")));
            }
        }
        Ok(())
    }

    /// Joint belief at the first step: independent product of `init_mem` and
    /// `init_world`.
    pub fn initial_belief(&self) -> JointBelief {
        JointBelief::product(self.init_mem.view(), self.init_world.view())
    }
}

fn check_dims(name: &str, found: (usize, usize), expected: (usize, usize)) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(dim_err(
            name,
            format!("{}x{}", expected.0, expected.1),
            format!("{}x{}", found.0, found.1),
        ))
    }
}

fn dim_err(context: &str, expected: String, found: String) -> Error {
    Error::DimensionMismatch {
        context: context.into(),
        expected,
        found,
    }
}

fn check_stochastic_rows(name: &str, table: &Array2<f64>) -> Result<()> {
    for (row, r) in table.rows().into_iter().enumerate() {
        for &v in r.iter() {
            if v < 0.0 {
                return Err(Error::NegativeEntry {
                    context: format!("{name} row {row}"),
                    value: v,
                });
            }
        }
        let sum: f64 = r.sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::NonStochasticRow {
                matrix: name.into(),
                row,
                sum,
            });
        }
    }
    Ok(())
}

fn check_distribution(name: &str, v: ArrayView1<f64>) -> Result<()> {
    for &x in v.iter() {
        if x < 0.0 {
            return Err(Error::NegativeEntry {
                context: name.into(),
                value: x,
            });
        }
    }
    let sum = v.sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::NonStochasticRow {
            matrix: name.into(),
            row: 0,
            sum,
        });
    }
    Ok(())
}

/// Joint distribution of (previous memory, current world state).
///
/// Mass sums to one within `1e-10`; entries are nonnegative. Immutable after
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct JointBelief {
    table: Array2<f64>,
}

impl JointBelief {
    pub fn new(table: Array2<f64>) -> Result<Self> {
        for ((m, w), &v) in table.indexed_iter() {
            if v < 0.0 {
                return Err(Error::NegativeEntry {
                    context: format!("belief[{m}, {w}]"),
                    value: v,
                });
            }
        }
        let mass = table.sum();
        if (mass - 1.0).abs() > BELIEF_MASS_TOL {
            return Err(Error::NotNormalized {
                context: "joint belief".into(),
                mass,
            });
        }
        Ok(Self { table })
    }

    /// Uniform joint over all (memory, world) pairs.
    pub fn uniform(num_mem: usize, num_world: usize) -> Self {
        let p = 1.0 / (num_mem * num_world) as f64;
        Self {
            table: Array2::from_elem((num_mem, num_world), p),
        }
    }

    /// Independent product of a memory distribution and a world distribution.
    pub fn product(mem: ArrayView1<f64>, world: ArrayView1<f64>) -> Self {
        let mut table = Array2::zeros((mem.len(), world.len()));
        for (m, &pm) in mem.iter().enumerate() {
            for (w, &pw) in world.iter().enumerate() {
                table[[m, w]] = pm * pw;
            }
        }
        Self { table }
    }

    pub fn table(&self) -> &Array2<f64> {
        &self.table
    }

    pub fn num_mem(&self) -> usize {
        self.table.nrows()
    }

    pub fn num_world(&self) -> usize {
        self.table.ncols()
    }
}

/// Stochastic memory-update rule for one step: `q[m, o, m']` is the
/// probability of moving the memory to `m'` after observing `o` in memory
/// state `m`. Every `(m, o)` slice is a distribution within `1e-12`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPolicy {
    table: Array3<f64>,
}

impl StepPolicy {
    pub fn new(table: Array3<f64>) -> Result<Self> {
        let (nm, no, _) = table.dim();
        for ((m, o, m2), &v) in table.indexed_iter() {
            if v < 0.0 {
                return Err(Error::NegativeEntry {
                    context: format!("policy[{m}, {o}, {m2}]"),
                    value: v,
                });
            }
        }
        for m in 0..nm {
            for o in 0..no {
                let sum: f64 = table.slice(ndarray::s![m, o, ..]).sum();
                if (sum - 1.0).abs() > POLICY_SLICE_TOL {
                    return Err(Error::NotNormalized {
                        context: format!("policy slice (m={m}, o={o})"),
                        mass: sum,
                    });
                }
            }
        }
        Ok(Self { table })
    }

    /// Uniform next-memory distribution in every slice.
    pub fn uniform(num_mem: usize, num_obs: usize) -> Self {
        let p = 1.0 / num_mem as f64;
        Self {
            table: Array3::from_elem((num_mem, num_obs, num_mem), p),
        }
    }

    /// Every slice drawn from a flat Dirichlet (concentration 1), i.e.
    /// uniformly on the simplex.
    pub fn random_dirichlet<R: Rng>(num_mem: usize, num_obs: usize, rng: &mut R) -> Self {
        let mut table = Array3::zeros((num_mem, num_obs, num_mem));
        for m in 0..num_mem {
            for o in 0..num_obs {
                let mut sum = 0.0;
                let mut gammas = vec![0.0; num_mem];
                for g in gammas.iter_mut() {
                    // Exp(1) draws normalized give a flat Dirichlet sample.
                    let u: f64 = rng.random();
                    *g = -(1.0 - u).ln();
                    sum += *g;
                }
                for (m2, g) in gammas.iter().enumerate() {
                    table[[m, o, m2]] = if sum > 0.0 {
                        g / sum
                    } else {
                        1.0 / num_mem as f64
                    };
                }
            }
        }
        Self { table }
    }

    pub fn table(&self) -> &Array3<f64> {
        &self.table
    }

    /// The next-memory distribution for a given (memory, observation) pair.
    pub fn slice(&self, m: usize, o: usize) -> ArrayView1<'_, f64> {
        self.table.slice(ndarray::s![m, o, ..])
    }

    pub fn num_mem(&self) -> usize {
        self.table.dim().0
    }

    pub fn num_obs(&self) -> usize {
        self.table.dim().1
    }

    /// Largest absolute entry difference against another policy of the same
    /// shape, restricted to the given slices.
    pub fn max_abs_diff_on(&self, other: &StepPolicy, slices: &[(usize, usize)]) -> f64 {
        let mut d: f64 = 0.0;
        for &(m, o) in slices {
            for m2 in 0..self.num_mem() {
                d = d.max((self.table[[m, o, m2]] - other.table[[m, o, m2]]).abs());
            }
        }
        d
    }
}

/// The three marginals of the next memory state induced by a belief and a
/// step policy: unconditional, conditioned on the observation, and
/// conditioned on the previous memory. Rows for zero-probability conditions
/// are filled uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    /// `joint_free[m']`.
    pub joint_free: Array1<f64>,
    /// `given_obs[o, m']`.
    pub given_obs: Array2<f64>,
    /// `given_mem[m, m']`.
    pub given_mem: Array2<f64>,
}

/// Nonnegative Lagrange multipliers for the three information-rate
/// constraints: combined, memory, and sensing. Their sum sets the softmax
/// temperature of the policy update, so every solver entry point requires it
/// to be positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Multipliers {
    gamma_c: f64,
    gamma_m: f64,
    gamma_s: f64,
    gamma: f64,
}

impl Multipliers {
    pub fn new(gamma_c: f64, gamma_m: f64, gamma_s: f64) -> Result<Self> {
        for (name, v) in [
            ("gamma_c", gamma_c),
            ("gamma_m", gamma_m),
            ("gamma_s", gamma_s),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidMultipliers(format!(
                    "{name} = {v}, must be finite and nonnegative"
                )));
            }
        }
        Ok(Self {
            gamma_c,
            gamma_m,
            gamma_s,
            gamma: gamma_c + gamma_m + gamma_s,
        })
    }

    pub fn gamma_c(&self) -> f64 {
        self.gamma_c
    }

    pub fn gamma_m(&self) -> f64 {
        self.gamma_m
    }

    pub fn gamma_s(&self) -> f64 {
        self.gamma_s
    }

    /// Total multiplier weight, the softmax temperature.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Errors unless the total weight is strictly positive.
    pub fn require_positive_gamma(&self) -> Result<()> {
        if self.gamma > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidMultipliers(
                "total multiplier weight must be positive".into(),
            ))
        }
    }
}

/// Expected cost-to-go table nu[m, w'] indexed by the memory state chosen at
/// some step and the world state of the next step.
#[derive(Debug, Clone, PartialEq)]
pub struct CostToGoVector {
    pub table: Array2<f64>,
}

impl CostToGoVector {
    pub fn zeros(num_mem: usize, num_world: usize) -> Self {
        Self {
            table: Array2::zeros((num_mem, num_world)),
        }
    }
}

// ── Built-in instances ──────────────────────────────────────────────────────

/// Two-state world with a symmetric sticky chain (stay probability 0.8), a
/// binary symmetric observation channel (accuracy 0.8), two memory states,
/// 0/1 mismatch cost, and horizon 30. The uniform initial world distribution
/// is the stationary distribution of the chain.
pub fn build_symmetric_channel() -> ModelSpec {
    let spec = ModelSpec {
        num_world: 2,
        num_obs: 2,
        num_mem: 2,
        horizon: 30,
        init_world: Array1::from_elem(2, 0.5),
        init_mem: Array1::from_elem(2, 0.5),
        trans: ndarray::arr2(&[[0.8, 0.2], [0.2, 0.8]]),
        obs: ndarray::arr2(&[[0.8, 0.2], [0.2, 0.8]]),
        cost: ndarray::arr2(&[[0.0, 1.0], [1.0, 0.0]]),
    };
    spec.validate().expect("symmetric channel instance is valid");
    spec
}

/// Number of horses in the betting instance.
pub const KELLY_HORSES: usize = 3;
/// Fitness levels per horse.
pub const KELLY_LEVELS: usize = 3;

/// Decodes a world (or memory) index into per-horse fitness values in
/// `1..=3`. The index is little-endian base 3 over horses: horse 0 is the
/// least significant digit.
pub fn kelly_fitness(index: usize) -> [usize; KELLY_HORSES] {
    let mut f = [0; KELLY_HORSES];
    let mut rest = index;
    for fi in f.iter_mut() {
        *fi = rest % KELLY_LEVELS + 1;
        rest /= KELLY_LEVELS;
    }
    f
}

/// Inverse of [`kelly_fitness`].
pub fn kelly_fitness_index(f: &[usize; KELLY_HORSES]) -> usize {
    f.iter()
        .rev()
        .fold(0, |acc, &fi| acc * KELLY_LEVELS + (fi - 1))
}

/// Decodes an observation index into the (winner, loser) horse pair of the
/// observed side race. Observations enumerate the unordered pairs
/// (0,1), (0,2), (1,2) in that order, two indices per pair; the low bit is 0
/// when the lower-numbered horse wins.
pub fn kelly_obs_pair(index: usize) -> (usize, usize) {
    const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];
    let (a, b) = PAIRS[index / 2];
    if index % 2 == 0 {
        (a, b)
    } else {
        (b, a)
    }
}

/// Betting instance: three horses with fitness in `1..=3` drifting by one
/// level with probability 0.1 per step, observations are the outcome of a
/// uniformly chosen two-horse side race whose winner follows a softmax of the
/// true fitness, and memory states are presumed fitness vectors. Bets are
/// proportional to `exp` of presumed fitness and the cost is the negated
/// expected log return at even odds, so lower cost means faster bankroll
/// growth. Horizon 10.
pub fn build_kelly() -> ModelSpec {
    let n = KELLY_LEVELS.pow(KELLY_HORSES as u32);
    let num_obs = 2 * KELLY_HORSES * (KELLY_HORSES - 1) / 2;

    // Per-horse fitness random walk on {1, 2, 3}: +/-1 with probability 0.1
    // where possible, staying with the remaining mass.
    let mut step = Array2::zeros((KELLY_LEVELS, KELLY_LEVELS));
    for f in 0..KELLY_LEVELS {
        if f > 0 {
            step[[f, f - 1]] = 0.1;
        }
        if f + 1 < KELLY_LEVELS {
            step[[f, f + 1]] = 0.1;
        }
        let moves: f64 = step.row(f).sum();
        step[[f, f]] = 1.0 - moves;
    }

    let mut trans = Array2::zeros((n, n));
    for w in 0..n {
        let f = kelly_fitness(w);
        for w2 in 0..n {
            let g = kelly_fitness(w2);
            let mut p = 1.0;
            for i in 0..KELLY_HORSES {
                p *= step[[f[i] - 1, g[i] - 1]];
            }
            trans[[w, w2]] = p;
        }
    }

    let mut obs = Array2::zeros((n, num_obs));
    for w in 0..n {
        let f = kelly_fitness(w);
        for o in 0..num_obs {
            let (win, lose) = kelly_obs_pair(o);
            let ew = (f[win] as f64).exp();
            let el = (f[lose] as f64).exp();
            obs[[w, o]] = ew / (ew + el) / 3.0;
        }
    }

    let mut cost = Array2::zeros((n, n));
    for w in 0..n {
        let f = kelly_fitness(w);
        let weights: Vec<f64> = f.iter().map(|&fi| (fi as f64).exp()).collect();
        let total: f64 = weights.iter().sum();
        for m in 0..n {
            let g = kelly_fitness(m);
            let bw: Vec<f64> = g.iter().map(|&gi| (gi as f64).exp()).collect();
            let bt: f64 = bw.iter().sum();
            let mut d = 0.0;
            for i in 0..KELLY_HORSES {
                let p_win = weights[i] / total;
                let bet = bw[i] / bt;
                d -= p_win * (2.0 * bet).ln();
            }
            cost[[w, m]] = d;
        }
    }

    let spec = ModelSpec {
        num_world: n,
        num_obs,
        num_mem: n,
        horizon: 10,
        init_world: Array1::from_elem(n, 1.0 / n as f64),
        init_mem: Array1::from_elem(n, 1.0 / n as f64),
        trans,
        obs,
        cost,
    };
    spec.validate().expect("betting instance is valid");
    spec
}

// ── Serialization ───────────────────────────────────────────────────────────

/// Formats a float with 17 significant digits, enough to reproduce the exact
/// bit pattern on parse.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn push_vector(out: &mut String, v: ArrayView1<f64>) {
    out.push('[');
    for (i, &x) in v.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&fmt_f64(x));
    }
    out.push(']');
}

fn push_matrix(out: &mut String, m: &Array2<f64>, indent: &str) {
    out.push('[');
    for (i, row) in m.rows().into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push('\n');
        out.push_str(indent);
        out.push_str("  ");
        push_vector(out, row);
    }
    out.push('\n');
    out.push_str(indent);
    out.push(']');
}

/// Renders the model as a JSON document. All numbers carry 17 significant
/// digits so that a load reproduces them exactly.
pub fn model_to_json(spec: &ModelSpec) -> String {
    let mut s = String::new();
    s.push_str("{\n");
    let _ = writeln!(s, "  \"num_world\": {},", spec.num_world);
    let _ = writeln!(s, "  \"num_obs\": {},", spec.num_obs);
    let _ = writeln!(s, "  \"num_mem\": {},", spec.num_mem);
    let _ = writeln!(s, "  \"horizon\": {},", spec.horizon);
    s.push_str("  \"init_world\": ");
    push_vector(&mut s, spec.init_world.view());
    s.push_str(",\n  \"init_mem\": ");
    push_vector(&mut s, spec.init_mem.view());
    s.push_str(",\n  \"trans\": ");
    push_matrix(&mut s, &spec.trans, "  ");
    s.push_str(",\n  \"obs\": ");
    push_matrix(&mut s, &spec.obs, "  ");
    s.push_str(",\n  \"cost\": ");
    push_matrix(&mut s, &spec.cost, "  ");
    s.push_str("\n}\n");
    s
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    num_world: usize,
    num_obs: usize,
    num_mem: usize,
    horizon: usize,
    init_world: Vec<f64>,
    init_mem: Vec<f64>,
    trans: Vec<Vec<f64>>,
    obs: Vec<Vec<f64>>,
    cost: Vec<Vec<f64>>,
}

fn rows_to_array(name: &str, rows: Vec<Vec<f64>>) -> Result<Array2<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(Error::DimensionMismatch {
                context: format!("{name} row {i}"),
                expected: format!("length {ncols}"),
                found: format!("length {}", r.len()),
            });
        }
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((nrows, ncols), flat).map_err(|e| Error::DimensionMismatch {
        context: name.into(),
        expected: format!("{nrows}x{ncols}"),
        found: e.to_string(),
    })
}

/// Parses a model from JSON text and validates it.
pub fn model_from_json(text: &str, origin: &str) -> Result<ModelSpec> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.into(),
        detail: e.to_string(),
    })?;
    let spec = ModelSpec {
        num_world: file.num_world,
        num_obs: file.num_obs,
        num_mem: file.num_mem,
        horizon: file.horizon,
        init_world: Array1::from_vec(file.init_world),
        init_mem: Array1::from_vec(file.init_mem),
        trans: rows_to_array("trans", file.trans)?,
        obs: rows_to_array("obs", file.obs)?,
        cost: rows_to_array("cost", file.cost)?,
    };
    spec.validate()?;
    Ok(spec)
}

/// Writes the model to a JSON file.
pub fn save_model(spec: &ModelSpec, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_json(spec)).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Reads and validates a model from a JSON file.
pub fn load_model(path: &Path) -> Result<ModelSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    model_from_json(&text, &path.display().to_string())
}
