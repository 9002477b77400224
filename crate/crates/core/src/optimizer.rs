//! Cost evaluation and the optimizers: projected quasi-Newton on coefficient
//! boxes, Nelder-Mead with a quadratic penalty, and the multilevel driver that
//! climbs the B-spline ladder.

use crate::bspline::STANDARD_LEVELS;
use crate::control::{
    assemble_controls, coefficient_bounds, refine_coefficients, shape_bounds, split_sine_coefficients, sum_of_sines_controls,
    CoefficientBox, CoefficientVector, ControlBounds, ControlEndpoints, ControlSet, CONTROLS,
};
use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::observables::overlap_with_target;
use crate::solver::{no_observer, step_count, Propagator, SolverConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::sync::{Arc, OnceLock};
use std::time::Instant;

/// Sentinel cost of a faulted evaluation, in units of the normalization.
pub const FAULT_COST_FACTOR: f64 = 1e3;

/// One cost value and whether it came from a faulted propagation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub cost: f64,
    pub fault: bool,
}

impl Evaluation {
    pub fn ok(cost: f64) -> Self {
        Self { cost, fault: false }
    }
}

/// `(N₀ - |⟨ψ_d, ψ⟩|)²` with `N₀` the atom number of `target`.
pub fn target_cost(psi: &ComplexField, target: &ComplexField) -> Result<f64> {
    let n0 = target.atom_number()?;
    Ok((n0 - overlap_with_target(psi, target)?).powi(2))
}

/// Something that assigns a cost to a control set.
pub trait ControlObjective {
    fn horizon(&self) -> f64;
    fn endpoints(&self) -> ControlEndpoints;
    fn bounds(&self) -> ControlBounds;
    /// Never fails: faults come back flagged with a sentinel cost.
    fn evaluate(&self, controls: &ControlSet) -> Evaluation;
    /// Cost of the exact linear ramps.
    fn normalization(&self) -> Result<f64>;
}

/// The state-transfer problem: drive `psi0` towards `psi_d` within `T`.
pub struct ProblemSpec {
    propagator: Arc<Propagator>,
    psi0: ComplexField,
    psi_d: ComplexField,
    horizon: f64,
    solver: SolverConfig,
    endpoints: ControlEndpoints,
    bounds: ControlBounds,
    atoms: f64,
    normalization: OnceLock<f64>,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec").field("horizon", &self.horizon).field("atoms", &self.atoms).field("dt", &self.solver.dt).finish()
    }
}

impl ProblemSpec {
    pub fn new(
        propagator: Arc<Propagator>,
        psi0: ComplexField,
        psi_d: ComplexField,
        horizon: f64,
        solver: SolverConfig,
        endpoints: ControlEndpoints,
        bounds: ControlBounds,
    ) -> Result<Self> {
        if !psi0.grid().same_as(propagator.grid()) || !psi_d.grid().same_as(propagator.grid()) {
            return Err(Error::GridMismatch);
        }
        step_count(horizon, solver.dt)?;
        shape_bounds(&bounds, &endpoints)?;
        let (n_start, atoms) = (psi0.atom_number()?, psi_d.atom_number()?);
        if (n_start - atoms).abs() > 1e-9 * atoms {
            return Err(Error::InvalidArgument(format!("initial state holds {n_start} atoms, target holds {atoms}")));
        }
        Ok(Self { propagator, psi0, psi_d, horizon, solver, endpoints, bounds, atoms, normalization: OnceLock::new() })
    }

    pub fn propagator(&self) -> &Arc<Propagator> {
        &self.propagator
    }

    pub fn initial_state(&self) -> &ComplexField {
        &self.psi0
    }

    pub fn target_state(&self) -> &ComplexField {
        &self.psi_d
    }

    pub fn solver(&self) -> &SolverConfig {
        &self.solver
    }

    pub fn atoms(&self) -> f64 {
        self.atoms
    }

    /// `ψ(T)` under `controls`.
    pub fn final_state(&self, controls: &ControlSet) -> Result<ComplexField> {
        let config = SolverConfig { record_stride: usize::MAX, ..self.solver };
        let (psi, _) = self.propagator.propagate(&self.psi0, controls, 0.0, self.horizon, &config, &mut no_observer())?;
        Ok(psi)
    }

    /// Unflagged cost; faults are errors.
    pub fn cost_of(&self, controls: &ControlSet) -> Result<f64> {
        target_cost(&self.final_state(controls)?, &self.psi_d)
    }

    /// Cost of coefficient vector `c` on its ladder level.
    pub fn cost(&self, c: &CoefficientVector) -> Result<Evaluation> {
        Ok(self.evaluate(&assemble_controls(c, self.endpoints, self.horizon)?))
    }
}

impl ControlObjective for ProblemSpec {
    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn endpoints(&self) -> ControlEndpoints {
        self.endpoints
    }

    fn bounds(&self) -> ControlBounds {
        self.bounds
    }

    fn evaluate(&self, controls: &ControlSet) -> Evaluation {
        match self.cost_of(controls) {
            Ok(j) if j.is_finite() => Evaluation::ok(j),
            Ok(_) | Err(_) => {
                let norm = self.normalization().unwrap_or(self.atoms * self.atoms);
                Evaluation { cost: FAULT_COST_FACTOR * norm, fault: true }
            }
        }
    }

    fn normalization(&self) -> Result<f64> {
        if let Some(&j) = self.normalization.get() {
            return Ok(j);
        }
        let j = self.cost_of(&ControlSet::linear(self.endpoints, self.horizon)?)?;
        Ok(*self.normalization.get_or_init(|| j))
    }
}

/// One cost evaluation as logged by the optimizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    /// Position in the history, starting at 1.
    pub index: usize,
    pub level: usize,
    pub coefficients: Vec<f64>,
    pub cost: f64,
    pub wall_ms: f64,
    pub fault: bool,
}

/// All evaluations of a run, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceHistory {
    pub records: Vec<EvaluationRecord>,
    /// `(level, index of its first evaluation)`.
    pub level_starts: Vec<(usize, usize)>,
    /// Cost of the linear ramps.
    pub normalization: f64,
}

/// Prefix minimum `J*_k = min_{r ≤ k} J_r`.
pub fn best_so_far(costs: &[f64]) -> Result<Vec<f64>> {
    if costs.is_empty() {
        return Err(Error::EmptyHistory);
    }
    Ok(costs
        .iter()
        .scan(f64::INFINITY, |m, &c| {
            *m = m.min(c);
            Some(*m)
        })
        .collect())
}

impl ConvergenceHistory {
    pub fn new(normalization: f64) -> Self {
        Self { records: Vec::new(), level_starts: Vec::new(), normalization }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn costs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.cost).collect()
    }

    pub fn best_so_far(&self) -> Result<Vec<f64>> {
        best_so_far(&self.costs())
    }

    pub fn best_so_far_normalized(&self) -> Result<Vec<f64>> {
        Ok(self.best_so_far()?.into_iter().map(|j| j / self.normalization).collect())
    }

    /// Lowest-cost record (earliest on ties).
    pub fn best(&self) -> Option<&EvaluationRecord> {
        self.records.iter().fold(None, |b: Option<&EvaluationRecord>, r| match b {
            Some(b) if b.cost <= r.cost => Some(b),
            _ => Some(r),
        })
    }

    fn push(&mut self, level: usize, coefficients: Vec<f64>, e: Evaluation, wall_ms: f64) {
        if self.level_starts.last().map(|l| l.0) != Some(level) {
            self.level_starts.push((level, self.records.len() + 1));
        }
        self.records.push(EvaluationRecord { index: self.records.len() + 1, level, coefficients, cost: e.cost, wall_ms, fault: e.fault });
    }

    /// CSV with columns `k, level, J, J_normalized, best_so_far, fault_flag, wall_ms`;
    /// `best_so_far` is normalized like `J_normalized`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "level", "J", "J_normalized", "best_so_far", "fault_flag", "wall_ms"])?;
        let best = if self.is_empty() { Vec::new() } else { self.best_so_far_normalized()? };
        for (r, b) in self.records.iter().zip(best) {
            w.write_record(&[
                r.index.to_string(),
                r.level.to_string(),
                format!("{}", r.cost),
                format!("{}", r.cost / self.normalization),
                format!("{b}"),
                u8::from(r.fault).to_string(),
                format!("{}", r.wall_ms),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a history CSV; coefficients are not part of the CSV and come back empty.
    pub fn read_csv<R: Read>(input: R, normalization: f64) -> Result<Self> {
        let mut h = Self::new(normalization);
        let mut r = csv::Reader::from_reader(input);
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).ok_or_else(|| Error::InvalidArgument(format!("history row {} is short", row + 1)));
            let bad = |what: &str| Error::InvalidArgument(format!("history row {}: bad {what}", row + 1));
            let index: usize = field(0)?.parse().map_err(|_| bad("k"))?;
            let level: usize = field(1)?.parse().map_err(|_| bad("level"))?;
            let cost: f64 = field(2)?.parse().map_err(|_| bad("J"))?;
            let fault = field(5)? == "1";
            let wall_ms: f64 = field(6)?.parse().map_err(|_| bad("wall_ms"))?;
            if index != h.len() + 1 {
                return Err(bad("index sequence"));
            }
            h.push(level, Vec::new(), Evaluation { cost, fault }, wall_ms);
        }
        Ok(h)
    }
}

/// Finite-difference rule for gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DifferenceScheme {
    /// `n + 1` evaluations, one-sided into the box at active faces.
    Forward,
    /// `2n + 1` evaluations, falling back to one-sided near faces.
    Central,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    ProjectedQuasiNewton,
    NelderMeadPenalty,
}

/// Which optimization to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Projected quasi-Newton up the ladder 1 → 4.
    Multilevel,
    /// Projected quasi-Newton on level 4 from linear ramps.
    #[serde(rename = "direct-level-4")]
    DirectLevel4,
    /// Nelder-Mead with penalty on the sine baseline.
    SumOfSines,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multilevel" => Ok(Self::Multilevel),
            "direct-level-4" => Ok(Self::DirectLevel4),
            "sum-of-sines" => Ok(Self::SumOfSines),
            _ => Err(Error::InvalidArgument(format!("unknown mode {s:?} (multilevel | direct-level-4 | sum-of-sines)"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Multilevel => "multilevel",
            Self::DirectLevel4 => "direct-level-4",
            Self::SumOfSines => "sum-of-sines",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub iters_per_level: usize,
    /// Total cost evaluations, gradient evaluations included.
    pub eval_budget: usize,
    pub fd_step: f64,
    pub difference: DifferenceScheme,
    pub algorithm: Algorithm,
    /// Penalty weight; `None` means `10³ × J_linear`.
    pub penalty_weight: Option<f64>,
    /// Time samples per control for the penalty.
    pub penalty_samples: usize,
    /// Sine terms per control.
    pub sine_terms: usize,
    pub simplex_edge: f64,
    /// Largest coefficient change of an unscaled (steepest-descent) step.
    pub initial_step: f64,
    /// Stop when the projected gradient's largest entry falls below this.
    pub gradient_tolerance: f64,
    /// Finest ladder level.
    pub levels: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            iters_per_level: 15,
            eval_budget: 2500,
            fd_step: 1e-3,
            difference: DifferenceScheme::Forward,
            algorithm: Algorithm::ProjectedQuasiNewton,
            penalty_weight: None,
            penalty_samples: 200,
            sine_terms: 9,
            simplex_edge: 0.1,
            initial_step: 0.1,
            gradient_tolerance: 0.0,
            levels: STANDARD_LEVELS,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eval_budget == 0 {
            return Err(Error::InvalidArgument("evaluation budget must be at least 1".into()));
        }
        if !(self.fd_step > 0.0) || !(self.simplex_edge > 0.0) || !(self.initial_step > 0.0) {
            return Err(Error::InvalidArgument("fd_step, simplex_edge and initial_step must be positive".into()));
        }
        if matches!(self.penalty_weight, Some(w) if !(w > 0.0)) {
            return Err(Error::InvalidArgument("penalty weight must be positive".into()));
        }
        if self.levels == 0 || self.levels > 20 {
            return Err(Error::InvalidArgument(format!("ladder level {} out of range", self.levels)));
        }
        if self.iters_per_level == 0 || self.sine_terms == 0 || self.penalty_samples < 2 {
            return Err(Error::InvalidArgument("iters_per_level, sine_terms and penalty_samples must be positive".into()));
        }
        Ok(())
    }
}

/// Budgeted, logged access to an objective during one level.
pub struct Session<'a> {
    objective: &'a mut dyn FnMut(&[f64]) -> Evaluation,
    history: &'a mut ConvergenceHistory,
    level: usize,
    budget: usize,
}

impl<'a> Session<'a> {
    pub fn new(objective: &'a mut dyn FnMut(&[f64]) -> Evaluation, history: &'a mut ConvergenceHistory, level: usize, budget: usize) -> Self {
        Self { objective, history, level, budget }
    }

    pub fn remaining(&self) -> usize {
        self.budget.saturating_sub(self.history.len())
    }

    /// Evaluates and logs `x`; `None` once the budget is spent.
    pub fn evaluate(&mut self, x: &[f64]) -> Option<Evaluation> {
        if self.remaining() == 0 {
            return None;
        }
        let start = Instant::now();
        let e = (self.objective)(x);
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        self.history.push(self.level, x.to_vec(), e, wall_ms);
        log::debug!("eval {} level {} J = {:e}{}", self.history.len(), self.level, e.cost, if e.fault { " (fault)" } else { "" });
        Some(e)
    }
}

/// Finite-difference gradient and whether any of its evaluations faulted.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub values: Vec<f64>,
    pub fault: bool,
}

/// Gradient at `x` (cost `fx`, already known) with step `h`, never leaving `bounds`.
/// Returns `None` if the budget runs out.
pub fn fd_gradient(
    session: &mut Session<'_>,
    x: &[f64],
    fx: f64,
    bounds: &CoefficientBox,
    h: f64,
    scheme: DifferenceScheme,
) -> Option<Gradient> {
    let mut values = vec![0.0; x.len()];
    let mut fault = false;
    let mut probe = x.to_vec();
    let mut at = |session: &mut Session<'_>, i: usize, xi: f64| -> Option<f64> {
        probe[i] = xi;
        let e = session.evaluate(&probe);
        probe[i] = x[i];
        e.map(|e| {
            fault |= e.fault;
            e.cost
        })
    };
    for i in 0..x.len() {
        let (lo, hi) = (bounds.lower[i], bounds.upper[i]);
        let step = h.min(hi - lo);
        if step <= 0.0 {
            continue;
        }
        let up = x[i] + step <= hi;
        let down = x[i] - step >= lo;
        values[i] = match scheme {
            DifferenceScheme::Central if up && down => {
                let fp = at(session, i, x[i] + step)?;
                let fm = at(session, i, x[i] - step)?;
                (fp - fm) / (2.0 * step)
            }
            _ if up => (at(session, i, x[i] + step)? - fx) / step,
            _ => (fx - at(session, i, x[i] - step)?) / step,
        };
    }
    Some(Gradient { values, fault })
}

/// Why a level ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Iterations,
    Budget,
    Converged,
    LineSearchFailed,
}

/// Final iterate of one optimizer call.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelOutcome {
    pub x: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub stop: StopReason,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 10;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Powell-damped BFGS update of the Hessian approximation `b`.
fn damped_bfgs(b: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>) {
    let bs = &*b * s;
    let sbs = s.dot(&bs);
    if !(sbs > 0.0) {
        return;
    }
    let sy = s.dot(y);
    let theta = if sy >= 0.2 * sbs { 1.0 } else { 0.8 * sbs / (sbs - sy) };
    let r = y * theta + &bs * (1.0 - theta);
    let sr = s.dot(&r);
    if !(sr > 0.0) {
        return;
    }
    *b += &r * r.transpose() / sr - &bs * bs.transpose() / sbs;
}

/// Projected quasi-Newton with damped BFGS curvature and Armijo backtracking
/// along the projected path. Runs `max_iters` iterations (unbounded if `None`)
/// or until the budget is spent.
pub fn projected_quasi_newton(
    session: &mut Session<'_>,
    x0: &[f64],
    bounds: &CoefficientBox,
    max_iters: Option<usize>,
    config: &OptimizerConfig,
) -> LevelOutcome {
    let n = x0.len();
    let mut x = bounds.project(x0);
    let Some(first) = session.evaluate(&x) else {
        return LevelOutcome { x, cost: f64::INFINITY, iterations: 0, stop: StopReason::Budget };
    };
    let mut fx = first.cost;
    let mut b = DMatrix::<f64>::identity(n, n);
    let mut identity = true;
    let mut previous: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut iterations = 0;
    let stop = |x, fx, iterations, stop| LevelOutcome { x, cost: fx, iterations, stop };
    while max_iters.map_or(true, |m| iterations < m) {
        let Some(g) = fd_gradient(session, &x, fx, bounds, config.fd_step, config.difference) else {
            return stop(x, fx, iterations, StopReason::Budget);
        };
        if g.fault {
            b = DMatrix::identity(n, n);
            identity = true;
        } else if let Some((xp, gp)) = previous.take() {
            let s = DVector::from_iterator(n, x.iter().zip(&xp).map(|(a, b)| a - b));
            let y = DVector::from_iterator(n, g.values.iter().zip(&gp).map(|(a, b)| a - b));
            let sy = s.dot(&y);
            if identity && sy > 0.0 {
                b *= y.dot(&y) / sy;
            }
            damped_bfgs(&mut b, &s, &y);
            identity = false;
        }
        let g = g.values;
        let projected_step = x.iter().zip(&g).zip(bounds.lower.iter().zip(&bounds.upper));
        let pg = projected_step.map(|((xi, gi), (l, u))| (xi - (xi - gi).clamp(*l, *u)).abs()).fold(0.0, f64::max);
        if pg <= config.gradient_tolerance {
            return stop(x, fx, iterations, StopReason::Converged);
        }
        iterations += 1;
        let free: Vec<usize> = (0..n)
            .filter(|&i| !((x[i] <= bounds.lower[i] && g[i] > 0.0) || (x[i] >= bounds.upper[i] && g[i] < 0.0)))
            .collect();
        let mut accepted = None;
        for attempt in 0..2 {
            let steepest = identity || attempt == 1;
            let mut d = vec![0.0; n];
            let newton = (!steepest)
                .then(|| {
                    let bff = DMatrix::from_fn(free.len(), free.len(), |r, c| b[(free[r], free[c])]);
                    let rhs = DVector::from_iterator(free.len(), free.iter().map(|&i| -g[i]));
                    bff.cholesky().map(|ch| ch.solve(&rhs))
                })
                .flatten();
            match &newton {
                Some(df) => free.iter().zip(df.iter()).for_each(|(&i, v)| d[i] = *v),
                None => free.iter().for_each(|&i| d[i] = -g[i]),
            }
            if newton.is_some() && dot(&g, &d) >= 0.0 {
                free.iter().for_each(|&i| d[i] = -g[i]);
            }
            let unscaled = steepest || newton.is_none();
            let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if dmax == 0.0 {
                return stop(x, fx, iterations, StopReason::Converged);
            }
            let mut alpha = if unscaled { (config.initial_step / dmax).min(1.0) } else { 1.0 };
            for _ in 0..MAX_BACKTRACKS {
                let trial = bounds.project(&x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect::<Vec<_>>());
                if trial == x {
                    break;
                }
                let Some(e) = session.evaluate(&trial) else {
                    return stop(x, fx, iterations, StopReason::Budget);
                };
                let decrease = dot(&g, &trial.iter().zip(&x).map(|(a, b)| a - b).collect::<Vec<_>>());
                if !e.fault && e.cost <= fx + ARMIJO * decrease {
                    accepted = Some((trial, e.cost));
                    break;
                }
                alpha *= 0.5;
            }
            if accepted.is_some() || steepest {
                break;
            }
            log::debug!("line search failed along the quasi-Newton direction; restarting from steepest descent");
            b = DMatrix::identity(n, n);
            identity = true;
        }
        let Some((xn, fnew)) = accepted else {
            return stop(x, fx, iterations, StopReason::LineSearchFailed);
        };
        previous = Some((x, g));
        x = xn;
        fx = fnew;
    }
    stop(x, fx, iterations, StopReason::Iterations)
}

/// Reflection, expansion, contraction and shrink coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexCoefficients {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
}

impl Default for SimplexCoefficients {
    fn default() -> Self {
        Self { reflection: 1.0, expansion: 2.0, contraction: 0.5, shrink: 0.5 }
    }
}

/// Nelder-Mead from the simplex `x0, x0 + edge·e_i`; runs until the budget
/// is spent or `max_iters` iterations.
pub fn nelder_mead(
    session: &mut Session<'_>,
    x0: &[f64],
    edge: f64,
    coeffs: SimplexCoefficients,
    max_iters: Option<usize>,
) -> LevelOutcome {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let best = |s: &[(Vec<f64>, f64)], iterations, stop| {
        let b = s.iter().fold(None, |m: Option<&(Vec<f64>, f64)>, p| match m {
            Some(m) if m.1 <= p.1 => Some(m),
            _ => Some(p),
        });
        match b {
            Some((x, f)) => LevelOutcome { x: x.clone(), cost: *f, iterations, stop },
            None => LevelOutcome { x: x0.to_vec(), cost: f64::INFINITY, iterations, stop },
        }
    };
    for i in 0..=n {
        let mut v = x0.to_vec();
        if i > 0 {
            v[i - 1] += edge;
        }
        let Some(e) = session.evaluate(&v) else {
            return best(&simplex, 0, StopReason::Budget);
        };
        simplex.push((v, e.cost));
    }
    let mut iterations = 0;
    let lerp = |a: &[f64], b: &[f64], t: f64| a.iter().zip(b).map(|(a, b)| a + t * (b - a)).collect::<Vec<_>>();
    while max_iters.map_or(true, |m| iterations < m) {
        // Stable sort keeps earlier vertices first on ties.
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        iterations += 1;
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|p| p.0[j]).sum::<f64>() / n as f64).collect();
        let (worst, fw) = simplex[n].clone();
        let (fb, fs) = (simplex[0].1, simplex[n - 1].1);
        let eval = |session: &mut Session<'_>, v: Vec<f64>| session.evaluate(&v).map(|e| (v, e.cost));
        let Some(r) = eval(session, lerp(&centroid, &worst, -coeffs.reflection)) else {
            return best(&simplex, iterations, StopReason::Budget);
        };
        if r.1 < fb {
            let Some(e) = eval(session, lerp(&centroid, &worst, -coeffs.reflection * coeffs.expansion)) else {
                simplex[n] = r;
                return best(&simplex, iterations, StopReason::Budget);
            };
            simplex[n] = if e.1 < r.1 { e } else { r };
            continue;
        }
        if r.1 < fs {
            simplex[n] = r;
            continue;
        }
        let outside = r.1 < fw;
        let target = if outside { -coeffs.reflection * coeffs.contraction } else { coeffs.contraction };
        let Some(c) = eval(session, lerp(&centroid, &worst, target)) else {
            return best(&simplex, iterations, StopReason::Budget);
        };
        if c.1 < if outside { r.1 } else { fw } {
            simplex[n] = c;
            continue;
        }
        let anchor = simplex[0].0.clone();
        for k in 1..=n {
            let v = lerp(&anchor, &simplex[k].0, coeffs.shrink);
            let Some(p) = eval(session, v) else {
                return best(&simplex, iterations, StopReason::Budget);
            };
            simplex[k] = p;
        }
    }
    best(&simplex, iterations, StopReason::Iterations)
}

/// Uniform sample in `bounds`.
pub fn sample_in_box(bounds: &CoefficientBox, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    bounds.lower.iter().zip(&bounds.upper).map(|(l, u)| if u > l { rng.gen_range(*l..=*u) } else { *l }).collect()
}

/// Quadratic penalty `Σ_samples Σ_controls violation²` of the normalized shapes.
pub fn shape_penalty(controls: &ControlSet, bounds: &ControlBounds, samples: usize) -> Result<f64> {
    let shape = shape_bounds(bounds, &controls.endpoints)?;
    let mut total = 0.0;
    for j in 0..samples {
        let t = controls.horizon * j as f64 / (samples - 1) as f64;
        // The horizon itself is frozen at 1; sample just inside it.
        let u = controls.normalized(t.min(controls.horizon * (1.0 - 1e-12)))?;
        for (ui, (lo, hi)) in u.iter().zip(shape) {
            let v = (lo - ui).max(ui - hi).max(0.0);
            total += v * v;
        }
    }
    Ok(total)
}

/// Result of an optimization run.
#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub mode: Mode,
    /// Best coefficients and their ladder level (0 for sine coefficients).
    pub coefficients: Vec<f64>,
    pub level: usize,
    pub controls: ControlSet,
    pub cost: f64,
    pub history: ConvergenceHistory,
    pub stops: Vec<(usize, StopReason)>,
}

impl OptimizationResult {
    pub fn normalized_cost(&self) -> f64 {
        self.cost / self.history.normalization
    }
}

fn bspline_objective<'a, P: ControlObjective + ?Sized>(problem: &'a P, level: usize) -> impl FnMut(&[f64]) -> Evaluation + 'a {
    let (e, horizon) = (problem.endpoints(), problem.horizon());
    move |x: &[f64]| {
        let set = CoefficientVector::new(level, x.to_vec()).and_then(|c| assemble_controls(&c, e, horizon));
        match set {
            Ok(set) => problem.evaluate(&set),
            Err(err) => panic!("coefficient vector of the wrong shape reached the objective: {err}"),
        }
    }
}

fn run_levels<P: ControlObjective + ?Sized>(
    problem: &P,
    config: &OptimizerConfig,
    mode: Mode,
    levels: &[usize],
    start: CoefficientVector,
) -> Result<OptimizationResult> {
    config.validate()?;
    let mut history = ConvergenceHistory::new(problem.normalization()?);
    let (e, horizon) = (problem.endpoints(), problem.horizon());
    let mut c = start;
    let mut stops = Vec::new();
    let mut best = (c.clone(), f64::INFINITY);
    for (n, &level) in levels.iter().enumerate() {
        if n > 0 {
            let set = assemble_controls(&best.0, e, horizon)?;
            c = refine_coefficients(&set, level)?;
        }
        let bounds = coefficient_bounds(level, &problem.bounds(), &e)?;
        let last = n + 1 == levels.len();
        let mut objective = bspline_objective(problem, level);
        let mut session = Session::new(&mut objective, &mut history, level, config.eval_budget);
        let out = projected_quasi_newton(&mut session, c.values(), &bounds, (!last).then_some(config.iters_per_level), config);
        log::info!("level {level}: J = {:e} after {} iterations ({:?}), {} evaluations so far", out.cost, out.iterations, out.stop, history.len());
        stops.push((level, out.stop));
        // Gradient probes can beat the final iterate; carry the level's best evaluated point.
        let level_best = history.records.iter().filter(|r| r.level == level && !r.fault).fold(None, |b: Option<&EvaluationRecord>, r| match b {
            Some(b) if b.cost <= r.cost => Some(b),
            _ => Some(r),
        });
        if let Some(r) = level_best {
            best = (CoefficientVector::new(level, r.coefficients.clone())?, r.cost);
        }
        if out.stop == StopReason::Budget {
            break;
        }
    }
    let (c, cost) = best;
    let controls = assemble_controls(&c, e, horizon)?;
    Ok(OptimizationResult { mode, level: c.level(), coefficients: c.into_values(), controls, cost, history, stops })
}

/// Climbs the ladder from level 1 (linear ramps) to `config.levels`, with
/// `iters_per_level` iterations per level and the rest of the budget on the last.
pub fn multilevel_optimize<P: ControlObjective + ?Sized>(problem: &P, config: &OptimizerConfig) -> Result<OptimizationResult> {
    let levels: Vec<usize> = (1..=config.levels).collect();
    run_levels(problem, config, Mode::Multilevel, &levels, CoefficientVector::linear_ramps(1)?)
}

/// Spends the whole budget on one ladder level, starting from linear ramps.
pub fn direct_optimize<P: ControlObjective + ?Sized>(problem: &P, config: &OptimizerConfig, level: usize) -> Result<OptimizationResult> {
    run_levels(problem, config, Mode::DirectLevel4, &[level], CoefficientVector::linear_ramps(level)?)
}

/// Nelder-Mead on `sine_terms` coefficients per control from zero (linear ramps),
/// minimizing `J + penalty`. The history logs the penalized value.
pub fn sum_of_sines_optimize<P: ControlObjective + ?Sized>(problem: &P, config: &OptimizerConfig) -> Result<OptimizationResult> {
    config.validate()?;
    let norm = problem.normalization()?;
    let weight = config.penalty_weight.unwrap_or(1e3 * norm);
    let (e, horizon, bounds) = (problem.endpoints(), problem.horizon(), problem.bounds());
    let sines = |x: &[f64]| split_sine_coefficients(x).and_then(|c| sum_of_sines_controls(&c, e, horizon));
    let mut objective = |x: &[f64]| {
        let set = sines(x).expect("sine vector splits over the controls");
        let penalty = shape_penalty(&set, &bounds, config.penalty_samples).expect("validated bounds");
        let j = problem.evaluate(&set);
        Evaluation { cost: j.cost + weight * penalty, fault: j.fault }
    };
    let mut history = ConvergenceHistory::new(norm);
    let x0 = vec![0.0; CONTROLS * config.sine_terms];
    let mut session = Session::new(&mut objective, &mut history, 0, config.eval_budget);
    let out = nelder_mead(&mut session, &x0, config.simplex_edge, SimplexCoefficients::default(), None);
    log::info!("sum of sines: J = {:e} after {} iterations, {} evaluations", out.cost, out.iterations, history.len());
    let controls = sines(&out.x)?;
    Ok(OptimizationResult { mode: Mode::SumOfSines, level: 0, coefficients: out.x, controls, cost: out.cost, history, stops: vec![(0, out.stop)] })
}

/// Dispatches on `mode`.
pub fn optimize<P: ControlObjective + ?Sized>(problem: &P, config: &OptimizerConfig, mode: Mode) -> Result<OptimizationResult> {
    match mode {
        Mode::Multilevel => multilevel_optimize(problem, config),
        Mode::DirectLevel4 => direct_optimize(problem, config, config.levels),
        Mode::SumOfSines => sum_of_sines_optimize(problem, config),
    }
}
