//! Direct-method maximization of the truncated functional.
//!
//! The truncated objective `J(x) = Σ ν_i L(t_i, x^ρ_i, x^∇_i, z_i)` over
//! `(a, T]` is maximized over the free trajectory values. [`direct_solve`]
//! runs a limited-memory quasi-Newton ascent on central finite-difference
//! gradients; [`brute_force`] enumerates a finite value grid and serves as an
//! oracle on tiny instances. [`horizon_study`] repeats the solve for several
//! truncations and records residuals and transversality quantities.

use std::collections::VecDeque;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::expr::{Env, EvalError, Var};
use crate::nabla::NeumaierSum;
use crate::timescale::ScaleError;
use crate::variational::{self, Evaluation, Problem, Trajectory, VariationalError, EL_CHECK_START};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Variational(#[from] VariationalError),
    #[error(transparent)]
    Scale(#[from] ScaleError),
    #[error("objective is not finite when perturbing x{component}(t = {t}): {detail}")]
    NonFinite { t: f64, component: usize, detail: String },
    #[error("enumeration needs {count:.3e} evaluations, above the limit of 1e7")]
    EnumerationGuard { count: f64 },
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum TerminalMode {
    #[default]
    Free,
    /// Terminal value per state component.
    Pinned(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub t_trunc: f64,
    pub terminal: TerminalMode,
    pub max_iters: usize,
    pub step_init: f64,
    pub grad_tol: f64,
    pub seed: u64,
}

impl SolveOptions {
    pub fn new(t_trunc: f64) -> Self {
        SolveOptions {
            t_trunc,
            terminal: TerminalMode::Free,
            max_iters: 5000,
            step_init: 1.0,
            grad_tol: 1e-9,
            seed: 0,
        }
    }

    pub fn pinned(mut self, value: Vec<f64>) -> Self {
        self.terminal = TerminalMode::Pinned(value);
        self
    }

    fn validate(&self, p: &Problem) -> Result<usize, SolverError> {
        let it = p.time_scale().index_of(self.t_trunc)?;
        if it == 0 {
            return Err(SolverError::InvalidOptions("T_trunc must lie above the minimum".into()));
        }
        if self.max_iters == 0 || !(self.step_init > 0.0) || !(self.grad_tol > 0.0) {
            return Err(SolverError::InvalidOptions(
                "max_iters, step_init and grad_tol must be positive".into(),
            ));
        }
        if let TerminalMode::Pinned(v) = &self.terminal {
            if v.len() != p.dim() || v.iter().any(|x| !x.is_finite()) {
                return Err(SolverError::InvalidOptions(format!(
                    "pinned terminal value needs {} finite entries",
                    p.dim()
                )));
            }
        }
        Ok(it)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIterations,
    /// No ascent step could be found; the iterate sits at the noise floor.
    LineSearch,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub trajectory: Trajectory,
    /// `∫_a^{T_trunc} L` with `L` as given.
    pub objective: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub stop: StopReason,
    /// Maximized objective after every accepted step, starting at the initial guess.
    pub history: Vec<f64>,
}

/// The truncated objective as a function of raw trajectory values.
struct Discrete<'a> {
    p: &'a Problem,
    it: usize,
    n: usize,
    uses_z: bool,
}

enum TermError {
    Eval(EvalError),
    NonFinite,
}

impl<'a> Discrete<'a> {
    fn new(p: &'a Problem, it: usize) -> Self {
        Discrete {
            p,
            it,
            n: p.dim(),
            uses_z: p.effective_lagrangian().variables().contains(&Var::Z),
        }
    }

    /// `(ν_i L_i, z_i)` from the previous and current state rows.
    fn term(
        &self,
        i: usize,
        prev: &[f64],
        cur: &[f64],
        z_prev: f64,
        v: &mut [f64],
    ) -> Result<(f64, f64), TermError> {
        let ts = self.p.time_scale();
        let step = ts.step_at(i);
        let t = ts.point(i);
        for k in 0..self.n {
            v[k] = (cur[k] - prev[k]) / step;
        }
        let xr = if ts.is_left_scattered_at(i) { prev } else { cur };
        let z = if self.uses_z {
            let g = self
                .p
                .constraint()
                .eval(&Env::new(t, xr, v, 0.0))
                .map_err(TermError::Eval)?;
            z_prev + step * g
        } else {
            0.0
        };
        let l = self
            .p
            .effective_lagrangian()
            .eval(&Env::new(t, xr, v, z))
            .map_err(TermError::Eval)?;
        let term = step * l;
        if term.is_finite() && z.is_finite() {
            Ok((term, z))
        } else {
            Err(TermError::NonFinite)
        }
    }

    /// Terms `1..=it` and the running `z` after each, or the failing index.
    fn terms(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>), (usize, TermError)> {
        let n = self.n;
        let mut terms = vec![0.0; self.it + 1];
        let mut zs = vec![0.0; self.it + 1];
        let mut v = vec![0.0; n];
        for i in 1..=self.it {
            let (term, z) = self
                .term(i, &x[(i - 1) * n..i * n], &x[i * n..(i + 1) * n], zs[i - 1], &mut v)
                .map_err(|e| (i, e))?;
            terms[i] = term;
            zs[i] = z;
        }
        Ok((terms, zs))
    }

    fn objective(&self, x: &[f64]) -> Option<f64> {
        self.terms(x)
            .ok()
            .map(|(t, _)| t.into_iter().collect::<NeumaierSum>().value())
    }

    /// Last term index affected by changing row `i`.
    fn reach(&self, i: usize) -> usize {
        if self.uses_z {
            self.it
        } else {
            (i + 1).min(self.it)
        }
    }

    /// Sum of terms `i..=reach(i)` with row `i` replaced by the current `x`.
    fn partial(&self, x: &[f64], i: usize, zs: &[f64], v: &mut [f64]) -> Result<Vec<f64>, TermError> {
        let n = self.n;
        let mut z = zs[i - 1];
        let mut out = Vec::with_capacity(self.reach(i) - i + 1);
        for j in i..=self.reach(i) {
            let (term, zj) = self.term(j, &x[(j - 1) * n..j * n], &x[j * n..(j + 1) * n], z, v)?;
            out.push(term);
            z = zj;
        }
        Ok(out)
    }
}

struct Coords {
    /// `(row, component)` of every free coordinate.
    list: Vec<(usize, usize)>,
}

impl Coords {
    fn new(it: usize, n: usize, pinned: bool) -> Self {
        let last = if pinned { it - 1 } else { it };
        Coords {
            list: (1..=last).flat_map(|i| (0..n).map(move |k| (i, k))).collect(),
        }
    }

    fn gather(&self, x: &[f64], n: usize) -> Vec<f64> {
        self.list.iter().map(|&(i, k)| x[i * n + k]).collect()
    }

    fn scatter(&self, y: &[f64], x: &mut [f64], n: usize) {
        for (&(i, k), &val) in self.list.iter().zip(y) {
            x[i * n + k] = val;
        }
    }
}

struct Ascent<'a> {
    d: Discrete<'a>,
    coords: Coords,
    x: Vec<f64>,
}

impl Ascent<'_> {
    fn fail(&self, i: usize, k: usize, e: TermError) -> SolverError {
        let t = self.d.p.time_scale().point(i);
        let detail = match e {
            TermError::Eval(err) => err.to_string(),
            TermError::NonFinite => "non-finite value".into(),
        };
        SolverError::NonFinite {
            t,
            component: k + 1,
            detail,
        }
    }

    /// Central differences per coordinate, summed over the affected terms only.
    fn gradient(&mut self, zs: &[f64]) -> Result<Vec<f64>, SolverError> {
        let n = self.d.n;
        let mut v = vec![0.0; n];
        let mut g = Vec::with_capacity(self.coords.list.len());
        for c in 0..self.coords.list.len() {
            let (i, k) = self.coords.list[c];
            let idx = i * n + k;
            let x0 = self.x[idx];
            let h = 1e-6 * (1.0 + x0.abs());
            self.x[idx] = x0 + h;
            let plus = self.d.partial(&self.x, i, zs, &mut v);
            self.x[idx] = x0 - h;
            let minus = self.d.partial(&self.x, i, zs, &mut v);
            self.x[idx] = x0;
            let (plus, minus) = match (plus, minus) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => return Err(self.fail(i, k, e)),
            };
            let diff: NeumaierSum = plus.iter().zip(&minus).map(|(a, b)| a - b).collect();
            g.push(diff.value() / ((x0 + h) - (x0 - h)));
        }
        Ok(g)
    }

    /// Negated second differences, used as a diagonal curvature scale.
    fn curvature(&mut self, zs: &[f64], terms: &[f64]) -> Result<Vec<f64>, SolverError> {
        let n = self.d.n;
        let mut v = vec![0.0; n];
        let mut out = Vec::with_capacity(self.coords.list.len());
        for c in 0..self.coords.list.len() {
            let (i, k) = self.coords.list[c];
            let idx = i * n + k;
            let x0 = self.x[idx];
            let h = 1e-4 * (1.0 + x0.abs());
            self.x[idx] = x0 + h;
            let plus = self.d.partial(&self.x, i, zs, &mut v);
            self.x[idx] = x0 - h;
            let minus = self.d.partial(&self.x, i, zs, &mut v);
            self.x[idx] = x0;
            let (plus, minus) = match (plus, minus) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => return Err(self.fail(i, k, e)),
            };
            let second: NeumaierSum = plus
                .iter()
                .zip(&minus)
                .zip(&terms[i..])
                .map(|((a, b), t0)| a - 2.0 * t0 + b)
                .collect();
            out.push(-second.value() / (h * h));
        }
        let positive: Vec<f64> = out.iter().map(|d| d.abs()).filter(|d| *d > 0.0).collect();
        let fallback = if positive.is_empty() {
            1.0
        } else {
            positive.iter().fold(f64::INFINITY, |a, &b| a.min(b))
        };
        Ok(out
            .into_iter()
            .map(|d| if d.abs() > 0.0 { d.abs() } else { fallback })
            .collect())
    }

    fn objective_at(&mut self, y: &[f64]) -> Option<f64> {
        let n = self.d.n;
        self.coords.scatter(y, &mut self.x, n);
        self.d.objective(&self.x)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Initial guess: `x_a` everywhere with a small seeded jitter on interior
/// rows, terminal set when pinned.
fn initial_guess(p: &Problem, it: usize, opts: &SolveOptions) -> Vec<f64> {
    let n = p.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<f64> = (0..=it).flat_map(|_| p.x_a().iter().copied()).collect();
    // the free terminal row is left unjittered: on a left-scattered horizon
    // it only enters through x^∇, and may not enter at all
    for v in x.iter_mut().take(it * n).skip(n) {
        *v += rng.gen_range(-1e-2..1e-2);
    }
    if let TerminalMode::Pinned(val) = &opts.terminal {
        x[it * n..(it + 1) * n].copy_from_slice(val);
    }
    x
}

/// Extends values on `0..=it` to the whole grid by holding `x(T_trunc)`.
fn full_trajectory(p: &Problem, x: &[f64], it: usize) -> Result<Trajectory, SolverError> {
    let n = p.dim();
    let len = p.time_scale().len();
    let mut values = x[..(it + 1) * n].to_vec();
    for _ in (it + 1)..len {
        values.extend_from_slice(&x[it * n..(it + 1) * n]);
    }
    Ok(Trajectory::from_values(p, values)?)
}

const MEMORY: usize = 10;
const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

/// Maximizes the truncated objective over the free trajectory values.
pub fn direct_solve(p: &Problem, opts: &SolveOptions) -> Result<SolveResult, SolverError> {
    let it = opts.validate(p)?;
    let n = p.dim();
    let pinned = matches!(opts.terminal, TerminalMode::Pinned(_));
    let mut asc = Ascent {
        d: Discrete::new(p, it),
        coords: Coords::new(it, n, pinned),
        x: initial_guess(p, it, opts),
    };
    let m = asc.coords.list.len();

    let (mut terms, mut zs) = match asc.d.terms(&asc.x) {
        Ok(v) => v,
        Err((i, e)) => return Err(asc.fail(i, 0, e)),
    };
    let mut f: f64 = terms.iter().copied().collect::<NeumaierSum>().value();
    let mut history = vec![f];
    if m == 0 {
        let trajectory = full_trajectory(p, &asc.x, it)?;
        let objective = variational::evaluate_functional_partial(p, &trajectory, opts.t_trunc)?;
        return Ok(SolveResult {
            trajectory,
            objective,
            iterations: 0,
            grad_norm: 0.0,
            stop: StopReason::Converged,
            history,
        });
    }

    let mut y = asc.coords.gather(&asc.x, n);
    let mut g = asc.gradient(&zs)?;
    let mut diag = asc.curvature(&zs, &terms)?;
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    let mut stop = StopReason::MaxIterations;

    let converged = |g: &[f64], diag: &[f64]| {
        inf_norm(g) <= opts.grad_tol
            && g.iter().zip(diag).all(|(gi, di)| (gi / di).abs() <= opts.grad_tol)
    };

    while iterations < opts.max_iters {
        if converged(&g, &diag) {
            stop = StopReason::Converged;
            break;
        }
        iterations += 1;

        let mut accepted = None;
        for attempt in 0..2 {
            // two-loop recursion on the ascent gradient with H0 = diag^-1
            let mut q = g.clone();
            let mut alphas = Vec::with_capacity(memory.len());
            if attempt == 0 {
                for (s, yv, rho) in memory.iter().rev() {
                    let a = rho * dot(s, &q);
                    for (qi, yi) in q.iter_mut().zip(yv) {
                        *qi -= a * yi;
                    }
                    alphas.push(a);
                }
            }
            for (qi, di) in q.iter_mut().zip(&diag) {
                *qi /= di;
            }
            if attempt == 0 {
                for ((s, yv, rho), a) in memory.iter().zip(alphas.iter().rev()) {
                    let b = rho * dot(yv, &q);
                    for (qi, si) in q.iter_mut().zip(s) {
                        *qi += (a - b) * si;
                    }
                }
            }
            let slope = dot(&g, &q);
            if !(slope > 0.0) {
                memory.clear();
                continue;
            }
            let mut step = opts.step_init;
            for _ in 0..MAX_HALVINGS {
                let trial: Vec<f64> = y.iter().zip(&q).map(|(yi, di)| yi + step * di).collect();
                if let Some(ft) = asc.objective_at(&trial) {
                    if ft >= f + ARMIJO * step * slope && ft >= f {
                        accepted = Some((trial, ft));
                        break;
                    }
                }
                step *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
            memory.clear();
        }

        let Some((y_new, f_new)) = accepted else {
            asc.coords.scatter(&y, &mut asc.x, n);
            stop = StopReason::LineSearch;
            break;
        };
        asc.coords.scatter(&y_new, &mut asc.x, n);
        (terms, zs) = asc
            .d
            .terms(&asc.x)
            .map_err(|(i, e)| asc.fail(i, 0, e))?;
        let g_new = asc.gradient(&zs)?;
        let s: Vec<f64> = y_new.iter().zip(&y).map(|(a, b)| a - b).collect();
        // curvature pair for the minimization of -J
        let yv: Vec<f64> = g.iter().zip(&g_new).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() && sy > 0.0 {
            if memory.len() == MEMORY {
                memory.pop_front();
            }
            memory.push_back((s, yv, 1.0 / sy));
        }
        y = y_new;
        f = f_new;
        g = g_new;
        history.push(f);
        if iterations % 200 == 0 {
            diag = asc.curvature(&zs, &terms)?;
        }
    }
    if stop == StopReason::MaxIterations && converged(&g, &diag) {
        stop = StopReason::Converged;
    }

    let trajectory = full_trajectory(p, &asc.x, it)?;
    let objective = variational::evaluate_functional_partial(p, &trajectory, opts.t_trunc)?;
    Ok(SolveResult {
        trajectory,
        objective,
        iterations,
        grad_norm: inf_norm(&g),
        stop,
        history,
    })
}

#[derive(Debug, Clone)]
pub struct BruteForceResult {
    pub trajectory: Trajectory,
    /// `∫_a^{T_trunc} L` with `L` as given.
    pub objective: f64,
    pub evaluated: u64,
}

const ENUMERATION_LIMIT: f64 = 1e7;

/// Exhaustive maximization over assignments of `value_grid` entries to the
/// free coordinates. Ties go to the lexicographically smallest assignment.
pub fn brute_force(p: &Problem, opts: &SolveOptions, value_grid: &[f64]) -> Result<BruteForceResult, SolverError> {
    let it = opts.validate(p)?;
    let n = p.dim();
    if value_grid.is_empty() || value_grid.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::InvalidOptions("value grid must be non-empty and finite".into()));
    }
    let mut grid = value_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let pinned = match &opts.terminal {
        TerminalMode::Pinned(v) => Some(v.clone()),
        TerminalMode::Free => None,
    };
    let free_rows = if pinned.is_some() { it - 1 } else { it };
    let count = (grid.len() as f64).powi((free_rows * n) as i32);
    if count > ENUMERATION_LIMIT {
        return Err(SolverError::EnumerationGuard { count });
    }

    let d = Discrete::new(p, it);
    let mut search = Search {
        d: &d,
        grid: &grid,
        free_rows,
        pinned,
        x: (0..=it).flat_map(|_| p.x_a().iter().copied()).collect(),
        v: vec![0.0; n],
        best: None,
        evaluated: 0,
    };
    search.row(1, 0.0, 0.0);
    let best = search.best.take().ok_or_else(|| {
        SolverError::InvalidOptions("no assignment of the value grid gives a finite objective".into())
    })?;
    let evaluated = search.evaluated;
    let trajectory = full_trajectory(p, &best.1, it)?;
    let objective = variational::evaluate_functional_partial(p, &trajectory, opts.t_trunc)?;
    Ok(BruteForceResult {
        trajectory,
        objective,
        evaluated,
    })
}

struct Search<'a> {
    d: &'a Discrete<'a>,
    grid: &'a [f64],
    free_rows: usize,
    pinned: Option<Vec<f64>>,
    x: Vec<f64>,
    v: Vec<f64>,
    best: Option<(f64, Vec<f64>)>,
    evaluated: u64,
}

impl Search<'_> {
    /// Enumerates row `i` given the partial objective and `z` through `i - 1`.
    fn row(&mut self, i: usize, acc: f64, z: f64) {
        let n = self.d.n;
        if i > self.d.it {
            self.evaluated += 1;
            if self.best.as_ref().is_none_or(|(b, _)| acc > *b) {
                self.best = Some((acc, self.x.clone()));
            }
            return;
        }
        if i > self.free_rows {
            let val = self.pinned.clone().expect("pinned terminal row");
            self.x[i * n..(i + 1) * n].copy_from_slice(&val);
            self.close_row(i, acc, z);
            return;
        }
        self.component(i, 0, acc, z);
    }

    fn component(&mut self, i: usize, k: usize, acc: f64, z: f64) {
        let n = self.d.n;
        if k == n {
            self.close_row(i, acc, z);
            return;
        }
        for gi in 0..self.grid.len() {
            self.x[i * n + k] = self.grid[gi];
            self.component(i, k + 1, acc, z);
        }
    }

    fn close_row(&mut self, i: usize, acc: f64, z: f64) {
        let n = self.d.n;
        let (prev, cur) = self.x.split_at((i) * n);
        if let Ok((term, zi)) = self.d.term(i, &prev[(i - 1) * n..], &cur[..n], z, &mut self.v) {
            self.row(i + 1, acc + term, zi);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonRow {
    pub t_trunc: f64,
    pub max_el_residual: f64,
    pub trans_t1: f64,
    pub trans_t2: f64,
    pub objective: f64,
    /// False for a pinned terminal, where transversality does not apply.
    pub transversality_applicable: bool,
}

/// Solves at each truncation and records residual summaries.
pub fn horizon_study(p: &Problem, truncations: &[f64], opts: &SolveOptions) -> Result<Vec<HorizonRow>, SolverError> {
    let mut truncs = truncations.to_vec();
    truncs.sort_by(f64::total_cmp);
    truncs.dedup();
    let applicable = matches!(opts.terminal, TerminalMode::Free);
    let mut rows = Vec::with_capacity(truncs.len());
    for tt in truncs {
        let o = SolveOptions { t_trunc: tt, ..opts.clone() };
        let it = o.validate(p)?;
        let sol = direct_solve(p, &o)?;
        let ev = Evaluation::new(p, &sol.trajectory)?;
        let max_el_residual = ev
            .pointwise_range(EL_CHECK_START, it)
            .into_iter()
            .flat_map(|(_, r)| r)
            .fold(0.0, |m: f64, v| m.max(v.abs()));
        rows.push(HorizonRow {
            t_trunc: tt,
            max_el_residual,
            trans_t1: ev.transversality_t1(it).abs(),
            trans_t2: ev.transversality_t2(it).abs(),
            objective: sol.objective,
            transversality_applicable: applicable,
        });
    }
    Ok(rows)
}

/// CSV with columns `T_trunc,max_el_residual,trans_T1,trans_T2,objective`.
pub fn write_horizon_csv<W: Write>(rows: &[HorizonRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["T_trunc", "max_el_residual", "trans_T1", "trans_T2", "objective"])?;
    for r in rows {
        w.write_record([
            r.t_trunc.to_string(),
            r.max_el_residual.to_string(),
            r.trans_t1.to_string(),
            r.trans_t2.to_string(),
            r.objective.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timescale::TimeScale;
    use std::sync::Arc;
    use crate::variational::Sense;
    use proptest::prelude::*;

    fn z(a: i64, b: i64) -> Arc<TimeScale> {
        Arc::new(TimeScale::integers(a, b).unwrap().with_unbounded_above(true))
    }

    fn problem(ts: Arc<TimeScale>, l: &str, g: &str, x_a: f64) -> Problem {
        Problem::parse(ts, 1, l, g, vec![x_a], Sense::Max).unwrap()
    }

    #[test]
    fn quadratic_penalty_drives_to_zero() {
        let p = problem(z(0, 6), "-(x1^2)", "0", 0.0);
        let sol = direct_solve(&p, &SolveOptions::new(6.0)).unwrap();
        assert_eq!(sol.stop, StopReason::Converged);
        for &v in sol.trajectory.values() {
            assert!(v.abs() <= 1e-8, "{v}");
        }
    }

    #[test]
    fn straight_line_on_sampled_interval() {
        let ts = Arc::new(TimeScale::sampled_interval(0.0, 1.0, 32).unwrap());
        let p = problem(Arc::clone(&ts), "-(v1^2)", "0", 0.0);
        let sol = direct_solve(&p, &SolveOptions::new(1.0).pinned(vec![1.0])).unwrap();
        for (i, &t) in ts.points().iter().enumerate() {
            let err = (sol.trajectory.value(i)[0] - t).abs();
            assert!(err <= 1.0 / 32.0 + 1e-6, "t={t}: {err}");
        }
    }

    #[test]
    fn history_is_monotone() {
        let p = problem(z(0, 8), "-(v1^2) - z", "x1^2", 1.0);
        let sol = direct_solve(&p, &SolveOptions::new(8.0)).unwrap();
        assert!(sol.history.windows(2).all(|w| w[1] >= w[0]));
        assert!(sol.history.len() > 1);
    }

    #[test]
    fn min_sense_matches_negated_max() {
        let ts = z(0, 6);
        let a = Problem::parse(Arc::clone(&ts), 1, "v1^2 + (x1 - 1)^2", "0", vec![0.0], Sense::Min).unwrap();
        let b = Problem::parse(ts, 1, "-(v1^2 + (x1 - 1)^2)", "0", vec![0.0], Sense::Max).unwrap();
        let opts = SolveOptions::new(6.0);
        let sa = direct_solve(&a, &opts).unwrap();
        let sb = direct_solve(&b, &opts).unwrap();
        for (u, v) in sa.trajectory.values().iter().zip(sb.trajectory.values()) {
            assert!((u - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn brute_force_examples() {
        let p = problem(z(0, 1), "-(x1^2)", "0", 0.0);
        // one free point, but x1 enters through x^ρ so every value ties; the
        // smallest wins
        let r = brute_force(&p, &SolveOptions::new(1.0), &[1.0, -1.0, 0.0]).unwrap();
        assert_eq!(r.trajectory.value(1), &[-1.0]);
        let p = problem(z(0, 2), "-(x1^2)", "0", 0.0);
        let r = brute_force(&p, &SolveOptions::new(2.0).pinned(vec![0.0]), &[1.0, -1.0, 0.0]).unwrap();
        assert_eq!(r.trajectory.value(1), &[0.0]);
        let r = brute_force(&p, &SolveOptions::new(2.0), &[0.5]).unwrap();
        assert_eq!(r.trajectory.values(), &[0.0, 0.5, 0.5]);
        assert_eq!(r.evaluated, 1);
    }

    #[test]
    fn enumeration_guard() {
        let p = problem(z(0, 20), "-(x1^2)", "0", 0.0);
        let grid: Vec<f64> = (0..3).map(f64::from).collect();
        assert!(matches!(
            brute_force(&p, &SolveOptions::new(20.0), &grid),
            Err(SolverError::EnumerationGuard { .. })
        ));
    }

    #[test]
    fn discounted_tracking_matches_brute_force() {
        let p = problem(z(0, 12), "exp(-t)*(-(v1-1)^2)", "0", 0.0);
        let opts = SolveOptions::new(12.0);
        let sol = direct_solve(&p, &opts).unwrap();
        // the optimum is x(t) = t; a 21-point grid around it is too large to
        // enumerate over 12 coordinates, so check the 4-point prefix problem
        for (i, &v) in sol.trajectory.values().iter().enumerate() {
            assert!((v - i as f64).abs() <= 1e-6, "{i}: {v}");
        }
        let short = problem(z(0, 4), "exp(-t)*(-(v1-1)^2)", "0", 0.0);
        let grid: Vec<f64> = (0..21).map(|k| k as f64 * 0.25).collect();
        let bf = brute_force(&short, &SolveOptions::new(4.0), &grid).unwrap();
        let ds = direct_solve(&short, &SolveOptions::new(4.0)).unwrap();
        for (a, b) in bf.trajectory.values().iter().zip(ds.trajectory.values()) {
            assert!((a - b).abs() <= 0.25);
        }
    }

    #[test]
    fn non_finite_objective_is_reported() {
        let p = problem(z(0, 3), "log(x1 - 0.5)", "0", 0.0);
        assert!(matches!(
            direct_solve(&p, &SolveOptions::new(3.0)),
            Err(SolverError::NonFinite { .. })
        ));
    }

    #[test]
    fn horizon_study_flags_pinned_and_trivial() {
        let p = problem(z(0, 6), "1", "0", 0.0);
        let rows = horizon_study(&p, &[6.0, 3.0], &SolveOptions::new(6.0)).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].t_trunc, 3.0);
        for r in &rows {
            assert_eq!((r.max_el_residual, r.trans_t1, r.trans_t2), (0.0, 0.0, 0.0));
            assert!(r.transversality_applicable);
        }
        let rows = horizon_study(&p, &[6.0], &SolveOptions::new(6.0).pinned(vec![0.0])).unwrap();
        assert!(!rows[0].transversality_applicable);
        let mut buf = Vec::new();
        write_horizon_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("T_trunc,max_el_residual,trans_T1,trans_T2,objective\n"));
    }

    #[test]
    fn scattered_first_order_conditions_match_el() {
        let p = problem(z(0, 7), "-(v1^2) - (x1 - sin(t))^2", "0", 0.3);
        let opts = SolveOptions::new(7.0);
        let sol = direct_solve(&p, &opts).unwrap();
        let ev = Evaluation::new(&p, &sol.trajectory).unwrap();
        for (i, r) in ev.pointwise_range(EL_CHECK_START, 7) {
            let nu = p.time_scale().nu_at(i);
            assert!(r[0].abs() <= 10.0 * opts.grad_tol / nu, "t={i}: {}", r[0]);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn brute_force_ignores_grid_order(perm in Just((0..7).collect::<Vec<usize>>()).prop_shuffle()) {
            let p = problem(z(0, 3), "-(v1 - 1)^2 - x1^2", "0", 0.0);
            let base = [-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5];
            let shuffled: Vec<f64> = perm.iter().map(|&k| base[k]).collect();
            let a = brute_force(&p, &SolveOptions::new(3.0), &base).unwrap();
            let b = brute_force(&p, &SolveOptions::new(3.0), &shuffled).unwrap();
            prop_assert_eq!(a.trajectory, b.trajectory);
        }
    }
}
