//! Variational problems with a nonlocal integral term.
//!
//! A [`Problem`] pairs a Lagrangian `L(t, x^ρ, x^∇, z)` with an integrand
//! `g(t, x^ρ, x^∇)` whose running nabla integral is `z`. The functions here
//! evaluate truncated objectives and the necessary-condition residuals
//! (Euler-Lagrange equations in pointwise and integral form, two
//! transversality quantities, and the weak-maximizer margin) for a given
//! trajectory.
//!
//! Minimization is handled by negating `L`, so every residual refers to the
//! maximization form of the problem.

use std::io::Write;
use std::sync::Arc;

use thiserror::Error;

use crate::expr::{self, Env, EvalError, Expr, Var};
use crate::nabla::{self, CalcError, GridFunction, NeumaierSum};
use crate::timescale::{ScaleError, TimeScale};

#[derive(Debug, Error)]
pub enum VariationalError {
    #[error("at t = {t}: {source}")]
    Eval { t: f64, source: EvalError },
    #[error(transparent)]
    Calc(#[from] CalcError),
    #[error(transparent)]
    Scale(#[from] ScaleError),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("trajectory is not admissible: {0}")]
    NotAdmissible(String),
    #[error("expression: {0}")]
    Parse(#[from] expr::ParseError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sense {
    #[default]
    Max,
    Min,
}

#[derive(Debug, Clone)]
struct Partials {
    l_x: Vec<Expr>,
    l_v: Vec<Expr>,
    l_z: Expr,
    g_x: Vec<Expr>,
    g_v: Vec<Expr>,
}

#[derive(Debug, Clone)]
pub struct Problem {
    ts: Arc<TimeScale>,
    n: usize,
    lagrangian: Expr,
    effective: Expr,
    constraint: Expr,
    x_a: Vec<f64>,
    sense: Sense,
    partials: Partials,
}

impl Problem {
    pub fn new(
        ts: Arc<TimeScale>,
        n: usize,
        lagrangian: Expr,
        constraint: Expr,
        x_a: Vec<f64>,
        sense: Sense,
    ) -> Result<Self, VariationalError> {
        if n == 0 {
            return Err(VariationalError::InvalidProblem("state dimension must be at least 1".into()));
        }
        if x_a.len() != n {
            return Err(VariationalError::InvalidProblem(format!(
                "x_a has {} entries, expected {n}",
                x_a.len()
            )));
        }
        if let Some(bad) = x_a.iter().find(|v| !v.is_finite()) {
            return Err(VariationalError::InvalidProblem(format!("x_a entry {bad} is not finite")));
        }
        check_vars("L", &lagrangian, n, true)?;
        check_vars("g", &constraint, n, false)?;

        let effective = match sense {
            Sense::Max => lagrangian.clone(),
            Sense::Min => Expr::Neg(Box::new(lagrangian.clone())),
        };
        let partials = Partials {
            l_x: (0..n).map(|k| effective.differentiate(Var::X(k))).collect(),
            l_v: (0..n).map(|k| effective.differentiate(Var::V(k))).collect(),
            l_z: effective.differentiate(Var::Z),
            g_x: (0..n).map(|k| constraint.differentiate(Var::X(k))).collect(),
            g_v: (0..n).map(|k| constraint.differentiate(Var::V(k))).collect(),
        };
        Ok(Problem {
            ts,
            n,
            lagrangian,
            effective,
            constraint,
            x_a,
            sense,
            partials,
        })
    }

    /// Builds a problem from expression sources.
    pub fn parse(
        ts: Arc<TimeScale>,
        n: usize,
        lagrangian: &str,
        constraint: &str,
        x_a: Vec<f64>,
        sense: Sense,
    ) -> Result<Self, VariationalError> {
        Self::new(ts, n, expr::parse(lagrangian)?, expr::parse(constraint)?, x_a, sense)
    }

    pub fn time_scale(&self) -> &Arc<TimeScale> {
        &self.ts
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lagrangian(&self) -> &Expr {
        &self.lagrangian
    }

    /// The Lagrangian that is maximized: `L` itself, or `-L` for minimization.
    pub fn effective_lagrangian(&self) -> &Expr {
        &self.effective
    }

    pub fn constraint(&self) -> &Expr {
        &self.constraint
    }

    pub fn x_a(&self) -> &[f64] {
        &self.x_a
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    /// `x^ρ` and `x^∇` at grid index `i` from row-major trajectory values.
    pub(crate) fn fill_args(&self, x: &[f64], i: usize, xr: &mut [f64], v: &mut [f64]) {
        let n = self.n;
        let r = self.ts.rho_index(i);
        xr.copy_from_slice(&x[r * n..(r + 1) * n]);
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = nabla::backward_quotient(&self.ts, x, n, i, k);
        }
    }
}

fn check_vars(name: &str, e: &Expr, n: usize, allow_z: bool) -> Result<(), VariationalError> {
    for var in e.variables() {
        let ok = match var {
            Var::T => true,
            Var::Z => allow_z,
            Var::X(k) | Var::V(k) => k < n,
        };
        if !ok {
            return Err(VariationalError::InvalidProblem(format!(
                "{name} uses variable {var}, which is not available (n = {n})"
            )));
        }
    }
    Ok(())
}

/// An admissible path: grid values of `x` with `x(a) = x_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    x: GridFunction,
}

impl Trajectory {
    pub fn new(p: &Problem, x: GridFunction) -> Result<Self, VariationalError> {
        if x.time_scale().points() != p.ts.points() {
            return Err(VariationalError::NotAdmissible("trajectory lives on a different grid".into()));
        }
        if x.dim() != p.n {
            return Err(VariationalError::NotAdmissible(format!(
                "trajectory has dimension {}, expected {}",
                x.dim(),
                p.n
            )));
        }
        if let Some(pos) = x.values().iter().position(|v| !v.is_finite()) {
            return Err(VariationalError::NotAdmissible(format!(
                "non-finite value at t = {}",
                p.ts.point(pos / p.n)
            )));
        }
        if x.value(0) != p.x_a.as_slice() {
            return Err(VariationalError::NotAdmissible(format!(
                "x(a) = {:?} differs from x_a = {:?}",
                x.value(0),
                p.x_a
            )));
        }
        Ok(Trajectory { x })
    }

    /// Row-major values, one row of `n` entries per grid point.
    pub fn from_values(p: &Problem, values: Vec<f64>) -> Result<Self, VariationalError> {
        let gf = GridFunction::from_values(Arc::clone(&p.ts), p.n, values)?;
        Self::new(p, gf)
    }

    pub fn from_fn(p: &Problem, f: impl Fn(f64) -> Vec<f64>) -> Result<Self, VariationalError> {
        Self::new(p, GridFunction::from_fn(Arc::clone(&p.ts), p.n, f))
    }

    pub fn grid_function(&self) -> &GridFunction {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        self.x.values()
    }

    pub fn value(&self, i: usize) -> &[f64] {
        self.x.value(i)
    }
}

/// Everything the residuals need, sampled once per grid point.
///
/// At the minimum the derivative is borrowed from the successor. Expression
/// failures at the minimum are recorded as NaN rather than reported, since
/// the minimum carries no weight in any integral.
#[derive(Debug, Clone)]
pub struct Evaluation {
    ts: Arc<TimeScale>,
    n: usize,
    x: Vec<f64>,
    z: Vec<f64>,
    l: Vec<f64>,
    l_x: Vec<f64>,
    l_v: Vec<f64>,
    l_z: Vec<f64>,
    g_x: Vec<f64>,
    g_v: Vec<f64>,
}

impl Evaluation {
    pub fn new(p: &Problem, x: &Trajectory) -> Result<Self, VariationalError> {
        let ts = Arc::clone(&p.ts);
        let n = p.n;
        let len = ts.len();
        let xs = x.values();
        let mut ev = Evaluation {
            ts: Arc::clone(&ts),
            n,
            x: xs.to_vec(),
            z: vec![0.0; len],
            l: vec![0.0; len],
            l_x: vec![0.0; len * n],
            l_v: vec![0.0; len * n],
            l_z: vec![0.0; len],
            g_x: vec![0.0; len * n],
            g_v: vec![0.0; len * n],
        };
        let mut xr = vec![0.0; n];
        let mut v = vec![0.0; n];
        let mut z = NeumaierSum::new();
        for i in 0..len {
            let t = ts.point(i);
            p.fill_args(xs, i, &mut xr, &mut v);
            let res = (|| -> Result<(), EvalError> {
                let env = Env::new(t, &xr, &v, 0.0);
                let g = p.constraint.eval(&env)?;
                for k in 0..n {
                    ev.g_x[i * n + k] = p.partials.g_x[k].eval(&env)?;
                    ev.g_v[i * n + k] = p.partials.g_v[k].eval(&env)?;
                }
                z.add(ts.step_at(i) * g);
                let env = Env::new(t, &xr, &v, z.value());
                ev.z[i] = z.value();
                ev.l[i] = p.effective.eval(&env)?;
                ev.l_z[i] = p.partials.l_z.eval(&env)?;
                for k in 0..n {
                    ev.l_x[i * n + k] = p.partials.l_x[k].eval(&env)?;
                    ev.l_v[i * n + k] = p.partials.l_v[k].eval(&env)?;
                }
                Ok(())
            })();
            if let Err(source) = res {
                if i > 0 {
                    return Err(VariationalError::Eval { t, source });
                }
                ev.l[0] = f64::NAN;
                ev.l_z[0] = f64::NAN;
                for k in 0..n {
                    ev.l_x[k] = f64::NAN;
                    ev.l_v[k] = f64::NAN;
                    ev.g_x[k] = f64::NAN;
                    ev.g_v[k] = f64::NAN;
                }
            }
        }
        Ok(ev)
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    fn index(&self, t: f64) -> Result<usize, VariationalError> {
        Ok(self.ts.index_of(t)?)
    }

    /// `I(t_i) = ∫_{ρ(t_i)}^{T'} L_z` for every `i <= iT`.
    fn lz_tail(&self, it: usize) -> Vec<f64> {
        let mut out = vec![0.0; it + 1];
        let mut acc = NeumaierSum::new();
        // suffix[i] = sum over k in [i, it] of step_k L_z(k)
        let mut suffix = vec![0.0; it + 2];
        for k in (1..=it).rev() {
            acc.add(self.ts.step_at(k) * self.l_z[k]);
            suffix[k] = acc.value();
        }
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = suffix[self.ts.rho_index(i) + 1];
        }
        out
    }

    fn pointwise_with(&self, tail: &[f64], i: usize) -> Vec<f64> {
        let n = self.n;
        let j = i.max(1);
        let h = self.ts.point(j) - self.ts.point(j - 1);
        (0..n)
            .map(|k| {
                let gvi = |m: usize| self.g_v[m * n + k] * tail[m];
                let d_gvi = (gvi(j) - gvi(j - 1)) / h;
                let d_lv = (self.l_v[j * n + k] - self.l_v[(j - 1) * n + k]) / h;
                self.g_x[i * n + k] * tail[i] - d_gvi + self.l_x[i * n + k] - d_lv
            })
            .collect()
    }

    /// Pointwise Euler-Lagrange residual at grid index `i` for horizon index `it`.
    pub fn pointwise_at(&self, i: usize, it: usize) -> Result<Vec<f64>, VariationalError> {
        self.check_pair(i, it)?;
        Ok(self.pointwise_with(&self.lz_tail(it), i))
    }

    /// Pointwise residuals at every `i` in `from..=it`.
    pub fn pointwise_range(&self, from: usize, it: usize) -> Vec<(usize, Vec<f64>)> {
        let tail = self.lz_tail(it);
        (from.max(self.ts.kappa_start())..=it)
            .map(|i| (i, self.pointwise_with(&tail, i)))
            .collect()
    }

    fn check_pair(&self, i: usize, it: usize) -> Result<(), VariationalError> {
        if !self.ts.in_kappa_at(i) {
            return Err(CalcError::OutsideKappa(self.ts.point(i)).into());
        }
        if i > it {
            return Err(CalcError::ReversedBounds {
                a: self.ts.point(i),
                b: self.ts.point(it),
            }
            .into());
        }
        Ok(())
    }

    /// Integral-form left-hand side at every `i <= it`, row-major.
    pub fn integral_form(&self, it: usize) -> Vec<f64> {
        let n = self.n;
        let tail = self.lz_tail(it);
        let mut out = vec![0.0; (it + 1) * n];
        for k in 0..n {
            // forward part: ∫_t^{T'} g_x I, accumulated from the right
            let mut fwd = vec![0.0; it + 1];
            let mut acc = NeumaierSum::new();
            for i in (0..it).rev() {
                let m = i + 1;
                acc.add(self.ts.step_at(m) * self.g_x[m * n + k] * tail[m]);
                fwd[i] = acc.value();
            }
            let mut back = NeumaierSum::new();
            for i in 0..=it {
                back.add(self.ts.step_at(i) * self.l_x[i * n + k]);
                out[i * n + k] =
                    fwd[i] + self.g_v[i * n + k] * tail[i] + self.l_v[i * n + k] - back.value();
            }
        }
        out
    }

    /// Per-component `max - min` of the integral form over indices `1..=it`.
    pub fn integral_spread(&self, it: usize) -> Vec<f64> {
        let n = self.n;
        let form = self.integral_form(it);
        (0..n)
            .map(|k| {
                let vals = (1..=it).map(|i| form[i * n + k]);
                let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
                if lo.is_finite() || hi.is_finite() {
                    hi - lo
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn transversality_t1(&self, it: usize) -> f64 {
        let n = self.n;
        let nu = self.ts.nu_at(it);
        (0..n)
            .map(|k| {
                let bracket = self.l_v[it * n + k] + self.g_v[it * n + k] * (nu * self.l_z[it]);
                self.x[it * n + k] * bracket
            })
            .collect::<NeumaierSum>()
            .value()
    }

    /// Same quantity with `ν L_z` replaced by the integral over `(ρ(T'), T']`.
    pub fn transversality_t1_by_integral(&self, it: usize) -> f64 {
        let n = self.n;
        let local = nabla::integral_indices(&self.ts, &self.l_z, 1, 0, self.ts.rho_index(it), it);
        (0..n)
            .map(|k| {
                let bracket = self.l_v[it * n + k] + self.g_v[it * n + k] * local;
                self.x[it * n + k] * bracket
            })
            .collect::<NeumaierSum>()
            .value()
    }

    pub fn transversality_t2(&self, it: usize) -> f64 {
        let n = self.n;
        (0..n)
            .map(|k| self.x[it * n + k] * nabla::integral_indices(&self.ts, &self.l_x, n, k, 0, it))
            .collect::<NeumaierSum>()
            .value()
    }

    /// Effective Lagrangian values per grid point.
    pub fn lagrangian_values(&self) -> &[f64] {
        &self.l
    }
}

/// First grid index at which the discrete first-order conditions pin the
/// Euler-Lagrange equation: the condition at `t_1` belongs to the fixed `x(a)`.
pub const EL_CHECK_START: usize = 2;

/// `z(t) = ∫_a^t g(τ, x^ρ, x^∇) ∇τ`.
pub fn compute_z(p: &Problem, x: &Trajectory) -> Result<GridFunction, VariationalError> {
    let ev = Evaluation::new(p, x)?;
    Ok(GridFunction::from_values(Arc::clone(&p.ts), 1, ev.z)?)
}

/// `∫_a^{T'} L(t, x^ρ, x^∇, z) ∇t` for the Lagrangian as given (not negated).
pub fn evaluate_functional_partial(p: &Problem, x: &Trajectory, t_prime: f64) -> Result<f64, VariationalError> {
    let ev = Evaluation::new(p, x)?;
    let it = ev.index(t_prime)?;
    let sign = match p.sense {
        Sense::Max => 1.0,
        Sense::Min => -1.0,
    };
    Ok(sign * nabla::integral_indices(&p.ts, &ev.l, 1, 0, 0, it))
}

/// Euler-Lagrange residual of the problem on `[a, b]`.
pub fn finite_horizon_el_residual(p: &Problem, x: &Trajectory, b: f64, t: f64) -> Result<Vec<f64>, VariationalError> {
    el_residual_pointwise(p, x, t, b)
}

/// Pointwise Euler-Lagrange residual at `t` with the `L_z` integral cut at `T'`.
pub fn el_residual_pointwise(p: &Problem, x: &Trajectory, t: f64, t_prime: f64) -> Result<Vec<f64>, VariationalError> {
    let ev = Evaluation::new(p, x)?;
    let i = ev.index(t)?;
    let it = ev.index(t_prime)?;
    ev.pointwise_at(i, it)
}

/// Integral-form Euler-Lagrange left-hand side at `t` for horizon `T'`.
pub fn el_residual_integral(p: &Problem, x: &Trajectory, t: f64, t_prime: f64) -> Result<Vec<f64>, VariationalError> {
    let ev = Evaluation::new(p, x)?;
    let i = ev.index(t)?;
    let it = ev.index(t_prime)?;
    if i > it {
        return Err(CalcError::ReversedBounds { a: t, b: t_prime }.into());
    }
    let n = p.n;
    Ok(ev.integral_form(it)[i * n..(i + 1) * n].to_vec())
}

pub fn transversality_residual_t1(p: &Problem, x: &Trajectory, t_prime: f64) -> Result<f64, VariationalError> {
    let ev = Evaluation::new(p, x)?;
    Ok(ev.transversality_t1(ev.index(t_prime)?))
}

pub fn transversality_residual_t2(p: &Problem, x: &Trajectory, t_prime: f64) -> Result<f64, VariationalError> {
    let ev = Evaluation::new(p, x)?;
    Ok(ev.transversality_t2(ev.index(t_prime)?))
}

/// Partial integrals `∫_a^{T'} (L[x] - L[x*])` for every `T' > a`.
pub fn advantage_sequence(p: &Problem, candidate: &Trajectory, star: &Trajectory) -> Result<Vec<(f64, f64)>, VariationalError> {
    let ec = Evaluation::new(p, candidate)?;
    let es = Evaluation::new(p, star)?;
    let diff: Vec<f64> = ec.l.iter().zip(&es.l).map(|(a, b)| a - b).collect();
    let gf = GridFunction::from_values(Arc::clone(&p.ts), 1, diff)?;
    Ok(nabla::partial_integrals(&gf, p.ts.min())?)
}

/// Tail infimum of the advantage of `candidate` over `star`. The star passes
/// against the candidate when this is at most the caller's tolerance.
pub fn weak_max_compare(p: &Problem, candidate: &Trajectory, star: &Trajectory) -> Result<f64, VariationalError> {
    let seq = advantage_sequence(p, candidate, star)?;
    Ok(nabla::liminf_estimate(&seq, 0.0, f64::INFINITY)?.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualKind {
    Pointwise,
    Integral,
    IntegralSpread,
    TransT1,
    TransT2,
    WeakMaxMargin,
}

impl ResidualKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ResidualKind::Pointwise => "el_pointwise",
            ResidualKind::Integral => "el_integral",
            ResidualKind::IntegralSpread => "el_integral_spread",
            ResidualKind::TransT1 => "trans_T1",
            ResidualKind::TransT2 => "trans_T2",
            ResidualKind::WeakMaxMargin => "weak_max_margin",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRow {
    pub t: f64,
    pub t_prime: f64,
    pub component: usize,
    pub value: f64,
    pub kind: ResidualKind,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResidualReport {
    /// `(t, T', residual vector)`.
    pub el_pointwise: Vec<(f64, f64, Vec<f64>)>,
    /// `(t, T', integral-form vector)`.
    pub el_integral: Vec<(f64, f64, Vec<f64>)>,
    /// `(T', per-component spread)`.
    pub el_integral_constant_spread: Vec<(f64, Vec<f64>)>,
    pub trans_t1: Vec<(f64, f64)>,
    pub trans_t2: Vec<(f64, f64)>,
    pub weak_max_margin: Option<f64>,
}

impl ResidualReport {
    /// Residual data for each horizon in `t_primes`; the pointwise residuals
    /// cover every checkable grid point up to that horizon.
    pub fn build(p: &Problem, x: &Trajectory, t_primes: &[f64]) -> Result<Self, VariationalError> {
        let ev = Evaluation::new(p, x)?;
        let mut its = t_primes.iter().map(|&t| ev.index(t)).collect::<Result<Vec<_>, _>>()?;
        its.sort_unstable();
        its.dedup();
        let n = p.n;
        let mut report = ResidualReport::default();
        for it in its {
            let tp = p.ts.point(it);
            for (i, r) in ev.pointwise_range(EL_CHECK_START, it) {
                report.el_pointwise.push((p.ts.point(i), tp, r));
            }
            let form = ev.integral_form(it);
            for i in 1..=it {
                report
                    .el_integral
                    .push((p.ts.point(i), tp, form[i * n..(i + 1) * n].to_vec()));
            }
            report.el_integral_constant_spread.push((tp, ev.integral_spread(it)));
            report.trans_t1.push((tp, ev.transversality_t1(it)));
            report.trans_t2.push((tp, ev.transversality_t2(it)));
        }
        Ok(report)
    }

    pub fn max_pointwise(&self) -> f64 {
        self.el_pointwise
            .iter()
            .flat_map(|(_, _, r)| r.iter().map(|v| v.abs()))
            .fold(0.0, f64::max)
    }

    pub fn max_spread(&self) -> f64 {
        self.el_integral_constant_spread
            .iter()
            .flat_map(|(_, s)| s.iter().copied())
            .fold(0.0, f64::max)
    }

    pub fn rows(&self) -> Vec<ResidualRow> {
        let mut rows = Vec::new();
        let mut vector_rows = |entries: &[(f64, f64, Vec<f64>)], kind| {
            for (t, tp, r) in entries {
                for (k, &value) in r.iter().enumerate() {
                    rows.push(ResidualRow {
                        t: *t,
                        t_prime: *tp,
                        component: k + 1,
                        value,
                        kind,
                    });
                }
            }
        };
        vector_rows(&self.el_pointwise, ResidualKind::Pointwise);
        vector_rows(&self.el_integral, ResidualKind::Integral);
        for (tp, s) in &self.el_integral_constant_spread {
            for (k, &value) in s.iter().enumerate() {
                rows.push(ResidualRow {
                    t: *tp,
                    t_prime: *tp,
                    component: k + 1,
                    value,
                    kind: ResidualKind::IntegralSpread,
                });
            }
        }
        for (list, kind) in [(&self.trans_t1, ResidualKind::TransT1), (&self.trans_t2, ResidualKind::TransT2)] {
            for &(tp, value) in list {
                rows.push(ResidualRow {
                    t: tp,
                    t_prime: tp,
                    component: 0,
                    value,
                    kind,
                });
            }
        }
        if let Some(m) = self.weak_max_margin {
            rows.push(ResidualRow {
                t: f64::NAN,
                t_prime: f64::NAN,
                component: 0,
                value: m,
                kind: ResidualKind::WeakMaxMargin,
            });
        }
        rows
    }

    /// CSV with columns `t,T_prime,component,value,kind`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), VariationalError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "T_prime", "component", "value", "kind"])?;
        for row in self.rows() {
            w.write_record([
                row.t.to_string(),
                row.t_prime.to_string(),
                row.component.to_string(),
                row.value.to_string(),
                row.kind.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
