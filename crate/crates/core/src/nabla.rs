//! Nabla derivative and nabla integral of sampled functions on a [`TimeScale`].
//!
//! Every grid point `t_i` with `i >= 1` carries the weight `t_i - t_{i-1}`:
//! the graininess at left-scattered points, the sample step at left-dense
//! points. Derivatives are backward quotients over that step and integrals
//! are the matching weighted sums over `(a, b]`, so the telescoping identities
//! of the calculus hold on every grid up to rounding, and the formulas are
//! exact on scattered gaps while first-order accurate on dense samples.
//!
//! Sums run in ascending `t` with Neumaier compensation, so results are
//! reproducible bit for bit.

use std::sync::Arc;

use thiserror::Error;

use crate::timescale::{ScaleError, TimeScale};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalcError {
    #[error(transparent)]
    Scale(#[from] ScaleError),
    #[error("point {0} lies outside the nabla-differentiable domain")]
    OutsideKappa(f64),
    #[error("integration bounds reversed: a = {a} > b = {b}")]
    ReversedBounds { a: f64, b: f64 },
    #[error("grid functions live on different time scales")]
    GridMismatch,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no sequence entries at or beyond T = {0}")]
    EmptyTail(f64),
}

/// Compensated (Neumaier) accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Vector-valued samples, one value of fixed dimension per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    ts: Arc<TimeScale>,
    dim: usize,
    values: Vec<f64>,
}

impl GridFunction {
    /// `values` is row-major: point `i`, component `k` lives at `i * dim + k`.
    pub fn from_values(ts: Arc<TimeScale>, dim: usize, values: Vec<f64>) -> Result<Self, CalcError> {
        if dim == 0 || values.len() != ts.len() * dim {
            return Err(CalcError::DimensionMismatch {
                expected: ts.len() * dim.max(1),
                got: values.len(),
            });
        }
        Ok(GridFunction { ts, dim, values })
    }

    pub fn scalar(ts: Arc<TimeScale>, f: impl Fn(f64) -> f64) -> Self {
        let values = ts.points().iter().map(|&t| f(t)).collect();
        GridFunction { ts, dim: 1, values }
    }

    pub fn from_fn(ts: Arc<TimeScale>, dim: usize, f: impl Fn(f64) -> Vec<f64>) -> Self {
        assert!(dim > 0, "grid function dimension must be positive");
        let mut values = Vec::with_capacity(ts.len() * dim);
        for &t in ts.points() {
            let v = f(t);
            assert_eq!(v.len(), dim, "sample at t = {t} has wrong dimension");
            values.extend(v);
        }
        GridFunction { ts, dim, values }
    }

    pub fn zeros(ts: Arc<TimeScale>, dim: usize) -> Self {
        let values = vec![0.0; ts.len() * dim];
        GridFunction { ts, dim, values }
    }

    pub fn time_scale(&self) -> &Arc<TimeScale> {
        &self.ts
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn value_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn at(&self, t: f64) -> Result<&[f64], CalcError> {
        Ok(self.value(self.ts.index_of(t)?))
    }

    /// Component `k` at point `i`.
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.dim + k]
    }

    pub fn component(&self, k: usize) -> GridFunction {
        let values = (0..self.ts.len()).map(|i| self.get(i, k)).collect();
        GridFunction {
            ts: Arc::clone(&self.ts),
            dim: 1,
            values,
        }
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        Arc::ptr_eq(&self.ts, &other.ts) || *self.ts == *other.ts
    }

    fn check_compatible(&self, other: &GridFunction) -> Result<(), CalcError> {
        if !self.same_grid(other) {
            return Err(CalcError::GridMismatch);
        }
        if self.dim != other.dim {
            return Err(CalcError::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        Ok(())
    }

    pub fn zip_with(
        &self,
        other: &GridFunction,
        op: impl Fn(f64, f64) -> f64,
    ) -> Result<GridFunction, CalcError> {
        self.check_compatible(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| op(*a, *b))
            .collect();
        Ok(GridFunction {
            ts: Arc::clone(&self.ts),
            dim: self.dim,
            values,
        })
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction, CalcError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn mul(&self, other: &GridFunction) -> Result<GridFunction, CalcError> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn map(&self, op: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            ts: Arc::clone(&self.ts),
            dim: self.dim,
            values: self.values.iter().map(|v| op(*v)).collect(),
        }
    }

    pub fn scale(&self, alpha: f64) -> GridFunction {
        self.map(|v| alpha * v)
    }

    /// `f^rho(t) = f(rho(t))` sampled on the grid.
    pub fn shifted_rho(&self) -> GridFunction {
        let mut values = Vec::with_capacity(self.values.len());
        for i in 0..self.ts.len() {
            values.extend_from_slice(self.value(self.ts.rho_index(i)));
        }
        GridFunction {
            ts: Arc::clone(&self.ts),
            dim: self.dim,
            values,
        }
    }
}

/// Backward quotient at grid index `i`; the minimum borrows the quotient of
/// its successor. Shared by every derivative in the crate.
pub(crate) fn backward_quotient(ts: &TimeScale, values: &[f64], dim: usize, i: usize, k: usize) -> f64 {
    let j = i.max(1);
    (values[j * dim + k] - values[(j - 1) * dim + k]) / (ts.point(j) - ts.point(j - 1))
}

/// Nabla derivative of `f` at the grid point `t`.
pub fn derivative_at(f: &GridFunction, t: f64) -> Result<Vec<f64>, CalcError> {
    let ts = f.time_scale();
    let i = ts.index_of(t)?;
    if !ts.in_kappa_at(i) {
        return Err(CalcError::OutsideKappa(t));
    }
    Ok((0..f.dim())
        .map(|k| backward_quotient(ts, f.values(), f.dim(), i, k))
        .collect())
}

/// Nabla derivative on the whole grid. When the minimum is right-scattered it
/// lies outside the differentiable domain and its entry is copied from the
/// successor; [`TimeScale::kappa_excludes_minimum`] flags that case.
pub fn derivative(f: &GridFunction) -> GridFunction {
    let ts = f.time_scale();
    let dim = f.dim();
    let mut values = Vec::with_capacity(f.values().len());
    for i in 0..ts.len() {
        for k in 0..dim {
            values.push(backward_quotient(ts, f.values(), dim, i, k));
        }
    }
    GridFunction {
        ts: Arc::clone(ts),
        dim,
        values,
    }
}

/// Index-based integral over `(ia, ib]`, scalar component `k`.
pub(crate) fn integral_indices(ts: &TimeScale, values: &[f64], dim: usize, k: usize, ia: usize, ib: usize) -> f64 {
    ((ia + 1)..=ib)
        .map(|i| ts.step_at(i) * values[i * dim + k])
        .collect::<NeumaierSum>()
        .value()
}

/// Nabla integral of `f` from `a` to `b` (both grid points, `a <= b`).
pub fn integral(f: &GridFunction, a: f64, b: f64) -> Result<Vec<f64>, CalcError> {
    let ts = f.time_scale();
    let ia = ts.index_of(a)?;
    let ib = ts.index_of(b)?;
    if ia > ib {
        return Err(CalcError::ReversedBounds { a, b });
    }
    Ok((0..f.dim())
        .map(|k| integral_indices(ts, f.values(), f.dim(), k, ia, ib))
        .collect())
}

/// `∫_{rho(t)}^{t} f = nu(t) f(t)`.
pub fn local_rho_integral(f: &GridFunction, t: f64) -> Result<Vec<f64>, CalcError> {
    let ts = f.time_scale();
    let i = ts.index_of(t)?;
    if !ts.in_kappa_at(i) {
        return Err(CalcError::OutsideKappa(t));
    }
    let nu = ts.nu_at(i);
    let out: Vec<f64> = f.value(i).iter().map(|v| nu * v).collect();
    debug_assert!(
        !ts.is_left_scattered_at(i) || integral(f, ts.point(ts.rho_index(i)), t)? == out,
        "local integral identity violated at t = {t}"
    );
    Ok(out)
}

/// `|∫ f g^∇ - [f g]_a^b + ∫ f^∇ g^ρ|` for scalar `f`, `g`.
pub fn integration_by_parts_residual(
    f: &GridFunction,
    g: &GridFunction,
    a: f64,
    b: f64,
) -> Result<f64, CalcError> {
    f.check_compatible(g)?;
    if f.dim() != 1 {
        return Err(CalcError::DimensionMismatch {
            expected: 1,
            got: f.dim(),
        });
    }
    let lhs = integral(&f.mul(&derivative(g))?, a, b)?[0];
    let boundary = f.at(b)?[0] * g.at(b)?[0] - f.at(a)?[0] * g.at(a)?[0];
    let correction = integral(&derivative(f).mul(&g.shifted_rho())?, a, b)?[0];
    Ok((lhs - boundary + correction).abs())
}

/// Partial integrals `S(T') = ∫_a^{T'} f` for every grid point `T' > a`.
pub fn partial_integrals(f: &GridFunction, a: f64) -> Result<Vec<(f64, f64)>, CalcError> {
    if f.dim() != 1 {
        return Err(CalcError::DimensionMismatch {
            expected: 1,
            got: f.dim(),
        });
    }
    let ts = f.time_scale();
    let ia = ts.index_of(a)?;
    let mut acc = NeumaierSum::new();
    let mut out = Vec::with_capacity(ts.len() - ia - 1);
    for i in (ia + 1)..ts.len() {
        acc.add(ts.step_at(i) * f.values()[i]);
        out.push((ts.point(i), acc.value()));
    }
    Ok(out)
}

/// `inf { value : T' >= T }`.
pub fn liminf_tail(seq: &[(f64, f64)], t: f64) -> Result<f64, CalcError> {
    seq.iter()
        .filter(|(tp, _)| *tp >= t)
        .map(|(_, v)| *v)
        .reduce(f64::min)
        .ok_or(CalcError::EmptyTail(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailBehavior {
    Settled,
    DivergingUp,
    DivergingDown,
    Unsettled,
}

/// Estimate of `lim_{T→∞} inf_{T' ≥ T}` on a truncated sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiminfEstimate {
    /// Tail infimum over the last quarter of the sequence.
    pub value: f64,
    /// Tail infimum over the last half.
    pub half_value: f64,
    pub settled: bool,
    pub behavior: TailBehavior,
}

/// Final-quarter tail infimum with a Cauchy check against the final half.
/// A tail that is not settled but moves monotonically by more than
/// `divergence_threshold` across the last half is reported as diverging.
pub fn liminf_estimate(
    seq: &[(f64, f64)],
    tol: f64,
    divergence_threshold: f64,
) -> Result<LiminfEstimate, CalcError> {
    let n = seq.len();
    if n == 0 {
        return Err(CalcError::EmptyTail(f64::NAN));
    }
    let quarter = seq[n - n.div_ceil(4)].0;
    let half = seq[n - n.div_ceil(2)].0;
    let value = liminf_tail(seq, quarter)?;
    let half_value = liminf_tail(seq, half)?;
    let settled = (value - half_value).abs() <= tol;
    let tail = &seq[n - n.div_ceil(2)..];
    let rise = tail[tail.len() - 1].1 - tail[0].1;
    let behavior = if settled {
        TailBehavior::Settled
    } else if tail.windows(2).all(|w| w[1].1 >= w[0].1) && rise > divergence_threshold {
        TailBehavior::DivergingUp
    } else if tail.windows(2).all(|w| w[1].1 <= w[0].1) && -rise > divergence_threshold {
        TailBehavior::DivergingDown
    } else {
        TailBehavior::Unsettled
    };
    Ok(LiminfEstimate {
        value,
        half_value,
        settled,
        behavior,
    })
}
