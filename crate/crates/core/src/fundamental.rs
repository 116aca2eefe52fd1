//! Constructive fundamental lemma.
//!
//! Given a residual `g` that is not identically zero, build a variation `η`
//! with `η(a) = 0` for which `∫ g η^ρ ∇t > 0`. The construction follows the
//! shape of the classical argument: a polynomial bump on a sign-constant
//! window ending at a left-dense point, or a spike at `ρ(t0)` when `t0` is
//! left-scattered, with a linear bridge or a bump on the left when `ρ(t0)`
//! itself is left-dense.
//!
//! `g(a)` is invisible to every variation (it carries no quadrature weight),
//! and so is `g(σ(a))` when `a` is right-scattered, because it only sees
//! `η(a) = 0`. Only the remaining grid points are tested.

use std::fmt;
use std::sync::Arc;

use crate::nabla::{self, GridFunction, NeumaierSum};
use crate::timescale::TimeScale;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseTag {
    LeftDenseBump,
    ScatteredSpike,
    RhoDenseBump,
    Bridge,
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CaseTag::LeftDenseBump => "LEFT_DENSE_BUMP",
            CaseTag::ScatteredSpike => "SCATTERED_SPIKE",
            CaseTag::RhoDenseBump => "RHO_DENSE_BUMP",
            CaseTag::Bridge => "BRIDGE",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variation {
    pub eta: GridFunction,
    /// Grid indices of the first and last nonzero entries of `eta`.
    pub support: (usize, usize),
    pub case_tag: CaseTag,
    /// The point whose nonzero residual the variation exposes.
    pub t0: f64,
}

impl Variation {
    pub fn support_interval(&self) -> (f64, f64) {
        let ts = self.eta.time_scale();
        (ts.point(self.support.0), ts.point(self.support.1))
    }
}

/// When `g` counts as zero: an absolute bound at left-scattered points and a
/// bound relative to `max |g|` at left-dense ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroTolerance {
    pub scattered: f64,
    pub dense_relative: f64,
}

impl Default for ZeroTolerance {
    fn default() -> Self {
        ZeroTolerance {
            scattered: 1e-10,
            dense_relative: 1e-6,
        }
    }
}

struct Ctx<'a> {
    ts: &'a TimeScale,
    g: &'a [f64],
    tol_scattered: f64,
    tol_dense: f64,
}

impl Ctx<'_> {
    fn testable(&self, i: usize) -> bool {
        i >= 1 && !(i == 1 && self.ts.is_left_scattered_at(1))
    }

    fn tol(&self, i: usize) -> f64 {
        if self.ts.is_left_scattered_at(i) {
            self.tol_scattered
        } else {
            self.tol_dense
        }
    }

    fn significant(&self, i: usize) -> bool {
        self.g[i].abs() > self.tol(i)
    }

    fn dense_gap(&self, i: usize) -> bool {
        // gap between i - 1 and i
        i >= 1 && !self.ts.is_left_scattered_at(i)
    }

    fn variation(&self, eta: Vec<f64>, case_tag: CaseTag, i0: usize) -> Option<Variation> {
        let first = eta.iter().position(|v| *v != 0.0)?;
        let last = eta.iter().rposition(|v| *v != 0.0)?;
        let eta = GridFunction::from_values(Arc::new(self.ts.clone()), 1, eta).ok()?;
        Some(Variation {
            eta,
            support: (first, last),
            case_tag,
            t0: self.ts.point(i0),
        })
    }

    /// Sign-constant run of dense gaps ending at `end`, never reaching `a`.
    fn window_start(&self, end: usize) -> usize {
        let s = self.g[end].signum();
        let mut l = end;
        while l >= 2 && self.dense_gap(l) && self.g[l - 1].signum() == s && self.g[l - 1] != 0.0 {
            l -= 1;
        }
        l
    }

    /// `sign(g(end)) (t_R - t)(t - t_L)` on `[l, end]`, with `t_L = t_{l-1}`.
    fn bump(&self, l: usize, end: usize, t_right: f64) -> Vec<f64> {
        let mut eta = vec![0.0; self.ts.len()];
        let t_left = self.ts.point(l - 1);
        let s = self.g[end].signum();
        for (i, slot) in eta.iter_mut().enumerate().take(end + 1).skip(l) {
            let t = self.ts.point(i);
            *slot = s * (t_right - t) * (t - t_left);
        }
        eta
    }

    /// Bumps on the sign window ending at a left-dense `i0`. The right root
    /// is the next sample when the next gap is dense. Otherwise it is `t0`
    /// itself, so nothing reaches `σ(t0)`, and as a fallback one step past
    /// `t0`, letting `σ(t0)` see `η(t0)`.
    fn left_dense_bumps(&self, i0: usize) -> Vec<Variation> {
        let l = self.window_start(i0);
        let t0 = self.ts.point(i0);
        let mut out = Vec::new();
        if i0 + 1 < self.ts.len() && self.dense_gap(i0 + 1) {
            out.extend(self.variation(self.bump(l, i0, self.ts.point(i0 + 1)), CaseTag::LeftDenseBump, i0));
        } else {
            out.extend(self.variation(self.bump(l, i0, t0), CaseTag::LeftDenseBump, i0));
            let beyond = t0 + self.ts.step_at(i0);
            out.extend(self.variation(self.bump(l, i0, beyond), CaseTag::LeftDenseBump, i0));
        }
        out
    }

    fn scattered(&self, i0: usize) -> Vec<Variation> {
        let p = i0 - 1;
        let mut out = Vec::new();
        if self.ts.is_left_scattered_at(p) {
            let mut eta = vec![0.0; self.ts.len()];
            eta[p] = self.g[i0];
            out.extend(self.variation(eta, CaseTag::ScatteredSpike, i0));
            return out;
        }
        if self.significant(p) {
            let l = self.window_start(p);
            out.extend(self.variation(self.bump(l, p, self.ts.point(p)), CaseTag::RhoDenseBump, i0));
        }
        out.extend(self.bridge(i0));
        out
    }

    /// Linear rise from 0 at `t3` to `g(t0)` at `p = ρ(t0)`, where `t3` sits
    /// just before the quiet run ending at `p`.
    fn bridge(&self, i0: usize) -> Option<Variation> {
        let p = i0 - 1;
        let mut eta = vec![0.0; self.ts.len()];
        let mut s = p;
        while s >= 1 && self.dense_gap(s) && !self.significant(s - 1) {
            s -= 1;
        }
        let i3 = s.saturating_sub(1);
        let (t3, tp) = (self.ts.point(i3), self.ts.point(p));
        for (i, slot) in eta.iter_mut().enumerate().take(p + 1).skip(i3 + 1) {
            *slot = self.g[i0] * (self.ts.point(i) - t3) / (tp - t3);
        }
        eta[p] = self.g[i0];
        self.variation(eta, CaseTag::Bridge, i0)
    }

    fn construct(&self, i0: usize) -> Option<Variation> {
        let options = if self.ts.is_left_scattered_at(i0) {
            self.scattered(i0)
        } else {
            self.left_dense_bumps(i0)
        };
        options.into_iter().find(|v| self.witness(v.eta.values()) > 0.0)
    }

    fn witness(&self, eta: &[f64]) -> f64 {
        witness_sum(self.ts, self.g, eta, 0)
    }

    /// Tries `i0`, then the nearest significant points to it.
    fn construct_near(&self, i0: usize) -> Option<Variation> {
        let mut order: Vec<usize> = (0..self.ts.len())
            .filter(|&i| self.testable(i) && self.significant(i))
            .collect();
        order.sort_by_key(|&i| (i.abs_diff(i0), i));
        order.into_iter().find_map(|i| self.construct(i))
    }
}

fn context<'a>(g: &'a GridFunction, ts: &'a TimeScale, tol: ZeroTolerance) -> Option<Ctx<'a>> {
    if g.dim() != 1 || g.time_scale().points() != ts.points() {
        return None;
    }
    let values = g.values();
    let mut ctx = Ctx {
        ts,
        g: values,
        tol_scattered: tol.scattered,
        tol_dense: 0.0,
    };
    let gmax = (0..ts.len())
        .filter(|&i| ctx.testable(i))
        .fold(0.0, |m: f64, i| m.max(values[i].abs()));
    ctx.tol_dense = tol.dense_relative * gmax;
    Some(ctx)
}

/// A variation exposing the largest testable residual, or `None` when `g`
/// vanishes at every testable point within the default tolerance.
pub fn construct_violating_variation(g: &GridFunction, ts: &TimeScale) -> Option<Variation> {
    construct_violating_variation_with(g, ts, ZeroTolerance::default())
}

pub fn construct_violating_variation_with(g: &GridFunction, ts: &TimeScale, tol: ZeroTolerance) -> Option<Variation> {
    let ctx = context(g, ts, tol)?;
    let mut order: Vec<usize> = (0..ts.len())
        .filter(|&i| ctx.testable(i) && ctx.significant(i))
        .collect();
    order.sort_by(|&i, &j| ctx.g[j].abs().total_cmp(&ctx.g[i].abs()).then(i.cmp(&j)));
    order.into_iter().find_map(|i| ctx.construct(i))
}

/// Construction anchored at a chosen point `t0`; falls back to the nearest
/// significant points when the construction at `t0` itself yields nothing.
pub fn construct_violating_variation_at(
    g: &GridFunction,
    ts: &TimeScale,
    t0: f64,
    tol: ZeroTolerance,
) -> Option<Variation> {
    let ctx = context(g, ts, tol)?;
    let i0 = ts.index_of(t0).ok()?;
    ctx.construct_near(i0)
}

fn witness_sum(ts: &TimeScale, g: &[f64], eta: &[f64], ia: usize) -> f64 {
    ((ia + 1)..ts.len())
        .map(|i| ts.step_at(i) * (g[i] * eta[ts.rho_index(i)]))
        .collect::<NeumaierSum>()
        .value()
}

/// `∫_a^{max} g(t) η(ρ(t)) ∇t`.
pub fn witness_value(g: &GridFunction, eta: &GridFunction, ts: &TimeScale, a: f64) -> f64 {
    let ia = ts.index_of(a).unwrap_or(0);
    witness_sum(ts, g.values(), eta.values(), ia)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DuboisReymond {
    pub is_constant: bool,
    pub spread: f64,
    pub variation: Option<Variation>,
    pub witness: Option<f64>,
}

/// Tests whether `h` is constant by looking for a variation against `h^∇`.
pub fn dubois_reymond_check(h: &GridFunction, ts: &TimeScale, a: f64) -> DuboisReymond {
    let hd = nabla::derivative(h);
    let variation = construct_violating_variation(&hd, ts);
    let witness = variation
        .as_ref()
        .map(|v| witness_value(&hd, &v.eta, ts, a));
    let (lo, hi) = h
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    DuboisReymond {
        is_constant: variation.is_none(),
        spread: hi - lo,
        variation,
        witness,
    }
}
