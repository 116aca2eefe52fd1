//! Finite computational time scales.
//!
//! A [`TimeScale`] is a strictly increasing grid `t_0 < t_1 < ... < t_m` where
//! every adjacent pair is tagged either as a true hole in the scale
//! ([`GapKind::Scattered`]) or as a sample of a continuum interval
//! ([`GapKind::DenseSample`]). Jump operators, graininess and point
//! classification are read off the gap tags. Arithmetic on scattered gaps is
//! exact; dense samples approximate the continuum at the local step.
//!
//! Grid membership is exact: callers pass the `f64` values handed out by the
//! scale itself (`points()`), no nearest-point snapping takes place.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScaleError {
    #[error("point {0} is not in the time scale")]
    NotInScale(f64),
    #[error("a time scale needs at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("points must be finite and strictly increasing (violated at index {index})")]
    NonMonotone { index: usize },
    #[error("expected {expected} gap kinds, got {got}")]
    GapCountMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Kind of the hole between two adjacent grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GapKind {
    Scattered,
    DenseSample,
}

impl fmt::Display for GapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GapKind::Scattered => f.write_str("scattered"),
            GapKind::DenseSample => f.write_str("dense"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Dense,
    Scattered,
}

/// Left/right classification of a grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PointClass {
    pub left: Side,
    pub right: Side,
}

impl PointClass {
    pub fn is_isolated(&self) -> bool {
        self.left == Side::Scattered && self.right == Side::Scattered
    }

    pub fn is_dense(&self) -> bool {
        self.left == Side::Dense && self.right == Side::Dense
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeScale {
    points: Vec<f64>,
    gaps: Vec<GapKind>,
    unbounded_above: bool,
}

impl TimeScale {
    pub fn from_points(points: Vec<f64>, gaps: Vec<GapKind>) -> Result<Self, ScaleError> {
        if points.len() < 2 {
            return Err(ScaleError::TooFewPoints(points.len()));
        }
        if gaps.len() != points.len() - 1 {
            return Err(ScaleError::GapCountMismatch {
                expected: points.len() - 1,
                got: gaps.len(),
            });
        }
        for (i, p) in points.iter().enumerate() {
            if !p.is_finite() || (i > 0 && points[i - 1] >= *p) {
                return Err(ScaleError::NonMonotone { index: i });
            }
        }
        Ok(TimeScale {
            points,
            gaps,
            unbounded_above: false,
        })
    }

    /// `Z ∩ [a, b]`.
    pub fn integers(a: i64, b: i64) -> Result<Self, ScaleError> {
        if b <= a {
            return Err(ScaleError::InvalidParameter(format!(
                "integers({a}, {b}) needs a < b"
            )));
        }
        let points: Vec<f64> = (a..=b).map(|k| k as f64).collect();
        let gaps = vec![GapKind::Scattered; points.len() - 1];
        Self::from_points(points, gaps)
    }

    /// `hZ ∩ [a, b]` anchored at `a`; `(b - a) / h` must be an integer.
    pub fn uniform(a: f64, b: f64, h: f64) -> Result<Self, ScaleError> {
        let points = regular_points(a, b, h, "uniform")?;
        let gaps = vec![GapKind::Scattered; points.len() - 1];
        Self::from_points(points, gaps)
    }

    /// The continuum `[a, b]` sampled with `n` equal subintervals.
    pub fn sampled_interval(a: f64, b: f64, n: usize) -> Result<Self, ScaleError> {
        if n == 0 || !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(ScaleError::InvalidParameter(format!(
                "sampled_interval({a}, {b}, {n}) needs a < b and n >= 1"
            )));
        }
        let width = b - a;
        let mut points: Vec<f64> = (0..=n).map(|k| a + width * (k as f64) / (n as f64)).collect();
        points[n] = b;
        let gaps = vec![GapKind::DenseSample; n];
        Self::from_points(points, gaps)
    }

    /// `{t0, t0 q, t0 q^2, ...}` with `count` points.
    pub fn q_scale(q: f64, t0: f64, count: usize) -> Result<Self, ScaleError> {
        if !(q > 1.0) || !(t0 > 0.0) || count < 2 {
            return Err(ScaleError::InvalidParameter(format!(
                "q_scale({q}, {t0}, {count}) needs q > 1, t0 > 0, count >= 2"
            )));
        }
        let mut points = Vec::with_capacity(count);
        let mut t = t0;
        for _ in 0..count {
            points.push(t);
            t *= q;
        }
        let gaps = vec![GapKind::Scattered; count - 1];
        Self::from_points(points, gaps)
    }

    /// Disjoint union of scales; the gap joining two consecutive parts is a
    /// hole of the union and is therefore scattered.
    pub fn union(parts: &[TimeScale]) -> Result<Self, ScaleError> {
        let mut builder = TimeScaleBuilder::new();
        for part in parts {
            builder = builder.scale(part.clone());
        }
        builder.build()
    }

    pub fn builder() -> TimeScaleBuilder {
        TimeScaleBuilder::new()
    }

    /// Marks the represented scale as unbounded above; the grid is then a
    /// truncation whose last gap kind extends beyond `t_m`.
    pub fn with_unbounded_above(mut self, unbounded: bool) -> Self {
        self.unbounded_above = unbounded;
        self
    }

    pub fn unbounded_above(&self) -> bool {
        self.unbounded_above
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn gap_kinds(&self) -> &[GapKind] {
        &self.gaps
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min(&self) -> f64 {
        self.points[0]
    }

    pub fn max(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    pub fn point(&self, i: usize) -> f64 {
        self.points[i]
    }

    /// Exact grid lookup.
    pub fn index_of(&self, t: f64) -> Result<usize, ScaleError> {
        if t.is_nan() {
            return Err(ScaleError::NotInScale(t));
        }
        self.points
            .binary_search_by(|p| p.total_cmp(&t))
            .map_err(|_| ScaleError::NotInScale(t))
    }

    pub fn contains(&self, t: f64) -> bool {
        self.index_of(t).is_ok()
    }

    pub fn rho_index(&self, i: usize) -> usize {
        if i > 0 && self.gaps[i - 1] == GapKind::Scattered {
            i - 1
        } else {
            i
        }
    }

    pub fn sigma_index(&self, i: usize) -> usize {
        if i + 1 < self.points.len() && self.gaps[i] == GapKind::Scattered {
            i + 1
        } else {
            i
        }
    }

    /// Backward jump operator.
    pub fn rho(&self, t: f64) -> Result<f64, ScaleError> {
        let i = self.index_of(t)?;
        Ok(self.points[self.rho_index(i)])
    }

    /// Forward jump operator.
    pub fn sigma(&self, t: f64) -> Result<f64, ScaleError> {
        let i = self.index_of(t)?;
        Ok(self.points[self.sigma_index(i)])
    }

    /// Backward graininess `t - rho(t)`.
    pub fn nu(&self, t: f64) -> Result<f64, ScaleError> {
        let i = self.index_of(t)?;
        Ok(self.nu_at(i))
    }

    pub fn nu_at(&self, i: usize) -> f64 {
        self.points[i] - self.points[self.rho_index(i)]
    }

    /// Quadrature weight of grid point `i` in a nabla integral: the graininess
    /// at left-scattered points and the sample step at left-dense points.
    /// Both equal `t_i - t_{i-1}`; the minimum carries no weight.
    pub fn step_at(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.points[i] - self.points[i - 1]
        }
    }

    pub fn classify(&self, t: f64) -> Result<PointClass, ScaleError> {
        let i = self.index_of(t)?;
        Ok(self.classify_at(i))
    }

    pub fn classify_at(&self, i: usize) -> PointClass {
        let side = |j: usize, k: usize| if j == k { Side::Dense } else { Side::Scattered };
        PointClass {
            left: side(self.rho_index(i), i),
            right: side(self.sigma_index(i), i),
        }
    }

    pub fn is_left_scattered_at(&self, i: usize) -> bool {
        self.rho_index(i) != i
    }

    /// True when the minimum is right-scattered and hence excluded from the
    /// nabla-differentiable domain.
    pub fn kappa_excludes_minimum(&self) -> bool {
        self.gaps[0] == GapKind::Scattered
    }

    pub fn kappa_start(&self) -> usize {
        usize::from(self.kappa_excludes_minimum())
    }

    pub fn in_kappa_at(&self, i: usize) -> bool {
        i >= self.kappa_start()
    }

    /// Grid points of the scale with a right-scattered minimum removed.
    pub fn kappa_set(&self) -> Vec<f64> {
        self.points[self.kappa_start()..].to_vec()
    }

    pub fn all_scattered(&self) -> bool {
        self.gaps.iter().all(|g| *g == GapKind::Scattered)
    }
}

fn regular_points(a: f64, b: f64, h: f64, what: &str) -> Result<Vec<f64>, ScaleError> {
    if !(h > 0.0) || !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(ScaleError::InvalidParameter(format!(
            "{what}({a}, {b}, {h}) needs a < b and h > 0"
        )));
    }
    let steps = (b - a) / h;
    let n = steps.round();
    if (steps - n).abs() > 1e-9 * steps.max(1.0) || n < 1.0 {
        return Err(ScaleError::InvalidParameter(format!(
            "{what}: (b - a) / h = {steps} is not a positive integer"
        )));
    }
    let n = n as usize;
    let mut points: Vec<f64> = (0..=n).map(|k| a + (k as f64) * h).collect();
    points[n] = b;
    Ok(points)
}

enum Piece {
    Isolated(f64),
    Scale(TimeScale),
}

/// Assembles a scale from isolated points and sub-scales. Consecutive pieces
/// are joined by scattered gaps.
#[derive(Default)]
pub struct TimeScaleBuilder {
    pieces: Vec<Piece>,
    unbounded_above: bool,
}

impl TimeScaleBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn isolated(mut self, t: f64) -> Self {
        self.pieces.push(Piece::Isolated(t));
        self
    }

    pub fn scale(mut self, ts: TimeScale) -> Self {
        self.pieces.push(Piece::Scale(ts));
        self
    }

    pub fn sampled(self, a: f64, b: f64, n: usize) -> Result<Self, ScaleError> {
        Ok(self.scale(TimeScale::sampled_interval(a, b, n)?))
    }

    pub fn unbounded_above(mut self, unbounded: bool) -> Self {
        self.unbounded_above = unbounded;
        self
    }

    pub fn build(mut self) -> Result<TimeScale, ScaleError> {
        let first = |p: &Piece| match p {
            Piece::Isolated(t) => *t,
            Piece::Scale(ts) => ts.min(),
        };
        if self.pieces.iter().any(|p| first(p).is_nan()) {
            return Err(ScaleError::InvalidParameter("NaN point".into()));
        }
        self.pieces.sort_by(|p, q| first(p).total_cmp(&first(q)));
        let mut points = Vec::new();
        let mut gaps = Vec::new();
        for piece in self.pieces {
            if !points.is_empty() {
                gaps.push(GapKind::Scattered);
            }
            match piece {
                Piece::Isolated(t) => points.push(t),
                Piece::Scale(ts) => {
                    points.extend_from_slice(&ts.points);
                    gaps.extend_from_slice(&ts.gaps);
                }
            }
        }
        Ok(TimeScale::from_points(points, gaps)?.with_unbounded_above(self.unbounded_above))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn junction() -> TimeScale {
        TimeScale::builder()
            .isolated(0.0)
            .sampled(1.0, 2.0, 4)
            .unwrap()
            .build()
            .unwrap()
    }

    #[test]
    fn jumps_on_integers() {
        let z = TimeScale::integers(0, 5).unwrap();
        assert_eq!(z.rho(3.0).unwrap(), 2.0);
        assert_eq!(z.sigma(3.0).unwrap(), 4.0);
        assert_eq!(z.nu(3.0).unwrap(), 1.0);
        assert!(z.classify(3.0).unwrap().is_isolated());
        assert_eq!(z.rho(0.0).unwrap(), 0.0);
        assert_eq!(z.sigma(5.0).unwrap(), 5.0);
        assert_eq!(z.kappa_set(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn jumps_on_sampled_interval() {
        let s = TimeScale::sampled_interval(0.0, 1.0, 4).unwrap();
        assert_eq!(s.points(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(s.gap_kinds().iter().all(|g| *g == GapKind::DenseSample));
        assert_eq!(s.rho(0.5).unwrap(), 0.5);
        assert_eq!(s.sigma(0.5).unwrap(), 0.5);
        assert_eq!(s.nu(0.5).unwrap(), 0.0);
        assert!(s.classify(0.5).unwrap().is_dense());
        assert_eq!(s.kappa_set(), s.points().to_vec());
    }

    #[test]
    fn jumps_on_q_scale() {
        let q = TimeScale::q_scale(2.0, 1.0, 4).unwrap();
        assert_eq!(q.points(), &[1.0, 2.0, 4.0, 8.0]);
        assert_eq!(q.sigma(2.0).unwrap(), 4.0);
        assert_eq!(q.nu(8.0).unwrap(), 4.0);
    }

    #[test]
    fn junction_point_is_left_scattered_right_dense() {
        let ts = junction();
        assert_eq!(ts.rho(1.0).unwrap(), 0.0);
        let c = ts.classify(1.0).unwrap();
        assert_eq!(c.left, Side::Scattered);
        assert_eq!(c.right, Side::Dense);
        assert_eq!(ts.kappa_set(), vec![1.0, 1.25, 1.5, 1.75, 2.0]);
    }

    #[test]
    fn off_grid_is_rejected() {
        let z = TimeScale::integers(0, 5).unwrap();
        assert_eq!(z.rho(2.5), Err(ScaleError::NotInScale(2.5)));
        assert!(z.nu(f64::NAN).is_err());
        assert!(z.classify(7.0).is_err());
    }

    #[test]
    fn builders_reject_bad_input() {
        assert!(TimeScale::from_points(vec![1.0], vec![]).is_err());
        assert!(TimeScale::from_points(vec![], vec![]).is_err());
        assert_eq!(
            TimeScale::from_points(vec![0.0, 2.0, 1.0], vec![GapKind::Scattered; 2]),
            Err(ScaleError::NonMonotone { index: 2 })
        );
        assert!(TimeScale::from_points(vec![0.0, 1.0], vec![]).is_err());
        assert!(TimeScale::uniform(0.0, 1.0, 0.3).is_err());
        assert!(TimeScale::q_scale(1.0, 1.0, 3).is_err());
        assert!(TimeScale::union(&[
            TimeScale::integers(0, 3).unwrap(),
            TimeScale::integers(2, 5).unwrap()
        ])
        .is_err());
    }

    #[test]
    fn uniform_scale_hits_endpoint() {
        let ts = TimeScale::uniform(0.0, 1.0, 0.1).unwrap();
        assert_eq!(ts.len(), 11);
        assert_eq!(ts.max(), 1.0);
        assert!(ts.all_scattered());
    }

    fn arb_scale() -> impl Strategy<Value = TimeScale> {
        prop::collection::vec((0.01f64..3.0, any::<bool>()), 1..40).prop_map(|steps| {
            let mut points = vec![0.0];
            let mut gaps = Vec::new();
            for (h, dense) in steps {
                points.push(points.last().unwrap() + h);
                gaps.push(if dense {
                    GapKind::DenseSample
                } else {
                    GapKind::Scattered
                });
            }
            TimeScale::from_points(points, gaps).unwrap()
        })
    }

    proptest! {
        #[test]
        fn jump_invariants(ts in arb_scale()) {
            for (i, &t) in ts.points().iter().enumerate() {
                let r = ts.rho(t).unwrap();
                let s = ts.sigma(t).unwrap();
                prop_assert!(r <= t && t <= s);
                prop_assert_eq!(ts.nu(t).unwrap(), t - r);
                let c = ts.classify(t).unwrap();
                prop_assert_eq!(ts.nu(t).unwrap() == 0.0, c.left == Side::Dense || i == 0);
                if c.is_isolated() && i > 0 && i + 1 < ts.len() {
                    prop_assert_eq!(ts.rho(s).unwrap(), t);
                }
            }
        }

        #[test]
        fn from_points_round_trip(ts in arb_scale()) {
            let back = TimeScale::from_points(ts.points().to_vec(), ts.gap_kinds().to_vec()).unwrap();
            prop_assert_eq!(back, ts);
        }
    }
}
