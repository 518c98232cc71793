//! Piecewise-linear curves and their epigraph encoding.

use crate::error::LpError;
use crate::problem::{Problem, Relation};
use crate::scalar::Scalar;

/// Piecewise-linear function through ordered breakpoints `(x, f(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct PwlCurve<T> {
    points: Vec<(T, T)>,
}

impl<T: Scalar> PwlCurve<T> {
    pub fn new(points: Vec<(T, T)>) -> Result<Self, LpError> {
        if points.len() < 2 {
            return Err(LpError::Curve("at least two breakpoints required".into()));
        }
        if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return Err(LpError::Curve("breakpoints must be finite".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(LpError::Curve("x must be strictly increasing".into()));
        }
        Ok(PwlCurve { points })
    }

    /// Straight line through the origin with the given slope over `[0, hi]`.
    pub fn linear(slope: T, hi: T) -> Result<Self, LpError> {
        Self::new(vec![(T::zero(), T::zero()), (hi, slope * hi)])
    }

    pub fn breakpoints(&self) -> &[(T, T)] {
        &self.points
    }

    pub fn domain(&self) -> (T, T) {
        (self.points[0].0, self.points[self.points.len() - 1].0)
    }

    pub fn segments(&self) -> usize {
        self.points.len() - 1
    }

    pub fn slopes(&self) -> Vec<T> {
        self.points
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .collect()
    }

    /// Successive slopes nondecreasing (within `tol`).
    pub fn is_convex(&self, tol: T) -> bool {
        self.slopes().windows(2).all(|s| s[1] >= s[0] - tol)
    }

    pub fn is_concave(&self, tol: T) -> bool {
        self.slopes().windows(2).all(|s| s[1] <= s[0] + tol)
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.slopes().iter().all(|&s| s >= T::zero())
    }

    /// Evaluates by linear interpolation, extending the end segments beyond the domain.
    pub fn eval(&self, x: T) -> T {
        let p = &self.points;
        let k = match p.iter().position(|q| q.0 >= x) {
            Some(0) => 0,
            Some(i) => i - 1,
            None => p.len() - 2,
        };
        let (x0, y0) = p[k];
        let (x1, y1) = p[k + 1];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Evaluates with `x` clamped to the domain; the flag reports whether clamping happened.
    pub fn eval_clamped(&self, x: T) -> (T, bool) {
        let (lo, hi) = self.domain();
        let c = x.max(lo).min(hi);
        (self.eval(c), c != x)
    }

    pub fn scaled(&self, factor: T) -> Self {
        PwlCurve {
            points: self.points.iter().map(|&(x, y)| (x, y * factor)).collect(),
        }
    }
}

/// Chord interpolation of `f` at `segments + 1` equally spaced breakpoints on `[lo, hi]`.
///
/// For convex `f` the result lies on or above `f` everywhere on the interval.
pub fn pwl_convex<T: Scalar, F: Fn(T) -> T>(
    f: F,
    lo: T,
    hi: T,
    segments: usize,
) -> Result<PwlCurve<T>, LpError> {
    if segments == 0 {
        return Err(LpError::Curve("segment count must be at least 1".into()));
    }
    if !(lo < hi) {
        return Err(LpError::Curve("empty interval".into()));
    }
    let k = T::from_usize(segments).expect("segment count fits scalar");
    let points = (0..=segments)
        .map(|i| {
            let x = if i == segments {
                hi
            } else {
                lo + (hi - lo) * T::from_usize(i).expect("index fits scalar") / k
            };
            (x, f(x))
        })
        .collect();
    PwlCurve::new(points)
}

/// Adds an epigraph variable `t >= curve(x_var)` to `problem` and charges
/// `weight * t` in the objective. Returns the epigraph variable's index.
///
/// Every segment contributes one row `t - slope * x >= f_k - slope * x_k`.
/// Minimisation drives `t` onto the upper envelope of those lines, which is
/// the curve itself when it is convex.
pub fn add_pwl_cost<T: Scalar>(
    problem: &mut Problem<T>,
    var: usize,
    curve: &PwlCurve<T>,
    weight: T,
) -> Result<usize, LpError> {
    if var >= problem.num_vars() {
        return Err(LpError::BadIndex {
            constraint: problem.num_constraints(),
            index: var,
            count: problem.num_vars(),
        });
    }
    if weight < T::zero() {
        return Err(LpError::NonConvex);
    }
    if weight > T::zero() && !curve.is_convex(T::tol(1e-12)) {
        return Err(LpError::NonConvex);
    }
    let (lo, hi) = curve.domain();
    let v = &problem.variables[var];
    let inside = v.lower >= lo && v.upper <= hi;
    let floor = if inside {
        curve
            .breakpoints()
            .iter()
            .map(|p| p.1)
            .fold(T::infinity(), T::min)
    } else {
        T::neg_infinity()
    };
    let name = format!("epi_{}", problem.variables[var].name);
    let t = problem.add_var(name.clone(), floor, T::infinity(), weight);
    for (k, (w, slope)) in curve.breakpoints().windows(2).zip(curve.slopes()).enumerate() {
        let (xk, fk) = w[0];
        problem.add_constraint(
            format!("{name}_s{k}"),
            vec![(t, T::one()), (var, -slope)],
            Relation::Ge,
            fk - slope * xk,
        );
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_two_segments() {
        let c = pwl_convex(|x: f64| x * x, 0.0, 1.0, 2).unwrap();
        assert_eq!(c.breakpoints(), &[(0.0, 0.0), (0.5, 0.25), (1.0, 1.0)]);
        assert_eq!(c.eval(0.25), 0.125);
        assert_eq!(c.eval(0.25) - 0.0625, 1.0 / 16.0);
    }

    #[test]
    fn single_chord() {
        let c = pwl_convex(|x: f64| x * x, 0.0, 1.0, 1).unwrap();
        assert_eq!(c.eval(0.5), 0.5);
        assert_eq!(c.eval(0.5) - 0.25, 0.25);
    }

    #[test]
    fn chords_of_a_line_are_exact() {
        let c = pwl_convex(|x: f64| 3.0 * x - 1.0, -2.0, 5.0, 7).unwrap();
        for i in 0..=70 {
            let x = -2.0 + 0.1 * i as f64;
            assert!((c.eval(x) - (3.0 * x - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(pwl_convex(|x: f64| x, 0.0, 1.0, 0).is_err());
        assert!(pwl_convex(|x: f64| x, 1.0, 1.0, 3).is_err());
        assert!(PwlCurve::new(vec![(0.0, 0.0), (0.0, 1.0)]).is_err());
    }

    #[test]
    fn non_convex_curve_rejected() {
        let mut p = Problem::new();
        let x = p.add_var("x", 0.0, 1.0, 0.0);
        let concave = PwlCurve::new(vec![(0.0, 0.0), (0.5, 1.0), (1.0, 1.2)]).unwrap();
        assert_eq!(add_pwl_cost(&mut p, x, &concave, 1.0), Err(LpError::NonConvex));
        assert!(add_pwl_cost(&mut p, x, &concave, 0.0).is_ok());
    }

    #[test]
    fn clamp_reports() {
        let c = PwlCurve::linear(2.0, 10.0).unwrap();
        assert_eq!(c.eval_clamped(12.0), (20.0, true));
        assert_eq!(c.eval_clamped(3.0), (6.0, false));
    }
}
