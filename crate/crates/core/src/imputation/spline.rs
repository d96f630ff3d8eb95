//! Natural cubic spline through arbitrary increasing knots.

/// Piecewise cubic with zero second derivative at both end knots.
#[derive(Debug, Clone)]
pub struct NaturalCubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivative at each knot.
    m: Vec<f64>,
}

impl NaturalCubicSpline {
    /// Builds the spline by solving the tridiagonal system for the knot
    /// second derivatives (Thomas algorithm). Requires at least two knots
    /// with strictly increasing `xs`.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        assert_eq!(xs.len(), ys.len(), "knot arrays differ in length");
        assert!(xs.len() >= 2, "a spline needs at least two knots");
        debug_assert!(xs.windows(2).all(|w| w[0] < w[1]), "knots must increase");
        let n = xs.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
            // Unknowns are m[1..n-1]; row i: h[i-1] m[i-1] + 2(h[i-1]+h[i]) m[i] + h[i] m[i+1] = rhs.
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for j in 0..k {
                let i = j + 1;
                diag[j] = 2.0 * (h[i - 1] + h[i]);
                upper[j] = h[i];
                rhs[j] = 6.0 * ((ys[i + 1] - ys[i]) / h[i] - (ys[i] - ys[i - 1]) / h[i - 1]);
            }
            for j in 1..k {
                let lower = h[j];
                let w = lower / diag[j - 1];
                diag[j] -= w * upper[j - 1];
                rhs[j] -= w * rhs[j - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for j in (0..k - 1).rev() {
                m[j + 1] = (rhs[j] - upper[j] * m[j + 2]) / diag[j];
            }
        }
        Self { xs, ys, m }
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    pub fn second_derivatives(&self) -> &[f64] {
        &self.m
    }

    /// Segment index `i` such that `xs[i] <= x <= xs[i+1]`, clamped to the ends.
    fn segment(&self, x: f64) -> usize {
        let i = self.xs.partition_point(|&k| k <= x);
        i.saturating_sub(1).min(self.xs.len() - 2)
    }

    fn eval_on(&self, i: usize, x: f64) -> f64 {
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let (a, b) = (x1 - x, x - x0);
        self.m[i] * a.powi(3) / (6.0 * h)
            + self.m[i + 1] * b.powi(3) / (6.0 * h)
            + (self.ys[i] / h - self.m[i] * h / 6.0) * a
            + (self.ys[i + 1] / h - self.m[i + 1] * h / 6.0) * b
    }

    fn derivative_on(&self, i: usize, x: f64) -> f64 {
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let (a, b) = (x1 - x, x - x0);
        -self.m[i] * a * a / (2.0 * h) + self.m[i + 1] * b * b / (2.0 * h)
            - (self.ys[i] / h - self.m[i] * h / 6.0)
            + (self.ys[i + 1] / h - self.m[i + 1] * h / 6.0)
    }

    fn second_derivative_on(&self, i: usize, x: f64) -> f64 {
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        (self.m[i] * (x1 - x) + self.m[i + 1] * (x - x0)) / h
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_on(self.segment(x), x)
    }

    /// Value, first and second derivative at knot `k` evaluated from the
    /// segment on its left and the segment on its right.
    pub fn one_sided_at_knot(&self, k: usize) -> ([f64; 3], [f64; 3]) {
        assert!(k > 0 && k + 1 < self.xs.len(), "interior knots only");
        let x = self.xs[k];
        let left = [
            self.eval_on(k - 1, x),
            self.derivative_on(k - 1, x),
            self.second_derivative_on(k - 1, x),
        ];
        let right = [
            self.eval_on(k, x),
            self.derivative_on(k, x),
            self.second_derivative_on(k, x),
        ];
        (left, right)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn three_knot_system_by_hand() {
        let s = NaturalCubicSpline::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.0]);
        assert_eq!(s.second_derivatives(), &[0.0, -3.0, 0.0]);
        assert_relative_eq!(s.eval(0.5), 0.6875, epsilon = 1e-15);
        assert_relative_eq!(s.eval(1.5), 0.6875, epsilon = 1e-15);
    }

    #[test]
    fn two_knots_is_a_line() {
        let s = NaturalCubicSpline::new(vec![2.0, 6.0], vec![1.0, 9.0]);
        assert_relative_eq!(s.eval(3.0), 3.0);
    }

    fn knots() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        prop::collection::vec((0.1f64..5.0, -100.0f64..100.0), 3..30).prop_map(|v| {
            let mut x = 0.0;
            let xs = v.iter().map(|(dx, _)| {
                x += dx;
                x
            });
            (xs.collect(), v.iter().map(|(_, y)| *y).collect())
        })
    }

    proptest! {
        #[test]
        fn interpolates_and_is_c2((xs, ys) in knots()) {
            let s = NaturalCubicSpline::new(xs.clone(), ys.clone());
            for (x, y) in xs.iter().zip(&ys) {
                prop_assert!((s.eval(*x) - y).abs() <= 1e-9 * y.abs().max(1.0));
            }
            for k in 1..xs.len() - 1 {
                let (l, r) = s.one_sided_at_knot(k);
                prop_assert!((l[0] - r[0]).abs() <= 1e-8 * l[0].abs().max(1.0));
                prop_assert!((l[1] - r[1]).abs() <= 1e-8 * l[1].abs().max(1.0));
                prop_assert!((l[2] - r[2]).abs() <= 1e-8 * l[2].abs().max(1.0));
            }
            let last = xs.len() - 1;
            prop_assert_eq!(s.second_derivatives()[0], 0.0);
            prop_assert_eq!(s.second_derivatives()[last], 0.0);
        }

        #[test]
        fn affine_data_gives_affine_spline((xs, _) in knots(), a in -10.0f64..10.0, b in -50.0f64..50.0) {
            let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let s = NaturalCubicSpline::new(xs.clone(), ys);
            for w in xs.windows(2) {
                let mid = 0.5 * (w[0] + w[1]);
                prop_assert!((s.eval(mid) - (a * mid + b)).abs() <= 1e-8 * (a * mid + b).abs().max(1.0));
            }
        }
    }
}
