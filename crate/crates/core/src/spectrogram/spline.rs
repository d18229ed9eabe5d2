//! Natural cubic spline interpolation over a fixed set of knots.
//!
//! The tridiagonal system depends only on the knot positions, so the Thomas
//! elimination factors are computed once and reused for every frame.

pub(crate) struct NaturalSpline {
    xs: Vec<f64>,
    h: Vec<f64>,
    // Forward-elimination factors for the interior equations.
    upper: Vec<f64>,
    pivot: Vec<f64>,
}

impl NaturalSpline {
    /// `xs` must be strictly increasing with at least two knots.
    pub(crate) fn new(xs: Vec<f64>) -> Self {
        assert!(xs.len() >= 2, "spline needs at least two knots");
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(h.iter().all(|&d| d > 0.0), "knots must be strictly increasing");
        let interior = xs.len().saturating_sub(2);
        let mut upper = vec![0.0; interior];
        let mut pivot = vec![0.0; interior];
        for i in 0..interior {
            let diag = 2.0 * (h[i] + h[i + 1]);
            let sub = h[i];
            let p = if i == 0 { diag } else { diag - sub * upper[i - 1] };
            pivot[i] = p;
            upper[i] = h[i + 1] / p;
        }
        Self { xs, h, upper, pivot }
    }

    pub(crate) fn knots(&self) -> &[f64] {
        &self.xs
    }

    /// Second derivatives at every knot, zero at both ends.
    pub(crate) fn second_derivatives(&self, ys: &[f64], out: &mut Vec<f64>) {
        let n = self.xs.len();
        debug_assert_eq!(ys.len(), n);
        out.clear();
        out.resize(n, 0.0);
        let interior = n - 2;
        if interior == 0 {
            return;
        }
        let h = &self.h;
        // Forward sweep writes the modified right-hand side into out[1..n-1].
        for i in 0..interior {
            let rhs = 6.0 * ((ys[i + 2] - ys[i + 1]) / h[i + 1] - (ys[i + 1] - ys[i]) / h[i]);
            let prev = if i == 0 { 0.0 } else { out[i] };
            out[i + 1] = (rhs - h[i] * prev) / self.pivot[i];
        }
        for i in (0..interior - 1).rev() {
            out[i + 1] -= self.upper[i] * out[i + 2];
        }
    }

    /// Index `i` of the interval `[x_i, x_{i+1}]` containing `x`, clamped to
    /// the first and last intervals.
    pub(crate) fn locate(&self, x: f64) -> usize {
        let i = self.xs.partition_point(|&k| k <= x);
        i.saturating_sub(1).min(self.xs.len() - 2)
    }

    pub(crate) fn eval_in(&self, ys: &[f64], m: &[f64], i: usize, x: f64) -> f64 {
        let h = self.h[i];
        let a = self.xs[i + 1] - x;
        let b = x - self.xs[i];
        m[i] * a * a * a / (6.0 * h)
            + m[i + 1] * b * b * b / (6.0 * h)
            + (ys[i] / h - m[i] * h / 6.0) * a
            + (ys[i + 1] / h - m[i + 1] * h / 6.0) * b
    }
}
