//! Natural cubic spline through 2-D waypoints, reparameterized by arclength.

/// 10-point Gauss–Legendre nodes on [-1, 1] (positive half) and weights.
const GL_NODES: [f64; 5] = [
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];
const GL_WEIGHTS: [f64; 5] = [
    0.295_524_224_714_752_9,
    0.269_266_719_309_996_4,
    0.219_086_362_515_982_0,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_1,
];

/// Integrates `f` over `[a, b]` with 10-point Gauss–Legendre quadrature.
pub fn gauss_legendre<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut sum = 0.0;
    for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
        sum += w * (f(mid - half * x) + f(mid + half * x));
    }
    sum * half
}

/// Natural cubic spline `y(u)` on strictly increasing knots.
#[derive(Debug, Clone, PartialEq)]
struct Cubic1D {
    u: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
}

impl Cubic1D {
    fn new(u: &[f64], y: &[f64]) -> Self {
        let n = u.len();
        let h: Vec<f64> = u.windows(2).map(|w| w[1] - w[0]).collect();
        // Tridiagonal system for c (half the second derivative), natural ends.
        let mut c = vec![0.0; n];
        if n > 2 {
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            for i in 0..m {
                diag[i] = 2.0 * (h[i] + h[i + 1]);
                upper[i] = h[i + 1];
                rhs[i] = 3.0 * ((y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i]);
            }
            // Thomas algorithm; lower diagonal equals h[i] for row i ≥ 1.
            for i in 1..m {
                let w = h[i] / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            let mut sol = vec![0.0; m];
            sol[m - 1] = rhs[m - 1] / diag[m - 1];
            for i in (0..m - 1).rev() {
                sol[i] = (rhs[i] - upper[i] * sol[i + 1]) / diag[i];
            }
            c[1..n - 1].copy_from_slice(&sol);
        }
        let mut b = vec![0.0; n - 1];
        let mut d = vec![0.0; n - 1];
        for i in 0..n - 1 {
            b[i] = (y[i + 1] - y[i]) / h[i] - h[i] * (2.0 * c[i] + c[i + 1]) / 3.0;
            d[i] = (c[i + 1] - c[i]) / (3.0 * h[i]);
        }
        Cubic1D { u: u.to_vec(), a: y.to_vec(), b, c, d }
    }

    fn eval(&self, i: usize, u: f64) -> [f64; 3] {
        let du = u - self.u[i];
        let (a, b, c, d) = (self.a[i], self.b[i], self.c[i], self.d[i]);
        [
            a + du * (b + du * (c + du * d)),
            b + du * (2.0 * c + 3.0 * d * du),
            2.0 * c + 6.0 * d * du,
        ]
    }
}

/// Planar cubic spline with an arclength table.
#[derive(Debug, Clone, PartialEq)]
pub struct Spline2D {
    u: Vec<f64>,
    x: Cubic1D,
    y: Cubic1D,
    /// Arclength at each knot.
    s: Vec<f64>,
}

impl Spline2D {
    /// Fits through `points` using cumulative chord length as the parameter.
    /// Requires at least two points with distinct consecutive entries.
    pub fn new(points: &[[f64; 2]]) -> Self {
        assert!(points.len() >= 2, "spline needs two points");
        let mut u = Vec::with_capacity(points.len());
        u.push(0.0);
        for w in points.windows(2) {
            let chord = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            assert!(chord > 0.0, "consecutive spline points coincide");
            u.push(u.last().unwrap() + chord);
        }
        let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
        let ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
        let mut spline = Spline2D { x: Cubic1D::new(&u, &xs), y: Cubic1D::new(&u, &ys), u, s: Vec::new() };
        let mut s = Vec::with_capacity(spline.u.len());
        s.push(0.0);
        for i in 0..spline.u.len() - 1 {
            let len = spline.span_length(i, spline.u[i], spline.u[i + 1]);
            s.push(s.last().unwrap() + len);
        }
        spline.s = s;
        spline
    }

    pub fn knot_count(&self) -> usize {
        self.u.len()
    }

    pub fn total_length(&self) -> f64 {
        *self.s.last().unwrap()
    }

    pub fn knot_arclength(&self, i: usize) -> f64 {
        self.s[i]
    }

    pub fn param_end(&self) -> f64 {
        *self.u.last().unwrap()
    }

    fn span_of_param(&self, u: f64) -> usize {
        match self.u.binary_search_by(|k| k.partial_cmp(&u).unwrap()) {
            Ok(i) => i.min(self.u.len() - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.u.len() - 2),
        }
    }

    fn span_of_arclength(&self, s: f64) -> usize {
        match self.s.binary_search_by(|k| k.partial_cmp(&s).unwrap()) {
            Ok(i) => i.min(self.s.len() - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.s.len() - 2),
        }
    }

    /// Position, first and second derivative with respect to the parameter.
    pub fn eval_param(&self, u: f64) -> ([f64; 2], [f64; 2], [f64; 2]) {
        let i = self.span_of_param(u);
        let x = self.x.eval(i, u);
        let y = self.y.eval(i, u);
        ([x[0], y[0]], [x[1], y[1]], [x[2], y[2]])
    }

    fn speed(&self, u: f64) -> f64 {
        let (_, d, _) = self.eval_param(u);
        d[0].hypot(d[1])
    }

    fn span_length(&self, i: usize, u0: f64, u1: f64) -> f64 {
        gauss_legendre(
            |u| {
                let x = self.x.eval(i, u);
                let y = self.y.eval(i, u);
                x[1].hypot(y[1])
            },
            u0,
            u1,
        )
    }

    /// Arclength from the start to parameter `u`.
    pub fn arclength_at_param(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, self.param_end());
        let i = self.span_of_param(u);
        self.s[i] + self.span_length(i, self.u[i], u)
    }

    /// Parameter at arclength `s` (clamped to the spline).
    pub fn param_at_arclength(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.total_length());
        let i = self.span_of_arclength(s);
        let (mut lo, mut hi) = (self.u[i], self.u[i + 1]);
        let span = self.s[i + 1] - self.s[i];
        let mut u = if span > 0.0 { lo + (hi - lo) * (s - self.s[i]) / span } else { lo };
        for _ in 0..60 {
            let f = self.s[i] + self.span_length(i, self.u[i], u) - s;
            if f.abs() < 1e-13 {
                break;
            }
            if f > 0.0 {
                hi = u;
            } else {
                lo = u;
            }
            let step = u - f / self.speed(u);
            u = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
        }
        u
    }

    pub fn position(&self, s: f64) -> [f64; 2] {
        self.eval_param(self.param_at_arclength(s)).0
    }

    pub fn heading(&self, s: f64) -> f64 {
        let (_, d, _) = self.eval_param(self.param_at_arclength(s));
        d[1].atan2(d[0])
    }

    /// Signed curvature at arclength `s`.
    pub fn curvature(&self, s: f64) -> f64 {
        let (_, d, dd) = self.eval_param(self.param_at_arclength(s));
        (d[0] * dd[1] - d[1] * dd[0]) / d[0].hypot(d[1]).powi(3)
    }

    /// Refines the parameter of the closest point to `p` near `u0` within `[lo, hi]`.
    pub fn refine_projection(&self, p: [f64; 2], u0: f64, lo: f64, hi: f64) -> f64 {
        let mut u = u0;
        for _ in 0..50 {
            let (r, d, dd) = self.eval_param(u);
            let diff = [r[0] - p[0], r[1] - p[1]];
            let g = diff[0] * d[0] + diff[1] * d[1];
            let gp = d[0] * d[0] + d[1] * d[1] + diff[0] * dd[0] + diff[1] * dd[1];
            if gp <= 0.0 {
                break;
            }
            let next = (u - g / gp).clamp(lo, hi);
            if (next - u).abs() < 1e-14 {
                u = next;
                break;
            }
            u = next;
        }
        u
    }

    /// Coarse parameter samples used to seed projections.
    pub fn seed_params(&self, per_span: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity((self.u.len() - 1) * per_span + 1);
        for w in self.u.windows(2) {
            for k in 0..per_span {
                out.push(w[0] + (w[1] - w[0]) * k as f64 / per_span as f64);
            }
        }
        out.push(self.param_end());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let v = gauss_legendre(|x| x.powi(7) - 3.0 * x.powi(2) + 1.0, 0.0, 2.0);
        assert!((v - (256.0 / 8.0 - 8.0 + 2.0)).abs() < 1e-10);
    }

    #[test]
    fn straight_line_is_exact() {
        let pts: Vec<[f64; 2]> = (0..6).map(|i| [i as f64 * 2.0, 1.0]).collect();
        let sp = Spline2D::new(&pts);
        assert!((sp.total_length() - 10.0).abs() < 1e-12);
        let p = sp.position(3.3);
        assert!((p[0] - 3.3).abs() < 1e-10 && (p[1] - 1.0).abs() < 1e-12);
        assert!(sp.heading(7.0).abs() < 1e-12);
    }

    #[test]
    fn arclength_inversion_round_trips() {
        let pts: Vec<[f64; 2]> =
            (0..40).map(|i| {
                let a = i as f64 * 0.05;
                [10.0 * a.cos(), 10.0 * a.sin()]
            }).collect();
        let sp = Spline2D::new(&pts);
        for k in 0..50 {
            let s = sp.total_length() * k as f64 / 49.0;
            let u = sp.param_at_arclength(s);
            assert!((sp.arclength_at_param(u) - s).abs() < 1e-10);
        }
    }
}
