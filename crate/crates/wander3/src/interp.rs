//! Piecewise-polynomial and Hermite interpolation helpers.
//!
//! Three pieces live here: generic piecewise polynomials with constant
//! extension (used for the multiple-zero perturbation), non-uniform cubic
//! Hermite tables with prescribed slopes (used to invert tabulated monotone
//! functions), and uniform quintic Hermite tables built from values plus two
//! derivatives (used for the mollified boundary curve).

/// Piecewise polynomial in local coordinates `s = t - breaks[i]`,
/// extended by constants (all derivatives zero) outside its breakpoint span.
#[derive(Debug, Clone)]
pub struct PiecewisePoly {
    breaks: Vec<f64>,
    coeffs: Vec<Vec<f64>>,
}

impl PiecewisePoly {
    /// `breaks` must be strictly increasing with `coeffs.len() + 1` entries.
    /// Coefficients are ascending powers of `t - breaks[i]`.
    pub fn new(breaks: Vec<f64>, coeffs: Vec<Vec<f64>>) -> Self {
        assert_eq!(breaks.len(), coeffs.len() + 1, "breaks/segments mismatch");
        assert!(
            breaks.windows(2).all(|w| w[0] < w[1]),
            "breaks must be strictly increasing"
        );
        PiecewisePoly { breaks, coeffs }
    }

    /// A constant function (no interior segments would be ill-formed, so the
    /// constant is stored as a single degenerate segment of width 1).
    pub fn constant(value: f64) -> Self {
        PiecewisePoly {
            breaks: vec![0.0, 1.0],
            coeffs: vec![vec![value]],
        }
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.coeffs.len();
        if t <= self.breaks[0] {
            return (0, 0.0);
        }
        if t >= self.breaks[n] {
            return (n - 1, self.breaks[n] - self.breaks[n - 1]);
        }
        let i = match self.breaks.binary_search_by(|b| b.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(n - 1),
            Err(i) => i - 1,
        };
        (i, t - self.breaks[i])
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eval_derivs(t)[0]
    }

    /// Value and first three derivatives at `t`. Outside the span the
    /// constant extension applies: boundary value, zero derivatives.
    pub fn eval_derivs(&self, t: f64) -> [f64; 4] {
        let n = self.coeffs.len();
        let outside = t < self.breaks[0] || t > self.breaks[n];
        let (i, s) = self.locate(t);
        let c = &self.coeffs[i];
        let mut out = [0.0; 4];
        for k in 0..4 {
            // k-th derivative by Horner on shifted coefficients
            let mut acc = 0.0;
            for j in (k..c.len()).rev() {
                let mut fall = 1.0;
                for m in 0..k {
                    fall *= (j - m) as f64;
                }
                acc = acc * s + c[j] * fall;
            }
            out[k] = acc;
            if outside && k == 0 {
                // clamp produced the boundary value; derivatives are zero
                break;
            }
        }
        out
    }
}

/// Coefficients (ascending powers of `s` on `[0, h]`) of the degree-7
/// polynomial matching value plus three derivatives at both ends.
pub fn hermite7(left: [f64; 4], right: [f64; 4], h: f64) -> [f64; 8] {
    assert!(h > 0.0, "segment width must be positive");
    // scaled variable sigma = s/h; left data fixes a0..a3
    let a0 = left[0];
    let a1 = left[1] * h;
    let a2 = left[2] * h * h / 2.0;
    let a3 = left[3] * h * h * h / 6.0;
    let r = [
        right[0] - (a0 + a1 + a2 + a3),
        right[1] * h - (a1 + 2.0 * a2 + 3.0 * a3),
        right[2] * h * h - (2.0 * a2 + 6.0 * a3),
        right[3] * h * h * h - 6.0 * a3,
    ];
    // q(1), q'(1), q''(1), q'''(1) rows for the a4..a7 block
    let mut m = [
        [1.0, 1.0, 1.0, 1.0, r[0]],
        [4.0, 5.0, 6.0, 7.0, r[1]],
        [12.0, 20.0, 30.0, 42.0, r[2]],
        [24.0, 60.0, 120.0, 210.0, r[3]],
    ];
    solve4(&mut m);
    let sig = [a0, a1, a2, a3, m[0][4], m[1][4], m[2][4], m[3][4]];
    // convert back from sigma-powers to s-powers
    let mut out = [0.0; 8];
    let mut scale = 1.0;
    for (k, c) in sig.iter().enumerate() {
        out[k] = c / scale;
        scale *= h;
        let _ = k;
    }
    out
}

fn solve4(m: &mut [[f64; 5]; 4]) {
    for col in 0..4 {
        let mut pivot = col;
        for row in col + 1..4 {
            if m[row][col].abs() > m[pivot][col].abs() {
                pivot = row;
            }
        }
        m.swap(col, pivot);
        let d = m[col][col];
        for j in col..5 {
            m[col][j] /= d;
        }
        for row in 0..4 {
            if row != col {
                let factor = m[row][col];
                for j in col..5 {
                    m[row][j] -= factor * m[col][j];
                }
            }
        }
    }
}

/// Cubic Hermite table on a non-uniform strictly increasing grid with
/// prescribed slopes.
#[derive(Debug, Clone)]
pub struct CubicHermiteTable {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl CubicHermiteTable {
    pub fn new(x: Vec<f64>, y: Vec<f64>, d: Vec<f64>) -> Self {
        assert!(x.len() >= 2 && x.len() == y.len() && x.len() == d.len());
        assert!(x.windows(2).all(|w| w[0] < w[1]), "abscissae must increase");
        CubicHermiteTable { x, y, d }
    }

    pub fn span(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    pub fn eval(&self, xq: f64) -> f64 {
        self.eval_with_derivative(xq).0
    }

    pub fn eval_with_derivative(&self, xq: f64) -> (f64, f64) {
        let n = self.x.len();
        let i = match self.x.binary_search_by(|v| v.partial_cmp(&xq).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.clamp(1, n - 1) - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let s = (xq - self.x[i]) / h;
        let (y0, y1, d0, d1) = (self.y[i], self.y[i + 1], self.d[i], self.d[i + 1]);
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let value = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
        let g00 = 6.0 * s * (s - 1.0);
        let g10 = (1.0 - s) * (1.0 - 3.0 * s);
        let g01 = -g00;
        let g11 = s * (3.0 * s - 2.0);
        let deriv = (g00 * y0 + g01 * y1) / h + g10 * d0 + g11 * d1;
        (value, deriv)
    }
}

/// Quintic Hermite table on a uniform grid, built from values and first two
/// derivatives, optionally interpreted as periodic over its span.
#[derive(Debug, Clone)]
pub struct QuinticHermiteTable {
    x0: f64,
    h: f64,
    f: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    periodic: bool,
}

impl QuinticHermiteTable {
    pub fn new(x0: f64, h: f64, f: Vec<f64>, d1: Vec<f64>, d2: Vec<f64>, periodic: bool) -> Self {
        assert!(h > 0.0 && f.len() >= 2);
        assert!(f.len() == d1.len() && f.len() == d2.len());
        QuinticHermiteTable {
            x0,
            h,
            f,
            d1,
            d2,
            periodic,
        }
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    pub fn grid_step(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64, f64, f64)> + '_ {
        (0..self.f.len()).map(move |i| {
            (
                self.x0 + i as f64 * self.h,
                self.f[i],
                self.d1[i],
                self.d2[i],
            )
        })
    }

    /// Value and first derivative at `x`.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let n = self.f.len() - 1;
        let span = n as f64 * self.h;
        let mut u = x - self.x0;
        if self.periodic {
            u = u.rem_euclid(span);
        }
        let mut i = (u / self.h).floor() as isize;
        i = i.clamp(0, n as isize - 1);
        let i = i as usize;
        let s = (u - i as f64 * self.h) / self.h;
        let (f0, f1) = (self.f[i], self.f[i + 1]);
        let (p0, p1) = (self.d1[i] * self.h, self.d1[i + 1] * self.h);
        let (q0, q1) = (
            self.d2[i] * self.h * self.h,
            self.d2[i + 1] * self.h * self.h,
        );
        let s2 = s * s;
        let s3 = s2 * s;
        let s4 = s3 * s;
        let s5 = s4 * s;
        let h0 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5;
        let h1 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
        let h2 = 0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5;
        let k0 = 10.0 * s3 - 15.0 * s4 + 6.0 * s5;
        let k1 = -4.0 * s3 + 7.0 * s4 - 3.0 * s5;
        let k2 = 0.5 * s3 - s4 + 0.5 * s5;
        let value = f0 * h0 + p0 * h1 + q0 * h2 + f1 * k0 + p1 * k1 + q1 * k2;
        let dh0 = -30.0 * s2 + 60.0 * s3 - 30.0 * s4;
        let dh1 = 1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4;
        let dh2 = s - 4.5 * s2 + 6.0 * s3 - 2.5 * s4;
        let dk0 = -dh0;
        let dk1 = -12.0 * s2 + 28.0 * s3 - 15.0 * s4;
        let dk2 = 1.5 * s2 - 4.0 * s3 + 2.5 * s4;
        let deriv = (f0 * dh0 + p0 * dh1 + q0 * dh2 + f1 * dk0 + p1 * dk1 + q1 * dk2) / self.h;
        (value, deriv)
    }
}
