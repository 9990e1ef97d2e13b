//! Integration of y''' + a(t) y'' + b(t) y' + c(t) y = 0 as a first-order
//! system, with continuous dense output and zero location for y.
//!
//! The stepper is the Dormand–Prince 5(4) pair with the classic quartic
//! continuous extension, so dense evaluation is one order below the step
//! order, which is what the zero refinement and the wandering-length
//! quadrature assume.

use crate::expr::Expression;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h:e}); coefficients may blow up")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("exceeded {max_steps} steps at t = {t}")]
    MaxSteps { t: f64, max_steps: usize },
    #[error("coefficient evaluation failed at t = {t}: {message}")]
    Coefficient { t: f64, message: String },
    #[error("t = {t} outside integrated horizon [{t0}, {t1}]")]
    OutOfHorizon { t: f64, t0: f64, t1: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("state degenerated to zero at t = {t}")]
    DegenerateState { t: f64 },
    #[error("state left the f64 range at t = {t}")]
    NonFiniteState { t: f64 },
}

/// Solution value and first two derivatives at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State3 {
    pub y: f64,
    pub dy: f64,
    pub ddy: f64,
}

impl State3 {
    pub fn new(y: f64, dy: f64, ddy: f64) -> Self {
        State3 { y, dy, ddy }
    }

    pub fn norm(&self) -> f64 {
        (self.y * self.y + self.dy * self.dy + self.ddy * self.ddy).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.y == 0.0 && self.dy == 0.0 && self.ddy == 0.0
    }

    pub fn scaled(&self, s: f64) -> State3 {
        State3::new(self.y * s, self.dy * s, self.ddy * s)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.y, self.dy, self.ddy]
    }
}

/// Source of the three coefficients (a, b, c) of the equation.
pub trait CoefficientSet: Send + Sync {
    fn eval_coefficients(&self, t: f64) -> Result<[f64; 3], OdeError>;
}

struct ExprCoefficients {
    a: Expression,
    b: Expression,
    c: Expression,
}

impl CoefficientSet for ExprCoefficients {
    fn eval_coefficients(&self, t: f64) -> Result<[f64; 3], OdeError> {
        let wrap = |r: Result<f64, crate::expr::EvalError>| {
            r.map_err(|e| OdeError::Coefficient {
                t,
                message: e.to_string(),
            })
        };
        Ok([
            wrap(self.a.eval(t))?,
            wrap(self.b.eval(t))?,
            wrap(self.c.eval(t))?,
        ])
    }
}

struct FnCoefficients<F>(F);

impl<F> CoefficientSet for FnCoefficients<F>
where
    F: Fn(f64) -> Result<[f64; 3], OdeError> + Send + Sync,
{
    fn eval_coefficients(&self, t: f64) -> Result<[f64; 3], OdeError> {
        (self.0)(t)
    }
}

/// Shared handle to a coefficient set; either parsed expressions or a
/// tabulated/functional source (the synthesized extremal coefficients).
#[derive(Clone)]
pub struct CoefficientSpec {
    inner: Arc<dyn CoefficientSet>,
}

impl CoefficientSpec {
    pub fn from_expressions(a: Expression, b: Expression, c: Expression) -> Self {
        CoefficientSpec {
            inner: Arc::new(ExprCoefficients { a, b, c }),
        }
    }

    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(f64) -> Result<[f64; 3], OdeError> + Send + Sync + 'static,
    {
        CoefficientSpec {
            inner: Arc::new(FnCoefficients(f)),
        }
    }

    pub fn from_set(set: Arc<dyn CoefficientSet>) -> Self {
        CoefficientSpec { inner: set }
    }

    /// Constant coefficients, handy in tests.
    pub fn constant(a: f64, b: f64, c: f64) -> Self {
        Self::from_fn(move |_| Ok([a, b, c]))
    }

    pub fn eval(&self, t: f64) -> Result<[f64; 3], OdeError> {
        self.inner.eval_coefficients(t)
    }
}

impl fmt::Debug for CoefficientSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CoefficientSpec(..)")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IntegrateOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: Option<f64>,
    pub max_steps: usize,
    pub first_step: Option<f64>,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            rtol: 1e-9,
            atol: 1e-12,
            max_step: None,
            max_steps: 4_000_000,
            first_step: None,
        }
    }
}

impl IntegrateOptions {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        IntegrateOptions {
            rtol,
            atol,
            ..Default::default()
        }
    }
}

/// One accepted step with the quartic continuous extension per component.
#[derive(Debug, Clone)]
struct DenseStep {
    t0: f64,
    h: f64,
    /// cont[c] holds the five interpolation coefficients of component c.
    cont: [[f64; 5]; 3],
}

impl DenseStep {
    fn eval(&self, t: f64) -> [f64; 3] {
        let theta = ((t - self.t0) / self.h).clamp(0.0, 1.0);
        let theta1 = 1.0 - theta;
        let mut out = [0.0; 3];
        for c in 0..3 {
            let k = &self.cont[c];
            out[c] = k[0] + theta * (k[1] + theta1 * (k[2] + theta * (k[3] + theta1 * k[4])));
        }
        out
    }
}

/// Dense numerical solution of the equation on [0, T].
pub struct Trajectory {
    spec: CoefficientSpec,
    t_end: f64,
    steps: Vec<DenseStep>,
    rtol: f64,
    atol: f64,
    sup_scale: f64,
    min_sample_norm: f64,
}

impl fmt::Debug for Trajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Trajectory")
            .field("t_end", &self.t_end)
            .field("steps", &self.steps.len())
            .field("rtol", &self.rtol)
            .field("atol", &self.atol)
            .finish()
    }
}

impl Trajectory {
    pub fn spec(&self) -> &CoefficientSpec {
        &self.spec
    }

    pub fn horizon(&self) -> (f64, f64) {
        (0.0, self.t_end)
    }

    pub fn rtol(&self) -> f64 {
        self.rtol
    }

    pub fn atol(&self) -> f64 {
        self.atol
    }

    /// Largest absolute component value seen at step endpoints.
    pub fn sup_scale(&self) -> f64 {
        self.sup_scale
    }

    /// Smallest |x| over step endpoints; positive for any nonzero solution.
    pub fn min_sample_norm(&self) -> f64 {
        self.min_sample_norm
    }

    /// Step-endpoint times, including 0 and T.
    pub fn sample_times(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.steps.iter().map(|s| s.t0).collect();
        out.push(self.t_end);
        out
    }

    /// Continuous evaluation anywhere in the horizon.
    pub fn eval_dense(&self, t: f64) -> Result<State3, OdeError> {
        if !(0.0..=self.t_end).contains(&t) {
            return Err(OdeError::OutOfHorizon {
                t,
                t0: 0.0,
                t1: self.t_end,
            });
        }
        let i = match self
            .steps
            .binary_search_by(|s| s.t0.partial_cmp(&t).unwrap())
        {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        let i = i.min(self.steps.len() - 1);
        let v = self.steps[i].eval(t);
        Ok(State3::new(v[0], v[1], v[2]))
    }

    /// Right-hand side (y', y'', y''') at `t` from the equation itself.
    pub fn rhs(&self, t: f64) -> Result<(State3, [f64; 3]), OdeError> {
        let s = self.eval_dense(t)?;
        let [a, b, c] = self.spec.eval(t)?;
        Ok((s, [s.dy, s.ddy, -(a * s.ddy + b * s.dy + c * s.y)]))
    }
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// dense-output weights (Hairer, Nørsett & Wanner, dopri5 continuous extension)
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

type V3 = [f64; 3];

fn axpy(y: &V3, h: f64, terms: &[(f64, &V3)]) -> V3 {
    let mut out = *y;
    for (coef, k) in terms {
        for i in 0..3 {
            out[i] += h * coef * k[i];
        }
    }
    out
}

/// Integrate the first-order system (y, y', y'')' = (y', y'', -a y'' - b y' - c y).
pub fn integrate(
    spec: &CoefficientSpec,
    init: State3,
    t_end: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory, OdeError> {
    if !(t_end > 0.0) {
        return Err(OdeError::InvalidInput(format!(
            "horizon end {t_end} must be positive"
        )));
    }
    if init.is_zero() {
        return Err(OdeError::InvalidInput(
            "initial state must be nonzero".into(),
        ));
    }
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(OdeError::InvalidInput("tolerances must be positive".into()));
    }

    let f = |t: f64, y: &V3| -> Result<V3, OdeError> {
        let [a, b, c] = spec.eval(t)?;
        Ok([y[1], y[2], -(a * y[2] + b * y[1] + c * y[0])])
    };

    let max_step = opts.max_step.unwrap_or(t_end).min(t_end);
    let mut t = 0.0f64;
    let mut y = init.as_array();
    let mut k1 = f(t, &y)?;
    let mut h = match opts.first_step {
        Some(h0) => h0.min(max_step),
        None => initial_step(&f, t, &y, &k1, opts, t_end)?.min(max_step),
    };

    let mut steps: Vec<DenseStep> = Vec::new();
    let mut sup_scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut min_norm = norm3(&y);
    let mut rejected = false;
    let mut n_steps = 0usize;

    while t < t_end {
        if n_steps >= opts.max_steps {
            return Err(OdeError::MaxSteps {
                t,
                max_steps: opts.max_steps,
            });
        }
        n_steps += 1;
        if h < 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(OdeError::StepSizeUnderflow { t, h });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }

        let k2 = f(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]))?;
        let k3 = f(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]))?;
        let k4 = f(
            t + C4 * h,
            &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
        )?;
        let k5 = f(
            t + C5 * h,
            &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        )?;
        let k6 = f(
            t + h,
            &axpy(
                &y,
                h,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            ),
        )?;
        let y_new = axpy(
            &y,
            h,
            &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
        );
        let k7 = f(t + h, &y_new)?;

        let mut err = 0.0f64;
        for i in 0..3 {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err += (e / sc) * (e / sc);
        }
        err = (err / 3.0).sqrt();

        if err <= 1.0 {
            // accept: build the continuous extension for this step
            let mut cont = [[0.0; 5]; 3];
            for i in 0..3 {
                let ydiff = y_new[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                cont[i] = [
                    y[i],
                    ydiff,
                    bspl,
                    ydiff - h * k7[i] - bspl,
                    h * (D1 * k1[i]
                        + D3 * k3[i]
                        + D4 * k4[i]
                        + D5 * k5[i]
                        + D6 * k6[i]
                        + D7 * k7[i]),
                ];
            }
            steps.push(DenseStep { t0: t, h, cont });

            t = if last { t_end } else { t + h };
            y = y_new;
            k1 = k7; // FSAL
            if !(y[0].is_finite() && y[1].is_finite() && y[2].is_finite()) {
                return Err(OdeError::NonFiniteState { t });
            }
            for v in &y {
                sup_scale = sup_scale.max(v.abs());
            }
            min_norm = min_norm.min(norm3(&y));
            if y[0] == 0.0 && y[1] == 0.0 && y[2] == 0.0 {
                return Err(OdeError::DegenerateState { t });
            }
            let fac = (0.9 * err.powf(-0.2)).clamp(0.2, if rejected { 1.0 } else { 10.0 });
            rejected = false;
            h = (h * fac).min(max_step);
        } else {
            rejected = true;
            h *= (0.9 * err.powf(-0.2)).max(0.2);
        }
    }

    Ok(Trajectory {
        spec: spec.clone(),
        t_end,
        steps,
        rtol: opts.rtol,
        atol: opts.atol,
        sup_scale,
        min_sample_norm: min_norm,
    })
}

fn norm3(v: &V3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn initial_step<F>(
    f: &F,
    t0: f64,
    y0: &V3,
    f0: &V3,
    opts: &IntegrateOptions,
    t_end: f64,
) -> Result<f64, OdeError>
where
    F: Fn(f64, &V3) -> Result<V3, OdeError>,
{
    let sc: Vec<f64> = y0.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let d0 = (y0
        .iter()
        .zip(&sc)
        .map(|(v, s)| (v / s) * (v / s))
        .sum::<f64>()
        / 3.0)
        .sqrt();
    let d1 = (f0
        .iter()
        .zip(&sc)
        .map(|(v, s)| (v / s) * (v / s))
        .sum::<f64>()
        / 3.0)
        .sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(t_end);
    let y1 = axpy(y0, h0, &[(1.0, f0)]);
    let f1 = f(t0 + h0, &y1)?;
    let d2 = (f1
        .iter()
        .zip(f0)
        .zip(&sc)
        .map(|((a, b), s)| ((a - b) / s) * ((a - b) / s))
        .sum::<f64>()
        / 3.0)
        .sqrt()
        / h0;
    let d = d1.max(d2);
    let h1 = if d <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(t_end))
}

/// A located zero of y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroCrossing {
    pub t: f64,
    /// false when |y'| at the zero falls below the non-simple threshold.
    pub simple: bool,
}

/// Threshold on |y'| relative to the local state norm |x(t)| below which a
/// zero is flagged non-simple.
pub const NONSIMPLE_DY_REL: f64 = 1e-8;
/// Depth relative to |x(t)| below which a local minimum of |y| counts as a
/// tangential (double) zero.
pub const TOUCH_REL: f64 = 1e-7;

/// All zeros of y on the closed horizon [0, T].
///
/// Sign changes of the dense output are bracketed and refined until the
/// bracket is narrower than `1e-12 * max(1, T)`. Local minima of |y| dipping
/// below `TOUCH_REL` times the local state norm (with |y'| also small
/// relative to it) are reported as non-simple zeros; sign changes cannot see
/// those. All thresholds scale with |x(t)| at the candidate, so solutions
/// with a large dynamic range are handled the same as mild ones.
pub fn find_zeros(traj: &Trajectory) -> Vec<ZeroCrossing> {
    let (t0, t1) = traj.horizon();
    let width_tol = 1e-12 * t1.max(1.0);

    let state_at = |t: f64| traj.eval_dense(t).unwrap();
    let y_at = |t: f64| state_at(t).y;

    let mut zeros: Vec<ZeroCrossing> = Vec::new();
    let push = |t: f64, zeros: &mut Vec<ZeroCrossing>| {
        if let Some(last) = zeros.last() {
            if (t - last.t).abs() <= 8.0 * width_tol.max(1e-9 * t1.max(1.0)) {
                return;
            }
        }
        let s = state_at(t);
        let simple = s.dy.abs() >= NONSIMPLE_DY_REL * s.norm();
        zeros.push(ZeroCrossing { t, simple });
    };

    let s0 = state_at(t0);
    if s0.y.abs() <= traj.atol().max(1e-13 * s0.norm()) {
        push(t0, &mut zeros);
    }

    const SUBS: usize = 12;
    let mut window: Vec<(f64, f64)> = Vec::with_capacity(3);
    let mut prev = (t0, s0.y);
    window.push(prev);
    for step in &traj.steps {
        for j in 1..=SUBS {
            let t = step.t0 + step.h * j as f64 / SUBS as f64;
            let t = t.min(t1);
            let yv = step.eval(t)[0];
            if prev.1 != 0.0 && yv != 0.0 && prev.1.signum() != yv.signum() {
                if let Some(root) = brent_root(&y_at, prev.0, t, width_tol) {
                    push(root, &mut zeros);
                }
            } else if yv == 0.0 {
                push(t, &mut zeros);
            }
            prev = (t, yv);
            window.push(prev);
            if window.len() > 3 {
                window.remove(0);
            }
            if window.len() == 3 {
                let (ta, ya) = window[0];
                let (tb, yb) = window[1];
                let (tc, yc) = window[2];
                let same_sign = ya.signum() == yb.signum() && yb.signum() == yc.signum();
                let local = state_at(tb).norm();
                if same_sign
                    && ya != 0.0
                    && yb.abs() < ya.abs()
                    && yb.abs() < yc.abs()
                    && yb.abs() <= 100.0 * TOUCH_REL * local
                {
                    let tm = golden_min(|t| y_at(t).abs(), ta, tc, width_tol);
                    let sm = state_at(tm);
                    if sm.y.abs() <= TOUCH_REL * sm.norm()
                        && sm.dy.abs() <= NONSIMPLE_DY_REL * sm.norm()
                    {
                        // tangential zero: insert in order, dedupe against
                        // neighbours
                        if !zeros.iter().any(|z| (z.t - tm).abs() <= 1e-6 * t1.max(1.0)) {
                            zeros.push(ZeroCrossing {
                                t: tm,
                                simple: false,
                            });
                            zeros.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
                        }
                    }
                }
            }
        }
    }
    zeros
}

fn brent_root<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Option<f64> {
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.abs() > fc.abs() {
            std::mem::swap(&mut b, &mut c);
            std::mem::swap(&mut fb, &mut fc);
            if fc.abs() < fb.abs() {
                a = c;
                fa = fc;
            }
        }
        let m = 0.5 * (c - b);
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        if m.abs() <= tol1 || fb == 0.0 {
            return Some(b);
        }
        if e.abs() < tol1 || fa.abs() <= fb.abs() {
            d = m;
            e = m;
        } else {
            let s = fb / fa;
            let (p, q) = if a == c {
                (2.0 * m * s, 1.0 - s)
            } else {
                let q0 = fa / fc;
                let r = fb / fc;
                (
                    s * (2.0 * m * q0 * (q0 - r) - (b - a) * (r - 1.0)),
                    (q0 - 1.0) * (r - 1.0) * (s - 1.0),
                )
            };
            let (p, q) = if p > 0.0 { (p, -q) } else { (-p, q) };
            if 2.0 * p < (3.0 * m * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 {
            d
        } else if m > 0.0 {
            tol1
        } else {
            -tol1
        };
        fb = f(b);
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
    }
    Some(b)
}

fn golden_min<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (a, b);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
