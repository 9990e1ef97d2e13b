//! Adaptive quadrature used by the geometry and metric integrals.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("integrand failed at x = {x}: {message}")]
    Integrand { x: f64, message: String },
}

/// Result of an adaptive integration: value plus an error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
}

const MAX_DEPTH: usize = 60;

/// Default cap on integrand evaluations. Rough integrands (for instance a
/// cancellation-noise floor under the requested tolerance) stop refining
/// here and the remaining discrepancy goes into the error estimate instead
/// of an unbounded recursion.
pub const DEFAULT_EVAL_BUDGET: usize = 400_000;

/// Adaptive Simpson integration with Richardson extrapolation.
///
/// The classic scheme: a panel is accepted when the two-half Simpson value
/// agrees with the single-panel value to `15 * local tolerance`, and the
/// accepted value gets the (S2 - S1)/15 correction. The interval is
/// pre-split into a prime number of panels and each panel is forced through
/// two refinement levels, so periodic integrands whose nodes would alias
/// the sampling cannot fake early convergence.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64) -> Result<Quadrature, QuadError>
where
    F: Fn(f64) -> Result<f64, QuadError>,
{
    adaptive_simpson_with_budget(f, a, b, tol, DEFAULT_EVAL_BUDGET)
}

/// `adaptive_simpson` with an explicit evaluation budget.
pub fn adaptive_simpson_with_budget<F>(
    f: F,
    a: f64,
    b: f64,
    tol: f64,
    budget: usize,
) -> Result<Quadrature, QuadError>
where
    F: Fn(f64) -> Result<f64, QuadError>,
{
    const PANELS: usize = 11;
    let mut evals = 0usize;
    let mut err_sum = 0.0;
    let mut value = 0.0;
    let panel_tol = tol / PANELS as f64;
    for p in 0..PANELS {
        let pa = if p == 0 {
            a
        } else {
            a + (b - a) * (p as f64 / PANELS as f64)
        };
        let pb = if p + 1 == PANELS {
            b
        } else {
            a + (b - a) * ((p + 1) as f64 / PANELS as f64)
        };
        let fa = f(pa)?;
        let fb = f(pb)?;
        let m = 0.5 * (pa + pb);
        let fm = f(m)?;
        let whole = simpson(pa, pb, fa, fm, fb);
        evals += 3;
        value += recurse(
            &f,
            pa,
            pb,
            fa,
            fm,
            fb,
            whole,
            panel_tol,
            MAX_DEPTH,
            2,
            budget,
            &mut evals,
            &mut err_sum,
        )?;
    }
    Ok(Quadrature {
        value,
        error_estimate: err_sum.max(f64::EPSILON * value.abs()),
        evaluations: evals,
    })
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
    force: usize,
    budget: usize,
    evals: &mut usize,
    err_sum: &mut f64,
) -> Result<f64, QuadError>
where
    F: Fn(f64) -> Result<f64, QuadError>,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    *evals += 2;
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    // stop when converged, unsplittable in f64, out of depth, or out of
    // budget; whatever discrepancy remains is reported, not hidden
    let vanished = m <= a || b <= m;
    let exhausted = depth == 0 || *evals >= budget;
    if (force == 0 && delta.abs() <= 15.0 * tol) || vanished || exhausted {
        *err_sum += delta.abs() / 15.0;
        return Ok(left + right + delta / 15.0);
    }
    let half_tol = 0.5 * tol;
    let deeper = force.saturating_sub(1);
    let l = recurse(
        f,
        a,
        m,
        fa,
        flm,
        fm,
        left,
        half_tol,
        depth - 1,
        deeper,
        budget,
        evals,
        err_sum,
    )?;
    let r = recurse(
        f,
        m,
        b,
        fm,
        frm,
        fb,
        right,
        half_tol,
        depth - 1,
        deeper,
        budget,
        evals,
        err_sum,
    )?;
    Ok(l + r)
}

/// Convenience wrapper for infallible integrands.
pub fn adaptive_simpson_fn<F>(f: F, a: f64, b: f64, tol: f64) -> Result<Quadrature, QuadError>
where
    F: Fn(f64) -> f64,
{
    adaptive_simpson(|x| Ok(f(x)), a, b, tol)
}
