//! The two measured quantities and their comparison: zero counts, wandering
//! length of the phase-sphere projection, finite-horizon frequency and speed
//! estimators, the lower-bound check, and the perturbation that removes
//! multiple zeros.

use crate::interp::{hermite7, PiecewisePoly};
use crate::ode::{find_zeros, OdeError, State3, Trajectory, ZeroCrossing};
use crate::quad::{adaptive_simpson, QuadError, Quadrature};
use crate::sphere::{RegionConstant, SphereError, SphericalTrack};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("phase vector degenerate near t = {t} (|x| = {norm:e})")]
    Degenerate { t: f64, norm: f64 },
    #[error("second derivative vanishes at degenerate time t = {t}; the zero solution is the only match")]
    FlatDegenerateZero { t: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Sphere(#[from] SphereError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// |d/dt (x/|x|)| computed from the equation itself: the derivative vector
/// is (y', y'', -a y'' - b y' - c y), and the integrand is
/// sqrt(|x'|^2 |x|^2 - (x, x')^2) / |x|^2.
///
/// The minus sign is the expansion of the projected derivative norm; it is
/// cross-checked against finite differences of x/|x| by the test suite.
pub fn wandering_integrand(traj: &Trajectory, t: f64) -> Result<f64, MetricsError> {
    let (s, ds) = traj.rhs(t)?;
    let x = s.as_array();
    let n2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    // the guard is absolute: solutions with a large dynamic range pass
    // through norms far below their sup without being degenerate; non-finite
    // norms (overflowed squares) are rejected the same way
    if !(n2 > 1e-280) || !n2.is_finite() {
        return Err(MetricsError::Degenerate { t, norm: n2.sqrt() });
    }
    let d2 = ds[0] * ds[0] + ds[1] * ds[1] + ds[2] * ds[2];
    let dot = x[0] * ds[0] + x[1] * ds[1] + x[2] * ds[2];
    let g = d2 * n2 - dot * dot;
    Ok(g.max(0.0).sqrt() / n2)
}

/// Arc length traced by x/|x| on [t0, t1], by adaptive quadrature of the
/// closed-form integrand. The returned error estimate reaches `tol` for
/// smooth cases; it honestly reports the larger floor when cancellation
/// noise of the integrand (about sqrt(eps) |x'|/|x|) dominates.
pub fn wandering_length_with_estimate(
    traj: &Trajectory,
    t0: f64,
    t1: f64,
    tol: f64,
) -> Result<Quadrature, MetricsError> {
    if t1 < t0 {
        return Err(MetricsError::Precondition(format!(
            "empty range [{t0}, {t1}]"
        )));
    }
    if t1 == t0 {
        return Ok(Quadrature {
            value: 0.0,
            error_estimate: 0.0,
            evaluations: 0,
        });
    }
    let q = adaptive_simpson(
        |t| {
            wandering_integrand(traj, t).map_err(|e| QuadError::Integrand {
                x: t,
                message: e.to_string(),
            })
        },
        t0,
        t1,
        tol,
    )?;
    Ok(q)
}

/// Arc length traced by x/|x| on [t0, t1]; see
/// [`wandering_length_with_estimate`].
pub fn wandering_length(
    traj: &Trajectory,
    t0: f64,
    t1: f64,
    tol: f64,
) -> Result<f64, MetricsError> {
    Ok(wandering_length_with_estimate(traj, t0, t1, tol)?.value)
}

/// Everything the lower-bound comparison needs for one trajectory.
#[derive(Debug, Clone)]
pub struct OscillationReport {
    pub horizon: f64,
    pub nu: usize,
    pub zeros: Vec<ZeroCrossing>,
    pub gamma: f64,
    pub gamma_tol: f64,
    /// (nu - 5) L_Omega / 2
    pub bound: f64,
    pub margin: f64,
    /// phi(0) - phi(T), unwrapped.
    pub phi_drop: f64,
}

/// Quadrature tolerance used for gamma inside reports.
pub fn report_gamma_tol(horizon: f64) -> f64 {
    1e-9 * (1.0 + horizon)
}

/// Assemble zero count, wandering length, the bound (nu-5) L/2 and its
/// margin, plus the unwrapped azimuth drop as a diagnostic.
pub fn oscillation_report(
    traj: &Trajectory,
    l_omega: &RegionConstant,
) -> Result<OscillationReport, MetricsError> {
    let (t0, t1) = traj.horizon();
    let zeros = find_zeros(traj);
    let nu = zeros.len();
    let requested = report_gamma_tol(t1);
    let q = wandering_length_with_estimate(traj, t0, t1, requested)?;
    let gamma = q.value;
    let gamma_tol = requested.max(q.error_estimate);
    let bound = 0.5 * (nu as f64 - 5.0) * l_omega.value;
    let track = SphericalTrack::from_trajectory(traj, track_samples(traj))?;
    let phi_drop = track.phi_at_start() - track.phi_at_end();
    Ok(OscillationReport {
        horizon: t1,
        nu,
        zeros,
        gamma,
        gamma_tol,
        bound,
        margin: gamma - bound,
        phi_drop,
    })
}

fn track_samples(traj: &Trajectory) -> usize {
    (2 * traj.sample_times().len()).clamp(256, 200_000)
}

/// Finite-horizon stand-ins for the upper/lower wandering speed and zero
/// frequency: max and min of gamma/t and pi nu/t over the tail of the
/// horizon list. These are estimators of the t -> infinity quantities, not
/// the limits themselves.
#[derive(Debug, Clone)]
pub struct RateEstimate {
    pub horizons: Vec<f64>,
    pub gamma_over_t: Vec<f64>,
    pub pi_nu_over_t: Vec<f64>,
    pub mu_hat: f64,
    pub mu_check: f64,
    pub nu_hat: f64,
    pub nu_check: f64,
    pub tail_fraction: f64,
}

pub fn rate_estimate<F>(
    factory: F,
    horizons: &[f64],
    tail_fraction: f64,
) -> Result<RateEstimate, MetricsError>
where
    F: Fn(f64) -> Result<Trajectory, OdeError>,
{
    if horizons.len() < 3 {
        return Err(MetricsError::Precondition(
            "need at least three horizons".into(),
        ));
    }
    if !horizons.windows(2).all(|w| w[0] < w[1]) || horizons[0] <= 0.0 {
        return Err(MetricsError::Precondition(
            "horizons must be positive and increasing".into(),
        ));
    }
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(MetricsError::Precondition(
            "tail fraction must lie in (0, 1]".into(),
        ));
    }
    let mut gamma_over_t = Vec::with_capacity(horizons.len());
    let mut pi_nu_over_t = Vec::with_capacity(horizons.len());
    for &h in horizons {
        let traj = factory(h)?;
        let gamma = wandering_length(&traj, 0.0, h, report_gamma_tol(h))?;
        let nu = find_zeros(&traj).len();
        gamma_over_t.push(gamma / h);
        pi_nu_over_t.push(PI * nu as f64 / h);
    }
    let tail = ((horizons.len() as f64 * tail_fraction).ceil() as usize).max(1);
    let start = horizons.len() - tail;
    let fold = |v: &[f64], pick_max: bool| {
        v[start..]
            .iter()
            .copied()
            .fold(if pick_max { f64::MIN } else { f64::MAX }, |acc, x| {
                if pick_max {
                    acc.max(x)
                } else {
                    acc.min(x)
                }
            })
    };
    Ok(RateEstimate {
        mu_hat: fold(&gamma_over_t, true),
        mu_check: fold(&gamma_over_t, false),
        nu_hat: fold(&pi_nu_over_t, true),
        nu_check: fold(&pi_nu_over_t, false),
        horizons: horizons.to_vec(),
        gamma_over_t,
        pi_nu_over_t,
        tail_fraction,
    })
}

/// Perturbation direction that removes multiple zeros: at each time with
/// y = y' = 0 it takes the value -sign(y''), with three vanishing
/// derivatives, joined by degree-7 two-point Hermite pieces and extended by
/// constants. Adding a small multiple to y keeps every zero and splits the
/// degenerate ones into simple pairs.
pub fn desingularize<F>(y: F, degenerate_times: &[f64]) -> Result<PiecewisePoly, MetricsError>
where
    F: Fn(f64) -> State3,
{
    if degenerate_times.is_empty() {
        return Ok(PiecewisePoly::constant(0.0));
    }
    if !degenerate_times.windows(2).all(|w| w[0] < w[1]) {
        return Err(MetricsError::Precondition(
            "degenerate times must strictly increase".into(),
        ));
    }
    let mut values = Vec::with_capacity(degenerate_times.len());
    for &t in degenerate_times {
        let ddy = y(t).ddy;
        if ddy == 0.0 {
            return Err(MetricsError::FlatDegenerateZero { t });
        }
        values.push(-ddy.signum());
    }
    if degenerate_times.len() == 1 {
        return Ok(PiecewisePoly::constant(values[0]));
    }
    let mut coeffs = Vec::with_capacity(degenerate_times.len() - 1);
    for (w, v) in degenerate_times.windows(2).zip(values.windows(2)) {
        let h = w[1] - w[0];
        let c = hermite7([v[0], 0.0, 0.0, 0.0], [v[1], 0.0, 0.0, 0.0], h);
        coeffs.push(c.to_vec());
    }
    Ok(PiecewisePoly::new(degenerate_times.to_vec(), coeffs))
}
