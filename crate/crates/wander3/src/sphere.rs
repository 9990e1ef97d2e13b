//! Geometry on the unit sphere of phase space: the region Omega where the
//! azimuth of the phase projection increases, its boundary curve and length,
//! spherical tracks of trajectories, curve surgery, and the winding length
//! floor.
//!
//! Spherical coordinates follow the phase-space convention
//! y = |x| cos(theta) cos(phi), y' = |x| cos(theta) sin(phi),
//! y'' = |x| sin(theta); phi is kept unwrapped (never reduced mod 2 pi).

use crate::ode::{OdeError, State3, Trajectory};
use crate::quad::{adaptive_simpson_fn, QuadError};
use std::f64::consts::PI;
use std::sync::OnceLock;
use thiserror::Error;

/// Relative half-width of the classification band around the boundary.
pub const EPS_BOUNDARY: f64 = 1e-12;
/// Relative pole-proximity tolerance: azimuth is unusable when
/// y^2 + y'^2 < (EPS_POLE |x|)^2.
pub const EPS_POLE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SphereError {
    #[error("point too close to a pole: y^2+y'^2 = {planar:e} with |x| = {norm:e}")]
    Pole { planar: f64, norm: f64 },
    #[error("theta0 is undefined where cos(phi) = 0 (phi = {phi}); use the pi/2 closure")]
    CornerAzimuth { phi: f64 },
    #[error("range [{t0}, {t1}] not inside the track span [{lo}, {hi}]")]
    OutOfRange { t0: f64, t1: f64, lo: f64, hi: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// Point on the unit sphere; `phi` unwrapped, `theta` in [-pi/2, pi/2].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalPoint {
    pub phi: f64,
    pub theta: f64,
}

impl SphericalPoint {
    pub fn new(phi: f64, theta: f64) -> Self {
        debug_assert!(theta.abs() <= PI / 2.0 + 1e-12);
        SphericalPoint { phi, theta }
    }

    /// Embedding into phase space as a unit vector.
    pub fn embed(&self) -> State3 {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        State3::new(ct * cp, ct * sp, st)
    }
}

/// Project a phase state onto the sphere.
///
/// `prev_phi` selects the unwrapped azimuth branch nearest to a previous
/// value; with `None` the principal value of atan2 is returned.
pub fn to_spherical(x: &State3, prev_phi: Option<f64>) -> Result<SphericalPoint, SphereError> {
    let norm = x.norm();
    let planar = x.y * x.y + x.dy * x.dy;
    if planar < (EPS_POLE * norm) * (EPS_POLE * norm) {
        return Err(SphereError::Pole { planar, norm });
    }
    let theta = (x.ddy / norm).clamp(-1.0, 1.0).asin();
    let raw = x.dy.atan2(x.y);
    let phi = match prev_phi {
        Some(p) => raw + 2.0 * PI * ((p - raw) / (2.0 * PI)).round(),
        None => raw,
    };
    Ok(SphericalPoint::new(phi, theta))
}

/// Azimuthal speed (y'' y - y'^2) / (y^2 + y'^2).
pub fn phi_dot(x: &State3) -> Result<f64, SphereError> {
    let planar = x.y * x.y + x.dy * x.dy;
    let norm = x.norm();
    if planar < (EPS_POLE * norm) * (EPS_POLE * norm) {
        return Err(SphereError::Pole { planar, norm });
    }
    Ok((x.ddy * x.y - x.dy * x.dy) / planar)
}

/// Boundary curve of Omega_+: theta0(phi) = arctan(sin^2 phi / cos phi),
/// defined away from cos phi = 0.
pub fn theta0(phi: f64) -> Result<f64, SphereError> {
    let c = phi.cos();
    if c == 0.0 {
        return Err(SphereError::CornerAzimuth { phi });
    }
    let s = phi.sin();
    Ok((s * s / c).atan())
}

/// The closure extension: theta0 on the front band (cos phi > 0), pi/2
/// elsewhere. Continuous and 2 pi-periodic.
pub fn theta0_extended(phi: f64) -> f64 {
    let c = phi.cos();
    if c > 0.0 {
        let s = phi.sin();
        (s * s / c).atan()
    } else {
        PI / 2.0
    }
}

/// Derivative of the extension (zero on the back band, where the extension
/// is constant).
pub fn theta0_extended_prime(phi: f64) -> f64 {
    let c = phi.cos();
    if c > 0.0 {
        let s = phi.sin();
        s * (1.0 + c * c) / (1.0 - s * s * c * c)
    } else {
        0.0
    }
}

/// Where a phase state sits relative to Omega.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    OmegaPlus,
    OmegaMinus,
    Boundary,
    Outside,
}

/// Classify by the sign of q = y y'' - y'^2, with a relative tolerance band
/// |q| <= EPS_BOUNDARY |x|^2 mapped to Boundary.
pub fn classify(x: &State3) -> Classification {
    let q = x.y * x.ddy - x.dy * x.dy;
    let n2 = x.y * x.y + x.dy * x.dy + x.ddy * x.ddy;
    if q.abs() <= EPS_BOUNDARY * n2 {
        Classification::Boundary
    } else if q > 0.0 {
        if x.ddy > 0.0 {
            Classification::OmegaPlus
        } else {
            Classification::OmegaMinus
        }
    } else {
        Classification::Outside
    }
}

/// Reflection across the plane y + y'' = 0, which swaps Omega_- and Omega_+.
pub fn reflect_mirror(x: &State3) -> State3 {
    State3::new(-x.ddy, x.dy, -x.y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMethod {
    Quadrature,
    Polyline,
}

/// The boundary length L_Omega with an error estimate and the method that
/// produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionConstant {
    pub value: f64,
    pub error_estimate: f64,
    pub method: BoundaryMethod,
}

/// Length of the boundary of Omega_+ by adaptive quadrature of the
/// closed-form integrand 4 sqrt(5 - cos a) / (7 + cos a) over [0, pi].
pub fn boundary_length_quadrature(tol: f64) -> Result<RegionConstant, SphereError> {
    let q = adaptive_simpson_fn(
        |a| {
            let c = a.cos();
            4.0 * (5.0 - c).sqrt() / (7.0 + c)
        },
        0.0,
        PI,
        tol,
    )?;
    let rc = RegionConstant {
        value: q.value,
        error_estimate: q.error_estimate.max(tol),
        method: BoundaryMethod::Quadrature,
    };
    check_region_constant(&rc)?;
    Ok(rc)
}

/// Length of the boundary of Omega_+ by embedding theta0 with the pole
/// closure, summing great-circle chords, and Richardson-extrapolating the
/// halved-resolution sum.
pub fn boundary_length_polyline(segments: usize) -> Result<RegionConstant, SphereError> {
    if segments < 4 || segments % 2 != 0 {
        return Err(SphereError::Precondition(
            "polyline needs an even segment count >= 4".into(),
        ));
    }
    let pole = State3::new(0.0, 0.0, 1.0);
    let sum = |n: usize| -> f64 {
        let mut total = 0.0;
        let mut prev = pole;
        for j in 1..=n {
            // phi from -pi/2 to +pi/2; both endpoints land on the pole
            let phi = -PI / 2.0 + PI * j as f64 / n as f64;
            let cur = if j == n {
                pole
            } else {
                SphericalPoint::new(phi, theta0_extended(phi)).embed()
            };
            total += great_circle_distance(&prev, &cur);
            prev = cur;
        }
        total
    };
    let coarse = sum(segments / 2);
    let fine = sum(segments);
    let extrapolated = fine + (fine - coarse) / 3.0;
    let rc = RegionConstant {
        value: extrapolated,
        error_estimate: ((fine - coarse) / 3.0).abs().max(1e-15 * fine),
        method: BoundaryMethod::Polyline,
    };
    check_region_constant(&rc)?;
    Ok(rc)
}

fn check_region_constant(rc: &RegionConstant) -> Result<(), SphereError> {
    // a curve joining (1,0,0) and (0,0,1) twice is at least pi long and the
    // boundary is shorter than a double equator
    if !(rc.value > PI && rc.value < 2.0 * PI) {
        return Err(SphereError::Precondition(format!(
            "boundary length {} outside (pi, 2 pi)",
            rc.value
        )));
    }
    Ok(())
}

/// The shared quadrature value of L_Omega at tolerance 1e-12.
pub fn l_omega() -> &'static RegionConstant {
    static CACHE: OnceLock<RegionConstant> = OnceLock::new();
    CACHE.get_or_init(|| {
        boundary_length_quadrature(1e-12).expect("closed-form boundary quadrature converges")
    })
}

/// Winding-length floor: N L_Omega - |theta_end - theta_start|.
pub fn winding_length_floor(n: u32, theta_start: f64, theta_end: f64) -> Result<f64, SphereError> {
    if n < 1 {
        return Err(SphereError::Precondition(
            "winding count N must be at least 1".into(),
        ));
    }
    Ok(n as f64 * l_omega().value - (theta_end - theta_start).abs())
}

/// Great-circle distance of two phase states interpreted as directions.
pub fn great_circle_distance(a: &State3, b: &State3) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    let dx = a.y / na - b.y / nb;
    let dy = a.dy / na - b.dy / nb;
    let dz = a.ddy / na - b.ddy / nb;
    let chord = 0.5 * (dx * dx + dy * dy + dz * dz).sqrt();
    2.0 * chord.clamp(0.0, 1.0).asin()
}

/// Time-stamped sampling of a phase-sphere track with unwrapped azimuth.
#[derive(Debug, Clone)]
pub struct SphericalTrack {
    pub samples: Vec<(f64, SphericalPoint)>,
    pub pole_events: Vec<f64>,
}

impl SphericalTrack {
    /// Build from explicit samples; verifies azimuth continuity
    /// (|delta phi| < pi between neighbours).
    pub fn from_points(samples: Vec<(f64, SphericalPoint)>) -> Result<Self, SphereError> {
        if samples.len() < 2 {
            return Err(SphereError::Precondition(
                "track needs at least two samples".into(),
            ));
        }
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(SphereError::Precondition(
                    "sample times must strictly increase".into(),
                ));
            }
            if (w[1].1.phi - w[0].1.phi).abs() >= PI {
                return Err(SphereError::Precondition(format!(
                    "azimuth jump {} >= pi between samples; unwrapping is ambiguous",
                    (w[1].1.phi - w[0].1.phi).abs()
                )));
            }
        }
        Ok(SphericalTrack {
            samples,
            pole_events: Vec::new(),
        })
    }

    /// Project a trajectory, refining the sampling until the azimuth moves
    /// by less than pi/2 between consecutive samples. Near-pole states are
    /// recorded as pole events and carry the previous azimuth.
    pub fn from_trajectory(traj: &Trajectory, base_samples: usize) -> Result<Self, SphereError> {
        let (t0, t1) = traj.horizon();
        let n = base_samples.max(8);
        let mut samples: Vec<(f64, SphericalPoint)> = Vec::with_capacity(n + 1);
        let mut pole_events = Vec::new();

        let state0 = traj.eval_dense(t0)?;
        let first = to_spherical(&state0, None)?;
        samples.push((t0, first));

        for j in 1..=n {
            let t = t0 + (t1 - t0) * j as f64 / n as f64;
            refine_into(traj, &mut samples, &mut pole_events, t, 0)?;
        }
        Ok(SphericalTrack {
            samples,
            pole_events,
        })
    }

    pub fn span(&self) -> (f64, f64) {
        (self.samples[0].0, self.samples.last().unwrap().0)
    }

    pub fn phi_at_start(&self) -> f64 {
        self.samples[0].1.phi
    }

    pub fn phi_at_end(&self) -> f64 {
        self.samples.last().unwrap().1.phi
    }
}

fn refine_into(
    traj: &Trajectory,
    samples: &mut Vec<(f64, SphericalPoint)>,
    pole_events: &mut Vec<f64>,
    t: f64,
    depth: usize,
) -> Result<(), SphereError> {
    let (t_prev, prev) = *samples.last().unwrap();
    let state = traj.eval_dense(t)?;
    match to_spherical(&state, Some(prev.phi)) {
        Ok(p) => {
            if (p.phi - prev.phi).abs() < PI / 2.0 || t - t_prev < 1e-13 * t.abs().max(1.0) {
                samples.push((t, p));
                return Ok(());
            }
            if depth > 48 {
                return Err(SphereError::Precondition(format!(
                    "azimuth continuity unattainable near t = {t}"
                )));
            }
            let tm = 0.5 * (t_prev + t);
            refine_into(traj, samples, pole_events, tm, depth + 1)?;
            refine_into(traj, samples, pole_events, t, depth + 1)
        }
        Err(SphereError::Pole { .. }) => {
            // at the pole the azimuth is meaningless; keep the previous one
            pole_events.push(t);
            let theta = (state.ddy / state.norm()).clamp(-1.0, 1.0).asin();
            samples.push((t, SphericalPoint::new(prev.phi, theta)));
            Ok(())
        }
        Err(e) => Err(e),
    }
}

/// Polyline length of the track between t0 and t1, with fractional end
/// segments interpolated linearly in the angles.
pub fn track_length(track: &SphericalTrack, t0: f64, t1: f64) -> Result<f64, SphereError> {
    let (lo, hi) = track.span();
    if t0 < lo - 1e-12 || t1 > hi + 1e-12 || t0 > t1 {
        return Err(SphereError::OutOfRange { t0, t1, lo, hi });
    }
    let pts = &track.samples;
    let point_at = |t: f64| -> SphericalPoint {
        let i = match pts.binary_search_by(|s| s.0.partial_cmp(&t).unwrap()) {
            Ok(i) => return pts[i].1,
            Err(i) => i.clamp(1, pts.len() - 1) - 1,
        };
        let (ta, pa) = pts[i];
        let (tb, pb) = pts[i + 1];
        let s = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
        SphericalPoint::new(
            pa.phi + s * (pb.phi - pa.phi),
            pa.theta + s * (pb.theta - pa.theta),
        )
    };
    let mut total = 0.0;
    let mut prev = point_at(t0).embed();
    for (t, p) in pts.iter() {
        if *t <= t0 || *t >= t1 {
            continue;
        }
        let cur = p.embed();
        total += great_circle_distance(&prev, &cur);
        prev = cur;
    }
    total += great_circle_distance(&prev, &point_at(t1).embed());
    Ok(total)
}

/// Curve surgery for one clockwise loop. The input must start at an azimuth
/// congruent to pi/2 (mod 2 pi), lose exactly 2 pi of azimuth, and stay away
/// from the poles. The result follows, for each azimuth of a uniform grid,
/// the lowest crossing of the input that does not sit inside Omega; its
/// length never exceeds the input length (up to grid slack) and its
/// endpoints are preserved exactly.
pub fn surger(track: &SphericalTrack) -> Result<SphericalTrack, SphereError> {
    let pts = &track.samples;
    if !track.pole_events.is_empty() {
        return Err(SphereError::Precondition(
            "surgery rejects tracks with pole passages".into(),
        ));
    }
    let phi0 = track.phi_at_start();
    let phi1 = track.phi_at_end();
    let tol = 1e-6;
    let k = (phi0 - PI / 2.0) / (2.0 * PI);
    if (k - k.round()).abs() * 2.0 * PI > tol {
        return Err(SphereError::Precondition(format!(
            "loop must start at phi = pi/2 (mod 2 pi), got {phi0}"
        )));
    }
    if ((phi0 - phi1) - 2.0 * PI).abs() > tol {
        return Err(SphereError::Precondition(format!(
            "loop must lose exactly 2 pi of azimuth, got {}",
            phi0 - phi1
        )));
    }
    if pts.iter().any(|(_, p)| p.theta.abs() > PI / 2.0 - 1e-9) {
        return Err(SphereError::Precondition(
            "loop passes a pole; surgery undefined".into(),
        ));
    }

    let n = pts.len().max(16);
    let (t0, t1) = track.span();
    let mut out: Vec<(f64, SphericalPoint)> = Vec::with_capacity(n);
    for j in 0..n {
        let frac = j as f64 / (n - 1) as f64;
        let a = phi0 - 2.0 * PI * frac;
        let theta = if j == 0 {
            pts[0].1.theta
        } else if j == n - 1 {
            pts[pts.len() - 1].1.theta
        } else {
            lowest_admissible_crossing(pts, a)?
        };
        out.push((t0 + (t1 - t0) * frac, SphericalPoint::new(a, theta)));
    }
    Ok(SphericalTrack {
        samples: out,
        pole_events: Vec::new(),
    })
}

/// Minimum theta over crossings of the meridian `a` that classify outside
/// Omega or on its boundary. On a solution-type loop the last crossing in
/// time has non-increasing azimuth and hence qualifies; if grid
/// interpolation leaves only crossings a hair inside Omega_+, the value is
/// clamped to the boundary curve (grid slack). A meridian whose crossings
/// all sit inside Omega_- cannot come from a solution loop and is rejected.
fn lowest_admissible_crossing(pts: &[(f64, SphericalPoint)], a: f64) -> Result<f64, SphereError> {
    let mut best: Option<f64> = None;
    let mut fallback: Option<f64> = None;
    for w in pts.windows(2) {
        let (pa, pb) = (w[0].1, w[1].1);
        let (da, db) = (pa.phi - a, pb.phi - a);
        if da == 0.0 && db == 0.0 {
            continue;
        }
        if da * db <= 0.0 {
            let s = if (db - da).abs() < f64::MIN_POSITIVE {
                0.0
            } else {
                (0.0 - da) / (db - da)
            };
            let theta = pa.theta + s.clamp(0.0, 1.0) * (pb.theta - pa.theta);
            fallback = Some(match fallback {
                Some(f) => theta.min(f),
                None => theta,
            });
            let c = classify(&SphericalPoint::new(a, theta).embed());
            if c == Classification::Outside || c == Classification::Boundary {
                best = Some(match best {
                    Some(b) => theta.min(b),
                    None => theta,
                });
            }
        }
    }
    if let Some(b) = best {
        return Ok(b);
    }
    match fallback {
        Some(theta) => match classify(&SphericalPoint::new(a, theta).embed()) {
            Classification::OmegaPlus => Ok(theta0_extended(a)),
            _ => Err(SphereError::Precondition(format!(
                "meridian phi = {a} is only crossed inside Omega; not a solution-type loop"
            ))),
        },
        None => Err(SphereError::Precondition(format!(
            "no crossing of meridian phi = {a}"
        ))),
    }
}

/// Total polyline length of a track (whole span).
pub fn full_track_length(track: &SphericalTrack) -> f64 {
    track
        .samples
        .windows(2)
        .map(|w| great_circle_distance(&w[0].1.embed(), &w[1].1.embed()))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    const L_REF: f64 = 4.074719732024625; // frozen from the acceptance oracle

    #[test]
    fn spherical_axis_points() {
        let p = to_spherical(&State3::new(1.0, 0.0, 0.0), None).unwrap();
        assert_eq!(p.phi, 0.0);
        assert_eq!(p.theta, 0.0);
        let p = to_spherical(&State3::new(0.0, 1.0, 0.0), None).unwrap();
        assert!((p.phi - PI / 2.0).abs() < 1e-15);
        assert_eq!(p.theta, 0.0);
    }

    #[test]
    fn pole_is_rejected() {
        assert!(matches!(
            to_spherical(&State3::new(0.0, 0.0, 1.0), None),
            Err(SphereError::Pole { .. })
        ));
    }

    #[test]
    fn embedding_is_unit_norm() {
        for i in 0..200 {
            let phi = -10.0 + 0.1 * i as f64;
            let theta = (phi * 0.7).sin() * PI / 2.0 * 0.999;
            let e = SphericalPoint::new(phi, theta).embed();
            assert!((e.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn unwrapping_picks_nearest_branch() {
        let x = State3::new(1.0, 0.1, 0.0);
        let p = to_spherical(&x, Some(6.0 * PI)).unwrap();
        assert!((p.phi - (6.0 * PI + 0.1f64.atan2(1.0))).abs() < 1e-12);
    }

    #[test]
    fn phi_dot_examples() {
        assert_eq!(phi_dot(&State3::new(1.0, 0.0, 0.0)).unwrap(), 0.0);
        // at y = 0 the azimuth speed is exactly -1
        assert_eq!(phi_dot(&State3::new(0.0, 1.0, 5.0)).unwrap(), -1.0);
        assert_eq!(phi_dot(&State3::new(1.0, 0.0, 2.0)).unwrap(), 2.0);
    }

    #[test]
    fn theta0_examples() {
        assert_eq!(theta0(0.0).unwrap(), 0.0);
        let v = theta0(PI / 4.0).unwrap();
        assert!((v - 0.6154797086703874).abs() < 1e-15, "{v}");
        // limit from the left is pi/2
        assert!(theta0(PI / 2.0 - 1e-9).unwrap() > PI / 2.0 - 1e-8);
        let c0 = f64::from_bits(std::f64::consts::FRAC_PI_2.to_bits()); // cos != 0 in floats
        assert!(theta0(c0).is_ok());
    }

    #[test]
    fn classify_examples() {
        let r = 1.0 / 2f64.sqrt();
        assert_eq!(classify(&State3::new(r, 0.0, r)), Classification::OmegaPlus);
        assert_eq!(
            classify(&State3::new(0.0, 0.0, 1.0)),
            Classification::Boundary
        );
        assert_eq!(
            classify(&State3::new(0.0, 1.0, 0.0)),
            Classification::Outside
        );
    }

    #[test]
    fn mirror_reflection() {
        let r = 1.0 / 2f64.sqrt();
        let x = State3::new(r, 0.0, r);
        let m = reflect_mirror(&x);
        assert_eq!(classify(&x), Classification::OmegaPlus);
        assert_eq!(classify(&m), Classification::OmegaMinus);
        // fixed plane
        let f = State3::new(r, 0.0, -r);
        assert_eq!(reflect_mirror(&f), f);
        // involution
        let any = State3::new(0.3, -0.5, 0.81);
        assert_eq!(reflect_mirror(&reflect_mirror(&any)), any);
    }

    #[test]
    fn boundary_curve_classifies_as_boundary() {
        for i in 1..100 {
            let phi = -PI / 2.0 + PI * i as f64 / 100.0;
            let p = SphericalPoint::new(phi, theta0(phi).unwrap()).embed();
            assert_eq!(classify(&p), Classification::Boundary, "phi = {phi}");
        }
    }

    #[test]
    fn central_symmetry_swaps_halves() {
        let mut rng = 0x243F6A8885A308D3u64;
        let mut next = move || {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            (rng >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for _ in 0..10_000 {
            let x = State3::new(next(), next(), next());
            if x.norm() < 1e-3 {
                continue;
            }
            let ct = classify(&x);
            let cn = classify(&x.scaled(-1.0));
            let expect = match ct {
                Classification::OmegaPlus => Classification::OmegaMinus,
                Classification::OmegaMinus => Classification::OmegaPlus,
                other => other,
            };
            assert_eq!(cn, expect);
        }
    }

    #[test]
    fn cone_coordinates_match_classification() {
        let mut rng = 0x13198A2E03707344u64;
        let mut next = move || {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            (rng >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for _ in 0..10_000 {
            let x = State3::new(next(), next(), next());
            let n2 = x.norm() * x.norm();
            if n2 < 1e-6 {
                continue;
            }
            let u = (x.y + x.ddy) / 2f64.sqrt();
            let v = (x.y - x.ddy) / 2f64.sqrt();
            let inside_cone = u * u > v * v + 2.0 * x.dy * x.dy && u != 0.0;
            match classify(&x) {
                Classification::OmegaPlus | Classification::OmegaMinus => {
                    assert!(inside_cone)
                }
                Classification::Outside => assert!(
                    !inside_cone || {
                        // tolerance band boundary cases only
                        (u * u - v * v - 2.0 * x.dy * x.dy).abs() <= 4.0 * EPS_BOUNDARY * n2
                    }
                ),
                Classification::Boundary => {}
            }
        }
    }

    #[test]
    fn quadrature_length_matches_frozen_value() {
        let q = boundary_length_quadrature(1e-10).unwrap();
        assert!((q.value - L_REF).abs() < 1e-9, "{}", q.value);
        assert!(q.value > PI && q.value < 2.0 * PI);
    }

    #[test]
    fn polyline_length_agrees_with_quadrature() {
        let p = boundary_length_polyline(200_000).unwrap();
        assert!((p.value - L_REF).abs() < 1e-6, "{}", p.value);
        assert!((p.value - L_REF).abs() <= p.error_estimate.max(1e-6));
    }

    #[test]
    fn coarse_polyline_reports_usable_error() {
        let p = boundary_length_polyline(10).unwrap();
        assert!((p.value - L_REF).abs() <= 10.0 * p.error_estimate.max(1e-3));
    }

    #[test]
    fn winding_floor_values() {
        assert!(winding_length_floor(0, 0.0, 0.0).is_err());
        let b1 = winding_length_floor(1, 0.3, 0.3).unwrap();
        assert!((b1 - L_REF).abs() < 1e-9);
        let b2 = winding_length_floor(2, 0.0, PI).unwrap();
        assert!((b2 - 5.007846810459456).abs() < 1e-9, "{b2}");
    }

    #[test]
    fn track_length_quarter_circle() {
        let n = 2000;
        let samples: Vec<(f64, SphericalPoint)> = (0..=n)
            .map(|i| {
                let s = i as f64 / n as f64;
                (s, SphericalPoint::new(s * PI / 2.0, 0.0))
            })
            .collect();
        let track = SphericalTrack::from_points(samples).unwrap();
        let len = track_length(&track, 0.0, 1.0).unwrap();
        assert!((len - PI / 2.0).abs() < 1e-6, "{len}");
        // constant track has zero length
        let constant = SphericalTrack::from_points(
            (0..=4)
                .map(|i| (i as f64, SphericalPoint::new(0.3, 0.2)))
                .collect(),
        )
        .unwrap();
        assert_eq!(full_track_length(&constant), 0.0);
        assert!(matches!(
            track_length(&track, 0.0, 2.0),
            Err(SphereError::OutOfRange { .. })
        ));
    }

    fn clockwise_equator_loop(n: usize) -> SphericalTrack {
        let samples = (0..=n)
            .map(|i| {
                let s = i as f64 / n as f64;
                (s, SphericalPoint::new(PI / 2.0 - 2.0 * PI * s, 0.0))
            })
            .collect();
        SphericalTrack::from_points(samples).unwrap()
    }

    #[test]
    fn surger_keeps_equator_loop() {
        // the equator has sin(theta) cos(phi) - cos(theta) sin^2(phi) =
        // -sin^2(phi) <= 0, so it never enters Omega
        let track = clockwise_equator_loop(720);
        let out = surger(&track).unwrap();
        for (_, p) in &out.samples {
            assert!(p.theta.abs() < 1e-9);
        }
        assert_eq!(out.samples[0].1.phi, track.samples[0].1.phi);
        assert!((full_track_length(&out) - full_track_length(&track)).abs() < 1e-6);
    }

    #[test]
    fn surger_cuts_a_dip_into_omega_plus() {
        // a solution-type loop: along the equator, with an excursion into
        // Omega_+ whose interior part moves with increasing azimuth (inside
        // Omega the azimuth increases), so meridians under the dip are also
        // crossed outside
        let mut raw: Vec<SphericalPoint> = Vec::new();
        let seg = |from: (f64, f64), to: (f64, f64), n: usize, out: &mut Vec<SphericalPoint>| {
            for i in 0..n {
                let s = i as f64 / n as f64;
                out.push(SphericalPoint::new(
                    from.0 + s * (to.0 - from.0),
                    from.1 + s * (to.1 - from.1),
                ));
            }
        };
        let th03 = theta0(0.3).unwrap();
        let th05 = theta0(0.5).unwrap();
        seg((PI / 2.0, 0.0), (0.3, 0.0), 600, &mut raw); // equator inbound
        seg((0.3, 0.0), (0.3, th03), 60, &mut raw); // climb the meridian
        for i in 0..200 {
            // interior arc riding above the boundary, azimuth increasing
            let s = i as f64 / 200.0;
            let phi = 0.3 + 0.2 * s;
            raw.push(SphericalPoint::new(
                phi,
                theta0(phi).unwrap() + 0.05 * (PI * s).sin(),
            ));
        }
        seg((0.5, th05), (0.5, 0.0), 60, &mut raw); // descend the meridian
        seg((0.5, 0.0), (PI / 2.0 - 2.0 * PI, 0.0), 2600, &mut raw); // equator outbound
        raw.push(SphericalPoint::new(PI / 2.0 - 2.0 * PI, 0.0));
        let samples: Vec<(f64, SphericalPoint)> = raw
            .into_iter()
            .enumerate()
            .map(|(i, p)| (i as f64, p))
            .collect();
        let track = SphericalTrack::from_points(samples).unwrap();
        let out = surger(&track).unwrap();
        // never inside Omega
        for (_, p) in &out.samples {
            let c = classify(&p.embed());
            assert!(
                c != Classification::OmegaPlus && c != Classification::OmegaMinus,
                "phi = {}, theta = {}",
                p.phi,
                p.theta
            );
        }
        // endpoints preserved exactly
        assert_eq!(out.samples[0].1.phi, track.samples[0].1.phi);
        assert_eq!(out.samples[0].1.theta, track.samples[0].1.theta);
        assert_eq!(out.phi_at_end(), track.phi_at_end());
        // strictly shorter: the dip was replaced by the envelope
        assert!(full_track_length(&out) < full_track_length(&track));
        // brute-force lower envelope on the same grid agrees
        let m = out.samples.len();
        for j in (1..m - 1).step_by(97) {
            let a = out.samples[j].1.phi;
            let mut lowest = f64::INFINITY;
            for w in track.samples.windows(2) {
                let (da, db) = (w[0].1.phi - a, w[1].1.phi - a);
                if da * db <= 0.0 && da != db {
                    let s = da / (da - db);
                    let th = w[0].1.theta + s * (w[1].1.theta - w[0].1.theta);
                    let cl = classify(&SphericalPoint::new(a, th).embed());
                    if cl != Classification::OmegaPlus && cl != Classification::OmegaMinus {
                        lowest = lowest.min(th);
                    }
                }
            }
            assert!((out.samples[j].1.theta - lowest).abs() < 1e-12, "phi = {a}");
        }
    }

    #[test]
    fn surger_satisfies_winding_floor() {
        let track = clockwise_equator_loop(720);
        let out = surger(&track).unwrap();
        let len = full_track_length(&out);
        let floor = winding_length_floor(1, 0.0, 0.0).unwrap();
        // equator loop length 2 pi exceeds L_Omega
        assert!(len + 1e-6 >= floor, "{len} vs {floor}");
    }

    #[test]
    fn surger_rejects_bad_loops() {
        // wrong starting azimuth
        let n = 360;
        let samples: Vec<(f64, SphericalPoint)> = (0..=n)
            .map(|i| {
                let s = i as f64 / n as f64;
                (s, SphericalPoint::new(1.0 - 2.0 * PI * s, 0.0))
            })
            .collect();
        let track = SphericalTrack::from_points(samples).unwrap();
        assert!(matches!(surger(&track), Err(SphereError::Precondition(_))));
    }
}
