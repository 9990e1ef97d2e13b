//! Zero counts and phase-sphere wandering length for third-order linear
//! ODEs.
//!
//! For a nonzero solution of `y''' + a(t) y'' + b(t) y' + c(t) y = 0` the
//! crate measures the number of zeros `nu(y, T)` and the arc length
//! `gamma3(y, T)` traced on the unit sphere by the normalized phase vector
//! `(y, y', y'')/|…|`, verifies the lower bound
//! `gamma3 > (nu - 5)/2 * L` with the boundary-length constant
//! `L = 4∫₀^π √(5 − cos α)/(7 + cos α) dα`, and reproduces the family of
//! equations whose wandering-speed-to-zero-frequency ratio approaches the
//! sharp floor `L/(2π)`.
//!
//! Module map:
//!
//! * [`expr`] — the coefficient expression language;
//! * [`ode`] — adaptive integration with dense output and zero location;
//! * [`sphere`] — geometry of the region where the azimuth increases, the
//!   constant `L` by two routes, tracks, curve surgery, winding floors;
//! * [`metrics`] — wandering length, the bound report, finite-horizon rate
//!   estimators, multiple-zero desingularization;
//! * [`extremal`] — the near-extremal construction and its windowed
//!   verification;
//! * [`cli`] — the `wander3` command-line front end.
//!
//! The narrative guide lives in `book/`; its chapters are included below so
//! every embedded example runs as a documentation test.

pub mod cli;
pub mod expr;
pub mod extremal;
pub mod interp;
pub mod metrics;
pub mod ode;
pub mod quad;
pub mod sphere;

/// Guide chapters (rendered by `mdbook` from `book/`), included here so the
/// code blocks compile and run under `cargo test --doc`.
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/expressions.md")]
    pub mod expressions {}
    #[doc = include_str!("../../../book/src/integration.md")]
    pub mod integration {}
    #[doc = include_str!("../../../book/src/phase-sphere.md")]
    pub mod phase_sphere {}
    #[doc = include_str!("../../../book/src/the-bound.md")]
    pub mod the_bound {}
    #[doc = include_str!("../../../book/src/extremal.md")]
    pub mod extremal {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
