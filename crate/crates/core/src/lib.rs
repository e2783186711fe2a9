//! Entropy-stable discontinuous-collocation solver for the three-dimensional
//! compressible Euler and Navier-Stokes equations.
//!
//! The library implements three side-by-side inviscid discretizations on
//! tensor-product Legendre-Gauss-Lobatto spectral elements:
//!
//! * `es-c`  — entropy-stable Hadamard flux differencing with the
//!   Chandrashekar entropy-conservative two-point flux,
//! * `sf-kg` — the same flux-differencing skeleton with the Kennedy-Gruber
//!   kinetic-energy-preserving split-form flux,
//! * `dc`    — conventional divergence-form collocation of the nodal flux,
//!
//! together with an LDG/interior-penalty viscous discretization in entropy
//! variables, curl-form curvilinear metrics satisfying the discrete geometric
//! conservation law, weak (SAT) interface and boundary coupling, and an
//! adaptive Dormand-Prince 5(4) time integrator.
//!
//! The binary target (`esdc`) drives single runs, convergence sweeps, and
//! robustness matrices from a plain-text configuration file; see the README
//! for the file format and output schema.

pub mod cases;
pub mod config;
pub mod diagnostics;
pub mod driver;
pub mod field;
pub mod fluxes;
pub mod gas;
pub mod io;
pub mod mesh;
pub mod rhs;
pub mod sbp;
pub mod time;

/// Fatal, non-numerical failures: bad configuration, rejected meshes,
/// malformed files. Solution blow-up is deliberately *not* an error — it is
/// a reportable outcome of time integration (see [`time::Outcome`]).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("mesh rejected: {0}")]
    Mesh(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
