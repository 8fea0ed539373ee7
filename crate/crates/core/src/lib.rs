//! Resolvents of sample covariance matrices `(1/n) X X^T` built from
//! independent, convexly concentrated columns.
//!
//! The crate covers four layers:
//!
//! * [`ensembles`]: bounded-entry column ensembles with exact population
//!   covariances and counter-based reproducible sampling.
//! * [`resolvent`]: per-draw resolvent evaluation (`Q^z`, `|Q^z|^2`,
//!   leave-one-out resolvents, Neumann partial sums, Schur identity checks).
//! * [`detequiv`]: the self-consistent fixed point `Λ̃` and the deterministic
//!   equivalent `Q̃`, plus the closed-form isotropic Marchenko-Pastur oracle.
//! * [`spectral`] and [`verify`]: density recovery, contour-integral
//!   projectors and the Monte Carlo concentration harness.
//!
//! Sign convention: unless stated otherwise the Stieltjes transform is
//! `g(z) = (1/p) tr Q^z` with `Q^z = (zI - K)^{-1}`, so `Im g(z) < 0` when
//! `Im z > 0`.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detequiv;
pub mod ensembles;
pub mod error;
pub mod linalg;
pub mod matrix_io;
pub mod par;
pub mod resolvent;
pub mod rng;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
pub use num_complex::Complex64;

pub type RMatrix = nalgebra::DMatrix<f64>;
pub type CMatrix = nalgebra::DMatrix<Complex64>;
pub type RVector = nalgebra::DVector<f64>;
pub type CVector = nalgebra::DVector<Complex64>;
