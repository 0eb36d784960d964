//! Separable operations versus LOCC on a two-qubit discrimination task.
//!
//! The crate covers:
//!
//! * [`algebra`]: fixed-size complex linear algebra, concurrence, and the
//!   `(w, x, ξ)` parametrization of local POVM factors.
//! * [`measures`]: entanglement measures as functions of concurrence and the
//!   μ-concavity check.
//! * [`separable`]: separable instruments, the `p`/`q` functionals, the
//!   concurrence bound `C(x, y)` and the optimal four-outcome instrument.
//! * [`locc`]: finite-round LOCC protocol trees, their simulation, zigzag
//!   trajectories, Γ classification and inequality audits.
//! * [`gap`]: the analytic lower bound on the separable/LOCC gap and its
//!   `(r, α)` optimization.
//! * [`classical`]: the public-communication analogue and the PC → LOCC
//!   compiler.

pub mod algebra;
pub mod classical;
pub mod gap;
pub mod locc;
pub mod measures;
pub mod separable;

/// Eigenvalue floor used when testing positive semidefiniteness.
pub const PSD_FLOOR: f64 = 1e-12;

/// A POVM element whose trace is at or below this value is null.
pub const NULL_TRACE: f64 = 1e-14;

/// Probabilities at or below this value count as zero (discriminating outcomes).
pub const PROB_ZERO: f64 = 1e-12;

/// Guard on `1 + xy` before dividing by it.
pub const DIVISOR_GUARD: f64 = 1e-14;

/// Tolerance for POVM completeness checks.
pub const COMPLETENESS_TOL: f64 = 1e-10;
