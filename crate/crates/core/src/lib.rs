//! Desk-scale solver and verification harness for linear and quasi-linear
//! wave equations whose lower-order terms jump across the flat interior
//! interface of a periodic box.
//!
//! The crate is organized along the pipeline it verifies:
//!
//! - [`grid`]: periodic lattice, interface masks, cutoffs, stencils;
//! - [`norms`]: intersection Sobolev and energy norms plus the calculus
//!   inequality harness;
//! - [`smoothing`]: trivial extension and the interface-respecting mollifier;
//! - [`elliptic`]: Helmholtz solves, layer potentials and the Born-series
//!   block inversion;
//! - [`timejets`]: compatibility jets, correction sources, rescalings and the
//!   projection to the torus;
//! - [`waves`]: leapfrog integration with energy and propagation monitors;
//! - [`quasilinear`]: the Picard fixed-point loop, uniqueness probe and
//!   continuation monitor.

pub mod grid;
pub mod norms;
pub mod smoothing;
pub mod elliptic;
pub mod timejets;
pub mod waves;
pub mod quasilinear;

mod det;

pub use det::DetRng;
