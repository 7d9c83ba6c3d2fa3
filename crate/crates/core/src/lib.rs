//! Wave-optics simulation of lensless Fourier-transform ghost diffraction
//! with pseudo-thermal light.
//!
//! A rotating-ground-glass source ([`source`]) is propagated through two
//! arms ([`experiment`]): a test arm that carries the object ([`objects`])
//! and a reference arm that sees only free space. When the reference
//! distance equals the sum of the test-arm distances, the cross-correlation
//! of the intensity fluctuations ([`correlator`]) reproduces the squared
//! Fourier modulus of the object even though the test detector sits in the
//! Fresnel region. [`oracle`] provides independent direct-summation
//! references, and [`retrieval`] inverts a recovered modulus with
//! error-reduction / hybrid input-output iterations.
//!
//! Ensembles are distributed over worker threads with the `parallel`
//! feature (on by default); results are bit-identical for any worker count.

pub mod config;
pub mod correlator;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod fft;
pub mod grid;
pub mod io;
pub mod objects;
pub mod oracle;
pub mod propagate;
pub mod retrieval;
pub mod source;

pub use error::{Error, Result};
pub use grid::{AxisKind, ComplexField, Grid, Pattern, SetupGeometry};

pub use num_complex::Complex64;
