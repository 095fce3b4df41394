//! Numerical laboratory for the characteristic initial value problem
//!
//! ```text
//! □φ = C₀ φ³ + C₁^μ φ ∂_μ φ,     φ|_{ℋ₀} = φ₀,
//! ```
//!
//! posed on the truncated light cone ℋ₀ = {u = 0, 0 < v ≤ 1} in null coordinates
//! u = (t − |x|)/2, v = (t + |x|)/2, with data as singular as φ₀ ~ v^(δ−1).
//!
//! The crate provides
//!
//! * [`geometry`]: null/Cartesian charts and the conformal inversion used by the
//!   scattering reduction,
//! * [`sphere`]: real spherical harmonics on Gauss–Legendre × uniform grids with
//!   exact-at-truncation transforms, angular derivatives, and dealiased products,
//! * [`cone_data`]: cone data families and the weighted data norm
//!   Σ_{n₁≤2, n₂≤5−n₁} ∫ v^(1−2δ) |(v∂_v)^{n₁} ∂_ω^{n₂} φ₀|²,
//! * [`linear`]: closed-form and representation-formula solutions of □φ = 0 from
//!   cone data (spherical, axis, boosted interior), and manufactured sources,
//! * [`evolution`]: the double-null diamond integrator for ψ = rφ on graded
//!   meshes, Picard iteration, and commuted fields,
//! * [`energy`]: null-flux/bulk energies with the X = 2v∂_v + u∂_u multiplier,
//!   commuted tables, the discrete divergence identity, and power-law fits,
//! * [`inequalities`]: sharp Hardy-type inequalities on sampled functions and the
//!   power-weight integral lemma, with exact piecewise integrals,
//! * [`mkg`]: the charged (Maxwell–Klein–Gordon) scattering-to-cone reduction:
//!   scattering norms, conformal transfer, gauge transport, cone energies,
//! * [`quad`]: shared graded-mesh quadrature with endpoint tail extrapolation and
//!   divergence detection.
//!
//! Everything is deterministic: no global state, no time-dependent seeds, and
//! reductions in a fixed order, so identical inputs give identical output bytes.

pub mod cone_data;
pub mod energy;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod inequalities;
pub mod linear;
pub mod mkg;
pub mod quad;
pub mod sphere;

pub use error::{Error, Result};
