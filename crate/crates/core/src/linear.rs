//! Solutions of the linear problem □φ = 0 with data on the cone, and
//! manufactured solutions for verifying the integrator.
//!
//! Three representation formulas are provided. For spherically symmetric data
//! g the solution is closed-form, ψ = rφ = v·g(v) − u·g(u). On the axis the
//! spherical mean collapses to φ(t, 0) = (4π)⁻¹ ∫ [∂_v(vφ₀)](t/2, η) dη. At
//! interior points the mean is taken over the boosted image
//!
//! ```text
//! y(η) = (x + τη + (x·η)x/(t+τ)) / 2,   τ = √(t²−r²),
//! ```
//!
//! which is the algebraically equivalent, cancellation-free form of
//! y = (r⁻²(t−τ)(x·η)x + x + τη)/2 (using t − τ = r²/(t+τ)); it stays finite
//! down to x = 0, where it reduces to the axis formula.

use crate::cone_data::ConeData;
use crate::error::{Error, Result};
use crate::evolution::Nonlinearity;
use crate::sphere::AngularGrid;

/// Below this radius the representation formulas switch to their analytic
/// r → 0 limits.
pub const R_FLOOR: f64 = 1e-6;

/// Quadrature degree floor for [`interior_value`]: composition with y(η)
/// makes the integrand non-band-limited even for low-degree data.
const QUADRATURE_L_MIN: usize = 12;

fn sqrt_4pi() -> f64 {
    (4.0 * std::f64::consts::PI).sqrt()
}

fn check_symmetric(data: &ConeData) -> Result<()> {
    if data.is_symmetric() {
        Ok(())
    } else {
        Err(Error::precondition(
            "closed spherical form needs spherically symmetric data",
        ))
    }
}

fn check_v_range(v: f64) -> Result<()> {
    if v > 1.0 + 1e-12 {
        return Err(Error::domain(format!(
            "advanced time v = {v} leaves the data cone (v ≤ 1)"
        )));
    }
    if v <= 0.0 {
        return Err(Error::domain(format!("advanced time v = {v} must be positive")));
    }
    Ok(())
}

/// φ(t, r) = (v·g(v) − u·g(u))/r for symmetric data g, with the analytic
/// limit ∂_s(s·g(s))|_{s=t/2} below [`R_FLOOR`].
pub fn exact_spherical(data: &ConeData, t: f64, r: f64) -> Result<f64> {
    check_symmetric(data)?;
    if r < 0.0 {
        return Err(Error::domain(format!("negative radius r = {r}")));
    }
    let v = 0.5 * (t + r);
    let u = 0.5 * (t - r);
    check_v_range(v)?;
    if u < -1e-12 {
        return Err(Error::domain(format!(
            "retarded time u = {u} is outside the evolution region (u ≥ 0)"
        )));
    }
    if r <= R_FLOOR {
        return axis_value(data, t);
    }
    let g = |s: f64| data.coeffs_at(s)[0] / sqrt_4pi();
    // u·g(u) → 0 at the vertex for norm-finite data; 0·∞ guarded explicitly.
    let ug = if u <= 1e-14 { 0.0 } else { u * g(u) };
    Ok((v * g(v) - ug) / r)
}

/// φ(t, 0) = (4π)⁻¹ ∫ [∂_v(vφ₀)](t/2, η) dη, which is the mean of the
/// transport field; odd harmonics average away.
pub fn axis_value(data: &ConeData, t: f64) -> Result<f64> {
    let s = 0.5 * t;
    check_v_range(s)?;
    Ok(data.transport_coeffs_at(s)[0] / sqrt_4pi())
}

/// Boosted spherical mean at an interior event (t, x), t ≥ |x|.
pub fn interior_value(data: &ConeData, t: f64, x: [f64; 3]) -> Result<f64> {
    let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    if t <= 0.0 {
        return Err(Error::domain(format!("time t = {t} must be positive")));
    }
    if r > t {
        return Err(Error::domain(format!(
            "event with r = {r} > t = {t} lies outside the solid cone"
        )));
    }
    // max |y| = (t+r)/2 over η, so this bounds the whole image.
    check_v_range(0.5 * (t + r))?;
    let tau = ((t - r) * (t + r)).sqrt();

    let grid = AngularGrid::new((2 * data.l_max()).max(QUADRATURE_L_MIN));
    let mut values = vec![0.0; grid.n_nodes()];
    let mut idx = 0;
    for it in 0..grid.cos_theta.len() {
        let (ct, st) = (grid.cos_theta[it], grid.sin_theta[it]);
        for ip in 0..grid.phi.len() {
            let eta = [
                st * grid.phi[ip].cos(),
                st * grid.phi[ip].sin(),
                ct,
            ];
            let x_dot_eta = x[0] * eta[0] + x[1] * eta[1] + x[2] * eta[2];
            let pull = x_dot_eta / (t + tau);
            let y = [
                0.5 * (x[0] + tau * eta[0] + pull * x[0]),
                0.5 * (x[1] + tau * eta[1] + pull * x[1]),
                0.5 * (x[2] + tau * eta[2] + pull * x[2]),
            ];
            let vy = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
            let h = data.transport_coeffs_at(vy.min(1.0));
            let (cos_ty, phi_y) = if vy > 0.0 {
                ((y[2] / vy).clamp(-1.0, 1.0), y[1].atan2(y[0]))
            } else {
                (1.0, 0.0)
            };
            values[idx] = AngularGrid::eval_at(&h, cos_ty, phi_y);
            idx += 1;
        }
    }
    Ok(grid.integrate(&values) / (4.0 * std::f64::consts::PI))
}

/// Symmetric manufactured solutions with closed-form derivatives; each one
/// solves the free wave equation, so the manufactured source is purely the
/// negated nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MmsSolution {
    /// φ = t = u + v.
    TimeLinear,
    /// φ ≡ c.
    Constant(f64),
    /// φ = (v^δ − u^δ)/r, the singular symmetric solution.
    PowerCone { delta: f64 },
}

impl MmsSolution {
    pub fn phi(&self, u: f64, v: f64) -> f64 {
        match *self {
            MmsSolution::TimeLinear => u + v,
            MmsSolution::Constant(c) => c,
            MmsSolution::PowerCone { delta } => {
                let r = v - u;
                if r <= 1e-9 * v.abs().max(1.0) {
                    // limit of the difference quotient: d/ds s^δ at s = u.
                    delta * u.powf(delta - 1.0)
                } else {
                    (v.powf(delta) - u.powf(delta)) / r
                }
            }
        }
    }

    /// ∂_u φ (residual-free closed forms away from the axis).
    pub fn du_phi(&self, u: f64, v: f64) -> f64 {
        match *self {
            MmsSolution::TimeLinear => 1.0,
            MmsSolution::Constant(_) => 0.0,
            MmsSolution::PowerCone { delta } => {
                let r = v - u;
                (-delta * u.powf(delta - 1.0) * r + (v.powf(delta) - u.powf(delta))) / (r * r)
            }
        }
    }

    /// ∂_v φ.
    pub fn dv_phi(&self, u: f64, v: f64) -> f64 {
        match *self {
            MmsSolution::TimeLinear => 1.0,
            MmsSolution::Constant(_) => 0.0,
            MmsSolution::PowerCone { delta } => {
                let r = v - u;
                (delta * v.powf(delta - 1.0) * r - (v.powf(delta) - u.powf(delta))) / (r * r)
            }
        }
    }

    /// Restriction to the data cone u = 0 as a power-law family.
    pub fn data(&self) -> ConeData {
        match *self {
            // φ(0, v) = v, i.e. exponent δ′ = 2.
            MmsSolution::TimeLinear => {
                ConeData::power_law(1.0, 2.0, crate::sphere::AngularField::constant(0, 1.0))
            }
            MmsSolution::Constant(c) => ConeData::constant(c),
            MmsSolution::PowerCone { delta } => {
                ConeData::power_law(1.0, delta, crate::sphere::AngularField::constant(0, 1.0))
            }
        }
    }
}

/// A manufactured case: exact solution plus the nonlinearity it is run with.
#[derive(Debug, Clone, Copy)]
pub struct ManufacturedCase {
    pub solution: MmsSolution,
    pub nonlin: Nonlinearity,
}

/// F_mms = □φ_exact − C₀φ³ − C₁^μ φ∂_μφ. All provided solutions are
/// wave-free, so only the nonlinear terms survive. Spatial C₁ components
/// would make the source direction-dependent and are rejected.
pub fn mms_source(solution: MmsSolution, nonlin: Nonlinearity) -> Result<ManufacturedCase> {
    if nonlin.c1[1] != 0.0 || nonlin.c1[2] != 0.0 || nonlin.c1[3] != 0.0 {
        return Err(Error::precondition(
            "manufactured sources support only the ∂_t component of C₁ (spatial components break spherical symmetry)",
        ));
    }
    Ok(ManufacturedCase { solution, nonlin })
}

impl ManufacturedCase {
    /// Source value at (u, v): −C₀φ³ − C₁ᵗ φ ∂_tφ with ∂_t = (∂_u + ∂_v)/2.
    pub fn source(&self, u: f64, v: f64) -> f64 {
        let phi = self.solution.phi(u, v);
        let mut f = -self.nonlin.c0 * phi * phi * phi;
        if self.nonlin.c1[0] != 0.0 {
            let dt = 0.5 * (self.solution.du_phi(u, v) + self.solution.dv_phi(u, v));
            f -= self.nonlin.c1[0] * phi * dt;
        }
        f
    }
}
