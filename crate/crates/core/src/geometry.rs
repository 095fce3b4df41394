//! Null coordinates and the conformal inversion chart.
//!
//! Null coordinates on Minkowski space: u = (t − |x|)/2, v = (t + |x|)/2, so
//! t = u + v, r = |x| = v − u, and the frame fields are L = ∂_v (outgoing),
//! L̄ = ∂_u (incoming). The truncated data cone is {u = 0, 0 < v ≤ 1}.
//!
//! The scattering reduction works in an inverted chart centred at
//! T* = 2U* − 1/2 on the time axis: with Λ = (t − T*)² − |x|², the map
//! (t, x) ↦ (t̃, x̃) = Λ⁻¹ (t − T*, x) sends the future of the translated cone to
//! a bounded region. Writing u* = (t − T* − r)/2, v* = (t − T* + r)/2 one has
//! Λ = 4 u* v*, ũ = (4v*)⁻¹, ṽ = (4u*)⁻¹ and r̃ = r/Λ, and the null frames
//! relate through L̃̄ = −4v*² L, L̃ = −4u*² L̄, ẽ_i = 4u*v* e_i.

use crate::error::{Error, Result};

/// Λ below this magnitude is treated as sitting on the inversion cone.
pub const LAMBDA_FLOOR: f64 = 1e-14;

/// A point in null coordinates. `direction` is the unit vector x/|x|,
/// `None` on the spatial origin where the direction is indeterminate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullPoint {
    pub u: f64,
    pub v: f64,
    pub direction: Option<[f64; 3]>,
}

impl NullPoint {
    pub fn t(&self) -> f64 {
        self.u + self.v
    }

    pub fn r(&self) -> f64 {
        self.v - self.u
    }
}

/// Convert a Cartesian event (t, x) to null coordinates.
pub fn to_null(t: f64, x: [f64; 3]) -> NullPoint {
    let r = norm3(x);
    let direction = if r > 0.0 {
        Some([x[0] / r, x[1] / r, x[2] / r])
    } else {
        None
    };
    NullPoint {
        u: 0.5 * (t - r),
        v: 0.5 * (t + r),
        direction,
    }
}

/// Convert null coordinates back to a Cartesian event.
///
/// Fails if v < u (negative radius) or if r > 0 with no direction attached.
pub fn from_null(p: &NullPoint) -> Result<(f64, [f64; 3])> {
    let r = p.r();
    if r < 0.0 {
        return Err(Error::domain(format!(
            "negative radius r = v - u = {:.3e} at (u, v) = ({}, {})",
            r, p.u, p.v
        )));
    }
    if r == 0.0 {
        return Ok((p.t(), [0.0; 3]));
    }
    let w = p.direction.ok_or_else(|| {
        Error::domain(format!("off-axis point (r = {r:.3e}) carries no direction"))
    })?;
    Ok((p.t(), [r * w[0], r * w[1], r * w[2]]))
}

/// Frame relations between the original null frame and the inverted one at a
/// point with shifted null coordinates (u*, v*).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameFactors {
    /// L̃̄ = `lbar_tilde_from_l` · L  (= −4v*²).
    pub lbar_tilde_from_l: f64,
    /// L̃ = `l_tilde_from_lbar` · L̄  (= −4u*²).
    pub l_tilde_from_lbar: f64,
    /// ẽ_i = `e_tilde_from_e` · e_i  (= 4u*v* = Λ).
    pub e_tilde_from_e: f64,
}

/// The inverted chart centred on the time axis at T* = 2U* − 1/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConformalChart {
    pub u_star_ref: f64,
}

impl ConformalChart {
    pub fn new(u_star_ref: f64) -> Self {
        ConformalChart { u_star_ref }
    }

    /// Centre of the inversion on the time axis.
    pub fn t_star(&self) -> f64 {
        2.0 * self.u_star_ref - 0.5
    }

    /// Conformal factor Λ = (t − T*)² − |x|² = 4 u* v*.
    pub fn lambda(&self, t: f64, x: [f64; 3]) -> f64 {
        let s = t - self.t_star();
        s * s - dot3(x, x)
    }

    /// Shifted null coordinates (u*, v*) = ((t − T* − r)/2, (t − T* + r)/2).
    pub fn star_null(&self, t: f64, x: [f64; 3]) -> (f64, f64) {
        let s = t - self.t_star();
        let r = norm3(x);
        (0.5 * (s - r), 0.5 * (s + r))
    }

    /// Forward inversion (t, x) ↦ (t̃, x̃) = Λ⁻¹ (t − T*, x).
    pub fn forward(&self, t: f64, x: [f64; 3]) -> Result<(f64, [f64; 3])> {
        let lambda = self.lambda(t, x);
        if lambda.abs() <= LAMBDA_FLOOR {
            return Err(Error::DegenerateChart {
                lambda,
                t,
                r: norm3(x),
            });
        }
        let s = t - self.t_star();
        Ok((
            s / lambda,
            [x[0] / lambda, x[1] / lambda, x[2] / lambda],
        ))
    }

    /// Inverse of [`forward`]: the same inversion applied in the tilde chart,
    /// then the time shift undone. Fails on the image of the inversion cone.
    pub fn inverse(&self, t_tilde: f64, x_tilde: [f64; 3]) -> Result<(f64, [f64; 3])> {
        let lam_tilde = t_tilde * t_tilde - dot3(x_tilde, x_tilde);
        if lam_tilde.abs() <= LAMBDA_FLOOR {
            return Err(Error::DegenerateChart {
                lambda: lam_tilde,
                t: t_tilde,
                r: norm3(x_tilde),
            });
        }
        Ok((
            t_tilde / lam_tilde + self.t_star(),
            [
                x_tilde[0] / lam_tilde,
                x_tilde[1] / lam_tilde,
                x_tilde[2] / lam_tilde,
            ],
        ))
    }

    /// Null coordinates of the image point: ũ = (4v*)⁻¹, ṽ = (4u*)⁻¹.
    pub fn tilde_null(&self, t: f64, x: [f64; 3]) -> Result<(f64, f64)> {
        let (us, vs) = self.star_null(t, x);
        if (4.0 * us * vs).abs() <= LAMBDA_FLOOR {
            return Err(Error::DegenerateChart {
                lambda: 4.0 * us * vs,
                t,
                r: norm3(x),
            });
        }
        Ok((0.25 / vs, 0.25 / us))
    }

    /// Frame factors at shifted null coordinates (u*, v*).
    pub fn frame_factors(&self, u_star: f64, v_star: f64) -> FrameFactors {
        FrameFactors {
            lbar_tilde_from_l: -4.0 * v_star * v_star,
            l_tilde_from_lbar: -4.0 * u_star * u_star,
            e_tilde_from_e: 4.0 * u_star * v_star,
        }
    }
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}
