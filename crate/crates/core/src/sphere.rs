//! Real spherical harmonics on Gauss–Legendre × uniform-azimuth grids.
//!
//! Basis: orthonormal real harmonics. With P̄_{ℓm} the fully normalised
//! associated Legendre functions (no Condon–Shortley phase),
//!
//!   Y_{ℓ0} = P̄_{ℓ0}(cos θ),
//!   Y_{ℓm} = √2 P̄_{ℓm}(cos θ) cos(mφ)   (m > 0),
//!   Y_{ℓ,−m} = √2 P̄_{ℓm}(cos θ) sin(mφ) (m > 0),
//!
//! so ∫_{S²} Y_{ℓm} Y_{ℓ'm'} dω = δ_{ℓℓ'} δ_{mm'} and the constant function 1
//! has the single coefficient a₀₀ = √(4π).
//!
//! A grid for truncation degree L uses L+1 Gauss–Legendre nodes in cos θ and
//! 2L+1 uniform azimuth nodes. That quadrature integrates products of two
//! degree-L harmonics exactly, so analysis ∘ synthesis is the identity at the
//! truncation up to round-off. Quadratic products are projected exactly through
//! the 3/2-rule node set (degree ⌈3L/2⌉ grid, output re-truncated to L); cubes
//! are two nested binary products.
//!
//! Angular derivative conventions: rotation generators
//!
//!   Ω_z = ∂_φ,
//!   Ω_x = −sin φ ∂_θ − cot θ cos φ ∂_φ,
//!   Ω_y =  cos φ ∂_θ − cot θ sin φ ∂_φ,
//!
//! preserve each degree-ℓ eigenspace, and Σ_g Ω_g² = Δ_{S²}. Squared derivative
//! blocks summed over all words of n generators therefore collapse to the
//! Parseval weights (ℓ(ℓ+1))ⁿ (see [`casimir_weighted_sq`]), which is how the
//! weighted norms elsewhere in the crate evaluate |∂_ω^{n}f|² blocks.

use crate::error::{Error, Result};

/// Number of coefficients carried by a degree-L truncation.
pub fn n_modes(l_max: usize) -> usize {
    (l_max + 1) * (l_max + 1)
}

/// Flat index of the (ℓ, m) coefficient, m ∈ [−ℓ, ℓ].
pub fn mode_index(l: usize, m: i64) -> usize {
    debug_assert!(m.unsigned_abs() as usize <= l);
    l * l + (l as i64 + m) as usize
}

/// Inverse of [`mode_index`].
pub fn mode_of_index(idx: usize) -> (usize, i64) {
    let l = (idx as f64).sqrt() as usize;
    let l = if (l + 1) * (l + 1) <= idx { l + 1 } else { l };
    (l, idx as i64 - (l * l + l) as i64)
}

/// Δ_{S²} eigenvalue magnitude ℓ(ℓ+1) for every flat index.
fn eigenvalues(l_max: usize) -> Vec<f64> {
    let mut ev = vec![0.0; n_modes(l_max)];
    for l in 0..=l_max {
        for m in -(l as i64)..=(l as i64) {
            ev[mode_index(l, m)] = (l * (l + 1)) as f64;
        }
    }
    ev
}

/// Gauss–Legendre nodes and weights on [−1, 1] (Newton iteration on P_n).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n {
        // Chebyshev-like initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, x);
        nodes[n - 1 - k] = x;
        weights[n - 1 - k] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Normalised associated Legendre values P̄_{ℓm}(x) and θ-derivatives at one
/// abscissa x = cos θ, flat-indexed by [`mode_index`] restricted to m ≥ 0
/// (entries for m < 0 alias their |m| value).
fn pbar_table(l_max: usize, x: f64, want_deriv: bool) -> (Vec<f64>, Vec<f64>) {
    let nm = n_modes(l_max);
    let mut p = vec![0.0; nm];
    let mut dp = vec![0.0; nm];
    let s = (1.0 - x * x).max(0.0).sqrt(); // sin θ ≥ 0 on [0, π]
    let c0 = 1.0 / (4.0 * std::f64::consts::PI).sqrt();
    p[mode_index(0, 0)] = c0;
    // Diagonal P̄_mm and first superdiagonal P̄_{m+1,m}.
    let mut pmm = c0;
    let mut dpmm = 0.0;
    for m in 1..=l_max {
        let f = ((2 * m + 1) as f64 / (2 * m) as f64).sqrt();
        let new_p = f * s * pmm;
        let new_dp = f * (x * pmm + s * dpmm);
        pmm = new_p;
        dpmm = new_dp;
        p[mode_index(m, m as i64)] = pmm;
        dp[mode_index(m, m as i64)] = dpmm;
        p[mode_index(m, -(m as i64))] = pmm;
        dp[mode_index(m, -(m as i64))] = dpmm;
    }
    for m in 0..l_max {
        let g = (2 * m + 3) as f64;
        let pm = p[mode_index(m, m as i64)];
        let dpm = dp[mode_index(m, m as i64)];
        let val = g.sqrt() * x * pm;
        let dval = g.sqrt() * (-s * pm + x * dpm);
        for sm in [m as i64, -(m as i64)] {
            p[mode_index(m + 1, sm)] = val;
            dp[mode_index(m + 1, sm)] = dval;
        }
    }
    // Three-term recurrence upward in ℓ at fixed m.
    for m in 0..=l_max {
        for l in (m + 2)..=l_max {
            let lf = l as f64;
            let mf = m as f64;
            let a = (((2.0 * lf - 1.0) * (2.0 * lf + 1.0)) / ((lf - mf) * (lf + mf))).sqrt();
            let b = (((2.0 * lf + 1.0) * (lf + mf - 1.0) * (lf - mf - 1.0))
                / ((2.0 * lf - 3.0) * (lf - mf) * (lf + mf)))
                .sqrt();
            let p1 = p[mode_index(l - 1, m as i64)];
            let p2 = p[mode_index(l - 2, m as i64)];
            let val = a * x * p1 - b * p2;
            let dval = if want_deriv {
                a * (-s * p1 + x * dp[mode_index(l - 1, m as i64)])
                    - b * dp[mode_index(l - 2, m as i64)]
            } else {
                0.0
            };
            for sm in [m as i64, -(m as i64)] {
                p[mode_index(l, sm)] = val;
                dp[mode_index(l, sm)] = dval;
            }
        }
    }
    (p, dp)
}

/// Quadrature grid with precomputed basis tables.
///
/// Node storage is θ-major: `values[i * n_phi + j]` for colatitude node i and
/// azimuth node j.
#[derive(Debug, Clone)]
pub struct AngularGrid {
    pub l_max: usize,
    pub n_theta: usize,
    pub n_phi: usize,
    pub cos_theta: Vec<f64>,
    pub sin_theta: Vec<f64>,
    pub phi: Vec<f64>,
    /// Gauss–Legendre weight × azimuth step, per colatitude node.
    pub weight: Vec<f64>,
    /// P̄ values per node: `pbar[i][mode_index(l, m)]` (m-sign agnostic).
    pbar: Vec<Vec<f64>>,
    /// ∂_θ P̄ per node, same layout.
    dpbar: Vec<Vec<f64>>,
    /// cos(mφ_j), sin(mφ_j): `[m * n_phi + j]`.
    cos_mphi: Vec<f64>,
    sin_mphi: Vec<f64>,
}

impl AngularGrid {
    /// Grid sized for exact degree-`l_max` analysis: L+1 × (2L+1) nodes.
    pub fn new(l_max: usize) -> Self {
        Self::with_sizes(l_max, l_max + 1, 2 * l_max + 1)
    }

    /// Grid for the 3/2-rule: exact projection of binary products of two
    /// degree-`l_max` fields back onto degree `l_max`.
    pub fn dealias(l_max: usize) -> Self {
        let l_big = l_max + l_max.div_ceil(2);
        Self::with_sizes(l_max, l_big + 1, 2 * l_big + 1)
    }

    /// Custom node counts (used by oracles and the dealias constructor). Basis
    /// tables are built up to `l_max`.
    pub fn with_sizes(l_max: usize, n_theta: usize, n_phi: usize) -> Self {
        assert!(n_theta >= l_max + 1, "θ nodes must resolve the truncation");
        assert!(n_phi >= 2 * l_max + 1, "φ nodes must resolve the truncation");
        let (x, w) = gauss_legendre(n_theta);
        let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
        let phi: Vec<f64> = (0..n_phi).map(|j| j as f64 * dphi).collect();
        let mut pbar = Vec::with_capacity(n_theta);
        let mut dpbar = Vec::with_capacity(n_theta);
        for &xi in &x {
            let (p, dp) = pbar_table(l_max, xi, true);
            pbar.push(p);
            dpbar.push(dp);
        }
        let mut cos_mphi = vec![0.0; (l_max + 1) * n_phi];
        let mut sin_mphi = vec![0.0; (l_max + 1) * n_phi];
        for m in 0..=l_max {
            for j in 0..n_phi {
                cos_mphi[m * n_phi + j] = (m as f64 * phi[j]).cos();
                sin_mphi[m * n_phi + j] = (m as f64 * phi[j]).sin();
            }
        }
        AngularGrid {
            l_max,
            n_theta,
            n_phi,
            sin_theta: x.iter().map(|&xi| (1.0 - xi * xi).max(0.0).sqrt()).collect(),
            cos_theta: x,
            phi,
            weight: w.iter().map(|&wi| wi * dphi).collect(),
            pbar,
            dpbar,
            cos_mphi,
            sin_mphi,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_theta * self.n_phi
    }

    /// ∫_{S²} f dω by the grid quadrature.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.n_nodes());
        let mut total = 0.0;
        for i in 0..self.n_theta {
            let mut row = 0.0;
            for j in 0..self.n_phi {
                row += values[i * self.n_phi + j];
            }
            total += self.weight[i] * row;
        }
        total
    }

    /// Coefficients of the degree-`l_max` projection of grid values.
    pub fn analyze_to(&self, values: &[f64], l_max: usize) -> Vec<f64> {
        assert!(l_max <= self.l_max);
        assert_eq!(values.len(), self.n_nodes());
        let sqrt2 = std::f64::consts::SQRT_2;
        let mut coeffs = vec![0.0; n_modes(l_max)];
        // Azimuthal projections per colatitude ring: gc[m], gs[m].
        let mut gc = vec![0.0; l_max + 1];
        let mut gs = vec![0.0; l_max + 1];
        for i in 0..self.n_theta {
            let ring = &values[i * self.n_phi..(i + 1) * self.n_phi];
            for m in 0..=l_max {
                let mut c = 0.0;
                let mut s = 0.0;
                for (j, &f) in ring.iter().enumerate() {
                    c += f * self.cos_mphi[m * self.n_phi + j];
                    s += f * self.sin_mphi[m * self.n_phi + j];
                }
                gc[m] = c;
                gs[m] = s;
            }
            let wi = self.weight[i];
            let p = &self.pbar[i];
            for l in 0..=l_max {
                coeffs[mode_index(l, 0)] += wi * p[mode_index(l, 0)] * gc[0];
                for m in 1..=l {
                    let pv = p[mode_index(l, m as i64)];
                    coeffs[mode_index(l, m as i64)] += wi * sqrt2 * pv * gc[m];
                    coeffs[mode_index(l, -(m as i64))] += wi * sqrt2 * pv * gs[m];
                }
            }
        }
        coeffs
    }

    /// Grid values of a coefficient vector (degree inferred from its length).
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let l_max = degree_of(coeffs);
        assert!(l_max <= self.l_max);
        let sqrt2 = std::f64::consts::SQRT_2;
        let mut out = vec![0.0; self.n_nodes()];
        let mut hc = vec![0.0; l_max + 1];
        let mut hs = vec![0.0; l_max + 1];
        for i in 0..self.n_theta {
            let p = &self.pbar[i];
            for m in 0..=l_max {
                hc[m] = 0.0;
                hs[m] = 0.0;
            }
            for l in 0..=l_max {
                hc[0] += coeffs[mode_index(l, 0)] * p[mode_index(l, 0)];
                for m in 1..=l {
                    let pv = sqrt2 * p[mode_index(l, m as i64)];
                    hc[m] += coeffs[mode_index(l, m as i64)] * pv;
                    hs[m] += coeffs[mode_index(l, -(m as i64))] * pv;
                }
            }
            for j in 0..self.n_phi {
                let mut f = hc[0];
                for m in 1..=l_max {
                    f += hc[m] * self.cos_mphi[m * self.n_phi + j]
                        + hs[m] * self.sin_mphi[m * self.n_phi + j];
                }
                out[i * self.n_phi + j] = f;
            }
        }
        out
    }

    /// Node values of ∂_θ f for a coefficient vector.
    pub fn d_theta_nodes(&self, coeffs: &[f64]) -> Vec<f64> {
        let l_max = degree_of(coeffs);
        assert!(l_max <= self.l_max);
        let sqrt2 = std::f64::consts::SQRT_2;
        let mut out = vec![0.0; self.n_nodes()];
        let mut hc = vec![0.0; l_max + 1];
        let mut hs = vec![0.0; l_max + 1];
        for i in 0..self.n_theta {
            let dp = &self.dpbar[i];
            for m in 0..=l_max {
                hc[m] = 0.0;
                hs[m] = 0.0;
            }
            for l in 0..=l_max {
                hc[0] += coeffs[mode_index(l, 0)] * dp[mode_index(l, 0)];
                for m in 1..=l {
                    let pv = sqrt2 * dp[mode_index(l, m as i64)];
                    hc[m] += coeffs[mode_index(l, m as i64)] * pv;
                    hs[m] += coeffs[mode_index(l, -(m as i64))] * pv;
                }
            }
            for j in 0..self.n_phi {
                let mut f = hc[0];
                for m in 1..=l_max {
                    f += hc[m] * self.cos_mphi[m * self.n_phi + j]
                        + hs[m] * self.sin_mphi[m * self.n_phi + j];
                }
                out[i * self.n_phi + j] = f;
            }
        }
        out
    }

    /// Node values of ∂_φ f (not divided by sin θ).
    pub fn d_phi_nodes(&self, coeffs: &[f64]) -> Vec<f64> {
        self.synthesize(&d_phi_coeffs(coeffs))
    }

    /// |∇_{S²} f|² = (∂_θ f)² + (∂_φ f / sin θ)² at the nodes.
    pub fn angular_gradient_sq_nodes(&self, coeffs: &[f64]) -> Vec<f64> {
        let dt = self.d_theta_nodes(coeffs);
        let dp = self.d_phi_nodes(coeffs);
        let mut out = vec![0.0; self.n_nodes()];
        for i in 0..self.n_theta {
            let inv_s = 1.0 / self.sin_theta[i];
            for j in 0..self.n_phi {
                let k = i * self.n_phi + j;
                let a = dt[k];
                let b = dp[k] * inv_s;
                out[k] = a * a + b * b;
            }
        }
        out
    }

    /// Rotation generator Ω_axis applied to a coefficient vector; exact at the
    /// truncation (generators preserve each degree-ℓ eigenspace).
    pub fn rotation_generator(&self, coeffs: &[f64], axis: RotationAxis) -> Vec<f64> {
        if let RotationAxis::Z = axis {
            return d_phi_coeffs(coeffs);
        }
        let l_max = degree_of(coeffs);
        let dt = self.d_theta_nodes(coeffs);
        let dp = self.d_phi_nodes(coeffs);
        let mut nodes = vec![0.0; self.n_nodes()];
        for i in 0..self.n_theta {
            let cot = self.cos_theta[i] / self.sin_theta[i];
            for j in 0..self.n_phi {
                let k = i * self.n_phi + j;
                let (cphi, sphi) = (self.phi[j].cos(), self.phi[j].sin());
                nodes[k] = match axis {
                    RotationAxis::X => -sphi * dt[k] - cot * cphi * dp[k],
                    RotationAxis::Y => cphi * dt[k] - cot * sphi * dp[k],
                    RotationAxis::Z => unreachable!(),
                };
            }
        }
        self.analyze_to(&nodes, l_max)
    }

    /// Exact degree-preserving projection of a pointwise product, re-truncated
    /// to `l_out`. The grid must be a [`AngularGrid::dealias`] grid for the
    /// operand degree (asserted through the node-count requirement).
    pub fn product_to(&self, f: &[f64], g: &[f64], l_out: usize) -> Vec<f64> {
        let l_op = degree_of(f).max(degree_of(g));
        assert!(
            2 * self.n_theta - 1 >= 2 * l_op + l_out && self.n_phi > 2 * l_op + l_out,
            "grid too coarse for exact product projection"
        );
        let fv = self.synthesize(f);
        let gv = self.synthesize(g);
        let hv: Vec<f64> = fv.iter().zip(&gv).map(|(a, b)| a * b).collect();
        self.analyze_to(&hv, l_out)
    }

    /// Evaluate a coefficient vector at an arbitrary direction.
    pub fn eval_at(coeffs: &[f64], cos_theta: f64, phi: f64) -> f64 {
        let l_max = degree_of(coeffs);
        let (p, _) = pbar_table(l_max, cos_theta, false);
        let sqrt2 = std::f64::consts::SQRT_2;
        let mut f = 0.0;
        for l in 0..=l_max {
            f += coeffs[mode_index(l, 0)] * p[mode_index(l, 0)];
            for m in 1..=l {
                let pv = sqrt2 * p[mode_index(l, m as i64)];
                let (c, s) = ((m as f64 * phi).cos(), (m as f64 * phi).sin());
                f += coeffs[mode_index(l, m as i64)] * pv * c
                    + coeffs[mode_index(l, -(m as i64))] * pv * s;
            }
        }
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotationAxis {
    X,
    Y,
    Z,
}

pub const ROTATION_AXES: [RotationAxis; 3] = [RotationAxis::X, RotationAxis::Y, RotationAxis::Z];

/// Truncation degree of a flat coefficient vector.
pub fn degree_of(coeffs: &[f64]) -> usize {
    let l = (coeffs.len() as f64).sqrt().round() as usize;
    assert_eq!(l * l, coeffs.len(), "coefficient vector length must be (L+1)²");
    l - 1
}

/// ∂_φ in coefficient space: cos(mφ) ↦ −m sin(mφ), sin(mφ) ↦ m cos(mφ).
pub fn d_phi_coeffs(coeffs: &[f64]) -> Vec<f64> {
    let l_max = degree_of(coeffs);
    let mut out = vec![0.0; coeffs.len()];
    for l in 0..=l_max {
        for m in 1..=l as i64 {
            let mc = coeffs[mode_index(l, m)];
            let ms = coeffs[mode_index(l, -m)];
            out[mode_index(l, m)] = m as f64 * ms;
            out[mode_index(l, -m)] = -(m as f64) * mc;
        }
    }
    out
}

/// Δ_{S²} in coefficient space: a_{ℓm} ↦ −ℓ(ℓ+1) a_{ℓm}.
pub fn laplace_beltrami(coeffs: &[f64]) -> Vec<f64> {
    let ev = eigenvalues(degree_of(coeffs));
    coeffs.iter().zip(&ev).map(|(a, e)| -a * e).collect()
}

/// Σ_{ℓm} (ℓ(ℓ+1))^{n} a_{ℓm}²: the squared L²(S²) norm of the order-n angular
/// derivative block Σ_{|w|=n} |Ω^w f|², by the Casimir identity.
pub fn casimir_weighted_sq(coeffs: &[f64], n: usize) -> f64 {
    let ev = eigenvalues(degree_of(coeffs));
    coeffs
        .iter()
        .zip(&ev)
        .map(|(a, e)| a * a * e.powi(n as i32))
        .sum()
}

/// Σ_{ℓm} a_{ℓm} b_{ℓm} = ∫ f g dω for same-degree coefficient vectors.
pub fn dot_coeffs(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch(format!(
            "coefficient vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

/// A field on the sphere stored as real spherical-harmonic coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularField {
    pub coeffs: Vec<f64>,
}

impl AngularField {
    pub fn zeros(l_max: usize) -> Self {
        AngularField {
            coeffs: vec![0.0; n_modes(l_max)],
        }
    }

    /// Constant field f ≡ c (a₀₀ = √(4π) c).
    pub fn constant(l_max: usize, c: f64) -> Self {
        let mut f = Self::zeros(l_max);
        f.coeffs[0] = (4.0 * std::f64::consts::PI).sqrt() * c;
        f
    }

    /// Unit coefficient on the (ℓ, m) harmonic.
    pub fn unit(l_max: usize, l: usize, m: i64) -> Self {
        let mut f = Self::zeros(l_max);
        f.coeffs[mode_index(l, m)] = 1.0;
        f
    }

    pub fn from_coeffs(coeffs: Vec<f64>) -> Self {
        degree_of(&coeffs);
        AngularField { coeffs }
    }

    pub fn l_max(&self) -> usize {
        degree_of(&self.coeffs)
    }

    /// Mean over the sphere, (4π)⁻¹ ∫ f dω = a₀₀ / √(4π).
    pub fn mean(&self) -> f64 {
        self.coeffs[0] / (4.0 * std::f64::consts::PI).sqrt()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        casimir_weighted_sq(&self.coeffs, 0)
    }

    pub fn scaled(&self, c: f64) -> Self {
        AngularField {
            coeffs: self.coeffs.iter().map(|a| a * c).collect(),
        }
    }

    /// Truncate or zero-pad to a new degree.
    pub fn resized(&self, l_max: usize) -> Self {
        let mut out = Self::zeros(l_max);
        let l_common = self.l_max().min(l_max);
        for l in 0..=l_common {
            for m in -(l as i64)..=(l as i64) {
                out.coeffs[mode_index(l, m)] = self.coeffs[mode_index(l, m)];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [1usize, 2, 5, 9, 16] {
            let (x, w) = gauss_legendre(n);
            for k in 0..(2 * n) {
                let exact = if k % 2 == 0 {
                    2.0 / (k as f64 + 1.0)
                } else {
                    0.0
                };
                let got: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(k as i32)).sum();
                assert_abs_diff_eq!(got, exact, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn constant_analyzes_to_sqrt_4pi() {
        let grid = AngularGrid::new(8);
        let ones = vec![1.0; grid.n_nodes()];
        let coeffs = grid.analyze_to(&ones, 8);
        assert_abs_diff_eq!(coeffs[0], (4.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-12);
        for &c in &coeffs[1..] {
            assert!(c.abs() <= 1e-12);
        }
    }

    #[test]
    fn unit_harmonic_round_trip() {
        let grid = AngularGrid::new(8);
        let f = AngularField::unit(8, 2, 1);
        let nodes = grid.synthesize(&f.coeffs);
        let back = grid.analyze_to(&nodes, 8);
        for (k, (&a, &b)) in f.coeffs.iter().zip(&back).enumerate() {
            assert!((a - b).abs() <= 1e-12, "mode {k}: {a} vs {b}");
        }
    }

    #[test]
    fn random_band_limited_round_trip() {
        let grid = AngularGrid::new(8);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let coeffs: Vec<f64> = (0..n_modes(8)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let nodes = grid.synthesize(&coeffs);
        let back = grid.analyze_to(&nodes, 8);
        for (&a, &b) in coeffs.iter().zip(&back) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn laplace_eigenvalues() {
        let f = AngularField::unit(4, 1, 0);
        let lap = laplace_beltrami(&f.coeffs);
        assert_abs_diff_eq!(lap[mode_index(1, 0)], -2.0, epsilon = 1e-15);
        let f = AngularField::unit(4, 3, -2);
        let lap = laplace_beltrami(&f.coeffs);
        assert_abs_diff_eq!(lap[mode_index(3, -2)], -12.0, epsilon = 1e-15);
    }

    #[test]
    fn gradient_energy_matches_parseval() {
        let grid = AngularGrid::new(6);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let coeffs: Vec<f64> = (0..n_modes(6)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let grad_sq = grid.angular_gradient_sq_nodes(&coeffs);
        let quad = grid.integrate(&grad_sq);
        let parseval = casimir_weighted_sq(&coeffs, 1);
        assert_abs_diff_eq!(quad, parseval, epsilon = 1e-10 * parseval.max(1.0));
        // Constant field has vanishing gradient.
        let c = AngularField::constant(6, 3.0);
        let g = grid.angular_gradient_sq_nodes(&c.coeffs);
        assert!(g.iter().all(|&v| v.abs() < 1e-22));
    }

    /// Projection of Y₁₀·Y₁₀ onto Y₀₀ is 1/√(4π); oracle is direct quadrature
    /// on an over-resolved grid, independent of the product routine.
    #[test]
    fn product_matches_direct_quadrature_oracle() {
        let l = 4usize;
        let dealias = AngularGrid::dealias(l);
        let y10 = AngularField::unit(l, 1, 0);
        let prod = dealias.product_to(&y10.coeffs, &y10.coeffs, l);

        let oracle_grid = AngularGrid::with_sizes(3 * l, 4 * l + 2, 8 * l + 2);
        let y10_big = AngularField::unit(3 * l, 1, 0);
        let vals = oracle_grid.synthesize(&y10_big.coeffs);
        let sq: Vec<f64> = vals.iter().map(|a| a * a).collect();
        let oracle = oracle_grid.analyze_to(&sq, l);

        let expected00 = 1.0 / (4.0 * std::f64::consts::PI).sqrt();
        assert_abs_diff_eq!(prod[0], expected00, epsilon = 1e-12);
        for (&a, &b) in prod.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn product_with_unit_constant_is_identity() {
        let grid = AngularGrid::dealias(5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let f: Vec<f64> = (0..n_modes(5)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let one = AngularField::constant(5, 1.0);
        let prod = grid.product_to(&f, &one.coeffs, 5);
        for (&a, &b) in f.iter().zip(&prod) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn rotation_kills_symmetric_fields() {
        let grid = AngularGrid::new(4);
        let c = AngularField::constant(4, 2.5);
        for axis in ROTATION_AXES {
            let rot = grid.rotation_generator(&c.coeffs, axis);
            assert!(rot.iter().all(|&v| v.abs() < 1e-12));
        }
    }

    /// Independent check of the Casimir collapse: explicit enumeration of
    /// generator words of length 1 and 2 against the Parseval weights.
    #[test]
    fn casimir_identity_via_word_enumeration() {
        let grid = AngularGrid::new(5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let f: Vec<f64> = (0..n_modes(5)).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let mut sum1 = 0.0;
        let mut sum2 = 0.0;
        for a in ROTATION_AXES {
            let fa = grid.rotation_generator(&f, a);
            sum1 += casimir_weighted_sq(&fa, 0);
            for b in ROTATION_AXES {
                let fab = grid.rotation_generator(&fa, b);
                sum2 += casimir_weighted_sq(&fab, 0);
            }
        }
        let w1 = casimir_weighted_sq(&f, 1);
        let w2 = casimir_weighted_sq(&f, 2);
        assert_abs_diff_eq!(sum1, w1, epsilon = 1e-9 * w1);
        assert_abs_diff_eq!(sum2, w2, epsilon = 1e-9 * w2);
    }

    #[test]
    fn point_evaluation_matches_synthesis() {
        let grid = AngularGrid::new(6);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
        let f: Vec<f64> = (0..n_modes(6)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let nodes = grid.synthesize(&f);
        for &i in &[0usize, 3, 6] {
            for &j in &[0usize, 5, 12] {
                let got = AngularGrid::eval_at(&f, grid.cos_theta[i], grid.phi[j]);
                assert_abs_diff_eq!(got, nodes[i * grid.n_phi + j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn mode_indexing_round_trip() {
        for l in 0..=6usize {
            for m in -(l as i64)..=(l as i64) {
                assert_eq!(mode_of_index(mode_index(l, m)), (l, m));
            }
        }
    }
}
