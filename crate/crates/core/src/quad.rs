//! Graded-mesh quadrature for integrands with a power-law endpoint.
//!
//! The weighted norms in this crate are integrals ∫ I(s) ds whose integrand
//! behaves like c·s^p near s = 0 (cone-vertex norms) or s → ∞ (retarded-time
//! norms). Cells are integrated by the trapezoid rule in log s (exact spacing
//! on geometric meshes, relative error (p·h)²/12 per cell for pure powers),
//! the local exponent p is estimated from the two cells nearest the singular
//! end, and the below-mesh (or beyond-mesh) remainder is added in closed form
//! when it converges.
//!
//! Divergence is reported, never silently truncated: the flag trips when the
//! partial sums fail a Cauchy criterion (last-cell relative increment above
//! [`CAUCHY_INCREMENT`]) or when the fitted exponent makes the tail infinite.

use crate::error::{Error, Result};

/// Relative last-cell increment above which the partial sums are treated as
/// failing the Cauchy criterion.
pub const CAUCHY_INCREMENT: f64 = 1e-3;

/// Which end of the mesh carries the power-law behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingularEnd {
    /// Integrand ~ c·s^p as s → 0⁺; remainder ∫₀^{s_min} added for p > −1.
    Zero,
    /// Integrand ~ c·s^p as s → ∞; remainder ∫_{s_max}^∞ added for p < −1.
    Infinity,
}

/// Outcome of a graded integral with endpoint extrapolation.
#[derive(Debug, Clone, PartialEq)]
pub struct TailedIntegral {
    /// Cell sum plus tail (tail omitted when `diverged`).
    pub total: f64,
    /// Plain cell sum over the mesh.
    pub cell_sum: f64,
    /// Closed-form remainder beyond the singular end of the mesh.
    pub tail: f64,
    /// tail / total (0 when total vanishes).
    pub tail_fraction: f64,
    /// Fitted exponent p near the singular end (`None` when the integrand
    /// vanishes there and no fit is possible).
    pub local_exponent: Option<f64>,
    /// Relative size of the cell nearest the singular end.
    pub last_increment_rel: f64,
    pub diverged: bool,
}

/// Geometric mesh descending from `top` by `ratio` until it reaches `floor`,
/// returned ascending. The floor node is included exactly.
pub fn geometric_mesh(top: f64, floor: f64, ratio: f64) -> Result<Vec<f64>> {
    if !(top > floor && floor > 0.0) {
        return Err(Error::precondition(format!(
            "geometric mesh needs top > floor > 0, got top = {top}, floor = {floor}"
        )));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::precondition(format!(
            "geometric mesh ratio must be in (0, 1), got {ratio}"
        )));
    }
    let mut nodes = vec![floor];
    let mut k = (floor.ln() - top.ln()) / ratio.ln();
    // Largest integer power strictly above the floor. Powers closer to the
    // floor than half a log step are skipped so no stub cell appears.
    k = k.floor();
    let stub_guard = floor * ratio.sqrt().recip();
    while k >= 0.0 {
        let node = top * ratio.powf(k);
        if node > stub_guard {
            nodes.push(node);
        }
        k -= 1.0;
    }
    if *nodes.last().unwrap() < top * (1.0 - 1e-12) {
        nodes.push(top);
    }
    Ok(nodes)
}

/// `n + 1` log-uniform nodes on [a, b].
pub fn log_mesh(a: f64, b: f64, n: usize) -> Result<Vec<f64>> {
    if !(b > a && a > 0.0) {
        return Err(Error::precondition(format!(
            "log mesh needs b > a > 0, got a = {a}, b = {b}"
        )));
    }
    if n == 0 {
        return Err(Error::precondition("log mesh needs at least one cell"));
    }
    let (la, lb) = (a.ln(), b.ln());
    Ok((0..=n)
        .map(|k| (la + (lb - la) * k as f64 / n as f64).exp())
        .collect())
}

/// Trapezoid rule on an arbitrary (increasing) mesh.
pub fn trapezoid(nodes: &[f64], values: &[f64]) -> f64 {
    debug_assert_eq!(nodes.len(), values.len());
    let mut total = 0.0;
    for k in 1..nodes.len() {
        total += 0.5 * (values[k] + values[k - 1]) * (nodes[k] - nodes[k - 1]);
    }
    total
}

/// Integrate nonnegative node values over a positive increasing mesh with a
/// power-law endpoint at `end`; trapezoid in log s per cell plus closed-form
/// remainder.
pub fn tailed_integral(nodes: &[f64], values: &[f64], end: SingularEnd) -> Result<TailedIntegral> {
    if nodes.len() != values.len() {
        return Err(Error::SizeMismatch(format!(
            "{} nodes vs {} values",
            nodes.len(),
            values.len()
        )));
    }
    if nodes.len() < 3 {
        return Err(Error::precondition(
            "tailed integral needs at least three nodes",
        ));
    }
    if nodes[0] <= 0.0 {
        return Err(Error::precondition("mesh must be strictly positive"));
    }
    for k in 1..nodes.len() {
        if nodes[k] <= nodes[k - 1] {
            return Err(Error::Monotonicity(format!(
                "mesh nodes {} and {} out of order ({} ≥ {})",
                k - 1,
                k,
                nodes[k - 1],
                nodes[k]
            )));
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::precondition("non-finite integrand value"));
    }

    // ∫ I(s) ds = ∫ I(e^σ) e^σ dσ, trapezoid in σ = log s.
    let mut cell_sum = 0.0;
    let mut end_cell = 0.0;
    for k in 1..nodes.len() {
        let dsigma = (nodes[k] / nodes[k - 1]).ln();
        let cell = 0.5 * dsigma * (values[k] * nodes[k] + values[k - 1] * nodes[k - 1]);
        cell_sum += cell;
        let is_end_cell = match end {
            SingularEnd::Zero => k == 1,
            SingularEnd::Infinity => k == nodes.len() - 1,
        };
        if is_end_cell {
            end_cell = cell;
        }
    }

    let last_increment_rel = if cell_sum > 0.0 { end_cell / cell_sum } else { 0.0 };

    // Local exponent from the two nodes nearest the singular end.
    let (s0, s1, i0, i1) = match end {
        SingularEnd::Zero => (nodes[0], nodes[1], values[0], values[1]),
        SingularEnd::Infinity => {
            let n = nodes.len();
            (nodes[n - 1], nodes[n - 2], values[n - 1], values[n - 2])
        }
    };
    let local_exponent = if i0 > 0.0 && i1 > 0.0 {
        Some((i0 / i1).ln() / (s0 / s1).ln())
    } else {
        None
    };

    // Exponents within round-off of the borderline p = −1 must flag, not
    // produce an enormous finite tail.
    const BORDERLINE_MARGIN: f64 = 1e-6;
    let mut diverged = last_increment_rel > CAUCHY_INCREMENT;
    let mut tail = 0.0;
    if let Some(p) = local_exponent {
        match end {
            SingularEnd::Zero => {
                if p <= -1.0 + BORDERLINE_MARGIN {
                    diverged = true;
                } else {
                    // ∫₀^{s0} c s^p ds with c = I(s0)/s0^p.
                    tail = i0 * s0 / (p + 1.0);
                }
            }
            SingularEnd::Infinity => {
                if p >= -1.0 - BORDERLINE_MARGIN {
                    diverged = true;
                } else {
                    tail = -i0 * s0 / (p + 1.0);
                }
            }
        }
    }
    if diverged {
        tail = 0.0;
    }
    let total = cell_sum + tail;
    Ok(TailedIntegral {
        total,
        cell_sum,
        tail,
        tail_fraction: if total > 0.0 { tail / total } else { 0.0 },
        local_exponent,
        last_increment_rel,
        diverged,
    })
}

/// 5-point Lagrange derivative dy/dx at node `k` of a non-uniform mesh
/// (degree-4 accuracy; windows clamp at the ends).
pub fn lagrange_derivative_5(xs: &[f64], ys: &[f64], k: usize) -> f64 {
    let n = xs.len();
    debug_assert!(n >= 2 && ys.len() == n);
    let width = 5.min(n);
    let lo = k.saturating_sub(width / 2).min(n - width);
    let xk = xs[k];
    let mut deriv = 0.0;
    for i in lo..lo + width {
        // d/dx of the i-th Lagrange cardinal at x_k.
        let mut dl = 0.0;
        for j in lo..lo + width {
            if j == i {
                continue;
            }
            let mut term = 1.0 / (xs[i] - xs[j]);
            for m in lo..lo + width {
                if m == i || m == j {
                    continue;
                }
                term *= (xk - xs[m]) / (xs[i] - xs[m]);
            }
            dl += term;
        }
        deriv += ys[i] * dl;
    }
    deriv
}

/// 3-point Lagrange derivative (second order on non-uniform meshes).
pub fn lagrange_derivative_3(xs: &[f64], ys: &[f64], k: usize) -> f64 {
    let n = xs.len();
    debug_assert!(n >= 2 && ys.len() == n);
    if n == 2 {
        return (ys[1] - ys[0]) / (xs[1] - xs[0]);
    }
    let lo = k.saturating_sub(1).min(n - 3);
    let (x0, x1, x2) = (xs[lo], xs[lo + 1], xs[lo + 2]);
    let (y0, y1, y2) = (ys[lo], ys[lo + 1], ys[lo + 2]);
    let xk = xs[k];
    y0 * (2.0 * xk - x1 - x2) / ((x0 - x1) * (x0 - x2))
        + y1 * (2.0 * xk - x0 - x2) / ((x1 - x0) * (x1 - x2))
        + y2 * (2.0 * xk - x0 - x1) / ((x2 - x0) * (x2 - x1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn geometric_mesh_brackets_and_orders() {
        let mesh = geometric_mesh(1.0, 1e-6, 0.9).unwrap();
        assert_abs_diff_eq!(mesh[0], 1e-6, epsilon = 1e-18);
        assert_abs_diff_eq!(*mesh.last().unwrap(), 1.0, epsilon = 1e-15);
        for k in 1..mesh.len() {
            assert!(mesh[k] > mesh[k - 1]);
        }
    }

    /// ∫₀¹ v^(−0.8) dv = 5 with a 1e-8 floor: tail extrapolation must recover
    /// the ≈ 2.5% of the integral that sits below the floor.
    #[test]
    fn convergent_power_integrand_with_tail() {
        let mesh = geometric_mesh(1.0, 1e-8, 0.9).unwrap();
        let vals: Vec<f64> = mesh.iter().map(|v| v.powf(-0.8)).collect();
        let out = tailed_integral(&mesh, &vals, SingularEnd::Zero).unwrap();
        assert!(!out.diverged);
        assert_abs_diff_eq!(out.local_exponent.unwrap(), -0.8, epsilon = 1e-10);
        assert_abs_diff_eq!(out.total, 5.0, epsilon = 5.0 * 1e-3);
        assert!(out.tail_fraction > 0.02 && out.tail_fraction < 0.03);
        assert!(out.last_increment_rel < CAUCHY_INCREMENT);
    }

    #[test]
    fn borderline_power_integrand_flags_divergence() {
        let mesh = geometric_mesh(1.0, 1e-6, 0.9).unwrap();
        let vals: Vec<f64> = mesh.iter().map(|v| 1.0 / v).collect();
        let out = tailed_integral(&mesh, &vals, SingularEnd::Zero).unwrap();
        assert!(out.diverged);
        assert!(out.last_increment_rel > CAUCHY_INCREMENT);
        assert_eq!(out.tail, 0.0);
    }

    #[test]
    fn partial_sums_grow_monotonically_toward_the_singular_end() {
        let mesh = geometric_mesh(1.0, 1e-5, 0.9).unwrap();
        let vals: Vec<f64> = mesh.iter().map(|v| v.powf(-0.6)).collect();
        // Appending cells toward v = 0 can only increase the cell sum.
        let mut prev = 0.0;
        for start in (0..mesh.len() - 2).rev() {
            let out = tailed_integral(&mesh[start..], &vals[start..], SingularEnd::Zero).unwrap();
            assert!(out.cell_sum >= prev);
            prev = out.cell_sum;
        }
    }

    /// ∫₁^∞ u^(−2.8) du = 1/1.8 from a finite log mesh plus tail.
    #[test]
    fn decaying_integrand_toward_infinity() {
        let mesh = log_mesh(1.0, 50.0, 400).unwrap();
        let vals: Vec<f64> = mesh.iter().map(|u| u.powf(-2.8)).collect();
        let out = tailed_integral(&mesh, &vals, SingularEnd::Infinity).unwrap();
        assert!(!out.diverged);
        assert_abs_diff_eq!(out.local_exponent.unwrap(), -2.8, epsilon = 1e-9);
        let exact = 1.0 / 1.8;
        assert_abs_diff_eq!(out.total, exact, epsilon = exact * 1e-4);
    }

    #[test]
    fn slow_decay_toward_infinity_flags_divergence() {
        let mesh = log_mesh(1.0, 100.0, 300).unwrap();
        let vals: Vec<f64> = mesh.iter().map(|u| 1.0 / u).collect();
        let out = tailed_integral(&mesh, &vals, SingularEnd::Infinity).unwrap();
        assert!(out.diverged);
    }

    #[test]
    fn lagrange_derivatives_are_exact_on_polynomials() {
        let xs: Vec<f64> = (0..12).map(|k| 0.1 + 0.07 * k as f64 + 0.01 * (k * k) as f64).collect();
        let p = |x: f64| 2.0 - x + 3.0 * x * x; // degree 2: exact for both stencils
        let dp = |x: f64| -1.0 + 6.0 * x;
        let ys: Vec<f64> = xs.iter().map(|&x| p(x)).collect();
        for k in 0..xs.len() {
            assert_abs_diff_eq!(lagrange_derivative_3(&xs, &ys, k), dp(xs[k]), epsilon = 1e-10);
            assert_abs_diff_eq!(lagrange_derivative_5(&xs, &ys, k), dp(xs[k]), epsilon = 1e-9);
        }
        let q = |x: f64| x * x * x * x - 0.3 * x * x * x; // degree 4: exact for 5-point
        let dq = |x: f64| 4.0 * x * x * x - 0.9 * x * x;
        let ys: Vec<f64> = xs.iter().map(|&x| q(x)).collect();
        for k in 0..xs.len() {
            assert_abs_diff_eq!(lagrange_derivative_5(&xs, &ys, k), dq(xs[k]), epsilon = 1e-8);
        }
    }

    #[test]
    fn rejects_bad_meshes() {
        assert!(tailed_integral(&[0.0, 1.0, 2.0], &[1.0, 1.0, 1.0], SingularEnd::Zero).is_err());
        assert!(tailed_integral(&[1.0, 1.0, 2.0], &[1.0, 1.0, 1.0], SingularEnd::Zero).is_err());
        assert!(geometric_mesh(1.0, 2.0, 0.9).is_err());
        assert!(geometric_mesh(1.0, 0.5, 1.1).is_err());
    }
}
