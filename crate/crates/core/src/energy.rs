//! Weighted energy fluxes for the multiplier X = 2vL + uL̄ with χ = (v+r)/r.
//!
//! All functionals live in harmonic-coefficient space: with ψ = rf,
//!
//! ```text
//! |L̂f|² r²  = |∂_v ψ|²            (outgoing hatted derivative)
//! |L̄̂f|² r² = |∂_u ψ|²            (incoming hatted derivative)
//! |∂̸f|² r²  = |∇_{S²} f|²  ⇒ ∫ dω = Σ_m ℓ(ℓ+1) f_m²
//! ```
//!
//! so a slice integral is a 1-d quadrature of mode sums. The energy is
//!
//! ```text
//! E[f](U,V) = sup_{u≤U} ∫_u^V Σ_m [2v(∂_vψ_m)² + u ℓ(ℓ+1)f_m²] dv
//!           + sup_{v≤V} ∫_0^{min(U,v)} Σ_m [2v ℓ(ℓ+1)f_m² + u(∂_uψ_m)²] du
//!           + ∫∫ (v/r) Σ_m ℓ(ℓ+1)f_m² du dv,
//! ```
//!
//! with sups realized over grid slices. The divergence check integrates
//! ∂^μJ_μ = −(2vL̂f + uL̄̂f)□f + (t/2r)|∂̸f|² over a rectangle in (u, v);
//! the exact-derivative terms ∓r⁻²L(r(3t+r)f²/4) inside J_L and J_L̄ produce
//! identical corner sums with opposite signs across the four boundary pieces,
//! so the fluxes here never include them.

use crate::error::{Error, Result};
use crate::evolution::{commuted_field, node_psi_derivatives, NodeTable, NullField};
use crate::quad::trapezoid;
use crate::sphere::{self, RotationAxis};

/// One commuted-norm table entry: E[S^k Ω^l f] with the Ω-sum over all
/// three-generator words of length l collapsed by the Casimir identity.
#[derive(Debug, Clone, Copy)]
pub struct CommutedEntry {
    pub k: usize,
    pub l: usize,
    pub value: f64,
    /// Running total in table order (0,0), (0,1), … , (1,2).
    pub cumulative: f64,
}

#[derive(Debug, Clone)]
pub struct EnergyReport {
    /// sup flux_out + sup flux_in + bulk.
    pub total: f64,
    pub flux_out_sup: f64,
    pub flux_in_sup: f64,
    pub bulk: f64,
    /// (u, flux) per outgoing grid slice, so the sup is auditable.
    pub out_slices: Vec<(f64, f64)>,
    /// (v, flux) per incoming grid slice.
    pub in_slices: Vec<(f64, f64)>,
    /// ∫₀^{2U} [t f²]_{x=0} dt by near-axis extrapolation, the reported
    /// counterpart of the identity's axis term.
    pub axis_correction: f64,
    pub commuted: Vec<CommutedEntry>,
    pub u_max: f64,
    pub v_max: f64,
}

impl EnergyReport {
    /// Rows (slice_type, coord, k, l, value) for the CSV emitters.
    pub fn csv_rows(&self) -> Vec<(String, f64, usize, usize, f64)> {
        let mut rows = Vec::new();
        for &(u, fx) in &self.out_slices {
            rows.push(("flux_out".to_string(), u, 0, 0, fx));
        }
        for &(v, fx) in &self.in_slices {
            rows.push(("flux_in".to_string(), v, 0, 0, fx));
        }
        rows.push(("bulk".to_string(), 0.0, 0, 0, self.bulk));
        rows.push(("axis".to_string(), 0.0, 0, 0, self.axis_correction));
        for e in &self.commuted {
            rows.push(("commuted".to_string(), 0.0, e.k, e.l, e.value));
        }
        rows.push(("energy".to_string(), 0.0, 0, 0, self.total));
        rows
    }
}

fn find_row(field: &NullField, u: f64) -> Result<usize> {
    let us = &field.grid().u;
    let i = us.partition_point(|&x| x < u - 1e-12);
    if i < us.len() && (us[i] - u).abs() <= 1e-9 {
        Ok(i)
    } else {
        Err(Error::domain(format!("u = {u} is not a grid row")))
    }
}

/// Column index of the last v-node ≤ V (+tolerance).
fn col_upto(field: &NullField, v: f64) -> Result<usize> {
    let vs = &field.grid().v;
    if v < vs[0] - 1e-12 || v > vs[vs.len() - 1] + 1e-9 {
        return Err(Error::domain(format!("v = {v} outside the grid")));
    }
    Ok(vs.partition_point(|&x| x <= v + 1e-9) - 1)
}

fn mode_norm_sq(coeffs: &[f64]) -> f64 {
    coeffs.iter().map(|c| c * c).sum()
}

/// Exponent p of ‖ψ(x) − ψ(x=0)‖ ∝ x^p read off two nodes, for the closed
/// form ∫₀^{x_c} x|∂_xψ|² dx = (p/2)‖ψ(x_c) − ψ(0)‖² over the mesh cells
/// touching the conic corner, where the integrand goes like x^{2p−1}. The
/// form is exact for every pure power, the smooth p = 1 case included.
/// None when the node differences are too degenerate to classify.
fn corner_exponent(xa: f64, da_sq: f64, xb: f64, db_sq: f64) -> Option<f64> {
    if da_sq <= 0.0 || db_sq <= 0.0 {
        return None;
    }
    let p = 0.5 * (db_sq / da_sq).ln() / (xb / xa).ln();
    (0.05..=4.0).contains(&p).then_some(p)
}

/// Outgoing-slice mode sums Σ_m 2v(∂_vψ_m)² and Σ_m ℓ(ℓ+1)f_m² per node of
/// row i, columns j ≤ j_hi, prefixed with the axis endpoint v = u_i when
/// `with_axis` is set.
fn out_slice_nodes(field: &NullField, i: usize, j_hi: usize, with_axis: bool) -> (Vec<f64>, Vec<f64>) {
    let g = field.grid();
    let j0 = g.j_start[i];
    let mut xs = Vec::with_capacity(j_hi + 2 - j0);
    let mut ys = Vec::with_capacity(j_hi + 2 - j0);
    if with_axis && g.v[j0] - g.u[i] > 1e-12 {
        // Axis endpoint: ∂_vψ → f there.
        let axis_f = axis_phi_coeffs(field, i);
        let dsum: f64 = axis_f.iter().map(|c| c * c).sum();
        xs.push(g.u[i]);
        ys.push(2.0 * g.u[i] * dsum + g.u[i] * casimir(&axis_f, 1));
    }
    for j in j0..=j_hi {
        let (_, dv) = node_psi_derivatives(field, i, j);
        let f = field.phi_coeffs(i, j);
        let dsum: f64 = dv.iter().map(|c| c * c).sum();
        xs.push(g.v[j]);
        ys.push(2.0 * g.v[j] * dsum + g.u[i] * casimir(&f, 1));
    }
    (xs, ys)
}

fn casimir(coeffs: &[f64], power: usize) -> f64 {
    sphere::casimir_weighted_sq(coeffs, power)
}

/// f coefficients extrapolated to r = 0 along row i.
fn axis_phi_coeffs(field: &NullField, i: usize) -> Vec<f64> {
    let g = field.grid();
    let guard = 2.0 * g.du();
    let mut base = Vec::with_capacity(3);
    for j in g.j_start[i]..g.v.len() {
        if g.v[j] - g.u[i] >= guard {
            base.push(j);
            if base.len() == 3 {
                break;
            }
        }
    }
    if base.len() < 3 {
        return field.phi_coeffs(i, g.j_start[i]);
    }
    let rs: Vec<f64> = base.iter().map(|&j| g.v[j] - g.u[i]).collect();
    let mut out = vec![0.0; g.n_modes()];
    for (a, &j) in base.iter().enumerate() {
        let mut lag = 1.0;
        for b in 0..3 {
            if b != a {
                lag *= (0.0 - rs[b]) / (rs[a] - rs[b]);
            }
        }
        let psi = field.psi(i, j);
        for (o, p) in out.iter_mut().zip(psi) {
            *o += lag * p / rs[a];
        }
    }
    out
}

/// Outgoing-slice integral over row i up to column j_hi. The row u = 0
/// carries the conic corner at its v = 0 end, where ψ ~ v^p makes the
/// integrand v^{2p−1}; the first cell there gets the fitted-power closed
/// form and the trapezoid handles the resolved remainder.
fn out_slice_flux(field: &NullField, i: usize, j_hi: usize) -> f64 {
    let g = field.grid();
    let j0 = g.j_start[i];
    if i == 0 && g.u[0] == 0.0 && j_hi > j0 {
        let d0 = mode_norm_sq(field.psi(0, j0));
        let d1 = mode_norm_sq(field.psi(0, j0 + 1));
        if let Some(p) = corner_exponent(g.v[j0], d0, g.v[j0 + 1], d1) {
            let (xs, ys) = out_slice_nodes(field, i, j_hi, false);
            return p * d0 + trapezoid(&xs, &ys);
        }
    }
    let (xs, ys) = out_slice_nodes(field, i, j_hi, true);
    trapezoid(&xs, &ys)
}

/// ∫_{ℋ_U^{U,V}} 2v|L̂f|² + u|∂̸f|², the outgoing flux through the slice
/// u = U up to v = V.
pub fn flux_out(field: &NullField, u: f64, v: f64) -> Result<f64> {
    let i = find_row(field, u)?;
    let j_hi = col_upto(field, v)?;
    let g = field.grid();
    if j_hi < g.j_start[i] {
        return Err(Error::domain(format!("slice u = {u} has no nodes below v = {v}")));
    }
    Ok(out_slice_flux(field, i, j_hi))
}

/// ∫_{ℋ̄_{0,U}^V} 2v|∂̸f|² + u|L̄̂f|², the incoming flux through the slice
/// v = V up to u = min(U, V).
pub fn flux_in(field: &NullField, v: f64, u: f64) -> Result<f64> {
    let g = field.grid();
    let j = {
        let vs = &g.v;
        let jj = vs.partition_point(|&x| x < v - 1e-12);
        if jj < vs.len() && (vs[jj] - v).abs() <= 1e-9 {
            jj
        } else {
            return Err(Error::domain(format!("v = {v} is not a grid column")));
        }
    };
    if u > g.u[g.u.len() - 1] + 1e-9 {
        return Err(Error::domain(format!("u = {u} beyond the grid")));
    }
    let i_top = g.i_stop(j).min(g.u.partition_point(|&x| x <= u + 1e-9) - 1);
    if i_top < 1 {
        return Ok(0.0);
    }
    let mut xs = Vec::with_capacity(i_top + 1);
    let mut ang = Vec::with_capacity(i_top + 1);
    let mut du_sq = Vec::with_capacity(i_top + 1);
    for i in 0..=i_top {
        let (du_m, _) = node_psi_derivatives(field, i, j);
        let f = field.phi_coeffs(i, j);
        xs.push(g.u[i]);
        ang.push(2.0 * g.v[j] * casimir(&f, 1));
        du_sq.push(mode_norm_sq(&du_m));
    }
    let mut total = trapezoid(&xs, &ang);
    // The u-derivative term concentrates at the conic corner like u^{2p−1};
    // the first cells take the fitted-power closed form, anchored on the
    // exact data row u = 0, and the trapezoid covers the resolved rows.
    // Columns too narrow for a u-direction read share the corner's single
    // homogeneity with the data row, so the exponent comes from there.
    let corner = if i_top >= 2 {
        let da = row_diff_sq(field, 1, j);
        let db = row_diff_sq(field, 2, j);
        corner_exponent(g.u[1], da, g.u[2], db)
    } else {
        None
    };
    let corner = corner.or_else(|| {
        let (ja, jb) = if j == 0 { (0, 1) } else { (j - 1, j) };
        if jb >= g.v.len() {
            return None;
        }
        let da = mode_norm_sq(field.psi(0, ja));
        let db = mode_norm_sq(field.psi(0, jb));
        corner_exponent(g.v[ja], da, g.v[jb], db)
    });
    match corner {
        Some(p) if i_top >= 2 => {
            total += 0.5 * p * row_diff_sq(field, 2, j);
            let ys: Vec<f64> = (2..=i_top).map(|i| xs[i] * du_sq[i]).collect();
            total += trapezoid(&xs[2..], &ys);
        }
        Some(p) => {
            total += 0.5 * p * row_diff_sq(field, 1, j);
        }
        None => {
            let ys: Vec<f64> = (0..=i_top).map(|i| xs[i] * du_sq[i]).collect();
            total += trapezoid(&xs, &ys);
        }
    }
    Ok(total)
}

/// Squared mode-norm of ψ(u_i, v_j) − ψ(0, v_j).
fn row_diff_sq(field: &NullField, i: usize, j: usize) -> f64 {
    let a = field.psi(0, j);
    let b = field.psi(i, j);
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// ∫_𝒟 (v/2r)|∂̸f|² over {0 ≤ u ≤ U, u ≤ v ≤ V}, in coefficient space
/// ∫∫ (v/r) Σ ℓ(ℓ+1)f_m² du dv. The integrand extends by 0 to the axis
/// (angular coefficients vanish like r there).
pub fn bulk(field: &NullField, u: f64, v: f64) -> Result<f64> {
    let g = field.grid();
    if g.l_max == 0 {
        return Ok(0.0);
    }
    let i_top = find_row(field, u)?;
    let j_hi = col_upto(field, v)?;
    let mut xs = Vec::with_capacity(i_top + 1);
    let mut ys = Vec::with_capacity(i_top + 1);
    for i in 0..=i_top {
        let j0 = g.j_start[i];
        let mut rx = Vec::with_capacity(j_hi + 2 - j0);
        let mut ry = Vec::with_capacity(j_hi + 2 - j0);
        if g.v[j0] - g.u[i] > 1e-12 {
            rx.push(g.u[i]);
            ry.push(0.0);
        }
        for j in j0..=j_hi {
            let r = g.v[j] - g.u[i];
            let f = field.phi_coeffs(i, j);
            rx.push(g.v[j]);
            ry.push(if r < 1e-12 { 0.0 } else { g.v[j] / r * casimir(&f, 1) });
        }
        xs.push(g.u[i]);
        ys.push(if rx.len() >= 2 { trapezoid(&rx, &ry) } else { 0.0 });
    }
    if xs.len() < 2 {
        return Ok(0.0);
    }
    Ok(trapezoid(&xs, &ys))
}

fn energy_with_tables(field: &NullField, u: f64, v: f64, with_commuted: bool) -> Result<EnergyReport> {
    let g = field.grid();
    let i_top = find_row(field, u)?;
    let j_hi = col_upto(field, v)?;

    let mut out_slices = Vec::with_capacity(i_top + 1);
    for i in 0..=i_top {
        if g.j_start[i] > j_hi {
            break;
        }
        out_slices.push((g.u[i], out_slice_flux(field, i, j_hi)));
    }
    let mut in_slices = Vec::new();
    for j in 0..=j_hi {
        let fx = flux_in(field, g.v[j], u)?;
        in_slices.push((g.v[j], fx));
    }
    let bulk_term = bulk(field, u, v)?;
    let flux_out_sup = out_slices.iter().fold(0.0_f64, |a, &(_, x)| a.max(x));
    let flux_in_sup = in_slices.iter().fold(0.0_f64, |a, &(_, x)| a.max(x));

    // Axis correction ∫₀^{2U} t f(t,0)² dt over the rows' axis points.
    let mut ts = Vec::with_capacity(i_top + 1);
    let mut tv = Vec::with_capacity(i_top + 1);
    for i in 0..=i_top {
        let t = 2.0 * g.u[i];
        let f0 = axis_phi_coeffs(field, i)[0] / (4.0 * std::f64::consts::PI).sqrt();
        ts.push(t);
        tv.push(t * f0 * f0);
    }
    let axis_correction = if ts.len() >= 2 { trapezoid(&ts, &tv) } else { 0.0 };

    let mut commuted = Vec::new();
    if with_commuted {
        let mut cumulative = 0.0;
        for k in 0..=1usize {
            let base = if k == 0 {
                None
            } else {
                Some(commuted_field(field, 1, 0, RotationAxis::Z)?)
            };
            let fk = base.as_ref().unwrap_or(field);
            for l in 0..=2usize {
                let value = energy_casimir_weighted(fk, i_top, j_hi, l)?;
                cumulative += value;
                commuted.push(CommutedEntry { k, l, value, cumulative });
            }
        }
    }

    Ok(EnergyReport {
        total: flux_out_sup + flux_in_sup + bulk_term,
        flux_out_sup,
        flux_in_sup,
        bulk: bulk_term,
        out_slices,
        in_slices,
        axis_correction,
        commuted,
        u_max: g.u[i_top],
        v_max: g.v[j_hi],
    })
}

/// E[f](U, V) with per-slice tables and the axis correction; commuted
/// entries are left empty (see [`energy_commuted`]).
pub fn energy(field: &NullField, u: f64, v: f64) -> Result<EnergyReport> {
    energy_with_tables(field, u, v, false)
}

/// E plus the commuted table: entries E[S^k Ω^l f] for k ≤ 1, l ≤ 2, where
/// the sum over rotation words of length l is evaluated spectrally through
/// Σ_{|w|=l} Σ_m … (Ω^w f)_m² = Σ_m (ℓ(ℓ+1))^l … f_m².
pub fn energy_commuted(field: &NullField, u: f64, v: f64) -> Result<EnergyReport> {
    energy_with_tables(field, u, v, true)
}

/// E[Ω^l-summed field] from Casimir weights, without forming the rotated
/// fields.
fn energy_casimir_weighted(field: &NullField, i_top: usize, j_hi: usize, l: usize) -> Result<f64> {
    let g = field.grid();
    let mut out_sup = 0.0_f64;
    for i in 0..=i_top {
        let j0 = g.j_start[i];
        if j0 > j_hi {
            break;
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        if g.v[j0] - g.u[i] > 1e-12 {
            let axis_f = axis_phi_coeffs(field, i);
            // ∂_vψ at the axis limit carries the same mode weights.
            xs.push(g.u[i]);
            ys.push(2.0 * g.u[i] * casimir(&axis_f, l) + g.u[i] * casimir(&axis_f, l + 1));
        }
        for j in j0..=j_hi {
            let (_, dv) = node_psi_derivatives(field, i, j);
            let f = field.phi_coeffs(i, j);
            xs.push(g.v[j]);
            ys.push(2.0 * g.v[j] * casimir(&dv, l) + g.u[i] * casimir(&f, l + 1));
        }
        if xs.len() >= 2 {
            out_sup = out_sup.max(trapezoid(&xs, &ys));
        }
    }
    let mut in_sup = 0.0_f64;
    for j in 0..=j_hi {
        let i_stop = g.i_stop(j).min(i_top);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..=i_stop {
            let (du, _) = node_psi_derivatives(field, i, j);
            let f = field.phi_coeffs(i, j);
            xs.push(g.u[i]);
            ys.push(2.0 * g.v[j] * casimir(&f, l + 1) + g.u[i] * casimir(&du, l));
        }
        if xs.len() >= 2 {
            in_sup = in_sup.max(trapezoid(&xs, &ys));
        }
    }
    let mut bulk_term = 0.0;
    if g.l_max > 0 {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..=i_top {
            let j0 = g.j_start[i];
            let mut rx = Vec::new();
            let mut ry = Vec::new();
            if g.v[j0] - g.u[i] > 1e-12 {
                rx.push(g.u[i]);
                ry.push(0.0);
            }
            for j in j0..=j_hi {
                let r = g.v[j] - g.u[i];
                let f = field.phi_coeffs(i, j);
                rx.push(g.v[j]);
                ry.push(if r < 1e-12 { 0.0 } else { g.v[j] / r * casimir(&f, l + 1) });
            }
            xs.push(g.u[i]);
            ys.push(if rx.len() >= 2 { trapezoid(&rx, &ry) } else { 0.0 });
        }
        if xs.len() >= 2 {
            bulk_term = trapezoid(&xs, &ys);
        }
    }
    Ok(out_sup + in_sup + bulk_term)
}

/// Rectangle {0 ≤ u ≤ u_hi, v_lo ≤ v ≤ v_hi}; v_lo ≥ u_hi keeps the axis
/// (and its delta term) outside.
#[derive(Debug, Clone, Copy)]
pub struct Region {
    pub u_hi: f64,
    pub v_lo: f64,
    pub v_hi: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ResidualReport {
    /// out-difference + in-difference + bulk + source; vanishes when the
    /// field solves □f = rhs.
    pub residual: f64,
    pub out_difference: f64,
    pub in_difference: f64,
    pub bulk_term: f64,
    pub source_term: f64,
    /// Magnitude of the individual slice fluxes, for relative comparisons.
    pub scale: f64,
}

/// Discrete energy identity on a rectangle:
///
/// ```text
/// [out(U) − out(0)] + [in(V) − in(V₁)] + ∫∫ (t/r)Σℓ(ℓ+1)f_m²
///   + 2∫∫ r[2vΣ∂_vψ_mρ_m + uΣ∂_uψ_mρ_m] = 0,
/// ```
///
/// with ρ the coefficients of □f (`rhs`, zero when `None`): fluxes out plus
/// bulk balance the initial flux and the source pairing −∫(2vL̂f + uL̄̂f)□f.
/// Slice bounds snap to the nearest grid lines.
pub fn divergence_residual(
    field: &NullField,
    rhs: Option<&NodeTable>,
    region: &Region,
) -> Result<ResidualReport> {
    let g = field.grid();
    if !(region.v_lo >= region.u_hi - 1e-12) {
        return Err(Error::precondition(format!(
            "region must exclude the axis: v_lo = {} < u_hi = {}",
            region.v_lo, region.u_hi
        )));
    }
    if region.v_hi <= region.v_lo {
        return Err(Error::precondition("region needs v_hi > v_lo"));
    }
    let i_top = {
        let i = g.u.partition_point(|&x| x <= region.u_hi + 1e-12) - 1;
        if i == 0 {
            return Err(Error::precondition("region contains no full row"));
        }
        i
    };
    let j_lo = g.v.partition_point(|&x| x < region.v_lo - 1e-12);
    let j_hi = g.v.partition_point(|&x| x <= region.v_hi + 1e-12) - 1;
    if j_hi < j_lo + 1 || j_hi >= g.v.len() {
        return Err(Error::precondition("region contains no full column"));
    }
    if g.j_start[i_top] > j_lo {
        return Err(Error::precondition("rectangle leaves the active region"));
    }

    let out_slice = |i: usize| -> f64 {
        let mut xs = Vec::with_capacity(j_hi + 1 - j_lo);
        let mut ys = Vec::with_capacity(j_hi + 1 - j_lo);
        for j in j_lo..=j_hi {
            let (_, dv) = node_psi_derivatives(field, i, j);
            let f = field.phi_coeffs(i, j);
            let dsum: f64 = dv.iter().map(|c| c * c).sum();
            xs.push(g.v[j]);
            ys.push(2.0 * g.v[j] * dsum + g.u[i] * casimir(&f, 1));
        }
        trapezoid(&xs, &ys)
    };
    let in_slice = |j: usize| -> f64 {
        let mut xs = Vec::with_capacity(i_top + 1);
        let mut ys = Vec::with_capacity(i_top + 1);
        for i in 0..=i_top {
            let (du, _) = node_psi_derivatives(field, i, j);
            let f = field.phi_coeffs(i, j);
            let dsum: f64 = du.iter().map(|c| c * c).sum();
            xs.push(g.u[i]);
            ys.push(2.0 * g.v[j] * casimir(&f, 1) + g.u[i] * dsum);
        }
        trapezoid(&xs, &ys)
    };

    let out_hi = out_slice(i_top);
    let out_lo = out_slice(0);
    let in_hi = in_slice(j_hi);
    let in_lo = in_slice(j_lo);
    let out_difference = out_hi - out_lo;
    let in_difference = in_hi - in_lo;

    // Bulk (t/r)Σℓ(ℓ+1)f² and source pairing over the rectangle.
    let mut bx = Vec::with_capacity(i_top + 1);
    let mut by = Vec::with_capacity(i_top + 1);
    let mut sx = Vec::with_capacity(i_top + 1);
    let mut sy = Vec::with_capacity(i_top + 1);
    for i in 0..=i_top {
        let mut rx = Vec::with_capacity(j_hi + 1 - j_lo);
        let mut rb = Vec::with_capacity(j_hi + 1 - j_lo);
        let mut rs = Vec::with_capacity(j_hi + 1 - j_lo);
        for j in j_lo..=j_hi {
            let r = g.v[j] - g.u[i];
            let t = g.v[j] + g.u[i];
            let f = field.phi_coeffs(i, j);
            rx.push(g.v[j]);
            rb.push(t / r * casimir(&f, 1));
            if let Some(table) = rhs {
                let rho = table.get(g, i, j);
                let (du, dv) = node_psi_derivatives(field, i, j);
                let pv: f64 = dv.iter().zip(rho).map(|(a, b)| a * b).sum();
                let pu: f64 = du.iter().zip(rho).map(|(a, b)| a * b).sum();
                rs.push(2.0 * r * (2.0 * g.v[j] * pv + g.u[i] * pu));
            } else {
                rs.push(0.0);
            }
        }
        bx.push(g.u[i]);
        by.push(trapezoid(&rx, &rb));
        sx.push(g.u[i]);
        sy.push(trapezoid(&rx, &rs));
    }
    let bulk_term = trapezoid(&bx, &by);
    let source_term = trapezoid(&sx, &sy);

    let scale = out_hi.abs() + out_lo.abs() + in_hi.abs() + in_lo.abs() + bulk_term.abs()
        + source_term.abs();
    Ok(ResidualReport {
        residual: out_difference + in_difference + bulk_term + source_term,
        out_difference,
        in_difference,
        bulk_term,
        source_term,
        scale,
    })
}

/// Both closed forms of the outgoing current component at a point:
/// `hatted` = 2v|L̂f|² + u|∂̸f|² − r⁻²L(r(3t+r)f²/4) and `multiplier` =
/// 2v|Lf|² + u|∂̸f|² − f²L(χ)/2 + χL(f²)/2. They agree identically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JPair {
    pub hatted: f64,
    pub multiplier: f64,
}

pub fn j_l_pair(f: f64, lf: f64, grad_sq: f64, u: f64, v: f64) -> JPair {
    let r = v - u;
    let t = v + u;
    let lf_hat = lf + f / r;
    let hatted = 2.0 * v * lf_hat * lf_hat + u * grad_sq
        - ((3.0 * t + r) * f * f / (4.0 * r * r) + f * f / r + (3.0 * t + r) * f * lf / (2.0 * r));
    let multiplier = 2.0 * v * lf * lf + u * grad_sq + u * f * f / (2.0 * r * r)
        + (v + r) * f * lf / r;
    JPair { hatted, multiplier }
}

pub fn j_lbar_pair(f: f64, lbar_f: f64, grad_sq: f64, u: f64, v: f64) -> JPair {
    let r = v - u;
    let t = v + u;
    let lbar_hat = lbar_f - f / r;
    let hatted = 2.0 * v * grad_sq + u * lbar_hat * lbar_hat
        + ((-3.0 * t + r) * f * f / (4.0 * r * r) + (3.0 * t + r) * f * lbar_f / (2.0 * r));
    let multiplier = 2.0 * v * grad_sq + u * lbar_f * lbar_f - v * f * f / (2.0 * r * r)
        + (v + r) * f * lbar_f / r;
    JPair { hatted, multiplier }
}

#[derive(Debug, Clone, Copy)]
pub struct PowerFit {
    pub exponent: f64,
    pub log_amplitude: f64,
    pub rms_residual: f64,
}

/// Least-squares slope of log E against log V.
pub fn fit_power(samples: &[(f64, f64)]) -> Result<PowerFit> {
    if samples.len() < 4 {
        return Err(Error::precondition(format!(
            "power fit needs at least 4 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return Err(Error::precondition("power fit needs positive samples"));
    }
    let n = samples.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in samples {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-14 * (n * sxx).abs().max(1.0) {
        return Err(Error::precondition("power fit is degenerate: abscissas coincide"));
    }
    let exponent = (n * sxy - sx * sy) / denom;
    let log_amplitude = (sy - exponent * sx) / n;
    let mut rss = 0.0;
    for &(x, y) in samples {
        let e = y.ln() - (log_amplitude + exponent * x.ln());
        rss += e * e;
    }
    Ok(PowerFit {
        exponent,
        log_amplitude,
        rms_residual: (rss / n).sqrt(),
    })
}

/// Joint fit F ≈ c·U^a·V^b over (U, V, F) samples; returns (a, b).
pub fn fit_power_joint(samples: &[(f64, f64, f64)]) -> Result<(f64, f64)> {
    if samples.len() < 6 {
        return Err(Error::precondition("joint power fit needs at least 6 samples"));
    }
    if samples.iter().any(|&(u, v, f)| u <= 0.0 || v <= 0.0 || f <= 0.0) {
        return Err(Error::precondition("joint power fit needs positive samples"));
    }
    // Normal equations for [1, ln U, ln V]·[c, a, b]ᵀ = ln F.
    let mut m = [[0.0_f64; 3]; 3];
    let mut rhs = [0.0_f64; 3];
    for &(u, v, f) in samples {
        let row = [1.0, u.ln(), v.ln()];
        let y = f.ln();
        for p in 0..3 {
            for q in 0..3 {
                m[p][q] += row[p] * row[q];
            }
            rhs[p] += row[p] * y;
        }
    }
    let det = |a: &[[f64; 3]; 3]| -> f64 {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    let d = det(&m);
    if d.abs() < 1e-12 {
        return Err(Error::precondition("joint power fit is degenerate"));
    }
    let mut solved = [0.0_f64; 3];
    for col in 1..3 {
        let mut mc = m;
        for p in 0..3 {
            mc[p][col] = rhs[p];
        }
        solved[col] = det(&mc) / d;
    }
    Ok((solved[1], solved[2]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone_data::ConeData;
    use crate::evolution::{evolve, EvolveOptions, GridSpec, NodeTable, NullGrid, Rhs};
    use crate::linear::MmsSolution;
    use crate::sphere::AngularField;
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn grid(eps: f64, n: usize) -> Arc<crate::evolution::NullGrid> {
        NullGrid::new(&GridSpec::symmetric(eps, n)).unwrap()
    }

    fn grid_angular(eps: f64, n: usize, l: usize) -> Arc<crate::evolution::NullGrid> {
        let spec = GridSpec { l_max: l, ..GridSpec::symmetric(eps, n) };
        NullGrid::new(&spec).unwrap()
    }

    #[test]
    fn constant_field_fluxes_match_the_closed_forms() {
        let g = grid(0.25, 40);
        let c = 0.7;
        let f = crate::evolution::NullField::sample_symmetric(&g, |_, _| c);
        let pi = std::f64::consts::PI;
        let out = flux_out(&f, 0.25, 1.0).unwrap();
        let want = 4.0 * pi * c * c * (1.0 - 0.0625);
        assert_abs_diff_eq!(out, want, epsilon = 1e-9 * want);
        let inn = flux_in(&f, 1.0, 0.25).unwrap();
        let want_in = 2.0 * pi * c * c * 0.0625;
        assert_abs_diff_eq!(inn, want_in, epsilon = 1e-9 * want_in);
        let report = energy(&f, 0.25, 1.0).unwrap();
        assert_eq!(report.bulk, 0.0);
        // The sup over u-slices lands on u = 0, where the whole v-range is
        // still ahead of the slice: out(0) = 4πc²V².
        let want_total = 4.0 * pi * c * c + want_in;
        assert_abs_diff_eq!(report.total, want_total, epsilon = 1e-8 * want_total);
        // Axis correction ∫₀^{0.5} t c² dt = c²/8.
        assert_abs_diff_eq!(report.axis_correction, c * c * 0.125, epsilon = 1e-10);
    }

    #[test]
    fn energy_is_quadratic_in_the_field() {
        let g = grid(0.2, 24);
        let f1 = crate::evolution::NullField::sample_symmetric(&g, |u, v| (u + v).powi(2));
        let f3 = crate::evolution::NullField::sample_symmetric(&g, |u, v| 3.0 * (u + v).powi(2));
        let e1 = energy(&f1, 0.2, 1.0).unwrap().total;
        let e3 = energy(&f3, 0.2, 1.0).unwrap().total;
        assert_abs_diff_eq!(e3, 9.0 * e1, epsilon = 1e-10 * e3.abs());
    }

    #[test]
    fn symmetric_energy_reduces_to_the_hatted_fluxes() {
        let g = grid(0.2, 24);
        let f = crate::evolution::NullField::sample_symmetric(&g, |u, v| {
            MmsSolution::PowerCone { delta: 0.3 }.phi(u, v)
        });
        let report = energy(&f, 0.2, 1.0).unwrap();
        assert_eq!(report.bulk, 0.0);
        assert_abs_diff_eq!(
            report.total,
            report.flux_out_sup + report.flux_in_sup,
            epsilon = 0.0
        );
    }

    #[test]
    fn current_components_agree_between_both_routes() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let u: f64 = rng.gen_range(0.01..0.5);
            let v: f64 = rng.gen_range(u + 0.01..1.5);
            let f: f64 = rng.gen_range(-2.0..2.0);
            let lf: f64 = rng.gen_range(-2.0..2.0);
            let gs: f64 = rng.gen_range(0.0..4.0);
            let jl = j_l_pair(f, lf, gs, u, v);
            let scale = jl.hatted.abs().max(jl.multiplier.abs()).max(1.0);
            assert!(
                (jl.hatted - jl.multiplier).abs() <= 1e-12 * scale,
                "J_L mismatch at u={u}, v={v}: {jl:?}"
            );
            let jlb = j_lbar_pair(f, lf, gs, u, v);
            let scale = jlb.hatted.abs().max(jlb.multiplier.abs()).max(1.0);
            assert!(
                (jlb.hatted - jlb.multiplier).abs() <= 1e-12 * scale,
                "J_L̄ mismatch at u={u}, v={v}: {jlb:?}"
            );
        }
    }

    #[test]
    fn constant_field_residual_is_round_off() {
        let g = grid(0.2, 32);
        let f = crate::evolution::NullField::sample_symmetric(&g, |_, _| 1.3);
        let region = Region { u_hi: 0.2, v_lo: 0.3, v_hi: 1.0 };
        let report = divergence_residual(&f, None, &region).unwrap();
        assert!(
            report.residual.abs() <= 1e-10,
            "residual {} (scale {})",
            report.residual,
            report.scale
        );
    }

    /// f = t² has □f = −2; the identity must close up to quadrature error,
    /// which refines at second order.
    #[test]
    fn quadratic_solution_closes_the_identity_under_refinement() {
        let mut spec = GridSpec::symmetric(0.2, 24);
        let region = Region { u_hi: 0.2, v_lo: 0.3, v_hi: 1.0 };
        let sqrt_4pi = (4.0 * std::f64::consts::PI).sqrt();
        let mut residuals = Vec::new();
        for _ in 0..3 {
            let g = NullGrid::new(&spec).unwrap();
            let f = crate::evolution::NullField::sample_symmetric(&g, |u, v| (u + v).powi(2));
            let rho = NodeTable::from_fn(&g, |_, _| vec![-2.0 * sqrt_4pi]);
            let report = divergence_residual(&f, Some(&rho), &region).unwrap();
            residuals.push(report.residual.abs() / report.scale);
            spec = spec.refined();
        }
        let order = (residuals[1] / residuals[2]).log2();
        assert!(
            residuals[2] < residuals[0] && order > 1.5,
            "residuals {residuals:?}, order {order:.2}"
        );
    }

    #[test]
    fn evolved_linear_solution_residual_refines() {
        let data = ConeData::power_law(1.0, 0.5, AngularField::constant(0, 1.0));
        let region = Region { u_hi: 0.2, v_lo: 0.3, v_hi: 1.0 };
        let mut spec = GridSpec::symmetric(0.2, 24);
        let mut residuals = Vec::new();
        for _ in 0..3 {
            let g = NullGrid::new(&spec).unwrap();
            let f = evolve(&g, &data, Rhs::Zero, &EvolveOptions::default()).unwrap();
            let report = divergence_residual(&f, None, &region).unwrap();
            residuals.push(report.residual.abs() / report.scale);
            spec = spec.refined();
        }
        // The free symmetric march is exactly separable on the lattice
        // (ψ_ij = g_j + h_i away from the axis), so the slice differences
        // cancel to round-off at every resolution. Accept either that or a
        // measurable first-order decay.
        let round_off = residuals.iter().all(|r| *r < 1e-12);
        let order = (residuals[0] / residuals[2]).log2() / 2.0;
        assert!(
            round_off || order > 0.9,
            "residuals {residuals:?}, order {order:.2}"
        );
    }

    #[test]
    fn outgoing_flux_of_the_power_law_solution_scales_as_v_to_two_delta() {
        let dp = 0.2;
        let g = grid(0.25, 64);
        let f = crate::evolution::NullField::sample_symmetric(&g, |u, v| {
            MmsSolution::PowerCone { delta: dp }.phi(u, v)
        });
        let mut samples = Vec::new();
        for &v in &[0.2, 0.3, 0.4, 0.55, 0.7, 0.85, 1.0] {
            let j = g.v.partition_point(|&x| x <= v) - 1;
            samples.push((g.v[j], flux_out(&f, 0.0, g.v[j]).unwrap()));
        }
        let fit = fit_power(&samples).unwrap();
        assert!(
            (fit.exponent - 2.0 * dp).abs() <= 0.15 * 2.0 * dp,
            "fitted exponent {} vs {}",
            fit.exponent,
            2.0 * dp
        );
    }

    #[test]
    fn commuted_table_is_monotone() {
        let spec = GridSpec { l_max: 2, ..GridSpec::symmetric(0.2, 20) };
        let g = NullGrid::new(&spec).unwrap();
        let mut f = crate::evolution::NullField::sample_symmetric(&g, |u, v| u + 2.0 * v);
        // Salt a few angular modes so the Casimir weights bite.
        let profile = AngularField::unit(2, 1, 1);
        let data = ConeData::power_law(0.3, 1.5, profile);
        let sampled = evolve(&g, &data, Rhs::Zero, &EvolveOptions::default()).unwrap();
        f = f.sub(&sampled).unwrap();
        let report = energy_commuted(&f, 0.2, 1.0).unwrap();
        assert_eq!(report.commuted.len(), 6);
        let mut prev = 0.0;
        for entry in &report.commuted {
            assert!(entry.value >= 0.0);
            assert!(entry.cumulative >= prev);
            prev = entry.cumulative;
        }
    }

    #[test]
    fn power_fit_examples() {
        let samples: Vec<(f64, f64)> = (1..=8)
            .map(|k| {
                let v = k as f64 / 8.0;
                (v, v.powf(0.4))
            })
            .collect();
        let fit = fit_power(&samples).unwrap();
        assert_abs_diff_eq!(fit.exponent, 0.4, epsilon = 1e-12);

        let perturbed: Vec<(f64, f64)> = (1..=12)
            .map(|k| {
                let v = k as f64 / 12.0;
                (v, 3.0 * v.powf(0.4) * (1.0 + 0.01 * (v.ln()).sin()))
            })
            .collect();
        let fit = fit_power(&perturbed).unwrap();
        assert!((fit.exponent - 0.4).abs() <= 0.02, "exponent {}", fit.exponent);

        let constant: Vec<(f64, f64)> = (1..=5).map(|k| (k as f64, 2.5)).collect();
        let fit = fit_power(&constant).unwrap();
        assert_abs_diff_eq!(fit.exponent, 0.0, epsilon = 1e-12);

        assert!(fit_power(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
        assert!(fit_power(&[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0), (1.0, 4.0)]).is_err());
    }

    #[test]
    fn joint_fit_recovers_both_exponents() {
        let mut samples = Vec::new();
        for ku in 1..=4 {
            for kv in 1..=4 {
                let u = ku as f64 / 8.0;
                let v = 0.5 + kv as f64 / 8.0;
                samples.push((u, v, 2.0 * u.powf(0.3) * v.powf(0.7)));
            }
        }
        let (a, b) = fit_power_joint(&samples).unwrap();
        assert_abs_diff_eq!(a, 0.3, epsilon = 1e-10);
        assert_abs_diff_eq!(b, 0.7, epsilon = 1e-10);
    }

    #[test]
    fn angular_bulk_term_is_positive_for_nonsymmetric_fields() {
        let g = grid_angular(0.2, 20, 2);
        let profile = AngularField::unit(2, 1, 0);
        let data = ConeData::power_law(1.0, 1.0, profile);
        let f = evolve(&g, &data, Rhs::Zero, &EvolveOptions::default()).unwrap();
        let report = energy(&f, 0.2, 1.0).unwrap();
        assert!(report.bulk > 0.0);
        assert!(report.flux_in_sup > 0.0);
        for &(_, fx) in report.out_slices.iter().chain(&report.in_slices) {
            assert!(fx >= 0.0);
        }
    }
}
