//! Characteristic data on the truncated cone ℋ₀ = {u = 0, 0 < v ≤ 1} and its
//! weighted norm.
//!
//! Data is either a separable power law φ₀(v, ω) = A·v^(δ′−1)·P(ω), for which
//! every operation has a closed form ((v∂_v)^n φ₀ = (δ′−1)^n φ₀), or a table of
//! harmonic coefficients sampled on a positive increasing v-mesh, evaluated by
//! linear interpolation in log v and differentiated with 5-point Lagrange
//! stencils in log v.
//!
//! The norm measured here is
//!
//! ```text
//! M₀² = Σ_{n₁≤2} Σ_{n₂≤5−n₁} ∫₀¹ ∫_{S²} v^(1−2δ) |(v∂_v)^{n₁} ∂_ω^{n₂} φ₀|² dω dv,
//! ```
//!
//! where the angular block Σ_{|w|=n₂} |Ω^w f|² integrates to
//! Σ_{ℓm} (ℓ(ℓ+1))^{n₂} a_{ℓm}² because the rotation generators commute with
//! the sphere Laplacian. The v-integral runs through [`quad::tailed_integral`]
//! so the part of the norm below the mesh floor is extrapolated rather than
//! dropped, and borderline data (integrand ~ 1/v) is flagged as divergent.

use std::fmt::Write as _;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::quad::{self, SingularEnd};
use crate::sphere::{self, AngularField};

/// Default graded-mesh parameters for closed-form data. The floor sits at
/// 1e-10 so the convergent benchmark exponents clear the Cauchy divergence
/// threshold with margin while borderline ones still trip it.
pub const NORM_MESH_FLOOR: f64 = 1e-10;
pub const NORM_MESH_RATIO: f64 = 0.9;

/// Separable power-law data A·v^(δ′−1)·P(ω).
#[derive(Debug, Clone)]
pub struct PowerLaw {
    pub amplitude: f64,
    pub delta_prime: f64,
    pub profile: AngularField,
}

#[derive(Debug, Clone)]
enum Kind {
    PowerLaw(PowerLaw),
    /// Coefficient tables on a strictly increasing v-mesh in (0, 1].
    Samples { v: Vec<f64>, coeffs: Vec<Vec<f64>> },
}

/// Scalar data on the truncated initial cone.
#[derive(Debug, Clone)]
pub struct ConeData {
    kind: Kind,
    l_max: usize,
    /// Per-node (v∂_v)^{1,2} tables for sampled data, built on first use.
    euler_cache: [OnceLock<Vec<Vec<f64>>>; 2],
}

impl ConeData {
    fn from_kind(kind: Kind, l_max: usize) -> Self {
        ConeData {
            kind,
            l_max,
            euler_cache: [OnceLock::new(), OnceLock::new()],
        }
    }

    /// Power-law data A·v^(δ′−1)·P(ω).
    pub fn power_law(amplitude: f64, delta_prime: f64, profile: AngularField) -> Self {
        let l_max = profile.l_max();
        Self::from_kind(
            Kind::PowerLaw(PowerLaw {
                amplitude,
                delta_prime,
                profile,
            }),
            l_max,
        )
    }

    /// Constant data φ₀ ≡ c (the power law with δ′ = 1 and a flat profile).
    pub fn constant(c: f64) -> Self {
        Self::power_law(c, 1.0, AngularField::constant(0, 1.0))
    }

    /// Sampled data: one coefficient vector per mesh node.
    pub fn from_samples(v: Vec<f64>, fields: Vec<AngularField>) -> Result<Self> {
        if v.len() != fields.len() {
            return Err(Error::SizeMismatch(format!(
                "{} mesh nodes vs {} fields",
                v.len(),
                fields.len()
            )));
        }
        if v.len() < 6 {
            return Err(Error::precondition(
                "sampled cone data needs at least six nodes",
            ));
        }
        if v[0] <= 0.0 || v[v.len() - 1] > 1.0 + 1e-12 {
            return Err(Error::domain(format!(
                "cone data mesh must lie in (0, 1], got [{}, {}]",
                v[0],
                v[v.len() - 1]
            )));
        }
        for k in 1..v.len() {
            if v[k] <= v[k - 1] {
                return Err(Error::Monotonicity(format!(
                    "cone data mesh not increasing at node {k}"
                )));
            }
        }
        let l_max = fields.iter().map(|f| f.l_max()).max().unwrap();
        let coeffs = fields
            .into_iter()
            .map(|f| f.resized(l_max).coeffs)
            .collect();
        Ok(Self::from_kind(Kind::Samples { v, coeffs }, l_max))
    }

    /// Parse the columnar format written by [`ConeData::dump`]: one
    /// `v l m coefficient` record per line, `#` comments, v-groups in
    /// increasing order. Unlisted coefficients are zero.
    pub fn load(text: &str) -> Result<Self> {
        let mut v_nodes: Vec<f64> = Vec::new();
        let mut rows: Vec<Vec<(usize, i64, f64)>> = Vec::new();
        let mut l_max = 0usize;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let parse = |tok: Option<&str>, what: &str| -> Result<f64> {
                tok.ok_or_else(|| Error::Parse {
                    line: lineno + 1,
                    msg: format!("missing {what}"),
                })?
                .parse::<f64>()
                .map_err(|e| Error::Parse {
                    line: lineno + 1,
                    msg: format!("bad {what}: {e}"),
                })
            };
            let v = parse(parts.next(), "v")?;
            let l = parse(parts.next(), "l")? as usize;
            let m = parse(parts.next(), "m")? as i64;
            let c = parse(parts.next(), "coefficient")?;
            if parts.next().is_some() {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: "expected exactly four columns".into(),
                });
            }
            if m.unsigned_abs() as usize > l {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("|m| = {m} exceeds l = {l}"),
                });
            }
            l_max = l_max.max(l);
            match v_nodes.last() {
                Some(&last) if v == last => rows.last_mut().unwrap().push((l, m, c)),
                Some(&last) if v < last => {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        msg: format!("v = {v} out of order after {last}"),
                    })
                }
                _ => {
                    v_nodes.push(v);
                    rows.push(vec![(l, m, c)]);
                }
            }
        }
        let fields = rows
            .into_iter()
            .map(|row| {
                let mut coeffs = vec![0.0; sphere::n_modes(l_max)];
                for (l, m, c) in row {
                    coeffs[sphere::mode_index(l, m)] = c;
                }
                AngularField::from_coeffs(coeffs)
            })
            .collect();
        Self::from_samples(v_nodes, fields)
    }

    /// Columnar dump readable by [`ConeData::load`]. Closed-form data is
    /// written on its default norm mesh.
    pub fn dump(&self) -> String {
        let mesh = self.norm_mesh();
        let mut out = String::from("# v l m coefficient\n");
        for &v in &mesh {
            let coeffs = self.coeffs_at(v);
            for (idx, &c) in coeffs.iter().enumerate() {
                if c != 0.0 {
                    let (l, m) = sphere::mode_of_index(idx);
                    writeln!(out, "{v:.17e} {l} {m} {c:.17e}").unwrap();
                }
            }
        }
        out
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    /// True when the data carries no ℓ ≥ 1 content.
    pub fn is_symmetric(&self) -> bool {
        let flat = |coeffs: &[f64]| coeffs.iter().skip(1).all(|&c| c == 0.0);
        match &self.kind {
            Kind::PowerLaw(p) => flat(&p.profile.coeffs),
            Kind::Samples { coeffs, .. } => coeffs.iter().all(|row| flat(row)),
        }
    }

    /// The closed-form family, when this data has one.
    pub fn as_power_law(&self) -> Option<&PowerLaw> {
        match &self.kind {
            Kind::PowerLaw(p) => Some(p),
            Kind::Samples { .. } => None,
        }
    }

    /// Mesh used for norm quadrature: the data's own nodes for samples, the
    /// default graded mesh for closed forms.
    pub fn norm_mesh(&self) -> Vec<f64> {
        match &self.kind {
            Kind::PowerLaw(_) => quad::geometric_mesh(1.0, NORM_MESH_FLOOR, NORM_MESH_RATIO)
                .expect("default mesh parameters are valid"),
            Kind::Samples { v, .. } => v.clone(),
        }
    }

    /// Harmonic coefficients of φ₀(v, ·). Sampled data interpolates linearly
    /// in log v and extends boundary segments beyond the mesh.
    pub fn coeffs_at(&self, v: f64) -> Vec<f64> {
        match &self.kind {
            Kind::PowerLaw(p) => {
                let scale = p.amplitude * v.powf(p.delta_prime - 1.0);
                p.profile.coeffs.iter().map(|&c| c * scale).collect()
            }
            Kind::Samples { v: mesh, coeffs } => {
                let s = v.ln();
                let hi = mesh.partition_point(|&node| node.ln() < s).clamp(1, mesh.len() - 1);
                let (s0, s1) = (mesh[hi - 1].ln(), mesh[hi].ln());
                let w = (s - s0) / (s1 - s0);
                coeffs[hi - 1]
                    .iter()
                    .zip(&coeffs[hi])
                    .map(|(&a, &b)| a + (b - a) * w)
                    .collect()
            }
        }
    }

    /// Coefficients of (v∂_v)^{n₁} φ₀ at v, for n₁ ≤ 2.
    pub fn euler_coeffs_at(&self, v: f64, n1: usize) -> Vec<f64> {
        assert!(n1 <= 2, "Euler derivatives are provided up to order 2");
        if n1 == 0 {
            return self.coeffs_at(v);
        }
        match &self.kind {
            Kind::PowerLaw(p) => {
                let factor = (p.delta_prime - 1.0).powi(n1 as i32);
                self.coeffs_at(v).iter().map(|c| c * factor).collect()
            }
            Kind::Samples { v: mesh, .. } => {
                let tables = self.euler_tables(n1);
                let s = v.ln();
                let hi = mesh.partition_point(|&node| node.ln() < s).clamp(1, mesh.len() - 1);
                let (s0, s1) = (mesh[hi - 1].ln(), mesh[hi].ln());
                let w = (s - s0) / (s1 - s0);
                tables[hi - 1]
                    .iter()
                    .zip(&tables[hi])
                    .map(|(&a, &b)| a + (b - a) * w)
                    .collect()
            }
        }
    }

    /// Coefficients of ∂_v(v φ₀) at v, the integrand of the representation
    /// formulas for the linear evolution.
    pub fn transport_coeffs_at(&self, v: f64) -> Vec<f64> {
        match &self.kind {
            Kind::PowerLaw(p) => {
                // ∂_v(v·A v^(δ′−1)) = δ′ A v^(δ′−1).
                let scale = p.delta_prime * p.amplitude * v.powf(p.delta_prime - 1.0);
                p.profile.coeffs.iter().map(|&c| c * scale).collect()
            }
            Kind::Samples { .. } => {
                // ∂_v(vφ) = φ + (v∂_v)φ.
                let f = self.coeffs_at(v);
                let e = self.euler_coeffs_at(v, 1);
                f.iter().zip(&e).map(|(&a, &b)| a + b).collect()
            }
        }
    }

    /// Per-node tables of (v∂_v)^{n₁} φ₀ on the sample mesh, by repeated
    /// 5-point differentiation in s = log v. Built once, then cached.
    fn euler_tables(&self, n1: usize) -> &Vec<Vec<f64>> {
        debug_assert!(n1 == 1 || n1 == 2);
        self.euler_cache[n1 - 1].get_or_init(|| {
            let (mesh, coeffs) = match &self.kind {
                Kind::Samples { v, coeffs } => (v, coeffs),
                Kind::PowerLaw(_) => unreachable!("closed form handled by caller"),
            };
            let s: Vec<f64> = mesh.iter().map(|v| v.ln()).collect();
            let n_modes = sphere::n_modes(self.l_max);
            let mut tables: Vec<Vec<f64>> = coeffs.clone();
            for _ in 0..n1 {
                let mut next = vec![vec![0.0; n_modes]; mesh.len()];
                for mode in 0..n_modes {
                    let col: Vec<f64> = tables.iter().map(|row| row[mode]).collect();
                    for (k, row) in next.iter_mut().enumerate() {
                        row[mode] = quad::lagrange_derivative_5(&s, &col, k);
                    }
                }
                tables = next;
            }
            tables
        })
    }
}

/// One (n₁, n₂) block of the data norm.
#[derive(Debug, Clone, PartialEq)]
pub struct NormTerm {
    pub n1: usize,
    pub n2: usize,
    pub value: f64,
    pub diverged: bool,
}

/// Weighted data norm with per-term breakdown and divergence flags.
#[derive(Debug, Clone)]
pub struct DataNormReport {
    pub delta: f64,
    /// Σ over all terms (tails included); meaningless when `diverged`.
    pub total: f64,
    pub terms: Vec<NormTerm>,
    /// Extrapolated fraction of the total sitting below the mesh floor.
    pub tail_fraction: f64,
    /// Fitted endpoint exponent of the leading (n₁ = n₂ = 0) integrand.
    pub leading_exponent: Option<f64>,
    pub diverged: bool,
}

/// Compute M₀² for the given singularity weight δ.
pub fn data_norm(data: &ConeData, delta: f64) -> Result<DataNormReport> {
    if !(0.0 < delta && delta < 0.5) {
        return Err(Error::domain(format!(
            "data norm weight needs δ in (0, 1/2), got {delta}"
        )));
    }
    let mesh = data.norm_mesh();
    let weight: Vec<f64> = mesh.iter().map(|v| v.powf(1.0 - 2.0 * delta)).collect();

    let mut terms = Vec::new();
    let mut total = 0.0;
    let mut tail_sum = 0.0;
    let mut leading_exponent = None;
    let mut diverged = false;
    for n1 in 0..=2usize {
        let euler: Vec<Vec<f64>> = mesh
            .iter()
            .map(|&v| data.euler_coeffs_at(v, n1))
            .collect();
        for n2 in 0..=(5 - n1) {
            let integrand: Vec<f64> = euler
                .iter()
                .zip(&weight)
                .map(|(g, &w)| w * sphere::casimir_weighted_sq(g, n2))
                .collect();
            let out = quad::tailed_integral(&mesh, &integrand, SingularEnd::Zero)?;
            if n1 == 0 && n2 == 0 {
                leading_exponent = out.local_exponent;
            }
            diverged |= out.diverged;
            total += out.total;
            tail_sum += out.tail;
            terms.push(NormTerm {
                n1,
                n2,
                value: out.total,
                diverged: out.diverged,
            });
        }
    }
    Ok(DataNormReport {
        delta,
        total,
        terms,
        tail_fraction: if total > 0.0 { tail_sum / total } else { 0.0 },
        leading_exponent,
        diverged,
    })
}
