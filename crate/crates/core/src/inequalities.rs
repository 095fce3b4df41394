//! Checkers for the weighted Hardy inequalities and the power-comparison
//! bound that close the energy estimates.
//!
//! Functions are modelled as piecewise-linear samples with per-cell slopes
//! standing in for the derivative. Every integral the checks need, ∫f²g′,
//! ∫(f′)²(g′)⁻¹ and ∫f²g⁻²g′, has a closed per-cell antiderivative in this
//! model, so a reported violation cannot be blamed on quadrature: it would
//! falsify the inequality itself (or the sampling preconditions).
//!
//! The three Hardy variants bound a weighted endpoint value plus a bulk
//! integral by the data at the left endpoint plus a Dirichlet-type integral:
//!
//! ```text
//! |f(s₂)|²g⁻¹(s₂) + g⁻²(s₂)∫f²g′  ≤ 4|f(s₁)|²g⁻¹(s₂) + 2∫(f′)²(g′)⁻¹
//! 2|f(s₂)|²g⁻¹(s₂) + ∫f²g⁻²g′    ≤ 2|f(s₁)|²g⁻¹(s₁) + 4∫(f′)²(g′)⁻¹
//! 2|f(s₂)|²g⁻¹(s₂) + ∫f²g⁻²g′    ≤ 4∫(f′)²(g′)⁻¹   when f(s₁) = g(s₁) = 0
//! ```
//!
//! The comparison bound turns a cumulative growth premise ∫_{s₁}^S f ≤ C·S^p₁
//! into ∫_{s₁}^S s^{−p₂} f ≤ C·p₁/(p₁−p₂)·S^{p₁−p₂} for every p₂ < p₁.

use crate::error::{Error, Result};

/// Relative slack granted to the dominated side before a check is reported
/// as violated; covers accumulated round-off only, the integrals are exact.
pub const HOLDS_SLACK: f64 = 1e-12;

/// Absolute tolerance within which the left endpoint values of the third
/// Hardy variant must vanish.
pub const ENDPOINT_ZERO_TOL: f64 = 1e-12;

/// A function on [s₁, s₂] given by samples at strictly increasing nodes,
/// read as piecewise linear with the cell slopes as its derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    nodes: Vec<f64>,
    values: Vec<f64>,
}

impl SampledFunction {
    pub fn new(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.len() != values.len() {
            return Err(Error::SizeMismatch(format!(
                "{} nodes against {} values",
                nodes.len(),
                values.len()
            )));
        }
        if nodes.len() < 2 {
            return Err(Error::precondition(
                "a sampled function needs at least two nodes",
            ));
        }
        if !nodes.iter().all(|x| x.is_finite()) || !values.iter().all(|x| x.is_finite()) {
            return Err(Error::precondition("sampled function entries must be finite"));
        }
        for k in 1..nodes.len() {
            if nodes[k] <= nodes[k - 1] {
                return Err(Error::Monotonicity(format!(
                    "nodes must increase strictly: s[{}] = {} after s[{}] = {}",
                    k,
                    nodes[k],
                    k - 1,
                    nodes[k - 1]
                )));
            }
        }
        Ok(SampledFunction { nodes, values })
    }

    /// Samples `f` at the given nodes.
    pub fn from_fn(nodes: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = nodes.iter().map(|&s| f(s)).collect();
        SampledFunction::new(nodes, values)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of linear cells.
    pub fn n_cells(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Left endpoint s₁.
    pub fn s_lo(&self) -> f64 {
        self.nodes[0]
    }

    /// Right endpoint s₂.
    pub fn s_hi(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn first_value(&self) -> f64 {
        self.values[0]
    }

    pub fn last_value(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Derivative on cell k (constant there).
    pub fn slope(&self, k: usize) -> f64 {
        (self.values[k + 1] - self.values[k]) / (self.nodes[k + 1] - self.nodes[k])
    }

    /// The same samples scaled by λ.
    pub fn scaled(&self, lambda: f64) -> SampledFunction {
        SampledFunction {
            nodes: self.nodes.clone(),
            values: self.values.iter().map(|v| lambda * v).collect(),
        }
    }
}

/// Both sides of one Hardy check, evaluated exactly for the sampled pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardyReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl HardyReport {
    fn from_sides(lhs: f64, rhs: f64) -> HardyReport {
        HardyReport {
            lhs,
            rhs,
            holds: lhs <= rhs + HOLDS_SLACK * rhs.abs(),
        }
    }

    /// rhs − lhs; nonnegative (up to round-off) whenever the check holds.
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

fn shared_cells<'a>(f: &'a SampledFunction, g: &'a SampledFunction) -> Result<&'a [f64]> {
    if f.nodes != g.nodes {
        return Err(Error::SizeMismatch(
            "f and g must be sampled on the same nodes".to_string(),
        ));
    }
    Ok(&f.nodes)
}

fn require_increasing(g: &SampledFunction) -> Result<()> {
    for k in 0..g.n_cells() {
        if g.values[k + 1] <= g.values[k] {
            return Err(Error::Monotonicity(format!(
                "weight must increase strictly: g = {} then {} across [{}, {}]",
                g.values[k],
                g.values[k + 1],
                g.nodes[k],
                g.nodes[k + 1]
            )));
        }
    }
    Ok(())
}

/// ∫ f² g′ over all cells: g′·(h/3)(f_i² + f_i f_j + f_j²) per cell.
fn int_f_sq_g_prime(f: &SampledFunction, g: &SampledFunction) -> f64 {
    let mut total = 0.0;
    for k in 0..f.n_cells() {
        let (fi, fj) = (f.values[k], f.values[k + 1]);
        let dg = g.values[k + 1] - g.values[k];
        total += dg * (fi * fi + fi * fj + fj * fj) / 3.0;
    }
    total
}

/// ∫ (f′)² (g′)⁻¹ over all cells: (Δf)²/Δg per cell.
fn int_f_prime_sq_over_g_prime(f: &SampledFunction, g: &SampledFunction) -> f64 {
    let mut total = 0.0;
    for k in 0..f.n_cells() {
        let df = f.values[k + 1] - f.values[k];
        let dg = g.values[k + 1] - g.values[k];
        total += df * df / dg;
    }
    total
}

/// ∫ f² g⁻² g′ over all cells. Writing f = α + m·g with m = Δf/Δg on a cell,
/// the antiderivative in g is −α²/g + 2αm·ln g + m²g; the cell with
/// g_i = 0 requires α = 0 (guaranteed by the kt3 preconditions) and reduces
/// to m²Δg.
fn int_f_sq_g_m2_g_prime(f: &SampledFunction, g: &SampledFunction) -> f64 {
    let mut total = 0.0;
    for k in 0..f.n_cells() {
        let (fi, fj) = (f.values[k], f.values[k + 1]);
        let (gi, gj) = (g.values[k], g.values[k + 1]);
        let m = (fj - fi) / (gj - gi);
        if gi <= ENDPOINT_ZERO_TOL {
            total += m * m * (gj - gi);
        } else {
            let alpha = fi - m * gi;
            total += alpha * alpha * (1.0 / gi - 1.0 / gj)
                + 2.0 * alpha * m * (gj / gi).ln()
                + m * m * (gj - gi);
        }
    }
    total
}

/// First Hardy variant: requires g nonnegative and strictly increasing.
pub fn hardy_kt1(f: &SampledFunction, g: &SampledFunction) -> Result<HardyReport> {
    shared_cells(f, g)?;
    require_increasing(g)?;
    if g.first_value() < 0.0 {
        return Err(Error::precondition(format!(
            "weight must be nonnegative, got g(s₁) = {}",
            g.first_value()
        )));
    }
    let g_hi = g.last_value();
    let lhs = f.last_value().powi(2) / g_hi
        + int_f_sq_g_prime(f, g) / (g_hi * g_hi);
    let rhs = 4.0 * f.first_value().powi(2) / g_hi
        + 2.0 * int_f_prime_sq_over_g_prime(f, g);
    Ok(HardyReport::from_sides(lhs, rhs))
}

/// Second Hardy variant: requires g strictly positive and increasing. The
/// degenerate endpoint f(s₁) = g(s₁) = 0 belongs to [`hardy_kt3`].
pub fn hardy_kt2(f: &SampledFunction, g: &SampledFunction) -> Result<HardyReport> {
    shared_cells(f, g)?;
    require_increasing(g)?;
    if g.first_value() <= 0.0 {
        return Err(Error::precondition(format!(
            "weight must be positive on the whole interval, got g(s₁) = {}",
            g.first_value()
        )));
    }
    let lhs = 2.0 * f.last_value().powi(2) / g.last_value() + int_f_sq_g_m2_g_prime(f, g);
    let rhs = 2.0 * f.first_value().powi(2) / g.first_value()
        + 4.0 * int_f_prime_sq_over_g_prime(f, g);
    Ok(HardyReport::from_sides(lhs, rhs))
}

/// Third Hardy variant: the second with vanishing data, f(s₁) = g(s₁) = 0.
/// The weight's zero at s₁ makes g⁻² non-integrable for generic f; with
/// f(s₁) = 0 the first cell carries f = m·g exactly and integrates to m²Δg.
pub fn hardy_kt3(f: &SampledFunction, g: &SampledFunction) -> Result<HardyReport> {
    shared_cells(f, g)?;
    require_increasing(g)?;
    if f.first_value().abs() > ENDPOINT_ZERO_TOL || g.first_value().abs() > ENDPOINT_ZERO_TOL {
        return Err(Error::precondition(format!(
            "both endpoint values must vanish, got f(s₁) = {}, g(s₁) = {}",
            f.first_value(),
            g.first_value()
        )));
    }
    let lhs = 2.0 * f.last_value().powi(2) / g.last_value() + int_f_sq_g_m2_g_prime(f, g);
    let rhs = 4.0 * int_f_prime_sq_over_g_prime(f, g);
    Ok(HardyReport::from_sides(lhs, rhs))
}

/// Integrand for the power-comparison check. The monomial case carries its
/// cumulative integrals in closed form so the extremal bound can be hit to
/// round-off; the sampled case integrates the piecewise-linear model against
/// s^{−p₂} exactly per cell.
#[derive(Debug, Clone, Copy)]
pub enum Kt4Integrand<'a> {
    /// f(s) = coefficient·s^power with coefficient ≥ 0.
    Monomial { coefficient: f64, power: f64 },
    /// Nonnegative piecewise-linear samples; the node set doubles as the
    /// grid of upper limits S the check is evaluated at.
    Sampled(&'a SampledFunction),
}

/// Outcome of the power-comparison check: the worst ratio of the weighted
/// cumulative integral against its claimed bound over all tested S.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kt4Report {
    pub worst_ratio: f64,
    pub holds: bool,
}

/// ∫ s^q ds between two nonnegative limits, with the logarithmic branch.
fn power_integral(q: f64, x0: f64, x1: f64) -> f64 {
    if (q + 1.0).abs() < 1e-14 {
        (x1 / x0).ln()
    } else {
        (x1.powf(q + 1.0) - x0.powf(q + 1.0)) / (q + 1.0)
    }
}

/// Checks that a premise ∫_{s₁}^S f ≤ C·S^{p₁} (verified on the grid, at
/// cell midpoints too for the sampled case) propagates to
/// ∫_{s₁}^S s^{−p₂} f ≤ C·p₁/(p₁−p₂)·S^{p₁−p₂} for the given 0 ≤ p₂ < p₁.
///
/// The monomial case needs only the interval [s₁, s₂] since its cumulative
/// ratios are monotone in S; both endpoints are inspected in closed form.
pub fn kt4_check(
    f: &Kt4Integrand,
    interval: (f64, f64),
    c_premise: f64,
    p1: f64,
    p2: f64,
) -> Result<Kt4Report> {
    let (s1, s2) = interval;
    if !(s1 >= 0.0 && s2 > s1) {
        return Err(Error::precondition(format!(
            "interval must satisfy 0 ≤ s₁ < s₂, got [{s1}, {s2}]"
        )));
    }
    // p₂ ≥ 0 is essential, not cosmetic: for p₂ < 0 an integrand
    // concentrated just below S satisfies the premise while the weighted
    // integral reaches C·S^{p₁−p₂}, above the claimed bound.
    if !(p2 < p1) || !(p2 >= 0.0) || !(p1 > 0.0) || !(c_premise > 0.0) {
        return Err(Error::precondition(format!(
            "need C > 0 and 0 ≤ p₂ < p₁, got C = {c_premise}, p₁ = {p1}, p₂ = {p2}"
        )));
    }
    let bound_factor = c_premise * p1 / (p1 - p2);
    match *f {
        Kt4Integrand::Monomial { coefficient, power } => {
            if coefficient < 0.0 {
                return Err(Error::precondition(format!(
                    "integrand must be nonnegative, got coefficient {coefficient}"
                )));
            }
            if s1 == 0.0 && power <= -1.0 {
                return Err(Error::precondition(format!(
                    "s^{power} is not integrable at zero"
                )));
            }
            if coefficient == 0.0 {
                return Ok(Kt4Report { worst_ratio: 0.0, holds: true });
            }
            // Both cumulatives are closed-form powers; scan their ratios on
            // a geometric grid of upper limits (approaching zero when the
            // interval starts there, since the ratios stay pure powers).
            let lo = if s1 > 0.0 { s1 } else { s2 * 1e-6 };
            let n = 256;
            let step = (s2 / lo).powf(1.0 / n as f64);
            let mut worst_premise = 0.0_f64;
            let mut worst_ratio = 0.0_f64;
            for k in 0..=n {
                let s = if k == n { s2 } else { lo * step.powi(k) };
                worst_premise = worst_premise.max(
                    coefficient * power_integral(power, s1, s)
                        / (c_premise * s.powf(p1)),
                );
                worst_ratio = worst_ratio.max(
                    coefficient * power_integral(power - p2, s1, s)
                        / (bound_factor * s.powf(p1 - p2)),
                );
            }
            if worst_premise > 1.0 + HOLDS_SLACK {
                return Err(Error::precondition(format!(
                    "premise fails: cumulative integral reaches {worst_premise:.6} of C·S^p₁"
                )));
            }
            Ok(Kt4Report { worst_ratio, holds: worst_ratio <= 1.0 + HOLDS_SLACK })
        }
        Kt4Integrand::Sampled(samples) => {
            if let Some(bad) = samples.values.iter().find(|v| **v < 0.0) {
                return Err(Error::precondition(format!(
                    "integrand must be nonnegative, got sample {bad}"
                )));
            }
            let tol = 1e-12 * (s1.abs() + s2.abs());
            if samples.s_lo() < s1 - tol || samples.s_hi() > s2 + tol {
                return Err(Error::precondition(
                    "samples must lie inside the stated interval",
                ));
            }
            if samples.s_lo() == 0.0 && p2 >= 1.0 {
                return Err(Error::precondition(format!(
                    "s^{} is not integrable against the samples at zero",
                    -p2
                )));
            }
            let lo = samples.s_lo();
            // Cumulative plain and weighted integrals at nodes and cell
            // midpoints; the premise between nodes is what the conclusion
            // at later nodes actually draws on.
            let mut plain = 0.0;
            let mut weighted = 0.0;
            let mut worst_premise = 0.0_f64;
            let mut worst_ratio = 0.0_f64;
            let mut visit = |upto: f64, plain: f64, weighted: f64| {
                if upto > lo {
                    worst_premise = worst_premise.max(plain / (c_premise * upto.powf(p1)));
                    worst_ratio =
                        worst_ratio.max(weighted / (bound_factor * upto.powf(p1 - p2)));
                }
            };
            for k in 0..samples.n_cells() {
                let (x0, x1) = (samples.nodes[k], samples.nodes[k + 1]);
                let slope = samples.slope(k);
                let intercept = samples.values[k] - slope * x0;
                let mid = 0.5 * (x0 + x1);
                let seg = |a: f64, b: f64| {
                    (
                        intercept * (b - a) + slope * 0.5 * (b * b - a * a),
                        intercept * power_integral(-p2, a, b)
                            + slope * power_integral(1.0 - p2, a, b),
                    )
                };
                let (dp, dw) = seg(x0, mid);
                visit(mid, plain + dp, weighted + dw);
                let (dp2, dw2) = seg(mid, x1);
                plain += dp + dp2;
                weighted += dw + dw2;
                visit(x1, plain, weighted);
            }
            if worst_premise > 1.0 + HOLDS_SLACK {
                return Err(Error::precondition(format!(
                    "premise fails: cumulative integral reaches {worst_premise:.6} of C·S^p₁"
                )));
            }
            Ok(Kt4Report { worst_ratio, holds: worst_ratio <= 1.0 + HOLDS_SLACK })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn first_variant_worked_examples() {
        let nodes = linspace(1.0, 2.0, 5);
        let f = SampledFunction::from_fn(nodes.clone(), |_| 1.0).unwrap();
        let g = SampledFunction::from_fn(nodes, |s| s).unwrap();
        let r = hardy_kt1(&f, &g).unwrap();
        assert_abs_diff_eq!(r.lhs, 0.75, epsilon = 1e-14);
        assert_abs_diff_eq!(r.rhs, 2.0, epsilon = 1e-14);
        assert!(r.holds);

        let nodes = linspace(0.0, 1.0, 5);
        let f = SampledFunction::from_fn(nodes.clone(), |s| s).unwrap();
        let g = f.clone();
        let r = hardy_kt1(&f, &g).unwrap();
        assert_abs_diff_eq!(r.lhs, 4.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r.rhs, 2.0, epsilon = 1e-14);
        assert!(r.holds);

        let zero = SampledFunction::from_fn(linspace(1.0, 2.0, 5), |_| 0.0).unwrap();
        let g = SampledFunction::from_fn(linspace(1.0, 2.0, 5), |s| s).unwrap();
        let r = hardy_kt1(&zero, &g).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.holds);
    }

    #[test]
    fn second_and_third_variant_worked_examples() {
        let nodes = vec![0.0, 0.25, 0.5, 1.0];
        let f = SampledFunction::from_fn(nodes.clone(), |s| s).unwrap();
        let g = f.clone();
        let r = hardy_kt3(&f, &g).unwrap();
        assert_abs_diff_eq!(r.lhs, 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r.rhs, 4.0, epsilon = 1e-14);
        assert!(r.holds);

        let c = 0.7;
        let nodes = vec![1.0, 1.3, 1.7, 2.0];
        let f = SampledFunction::from_fn(nodes.clone(), |_| c).unwrap();
        let g = SampledFunction::from_fn(nodes, |s| s).unwrap();
        let r = hardy_kt2(&f, &g).unwrap();
        assert_abs_diff_eq!(r.lhs, 1.5 * c * c, epsilon = 1e-14);
        assert_abs_diff_eq!(r.rhs, 2.0 * c * c, epsilon = 1e-14);
        assert!(r.holds);

        let zero = SampledFunction::from_fn(linspace(0.0, 1.0, 4), |_| 0.0).unwrap();
        let g = SampledFunction::from_fn(linspace(0.0, 1.0, 4), |s| s).unwrap();
        let r = hardy_kt3(&zero, &g).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.holds);
    }

    #[test]
    fn precondition_violations_are_reported() {
        let nodes = linspace(0.0, 1.0, 4);
        let f = SampledFunction::from_fn(nodes.clone(), |s| s).unwrap();
        let decreasing = SampledFunction::from_fn(nodes.clone(), |s| 1.0 - s).unwrap();
        assert!(matches!(hardy_kt1(&f, &decreasing), Err(Error::Monotonicity(_))));

        let g = SampledFunction::from_fn(nodes.clone(), |s| s).unwrap();
        assert!(matches!(hardy_kt2(&f, &g), Err(Error::Precondition(_))));

        let offset = SampledFunction::from_fn(nodes.clone(), |s| s + 0.5).unwrap();
        assert!(matches!(hardy_kt3(&offset, &g), Err(Error::Precondition(_))));

        let other_nodes = SampledFunction::from_fn(linspace(0.0, 1.0, 5), |s| s).unwrap();
        assert!(matches!(hardy_kt1(&f, &other_nodes), Err(Error::SizeMismatch(_))));

        assert!(SampledFunction::new(vec![0.0, 0.0, 1.0], vec![1.0; 3]).is_err());
        assert!(SampledFunction::new(vec![0.0, 1.0], vec![1.0; 3]).is_err());
    }

    #[test]
    fn comparison_bound_is_extremal_for_the_saturating_monomial() {
        for p1 in [0.6, 1.5, 2.5] {
            let f = Kt4Integrand::Monomial { coefficient: p1, power: p1 - 1.0 };
            let r = kt4_check(&f, (0.0, 2.0), 1.0, p1, 0.5 * p1).unwrap();
            assert!((r.worst_ratio - 1.0).abs() <= 1e-10, "ratio {}", r.worst_ratio);
            assert!(r.holds);
        }

        let zero = Kt4Integrand::Monomial { coefficient: 0.0, power: 1.0 };
        let r = kt4_check(&zero, (0.0, 1.0), 1.0, 1.0, 0.5).unwrap();
        assert_eq!(r.worst_ratio, 0.0);
        assert!(r.holds);
    }

    #[test]
    fn comparison_bound_rejects_bad_inputs() {
        let samples = SampledFunction::new(vec![0.5, 1.0, 2.0], vec![1.0, -0.2, 1.0]).unwrap();
        let f = Kt4Integrand::Sampled(&samples);
        assert!(matches!(
            kt4_check(&f, (0.5, 2.0), 1.0, 1.0, 0.5),
            Err(Error::Precondition(_))
        ));

        // Premise violation: the constant 1 integrates to S − 1, which beats
        // 0.01·S^1.2 on [1, 2].
        let samples = SampledFunction::from_fn(linspace(1.0, 2.0, 9), |_| 1.0).unwrap();
        let f = Kt4Integrand::Sampled(&samples);
        assert!(matches!(
            kt4_check(&f, (1.0, 2.0), 0.01, 1.2, 0.3),
            Err(Error::Precondition(_))
        ));

        let f = Kt4Integrand::Monomial { coefficient: 1.0, power: -1.5 };
        assert!(kt4_check(&f, (0.0, 1.0), 1.0, 1.0, 0.5).is_err());
    }

    fn random_pair(rng: &mut ChaCha8Rng, g_at_lo: f64, f_at_lo: Option<f64>) -> (SampledFunction, SampledFunction) {
        let s1 = rng.gen_range(0.0..2.0);
        let length = rng.gen_range(0.5..3.0);
        let n = rng.gen_range(4..24usize);
        let mut nodes = vec![s1];
        for _ in 0..n {
            let step = rng.gen_range(0.05..1.0);
            nodes.push(nodes.last().unwrap() + step * length / n as f64);
        }
        let mut f_vals: Vec<f64> = nodes.iter().map(|_| rng.gen_range(-2.0..2.0)).collect();
        if let Some(v) = f_at_lo {
            f_vals[0] = v;
        }
        let mut g_vals = vec![g_at_lo];
        for k in 1..nodes.len() {
            let slope = 10f64.powf(rng.gen_range(-1.0..1.0));
            g_vals.push(g_vals[k - 1] + slope * (nodes[k] - nodes[k - 1]));
        }
        (
            SampledFunction::new(nodes.clone(), f_vals).unwrap(),
            SampledFunction::new(nodes, g_vals).unwrap(),
        )
    }

    #[test]
    fn randomized_suite_never_violates_the_hardy_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(20260814);
        for trial in 0..1000 {
            let g_lo = rng.gen_range(0.0..3.0);
            let (f, g) = random_pair(&mut rng, g_lo, None);
            let r = hardy_kt1(&f, &g).unwrap();
            assert!(r.slack() >= -HOLDS_SLACK * r.rhs, "kt1 trial {trial}: {r:?}");

            let g_lo = rng.gen_range(0.1..3.0);
            let (f, g) = random_pair(&mut rng, g_lo, None);
            let r = hardy_kt2(&f, &g).unwrap();
            assert!(r.slack() >= -HOLDS_SLACK * r.rhs, "kt2 trial {trial}: {r:?}");

            let (f, g) = random_pair(&mut rng, 0.0, Some(0.0));
            let r = hardy_kt3(&f, &g).unwrap();
            assert!(r.slack() >= -HOLDS_SLACK * r.rhs, "kt3 trial {trial}: {r:?}");
        }
    }

    #[test]
    fn verdicts_are_invariant_under_field_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let lambda = 137.036;
        for _ in 0..50 {
            let g_lo = rng.gen_range(0.1..2.0);
            let (f, g) = random_pair(&mut rng, g_lo, None);
            let base = hardy_kt1(&f, &g).unwrap();
            let scaled = hardy_kt1(&f.scaled(lambda), &g).unwrap();
            assert_eq!(base.holds, scaled.holds);
            assert_abs_diff_eq!(
                scaled.lhs,
                lambda * lambda * base.lhs,
                epsilon = 1e-10 * scaled.lhs.abs().max(1e-300)
            );
            assert_abs_diff_eq!(
                scaled.rhs,
                lambda * lambda * base.rhs,
                epsilon = 1e-10 * scaled.rhs.abs()
            );

            let base2 = hardy_kt2(&f, &g).unwrap();
            let scaled2 = hardy_kt2(&f.scaled(lambda), &g).unwrap();
            assert_eq!(base2.holds, scaled2.holds);
        }
    }

    #[test]
    fn randomized_comparison_bound_with_calibrated_premise() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for trial in 0..1000 {
            let s1 = rng.gen_range(0.1..1.0);
            let length = rng.gen_range(0.5..3.0);
            let n = rng.gen_range(4..20usize);
            let nodes = linspace(s1, s1 + length, n + 1);
            let values: Vec<f64> = nodes.iter().map(|_| rng.gen_range(0.0..3.0)).collect();
            let samples = SampledFunction::new(nodes.clone(), values).unwrap();
            let p1 = rng.gen_range(0.3..3.0);
            let p2 = rng.gen_range(0.0..(p1 - 0.05));

            // Calibrate C on a grid finer than the checker's so the premise
            // genuinely holds between the checked points.
            let mut c = 0.0_f64;
            let mut acc = 0.0;
            for k in 0..samples.n_cells() {
                let (x0, x1) = (nodes[k], nodes[k + 1]);
                for step in 0..16 {
                    let a = x0 + (x1 - x0) * step as f64 / 16.0;
                    let b = x0 + (x1 - x0) * (step + 1) as f64 / 16.0;
                    let fa = samples.values[k] + samples.slope(k) * (a - x0);
                    let fb = samples.values[k] + samples.slope(k) * (b - x0);
                    acc += 0.5 * (fa + fb) * (b - a);
                    c = c.max(acc / b.powf(p1));
                }
            }
            let c = c.max(1e-12) * (1.0 + 1e-9);

            let f = Kt4Integrand::Sampled(&samples);
            let r = kt4_check(&f, (s1, s1 + length), c, p1, p2).unwrap();
            assert!(
                r.holds && r.worst_ratio <= 1.0 + HOLDS_SLACK,
                "trial {trial}: worst ratio {}",
                r.worst_ratio
            );
        }
    }

    #[test]
    fn sampled_and_monomial_routes_agree_on_a_smooth_integrand() {
        // f(s) = s on [0.5, 2]: dense sampling should reproduce the closed
        // form to the piecewise-linear bias, which vanishes here because the
        // integrand is itself linear.
        let nodes = linspace(0.5, 2.0, 33);
        let samples = SampledFunction::from_fn(nodes, |s| s).unwrap();
        let c = {
            // Premise constant for ∫_{0.5}^S s ds ≤ C·S²: ratio is
            // (S² − 0.25)/(2S²), increasing, so C = value at S = 2.
            (4.0 - 0.25) / (2.0 * 4.0)
        };
        let p1 = 2.0;
        let p2 = 0.5;
        let sampled = kt4_check(&Kt4Integrand::Sampled(&samples), (0.5, 2.0), c, p1, p2).unwrap();
        assert!(sampled.holds);
        // The same integrand as a monomial, premise checked on endpoints.
        let mono = kt4_check(
            &Kt4Integrand::Monomial { coefficient: 1.0, power: 1.0 },
            (0.5, 2.0),
            c,
            p1,
            p2,
        )
        .unwrap();
        assert!(mono.holds);
        assert_abs_diff_eq!(sampled.worst_ratio, mono.worst_ratio, epsilon = 1e-12);
    }
}
