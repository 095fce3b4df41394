//! Experiment configuration: flat `[section] key = value` text, strictly
//! validated, with an effective-value echo embedded in every manifest so
//! each reported number is reproducible from the manifest alone.
//!
//! Unknown sections or keys are rejected rather than ignored; a typo in a
//! tolerance must fail loudly, not silently run with the default.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

/// Parse or validation failure; the runner maps these to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub type Result<T> = std::result::Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ConfigError(msg.into()))
}

/// Sections and keys the format accepts, checked before any typing.
const CATALOG: &[(&str, &[&str])] = &[
    ("experiment", &["name", "seed"]),
    (
        "grid",
        &["epsilon", "n", "refinements", "l_max", "v_floor", "graded_top", "ratio"],
    ),
    ("data", &["delta_prime", "delta", "amplitude", "profile"]),
    ("nonlinearity", &["c0", "c1"]),
    ("iteration", &["k"]),
    ("hardy", &["trials"]),
    ("kt4", &["p1", "p2"]),
    (
        "mkg",
        &["u_star", "u_max", "nodes", "delta", "gauge_decay", "charged_decay", "data_file"],
    ),
    ("region", &["u_max", "v_min"]),
    (
        "assert",
        &[
            "min_order",
            "exponent_tol",
            "max_rel_change",
            "min_contraction",
            "max_limit_gap",
            "ratio_tol",
            "max_transfer_gap",
        ],
    ),
];

/// Raw parsed text: sections of key/value strings, order-normalized.
#[derive(Debug, Default)]
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = format!("line {}", k + 1);
            if let Some(inner) = line.strip_prefix('[') {
                let Some(name) = inner.strip_suffix(']') else {
                    return err(format!("{at}: unterminated section header `{raw}`"));
                };
                let name = name.trim();
                if name.is_empty() {
                    return err(format!("{at}: empty section name"));
                }
                if sections.contains_key(name) {
                    return err(format!("{at}: duplicate section [{name}]"));
                }
                sections.insert(name.to_string(), BTreeMap::new());
                current = name.to_string();
            } else if let Some((key, value)) = line.split_once('=') {
                let (key, value) = (key.trim(), value.trim());
                if current.is_empty() {
                    return err(format!("{at}: key `{key}` appears before any [section]"));
                }
                if key.is_empty() || value.is_empty() {
                    return err(format!("{at}: expected `key = value`, got `{raw}`"));
                }
                let section = sections.get_mut(&current).unwrap();
                if section.contains_key(key) {
                    return err(format!("{at}: duplicate key `{key}` in [{current}]"));
                }
                section.insert(key.to_string(), value.to_string());
            } else {
                return err(format!("{at}: expected `key = value` or `[section]`, got `{raw}`"));
            }
        }
        if sections.is_empty() {
            return err("empty config: an [experiment] section naming a driver is required");
        }
        Ok(RawConfig { sections })
    }

    pub fn from_path(path: &Path) -> Result<RawConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        RawConfig::parse(&text)
    }

    fn check_catalog(&self) -> Result<()> {
        for (section, keys) in &self.sections {
            let Some((_, allowed)) = CATALOG.iter().find(|(s, _)| s == section) else {
                return err(format!("unknown section [{section}]"));
            };
            for key in keys.keys() {
                if !allowed.contains(&key.as_str()) {
                    return err(format!("unknown key `{key}` in [{section}]"));
                }
            }
        }
        Ok(())
    }

    fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(|s| s.as_str())
    }

    fn f64(&self, section: &str, key: &str, default: f64) -> Result<f64> {
        match self.get(section, key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|_| ConfigError(format!("[{section}] {key}: `{s}` is not a number"))),
        }
    }

    fn f64_opt(&self, section: &str, key: &str) -> Result<Option<f64>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(s) => s
                .parse()
                .map(Some)
                .map_err(|_| ConfigError(format!("[{section}] {key}: `{s}` is not a number"))),
        }
    }

    fn usize(&self, section: &str, key: &str, default: usize) -> Result<usize> {
        match self.get(section, key) {
            None => Ok(default),
            Some(s) => s.parse().map_err(|_| {
                ConfigError(format!("[{section}] {key}: `{s}` is not a nonnegative integer"))
            }),
        }
    }

    fn u64(&self, section: &str, key: &str, default: u64) -> Result<u64> {
        match self.get(section, key) {
            None => Ok(default),
            Some(s) => s.parse().map_err(|_| {
                ConfigError(format!("[{section}] {key}: `{s}` is not a nonnegative integer"))
            }),
        }
    }
}

/// Angular shape of the cone data profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// Spherically symmetric, the closed-form-comparable family.
    Constant,
    /// Constant plus a 0.3·Y₁₀ admixture; needs l_max ≥ 1.
    Y10Mix,
}

impl Profile {
    fn parse(s: &str) -> Result<Profile> {
        match s {
            "constant" => Ok(Profile::Constant),
            "y10" => Ok(Profile::Y10Mix),
            other => err(format!("[data] profile: `{other}` is not one of constant, y10")),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Profile::Constant => "constant",
            Profile::Y10Mix => "y10",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GridParams {
    pub epsilon: f64,
    pub n: usize,
    pub refinements: usize,
    pub l_max: usize,
    pub v_floor: f64,
    pub graded_top: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct DataParams {
    /// Data exponent: the cone profile is amplitude·v^(δ′−1).
    pub delta_prime: f64,
    /// Norm weight exponent, the δ of the v^(1−2δ) measure.
    pub delta: f64,
    pub amplitude: f64,
    pub profile: Profile,
}

#[derive(Debug, Clone, Copy)]
pub struct NonlinParams {
    pub c0: f64,
    pub c1: [f64; 4],
}

#[derive(Debug, Clone)]
pub struct MkgParams {
    pub u_star: f64,
    pub u_max: f64,
    pub nodes: usize,
    pub delta: f64,
    pub gauge_decay: f64,
    pub charged_decay: f64,
    /// Columnar scattering-data file; the analytic family when absent.
    pub data_file: Option<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct RegionParams {
    /// Upper u of the comparison region; the full strip when absent.
    pub u_max: Option<f64>,
    pub v_min: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Kt4Params {
    pub p1: f64,
    pub p2: f64,
}

/// Pass/fail thresholds; a driver only checks the ones it documents.
#[derive(Debug, Clone, Copy)]
pub struct AssertParams {
    pub min_order: f64,
    /// Relative tolerance on fitted power-law exponents.
    pub exponent_tol: f64,
    pub max_rel_change: f64,
    pub min_contraction: f64,
    pub max_limit_gap: Option<f64>,
    pub ratio_tol: f64,
    pub max_transfer_gap: f64,
}

/// The full effective configuration of one experiment run.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub grid: GridParams,
    pub data: DataParams,
    pub nonlin: NonlinParams,
    pub k_iterations: usize,
    pub trials: usize,
    pub kt4: Kt4Params,
    pub mkg: MkgParams,
    pub region: RegionParams,
    pub asserts: AssertParams,
}

impl ExperimentConfig {
    /// Built-in defaults for the named driver; flag-driven subcommands
    /// start here and config files override.
    pub fn named(name: &str) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::base(name);
        match name {
            // The small-strip nonlinear studies.
            "picard" | "energy-scaling" => {
                cfg.grid.epsilon = 0.05;
                cfg.data.delta_prime = 0.2;
                cfg.nonlin.c0 = 1.0;
            }
            "solve" | "mms" => {
                cfg.nonlin.c0 = 1.0;
            }
            _ => {}
        }
        cfg
    }

    fn base(name: &str) -> ExperimentConfig {
        ExperimentConfig {
            name: name.to_string(),
            seed: 7,
            grid: GridParams {
                epsilon: 0.25,
                n: 64,
                refinements: 3,
                l_max: 0,
                v_floor: 1e-3,
                graded_top: 0.1,
                ratio: 0.9,
            },
            data: DataParams {
                delta_prime: 0.5,
                delta: 0.2,
                amplitude: 1.0,
                profile: Profile::Constant,
            },
            nonlin: NonlinParams { c0: 0.0, c1: [0.0; 4] },
            k_iterations: 6,
            trials: 1000,
            kt4: Kt4Params { p1: 1.5, p2: 0.75 },
            mkg: MkgParams {
                u_star: 1.0,
                u_max: 1e4,
                nodes: 400,
                delta: 0.2,
                gauge_decay: 3.0,
                charged_decay: 1.5,
                data_file: None,
            },
            region: RegionParams { u_max: None, v_min: 0.25 },
            asserts: AssertParams {
                min_order: 1.9,
                exponent_tol: 0.15,
                max_rel_change: 0.05,
                min_contraction: 2.0,
                max_limit_gap: None,
                ratio_tol: 1e-10,
                max_transfer_gap: 0.05,
            },
        }
    }

    pub fn from_raw(raw: &RawConfig) -> Result<ExperimentConfig> {
        raw.check_catalog()?;
        let Some(name) = raw.get("experiment", "name") else {
            return err("missing [experiment] name: no driver to run");
        };
        Self::build(raw, &name.to_string())
    }

    /// For direct subcommands: the driver is fixed; a config that names a
    /// different one is a contradiction, not an override.
    pub fn from_raw_named(raw: &RawConfig, driver: &str) -> Result<ExperimentConfig> {
        raw.check_catalog()?;
        if let Some(name) = raw.get("experiment", "name") {
            if name != driver {
                return err(format!(
                    "config names experiment `{name}` but the subcommand runs `{driver}`"
                ));
            }
        }
        Self::build(raw, driver)
    }

    fn build(raw: &RawConfig, name: &str) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::named(name);
        cfg.seed = raw.u64("experiment", "seed", cfg.seed)?;

        cfg.grid.epsilon = raw.f64("grid", "epsilon", cfg.grid.epsilon)?;
        cfg.grid.n = raw.usize("grid", "n", cfg.grid.n)?;
        cfg.grid.refinements = raw.usize("grid", "refinements", cfg.grid.refinements)?;
        cfg.grid.l_max = raw.usize("grid", "l_max", cfg.grid.l_max)?;
        cfg.grid.v_floor = raw.f64("grid", "v_floor", cfg.grid.v_floor)?;
        cfg.grid.graded_top = raw.f64("grid", "graded_top", cfg.grid.graded_top)?;
        cfg.grid.ratio = raw.f64("grid", "ratio", cfg.grid.ratio)?;

        cfg.data.delta_prime = raw.f64("data", "delta_prime", cfg.data.delta_prime)?;
        cfg.data.delta = raw.f64("data", "delta", cfg.data.delta)?;
        cfg.data.amplitude = raw.f64("data", "amplitude", cfg.data.amplitude)?;
        if let Some(s) = raw.get("data", "profile") {
            cfg.data.profile = Profile::parse(s)?;
        }

        cfg.nonlin.c0 = raw.f64("nonlinearity", "c0", cfg.nonlin.c0)?;
        if let Some(s) = raw.get("nonlinearity", "c1") {
            let parts: Vec<&str> = s.split_whitespace().collect();
            if parts.len() != 4 {
                return err(format!("[nonlinearity] c1: expected 4 components, got {}", parts.len()));
            }
            for (slot, part) in cfg.nonlin.c1.iter_mut().zip(parts) {
                *slot = part
                    .parse()
                    .map_err(|_| ConfigError(format!("[nonlinearity] c1: `{part}` is not a number")))?;
            }
        }

        cfg.k_iterations = raw.usize("iteration", "k", cfg.k_iterations)?;
        cfg.trials = raw.usize("hardy", "trials", cfg.trials)?;
        cfg.kt4.p1 = raw.f64("kt4", "p1", cfg.kt4.p1)?;
        cfg.kt4.p2 = raw.f64("kt4", "p2", cfg.kt4.p2)?;

        cfg.mkg.u_star = raw.f64("mkg", "u_star", cfg.mkg.u_star)?;
        cfg.mkg.u_max = raw.f64("mkg", "u_max", cfg.mkg.u_max)?;
        cfg.mkg.nodes = raw.usize("mkg", "nodes", cfg.mkg.nodes)?;
        cfg.mkg.delta = raw.f64("mkg", "delta", cfg.mkg.delta)?;
        cfg.mkg.gauge_decay = raw.f64("mkg", "gauge_decay", cfg.mkg.gauge_decay)?;
        cfg.mkg.charged_decay = raw.f64("mkg", "charged_decay", cfg.mkg.charged_decay)?;
        cfg.mkg.data_file = raw.get("mkg", "data_file").map(|s| s.to_string());

        cfg.region.u_max = raw.f64_opt("region", "u_max")?;
        cfg.region.v_min = raw.f64("region", "v_min", cfg.region.v_min)?;

        cfg.asserts.min_order = raw.f64("assert", "min_order", cfg.asserts.min_order)?;
        cfg.asserts.exponent_tol = raw.f64("assert", "exponent_tol", cfg.asserts.exponent_tol)?;
        cfg.asserts.max_rel_change =
            raw.f64("assert", "max_rel_change", cfg.asserts.max_rel_change)?;
        cfg.asserts.min_contraction =
            raw.f64("assert", "min_contraction", cfg.asserts.min_contraction)?;
        cfg.asserts.max_limit_gap = raw.f64_opt("assert", "max_limit_gap")?;
        cfg.asserts.ratio_tol = raw.f64("assert", "ratio_tol", cfg.asserts.ratio_tol)?;
        cfg.asserts.max_transfer_gap =
            raw.f64("assert", "max_transfer_gap", cfg.asserts.max_transfer_gap)?;

        cfg.validate()?;
        Ok(cfg)
    }

    /// Range checks mirroring the documented parameter domains.
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if !(g.epsilon > 0.0 && g.epsilon <= 1.0) {
            return err(format!("[grid] epsilon must be in (0, 1], got {}", g.epsilon));
        }
        if g.n < 4 {
            return err(format!("[grid] n must be at least 4, got {}", g.n));
        }
        if !(1..=8).contains(&g.refinements) {
            return err(format!("[grid] refinements must be 1..=8, got {}", g.refinements));
        }
        if g.l_max > 16 {
            return err(format!("[grid] l_max above 16 is not supported, got {}", g.l_max));
        }
        if !(g.v_floor > 0.0 && g.v_floor < g.graded_top && g.graded_top < 1.0) {
            return err(format!(
                "[grid] need 0 < v_floor < graded_top < 1, got {} and {}",
                g.v_floor, g.graded_top
            ));
        }
        if !(g.ratio > 0.0 && g.ratio < 1.0) {
            return err(format!("[grid] ratio must be in (0, 1), got {}", g.ratio));
        }
        if !(self.data.delta_prime > 0.0 && self.data.delta_prime <= 2.0) {
            return err(format!(
                "[data] delta_prime must be in (0, 2], got {}",
                self.data.delta_prime
            ));
        }
        if !(self.data.delta > 0.0 && self.data.delta < 0.5) {
            return err(format!("[data] delta must be in (0, 1/2), got {}", self.data.delta));
        }
        if self.data.profile == Profile::Y10Mix && self.grid.l_max == 0 {
            return err("[data] profile y10 needs [grid] l_max >= 1");
        }
        if matches!(self.name.as_str(), "convergence" | "mms")
            && self.data.profile != Profile::Constant
        {
            return err(format!(
                "driver `{}` compares against the symmetric closed form; [data] profile must be constant",
                self.name
            ));
        }
        if self.k_iterations == 0 {
            return err("[iteration] k must be at least 1");
        }
        if self.trials == 0 {
            return err("[hardy] trials must be at least 1");
        }
        if !(self.kt4.p2 >= 0.0 && self.kt4.p2 < self.kt4.p1) {
            return err(format!(
                "[kt4] need 0 <= p2 < p1, got p1 = {}, p2 = {}",
                self.kt4.p1, self.kt4.p2
            ));
        }
        let m = &self.mkg;
        if !(m.u_star > 0.0 && m.u_max >= m.u_star + 10.0) {
            return err(format!(
                "[mkg] need u_star > 0 and u_max >= u_star + 10, got {} and {}",
                m.u_star, m.u_max
            ));
        }
        if m.nodes < 8 {
            return err(format!("[mkg] nodes must be at least 8, got {}", m.nodes));
        }
        if !(m.delta > 0.0 && m.delta < 0.5) {
            return err(format!("[mkg] delta must be in (0, 1/2), got {}", m.delta));
        }
        if !(self.region.v_min > 0.0 && self.region.v_min < 1.0) {
            return err(format!("[region] v_min must be in (0, 1), got {}", self.region.v_min));
        }
        if !(self.asserts.exponent_tol > 0.0 && self.asserts.exponent_tol < 1.0) {
            return err(format!(
                "[assert] exponent_tol is relative and must be in (0, 1), got {}",
                self.asserts.exponent_tol
            ));
        }
        Ok(())
    }

    /// The flat-text echo of every effective value, in catalog order.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let kv = |s: &mut String, k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        s.push_str("[experiment]\n");
        kv(&mut s, "name", self.name.clone());
        kv(&mut s, "seed", self.seed.to_string());
        s.push_str("\n[grid]\n");
        kv(&mut s, "epsilon", fmt_f64(self.grid.epsilon));
        kv(&mut s, "n", self.grid.n.to_string());
        kv(&mut s, "refinements", self.grid.refinements.to_string());
        kv(&mut s, "l_max", self.grid.l_max.to_string());
        kv(&mut s, "v_floor", fmt_f64(self.grid.v_floor));
        kv(&mut s, "graded_top", fmt_f64(self.grid.graded_top));
        kv(&mut s, "ratio", fmt_f64(self.grid.ratio));
        s.push_str("\n[data]\n");
        kv(&mut s, "delta_prime", fmt_f64(self.data.delta_prime));
        kv(&mut s, "delta", fmt_f64(self.data.delta));
        kv(&mut s, "amplitude", fmt_f64(self.data.amplitude));
        kv(&mut s, "profile", self.data.profile.name().to_string());
        s.push_str("\n[nonlinearity]\n");
        kv(&mut s, "c0", fmt_f64(self.nonlin.c0));
        kv(
            &mut s,
            "c1",
            self.nonlin.c1.map(fmt_f64).join(" "),
        );
        s.push_str("\n[iteration]\n");
        kv(&mut s, "k", self.k_iterations.to_string());
        s.push_str("\n[hardy]\n");
        kv(&mut s, "trials", self.trials.to_string());
        s.push_str("\n[kt4]\n");
        kv(&mut s, "p1", fmt_f64(self.kt4.p1));
        kv(&mut s, "p2", fmt_f64(self.kt4.p2));
        s.push_str("\n[mkg]\n");
        kv(&mut s, "u_star", fmt_f64(self.mkg.u_star));
        kv(&mut s, "u_max", fmt_f64(self.mkg.u_max));
        kv(&mut s, "nodes", self.mkg.nodes.to_string());
        kv(&mut s, "delta", fmt_f64(self.mkg.delta));
        kv(&mut s, "gauge_decay", fmt_f64(self.mkg.gauge_decay));
        kv(&mut s, "charged_decay", fmt_f64(self.mkg.charged_decay));
        if let Some(path) = &self.mkg.data_file {
            kv(&mut s, "data_file", path.clone());
        }
        s.push_str("\n[region]\n");
        if let Some(u) = self.region.u_max {
            kv(&mut s, "u_max", fmt_f64(u));
        }
        kv(&mut s, "v_min", fmt_f64(self.region.v_min));
        s.push_str("\n[assert]\n");
        kv(&mut s, "min_order", fmt_f64(self.asserts.min_order));
        kv(&mut s, "exponent_tol", fmt_f64(self.asserts.exponent_tol));
        kv(&mut s, "max_rel_change", fmt_f64(self.asserts.max_rel_change));
        kv(&mut s, "min_contraction", fmt_f64(self.asserts.min_contraction));
        if let Some(gap) = self.asserts.max_limit_gap {
            kv(&mut s, "max_limit_gap", fmt_f64(gap));
        }
        kv(&mut s, "ratio_tol", fmt_f64(self.asserts.ratio_tol));
        kv(&mut s, "max_transfer_gap", fmt_f64(self.asserts.max_transfer_gap));
        s
    }
}

/// Shortest round-trip decimal so echoes re-parse to the same bits.
pub fn fmt_f64(x: f64) -> String {
    let mut s = format!("{x}");
    if !s.contains(['.', 'e', 'n', 'i']) {
        s.push_str(".0");
    }
    s
}
