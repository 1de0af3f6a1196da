//! Serializable run descriptions for the command-line front end.
//!
//! A run is described by one JSON document with a material block (the
//! dispersion, relaxation, and equilibrium-weight tables), a coefficients
//! block (the interface reflectances and the equilibrium ratio `gamma0`),
//! a spatial grid block, and optional probe and experiment blocks. Table
//! entries accept either a literal per-node array or a compact rule
//! string: `"const:<value>"` fills every node, the equilibrium weight
//! accepts `"bose_einstein:{...}"` with the reference temperature, and
//! the reflectance accepts `"tanh_profile:{...}"` for a smooth monotone
//! frequency dependence. Everything is validated before any compute so a
//! malformed document fails fast with a configuration error.
//!
//! Probe experiments need angle and frequency nodes clustered where the
//! pulse and the measurement window live: the quadrature builder grades
//! panels geometrically away from `(mu0, omega0)` with a first width tied
//! to the narrowest pulse, then falls back to the configured background
//! node counts elsewhere. Literal per-node arrays are pinned to the plain
//! background grid and therefore cannot be re-gridded onto those panels;
//! experiments require the rule forms.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::PhonoxError;
use crate::interface::{derive_coefficients, InterfaceCoefficients};
use crate::material::{build_xi_from_bose_einstein, MaterialModel};
use crate::quadrature::{graded_panels, AngularQuadrature, Panel, SpectralGrid};
use crate::solver::SpatialGrid;
use crate::Result;

/// Per-node table or a compact generating rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TableSpec {
    Rule(String),
    Table(Vec<f64>),
}

impl TableSpec {
    /// Resolve to one value per grid node. Literal tables must match the
    /// node count exactly and are refused on panel-graded grids, where
    /// the node placement is derived rather than configured.
    pub fn resolve(&self, n: usize, allow_tables: bool, what: &str) -> Result<Vec<f64>> {
        match self {
            TableSpec::Rule(rule) => {
                let value = rule
                    .strip_prefix("const:")
                    .ok_or_else(|| {
                        PhonoxError::Config(format!(
                            "{what} rule {rule:?} is not of the form \"const:<value>\""
                        ))
                    })?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| {
                        PhonoxError::Config(format!("{what} rule {rule:?} has a bad number: {e}"))
                    })?;
                Ok(vec![value; n])
            }
            TableSpec::Table(values) => {
                if !allow_tables {
                    return Err(PhonoxError::Config(format!(
                        "{what} is a literal per-node table, which cannot be re-gridded \
                         onto the panel quadrature of a probe experiment; use a rule form"
                    )));
                }
                if values.len() != n {
                    return Err(PhonoxError::Config(format!(
                        "{what} table has {} entries for a grid of {n} nodes",
                        values.len()
                    )));
                }
                Ok(values.clone())
            }
        }
    }
}

/// Parameters of the `"bose_einstein:{...}"` equilibrium-weight rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoseEinsteinParams {
    #[serde(rename = "T_eq")]
    pub t_eq: f64,
    pub hbar_over_k0: f64,
}

/// Parameters of the `"tanh_profile:{...}"` reflectance rule:
/// `low + (high - low) (1 + tanh((omega - center)/width)) / 2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TanhProfileParams {
    pub center: f64,
    pub width: f64,
    pub low: f64,
    pub high: f64,
}

fn parse_rule_payload<T: serde::de::DeserializeOwned>(
    rule: &str,
    prefix: &str,
    what: &str,
) -> Result<T> {
    let payload = rule.strip_prefix(prefix).ok_or_else(|| {
        PhonoxError::Config(format!(
            "{what} rule {rule:?} does not start with {prefix:?}"
        ))
    })?;
    serde_json::from_str(payload).map_err(|e| {
        PhonoxError::Config(format!("{what} rule {rule:?} has a bad payload: {e}"))
    })
}

/// The material block: background node counts plus the frequency tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub omega_max: f64,
    pub n_omega: usize,
    pub n_mu: usize,
    pub tau: TableSpec,
    pub v: TableSpec,
    pub xi: TableSpec,
    pub p0: f64,
}

impl MaterialConfig {
    /// Instantiate the material on the given frequency grid.
    pub fn build(&self, grid: SpectralGrid, allow_tables: bool) -> Result<MaterialModel> {
        let n = grid.len();
        let tau = self.tau.resolve(n, allow_tables, "tau")?;
        let v = self.v.resolve(n, allow_tables, "v")?;
        let xi = match &self.xi {
            TableSpec::Rule(rule) if rule.starts_with("bose_einstein:") => {
                let p: BoseEinsteinParams = parse_rule_payload(rule, "bose_einstein:", "xi")?;
                build_xi_from_bose_einstein(p.t_eq, p.hbar_over_k0, &grid, &tau)?
            }
            other => other.resolve(n, allow_tables, "xi")?,
        };
        MaterialModel::new(grid, tau, v, None, xi, self.p0)
    }
}

/// The coefficients block: interface reflectance and equilibrium ratio.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsConfig {
    pub eta1: TableSpec,
    pub gamma0: f64,
}

impl CoefficientsConfig {
    /// Reflectance table on the material's frequency nodes.
    pub fn eta1_table(&self, grid: &SpectralGrid, allow_tables: bool) -> Result<Vec<f64>> {
        match &self.eta1 {
            TableSpec::Rule(rule) if rule.starts_with("tanh_profile:") => {
                let p: TanhProfileParams = parse_rule_payload(rule, "tanh_profile:", "eta1")?;
                if !(p.width > 0.0) {
                    return Err(PhonoxError::Config(format!(
                        "tanh profile width {} must be positive",
                        p.width
                    )));
                }
                for (name, value) in [("low", p.low), ("high", p.high)] {
                    if !(0.0..=1.0).contains(&value) {
                        return Err(PhonoxError::Config(format!(
                            "tanh profile {name} = {value} must lie in [0, 1]"
                        )));
                    }
                }
                Ok(grid
                    .nodes()
                    .iter()
                    .map(|&w| {
                        p.low
                            + (p.high - p.low) * 0.5 * (1.0 + ((w - p.center) / p.width).tanh())
                    })
                    .collect())
            }
            other => other.resolve(grid.len(), allow_tables, "eta1"),
        }
    }

    /// Derive the full interface coefficient set on the material's grid.
    pub fn build(
        &self,
        m: &MaterialModel,
        q: &AngularQuadrature,
        allow_tables: bool,
    ) -> Result<InterfaceCoefficients> {
        let eta1 = self.eta1_table(m.grid(), allow_tables)?;
        derive_coefficients(&eta1, self.gamma0, m, q)
    }
}

/// The spatial grid block.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx_left: usize,
    pub nx_right: usize,
    #[serde(rename = "L")]
    pub length: f64,
    pub dt: f64,
    #[serde(rename = "T_end")]
    pub t_end: f64,
}

impl GridConfig {
    pub fn build(&self) -> Result<SpatialGrid> {
        SpatialGrid::new(self.nx_left, self.nx_right, self.length)
    }
}

/// A single launched pulse.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub mu0: f64,
    pub omega0: f64,
    pub epsilon: f64,
}

/// Pulse-width schedule: an explicit decreasing list or a geometric one.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsilonSpec {
    List(Vec<f64>),
    Geometric {
        eps_max: f64,
        #[serde(default = "default_eps_count")]
        count: usize,
        #[serde(default = "default_eps_ratio")]
        ratio: f64,
    },
}

fn default_eps_count() -> usize {
    4
}

fn default_eps_ratio() -> f64 {
    0.7
}

impl EpsilonSpec {
    pub fn resolve(&self) -> Result<Vec<f64>> {
        match self {
            EpsilonSpec::List(list) => {
                if list.is_empty() {
                    return Err(PhonoxError::Config("the pulse-width list is empty".into()));
                }
                Ok(list.clone())
            }
            EpsilonSpec::Geometric {
                eps_max,
                count,
                ratio,
            } => {
                if !(*eps_max > 0.0) {
                    return Err(PhonoxError::Config(format!(
                        "eps_max = {eps_max} must be positive"
                    )));
                }
                if !(*ratio > 0.0 && *ratio < 1.0) {
                    return Err(PhonoxError::Config(format!(
                        "pulse-width ratio {ratio} must lie in (0, 1)"
                    )));
                }
                if *count == 0 {
                    return Err(PhonoxError::Config(
                        "the pulse-width schedule needs at least one width".into(),
                    ));
                }
                Ok((0..*count).map(|k| eps_max * ratio.powi(k as i32)).collect())
            }
        }
    }
}

/// The fit sub-block of an experiment.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Pin the remainder exponent to the value implied by the material's
    /// integrability exponent instead of fitting it.
    #[serde(default)]
    pub pin_q: bool,
}

/// Solver instrumentation shared by the commands that run fresh solves.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Carry the silent instrument component alongside the decomposition.
    pub instrument: bool,
    /// Record state norms every this many steps (omit to disable).
    pub norms_every: Option<usize>,
    pub track_extrema: bool,
    pub lp_exponent: f64,
    /// Extra steps past the window close, keeping the record comfortably
    /// covering the measurement support.
    pub tail_steps: usize,
    /// Samples before this time are excluded from budget verdicts; a
    /// concentrated pulse is only comparable after it has fully entered.
    pub settle_time: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            instrument: false,
            norms_every: None,
            track_extrema: false,
            lp_exponent: 2.0,
            tail_steps: 2,
            settle_time: 0.0,
        }
    }
}

/// The experiment block: launch direction, carrier frequencies, width
/// schedule, and the extrapolation settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_mu0")]
    pub mu0: f64,
    #[serde(default)]
    pub omega0: Option<f64>,
    #[serde(default)]
    pub omega0_list: Option<Vec<f64>>,
    pub epsilons: EpsilonSpec,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Reference reflectance for the convergence table's error column.
    #[serde(default)]
    pub eta1_true: Option<f64>,
    /// Relative level of seeded Gaussian noise added to each trace.
    #[serde(default)]
    pub noise_level: Option<f64>,
}

fn default_mu0() -> f64 {
    0.5
}

impl ExperimentConfig {
    /// The carrier frequencies, singular or swept.
    pub fn omega0_values(&self) -> Result<Vec<f64>> {
        match (&self.omega0, &self.omega0_list) {
            (Some(w), None) => Ok(vec![*w]),
            (None, Some(list)) => Ok(list.clone()),
            (Some(_), Some(_)) => Err(PhonoxError::Config(
                "give either omega0 or omega0_list, not both".into(),
            )),
            (None, None) => Err(PhonoxError::Config(
                "the experiment block needs omega0 or omega0_list".into(),
            )),
        }
    }
}

/// The full run description; one JSON document drives every command.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub material: MaterialConfig,
    pub coefficients: CoefficientsConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub probe: Option<ProbeConfig>,
    #[serde(default)]
    pub experiment: Option<ExperimentConfig>,
    /// Boundary datum for plain forward runs: `"zero"`,
    /// `"equilibrium:<amplitude>"`, or `"probe"` (the probe block).
    #[serde(default)]
    pub datum: Option<String>,
    /// Output directory; the command-line flag overrides it.
    #[serde(default)]
    pub out_dir: Option<String>,
    /// Random seed for the noise study.
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Parsed boundary-datum selector for plain forward runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DatumKind {
    Zero,
    Equilibrium(f64),
    Probe,
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            PhonoxError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_json_str(&text)
    }

    /// Structural positivity and coherence checks; table lengths and
    /// physical admissibility are checked again at build time.
    pub fn validate(&self) -> Result<()> {
        let m = &self.material;
        if !(m.omega_max > 0.0) || !m.omega_max.is_finite() {
            return Err(PhonoxError::Config(format!(
                "omega_max = {} must be positive",
                m.omega_max
            )));
        }
        if m.n_omega < 2 {
            return Err(PhonoxError::Config(format!(
                "n_omega = {} is too few frequency nodes",
                m.n_omega
            )));
        }
        if m.n_mu < 2 || m.n_mu % 2 != 0 {
            return Err(PhonoxError::Config(format!(
                "n_mu = {} must be even and at least 2",
                m.n_mu
            )));
        }
        if !(m.p0 > 1.0 && m.p0 < 1.5) {
            return Err(PhonoxError::Config(format!(
                "p0 = {} must lie in (1, 1.5)",
                m.p0
            )));
        }
        let g = &self.grid;
        for (name, value) in [("dt", g.dt), ("T_end", g.t_end), ("L", g.length)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(PhonoxError::Config(format!(
                    "grid field {name} = {value} must be positive"
                )));
            }
        }
        if g.nx_left == 0 || g.nx_right == 0 {
            return Err(PhonoxError::Config(
                "both layers need at least one cell".into(),
            ));
        }
        if !(g.length > 1.0) {
            return Err(PhonoxError::Config(format!(
                "total length L = {} must exceed the left layer width 1",
                g.length
            )));
        }
        if !(self.coefficients.gamma0 > 0.0) || !self.coefficients.gamma0.is_finite() {
            return Err(PhonoxError::Config(format!(
                "gamma0 = {} must be positive",
                self.coefficients.gamma0
            )));
        }
        if let Some(p) = &self.probe {
            if !(p.mu0 > 0.0 && p.mu0 < 1.0) {
                return Err(PhonoxError::Config(format!(
                    "probe mu0 = {} must lie in (0, 1)",
                    p.mu0
                )));
            }
            if !(p.omega0 > 0.0 && p.omega0 < m.omega_max) {
                return Err(PhonoxError::Config(format!(
                    "probe omega0 = {} must lie in (0, omega_max)",
                    p.omega0
                )));
            }
            if !(p.epsilon > 0.0) {
                return Err(PhonoxError::Config(format!(
                    "probe epsilon = {} must be positive",
                    p.epsilon
                )));
            }
        }
        if let Some(e) = &self.experiment {
            if !(e.mu0 > 0.0 && e.mu0 < 1.0) {
                return Err(PhonoxError::Config(format!(
                    "experiment mu0 = {} must lie in (0, 1)",
                    e.mu0
                )));
            }
            for w in e.omega0_values()? {
                if !(w > 0.0 && w < m.omega_max) {
                    return Err(PhonoxError::Config(format!(
                        "carrier frequency {w} must lie in (0, omega_max)"
                    )));
                }
            }
            let eps = e.epsilons.resolve()?;
            for pair in eps.windows(2) {
                if !(pair[1] > 0.0 && pair[1] < pair[0]) {
                    return Err(PhonoxError::Config(format!(
                        "pulse widths must decrease strictly, got {} then {}",
                        pair[0], pair[1]
                    )));
                }
            }
            if let Some(level) = e.noise_level {
                if !(level >= 0.0) || !level.is_finite() {
                    return Err(PhonoxError::Config(format!(
                        "noise level {level} must be nonnegative"
                    )));
                }
            }
        }
        self.datum_kind()?;
        Ok(())
    }

    /// Plain background quadratures from the configured node counts.
    pub fn base_grids(&self) -> Result<(AngularQuadrature, SpectralGrid)> {
        let q = AngularQuadrature::gauss(self.material.n_mu)?;
        let grid = SpectralGrid::gauss(self.material.omega_max, self.material.n_omega)?;
        Ok((q, grid))
    }

    /// Panel-graded quadratures resolving the experiment's pulses and
    /// measurement windows around `mu0` and every carrier frequency.
    pub fn experiment_grids(&self) -> Result<(AngularQuadrature, SpectralGrid)> {
        let e = self.experiment.as_ref().ok_or_else(|| {
            PhonoxError::Config("this command needs an experiment block".into())
        })?;
        let eps = e.epsilons.resolve()?;
        let (eps_max, eps_min) = (eps[0], eps[eps.len() - 1]);
        let m = &self.material;

        let half = m.n_mu / 2;
        let strip_hi = (e.mu0 + 1.2 * eps_max).min(1.0);
        let mut mu_panels = vec![Panel::new(0.0, e.mu0, half.max(4))];
        mu_panels.extend(graded_panels(e.mu0, strip_hi, eps_min / 24.0, 1.4, 4));
        if strip_hi < 1.0 {
            mu_panels.push(Panel::new(strip_hi, 1.0, (half / 2).max(3)));
        }
        let q = AngularQuadrature::from_half_panels(&mu_panels)?;

        let mut omegas = e.omega0_values()?;
        omegas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let lead = (m.n_omega / 5).max(4);
        let backdrop = (m.n_omega / 8).max(3);
        let omega_lo = 0.0125 * m.omega_max;
        let mut panels = Vec::new();
        let mut cursor = omega_lo;
        for w in omegas {
            if w > cursor + 1e-9 {
                let n = if panels.is_empty() { lead } else { backdrop };
                panels.push(Panel::new(cursor, w, n));
                cursor = w;
            }
            let hi = (w.max(cursor) + 1.2 * eps_max).min(m.omega_max);
            if hi > cursor + 1e-9 {
                panels.extend(graded_panels(cursor, hi, eps_min / 20.0, 1.5, 4));
                cursor = hi;
            }
        }
        if cursor < m.omega_max - 1e-9 {
            panels.push(Panel::new(cursor, m.omega_max, backdrop.max(4)));
        }
        let grid = SpectralGrid::from_panels(m.omega_max, &panels)?;
        Ok((q, grid))
    }

    pub fn datum_kind(&self) -> Result<DatumKind> {
        let text = self.datum.as_deref().unwrap_or("probe");
        if text == "zero" {
            Ok(DatumKind::Zero)
        } else if text == "probe" {
            Ok(DatumKind::Probe)
        } else if let Some(rest) = text.strip_prefix("equilibrium:") {
            let amplitude = rest.trim().parse::<f64>().map_err(|e| {
                PhonoxError::Config(format!("bad equilibrium amplitude {rest:?}: {e}"))
            })?;
            if !(amplitude > 0.0) || !amplitude.is_finite() {
                return Err(PhonoxError::Config(format!(
                    "equilibrium amplitude {amplitude} must be positive"
                )));
            }
            Ok(DatumKind::Equilibrium(amplitude))
        } else {
            Err(PhonoxError::Config(format!(
                "unknown datum {text:?}; use \"zero\", \"equilibrium:<amplitude>\", or \"probe\""
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> String {
        r#"{
            "material": {
                "omega_max": 4.0, "n_omega": 12, "n_mu": 8,
                "tau": "const:5.0", "v": "const:1.0",
                "xi": "bose_einstein:{\"T_eq\":1.0,\"hbar_over_k0\":1.0}",
                "p0": 1.2
            },
            "coefficients": { "eta1": "const:0.6", "gamma0": 1.0 },
            "grid": { "nx_left": 40, "nx_right": 120, "L": 4.0,
                      "dt": 0.002, "T_end": 1.0 }
        }"#
        .to_string()
    }

    #[test]
    fn a_minimal_document_parses_and_builds() {
        let config = RunConfig::from_json_str(&minimal_json()).unwrap();
        let (q, og) = config.base_grids().unwrap();
        assert_eq!(q.half_nodes().len(), 4);
        assert_eq!(og.len(), 12);
        let m = config.material.build(og, true).unwrap();
        assert_eq!(m.tau()[0], 5.0);
        assert!(m.normalization_residual().abs() < 1e-12);
        let coeffs = config.coefficients.build(&m, &q, true).unwrap();
        assert!((coeffs.eta1()[0] - 0.6).abs() < 1e-15);
        assert!((coeffs.zeta1()[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn the_bose_einstein_rule_matches_the_constant_builder() {
        let config = RunConfig::from_json_str(&minimal_json()).unwrap();
        let (_, og) = config.base_grids().unwrap();
        let built = config.material.build(og.clone(), true).unwrap();
        let reference = MaterialModel::constant(og, 5.0, 1.0, 1.0, 1.0, 1.2).unwrap();
        for (a, b) in built.xi().iter().zip(reference.xi()) {
            assert!((a - b).abs() <= 1e-15 * b.abs());
        }
    }

    #[test]
    fn literal_tables_must_match_the_node_count() {
        let mut config = RunConfig::from_json_str(&minimal_json()).unwrap();
        config.material.tau = TableSpec::Table(vec![1.0; 5]);
        let (_, og) = config.base_grids().unwrap();
        let err = config.material.build(og, true).err().unwrap();
        assert!(matches!(err, PhonoxError::Config(_)));
    }

    #[test]
    fn literal_tables_are_refused_on_panel_grids() {
        let spec = TableSpec::Table(vec![1.0; 4]);
        let err = spec.resolve(4, false, "tau").err().unwrap();
        match err {
            PhonoxError::Config(msg) => assert!(msg.contains("rule form"), "{msg}"),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn the_tanh_profile_is_monotone_between_its_plateaus() {
        let config = RunConfig::from_json_str(&minimal_json()).unwrap();
        let (_, og) = config.base_grids().unwrap();
        let coeffs = CoefficientsConfig {
            eta1: TableSpec::Rule(
                "tanh_profile:{\"center\":2.0,\"width\":0.5,\"low\":0.3,\"high\":0.8}".into(),
            ),
            gamma0: 1.0,
        };
        let table = coeffs.eta1_table(&og, true).unwrap();
        for pair in table.windows(2) {
            assert!(pair[1] >= pair[0], "profile must rise with frequency");
        }
        assert!(table.iter().all(|&v| (0.3..=0.8).contains(&v)));
    }

    #[test]
    fn geometric_width_schedules_expand_to_decreasing_lists() {
        let spec = EpsilonSpec::Geometric {
            eps_max: 0.2,
            count: 4,
            ratio: 0.7,
        };
        let eps = spec.resolve().unwrap();
        assert_eq!(eps.len(), 4);
        assert!((eps[0] - 0.2).abs() < 1e-15);
        assert!((eps[3] - 0.2 * 0.7f64.powi(3)).abs() < 1e-15);
        for pair in eps.windows(2) {
            assert!(pair[1] < pair[0]);
        }
    }

    #[test]
    fn experiment_grids_resolve_the_window_strip() {
        let mut config = RunConfig::from_json_str(&minimal_json()).unwrap();
        config.experiment = Some(ExperimentConfig {
            mu0: 0.8,
            omega0: Some(2.0),
            omega0_list: None,
            epsilons: EpsilonSpec::Geometric {
                eps_max: 0.069,
                count: 3,
                ratio: 0.7,
            },
            fit: FitConfig::default(),
            solver: SolverConfig::default(),
            eta1_true: None,
            noise_level: None,
        });
        let (q, og) = config.experiment_grids().unwrap();
        let eps_min = 0.069 * 0.7f64.powi(2);
        assert!(q.max_gap_within(0.8, 0.8 + eps_min) <= eps_min / 4.0);
        assert!(og.max_gap_within(2.0, 2.0 + eps_min) <= eps_min / 4.0);
    }

    #[test]
    fn swept_experiments_grade_every_carrier() {
        let mut config = RunConfig::from_json_str(&minimal_json()).unwrap();
        config.experiment = Some(ExperimentConfig {
            mu0: 0.5,
            omega0: None,
            omega0_list: Some(vec![2.6, 1.2, 2.0]),
            epsilons: EpsilonSpec::List(vec![0.1, 0.07]),
            fit: FitConfig::default(),
            solver: SolverConfig::default(),
            eta1_true: None,
            noise_level: None,
        });
        let (_, og) = config.experiment_grids().unwrap();
        for w in [1.2, 2.0, 2.6] {
            assert!(og.max_gap_within(w, w + 0.07) <= 0.07 / 4.0, "carrier {w}");
        }
    }

    #[test]
    fn datum_selectors_parse_and_reject() {
        let mut config = RunConfig::from_json_str(&minimal_json()).unwrap();
        assert_eq!(config.datum_kind().unwrap(), DatumKind::Probe);
        config.datum = Some("zero".into());
        assert_eq!(config.datum_kind().unwrap(), DatumKind::Zero);
        config.datum = Some("equilibrium:0.7".into());
        assert_eq!(config.datum_kind().unwrap(), DatumKind::Equilibrium(0.7));
        config.datum = Some("equilibrium:-1".into());
        assert!(config.datum_kind().is_err());
        config.datum = Some("ramp".into());
        assert!(config.datum_kind().is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = minimal_json().replace("\"p0\": 1.2", "\"p0\": 1.2, \"px\": 3");
        assert!(RunConfig::from_json_str(&text).is_err());
    }

    #[test]
    fn out_of_range_parameters_are_rejected() {
        for (from, to) in [
            ("\"n_mu\": 8", "\"n_mu\": 7"),
            ("\"p0\": 1.2", "\"p0\": 1.7"),
            ("\"L\": 4.0", "\"L\": 0.9"),
            ("\"dt\": 0.002", "\"dt\": -0.002"),
        ] {
            let text = minimal_json().replace(from, to);
            let err = RunConfig::from_json_str(&text).err().unwrap();
            assert!(
                matches!(err, PhonoxError::Config(_)),
                "{from} -> {to} should be a config error, got {err:?}"
            );
        }
    }

    #[test]
    fn the_echoed_document_round_trips_identically() {
        let config = RunConfig::from_json_str(&minimal_json()).unwrap();
        let echo = serde_json::to_string_pretty(&config).unwrap();
        let again = RunConfig::from_json_str(&echo).unwrap();
        let echo2 = serde_json::to_string_pretty(&again).unwrap();
        assert_eq!(echo, echo2);
    }
}
