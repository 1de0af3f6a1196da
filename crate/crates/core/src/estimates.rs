//! A priori bound checks for transport runs.
//!
//! The forward model obeys three families of estimates that double as
//! regression oracles for the stepper. First, a mass budget: the combined
//! `L1` content of both layers at any time never exceeds what the boundary
//! has supplied, measured either by the accumulated incoming flux
//! `int_0^t sum w mu v |phi|` or by the accumulated plain norm
//! `int_0^t sum w |phi|`; the checker holds the state against whichever
//! accumulated bound is tighter. Second, a maximum principle: a datum
//! trapped between zero and `m0 xi` keeps the left layer below `m0 xi`,
//! the right layer below `gamma0 m0 xi`, and every value nonnegative.
//! Third, a weighted energy inequality: the `Lp` norm of the pair with
//! weight `xi^(1-p)` on the left layer and `(gamma0 xi)^(1-p)` on the
//! right is bounded by `(1+gamma0)^(1/p)` times the `Lp(0,t)` norm of the
//! datum in the incoming weight.
//!
//! Every check reports a [`CheckOutcome`] carrying the measured quantity,
//! the bound it must respect, the relative headroom, and a verdict under
//! the shared [`Tolerances`]. Requirements that read "at least" are
//! entered with their signs flipped so a single invariant covers all rows:
//! a check passes exactly when `measured <= bound` up to its slack.
//!
//! [`assumption_audit`] confirms that a material, probe, and domain sit
//! inside the admissible regime before a reconstruction is attempted:
//! group velocities strictly positive and capped at the unit transport
//! speed, a finite integrability weight, a positive relaxation floor, and
//! a right layer wide enough to absorb the transmitted pulse until the
//! measurement window has closed.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analytic::ProbeSpec;
use crate::error::PhonoxError;
use crate::material::MaterialModel;
use crate::quadrature::AngularQuadrature;
use crate::solver::{BoundaryData, RunArtifacts, SpatialGrid};
use crate::Result;

/// Shared slacks for every estimate check.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative slack for time-integrated quantities.
    pub integral_rel: f64,
    /// Relative slack for pointwise caps.
    pub pointwise_rel: f64,
    /// Absolute slack below zero for signed minima.
    pub lower_abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            integral_rel: 1e-3,
            pointwise_rel: 1e-6,
            lower_abs: 1e-12,
        }
    }
}

/// One verified inequality: `measured <= bound` up to the recorded slack.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub bound: f64,
    pub measured: f64,
    /// Relative headroom `(bound - measured) / |bound|`; positive means
    /// the state sits strictly inside the estimate.
    pub margin: f64,
    pub pass: bool,
}

impl CheckOutcome {
    /// Evaluate `measured <= bound` with a relative and an absolute slack.
    pub fn evaluate(name: &str, measured: f64, bound: f64, rel_slack: f64, abs_slack: f64) -> Self {
        let slack = abs_slack + rel_slack * bound.abs();
        let pass = measured.is_finite() && bound.is_finite() && measured <= bound + slack;
        let scale = if bound.abs() > 0.0 { bound.abs() } else { 1.0 };
        CheckOutcome {
            name: name.into(),
            bound,
            measured,
            margin: (bound - measured) / scale,
            pass,
        }
    }
}

/// A bundle of check outcomes plus free-form run metadata.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EstimateReport {
    pub checks: Vec<CheckOutcome>,
    pub metadata: BTreeMap<String, String>,
}

impl EstimateReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, check: CheckOutcome) {
        self.checks.push(check);
    }

    pub fn extend(&mut self, checks: impl IntoIterator<Item = CheckOutcome>) {
        self.checks.extend(checks);
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Fixed-width table for terminal output, one row per check.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<28} {:>14} {:>14} {:>10}  verdict",
            "check", "measured", "bound", "margin"
        );
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{:<28} {:>14.6e} {:>14.6e} {:>10.2e}  {}",
                c.name,
                c.measured,
                c.bound,
                c.margin,
                if c.pass { "PASS" } else { "FAIL" }
            );
        }
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "  {k}: {v}");
        }
        out
    }
}

fn require_norms(art: &RunArtifacts) -> Result<()> {
    if art.norms.is_empty() {
        return Err(PhonoxError::Config(
            "the run recorded no norm samples; enable norms_every before checking budgets".into(),
        ));
    }
    Ok(())
}

/// Hold the recorded `L1` state against the tighter of the two boundary
/// budgets, over the samples at or after `settle_time`.
///
/// The discrete state slightly oversamples a steep datum while it is still
/// entering the domain, so callers that inject a concentrated pulse pass
/// the end of the entry interval as `settle_time`; zero keeps every sample
/// in the verdict. The reported outcome is the worst surviving sample.
pub fn l1_budget(art: &RunArtifacts, settle_time: f64, tol: &Tolerances) -> Result<CheckOutcome> {
    require_norms(art)?;
    let mut worst: Option<(f64, f64, f64)> = None;
    for s in art.norms.iter().filter(|s| s.t >= settle_time - 1e-12) {
        let tighter = s.l1_bound_flux.min(s.l1_bound_norm);
        let scale = if tighter > 0.0 { tighter } else { 1.0 };
        let excess = (s.l1_state - tighter) / scale;
        if worst.map_or(true, |(e, _, _)| excess > e) {
            worst = Some((excess, s.l1_state, tighter));
        }
    }
    let (_, state, bound) = worst.ok_or_else(|| {
        PhonoxError::Config(format!(
            "no norm samples at or after the settle time {settle_time}"
        ))
    })?;
    Ok(CheckOutcome::evaluate(
        "l1-budget",
        state,
        bound,
        tol.integral_rel,
        0.0,
    ))
}

/// Time series `(t, l1 state, tighter budget)` for margin diagnostics.
pub fn l1_margin_series(art: &RunArtifacts) -> Vec<(f64, f64, f64)> {
    art.norms
        .iter()
        .map(|s| (s.t, s.l1_state, s.l1_bound_flux.min(s.l1_bound_norm)))
        .collect()
}

/// Check the tracked extrema of a run against the equilibrium caps: no
/// value below zero, the left layer at most `m0 xi`, the right layer at
/// most `gamma0 m0 xi`.
pub fn maximum_principle(
    art: &RunArtifacts,
    m0: f64,
    gamma0: f64,
    tol: &Tolerances,
) -> Result<Vec<CheckOutcome>> {
    if !(m0 > 0.0) || !m0.is_finite() {
        return Err(PhonoxError::Config(format!(
            "equilibrium amplitude m0 = {m0} must be positive and finite"
        )));
    }
    if !(gamma0 > 0.0) || !gamma0.is_finite() {
        return Err(PhonoxError::Config(format!(
            "equilibrium ratio gamma0 = {gamma0} must be positive and finite"
        )));
    }
    let ext = art.extrema.ok_or_else(|| {
        PhonoxError::Config(
            "the run tracked no extrema; enable track_extrema before checking the cap".into(),
        )
    })?;
    // The lower requirement `min >= -lower_abs` enters negated.
    Ok(vec![
        CheckOutcome::evaluate(
            "no-negative-values",
            -ext.min_value,
            0.0,
            0.0,
            tol.lower_abs,
        ),
        CheckOutcome::evaluate(
            "left-layer-cap",
            ext.max_f_over_xi,
            m0,
            tol.pointwise_rel,
            0.0,
        ),
        CheckOutcome::evaluate(
            "right-layer-cap",
            ext.max_g_over_xi,
            gamma0 * m0,
            tol.pointwise_rel,
            0.0,
        ),
    ])
}

/// Scan a boundary datum over the run's time steps and ordinates and
/// reject it unless `0 <= phi <= m0 xi` everywhere; the maximum principle
/// presumes exactly this trapping, so a violation is an input error.
pub fn verify_datum_cap(
    phi: &BoundaryData,
    m: &MaterialModel,
    q: &AngularQuadrature,
    m0: f64,
    dt: f64,
    t_end: f64,
    tol: &Tolerances,
) -> Result<()> {
    if !(m0 > 0.0) || !m0.is_finite() {
        return Err(PhonoxError::Config(format!(
            "equilibrium amplitude m0 = {m0} must be positive and finite"
        )));
    }
    let n_steps = (t_end / dt).ceil() as usize;
    for n in 0..n_steps {
        let t = (n as f64 + 0.5) * dt;
        for &mu in q.half_nodes() {
            for (j, &omega) in m.grid().nodes().iter().enumerate() {
                let val = phi.eval(t, mu, omega, m);
                if val < -tol.lower_abs {
                    return Err(PhonoxError::Config(format!(
                        "boundary datum dips negative: phi({t}, {mu}, {omega}) = {val}"
                    )));
                }
                let cap = m0 * m.xi()[j];
                if val > cap * (1.0 + tol.pointwise_rel) {
                    return Err(PhonoxError::Config(format!(
                        "boundary datum exceeds the equilibrium cap: \
                         phi({t}, {mu}, {omega}) = {val} > m0 xi = {cap}"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Hold the recorded weighted `Lp` norm against
/// `(1+gamma0)^(1/p)` times the accumulated datum norm, over the samples
/// at or after `settle_time`. The reported outcome is the worst sample.
pub fn lp_bound(
    art: &RunArtifacts,
    gamma0: f64,
    p: f64,
    settle_time: f64,
    tol: &Tolerances,
) -> Result<CheckOutcome> {
    require_norms(art)?;
    if !(p >= 1.0) || !p.is_finite() {
        return Err(PhonoxError::Config(format!(
            "norm exponent p = {p} must be at least 1"
        )));
    }
    if !(gamma0 > 0.0) || !gamma0.is_finite() {
        return Err(PhonoxError::Config(format!(
            "equilibrium ratio gamma0 = {gamma0} must be positive and finite"
        )));
    }
    let factor = (1.0 + gamma0).powf(1.0 / p);
    let mut worst: Option<(f64, f64, f64)> = None;
    for s in art.norms.iter().filter(|s| s.t >= settle_time - 1e-12) {
        let bound = factor * s.lp_rhs_integral.powf(1.0 / p);
        let scale = if bound > 0.0 { bound } else { 1.0 };
        let excess = (s.lp_state - bound) / scale;
        if worst.map_or(true, |(e, _, _)| excess > e) {
            worst = Some((excess, s.lp_state, bound));
        }
    }
    let (_, state, bound) = worst.ok_or_else(|| {
        PhonoxError::Config(format!(
            "no norm samples at or after the settle time {settle_time}"
        ))
    })?;
    Ok(CheckOutcome::evaluate(
        &format!("weighted-l{p}-energy"),
        state,
        bound,
        tol.integral_rel,
        0.0,
    ))
}

/// Smallest admissible total domain length for a probe: the transmitted
/// pulse must stay clear of the far wall until the measurement window has
/// closed, which needs a right layer of width `v0 t1 / 2 + v0 / 2` past
/// the interface at `x = 1`.
pub fn minimal_right_extent(m: &MaterialModel, mu0: f64, omega0: f64) -> f64 {
    m.v0() / (mu0 * m.v_at(omega0)) + m.v0() / 2.0 + 1.0
}

/// Confirm that material, probe, and domain sit inside the admissible
/// regime. Requirements that read "strictly positive" are entered negated
/// with zero slack; strictness is enforced at construction time, so the
/// boundary case cannot arise from a validated material.
pub fn assumption_audit(
    m: &MaterialModel,
    probe: &ProbeSpec,
    grid: &SpatialGrid,
) -> Vec<CheckOutcome> {
    let min_v = m.v().iter().cloned().fold(f64::INFINITY, f64::min);
    vec![
        CheckOutcome::evaluate("dispersion-speed-positive", -min_v, 0.0, 0.0, 0.0),
        CheckOutcome::evaluate("dispersion-speed-cap", m.v0(), 1.0, 0.0, 0.0),
        CheckOutcome::evaluate(
            "integrability-weight-finite",
            m.integrability_functional(),
            f64::MAX,
            0.0,
            0.0,
        ),
        CheckOutcome::evaluate("relaxation-time-floor", -m.tau0(), 0.0, 0.0, 0.0),
        CheckOutcome::evaluate(
            "right-layer-width",
            minimal_right_extent(m, probe.mu0, probe.omega0),
            grid.length(),
            0.0,
            1e-12,
        ),
    ]
}
