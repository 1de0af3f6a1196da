//! Material dispersion and relaxation tables.
//!
//! A material is described per frequency node by the relaxation time
//! `tau(omega)`, the group velocity `v(omega)` with its derivative, and the
//! equilibrium weight `xi(omega)` toward which the collision operator
//! relaxes. The weight derives from the linearized Bose-Einstein
//! distribution and is rescaled so the discrete normalization
//! `sum_omega w_omega xi/tau = 1` holds exactly; that normalization is what
//! makes `(xi, gamma0 xi)` an equilibrium of the coupled two-layer system
//! and it anchors most conservation tests downstream.
//!
//! The structural assumptions carried by the model are: bounded positive
//! group velocity with a finite supremum `v0`, relaxation time bounded away
//! from zero by `tau0`, and an integrability exponent `p0` in `(1, 3/2)`
//! that the reconstruction uses when it pins the extrapolation rate.

use crate::error::PhonoxError;
use crate::quadrature::SpectralGrid;
use crate::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Frequency-resolved material description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaterialModel {
    grid: SpectralGrid,
    tau: Vec<f64>,
    v: Vec<f64>,
    v_prime: Vec<f64>,
    xi: Vec<f64>,
    /// Supremum of the group velocity over the grid.
    v0: f64,
    /// Infimum of the relaxation time over the grid.
    tau0: f64,
    /// Integrability exponent in `(1, 3/2)`.
    p0: f64,
}

/// Linearized Bose-Einstein occupation `M_eq(omega) = omega / (e^x - 1)`
/// with `x = hbar*omega/(k0*T_eq)`, continuous at `omega = 0` where it
/// tends to `k0*T_eq/hbar`.
pub fn bose_einstein_m_eq(omega: f64, t_eq: f64, hbar_over_k0: f64) -> f64 {
    let x = hbar_over_k0 * omega / t_eq;
    if x.abs() < 1e-12 {
        t_eq / hbar_over_k0
    } else {
        omega / x.exp_m1()
    }
}

/// Unnormalized equilibrium weight `M_eq^2 e^x`; the overall physical
/// constant is irrelevant because the table is rescaled afterwards.
fn xi_unnormalized(omega: f64, t_eq: f64, hbar_over_k0: f64) -> f64 {
    let x = hbar_over_k0 * omega / t_eq;
    let m = bose_einstein_m_eq(omega, t_eq, hbar_over_k0);
    m * m * x.exp()
}

/// Equilibrium weight table from the Bose-Einstein form, rescaled so
/// `sum w xi/tau = 1` exactly on the given grid.
pub fn build_xi_from_bose_einstein(
    t_eq: f64,
    hbar_over_k0: f64,
    grid: &SpectralGrid,
    tau: &[f64],
) -> Result<Vec<f64>> {
    if !(t_eq > 0.0) || !(hbar_over_k0 > 0.0) {
        return Err(PhonoxError::Config(
            "equilibrium temperature and hbar/k0 must be positive".into(),
        ));
    }
    if tau.len() != grid.len() {
        return Err(PhonoxError::Material(format!(
            "tau table has {} entries for a grid of {} nodes",
            tau.len(),
            grid.len()
        )));
    }
    if tau.iter().any(|&t| !(t > 0.0)) {
        return Err(PhonoxError::Material(
            "relaxation time must be positive on every node".into(),
        ));
    }
    let raw: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&w| xi_unnormalized(w, t_eq, hbar_over_k0))
        .collect();
    normalize_xi(grid, tau, raw)
}

/// Rescale an arbitrary nonnegative weight table so the discrete
/// normalization `sum w xi/tau = 1` holds.
pub fn normalize_xi(grid: &SpectralGrid, tau: &[f64], mut xi: Vec<f64>) -> Result<Vec<f64>> {
    let scale: f64 = grid
        .weights()
        .iter()
        .zip(&xi)
        .zip(tau)
        .map(|((w, x), t)| w * x / t)
        .sum();
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(PhonoxError::Material(format!(
            "equilibrium weight normalization is degenerate (sum w xi/tau = {scale}); \
             the frequency window may miss the support of the weight"
        )));
    }
    for x in &mut xi {
        *x /= scale;
    }
    Ok(xi)
}

impl MaterialModel {
    /// Assemble a model from explicit tables. `v_prime` may be omitted, in
    /// which case it is filled by centered finite differences on the grid.
    /// The weight table is rescaled to the exact discrete normalization.
    pub fn new(
        grid: SpectralGrid,
        tau: Vec<f64>,
        v: Vec<f64>,
        v_prime: Option<Vec<f64>>,
        xi: Vec<f64>,
        p0: f64,
    ) -> Result<Self> {
        let n = grid.len();
        for (name, len) in [("tau", tau.len()), ("v", v.len()), ("xi", xi.len())] {
            if len != n {
                return Err(PhonoxError::Material(format!(
                    "{name} table has {len} entries for a grid of {n} nodes"
                )));
            }
        }
        if let Some(vp) = &v_prime {
            if vp.len() != n {
                return Err(PhonoxError::Material(format!(
                    "v_prime table has {} entries for a grid of {n} nodes",
                    vp.len()
                )));
            }
        }
        if tau.iter().any(|&t| !(t > 0.0)) {
            return Err(PhonoxError::Material(
                "relaxation time must be positive on every node".into(),
            ));
        }
        let xi = normalize_xi(&grid, &tau, xi)?;
        let v_prime = v_prime.unwrap_or_else(|| centered_differences(grid.nodes(), &v));
        let v0 = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let tau0 = tau.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(MaterialModel {
            grid,
            tau,
            v,
            v_prime,
            xi,
            v0,
            tau0,
            p0,
        })
    }

    /// Constant-coefficient model with the Bose-Einstein weight; the common
    /// quick start for tests and desk-scale runs.
    pub fn constant(
        grid: SpectralGrid,
        tau: f64,
        v: f64,
        t_eq: f64,
        hbar_over_k0: f64,
        p0: f64,
    ) -> Result<Self> {
        let n = grid.len();
        let tau_table = vec![tau; n];
        let xi = build_xi_from_bose_einstein(t_eq, hbar_over_k0, &grid, &tau_table)?;
        MaterialModel::new(grid, tau_table, vec![v; n], Some(vec![0.0; n]), xi, p0)
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn v_prime(&self) -> &[f64] {
        &self.v_prime
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }

    pub fn tau0(&self) -> f64 {
        self.tau0
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    /// Linear interpolation of a table at an off-node frequency, with
    /// constant extension outside the node range.
    fn interp(&self, table: &[f64], omega: f64) -> f64 {
        let nodes = self.grid.nodes();
        if omega <= nodes[0] {
            return table[0];
        }
        if omega >= nodes[nodes.len() - 1] {
            return table[table.len() - 1];
        }
        let j = nodes.partition_point(|&x| x < omega);
        let (a, b) = (nodes[j - 1], nodes[j]);
        let s = (omega - a) / (b - a);
        table[j - 1] * (1.0 - s) + table[j] * s
    }

    pub fn v_at(&self, omega: f64) -> f64 {
        self.interp(&self.v, omega)
    }

    pub fn tau_at(&self, omega: f64) -> f64 {
        self.interp(&self.tau, omega)
    }

    pub fn v_prime_at(&self, omega: f64) -> f64 {
        self.interp(&self.v_prime, omega)
    }

    pub fn xi_at(&self, omega: f64) -> f64 {
        self.interp(&self.xi, omega)
    }

    /// Discrete normalization residual `sum w xi/tau - 1`.
    pub fn normalization_residual(&self) -> f64 {
        let s: f64 = self
            .grid
            .weights()
            .iter()
            .zip(&self.xi)
            .zip(&self.tau)
            .map(|((w, x), t)| w * x / t)
            .sum();
        s - 1.0
    }

    /// Weighted power sum `sum w xi^q`; finite values witness the discrete
    /// integrability of the equilibrium weight.
    pub fn xi_power_sum(&self, q: f64) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(&self.xi)
            .map(|(w, x)| w * x.powf(q))
            .sum()
    }

    /// Discrete form of the integrability functional
    /// `sum w xi / (tau v^{1/p0})` used by the rate diagnostics.
    pub fn integrability_functional(&self) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(&self.xi)
            .zip(self.tau.iter().zip(&self.v))
            .map(|((w, x), (t, v))| w * x / (t * v.powf(1.0 / self.p0)))
            .sum()
    }

    /// Hex digest of the full table content; identical inputs hash
    /// identically, which the run metadata uses to fingerprint a material.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        let mut feed = |xs: &[f64]| {
            for x in xs {
                h.update(x.to_le_bytes());
            }
        };
        feed(self.grid.nodes());
        feed(self.grid.weights());
        feed(&[self.grid.omega_max()]);
        feed(&self.tau);
        feed(&self.v);
        feed(&self.v_prime);
        feed(&self.xi);
        feed(&[self.v0, self.tau0, self.p0]);
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Run the structural checks and collect a report.
    pub fn validate(&self) -> ValidationReport {
        let mut checks = Vec::new();
        // Bounded positive group velocity.
        let bad_v = self.v.iter().position(|&v| !(v > 0.0) || !v.is_finite());
        checks.push(CheckItem {
            name: "velocity bounded and positive".into(),
            pass: bad_v.is_none(),
            witness_node: bad_v,
            value: self.v0,
            detail: format!("v0 = {}", self.v0),
        });
        // Relaxation time bounded away from zero.
        let bad_tau = self.tau.iter().position(|&t| !(t > 0.0));
        checks.push(CheckItem {
            name: "relaxation time bounded below".into(),
            pass: bad_tau.is_none() && self.tau0 > 0.0,
            witness_node: bad_tau,
            value: self.tau0,
            detail: format!("tau0 = {}", self.tau0),
        });
        // Exact discrete normalization.
        let resid = self.normalization_residual();
        checks.push(CheckItem {
            name: "weight normalization".into(),
            pass: resid.abs() <= 1e-12,
            witness_node: None,
            value: resid,
            detail: format!("sum w xi/tau - 1 = {resid:e}"),
        });
        // Nonnegative weight with finite power sums.
        let bad_xi = self.xi.iter().position(|&x| x < 0.0 || !x.is_finite());
        let mut powers_ok = true;
        let mut power_detail = String::new();
        for q in [1.0, 2.0, 4.0] {
            let s = self.xi_power_sum(q);
            powers_ok &= s.is_finite();
            power_detail.push_str(&format!("q={q}: {s:.6e}; "));
        }
        checks.push(CheckItem {
            name: "weight nonnegative with finite power sums".into(),
            pass: bad_xi.is_none() && powers_ok,
            witness_node: bad_xi,
            value: self.xi_power_sum(1.0),
            detail: power_detail,
        });
        // Exponent range and integrability functional.
        let integ = self.integrability_functional();
        checks.push(CheckItem {
            name: "integrability exponent".into(),
            pass: self.p0 > 1.0 && self.p0 < 1.5 && integ.is_finite(),
            witness_node: None,
            value: integ,
            detail: format!("p0 = {}, sum w xi/(tau v^(1/p0)) = {integ:.6e}", self.p0),
        });
        ValidationReport { checks }
    }
}

/// Centered finite differences with one-sided stencils at the ends.
fn centered_differences(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 1 {
        return vec![0.0];
    }
    let mut d = vec![0.0; n];
    d[0] = (y[1] - y[0]) / (x[1] - x[0]);
    d[n - 1] = (y[n - 1] - y[n - 2]) / (x[n - 1] - x[n - 2]);
    for i in 1..n - 1 {
        d[i] = (y[i + 1] - y[i - 1]) / (x[i + 1] - x[i - 1]);
    }
    d
}

/// One named structural check with its witness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckItem {
    pub name: String,
    pub pass: bool,
    /// Frequency-node index that violates the check, when applicable.
    pub witness_node: Option<usize>,
    pub value: f64,
    pub detail: String,
}

/// Outcome of [`MaterialModel::validate`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckItem>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}
