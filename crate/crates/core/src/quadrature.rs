//! Angle and frequency quadratures.
//!
//! Transport in a slab couples every direction cosine `mu` in `[-1, 1]` and
//! every phonon frequency `omega` in `(0, omega_max]`. Both integrals are
//! replaced by Gauss-Legendre sums: a single rule when the integrand is
//! smooth everywhere, or a composite of panels when a narrow feature (a
//! concentrated boundary pulse) must be resolved around a known location.
//! Panels can be graded geometrically away from such a location so the node
//! density follows the width of the feature without exploding the total
//! count.
//!
//! The angular set is built from its positive half and mirrored, so the
//! ordinate `-mu` exists for every `mu` with a bitwise-equal weight. The
//! stepper relies on that exact pairing when it applies the reflection
//! conditions at the interface.

use crate::error::PhonoxError;
use crate::Result;
use serde::{Deserialize, Serialize};

/// Nodes and weights of an `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// in ascending node order.
///
/// Computed by Newton iteration on the Legendre recurrence; roots are found
/// for the positive half and mirrored so the rule is exactly symmetric.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "rule order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    // Roots come in +/- pairs; solve for the non-negative ones.
    let half = n / 2;
    for k in 0..(n + 1) / 2 {
        // Standard asymptotic initial guess for the (k+1)-th root from above.
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-15 {
                let (p2, d2) = legendre_with_derivative(n, x);
                dp = d2;
                x -= p2 / d2;
                break;
            }
        }
        // k counts down from the largest root; map onto ascending order.
        let x = if n % 2 == 1 && k == half { 0.0 } else { x };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - k] = x;
        weights[n - 1 - k] = w;
        nodes[k] = -x;
        weights[k] = w;
    }
    (nodes, weights)
}

/// Legendre polynomial `P_n(x)` and its derivative via the three-term
/// recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let jf = j as f64;
        let p_next = ((2.0 * jf - 1.0) * x * p - (jf - 1.0) * p_prev) / jf;
        p_prev = p;
        p = p_next;
    }
    let d = n as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, d)
}

/// One sub-interval of a composite rule with its Gauss order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Panel {
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        Panel { lo, hi, n }
    }
}

/// Geometrically graded panels covering `[lo, hi]`: the first panel has
/// width `first_width`, each subsequent one grows by `growth`, and every
/// panel carries `per` Gauss points. The last panel is clipped at `hi`.
pub fn graded_panels(lo: f64, hi: f64, first_width: f64, growth: f64, per: usize) -> Vec<Panel> {
    assert!(hi > lo && first_width > 0.0 && growth >= 1.0 && per >= 1);
    let mut panels = Vec::new();
    let mut a = lo;
    let mut w = first_width;
    while a < hi - 1e-12 {
        let b = (a + w).min(hi);
        panels.push(Panel::new(a, b, per));
        a = b;
        w *= growth;
    }
    panels
}

/// Evaluate a composite Gauss rule over contiguous panels.
fn composite_rule(panels: &[Panel]) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for p in panels {
        let (x, w) = gauss_legendre(p.n);
        let mid = 0.5 * (p.lo + p.hi);
        let half = 0.5 * (p.hi - p.lo);
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push(mid + half * xi);
            weights.push(half * wi);
        }
    }
    (nodes, weights)
}

fn check_contiguous(panels: &[Panel], lo: f64, hi: f64, what: &str) -> Result<()> {
    if panels.is_empty() {
        return Err(PhonoxError::Config(format!("{what}: no panels given")));
    }
    let mut prev = lo;
    for p in panels {
        if (p.lo - prev).abs() > 1e-12 || p.hi <= p.lo || p.n == 0 {
            return Err(PhonoxError::Config(format!(
                "{what}: panels must tile [{lo}, {hi}] contiguously with positive width and order"
            )));
        }
        prev = p.hi;
    }
    if (prev - hi).abs() > 1e-12 {
        return Err(PhonoxError::Config(format!(
            "{what}: panels end at {prev}, expected {hi}"
        )));
    }
    Ok(())
}

/// Symmetric direction-cosine quadrature on `[-1, 1]` with no node at 0.
///
/// Stored through its positive half; the full node list is the mirror image
/// followed by the half itself, so `node[i] == -node[len-1-i]` bitwise and
/// the weights sum to 2.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AngularQuadrature {
    half_nodes: Vec<f64>,
    half_weights: Vec<f64>,
}

impl AngularQuadrature {
    /// Plain Gauss-Legendre rule with `n` ordinates (`n` even so no node
    /// lands on `mu = 0`).
    pub fn gauss(n: usize) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(PhonoxError::Config(format!(
                "angular quadrature needs an even ordinate count >= 2, got {n}"
            )));
        }
        let (nodes, weights) = gauss_legendre(n);
        let half_nodes = nodes[n / 2..].to_vec();
        let half_weights = weights[n / 2..].to_vec();
        Ok(AngularQuadrature {
            half_nodes,
            half_weights,
        })
    }

    /// Composite rule built from panels tiling `(0, 1)`, mirrored onto
    /// `(-1, 0)`. Used when a pulse concentrates around a known `mu0`.
    pub fn from_half_panels(panels: &[Panel]) -> Result<Self> {
        check_contiguous(panels, 0.0, 1.0, "angular half panels")?;
        let (half_nodes, half_weights) = composite_rule(panels);
        Ok(AngularQuadrature {
            half_nodes,
            half_weights,
        })
    }

    /// Positive ordinates in ascending order.
    pub fn half_nodes(&self) -> &[f64] {
        &self.half_nodes
    }

    /// Weights attached to the positive ordinates (each mirrored weight is
    /// identical).
    pub fn half_weights(&self) -> &[f64] {
        &self.half_weights
    }

    /// Number of ordinates counting both signs.
    pub fn len(&self) -> usize {
        2 * self.half_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.half_nodes.is_empty()
    }

    /// Full ascending node list `(-mu_k, ..., -mu_1, mu_1, ..., mu_k)`.
    pub fn nodes(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.half_nodes.iter().rev().map(|m| -m).collect();
        all.extend_from_slice(&self.half_nodes);
        all
    }

    /// Weights matching [`AngularQuadrature::nodes`].
    pub fn weights(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.half_weights.iter().rev().copied().collect();
        all.extend_from_slice(&self.half_weights);
        all
    }

    /// Sum of all weights (should be 2 up to rounding).
    pub fn total_weight(&self) -> f64 {
        2.0 * self.half_weights.iter().sum::<f64>()
    }

    /// Largest gap between consecutive positive nodes, with the interval
    /// `[lo, hi]` clipped to `(0, 1)`; the interval endpoints count as gap
    /// boundaries. Drives the pulse-resolution guard.
    pub fn max_gap_within(&self, lo: f64, hi: f64) -> f64 {
        max_gap(&self.half_nodes, lo.max(0.0), hi.min(1.0))
    }
}

/// Frequency quadrature on `(0, omega_max]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralGrid {
    omega_max: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl SpectralGrid {
    /// Single Gauss-Legendre panel over `(0, omega_max)`.
    pub fn gauss(omega_max: f64, n: usize) -> Result<Self> {
        if !(omega_max > 0.0) || n == 0 {
            return Err(PhonoxError::Config(format!(
                "spectral grid needs omega_max > 0 and n >= 1, got omega_max={omega_max}, n={n}"
            )));
        }
        Self::from_panels(omega_max, &[Panel::new(0.0, omega_max, n)])
    }

    /// Composite rule from contiguous panels ending at `omega_max`; the
    /// first panel may start above zero when the low-frequency tail carries
    /// no weight.
    pub fn from_panels(omega_max: f64, panels: &[Panel]) -> Result<Self> {
        let start = panels.first().map(|p| p.lo).unwrap_or(0.0);
        if start < 0.0 {
            return Err(PhonoxError::Config(
                "spectral panels must start at a nonnegative frequency".into(),
            ));
        }
        check_contiguous(panels, start, omega_max, "spectral panels")?;
        let (nodes, weights) = composite_rule(panels);
        Ok(SpectralGrid {
            omega_max,
            nodes,
            weights,
        })
    }

    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Largest node gap inside `[lo, hi]` clipped to the grid range; see
    /// [`AngularQuadrature::max_gap_within`].
    pub fn max_gap_within(&self, lo: f64, hi: f64) -> f64 {
        max_gap(&self.nodes, lo.max(0.0), hi.min(self.omega_max))
    }

    /// Index of the node closest to `omega`.
    pub fn nearest_node(&self, omega: f64) -> usize {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (i, w) in self.nodes.iter().enumerate() {
            let d = (w - omega).abs();
            if d < dist {
                dist = d;
                best = i;
            }
        }
        best
    }
}

fn max_gap(sorted_nodes: &[f64], lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let mut prev = lo;
    let mut gap: f64 = 0.0;
    for &x in sorted_nodes.iter().filter(|&&x| x >= lo && x <= hi) {
        gap = gap.max(x - prev);
        prev = x;
    }
    gap.max(hi - prev)
}
