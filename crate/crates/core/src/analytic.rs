//! Closed-form machinery for the singular-probe experiment.
//!
//! The probe injected at `x = 0` is a product of three scaled bumps
//! concentrated in time, direction, and frequency around `(0, mu0, omega0)`.
//! Its never-scattered (ballistic) part travels to the interface, reflects
//! with weight `eta1(omega)`, and returns to the surface attenuated by the
//! relaxation factor along the round trip; that return is available here in
//! closed form and anchors the solver oracle tests. The same module carries
//! the method-of-characteristics formulas that express boundary values as
//! ray integrals of a given relaxation drive, and the window constant `C`
//! that the measurement of the ballistic return converges to (divided by
//! `eta1`) as the concentration parameter shrinks.
//!
//! All bump evaluations return exact zeros outside their open supports, so
//! support arithmetic downstream is exact rather than approximate.

use crate::error::PhonoxError;
use crate::interface::InterfaceCoefficients;
use crate::material::MaterialModel;
use crate::quadrature::gauss_legendre;
use crate::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Shape family of a normalized bump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BumpKind {
    /// `exp(-1/(z(1-z)))` on `(0, 1)`.
    Mollifier,
    /// `exp(-1/(1-z^2))` on `(-1, 1)`.
    SymmetricMollifier,
    /// Flat top with smooth shoulders on `(0, 1)`; the sensitivity variant.
    SmoothedTopHat,
    /// Flat top with smooth shoulders on `(-1, 1)`.
    SymmetricSmoothedTopHat,
}

/// A smooth compactly supported bump with unit integral.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BumpFunction {
    kind: BumpKind,
    norm: f64,
}

fn raw_bump(kind: BumpKind, z: f64) -> f64 {
    match kind {
        BumpKind::Mollifier => {
            if z > 0.0 && z < 1.0 {
                (-1.0 / (z * (1.0 - z))).exp()
            } else {
                0.0
            }
        }
        BumpKind::SymmetricMollifier => {
            if z > -1.0 && z < 1.0 {
                (-1.0 / (1.0 - z * z)).exp()
            } else {
                0.0
            }
        }
        BumpKind::SmoothedTopHat => smoothed_top_hat(z, 0.25),
        BumpKind::SymmetricSmoothedTopHat => smoothed_top_hat(0.5 * (z + 1.0), 0.25),
    }
}

/// Smooth step `T(u)`: 0 for `u <= 0`, 1 for `u >= 1`, strictly increasing
/// and infinitely differentiable in between.
fn smooth_step(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / u).exp();
        let b = (-1.0 / (1.0 - u)).exp();
        a / (a + b)
    }
}

fn smoothed_top_hat(z: f64, shoulder: f64) -> f64 {
    if z <= 0.0 || z >= 1.0 {
        0.0
    } else {
        smooth_step(z / shoulder) * smooth_step((1.0 - z) / shoulder)
    }
}

impl BumpFunction {
    fn build(kind: BumpKind) -> Self {
        // Trapezoid on a C-infinity compactly supported function converges
        // spectrally, so a fixed fine grid reaches rounding level.
        let (lo, hi) = support_of(kind);
        let n = 4096usize;
        let h = (hi - lo) / n as f64;
        let mut s = 0.0;
        for i in 1..n {
            s += raw_bump(kind, lo + h * i as f64);
        }
        BumpFunction { kind, norm: h * s }
    }

    /// The time/direction/frequency profile of the probe.
    pub fn phi0() -> Self {
        Self::build(BumpKind::Mollifier)
    }

    /// The symmetric window profile used by the measurement.
    pub fn psi0() -> Self {
        Self::build(BumpKind::SymmetricMollifier)
    }

    /// Sensitivity variant of [`BumpFunction::phi0`].
    pub fn smoothed_top_hat_probe() -> Self {
        Self::build(BumpKind::SmoothedTopHat)
    }

    /// Sensitivity variant of [`BumpFunction::psi0`].
    pub fn smoothed_top_hat_window() -> Self {
        Self::build(BumpKind::SymmetricSmoothedTopHat)
    }

    pub fn kind(&self) -> BumpKind {
        self.kind
    }

    /// Open support interval.
    pub fn support(&self) -> (f64, f64) {
        support_of(self.kind)
    }

    /// Normalized value at `z`; exactly zero outside the support.
    pub fn eval(&self, z: f64) -> f64 {
        raw_bump(self.kind, z) / self.norm
    }
}

fn support_of(kind: BumpKind) -> (f64, f64) {
    match kind {
        BumpKind::Mollifier | BumpKind::SmoothedTopHat => (0.0, 1.0),
        BumpKind::SymmetricMollifier | BumpKind::SymmetricSmoothedTopHat => (-1.0, 1.0),
    }
}

/// Location and width of the concentrated boundary pulse.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub mu0: f64,
    pub omega0: f64,
    pub epsilon: f64,
    /// Ballistic round-trip time `2/(mu0 v(omega0))`.
    pub t1: f64,
}

impl ProbeSpec {
    /// Validate the pulse parameters against the material's admissible
    /// ranges and precompute the round-trip time.
    pub fn new(mu0: f64, omega0: f64, epsilon: f64, m: &MaterialModel) -> Result<Self> {
        if !(mu0 > 0.0 && mu0 < 1.0) {
            return Err(PhonoxError::Config(format!(
                "probe direction mu0 = {mu0} must lie in (0, 1)"
            )));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(PhonoxError::Config(format!(
                "probe width epsilon = {epsilon} must lie in (0, 1)"
            )));
        }
        if mu0 + epsilon > 1.0 {
            return Err(PhonoxError::Config(format!(
                "probe direction support [{mu0}, {}] exceeds mu = 1",
                mu0 + epsilon
            )));
        }
        if !(omega0 > 0.0) || omega0 + epsilon > m.grid().omega_max() {
            return Err(PhonoxError::Config(format!(
                "probe frequency support [{omega0}, {}] exceeds (0, {}]",
                omega0 + epsilon,
                m.grid().omega_max()
            )));
        }
        let v = m.v_at(omega0);
        if !(v > 0.0) {
            return Err(PhonoxError::Config(format!(
                "group velocity at omega0 = {omega0} is not positive"
            )));
        }
        Ok(ProbeSpec {
            mu0,
            omega0,
            epsilon,
            t1: 2.0 / (mu0 * v),
        })
    }

    /// Same parameters at a different width.
    pub fn with_epsilon(&self, epsilon: f64, m: &MaterialModel) -> Result<Self> {
        ProbeSpec::new(self.mu0, self.omega0, epsilon, m)
    }
}

/// A probe spec paired with its bump profile; evaluates the incoming datum.
#[derive(Debug, Clone)]
pub struct Probe {
    pub spec: ProbeSpec,
    pub bump: BumpFunction,
}

impl Probe {
    pub fn new(spec: ProbeSpec, bump: BumpFunction) -> Self {
        Probe { spec, bump }
    }

    /// `eps^-3 phi0(t/eps) phi0((mu-mu0)/eps) phi0((omega-omega0)/eps)`.
    pub fn eval(&self, t: f64, mu: f64, omega: f64) -> f64 {
        let e = self.spec.epsilon;
        let b = &self.bump;
        b.eval(t / e) * b.eval((mu - self.spec.mu0) / e) * b.eval((omega - self.spec.omega0) / e)
            / (e * e * e)
    }
}

/// Ballistic return at the measured surface: zero before the round trip
/// `2/(|mu| v)`, afterwards the probe value delayed by the round trip,
/// reflected with `eta1` and attenuated by the relaxation factor.
pub fn f0_outgoing(
    t: f64,
    mu: f64,
    omega: f64,
    eta1_at_omega: f64,
    m: &MaterialModel,
    probe: &Probe,
) -> f64 {
    debug_assert!(mu < 0.0, "the outgoing trace lives on mu < 0");
    let speed = mu.abs() * m.v_at(omega);
    if speed <= 0.0 {
        return 0.0;
    }
    let round_trip = 2.0 / speed;
    if t < round_trip {
        return 0.0;
    }
    let decay = (-2.0 / (m.tau_at(omega) * speed)).exp();
    eta1_at_omega * probe.eval(t - round_trip, -mu, omega) * decay
}

/// Boundary value at `x = 0` for an outgoing ray (`mu < 0`) expressed as a
/// ray integral of the relaxation drive `h(t, x)` (the target of the
/// collision operator is `xi(omega) * h`). `boundary_at_1` supplies the
/// incoming value of the field at the interface for this ray, used once the
/// ray is old enough to have crossed the layer.
pub fn characteristic_outgoing_at_0(
    t: f64,
    mu: f64,
    omega: f64,
    h: &dyn Fn(f64, f64) -> f64,
    boundary_at_1: &dyn Fn(f64) -> f64,
    m: &MaterialModel,
    dy_max: f64,
) -> f64 {
    debug_assert!(mu < 0.0);
    let speed = mu.abs() * m.v_at(omega);
    let tau = m.tau_at(omega);
    let xi = m.xi_at(omega);
    let crossing = 1.0 / speed;
    let (s_lo, carried) = if t < crossing {
        (0.0, 0.0)
    } else {
        let s0 = t - crossing;
        ((s0), (-(crossing) / tau).exp() * boundary_at_1(s0))
    };
    carried + ray_source_integral(t, s_lo, tau, xi, h, dy_max, |s| speed * (t - s))
}

/// Incoming value at `x = 1` for a ray with `mu > 0`, fed by the boundary
/// datum `phi_at_0` once the ray has crossed the layer.
pub fn characteristic_incoming_at_1(
    t: f64,
    mu: f64,
    omega: f64,
    h: &dyn Fn(f64, f64) -> f64,
    phi_at_0: &dyn Fn(f64) -> f64,
    m: &MaterialModel,
    dy_max: f64,
) -> f64 {
    debug_assert!(mu > 0.0);
    let speed = mu * m.v_at(omega);
    let tau = m.tau_at(omega);
    let xi = m.xi_at(omega);
    let crossing = 1.0 / speed;
    let (s_lo, carried) = if t < crossing {
        (0.0, 0.0)
    } else {
        let s0 = t - crossing;
        (s0, (-(crossing) / tau).exp() * phi_at_0(s0))
    };
    carried + ray_source_integral(t, s_lo, tau, xi, h, dy_max, |s| 1.0 - speed * (t - s))
}

/// Composite-midpoint integral of `e^{-(t-s)/tau} (xi/tau) h(s, x(s))`
/// over `s` in `[s_lo, t]`.
fn ray_source_integral(
    t: f64,
    s_lo: f64,
    tau: f64,
    xi: f64,
    h: &dyn Fn(f64, f64) -> f64,
    dy_max: f64,
    x_of_s: impl Fn(f64) -> f64,
) -> f64 {
    let len = t - s_lo;
    if len <= 0.0 {
        return 0.0;
    }
    let n = (len / dy_max).ceil().max(1.0) as usize;
    let ds = len / n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let s = s_lo + (i as f64 + 0.5) * ds;
        acc += (-(t - s) / tau).exp() * h(s, x_of_s(s));
    }
    acc * ds * xi / tau
}

/// Scale factors of the window-shift argument in the measurement constant:
/// the return time of a ray near `(mu0, omega0)` differs from `t1` by
/// `-eps * (a_mu * mu_hat + b_omega * omega_hat)` to first order in the
/// offsets `mu_hat, omega_hat` of the scaled probe variables.
fn shift_coefficients(p: &ProbeSpec, m: &MaterialModel) -> (f64, f64) {
    let v = m.v_at(p.omega0);
    let vp = m.v_prime_at(p.omega0);
    let denom = (p.mu0 * v) * (p.mu0 * v);
    (2.0 * v / denom, 2.0 * p.mu0 * vp / denom)
}

/// The measurement constant: the windowed measure of the ballistic return
/// divided by `eta1(omega0)` in the concentration limit,
///
/// ```text
/// C = e^{-2/(tau(omega0) mu0 v(omega0))} *
///     Int psi0(t - S) phi0(t) phi0(mu) phi0(omega) dt dmu domega,
/// S = a_mu * mu + b_omega * omega
/// ```
///
/// over the unit cube of scaled probe variables, where `S` collects the
/// first-order return-time shift. Evaluated by tensor Gauss quadrature with
/// the direction axis split where the shift crosses the window edges and
/// the time axis mapped onto the moving window support, so refinement
/// converges fast despite the near-degenerate overlap.
pub fn c_constant(
    phi0: &BumpFunction,
    psi0: &BumpFunction,
    p: &ProbeSpec,
    m: &MaterialModel,
) -> Result<f64> {
    c_constant_with_order(phi0, psi0, p, m, 32)
}

/// Same as [`c_constant`] with an explicit per-axis Gauss order (32 is the
/// production default; 64 is used by the refinement-stability check).
pub fn c_constant_with_order(
    phi0: &BumpFunction,
    psi0: &BumpFunction,
    p: &ProbeSpec,
    m: &MaterialModel,
    order: usize,
) -> Result<f64> {
    let (a_mu, b_om) = shift_coefficients(p, m);
    let (gx, gw) = gauss_legendre(order);
    let map = |lo: f64, hi: f64, k: usize| {
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        (mid + half * gx[k], half * gw[k])
    };

    let mut total = 0.0;
    for ko in 0..order {
        let (om, wo) = map(0.0, 1.0, ko);
        let po = phi0.eval(om);
        if po == 0.0 {
            continue;
        }
        // Split the direction axis where S = a_mu*mu + b_om*om crosses the
        // window edges S = 1 and S = 2 (entering/leaving the reachable part
        // of the time axis).
        let mut cuts = vec![0.0, 1.0];
        if a_mu.abs() > 0.0 {
            for edge in [1.0, 2.0] {
                let c = (edge - b_om * om) / a_mu;
                if c > 0.0 && c < 1.0 {
                    cuts.push(c);
                }
            }
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for seg in cuts.windows(2) {
            if seg[1] - seg[0] <= 0.0 {
                continue;
            }
            for km in 0..order {
                let (mu, wm) = map(seg[0], seg[1], km);
                let pm = phi0.eval(mu);
                if pm == 0.0 {
                    continue;
                }
                let shift = a_mu * mu + b_om * om;
                let t_lo = (shift - 1.0).max(0.0);
                let t_hi = (shift + 1.0).min(1.0);
                if t_hi <= t_lo {
                    continue;
                }
                let mut inner = 0.0;
                for kt in 0..order {
                    let (t, wt) = map(t_lo, t_hi, kt);
                    inner += wt * psi0.eval(t - shift) * phi0.eval(t);
                }
                total += wo * wm * po * pm * inner;
            }
        }
    }
    let damping = (-p.t1 / m.tau_at(p.omega0)).exp();
    let c = damping * total;
    if c <= 1e-14 {
        return Err(PhonoxError::Config(format!(
            "window constant degenerates (C = {c:.3e}): the shifted window misses the pulse; \
             check the probe location and bump choices"
        )));
    }
    Ok(c)
}

/// Monte Carlo estimate of the same integral: mean and standard error from
/// `samples` uniform draws on the unit cube, seeded for reproducibility.
pub fn c_constant_monte_carlo(
    phi0: &BumpFunction,
    psi0: &BumpFunction,
    p: &ProbeSpec,
    m: &MaterialModel,
    samples: usize,
    seed: u64,
) -> (f64, f64) {
    let (a_mu, b_om) = shift_coefficients(p, m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let t: f64 = rng.gen();
        let mu: f64 = rng.gen();
        let om: f64 = rng.gen();
        let k = psi0.eval(t - (a_mu * mu + b_om * om)) * phi0.eval(t) * phi0.eval(mu) * phi0.eval(om);
        sum += k;
        sum_sq += k * k;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) / (n - 1.0);
    let damping = (-p.t1 / m.tau_at(p.omega0)).exp();
    (damping * mean, damping * var.sqrt())
}

/// Derived coefficient table at one frequency from an `eta1` estimate.
pub fn coefficients_at_probe(eta1: f64, coeffs: &InterfaceCoefficients) -> (f64, f64, f64) {
    let gamma0 = coeffs.gamma0();
    let eta2 = 1.0 - eta1;
    let zeta1 = (1.0 - eta1) / gamma0;
    let zeta2 = 1.0 - zeta1;
    (eta2, zeta1, zeta2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::SpectralGrid;
    use approx::assert_abs_diff_eq;

    fn material_const(tau: f64, v: f64) -> MaterialModel {
        let grid = SpectralGrid::gauss(30.0, 24).unwrap();
        MaterialModel::constant(grid, tau, v, 1.0, 1.0, 1.2).unwrap()
    }

    fn fine_integral(b: &BumpFunction, n: usize) -> f64 {
        let (lo, hi) = b.support();
        let h = (hi - lo) / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            s += b.eval(lo + (i as f64 + 0.5) * h);
        }
        s * h
    }

    #[test]
    fn bumps_are_normalized() {
        for b in [
            BumpFunction::phi0(),
            BumpFunction::psi0(),
            BumpFunction::smoothed_top_hat_probe(),
            BumpFunction::smoothed_top_hat_window(),
        ] {
            let integral = fine_integral(&b, 10_000);
            assert!(
                (integral - 1.0).abs() <= 1e-10,
                "{:?}: integral {integral}",
                b.kind()
            );
        }
    }

    #[test]
    fn bump_vanishes_outside_support() {
        let phi = BumpFunction::phi0();
        assert_eq!(phi.eval(-0.5), 0.0);
        assert_eq!(phi.eval(0.0), 0.0);
        assert_eq!(phi.eval(1.0), 0.0);
        assert_eq!(phi.eval(1.5), 0.0);
        let psi = BumpFunction::psi0();
        assert_eq!(psi.eval(-1.0), 0.0);
        assert_eq!(psi.eval(1.0), 0.0);
    }

    #[test]
    fn mollifier_is_symmetric() {
        let phi = BumpFunction::phi0();
        for z in [0.1, 0.25, 0.4] {
            assert_abs_diff_eq!(phi.eval(z), phi.eval(1.0 - z), epsilon = 1e-12);
        }
    }

    #[test]
    fn probe_support_and_scaling() {
        let m = material_const(1.0, 1.0);
        let spec = ProbeSpec::new(0.5, 2.0, 0.2, &m).unwrap();
        let probe = Probe::new(spec, BumpFunction::phi0());
        // outside the time support
        assert_eq!(probe.eval(0.4, 0.55, 2.05), 0.0);
        // dead center of all three bumps
        let e = 0.2;
        let phi = BumpFunction::phi0();
        let expect = phi.eval(0.5).powi(3) / (e * e * e);
        assert_abs_diff_eq!(
            probe.eval(e / 2.0, 0.5 + e / 2.0, 2.0 + e / 2.0),
            expect,
            epsilon = 1e-10 * expect
        );
    }

    #[test]
    fn probe_mass_is_one() {
        let m = material_const(1.0, 1.0);
        let spec = ProbeSpec::new(0.5, 2.0, 0.15, &m).unwrap();
        let probe = Probe::new(spec, BumpFunction::phi0());
        // midpoint cube over the support
        let n = 220;
        let e = spec.epsilon;
        let (ht, hm) = (e / n as f64, e / n as f64);
        let mut mass = 0.0;
        for it in 0..n {
            let t = (it as f64 + 0.5) * ht;
            for im in 0..n {
                let mu = spec.mu0 + (im as f64 + 0.5) * hm;
                // factor the omega integral out: bump integrates to 1/eps^0
                mass += probe.eval(t, mu, spec.omega0 + 0.5 * e) * ht * hm;
            }
        }
        // remaining omega axis: divide out the central value, multiply the
        // exact unit integral of the scaled bump
        let phi = BumpFunction::phi0();
        let omega_center = phi.eval(0.5) / e;
        let mass = mass / omega_center;
        assert!((mass - 1.0).abs() <= 2e-4, "probe mass {mass}");
    }

    #[test]
    fn probe_rejects_out_of_range_support() {
        let m = material_const(1.0, 1.0);
        assert!(ProbeSpec::new(0.95, 2.0, 0.2, &m).is_err());
        assert!(ProbeSpec::new(0.5, 29.95, 0.2, &m).is_err());
        assert!(ProbeSpec::new(-0.1, 2.0, 0.2, &m).is_err());
    }

    #[test]
    fn ballistic_return_support_and_attenuation() {
        let m = material_const(5.0, 1.0);
        let spec = ProbeSpec::new(0.5, 2.0, 0.2, &m).unwrap();
        let probe = Probe::new(spec, BumpFunction::phi0());
        let eta1 = 0.6;
        // pre-arrival
        assert_eq!(f0_outgoing(spec.t1 / 2.0, -0.5, 2.0, eta1, &m, &probe), 0.0);
        // on the return pulse: delayed, mirrored, attenuated probe
        let t = spec.t1 + 0.07;
        let expect = eta1 * probe.eval(0.07, 0.5, 2.0) * (-spec.t1 / 5.0).exp();
        assert_abs_diff_eq!(
            f0_outgoing(t, -0.5, 2.0, eta1, &m, &probe),
            expect,
            epsilon = 1e-12 * expect.abs().max(1.0)
        );
        // linearity: doubling the reflectance doubles the return
        assert_abs_diff_eq!(
            f0_outgoing(t, -0.5, 2.0, 2.0 * eta1, &m, &probe),
            2.0 * expect,
            epsilon = 1e-12 * expect.abs().max(1.0)
        );
    }

    #[test]
    fn lossless_mirror_is_a_time_shift() {
        let m = material_const(1e12, 1.0);
        let spec = ProbeSpec::new(0.5, 2.0, 0.2, &m).unwrap();
        let probe = Probe::new(spec, BumpFunction::phi0());
        let mu = -0.62;
        let round_trip = 2.0 / (0.62 * 1.0);
        let t = round_trip + 0.05;
        assert_abs_diff_eq!(
            f0_outgoing(t, mu, 2.05, 1.0, &m, &probe),
            probe.eval(0.05, 0.62, 2.05),
            epsilon = 1e-9
        );
    }

    #[test]
    fn ray_integral_of_zero_drive_is_zero() {
        let m = material_const(1.0, 1.0);
        let zero = |_: f64, _: f64| 0.0;
        let none = |_: f64| 0.0;
        let v = characteristic_outgoing_at_0(0.7, -0.4, 2.0, &zero, &none, &m, 1e-3);
        assert_eq!(v, 0.0);
        let w = characteristic_incoming_at_1(0.7, 0.4, 2.0, &zero, &none, &m, 1e-3);
        assert_eq!(w, 0.0);
    }

    #[test]
    fn constant_drive_closed_form() {
        // h = 1, tau = 1, before the crossing time:
        // f(t, 0) = xi * (1 - e^{-t})
        let m = material_const(1.0, 1.0);
        let one = |_: f64, _: f64| 1.0;
        let none = |_: f64| 0.0;
        let mu = -0.8;
        let t = 0.9; // crossing time is 1/0.8 = 1.25 > t
        let xi = m.xi_at(2.0);
        let v = characteristic_outgoing_at_0(t, mu, 2.0, &one, &none, &m, 1e-3);
        let expect = xi * (1.0 - (-t as f64).exp());
        assert_abs_diff_eq!(v, expect, epsilon = 1e-6 * expect.abs());
    }

    #[test]
    fn crossing_branch_carries_boundary_data() {
        // zero drive, boundary value b(s) = s at x = 1: the ray that left
        // the interface at s0 = t - 1/speed arrives attenuated by
        // e^{-1/(speed tau)}.
        let m = material_const(2.0, 1.0);
        let zero = |_: f64, _: f64| 0.0;
        let boundary = |s: f64| s;
        let mu = -0.5;
        let t = 3.0;
        let speed = 0.5;
        let expect = (-(1.0 / speed) / 2.0_f64).exp() * (t - 1.0 / speed);
        let v = characteristic_outgoing_at_0(t, mu, 2.0, &zero, &boundary, &m, 1e-3);
        assert_abs_diff_eq!(v, expect, epsilon = 1e-12 * expect);
    }

    #[test]
    fn window_constant_reduces_to_overlap_when_shift_vanishes() {
        // huge velocity shrinks the shift scale a_mu = 2/(mu0^2 v) to
        // nothing and huge tau removes the damping: C becomes the plain
        // overlap integral of the window and the time bump. The first-order
        // sensitivity of the overlap to the shift is order one, so v must
        // push the shift below the comparison tolerance.
        let m = material_const(1e12, 1e12);
        let spec = ProbeSpec::new(0.5, 2.0, 0.2, &m).unwrap();
        let phi = BumpFunction::phi0();
        let psi = BumpFunction::psi0();
        let c = c_constant(&phi, &psi, &spec, &m).unwrap();
        // 1D overlap oracle by midpoint rule
        let n = 20_000;
        let h = 1.0 / n as f64;
        let mut overlap = 0.0;
        for i in 0..n {
            let t = (i as f64 + 0.5) * h;
            overlap += psi.eval(t) * phi.eval(t);
        }
        overlap *= h;
        assert!(
            (c - overlap).abs() <= 1e-8 * overlap,
            "C = {c}, overlap = {overlap}"
        );
    }

    #[test]
    fn window_constant_respects_upper_bound() {
        let m = material_const(5.0, 1.0);
        let spec = ProbeSpec::new(0.5, 2.0, 0.2, &m).unwrap();
        let phi = BumpFunction::phi0();
        let psi = BumpFunction::psi0();
        let c = c_constant(&phi, &psi, &spec, &m).unwrap();
        // the three probe bumps integrate to one, so C <= sup psi0
        assert!(c > 0.0 && c <= psi.eval(0.0));
    }

    #[test]
    fn window_constant_refinement_is_stable() {
        let m = material_const(5.0, 1.0);
        let spec = ProbeSpec::new(0.5, 2.0, 0.2, &m).unwrap();
        let phi = BumpFunction::phi0();
        let psi = BumpFunction::psi0();
        let c32 = c_constant_with_order(&phi, &psi, &spec, &m, 32).unwrap();
        let c64 = c_constant_with_order(&phi, &psi, &spec, &m, 64).unwrap();
        assert!(
            ((c32 - c64) / c64).abs() <= 1e-8,
            "c32 = {c32:.12e}, c64 = {c64:.12e}"
        );
    }

    #[test]
    fn window_constant_matches_monte_carlo() {
        let m = material_const(5.0, 1.0);
        let spec = ProbeSpec::new(0.5, 2.0, 0.2, &m).unwrap();
        let phi = BumpFunction::phi0();
        let psi = BumpFunction::psi0();
        let c = c_constant(&phi, &psi, &spec, &m).unwrap();
        let (mc, se) = c_constant_monte_carlo(&phi, &psi, &spec, &m, 200_000, 42);
        assert!(
            (c - mc).abs() <= 3.0 * se,
            "quadrature {c:.6e}, monte carlo {mc:.6e} +/- {se:.2e}"
        );
    }

    #[test]
    fn degenerate_window_is_reported() {
        // A crawling group velocity stretches the round trip to hundreds of
        // relaxation times and blows up the return-time spread, so the
        // windowed overlap collapses below any usable level.
        let m = material_const(5.0, 0.01);
        let spec = ProbeSpec::new(0.5, 2.0, 0.2, &m).unwrap();
        let phi = BumpFunction::phi0();
        let psi = BumpFunction::psi0();
        assert!(c_constant(&phi, &psi, &spec, &m).is_err());
    }
}
