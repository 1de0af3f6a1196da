//! Event-driven stepping internals of the transport kernel.
//!
//! Each ordinate pair (μ half-node, ω node) owns four node lattices: the
//! rightward and leftward families in each layer. A lattice keeps exactly
//! one sample per cell; the whole family drifts rigidly along its
//! characteristic, so within a step every boundary contact (a node exiting
//! a layer edge or a fresh node entering one) happens at an exactly
//! computable crossing time. Exits are evaluated at those times with the
//! exact relaxation integrating factor, interface and wall couplings
//! consume the freshest exit values, and newborn nodes integrate the
//! remaining fraction of the step. When both layers share one cell width
//! the two crossing combs coincide bitwise and the interface exchange
//! pairs exits with births at identical times; otherwise the couplings
//! fall back to latest-value holds, first-order accurate in the step.
//!
//! The relaxation drive is the time-lagged bracket field divided by the
//! bracket of the equilibrium weight, so the equilibrium pair is a fixed
//! point of the discrete update to rounding accuracy.

use super::{BoundaryData, InitialState, RunMode, SolverOptions, SpatialGrid};
use crate::error::PhonoxError;
use crate::interface::InterfaceCoefficients;
use crate::material::MaterialModel;
use crate::quadrature::AngularQuadrature;
use crate::Result;

/// Values whose magnitude falls below this floor are flushed to exact
/// zero at range edges. The relaxation gain has a superexponentially small
/// spatial tail beyond the reachable front (each step the interpolation
/// stencil leaks one cell), and without a floor that tail drags the value
/// ranges across the whole domain while carrying nothing above 1e-200.
const VALUE_FLOOR: f64 = 1e-250;

#[inline]
fn floor_tiny(v: f64) -> f64 {
    if v.abs() < VALUE_FLOOR {
        0.0
    } else {
        v
    }
}

/// Inclusive slot range; `lo > hi` encodes the empty range. Slots outside a
/// lattice's range are guaranteed to hold exact zeros.
#[derive(Clone, Copy, Debug)]
pub(super) struct Span {
    pub lo: i64,
    pub hi: i64,
}

impl Span {
    pub fn empty() -> Self {
        Span { lo: 1, hi: 0 }
    }
    pub fn of(lo: i64, hi: i64) -> Self {
        Span { lo, hi }
    }
    pub fn is_empty(self) -> bool {
        self.lo > self.hi
    }
    pub fn shift(self, d: i64) -> Self {
        if self.is_empty() {
            self
        } else {
            Span {
                lo: self.lo + d,
                hi: self.hi + d,
            }
        }
    }
    pub fn clamp(self, lo: i64, hi: i64) -> Self {
        if self.is_empty() {
            self
        } else {
            Span {
                lo: self.lo.max(lo),
                hi: self.hi.min(hi),
            }
        }
    }
    pub fn hull(self, o: Span) -> Span {
        if self.is_empty() {
            o
        } else if o.is_empty() {
            self
        } else {
            Span {
                lo: self.lo.min(o.lo),
                hi: self.hi.max(o.hi),
            }
        }
    }
    pub fn add_point(&mut self, i: i64) {
        *self = self.hull(Span::of(i, i));
    }
}

/// Zero sub-floor edge values and shrink the range accordingly; keeps the
/// outside-range-is-zero invariant while stopping the creep of ranges
/// carried only by physically meaningless tails.
fn trim_span(buf: &mut [f64], span: &mut Span) {
    *span = span.clamp(0, buf.len() as i64 - 1);
    while !span.is_empty() {
        let i = span.lo as usize;
        if buf[i].abs() < VALUE_FLOOR {
            buf[i] = 0.0;
            span.lo += 1;
        } else {
            break;
        }
    }
    while !span.is_empty() {
        let i = span.hi as usize;
        if buf[i].abs() < VALUE_FLOOR {
            buf[i] = 0.0;
            span.hi -= 1;
        } else {
            break;
        }
    }
    if span.is_empty() {
        *span = Span::empty();
    }
}

/// Exact integral of `window(t) * record(t)` over the clipped part of one
/// boundary event interval, where the record is linear between the event
/// endpoints. Two-point Gauss is ample: the window is smooth on the pulse
/// scale while event intervals are a fraction of a cell crossing.
fn window_weighted_integral(
    spec: &super::MeasurementSpec,
    ta: f64,
    va: f64,
    tb: f64,
    vb: f64,
    clip_lo: f64,
    clip_hi: f64,
) -> f64 {
    let a = ta.max(clip_lo);
    let b = tb.min(clip_hi);
    if !(b > a) {
        return 0.0;
    }
    let span = tb - ta;
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let d = half / 3.0f64.sqrt();
    let mut acc = 0.0;
    for tg in [mid - d, mid + d] {
        let u = (tg - ta) / span;
        acc += spec.window_at(tg) * (va + (vb - va) * u);
    }
    acc * half
}

/// Linear interpolation between cell-center samples with edge clamping;
/// `pos` is measured in cell units from the layer's left edge.
fn interp_clamped(arr: &[f64], pos: f64) -> f64 {
    let n = arr.len() as i64;
    let r = pos - 0.5;
    let b = r.floor();
    let w = r - b;
    let b = b as i64;
    let i0 = b.clamp(0, n - 1) as usize;
    let i1 = (b + 1).clamp(0, n - 1) as usize;
    arr[i0] + (arr[i1] - arr[i0]) * w
}

/// Number of boundary crossings and the new lattice offset after drifting
/// by `d` cells. The offset is the minus-family phase in `[0, 1)`; a node
/// landing exactly on the edge stays and exits at the start of the next
/// step, which keeps the offset representation closed.
fn advance_offset(am: f64, d: f64) -> (usize, f64) {
    let x = d - am;
    if x < 0.0 {
        return (0, am - d);
    }
    let fl = x.floor();
    let k = if x == fl { fl as usize } else { fl as usize + 1 };
    let mut a2 = am - d + k as f64;
    if a2 < 0.0 || a2 >= 1.0 {
        a2 = 0.0;
    }
    (k, a2)
}

/// How a component's relaxation drive is assembled from the lagged
/// bracket fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum DriveKind {
    /// No gain term (pure decay transport).
    None,
    /// Own bracket field.
    Own,
    /// Own bracket plus the ballistic component's (remainder coupling).
    WithBallistic,
}

/// Interface wiring of the leftward birth in layer one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ReflectKind {
    /// η₁ f(1,μ) + ζ₁ g(1,−μ) from the component's own fields.
    Full,
    /// η₁ f(1,μ) only (the never-scattered part keeps no transmission).
    MirrorOnly,
    /// Own mirror and transmission plus the ballistic g re-entry.
    OwnPlusBallisticG,
}

struct Component {
    fp: Vec<f64>,
    fm: Vec<f64>,
    gp: Vec<f64>,
    gm: Vec<f64>,
    sp_fp: Vec<Span>,
    sp_fm: Vec<Span>,
    sp_gp: Vec<Span>,
    sp_gm: Vec<Span>,
    /// Latest layer-one rightward exit value at the interface, per pair.
    vf_hold: Vec<f64>,
    /// Latest layer-two leftward exit value at the interface, per pair.
    vg_hold: Vec<f64>,
    /// Latest layer-two rightward exit value at the wall, per pair.
    wall_hold: Vec<f64>,
    /// Half-range wall flux snapshot taken at the start of the step.
    wall_flux: f64,
    /// Bracket field accumulated during the sweep, used next step.
    h_f: Vec<f64>,
    h_g: Vec<f64>,
    h_span_f: Span,
    h_span_g: Span,
    /// Weighted outgoing boundary sum per step time.
    trace: Vec<f64>,
    /// Last boundary event value per pair (trace assembly state).
    prev_v: Vec<f64>,
    /// Accumulated windowed measurement.
    m_acc: f64,
    drive: DriveKind,
    reflect: ReflectKind,
    takes_inflow: bool,
}

/// Measurement spec with its cached absolute window support.
struct MeasCache {
    spec: super::MeasurementSpec,
    t_lo: f64,
    t_hi: f64,
}

pub(super) struct Engine {
    // geometry and stepping
    nxf: usize,
    nxg: usize,
    dxf: f64,
    dxg: f64,
    dt: f64,
    n_steps: usize,
    // ordinate tables
    n_pairs: usize,
    pair_mu: Vec<f64>,
    pair_w: Vec<f64>,
    pair_j: Vec<u32>,
    pair_speed: Vec<f64>,
    /// w_μ w_ω μ v per pair (half-range flux weights).
    pair_wflux: Vec<f64>,
    // per-frequency tables
    tau: Vec<f64>,
    xi: Vec<f64>,
    decay_full: Vec<f64>,
    alpha0_xi: Vec<f64>,
    eta1: Vec<f64>,
    eta2: Vec<f64>,
    zeta1: Vec<f64>,
    zeta2: Vec<f64>,
    /// Right-layer equilibrium amplitude; the weighted norm of g uses
    /// (gamma0 xi)^(1-p) so a saturated state sits exactly at its cap.
    gamma0: f64,
    /// Bracket of the equilibrium weight (the drive normalizer).
    pub(super) xi_bracket: f64,
    // lattice phases (shared by all components)
    off_f: Vec<f64>,
    off_g: Vec<f64>,
    /// Last boundary event time per pair (shared across components).
    prev_t: Vec<f64>,
    comps: Vec<Component>,
    // per-step drive scratch (per component)
    src_f: Vec<Vec<f64>>,
    src_g: Vec<Vec<f64>>,
    src_f_span: Vec<Span>,
    src_g_span: Vec<Span>,
    // small event scratch
    sc_tf: Vec<f64>,
    sc_tg: Vec<f64>,
    sc_exit_vf: Vec<f64>,
    sc_exit_tr: Vec<f64>,
    sc_exit_vg: Vec<f64>,
    sc_exit_wall: Vec<f64>,
    sc_vfm: Vec<f64>,
    sc_vgm: Vec<f64>,
    sc_vfg: Vec<f64>,
    sc_vgg: Vec<f64>,
    // optional recorders
    resolved: Option<Vec<f64>>,
    interface_series: Option<Vec<f64>>,
    wall_series: Option<Vec<f64>>,
    pub(super) norms: Vec<super::NormSample>,
    l1_state_flux: f64,
    l1_state_norm: f64,
    lp_rhs: f64,
    pub(super) extrema: Option<super::ExtremaReport>,
    support_pairs: Option<Vec<u32>>,
    phi_nonneg: bool,
    meas: Option<MeasCache>,
    opts: SolverOptions,
}

impl Engine {
    #[allow(clippy::too_many_arguments)]
    pub(super) fn new(
        m: &MaterialModel,
        q: &AngularQuadrature,
        coeffs: &InterfaceCoefficients,
        grid: &SpatialGrid,
        dt: f64,
        n_steps: usize,
        opts: &SolverOptions,
        phi: &BoundaryData,
    ) -> Result<Self> {
        let n_omega = m.grid().len();
        let n_half = q.half_nodes().len();
        let n_pairs = n_half * n_omega;
        let mut pair_mu = Vec::with_capacity(n_pairs);
        let mut pair_w = Vec::with_capacity(n_pairs);
        let mut pair_j = Vec::with_capacity(n_pairs);
        let mut pair_speed = Vec::with_capacity(n_pairs);
        let mut pair_wflux = Vec::with_capacity(n_pairs);
        for k in 0..n_half {
            let mu = q.half_nodes()[k];
            let wmu = q.half_weights()[k];
            for j in 0..n_omega {
                let v = m.v()[j];
                pair_mu.push(mu);
                pair_w.push(wmu * m.grid().weights()[j]);
                pair_j.push(j as u32);
                pair_speed.push(mu * v);
                pair_wflux.push(wmu * m.grid().weights()[j] * mu * v);
            }
        }
        let tau = m.tau().to_vec();
        let xi = m.xi().to_vec();
        let decay_full: Vec<f64> = tau.iter().map(|&t| (-dt / t).exp()).collect();
        let alpha0_xi: Vec<f64> = xi.iter().map(|&x| coeffs.alpha0() * x).collect();
        let wsum: f64 = (0..n_omega)
            .map(|j| m.grid().weights()[j] * xi[j] / tau[j])
            .sum();
        let xi_bracket = q.total_weight() * wsum;

        let n_comps = match opts.mode {
            RunMode::Full | RunMode::Ballistic => 1,
            RunMode::Composite { instrument } => {
                if instrument {
                    3
                } else {
                    2
                }
            }
        };
        let nxf = grid.nx_left();
        let nxg = grid.nx_right();
        let gamma0 = coeffs.gamma0();
        let mut comps = Vec::with_capacity(n_comps);
        for s in 0..n_comps {
            let (drive, reflect, takes_inflow) = match opts.mode {
                RunMode::Full => (DriveKind::Own, ReflectKind::Full, true),
                RunMode::Ballistic => (DriveKind::None, ReflectKind::MirrorOnly, true),
                RunMode::Composite { .. } => match s {
                    0 => (DriveKind::None, ReflectKind::MirrorOnly, true),
                    1 => {
                        if n_comps == 3 {
                            (DriveKind::WithBallistic, ReflectKind::Full, false)
                        } else {
                            (DriveKind::WithBallistic, ReflectKind::OwnPlusBallisticG, false)
                        }
                    }
                    _ => (DriveKind::Own, ReflectKind::OwnPlusBallisticG, false),
                },
            };
            let mut c = Component {
                fp: vec![0.0; n_pairs * nxf],
                fm: vec![0.0; n_pairs * nxf],
                gp: vec![0.0; n_pairs * nxg],
                gm: vec![0.0; n_pairs * nxg],
                sp_fp: vec![Span::empty(); n_pairs],
                sp_fm: vec![Span::empty(); n_pairs],
                sp_gp: vec![Span::empty(); n_pairs],
                sp_gm: vec![Span::empty(); n_pairs],
                vf_hold: vec![0.0; n_pairs],
                vg_hold: vec![0.0; n_pairs],
                wall_hold: vec![0.0; n_pairs],
                wall_flux: 0.0,
                h_f: vec![0.0; nxf],
                h_g: vec![0.0; nxg],
                h_span_f: Span::empty(),
                h_span_g: Span::empty(),
                trace: vec![0.0; n_steps + 1],
                prev_v: vec![0.0; n_pairs],
                m_acc: 0.0,
                drive,
                reflect,
                takes_inflow,
            };
            if matches!(opts.initial, InitialState::Equilibrium) && s == 0 {
                for p in 0..n_pairs {
                    let j = pair_j[p] as usize;
                    let xe = xi[j];
                    c.fp[p * nxf..(p + 1) * nxf].fill(xe);
                    c.fm[p * nxf..(p + 1) * nxf].fill(xe);
                    c.gp[p * nxg..(p + 1) * nxg].fill(gamma0 * xe);
                    c.gm[p * nxg..(p + 1) * nxg].fill(gamma0 * xe);
                    c.sp_fp[p] = Span::of(0, nxf as i64 - 1);
                    c.sp_fm[p] = Span::of(0, nxf as i64 - 1);
                    c.sp_gp[p] = Span::of(0, nxg as i64 - 1);
                    c.sp_gm[p] = Span::of(0, nxg as i64 - 1);
                    c.vf_hold[p] = xe;
                    c.vg_hold[p] = gamma0 * xe;
                    c.wall_hold[p] = gamma0 * xe;
                    c.prev_v[p] = xe;
                }
                c.h_f.fill(xi_bracket);
                c.h_g.fill(gamma0 * xi_bracket);
                c.h_span_f = Span::of(0, nxf as i64 - 1);
                c.h_span_g = Span::of(0, nxg as i64 - 1);
                // trace starts on the equilibrium boundary value
                let w0: f64 = (0..n_pairs).map(|p| pair_w[p] * xi[pair_j[p] as usize]).sum();
                c.trace[0] = w0;
            }
            comps.push(c);
        }

        let resolved = if opts.record_resolved {
            let cells = (n_steps + 1).checked_mul(n_pairs).unwrap_or(usize::MAX);
            if cells > 50_000_000 {
                return Err(PhonoxError::Config(format!(
                    "resolved trace would hold {cells} samples; reduce the run size"
                )));
            }
            Some(vec![0.0; cells])
        } else {
            None
        };

        let (interface_series, wall_series) = if opts.record_boundary_series {
            (Some(vec![0.0; n_steps + 1]), Some(vec![0.0; n_steps + 1]))
        } else {
            (None, None)
        };

        let extrema = if opts.track_extrema {
            Some(super::ExtremaReport {
                min_value: 0.0,
                max_f_over_xi: 0.0,
                max_g_over_xi: 0.0,
            })
        } else {
            None
        };

        Ok(Engine {
            nxf,
            nxg,
            dxf: grid.dx_left(),
            dxg: grid.dx_right(),
            dt,
            n_steps,
            n_pairs,
            pair_mu,
            pair_w,
            pair_j,
            pair_speed,
            pair_wflux,
            tau,
            xi,
            decay_full,
            alpha0_xi,
            eta1: coeffs.eta1().to_vec(),
            eta2: coeffs.eta2().to_vec(),
            zeta1: coeffs.zeta1().to_vec(),
            zeta2: coeffs.zeta2().to_vec(),
            gamma0,
            xi_bracket,
            off_f: vec![0.5; n_pairs],
            off_g: vec![0.5; n_pairs],
            prev_t: vec![0.0; n_pairs],
            comps,
            src_f: (0..n_comps).map(|_| vec![0.0; nxf]).collect(),
            src_g: (0..n_comps).map(|_| vec![0.0; nxg]).collect(),
            src_f_span: vec![Span::empty(); n_comps],
            src_g_span: vec![Span::empty(); n_comps],
            sc_tf: Vec::new(),
            sc_tg: Vec::new(),
            sc_exit_vf: Vec::new(),
            sc_exit_tr: Vec::new(),
            sc_exit_vg: Vec::new(),
            sc_exit_wall: Vec::new(),
            sc_vfm: Vec::new(),
            sc_vgm: Vec::new(),
            sc_vfg: Vec::new(),
            sc_vgg: Vec::new(),
            resolved,
            interface_series,
            wall_series,
            norms: Vec::new(),
            l1_state_flux: 0.0,
            l1_state_norm: 0.0,
            lp_rhs: 0.0,
            extrema,
            support_pairs: phi.support_pairs(q, m),
            phi_nonneg: phi.declares_nonnegative(),
            meas: opts.measurement.clone().map(|spec| {
                let (t_lo, t_hi) = spec.window_support();
                MeasCache { spec, t_lo, t_hi }
            }),
            opts: opts.clone(),
        })
    }

    /// Accumulated windowed measurement per component; empty when no
    /// measurement was requested.
    pub(super) fn measurements(&self) -> Vec<f64> {
        if self.meas.is_some() {
            self.comps.iter().map(|c| c.m_acc).collect()
        } else {
            Vec::new()
        }
    }

    pub(super) fn n_comps(&self) -> usize {
        self.comps.len()
    }

    /// Advance one step from `t = n Δt`, returning a numerical-blowup error
    /// if the lagged bracket field stopped being finite.
    pub(super) fn step(&mut self, n: usize, m: &MaterialModel, phi: &BoundaryData) -> Result<()> {
        let t = n as f64 * self.dt;
        self.build_sources(n)?;
        for c in self.comps.iter_mut() {
            c.h_f.fill(0.0);
            c.h_g.fill(0.0);
            c.h_span_f = Span::empty();
            c.h_span_g = Span::empty();
        }
        for p in 0..self.n_pairs {
            self.step_pair(p, t, m, phi)?;
        }
        if self.interface_series.is_some() {
            let mut iface = 0.0;
            let mut wall = 0.0;
            for c in &self.comps {
                for p in 0..self.n_pairs {
                    iface += self.pair_w[p] * c.vf_hold[p];
                    wall += self.pair_wflux[p] * c.wall_hold[p];
                }
            }
            self.interface_series.as_mut().unwrap()[n + 1] = iface;
            self.wall_series.as_mut().unwrap()[n + 1] = wall;
        }
        if let Some(every) = self.opts.norms_every {
            self.accumulate_boundary_integrals(t, m, phi);
            if (n + 1) % every == 0 || n + 1 == self.n_steps {
                self.record_norms((n + 1) as f64 * self.dt);
            }
        }
        if self.extrema.is_some() {
            self.update_extrema();
        }
        Ok(())
    }

    /// Assemble per-component relaxation drives from the lagged bracket
    /// fields and refresh the wall-flux snapshots.
    fn build_sources(&mut self, n: usize) -> Result<()> {
        for (s, c) in self.comps.iter().enumerate() {
            for (layer, h, span) in [(0, &c.h_f, c.h_span_f), (1, &c.h_g, c.h_span_g)] {
                if !span.is_empty() {
                    let lo = span.lo.max(0) as usize;
                    let hi = span.hi.min(h.len() as i64 - 1) as usize;
                    if h[lo..=hi].iter().any(|v| !v.is_finite()) {
                        return Err(PhonoxError::Numerical {
                            step: n,
                            reason: format!(
                                "bracket field not finite in layer {} of component {s}",
                                layer + 1
                            ),
                        });
                    }
                }
            }
        }
        let inv = 1.0 / self.xi_bracket;
        for s in 0..self.comps.len() {
            let (f_span, g_span) = match self.comps[s].drive {
                DriveKind::None => (Span::empty(), Span::empty()),
                DriveKind::Own => (self.comps[s].h_span_f, self.comps[s].h_span_g),
                DriveKind::WithBallistic => (
                    self.comps[s].h_span_f.hull(self.comps[0].h_span_f),
                    self.comps[s].h_span_g.hull(self.comps[0].h_span_g),
                ),
            };
            self.src_f_span[s] = f_span.clamp(0, self.nxf as i64 - 1);
            self.src_g_span[s] = g_span.clamp(0, self.nxg as i64 - 1);
            // drive slots are rebuilt from scratch so a range that moved
            // since the last step cannot expose stale values to the
            // edge-clamped interpolation
            self.src_f[s].fill(0.0);
            self.src_g[s].fill(0.0);
            match self.comps[s].drive {
                DriveKind::None => {}
                DriveKind::Own => {
                    fill_scaled(&mut self.src_f[s], &self.comps[s].h_f, self.src_f_span[s], inv);
                    fill_scaled(&mut self.src_g[s], &self.comps[s].h_g, self.src_g_span[s], inv);
                }
                DriveKind::WithBallistic => {
                    fill_scaled_sum(
                        &mut self.src_f[s],
                        &self.comps[s].h_f,
                        &self.comps[0].h_f,
                        self.src_f_span[s],
                        inv,
                    );
                    fill_scaled_sum(
                        &mut self.src_g[s],
                        &self.comps[s].h_g,
                        &self.comps[0].h_g,
                        self.src_g_span[s],
                        inv,
                    );
                }
            }
            trim_span(&mut self.src_f[s], &mut self.src_f_span[s]);
            trim_span(&mut self.src_g[s], &mut self.src_g_span[s]);
        }
        for c in self.comps.iter_mut() {
            let mut flux = 0.0;
            for p in 0..self.n_pairs {
                flux += self.pair_wflux[p] * c.wall_hold[p];
            }
            c.wall_flux = flux;
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn step_pair(&mut self, p: usize, t: f64, m: &MaterialModel, phi: &BoundaryData) -> Result<()> {
        let j = self.pair_j[p] as usize;
        let c_speed = self.pair_speed[p];
        let rf = self.dxf / c_speed;
        let rg = self.dxg / c_speed;
        let df = self.dt / rf;
        let dg = self.dt / rg;
        let amf = self.off_f[p];
        let amg = self.off_g[p];
        let (kf, amf2) = advance_offset(amf, df);
        let (kg, amg2) = advance_offset(amg, dg);
        self.off_f[p] = amf2;
        self.off_g[p] = amg2;

        let nc = self.comps.len();
        let tau = self.tau[j];
        let xi = self.xi[j];
        let dec_full = self.decay_full[j];
        let (e1, e2, z1, z2) = (self.eta1[j], self.eta2[j], self.zeta1[j], self.zeta2[j]);
        let nxf = self.nxf as i64;
        let nxg = self.nxg as i64;

        // crossing combs (shared by both lattices of a layer)
        self.sc_tf.clear();
        for mm in 0..kf {
            self.sc_tf.push(t + (mm as f64 + amf) * rf);
        }
        self.sc_tg.clear();
        for mm in 0..kg {
            self.sc_tg.push(t + (mm as f64 + amg) * rg);
        }

        // exit values, evaluated on the pre-step lattices
        self.sc_exit_vf.clear();
        self.sc_exit_vf.resize(nc * kf, 0.0);
        self.sc_exit_tr.clear();
        self.sc_exit_tr.resize(nc * kf, 0.0);
        self.sc_exit_vg.clear();
        self.sc_exit_vg.resize(nc * kg, 0.0);
        self.sc_exit_wall.clear();
        self.sc_exit_wall.resize(nc * kg, 0.0);
        for s in 0..nc {
            let base_f = p * self.nxf;
            let base_g = p * self.nxg;
            for mm in 0..kf {
                let e = (mm as f64 + amf) * rf;
                let dce = (-e / tau).exp();
                let ge = (1.0 - dce) * xi;
                // rightward layer-one exit at the interface
                let slot = nxf - 1 - mm as i64;
                let old = lattice_value(&self.comps[s].fp[base_f..base_f + self.nxf], self.comps[s].sp_fp[p], slot);
                let src = self.source_term_f(s, ge, 0.5 * ((slot as f64 + (1.0 - amf)) + nxf as f64));
                self.sc_exit_vf[s * kf + mm] = old * dce + src;
                // leftward layer-one exit at the measured surface
                let slot = mm as i64;
                let old = lattice_value(&self.comps[s].fm[base_f..base_f + self.nxf], self.comps[s].sp_fm[p], slot);
                let src = self.source_term_f(s, ge, 0.5 * (slot as f64 + amf));
                self.sc_exit_tr[s * kf + mm] = old * dce + src;
            }
            for mm in 0..kg {
                let e = (mm as f64 + amg) * rg;
                let dce = (-e / tau).exp();
                let ge = (1.0 - dce) * xi;
                // leftward layer-two exit at the interface
                let slot = mm as i64;
                let old = lattice_value(&self.comps[s].gm[base_g..base_g + self.nxg], self.comps[s].sp_gm[p], slot);
                let src = self.source_term_g(s, ge, 0.5 * (slot as f64 + amg));
                self.sc_exit_vg[s * kg + mm] = old * dce + src;
                // rightward layer-two exit at the wall
                let slot = nxg - 1 - mm as i64;
                let old = lattice_value(&self.comps[s].gp[base_g..base_g + self.nxg], self.comps[s].sp_gp[p], slot);
                let src = self.source_term_g(s, ge, 0.5 * ((slot as f64 + (1.0 - amg)) + nxg as f64));
                self.sc_exit_wall[s * kg + mm] = old * dce + src;
            }
        }

        // merge the two combs in time order, exits before births, recording
        // the hold values seen by each birth
        self.sc_vfm.clear();
        self.sc_vfm.resize(nc * kf, 0.0);
        self.sc_vgm.clear();
        self.sc_vgm.resize(nc * kf, 0.0);
        self.sc_vfg.clear();
        self.sc_vfg.resize(nc * kg, 0.0);
        self.sc_vgg.clear();
        self.sc_vgg.resize(nc * kg, 0.0);
        {
            let mut i = 0usize;
            let mut jj = 0usize;
            while i < kf || jj < kg {
                let f_turn = jj >= kg || (i < kf && self.sc_tf[i] <= self.sc_tg[jj]);
                let tie = i < kf && jj < kg && self.sc_tf[i] == self.sc_tg[jj];
                if tie {
                    for s in 0..nc {
                        self.comps[s].vf_hold[p] = self.sc_exit_vf[s * kf + i];
                        self.comps[s].vg_hold[p] = self.sc_exit_vg[s * kg + jj];
                    }
                    for s in 0..nc {
                        self.sc_vfm[s * kf + i] = self.comps[s].vf_hold[p];
                        self.sc_vgm[s * kf + i] = self.comps[s].vg_hold[p];
                        self.sc_vfg[s * kg + jj] = self.comps[s].vf_hold[p];
                        self.sc_vgg[s * kg + jj] = self.comps[s].vg_hold[p];
                    }
                    i += 1;
                    jj += 1;
                } else if f_turn {
                    for s in 0..nc {
                        self.comps[s].vf_hold[p] = self.sc_exit_vf[s * kf + i];
                        self.sc_vfm[s * kf + i] = self.comps[s].vf_hold[p];
                        self.sc_vgm[s * kf + i] = self.comps[s].vg_hold[p];
                    }
                    i += 1;
                } else {
                    for s in 0..nc {
                        self.comps[s].vg_hold[p] = self.sc_exit_vg[s * kg + jj];
                        self.sc_vfg[s * kg + jj] = self.comps[s].vf_hold[p];
                        self.sc_vgg[s * kg + jj] = self.comps[s].vg_hold[p];
                    }
                    jj += 1;
                }
            }
        }
        if kg > 0 {
            for s in 0..nc {
                self.comps[s].wall_hold[p] = self.sc_exit_wall[s * kg + (kg - 1)];
            }
        }

        // bulk sweeps: survivors decay, absorb the midpoint-interpolated
        // drive, and land in their shifted slots
        let hcoef = self.pair_w[p] / tau;
        for s in 0..nc {
            let base_f = p * self.nxf;
            let base_g = p * self.nxg;
            let (sf, ss_f) = (&self.src_f[s], self.src_f_span[s]);
            let (sg, ss_g) = (&self.src_g[s], self.src_g_span[s]);
            let has_f = !ss_f.is_empty();
            let has_g = !ss_g.is_empty();
            let gxi = (1.0 - dec_full) * xi;
            // layer one rightward
            {
                let r0 = (1.0 - amf2) - 0.5 * df;
                let c = &mut self.comps[s];
                sweep_right(
                    &mut c.fp[base_f..base_f + self.nxf],
                    &mut c.sp_fp[p],
                    kf,
                    dec_full,
                    gxi,
                    if has_f { Some((sf.as_slice(), ss_f, r0)) } else { None },
                    &mut c.h_f,
                    hcoef,
                    &mut c.h_span_f,
                );
            }
            // layer one leftward
            {
                let r0 = amf2 + 0.5 * df;
                let c = &mut self.comps[s];
                sweep_left(
                    &mut c.fm[base_f..base_f + self.nxf],
                    &mut c.sp_fm[p],
                    kf,
                    dec_full,
                    gxi,
                    if has_f { Some((sf.as_slice(), ss_f, r0)) } else { None },
                    &mut c.h_f,
                    hcoef,
                    &mut c.h_span_f,
                );
            }
            // layer two rightward
            {
                let r0 = (1.0 - amg2) - 0.5 * dg;
                let c = &mut self.comps[s];
                sweep_right(
                    &mut c.gp[base_g..base_g + self.nxg],
                    &mut c.sp_gp[p],
                    kg,
                    dec_full,
                    gxi,
                    if has_g { Some((sg.as_slice(), ss_g, r0)) } else { None },
                    &mut c.h_g,
                    hcoef,
                    &mut c.h_span_g,
                );
            }
            // layer two leftward
            {
                let r0 = amg2 + 0.5 * dg;
                let c = &mut self.comps[s];
                sweep_left(
                    &mut c.gm[base_g..base_g + self.nxg],
                    &mut c.sp_gm[p],
                    kg,
                    dec_full,
                    gxi,
                    if has_g { Some((sg.as_slice(), ss_g, r0)) } else { None },
                    &mut c.h_g,
                    hcoef,
                    &mut c.h_span_g,
                );
            }
        }

        // births at the recorded crossing times
        let mu = self.pair_mu[p];
        let omega = m.grid().nodes()[j];
        for mm in 0..kf {
            let tm = self.sc_tf[mm];
            let r = self.dt - (tm - t);
            let dcr = (-r / tau).exp();
            let gr = (1.0 - dcr) * xi;
            // layer-one rightward birth at the measured surface
            let inflow = if self.comps.iter().any(|c| c.takes_inflow) {
                let v = phi.eval(tm, mu, omega, m);
                if self.phi_nonneg && v < 0.0 {
                    return Err(PhonoxError::Config(format!(
                        "boundary data declared nonnegative but evaluates to {v:.3e} at t = {tm:.6}"
                    )));
                }
                v
            } else {
                0.0
            };
            for s in 0..nc {
                let slot = kf as i64 - 1 - mm as i64;
                let b_in = if self.comps[s].takes_inflow { inflow } else { 0.0 };
                let end = slot as f64 + (1.0 - amf2);
                let src = self.source_term_f(s, gr, 0.5 * end);
                let base_f = p * self.nxf;
                let c = &mut self.comps[s];
                let val = floor_tiny(b_in * dcr + src);
                c.fp[base_f + slot as usize] = val;
                if val != 0.0 {
                    c.sp_fp[p].add_point(slot);
                }
                c.h_f[slot as usize] += hcoef * val;
                if val != 0.0 {
                    c.h_span_f.add_point(slot);
                }
                // layer-one leftward birth at the interface
                let vf = self.sc_vfm[s * kf + mm];
                let refl = match self.comps[s].reflect {
                    ReflectKind::Full => e1 * vf + z1 * self.sc_vgm[s * kf + mm],
                    ReflectKind::MirrorOnly => e1 * vf,
                    ReflectKind::OwnPlusBallisticG => {
                        e1 * vf + z1 * (self.sc_vgm[mm] + self.sc_vgm[s * kf + mm])
                    }
                };
                let slot = nxf - kf as i64 + mm as i64;
                let end = slot as f64 + amf2;
                let src = self.source_term_f(s, gr, 0.5 * (nxf as f64 + end));
                let c = &mut self.comps[s];
                let val = floor_tiny(refl * dcr + src);
                c.fm[base_f + slot as usize] = val;
                if val != 0.0 {
                    c.sp_fm[p].add_point(slot);
                }
                c.h_f[slot as usize] += hcoef * val;
                if val != 0.0 {
                    c.h_span_f.add_point(slot);
                }
            }
        }
        for mm in 0..kg {
            let tm = self.sc_tg[mm];
            let r = self.dt - (tm - t);
            let dcr = (-r / tau).exp();
            let gr = (1.0 - dcr) * xi;
            for s in 0..nc {
                // layer-two rightward birth at the interface
                let trans = e2 * self.sc_vfg[s * kg + mm] + z2 * self.sc_vgg[s * kg + mm];
                let slot = kg as i64 - 1 - mm as i64;
                let end = slot as f64 + (1.0 - amg2);
                let src = self.source_term_g(s, gr, 0.5 * end);
                let base_g = p * self.nxg;
                let c = &mut self.comps[s];
                let val = floor_tiny(trans * dcr + src);
                c.gp[base_g + slot as usize] = val;
                if val != 0.0 {
                    c.sp_gp[p].add_point(slot);
                }
                c.h_g[slot as usize] += hcoef * val;
                if val != 0.0 {
                    c.h_span_g.add_point(slot);
                }
                // layer-two leftward birth at the diffusely reflecting wall
                let reflux = self.alpha0_xi[j] * self.comps[s].wall_flux;
                let slot = nxg - kg as i64 + mm as i64;
                let end = slot as f64 + amg2;
                let src = self.source_term_g(s, gr, 0.5 * (nxg as f64 + end));
                let c = &mut self.comps[s];
                let val = floor_tiny(reflux * dcr + src);
                c.gm[base_g + slot as usize] = val;
                if val != 0.0 {
                    c.sp_gm[p].add_point(slot);
                }
                c.h_g[slot as usize] += hcoef * val;
                if val != 0.0 {
                    c.h_span_g.add_point(slot);
                }
            }
        }

        // drop sub-floor tails so value ranges track the reachable support
        for s in 0..nc {
            let base_f = p * self.nxf;
            let base_g = p * self.nxg;
            let c = &mut self.comps[s];
            trim_span(&mut c.fp[base_f..base_f + self.nxf], &mut c.sp_fp[p]);
            trim_span(&mut c.fm[base_f..base_f + self.nxf], &mut c.sp_fm[p]);
            trim_span(&mut c.gp[base_g..base_g + self.nxg], &mut c.sp_gp[p]);
            trim_span(&mut c.gm[base_g..base_g + self.nxg], &mut c.sp_gm[p]);
        }

        // trace assembly between consecutive boundary events
        if kf > 0 {
            let w = self.pair_w[p];
            let meas = self
                .meas
                .as_ref()
                .map(|mc| (mc.spec.pair_weight()[p], mc.t_lo, mc.t_hi));
            for mm in 0..kf {
                let tm = self.sc_tf[mm];
                if let Some(res) = self.resolved.as_mut() {
                    let mut vsum = 0.0;
                    let mut psum = 0.0;
                    for s in 0..nc {
                        vsum += self.sc_exit_tr[s * kf + mm];
                        psum += self.comps[s].prev_v[p];
                    }
                    fill_linear(
                        res,
                        self.n_pairs,
                        p,
                        self.dt,
                        self.n_steps,
                        self.prev_t[p],
                        psum,
                        tm,
                        vsum,
                        1.0,
                    );
                }
                for s in 0..nc {
                    let v2 = self.sc_exit_tr[s * kf + mm];
                    let v1 = self.comps[s].prev_v[p];
                    if v1 != 0.0 || v2 != 0.0 {
                        fill_linear(
                            &mut self.comps[s].trace,
                            1,
                            0,
                            self.dt,
                            self.n_steps,
                            self.prev_t[p],
                            v1,
                            tm,
                            v2,
                            w,
                        );
                        if let Some((mw, mlo, mhi)) = meas {
                            if mw != 0.0 && tm > mlo && self.prev_t[p] < mhi {
                                let spec = &self.meas.as_ref().unwrap().spec;
                                let add = mw
                                    * window_weighted_integral(
                                        spec,
                                        self.prev_t[p],
                                        v1,
                                        tm,
                                        v2,
                                        mlo,
                                        mhi,
                                    );
                                self.comps[s].m_acc += add;
                            }
                        }
                    }
                    self.comps[s].prev_v[p] = v2;
                }
                self.prev_t[p] = tm;
            }
        }
        Ok(())
    }

    fn source_term_f(&self, s: usize, gain_xi: f64, pos: f64) -> f64 {
        if self.src_f_span[s].is_empty() || gain_xi == 0.0 {
            0.0
        } else {
            gain_xi * interp_clamped(&self.src_f[s], pos)
        }
    }

    fn source_term_g(&self, s: usize, gain_xi: f64, pos: f64) -> f64 {
        if self.src_g_span[s].is_empty() || gain_xi == 0.0 {
            0.0
        } else {
            gain_xi * interp_clamped(&self.src_g[s], pos)
        }
    }

    /// Midpoint-rule accumulation of the boundary-data integrals used by
    /// the a priori bounds.
    fn accumulate_boundary_integrals(&mut self, t: f64, m: &MaterialModel, phi: &BoundaryData) {
        let tm = t + 0.5 * self.dt;
        let (mut flux, mut norm, mut lp) = (0.0, 0.0, 0.0);
        let p_exp = self.opts.lp_exponent;
        let eval_pair = |p: usize| -> f64 {
            let j = self.pair_j[p] as usize;
            phi.eval(tm, self.pair_mu[p], m.grid().nodes()[j], m)
        };
        match &self.support_pairs {
            Some(list) => {
                for &p32 in list {
                    let p = p32 as usize;
                    let v = eval_pair(p);
                    if v != 0.0 {
                        let j = self.pair_j[p] as usize;
                        flux += self.pair_wflux[p] * v.abs();
                        norm += self.pair_w[p] * v.abs();
                        lp += self.pair_w[p] * self.xi[j].powf(1.0 - p_exp) * v.abs().powf(p_exp);
                    }
                }
            }
            None => {
                for p in 0..self.n_pairs {
                    let v = eval_pair(p);
                    if v != 0.0 {
                        let j = self.pair_j[p] as usize;
                        flux += self.pair_wflux[p] * v.abs();
                        norm += self.pair_w[p] * v.abs();
                        lp += self.pair_w[p] * self.xi[j].powf(1.0 - p_exp) * v.abs().powf(p_exp);
                    }
                }
            }
        }
        self.l1_state_flux += self.dt * flux;
        self.l1_state_norm += self.dt * norm;
        self.lp_rhs += self.dt * lp;
    }

    fn record_norms(&mut self, t: f64) {
        let p_exp = self.opts.lp_exponent;
        let g_weight = self.gamma0.powf(1.0 - p_exp);
        let mut l1 = 0.0;
        let mut lp = 0.0;
        for c in &self.comps {
            for p in 0..self.n_pairs {
                let j = self.pair_j[p] as usize;
                let w = self.pair_w[p];
                let xpw = self.xi[j].powf(1.0 - p_exp);
                for (buf, span, dx, nx, eq_weight) in [
                    (&c.fp, c.sp_fp[p], self.dxf, self.nxf, 1.0),
                    (&c.fm, c.sp_fm[p], self.dxf, self.nxf, 1.0),
                    (&c.gp, c.sp_gp[p], self.dxg, self.nxg, g_weight),
                    (&c.gm, c.sp_gm[p], self.dxg, self.nxg, g_weight),
                ] {
                    if span.is_empty() {
                        continue;
                    }
                    let lo = span.lo.max(0) as usize;
                    let hi = span.hi.min(nx as i64 - 1) as usize;
                    let base = p * nx;
                    let mut s1 = 0.0;
                    let mut sp = 0.0;
                    for &v in &buf[base + lo..=base + hi] {
                        let a = v.abs();
                        s1 += a;
                        sp += a.powf(p_exp);
                    }
                    l1 += w * dx * s1;
                    lp += w * dx * xpw * eq_weight * sp;
                }
            }
        }
        self.norms.push(super::NormSample {
            t,
            l1_state: l1,
            l1_bound_flux: self.l1_state_flux,
            l1_bound_norm: self.l1_state_norm,
            lp_state: lp.powf(1.0 / p_exp),
            lp_rhs_integral: self.lp_rhs,
        });
    }

    fn update_extrema(&mut self) {
        let rep = self.extrema.as_mut().unwrap();
        for p in 0..self.n_pairs {
            let j = self.pair_j[p] as usize;
            let inv_xi = 1.0 / self.xi[j];
            // component sum per slot (single component in practice; the
            // recorder is used on plain runs)
            for (sel, nx) in [(0usize, self.nxf), (1, self.nxf), (2, self.nxg), (3, self.nxg)] {
                let base = p * nx;
                for i in 0..nx {
                    let mut v = 0.0;
                    for c in &self.comps {
                        let buf = match sel {
                            0 => &c.fp,
                            1 => &c.fm,
                            2 => &c.gp,
                            _ => &c.gm,
                        };
                        v += buf[base + i];
                    }
                    if v < rep.min_value {
                        rep.min_value = v;
                    }
                    let scaled = v * inv_xi;
                    if sel < 2 {
                        if scaled > rep.max_f_over_xi {
                            rep.max_f_over_xi = scaled;
                        }
                    } else if scaled > rep.max_g_over_xi {
                        rep.max_g_over_xi = scaled;
                    }
                }
            }
        }
    }

    /// Extend every per-pair trace to the end of the run by holding the
    /// last boundary event value.
    pub(super) fn flush_traces(&mut self) {
        let t_close = (self.n_steps as f64 + 1.0) * self.dt;
        for p in 0..self.n_pairs {
            let w = self.pair_w[p];
            if let Some(res) = self.resolved.as_mut() {
                let mut psum = 0.0;
                for s in 0..self.comps.len() {
                    psum += self.comps[s].prev_v[p];
                }
                fill_linear(
                    res,
                    self.n_pairs,
                    p,
                    self.dt,
                    self.n_steps,
                    self.prev_t[p],
                    psum,
                    t_close,
                    psum,
                    1.0,
                );
            }
            let meas = self
                .meas
                .as_ref()
                .map(|mc| (mc.spec.pair_weight()[p], mc.t_lo, mc.t_hi));
            for s in 0..self.comps.len() {
                let v = self.comps[s].prev_v[p];
                if v != 0.0 {
                    fill_linear(
                        &mut self.comps[s].trace,
                        1,
                        0,
                        self.dt,
                        self.n_steps,
                        self.prev_t[p],
                        v,
                        t_close,
                        v,
                        w,
                    );
                    // close out any window overlap past the last event,
                    // holding the final value
                    let t_end = self.n_steps as f64 * self.dt;
                    if let Some((mw, mlo, mhi)) = meas {
                        if mw != 0.0 && t_end > mlo && self.prev_t[p] < mhi {
                            let spec = &self.meas.as_ref().unwrap().spec;
                            let add = mw
                                * window_weighted_integral(
                                    spec,
                                    self.prev_t[p],
                                    v,
                                    t_end,
                                    v,
                                    mlo,
                                    mhi,
                                );
                            self.comps[s].m_acc += add;
                        }
                    }
                }
            }
            self.prev_t[p] = t_close;
        }
    }

    pub(super) fn component_trace(&self, s: usize) -> &[f64] {
        &self.comps[s].trace
    }

    pub(super) fn resolved_trace(&self) -> Option<&[f64]> {
        self.resolved.as_deref()
    }

    pub(super) fn take_boundary_series(&mut self) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
        (self.interface_series.take(), self.wall_series.take())
    }

    pub(super) fn extract_state(&self, s: usize, t: f64) -> super::PhononState {
        let c = &self.comps[s];
        super::PhononState {
            t,
            n_half: self.n_pairs / self.tau_len_guard(),
            n_omega: self.tau_len_guard(),
            nx_left: self.nxf,
            nx_right: self.nxg,
            f_plus: c.fp.clone(),
            f_minus: c.fm.clone(),
            g_plus: c.gp.clone(),
            g_minus: c.gm.clone(),
        }
    }

    fn tau_len_guard(&self) -> usize {
        self.tau.len()
    }
}

fn lattice_value(buf: &[f64], span: Span, slot: i64) -> f64 {
    if slot < span.lo || slot > span.hi {
        0.0
    } else {
        buf[slot as usize]
    }
}

fn fill_scaled(dst: &mut [f64], src: &[f64], span: Span, scale: f64) {
    if span.is_empty() {
        return;
    }
    let lo = span.lo.max(0) as usize;
    let hi = span.hi.min(src.len() as i64 - 1) as usize;
    for i in lo..=hi {
        dst[i] = src[i] * scale;
    }
}

fn fill_scaled_sum(dst: &mut [f64], a: &[f64], b: &[f64], span: Span, scale: f64) {
    if span.is_empty() {
        return;
    }
    let lo = span.lo.max(0) as usize;
    let hi = span.hi.min(a.len() as i64 - 1) as usize;
    for i in lo..=hi {
        dst[i] = (a[i] + b[i]) * scale;
    }
}

/// Add the linear interpolant between two boundary events onto the trace
/// samples strictly after `t1` and up to `t2`, scaled by `w`. `stride` and
/// `col` address interleaved per-pair storage; the plain trace uses stride
/// one, column zero.
#[allow(clippy::too_many_arguments)]
fn fill_linear(
    out: &mut [f64],
    stride: usize,
    col: usize,
    dt: f64,
    n_last: usize,
    t1: f64,
    v1: f64,
    t2: f64,
    v2: f64,
    w: f64,
) {
    if t2 <= t1 {
        return;
    }
    let n_lo = (t1 / dt).floor() as i64 + 1;
    let mut n_hi = (t2 / dt).floor() as i64;
    if n_hi > n_last as i64 {
        n_hi = n_last as i64;
    }
    if n_lo > n_hi {
        return;
    }
    let slope = (v2 - v1) / (t2 - t1);
    for n in n_lo..=n_hi {
        let tt = n as f64 * dt;
        out[n as usize * stride + col] += w * (v1 + slope * (tt - t1));
    }
}

/// Advance a rightward lattice: survivors shift up by `k` slots, decay,
/// and absorb the drive interpolated at their path midpoints; the bracket
/// accumulator collects the post-step values.
#[allow(clippy::too_many_arguments)]
fn sweep_right(
    buf: &mut [f64],
    span: &mut Span,
    k: usize,
    decay: f64,
    gain_xi: f64,
    src: Option<(&[f64], Span, f64)>,
    h: &mut [f64],
    hcoef: f64,
    h_span: &mut Span,
) {
    let nx = buf.len() as i64;
    let k64 = k as i64;
    let shifted = span.shift(k64).clamp(k64, nx - 1);
    let stale = span.clamp(k64, nx - 1);
    let src_slots = match src {
        Some((_, ss, r0)) => {
            let s0 = (r0 - 0.5).floor() as i64;
            Span::of(ss.lo - 1 - s0, ss.hi + 1 - s0).clamp(k64, nx - 1)
        }
        None => Span::empty(),
    };
    let sweep = shifted.hull(stale).hull(src_slots);
    if sweep.is_empty() {
        *span = Span::empty();
        return;
    }
    let (lo, hi) = (sweep.lo as usize, sweep.hi as usize);
    match src {
        None => {
            for jj in (lo..=hi).rev() {
                let nv = buf[jj - k] * decay;
                buf[jj] = nv;
                h[jj] += hcoef * nv;
            }
        }
        Some((arr, _, r0)) => {
            let base = r0 - 0.5;
            let s0 = base.floor();
            let w1 = base - s0;
            let s0 = s0 as i64;
            let n_src = arr.len() as i64;
            let g1 = gain_xi * (1.0 - w1);
            let g2 = gain_xi * w1;
            for jj in (lo..=hi).rev() {
                let i0 = (jj as i64 + s0).clamp(0, n_src - 1) as usize;
                let i1 = (jj as i64 + s0 + 1).clamp(0, n_src - 1) as usize;
                let nv = buf[jj - k] * decay + g1 * arr[i0] + g2 * arr[i1];
                buf[jj] = nv;
                h[jj] += hcoef * nv;
            }
        }
    }
    *span = shifted.hull(src_slots);
    *h_span = h_span.hull(sweep);
}

/// Advance a leftward lattice: survivors shift down by `k` slots.
#[allow(clippy::too_many_arguments)]
fn sweep_left(
    buf: &mut [f64],
    span: &mut Span,
    k: usize,
    decay: f64,
    gain_xi: f64,
    src: Option<(&[f64], Span, f64)>,
    h: &mut [f64],
    hcoef: f64,
    h_span: &mut Span,
) {
    let nx = buf.len() as i64;
    let k64 = k as i64;
    let top = nx - 1 - k64;
    let shifted = span.shift(-k64).clamp(0, top);
    let stale = span.clamp(0, top);
    let src_slots = match src {
        Some((_, ss, r0)) => {
            let s0 = (r0 - 0.5).floor() as i64;
            Span::of(ss.lo - 1 - s0, ss.hi + 1 - s0).clamp(0, top)
        }
        None => Span::empty(),
    };
    let sweep = shifted.hull(stale).hull(src_slots);
    if sweep.is_empty() {
        *span = Span::empty();
        return;
    }
    let (lo, hi) = (sweep.lo as usize, sweep.hi as usize);
    match src {
        None => {
            for jj in lo..=hi {
                let nv = buf[jj + k] * decay;
                buf[jj] = nv;
                h[jj] += hcoef * nv;
            }
        }
        Some((arr, _, r0)) => {
            let base = r0 - 0.5;
            let s0 = base.floor();
            let w1 = base - s0;
            let s0 = s0 as i64;
            let n_src = arr.len() as i64;
            let g1 = gain_xi * (1.0 - w1);
            let g2 = gain_xi * w1;
            for jj in lo..=hi {
                let i0 = (jj as i64 + s0).clamp(0, n_src - 1) as usize;
                let i1 = (jj as i64 + s0 + 1).clamp(0, n_src - 1) as usize;
                let nv = buf[jj + k] * decay + g1 * arr[i0] + g2 * arr[i1];
                buf[jj] = nv;
                h[jj] += hcoef * nv;
            }
        }
    }
    *span = shifted.hull(src_slots);
    *h_span = h_span.hull(sweep);
}
