//! Two-layer transport kernel with interface exchange and a diffuse far
//! wall.
//!
//! The kernel advances the occupation perturbations `f` on the near layer
//! `x in [0, 1]` and `g` on the far layer `x in [1, L]` under drift along
//! `mu v(omega)`, relaxation toward the weighted angular average, partial
//! reflection and transmission at the junction, and diffuse re-emission at
//! the wall. Propagation is exact along characteristics: each ordinate
//! pair owns rigidly drifting node lattices, boundary couplings fire at
//! the exact crossing times, and the relaxation term uses the exponential
//! integrating factor with the time-lagged angular average as its target.
//! The outgoing boundary record at `x = 0` is assembled from the exact
//! crossing events of every ordinate, then sampled on the uniform step
//! grid, which keeps narrow returning pulses intact even when their transit
//! time is not a multiple of the step.
//!
//! Runs can be decomposed: the never-scattered part of the field, the
//! scattered remainder, and optionally the part re-entering the near layer
//! from the far layer are advanced side by side under the same events, and
//! their sum reproduces the plain run to rounding accuracy.

mod engine;

use crate::analytic::{BumpFunction, Probe};
use crate::error::PhonoxError;
use crate::interface::InterfaceCoefficients;
use crate::material::MaterialModel;
use crate::quadrature::AngularQuadrature;
use crate::Result;
use engine::Engine;
use std::fmt;
use std::sync::Arc;

/// Uniform cell layout of the two layers; the junction `x = 1` is a cell
/// face of both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    nx_left: usize,
    nx_right: usize,
    length: f64,
}

impl SpatialGrid {
    pub fn new(nx_left: usize, nx_right: usize, length: f64) -> Result<Self> {
        if nx_left < 2 || nx_right < 2 {
            return Err(PhonoxError::Config(format!(
                "each layer needs at least two cells, got {nx_left} and {nx_right}"
            )));
        }
        if !(length > 1.0) || !length.is_finite() {
            return Err(PhonoxError::Config(format!(
                "domain length must exceed the junction position 1, got {length}"
            )));
        }
        Ok(SpatialGrid {
            nx_left,
            nx_right,
            length,
        })
    }

    pub fn nx_left(&self) -> usize {
        self.nx_left
    }

    pub fn nx_right(&self) -> usize {
        self.nx_right
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx_left(&self) -> f64 {
        1.0 / self.nx_left as f64
    }

    pub fn dx_right(&self) -> f64 {
        (self.length - 1.0) / self.nx_right as f64
    }

    /// Whether the two layers share one cell width bitwise; when they do,
    /// interface exits and births pair up at identical crossing times.
    pub fn equal_spacing(&self) -> bool {
        self.dx_left() == self.dx_right()
    }
}

/// Which parts of the field a run advances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// The plain coupled system.
    Full,
    /// Relaxation gain switched off and no far-to-near transmission: the
    /// never-scattered part of the field alone.
    Ballistic,
    /// Never-scattered part and scattered remainder side by side; with
    /// `instrument` the far-layer re-entry contribution is split into its
    /// own third component.
    Composite { instrument: bool },
}

/// Initial data of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialState {
    /// Both layers empty (the standard probing setup).
    #[default]
    Zero,
    /// Both layers on their equilibrium pair (validation runs).
    Equilibrium,
}

/// Windowed boundary functional: the outgoing record integrated over all
/// directions and frequencies against a time window centered on the
/// ballistic return time and scaled to the pulse width. Accumulated
/// exactly over the boundary crossing events while the run advances, so no
/// per-ordinate record needs to be stored.
#[derive(Debug, Clone)]
pub struct MeasurementSpec {
    t1: f64,
    epsilon: f64,
    window: BumpFunction,
    pair_weight: Vec<f64>,
}

impl MeasurementSpec {
    pub fn new(
        t1: f64,
        epsilon: f64,
        window: BumpFunction,
        q: &AngularQuadrature,
        m: &MaterialModel,
    ) -> Self {
        let n_omega = m.grid().len();
        let mut pair_weight = Vec::with_capacity(q.half_nodes().len() * n_omega);
        for &wk in q.half_weights() {
            for j in 0..n_omega {
                pair_weight.push(wk * m.grid().weights()[j]);
            }
        }
        MeasurementSpec {
            t1,
            epsilon,
            window,
            pair_weight,
        }
    }

    /// Window placed at a probe's return time with the probe's width.
    pub fn for_probe(
        probe: &Probe,
        window: BumpFunction,
        q: &AngularQuadrature,
        m: &MaterialModel,
    ) -> Self {
        MeasurementSpec::new(probe.spec.t1, probe.spec.epsilon, window, q, m)
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Absolute time support of the shifted window.
    pub fn window_support(&self) -> (f64, f64) {
        let (lo, hi) = self.window.support();
        (self.t1 + lo * self.epsilon, self.t1 + hi * self.epsilon)
    }

    /// Window factor at absolute time `t`.
    pub fn window_at(&self, t: f64) -> f64 {
        self.window.eval((t - self.t1) / self.epsilon)
    }

    /// Combined weight and test factors per ordinate pair.
    pub fn pair_weight(&self) -> &[f64] {
        &self.pair_weight
    }
}

/// Optional recorders and mode switches of a run.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub mode: RunMode,
    pub initial: InitialState,
    /// Keep the per-ordinate outgoing record (large; desk-scale runs only).
    pub record_resolved: bool,
    /// Record state norms and boundary-data integrals every this many steps.
    pub norms_every: Option<usize>,
    /// Exponent of the weighted norm recorder.
    pub lp_exponent: f64,
    /// Track the global minimum and the equilibrium-scaled maxima.
    pub track_extrema: bool,
    /// Record weighted interface and wall series.
    pub record_boundary_series: bool,
    /// Accumulate a windowed boundary functional per component.
    pub measurement: Option<MeasurementSpec>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            mode: RunMode::Full,
            initial: InitialState::Zero,
            record_resolved: false,
            norms_every: None,
            lp_exponent: 2.0,
            track_extrema: false,
            record_boundary_series: false,
            measurement: None,
        }
    }
}

/// Incoming datum on `mu > 0` at the measured surface.
#[derive(Clone)]
pub enum BoundaryData {
    /// No inflow.
    Zero,
    /// `amplitude * xi(omega)`, the saturating equilibrium inflow.
    Equilibrium(f64),
    /// The concentrated pulse.
    Probe(crate::analytic::Probe),
    /// Arbitrary closure; set `nonnegative` only when the datum is known
    /// to be nonnegative, which arms the inflow sign check.
    Custom {
        f: Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>,
        nonnegative: bool,
    },
}

impl fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryData::Zero => write!(f, "BoundaryData::Zero"),
            BoundaryData::Equilibrium(a) => write!(f, "BoundaryData::Equilibrium({a})"),
            BoundaryData::Probe(p) => write!(f, "BoundaryData::Probe({:?})", p.spec),
            BoundaryData::Custom { nonnegative, .. } => {
                write!(f, "BoundaryData::Custom {{ nonnegative: {nonnegative} }}")
            }
        }
    }
}

impl BoundaryData {
    pub fn custom(f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        BoundaryData::Custom {
            f: Arc::new(f),
            nonnegative: false,
        }
    }

    pub fn custom_nonnegative(f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        BoundaryData::Custom {
            f: Arc::new(f),
            nonnegative: true,
        }
    }

    pub fn eval(&self, t: f64, mu: f64, omega: f64, m: &MaterialModel) -> f64 {
        match self {
            BoundaryData::Zero => 0.0,
            BoundaryData::Equilibrium(a) => a * m.xi_at(omega),
            BoundaryData::Probe(p) => p.eval(t, mu, omega),
            BoundaryData::Custom { f, .. } => f(t, mu, omega),
        }
    }

    pub fn declares_nonnegative(&self) -> bool {
        match self {
            BoundaryData::Zero | BoundaryData::Probe(_) => true,
            BoundaryData::Equilibrium(a) => *a >= 0.0,
            BoundaryData::Custom { nonnegative, .. } => *nonnegative,
        }
    }

    /// Ordinate pairs on which the datum can be nonzero, or `None` when it
    /// may touch all of them. Pairs are indexed `k * n_omega + j`.
    pub fn support_pairs(&self, q: &AngularQuadrature, m: &MaterialModel) -> Option<Vec<u32>> {
        match self {
            BoundaryData::Zero => Some(Vec::new()),
            BoundaryData::Probe(p) => {
                let e = p.spec.epsilon;
                let n_omega = m.grid().len();
                let mut out = Vec::new();
                for (k, &mu) in q.half_nodes().iter().enumerate() {
                    if p.bump.eval((mu - p.spec.mu0) / e) == 0.0 {
                        continue;
                    }
                    for (j, &om) in m.grid().nodes().iter().enumerate() {
                        if p.bump.eval((om - p.spec.omega0) / e) != 0.0 {
                            out.push((k * n_omega + j) as u32);
                        }
                    }
                }
                Some(out)
            }
            _ => None,
        }
    }
}

/// Per-ordinate outgoing record at the measured surface, sampled on the
/// step grid; row `n` holds one value per ordinate pair.
#[derive(Debug, Clone)]
pub struct ResolvedTrace {
    pub n_pairs: usize,
    pub samples: Vec<f64>,
}

impl ResolvedTrace {
    pub fn row(&self, n: usize) -> &[f64] {
        &self.samples[n * self.n_pairs..(n + 1) * self.n_pairs]
    }
}

/// Time series of the weighted outgoing boundary sum at `x = 0` on the
/// uniform step grid, with optional per-ordinate, interface, and wall
/// records.
#[derive(Debug, Clone)]
pub struct BoundaryTrace {
    dt: f64,
    values: Vec<f64>,
    resolved: Option<ResolvedTrace>,
    interface_record: Option<Vec<f64>>,
    wall_record: Option<Vec<f64>>,
}

impl BoundaryTrace {
    pub fn from_values(dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || values.is_empty() {
            return Err(PhonoxError::Config(
                "a boundary trace needs a positive step and at least one sample".into(),
            ));
        }
        Ok(BoundaryTrace {
            dt,
            values,
            resolved: None,
            interface_record: None,
            wall_record: None,
        })
    }

    /// Sample a closed-form outgoing sum on a uniform grid; calibration
    /// helper for measurement tests.
    pub fn from_fn(dt: f64, n_steps: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..=n_steps).map(|n| f(n as f64 * dt)).collect();
        BoundaryTrace::from_values(dt, values)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn end_time(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |n| n as f64 * self.dt)
    }

    /// Whether the sampled window contains `[t_lo, t_hi]`.
    pub fn covers(&self, t_lo: f64, t_hi: f64) -> bool {
        t_lo >= -1e-9 * self.dt && t_hi <= self.end_time() + 1e-9 * self.dt
    }

    pub fn resolved(&self) -> Option<&ResolvedTrace> {
        self.resolved.as_ref()
    }

    pub fn interface_record(&self) -> Option<&[f64]> {
        self.interface_record.as_deref()
    }

    pub fn wall_record(&self) -> Option<&[f64]> {
        self.wall_record.as_deref()
    }
}

/// Field samples of one component at a fixed time, one value per
/// (ordinate pair, cell), pair-major.
#[derive(Debug, Clone)]
pub struct PhononState {
    pub t: f64,
    pub n_half: usize,
    pub n_omega: usize,
    pub nx_left: usize,
    pub nx_right: usize,
    pub f_plus: Vec<f64>,
    pub f_minus: Vec<f64>,
    pub g_plus: Vec<f64>,
    pub g_minus: Vec<f64>,
}

/// Layer selector for state queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Left,
    Right,
}

impl PhononState {
    fn arrays(&self, layer: Layer) -> (&[f64], &[f64], usize) {
        match layer {
            Layer::Left => (&self.f_plus, &self.f_minus, self.nx_left),
            Layer::Right => (&self.g_plus, &self.g_minus, self.nx_right),
        }
    }

    /// Value at (signed ordinate `mu_index` over the full range, frequency
    /// node, cell). Indices below `n_half` are the negative directions in
    /// ascending order, mirroring the angular quadrature convention.
    pub fn value(&self, layer: Layer, mu_index: usize, omega_index: usize, cell: usize) -> f64 {
        let (plus, minus, nx) = self.arrays(layer);
        if mu_index < self.n_half {
            let k = self.n_half - 1 - mu_index;
            minus[(k * self.n_omega + omega_index) * nx + cell]
        } else {
            let k = mu_index - self.n_half;
            plus[(k * self.n_omega + omega_index) * nx + cell]
        }
    }

    /// Largest absolute mismatch between this state and the slotwise sum
    /// of `parts` over all four lattices.
    pub fn difference_from_sum(&self, parts: &[&PhononState]) -> f64 {
        let mut worst = 0.0f64;
        for sel in 0..4 {
            let own: &[f64] = match sel {
                0 => &self.f_plus,
                1 => &self.f_minus,
                2 => &self.g_plus,
                _ => &self.g_minus,
            };
            for (i, &v) in own.iter().enumerate() {
                let mut s = 0.0;
                for p in parts {
                    let arr: &[f64] = match sel {
                        0 => &p.f_plus,
                        1 => &p.f_minus,
                        2 => &p.g_plus,
                        _ => &p.g_minus,
                    };
                    s += arr[i];
                }
                worst = worst.max((v - s).abs());
            }
        }
        worst
    }
}

/// One sample of the recorded state norms next to the accumulated
/// boundary-data integrals entering the a priori bounds.
#[derive(Debug, Clone, Copy)]
pub struct NormSample {
    pub t: f64,
    /// Discrete `L1` norm of the state over both layers.
    pub l1_state: f64,
    /// Accumulated incoming energy flux `int sum w mu v |phi|`.
    pub l1_bound_flux: f64,
    /// Accumulated plain boundary norm `int sum w |phi|`.
    pub l1_bound_norm: f64,
    /// Weighted `Lp` norm of the state.
    pub lp_state: f64,
    /// Accumulated `int sum w xi^(1-p) |phi|^p` (before the 1/p power).
    pub lp_rhs_integral: f64,
}

/// Global extrema tracked over a run.
#[derive(Debug, Clone, Copy)]
pub struct ExtremaReport {
    pub min_value: f64,
    pub max_f_over_xi: f64,
    pub max_g_over_xi: f64,
}

/// Everything a run hands back.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    /// Total outgoing record (components summed), with optional extras.
    pub trace: BoundaryTrace,
    /// Per-component outgoing records.
    pub component_traces: Vec<BoundaryTrace>,
    /// Per-component final states.
    pub states: Vec<PhononState>,
    pub norms: Vec<NormSample>,
    pub extrema: Option<ExtremaReport>,
    /// Windowed measurement per component (empty unless requested).
    pub measurements: Vec<f64>,
    /// Bracket of the equilibrium weight (the drive normalizer).
    pub xi_bracket: f64,
}

impl RunArtifacts {
    /// Final state of the physical field (components summed).
    pub fn total_state(&self) -> PhononState {
        let mut total = self.states[0].clone();
        for s in &self.states[1..] {
            for (a, b) in total.f_plus.iter_mut().zip(&s.f_plus) {
                *a += b;
            }
            for (a, b) in total.f_minus.iter_mut().zip(&s.f_minus) {
                *a += b;
            }
            for (a, b) in total.g_plus.iter_mut().zip(&s.g_plus) {
                *a += b;
            }
            for (a, b) in total.g_minus.iter_mut().zip(&s.g_minus) {
                *a += b;
            }
        }
        total
    }
}

/// Driver owning the stepping state of one run.
pub struct TransportSolver<'a> {
    m: &'a MaterialModel,
    coeffs: &'a InterfaceCoefficients,
    dt: f64,
    n_steps: usize,
    step_idx: usize,
    engine: Engine,
}

impl<'a> TransportSolver<'a> {
    pub fn new(
        m: &'a MaterialModel,
        q: &'a AngularQuadrature,
        coeffs: &'a InterfaceCoefficients,
        grid: SpatialGrid,
        dt: f64,
        t_end: f64,
        opts: SolverOptions,
        phi: &BoundaryData,
    ) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(PhonoxError::Config(format!(
                "time step must be positive, got {dt}"
            )));
        }
        if !(t_end >= dt) {
            return Err(PhonoxError::Config(format!(
                "final time {t_end} is shorter than one step {dt}"
            )));
        }
        if dt > m.tau0() {
            return Err(PhonoxError::Config(format!(
                "time step {dt} exceeds the shortest relaxation time {}",
                m.tau0()
            )));
        }
        let min_width = 1.0f64.min(grid.length() - 1.0);
        if m.v0() * dt > min_width {
            return Err(PhonoxError::Config(format!(
                "one step travels {} at the largest speed, crossing a layer of width {min_width}",
                m.v0() * dt
            )));
        }
        if coeffs.eta1().len() != m.grid().len() {
            return Err(PhonoxError::Config(format!(
                "interface tables have {} nodes for a grid of {}",
                coeffs.eta1().len(),
                m.grid().len()
            )));
        }
        if matches!(opts.initial, InitialState::Equilibrium) && !matches!(opts.mode, RunMode::Full)
        {
            return Err(PhonoxError::Config(
                "the equilibrium start is a validation device of the plain mode".into(),
            ));
        }
        if !(opts.lp_exponent >= 1.0) {
            return Err(PhonoxError::Config(format!(
                "norm exponent must be at least 1, got {}",
                opts.lp_exponent
            )));
        }
        let n_steps = ((t_end / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let engine = Engine::new(m, q, coeffs, &grid, dt, n_steps, &opts, phi)?;
        Ok(TransportSolver {
            m,
            coeffs,
            dt,
            n_steps,
            step_idx: 0,
            engine,
        })
    }

    pub fn t(&self) -> f64 {
        self.step_idx as f64 * self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advance one step; safe to call until the configured number of steps
    /// has been taken.
    pub fn step_once(&mut self, phi: &BoundaryData) -> Result<()> {
        if self.step_idx >= self.n_steps {
            return Err(PhonoxError::Config(
                "the configured number of steps has already been taken".into(),
            ));
        }
        self.engine.step(self.step_idx, self.m, phi)?;
        self.step_idx += 1;
        Ok(())
    }

    /// Snapshot of one component's field at the current time.
    pub fn state(&self, component: usize) -> PhononState {
        self.engine.extract_state(component, self.t())
    }

    pub fn n_components(&self) -> usize {
        self.engine.n_comps()
    }

    /// Run to the configured final time and assemble the artifacts.
    pub fn run(mut self, phi: &BoundaryData) -> Result<RunArtifacts> {
        while self.step_idx < self.n_steps {
            self.step_once(phi)?;
        }
        self.finish()
    }

    /// Assemble artifacts at the current time (flushes the trace tails).
    pub fn finish(mut self) -> Result<RunArtifacts> {
        self.engine.flush_traces();
        let n_comps = self.engine.n_comps();
        let len = self.n_steps + 1;
        let mut total = vec![0.0; len];
        let mut component_traces = Vec::with_capacity(n_comps);
        for s in 0..n_comps {
            let vals = self.engine.component_trace(s).to_vec();
            for (a, b) in total.iter_mut().zip(&vals) {
                *a += b;
            }
            component_traces.push(BoundaryTrace::from_values(self.dt, vals)?);
        }
        let resolved = self.engine.resolved_trace().map(|s| ResolvedTrace {
            n_pairs: s.len() / len,
            samples: s.to_vec(),
        });
        let (interface_record, wall_record) = self.engine.take_boundary_series();
        let mut trace = BoundaryTrace::from_values(self.dt, total)?;
        trace.resolved = resolved;
        trace.interface_record = interface_record;
        trace.wall_record = wall_record;
        let t = self.t();
        let states = (0..n_comps)
            .map(|s| self.engine.extract_state(s, t))
            .collect();
        let norms = std::mem::take(&mut self.engine.norms);
        let extrema = self.engine.extrema.take();
        let measurements = self.engine.measurements();
        Ok(RunArtifacts {
            trace,
            component_traces,
            states,
            norms,
            extrema,
            measurements,
            xi_bracket: self.engine.xi_bracket,
        })
    }

    pub fn coefficients(&self) -> &InterfaceCoefficients {
        self.coeffs
    }
}

/// Plain forward run: advance the coupled system to `t_end` and return the
/// outgoing boundary record.
pub fn run_forward(
    m: &MaterialModel,
    q: &AngularQuadrature,
    coeffs: &InterfaceCoefficients,
    phi: &BoundaryData,
    t_end: f64,
    dt: f64,
    grid: SpatialGrid,
) -> Result<BoundaryTrace> {
    let solver = TransportSolver::new(m, q, coeffs, grid, dt, t_end, SolverOptions::default(), phi)?;
    Ok(solver.run(phi)?.trace)
}

/// Weighted angular average `sum_mu sum_omega w_mu w_omega h / tau` of a
/// state column at fixed layer and cell.
pub fn bracket(
    q: &AngularQuadrature,
    m: &MaterialModel,
    state: &PhononState,
    layer: Layer,
    cell: usize,
) -> f64 {
    let (plus, minus, nx) = state.arrays(layer);
    let mut acc = 0.0;
    for (k, &wk) in q.half_weights().iter().enumerate() {
        for j in 0..state.n_omega {
            let p = k * state.n_omega + j;
            let w = wk * m.grid().weights()[j] / m.tau()[j];
            acc += w * (plus[p * nx + cell] + minus[p * nx + cell]);
        }
    }
    acc
}

/// Evaluate the incoming datum on every `mu > 0` ordinate pair at time
/// `t`, rejecting negative values when the datum declares nonnegativity.
pub fn apply_boundary_left(
    t: f64,
    q: &AngularQuadrature,
    m: &MaterialModel,
    phi: &BoundaryData,
) -> Result<Vec<f64>> {
    let n_omega = m.grid().len();
    let mut out = Vec::with_capacity(q.half_nodes().len() * n_omega);
    let check = phi.declares_nonnegative();
    for &mu in q.half_nodes() {
        for &om in m.grid().nodes() {
            let v = phi.eval(t, mu, om, m);
            if check && v < 0.0 {
                return Err(PhonoxError::Config(format!(
                    "boundary data declared nonnegative but evaluates to {v:.3e} at (t, mu, omega) = ({t}, {mu}, {om})"
                )));
            }
            out.push(v);
        }
    }
    Ok(out)
}

/// Junction exchange on pair-major half-range tables: from the incoming
/// values `f(1, mu > 0)` and `g(1, mu < 0)` produce the outgoing
/// `f(1, mu < 0)` and `g(1, mu > 0)`.
pub fn apply_interface(
    m: &MaterialModel,
    coeffs: &InterfaceCoefficients,
    f_plus: &[f64],
    g_minus: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n_omega = m.grid().len();
    if f_plus.len() != g_minus.len() || f_plus.len() % n_omega != 0 {
        return Err(PhonoxError::Config(format!(
            "interface tables must be equal pair-major half-range tables over {n_omega} frequency nodes, got lengths {} and {}",
            f_plus.len(),
            g_minus.len()
        )));
    }
    let mut f_minus = Vec::with_capacity(f_plus.len());
    let mut g_plus = Vec::with_capacity(f_plus.len());
    for (p, (&fv, &gv)) in f_plus.iter().zip(g_minus).enumerate() {
        let j = p % n_omega;
        f_minus.push(coeffs.eta1()[j] * fv + coeffs.zeta1()[j] * gv);
        g_plus.push(coeffs.eta2()[j] * fv + coeffs.zeta2()[j] * gv);
    }
    Ok((f_minus, g_plus))
}

/// Diffuse wall closure on a pair-major half-range table of `g(L, mu > 0)`:
/// the re-emitted `g(L, mu < 0)`, isotropic with the equilibrium spectral
/// shape, scaled to cancel the incident energy flux.
pub fn apply_boundary_right(
    q: &AngularQuadrature,
    m: &MaterialModel,
    coeffs: &InterfaceCoefficients,
    g_plus: &[f64],
) -> Result<Vec<f64>> {
    let n_omega = m.grid().len();
    if g_plus.len() != q.half_nodes().len() * n_omega {
        return Err(PhonoxError::Config(format!(
            "wall table has {} entries for {} ordinate pairs",
            g_plus.len(),
            q.half_nodes().len() * n_omega
        )));
    }
    let mut flux = 0.0;
    for (k, (&mu, &wk)) in q.half_nodes().iter().zip(q.half_weights()).enumerate() {
        for j in 0..n_omega {
            flux += wk * m.grid().weights()[j] * mu * m.v()[j] * g_plus[k * n_omega + j];
        }
    }
    let mut out = Vec::with_capacity(g_plus.len());
    for _ in 0..q.half_nodes().len() {
        for j in 0..n_omega {
            out.push(coeffs.alpha0() * m.xi()[j] * flux);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{f0_outgoing, BumpFunction, Probe, ProbeSpec};
    use crate::interface::derive_coefficients;
    use crate::quadrature::{Panel, SpectralGrid};
    use approx::assert_abs_diff_eq;

    fn setup(
        tau: f64,
        v: f64,
        eta1: f64,
        gamma0: f64,
    ) -> (MaterialModel, AngularQuadrature, InterfaceCoefficients) {
        let grid = SpectralGrid::gauss(4.0, 6).unwrap();
        let m = MaterialModel::constant(grid, tau, v, 1.0, 1.0, 1.2).unwrap();
        let q = AngularQuadrature::gauss(6).unwrap();
        let c = derive_coefficients(&vec![eta1; m.grid().len()], gamma0, &m, &q).unwrap();
        (m, q, c)
    }

    fn probe(m: &MaterialModel, mu0: f64, omega0: f64, eps: f64) -> BoundaryData {
        let spec = ProbeSpec::new(mu0, omega0, eps, m).unwrap();
        BoundaryData::Probe(Probe::new(spec, BumpFunction::phi0()))
    }

    #[test]
    fn grid_rejects_degenerate_layers() {
        assert!(SpatialGrid::new(1, 10, 2.0).is_err());
        assert!(SpatialGrid::new(10, 10, 1.0).is_err());
        assert!(SpatialGrid::new(10, 10, 0.5).is_err());
        let g = SpatialGrid::new(40, 60, 2.5).unwrap();
        assert_abs_diff_eq!(g.dx_left(), 0.025, epsilon = 1e-15);
        assert_abs_diff_eq!(g.dx_right(), 0.025, epsilon = 1e-15);
        assert!(g.equal_spacing());
    }

    #[test]
    fn solver_rejects_steps_crossing_a_layer_or_the_relaxation_time() {
        let (m, q, c) = setup(0.02, 1.0, 0.6, 1.0);
        let grid = SpatialGrid::new(20, 20, 2.0).unwrap();
        let err = TransportSolver::new(
            &m,
            &q,
            &c,
            grid,
            0.05,
            1.0,
            SolverOptions::default(),
            &BoundaryData::Zero,
        )
        .err()
        .unwrap();
        assert!(matches!(err, PhonoxError::Config(_)));
        let (m2, q2, c2) = setup(10.0, 50.0, 0.6, 1.0);
        let err2 = TransportSolver::new(
            &m2,
            &q2,
            &c2,
            grid,
            0.05,
            1.0,
            SolverOptions::default(),
            &BoundaryData::Zero,
        )
        .err()
        .unwrap();
        assert!(matches!(err2, PhonoxError::Config(_)));
    }

    #[test]
    fn bracket_reproduces_equilibrium_weight_total() {
        let (m, q, _) = setup(1.3, 1.0, 0.6, 1.0);
        let n_half = q.half_nodes().len();
        let n_omega = m.grid().len();
        let nx = 4;
        let mut st = PhononState {
            t: 0.0,
            n_half,
            n_omega,
            nx_left: nx,
            nx_right: nx,
            f_plus: vec![0.0; n_half * n_omega * nx],
            f_minus: vec![0.0; n_half * n_omega * nx],
            g_plus: vec![0.0; n_half * n_omega * nx],
            g_minus: vec![0.0; n_half * n_omega * nx],
        };
        // empty state has a vanishing bracket
        assert_eq!(bracket(&q, &m, &st, Layer::Left, 1), 0.0);
        // equilibrium state: the bracket equals the total angular weight,
        // because the frequency sum is normalized to one per unit weight
        for k in 0..n_half {
            for j in 0..n_omega {
                let p = k * n_omega + j;
                for i in 0..nx {
                    st.f_plus[p * nx + i] = m.xi()[j];
                    st.f_minus[p * nx + i] = m.xi()[j];
                }
            }
        }
        assert_abs_diff_eq!(bracket(&q, &m, &st, Layer::Left, 2), 2.0, epsilon = 1e-12);
        // only the rightward half filled: half the total
        for v in st.f_minus.iter_mut() {
            *v = 0.0;
        }
        assert_abs_diff_eq!(bracket(&q, &m, &st, Layer::Left, 0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn interface_examples() {
        let (m, _, c) = setup(1.0, 1.0, 0.0, 1.0);
        let n = m.grid().len();
        // eta1 = 0 and no far-layer field: nothing reflects back
        let (fm, gp) = apply_interface(&m, &c, &vec![1.0; n], &vec![0.0; n]).unwrap();
        assert!(fm.iter().all(|&x| x == 0.0));
        assert!(gp.iter().all(|&x| (x - 1.0).abs() < 1e-15));
        // equilibrium pair passes through unchanged
        let (m2, _, c2) = setup(1.0, 1.0, 0.35, 1.7);
        let f_eq: Vec<f64> = m2.xi().to_vec();
        let g_eq: Vec<f64> = m2.xi().iter().map(|x| 1.7 * x).collect();
        let (fm2, gp2) = apply_interface(&m2, &c2, &f_eq, &g_eq).unwrap();
        for j in 0..m2.grid().len() {
            assert_abs_diff_eq!(fm2[j], f_eq[j], epsilon = 1e-13 * f_eq[j].max(1e-30));
            assert_abs_diff_eq!(gp2[j], g_eq[j], epsilon = 1e-13 * g_eq[j].max(1e-30));
        }
    }

    #[test]
    fn wall_reflux_cancels_equilibrium_flux() {
        let (m, q, c) = setup(1.0, 1.0, 0.4, 2.2);
        let n_pairs = q.half_nodes().len() * m.grid().len();
        let mut g_eq = vec![0.0; n_pairs];
        for k in 0..q.half_nodes().len() {
            for (j, &xi) in m.xi().iter().enumerate() {
                g_eq[k * m.grid().len() + j] = 2.2 * xi;
            }
        }
        let out = apply_boundary_right(&q, &m, &c, &g_eq).unwrap();
        for (o, e) in out.iter().zip(&g_eq) {
            assert_abs_diff_eq!(*o, *e, epsilon = 1e-12 * e.max(1e-30));
        }
    }

    #[test]
    fn boundary_left_rejects_negative_declared_data() {
        let (m, q, _) = setup(1.0, 1.0, 0.5, 1.0);
        let bad = BoundaryData::custom_nonnegative(|t, _, _| 0.5 - t);
        let err = apply_boundary_left(3.0, &q, &m, &bad).unwrap_err();
        assert!(matches!(err, PhonoxError::Config(_)));
        let ok = apply_boundary_left(0.2, &q, &m, &bad).unwrap();
        assert!(ok.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn zero_data_stays_exactly_zero() {
        let (m, q, c) = setup(0.7, 1.0, 0.6, 1.0);
        let grid = SpatialGrid::new(16, 24, 2.5).unwrap();
        let art = TransportSolver::new(
            &m,
            &q,
            &c,
            grid,
            0.01,
            0.5,
            SolverOptions::default(),
            &BoundaryData::Zero,
        )
        .unwrap()
        .run(&BoundaryData::Zero)
        .unwrap();
        assert!(art.trace.values().iter().all(|&v| v == 0.0));
        let st = &art.states[0];
        assert!(st.f_plus.iter().all(|&v| v == 0.0));
        assert!(st.f_minus.iter().all(|&v| v == 0.0));
        assert!(st.g_plus.iter().all(|&v| v == 0.0));
        assert!(st.g_minus.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn equilibrium_is_a_discrete_fixed_point() {
        let (m, q, c) = setup(0.5, 1.0, 0.35, 1.6);
        let grid = SpatialGrid::new(24, 36, 2.5).unwrap();
        let opts = SolverOptions {
            initial: InitialState::Equilibrium,
            ..SolverOptions::default()
        };
        let phi = BoundaryData::Equilibrium(1.0);
        let dt = 0.01;
        let art = TransportSolver::new(&m, &q, &c, grid, dt, 100.0 * dt, opts, &phi)
            .unwrap()
            .run(&phi)
            .unwrap();
        let st = &art.states[0];
        let mut worst = 0.0f64;
        for k in 0..st.n_half {
            for j in 0..st.n_omega {
                let p = k * st.n_omega + j;
                let xe = m.xi()[j];
                let ge = c.gamma0() * xe;
                for i in 0..st.nx_left {
                    worst = worst.max((st.f_plus[p * st.nx_left + i] - xe).abs());
                    worst = worst.max((st.f_minus[p * st.nx_left + i] - xe).abs());
                }
                for i in 0..st.nx_right {
                    worst = worst.max((st.g_plus[p * st.nx_right + i] - ge).abs());
                    worst = worst.max((st.g_minus[p * st.nx_right + i] - ge).abs());
                }
            }
        }
        assert!(
            worst <= 1e-10,
            "equilibrium drifted by {worst:.3e} after 100 steps"
        );
    }

    #[test]
    fn free_streaming_ray_returns_after_the_round_trip() {
        // one ordinate, one frequency, mirror interface, relaxation far
        // beyond the horizon: the pulse comes back at 2/(mu v) undistorted
        let qq = AngularQuadrature::from_half_panels(&[Panel::new(0.0, 1.0, 1)]).unwrap();
        let mu = qq.half_nodes()[0];
        assert_abs_diff_eq!(mu, 0.5, epsilon = 1e-15);
        let grid_om = SpectralGrid::gauss(1.0, 1).unwrap();
        let m = MaterialModel::constant(grid_om, 1e9, 1.0, 1.0, 1.0, 1.2).unwrap();
        let c = derive_coefficients(&vec![1.0; 1], 1.0, &m, &qq).unwrap();
        let phi = probe(&m, 0.4, 0.3, 0.3);
        let grid = SpatialGrid::new(50, 50, 2.0).unwrap();
        let dt = 0.005;
        let rt = 2.0 / (mu * 1.0);
        let trace = run_forward(&m, &qq, &c, &phi, rt + 0.6, dt, grid).unwrap();
        let vals = trace.values();
        let peak = vals
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let t_peak = trace.time(peak.0);
        // pulse shape peaks at eps/2 after onset; one cell of travel slack
        let cell_time = (1.0 / 50.0) / mu;
        assert!(
            (t_peak - (rt + 0.15)).abs() <= cell_time + 2.0 * dt,
            "peak at {t_peak}, expected near {}",
            rt + 0.15
        );
        let onset = vals.iter().position(|&v| v > 1e-9 * peak.1).unwrap();
        let t_onset = trace.time(onset);
        assert!(
            (t_onset - rt).abs() <= cell_time + 2.0 * dt,
            "onset at {t_onset}, expected near {rt}"
        );
    }

    fn ballistic_error(nx: usize, dt: f64) -> (f64, f64) {
        let (m, q, c) = setup(10.0, 1.0, 0.55, 1.0);
        let phi = probe(&m, 0.45, 1.5, 0.25);
        let pr = match &phi {
            BoundaryData::Probe(p) => p.clone(),
            _ => unreachable!(),
        };
        let grid = SpatialGrid::new(nx, nx * 3 / 2, 2.5).unwrap();
        let t1 = pr.spec.t1;
        let opts = SolverOptions {
            mode: RunMode::Ballistic,
            ..SolverOptions::default()
        };
        let art = TransportSolver::new(&m, &q, &c, grid, dt, t1 + 0.4, opts, &phi)
            .unwrap()
            .run(&phi)
            .unwrap();
        let trace = &art.trace;
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for (n, &got) in trace.values().iter().enumerate() {
            let t = trace.time(n);
            let mut want = 0.0;
            for (k, &mu) in q.half_nodes().iter().enumerate() {
                let wk = q.half_weights()[k];
                for (j, &om) in m.grid().nodes().iter().enumerate() {
                    let w = wk * m.grid().weights()[j];
                    want += w * f0_outgoing(t, -mu, om, c.eta1()[j], &m, &pr);
                }
            }
            scale = scale.max(want.abs());
            worst = worst.max((got - want).abs());
        }
        (worst, scale)
    }

    #[test]
    fn ballistic_trace_matches_the_closed_form() {
        let (err, scale) = ballistic_error(60, 0.004);
        let dx = 1.0 / 60.0;
        assert!(
            err <= 5.0 * (dx + 0.004) * scale,
            "error {err:.3e} against scale {scale:.3e}"
        );
    }

    #[test]
    fn halving_the_grid_tightens_the_ballistic_error() {
        let (e1, _) = ballistic_error(60, 0.004);
        let (e2, _) = ballistic_error(120, 0.002);
        assert!(
            e1 / e2 >= 1.8,
            "refinement only improved the error by {:.2}",
            e1 / e2
        );
    }

    #[test]
    fn composite_components_sum_to_the_plain_run() {
        // short far layer so transmission, wall reflux, and re-entry are
        // all active inside the horizon
        let (m, q, c) = setup(0.8, 1.0, 0.6, 1.0);
        let phi = probe(&m, 0.45, 1.5, 0.25);
        let grid = SpatialGrid::new(40, 16, 1.4).unwrap();
        let dt = 0.005;
        let t_end = 4.8;
        let full = TransportSolver::new(
            &m,
            &q,
            &c,
            grid,
            dt,
            t_end,
            SolverOptions::default(),
            &phi,
        )
        .unwrap()
        .run(&phi)
        .unwrap();
        let opts = SolverOptions {
            mode: RunMode::Composite { instrument: true },
            ..SolverOptions::default()
        };
        let comp = TransportSolver::new(&m, &q, &c, grid, dt, t_end, opts, &phi)
            .unwrap()
            .run(&phi)
            .unwrap();
        assert_eq!(comp.states.len(), 3);
        let parts: Vec<&PhononState> = comp.states.iter().collect();
        let state_gap = full.states[0].difference_from_sum(&parts);
        assert!(
            state_gap <= 1e-8,
            "components miss the plain state by {state_gap:.3e}"
        );
        let trace_gap = full
            .trace
            .values()
            .iter()
            .zip(comp.trace.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(
            trace_gap <= 1e-8,
            "component traces miss the plain trace by {trace_gap:.3e}"
        );
    }

    #[test]
    fn reentry_instrument_is_dark_when_the_wall_is_out_of_reach() {
        let (m, q, c) = setup(0.8, 1.0, 0.6, 1.0);
        let phi = probe(&m, 0.45, 1.5, 0.25);
        let grid = SpatialGrid::new(30, 90, 4.0).unwrap();
        let opts = SolverOptions {
            mode: RunMode::Composite { instrument: true },
            ..SolverOptions::default()
        };
        let art = TransportSolver::new(&m, &q, &c, grid, 0.01, 5.0, opts, &phi)
            .unwrap()
            .run(&phi)
            .unwrap();
        assert!(art.component_traces[2].values().iter().all(|&v| v == 0.0));
        let st = &art.states[2];
        assert!(st.f_plus.iter().all(|&v| v == 0.0));
        assert!(st.f_minus.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn probe_run_respects_positivity_and_the_saturation_cap() {
        let (m, q, c) = setup(0.6, 1.0, 0.55, 1.3);
        let phi = probe(&m, 0.4, 1.2, 0.3);
        let grid = SpatialGrid::new(30, 45, 2.5).unwrap();
        let opts = SolverOptions {
            track_extrema: true,
            ..SolverOptions::default()
        };
        let art = TransportSolver::new(&m, &q, &c, grid, 0.005, 3.0, opts, &phi)
            .unwrap()
            .run(&phi)
            .unwrap();
        let ex = art.extrema.unwrap();
        assert!(ex.min_value >= -1e-12, "minimum {:.3e}", ex.min_value);
        // saturation level: largest phi / xi over the sampled ordinates
        let mut m0 = 0.0f64;
        for &mu in q.half_nodes() {
            for (j, &om) in m.grid().nodes().iter().enumerate() {
                let mut t = 0.0;
                while t < 0.31 {
                    m0 = m0.max(phi.eval(t, mu, om, &m) / m.xi()[j]);
                    t += 0.002;
                }
            }
        }
        assert!(
            ex.max_f_over_xi <= m0 * (1.0 + 1e-6),
            "near-layer cap violated: {:.6e} > {:.6e}",
            ex.max_f_over_xi,
            m0
        );
        assert!(
            ex.max_g_over_xi <= c.gamma0() * m0 * (1.0 + 1e-6),
            "far-layer cap violated: {:.6e}",
            ex.max_g_over_xi
        );
    }

    #[test]
    fn runs_are_bitwise_deterministic() {
        let (m, q, c) = setup(0.8, 1.0, 0.6, 1.0);
        let phi = probe(&m, 0.45, 1.5, 0.25);
        let grid = SpatialGrid::new(30, 30, 2.0).unwrap();
        let run = || {
            TransportSolver::new(
                &m,
                &q,
                &c,
                grid,
                0.005,
                2.0,
                SolverOptions::default(),
                &phi,
            )
            .unwrap()
            .run(&phi)
            .unwrap()
        };
        let a = run();
        let b = run();
        for (x, y) in a.trace.values().iter().zip(b.trace.values()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        for (x, y) in a.states[0].f_minus.iter().zip(&b.states[0].f_minus) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn non_finite_inflow_is_reported_with_its_step() {
        let (m, q, c) = setup(0.8, 1.0, 0.6, 1.0);
        let bad = BoundaryData::custom(|t, _, _| if t > 0.1 { f64::NAN } else { 0.0 });
        let grid = SpatialGrid::new(20, 20, 2.0).unwrap();
        let err = TransportSolver::new(
            &m,
            &q,
            &c,
            grid,
            0.01,
            1.0,
            SolverOptions::default(),
            &bad,
        )
        .unwrap()
        .run(&bad)
        .unwrap_err();
        match err {
            PhonoxError::Numerical { step, .. } => assert!(step >= 10, "flagged step {step}"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn norm_recorder_tracks_the_injected_energy_budget() {
        let (m, q, c) = setup(0.8, 1.0, 0.6, 1.0);
        let phi = probe(&m, 0.45, 1.5, 0.25);
        let grid = SpatialGrid::new(40, 40, 2.0).unwrap();
        let opts = SolverOptions {
            norms_every: Some(10),
            ..SolverOptions::default()
        };
        let art = TransportSolver::new(&m, &q, &c, grid, 0.005, 1.5, opts, &phi)
            .unwrap()
            .run(&phi)
            .unwrap();
        assert!(!art.norms.is_empty());
        // during pulse entry the cellwise norm oversamples the steep tail
        // (node spacing dx/c against a rising bump), so the budget check
        // starts once the pulse is fully inside
        for s in art.norms.iter().filter(|s| s.t >= 0.3) {
            let bound = s.l1_bound_flux.min(s.l1_bound_norm);
            assert!(
                s.l1_state <= bound * (1.0 + 1e-3) + 1e-12,
                "t = {}: state norm {:.6e} above budget {:.6e}",
                s.t,
                s.l1_state,
                bound
            );
        }
        // after the pulse has fully entered, most of the budget is present
        let last = art.norms.last().unwrap();
        assert!(last.l1_state > 0.5 * last.l1_bound_flux);
    }

    #[test]
    fn trace_sampling_is_uniform_and_covers_the_window() {
        let (m, q, c) = setup(1.0, 1.0, 0.6, 1.0);
        let grid = SpatialGrid::new(16, 16, 2.0).unwrap();
        let trace = run_forward(&m, &q, &c, &BoundaryData::Zero, 1.0, 0.01, grid).unwrap();
        assert_eq!(trace.len(), 101);
        let times: Vec<f64> = trace.times().collect();
        for (n, &t) in times.iter().enumerate() {
            assert_abs_diff_eq!(t, n as f64 * 0.01, epsilon = 1e-12);
        }
        assert!(trace.covers(0.2, 0.9));
        assert!(!trace.covers(0.2, 1.2));
    }
}
