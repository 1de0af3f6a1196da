//! Command-line driver for the two-layer transport solver and the
//! interface-reflectance reconstruction pipeline.
//!
//! Five commands share one JSON run description: `simulate` advances the
//! coupled system and writes the per-ordinate outgoing trace, `probe`
//! launches the shrinking-pulse experiment and writes the windowed
//! measurement records, `reconstruct` extrapolates those records to a
//! reflectance estimate and the derived coefficient table, `validate`
//! checks the a priori bounds and admissibility assumptions on a fresh
//! run, and `sweep` repeats the experiment across a list of carrier
//! frequencies with one output directory per carrier.
//!
//! Every output directory receives an echo of the fully resolved
//! configuration, and reruns with the same config and seed produce
//! byte-identical files: metadata carries grid, step, and material hash
//! but no timestamps. Exit codes separate configuration mistakes (2),
//! numerical failures (3), and admissibility-audit failures (4).

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};

use phonox::analytic::{BumpFunction, Probe, ProbeSpec};
use phonox::config::{DatumKind, RunConfig, SolverConfig};
use phonox::error::PhonoxError;
use phonox::estimates::{
    assumption_audit, l1_budget, lp_bound, maximum_principle, verify_datum_cap, CheckOutcome,
    EstimateReport, Tolerances,
};
use phonox::interface::InterfaceCoefficients;
use phonox::material::MaterialModel;
use phonox::quadrature::AngularQuadrature;
use phonox::reconstruct::{
    extrapolate_eta1, measure, run_probe_experiment, with_additive_noise, ExperimentOptions,
    FitOptions, MeasurementRecord, ReconstructionResult,
};
use phonox::solver::{
    BoundaryData, InitialState, RunArtifacts, SolverOptions, SpatialGrid, TransportSolver,
};
use phonox::Result;

#[derive(Parser)]
#[command(
    name = "phonox",
    about = "Two-layer phonon transport runs and interface-reflectance recovery"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Advance the coupled system and write the outgoing trace.
    Simulate(CommonArgs),
    /// Run the shrinking-pulse experiment and write measurement records.
    Probe(CommonArgs),
    /// Extrapolate measurement records to the reflectance table.
    Reconstruct(CommonArgs),
    /// Check the a priori bounds and admissibility assumptions.
    Validate(CommonArgs),
    /// Repeat the experiment over a list of carrier frequencies.
    Sweep(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path of the JSON run description.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's out_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker count for per-carrier jobs.
    #[arg(long)]
    jobs: Option<usize>,
    /// Seed for the noise study; overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Simulate(a) => ("simulate", a),
        Command::Probe(a) => ("probe", a),
        Command::Reconstruct(a) => ("reconstruct", a),
        Command::Validate(a) => ("validate", a),
        Command::Sweep(a) => ("sweep", a),
    };
    if let Err(e) = run(name, args) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(name: &str, args: &CommonArgs) -> Result<()> {
    let mut config = RunConfig::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = Some(seed);
    }
    let out = args
        .out
        .clone()
        .or_else(|| config.out_dir.as_ref().map(PathBuf::from))
        .ok_or_else(|| {
            PhonoxError::Config("give an output directory via --out or out_dir".into())
        })?;
    config.out_dir = Some(out.display().to_string());
    std::fs::create_dir_all(&out)?;
    write_text(
        &out.join("config.json"),
        &format!("{}\n", serde_json::to_string_pretty(&config)?),
    )?;
    let jobs = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    match name {
        "simulate" => cmd_simulate(&config, &out),
        "probe" => cmd_probe(&config, &out),
        "reconstruct" => cmd_reconstruct(&config, &out),
        "validate" => cmd_validate(&config, &out),
        "sweep" => cmd_sweep(&config, &out, jobs),
        _ => unreachable!(),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &format!("{}\n", serde_json::to_string_pretty(value)?))
}

/// Run inputs instantiated from the config blocks.
struct Built {
    q: AngularQuadrature,
    m: MaterialModel,
    coeffs: InterfaceCoefficients,
    sgrid: SpatialGrid,
}

fn build_base(config: &RunConfig) -> Result<Built> {
    let (q, og) = config.base_grids()?;
    let m = config.material.build(og, true)?;
    let coeffs = config.coefficients.build(&m, &q, true)?;
    Ok(Built {
        q,
        m,
        coeffs,
        sgrid: config.grid.build()?,
    })
}

fn build_for_experiment(config: &RunConfig) -> Result<Built> {
    let (q, og) = config.experiment_grids()?;
    let m = config.material.build(og, false)?;
    let coeffs = config.coefficients.build(&m, &q, false)?;
    Ok(Built {
        q,
        m,
        coeffs,
        sgrid: config.grid.build()?,
    })
}

fn boundary_datum(config: &RunConfig, m: &MaterialModel) -> Result<BoundaryData> {
    match config.datum_kind()? {
        DatumKind::Zero => Ok(BoundaryData::Zero),
        DatumKind::Equilibrium(a) => Ok(BoundaryData::Equilibrium(a)),
        DatumKind::Probe => {
            let p = config.probe.as_ref().ok_or_else(|| {
                PhonoxError::Config("the probe datum needs a probe block".into())
            })?;
            let spec = ProbeSpec::new(p.mu0, p.omega0, p.epsilon, m)?;
            Ok(BoundaryData::Probe(Probe::new(spec, BumpFunction::phi0())))
        }
    }
}

fn solver_block(config: &RunConfig) -> SolverConfig {
    config
        .experiment
        .as_ref()
        .map(|e| e.solver.clone())
        .unwrap_or_default()
}

#[derive(serde::Serialize)]
struct Metadata {
    command: String,
    nx_left: usize,
    nx_right: usize,
    #[serde(rename = "L")]
    length: f64,
    dt: f64,
    #[serde(rename = "T_end")]
    t_end: f64,
    n_mu_nodes: usize,
    n_omega_nodes: usize,
    material_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    c_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    equilibrium_deviation: Option<f64>,
}

impl Metadata {
    fn new(command: &str, config: &RunConfig, built: &Built) -> Self {
        Metadata {
            command: command.into(),
            nx_left: config.grid.nx_left,
            nx_right: config.grid.nx_right,
            length: config.grid.length,
            dt: config.grid.dt,
            t_end: config.grid.t_end,
            n_mu_nodes: built.q.half_nodes().len(),
            n_omega_nodes: built.m.grid().len(),
            material_hash: built.m.content_hash(),
            c_value: None,
            equilibrium_deviation: None,
        }
    }
}

fn cmd_simulate(config: &RunConfig, out: &Path) -> Result<()> {
    let built = build_base(config)?;
    let phi = boundary_datum(config, &built.m)?;
    // The unit equilibrium datum doubles as the fixed-point validation:
    // start on the equilibrium pair and report the drift.
    let fixed_point = matches!(config.datum_kind()?, DatumKind::Equilibrium(a) if (a - 1.0).abs() < 1e-15);
    let opts = SolverOptions {
        record_resolved: true,
        initial: if fixed_point {
            InitialState::Equilibrium
        } else {
            InitialState::Zero
        },
        ..SolverOptions::default()
    };
    let solver = TransportSolver::new(
        &built.m,
        &built.q,
        &built.coeffs,
        built.sgrid.clone(),
        config.grid.dt,
        config.grid.t_end,
        opts,
        &phi,
    )?;
    let art = solver.run(&phi)?;
    write_trace_csv(&out.join("trace.csv"), &art, &built)?;
    let mut meta = Metadata::new("simulate", config, &built);
    if fixed_point {
        meta.equilibrium_deviation = Some(equilibrium_deviation(&art, &built, 1.0));
    }
    write_json(&out.join("metadata.json"), &meta)?;
    println!(
        "simulate: {} steps, {} ordinates, trace written to {}",
        art.trace.values().len(),
        built.q.half_nodes().len() * built.m.grid().len(),
        out.join("trace.csv").display()
    );
    if let Some(dev) = meta.equilibrium_deviation {
        println!("equilibrium deviation: {dev:e}");
    }
    Ok(())
}

fn write_trace_csv(path: &Path, art: &RunArtifacts, built: &Built) -> Result<()> {
    let resolved = art.trace.resolved().ok_or_else(|| {
        PhonoxError::Config("the run kept no per-ordinate record".into())
    })?;
    let n_omega = built.m.grid().len();
    let mut text = String::from("t,mu,omega,value\n");
    for n in 0..art.trace.values().len() {
        let t = art.trace.time(n);
        let row = resolved.row(n);
        for (p, value) in row.iter().enumerate() {
            let mu = -built.q.half_nodes()[p / n_omega];
            let omega = built.m.grid().nodes()[p % n_omega];
            text.push_str(&format!("{t},{mu},{omega},{value}\n"));
        }
    }
    write_text(path, &text)
}

/// Largest relative deviation of the final state from the equilibrium
/// pair at the given amplitude.
fn equilibrium_deviation(art: &RunArtifacts, built: &Built, amplitude: f64) -> f64 {
    let state = art.total_state();
    let gamma0 = built.coeffs.gamma0();
    let n_omega = built.m.grid().len();
    let mut worst = 0.0_f64;
    for (buf, nx, scale) in [
        (&state.f_plus, state.nx_left, 1.0),
        (&state.f_minus, state.nx_left, 1.0),
        (&state.g_plus, state.nx_right, gamma0),
        (&state.g_minus, state.nx_right, gamma0),
    ] {
        for (slot, value) in buf.iter().enumerate() {
            let j = (slot / nx) % n_omega;
            let expected = amplitude * scale * built.m.xi()[j];
            worst = worst.max((value - expected).abs() / expected);
        }
    }
    worst
}

/// Measurement records for one carrier, with the optional seeded noise
/// study applied by re-measuring each perturbed trace.
fn probe_records(
    config: &RunConfig,
    built: &Built,
    omega0: f64,
    seed_base: u64,
) -> Result<Vec<MeasurementRecord>> {
    let e = config.experiment.as_ref().ok_or_else(|| {
        PhonoxError::Config("this command needs an experiment block".into())
    })?;
    let eps = e.epsilons.resolve()?;
    let base = ProbeSpec::new(e.mu0, omega0, eps[0], &built.m)?;
    let sb = &e.solver;
    let mut opts = ExperimentOptions::new(built.sgrid.clone(), config.grid.dt);
    opts.instrument = sb.instrument;
    opts.norms_every = sb.norms_every;
    opts.track_extrema = sb.track_extrema;
    opts.lp_exponent = sb.lp_exponent;
    opts.tail_steps = sb.tail_steps;
    let outcome = run_probe_experiment(&built.m, &built.q, &built.coeffs, &base, &eps, &opts)?;
    let mut records = outcome.records;
    if let Some(level) = e.noise_level.filter(|&l| l > 0.0) {
        let window = BumpFunction::psi0();
        for (i, record) in records.iter_mut().enumerate() {
            let noisy =
                with_additive_noise(&outcome.artifacts[i].trace, level, seed_base + i as u64)?;
            record.m_value = measure(&noisy, &window, record.t1, record.epsilon)?;
            record.eta1_raw = record.m_value / record.c_value;
        }
    }
    Ok(records)
}

fn write_records(
    dir: &Path,
    records: &[MeasurementRecord],
    eta1_true: Option<f64>,
) -> Result<()> {
    write_json(&dir.join("records.json"), &records)?;
    let mut csv = String::from(match eta1_true {
        Some(_) => "epsilon,ratio,abs_error\n",
        None => "epsilon,ratio\n",
    });
    for r in records {
        let ratio = r.m_value / r.c_value;
        match eta1_true {
            Some(truth) => {
                let err = (ratio - truth).abs();
                csv.push_str(&format!("{},{ratio},{err}\n", r.epsilon));
            }
            None => csv.push_str(&format!("{},{ratio}\n", r.epsilon)),
        }
    }
    write_text(&dir.join("convergence.csv"), &csv)
}

fn single_omega0(config: &RunConfig) -> Result<f64> {
    let e = config.experiment.as_ref().ok_or_else(|| {
        PhonoxError::Config("this command needs an experiment block".into())
    })?;
    let omegas = e.omega0_values()?;
    if omegas.len() != 1 {
        return Err(PhonoxError::Config(
            "this command takes a single omega0; use sweep for a carrier list".into(),
        ));
    }
    Ok(omegas[0])
}

fn cmd_probe(config: &RunConfig, out: &Path) -> Result<()> {
    let built = build_for_experiment(config)?;
    let omega0 = single_omega0(config)?;
    let records = probe_records(config, &built, omega0, config.seed.unwrap_or(0))?;
    let truth = config.experiment.as_ref().and_then(|e| e.eta1_true);
    write_records(out, &records, truth)?;
    let mut meta = Metadata::new("probe", config, &built);
    meta.c_value = records.first().map(|r| r.c_value);
    write_json(&out.join("metadata.json"), &meta)?;
    for r in &records {
        println!(
            "epsilon {}: M/C = {}",
            r.epsilon,
            r.m_value / r.c_value
        );
    }
    Ok(())
}

fn fit_options(config: &RunConfig) -> FitOptions {
    let pin = config
        .experiment
        .as_ref()
        .map(|e| e.fit.pin_q)
        .unwrap_or(false);
    if pin {
        FitOptions::pinned_from_integrability(config.material.p0)
    } else {
        FitOptions::free()
    }
}

fn coefficient_table_csv(rows: &[&ReconstructionResult]) -> String {
    let mut csv = String::from("omega0,eta1,eta2,zeta1,zeta2\n");
    for r in rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.omega0, r.eta1_estimate, r.eta2, r.zeta1, r.zeta2
        ));
    }
    csv
}

fn cmd_reconstruct(config: &RunConfig, out: &Path) -> Result<()> {
    let built = build_for_experiment(config)?;
    let omega0 = single_omega0(config)?;
    let records_path = out.join("records.json");
    let records: Vec<MeasurementRecord> = if records_path.exists() {
        serde_json::from_str(&std::fs::read_to_string(&records_path)?)?
    } else {
        let fresh = probe_records(config, &built, omega0, config.seed.unwrap_or(0))?;
        let truth = config.experiment.as_ref().and_then(|e| e.eta1_true);
        write_records(out, &fresh, truth)?;
        fresh
    };
    let result = extrapolate_eta1(&records, omega0, &built.coeffs, &fit_options(config))?;
    write_json(&out.join("reconstruction.json"), &result)?;
    write_text(
        &out.join("coefficients.csv"),
        &coefficient_table_csv(&[&result]),
    )?;
    let mut meta = Metadata::new("reconstruct", config, &built);
    meta.c_value = records.first().map(|r| r.c_value);
    write_json(&out.join("metadata.json"), &meta)?;
    println!(
        "reconstruct: eta1({}) = {} (exponent {}, residual {}{})",
        result.omega0,
        result.eta1_estimate,
        result.fit_exponent,
        result.residual,
        if result.flagged { ", flagged" } else { "" }
    );
    Ok(())
}

/// Supremum of the datum against the equilibrium shape over the run's
/// own sampling comb; the amplitude that the pointwise cap is checked at.
fn scan_datum_amplitude(
    phi: &BoundaryData,
    m: &MaterialModel,
    q: &AngularQuadrature,
    dt: f64,
    t_end: f64,
) -> f64 {
    let mut sup = 0.0_f64;
    let n_steps = (t_end / dt).ceil() as usize;
    for n in 0..n_steps {
        let t = (n as f64 + 0.5) * dt;
        for &mu in q.half_nodes() {
            for (j, &omega) in m.grid().nodes().iter().enumerate() {
                sup = sup.max(phi.eval(t, mu, omega, m) / m.xi()[j]);
            }
        }
    }
    sup
}

fn cmd_validate(config: &RunConfig, out: &Path) -> Result<()> {
    // A pulse datum is invisible to the plain background combs; validate
    // it on the same graded quadratures the experiment itself would use.
    let built = match config.datum_kind()? {
        DatumKind::Probe => build_for_experiment(config)?,
        _ => build_base(config)?,
    };
    let phi = boundary_datum(config, &built.m)?;
    let sb = solver_block(config);
    let tol = Tolerances::default();
    let (dt, t_end) = (config.grid.dt, config.grid.t_end);
    let m0 = match config.datum_kind()? {
        DatumKind::Zero => 1.0,
        DatumKind::Equilibrium(a) => a,
        DatumKind::Probe => {
            scan_datum_amplitude(&phi, &built.m, &built.q, dt, t_end) * (1.0 + 1e-9)
        }
    };
    verify_datum_cap(&phi, &built.m, &built.q, m0, dt, t_end, &tol)?;
    let opts = SolverOptions {
        norms_every: Some(sb.norms_every.unwrap_or(1)),
        track_extrema: true,
        lp_exponent: sb.lp_exponent,
        ..SolverOptions::default()
    };
    let solver = TransportSolver::new(
        &built.m,
        &built.q,
        &built.coeffs,
        built.sgrid.clone(),
        dt,
        t_end,
        opts,
        &phi,
    )?;
    let art = solver.run(&phi)?;

    let mut estimate_rows = vec![l1_budget(&art, sb.settle_time, &tol)?];
    estimate_rows.push(lp_bound(
        &art,
        built.coeffs.gamma0(),
        sb.lp_exponent,
        sb.settle_time,
        &tol,
    )?);
    estimate_rows.extend(maximum_principle(
        &art,
        m0,
        built.coeffs.gamma0(),
        &tol,
    )?);
    let audit_rows: Vec<CheckOutcome> = match &config.probe {
        Some(p) => {
            let spec = ProbeSpec::new(p.mu0, p.omega0, p.epsilon, &built.m)?;
            assumption_audit(&built.m, &spec, &built.sgrid)
        }
        None => Vec::new(),
    };

    let mut report = EstimateReport::new();
    report.extend(estimate_rows.iter().cloned());
    report.extend(audit_rows.iter().cloned());
    report.metadata.insert("dt".into(), format!("{dt}"));
    report
        .metadata
        .insert("T_end".into(), format!("{t_end}"));
    report
        .metadata
        .insert("cells".into(), format!("{}+{}", config.grid.nx_left, config.grid.nx_right));
    report
        .metadata
        .insert("material_hash".into(), built.m.content_hash());
    report
        .metadata
        .insert("settle_time".into(), format!("{}", sb.settle_time));
    report.metadata.insert("m0".into(), format!("{m0}"));
    write_json(&out.join("report.json"), &report)?;
    print!("{}", report.render());

    let failed_audit: Vec<&str> = audit_rows
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name.as_str())
        .collect();
    if !failed_audit.is_empty() {
        return Err(PhonoxError::Audit(format!(
            "admissibility checks failed: {}",
            failed_audit.join(", ")
        )));
    }
    let failed: Vec<&str> = estimate_rows
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name.as_str())
        .collect();
    if !failed.is_empty() {
        return Err(PhonoxError::Numerical {
            step: 0,
            reason: format!("estimate checks failed: {}", failed.join(", ")),
        });
    }
    Ok(())
}

/// Run `f(0..n)` on a small worker pool, collecting results in index
/// order so the output never depends on scheduling.
fn indexed_pool<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    if workers <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.min(n) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let value = f(i);
                *slots[i].lock().unwrap() = Some(value);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("worker filled every slot"))
        .collect()
}

/// One carrier's outcome: measurements survive even when the fit fails.
struct CarrierRun {
    omega0: f64,
    records: Option<Vec<MeasurementRecord>>,
    result: Option<ReconstructionResult>,
    error: Option<String>,
}

#[derive(serde::Serialize)]
struct SweepRow {
    omega0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    eta1_estimate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn cmd_sweep(config: &RunConfig, out: &Path, jobs: usize) -> Result<()> {
    let built = build_for_experiment(config)?;
    let e = config.experiment.as_ref().ok_or_else(|| {
        PhonoxError::Config("sweep needs an experiment block".into())
    })?;
    let omegas = e.omega0_values()?;
    let seed0 = config.seed.unwrap_or(0);
    let fit = fit_options(config);
    let results: Vec<CarrierRun> = indexed_pool(omegas.len(), jobs, |i| {
        let w = omegas[i];
        match probe_records(config, &built, w, seed0 + 1000 * i as u64) {
            Err(e) => CarrierRun {
                omega0: w,
                records: None,
                result: None,
                error: Some(e.to_string()),
            },
            Ok(records) => {
                let (result, error) = match extrapolate_eta1(&records, w, &built.coeffs, &fit) {
                    Ok(r) => (Some(r), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                CarrierRun {
                    omega0: w,
                    records: Some(records),
                    result,
                    error,
                }
            }
        }
    });

    let truth = e.eta1_true;
    let mut rows = Vec::new();
    let mut table = Vec::new();
    for run in &results {
        let w = run.omega0;
        let dir = out.join(format!("omega_{w}"));
        std::fs::create_dir_all(&dir)?;
        if let Some(records) = &run.records {
            write_records(&dir, records, truth)?;
        }
        if let Some(result) = &run.result {
            write_json(&dir.join("reconstruction.json"), result)?;
            table.push(result);
            println!("omega0 {w}: eta1 = {}", result.eta1_estimate);
        }
        if let Some(err) = &run.error {
            write_text(&dir.join("error.txt"), &format!("{err}\n"))?;
            println!("omega0 {w}: failed ({err})");
        }
        rows.push(SweepRow {
            omega0: w,
            eta1_estimate: run.result.as_ref().map(|r| r.eta1_estimate),
            error: run.error.clone(),
        });
    }
    write_json(&out.join("sweep.json"), &rows)?;
    write_text(&out.join("coefficients.csv"), &coefficient_table_csv(&table))?;
    let mut meta = Metadata::new("sweep", config, &built);
    meta.c_value = results
        .iter()
        .find_map(|run| run.records.as_ref().and_then(|r| r.first()))
        .map(|r| r.c_value);
    write_json(&out.join("metadata.json"), &meta)?;
    Ok(())
}
