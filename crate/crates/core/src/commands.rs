//! The work behind each command-line subcommand.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{InitialCondition, ModelBlock, RunConfig, SolverBlock};
use crate::entropy::{self, fit_decay_rate, EntropyTrace, G2_FLOOR};
use crate::error::{Error, Result};
use crate::invariants::{run_battery, write_checks, Check, InvariantLimits};
use crate::model::{ModelSpec1D, ModelSpecND};
use crate::output::{create, Metadata};
use crate::solver1d::{DensityField1D, RunOptions, Scheme, Solver1D};
use crate::solvernd::{
    boundary_flux_check, build_grids, compute_stationary_nd, peaks_2d, DensityFieldND, SolverND, SplitOrder,
    StationaryOptions, StationaryProfileND, BOUNDARY_FLUX_LIMIT,
};
use crate::ssa;
use crate::stationary::{classify_shape, normalize, ProfileConfig, Stationary};

/// Files written by a command and whether its hard checks passed.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub pass: bool,
    /// One-line result for the terminal.
    pub summary: String,
}

/// Relative mismatch of `dG2/dt` and `-D2` above which `verify` warns.
pub const IDENTITY_WARN: f64 = 0.05;

fn meta(config: &RunConfig, command: &str, seed: Option<u64>) -> Result<Metadata> {
    Ok(Metadata {
        command: command.to_string(),
        config_hash: config.hash()?,
        seed,
    })
}

fn one_gene(config: &RunConfig) -> Result<&ModelSpec1D> {
    match &config.model {
        ModelBlock::OneGene(m) => Ok(m),
        ModelBlock::Network(_) => Err(Error::Config("this command needs a one_gene model".into())),
    }
}

fn solver_defaults(config: &RunConfig) -> SolverBlock {
    config.solver.clone().unwrap_or_else(|| {
        let (dt, t_end) = match config.model {
            ModelBlock::OneGene(_) => (0.01, 10.0),
            ModelBlock::Network(_) => (0.05, 20.0),
        };
        SolverBlock {
            dt,
            t_end,
            observe_every: 0.5,
            snapshot_every: None,
            scheme: Scheme::default(),
            split: SplitOrder::Symmetric,
            initial: InitialCondition::Gamma,
            stationary_tolerance: 1e-11,
        }
    })
}

fn network_stationary(solver: &SolverND, block: &SolverBlock) -> Result<StationaryProfileND> {
    compute_stationary_nd(
        solver,
        StationaryOptions {
            dt: block.dt,
            tolerance: block.stationary_tolerance,
            ..Default::default()
        },
    )
}

fn write_marginals(dir: &Path, m: &Metadata, field: &DensityFieldND, files: &mut Vec<PathBuf>) -> Result<()> {
    for (axis, grid) in field.grids.iter().enumerate() {
        let (path, mut w) = create(dir, &format!("marginal_{axis}.csv"), m)?;
        writeln!(w, "x,mass,density")?;
        for ((x, mass), h) in grid.centers().iter().zip(field.marginal(axis)).zip(grid.widths()) {
            writeln!(w, "{x},{mass:e},{:e}", mass / h)?;
        }
        w.flush()?;
        files.push(path);
    }
    Ok(())
}

fn write_network_stationary_report<W: Write>(w: &mut W, p: &StationaryProfileND) -> std::io::Result<()> {
    writeln!(w, "t_converged = {}", p.field.time)?;
    writeln!(w, "drift = {:e}", p.drift)?;
    writeln!(w, "residual = {:e}", p.residual)?;
    for (axis, f) in p.boundary_flux.iter().enumerate() {
        writeln!(
            w,
            "boundary_flux[{axis}] = {f:e} ({} {BOUNDARY_FLUX_LIMIT:e})",
            if *f < BOUNDARY_FLUX_LIMIT { "below" } else { "above" }
        )?;
    }
    Ok(())
}

/// Normalised profile and shape class (one gene), or the numerical
/// stationary density with its diagnostics (networks).
pub fn cmd_stationary(config: &RunConfig) -> Result<Outcome> {
    let m = meta(config, "stationary", None)?;
    let dir = &config.output;
    let mut files = Vec::new();
    match &config.model {
        ModelBlock::OneGene(spec) => {
            let profile = normalize(spec, &ProfileConfig { grid: config.grid.clone() })?;
            let (path, mut w) = create(dir, "profile.csv", &m)?;
            writeln!(w, "# Z = {:e}", profile.z)?;
            writeln!(w, "# mass = {:.15}", profile.mass)?;
            writeln!(w, "x,density")?;
            for (x, v) in profile.grid.iter().zip(&profile.values) {
                writeln!(w, "{x},{v:e}")?;
            }
            w.flush()?;
            files.push(path);
            let shape = classify_shape(&profile, spec)?;
            let (path, mut w) = create(dir, "shape.txt", &m)?;
            write_shape(&mut w, &shape)?;
            w.flush()?;
            files.push(path);
            Ok(Outcome {
                files,
                pass: (profile.mass - 1.0).abs() < 1e-8,
                summary: format!("{} (mass {:.12})", shape.case, profile.mass),
            })
        }
        ModelBlock::Network(spec) => {
            let block = solver_defaults(config);
            let grids = Arc::new(build_grids(spec, &config.grid)?);
            let solver = SolverND::new(spec, grids, block.split)?;
            let p = network_stationary(&solver, &block)?;
            let (path, mut w) = create(dir, "profile.csv", &m)?;
            p.field.write_csv(&mut w)?;
            w.flush()?;
            files.push(path);
            write_marginals(dir, &m, &p.field, &mut files)?;
            let (path, mut w) = create(dir, "stationary.txt", &m)?;
            write_network_stationary_report(&mut w, &p)?;
            if spec.dim() == 2 {
                for (x0, x1, h) in peaks_2d(&p.field, 1e-3) {
                    writeln!(w, "peak = ({x0}, {x1}) density {h:e}")?;
                }
            }
            w.flush()?;
            files.push(path);
            Ok(Outcome {
                files,
                pass: true,
                summary: format!("converged at t = {} (residual {:.3e})", p.field.time, p.residual),
            })
        }
    }
}

fn write_shape<W: Write>(w: &mut W, shape: &crate::stationary::ShapeClass) -> std::io::Result<()> {
    writeln!(w, "case = {}", shape.case)?;
    writeln!(w, "origin_limit = {:?}", shape.origin_limit)?;
    for (x, p) in shape.peak_locations.iter().zip(&shape.peak_prominences) {
        writeln!(w, "peak = {x} prominence {p:e}")?;
    }
    Ok(())
}

/// Shape class only.
pub fn cmd_classify(config: &RunConfig) -> Result<Outcome> {
    let spec = one_gene(config)?;
    let m = meta(config, "classify", None)?;
    let profile = normalize(spec, &ProfileConfig { grid: config.grid.clone() })?;
    let shape = classify_shape(&profile, spec)?;
    let (path, mut w) = create(&config.output, "shape.txt", &m)?;
    write_shape(&mut w, &shape)?;
    w.flush()?;
    Ok(Outcome {
        files: vec![path],
        pass: true,
        summary: shape.case.to_string(),
    })
}

fn write_decay<W: Write>(w: &mut W, trace: &EntropyTrace) -> std::io::Result<bool> {
    match fit_decay_rate(trace) {
        Ok(fit) => {
            writeln!(w, "lambda_est = {:e}", fit.lambda_est)?;
            writeln!(w, "g2_rate = {:e}", fit.g2_rate)?;
            writeln!(w, "window = [{}, {}]", fit.t_start, fit.t_end)?;
            writeln!(w, "r_squared = {}", fit.r_squared)?;
            writeln!(w, "points = {}", fit.points)?;
            Ok(fit.lambda_est > 0.0)
        }
        Err(e) => {
            writeln!(w, "no_fit = {e}")?;
            Ok(false)
        }
    }
}

/// Rows above the entropy floor never increase.
pub fn g2_monotone(trace: &EntropyTrace) -> bool {
    trace
        .rows
        .windows(2)
        .filter(|w| w[1].g2 > 1e3 * G2_FLOOR)
        .all(|w| w[1].g2 <= w[0].g2 * (1.0 + 1e-9))
}

fn due(t: f64, every: f64, dt: f64, written: &mut usize) -> bool {
    let k = (t / every).round();
    if (t - k * every).abs() < 0.5 * dt && k as usize >= *written {
        *written = k as usize + 1;
        true
    } else {
        false
    }
}

/// Time-dependent run with entropy trace, decay fit and snapshots.
pub fn cmd_simulate(config: &RunConfig) -> Result<Outcome> {
    let block = config.solver()?.clone();
    let m = meta(config, "simulate", None)?;
    let dir = &config.output;
    let snap_every = block.snapshot_every.unwrap_or(block.t_end / 10.0);
    let mut files = Vec::new();
    let mut snap_error = None;
    let (trace, extra) = match &config.model {
        ModelBlock::OneGene(spec) => {
            let grid = Arc::new(config.grid.build(spec.a, spec.b, spec.k)?);
            let solver = Solver1D::new(spec, grid, block.scheme)?;
            let mut field = match block.initial {
                InitialCondition::Gamma => solver.gamma_field()?,
                InitialCondition::Stationary => solver.stationary_field(),
            };
            let mut written = 0;
            let opts = RunOptions {
                dt: block.dt,
                t_end: block.t_end,
                observe_every: block.observe_every,
            };
            let result = solver.run(&mut field, opts, |f, row| {
                if due(row.t, snap_every, block.dt, &mut written) {
                    let name = format!("snapshots/t_{:09.3}.csv", row.t);
                    match create(dir, &name, &m).and_then(|(p, mut w)| {
                        f.write_csv(&mut w)?;
                        w.flush()?;
                        Ok(p)
                    }) {
                        Ok(p) => files.push(p),
                        Err(e) => snap_error = Some(e),
                    }
                }
            });
            let summary = match result {
                Ok(s) => s,
                Err(e) => {
                    let (_, mut w) = create(dir, "snapshots/last_good.csv", &m)?;
                    field.write_csv(&mut w)?;
                    w.flush()?;
                    return Err(e);
                }
            };
            let extra = format!(
                "max_mass_drift = {:e}\nclipped_total = {:e}\nsteps = {}\ninitial = {:?}\n",
                summary.max_mass_drift, summary.clipped_total, summary.steps, block.initial
            );
            (summary.trace, extra)
        }
        ModelBlock::Network(spec) => {
            let grids = Arc::new(build_grids(spec, &config.grid)?);
            let solver = SolverND::new(spec, grids, block.split)?;
            let reference = network_stationary(&solver, &block)?;
            let pbar = reference.field.masses.clone();
            let mut field = match block.initial {
                InitialCondition::Gamma => solver.gamma_field()?,
                InitialCondition::Stationary => DensityFieldND {
                    time: 0.0,
                    ..reference.field.clone()
                },
            };
            let mut written = 0;
            let result = solver.run(&mut field, &pbar, block.dt, block.t_end, block.observe_every, |f, row| {
                if due(row.t, snap_every, block.dt, &mut written) {
                    let name = format!("snapshots/t_{:09.3}.csv", row.t);
                    match create(dir, &name, &m).and_then(|(p, mut w)| {
                        f.write_csv(&mut w)?;
                        w.flush()?;
                        Ok(p)
                    }) {
                        Ok(p) => files.push(p),
                        Err(e) => snap_error = Some(e),
                    }
                }
            });
            let (trace, clipped) = match result {
                Ok(r) => r,
                Err(e) => {
                    let (_, mut w) = create(dir, "snapshots/last_good.csv", &m)?;
                    field.write_csv(&mut w)?;
                    w.flush()?;
                    return Err(e);
                }
            };
            write_marginals(dir, &m, &field, &mut files)?;
            let (path, mut w) = create(dir, "stationary.txt", &m)?;
            write_network_stationary_report(&mut w, &reference)?;
            w.flush()?;
            files.push(path);
            let extra = format!(
                "clipped_total = {clipped:e}\ng2_monotone = {}\ninitial = {:?}\n",
                g2_monotone(&trace),
                block.initial
            );
            (trace, extra)
        }
    };
    if let Some(e) = snap_error {
        return Err(e);
    }
    let (path, mut w) = create(dir, "trace.csv", &m)?;
    trace.write_csv(&mut w)?;
    w.flush()?;
    files.push(path);
    let (path, mut w) = create(dir, "decay.txt", &m)?;
    let decays = write_decay(&mut w, &trace)?;
    write!(w, "{extra}")?;
    w.flush()?;
    files.push(path);
    Ok(Outcome {
        files,
        pass: true,
        summary: if decays {
            "decay fit found".into()
        } else {
            "no exponential decay window (see decay.txt)".into()
        },
    })
}

/// Stochastic simulation, histogram and comparison with the exact law.
pub fn cmd_ssa(config: &RunConfig) -> Result<Outcome> {
    let block = config.ssa()?.clone();
    let m = meta(config, "ssa", Some(block.seed))?;
    let dir = &config.output;
    let sampling = block.sampling();
    let t_end = sampling.t_end_for(block.samples);
    let mut files = Vec::new();
    let (traj, nd): (ssa::Trajectory, Option<&ModelSpecND>) = match &config.model {
        ModelBlock::OneGene(spec) => {
            let x0 = block.x0.as_ref().map_or(0.0, |v| v[0]);
            (ssa::simulate_1d(spec, x0, t_end, block.seed, &sampling)?, None)
        }
        ModelBlock::Network(spec) => {
            let x0 = block.x0.clone().unwrap_or_else(|| vec![0.0; spec.dim()]);
            (ssa::simulate_nd(spec, &x0, t_end, block.seed, &sampling)?, Some(spec))
        }
    };
    let (path, mut w) = create(dir, "samples.csv", &m)?;
    traj.write_samples_csv(&mut w)?;
    w.flush()?;
    files.push(path);

    let stationary = match &config.model {
        ModelBlock::OneGene(spec) if spec.a > 0.0 => Some(Stationary::new(spec)?),
        _ => None,
    };
    let edges: Vec<Vec<f64>> = match &stationary {
        Some(st) => vec![ssa::stationary_edges(st, block.bins, 1e-4)?],
        None => (0..traj.dim).map(|i| ssa::default_edges(&traj.coordinate(i), block.bins)).collect(),
    };
    let hist = ssa::empirical_density(&traj.samples, traj.dim, &edges)?;
    let (path, mut w) = create(dir, "hist.csv", &m)?;
    hist.write_csv(&mut w)?;
    w.flush()?;
    files.push(path);

    let (path, mut w) = create(dir, "compare.txt", &m)?;
    writeln!(w, "samples = {}", traj.sample_count())?;
    writeln!(w, "bursts = {}", traj.bursts)?;
    writeln!(w, "overflow = {}", hist.overflow)?;
    for (i, r) in traj.lag1_autocorrelation().iter().enumerate() {
        writeln!(w, "lag1_autocorrelation[{i}] = {r}")?;
    }
    for warning in traj.warnings() {
        writeln!(w, "warning = {warning}")?;
        eprintln!("warning: {warning}");
    }
    let summary = if let Some(st) = &stationary {
        let cmp = ssa::compare_with_stationary(&hist, st)?;
        writeln!(w, "l1 = {:e}", cmp.l1)?;
        writeln!(w, "overflow_exact = {:e}", cmp.overflow_exact)?;
        format!("L1 to stationary law {:.4}", cmp.l1)
    } else if nd.is_some_and(|s| s.dim() == 2) {
        let modes = ssa::histogram_modes_2d(&hist, 0.05);
        for (i, j) in &modes {
            let c0 = 0.5 * (edges[0][*i] + edges[0][i + 1]);
            let c1 = 0.5 * (edges[1][*j] + edges[1][j + 1]);
            writeln!(w, "mode = ({c0}, {c1})")?;
        }
        format!("{} histogram modes", modes.len())
    } else {
        let mean = traj.samples.iter().sum::<f64>() / traj.samples.len() as f64;
        writeln!(w, "mean = {mean:e}")?;
        format!("sample mean {mean:.4e}")
    };
    w.flush()?;
    files.push(path);
    Ok(Outcome {
        files,
        pass: true,
        summary,
    })
}

/// Invariant battery with measured margins.
pub fn cmd_verify(config: &RunConfig) -> Result<Outcome> {
    let block = solver_defaults(config);
    let seed = config.entropy.seed;
    let m = meta(config, "verify", Some(seed))?;
    let steps = (block.t_end / block.dt).round() as usize;
    let mut checks: Vec<Check> = Vec::new();
    let mut notes: Vec<String> = Vec::new();
    match &config.model {
        ModelBlock::OneGene(spec) => {
            let grid = Arc::new(config.grid.build(spec.a, spec.b, spec.k)?);
            let solver = Solver1D::new(spec, Arc::clone(&grid), Scheme::WellBalanced)?;
            let model = solver.model();
            let pi = model.pi().to_vec();
            let mut p = model.gamma_masses()?;
            let mut q = entropy::random_probe_density(model, &mut ChaCha8Rng::seed_from_u64(seed))?;
            let report = run_battery(&pi, &mut p, &mut q, block.dt, steps, |mass| {
                let mut f = DensityField1D {
                    grid: Arc::clone(&grid),
                    masses: mass.to_vec(),
                    time: 0.0,
                };
                let s = solver.step(&mut f, block.dt)?;
                mass.copy_from_slice(&f.masses);
                Ok(s)
            })?;
            checks.extend(report.checks(&InvariantLimits::ONE_D));

            let probes = entropy::probe_inequalities(model, config.entropy.probes, seed)?;
            checks.push(Check {
                name: "g2_equals_h2",
                value: probes.max_g2_h2_gap,
                limit: 1e-6,
                pass: probes.max_g2_h2_gap < 1e-6,
            });
            checks.push(Check {
                name: "band_bound",
                value: probes.violations as f64,
                limit: 1.0,
                pass: probes.violations == 0,
            });
            notes.push(format!(
                "probes: {} used, {} skipped, worst margin {:.3e}, min D2/G2 {:.3e}",
                probes.samples, probes.skipped, probes.worst_margin, probes.min_d2_over_g2
            ));

            let mut field = solver.gamma_field()?;
            let run = solver.run(
                &mut field,
                RunOptions {
                    dt: block.dt,
                    t_end: block.t_end,
                    observe_every: block.observe_every,
                },
                |_, _| {},
            )?;
            // Far down the decay the trace is governed by the cells next to the
            // origin cutoff, so compare on the resolved part only.
            let g0 = run.trace.rows[0].g2;
            let rows: Vec<_> = run.trace.rows.iter().filter(|r| r.g2 >= 1e-6 * g0).collect();
            let mid = &rows[rows.len() / 3..(2 * rows.len() / 3).max(rows.len() / 3 + 1).min(rows.len())];
            let gap = mid
                .iter()
                .filter(|r| r.g2 > 1e3 * G2_FLOOR && r.d2 > 0.0)
                .map(|r| (r.dg2dt + r.d2).abs() / r.d2)
                .fold(0.0, f64::max);
            notes.push(format!(
                "entropy identity: max |dG2/dt + D2| / D2 over mid-trace rows = {gap:.3e}{}",
                if gap > IDENTITY_WARN { " (WARN: above 5%, grid or dt too coarse)" } else { "" }
            ));
        }
        ModelBlock::Network(spec) => {
            let grids = Arc::new(build_grids(spec, &config.grid)?);
            let solver = SolverND::new(spec, Arc::clone(&grids), block.split)?;
            let reference = network_stationary(&solver, &block)?;
            let pbar = reference.field.masses.clone();
            let mut p = solver.gamma_field()?.masses;
            let mut q = pbar.clone();
            let report = run_battery(&pbar, &mut p, &mut q, block.dt, steps, |mass| {
                let mut f = DensityFieldND {
                    grids: Arc::clone(&grids),
                    masses: mass.to_vec(),
                    time: 0.0,
                };
                let s = solver.step(&mut f, block.dt)?;
                mass.copy_from_slice(&f.masses);
                Ok(s)
            })?;
            checks.extend(report.checks(&InvariantLimits::N_D));
            let mut field = solver.gamma_field()?;
            let (trace, _) = solver.run(&mut field, &pbar, block.dt, block.t_end, block.observe_every, |_, _| {})?;
            let mono = g2_monotone(&trace);
            checks.push(Check {
                name: "g2_monotone",
                value: if mono { 0.0 } else { 1.0 },
                limit: 1.0,
                pass: mono,
            });
            let u = vec![1.0; pbar.len()];
            let flux = boundary_flux_check(&reference.field, &u, None);
            notes.push(format!("boundary flux per axis (diagnostic): {flux:?}"));
            notes.push(format!("stationary residual {:.3e}", reference.residual));
        }
    }
    let pass = checks.iter().all(|c| c.pass);
    let (path, mut w) = create(&config.output, "invariants.txt", &m)?;
    write_checks(&mut w, &checks)?;
    for n in &notes {
        writeln!(w, "note: {n}")?;
    }
    writeln!(w, "overall = {}", if pass { "PASS" } else { "FAIL" })?;
    w.flush()?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    Ok(Outcome {
        files: vec![path],
        pass,
        summary: if pass {
            "all invariants hold".into()
        } else {
            format!("failed: {}", failed.join(", "))
        },
    })
}
