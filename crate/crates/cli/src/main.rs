use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use fracpat_core::acceptance::{run_suite, CRITERIA};
use fracpat_core::config::{parse_config, serialize_config, ParsedConfig, Purpose, ScenarioConfig};
use fracpat_core::forward::{simulate_forward, BoundaryTrace, ForwardOptions};
use fracpat_core::geometry::{convexity_check, Geometry, SoundMetric, T1Config, VisibilityMode};
use fracpat_core::grid::{relative_l2_error, Field, Grid2D};
use fracpat_core::io::{read_field, read_trace_csv, write_csv, write_field, write_pgm, write_trace_csv};
use fracpat_core::manifest::RunManifest;
use fracpat_core::reconstruction::{InverseProblem, COLLAR_CELLS};
use fracpat_core::study::{convergence_study, Quantity};
use fracpat_core::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

/// Fractionally attenuated photoacoustic tomography lab.
#[derive(Parser)]
#[command(name = "fracpat", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the damped wave and record the boundary trace.
    Forward {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "fracpat-out/forward")]
        out: PathBuf,
    },
    /// Invert boundary data with the time-reversal Neumann series.
    Reconstruct {
        #[arg(long)]
        config: PathBuf,
        /// field file to measure the error against
        #[arg(long)]
        truth: Option<PathBuf>,
        /// trace CSV from `forward`; synthesized from the configured source when absent
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value = "fracpat-out/reconstruct")]
        out: PathBuf,
    },
    /// Audit the foliation and the visibility times.
    Geometry {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "fracpat-out/geometry")]
        out: PathBuf,
    },
    /// Refinement study over `study.levels`.
    Study {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "fracpat-out/study")]
        out: PathBuf,
    },
    /// Run the acceptance suite.
    Check {
        /// comma-separated criterion ids, all by default
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
        #[arg(long, default_value = "fracpat-out/check")]
        out: PathBuf,
    },
}

enum Outcome {
    Done,
    Diverged,
    ChecksFailed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_VALIDATION);
    }
    match run(cli.command) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Diverged) => ExitCode::from(EXIT_DIVERGED),
        Ok(Outcome::ChecksFailed) => ExitCode::from(EXIT_FAILURE),
        Err(e) => {
            eprintln!("error: {e:#}");
            let validation = e.chain().any(|c| c.downcast_ref::<Error>().is_some_and(Error::is_validation));
            ExitCode::from(if validation { EXIT_VALIDATION } else { EXIT_FAILURE })
        }
    }
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("FRACPAT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Format(format!("FRACPAT_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(command: Command) -> anyhow::Result<Outcome> {
    match command {
        Command::Forward { config, out } => forward(&load(&config, Purpose::Forward)?, &out),
        Command::Reconstruct {
            config,
            truth,
            trace,
            out,
        } => reconstruct(&load(&config, Purpose::Reconstruct)?, truth.as_deref(), trace.as_deref(), &out),
        Command::Geometry { config, out } => geometry(&load(&config, Purpose::Geometry)?, &out),
        Command::Study { config, out } => study(&load(&config, Purpose::Study)?, &out),
        Command::Check { only, out } => check(&only, &out),
    }
}

fn load(path: &Path, purpose: Purpose) -> anyhow::Result<ScenarioConfig> {
    let ParsedConfig { config, defaulted } =
        parse_config(path, purpose).with_context(|| format!("reading {}", path.display()))?;
    for (k, v) in &defaulted {
        eprintln!("default: {k} = {v}");
    }
    Ok(config)
}

/// Creates `out`, writes the effective config and starts a manifest.
fn start_run(command: &str, cfg: Option<&ScenarioConfig>, out: &Path) -> anyhow::Result<RunManifest> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let text = cfg.map(serialize_config).unwrap_or_default();
    let mut manifest = RunManifest::start(command, &text);
    if cfg.is_some() {
        std::fs::write(out.join("config.cfg"), &text)?;
        manifest.add_output(out, "config.cfg")?;
    }
    Ok(manifest)
}

fn save_field(manifest: &mut RunManifest, out: &Path, stem: &str, field: &Field<f64>, grid: &Grid2D, pgm: bool) -> anyhow::Result<()> {
    let raw = format!("{stem}.f64");
    write_field(&out.join(&raw), field, grid)?;
    manifest.add_output(out, &raw)?;
    if pgm {
        let img = format!("{stem}.pgm");
        write_pgm(&out.join(&img), field)?;
        manifest.add_output(out, &img)?;
    }
    Ok(())
}

fn finish(mut manifest: RunManifest, out: &Path) -> anyhow::Result<()> {
    let path = manifest.finish(out)?;
    println!("manifest: {}", path.display());
    Ok(())
}

fn forward(cfg: &ScenarioConfig, out: &Path) -> anyhow::Result<Outcome> {
    let sc = cfg.build()?;
    let mut manifest = start_run("forward", Some(cfg), out)?;
    let opts = ForwardOptions {
        cfl: cfg.cfl,
        model: cfg.model,
        snapshot_times: cfg.record.snapshots.clone(),
        energy: cfg.record.energy,
        ..Default::default()
    };
    let run = simulate_forward(&sc.grid, &sc.source, &sc.medium, cfg.alpha, cfg.final_time, &opts)?;
    write_trace_csv(&out.join("trace.csv"), &sc.grid, &run.trace.nodes, run.trace.dt, &run.trace.samples)?;
    manifest.add_output(out, "trace.csv")?;
    save_field(&mut manifest, out, "u_final", &run.u_final, &sc.grid, cfg.record.pgm)?;
    for (i, snap) in run.snapshots.iter().enumerate() {
        save_field(&mut manifest, out, &format!("snapshot_{i:03}"), &snap.field, &sc.grid, cfg.record.pgm)?;
    }
    if let Some(e) = &run.energy {
        let rows: Vec<Vec<f64>> = e
            .times
            .iter()
            .zip(&e.energy)
            .zip(e.cumulative_pairing())
            .map(|((&t, &en), p)| vec![t, en, p])
            .collect();
        write_csv(&out.join("energy.csv"), &["t", "E", "pairing"], &rows)?;
        manifest.add_output(out, "energy.csv")?;
    }
    println!(
        "forward: {} nodes, {} steps of dt={:.4e}, trace on {} nodes, max |trace| {:.4e}",
        sc.grid.len(),
        run.time_step.n_steps,
        run.time_step.dt,
        run.trace.nodes.len(),
        run.trace.max_abs()
    );
    finish(manifest, out)?;
    Ok(Outcome::Done)
}

/// Maps a trace CSV onto the boundary nodes of `grid`.
fn load_trace(path: &Path, grid: &Grid2D, dt: f64) -> anyhow::Result<BoundaryTrace<f64>> {
    let (coords, times, samples) = read_trace_csv(path).with_context(|| format!("reading {}", path.display()))?;
    let nodes = grid.boundary_nodes().to_vec();
    if coords.len() != nodes.len() {
        return Err(Error::PartialData).context(format!(
            "trace has {} columns, the boundary has {} nodes",
            coords.len(),
            nodes.len()
        ));
    }
    let tol = 1e-6 * grid.h();
    for (&(x, y), &k) in coords.iter().zip(&nodes) {
        let (gx, gy) = grid.coords(k);
        if (x - gx).abs() > tol || (y - gy).abs() > tol {
            return Err(Error::PartialData).context(format!("trace column ({x}, {y}) is not boundary node ({gx}, {gy})"));
        }
    }
    if times.len() >= 2 && ((times[1] - times[0]) - dt).abs() > 1e-9 * dt.max(1.0) {
        bail!(Error::Format(format!(
            "trace step {} differs from the solver step {dt}",
            times[1] - times[0]
        )));
    }
    Ok(BoundaryTrace { dt, nodes, samples })
}

fn reconstruct(cfg: &ScenarioConfig, truth: Option<&Path>, trace: Option<&Path>, out: &Path) -> anyhow::Result<Outcome> {
    let sc = cfg.build()?;
    let problem = InverseProblem::new(&sc.grid, &sc.medium, cfg.alpha, cfg.final_time, cfg.cfl)?;
    let (data, implied_truth) = match trace {
        Some(p) => (load_trace(p, &sc.grid, problem.time_step.dt)?, None),
        None => (problem.observe(&sc.source.u0)?, Some(sc.source.u0.clone())),
    };
    let truth = match truth {
        Some(p) => {
            let (f, _) = read_field::<f64>(p).with_context(|| format!("reading {}", p.display()))?;
            if !f.matches(&sc.grid) {
                bail!(Error::LengthMismatch {
                    expected: sc.grid.len(),
                    found: f.values().len()
                });
            }
            Some(f)
        }
        None => implied_truth,
    };
    let mut manifest = start_run("reconstruct", Some(cfg), out)?;
    let (u, report) = problem.neumann_reconstruct(&data, &cfg.reconstruction, truth.as_ref())?;
    save_field(&mut manifest, out, "reconstruction", &u, &sc.grid, true)?;
    let rows: Vec<Vec<f64>> = report
        .terms
        .iter()
        .map(|r| {
            vec![
                r.m as f64,
                r.term_norm,
                r.sum_norm,
                r.ratio.unwrap_or(f64::NAN),
                r.error.unwrap_or(f64::NAN),
            ]
        })
        .collect();
    write_csv(&out.join("report.csv"), &["m", "term_norm", "sum_norm", "ratio", "error"], &rows)?;
    manifest.add_output(out, "report.csv")?;
    if let Some(t) = &truth {
        let err = relative_l2_error(&u, t, &sc.grid.collar_excluded_mask(COLLAR_CELLS));
        manifest.add_check("relative_l2_error", true, format!("{err:e}"));
        println!("relative L2 error {err:.4e}");
    }
    manifest.diverged = report.diverged();
    manifest.add_check(
        "series",
        !report.diverged(),
        format!("{:?} after {} terms, max ratio {:.4}", report.status, report.terms.len(), report.max_ratio()),
    );
    println!(
        "series {:?} after {} terms, max ratio {:.4}",
        report.status,
        report.terms.len(),
        report.max_ratio()
    );
    finish(manifest, out)?;
    Ok(if report.diverged() { Outcome::Diverged } else { Outcome::Done })
}

fn geometry(cfg: &ScenarioConfig, out: &Path) -> anyhow::Result<Outcome> {
    let grid = cfg.build()?.grid;
    let g = &cfg.geometry;
    let geo = Geometry::for_grid(SoundMetric::new(cfg.medium.speed), g.foliation, &grid)?;
    let mut manifest = start_run("geometry", Some(cfg), out)?;

    let (s_lo, s_hi) = (g.foliation.s_lo, g.foliation.s_hi);
    let mut rows = Vec::new();
    for i in 1..=g.leaves {
        let s = s_lo + (s_hi - s_lo) * i as f64 / g.leaves as f64;
        match convexity_check(&geo, s, g.samples, grid.h()) {
            Ok(c) => rows.push(vec![s, c.kappa, c.kappa_max, if c.pass { 1.0 } else { 0.0 }]),
            Err(Error::LeafNotFound { .. }) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    write_csv(&out.join("leaves.csv"), &["s", "kappa", "kappa_max", "pass"], &rows)?;
    manifest.add_output(out, "leaves.csv")?;

    let region = geo.influence_region(&grid, cfg.final_time)?;
    save_field(&mut manifest, out, "tau", &region.tau, &grid, cfg.record.pgm)?;

    let (cx, cy) = grid.shape().center();
    let band: Vec<bool> = (0..grid.len())
        .map(|k| {
            let (x, y) = grid.coords(k);
            grid.omega_mask()[k] && geo.foliation.rho.value([x, y]) >= s_lo
        })
        .collect();
    let t0 = geo.t0_report(&grid, &band)?;
    let k_mask: Vec<bool> = (0..grid.len())
        .map(|k| {
            let (x, y) = grid.coords(k);
            grid.omega_mask()[k] && (x - cx).hypot(y - cy) <= g.k_radius
        })
        .collect();
    let t1_cfg = T1Config {
        n_directions: g.directions,
        ..Default::default()
    };
    let t1 = geo.t1_report(&grid, Some(&k_mask), g.mode, &t1_cfg)?;

    let ray_rows: Vec<Vec<f64>> = t1
        .failures
        .iter()
        .map(|r| {
            let kind = match r.failure {
                Some(fracpat_core::geometry::RayFailure::Tangential) => 1.0,
                Some(fracpat_core::geometry::RayFailure::OutsideGamma) => 2.0,
                Some(fracpat_core::geometry::RayFailure::NoExit) => 3.0,
                None => 0.0,
            };
            vec![r.origin[0], r.origin[1], r.direction, r.exit_time.unwrap_or(f64::NAN), r.exit_cos, kind]
        })
        .collect();
    write_csv(
        &out.join("ray_failures.csv"),
        &["x", "y", "direction", "exit_time", "exit_cos", "failure"],
        &ray_rows,
    )?;
    manifest.add_output(out, "ray_failures.csv")?;

    let mode = match g.mode {
        VisibilityMode::Full => "full",
        VisibilityMode::Partial => "partial",
    };
    let report = format!(
        "t0 = {}\nt0_s0 = {}\nt0_unreachable = {}\nt0_monotone = {}\nt0_max_gamma_crossings = {}\n\
         t1 = {}\nt1_mode = {mode}\nt1_rays = {}\nt1_failures = {}\nt1_max_speed_drift = {:e}\n\
         influence_s0 = {}\ninfluence_s_t = {}\n\
         # failure codes in ray_failures.csv: 1 tangential, 2 outside the observation arc, 3 no exit\n",
        t0.t0,
        t0.s0,
        t0.unreachable.len(),
        t0.monotone,
        t0.max_gamma_crossings,
        t1.t1,
        t1.rays,
        t1.failures.len(),
        t1.max_speed_drift,
        region.s0,
        region.s_t,
    );
    std::fs::write(out.join("report.txt"), &report)?;
    manifest.add_output(out, "report.txt")?;
    manifest.add_check("visibility", t1.failures.is_empty(), format!("{} of {} rays failed", t1.failures.len(), t1.rays));
    manifest.add_check("t0_reachable", t0.unreachable.is_empty(), format!("{} unreachable", t0.unreachable.len()));
    print!("{report}");
    finish(manifest, out)?;
    Ok(Outcome::Done)
}

fn study(cfg: &ScenarioConfig, out: &Path) -> anyhow::Result<Outcome> {
    let mut manifest = start_run("study", Some(cfg), out)?;
    let table = convergence_study(cfg, &cfg.study_levels)?;
    table.write_csv(&out.join("study.csv"))?;
    manifest.add_output(out, "study.csv")?;
    for q in [Quantity::CaputoT2, Quantity::StandingMode, Quantity::EnergyDrift] {
        let order = table.min_order(q).unwrap_or(f64::NAN);
        manifest.add_check(q.name(), order.is_finite(), format!("min observed order {order:.3}"));
    }
    let mono = table.monotone_decreasing(Quantity::Reconstruction);
    manifest.add_check("reconstruction", mono, "error decreases with every refinement");
    print!("{}", table.to_csv());
    finish(manifest, out)?;
    Ok(Outcome::Done)
}

fn check(only: &[u8], out: &Path) -> anyhow::Result<Outcome> {
    let ids: Vec<u8> = if only.is_empty() {
        CRITERIA.iter().map(|c| c.0).collect()
    } else {
        only.to_vec()
    };
    if let Some(bad) = ids.iter().find(|id| !CRITERIA.iter().any(|c| c.0 == **id)) {
        bail!(Error::Unsupported(format!("no acceptance criterion {bad}")));
    }
    let mut manifest = start_run("check", None, out)?;
    let outcomes = run_suite(&ids, |o| println!("{o}"));
    let mut text = String::from("id,name,passed,seconds,detail\n");
    for o in &outcomes {
        manifest.add_check(o.name, o.passed, o.detail.clone());
        text += &format!(
            "{},{},{},{:.3},\"{}\"\n",
            o.id,
            o.name,
            o.passed,
            o.runtime.as_secs_f64(),
            o.detail.replace('"', "'")
        );
    }
    std::fs::write(out.join("acceptance.csv"), text)?;
    manifest.add_output(out, "acceptance.csv")?;
    finish(manifest, out)?;
    Ok(if outcomes.iter().all(|o| o.passed) {
        Outcome::Done
    } else {
        Outcome::ChecksFailed
    })
}
