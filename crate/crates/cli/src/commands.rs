use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use safe_nav::dynamics::SimRun;
use safe_nav::hybrid::{audit_feasibility, AuditReport};
use safe_nav::scenario::{render_overlay, render_svg, write_summary};
use safe_nav::{parse_scenario, BarrierGains, Error, Scenario, SimConfig, TrajectoryLog};

use crate::SimOverrides;

/// Error with the exit code it maps to.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: 2,
            error: e.into(),
        }
    }
}

type CmdResult = Result<u8, Failure>;

/// Optional `(k1, k2)` overrides; a missing one keeps the scenario value.
pub type Gains = (Option<f64>, Option<f64>);

fn domain(error: anyhow::Error) -> Failure {
    Failure { code: 1, error }
}

/// Reads and validates a scenario. Validation findings are domain failures,
/// everything else (missing file, syntax, schema) is a usage failure.
fn load(path: &Path) -> Result<Scenario, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match parse_scenario(&text) {
        Ok(s) => {
            for w in s.warnings() {
                log::warn!("{w}");
            }
            Ok(s)
        }
        Err(e @ Error::Validation(_)) => Err(domain(anyhow!(e).context(path.display().to_string()))),
        Err(e) => Err(anyhow!(e).context(path.display().to_string()).into()),
    }
}

/// Applies command-line overrides (flag > file > default).
fn configure(mut s: Scenario, o: &SimOverrides, gains: Gains) -> Result<Scenario, Failure> {
    let dt = o.dt.unwrap_or(s.sim.dt);
    let t_max = o.t_max.unwrap_or(s.sim.t_max);
    s.sim = SimConfig::new(dt, t_max)?.with_zoh(o.zoh || s.sim.zoh);
    s = with_overrides(s, o.gamma, gains)?;
    Ok(s)
}

fn with_overrides(mut s: Scenario, gamma: Option<f64>, (k1, k2): Gains) -> Result<Scenario, Failure> {
    if let Some(g) = gamma {
        let clf = s.controller.clf().with_gamma(g);
        s.controller = s.controller.clone().with_clf(clf)?;
    }
    if k1.is_some() || k2.is_some() {
        let b = s.controller.barrier();
        let gains = BarrierGains::new(k1.unwrap_or(b.k1()), k2.unwrap_or(b.k2()))?;
        s.controller = s.controller.clone().with_barrier(gains);
    }
    Ok(s)
}

pub fn validate(path: &Path) -> CmdResult {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match parse_scenario(&text) {
        Ok(s) => {
            println!(
                "{}: valid ({}-D, {} segments, {})",
                path.display(),
                s.dim(),
                s.plan.segments(),
                s.dynamics.tag()
            );
            for w in s.warnings() {
                println!("warning: {w}");
            }
            Ok(0)
        }
        Err(Error::Validation(report)) => {
            println!("{}: {} finding(s)", path.display(), report.len());
            print!("{report}");
            Ok(1)
        }
        Err(e) => Err(anyhow!(e).context(path.display().to_string()).into()),
    }
}

/// Writes the artifacts of one run into `dir` and reports whether it reached safely.
fn write_run(scenario: &Scenario, run: &SimRun, dir: &Path, seed: Option<u64>, plot: bool) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    run.log.write_csv(fs::File::create(dir.join("trajectory.csv"))?)?;
    let summary = write_summary(run, scenario, seed)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    if plot {
        if scenario.dim() >= 2 {
            fs::write(dir.join("plot.svg"), render_svg(&run.log, scenario, (0, 1))?)?;
        } else {
            log::warn!("1-D scenario, no plot written");
        }
    }
    Ok(())
}

fn describe(run: &SimRun) -> String {
    let last = run.log.last().expect("a run logs its initial state");
    format!(
        "{} at t = {:.3} after {} steps ({:.2} s wall)",
        run.outcome.label(),
        last.t,
        run.log.len() - 1,
        run.wall_time.as_secs_f64()
    )
}

pub fn run(path: &Path, out: &Path, o: &SimOverrides, gains: Gains, seed: Option<u64>) -> CmdResult {
    let scenario = configure(load(path)?, o, gains)?;
    let run = scenario.simulate()?;
    write_run(&scenario, &run, out, seed, true)?;
    println!("{}: {}", scenario.name, describe(&run));
    if run.outcome.is_reached() {
        Ok(0)
    } else {
        println!("{:?}", run.outcome);
        Ok(1)
    }
}

fn print_audit(report: &AuditReport) {
    println!(
        "audit: {} samples per segment and population, seed {}, gamma {} (bound {})",
        report.samples_per_segment,
        report.seed,
        report.gamma,
        report.gamma_bound.map_or("n/a".to_string(), |b| format!("{b:.6}"))
    );
    for s in &report.segments {
        println!(
            "  segment {}: {} uniform + {} manifold samples, {} infeasible ({} confirmed), {} ill-conditioned, min normal angle {:.3e}",
            s.segment, s.uniform_samples, s.manifold_samples, s.infeasible, s.confirmed, s.ill_conditioned, s.min_normal_angle
        );
        for w in &s.worst {
            println!(
                "    {:?} p = {:?} v = {:?} margin {:.3e} antiparallel gap {:.3e}: {}",
                w.kind, w.p, w.v, w.margin, w.antiparallel_gap, w.error
            );
        }
    }
}

pub fn audit(
    path: &Path,
    samples: usize,
    seed: u64,
    gamma: Option<f64>,
    gains: Gains,
    report_path: Option<&Path>,
) -> CmdResult {
    let s = with_overrides(load(path)?, gamma, gains)?;
    let report = audit_feasibility(&s.controller, &s.plan, &s.dynamics, samples, seed)?;
    print_audit(&report);
    if let Some(p) = report_path {
        fs::write(p, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    let bad = report.infeasible();
    println!("{bad} infeasible, {} ill-conditioned", report.ill_conditioned());
    Ok(if bad == 0 { 0 } else { 1 })
}

/// Directory name of one grid cell.
pub fn cell_name(k1: f64, k2: f64) -> String {
    format!("k1_{k1}_k2_{k2}")
}

/// Worker count for sweeps, capped by `SAFE_NAV_THREADS` when set.
fn sweep_threads() -> anyhow::Result<usize> {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var("SAFE_NAV_THREADS") {
        Ok(v) => {
            let cap: usize = v.parse().with_context(|| format!("SAFE_NAV_THREADS = {v:?}"))?;
            Ok(cap.clamp(1, available.max(1)))
        }
        Err(_) => Ok(available),
    }
}

pub fn sweep(path: &Path, k1s: &[f64], k2s: &[f64], out: &Path, o: &SimOverrides) -> CmdResult {
    let base = configure(load(path)?, o, (None, None))?;
    let cells: Vec<(f64, f64)> = k1s.iter().flat_map(|&a| k2s.iter().map(move |&b| (a, b))).collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(sweep_threads()?).build()?;
    let results: Vec<anyhow::Result<(String, Scenario, SimRun)>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(k1, k2)| {
                let s = with_overrides(base.clone(), None, (Some(k1), Some(k2))).map_err(|f| f.error)?;
                let run = s.simulate()?;
                let name = cell_name(k1, k2);
                write_run(&s, &run, &out.join(&name), None, false)?;
                Ok((name, s, run))
            })
            .collect()
    });

    let mut runs = Vec::with_capacity(results.len());
    for r in results {
        runs.push(r?);
    }
    let mut failed = Vec::new();
    for (name, _, run) in &runs {
        println!("{name}: {}", describe(run));
        if !run.outcome.is_reached() {
            failed.push(name.clone());
        }
    }
    if base.dim() >= 2 {
        let overlay: Vec<(String, &TrajectoryLog)> = runs.iter().map(|(n, _, r)| (n.clone(), &r.log)).collect();
        fs::write(out.join("overlay.svg"), render_overlay(&overlay, &base, (0, 1))?)?;
    }
    if failed.is_empty() {
        println!("all {} runs reached", runs.len());
        Ok(0)
    } else {
        println!("{} of {} runs failed: {}", failed.len(), runs.len(), failed.join(", "));
        Ok(1)
    }
}

pub fn plot(scenario: &Path, csv: &Path, out: &Path, axes: &[usize]) -> CmdResult {
    let s = load(scenario)?;
    let [a, b] = axes else {
        return Err(anyhow!("--axes takes exactly two indices, got {}", axes.len()).into());
    };
    let file = fs::File::open(csv).with_context(|| format!("reading {}", csv.display()))?;
    let log = TrajectoryLog::read_csv(file)?;
    fs::write(out, render_svg(&log, &s, (*a, *b))?)?;
    println!("wrote {}", out.display());
    Ok(0)
}
