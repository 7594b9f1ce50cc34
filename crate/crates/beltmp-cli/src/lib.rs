//! Experiment drivers shared by the `beltmp` binary and the test suite:
//! solve wiring, sweep execution with a bounded worker pool, CSV emission
//! and SVG rendering of plans.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use beltmp::motion::CostConfig;
use beltmp::pddl::{parse_domain, parse_problem, DomainDef, PddlError, ProblemDef};
use beltmp::scenario::{Scenario, ScenarioError};
use beltmp::tmp::{solve, Solution, SolveError, SolveReport};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("pddl: {0}")]
    Pddl(#[from] PddlError),
    #[error("solve: {0}")]
    Solve(#[from] SolveError),
    #[error("sweep spec: {0}")]
    Spec(#[from] serde_json::Error),
    #[error("invalid config index {0} (expected 1..=4)")]
    BadConfig(u8),
    #[error("sweep worker panicked")]
    WorkerPanic,
}

/// Inputs for one solve, loaded from disk.
pub struct SolveInputs {
    pub scenario: Scenario,
    pub domain: DomainDef,
    pub problem: ProblemDef,
}

pub fn load_inputs(
    scenario: impl AsRef<Path>,
    domain: impl AsRef<Path>,
    problem: impl AsRef<Path>,
) -> Result<SolveInputs, CliError> {
    Ok(SolveInputs {
        scenario: Scenario::from_file(scenario)?,
        domain: parse_domain(&std::fs::read_to_string(domain)?)?,
        problem: parse_problem(&std::fs::read_to_string(problem)?)?,
    })
}

/// Run one solve with optional density/eta overrides.
pub fn run_solve(
    inputs: &SolveInputs,
    config: u8,
    density: Option<f64>,
    eta: Option<f64>,
    seed: u64,
) -> Result<Solution, CliError> {
    let cfg = CostConfig::from_index(config).ok_or(CliError::BadConfig(config))?;
    let mut scenario = inputs.scenario.clone();
    if let Some(d) = density {
        scenario.density = d;
    }
    if let Some(e) = eta {
        scenario.eta = e;
    }
    Ok(solve(&scenario, &inputs.domain, &inputs.problem, cfg, seed)?)
}

/// Sweep specification file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub scenario: PathBuf,
    pub domain: PathBuf,
    /// target count -> problem file.
    pub problems: BTreeMap<String, PathBuf>,
    pub configs: Vec<u8>,
    pub densities: Vec<f64>,
    pub seeds: Vec<u64>,
    pub eta: f64,
    /// When set, `sweep` writes the full artifact set (per-cell reports and
    /// plots, aggregated CSV, trend curves) into this directory.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl SweepSpec {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, CliError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// One sweep cell result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub config: u8,
    pub d: f64,
    pub c: usize,
    pub seed: u64,
    pub time_s: f64,
    pub cost: f64,
    pub feasible: bool,
}

/// CSV with the schema `config,d,c,seed,time_s,cost,feasible`.
pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("config,d,c,seed,time_s,cost,feasible\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{}\n",
            r.config, r.d, r.c, r.seed, r.time_s, r.cost, r.feasible
        ));
    }
    out
}

/// CSV with `time_s` zeroed: stable across replays of the same seeds, used
/// for determinism checks. Wall time is the only non-reproducible field.
pub fn rows_to_canonical_csv(rows: &[SweepRow]) -> String {
    let zeroed: Vec<SweepRow> = rows
        .iter()
        .map(|r| SweepRow {
            time_s: 0.0,
            ..r.clone()
        })
        .collect();
    rows_to_csv(&zeroed)
}

/// Worker-pool size: `BELTMP_THREADS` when set, else available parallelism.
pub fn thread_count() -> usize {
    std::env::var("BELTMP_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Execute the full sweep. Cells are distributed over a bounded worker pool
/// and results are ordered deterministically by (config, d, c, seed)
/// regardless of scheduling. Per-cell solve failures become infeasible rows;
/// they never abort the sweep.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>, CliError> {
    Ok(run_sweep_full(spec)?.into_iter().map(|(row, _)| row).collect())
}

/// Like [`run_sweep`] but also keeps each cell's report (when the solve ran).
pub fn run_sweep_full(
    spec: &SweepSpec,
) -> Result<Vec<(SweepRow, Option<SolveReport>)>, CliError> {
    if spec.problems.is_empty() || spec.configs.is_empty() || spec.densities.is_empty() || spec.seeds.is_empty() {
        return Err(CliError::Io(std::io::Error::other(
            "sweep spec must list at least one problem, config, density and seed",
        )));
    }
    let scenario = Scenario::from_file(&spec.scenario)?;
    let domain = parse_domain(&std::fs::read_to_string(&spec.domain)?)?;
    let mut problems: BTreeMap<usize, ProblemDef> = BTreeMap::new();
    let mut counts: Vec<usize> = Vec::new();
    for (c, path) in &spec.problems {
        let c: usize = c
            .parse()
            .map_err(|_| CliError::Io(std::io::Error::other(format!("bad target count `{c}`"))))?;
        problems.insert(c, parse_problem(&std::fs::read_to_string(path)?)?);
        counts.push(c);
    }
    counts.sort_unstable();

    struct Job {
        config: u8,
        d: f64,
        c: usize,
        seed: u64,
    }
    let mut jobs = Vec::new();
    for &config in &spec.configs {
        for &d in &spec.densities {
            for &c in &counts {
                for &seed in &spec.seeds {
                    jobs.push(Job { config, d, c, seed });
                }
            }
        }
    }

    let scenario = Arc::new(scenario);
    let domain = Arc::new(domain);
    let problems = Arc::new(problems);
    let eta = spec.eta;
    let queue = Arc::new(Mutex::new(std::collections::VecDeque::from(
        jobs.into_iter().enumerate().collect::<Vec<_>>(),
    )));
    type Cell = (SweepRow, Option<SolveReport>);
    let results: Arc<Mutex<Vec<(usize, Cell)>>> = Arc::new(Mutex::new(Vec::new()));

    let workers = thread_count();
    let mut handles = Vec::new();
    for _ in 0..workers {
        let queue = Arc::clone(&queue);
        let results = Arc::clone(&results);
        let scenario = Arc::clone(&scenario);
        let domain = Arc::clone(&domain);
        let problems = Arc::clone(&problems);
        handles.push(std::thread::spawn(move || loop {
            let job = queue.lock().unwrap().pop_front();
            let Some((idx, job)) = job else { break };
            // A cell failure (unsolvable config, disconnected map, ...) is
            // recorded as an infeasible row, never aborting the sweep.
            let failed = |time_s: f64| SweepRow {
                config: job.config,
                d: job.d,
                c: job.c,
                seed: job.seed,
                time_s,
                cost: f64::NAN,
                feasible: false,
            };
            let t0 = std::time::Instant::now();
            let cell: Cell = match CostConfig::from_index(job.config) {
                None => (failed(0.0), None),
                Some(cfg) => {
                    let mut sc = (*scenario).clone();
                    sc.density = job.d;
                    sc.eta = eta;
                    let problem = &problems[&job.c];
                    match solve(&sc, &domain, problem, cfg, job.seed) {
                        Err(_) => (failed(t0.elapsed().as_secs_f64()), None),
                        Ok(sol) => {
                            let cost = sol
                                .candidate
                                .as_ref()
                                .map(|p| p.total_cost)
                                .unwrap_or(f64::NAN);
                            (
                                SweepRow {
                                    config: job.config,
                                    d: job.d,
                                    c: job.c,
                                    seed: job.seed,
                                    time_s: sol.report.wall_time_s,
                                    cost,
                                    feasible: sol.report.feasible,
                                },
                                Some(sol.report),
                            )
                        }
                    }
                }
            };
            results.lock().unwrap().push((idx, cell));
        }));
    }
    for h in handles {
        h.join().map_err(|_| CliError::WorkerPanic)?;
    }
    let mut collected = Arc::try_unwrap(results)
        .map_err(|_| CliError::WorkerPanic)?
        .into_inner()
        .unwrap();
    collected.sort_by_key(|(idx, _)| *idx);
    Ok(collected.into_iter().map(|(_, cell)| cell).collect())
}

/// Render the world, roadmap path and covariance ellipses of a report's
/// motion legs as a standalone SVG document.
pub fn render_svg(scenario: &Scenario, report: &SolveReport) -> String {
    use std::fmt::Write;
    let [xmin, ymin, xmax, ymax] = scenario.bounds;
    let scale = 24.0;
    let w = (xmax - xmin) * scale;
    let h = (ymax - ymin) * scale;
    // world y grows up; svg y grows down
    let tx = |x: f64| (x - xmin) * scale;
    let ty = |y: f64| (ymax - y) * scale;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<rect x="0" y="0" width="{w:.0}" height="{h:.0}" fill="white" stroke="black"/>"#
    )
    .unwrap();
    for poly in &scenario.obstacles {
        let pts: Vec<String> = poly
            .iter()
            .map(|p| format!("{:.1},{:.1}", tx(p[0]), ty(p[1])))
            .collect();
        writeln!(
            s,
            r##"<polygon points="{}" fill="#888" stroke="#444"/>"##,
            pts.join(" ")
        )
        .unwrap();
    }
    for (name, r) in &scenario.regions {
        writeln!(
            s,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#cde" fill-opacity="0.5" stroke="#69a"/>"##,
            tx(r[0]),
            ty(r[3]),
            (r[2] - r[0]) * scale,
            (r[3] - r[1]) * scale
        )
        .unwrap();
        writeln!(
            s,
            r##"<text x="{:.1}" y="{:.1}" font-size="12" fill="#247">{}</text>"##,
            tx(r[0]) + 3.0,
            ty(r[3]) + 14.0,
            name
        )
        .unwrap();
    }
    for lm in &scenario.landmarks {
        writeln!(
            s,
            r##"<polygon points="{}" fill="#e63"/><circle cx="{:.1}" cy="{:.1}" r="{:.1}" fill="none" stroke="#e63" stroke-dasharray="4 4" stroke-opacity="0.4"/>"##,
            star_points(tx(lm.x), ty(lm.y), 6.0),
            tx(lm.x),
            ty(lm.y),
            scenario.sensor_range * scale
        )
        .unwrap();
    }
    for leg in &report.motion_legs {
        let pts: Vec<String> = leg
            .poses
            .iter()
            .map(|p| format!("{:.1},{:.1}", tx(p[0]), ty(p[1])))
            .collect();
        writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#26c" stroke-width="2"/>"##,
            pts.join(" ")
        )
        .unwrap();
        // One node dot and one 1-sigma position ellipse per plan node, from
        // the stored covariance blocks.
        for (p, cov) in leg.poses.iter().zip(&leg.covs) {
            writeln!(
                s,
                r##"<circle cx="{:.1}" cy="{:.1}" r="2" fill="#26c"/>"##,
                tx(p[0]),
                ty(p[1])
            )
            .unwrap();
            let (major, minor, angle) = ellipse_params(*cov);
            // World angle is CCW; the SVG y-axis flip makes screen rotation CW.
            writeln!(
                s,
                r##"<ellipse cx="{:.1}" cy="{:.1}" rx="{:.2}" ry="{:.2}" transform="rotate({:.1} {:.1} {:.1})" fill="none" stroke="#2a2" stroke-opacity="0.7"/>"##,
                tx(p[0]),
                ty(p[1]),
                (major * scale).max(0.5),
                (minor * scale).max(0.5),
                -angle.to_degrees(),
                tx(p[0]),
                ty(p[1])
            )
            .unwrap();
        }
    }
    writeln!(s, "</svg>").unwrap();
    s
}

fn star_points(cx: f64, cy: f64, r: f64) -> String {
    // Five-pointed star, y-down screen coordinates.
    (0..10)
        .map(|i| {
            let radius = if i % 2 == 0 { r } else { r * 0.4 };
            let a = std::f64::consts::PI * (i as f64 / 5.0) - std::f64::consts::FRAC_PI_2;
            format!("{:.1},{:.1}", cx + radius * a.cos(), cy + radius * a.sin())
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// 1-sigma ellipse of a 2x2 position covariance given as [xx, xy, yy]:
/// returns (major axis, minor axis, CCW angle of the major axis in radians).
/// Closed-form symmetric 2x2 eigendecomposition.
pub fn ellipse_params(cov: [f64; 3]) -> (f64, f64, f64) {
    let [a, b, c] = cov;
    let tr = a + c;
    let det = a * c - b * b;
    let disc = ((tr * tr / 4.0) - det).max(0.0).sqrt();
    let l1 = (tr / 2.0 + disc).max(0.0);
    let l2 = (tr / 2.0 - disc).max(0.0);
    let angle = if b.abs() < 1e-15 && a >= c {
        0.0
    } else if b.abs() < 1e-15 {
        std::f64::consts::FRAC_PI_2
    } else {
        (l1 - a).atan2(b)
    };
    (l1.sqrt(), l2.sqrt(), angle)
}

/// Overlay the true-state execution traces on the map.
pub fn render_traces_svg(scenario: &Scenario, traces: &[beltmp::sim::ExecutionTrace]) -> String {
    use std::fmt::Write;
    let [xmin, ymin, xmax, ymax] = scenario.bounds;
    let scale = 24.0;
    let w = (xmax - xmin) * scale;
    let h = (ymax - ymin) * scale;
    let tx = |x: f64| (x - xmin) * scale;
    let ty = |y: f64| (ymax - y) * scale;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<rect x="0" y="0" width="{w:.0}" height="{h:.0}" fill="white" stroke="black"/>"#
    )
    .unwrap();
    for poly in &scenario.obstacles {
        let pts: Vec<String> = poly
            .iter()
            .map(|p| format!("{:.1},{:.1}", tx(p[0]), ty(p[1])))
            .collect();
        writeln!(s, r##"<polygon points="{}" fill="#888" stroke="#444"/>"##, pts.join(" ")).unwrap();
    }
    for (name, r) in &scenario.regions {
        writeln!(
            s,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#69a"/><text x="{:.1}" y="{:.1}" font-size="12" fill="#247">{}</text>"##,
            tx(r[0]),
            ty(r[3]),
            (r[2] - r[0]) * scale,
            (r[3] - r[1]) * scale,
            tx(r[0]) + 3.0,
            ty(r[3]) + 14.0,
            name
        )
        .unwrap();
    }
    for lm in &scenario.landmarks {
        writeln!(s, r##"<polygon points="{}" fill="#e63"/>"##, star_points(tx(lm.x), ty(lm.y), 6.0)).unwrap();
    }
    for trace in traces {
        let pts: Vec<String> = trace
            .steps
            .iter()
            .map(|st| format!("{:.1},{:.1}", tx(st.true_pose[0]), ty(st.true_pose[1])))
            .collect();
        let color = if trace.success { "#2a2" } else { "#c22" };
        writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="{}" stroke-width="1" stroke-opacity="0.6"/>"##,
            pts.join(" "),
            color
        )
        .unwrap();
    }
    writeln!(s, "</svg>").unwrap();
    s
}

/// Simple polyline chart used for the sweep trend plots.
fn render_curves_svg(title: &str, x_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    use std::fmt::Write;
    let (w, h, m) = (480.0, 320.0, 48.0);
    let mut pts: Vec<(f64, f64)> = series.iter().flat_map(|(_, v)| v.iter().copied()).collect();
    pts.retain(|p| p.0.is_finite() && p.1.is_finite());
    let (xmin, xmax) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| {
        (a.0.min(p.0), a.1.max(p.0))
    });
    let (ymin, ymax) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| {
        (a.0.min(p.1), a.1.max(p.1))
    });
    let xr = (xmax - xmin).max(1e-9);
    let yr = (ymax - ymin).max(1e-9);
    let tx = |x: f64| m + (x - xmin) / xr * (w - 2.0 * m);
    let ty = |y: f64| h - m - (y - ymin) / yr * (h - 2.0 * m);
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect x="0" y="0" width="{w:.0}" height="{h:.0}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r##"<text x="{:.0}" y="20" font-size="14" fill="#111">{title}</text><text x="{:.0}" y="{:.0}" font-size="12" fill="#111">{x_label}</text><text x="12" y="{:.0}" font-size="12" fill="#111" transform="rotate(-90 12 {:.0})">time_s</text>"##,
        m,
        w / 2.0 - 20.0,
        h - 12.0,
        h / 2.0,
        h / 2.0
    )
    .unwrap();
    writeln!(
        s,
        r##"<polyline points="{:.0},{:.0} {:.0},{:.0} {:.0},{:.0}" fill="none" stroke="#111"/>"##,
        m,
        m,
        m,
        h - m,
        w - m,
        h - m
    )
    .unwrap();
    let palette = ["#26c", "#c22", "#2a2", "#c82", "#82c", "#2ac"];
    for (i, (label, curve)) in series.iter().enumerate() {
        let color = palette[i % palette.len()];
        let line: Vec<String> = curve
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|p| format!("{:.1},{:.1}", tx(p.0), ty(p.1)))
            .collect();
        if line.len() > 1 {
            writeln!(
                s,
                r##"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"##,
                line.join(" "),
                color
            )
            .unwrap();
        }
        for p in curve.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
            writeln!(s, r##"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{}"/>"##, tx(p.0), ty(p.1), color).unwrap();
        }
        writeln!(
            s,
            r##"<text x="{:.0}" y="{:.0}" font-size="12" fill="{}">{}</text>"##,
            w - m - 110.0,
            m + 16.0 * (i as f64 + 1.0),
            color,
            label
        )
        .unwrap();
    }
    writeln!(s, "</svg>").unwrap();
    s
}

/// Run the sweep and write its artifact set into `out_dir`: one report and
/// path plot per solved cell, the aggregated CSV, and the trend curves.
pub fn run_experiment(spec: &SweepSpec, out_dir: &Path) -> Result<Vec<SweepRow>, CliError> {
    let cells = run_sweep_full(spec)?;
    std::fs::create_dir_all(out_dir)?;
    let scenario = Scenario::from_file(&spec.scenario)?;
    let mut rows = Vec::with_capacity(cells.len());
    for (row, report) in cells {
        if let Some(report) = report {
            let stem = format!("cell-c{}-d{}-n{}-s{}", row.config, row.d, row.c, row.seed);
            std::fs::write(out_dir.join(format!("{stem}.json")), report.to_json())?;
            std::fs::write(out_dir.join(format!("{stem}.svg")), render_svg(&scenario, &report))?;
        }
        rows.push(row);
    }
    std::fs::write(out_dir.join("sweep.csv"), rows_to_csv(&rows))?;

    // Mean time vs target count, one curve per (config, density).
    let key_of = |r: &SweepRow| (r.config, r.d.to_bits());
    let mut groups: BTreeMap<(u8, u64), BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for r in &rows {
        groups.entry(key_of(r)).or_default().entry(r.c).or_default().push(r.time_s);
    }
    let series: Vec<(String, Vec<(f64, f64)>)> = groups
        .iter()
        .map(|(&(config, dbits), by_c)| {
            let d = f64::from_bits(dbits);
            let curve = by_c
                .iter()
                .map(|(&c, ts)| (c as f64, ts.iter().sum::<f64>() / ts.len() as f64))
                .collect();
            (format!("config {config}, d={d}"), curve)
        })
        .collect();
    std::fs::write(
        out_dir.join("time_vs_targets.svg"),
        render_curves_svg("mean planning time vs target count", "c", &series),
    )?;

    // Time vs plan length scatter (feasible cells), one series per config.
    let mut by_config: BTreeMap<u8, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.feasible) {
        by_config.entry(r.config).or_default().push((r.cost, r.time_s));
    }
    let series: Vec<(String, Vec<(f64, f64)>)> = by_config
        .into_iter()
        .map(|(config, mut v)| {
            v.sort_by(|a, b| a.0.total_cmp(&b.0));
            (format!("config {config}"), v)
        })
        .collect();
    std::fs::write(
        out_dir.join("time_vs_length.svg"),
        render_curves_svg("planning time vs plan cost", "plan cost", &series),
    )?;
    Ok(rows)
}
