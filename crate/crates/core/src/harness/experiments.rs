//! The six experiment kinds and their file output.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::analysis::{
    conservation_drift, energy, fit_rate, sobolev_norm, uniformity_check, NormSpec, UniformityReport,
};
use crate::error::{Error, Result};
use crate::evolve::{adaptive_run, plan_steps, Observer, RunOptions, StepRecord, WaveState};
use crate::geometry::{Grid, ScalarField, VectorField};
use crate::harness::config::{ExperimentConfig, ExperimentKind};
use crate::harness::output::{config_hash, num, write_snapshot, CsvTable, Manifest};
use crate::media::{ItmSchedule, ItmWindow, Medium};
use crate::refocus::{clear_radius, refocus_metrics, refocus_prediction, remainder_experiment, RefocusReport};
use crate::spectral_oracle::evolve_exact_from;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Identifies the configuration behind every reported number.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
}

impl Provenance {
    pub fn new(config: &ExperimentConfig, seed: u64) -> Result<Self> {
        Ok(Provenance {
            config_hash: config_hash(config, seed)?,
            seed,
            code_version: CODE_VERSION.to_string(),
        })
    }
}

/// Problem data resolved on one grid.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub grid: Grid,
    pub medium: Medium,
    pub schedule: ItmSchedule,
    pub initial: WaveState,
}

impl Scenario {
    pub fn build(config: &ExperimentConfig, seed: u64) -> Result<Self> {
        Scenario::with_points(config, config.points(), seed)
    }

    pub fn with_points(config: &ExperimentConfig, points: usize, seed: u64) -> Result<Self> {
        let grid = config.grid_with_points(points)?;
        Ok(Scenario {
            medium: config.medium_at(&grid)?,
            schedule: config.schedule()?,
            initial: config.initial_state(&grid, seed)?,
            grid,
        })
    }
}

fn norm_h_minus_1(v: &VectorField) -> f64 {
    v.components()
        .iter()
        .map(|c| sobolev_norm(c, NormSpec::H_MINUS_1).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn sorted_desc(eps: &[f64]) -> Vec<f64> {
    let mut e = eps.to_vec();
    e.sort_by(|a, b| b.partial_cmp(a).expect("finite ε"));
    e.dedup();
    e
}

fn measurement_times(config: &ExperimentConfig, mirror: &ItmWindow) -> Vec<f64> {
    config
        .sweep
        .times
        .clone()
        .unwrap_or_else(|| vec![2.0 * mirror.center(), 2.0 * mirror.center() + 0.5])
}

/// Slope band used by [`sweep_epsilon`]: `[0.85, 1.15]` in one dimension,
/// `[0.8, 1.2]` in two.
pub fn slope_band(dim: usize) -> (f64, f64) {
    if dim == 1 {
        (0.85, 1.15)
    } else {
        (0.8, 1.2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub tau: f64,
    /// `None` when the run was skipped as unreliable.
    pub norm_w_l2: Option<f64>,
    pub norm_big_w_hm1: Option<f64>,
    pub window_steps: usize,
    pub reliable: bool,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepFit {
    pub tau: f64,
    /// `None` when the fit is not applicable (fewer than three reliable
    /// rows, or a vanishing norm).
    pub slope_w: Option<f64>,
    pub slope_big_w: Option<f64>,
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    /// Sorted by ε descending, then by τ.
    pub rows: Vec<SweepRow>,
    pub fits: Vec<SweepFit>,
    pub band: (f64, f64),
    pub provenance: Provenance,
}

impl SweepReport {
    /// Sorts the rows and fits slopes per `τ`, skipping unreliable rows.
    pub fn from_rows(mut rows: Vec<SweepRow>, band: (f64, f64), provenance: Provenance) -> Self {
        rows.sort_by(|a, b| {
            b.epsilon
                .partial_cmp(&a.epsilon)
                .expect("finite ε")
                .then(a.tau.partial_cmp(&b.tau).expect("finite τ"))
        });
        let mut taus: Vec<f64> = rows.iter().map(|r| r.tau).collect();
        taus.sort_by(|a, b| a.partial_cmp(b).expect("finite τ"));
        taus.dedup();
        let fits = taus
            .into_iter()
            .map(|tau| {
                let usable: Vec<&SweepRow> = rows.iter().filter(|r| r.tau == tau && r.reliable).collect();
                let fit = |pick: fn(&SweepRow) -> Option<f64>| {
                    let pts: Option<Vec<(f64, f64)>> =
                        usable.iter().map(|r| pick(r).map(|v| (r.epsilon, v))).collect();
                    pts.and_then(|p| fit_rate(&p).ok())
                };
                let slope_w = fit(|r| r.norm_w_l2);
                let slope_big_w = fit(|r| r.norm_big_w_hm1);
                let inside = |s: f64| s >= band.0 && s <= band.1;
                let pass = match (slope_w, slope_big_w) {
                    (Some(a), Some(b)) => Some(inside(a) && inside(b)),
                    _ => None,
                };
                SweepFit {
                    tau,
                    slope_w,
                    slope_big_w,
                    pass,
                }
            })
            .collect();
        SweepReport {
            rows,
            fits,
            band,
            provenance,
        }
    }

    pub fn fit_at(&self, tau: f64) -> Option<&SweepFit> {
        self.fits.iter().find(|f| f.tau == tau)
    }

    fn slope_flag(&self, row: &SweepRow) -> &'static str {
        if !row.reliable {
            return "unreliable";
        }
        match self.fit_at(row.tau).and_then(|f| f.pass) {
            Some(true) => "pass",
            Some(false) => "fail",
            None => "n/a",
        }
    }
}

/// Remainder norms at the measurement times for every ε, with log–log
/// slopes per time.
pub fn sweep_epsilon(config: &ExperimentConfig, eps: &[f64], seed: u64) -> Result<SweepReport> {
    if eps.len() < 3 {
        return Err(Error::InvalidArgument(format!("a sweep needs at least 3 ε values, got {}", eps.len())));
    }
    let scenario = Scenario::build(config, seed)?;
    let mirror = config.mirror()?;
    let times = measurement_times(config, &mirror);
    let cap = config.run.max_window_steps;
    let rows: Vec<Vec<SweepRow>> = sorted_desc(eps)
        .par_iter()
        .map(|&e| -> Result<Vec<SweepRow>> {
            let start = Instant::now();
            let schedule = scenario.schedule.with_width(e)?;
            let t_max = times.iter().cloned().fold(0.0, f64::max);
            let plan = plan_steps(
                &scenario.medium,
                &schedule,
                0.0,
                &RunOptions::until(t_max).with_snapshots(&times).with_cfl(config.run.cfl),
            )?;
            let window_steps = plan.window_step_count();
            if window_steps > cap {
                return Ok(times
                    .iter()
                    .map(|&tau| SweepRow {
                        epsilon: e,
                        tau,
                        norm_w_l2: None,
                        norm_big_w_hm1: None,
                        window_steps,
                        reliable: false,
                        runtime_s: 0.0,
                    })
                    .collect());
            }
            let r = remainder_experiment(&scenario.initial, &scenario.medium, &schedule, &times, config.run.cfl)?;
            let runtime_s = start.elapsed().as_secs_f64();
            Ok(times
                .iter()
                .enumerate()
                .map(|(i, &tau)| SweepRow {
                    epsilon: e,
                    tau,
                    norm_w_l2: Some(r.w[i].norm_l2()),
                    norm_big_w_hm1: Some(norm_h_minus_1(&r.big_w[i])),
                    window_steps,
                    reliable: true,
                    runtime_s,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(SweepReport::from_rows(
        rows.into_iter().flatten().collect(),
        slope_band(config.grid.dim),
        Provenance::new(config, seed)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub points: usize,
    pub time: f64,
    pub l2_error: f64,
    pub h1_error: f64,
    /// `log₂` of the error ratio to the next coarser level.
    pub order_l2: Option<f64>,
    pub order_h1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub rows: Vec<OracleRow>,
    pub provenance: Provenance,
}

impl OracleReport {
    /// Orders measured at `time` between successive levels.
    pub fn orders_at(&self, time: f64) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.time == time)
            .filter_map(|r| r.order_l2)
            .collect()
    }
}

/// Time-domain solver against the exact spectral solution on `levels`
/// dyadic refinements of the configured grid.
pub fn compare_oracle(config: &ExperimentConfig, levels: usize, seed: u64) -> Result<OracleReport> {
    let base = config.points();
    let mut times = config.run.snapshots.clone();
    if times.is_empty() {
        times.push(config.run.t_end);
    }
    let per_level: Vec<Vec<(f64, f64, f64)>> = (0..levels)
        .into_par_iter()
        .map(|level| -> Result<Vec<(f64, f64, f64)>> {
            let scenario = Scenario::with_points(config, base << level, seed)?;
            let c2 = scenario.medium.constant_coefficient().ok_or_else(|| {
                Error::InvalidArgument("oracle comparison needs uniform a, b and chi = 1".into())
            })?;
            let opts = RunOptions::until(config.run.t_end)
                .with_snapshots(&times)
                .with_cfl(config.run.cfl);
            let (_, trace) = adaptive_run(&scenario.initial, &scenario.medium, &scenario.schedule, &opts, &mut ())?;
            times
                .iter()
                .map(|&t| {
                    let exact = evolve_exact_from(&scenario.initial, &scenario.schedule, t, c2)?;
                    let got = trace.snapshot_at(t).expect("snapshot requested");
                    let diff = got.u.sub(&exact.u)?;
                    Ok((t, diff.norm_l2(), sobolev_norm(&diff, NormSpec::H1)))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let order = |coarse: f64, fine: f64| {
        if coarse > 0.0 && fine > 0.0 {
            Some((coarse / fine).log2())
        } else {
            None
        }
    };
    let mut rows = Vec::new();
    for (level, errs) in per_level.iter().enumerate() {
        for (i, &(t, l2, h1)) in errs.iter().enumerate() {
            let prev = (level > 0).then(|| per_level[level - 1][i]);
            rows.push(OracleRow {
                points: base << level,
                time: t,
                l2_error: l2,
                h1_error: h1,
                order_l2: prev.and_then(|p| order(p.1, l2)),
                order_h1: prev.and_then(|p| order(p.2, h1)),
            });
        }
    }
    Ok(OracleReport {
        rows,
        provenance: Provenance::new(config, seed)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefocusStudy {
    /// Sorted by ε descending.
    pub reports: Vec<RefocusReport>,
    pub center: [f64; 2],
    pub radius: f64,
    /// Correlation increases and `|1 - amplitude ratio|` decreases along
    /// the sweep.
    pub correlation_improves: bool,
    pub amplitude_improves: bool,
    pub warnings: Vec<String>,
    pub provenance: Provenance,
}

/// Refocused field at `2T` against `-(η₀/2) u₁` for each configured ε.
pub fn refocus_study(config: &ExperimentConfig, seed: u64) -> Result<RefocusStudy> {
    let scenario = Scenario::build(config, seed)?;
    let mirror = config.mirror()?;
    let t_refocus = 2.0 * mirror.center();
    let mut warnings = Vec::new();
    if scenario.initial.ut.max_abs() == 0.0 {
        warnings.push("u1 vanishes, so the refocused field is invisible in u".to_string());
    }
    let support = config.u1_support();
    let center = match (&config.refocus.center, support) {
        (Some(c), _) => [c[0], c.get(1).copied().unwrap_or(0.0)],
        (None, Some((c, _))) => c,
        (None, None) => {
            let half = 0.5 * config.grid.length;
            [half, if config.grid.dim == 2 { half } else { 0.0 }]
        }
    };
    let radius = match (config.refocus.radius, support) {
        (Some(r), _) => r,
        (None, Some((_, w))) => clear_radius(&scenario.medium, t_refocus, 3.5 * w),
        (None, None) => {
            return Err(Error::config("refocus.radius", "needed when u1 has no gaussian support"));
        }
    };
    if !(radius > 0.0) {
        return Err(Error::config(
            "refocus.radius",
            format!("forward fronts have not cleared the source at 2T (radius {radius})"),
        ));
    }
    let prediction = refocus_prediction(&scenario.initial.ut, mirror.weight());
    let reports: Vec<RefocusReport> = sorted_desc(&config.refocus.eps)
        .par_iter()
        .map(|&e| -> Result<RefocusReport> {
            let schedule = scenario.schedule.with_width(e)?;
            let opts = RunOptions::until(t_refocus).with_cfl(config.run.cfl);
            let (end, _) = adaptive_run(&scenario.initial, &scenario.medium, &schedule, &opts, &mut ())?;
            Ok(refocus_metrics(&end.u, &prediction, center, radius)?.with_scenario(e, mirror.weight(), mirror.center()))
        })
        .collect::<Result<_>>()?;
    let correlation_improves = reports.windows(2).all(|p| p[1].shape_correlation > p[0].shape_correlation);
    let amplitude_improves = reports
        .windows(2)
        .all(|p| (1.0 - p[1].amplitude_ratio).abs() < (1.0 - p[0].amplitude_ratio).abs());
    Ok(RefocusStudy {
        reports,
        center,
        radius,
        correlation_improves,
        amplitude_improves,
        warnings,
        provenance: Provenance::new(config, seed)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpLimitReport {
    pub time: f64,
    /// `(ε, ‖u_ε(t) - u_jump(t)‖_{L²})`, ε descending.
    pub rows: Vec<(f64, f64)>,
    pub slope: Option<f64>,
    pub provenance: Provenance,
}

/// Distance between finite-width and jump-condition solutions at `2T`.
pub fn jump_limit_study(config: &ExperimentConfig, eps: &[f64], seed: u64) -> Result<JumpLimitReport> {
    let scenario = Scenario::build(config, seed)?;
    let mirror = config.mirror()?;
    let time = 2.0 * mirror.center();
    let solve = |schedule: &ItmSchedule| -> Result<WaveState> {
        let opts = RunOptions::until(time).with_cfl(config.run.cfl);
        Ok(adaptive_run(&scenario.initial, &scenario.medium, schedule, &opts, &mut ())?.0)
    };
    let jump = solve(&scenario.schedule.with_width(0.0)?)?;
    let rows: Vec<(f64, f64)> = sorted_desc(eps)
        .par_iter()
        .map(|&e| -> Result<(f64, f64)> {
            let u = solve(&scenario.schedule.with_width(e)?)?;
            Ok((e, u.u.sub(&jump.u)?.norm_l2()))
        })
        .collect::<Result<_>>()?;
    Ok(JumpLimitReport {
        time,
        slope: fit_rate(&rows).ok(),
        rows,
        provenance: Provenance::new(config, seed)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformityStudy {
    pub time: f64,
    pub report: UniformityReport,
    pub grows_monotonically: bool,
    /// Whether the exact spectral solver produced the states.
    pub spectral: bool,
    pub provenance: Provenance,
}

/// `‖u_ε(2T)‖_{H²} + ‖∂ₜu_ε(2T)‖_{H¹}` across ε. Constant-coefficient
/// scenarios use the exact spectral solution.
pub fn uniformity_study(config: &ExperimentConfig, eps: &[f64], seed: u64) -> Result<UniformityStudy> {
    let scenario = Scenario::build(config, seed)?;
    let mirror = config.mirror()?;
    let time = 2.0 * mirror.center();
    let c2 = scenario.medium.constant_coefficient();
    let states: Vec<(f64, WaveState)> = sorted_desc(eps)
        .par_iter()
        .map(|&e| -> Result<(f64, WaveState)> {
            let schedule = scenario.schedule.with_width(e)?;
            let state = match c2 {
                Some(c2) => evolve_exact_from(&scenario.initial, &schedule, time, c2)?,
                None => {
                    let opts = RunOptions::until(time).with_cfl(config.run.cfl);
                    adaptive_run(&scenario.initial, &scenario.medium, &schedule, &opts, &mut ())?.0
                }
            };
            Ok((e, state))
        })
        .collect::<Result<_>>()?;
    let report = uniformity_check(&states, (NormSpec::H2, NormSpec::H1))?;
    Ok(UniformityStudy {
        time,
        grows_monotonically: report.ratio_grows_monotonically(),
        report,
        spectral: c2.is_some(),
        provenance: Provenance::new(config, seed)?,
    })
}

/// Largest `|u|` on the faces of the box relative to the largest `|u|`
/// anywhere, both taken over a whole run.
pub const WRAP_AROUND_LIMIT: f64 = 1e-8;

#[derive(Debug, Clone, Copy, Default)]
pub struct BoundaryMonitor {
    pub boundary_max: f64,
    pub peak: f64,
}

impl BoundaryMonitor {
    pub fn observe(&mut self, u: &ScalarField) {
        let grid = u.grid();
        let last = grid.points() - 1;
        for (i, &v) in u.values().iter().enumerate() {
            let a = v.abs();
            self.peak = self.peak.max(a);
            let idx = grid.axis_indices(i);
            if idx[..grid.dim()].iter().any(|&m| m == 0 || m == last) {
                self.boundary_max = self.boundary_max.max(a);
            }
        }
    }

    pub fn ratio(&self) -> f64 {
        if self.peak == 0.0 {
            0.0
        } else {
            self.boundary_max / self.peak
        }
    }
}

impl Observer for BoundaryMonitor {
    fn on_step(&mut self, state: &WaveState, _step: &StepRecord) {
        self.observe(&state.u);
    }
}

/// Runs the configured scenario up to the latest time any experiment kind
/// looks at and returns a warning when the field reaches the box faces.
pub fn wrap_around_warning(config: &ExperimentConfig, seed: u64) -> Result<Option<String>> {
    let scenario = Scenario::build(config, seed)?;
    let mut initial = BoundaryMonitor::default();
    initial.observe(&scenario.initial.u);
    initial.observe(&scenario.initial.ut);
    if initial.ratio() > WRAP_AROUND_LIMIT {
        return Ok(Some(format!(
            "initial data is not localised (boundary/peak {:.2e}); results include periodic wrap-around",
            initial.ratio()
        )));
    }
    let horizon = config
        .sweep
        .times
        .iter()
        .flatten()
        .fold(config.run.t_end, |a, &b| a.max(b));
    let mut monitor = BoundaryMonitor::default();
    monitor.observe(&scenario.initial.u);
    let opts = RunOptions::until(horizon).with_cfl(config.run.cfl);
    adaptive_run(&scenario.initial, &scenario.medium, &scenario.schedule, &opts, &mut monitor)?;
    Ok((monitor.ratio() > WRAP_AROUND_LIMIT).then(|| {
        format!(
            "field at the box faces reaches {:.2e} of its peak by t = {horizon} (limit {WRAP_AROUND_LIMIT:e}); enlarge grid.length",
            monitor.ratio()
        )
    }))
}

/// Where and how an experiment runs.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub out_dir: PathBuf,
    /// Overrides the configured seed.
    pub seed: Option<u64>,
    pub threads: usize,
}

impl RunContext {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunContext {
            out_dir: out_dir.into(),
            seed: None,
            threads: rayon::current_num_threads(),
        }
    }
}

/// Files written and summary of one experiment.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
}

struct Written {
    files: Vec<String>,
    summary: serde_json::Value,
    timings: serde_json::Value,
    warnings: Vec<String>,
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Runs `config.kind` and writes its tables and `manifest.json` into
/// `ctx.out_dir`.
pub fn run_experiment(config: &ExperimentConfig, ctx: &RunContext) -> Result<Outcome> {
    config.validate()?;
    let seed = ctx.seed.or(config.seed).unwrap_or(0);
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let clock = Instant::now();
    std::fs::create_dir_all(&ctx.out_dir)?;
    let hash = config_hash(config, seed)?;
    let dir = ctx.out_dir.as_path();
    let written = match config.kind {
        ExperimentKind::Run => write_run(config, seed, &hash, dir),
        ExperimentKind::Sweep => write_sweep(config, seed, &hash, dir),
        ExperimentKind::Oracle => write_oracle(config, seed, &hash, dir),
        ExperimentKind::Refocus => write_refocus(config, seed, &hash, dir),
        ExperimentKind::JumpLimit => write_jump_limit(config, seed, &hash, dir),
        ExperimentKind::Uniformity => write_uniformity(config, seed, &hash, dir),
    }
    .map_err(|e| Error::InvalidArgument(format!("{} experiment failed: {e}", config.kind.name())))?;
    let mut warnings = written.warnings;
    if let Some(w) = wrap_around_warning(config, seed)? {
        eprintln!("warning: {w}");
        warnings.push(w);
    }
    let manifest = Manifest {
        kind: config.kind.name().to_string(),
        config_hash: hash,
        code_version: CODE_VERSION.to_string(),
        seed,
        threads: ctx.threads,
        started_unix_s: started,
        wall_time_s: clock.elapsed().as_secs_f64(),
        files: written.files,
        warnings,
        summary: written.summary,
        timings: written.timings,
        config: serde_json::to_value(config)?,
    };
    let manifest_path = manifest.write(dir)?;
    Ok(Outcome {
        manifest,
        manifest_path,
    })
}

fn write_run(config: &ExperimentConfig, seed: u64, hash: &str, dir: &Path) -> Result<Written> {
    let scenario = Scenario::build(config, seed)?;
    let mut snaps = config.run.snapshots.clone();
    snaps.push(config.run.t_end);
    snaps.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    snaps.dedup();
    let mut opts = RunOptions::until(config.run.t_end)
        .with_snapshots(&snaps)
        .with_cfl(config.run.cfl);
    opts.record_energy = true;
    let clock = Instant::now();
    let (_, trace) = adaptive_run(&scenario.initial, &scenario.medium, &scenario.schedule, &opts, &mut ())?;
    let run_s = clock.elapsed().as_secs_f64();
    let c2 = scenario.medium.constant_coefficient();
    let mut files = Vec::new();

    let mut index = CsvTable::create(
        &dir.join("snapshots.csv"),
        &["index", "file", "time", "u_l2", "ut_l2", "energy", "oracle_l2_error", "config_hash"],
    )?;
    let mut max_oracle: Option<f64> = None;
    for (i, s) in trace.snapshots.iter().enumerate() {
        let name = format!("snapshot_{i:04}.itmf");
        write_snapshot(&dir.join(&name), s)?;
        files.push(name.clone());
        let oracle = match c2 {
            Some(c2) => {
                let exact = evolve_exact_from(&scenario.initial, &scenario.schedule, s.t, c2)?;
                let e = s.u.sub(&exact.u)?.norm_l2();
                max_oracle = Some(max_oracle.map_or(e, |m| m.max(e)));
                e
            }
            None => f64::NAN,
        };
        index.row(&[
            i.to_string(),
            name,
            num(s.t),
            num(s.u.norm_l2()),
            num(s.ut.norm_l2()),
            num(energy(s, &scenario.medium)),
            num(oracle),
            hash.to_string(),
        ])?;
    }
    files.push(file_name(&index.finish()?));

    let mut table = CsvTable::create(
        &dir.join("energy.csv"),
        &["t", "energy", "itm_energy", "eta_level", "combined", "discrete", "dt", "segment", "config_hash"],
    )?;
    for r in &trace.energy {
        table.row(&[
            num(r.t),
            num(r.energy),
            num(r.itm_energy),
            num(r.eta_level),
            num(r.combined),
            num(r.discrete),
            num(r.dt),
            r.segment.to_string(),
            hash.to_string(),
        ])?;
    }
    files.push(file_name(&table.finish()?));
    let drift = conservation_drift(&trace, &scenario.medium).ok();
    Ok(Written {
        files,
        summary: json!({
            "steps": trace.steps.len(),
            "window_steps": trace.window_step_count(),
            "edge_events": trace.events.len(),
            "max_oracle_l2_error": max_oracle,
            "energy_drift": drift,
        }),
        timings: json!({ "run_s": run_s }),
        warnings: Vec::new(),
    })
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn write_sweep(config: &ExperimentConfig, seed: u64, hash: &str, dir: &Path) -> Result<Written> {
    let report = sweep_epsilon(config, &config.sweep.eps, seed)?;
    let mut table = CsvTable::create(
        &dir.join("sweep.csv"),
        &[
            "epsilon",
            "norm_w_L2",
            "norm_W_Hm1",
            "slope_flag",
            "tau",
            "window_steps",
            "reliable",
            "config_hash",
        ],
    )?;
    for r in &report.rows {
        table.row(&[
            num(r.epsilon),
            opt_num(r.norm_w_l2),
            opt_num(r.norm_big_w_hm1),
            report.slope_flag(r).to_string(),
            num(r.tau),
            r.window_steps.to_string(),
            r.reliable.to_string(),
            hash.to_string(),
        ])?;
    }
    let mut fits = CsvTable::create(
        &dir.join("sweep_fits.csv"),
        &["tau", "slope_w_L2", "slope_W_Hm1", "band_low", "band_high", "pass", "config_hash"],
    )?;
    for f in &report.fits {
        fits.row(&[
            num(f.tau),
            opt_num(f.slope_w),
            opt_num(f.slope_big_w),
            num(report.band.0),
            num(report.band.1),
            f.pass.map(|p| p.to_string()).unwrap_or_else(|| "n/a".into()),
            hash.to_string(),
        ])?;
    }
    let files = vec![file_name(&table.finish()?), file_name(&fits.finish()?)];
    let timings: Vec<_> = report
        .rows
        .iter()
        .filter(|r| r.tau == report.rows[0].tau)
        .map(|r| json!({ "epsilon": r.epsilon, "runtime_s": r.runtime_s }))
        .collect();
    let warnings = report
        .rows
        .iter()
        .filter(|r| !r.reliable)
        .map(|r| format!("ε = {} needs {} window steps; row excluded from fits", r.epsilon, r.window_steps))
        .collect();
    Ok(Written {
        files,
        summary: json!({ "fits": report.fits, "band": report.band }),
        timings: json!(timings),
        warnings,
    })
}

fn write_oracle(config: &ExperimentConfig, seed: u64, hash: &str, dir: &Path) -> Result<Written> {
    let report = compare_oracle(config, config.oracle.levels, seed)?;
    let mut table = CsvTable::create(
        &dir.join("oracle.csv"),
        &["points", "time", "l2_error", "h1_error", "order_l2", "order_h1", "config_hash"],
    )?;
    for r in &report.rows {
        table.row(&[
            r.points.to_string(),
            num(r.time),
            num(r.l2_error),
            num(r.h1_error),
            opt_num(r.order_l2),
            opt_num(r.order_h1),
            hash.to_string(),
        ])?;
    }
    let final_time = report.rows.last().map(|r| r.time).unwrap_or(0.0);
    Ok(Written {
        files: vec![file_name(&table.finish()?)],
        summary: json!({ "orders_at_final_time": report.orders_at(final_time) }),
        timings: json!({}),
        warnings: Vec::new(),
    })
}

fn write_refocus(config: &ExperimentConfig, seed: u64, hash: &str, dir: &Path) -> Result<Written> {
    let study = refocus_study(config, seed)?;
    let mut table = CsvTable::create(
        &dir.join("refocus.csv"),
        &[
            "epsilon",
            "eta0",
            "mirror_time",
            "shape_correlation",
            "amplitude_ratio",
            "peak_location_error",
            "config_hash",
        ],
    )?;
    for r in &study.reports {
        table.row(&[
            opt_num(r.epsilon),
            opt_num(r.eta0),
            opt_num(r.mirror_time),
            num(r.shape_correlation),
            num(r.amplitude_ratio),
            num(r.peak_location_error),
            hash.to_string(),
        ])?;
    }
    for w in &study.warnings {
        eprintln!("warning: {w}");
    }
    Ok(Written {
        files: vec![file_name(&table.finish()?)],
        summary: json!({
            "center": study.center,
            "radius": study.radius,
            "correlation_improves": study.correlation_improves,
            "amplitude_improves": study.amplitude_improves,
        }),
        timings: json!({}),
        warnings: study.warnings,
    })
}

fn write_jump_limit(config: &ExperimentConfig, seed: u64, hash: &str, dir: &Path) -> Result<Written> {
    let report = jump_limit_study(config, &config.sweep.eps, seed)?;
    let mut table = CsvTable::create(&dir.join("jump_limit.csv"), &["epsilon", "time", "l2_difference", "config_hash"])?;
    for &(e, d) in &report.rows {
        table.row(&[num(e), num(report.time), num(d), hash.to_string()])?;
    }
    Ok(Written {
        files: vec![file_name(&table.finish()?)],
        summary: json!({ "time": report.time, "slope": report.slope }),
        timings: json!({}),
        warnings: Vec::new(),
    })
}

fn write_uniformity(config: &ExperimentConfig, seed: u64, hash: &str, dir: &Path) -> Result<Written> {
    let study = uniformity_study(config, &config.sweep.eps, seed)?;
    let mut table = CsvTable::create(
        &dir.join("uniformity.csv"),
        &["epsilon", "time", "norm_u_H2", "norm_ut_H1", "total", "config_hash"],
    )?;
    for r in &study.report.rows {
        table.row(&[
            num(r.epsilon),
            num(study.time),
            num(r.norm_u),
            num(r.norm_ut),
            num(r.total),
            hash.to_string(),
        ])?;
    }
    Ok(Written {
        files: vec![file_name(&table.finish()?)],
        summary: json!({
            "ratio": study.report.ratio,
            "pass": study.report.pass,
            "grows_monotonically": study.grows_monotonically,
            "spectral": study.spectral,
        }),
        timings: json!({}),
        warnings: Vec::new(),
    })
}
