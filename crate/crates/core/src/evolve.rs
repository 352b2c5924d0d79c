//! Time-domain solvers.
//!
//! * the second-order stepper for `∂ₜ²u = a ∇·(b(1 + χη)∇u)`,
//! * the first-order system in `(v, u)` and its time-reversal map `Γ`,
//! * the jump-condition limit, where a zero-width window kicks `∂ₜu` by
//!   `η₀ a ∇·(b χ ∇u)`.
//!
//! Both steppers are explicit leapfrog schemes written in kick–drift–kick
//! form. For the second-order equation this is the two-level recursion
//! `uⁿ⁺¹ = 2uⁿ - uⁿ⁻¹ + dt² L uⁿ` with `∂ₜuⁿ = (uⁿ⁺¹ - uⁿ⁻¹)/2dt`, and the
//! first step is the Taylor start `u⁰ + dt u¹ + ½dt² L u⁰`. Carrying `∂ₜu`
//! explicitly lets the step size change at window edges, where `∂ₜu` is
//! continuous but `∂ₜ²u` jumps.
//!
//! Steps never straddle a window edge: [`plan_steps`] puts a step boundary at
//! every `T ± ε/2`, every jump time and every snapshot time, so the
//! coefficient is constant over each executed step.

use crate::analysis::{energy_record, EnergyRecord};
use crate::error::{Error, Result};
use crate::geometry::{
    fft, flux_divergence, flux_divergence_into, gradient, divergence, spectral_gradient, ScalarField,
    Spectrum, VectorField,
};
use crate::media::{effective_b_at_level, ItmSchedule, Medium};

/// Default Courant number used when planning steps.
pub const DEFAULT_CFL: f64 = 0.5;

/// Courant number at which the explicit steppers stop being stable; single
/// steps beyond it are rejected.
pub const STABILITY_CFL: f64 = 1.0;

/// `(u, ∂ₜu)` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    pub u: ScalarField,
    pub ut: ScalarField,
    pub t: f64,
}

impl WaveState {
    pub fn new(u: ScalarField, ut: ScalarField, t: f64) -> Result<Self> {
        u.check_same_grid(&ut)?;
        u.check_finite("u")?;
        ut.check_finite("ut")?;
        Ok(WaveState { u, ut, t })
    }

    pub fn zeros(grid: &crate::geometry::Grid) -> Self {
        WaveState {
            u: ScalarField::zeros(grid),
            ut: ScalarField::zeros(grid),
            t: 0.0,
        }
    }
}

/// Initial state `(u₀, u₁)` at `t = 0`.
pub fn init_state(u0: &ScalarField, u1: &ScalarField) -> Result<WaveState> {
    WaveState::new(u0.clone(), u1.clone(), 0.0)
}

/// Flux and height `(v, u)` of the first-order system
/// `[b(1+χη)]⁻¹ ∂ₜv + ∇u = 0`, `a⁻¹ ∂ₜu + ∇·v = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderState {
    pub v: VectorField,
    pub u: ScalarField,
    pub t: f64,
}

/// Largest stable step for a coefficient level, `cfl h / (√d max c_eff)`.
fn dt_for_level(medium: &Medium, level: f64, cfl: f64) -> f64 {
    let grid = medium.grid();
    let max_c2 = medium
        .c_sq()
        .values()
        .iter()
        .zip(medium.chi().values())
        .map(|(c2, chi)| c2 * (1.0 + chi * level))
        .fold(0.0, f64::max);
    cfl * grid.spacing() / ((grid.dim() as f64).sqrt() * max_c2.sqrt())
}

fn check_no_edge_inside(schedule: &ItmSchedule, t0: f64, t1: f64) -> Result<()> {
    for w in schedule.windows() {
        if w.weight() == 0.0 {
            continue;
        }
        for edge in schedule_edges_of(w) {
            if edge > t0 && edge < t1 {
                return Err(Error::StraddledEdge { t0, t1, edge });
            }
        }
    }
    Ok(())
}

fn schedule_edges_of(w: &crate::media::ItmWindow) -> Vec<f64> {
    if w.is_jump() {
        vec![w.center()]
    } else {
        vec![w.start(), w.end()]
    }
}

/// CFL step for the interval `(t0, t1)` at the default Courant number.
pub fn cfl_dt(medium: &Medium, schedule: &ItmSchedule, interval: (f64, f64)) -> Result<f64> {
    cfl_dt_with(medium, schedule, interval, DEFAULT_CFL)
}

/// CFL step `cfl h / (√d max_x c_eff)` with `c_eff² = a b (1 + χ η)` on an
/// interval that lies inside one constant-`η` segment.
pub fn cfl_dt_with(medium: &Medium, schedule: &ItmSchedule, interval: (f64, f64), cfl: f64) -> Result<f64> {
    let (t0, t1) = interval;
    check_no_edge_inside(schedule, t0, t1)?;
    let level = schedule.level_at(0.5 * (t0 + t1));
    Ok(dt_for_level(medium, level, cfl))
}

fn check_cfl(medium: &Medium, level: f64, dt: f64) -> Result<()> {
    let limit = dt_for_level(medium, level, STABILITY_CFL);
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::Cfl { dt, limit });
    }
    Ok(())
}

/// One executed (or planned) step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t0: f64,
    pub t1: f64,
    /// `η` on the step.
    pub level: f64,
    /// Window containing the step, if any.
    pub window: Option<usize>,
    /// Index of the constant-`η` segment.
    pub segment: usize,
}

impl StepRecord {
    pub fn dt(&self) -> f64 {
        self.t1 - self.t0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    WindowStart,
    WindowEnd,
    Jump,
}

/// A window edge reached exactly by a step boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeEvent {
    pub time: f64,
    pub window: usize,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq)]
enum PlanItem {
    Step(StepRecord),
    Jump { window: usize, time: f64 },
    Snapshot(f64),
}

/// Ordered step, jump and snapshot sequence for a run.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPlan {
    items: Vec<PlanItem>,
    t0: f64,
    t_end: f64,
}

impl StepPlan {
    pub fn steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.items.iter().filter_map(|i| match i {
            PlanItem::Step(s) => Some(s),
            _ => None,
        })
    }

    pub fn step_count(&self) -> usize {
        self.steps().count()
    }

    /// Number of steps inside finite windows.
    pub fn window_step_count(&self) -> usize {
        self.steps().filter(|s| s.window.is_some()).count()
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }
}

/// Options for [`adaptive_run`].
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub t_end: f64,
    pub cfl: f64,
    /// Times at which observers receive the state; each is hit exactly.
    pub snapshot_times: Vec<f64>,
    pub store_snapshots: bool,
    /// Keep the state at every step boundary inside finite windows.
    pub record_window_states: bool,
    /// Compute an [`EnergyRecord`] at every step boundary.
    pub record_energy: bool,
}

impl RunOptions {
    pub fn until(t_end: f64) -> Self {
        RunOptions {
            t_end,
            cfl: DEFAULT_CFL,
            snapshot_times: Vec::new(),
            store_snapshots: true,
            record_window_states: false,
            record_energy: false,
        }
    }

    pub fn with_snapshots(mut self, times: &[f64]) -> Self {
        self.snapshot_times = times.to_vec();
        self
    }

    pub fn with_cfl(mut self, cfl: f64) -> Self {
        self.cfl = cfl;
        self
    }
}

/// Plans a run from `t0` to `opts.t_end`.
///
/// Breakpoints are the start, the end, every snapshot time and the edges of
/// every window with non-zero weight. Each interval between breakpoints is
/// split into equal steps no larger than the CFL step for its `η` level.
pub fn plan_steps(medium: &Medium, schedule: &ItmSchedule, t0: f64, opts: &RunOptions) -> Result<StepPlan> {
    let t_end = opts.t_end;
    if !(t_end >= t0) {
        return Err(Error::InvalidArgument(format!("t_end = {t_end} precedes t0 = {t0}")));
    }
    if !(opts.cfl > 0.0 && opts.cfl <= STABILITY_CFL) {
        return Err(Error::InvalidArgument(format!("CFL number {} outside (0, 1]", opts.cfl)));
    }
    let mut breaks = vec![t0, t_end];
    for w in schedule.windows().iter().filter(|w| w.weight() != 0.0) {
        breaks.extend(schedule_edges_of(w).into_iter().filter(|&e| e > t0 && e < t_end));
    }
    for &s in &opts.snapshot_times {
        if s < t0 || s > t_end {
            return Err(Error::InvalidArgument(format!("snapshot time {s} outside [{t0}, {t_end}]")));
        }
        breaks.push(s);
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    breaks.dedup();

    let jumps: Vec<(usize, f64)> = schedule
        .windows()
        .iter()
        .enumerate()
        .filter(|(_, w)| w.is_jump() && w.weight() != 0.0 && w.center() > t0 && w.center() <= t_end)
        .map(|(i, w)| (i, w.center()))
        .collect();
    let is_snapshot = |t: f64| opts.snapshot_times.contains(&t);

    let mut items = Vec::new();
    if is_snapshot(t0) {
        items.push(PlanItem::Snapshot(t0));
    }
    let mut segment = 0usize;
    let mut last_level: Option<(f64, Option<usize>)> = None;
    for pair in breaks.windows(2) {
        let (s, e) = (pair[0], pair[1]);
        let mid = 0.5 * (s + e);
        let window = schedule.active_window(mid).filter(|&i| schedule.windows()[i].weight() != 0.0);
        let level = window.map(|i| schedule.windows()[i].level()).unwrap_or(0.0);
        match last_level {
            Some(prev) if prev == (level, window) => {}
            Some(_) => segment += 1,
            None => {}
        }
        last_level = Some((level, window));
        let dt_max = dt_for_level(medium, level, opts.cfl);
        let n = (((e - s) / dt_max) - 1e-9).ceil().max(1.0) as usize;
        let dt = (e - s) / n as f64;
        for i in 0..n {
            let a = s + i as f64 * dt;
            let b = if i + 1 == n { e } else { s + (i + 1) as f64 * dt };
            items.push(PlanItem::Step(StepRecord {
                t0: a,
                t1: b,
                level,
                window,
                segment,
            }));
        }
        for &(w, t) in &jumps {
            if t == e {
                items.push(PlanItem::Jump { window: w, time: t });
                // the jump starts a new constant-coefficient segment
                segment += 1;
                last_level = None;
            }
        }
        if is_snapshot(e) {
            items.push(PlanItem::Snapshot(e));
        }
    }
    Ok(StepPlan { items, t0, t_end })
}

/// Receives states during a run.
pub trait Observer<S = WaveState> {
    fn on_snapshot(&mut self, _state: &S) {}
    fn on_step(&mut self, _state: &S, _step: &StepRecord) {}
}

impl<S> Observer<S> for () {}

/// What a run leaves behind.
#[derive(Debug, Clone)]
pub struct RunTrace<S = WaveState> {
    pub snapshot_times: Vec<f64>,
    pub snapshots: Vec<S>,
    pub steps: Vec<StepRecord>,
    pub events: Vec<EdgeEvent>,
    /// States at every step boundary inside finite windows, tagged with the
    /// window index.
    pub window_states: Vec<(usize, S)>,
    pub energy: Vec<EnergyRecord>,
}

impl<S> Default for RunTrace<S> {
    fn default() -> Self {
        RunTrace {
            snapshot_times: Vec::new(),
            snapshots: Vec::new(),
            steps: Vec::new(),
            events: Vec::new(),
            window_states: Vec::new(),
            energy: Vec::new(),
        }
    }
}

impl<S> RunTrace<S> {
    pub fn window_step_count(&self) -> usize {
        self.steps.iter().filter(|s| s.window.is_some()).count()
    }

    /// Snapshot stored at time `t`, if any.
    pub fn snapshot_at(&self, t: f64) -> Option<&S> {
        self.snapshot_times
            .iter()
            .position(|&s| s == t)
            .and_then(|i| self.snapshots.get(i))
    }
}

/// Kick–drift–kick integrator for the second-order equation, caching the
/// acceleration `a ∇·(b_eff ∇u)` between steps.
struct SecondOrderStepper<'m> {
    medium: &'m Medium,
    level: f64,
    b_eff: ScalarField,
    accel: Option<Vec<f64>>,
}

impl<'m> SecondOrderStepper<'m> {
    fn new(medium: &'m Medium) -> Self {
        SecondOrderStepper {
            medium,
            level: 0.0,
            b_eff: medium.b().clone(),
            accel: None,
        }
    }

    fn set_level(&mut self, level: f64) {
        if level != self.level {
            self.level = level;
            self.b_eff = effective_b_at_level(self.medium, level);
            self.accel = None;
        }
    }

    fn acceleration(&self, u: &ScalarField) -> Vec<f64> {
        let mut out = vec![0.0; u.values().len()];
        flux_divergence_into(u, &self.b_eff, &mut out);
        for (o, a) in out.iter_mut().zip(self.medium.a().values()) {
            *o *= a;
        }
        out
    }

    fn step(&mut self, state: &mut WaveState, dt: f64) {
        let acc = match self.accel.take() {
            Some(a) => a,
            None => self.acceleration(&state.u),
        };
        let half = 0.5 * dt;
        let mut ut: Vec<f64> = state
            .ut
            .values()
            .iter()
            .zip(&acc)
            .map(|(v, a)| v + half * a)
            .collect();
        let u: Vec<f64> = state.u.values().iter().zip(&ut).map(|(u, v)| u + dt * v).collect();
        let u = ScalarField::from_raw(state.u.grid(), u);
        let acc_new = self.acceleration(&u);
        for (v, a) in ut.iter_mut().zip(&acc_new) {
            *v += half * a;
        }
        state.ut = ScalarField::from_raw(state.u.grid(), ut);
        state.u = u;
        state.t += dt;
        self.accel = Some(acc_new);
    }

    /// `∂ₜu += η₀ a ∇·(b χ ∇u)`; `u` and the cached acceleration are unchanged.
    fn jump(&mut self, state: &mut WaveState, eta0: f64) {
        let kick = jump_increment(&state.u, self.medium, eta0, self.medium.chi());
        state.ut.add_scaled(1.0, &kick);
    }
}

fn jump_increment(u: &ScalarField, medium: &Medium, eta0: f64, chi: &ScalarField) -> ScalarField {
    let b_chi = medium
        .b()
        .zip_map(chi, |b, c| b * c)
        .expect("medium fields share a grid");
    let div = flux_divergence(u, &b_chi);
    div.zip_map(medium.a(), |d, a| eta0 * a * d)
        .expect("medium fields share a grid")
}

/// One explicit leapfrog step of size `dt` from `state.t`.
///
/// The step must not straddle a window edge and must respect the stability
/// limit of the coefficient level on the step.
pub fn step_second_order(state: &WaveState, medium: &Medium, schedule: &ItmSchedule, dt: f64) -> Result<WaveState> {
    let (t0, t1) = (state.t, state.t + dt);
    check_no_edge_inside(schedule, t0, t1)?;
    let level = schedule.level_at(0.5 * (t0 + t1));
    check_cfl(medium, level, dt)?;
    let mut stepper = SecondOrderStepper::new(medium);
    stepper.set_level(level);
    let mut next = state.clone();
    stepper.step(&mut next, dt);
    next.t = t1;
    Ok(next)
}

/// Jump condition `∂ₜu(T⁺) = ∂ₜu(T⁻) + η₀ a ∇·(b χ ∇u(T))`, discretized with
/// the stepper's own flux stencil.
pub fn apply_jump(state: &WaveState, medium: &Medium, eta0: f64, chi: &ScalarField) -> Result<WaveState> {
    state.u.check_same_grid(chi)?;
    let mut next = state.clone();
    next.ut.add_scaled(1.0, &jump_increment(&state.u, medium, eta0, chi));
    Ok(next)
}

/// Plans and executes a run to `opts.t_end`.
pub fn adaptive_run(
    state: &WaveState,
    medium: &Medium,
    schedule: &ItmSchedule,
    opts: &RunOptions,
    observer: &mut dyn Observer,
) -> Result<(WaveState, RunTrace)> {
    let plan = plan_steps(medium, schedule, state.t, opts)?;
    run_plan(state, medium, schedule, &plan, opts, observer)
}

/// Executes a precomputed plan. The plan may come from another schedule (for
/// lockstep runs) as long as every edge of `schedule` is a breakpoint of the
/// plan and every step is stable for `schedule`'s level.
pub fn run_plan(
    state: &WaveState,
    medium: &Medium,
    schedule: &ItmSchedule,
    plan: &StepPlan,
    opts: &RunOptions,
    observer: &mut dyn Observer,
) -> Result<(WaveState, RunTrace)> {
    if state.t != plan.t0 {
        return Err(Error::Misaligned(format!("state at t = {} but plan starts at {}", state.t, plan.t0)));
    }
    state.u.check_same_grid(medium.a())?;
    let mut trace = RunTrace::default();
    let mut current = state.clone();
    let mut stepper = SecondOrderStepper::new(medium);
    let mut prev_window: Option<usize> = None;
    let mut last_energy_segment: Option<(usize, f64)> = None;

    for item in &plan.items {
        match item {
            PlanItem::Snapshot(t) => {
                debug_assert_eq!(*t, current.t);
                observer.on_snapshot(&current);
                trace.snapshot_times.push(*t);
                if opts.store_snapshots {
                    trace.snapshots.push(current.clone());
                }
            }
            PlanItem::Step(planned) => {
                check_no_edge_inside(schedule, planned.t0, planned.t1)?;
                let mid = 0.5 * (planned.t0 + planned.t1);
                let run_window = schedule.active_window(mid).filter(|&i| schedule.windows()[i].weight() != 0.0);
                let level = run_window.map(|i| schedule.windows()[i].level()).unwrap_or(0.0);
                let dt = planned.dt();
                check_cfl(medium, level, dt)?;
                let step = StepRecord {
                    level,
                    window: run_window,
                    ..*planned
                };
                stepper.set_level(level);

                if planned.window != prev_window {
                    if let Some(w) = planned.window {
                        if run_window.is_some() {
                            trace.events.push(EdgeEvent {
                                time: planned.t0,
                                window: w,
                                kind: EdgeKind::WindowStart,
                            });
                        }
                        if opts.record_window_states {
                            trace.window_states.push((w, current.clone()));
                        }
                    }
                }
                if opts.record_energy && last_energy_segment != Some((step.segment, dt)) {
                    trace.energy.push(energy_record(&current, medium, &step));
                    last_energy_segment = Some((step.segment, dt));
                }

                stepper.step(&mut current, dt);
                current.t = planned.t1;

                if let Some(w) = planned.window {
                    if opts.record_window_states {
                        trace.window_states.push((w, current.clone()));
                    }
                }
                if opts.record_energy {
                    trace.energy.push(energy_record(&current, medium, &step));
                }
                if let (Some(w), Some(_)) = (planned.window, run_window) {
                    if planned.t1 == schedule.windows()[w].end() {
                        trace.events.push(EdgeEvent {
                            time: planned.t1,
                            window: w,
                            kind: EdgeKind::WindowEnd,
                        });
                    }
                }
                prev_window = planned.window;
                observer.on_step(&current, &step);
                trace.steps.push(step);
            }
            PlanItem::Jump { window, time } => {
                debug_assert_eq!(*time, current.t);
                if let Some(w) = schedule.windows().get(*window) {
                    if w.is_jump() && w.center() == *time && w.weight() != 0.0 {
                        stepper.jump(&mut current, w.weight());
                        trace.events.push(EdgeEvent {
                            time: *time,
                            window: *window,
                            kind: EdgeKind::Jump,
                        });
                    }
                }
                // energy bookkeeping restarts after the kick
                last_energy_segment = None;
            }
        }
    }
    Ok((current, trace))
}

/// Builds `(v₀, u₀)` with `a⁻¹u₁ + ∇·v₀ = 0`: `v₀ = ∇ψ` where `Δψ = -a⁻¹u₁`
/// is solved spectrally with zero mean.
pub fn init_first_order(u0: &ScalarField, u1: &ScalarField, medium: &Medium) -> Result<FirstOrderState> {
    u0.check_same_grid(u1)?;
    u0.check_finite("u0")?;
    u1.check_finite("u1")?;
    let f = u1.zip_map(medium.a(), |u, a| u / a)?;
    let norm = f.norm_l2();
    let mean_part = f.mean().abs() * f.grid().volume().sqrt();
    if mean_part > 1e-12 * norm {
        return Err(Error::Solvability(format!(
            "a^-1 u1 has mean component {mean_part:e} against norm {norm:e}"
        )));
    }
    let grid = f.grid().clone();
    let mut spec = fft(&f);
    for (i, c) in spec.coefficients_mut().iter_mut().enumerate() {
        let k2 = grid.wavenumber_sq(i);
        *c = if k2 == 0.0 { 0.0.into() } else { *c / k2 };
    }
    let psi = Spectrum::from_coefficients(&grid, spec.coefficients().to_vec())?.to_real_part();
    Ok(FirstOrderState {
        v: spectral_gradient(&psi),
        u: u0.clone(),
        t: 0.0,
    })
}

struct FirstOrderStepper<'m> {
    medium: &'m Medium,
    level: f64,
    b_eff: ScalarField,
}

impl<'m> FirstOrderStepper<'m> {
    fn new(medium: &'m Medium) -> Self {
        FirstOrderStepper {
            medium,
            level: 0.0,
            b_eff: medium.b().clone(),
        }
    }

    fn set_level(&mut self, level: f64) {
        if level != self.level {
            self.level = level;
            self.b_eff = effective_b_at_level(self.medium, level);
        }
    }

    fn kick(&self, v: &mut VectorField, u: &ScalarField, dt: f64) {
        let g = gradient(u).mul_pointwise(&self.b_eff);
        v.add_scaled(-dt, &g);
    }

    fn step(&self, state: &mut FirstOrderState, dt: f64) {
        self.kick(&mut state.v, &state.u, 0.5 * dt);
        let div = divergence(&state.v).zip_map(self.medium.a(), |d, a| d * a).expect("same grid");
        state.u.add_scaled(-dt, &div);
        self.kick(&mut state.v, &state.u, 0.5 * dt);
        state.t += dt;
    }

    /// Flux impulse `v ← v - η₀ b χ ∇u`, the first-order form of the jump.
    fn jump(&self, state: &mut FirstOrderState, eta0: f64) {
        let g = gradient(&state.u).mul_pointwise(&self.medium.b_chi());
        state.v.add_scaled(-eta0, &g);
    }
}

/// One step of the first-order system: half flux kick with
/// `b(1 + χη)` at the step midpoint, full height update with `a ∇·v`, half
/// flux kick. `∇·` is the negative adjoint of the centered gradient.
pub fn step_first_order(
    state: &FirstOrderState,
    medium: &Medium,
    schedule: &ItmSchedule,
    dt: f64,
) -> Result<FirstOrderState> {
    let (t0, t1) = (state.t, state.t + dt);
    check_no_edge_inside(schedule, t0, t1)?;
    let level = schedule.level_at(0.5 * (t0 + t1));
    check_cfl(medium, level, dt)?;
    let mut stepper = FirstOrderStepper::new(medium);
    stepper.set_level(level);
    let mut next = state.clone();
    stepper.step(&mut next, dt);
    next.t = t1;
    Ok(next)
}

/// `Γ = diag(-1, …, -1, 1)`: flips the flux, keeps the height.
pub fn time_reverse(state: &FirstOrderState) -> FirstOrderState {
    FirstOrderState {
        v: state.v.scale(-1.0),
        u: state.u.clone(),
        t: state.t,
    }
}

/// First-order counterpart of [`adaptive_run`].
pub fn adaptive_run_first_order(
    state: &FirstOrderState,
    medium: &Medium,
    schedule: &ItmSchedule,
    opts: &RunOptions,
    observer: &mut dyn Observer<FirstOrderState>,
) -> Result<(FirstOrderState, RunTrace<FirstOrderState>)> {
    let plan = plan_steps(medium, schedule, state.t, opts)?;
    let mut trace = RunTrace::default();
    let mut current = state.clone();
    let mut stepper = FirstOrderStepper::new(medium);
    for item in &plan.items {
        match item {
            PlanItem::Snapshot(t) => {
                observer.on_snapshot(&current);
                trace.snapshot_times.push(*t);
                if opts.store_snapshots {
                    trace.snapshots.push(current.clone());
                }
            }
            PlanItem::Step(step) => {
                stepper.set_level(step.level);
                stepper.step(&mut current, step.dt());
                current.t = step.t1;
                observer.on_step(&current, step);
                trace.steps.push(*step);
            }
            PlanItem::Jump { window, time } => {
                stepper.jump(&mut current, schedule.windows()[*window].weight());
                trace.events.push(EdgeEvent {
                    time: *time,
                    window: *window,
                    kind: EdgeKind::Jump,
                });
            }
        }
    }
    Ok((current, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_grid, spectral_divergence};
    use crate::media::ItmWindow;
    use std::f64::consts::PI;

    fn sine_setup(n: usize) -> (Medium, ScalarField) {
        let g = make_grid(1, 2.0 * PI, n).unwrap();
        (Medium::free(&g), ScalarField::from_fn(&g, |x| x[0].sin()))
    }

    #[test]
    fn zero_state_stays_zero() {
        let g = make_grid(2, 1.0, 16).unwrap();
        let m = Medium::free(&g);
        let s = WaveState::zeros(&g);
        let next = step_second_order(&s, &m, &ItmSchedule::empty(), 0.01).unwrap();
        assert_eq!(next.u.max_abs(), 0.0);
        assert_eq!(next.ut.max_abs(), 0.0);
        assert_eq!(next.t, 0.01);
    }

    #[test]
    fn init_state_rejects_nan() {
        let g = make_grid(1, 1.0, 8).unwrap();
        let mut v = vec![0.0; 8];
        v[2] = f64::NAN;
        assert!(ScalarField::new(&g, v).is_err());
        let s = init_state(&ScalarField::from_fn(&g, |x| x[0].sin()), &ScalarField::zeros(&g)).unwrap();
        assert_eq!(s.ut.max_abs(), 0.0);
    }

    #[test]
    fn cfl_formula() {
        let g = make_grid(1, 0.1 * 64.0, 64).unwrap();
        let m = Medium::free(&g);
        let dt = cfl_dt(&m, &ItmSchedule::empty(), (0.0, 1.0)).unwrap();
        assert!((dt - 0.05).abs() < 1e-12);
        // η₀/ε = 99 ⇒ c_eff = 10
        let s = ItmSchedule::single(ItmWindow::new(1.0, 0.01, 0.99).unwrap());
        let inside = cfl_dt(&m, &s, (0.996, 1.004)).unwrap();
        assert!((dt / inside - 10.0).abs() < 1e-9);
        assert!(matches!(cfl_dt(&m, &s, (0.9, 1.0)), Err(Error::StraddledEdge { .. })));

        let c2 = ScalarField::from_fn(&g, |x| 1.0 + x[0]);
        let m = Medium::new(c2.clone(), ScalarField::constant(&g, 1.0), ScalarField::constant(&g, 1.0)).unwrap();
        let dt = cfl_dt(&m, &ItmSchedule::empty(), (0.0, 1.0)).unwrap();
        assert!((dt - 0.5 * 0.1 / c2.max().sqrt()).abs() < 1e-12);
    }

    #[test]
    fn step_rejects_straddle_and_cfl() {
        let (m, u) = sine_setup(64);
        let s = init_state(&u, &ScalarField::zeros(u.grid())).unwrap();
        let sched = ItmSchedule::single(ItmWindow::new(0.05, 0.02, 0.1).unwrap());
        assert!(matches!(
            step_second_order(&s, &m, &sched, 0.05),
            Err(Error::StraddledEdge { .. })
        ));
        assert!(matches!(step_second_order(&s, &m, &ItmSchedule::empty(), 1.0), Err(Error::Cfl { .. })));
    }

    #[test]
    fn zero_weight_schedule_is_bitwise_identical() {
        let (m, u) = sine_setup(64);
        let s = init_state(&u, &u.scale(0.3)).unwrap();
        let off = ItmSchedule::single(ItmWindow::new(0.7, 0.1, 0.0).unwrap());
        let opts = RunOptions::until(2.0).with_snapshots(&[1.0]);
        let (a, _) = adaptive_run(&s, &m, &off, &opts, &mut ()).unwrap();
        let (b, _) = adaptive_run(&s, &m, &ItmSchedule::empty(), &opts, &mut ()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn snapshots_hit_exactly() {
        let (m, u) = sine_setup(64);
        let s = init_state(&u, &ScalarField::zeros(u.grid())).unwrap();
        let opts = RunOptions::until(1.0).with_snapshots(&[0.5, 1.0]);
        let (_, trace) = adaptive_run(&s, &m, &ItmSchedule::empty(), &opts, &mut ()).unwrap();
        assert_eq!(trace.snapshot_times, vec![0.5, 1.0]);
        assert_eq!(trace.snapshots[0].t, 0.5);
        assert_eq!(trace.snapshots[1].t, 1.0);
    }

    #[test]
    fn window_edges_are_logged_and_steps_aligned() {
        let (m, u) = sine_setup(64);
        let s = init_state(&u, &ScalarField::zeros(u.grid())).unwrap();
        let w = ItmWindow::new(0.5, 0.05, 0.5).unwrap();
        let sched = ItmSchedule::single(w);
        let (_, trace) = adaptive_run(&s, &m, &sched, &RunOptions::until(1.0), &mut ()).unwrap();
        let times: Vec<_> = trace.events.iter().map(|e| (e.kind, e.time)).collect();
        assert_eq!(times, vec![(EdgeKind::WindowStart, w.start()), (EdgeKind::WindowEnd, w.end())]);
        for st in &trace.steps {
            assert!(!(st.t0 < w.start() && st.t1 > w.start()));
            assert!(!(st.t0 < w.end() && st.t1 > w.end()));
            if st.window.is_some() {
                assert!(st.t0 >= w.start() && st.t1 <= w.end());
            }
        }
    }

    #[test]
    fn jump_of_sine_mode() {
        let (m, u) = sine_setup(256);
        let s = init_state(&u, &ScalarField::zeros(u.grid())).unwrap();
        let after = apply_jump(&s, &m, 1.0, m.chi()).unwrap();
        assert_eq!(after.u, s.u);
        let h = u.grid().spacing();
        let err = after.ut.zip_map(&u, |a, b| a + b).unwrap().max_abs();
        assert!(err < h * h / 12.0 * 1.01);
        let same = apply_jump(&s, &m, 0.0, m.chi()).unwrap();
        assert_eq!(same, s);
    }

    #[test]
    fn jump_run_kicks_once() {
        let (m, u) = sine_setup(64);
        let s = init_state(&u, &ScalarField::zeros(u.grid())).unwrap();
        let sched = ItmSchedule::single(ItmWindow::new(0.5, 0.0, 1.0).unwrap());
        let (_, trace) = adaptive_run(&s, &m, &sched, &RunOptions::until(1.0), &mut ()).unwrap();
        assert_eq!(trace.events.len(), 1);
        assert_eq!(trace.events[0].kind, EdgeKind::Jump);
        assert_eq!(trace.events[0].time, 0.5);
    }

    #[test]
    fn first_order_init() {
        let g = make_grid(1, 2.0 * PI, 64).unwrap();
        let m = Medium::free(&g);
        let zero = ScalarField::zeros(&g);
        let st = init_first_order(&zero, &zero, &m).unwrap();
        assert_eq!(st.v.max_abs(), 0.0);

        let u1 = ScalarField::from_fn(&g, |x| x[0].sin());
        let st = init_first_order(&zero, &u1, &m).unwrap();
        let cos = ScalarField::from_fn(&g, |x| x[0].cos());
        assert!(st.v.component(0).sub(&cos).unwrap().max_abs() < 1e-13);
        let div = spectral_divergence(&st.v);
        assert!(div.zip_map(&u1, |d, f| d + f).unwrap().max_abs() < 1e-12);

        let bad = ScalarField::from_fn(&g, |x| 1.0 + x[0].sin());
        assert!(matches!(init_first_order(&zero, &bad, &m), Err(Error::Solvability(_))));
    }

    #[test]
    fn time_reverse_is_involution() {
        let g = make_grid(2, 1.0, 8).unwrap();
        let st = FirstOrderState {
            v: VectorField::new(vec![
                ScalarField::from_fn(&g, |x| x[0]),
                ScalarField::from_fn(&g, |x| x[1] * 2.0),
            ])
            .unwrap(),
            u: ScalarField::from_fn(&g, |x| x[0] * x[1]),
            t: 0.3,
        };
        assert_eq!(time_reverse(&time_reverse(&st)), st);
        let zero = FirstOrderState {
            v: VectorField::zeros(&g),
            u: ScalarField::zeros(&g),
            t: 0.0,
        };
        let r = time_reverse(&zero);
        assert_eq!(r.u, zero.u);
        assert_eq!(r.v.max_abs(), 0.0);
    }

    #[test]
    fn first_order_zero_state() {
        let g = make_grid(1, 1.0, 16).unwrap();
        let m = Medium::free(&g);
        let zero = FirstOrderState {
            v: VectorField::zeros(&g),
            u: ScalarField::zeros(&g),
            t: 0.0,
        };
        let next = step_first_order(&zero, &m, &ItmSchedule::empty(), 0.01).unwrap();
        assert_eq!(next.u.max_abs(), 0.0);
        assert_eq!(next.v.max_abs(), 0.0);
    }
}
