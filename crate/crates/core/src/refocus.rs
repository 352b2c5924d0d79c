//! Remainder fields of the mirror decomposition and refocusing diagnostics.
//!
//! `w` solves `∂ₜ²w = a∇·(b∇w) + η a∇·(bχ∇(u_ε - U))` from zero data and
//! `W` solves `∂ₜW = b(-∇w + χη∇(u_ε - U))` with `W(0) = 0`. The forcing is
//! only active inside the windows, where it is sampled at the perturbed
//! run's step boundaries.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolve::{
    adaptive_run, plan_steps, run_plan, EdgeKind, Observer, RunOptions, RunTrace, StepRecord, WaveState,
};
use crate::geometry::{flux_divergence, gradient, periodic_delta, Grid, ScalarField, VectorField};
use crate::media::{ItmSchedule, Medium};

/// `w` and `W` at the requested times.
#[derive(Debug, Clone)]
pub struct RemainderRun {
    pub times: Vec<f64>,
    pub w: Vec<ScalarField>,
    pub big_w: Vec<VectorField>,
    /// `(t, χη∇(u_ε - U))` at every in-window step boundary.
    pub forcing: Vec<(f64, VectorField)>,
    /// `(t, ‖∇(u_ε - U)‖_{L²})` at the same samples.
    pub deviation: Vec<(f64, f64)>,
}

struct Stamp {
    t: f64,
    /// `η a∇·(bχ∇(u_ε - U))`
    source: Vec<f64>,
    /// `η χ∇(u_ε - U)`, before multiplication by `b`
    flux: VectorField,
}

/// `b(-∇w + g)` with `g` the in-window flux forcing (or zero outside).
fn w_integrand(w: &ScalarField, b: &ScalarField, flux: Option<&VectorField>) -> VectorField {
    let mut out = gradient(w).scale(-1.0);
    if let Some(f) = flux {
        out.add_scaled(1.0, f);
    }
    out.mul_pointwise(b)
}

struct Accumulator<'a> {
    medium: &'a Medium,
    big_w: VectorField,
    last: VectorField,
    last_t: f64,
    wanted: &'a [f64],
    out_w: Vec<Option<ScalarField>>,
    out_big_w: Vec<Option<VectorField>>,
}

impl Accumulator<'_> {
    fn advance(&mut self, t: f64, integrand: VectorField) {
        let dt = t - self.last_t;
        self.big_w.add_scaled(0.5 * dt, &self.last);
        self.big_w.add_scaled(0.5 * dt, &integrand);
        self.last = integrand;
        self.last_t = t;
    }

    fn record(&mut self, t: f64, w: &ScalarField) {
        for (i, &want) in self.wanted.iter().enumerate() {
            if want == t && self.out_w[i].is_none() {
                self.out_w[i] = Some(w.clone());
                self.out_big_w[i] = Some(self.big_w.clone());
            }
        }
    }
}

impl Observer for Accumulator<'_> {
    fn on_step(&mut self, state: &WaveState, _step: &StepRecord) {
        let integrand = w_integrand(&state.u, self.medium.b(), None);
        self.advance(state.t, integrand);
    }

    fn on_snapshot(&mut self, state: &WaveState) {
        self.record(state.t, &state.u);
    }
}

/// Computes `w` and `W` at `times` from two runs that recorded their
/// window states on the same step boundaries.
///
/// `perturbed` must come from `schedule`; `unperturbed` from the same plan
/// with the mirror switched off. Requested times may not fall strictly
/// inside a window unless they coincide with one of its step boundaries.
pub fn remainder_fields(
    perturbed: &RunTrace,
    unperturbed: &RunTrace,
    medium: &Medium,
    schedule: &ItmSchedule,
    times: &[f64],
) -> Result<RemainderRun> {
    if schedule.has_jumps() {
        return Err(Error::InvalidSchedule("remainder fields need finite windows".into()));
    }
    if perturbed.window_states.len() != unperturbed.window_states.len() {
        return Err(Error::Misaligned(format!(
            "perturbed trace has {} window states, unperturbed has {}",
            perturbed.window_states.len(),
            unperturbed.window_states.len()
        )));
    }
    let grid = medium.grid().clone();
    let b_chi = medium.b_chi();

    // group in-window stamps by window
    let mut deviation = Vec::new();
    let mut groups: Vec<(usize, Vec<Stamp>)> = Vec::new();
    for ((wi, pe), (wj, un)) in perturbed.window_states.iter().zip(&unperturbed.window_states) {
        if wi != wj || pe.t != un.t {
            return Err(Error::Misaligned(format!(
                "window stamp mismatch: ({wi}, t = {}) vs ({wj}, t = {})",
                pe.t, un.t
            )));
        }
        pe.u.check_same_grid(&un.u)?;
        let window = schedule
            .windows()
            .get(*wi)
            .ok_or_else(|| Error::Misaligned(format!("trace refers to window {wi} not in the schedule")))?;
        let level = window.level();
        let diff = pe.u.sub(&un.u)?;
        let source = flux_divergence(&diff, &b_chi)
            .zip_map(medium.a(), |d, a| level * a * d)?
            .into_values();
        let grad = gradient(&diff);
        deviation.push((pe.t, grad.norm_l2()));
        let flux = grad.mul_pointwise(&medium.chi().scale(level));
        let stamp = Stamp { t: pe.t, source, flux };
        match groups.last_mut() {
            Some((w, list)) if *w == *wi => list.push(stamp),
            _ => groups.push((*wi, vec![stamp])),
        }
    }
    for (wi, list) in &groups {
        let w = &schedule.windows()[*wi];
        let (first, last) = (list.first().expect("non-empty").t, list.last().expect("non-empty").t);
        if first != w.start() || last != w.end() {
            return Err(Error::Misaligned(format!(
                "window {wi} stamps cover [{first}, {last}] instead of [{}, {}]",
                w.start(),
                w.end()
            )));
        }
    }
    for &t in times {
        for (wi, list) in &groups {
            let w = &schedule.windows()[*wi];
            if t > w.start() && t < w.end() && !list.iter().any(|s| s.t == t) {
                return Err(Error::InvalidArgument(format!(
                    "time {t} lies inside window {wi} between step boundaries"
                )));
            }
        }
    }

    let mut acc = Accumulator {
        medium,
        big_w: VectorField::zeros(&grid),
        last: VectorField::zeros(&grid),
        last_t: 0.0,
        wanted: times,
        out_w: vec![None; times.len()],
        out_big_w: vec![None; times.len()],
    };
    // before the first forcing sample both fields vanish identically
    let start = groups.first().map(|(_, l)| l[0].t).unwrap_or(f64::INFINITY);
    for (i, &t) in times.iter().enumerate() {
        if t <= start {
            acc.out_w[i] = Some(ScalarField::zeros(&grid));
            acc.out_big_w[i] = Some(VectorField::zeros(&grid));
        }
    }
    let mut state = WaveState::zeros(&grid);
    state.t = start;
    acc.last_t = start;
    let empty = ItmSchedule::empty();
    let mut forcing = Vec::new();

    for (_, list) in &groups {
        // free propagation up to the window start
        state = free_segment(&state, medium, &empty, list[0].t, &mut acc)?;
        acc.last = w_integrand(&state.u, medium.b(), Some(&list[0].flux));
        forcing.push((list[0].t, list[0].flux.clone()));
        for pair in list.windows(2) {
            let (s0, s1) = (&pair[0], &pair[1]);
            forced_step(&mut state, medium, s0, s1);
            acc.advance(s1.t, w_integrand(&state.u, medium.b(), Some(&s1.flux)));
            acc.record(s1.t, &state.u);
            forcing.push((s1.t, s1.flux.clone()));
        }
        // the flux forcing switches off at the window end
        acc.last = w_integrand(&state.u, medium.b(), None);
    }
    let t_max = times.iter().cloned().fold(state.t, f64::max);
    free_segment(&state, medium, &empty, t_max, &mut acc)?;

    let w = acc
        .out_w
        .into_iter()
        .zip(times)
        .map(|(f, t)| f.ok_or_else(|| Error::Misaligned(format!("time {t} was never reached"))))
        .collect::<Result<Vec<_>>>()?;
    let big_w = acc.out_big_w.into_iter().map(|f| f.expect("set with w")).collect();
    Ok(RemainderRun {
        times: times.to_vec(),
        w,
        big_w,
        forcing,
        deviation,
    })
}

fn free_segment(
    state: &WaveState,
    medium: &Medium,
    empty: &ItmSchedule,
    t_end: f64,
    acc: &mut Accumulator<'_>,
) -> Result<WaveState> {
    if t_end <= state.t {
        return Ok(state.clone());
    }
    let snaps: Vec<f64> = acc.wanted.iter().cloned().filter(|&t| t > state.t && t <= t_end).collect();
    let mut opts = RunOptions::until(t_end).with_snapshots(&snaps);
    opts.store_snapshots = false;
    let (end, _) = adaptive_run(state, medium, empty, &opts, acc)?;
    Ok(end)
}

/// Kick–drift–kick with the forcing sampled at both ends of the step.
fn forced_step(state: &mut WaveState, medium: &Medium, s0: &Stamp, s1: &Stamp) {
    let dt = s1.t - s0.t;
    let accel = |u: &ScalarField| {
        flux_divergence(u, medium.b())
            .zip_map(medium.a(), |d, a| d * a)
            .expect("same grid")
            .into_values()
    };
    let grid = state.u.grid().clone();
    let a0 = accel(&state.u);
    let mut ut: Vec<f64> = state
        .ut
        .values()
        .iter()
        .zip(a0.iter().zip(&s0.source))
        .map(|(v, (a, f))| v + 0.5 * dt * (a + f))
        .collect();
    let u: Vec<f64> = state.u.values().iter().zip(&ut).map(|(u, v)| u + dt * v).collect();
    let u = ScalarField::new(&grid, u).expect("finite");
    let a1 = accel(&u);
    for (v, (a, f)) in ut.iter_mut().zip(a1.iter().zip(&s1.source)) {
        *v += 0.5 * dt * (a + f);
    }
    state.u = u;
    state.ut = ScalarField::new(&grid, ut).expect("finite");
    state.t = s1.t;
}

/// Runs the perturbed and unperturbed problems on one step plan and
/// returns the remainder fields at `times`.
pub fn remainder_experiment(
    initial: &WaveState,
    medium: &Medium,
    schedule: &ItmSchedule,
    times: &[f64],
    cfl: f64,
) -> Result<RemainderRun> {
    let (perturbed, unperturbed) = paired_runs(initial, medium, schedule, times, cfl)?;
    remainder_fields(&perturbed, &unperturbed, medium, schedule, times)
}

/// Perturbed and mirror-off runs sharing one step plan, with window states
/// recorded.
pub fn paired_runs(
    initial: &WaveState,
    medium: &Medium,
    schedule: &ItmSchedule,
    times: &[f64],
    cfl: f64,
) -> Result<(RunTrace, RunTrace)> {
    let t_end = schedule
        .windows()
        .iter()
        .map(|w| w.end())
        .fold(times.iter().cloned().fold(initial.t, f64::max), f64::max);
    let mut opts = RunOptions::until(t_end).with_cfl(cfl);
    opts.record_window_states = true;
    opts.store_snapshots = false;
    let plan = plan_steps(medium, schedule, initial.t, &opts)?;
    let (_, perturbed) = run_plan(initial, medium, schedule, &plan, &opts, &mut ())?;
    let (_, unperturbed) = run_plan(initial, medium, &schedule.switched_off(), &plan, &opts, &mut ())?;
    debug_assert!(perturbed.events.iter().all(|e| e.kind != EdgeKind::Jump));
    Ok((perturbed, unperturbed))
}

/// `-(η₀/2) u₁`, the field expected near the source at `2T`.
pub fn refocus_prediction(u1: &ScalarField, eta0: f64) -> ScalarField {
    u1.scale(-0.5 * eta0)
}

/// Quality of the refocused field against the prediction on a ball.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefocusReport {
    /// Distance between the prediction's extremum and the field's extremum
    /// of the same sign.
    pub peak_location_error: f64,
    /// Field value at its extremum over the prediction's extreme value.
    pub amplitude_ratio: f64,
    /// `⟨f, p⟩ / (‖f‖ ‖p‖)` on the ball.
    pub shape_correlation: f64,
    pub epsilon: Option<f64>,
    pub eta0: Option<f64>,
    pub mirror_time: Option<f64>,
}

impl RefocusReport {
    pub fn with_scenario(mut self, epsilon: f64, eta0: f64, mirror_time: f64) -> Self {
        self.epsilon = Some(epsilon);
        self.eta0 = Some(eta0);
        self.mirror_time = Some(mirror_time);
        self
    }
}

fn point_distance(grid: &Grid, a: usize, b: usize) -> f64 {
    let (xa, xb) = (grid.coords(a), grid.coords(b));
    (0..grid.dim())
        .map(|k| periodic_delta(xa[k], xb[k], grid.length()).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Compares `field` with `prediction` on the periodic ball of `radius`
/// around `center`.
///
/// The peak statistics locate the largest `|prediction|` on the ball and
/// the extremum of `field` with the same sign.
pub fn refocus_metrics(
    field: &ScalarField,
    prediction: &ScalarField,
    center: [f64; 2],
    radius: f64,
) -> Result<RefocusReport> {
    field.check_same_grid(prediction)?;
    let grid = field.grid();
    let ball: Vec<usize> = (0..grid.len())
        .filter(|&i| grid.periodic_distance(i, center) <= radius)
        .collect();
    if ball.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no grid point within {radius} of {center:?}"
        )));
    }
    let (f, p) = (field.values(), prediction.values());
    let (mut fp, mut ff, mut pp) = (0.0, 0.0, 0.0);
    for &i in &ball {
        fp += f[i] * p[i];
        ff += f[i] * f[i];
        pp += p[i] * p[i];
    }
    let denom = (ff * pp).sqrt();
    let shape_correlation = if denom == 0.0 { 0.0 } else { (fp / denom).clamp(-1.0, 1.0) };

    let p_star = ball
        .iter()
        .cloned()
        .fold(ball[0], |best, i| if p[i].abs() > p[best].abs() { i } else { best });
    let sign = if p[p_star] < 0.0 { -1.0 } else { 1.0 };
    let m_star = ball
        .iter()
        .cloned()
        .fold(ball[0], |best, i| if sign * f[i] > sign * f[best] { i } else { best });
    let amplitude_ratio = if p[p_star] == 0.0 {
        0.0
    } else {
        sign * f[m_star] / p[p_star].abs()
    };
    Ok(RefocusReport {
        peak_location_error: point_distance(grid, p_star, m_star),
        amplitude_ratio,
        shape_correlation,
        epsilon: None,
        eta0: None,
        mirror_time: None,
    })
}

/// Largest ball radius around the source that the forward fronts have left
/// at time `t`: `c_max t` minus the half-width of the initial support.
pub fn clear_radius(medium: &Medium, t: f64, support_half_width: f64) -> f64 {
    let c_max = medium.c_sq().max().sqrt();
    c_max * t - support_half_width
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::init_state;
    use crate::geometry::make_grid;
    use crate::media::ItmWindow;

    fn scenario(n: usize) -> (Medium, WaveState) {
        let g = make_grid(1, 20.0, n).unwrap();
        let m = Medium::free(&g);
        let u0 = ScalarField::from_fn(&g, |x| (-(x[0] - 10.0).powi(2) / 0.5).exp());
        let u1 = ScalarField::from_fn(&g, |x| (x[0] - 10.0) * (-(x[0] - 10.0).powi(2) / 0.5).exp());
        (m, init_state(&u0, &u1).unwrap())
    }

    #[test]
    fn prediction_formula() {
        let g = make_grid(1, 1.0, 8).unwrap();
        let u1 = ScalarField::from_fn(&g, |x| x[0]);
        assert_eq!(refocus_prediction(&u1, 2.0), u1.scale(-1.0));
        assert_eq!(refocus_prediction(&ScalarField::zeros(&g), 0.5).max_abs(), 0.0);
    }

    #[test]
    fn metrics_self_and_orthogonal() {
        let g = make_grid(1, 20.0, 256).unwrap();
        let p = ScalarField::from_fn(&g, |x| -(-(x[0] - 10.0).powi(2)).exp());
        let r = refocus_metrics(&p, &p, [10.0, 0.0], 2.0).unwrap();
        assert_eq!(r.amplitude_ratio, 1.0);
        assert!((r.shape_correlation - 1.0).abs() < 1e-15);
        assert_eq!(r.peak_location_error, 0.0);
        // odd against even on a symmetric ball
        let q = ScalarField::from_fn(&g, |x| (x[0] - 10.0) * (-(x[0] - 10.0).powi(2)).exp());
        let r = refocus_metrics(&q, &p, [10.0, 0.0], 2.0).unwrap();
        assert!(r.shape_correlation.abs() < 1e-12);
        assert!(refocus_metrics(&p, &p, [10.0 + 0.5 * g.spacing(), 0.0], 0.01).is_err());
    }

    #[test]
    fn zero_weight_gives_zero_remainder() {
        let (m, s) = scenario(128);
        let sched = ItmSchedule::single(ItmWindow::new(1.5, 0.1, 0.0).unwrap());
        let (p, u) = paired_runs(&s, &m, &sched, &[3.0], 0.5).unwrap();
        let r = remainder_fields(&p, &u, &m, &sched, &[3.0]).unwrap();
        assert_eq!(r.w[0].max_abs(), 0.0);
        assert_eq!(r.big_w[0].max_abs(), 0.0);
    }

    #[test]
    fn remainder_vanishes_before_window() {
        let (m, s) = scenario(128);
        let w = ItmWindow::new(1.5, 0.1, 0.5).unwrap();
        let sched = ItmSchedule::single(w);
        let r = remainder_experiment(&s, &m, &sched, &[1.0, w.start(), 3.0], 0.5).unwrap();
        assert_eq!(r.w[0].max_abs(), 0.0);
        assert_eq!(r.w[1].max_abs(), 0.0);
        assert_eq!(r.big_w[1].max_abs(), 0.0);
        assert!(r.w[2].max_abs() > 0.0);
        assert!(r.big_w[2].max_abs() > 0.0);
    }

    #[test]
    fn misaligned_traces_rejected() {
        let (m, s) = scenario(64);
        let sched = ItmSchedule::single(ItmWindow::new(1.5, 0.1, 0.5).unwrap());
        let (p, _) = paired_runs(&s, &m, &sched, &[3.0], 0.5).unwrap();
        let (_, u) = paired_runs(&s, &m, &sched, &[3.0], 0.25).unwrap();
        assert!(matches!(
            remainder_fields(&p, &u, &m, &sched, &[3.0]),
            Err(Error::Misaligned(_))
        ));
    }
}
