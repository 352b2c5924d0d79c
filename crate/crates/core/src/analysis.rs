//! Norms, energies and rate fits.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolve::{FirstOrderState, RunTrace, StepRecord, WaveState};
use crate::geometry::{face_gradient_energy, fft, flux_divergence, ScalarField};
use crate::media::{effective_b_at_level, Medium};

/// Sobolev index for `‖·‖_{H^s}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormSpec {
    s: f64,
}

impl NormSpec {
    pub const L2: NormSpec = NormSpec { s: 0.0 };
    pub const H1: NormSpec = NormSpec { s: 1.0 };
    pub const H2: NormSpec = NormSpec { s: 2.0 };
    pub const H_MINUS_1: NormSpec = NormSpec { s: -1.0 };

    pub fn new(s: f64) -> Result<Self> {
        if !s.is_finite() || s.abs() > 4.0 {
            return Err(Error::InvalidArgument(format!("Sobolev index {s} outside [-4, 4]")));
        }
        Ok(NormSpec { s })
    }

    pub fn index(&self) -> f64 {
        self.s
    }
}

/// `‖f‖_{H^s}` with the symbol `(1 + |k|²)^{s/2}`, volume weighted so that
/// `s = 0` is the quadrature L² norm.
pub fn sobolev_norm(f: &ScalarField, spec: NormSpec) -> f64 {
    let s = spec.s;
    if s == 0.0 {
        return fft(f).weighted_power(|_| 1.0).sqrt();
    }
    fft(f).weighted_power(|k2| (1.0 + k2).powf(s)).sqrt()
}

/// `½ Σ (|∂ₜu|² + c² |∇u|²) hᵈ`, with the gradient term on cell faces.
pub fn energy(state: &WaveState, medium: &Medium) -> f64 {
    0.5 * state.ut.dot(&state.ut) + 0.5 * face_gradient_energy(&state.u, medium.c_sq())
}

/// `½ Σ c² χ |∇u|² hᵈ`, the part of the gradient energy seen by the mirror.
pub fn itm_energy(state: &WaveState, medium: &Medium) -> f64 {
    let weight = medium
        .c_sq()
        .zip_map(medium.chi(), |c, x| c * x)
        .expect("medium fields share a grid");
    0.5 * face_gradient_energy(&state.u, &weight)
}

/// Energy of the first-order state, `½ Σ (b⁻¹|v|² + a⁻¹u²) hᵈ`.
pub fn first_order_energy(state: &FirstOrderState, medium: &Medium) -> f64 {
    let inv_b = medium.b().map(|b| 1.0 / b);
    let flux = state.v.mul_pointwise(&inv_b).dot(&state.v);
    let inv_a = medium.a().map(|a| 1.0 / a);
    let height = state.u.zip_map(&inv_a, |u, w| u * u * w).expect("same grid");
    0.5 * flux + 0.5 * height.values().iter().sum::<f64>() * height.grid().cell_volume()
}

/// Energy bookkeeping at one step boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyRecord {
    pub t: f64,
    /// `E`.
    pub energy: f64,
    /// `F`.
    pub itm_energy: f64,
    /// `η(t)` on the step the record belongs to.
    pub eta_level: f64,
    /// `E + η F`.
    pub combined: f64,
    /// `E + ηF - (dt²/8) ‖a∇·(b_eff∇u)‖²`, the quantity the leapfrog scheme
    /// conserves exactly when `a` is constant.
    pub discrete: f64,
    pub dt: f64,
    pub segment: usize,
}

/// Energy record for `state`, which begins or ends `step`.
pub fn energy_record(state: &WaveState, medium: &Medium, step: &StepRecord) -> EnergyRecord {
    let e = energy(state, medium);
    let f = itm_energy(state, medium);
    let level = step.level;
    let combined = e + level * f;
    let b_eff = effective_b_at_level(medium, level);
    let lu = flux_divergence(&state.u, &b_eff)
        .zip_map(medium.a(), |d, a| d * a)
        .expect("same grid");
    let dt = step.dt();
    EnergyRecord {
        t: state.t,
        energy: e,
        itm_energy: f,
        eta_level: level,
        combined,
        discrete: combined - dt * dt / 8.0 * lu.dot(&lu),
        dt,
        segment: step.segment,
    }
}

/// Largest relative change of the conserved energy within any segment of
/// constant `η` and step size, normalized by the first record's
/// `combined` value.
///
/// Requires `a` to be constant and the trace to carry energy records.
pub fn conservation_drift(trace: &RunTrace, medium: &Medium) -> Result<f64> {
    if medium.constant_a().is_none() {
        return Err(Error::InvalidArgument(
            "energy conservation needs a spatially constant a".into(),
        ));
    }
    let Some(first) = trace.energy.first() else {
        return Err(Error::InvalidArgument("trace has no energy records".into()));
    };
    let reference = first.combined;
    if reference == 0.0 {
        return Ok(0.0);
    }
    let mut drift: f64 = 0.0;
    let mut start: Option<&EnergyRecord> = None;
    for rec in &trace.energy {
        match start {
            Some(s) if s.segment == rec.segment && s.dt == rec.dt => {
                drift = drift.max((rec.discrete - s.discrete).abs() / reference);
            }
            _ => start = Some(rec),
        }
    }
    Ok(drift)
}

/// Least-squares slope of `log(value)` against `log(ε)`.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "rate fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(p) = points.iter().find(|(e, v)| !(*e > 0.0 && *v > 0.0) || !e.is_finite() || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("rate fit needs positive finite data, got {p:?}")));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("rate fit needs distinct ε values".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Default ratio threshold for [`uniformity_check`].
pub const UNIFORMITY_RATIO: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformityRow {
    pub epsilon: f64,
    pub norm_u: f64,
    pub norm_ut: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformityReport {
    /// Sorted by ε descending.
    pub rows: Vec<UniformityRow>,
    /// max/min of `total` over the sweep.
    pub ratio: f64,
    pub pass: bool,
}

impl UniformityReport {
    /// Whether `total` never decreases as ε decreases.
    pub fn grows_monotonically(&self) -> bool {
        self.rows.windows(2).all(|p| p[1].total >= p[0].total)
    }

    /// Whether the running max/min ratio grows strictly as ε decreases.
    pub fn ratio_grows_monotonically(&self) -> bool {
        let mut prev = 1.0;
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for (i, row) in self.rows.iter().enumerate() {
            lo = lo.min(row.total);
            hi = hi.max(row.total);
            let r = hi / lo;
            if i > 0 && r <= prev {
                return false;
            }
            prev = r;
        }
        true
    }
}

/// `‖u_ε(t)‖_{H^p} + ‖∂ₜu_ε(t)‖_{H^q}` for each `(ε, state)` with
/// `norms = (p, q)`, and the max/min ratio over the sweep.
pub fn uniformity_check(states: &[(f64, WaveState)], norms: (NormSpec, NormSpec)) -> Result<UniformityReport> {
    if states.is_empty() {
        return Err(Error::InvalidArgument("uniformity check needs at least one state".into()));
    }
    let (t, grid) = (states[0].1.t, states[0].1.u.grid().clone());
    for (eps, s) in states {
        if s.t != t || *s.u.grid() != grid {
            return Err(Error::InvalidArgument(format!(
                "state for ε = {eps} does not match the scenario (t = {}, expected {t})",
                s.t
            )));
        }
    }
    let mut rows: Vec<UniformityRow> = states
        .iter()
        .map(|(eps, s)| {
            let norm_u = sobolev_norm(&s.u, norms.0);
            let norm_ut = sobolev_norm(&s.ut, norms.1);
            UniformityRow {
                epsilon: *eps,
                norm_u,
                norm_ut,
                total: norm_u + norm_ut,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.epsilon.partial_cmp(&a.epsilon).expect("finite ε"));
    let hi = rows.iter().map(|r| r.total).fold(0.0, f64::max);
    let lo = rows.iter().map(|r| r.total).fold(f64::INFINITY, f64::min);
    let ratio = if hi == 0.0 { 1.0 } else { hi / lo };
    Ok(UniformityReport {
        rows,
        ratio,
        pass: ratio <= UNIFORMITY_RATIO,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::{adaptive_run, init_state, RunOptions};
    use crate::geometry::make_grid;
    use crate::media::{ItmSchedule, ItmWindow};
    use std::f64::consts::PI;

    #[test]
    fn norm_of_constant_and_sine() {
        let g = make_grid(1, 3.0, 32).unwrap();
        let c = ScalarField::constant(&g, -2.0);
        for s in [-1.0, 0.0, 1.0, 2.0] {
            let n = sobolev_norm(&c, NormSpec::new(s).unwrap());
            assert!((n - 2.0 * 3f64.sqrt()).abs() < 1e-12);
        }
        let g = make_grid(1, 2.0 * PI, 64).unwrap();
        let f = ScalarField::from_fn(&g, |x| x[0].sin());
        let l2 = f.norm_l2();
        for s in [-1.0, 0.0, 1.0, 2.0] {
            let n = sobolev_norm(&f, NormSpec::new(s).unwrap());
            assert!((n - 2f64.powf(s / 2.0) * l2).abs() < 1e-12 * l2);
        }
        assert!(NormSpec::new(4.5).is_err());
    }

    #[test]
    fn energy_examples() {
        let g = make_grid(1, 2.0 * PI, 256).unwrap();
        let m = Medium::free(&g);
        assert_eq!(energy(&WaveState::zeros(&g), &m), 0.0);
        let c = init_state(&ScalarField::constant(&g, 3.0), &ScalarField::zeros(&g)).unwrap();
        assert_eq!(energy(&c, &m), 0.0);
        let s = init_state(&ScalarField::from_fn(&g, |x| x[0].sin()), &ScalarField::zeros(&g)).unwrap();
        let h = g.spacing();
        // ½∫cos² = π/2; the one-sided difference quotient of sin has symbol
        // sinc(h/2), so the face quadrature carries a relative O(h²/12) defect
        let e = energy(&s, &m);
        assert!((e - PI / 2.0).abs() < PI / 2.0 * h * h / 12.0 * 1.01);
        assert_eq!(itm_energy(&s, &m), e);
        let m0 = m.with_chi(ScalarField::zeros(&g)).unwrap();
        assert_eq!(itm_energy(&s, &m0), 0.0);
    }

    #[test]
    fn itm_energy_vanishes_off_support() {
        let g = make_grid(1, 10.0, 128).unwrap();
        let chi = ScalarField::from_fn(&g, |x| if x[0] < 3.0 { 1.0 } else { 0.0 });
        let m = Medium::free(&g).with_chi(chi).unwrap();
        let u = ScalarField::from_fn(&g, |x| if x[0] > 5.0 && x[0] < 8.0 { (x[0] - 5.0) * (8.0 - x[0]) } else { 0.0 });
        let s = init_state(&u, &ScalarField::zeros(&g)).unwrap();
        assert_eq!(itm_energy(&s, &m), 0.0);
    }

    #[test]
    fn fit_rate_examples() {
        let c = 3.7;
        let pts = [(0.1, 0.1 * c), (0.05, 0.05 * c), (0.025, 0.025 * c)];
        assert!((fit_rate(&pts).unwrap() - 1.0).abs() < 1e-12);
        let sq: Vec<_> = [0.2, 0.1, 0.05, 0.025].iter().map(|&e| (e, e * e)).collect();
        assert!((fit_rate(&sq).unwrap() - 2.0).abs() < 1e-12);
        assert!(fit_rate(&[(0.1, 1.0), (0.05, 0.0), (0.02, 1.0)]).is_err());
        assert!(fit_rate(&[(0.1, 1.0), (0.05, 1.0)]).is_err());
    }

    #[test]
    fn zero_state_has_zero_drift() {
        let g = make_grid(1, 2.0 * PI, 64).unwrap();
        let m = Medium::free(&g);
        let mut opts = RunOptions::until(1.0);
        opts.record_energy = true;
        let (_, trace) = adaptive_run(&WaveState::zeros(&g), &m, &ItmSchedule::empty(), &opts, &mut ()).unwrap();
        assert_eq!(conservation_drift(&trace, &m).unwrap(), 0.0);
    }

    #[test]
    fn drift_rejects_variable_a() {
        let g = make_grid(1, 2.0 * PI, 64).unwrap();
        let a = ScalarField::from_fn(&g, |x| 2.0 + x[0].sin());
        let m = Medium::new(a, ScalarField::constant(&g, 1.0), ScalarField::constant(&g, 1.0)).unwrap();
        assert!(conservation_drift(&RunTrace::default(), &m).is_err());
    }

    #[test]
    fn window_drift_is_small() {
        let g = make_grid(1, 2.0 * PI, 128).unwrap();
        let m = Medium::free(&g);
        let u0 = ScalarField::from_fn(&g, |x| (-(x[0] - PI).powi(2) * 4.0).exp());
        let s = init_state(&u0, &ScalarField::zeros(&g)).unwrap();
        let sched = ItmSchedule::single(ItmWindow::new(1.0, 0.1, 0.5).unwrap());
        let mut opts = RunOptions::until(2.0);
        opts.record_energy = true;
        let (_, trace) = adaptive_run(&s, &m, &sched, &opts, &mut ()).unwrap();
        assert!(conservation_drift(&trace, &m).unwrap() < 1e-12);
    }

    #[test]
    fn uniformity_identical_states() {
        let g = make_grid(1, 2.0 * PI, 32).unwrap();
        let s = init_state(&ScalarField::from_fn(&g, |x| x[0].cos()), &ScalarField::zeros(&g)).unwrap();
        let states = vec![(0.1, s.clone()), (0.05, s.clone()), (0.2, s)];
        let r = uniformity_check(&states, (NormSpec::H2, NormSpec::H1)).unwrap();
        assert_eq!(r.ratio, 1.0);
        assert!(r.pass);
        assert_eq!(r.rows[0].epsilon, 0.2);
        let mut moved = states[0].1.clone();
        moved.t = 1.0;
        assert!(uniformity_check(&[(0.1, states[1].1.clone()), (0.2, moved)], (NormSpec::H2, NormSpec::H1)).is_err());
    }
}
