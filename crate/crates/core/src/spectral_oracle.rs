//! Exact solution of the constant-coefficient problem, one Fourier mode at a
//! time.
//!
//! With `a`, `b` and `χ ≡ 1` uniform each mode obeys
//! `û'' = -c²|k|² (1 + η(t)) û`. Since `η` is piecewise constant, the mode is
//! carried across every segment by a closed-form 2×2 transfer matrix acting on
//! `(û, ∂ₜû)`; zero-width windows contribute the jump `∂ₜû ← ∂ₜû - η₀ c²|k|² û`.

use std::ops::Mul;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::evolve::WaveState;
use crate::geometry::{fft, ScalarField, Spectrum};
use crate::media::ItmSchedule;

/// Linear map on `(û, ∂ₜû)` across a time segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferMatrix(pub [[f64; 2]; 2]);

impl TransferMatrix {
    pub const IDENTITY: TransferMatrix = TransferMatrix([[1.0, 0.0], [0.0, 1.0]]);

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    /// `next · self`: first `self`, then `next`.
    pub fn then(&self, next: &TransferMatrix) -> TransferMatrix {
        *next * *self
    }

    pub fn apply(&self, u: Complex64, ut: Complex64) -> (Complex64, Complex64) {
        let m = &self.0;
        (m[0][0] * u + m[0][1] * ut, m[1][0] * u + m[1][1] * ut)
    }

    /// Largest entrywise difference.
    pub fn max_diff(&self, other: &TransferMatrix) -> f64 {
        let mut d: f64 = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                d = d.max((self.0[r][c] - other.0[r][c]).abs());
            }
        }
        d
    }
}

impl Mul for TransferMatrix {
    type Output = TransferMatrix;

    fn mul(self, rhs: TransferMatrix) -> TransferMatrix {
        let (a, b) = (&self.0, &rhs.0);
        let mut out = [[0.0; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
        }
        TransferMatrix(out)
    }
}

/// Amplitude of a single mode at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeState {
    pub k: [f64; 2],
    pub u_hat: Complex64,
    pub ut_hat: Complex64,
    pub t: f64,
}

impl ModeState {
    pub fn advance(&self, matrix: &TransferMatrix, t: f64) -> ModeState {
        let (u_hat, ut_hat) = matrix.apply(self.u_hat, self.ut_hat);
        ModeState { u_hat, ut_hat, t, ..*self }
    }

    /// `½(|∂ₜû|² + |k|²|û|²)`.
    pub fn energy(&self) -> f64 {
        let k2 = self.k[0] * self.k[0] + self.k[1] * self.k[1];
        0.5 * (self.ut_hat.norm_sqr() + k2 * self.u_hat.norm_sqr())
    }
}

fn rotation(omega: f64, dt: f64) -> TransferMatrix {
    if omega == 0.0 {
        return TransferMatrix([[1.0, dt], [0.0, 1.0]]);
    }
    let (s, c) = (omega * dt).sin_cos();
    TransferMatrix([[c, s / omega], [-omega * s, c]])
}

/// Free propagation of a mode of wavenumber magnitude `k` over `dt`.
pub fn free_mode_matrix(k: f64, dt: f64) -> TransferMatrix {
    rotation(k.abs(), dt)
}

/// Propagation through a full window of width `eps` and weight `eta0`.
pub fn window_mode_matrix(k: f64, eps: f64, eta0: f64) -> TransferMatrix {
    partial_window_matrix(k, eps, eta0, eps)
}

/// Propagation over `duration` inside a window of width `eps`, for
/// trajectories evaluated mid-window.
pub fn partial_window_matrix(k: f64, eps: f64, eta0: f64, duration: f64) -> TransferMatrix {
    rotation(k.abs() * (1.0 + eta0 / eps).sqrt(), duration)
}

/// Limit of [`window_mode_matrix`] as the width vanishes.
pub fn jump_mode_matrix(k: f64, eta0: f64) -> TransferMatrix {
    TransferMatrix([[1.0, 0.0], [-eta0 * k * k, 1.0]])
}

/// Composes free segments, window matrices and jumps over `(t0, t1]`,
/// splitting at every window edge. A jump at `T` is applied when
/// `t0 < T ≤ t1`.
pub fn mode_propagator(k: f64, schedule: &ItmSchedule, t0: f64, t1: f64) -> TransferMatrix {
    let mut m = TransferMatrix::IDENTITY;
    let mut cur = t0;
    for w in schedule.windows() {
        if cur >= t1 {
            break;
        }
        if w.is_jump() {
            if w.center() > cur && w.center() <= t1 {
                m = m.then(&free_mode_matrix(k, w.center() - cur));
                m = m.then(&jump_mode_matrix(k, w.weight()));
                cur = w.center();
            }
            continue;
        }
        if w.end() <= cur {
            continue;
        }
        let start = w.start().max(cur);
        if start >= t1 {
            break;
        }
        if start > cur {
            m = m.then(&free_mode_matrix(k, start - cur));
        }
        let stop = w.end().min(t1);
        m = m.then(&partial_window_matrix(k, w.width(), w.weight(), stop - start));
        cur = stop;
    }
    if t1 > cur {
        m = m.then(&free_mode_matrix(k, t1 - cur));
    }
    m
}

/// Evolves a state exactly to time `t` for uniform `c²` and `χ ≡ 1`.
pub fn evolve_exact_from(state: &WaveState, schedule: &ItmSchedule, t: f64, c0_sq: f64) -> Result<WaveState> {
    if t < state.t {
        return Err(Error::InvalidArgument(format!("target time {t} precedes state time {}", state.t)));
    }
    if !(c0_sq > 0.0) {
        return Err(Error::NonPositive(format!("c0^2 = {c0_sq}")));
    }
    let grid = state.u.grid().clone();
    let u_hat = fft(&state.u);
    let ut_hat = fft(&state.ut);
    let c0 = c0_sq.sqrt();
    let evolved: Vec<(Complex64, Complex64)> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let k = c0 * grid.wavenumber_sq(i).sqrt();
            let m = mode_propagator(k, schedule, state.t, t);
            m.apply(u_hat.coefficients()[i], ut_hat.coefficients()[i])
        })
        .collect();
    let (u, ut): (Vec<_>, Vec<_>) = evolved.into_iter().unzip();
    Ok(WaveState {
        u: Spectrum::from_coefficients(&grid, u)?.to_real()?,
        ut: Spectrum::from_coefficients(&grid, ut)?.to_real()?,
        t,
    })
}

/// Exact solution at time `t` from data `(u0, u1)` at `t = 0`.
pub fn evolve_exact(
    u0: &ScalarField,
    u1: &ScalarField,
    schedule: &ItmSchedule,
    t: f64,
    c0_sq: f64,
) -> Result<WaveState> {
    let state = WaveState::new(u0.clone(), u1.clone(), 0.0)?;
    evolve_exact_from(&state, schedule, t, c0_sq)
}

fn is_multiple(x: f64, dt: f64) -> bool {
    let r = x / dt;
    (r - r.round()).abs() <= 1e-6
}

/// Transfer matrix over `[0, t]` assembled by classical RK4 on
/// `û'' = -|k|²(1 + η(s)) û` from the seeds `(1, 0)` and `(0, 1)`.
///
/// Every window edge and `t` must be a multiple of `dt_ode`, so each RK4 step
/// sees a constant `η`, sampled at the step midpoint.
pub fn mode_ode_bruteforce(k: f64, schedule: &ItmSchedule, t: f64, dt_ode: f64) -> Result<TransferMatrix> {
    if schedule.has_jumps() {
        return Err(Error::InvalidSchedule("brute force needs finite windows".into()));
    }
    if !(dt_ode > 0.0) {
        return Err(Error::InvalidArgument("dt_ode must be positive".into()));
    }
    for edge in schedule.edges().into_iter().chain(std::iter::once(t)) {
        if !is_multiple(edge, dt_ode) {
            return Err(Error::Misaligned(format!("{edge} is not a multiple of dt_ode = {dt_ode}")));
        }
    }
    let steps = (t / dt_ode).round() as usize;
    let k2 = k * k;
    let mut cols = [[1.0, 0.0], [0.0, 1.0]];
    for n in 0..steps {
        let mid = (n as f64 + 0.5) * dt_ode;
        let w2 = k2 * (1.0 + schedule.level_at(mid));
        let f = |y: [f64; 2]| [y[1], -w2 * y[0]];
        for y in cols.iter_mut() {
            let k1 = f(*y);
            let k2_ = f([y[0] + 0.5 * dt_ode * k1[0], y[1] + 0.5 * dt_ode * k1[1]]);
            let k3 = f([y[0] + 0.5 * dt_ode * k2_[0], y[1] + 0.5 * dt_ode * k2_[1]]);
            let k4 = f([y[0] + dt_ode * k3[0], y[1] + dt_ode * k3[1]]);
            for c in 0..2 {
                y[c] += dt_ode / 6.0 * (k1[c] + 2.0 * k2_[c] + 2.0 * k3[c] + k4[c]);
            }
        }
    }
    Ok(TransferMatrix([[cols[0][0], cols[1][0]], [cols[0][1], cols[1][1]]]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::ItmWindow;
    use std::f64::consts::PI;

    #[test]
    fn free_matrix_zero_mode_and_full_period() {
        let m = free_mode_matrix(0.0, 0.3);
        assert_eq!(m, TransferMatrix([[1.0, 0.3], [0.0, 1.0]]));
        let m = free_mode_matrix(1.0, 2.0 * PI);
        assert!(m.max_diff(&TransferMatrix::IDENTITY) < 1e-14);
    }

    #[test]
    fn window_limits() {
        let k = 2.5;
        assert!(window_mode_matrix(k, 0.1, 0.0).max_diff(&free_mode_matrix(k, 0.1)) < 1e-15);
        assert_eq!(window_mode_matrix(0.0, 0.1, 3.0), TransferMatrix([[1.0, 0.1], [0.0, 1.0]]));
        assert_eq!(jump_mode_matrix(1.0, 0.0), TransferMatrix::IDENTITY);
        assert_eq!(jump_mode_matrix(1.0, 2.0), TransferMatrix([[1.0, 0.0], [-2.0, 1.0]]));
    }

    #[test]
    fn free_matrix_composes() {
        for &k in &[0.0, 0.7, 3.0, 11.0] {
            let a = free_mode_matrix(k, 0.3).then(&free_mode_matrix(k, 0.45));
            assert!(a.max_diff(&free_mode_matrix(k, 0.75)) < 1e-12);
        }
    }

    #[test]
    fn propagator_splits_at_edges() {
        let w = ItmWindow::new(1.0, 0.2, 0.5).unwrap();
        let s = ItmSchedule::single(w);
        let k = 1.7;
        let direct = free_mode_matrix(k, 0.9)
            .then(&window_mode_matrix(k, 0.2, 0.5))
            .then(&free_mode_matrix(k, 0.4));
        assert!(mode_propagator(k, &s, 0.0, 1.5).max_diff(&direct) < 1e-13);
        // split inside the window
        let a = mode_propagator(k, &s, 0.0, 1.03);
        let b = mode_propagator(k, &s, 1.03, 1.5);
        assert!(a.then(&b).max_diff(&direct) < 1e-13);
        // jump window applied when T lies in (t0, t1]
        let j = ItmSchedule::single(ItmWindow::new(1.0, 0.0, 0.5).unwrap());
        let before = mode_propagator(k, &j, 0.0, 1.0);
        let expect = free_mode_matrix(k, 1.0).then(&jump_mode_matrix(k, 0.5));
        assert!(before.max_diff(&expect) < 1e-14);
        let after = mode_propagator(k, &j, 1.0, 1.5);
        assert!(after.max_diff(&free_mode_matrix(k, 0.5)) < 1e-14);
    }

    #[test]
    fn bruteforce_rejects_misalignment() {
        let s = ItmSchedule::single(ItmWindow::new(1.0, 0.05, 1.0).unwrap());
        assert!(matches!(mode_ode_bruteforce(1.0, &s, 2.0, 0.003), Err(Error::Misaligned(_))));
        let j = ItmSchedule::single(ItmWindow::new(1.0, 0.0, 1.0).unwrap());
        assert!(mode_ode_bruteforce(1.0, &j, 2.0, 1e-3).is_err());
    }

    #[test]
    fn mode_energy_is_constant_without_mirror() {
        let m0 = ModeState {
            k: [3.0, 4.0],
            u_hat: Complex64::new(0.3, -0.2),
            ut_hat: Complex64::new(1.1, 0.4),
            t: 0.0,
        };
        let e0 = m0.energy();
        for step in 1..20 {
            let t = 0.37 * step as f64;
            let m = m0.advance(&free_mode_matrix(5.0, t), t);
            assert!((m.energy() - e0).abs() < 1e-12 * e0);
        }
    }
}
