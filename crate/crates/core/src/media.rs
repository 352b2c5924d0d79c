//! Background media `(a, b)`, the mirror mask `χ`, and time schedules of
//! instantaneous time mirrors.
//!
//! The simulated operator is `a ∇·(b (1 + χ η(t)) ∇u)` where `η` is a sum of
//! boxes of height `η₀/ε` and width `ε`. A window of width zero stands for
//! the limiting Dirac impulse and is resolved by the steppers as a jump in
//! `∂ₜu`.

use crate::error::{Error, Result};
use crate::geometry::{Grid, ScalarField};

/// Coefficient fields of the wave operator.
#[derive(Debug, Clone)]
pub struct Medium {
    a: ScalarField,
    b: ScalarField,
    chi: ScalarField,
    c_sq: ScalarField,
}

impl Medium {
    /// Validates positivity of `a`, `b` and non-negativity of `χ`.
    pub fn new(a: ScalarField, b: ScalarField, chi: ScalarField) -> Result<Self> {
        a.check_same_grid(&b)?;
        a.check_same_grid(&chi)?;
        if a.min() <= 0.0 {
            return Err(Error::NonPositive(format!("a has minimum {}", a.min())));
        }
        if b.min() <= 0.0 {
            return Err(Error::NonPositive(format!("b has minimum {}", b.min())));
        }
        if chi.min() < 0.0 {
            return Err(Error::InvalidArgument(format!("chi has minimum {} < 0", chi.min())));
        }
        let c_sq = a.zip_map(&b, |x, y| x * y)?;
        Ok(Medium { a, b, chi, c_sq })
    }

    /// `a ≡ b ≡ χ ≡ 1`.
    pub fn free(grid: &Grid) -> Self {
        let one = ScalarField::constant(grid, 1.0);
        Medium::new(one.clone(), one.clone(), one).expect("unit medium is valid")
    }

    pub fn grid(&self) -> &Grid {
        self.a.grid()
    }

    pub fn a(&self) -> &ScalarField {
        &self.a
    }

    pub fn b(&self) -> &ScalarField {
        &self.b
    }

    pub fn chi(&self) -> &ScalarField {
        &self.chi
    }

    /// `c² = a b`.
    pub fn c_sq(&self) -> &ScalarField {
        &self.c_sq
    }

    /// `b χ`, the coefficient of the mirror flux.
    pub fn b_chi(&self) -> ScalarField {
        self.b
            .zip_map(&self.chi, |b, c| b * c)
            .expect("medium fields share a grid")
    }

    /// Returns a copy with another mask.
    pub fn with_chi(&self, chi: ScalarField) -> Result<Self> {
        Medium::new(self.a.clone(), self.b.clone(), chi)
    }

    fn is_uniform(f: &ScalarField) -> Option<f64> {
        let v0 = f.values()[0];
        f.values().iter().all(|&v| v == v0).then_some(v0)
    }

    /// Constant value of `a`, if `a` is spatially constant.
    pub fn constant_a(&self) -> Option<f64> {
        Self::is_uniform(&self.a)
    }

    /// `c²` when `a`, `b` and `χ ≡ 1` are all uniform: the setting in which
    /// the Fourier transform diagonalizes the problem.
    pub fn constant_coefficient(&self) -> Option<f64> {
        let a = Self::is_uniform(&self.a)?;
        let b = Self::is_uniform(&self.b)?;
        let chi = Self::is_uniform(&self.chi)?;
        (chi == 1.0).then_some(a * b)
    }
}

/// One mirror event: amplitude `η₀/ε` on `|t - T| < ε/2`. `ε = 0` is the
/// jump-condition limit.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ItmWindow {
    center: f64,
    width: f64,
    weight: f64,
}

impl ItmWindow {
    pub fn new(center: f64, width: f64, weight: f64) -> Result<Self> {
        if !(center.is_finite() && width.is_finite() && weight.is_finite()) {
            return Err(Error::InvalidWindow("non-finite parameter".into()));
        }
        if width < 0.0 {
            return Err(Error::InvalidWindow(format!("width {width} < 0")));
        }
        if weight < 0.0 {
            return Err(Error::InvalidWindow(format!("weight {weight} < 0")));
        }
        if center - 0.5 * width <= 0.0 {
            return Err(Error::InvalidWindow(format!(
                "window must start after t = 0: T - eps/2 = {}",
                center - 0.5 * width
            )));
        }
        Ok(ItmWindow {
            center,
            width,
            weight,
        })
    }

    /// Mirror time `T`.
    pub fn center(&self) -> f64 {
        self.center
    }

    /// Width `ε`.
    pub fn width(&self) -> f64 {
        self.width
    }

    /// Weight `η₀`.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn is_jump(&self) -> bool {
        self.width == 0.0
    }

    /// `t⁻ = T - ε/2`.
    pub fn start(&self) -> f64 {
        self.center - 0.5 * self.width
    }

    /// `t⁺ = T + ε/2`.
    pub fn end(&self) -> f64 {
        self.center + 0.5 * self.width
    }

    /// Amplitude `η₀/ε` inside the window.
    pub fn level(&self) -> f64 {
        self.weight / self.width
    }

    /// Same window with another width.
    pub fn with_width(&self, width: f64) -> Result<Self> {
        ItmWindow::new(self.center, width, self.weight)
    }

    pub fn contains(&self, t: f64) -> bool {
        (t - self.center).abs() < 0.5 * self.width
    }
}

/// Mirror weight produced by a physical preset; the mirror time and width
/// are chosen per experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowTemplate {
    pub weight: f64,
}

impl WindowTemplate {
    pub fn at(&self, center: f64, width: f64) -> Result<ItmWindow> {
        ItmWindow::new(center, width, self.weight)
    }
}

/// Ordered, pairwise disjoint list of mirror windows sharing one mask `χ`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ItmSchedule {
    windows: Vec<ItmWindow>,
}

impl ItmSchedule {
    pub fn new(windows: Vec<ItmWindow>) -> Result<Self> {
        for (i, pair) in windows.windows(2).enumerate() {
            if pair[0].end() >= pair[1].start() {
                return Err(Error::InvalidSchedule(format!(
                    "windows {} and {} overlap or are out of order",
                    i,
                    i + 1
                )));
            }
        }
        Ok(ItmSchedule { windows })
    }

    pub fn empty() -> Self {
        ItmSchedule::default()
    }

    pub fn single(window: ItmWindow) -> Self {
        ItmSchedule {
            windows: vec![window],
        }
    }

    pub fn windows(&self) -> &[ItmWindow] {
        &self.windows
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn has_jumps(&self) -> bool {
        self.windows.iter().any(ItmWindow::is_jump)
    }

    /// Every width replaced by `width`.
    pub fn with_width(&self, width: f64) -> Result<Self> {
        let windows = self
            .windows
            .iter()
            .map(|w| w.with_width(width))
            .collect::<Result<Vec<_>>>()?;
        ItmSchedule::new(windows)
    }

    /// Every weight replaced by zero; the perturbation disappears while the
    /// window geometry stays.
    pub fn switched_off(&self) -> Self {
        ItmSchedule {
            windows: self
                .windows
                .iter()
                .map(|w| ItmWindow {
                    weight: 0.0,
                    ..*w
                })
                .collect(),
        }
    }

    /// Time breakpoints: `t⁻`, `t⁺` of finite windows and `T` of jumps.
    pub fn edges(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for w in &self.windows {
            if w.is_jump() {
                out.push(w.center());
            } else {
                out.push(w.start());
                out.push(w.end());
            }
        }
        out
    }

    /// Index of the finite window whose open interior contains `t`.
    pub fn active_window(&self, t: f64) -> Option<usize> {
        self.windows
            .iter()
            .position(|w| !w.is_jump() && w.contains(t))
    }

    /// `η(t)` ignoring jump windows, usable by steppers at step midpoints.
    pub(crate) fn level_at(&self, t: f64) -> f64 {
        self.active_window(t)
            .map(|i| self.windows[i].level())
            .unwrap_or(0.0)
    }
}

/// Box profile `η(t)`: `η₀ᵢ/εᵢ` when `|t - Tᵢ| < εᵢ/2`, otherwise 0.
pub fn eta(schedule: &ItmSchedule, t: f64) -> Result<f64> {
    if schedule.has_jumps() {
        return Err(Error::InvalidSchedule(
            "eta is undefined for zero-width (jump) windows".into(),
        ));
    }
    Ok(schedule.level_at(t))
}

/// `b (1 + χ η(t))`.
pub fn effective_b(medium: &Medium, schedule: &ItmSchedule, t: f64) -> Result<ScalarField> {
    let level = eta(schedule, t)?;
    Ok(effective_b_at_level(medium, level))
}

pub(crate) fn effective_b_at_level(medium: &Medium, level: f64) -> ScalarField {
    if level == 0.0 {
        return medium.b().clone();
    }
    medium
        .b()
        .zip_map(medium.chi(), |b, c| b * (1.0 + c * level))
        .expect("medium fields share a grid")
}

/// Surface waves in a shaken tank: `c₀² (1 + α δ(t - T)) Δu`.
pub fn preset_water_tank(grid: &Grid, c0: f64, alpha: f64) -> Result<(Medium, WindowTemplate)> {
    if !(c0 > 0.0) || !(alpha > 0.0) {
        return Err(Error::NonPositive(format!("c0 = {c0}, alpha = {alpha}")));
    }
    let medium = Medium::new(
        ScalarField::constant(grid, c0 * c0),
        ScalarField::constant(grid, 1.0),
        ScalarField::constant(grid, 1.0),
    )?;
    Ok((medium, WindowTemplate { weight: alpha }))
}

/// Transverse-magnetic electromagnetics with static permittivity; the mirror
/// perturbs the inverse permeability.
pub fn preset_em_tm(eps_perm: &ScalarField, mu_inv: &ScalarField, chi: &ScalarField) -> Result<Medium> {
    if eps_perm.min() <= 0.0 || mu_inv.min() <= 0.0 {
        return Err(Error::NonPositive("permittivity and inverse permeability".into()));
    }
    Medium::new(eps_perm.map(|e| 1.0 / e), mu_inv.clone(), chi.clone())
}

/// Acoustic limit of elasticity (negligible shear modulus): `a = λ`,
/// `b = ρ⁻¹`, with the mirror acting on `ρ⁻¹`.
pub fn preset_elastic(lambda: &ScalarField, rho_inv: &ScalarField, chi: &ScalarField) -> Result<Medium> {
    if lambda.min() <= 0.0 || rho_inv.min() <= 0.0 {
        return Err(Error::NonPositive("Lamé coefficient and inverse density".into()));
    }
    Medium::new(lambda.clone(), rho_inv.clone(), chi.clone())
}

/// Isotropic Gaussian `base + amplitude · exp(-r²/(2 width²))` with periodic
/// distance to `center`.
pub fn gaussian_bump(grid: &Grid, base: f64, amplitude: f64, center: [f64; 2], width: f64) -> ScalarField {
    let values = (0..grid.len())
        .map(|i| {
            let r = grid.periodic_distance(i, center);
            base + amplitude * (-(r * r) / (2.0 * width * width)).exp()
        })
        .collect();
    ScalarField::from_raw(grid, values)
}

fn smooth_step(s: f64) -> f64 {
    // C^∞ transition from 0 (s ≤ 0) to 1 (s ≥ 1).
    let psi = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let p = psi(s);
    let q = psi(1.0 - s);
    p / (p + q)
}

/// Product over axes of C^∞ plateaus: 1 within `radius` of `center`,
/// 0 beyond `radius + transition`, scaled to `base + amplitude · plateau`.
pub fn smooth_plateau(
    grid: &Grid,
    base: f64,
    amplitude: f64,
    center: [f64; 2],
    radius: f64,
    transition: f64,
) -> ScalarField {
    let len = grid.length();
    let values = (0..grid.len())
        .map(|i| {
            let x = grid.coords(i);
            let plateau: f64 = (0..grid.dim())
                .map(|axis| {
                    let d = crate::geometry::periodic_delta(x[axis], center[axis], len).abs();
                    1.0 - smooth_step((d - radius) / transition)
                })
                .product();
            base + amplitude * plateau
        })
        .collect();
    ScalarField::from_raw(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_grid;

    fn one_window() -> ItmSchedule {
        ItmSchedule::single(ItmWindow::new(1.0, 0.1, 2.0).unwrap())
    }

    #[test]
    fn eta_box_values() {
        let s = one_window();
        assert!((eta(&s, 1.0).unwrap() - 20.0).abs() < 1e-12);
        assert_eq!(eta(&s, 0.5).unwrap(), 0.0);
        // half-open edges
        let w = s.windows()[0];
        assert_eq!(eta(&s, w.start()).unwrap(), 0.0);
        assert_eq!(eta(&s, w.end()).unwrap(), 0.0);
    }

    #[test]
    fn eta_box_area() {
        // exact quadrature of a piecewise-constant profile: level × width
        let s = one_window();
        let w = s.windows()[0];
        let area = eta(&s, w.center()).unwrap() * (w.end() - w.start());
        assert!((area - 2.0).abs() < 1e-12);
    }

    #[test]
    fn eta_rejects_jump_windows() {
        let s = ItmSchedule::single(ItmWindow::new(1.0, 0.0, 1.0).unwrap());
        assert!(eta(&s, 1.0).is_err());
        assert!(effective_b(&Medium::free(&make_grid(1, 1.0, 8).unwrap()), &s, 0.3).is_err());
    }

    #[test]
    fn window_invariants() {
        assert!(matches!(ItmWindow::new(0.05, 0.1, 1.0), Err(Error::InvalidWindow(_))));
        assert!(ItmWindow::new(1.0, -0.1, 1.0).is_err());
        let a = ItmWindow::new(1.0, 0.2, 1.0).unwrap();
        let b = ItmWindow::new(1.05, 0.2, 1.0).unwrap();
        assert!(ItmSchedule::new(vec![a, b]).is_err());
        assert!(ItmSchedule::new(vec![b, a]).is_err());
        let c = ItmWindow::new(2.0, 0.2, 1.0).unwrap();
        assert!(ItmSchedule::new(vec![a, c]).is_ok());
    }

    #[test]
    fn effective_b_outside_and_inside() {
        let g = make_grid(1, 10.0, 64).unwrap();
        let m = Medium::free(&g);
        let s = one_window();
        assert_eq!(effective_b(&m, &s, 0.2).unwrap(), *m.b());
        let inside = effective_b(&m, &s, 1.0).unwrap();
        assert!(inside.values().iter().all(|&v| (v - 21.0).abs() < 1e-12));
    }

    #[test]
    fn effective_b_with_compact_mask() {
        let g = make_grid(1, 10.0, 128).unwrap();
        let chi = smooth_plateau(&g, 0.0, 1.0, [5.0, 0.0], 1.0, 0.5);
        let b = gaussian_bump(&g, 1.0, 0.3, [2.0, 0.0], 1.0);
        let m = Medium::new(ScalarField::constant(&g, 1.0), b.clone(), chi.clone()).unwrap();
        let inside = effective_b(&m, &one_window(), 1.0).unwrap();
        for i in 0..g.len() {
            if chi.values()[i] == 0.0 {
                assert_eq!(inside.values()[i], b.values()[i]);
            } else {
                assert!(inside.values()[i] > b.values()[i]);
            }
        }
    }

    #[test]
    fn plateau_is_bounded_and_flat() {
        let g = make_grid(2, 8.0, 32).unwrap();
        let p = smooth_plateau(&g, 0.0, 1.0, [4.0, 4.0], 1.0, 1.0);
        assert!(p.min() >= 0.0 && p.max() <= 1.0);
        let center = 16 * 32 + 16;
        assert_eq!(p.values()[center], 1.0);
        assert_eq!(p.values()[0], 0.0);
    }

    #[test]
    fn water_tank_preset() {
        let g = make_grid(1, 1.0, 8).unwrap();
        let (m, t) = preset_water_tank(&g, 1.0, 1.0).unwrap();
        assert_eq!(m.constant_coefficient(), Some(1.0));
        assert_eq!(t.weight, 1.0);
        let (m, t) = preset_water_tank(&g, 2.0, 0.5).unwrap();
        assert!(m.c_sq().values().iter().all(|&c| c == 4.0));
        assert_eq!(t.weight, 0.5);
        assert_eq!(t.at(1.0, 0.1).unwrap().weight(), 0.5);
        assert!(preset_water_tank(&g, 0.0, 1.0).is_err());
    }

    #[test]
    fn em_and_elastic_presets() {
        let g = make_grid(1, 1.0, 8).unwrap();
        let one = ScalarField::constant(&g, 1.0);
        let m = preset_em_tm(&one, &one, &one).unwrap();
        assert_eq!(m.constant_coefficient(), Some(1.0));
        let m = preset_em_tm(&ScalarField::constant(&g, 4.0), &one, &one).unwrap();
        assert!(m.c_sq().values().iter().all(|&c| c == 0.25));
        let eps = ScalarField::from_fn(&g, |x| 1.0 + x[0]);
        let m = preset_em_tm(&eps, &one, &one).unwrap();
        for (a, e) in m.a().values().iter().zip(eps.values()) {
            assert_eq!(*a, 1.0 / e);
        }
        assert!(preset_em_tm(&ScalarField::constant(&g, -1.0), &one, &one).is_err());

        let m = preset_elastic(&ScalarField::constant(&g, 2.0), &ScalarField::constant(&g, 3.0), &one)
            .unwrap();
        assert!(m.c_sq().values().iter().all(|&c| c == 6.0));
        assert!(preset_elastic(&one, &ScalarField::zeros(&g), &one).is_err());
    }

    #[test]
    fn medium_rejects_negative_mask() {
        let g = make_grid(1, 1.0, 8).unwrap();
        let one = ScalarField::constant(&g, 1.0);
        assert!(Medium::new(one.clone(), one.clone(), ScalarField::constant(&g, -0.1)).is_err());
        assert!(Medium::new(ScalarField::zeros(&g), one.clone(), one).is_err());
    }
}
