//! TOML experiment configuration.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::WaveState;
use crate::geometry::{fft, periodic_delta, Grid, ScalarField};
use crate::media::{
    gaussian_bump, preset_elastic, preset_em_tm, preset_water_tank, smooth_plateau, ItmSchedule, ItmWindow, Medium,
};

pub const DEFAULT_POINTS_1D: usize = 512;
pub const DEFAULT_POINTS_2D: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    #[default]
    Run,
    Sweep,
    #[serde(alias = "oracle-compare")]
    Oracle,
    Refocus,
    JumpLimit,
    Uniformity,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Run => "run",
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::Oracle => "oracle",
            ExperimentKind::Refocus => "refocus",
            ExperimentKind::JumpLimit => "jump-limit",
            ExperimentKind::Uniformity => "uniformity",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: Option<u64>,
    pub grid: GridSpec,
    #[serde(default)]
    pub medium: MediumSpec,
    #[serde(default)]
    pub windows: Vec<WindowSpec>,
    pub initial: InitialSpec,
    pub run: RunSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub refocus: RefocusSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub length: f64,
    /// Points per axis; 512 in one dimension and 256 in two by default.
    #[serde(default)]
    pub points: Option<usize>,
}

/// Spatial profile of a coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Profile {
    Constant {
        value: f64,
    },
    GaussianBump {
        base: f64,
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
    SmoothPlateau {
        base: f64,
        amplitude: f64,
        center: Vec<f64>,
        radius: f64,
        transition: f64,
    },
}

impl Profile {
    fn one() -> Self {
        Profile::Constant { value: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MediumSpec {
    /// `a = b = 1`.
    Free {
        #[serde(default)]
        chi: Option<Profile>,
    },
    /// `a = c₀²`, `b = χ = 1`; supplies the default window weight `alpha`.
    WaterTank { c0: f64, alpha: f64 },
    EmTm {
        permittivity: Profile,
        inverse_permeability: Profile,
        #[serde(default)]
        chi: Option<Profile>,
    },
    Elastic {
        lambda: Profile,
        inverse_density: Profile,
        #[serde(default)]
        chi: Option<Profile>,
    },
    Custom {
        a: Profile,
        b: Profile,
        #[serde(default)]
        chi: Option<Profile>,
    },
}

impl Default for MediumSpec {
    fn default() -> Self {
        MediumSpec::Free { chi: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub center: f64,
    pub width: f64,
    /// Required unless the medium preset supplies one.
    #[serde(default)]
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default)]
    pub u0: FieldSpec,
    #[serde(default)]
    pub u1: FieldSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    /// Integer mode numbers; the wave vector is `2π mode / L`.
    pub mode: Vec<i64>,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    #[default]
    Zero,
    /// `A exp(-r²/(2w²))`.
    Gaussian {
        center: Vec<f64>,
        width: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `A w ∂ₓ exp(-r²/(2w²))` along `axis`.
    GaussianDerivative {
        center: Vec<f64>,
        width: f64,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default)]
        axis: usize,
    },
    /// `Σ A cos(k·x + φ)`.
    ModeSum { modes: Vec<ModeSpec> },
    /// Seeded random phases with `|û| ∝ (1 + |k|²)^{-α/2}`, scaled to the
    /// given maximum amplitude.
    PowerLaw {
        alpha: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Seeded uniform noise smoothed by `exp(-|k|²ℓ²/2)`, scaled to the
    /// given maximum amplitude.
    Noise {
        amplitude: f64,
        correlation_length: f64,
    },
}

fn default_cfl() -> f64 {
    crate::evolve::DEFAULT_CFL
}

fn default_max_window_steps() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub t_end: f64,
    #[serde(default)]
    pub snapshots: Vec<f64>,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// Runs needing more steps than this inside windows are reported as
    /// unreliable instead of being executed.
    #[serde(default = "default_max_window_steps")]
    pub max_window_steps: usize,
}

fn default_eps() -> Vec<f64> {
    vec![0.2, 0.1, 0.05, 0.025]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Window widths for sweep, jump-limit and uniformity runs.
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
    /// Measurement times; `2T` and `2T + 0.5` by default.
    #[serde(default)]
    pub times: Option<Vec<f64>>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            eps: default_eps(),
            times: None,
        }
    }
}

fn default_levels() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    #[serde(default = "default_levels")]
    pub levels: usize,
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec { levels: 3 }
    }
}

fn default_refocus_eps() -> Vec<f64> {
    vec![0.08, 0.04, 0.02, 0.01]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefocusSpec {
    #[serde(default = "default_refocus_eps")]
    pub eps: Vec<f64>,
    /// Source location; the center of `u1` by default.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    /// Comparison ball radius; by default the distance the forward fronts
    /// have cleared at `2T`.
    #[serde(default)]
    pub radius: Option<f64>,
}

impl Default for RefocusSpec {
    fn default() -> Self {
        RefocusSpec {
            eps: default_refocus_eps(),
            center: None,
            radius: None,
        }
    }
}

/// Reads and validates a configuration file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_config(&text)
}

/// Parses and validates TOML text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = toml::Deserializer::new(text);
    let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(path, e.into_inner().message().trim().to_string())
    })?;
    config.validate()?;
    Ok(config)
}

fn check_point(path: &str, v: &[f64], dim: usize) -> Result<[f64; 2]> {
    if v.len() != dim {
        return Err(Error::config(path, format!("expected {dim} coordinates, got {}", v.len())));
    }
    Ok([v[0], if dim == 2 { v[1] } else { 0.0 }])
}

fn check_positive(path: &str, value: f64) -> Result<()> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(Error::config(path, format!("must be positive, got {value}")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn points(&self) -> usize {
        self.grid
            .points
            .unwrap_or(if self.grid.dim == 2 { DEFAULT_POINTS_2D } else { DEFAULT_POINTS_1D })
    }

    pub fn validate(&self) -> Result<()> {
        let grid = Grid::new(self.grid.dim, self.grid.length, self.points())
            .map_err(|e| Error::config("grid", e.to_string()))?;
        self.medium_at(&grid)?;
        self.schedule()?;
        self.initial_state(&grid, 0)?;
        let run = &self.run;
        check_positive("run.t_end", run.t_end)?;
        if !(run.cfl > 0.0 && run.cfl <= 1.0) {
            return Err(Error::config("run.cfl", format!("must lie in (0, 1], got {}", run.cfl)));
        }
        for (i, &s) in run.snapshots.iter().enumerate() {
            if !(0.0..=run.t_end).contains(&s) {
                return Err(Error::config(format!("run.snapshots[{i}]"), format!("{s} outside [0, t_end]")));
            }
        }
        for (i, w) in self.windows.iter().enumerate() {
            if w.center + 0.5 * w.width >= run.t_end {
                return Err(Error::config(
                    format!("windows[{i}]"),
                    format!("window ends at {} which is not before t_end = {}", w.center + 0.5 * w.width, run.t_end),
                ));
            }
        }
        for (i, &e) in self.sweep.eps.iter().enumerate() {
            check_positive(&format!("sweep.eps[{i}]"), e)?;
        }
        for (i, &e) in self.refocus.eps.iter().enumerate() {
            check_positive(&format!("refocus.eps[{i}]"), e)?;
        }
        if let Some(c) = &self.refocus.center {
            check_point("refocus.center", c, self.grid.dim)?;
        }
        if let Some(r) = self.refocus.radius {
            check_positive("refocus.radius", r)?;
        }
        if self.oracle.levels < 2 {
            return Err(Error::config("oracle.levels", "need at least 2 refinement levels"));
        }
        Ok(())
    }

    /// The validated grid at the configured resolution.
    pub fn grid(&self) -> Result<Grid> {
        self.grid_with_points(self.points())
    }

    pub fn grid_with_points(&self, points: usize) -> Result<Grid> {
        Grid::new(self.grid.dim, self.grid.length, points).map_err(|e| Error::config("grid", e.to_string()))
    }

    fn profile(&self, path: &str, p: &Profile, grid: &Grid) -> Result<ScalarField> {
        let dim = grid.dim();
        Ok(match p {
            Profile::Constant { value } => ScalarField::constant(grid, *value),
            Profile::GaussianBump {
                base,
                amplitude,
                center,
                width,
            } => {
                check_positive(&format!("{path}.width"), *width)?;
                let c = check_point(&format!("{path}.center"), center, dim)?;
                gaussian_bump(grid, *base, *amplitude, c, *width)
            }
            Profile::SmoothPlateau {
                base,
                amplitude,
                center,
                radius,
                transition,
            } => {
                check_positive(&format!("{path}.transition"), *transition)?;
                if *radius < 0.0 {
                    return Err(Error::config(format!("{path}.radius"), "must be non-negative"));
                }
                let c = check_point(&format!("{path}.center"), center, dim)?;
                smooth_plateau(grid, *base, *amplitude, c, *radius, *transition)
            }
        })
    }

    fn chi(&self, chi: &Option<Profile>, grid: &Grid) -> Result<ScalarField> {
        self.profile("medium.chi", chi.as_ref().unwrap_or(&Profile::one()), grid)
    }

    /// Coefficients on `grid`.
    pub fn medium_at(&self, grid: &Grid) -> Result<Medium> {
        let wrap = |e: Error| Error::config("medium", e.to_string());
        match &self.medium {
            MediumSpec::Free { chi } => Medium::free(grid).with_chi(self.chi(chi, grid)?).map_err(wrap),
            MediumSpec::WaterTank { c0, alpha } => Ok(preset_water_tank(grid, *c0, *alpha).map_err(wrap)?.0),
            MediumSpec::EmTm {
                permittivity,
                inverse_permeability,
                chi,
            } => preset_em_tm(
                &self.profile("medium.permittivity", permittivity, grid)?,
                &self.profile("medium.inverse_permeability", inverse_permeability, grid)?,
                &self.chi(chi, grid)?,
            )
            .map_err(wrap),
            MediumSpec::Elastic {
                lambda,
                inverse_density,
                chi,
            } => preset_elastic(
                &self.profile("medium.lambda", lambda, grid)?,
                &self.profile("medium.inverse_density", inverse_density, grid)?,
                &self.chi(chi, grid)?,
            )
            .map_err(wrap),
            MediumSpec::Custom { a, b, chi } => Medium::new(
                self.profile("medium.a", a, grid)?,
                self.profile("medium.b", b, grid)?,
                self.chi(chi, grid)?,
            )
            .map_err(wrap),
        }
    }

    fn default_weight(&self) -> Option<f64> {
        match &self.medium {
            MediumSpec::WaterTank { alpha, .. } => Some(*alpha),
            _ => None,
        }
    }

    /// Mirror schedule from `[[windows]]`.
    pub fn schedule(&self) -> Result<ItmSchedule> {
        let windows = self
            .windows
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let path = format!("windows[{i}]");
                let weight = w
                    .weight
                    .or_else(|| self.default_weight())
                    .ok_or_else(|| Error::config(format!("{path}.weight"), "missing and the preset supplies none"))?;
                ItmWindow::new(w.center, w.width, weight).map_err(|e| Error::config(path, e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        ItmSchedule::new(windows).map_err(|e| Error::config("windows", e.to_string()))
    }

    /// The first window, which sets `T` and `η₀` for the ε experiments.
    pub fn mirror(&self) -> Result<ItmWindow> {
        self.schedule()?
            .windows()
            .first()
            .copied()
            .ok_or_else(|| Error::config("windows", "this experiment needs at least one window"))
    }

    fn field(&self, path: &str, spec: &FieldSpec, grid: &Grid, seed: u64) -> Result<ScalarField> {
        let dim = grid.dim();
        let len = grid.length();
        let field = match spec {
            FieldSpec::Zero => ScalarField::zeros(grid),
            FieldSpec::Gaussian {
                center,
                width,
                amplitude,
            } => {
                check_positive(&format!("{path}.width"), *width)?;
                let c = check_point(&format!("{path}.center"), center, dim)?;
                gaussian_bump(grid, 0.0, *amplitude, c, *width)
            }
            FieldSpec::GaussianDerivative {
                center,
                width,
                amplitude,
                axis,
            } => {
                check_positive(&format!("{path}.width"), *width)?;
                let c = check_point(&format!("{path}.center"), center, dim)?;
                if *axis >= dim {
                    return Err(Error::config(format!("{path}.axis"), format!("axis {axis} on a {dim}-d grid")));
                }
                let bump = gaussian_bump(grid, 0.0, *amplitude, c, *width);
                let values = bump
                    .values()
                    .iter()
                    .enumerate()
                    .map(|(i, g)| -periodic_delta(grid.coords(i)[*axis], c[*axis], len) / width * g)
                    .collect();
                ScalarField::new(grid, values)?
            }
            FieldSpec::ModeSum { modes } => {
                let two_pi = 2.0 * std::f64::consts::PI / len;
                for (i, m) in modes.iter().enumerate() {
                    if m.mode.len() != dim {
                        return Err(Error::config(
                            format!("{path}.modes[{i}].mode"),
                            format!("expected {dim} mode numbers"),
                        ));
                    }
                }
                ScalarField::from_fn(grid, |x| {
                    modes
                        .iter()
                        .map(|m| {
                            let phase: f64 = m.mode.iter().zip(x).map(|(&k, xi)| two_pi * k as f64 * xi).sum();
                            m.amplitude * (phase + m.phase).cos()
                        })
                        .sum()
                })
            }
            FieldSpec::PowerLaw { alpha, amplitude } => {
                let noise = white_noise(grid, seed);
                let mut spec = fft(&noise);
                for (i, c) in spec.coefficients_mut().iter_mut().enumerate() {
                    let norm = c.norm();
                    let target = (1.0 + grid.wavenumber_sq(i)).powf(-alpha / 2.0);
                    *c = if norm > 0.0 { *c / norm * target } else { 0.0.into() };
                }
                normalize(spec.to_real_part(), *amplitude)
            }
            FieldSpec::Noise {
                amplitude,
                correlation_length,
            } => {
                check_positive(&format!("{path}.correlation_length"), *correlation_length)?;
                let noise = white_noise(grid, seed);
                let l2 = correlation_length * correlation_length;
                let smooth = crate::geometry::fourier_multiplier(&noise, |k| (-(k[0] * k[0] + k[1] * k[1]) * l2 / 2.0).exp())?;
                normalize(smooth, *amplitude)
            }
        };
        field.check_finite(path).map_err(|e| Error::config(path, e.to_string()))?;
        Ok(field)
    }

    /// `(u0, u1)` on `grid`; random kinds draw from `seed`.
    pub fn initial_state(&self, grid: &Grid, seed: u64) -> Result<WaveState> {
        let u0 = self.field("initial.u0", &self.initial.u0, grid, seed)?;
        let u1 = self.field("initial.u1", &self.initial.u1, grid, seed.wrapping_add(1))?;
        WaveState::new(u0, u1, 0.0)
    }

    /// Center and width of the `u1` profile, when it has one.
    pub fn u1_support(&self) -> Option<([f64; 2], f64)> {
        let dim = self.grid.dim;
        match &self.initial.u1 {
            FieldSpec::Gaussian { center, width, .. } | FieldSpec::GaussianDerivative { center, width, .. } => {
                check_point("", center, dim).ok().map(|c| (c, *width))
            }
            _ => None,
        }
    }
}

/// Text of the reference scenario shipped in `configs/default.toml`.
pub const DEFAULT_SCENARIO: &str = include_str!("../../../../configs/default.toml");

/// The reference scenario: free medium, `L = 20`, `N = 512`, mirror at
/// `T = 1.5` with `η₀ = 0.5`, Gaussian `u₀` and Gaussian-derivative `u₁` of
/// width 0.5 at the center.
pub fn default_scenario() -> ExperimentConfig {
    parse_config(DEFAULT_SCENARIO).expect("the shipped default scenario is valid")
}

fn white_noise(grid: &Grid, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    ScalarField::new(grid, values).expect("finite noise")
}

fn normalize(f: ScalarField, amplitude: f64) -> ScalarField {
    let m = f.max_abs();
    if m == 0.0 {
        f
    } else {
        f.scale(amplitude / m)
    }
}
