//! Experiment recipes behind the `shocklab` binary: configuration files,
//! decay-rate fits, preparation of data on the center-stable manifold by
//! shooting, exit-time scaling, the Green-function probe and report output.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::csm::{self, Dichotomy, LpOptions, PdeDichotomy, TruncatedNonlinearity, UnstableSplit};
use crate::disc::{l1_norm, l2_norm, sobolev_norm, Pde};
use crate::error::{Error, Result};
use crate::evolve::{
    damping_monitor, evolve_perturbation, evolve_reduced_shifted, interior, pad, DampingOptions, DampingReport, ImexStepper,
    NonlinearResidual, ReducedShifted, TrajectoryRecord,
};
use crate::grid::Grid1D;
use crate::linop::LinearizedOperator;
use crate::model::{EndpointData, FluxModel, SemilinearModel};
use crate::profile::{conservation_background, solve_profile_conservation, solve_profile_semilinear, Profile};
use crate::special::{golden_section, heat_kernel, loglog_fit, fit_line};
use crate::spectral::{scan_imaginary_axis, unstable_spectrum, unstable_spectrum_refined, SpectralDecomposition, SpectralOptions};
use crate::tracking::{compute_alpha, kernel_audit, track_shock, Channel, KernelAudit, KernelE};

/// Environment variable naming the root for relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "SHOCKLAB_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Burgers { u_minus: f64, u_plus: f64 },
    /// The 2x2 test system with its default Lax endpoints.
    Coupled2,
    /// `u_t = u_xx - kappa^2 u + 2 u^3` about the pulse `kappa sech(kappa x)`.
    CubicPulse { kappa: f64 },
    /// The operator `d_xx + l(l+1) sech^2 x` alone (no nonlinear problem).
    PoschlTeller { l: u32 },
    /// The ODE `u' = -u, v' = v + u^2`.
    QuadraticSaddle,
}

impl ModelSpec {
    pub fn name(&self) -> String {
        match self {
            Self::Burgers { u_minus, u_plus } => format!("burgers({u_minus},{u_plus})"),
            Self::Coupled2 => "coupled2".into(),
            Self::CubicPulse { kappa } => format!("cubic-pulse({kappa})"),
            Self::PoschlTeller { l } => format!("poschl-teller({l})"),
            Self::QuadraticSaddle => "quadratic-saddle".into(),
        }
    }

    pub fn flux(&self) -> Option<FluxModel> {
        match self {
            Self::Burgers { u_minus, u_plus } => Some(FluxModel::burgers(*u_minus, *u_plus)),
            Self::Coupled2 => Some(FluxModel::coupled2()),
            _ => None,
        }
    }

    pub fn pde(&self) -> Option<Pde> {
        match self {
            Self::CubicPulse { kappa } => Some(Pde::Semilinear(SemilinearModel::CubicPulse { kappa: *kappa })),
            _ => self.flux().map(Pde::Conservation),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub h: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { x_min: -30.0, x_max: 30.0, h: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    #[default]
    Zero,
    Gaussian { center: f64, width: f64 },
    /// `ubar(x - shift) - ubar(x)`; the amplitude is ignored.
    Translate { shift: f64 },
    /// Seeded sum of Gaussian bumps, scaled to the amplitude in sup norm.
    Random { width: f64, bumps: usize },
    /// Top unstable eigenfunction, unit discrete L2 norm.
    UnstableMode,
    /// `P_cs` of a Gaussian, scaled to the amplitude in L2.
    CsGaussian { center: f64, width: f64 },
    /// The translation mode `ubar_x`, scaled to the amplitude in L2.
    TranslationMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct PerturbationSpec {
    #[serde(default)]
    pub shape: Shape,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldMode {
    #[default]
    None,
    ProjectCs,
    Shoot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExitSpec {
    pub eps: Vec<f64>,
    /// Exit radius; `0.1 |u_+ - u_-|`, or `0.1 sup|ubar - u_-|` for pulses, when absent.
    pub radius: Option<f64>,
    pub t_max: f64,
    /// Spacing of translate-distance samples.
    pub sample_dt: f64,
}

impl Default for ExitSpec {
    fn default() -> Self {
        Self { eps: vec![1e-4, 1e-3, 1e-2], radius: None, t_max: 50.0, sample_dt: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShootSpec {
    /// Shooting horizon.
    pub horizon: f64,
    /// Continuation stages in the horizon.
    pub stages: usize,
    pub tol_exit: f64,
    /// cs amplitudes of the tangency audit.
    pub amplitudes: Vec<f64>,
    pub cs_center: f64,
    pub cs_width: f64,
    /// Extra unstable-mode amplitude of the contrast run.
    pub kick: f64,
    /// Time over which prepared data must stay in the exit radius.
    pub stay_time: f64,
}

impl Default for ShootSpec {
    fn default() -> Self {
        Self {
            horizon: 50.0,
            stages: 10,
            tol_exit: 1e-6,
            amplitudes: vec![1e-3, 3e-3, 1e-2, 3e-2],
            cs_center: 1.0,
            cs_width: 1.0,
            kick: 1e-3,
            stay_time: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GreenSpec {
    pub y0: f64,
    pub times: Vec<f64>,
    pub m_max: f64,
    pub c_max: f64,
}

impl Default for GreenSpec {
    fn default() -> Self {
        Self { y0: -5.0, times: vec![1.0, 5.0, 10.0], m_max: 20.0, c_max: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackSpec {
    pub enabled: bool,
    /// Spacing of the snapshots entering the time quadrature.
    pub gap: f64,
    /// Tracking stops here (or at `t_end` if earlier).
    pub t_end: f64,
    pub picard_tol: f64,
    /// Log-spaced audit times `[t_lo, t_hi]` and their count.
    pub audit_window: [f64; 2],
    pub audit_samples: usize,
}

impl Default for TrackSpec {
    fn default() -> Self {
        Self { enabled: true, gap: 0.2, t_end: 100.0, picard_tol: 1e-6, audit_window: [1.0, 100.0], audit_samples: 25 }
    }
}

fn default_dt() -> f64 {
    0.01
}
fn default_t_end() -> f64 {
    100.0
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_window() -> [f64; 2] {
    [50.0, 500.0]
}
fn default_record() -> f64 {
    0.5
}

/// Everything one experiment needs. Unspecified sections take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub model: ModelSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default)]
    pub perturbation: PerturbationSpec,
    #[serde(default)]
    pub manifold: ManifoldMode,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default = "default_window")]
    pub rate_window: [f64; 2],
    /// Time between recorded samples.
    #[serde(default = "default_record")]
    pub record_every: f64,
    #[serde(default)]
    pub exit: ExitSpec,
    #[serde(default)]
    pub shoot: ShootSpec,
    #[serde(default)]
    pub green: GreenSpec,
    #[serde(default)]
    pub track: TrackSpec,
}

impl ExperimentConfig {
    pub fn new(model: ModelSpec) -> Self {
        Self {
            name: model.name(),
            model,
            grid: GridSpec::default(),
            dt: default_dt(),
            t_end: default_t_end(),
            perturbation: PerturbationSpec::default(),
            manifold: ManifoldMode::None,
            output_dir: default_out(),
            rate_window: default_window(),
            record_every: default_record(),
            exit: ExitSpec::default(),
            shoot: ShootSpec::default(),
            green: GreenSpec::default(),
            track: TrackSpec::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.t_end >= 0.0 && self.record_every >= self.dt) {
            return Err(Error::Config("need dt > 0, t_end >= 0 and record_every >= dt".into()));
        }
        if !(self.grid.h > 0.0 && self.grid.x_max > self.grid.x_min) {
            return Err(Error::Config("grid needs h > 0 and x_max > x_min".into()));
        }
        let [lo, hi] = self.rate_window;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::Config(format!("rate window [{lo}, {hi}] is empty")));
        }
        Ok(())
    }

    /// Output directory, resolved against the output-root variable when relative.
    pub fn out_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output_dir.is_relative() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }

    pub fn record_stride(&self) -> usize {
        (self.record_every / self.dt).round().max(1.0) as usize
    }
}

/// A model discretized on the configured grid, with its background and
/// linearization.
pub struct Lab {
    pub cfg: ExperimentConfig,
    pub grid: Grid1D,
    pub pde: Option<Pde>,
    pub background: Option<Profile>,
    pub op: LinearizedOperator,
}

fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

impl Lab {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let g = cfg.grid;
        let grid = Grid1D::with_spacing(g.x_min, g.x_max, g.h)?;
        let (pde, background, op) = match &cfg.model {
            ModelSpec::QuadraticSaddle => return Err(Error::Config("the quadratic saddle is an ODE without a grid".into())),
            ModelSpec::PoschlTeller { l } => {
                let c = (*l as f64) * (*l as f64 + 1.0);
                (None, None, LinearizedOperator::scalar(grid, |_| 0.0, move |x| c * sech(x).powi(2)))
            }
            ModelSpec::CubicPulse { kappa } => {
                let model = SemilinearModel::CubicPulse { kappa: *kappa };
                let bg = solve_profile_semilinear(&model, &grid, None)?;
                let pde = Pde::Semilinear(model);
                let op = LinearizedOperator::assemble(&pde, &bg)?;
                (Some(pde), Some(bg), op)
            }
            spec => {
                let m = spec.flux().expect("flux models handled here");
                let bg = conservation_background(&m, &grid)?;
                let pde = Pde::Conservation(m);
                let op = LinearizedOperator::assemble(&pde, &bg)?;
                (Some(pde), Some(bg), op)
            }
        };
        Ok(Self { cfg: cfg.clone(), grid, pde, background, op })
    }

    pub fn stepper(&self) -> Result<ImexStepper> {
        let pde = self.pde.clone().ok_or_else(|| Error::Config("model has no nonlinear evolution".into()))?;
        ImexStepper::new(pde, self.grid, self.cfg.dt)
    }

    pub fn background(&self) -> Result<&Profile> {
        self.background.as_ref().ok_or_else(|| Error::Config("model has no background wave".into()))
    }

    pub fn spectrum(&self) -> Result<SpectralDecomposition> {
        unstable_spectrum(&self.op, SpectralOptions::default())
    }

    /// Default exit radius: a tenth of the wave amplitude.
    pub fn exit_radius(&self) -> Result<f64> {
        if let Some(r) = self.cfg.exit.radius {
            return Ok(r);
        }
        let bg = self.background()?;
        let jump = (&bg.u_plus - &bg.u_minus).norm();
        if jump > 0.0 {
            return Ok(0.1 * jump);
        }
        let n = bg.dim();
        let u = bg.flat();
        let sup = (0..bg.grid.m)
            .map(|i| (0..n).map(|c| (u[n * i + c] - bg.u_minus[c]).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        Ok(0.1 * sup)
    }

    fn interior_x(&self, k: usize) -> f64 {
        self.grid.x(k / self.op.n + 1)
    }

    /// Initial perturbation on interior unknowns.
    pub fn perturbation(&self, spec: &PerturbationSpec, sd: Option<&SpectralDecomposition>) -> Result<DVector<f64>> {
        let dim = self.op.dim();
        let amp = spec.amplitude;
        let v = match &spec.shape {
            Shape::Zero => DVector::zeros(dim),
            Shape::Gaussian { center, width } => {
                DVector::from_fn(dim, |k, _| amp * (-((self.interior_x(k) - center) / width).powi(2)).exp())
            }
            Shape::Translate { shift } => {
                let bg = self.background()?;
                let s = bg.sample_shifted(&self.grid, *shift);
                interior(bg.dim(), &s) - interior(bg.dim(), &bg.flat())
            }
            Shape::Random { width, bumps } => {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                let centers: Vec<(f64, f64)> =
                    (0..*bumps).map(|_| (rng.gen_range(-5.0..5.0), if rng.gen_bool(0.5) { 1.0 } else { -1.0 })).collect();
                let raw = DVector::from_fn(dim, |k, _| {
                    let x = self.interior_x(k);
                    centers.iter().map(|(c, s)| s * (-((x - c) / width).powi(2)).exp()).sum::<f64>()
                });
                let sup = raw.amax();
                if sup > 0.0 {
                    raw * (amp / sup)
                } else {
                    raw
                }
            }
            Shape::UnstableMode => {
                let sd = sd.ok_or_else(|| Error::Config("unstable mode needs a spectral decomposition".into()))?;
                if sd.p == 0 {
                    return Err(Error::Config("no unstable mode to seed".into()));
                }
                let phi = sd.right.column(0).into_owned();
                &phi * (amp / self.op.norm(&phi))
            }
            Shape::CsGaussian { center, width } => {
                let g = DVector::from_fn(dim, |k, _| (-((self.interior_x(k) - center) / width).powi(2)).exp());
                let g = match sd {
                    Some(sd) if sd.p > 0 => UnstableSplit::from_spectral(&self.op, sd)?.pi_cs(&g),
                    _ => g,
                };
                let nrm = self.op.norm(&g);
                g * (amp / nrm)
            }
            Shape::TranslationMode => {
                let phi = self.op.phi.clone().ok_or_else(|| Error::Config("operator has no translation mode".into()))?;
                &phi * (amp / self.op.norm(&phi))
            }
        };
        Ok(v)
    }
}

/// `min_alpha |u - ubar(. - alpha)|_{L2}` by golden-section search on
/// `[guess - span, guess + span]`.
pub fn translate_distance(bg: &Profile, u: &[f64], guess: f64, span: f64) -> (f64, f64) {
    let grid = &bg.grid;
    golden_section(guess - span, guess + span, 1e-7, |a| {
        let s = bg.sample_shifted(grid, a);
        let d: Vec<f64> = u.iter().zip(&s).map(|(x, y)| x - y).collect();
        l2_norm(grid, &d)
    })
}

// ---------------------------------------------------------------- profile

#[derive(Debug, Clone, Serialize)]
pub struct ProfileReport {
    pub model: String,
    pub m: usize,
    pub residual_sup: f64,
    pub theta_hat: f64,
    /// Sup distance to the closed-form profile where one exists.
    pub oracle_error: Option<f64>,
    pub seconds: f64,
    pub pass: bool,
}

/// Closed-form scalar Burgers profile with the midpoint at the origin.
pub fn burgers_profile(u_minus: f64, u_plus: f64, x: f64) -> f64 {
    0.5 * (u_minus + u_plus) - 0.5 * (u_minus - u_plus) * ((u_minus - u_plus) * x / 4.0).tanh()
}

pub fn run_profile(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ProfileReport> {
    let start = std::time::Instant::now();
    let g = cfg.grid;
    let grid = Grid1D::with_spacing(g.x_min, g.x_max, g.h)?;
    let p = match &cfg.model {
        ModelSpec::CubicPulse { kappa } => solve_profile_semilinear(&SemilinearModel::CubicPulse { kappa: *kappa }, &grid, None)?,
        spec => {
            let m = spec.flux().ok_or_else(|| Error::Config("profile needs a flux or pulse model".into()))?;
            solve_profile_conservation(&m, &grid)?
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    let oracle_error = match &cfg.model {
        ModelSpec::Burgers { u_minus, u_plus } => {
            Some((0..grid.m).map(|i| (p.ubar[(0, i)] - burgers_profile(*u_minus, *u_plus, grid.x(i))).abs()).fold(0.0, f64::max))
        }
        ModelSpec::CubicPulse { kappa } => {
            Some((0..grid.m).map(|i| (p.ubar[(0, i)] - kappa * sech(kappa * grid.x(i))).abs()).fold(0.0, f64::max))
        }
        _ => None,
    };
    // the pulse is a second-order discrete steady state, the fronts are fourth order
    let oracle_tol = match &cfg.model {
        ModelSpec::CubicPulse { .. } => g.h * g.h,
        _ => 1e-6,
    };
    let pass = p.residual_sup <= 1e-8 && oracle_error.is_none_or(|e| e <= oracle_tol);
    if let Some(dir) = out {
        p.write(&dir.join("profile.csv"))?;
    }
    Ok(ProfileReport { model: cfg.model.name(), m: grid.m, residual_sup: p.residual_sup, theta_hat: p.theta_hat, oracle_error, seconds, pass })
}

// --------------------------------------------------------------- spectrum

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub model: String,
    pub p: usize,
    pub eigenvalues: Vec<[f64; 2]>,
    pub p_refined: usize,
    pub eigenvalues_refined: Vec<[f64; 2]>,
    pub zero_mode_residual: Option<f64>,
    pub d1_ok: Option<bool>,
    pub d1_min_distance: Option<f64>,
    pub seconds: f64,
    pub pass: bool,
}

pub fn run_spectrum(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<SpectrumReport> {
    let start = std::time::Instant::now();
    let lab = Lab::new(cfg)?;
    let build = |g: &Grid1D| -> Result<LinearizedOperator> {
        let mut c = cfg.clone();
        c.grid.h = g.h();
        Ok(Lab::new(&c)?.op)
    };
    let (coarse, fine) = unstable_spectrum_refined(build, &lab.grid, SpectralOptions::default())?;
    let d1 = if lab.background.is_some() && lab.op.dim() <= 1200 { Some(scan_imaginary_axis(&lab.op, 2.0, 41)?) } else { None };
    let ev = |sd: &SpectralDecomposition| sd.eigenvalues.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>();
    if let Some(dir) = out {
        coarse.write_eigenvalues_csv(&dir.join("eigenvalues.csv"))?;
        coarse.write_eigenfunctions_csv(&dir.join("eigenfunctions.csv"))?;
        lab.op.write_matrix_market(&dir.join("operator.mtx"))?;
        if let Some(d) = &d1 {
            d.write_json(&dir.join("d1.json"))?;
        }
    }
    Ok(SpectrumReport {
        model: cfg.model.name(),
        p: coarse.p,
        eigenvalues: ev(&coarse),
        p_refined: fine.p,
        eigenvalues_refined: ev(&fine),
        zero_mode_residual: lab.op.zero_mode_residual(),
        d1_ok: d1.as_ref().map(|d| d.d1_ok),
        d1_min_distance: d1.as_ref().map(|d| d.min_distance),
        seconds: start.elapsed().as_secs_f64(),
        pass: coarse.p == fine.p && d1.as_ref().is_none_or(|d| d.d1_ok),
    })
}

// --------------------------------------------------------------- manifold

#[derive(Debug, Clone, Serialize)]
pub struct SaddleReport {
    pub eps: f64,
    pub max_error: f64,
    pub contraction_factor: f64,
    pub tangency_slope: f64,
    pub invariance_residual: f64,
    pub lipschitz_eps: Vec<(f64, f64)>,
    pub lipschitz_linearity: f64,
    pub pass: bool,
}

/// The planar saddle `A = diag(-1, 1)`, `N(u, v) = (0, u^2)` with graph
/// `v = -u^2/3`.
pub fn saddle() -> Result<Dichotomy> {
    Dichotomy::new(DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0])), 0.9, 0.05, 10.0)
}

pub fn saddle_nonlinearity(eps: f64) -> TruncatedNonlinearity {
    TruncatedNonlinearity::euclidean(2, eps, Arc::new(|w: &DVector<f64>| DVector::from_vec(vec![0.0, w[0] * w[0]])))
}

/// Builds the saddle graph on `|u| <= eps/2`, checks it against the closed
/// form, its tangency and invariance, and audits the truncation Lipschitz
/// constant over `eps_list`.
pub fn saddle_manifold(eps: f64, eps_list: &[f64], out: Option<&Path>) -> Result<SaddleReport> {
    let d = saddle()?;
    let n = saddle_nonlinearity(eps);
    let opts = LpOptions::default();
    let half = 0.5 * eps;
    let samples: Vec<DVector<f64>> = (-20..=20).map(|k| DVector::from_vec(vec![half * k as f64 / 20.0, 0.0])).collect();
    let g = csm::build_graph(&d, &n, &samples, opts)?;
    let max_error = g.samples.iter().zip(&g.values).map(|(s, v)| (v[1] + s[0] * s[0] / 3.0).abs()).fold(0.0, f64::max);
    let tiny: Vec<DVector<f64>> = (0..12).map(|k| DVector::from_vec(vec![half * 1e-3 * 10f64.powf(k as f64 / 11.0 * 2.0), 0.0])).collect();
    let gt = csm::build_graph(&d, &n, &tiny, opts)?;
    let tangency_slope = gt.tangency_slope(half * 0.999e-3, half * 1.001e-1).unwrap_or(f64::NAN);
    let inv_samples: Vec<DVector<f64>> = [-0.8, -0.3, 0.2, 0.9].iter().map(|&s| DVector::from_vec(vec![s * half, 0.0])).collect();
    let gi = csm::build_graph(&d, &n, &inv_samples, opts)?;
    let inv = csm::verify_invariance(&gi, &d, &n, 1.0, None, opts)?;
    let lipschitz_eps: Vec<(f64, f64)> =
        eps_list.iter().map(|&e| (e, saddle_nonlinearity(e).audit(2, 400, 7).measured)).collect();
    let lipschitz_linearity = lipschitz_linearity(&lipschitz_eps);
    if let Some(dir) = out {
        g.write_csv(&dir.join("graph.csv"))?;
    }
    let pass = max_error <= 1e-4
        && g.contraction_factor < 0.5
        && tangency_slope >= 1.9
        && inv.max_residual <= 1e-5
        && lipschitz_linearity <= 0.2;
    Ok(SaddleReport {
        eps,
        max_error,
        contraction_factor: g.contraction_factor,
        tangency_slope,
        invariance_residual: inv.max_residual,
        lipschitz_eps,
        lipschitz_linearity,
        pass,
    })
}

/// Largest relative deviation of `Lip(eps)/eps` from its mean.
pub fn lipschitz_linearity(samples: &[(f64, f64)]) -> f64 {
    let ratios: Vec<f64> = samples.iter().map(|(e, l)| l / e).collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len().max(1) as f64;
    ratios.iter().map(|r| (r / mean - 1.0).abs()).fold(0.0, f64::max)
}

// --------------------------------------------------------------- shooting

#[derive(Debug, Clone, Serialize)]
pub struct ShootingResult {
    pub w0_norm: f64,
    pub z0_norm: f64,
    /// Unstable coordinates of `z0`.
    pub coords: Vec<f64>,
    /// `|P_u|` of the orbital deviation at the horizon.
    pub residual: f64,
    pub newton_iterations: usize,
    /// `|z0 - Phi(w0)|` against the Lyapunov-Perron graph, when it contracts.
    pub lp_agreement: Option<f64>,
    #[serde(skip)]
    pub v0: DVector<f64>,
    #[serde(skip)]
    pub z0: DVector<f64>,
}

struct Shooter<'a> {
    lab: &'a Lab,
    stepper: ImexStepper,
    split: UnstableSplit,
    lambda_max: f64,
    escape: f64,
}

impl<'a> Shooter<'a> {
    fn new(lab: &'a Lab, sd: &SpectralDecomposition) -> Result<Self> {
        if sd.p == 0 {
            return Err(Error::Config("shooting needs an unstable mode".into()));
        }
        Ok(Self {
            lab,
            stepper: lab.stepper()?,
            split: UnstableSplit::from_spectral(&lab.op, sd)?,
            lambda_max: sd.eigenvalues[0].re,
            escape: 10.0 * lab.exit_radius()?,
        })
    }

    /// Unstable coordinates of the deviation from the nearest translate at
    /// time `t` (raw coordinates of `v` once the solution has escaped).
    fn residual(&self, v0: &DVector<f64>, t: f64) -> Result<(DVector<f64>, bool)> {
        let bg = self.lab.background()?;
        let ubar = bg.flat();
        let steps = (t / self.stepper.dt).round() as usize;
        let check = (0.5 / self.stepper.dt).round().max(1.0) as usize;
        let mut v = v0.clone();
        for k in 1..=steps {
            v = match self.stepper.step_perturbation(&ubar, &v) {
                Ok(v) => v,
                Err(_) => return Ok((self.split.coordinates(&v), true)),
            };
            if k % check == 0 && v.amax() > self.escape {
                return Ok((self.split.coordinates(&v), true));
            }
        }
        let rs = ReducedShifted::new(&self.stepper, &self.lab.op, bg)?;
        match rs.initial_phase(&v) {
            Ok((_, w)) => Ok((self.split.coordinates(&w), false)),
            Err(_) => Ok((self.split.coordinates(&v), true)),
        }
    }

    fn newton(&self, w0: &DVector<f64>, c0: &DVector<f64>, tol: f64, horizon: f64, stages: usize) -> Result<(DVector<f64>, f64, usize)> {
        let p = self.split.p();
        let mut c = c0.clone();
        let mut iters = 0;
        let mut res = f64::INFINITY;
        let scale = self.lab.exit_radius()?;
        for stage in 1..=stages {
            let t = horizon * stage as f64 / stages as f64;
            let last = stage == stages;
            let f = |c: &DVector<f64>| self.residual(&(w0 + &self.split.right * c), t);
            let (mut fc, mut esc) = f(&c)?;
            for _ in 0..40 {
                res = fc.norm();
                if !esc && res <= tol {
                    break;
                }
                iters += 1;
                let delta = (1e-4 * scale * (-self.lambda_max * t).exp()).max(1e-300);
                let mut jac = DMatrix::zeros(p, p);
                for j in 0..p {
                    let mut cj = c.clone();
                    cj[j] += delta;
                    let (fj, _) = f(&cj)?;
                    jac.set_column(j, &((fj - &fc) / delta));
                }
                let step = jac.lu().solve(&(-&fc)).ok_or_else(|| Error::ShootingDiverged("singular shooting Jacobian".into()))?;
                let mut lam = 1.0;
                let mut accepted = false;
                for _ in 0..40 {
                    let trial = &c + &step * lam;
                    let (ft, et) = f(&trial)?;
                    if !et && (esc || ft.norm() < fc.norm()) {
                        c = trial;
                        fc = ft;
                        esc = et;
                        accepted = true;
                        break;
                    }
                    lam *= 0.5;
                }
                if !accepted {
                    break;
                }
                if step.norm() * lam <= 4.0 * f64::EPSILON * c.norm().max(1e-300) {
                    break;
                }
            }
            res = fc.norm();
            if esc || (last && res > tol) {
                return Err(Error::ShootingDiverged(format!("horizon {t}: residual {res:e}")));
            }
        }
        Ok((c, res, iters))
    }
}

/// Data `v0* = w0 + z0` on the center-stable manifold: Newton iteration on
/// the unstable coordinates of `z0 = R c`, with continuation in the
/// horizon, so that the deviation from the nearest translate has no unstable
/// part at the horizon. A second Newton run from another start guards
/// against several roots. When the Lyapunov-Perron map contracts for the
/// truncated nonlinearity, its `Phi(w0)` is reported for comparison.
pub fn prepare_on_manifold(lab: &Lab, sd: &SpectralDecomposition, w0: &DVector<f64>, spec: &ShootSpec) -> Result<ShootingResult> {
    let sh = Shooter::new(lab, sd)?;
    let p = sh.split.p();
    let w0 = sh.split.pi_cs(w0);
    let w_norm = lab.op.norm(&w0);
    if w_norm == 0.0 {
        let z = DVector::zeros(w0.len());
        return Ok(ShootingResult {
            w0_norm: 0.0,
            z0_norm: 0.0,
            coords: vec![0.0; p],
            residual: 0.0,
            newton_iterations: 0,
            lp_agreement: Some(0.0),
            v0: z.clone(),
            z0: z,
        });
    }
    let (c, residual, iters) = sh.newton(&w0, &DVector::zeros(p), spec.tol_exit, spec.horizon, spec.stages)?;
    let lp = lp_graph_value(lab, sd, &w0).ok();
    // second start: the graph value, or a displaced guess
    let start = match &lp {
        Some(z) => sh.split.coordinates(z),
        None => &c + DVector::from_element(p, 0.5 * w_norm * w_norm),
    };
    if let Ok((c2, _, _)) = sh.newton(&w0, &start, spec.tol_exit, spec.horizon, spec.stages) {
        let gap = (&c2 - &c).norm();
        if gap > 1e-6 * w_norm.max(c.norm()) && gap > 1e3 * spec.tol_exit * (-sh.lambda_max * spec.horizon).exp() {
            return Err(Error::AmbiguousRoot(format!("roots {c} and {c2} for |w0| = {w_norm:e}")));
        }
    }
    let z0 = &sh.split.right * &c;
    let lp_agreement = lp.map(|z| lab.op.norm(&(&z - &z0)));
    Ok(ShootingResult {
        w0_norm: w_norm,
        z0_norm: lab.op.norm(&z0),
        coords: c.iter().copied().collect(),
        residual,
        newton_iterations: iters,
        lp_agreement,
        v0: &w0 + &z0,
        z0,
    })
}

/// `Phi(w0)` from the Lyapunov-Perron iteration on the operator without its
/// translation projector, with `N^eps` truncated in `H^2` at
/// `eps = 4 |w0|_{H^2}`.
pub fn lp_graph_value(lab: &Lab, sd: &SpectralDecomposition, w0: &DVector<f64>) -> Result<DVector<f64>> {
    let bg = lab.background()?;
    let pde = lab.pde.clone().ok_or_else(|| Error::Config("no nonlinear model".into()))?;
    let free = LinearizedOperator::from_banded(lab.grid, lab.op.n, lab.op.banded().clone())?;
    let pd = PdeDichotomy::new(&free, sd, 0.9)?;
    let grid = lab.grid;
    let n = lab.op.n;
    let ubar = bg.flat();
    let eps = 4.0 * sobolev_norm(&grid, n, &pad(n, w0), 2);
    let norm: csm::NormFn = Arc::new(move |v: &DVector<f64>| sobolev_norm(&grid, n, &pad(n, v), 2));
    let nl: csm::VecMap = Arc::new(move |v: &DVector<f64>| interior(n, &pde.explicit_remainder(&grid, &ubar, &pad(n, v))));
    let tn = TruncatedNonlinearity::with_norm(lab.op.dim(), eps, nl, norm);
    let sol = csm::pde_csm_solve(&pd, &tn, w0, LpOptions { horizon: 40.0, dt: 0.02, tol: 1e-12, ..LpOptions::default() })?;
    Ok(sol.phi)
}

#[derive(Debug, Clone, Serialize)]
pub struct TangencyReport {
    pub amplitudes: Vec<f64>,
    pub w0_norms: Vec<f64>,
    pub z0_norms: Vec<f64>,
    pub slope: f64,
    /// Fitted `C` in `|z0| <= C |w0|^2`.
    pub c_fit: f64,
    pub lp_agreement: Vec<Option<f64>>,
    pub pass: bool,
}

fn cs_seed(lab: &Lab, sd: &SpectralDecomposition, spec: &ShootSpec, amp: f64) -> Result<DVector<f64>> {
    lab.perturbation(
        &PerturbationSpec { shape: Shape::CsGaussian { center: spec.cs_center, width: spec.cs_width }, amplitude: amp, seed: 0 },
        Some(sd),
    )
}

/// Regression of `log |z0|` on `log |w0|` over the configured amplitudes.
pub fn tangency_audit(lab: &Lab, sd: &SpectralDecomposition, spec: &ShootSpec) -> Result<TangencyReport> {
    let mut w = Vec::new();
    let mut z = Vec::new();
    let mut lp = Vec::new();
    for &a in &spec.amplitudes {
        let r = prepare_on_manifold(lab, sd, &cs_seed(lab, sd, spec, a)?, spec)?;
        w.push(r.w0_norm);
        z.push(r.z0_norm);
        lp.push(r.lp_agreement);
    }
    let fit = loglog_fit(&w, &z).ok_or_else(|| Error::Degenerate("tangency fit needs nonzero z0".into()))?;
    let c_fit = w.iter().zip(&z).map(|(a, b)| b / (a * a)).fold(0.0, f64::max);
    Ok(TangencyReport { amplitudes: spec.amplitudes.clone(), w0_norms: w, z0_norms: z, slope: fit.slope, c_fit, lp_agreement: lp, pass: fit.slope >= 1.9 })
}

// -------------------------------------------------------------- exit time

/// Translate distance along a full nonlinear run from `ubar + v0`.
pub struct DistanceRun {
    pub times: Vec<f64>,
    pub distance: Vec<f64>,
    pub alpha: Vec<f64>,
    /// First time the distance exceeds the radius (linearly interpolated).
    pub exit_time: Option<f64>,
}

/// Evolves `ubar + v0` up to `t_max` (or until the translate distance first
/// exceeds `radius`), sampling the distance every `sample_dt`. The minimizing
/// shift is warm-started from the previous sample, initially from the phase
/// condition.
pub fn distance_run(lab: &Lab, v0: &DVector<f64>, radius: f64, t_max: f64, sample_dt: f64) -> Result<DistanceRun> {
    let bg = lab.background()?;
    let st = lab.stepper()?;
    let n = bg.dim();
    let ubar = bg.flat();
    let rs = ReducedShifted::new(&st, &lab.op, bg)?;
    let mut alpha = rs.initial_phase(v0).map(|(a, _)| a).unwrap_or(0.0);
    let stride = (sample_dt / st.dt).round().max(1.0) as usize;
    let steps = (t_max / st.dt).round() as usize;
    let mut v = v0.clone();
    let mut run = DistanceRun { times: Vec::new(), distance: Vec::new(), alpha: Vec::new(), exit_time: None };
    let sample = |v: &DVector<f64>, guess: f64| {
        let u: Vec<f64> = ubar.iter().zip(pad(n, v)).map(|(a, b)| a + b).collect();
        translate_distance(bg, &u, guess, 1.0)
    };
    let (a, d) = sample(&v, alpha);
    alpha = a;
    run.times.push(0.0);
    run.distance.push(d);
    run.alpha.push(a);
    if d > radius {
        run.exit_time = Some(0.0);
        return Ok(run);
    }
    for k in 1..=steps {
        let t = k as f64 * st.dt;
        v = match st.step_perturbation(&ubar, &v) {
            Ok(v) => v,
            Err(_) => {
                // blow-up after leaving the neighbourhood between two samples
                run.exit_time = Some(t);
                return Ok(run);
            }
        };
        if k % stride == 0 || k == steps {
            let (a, d) = sample(&v, alpha);
            alpha = a;
            let (t0, d0) = (*run.times.last().expect("nonempty"), *run.distance.last().expect("nonempty"));
            run.times.push(t);
            run.distance.push(d);
            run.alpha.push(a);
            if d > radius {
                run.exit_time = Some(t0 + (radius - d0) / (d - d0) * (t - t0));
                return Ok(run);
            }
        }
    }
    Ok(run)
}

#[derive(Debug, Clone, Serialize)]
pub struct ExitReport {
    pub radius: f64,
    pub lambda_max: f64,
    pub eps: Vec<f64>,
    pub exit_times: Vec<f64>,
    pub slope: f64,
    pub target_slope: f64,
    pub relative_error: f64,
    /// Same amplitudes along the translation mode, prepared on the manifold:
    /// no exit expected within the shooting horizon.
    pub contrast_exit_times: Vec<Option<f64>>,
    pub pass: bool,
}

/// Seeds `ubar + eps phi_max` for each `eps`, records the exit time from the
/// radius-`R` neighbourhood of the translates and fits it against
/// `log(1/eps)`; the slope should be `1/lambda_max`. An empty amplitude
/// (`eps = 0`) never leaves and yields `NoExit`.
pub fn run_exit_time(lab: &Lab, sd: &SpectralDecomposition, eps_list: &[f64], spec: &ExitSpec, shoot: &ShootSpec) -> Result<ExitReport> {
    if sd.p == 0 {
        return Err(Error::Config("exit-time experiment needs an unstable mode".into()));
    }
    let radius = lab.exit_radius()?;
    let lambda_max = sd.eigenvalues[0].re;
    let mut times = Vec::new();
    for &e in eps_list {
        let v0 = lab.perturbation(&PerturbationSpec { shape: Shape::UnstableMode, amplitude: e, seed: 0 }, Some(sd))?;
        let run = distance_run(lab, &v0, radius, spec.t_max, spec.sample_dt)?;
        times.push(run.exit_time.ok_or(Error::NoExit(spec.t_max))?);
    }
    // contrast: the same amplitudes along the translation mode, lifted onto
    // the center-stable manifold; `ubar + eps ubar_x` alone carries an
    // O(eps^2) unstable component and leaves on the slower scale log(R/eps^2)
    let mut contrast = Vec::new();
    let t_contrast = spec.t_max.min(shoot.horizon);
    for &e in eps_list {
        let w0 = lab.perturbation(&PerturbationSpec { shape: Shape::TranslationMode, amplitude: e, seed: 0 }, Some(sd))?;
        let v0 = prepare_on_manifold(lab, sd, &w0, shoot)?.v0;
        contrast.push(distance_run(lab, &v0, radius, t_contrast, spec.sample_dt)?.exit_time);
    }
    let logs: Vec<f64> = eps_list.iter().map(|e| (1.0 / e).ln()).collect();
    let slope = fit_line(&logs, &times).map(|f| f.slope).unwrap_or(f64::NAN);
    let target = 1.0 / lambda_max;
    let rel = (slope - target).abs() / target;
    Ok(ExitReport {
        radius,
        lambda_max,
        eps: eps_list.to_vec(),
        exit_times: times,
        slope,
        target_slope: target,
        relative_error: rel,
        pass: rel <= 0.15 && contrast.iter().all(|c| c.is_none()),
        contrast_exit_times: contrast,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionalReport {
    pub radius: f64,
    pub lambda_max: f64,
    pub shooting: ShootingResult,
    /// Largest translate distance of the prepared run over the stay window.
    pub prepared_max_distance: f64,
    pub stays: bool,
    pub kicked_exit_time: Option<f64>,
    /// `log(R/kick)/lambda_max + 2/lambda_max`.
    pub kicked_deadline: f64,
    pub kicked_exits: bool,
    pub pass: bool,
}

/// Manifold-prepared data stays near the translates; the same data plus a
/// small unstable kick leaves on the linear time scale.
pub fn conditional_stability(lab: &Lab, sd: &SpectralDecomposition, spec: &ShootSpec, amp: f64) -> Result<ConditionalReport> {
    let radius = lab.exit_radius()?;
    let lambda_max = sd.eigenvalues[0].re;
    let w0 = cs_seed(lab, sd, spec, amp)?;
    let shooting = prepare_on_manifold(lab, sd, &w0, spec)?;
    let stay = distance_run(lab, &shooting.v0, radius, spec.stay_time, 0.25)?;
    let prepared_max_distance = stay.distance.iter().copied().fold(0.0, f64::max);
    let kick = lab.perturbation(&PerturbationSpec { shape: Shape::UnstableMode, amplitude: spec.kick, seed: 0 }, Some(sd))?;
    let kicked = distance_run(lab, &(&shooting.v0 + kick), radius, spec.stay_time, 0.05)?;
    let kicked_deadline = (radius / spec.kick).ln() / lambda_max + 2.0 / lambda_max;
    let stays = stay.exit_time.is_none();
    let kicked_exits = kicked.exit_time.is_some_and(|t| t <= kicked_deadline);
    Ok(ConditionalReport {
        radius,
        lambda_max,
        shooting,
        prepared_max_distance,
        stays,
        kicked_exit_time: kicked.exit_time,
        kicked_deadline,
        kicked_exits,
        pass: stays && kicked_exits,
    })
}

// ------------------------------------------------------------------ rates

#[derive(Debug, Clone, Serialize)]
pub struct ChannelFit {
    pub name: String,
    pub exponent: f64,
    pub stderr: f64,
    pub ci95: [f64; 2],
    /// Residual rms of the log-log fit.
    pub rms: f64,
    pub samples: usize,
    pub target: f64,
    pub tol: f64,
    pub regime_ok: bool,
    pub pass: bool,
}

/// Least-squares exponent of `values ~ t^a` over `[lo, hi]`; needs 20
/// positive samples.
pub fn fit_channel(name: &str, times: &[f64], values: &[f64], window: [f64; 2], target: f64, tol: f64) -> ChannelFit {
    let (t, v): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(t, v)| **t >= window[0] && **t <= window[1] && v.is_finite() && **v > 0.0)
        .map(|(a, b)| (*a, b.abs()))
        .unzip();
    let fit = if t.len() >= 20 { loglog_fit(&t, &v) } else { None };
    match fit {
        Some(f) => {
            let regime_ok = f.rms <= 0.25;
            ChannelFit {
                name: name.into(),
                exponent: f.slope,
                stderr: f.slope_stderr,
                ci95: [f.slope - 1.96 * f.slope_stderr, f.slope + 1.96 * f.slope_stderr],
                rms: f.rms,
                samples: f.samples,
                target,
                tol,
                regime_ok,
                pass: regime_ok && (f.slope - target).abs() <= tol,
            }
        }
        None => ChannelFit {
            name: name.into(),
            exponent: f64::NAN,
            stderr: f64::NAN,
            ci95: [f64::NAN; 2],
            rms: f64::NAN,
            samples: t.len(),
            target,
            tol,
            regime_ok: false,
            pass: false,
        },
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub model: String,
    pub window: [f64; 2],
    pub channels: Vec<ChannelFit>,
    /// All channels vanish identically.
    pub trivial: bool,
    pub alpha_final: f64,
    /// Spread of `alpha` over the second half of the window.
    pub alpha_spread: f64,
    pub alpha_converged: bool,
    /// Phase selected at `t = 0`.
    pub alpha_initial: f64,
    /// `alpha_initial` plus the Green-kernel shift accumulated over the
    /// tracked part of the run (the formula measures from the `t = 0` frame).
    pub tracking_alpha_final: Option<f64>,
    pub tracking_t_end: Option<f64>,
    pub e0_h2: f64,
    pub e0_h4: f64,
    pub zeta_final: f64,
    pub zeta_over_e0: f64,
    pub zeta_monotone: bool,
    pub damping: Option<DampingReport>,
    pub damping_error: Option<String>,
    pub seconds: f64,
    pub pass: bool,
}

/// Running sup of `|v|_{H2}(1+s)^{1/4} + |v|_inf + |alpha_dot|(1+s)^{1/2}`.
pub fn zeta_channel(tr: &TrajectoryRecord) -> Vec<f64> {
    let mut out = Vec::with_capacity(tr.len());
    let mut z: f64 = 0.0;
    for k in 0..tr.len() {
        let s = tr.times[k];
        z = z.max(tr.h2[k] * (1.0 + s).powf(0.25) + tr.linf[k] + tr.alpha_dot[k].abs() * (1.0 + s).sqrt());
        out.push(z);
    }
    out
}

/// Evolves the shifted reduced system from the configured perturbation and
/// fits the decay exponents of `|v|_{L2}`, `|v|_inf`, `|v|_{H2}` and
/// `alpha_dot` over the rate window. The Green-kernel shift is computed on
/// the first `track.t_end` time units from the recorded `v` and `alpha_dot`.
pub fn run_rates(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<(RateReport, TrajectoryRecord)> {
    let start = std::time::Instant::now();
    let m = cfg.model.flux().ok_or_else(|| Error::Config("decay rates are defined for conservation laws".into()))?;
    let e = EndpointData::compute(&m)?;
    let min_speed = e.a_minus.iter().chain(&e.a_plus).map(|a| a.abs()).fold(f64::INFINITY, f64::min);
    if cfg.rate_window[0] < 10.0 / min_speed {
        return Err(Error::Config(format!("rate window starts before 10/min|a| = {}", 10.0 / min_speed)));
    }
    let lab = Lab::new(cfg)?;
    let bg = lab.background()?;
    let st = lab.stepper()?;
    let rs = ReducedShifted::new(&st, &lab.op, bg)?;
    let v0 = lab.perturbation(&cfg.perturbation, None)?;
    let n = bg.dim();
    let full0 = pad(n, &v0);
    let e0_h2 = l1_norm(&lab.grid, &full0) + sobolev_norm(&lab.grid, n, &full0, 2);
    let e0_h4 = l1_norm(&lab.grid, &full0) + sobolev_norm(&lab.grid, n, &full0, 4);

    // the record keeps norms only; snapshots for tracking are taken on the side
    let at_rest = v0.iter().all(|x| *x == 0.0);
    let (alpha0, mut v) = if at_rest { (0.0, v0.clone()) } else { rs.initial_phase(&v0)? };
    let stride = cfg.record_stride();
    let gap_steps = (cfg.track.gap / st.dt).round().max(1.0) as usize;
    let track_end = cfg.track.t_end.min(cfg.t_end);
    let steps = (cfg.t_end / st.dt).round() as usize;
    let mut tr = TrajectoryRecord::new(crate::evolve::TrajectoryMeta {
        model: cfg.model.name(),
        x_min: lab.grid.x_min,
        x_max: lab.grid.x_max,
        m: lab.grid.m,
        scheme: "ars222-reduced-shifted".into(),
        dt: st.dt,
    });
    let mut alpha = alpha0;
    let mut ad = if at_rest { 0.0 } else { rs.alpha_dot(&v)? };
    tr.push(&lab.grid, n, 0.0, &v, alpha, ad);
    let mut snaps: Vec<(f64, DVector<f64>, f64)> = vec![(0.0, v.clone(), ad)];
    // zero data is the equilibrium itself: record it without stepping roundoff
    for k in 1..=steps {
        if !at_rest {
            v = rs.step(&v)?;
        }
        let ad_new = if at_rest { 0.0 } else { rs.alpha_dot(&v)? };
        alpha += 0.5 * st.dt * (ad + ad_new);
        ad = ad_new;
        let t = k as f64 * st.dt;
        if k % stride == 0 || k == steps {
            tr.push(&lab.grid, n, t, &v, alpha, ad);
        }
        if cfg.track.enabled && k % gap_steps == 0 && t <= track_end + 1e-9 {
            snaps.push((t, v.clone(), ad));
        }
    }

    let (tracking_alpha_final, tracking_t_end) = if cfg.track.enabled && snaps.len() >= 2 {
        let k = KernelE::from_model(&m, &e)?;
        let res = NonlinearResidual::new(m.clone(), &bg.flat());
        let forcing: Vec<(f64, Vec<f64>)> = snaps
            .iter()
            .map(|(t, v, ad)| {
                let full = pad(n, v);
                let nv = res.eval(&full);
                (*t, nv.iter().zip(&full).map(|(a, b)| a + ad * b).collect())
            })
            .collect();
        let ch = compute_alpha(&k, &lab.grid, &pad(n, &snaps[0].1), &forcing, 1.0)?;
        (ch.alpha.last().map(|a| alpha0 + a), ch.times.last().copied())
    } else {
        (None, None)
    };

    let w = cfg.rate_window;
    let channels = vec![
        fit_channel("l2", &tr.times, &tr.l2, w, -0.25, 0.08),
        fit_channel("linf", &tr.times, &tr.linf, w, -0.5, 0.1),
        fit_channel("h2", &tr.times, &tr.h2, w, -0.25, 0.1),
        fit_channel("alpha_dot", &tr.times, &tr.alpha_dot.iter().map(|a| a.abs()).collect::<Vec<_>>(), w, -0.5, 0.1),
    ];
    let trivial = tr.l2.iter().all(|x| *x == 0.0) && tr.alpha_dot.iter().all(|x| *x == 0.0);
    let mid = 0.5 * (w[0] + w[1]);
    let late: Vec<f64> = tr.times.iter().zip(&tr.alpha).filter(|(t, _)| **t >= mid && **t <= w[1]).map(|(_, a)| *a).collect();
    let alpha_spread = late.iter().copied().fold(f64::NEG_INFINITY, f64::max) - late.iter().copied().fold(f64::INFINITY, f64::min);
    let alpha_max = tr.alpha.iter().map(|a| a.abs()).fold(0.0, f64::max);
    let alpha_converged = late.is_empty() || alpha_spread <= 1e-2 * alpha_max + 1e-12;
    let zeta = zeta_channel(&tr);
    let zeta_final = *zeta.last().unwrap_or(&0.0);
    let (damping, damping_error) = match damping_monitor(&tr, DampingOptions::default()) {
        Ok(d) => (Some(d), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let pass = trivial || (channels.iter().all(|c| c.pass) && alpha_converged);
    if let Some(dir) = out {
        tr.write_csv(&dir.join("trajectory.csv"))?;
    }
    let report = RateReport {
        model: cfg.model.name(),
        window: w,
        channels,
        trivial,
        alpha_final: *tr.alpha.last().unwrap_or(&0.0),
        alpha_initial: alpha0,
        alpha_spread: if late.is_empty() { 0.0 } else { alpha_spread },
        alpha_converged,
        tracking_alpha_final,
        tracking_t_end,
        e0_h2,
        e0_h4,
        zeta_final,
        zeta_over_e0: if e0_h2 > 0.0 { zeta_final / e0_h2 } else { 0.0 },
        zeta_monotone: zeta.windows(2).all(|p| p[1] >= p[0]),
        damping,
        damping_error,
        seconds: start.elapsed().as_secs_f64(),
        pass,
    };
    Ok((report, tr))
}

// ----------------------------------------------------------------- evolve

#[derive(Debug, Clone, Serialize)]
pub struct EvolveReport {
    pub model: String,
    pub scheme: String,
    pub samples: usize,
    pub l2_initial: f64,
    pub l2_final: f64,
    pub alpha_final: f64,
    pub damping: Option<DampingReport>,
    pub damping_error: Option<String>,
    pub prepared: Option<ShootingResult>,
    pub pass: bool,
}

pub fn run_evolve(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<EvolveReport> {
    let lab = Lab::new(cfg)?;
    let bg = lab.background()?;
    let st = lab.stepper()?;
    let sd = if lab.cfg.manifold != ManifoldMode::None || matches!(cfg.perturbation.shape, Shape::UnstableMode | Shape::CsGaussian { .. }) {
        Some(lab.spectrum()?)
    } else {
        None
    };
    let mut v0 = lab.perturbation(&cfg.perturbation, sd.as_ref())?;
    let mut prepared = None;
    match (cfg.manifold, &sd) {
        (ManifoldMode::ProjectCs, Some(sd)) if sd.p > 0 => v0 = UnstableSplit::from_spectral(&lab.op, sd)?.pi_cs(&v0),
        (ManifoldMode::Shoot, Some(sd)) if sd.p > 0 => {
            let r = prepare_on_manifold(&lab, sd, &v0, &cfg.shoot)?;
            v0 = r.v0.clone();
            prepared = Some(r);
        }
        _ => {}
    }
    let (tr, _) = if lab.op.phi.is_some() {
        let rs = ReducedShifted::new(&st, &lab.op, bg)?;
        evolve_reduced_shifted(&rs, &v0, cfg.t_end, cfg.record_stride())?
    } else {
        evolve_perturbation(&st, bg, &v0, cfg.t_end, cfg.record_stride())?
    };
    let (damping, damping_error) = match damping_monitor(&tr, DampingOptions::default()) {
        Ok(d) => (Some(d), None),
        Err(e) => (None, Some(e.to_string())),
    };
    if let Some(dir) = out {
        tr.write_csv(&dir.join("trajectory.csv"))?;
    }
    let finite = tr.l2.iter().all(|x| x.is_finite());
    Ok(EvolveReport {
        model: cfg.model.name(),
        scheme: tr.meta.scheme.clone(),
        samples: tr.len(),
        l2_initial: tr.l2[0],
        l2_final: *tr.l2.last().expect("nonempty"),
        alpha_final: *tr.alpha.last().expect("nonempty"),
        pass: finite && damping.is_some(),
        damping,
        damping_error,
        prepared,
    })
}

// ------------------------------------------------------------------ track

#[derive(Debug, Clone, Serialize)]
pub struct TrackReport {
    pub model: String,
    pub alpha_final: f64,
    pub picard_residual: f64,
    pub picard_iterations: usize,
    /// Largest relative mismatch between `alpha_dot` and the centered
    /// difference of `alpha` on `[1, T]`.
    pub self_consistency: f64,
    pub audit: KernelAudit,
    pub audit_pass: bool,
    pub calibration: String,
    pub pass: bool,
}

/// Log-spaced times on `[lo, hi]`.
pub fn log_times(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| lo * (hi / lo).powf(i as f64 / (count.max(2) - 1) as f64)).collect()
}

/// Largest `|alpha_dot - D alpha| / max|alpha_dot|` over samples with
/// `t >= 1`, `D` the five-point centered difference on the (uniform) grid.
pub fn alpha_self_consistency(times: &[f64], alpha: &[f64], alpha_dot: &[f64]) -> f64 {
    let scale = alpha_dot.iter().zip(times).filter(|(_, t)| **t >= 1.0).map(|(a, _)| a.abs()).fold(0.0, f64::max);
    if scale == 0.0 || times.len() < 5 {
        return 0.0;
    }
    (2..times.len() - 2)
        .filter(|&j| times[j] >= 1.0)
        .map(|j| {
            let dt = times[j + 1] - times[j];
            let d = (alpha[j - 2] - 8.0 * alpha[j - 1] + 8.0 * alpha[j + 1] - alpha[j + 2]) / (12.0 * dt);
            (d - alpha_dot[j]).abs() / scale
        })
        .fold(0.0, f64::max)
}

pub fn run_track(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<TrackReport> {
    let m = cfg.model.flux().ok_or_else(|| Error::Config("tracking is defined for conservation laws".into()))?;
    let lab = Lab::new(cfg)?;
    let bg = lab.background()?;
    let st = lab.stepper()?;
    let k = KernelE::for_scalar_model(&m).or_else(|_| KernelE::from_model(&m, &EndpointData::compute(&m)?))?;
    let w0 = lab.perturbation(&cfg.perturbation, None)?;
    let stride = (cfg.track.gap / st.dt).round().max(1.0) as usize;
    let t_end = cfg.track.t_end.min(cfg.t_end);
    let run = track_shock(&k, &st, bg, &m, &w0, t_end, stride, cfg.track.picard_tol)?;
    let c = &run.channels;
    let self_consistency = alpha_self_consistency(&c.times, &c.alpha, &c.alpha_dot);
    let [lo, hi] = cfg.track.audit_window;
    let audit = kernel_audit(&k, &log_times(lo, hi, cfg.track.audit_samples))?;
    let audit_pass = audit.p_exponent_fits.iter().filter(|f| f.channel != Channel::Ety).all(|f| (f.slope - f.expected).abs() <= 0.05);
    if let Some(dir) = out {
        let mut tr = TrajectoryRecord::new(crate::evolve::TrajectoryMeta {
            model: cfg.model.name(),
            x_min: lab.grid.x_min,
            x_max: lab.grid.x_max,
            m: lab.grid.m,
            scheme: "ars222-perturbation+green-kernel-tracking".into(),
            dt: st.dt,
        });
        for (j, (t, v)) in run.snapshots.iter().enumerate() {
            tr.push(&lab.grid, bg.dim(), *t, &interior(bg.dim(), v), c.alpha[j], c.alpha_dot[j]);
        }
        tr.write_csv(&dir.join("trajectory.csv"))?;
        audit.write_json(&dir.join("kernel_audit.json"))?;
    }
    Ok(TrackReport {
        model: cfg.model.name(),
        alpha_final: *c.alpha.last().unwrap_or(&0.0),
        picard_residual: run.picard_residual,
        picard_iterations: run.picard_iterations,
        self_consistency,
        calibration: audit.calibration.clone(),
        pass: run.picard_residual <= cfg.track.picard_tol && self_consistency <= 1e-3 && audit_pass,
        audit,
        audit_pass,
    })
}

// ------------------------------------------------------------ green probe

#[derive(Debug, Clone, Serialize)]
pub struct GreenSample {
    pub t: f64,
    pub g_sup: f64,
    pub g_mass: f64,
    pub e_mass: f64,
    pub gu_sup: f64,
    pub remainder_sup: f64,
    /// `sup|G - K(x - y0, t)| / sup K` for the free heat kernel `K`.
    pub heat_deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GreenReport {
    pub y0: f64,
    pub samples: Vec<GreenSample>,
    pub c_fit: f64,
    pub m_fit: f64,
    pub eta_fit: f64,
    pub c_max: f64,
    pub margin: f64,
    pub feasible: bool,
}

/// The Gaussian-sum template dominating the Green remainder, for a source at
/// `y` and characteristic speeds `a_-`, `a_+`.
pub fn green_template(x: f64, t: f64, y: f64, a_minus: &[f64], a_plus: &[f64], m: f64, eta: f64) -> f64 {
    // for y > 0 mirror the picture: x -> -x, y -> -y, a_- <-> -a_+
    let (x, y, am, ap): (f64, f64, Vec<f64>, Vec<f64>) = if y <= 0.0 {
        (x, y, a_minus.to_vec(), a_plus.to_vec())
    } else {
        (-x, -y, a_plus.iter().map(|a| -a).collect(), a_minus.iter().map(|a| -a).collect())
    };
    let gauss = |c: f64| (-(x - c).powi(2) / (m * t)).exp() / t.sqrt();
    let xp = x.max(0.0);
    let xm = (-x).max(0.0);
    let mut s = (-eta * ((x - y).abs() + t)).exp();
    for &a in &am {
        s += gauss(y + a * t) * (-eta * xp).exp();
    }
    for &ak in am.iter().filter(|a| **a > 0.0) {
        if ak * t < y.abs() {
            continue;
        }
        let tau = t - (y / ak).abs();
        for &aj in am.iter().filter(|a| **a < 0.0) {
            s += gauss(aj * tau) * (-eta * xp).exp();
        }
        for &aj in ap.iter().filter(|a| **a > 0.0) {
            s += gauss(aj * tau) * (-eta * xm).exp();
        }
    }
    s
}

/// Samples `G(., t; y0) = e^{Lt} delta_{y0}`, removes the unstable part and
/// the excited translation part `E`, and searches `(M, eta)` for the
/// smallest `C` with `|G~| <= C template`. For conservation laws `E` is
/// `ubar_x(x) e(y0, t)`; for self-adjoint semilinear problems it is the
/// projection on the translation mode.
pub fn green_probe(lab: &Lab, sd: Option<&SpectralDecomposition>, spec: &GreenSpec) -> Result<GreenReport> {
    let grid = lab.grid;
    let n = lab.op.n;
    let h = grid.h();
    let j0 = grid.nearest(spec.y0);
    if j0 == 0 || j0 >= grid.m - 1 {
        return Err(Error::DomainError(format!("y0 = {} is not an interior node", spec.y0)));
    }
    let y0 = grid.x(j0);
    let flux = lab.cfg.model.flux();
    let (a_minus, a_plus, kernel) = match &flux {
        Some(m) => {
            let e = EndpointData::compute(m)?;
            let k = KernelE::from_model(m, &e)?;
            (e.a_minus.as_slice().to_vec(), e.a_plus.as_slice().to_vec(), Some(k))
        }
        None => (vec![0.0; n], vec![0.0; n], None),
    };
    let mut times = spec.times.clone();
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    let dim = lab.op.dim();
    let mut columns: Vec<DVector<f64>> = (0..n)
        .map(|c| {
            let mut d = DVector::zeros(dim);
            d[n * (j0 - 1) + c] = 1.0 / h;
            d
        })
        .collect();
    let mut t_prev = 0.0;
    let mut samples = Vec::new();
    // (t, x index, |G~|) triples for the fit
    let mut remainder: Vec<(f64, Vec<f64>)> = Vec::new();
    for &t in &times {
        for col in columns.iter_mut() {
            *col = lab.op.semigroup_apply(col, t - t_prev)?.value;
        }
        t_prev = t;
        let mut rem = vec![0.0f64; grid.m - 2];
        let mut g_sup: f64 = 0.0;
        let mut g_mass = 0.0;
        let mut e_mass = 0.0;
        let mut gu_sup: f64 = 0.0;
        for (c, g) in columns.iter().enumerate() {
            let gu = match sd {
                Some(sd) if sd.p > 0 => sd.unstable_green(t, n * (j0 - 1) + c),
                _ => DVector::zeros(dim),
            };
            let e_part: DVector<f64> = match (&kernel, &lab.op.phi_sampled, &lab.op.phi) {
                (Some(k), Some(ux), _) => ux * k.eval(y0, t, Channel::E)?[c],
                (None, _, Some(phi)) => phi * (phi[n * (j0 - 1) + c] / lab.op.pi2_coeff),
                _ => DVector::zeros(dim),
            };
            let tilde = g - &gu - &e_part;
            for i in 0..grid.m - 2 {
                let val = (0..n).map(|cc| tilde[n * i + cc].powi(2)).sum::<f64>().sqrt();
                rem[i] = rem[i].max(val);
            }
            g_sup = g_sup.max(g.amax());
            gu_sup = gu_sup.max(gu.amax());
            g_mass += h * g.sum();
            e_mass += h * e_part.sum();
        }
        let heat_sup = heat_kernel(0.0, t);
        let heat_deviation = (0..grid.m - 2)
            .map(|i| (columns[0][n * i] - heat_kernel(grid.x(i + 1) - y0, t)).abs())
            .fold(0.0, f64::max)
            / heat_sup;
        samples.push(GreenSample {
            t,
            g_sup,
            g_mass,
            e_mass,
            gu_sup,
            remainder_sup: rem.iter().copied().fold(0.0, f64::max),
            heat_deviation,
        });
        remainder.push((t, rem));
    }
    let floor = 1e-9 * samples.iter().map(|s| s.g_sup).fold(0.0, f64::max);
    let mut best = (f64::INFINITY, f64::NAN, f64::NAN);
    let ms: Vec<f64> = (1..=40).map(|k| 0.5 * k as f64).filter(|m| *m <= spec.m_max).collect();
    for &m in &ms {
        for &eta in &[0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0] {
            let mut c: f64 = 0.0;
            for (t, rem) in &remainder {
                for (i, r) in rem.iter().enumerate() {
                    let excess = r - floor;
                    if excess > 0.0 {
                        let tmpl = green_template(grid.x(i + 1), *t, y0, &a_minus, &a_plus, m, eta);
                        c = c.max(if tmpl > 0.0 { excess / tmpl } else { f64::INFINITY });
                    }
                }
            }
            if c < best.0 {
                best = (c, m, eta);
            }
        }
    }
    let feasible = best.0 <= spec.c_max;
    Ok(GreenReport {
        y0,
        samples,
        c_fit: best.0,
        m_fit: best.1,
        eta_fit: best.2,
        c_max: spec.c_max,
        margin: if best.0 > 0.0 { spec.c_max / best.0 } else { f64::INFINITY },
        feasible,
    })
}

// -------------------------------------------------------------------- cli

#[derive(Debug, Parser)]
#[command(name = "shocklab", about = "Viscous shock and front stability experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for the standing wave and write it as CSV.
    Profile(Common),
    /// Unstable eigenpairs, refinement check, axis scan and matrix dump.
    Spectrum(Common),
    /// Center-stable manifold: saddle graph or shooting preparation.
    Manifold(Common),
    /// Nonlinear evolution with norms and the damping monitor.
    Evolve(Common),
    /// Green-kernel shock tracking and kernel audit.
    Track(Common),
    /// Decay-rate fits.
    Rates(Common),
    /// Exit times from the neighbourhood of the translates.
    ExitTime(Common),
    /// Green-function decomposition probe.
    GreenProbe(Common),
}

fn write_report<T: Serialize>(dir: &Path, name: &str, report: &T) -> Result<()> {
    std::fs::write(dir.join(name), serde_json::to_string_pretty(report)?)?;
    Ok(())
}

fn dispatch(cmd: &Command) -> Result<bool> {
    let common = match cmd {
        Command::Profile(c)
        | Command::Spectrum(c)
        | Command::Manifold(c)
        | Command::Evolve(c)
        | Command::Track(c)
        | Command::Rates(c)
        | Command::ExitTime(c)
        | Command::GreenProbe(c) => c,
    };
    let cfg = ExperimentConfig::load(&common.config)?;
    let dir = common.out.clone().unwrap_or_else(|| cfg.out_dir());
    std::fs::create_dir_all(&dir)?;
    let out = Some(dir.as_path());
    let pass = match cmd {
        Command::Profile(_) => {
            let r = run_profile(&cfg, out)?;
            write_report(&dir, "profile_report.json", &r)?;
            r.pass
        }
        Command::Spectrum(_) => {
            let r = run_spectrum(&cfg, out)?;
            write_report(&dir, "spectrum.json", &r)?;
            r.pass
        }
        Command::Manifold(_) => {
            if cfg.model == ModelSpec::QuadraticSaddle {
                let r = saddle_manifold(0.2, &[0.01, 0.02, 0.04, 0.08], out)?;
                write_report(&dir, "manifold.json", &r)?;
                r.pass
            } else {
                let lab = Lab::new(&cfg)?;
                let sd = lab.spectrum()?;
                let r = tangency_audit(&lab, &sd, &cfg.shoot)?;
                write_report(&dir, "manifold.json", &r)?;
                r.pass
            }
        }
        Command::Evolve(_) => {
            let r = run_evolve(&cfg, out)?;
            write_report(&dir, "evolve.json", &r)?;
            r.pass
        }
        Command::Track(_) => {
            let r = run_track(&cfg, out)?;
            write_report(&dir, "track.json", &r)?;
            r.pass
        }
        Command::Rates(_) => {
            let (r, _) = run_rates(&cfg, out)?;
            write_report(&dir, "rates.json", &r)?;
            r.pass
        }
        Command::ExitTime(_) => {
            let lab = Lab::new(&cfg)?;
            let sd = lab.spectrum()?;
            let r = run_exit_time(&lab, &sd, &cfg.exit.eps, &cfg.exit, &cfg.shoot)?;
            write_report(&dir, "exit.json", &r)?;
            r.pass
        }
        Command::GreenProbe(_) => {
            let lab = Lab::new(&cfg)?;
            let sd = lab.spectrum()?;
            let r = green_probe(&lab, Some(&sd), &cfg.green)?;
            write_report(&dir, "green.json", &r)?;
            r.feasible
        }
    };
    Ok(pass)
}

/// Runs one subcommand. Exit code 0 when the run passes its checks, 2 when
/// a check fails and 1 on errors (including usage errors).
pub fn cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let parsed = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&parsed.cmd) {
        Ok(true) => {
            let _ = writeln!(std::io::stdout(), "pass");
            0
        }
        Ok(false) => {
            let _ = writeln!(std::io::stdout(), "check failed");
            2
        }
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            1
        }
    }
}
