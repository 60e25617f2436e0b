//! Nonlinear time integration: the full PDE, the perturbation equation about
//! a discrete background, the shifted reduced equations, and the damping
//! monitor.
//!
//! All integrators are ARS(2,2,2) IMEX: diffusion implicit, everything else
//! explicit. The scheme is stiffly accurate and second order.

use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;

use crate::banded::{Banded, BandedLu};
use crate::disc::{l1_norm, l2_norm, sobolev_norm, sup_norm, Pde};
use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::linop::LinearizedOperator;
use crate::model::FluxModel;
use crate::profile::Profile;

const ARS_GAMMA: f64 = 1.0 - std::f64::consts::FRAC_1_SQRT_2;
const ARS_DELTA: f64 = 1.0 - 1.0 / (2.0 * ARS_GAMMA);
/// Any state with a larger sup norm counts as blown up.
const OVERFLOW_GUARD: f64 = 1e8;

/// Interior unknowns padded with zero boundary values.
pub fn pad(n: usize, v: &DVector<f64>) -> Vec<f64> {
    let mut out = vec![0.0; v.len() + 2 * n];
    out[n..n + v.len()].copy_from_slice(v.as_slice());
    out
}

pub fn interior(n: usize, u: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(&u[n..u.len() - n])
}

/// Centered first difference with zero boundary values.
pub fn d0(grid: &Grid1D, n: usize, v: &DVector<f64>) -> DVector<f64> {
    let full = pad(n, v);
    let h = grid.h();
    DVector::from_fn(v.len(), |k, _| {
        let j = k + n;
        (full[j + n] - full[j - n]) / (2.0 * h)
    })
}

fn check_finite(v: &[f64], t: f64) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) && sup_norm(v) < OVERFLOW_GUARD {
        Ok(())
    } else {
        Err(Error::BlowUp(t))
    }
}

/// Factored `I - gamma dt D` for the interior Dirichlet Laplacian.
pub struct ImexStepper {
    pub pde: Pde,
    pub grid: Grid1D,
    pub dt: f64,
    n: usize,
    lu: BandedLu<f64>,
}

impl std::fmt::Debug for ImexStepper {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImexStepper").field("grid", &self.grid).field("dt", &self.dt).finish()
    }
}

impl ImexStepper {
    pub fn new(pde: Pde, grid: Grid1D, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::DomainError(format!("time step {dt}")));
        }
        let n = pde.dim();
        let dim = n * (grid.m - 2);
        let r = ARS_GAMMA * dt / (grid.h() * grid.h());
        let mut t = Vec::with_capacity(3 * dim);
        for k in 0..dim {
            t.push((k, k, 1.0 + 2.0 * r));
            if k >= n {
                t.push((k, k - n, -r));
            }
            if k + n < dim {
                t.push((k, k + n, -r));
            }
        }
        let lu = Banded::from_triplets(dim, &t).lu()?;
        Ok(Self { pde, grid, dt, n, lu })
    }

    pub fn dim(&self) -> usize {
        self.pde.dim()
    }

    /// Solves `(I - gamma dt D) U = rhs` on the interior; the boundary values
    /// of `out` are held fixed and its interior overwritten.
    fn implicit_solve(&self, rhs: &[f64], out: &mut [f64]) {
        let n = self.n;
        let m = self.grid.m;
        let r = ARS_GAMMA * self.dt / (self.grid.h() * self.grid.h());
        let mut b = rhs[n..n * (m - 1)].to_vec();
        for c in 0..n {
            b[c] += r * out[c];
            b[n * (m - 3) + c] += r * out[n * (m - 1) + c];
        }
        self.lu.solve_in_place(&mut b);
        out[n..n * (m - 1)].copy_from_slice(&b);
    }

    /// One ARS(2,2,2) step of `u_t = D u + F(u)` with Dirichlet values held.
    fn ars_step(&self, u: &[f64], explicit: &dyn Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
        let n = self.n;
        let dt = self.dt;
        let f0 = explicit(u);
        let rhs1: Vec<f64> = u.iter().zip(&f0).map(|(a, b)| a + ARS_GAMMA * dt * b).collect();
        let mut u1 = u.to_vec();
        self.implicit_solve(&rhs1, &mut u1);
        let f1 = explicit(&u1);
        let lap1 = crate::disc::laplacian(&self.grid, n, &u1);
        let rhs2: Vec<f64> = (0..u.len())
            .map(|k| u[k] + dt * ((1.0 - ARS_GAMMA) * lap1[k] + ARS_DELTA * f0[k] + (1.0 - ARS_DELTA) * f1[k]))
            .collect();
        let mut u2 = u.to_vec();
        self.implicit_solve(&rhs2, &mut u2);
        u2
    }

    /// One step of the full PDE on a full-grid state.
    pub fn step_pde(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.n * self.grid.m {
            return Err(Error::DimensionMismatch { expected: self.n * self.grid.m, got: u.len() });
        }
        let out = self.ars_step(u, &|w| self.pde.explicit_rhs(&self.grid, w));
        check_finite(&out, f64::NAN)?;
        Ok(out)
    }

    /// One step of `v_t = Lv + N(v)_x` about `ubar` (node-major, full grid),
    /// on interior unknowns.
    pub fn step_perturbation(&self, ubar: &[f64], v: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.n;
        let base = self.pde.explicit_rhs(&self.grid, ubar);
        let explicit = |w: &[f64]| -> Vec<f64> {
            let full: Vec<f64> = ubar.iter().zip(w).map(|(a, b)| a + b).collect();
            let f = self.pde.explicit_rhs(&self.grid, &full);
            f.iter().zip(&base).map(|(a, b)| a - b).collect()
        };
        let out = self.ars_step(&pad(n, v), &explicit);
        check_finite(&out, f64::NAN)?;
        Ok(interior(n, &out))
    }

    /// One step of `v_t = D v + E(v)` for a caller-supplied explicit part on
    /// interior unknowns.
    pub fn step_with(&self, v: &DVector<f64>, explicit: &dyn Fn(&DVector<f64>) -> Result<DVector<f64>>) -> Result<DVector<f64>> {
        let n = self.n;
        let err = std::cell::RefCell::new(None);
        let wrapped = |w: &[f64]| -> Vec<f64> {
            match explicit(&interior(n, w)) {
                Ok(e) => pad(n, &e),
                Err(e) => {
                    err.borrow_mut().get_or_insert(e);
                    vec![0.0; w.len()]
                }
            }
        };
        let out = self.ars_step(&pad(n, v), &wrapped);
        if let Some(e) = err.into_inner() {
            return Err(e);
        }
        check_finite(&out, f64::NAN)?;
        Ok(interior(n, &out))
    }
}

/// One ARS(2,2,2) step of `v_t = L v + g(v)` with all of `L` implicit.
pub struct LinearImplicitStepper<'a> {
    pub op: &'a LinearizedOperator,
    pub dt: f64,
    lu: BandedLu<f64>,
}

impl<'a> LinearImplicitStepper<'a> {
    pub fn new(op: &'a LinearizedOperator, dt: f64) -> Result<Self> {
        let lu = op.banded().scale_shift(-ARS_GAMMA * dt, 1.0).lu()?;
        Ok(Self { op, dt, lu })
    }

    pub fn step(&self, v: &DVector<f64>, g: &dyn Fn(&DVector<f64>) -> DVector<f64>) -> Result<DVector<f64>> {
        let dt = self.dt;
        let g0 = g(v);
        let mut u1 = (v + &g0 * (ARS_GAMMA * dt)).as_slice().to_vec();
        self.lu.solve_in_place(&mut u1);
        let u1 = DVector::from_vec(u1);
        let g1 = g(&u1);
        let rhs = v + self.op.apply(&u1) * ((1.0 - ARS_GAMMA) * dt) + g0 * (ARS_DELTA * dt) + g1 * ((1.0 - ARS_DELTA) * dt);
        let mut u2 = rhs.as_slice().to_vec();
        self.lu.solve_in_place(&mut u2);
        check_finite(&u2, f64::NAN)?;
        Ok(DVector::from_vec(u2))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryMeta {
    pub model: String,
    pub x_min: f64,
    pub x_max: f64,
    pub m: usize,
    pub scheme: String,
    pub dt: f64,
}

/// Time series of norms (and optional snapshots) of a perturbation.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryRecord {
    pub meta: TrajectoryMeta,
    pub times: Vec<f64>,
    pub l1: Vec<f64>,
    pub l2: Vec<f64>,
    pub linf: Vec<f64>,
    pub h2: Vec<f64>,
    pub h4: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_dot: Vec<f64>,
    #[serde(skip)]
    pub snapshots: Vec<(f64, DVector<f64>)>,
}

impl TrajectoryRecord {
    pub fn new(meta: TrajectoryMeta) -> Self {
        Self {
            meta,
            times: Vec::new(),
            l1: Vec::new(),
            l2: Vec::new(),
            linf: Vec::new(),
            h2: Vec::new(),
            h4: Vec::new(),
            alpha: Vec::new(),
            alpha_dot: Vec::new(),
            snapshots: Vec::new(),
        }
    }

    /// Appends norms of the interior perturbation `v`.
    pub fn push(&mut self, grid: &Grid1D, n: usize, t: f64, v: &DVector<f64>, alpha: f64, alpha_dot: f64) {
        let full = pad(n, v);
        self.times.push(t);
        self.l1.push(l1_norm(grid, &full));
        self.l2.push(l2_norm(grid, &full));
        self.linf.push(sup_norm(&full));
        self.h2.push(sobolev_norm(grid, n, &full, 2));
        self.h4.push(sobolev_norm(grid, n, &full, 4));
        self.alpha.push(alpha);
        self.alpha_dot.push(alpha_dot);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// One row per sample: `t, l1, l2, linf, h2, h4, alpha, alpha_dot`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "t,l1,l2,linf,h2,h4,alpha,alpha_dot")?;
        for k in 0..self.len() {
            writeln!(
                f,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                self.times[k], self.l1[k], self.l2[k], self.linf[k], self.h2[k], self.h4[k], self.alpha[k], self.alpha_dot[k]
            )?;
        }
        Ok(())
    }
}

/// `N(v) = -(f(ubar + v) - f(ubar) - df(ubar) v)`, pointwise.
#[derive(Debug, Clone)]
pub struct NonlinearResidual {
    pub model: FluxModel,
    pub ubar: Vec<f64>,
}

impl NonlinearResidual {
    pub fn new(model: FluxModel, ubar: &[f64]) -> Self {
        Self { model, ubar: ubar.to_vec() }
    }

    /// Full-grid input and output.
    pub fn eval(&self, v: &[f64]) -> Vec<f64> {
        let n = self.model.dim();
        let mut out = vec![0.0; v.len()];
        for i in 0..v.len() / n {
            let ub = &self.ubar[n * i..n * i + n];
            let vi = DVector::from_column_slice(&v[n * i..n * i + n]);
            let w: Vec<f64> = ub.iter().zip(vi.iter()).map(|(a, b)| a + b).collect();
            let r = -(self.model.f(&w) - self.model.f(ub) - self.model.df(ub) * &vi);
            out[n * i..n * i + n].copy_from_slice(r.as_slice());
        }
        out
    }

    /// `max |N(v)|_2 / (|v|_inf |v|_2)` over the samples.
    pub fn quadratic_constant(&self, grid: &Grid1D, samples: &[Vec<f64>]) -> f64 {
        samples
            .iter()
            .filter(|v| sup_norm(v) > 0.0)
            .map(|v| l2_norm(grid, &self.eval(v)) / (sup_norm(v) * l2_norm(grid, v)))
            .fold(0.0, f64::max)
    }
}

/// Evolves `v_t = Lv + N(v)_x` and records norms every `stride` steps.
pub fn evolve_perturbation(
    stepper: &ImexStepper,
    background: &Profile,
    v0: &DVector<f64>,
    t_end: f64,
    stride: usize,
) -> Result<(TrajectoryRecord, DVector<f64>)> {
    let n = stepper.dim();
    let ubar = background.flat();
    let steps = (t_end / stepper.dt).round() as usize;
    let mut rec = TrajectoryRecord::new(meta(stepper, "ars222-perturbation"));
    let mut v = v0.clone();
    rec.push(&stepper.grid, n, 0.0, &v, 0.0, 0.0);
    for k in 1..=steps {
        v = stepper.step_perturbation(&ubar, &v).map_err(|e| at_time(e, k as f64 * stepper.dt))?;
        if k % stride.max(1) == 0 || k == steps {
            rec.push(&stepper.grid, n, k as f64 * stepper.dt, &v, 0.0, 0.0);
        }
    }
    Ok((rec, v))
}

fn at_time(e: Error, t: f64) -> Error {
    match e {
        Error::BlowUp(_) => Error::BlowUp(t),
        other => other,
    }
}

fn meta(stepper: &ImexStepper, scheme: &str) -> TrajectoryMeta {
    let model = match &stepper.pde {
        Pde::Conservation(m) => m.name.clone(),
        Pde::Semilinear(m) => format!("{m:?}"),
    };
    TrajectoryMeta {
        model,
        x_min: stepper.grid.x_min,
        x_max: stepper.grid.x_max,
        m: stepper.grid.m,
        scheme: scheme.into(),
        dt: stepper.dt,
    }
}

/// The shifted reduced system about a discrete background.
pub struct ReducedShifted<'a> {
    pub stepper: &'a ImexStepper,
    pub op: &'a LinearizedOperator,
    pub background: &'a Profile,
    ubar: Vec<f64>,
}

impl<'a> ReducedShifted<'a> {
    pub fn new(stepper: &'a ImexStepper, op: &'a LinearizedOperator, background: &'a Profile) -> Result<Self> {
        if op.phi.is_none() {
            return Err(Error::Degenerate("reduced equations need a translation mode".into()));
        }
        stepper.grid.check_same(&background.grid)?;
        Ok(Self { stepper, op, background, ubar: background.flat() })
    }

    /// Discrete quadratic remainder `G(v)` on interior unknowns.
    pub fn remainder(&self, v: &DVector<f64>) -> DVector<f64> {
        let n = self.stepper.dim();
        interior(n, &self.stepper.pde.explicit_remainder(&self.stepper.grid, &self.ubar, &pad(n, v)))
    }

    /// `dalpha/dt = -pi2(Lv + G(v)) / (1 + pi2(v_x))` for the shift convention
    /// `v(x, t) = u(x + alpha(t), t) - ubar(x)`.
    pub fn alpha_dot(&self, v: &DVector<f64>) -> Result<f64> {
        let n = self.stepper.dim();
        let denom = 1.0 + self.op.pi2(&d0(&self.stepper.grid, n, v))?;
        if denom <= 0.5 {
            return Err(Error::DenominatorSmall(denom));
        }
        let rhs = self.op.apply(v) + self.remainder(v);
        Ok(-self.op.pi2(&rhs)? / denom)
    }

    /// Right-hand side `P1(Lv + G(v)) + alpha_dot P1 v_x` of the v equation.
    pub fn rhs(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.stepper.dim();
        let ad = self.alpha_dot(v)?;
        let r = self.op.apply(v) + self.remainder(v) + d0(&self.stepper.grid, n, v) * ad;
        self.op.project(&r, crate::linop::Which::One)
    }

    /// Same as [`ReducedShifted::rhs`] with the Dirichlet Laplacian removed,
    /// i.e. the explicit part of the IMEX splitting.
    fn explicit(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.stepper.dim();
        let lap = interior(n, &crate::disc::laplacian(&self.stepper.grid, n, &pad(n, v)));
        Ok(self.rhs(v)? - lap)
    }

    pub fn step(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let next = self.stepper.step_with(v, &|w| self.explicit(w))?;
        self.op.project(&next, crate::linop::Which::One)
    }

    /// `u0(x + a) - ubar(x)` at interior nodes, for `u0 = ubar + v0`;
    /// constant extension beyond the grid.
    pub fn shifted_perturbation(&self, v0: &DVector<f64>, a: f64) -> DVector<f64> {
        let grid = &self.stepper.grid;
        let n = self.stepper.dim();
        let u0: Vec<f64> = self.ubar.iter().zip(pad(n, v0)).map(|(b, v)| b + v).collect();
        let mut out = DVector::zeros(v0.len());
        for i in 1..grid.m - 1 {
            let x = grid.x(i) + a;
            for c in 0..n {
                let val = if x <= grid.x_min {
                    u0[c]
                } else if x >= grid.x_max {
                    u0[n * (grid.m - 1) + c]
                } else {
                    crate::disc::lagrange4(grid, x, false).iter().map(|&(j, w)| w * u0[n * j + c]).sum()
                };
                out[n * (i - 1) + c] = val - self.ubar[n * i + c];
            }
        }
        out
    }

    /// Phase `alpha0` with `pi2(u0(. + alpha0) - ubar) = 0` (secant method
    /// from 0) and the resulting projected perturbation.
    pub fn initial_phase(&self, v0: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let g = |a: f64| -> Result<f64> { self.op.pi2(&self.shifted_perturbation(v0, a)) };
        let (mut a0, mut a1) = (0.0, 1e-3);
        let (mut g0, mut g1) = (g(a0)?, g(a1)?);
        for _ in 0..60 {
            if g1 == g0 || g1.abs() < 1e-14 {
                break;
            }
            let a2 = a1 - g1 * (a1 - a0) / (g1 - g0);
            (a0, g0) = (a1, g1);
            a1 = a2;
            g1 = g(a1)?;
        }
        if !(g1.abs() < 1e-9) {
            return Err(Error::NonConvergence(format!("phase condition residual {g1:e}")));
        }
        let v = self.op.project(&self.shifted_perturbation(v0, a1), crate::linop::Which::One)?;
        Ok((a1, v))
    }

    /// `u(x) = ubar(x - alpha) + v(x - alpha)` on the background grid.
    pub fn reconstruct(&self, v: &DVector<f64>, alpha: f64) -> Vec<f64> {
        let grid = &self.stepper.grid;
        let n = self.stepper.dim();
        let full = pad(n, v);
        let mut out = self.background.sample_shifted(grid, alpha);
        for i in 0..grid.m {
            let x = grid.x(i) - alpha;
            if x <= grid.x_min || x >= grid.x_max {
                continue;
            }
            for (j, w) in crate::disc::lagrange4(grid, x, false) {
                for c in 0..n {
                    out[n * i + c] += w * full[n * j + c];
                }
            }
        }
        out
    }
}

/// Integrates the reduced shifted system from the perturbation `v0` of the
/// background. The initial phase `alpha0` is chosen so that
/// `u0(. + alpha0) - ubar` has no component along the translation mode.
pub fn evolve_reduced_shifted(rs: &ReducedShifted, v0: &DVector<f64>, t_end: f64, stride: usize) -> Result<(TrajectoryRecord, DVector<f64>)> {
    let (alpha0, v) = rs.initial_phase(v0)?;
    evolve_reduced_shifted_from(rs, &v, alpha0, t_end, stride)
}

/// Same, starting from `v` already orthogonal to the translation mode.
pub fn evolve_reduced_shifted_from(
    rs: &ReducedShifted,
    v0: &DVector<f64>,
    alpha0: f64,
    t_end: f64,
    stride: usize,
) -> Result<(TrajectoryRecord, DVector<f64>)> {
    let st = rs.stepper;
    let n = st.dim();
    let mut v = rs.op.project(v0, crate::linop::Which::One)?;
    let steps = (t_end / st.dt).round() as usize;
    let mut rec = TrajectoryRecord::new(meta(st, "ars222-reduced-shifted"));
    let mut alpha = alpha0;
    let mut ad = rs.alpha_dot(&v)?;
    rec.push(&st.grid, n, 0.0, &v, alpha, ad);
    for k in 1..=steps {
        v = rs.step(&v).map_err(|e| at_time(e, k as f64 * st.dt))?;
        let ad_new = rs.alpha_dot(&v)?;
        alpha += 0.5 * st.dt * (ad + ad_new);
        ad = ad_new;
        if k % stride.max(1) == 0 || k == steps {
            rec.push(&st.grid, n, k as f64 * st.dt, &v, alpha, ad);
        }
    }
    Ok((rec, v))
}

#[derive(Debug, Clone, Copy)]
pub struct DampingOptions {
    pub theta1: f64,
    pub theta2: f64,
    pub c_max: f64,
}

impl Default for DampingOptions {
    fn default() -> Self {
        Self { theta1: 0.1, theta2: 0.1, c_max: 100.0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DampingReport {
    pub theta1: f64,
    pub theta2: f64,
    /// Smallest `C` for which the inequality holds at every recorded time.
    pub c_min: f64,
    /// `c_max / c_min` (infinite for the zero trajectory).
    pub margin: f64,
    /// Smallest `C` over a grid of `theta1 = theta2` values.
    pub theta_scan: Vec<(f64, f64)>,
}

fn damping_constant(tr: &TrajectoryRecord, theta1: f64, theta2: f64) -> f64 {
    let h4_0 = tr.h4[0] * tr.h4[0];
    let mut integral = 0.0;
    let mut c: f64 = 0.0;
    for k in 0..tr.len() {
        if k > 0 {
            let dt = tr.times[k] - tr.times[k - 1];
            let src = |j: usize| tr.l2[j] * tr.l2[j] + tr.alpha_dot[j] * tr.alpha_dot[j];
            integral = integral * (-theta2 * dt).exp() + 0.5 * dt * (src(k - 1) * (-theta2 * dt).exp() + src(k));
        }
        let lhs = tr.h4[k] * tr.h4[k];
        let rhs = (-theta1 * tr.times[k]).exp() * h4_0 + integral;
        if lhs > 0.0 {
            c = c.max(if rhs > 0.0 { lhs / rhs } else { f64::INFINITY });
        }
    }
    c
}

/// Fits the smallest `C` with
/// `|v(t)|_{H4}^2 <= C e^{-theta1 t} |v(0)|_{H4}^2 + C int_0^t e^{-theta2 (t-s)} (|v|_{L2}^2 + |alpha_dot|^2) ds`
/// at every recorded time.
pub fn damping_monitor(tr: &TrajectoryRecord, opts: DampingOptions) -> Result<DampingReport> {
    if tr.is_empty() {
        return Err(Error::DomainError("empty trajectory".into()));
    }
    let gap = tr.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if gap * opts.theta1.max(opts.theta2) > 0.5 {
        return Err(Error::SnapshotGapTooLarge { gap });
    }
    let c_min = damping_constant(tr, opts.theta1, opts.theta2);
    let theta_scan = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5].iter().map(|&th| (th, damping_constant(tr, th, th))).collect();
    if c_min > opts.c_max {
        return Err(Error::Infeasible { needed: c_min, c_max: opts.c_max });
    }
    Ok(DampingReport {
        theta1: opts.theta1,
        theta2: opts.theta2,
        c_min,
        margin: if c_min > 0.0 { opts.c_max / c_min } else { f64::INFINITY },
        theta_scan,
    })
}
