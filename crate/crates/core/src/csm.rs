//! Center-stable manifolds by the truncated Lyapunov–Perron fixed point
//!
//! `w(t) = e^{At} w_cs + int_0^t e^{A(t-s)} P_cs N(w) ds - int_t^inf e^{A(t-s)} P_u N(w) ds`
//!
//! for a finite-dimensional generator `A`, and the same iteration for a
//! discretized PDE generator restricted to the complement of the translation
//! mode. The manifold is the graph `Phi(w_cs) = P_u w(0)`.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linop::{sdirk_step, LinearizedOperator, StageSolver, Which, SDIRK_C};
use crate::special::loglog_fit;
use crate::spectral::SpectralDecomposition;

/// `exp(-1/s)` for `s > 0`, zero otherwise.
fn psi(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp()
    } else {
        0.0
    }
}

fn psi_prime(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp() / (s * s)
    } else {
        0.0
    }
}

/// Smooth cutoff: 1 on `[0, 1]`, 0 on `[2, inf)`, `C^inf` everywhere.
pub fn rho(x: f64) -> f64 {
    let a = psi(2.0 - x);
    let b = psi(x - 1.0);
    a / (a + b)
}

pub fn rho_prime(x: f64) -> f64 {
    let a = psi(2.0 - x);
    let b = psi(x - 1.0);
    if a == 0.0 || b == 0.0 {
        return 0.0;
    }
    let da = -psi_prime(2.0 - x);
    let db = psi_prime(x - 1.0);
    (da * b - a * db) / ((a + b) * (a + b))
}

/// `max_r |r rho'(r)|`, sampled finely on `(1, 2)`.
pub fn max_r_rho_prime() -> f64 {
    (1..4000).map(|k| 1.0 + k as f64 / 4000.0).map(|r| (r * rho_prime(r)).abs()).fold(0.0, f64::max)
}

pub type VecMap = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type NormFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;

/// `N^eps(w) = rho(|w|/eps) N(w)`.
#[derive(Clone)]
pub struct TruncatedNonlinearity {
    pub n: VecMap,
    pub eps: f64,
    pub norm: NormFn,
    /// Measured Lipschitz constant of `N^eps`.
    pub lip_bound: f64,
}

impl std::fmt::Debug for TruncatedNonlinearity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TruncatedNonlinearity").field("eps", &self.eps).field("lip_bound", &self.lip_bound).finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzAudit {
    /// Largest sampled difference quotient of `N^eps`.
    pub measured: f64,
    /// `2 (1 + max|r rho'(r)|) sup_{|w| <= 2 eps} |d^2 N|` times `eps`.
    pub bound: f64,
    /// Sampled `sup |d^2 N(w)[u, u]|` over unit `u` and `|w| <= 2 eps`.
    pub hessian_sup: f64,
}

impl TruncatedNonlinearity {
    /// Euclidean truncation of `n` at radius `eps`, with `dim` the state
    /// dimension used for the Lipschitz audit.
    pub fn euclidean(dim: usize, eps: f64, n: VecMap) -> Self {
        Self::with_norm(dim, eps, n, Arc::new(|w: &DVector<f64>| w.norm()))
    }

    pub fn with_norm(dim: usize, eps: f64, n: VecMap, norm: NormFn) -> Self {
        let mut t = Self { n, eps, norm, lip_bound: f64::NAN };
        t.lip_bound = t.audit(dim, 200, 0xC5A).measured;
        t
    }

    pub fn eval(&self, w: &DVector<f64>) -> DVector<f64> {
        let r = (self.norm)(w) / self.eps;
        if r >= 2.0 {
            return DVector::zeros(w.len());
        }
        (self.n)(w) * rho(r)
    }

    /// Samples difference quotients of `N^eps` in `B(0, 3 eps)` and second
    /// differences of `N` in `B(0, 2 eps)`. Sample points scale with `eps`,
    /// so homogeneous nonlinearities give exactly comparable results.
    pub fn audit(&self, dim: usize, samples: usize, seed: u64) -> LipschitzAudit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = |rng: &mut ChaCha8Rng| {
            let v = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
            let n = (self.norm)(&v);
            v / n
        };
        let mut measured: f64 = 0.0;
        let mut hess: f64 = 0.0;
        for k in 0..samples {
            let r = 3.0 * self.eps * (k as f64 + 0.5) / samples as f64;
            let w1 = unit(&mut rng) * r;
            for scale in [1e-3, 0.3] {
                let w2 = &w1 + unit(&mut rng) * (scale * self.eps);
                let d = (self.norm)(&(&w1 - &w2));
                let q = (self.norm)(&(self.eval(&w1) - self.eval(&w2))) / d;
                measured = measured.max(q);
            }
            if r <= 2.0 * self.eps {
                let mut dirs = vec![unit(&mut rng)];
                if dim <= 16 {
                    dirs.extend((0..dim).map(|i| {
                        let e = DVector::from_fn(dim, |j, _| if i == j { 1.0 } else { 0.0 });
                        let n = (self.norm)(&e);
                        e / n
                    }));
                }
                let k2 = 1e-2 * self.eps;
                for u in dirs {
                    let second = (self.n)(&(&w1 + &u * k2)) - (self.n)(&w1) * 2.0 + (self.n)(&(&w1 - &u * k2));
                    hess = hess.max((self.norm)(&second) / (k2 * k2));
                }
            }
        }
        let bound = 2.0 * (1.0 + max_r_rho_prime()) * hess * self.eps;
        LipschitzAudit { measured, bound, hessian_sup: hess }
    }
}

/// `P1 v`, or `v` itself for operators without a translation mode.
fn complement(op: &LinearizedOperator, v: &DVector<f64>) -> Result<DVector<f64>> {
    if op.phi.is_some() {
        op.project(v, Which::One)
    } else {
        Ok(v.clone())
    }
}

/// Unstable part of a generator: `P_u = right left^T`, `A right = right lambda`.
#[derive(Debug, Clone)]
pub struct UnstableSplit {
    pub right: DMatrix<f64>,
    pub left: DMatrix<f64>,
    pub lambda: DMatrix<f64>,
}

impl UnstableSplit {
    pub fn p(&self) -> usize {
        self.right.ncols()
    }

    pub fn coordinates(&self, f: &DVector<f64>) -> DVector<f64> {
        self.left.tr_mul(f)
    }

    pub fn pi_u(&self, f: &DVector<f64>) -> DVector<f64> {
        &self.right * self.coordinates(f)
    }

    pub fn pi_cs(&self, f: &DVector<f64>) -> DVector<f64> {
        f - self.pi_u(f)
    }

    /// Split for `L0` on the complement of the translation mode, in full grid
    /// coordinates: right vectors projected by `P1`, left vectors weighted by
    /// the quadrature.
    pub fn from_spectral(op: &LinearizedOperator, sd: &SpectralDecomposition) -> Result<Self> {
        let mut right = sd.right.clone();
        for j in 0..sd.p {
            let c = complement(op, &sd.right.column(j).into_owned())?;
            right.set_column(j, &c);
        }
        Ok(Self { right, left: &sd.left * op.h(), lambda: sd.restricted.clone() })
    }
}

/// Exponential dichotomy of a constant matrix.
#[derive(Debug, Clone)]
pub struct Dichotomy {
    pub a: DMatrix<f64>,
    pub pi_u: DMatrix<f64>,
    pub pi_cs: DMatrix<f64>,
    pub split: UnstableSplit,
    /// Decay rate of the backward unstable flow.
    pub eta: f64,
    /// Growth allowance of the forward center-stable flow.
    pub theta: f64,
    /// Weight of the `|.|_{-theta~}` norm, `theta < theta~ < eta`.
    pub theta_tilde: f64,
    pub c_cs: f64,
    pub c_u: f64,
}

fn matrix_sign(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut s = a.clone();
    for _ in 0..100 {
        let inv = s.clone().try_inverse().ok_or_else(|| Error::Singular(0))?;
        let next = (&s + inv) * 0.5;
        let change = (&next - &s).norm() / next.norm();
        s = next;
        if change < 1e-14 {
            return Ok(s);
        }
    }
    Err(Error::NonConvergence("matrix sign iteration".into()))
}

impl Dichotomy {
    /// `eta = eta_factor * min Re(unstable)`, `theta = max(max Re(cs), 0) + theta_pad`,
    /// `theta~ = (theta + eta)/2`; constants fitted on `[0, t_fit]`.
    pub fn new(a: DMatrix<f64>, eta_factor: f64, theta_pad: f64, t_fit: f64) -> Result<Self> {
        let d = a.nrows();
        let ev = a.complex_eigenvalues();
        let min_u = ev.iter().filter(|z| z.re > 1e-12).map(|z| z.re).fold(f64::INFINITY, f64::min);
        let max_cs = ev.iter().filter(|z| z.re <= 1e-12).map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        let (pi_u, eta) = if min_u.is_finite() {
            let s = matrix_sign(&(&a - DMatrix::identity(d, d) * (0.5 * min_u)))?;
            ((DMatrix::identity(d, d) + s) * 0.5, eta_factor * min_u)
        } else {
            (DMatrix::zeros(d, d), 1.0)
        };
        let pi_cs = DMatrix::identity(d, d) - &pi_u;
        let theta = max_cs.max(0.0) + theta_pad;
        if theta >= eta {
            return Err(Error::Degenerate(format!("no spectral gap: theta {theta} >= eta {eta}")));
        }
        let svd = pi_u.clone().svd(true, false);
        let u = svd.u.expect("requested");
        let cols: Vec<usize> = (0..d).filter(|&k| svd.singular_values[k] > 0.5).collect();
        let right = DMatrix::from_fn(d, cols.len(), |i, j| u[(i, cols[j])]);
        let left = (right.transpose() * &pi_u).transpose();
        let lambda = left.transpose() * &a * &right;
        let mut c_cs: f64 = 0.0;
        let mut c_u: f64 = 0.0;
        for k in 0..=200 {
            let t = t_fit * k as f64 / 200.0;
            let e = (&a * t).exp();
            c_cs = c_cs.max((&e * &pi_cs).norm() * (-theta * t).exp());
            let eb = (&a * -t).exp();
            c_u = c_u.max((&eb * &pi_u).norm() * (eta * t).exp());
        }
        Ok(Self {
            a,
            pi_u,
            pi_cs,
            split: UnstableSplit { right, left, lambda },
            eta,
            theta,
            theta_tilde: 0.5 * (theta + eta),
            c_cs,
            c_u,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn with_theta_tilde(mut self, theta_tilde: f64) -> Result<Self> {
        if !(self.theta < theta_tilde && theta_tilde < self.eta) {
            return Err(Error::DomainError(format!("theta~ = {theta_tilde} outside ({}, {})", self.theta, self.eta)));
        }
        self.theta_tilde = theta_tilde;
        Ok(self)
    }

    /// `sup_t e^{-theta~ t}` weighted bound constant `C_1` such that the
    /// iteration contracts when `C_1 Lip(N^eps) < 1/2`.
    pub fn contraction_constant(&self) -> f64 {
        self.c_cs / (self.theta_tilde - self.theta) + self.c_u / (self.eta - self.theta_tilde)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LpOptions {
    pub horizon: f64,
    pub dt: f64,
    /// Stop when successive iterates differ by less than this in `|.|_{-theta~}`.
    pub tol: f64,
    pub max_iter: usize,
    /// Largest admissible certified bound on the neglected tail at `t = 0`.
    pub tail_tol: f64,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self { horizon: 40.0, dt: 0.005, tol: 1e-10, max_iter: 200, tail_tol: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub times: Vec<f64>,
    pub w: Vec<DVector<f64>>,
    pub iterations: usize,
    /// Largest ratio of successive iterate differences.
    pub contraction_factor: f64,
    /// Certified bound on the truncated tail integral at `t = 0`.
    pub tail_bound: f64,
    /// `P_u w(0)`.
    pub phi: DVector<f64>,
}

/// `(e^{B dt}, W0, W1)` with `int_0^dt e^{B(dt-s)} g(s) ds = W0 g(0) + W1 g(dt)`
/// exact for linear `g`, from one exponential of an augmented block matrix.
fn linear_forcing_weights(b: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let d = b.nrows();
    let mut m = DMatrix::zeros(3 * d, 3 * d);
    m.view_mut((0, 0), (d, d)).copy_from(&(b * dt));
    m.view_mut((0, d), (d, d)).fill_with_identity();
    m.view_mut((d, 2 * d), (d, d)).fill_with_identity();
    let x = m.exp();
    let e = x.view((0, 0), (d, d)).into_owned();
    let phi1 = x.view((0, d), (d, d)).into_owned();
    let phi2 = x.view((0, 2 * d), (d, d)).into_owned();
    (e, (&phi1 - &phi2) * dt, phi2 * dt)
}

/// Shared fixed-point loop. `cs_part(g)` returns `e^{At} w_cs + int_0^t
/// e^{A(t-s)} P_cs g(s) ds` on the time grid.
fn lp_iterate(
    split: &UnstableSplit,
    n: &TruncatedNonlinearity,
    theta_tilde: f64,
    eta: f64,
    c_u: f64,
    opts: &LpOptions,
    mut cs_part: impl FnMut(Option<&[DVector<f64>]>) -> Vec<DVector<f64>>,
) -> Result<LpSolution> {
    let k_steps = (opts.horizon / opts.dt).round() as usize;
    let dt = opts.horizon / k_steps as f64;
    let times: Vec<f64> = (0..=k_steps).map(|k| k as f64 * dt).collect();
    let weights: Vec<f64> = times.iter().map(|t| (-theta_tilde * t).exp()).collect();
    let (back, b_old, b_new) = linear_forcing_weights(&(-&split.lambda), dt);
    let p = split.p();

    let mut w = cs_part(None);
    let mut last_diff = f64::NAN;
    let mut factor: f64 = 0.0;
    for iter in 1..=opts.max_iter {
        let g: Vec<DVector<f64>> = w.par_iter().map(|wk| n.eval(wk)).collect();
        let mut next = cs_part(Some(&g));
        if p > 0 {
            let z: Vec<DVector<f64>> = g.iter().map(|gk| split.coordinates(gk)).collect();
            let mut j = DVector::zeros(p);
            let last = next.len() - 1;
            next[last] -= &split.right * &j;
            for k in (0..last).rev() {
                // integrand runs backwards: z[k+1] is the "old" end
                j = &back * &j + &b_old * &z[k + 1] + &b_new * &z[k];
                next[k] -= &split.right * &j;
            }
        }
        let diff = next
            .iter()
            .zip(&w)
            .zip(&weights)
            .map(|((a, b), wt)| wt * (n.norm)(&(a - b)))
            .fold(0.0, f64::max);
        let scale = w.iter().zip(&weights).map(|(a, wt)| wt * (n.norm)(a)).fold(0.0, f64::max);
        if iter > 1 && last_diff > 1e3 * f64::EPSILON * scale.max(f64::MIN_POSITIVE) {
            factor = factor.max(diff / last_diff);
        }
        w = next;
        if factor >= 1.0 {
            return Err(Error::NoContraction(factor));
        }
        if diff < opts.tol || diff == 0.0 {
            let wnorm = w.iter().zip(&weights).map(|(a, wt)| wt * (n.norm)(a)).fold(0.0, f64::max);
            let gap = eta - theta_tilde;
            let tail_bound = if p == 0 { 0.0 } else { c_u * n.lip_bound * wnorm * (-gap * opts.horizon).exp() / gap };
            if tail_bound > opts.tail_tol {
                return Err(Error::HorizonTooShort(tail_bound));
            }
            let phi = split.pi_u(&w[0]);
            return Ok(LpSolution { times, w, iterations: iter, contraction_factor: factor, tail_bound, phi });
        }
        last_diff = diff;
    }
    Err(Error::NonConvergence(format!("Lyapunov-Perron iteration after {} steps", opts.max_iter)))
}

/// Fixed point of the truncated Lyapunov–Perron map for `w' = Aw + N^eps(w)`.
pub fn lyapunov_perron_solve(d: &Dichotomy, n: &TruncatedNonlinearity, w_cs: &DVector<f64>, opts: LpOptions) -> Result<LpSolution> {
    if w_cs.len() != d.dim() {
        return Err(Error::DimensionMismatch { expected: d.dim(), got: w_cs.len() });
    }
    let k_steps = (opts.horizon / opts.dt).round() as usize;
    let dt = opts.horizon / k_steps as f64;
    let (e, w_old, w_new) = linear_forcing_weights(&d.a, dt);
    let (w_old, w_new) = (&d.pi_cs * w_old, &d.pi_cs * w_new);
    let w_cs = &d.pi_cs * w_cs;
    let mut free = Vec::with_capacity(k_steps + 1);
    free.push(w_cs.clone());
    for k in 0..k_steps {
        let next = &e * &free[k];
        free.push(next);
    }
    let cs_part = |g: Option<&[DVector<f64>]>| -> Vec<DVector<f64>> {
        let Some(g) = g else { return free.clone() };
        let mut out = Vec::with_capacity(free.len());
        let mut acc = DVector::zeros(d.dim());
        out.push(free[0].clone());
        for k in 0..k_steps {
            acc = &e * &acc + &w_old * &g[k] + &w_new * &g[k + 1];
            out.push(&free[k + 1] + &acc);
        }
        out
    };
    lp_iterate(&d.split, n, d.theta_tilde, d.eta, d.c_u, &opts, cs_part)
}

#[derive(Debug, Clone)]
pub struct ManifoldGraph {
    pub samples: Vec<DVector<f64>>,
    pub values: Vec<DVector<f64>>,
    pub contraction_factor: f64,
    pub iterations: Vec<usize>,
    pub tail_bound: f64,
}

impl ManifoldGraph {
    /// Slope of `log|Phi|` against `log|w_cs|` over samples with
    /// `lo <= |w_cs| <= hi`.
    pub fn tangency_slope(&self, lo: f64, hi: f64) -> Option<f64> {
        let (x, y): (Vec<f64>, Vec<f64>) = self
            .samples
            .iter()
            .zip(&self.values)
            .filter(|(s, v)| s.norm() >= lo && s.norm() <= hi && v.norm() > 0.0)
            .map(|(s, v)| (s.norm(), v.norm()))
            .unzip();
        loglog_fit(&x, &y).map(|f| f.slope)
    }

    /// Largest pairwise `|Phi(a) - Phi(b)| / |a - b|`.
    pub fn lipschitz(&self) -> f64 {
        let mut best: f64 = 0.0;
        for i in 0..self.samples.len() {
            for j in i + 1..self.samples.len() {
                let d = (&self.samples[i] - &self.samples[j]).norm();
                if d > 0.0 {
                    best = best.max((&self.values[i] - &self.values[j]).norm() / d);
                }
            }
        }
        best
    }

    /// CSV: `cs_1..cs_d, u_1..u_d, contraction_factor`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let d = self.samples.first().map_or(0, |s| s.len());
        let mut header: Vec<String> = (1..=d).map(|k| format!("cs_{k}")).collect();
        header.extend((1..=d).map(|k| format!("u_{k}")));
        header.push("contraction_factor".into());
        writeln!(f, "{}", header.join(","))?;
        for (s, v) in self.samples.iter().zip(&self.values) {
            let row: Vec<String> = s.iter().chain(v.iter()).map(|x| format!("{x:.15e}")).collect();
            writeln!(f, "{},{:.6e}", row.join(","), self.contraction_factor)?;
        }
        Ok(())
    }
}

/// Solves the fixed point at every sample (in parallel) and records the graph.
pub fn build_graph(d: &Dichotomy, n: &TruncatedNonlinearity, samples: &[DVector<f64>], opts: LpOptions) -> Result<ManifoldGraph> {
    let sols: Vec<Result<LpSolution>> = samples.par_iter().map(|s| lyapunov_perron_solve(d, n, s, opts)).collect();
    let mut values = Vec::new();
    let mut iterations = Vec::new();
    let mut factor: f64 = 0.0;
    let mut tail: f64 = 0.0;
    for s in sols {
        let s = s?;
        values.push(s.phi);
        iterations.push(s.iterations);
        factor = factor.max(s.contraction_factor);
        tail = tail.max(s.tail_bound);
    }
    Ok(ManifoldGraph {
        samples: samples.iter().map(|s| &d.pi_cs * s).collect(),
        values,
        contraction_factor: factor,
        iterations,
        tail_bound: tail,
    })
}

/// Halves `eps` until the measured contraction factor at `probe` is below
/// one half.
pub fn auto_truncation(
    d: &Dichotomy,
    make: impl Fn(f64) -> TruncatedNonlinearity,
    eps0: f64,
    probe: &DVector<f64>,
    opts: LpOptions,
) -> Result<TruncatedNonlinearity> {
    let mut eps = eps0;
    for _ in 0..30 {
        let n = make(eps);
        match lyapunov_perron_solve(d, &n, probe, opts) {
            Ok(s) if s.contraction_factor < 0.5 => return Ok(n),
            Ok(_) | Err(Error::NoContraction(_)) => eps *= 0.5,
            Err(e) => return Err(e),
        }
    }
    Err(Error::NoContraction(f64::NAN))
}

/// RK4 flow of `w' = Aw + N^eps(w)`.
pub fn flow(d: &Dichotomy, n: &TruncatedNonlinearity, w0: &DVector<f64>, t: f64, dt: f64) -> DVector<f64> {
    let steps = (t / dt).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let f = |w: &DVector<f64>| &d.a * w + n.eval(w);
    let mut w = w0.clone();
    for _ in 0..steps {
        let k1 = f(&w);
        let k2 = f(&(&w + &k1 * (0.5 * h)));
        let k3 = f(&(&w + &k2 * (0.5 * h)));
        let k4 = f(&(&w + &k3 * h));
        w += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    w
}

#[derive(Debug, Clone)]
pub struct InvarianceReport {
    pub residuals: Vec<f64>,
    pub max_residual: f64,
}

/// Flows each graph point (plus `offset` in the unstable directions) for
/// `t_step` and measures the distance of the endpoint from the graph.
pub fn verify_invariance(
    g: &ManifoldGraph,
    d: &Dichotomy,
    n: &TruncatedNonlinearity,
    t_step: f64,
    offset: Option<&DVector<f64>>,
    opts: LpOptions,
) -> Result<InvarianceReport> {
    let residuals: Vec<Result<f64>> = g
        .samples
        .par_iter()
        .zip(&g.values)
        .map(|(s, v)| {
            let mut w0 = s + v;
            if let Some(o) = offset {
                w0 += &d.pi_u * o;
            }
            let end = flow(d, n, &w0, t_step, 1e-3);
            let cs = &d.pi_cs * &end;
            let sol = lyapunov_perron_solve(d, n, &cs, opts)?;
            Ok((&d.pi_u * &end - sol.phi).norm())
        })
        .collect();
    let residuals = residuals.into_iter().collect::<Result<Vec<f64>>>()?;
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    Ok(InvarianceReport { residuals, max_residual })
}

/// Data for the PDE version: the operator `L` (full grid), its unstable
/// split on the complement of the translation mode, and rates.
pub struct PdeDichotomy<'a> {
    pub op: &'a LinearizedOperator,
    pub split: UnstableSplit,
    pub eta: f64,
    pub theta_tilde: f64,
    pub c_u: f64,
}

impl<'a> PdeDichotomy<'a> {
    pub fn new(op: &'a LinearizedOperator, sd: &SpectralDecomposition, eta_factor: f64) -> Result<Self> {
        let split = UnstableSplit::from_spectral(op, sd)?;
        let min_u = sd.eigenvalues.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        let eta = if sd.p == 0 { 1.0 } else { eta_factor * min_u };
        // Backward unstable flow in coordinates: |e^{-Lambda t}| e^{eta t}.
        let mut c_u: f64 = 1.0;
        for k in 0..=100 {
            let t = 20.0 * k as f64 / 100.0;
            c_u = c_u.max((&split.lambda * -t).exp().norm() * (eta * t).exp() * split.right.norm() * split.left.norm().max(1.0));
        }
        Ok(Self { op, split, eta, theta_tilde: 0.5 * eta, c_u })
    }

    /// `P_cs` on the complement: `P1 (I - P_u)`.
    pub fn pi_cs(&self, f: &DVector<f64>) -> Result<DVector<f64>> {
        complement(self.op, &self.split.pi_cs(f))
    }
}

/// Lyapunov–Perron solve for `v' = L0 v + G0^delta(v)` on the complement of
/// the translation mode. The center-stable Duhamel term is obtained by
/// integrating `I' = L I + P_cs G` with SDIRK4 in the full space and
/// projecting with `P1 P_cs` after every step.
pub fn pde_csm_solve(pd: &PdeDichotomy, n: &TruncatedNonlinearity, u_cs: &DVector<f64>, opts: LpOptions) -> Result<LpSolution> {
    let op = pd.op;
    let k_steps = (opts.horizon / opts.dt).round() as usize;
    let dt = opts.horizon / k_steps as f64;
    let solver = op.stage_solver(dt)?;
    let project = |v: DVector<f64>| -> DVector<f64> { pd.pi_cs(&v).expect("dimensions checked") };
    let u0 = project(u_cs.clone());
    let run = |g: Option<&[DVector<f64>]>| -> Vec<DVector<f64>> {
        let mut out = Vec::with_capacity(k_steps + 1);
        let mut y = DMatrix::from_column_slice(u0.len(), 1, u0.as_slice());
        out.push(u0.clone());
        let pg: Option<Vec<DVector<f64>>> = g.map(|g| g.iter().map(|gk| project(gk.clone())).collect());
        for k in 0..k_steps {
            let forcing = |i: usize| -> DMatrix<f64> {
                let pg = pg.as_ref().expect("only called with forcing");
                let s = SDIRK_C[i];
                let v = &pg[k] * (1.0 - s) + &pg[k + 1] * s;
                DMatrix::from_column_slice(v.len(), 1, v.as_slice())
            };
            let g: Option<&dyn Fn(usize) -> DMatrix<f64>> = if pg.is_some() { Some(&forcing) } else { None };
            y = sdirk_step(&solver as &dyn StageSolver, &y, dt, g);
            let v = project(y.column(0).into_owned());
            y.set_column(0, &v);
            out.push(v);
        }
        out
    };
    if u_cs.len() != op.dim() {
        return Err(Error::GridMismatch(format!("{} entries vs operator {}", u_cs.len(), op.dim())));
    }
    let free = run(None);
    let cs_part = |g: Option<&[DVector<f64>]>| -> Vec<DVector<f64>> {
        match g {
            None => free.clone(),
            Some(_) => run(g),
        }
    };
    lp_iterate(&pd.split, n, pd.theta_tilde, pd.eta, pd.c_u, &opts, cs_part)
}
