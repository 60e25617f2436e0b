//! Standing-wave profiles.
//!
//! For conservation laws the profile solves `u' = f(u) - f(u_-)`, discretized
//! by the fourth-order Hermite box scheme
//!
//! ```text
//! u_{i+1} - u_i = h/2 (F_i + F_{i+1}) + h^2/12 (J_i F_i - J_{i+1} F_{i+1})
//! ```
//!
//! with projective boundary conditions (the left end lies on the unstable
//! subspace of `u_-`, the right end on the stable subspace of `u_+`) and the
//! phase condition `u_1(0) = (u_{-,1} + u_{+,1})/2`. The system is solved by
//! damped Newton with a banded LU.
//!
//! [`discrete_steady_state`] instead solves the stationary equation of the
//! same finite-difference scheme used for time stepping. That background is
//! what the linearization and the evolution use, so that `u = ubar` is an
//! exact fixed point of the discrete flow.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::banded::Banded;
use crate::disc::{lagrange4, steady_residual, Pde};
use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::model::{check_lax, EndpointData, FluxModel, SemilinearModel};
use crate::special::fit_line;

/// A discretized standing wave.
#[derive(Debug, Clone)]
pub struct Profile {
    pub grid: Grid1D,
    pub u_minus: DVector<f64>,
    pub u_plus: DVector<f64>,
    /// `n x m`, column `i` is the state at node `i`.
    pub ubar: DMatrix<f64>,
    pub ubar_x: DMatrix<f64>,
    /// Fitted exponential decay rate of `ubar_x` (the smaller of the two tails).
    pub theta_hat: f64,
    /// Largest relative misfit of the exponential tail model on the fit window.
    pub tail_fit_error: f64,
    /// Sup of the discrete equation residual, per unit length.
    pub residual_sup: f64,
    /// Strength of the point source used to pin the phase of a discrete
    /// steady state (zero for box-scheme profiles).
    pub phase_source: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileSidecar {
    pub theta_hat: f64,
    pub residual_sup: f64,
    pub tail_fit_error: f64,
    pub phase_source: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub m: usize,
}

impl Profile {
    pub fn dim(&self) -> usize {
        self.ubar.nrows()
    }

    /// Node-major flattening of `ubar`.
    pub fn flat(&self) -> Vec<f64> {
        self.ubar.as_slice().to_vec()
    }

    pub fn flat_x(&self) -> Vec<f64> {
        self.ubar_x.as_slice().to_vec()
    }

    /// Cubic Hermite interpolation of `(ubar, ubar_x)` at `x`; constant
    /// extension outside the grid.
    pub fn eval(&self, x: f64) -> (DVector<f64>, DVector<f64>) {
        let g = &self.grid;
        let n = self.dim();
        if x <= g.x_min {
            return (self.ubar.column(0).into(), DVector::zeros(n));
        }
        if x >= g.x_max {
            return (self.ubar.column(g.m - 1).into(), DVector::zeros(n));
        }
        let h = g.h();
        let s = (x - g.x_min) / h;
        let j = (s.floor() as usize).min(g.m - 2);
        let t = s - j as f64;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let d00 = (6.0 * t2 - 6.0 * t) / h;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = (-6.0 * t2 + 6.0 * t) / h;
        let d11 = 3.0 * t2 - 2.0 * t;
        let (u0, u1) = (self.ubar.column(j), self.ubar.column(j + 1));
        let (p0, p1) = (self.ubar_x.column(j), self.ubar_x.column(j + 1));
        let u = u0 * h00 + p0 * (h * h10) + u1 * h01 + p1 * (h * h11);
        let ux = u0 * d00 + p0 * d10 + u1 * d01 + p1 * d11;
        (u, ux)
    }

    /// Samples the profile shifted by `shift`, i.e. `ubar(x - shift)`, on `grid`.
    pub fn sample_shifted(&self, grid: &Grid1D, shift: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim() * grid.m);
        for i in 0..grid.m {
            out.extend(self.eval(grid.x(i) - shift).0.iter());
        }
        out
    }

    /// Sup of the centered-difference defect `|D0 ubar - ubar_x|`.
    pub fn fd_defect(&self) -> f64 {
        let h = self.grid.h();
        let mut worst = 0.0_f64;
        for i in 1..self.grid.m - 1 {
            let d = (self.ubar.column(i + 1) - self.ubar.column(i - 1)) / (2.0 * h) - self.ubar_x.column(i);
            worst = worst.max(d.amax());
        }
        worst
    }

    pub fn sidecar(&self) -> ProfileSidecar {
        ProfileSidecar {
            theta_hat: self.theta_hat,
            residual_sup: self.residual_sup,
            tail_fit_error: self.tail_fit_error,
            phase_source: self.phase_source,
            x_min: self.grid.x_min,
            x_max: self.grid.x_max,
            m: self.grid.m,
        }
    }

    /// Writes `x, u_1..u_n, ux_1..ux_n` as CSV and a JSON sidecar next to it.
    pub fn write(&self, csv_path: &Path) -> Result<()> {
        let n = self.dim();
        let mut f = std::io::BufWriter::new(std::fs::File::create(csv_path)?);
        let mut header = vec!["x".to_string()];
        header.extend((1..=n).map(|c| format!("u{c}")));
        header.extend((1..=n).map(|c| format!("ux{c}")));
        writeln!(f, "{}", header.join(","))?;
        for i in 0..self.grid.m {
            let mut row = vec![format!("{:.17e}", self.grid.x(i))];
            row.extend((0..n).map(|c| format!("{:.17e}", self.ubar[(c, i)])));
            row.extend((0..n).map(|c| format!("{:.17e}", self.ubar_x[(c, i)])));
            writeln!(f, "{}", row.join(","))?;
        }
        let json = serde_json::to_string_pretty(&self.sidecar())?;
        std::fs::write(csv_path.with_extension("json"), json)?;
        Ok(())
    }
}

fn rhs(m: &FluxModel, u: &[f64], fm: &DVector<f64>) -> DVector<f64> {
    m.f(u) - fm
}

/// Fit `|ubar_x| ~ C exp(-theta |x|)` on the outer quarter of each tail.
fn fit_tails(grid: &Grid1D, ubar_x: &DMatrix<f64>) -> Result<(f64, f64)> {
    let mut rates = Vec::new();
    let mut misfit = 0.0_f64;
    let left_edge = grid.x_min + 0.25 * (0.0 - grid.x_min);
    let right_edge = grid.x_max - 0.25 * grid.x_max;
    for left in [true, false] {
        let (xs, ys): (Vec<f64>, Vec<f64>) = (0..grid.m)
            .filter(|&i| if left { grid.x(i) <= left_edge } else { grid.x(i) >= right_edge })
            .map(|i| (grid.x(i).abs(), ubar_x.column(i).norm()))
            .filter(|&(_, y)| y > 1e-300)
            .map(|(x, y)| (x, y.ln()))
            .unzip();
        let fit = fit_line(&xs, &ys).ok_or_else(|| Error::GridTooShort { tail: f64::NAN, tol: 0.0 })?;
        for (x, y) in xs.iter().zip(&ys) {
            let model = fit.intercept + fit.slope * x;
            misfit = misfit.max(((model - y).exp() - 1.0).abs());
        }
        rates.push(-fit.slope);
    }
    Ok((rates[0].min(rates[1]), misfit))
}

/// Banded Newton with backtracking on the residual norm.
fn damped_newton(
    mut x: Vec<f64>,
    residual: impl Fn(&[f64]) -> Vec<f64>,
    jacobian: impl Fn(&[f64]) -> Banded<f64>,
    tol: f64,
    what: &str,
) -> Result<Vec<f64>> {
    let norm = |r: &[f64]| r.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let mut r = residual(&x);
    for _ in 0..60 {
        let rn = norm(&r);
        if rn <= tol {
            return Ok(x);
        }
        let lu = jacobian(&x).lu().map_err(|e| Error::NoConnection(format!("{what}: {e}")))?;
        let dx = lu.solve(&r);
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a - lambda * d).collect();
            let rt = residual(&trial);
            let rtn = norm(&rt);
            if rtn.is_finite() && (rtn < (1.0 - 0.25 * lambda) * rn || rtn <= tol) {
                x = trial;
                r = rt;
                break;
            }
            lambda *= 0.5;
            if lambda < 1e-6 {
                // Converged to rounding level if the step is tiny.
                if norm(&dx) <= 1e-12 * (1.0 + norm(&x)) {
                    return Ok(x);
                }
                return Err(Error::NoConnection(format!("{what}: line search stalled at residual {rn:e}")));
            }
        }
    }
    if norm(&r) <= tol * 1e3 {
        Ok(x)
    } else {
        Err(Error::NoConnection(format!("{what}: Newton did not converge (residual {:e})", norm(&r))))
    }
}

/// Solves the standing-wave ODE of a Lax shock on `grid`.
pub fn solve_profile_conservation(m: &FluxModel, grid: &Grid1D) -> Result<Profile> {
    let e = EndpointData::compute(m)?;
    let lax = check_lax(&e)?;
    if !lax.is_lax {
        return Err(Error::NoConnection("endpoint data is not a Lax shock".into()));
    }
    if !(grid.x_min < 0.0 && grid.x_max > 0.0) {
        return Err(Error::Config("profile grid must contain x = 0".into()));
    }
    let n = m.dim();
    let nodes = grid.m;
    let h = grid.h();
    let fm = m.f(m.u_minus.as_slice());
    let left_rows: Vec<DVector<f64>> =
        e.a_minus.iter().zip(&e.l_minus).filter(|(a, _)| **a < 0.0).map(|(_, l)| l.clone()).collect();
    let right_rows: Vec<DVector<f64>> =
        e.a_plus.iter().zip(&e.l_plus).filter(|(a, _)| **a > 0.0).map(|(_, l)| l.clone()).collect();
    let kl = left_rows.len();
    let mid = 0.5 * (m.u_minus[0] + m.u_plus[0]);
    // Hermite phase condition on the cell containing x = 0.
    let s0 = (0.0 - grid.x_min) / h;
    let jp = (s0.floor() as usize).min(nodes - 2);
    let tp = s0 - jp as f64;
    let (t2, t3) = (tp * tp, tp * tp * tp);
    let hw = [2.0 * t3 - 3.0 * t2 + 1.0, h * (t3 - 2.0 * t2 + tp), -2.0 * t3 + 3.0 * t2, h * (t3 - t2)];
    // Row layout: left BCs, boxes 0..jp-1, phase, boxes jp.., right BCs.
    let box_row = |i: usize| kl + n * i + usize::from(i >= jp);
    let phase_row = kl + n * jp;
    let total = n * nodes;

    let residual = |u: &[f64]| -> Vec<f64> {
        let mut r = vec![0.0; total];
        let node = |i: usize| &u[n * i..n * i + n];
        let um = node(0);
        for (k, l) in left_rows.iter().enumerate() {
            r[k] = (0..n).map(|c| l[c] * (um[c] - m.u_minus[c])).sum();
        }
        let fvals: Vec<DVector<f64>> = (0..nodes).map(|i| rhs(m, node(i), &fm)).collect();
        let gvals: Vec<DVector<f64>> = (0..nodes).map(|i| m.df(node(i)) * &fvals[i]).collect();
        for i in 0..nodes - 1 {
            let row = box_row(i);
            for c in 0..n {
                r[row + c] = u[n * (i + 1) + c] - u[n * i + c] - 0.5 * h * (fvals[i][c] + fvals[i + 1][c])
                    + h * h / 12.0 * (gvals[i + 1][c] - gvals[i][c]);
            }
        }
        r[phase_row] =
            hw[0] * u[n * jp] + hw[1] * fvals[jp][0] + hw[2] * u[n * (jp + 1)] + hw[3] * fvals[jp + 1][0] - mid;
        let up = node(nodes - 1);
        for (k, l) in right_rows.iter().enumerate() {
            r[total - right_rows.len() + k] = (0..n).map(|c| l[c] * (up[c] - m.u_plus[c])).sum();
        }
        r
    };

    let jacobian = |u: &[f64]| -> Banded<f64> {
        let mut t: Vec<(usize, usize, f64)> = Vec::new();
        let node = |i: usize| &u[n * i..n * i + n];
        for (k, l) in left_rows.iter().enumerate() {
            for c in 0..n {
                t.push((k, c, l[c]));
            }
        }
        let jac: Vec<DMatrix<f64>> = (0..nodes).map(|i| m.df(node(i))).collect();
        let dg: Vec<DMatrix<f64>> = (0..nodes)
            .map(|i| {
                let f = rhs(m, node(i), &fm);
                let hess = m.d2f(node(i));
                let mut d = &jac[i] * &jac[i];
                for k in 0..n {
                    for j in 0..n {
                        d[(k, j)] += (0..n).map(|l| hess[k][(l, j)] * f[l]).sum::<f64>();
                    }
                }
                d
            })
            .collect();
        for i in 0..nodes - 1 {
            let row = box_row(i);
            for c in 0..n {
                for j in 0..n {
                    let id = if c == j { 1.0 } else { 0.0 };
                    let left = -id - 0.5 * h * jac[i][(c, j)] - h * h / 12.0 * dg[i][(c, j)];
                    let right = id - 0.5 * h * jac[i + 1][(c, j)] + h * h / 12.0 * dg[i + 1][(c, j)];
                    t.push((row + c, n * i + j, left));
                    t.push((row + c, n * (i + 1) + j, right));
                }
            }
        }
        for j in 0..n {
            let id = if j == 0 { 1.0 } else { 0.0 };
            t.push((phase_row, n * jp + j, hw[0] * id + hw[1] * jac[jp][(0, j)]));
            t.push((phase_row, n * (jp + 1) + j, hw[2] * id + hw[3] * jac[jp + 1][(0, j)]));
        }
        for (k, l) in right_rows.iter().enumerate() {
            for c in 0..n {
                t.push((total - right_rows.len() + k, n * (nodes - 1) + c, l[c]));
            }
        }
        Banded::from_triplets(total, &t)
    };

    let p = lax.p_hyperbolic - 1;
    let width = 4.0 / (e.a_minus[p] - e.a_plus[p]).abs().max(1e-3);
    let mut guess = Vec::with_capacity(total);
    for i in 0..nodes {
        let w = 0.5 * (1.0 + (grid.x(i) / width).tanh());
        guess.extend((0..n).map(|c| m.u_minus[c] + (m.u_plus[c] - m.u_minus[c]) * w));
    }
    let scale = 1.0 + m.u_minus.amax().max(m.u_plus.amax());
    let u = damped_newton(guess, residual, jacobian, 1e-13 * scale * h, "box scheme")?;

    let ubar = DMatrix::from_column_slice(n, nodes, &u);
    let mut ubar_x = DMatrix::zeros(n, nodes);
    for i in 0..nodes {
        ubar_x.set_column(i, &rhs(m, ubar.column(i).as_slice(), &fm));
    }
    let r = residual(&u);
    let residual_sup = r.iter().fold(0.0_f64, |a, v| a.max(v.abs())) / h;
    let tail = (ubar.column(0) - &m.u_minus).amax().max((ubar.column(nodes - 1) - &m.u_plus).amax());
    let tol = 1e-6 * scale;
    if tail > tol {
        return Err(Error::GridTooShort { tail, tol });
    }
    let (theta_hat, tail_fit_error) = fit_tails(grid, &ubar_x)?;
    Ok(Profile {
        grid: *grid,
        u_minus: m.u_minus.clone(),
        u_plus: m.u_plus.clone(),
        ubar,
        ubar_x,
        theta_hat,
        tail_fit_error,
        residual_sup,
        phase_source: 0.0,
    })
}

/// Solves the stationary equation `D2 u + F_h(u) + s e_* = 0` of the time
/// stepping scheme, with the boundary nodes fixed to `guess`'s end values and
/// one phase condition balanced by the scalar source `s` at the node nearest
/// `x = 0`. For fronts the phase pins `u_1(0)` to the midpoint of the end
/// states; for pulses (`u_- = u_+`) it pins `u_1'(0) = 0`.
pub fn discrete_steady_state(pde: &Pde, grid: &Grid1D, guess: &DMatrix<f64>) -> Result<Profile> {
    let n = pde.dim();
    let nodes = grid.m;
    if guess.nrows() != n || guess.ncols() != nodes {
        return Err(Error::DimensionMismatch { expected: n * nodes, got: guess.len() });
    }
    if nodes < 6 {
        return Err(Error::Config("steady-state grid needs at least 6 nodes".into()));
    }
    let (um, up) = (pde.u_minus(), pde.u_plus());
    let pulse = (&um - &up).amax() < 1e-14;
    let phase = lagrange4(grid, 0.0, pulse);
    let target = if pulse { 0.0 } else { 0.5 * (um[0] + up[0]) };
    let i0 = grid.nearest(0.0).clamp(1, nodes - 2);
    // Unknowns: interior nodes 1..m-2 with `s` inserted after node i0.
    let col = |i: usize, c: usize| n * (i - 1) + c + usize::from(i > i0);
    let s_col = n * i0;
    let row = |i: usize, c: usize| n * (i - 1) + c + usize::from(i > i0);
    let phase_row = n * i0;
    let total = n * (nodes - 2) + 1;
    let boundary: Vec<f64> = guess.column(0).iter().chain(guess.column(nodes - 1).iter()).copied().collect();

    let unpack = |x: &[f64]| -> (Vec<f64>, f64) {
        let mut u = vec![0.0; n * nodes];
        u[..n].copy_from_slice(&boundary[..n]);
        u[n * (nodes - 1)..].copy_from_slice(&boundary[n..]);
        for i in 1..nodes - 1 {
            for c in 0..n {
                u[n * i + c] = x[col(i, c)];
            }
        }
        (u, x[s_col])
    };
    let residual = |x: &[f64]| -> Vec<f64> {
        let (u, s) = unpack(x);
        let r = steady_residual(pde, grid, &u);
        let mut out = vec![0.0; total];
        for i in 1..nodes - 1 {
            for c in 0..n {
                out[row(i, c)] = r[n * i + c];
            }
        }
        out[row(i0, 0)] += s;
        out[phase_row] = phase.iter().map(|&(j, w)| w * u[n * j]).sum::<f64>() - target;
        out
    };
    let h2 = grid.h() * grid.h();
    let jacobian = |x: &[f64]| -> Banded<f64> {
        let (u, _) = unpack(x);
        let mut t = Vec::new();
        for i in 1..nodes - 1 {
            let blocks = pde.explicit_blocks(grid, &u, i);
            for (k, blk) in blocks.iter().enumerate() {
                let j = i + k - 1;
                if j == 0 || j == nodes - 1 {
                    continue;
                }
                let d2 = if k == 1 { -2.0 / h2 } else { 1.0 / h2 };
                for c in 0..n {
                    for cc in 0..n {
                        let v = blk[(c, cc)] + if c == cc { d2 } else { 0.0 };
                        t.push((row(i, c), col(j, cc), v));
                    }
                }
            }
        }
        t.push((row(i0, 0), s_col, 1.0));
        for &(j, w) in &phase {
            if j > 0 && j < nodes - 1 {
                t.push((phase_row, col(j, 0), w));
            }
        }
        Banded::from_triplets(total, &t)
    };
    let mut x0 = vec![0.0; total];
    for i in 1..nodes - 1 {
        for c in 0..n {
            x0[col(i, c)] = guess[(c, i)];
        }
    }
    let scale = 1.0 + um.amax().max(up.amax()).max(guess.amax());
    let x = damped_newton(x0, residual, jacobian, 1e-12 * scale, "discrete steady state")?;
    let (u, s) = unpack(&x);
    let ubar = DMatrix::from_column_slice(n, nodes, &u);
    let ubar_x = match pde {
        Pde::Conservation(m) => {
            let fm = m.f(m.u_minus.as_slice());
            let mut d = DMatrix::zeros(n, nodes);
            for i in 0..nodes {
                d.set_column(i, &rhs(m, ubar.column(i).as_slice(), &fm));
            }
            d
        }
        Pde::Semilinear(_) => fourth_order_derivative(grid, &ubar),
    };
    let r = residual(&x);
    let residual_sup = r.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let (theta_hat, tail_fit_error) = fit_tails(grid, &ubar_x)?;
    Ok(Profile {
        grid: *grid,
        u_minus: um,
        u_plus: up,
        ubar,
        ubar_x,
        theta_hat,
        tail_fit_error,
        residual_sup,
        phase_source: s,
    })
}

/// Fourth-order finite-difference derivative (one-sided at the ends).
fn fourth_order_derivative(grid: &Grid1D, u: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = u.shape();
    let h = grid.h();
    let mut d = DMatrix::zeros(n, m);
    for i in 0..m {
        for c in 0..n {
            let v = |k: usize| u[(c, k)];
            d[(c, i)] = if i >= 2 && i + 2 < m {
                (v(i - 2) - 8.0 * v(i - 1) + 8.0 * v(i + 1) - v(i + 2)) / (12.0 * h)
            } else if i < 2 {
                (-25.0 * v(i) + 48.0 * v(i + 1) - 36.0 * v(i + 2) + 16.0 * v(i + 3) - 3.0 * v(i + 4)) / (12.0 * h)
            } else {
                (25.0 * v(i) - 48.0 * v(i - 1) + 36.0 * v(i - 2) - 16.0 * v(i - 3) + 3.0 * v(i - 4)) / (12.0 * h)
            };
        }
    }
    d
}

/// The discrete steady state of the flux-differenced scheme, started from the
/// box-scheme profile.
pub fn conservation_background(m: &FluxModel, grid: &Grid1D) -> Result<Profile> {
    let ode = solve_profile_conservation(m, grid)?;
    discrete_steady_state(&Pde::Conservation(m.clone()), grid, &ode.ubar)
}

/// Solves for the standing pulse or front of a semilinear model.
pub fn solve_profile_semilinear(model: &SemilinearModel, grid: &Grid1D, guess: Option<&DMatrix<f64>>) -> Result<Profile> {
    let owned;
    let guess = match (guess, model) {
        (Some(g), _) => g,
        (None, SemilinearModel::CubicPulse { kappa }) => {
            owned = DMatrix::from_fn(1, grid.m, |_, i| kappa / (kappa * grid.x(i)).cosh());
            &owned
        }
        (None, SemilinearModel::Conservation(m)) => {
            owned = solve_profile_conservation(m, grid)?.ubar;
            &owned
        }
    };
    discrete_steady_state(&Pde::Semilinear(model.clone()), grid, guess)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TransversalityReport {
    /// Smallest principal angle between the transported unstable and stable
    /// subspaces after quotienting out `ubar_x(0)`; `pi/2` when a quotient is
    /// trivial.
    pub angle: f64,
    pub is_transversal: bool,
    /// Distance of the unit vector along `ubar_x(0)` from each transported subspace.
    pub connection_defect: f64,
    pub dim_unstable: usize,
    pub dim_stable: usize,
}

fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.ncols() == 0 {
        return m.clone();
    }
    m.clone().qr().q()
}

/// Transports `basis` along `w' = df(ubar(x)) w` from `x_from` to `x_to` with
/// RK4 steps of size at most `step`, re-orthonormalizing after every step.
pub fn transport_subspace(
    m: &FluxModel,
    p: &Profile,
    basis: &DMatrix<f64>,
    x_from: f64,
    x_to: f64,
    step: f64,
) -> DMatrix<f64> {
    let steps = ((x_to - x_from).abs() / step).ceil().max(1.0) as usize;
    let dx = (x_to - x_from) / steps as f64;
    let a = |x: f64| m.df(p.eval(x).0.as_slice());
    let mut w = orthonormalize(basis);
    for k in 0..steps {
        let x = x_from + k as f64 * dx;
        let (a0, a1, a2) = (a(x), a(x + 0.5 * dx), a(x + dx));
        let k1 = &a0 * &w;
        let k2 = &a1 * (&w + &k1 * (0.5 * dx));
        let k3 = &a1 * (&w + &k2 * (0.5 * dx));
        let k4 = &a2 * (&w + &k3 * dx);
        w += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dx / 6.0);
        w = orthonormalize(&w);
    }
    w
}

/// Removes the direction `phi` from span(`basis`) and returns an orthonormal
/// basis of the quotient (one dimension less).
fn quotient(basis: &DMatrix<f64>, phi: &DVector<f64>) -> DMatrix<f64> {
    let k = basis.ncols();
    if k <= 1 {
        return DMatrix::zeros(basis.nrows(), 0);
    }
    let proj = basis - phi * (phi.transpose() * basis);
    let svd = proj.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    DMatrix::from_columns(&idx[..k - 1].iter().map(|&i| u.column(i).into_owned()).collect::<Vec<_>>())
}

pub fn check_transversality(m: &FluxModel, p: &Profile) -> Result<TransversalityReport> {
    check_transversality_with_step(m, p, p.grid.h())
}

pub fn check_transversality_with_step(m: &FluxModel, p: &Profile, step: f64) -> Result<TransversalityReport> {
    let e = EndpointData::compute(m)?;
    let (_, phi0) = p.eval(0.0);
    let scale = p.ubar_x.amax();
    if phi0.norm() <= 1e-10 * (1.0 + scale) || scale <= 1e-12 {
        return Err(Error::Degenerate("profile derivative vanishes at x = 0".into()));
    }
    let phi = phi0.normalize();
    let unstable: Vec<DVector<f64>> =
        e.a_minus.iter().zip(&e.r_minus).filter(|(a, _)| **a > 0.0).map(|(_, r)| r.clone()).collect();
    let stable: Vec<DVector<f64>> =
        e.a_plus.iter().zip(&e.r_plus).filter(|(a, _)| **a < 0.0).map(|(_, r)| r.clone()).collect();
    let u = transport_subspace(m, p, &DMatrix::from_columns(&unstable), p.grid.x_min, 0.0, step);
    let s = transport_subspace(m, p, &DMatrix::from_columns(&stable), p.grid.x_max, 0.0, step);
    let defect = |b: &DMatrix<f64>| (&phi - b * (b.transpose() * &phi)).norm();
    let connection_defect = defect(&u).max(defect(&s));
    let uq = quotient(&u, &phi);
    let sq = quotient(&s, &phi);
    let angle = if uq.ncols() == 0 || sq.ncols() == 0 {
        std::f64::consts::FRAC_PI_2
    } else {
        let sv = (uq.transpose() * &sq).singular_values();
        sv.max().clamp(-1.0, 1.0).acos()
    };
    if angle < 1e-6 {
        return Err(Error::Degenerate(format!("unstable and stable subspaces share more than ubar_x (angle {angle:e})")));
    }
    Ok(TransversalityReport {
        angle,
        is_transversal: unstable.len() + stable.len() == m.dim() + 1,
        connection_defect,
        dim_unstable: unstable.len(),
        dim_stable: stable.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_eval_hits_nodes() {
        let m = FluxModel::burgers(1.0, -1.0);
        let g = Grid1D::new(-20.0, 20.0, 401).unwrap();
        let p = solve_profile_conservation(&m, &g).unwrap();
        let (u, ux) = p.eval(g.x(37));
        assert!((u[0] - p.ubar[(0, 37)]).abs() < 1e-14);
        assert!((ux[0] - p.ubar_x[(0, 37)]).abs() < 1e-14);
    }
}
