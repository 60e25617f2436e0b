//! Second-order finite differences shared by the steady-state solver, the
//! linearized operator and the time integrators, so that all three see the
//! same discrete PDE.
//!
//! States are node-major: component `c` of node `i` lives at `n * i + c`.

use nalgebra::{DMatrix, DVector};

use crate::grid::Grid1D;
use crate::model::{FluxModel, SemilinearModel};

/// The PDE being discretized.
#[derive(Debug, Clone, PartialEq)]
pub enum Pde {
    /// `u_t = u_xx - f(u)_x`, flux-differenced.
    Conservation(FluxModel),
    /// `u_t = u_xx + h(u, u_x)`.
    Semilinear(SemilinearModel),
}

impl Pde {
    pub fn dim(&self) -> usize {
        match self {
            Self::Conservation(m) => m.dim(),
            Self::Semilinear(m) => m.dim(),
        }
    }

    pub fn u_minus(&self) -> DVector<f64> {
        match self {
            Self::Conservation(m) => m.u_minus.clone(),
            Self::Semilinear(m) => m.u_minus(),
        }
    }

    pub fn u_plus(&self) -> DVector<f64> {
        match self {
            Self::Conservation(m) => m.u_plus.clone(),
            Self::Semilinear(m) => m.u_plus(),
        }
    }

    pub fn is_conservative(&self) -> bool {
        matches!(self, Self::Conservation(_))
    }

    /// Non-diffusive part of the right-hand side at interior nodes; boundary
    /// entries are zero.
    pub fn explicit_rhs(&self, grid: &Grid1D, u: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let m = grid.m;
        let h = grid.h();
        let mut out = vec![0.0; n * m];
        match self {
            Self::Conservation(model) => {
                let fl: Vec<DVector<f64>> = (0..m).map(|i| model.f(&u[n * i..n * i + n])).collect();
                for i in 1..m - 1 {
                    for c in 0..n {
                        out[n * i + c] = -(fl[i + 1][c] - fl[i - 1][c]) / (2.0 * h);
                    }
                }
            }
            Self::Semilinear(model) => {
                for i in 1..m - 1 {
                    let ux: Vec<f64> = (0..n).map(|c| (u[n * (i + 1) + c] - u[n * (i - 1) + c]) / (2.0 * h)).collect();
                    let hv = model.h(&u[n * i..n * i + n], &ux);
                    out[n * i..n * i + n].copy_from_slice(hv.as_slice());
                }
            }
        }
        out
    }

    /// Jacobian blocks of [`Pde::explicit_rhs`] at interior node `i` with
    /// respect to nodes `i-1`, `i`, `i+1`.
    pub fn explicit_blocks(&self, grid: &Grid1D, u: &[f64], i: usize) -> [DMatrix<f64>; 3] {
        let n = self.dim();
        let h = grid.h();
        match self {
            Self::Conservation(model) => [
                model.df(&u[n * (i - 1)..n * i]) / (2.0 * h),
                DMatrix::zeros(n, n),
                -model.df(&u[n * (i + 1)..n * (i + 2)]) / (2.0 * h),
            ],
            Self::Semilinear(model) => {
                let ux: Vec<f64> = (0..n).map(|c| (u[n * (i + 1) + c] - u[n * (i - 1) + c]) / (2.0 * h)).collect();
                let ui = &u[n * i..n * i + n];
                let b = model.dh_dux(ui, &ux) / (2.0 * h);
                [-&b, model.dh_du(ui, &ux), b]
            }
        }
    }

    /// Quadratic remainder `F(ubar + v) - F(ubar) - dF(ubar) v` of the
    /// explicit part, i.e. the discrete nonlinearity in the perturbation
    /// equation (for conservation laws this is `D0 N(v)`).
    pub fn explicit_remainder(&self, grid: &Grid1D, ubar: &[f64], v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let m = grid.m;
        let w: Vec<f64> = ubar.iter().zip(v).map(|(a, b)| a + b).collect();
        let full = self.explicit_rhs(grid, &w);
        let base = self.explicit_rhs(grid, ubar);
        let mut out: Vec<f64> = full.iter().zip(&base).map(|(a, b)| a - b).collect();
        for i in 1..m - 1 {
            let blocks = self.explicit_blocks(grid, ubar, i);
            for (k, blk) in blocks.iter().enumerate() {
                let j = i + k - 1;
                let vj = DVector::from_column_slice(&v[n * j..n * j + n]);
                let lin = blk * vj;
                for c in 0..n {
                    out[n * i + c] -= lin[c];
                }
            }
        }
        out
    }
}

/// `(u_{i+1} - 2u_i + u_{i-1})/h^2` at interior nodes, zero at the ends.
pub fn laplacian(grid: &Grid1D, n: usize, u: &[f64]) -> Vec<f64> {
    let m = grid.m;
    let h2 = grid.h() * grid.h();
    let mut out = vec![0.0; n * m];
    for i in 1..m - 1 {
        for c in 0..n {
            out[n * i + c] = (u[n * (i + 1) + c] - 2.0 * u[n * i + c] + u[n * (i - 1) + c]) / h2;
        }
    }
    out
}

/// Full steady residual `u_xx + explicit part` at interior nodes.
pub fn steady_residual(pde: &Pde, grid: &Grid1D, u: &[f64]) -> Vec<f64> {
    let n = pde.dim();
    let lap = laplacian(grid, n, u);
    let ex = pde.explicit_rhs(grid, u);
    lap.iter().zip(&ex).map(|(a, b)| a + b).collect()
}

/// Weights of the cubic Lagrange interpolant (or its derivative) at `x0`
/// through the four nodes surrounding it.
pub fn lagrange4(grid: &Grid1D, x0: f64, derivative: bool) -> [(usize, f64); 4] {
    let h = grid.h();
    let s = (x0 - grid.x_min) / h;
    let j = (s.floor() as isize).clamp(1, grid.m as isize - 3) as usize;
    let nodes = [j - 1, j, j + 1, j + 2];
    let t = s - j as f64;
    let xs = [-1.0, 0.0, 1.0, 2.0];
    let mut out = [(0usize, 0.0); 4];
    for (a, &xa) in xs.iter().enumerate() {
        let denom: f64 = xs.iter().enumerate().filter(|(b, _)| *b != a).map(|(_, &xb)| xa - xb).product();
        let w = if derivative {
            let mut sum = 0.0;
            for b in (0..4).filter(|&b| b != a) {
                sum += (0..4).filter(|&c| c != a && c != b).map(|c| t - xs[c]).product::<f64>();
            }
            sum / denom / h
        } else {
            xs.iter().enumerate().filter(|(b, _)| *b != a).map(|(_, &xb)| t - xb).product::<f64>() / denom
        };
        out[a] = (nodes[a], w);
    }
    out
}

/// Centered difference of order `k` (0..=4) applied componentwise, one-sided
/// near the ends where the centered stencil does not fit.
pub fn difference(grid: &Grid1D, n: usize, u: &[f64], k: usize) -> Vec<f64> {
    let m = grid.m;
    let h = grid.h();
    // Standard centered stencils, shifted inward at the ends.
    let stencil: (&[f64], usize) = match k {
        0 => return u.to_vec(),
        1 => (&[-0.5, 0.0, 0.5], 1),
        2 => (&[1.0, -2.0, 1.0], 1),
        3 => (&[-0.5, 1.0, 0.0, -1.0, 0.5], 2),
        4 => (&[1.0, -4.0, 6.0, -4.0, 1.0], 2),
        _ => panic!("difference order {k} not supported"),
    };
    let (w, half) = stencil;
    let scale = h.powi(k as i32);
    let mut out = vec![0.0; n * m];
    for i in 0..m {
        let center = i.clamp(half, m - 1 - half);
        for c in 0..n {
            let mut s = 0.0;
            for (a, wa) in w.iter().enumerate() {
                s += wa * u[n * (center + a - half) + c];
            }
            out[n * i + c] = s / scale;
        }
    }
    out
}

/// Discrete `L^2` norm with the uniform-grid quadrature `h * sum`.
pub fn l2_norm(grid: &Grid1D, v: &[f64]) -> f64 {
    (grid.h() * v.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

pub fn l1_norm(grid: &Grid1D, v: &[f64]) -> f64 {
    grid.h() * v.iter().map(|x| x.abs()).sum::<f64>()
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

/// `sqrt(sum_{j<=order} |D^j v|_2^2)`.
pub fn sobolev_norm(grid: &Grid1D, n: usize, v: &[f64], order: usize) -> f64 {
    (0..=order).map(|k| l2_norm(grid, &difference(grid, n, v, k)).powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lagrange_reproduces_cubics() {
        let g = Grid1D::new(-1.0, 2.0, 31).unwrap();
        let p = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x * x;
        let dp = |x: f64| -2.0 + 1.5 * x * x;
        for x0 in [0.0, 0.123, 1.57] {
            let v: f64 = lagrange4(&g, x0, false).iter().map(|&(i, w)| w * p(g.x(i))).sum();
            let d: f64 = lagrange4(&g, x0, true).iter().map(|&(i, w)| w * p(g.x(i))).sum();
            assert!((v - p(x0)).abs() < 1e-12);
            assert!((d - dp(x0)).abs() < 1e-10);
        }
    }

    #[test]
    fn differences_are_exact_on_matching_polynomials() {
        let g = Grid1D::new(0.0, 1.0, 21).unwrap();
        let u: Vec<f64> = g.points().iter().map(|x| x.powi(4)).collect();
        let d4 = difference(&g, 1, &u, 4);
        assert!(d4.iter().all(|v| (v - 24.0).abs() < 1e-6));
        let d2 = difference(&g, 1, &u, 2);
        let x = g.x(10);
        assert!((d2[10] - (12.0 * x * x + 2.0 * g.h() * g.h())).abs() < 1e-9);
    }
}
