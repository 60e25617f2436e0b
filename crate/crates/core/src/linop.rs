//! Discrete linearized operators `L v = v_xx + dF(ubar) v`, the orthogonal
//! projections onto the translation mode, the reduced operator
//! `L0 = P1 L P1` on the orthogonal complement, and semigroup actions.
//!
//! Unknowns are interior nodes only (homogeneous Dirichlet perturbations),
//! node-major. The inner product is `<a, b> = h a.b`, which is the trapezoid
//! rule for grid functions vanishing at the ends; adjoints are transposes.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::banded::{Banded, BandedLu};
use crate::disc::Pde;
use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::profile::Profile;

/// Which orthogonal projection to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    /// `P1 = I - P2`.
    One,
    /// `P2 = phi <phi, .> / |phi|^2`.
    Two,
}

#[derive(Debug, Clone)]
pub struct LinearizedOperator {
    pub grid: Grid1D,
    /// Number of components per node.
    pub n: usize,
    matrix: Banded<f64>,
    /// `ubar_x` sampled at the interior nodes.
    pub phi_sampled: Option<DVector<f64>>,
    /// The discrete translation eigenvector, scaled to match `phi_sampled`.
    /// The projections are built from this vector.
    pub phi: Option<DVector<f64>>,
    /// Eigenvalue of `phi` (zero up to truncation effects).
    pub zero_eigenvalue: f64,
    /// `|phi|^2` in the discrete inner product.
    pub pi2_coeff: f64,
    pub conservative: bool,
}

impl LinearizedOperator {
    fn interior_dim(grid: &Grid1D, n: usize) -> usize {
        n * (grid.m - 2)
    }

    /// Linearization of the discrete scheme of `pde` about `p.ubar`.
    pub fn assemble(pde: &Pde, p: &Profile) -> Result<Self> {
        let n = pde.dim();
        let grid = p.grid;
        let m = grid.m;
        let u = p.flat();
        let h2 = grid.h() * grid.h();
        let mut t = Vec::new();
        for i in 1..m - 1 {
            let blocks = pde.explicit_blocks(&grid, &u, i);
            for (k, blk) in blocks.iter().enumerate() {
                let j = i + k - 1;
                if j == 0 || j == m - 1 {
                    continue;
                }
                let d2 = if k == 1 { -2.0 / h2 } else { 1.0 / h2 };
                for c in 0..n {
                    for cc in 0..n {
                        let v = blk[(c, cc)] + if c == cc { d2 } else { 0.0 };
                        if v != 0.0 || c == cc {
                            t.push((n * (i - 1) + c, n * (j - 1) + cc, v));
                        }
                    }
                }
            }
        }
        let matrix = Banded::from_triplets(Self::interior_dim(&grid, n), &t);
        let phi_sampled = DVector::from_column_slice(&p.flat_x()[n..n * (m - 1)]);
        let mut op = Self {
            grid,
            n,
            matrix,
            phi_sampled: None,
            phi: None,
            zero_eigenvalue: 0.0,
            pi2_coeff: 0.0,
            conservative: pde.is_conservative(),
        };
        op.attach_translation_mode(phi_sampled)?;
        Ok(op)
    }

    /// Generic operator from a banded matrix on interior unknowns.
    pub fn from_banded(grid: Grid1D, n: usize, matrix: Banded<f64>) -> Result<Self> {
        let dim = Self::interior_dim(&grid, n);
        if matrix.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: matrix.dim() });
        }
        Ok(Self {
            grid,
            n,
            matrix,
            phi_sampled: None,
            phi: None,
            zero_eigenvalue: 0.0,
            pi2_coeff: 0.0,
            conservative: false,
        })
    }

    /// Scalar `L = d_xx + b(x) d_x + c(x)`.
    pub fn scalar(grid: Grid1D, drift: impl Fn(f64) -> f64, potential: impl Fn(f64) -> f64) -> Self {
        let m = grid.m;
        let h = grid.h();
        let mut t = Vec::new();
        for i in 1..m - 1 {
            let x = grid.x(i);
            let b = drift(x);
            let r = i - 1;
            if i > 1 {
                t.push((r, r - 1, 1.0 / (h * h) - b / (2.0 * h)));
            }
            t.push((r, r, -2.0 / (h * h) + potential(x)));
            if i < m - 2 {
                t.push((r, r + 1, 1.0 / (h * h) + b / (2.0 * h)));
            }
        }
        Self::from_banded(grid, 1, Banded::from_triplets(m - 2, &t)).expect("dimensions match by construction")
    }

    /// Divergence form `L v = v_xx - (A(x) v)_x`, differenced like the flux
    /// term of a conservation law.
    pub fn divergence_form(grid: Grid1D, n: usize, a: impl Fn(f64) -> DMatrix<f64>) -> Self {
        let m = grid.m;
        let h = grid.h();
        let mut t = Vec::new();
        for i in 1..m - 1 {
            let al = a(grid.x(i - 1));
            let ar = a(grid.x(i + 1));
            for c in 0..n {
                let r = n * (i - 1) + c;
                t.push((r, r, -2.0 / (h * h)));
                if i > 1 {
                    t.push((r, r - n, 1.0 / (h * h)));
                }
                if i < m - 2 {
                    t.push((r, r + n, 1.0 / (h * h)));
                }
                for cc in 0..n {
                    if i > 1 {
                        t.push((r, n * (i - 2) + cc, al[(c, cc)] / (2.0 * h)));
                    }
                    if i < m - 2 {
                        t.push((r, n * i + cc, -ar[(c, cc)] / (2.0 * h)));
                    }
                }
            }
        }
        let mut op = Self::from_banded(grid, n, Banded::from_triplets(n * (m - 2), &t)).expect("dimensions match");
        op.conservative = true;
        op
    }

    /// Constant-coefficient `L v = v_xx - A v_x`.
    pub fn constant_coefficient(grid: Grid1D, a: &DMatrix<f64>) -> Self {
        Self::divergence_form(grid, a.nrows(), |_| a.clone())
    }

    /// Registers `phi_sampled` and replaces it by the nearby discrete
    /// eigenvector (inverse iteration at the origin) for the projections.
    pub fn attach_translation_mode(&mut self, phi_sampled: DVector<f64>) -> Result<()> {
        if phi_sampled.len() != self.dim() {
            return Err(Error::GridMismatch(format!("phi has {} entries, operator {}", phi_sampled.len(), self.dim())));
        }
        let norm2 = self.inner(&phi_sampled, &phi_sampled);
        if norm2 <= 0.0 {
            return Err(Error::Degenerate("translation mode vanishes".into()));
        }
        let mut x = phi_sampled.clone();
        let mut lambda = 0.0;
        if let Ok(lu) = self.matrix.lu() {
            for _ in 0..4 {
                let y = DVector::from_vec(lu.solve(x.as_slice()));
                let scale = self.inner(&y, &phi_sampled) / norm2;
                if !scale.is_finite() || scale == 0.0 {
                    break;
                }
                x = y / scale;
            }
            let lx = self.apply(&x);
            lambda = self.inner(&x, &lx) / self.inner(&x, &x);
        }
        let cos = self.inner(&x, &phi_sampled) / (self.inner(&x, &x) * norm2).sqrt();
        if cos < 1.0 - 1e-3 {
            // Inverse iteration converged elsewhere; fall back to the sample.
            x = phi_sampled.clone();
            lambda = self.inner(&x, &self.apply(&x)) / norm2;
        }
        self.pi2_coeff = self.inner(&x, &x);
        self.phi = Some(x);
        self.phi_sampled = Some(phi_sampled);
        self.zero_eigenvalue = lambda;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn banded(&self) -> &Banded<f64> {
        &self.matrix
    }

    pub fn h(&self) -> f64 {
        self.grid.h()
    }

    pub fn inner(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        self.h() * a.dot(b)
    }

    pub fn norm(&self, a: &DVector<f64>) -> f64 {
        self.inner(a, a).sqrt()
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.matrix.mul_vec(v.as_slice()))
    }

    /// Adjoint with respect to the discrete inner product, i.e. the transpose.
    pub fn apply_adjoint(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.matrix.mul_vec_transpose(v.as_slice()))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.matrix.to_dense()
    }

    /// `L + sigma I`.
    pub fn shifted(&self, sigma: f64) -> Self {
        Self { matrix: self.matrix.scale_shift(1.0, sigma), zero_eigenvalue: self.zero_eigenvalue + sigma, ..self.clone() }
    }

    /// `|L ubar_x| / |ubar_x|` for the sampled derivative.
    pub fn zero_mode_residual(&self) -> Option<f64> {
        let phi = self.phi_sampled.as_ref()?;
        Some(self.norm(&self.apply(phi)) / self.norm(phi))
    }

    /// `<1, L v>`: for divergence-form operators only boundary fluxes remain.
    pub fn mass_defect(&self, v: &DVector<f64>) -> DVector<f64> {
        let lv = self.apply(v);
        let mut s = DVector::zeros(self.n);
        for (k, x) in lv.iter().enumerate() {
            s[k % self.n] += self.h() * x;
        }
        s
    }

    fn check_len(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("vector has {} entries, operator {}", v.len(), self.dim())))
        }
    }

    /// `pi2 v = <phi, v>/|phi|^2`, so that `P2 v = phi pi2(v)`.
    pub fn pi2(&self, v: &DVector<f64>) -> Result<f64> {
        self.check_len(v)?;
        let phi = self.phi.as_ref().ok_or_else(|| Error::Degenerate("operator has no translation mode".into()))?;
        Ok(self.inner(phi, v) / self.pi2_coeff)
    }

    pub fn project(&self, v: &DVector<f64>, which: Which) -> Result<DVector<f64>> {
        let c = self.pi2(v)?;
        let phi = self.phi.as_ref().expect("checked by pi2");
        Ok(match which {
            Which::Two => phi * c,
            Which::One => v - phi * c,
        })
    }

    /// `e^{tL} v0` by SDIRK4 with step-halving certification.
    pub fn semigroup_apply(&self, v0: &DVector<f64>, t: f64) -> Result<SemigroupResult<DVector<f64>>> {
        self.check_len(v0)?;
        let r = semigroup_certified(
            |dt| {
                let a = self.matrix.scale_shift(-SDIRK_GAMMA * dt, 1.0);
                let lu = a.lu().map_err(|e| Error::NonConvergence(format!("implicit stage: {e}")))?;
                Ok(BandedSolver(lu))
            },
            &DMatrix::from_column_slice(v0.len(), 1, v0.as_slice()),
            t,
            SemigroupOptions::default(),
        )?;
        Ok(r.first_column())
    }

    /// `e^{tL}` applied to every column of `v0`.
    pub fn semigroup_apply_many(&self, v0: &DMatrix<f64>, t: f64, opts: SemigroupOptions) -> Result<SemigroupResult<DMatrix<f64>>> {
        if v0.nrows() != self.dim() {
            return Err(Error::GridMismatch(format!("{} rows vs operator {}", v0.nrows(), self.dim())));
        }
        semigroup_certified(
            |dt| {
                let a = self.matrix.scale_shift(-SDIRK_GAMMA * dt, 1.0);
                let lu = a.lu().map_err(|e| Error::NonConvergence(format!("implicit stage: {e}")))?;
                Ok(BandedSolver(lu))
            },
            v0,
            t,
            opts,
        )
    }

    /// Factorization of `I - gamma dt L` for repeated SDIRK steps.
    pub fn stage_solver(&self, dt: f64) -> Result<BandedSolver> {
        let a = self.matrix.scale_shift(-SDIRK_GAMMA * dt, 1.0);
        Ok(BandedSolver(a.lu().map_err(|e| Error::NonConvergence(format!("implicit stage: {e}")))?))
    }

    pub fn reduced(&self) -> Result<ReducedOperator> {
        ReducedOperator::new(self)
    }

    /// Writes the matrix in Matrix Market coordinate format.
    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let n = self.dim();
        let mut entries = Vec::new();
        for i in 0..n {
            for j in self.matrix.row_range(i) {
                let v = self.matrix.get(i, j);
                if v != 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        writeln!(f, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(f, "% discrete linearized operator, h = {}", self.h())?;
        writeln!(f, "{n} {n} {}", entries.len())?;
        for (i, j, v) in entries {
            writeln!(f, "{} {} {:.17e}", i + 1, j + 1, v)?;
        }
        Ok(())
    }
}

/// `L0 = P1 L P1` written in an orthonormal basis of `phi`'s complement.
///
/// The basis is the last `N-1` columns of the Householder reflector that maps
/// `phi/|phi|` to the first unit vector.
#[derive(Debug, Clone)]
pub struct ReducedOperator {
    pub matrix: DMatrix<f64>,
    householder: DVector<f64>,
    pub grid: Grid1D,
}

impl ReducedOperator {
    pub fn new(op: &LinearizedOperator) -> Result<Self> {
        let phi = op.phi.as_ref().ok_or_else(|| Error::Degenerate("operator has no translation mode".into()))?;
        let n = op.dim();
        let mut v = phi.normalize();
        // Reflect phi onto -sign(phi_0) e_0 for stability.
        let s = if v[0] >= 0.0 { 1.0 } else { -1.0 };
        v[0] += s;
        let v = v.normalize();
        let mut red = Self { matrix: DMatrix::zeros(n - 1, n - 1), householder: v, grid: op.grid };
        for j in 0..n - 1 {
            let mut e = DVector::zeros(n - 1);
            e[j] = 1.0;
            let q = red.embed(&e);
            let col = red.restrict(&op.apply(&q));
            red.matrix.set_column(j, &col);
        }
        Ok(red)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn reflect(&self, y: &DVector<f64>) -> DVector<f64> {
        let c = 2.0 * self.householder.dot(y);
        y - &self.householder * c
    }

    /// Coordinates in the complement of `phi` to a grid function.
    pub fn embed(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(x.len() + 1);
        y.rows_mut(1, x.len()).copy_from(x);
        self.reflect(&y)
    }

    /// Grid function to complement coordinates (drops the `phi` component).
    pub fn restrict(&self, y: &DVector<f64>) -> DVector<f64> {
        let r = self.reflect(y);
        r.rows(1, r.len() - 1).into_owned()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }

    pub fn eigenvalues(&self) -> Vec<num_complex::Complex64> {
        self.matrix.complex_eigenvalues().iter().copied().collect()
    }

    /// `e^{t L0}` on each column of `x0` (complement coordinates).
    pub fn semigroup_apply_many(&self, x0: &DMatrix<f64>, t: f64, opts: SemigroupOptions) -> Result<SemigroupResult<DMatrix<f64>>> {
        if x0.nrows() != self.dim() {
            return Err(Error::GridMismatch(format!("{} rows vs reduced dimension {}", x0.nrows(), self.dim())));
        }
        semigroup_certified(
            |dt| {
                let a = DMatrix::identity(self.dim(), self.dim()) - &self.matrix * (SDIRK_GAMMA * dt);
                Ok(DenseSolver(a.lu()))
            },
            x0,
            t,
            opts,
        )
    }

    pub fn semigroup_apply(&self, x0: &DVector<f64>, t: f64) -> Result<SemigroupResult<DVector<f64>>> {
        let r = self.semigroup_apply_many(&DMatrix::from_column_slice(x0.len(), 1, x0.as_slice()), t, SemigroupOptions::default())?;
        Ok(r.first_column())
    }
}

/// Solver for `(I - gamma dt L) X = B`, column by column.
pub trait StageSolver {
    fn solve_in_place(&self, b: &mut DMatrix<f64>);
}

pub struct BandedSolver(pub BandedLu<f64>);

impl StageSolver for BandedSolver {
    fn solve_in_place(&self, b: &mut DMatrix<f64>) {
        for mut col in b.column_iter_mut() {
            self.0.solve_in_place(col.as_mut_slice());
        }
    }
}

pub struct DenseSolver(pub nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>);

impl StageSolver for DenseSolver {
    fn solve_in_place(&self, b: &mut DMatrix<f64>) {
        assert!(self.0.solve_mut(b), "singular implicit stage matrix");
    }
}

/// Diagonal coefficient of the L-stable SDIRK4 method (Hairer–Wanner, Table IV.6.5).
pub const SDIRK_GAMMA: f64 = 0.25;

const SDIRK_A: [[f64; 4]; 5] = [
    [0.0, 0.0, 0.0, 0.0],
    [0.5, 0.0, 0.0, 0.0],
    [17.0 / 50.0, -1.0 / 25.0, 0.0, 0.0],
    [371.0 / 1360.0, -137.0 / 2720.0, 15.0 / 544.0, 0.0],
    [25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0],
];

pub const SDIRK_C: [f64; 5] = [0.25, 0.75, 11.0 / 20.0, 0.5, 1.0];

/// One SDIRK4 step of `y' = L y + g(t)`; `solver` factors `I - gamma dt L`.
/// The method is stiffly accurate, so the last stage is the new state.
pub fn sdirk_step(
    solver: &dyn StageSolver,
    y: &DMatrix<f64>,
    dt: f64,
    forcing: Option<&dyn Fn(usize) -> DMatrix<f64>>,
) -> DMatrix<f64> {
    let mut ks: Vec<DMatrix<f64>> = Vec::with_capacity(5);
    let mut stage = y.clone();
    for (i, row) in SDIRK_A.iter().enumerate() {
        let mut rhs = y.clone();
        for (j, k) in ks.iter().enumerate() {
            rhs += k * (dt * row[j]);
        }
        let mut yi = rhs.clone();
        if let Some(g) = forcing {
            yi += g(i) * (SDIRK_GAMMA * dt);
        }
        solver.solve_in_place(&mut yi);
        ks.push((&yi - &rhs) / (SDIRK_GAMMA * dt));
        stage = yi;
    }
    stage
}

#[derive(Debug, Clone, Copy)]
pub struct SemigroupOptions {
    /// Largest first-try step.
    pub dt0: f64,
    /// Relative tolerance of the step-halving certificate.
    pub tol: f64,
    pub max_halvings: usize,
}

impl Default for SemigroupOptions {
    fn default() -> Self {
        Self { dt0: 0.05, tol: 1e-6, max_halvings: 8 }
    }
}

#[derive(Debug, Clone)]
pub struct SemigroupResult<T> {
    pub value: T,
    /// Estimated relative error (difference to the half-step run).
    pub error_estimate: f64,
    pub steps: usize,
}

impl SemigroupResult<DMatrix<f64>> {
    fn first_column(self) -> SemigroupResult<DVector<f64>> {
        SemigroupResult { value: self.value.column(0).into_owned(), error_estimate: self.error_estimate, steps: self.steps }
    }
}

fn propagate(solver: &dyn StageSolver, y0: &DMatrix<f64>, steps: usize, dt: f64) -> DMatrix<f64> {
    let mut y = y0.clone();
    for _ in 0..steps {
        y = sdirk_step(solver, &y, dt, None);
    }
    y
}

/// Runs with `n` and `2n` steps until the two agree to `tol` (relative).
pub fn semigroup_certified<S: StageSolver>(
    factor: impl Fn(f64) -> Result<S>,
    y0: &DMatrix<f64>,
    t: f64,
    opts: SemigroupOptions,
) -> Result<SemigroupResult<DMatrix<f64>>> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::DomainError(format!("semigroup time must be nonnegative, got {t}")));
    }
    if t == 0.0 {
        return Ok(SemigroupResult { value: y0.clone(), error_estimate: 0.0, steps: 0 });
    }
    let mut n = (t / opts.dt0).ceil().max(1.0) as usize;
    let mut coarse = propagate(&factor(t / n as f64)?, y0, n, t / n as f64);
    for _ in 0..opts.max_halvings {
        let fine = propagate(&factor(t / (2 * n) as f64)?, y0, 2 * n, t / (2 * n) as f64);
        let scale = fine.norm().max(1e-300 * y0.norm()).max(f64::MIN_POSITIVE);
        // SDIRK4: fine-run error is about |coarse - fine| / 15.
        let err = (&coarse - &fine).norm() / scale / 15.0;
        n *= 2;
        if err <= opts.tol || fine.norm() == 0.0 {
            return Ok(SemigroupResult { value: fine, error_estimate: err, steps: n });
        }
        coarse = fine;
    }
    Err(Error::NonConvergence(format!("semigroup step halving did not reach tolerance {:e}", opts.tol)))
}

/// Propagates `y' = L y + g(t)` over a uniform grid of `steps` intervals of
/// size `dt`, returning the state at every grid time; `g` is evaluated at
/// arbitrary times.
pub fn forced_trajectory(
    solver: &dyn StageSolver,
    y0: &DMatrix<f64>,
    t0: f64,
    dt: f64,
    steps: usize,
    g: &dyn Fn(f64) -> DMatrix<f64>,
) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut y = y0.clone();
    out.push(y.clone());
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        let forcing = |i: usize| g(t + SDIRK_C[i] * dt);
        y = sdirk_step(solver, &y, dt, Some(&forcing));
        out.push(y.clone());
    }
    out
}
