//! Unstable point spectrum of a discrete linearized operator, the associated
//! spectral projections `Pi_u`, `Pi_cs` and their antiderivative variants,
//! and an imaginary-axis scan for purely imaginary eigenvalues.
//!
//! The unstable subspace is found by subspace iteration with the Cayley
//! transform `C = (L - s)^{-1} (L + s)`, which maps `Re lambda > 0` outside the
//! unit circle and needs only banded solves. The left subspace comes from the
//! same iteration on the transpose.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::banded::Banded;
use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::linop::LinearizedOperator;

#[derive(Debug, Clone, Copy)]
pub struct SpectralOptions {
    /// Eigenvalues with `Re > re_cut` count as unstable.
    pub re_cut: f64,
    /// Initial block size of the subspace iteration.
    pub block: usize,
    /// Cayley shift; chosen from a numerical-range bound when `None`.
    pub sigma: Option<f64>,
    /// Relative invariant-subspace residual required for convergence.
    pub tol: f64,
    pub min_iter: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self { re_cut: 1e-6, block: 6, sigma: None, tol: 1e-10, min_iter: 60, max_iter: 4000, seed: 0x5eed }
    }
}

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub grid: Grid1D,
    pub n: usize,
    /// Number of eigenvalues with `Re > re_cut` (with multiplicity).
    pub p: usize,
    /// Unstable eigenvalues, sorted by decreasing real part.
    pub eigenvalues: Vec<Complex64>,
    /// `|(L - lambda_j) phi_j| / |phi_j|` when `diagonal`, otherwise the
    /// invariant-subspace residual repeated.
    pub residuals: Vec<f64>,
    /// Right basis, `N x p`; eigenfunctions `phi_j` when `diagonal`.
    pub right: DMatrix<f64>,
    /// Left basis with `h left^T right = I`; `phi~_j` when `diagonal`.
    pub left: DMatrix<f64>,
    /// `h left^T L right`, diagonal when `diagonal`.
    pub restricted: DMatrix<f64>,
    /// True when the unstable eigenvalues are real, simple and the right
    /// basis consists of eigenvectors.
    pub diagonal: bool,
    /// Suspected Jordan structure: the basis is an invariant subspace.
    pub defective: bool,
    /// Antiderivatives `Phi_j` of the (mean-corrected) right basis.
    pub antiderivatives: DMatrix<f64>,
    /// `int phi_j dx` before mean correction, per basis vector and component.
    pub means: Vec<f64>,
    pub re_cut: f64,
    pub sigma: f64,
    pub iterations: usize,
    pub invariant_residual: f64,
}

/// Estimate of the numerical abscissa `max Re <Lv, v>/|v|^2`: the top
/// eigenvalue of the symmetric part by Lanczos with full reorthogonalization.
pub fn numerical_abscissa(a: &Banded<f64>) -> f64 {
    let n = a.dim();
    let k = n.min(250);
    let sym = |x: &DVector<f64>| -> DVector<f64> {
        let y = a.mul_vec(x.as_slice());
        let z = a.mul_vec_transpose(x.as_slice());
        DVector::from_iterator(n, y.iter().zip(&z).map(|(p, q)| 0.5 * (p + q)))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut q: Vec<DVector<f64>> = vec![DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)).normalize()];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    for j in 0..k {
        let mut w = sym(&q[j]);
        alpha.push(q[j].dot(&w));
        for qi in &q {
            let c = qi.dot(&w);
            w -= qi * c;
        }
        let b = w.norm();
        if j + 1 == k || b < 1e-12 {
            break;
        }
        beta.push(b);
        q.push(w / b);
    }
    let m = alpha.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j || j + 1 == i {
            beta[i.min(j)]
        } else {
            0.0
        }
    });
    t.symmetric_eigenvalues().max()
}

fn random_block(rng: &mut ChaCha8Rng, n: usize, b: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, b, |_, _| rng.gen_range(-1.0..1.0))
}

fn orthonormalize(y: DMatrix<f64>) -> DMatrix<f64> {
    y.qr().q()
}

/// Cayley subspace iteration on `a` (or its transpose).
struct Cayley<'a> {
    a: &'a Banded<f64>,
    lu: crate::banded::BandedLu<f64>,
    sigma: f64,
    transpose: bool,
}

impl<'a> Cayley<'a> {
    fn new(a: &'a Banded<f64>, sigma: f64, transpose: bool) -> Result<Self> {
        let lu = a.scale_shift(1.0, -sigma).lu()?;
        Ok(Self { a, lu, sigma, transpose })
    }

    fn apply(&self, q: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = q.clone();
        for (k, mut col) in out.column_iter_mut().enumerate() {
            let x = q.column(k);
            let v = if self.transpose {
                let mut y = x.iter().copied().collect::<Vec<_>>();
                self.lu.solve_transpose_in_place(&mut y);
                let mut z = self.a.mul_vec_transpose(&y);
                for (zi, yi) in z.iter_mut().zip(&y) {
                    *zi += self.sigma * yi;
                }
                z
            } else {
                let mut z = self.a.mul_vec(x.as_slice());
                for (zi, xi) in z.iter_mut().zip(x.iter()) {
                    *zi += self.sigma * xi;
                }
                self.lu.solve_in_place(&mut z);
                z
            };
            col.copy_from_slice(&v);
        }
        out
    }

    fn op_apply(&self, q: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = q.clone();
        for (k, mut col) in out.column_iter_mut().enumerate() {
            let x = q.column(k);
            let v = if self.transpose { self.a.mul_vec_transpose(x.as_slice()) } else { self.a.mul_vec(x.as_slice()) };
            col.copy_from_slice(&v);
        }
        out
    }
}

/// Relative residual `|A V - V (V^T A V)|_F / max(1, |V^T A V|_F)`.
fn invariant_residual(c: &Cayley, v: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let av = c.op_apply(v);
    let lam = v.transpose() * &av;
    let r = (&av - v * &lam).norm() / lam.norm().max(1.0);
    (lam, r)
}

struct Subspace {
    basis: DMatrix<f64>,
    residual: f64,
    iterations: usize,
}

/// Dominant invariant subspace of the Cayley transform; its dimension is the
/// number of Ritz values with `Re > re_cut` once the count settles.
fn unstable_subspace(c: &Cayley, opts: &SpectralOptions, fixed_dim: Option<usize>) -> Result<Subspace> {
    let n = c.a.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (c.transpose as u64));
    let mut b = opts.block.max(fixed_dim.map_or(0, |p| p + 2)).min(n);
    let mut q = orthonormalize(random_block(&mut rng, n, b));
    let mut last_count = usize::MAX;
    let mut it = 0;
    // Rounding in applying L caps the attainable residual at about eps |L|.
    let tol = opts.tol.max(2e-13 * c.a.norm_inf());
    while it < opts.max_iter {
        for _ in 0..5 {
            q = orthonormalize(c.apply(&q));
            it += 1;
        }
        let h = q.transpose() * c.op_apply(&q);
        let count = match fixed_dim {
            Some(p) => p,
            None => h.complex_eigenvalues().iter().filter(|z| z.re > opts.re_cut).count(),
        };
        if count + 1 >= b && b < n {
            let extra = b.min(n - b);
            let mut grown = DMatrix::zeros(n, b + extra);
            grown.columns_mut(0, b).copy_from(&q);
            grown.columns_mut(b, extra).copy_from(&random_block(&mut rng, n, extra));
            b += extra;
            q = orthonormalize(grown);
            last_count = usize::MAX;
            continue;
        }
        let v = q.columns(0, count).into_owned();
        let (_, res) = invariant_residual(c, &v);
        if it >= opts.min_iter && count == last_count && res <= tol {
            return Ok(Subspace { basis: v, residual: res, iterations: it });
        }
        last_count = count;
    }
    Err(Error::NonConvergence(format!("unstable subspace iteration did not settle in {} steps", opts.max_iter)))
}

/// Null vector of a small square matrix by SVD.
fn null_vector(a: &DMatrix<f64>) -> DVector<f64> {
    let svd = a.clone().svd(false, true);
    let vt = svd.v_t.expect("requested");
    let k = svd.singular_values.imin();
    vt.row(k).transpose()
}

fn condition_number(a: &DMatrix<f64>) -> f64 {
    let s = a.singular_values();
    if s.is_empty() {
        return 1.0;
    }
    s.max() / s.min()
}

/// Computes the unstable spectrum of `op` together with biorthonormal bases.
pub fn unstable_spectrum(op: &LinearizedOperator, opts: SpectralOptions) -> Result<SpectralDecomposition> {
    let a = op.banded();
    let h = op.h();
    let sigma = opts.sigma.unwrap_or_else(|| 0.7373f64.max(0.6137 * numerical_abscissa(a)));
    let right_it = Cayley::new(a, sigma, false)?;
    let sub = unstable_subspace(&right_it, &opts, None)?;
    let p = sub.basis.ncols();
    let n_dim = a.dim();

    let (mut right, mut left, mut restricted, iterations, mut residual) = if p == 0 {
        (DMatrix::zeros(n_dim, 0), DMatrix::zeros(n_dim, 0), DMatrix::zeros(0, 0), sub.iterations, 0.0)
    } else {
        let left_it = Cayley::new(a, sigma, true)?;
        let lsub = unstable_subspace(&left_it, &opts, Some(p))?;
        let m = lsub.basis.transpose() * &sub.basis * h;
        let cond = condition_number(&m);
        if cond > 1e12 {
            return Err(Error::DefectiveCluster(cond));
        }
        let minv_t = m.try_inverse().ok_or(Error::DefectiveCluster(f64::INFINITY))?.transpose();
        let w = lsub.basis * minv_t;
        let lam = w.transpose() * right_it.op_apply(&sub.basis) * h;
        (sub.basis, w, lam, sub.iterations + lsub.iterations, sub.residual.max(lsub.residual))
    };

    let mut eigenvalues: Vec<Complex64> = if p == 0 { Vec::new() } else { restricted.complex_eigenvalues().iter().copied().collect() };
    eigenvalues.sort_by(|x, y| y.re.partial_cmp(&x.re).unwrap().then(y.im.partial_cmp(&x.im).unwrap()));
    let scale = eigenvalues.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let all_real = eigenvalues.iter().all(|z| z.im.abs() <= 1e-10 * scale);
    let separated = eigenvalues.windows(2).all(|w| (w[0].re - w[1].re).abs() > 1e-8 * scale);
    let mut diagonal = false;
    let mut defective = false;
    if p > 0 && all_real && separated {
        let mut s = DMatrix::zeros(p, p);
        for (j, z) in eigenvalues.iter().enumerate() {
            let shifted = &restricted - DMatrix::identity(p, p) * z.re;
            s.set_column(j, &null_vector(&shifted));
        }
        if condition_number(&s) < 1e8 {
            let s_inv_t = s.clone().try_inverse().expect("well conditioned").transpose();
            right = &right * &s;
            left = &left * s_inv_t;
            for j in 0..p {
                // Unit L2 norm, largest entry positive.
                let col = right.column(j);
                let norm = (h * col.norm_squared()).sqrt();
                let sign = if col[col.iamax()] < 0.0 { -1.0 } else { 1.0 };
                let f = sign / norm;
                right.column_mut(j).scale_mut(f);
                left.column_mut(j).scale_mut(1.0 / f);
            }
            restricted = DMatrix::from_diagonal(&DVector::from_iterator(p, eigenvalues.iter().map(|z| z.re)));
            diagonal = true;
        } else {
            defective = true;
        }
    } else if p > 0 && all_real {
        defective = true;
    }

    let residuals = if diagonal {
        (0..p)
            .map(|j| {
                let phi = right.column(j).into_owned();
                let lphi = op.apply(&phi);
                (lphi - &phi * eigenvalues[j].re).norm() / phi.norm()
            })
            .collect()
    } else {
        vec![residual; p]
    };
    if diagonal {
        residual = residuals.iter().copied().fold(0.0, f64::max);
    }

    let (antiderivatives, means) = antiderivatives(&op.grid, op.n, &right);
    Ok(SpectralDecomposition {
        grid: op.grid,
        n: op.n,
        p,
        eigenvalues,
        residuals,
        right,
        left,
        restricted,
        diagonal,
        defective,
        antiderivatives,
        means,
        re_cut: opts.re_cut,
        sigma,
        iterations,
        invariant_residual: residual,
    })
}

/// Runs [`unstable_spectrum`] at `grid` and its refinement and requires the
/// same unstable count.
pub fn unstable_spectrum_refined(
    build: impl Fn(&Grid1D) -> Result<LinearizedOperator>,
    grid: &Grid1D,
    opts: SpectralOptions,
) -> Result<(SpectralDecomposition, SpectralDecomposition)> {
    let coarse = unstable_spectrum(&build(grid)?, opts)?;
    let fine = unstable_spectrum(&build(&grid.refined())?, opts)?;
    if coarse.p != fine.p {
        return Err(Error::UnresolvedSpectrum { coarse: coarse.p, fine: fine.p });
    }
    Ok((coarse, fine))
}

/// Cumulative trapezoid antiderivatives of each column after removing its
/// mean, so that every `Phi_j` vanishes at both ends.
fn antiderivatives(grid: &Grid1D, n: usize, right: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let h = grid.h();
    let nodes = right.nrows() / n;
    let mut out = DMatrix::zeros(right.nrows(), right.ncols());
    let mut means = Vec::new();
    for j in 0..right.ncols() {
        for c in 0..n {
            let vals: Vec<f64> = (0..nodes).map(|r| right[(n * r + c, j)]).collect();
            let mean = h * vals.iter().sum::<f64>();
            means.push(mean);
            let corr = mean / (h * nodes as f64);
            let mut acc = 0.0;
            let mut prev = 0.0; // value at the left end node
            for (r, v) in vals.iter().enumerate() {
                let v = v - corr;
                acc += 0.5 * h * (prev + v);
                out[(n * r + c, j)] = acc;
                prev = v;
            }
        }
    }
    (out, means)
}

/// Centered first difference on interior unknowns with zero end values.
pub fn d0(grid: &Grid1D, n: usize, v: &DVector<f64>) -> DVector<f64> {
    let h = grid.h();
    let nodes = v.len() / n;
    DVector::from_fn(v.len(), |k, _| {
        let (r, c) = (k / n, k % n);
        let right = if r + 1 < nodes { v[n * (r + 1) + c] } else { 0.0 };
        let left = if r > 0 { v[n * (r - 1) + c] } else { 0.0 };
        (right - left) / (2.0 * h)
    })
}

impl SpectralDecomposition {
    pub fn h(&self) -> f64 {
        self.grid.h()
    }

    /// Unstable coordinates `h left^T f`.
    pub fn coordinates(&self, f: &DVector<f64>) -> DVector<f64> {
        self.left.tr_mul(f) * self.h()
    }

    pub fn pi_u(&self, f: &DVector<f64>) -> DVector<f64> {
        &self.right * self.coordinates(f)
    }

    pub fn pi_cs(&self, f: &DVector<f64>) -> DVector<f64> {
        f - self.pi_u(f)
    }

    /// `e^{Lt}` restricted to the unstable subspace, in coordinates.
    pub fn unstable_propagator(&self, t: f64) -> DMatrix<f64> {
        (&self.restricted * t).exp()
    }

    /// Unstable part of the discrete Green function for a unit mass at
    /// interior unknown `y`: `right e^{Lambda t} left[y, :]^T`.
    pub fn unstable_green(&self, t: f64, y: usize) -> DVector<f64> {
        &self.right * (self.unstable_propagator(t) * self.left.row(y).transpose())
    }

    /// Largest `|int phi_j|` relative to `|phi_j|_{L1}`.
    pub fn max_relative_mean(&self) -> f64 {
        let h = self.h();
        let mut worst: f64 = 0.0;
        for j in 0..self.p {
            let l1 = h * self.right.column(j).abs().sum();
            for c in 0..self.n {
                worst = worst.max(self.means[j * self.n + c].abs() / l1.max(f64::MIN_POSITIVE));
            }
        }
        worst
    }

    pub fn build_projections(&self, mean_tol: f64) -> Result<Projections<'_>> {
        let h = self.h();
        for j in 0..self.p {
            let l1 = h * self.right.column(j).abs().sum();
            for c in 0..self.n {
                let mean = self.means[j * self.n + c];
                if mean.abs() > mean_tol * l1 {
                    return Err(Error::NonZeroMean { index: j, mean });
                }
            }
        }
        let mut dleft = DMatrix::zeros(self.left.nrows(), self.p);
        for j in 0..self.p {
            dleft.set_column(j, &d0(&self.grid, self.n, &self.left.column(j).into_owned()));
        }
        Ok(Projections { sd: self, dleft })
    }

    /// Hoelder bound `sum_j |phi_j|_{W^{r,p}} |phi~_j|_{L^q}` for the operator
    /// norm of `Pi_u` on `W^{r,p}`, and the same with `Phi_j`, `d phi~_j` for
    /// the antiderivative variant.
    pub fn projection_norm_proxy(&self, r: usize, p_exp: f64) -> (f64, f64) {
        let q = if p_exp == 1.0 {
            f64::INFINITY
        } else if p_exp.is_infinite() {
            1.0
        } else {
            p_exp / (p_exp - 1.0)
        };
        let lp = |v: &DVector<f64>, p: f64| -> f64 {
            if p.is_infinite() {
                v.amax()
            } else {
                (self.h() * v.iter().map(|x| x.abs().powf(p)).sum::<f64>()).powf(1.0 / p)
            }
        };
        let wrp = |v: &DVector<f64>| -> f64 {
            let mut s = 0.0;
            let mut d = v.clone();
            for k in 0..=r {
                if k > 0 {
                    d = d0(&self.grid, self.n, &d);
                }
                s += lp(&d, p_exp);
            }
            s
        };
        let mut plain = 0.0;
        let mut tilde = 0.0;
        for j in 0..self.p {
            let phi = self.right.column(j).into_owned();
            let lt = self.left.column(j).into_owned();
            plain += wrp(&phi) * lp(&lt, q);
            tilde += wrp(&self.antiderivatives.column(j).into_owned()) * lp(&d0(&self.grid, self.n, &lt), q);
        }
        (plain, tilde)
    }

    /// CSV with columns `j, re, im, residual`.
    pub fn write_eigenvalues_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "j,re,im,residual")?;
        for (j, z) in self.eigenvalues.iter().enumerate() {
            writeln!(f, "{},{:.12e},{:.12e},{:.3e}", j, z.re, z.im, self.residuals[j])?;
        }
        Ok(())
    }

    /// CSV with columns `x, component, phi_1.., phitilde_1..`.
    pub fn write_eigenfunctions_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut header = vec!["x".to_string(), "component".to_string()];
        header.extend((1..=self.p).map(|j| format!("phi_{j}")));
        header.extend((1..=self.p).map(|j| format!("phitilde_{j}")));
        writeln!(f, "{}", header.join(","))?;
        for k in 0..self.right.nrows() {
            let (r, c) = (k / self.n, k % self.n);
            let mut row = vec![format!("{:.10}", self.grid.x(r + 1)), c.to_string()];
            row.extend((0..self.p).map(|j| format!("{:.12e}", self.right[(k, j)])));
            row.extend((0..self.p).map(|j| format!("{:.12e}", self.left[(k, j)])));
            writeln!(f, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// `Pi_u`, `Pi_cs` and the antiderivative variants with
/// `Pi_u d_x = d_x Pi~_u`.
pub struct Projections<'a> {
    pub sd: &'a SpectralDecomposition,
    dleft: DMatrix<f64>,
}

impl Projections<'_> {
    pub fn pi_u(&self, f: &DVector<f64>) -> DVector<f64> {
        self.sd.pi_u(f)
    }

    pub fn pi_cs(&self, f: &DVector<f64>) -> DVector<f64> {
        self.sd.pi_cs(f)
    }

    /// `Pi~_u f = -sum_j Phi_j <d_x phi~_j, f>`; the sign makes the
    /// commutation relation hold after integrating by parts.
    pub fn pi_u_tilde(&self, f: &DVector<f64>) -> DVector<f64> {
        let c = self.dleft.tr_mul(f) * (-self.sd.h());
        &self.sd.antiderivatives * c
    }

    pub fn pi_cs_tilde(&self, f: &DVector<f64>) -> DVector<f64> {
        f - self.pi_u_tilde(f)
    }

    /// `|Pi_u D0 f - D0 Pi~_u f|`.
    pub fn commutation_residual(&self, f: &DVector<f64>) -> f64 {
        let g = &self.sd.grid;
        let lhs = self.pi_u(&d0(g, self.sd.n, f));
        let rhs = d0(g, self.sd.n, &self.pi_u_tilde(f));
        ((lhs - rhs).norm_squared() * g.h()).sqrt()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EigenEntry {
    pub re: f64,
    pub im: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct D1Report {
    pub p: usize,
    pub eigenvalues: Vec<EigenEntry>,
    pub d1_ok: bool,
    /// Smallest distance from a non-translational eigenvalue to the sampled
    /// axis points `i tau_k` (to the origin when `tau_max = 0`).
    pub min_distance: f64,
    pub tau_max: f64,
    pub n_samples: usize,
}

impl D1Report {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ScanOptions {
    /// Eigenvalues with `|lambda|` below this are the translation mode.
    pub zero_tol: f64,
    /// `|Re lambda|` below this counts as on the axis.
    pub axis_tol: f64,
    /// Band used for the cluster test and for reporting.
    pub band: f64,
    /// Dense eigensolve up to this dimension, shift-invert sampling beyond.
    pub dense_limit: usize,
    pub re_cut: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { zero_tol: 1e-6, axis_tol: 1e-6, band: 1e-3, dense_limit: 1200, re_cut: 1e-6 }
    }
}

/// Refines an eigenvalue estimate by complex inverse iteration; returns the
/// Rayleigh quotient and the residual of the final vector.
fn refine_eigenvalue(a: &Banded<Complex64>, guess: Complex64, seed: u64, iters: usize) -> Result<(Complex64, f64)> {
    let n = a.dim();
    let perturb = Complex64::new(1.0, 1.0) * (1e-9 * (1.0 + guess.norm()));
    let lu = a.scale_shift(Complex64::new(1.0, 0.0), -(guess + perturb)).lu()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    for _ in 0..iters {
        lu.solve_in_place(&mut x);
        let norm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        x.iter_mut().for_each(|z| *z /= norm);
    }
    let ax = a.mul_vec(&x);
    let lambda: Complex64 = x.iter().zip(&ax).map(|(xi, yi)| xi.conj() * yi).sum();
    let res = ax.iter().zip(&x).map(|(y, xi)| (y - lambda * xi).norm_sqr()).sum::<f64>().sqrt();
    Ok((lambda, res))
}

/// Point-spectrum scan along `{i tau_k}`, `tau_k = k tau_max / n_samples`.
pub fn scan_banded(a: &Banded<f64>, p: usize, tau_max: f64, n_samples: usize, opts: ScanOptions) -> Result<D1Report> {
    let n = a.dim();
    let ac = a.map(|v| Complex64::new(v, 0.0));
    let samples: Vec<f64> = (1..=n_samples.max(1)).map(|k| tau_max * k as f64 / n_samples.max(1) as f64).collect();
    let tau_min = samples[0];
    let dist = |z: &Complex64| -> f64 {
        if tau_max == 0.0 {
            z.norm()
        } else {
            samples.iter().map(|&t| (z - Complex64::new(0.0, t)).norm()).fold(f64::INFINITY, f64::min)
        }
    };
    let candidates: Vec<Complex64> = if n <= opts.dense_limit {
        a.to_dense().complex_eigenvalues().iter().copied().collect()
    } else {
        let mut found: Vec<Complex64> = Vec::new();
        let mut shifts: Vec<f64> = samples.clone();
        shifts.push(0.0);
        for (k, &t) in shifts.iter().enumerate() {
            let (z, _) = refine_eigenvalue(&ac, Complex64::new(0.0, t), k as u64, 30)?;
            if !found.iter().any(|w| (w - z).norm() < 1e-8 * (1.0 + z.norm())) {
                found.push(z);
                found.push(z.conj());
            }
        }
        found
    };
    let mut min_distance = f64::INFINITY;
    let mut on_axis = 0;
    let mut in_band = 0;
    let mut report = Vec::new();
    for z in &candidates {
        let translational = z.norm() < opts.zero_tol;
        let near = z.re.abs() <= opts.band && (tau_max == 0.0 || z.im.abs() <= tau_max + opts.band);
        if (near || z.re > opts.re_cut || translational) && report.len() < 64 {
            let (zr, res) = refine_eigenvalue(&ac, *z, 7, 3)?;
            report.push(EigenEntry { re: zr.re, im: zr.im, residual: res });
        }
        if translational {
            continue;
        }
        min_distance = min_distance.min(dist(z));
        if tau_max > 0.0 && z.im.abs() >= 0.5 * tau_min && z.im.abs() <= tau_max {
            if z.re.abs() <= opts.axis_tol * (1.0 + z.norm()) {
                on_axis += 1;
            }
            if z.re.abs() <= opts.band {
                in_band += 1;
            }
        }
    }
    let d1_ok = if tau_max == 0.0 { min_distance > opts.axis_tol } else { on_axis == 0 && in_band < 2 };
    report.sort_by(|x, y| y.re.partial_cmp(&x.re).unwrap());
    Ok(D1Report { p, eigenvalues: report, d1_ok, min_distance, tau_max, n_samples })
}

/// (D1)-type check for the linearized operator.
pub fn scan_imaginary_axis(op: &LinearizedOperator, tau_max: f64, n_samples: usize) -> Result<D1Report> {
    let sd = unstable_spectrum(op, SpectralOptions::default())?;
    scan_banded(op.banded(), sd.p, tau_max, n_samples, ScanOptions::default())
}
