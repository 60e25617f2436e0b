//! PDE models: viscous conservation laws `u_t + f(u)_x = u_xx` and
//! semilinear fronts `u_t = u_xx + h(u, u_x)`, with their endpoint data and
//! structural checks (Lax counts, Liu–Majda determinant, essential spectrum).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One monomial `coef * prod_j u_j^powers[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub powers: Vec<u32>,
}

/// Polynomial flux, one list of monomials per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialFlux {
    pub components: Vec<Vec<Monomial>>,
}

fn powi(x: f64, p: u32) -> f64 {
    x.powi(p as i32)
}

impl Monomial {
    fn eval(&self, u: &[f64]) -> f64 {
        self.coef * self.powers.iter().zip(u).map(|(&p, &x)| powi(x, p)).product::<f64>()
    }

    fn partial(&self, u: &[f64], k: usize) -> f64 {
        let pk = self.powers[k];
        if pk == 0 {
            return 0.0;
        }
        let mut v = self.coef * pk as f64;
        for (j, (&p, &x)) in self.powers.iter().zip(u).enumerate() {
            v *= if j == k { powi(x, p - 1) } else { powi(x, p) };
        }
        v
    }

    fn second_partial(&self, u: &[f64], k: usize, l: usize) -> f64 {
        let mut p = self.powers.clone();
        let mut v = self.coef;
        for idx in [k, l] {
            if p[idx] == 0 {
                return 0.0;
            }
            v *= p[idx] as f64;
            p[idx] -= 1;
        }
        v * p.iter().zip(u).map(|(&q, &x)| powi(x, q)).product::<f64>()
    }
}

impl PolynomialFlux {
    pub fn dim(&self) -> usize {
        self.components.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 {
            return Err(Error::Config("flux has no components".into()));
        }
        for c in &self.components {
            for m in c {
                if m.powers.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, got: m.powers.len() });
                }
            }
        }
        Ok(())
    }
}

/// A viscous conservation law with a stationary shock between `u_minus` and `u_plus`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxModel {
    pub name: String,
    pub flux: PolynomialFlux,
    pub u_minus: DVector<f64>,
    pub u_plus: DVector<f64>,
}

impl FluxModel {
    pub fn new(name: &str, flux: PolynomialFlux, u_minus: Vec<f64>, u_plus: Vec<f64>) -> Result<Self> {
        flux.validate()?;
        let n = flux.dim();
        for s in [&u_minus, &u_plus] {
            if s.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: s.len() });
            }
        }
        Ok(Self { name: name.into(), flux, u_minus: DVector::from_vec(u_minus), u_plus: DVector::from_vec(u_plus) })
    }

    /// Burgers flux `u^2/2`.
    pub fn burgers(u_minus: f64, u_plus: f64) -> Self {
        let flux = PolynomialFlux { components: vec![vec![Monomial { coef: 0.5, powers: vec![2] }]] };
        Self::new("burgers", flux, vec![u_minus], vec![u_plus]).expect("scalar flux")
    }

    /// The gradient system `f(u) = (u1^2/2 + u2, u2^2/2 + u1)`.
    pub fn coupled2_with(u_minus: [f64; 2], u_plus: [f64; 2]) -> Self {
        let flux = PolynomialFlux {
            components: vec![
                vec![Monomial { coef: 0.5, powers: vec![2, 0] }, Monomial { coef: 1.0, powers: vec![0, 1] }],
                vec![Monomial { coef: 0.5, powers: vec![0, 2] }, Monomial { coef: 1.0, powers: vec![1, 0] }],
            ],
        };
        Self::new("coupled2", flux, u_minus.to_vec(), u_plus.to_vec()).expect("2x2 flux")
    }

    /// `coupled2` with `u_- = (0.3, -0.2)` and the Lax 2-shock partner state on
    /// its Hugoniot locus, found by Newton's method.
    pub fn coupled2() -> Self {
        let um = [0.3, -0.2];
        let seed = Self::coupled2_with(um, um);
        let up = seed
            .hugoniot_partner(&DVector::from_vec(vec![-2.0, -2.15]))
            .expect("Newton on the Hugoniot locus converges from the tabulated guess");
        Self::coupled2_with(um, [up[0], up[1]])
    }

    pub fn dim(&self) -> usize {
        self.flux.dim()
    }

    pub fn f(&self, u: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.flux.components.iter().map(|c| c.iter().map(|m| m.eval(u)).sum()))
    }

    pub fn df(&self, u: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, k| self.flux.components[i].iter().map(|m| m.partial(u, k)).sum())
    }

    /// Hessians: entry `i` is the matrix of second partials of `f_i`.
    pub fn d2f(&self, u: &[f64]) -> Vec<DMatrix<f64>> {
        let n = self.dim();
        self.flux
            .components
            .iter()
            .map(|c| DMatrix::from_fn(n, n, |k, l| c.iter().map(|m| m.second_partial(u, k, l)).sum()))
            .collect()
    }

    pub fn rankine_hugoniot_residual(&self) -> f64 {
        (self.f(self.u_plus.as_slice()) - self.f(self.u_minus.as_slice())).amax()
    }

    /// Solves `f(u) = f(u_-)` by Newton's method from `guess`.
    pub fn hugoniot_partner(&self, guess: &DVector<f64>) -> Result<DVector<f64>> {
        let target = self.f(self.u_minus.as_slice());
        let mut u = guess.clone();
        for _ in 0..60 {
            let r = self.f(u.as_slice()) - &target;
            if r.amax() < 1e-15 * (1.0 + target.amax()) {
                return Ok(u);
            }
            let du = self
                .df(u.as_slice())
                .lu()
                .solve(&r)
                .ok_or_else(|| Error::NonConvergence("singular Jacobian on the Hugoniot locus".into()))?;
            u -= du;
        }
        let r = self.f(u.as_slice()) - &target;
        if r.amax() < 1e-12 * (1.0 + target.amax()) {
            Ok(u)
        } else {
            Err(Error::NonConvergence(format!("Hugoniot residual {:e}", r.amax())))
        }
    }
}

/// Characteristic data of `A_± = df(u_±)`, sorted ascending.
#[derive(Debug, Clone)]
pub struct EndpointData {
    pub a_minus: Vec<f64>,
    pub a_plus: Vec<f64>,
    pub r_minus: Vec<DVector<f64>>,
    pub r_plus: Vec<DVector<f64>>,
    pub l_minus: Vec<DVector<f64>>,
    pub l_plus: Vec<DVector<f64>>,
}

type Eigen = (Vec<f64>, Vec<DVector<f64>>, Vec<DVector<f64>>);

/// Real, simple eigen-decomposition with biorthonormal left vectors.
pub(crate) fn real_simple_eigen(a: &DMatrix<f64>, side: &'static str) -> Result<Eigen> {
    let n = a.nrows();
    let ev = a.complex_eigenvalues();
    let radius = ev.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    if ev.iter().any(|z| z.im.abs() > 1e-10 * radius.max(1.0)) {
        return Err(Error::NotHyperbolic(side));
    }
    let mut vals: Vec<f64> = ev.iter().map(|z| z.re).collect();
    vals.sort_by(|x, y| x.total_cmp(y));
    if vals.windows(2).any(|w| w[1] - w[0] <= 1e-8 * radius) {
        return Err(Error::NotHyperbolic(side));
    }
    let mut right = Vec::with_capacity(n);
    for &lam in &vals {
        let shifted = a - DMatrix::identity(n, n) * lam;
        let svd = shifted.svd(false, true);
        let vt = svd.v_t.expect("right singular vectors requested");
        let (imin, _) = svd.singular_values.argmin();
        let mut r: DVector<f64> = vt.row(imin).transpose();
        let (ibig, _) = r.iamax_full();
        if r[ibig] < 0.0 {
            r = -r;
        }
        right.push(r.normalize());
    }
    let rmat = DMatrix::from_columns(&right);
    let inv = rmat.try_inverse().ok_or(Error::NotHyperbolic(side))?;
    let left = (0..n).map(|j| inv.row(j).transpose()).collect();
    Ok((vals, right, left))
}

impl EndpointData {
    pub fn compute(m: &FluxModel) -> Result<Self> {
        let (a_minus, r_minus, l_minus) = real_simple_eigen(&m.df(m.u_minus.as_slice()), "minus")?;
        let (a_plus, r_plus, l_plus) = real_simple_eigen(&m.df(m.u_plus.as_slice()), "plus")?;
        Ok(Self { a_minus, a_plus, r_minus, r_plus, l_minus, l_plus })
    }

    pub fn dim(&self) -> usize {
        self.a_minus.len()
    }

    /// Largest residual of `A r = a r` and of `l . r = delta`.
    pub fn residual(&self, m: &FluxModel) -> f64 {
        let mut worst = 0.0_f64;
        for (a, rs, ls, a_list) in [
            (m.df(m.u_minus.as_slice()), &self.r_minus, &self.l_minus, &self.a_minus),
            (m.df(m.u_plus.as_slice()), &self.r_plus, &self.l_plus, &self.a_plus),
        ] {
            for (k, r) in rs.iter().enumerate() {
                worst = worst.max((&a * r - r * a_list[k]).amax());
                for (j, l) in ls.iter().enumerate() {
                    let target = if j == k { 1.0 } else { 0.0 };
                    worst = worst.max((l.dot(r) - target).abs());
                }
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LaxReport {
    pub dim_unstable_minus: usize,
    pub dim_stable_plus: usize,
    pub is_lax: bool,
    /// Position of the shock family among the characteristic fields.
    pub p_hyperbolic: usize,
}

pub const SPEED_TOL: f64 = 1e-8;

pub fn check_lax(e: &EndpointData) -> Result<LaxReport> {
    for (side, list) in [("minus", &e.a_minus), ("plus", &e.a_plus)] {
        if let Some(&a) = list.iter().find(|a| a.abs() < SPEED_TOL) {
            return Err(Error::NearZeroSpeed { side, speed: a });
        }
    }
    let dim_unstable_minus = e.a_minus.iter().filter(|&&a| a > 0.0).count();
    let dim_stable_plus = e.a_plus.iter().filter(|&&a| a < 0.0).count();
    let negative_minus = e.a_minus.len() - dim_unstable_minus;
    Ok(LaxReport {
        dim_unstable_minus,
        dim_stable_plus,
        is_lax: dim_unstable_minus + dim_stable_plus == e.dim() + 1,
        p_hyperbolic: negative_minus + 1,
    })
}

/// Determinant of the given columns; they must form a square matrix.
pub fn determinant_of_columns(cols: &[DVector<f64>]) -> Result<f64> {
    let n = cols.first().map_or(0, |c| c.len());
    if cols.len() != n || n == 0 {
        return Err(Error::DimensionMismatch { expected: n, got: cols.len() });
    }
    if let Some(c) = cols.iter().find(|c| c.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, got: c.len() });
    }
    Ok(DMatrix::from_columns(cols).determinant())
}

/// `det(r_1^-, .., r_{p-1}^-, r_{p+1}^+, .., r_n^+, u_+ - u_-)`.
pub fn liu_majda_determinant(m: &FluxModel, e: &EndpointData) -> Result<f64> {
    let lax = check_lax(e)?;
    if !lax.is_lax {
        return Err(Error::Degenerate("Liu-Majda determinant needs a Lax shock".into()));
    }
    let p = lax.p_hyperbolic;
    let mut cols: Vec<DVector<f64>> = e.r_minus[..p - 1].to_vec();
    cols.extend(e.r_plus[p..].iter().cloned());
    cols.push(&m.u_plus - &m.u_minus);
    determinant_of_columns(&cols)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    Minus,
    Plus,
}

#[derive(Debug, Clone)]
pub struct EssentialBranch {
    pub side: Side,
    pub index: usize,
    pub speed: f64,
    pub values: Vec<Complex64>,
}

/// `lambda(k) = -i k a - k^2` along every characteristic branch.
pub fn essential_spectrum_curves(e: &EndpointData, k_grid: &[f64]) -> Vec<EssentialBranch> {
    let mut out = Vec::new();
    for (side, speeds) in [(Side::Minus, &e.a_minus), (Side::Plus, &e.a_plus)] {
        for (index, &a) in speeds.iter().enumerate() {
            let values = k_grid.iter().map(|&k| Complex64::new(-k * k, -k * a)).collect();
            out.push(EssentialBranch { side, index, speed: a, values });
        }
    }
    out
}

/// Semilinear fronts `u_t = u_xx + h(u, u_x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum SemilinearModel {
    /// `h = -kappa^2 u + 2 u^3`; pulse `kappa sech(kappa x)` with one unstable eigenvalue `3 kappa^2`.
    CubicPulse { kappa: f64 },
    /// A conservation law written as `h = -df(u) u_x`.
    Conservation(FluxModel),
}

impl SemilinearModel {
    pub fn dim(&self) -> usize {
        match self {
            Self::CubicPulse { .. } => 1,
            Self::Conservation(m) => m.dim(),
        }
    }

    pub fn u_minus(&self) -> DVector<f64> {
        match self {
            Self::CubicPulse { .. } => DVector::zeros(1),
            Self::Conservation(m) => m.u_minus.clone(),
        }
    }

    pub fn u_plus(&self) -> DVector<f64> {
        match self {
            Self::CubicPulse { .. } => DVector::zeros(1),
            Self::Conservation(m) => m.u_plus.clone(),
        }
    }

    pub fn h(&self, u: &[f64], ux: &[f64]) -> DVector<f64> {
        match self {
            Self::CubicPulse { kappa } => DVector::from_element(1, -kappa * kappa * u[0] + 2.0 * u[0].powi(3)),
            Self::Conservation(m) => -(m.df(u) * DVector::from_column_slice(ux)),
        }
    }

    pub fn dh_du(&self, u: &[f64], ux: &[f64]) -> DMatrix<f64> {
        match self {
            Self::CubicPulse { kappa } => DMatrix::from_element(1, 1, -kappa * kappa + 6.0 * u[0] * u[0]),
            Self::Conservation(m) => {
                let n = m.dim();
                let hess = m.d2f(u);
                DMatrix::from_fn(n, n, |i, k| -(0..n).map(|l| hess[i][(l, k)] * ux[l]).sum::<f64>())
            }
        }
    }

    pub fn dh_dux(&self, u: &[f64], _ux: &[f64]) -> DMatrix<f64> {
        match self {
            Self::CubicPulse { .. } => DMatrix::zeros(1, 1),
            Self::Conservation(m) => -m.df(u),
        }
    }

    /// Observed order of the centered finite-difference error of `dh` at a
    /// state, from steps `delta` and `delta/2`.
    pub fn fd_consistency_order(&self, u: &[f64], ux: &[f64], delta: f64) -> f64 {
        let n = self.dim();
        let du = self.dh_du(u, ux);
        let dux = self.dh_dux(u, ux);
        let centered = |d: f64| {
            let mut worst = 0.0_f64;
            for k in 0..n {
                let mut up = u.to_vec();
                let mut dn = u.to_vec();
                up[k] += d;
                dn[k] -= d;
                let col = (self.h(&up, ux) - self.h(&dn, ux)) / (2.0 * d);
                worst = worst.max((col - du.column(k)).amax());
                let mut uxp = ux.to_vec();
                let mut uxm = ux.to_vec();
                uxp[k] += d;
                uxm[k] -= d;
                let col = (self.h(u, &uxp) - self.h(u, &uxm)) / (2.0 * d);
                worst = worst.max((col - dux.column(k)).amax());
            }
            worst
        };
        let (e1, e2) = (centered(delta), centered(delta / 2.0));
        if e1 <= 1e-13 && e2 <= 1e-13 {
            // Exact up to rounding: h is at most quadratic in each slot.
            return f64::INFINITY;
        }
        (e1 / e2.max(1e-300)).log2()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn burgers_lax_counts() {
        let m = FluxModel::burgers(1.0, -1.0);
        let e = EndpointData::compute(&m).unwrap();
        let r = check_lax(&e).unwrap();
        assert_eq!((r.dim_unstable_minus, r.dim_stable_plus, r.is_lax, r.p_hyperbolic), (1, 1, true, 1));
        assert!((liu_majda_determinant(&m, &e).unwrap() + 2.0).abs() < 1e-14);
    }

    #[test]
    fn coupled2_partner_satisfies_rankine_hugoniot() {
        let m = FluxModel::coupled2();
        assert!(m.rankine_hugoniot_residual() < 1e-12);
        assert!((m.u_plus[0] + 1.99939165).abs() < 1e-6);
    }

    #[test]
    fn hessian_matches_jacobian_differences() {
        let m = FluxModel::coupled2();
        let u = [0.4, -0.7];
        let h = m.d2f(&u);
        let d = 1e-6;
        for k in 0..2 {
            let mut up = u;
            let mut dn = u;
            up[k] += d;
            dn[k] -= d;
            let fd = (m.df(&up) - m.df(&dn)) / (2.0 * d);
            for i in 0..2 {
                for l in 0..2 {
                    assert!((fd[(i, l)] - h[i][(l, k)]).abs() < 1e-8);
                }
            }
        }
    }
}
