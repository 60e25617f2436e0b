use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shocklab::banded::Banded;
use shocklab::disc::Pde;
use shocklab::error::Error;
use shocklab::linop::LinearizedOperator;
use shocklab::model::FluxModel;
use shocklab::profile::conservation_background;
use shocklab::spectral::*;
use shocklab::Grid1D;

fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

fn poschl_teller(grid: Grid1D) -> LinearizedOperator {
    LinearizedOperator::scalar(grid, |_| 0.0, |x| 6.0 * sech(x).powi(2))
}

/// Conservative 2x2 operator with two simple unstable eigenvalues.
fn coupled_divergence(h: f64) -> LinearizedOperator {
    let grid = Grid1D::with_spacing(-20.0, 20.0, h).unwrap();
    LinearizedOperator::divergence_form(grid, 2, |x| DMatrix::from_row_slice(2, 2, &[1.0, 6.0 * x * sech(x), 6.0 * sech(x), -1.0]))
}

fn burgers_op(h: f64) -> LinearizedOperator {
    let m = FluxModel::burgers(1.0, -1.0);
    let grid = Grid1D::with_spacing(-20.0, 20.0, h).unwrap();
    let p = conservation_background(&m, &grid).unwrap();
    LinearizedOperator::assemble(&Pde::Conservation(m), &p).unwrap()
}

fn normalized(grid: &Grid1D, f: impl Fn(f64) -> f64) -> DVector<f64> {
    let v = DVector::from_fn(grid.m - 2, |r, _| f(grid.x(r + 1)));
    let norm = (grid.h() * v.norm_squared()).sqrt();
    v / norm
}

#[test]
fn poschl_teller_eigenpairs_match_closed_form() {
    let grid = Grid1D::with_spacing(-20.0, 20.0, 0.05).unwrap();
    let op = poschl_teller(grid);
    let sd = unstable_spectrum(&op, SpectralOptions::default()).unwrap();
    assert_eq!(sd.p, 2);
    assert!(sd.diagonal);
    assert!((sd.eigenvalues[0].re - 4.0).abs() < 1e-3);
    assert!((sd.eigenvalues[1].re - 1.0).abs() < 1e-3);
    assert!(sd.eigenvalues.iter().all(|z| z.im == 0.0));
    let exact = [normalized(&grid, |x| sech(x).powi(2)), normalized(&grid, |x| sech(x) * x.tanh())];
    for (j, e) in exact.iter().enumerate() {
        let phi = sd.right.column(j);
        let sign = phi.dot(e).signum();
        let err = (phi * sign - e).amax();
        assert!(err < 1e-3, "eigenfunction {j}: {err}");
        assert!(sd.residuals[j] <= 1e-8, "residual {}", sd.residuals[j]);
    }
}

#[test]
fn poschl_teller_agrees_with_dense_eigensolve() {
    let grid = Grid1D::with_spacing(-10.0, 10.0, 0.1).unwrap();
    let op = poschl_teller(grid);
    let sd = unstable_spectrum(&op, SpectralOptions::default()).unwrap();
    let mut dense: Vec<f64> = op.to_dense().complex_eigenvalues().iter().filter(|z| z.re > 1e-6).map(|z| z.re).collect();
    dense.sort_by(|a, b| b.partial_cmp(a).unwrap());
    assert_eq!(dense.len(), sd.p);
    for (a, b) in dense.iter().zip(&sd.eigenvalues) {
        assert!((a - b.re).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn unstable_count_is_stable_under_refinement() {
    let grid = Grid1D::with_spacing(-20.0, 20.0, 0.05).unwrap();
    let (c, f) = unstable_spectrum_refined(|g| Ok(poschl_teller(*g)), &grid, SpectralOptions::default()).unwrap();
    assert_eq!(c.p, 2);
    assert_eq!(f.p, 2);
    // Second-order discretization error.
    let e1 = (c.eigenvalues[0].re - 4.0).abs();
    let e2 = (f.eigenvalues[0].re - 4.0).abs();
    assert!(e1 / e2 > 3.5);
}

#[test]
fn refinement_mismatch_is_reported() {
    let grid = Grid1D::with_spacing(-20.0, 20.0, 0.1).unwrap();
    // A builder that ignores the grid on refinement to force a mismatch.
    let r = unstable_spectrum_refined(
        |g| Ok(if g.m == grid.m { poschl_teller(*g) } else { poschl_teller(*g).shifted(-10.0) }),
        &grid,
        SpectralOptions::default(),
    );
    assert!(matches!(r, Err(Error::UnresolvedSpectrum { coarse: 2, fine: 0 })));
}

#[test]
fn burgers_shock_has_no_unstable_spectrum() {
    let op = burgers_op(0.1);
    let sd = unstable_spectrum(&op, SpectralOptions::default()).unwrap();
    assert_eq!(sd.p, 0);
    let dense_max = op.to_dense().complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    assert!(dense_max <= 1e-6, "dense max real part {dense_max}");
}

#[test]
fn left_shift_removes_unstable_spectrum() {
    let grid = Grid1D::with_spacing(-20.0, 20.0, 0.1).unwrap();
    let sd = unstable_spectrum(&poschl_teller(grid).shifted(-10.0), SpectralOptions::default()).unwrap();
    assert_eq!(sd.p, 0);
}

#[test]
fn bases_are_biorthonormal() {
    let op = coupled_divergence(0.1);
    let sd = unstable_spectrum(&op, SpectralOptions::default()).unwrap();
    assert!(sd.p >= 1);
    let gram = sd.left.transpose() * &sd.right * op.h();
    assert!((gram - DMatrix::identity(sd.p, sd.p)).amax() <= 1e-10);
}

#[test]
fn zero_unstable_count_gives_trivial_projections() {
    let op = burgers_op(0.2);
    let sd = unstable_spectrum(&op, SpectralOptions::default()).unwrap();
    let pr = sd.build_projections(1e-6).unwrap();
    let f = DVector::from_fn(op.dim(), |r, _| (r as f64 * 0.1).sin());
    assert_eq!(pr.pi_u(&f).norm(), 0.0);
    assert_eq!(pr.pi_cs(&f), f);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn spectral_projections_are_complementary(seed in any::<u64>()) {
        let grid = Grid1D::with_spacing(-10.0, 10.0, 0.1).unwrap();
        let op = poschl_teller(grid);
        let sd = unstable_spectrum(&op, SpectralOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = DVector::from_fn(op.dim(), |_, _| rng.gen_range(-1.0..1.0));
        let pu = sd.pi_u(&f);
        let pcs = sd.pi_cs(&f);
        let tol = 1e-10 * f.norm();
        prop_assert!((sd.pi_u(&pu) - &pu).norm() <= tol);
        prop_assert!(sd.pi_u(&pcs).norm() <= tol);
        prop_assert!((&pu + &pcs - &f).norm() <= tol);
    }
}

#[test]
fn projection_fixes_unstable_eigenfunctions() {
    let grid = Grid1D::with_spacing(-10.0, 10.0, 0.1).unwrap();
    let sd = unstable_spectrum(&poschl_teller(grid), SpectralOptions::default()).unwrap();
    let phi = sd.right.column(0).into_owned();
    assert!((sd.pi_u(&phi) - &phi).norm() <= 1e-10 * phi.norm());
}

#[test]
fn conservative_eigenfunctions_have_zero_mean_and_decaying_antiderivatives() {
    let op = coupled_divergence(0.05);
    let sd = unstable_spectrum(&op, SpectralOptions::default()).unwrap();
    assert!(sd.max_relative_mean() <= 1e-6, "mean {}", sd.max_relative_mean());
    for j in 0..sd.p {
        let big = sd.antiderivatives.column(j);
        let n = big.len();
        let max = big.amax();
        for k in [0, 1, n - 2, n - 1] {
            assert!(big[k].abs() <= 1e-6 * max);
        }
    }
}

#[test]
fn nonzero_mean_is_rejected() {
    // sech^2 has mean 2; the Poschl-Teller operator is not in divergence form.
    let grid = Grid1D::with_spacing(-20.0, 20.0, 0.1).unwrap();
    let sd = unstable_spectrum(&poschl_teller(grid), SpectralOptions::default()).unwrap();
    assert!(matches!(sd.build_projections(1e-6), Err(Error::NonZeroMean { index: 0, .. })));
}

#[test]
fn tilde_projection_commutes_with_derivative_at_second_order() {
    let res = |h: f64| {
        let op = coupled_divergence(h);
        let sd = unstable_spectrum(&op, SpectralOptions::default()).unwrap();
        let pr = sd.build_projections(1e-6).unwrap();
        let f = DVector::from_fn(op.dim(), |k, _| {
            let x = op.grid.x(k / 2 + 1);
            (-(x - 0.3).powi(2)).exp() * if k % 2 == 0 { 1.0 } else { -0.5 }
        });
        pr.commutation_residual(&f) / (h * f.norm_squared()).sqrt()
    };
    let r1 = res(0.1);
    let r2 = res(0.05);
    let r3 = res(0.025);
    assert!(r1 / r2 > 3.5 && r2 / r3 > 3.5, "{r1:e} {r2:e} {r3:e}");
}

#[test]
fn tilde_cs_is_complement_of_tilde_u() {
    let op = coupled_divergence(0.1);
    let sd = unstable_spectrum(&op, SpectralOptions::default()).unwrap();
    let pr = sd.build_projections(1e-6).unwrap();
    let f = DVector::from_fn(op.dim(), |k, _| (k as f64 * 0.01).cos());
    assert!((pr.pi_u_tilde(&f) + pr.pi_cs_tilde(&f) - &f).norm() <= 1e-12 * f.norm());
}

#[test]
fn spectra_agree_on_shifted_grids() {
    let g = Grid1D::with_spacing(-20.0, 20.0, 0.05).unwrap();
    let a = unstable_spectrum(&poschl_teller(g), SpectralOptions::default()).unwrap();
    let b = unstable_spectrum(&poschl_teller(g.shifted(0.0173)), SpectralOptions::default()).unwrap();
    for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
        assert!((x - y).norm() <= 1e-6, "{x} vs {y}");
    }
}

#[test]
fn projection_norm_proxies_are_grid_independent() {
    let mut rows = Vec::new();
    for h in [0.1, 0.05, 0.025] {
        let sd = unstable_spectrum(&coupled_divergence(h), SpectralOptions::default()).unwrap();
        let mut row = Vec::new();
        for r in 0..=2 {
            for p in [1.0, 2.0, f64::INFINITY] {
                let (a, b) = sd.projection_norm_proxy(r, p);
                row.push(a);
                row.push(b);
            }
        }
        rows.push(row);
    }
    for k in 0..rows[0].len() {
        let vals: Vec<f64> = rows.iter().map(|r| r[k]).collect();
        let max = vals.iter().copied().fold(0.0, f64::max);
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(max.is_finite() && max / min < 1.1, "entry {k}: {vals:?}");
    }
}

#[test]
fn burgers_satisfies_imaginary_axis_condition() {
    let r = scan_imaginary_axis(&burgers_op(0.1), 10.0, 200).unwrap();
    assert!(r.d1_ok);
    assert_eq!(r.p, 0);
}

#[test]
fn augmented_imaginary_eigenvalue_fails_the_scan() {
    let op = burgers_op(0.1);
    let a = op.banded();
    let n = a.dim();
    let mut t = Vec::new();
    for i in 0..n {
        for j in a.row_range(i) {
            t.push((i, j, a.get(i, j)));
        }
    }
    t.push((n, n + 1, 1.0));
    t.push((n + 1, n, -1.0));
    let aug = Banded::from_triplets(n + 2, &t);
    let r = scan_banded(&aug, 0, 10.0, 200, ScanOptions::default()).unwrap();
    assert!(!r.d1_ok);
    assert!(r.eigenvalues.iter().any(|e| (e.im.abs() - 1.0).abs() < 1e-8 && e.re.abs() < 1e-8));
}

#[test]
fn zero_tau_max_reports_distance_to_nonzero_spectrum() {
    let op = burgers_op(0.1);
    let r = scan_banded(op.banded(), 0, 0.0, 1, ScanOptions::default()).unwrap();
    let dense_min = op
        .to_dense()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .filter(|&d| d >= 1e-6)
        .fold(f64::INFINITY, f64::min);
    assert!((r.min_distance - dense_min).abs() < 1e-9);
    assert!(r.d1_ok);
}

#[test]
fn reports_serialize() {
    let grid = Grid1D::with_spacing(-10.0, 10.0, 0.1).unwrap();
    let op = poschl_teller(grid);
    let sd = unstable_spectrum(&op, SpectralOptions::default()).unwrap();
    let dir = std::env::temp_dir().join(format!("shocklab-spectral-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    sd.write_eigenvalues_csv(&dir.join("eig.csv")).unwrap();
    sd.write_eigenfunctions_csv(&dir.join("eigf.csv")).unwrap();
    let text = std::fs::read_to_string(dir.join("eig.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
    let r = scan_imaginary_axis(&op, 5.0, 50).unwrap();
    r.write_json(&dir.join("d1.json")).unwrap();
    let back: D1Report = serde_json::from_str(&std::fs::read_to_string(dir.join("d1.json")).unwrap()).unwrap();
    assert_eq!(back, r);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("d1.json")).unwrap()).unwrap();
    for key in ["p", "eigenvalues", "d1_ok"] {
        assert!(v.get(key).is_some());
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn unstable_green_at_time_zero_is_projected_delta() {
    let grid = Grid1D::with_spacing(-10.0, 10.0, 0.1).unwrap();
    let sd = unstable_spectrum(&poschl_teller(grid), SpectralOptions::default()).unwrap();
    let y = 90;
    let mut delta = DVector::zeros(grid.m - 2);
    delta[y] = 1.0 / grid.h();
    assert!((sd.unstable_green(0.0, y) - sd.pi_u(&delta)).norm() <= 1e-10 * sd.pi_u(&delta).norm());
    let g1 = sd.unstable_green(0.5, y);
    let expected = sd.right.column(0) * (2.0f64).exp() * sd.left[(y, 0)] + sd.right.column(1) * (0.5 * sd.eigenvalues[1].re).exp() * sd.left[(y, 1)];
    let lam0 = sd.eigenvalues[0].re;
    let expected = expected + sd.right.column(0) * ((0.5 * lam0).exp() - 2.0f64.exp()) * sd.left[(y, 0)];
    assert!((g1 - expected).norm() <= 1e-9 * sd.unstable_green(0.5, y).norm());
}
