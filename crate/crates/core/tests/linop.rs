use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shocklab::disc::Pde;
use shocklab::linop::{LinearizedOperator, SemigroupOptions, Which};
use shocklab::model::FluxModel;
use shocklab::profile::conservation_background;
use shocklab::Grid1D;

fn burgers_op(h: f64) -> LinearizedOperator {
    let m = FluxModel::burgers(1.0, -1.0);
    let grid = Grid1D::with_spacing(-20.0, 20.0, h).unwrap();
    let p = conservation_background(&m, &grid).unwrap();
    LinearizedOperator::assemble(&Pde::Conservation(m), &p).unwrap()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

#[test]
fn constant_coefficient_rows_match_discrete_symbol() {
    let grid = Grid1D::with_spacing(-10.0, 10.0, 0.05).unwrap();
    let h = grid.h();
    let a = 0.7;
    let op = LinearizedOperator::constant_coefficient(grid, &DMatrix::from_element(1, 1, a));
    for k in [0.3, 1.0, 4.0, 20.0] {
        let re = -(4.0 / (h * h)) * (k * h / 2.0).sin().powi(2);
        let im = -a * (k * h).sin() / h;
        let c = DVector::from_fn(op.dim(), |r, _| (k * grid.x(r + 1)).cos());
        let s = DVector::from_fn(op.dim(), |r, _| (k * grid.x(r + 1)).sin());
        let lc = op.apply(&c);
        let ls = op.apply(&s);
        // Rounding in the stencil sum is relative to the row norm, about 4/h^2.
        let scale = op.banded().norm_inf();
        for r in 1..op.dim() - 1 {
            // L e^{ikx} = lambda e^{ikx}, split into real and imaginary parts.
            assert!((lc[r] - (re * c[r] - im * s[r])).abs() <= 1e-12 * scale, "k={k} row {r}");
            assert!((ls[r] - (re * s[r] + im * c[r])).abs() <= 1e-12 * scale, "k={k} row {r}");
        }
    }
}

#[test]
fn zero_function_maps_to_zero() {
    let op = burgers_op(0.1);
    assert_eq!(op.apply(&DVector::zeros(op.dim())).norm(), 0.0);
}

#[test]
fn burgers_translation_mode_is_second_order() {
    let r1 = burgers_op(0.05).zero_mode_residual().unwrap();
    let r2 = burgers_op(0.025).zero_mode_residual().unwrap();
    assert!(r1 <= 1e-3, "residual {r1}");
    assert!(r1 / r2 >= 3.5, "ratio {}", r1 / r2);
}

#[test]
fn discrete_translation_mode_is_close_to_sampled_derivative() {
    let op = burgers_op(0.05);
    let phi = op.phi.as_ref().unwrap();
    let ps = op.phi_sampled.as_ref().unwrap();
    assert!((phi - ps).norm() / ps.norm() < 1e-3);
    assert!(op.zero_eigenvalue.abs() < 1e-8, "eigenvalue {}", op.zero_eigenvalue);
}

#[test]
fn projection_of_phi_and_its_complement() {
    let op = burgers_op(0.1);
    let phi = op.phi.clone().unwrap();
    let p2 = op.project(&phi, Which::Two).unwrap();
    let p1 = op.project(&phi, Which::One).unwrap();
    assert!((p2 - &phi).norm() <= 1e-12 * phi.norm());
    assert!(p1.norm() <= 1e-12 * phi.norm());

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let v = random_vec(&mut rng, op.dim());
    let w = &v - &phi * (op.inner(&phi, &v) / op.inner(&phi, &phi));
    assert!(op.project(&w, Which::Two).unwrap().norm() <= 1e-12 * w.norm());
}

#[test]
fn projection_rejects_wrong_length() {
    let op = burgers_op(0.1);
    assert!(op.project(&DVector::zeros(op.dim() + 1), Which::One).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn projections_are_complementary_idempotents(seed in any::<u64>()) {
        let op = burgers_op(0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_vec(&mut rng, op.dim());
        let phi = op.phi.as_ref().unwrap();
        let p1 = op.project(&v, Which::One).unwrap();
        let p2 = op.project(&v, Which::Two).unwrap();
        let tol = 1e-12 * v.norm();
        prop_assert!((&p1 + &p2 - &v).norm() <= tol);
        prop_assert!((op.project(&p2, Which::Two).unwrap() - &p2).norm() <= tol);
        prop_assert!(op.project(&p2, Which::One).unwrap().norm() <= tol);
        prop_assert!(op.inner(phi, &p1).abs() <= 1e-12 * op.norm(&v) * op.norm(phi));
    }

    #[test]
    fn adjoint_is_the_transpose(seed in any::<u64>()) {
        let op = burgers_op(0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_vec(&mut rng, op.dim());
        let v = random_vec(&mut rng, op.dim());
        let lhs = op.inner(&op.apply(&u), &v);
        let rhs = op.inner(&u, &op.apply_adjoint(&v));
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }
}

#[test]
fn semigroup_at_time_zero_is_identity() {
    let op = burgers_op(0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let v = random_vec(&mut rng, op.dim());
    assert_eq!(op.semigroup_apply(&v, 0.0).unwrap().value, v);
    assert!(op.semigroup_apply(&v, -1.0).is_err());
}

#[test]
fn semigroup_on_exact_toeplitz_mode() {
    // D2 - a D0 with Dirichlet ends is tridiagonal Toeplitz: eigenvectors
    // rho^j sin(j q pi/(M+1)) with rho = sqrt(sub/super).
    let grid = Grid1D::with_spacing(-10.0, 10.0, 0.1).unwrap();
    let h = grid.h();
    let a = 0.5;
    let op = LinearizedOperator::constant_coefficient(grid, &DMatrix::from_element(1, 1, a));
    let mm = op.dim();
    let sub = 1.0 / (h * h) + a / (2.0 * h);
    let sup = 1.0 / (h * h) - a / (2.0 * h);
    let rho = (sub / sup).sqrt();
    for q in [1usize, 3, 10] {
        let theta = q as f64 * std::f64::consts::PI / (mm + 1) as f64;
        let lambda = -2.0 / (h * h) + 2.0 * (sub * sup).sqrt() * theta.cos();
        let v = DVector::from_fn(mm, |r, _| rho.powi(r as i32 + 1) * ((r + 1) as f64 * theta).sin());
        assert!((op.apply(&v) - &v * lambda).norm() <= 1e-10 * lambda.abs() * v.norm());
        for t in [0.1, 1.0] {
            let r = op.semigroup_apply(&v, t).unwrap();
            let exact = &v * (lambda * t).exp();
            let err = (&r.value - &exact).norm() / exact.norm();
            assert!(err <= 1e-6, "q={q} t={t} err {err:e}");
        }
    }
}

#[test]
fn semigroup_property_holds() {
    let op = burgers_op(0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let v = random_vec(&mut rng, op.dim());
    for (t, s) in [(0.1, 0.1), (0.1, 1.0), (1.0, 1.0)] {
        let whole = op.semigroup_apply(&v, t + s).unwrap().value;
        let first = op.semigroup_apply(&v, s).unwrap().value;
        let split = op.semigroup_apply(&first, t).unwrap().value;
        let rel = (&whole - &split).norm() / whole.norm();
        assert!(rel <= 1e-6, "t={t} s={s}: {rel:e}");
    }
}

#[test]
fn reduced_coordinates_are_orthonormal() {
    let op = burgers_op(0.2);
    let red = op.reduced().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_vec(&mut rng, red.dim());
    let y = red.embed(&x);
    assert!((y.norm() - x.norm()).abs() <= 1e-12 * x.norm());
    assert!(op.pi2(&y).unwrap().abs() <= 1e-12 * x.norm());
    assert!((red.restrict(&y) - &x).norm() <= 1e-12 * x.norm());
}

#[test]
fn reduced_spectrum_is_full_spectrum_without_zero() {
    let op = burgers_op(0.25);
    let red = op.reduced().unwrap();
    let mut full: Vec<_> = op.to_dense().complex_eigenvalues().iter().copied().collect();
    let mut reduced = red.eigenvalues();
    let key = |z: &num_complex::Complex64| (z.re * 1e6).round() as i64 * 1_000_000_000 + (z.im * 1e6).round() as i64;
    // Remove the eigenvalue closest to the origin from the full spectrum.
    let iz = (0..full.len()).min_by(|&a, &b| full[a].norm().partial_cmp(&full[b].norm()).unwrap()).unwrap();
    full.remove(iz);
    full.sort_by_key(key);
    reduced.sort_by_key(key);
    assert_eq!(full.len(), reduced.len());
    // Compare the slowly decaying part, which is well conditioned.
    let mut slow_full: Vec<_> = full.iter().filter(|z| z.re > -1.0).collect();
    let mut slow_red: Vec<_> = reduced.iter().filter(|z| z.re > -1.0).collect();
    slow_full.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
    slow_red.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
    assert_eq!(slow_full.len(), slow_red.len());
    for (a, b) in slow_full.iter().zip(&slow_red) {
        assert!((*a - *b).norm() <= 1e-6, "{a} vs {b}");
    }
}

#[test]
fn semigroup_commutes_with_the_complement_projection() {
    let op = burgers_op(0.2);
    let red = op.reduced().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let v = random_vec(&mut rng, op.dim());
    let p1v = op.project(&v, Which::One).unwrap();
    for t in [0.1, 1.0] {
        let full = op.project(&op.semigroup_apply(&p1v, t).unwrap().value, Which::One).unwrap();
        let x = red.semigroup_apply(&red.restrict(&p1v), t).unwrap().value;
        let rel = (full - red.embed(&x)).norm() / v.norm();
        assert!(rel <= 1e-6, "t={t}: {rel:e}");
    }
}

#[test]
fn divergence_form_conserves_mass() {
    let op = burgers_op(0.1);
    let v = DVector::from_fn(op.dim(), |r, _| {
        let x = op.grid.x(r + 1);
        (-(x * x)).exp()
    });
    let m = op.mass_defect(&v);
    assert!(m[0].abs() <= 1e-10, "mass defect {}", m[0]);
}

#[test]
fn matrix_market_dump_round_trips() {
    let op = burgers_op(0.5);
    let dir = std::env::temp_dir().join(format!("shocklab-mm-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("l.mtx");
    op.write_matrix_market(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('%'));
    let header: Vec<usize> = lines.next().unwrap().split_whitespace().map(|s| s.parse().unwrap()).collect();
    assert_eq!(header[0], op.dim());
    let mut dense = DMatrix::zeros(op.dim(), op.dim());
    for l in lines {
        let f: Vec<&str> = l.split_whitespace().collect();
        let (i, j): (usize, usize) = (f[0].parse().unwrap(), f[1].parse().unwrap());
        dense[(i - 1, j - 1)] = f[2].parse::<f64>().unwrap();
    }
    assert_eq!(dense, op.to_dense());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn block_semigroup_matches_single_vector_calls() {
    let op = burgers_op(0.2);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = random_vec(&mut rng, op.dim());
    let b = random_vec(&mut rng, op.dim());
    let mut block = DMatrix::zeros(op.dim(), 2);
    block.set_column(0, &a);
    block.set_column(1, &b);
    let r = op.semigroup_apply_many(&block, 0.5, SemigroupOptions::default()).unwrap();
    let ra = op.semigroup_apply(&a, 0.5).unwrap().value;
    assert!((r.value.column(0) - ra).norm() <= 1e-6 * a.norm());
}
