use nalgebra::DVector;
use shocklab::disc::Pde;
use shocklab::evolve::ImexStepper;
use shocklab::model::{EndpointData, FluxModel};
use shocklab::profile::conservation_background;
use shocklab::tracking::*;
use shocklab::Grid1D;

fn erf_oracle(x: f64) -> f64 {
    // Maclaurin series, independent of the library's erf
    let mut term = x;
    let mut sum = x;
    for n in 1..80 {
        term *= -x * x / n as f64;
        sum += term / (2 * n + 1) as f64;
    }
    2.0 / std::f64::consts::PI.sqrt() * sum
}

fn unit() -> KernelE {
    KernelE::scalar(1.0, -1.0, 1.0).unwrap()
}

#[test]
fn centre_value_is_erf_half() {
    let e = unit().eval_scalar(0.0, 1.0, Channel::E).unwrap();
    assert!((e - erf_oracle(0.5)).abs() < 1e-12, "{e}");
    assert!((e - 0.5205).abs() < 1e-4);
    for t in [0.3, 2.0, 7.0] {
        let e = unit().eval_scalar(0.0, t, Channel::E).unwrap();
        assert!((e - erf_oracle(t.sqrt() / 2.0)).abs() < 1e-12);
    }
}

#[test]
fn derivative_channels_match_finite_differences() {
    let k = KernelE::scalar(0.7, -1.3, 0.8).unwrap();
    let d = 1e-3;
    let fd = |f: &dyn Fn(f64) -> f64, x: f64| (-f(x + 2.0 * d) + 8.0 * f(x + d) - 8.0 * f(x - d) + f(x - 2.0 * d)) / (12.0 * d);
    for &(y, t) in &[(-1.0, 1.0), (-3.0, 2.5), (2.0, 1.5), (0.5, 0.7), (-0.2, 4.0)] {
        let ey = fd(&|y| k.eval_scalar(y, t, Channel::E).unwrap(), y);
        let et = fd(&|t| k.eval_scalar(y, t, Channel::E).unwrap(), t);
        let ety = fd(&|t| k.eval_scalar(y, t, Channel::Ey).unwrap(), t);
        assert!((ey - k.eval_scalar(y, t, Channel::Ey).unwrap()).abs() < 1e-8, "e_y at {y},{t}");
        assert!((et - k.eval_scalar(y, t, Channel::Et).unwrap()).abs() < 1e-8, "e_t at {y},{t}");
        assert!((ety - k.eval_scalar(y, t, Channel::Ety).unwrap()).abs() < 1e-8, "e_ty at {y},{t}");
    }
    // the stated central difference at (-1, 1)
    let dt = 1e-4;
    let c = (k.eval_scalar(-1.0, 1.0 + dt, Channel::E).unwrap() - k.eval_scalar(-1.0, 1.0 - dt, Channel::E).unwrap()) / (2.0 * dt);
    assert!((c - k.eval_scalar(-1.0, 1.0, Channel::Et).unwrap()).abs() < 1e-6);
}

#[test]
fn far_field_and_small_time_limits() {
    let k = unit();
    assert!(k.eval_scalar(-60.0, 2.0, Channel::E).unwrap().abs() < 1e-15);
    assert!(k.eval_scalar(60.0, 2.0, Channel::E).unwrap().abs() < 1e-15);
    assert!(k.eval_scalar(-0.5, 1e-4, Channel::E).unwrap().abs() < 1e-12);
    assert!(k.eval_scalar(-1.0, 0.0, Channel::Ey).is_err());
    assert!(k.eval_scalar(-1.0, -1.0, Channel::E).is_err());
    // inside the light cone e tends to the weight
    assert!((k.eval_scalar(-5.0, 400.0, Channel::E).unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn burgers_weight_is_inverse_jump() {
    let m = FluxModel::burgers(1.0, -1.0);
    let k = KernelE::for_scalar_model(&m).unwrap();
    assert_eq!(k.minus.len(), 1);
    assert_eq!(k.plus.len(), 1);
    assert!((k.minus[0].weight[0] + 0.5).abs() < 1e-14);
    assert!((k.minus[0].speed - 1.0).abs() < 1e-14 && (k.plus[0].speed - 1.0).abs() < 1e-14);
}

#[test]
fn system_weights_annihilate_outgoing_modes() {
    let m = FluxModel::coupled2();
    let e = EndpointData::compute(&m).unwrap();
    let k = KernelE::from_model(&m, &e).unwrap();
    let jump = &m.u_plus - &m.u_minus;
    // the weights sum against the jump to one on each side at large t
    let far: DVector<f64> = k.eval(-1.0, 1e4, Channel::E).unwrap();
    let near: DVector<f64> = k.eval(1.0, 1e4, Channel::E).unwrap();
    assert!((far.dot(&jump) - 1.0).abs() < 1e-6, "{}", far.dot(&jump));
    assert!((near.dot(&jump) - 1.0).abs() < 1e-6, "{}", near.dot(&jump));
}

#[test]
fn pairings_match_fine_quadrature() {
    let k = KernelE::scalar(1.0, -0.6, -0.5).unwrap();
    let grid = Grid1D::with_spacing(-12.0, 12.0, 0.1).unwrap();
    let f: Vec<f64> = grid.points().iter().map(|&x| (x - 0.7) * (-(x - 0.5).powi(2) / 3.0).exp()).collect();
    for &tau in &[0.01, 0.3, 2.0, 9.0] {
        for ch in [Channel::E, Channel::Ey, Channel::Et, Channel::Ety] {
            let exact = kernel_pairing(&k, &grid, &f, tau, ch).unwrap();
            // fine midpoint rule on the piecewise-linear interpolant
            let sub = 400;
            let mut q = 0.0;
            for i in 0..grid.m - 1 {
                let hh = grid.h() / sub as f64;
                for s in 0..sub {
                    let th = (s as f64 + 0.5) / sub as f64;
                    let x = grid.x(i) + th * grid.h();
                    let fv = (1.0 - th) * f[i] + th * f[i + 1];
                    q += hh * fv * k.eval_scalar(x, tau, ch).unwrap();
                }
            }
            let tol = 1e-6 * (1.0 + q.abs());
            assert!((exact - q).abs() < tol, "{ch:?} tau {tau}: {exact} vs {q}");
        }
    }
}

#[test]
fn snapshot_gap_guard() {
    let k = unit();
    let grid = Grid1D::with_spacing(-5.0, 5.0, 0.1).unwrap();
    let z = vec![0.0; grid.m];
    let forcing = vec![(0.0, z.clone()), (2.0, z.clone())];
    assert!(matches!(
        compute_alpha(&k, &grid, &z, &forcing, 1.0),
        Err(shocklab::Error::SnapshotGapTooLarge { .. })
    ));
}

fn burgers_setup(h: f64, dt: f64) -> (FluxModel, ImexStepper, shocklab::profile::Profile) {
    let m = FluxModel::burgers(1.0, -1.0);
    let grid = Grid1D::with_spacing(-20.0, 20.0, h).unwrap();
    let bg = conservation_background(&m, &grid).unwrap();
    let st = ImexStepper::new(Pde::Conservation(m.clone()), grid, dt).unwrap();
    (m, st, bg)
}

#[test]
fn zero_data_gives_zero_shift() {
    let (m, st, bg) = burgers_setup(0.1, 0.02);
    let k = KernelE::for_scalar_model(&m).unwrap();
    let run = track_shock(&k, &st, &bg, &m, &DVector::zeros(bg.grid.m - 2), 5.0, 25, 1e-6).unwrap();
    assert!(run.channels.alpha.iter().all(|a| *a == 0.0));
    assert!(run.picard_iterations >= 2);
}

#[test]
fn translate_is_located() {
    let (m, st, bg) = burgers_setup(0.1, 0.02);
    let k = KernelE::for_scalar_model(&m).unwrap();
    let a0 = 0.05;
    let shifted = bg.sample_shifted(&bg.grid, a0);
    let ubar = bg.flat();
    let w0 = DVector::from_iterator(bg.grid.m - 2, (1..bg.grid.m - 1).map(|i| shifted[i] - ubar[i]));
    let run = track_shock(&k, &st, &bg, &m, &w0, 100.0, 25, 1e-6).unwrap();
    let last = *run.channels.alpha.last().unwrap();
    assert!((last - a0).abs() <= 0.1 * a0, "alpha(100) = {last}");
    assert!(run.picard_residual <= 1e-6, "{}", run.picard_residual);
}

#[test]
fn alpha_dot_is_the_derivative_of_alpha() {
    let (m, st, bg) = burgers_setup(0.1, 0.01);
    let k = KernelE::for_scalar_model(&m).unwrap();
    let w0 = DVector::from_fn(bg.grid.m - 2, |j, _| {
        let x = bg.grid.x(j + 1);
        0.05 * (-(x - 2.0).powi(2)).exp()
    });
    let run = track_shock(&k, &st, &bg, &m, &w0, 8.0, 10, 1e-8).unwrap();
    let c = &run.channels;
    let dt = c.times[1] - c.times[0];
    let scale = c.alpha_dot.iter().skip(10).fold(0.0f64, |a, b| a.max(b.abs()));
    for j in 10..c.times.len() - 2 {
        let num = (c.alpha[j + 1] - c.alpha[j - 1]) / (2.0 * dt);
        assert!((num - c.alpha_dot[j]).abs() <= 1e-3 * scale.max(c.alpha_dot[j].abs()) + 1e-3 * scale, "t = {}: {num} vs {}", c.times[j], c.alpha_dot[j]);
    }
}

#[test]
fn audit_exponents_in_the_asymptotic_window() {
    let k = KernelE::scalar(1.0, -1.0, -0.5).unwrap();
    let ts: Vec<f64> = (0..25).map(|i| 10f64.powf(1.0 + 2.0 * i as f64 / 24.0)).collect();
    let audit = kernel_audit(&k, &ts).unwrap();
    for f in &audit.p_exponent_fits {
        assert!((f.slope - f.expected).abs() <= 0.05, "{:?} p={} slope {} expected {}", f.channel, f.p, f.slope, f.expected);
    }
    assert!(audit.c_fit.is_finite() && audit.c_fit > 0.0);
    let (lo, hi) = audit.et_sup_ratio;
    assert!(hi / lo < 2.0, "{lo} {hi}");
}
