use nalgebra::{DMatrix, DVector};
use shocklab::model::{EndpointData, FluxModel};
use shocklab::profile::{
    check_transversality, check_transversality_with_step, conservation_background, solve_profile_conservation,
};
use shocklab::{Error, Grid1D};

fn burgers_grid(h: f64) -> Grid1D {
    Grid1D::with_spacing(-20.0, 20.0, h).unwrap()
}

#[test]
fn burgers_profile_matches_tanh() {
    let m = FluxModel::burgers(1.0, -1.0);
    let g = burgers_grid(0.05);
    let p = solve_profile_conservation(&m, &g).unwrap();
    let err = (0..g.m).map(|i| (p.ubar[(0, i)] + (g.x(i) / 2.0).tanh()).abs()).fold(0.0, f64::max);
    assert!(err < 1e-6, "sup error {err:e}");
    assert!((p.eval(0.0).1[0] + 0.5).abs() < 1e-8);
    assert!(p.residual_sup < 1e-8 * (1.0 + 0.5));
}

#[test]
fn burgers_decay_rate_is_one() {
    let m = FluxModel::burgers(1.0, -1.0);
    let p = solve_profile_conservation(&m, &burgers_grid(0.05)).unwrap();
    assert!(p.theta_hat > 0.9 && p.theta_hat < 1.1, "theta {}", p.theta_hat);
    assert!(p.tail_fit_error < 0.1, "misfit {}", p.tail_fit_error);
}

#[test]
fn centered_defect_converges_at_second_order() {
    let m = FluxModel::burgers(1.0, -1.0);
    let d1 = solve_profile_conservation(&m, &burgers_grid(0.1)).unwrap().fd_defect();
    let d2 = solve_profile_conservation(&m, &burgers_grid(0.05)).unwrap().fd_defect();
    let order = (d1 / d2).log2();
    assert!(order >= 1.9, "order {order}");
}

#[test]
fn shifted_grid_gives_same_profile() {
    let m = FluxModel::burgers(1.0, -1.0);
    let g = burgers_grid(0.05);
    let p = solve_profile_conservation(&m, &g).unwrap();
    let q = solve_profile_conservation(&m, &g.shifted(0.0125)).unwrap();
    let diff = (0..q.grid.m)
        .filter(|&i| q.grid.x(i).abs() < 15.0)
        .map(|i| (q.ubar[(0, i)] - p.eval(q.grid.x(i)).0[0]).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-8, "diff {diff:e}");
}

/// RK4 shooting from `u_-` along the unstable eigenvector, stopped at the phase
/// condition by bisection on the step.
fn shooting_oracle(m: &FluxModel, x_end: f64) -> (Vec<f64>, Vec<DVector<f64>>) {
    let e = EndpointData::compute(m).unwrap();
    let k = e.a_minus.iter().position(|&a| a > 0.0).unwrap();
    let (a, r) = (e.a_minus[k], e.r_minus[k].clone());
    let fm = m.f(m.u_minus.as_slice());
    let rhs = |u: &DVector<f64>| m.f(u.as_slice()) - &fm;
    let mid = 0.5 * (m.u_minus[0] + m.u_plus[0]);
    let sign = if (m.u_plus[0] - m.u_minus[0]) * r[0] > 0.0 { 1.0 } else { -1.0 };
    let mut u = &m.u_minus + &r * (sign * 1e-10);
    let dx = 1e-3;
    let step = |u: &DVector<f64>, dx: f64| {
        let k1 = rhs(u);
        let k2 = rhs(&(u + &k1 * (0.5 * dx)));
        let k3 = rhs(&(u + &k2 * (0.5 * dx)));
        let k4 = rhs(&(u + &k3 * dx));
        u + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dx / 6.0)
    };
    let _ = a;
    // March until the phase is crossed.
    while (u[0] - mid) * (m.u_minus[0] - mid) > 0.0 {
        u = step(&u, dx);
    }
    // Step back to the exact crossing.
    let mut lo = -dx;
    let mut hi = 0.0;
    for _ in 0..60 {
        let c = 0.5 * (lo + hi);
        if (step(&u, c)[0] - mid) * (m.u_minus[0] - mid) > 0.0 {
            lo = c;
        } else {
            hi = c;
        }
    }
    u = step(&u, hi);
    let xs: Vec<f64> = (0..=((x_end / dx) as usize)).map(|i| i as f64 * dx).collect();
    let mut out = vec![u.clone()];
    for _ in 1..xs.len() {
        u = step(&u, dx);
        out.push(u.clone());
    }
    (xs, out)
}

#[test]
fn coupled2_profile_matches_shooting_oracle() {
    let m = FluxModel::coupled2();
    let g = Grid1D::with_spacing(-25.0, 25.0, 0.05).unwrap();
    let p = solve_profile_conservation(&m, &g).unwrap();
    assert!(p.residual_sup <= 1e-8 * (1.0 + 3.0));
    let (xs, us) = shooting_oracle(&m, 8.0);
    let mut err = 0.0_f64;
    for (x, u) in xs.iter().zip(&us).step_by(50) {
        err = err.max((p.eval(*x).0 - u).amax());
    }
    assert!(err < 1e-6, "profile vs shooting {err:e}");
    let end = (p.ubar.column(0) - &m.u_minus).amax().max((p.ubar.column(g.m - 1) - &m.u_plus).amax());
    assert!(end < 1e-6);
}

#[test]
fn burgers_is_transversal() {
    let m = FluxModel::burgers(1.0, -1.0);
    let p = solve_profile_conservation(&m, &burgers_grid(0.05)).unwrap();
    let r = check_transversality(&m, &p).unwrap();
    assert!(r.is_transversal);
    assert!(r.connection_defect < 1e-8);
}

#[test]
fn constant_profile_is_degenerate() {
    let m = FluxModel::burgers(1.0, -1.0);
    let mut p = solve_profile_conservation(&m, &burgers_grid(0.1)).unwrap();
    p.ubar = DMatrix::from_element(1, p.grid.m, 1.0);
    p.ubar_x = DMatrix::zeros(1, p.grid.m);
    assert!(matches!(check_transversality(&m, &p), Err(Error::Degenerate(_))));
}

#[test]
fn coupled2_transversality_agrees_under_step_halving() {
    let m = FluxModel::coupled2();
    let p = solve_profile_conservation(&m, &Grid1D::with_spacing(-25.0, 25.0, 0.05).unwrap()).unwrap();
    let a = check_transversality_with_step(&m, &p, 0.05).unwrap();
    let b = check_transversality_with_step(&m, &p, 0.025).unwrap();
    assert!(a.is_transversal && b.is_transversal);
    assert!((a.angle - b.angle).abs() < 1e-4);
    assert!(a.connection_defect < 1e-4 && b.connection_defect < 1e-4, "{} {}", a.connection_defect, b.connection_defect);
}

#[test]
fn discrete_background_is_close_to_ode_profile() {
    let m = FluxModel::burgers(1.0, -1.0);
    let g = burgers_grid(0.05);
    let bg = conservation_background(&m, &g).unwrap();
    let err = (0..g.m).map(|i| (bg.ubar[(0, i)] + (g.x(i) / 2.0).tanh()).abs()).fold(0.0, f64::max);
    assert!(err < 1e-3, "O(h^2) closeness {err:e}");
    assert!(bg.phase_source.abs() < 1e-6);
}
