use nalgebra::DVector;
use shocklab::disc::{l2_norm, Pde};
use shocklab::evolve::*;
use shocklab::linop::{LinearizedOperator, Which};
use shocklab::model::FluxModel;
use shocklab::profile::{conservation_background, Profile};
use shocklab::Grid1D;

struct Setup {
    grid: Grid1D,
    bg: Profile,
    op: LinearizedOperator,
    pde: Pde,
}

fn burgers(h: f64, half_width: f64) -> Setup {
    let m = FluxModel::burgers(1.0, -1.0);
    let grid = Grid1D::with_spacing(-half_width, half_width, h).unwrap();
    let bg = conservation_background(&m, &grid).unwrap();
    let pde = Pde::Conservation(m);
    let op = LinearizedOperator::assemble(&pde, &bg).unwrap();
    Setup { grid, bg, op, pde }
}

fn gaussian(grid: &Grid1D, amp: f64, x0: f64) -> DVector<f64> {
    DVector::from_fn(grid.m - 2, |k, _| amp * (-(grid.x(k + 1) - x0).powi(2)).exp())
}

#[test]
fn background_is_stationary_for_the_scheme() {
    let s = burgers(0.1, 20.0);
    let st = ImexStepper::new(s.pde.clone(), s.grid, 0.01).unwrap();
    let u = s.bg.flat();
    let next = st.step_pde(&u).unwrap();
    let d = next.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(d < 1e-12, "{d}");
}

#[test]
fn constant_state_is_exact() {
    let s = burgers(0.1, 20.0);
    let st = ImexStepper::new(s.pde.clone(), s.grid, 0.05).unwrap();
    let u = vec![0.7; s.grid.m];
    let next = st.step_pde(&u).unwrap();
    assert!(next.iter().all(|x| (x - 0.7).abs() < 1e-15));
}

#[test]
fn zero_perturbation_stays_zero() {
    let s = burgers(0.1, 20.0);
    let st = ImexStepper::new(s.pde.clone(), s.grid, 0.01).unwrap();
    let v = st.step_perturbation(&s.bg.flat(), &DVector::zeros(s.op.dim())).unwrap();
    assert_eq!(v.norm(), 0.0);
}

#[test]
fn perturbation_step_matches_full_step() {
    let s = burgers(0.1, 20.0);
    let st = ImexStepper::new(s.pde.clone(), s.grid, 0.01).unwrap();
    let ubar = s.bg.flat();
    let mut v = gaussian(&s.grid, 0.01, 1.0);
    for _ in 0..50 {
        let u: Vec<f64> = ubar.iter().zip(pad(1, &v)).map(|(a, b)| a + b).collect();
        let via_full = interior(1, &st.step_pde(&u).unwrap()) - interior(1, &ubar);
        let direct = st.step_perturbation(&ubar, &v).unwrap();
        assert!((&via_full - &direct).amax() <= 1e-8, "{}", (&via_full - &direct).amax());
        v = direct;
    }
}

fn run_pde(st: &ImexStepper, u0: &[f64], t: f64) -> Vec<f64> {
    let steps = (t / st.dt).round() as usize;
    let mut u = u0.to_vec();
    for _ in 0..steps {
        u = st.step_pde(&u).unwrap();
    }
    u
}

#[test]
fn burgers_gaussian_self_convergence() {
    let s = burgers(0.1, 20.0);
    let u0: Vec<f64> = s.bg.flat().iter().zip(pad(1, &gaussian(&s.grid, 0.01, 0.0))).map(|(a, b)| a + b).collect();
    let sols: Vec<Vec<f64>> = [0.01, 0.005, 0.0025]
        .iter()
        .map(|&dt| run_pde(&ImexStepper::new(s.pde.clone(), s.grid, dt).unwrap(), &u0, 1.0))
        .collect();
    let diff = |a: &Vec<f64>, b: &Vec<f64>| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let (e1, e2) = (diff(&sols[0], &sols[1]), diff(&sols[1], &sols[2]));
    assert!(e1 <= 1e-6, "dt vs dt/2: {e1}");
    assert!(e1 / e2 > 3.5, "temporal order ratio {}", e1 / e2);
}

#[test]
fn linear_regime_matches_semigroup() {
    let s = burgers(0.1, 20.0);
    let st = ImexStepper::new(s.pde.clone(), s.grid, 0.0025).unwrap();
    let v0 = gaussian(&s.grid, 1e-8, 1.0);
    let (_, v) = evolve_perturbation(&st, &s.bg, &v0, 1.0, 100).unwrap();
    let reference = s.op.semigroup_apply(&v0, 1.0).unwrap().value;
    let rel = (&v - &reference).norm() / reference.norm();
    assert!(rel <= 1e-4, "{rel}");
}

#[test]
fn mass_is_conserved_up_to_boundary_flux() {
    let s = burgers(0.1, 30.0);
    let st = ImexStepper::new(s.pde.clone(), s.grid, 0.01).unwrap();
    let v0 = gaussian(&s.grid, 0.01, 0.5);
    let (_, v) = evolve_perturbation(&st, &s.bg, &v0, 2.0, 10).unwrap();
    let h = s.grid.h();
    assert!((h * v.sum() - h * v0.sum()).abs() <= 1e-8, "{}", h * (v.sum() - v0.sum()));
}

#[test]
fn norm_channels_are_ordered_and_step_insensitive() {
    let s = burgers(0.1, 20.0);
    let v0 = gaussian(&s.grid, 0.01, 0.0);
    let recs: Vec<TrajectoryRecord> = [0.005, 0.0025]
        .iter()
        .map(|&dt| evolve_perturbation(&ImexStepper::new(s.pde.clone(), s.grid, dt).unwrap(), &s.bg, &v0, 1.0, 1000).unwrap().0)
        .collect();
    for r in &recs {
        for k in 0..r.len() {
            assert!(r.h4[k] >= r.h2[k] && r.h2[k] >= r.l2[k] && r.l2[k] >= 0.0);
            assert!(r.l1[k] >= 0.0 && r.linf[k] >= 0.0);
        }
        assert!(r.times.windows(2).all(|w| w[1] > w[0]));
    }
    let (a, b) = (recs[0].len() - 1, recs[1].len() - 1);
    for (x, y) in [(recs[0].l2[a], recs[1].l2[b]), (recs[0].linf[a], recs[1].linf[b]), (recs[0].h4[a], recs[1].h4[b])] {
        assert!((x - y).abs() / y <= 1e-5, "{x} vs {y}");
    }
}

#[test]
fn quadratic_constant_is_amplitude_independent() {
    let s = burgers(0.1, 20.0);
    let res = NonlinearResidual::new(FluxModel::burgers(1.0, -1.0), &s.bg.flat());
    let shape: Vec<f64> = pad(1, &gaussian(&s.grid, 1.0, 0.3)).iter().zip(s.grid.points()).map(|(g, x)| g * (1.0 + x.sin())).collect();
    let consts: Vec<f64> = [1e-4, 1e-3, 1e-2, 1e-1]
        .iter()
        .map(|&a| res.quadratic_constant(&s.grid, &[shape.iter().map(|x| a * x).collect()]))
        .collect();
    for c in &consts {
        assert!((c / consts[0] - 1.0).abs() < 0.2, "{consts:?}");
    }
    // Burgers: N(v) = -v^2/2 exactly.
    let v: Vec<f64> = shape.iter().map(|x| 0.01 * x).collect();
    let n = res.eval(&v);
    assert!(n.iter().zip(&v).all(|(a, b)| (a + b * b / 2.0).abs() < 1e-15));
}

#[test]
fn reduced_shifted_zero_data() {
    let s = burgers(0.1, 20.0);
    let st = ImexStepper::new(s.pde.clone(), s.grid, 0.01).unwrap();
    let rs = ReducedShifted::new(&st, &s.op, &s.bg).unwrap();
    let (rec, v) = evolve_reduced_shifted(&rs, &DVector::zeros(s.op.dim()), 1.0, 10).unwrap();
    assert!(v.amax() < 1e-14);
    assert!(rec.alpha.iter().all(|a| a.abs() < 1e-12));
}

#[test]
fn translate_data_keeps_its_phase() {
    let s = burgers(0.1, 30.0);
    let st = ImexStepper::new(s.pde.clone(), s.grid, 0.01).unwrap();
    let rs = ReducedShifted::new(&st, &s.op, &s.bg).unwrap();
    let translate = interior(1, &s.bg.sample_shifted(&s.grid, 0.1)) - interior(1, &s.bg.flat());
    let (rec, _) = evolve_reduced_shifted(&rs, &translate, 10.0, 100).unwrap();
    assert!((rec.alpha[rec.len() - 1] - 0.1).abs() <= 0.01, "{}", rec.alpha[rec.len() - 1]);
}

#[test]
fn phase_converges_to_mass_prediction() {
    // Burgers: int (ubar(x - a) - ubar) dx = a (u_- - u_+) = 2a, so the
    // final shift is half the perturbation mass.
    let s = burgers(0.1, 40.0);
    let st = ImexStepper::new(s.pde.clone(), s.grid, 0.02).unwrap();
    let rs = ReducedShifted::new(&st, &s.op, &s.bg).unwrap();
    let v0 = gaussian(&s.grid, 0.05, -1.0);
    let mass = s.grid.h() * v0.sum();
    let (rec, v) = evolve_reduced_shifted(&rs, &v0, 40.0, 50).unwrap();
    let last = rec.len() - 1;
    assert!((rec.alpha[last] - mass / 2.0).abs() <= 0.01 * mass.abs() + 1e-3, "{} vs {}", rec.alpha[last], mass / 2.0);
    assert!(v.amax() < 1e-3);
    assert!(s.op.pi2(&v).unwrap().abs() < 1e-12);
}

#[test]
fn reconstruction_agrees_with_direct_evolution() {
    let s = burgers(0.05, 20.0);
    let dt = 0.01;
    let st = ImexStepper::new(s.pde.clone(), s.grid, dt).unwrap();
    let rs = ReducedShifted::new(&st, &s.op, &s.bg).unwrap();
    let v0 = gaussian(&s.grid, 0.02, 0.5);
    let u0: Vec<f64> = s.bg.flat().iter().zip(pad(1, &v0)).map(|(a, b)| a + b).collect();
    let (rec, v) = evolve_reduced_shifted(&rs, &v0, 5.0, 100).unwrap();
    let u_direct = run_pde(&st, &u0, 5.0);
    let u_rec = rs.reconstruct(&v, rec.alpha[rec.len() - 1]);
    let err: Vec<f64> = u_direct.iter().zip(&u_rec).map(|(a, b)| a - b).collect();
    let e = l2_norm(&s.grid, &err);
    assert!(e <= 2e-4, "{e}");
}

#[test]
fn denominator_guard_trips() {
    let s = burgers(0.1, 20.0);
    let st = ImexStepper::new(s.pde.clone(), s.grid, 0.01).unwrap();
    let rs = ReducedShifted::new(&st, &s.op, &s.bg).unwrap();
    let phi = s.op.phi.clone().unwrap();
    let phi_x = d0(&s.grid, 1, &phi);
    // pi2(d/dx (A phi_x)) = -A |phi_x|^2 / |phi|^2
    let mut tripped = None;
    for k in 0..40 {
        let amp = 0.1 * 1.3f64.powi(k);
        let v = s.op.project(&(&phi_x * amp), Which::One).unwrap();
        let before = v.clone();
        match rs.alpha_dot(&v) {
            Ok(_) => {}
            Err(shocklab::Error::DenominatorSmall(d)) => {
                assert!(d <= 0.5);
                assert_eq!(v, before);
                tripped = Some(amp);
                break;
            }
            Err(e) => panic!("{e}"),
        }
    }
    assert!(tripped.is_some());
}

#[test]
fn damping_monitor_cases() {
    let s = burgers(0.1, 30.0);
    let st = ImexStepper::new(s.pde.clone(), s.grid, 0.01).unwrap();
    let (zero, _) = evolve_perturbation(&st, &s.bg, &DVector::zeros(s.op.dim()), 1.0, 10).unwrap();
    let r = damping_monitor(&zero, DampingOptions::default()).unwrap();
    assert!(r.margin.is_infinite());

    let (rec, _) = evolve_perturbation(&st, &s.bg, &gaussian(&s.grid, 0.01, 0.0), 20.0, 20).unwrap();
    let r = damping_monitor(&rec, DampingOptions::default()).unwrap();
    assert!(r.c_min <= 100.0, "{r:?}");

    let mut bad = rec.clone();
    for (k, t) in bad.times.clone().iter().enumerate() {
        bad.h4[k] *= t.exp();
    }
    assert!(matches!(damping_monitor(&bad, DampingOptions::default()), Err(shocklab::Error::Infeasible { .. })));
}

#[test]
fn trajectory_csv_roundtrip() {
    let s = burgers(0.1, 20.0);
    let st = ImexStepper::new(s.pde.clone(), s.grid, 0.01).unwrap();
    let (rec, _) = evolve_perturbation(&st, &s.bg, &gaussian(&s.grid, 0.01, 0.0), 0.5, 10).unwrap();
    let path = std::env::temp_dir().join("shocklab_traj.csv");
    rec.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,l1,l2,linf,h2,h4,alpha,alpha_dot");
    assert_eq!(lines.len(), rec.len() + 1);
    let row: Vec<f64> = lines[1].split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(row[2], rec.l2[0]);
}
