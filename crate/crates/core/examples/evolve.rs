//! Nonlinear evolution of a perturbed Burgers shock in the shifted frame,
//! with norm channels, the phase and the damping monitor.

use shocklab::lab::{run_evolve, ExperimentConfig, GridSpec, ModelSpec, PerturbationSpec, Shape};

fn main() -> shocklab::Result<()> {
    let root = std::env::var(shocklab::lab::OUTPUT_ROOT_ENV).unwrap_or_else(|_| "target/examples-out".into());
    let mut cfg = ExperimentConfig::new(ModelSpec::Burgers { u_minus: 1.0, u_plus: -1.0 });
    cfg.grid = GridSpec { x_min: -30.0, x_max: 30.0, h: 0.1 };
    cfg.dt = 0.02;
    cfg.t_end = 40.0;
    cfg.perturbation = PerturbationSpec { shape: Shape::Random { width: 1.0, bumps: 5 }, amplitude: 0.05, seed: 7 };
    let dir = std::path::Path::new(&root).join("evolve");
    std::fs::create_dir_all(&dir)?;
    let r = run_evolve(&cfg, Some(&dir))?;
    println!("{} with {}: {} samples", r.model, r.scheme, r.samples);
    println!("|v|_L2 {:.3e} -> {:.3e}, alpha -> {:.5}", r.l2_initial, r.l2_final, r.alpha_final);
    if let Some(d) = &r.damping {
        println!("damping constant {:.3} (margin {:.1})", d.c_min, d.margin);
    }
    println!("trajectory written to {}", dir.join("trajectory.csv").display());
    Ok(())
}
