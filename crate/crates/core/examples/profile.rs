//! Standing-wave profiles: scalar Burgers against its tanh closed form, the
//! 2x2 coupled system and the sech pulse. Writes `profile.csv` plus sidecar.

use shocklab::lab::{run_profile, ExperimentConfig, GridSpec, ModelSpec};

fn main() -> shocklab::Result<()> {
    let root = std::env::var(shocklab::lab::OUTPUT_ROOT_ENV).unwrap_or_else(|_| "target/examples-out".into());
    for (tag, model) in [
        ("burgers", ModelSpec::Burgers { u_minus: 1.0, u_plus: -1.0 }),
        ("coupled2", ModelSpec::Coupled2),
        ("pulse", ModelSpec::CubicPulse { kappa: 1.0 }),
    ] {
        let mut cfg = ExperimentConfig::new(model);
        cfg.grid = GridSpec { x_min: -20.0, x_max: 20.0, h: 0.05 };
        let dir = std::path::Path::new(&root).join("profile").join(tag);
        std::fs::create_dir_all(&dir)?;
        let r = run_profile(&cfg, Some(&dir))?;
        println!(
            "{:<18} residual {:.2e}  decay rate {:.4}  oracle error {}  ({:.3} s)",
            r.model,
            r.residual_sup,
            r.theta_hat,
            r.oracle_error.map_or("-".into(), |e| format!("{e:.2e}")),
            r.seconds
        );
    }
    Ok(())
}
