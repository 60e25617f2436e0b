//! Decay-rate fits for a perturbed Burgers shock. Pass a config path to
//! change the run; the default is the long run with window [50, 500].

use shocklab::lab::{run_rates, ExperimentConfig};

fn main() -> shocklab::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/burgers.json").into());
    let cfg = ExperimentConfig::load(path.as_ref())?;
    let root = std::env::var(shocklab::lab::OUTPUT_ROOT_ENV).unwrap_or_else(|_| "target/examples-out".into());
    let dir = std::path::Path::new(&root).join("rates");
    std::fs::create_dir_all(&dir)?;
    let (r, _) = run_rates(&cfg, Some(&dir))?;
    for c in &r.channels {
        println!(
            "{:<10} exponent {:>8.4}  CI95 [{:.3}, {:.3}]  target {} +- {}  rms {:.3}  {}",
            c.name,
            c.exponent,
            c.ci95[0],
            c.ci95[1],
            c.target,
            c.tol,
            c.rms,
            if c.pass { "ok" } else { "off" }
        );
    }
    println!("alpha {:.6} (kernel formula {:?}), converged {}", r.alpha_final, r.tracking_alpha_final, r.alpha_converged);
    println!("E0 (H2) {:.3e}, E0 (H4) {:.3e}, zeta/E0 {:.3}", r.e0_h2, r.e0_h4, r.zeta_over_e0);
    Ok(())
}
