//! Shock location from the Green-kernel formula for translate data
//! (recovers the imposed shift) and the kernel norm audit.

use shocklab::lab::{run_track, ExperimentConfig};

fn main() -> shocklab::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/burgers_track.json").into());
    let cfg = ExperimentConfig::load(path.as_ref())?;
    let root = std::env::var(shocklab::lab::OUTPUT_ROOT_ENV).unwrap_or_else(|_| "target/examples-out".into());
    let dir = std::path::Path::new(&root).join("track");
    std::fs::create_dir_all(&dir)?;
    let r = run_track(&cfg, Some(&dir))?;
    println!("alpha(T) = {:.6}, Picard residual {:.1e} after {} sweeps", r.alpha_final, r.picard_residual, r.picard_iterations);
    println!("alpha_dot vs d alpha/dt: {:.2e}", r.self_consistency);
    for f in &r.audit.p_exponent_fits {
        println!("  {:?} L^{}: slope {:.3} (asymptotic {})", f.channel, f.p, f.slope, f.expected);
    }
    println!("calibration: {}", r.calibration);
    Ok(())
}
