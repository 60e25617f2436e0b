//! Data on the center-stable manifold of the unstable sech pulse by
//! shooting, compared with the Lyapunov-Perron graph, and the quadratic
//! tangency audit `|z0| ~ |w0|^2`.

use shocklab::lab::{prepare_on_manifold, tangency_audit, ExperimentConfig, Lab};

fn main() -> shocklab::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/pulse.json").into());
    let cfg = ExperimentConfig::load(path.as_ref())?;
    let lab = Lab::new(&cfg)?;
    let sd = lab.spectrum()?;
    println!("unstable eigenvalue {:.5}, exit radius {:.4}", sd.eigenvalues[0].re, lab.exit_radius()?);
    let w0 = lab.perturbation(&cfg.perturbation, Some(&sd))?;
    let r = prepare_on_manifold(&lab, &sd, &w0, &cfg.shoot)?;
    println!(
        "|w0| = {:.2e}  |z0| = {:.3e}  residual {:.2e} after {} Newton steps  |z0 - Phi(w0)| = {:?}",
        r.w0_norm, r.z0_norm, r.residual, r.newton_iterations, r.lp_agreement
    );
    let t = tangency_audit(&lab, &sd, &cfg.shoot)?;
    for (w, z) in t.w0_norms.iter().zip(&t.z0_norms) {
        println!("  |w0| = {w:.1e}  |z0| = {z:.3e}  |z0|/|w0|^2 = {:.3}", z / (w * w));
    }
    println!("log-log slope {:.4}", t.slope);
    Ok(())
}
