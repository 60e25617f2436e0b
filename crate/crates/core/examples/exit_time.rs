//! Exit time from the neighbourhood of the translates against log(1/eps)
//! for seeds `ubar + eps phi_max`; the slope approaches `1/lambda_max`.

use shocklab::lab::{run_exit_time, ExperimentConfig, Lab};

fn main() -> shocklab::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/pulse.json").into());
    let cfg = ExperimentConfig::load(path.as_ref())?;
    let lab = Lab::new(&cfg)?;
    let sd = lab.spectrum()?;
    let r = run_exit_time(&lab, &sd, &cfg.exit.eps, &cfg.exit, &cfg.shoot)?;
    for (e, t) in r.eps.iter().zip(&r.exit_times) {
        println!("eps = {e:.0e}  exit at t = {t:.3}");
    }
    println!("slope {:.4} vs 1/lambda = {:.4} ({:.1}% off)", r.slope, r.target_slope, 100.0 * r.relative_error);
    println!("translation-mode contrast runs: {:?}", r.contrast_exit_times);
    Ok(())
}
