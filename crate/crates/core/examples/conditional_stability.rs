//! Manifold-prepared data stay near the translates of the unstable pulse,
//! while a small kick along the unstable mode leaves on the linear time scale.

use shocklab::lab::{conditional_stability, ExperimentConfig, Lab};

fn main() -> shocklab::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/pulse.json").into());
    let cfg = ExperimentConfig::load(path.as_ref())?;
    let lab = Lab::new(&cfg)?;
    let sd = lab.spectrum()?;
    let r = conditional_stability(&lab, &sd, &cfg.shoot, cfg.perturbation.amplitude)?;
    println!("radius R = {:.4}, lambda = {:.4}", r.radius, r.lambda_max);
    println!("prepared run: max distance {:.3e} on [0, {}], stays = {}", r.prepared_max_distance, cfg.shoot.stay_time, r.stays);
    println!("kicked run:   exit at {:?}, deadline {:.2}", r.kicked_exit_time, r.kicked_deadline);
    Ok(())
}
