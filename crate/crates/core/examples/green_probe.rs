//! Green function of the linearized Burgers operator from a discrete delta,
//! split into the excited translation part and a remainder that is fitted
//! against the Gaussian-sum template.

use shocklab::lab::{green_probe, ExperimentConfig, Lab};

fn main() -> shocklab::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/burgers_green.json").into());
    let cfg = ExperimentConfig::load(path.as_ref())?;
    let lab = Lab::new(&cfg)?;
    let sd = lab.spectrum()?;
    let r = green_probe(&lab, Some(&sd), &cfg.green)?;
    for s in &r.samples {
        println!(
            "t = {:>5}: sup G {:.3e}, mass G {:.6}, mass E {:.4}, sup remainder {:.3e}",
            s.t, s.g_sup, s.g_mass, s.e_mass, s.remainder_sup
        );
    }
    println!("template constants C = {:.3e}, M = {}, eta = {}; feasible {}", r.c_fit, r.m_fit, r.eta_fit, r.feasible);
    Ok(())
}
