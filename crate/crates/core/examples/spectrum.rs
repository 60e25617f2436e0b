//! Unstable eigenvalues of the Poschl-Teller well `d_xx + 6 sech^2 x`
//! (exactly 4 and 1) and of the sech pulse, with a refinement check and the
//! Matrix Market dump of the discretized operator.

use shocklab::lab::{run_spectrum, ExperimentConfig, GridSpec, ModelSpec};

fn main() -> shocklab::Result<()> {
    let root = std::env::var(shocklab::lab::OUTPUT_ROOT_ENV).unwrap_or_else(|_| "target/examples-out".into());
    for (tag, model, h) in [
        ("pt", ModelSpec::PoschlTeller { l: 2 }, 0.05),
        ("pulse", ModelSpec::CubicPulse { kappa: (1.0f64 / 6.0).sqrt() }, 0.1),
        ("burgers", ModelSpec::Burgers { u_minus: 1.0, u_plus: -1.0 }, 0.1),
    ] {
        let mut cfg = ExperimentConfig::new(model);
        cfg.grid = GridSpec { x_min: -30.0, x_max: 30.0, h };
        let dir = std::path::Path::new(&root).join("spectrum").join(tag);
        std::fs::create_dir_all(&dir)?;
        let r = run_spectrum(&cfg, Some(&dir))?;
        let ev: Vec<String> = r.eigenvalues.iter().map(|z| format!("{:.5}", z[0])).collect();
        println!("{:<22} p = {} (h/2: {})  eigenvalues [{}]  D1 {:?}", r.model, r.p, r.p_refined, ev.join(", "), r.d1_ok);
    }
    Ok(())
}
