//! Center-stable manifold of the planar saddle `u' = -u, v' = v + u^2` by
//! the truncated Lyapunov-Perron iteration, compared with `v = -u^2/3`.

use shocklab::lab::saddle_manifold;

fn main() -> shocklab::Result<()> {
    let root = std::env::var(shocklab::lab::OUTPUT_ROOT_ENV).unwrap_or_else(|_| "target/examples-out".into());
    let dir = std::path::Path::new(&root).join("saddle");
    std::fs::create_dir_all(&dir)?;
    let r = saddle_manifold(0.2, &[0.01, 0.02, 0.04, 0.08], Some(&dir))?;
    println!("graph error on |u| <= 0.1: {:.2e}", r.max_error);
    println!("contraction factor:        {:.3}", r.contraction_factor);
    println!("tangency slope:            {:.3}", r.tangency_slope);
    println!("invariance residual:       {:.2e}", r.invariance_residual);
    for (e, l) in &r.lipschitz_eps {
        println!("Lip(N^eps) at eps = {e:<5} {l:.4}  (ratio {:.3})", l / e);
    }
    println!("graph written to {}", dir.join("graph.csv").display());
    Ok(())
}
