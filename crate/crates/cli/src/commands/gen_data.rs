use std::path::Path;

use lil_core::datasets::{gen_entangled_rings, gen_torus};
use lil_core::error::{Error, Result};
use lil_core::linalg::Rng;

use super::{ensure_parent_dir, write_sidecar};

#[allow(clippy::too_many_arguments)]
pub fn run(
    kind: &str,
    out: &Path,
    n: Option<usize>,
    noise: Option<f64>,
    seed: u64,
    split_fraction: f64,
    big_radius: f64,
    small_radius: f64,
) -> Result<()> {
    let start = std::time::Instant::now();
    let mut rng = Rng::new(seed);
    let mut ds = match kind {
        "rings" => {
            let n_per_ring = n.unwrap_or(400);
            gen_entangled_rings(n_per_ring, noise.unwrap_or(1e-4), &mut rng)?
        }
        "torus" => gen_torus(
            n.unwrap_or(1600),
            big_radius,
            small_radius,
            noise.unwrap_or(0.001),
            &mut rng,
        )?,
        other => return Err(Error::invalid(format!("unknown dataset kind {other:?}"))),
    };
    ds.assign_split(split_fraction, &mut rng)?;
    ensure_parent_dir(out)?;
    std::fs::write(out, ds.to_csv())?;
    write_sidecar(
        &out.with_extension("meta.json"),
        "gen-data",
        start.elapsed().as_secs_f64(),
    )?;
    println!(
        "wrote {} rows ({} label levels) to {}",
        ds.len(),
        ds.levels(),
        out.display()
    );
    Ok(())
}
