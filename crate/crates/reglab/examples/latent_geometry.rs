//! Geometry of good latents: the latents of distinct consistent modes sit
//! far apart, small perturbations stay in the same basin, and interpolating
//! two latents lands far from every mode.
//!
//! ```bash
//! cargo run --example latent_geometry
//! ```

use reglab::verify::{self, LatentGeometryPreset};

fn main() -> reglab::Result<()> {
    let preset = LatentGeometryPreset {
        d: 6,
        indices: vec![0, 1],
        mode_count: 3,
        reps_per_std: 3,
        ..LatentGeometryPreset::default()
    };
    println!(
        "hypercube R = {}, d = {}, observing {:?}; {} consistent modes inverted",
        preset.r, preset.d, preset.indices, preset.mode_count
    );
    let run = verify::latent_geometry_sweep(&preset)?;
    let m = &run.report.metrics;

    println!("\npairwise latent distances / sqrt(2d):");
    for (k, v) in m.iter().filter(|(k, _)| k.starts_with("pair_dist_norm_")) {
        println!("  {k} = {v:.3}");
    }

    println!("\nmedian distance of the guided output to the nearest mode:");
    for std in &preset.stds {
        println!("  perturbation std {std:4}: {:.4}", m[&format!("median_mode_dist_std_{std}")]);
    }
    println!(
        "\ninterpolating the two most distant latents: distance {:.3} ({:.1}x the std=0.3 arm)",
        m["interp_mode_distance"], m["interp_to_perturbed_ratio"]
    );
    println!("(small balls around good latents are safe; the space between them is not)");
    Ok(())
}
