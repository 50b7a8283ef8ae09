//! The deterministic integrator: classical RK4 with per-interval step
//! doubling and a geometrically refined base grid near the stiff end of
//! guided runs.
//!
//! ```bash
//! cargo run --example integrator_order
//! ```

use reglab::dynamics::{self, GuidanceConfig, GuidanceKind, SamplerKind, TrajectoryProbe};
use reglab::measure::Measurement;
use reglab::models::ModelSpec;

fn main() -> reglab::Result<()> {
    // Order measurement on dx/dt = -x over [0, 1] (exact answer e^{-1}).
    println!("fixed-grid error on the exponential test (controller off):");
    let mut prev: Option<f64> = None;
    for steps in [8usize, 16, 32, 64] {
        let cfg = GuidanceConfig {
            rho: 0.0,
            horizon: 1.0,
            sampler: SamplerKind::Ode,
            guidance: GuidanceKind::None,
            steps,
            rel_tol: f64::INFINITY,
            min_step: 1e-12,
            seed: 0,
        };
        let traj = dynamics::integrate_ode(
            |_, x: &[f64], out: &mut [f64]| out[0] = -x[0],
            &[1.0],
            (0.0, 1.0),
            &cfg,
            &TrajectoryProbe::none(),
        )?;
        let err = (traj.last_state()[0] - (-1.0f64).exp()).abs();
        match prev {
            Some(p) => println!(
                "  {steps:3} steps: err = {err:.3e}  ratio {:5.2}  (order {:.2})",
                p / err,
                (p / err).log2()
            ),
            None => println!("  {steps:3} steps: err = {err:.3e}"),
        }
        prev = Some(err);
    }

    // Guided runs get a geometric tail (ratio 0.9) on the final ln(rho) of
    // the horizon, where the guidance gain rho * e^{-(T-t)} peaks.
    let model = ModelSpec::hypercube(3.0, 2)?;
    let meas = Measurement::inpainting(&[0], &[3.0, 0.0], 0.05)?;
    let cfg = GuidanceConfig::for_measurement(&meas);
    let grid = dynamics::base_grid(&cfg, 0.0, cfg.horizon);
    println!("\nguided base grid for rho = {}:", cfg.rho);
    println!("  {} points ({} uniform + geometric tail)", grid.len(), cfg.steps + 1);
    let show = [0usize, 1, grid.len() - 4, grid.len() - 3, grid.len() - 2, grid.len() - 1];
    for w in show.windows(2) {
        let (a, b) = (grid[w[0]], grid[w[1]]);
        if w[1] - w[0] == 1 {
            println!("  t[{:4}] = {:.12}   spacing {:.3e}", w[1], b, b - a);
        } else {
            println!("  ...");
        }
    }

    // The controller resolves the stiff window without a fixed fine grid.
    let field = dynamics::guided_ode_field(&model, Some(&meas), &cfg)?;
    let traj = dynamics::integrate_ode(
        field,
        &[0.2, -0.4],
        (0.0, cfg.horizon),
        &cfg,
        &TrajectoryProbe::generation(&model, Some(&meas), cfg.horizon),
    )?;
    println!("\nadaptive guided run: {} accepted steps, final state = {:?}", traj.len(), traj.last_state());
    Ok(())
}
