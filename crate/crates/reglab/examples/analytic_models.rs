//! Tour of the analytic models: exact densities, scores, denoisers and the
//! Tweedie identity tying them together.
//!
//! ```bash
//! cargo run --example analytic_models
//! ```

use reglab::models::{self, ModelSpec};

fn main() -> reglab::Result<()> {
    let models_under_test = [
        ("isotropic Gaussian", ModelSpec::iso_gaussian(2)?),
        ("hypercube mixture", ModelSpec::hypercube(2.0, 2)?),
        ("bimodal pair", ModelSpec::bimodal(4.0, 2)?),
    ];
    let x = vec![0.8, -1.3];

    for (name, model) in &models_under_test {
        println!("== {name} (R = {}, d = {})", model.r, model.d);
        for tau in [0.0, 0.5, 2.0] {
            let ld = models::log_density(model, &x, tau)?;
            let score = models::score(model, &x, tau)?;
            let mu = models::denoiser(model, &x, tau)?;
            let jac = models::denoiser_jacobian_diag(model, &x, tau)?;

            // Tweedie: mu = e^tau x + (e^tau - e^-tau) score, exactly.
            let (et, emt) = (tau.exp(), (-tau).exp());
            let tweedie_gap: f64 = (0..model.d)
                .map(|i| (mu[i] - (et * x[i] + (et - emt) * score[i])).abs())
                .fold(0.0, f64::max);

            println!(
                "  tau = {tau:3.1}: ln q = {ld:8.4}, score = [{:7.4}, {:7.4}], \
                 denoiser = [{:7.4}, {:7.4}], jac diag = [{:6.4}, {:6.4}], tweedie gap = {tweedie_gap:.2e}",
                score[0], score[1], mu[0], mu[1], jac[0], jac[1]
            );
        }
    }

    // The mode oracles behind the experiments.
    let model = ModelSpec::hypercube(2.0, 3)?;
    let source = vec![2.0, -2.0, 2.0];
    let meas = reglab::measure::Measurement::inpainting(&[0], &source, 0.1)?;
    let consistent = models::consistent_modes(&model, &meas)?;
    println!("\nhypercube d=3, observing coordinate 0 = +R: {} consistent modes (2^(d-m)):", consistent.len());
    for z in &consistent {
        println!("  {z:?}");
    }
    Ok(())
}
