//! Mode contraction under modified guidance on the bimodal model: inputs on
//! the maximal-reward line move toward the mode by a factor approaching
//! v[0]^2 as sigma shrinks, while the reward stays pinned.
//!
//! ```bash
//! cargo run --example mode_contraction
//! ```

use reglab::dynamics::{GuidanceConfig, GuidanceKind};
use reglab::measure::{self, Measurement};
use reglab::models::ModelSpec;
use reglab::reguidance;

fn main() -> reglab::Result<()> {
    let r = 5.0;
    let v = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];
    let model = ModelSpec::bimodal(r, 2)?;
    let z1 = vec![r, 0.0];
    let v_perp = [-v[1], v[0]];
    println!("bimodal R = {r}, measurement direction v = (cos 45, sin 45), target factor v[0]^2 = {}", v[0] * v[0]);

    let s = 1.2; // distance of the input from the mode, along the reward line
    let x = vec![z1[0] + s * v_perp[0], z1[1] + s * v_perp[1]];
    println!("input x = {x:?}  (reward-consistent, |x - z1| = {s})");

    for sigma in [0.05, 0.01, 0.005] {
        let meas = Measurement::single_vector(&v, &z1, sigma)?;
        let mut cfg = GuidanceConfig::for_measurement(&meas);
        cfg.guidance = GuidanceKind::Mdps;
        let res = reguidance::run_reguidance(&model, &meas, &x, &cfg)?;
        let dist = measure::norm(&measure::sub(&res.output, &z1));
        let reward_err = (measure::dot(&v, &res.output) - meas.observation()[0]).abs();
        println!(
            "sigma = {sigma:5}: output = [{:7.4}, {:7.4}]  C = {:.4}  |<out,v> - y| = {reward_err:.2e}",
            res.output[0],
            res.output[1],
            dist / s
        );
    }
    println!("(C < 1: the output is strictly closer to the mode than the input was)");
    Ok(())
}
