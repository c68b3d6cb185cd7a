//! Monte Carlo estimate next to the exact value for a few cells.

use commtdp::eval::evaluate;
use commtdp::helicopter::{Helicopter, HelicopterParams};
use commtdp::optimal::locally_optimal_policy;
use commtdp::policy::SilentPolicy;
use commtdp::rollout::rollout;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let samples = 20_000;
    for (lambda, r_sigma) in [(0.0, 0.0), (0.5, 0.5), (0.9, 0.1)] {
        let h = Helicopter::new(HelicopterParams::cell(lambda, r_sigma))?;
        let local = locally_optimal_policy(&h.model, &h.domain, SilentPolicy, &h.goal, &h.sigma)?;
        let exact = evaluate(&h.model, &h.domain, &local.policy)?.value;
        let est = rollout(&h.model, &h.domain, &local.policy, samples, 7)?;
        println!(
            "lambda {lambda} r_sigma {r_sigma}: exact {exact:.5}, estimate {:.5} ± {:.5} ({})",
            est.mean,
            est.std_error,
            if est.agrees_with(exact, 3.0) { "agrees" } else { "off" }
        );
    }
    Ok(())
}
