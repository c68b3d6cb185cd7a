//! Send-or-withhold decision at each moment the escort first knows the
//! radar is gone, with the expected gain split into its two parts.

use commtdp::eval::evaluate;
use commtdp::helicopter::{Helicopter, HelicopterParams};
use commtdp::optimal::locally_optimal_policy;
use commtdp::policy::SilentPolicy;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let h = Helicopter::new(HelicopterParams::cell(0.6, 0.2))?;
    let local = locally_optimal_policy(&h.model, &h.domain, SilentPolicy, &h.goal, &h.sigma)?;

    println!("{:>3} {:>8} {:>10} {:>10} {:>10}  send", "t0", "prob", "gain", "cost", "delta");
    for d in &local.decisions {
        println!(
            "{:>3} {:>8.4} {:>10.5} {:>10.5} {:>10.5}  {}",
            d.event.t0,
            d.event.probability,
            d.breakdown.domain_gain,
            d.breakdown.comm_cost,
            d.breakdown.delta,
            d.send
        );
    }
    let v = evaluate(&h.model, &h.domain, &local.policy)?.value;
    let silent = evaluate(&h.model, &h.domain, &SilentPolicy)?.value;
    let jennings = evaluate(&h.model, &h.domain, &h.jennings())?.value;
    println!("local {v:.6}  silent {silent:.6}  jennings {jennings:.6}");
    Ok(())
}
