//! Search over delayed announcements. At high observability the escort
//! learns to wait one step and speak only if the transport is still creeping.

use commtdp::eval::evaluate;
use commtdp::helicopter::{Helicopter, HelicopterParams};
use commtdp::optimal::locally_optimal_policy;
use commtdp::policy::SilentPolicy;
use commtdp::search::{globally_optimal_comm, CommSearchSpace};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let h = Helicopter::new(HelicopterParams::cell(0.8, 0.3))?;
    let space = CommSearchSpace::default();
    let g = globally_optimal_comm(&h.model, &h.domain, SilentPolicy, &h.goal, &h.sigma, &space)?;
    let local = locally_optimal_policy(&h.model, &h.domain, SilentPolicy, &h.goal, &h.sigma)?;
    let lv = evaluate(&h.model, &h.domain, &local.policy)?.value;

    println!(
        "{} decision points in {} independent blocks (window {})",
        g.points.len(),
        g.blocks.len(),
        space.window
    );
    for &i in &g.sends {
        let p = &g.points[i];
        println!(
            "send at epoch {} ({} after first knowledge), p = {:.4}: {}",
            p.epoch,
            p.epoch - p.knowledge_epoch,
            p.probability,
            h.model.describe_belief(&p.belief)
        );
    }
    println!("global {:.6}  local {lv:.6}  gain {:.6}", g.value(), g.value() - lv);
    Ok(())
}
