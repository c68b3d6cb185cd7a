//! Exact value of the fixed communication strategies on one benchmark cell.

use commtdp::eval::evaluate;
use commtdp::helicopter::{Helicopter, HelicopterParams, SteamCosts, SteamLevel};
use commtdp::policy::{CommPolicy, SilentPolicy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let lambda: f64 = std::env::args().nth(1).map_or(Ok(0.5), |s| s.parse())?;
    let r_sigma: f64 = std::env::args().nth(2).map_or(Ok(0.3), |s| s.parse())?;
    let h = Helicopter::new(HelicopterParams::cell(lambda, r_sigma))?;
    let costs = SteamCosts::default();

    let jennings = h.jennings();
    let low = h.steam(SteamLevel::Low, costs);
    let medium = h.steam(SteamLevel::Medium, costs);
    let policies: [(&str, &dyn CommPolicy); 4] = [
        ("silent", &SilentPolicy),
        ("jennings", &jennings),
        ("steam low", &low),
        ("steam medium", &medium),
    ];
    println!("lambda = {lambda}, r_sigma = {r_sigma}");
    for (name, p) in policies {
        let r = evaluate(&h.model, &h.domain, p)?;
        println!(
            "{name:<14} value {:.6}  messages {:.4}  nodes {}",
            r.value,
            r.total_messages(),
            r.node_count
        );
    }
    Ok(())
}
