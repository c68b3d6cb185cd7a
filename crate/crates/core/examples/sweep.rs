//! A coarse observability × cost sweep written to disk and summarized.

use commtdp::experiment::{report, run_sweep, write_sweep, SweepConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("commtdp-sweep"));
    let config = SweepConfig {
        grid_steps: 3,
        ..SweepConfig::default()
    };
    let sweep = run_sweep(&config)?;
    write_sweep(&sweep, &out)?;
    let r = report(&out)?;
    print!("{}", r.text);
    println!("{} plot files under {}", r.plots.len(), out.display());
    Ok(())
}
