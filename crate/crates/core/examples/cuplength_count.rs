//! Flagship count: `V = 0.1(cos q₁ + cos q₂)` on `T²`, 56 seeds.

use polyfloer::cuplength::{verify_count, ExperimentConfig};

fn main() -> polyfloer::Result<()> {
    let text = include_str!("trig_n1.json");
    let config = ExperimentConfig::from_json(text)?;
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let run = verify_count(&config, jobs)?;
    let r = &run.report;
    println!(
        "seeds {} converged {} diverged {} exhausted {}",
        r.seeds, r.converged, r.diverged, r.exhausted
    );
    println!(
        "distinct {} bound {} status {:?}",
        r.distinct, r.bound, r.status
    );
    for row in &r.table {
        println!(
            "action {:+.6e}  residual {:.2e}  {:?}  q {:?}  members {}",
            row.action, row.residual, row.classification, row.q_mean, row.members
        );
    }
    Ok(())
}
