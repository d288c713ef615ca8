//! Grid search of the guided-filter baseline's radius and eps on the
//! held-out part of a synthetic corpus.
//!
//! `cargo run --release -p mattekit --example gf_search -- model.bin [seed]`

use mattekit::data::{split, synth_dataset, SynthConfig};
use mattekit::guided::GuidedFilterConfig;
use mattekit::metrics::evaluate;
use mattekit::{ModelParams, Refiner};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let params = ModelParams::load(args.next().ok_or("usage: gf_search PARAMS [SEED]")?.as_ref())?;
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let samples: Vec<_> = synth_dataset(200, seed, &SynthConfig::default())?.into_iter().map(|s| s.sample).collect();
    let (_, val) = split(&samples, 0.9, seed)?;
    let mut grid = Vec::new();
    for radius in [1, 2, 3, 4, 6, 8] {
        for eps in [1e-5, 1e-4, 1e-3, 1e-2, 1e-1] {
            grid.push(Refiner::GuidedFilter(GuidedFilterConfig { radius, eps }));
        }
    }
    let scores = evaluate(&params, &val, &grid)?;
    println!("radius,eps,grad_error_e3,mse_e3");
    for (r, s) in grid.iter().zip(&scores) {
        if let Refiner::GuidedFilter(c) = r {
            println!("{},{:e},{:.3},{:.3}", c.radius, c.eps, s.grad_error * 1e3, s.mse * 1e3);
        }
    }
    Ok(())
}
