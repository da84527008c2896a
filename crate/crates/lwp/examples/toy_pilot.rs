//! Pilot for the toy margin floor used by the acceptance suite.
//!
//! Trains lwp and naive_ft on the circles -> xor stream for seeds 100..110
//! (disjoint from the acceptance seeds 0..5) and reports, per seed, the
//! accuracy on the first task after the second has been learned. The floor
//! is the smallest per-seed margin, rounded down to two decimals.
//!
//! `cargo run --release -p lwp --example toy_pilot > crates/lwp/pilot/toy_pilot.json`

use lwp::config::ExperimentConfig;
use lwp_core::trainer::{run_sequence, NoClock};
use lwp_core::Mode;

pub const CONFIG: &str = include_str!("../experiments/toy.ini");

fn main() {
    let cfg = ExperimentConfig::parse(CONFIG).expect("pilot config");
    let mut rows = Vec::new();
    let mut margins = Vec::new();
    for seed in 100..110u64 {
        let stream = cfg.stream.build(seed).unwrap();
        let first_task_after = |mode| {
            let r = run_sequence(&stream, &cfg.cell(mode, seed), &NoClock).unwrap();
            r.accuracy.get(1, 0).unwrap()
        };
        let lwp = first_task_after(Mode::Lwp);
        let naive = first_task_after(Mode::NaiveFt);
        margins.push(lwp - naive);
        rows.push(serde_json::json!({ "seed": seed, "lwp": lwp, "naive_ft": naive, "margin": lwp - naive }));
    }
    let min = margins.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = margins.iter().sum::<f64>() / margins.len() as f64;
    let out = serde_json::json!({
        "runs": rows,
        "min_margin": min,
        "mean_margin": mean,
        "floor": (min * 100.0).floor() / 100.0,
    });
    println!("{}", serde_json::to_string_pretty(&out).unwrap());
}
