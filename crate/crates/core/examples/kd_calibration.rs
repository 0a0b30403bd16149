//! Paired-seed comparison of a distilled student and a hard-label student.

use std::time::Instant;

use crashbench::distill::{train_toy, DistillConfig, ToyConfig};

fn main() {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let kd = DistillConfig::default();
    let hard = kd.hard_only();
    let toy = ToyConfig::default();
    let started = Instant::now();
    let mut wins = 0;
    for seed in 0..seeds {
        let a = train_toy::<f64>(&kd, &toy, seed).expect("kd run");
        let b = train_toy::<f64>(&hard, &toy, seed).expect("hard run");
        wins += (a.brier < b.brier) as u32;
        println!(
            "seed {seed}: brier kd {:.4} hard {:.4} teacher {:.4} | ece kd {:.4} hard {:.4} | |dp| kd {:.4} hard {:.4}",
            a.brier, b.brier, a.teacher_brier, a.ece, b.ece, a.mean_abs_dp, b.mean_abs_dp
        );
    }
    println!("kd lower brier in {wins}/{seeds} seeds ({:.1} s)", started.elapsed().as_secs_f64());
}
