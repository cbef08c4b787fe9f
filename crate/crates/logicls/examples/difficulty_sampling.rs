//! Difficulty-weighted resampling: per-sample difficulty, per-group
//! plans, seeded draws, and the training-dynamics simulation that
//! compares difficulty-aware sampling against uniform.

use logicls::resample::{difficulty, sample_batch, sampling_plan};
use logicls::simulate::{simulate_training, SimConfig};

fn main() {
    // An incorrect answer at perplexity 5 with alpha=1, beta=0.2.
    let d = difficulty(false, 5.0, 1.0, 0.2).expect("difficulty");
    println!("difficulty(incorrect, ppl 5) = {d}");

    let plan = sampling_plan(&[3.0, 1.0], 1.0).expect("plan");
    println!("plan for sums [3, 1], gamma 1: {:?}", plan.probabilities);

    let groups = vec![
        vec!["hard-a".to_string(), "hard-b".to_string()],
        vec!["easy-a".to_string()],
    ];
    let draws = sample_batch(&plan, &groups, 20_000, 1).expect("draws");
    let hard = draws.iter().filter(|id| id.starts_with("hard")).count();
    println!(
        "20000 draws: {:.3} hard vs plan 0.75",
        hard as f64 / 20_000.0
    );

    // Sharper gamma concentrates on the hardest group.
    for gamma in [0.5, 1.0, 2.0] {
        let p = sampling_plan(&[3.0, 1.0], gamma).expect("plan");
        println!("  gamma {gamma}: {:?}", p.probabilities);
    }

    // Two-tier skills: three easy groups, two hard ones.
    let report = simulate_training(&SimConfig::default()).expect("simulate");
    println!("\nseed  uniform  difficulty-aware  (final max-group error)");
    let paired = report.paired_final_errors();
    for (seed, uniform, aware) in &paired {
        println!("{seed:<4}  {uniform:.4}   {aware:.4}");
    }
    let wins = paired.iter().filter(|(_, u, a)| a < u).count();
    println!("difficulty-aware wins {wins}/{} paired seeds", paired.len());
}
