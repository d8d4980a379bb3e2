//! Ad-hoc training diagnostics: full-protocol run on the 5x5 grid regime
//! with structure trace, hyperparameter drift, and recovery scores.

use pachinko::eval::{match_topics, structure_accuracy};
use pachinko::exec::rng_from_seed;
use pachinko::npam::{train, GammaPriors, TrainConfig};
use pachinko::synthetic::{generate_synthetic, SyntheticSpec};
use std::time::Instant;

fn main() {
    let spec = SyntheticSpec::new(5, 2, 4);
    let (corpus, truth) = generate_synthetic(&spec, &mut rng_from_seed(5)).unwrap();
    println!("true super defs: {:?}", truth.super_defs);
    println!("true sub defs: {:?}", truth.sub_defs);
    println!("tokens: {}", corpus.total_tokens());

    let config = TrainConfig {
        burn_in: 1000,
        n_samples: 10,
        sample_lag: 100,
        seed: 9,
        resample_hyper: true,
    };
    let start = Instant::now();
    let run = train(&corpus, &config, &GammaPriors::default()).unwrap();
    println!("train time: {:.1}s", start.elapsed().as_secs_f64());
    let t = &run.trace;
    for i in (0..t.len()).step_by(50) {
        println!("sweep {:4}  supers {:3} subs {:3}", i + 1, t[i].0, t[i].1);
    }
    for snap in &run.snapshots {
        let matching = match_topics(&truth, &snap.assignments).unwrap();
        let report = structure_accuracy(&truth, &snap.assignments, matching);
        println!(
            "sweep {}: K={} D={} a0 {:.2} g0 {:.2} a1 {:.2} g1 {:.2} p1 {:.2} | super {:.1}% sub {:.1}% (splits {}/{})",
            snap.sweep,
            snap.n_super,
            snap.n_sub,
            snap.hyperparams.alpha0,
            snap.hyperparams.gamma0,
            snap.hyperparams.alpha1,
            snap.hyperparams.gamma1,
            snap.hyperparams.phi1,
            report.super_accuracy,
            report.sub_accuracy,
            report.super_splits,
            report.sub_splits,
        );
    }
}
