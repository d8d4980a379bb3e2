//! Fixed-hyperparameter grid probe: which concentration regimes let the
//! category level separate documents by their true super-topic?

use pachinko::corpus::Corpus;
use pachinko::eval::{match_topics, structure_accuracy};
use pachinko::exec::rng_from_seed;
use pachinko::npam::{gibbs_sweep, init_state, snapshot, Hyperparams};
use pachinko::synthetic::{generate_synthetic, SyntheticSpec};

fn run(corpus: &Corpus, truth: &pachinko::corpus::GroundTruth, hp: &Hyperparams, sweeps: usize) {
    let mut rng = rng_from_seed(3);
    let mut state = init_state(corpus, hp, &mut rng);
    for _ in 0..sweeps {
        gibbs_sweep(&mut state, corpus, hp, &mut rng);
    }
    let snap = snapshot(&state, hp, sweeps, 0);
    let matching = match_topics(truth, &snap.assignments).unwrap();
    let report = structure_accuracy(truth, &snap.assignments, matching);
    println!(
        "a0 {:5.1} a1 {:5.1} | K {:2} D {:2} | super {:5.1}% sub {:5.1}%",
        hp.alpha0, hp.alpha1, snap.n_super, snap.n_sub, report.super_accuracy, report.sub_accuracy
    );
}

fn main() {
    let spec = SyntheticSpec::new(5, 2, 4);
    let (corpus, truth) = generate_synthetic(&spec, &mut rng_from_seed(5)).unwrap();
    for &a0 in &[0.3, 1.0, 3.0, 10.0] {
        for &a1 in &[1.0, 3.0, 10.0] {
            let hp = Hyperparams {
                alpha0: a0,
                gamma0: 1.0,
                alpha1: a1,
                gamma1: 1.0,
                phi1: 0.1,
                beta: 0.01,
            };
            run(&corpus, &truth, &hp, 600);
        }
    }
}
