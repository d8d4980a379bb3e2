//! End-to-end behavior of the nonparametric sampler: training runs,
//! determinism, structure recovery on small grids, and a scaled-down
//! forward-vs-Gibbs distribution check.

use pachinko::corpus::{Corpus, Document, Vocabulary};
use pachinko::eval::{match_topics, structure_accuracy};
use pachinko::exec::rng_from_seed;
use pachinko::npam::{
    gibbs_sweep, simulate_token, structure_sweep, train, GammaPriors, Hyperparams, TrainConfig,
};
use pachinko::seating::{SeatingState, TokenRef};
use pachinko::synthetic::{generate_synthetic, SyntheticSpec};

#[test]
fn schedule_produces_expected_snapshots_and_trace() {
    let mut spec = SyntheticSpec::new(3, 1, 2);
    spec.n_docs = 8;
    spec.doc_len = 15;
    let (corpus, _) = generate_synthetic(&spec, &mut rng_from_seed(1)).unwrap();
    let config = TrainConfig {
        burn_in: 5,
        n_samples: 3,
        sample_lag: 2,
        seed: 2,
        resample_hyper: true,
    };
    let run = train(&corpus, &config, &GammaPriors::default()).unwrap();
    assert_eq!(run.snapshots.len(), 3);
    assert_eq!(run.trace.len(), 5 + 3 * 2);
    assert_eq!(run.snapshots[0].sweep, 7);
    assert_eq!(run.snapshots[2].sweep, 11);
    for snap in &run.snapshots {
        assert_eq!(snap.n_super, snap.super_weights.len());
        assert_eq!(snap.n_sub, snap.word_dists.len());
        let tokens: usize = snap.assignments.iter().map(Vec::len).sum();
        assert_eq!(tokens, corpus.total_tokens());
        for row in &snap.doc_super {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        for doc in &snap.doc_super_sub {
            for row in doc {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
        for row in &snap.word_dists {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        for (j, doc) in snap.assignments.iter().enumerate() {
            for &(l, m) in doc {
                assert!(l < snap.n_super && m < snap.n_sub, "doc {j}");
                assert!(snap.connectivity[l][m] > 0, "assigned pair must be an edge");
            }
        }
    }
}

#[test]
fn training_is_deterministic_per_seed() {
    let mut spec = SyntheticSpec::new(3, 2, 3);
    spec.n_docs = 6;
    spec.doc_len = 12;
    let (corpus, _) = generate_synthetic(&spec, &mut rng_from_seed(3)).unwrap();
    let config = TrainConfig {
        burn_in: 10,
        n_samples: 2,
        sample_lag: 3,
        seed: 77,
        resample_hyper: true,
    };
    let a = train(&corpus, &config, &GammaPriors::default()).unwrap();
    let b = train(&corpus, &config, &GammaPriors::default()).unwrap();
    assert_eq!(a.trace, b.trace);
    for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
        assert_eq!(x.assignments, y.assignments);
        assert_eq!(x.word_dists, y.word_dists);
        assert_eq!(x.connectivity, y.connectivity);
    }
    let c = train(
        &corpus,
        &TrainConfig { seed: 78, ..config },
        &GammaPriors::default(),
    )
    .unwrap();
    assert_ne!(a.snapshots[0].assignments, c.snapshots[0].assignments);
}

#[test]
fn recovers_small_grid_structure() {
    let mut spec = SyntheticSpec::new(5, 2, 4);
    spec.n_docs = 60;
    spec.doc_len = 120;
    spec.seed = 5;
    let (corpus, truth) = generate_synthetic(&spec, &mut rng_from_seed(spec.seed)).unwrap();
    let config = TrainConfig {
        burn_in: 120,
        n_samples: 3,
        sample_lag: 10,
        seed: 9,
        resample_hyper: true,
    };
    let run = train(&corpus, &config, &GammaPriors::default()).unwrap();
    let mut subs = Vec::new();
    for snap in &run.snapshots {
        let matching = match_topics(&truth, &snap.assignments).unwrap();
        let report = structure_accuracy(&truth, &snap.assignments, matching);
        subs.push(report.sub_accuracy);
    }
    subs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = subs[subs.len() / 2];
    assert!(
        median >= 70.0,
        "median sub-topic accuracy {median:.1}% too low: {subs:?}"
    );
}

#[test]
fn generated_documents_stay_in_vocabulary() {
    let mut spec = SyntheticSpec::new(4, 2, 3);
    spec.n_docs = 10;
    spec.doc_len = 30;
    let (corpus, _) = generate_synthetic(&spec, &mut rng_from_seed(6)).unwrap();
    let config = TrainConfig {
        burn_in: 20,
        n_samples: 1,
        sample_lag: 1,
        seed: 4,
        resample_hyper: true,
    };
    let run = train(&corpus, &config, &GammaPriors::default()).unwrap();
    let snap = &run.snapshots[0];
    let mut rng = rng_from_seed(11);
    for len in [1, 5, 40] {
        let doc = snap.generate_document(len, &mut rng);
        assert_eq!(doc.len(), len);
        assert!(doc.iter().all(|&w| (w as usize) < snap.vocab_size));
    }
}

/// Scaled-down joint-distribution check: forward simulation alone versus
/// forward simulation followed by Gibbs sweeps over the simulated words must
/// leave the distribution of structure statistics unchanged. The full-size
/// strict version lives in the acceptance suite.
#[test]
fn forward_and_gibbs_statistics_agree_smoke() {
    let hp = Hyperparams {
        alpha0: 1.0,
        gamma0: 1.0,
        alpha1: 1.0,
        gamma1: 1.0,
        phi1: 1.0,
        beta: 0.01,
    };
    let replicates = 20_000;
    let (fwd, gibbs) = forward_vs_gibbs(replicates, &hp, 123);
    for (name, a, b) in [
        ("categories", fwd.0, gibbs.0),
        ("dishes", fwd.1, gibbs.1),
        ("max dish-word count", fwd.2, gibbs.2),
    ] {
        let se = (a.1 / replicates as f64 + b.1 / replicates as f64).sqrt();
        let diff = (a.0 - b.0).abs();
        assert!(
            diff <= 4.0 * se.max(1e-9),
            "{name}: forward {:.4} vs gibbs {:.4}, diff {diff:.4} > 4 se {:.4}",
            a.0,
            b.0,
            4.0 * se
        );
    }
}

type MeanVar = (f64, f64);

fn forward_vs_gibbs(
    replicates: usize,
    hp: &Hyperparams,
    seed: u64,
) -> (
    (MeanVar, MeanVar, MeanVar),
    (MeanVar, MeanVar, MeanVar),
) {
    let doc_lens = [5usize, 5];
    let v = 3;
    let sweeps = 2;

    let mut fwd = [Vec::with_capacity(replicates), Vec::with_capacity(replicates), Vec::with_capacity(replicates)];
    let mut gib = [Vec::with_capacity(replicates), Vec::with_capacity(replicates), Vec::with_capacity(replicates)];
    let mut rng = rng_from_seed(seed);
    for _ in 0..replicates {
        let mut state = SeatingState::new(v);
        let mut words = vec![Vec::new(); doc_lens.len()];
        for (j, &len) in doc_lens.iter().enumerate() {
            for t in 0..len {
                words[j].push(simulate_token(&mut state, TokenRef::new(j, t), hp, &mut rng));
            }
        }
        let (a, b, c) = stats(&state);
        fwd[0].push(a);
        fwd[1].push(b);
        fwd[2].push(c);

        let corpus = Corpus {
            documents: words.iter().cloned().map(Document::new).collect(),
            vocabulary: Vocabulary::anonymous(v),
        };
        for _ in 0..sweeps {
            gibbs_sweep(&mut state, &corpus, hp, &mut rng);
            structure_sweep(&mut state, hp, &mut rng);
        }
        let (a, b, c) = stats(&state);
        gib[0].push(a);
        gib[1].push(b);
        gib[2].push(c);
    }
    (
        (mean_var(&fwd[0]), mean_var(&fwd[1]), mean_var(&fwd[2])),
        (mean_var(&gib[0]), mean_var(&gib[1]), mean_var(&gib[2])),
    )
}

fn stats(state: &SeatingState) -> (f64, f64, f64) {
    let max_word = state
        .dishes()
        .iter()
        .flat_map(|d| d.word_counts.iter())
        .copied()
        .max()
        .unwrap_or(0);
    (
        state.categories().len() as f64,
        state.dishes().len() as f64,
        max_word as f64,
    )
}

fn mean_var(xs: &[f64]) -> MeanVar {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}
