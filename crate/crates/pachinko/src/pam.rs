//! Fixed-structure four-level pachinko allocation: root over `s2`
//! super-topics, each super-topic a Dirichlet over `s3` sub-topics,
//! sub-topics over words. Doubles as the synthetic-data generator and as the
//! likelihood-comparison baseline trained by collapsed Gibbs over
//! (super, sub) pairs.

use crate::corpus::{Corpus, Document, GroundTruth, Vocabulary};
use crate::crp::sample_categorical;
use crate::npam::TrainConfig;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PamError {
    #[error("invalid model: {0}")]
    BadModel(String),
    #[error("invalid input: {0}")]
    BadInput(String),
    #[error("corpus has no documents")]
    EmptyCorpus,
}

/// Model structure and Dirichlet parameters. Zero entries in the alpha
/// vectors pin the corresponding component to probability zero, which is how
/// the synthetic generator encodes sparse super-to-sub connectivity;
/// training requires strictly positive parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PamModel {
    pub s2: usize,
    pub s3: usize,
    /// Dirichlet parameter per super-topic at the root.
    pub root_alpha: Vec<f64>,
    /// Dirichlet parameter vector over sub-topics, one per super-topic.
    pub super_alpha: Vec<Vec<f64>>,
    /// Symmetric Dirichlet mass on sub-topic word distributions.
    pub beta: f64,
}

impl PamModel {
    /// Symmetric model: 0.01 per root component, 0.01 per sub-topic
    /// component, beta 0.01.
    pub fn symmetric(s2: usize, s3: usize) -> Self {
        PamModel {
            s2,
            s3,
            root_alpha: vec![0.01; s2],
            super_alpha: vec![vec![0.01; s3]; s2],
            beta: 0.01,
        }
    }

    fn validate_shape(&self) -> Result<(), PamError> {
        if self.s2 < 1 || self.s3 < 1 {
            return Err(PamError::BadModel("s2 and s3 must be at least 1".into()));
        }
        if self.root_alpha.len() != self.s2 || self.super_alpha.len() != self.s2 {
            return Err(PamError::BadModel("alpha vector lengths must match s2".into()));
        }
        if self.super_alpha.iter().any(|a| a.len() != self.s3) {
            return Err(PamError::BadModel("super alpha rows must have length s3".into()));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(PamError::BadModel("beta must be positive".into()));
        }
        Ok(())
    }

    /// Generation allows zero components but every Dirichlet needs some
    /// positive mass.
    pub fn validate_for_generation(&self) -> Result<(), PamError> {
        self.validate_shape()?;
        let ok = |a: &[f64]| a.iter().all(|&x| x >= 0.0 && x.is_finite()) && a.iter().any(|&x| x > 0.0);
        if !ok(&self.root_alpha) {
            return Err(PamError::BadModel(
                "root alpha needs nonnegative entries with positive sum".into(),
            ));
        }
        if let Some(l) = self.super_alpha.iter().position(|a| !ok(a)) {
            return Err(PamError::BadModel(format!(
                "super alpha row {l} needs nonnegative entries with positive sum"
            )));
        }
        Ok(())
    }

    /// Training needs strictly positive parameters so every path stays
    /// reachable.
    pub fn validate_for_training(&self) -> Result<(), PamError> {
        self.validate_shape()?;
        if self.root_alpha.iter().any(|&x| !(x > 0.0) || !x.is_finite())
            || self
                .super_alpha
                .iter()
                .any(|a| a.iter().any(|&x| !(x > 0.0) || !x.is_finite()))
        {
            return Err(PamError::BadModel(
                "training requires strictly positive Dirichlet parameters".into(),
            ));
        }
        Ok(())
    }
}

/// Draws from a Dirichlet allowing zero parameters: zero components stay
/// exactly zero, positive components get Gamma draws. Redraws on the (rare)
/// event that every Gamma draw underflows to zero.
pub(crate) fn dirichlet_sample(alphas: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let mut out: Vec<f64> = alphas
            .iter()
            .map(|&a| {
                if a > 0.0 {
                    Gamma::new(a, 1.0).expect("positive shape").sample(rng)
                } else {
                    0.0
                }
            })
            .collect();
        let sum: f64 = out.iter().sum();
        if sum > 0.0 {
            for x in &mut out {
                *x /= sum;
            }
            return out;
        }
    }
}

/// Samples a corpus from the model: per document a root multinomial and one
/// multinomial per super-topic, then per token a (super, sub, word) path.
/// The ground truth records every path and the connectivity implied by the
/// positive alpha entries.
pub fn pam_generate(
    model: &PamModel,
    word_dists: &[Vec<f64>],
    n_docs: usize,
    doc_len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Corpus, GroundTruth), PamError> {
    model.validate_for_generation()?;
    if n_docs < 1 || doc_len < 1 {
        return Err(PamError::BadInput("need n_docs >= 1 and doc_len >= 1".into()));
    }
    if word_dists.len() != model.s3 {
        return Err(PamError::BadInput(format!(
            "expected {} word distributions, got {}",
            model.s3,
            word_dists.len()
        )));
    }
    let v = word_dists.first().map_or(0, Vec::len);
    if v == 0 {
        return Err(PamError::BadInput("word distributions are empty".into()));
    }
    for (m, dist) in word_dists.iter().enumerate() {
        if dist.len() != v {
            return Err(PamError::BadInput(format!(
                "word distribution {m} has mismatched length"
            )));
        }
        let sum: f64 = dist.iter().sum();
        if dist.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) || (sum - 1.0).abs() > 1e-9 {
            return Err(PamError::BadInput(format!(
                "word distribution {m} is not a probability vector"
            )));
        }
    }

    let mut documents = Vec::with_capacity(n_docs);
    let mut labels = Vec::with_capacity(n_docs);
    for _ in 0..n_docs {
        let theta_root = dirichlet_sample(&model.root_alpha, rng);
        let theta_super: Vec<Vec<f64>> = model
            .super_alpha
            .iter()
            .map(|a| dirichlet_sample(a, rng))
            .collect();
        let mut tokens = Vec::with_capacity(doc_len);
        let mut doc_labels = Vec::with_capacity(doc_len);
        for _ in 0..doc_len {
            let l = sample_categorical(&theta_root, rng);
            let m = sample_categorical(&theta_super[l], rng);
            let x = sample_categorical(&word_dists[m], rng) as u32;
            tokens.push(x);
            doc_labels.push((l, m));
        }
        documents.push(Document::new(tokens));
        doc_labels.shrink_to_fit();
        labels.push(doc_labels);
    }

    let super_defs: Vec<Vec<usize>> = model
        .super_alpha
        .iter()
        .map(|a| {
            a.iter()
                .enumerate()
                .filter(|&(_, &x)| x > 0.0)
                .map(|(m, _)| m)
                .collect()
        })
        .collect();
    let truth = GroundTruth {
        labels,
        sub_defs: Vec::new(),
        super_defs,
    };
    let corpus = Corpus {
        documents,
        vocabulary: Vocabulary::anonymous(v),
    };
    Ok((corpus, truth))
}

/// Collapsed-Gibbs state: count tables plus the per-token (super, sub)
/// assignment. All counts exclude nothing; callers remove a token before
/// asking for its conditional.
pub struct PamState {
    pub model: PamModel,
    vocab_size: usize,
    /// N(doc, super).
    doc_super: Vec<Vec<u32>>,
    /// N(doc, super, sub).
    doc_super_sub: Vec<Vec<Vec<u32>>>,
    /// C(sub, word).
    sub_word: Vec<Vec<u32>>,
    sub_total: Vec<u32>,
    assign: Vec<Vec<Option<(usize, usize)>>>,
    assigned: usize,
}

impl PamState {
    pub fn new(model: PamModel, corpus: &Corpus) -> Result<Self, PamError> {
        model.validate_for_training()?;
        if corpus.documents.is_empty() {
            return Err(PamError::EmptyCorpus);
        }
        let n = corpus.n_docs();
        Ok(PamState {
            doc_super: vec![vec![0; model.s2]; n],
            doc_super_sub: vec![vec![vec![0; model.s3]; model.s2]; n],
            sub_word: vec![vec![0; corpus.vocabulary.len()]; model.s3],
            sub_total: vec![0; model.s3],
            assign: corpus
                .documents
                .iter()
                .map(|d| vec![None; d.len()])
                .collect(),
            assigned: 0,
            vocab_size: corpus.vocabulary.len(),
            model,
        })
    }

    pub fn assigned(&self) -> usize {
        self.assigned
    }

    pub fn assignment(&self, doc: usize, token: usize) -> Option<(usize, usize)> {
        self.assign[doc][token]
    }

    pub fn add(&mut self, doc: usize, token: usize, word: u32, l: usize, m: usize) {
        debug_assert!(self.assign[doc][token].is_none());
        self.doc_super[doc][l] += 1;
        self.doc_super_sub[doc][l][m] += 1;
        self.sub_word[m][word as usize] += 1;
        self.sub_total[m] += 1;
        self.assign[doc][token] = Some((l, m));
        self.assigned += 1;
    }

    pub fn remove(&mut self, doc: usize, token: usize, word: u32) -> (usize, usize) {
        let (l, m) = self.assign[doc][token].take().expect("token assigned");
        self.doc_super[doc][l] -= 1;
        self.doc_super_sub[doc][l][m] -= 1;
        self.sub_word[m][word as usize] -= 1;
        self.sub_total[m] -= 1;
        self.assigned -= 1;
        (l, m)
    }

    /// Unnormalized conditional over (super, sub) pairs for an unassigned
    /// token of `doc` carrying `word`, flattened as l * s3 + m.
    pub fn token_weights(&self, doc: usize, word: u32) -> Vec<f64> {
        let s2 = self.model.s2;
        let s3 = self.model.s3;
        let vb = self.vocab_size as f64 * self.model.beta;
        let mut out = Vec::with_capacity(s2 * s3);
        for l in 0..s2 {
            let njl = self.doc_super[doc][l] as f64;
            let root_term = njl + self.model.root_alpha[l];
            let alpha_sum: f64 = self.model.super_alpha[l].iter().sum();
            for m in 0..s3 {
                let sub_term = (self.doc_super_sub[doc][l][m] as f64
                    + self.model.super_alpha[l][m])
                    / (njl + alpha_sum);
                let word_term = (self.sub_word[m][word as usize] as f64 + self.model.beta)
                    / (self.sub_total[m] as f64 + vb);
                out.push(root_term * sub_term * word_term);
            }
        }
        out
    }

    fn resample(&mut self, doc: usize, token: usize, word: u32, rng: &mut ChaCha8Rng) {
        if self.assign[doc][token].is_some() {
            self.remove(doc, token, word);
        }
        let weights = self.token_weights(doc, word);
        let pick = sample_categorical(&weights, rng);
        self.add(doc, token, word, pick / self.model.s3, pick % self.model.s3);
    }

    pub fn sweep(&mut self, corpus: &Corpus, rng: &mut ChaCha8Rng) {
        let before = self.assigned;
        for (j, d) in corpus.documents.iter().enumerate() {
            for (t, &w) in d.tokens.iter().enumerate() {
                self.resample(j, t, w, rng);
            }
        }
        debug_assert_eq!(self.assigned, before);
    }

    pub fn snapshot(&self, sweep: usize, seed: u64) -> PamSnapshot {
        let s2 = self.model.s2;
        let s3 = self.model.s3;
        let v = self.vocab_size;
        let doc_super = self
            .doc_super
            .iter()
            .map(|row| {
                let total: f64 = row.iter().map(|&c| c as f64).sum::<f64>()
                    + self.model.root_alpha.iter().sum::<f64>();
                row.iter()
                    .enumerate()
                    .map(|(l, &c)| (c as f64 + self.model.root_alpha[l]) / total)
                    .collect()
            })
            .collect();
        let doc_super_sub = self
            .doc_super_sub
            .iter()
            .map(|doc| {
                doc.iter()
                    .enumerate()
                    .map(|(l, row)| {
                        let total: f64 = row.iter().map(|&c| c as f64).sum::<f64>()
                            + self.model.super_alpha[l].iter().sum::<f64>();
                        row.iter()
                            .enumerate()
                            .map(|(m, &c)| (c as f64 + self.model.super_alpha[l][m]) / total)
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let word_dists = self
            .sub_word
            .iter()
            .enumerate()
            .map(|(m, row)| {
                let denom = self.sub_total[m] as f64 + v as f64 * self.model.beta;
                row.iter().map(|&c| (c as f64 + self.model.beta) / denom).collect()
            })
            .collect();
        let assignments = self
            .assign
            .iter()
            .map(|d| d.iter().map(|a| a.expect("all tokens assigned")).collect())
            .collect();
        PamSnapshot {
            sweep,
            seed,
            vocab_size: v,
            n_super: s2,
            n_sub: s3,
            model: self.model.clone(),
            doc_super,
            doc_super_sub,
            word_dists,
            assignments,
        }
    }
}

/// Frozen export of a trained fixed-structure model. The hierarchy is fully
/// connected, so no connectivity table is carried.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PamSnapshot {
    pub sweep: usize,
    pub seed: u64,
    pub vocab_size: usize,
    pub n_super: usize,
    pub n_sub: usize,
    pub model: PamModel,
    pub doc_super: Vec<Vec<f64>>,
    pub doc_super_sub: Vec<Vec<Vec<f64>>>,
    pub word_dists: Vec<Vec<f64>>,
    #[serde(skip)]
    pub assignments: Vec<Vec<(usize, usize)>>,
}

/// Trains by collapsed Gibbs with the same schedule semantics as the
/// nonparametric sampler: progressive conditional initialization, burn-in,
/// then one snapshot per `sample_lag` sweeps. Dirichlet parameters stay
/// fixed.
pub fn pam_train(
    corpus: &Corpus,
    model: &PamModel,
    config: &TrainConfig,
) -> Result<Vec<PamSnapshot>, PamError> {
    config
        .validate()
        .map_err(|e| PamError::BadInput(e.to_string()))?;
    let mut state = PamState::new(model.clone(), corpus)?;
    let mut rng = crate::exec::rng_from_seed(config.seed);

    for (j, d) in corpus.documents.iter().enumerate() {
        for (t, &w) in d.tokens.iter().enumerate() {
            state.resample(j, t, w, &mut rng);
        }
    }
    let mut snapshots = Vec::with_capacity(config.n_samples);
    let mut sweep_index = 0;
    for _ in 0..config.burn_in {
        state.sweep(corpus, &mut rng);
        sweep_index += 1;
    }
    for _ in 0..config.n_samples {
        for _ in 0..config.sample_lag {
            state.sweep(corpus, &mut rng);
            sweep_index += 1;
        }
        snapshots.push(state.snapshot(sweep_index, config.seed));
    }
    Ok(snapshots)
}

impl PamSnapshot {
    /// Generates a fresh document: root and per-super multinomials drawn
    /// from the prior Dirichlets, words from the trained smoothed sub-topic
    /// distributions.
    pub fn generate_document(&self, length: usize, rng: &mut ChaCha8Rng) -> Result<Vec<u32>, PamError> {
        if length == 0 {
            return Err(PamError::BadInput("document length must be at least 1".into()));
        }
        let theta_root = dirichlet_sample(&self.model.root_alpha, rng);
        let theta_super: Vec<Vec<f64>> = self
            .model
            .super_alpha
            .iter()
            .map(|a| dirichlet_sample(a, rng))
            .collect();
        let mut out = Vec::with_capacity(length);
        for _ in 0..length {
            let l = sample_categorical(&theta_root, rng);
            let m = sample_categorical(&theta_super[l], rng);
            out.push(sample_categorical(&self.word_dists[m], rng) as u32);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::rng_from_seed;

    #[test]
    fn forced_path_emits_uniform_support() {
        let model = PamModel::symmetric(1, 1);
        let dists = vec![vec![0.25; 4]];
        let mut rng = rng_from_seed(1);
        let (corpus, truth) = pam_generate(&model, &dists, 3, 50, &mut rng).unwrap();
        assert_eq!(corpus.n_docs(), 3);
        assert!(truth.matches(&corpus));
        for labels in &truth.labels {
            assert!(labels.iter().all(|&(l, m)| l == 0 && m == 0));
        }
        let mut seen = [false; 4];
        for d in &corpus.documents {
            for &w in &d.tokens {
                seen[w as usize] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn generation_is_deterministic() {
        let model = PamModel::symmetric(2, 3);
        let dists = vec![vec![0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5], vec![1.0, 0.0, 0.0]];
        let a = pam_generate(&model, &dists, 5, 20, &mut rng_from_seed(9)).unwrap();
        let b = pam_generate(&model, &dists, 5, 20, &mut rng_from_seed(9)).unwrap();
        assert_eq!(a.0.documents, b.0.documents);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn zero_alpha_components_never_sampled() {
        let model = PamModel {
            s2: 2,
            s3: 3,
            root_alpha: vec![1.0, 1.0],
            super_alpha: vec![vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            beta: 0.01,
        };
        let dists = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]];
        let mut rng = rng_from_seed(4);
        let (_, truth) = pam_generate(&model, &dists, 10, 40, &mut rng).unwrap();
        assert_eq!(truth.super_defs, vec![vec![0, 1], vec![2]]);
        for labels in &truth.labels {
            for &(l, m) in labels {
                assert!(truth.super_defs[l].contains(&m));
            }
        }
    }

    #[test]
    fn rejects_malformed_word_dists() {
        let model = PamModel::symmetric(1, 2);
        let mut rng = rng_from_seed(0);
        let bad_sum = vec![vec![0.5, 0.4], vec![0.5, 0.5]];
        assert!(matches!(
            pam_generate(&model, &bad_sum, 1, 1, &mut rng).unwrap_err(),
            PamError::BadInput(_)
        ));
        let wrong_count = vec![vec![1.0]];
        assert!(matches!(
            pam_generate(&model, &wrong_count, 1, 1, &mut rng).unwrap_err(),
            PamError::BadInput(_)
        ));
    }

    fn tiny_corpus() -> Corpus {
        crate::corpus::load_bow([(0, 0, 3), (0, 1, 1), (1, 1, 2), (1, 2, 2)], 3).unwrap()
    }

    #[test]
    fn train_conserves_tokens_and_normalizes() {
        let corpus = tiny_corpus();
        let config = TrainConfig {
            burn_in: 20,
            n_samples: 2,
            sample_lag: 5,
            seed: 11,
            resample_hyper: false,
        };
        let snaps = pam_train(&corpus, &PamModel::symmetric(2, 2), &config).unwrap();
        assert_eq!(snaps.len(), 2);
        for s in &snaps {
            for row in &s.doc_super {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            for doc in &s.doc_super_sub {
                for row in doc {
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
            for row in &s.word_dists {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            let tokens: usize = s.assignments.iter().map(Vec::len).sum();
            assert_eq!(tokens, corpus.total_tokens());
        }
    }

    #[test]
    fn same_seed_same_snapshots() {
        let corpus = tiny_corpus();
        let config = TrainConfig {
            burn_in: 10,
            n_samples: 1,
            sample_lag: 2,
            seed: 5,
            resample_hyper: false,
        };
        let a = pam_train(&corpus, &PamModel::symmetric(2, 3), &config).unwrap();
        let b = pam_train(&corpus, &PamModel::symmetric(2, 3), &config).unwrap();
        assert_eq!(a[0].word_dists, b[0].word_dists);
        assert_eq!(a[0].assignments, b[0].assignments);
    }

    #[test]
    fn single_super_reduces_to_lda_conditional() {
        let corpus = tiny_corpus();
        let model = PamModel {
            s2: 1,
            s3: 2,
            root_alpha: vec![0.01],
            super_alpha: vec![vec![0.5, 0.5]],
            beta: 0.01,
        };
        let mut state = PamState::new(model, &corpus).unwrap();
        let mut rng = rng_from_seed(3);
        for (j, d) in corpus.documents.iter().enumerate() {
            for (t, &w) in d.tokens.iter().enumerate() {
                state.resample(j, t, w, &mut rng);
            }
        }
        for (j, d) in corpus.documents.iter().enumerate() {
            for (t, &w) in d.tokens.iter().enumerate() {
                state.remove(j, t, w);
                let pam = state.token_weights(j, w);
                // Hand-coded collapsed LDA over 2 topics, same counts.
                let lda: Vec<f64> = (0..2)
                    .map(|m| {
                        let doc_topic = state.doc_super_sub[j][0][m] as f64 + 0.5;
                        let word = (state.sub_word[m][w as usize] as f64 + 0.01)
                            / (state.sub_total[m] as f64 + 3.0 * 0.01);
                        doc_topic * word
                    })
                    .collect();
                let pam_sum: f64 = pam.iter().sum();
                let lda_sum: f64 = lda.iter().sum();
                for (a, b) in pam.iter().zip(&lda) {
                    assert!((a / pam_sum - b / lda_sum).abs() < 1e-12);
                }
                let prev = state.assignment(j, t);
                assert_eq!(prev, None);
                state.add(j, t, w, 0, if t % 2 == 0 { 0 } else { 1 });
            }
        }
    }

    #[test]
    fn concentrated_snapshot_generates_near_constant_docs() {
        let snap = PamSnapshot {
            sweep: 0,
            seed: 0,
            vocab_size: 3,
            n_super: 1,
            n_sub: 1,
            model: PamModel::symmetric(1, 1),
            doc_super: vec![],
            doc_super_sub: vec![],
            // Smoothed distribution from 98 counts on word 2 with beta 0.01:
            // (98.01, 0.01, 0.01) / 98.03.
            word_dists: vec![vec![0.01 / 98.03, 0.01 / 98.03, 98.01 / 98.03]],
            assignments: vec![],
        };
        let mut rng = rng_from_seed(8);
        let doc = snap.generate_document(500, &mut rng).unwrap();
        let hits = doc.iter().filter(|&&w| w == 2).count();
        assert!(hits >= 495, "expected near-constant output, got {hits}/500");
        assert!(doc.iter().all(|&w| w < 3));
        assert!(matches!(
            snap.generate_document(0, &mut rng).unwrap_err(),
            PamError::BadInput(_)
        ));
    }
}
