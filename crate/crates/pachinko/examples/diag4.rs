//! Ad-hoc: compares the hyperparameter-marginalized joint probability of the
//! truth-aligned seating against the seating the chain actually reaches.

use pachinko::exec::rng_from_seed;
use pachinko::npam::{
    gibbs_sweep, init_state, resample_hyperparams, structure_sweep, GammaPrior, GammaPriors,
    Hyperparams,
};
use pachinko::seating::{Choice, FullPath, SeatingState, TokenRef};
use pachinko::synthetic::{generate_synthetic, SyntheticSpec};
use std::collections::HashMap;

fn ln_rising(a: f64, n: u32) -> f64 {
    (0..n).map(|i| (a + f64::from(i)).ln()).sum()
}

/// ln of the CRP partition probability for one group: sizes n_1..n_K.
fn ln_eppf(alpha: f64, sizes: &[u32]) -> f64 {
    let total: u32 = sizes.iter().sum();
    let mut out = sizes.len() as f64 * alpha.ln() - ln_rising(alpha, total);
    for &s in sizes {
        out += ln_rising(1.0, s - 1);
    }
    out
}

/// ln ∫ Π_g EPPF(α; group g) Gamma(α; prior) dα by log-grid quadrature.
fn ln_marginal(groups: &[Vec<u32>], prior: &GammaPrior) -> f64 {
    let lo: f64 = 1e-4;
    let hi: f64 = 1e4;
    let n = 800;
    let step = (hi / lo).ln() / n as f64;
    let mut terms = Vec::with_capacity(n);
    for i in 0..n {
        let a = lo * ((i as f64 + 0.5) * step).exp();
        let mut lp = (prior.shape - 1.0) * a.ln() - a / prior.scale
            - prior.shape * prior.scale.ln()
            - ln_gamma(prior.shape);
        for g in groups {
            lp += ln_eppf(a, g);
        }
        // d(alpha) = a * step in log-grid quadrature
        terms.push(lp + (a * step).ln());
    }
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

fn ln_gamma(x: f64) -> f64 {
    // Stirling with correction terms; adequate for x >= 1 here.
    let mut x = x;
    let mut shift = 0.0;
    while x < 7.0 {
        shift -= x.ln();
        x += 1.0;
    }
    shift
        + 0.5 * ((2.0 * std::f64::consts::PI).ln() - x.ln())
        + x * (x.ln() - 1.0)
        + 1.0 / (12.0 * x)
        - 1.0 / (360.0 * x.powi(3))
}

/// Five-level breakdown of ln P(seating) with each concentration integrated
/// against its prior, plus the fixed-beta word term.
fn score(state: &SeatingState, priors: &GammaPriors, label: &str) -> f64 {
    let docs: Vec<Vec<u32>> = (0..state.n_docs())
        .map(|j| state.doc_entryways(j).iter().map(|e| e.count).collect())
        .filter(|v: &Vec<u32>| !v.is_empty())
        .collect();
    let cats: Vec<u32> = state.categories().iter().map(|c| c.n_entryways).collect();
    let mut sections: Vec<Vec<u32>> = Vec::new();
    for j in 0..state.n_docs() {
        for c in state.categories() {
            let tabs: Vec<u32> = state
                .section_tables(j, c.id)
                .iter()
                .map(|t| t.count)
                .collect();
            if !tabs.is_empty() {
                sections.push(tabs);
            }
        }
    }
    let menus: Vec<Vec<u32>> = state
        .categories()
        .iter()
        .map(|c| c.menus.iter().map(|m| m.n_tables).collect())
        .collect();
    let dishes: Vec<u32> = state.dishes().iter().map(|d| d.n_menus).collect();

    let l_a0 = ln_marginal(&docs, &priors.alpha0);
    let l_g0 = ln_marginal(&[cats].to_vec(), &priors.gamma0);
    let l_a1 = ln_marginal(&sections, &priors.alpha1);
    let l_g1 = ln_marginal(&menus, &priors.gamma1);
    let l_p1 = ln_marginal(&[dishes].to_vec(), &priors.phi1);

    let beta = priors.beta;
    let v = state.vocab_size();
    let mut l_w = 0.0;
    for d in state.dishes() {
        for &c in &d.word_counts {
            for i in 0..c {
                l_w += (beta + f64::from(i)).ln();
            }
        }
        for i in 0..d.total {
            l_w -= (v as f64 * beta + f64::from(i)).ln();
        }
    }
    let total = l_a0 + l_g0 + l_a1 + l_g1 + l_p1 + l_w;
    println!(
        "{label}: entry {l_a0:.1} cat {l_g0:.1} table {l_a1:.1} menu {l_g1:.1} dish {l_p1:.1} word {l_w:.1} | total {total:.1}"
    );
    total
}

fn seat_truth(corpus: &pachinko::corpus::Corpus, truth: &pachinko::synthetic::GroundTruth) -> SeatingState {
    let mut state = SeatingState::new(corpus.vocabulary.len());
    let mut entry: HashMap<(usize, usize), u32> = HashMap::new();
    let mut table: HashMap<(usize, usize, usize), u32> = HashMap::new();
    let mut menu: HashMap<(usize, usize), u32> = HashMap::new();
    let mut dish: HashMap<usize, u32> = HashMap::new();
    let mut cat: HashMap<usize, u32> = HashMap::new();
    for (j, doc) in corpus.documents.iter().enumerate() {
        for (t, &word) in doc.tokens.iter().enumerate() {
            let (l, m) = truth.labels[j][t];
            let path = FullPath {
                entryway: entry
                    .get(&(j, l))
                    .map_or(Choice::New, |&id| Choice::Existing(id)),
                category: cat.get(&l).map_or(Choice::New, |&id| Choice::Existing(id)),
                table: table
                    .get(&(j, l, m))
                    .map_or(Choice::New, |&id| Choice::Existing(id)),
                menu: menu
                    .get(&(l, m))
                    .map_or(Choice::New, |&id| Choice::Existing(id)),
                dish: dish.get(&m).map_or(Choice::New, |&id| Choice::Existing(id)),
            };
            let seat = state
                .seat_customer(TokenRef::new(j, t), word, &path)
                .expect("truth path consistent");
            entry.insert((j, l), seat.entryway);
            cat.insert(l, seat.category);
            table.insert((j, l, m), seat.table);
            menu.insert((l, m), seat.menu);
            dish.insert(m, seat.dish);
        }
    }
    state
}

fn main() {
    let spec = SyntheticSpec::new(5, 2, 4);
    let (corpus, truth) = generate_synthetic(&spec, &mut rng_from_seed(5)).unwrap();
    let priors = GammaPriors::default();

    let truth_state = seat_truth(&corpus, &truth);
    score(&truth_state, &priors, "truth ");

    let mut rng = rng_from_seed(9);
    let mut hp = priors.means();
    let mut state = init_state(&corpus, &hp, &mut rng);
    for sweep in 0..600 {
        gibbs_sweep(&mut state, &corpus, &hp, &mut rng);
        structure_sweep(&mut state, &hp, &mut rng);
        hp = resample_hyperparams(&state, &hp, &priors, &mut rng);
        if (sweep + 1) % 150 == 0 {
            let label = format!(
                "chain sweep {:4} K={} D={}",
                sweep + 1,
                state.categories().len(),
                state.dishes().len()
            );
            score(&state, &priors, &label);
        }
    }
}
