//! Posterior-stability probe: seat every token on its ground-truth path,
//! then run the sampler and watch whether the true structure persists.

use pachinko::eval::{match_topics, structure_accuracy};
use pachinko::exec::rng_from_seed;
use pachinko::npam::{
    gibbs_sweep, resample_hyperparams, snapshot, GammaPriors, Hyperparams,
};
use pachinko::seating::{Choice, FullPath, SeatingState, TokenRef};
use pachinko::synthetic::{generate_synthetic, SyntheticSpec};
use std::collections::HashMap;

fn main() {
    let spec = SyntheticSpec::new(5, 2, 4);
    let (corpus, truth) = generate_synthetic(&spec, &mut rng_from_seed(5)).unwrap();

    let mut state = SeatingState::new(corpus.vocabulary.len());
    // One entryway per (doc, true super), one table per (doc, super, sub),
    // one menu per (super, sub), one dish per sub.
    let mut entry_ids: HashMap<(usize, usize), u32> = HashMap::new();
    let mut table_ids: HashMap<(usize, usize, usize), u32> = HashMap::new();
    let mut menu_ids: HashMap<(usize, usize), u32> = HashMap::new();
    let mut dish_ids: HashMap<usize, u32> = HashMap::new();
    let mut cat_ids: HashMap<usize, u32> = HashMap::new();
    for (j, doc) in truth.labels.iter().enumerate() {
        for (t, &(l, m)) in doc.iter().enumerate() {
            let token = TokenRef { doc: j, token: t };
            let entry = entry_ids.get(&(j, l)).copied();
            let table = table_ids.get(&(j, l, m)).copied();
            let path = FullPath {
                entryway: entry.map_or(Choice::New, Choice::Existing),
                category: cat_ids.get(&l).map_or(Choice::New, |&c| Choice::Existing(c)),
                table: table.map_or(Choice::New, Choice::Existing),
                menu: menu_ids
                    .get(&(l, m))
                    .map_or(Choice::New, |&p| Choice::Existing(p)),
                dish: dish_ids.get(&m).map_or(Choice::New, |&d| Choice::Existing(d)),
            };
            let word = corpus.documents[j].tokens[t];
            let seat = state.seat_customer(token, word, &path).unwrap();
            entry_ids.entry((j, l)).or_insert(seat.entryway);
            cat_ids.entry(l).or_insert(seat.category);
            table_ids.entry((j, l, m)).or_insert(seat.table);
            menu_ids.entry((l, m)).or_insert(seat.menu);
            dish_ids.entry(m).or_insert(seat.dish);
        }
    }
    println!(
        "seeded: categories {} dishes {} menus {} entryways {}",
        state.categories().len(),
        state.dishes().len(),
        state.total_menus(),
        state.total_entryways()
    );

    let priors = GammaPriors::default();
    let mut hp: Hyperparams = priors.means();
    let mut rng = rng_from_seed(11);
    for sweep in 1..=400 {
        gibbs_sweep(&mut state, &corpus, &hp, &mut rng);
        hp = resample_hyperparams(&state, &hp, &priors, &mut rng);
        if sweep % 25 == 0 {
            let snap = snapshot(&state, &hp, sweep, 0);
            let matching = match_topics(&truth, &snap.assignments).unwrap();
            let report = structure_accuracy(&truth, &snap.assignments, matching);
            println!(
                "sweep {:3}: K={} D={} a0 {:.2} g0 {:.2} a1 {:.2} g1 {:.2} p1 {:.2} | super {:.1}% sub {:.1}%",
                sweep,
                snap.n_super,
                snap.n_sub,
                hp.alpha0,
                hp.gamma0,
                hp.alpha1,
                hp.gamma1,
                hp.phi1,
                report.super_accuracy,
                report.sub_accuracy,
            );
        }
    }
}
