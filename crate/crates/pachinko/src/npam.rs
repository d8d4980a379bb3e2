//! Collapsed Gibbs sampler that learns the topic hierarchy.
//!
//! Every token carries a five-level seating path (entryway, category, table,
//! menu, dish). Resampling a token removes it, enumerates every consistent
//! path with weight = entryway/category factor x table/menu/dish factor x
//! word likelihood, draws one path, and reseats. Concentration parameters get
//! Gamma-prior auxiliary-variable updates after each sweep.

use crate::corpus::Corpus;
use crate::crp::sample_categorical;
use crate::seating::{Choice, FullPath, SeatingState, TokenRef};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("corpus has no documents")]
    EmptyCorpus,
    #[error("invalid training config: {0}")]
    BadConfig(String),
}

/// Concentrations for the five seating levels plus the word-smoothing mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Entryway level (customers within a document).
    pub alpha0: f64,
    /// Category level (entryways across documents).
    pub gamma0: f64,
    /// Table level (customers within a document section).
    pub alpha1: f64,
    /// Menu level (tables within a category).
    pub gamma1: f64,
    /// Dish level (menus across categories).
    pub phi1: f64,
    /// Symmetric Dirichlet mass on dish word distributions.
    pub beta: f64,
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fields = [
            ("alpha0", self.alpha0),
            ("gamma0", self.gamma0),
            ("alpha1", self.alpha1),
            ("gamma1", self.gamma1),
            ("phi1", self.phi1),
            ("beta", self.beta),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(TrainError::BadConfig(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub scale: f64,
}

impl GammaPrior {
    pub fn new(shape: f64, scale: f64) -> Self {
        GammaPrior { shape, scale }
    }

    /// Convenience for priors quoted in shape-rate form.
    pub fn from_shape_rate(shape: f64, rate: f64) -> Self {
        GammaPrior {
            shape,
            scale: 1.0 / rate,
        }
    }

    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        Gamma::new(self.shape, self.scale)
            .expect("positive prior parameters")
            .sample(rng)
            .max(1e-12)
    }
}

/// Gamma priors on the five concentrations; the word-smoothing mass stays
/// fixed and is never resampled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPriors {
    pub alpha0: GammaPrior,
    pub gamma0: GammaPrior,
    pub alpha1: GammaPrior,
    pub gamma1: GammaPrior,
    pub phi1: GammaPrior,
    pub beta: f64,
}

/// Defaults follow the DP-concentration convention where Gamma(a, b) has
/// rate b: the document-level concentration is vague with mean 10 while the
/// dish-level concentration has mean 0.1, keeping the global dish count
/// small.
impl Default for GammaPriors {
    fn default() -> Self {
        GammaPriors {
            alpha0: GammaPrior::from_shape_rate(1.0, 0.1),
            gamma0: GammaPrior::from_shape_rate(1.0, 1.0),
            alpha1: GammaPrior::from_shape_rate(1.0, 1.0),
            gamma1: GammaPrior::from_shape_rate(1.0, 1.0),
            phi1: GammaPrior::from_shape_rate(1.0, 10.0),
            beta: 0.01,
        }
    }
}

impl GammaPriors {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fields = [
            ("alpha0", self.alpha0),
            ("gamma0", self.gamma0),
            ("alpha1", self.alpha1),
            ("gamma1", self.gamma1),
            ("phi1", self.phi1),
        ];
        for (name, p) in fields {
            if !(p.shape > 0.0 && p.scale > 0.0) || !p.shape.is_finite() || !p.scale.is_finite() {
                return Err(TrainError::BadConfig(format!(
                    "{name} prior needs positive finite shape and scale"
                )));
            }
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(TrainError::BadConfig("beta must be positive".into()));
        }
        Ok(())
    }

    /// Deterministic starting point for a chain: prior means.
    pub fn means(&self) -> Hyperparams {
        Hyperparams {
            alpha0: self.alpha0.mean(),
            gamma0: self.gamma0.mean(),
            alpha1: self.alpha1.mean(),
            gamma1: self.gamma1.mean(),
            phi1: self.phi1.mean(),
            beta: self.beta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub burn_in: usize,
    pub n_samples: usize,
    pub sample_lag: usize,
    pub seed: u64,
    pub resample_hyper: bool,
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        TrainConfig {
            burn_in: 1000,
            n_samples: 10,
            sample_lag: 100,
            seed,
            resample_hyper: true,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.n_samples < 1 {
            return Err(TrainError::BadConfig("n_samples must be >= 1".into()));
        }
        if self.sample_lag < 1 {
            return Err(TrainError::BadConfig("sample_lag must be >= 1".into()));
        }
        Ok(())
    }
}

/// Entryway/category move for the next customer of a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryChoice {
    /// Reuse an entryway, inheriting its category.
    Existing { entryway: u32, category: u32 },
    /// Open an entryway pointing at an existing category.
    NewEntryway { category: u32 },
    /// Open an entryway pointing at a new category.
    NewBoth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperCandidate {
    pub choice: EntryChoice,
    pub weight: f64,
}

/// Table/menu/dish move within a (document, category) section.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubChoice {
    /// Reuse a table, inheriting menu and dish.
    ExistingTable { table: u32, menu: u32, dish: u32 },
    /// New table pointing at an existing menu of the category.
    NewTable { menu: u32, dish: u32 },
    /// New table and menu pointing at an existing dish.
    NewMenu { dish: u32 },
    /// New table, menu, and dish.
    AllNew,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubCandidate {
    pub choice: SubChoice,
    pub weight: f64,
}

/// The category context for the table/menu/dish block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CategoryRef {
    Existing(u32),
    New,
}

/// Entryway/category candidates for the next customer of `doc`, in canonical
/// order: existing entryways by id, then existing categories by id, then the
/// all-new case. Weights are normalized by construction: each factor is a
/// complete seating probability.
pub fn super_topic_candidates(
    state: &SeatingState,
    doc: usize,
    hp: &Hyperparams,
) -> Vec<SuperCandidate> {
    let denom_e = state.doc_seated(doc) as f64 + hp.alpha0;
    let denom_c = state.total_entryways() as f64 + hp.gamma0;
    let new_entry = hp.alpha0 / denom_e;
    let mut out = Vec::with_capacity(state.doc_entryways(doc).len() + state.categories().len() + 1);
    for e in state.doc_entryways(doc) {
        out.push(SuperCandidate {
            choice: EntryChoice::Existing {
                entryway: e.id,
                category: e.category,
            },
            weight: e.count as f64 / denom_e,
        });
    }
    for c in state.categories() {
        out.push(SuperCandidate {
            choice: EntryChoice::NewEntryway { category: c.id },
            weight: new_entry * c.n_entryways as f64 / denom_c,
        });
    }
    out.push(SuperCandidate {
        choice: EntryChoice::NewBoth,
        weight: new_entry * hp.gamma0 / denom_c,
    });
    out
}

/// Table/menu/dish candidates for the next customer of `doc` under a fixed
/// category, in canonical order: section tables by id, category menus by id,
/// global dishes by id, then the all-new case. For a new category the section
/// and menu registries are empty, so the table and menu factors collapse to 1.
/// Weights are normalized by construction.
pub fn sub_topic_candidates(
    state: &SeatingState,
    doc: usize,
    category: CategoryRef,
    hp: &Hyperparams,
) -> Vec<SubCandidate> {
    let denom_d = state.total_menus() as f64 + hp.phi1;
    let mut out = Vec::new();
    let new_menu = match category {
        CategoryRef::Existing(l) => {
            let cat = state.category(l).expect("category exists");
            let tables = state.section_tables(doc, l);
            let section_total: u32 = tables.iter().map(|t| t.count).sum();
            let denom_t = section_total as f64 + hp.alpha1;
            let denom_m = cat.n_tables as f64 + hp.gamma1;
            let new_table = hp.alpha1 / denom_t;
            for t in tables {
                let mi = cat
                    .menus
                    .binary_search_by_key(&t.menu, |m| m.id)
                    .expect("table menu exists");
                out.push(SubCandidate {
                    choice: SubChoice::ExistingTable {
                        table: t.id,
                        menu: t.menu,
                        dish: cat.menus[mi].dish,
                    },
                    weight: t.count as f64 / denom_t,
                });
            }
            for m in &cat.menus {
                out.push(SubCandidate {
                    choice: SubChoice::NewTable {
                        menu: m.id,
                        dish: m.dish,
                    },
                    weight: new_table * m.n_tables as f64 / denom_m,
                });
            }
            new_table * hp.gamma1 / denom_m
        }
        CategoryRef::New => 1.0,
    };
    for d in state.dishes() {
        out.push(SubCandidate {
            choice: SubChoice::NewMenu { dish: d.id },
            weight: new_menu * d.n_menus as f64 / denom_d,
        });
    }
    out.push(SubCandidate {
        choice: SubChoice::AllNew,
        weight: new_menu * hp.phi1 / denom_d,
    });
    out
}

/// Predictive probability of `word` under a dish: smoothed counts for an
/// existing dish, uniform for a new one.
pub fn word_likelihood(
    state: &SeatingState,
    dish: Option<u32>,
    word: u32,
    beta: f64,
    vocab_size: usize,
) -> f64 {
    match dish {
        Some(m) => {
            let d = state.dish(m).expect("dish exists");
            (d.word_counts[word as usize] as f64 + beta)
                / (d.total as f64 + vocab_size as f64 * beta)
        }
        None => 1.0 / vocab_size as f64,
    }
}

fn entry_path(choice: EntryChoice) -> (Choice, Choice) {
    match choice {
        EntryChoice::Existing { entryway, category } => {
            (Choice::Existing(entryway), Choice::Existing(category))
        }
        EntryChoice::NewEntryway { category } => (Choice::New, Choice::Existing(category)),
        EntryChoice::NewBoth => (Choice::New, Choice::New),
    }
}

fn sub_path(choice: SubChoice) -> (Choice, Choice, Choice) {
    match choice {
        SubChoice::ExistingTable { table, menu, dish } => (
            Choice::Existing(table),
            Choice::Existing(menu),
            Choice::Existing(dish),
        ),
        SubChoice::NewTable { menu, dish } => {
            (Choice::New, Choice::Existing(menu), Choice::Existing(dish))
        }
        SubChoice::NewMenu { dish } => (Choice::New, Choice::New, Choice::Existing(dish)),
        SubChoice::AllNew => (Choice::New, Choice::New, Choice::New),
    }
}

fn assemble_path(entry: EntryChoice, sub: SubChoice) -> FullPath {
    let (entryway, category) = entry_path(entry);
    let (table, menu, dish) = sub_path(sub);
    FullPath {
        entryway,
        category,
        table,
        menu,
        dish,
    }
}

/// Full joint candidate set for seating an unseated token carrying `word`:
/// every consistent five-level path with its unnormalized weight. Weights sum
/// to the marginal likelihood of the word, not to 1. Candidate count is the
/// sum over entryway/category candidates of the per-category candidate
/// counts, never a product of marginal option counts.
pub fn joint_candidates(
    state: &SeatingState,
    doc: usize,
    word: u32,
    hp: &Hyperparams,
) -> Vec<(FullPath, f64)> {
    let mut out = Vec::new();
    for sc in super_topic_candidates(state, doc, hp) {
        let cat_ref = match sc.choice {
            EntryChoice::Existing { category, .. } | EntryChoice::NewEntryway { category } => {
                CategoryRef::Existing(category)
            }
            EntryChoice::NewBoth => CategoryRef::New,
        };
        for sub in sub_topic_candidates(state, doc, cat_ref, hp) {
            let dish = match sub.choice {
                SubChoice::ExistingTable { dish, .. }
                | SubChoice::NewTable { dish, .. }
                | SubChoice::NewMenu { dish } => Some(dish),
                SubChoice::AllNew => None,
            };
            let wl = word_likelihood(state, dish, word, hp.beta, state.vocab_size());
            out.push((
                assemble_path(sc.choice, sub.choice),
                sc.weight * sub.weight * wl,
            ));
        }
    }
    out
}

/// Reusable buffers for the per-token sampling hot loop.
#[derive(Default)]
pub(crate) struct Scratch {
    /// Word likelihood per dish, indexed by registry position.
    wl: Vec<f64>,
    /// Aggregated sub-level mass per category, indexed by registry position.
    agg: Vec<f64>,
    stage1: Vec<f64>,
    stage2: Vec<f64>,
}

/// Draws a path from the joint conditional of an unseated token.
///
/// Sampling is staged for speed but exact: the entryway/category block is
/// drawn with each category weighted by its aggregated table/menu/dish mass,
/// then the sub-level block is drawn within the chosen category. The product
/// of the two stages equals the flat enumeration of `joint_candidates`.
fn sample_path(
    state: &SeatingState,
    doc: usize,
    word: u32,
    hp: &Hyperparams,
    rng: &mut ChaCha8Rng,
    scratch: &mut Scratch,
) -> FullPath {
    let vocab = state.vocab_size() as f64;
    let dishes = state.dishes();
    let categories = state.categories();
    let entryways = state.doc_entryways(doc);

    scratch.wl.clear();
    scratch
        .wl
        .extend(dishes.iter().map(|d| {
            (d.word_counts[word as usize] as f64 + hp.beta) / (d.total as f64 + vocab * hp.beta)
        }));

    // Mass of the dish block shared by every new-menu case.
    let denom_d = state.total_menus() as f64 + hp.phi1;
    let mut dish_block = hp.phi1 / denom_d / vocab;
    for (d, &wl) in dishes.iter().zip(&scratch.wl) {
        dish_block += d.n_menus as f64 / denom_d * wl;
    }

    // Aggregated sub-level mass per existing category.
    scratch.agg.clear();
    for cat in categories {
        let tables = state.section_tables(doc, cat.id);
        let section_total: u32 = tables.iter().map(|t| t.count).sum();
        let denom_t = section_total as f64 + hp.alpha1;
        let denom_m = cat.n_tables as f64 + hp.gamma1;
        let mut table_mass = 0.0;
        for t in tables {
            let mi = cat
                .menus
                .binary_search_by_key(&t.menu, |m| m.id)
                .expect("table menu exists");
            let di = dishes
                .binary_search_by_key(&cat.menus[mi].dish, |d| d.id)
                .expect("menu dish exists");
            table_mass += t.count as f64 * scratch.wl[di];
        }
        let mut menu_mass = 0.0;
        for m in &cat.menus {
            let di = dishes
                .binary_search_by_key(&m.dish, |d| d.id)
                .expect("menu dish exists");
            menu_mass += m.n_tables as f64 * scratch.wl[di];
        }
        let agg = table_mass / denom_t
            + hp.alpha1 / denom_t * (menu_mass / denom_m + hp.gamma1 / denom_m * dish_block);
        scratch.agg.push(agg);
    }

    // Stage 1: entryway/category block scaled by the aggregated masses.
    let denom_e = state.doc_seated(doc) as f64 + hp.alpha0;
    let denom_c = state.total_entryways() as f64 + hp.gamma0;
    let new_entry = hp.alpha0 / denom_e;
    scratch.stage1.clear();
    for e in entryways {
        let ci = categories
            .binary_search_by_key(&e.category, |c| c.id)
            .expect("entry category exists");
        scratch
            .stage1
            .push(e.count as f64 / denom_e * scratch.agg[ci]);
    }
    for (ci, c) in categories.iter().enumerate() {
        scratch
            .stage1
            .push(new_entry * c.n_entryways as f64 / denom_c * scratch.agg[ci]);
    }
    scratch
        .stage1
        .push(new_entry * hp.gamma0 / denom_c * dish_block);

    let pick = sample_categorical(&scratch.stage1, rng);
    let (entry, cat_ref) = if pick < entryways.len() {
        let e = &entryways[pick];
        (
            EntryChoice::Existing {
                entryway: e.id,
                category: e.category,
            },
            CategoryRef::Existing(e.category),
        )
    } else if pick < entryways.len() + categories.len() {
        let c = &categories[pick - entryways.len()];
        (
            EntryChoice::NewEntryway { category: c.id },
            CategoryRef::Existing(c.id),
        )
    } else {
        (EntryChoice::NewBoth, CategoryRef::New)
    };

    // Stage 2: sub-level block within the chosen category, weighted by the
    // word likelihood.
    scratch.stage2.clear();
    let sub = match cat_ref {
        CategoryRef::Existing(l) => {
            let cat = state.category(l).expect("category exists");
            let tables = state.section_tables(doc, l);
            let section_total: u32 = tables.iter().map(|t| t.count).sum();
            let denom_t = section_total as f64 + hp.alpha1;
            let denom_m = cat.n_tables as f64 + hp.gamma1;
            let new_table = hp.alpha1 / denom_t;
            let new_menu = new_table * hp.gamma1 / denom_m;
            for t in tables {
                let mi = cat
                    .menus
                    .binary_search_by_key(&t.menu, |m| m.id)
                    .expect("table menu exists");
                let di = dishes
                    .binary_search_by_key(&cat.menus[mi].dish, |d| d.id)
                    .expect("menu dish exists");
                scratch
                    .stage2
                    .push(t.count as f64 / denom_t * scratch.wl[di]);
            }
            for m in &cat.menus {
                let di = dishes
                    .binary_search_by_key(&m.dish, |d| d.id)
                    .expect("menu dish exists");
                scratch
                    .stage2
                    .push(new_table * m.n_tables as f64 / denom_m * scratch.wl[di]);
            }
            for (di, d) in dishes.iter().enumerate() {
                scratch
                    .stage2
                    .push(new_menu * d.n_menus as f64 / denom_d * scratch.wl[di]);
            }
            scratch.stage2.push(new_menu * hp.phi1 / denom_d / vocab);

            let pick = sample_categorical(&scratch.stage2, rng);
            if pick < tables.len() {
                let t = &tables[pick];
                let mi = cat
                    .menus
                    .binary_search_by_key(&t.menu, |m| m.id)
                    .expect("table menu exists");
                SubChoice::ExistingTable {
                    table: t.id,
                    menu: t.menu,
                    dish: cat.menus[mi].dish,
                }
            } else if pick < tables.len() + cat.menus.len() {
                let m = &cat.menus[pick - tables.len()];
                SubChoice::NewTable {
                    menu: m.id,
                    dish: m.dish,
                }
            } else if pick < tables.len() + cat.menus.len() + dishes.len() {
                SubChoice::NewMenu {
                    dish: dishes[pick - tables.len() - cat.menus.len()].id,
                }
            } else {
                SubChoice::AllNew
            }
        }
        CategoryRef::New => {
            for (di, d) in dishes.iter().enumerate() {
                scratch
                    .stage2
                    .push(d.n_menus as f64 / denom_d * scratch.wl[di]);
            }
            scratch.stage2.push(hp.phi1 / denom_d / vocab);
            let pick = sample_categorical(&scratch.stage2, rng);
            if pick < dishes.len() {
                SubChoice::NewMenu {
                    dish: dishes[pick].id,
                }
            } else {
                SubChoice::AllNew
            }
        }
    };

    assemble_path(entry, sub)
}

/// Seats an unseated token by drawing from its joint conditional. Used for
/// incremental initialization and internally by `resample_token`.
pub(crate) fn seat_token_by_conditional(
    state: &mut SeatingState,
    token: TokenRef,
    word: u32,
    hp: &Hyperparams,
    rng: &mut ChaCha8Rng,
    scratch: &mut Scratch,
) {
    let path = sample_path(state, token.doc, word, hp, rng, scratch);
    state
        .seat_customer(token, word, &path)
        .expect("sampled path is consistent");
    state.debug_check_token(token);
}

/// Removes a seated token and redraws its full path from the joint
/// conditional given all other tokens.
pub fn resample_token(
    state: &mut SeatingState,
    token: TokenRef,
    hp: &Hyperparams,
    rng: &mut ChaCha8Rng,
) {
    let mut scratch = Scratch::default();
    resample_token_with(state, token, hp, rng, &mut scratch);
}

pub(crate) fn resample_token_with(
    state: &mut SeatingState,
    token: TokenRef,
    hp: &Hyperparams,
    rng: &mut ChaCha8Rng,
    scratch: &mut Scratch,
) {
    let word = state.unseat_customer(token).expect("token is seated");
    seat_token_by_conditional(state, token, word, hp, rng, scratch);
}

/// Resamples every token once, in document order then token order.
pub fn gibbs_sweep(
    state: &mut SeatingState,
    corpus: &Corpus,
    hp: &Hyperparams,
    rng: &mut ChaCha8Rng,
) {
    let before = state.total_seated();
    let mut scratch = Scratch::default();
    for (j, doc) in corpus.documents.iter().enumerate() {
        for t in 0..doc.tokens.len() {
            resample_token_with(state, TokenRef::new(j, t), hp, rng, &mut scratch);
        }
    }
    debug_assert_eq!(state.total_seated(), before, "sweeps conserve tokens");
    #[cfg(debug_assertions)]
    {
        let report = state.audit_counts();
        debug_assert!(report.is_empty(), "post-sweep audit: {report:?}");
    }
}

/// Relabeling moves that shift whole blocks of tokens at once: every menu
/// redraws the dish it serves from its exact conditional, and every document
/// proposes relocating one of its sections to another category through a
/// Metropolis step. The per-token kernel alone leaves duplicate categories
/// and dishes near-frozen, because a block can only dissolve one seat at a
/// time against its own size; these moves let blocks merge directly.
pub fn structure_sweep(state: &mut SeatingState, hp: &Hyperparams, rng: &mut ChaCha8Rng) {
    resample_menu_dishes(state, hp, rng);
    for doc in 0..state.n_docs() {
        propose_section_move(state, doc, hp, rng);
        let ids: Vec<u32> = state.doc_entryways(doc).iter().map(|e| e.id).collect();
        for id in ids {
            propose_entryway_move(state, doc, id, hp, rng);
        }
    }
    #[cfg(debug_assertions)]
    {
        let report = state.audit_counts();
        debug_assert!(report.is_empty(), "post-structure audit: {report:?}");
    }
}

/// Where a relocated table gets its menu: a menu that survives the
/// detachment, or a shared slot the block creates on first use.
#[derive(Clone, Copy)]
enum MenuAttach {
    Keep { menu: u32, dish: u32 },
    Slot(usize),
}

/// Where a relocated customer sits: a table that survives the detachment, or
/// a shared slot the block creates on first use.
#[derive(Clone, Copy)]
enum TableAttach {
    Keep { table: u32, menu: u32, dish: u32 },
    Slot(usize),
}

/// Reseat prescription for the tokens of one detached block. Slot entries are
/// created by their first token and joined by the rest, so partition shapes
/// survive the round trip even though structure ids change.
struct BlockPlan {
    /// Hosting category when it survives detachment; `None` recreates it.
    category: Option<u32>,
    /// (token, word, entryway slot, table attachment) in application order.
    steps: Vec<(TokenRef, u32, usize, TableAttach)>,
    /// Per entryway slot: a surviving entryway id, or `None` to create one.
    entries: Vec<Option<u32>>,
    /// Per table slot: where its menu comes from.
    tables: Vec<MenuAttach>,
    /// Per menu slot: the dish it serves.
    menus: Vec<Choice>,
}

fn detach_block(state: &mut SeatingState, steps: &[(TokenRef, u32, usize, TableAttach)]) {
    for &(token, ..) in steps {
        state
            .unseat_customer(token)
            .expect("block token is seated");
    }
}

fn apply_block(state: &mut SeatingState, plan: &BlockPlan) {
    let mut cat_id = plan.category;
    let mut entry_ids = plan.entries.clone();
    let mut table_ids: Vec<Option<(u32, u32, u32)>> = vec![None; plan.tables.len()];
    let mut menu_ids: Vec<Option<(u32, u32)>> = vec![None; plan.menus.len()];
    for &(token, word, e_slot, t_attach) in &plan.steps {
        let entryway = match entry_ids[e_slot] {
            Some(id) => Choice::Existing(id),
            None => Choice::New,
        };
        let category = match cat_id {
            Some(id) => Choice::Existing(id),
            None => Choice::New,
        };
        let (table, menu, dish) = match t_attach {
            TableAttach::Keep { table, menu, dish } => (
                Choice::Existing(table),
                Choice::Existing(menu),
                Choice::Existing(dish),
            ),
            TableAttach::Slot(t_slot) => match table_ids[t_slot] {
                Some((t, m, d)) => (
                    Choice::Existing(t),
                    Choice::Existing(m),
                    Choice::Existing(d),
                ),
                None => {
                    let (menu, dish) = match plan.tables[t_slot] {
                        MenuAttach::Keep { menu, dish } => {
                            (Choice::Existing(menu), Choice::Existing(dish))
                        }
                        MenuAttach::Slot(k) => match menu_ids[k] {
                            Some((m, d)) => (Choice::Existing(m), Choice::Existing(d)),
                            None => (Choice::New, plan.menus[k]),
                        },
                    };
                    (Choice::New, menu, dish)
                }
            },
        };
        let path = FullPath {
            entryway,
            category,
            table,
            menu,
            dish,
        };
        let seat = state
            .seat_customer(token, word, &path)
            .expect("block reseat path is consistent");
        cat_id.get_or_insert(seat.category);
        entry_ids[e_slot].get_or_insert(seat.entryway);
        if let TableAttach::Slot(t_slot) = t_attach {
            if table_ids[t_slot].is_none() {
                table_ids[t_slot] = Some((seat.table, seat.menu, seat.dish));
                if let MenuAttach::Slot(k) = plan.tables[t_slot] {
                    menu_ids[k].get_or_insert((seat.menu, seat.dish));
                }
            }
        }
    }
}

fn sample_log_categorical(log_weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|&w| (w - max).exp()).collect();
    sample_categorical(&weights, rng)
}

/// Gibbs pass over menus: each menu detaches its customers, redraws its dish
/// from the exact conditional given every other menu, and reseats with the
/// partition shape intact. Weight of dish d = (menus already serving d, or
/// phi1 for a fresh dish) x the sequential predictive probability of the
/// menu's words under d's remaining counts.
fn resample_menu_dishes(state: &mut SeatingState, hp: &Hyperparams, rng: &mut ChaCha8Rng) {
    let pass: Vec<u32> = state
        .categories()
        .iter()
        .flat_map(|c| c.menus.iter().map(|m| m.id))
        .collect();
    for menu_id in pass {
        resample_one_menu_dish(state, menu_id, hp, rng);
    }
}

fn resample_one_menu_dish(
    state: &mut SeatingState,
    menu_id: u32,
    hp: &Hyperparams,
    rng: &mut ChaCha8Rng,
) {
    let vocab = state.vocab_size();
    let mut steps: Vec<(TokenRef, u32, usize, TableAttach)> = Vec::new();
    let mut entry_slot: Vec<u32> = Vec::new();
    let mut table_slot: Vec<u32> = Vec::new();
    let mut entry_index: HashMap<u32, usize> = HashMap::new();
    let mut table_index: HashMap<u32, usize> = HashMap::new();
    let mut entry_doc: Vec<usize> = Vec::new();
    let mut moved_per_entry: Vec<u32> = Vec::new();
    let mut profile = vec![0u32; vocab];
    let mut category = None;
    for (j, doc) in state.docs.iter().enumerate() {
        for (t, seat) in doc.seats.iter().enumerate() {
            let Some(s) = seat else { continue };
            if s.menu != menu_id {
                continue;
            }
            category = Some(s.category);
            let e = *entry_index.entry(s.entryway).or_insert_with(|| {
                entry_slot.push(s.entryway);
                entry_doc.push(j);
                moved_per_entry.push(0);
                entry_slot.len() - 1
            });
            moved_per_entry[e] += 1;
            let tbl = *table_index.entry(s.table).or_insert_with(|| {
                table_slot.push(s.table);
                table_slot.len() - 1
            });
            profile[s.word as usize] += 1;
            steps.push((TokenRef::new(j, t), s.word, e, TableAttach::Slot(tbl)));
        }
    }
    let Some(cat_id) = category else { return };

    // Entryways keeping customers outside the block survive detachment; so
    // does the category if any of its entryways survive.
    let mut dying_entries = 0u32;
    let entries: Vec<Option<u32>> = entry_slot
        .iter()
        .zip(&entry_doc)
        .zip(&moved_per_entry)
        .map(|((&id, &doc), &moved)| {
            let ways = state.doc_entryways(doc);
            let i = ways
                .binary_search_by_key(&id, |e| e.id)
                .expect("seated entryway exists");
            if ways[i].count > moved {
                Some(id)
            } else {
                dying_entries += 1;
                None
            }
        })
        .collect();
    let cat_survives = state
        .category(cat_id)
        .expect("seated category exists")
        .n_entryways
        > dying_entries;

    detach_block(state, &steps);

    let n_tokens = steps.len();
    let dishes = state.dishes();
    let mut log_weights = Vec::with_capacity(dishes.len() + 1);
    let mut ids = Vec::with_capacity(dishes.len());
    for d in dishes {
        let mut lw = f64::from(d.n_menus).ln();
        for (x, &c) in profile.iter().enumerate() {
            for i in 0..c {
                lw += (f64::from(d.word_counts[x]) + hp.beta + f64::from(i)).ln();
            }
        }
        let denom = f64::from(d.total) + vocab as f64 * hp.beta;
        for i in 0..n_tokens {
            lw -= (denom + i as f64).ln();
        }
        log_weights.push(lw);
        ids.push(d.id);
    }
    let mut lw = hp.phi1.ln();
    for &c in &profile {
        for i in 0..c {
            lw += (hp.beta + f64::from(i)).ln();
        }
    }
    for i in 0..n_tokens {
        lw -= (vocab as f64 * hp.beta + i as f64).ln();
    }
    log_weights.push(lw);

    let pick = sample_log_categorical(&log_weights, rng);
    let dish = if pick < ids.len() {
        Choice::Existing(ids[pick])
    } else {
        Choice::New
    };

    let plan = BlockPlan {
        category: if cat_survives { Some(cat_id) } else { None },
        steps,
        entries,
        tables: vec![MenuAttach::Slot(0); table_slot.len()],
        menus: vec![dish],
    };
    apply_block(state, &plan);
}

/// One Metropolis proposal relocating a whole document section (entryways,
/// tables, customers) to a category where the document is not yet seated.
/// Menus for the relocated tables are drawn from the model's own
/// table-to-menu conditional restricted to each table's dish, so the
/// acceptance ratio collapses to category popularity factors for the
/// relabeled entryways times per-table dish marginals, forward versus a
/// replay of the original configuration. Token dish labels never change, so
/// word factors cancel exactly.
fn propose_section_move(
    state: &mut SeatingState,
    doc: usize,
    hp: &Hyperparams,
    rng: &mut ChaCha8Rng,
) {
    let sections: Vec<u32> = state.docs[doc].sections.iter().map(|s| s.category).collect();
    if sections.is_empty() {
        return;
    }
    let src = sections[rng.random_range(0..sections.len())];
    let targets: Vec<u32> = state
        .categories()
        .iter()
        .map(|c| c.id)
        .filter(|id| !sections.contains(id))
        .collect();
    if targets.is_empty() {
        return;
    }
    let tgt = targets[rng.random_range(0..targets.len())];

    // The source category must outlive the move so the reverse proposal
    // exists; same for every dish carried by a relocated table.
    let moved_entries: Vec<u32> = state
        .doc_entryways(doc)
        .iter()
        .filter(|e| e.category == src)
        .map(|e| e.id)
        .collect();
    let src_cat = state.category(src).expect("section category exists");
    if src_cat.n_entryways <= moved_entries.len() as u32 {
        return;
    }
    let menu_dish: HashMap<u32, u32> = src_cat.menus.iter().map(|m| (m.id, m.dish)).collect();
    let menu_total: HashMap<u32, u32> = src_cat.menus.iter().map(|m| (m.id, m.n_tables)).collect();
    let tables: Vec<(u32, u32, u32)> = state
        .section_tables(doc, src)
        .iter()
        .map(|t| (t.id, t.menu, menu_dish[&t.menu]))
        .collect();
    let mut moved_per_menu: HashMap<u32, u32> = HashMap::new();
    for &(_, menu, _) in &tables {
        *moved_per_menu.entry(menu).or_insert(0) += 1;
    }
    let mut dying_menus_per_dish: HashMap<u32, u32> = HashMap::new();
    for (&menu, &moved) in &moved_per_menu {
        if menu_total[&menu] == moved {
            *dying_menus_per_dish.entry(menu_dish[&menu]).or_insert(0) += 1;
        }
    }
    for (&dish, &dying) in &dying_menus_per_dish {
        if state.dish(dish).expect("served dish exists").n_menus <= dying {
            return;
        }
    }

    let mut steps: Vec<(TokenRef, u32, usize, TableAttach)> = Vec::new();
    let mut entry_index: HashMap<u32, usize> = HashMap::new();
    for &id in &moved_entries {
        let k = entry_index.len();
        entry_index.insert(id, k);
    }
    let mut table_index: HashMap<u32, usize> = HashMap::new();
    for &(id, ..) in &tables {
        let k = table_index.len();
        table_index.insert(id, k);
    }
    for (t, seat) in state.docs[doc].seats.iter().enumerate() {
        let Some(s) = seat else { continue };
        if s.category != src {
            continue;
        }
        steps.push((
            TokenRef::new(doc, t),
            s.word,
            entry_index[&s.entryway],
            TableAttach::Slot(table_index[&s.table]),
        ));
    }

    detach_block(state, &steps);

    // Entryway relabeling factors on the detached counts.
    let e_base_tgt = f64::from(state.category(tgt).expect("target exists").n_entryways);
    let e_base_src = f64::from(state.category(src).expect("source survives").n_entryways);
    let mut ln_accept = 0.0;
    for i in 0..moved_entries.len() {
        ln_accept += (e_base_tgt + i as f64).ln() - (e_base_src + i as f64).ln();
    }

    // Forward draw: seat each table's menu in the target category from the
    // dish-restricted conditional, accumulating the dish-marginal normalizer.
    struct ScratchMenu {
        attach: MenuAttach,
        dish: u32,
        count: u32,
    }
    let tgt_cat = state.category(tgt).expect("target exists");
    let mut fwd: Vec<ScratchMenu> = tgt_cat
        .menus
        .iter()
        .map(|m| ScratchMenu {
            attach: MenuAttach::Keep {
                menu: m.id,
                dish: m.dish,
            },
            dish: m.dish,
            count: m.n_tables,
        })
        .collect();
    let mut menus_of_dish: HashMap<u32, f64> = tables
        .iter()
        .map(|&(_, _, d)| {
            (
                d,
                f64::from(state.dish(d).expect("served dish exists").n_menus),
            )
        })
        .collect();
    let mut t_total = f64::from(tgt_cat.n_tables);
    let mut m_total = f64::from(state.total_menus());
    let mut menu_slots: Vec<Choice> = Vec::new();
    let mut table_attach: Vec<MenuAttach> = Vec::with_capacity(tables.len());
    let mut weights: Vec<f64> = Vec::new();
    let mut hits: Vec<usize> = Vec::new();
    for &(_, _, dish) in &tables {
        weights.clear();
        hits.clear();
        let mut sum_exist = 0.0;
        for (i, m) in fwd.iter().enumerate() {
            if m.dish == dish {
                hits.push(i);
                weights.push(f64::from(m.count));
                sum_exist += f64::from(m.count);
            }
        }
        let w_new = hp.gamma1 * menus_of_dish[&dish] / (m_total + hp.phi1);
        weights.push(w_new);
        ln_accept += ((sum_exist + w_new) / (t_total + hp.gamma1)).ln();
        let pick = sample_categorical(&weights, rng);
        if pick < hits.len() {
            let m = &mut fwd[hits[pick]];
            m.count += 1;
            table_attach.push(m.attach);
        } else {
            let k = menu_slots.len();
            menu_slots.push(Choice::Existing(dish));
            fwd.push(ScratchMenu {
                attach: MenuAttach::Slot(k),
                dish,
                count: 1,
            });
            table_attach.push(MenuAttach::Slot(k));
            *menus_of_dish.get_mut(&dish).expect("dish tracked") += 1.0;
            m_total += 1.0;
        }
        t_total += 1.0;
    }

    // Reverse replay: the same normalizers for re-seating the original menu
    // configuration back into the source category.
    let src_cat = state.category(src).expect("source survives");
    let mut rev: Vec<(u32, u32, u32)> = src_cat
        .menus
        .iter()
        .map(|m| (m.id, m.dish, m.n_tables))
        .collect();
    let mut menus_of_dish: HashMap<u32, f64> = tables
        .iter()
        .map(|&(_, _, d)| {
            (
                d,
                f64::from(state.dish(d).expect("served dish exists").n_menus),
            )
        })
        .collect();
    let mut t_total = f64::from(src_cat.n_tables);
    let mut m_total = f64::from(state.total_menus());
    for &(_, menu, dish) in &tables {
        let sum_exist: f64 = rev
            .iter()
            .filter(|&&(_, d, _)| d == dish)
            .map(|&(_, _, c)| f64::from(c))
            .sum();
        let w_new = hp.gamma1 * menus_of_dish[&dish] / (m_total + hp.phi1);
        ln_accept -= ((sum_exist + w_new) / (t_total + hp.gamma1)).ln();
        if let Some(entry) = rev.iter_mut().find(|e| e.0 == menu) {
            entry.2 += 1;
        } else {
            rev.push((menu, dish, 1));
            *menus_of_dish.get_mut(&dish).expect("dish tracked") += 1.0;
            m_total += 1.0;
        }
        t_total += 1.0;
    }

    let accept = ln_accept >= 0.0 || rng.random::<f64>() < ln_accept.exp();
    let plan = if accept {
        BlockPlan {
            category: Some(tgt),
            steps,
            entries: vec![None; moved_entries.len()],
            tables: table_attach,
            menus: menu_slots,
        }
    } else {
        // Restore the original configuration; menus fully owned by the
        // section died on detachment and come back as slots.
        let mut menu_slot: HashMap<u32, usize> = HashMap::new();
        let mut menus: Vec<Choice> = Vec::new();
        let tables_back: Vec<MenuAttach> = tables
            .iter()
            .map(|&(_, menu, dish)| {
                if menu_total[&menu] == moved_per_menu[&menu] {
                    let k = *menu_slot.entry(menu).or_insert_with(|| {
                        menus.push(Choice::Existing(dish));
                        menus.len() - 1
                    });
                    MenuAttach::Slot(k)
                } else {
                    MenuAttach::Keep { menu, dish }
                }
            })
            .collect();
        BlockPlan {
            category: Some(src),
            steps,
            entries: vec![None; moved_entries.len()],
            tables: tables_back,
            menus,
        }
    };
    apply_block(state, &plan);
}

/// One Metropolis proposal relocating a single entryway and its customers to
/// another category. Unlike the section move, the target may already host
/// the document: the customers' tables are redrawn from the model's own
/// seating conditional restricted to each customer's dish, so the acceptance
/// ratio is the category popularity ratio times per-customer dish marginals,
/// forward versus a replay of the original seating. This is the move that
/// lets two sections of one document merge.
fn propose_entryway_move(
    state: &mut SeatingState,
    doc: usize,
    entryway: u32,
    hp: &Hyperparams,
    rng: &mut ChaCha8Rng,
) {
    let ways = state.doc_entryways(doc);
    let Ok(i) = ways.binary_search_by_key(&entryway, |e| e.id) else {
        return;
    };
    let src = ways[i].category;
    if state
        .category(src)
        .expect("entry category exists")
        .n_entryways
        < 2
    {
        return;
    }
    let targets: Vec<u32> = state
        .categories()
        .iter()
        .map(|c| c.id)
        .filter(|&id| id != src)
        .collect();
    if targets.is_empty() {
        return;
    }
    let tgt = targets[rng.random_range(0..targets.len())];

    // Moved customers with their original placement, in token order.
    let moved: Vec<(usize, u32, u32, u32, u32)> = state.docs[doc]
        .seats
        .iter()
        .enumerate()
        .filter_map(|(t, seat)| {
            seat.as_ref()
                .filter(|s| s.entryway == entryway)
                .map(|s| (t, s.word, s.table, s.menu, s.dish))
        })
        .collect();

    // Tables fully owned by the moved customers die on detachment, possibly
    // cascading into menus and dishes; every moved dish must survive.
    let mut moved_per_table: HashMap<u32, u32> = HashMap::new();
    for &(_, _, table, _, _) in &moved {
        *moved_per_table.entry(table).or_insert(0) += 1;
    }
    let src_cat = state.category(src).expect("entry category exists");
    let menu_tables: HashMap<u32, u32> = src_cat.menus.iter().map(|m| (m.id, m.n_tables)).collect();
    let mut dying_tables_per_menu: HashMap<u32, u32> = HashMap::new();
    for t in state.section_tables(doc, src) {
        if moved_per_table.get(&t.id).copied() == Some(t.count) {
            *dying_tables_per_menu.entry(t.menu).or_insert(0) += 1;
        }
    }
    let mut dying_menus_per_dish: HashMap<u32, u32> = HashMap::new();
    for (&menu, &dying) in &dying_tables_per_menu {
        if menu_tables[&menu] == dying {
            let dish = src_cat
                .menus
                .iter()
                .find(|m| m.id == menu)
                .expect("menu exists")
                .dish;
            *dying_menus_per_dish.entry(dish).or_insert(0) += 1;
        }
    }
    for (&dish, &dying) in &dying_menus_per_dish {
        if state.dish(dish).expect("served dish exists").n_menus <= dying {
            return;
        }
    }

    let steps_detach: Vec<(TokenRef, u32, usize, TableAttach)> = moved
        .iter()
        .map(|&(t, word, ..)| (TokenRef::new(doc, t), word, 0, TableAttach::Slot(0)))
        .collect();
    detach_block(state, &steps_detach);

    let mut ln_accept = f64::from(state.category(tgt).expect("target exists").n_entryways).ln()
        - f64::from(state.category(src).expect("source survives").n_entryways).ln();

    // Forward draw: seat each customer in the target section from the
    // dish-restricted conditional, tracking the dish-marginal normalizer.
    struct ScratchTable {
        attach: TableAttach,
        dish: u32,
        count: u32,
    }
    struct ScratchMenu {
        attach: MenuAttach,
        dish: u32,
        count: u32,
    }
    let tgt_cat = state.category(tgt).expect("target exists");
    let tgt_menu_dish: HashMap<u32, u32> = tgt_cat.menus.iter().map(|m| (m.id, m.dish)).collect();
    let mut fwd_menus: Vec<ScratchMenu> = tgt_cat
        .menus
        .iter()
        .map(|m| ScratchMenu {
            attach: MenuAttach::Keep {
                menu: m.id,
                dish: m.dish,
            },
            dish: m.dish,
            count: m.n_tables,
        })
        .collect();
    let mut fwd_tables: Vec<ScratchTable> = state
        .section_tables(doc, tgt)
        .iter()
        .map(|t| ScratchTable {
            attach: TableAttach::Keep {
                table: t.id,
                menu: t.menu,
                dish: tgt_menu_dish[&t.menu],
            },
            dish: tgt_menu_dish[&t.menu],
            count: t.count,
        })
        .collect();
    let dish_menu_count = |d: u32, state: &SeatingState| {
        f64::from(state.dish(d).expect("served dish exists").n_menus)
    };
    let mut menus_of_dish: HashMap<u32, f64> = moved
        .iter()
        .map(|&(.., d)| (d, dish_menu_count(d, state)))
        .collect();
    let mut sec_total: f64 = fwd_tables.iter().map(|t| f64::from(t.count)).sum();
    let mut tab_total = f64::from(tgt_cat.n_tables);
    let mut m_total = f64::from(state.total_menus());
    let mut table_slots: Vec<MenuAttach> = Vec::new();
    let mut menu_slots: Vec<Choice> = Vec::new();
    let mut attach_fwd: Vec<TableAttach> = Vec::with_capacity(moved.len());
    let mut weights: Vec<f64> = Vec::new();
    let mut hits: Vec<usize> = Vec::new();
    for &(.., dish) in &moved {
        weights.clear();
        hits.clear();
        let mut table_mass = 0.0;
        for (i, t) in fwd_tables.iter().enumerate() {
            if t.dish == dish {
                hits.push(i);
                weights.push(f64::from(t.count));
                table_mass += f64::from(t.count);
            }
        }
        let menu_mass: f64 = fwd_menus
            .iter()
            .filter(|m| m.dish == dish)
            .map(|m| f64::from(m.count))
            .sum();
        let new_menu_mass = hp.gamma1 * menus_of_dish[&dish] / (m_total + hp.phi1);
        let inner = (menu_mass + new_menu_mass) / (tab_total + hp.gamma1);
        let new_table_mass = hp.alpha1 * inner;
        weights.push(new_table_mass);
        ln_accept += ((table_mass + new_table_mass) / (sec_total + hp.alpha1)).ln();
        let pick = sample_categorical(&weights, rng);
        if pick < hits.len() {
            let t = &mut fwd_tables[hits[pick]];
            t.count += 1;
            attach_fwd.push(t.attach);
        } else {
            // New table: draw its menu from the same restricted conditional.
            weights.clear();
            hits.clear();
            for (i, m) in fwd_menus.iter().enumerate() {
                if m.dish == dish {
                    hits.push(i);
                    weights.push(f64::from(m.count));
                }
            }
            weights.push(new_menu_mass);
            let mpick = sample_categorical(&weights, rng);
            let menu_attach = if mpick < hits.len() {
                let m = &mut fwd_menus[hits[mpick]];
                m.count += 1;
                m.attach
            } else {
                let k = menu_slots.len();
                menu_slots.push(Choice::Existing(dish));
                fwd_menus.push(ScratchMenu {
                    attach: MenuAttach::Slot(k),
                    dish,
                    count: 1,
                });
                *menus_of_dish.get_mut(&dish).expect("dish tracked") += 1.0;
                m_total += 1.0;
                MenuAttach::Slot(k)
            };
            let ts = table_slots.len();
            table_slots.push(menu_attach);
            fwd_tables.push(ScratchTable {
                attach: TableAttach::Slot(ts),
                dish,
                count: 1,
            });
            attach_fwd.push(TableAttach::Slot(ts));
            tab_total += 1.0;
        }
        sec_total += 1.0;
    }

    // Reverse replay: the same normalizers for the original seating back in
    // the source section.
    let src_cat = state.category(src).expect("source survives");
    let src_menu_dish: HashMap<u32, u32> = src_cat.menus.iter().map(|m| (m.id, m.dish)).collect();
    let mut rev_menus: Vec<(u32, u32, u32)> = src_cat
        .menus
        .iter()
        .map(|m| (m.id, m.dish, m.n_tables))
        .collect();
    let mut rev_tables: Vec<(u32, u32, u32)> = state
        .section_tables(doc, src)
        .iter()
        .map(|t| (t.id, src_menu_dish[&t.menu], t.count))
        .collect();
    let mut menus_of_dish: HashMap<u32, f64> = moved
        .iter()
        .map(|&(.., d)| (d, dish_menu_count(d, state)))
        .collect();
    let mut sec_total: f64 = rev_tables.iter().map(|&(.., c)| f64::from(c)).sum();
    let mut tab_total = f64::from(src_cat.n_tables);
    let mut m_total = f64::from(state.total_menus());
    for &(_, _, table, menu, dish) in &moved {
        let table_mass: f64 = rev_tables
            .iter()
            .filter(|&&(_, d, _)| d == dish)
            .map(|&(.., c)| f64::from(c))
            .sum();
        let menu_mass: f64 = rev_menus
            .iter()
            .filter(|&&(_, d, _)| d == dish)
            .map(|&(.., c)| f64::from(c))
            .sum();
        let new_menu_mass = hp.gamma1 * menus_of_dish[&dish] / (m_total + hp.phi1);
        let inner = (menu_mass + new_menu_mass) / (tab_total + hp.gamma1);
        ln_accept -= ((table_mass + hp.alpha1 * inner) / (sec_total + hp.alpha1)).ln();
        if let Some(t) = rev_tables.iter_mut().find(|t| t.0 == table) {
            t.2 += 1;
        } else {
            rev_tables.push((table, dish, 1));
            tab_total += 1.0;
            if let Some(m) = rev_menus.iter_mut().find(|m| m.0 == menu) {
                m.2 += 1;
            } else {
                rev_menus.push((menu, dish, 1));
                *menus_of_dish.get_mut(&dish).expect("dish tracked") += 1.0;
                m_total += 1.0;
            }
        }
        sec_total += 1.0;
    }

    let accept = ln_accept >= 0.0 || rng.random::<f64>() < ln_accept.exp();
    let plan = if accept {
        BlockPlan {
            category: Some(tgt),
            steps: moved
                .iter()
                .zip(&attach_fwd)
                .map(|(&(t, word, ..), &attach)| (TokenRef::new(doc, t), word, 0, attach))
                .collect(),
            entries: vec![None],
            tables: table_slots,
            menus: menu_slots,
        }
    } else {
        // Restore the original seating; structures fully owned by the moved
        // customers died on detachment and come back as slots.
        let live_tables: HashMap<u32, u32> = state
            .section_tables(doc, src)
            .iter()
            .map(|t| (t.id, t.menu))
            .collect();
        let live_menus: HashMap<u32, u32> = state
            .category(src)
            .expect("source survives")
            .menus
            .iter()
            .map(|m| (m.id, m.dish))
            .collect();
        let mut table_slot: HashMap<u32, usize> = HashMap::new();
        let mut menu_slot: HashMap<u32, usize> = HashMap::new();
        let mut tables: Vec<MenuAttach> = Vec::new();
        let mut menus: Vec<Choice> = Vec::new();
        let steps = moved
            .iter()
            .map(|&(t, word, table, menu, dish)| {
                let attach = if let Some(&m) = live_tables.get(&table) {
                    TableAttach::Keep {
                        table,
                        menu: m,
                        dish,
                    }
                } else {
                    let k = *table_slot.entry(table).or_insert_with(|| {
                        let menu_attach = if live_menus.contains_key(&menu) {
                            MenuAttach::Keep { menu, dish }
                        } else {
                            let mk = *menu_slot.entry(menu).or_insert_with(|| {
                                menus.push(Choice::Existing(dish));
                                menus.len() - 1
                            });
                            MenuAttach::Slot(mk)
                        };
                        tables.push(menu_attach);
                        tables.len() - 1
                    });
                    TableAttach::Slot(k)
                };
                (TokenRef::new(doc, t), word, 0, attach)
            })
            .collect();
        BlockPlan {
            category: Some(src),
            steps,
            entries: vec![None],
            tables,
            menus,
        }
    };
    apply_block(state, &plan);
}

/// Draws a seating path from the seating prior (no word factor), then a word
/// from the chosen dish's predictive distribution, and seats the token.
/// Returns the word. This simulates the model's own generative process one
/// token at a time while keeping counts collapsed.
pub fn simulate_token(
    state: &mut SeatingState,
    token: TokenRef,
    hp: &Hyperparams,
    rng: &mut ChaCha8Rng,
) -> u32 {
    let supers = super_topic_candidates(state, token.doc, hp);
    let w1: Vec<f64> = supers.iter().map(|c| c.weight).collect();
    let entry = supers[sample_categorical(&w1, rng)].choice;
    let cat_ref = match entry {
        EntryChoice::Existing { category, .. } | EntryChoice::NewEntryway { category } => {
            CategoryRef::Existing(category)
        }
        EntryChoice::NewBoth => CategoryRef::New,
    };
    let subs = sub_topic_candidates(state, token.doc, cat_ref, hp);
    let w2: Vec<f64> = subs.iter().map(|c| c.weight).collect();
    let sub = subs[sample_categorical(&w2, rng)].choice;

    let vocab = state.vocab_size();
    let word = match sub {
        SubChoice::ExistingTable { dish, .. }
        | SubChoice::NewTable { dish, .. }
        | SubChoice::NewMenu { dish } => {
            let d = state.dish(dish).expect("dish exists");
            let weights: Vec<f64> = d
                .word_counts
                .iter()
                .map(|&c| c as f64 + hp.beta)
                .collect();
            sample_categorical(&weights, rng) as u32
        }
        SubChoice::AllNew => rng.random_range(0..vocab as u32),
    };

    let path = assemble_path(entry, sub);
    state
        .seat_customer(token, word, &path)
        .expect("sampled path is consistent");
    word
}

/// One auxiliary-variable update cycle for a shared concentration across
/// groups: per group draw a Beta auxiliary and a Bernoulli indicator, then a
/// Gamma draw for the concentration. Iterated a few times for mixing.
fn resample_concentration(
    group_sizes: &[u32],
    total_components: u32,
    prior: &GammaPrior,
    current: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    if group_sizes.is_empty() || total_components == 0 {
        return prior.draw(rng);
    }
    let mut alpha = current.max(1e-12);
    for _ in 0..5 {
        let mut sum_log_w = 0.0;
        let mut sum_s = 0.0;
        for &n in group_sizes {
            let n = f64::from(n);
            let w = Beta::new(alpha + 1.0, n)
                .expect("positive Beta parameters")
                .sample(rng);
            sum_log_w += w.max(1e-300).ln();
            if rng.random::<f64>() < n / (n + alpha) {
                sum_s += 1.0;
            }
        }
        let shape = prior.shape + f64::from(total_components) - sum_s;
        let rate = 1.0 / prior.scale - sum_log_w;
        alpha = Gamma::new(shape, 1.0 / rate)
            .expect("positive posterior parameters")
            .sample(rng)
            .max(1e-12);
    }
    alpha
}

/// Resamples the five concentrations from their Gamma-prior posteriors given
/// the current seating structure. Each concentration uses the grouping it
/// governs; a concentration whose grouping is empty is redrawn from its
/// prior. The word-smoothing mass is fixed.
pub fn resample_hyperparams(
    state: &SeatingState,
    current: &Hyperparams,
    priors: &GammaPriors,
    rng: &mut ChaCha8Rng,
) -> Hyperparams {
    let doc_groups = state.doc_grouping();
    let doc_sizes: Vec<u32> = doc_groups.iter().map(|&(n, _)| n).collect();
    let section_groups = state.section_grouping();
    let section_sizes: Vec<u32> = section_groups.iter().map(|&(n, _)| n).collect();
    let cat_groups = state.category_grouping();
    let cat_sizes: Vec<u32> = cat_groups.iter().map(|&(n, _)| n).collect();
    let total_tables: u32 = cat_groups.iter().map(|&(n, _)| n).sum();

    let alpha0 = resample_concentration(
        &doc_sizes,
        state.total_entryways(),
        &priors.alpha0,
        current.alpha0,
        rng,
    );
    let gamma0 = resample_concentration(
        &[state.total_entryways()].into_iter().filter(|&n| n > 0).collect::<Vec<_>>(),
        state.categories().len() as u32,
        &priors.gamma0,
        current.gamma0,
        rng,
    );
    let alpha1 = resample_concentration(
        &section_sizes,
        total_tables,
        &priors.alpha1,
        current.alpha1,
        rng,
    );
    let gamma1 = resample_concentration(
        &cat_sizes,
        state.total_menus(),
        &priors.gamma1,
        current.gamma1,
        rng,
    );
    let phi1 = resample_concentration(
        &[state.total_menus()].into_iter().filter(|&n| n > 0).collect::<Vec<_>>(),
        state.dishes().len() as u32,
        &priors.phi1,
        current.phi1,
        rng,
    );

    Hyperparams {
        alpha0,
        gamma0,
        alpha1,
        gamma1,
        phi1,
        beta: priors.beta,
    }
}

/// A frozen export of a trained state: dense topic ids, mixtures, word
/// distributions, connectivity, and enough registry totals to generate fresh
/// documents. Token assignments ride along in memory but are persisted
/// separately.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicSnapshot {
    pub sweep: usize,
    pub seed: u64,
    pub vocab_size: usize,
    pub hyperparams: Hyperparams,
    pub n_super: usize,
    pub n_sub: usize,
    /// Entryway totals per super-topic across all documents.
    pub super_weights: Vec<u32>,
    /// Menus per super-topic as (sub-topic, table count) pairs, menu order.
    pub menus: Vec<Vec<(usize, u32)>>,
    /// Menu counts per (super, sub) pair; an edge exists iff the count is
    /// at least 1.
    pub connectivity: Vec<Vec<u32>>,
    /// Per-document mixture over super-topics.
    pub doc_super: Vec<Vec<f64>>,
    /// Per-document, per-super mixture over sub-topics.
    pub doc_super_sub: Vec<Vec<Vec<f64>>>,
    /// Smoothed word distribution per sub-topic.
    pub word_dists: Vec<Vec<f64>>,
    /// Per-token (super, sub) labels in dense ids.
    #[serde(skip)]
    pub assignments: Vec<Vec<(usize, usize)>>,
}

/// Compacts the live registries into a snapshot with dense ids.
pub fn snapshot(state: &SeatingState, hp: &Hyperparams, sweep: usize, seed: u64) -> TopicSnapshot {
    let categories = state.categories();
    let dishes = state.dishes();
    let n_super = categories.len();
    let n_sub = dishes.len();
    let vocab = state.vocab_size();
    let dense_cat = |id: u32| {
        categories
            .binary_search_by_key(&id, |c| c.id)
            .expect("live category")
    };
    let dense_dish = |id: u32| {
        dishes
            .binary_search_by_key(&id, |d| d.id)
            .expect("live dish")
    };

    let super_weights: Vec<u32> = categories.iter().map(|c| c.n_entryways).collect();
    let menus: Vec<Vec<(usize, u32)>> = categories
        .iter()
        .map(|c| {
            c.menus
                .iter()
                .map(|m| (dense_dish(m.dish), m.n_tables))
                .collect()
        })
        .collect();
    let mut connectivity = vec![vec![0u32; n_sub]; n_super];
    for (k, c) in categories.iter().enumerate() {
        for m in &c.menus {
            connectivity[k][dense_dish(m.dish)] += 1;
        }
    }

    let word_dists: Vec<Vec<f64>> = dishes
        .iter()
        .map(|d| {
            let denom = d.total as f64 + vocab as f64 * hp.beta;
            d.word_counts
                .iter()
                .map(|&c| (c as f64 + hp.beta) / denom)
                .collect()
        })
        .collect();

    let te = state.total_entryways() as f64;
    let m_total = state.total_menus() as f64;
    let n_docs = state.n_docs();
    let mut doc_super = Vec::with_capacity(n_docs);
    let mut doc_super_sub = Vec::with_capacity(n_docs);
    let mut assignments = Vec::with_capacity(n_docs);
    for j in 0..n_docs {
        // Predictive mass per existing super-topic for this document.
        let mut customers = vec![0f64; n_super];
        for e in state.doc_entryways(j) {
            customers[dense_cat(e.category)] += e.count as f64;
        }
        let mut row: Vec<f64> = (0..n_super)
            .map(|k| {
                customers[k]
                    + hp.alpha0 * super_weights[k] as f64 / (te + hp.gamma0)
            })
            .collect();
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            for w in &mut row {
                *w /= sum;
            }
        }
        doc_super.push(row);

        // Predictive mass per existing sub-topic within each super-topic.
        let mut per_super = Vec::with_capacity(n_super);
        for (k, c) in categories.iter().enumerate() {
            let denom_m = c.n_tables as f64 + hp.gamma1;
            let mut row = vec![0f64; n_sub];
            for t in state.section_tables(j, c.id) {
                let mi = c
                    .menus
                    .binary_search_by_key(&t.menu, |m| m.id)
                    .expect("table menu exists");
                row[dense_dish(c.menus[mi].dish)] += t.count as f64;
            }
            for &(dish, n_tables) in &menus[k] {
                row[dish] += hp.alpha1 * n_tables as f64 / denom_m;
            }
            for (d_dense, d) in dishes.iter().enumerate() {
                row[d_dense] += hp.alpha1 * hp.gamma1 / denom_m * d.n_menus as f64
                    / (m_total + hp.phi1);
            }
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                for w in &mut row {
                    *w /= sum;
                }
            }
            per_super.push(row);
        }
        doc_super_sub.push(per_super);

        let doc_assignments: Vec<(usize, usize)> = state.docs[j]
            .seats
            .iter()
            .flatten()
            .map(|s| (dense_cat(s.category), dense_dish(s.dish)))
            .collect();
        assignments.push(doc_assignments);
    }

    TopicSnapshot {
        sweep,
        seed,
        vocab_size: vocab,
        hyperparams: *hp,
        n_super,
        n_sub,
        super_weights,
        menus,
        connectivity,
        doc_super,
        doc_super_sub,
        word_dists,
        assignments,
    }
}

/// A completed training run: collected snapshots plus the per-sweep structure
/// trace (super-topic count, sub-topic count).
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub snapshots: Vec<TopicSnapshot>,
    pub trace: Vec<(usize, usize)>,
}

/// Builds a starting state by seating every token in order from its joint
/// conditional given the tokens seated so far.
pub fn init_state(corpus: &Corpus, hp: &Hyperparams, rng: &mut ChaCha8Rng) -> SeatingState {
    let mut state = SeatingState::new(corpus.vocabulary.len());
    let mut scratch = Scratch::default();
    for (j, doc) in corpus.documents.iter().enumerate() {
        for (t, &word) in doc.tokens.iter().enumerate() {
            seat_token_by_conditional(&mut state, TokenRef::new(j, t), word, hp, rng, &mut scratch);
        }
    }
    state
}

/// Trains a chain: incremental seating of every token from its joint
/// conditional, burn-in sweeps, then snapshot collection every `sample_lag`
/// sweeps. Hyperparameters are resampled after every sweep when enabled.
pub fn train(
    corpus: &Corpus,
    config: &TrainConfig,
    priors: &GammaPriors,
) -> Result<TrainRun, TrainError> {
    if corpus.documents.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    config.validate()?;
    priors.validate()?;

    let mut rng = crate::exec::rng_from_seed(config.seed);
    let mut hp = priors.means();
    let mut state = init_state(corpus, &hp, &mut rng);

    let mut trace = Vec::new();
    let mut snapshots = Vec::with_capacity(config.n_samples);
    let mut sweep_index = 0usize;
    let run_sweep = |state: &mut SeatingState, hp: &mut Hyperparams, rng: &mut ChaCha8Rng, trace: &mut Vec<(usize, usize)>, sweep_index: &mut usize| {
        gibbs_sweep(state, corpus, hp, rng);
        structure_sweep(state, hp, rng);
        if config.resample_hyper {
            *hp = resample_hyperparams(state, hp, priors, rng);
        }
        *sweep_index += 1;
        trace.push((state.categories().len(), state.dishes().len()));
    };

    for _ in 0..config.burn_in {
        run_sweep(&mut state, &mut hp, &mut rng, &mut trace, &mut sweep_index);
    }
    for _ in 0..config.n_samples {
        for _ in 0..config.sample_lag {
            run_sweep(&mut state, &mut hp, &mut rng, &mut trace, &mut sweep_index);
        }
        snapshots.push(snapshot(&state, &hp, sweep_index, config.seed));
    }

    Ok(TrainRun { snapshots, trace })
}

impl TopicSnapshot {
    /// Simulates a fresh document against the trained registries. Global
    /// structures are copied into a scratch overlay that local choices grow;
    /// the document's own entryways and tables start empty. Words come from
    /// the trained smoothed dish distributions, uniform for a dish invented
    /// during generation. The snapshot itself is never mutated.
    pub fn generate_document(&self, length: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
        assert!(length >= 1, "document length must be at least 1");
        let vocab = self.vocab_size as u32;
        let hp = &self.hyperparams;

        // Scratch overlay of the global registries.
        let mut cat_entry: Vec<u32> = self.super_weights.clone();
        let mut te: u32 = cat_entry.iter().sum();
        let mut menus: Vec<Vec<(usize, u32)>> = self.menus.clone();
        let mut cat_tables: Vec<u32> = menus
            .iter()
            .map(|ms| ms.iter().map(|&(_, n)| n).sum())
            .collect();
        let mut dish_menus: Vec<u32> = vec![0; self.n_sub];
        for ms in &menus {
            for &(dish, _) in ms {
                dish_menus[dish] += 1;
            }
        }
        let mut m_total: u32 = dish_menus.iter().sum();

        // Fresh-document state.
        let mut entryways: Vec<(usize, u32)> = Vec::new();
        let mut seated: u32 = 0;
        let mut tables: Vec<Vec<(usize, u32)>> = vec![Vec::new(); menus.len()];

        let mut weights: Vec<f64> = Vec::new();
        let mut out = Vec::with_capacity(length);
        for _ in 0..length {
            // Entryway, then category for a new entryway.
            weights.clear();
            let denom_e = seated as f64 + hp.alpha0;
            weights.extend(entryways.iter().map(|&(_, c)| c as f64 / denom_e));
            weights.push(hp.alpha0 / denom_e);
            let pick = sample_categorical(&weights, rng);
            let cat = if pick < entryways.len() {
                entryways[pick].1 += 1;
                entryways[pick].0
            } else {
                weights.clear();
                let denom_c = te as f64 + hp.gamma0;
                weights.extend(cat_entry.iter().map(|&n| n as f64 / denom_c));
                weights.push(hp.gamma0 / denom_c);
                let cat = sample_categorical(&weights, rng);
                if cat == cat_entry.len() {
                    cat_entry.push(0);
                    menus.push(Vec::new());
                    cat_tables.push(0);
                    tables.push(Vec::new());
                }
                cat_entry[cat] += 1;
                te += 1;
                entryways.push((cat, 1));
                cat
            };
            seated += 1;

            // Table, then menu for a new table, then dish for a new menu.
            weights.clear();
            let section_total: u32 = tables[cat].iter().map(|&(_, c)| c).sum();
            let denom_t = section_total as f64 + hp.alpha1;
            weights.extend(tables[cat].iter().map(|&(_, c)| c as f64 / denom_t));
            weights.push(hp.alpha1 / denom_t);
            let pick = sample_categorical(&weights, rng);
            let menu_index = if pick < tables[cat].len() {
                tables[cat][pick].1 += 1;
                tables[cat][pick].0
            } else {
                weights.clear();
                let denom_m = cat_tables[cat] as f64 + hp.gamma1;
                weights.extend(menus[cat].iter().map(|&(_, n)| n as f64 / denom_m));
                weights.push(hp.gamma1 / denom_m);
                let mpick = sample_categorical(&weights, rng);
                let menu_index = if mpick < menus[cat].len() {
                    menus[cat][mpick].1 += 1;
                    mpick
                } else {
                    weights.clear();
                    let denom_d = m_total as f64 + hp.phi1;
                    weights.extend(dish_menus.iter().map(|&n| n as f64 / denom_d));
                    weights.push(hp.phi1 / denom_d);
                    let dish = sample_categorical(&weights, rng);
                    if dish == dish_menus.len() {
                        dish_menus.push(0);
                    }
                    dish_menus[dish] += 1;
                    m_total += 1;
                    menus[cat].push((dish, 1));
                    menus[cat].len() - 1
                };
                cat_tables[cat] += 1;
                tables[cat].push((menu_index, 1));
                menu_index
            };

            // Emission from the trained dish distribution; a dish invented
            // during generation has no trained counts and emits uniformly.
            let dish = menus[cat][menu_index].0;
            let word = if dish < self.n_sub {
                sample_categorical(&self.word_dists[dish], rng) as u32
            } else {
                rng.random_range(0..vocab)
            };
            out.push(word);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seating::SeatingState;

    fn hp_unit() -> Hyperparams {
        Hyperparams {
            alpha0: 1.0,
            gamma0: 1.0,
            alpha1: 1.0,
            gamma1: 1.0,
            phi1: 1.0,
            beta: 0.01,
        }
    }

    /// Two entryways in doc 0 (counts 2 and 1, categories c0 and c1), plus
    /// two extra entryways for c0 in other docs. Entryway totals: c0 -> 3,
    /// c1 -> 1.
    fn block1_state() -> SeatingState {
        let mut s = SeatingState::new(4);
        let seat0 = s
            .seat_customer(TokenRef::new(0, 0), 0, &FullPath::all_new())
            .unwrap();
        let reuse = FullPath {
            entryway: Choice::Existing(seat0.entryway),
            category: Choice::Existing(seat0.category),
            table: Choice::Existing(seat0.table),
            menu: Choice::Existing(seat0.menu),
            dish: Choice::Existing(seat0.dish),
        };
        s.seat_customer(TokenRef::new(0, 1), 1, &reuse).unwrap();
        s.seat_customer(TokenRef::new(0, 2), 2, &FullPath::all_new())
            .unwrap();
        for doc in 1..=2 {
            let p = FullPath {
                entryway: Choice::New,
                category: Choice::Existing(seat0.category),
                table: Choice::New,
                menu: Choice::Existing(seat0.menu),
                dish: Choice::Existing(seat0.dish),
            };
            s.seat_customer(TokenRef::new(doc, 0), 0, &p).unwrap();
        }
        assert!(s.audit_counts().is_empty());
        s
    }

    #[test]
    fn entry_block_matches_hand_computation() {
        let s = block1_state();
        let cands = super_topic_candidates(&s, 0, &hp_unit());
        assert_eq!(cands.len(), 2 + 2 + 1);
        let w: Vec<f64> = cands.iter().map(|c| c.weight).collect();
        let expect = [0.5, 0.25, 0.15, 0.05, 0.05];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{w:?}");
        }
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entry_block_empty_doc_weights() {
        let mut s = SeatingState::new(2);
        // One category with 4 entryways across docs.
        let seat0 = s
            .seat_customer(TokenRef::new(0, 0), 0, &FullPath::all_new())
            .unwrap();
        for doc in 1..=3 {
            let p = FullPath {
                entryway: Choice::New,
                category: Choice::Existing(seat0.category),
                table: Choice::New,
                menu: Choice::Existing(seat0.menu),
                dish: Choice::Existing(seat0.dish),
            };
            s.seat_customer(TokenRef::new(doc, 0), 0, &p).unwrap();
        }
        let cands = super_topic_candidates(&s, 9, &hp_unit());
        assert_eq!(cands.len(), 2);
        assert!((cands[0].weight - 0.8).abs() < 1e-12);
        assert!((cands[1].weight - 0.2).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_single_candidates() {
        let s = SeatingState::new(2);
        let cands = super_topic_candidates(&s, 0, &hp_unit());
        assert_eq!(cands.len(), 1);
        assert_eq!(cands[0].choice, EntryChoice::NewBoth);
        assert_eq!(cands[0].weight, 1.0);
        let subs = sub_topic_candidates(&s, 0, CategoryRef::New, &hp_unit());
        assert_eq!(subs.len(), 1);
        assert_eq!(subs[0].choice, SubChoice::AllNew);
        assert_eq!(subs[0].weight, 1.0);
    }

    /// Section with one table (count 2) on menu m -> dish d; menu m has 3
    /// tables in the category; dish d is on 2 menus globally.
    fn block2_state() -> (SeatingState, u32, u32, u32) {
        let mut s = SeatingState::new(4);
        let seat0 = s
            .seat_customer(TokenRef::new(0, 0), 0, &FullPath::all_new())
            .unwrap();
        let reuse_table = FullPath {
            entryway: Choice::Existing(seat0.entryway),
            category: Choice::Existing(seat0.category),
            table: Choice::Existing(seat0.table),
            menu: Choice::Existing(seat0.menu),
            dish: Choice::Existing(seat0.dish),
        };
        s.seat_customer(TokenRef::new(0, 1), 1, &reuse_table).unwrap();
        // Two more tables on the same menu in other docs.
        for doc in 1..=2 {
            let p = FullPath {
                entryway: Choice::New,
                category: Choice::Existing(seat0.category),
                table: Choice::New,
                menu: Choice::Existing(seat0.menu),
                dish: Choice::Existing(seat0.dish),
            };
            s.seat_customer(TokenRef::new(doc, 0), 0, &p).unwrap();
        }
        // A second menu for the same dish in another category.
        let p = FullPath {
            entryway: Choice::New,
            category: Choice::New,
            table: Choice::New,
            menu: Choice::New,
            dish: Choice::Existing(seat0.dish),
        };
        s.seat_customer(TokenRef::new(3, 0), 0, &p).unwrap();
        assert!(s.audit_counts().is_empty());
        (s, seat0.category, seat0.menu, seat0.dish)
    }

    #[test]
    fn sub_block_matches_hand_computation() {
        let (s, cat, menu, dish) = block2_state();
        // The extra category contributes a menu, so the global menu count is
        // 2 and dish d sits on both.
        assert_eq!(s.total_menus(), 2);
        let cands = sub_topic_candidates(&s, 0, CategoryRef::Existing(cat), &hp_unit());
        // 1 table + 1 menu + 1 dish + all-new.
        assert_eq!(cands.len(), 4);
        assert_eq!(
            cands[0].choice,
            SubChoice::ExistingTable {
                table: s.section_tables(0, cat)[0].id,
                menu,
                dish
            }
        );
        assert!((cands[0].weight - 2.0 / 3.0).abs() < 1e-12);
        assert!((cands[1].weight - 0.25).abs() < 1e-12);
        assert!((cands[2].weight - 1.0 / 18.0).abs() < 1e-12);
        assert!((cands[3].weight - 1.0 / 36.0).abs() < 1e-12);
        let sum: f64 = cands.iter().map(|c| c.weight).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sub_block_new_category_collapses_factors() {
        let (s, _, _, dish) = block2_state();
        let cands = sub_topic_candidates(&s, 0, CategoryRef::New, &hp_unit());
        assert_eq!(cands.len(), 2);
        assert_eq!(cands[0].choice, SubChoice::NewMenu { dish });
        assert!((cands[0].weight - 2.0 / 3.0).abs() < 1e-12);
        assert!((cands[1].weight - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn word_likelihood_values() {
        let mut s = SeatingState::new(2);
        let seat0 = s
            .seat_customer(TokenRef::new(0, 0), 0, &FullPath::all_new())
            .unwrap();
        let reuse = FullPath {
            entryway: Choice::Existing(seat0.entryway),
            category: Choice::Existing(seat0.category),
            table: Choice::Existing(seat0.table),
            menu: Choice::Existing(seat0.menu),
            dish: Choice::Existing(seat0.dish),
        };
        for t in 1..5 {
            let word = if t < 3 { 0 } else { 1 };
            s.seat_customer(TokenRef::new(0, t), word, &reuse).unwrap();
        }
        // Dish counts: word 0 -> 3, word 1 -> 2, total 5.
        let p = word_likelihood(&s, Some(seat0.dish), 0, 0.01, 2);
        assert!((p - 3.01 / 5.02).abs() < 1e-12);
        let p = word_likelihood(&s, Some(seat0.dish), 1, 0.01, 2);
        assert!((p - 2.01 / 5.02).abs() < 1e-12);
        assert_eq!(word_likelihood(&s, None, 0, 0.01, 25), 0.04);
    }

    #[test]
    fn joint_candidate_count_is_sum_not_product() {
        let (s, _, _, _) = block2_state();
        let hp = hp_unit();
        let joint = joint_candidates(&s, 0, 1, &hp);
        let supers = super_topic_candidates(&s, 0, &hp);
        let expected: usize = supers
            .iter()
            .map(|sc| {
                let cat_ref = match sc.choice {
                    EntryChoice::Existing { category, .. }
                    | EntryChoice::NewEntryway { category } => CategoryRef::Existing(category),
                    EntryChoice::NewBoth => CategoryRef::New,
                };
                sub_topic_candidates(&s, 0, cat_ref, &hp).len()
            })
            .sum();
        assert_eq!(joint.len(), expected);
        // Paths are valid: reseating on any of them succeeds on a clone.
        for (path, w) in &joint {
            assert!(*w > 0.0);
            let mut c = s.clone();
            c.seat_customer(TokenRef::new(0, 9), 1, path).unwrap();
            assert!(c.audit_counts().is_empty());
        }
    }

    #[test]
    fn resample_forced_move_single_token() {
        let mut s = SeatingState::new(3);
        s.seat_customer(TokenRef::new(0, 0), 2, &FullPath::all_new())
            .unwrap();
        let mut rng = crate::exec::rng_from_seed(7);
        resample_token(&mut s, TokenRef::new(0, 0), &hp_unit(), &mut rng);
        assert_eq!(s.total_seated(), 1);
        assert_eq!(s.categories().len(), 1);
        assert_eq!(s.dishes().len(), 1);
        assert_eq!(s.dishes()[0].word_counts[2], 1);
        assert!(s.audit_counts().is_empty());
    }
}
