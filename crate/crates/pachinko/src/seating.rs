//! Five-level seating state for the hierarchy-learning sampler.
//!
//! Customers (tokens) sit at entryways within their document; each entryway
//! points at a global category (super-topic). Within a (document, category)
//! section, customers also sit at tables; each table points at a menu owned by
//! the category, and each menu points at a global dish (sub-topic). Dishes
//! hold word counts. All cross-structure aggregates are maintained
//! incrementally because the sampler reads them on every token.

use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SeatingError {
    #[error("token (doc {doc}, index {token}) is already seated")]
    AlreadySeated { doc: usize, token: usize },
    #[error("token (doc {doc}, index {token}) is not seated")]
    NotSeated { doc: usize, token: usize },
    #[error("word id {word} out of range for vocabulary size {vocab}")]
    WordOutOfRange { word: u32, vocab: usize },
    #[error("inconsistent path: {0}")]
    Path(String),
}

/// Identifies one token of the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenRef {
    pub doc: usize,
    pub token: usize,
}

impl TokenRef {
    pub fn new(doc: usize, token: usize) -> Self {
        TokenRef { doc, token }
    }
}

/// One level of a seating path: reuse an existing structure or create one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    Existing(u32),
    New,
}

/// A complete five-level seating decision.
///
/// Consistency rules: an existing entryway fixes the category; an existing
/// table fixes menu and dish; an existing menu fixes the dish; a new category
/// forces a new entryway and a new table; a new menu forces a new table; a new
/// dish forces a new menu.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FullPath {
    pub entryway: Choice,
    pub category: Choice,
    pub table: Choice,
    pub menu: Choice,
    pub dish: Choice,
}

impl FullPath {
    pub fn all_new() -> Self {
        FullPath {
            entryway: Choice::New,
            category: Choice::New,
            table: Choice::New,
            menu: Choice::New,
            dish: Choice::New,
        }
    }
}

/// Resolved structure ids recorded for a seated token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seat {
    pub entryway: u32,
    pub category: u32,
    pub table: u32,
    pub menu: u32,
    pub dish: u32,
    pub word: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entryway {
    pub id: u32,
    pub category: u32,
    /// Customers of the owning document seated here.
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub id: u32,
    pub menu: u32,
    /// Customers of the owning (document, category) section seated here.
    pub count: u32,
}

/// Tables of one document restricted to one category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub category: u32,
    pub tables: Vec<Table>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Menu {
    pub id: u32,
    pub dish: u32,
    /// Tables across all documents pointing at this menu.
    pub n_tables: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Category {
    pub id: u32,
    /// Entryways across all documents pointing at this category.
    pub n_entryways: u32,
    /// Tables across all documents seated in sections of this category.
    pub n_tables: u32,
    /// Menus owned by this category, ascending by id.
    pub menus: Vec<Menu>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dish {
    pub id: u32,
    /// Menus across all categories pointing at this dish.
    pub n_menus: u32,
    pub word_counts: Vec<u32>,
    /// Customers eating this dish; equals the sum of `word_counts`.
    pub total: u32,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct DocState {
    /// Ascending by id.
    pub entryways: Vec<Entryway>,
    /// Seated customers of this document.
    pub seated: u32,
    /// Ascending by category id.
    pub sections: Vec<Section>,
    pub seats: Vec<Option<Seat>>,
}

impl DocState {
    fn content_eq(&self, other: &DocState) -> bool {
        let trim = |seats: &[Option<Seat>]| {
            let mut len = seats.len();
            while len > 0 && seats[len - 1].is_none() {
                len -= 1;
            }
            len
        };
        self.entryways == other.entryways
            && self.seated == other.seated
            && self.sections == other.sections
            && self.seats[..trim(&self.seats)] == other.seats[..trim(&other.seats)]
    }
}

/// The complete latent state of one sampling chain.
///
/// Structure ids are monotone and never reused; registries are kept sorted by
/// id, so iteration order doubles as the canonical candidate order. Structures
/// whose count reaches zero are removed immediately, cascading upward.
#[derive(Debug, Clone)]
pub struct SeatingState {
    vocab_size: usize,
    pub(crate) docs: Vec<DocState>,
    /// Ascending by id.
    categories: Vec<Category>,
    /// Ascending by id.
    dishes: Vec<Dish>,
    /// Entryways across all documents.
    total_entryways: u32,
    /// Menus across all categories.
    total_menus: u32,
    total_seated: u64,
    next_entryway: u32,
    next_category: u32,
    next_table: u32,
    next_menu: u32,
    next_dish: u32,
}

impl SeatingState {
    pub fn new(vocab_size: usize) -> Self {
        SeatingState {
            vocab_size,
            docs: Vec::new(),
            categories: Vec::new(),
            dishes: Vec::new(),
            total_entryways: 0,
            total_menus: 0,
            total_seated: 0,
            next_entryway: 0,
            next_category: 0,
            next_table: 0,
            next_menu: 0,
            next_dish: 0,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn n_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn dishes(&self) -> &[Dish] {
        &self.dishes
    }

    pub fn category(&self, id: u32) -> Option<&Category> {
        self.categories
            .binary_search_by_key(&id, |c| c.id)
            .ok()
            .map(|i| &self.categories[i])
    }

    pub fn dish(&self, id: u32) -> Option<&Dish> {
        self.dishes
            .binary_search_by_key(&id, |d| d.id)
            .ok()
            .map(|i| &self.dishes[i])
    }

    pub fn total_entryways(&self) -> u32 {
        self.total_entryways
    }

    pub fn total_menus(&self) -> u32 {
        self.total_menus
    }

    pub fn total_seated(&self) -> u64 {
        self.total_seated
    }

    pub fn doc_seated(&self, doc: usize) -> u32 {
        self.docs.get(doc).map_or(0, |d| d.seated)
    }

    pub fn doc_entryways(&self, doc: usize) -> &[Entryway] {
        self.docs.get(doc).map_or(&[], |d| &d.entryways)
    }

    pub fn section_tables(&self, doc: usize, category: u32) -> &[Table] {
        self.docs.get(doc).map_or(&[], |d| {
            d.sections
                .binary_search_by_key(&category, |s| s.category)
                .ok()
                .map_or(&[], |i| d.sections[i].tables.as_slice())
        })
    }

    /// Customers of `doc` seated in sections of `category`.
    pub fn section_customers(&self, doc: usize, category: u32) -> u32 {
        self.section_tables(doc, category)
            .iter()
            .map(|t| t.count)
            .sum()
    }

    pub fn seat(&self, token: TokenRef) -> Option<&Seat> {
        self.docs
            .get(token.doc)
            .and_then(|d| d.seats.get(token.token))
            .and_then(|s| s.as_ref())
    }

    pub fn is_seated(&self, token: TokenRef) -> bool {
        self.seat(token).is_some()
    }

    /// Per-document (customers, entryways) pairs over documents with at least
    /// one seated customer.
    pub fn doc_grouping(&self) -> Vec<(u32, u32)> {
        self.docs
            .iter()
            .filter(|d| d.seated > 0)
            .map(|d| (d.seated, d.entryways.len() as u32))
            .collect()
    }

    /// Per-section (customers, tables) pairs over nonempty sections.
    pub fn section_grouping(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for d in &self.docs {
            for s in &d.sections {
                let customers: u32 = s.tables.iter().map(|t| t.count).sum();
                if customers > 0 {
                    out.push((customers, s.tables.len() as u32));
                }
            }
        }
        out
    }

    /// Per-category (tables, menus) pairs.
    pub fn category_grouping(&self) -> Vec<(u32, u32)> {
        self.categories
            .iter()
            .filter(|c| c.n_tables > 0)
            .map(|c| (c.n_tables, c.menus.len() as u32))
            .collect()
    }

    fn ensure_doc(&mut self, doc: usize) {
        if self.docs.len() <= doc {
            self.docs.resize_with(doc + 1, DocState::default);
        }
    }

    /// Seats an unseated token on `path`, creating structures where the path
    /// says new. Validation happens before any mutation, so an error leaves
    /// the state untouched.
    pub fn seat_customer(
        &mut self,
        token: TokenRef,
        word: u32,
        path: &FullPath,
    ) -> Result<Seat, SeatingError> {
        if word as usize >= self.vocab_size {
            return Err(SeatingError::WordOutOfRange {
                word,
                vocab: self.vocab_size,
            });
        }
        if self.is_seated(token) {
            return Err(SeatingError::AlreadySeated {
                doc: token.doc,
                token: token.token,
            });
        }
        let resolved = self.validate_path(token.doc, path)?;
        Ok(self.apply_seat(token, word, resolved))
    }

    /// Read-only consistency check of a path against the current state.
    fn validate_path(&self, doc: usize, path: &FullPath) -> Result<ResolvedPath, SeatingError> {
        let err = |msg: String| Err(SeatingError::Path(msg));

        // Category first: every deeper level is interpreted relative to it.
        let category = match path.category {
            Choice::Existing(l) => {
                if self.category(l).is_none() {
                    return err(format!("category {l} does not exist"));
                }
                Some(l)
            }
            Choice::New => None,
        };

        match path.entryway {
            Choice::Existing(e) => {
                let doc_state = self.docs.get(doc);
                let entry = doc_state.and_then(|d| {
                    d.entryways
                        .binary_search_by_key(&e, |x| x.id)
                        .ok()
                        .map(|i| &d.entryways[i])
                });
                match entry {
                    None => return err(format!("entryway {e} does not exist in doc {doc}")),
                    Some(entry) => match category {
                        Some(l) if entry.category == l => {}
                        _ => {
                            return err(format!(
                                "entryway {e} fixes category {}, path says {:?}",
                                entry.category, path.category
                            ))
                        }
                    },
                }
            }
            Choice::New => {}
        }

        let dish = match path.dish {
            Choice::Existing(m) => {
                if self.dish(m).is_none() {
                    return err(format!("dish {m} does not exist"));
                }
                Some(m)
            }
            Choice::New => None,
        };

        let menu = match path.menu {
            Choice::Existing(p) => {
                let l = match category {
                    Some(l) => l,
                    None => return err("an existing menu requires an existing category".into()),
                };
                let cat = self.category(l).expect("validated above");
                let menu = cat
                    .menus
                    .binary_search_by_key(&p, |m| m.id)
                    .ok()
                    .map(|i| &cat.menus[i]);
                match menu {
                    None => return err(format!("menu {p} does not exist in category {l}")),
                    Some(menu) => {
                        if dish != Some(menu.dish) {
                            return err(format!(
                                "menu {p} fixes dish {}, path says {:?}",
                                menu.dish, path.dish
                            ));
                        }
                        Some(p)
                    }
                }
            }
            Choice::New => None,
        };
        if dish.is_none() && menu.is_some() {
            return err("a new dish requires a new menu".into());
        }

        let table = match path.table {
            Choice::Existing(t) => {
                let l = match category {
                    Some(l) => l,
                    None => return err("an existing table requires an existing category".into()),
                };
                let tables = self.section_tables(doc, l);
                let tbl = tables
                    .binary_search_by_key(&t, |x| x.id)
                    .ok()
                    .map(|i| &tables[i]);
                match tbl {
                    None => {
                        return err(format!(
                            "table {t} does not exist in section (doc {doc}, category {l})"
                        ))
                    }
                    Some(tbl) => {
                        if menu != Some(tbl.menu) {
                            return err(format!(
                                "table {t} fixes menu {}, path says {:?}",
                                tbl.menu, path.menu
                            ));
                        }
                        Some(t)
                    }
                }
            }
            Choice::New => None,
        };
        // A new table may reuse an existing menu, but not the other way round.
        if menu.is_none() && table.is_some() {
            return err("a new menu requires a new table".into());
        }

        Ok(ResolvedPath {
            entryway: match path.entryway {
                Choice::Existing(e) => Some(e),
                Choice::New => None,
            },
            category,
            table,
            menu,
            dish,
        })
    }

    /// Infallible mutation phase of `seat_customer`.
    fn apply_seat(&mut self, token: TokenRef, word: u32, r: ResolvedPath) -> Seat {
        self.ensure_doc(token.doc);

        let category = match r.category {
            Some(l) => l,
            None => {
                let id = self.next_category;
                self.next_category += 1;
                self.categories.push(Category {
                    id,
                    n_entryways: 0,
                    n_tables: 0,
                    menus: Vec::new(),
                });
                id
            }
        };
        let dish = match r.dish {
            Some(m) => m,
            None => {
                let id = self.next_dish;
                self.next_dish += 1;
                self.dishes.push(Dish {
                    id,
                    n_menus: 0,
                    word_counts: vec![0; self.vocab_size],
                    total: 0,
                });
                id
            }
        };
        let ci = self
            .categories
            .binary_search_by_key(&category, |c| c.id)
            .expect("category resolved");
        let menu = match r.menu {
            Some(p) => p,
            None => {
                let id = self.next_menu;
                self.next_menu += 1;
                self.categories[ci].menus.push(Menu {
                    id,
                    dish,
                    n_tables: 0,
                });
                self.total_menus += 1;
                let di = self
                    .dishes
                    .binary_search_by_key(&dish, |d| d.id)
                    .expect("dish resolved");
                self.dishes[di].n_menus += 1;
                id
            }
        };

        let doc_state = &mut self.docs[token.doc];
        let si = match doc_state
            .sections
            .binary_search_by_key(&category, |s| s.category)
        {
            Ok(i) => i,
            Err(i) => {
                doc_state.sections.insert(
                    i,
                    Section {
                        category,
                        tables: Vec::new(),
                    },
                );
                i
            }
        };
        let table = match r.table {
            Some(t) => {
                let ti = doc_state.sections[si]
                    .tables
                    .binary_search_by_key(&t, |x| x.id)
                    .expect("table resolved");
                doc_state.sections[si].tables[ti].count += 1;
                t
            }
            None => {
                let id = self.next_table;
                self.next_table += 1;
                doc_state.sections[si].tables.push(Table {
                    id,
                    menu,
                    count: 1,
                });
                self.categories[ci].n_tables += 1;
                let mi = self.categories[ci]
                    .menus
                    .binary_search_by_key(&menu, |m| m.id)
                    .expect("menu resolved");
                self.categories[ci].menus[mi].n_tables += 1;
                id
            }
        };

        let entryway = match r.entryway {
            Some(e) => {
                let ei = doc_state
                    .entryways
                    .binary_search_by_key(&e, |x| x.id)
                    .expect("entryway resolved");
                doc_state.entryways[ei].count += 1;
                e
            }
            None => {
                let id = self.next_entryway;
                self.next_entryway += 1;
                doc_state.entryways.push(Entryway {
                    id,
                    category,
                    count: 1,
                });
                self.categories[ci].n_entryways += 1;
                self.total_entryways += 1;
                id
            }
        };

        doc_state.seated += 1;
        self.total_seated += 1;
        let di = self
            .dishes
            .binary_search_by_key(&dish, |d| d.id)
            .expect("dish resolved");
        self.dishes[di].word_counts[word as usize] += 1;
        self.dishes[di].total += 1;

        let seat = Seat {
            entryway,
            category,
            table,
            menu,
            dish,
            word,
        };
        if doc_state.seats.len() <= token.token {
            doc_state.seats.resize(token.token + 1, None);
        }
        doc_state.seats[token.token] = Some(seat);
        seat
    }

    /// Exact inverse of `seat_customer` for the token's recorded path.
    /// Structures reaching zero are removed, cascading upward. Returns the
    /// word the token carried.
    pub fn unseat_customer(&mut self, token: TokenRef) -> Result<u32, SeatingError> {
        let seat = self
            .docs
            .get_mut(token.doc)
            .and_then(|d| d.seats.get_mut(token.token))
            .and_then(|s| s.take())
            .ok_or(SeatingError::NotSeated {
                doc: token.doc,
                token: token.token,
            })?;

        let di = self
            .dishes
            .binary_search_by_key(&seat.dish, |d| d.id)
            .expect("seated dish exists");
        self.dishes[di].word_counts[seat.word as usize] -= 1;
        self.dishes[di].total -= 1;

        let ci = self
            .categories
            .binary_search_by_key(&seat.category, |c| c.id)
            .expect("seated category exists");

        // Table, then menu, then dish cascade.
        let doc_state = &mut self.docs[token.doc];
        let si = doc_state
            .sections
            .binary_search_by_key(&seat.category, |s| s.category)
            .expect("seated section exists");
        let ti = doc_state.sections[si]
            .tables
            .binary_search_by_key(&seat.table, |t| t.id)
            .expect("seated table exists");
        doc_state.sections[si].tables[ti].count -= 1;
        if doc_state.sections[si].tables[ti].count == 0 {
            doc_state.sections[si].tables.remove(ti);
            self.categories[ci].n_tables -= 1;
            let mi = self.categories[ci]
                .menus
                .binary_search_by_key(&seat.menu, |m| m.id)
                .expect("seated menu exists");
            self.categories[ci].menus[mi].n_tables -= 1;
            if self.categories[ci].menus[mi].n_tables == 0 {
                self.categories[ci].menus.remove(mi);
                self.total_menus -= 1;
                self.dishes[di].n_menus -= 1;
                if self.dishes[di].n_menus == 0 {
                    debug_assert_eq!(
                        self.dishes[di].total, 0,
                        "a dish with no menus cannot have customers"
                    );
                    self.dishes.remove(di);
                }
            }
        }
        if self.docs[token.doc].sections[si].tables.is_empty() {
            self.docs[token.doc].sections.remove(si);
        }

        // Entryway, then category cascade.
        let doc_state = &mut self.docs[token.doc];
        let ei = doc_state
            .entryways
            .binary_search_by_key(&seat.entryway, |e| e.id)
            .expect("seated entryway exists");
        doc_state.entryways[ei].count -= 1;
        if doc_state.entryways[ei].count == 0 {
            doc_state.entryways.remove(ei);
            self.categories[ci].n_entryways -= 1;
            self.total_entryways -= 1;
            if self.categories[ci].n_entryways == 0 {
                debug_assert!(
                    self.categories[ci].menus.is_empty() && self.categories[ci].n_tables == 0,
                    "a category with no entryways cannot have tables or menus"
                );
                self.categories.remove(ci);
            }
        }

        self.docs[token.doc].seated -= 1;
        self.total_seated -= 1;
        Ok(seat.word)
    }

    /// Recomputes every count family from the seat records and reports
    /// discrepancies against the stored counts. An empty report means the
    /// state is consistent.
    pub fn audit_counts(&self) -> Vec<String> {
        let mut report = Vec::new();

        // Expected values rebuilt from seat records.
        let mut entry_counts: Vec<BTreeMap<u32, u32>> = vec![BTreeMap::new(); self.docs.len()];
        let mut entry_cats: Vec<BTreeMap<u32, BTreeSet<u32>>> =
            vec![BTreeMap::new(); self.docs.len()];
        let mut doc_seated: Vec<u32> = vec![0; self.docs.len()];
        type TableInfo = BTreeMap<u32, (u32, BTreeSet<u32>)>;
        let mut sections: Vec<BTreeMap<u32, TableInfo>> = vec![BTreeMap::new(); self.docs.len()];
        let mut menu_tables: BTreeMap<u32, BTreeSet<(usize, u32)>> = BTreeMap::new();
        let mut menu_dishes: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
        let mut menu_cats: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
        let mut dish_words: BTreeMap<u32, BTreeMap<u32, u32>> = BTreeMap::new();
        let mut seated_total: u64 = 0;

        for (j, d) in self.docs.iter().enumerate() {
            for seat in d.seats.iter().flatten() {
                seated_total += 1;
                doc_seated[j] += 1;
                *entry_counts[j].entry(seat.entryway).or_default() += 1;
                entry_cats[j]
                    .entry(seat.entryway)
                    .or_default()
                    .insert(seat.category);
                let tbl = sections[j]
                    .entry(seat.category)
                    .or_default()
                    .entry(seat.table)
                    .or_insert((0, BTreeSet::new()));
                tbl.0 += 1;
                tbl.1.insert(seat.menu);
                menu_tables
                    .entry(seat.menu)
                    .or_default()
                    .insert((j, seat.table));
                menu_dishes.entry(seat.menu).or_default().insert(seat.dish);
                menu_cats.entry(seat.menu).or_default().insert(seat.category);
                *dish_words
                    .entry(seat.dish)
                    .or_default()
                    .entry(seat.word)
                    .or_default() += 1;
            }
        }

        for (j, d) in self.docs.iter().enumerate() {
            if d.seated != doc_seated[j] {
                report.push(format!(
                    "doc {j}: stored seated {} != recomputed {}",
                    d.seated, doc_seated[j]
                ));
            }
            let stored: BTreeMap<u32, (u32, u32)> = d
                .entryways
                .iter()
                .map(|e| (e.id, (e.count, e.category)))
                .collect();
            for (id, &(count, cat)) in &stored {
                match entry_counts[j].get(id) {
                    None => report.push(format!("doc {j}: entryway {id} retained with no seats")),
                    Some(&c) => {
                        if c != count {
                            report.push(format!(
                                "doc {j}: entryway {id} stored count {count} != recomputed {c}"
                            ));
                        }
                        let cats = &entry_cats[j][id];
                        if cats.len() != 1 || !cats.contains(&cat) {
                            report.push(format!(
                                "doc {j}: entryway {id} category {cat} != seat categories {cats:?}"
                            ));
                        }
                    }
                }
            }
            for id in entry_counts[j].keys() {
                if !stored.contains_key(id) {
                    report.push(format!("doc {j}: entryway {id} seated but not stored"));
                }
            }

            let stored_sections: BTreeMap<u32, &Section> =
                d.sections.iter().map(|s| (s.category, s)).collect();
            for (cat, sec) in &stored_sections {
                let expected = sections[j].get(cat);
                for t in &sec.tables {
                    match expected.and_then(|m| m.get(&t.id)) {
                        None => report.push(format!(
                            "doc {j}: table {} retained in category {cat} with no seats",
                            t.id
                        )),
                        Some((c, menus)) => {
                            if *c != t.count {
                                report.push(format!(
                                    "doc {j}: table {} stored count {} != recomputed {c}",
                                    t.id, t.count
                                ));
                            }
                            if menus.len() != 1 || !menus.contains(&t.menu) {
                                report.push(format!(
                                    "doc {j}: table {} menu {} != seat menus {menus:?}",
                                    t.id, t.menu
                                ));
                            }
                        }
                    }
                }
                let stored_ids: BTreeSet<u32> = sec.tables.iter().map(|t| t.id).collect();
                if let Some(expected) = expected {
                    for id in expected.keys() {
                        if !stored_ids.contains(id) {
                            report.push(format!(
                                "doc {j}: table {id} seated in category {cat} but not stored"
                            ));
                        }
                    }
                }
            }
            for cat in sections[j].keys() {
                if !stored_sections.contains_key(cat) {
                    report.push(format!("doc {j}: section for category {cat} missing"));
                }
            }
        }

        // Global registries.
        let mut cat_entryways: BTreeMap<u32, u32> = BTreeMap::new();
        for cats in &entry_cats {
            for set in cats.values() {
                for &c in set {
                    *cat_entryways.entry(c).or_default() += 1;
                }
            }
        }
        let mut cat_tables: BTreeMap<u32, u32> = BTreeMap::new();
        for secs in &sections {
            for (&cat, tables) in secs {
                *cat_tables.entry(cat).or_default() += tables.len() as u32;
            }
        }
        let mut dish_menus: BTreeMap<u32, u32> = BTreeMap::new();
        for (&menu, dishes) in &menu_dishes {
            if dishes.len() != 1 {
                report.push(format!("menu {menu}: seats disagree on dish: {dishes:?}"));
            }
            for &d in dishes {
                *dish_menus.entry(d).or_default() += 1;
            }
        }

        let mut seen_menus: BTreeSet<u32> = BTreeSet::new();
        for c in &self.categories {
            if c.n_entryways == 0 {
                report.push(format!("category {}: retained with no entryways", c.id));
            }
            if cat_entryways.get(&c.id).copied().unwrap_or(0) != c.n_entryways {
                report.push(format!(
                    "category {}: stored entryway total {} != recomputed {}",
                    c.id,
                    c.n_entryways,
                    cat_entryways.get(&c.id).copied().unwrap_or(0)
                ));
            }
            if cat_tables.get(&c.id).copied().unwrap_or(0) != c.n_tables {
                report.push(format!(
                    "category {}: stored table total {} != recomputed {}",
                    c.id,
                    c.n_tables,
                    cat_tables.get(&c.id).copied().unwrap_or(0)
                ));
            }
            for m in &c.menus {
                seen_menus.insert(m.id);
                let expected = menu_tables.get(&m.id).map_or(0, |s| s.len() as u32);
                if expected == 0 {
                    report.push(format!("menu {}: retained with no tables", m.id));
                } else if expected != m.n_tables {
                    report.push(format!(
                        "menu {}: stored table count {} != recomputed {expected}",
                        m.id, m.n_tables
                    ));
                }
                if let Some(dishes) = menu_dishes.get(&m.id) {
                    if !dishes.contains(&m.dish) {
                        report.push(format!(
                            "menu {}: stored dish {} != seat dishes {dishes:?}",
                            m.id, m.dish
                        ));
                    }
                }
                if let Some(cats) = menu_cats.get(&m.id) {
                    if cats.len() != 1 || !cats.contains(&c.id) {
                        report.push(format!(
                            "menu {}: owned by category {} but seats say {cats:?}",
                            m.id, c.id
                        ));
                    }
                }
            }
        }
        for cat in cat_entryways.keys() {
            if self.category(*cat).is_none() {
                report.push(format!("category {cat}: seated but not stored"));
            }
        }
        for menu in menu_tables.keys() {
            if !seen_menus.contains(menu) {
                report.push(format!("menu {menu}: seated but not stored"));
            }
        }

        for d in &self.dishes {
            if d.n_menus == 0 {
                report.push(format!("dish {}: retained with no menus", d.id));
            }
            if dish_menus.get(&d.id).copied().unwrap_or(0) != d.n_menus {
                report.push(format!(
                    "dish {}: stored menu count {} != recomputed {}",
                    d.id,
                    d.n_menus,
                    dish_menus.get(&d.id).copied().unwrap_or(0)
                ));
            }
            let expected = dish_words.get(&d.id);
            let mut total = 0u32;
            for (x, &c) in d.word_counts.iter().enumerate() {
                total += c;
                let e = expected.and_then(|m| m.get(&(x as u32))).copied().unwrap_or(0);
                if c != e {
                    report.push(format!(
                        "dish {}: word {x} stored count {c} != recomputed {e}",
                        d.id
                    ));
                }
            }
            if total != d.total {
                report.push(format!(
                    "dish {}: stored total {} != word count sum {total}",
                    d.id, d.total
                ));
            }
        }
        for dish in dish_words.keys() {
            if self.dish(*dish).is_none() {
                report.push(format!("dish {dish}: seated but not stored"));
            }
        }

        if self.total_seated != seated_total {
            report.push(format!(
                "total seated stored {} != recomputed {seated_total}",
                self.total_seated
            ));
        }
        let expected_entryways: u32 = cat_entryways.values().sum();
        if self.total_entryways != expected_entryways {
            report.push(format!(
                "total entryways stored {} != recomputed {expected_entryways}",
                self.total_entryways
            ));
        }
        let expected_menus = menu_tables.len() as u32;
        if self.total_menus != expected_menus {
            report.push(format!(
                "total menus stored {} != recomputed {expected_menus}",
                self.total_menus
            ));
        }

        report
    }

    /// Equality of seating content, ignoring the id allocation counters and
    /// trailing empty document slots. Used by round-trip tests: seating then
    /// unseating a token consumes ids but must restore the content.
    pub fn content_eq(&self, other: &SeatingState) -> bool {
        if self.vocab_size != other.vocab_size
            || self.categories != other.categories
            || self.dishes != other.dishes
            || self.total_entryways != other.total_entryways
            || self.total_menus != other.total_menus
            || self.total_seated != other.total_seated
        {
            return false;
        }
        let empty = DocState::default();
        let n = self.docs.len().max(other.docs.len());
        (0..n).all(|j| {
            let a = self.docs.get(j).unwrap_or(&empty);
            let b = other.docs.get(j).unwrap_or(&empty);
            a.content_eq(b)
        })
    }

    /// Cheap structural checks on the structures a path touched; full-state
    /// verification is `audit_counts`.
    pub(crate) fn debug_check_token(&self, token: TokenRef) {
        if let Some(seat) = self.seat(token) {
            let cat = self.category(seat.category).expect("seat category exists");
            debug_assert!(cat.n_entryways >= 1);
            debug_assert!(self.dish(seat.dish).is_some());
            let tables = self.section_tables(token.doc, seat.category);
            debug_assert!(tables
                .binary_search_by_key(&seat.table, |t| t.id)
                .is_ok());
        }
    }
}

struct ResolvedPath {
    entryway: Option<u32>,
    category: Option<u32>,
    table: Option<u32>,
    menu: Option<u32>,
    dish: Option<u32>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bootstrap_all_new() {
        let mut s = SeatingState::new(3);
        let seat = s
            .seat_customer(TokenRef::new(0, 0), 2, &FullPath::all_new())
            .unwrap();
        assert_eq!(s.categories().len(), 1);
        assert_eq!(s.dishes().len(), 1);
        assert_eq!(s.total_entryways(), 1);
        assert_eq!(s.total_menus(), 1);
        assert_eq!(s.doc_entryways(0).len(), 1);
        assert_eq!(s.doc_entryways(0)[0].count, 1);
        assert_eq!(s.section_tables(0, seat.category).len(), 1);
        assert_eq!(s.dishes()[0].word_counts[2], 1);
        assert_eq!(s.dishes()[0].total, 1);
        assert!(s.audit_counts().is_empty());
    }

    #[test]
    fn seat_unseat_restores_empty() {
        let mut s = SeatingState::new(3);
        let before = s.clone();
        s.seat_customer(TokenRef::new(0, 0), 1, &FullPath::all_new())
            .unwrap();
        let word = s.unseat_customer(TokenRef::new(0, 0)).unwrap();
        assert_eq!(word, 1);
        assert!(s.content_eq(&before));
        assert!(s.audit_counts().is_empty());
        assert_eq!(s.categories().len(), 0);
        assert_eq!(s.dishes().len(), 0);
    }

    #[test]
    fn reuse_existing_table() {
        let mut s = SeatingState::new(3);
        let seat = s
            .seat_customer(TokenRef::new(0, 0), 0, &FullPath::all_new())
            .unwrap();
        let path = FullPath {
            entryway: Choice::Existing(seat.entryway),
            category: Choice::Existing(seat.category),
            table: Choice::Existing(seat.table),
            menu: Choice::Existing(seat.menu),
            dish: Choice::Existing(seat.dish),
        };
        s.seat_customer(TokenRef::new(0, 1), 1, &path).unwrap();
        assert_eq!(s.section_tables(0, seat.category)[0].count, 2);
        assert_eq!(s.categories().len(), 1);
        assert_eq!(s.dishes()[0].total, 2);
        assert!(s.audit_counts().is_empty());
        // Unseating one leaves the table with count 1.
        s.unseat_customer(TokenRef::new(0, 0)).unwrap();
        assert_eq!(s.section_tables(0, seat.category)[0].count, 1);
        assert!(s.audit_counts().is_empty());
    }

    #[test]
    fn cross_doc_entryway_for_existing_category() {
        let mut s = SeatingState::new(3);
        let seat = s
            .seat_customer(TokenRef::new(0, 0), 0, &FullPath::all_new())
            .unwrap();
        let path = FullPath {
            entryway: Choice::New,
            category: Choice::Existing(seat.category),
            table: Choice::New,
            menu: Choice::Existing(seat.menu),
            dish: Choice::Existing(seat.dish),
        };
        s.seat_customer(TokenRef::new(2, 0), 1, &path).unwrap();
        let cat = s.category(seat.category).unwrap();
        assert_eq!(cat.n_entryways, 2);
        assert_eq!(s.total_entryways(), 2);
        assert_eq!(s.doc_entryways(2).len(), 1);
        assert_eq!(cat.menus[0].n_tables, 2);
        assert!(s.audit_counts().is_empty());
    }

    #[test]
    fn full_cascade_on_sole_token() {
        let mut s = SeatingState::new(3);
        s.seat_customer(TokenRef::new(0, 0), 0, &FullPath::all_new())
            .unwrap();
        // Second token in its own structures, same doc.
        s.seat_customer(TokenRef::new(0, 1), 1, &FullPath::all_new())
            .unwrap();
        assert_eq!(s.categories().len(), 2);
        s.unseat_customer(TokenRef::new(0, 0)).unwrap();
        assert_eq!(s.categories().len(), 1);
        assert_eq!(s.dishes().len(), 1);
        assert_eq!(s.total_menus(), 1);
        assert_eq!(s.total_entryways(), 1);
        assert!(s.audit_counts().is_empty());
    }

    #[test]
    fn rejects_double_seat_and_missing_unseat() {
        let mut s = SeatingState::new(2);
        s.seat_customer(TokenRef::new(0, 0), 0, &FullPath::all_new())
            .unwrap();
        let err = s
            .seat_customer(TokenRef::new(0, 0), 0, &FullPath::all_new())
            .unwrap_err();
        assert_eq!(err, SeatingError::AlreadySeated { doc: 0, token: 0 });
        let err = s.unseat_customer(TokenRef::new(0, 5)).unwrap_err();
        assert_eq!(err, SeatingError::NotSeated { doc: 0, token: 5 });
    }

    #[test]
    fn rejects_inconsistent_paths() {
        let mut s = SeatingState::new(2);
        let seat = s
            .seat_customer(TokenRef::new(0, 0), 0, &FullPath::all_new())
            .unwrap();
        // Existing entryway with a new category.
        let bad = FullPath {
            entryway: Choice::Existing(seat.entryway),
            category: Choice::New,
            table: Choice::New,
            menu: Choice::New,
            dish: Choice::New,
        };
        assert!(matches!(
            s.seat_customer(TokenRef::new(0, 1), 0, &bad),
            Err(SeatingError::Path(_))
        ));
        // Existing table with the wrong menu.
        let bad = FullPath {
            entryway: Choice::Existing(seat.entryway),
            category: Choice::Existing(seat.category),
            table: Choice::Existing(seat.table),
            menu: Choice::New,
            dish: Choice::Existing(seat.dish),
        };
        assert!(matches!(
            s.seat_customer(TokenRef::new(0, 1), 0, &bad),
            Err(SeatingError::Path(_))
        ));
        // New dish under an existing menu.
        let bad = FullPath {
            entryway: Choice::Existing(seat.entryway),
            category: Choice::Existing(seat.category),
            table: Choice::New,
            menu: Choice::Existing(seat.menu),
            dish: Choice::New,
        };
        assert!(matches!(
            s.seat_customer(TokenRef::new(0, 1), 0, &bad),
            Err(SeatingError::Path(_))
        ));
        // Errors left the state untouched.
        assert!(s.audit_counts().is_empty());
        assert_eq!(s.total_seated(), 1);
    }

    #[test]
    fn audit_detects_corruption() {
        let mut s = SeatingState::new(2);
        s.seat_customer(TokenRef::new(0, 0), 0, &FullPath::all_new())
            .unwrap();
        assert!(s.audit_counts().is_empty());
        s.dishes[0].word_counts[1] += 1;
        let report = s.audit_counts();
        assert!(report.iter().any(|line| line.contains("dish 0")));
    }
}
