//! Right-coset tables of finite-index subgroups.
//!
//! A [`CosetTable`] records the right action of the ambient generators on the
//! cosets `Hc` of a subgroup. Coset 0 is the subgroup itself. Tables are
//! always complete: every (coset, letter) entry is defined, generator and
//! inverse columns are mutually inverse permutations, and for tables built
//! against a presentation every defining relator traces from every coset back
//! to itself.
//!
//! Construction goes through one canonical breadth-first builder, so any two
//! ways of building the same subgroup yield byte-identical tables: cosets are
//! numbered in discovery order under the fixed letter order
//! `a < b < ... < A < B < ...`.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::hash::Hash;

use thiserror::Error;

use crate::abel::Presentation;
use crate::words::{letter_order, Letter, Word};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CosetError {
    #[error("coset enumeration exceeded the budget of {max_cosets} live cosets")]
    BudgetExhausted { max_cosets: usize },
    #[error("no power up to {bound} returned to the subgroup coset")]
    BoundExceeded { bound: u64 },
    #[error("permutation closure exceeded the ceiling of {max_core} elements")]
    CoreTooLarge { max_core: usize },
}

/// How a table was produced. Informational; no operation branches on it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableOrigin {
    Enumeration,
    FiniteImage,
    Intersection,
    Core,
}

#[derive(Clone, PartialEq, Eq)]
pub struct CosetTable {
    rank: usize,
    /// `rows[c][col]` with `col = letter.column(rank)`.
    rows: Vec<Vec<usize>>,
    origin: TableOrigin,
}

impl CosetTable {
    /// The index-1 table of the whole group.
    pub fn whole_group(rank: usize) -> Self {
        CosetTable {
            rank,
            rows: vec![vec![0; 2 * rank]],
            origin: TableOrigin::FiniteImage,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Number of cosets, i.e. the index of the subgroup.
    pub fn index(&self) -> usize {
        self.rows.len()
    }

    pub fn origin(&self) -> TableOrigin {
        self.origin
    }

    pub fn entry(&self, coset: usize, letter: Letter) -> usize {
        self.rows[coset][letter.column(self.rank)]
    }

    /// Applies the letters of `word` to `from`, left to right.
    pub fn trace(&self, word: &Word, from: usize) -> usize {
        word.letters()
            .iter()
            .fold(from, |c, &l| self.entry(c, l))
    }

    /// True when `word` fixes every coset; for a normal subgroup this says
    /// the word lies in the subgroup together with all its conjugates.
    pub fn fixes_all_cosets(&self, word: &Word) -> bool {
        (0..self.index()).all(|c| self.trace(word, c) == c)
    }

    /// Canonical breadth-first construction from a state machine: states are
    /// whatever the caller likes, transitions are given per letter, and the
    /// reachable component of `start` becomes the table.
    pub(crate) fn from_action<S, F>(rank: usize, start: S, origin: TableOrigin, step: F) -> Self
    where
        S: Eq + Hash + Clone,
        F: Fn(&S, Letter) -> S,
    {
        Self::from_action_capped(rank, start, origin, usize::MAX, step)
            .expect("uncapped construction cannot overflow")
    }

    /// As [`from_action`], failing once more than `cap` states are reached.
    pub(crate) fn from_action_capped<S, F>(
        rank: usize,
        start: S,
        origin: TableOrigin,
        cap: usize,
        step: F,
    ) -> Result<Self, ()>
    where
        S: Eq + Hash + Clone,
        F: Fn(&S, Letter) -> S,
    {
        let letters: Vec<Letter> = letter_order(rank).collect();
        let mut ids: HashMap<S, usize> = HashMap::new();
        let mut states: Vec<S> = Vec::new();
        let mut rows: Vec<Vec<usize>> = Vec::new();
        ids.insert(start.clone(), 0);
        states.push(start);
        let mut i = 0;
        while i < states.len() {
            let mut row = vec![usize::MAX; 2 * rank];
            for (li, &letter) in letters.iter().enumerate() {
                let next = step(&states[i], letter);
                let id = match ids.get(&next) {
                    Some(&id) => id,
                    None => {
                        let id = states.len();
                        if id >= cap {
                            return Err(());
                        }
                        ids.insert(next.clone(), id);
                        states.push(next);
                        id
                    }
                };
                row[li] = id;
            }
            rows.push(row);
            i += 1;
        }
        Ok(CosetTable { rank, rows, origin })
    }

    /// Checks the table invariants against a presentation: entries in range,
    /// generator/inverse columns mutually inverse, and every relator tracing
    /// from every coset back to itself.
    pub fn verify(&self, p: &Presentation) -> Result<(), String> {
        assert_eq!(p.rank(), self.rank);
        let n = self.index();
        for (c, row) in self.rows.iter().enumerate() {
            if row.len() != 2 * self.rank {
                return Err(format!("row {c} has {} entries", row.len()));
            }
            for &e in row {
                if e >= n {
                    return Err(format!("row {c} references coset {e} out of {n}"));
                }
            }
        }
        for g in 0..self.rank {
            for c in 0..n {
                let fwd = self.entry(c, Letter::positive(g));
                if self.entry(fwd, Letter::negative(g)) != c {
                    return Err(format!("columns for generator {g} not inverse at coset {c}"));
                }
            }
        }
        for (i, rel) in p.relators().iter().enumerate() {
            for c in 0..n {
                if self.trace(rel, c) != c {
                    return Err(format!("relator {i} does not close at coset {c}"));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Debug for CosetTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "CosetTable(rank {}, index {}, {:?})",
            self.rank,
            self.index(),
            self.origin
        )?;
        for (c, row) in self.rows.iter().enumerate() {
            writeln!(f, "  {c}: {row:?}")?;
        }
        Ok(())
    }
}

/// A set of coset representatives, one word per coset, with the Schreier
/// property: every prefix of a representative is itself a representative.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transversal {
    words: Vec<Word>,
}

impl Transversal {
    pub(crate) fn from_words(words: Vec<Word>) -> Self {
        Transversal { words }
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn rep(&self, coset: usize) -> &Word {
        &self.words[coset]
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Breadth-first prefix-closed transversal under the shortlex letter order.
/// Tracing `rep(c)` from coset 0 lands at `c`; `rep(0)` is empty.
pub fn schreier_transversal(t: &CosetTable) -> Transversal {
    let mut words: Vec<Option<Word>> = vec![None; t.index()];
    words[0] = Some(Word::empty());
    let mut queue = VecDeque::from([0usize]);
    while let Some(c) = queue.pop_front() {
        let base = words[c].clone().unwrap();
        for letter in letter_order(t.rank()) {
            let d = t.entry(c, letter);
            if words[d].is_none() {
                words[d] = Some(base.concat(&Word::single(letter)));
                queue.push_back(d);
            }
        }
    }
    Transversal {
        words: words.into_iter().map(|w| w.unwrap()).collect(),
    }
}

/// Smallest `m ≥ 1` with `trace(g^m, 0) = 0`. For a normal subgroup this is
/// the order of the image of `g` in the finite quotient.
pub fn order_mod(t: &CosetTable, g: &Word, bound: u64) -> Result<u64, CosetError> {
    let mut coset = t.trace(g, 0);
    let mut m = 1;
    while coset != 0 {
        if m >= bound {
            return Err(CosetError::BoundExceeded { bound });
        }
        coset = t.trace(g, coset);
        m += 1;
    }
    Ok(m)
}

/// Table of the intersection of two subgroups: the reachable component of
/// the product action from `(0, 0)`.
pub fn intersect(t1: &CosetTable, t2: &CosetTable) -> CosetTable {
    assert_eq!(t1.rank(), t2.rank(), "ambient ranks differ");
    CosetTable::from_action(
        t1.rank(),
        (0usize, 0usize),
        TableOrigin::Intersection,
        |&(a, b), letter| (t1.entry(a, letter), t2.entry(b, letter)),
    )
}

/// True iff the subgroup of `smaller` is contained in the subgroup of
/// `bigger`, tested through the index of the intersection.
pub fn contains(bigger: &CosetTable, smaller: &CosetTable) -> bool {
    intersect(bigger, smaller).index() == smaller.index()
}

fn generator_permutations(t: &CosetTable) -> Vec<Vec<usize>> {
    (0..t.rank())
        .map(|g| {
            (0..t.index())
                .map(|c| t.entry(c, Letter::positive(g)))
                .collect()
        })
        .collect()
}

fn invert_permutation(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (i, &v) in p.iter().enumerate() {
        inv[v] = i;
    }
    inv
}

/// Table of the kernel of the coset action: the regular action of the finite
/// permutation group generated by the generator columns. The output has one
/// coset per group element, so its index is the order of that group.
pub fn normal_core(t: &CosetTable, max_core: usize) -> Result<CosetTable, CosetError> {
    let gens = generator_permutations(t);
    let invs: Vec<Vec<usize>> = gens.iter().map(|p| invert_permutation(p)).collect();
    let identity: Vec<usize> = (0..t.index()).collect();
    CosetTable::from_action_capped(
        t.rank(),
        identity,
        TableOrigin::Core,
        max_core.max(1),
        |p, letter| {
            let sigma = if letter.is_inverse() {
                &invs[letter.gen()]
            } else {
                &gens[letter.gen()]
            };
            p.iter().map(|&c| sigma[c]).collect()
        },
    )
    .map_err(|_| CosetError::CoreTooLarge { max_core })
}

/// A subgroup of finite index is normal exactly when the coset action is
/// regular, i.e. the permutation group it generates has order equal to the
/// index.
pub fn is_normal(t: &CosetTable) -> bool {
    match normal_core(t, t.index()) {
        Ok(core) => core.index() == t.index(),
        Err(_) => false,
    }
}

/// Todd–Coxeter coset enumeration, HLT strategy with lookahead.
///
/// Enumerates the cosets of the subgroup generated by `subgroup_gens` in the
/// group presented by `p`. Returns the completed table or
/// [`CosetError::BudgetExhausted`] once more than `max_cosets` cosets are
/// alive and a lookahead pass fails to collapse them (the signal for unknown
/// or infinite index).
pub fn todd_coxeter(
    p: &Presentation,
    subgroup_gens: &[Word],
    max_cosets: usize,
) -> Result<CosetTable, CosetError> {
    assert!(max_cosets >= 1, "budget must be at least 1");
    let mut enumerator = Enumerator::new(p, max_cosets);
    let relators: Vec<Vec<Letter>> = enumerator.relators.clone();
    for w in subgroup_gens {
        enumerator.scan_and_fill(0, w.letters())?;
        enumerator.process_coincidences();
    }
    let mut c = 0;
    while c < enumerator.table.len() {
        if !enumerator.is_live(c) {
            c += 1;
            continue;
        }
        for rel in &relators {
            if !enumerator.is_live(c) {
                break;
            }
            enumerator.scan_and_fill(c, rel)?;
            enumerator.process_coincidences();
        }
        if enumerator.is_live(c) {
            for col in 0..2 * enumerator.rank {
                if !enumerator.is_live(c) {
                    break;
                }
                if enumerator.resolved(c, col).is_none() {
                    let n = enumerator.new_coset()?;
                    enumerator.deduce(c, col, n);
                    enumerator.process_coincidences();
                }
            }
        }
        c += 1;
    }
    Ok(enumerator.finish())
}

struct Enumerator {
    rank: usize,
    relators: Vec<Vec<Letter>>,
    table: Vec<Vec<Option<usize>>>,
    parent: Vec<usize>,
    alive: usize,
    total_defined: usize,
    queue: VecDeque<(usize, usize)>,
    max_cosets: usize,
}

impl Enumerator {
    fn new(p: &Presentation, max_cosets: usize) -> Self {
        Enumerator {
            rank: p.rank(),
            relators: p.relators().iter().map(|r| r.letters().to_vec()).collect(),
            table: vec![vec![None; 2 * p.rank()]],
            parent: vec![0],
            alive: 1,
            total_defined: 1,
            queue: VecDeque::new(),
            max_cosets,
        }
    }

    fn find(&mut self, c: usize) -> usize {
        let mut root = c;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = c;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn is_live(&mut self, c: usize) -> bool {
        self.find(c) == c
    }

    fn inverse_column(&self, col: usize) -> usize {
        if col < self.rank {
            col + self.rank
        } else {
            col - self.rank
        }
    }

    fn resolved(&mut self, c: usize, col: usize) -> Option<usize> {
        let c = self.find(c);
        self.table[c][col].map(|d| self.find(d))
    }

    fn new_coset(&mut self) -> Result<usize, CosetError> {
        if self.alive >= self.max_cosets {
            self.lookahead();
            self.process_coincidences();
            if self.alive >= self.max_cosets {
                return Err(CosetError::BudgetExhausted {
                    max_cosets: self.max_cosets,
                });
            }
        }
        // Collapse-heavy enumerations keep allocating while staying under the
        // live budget; cap total definitions so the loop always terminates.
        if self.total_defined > self.max_cosets.saturating_mul(20) {
            return Err(CosetError::BudgetExhausted {
                max_cosets: self.max_cosets,
            });
        }
        let id = self.table.len();
        self.table.push(vec![None; 2 * self.rank]);
        self.parent.push(id);
        self.alive += 1;
        self.total_defined += 1;
        Ok(id)
    }

    /// Records `c · col = d` in both directions, queueing a coincidence when
    /// an entry is already set to something else.
    fn deduce(&mut self, c: usize, col: usize, d: usize) {
        let c = self.find(c);
        let d = self.find(d);
        match self.resolved(c, col) {
            Some(e) if e != d => {
                self.queue.push_back((e, d));
                return;
            }
            Some(_) => {}
            None => self.table[c][col] = Some(d),
        }
        let icol = self.inverse_column(col);
        match self.resolved(d, icol) {
            Some(e) if e != c => self.queue.push_back((e, c)),
            Some(_) => {}
            None => self.table[d][icol] = Some(c),
        }
    }

    /// Scans `word` as a loop at `start`, defining new cosets to close it.
    fn scan_and_fill(&mut self, start: usize, word: &[Letter]) -> Result<(), CosetError> {
        loop {
            let start = self.find(start);
            let len = word.len();
            let mut f = start;
            let mut i = 0;
            while i < len {
                match self.resolved(f, word[i].column(self.rank)) {
                    Some(next) => {
                        f = next;
                        i += 1;
                    }
                    None => break,
                }
            }
            if i == len {
                if f != start {
                    self.queue.push_back((f, start));
                }
                return Ok(());
            }
            let mut b = start;
            let mut j = len;
            while j > i + 1 {
                match self.resolved(b, word[j - 1].inverse().column(self.rank)) {
                    Some(prev) => {
                        b = prev;
                        j -= 1;
                    }
                    None => break,
                }
            }
            if j == i + 1 {
                self.deduce(f, word[i].column(self.rank), b);
                return Ok(());
            }
            // Gap of two or more: define the next coset and rescan.
            let n = self.new_coset()?;
            self.deduce(f, word[i].column(self.rank), n);
        }
    }

    /// Scan-only pass over every live coset and every relator; deductions and
    /// coincidences are applied but no cosets are defined.
    fn lookahead(&mut self) {
        let relators = self.relators.clone();
        for c in 0..self.table.len() {
            if !self.is_live(c) {
                continue;
            }
            for rel in &relators {
                if !self.is_live(c) {
                    break;
                }
                self.scan_once(c, rel);
                self.process_coincidences();
            }
        }
    }

    fn scan_once(&mut self, start: usize, word: &[Letter]) {
        let start = self.find(start);
        let len = word.len();
        let mut f = start;
        let mut i = 0;
        while i < len {
            match self.resolved(f, word[i].column(self.rank)) {
                Some(next) => {
                    f = next;
                    i += 1;
                }
                None => break,
            }
        }
        if i == len {
            if f != start {
                self.queue.push_back((f, start));
            }
            return;
        }
        let mut b = start;
        let mut j = len;
        while j > i + 1 {
            match self.resolved(b, word[j - 1].inverse().column(self.rank)) {
                Some(prev) => {
                    b = prev;
                    j -= 1;
                }
                None => break,
            }
        }
        if j == i + 1 {
            self.deduce(f, word[i].column(self.rank), b);
        }
    }

    fn process_coincidences(&mut self) {
        while let Some((a, b)) = self.queue.pop_front() {
            let a = self.find(a);
            let b = self.find(b);
            if a == b {
                continue;
            }
            let (keep, drop) = (a.min(b), a.max(b));
            self.parent[drop] = keep;
            self.alive -= 1;
            for col in 0..2 * self.rank {
                if let Some(d) = self.table[drop][col].take() {
                    let d = self.find(d);
                    match self.table[keep][col] {
                        Some(e) => {
                            let e = self.find(e);
                            if e != d {
                                self.queue.push_back((e, d));
                            }
                        }
                        None => {
                            self.table[keep][col] = Some(d);
                            let icol = self.inverse_column(col);
                            match self.table[d][icol] {
                                Some(e) => {
                                    let e = self.find(e);
                                    if e != keep {
                                        self.queue.push_back((e, keep));
                                    }
                                }
                                None => self.table[d][icol] = Some(keep),
                            }
                        }
                    }
                }
            }
        }
    }

    /// Renumbers the surviving cosets canonically and emits the table.
    fn finish(mut self) -> CosetTable {
        let root = self.find(0);
        let rank = self.rank;
        let survivors: Vec<usize> = (0..self.table.len()).filter(|&c| self.find(c) == c).collect();
        let resolved_rows: HashMap<usize, Vec<usize>> = survivors
            .iter()
            .map(|&c| {
                let row: Vec<usize> = (0..2 * rank)
                    .map(|col| {
                        let d = self.table[c][col].expect("completed table");
                        self.find(d)
                    })
                    .collect();
                (c, row)
            })
            .collect();
        CosetTable::from_action(rank, root, TableOrigin::Enumeration, |&c, letter| {
            resolved_rows[&c][letter.column(rank)]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abel::congruence_table;

    fn w(s: &str) -> Word {
        Word::from_alpha(s, 26).unwrap()
    }

    fn pres(rank: usize, rels: &[&str]) -> Presentation {
        Presentation::new(rank, rels.iter().map(|s| w(s)).collect()).unwrap()
    }

    /// Kernel of F2 -> Z/2 sending a to 1 and b to 0.
    fn parity_of_a_table() -> CosetTable {
        CosetTable::from_action(2, 0u8, TableOrigin::FiniteImage, |&s, letter| {
            if letter.gen() == 0 {
                s ^ 1
            } else {
                s
            }
        })
    }

    #[test]
    fn todd_coxeter_small_groups() {
        let t = todd_coxeter(&pres(1, &["aaaaa"]), &[], 100).unwrap();
        assert_eq!(t.index(), 5);
        t.verify(&pres(1, &["aaaaa"])).unwrap();

        let s3 = pres(2, &["aa", "bb", "ababab"]);
        let t = todd_coxeter(&s3, &[], 100).unwrap();
        assert_eq!(t.index(), 6);
        t.verify(&s3).unwrap();
    }

    #[test]
    fn todd_coxeter_budget_exhaustion() {
        let err = todd_coxeter(&Presentation::free(2), &[w("a")], 50).unwrap_err();
        assert_eq!(err, CosetError::BudgetExhausted { max_cosets: 50 });
    }

    #[test]
    fn tracing_examples() {
        let t = parity_of_a_table();
        assert_eq!(t.trace(&Word::empty(), 0), 0);
        assert_eq!(t.trace(&w("ab"), 0), 1);
        assert_eq!(t.trace(&w("aa"), 0), 0);
    }

    #[test]
    fn transversals_are_prefix_closed_bfs() {
        let t = CosetTable::whole_group(2);
        assert_eq!(schreier_transversal(&t).words(), &[Word::empty()]);

        let t = parity_of_a_table();
        assert_eq!(schreier_transversal(&t).words(), &[Word::empty(), w("a")]);

        let t = congruence_table(&Presentation::free(2), 2);
        let reps = schreier_transversal(&t);
        assert_eq!(
            reps.words(),
            &[Word::empty(), w("a"), w("b"), w("ab")]
        );
        // Tracing each representative lands on its coset.
        for (c, rep) in reps.words().iter().enumerate() {
            assert_eq!(t.trace(rep, 0), c);
        }
    }

    #[test]
    fn orders_mod_normal_subgroups() {
        let t = parity_of_a_table();
        assert_eq!(order_mod(&t, &w("a"), 10).unwrap(), 2);
        assert_eq!(order_mod(&t, &w("b"), 10).unwrap(), 1);
        assert!(matches!(
            order_mod(&t, &w("a"), 1),
            Err(CosetError::BoundExceeded { bound: 1 })
        ));
    }

    #[test]
    fn intersections() {
        let ka = parity_of_a_table();
        let kb = CosetTable::from_action(2, 0u8, TableOrigin::FiniteImage, |&s, letter| {
            if letter.gen() == 1 {
                s ^ 1
            } else {
                s
            }
        });
        assert_eq!(intersect(&ka, &ka).index(), ka.index());
        assert_eq!(intersect(&CosetTable::whole_group(2), &ka).index(), 2);
        assert_eq!(intersect(&ka, &kb).index(), 4);
    }

    #[test]
    fn containment() {
        let mod2 = congruence_table(&Presentation::free(2), 2);
        let mod4 = congruence_table(&Presentation::free(2), 4);
        assert!(contains(&mod2, &mod4));
        assert!(!contains(&mod4, &mod2));
        assert!(contains(&mod2, &mod2));
    }

    #[test]
    fn cores_and_normality() {
        // Index-2 subgroups are normal and equal their own core.
        let t = parity_of_a_table();
        assert!(is_normal(&t));
        assert_eq!(normal_core(&t, 100).unwrap().index(), 2);

        // Point stabilizer of index 3 in S3: not normal, core of index 6.
        let s3 = pres(2, &["aa", "bb", "ababab"]);
        let stab = todd_coxeter(&s3, &[w("a")], 100).unwrap();
        assert_eq!(stab.index(), 3);
        assert!(!is_normal(&stab));
        let core = normal_core(&stab, 100).unwrap();
        assert_eq!(core.index(), 6);
        assert!(is_normal(&core));

        // Normal-by-construction tables are their own cores.
        let cong = congruence_table(&Presentation::free(2), 2);
        assert!(is_normal(&cong));
        assert_eq!(normal_core(&cong, 100).unwrap().index(), cong.index());

        assert!(matches!(
            normal_core(&stab, 3),
            Err(CosetError::CoreTooLarge { max_core: 3 })
        ));
    }

    #[test]
    fn enumeration_is_deterministic() {
        let q8 = pres(2, &["aaaa", "bbAA", "Baba"]);
        let t1 = todd_coxeter(&q8, &[], 100).unwrap();
        let t2 = todd_coxeter(&q8, &[], 100).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(t1.index(), 8);
    }
}
