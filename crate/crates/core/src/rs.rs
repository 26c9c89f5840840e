//! Reidemeister–Schreier machinery: Schreier generators, the rewriting map,
//! and presentations of finite-index subgroups.
//!
//! For a subgroup of index `j` in a free group of rank `r`, the Schreier
//! generators number exactly `(r-1)·j + 1`, and rewriting the `s` ambient
//! relators through every transversal representative yields `s·j` subgroup
//! relators. No simplification is applied afterwards: the pipeline's
//! deficiency bookkeeping depends on these counts being exact.
//!
//! Tables here are right-coset tables. Conjugating by the inverses of the
//! right-coset representatives plays the role of conjugating by a left
//! transversal, so the classical counting goes through unchanged.

use std::collections::HashMap;

use thiserror::Error;

use crate::abel::Presentation;
use crate::cosets::{schreier_transversal, CosetTable, Transversal};
use crate::words::{conjugate, Letter, Word};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RsError {
    #[error("word lies outside the subgroup (traces to coset {coset})")]
    NotInSubgroup { coset: usize },
    #[error("coset table inconsistent with the presentation: {0}")]
    InconsistentTable(String),
}

/// A presentation of a finite-index subgroup, together with the data needed
/// to move words between the subgroup alphabet and the ambient one.
#[derive(Clone, Debug)]
pub struct SubgroupPresentation {
    generator_words: Vec<Word>,
    relators: Vec<Word>,
    table: CosetTable,
    transversal: Transversal,
    /// (coset, generator) of each non-tree table entry, numbered in
    /// first-appearance order; the subgroup alphabet.
    letter_map: HashMap<(usize, usize), usize>,
}

struct SchreierData {
    transversal: Transversal,
    generators: Vec<Word>,
    letter_map: HashMap<(usize, usize), usize>,
}

fn schreier_data(table: &CosetTable) -> SchreierData {
    let transversal = schreier_transversal(table);
    let mut generators = Vec::new();
    let mut letter_map = HashMap::new();
    for coset in 0..table.index() {
        for g in 0..table.rank() {
            let letter = Letter::positive(g);
            let target = table.entry(coset, letter);
            let word = transversal
                .rep(coset)
                .concat(&Word::single(letter))
                .concat(&transversal.rep(target).inverse());
            if !word.is_empty() {
                letter_map.insert((coset, g), generators.len());
                generators.push(word);
            }
        }
    }
    SchreierData {
        transversal,
        generators,
        letter_map,
    }
}

/// The Schreier generators of the subgroup of `t`: for each non-tree entry
/// `(coset c, generator x)` the word `rep(c)·x·rep(c·x)⁻¹`. For a free
/// ambient group of rank `r` and index `j` there are exactly `(r-1)·j + 1`.
pub fn schreier_generators(t: &CosetTable) -> Vec<Word> {
    schreier_data(t).generators
}

impl SubgroupPresentation {
    /// Words in the ambient group generating the subgroup, indexed by the
    /// subgroup alphabet.
    pub fn generator_words(&self) -> &[Word] {
        &self.generator_words
    }

    /// Relators over the subgroup alphabet.
    pub fn relators(&self) -> &[Word] {
        &self.relators
    }

    pub fn generator_count(&self) -> usize {
        self.generator_words.len()
    }

    pub fn table(&self) -> &CosetTable {
        &self.table
    }

    pub fn transversal(&self) -> &Transversal {
        &self.transversal
    }

    /// The subgroup presentation as a standalone [`Presentation`] over the
    /// subgroup alphabet.
    pub fn presentation(&self) -> Presentation {
        Presentation::new(self.generator_words.len(), self.relators.clone())
            .expect("relators are over the subgroup alphabet")
    }

    /// Rewrites an ambient word lying in the subgroup into the subgroup
    /// alphabet: walk the coset table and emit the subgroup letter of every
    /// non-tree edge crossed. Expanding the result recovers the input.
    pub fn rewrite(&self, word: &Word) -> Result<Word, RsError> {
        let end = self.table.trace(word, 0);
        if end != 0 {
            return Err(RsError::NotInSubgroup { coset: end });
        }
        let mut out: Vec<Letter> = Vec::new();
        let mut coset = 0usize;
        for &letter in word.letters() {
            let next = self.table.entry(coset, letter);
            if letter.is_inverse() {
                // Crossing the edge (next, g) backwards.
                if let Some(&s) = self.letter_map.get(&(next, letter.gen())) {
                    out.push(Letter::negative(s));
                }
            } else if let Some(&s) = self.letter_map.get(&(coset, letter.gen())) {
                out.push(Letter::positive(s));
            }
            coset = next;
        }
        Ok(Word::from_letters(out))
    }

    /// Substitutes each subgroup letter by its ambient generator word.
    pub fn expand(&self, word: &Word) -> Word {
        let mut out = Word::empty();
        for &letter in word.letters() {
            let gen_word = &self.generator_words[letter.gen()];
            if letter.is_inverse() {
                out = out.concat(&gen_word.inverse());
            } else {
                out = out.concat(gen_word);
            }
        }
        out
    }
}

/// Builds the subgroup presentation of the subgroup of `t` inside the group
/// presented by `p`: Schreier generators, plus the rewriting of every
/// ambient relator conjugated through every transversal representative.
pub fn subgroup_presentation(
    p: &Presentation,
    t: &CosetTable,
) -> Result<SubgroupPresentation, RsError> {
    t.verify(p).map_err(RsError::InconsistentTable)?;
    let data = schreier_data(t);
    let mut sp = SubgroupPresentation {
        generator_words: data.generators,
        relators: Vec::new(),
        table: t.clone(),
        transversal: data.transversal,
        letter_map: data.letter_map,
    };
    let mut relators = Vec::with_capacity(p.relator_count() * t.index());
    for relator in p.relators() {
        for coset in 0..t.index() {
            let rep = sp.transversal.rep(coset);
            let conj = conjugate(relator, &rep.inverse());
            let rewritten = sp.rewrite(&conj).map_err(|_| {
                RsError::InconsistentTable(format!(
                    "conjugated relator escapes the subgroup at coset {coset}"
                ))
            })?;
            relators.push(rewritten);
        }
    }
    sp.relators = relators;
    Ok(sp)
}

/// Pushes an extra relator `f` of the ambient group down to the subgroup:
/// rewrites the conjugate of `f` by (the inverse of) each representative in
/// `cosets`, one relator per coset of `⟨g⟩N`. Fails with `NotInSubgroup`
/// when some conjugate escapes the subgroup, which signals that the
/// subgroup was not normal.
pub fn push_relator(
    sp: &SubgroupPresentation,
    f: &Word,
    cosets: &Transversal,
) -> Result<Vec<Word>, RsError> {
    cosets
        .words()
        .iter()
        .map(|rep| sp.rewrite(&conjugate(f, &rep.inverse())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cosets::{todd_coxeter, TableOrigin};

    fn w(s: &str) -> Word {
        Word::from_alpha(s, 26).unwrap()
    }

    fn pres(rank: usize, rels: &[&str]) -> Presentation {
        Presentation::new(rank, rels.iter().map(|s| w(s)).collect()).unwrap()
    }

    fn parity_table(generator: usize) -> CosetTable {
        CosetTable::from_action(2, 0u8, TableOrigin::FiniteImage, move |&s, letter| {
            if letter.gen() == generator {
                s ^ 1
            } else {
                s
            }
        })
    }

    #[test]
    fn whole_group_generators() {
        let gens = schreier_generators(&CosetTable::whole_group(2));
        assert_eq!(gens, vec![w("a"), w("b")]);
    }

    #[test]
    fn index_two_generators() {
        let gens = schreier_generators(&parity_table(0));
        assert_eq!(gens, vec![w("b"), w("aa"), w("abA")]);
    }

    #[test]
    fn nielsen_schreier_count_for_index_six() {
        let s3 = pres(2, &["aa", "bb", "ababab"]);
        let t = todd_coxeter(&s3, &[], 100).unwrap();
        assert_eq!(schreier_generators(&t).len(), (2 - 1) * 6 + 1);
    }

    #[test]
    fn rewriting_worked_examples() {
        let sp = subgroup_presentation(&Presentation::free(2), &parity_table(0)).unwrap();
        assert_eq!(sp.rewrite(&Word::empty()).unwrap(), Word::empty());
        // a^8 becomes the fourth power of the subgroup letter for "aa".
        let v4 = sp.rewrite(&w("aaaaaaaa")).unwrap();
        assert_eq!(v4, Word::from_letters(vec![Letter::positive(1); 4]));
        // b is the zeroth subgroup letter.
        assert_eq!(sp.rewrite(&w("b")).unwrap(), Word::generator(0));
        assert_eq!(
            sp.rewrite(&w("a")),
            Err(RsError::NotInSubgroup { coset: 1 })
        );
    }

    #[test]
    fn rewrite_expand_round_trip() {
        let sp = subgroup_presentation(&Presentation::free(2), &parity_table(0)).unwrap();
        for word in ["aa", "b", "abA", "aabb", "abab", "aBBa"] {
            let word = w(word);
            if sp.table().trace(&word, 0) != 0 {
                continue;
            }
            let rewritten = sp.rewrite(&word).unwrap();
            assert_eq!(sp.expand(&rewritten), word, "round trip for {word:?}");
        }
    }

    #[test]
    fn subgroup_presentation_counts() {
        // Free ambient group: no relators to rewrite.
        let sp = subgroup_presentation(&Presentation::free(2), &parity_table(0)).unwrap();
        assert_eq!(sp.generator_count(), 3);
        assert!(sp.relators().is_empty());

        // One ambient relator, index 2: two rewritten relators.
        let p = pres(2, &["aaaaaaaa"]);
        let sp = subgroup_presentation(&p, &parity_table(1)).unwrap();
        assert_eq!(sp.generator_count(), 3);
        assert_eq!(sp.relators().len(), 2);
        // Expanded relators die in the whole-group table and in the subgroup.
        for r in sp.relators() {
            let expanded = sp.expand(r);
            assert_eq!(sp.table().trace(&expanded, 0), 0);
        }

        // Three relators, index 6.
        let s3 = pres(2, &["aa", "bb", "ababab"]);
        let t = todd_coxeter(&s3, &[], 100).unwrap();
        let sp = subgroup_presentation(&s3, &t).unwrap();
        assert_eq!(sp.generator_count(), 7);
        assert_eq!(sp.relators().len(), 18);
    }

    #[test]
    fn pushing_relators() {
        let sp = subgroup_presentation(&Presentation::free(2), &parity_table(0)).unwrap();
        // Transversal of the whole group: a single representative.
        let whole = schreier_transversal(&CosetTable::whole_group(2));
        let pushed = push_relator(&sp, &w("aaaaaaaa"), &whole).unwrap();
        assert_eq!(
            pushed,
            vec![Word::from_letters(vec![Letter::positive(1); 4])]
        );
        let pushed = push_relator(&sp, &Word::empty(), &whole).unwrap();
        assert_eq!(pushed, vec![Word::empty()]);
    }
}
