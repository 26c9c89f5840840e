//! Free-group word algebra.
//!
//! A [`Word`] is a freely reduced sequence of [`Letter`]s over the basis of a
//! free group. Words are immutable values; every operation returns a new
//! word. The letter order is fixed as generators before inverses
//! (`a < b < ... < A < B < ...`) and words compare shortlex: first by length,
//! then letter by letter. All enumeration and transversal machinery in the
//! rest of the crate relies on this one ordering.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WordError {
    #[error("the empty word has no syntactic root")]
    EmptyWord,
    #[error("character {0:?} is not an ascii letter")]
    BadCharacter(char),
    #[error("generator index {index} out of range for rank {rank}")]
    OutOfRange { index: usize, rank: usize },
}

/// A generator or inverse generator of a free group.
///
/// `gen` is the 0-based index of the generator; `inverse` selects the formal
/// inverse. Ordering puts all positive letters before all inverse letters.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Letter {
    gen: u32,
    inverse: bool,
}

impl Letter {
    pub fn positive(gen: usize) -> Self {
        Letter {
            gen: gen as u32,
            inverse: false,
        }
    }

    pub fn negative(gen: usize) -> Self {
        Letter {
            gen: gen as u32,
            inverse: true,
        }
    }

    pub fn gen(&self) -> usize {
        self.gen as usize
    }

    pub fn is_inverse(&self) -> bool {
        self.inverse
    }

    pub fn inverse(&self) -> Letter {
        Letter {
            gen: self.gen,
            inverse: !self.inverse,
        }
    }

    /// Column of this letter in a coset table over `rank` generators.
    pub(crate) fn column(&self, rank: usize) -> usize {
        debug_assert!((self.gen as usize) < rank);
        self.gen as usize + if self.inverse { rank } else { 0 }
    }

    /// Position in the fixed letter order `a < b < ... < A < B < ...`.
    fn order_key(&self) -> (bool, u32) {
        (self.inverse, self.gen)
    }
}

impl PartialOrd for Letter {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Letter {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order_key().cmp(&other.order_key())
    }
}

impl fmt::Debug for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.gen < 26 {
            let base = if self.inverse { b'A' } else { b'a' };
            write!(f, "{}", (base + self.gen as u8) as char)
        } else if self.inverse {
            write!(f, "X{}", self.gen)
        } else {
            write!(f, "x{}", self.gen)
        }
    }
}

/// A freely reduced word: no letter is adjacent to its own inverse.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Word {
    letters: Vec<Letter>,
}

impl Word {
    pub fn empty() -> Self {
        Word::default()
    }

    pub fn generator(gen: usize) -> Self {
        Word {
            letters: vec![Letter::positive(gen)],
        }
    }

    pub fn single(letter: Letter) -> Self {
        Word {
            letters: vec![letter],
        }
    }

    /// Builds a word from raw letters, freely reducing them.
    pub fn from_letters<I: IntoIterator<Item = Letter>>(letters: I) -> Self {
        free_reduce(letters)
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn inverse(&self) -> Word {
        Word {
            letters: self.letters.iter().rev().map(|l| l.inverse()).collect(),
        }
    }

    /// Concatenation followed by free reduction at the seam.
    pub fn concat(&self, other: &Word) -> Word {
        let mut out = self.letters.clone();
        for &l in &other.letters {
            push_reduced(&mut out, l);
        }
        Word { letters: out }
    }

    pub fn pow(&self, exponent: u64) -> Word {
        let mut out = Word::empty();
        for _ in 0..exponent {
            out = out.concat(self);
        }
        out
    }

    /// Largest generator index appearing in the word, if any.
    pub fn max_generator(&self) -> Option<usize> {
        self.letters.iter().map(|l| l.gen()).max()
    }

    /// Exponent sums of each generator; the image of the word in Z^rank.
    pub fn exponent_vector(&self, rank: usize) -> Vec<i64> {
        let mut v = vec![0i64; rank];
        for l in &self.letters {
            v[l.gen()] += if l.is_inverse() { -1 } else { 1 };
        }
        v
    }

    /// Parses a plain letter string: `a`..`z` are generators 0.., uppercase
    /// their inverses. No power syntax; that lives at the CLI boundary.
    pub fn from_alpha(s: &str, rank: usize) -> Result<Word, WordError> {
        let mut letters = Vec::with_capacity(s.len());
        for c in s.chars() {
            let letter = match c {
                'a'..='z' => Letter::positive((c as u8 - b'a') as usize),
                'A'..='Z' => Letter::negative((c as u8 - b'A') as usize),
                _ => return Err(WordError::BadCharacter(c)),
            };
            if letter.gen() >= rank {
                return Err(WordError::OutOfRange {
                    index: letter.gen(),
                    rank,
                });
            }
            letters.push(letter);
        }
        Ok(free_reduce(letters))
    }

    /// Renders with `a..z` / `A..Z`; only valid for ranks up to 26.
    pub fn to_alpha(&self) -> String {
        self.letters.iter().map(|l| format!("{l:?}")).collect()
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Word {
    /// Shortlex: length first, then the fixed letter order.
    fn cmp(&self, other: &Self) -> Ordering {
        self.len()
            .cmp(&other.len())
            .then_with(|| self.letters.cmp(&other.letters))
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return write!(f, "ε");
        }
        for l in &self.letters {
            write!(f, "{l:?}")?;
        }
        Ok(())
    }
}

fn push_reduced(stack: &mut Vec<Letter>, letter: Letter) {
    if stack.last() == Some(&letter.inverse()) {
        stack.pop();
    } else {
        stack.push(letter);
    }
}

/// Free reduction: cancels adjacent inverse pairs until none remain.
/// Idempotent and length-non-increasing.
pub fn free_reduce<I: IntoIterator<Item = Letter>>(letters: I) -> Word {
    let mut stack = Vec::new();
    for l in letters {
        push_reduced(&mut stack, l);
    }
    Word { letters: stack }
}

/// The conjugate `x^y = y⁻¹ x y`, freely reduced.
pub fn conjugate(x: &Word, y: &Word) -> Word {
    y.inverse().concat(x).concat(y)
}

/// Letters of the rank-`rank` free group in the fixed order.
pub fn letter_order(rank: usize) -> impl Iterator<Item = Letter> {
    (0..rank)
        .map(Letter::positive)
        .chain((0..rank).map(Letter::negative))
}

/// The `index`-th reduced word in shortlex order; index 0 is the empty word.
///
/// Bijective onto reduced words: the `2r` length-one words come first, and a
/// reduced word of length `L` has `2r - 1` choices at each later position
/// (anything but the inverse of its predecessor).
pub fn shortlex_word(rank: usize, index: u64) -> Word {
    assert!(rank >= 2, "shortlex enumeration needs rank >= 2");
    if index == 0 {
        return Word::empty();
    }
    let q = 2 * rank as u128;
    let b = q - 1;
    let mut remaining = index as u128 - 1;
    let mut len = 1usize;
    let mut block = q; // number of reduced words of the current length
    while remaining >= block {
        remaining -= block;
        block *= b;
        len += 1;
    }
    // Decode digits most-significant first; the first digit ranges over all
    // 2r letters, later ones over the 2r-1 letters a reduced word allows.
    let all: Vec<Letter> = letter_order(rank).collect();
    let mut letters = Vec::with_capacity(len);
    let mut weight = b.pow(len as u32 - 1);
    let first = (remaining / weight) as usize;
    remaining %= weight;
    letters.push(all[first]);
    for _ in 1..len {
        weight /= b;
        let digit = (remaining / weight) as usize;
        remaining %= weight;
        let prev = *letters.last().unwrap();
        let forbidden = prev.inverse();
        let next = all
            .iter()
            .copied()
            .filter(|l| *l != forbidden)
            .nth(digit)
            .unwrap();
        letters.push(next);
    }
    Word { letters }
}

/// Inverse of [`shortlex_word`]: the shortlex position of a reduced word.
pub fn shortlex_rank(rank: usize, word: &Word) -> u128 {
    assert!(rank >= 2);
    if word.is_empty() {
        return 0;
    }
    let q = 2 * rank as u128;
    let b = q - 1;
    let len = word.len();
    let mut index: u128 = 1;
    let mut block = q;
    for _ in 1..len {
        index += block;
        block *= b;
    }
    let all: Vec<Letter> = letter_order(rank).collect();
    let mut weight = b.pow(len as u32 - 1);
    let first = all.iter().position(|l| *l == word.letters[0]).unwrap();
    index += first as u128 * weight;
    for i in 1..len {
        weight /= b;
        let forbidden = word.letters[i - 1].inverse();
        let digit = all
            .iter()
            .copied()
            .filter(|l| *l != forbidden)
            .position(|l| l == word.letters[i])
            .unwrap();
        index += digit as u128 * weight;
    }
    index
}

/// Shortest literal period of a nonempty reduced word.
///
/// Returns `(root, e)` where the input is the letter-for-letter
/// concatenation `root^e` and `root` is not itself a literal power.
pub fn syntactic_root(word: &Word) -> Result<(Word, u64), WordError> {
    if word.is_empty() {
        return Err(WordError::EmptyWord);
    }
    let n = word.len();
    for period in 1..=n {
        if n % period != 0 {
            continue;
        }
        let ok = (period..n).all(|i| word.letters[i] == word.letters[i % period]);
        if ok {
            let root = Word {
                letters: word.letters[..period].to_vec(),
            };
            return Ok((root, (n / period) as u64));
        }
    }
    unreachable!("period n always matches");
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(s: &str) -> Word {
        Word::from_alpha(s, 26).unwrap()
    }

    #[test]
    fn reduction_cancels_inverse_pairs() {
        assert_eq!(w("aA"), Word::empty());
        assert_eq!(w("aBbAab"), w("ab"));
        assert_eq!(w("abAB"), w("abAB"));
    }

    #[test]
    fn conjugation_matches_definition() {
        assert_eq!(conjugate(&w("a"), &w("b")), w("Bab"));
        assert_eq!(conjugate(&w("a"), &Word::empty()), w("a"));
        assert_eq!(conjugate(&w("a"), &w("a")), w("a"));
    }

    #[test]
    fn shortlex_enumeration_prefix() {
        let expect = [
            "", "a", "b", "A", "B", "aa", "ab", "aB", "ba", "bb", "bA", "Ab", "AA", "AB", "Ba",
            "BA", "BB",
        ];
        for (i, s) in expect.iter().enumerate() {
            assert_eq!(shortlex_word(2, i as u64), w(s), "index {i}");
        }
    }

    #[test]
    fn shortlex_enumeration_is_injective_and_monotone() {
        let mut prev = shortlex_word(2, 0);
        let mut seen = std::collections::HashSet::new();
        seen.insert(prev.clone());
        for k in 1..=10_000u64 {
            let cur = shortlex_word(2, k);
            assert!(prev < cur, "not monotone at {k}");
            assert!(seen.insert(cur.clone()), "collision at {k}");
            assert_eq!(shortlex_rank(2, &cur), k as u128);
            prev = cur;
        }
    }

    #[test]
    fn syntactic_root_examples() {
        assert_eq!(syntactic_root(&w("aaaa")).unwrap(), (w("a"), 4));
        assert_eq!(syntactic_root(&w("abab")).unwrap(), (w("ab"), 2));
        assert_eq!(syntactic_root(&w("ab")).unwrap(), (w("ab"), 1));
        assert_eq!(syntactic_root(&Word::empty()), Err(WordError::EmptyWord));
    }

    fn arb_letter() -> impl Strategy<Value = Letter> {
        (0..3usize, any::<bool>()).prop_map(|(g, inv)| {
            if inv {
                Letter::negative(g)
            } else {
                Letter::positive(g)
            }
        })
    }

    fn arb_word() -> impl Strategy<Value = Word> {
        prop::collection::vec(arb_letter(), 0..24).prop_map(Word::from_letters)
    }

    proptest! {
        #[test]
        fn reduce_is_idempotent_and_shrinking(raw in prop::collection::vec(arb_letter(), 0..40)) {
            let once = free_reduce(raw.clone());
            let twice = free_reduce(once.letters().iter().copied());
            prop_assert_eq!(&once, &twice);
            prop_assert!(once.len() <= raw.len());
        }

        #[test]
        fn word_times_inverse_is_trivial(word in arb_word()) {
            prop_assert!(word.concat(&word.inverse()).is_empty());
        }

        #[test]
        fn conjugation_round_trip(x in arb_word(), y in arb_word()) {
            prop_assert_eq!(conjugate(&conjugate(&x, &y), &y.inverse()), x);
        }

        #[test]
        fn root_exponents_are_maximal(u in arb_word().prop_filter("nonempty", |w| !w.is_empty()),
                                      e in 1u64..5) {
            let mut letters = Vec::new();
            for _ in 0..e {
                letters.extend_from_slice(u.letters());
            }
            let literal_len = letters.len();
            let power = free_reduce(letters);
            // Only literal powers count; skip bases that cancel at the seam.
            if power.len() == literal_len {
                let (root_u, e_u) = syntactic_root(&u).unwrap();
                let (root_p, e_p) = syntactic_root(&power).unwrap();
                prop_assert_eq!(root_p, root_u);
                prop_assert_eq!(e_p, e * e_u);
            }
        }
    }
}
