//! Exact integer linear algebra over presentations.
//!
//! The abelianization of `⟨X | R⟩` is computed through the Smith normal form
//! of the relation matrix (the exponent-sum vectors of the relators). All
//! arithmetic is over arbitrary-precision integers; intermediate entries in a
//! Smith reduction can exceed any machine word even for small inputs.
//!
//! On top of the decomposition sit the pieces the quotient pipeline needs:
//! the free-abelian surjection witnessing a positive deficiency, orders of
//! elements in finite quotients `A/nA`, and coset tables of congruence
//! kernels (built from the finite image directly, without coset enumeration).

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::cosets::{CosetTable, TableOrigin};
use crate::words::{Word, WordError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AbelError {
    #[error("abelianization has free rank zero; no surjection onto Z^d exists")]
    ZeroRank,
}

/// A finite presentation: a generator count and a list of reduced relators.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Presentation {
    rank: usize,
    relators: Vec<Word>,
}

impl Presentation {
    pub fn new(rank: usize, relators: Vec<Word>) -> Result<Self, WordError> {
        assert!(rank >= 1, "a presentation needs at least one generator");
        for r in &relators {
            if let Some(g) = r.max_generator() {
                if g >= rank {
                    return Err(WordError::OutOfRange { index: g, rank });
                }
            }
        }
        Ok(Presentation { rank, relators })
    }

    /// The free group of the given rank: no relators.
    pub fn free(rank: usize) -> Self {
        Presentation::new(rank, Vec::new()).unwrap()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn relators(&self) -> &[Word] {
        &self.relators
    }

    pub fn relator_count(&self) -> usize {
        self.relators.len()
    }

    /// Count deficiency of this particular presentation: generators minus
    /// relators. May be negative. This is a lower bound for the group
    /// deficiency, which maximizes over all presentations.
    pub fn deficiency(&self) -> i64 {
        self.rank as i64 - self.relators.len() as i64
    }
}

/// Dense matrix of arbitrary-precision integers, row major.
#[derive(Clone, PartialEq, Eq)]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    data: Vec<BigInt>,
}

impl IntMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        IntMatrix {
            rows,
            cols,
            data: vec![BigInt::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = IntMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, BigInt::one());
        }
        m
    }

    pub fn from_i64_rows(rows: &[Vec<i64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut m = IntMatrix::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            for (j, v) in row.iter().enumerate() {
                m.set(i, j, BigInt::from(*v));
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, i: usize, j: usize) -> &BigInt {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: BigInt) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| v.is_zero())
    }

    pub fn transpose(&self) -> IntMatrix {
        let mut out = IntMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.at(i, j).clone());
            }
        }
        out
    }

    pub fn mul(&self, other: &IntMatrix) -> IntMatrix {
        assert_eq!(self.cols, other.rows, "dimension mismatch");
        let mut out = IntMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let v = out.at(i, j) + a * other.at(k, j);
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    /// Exact determinant by fraction-free (Bareiss) elimination.
    pub fn determinant(&self) -> BigInt {
        assert_eq!(self.rows, self.cols, "determinant of non-square matrix");
        let n = self.rows;
        if n == 0 {
            return BigInt::one();
        }
        let mut m = self.clone();
        let mut sign = BigInt::one();
        let mut prev = BigInt::one();
        for k in 0..n - 1 {
            if m.at(k, k).is_zero() {
                let swap = (k + 1..n).find(|&i| !m.at(i, k).is_zero());
                match swap {
                    Some(i) => {
                        m.swap_rows(k, i);
                        sign = -sign;
                    }
                    None => return BigInt::zero(),
                }
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let v = (m.at(i, j) * m.at(k, k) - m.at(i, k) * m.at(k, j)) / &prev;
                    m.set(i, j, v);
                }
            }
            prev = m.at(k, k).clone();
        }
        sign * m.at(n - 1, n - 1)
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for i in 0..self.rows {
            self.data.swap(i * self.cols + a, i * self.cols + b);
        }
    }

    /// row_i -= q * row_t
    fn row_sub(&mut self, i: usize, t: usize, q: &BigInt) {
        for j in 0..self.cols {
            let v = self.at(i, j) - q * self.at(t, j);
            self.set(i, j, v);
        }
    }

    /// col_j -= q * col_t
    fn col_sub(&mut self, j: usize, t: usize, q: &BigInt) {
        for i in 0..self.rows {
            let v = self.at(i, j) - q * self.at(i, t);
            self.set(i, j, v);
        }
    }

    /// row_t += row_i
    fn row_add(&mut self, t: usize, i: usize) {
        for j in 0..self.cols {
            let v = self.at(t, j) + self.at(i, j);
            self.set(t, j, v);
        }
    }

    fn negate_row(&mut self, i: usize) {
        for j in 0..self.cols {
            let v = -self.at(i, j);
            self.set(i, j, v);
        }
    }
}

impl fmt::Debug for IntMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[{}x{}]", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| self.at(i, j).to_string()).collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// Smith normal form `U·A·V = D` with unimodular transforms and the
/// divisibility chain `d_1 | d_2 | ... | d_p` on the diagonal.
#[derive(Clone, Debug)]
pub struct SmithDecomposition {
    pub d: IntMatrix,
    pub u: IntMatrix,
    pub v: IntMatrix,
    /// The nonzero diagonal entries, all positive, in chain order.
    pub divisors: Vec<BigInt>,
}

/// Row `i` is the exponent-sum vector of relator `i`. Relators with zero
/// exponent sums (commutators, say) keep their zero rows; the rank is
/// unaffected and the row count stays `|R|`.
pub fn relation_matrix(p: &Presentation) -> IntMatrix {
    let mut m = IntMatrix::zeros(p.relator_count(), p.rank());
    for (i, rel) in p.relators().iter().enumerate() {
        for (j, e) in rel.exponent_vector(p.rank()).into_iter().enumerate() {
            m.set(i, j, BigInt::from(e));
        }
    }
    m
}

/// Position of the nonzero entry of minimal absolute value in the trailing
/// submatrix `a[t.., t..]`; ties broken by lowest row, then lowest column.
fn select_pivot(a: &IntMatrix, t: usize) -> Option<(usize, usize)> {
    let mut best: Option<(BigInt, usize, usize)> = None;
    for i in t..a.rows() {
        for j in t..a.cols() {
            let v = a.at(i, j);
            if v.is_zero() {
                continue;
            }
            let abs = v.abs();
            match &best {
                Some((b, _, _)) if *b <= abs => {}
                _ => best = Some((abs, i, j)),
            }
        }
    }
    best.map(|(_, i, j)| (i, j))
}

/// Smith normal form, deterministic for a fixed input.
pub fn smith_normal_form(a: &IntMatrix) -> SmithDecomposition {
    let (m, n) = (a.rows(), a.cols());
    let mut d = a.clone();
    let mut u = IntMatrix::identity(m);
    let mut v = IntMatrix::identity(n);
    let limit = m.min(n);
    let mut t = 0;
    while t < limit {
        let Some((pi, pj)) = select_pivot(&d, t) else {
            break;
        };
        d.swap_rows(t, pi);
        u.swap_rows(t, pi);
        d.swap_cols(t, pj);
        v.swap_cols(t, pj);
        loop {
            // Clear the pivot column and row; leftover remainders are
            // strictly smaller than the pivot, so re-picking converges.
            let pivot = d.at(t, t).clone();
            debug_assert!(!pivot.is_zero());
            for i in t + 1..m {
                if !d.at(i, t).is_zero() {
                    let q = d.at(i, t) / &pivot;
                    if !q.is_zero() {
                        d.row_sub(i, t, &q);
                        u.row_sub(i, t, &q);
                    }
                }
            }
            for j in t + 1..n {
                if !d.at(t, j).is_zero() {
                    let q = d.at(t, j) / &pivot;
                    if !q.is_zero() {
                        d.col_sub(j, t, &q);
                        v.col_sub(j, t, &q);
                    }
                }
            }
            let col_clear = (t + 1..m).all(|i| d.at(i, t).is_zero());
            let row_clear = (t + 1..n).all(|j| d.at(t, j).is_zero());
            if !(col_clear && row_clear) {
                let (pi, pj) = select_pivot(&d, t).expect("nonzero residue");
                d.swap_rows(t, pi);
                u.swap_rows(t, pi);
                d.swap_cols(t, pj);
                v.swap_cols(t, pj);
                continue;
            }
            // Enforce the divisibility chain: fold in any entry the pivot
            // does not divide and reduce again.
            let mut offending = None;
            'scan: for i in t + 1..m {
                for j in t + 1..n {
                    if !(d.at(i, j) % &pivot).is_zero() {
                        offending = Some(i);
                        break 'scan;
                    }
                }
            }
            match offending {
                Some(i) => {
                    d.row_add(t, i);
                    u.row_add(t, i);
                }
                None => break,
            }
        }
        t += 1;
    }
    for i in 0..limit {
        if d.at(i, i).is_negative() {
            d.negate_row(i);
            u.negate_row(i);
        }
    }
    let divisors = (0..limit)
        .map(|i| d.at(i, i).clone())
        .take_while(|x| !x.is_zero())
        .collect();
    SmithDecomposition { d, u, v, divisors }
}

/// Isomorphism type of the abelianization: `Z^free_rank ⊕ ⊕ Z/d_i` with the
/// nontrivial torsion divisors listed in chain order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbelianStructure {
    pub free_rank: usize,
    pub torsion_divisors: Vec<BigInt>,
}

pub fn abelian_structure(p: &Presentation) -> AbelianStructure {
    let snf = smith_normal_form(&relation_matrix(p));
    AbelianStructure {
        free_rank: p.rank() - snf.divisors.len(),
        torsion_divisors: snf
            .divisors
            .iter()
            .filter(|d| !d.is_one())
            .cloned()
            .collect(),
    }
}

/// A surjection `G → Z^d` presented as a `d × rank` integer matrix acting on
/// generator exponent vectors. It annihilates every relator and its rows are
/// extendable to a basis, so the induced map is onto.
#[derive(Clone, Debug)]
pub struct ZdSurjection {
    pub matrix: IntMatrix,
}

pub fn zd_surjection(p: &Presentation) -> Result<ZdSurjection, AbelError> {
    let coords = AbelianCoords::new(p);
    let d = coords.free_rank();
    if d == 0 {
        return Err(AbelError::ZeroRank);
    }
    // The free coordinates of x are (x·V)[p..]; the functional matrix is the
    // transpose of the free columns of V.
    let torsion = coords.torsion_count();
    let mut h = IntMatrix::zeros(d, p.rank());
    for (row, col) in (torsion..p.rank()).enumerate() {
        for i in 0..p.rank() {
            h.set(row, i, coords.v.at(i, col).clone());
        }
    }
    Ok(ZdSurjection { matrix: h })
}

/// Smith-coordinate view of the abelianization of a presentation.
///
/// Coordinates of a word are `exponent_vector · V`; slot `i < torsion_count`
/// is taken mod `d_i`, the remaining slots are free.
pub(crate) struct AbelianCoords {
    rank: usize,
    divisors: Vec<BigInt>,
    v: IntMatrix,
}

impl AbelianCoords {
    pub(crate) fn new(p: &Presentation) -> Self {
        let snf = smith_normal_form(&relation_matrix(p));
        AbelianCoords {
            rank: p.rank(),
            divisors: snf.divisors,
            v: snf.v,
        }
    }

    pub(crate) fn torsion_count(&self) -> usize {
        self.divisors.len()
    }

    pub(crate) fn free_rank(&self) -> usize {
        self.rank - self.divisors.len()
    }

    pub(crate) fn coords(&self, w: &Word) -> Vec<BigInt> {
        let e = w.exponent_vector(self.rank);
        (0..self.rank)
            .map(|j| {
                (0..self.rank)
                    .map(|i| BigInt::from(e[i]) * self.v.at(i, j))
                    .sum()
            })
            .collect()
    }

    /// True when the word dies in the abelianization.
    pub(crate) fn kills(&self, w: &Word) -> bool {
        let y = self.coords(w);
        for (i, c) in y.iter().enumerate() {
            if i < self.torsion_count() {
                if !(c % &self.divisors[i]).is_zero() {
                    return false;
                }
            } else if !c.is_zero() {
                return false;
            }
        }
        true
    }

    /// Slot moduli of `A/nA`: `gcd(d_i, n)` on torsion slots, `n` on free ones.
    pub(crate) fn moduli_mod(&self, n: u64) -> Vec<u64> {
        let big_n = BigInt::from(n);
        let mut out = Vec::with_capacity(self.rank);
        for d in &self.divisors {
            let g = d.gcd(&big_n);
            out.push(u64::try_from(&g).expect("gcd bounded by n"));
        }
        out.extend(std::iter::repeat(n).take(self.free_rank()));
        out
    }

    /// Order of the image of a word in `A/nA`.
    pub(crate) fn order_mod_n(&self, w: &Word, n: u64) -> u64 {
        let moduli = self.moduli_mod(n);
        let image = self.image_mod(w, n);
        moduli
            .iter()
            .zip(image.iter())
            .map(|(&m, &r)| order_in_cyclic(m, r))
            .fold(1u64, |acc, o| acc.lcm(&o))
    }

    /// Coordinates of a word in `A/nA`, reduced into `[0, m_i)` per slot.
    pub(crate) fn image_mod(&self, w: &Word, n: u64) -> Vec<u64> {
        let y = self.coords(w);
        let moduli = self.moduli_mod(n);
        y.iter()
            .zip(moduli.iter())
            .map(|(c, &m)| {
                if m == 0 {
                    unreachable!("moduli are positive")
                } else {
                    let r = c.mod_floor(&BigInt::from(m));
                    u64::try_from(&r).expect("reduced residue fits")
                }
            })
            .collect()
    }
}

fn order_in_cyclic(modulus: u64, residue: u64) -> u64 {
    if modulus <= 1 {
        return 1;
    }
    modulus / modulus.gcd(&residue)
}

/// Order of the image of `w` in `A/nA`, where `A` is the abelianization.
pub fn finite_abelian_order(p: &Presentation, w: &Word, n: u64) -> u64 {
    assert!(n >= 2, "modulus must be at least 2");
    AbelianCoords::new(p).order_mod_n(w, n)
}

/// Coset table of `ker(G → A/nA)`, built directly from the finite abelian
/// image: cosets are the elements of `A/nA` and generators act by adding
/// their coordinate images. The subgroup is normal by construction and has
/// index `|A/nA|`.
pub fn congruence_table(p: &Presentation, n: u64) -> CosetTable {
    assert!(n >= 2, "modulus must be at least 2");
    let coords = AbelianCoords::new(p);
    abelian_image_table(p.rank(), &coords.moduli_mod(n), |g| {
        coords.image_mod(&Word::generator(g), n)
    })
}

/// Predicted index of `congruence_table(p, n)` without building it.
pub fn congruence_index(p: &Presentation, n: u64) -> u128 {
    let coords = AbelianCoords::new(p);
    coords
        .moduli_mod(n)
        .iter()
        .map(|&m| m.max(1) as u128)
        .product()
}

/// Shared builder for tables of kernels of maps onto finite abelian groups,
/// presented as tuples modulo the given slot moduli.
pub(crate) fn abelian_image_table<F>(rank: usize, moduli: &[u64], gen_image: F) -> CosetTable
where
    F: Fn(usize) -> Vec<u64>,
{
    // Slots with modulus 1 carry no information; drop them.
    let live: Vec<usize> = (0..moduli.len()).filter(|&i| moduli[i] > 1).collect();
    let live_moduli: Vec<u64> = live.iter().map(|&i| moduli[i]).collect();
    let images: Vec<Vec<u64>> = (0..rank)
        .map(|g| {
            let full = gen_image(g);
            live.iter().map(|&i| full[i]).collect()
        })
        .collect();
    let start: Vec<u64> = vec![0; live.len()];
    CosetTable::from_action(rank, start, TableOrigin::FiniteImage, |state, letter| {
        let img = &images[letter.gen()];
        state
            .iter()
            .zip(img.iter())
            .zip(live_moduli.iter())
            .map(|((&s, &d), &m)| {
                if letter.is_inverse() {
                    (s + m - d) % m
                } else {
                    (s + d) % m
                }
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Word {
        Word::from_alpha(s, 26).unwrap()
    }

    fn pres(rank: usize, rels: &[&str]) -> Presentation {
        Presentation::new(rank, rels.iter().map(|s| w(s)).collect()).unwrap()
    }

    fn divisor_values(snf: &SmithDecomposition) -> Vec<i64> {
        snf.divisors
            .iter()
            .map(|d| i64::try_from(d).unwrap())
            .collect()
    }

    #[test]
    fn relation_matrix_counts_exponents() {
        let m = relation_matrix(&pres(2, &["aaaaaaaa"]));
        assert_eq!(m, IntMatrix::from_i64_rows(&[vec![8, 0]]));
        let m = relation_matrix(&pres(2, &["abAB"]));
        assert_eq!(m, IntMatrix::from_i64_rows(&[vec![0, 0]]));
        let m = relation_matrix(&Presentation::free(2));
        assert_eq!(m.rows(), 0);
        assert_eq!(m.cols(), 2);
    }

    #[test]
    fn snf_worked_examples() {
        let snf = smith_normal_form(&IntMatrix::identity(2));
        assert_eq!(divisor_values(&snf), vec![1, 1]);

        let a = IntMatrix::from_i64_rows(&[vec![2, 4], vec![6, 8]]);
        let snf = smith_normal_form(&a);
        assert_eq!(divisor_values(&snf), vec![2, 4]);
        assert_eq!(snf.u.mul(&a).mul(&snf.v), snf.d);
        assert_eq!(snf.u.determinant().abs(), BigInt::one());
        assert_eq!(snf.v.determinant().abs(), BigInt::one());

        let a = IntMatrix::from_i64_rows(&[vec![8, 0]]);
        let snf = smith_normal_form(&a);
        assert_eq!(divisor_values(&snf), vec![8]);
    }

    #[test]
    fn snf_is_deterministic() {
        let a = IntMatrix::from_i64_rows(&[vec![3, -7, 2], vec![0, 4, -1], vec![5, 5, 5]]);
        let s1 = smith_normal_form(&a);
        let s2 = smith_normal_form(&a);
        assert_eq!(s1.d, s2.d);
        assert_eq!(s1.u, s2.u);
        assert_eq!(s1.v, s2.v);
    }

    #[test]
    fn abelian_structure_examples() {
        let s = abelian_structure(&Presentation::free(2));
        assert_eq!(s.free_rank, 2);
        assert!(s.torsion_divisors.is_empty());

        let s = abelian_structure(&pres(2, &["aaaaaaaa"]));
        assert_eq!(s.free_rank, 1);
        assert_eq!(s.torsion_divisors, vec![BigInt::from(8)]);

        let s = abelian_structure(&pres(2, &["aa", "bb"]));
        assert_eq!(s.free_rank, 0);
        assert_eq!(s.torsion_divisors, vec![BigInt::from(2), BigInt::from(2)]);
    }

    #[test]
    fn surjection_examples() {
        let h = zd_surjection(&Presentation::free(2)).unwrap();
        assert_eq!(h.matrix, IntMatrix::identity(2));

        let p = pres(2, &["aaaaaaaa"]);
        let h = zd_surjection(&p).unwrap();
        assert_eq!(h.matrix, IntMatrix::from_i64_rows(&[vec![0, 1]]));
        // H annihilates the relators.
        let e = relation_matrix(&p);
        assert!(h.matrix.mul(&e.transpose()).is_zero());

        assert!(matches!(
            zd_surjection(&pres(2, &["aa", "bb"])),
            Err(AbelError::ZeroRank)
        ));
    }

    #[test]
    fn finite_orders() {
        assert_eq!(finite_abelian_order(&Presentation::free(2), &w("a"), 2), 2);
        assert_eq!(finite_abelian_order(&pres(2, &["aaaaaaaa"]), &w("b"), 4), 4);
        for n in 2..8 {
            assert_eq!(finite_abelian_order(&Presentation::free(2), &w("abAB"), n), 1);
        }
    }

    #[test]
    fn congruence_tables() {
        let t = congruence_table(&Presentation::free(2), 2);
        assert_eq!(t.index(), 4);
        let t = congruence_table(&pres(2, &["aaaaaaaa"]), 2);
        assert_eq!(t.index(), 4);
        let t = congruence_table(&pres(2, &["aa", "bb"]), 3);
        assert_eq!(t.index(), 1);
        assert_eq!(congruence_index(&pres(2, &["aaaaaaaa"]), 4), 16);
    }

    #[test]
    fn congruence_kernel_is_normal() {
        use crate::words::conjugate;
        let p = pres(2, &["aaaaaaaa"]);
        let t = congruence_table(&p, 2);
        // Conjugates of subgroup elements trace back to the subgroup coset.
        for elt in ["aa", "bb", "abab", "aabb"] {
            let x = w(elt);
            assert_eq!(t.trace(&x, 0), 0, "{elt} should lie in the kernel");
            for y in ["a", "b", "ab", "ba"] {
                let c = conjugate(&x, &w(y));
                assert_eq!(t.trace(&c, 0), 0, "conjugate of {elt} by {y}");
            }
        }
    }
}
