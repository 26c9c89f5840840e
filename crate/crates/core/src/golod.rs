//! The inductive torsion-quotient pipeline.
//!
//! Starting from a free group `F` of rank at least 2, the pipeline walks the
//! shortlex enumeration of `F` and, one element at a time, imposes a power
//! relator `g^{ℓm}` chosen so that three conditions survive every step:
//!
//! * (a) the current quotient `G_k` carries a finite-index normal
//!   *deficiency witness* `W_k`: a subgroup presented with count deficiency
//!   at least 2,
//! * (b) every element processed so far has a relator `g^n` in the ledger,
//!   so its image in `G_k` and in every later quotient has finite order,
//! * (c) a finite-index *marker* subgroup `M_k` keeps `|G_k/M_k| > k`, so
//!   the quotients never collapse to something small.
//!
//! The witness is carried with its own presentation and rewritten inside its
//! own chain: the new witness `N = K ∩ W_k` is presented over `W_k`'s
//! presentation (not over `G_k`'s), which is what keeps the deficiency count
//! `1 + (d_W - 1)·|W:N| - |G:⟨g⟩N|` at 2 or above. Every step emits a
//! [`StepCertificate`] recording the numbers behind each inequality, and
//! [`verify_certificate`] re-checks them from scratch.
//!
//! Torsion of an image in the limit object is undecidable in general, so the
//! subgroup searches are budgeted: a step that cannot certify a large enough
//! cyclic quotient stops the run with an explicit `Unresolved` error rather
//! than guessing.

use std::collections::{BTreeMap, HashSet};

use thiserror::Error;

use crate::abel::{
    abelian_image_table, abelian_structure, congruence_index, congruence_table, smith_normal_form,
    AbelianCoords, IntMatrix, Presentation,
};
use crate::cosets::{
    contains, intersect, is_normal, normal_core, order_mod, schreier_transversal, CosetTable,
    Transversal,
};
use crate::rs::{subgroup_presentation, RsError, SubgroupPresentation};
use crate::words::{conjugate, shortlex_word, syntactic_root, Word};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PipelineError {
    #[error("the free group must have rank at least 2, got {0}")]
    RankTooSmall(usize),
    #[error("a run needs at least one step")]
    NoSteps,
    #[error("subgroup search exhausted its budget: {0}")]
    BudgetExhausted(String),
    #[error(
        "cannot certify a cyclic quotient of order above {threshold} for {element:?}; \
         torsion of its image stays unresolved"
    )]
    Unresolved { element: Word, threshold: u64 },
    #[error("certificate verification failed: {0:?}")]
    WitnessInconsistent(Vec<String>),
}

/// Search budgets. `max_modulus` caps the congruence moduli tried,
/// `max_cosets` the size of any table built, `max_core` the permutation
/// closure used for normal cores (0 disables the core fallback).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Budgets {
    pub max_cosets: usize,
    pub max_core: usize,
    pub max_modulus: u64,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            max_cosets: 10_000,
            max_core: 20_000,
            max_modulus: 64,
        }
    }
}

/// A relator stored as `base^exponent`; expansion is on demand.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PowerRelator {
    pub base: Word,
    pub exponent: u64,
}

impl PowerRelator {
    pub fn expand(&self) -> Word {
        self.base.pow(self.exponent)
    }
}

/// A finite-index normal subgroup of the current quotient presented with
/// count deficiency at least 2, together with everything needed to rewrite
/// ambient words into its alphabet.
#[derive(Clone, Debug)]
pub struct DeficiencyWitness {
    /// Coset table of the witness inside the current quotient.
    pub table: CosetTable,
    /// Presentation over the witness's own alphabet.
    pub presentation: Presentation,
    /// Words in the ambient free group expressing the witness generators.
    pub generator_words: Vec<Word>,
    /// Rewriting chain from the ambient alphabet down to the witness
    /// alphabet, one level per quotient step taken so far.
    chain: Vec<SubgroupPresentation>,
}

impl DeficiencyWitness {
    fn whole_group(rank: usize) -> Self {
        DeficiencyWitness {
            table: CosetTable::whole_group(rank),
            presentation: Presentation::free(rank),
            generator_words: (0..rank).map(Word::generator).collect(),
            chain: Vec::new(),
        }
    }

    pub fn index(&self) -> u64 {
        self.table.index() as u64
    }

    pub fn count_deficiency(&self) -> i64 {
        self.presentation.deficiency()
    }

    /// Rewrites an ambient word lying in the witness into the witness
    /// alphabet by descending the chain level by level.
    pub(crate) fn rewrite_from_ambient(&self, word: &Word) -> Result<Word, RsError> {
        let mut current = word.clone();
        for level in &self.chain {
            current = level.rewrite(&current)?;
        }
        Ok(current)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Greater,
    GreaterEq,
    Equal,
}

/// One checked inequality with the numbers that went into it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InequalityRecord {
    pub name: &'static str,
    pub lhs: i128,
    pub rhs: i128,
    pub relation: Relation,
    pub holds: bool,
}

impl InequalityRecord {
    fn new(name: &'static str, lhs: i128, rhs: i128, relation: Relation) -> Self {
        let holds = match relation {
            Relation::Greater => lhs > rhs,
            Relation::GreaterEq => lhs >= rhs,
            Relation::Equal => lhs == rhs,
        };
        InequalityRecord {
            name,
            lhs,
            rhs,
            relation,
            holds,
        }
    }
}

/// Data specific to a step that imposed a new power relator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuotientData {
    /// `m`: order of the element modulo `N = K ∩ W`.
    pub cyclic_order: u64,
    /// Order of the element modulo the searched kernel `K`.
    pub kernel_order: u64,
    /// The imposed relator `g^{ℓm}` in compressed form.
    pub relator: PowerRelator,
    /// `|G_k : W_k|` before the step.
    pub witness_index: u64,
    /// `|W_k : N|`.
    pub witness_to_next: u64,
    /// `|G_k : ⟨g⟩N|`: how many relators were pushed into the new witness.
    pub pushed_count: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepBranch {
    /// A new relator was imposed via the quotient construction.
    Quotient(QuotientData),
    /// The ledger already certifies a finite order for the element's
    /// syntactic root (or its inverse); no new relator is needed.
    LedgerSkip { root: Word, certified_exponent: u64 },
}

/// The verifiable record of one pipeline step `k -> k+1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepCertificate {
    pub k: u64,
    /// The element processed: the `(k+1)`-th word of the shortlex
    /// enumeration, as a word in the ambient free group.
    pub element: Word,
    pub branch: StepBranch,
    /// `ℓ = |G_k / L_k|`, the index of the refinement subgroup.
    pub refinement_index: u64,
    /// `|G_{k+1} / M_{k+1}|`; equals the refinement index.
    pub marker_index_after: u64,
    pub witness_generators: usize,
    pub witness_relators: usize,
    pub inequalities: Vec<InequalityRecord>,
}

/// Immutable pipeline state after `k` steps.
#[derive(Clone, Debug)]
pub struct GolodState {
    pub rank: usize,
    pub k: u64,
    /// Accumulated relators; `G_k` is the ambient free group modulo their
    /// normal closure. The list only ever grows, so the quotients form a
    /// surjective chain.
    pub relators: Vec<PowerRelator>,
    pub witness: DeficiencyWitness,
    /// The marker subgroup `M_k`.
    pub marker: CosetTable,
    /// Torsion ledger: `root -> n` means `root^n` is a relator of `G_k`.
    pub ledger: BTreeMap<Word, u64>,
    pub history: Vec<StepCertificate>,
}

impl GolodState {
    /// The start state: `G_0 = F`, marker and witness both the whole group.
    pub fn initial(rank: usize) -> Result<Self, PipelineError> {
        if rank < 2 {
            return Err(PipelineError::RankTooSmall(rank));
        }
        Ok(GolodState {
            rank,
            k: 0,
            relators: Vec::new(),
            witness: DeficiencyWitness::whole_group(rank),
            marker: CosetTable::whole_group(rank),
            ledger: BTreeMap::new(),
            history: Vec::new(),
        })
    }

    /// Presentation of the current quotient `G_k`.
    pub fn presentation(&self) -> Presentation {
        Presentation::new(
            self.rank,
            self.relators.iter().map(|r| r.expand()).collect(),
        )
        .expect("relators are over the ambient alphabet")
    }

    /// `|G_k / M_k|`.
    pub fn marker_index(&self) -> u64 {
        self.marker.index() as u64
    }

    /// Runs one pipeline step, returning the next state with its certificate
    /// appended to the history. The input state is untouched.
    pub fn step(&self, budgets: &Budgets) -> Result<GolodState, PipelineError> {
        let element = shortlex_word(self.rank, self.k + 1);
        let (root, root_power) = syntactic_root(&element).expect("enumerated words are nonempty");
        let refinement = find_refinement(self, budgets)?;
        let ell = refinement.index() as u64;

        let ledger_hit = self
            .ledger
            .get(&root)
            .map(|&e| (root.clone(), e))
            .or_else(|| self.ledger.get(&root.inverse()).map(|&e| (root.inverse(), e)));

        let next = if let Some((found_root, exponent)) = ledger_hit {
            self.skip_step(element, found_root, exponent, refinement, ell)?
        } else {
            self.quotient_step(element, root, root_power, refinement, ell, budgets)?
        };

        let cert = next.history.last().expect("step appends a certificate");
        let report = verify_certificate(cert, self, &next);
        if !report.passed {
            return Err(PipelineError::WitnessInconsistent(report.failures));
        }
        Ok(next)
    }

    fn skip_step(
        &self,
        element: Word,
        root: Word,
        certified_exponent: u64,
        refinement: CosetTable,
        ell: u64,
    ) -> Result<GolodState, PipelineError> {
        let inequalities = vec![
            InequalityRecord::new(
                "refinement_exceeds_step",
                ell as i128,
                self.k as i128 + 1,
                Relation::Greater,
            ),
            InequalityRecord::new("marker_matches_refinement", ell as i128, ell as i128, Relation::Equal),
            InequalityRecord::new(
                "ledger_exponent_positive",
                certified_exponent as i128,
                0,
                Relation::Greater,
            ),
        ];
        self.ensure_all_hold(&inequalities)?;
        let cert = StepCertificate {
            k: self.k,
            element,
            branch: StepBranch::LedgerSkip {
                root,
                certified_exponent,
            },
            refinement_index: ell,
            marker_index_after: ell,
            witness_generators: self.witness.presentation.rank(),
            witness_relators: self.witness.presentation.relator_count(),
            inequalities,
        };
        let mut history = self.history.clone();
        history.push(cert);
        Ok(GolodState {
            rank: self.rank,
            k: self.k + 1,
            relators: self.relators.clone(),
            witness: self.witness.clone(),
            marker: refinement,
            ledger: self.ledger.clone(),
            history,
        })
    }

    fn quotient_step(
        &self,
        element: Word,
        root: Word,
        root_power: u64,
        refinement: CosetTable,
        ell: u64,
        budgets: &Budgets,
    ) -> Result<GolodState, PipelineError> {
        let witness_index = self.witness.index();
        let (kernel, kernel_order) = find_order_kernel(self, &element, witness_index, budgets)?;

        // N = K ∩ W: normal, of finite index, and the next witness subgroup.
        let next_table = intersect(&kernel, &self.witness.table);
        let cyclic_order = order_mod(&next_table, &element, next_table.index() as u64)
            .map_err(|e| self.inconsistency(format!("order computation failed: {e}")))?;

        let relator = PowerRelator {
            base: root,
            exponent: root_power * ell * cyclic_order,
        };
        let expanded = relator.expand();
        if !refinement.fixes_all_cosets(&expanded) {
            return Err(self.inconsistency(
                "imposed relator does not lie in the refinement subgroup".into(),
            ));
        }
        if !next_table.fixes_all_cosets(&expanded) {
            return Err(self.inconsistency(
                "imposed relator does not lie in the next witness subgroup".into(),
            ));
        }

        // Present N over the old witness's own presentation.
        let restricted = restrict_to_witness(&self.witness, &next_table);
        if restricted.index() * self.witness.table.index() != next_table.index() {
            return Err(self.inconsistency(
                "next witness subgroup is not contained in the current witness".into(),
            ));
        }
        let sp = subgroup_presentation(&self.witness.presentation, &restricted)
            .map_err(|e| self.inconsistency(e.to_string()))?;

        // Push the conjugates of the relator, one per coset of ⟨g⟩N.
        let cyclic_reps = cyclic_extension_transversal(&next_table, &element);
        let pushed_count = cyclic_reps.len() as u64;
        if pushed_count * cyclic_order != next_table.index() as u64 {
            return Err(self.inconsistency("coset count of ⟨g⟩N does not factor".into()));
        }
        let mut relators_w = sp.relators().to_vec();
        for rep in cyclic_reps.words() {
            let conj = conjugate(&expanded, &rep.inverse());
            if next_table.trace(&conj, 0) != 0 {
                return Err(self.inconsistency(
                    "a conjugate of the relator escapes the witness intersection".into(),
                ));
            }
            let over_witness = self
                .witness
                .rewrite_from_ambient(&conj)
                .map_err(|e| self.inconsistency(e.to_string()))?;
            let over_next = sp
                .rewrite(&over_witness)
                .map_err(|e| self.inconsistency(e.to_string()))?;
            relators_w.push(over_next);
        }

        let new_presentation = Presentation::new(sp.generator_count(), relators_w)
            .expect("relators over the subgroup alphabet");
        let new_generator_words: Vec<Word> = sp
            .generator_words()
            .iter()
            .map(|w| expand_through(w, &self.witness.generator_words))
            .collect();
        let mut new_chain = self.witness.chain.clone();
        new_chain.push(sp);
        let new_witness = DeficiencyWitness {
            table: next_table,
            presentation: new_presentation,
            generator_words: new_generator_words,
            chain: new_chain,
        };

        let witness_to_next = restricted.index() as u64;
        let old_deficiency = self.witness.count_deficiency();
        let new_deficiency = new_witness.count_deficiency();
        let identity_rhs = 1 + (old_deficiency as i128 - 1) * witness_to_next as i128
            - pushed_count as i128;
        let witness_rank = abelian_structure(&new_witness.presentation).free_rank;

        let inequalities = vec![
            InequalityRecord::new(
                "refinement_exceeds_step",
                ell as i128,
                self.k as i128 + 1,
                Relation::Greater,
            ),
            InequalityRecord::new(
                "kernel_order_exceeds_witness_index",
                kernel_order as i128,
                witness_index as i128,
                Relation::Greater,
            ),
            InequalityRecord::new(
                "order_exceeds_witness_index",
                cyclic_order as i128,
                witness_index as i128,
                Relation::Greater,
            ),
            InequalityRecord::new(
                "witness_deficiency_at_least_two",
                new_deficiency as i128,
                2,
                Relation::GreaterEq,
            ),
            InequalityRecord::new(
                "deficiency_count_identity",
                new_deficiency as i128,
                identity_rhs,
                Relation::Equal,
            ),
            InequalityRecord::new(
                "witness_abelian_rank_at_least_two",
                witness_rank as i128,
                2,
                Relation::GreaterEq,
            ),
            InequalityRecord::new("marker_matches_refinement", ell as i128, ell as i128, Relation::Equal),
            InequalityRecord::new(
                "marker_exceeds_step",
                ell as i128,
                self.k as i128 + 1,
                Relation::Greater,
            ),
        ];
        self.ensure_all_hold(&inequalities)?;

        let cert = StepCertificate {
            k: self.k,
            element: element.clone(),
            branch: StepBranch::Quotient(QuotientData {
                cyclic_order,
                kernel_order,
                relator: relator.clone(),
                witness_index,
                witness_to_next,
                pushed_count,
            }),
            refinement_index: ell,
            marker_index_after: ell,
            witness_generators: new_witness.presentation.rank(),
            witness_relators: new_witness.presentation.relator_count(),
            inequalities,
        };

        let mut relators = self.relators.clone();
        relators.push(relator.clone());
        let mut ledger = self.ledger.clone();
        ledger.insert(relator.base.clone(), relator.exponent);
        let mut history = self.history.clone();
        history.push(cert);

        Ok(GolodState {
            rank: self.rank,
            k: self.k + 1,
            relators,
            witness: new_witness,
            marker: refinement,
            ledger,
            history,
        })
    }

    fn ensure_all_hold(&self, records: &[InequalityRecord]) -> Result<(), PipelineError> {
        let failures: Vec<String> = records
            .iter()
            .filter(|r| !r.holds)
            .map(|r| format!("{} failed: {} vs {}", r.name, r.lhs, r.rhs))
            .collect();
        if failures.is_empty() {
            Ok(())
        } else {
            Err(PipelineError::WitnessInconsistent(failures))
        }
    }

    fn inconsistency(&self, msg: String) -> PipelineError {
        PipelineError::WitnessInconsistent(vec![format!("step {}: {msg}", self.k)])
    }
}

/// Substitutes `dictionary[i]` for generator `i` of `word` and reduces.
fn expand_through(word: &Word, dictionary: &[Word]) -> Word {
    let mut out = Word::empty();
    for &letter in word.letters() {
        let entry = &dictionary[letter.gen()];
        if letter.is_inverse() {
            out = out.concat(&entry.inverse());
        } else {
            out = out.concat(entry);
        }
    }
    out
}

/// Finds the refinement subgroup `L_k`: normal, contained in the marker,
/// with `|G_k / L_k| > k + 1`. Congruence kernels of `G_k` are tried first
/// (by ascending modulus), then normal cores of congruence kernels of the
/// witness mapped into `G_k`, intersected with the marker. First hit wins.
pub fn find_refinement(
    state: &GolodState,
    budgets: &Budgets,
) -> Result<CosetTable, PipelineError> {
    let p = state.presentation();
    let target = state.k as u128 + 1;
    for n in 2..=budgets.max_modulus {
        let predicted = congruence_index(&p, n);
        if predicted <= target || predicted > budgets.max_cosets as u128 {
            continue;
        }
        let candidate = congruence_table(&p, n);
        if contains(&state.marker, &candidate) {
            return Ok(candidate);
        }
    }
    if budgets.max_core > 0 {
        for n in 2..=budgets.max_modulus {
            let Some(kernel) = witness_congruence_kernel(state, n, budgets) else {
                continue;
            };
            let Ok(core) = normal_core(&kernel, budgets.max_core) else {
                continue;
            };
            let candidate = intersect(&core, &state.marker);
            if candidate.index() as u128 > target && candidate.index() <= budgets.max_cosets {
                return Ok(candidate);
            }
        }
    }
    Err(PipelineError::BudgetExhausted(format!(
        "no normal subgroup of index above {target} found with moduli up to {}",
        budgets.max_modulus
    )))
}

/// Finds a normal kernel `K` in which the image of `element` has order
/// strictly above `threshold`, returning the kernel and that order.
///
/// The search walks cyclic congruence kernels on a doubling modulus schedule
/// (2, 4, 8, ...), then the remaining moduli ascending, then normal cores of
/// witness congruence kernels. Cyclic kernels quotient `A/nA` by a maximal
/// subgroup meeting the image of `element` trivially, which keeps the index
/// of `K` (and with it the growth of the witness chain) as small as the
/// abelianization allows.
pub fn find_order_kernel(
    state: &GolodState,
    element: &Word,
    threshold: u64,
    budgets: &Budgets,
) -> Result<(CosetTable, u64), PipelineError> {
    let p = state.presentation();
    let coords = AbelianCoords::new(&p);
    let mut schedule: Vec<u64> = Vec::new();
    let mut n = 2u64;
    while n <= budgets.max_modulus {
        schedule.push(n);
        n *= 2;
    }
    schedule.extend((3..=budgets.max_modulus).filter(|m| !m.is_power_of_two()));
    for n in schedule {
        let order = coords.order_mod_n(element, n);
        if order <= threshold {
            continue;
        }
        if let Some(kernel) =
            cyclic_congruence_kernel(&coords, p.rank(), element, n, budgets.max_cosets)
        {
            debug_assert_eq!(
                order_mod(&kernel, element, kernel.index() as u64).unwrap(),
                order
            );
            return Ok((kernel, order));
        }
    }
    if budgets.max_core > 0 {
        for n in 2..=budgets.max_modulus {
            let Some(kernel) = witness_congruence_kernel(state, n, budgets) else {
                continue;
            };
            let Ok(core) = normal_core(&kernel, budgets.max_core) else {
                continue;
            };
            let order = order_mod(&core, element, core.index() as u64)
                .expect("complete table closes every power");
            if order > threshold {
                return Ok((core, order));
            }
        }
    }
    Err(PipelineError::Unresolved {
        element: element.clone(),
        threshold,
    })
}

/// Kernel of a surjection of `G` onto a cyclic-as-possible finite abelian
/// group in which the image of `element` keeps its full order mod `n`.
///
/// In `P = A/nA` a maximal subgroup `H` meeting the cyclic group generated
/// by the image `v` trivially is grown greedily; the kernel of
/// `G -> P/H` then has index `|P|/|H|` while the image of `element` still
/// has order `ord(v)`.
fn cyclic_congruence_kernel(
    coords: &AbelianCoords,
    rank: usize,
    element: &Word,
    n: u64,
    max_cosets: usize,
) -> Option<CosetTable> {
    let moduli_full = coords.moduli_mod(n);
    let live: Vec<usize> = (0..moduli_full.len())
        .filter(|&i| moduli_full[i] > 1)
        .collect();
    let moduli: Vec<u64> = live.iter().map(|&i| moduli_full[i]).collect();
    let p_size: u128 = moduli.iter().map(|&m| m as u128).product();
    if p_size > max_cosets as u128 {
        return None;
    }
    let restrict = |full: Vec<u64>| -> Vec<u64> { live.iter().map(|&i| full[i]).collect() };
    let v = restrict(coords.image_mod(element, n));

    let add = |a: &[u64], b: &[u64]| -> Vec<u64> {
        a.iter()
            .zip(b.iter())
            .zip(moduli.iter())
            .map(|((&x, &y), &m)| (x + y) % m)
            .collect()
    };
    let zero = vec![0u64; moduli.len()];

    // The cyclic subgroup generated by v, minus zero.
    let mut cyclic: HashSet<Vec<u64>> = HashSet::new();
    let mut cur = v.clone();
    while cur != zero {
        cyclic.insert(cur.clone());
        cur = add(&cur, &v);
    }
    let order = cyclic.len() as u128 + 1;
    let target = p_size / order;

    let mut h_gens: Vec<Vec<u64>> = Vec::new();
    let mut h_elems: HashSet<Vec<u64>> = HashSet::from([zero.clone()]);
    let mut candidate = zero.clone();
    loop {
        // Next tuple in counting order; stop after wrapping around.
        let mut pos = moduli.len();
        while pos > 0 {
            pos -= 1;
            candidate[pos] += 1;
            if candidate[pos] < moduli[pos] {
                break;
            }
            candidate[pos] = 0;
            if pos == 0 {
                pos = usize::MAX;
                break;
            }
        }
        if pos == usize::MAX || moduli.is_empty() {
            break;
        }
        if h_elems.len() as u128 >= target {
            break;
        }
        if h_elems.contains(&candidate) {
            continue;
        }
        // Closure of ⟨H, candidate⟩: h_elems is already closed under the old
        // generators, so everything new is reached by repeatedly adding the
        // candidate; still, seed the worklist with every known element.
        let mut closure = h_elems.clone();
        closure.insert(candidate.clone());
        let mut queue: Vec<Vec<u64>> = closure.iter().cloned().collect();
        let mut clean = !cyclic.contains(&candidate);
        while clean {
            let Some(next) = queue.pop() else { break };
            for g in h_gens.iter().chain(std::iter::once(&candidate)) {
                let s = add(&next, g);
                if closure.insert(s.clone()) {
                    if cyclic.contains(&s) {
                        clean = false;
                        break;
                    }
                    queue.push(s);
                }
            }
        }
        if clean {
            h_gens.push(candidate.clone());
            h_elems = closure;
        }
    }

    // Quotient P/H through the Smith form of the lattice spanned by the
    // chosen subgroup generators together with the slot moduli.
    let t = moduli.len();
    let mut rows: Vec<Vec<i64>> = h_gens
        .iter()
        .map(|g| g.iter().map(|&x| x as i64).collect())
        .collect();
    for (i, &m) in moduli.iter().enumerate() {
        let mut row = vec![0i64; t];
        row[i] = m as i64;
        rows.push(row);
    }
    let snf = smith_normal_form(&IntMatrix::from_i64_rows(&rows));
    let q_moduli: Vec<u64> = snf
        .divisors
        .iter()
        .map(|d| u64::try_from(d).expect("quotient moduli fit"))
        .collect();
    debug_assert_eq!(q_moduli.len(), t, "quotient lattice has full rank");
    let project = |x: &[u64]| -> Vec<u64> {
        (0..t)
            .map(|j| {
                let mut acc: i128 = 0;
                for i in 0..t {
                    acc += x[i] as i128 * i128::try_from(snf.v.at(i, j)).expect("small transform");
                }
                let m = q_moduli[j] as i128;
                (acc.rem_euclid(m)) as u64
            })
            .collect()
    };
    let gen_images: Vec<Vec<u64>> = (0..rank)
        .map(|g| project(&restrict(coords.image_mod(&Word::generator(g), n))))
        .collect();
    Some(abelian_image_table(rank, &q_moduli, |g| {
        gen_images[g].clone()
    }))
}

/// Table (in `G_k`) of the kernel of `W -> A_W / n A_W`, where `A_W` is the
/// abelianization of the witness presentation. States pair a coset of the
/// witness with an element of the finite abelian image; the increment
/// crossing an edge is the image of the Schreier generator of that edge,
/// computed by rewriting it down the witness chain.
fn witness_congruence_kernel(
    state: &GolodState,
    n: u64,
    budgets: &Budgets,
) -> Option<CosetTable> {
    let wp = &state.witness.presentation;
    let coords = AbelianCoords::new(wp);
    let moduli_full = coords.moduli_mod(n);
    let live: Vec<usize> = (0..moduli_full.len())
        .filter(|&i| moduli_full[i] > 1)
        .collect();
    let moduli: Vec<u64> = live.iter().map(|&i| moduli_full[i]).collect();
    let image_size: u128 = moduli.iter().map(|&m| m as u128).product();
    let w_index = state.witness.table.index();
    if image_size * w_index as u128 > budgets.max_cosets as u128 {
        return None;
    }

    let rank = state.rank;
    let table = &state.witness.table;
    let reps = schreier_transversal(table);
    // φ[coset][column]: abelian image of the Schreier generator of the edge.
    let mut phi: Vec<Vec<Vec<u64>>> = vec![vec![Vec::new(); 2 * rank]; w_index];
    for c in 0..w_index {
        for letter in crate::words::letter_order(rank) {
            let target = table.entry(c, letter);
            let overflow = reps
                .rep(c)
                .concat(&Word::single(letter))
                .concat(&reps.rep(target).inverse());
            let over_witness = state
                .witness
                .rewrite_from_ambient(&overflow)
                .expect("Schreier generators lie in the witness");
            let full = coords.image_mod(&over_witness, n);
            phi[c][letter.column(rank)] = live.iter().map(|&i| full[i]).collect();
        }
    }

    CosetTable::from_action_capped(
        rank,
        (0usize, vec![0u64; moduli.len()]),
        crate::cosets::TableOrigin::FiniteImage,
        budgets.max_cosets,
        |(c, q), letter| {
            let inc = &phi[*c][letter.column(rank)];
            let next_q: Vec<u64> = q
                .iter()
                .zip(inc.iter())
                .zip(moduli.iter())
                .map(|((&a, &b), &m)| (a + b) % m)
                .collect();
            (table.entry(*c, letter), next_q)
        },
    )
    .ok()
}

/// Table of `N` viewed inside the witness `W`: states are the cosets of `N`
/// lying in `W`, acted on by the witness generators.
fn restrict_to_witness(witness: &DeficiencyWitness, n_table: &CosetTable) -> CosetTable {
    let words = &witness.generator_words;
    CosetTable::from_action(
        words.len(),
        0usize,
        crate::cosets::TableOrigin::Intersection,
        |&c, letter| {
            let w = &words[letter.gen()];
            if letter.is_inverse() {
                n_table.trace(&w.inverse(), c)
            } else {
                n_table.trace(w, c)
            }
        },
    )
}

/// A right transversal of `⟨g⟩N` in `G`, as representatives read off the
/// table of `N`: the cosets of `N` are grouped into orbits of the cyclic
/// subgroup generated by the image of `g`, and the smallest-numbered coset
/// of each orbit contributes its Schreier representative.
fn cyclic_extension_transversal(n_table: &CosetTable, g: &Word) -> Transversal {
    let index = n_table.index();
    let reps = schreier_transversal(n_table);
    let mut cyc = vec![false; index];
    let mut cur = 0usize;
    loop {
        cyc[cur] = true;
        cur = n_table.trace(g, cur);
        if cur == 0 {
            break;
        }
    }
    let mut assigned = vec![false; index];
    let mut out = Vec::new();
    for c in 0..index {
        if assigned[c] {
            continue;
        }
        out.push(reps.rep(c).clone());
        for (s, &in_cyc) in cyc.iter().enumerate() {
            if in_cyc {
                let member = n_table.trace(reps.rep(c), s);
                assigned[member] = true;
            }
        }
    }
    Transversal::from_words(out)
}

/// Outcome of re-checking a certificate from scratch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerificationReport {
    pub passed: bool,
    pub failures: Vec<String>,
}

impl VerificationReport {
    fn collect(failures: Vec<String>) -> Self {
        VerificationReport {
            passed: failures.is_empty(),
            failures,
        }
    }
}

/// Re-derives every check behind a step certificate from the two states it
/// connects. Returns the reasons for any failure instead of erroring.
pub fn verify_certificate(
    cert: &StepCertificate,
    before: &GolodState,
    after: &GolodState,
) -> VerificationReport {
    let mut fails: Vec<String> = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            fails.push(name.to_string());
        }
    };

    check("step_counter_advances", after.k == before.k + 1 && cert.k == before.k);
    check(
        "element_matches_enumeration",
        cert.element == shortlex_word(before.rank, before.k + 1),
    );
    let ell = cert.refinement_index;
    check(
        "marker_index_matches_refinement",
        after.marker_index() == ell && cert.marker_index_after == ell,
    );
    check("marker_order_exceeds_step", after.marker_index() > after.k);
    check(
        "refinement_inside_old_marker",
        contains(&before.marker, &after.marker),
    );
    check("marker_is_normal", is_normal(&after.marker));
    check(
        "witness_counts_match",
        cert.witness_generators == after.witness.presentation.rank()
            && cert.witness_relators == after.witness.presentation.relator_count(),
    );
    check(
        "recorded_inequalities_hold",
        cert.inequalities.iter().all(|r| r.holds),
    );

    match &cert.branch {
        StepBranch::LedgerSkip {
            root,
            certified_exponent,
        } => {
            check(
                "ledger_contains_certificate",
                before.ledger.get(root) == Some(certified_exponent),
            );
            let (element_root, _) = syntactic_root(&cert.element).expect("nonempty");
            check(
                "root_matches_element",
                *root == element_root || *root == element_root.inverse(),
            );
            check("no_new_relator", after.relators == before.relators);
            check(
                "witness_unchanged",
                after.witness.presentation == before.witness.presentation,
            );
        }
        StepBranch::Quotient(q) => {
            let (root, root_power) = syntactic_root(&cert.element).expect("nonempty");
            check("order_exceeds_witness_index", q.cyclic_order > q.witness_index);
            check(
                "kernel_order_exceeds_witness_index",
                q.kernel_order > q.witness_index,
            );
            check(
                "order_multiple_of_kernel_order",
                q.kernel_order > 0 && q.cyclic_order % q.kernel_order == 0,
            );
            check("witness_index_matches", q.witness_index == before.witness.index());
            check(
                "relator_is_stated_power",
                q.relator.base == root
                    && q.relator.exponent == root_power * ell * q.cyclic_order,
            );
            check(
                "relator_appended",
                after.relators.len() == before.relators.len() + 1
                    && after.relators[..before.relators.len()] == before.relators[..]
                    && after.relators.last() == Some(&q.relator),
            );
            check(
                "ledger_records_relator",
                after.ledger.get(&q.relator.base) == Some(&q.relator.exponent),
            );

            let expanded = q.relator.expand();
            check(
                "relator_inside_new_marker",
                after.marker.fixes_all_cosets(&expanded),
            );
            check(
                "relator_inside_new_witness",
                after.witness.table.fixes_all_cosets(&expanded),
            );
            check("new_witness_is_normal", is_normal(&after.witness.table));
            check(
                "witness_index_factorization",
                q.witness_to_next * before.witness.index() == after.witness.index(),
            );
            check(
                "pushed_count_factorization",
                q.pushed_count * q.cyclic_order == after.witness.index(),
            );

            // Nielsen-Schreier bookkeeping for the new witness presentation.
            let r_w = before.witness.presentation.rank() as i128;
            let s_w = before.witness.presentation.relator_count() as i128;
            let j = q.witness_to_next as i128;
            check(
                "schreier_generator_count",
                cert.witness_generators as i128 == (r_w - 1) * j + 1,
            );
            check(
                "relator_count",
                cert.witness_relators as i128 == s_w * j + q.pushed_count as i128,
            );
            let d_old = before.witness.count_deficiency() as i128;
            let d_new = after.witness.count_deficiency() as i128;
            check(
                "deficiency_count_identity",
                d_new == 1 + (d_old - 1) * j - q.pushed_count as i128,
            );
            check("witness_deficiency_at_least_two", d_new >= 2);

            // Independent confirmation that the witness surjects onto Z^2.
            let structure = abelian_structure(&after.witness.presentation);
            check("witness_abelian_rank_at_least_two", structure.free_rank >= 2);

            // Witness relators must be trivial in the new quotient: check the
            // abelianization (necessary condition) and trace closure.
            let after_pres = after.presentation();
            let coords = AbelianCoords::new(&after_pres);
            let all_die = after.witness.presentation.relators().iter().all(|r| {
                let ambient = expand_through(r, &after.witness.generator_words);
                coords.kills(&ambient)
                    && after.witness.table.fixes_all_cosets(&ambient)
                    && after.marker.fixes_all_cosets(&ambient)
            });
            check("witness_relators_trivial_in_quotient", all_die);
        }
    }

    VerificationReport::collect(fails)
}

/// Result of a pipeline run: the final state plus, when a step failed, which
/// step and why. Certificates live in `state.history`.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub state: GolodState,
    pub halted: Option<Halt>,
}

#[derive(Clone, Debug)]
pub struct Halt {
    pub step: u64,
    pub error: PipelineError,
}

/// Runs `steps` pipeline steps from the initial state, stopping early with
/// partial results when a step cannot be certified.
pub fn run(rank: usize, steps: u64, budgets: &Budgets) -> Result<RunReport, PipelineError> {
    if steps < 1 {
        return Err(PipelineError::NoSteps);
    }
    let mut state = GolodState::initial(rank)?;
    let mut halted = None;
    for _ in 0..steps {
        match state.step(budgets) {
            Ok(next) => state = next,
            Err(error) => {
                halted = Some(Halt {
                    step: state.k,
                    error,
                });
                break;
            }
        }
    }
    Ok(RunReport { state, halted })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Word {
        Word::from_alpha(s, 26).unwrap()
    }

    #[test]
    fn initial_states() {
        let s = GolodState::initial(2).unwrap();
        assert_eq!(s.witness.count_deficiency(), 2);
        assert_eq!(s.marker_index(), 1);
        assert_eq!(GolodState::initial(3).unwrap().witness.count_deficiency(), 3);
        assert_eq!(
            GolodState::initial(1).unwrap_err(),
            PipelineError::RankTooSmall(1)
        );
    }

    #[test]
    fn refinement_at_start_is_mod_two_kernel() {
        let s = GolodState::initial(2).unwrap();
        let l = find_refinement(&s, &Budgets::default()).unwrap();
        assert_eq!(l.index(), 4);
    }

    #[test]
    fn order_kernel_for_a_generator() {
        let s = GolodState::initial(2).unwrap();
        let (k, order) = find_order_kernel(&s, &w("a"), 1, &Budgets::default()).unwrap();
        assert_eq!(order, 2);
        assert_eq!(k.index(), 2);
        assert!(is_normal(&k));
    }

    #[test]
    fn commutator_is_unresolved_without_core_search() {
        let s = GolodState::initial(2).unwrap();
        let budgets = Budgets {
            max_core: 0,
            ..Budgets::default()
        };
        let err = find_order_kernel(&s, &w("abAB"), 1, &budgets).unwrap_err();
        assert!(matches!(err, PipelineError::Unresolved { .. }));
    }

    #[test]
    fn commutator_resolves_through_witness_cores() {
        // After one step the witness is a proper subgroup whose
        // abelianization sees the commutator.
        let s = GolodState::initial(2).unwrap().step(&Budgets::default()).unwrap();
        let (k, order) = find_order_kernel(&s, &w("abAB"), 1, &Budgets::default()).unwrap();
        assert!(order > 1);
        assert!(is_normal(&k));
        assert_eq!(order_mod(&k, &w("abAB"), k.index() as u64).unwrap(), order);
    }

    #[test]
    fn first_step_matches_hand_computation() {
        let s0 = GolodState::initial(2).unwrap();
        let s1 = s0.step(&Budgets::default()).unwrap();
        let cert = s1.history.last().unwrap();
        assert_eq!(cert.element, w("a"));
        assert_eq!(cert.refinement_index, 4);
        let StepBranch::Quotient(q) = &cert.branch else {
            panic!("expected a quotient step");
        };
        assert_eq!(q.cyclic_order, 2);
        assert_eq!(q.relator, PowerRelator { base: w("a"), exponent: 8 });
        assert_eq!(q.witness_index, 1);
        assert_eq!(q.witness_to_next, 2);
        assert_eq!(q.pushed_count, 1);
        assert_eq!(cert.witness_generators, 3);
        assert_eq!(cert.witness_relators, 1);
        assert_eq!(s1.witness.count_deficiency(), 2);
        assert_eq!(s1.witness.index(), 2);
        assert_eq!(s1.marker_index(), 4);
        assert_eq!(
            s1.witness.generator_words,
            vec![w("b"), w("aa"), w("abA")]
        );
    }

    #[test]
    fn second_step_matches_hand_computation() {
        let budgets = Budgets::default();
        let s2 = GolodState::initial(2)
            .unwrap()
            .step(&budgets)
            .unwrap()
            .step(&budgets)
            .unwrap();
        let cert = s2.history.last().unwrap();
        assert_eq!(cert.element, w("b"));
        assert_eq!(cert.refinement_index, 4);
        let StepBranch::Quotient(q) = &cert.branch else {
            panic!("expected a quotient step");
        };
        assert_eq!(q.cyclic_order, 4);
        assert_eq!(q.relator, PowerRelator { base: w("b"), exponent: 16 });
        assert_eq!(q.witness_to_next, 4);
        assert_eq!(q.pushed_count, 2);
        assert_eq!(cert.witness_generators, 9);
        assert_eq!(cert.witness_relators, 6);
        assert_eq!(s2.witness.count_deficiency(), 3);
    }

    #[test]
    fn inverse_elements_are_ledger_skipped() {
        let budgets = Budgets::default();
        let mut s = GolodState::initial(2).unwrap();
        for _ in 0..3 {
            s = s.step(&budgets).unwrap();
        }
        let cert = s.history.last().unwrap();
        assert_eq!(cert.element, w("A"));
        assert!(matches!(
            cert.branch,
            StepBranch::LedgerSkip { .. }
        ));
        // The witness survives a skip untouched.
        assert_eq!(cert.witness_generators, 9);
    }

    #[test]
    fn short_run_certifies_the_expected_ledger() {
        let report = run(2, 2, &Budgets::default()).unwrap();
        assert!(report.halted.is_none());
        let ledger: Vec<(String, u64)> = report
            .state
            .ledger
            .iter()
            .map(|(word, &e)| (word.to_alpha(), e))
            .collect();
        assert_eq!(ledger, vec![("a".to_string(), 8), ("b".to_string(), 16)]);
        assert_eq!(run(2, 0, &Budgets::default()).unwrap_err(), PipelineError::NoSteps);
    }

    #[test]
    fn forged_certificates_are_rejected() {
        let s0 = GolodState::initial(2).unwrap();
        let s1 = s0.step(&Budgets::default()).unwrap();
        let mut cert = s1.history.last().unwrap().clone();
        if let StepBranch::Quotient(q) = &mut cert.branch {
            q.cyclic_order = q.witness_index; // violate the strict inequality
        }
        let report = verify_certificate(&cert, &s0, &s1);
        assert!(!report.passed);
        assert!(report
            .failures
            .iter()
            .any(|f| f.contains("order_exceeds_witness_index")));
    }
}
