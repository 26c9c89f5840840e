//! Computational toolkit for finitely presented groups, built around the
//! machinery needed to run a certified torsion-quotient pipeline:
//!
//! * [`words`] — free-group word algebra and shortlex enumeration,
//! * [`abel`] — exact integer linear algebra (Smith normal form),
//!   abelianization structure, and congruence kernels,
//! * [`cosets`] — coset tables: Todd–Coxeter enumeration, transversals,
//!   intersections, normal cores,
//! * [`rs`] — Reidemeister–Schreier subgroup presentations and rewriting,
//! * [`golod`] — the inductive pipeline that imposes power relators and
//!   emits per-step certificates witnessing every inequality it relies on.
//!
//! Everything is exact: matrix arithmetic uses arbitrary-precision integers
//! and no floating point appears anywhere.

pub mod abel;
pub mod cosets;
pub mod golod;
pub mod rs;
pub mod words;

pub use abel::{AbelianStructure, IntMatrix, Presentation, SmithDecomposition};
pub use cosets::{CosetTable, Transversal};
pub use golod::{Budgets, GolodState, RunReport, StepCertificate};
pub use rs::SubgroupPresentation;
pub use words::{Letter, Word};
