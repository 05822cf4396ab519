//! Exact computational toolkit for groups acting on spherically homogeneous
//! rooted trees: tree automorphisms as generator words with decidable
//! equality, finite invertible automata and their activity degree, directed
//! automorphism groups, Schreier networks with electric-resistance theory,
//! and random walks with internal degrees of freedom (diagrams, traces,
//! exact convolution entropy and entropy bound curves).

pub mod atom;
pub mod automaton;
pub mod directed;
pub mod element;
pub mod fixtures;
pub mod measure;
pub mod network;
pub mod perm;
pub mod rwidf;
pub mod solve;
pub mod valency;

pub use atom::{Atom, AtomKey, DirectedData, LevelData};
pub use automaton::{ActivityDegree, ActivityReport, FiniteAutomaton};
pub use element::{AlgebraError, Budgets, ElementKey, Portrait, TreeAut, Universe};
pub use perm::Perm;
pub use valency::{ValencySeq, Vertex};
