//! Built-in group fixtures: the Hanoi Towers automaton group and the
//! bounded mother groups over 2 and 3 letters, each with its symmetric
//! generating set, default uniform measure, and per-level watched-set split.

use std::sync::Arc;

use thiserror::Error;

use crate::atom::Atom;
use crate::automaton::{hanoi_automaton, FiniteAutomaton};
use crate::directed::{classify_sections, mother_group, DirectedError, FinitePermGroup};
use crate::element::{AlgebraError, Budgets, TreeAut, Universe};
use crate::measure::{FiniteMeasure, MeasureError};
use crate::valency::{ValencySeq, Vertex};

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("unknown fixture {0:?} (known: hanoi, mother2, mother3)")]
    Unknown(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Directed(#[from] DirectedError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

pub enum FixtureKind {
    Automaton(Arc<FiniteAutomaton>),
    Directed {
        a: FinitePermGroup,
        b: FinitePermGroup,
    },
}

pub struct Fixture {
    pub name: String,
    pub universe: Arc<Universe>,
    pub generators: Vec<TreeAut>,
    pub generator_names: Vec<String>,
    pub measure: FiniteMeasure,
    pub kind: FixtureKind,
}

impl Fixture {
    /// The watched-set split `(𝔸_n, 𝔹_n)` at level `n ≥ 1`.
    ///
    /// For the mother groups this is read off the section classification.
    /// For the Hanoi fixture the raw generators `b, c` are not directed, so
    /// the classification machinery reports the level unstable; the fixture
    /// supplies the split of its watched corners instead: the directed
    /// corner `0ⁿ` against the others.
    pub fn watched_split(&self, n: usize) -> Result<(Vec<Vertex>, Vec<Vertex>), FixtureError> {
        match &self.kind {
            FixtureKind::Automaton(_) => Ok((
                vec![Vertex::zeros(n)],
                vec![Vertex::repeated(1, n), Vertex::repeated(2, n)],
            )),
            FixtureKind::Directed { a, b } => {
                let c = classify_sections(&self.universe, &self.generators, a, b, n)?;
                Ok((c.class_a, c.class_b))
            }
        }
    }

    /// All watched vertices at level `n` (the union of the split).
    pub fn watched_set(&self, n: usize) -> Result<Vec<Vertex>, FixtureError> {
        let (mut a, b) = self.watched_split(n)?;
        a.extend(b);
        a.sort();
        Ok(a)
    }

    pub fn m_star(&self) -> usize {
        self.universe.base().m_star()
    }
}

/// Constructs a named fixture with the given budgets.
pub fn register_fixture(name: &str, budgets: Budgets) -> Result<Fixture, FixtureError> {
    match name {
        "hanoi" => {
            let universe = Universe::new(ValencySeq::constant(3), budgets);
            let aut = hanoi_automaton();
            let generator_names: Vec<String> =
                ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
            let generators: Vec<TreeAut> = generator_names
                .iter()
                .map(|s| {
                    let idx = aut
                        .state_index(s)
                        .expect("builtin automaton has states a, b, c");
                    universe.from_atom(0, Atom::state(aut.clone(), idx))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let measure = FiniteMeasure::uniform(&generators)?;
            Ok(Fixture {
                name: "hanoi".into(),
                universe,
                generators,
                generator_names,
                measure,
                kind: FixtureKind::Automaton(aut),
            })
        }
        "mother2" | "mother3" => {
            let m = if name == "mother2" { 2 } else { 3 };
            let universe = Universe::new(ValencySeq::constant(m), budgets);
            let (a, b) = mother_group(&universe, m)?;
            let mut generators = a.nonidentity_elements();
            generators.extend(b.nonidentity_elements());
            let generator_names: Vec<String> = generators
                .iter()
                .map(|g| g.to_string())
                .collect();
            let measure = FiniteMeasure::uniform(&generators)?;
            Ok(Fixture {
                name: name.into(),
                universe,
                generators,
                generator_names,
                measure,
                kind: FixtureKind::Directed { a, b },
            })
        }
        other => Err(FixtureError::Unknown(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hanoi_fixture_shape() {
        let f = register_fixture("hanoi", Budgets::default()).unwrap();
        assert_eq!(f.generators.len(), 3);
        assert!(f.measure.is_symmetric().unwrap());
        let (a, b) = f.watched_split(3).unwrap();
        assert_eq!(a, vec![Vertex::zeros(3)]);
        assert_eq!(b.len(), 2);
    }

    #[test]
    fn mother_fixture_orders() {
        let f2 = register_fixture("mother2", Budgets::default()).unwrap();
        // |A∖e| + |B∖e| = 1 + 1
        assert_eq!(f2.generators.len(), 2);
        let f3 = register_fixture("mother3", Budgets::default()).unwrap();
        assert_eq!(f3.generators.len(), 71 + 5);
        assert!(f3.measure.is_symmetric().unwrap());
        let (a, b) = f3.watched_split(2).unwrap();
        assert_eq!(a, vec![Vertex::zeros(2)]);
        assert_eq!(b.len(), 2);
    }

    #[test]
    fn unknown_fixture_errors() {
        assert!(matches!(
            register_fixture("nope", Budgets::default()),
            Err(FixtureError::Unknown(_))
        ));
    }
}
