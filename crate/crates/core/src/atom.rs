//! Atomic tree automorphisms: rooted permutations, states of finite
//! automata, and directed (ray-supported) elements.  Atoms are closed under
//! taking sections, which is what makes word-based triviality testing
//! terminate for bounded-activity inputs.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::automaton::FiniteAutomaton;
use crate::perm::Perm;
use crate::valency::ValencySeq;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

pub(crate) fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Wreath-recursion data of a directed element at one level: the root
/// permutation `ρ_n` (fixing 0) and the rooted sections `τ_{n,x}` at the
/// non-zero letters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelData {
    /// Permutation of `{0,…,m_n−1}` with `0·ρ = 0`.
    pub rho: Perm,
    /// `τ_{n,x}` for `x = 1,…,m_n−1`, each a permutation of `{0,…,m_{n+1}−1}`.
    pub taus: Vec<Perm>,
}

impl LevelData {
    pub fn identity(m_n: usize, m_next: usize) -> Self {
        LevelData {
            rho: Perm::identity(m_n),
            taus: vec![Perm::identity(m_next); m_n.saturating_sub(1)],
        }
    }

    pub fn is_identity(&self) -> bool {
        self.rho.is_identity() && self.taus.iter().all(|t| t.is_identity())
    }
}

/// Per-level data of a directed automorphism, eventually periodic and
/// aligned with its valency sequence (head at least as long as the
/// sequence's head, period length a multiple of the sequence's period).
#[derive(Debug)]
pub struct DirectedData {
    pub(crate) id: u64,
    pub(crate) name: String,
    pub(crate) base: Arc<ValencySeq>,
    pub(crate) head: Vec<LevelData>,
    pub(crate) period: Vec<LevelData>,
    period_trivial: bool,
    /// `head_trivial_from[i]` ⇔ all head entries with index ≥ i are identity.
    head_trivial_from: Vec<bool>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DirectedDataError {
    #[error("directed data period must be non-empty")]
    EmptyPeriod,
    #[error("directed data head must cover the valency head ({need} levels, got {got})")]
    HeadTooShort { need: usize, got: usize },
    #[error("directed data period length {got} is not a multiple of the valency period {base}")]
    PeriodMisaligned { got: usize, base: usize },
    #[error("level {level}: ρ must fix 0 and act on {m} letters")]
    BadRho { level: usize, m: usize },
    #[error("level {level}: expected {want} sections τ of degree {degree}")]
    BadTaus {
        level: usize,
        want: usize,
        degree: usize,
    },
}

impl DirectedData {
    pub fn new(
        name: impl Into<String>,
        base: Arc<ValencySeq>,
        head: Vec<LevelData>,
        period: Vec<LevelData>,
    ) -> Result<Arc<Self>, DirectedDataError> {
        if period.is_empty() {
            return Err(DirectedDataError::EmptyPeriod);
        }
        if head.len() < base.head_len() {
            return Err(DirectedDataError::HeadTooShort {
                need: base.head_len(),
                got: head.len(),
            });
        }
        if period.len() % base.period_len() != 0 {
            return Err(DirectedDataError::PeriodMisaligned {
                got: period.len(),
                base: base.period_len(),
            });
        }
        for (i, entry) in head.iter().chain(period.iter()).enumerate() {
            let level = i + 1;
            let m_n = base.valency(level);
            let m_next = base.valency(level + 1);
            if entry.rho.degree() != m_n || entry.rho.apply(0) != 0 {
                return Err(DirectedDataError::BadRho { level, m: m_n });
            }
            if entry.taus.len() != m_n - 1
                || entry.taus.iter().any(|t| t.degree() != m_next)
            {
                return Err(DirectedDataError::BadTaus {
                    level,
                    want: m_n - 1,
                    degree: m_next,
                });
            }
        }
        let period_trivial = period.iter().all(LevelData::is_identity);
        let mut head_trivial_from = vec![true; head.len() + 1];
        for i in (0..head.len()).rev() {
            head_trivial_from[i] = head_trivial_from[i + 1] && head[i].is_identity();
        }
        Ok(Arc::new(DirectedData {
            id: fresh_id(),
            name: name.into(),
            base,
            head,
            period,
            period_trivial,
            head_trivial_from,
        }))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn base(&self) -> &Arc<ValencySeq> {
        &self.base
    }

    /// Data consumed at 1-based level `n`.
    pub fn level(&self, n: usize) -> &LevelData {
        if n <= self.head.len() {
            &self.head[n - 1]
        } else {
            &self.period[(n - 1 - self.head.len()) % self.period.len()]
        }
    }

    /// Offsets wrap into the data period (which refines the valency period).
    pub fn canonical_offset(&self, offset: usize) -> usize {
        if offset < self.head.len() {
            offset
        } else {
            self.head.len() + (offset - self.head.len()) % self.period.len()
        }
    }

    /// True when all levels strictly above `offset` carry identity data,
    /// i.e. the shift of the element by `offset` is the identity.
    pub fn trivial_from(&self, offset: usize) -> bool {
        self.period_trivial
            && (offset >= self.head.len() || self.head_trivial_from[offset])
    }

    /// Longest level horizon that determines the data: head plus one period.
    pub fn horizon(&self) -> usize {
        self.head.len() + self.period.len()
    }

    pub fn head_len(&self) -> usize {
        self.head.len()
    }

    pub fn period_len(&self) -> usize {
        self.period.len()
    }
}

/// Key identifying an atom up to syntactic identity; used to build word keys
/// for memoization and canonical-element registries.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AtomKey {
    Rooted(Vec<usize>),
    State(u64, u32, bool),
    Directed(u64, u32, bool),
}

/// An atomic generator of a word automorphism.  Automaton states and
/// directed elements are inverted lazily via a flag so that sectioning an
/// inverse stays inside a fixed finite atom set.
#[derive(Clone)]
pub enum Atom {
    Rooted(Perm),
    State {
        aut: Arc<FiniteAutomaton>,
        state: usize,
        inverted: bool,
    },
    Directed {
        data: Arc<DirectedData>,
        offset: usize,
        inverted: bool,
    },
}

impl Atom {
    pub fn rooted(p: Perm) -> Atom {
        Atom::Rooted(p)
    }

    pub fn state(aut: Arc<FiniteAutomaton>, state: usize) -> Atom {
        Atom::State {
            aut,
            state,
            inverted: false,
        }
    }

    pub fn directed(data: Arc<DirectedData>) -> Atom {
        Atom::Directed {
            data,
            offset: 0,
            inverted: false,
        }
    }

    pub fn directed_at(data: Arc<DirectedData>, offset: usize) -> Atom {
        let offset = data.canonical_offset(offset);
        Atom::Directed {
            data,
            offset,
            inverted: false,
        }
    }

    /// Size of the first-level alphabet this atom acts on.
    pub fn first_level_valency(&self) -> usize {
        match self {
            Atom::Rooted(p) => p.degree(),
            Atom::State { aut, .. } => aut.alphabet(),
            Atom::Directed { data, offset, .. } => data.base.valency(offset + 1),
        }
    }

    /// Image of the letter `x` under the atom's first-level permutation.
    pub fn permute(&self, x: usize) -> usize {
        match self {
            Atom::Rooted(p) => p.apply(x),
            Atom::State {
                aut,
                state,
                inverted,
            } => {
                let sigma = aut.perm(*state);
                if *inverted {
                    sigma.images().iter().position(|&y| y == x).unwrap()
                } else {
                    sigma.apply(x)
                }
            }
            Atom::Directed {
                data,
                offset,
                inverted,
            } => {
                let rho = &data.level(offset + 1).rho;
                if *inverted {
                    rho.images().iter().position(|&y| y == x).unwrap()
                } else {
                    rho.apply(x)
                }
            }
        }
    }

    /// First-level permutation as a `Perm`.
    pub fn root_perm(&self) -> Perm {
        match self {
            Atom::Rooted(p) => p.clone(),
            Atom::State {
                aut,
                state,
                inverted,
            } => {
                let sigma = aut.perm(*state);
                if *inverted {
                    sigma.inverse()
                } else {
                    sigma.clone()
                }
            }
            Atom::Directed {
                data,
                offset,
                inverted,
            } => {
                let rho = &data.level(offset + 1).rho;
                if *inverted {
                    rho.inverse()
                } else {
                    rho.clone()
                }
            }
        }
    }

    /// Section at a first-level letter, `None` when syntactically trivial.
    ///
    /// For an inverted atom `a⁻¹` the rule `a⁻¹|_x = (a|_{x·a⁻¹})⁻¹` is
    /// applied, keeping sections inside the same atom family.
    pub fn section_letter(&self, x: usize) -> Option<Atom> {
        match self {
            Atom::Rooted(_) => None,
            Atom::State {
                aut,
                state,
                inverted,
            } => {
                let source_letter = if *inverted {
                    aut.perm(*state)
                        .images()
                        .iter()
                        .position(|&y| y == x)
                        .unwrap()
                } else {
                    x
                };
                let target = aut.target(*state, source_letter);
                if aut.designated_trivial() == Some(target) {
                    None
                } else {
                    Some(Atom::State {
                        aut: aut.clone(),
                        state: target,
                        inverted: *inverted,
                    })
                }
            }
            Atom::Directed {
                data,
                offset,
                inverted,
            } => {
                let entry = data.level(offset + 1);
                if x == 0 {
                    let next = data.canonical_offset(offset + 1);
                    if data.trivial_from(next) {
                        None
                    } else {
                        Some(Atom::Directed {
                            data: data.clone(),
                            offset: next,
                            inverted: *inverted,
                        })
                    }
                } else {
                    let tau = if *inverted {
                        let pre = entry
                            .rho
                            .images()
                            .iter()
                            .position(|&y| y == x)
                            .unwrap();
                        entry.taus[pre - 1].inverse()
                    } else {
                        entry.taus[x - 1].clone()
                    };
                    if tau.is_identity() {
                        None
                    } else {
                        Some(Atom::Rooted(tau))
                    }
                }
            }
        }
    }

    pub fn inverse(&self) -> Atom {
        match self {
            Atom::Rooted(p) => Atom::Rooted(p.inverse()),
            Atom::State {
                aut,
                state,
                inverted,
            } => Atom::State {
                aut: aut.clone(),
                state: *state,
                inverted: !*inverted,
            },
            Atom::Directed {
                data,
                offset,
                inverted,
            } => Atom::Directed {
                data: data.clone(),
                offset: *offset,
                inverted: !*inverted,
            },
        }
    }

    /// True when the atom is the identity by inspection (identity rooted
    /// permutation, designated trivial state, or all-identity directed data).
    pub fn is_syntactically_trivial(&self) -> bool {
        match self {
            Atom::Rooted(p) => p.is_identity(),
            Atom::State { aut, state, .. } => aut.designated_trivial() == Some(*state),
            Atom::Directed { data, offset, .. } => data.trivial_from(*offset),
        }
    }

    pub fn key(&self) -> AtomKey {
        match self {
            Atom::Rooted(p) => AtomKey::Rooted(p.images().to_vec()),
            Atom::State {
                aut,
                state,
                inverted,
            } => AtomKey::State(aut.id(), *state as u32, *inverted),
            Atom::Directed {
                data,
                offset,
                inverted,
            } => AtomKey::Directed(data.id, *offset as u32, *inverted),
        }
    }

    pub fn display_name(&self) -> String {
        match self {
            Atom::Rooted(p) => p.cycle_string(),
            Atom::State {
                aut,
                state,
                inverted,
            } => {
                let name = aut.state_name(*state);
                if *inverted {
                    format!("{name}^-1")
                } else {
                    name.to_string()
                }
            }
            Atom::Directed {
                data,
                offset,
                inverted,
            } => {
                let mut out = data.name.clone();
                if *offset > 0 {
                    out.push_str(&format!(">>{offset}"));
                }
                if *inverted {
                    out.push_str("^-1");
                }
                out
            }
        }
    }
}

impl fmt::Debug for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display_name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_directed() -> Arc<DirectedData> {
        // constant valency 3: ρ = (12), τ₁ = (01), τ₂ = id, self-similar
        let base = ValencySeq::constant(3);
        let level = LevelData {
            rho: Perm::from_cycles(3, &[&[1, 2]]).unwrap(),
            taus: vec![
                Perm::from_cycles(3, &[&[0, 1]]).unwrap(),
                Perm::identity(3),
            ],
        };
        DirectedData::new("h", base, vec![], vec![level]).unwrap()
    }

    #[test]
    fn directed_sections_follow_the_ray() {
        let d = sample_directed();
        let atom = Atom::directed(d.clone());
        // section at 0 is the shifted element (same data, canonical offset 0)
        match atom.section_letter(0) {
            Some(Atom::Directed { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected directed section, got {other:?}"),
        }
        // section at 1 is the rooted τ₁
        match atom.section_letter(1) {
            Some(Atom::Rooted(p)) => assert_eq!(p, Perm::from_cycles(3, &[&[0, 1]]).unwrap()),
            other => panic!("expected rooted section, got {other:?}"),
        }
        // τ₂ is trivial, so the section at 2 drops out
        assert!(atom.section_letter(2).is_none());
    }

    #[test]
    fn inverted_directed_sections() {
        let d = sample_directed();
        let atom = Atom::directed(d).inverse();
        // ρ = (12) is an involution, so permute matches the forward one here
        assert_eq!(atom.permute(1), 2);
        // h⁻¹|_x = (h|_{x·ρ⁻¹})⁻¹: at x = 1, ρ⁻¹(1) = 2 and τ₂ = id → trivial
        assert!(atom.section_letter(1).is_none());
        // at x = 2, ρ⁻¹(2) = 1 → τ₁⁻¹ = (01)
        match atom.section_letter(2) {
            Some(Atom::Rooted(p)) => assert_eq!(p, Perm::from_cycles(3, &[&[0, 1]]).unwrap()),
            other => panic!("expected rooted section, got {other:?}"),
        }
    }

    #[test]
    fn directed_data_validation() {
        let base = ValencySeq::constant(3);
        // ρ moving 0 is rejected
        let bad = LevelData {
            rho: Perm::from_cycles(3, &[&[0, 1]]).unwrap(),
            taus: vec![Perm::identity(3), Perm::identity(3)],
        };
        assert!(matches!(
            DirectedData::new("x", base.clone(), vec![], vec![bad]),
            Err(DirectedDataError::BadRho { .. })
        ));
        // wrong τ count is rejected
        let bad = LevelData {
            rho: Perm::identity(3),
            taus: vec![Perm::identity(3)],
        };
        assert!(matches!(
            DirectedData::new("x", base, vec![], vec![bad]),
            Err(DirectedDataError::BadTaus { .. })
        ));
    }

    #[test]
    fn trivial_from_detects_identity_tails() {
        let base = ValencySeq::constant(2);
        let nontrivial = LevelData {
            rho: Perm::identity(2),
            taus: vec![Perm::from_cycles(2, &[&[0, 1]]).unwrap()],
        };
        let trivial = LevelData::identity(2, 2);
        let d = DirectedData::new("g", base, vec![nontrivial], vec![trivial]).unwrap();
        assert!(!d.trivial_from(0));
        assert!(d.trivial_from(1));
        assert!(d.trivial_from(5));
    }
}
