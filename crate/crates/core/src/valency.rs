//! Valency sequences of spherically homogeneous rooted trees and the words
//! that encode their vertices.
//!
//! A vertex at level `k` is the word `x_k x_{k-1} … x_1` read right to left:
//! position 1 (the rightmost letter) is consumed first by an automorphism,
//! and children of `v` are `xv` for a new leftmost letter `x`.  Internally
//! letters are stored with index 0 = position 1, so "prepend a leftmost
//! letter" is a `push`.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ValencyError {
    #[error("valency entries must be ≥ 1, found {0}")]
    ZeroValency(usize),
    #[error("the periodic part of a valency sequence must be non-empty")]
    EmptyPeriod,
    #[error("letter {letter} at position {position} is outside 0..{valency}")]
    LetterOutOfRange {
        letter: usize,
        position: usize,
        valency: usize,
    },
    #[error("cannot parse vertex string {0:?}")]
    BadVertexString(String),
}

/// The sequence `m_1, m_2, …` of per-level valencies: an explicit head
/// followed by a repeating period.  Every tail shift of such a sequence is
/// again of this shape.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ValencySeq {
    head: Vec<usize>,
    period: Vec<usize>,
    m_star: usize,
}

impl ValencySeq {
    pub fn new(head: Vec<usize>, period: Vec<usize>) -> Result<Arc<Self>, ValencyError> {
        if period.is_empty() {
            return Err(ValencyError::EmptyPeriod);
        }
        if let Some(&bad) = head.iter().chain(period.iter()).find(|&&m| m == 0) {
            return Err(ValencyError::ZeroValency(bad));
        }
        let m_star = head.iter().chain(period.iter()).copied().max().unwrap();
        Ok(Arc::new(ValencySeq {
            head,
            period,
            m_star,
        }))
    }

    /// The constant sequence of a regular rooted tree.
    pub fn constant(m: usize) -> Arc<Self> {
        ValencySeq::new(Vec::new(), vec![m]).expect("constant valency must be ≥ 1")
    }

    /// `m_i` for 1-based level index `i`.
    pub fn valency(&self, i: usize) -> usize {
        assert!(i >= 1, "level indices are 1-based");
        if i <= self.head.len() {
            self.head[i - 1]
        } else {
            self.period[(i - 1 - self.head.len()) % self.period.len()]
        }
    }

    /// `m_i` of the sequence shifted by `shift`.
    pub fn valency_at_shift(&self, shift: usize, i: usize) -> usize {
        self.valency(shift + i)
    }

    pub fn m_star(&self) -> usize {
        self.m_star
    }

    pub fn head_len(&self) -> usize {
        self.head.len()
    }

    pub fn period_len(&self) -> usize {
        self.period.len()
    }

    /// Shifts wrap into the period once past the head: two shifts with the
    /// same canonical value describe identical tail sequences.
    pub fn canonical_shift(&self, shift: usize) -> usize {
        if shift <= self.head.len() {
            shift
        } else {
            self.head.len() + (shift - self.head.len()) % self.period.len()
        }
    }

    /// Drops the first `n` entries, rotating the period as needed.
    pub fn shift(&self, n: usize) -> Arc<ValencySeq> {
        let head: Vec<usize> = self.head.iter().skip(n).copied().collect();
        let period = if n <= self.head.len() {
            self.period.clone()
        } else {
            let rot = (n - self.head.len()) % self.period.len();
            let mut p = self.period[rot..].to_vec();
            p.extend_from_slice(&self.period[..rot]);
            p
        };
        ValencySeq::new(head, period).expect("shift of a valid sequence is valid")
    }

    /// Number of vertices at level `n` below shift `shift`: `m_{s+1}⋯m_{s+n}`.
    pub fn level_size(&self, shift: usize, n: usize) -> u128 {
        (1..=n).map(|i| self.valency(shift + i) as u128).product()
    }
}

impl fmt::Display for ValencySeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head: Vec<String> = self.head.iter().map(|m| m.to_string()).collect();
        let period: Vec<String> = self.period.iter().map(|m| m.to_string()).collect();
        write!(f, "[{}({})^ω]", head.join(" "), period.join(" "))
    }
}

/// A vertex of the tree, `letters[i]` being the letter at position `i+1`
/// (rightmost first).  The empty word is the root.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Vertex {
    letters: Vec<usize>,
}

impl Vertex {
    pub fn root() -> Self {
        Vertex {
            letters: Vec::new(),
        }
    }

    /// Builds a vertex from letters ordered rightmost-first and validates
    /// them against `seq` shifted by `shift`.
    pub fn new(
        letters: Vec<usize>,
        seq: &ValencySeq,
        shift: usize,
    ) -> Result<Self, ValencyError> {
        for (i, &x) in letters.iter().enumerate() {
            let m = seq.valency(shift + i + 1);
            if x >= m {
                return Err(ValencyError::LetterOutOfRange {
                    letter: x,
                    position: i + 1,
                    valency: m,
                });
            }
        }
        Ok(Vertex { letters })
    }

    /// Builds a vertex without range validation (for suffix bookkeeping and
    /// other contexts where letters were already validated).
    pub fn from_letters(letters: Vec<usize>) -> Self {
        Vertex { letters }
    }

    /// Vertex `0…0` at level `n` (the root of level `n`).
    pub fn zeros(n: usize) -> Self {
        Vertex {
            letters: vec![0; n],
        }
    }

    /// The constant word `x…x` at level `n`.
    pub fn repeated(x: usize, n: usize) -> Self {
        Vertex {
            letters: vec![x; n],
        }
    }

    /// Parses the textual left-to-right form, e.g. `"201"` has rightmost
    /// letter 1.  Letters beyond 9 use a dot-separated form `"12.0.3"`.
    pub fn parse(text: &str, seq: &ValencySeq, shift: usize) -> Result<Self, ValencyError> {
        if text.is_empty() || text == "ε" {
            return Ok(Vertex::root());
        }
        let mut letters: Vec<usize> = if text.contains('.') {
            text.split('.')
                .map(|t| {
                    t.parse::<usize>()
                        .map_err(|_| ValencyError::BadVertexString(text.to_string()))
                })
                .collect::<Result<_, _>>()?
        } else {
            text.chars()
                .map(|c| {
                    c.to_digit(10)
                        .map(|d| d as usize)
                        .ok_or_else(|| ValencyError::BadVertexString(text.to_string()))
                })
                .collect::<Result<_, _>>()?
        };
        letters.reverse();
        Vertex::new(letters, seq, shift)
    }

    pub fn level(&self) -> usize {
        self.letters.len()
    }

    /// Letter at 1-based position `i` (position 1 = rightmost).
    pub fn letter(&self, i: usize) -> usize {
        self.letters[i - 1]
    }

    pub fn letters(&self) -> &[usize] {
        &self.letters
    }

    /// The child `xv` of `v` (a new leftmost letter).
    pub fn child(&self, x: usize) -> Vertex {
        let mut letters = self.letters.clone();
        letters.push(x);
        Vertex { letters }
    }

    /// Splits off the first `n` positions: `(bottom n letters, rest)`.
    pub fn split_at_level(&self, n: usize) -> (Vertex, Vertex) {
        let bottom = Vertex {
            letters: self.letters[..n].to_vec(),
        };
        let top = Vertex {
            letters: self.letters[n..].to_vec(),
        };
        (bottom, top)
    }

    /// Textual form, leftmost letter first as written on paper.
    pub fn display(&self) -> String {
        if self.letters.is_empty() {
            return "ε".to_string();
        }
        if self.letters.iter().all(|&x| x < 10) {
            self.letters
                .iter()
                .rev()
                .map(|x| x.to_string())
                .collect::<String>()
        } else {
            self.letters
                .iter()
                .rev()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(".")
        }
    }
}

impl fmt::Debug for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Vertex({})", self.display())
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display())
    }
}

/// Iterates all level-`n` vertices below `shift` in lexicographic order of
/// the stored (rightmost-first) letters.
pub fn level_vertices(seq: &ValencySeq, shift: usize, n: usize) -> Vec<Vertex> {
    let mut out = vec![Vertex::root()];
    for i in 1..=n {
        let m = seq.valency(shift + i);
        let mut next = Vec::with_capacity(out.len() * m);
        for v in &out {
            for x in 0..m {
                next.push(v.child(x));
            }
        }
        out = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_rotates_period() {
        let seq = ValencySeq::new(vec![2, 3], vec![4, 5]).unwrap();
        assert_eq!(seq.valency(1), 2);
        assert_eq!(seq.valency(2), 3);
        assert_eq!(seq.valency(3), 4);
        assert_eq!(seq.valency(6), 5);
        let s3 = seq.shift(3);
        assert_eq!(s3.valency(1), 5);
        assert_eq!(s3.valency(2), 4);
        assert_eq!(s3.m_star(), 5);
        // shifting matches indexing into the original
        for i in 1..10 {
            assert_eq!(s3.valency(i), seq.valency(3 + i));
        }
    }

    #[test]
    fn rejects_zero_valency_allows_one() {
        assert!(ValencySeq::new(vec![0], vec![2]).is_err());
        assert!(ValencySeq::new(vec![1], vec![1]).is_ok());
        assert!(ValencySeq::new(vec![2], vec![]).is_err());
    }

    #[test]
    fn canonical_shift_wraps() {
        let seq = ValencySeq::new(vec![2], vec![3, 4]).unwrap();
        assert_eq!(seq.canonical_shift(0), 0);
        assert_eq!(seq.canonical_shift(1), 1);
        assert_eq!(seq.canonical_shift(2), 2);
        assert_eq!(seq.canonical_shift(3), 1);
        assert_eq!(seq.canonical_shift(4), 2);
        let c = ValencySeq::constant(3);
        for s in 0..5 {
            assert_eq!(c.canonical_shift(s), 0);
        }
    }

    #[test]
    fn vertex_parse_display_roundtrip() {
        let seq = ValencySeq::constant(3);
        let v = Vertex::parse("201", &seq, 0).unwrap();
        assert_eq!(v.letter(1), 1);
        assert_eq!(v.letter(3), 2);
        assert_eq!(v.display(), "201");
        assert_eq!(Vertex::root().display(), "ε");
        assert!(Vertex::parse("3", &seq, 0).is_err());
    }

    #[test]
    fn children_prepend_leftmost_letter() {
        let seq = ValencySeq::constant(2);
        let v = Vertex::parse("01", &seq, 0).unwrap();
        assert_eq!(v.child(1).display(), "101");
    }

    #[test]
    fn level_enumeration_counts() {
        let seq = ValencySeq::new(vec![2], vec![3]).unwrap();
        assert_eq!(level_vertices(&seq, 0, 0).len(), 1);
        assert_eq!(level_vertices(&seq, 0, 1).len(), 2);
        assert_eq!(level_vertices(&seq, 0, 2).len(), 6);
        assert_eq!(seq.level_size(0, 2), 6);
        assert_eq!(seq.level_size(1, 2), 9);
    }
}
