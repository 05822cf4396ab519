//! Finitely supported probability measures over canonical group-element
//! keys, with exact rational weights, convolution and Shannon entropy.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::element::{AlgebraError, ElementKey, TreeAut, Universe};
use crate::solve::{ratio_to_f64, Ratio};

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("not a probability measure: {0}")]
    NotProbability(String),
    #[error("measures live over different universes or levels")]
    Incompatible,
    #[error("convolution support exceeded the budget of {budget} keys{}",
            .k_reached.map(|k| format!(" (last complete power: {k})")).unwrap_or_default())]
    SupportBudget { budget: usize, k_reached: Option<usize> },
}

/// An exact finitely supported probability measure on the group elements at
/// one level, keyed by canonical element keys.
#[derive(Clone)]
pub struct FiniteMeasure {
    universe: Arc<Universe>,
    shift: usize,
    weights: BTreeMap<ElementKey, Ratio>,
}

impl FiniteMeasure {
    pub fn new(
        universe: Arc<Universe>,
        shift: usize,
        weights: BTreeMap<ElementKey, Ratio>,
    ) -> Result<Self, MeasureError> {
        let shift = universe.base().canonical_shift(shift);
        let mut total = Ratio::zero();
        for (key, w) in &weights {
            if key.shift as usize != shift {
                return Err(MeasureError::Incompatible);
            }
            if *w <= Ratio::zero() {
                return Err(MeasureError::NotProbability(format!(
                    "weight {w} of {} is not positive",
                    universe.key_display(*key)
                )));
            }
            total += w;
        }
        if !total.is_one() {
            return Err(MeasureError::NotProbability(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(FiniteMeasure {
            universe,
            shift,
            weights,
        })
    }

    /// The Dirac measure at one element.
    pub fn delta(g: &TreeAut) -> Result<Self, MeasureError> {
        let key = g.canonical_key()?;
        FiniteMeasure::new(
            g.universe().clone(),
            g.shift(),
            BTreeMap::from([(key, Ratio::one())]),
        )
    }

    pub fn delta_identity(universe: &Arc<Universe>, shift: usize) -> Result<Self, MeasureError> {
        FiniteMeasure::delta(&universe.identity(shift))
    }

    /// Uniform measure on a list of (not necessarily distinct) elements;
    /// weights of equal elements accumulate.
    pub fn uniform(elements: &[TreeAut]) -> Result<Self, MeasureError> {
        if elements.is_empty() {
            return Err(MeasureError::NotProbability("empty support".into()));
        }
        let share = Ratio::new(1.into(), (elements.len() as i64).into());
        let pairs: Vec<(TreeAut, Ratio)> = elements
            .iter()
            .map(|g| (g.clone(), share.clone()))
            .collect();
        FiniteMeasure::from_weighted(&pairs)
    }

    pub fn from_weighted(pairs: &[(TreeAut, Ratio)]) -> Result<Self, MeasureError> {
        let first = pairs
            .first()
            .ok_or_else(|| MeasureError::NotProbability("empty support".into()))?;
        let universe = first.0.universe().clone();
        let shift = first.0.shift();
        let mut weights: BTreeMap<ElementKey, Ratio> = BTreeMap::new();
        for (g, w) in pairs {
            if !Arc::ptr_eq(g.universe(), &universe) || g.shift() != shift {
                return Err(MeasureError::Incompatible);
            }
            *weights.entry(g.canonical_key()?).or_insert_with(Ratio::zero) += w;
        }
        FiniteMeasure::new(universe, shift, weights)
    }

    pub fn universe(&self) -> &Arc<Universe> {
        &self.universe
    }

    pub fn shift(&self) -> usize {
        self.shift
    }

    pub fn weights(&self) -> &BTreeMap<ElementKey, Ratio> {
        &self.weights
    }

    pub fn weight(&self, key: ElementKey) -> Ratio {
        self.weights.get(&key).cloned().unwrap_or_else(Ratio::zero)
    }

    pub fn support_size(&self) -> usize {
        self.weights.len()
    }

    pub fn support(&self) -> impl Iterator<Item = ElementKey> + '_ {
        self.weights.keys().copied()
    }

    /// Shannon entropy in nats.
    pub fn entropy_nats(&self) -> f64 {
        -self
            .weights
            .values()
            .map(|w| {
                let p = ratio_to_f64(w);
                p * p.ln()
            })
            .sum::<f64>()
    }

    /// `μ̂(g) = μ(g⁻¹)`.
    pub fn reflected(&self) -> Result<Self, MeasureError> {
        let mut weights = BTreeMap::new();
        for (k, w) in &self.weights {
            weights.insert(self.universe.inv_key(*k)?, w.clone());
        }
        FiniteMeasure::new(self.universe.clone(), self.shift, weights)
    }

    pub fn is_symmetric(&self) -> Result<bool, MeasureError> {
        Ok(self.reflected()?.weights == self.weights)
    }

    /// Exact convolution: `(μ*ν)(g) = Σ μ(a)ν(b) [ab = g]`, with collisions
    /// resolved through canonical keys.
    pub fn convolve(&self, other: &FiniteMeasure) -> Result<Self, MeasureError> {
        if !Arc::ptr_eq(&self.universe, &other.universe) || self.shift != other.shift {
            return Err(MeasureError::Incompatible);
        }
        let budget = self.universe.budgets().support_keys;
        let mut weights: BTreeMap<ElementKey, Ratio> = BTreeMap::new();
        for (a, wa) in &self.weights {
            for (b, wb) in &other.weights {
                let key = self.universe.mul_keys(*a, *b)?;
                *weights.entry(key).or_insert_with(Ratio::zero) += wa * wb;
                if weights.len() > budget {
                    return Err(MeasureError::SupportBudget {
                        budget,
                        k_reached: None,
                    });
                }
            }
        }
        FiniteMeasure::new(self.universe.clone(), self.shift, weights)
    }

    /// `μ^{*k}` by iterated convolution (`k = 0` gives `δ_e`).
    pub fn power(&self, k: usize) -> Result<Self, MeasureError> {
        let mut acc = FiniteMeasure::delta_identity(&self.universe, self.shift)?;
        for done in 0..k {
            acc = acc.convolve(self).map_err(|e| match e {
                MeasureError::SupportBudget { budget, .. } => MeasureError::SupportBudget {
                    budget,
                    k_reached: Some(done),
                },
                other => other,
            })?;
        }
        Ok(acc)
    }
}

impl std::fmt::Debug for FiniteMeasure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FiniteMeasure{{")?;
        for (i, (k, w)) in self.weights.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}: {}", self.universe.key_display(*k), w)?;
        }
        write!(f, "}}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atom::Atom;
    use crate::automaton::hanoi_automaton;
    use crate::element::Budgets;
    use crate::solve::ratio;
    use crate::valency::ValencySeq;

    fn hanoi_measure() -> (Arc<Universe>, Vec<TreeAut>, FiniteMeasure) {
        let universe = Universe::new(ValencySeq::constant(3), Budgets::default());
        let aut = hanoi_automaton();
        let gens: Vec<TreeAut> = ["a", "b", "c"]
            .iter()
            .map(|n| {
                universe
                    .from_atom(0, Atom::state(aut.clone(), aut.state_index(n).unwrap()))
                    .unwrap()
            })
            .collect();
        let mu = FiniteMeasure::uniform(&gens).unwrap();
        (universe, gens, mu)
    }

    #[test]
    fn delta_entropy_is_zero() {
        let (universe, _, _) = hanoi_measure();
        let d = FiniteMeasure::delta_identity(&universe, 0).unwrap();
        assert_eq!(d.entropy_nats(), 0.0);
        assert_eq!(d.support_size(), 1);
    }

    #[test]
    fn uniform_entropy_is_log_support() {
        let (_, _, mu) = hanoi_measure();
        assert!((mu.entropy_nats() - 3f64.ln()).abs() < 1e-12);
        // non-uniform on the same support is strictly smaller
        let (_, gens, _) = hanoi_measure();
        let skew = FiniteMeasure::from_weighted(&[
            (gens[0].clone(), ratio(1, 2)),
            (gens[1].clone(), ratio(1, 4)),
            (gens[2].clone(), ratio(1, 4)),
        ])
        .unwrap();
        assert!(skew.entropy_nats() < mu.entropy_nats());
    }

    #[test]
    fn convolve_with_delta_is_identity() {
        let (universe, _, mu) = hanoi_measure();
        let d = FiniteMeasure::delta_identity(&universe, 0).unwrap();
        let conv = mu.convolve(&d).unwrap();
        assert_eq!(conv.weights(), mu.weights());
        let conv = d.convolve(&mu).unwrap();
        assert_eq!(conv.weights(), mu.weights());
    }

    #[test]
    fn hanoi_square_has_identity_weight_third() {
        // a² = b² = c² = e, so μ*²(e) = 3·(1/3)² = 1/3
        let (universe, _, mu) = hanoi_measure();
        let sq = mu.power(2).unwrap();
        let e_key = universe.identity(0).canonical_key().unwrap();
        assert_eq!(sq.weight(e_key), ratio(1, 3));
    }

    #[test]
    fn power_support_matches_word_bucketing_oracle() {
        // independent oracle: enumerate all 3^k generator words, bucket them
        // by exact equality through a fresh universe
        let (_, _, mu) = hanoi_measure();
        let oracle_universe = Universe::new(ValencySeq::constant(3), Budgets::default());
        let aut = hanoi_automaton();
        let oracle_gens: Vec<TreeAut> = ["a", "b", "c"]
            .iter()
            .map(|n| {
                oracle_universe
                    .from_atom(0, Atom::state(aut.clone(), aut.state_index(n).unwrap()))
                    .unwrap()
            })
            .collect();
        for k in 0..=6 {
            let power = mu.power(k).unwrap();
            let mut words = vec![oracle_universe.identity(0)];
            for _ in 0..k {
                let mut next = Vec::with_capacity(words.len() * 3);
                for w in &words {
                    for g in &oracle_gens {
                        next.push(w.multiply(g).unwrap());
                    }
                }
                words = next;
            }
            let mut distinct = std::collections::HashSet::new();
            for w in &words {
                distinct.insert(w.canonical_key().unwrap());
            }
            assert_eq!(
                power.support_size(),
                distinct.len(),
                "support size mismatch at k = {k}"
            );
        }
    }

    #[test]
    fn symmetry_checks() {
        let (_, gens, mu) = hanoi_measure();
        assert!(mu.is_symmetric().unwrap());
        let ab = gens[0].multiply(&gens[1]).unwrap();
        let skew = FiniteMeasure::from_weighted(&[
            (ab.clone(), ratio(1, 2)),
            (gens[2].clone(), ratio(1, 2)),
        ])
        .unwrap();
        assert!(!skew.is_symmetric().unwrap());
        let sym = FiniteMeasure::from_weighted(&[
            (ab.clone(), ratio(1, 4)),
            (ab.inverse(), ratio(1, 4)),
            (gens[2].clone(), ratio(1, 2)),
        ])
        .unwrap();
        assert!(sym.is_symmetric().unwrap());
    }

    #[test]
    fn rejects_bad_weights() {
        let (_, gens, _) = hanoi_measure();
        let bad = FiniteMeasure::from_weighted(&[(gens[0].clone(), ratio(1, 2))]);
        assert!(matches!(bad, Err(MeasureError::NotProbability(_))));
    }

    #[test]
    fn support_budget_reports_partial_power() {
        let universe = Universe::new(
            ValencySeq::constant(3),
            Budgets {
                support_keys: 4,
                ..Budgets::default()
            },
        );
        let aut = hanoi_automaton();
        let gens: Vec<TreeAut> = ["a", "b", "c"]
            .iter()
            .map(|n| {
                universe
                    .from_atom(0, Atom::state(aut.clone(), aut.state_index(n).unwrap()))
                    .unwrap()
            })
            .collect();
        let mu = FiniteMeasure::uniform(&gens).unwrap();
        match mu.power(4) {
            Err(MeasureError::SupportBudget {
                budget: 4,
                k_reached: Some(k),
            }) => assert!(k >= 1),
            other => panic!("expected budget error, got {other:?}"),
        }
    }
}
