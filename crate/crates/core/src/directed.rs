//! Directed automorphisms (supported along the 0-ray and its neighbours),
//! finite groups of them, the bounded mother group, level section groups and
//! the classification of generator sections at a level.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use thiserror::Error;

use crate::atom::{Atom, DirectedData, DirectedDataError, LevelData};
use crate::element::{AlgebraError, ElementKey, TreeAut, Universe};
use crate::perm::Perm;
use crate::valency::Vertex;

#[derive(Debug, Error)]
pub enum DirectedError {
    #[error("invalid directed element: {0}")]
    Validation(String),
    #[error("group closure exceeded the cap of {cap} elements")]
    NotFiniteWithinBudget { cap: usize },
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Data(#[from] DirectedDataError),
    #[error("no stable section classification up to level {max_level}")]
    NoStableLevel { max_level: usize },
}

/// All permutations of `{0,…,m−1}` in lexicographic image order.
pub fn all_perms(m: usize) -> Vec<Perm> {
    fn rec(m: usize, prefix: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Perm>) {
        if prefix.len() == m {
            out.push(Perm::new(prefix.clone()).unwrap());
            return;
        }
        for x in 0..m {
            if !used[x] {
                used[x] = true;
                prefix.push(x);
                rec(m, prefix, used, out);
                prefix.pop();
                used[x] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(m, &mut Vec::new(), &mut vec![false; m], &mut out);
    out
}

/// Permutations of `{0,…,m−1}` fixing 0, lexicographic.
pub fn zero_fixing_perms(m: usize) -> Vec<Perm> {
    all_perms(m).into_iter().filter(|p| p.apply(0) == 0).collect()
}

/// The element `h_σ̄` for `σ̄ = (σ_1, …, σ_{m_*})`, `σ_i ∈ S_i`: on a word
/// whose first non-zero letter sits at position `i`, it permutes the letter
/// at position `i+1` by `σ_{m_{i+1}}`.  Realized as a directed element with
/// identity `ρ_n` and `τ_{n,x} = σ_{m_{n+1}}` for every `x ≠ 0`.
pub fn h_sigma_bar(
    universe: &Arc<Universe>,
    sigmas: &[Perm],
) -> Result<Arc<DirectedData>, DirectedError> {
    let base = universe.base();
    let m_star = base.m_star();
    if sigmas.len() != m_star {
        return Err(DirectedError::Validation(format!(
            "need {m_star} permutations σ_1..σ_{m_star}, got {}",
            sigmas.len()
        )));
    }
    for (i, s) in sigmas.iter().enumerate() {
        if s.degree() != i + 1 {
            return Err(DirectedError::Validation(format!(
                "σ_{} must lie in S_{}, got degree {}",
                i + 1,
                i + 1,
                s.degree()
            )));
        }
    }
    let level_entry = |n: usize| {
        let m_n = base.valency(n);
        let m_next = base.valency(n + 1);
        LevelData {
            rho: Perm::identity(m_n),
            taus: vec![sigmas[m_next - 1].clone(); m_n - 1],
        }
    };
    let head: Vec<LevelData> = (1..=base.head_len()).map(level_entry).collect();
    let period: Vec<LevelData> = (base.head_len() + 1..=base.head_len() + base.period_len())
        .map(level_entry)
        .collect();
    let name = format!(
        "hsig({})",
        sigmas
            .iter()
            .map(Perm::cycle_string)
            .collect::<Vec<_>>()
            .join(";")
    );
    Ok(DirectedData::new(name, base.clone(), head, period)?)
}

/// Every `h_σ̄` as `σ̄` ranges over `S_1 × ⋯ × S_{m_*}`.
pub fn all_h_sigma(universe: &Arc<Universe>) -> Result<Vec<Arc<DirectedData>>, DirectedError> {
    let m_star = universe.base().m_star();
    let mut tuples: Vec<Vec<Perm>> = vec![Vec::new()];
    for i in 1..=m_star {
        let perms = all_perms(i);
        let mut next = Vec::with_capacity(tuples.len() * perms.len());
        for t in &tuples {
            for p in &perms {
                let mut t = t.clone();
                t.push(p.clone());
                next.push(t);
            }
        }
        tuples = next;
    }
    tuples
        .iter()
        .map(|t| h_sigma_bar(universe, t))
        .collect()
}

/// Effective wreath-recursion data of a possibly inverted, shifted directed
/// element at its `n`-th level: for the inverse, `ρ' = ρ⁻¹` and
/// `τ'_x = τ_{x·ρ⁻¹}⁻¹`.
pub fn effective_level(
    data: &DirectedData,
    offset: usize,
    inverted: bool,
    n: usize,
) -> LevelData {
    let entry = data.level(offset + n);
    if !inverted {
        entry.clone()
    } else {
        let rho_inv = entry.rho.inverse();
        let m = entry.rho.degree();
        let taus = (1..m)
            .map(|x| entry.taus[rho_inv.apply(x) - 1].inverse())
            .collect();
        LevelData {
            rho: rho_inv,
            taus,
        }
    }
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

/// Exact product of a word of directed atoms at a common shift, computed on
/// the wreath-recursion data: `ρ = ρ₁ρ₂` and `τ_x = τ₁,ₓ · τ₂,ₓ·ρ₁`.
/// Levels at or below the shift are padded with identities (they are never
/// consumed at that shift).  This is the algebraic route dual to word
/// multiplication and is cross-validated against it.
pub fn directed_product(
    universe: &Arc<Universe>,
    shift: usize,
    factors: &[(Arc<DirectedData>, usize, bool)],
) -> Result<Arc<DirectedData>, DirectedError> {
    let base = universe.base();
    if factors.is_empty() {
        let head: Vec<LevelData> = (1..=base.head_len())
            .map(|n| LevelData::identity(base.valency(n), base.valency(n + 1)))
            .collect();
        let period: Vec<LevelData> = (base.head_len() + 1
            ..=base.head_len() + base.period_len())
            .map(|n| LevelData::identity(base.valency(n), base.valency(n + 1)))
            .collect();
        return Ok(DirectedData::new("e", base.clone(), head, period)?);
    }
    let mut head_len = base.head_len().max(shift);
    let mut period_len = base.period_len();
    for (data, offset, _) in factors {
        // levels consumed at shift s: data.level(offset + n) for n ≥ 1
        let local_head = data.head_len().saturating_sub(*offset);
        head_len = head_len.max(shift + local_head);
        period_len = lcm(period_len, data.period_len());
    }
    let level_entry = |abs: usize| -> LevelData {
        // absolute tree level `abs`; the product is consumed from shift+1 up
        let m_n = base.valency(abs);
        let m_next = base.valency(abs + 1);
        if abs <= shift {
            return LevelData::identity(m_n, m_next);
        }
        let n = abs - shift;
        let parts: Vec<LevelData> = factors
            .iter()
            .map(|(d, o, inv)| effective_level(d, *o, *inv, n))
            .collect();
        let mut rho = Perm::identity(m_n);
        for p in &parts {
            rho = rho.then(&p.rho);
        }
        let taus = (1..m_n)
            .map(|x| {
                let mut tau = Perm::identity(m_next);
                let mut cur = x;
                for p in &parts {
                    tau = tau.then(&p.taus[cur - 1]);
                    cur = p.rho.apply(cur);
                }
                tau
            })
            .collect();
        LevelData { rho, taus }
    };
    let head: Vec<LevelData> = (1..=head_len).map(level_entry).collect();
    let period: Vec<LevelData> = (head_len + 1..=head_len + period_len)
        .map(level_entry)
        .collect();
    Ok(DirectedData::new("prod", base.clone(), head, period)?)
}

/// Exact equality of two possibly shifted/inverted directed elements by
/// comparing effective data over the heads plus one common period.
pub fn directed_equal(
    a: (&DirectedData, usize, bool),
    b: (&DirectedData, usize, bool),
) -> bool {
    let ha = a.0.head_len().saturating_sub(a.1);
    let hb = b.0.head_len().saturating_sub(b.1);
    let horizon = ha.max(hb) + lcm(a.0.period_len(), b.0.period_len());
    (1..=horizon).all(|n| {
        effective_level(a.0, a.1, a.2, n) == effective_level(b.0, b.1, b.2, n)
    })
}

/// A finite set of tree automorphisms closed under product and inverse,
/// with a designated generating subset.
#[derive(Clone)]
pub struct FinitePermGroup {
    elements: Vec<TreeAut>,
    keys: Vec<ElementKey>,
    key_set: HashSet<ElementKey>,
    generators: Vec<usize>,
    shift: usize,
}

impl FinitePermGroup {
    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn shift(&self) -> usize {
        self.shift
    }

    pub fn elements(&self) -> &[TreeAut] {
        &self.elements
    }

    pub fn keys(&self) -> &[ElementKey] {
        &self.keys
    }

    pub fn generators(&self) -> impl Iterator<Item = &TreeAut> {
        self.generators.iter().map(|&i| &self.elements[i])
    }

    pub fn contains_key(&self, key: ElementKey) -> bool {
        self.key_set.contains(&key)
    }

    pub fn contains(&self, g: &TreeAut) -> Result<bool, AlgebraError> {
        Ok(self.key_set.contains(&g.canonical_key()?))
    }

    /// Non-identity elements, handy as a symmetric generating set.
    pub fn nonidentity_elements(&self) -> Vec<TreeAut> {
        self.elements
            .iter()
            .zip(&self.keys)
            .filter(|(_, k)| !k.is_identity())
            .map(|(g, _)| g.clone())
            .collect()
    }

    /// When every element is a rooted permutation (or the identity), the
    /// group as a set of `Perm`s.
    pub fn rooted_perms(&self) -> Option<Vec<Perm>> {
        let m = self.elements.first()?.universe().base().valency(self.shift + 1);
        self.elements
            .iter()
            .map(|g| match g.word() {
                [] => Some(Perm::identity(m)),
                [Atom::Rooted(p)] => Some(p.clone()),
                _ => None,
            })
            .collect()
    }

    /// Checks the closure/identity invariants exhaustively.
    pub fn verify_closure(&self) -> Result<bool, AlgebraError> {
        let universe = match self.elements.first() {
            Some(g) => g.universe().clone(),
            None => return Ok(false),
        };
        if !self.key_set.contains(&ElementKey {
            shift: self.shift as u32,
            id: 0,
        }) {
            return Ok(false);
        }
        for &a in &self.keys {
            for &b in &self.keys {
                if !self.key_set.contains(&universe.mul_keys(a, b)?) {
                    return Ok(false);
                }
            }
            if !self.key_set.contains(&universe.inv_key(a)?) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Breadth-first closure of a generating set under products, with equality
/// decided through canonical keys (exact).  The identity is always listed
/// first.  Exceeding the configured cap reports an error rather than
/// looping.
pub fn close_group(
    universe: &Arc<Universe>,
    shift: usize,
    gens: &[TreeAut],
) -> Result<FinitePermGroup, DirectedError> {
    let cap = universe.budgets().closure_cap;
    let shift = universe.base().canonical_shift(shift);
    // include inverses so the closure is a group even for non-symmetric gens
    let mut gen_list: Vec<TreeAut> = Vec::new();
    for g in gens {
        gen_list.push(g.clone());
        gen_list.push(g.inverse());
    }
    let identity = universe.identity(shift);
    let mut elements = vec![identity.clone()];
    let mut keys = vec![identity.canonical_key()?];
    let mut key_set: HashSet<ElementKey> = keys.iter().copied().collect();
    let mut frontier = vec![0usize];
    while let Some(idx) = frontier.pop() {
        let g = elements[idx].clone();
        for s in &gen_list {
            let product = g.multiply(s)?;
            let key = product.canonical_key()?;
            if key_set.insert(key) {
                if elements.len() >= cap {
                    return Err(DirectedError::NotFiniteWithinBudget { cap });
                }
                // keep the canonical (shortest known) representative
                elements.push(product.universe().key_rep(key));
                keys.push(key);
                frontier.push(elements.len() - 1);
            }
        }
    }
    // designate the original gens by index
    let mut generators = Vec::new();
    for g in gens {
        let key = g.canonical_key()?;
        if let Some(pos) = keys.iter().position(|&k| k == key) {
            if !generators.contains(&pos) {
                generators.push(pos);
            }
        }
    }
    Ok(FinitePermGroup {
        elements,
        keys,
        key_set,
        generators,
        shift,
    })
}

/// The bounded mother group data over a constant alphabet `m ≥ 2`:
/// `B` is all rooted permutations of `S_m`; `A` is all self-similar directed
/// elements `h = (h, τ_1, …, τ_{m−1})ρ`, enumerated directly from their
/// `(ρ, τ̄)` parameters, `|A| = (m!)^{m−1}·(m−1)!`.
pub fn mother_group(
    universe: &Arc<Universe>,
    m: usize,
) -> Result<(FinitePermGroup, FinitePermGroup), DirectedError> {
    if m < 2 {
        return Err(DirectedError::Validation(format!(
            "mother group needs alphabet size ≥ 2, got {m}"
        )));
    }
    if !universe.base().is_constant_from(0, m) {
        return Err(DirectedError::Validation(format!(
            "mother group over {m} letters needs the constant valency sequence"
        )));
    }
    let rhos = zero_fixing_perms(m);
    let taus = all_perms(m);
    // A: every (ρ, τ_1…τ_{m−1}) combination, self-similar at 0
    let mut a_elements: Vec<TreeAut> = Vec::new();
    let mut tau_choice = vec![0usize; m - 1];
    for rho in &rhos {
        loop {
            let entry = LevelData {
                rho: rho.clone(),
                taus: tau_choice.iter().map(|&t| taus[t].clone()).collect(),
            };
            let name = format!(
                "h({};{})",
                rho.cycle_string(),
                entry
                    .taus
                    .iter()
                    .map(Perm::cycle_string)
                    .collect::<Vec<_>>()
                    .join(",")
            );
            let data = DirectedData::new(name, universe.base().clone(), vec![], vec![entry])?;
            a_elements.push(universe.from_atom(0, Atom::directed(data))?);
            // advance the τ multi-index
            let mut carry = true;
            for slot in tau_choice.iter_mut() {
                if carry {
                    *slot += 1;
                    if *slot == taus.len() {
                        *slot = 0;
                    } else {
                        carry = false;
                    }
                }
            }
            if carry {
                break;
            }
        }
    }
    let a_group = listed_group(universe, 0, a_elements)?;
    // B: all rooted permutations of S_m
    let b_elements: Vec<TreeAut> = all_perms(m)
        .into_iter()
        .map(|p| universe.from_atom(0, Atom::rooted(p)))
        .collect::<Result<_, _>>()?;
    let b_group = listed_group(universe, 0, b_elements)?;
    Ok((a_group, b_group))
}

/// Wraps an explicitly listed, already closed element set as a group,
/// deduplicating by canonical key and pulling the identity to index 0.
fn listed_group(
    universe: &Arc<Universe>,
    shift: usize,
    list: Vec<TreeAut>,
) -> Result<FinitePermGroup, DirectedError> {
    let shift = universe.base().canonical_shift(shift);
    let identity = universe.identity(shift);
    let mut elements = vec![identity.clone()];
    let mut keys = vec![identity.canonical_key()?];
    let mut key_set: HashSet<ElementKey> = keys.iter().copied().collect();
    for g in list {
        let key = g.canonical_key()?;
        if key_set.insert(key) {
            elements.push(g);
            keys.push(key);
        }
    }
    let generators = (0..keys.len()).collect();
    Ok(FinitePermGroup {
        elements,
        keys,
        key_set,
        generators,
        shift,
    })
}

/// Adjoins every `h_σ̄` to `A` and closes; the paper's standing assumption
/// made explicit.
pub fn augment_with_h_sigma(
    universe: &Arc<Universe>,
    a: &FinitePermGroup,
) -> Result<FinitePermGroup, DirectedError> {
    let mut gens: Vec<TreeAut> = a.elements().to_vec();
    for data in all_h_sigma(universe)? {
        gens.push(universe.from_atom(a.shift(), Atom::directed_at(data, a.shift()))?);
    }
    close_group(universe, a.shift(), &gens)
}

/// The level-`n` section groups of `(A, B)`:
/// `A_n = ⟨a|_{0…0}⟩` over the shifted tree and `B_n = ⟨a|_{x0…0} : x ≠ 0⟩`
/// rooted on the next alphabet.  For `n = 0` returns `(A, B)` unchanged.
pub fn section_groups(
    universe: &Arc<Universe>,
    a: &FinitePermGroup,
    b: &FinitePermGroup,
    n: usize,
) -> Result<(FinitePermGroup, FinitePermGroup), DirectedError> {
    if n == 0 {
        return Ok((a.clone(), b.clone()));
    }
    let ray = Vertex::zeros(n);
    let mut a_gens = Vec::new();
    for g in a.elements() {
        a_gens.push(g.section(&ray)?);
    }
    let a_n = close_group(universe, a.shift() + n, &a_gens)?;
    let mut b_gens = Vec::new();
    for g in a.elements() {
        for x in 1..universe.base().valency_at_shift(a.shift(), n) {
            let v = Vertex::zeros(n - 1).child(x);
            b_gens.push(g.section(&v)?);
        }
    }
    let b_n = close_group(universe, a.shift() + n, &b_gens)?;
    Ok((a_n, b_n))
}

/// Classification of one generator section at one vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectionClass {
    /// Section lies in `A_n` (vertex in `𝔸_n`).
    Directed,
    /// Section lies in `B_n` (vertex in `𝔹_n`).
    Rooted,
    /// Section lies in neither group: the level is not yet stable.
    Unstable,
}

#[derive(Clone)]
pub struct SectionEntry {
    pub generator: usize,
    pub vertex: Vertex,
    pub section: TreeAut,
    pub class: SectionClass,
}

/// The vertices of one level carrying non-trivial generator sections,
/// classified into the `𝔸_n`/`𝔹_n` split of the section lemma.
#[derive(Clone)]
pub struct SectionClassification {
    pub level: usize,
    pub class_a: Vec<Vertex>,
    pub class_b: Vec<Vertex>,
    pub unclassified: Vec<Vertex>,
    pub entries: Vec<SectionEntry>,
    /// Suffixes `w_j` of `𝔸_n`-vertices after stripping leading zeros.
    pub suffixes_a: BTreeSet<Vertex>,
    /// Suffixes of `𝔹_n`-vertices after stripping the non-zero top letter
    /// and the following zeros.
    pub suffixes_b: BTreeSet<Vertex>,
}

impl SectionClassification {
    pub fn is_fully_classified(&self) -> bool {
        self.unclassified.is_empty()
    }

    /// |𝕎_n|: vertices carrying any non-trivial section.
    pub fn support_size(&self) -> usize {
        self.class_a.len() + self.class_b.len() + self.unclassified.len()
    }
}

/// Tracks, level by level, the vertices with a non-trivial section of some
/// generator, without ever scanning the whole level.  Returns for each
/// level-`n` vertex the list of `(generator index, section)`.
pub fn nontrivial_sections(
    universe: &Arc<Universe>,
    gens: &[TreeAut],
    n: usize,
) -> Result<BTreeMap<Vertex, Vec<(usize, TreeAut)>>, DirectedError> {
    let shift = gens.first().map_or(0, TreeAut::shift);
    let mut current: BTreeMap<Vertex, Vec<(usize, TreeAut)>> = BTreeMap::new();
    let root_entries: Vec<(usize, TreeAut)> = gens
        .iter()
        .enumerate()
        .map(|(i, g)| Ok::<_, DirectedError>((i, g.clone())))
        .collect::<Result<_, _>>()?;
    let mut nontrivial_root = Vec::new();
    for (i, g) in root_entries {
        if !g.is_trivial()? {
            nontrivial_root.push((i, g));
        }
    }
    if !nontrivial_root.is_empty() {
        current.insert(Vertex::root(), nontrivial_root);
    }
    for level in 0..n {
        let m = universe.base().valency_at_shift(shift, level + 1);
        let mut next: BTreeMap<Vertex, Vec<(usize, TreeAut)>> = BTreeMap::new();
        for (v, list) in &current {
            for x in 0..m {
                let child = v.child(x);
                let step = Vertex::new(
                    vec![x],
                    universe.base(),
                    universe.base().canonical_shift(shift + level),
                )
                .map_err(AlgebraError::InvalidVertex)?;
                let mut entries = Vec::new();
                for (i, g) in list {
                    let s = g.section(&step)?;
                    if !s.is_trivial()? {
                        entries.push((*i, s));
                    }
                }
                if !entries.is_empty() {
                    next.insert(child, entries);
                }
            }
        }
        current = next;
    }
    Ok(current)
}

/// Suffix `w_j` of a classified vertex: optionally drop the non-zero top
/// letter, then strip the run of zeros below it.
fn suffix_of(v: &Vertex, drop_top: bool) -> Vertex {
    let mut letters = v.letters().to_vec();
    if drop_top {
        letters.pop();
    }
    while letters.last() == Some(&0) {
        letters.pop();
    }
    Vertex::from_letters(letters)
}

/// Classifies the level-`n` sections of the generators `S` against the
/// section groups `A_n`, `B_n`: a vertex whose top letter is 0 must carry
/// only `A_n`-sections (class `𝔸_n`), a vertex with non-zero top letter only
/// `B_n`-sections (class `𝔹_n`).  Sections violating this are reported as
/// unstable, not as errors.
pub fn classify_sections(
    universe: &Arc<Universe>,
    gens: &[TreeAut],
    a: &FinitePermGroup,
    b: &FinitePermGroup,
    n: usize,
) -> Result<SectionClassification, DirectedError> {
    assert!(n >= 1, "classification starts at level 1");
    let (a_n, b_n) = section_groups(universe, a, b, n)?;
    let sections = nontrivial_sections(universe, gens, n)?;
    let mut entries = Vec::new();
    let mut class_a = Vec::new();
    let mut class_b = Vec::new();
    let mut unclassified = Vec::new();
    let mut suffixes_a = BTreeSet::new();
    let mut suffixes_b = BTreeSet::new();
    for (v, list) in &sections {
        let top_is_zero = v.letters().last() == Some(&0);
        let mut ok = true;
        let mut vertex_entries = Vec::new();
        for (i, s) in list {
            let key = s.canonical_key()?;
            let class = if top_is_zero && a_n.contains_key(key) {
                SectionClass::Directed
            } else if !top_is_zero && b_n.contains_key(key) {
                SectionClass::Rooted
            } else {
                ok = false;
                SectionClass::Unstable
            };
            vertex_entries.push(SectionEntry {
                generator: *i,
                vertex: v.clone(),
                section: s.clone(),
                class,
            });
        }
        entries.extend(vertex_entries);
        if !ok {
            unclassified.push(v.clone());
        } else if top_is_zero {
            suffixes_a.insert(suffix_of(v, false));
            class_a.push(v.clone());
        } else {
            suffixes_b.insert(suffix_of(v, true));
            class_b.push(v.clone());
        }
    }
    Ok(SectionClassification {
        level: n,
        class_a,
        class_b,
        unclassified,
        entries,
        suffixes_a,
        suffixes_b,
    })
}

/// A stable classification threshold: levels `n₀+1 … n₀+3` are fully
/// classified with identical suffix structure and support size.
pub struct StabilityReport {
    pub n0: usize,
    pub support_size: usize,
    pub suffixes_a: BTreeSet<Vertex>,
    pub suffixes_b: BTreeSet<Vertex>,
    pub levels: BTreeMap<usize, SectionClassification>,
}

/// Finds the least `n₀` whose following three levels are classified and
/// structurally stable, probing up to the configured maximum level.
pub fn detect_threshold(
    universe: &Arc<Universe>,
    gens: &[TreeAut],
    a: &FinitePermGroup,
    b: &FinitePermGroup,
) -> Result<StabilityReport, DirectedError> {
    let max_level = universe.budgets().classify_max_level;
    let mut cache: BTreeMap<usize, SectionClassification> = BTreeMap::new();
    for n0 in 0..max_level.saturating_sub(2) {
        for n in n0 + 1..=n0 + 3 {
            if !cache.contains_key(&n) {
                let c = classify_sections(universe, gens, a, b, n)?;
                cache.insert(n, c);
            }
        }
        let window: Vec<&SectionClassification> =
            (n0 + 1..=n0 + 3).map(|n| &cache[&n]).collect();
        let stable = window.iter().all(|c| c.is_fully_classified())
            && window.windows(2).all(|w| {
                w[0].suffixes_a == w[1].suffixes_a
                    && w[0].suffixes_b == w[1].suffixes_b
                    && w[0].support_size() == w[1].support_size()
            });
        if stable {
            let first = &cache[&(n0 + 1)];
            return Ok(StabilityReport {
                n0,
                support_size: first.support_size(),
                suffixes_a: first.suffixes_a.clone(),
                suffixes_b: first.suffixes_b.clone(),
                levels: cache,
            });
        }
    }
    Err(DirectedError::NoStableLevel { max_level })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::element::Budgets;
    use crate::valency::ValencySeq;

    fn universe3() -> Arc<Universe> {
        Universe::new(ValencySeq::constant(3), Budgets::default())
    }

    #[test]
    fn h_sigma_identity_tuple_is_trivial() {
        let u = universe3();
        let sig = vec![Perm::identity(1), Perm::identity(2), Perm::identity(3)];
        let d = h_sigma_bar(&u, &sig).unwrap();
        let g = u.from_atom(0, Atom::directed(d)).unwrap();
        assert!(g.is_trivial().unwrap());
    }

    #[test]
    fn h_sigma_moves_letter_after_first_nonzero() {
        let u = universe3();
        let sig = vec![
            Perm::identity(1),
            Perm::identity(2),
            Perm::from_cycles(3, &[&[0, 1]]).unwrap(),
        ];
        let d = h_sigma_bar(&u, &sig).unwrap();
        let g = u.from_atom(0, Atom::directed(d)).unwrap();
        let v = Vertex::parse("201", u.base(), 0).unwrap();
        assert_eq!(g.apply(&v).unwrap().display(), "211");
        // all-zero words are fixed
        let z = Vertex::zeros(4);
        assert_eq!(g.apply(&z).unwrap(), z);
    }

    #[test]
    fn h_sigma_validation() {
        let u = universe3();
        let bad = vec![Perm::identity(2), Perm::identity(2), Perm::identity(3)];
        assert!(matches!(
            h_sigma_bar(&u, &bad),
            Err(DirectedError::Validation(_))
        ));
    }

    #[test]
    fn h_sigma_set_closes_to_s3() {
        // constant m = 3: only σ₃ acts, so the h_σ̄ group is S₃
        let u = universe3();
        let gens: Vec<TreeAut> = all_h_sigma(&u)
            .unwrap()
            .into_iter()
            .map(|d| u.from_atom(0, Atom::directed(d)).unwrap())
            .collect();
        assert_eq!(gens.len(), 1 * 2 * 6);
        let group = close_group(&u, 0, &gens).unwrap();
        assert_eq!(group.order(), 6);
        assert!(group.verify_closure().unwrap());
    }

    #[test]
    fn close_group_of_identity() {
        let u = universe3();
        let group = close_group(&u, 0, &[u.identity(0)]).unwrap();
        assert_eq!(group.order(), 1);
    }

    #[test]
    fn close_group_rooted_s3() {
        let u = universe3();
        let gens = vec![
            u.from_atom(0, Atom::rooted(Perm::from_cycles(3, &[&[0, 1]]).unwrap()))
                .unwrap(),
            u.from_atom(0, Atom::rooted(Perm::from_cycles(3, &[&[1, 2]]).unwrap()))
                .unwrap(),
        ];
        let group = close_group(&u, 0, &gens).unwrap();
        assert_eq!(group.order(), 6);
        let perms = group.rooted_perms().unwrap();
        assert_eq!(perms.len(), 6);
    }

    #[test]
    fn closure_cap_errors_out() {
        let u = Universe::new(
            ValencySeq::constant(3),
            Budgets {
                closure_cap: 3,
                ..Budgets::default()
            },
        );
        let gens = vec![
            u.from_atom(0, Atom::rooted(Perm::from_cycles(3, &[&[0, 1]]).unwrap()))
                .unwrap(),
            u.from_atom(0, Atom::rooted(Perm::from_cycles(3, &[&[1, 2]]).unwrap()))
                .unwrap(),
        ];
        assert!(matches!(
            close_group(&u, 0, &gens),
            Err(DirectedError::NotFiniteWithinBudget { cap: 3 })
        ));
    }

    #[test]
    fn mother_group_orders() {
        let u2 = Universe::new(ValencySeq::constant(2), Budgets::default());
        let (a2, b2) = mother_group(&u2, 2).unwrap();
        assert_eq!(a2.order(), 2);
        assert_eq!(b2.order(), 2);
        let u3 = universe3();
        let (a3, b3) = mother_group(&u3, 3).unwrap();
        assert_eq!(a3.order(), 72);
        assert_eq!(b3.order(), 6);
    }

    #[test]
    fn mother_elements_are_self_similar() {
        let u = universe3();
        let (a, _) = mother_group(&u, 3).unwrap();
        let zero = Vertex::zeros(1);
        for g in a.elements() {
            assert!(g.section(&zero).unwrap().equals(g).unwrap());
        }
    }

    #[test]
    fn mother3_closure_from_small_generating_set() {
        // three parameter generators close to the full 72-element group
        let u = universe3();
        let base = u.base().clone();
        let mk = |rho: Perm, t1: Perm, t2: Perm| {
            let data = DirectedData::new(
                "g",
                base.clone(),
                vec![],
                vec![LevelData {
                    rho,
                    taus: vec![t1, t2],
                }],
            )
            .unwrap();
            u.from_atom(0, Atom::directed(data)).unwrap()
        };
        let gens = vec![
            mk(
                Perm::from_cycles(3, &[&[1, 2]]).unwrap(),
                Perm::identity(3),
                Perm::identity(3),
            ),
            mk(
                Perm::identity(3),
                Perm::from_cycles(3, &[&[0, 1]]).unwrap(),
                Perm::identity(3),
            ),
            mk(
                Perm::identity(3),
                Perm::from_cycles(3, &[&[1, 2]]).unwrap(),
                Perm::identity(3),
            ),
        ];
        let group = close_group(&u, 0, &gens).unwrap();
        assert_eq!(group.order(), 72);
    }

    #[test]
    fn directed_product_matches_word_multiplication() {
        let u = universe3();
        let (a, _) = mother_group(&u, 3).unwrap();
        let g = &a.elements()[5];
        let h = &a.elements()[17];
        let (gd, go, gi) = match &g.word()[0] {
            Atom::Directed {
                data,
                offset,
                inverted,
            } => (data.clone(), *offset, *inverted),
            _ => unreachable!(),
        };
        let (hd, ho, hi) = match &h.word()[0] {
            Atom::Directed {
                data,
                offset,
                inverted,
            } => (data.clone(), *offset, *inverted),
            _ => unreachable!(),
        };
        let prod_data =
            directed_product(&u, 0, &[(gd.clone(), go, gi), (hd.clone(), ho, hi)]).unwrap();
        let via_data = u.from_atom(0, Atom::directed(prod_data)).unwrap();
        let via_words = g.multiply(h).unwrap();
        assert!(via_data.equals(&via_words).unwrap());
        // directed_equal agrees with word-level equality on element pairs
        assert_eq!(
            directed_equal((&gd, go, gi), (&hd, ho, hi)),
            g.equals(h).unwrap()
        );
        assert!(directed_equal((&gd, go, gi), (&gd, go, gi)));
    }

    #[test]
    fn section_groups_of_mother3() {
        let u = universe3();
        let (a, b) = mother_group(&u, 3).unwrap();
        let (a0, b0) = section_groups(&u, &a, &b, 0).unwrap();
        assert_eq!(a0.order(), a.order());
        assert_eq!(b0.order(), b.order());
        for n in 1..=4 {
            let (a_n, b_n) = section_groups(&u, &a, &b, n).unwrap();
            // self-similarity forces A_n = A; the τ's generate all of S_3
            assert_eq!(a_n.order(), 72);
            assert_eq!(b_n.order(), 6);
        }
    }

    #[test]
    fn section_groups_remark_second_formula() {
        // B_n from A's level-n ray neighbours equals B_n from first-level
        // sections of A_{n−1}
        let u = universe3();
        let (a, b) = mother_group(&u, 3).unwrap();
        for n in 1..=4 {
            let (_, b_n) = section_groups(&u, &a, &b, n).unwrap();
            let (a_prev, _) = section_groups(&u, &a, &b, n - 1).unwrap();
            let mut gens = Vec::new();
            for g in a_prev.elements() {
                for x in 1..3 {
                    let v = Vertex::zeros(0).child(x);
                    gens.push(g.section(&v).unwrap());
                }
            }
            let b_alt = close_group(&u, n, &gens).unwrap();
            assert_eq!(b_n.order(), b_alt.order());
            for k in b_alt.keys() {
                assert!(b_n.contains_key(*k));
            }
        }
    }

    #[test]
    fn directed_section_structure() {
        // sections of a directed element: shifted along the ray, rooted τ at
        // the neighbours, trivial elsewhere (levels ≤ 4)
        let u = universe3();
        let (a, _) = mother_group(&u, 3).unwrap();
        let g = a
            .elements()
            .iter()
            .find(|g| !g.word().is_empty())
            .unwrap();
        for n in 1..=4 {
            for v in crate::valency::level_vertices(u.base(), 0, n) {
                let s = g.section(&v).unwrap();
                let is_ray = v.letters().iter().all(|&x| x == 0);
                let is_neighbour = v.letters().last().map(|&x| x != 0).unwrap_or(false)
                    && v.letters()[..n - 1].iter().all(|&x| x == 0);
                if is_ray {
                    assert!(s.equals(g).unwrap());
                } else if is_neighbour {
                    match s.word() {
                        [] => {} // τ may be trivial
                        [Atom::Rooted(_)] => {}
                        w => panic!("neighbour section should be rooted, got {w:?}"),
                    }
                } else {
                    assert!(s.is_trivial().unwrap(), "section at {v} should be trivial");
                }
            }
        }
    }

    #[test]
    fn classify_mother3_standard_generators() {
        let u = universe3();
        let (a, b) = mother_group(&u, 3).unwrap();
        let mut gens = a.nonidentity_elements();
        gens.extend(b.nonidentity_elements());
        let report = detect_threshold(&u, &gens, &a, &b).unwrap();
        assert_eq!(report.n0, 0);
        // 𝕎_n = {0ⁿ} ∪ {x0ⁿ⁻¹}: three vertices, suffixes are all ε
        assert_eq!(report.support_size, 3);
        assert!(report.suffixes_a.iter().all(|s| s.level() == 0));
        assert!(report.suffixes_b.iter().all(|s| s.level() == 0));
        for (n, c) in &report.levels {
            assert!(c.is_fully_classified());
            assert_eq!(c.class_a, vec![Vertex::zeros(*n)]);
            assert_eq!(c.class_b.len(), 2);
        }
    }

    #[test]
    fn classify_products_of_two_generators() {
        // S = {a·b}: sections stabilize with n₀ ≤ 1
        let u = universe3();
        let (a, b) = mother_group(&u, 3).unwrap();
        let mut gens = Vec::new();
        for g in a.nonidentity_elements().iter().take(6) {
            for h in b.nonidentity_elements().iter().take(2) {
                gens.push(g.multiply(h).unwrap());
            }
        }
        let report = detect_threshold(&u, &gens, &a, &b).unwrap();
        assert!(report.n0 <= 1, "n₀ = {} should be ≤ 1", report.n0);
        // |𝕎_n| constant over the stable window and one level beyond
        let deeper = classify_sections(&u, &gens, &a, &b, report.n0 + 4).unwrap();
        assert!(deeper.is_fully_classified());
        assert_eq!(deeper.support_size(), report.support_size);
    }
}
