//! Finite invertible automata over a fixed alphabet: validation, text
//! parsing, state reduction, Moore diagrams and the activity-degree
//! classification read off the cycle structure of the Moore diagram.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::atom::fresh_id;
use crate::perm::Perm;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AutomatonError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("state {state}: root permutation is not a bijection")]
    NonBijectivePerm { state: String },
    #[error("state {state}: transition on letter {letter} targets unknown state {target}")]
    DanglingTransition {
        state: String,
        letter: usize,
        target: String,
    },
    #[error("state {state}: {what} does not match alphabet size {alphabet}")]
    AlphabetMismatch {
        state: String,
        what: String,
        alphabet: usize,
    },
    #[error("duplicate state name {0}")]
    DuplicateState(String),
    #[error("automaton needs at least one state")]
    NoStates,
    #[error("unknown state {0}")]
    UnknownState(String),
}

#[derive(Debug, Clone)]
pub struct AutState {
    pub name: String,
    pub perm: Perm,
    pub to: Vec<usize>,
}

/// A finite invertible automaton: per-state root permutation `σ_a` and
/// transition map `(a, x) ↦ a_x`.
#[derive(Debug)]
pub struct FiniteAutomaton {
    id: u64,
    alphabet: usize,
    states: Vec<AutState>,
    trivial: Option<usize>,
}

impl FiniteAutomaton {
    pub fn new(alphabet: usize, states: Vec<AutState>) -> Result<Arc<Self>, AutomatonError> {
        if states.is_empty() {
            return Err(AutomatonError::NoStates);
        }
        let mut names = HashMap::new();
        for (i, s) in states.iter().enumerate() {
            if names.insert(s.name.clone(), i).is_some() {
                return Err(AutomatonError::DuplicateState(s.name.clone()));
            }
            if s.perm.degree() != alphabet {
                return Err(AutomatonError::AlphabetMismatch {
                    state: s.name.clone(),
                    what: format!("permutation degree {}", s.perm.degree()),
                    alphabet,
                });
            }
            if s.to.len() != alphabet {
                return Err(AutomatonError::AlphabetMismatch {
                    state: s.name.clone(),
                    what: format!("{} transitions", s.to.len()),
                    alphabet,
                });
            }
            for (x, &t) in s.to.iter().enumerate() {
                if t >= states.len() {
                    return Err(AutomatonError::DanglingTransition {
                        state: s.name.clone(),
                        letter: x,
                        target: format!("#{t}"),
                    });
                }
            }
        }
        // designate the first syntactic sink (identity perm, all self-loops)
        let trivial = states
            .iter()
            .enumerate()
            .find(|(i, s)| s.perm.is_identity() && s.to.iter().all(|&t| t == *i))
            .map(|(i, _)| i);
        Ok(Arc::new(FiniteAutomaton {
            id: fresh_id(),
            alphabet,
            states,
            trivial,
        }))
    }

    /// Parses the text format:
    ///
    /// ```text
    /// alphabet: 3
    /// state a; perm 0 2 1; to a e e
    /// state e; perm 0 1 2; to e e e
    /// ```
    ///
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Arc<Self>, AutomatonError> {
        let mut alphabet: Option<usize> = None;
        let mut raw: Vec<(usize, String, Vec<usize>, Vec<String>)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line_num = lineno + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("alphabet:") {
                let m = rest.trim().parse::<usize>().map_err(|_| AutomatonError::Parse {
                    line: line_num,
                    msg: format!("cannot parse alphabet size {rest:?}"),
                })?;
                if m == 0 {
                    return Err(AutomatonError::Parse {
                        line: line_num,
                        msg: "alphabet size must be ≥ 1".into(),
                    });
                }
                alphabet = Some(m);
                continue;
            }
            let mut name = None;
            let mut perm = None;
            let mut to = None;
            for field in line.split(';') {
                let field = field.trim();
                if let Some(rest) = field.strip_prefix("state") {
                    name = Some(rest.trim().to_string());
                } else if let Some(rest) = field.strip_prefix("perm") {
                    let images: Result<Vec<usize>, _> =
                        rest.split_whitespace().map(str::parse).collect();
                    perm = Some(images.map_err(|_| AutomatonError::Parse {
                        line: line_num,
                        msg: format!("cannot parse permutation {rest:?}"),
                    })?);
                } else if let Some(rest) = field.strip_prefix("to") {
                    to = Some(
                        rest.split_whitespace()
                            .map(str::to_string)
                            .collect::<Vec<_>>(),
                    );
                } else if !field.is_empty() {
                    return Err(AutomatonError::Parse {
                        line: line_num,
                        msg: format!("unexpected field {field:?}"),
                    });
                }
            }
            match (name, perm, to) {
                (Some(n), Some(p), Some(t)) => raw.push((line_num, n, p, t)),
                _ => {
                    return Err(AutomatonError::Parse {
                        line: line_num,
                        msg: "state block needs `state`, `perm` and `to` fields".into(),
                    })
                }
            }
        }
        let alphabet = alphabet.ok_or(AutomatonError::Parse {
            line: 0,
            msg: "missing `alphabet:` header".into(),
        })?;
        if raw.is_empty() {
            return Err(AutomatonError::NoStates);
        }
        let index: HashMap<String, usize> = raw
            .iter()
            .enumerate()
            .map(|(i, (_, n, _, _))| (n.clone(), i))
            .collect();
        if index.len() != raw.len() {
            let mut seen = HashMap::new();
            for (_, n, _, _) in &raw {
                if seen.insert(n.clone(), ()).is_some() {
                    return Err(AutomatonError::DuplicateState(n.clone()));
                }
            }
        }
        let mut states = Vec::with_capacity(raw.len());
        for (_line, name, images, targets) in raw {
            if images.len() != alphabet {
                return Err(AutomatonError::AlphabetMismatch {
                    state: name,
                    what: format!("permutation of {} images", images.len()),
                    alphabet,
                });
            }
            let perm = Perm::new(images)
                .map_err(|_| AutomatonError::NonBijectivePerm { state: name.clone() })?;
            if targets.len() != alphabet {
                return Err(AutomatonError::AlphabetMismatch {
                    state: name,
                    what: format!("{} transitions", targets.len()),
                    alphabet,
                });
            }
            let to = targets
                .iter()
                .enumerate()
                .map(|(x, t)| {
                    index.get(t).copied().ok_or(AutomatonError::DanglingTransition {
                        state: name.clone(),
                        letter: x,
                        target: t.clone(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            states.push(AutState { name, perm, to });
        }
        FiniteAutomaton::new(alphabet, states)
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[AutState] {
        &self.states
    }

    pub fn perm(&self, state: usize) -> &Perm {
        &self.states[state].perm
    }

    pub fn target(&self, state: usize, letter: usize) -> usize {
        self.states[state].to[letter]
    }

    pub fn state_name(&self, state: usize) -> &str {
        &self.states[state].name
    }

    pub fn state_index(&self, name: &str) -> Result<usize, AutomatonError> {
        self.states
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| AutomatonError::UnknownState(name.to_string()))
    }

    pub fn designated_trivial(&self) -> Option<usize> {
        self.trivial
    }

    /// States acting trivially on the whole tree: the greatest set of states
    /// with identity root permutation whose transitions stay inside the set.
    /// This is exact state-level triviality, not just the designated sink.
    pub fn trivial_states(&self) -> Vec<bool> {
        let mut trivial: Vec<bool> = self
            .states
            .iter()
            .map(|s| s.perm.is_identity())
            .collect();
        loop {
            let mut changed = false;
            for i in 0..self.states.len() {
                if trivial[i] && self.states[i].to.iter().any(|&t| !trivial[t]) {
                    trivial[i] = false;
                    changed = true;
                }
            }
            if !changed {
                return trivial;
            }
        }
    }

    /// Partition-refinement minimization: start from the partition by root
    /// permutation, refine by transition-class signatures until stable.  The
    /// resulting classes are exactly the sets of states with equal action.
    /// Returns the reduced automaton and the old-state → new-state map.
    pub fn reduce(&self) -> (Arc<FiniteAutomaton>, Vec<usize>) {
        let n = self.states.len();
        let mut class: Vec<usize> = {
            let mut seen: Vec<(&Perm, usize)> = Vec::new();
            self.states
                .iter()
                .map(|s| {
                    if let Some(&(_, c)) = seen.iter().find(|(p, _)| *p == &s.perm) {
                        c
                    } else {
                        let c = seen.len();
                        seen.push((&s.perm, c));
                        c
                    }
                })
                .collect()
        };
        loop {
            let mut signature_to_class: HashMap<(usize, Vec<usize>), usize> = HashMap::new();
            let mut next = vec![0usize; n];
            for i in 0..n {
                let sig = (
                    class[i],
                    self.states[i].to.iter().map(|&t| class[t]).collect::<Vec<_>>(),
                );
                let fresh = signature_to_class.len();
                next[i] = *signature_to_class.entry(sig).or_insert(fresh);
            }
            if next == class {
                break;
            }
            class = next;
        }
        let class_count = class.iter().max().unwrap() + 1;
        // representative = lowest-index member of each class
        let mut rep = vec![usize::MAX; class_count];
        for i in (0..n).rev() {
            rep[class[i]] = i;
        }
        // order classes by representative index for stable naming
        let mut order: Vec<usize> = (0..class_count).collect();
        order.sort_by_key(|&c| rep[c]);
        let mut renum = vec![0usize; class_count];
        for (new, &c) in order.iter().enumerate() {
            renum[c] = new;
        }
        let states: Vec<AutState> = order
            .iter()
            .map(|&c| {
                let r = &self.states[rep[c]];
                AutState {
                    name: r.name.clone(),
                    perm: r.perm.clone(),
                    to: r.to.iter().map(|&t| renum[class[t]]).collect(),
                }
            })
            .collect();
        let mapping: Vec<usize> = class.iter().map(|&c| renum[c]).collect();
        let reduced = FiniteAutomaton::new(self.alphabet, states)
            .expect("reduction of a valid automaton is valid");
        (reduced, mapping)
    }

    /// Moore diagram: an edge `a → a_x` labeled `(x, x·σ_a)` per letter.
    pub fn moore_diagram(&self) -> MooreDiagram {
        let mut edges = Vec::new();
        for (a, s) in self.states.iter().enumerate() {
            for x in 0..self.alphabet {
                edges.push(MooreEdge {
                    from: a,
                    to: s.to[x],
                    input: x,
                    output: s.perm.apply(x),
                });
            }
        }
        MooreDiagram { edges }
    }

    /// `Γ_a(n)`: the number of level-`n` vertices carrying a non-trivial
    /// section of `a`, by iterating the count vector through the transition
    /// structure (never enumerating `m^n` vertices).
    pub fn activity_function(&self, state: usize, n: usize) -> u64 {
        let trivial = self.trivial_states();
        let mut counts: Vec<u64> = trivial.iter().map(|&t| if t { 0 } else { 1 }).collect();
        for _ in 0..n {
            counts = (0..self.states.len())
                .map(|s| {
                    self.states[s]
                        .to
                        .iter()
                        .map(|&t| counts[t])
                        .fold(0u64, |acc, c| acc.saturating_add(c))
                })
                .collect();
        }
        counts[state]
    }

    /// Classifies the activity degree from the Moore diagram restricted to
    /// non-trivial states: `d = ∞` iff some strongly connected component
    /// carries at least two distinct cycles, otherwise `d` is the longest
    /// chain of cycles in the reachability order, minus one.
    pub fn activity_degree(&self) -> ActivityReport {
        let trivial = self.trivial_states();
        let n = self.states.len();
        // adjacency among non-trivial states (multi-edges kept: letter list)
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for s in 0..n {
            if trivial[s] {
                continue;
            }
            for x in 0..self.alphabet {
                let t = self.states[s].to[x];
                if !trivial[t] {
                    adj[s].push((x, t));
                }
            }
        }
        let scc = strongly_connected_components(n, &adj);
        let comp_count = scc.iter().copied().max().map_or(0, |c| c + 1);
        let mut comp_members: Vec<Vec<usize>> = vec![Vec::new(); comp_count];
        for s in 0..n {
            if !trivial[s] {
                comp_members[scc[s]].push(s);
            }
        }
        let mut comp_edges: Vec<usize> = vec![0; comp_count];
        let mut dag: Vec<Vec<usize>> = vec![Vec::new(); comp_count];
        for s in 0..n {
            if trivial[s] {
                continue;
            }
            for &(_, t) in &adj[s] {
                if scc[s] == scc[t] {
                    comp_edges[scc[s]] += 1;
                } else {
                    dag[scc[s]].push(scc[t]);
                }
            }
        }
        // two distinct cycles inside one SCC ⇔ internal edges exceed vertices
        for c in 0..comp_count {
            let v = comp_members[c].len();
            let e = comp_edges[c];
            if v == 0 {
                continue;
            }
            if e > v {
                let witness: Vec<String> = comp_members[c]
                    .iter()
                    .map(|&s| self.states[s].name.clone())
                    .collect();
                let per_state = (0..n)
                    .map(|s| {
                        if !trivial[s] && reaches(s, &adj, &comp_members[c]) {
                            ActivityDegree::Infinite
                        } else {
                            // finite part ignored once the report is infinite
                            ActivityDegree::Finite(0)
                        }
                    })
                    .collect();
                return ActivityReport {
                    per_state,
                    degree: ActivityDegree::Infinite,
                    witness: ActivityWitness::TwoCyclesInComponent { states: witness },
                };
            }
        }
        // each SCC has at most one cycle; extract them
        let mut cycle_of_comp: Vec<Option<Vec<(usize, usize, usize)>>> = vec![None; comp_count];
        for c in 0..comp_count {
            let v = comp_members[c].len();
            let e = comp_edges[c];
            if v == 0 || e < v {
                continue; // no cycle (single vertex without loop)
            }
            // e == v and strongly connected: unique out-edge inside the SCC
            let start = comp_members[c][0];
            let mut cycle = Vec::new();
            let mut cur = start;
            loop {
                let &(x, t) = adj[cur]
                    .iter()
                    .find(|&&(_, t)| scc[t] == c)
                    .expect("state in a cyclic SCC has an internal out-edge");
                cycle.push((cur, x, t));
                cur = t;
                if cur == start {
                    break;
                }
            }
            cycle_of_comp[c] = Some(cycle);
        }
        // longest chain of cycles over the condensation, per component
        let mut memo: Vec<Option<(usize, Option<usize>)>> = vec![None; comp_count];
        fn chain(
            c: usize,
            dag: &[Vec<usize>],
            has_cycle: &[bool],
            memo: &mut Vec<Option<(usize, Option<usize>)>>,
        ) -> (usize, Option<usize>) {
            if let Some(v) = memo[c] {
                return v;
            }
            let mut best = (0, None);
            for &succ in &dag[c] {
                let (len, _) = chain(succ, dag, has_cycle, memo);
                if len > best.0 {
                    best = (len, Some(succ));
                }
            }
            let res = (best.0 + usize::from(has_cycle[c]), best.1);
            memo[c] = Some(res);
            res
        }
        let has_cycle: Vec<bool> = cycle_of_comp.iter().map(Option::is_some).collect();
        let per_state: Vec<ActivityDegree> = (0..n)
            .map(|s| {
                if trivial[s] {
                    ActivityDegree::Finite(0)
                } else {
                    let (cycles, _) = chain(scc[s], &dag, &has_cycle, &mut memo);
                    ActivityDegree::Finite(cycles.saturating_sub(1))
                }
            })
            .collect();
        let degree = per_state
            .iter()
            .copied()
            .max_by_key(|d| match d {
                ActivityDegree::Finite(k) => *k,
                ActivityDegree::Infinite => usize::MAX,
            })
            .unwrap_or(ActivityDegree::Finite(0));
        // witness: walk the argmax chain from the best component
        let mut best_comp = None;
        let mut best_len = 0;
        for c in 0..comp_count {
            if comp_members[c].is_empty() {
                continue;
            }
            let (len, _) = chain(c, &dag, &has_cycle, &mut memo);
            if len > best_len {
                best_len = len;
                best_comp = Some(c);
            }
        }
        let mut chain_cycles = Vec::new();
        let mut cur = best_comp;
        while let Some(c) = cur {
            if let Some(cycle) = &cycle_of_comp[c] {
                chain_cycles.push(
                    cycle
                        .iter()
                        .map(|&(s, x, t)| {
                            (self.states[s].name.clone(), x, self.states[t].name.clone())
                        })
                        .collect(),
                );
            }
            cur = memo[c].and_then(|(_, next)| next);
        }
        ActivityReport {
            per_state,
            degree,
            witness: ActivityWitness::CycleChain {
                cycles: chain_cycles,
            },
        }
    }
}

fn reaches(from: usize, adj: &[Vec<(usize, usize)>], targets: &[usize]) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(s) = stack.pop() {
        if targets.contains(&s) {
            return true;
        }
        for &(_, t) in &adj[s] {
            if !seen[t] {
                seen[t] = true;
                stack.push(t);
            }
        }
    }
    false
}

/// Iterative Tarjan SCC over the sub-digraph described by `adj`.
fn strongly_connected_components(n: usize, adj: &[Vec<(usize, usize)>]) -> Vec<usize> {
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut comp = vec![usize::MAX; n];
    let mut next_index = 0usize;
    let mut comp_count = 0usize;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        // explicit DFS stack of (vertex, next child position)
        let mut dfs: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut child)) = dfs.last_mut() {
            if *child < adj[v].len() {
                let (_, w) = adj[v][*child];
                *child += 1;
                if index[w] == usize::MAX {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    dfs.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                dfs.pop();
                if let Some(&mut (parent, _)) = dfs.last_mut() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp[w] = comp_count;
                        if w == v {
                            break;
                        }
                    }
                    comp_count += 1;
                }
            }
        }
    }
    comp
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ActivityDegree {
    Finite(usize),
    Infinite,
}

impl fmt::Display for ActivityDegree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivityDegree::Finite(d) => write!(f, "{d}"),
            ActivityDegree::Infinite => write!(f, "inf"),
        }
    }
}

/// Why the reported degree holds: either the chain of cycles realizing it,
/// or a strongly connected component containing two distinct cycles.
#[derive(Debug, Clone)]
pub enum ActivityWitness {
    CycleChain {
        /// Outer: cycles from the deepest to the final one; inner: edges
        /// `(state, letter, state)`.
        cycles: Vec<Vec<(String, usize, String)>>,
    },
    TwoCyclesInComponent { states: Vec<String> },
}

#[derive(Debug, Clone)]
pub struct ActivityReport {
    pub per_state: Vec<ActivityDegree>,
    pub degree: ActivityDegree,
    pub witness: ActivityWitness,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MooreEdge {
    pub from: usize,
    pub to: usize,
    pub input: usize,
    pub output: usize,
}

/// The Moore diagram as an edge list; out-degree of every state equals the
/// alphabet size and the inputs at each state are exactly the alphabet.
#[derive(Debug, Clone)]
pub struct MooreDiagram {
    pub edges: Vec<MooreEdge>,
}

/// The Hanoi Towers automaton on 3 letters, with sink `e`.
pub fn hanoi_automaton() -> Arc<FiniteAutomaton> {
    FiniteAutomaton::parse(
        "alphabet: 3\n\
         state a; perm 0 2 1; to a e e\n\
         state b; perm 2 1 0; to e b e\n\
         state c; perm 1 0 2; to e e c\n\
         state e; perm 0 1 2; to e e e\n",
    )
    .expect("builtin Hanoi automaton is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hanoi_loads_with_sink() {
        let aut = hanoi_automaton();
        assert_eq!(aut.len(), 4);
        assert_eq!(aut.alphabet(), 3);
        let e = aut.state_index("e").unwrap();
        assert_eq!(aut.designated_trivial(), Some(e));
        let a = aut.state_index("a").unwrap();
        assert_eq!(aut.perm(a).apply(1), 2);
        assert_eq!(aut.target(a, 0), a);
        assert_eq!(aut.target(a, 1), e);
    }

    #[test]
    fn parse_rejects_non_bijective_perm() {
        let err = FiniteAutomaton::parse(
            "alphabet: 3\nstate a; perm 0 0 1; to a a a\n",
        )
        .unwrap_err();
        assert!(matches!(err, AutomatonError::NonBijectivePerm { .. }));
    }

    #[test]
    fn parse_rejects_dangling_and_mismatch() {
        let err = FiniteAutomaton::parse("alphabet: 3\nstate a; perm 0 1 2; to a a z\n")
            .unwrap_err();
        assert!(matches!(err, AutomatonError::DanglingTransition { .. }));
        let err = FiniteAutomaton::parse("alphabet: 3\nstate a; perm 0 1; to a a a\n")
            .unwrap_err();
        assert!(matches!(err, AutomatonError::AlphabetMismatch { .. }));
    }

    #[test]
    fn reduce_merges_duplicate_state() {
        let aut = FiniteAutomaton::parse(
            "alphabet: 3\n\
             state a; perm 0 2 1; to a e e\n\
             state a2; perm 0 2 1; to a2 e e\n\
             state b; perm 2 1 0; to e b e\n\
             state c; perm 1 0 2; to e e c\n\
             state e; perm 0 1 2; to e e e\n",
        )
        .unwrap();
        let (reduced, mapping) = aut.reduce();
        assert_eq!(reduced.len(), 4);
        assert_eq!(mapping[0], mapping[1]);
        // already-reduced Hanoi is a fixed point
        let hanoi = hanoi_automaton();
        let (r, _) = hanoi.reduce();
        assert_eq!(r.len(), 4);
        let (rr, _) = r.reduce();
        assert_eq!(rr.len(), r.len());
    }

    #[test]
    fn all_identity_reduces_to_single_trivial_state() {
        let aut = FiniteAutomaton::parse(
            "alphabet: 2\n\
             state p; perm 0 1; to q p\n\
             state q; perm 0 1; to p q\n",
        )
        .unwrap();
        let trivial = aut.trivial_states();
        assert!(trivial.iter().all(|&t| t));
        let (reduced, _) = aut.reduce();
        assert_eq!(reduced.len(), 1);
        assert_eq!(reduced.designated_trivial(), Some(0));
    }

    #[test]
    fn activity_function_hanoi() {
        let aut = hanoi_automaton();
        let e = aut.state_index("e").unwrap();
        let a = aut.state_index("a").unwrap();
        for n in 0..=10 {
            assert_eq!(aut.activity_function(e, n), 0);
            assert_eq!(aut.activity_function(a, n), 1);
        }
    }

    #[test]
    fn activity_degree_hanoi_is_bounded() {
        let report = hanoi_automaton().activity_degree();
        assert_eq!(report.degree, ActivityDegree::Finite(0));
        match &report.witness {
            ActivityWitness::CycleChain { cycles } => assert_eq!(cycles.len(), 1),
            w => panic!("unexpected witness {w:?}"),
        }
    }

    #[test]
    fn activity_degree_two_loops_is_infinite() {
        // non-trivial state with both letters looping back to itself
        let aut = FiniteAutomaton::parse(
            "alphabet: 2\n\
             state f; perm 1 0; to f f\n\
             state e; perm 0 1; to e e\n",
        )
        .unwrap();
        let report = aut.activity_degree();
        assert_eq!(report.degree, ActivityDegree::Infinite);
        // Γ_f(n) = 2^n for this automaton
        let f = aut.state_index("f").unwrap();
        for n in 0..=12 {
            assert_eq!(aut.activity_function(f, n), 1u64 << n);
        }
        for n in 6..12 {
            let a = aut.activity_function(f, n) as f64;
            let b = aut.activity_function(f, n + 1) as f64;
            assert!(b / a >= 1.1);
        }
    }

    #[test]
    fn activity_degree_linear_chain() {
        // state g loops on 0 and feeds a on 1; a loops on 0: two chained
        // cycles give degree 1 (Γ_g grows linearly).
        let aut = FiniteAutomaton::parse(
            "alphabet: 3\n\
             state g; perm 1 0 2; to g a e\n\
             state a; perm 0 2 1; to a e e\n\
             state e; perm 0 1 2; to e e e\n",
        )
        .unwrap();
        let report = aut.activity_degree();
        assert_eq!(report.degree, ActivityDegree::Finite(1));
        let g = aut.state_index("g").unwrap();
        // Γ_g(n) = n + 1: one vertex per prefix of the 0-ray plus itself
        for n in 0..=8 {
            assert_eq!(aut.activity_function(g, n), (n as u64) + 1);
        }
    }

    #[test]
    fn moore_diagram_shape() {
        let aut = hanoi_automaton();
        let moore = aut.moore_diagram();
        assert_eq!(moore.edges.len(), 4 * 3);
        for (i, _) in aut.states().iter().enumerate() {
            let inputs: Vec<usize> = moore
                .edges
                .iter()
                .filter(|e| e.from == i)
                .map(|e| e.input)
                .collect();
            assert_eq!(inputs.len(), 3);
        }
    }
}
