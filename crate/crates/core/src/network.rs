//! Schreier graphs of group actions on tree levels, the {0,*} star
//! projection, effective resistance via collapsed weighted Laplacians, and
//! the stationary escape-probability identity.
//!
//! Networks store oriented labeled multi-edges; the undirected conductance
//! between `v ≠ w` is the average of the two oriented totals, and loops
//! count once.  With that convention the stationary weight of a vertex is
//! `c_v = Σ_{w≠v} c_vw + c_vv`, the escape probability of the stationary
//! walk is `C_eff(A,B)/Σ_v c_v`, and loops never affect resistances.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::Arc;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::atom::Atom;
use crate::automaton::FiniteAutomaton;
use crate::element::{AlgebraError, TreeAut};
use crate::measure::FiniteMeasure;
use crate::solve::{conjugate_gradient, ratio_to_f64, Ratio, SolveError, SparseExact};
use crate::valency::{level_vertices, Vertex};

/// Iterative solves must reach this true relative residual.
pub const RESIDUAL_LIMIT: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("orbit exceeded the budget of {budget} vertices")]
    OrbitBudget { budget: usize },
    #[error("level enumeration exceeded the budget of {budget} vertices")]
    VertexBudget { budget: usize },
    #[error("the sets A and B must be disjoint and non-empty")]
    BadSets,
    #[error("vertex {vertex} leaves the given vertex set under {gen}")]
    NotClosed { vertex: String, gen: String },
    #[error("operation needs a network built on tree vertices")]
    NeedsTreeVertices,
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("iterative solve residual {residual:e} exceeds {RESIDUAL_LIMIT:e}")]
    ResidualTooLarge { residual: f64 },
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("network invariant violated: {0}")]
    Invariant(String),
}

/// One oriented labeled edge: weight plus `(generator, section)` labels.
#[derive(Debug, Clone)]
pub struct NetEdge {
    pub src: usize,
    pub dst: usize,
    pub weight: Ratio,
    pub gen: u32,
    pub section: String,
}

/// A weighted multigraph with labeled oriented edges, undirected for network
/// theory.  `vertices` carries the tree words when the graph lives on a
/// level.
#[derive(Debug, Clone, Default)]
pub struct LabeledNetwork {
    pub vertex_names: Vec<String>,
    pub vertices: Option<Vec<Vertex>>,
    pub gens: Vec<String>,
    pub edges: Vec<NetEdge>,
}

impl LabeledNetwork {
    pub fn with_names(names: Vec<String>) -> Self {
        LabeledNetwork {
            vertex_names: names,
            ..Default::default()
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_names.len()
    }

    /// Adds an undirected edge as a pair of oriented half-edges (one for a
    /// loop).
    pub fn add_undirected(&mut self, i: usize, j: usize, w: Ratio, gen: u32, section: &str) {
        self.edges.push(NetEdge {
            src: i,
            dst: j,
            weight: w.clone(),
            gen,
            section: section.to_string(),
        });
        if i != j {
            self.edges.push(NetEdge {
                src: j,
                dst: i,
                weight: w,
                gen,
                section: section.to_string(),
            });
        }
    }

    /// Undirected conductances: for `i ≠ j` the average of the two oriented
    /// totals, keyed `(min, max)`; loops keyed `(i, i)` count once.
    pub fn conductances(&self) -> BTreeMap<(usize, usize), Ratio> {
        let mut oriented: BTreeMap<(usize, usize), Ratio> = BTreeMap::new();
        for e in &self.edges {
            *oriented
                .entry((e.src, e.dst))
                .or_insert_with(Ratio::zero) += &e.weight;
        }
        let mut out: BTreeMap<(usize, usize), Ratio> = BTreeMap::new();
        let half = Ratio::new(1.into(), 2.into());
        for ((i, j), w) in oriented {
            if i == j {
                *out.entry((i, i)).or_insert_with(Ratio::zero) += w;
            } else {
                let key = (i.min(j), i.max(j));
                *out.entry(key).or_insert_with(Ratio::zero) += w * &half;
            }
        }
        out
    }

    /// Stationary vertex weights `c_v` (loops once) and their total.
    pub fn stationary_weights(&self) -> (Vec<Ratio>, Ratio) {
        let cond = self.conductances();
        let mut c = vec![Ratio::zero(); self.vertex_count()];
        for ((i, j), w) in &cond {
            if i == j {
                c[*i] += w;
            } else {
                c[*i] += w;
                c[*j] += w;
            }
        }
        let total = c.iter().fold(Ratio::zero(), |acc, v| acc + v);
        (c, total)
    }

    /// The same adjacency with every distinct non-loop edge given unit
    /// conductance (loops dropped); the unit-weight graph of resistance
    /// profiles.
    pub fn unit_adjacency(&self) -> LabeledNetwork {
        let mut out = LabeledNetwork {
            vertex_names: self.vertex_names.clone(),
            vertices: self.vertices.clone(),
            gens: vec!["1".to_string()],
            edges: Vec::new(),
        };
        for ((i, j), _) in self.conductances() {
            if i != j {
                out.add_undirected(i, j, Ratio::one(), 0, "e");
            }
        }
        out
    }

    /// Edge-list export: `src dst weight gen section`, one oriented edge per
    /// line.
    pub fn export_edge_list(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            out.push_str(&format!(
                "{} {} {} {} {}\n",
                self.vertex_names[e.src],
                self.vertex_names[e.dst],
                e.weight,
                self.gens.get(e.gen as usize).map(String::as_str).unwrap_or("?"),
                e.section
            ));
        }
        out
    }

    fn neighbor_sets(&self) -> Vec<std::collections::BTreeSet<usize>> {
        let mut adj = vec![std::collections::BTreeSet::new(); self.vertex_count()];
        for e in &self.edges {
            if e.src != e.dst {
                adj[e.src].insert(e.dst);
                adj[e.dst].insert(e.src);
            }
        }
        adj
    }

    /// Structural check: ignoring loops and edge multiplicities, the graph
    /// is a path (two endpoints of degree 1, everything else degree 2,
    /// connected).
    pub fn is_path_with_loops(&self) -> bool {
        let adj = self.neighbor_sets();
        let n = self.vertex_count();
        if n == 0 {
            return false;
        }
        if n == 1 {
            return true;
        }
        let mut deg1 = 0;
        for a in &adj {
            match a.len() {
                1 => deg1 += 1,
                2 => {}
                _ => return false,
            }
        }
        if deg1 != 2 {
            return false;
        }
        // connectivity
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == n
    }
}

/// The ⟨S⟩-orbit of `v`, breadth-first, returned sorted.
pub fn orbit(gens: &[TreeAut], v: &Vertex, budget: usize) -> Result<Vec<Vertex>, NetworkError> {
    let mut seen = std::collections::BTreeSet::new();
    seen.insert(v.clone());
    let mut queue = VecDeque::from([v.clone()]);
    while let Some(w) = queue.pop_front() {
        for g in gens {
            for h in [g.clone(), g.inverse()] {
                let img = h.apply(&w)?;
                if seen.insert(img.clone()) {
                    if seen.len() > budget {
                        return Err(NetworkError::OrbitBudget { budget });
                    }
                    queue.push_back(img);
                }
            }
        }
    }
    Ok(seen.into_iter().collect())
}

/// The Schreier graph of the measure's support acting on `vertices`:
/// for every vertex `v` and every `g ∈ supp(μ)` an oriented edge
/// `v → v·g` of weight `μ(g)` labeled `(g, g|_v)`.  Per-vertex outgoing
/// weight is 1.
pub fn schreier_graph(
    mu: &FiniteMeasure,
    vertices: &[Vertex],
) -> Result<LabeledNetwork, NetworkError> {
    let universe = mu.universe();
    let index: HashMap<&Vertex, usize> = vertices.iter().zip(0..).collect();
    let mut gens: Vec<String> = Vec::new();
    let mut edges = Vec::new();
    for (gi, (key, weight)) in mu.weights().iter().enumerate() {
        let g = universe.key_rep(*key);
        gens.push(universe.key_display(*key));
        for (vi, v) in vertices.iter().enumerate() {
            let img = g.apply(v)?;
            let &wi = index.get(&img).ok_or_else(|| NetworkError::NotClosed {
                vertex: v.display(),
                gen: gens[gi].clone(),
            })?;
            let section = g.section(v)?;
            let label = if section.word().is_empty() || section.is_trivial()? {
                "e".to_string()
            } else {
                universe.key_display(section.canonical_key()?)
            };
            edges.push(NetEdge {
                src: vi,
                dst: wi,
                weight: weight.clone(),
                gen: gi as u32,
                section: label,
            });
        }
    }
    Ok(LabeledNetwork {
        vertex_names: vertices.iter().map(Vertex::display).collect(),
        vertices: Some(vertices.to_vec()),
        gens,
        edges,
    })
}

impl FiniteAutomaton {
    /// The `n`-th iteration of the dual Moore diagram: vertices are the full
    /// level, edges `w → w·a` labeled `(a, a|_w)` per state, unit weights.
    pub fn dual_moore_level(
        self: &Arc<Self>,
        n: usize,
        vertex_budget: usize,
    ) -> Result<LabeledNetwork, NetworkError> {
        let m = self.alphabet();
        if (m as u128).pow(n as u32) > vertex_budget as u128 {
            return Err(NetworkError::VertexBudget {
                budget: vertex_budget,
            });
        }
        let seq = crate::valency::ValencySeq::constant(m);
        let vertices = level_vertices(&seq, 0, n);
        let index: HashMap<&Vertex, usize> = vertices.iter().zip(0..).collect();
        let mut edges = Vec::new();
        for si in 0..self.states().len() {
            for (vi, v) in vertices.iter().enumerate() {
                // apply and section the single-state atom along the word
                let mut letters = v.letters().to_vec();
                let mut cur = Some(Atom::state(self.clone(), si));
                for slot in letters.iter_mut() {
                    match cur.take() {
                        None => break,
                        Some(a) => {
                            let x = *slot;
                            *slot = a.permute(x);
                            cur = a.section_letter(x);
                        }
                    }
                }
                let img = Vertex::from_letters(letters);
                let wi = index[&img];
                let section = match cur {
                    None => "e".to_string(),
                    Some(a) => a.display_name(),
                };
                edges.push(NetEdge {
                    src: vi,
                    dst: wi,
                    weight: Ratio::one(),
                    gen: si as u32,
                    section,
                });
            }
        }
        Ok(LabeledNetwork {
            vertex_names: vertices.iter().map(Vertex::display).collect(),
            vertices: Some(vertices),
            gens: self.states().iter().map(|s| s.name.clone()).collect(),
            edges,
        })
    }
}

/// Maps a word to its {0,*} pattern name (leftmost letter first).
pub fn star_pattern(v: &Vertex) -> String {
    v.letters()
        .iter()
        .rev()
        .map(|&x| if x == 0 { '0' } else { '*' })
        .collect()
}

/// Quotient of a level network under the {0,*} letter projection: each edge
/// projects with its weight, parallel edges retained.
pub fn star_projection(net: &LabeledNetwork) -> Result<LabeledNetwork, NetworkError> {
    let vertices = net
        .vertices
        .as_ref()
        .ok_or(NetworkError::NeedsTreeVertices)?;
    let mut names: Vec<String> = Vec::new();
    let mut class_of: Vec<usize> = Vec::with_capacity(vertices.len());
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for v in vertices {
        let name = star_pattern(v);
        let next = index.len();
        let id = *index.entry(name.clone()).or_insert(next);
        if id == names.len() {
            names.push(name);
        }
        class_of.push(id);
    }
    let edges = net
        .edges
        .iter()
        .map(|e| NetEdge {
            src: class_of[e.src],
            dst: class_of[e.dst],
            weight: e.weight.clone(),
            gen: e.gen,
            section: e.section.clone(),
        })
        .collect();
    Ok(LabeledNetwork {
        vertex_names: names,
        vertices: None,
        gens: net.gens.clone(),
        edges,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResistanceValue {
    Exact(Ratio),
    Approx(f64),
    Infinite,
}

impl ResistanceValue {
    pub fn to_f64(&self) -> f64 {
        match self {
            ResistanceValue::Exact(r) => ratio_to_f64(r),
            ResistanceValue::Approx(v) => *v,
            ResistanceValue::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, ResistanceValue::Infinite)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveMethod {
    Exact,
    Iterative { residual: f64 },
}

#[derive(Debug, Clone)]
pub struct ResistanceResult {
    pub value: ResistanceValue,
    pub method: SolveMethod,
    pub collapsed_a: Vec<usize>,
    pub collapsed_b: Vec<usize>,
}

struct Collapsed {
    node_count: usize,
    /// loop-free conductances between distinct nodes
    cond: BTreeMap<(usize, usize), Ratio>,
}

fn collapse(net: &LabeledNetwork, a: &[usize], b: &[usize]) -> Result<Collapsed, NetworkError> {
    if a.is_empty() || b.is_empty() {
        return Err(NetworkError::BadSets);
    }
    let n = net.vertex_count();
    let mut node_of = vec![usize::MAX; n];
    for &v in a {
        node_of[v] = 0;
    }
    for &v in b {
        if node_of[v] == 0 {
            return Err(NetworkError::BadSets);
        }
        node_of[v] = 1;
    }
    let mut next = 2;
    for slot in node_of.iter_mut() {
        if *slot == usize::MAX {
            *slot = next;
            next += 1;
        }
    }
    let mut cond: BTreeMap<(usize, usize), Ratio> = BTreeMap::new();
    for ((i, j), w) in net.conductances() {
        let (ni, nj) = (node_of[i], node_of[j]);
        if ni == nj {
            continue; // collapsed or loop: never affects resistance
        }
        let key = (ni.min(nj), ni.max(nj));
        *cond.entry(key).or_insert_with(Ratio::zero) += w;
    }
    Ok(Collapsed {
        node_count: next,
        cond,
    })
}

fn component_of(start: usize, node_count: usize, cond: &BTreeMap<(usize, usize), Ratio>) -> Vec<bool> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); node_count];
    for &(i, j) in cond.keys() {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut seen = vec![false; node_count];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen
}

/// Effective resistance between the collapsed sets `A` and `B`: exact
/// rational elimination when the connected system has at most `exact_cap`
/// nodes, conjugate-gradient with a checked residual above.
pub fn effective_resistance(
    net: &LabeledNetwork,
    a: &[usize],
    b: &[usize],
    exact_cap: usize,
) -> Result<ResistanceResult, NetworkError> {
    let collapsed = collapse(net, a, b)?;
    let comp = component_of(0, collapsed.node_count, &collapsed.cond);
    if !comp[1] {
        return Ok(ResistanceResult {
            value: ResistanceValue::Infinite,
            method: SolveMethod::Exact,
            collapsed_a: a.to_vec(),
            collapsed_b: b.to_vec(),
        });
    }
    // unknowns: component nodes except the ground b̄ = 1
    let mut var_of: HashMap<usize, usize> = HashMap::new();
    for node in 0..collapsed.node_count {
        if comp[node] && node != 1 {
            let next = var_of.len();
            var_of.insert(node, next);
        }
    }
    let size = var_of.len();
    let rhs_node = var_of[&0];
    if size <= exact_cap {
        let mut m = SparseExact::new(size);
        for ((i, j), w) in &collapsed.cond {
            match (var_of.get(i), var_of.get(j)) {
                (Some(&vi), Some(&vj)) => {
                    m.add(vi, vi, w.clone());
                    m.add(vj, vj, w.clone());
                    m.add(vi, vj, -w.clone());
                    m.add(vj, vi, -w.clone());
                }
                (Some(&vi), None) => m.add(vi, vi, w.clone()),
                (None, Some(&vj)) => m.add(vj, vj, w.clone()),
                (None, None) => {}
            }
        }
        let mut rhs = vec![Ratio::zero(); size];
        rhs[rhs_node] = Ratio::one();
        let x = m.factor()?.solve(rhs);
        Ok(ResistanceResult {
            value: ResistanceValue::Exact(x[rhs_node].clone()),
            method: SolveMethod::Exact,
            collapsed_a: a.to_vec(),
            collapsed_b: b.to_vec(),
        })
    } else {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); size];
        let mut diag = vec![0.0; size];
        for ((i, j), w) in &collapsed.cond {
            let w = ratio_to_f64(w);
            match (var_of.get(i), var_of.get(j)) {
                (Some(&vi), Some(&vj)) => {
                    diag[vi] += w;
                    diag[vj] += w;
                    rows[vi].push((vj, -w));
                    rows[vj].push((vi, -w));
                }
                (Some(&vi), None) => diag[vi] += w,
                (None, Some(&vj)) => diag[vj] += w,
                (None, None) => {}
            }
        }
        for (i, d) in diag.iter().enumerate() {
            rows[i].push((i, *d));
        }
        let mut rhs = vec![0.0; size];
        rhs[rhs_node] = 1.0;
        let (x, residual) = conjugate_gradient(&rows, &rhs, 1e-13, 40 * size + 2000);
        if residual > RESIDUAL_LIMIT {
            return Err(NetworkError::ResidualTooLarge { residual });
        }
        Ok(ResistanceResult {
            value: ResistanceValue::Approx(x[rhs_node]),
            method: SolveMethod::Iterative { residual },
            collapsed_a: a.to_vec(),
            collapsed_b: b.to_vec(),
        })
    }
}

/// Either side of the escape-probability identity, exact or floating.
#[derive(Debug, Clone, PartialEq)]
pub enum Prob {
    Exact(Ratio),
    Approx(f64),
}

impl Prob {
    pub fn to_f64(&self) -> f64 {
        match self {
            Prob::Exact(r) => ratio_to_f64(r),
            Prob::Approx(v) => *v,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EscapeReport {
    /// Absorbing-chain route: `Σ_{a∈A} ν(a)·P_a(T_B < T_A⁺)`.
    pub via_chain: Prob,
    /// Network route: `C_eff(A,B) / Σ_v c_v`.
    pub via_formula: Prob,
    pub discrepancy: f64,
    pub resistance: ResistanceResult,
}

/// Computes `P(X₀ ∈ A, T_B < T_A)` for the stationary walk two independent
/// ways: (i) a hitting solve of the absorbing chain, stationary-weighted over
/// the first step, and (ii) the effective-conductance formula.  In different
/// components the probability is 0 with infinite resistance.
pub fn escape_probability(
    net: &LabeledNetwork,
    a: &[usize],
    b: &[usize],
    exact_cap: usize,
) -> Result<EscapeReport, NetworkError> {
    let resistance = effective_resistance(net, a, b, exact_cap)?;
    let cond = net.conductances();
    let (_, c_total) = net.stationary_weights();
    if c_total.is_zero() {
        return Err(NetworkError::Invariant("network has no edges".into()));
    }
    let via_formula = match &resistance.value {
        ResistanceValue::Infinite => Prob::Exact(Ratio::zero()),
        ResistanceValue::Exact(r) => Prob::Exact(Ratio::one() / (&c_total * r)),
        ResistanceValue::Approx(r) => Prob::Approx(1.0 / (ratio_to_f64(&c_total) * r)),
    };
    // chain side: h_u = P_u(hit B before A), harmonic off A ∪ B, h = 0 on A
    // and on components missing B, h = 1 on B
    let n = net.vertex_count();
    let mut role = vec![2u8; n]; // 0 = A, 1 = B, 2 = interior
    for &v in a {
        role[v] = 0;
    }
    for &v in b {
        role[v] = 1;
    }
    let mut neighbor: Vec<Vec<(usize, Ratio)>> = vec![Vec::new(); n];
    for ((i, j), w) in &cond {
        if i != j {
            neighbor[*i].push((*j, w.clone()));
            neighbor[*j].push((*i, w.clone()));
        }
    }
    let interior: Vec<usize> = (0..n).filter(|&v| role[v] == 2).collect();
    let var_of: HashMap<usize, usize> = interior.iter().copied().zip(0..).collect();
    let size = interior.len();
    let via_chain = if size <= exact_cap {
        let mut m = SparseExact::new(size);
        let mut rhs = vec![Ratio::zero(); size];
        for (&u, &idx) in &var_of {
            let mut total = Ratio::zero();
            for (w, cw) in &neighbor[u] {
                total += cw;
                match role[*w] {
                    0 => {}
                    1 => rhs[idx] += cw,
                    _ => m.add(idx, var_of[w], -cw.clone()),
                }
            }
            if total.is_zero() {
                total = Ratio::one(); // isolated interior vertex, h = 0
            }
            m.add(idx, idx, total);
        }
        let h = m.factor()?.solve(rhs);
        let mut acc = Ratio::zero();
        for &av in a {
            for (w, cw) in &neighbor[av] {
                match role[*w] {
                    0 => {}
                    1 => acc += cw,
                    _ => acc += cw * &h[var_of[w]],
                }
            }
        }
        Prob::Exact(acc / &c_total)
    } else {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); size];
        let mut diag = vec![0.0; size];
        let mut rhs = vec![0.0; size];
        for (&u, &idx) in &var_of {
            for (w, cw) in &neighbor[u] {
                let cw = ratio_to_f64(cw);
                diag[idx] += cw;
                match role[*w] {
                    0 => {}
                    1 => rhs[idx] += cw,
                    _ => rows[idx].push((var_of[w], -cw)),
                }
            }
            if diag[idx] == 0.0 {
                diag[idx] = 1.0;
            }
        }
        for (i, d) in diag.iter().enumerate() {
            rows[i].push((i, *d));
        }
        let (h, residual) = conjugate_gradient(&rows, &rhs, 1e-13, 40 * size + 2000);
        if residual > RESIDUAL_LIMIT && rhs.iter().any(|v| *v != 0.0) {
            return Err(NetworkError::ResidualTooLarge { residual });
        }
        let mut acc = 0.0;
        for &av in a {
            for (w, cw) in &neighbor[av] {
                match role[*w] {
                    0 => {}
                    1 => acc += ratio_to_f64(cw),
                    _ => acc += ratio_to_f64(cw) * h[var_of[w]],
                }
            }
        }
        Prob::Approx(acc / ratio_to_f64(&c_total))
    };
    let discrepancy = (via_chain.to_f64() - via_formula.to_f64()).abs();
    Ok(EscapeReport {
        via_chain,
        via_formula,
        discrepancy,
        resistance,
    })
}

/// One line of a resistance profile over tree levels.
#[derive(Debug, Clone)]
pub struct ResistanceRow {
    pub n: usize,
    pub v_n: u128,
    pub r_unit: ResistanceValue,
    pub r_mu: ResistanceValue,
    /// `(m_*/(m_*−1))^n`, the reference growth curve.
    pub reference: f64,
}

/// Computes `R_n` (unit weights) and `R_n^μ` (μ-weights) between the given
/// per-level vertex classes on the full level, checking `R_n^μ ≥ R_n`.
pub fn resistance_profile(
    mu: &FiniteMeasure,
    splits: &[(usize, Vec<Vertex>, Vec<Vertex>)],
    exact_cap: usize,
    vertex_budget: usize,
) -> Result<Vec<ResistanceRow>, NetworkError> {
    let universe = mu.universe();
    let base = universe.base();
    let m_star = base.m_star() as f64;
    let mut rows = Vec::new();
    for (n, class_a, class_b) in splits {
        let v_n = base.level_size(mu.shift(), *n);
        if v_n > vertex_budget as u128 {
            return Err(NetworkError::VertexBudget {
                budget: vertex_budget,
            });
        }
        let vertices = level_vertices(base, mu.shift(), *n);
        let index: HashMap<&Vertex, usize> = vertices.iter().zip(0..).collect();
        let to_ids = |set: &Vec<Vertex>| -> Result<Vec<usize>, NetworkError> {
            set.iter()
                .map(|v| {
                    index.get(v).copied().ok_or_else(|| NetworkError::Invariant(
                        format!("class vertex {v} is not on level {n}"),
                    ))
                })
                .collect()
        };
        let a_ids = to_ids(class_a)?;
        let b_ids = to_ids(class_b)?;
        let net = schreier_graph(mu, &vertices)?;
        let unit = net.unit_adjacency();
        let r_unit = effective_resistance(&unit, &a_ids, &b_ids, exact_cap)?.value;
        let r_mu = effective_resistance(&net, &a_ids, &b_ids, exact_cap)?.value;
        match (&r_unit, &r_mu) {
            (ResistanceValue::Exact(ru), ResistanceValue::Exact(rm)) => {
                if rm < ru {
                    return Err(NetworkError::Invariant(format!(
                        "R_{n}^μ = {rm} < R_{n} = {ru}"
                    )));
                }
            }
            (u, m) => {
                if m.to_f64() < u.to_f64() * (1.0 - 1e-8) {
                    return Err(NetworkError::Invariant(format!(
                        "R_{n}^μ = {} < R_{n} = {}",
                        m.to_f64(),
                        u.to_f64()
                    )));
                }
            }
        }
        rows.push(ResistanceRow {
            n: *n,
            v_n,
            r_unit,
            r_mu,
            reference: (m_star / (m_star - 1.0)).powi(*n as i32),
        });
    }
    Ok(rows)
}
