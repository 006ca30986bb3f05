//! Time-graph structure and the combinatorics of the transmission pattern.
//!
//! A problem is iteratively solvable as a sequence of interval problems iff,
//! after relabeling, every nonzero block `B[i][j]` has `j` ordered no later
//! than `i`. That is a statement about the dependency digraph with an arc
//! `j → i` for each off-diagonal nonzero block: it must be acyclic. Diagonal
//! blocks make the per-edge problems non-local (periodic-like) but do not
//! obstruct the ordering.

use std::collections::{BTreeSet, BinaryHeap, VecDeque};
use std::cmp::Reverse;
use std::fmt;

use crate::problem::TransmissionOperator;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub String);

impl EdgeId {
    pub fn new(id: impl Into<String>) -> Self {
        EdgeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<String> for EdgeId {
    fn from(s: String) -> Self {
        EdgeId(s)
    }
}

impl From<&str> for EdgeId {
    fn from(s: &str) -> Self {
        EdgeId(s.to_owned())
    }
}

/// One internal edge: a time interval `(0, length)` carrying states in a
/// space of dimension `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub length: f64,
    pub dim: usize,
}

/// Finite metric graph of internal edges in a fixed declaration order.
/// Vertex structure is not modelled; the transmission operator carries all
/// coupling information.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeGraph {
    pub edges: Vec<Edge>,
}

impl TimeGraph {
    pub fn new(edges: Vec<Edge>) -> Self {
        TimeGraph { edges }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn index_of(&self, id: &EdgeId) -> Option<usize> {
        self.edges.iter().position(|e| &e.id == id)
    }

    pub fn edge(&self, id: &EdgeId) -> Option<&Edge> {
        self.edges.iter().find(|e| &e.id == id)
    }

    /// Offset of each edge's block in the boundary space, plus the total.
    pub fn offsets(&self) -> (Vec<usize>, usize) {
        let mut offsets = Vec::with_capacity(self.edges.len());
        let mut total = 0;
        for e in &self.edges {
            offsets.push(total);
            total += e.dim;
        }
        (offsets, total)
    }

    pub fn total_dim(&self) -> usize {
        self.edges.iter().map(|e| e.dim).sum()
    }
}

/// Nonzero block structure of a transmission operator: `(i, j)` present means
/// row `i` receives the terminal value of edge `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPattern {
    n: usize,
    nonzero: BTreeSet<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("block ({row}, {col}) out of range for {n} edges")]
pub struct PatternIndexError {
    pub row: usize,
    pub col: usize,
    pub n: usize,
}

impl BlockPattern {
    pub fn new(
        n: usize,
        nonzero: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, PatternIndexError> {
        let nonzero: BTreeSet<_> = nonzero.into_iter().collect();
        if let Some(&(row, col)) = nonzero.iter().find(|&&(i, j)| i >= n || j >= n) {
            return Err(PatternIndexError { row, col, n });
        }
        Ok(BlockPattern { n, nonzero })
    }

    pub fn empty(n: usize) -> Self {
        BlockPattern { n, nonzero: BTreeSet::new() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.nonzero.contains(&(row, col))
    }

    pub fn nonzero(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.nonzero.iter().copied()
    }

    pub fn has_diagonal(&self) -> bool {
        self.nonzero.iter().any(|&(i, j)| i == j)
    }

    /// Pattern after renaming edge `k` to `perm[k]`.
    pub fn relabel(&self, perm: &[usize]) -> Self {
        BlockPattern {
            n: self.n,
            nonzero: self.nonzero.iter().map(|&(i, j)| (perm[i], perm[j])).collect(),
        }
    }

    /// Whether `ordering` (a permutation listing edges first to last) puts
    /// the pattern in block lower-triangular form.
    pub fn is_lower_triangular_under(&self, ordering: &[usize]) -> bool {
        if ordering.len() != self.n {
            return false;
        }
        let mut pos = vec![usize::MAX; self.n];
        for (p, &e) in ordering.iter().enumerate() {
            if e >= self.n || pos[e] != usize::MAX {
                return false;
            }
            pos[e] = p;
        }
        self.nonzero.iter().all(|&(i, j)| pos[j] <= pos[i])
    }

    /// Successor lists of the dependency digraph `j → i` for off-diagonal
    /// `(i, j)`.
    fn dependency_arcs(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in &self.nonzero {
            if i != j {
                adj[j].push(i);
            }
        }
        adj
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolvabilityClass {
    /// Block lower-triangular with zero diagonal: a chain of initial value
    /// problems.
    IvpSequence,
    /// Block lower-triangular with some diagonal block: a chain of
    /// single-interval problems, some of them non-local.
    CauchySequence,
    /// A loop is reflected by the transmission conditions.
    GlobalOnly,
}

impl SolvabilityClass {
    pub fn as_str(self) -> &'static str {
        match self {
            SolvabilityClass::IvpSequence => "IVP_SEQUENCE",
            SolvabilityClass::CauchySequence => "CAUCHY_SEQUENCE",
            SolvabilityClass::GlobalOnly => "GLOBAL_ONLY",
        }
    }
}

impl fmt::Display for SolvabilityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolvabilityReport {
    pub class: SolvabilityClass,
    /// Edge indices in solve order (first entry solved first).
    pub ordering: Option<Vec<usize>>,
    /// Edges `[i_1, …, i_m]` with `B[i_k][i_{k+1}] ≠ 0` cyclically.
    pub blocking_cycle: Option<Vec<usize>>,
}

/// Classifies a block pattern by iterative solvability.
///
/// The ordering is the lexicographically smallest topological order of the
/// dependency digraph; the blocking cycle is the shortest cycle inside the
/// nontrivial strongly connected component with the smallest member.
pub fn classify_solvability(pattern: &BlockPattern) -> SolvabilityReport {
    let adj = pattern.dependency_arcs();
    let components = tarjan_scc(&adj);

    let nontrivial = components
        .iter()
        .filter(|c| c.len() > 1)
        .min_by_key(|c| c.iter().copied().min());

    if let Some(component) = nontrivial {
        return SolvabilityReport {
            class: SolvabilityClass::GlobalOnly,
            ordering: None,
            blocking_cycle: Some(shortest_cycle(pattern, component)),
        };
    }

    let ordering = topological_order(&adj);
    let class = if pattern.has_diagonal() {
        SolvabilityClass::CauchySequence
    } else {
        SolvabilityClass::IvpSequence
    };
    SolvabilityReport { class, ordering: Some(ordering), blocking_cycle: None }
}

/// Nonzero blocks of `b` (entries with magnitude above `tol`), indexed by the
/// graph's edge order. Blocks naming unknown edges are ignored.
pub fn pattern_of(b: &TransmissionOperator, graph: &TimeGraph, tol: f64) -> BlockPattern {
    let nonzero = b.blocks.iter().filter_map(|((to, from), m)| {
        let i = graph.index_of(to)?;
        let j = graph.index_of(from)?;
        (crate::matfun::max_abs(m) > tol).then_some((i, j))
    });
    BlockPattern::new(graph.len(), nonzero).expect("indices come from the graph")
}

fn tarjan_scc(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    struct State {
        next: usize,
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        stack: Vec<usize>,
        on_stack: Vec<bool>,
        out: Vec<Vec<usize>>,
    }

    fn visit(v: usize, adj: &[Vec<usize>], s: &mut State) {
        s.index[v] = Some(s.next);
        s.low[v] = s.next;
        s.next += 1;
        s.stack.push(v);
        s.on_stack[v] = true;
        for &w in &adj[v] {
            match s.index[w] {
                None => {
                    visit(w, adj, s);
                    s.low[v] = s.low[v].min(s.low[w]);
                }
                Some(iw) if s.on_stack[w] => s.low[v] = s.low[v].min(iw),
                Some(_) => {}
            }
        }
        if Some(s.low[v]) == s.index[v] {
            let mut comp = Vec::new();
            loop {
                let w = s.stack.pop().expect("tarjan stack");
                s.on_stack[w] = false;
                comp.push(w);
                if w == v {
                    break;
                }
            }
            comp.sort_unstable();
            s.out.push(comp);
        }
    }

    let n = adj.len();
    let mut s = State {
        next: 0,
        index: vec![None; n],
        low: vec![0; n],
        stack: Vec::new(),
        on_stack: vec![false; n],
        out: Vec::new(),
    };
    for v in 0..n {
        if s.index[v].is_none() {
            visit(v, adj, &mut s);
        }
    }
    s.out
}

// Kahn with a min-heap; caller guarantees acyclicity.
fn topological_order(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut indegree = vec![0usize; n];
    for succ in adj {
        for &w in succ {
            indegree[w] += 1;
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..n).filter(|&v| indegree[v] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(v)) = ready.pop() {
        order.push(v);
        for &w in &adj[v] {
            indegree[w] -= 1;
            if indegree[w] == 0 {
                ready.push(Reverse(w));
            }
        }
    }
    debug_assert_eq!(order.len(), n, "dependency digraph has a cycle");
    order
}

/// Shortest cycle `[i_1, …, i_m]` with `(i_k, i_{k+1})` in the pattern,
/// restricted to `component`, rotated to start at its smallest edge; ties go
/// to the lexicographically smallest sequence.
fn shortest_cycle(pattern: &BlockPattern, component: &[usize]) -> Vec<usize> {
    let n = pattern.n();
    let mut member = vec![false; n];
    for &v in component {
        member[v] = true;
    }
    // Cycle successor of i: any j with (i, j) nonzero, i.e. i reads j.
    let mut next = vec![Vec::new(); n];
    for (i, j) in pattern.nonzero() {
        if i != j && member[i] && member[j] {
            next[i].push(j);
        }
    }
    for succ in &mut next {
        succ.sort_unstable();
    }

    let mut best: Option<Vec<usize>> = None;
    for &start in component {
        // BFS from start; the first time we return to start gives a shortest
        // cycle through it, smallest successors explored first.
        let mut parent = vec![usize::MAX; n];
        let mut seen = vec![false; n];
        let mut queue = VecDeque::new();
        seen[start] = true;
        queue.push_back(start);
        let mut closing = None;
        'bfs: while let Some(v) = queue.pop_front() {
            for &w in &next[v] {
                if w == start {
                    closing = Some(v);
                    break 'bfs;
                }
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = v;
                    queue.push_back(w);
                }
            }
        }
        let Some(mut v) = closing else { continue };
        let mut cycle = vec![v];
        while v != start {
            v = parent[v];
            cycle.push(v);
        }
        cycle.reverse();
        let rot = cycle
            .iter()
            .enumerate()
            .min_by_key(|&(_, &e)| e)
            .map(|(k, _)| k)
            .unwrap_or(0);
        cycle.rotate_left(rot);
        let better = match &best {
            None => true,
            Some(b) => (cycle.len(), &cycle) < (b.len(), b),
        };
        if better {
            best = Some(cycle);
        }
    }
    best.expect("a nontrivial strongly connected component contains a cycle")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pat(n: usize, nz: &[(usize, usize)]) -> BlockPattern {
        BlockPattern::new(n, nz.iter().copied()).unwrap()
    }

    #[test]
    fn splitting_is_ivp_sequence() {
        let r = classify_solvability(&pat(3, &[(1, 0), (2, 0)]));
        assert_eq!(r.class, SolvabilityClass::IvpSequence);
        assert_eq!(r.ordering, Some(vec![0, 1, 2]));
        assert_eq!(r.blocking_cycle, None);
    }

    #[test]
    fn empty_pattern_is_ivp_sequence() {
        let r = classify_solvability(&BlockPattern::empty(4));
        assert_eq!(r.class, SolvabilityClass::IvpSequence);
        assert_eq!(r.ordering.unwrap().len(), 4);
    }

    #[test]
    fn time_travel_is_global_only() {
        let r = classify_solvability(&pat(4, &[(1, 0), (1, 3), (2, 1), (3, 1)]));
        assert_eq!(r.class, SolvabilityClass::GlobalOnly);
        assert_eq!(r.blocking_cycle, Some(vec![1, 3]));
        assert_eq!(r.ordering, None);
    }

    #[test]
    fn multiverse_is_ivp_sequence() {
        let p = pat(5, &[(1, 0), (2, 1), (3, 1), (4, 0), (4, 3)]);
        let r = classify_solvability(&p);
        assert_eq!(r.class, SolvabilityClass::IvpSequence);
        assert!(p.is_lower_triangular_under(r.ordering.as_ref().unwrap()));
    }

    #[test]
    fn tadpole_is_cauchy_sequence() {
        let r = classify_solvability(&pat(2, &[(0, 0), (1, 0)]));
        assert_eq!(r.class, SolvabilityClass::CauchySequence);
        assert_eq!(r.ordering, Some(vec![0, 1]));
    }

    #[test]
    fn shortest_cycle_prefers_small_edges() {
        // 3-cycle 0→1→2→0 in reading order plus a 2-cycle between 3 and 4
        // that lives in its own component.
        let p = pat(5, &[(0, 1), (1, 2), (2, 0), (3, 4), (4, 3)]);
        let r = classify_solvability(&p);
        assert_eq!(r.blocking_cycle, Some(vec![0, 1, 2]));
        // inside one component the shorter cycle wins
        let p = pat(3, &[(0, 1), (1, 2), (2, 0), (1, 0)]);
        assert_eq!(classify_solvability(&p).blocking_cycle, Some(vec![0, 1]));
    }

    #[test]
    fn out_of_range_rejected() {
        assert_eq!(
            BlockPattern::new(2, [(0, 2)]).unwrap_err(),
            PatternIndexError { row: 0, col: 2, n: 2 }
        );
    }

    #[test]
    fn triangular_check_rejects_non_permutations() {
        let p = pat(2, &[(1, 0)]);
        assert!(p.is_lower_triangular_under(&[0, 1]));
        assert!(!p.is_lower_triangular_under(&[1, 0]));
        assert!(!p.is_lower_triangular_under(&[0, 0]));
        assert!(!p.is_lower_triangular_under(&[0]));
    }
}
