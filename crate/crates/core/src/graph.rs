//! Causal diagrams: a validated DAG type, d-separation via the moralization
//! route, Pearl's back-door criterion, and the built-in point and
//! longitudinal diagrams used throughout the toolkit.

use std::collections::{HashMap, HashSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("cycle detected")]
    CycleDetected,
    #[error("unknown node: {0}")]
    UnknownNode(String),
    #[error("duplicate node: {0}")]
    DuplicateNode(String),
    #[error("duplicate edge: {0} -> {1}")]
    DuplicateEdge(String, String),
    #[error("self loop on node: {0}")]
    SelfLoop(String),
    #[error("query sets must be pairwise disjoint")]
    OverlappingSets,
    #[error("query sets A and B must be nonempty")]
    EmptySet,
    #[error("unknown figure name: {0}")]
    UnknownFigure(String),
    #[error("dag parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Immutable directed acyclic graph over case-sensitive string labels.
#[derive(Debug, Clone)]
pub struct Dag {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl Dag {
    /// Validates labels, edge endpoints, and acyclicity (Kahn topological
    /// sort) before construction.
    pub fn new<S: AsRef<str>>(nodes: &[S], edges: &[(S, S)]) -> Result<Self, GraphError> {
        let mut index = HashMap::new();
        let mut labels = Vec::with_capacity(nodes.len());
        for n in nodes {
            let name = n.as_ref().to_owned();
            if index.insert(name.clone(), labels.len()).is_some() {
                return Err(GraphError::DuplicateNode(name));
            }
            labels.push(name);
        }
        let mut parents = vec![Vec::new(); labels.len()];
        let mut children = vec![Vec::new(); labels.len()];
        let mut seen = HashSet::new();
        for (a, b) in edges {
            let (a, b) = (a.as_ref(), b.as_ref());
            let ia = *index
                .get(a)
                .ok_or_else(|| GraphError::UnknownNode(a.to_owned()))?;
            let ib = *index
                .get(b)
                .ok_or_else(|| GraphError::UnknownNode(b.to_owned()))?;
            if ia == ib {
                return Err(GraphError::SelfLoop(a.to_owned()));
            }
            if !seen.insert((ia, ib)) {
                return Err(GraphError::DuplicateEdge(a.to_owned(), b.to_owned()));
            }
            children[ia].push(ib);
            parents[ib].push(ia);
        }
        let dag = Dag {
            labels,
            index,
            parents,
            children,
        };
        if dag.has_cycle() {
            return Err(GraphError::CycleDetected);
        }
        Ok(dag)
    }

    fn has_cycle(&self) -> bool {
        let n = self.labels.len();
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut visited = 0;
        while let Some(v) = queue.pop_front() {
            visited += 1;
            for &c in &self.children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        visited != n
    }

    pub fn node_labels(&self) -> &[String] {
        &self.labels
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn contains_edge(&self, parent: &str, child: &str) -> bool {
        match (self.index.get(parent), self.index.get(child)) {
            (Some(&a), Some(&b)) => self.children[a].contains(&b),
            _ => false,
        }
    }

    /// Edges as `(parent, child)` label pairs in insertion order per parent.
    pub fn edges(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (a, kids) in self.children.iter().enumerate() {
            for &b in kids {
                out.push((self.labels[a].clone(), self.labels[b].clone()));
            }
        }
        out
    }

    fn resolve(&self, label: &str) -> Result<usize, GraphError> {
        self.index
            .get(label)
            .copied()
            .ok_or_else(|| GraphError::UnknownNode(label.to_owned()))
    }

    fn resolve_set<S: AsRef<str>>(&self, labels: &[S]) -> Result<HashSet<usize>, GraphError> {
        labels.iter().map(|l| self.resolve(l.as_ref())).collect()
    }

    /// Ancestors of the seed set, seeds included.
    fn ancestral_mask(&self, seeds: &HashSet<usize>) -> Vec<bool> {
        let mut mask = vec![false; self.labels.len()];
        let mut stack: Vec<usize> = seeds.iter().copied().collect();
        while let Some(v) = stack.pop() {
            if std::mem::replace(&mut mask[v], true) {
                continue;
            }
            stack.extend(self.parents[v].iter().copied());
        }
        mask
    }

    /// Descendants of `v`, `v` excluded.
    fn descendants(&self, v: usize) -> HashSet<usize> {
        let mut out = HashSet::new();
        let mut stack = self.children[v].clone();
        while let Some(c) = stack.pop() {
            if out.insert(c) {
                stack.extend(self.children[c].iter().copied());
            }
        }
        out
    }

    /// True iff `given` d-separates `a` from `b`.
    ///
    /// Route: restrict to the ancestral subgraph of `a + b + given`, moralize
    /// (connect parents with children as undirected, marry co-parents),
    /// delete the conditioning nodes, and test undirected reachability.
    pub fn d_separated<S: AsRef<str>>(
        &self,
        a: &[S],
        b: &[S],
        given: &[S],
    ) -> Result<bool, GraphError> {
        let a = self.resolve_set(a)?;
        let b = self.resolve_set(b)?;
        let c = self.resolve_set(given)?;
        if a.is_empty() || b.is_empty() {
            return Err(GraphError::EmptySet);
        }
        if !a.is_disjoint(&b) || !a.is_disjoint(&c) || !b.is_disjoint(&c) {
            return Err(GraphError::OverlappingSets);
        }
        Ok(self.d_separated_idx(&a, &b, &c))
    }

    fn d_separated_idx(
        &self,
        a: &HashSet<usize>,
        b: &HashSet<usize>,
        c: &HashSet<usize>,
    ) -> bool {
        let n = self.labels.len();
        let mut seeds: HashSet<usize> = a.union(b).copied().collect();
        seeds.extend(c.iter().copied());
        let mask = self.ancestral_mask(&seeds);

        // moral adjacency within the ancestral subgraph
        let mut adj = vec![HashSet::<usize>::new(); n];
        for v in 0..n {
            if !mask[v] {
                continue;
            }
            let pa: Vec<usize> = self.parents[v]
                .iter()
                .copied()
                .filter(|&p| mask[p])
                .collect();
            for &p in &pa {
                adj[v].insert(p);
                adj[p].insert(v);
            }
            for i in 0..pa.len() {
                for j in i + 1..pa.len() {
                    adj[pa[i]].insert(pa[j]);
                    adj[pa[j]].insert(pa[i]);
                }
            }
        }

        // BFS from a to b avoiding conditioned nodes
        let mut visited = vec![false; n];
        let mut queue: VecDeque<usize> = a
            .iter()
            .copied()
            .filter(|v| mask[*v] && !c.contains(v))
            .collect();
        for &v in &queue {
            visited[v] = true;
        }
        while let Some(v) = queue.pop_front() {
            if b.contains(&v) {
                return false;
            }
            for &w in &adj[v] {
                if !visited[w] && !c.contains(&w) {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
        }
        true
    }

    /// Pearl's back-door criterion for `adjust` relative to the ordered pair
    /// `(treatment, outcome)`.
    pub fn backdoor_satisfied<S: AsRef<str>>(
        &self,
        treatment: &str,
        outcome: &str,
        adjust: &[S],
    ) -> Result<bool, GraphError> {
        Ok(self.backdoor_verdict(treatment, outcome, adjust)?.satisfied)
    }

    /// Back-door check with the reason for failure, used by the CLI verdicts.
    pub fn backdoor_verdict<S: AsRef<str>>(
        &self,
        treatment: &str,
        outcome: &str,
        adjust: &[S],
    ) -> Result<BackdoorVerdict, GraphError> {
        let t = self.resolve(treatment)?;
        let o = self.resolve(outcome)?;
        let z = self.resolve_set(adjust)?;
        if t == o || z.contains(&t) || z.contains(&o) {
            return Err(GraphError::OverlappingSets);
        }

        // (i) no adjustment node may descend from the treatment
        let desc = self.descendants(t);
        if let Some(&bad) = z.iter().find(|v| desc.contains(v)) {
            return Ok(BackdoorVerdict {
                satisfied: false,
                reason: Some(format!(
                    "{} is a descendant of {}",
                    self.labels[bad], treatment
                )),
            });
        }

        // (ii) paths into the treatment must be blocked: delete the edges out
        // of the treatment and test d-separation in the reduced graph.
        let mut reduced = self.clone();
        for &child in &self.children[t] {
            reduced.parents[child].retain(|&p| p != t);
        }
        reduced.children[t].clear();
        let a: HashSet<usize> = [t].into_iter().collect();
        let b: HashSet<usize> = [o].into_iter().collect();
        if reduced.d_separated_idx(&a, &b, &z) {
            Ok(BackdoorVerdict {
                satisfied: true,
                reason: None,
            })
        } else {
            Ok(BackdoorVerdict {
                satisfied: false,
                reason: Some(format!(
                    "{} leaves a back-door path from {} to {} open",
                    if adjust.is_empty() {
                        "the empty set".to_owned()
                    } else {
                        format!(
                            "{{{}}}",
                            adjust
                                .iter()
                                .map(|s| s.as_ref())
                                .collect::<Vec<_>>()
                                .join(", ")
                        )
                    },
                    treatment,
                    outcome
                )),
            })
        }
    }

    /// Parses the one-edge-per-line text format: `parent -> child`, blank
    /// lines and `#` comments ignored, a bare label declares an isolated
    /// node. Node order follows first appearance.
    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let mut nodes: Vec<String> = Vec::new();
        let mut seen = HashSet::new();
        let mut edges: Vec<(String, String)> = Vec::new();
        let declare = |name: &str, nodes: &mut Vec<String>, seen: &mut HashSet<String>| {
            if seen.insert(name.to_owned()) {
                nodes.push(name.to_owned());
            }
        };
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some((lhs, rhs)) = line.split_once("->") {
                let (a, b) = (lhs.trim(), rhs.trim());
                if a.is_empty() || b.is_empty() {
                    return Err(GraphError::Parse {
                        line: lineno + 1,
                        message: format!("malformed edge: {raw:?}"),
                    });
                }
                declare(a, &mut nodes, &mut seen);
                declare(b, &mut nodes, &mut seen);
                edges.push((a.to_owned(), b.to_owned()));
            } else if line.split_whitespace().count() == 1 {
                declare(line, &mut nodes, &mut seen);
            } else {
                return Err(GraphError::Parse {
                    line: lineno + 1,
                    message: format!("expected `parent -> child` or a bare label: {raw:?}"),
                });
            }
        }
        let edge_refs: Vec<(&str, &str)> =
            edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let node_refs: Vec<&str> = nodes.iter().map(String::as_str).collect();
        Dag::new(&node_refs, &edge_refs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackdoorVerdict {
    pub satisfied: bool,
    pub reason: Option<String>,
}

/// Built-in diagram identifiers.
///
/// `Fig1*` is the point-treatment diagram over `{X, Z, U, Y}` (the `O`
/// variant adds the treatment-selection edge `X -> Z`); `Fig2*` is the
/// two-time-point diagram over `{Z1, X, Z2, U, Y}` (the `O` variant adds
/// `X -> Z2`). `Fig2NullAlt` is the alternative null diagram in which
/// `Z1 -> X` is absent while `X -> Y` is present.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureId {
    Fig1E,
    Fig1O,
    Fig2E,
    Fig2O,
    Fig2NullAlt,
}

impl std::str::FromStr for FigureId {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fig1_E" => Ok(FigureId::Fig1E),
            "fig1_O" => Ok(FigureId::Fig1O),
            "fig2_E" => Ok(FigureId::Fig2E),
            "fig2_O" => Ok(FigureId::Fig2O),
            "fig2_null_alt" => Ok(FigureId::Fig2NullAlt),
            other => Err(GraphError::UnknownFigure(other.to_owned())),
        }
    }
}

/// Returns a built-in diagram. Treatment-effect arrows are included by
/// default; `under_null` removes them, reproducing the no-treatment-effect
/// variants.
pub fn builtin_figure(id: FigureId, under_null: bool) -> Dag {
    let dag = match id {
        FigureId::Fig1E | FigureId::Fig1O => {
            let mut edges = vec![("X", "Y"), ("U", "X"), ("U", "Y")];
            if !under_null {
                edges.push(("Z", "Y"));
            }
            if id == FigureId::Fig1O {
                edges.push(("X", "Z"));
            }
            Dag::new(&["X", "Z", "U", "Y"], &edges)
        }
        FigureId::Fig2E | FigureId::Fig2O => {
            let mut edges = vec![("Z1", "X"), ("Z1", "Z2"), ("U", "X"), ("U", "Y")];
            if !under_null {
                edges.extend([("Z1", "Y"), ("Z2", "Y"), ("X", "Y")]);
            }
            if id == FigureId::Fig2O {
                edges.push(("X", "Z2"));
            }
            Dag::new(&["Z1", "X", "Z2", "U", "Y"], &edges)
        }
        // Null diagram without treatment-confounder feedback: Z1 -> X is
        // omitted and X -> Y may be present. `under_null` is a no-op here.
        FigureId::Fig2NullAlt => Dag::new(
            &["Z1", "X", "Z2", "U", "Y"],
            &[("Z1", "Z2"), ("U", "X"), ("U", "Y"), ("X", "Y")],
        ),
    };
    dag.expect("built-in figures are valid DAGs")
}
