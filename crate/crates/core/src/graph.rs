//! Directed acyclic graphs over named nodes and the local structure queries
//! used to pick encoder inputs (parents, children, spouses, Markov blanket).
//!
//! Every set-valued query returns names in declared node order so that
//! downstream serialization is reproducible.

use alloc::collections::BinaryHeap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Immutable DAG. Topological order is computed once on construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DagRepr", into = "DagRepr")]
pub struct Dag {
    nodes: Vec<String>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    order: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct DagRepr {
    nodes: Vec<String>,
    edges: Vec<(String, String)>,
}

impl TryFrom<DagRepr> for Dag {
    type Error = Error;
    fn try_from(r: DagRepr) -> Result<Self> {
        Dag::new(r.nodes, r.edges)
    }
}

impl From<Dag> for DagRepr {
    fn from(d: Dag) -> Self {
        DagRepr { edges: d.edges(), nodes: d.nodes }
    }
}

impl Dag {
    /// Builds a DAG from declared nodes plus edges `(parent, child)`.
    ///
    /// Edge endpoints must be declared. Duplicate edges are collapsed.
    pub fn new<S: Into<String>>(nodes: Vec<S>, edges: Vec<(S, S)>) -> Result<Self> {
        let nodes: Vec<String> = nodes.into_iter().map(Into::into).collect();
        for (i, n) in nodes.iter().enumerate() {
            if nodes[..i].contains(n) {
                return Err(Error::DuplicateNode(n.clone()));
            }
        }
        let index = |name: &str| {
            nodes.iter().position(|n| n == name).ok_or_else(|| Error::UnknownNode(name.to_string()))
        };
        let p = nodes.len();
        let mut parents = vec![Vec::new(); p];
        let mut children = vec![Vec::new(); p];
        for (a, b) in edges {
            let (a, b): (String, String) = (a.into(), b.into());
            let (ia, ib) = (index(&a)?, index(&b)?);
            if ia == ib {
                return Err(Error::SelfLoop(a));
            }
            if !parents[ib].contains(&ia) {
                parents[ib].push(ia);
                children[ia].push(ib);
            }
        }
        for list in parents.iter_mut().chain(children.iter_mut()) {
            list.sort_unstable();
        }
        let order = topological_order(&nodes, &parents, &children)?;
        Ok(Dag { nodes, parents, children, order })
    }

    /// Parses the line-oriented text format: `parent -> child` per line, `#`
    /// starts a comment, and a bare name declares a node. Node order is the
    /// order of first appearance.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut nodes: Vec<String> = Vec::new();
        let mut edges: Vec<(String, String)> = Vec::new();
        let declare = |name: &str, nodes: &mut Vec<String>| {
            if !nodes.iter().any(|n| n == name) {
                nodes.push(name.to_string());
            }
        };
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: &str| Error::Parse { line: lineno + 1, message: message.into() };
            if let Some((a, b)) = line.split_once("->") {
                let (a, b) = (a.trim(), b.trim());
                if !valid_name(a) || !valid_name(b) {
                    return Err(parse_err("expected `parent -> child`"));
                }
                declare(a, &mut nodes);
                declare(b, &mut nodes);
                edges.push((a.to_string(), b.to_string()));
            } else if valid_name(line) {
                declare(line, &mut nodes);
            } else {
                return Err(parse_err("expected a node name or `parent -> child`"));
            }
        }
        Dag::new(nodes, edges)
    }

    /// Renders the text format accepted by [`Dag::parse_text`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            let _ = writeln!(out, "{n}");
        }
        for (a, b) in self.edges() {
            let _ = writeln!(out, "{a} -> {b}");
        }
        out
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Edges ordered by (child, parent) declared index.
    pub fn edges(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (c, ps) in self.parents.iter().enumerate() {
            for &p in ps {
                out.push((self.nodes[p].clone(), self.nodes[c].clone()));
            }
        }
        out
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.nodes.iter().position(|n| n == name).ok_or_else(|| Error::UnknownNode(name.into()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.nodes.iter().any(|n| n == name)
    }

    pub fn name(&self, index: usize) -> &str {
        &self.nodes[index]
    }

    pub fn parent_indices(&self, index: usize) -> &[usize] {
        &self.parents[index]
    }

    pub fn child_indices(&self, index: usize) -> &[usize] {
        &self.children[index]
    }

    /// Cached topological order as declared indices.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn topological_order(&self) -> Vec<String> {
        self.order.iter().map(|&i| self.nodes[i].clone()).collect()
    }

    pub fn parents(&self, name: &str) -> Result<Vec<String>> {
        let i = self.index_of(name)?;
        Ok(self.names(&self.parents[i]))
    }

    pub fn children(&self, name: &str) -> Result<Vec<String>> {
        let i = self.index_of(name)?;
        Ok(self.names(&self.children[i]))
    }

    /// `Pa(t) ∪ Ch(t) ∪ Pa(Ch(t)) \ {t}` in declared order.
    pub fn markov_blanket(&self, name: &str) -> Result<Vec<String>> {
        let t = self.index_of(name)?;
        Ok(self.names(&self.markov_blanket_indices(t)))
    }

    pub fn markov_blanket_indices(&self, t: usize) -> Vec<usize> {
        let mut member = vec![false; self.nodes.len()];
        for &p in &self.parents[t] {
            member[p] = true;
        }
        for &c in &self.children[t] {
            member[c] = true;
            for &s in &self.parents[c] {
                member[s] = true;
            }
        }
        member[t] = false;
        member.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
    }

    /// Every strict ancestor of the given nodes, in declared order.
    pub fn ancestor_indices(&self, of: &[usize]) -> Vec<usize> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack: Vec<usize> = of.iter().flat_map(|&i| self.parents[i].iter().copied()).collect();
        while let Some(v) = stack.pop() {
            if !seen[v] {
                seen[v] = true;
                stack.extend(self.parents[v].iter().copied());
            }
        }
        seen.iter().enumerate().filter(|(_, &s)| s).map(|(i, _)| i).collect()
    }

    fn names(&self, idx: &[usize]) -> Vec<String> {
        idx.iter().map(|&i| self.nodes[i].clone()).collect()
    }
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(|c| c.is_whitespace() || c == ',' || c == '>')
}

/// Kahn's algorithm with ties broken by declared index.
fn topological_order(nodes: &[String], parents: &[Vec<usize>], children: &[Vec<usize>]) -> Result<Vec<usize>> {
    let p = nodes.len();
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..p).filter(|&i| indegree[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(p);
    while let Some(Reverse(v)) = ready.pop() {
        order.push(v);
        for &c in &children[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.push(Reverse(c));
            }
        }
    }
    if order.len() == p {
        return Ok(order);
    }
    Err(Error::CycleDetected(find_cycle(nodes, parents, &indegree)))
}

/// Walks parent links among the unprocessed nodes until one repeats.
fn find_cycle(nodes: &[String], parents: &[Vec<usize>], indegree: &[usize]) -> Vec<String> {
    let stuck = |v: usize| indegree[v] > 0;
    let start = (0..nodes.len()).find(|&v| stuck(v)).expect("a cycle leaves a node unprocessed");
    let mut path = vec![start];
    let mut v = start;
    loop {
        v = *parents[v].iter().find(|&&u| stuck(u)).expect("stuck node has a stuck parent");
        if let Some(pos) = path.iter().position(|&u| u == v) {
            let mut cycle = vec![nodes[v].clone()];
            cycle.extend(path[pos + 1..].iter().rev().map(|&i| nodes[i].clone()));
            cycle.push(nodes[v].clone());
            return cycle;
        }
        path.push(v);
    }
}

/// Validates a node/edge list and returns its topological order.
pub fn validate<S: Into<String>>(nodes: Vec<S>, edges: Vec<(S, S)>) -> Result<Vec<String>> {
    Dag::new(nodes, edges).map(|d| d.topological_order())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seven_node() -> Dag {
        Dag::parse_text(
            "C1\nC2\nZ\nX\nT\nP\nY\n\
             C1 -> Z\nC2 -> Z\nC1 -> X\nC2 -> X\n\
             C1 -> T\nX -> T\nZ -> T\nT -> P\nT -> Y\n",
        )
        .unwrap()
    }

    #[test]
    fn chain_order() {
        assert_eq!(validate(vec!["A", "B", "C"], vec![("A", "B"), ("B", "C")]).unwrap(), ["A", "B", "C"]);
    }

    #[test]
    fn two_cycle_detected() {
        match validate(vec!["A", "B"], vec![("A", "B"), ("B", "A")]) {
            Err(Error::CycleDetected(c)) => {
                assert!(c.contains(&"A".to_string()) && c.contains(&"B".to_string()));
                assert_eq!(c.first(), c.last());
            }
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn longer_cycle_reports_members() {
        let err = Dag::parse_text("S -> A\nA -> B\nB -> C\nC -> A\n").unwrap_err();
        let Error::CycleDetected(c) = err else { panic!() };
        assert_eq!(c.len(), 4);
        assert!(!c.contains(&"S".to_string()));
    }

    #[test]
    fn self_loop_rejected() {
        assert_eq!(validate(vec!["A"], vec![("A", "A")]), Err(Error::SelfLoop("A".into())));
    }

    #[test]
    fn undeclared_endpoint_rejected() {
        assert_eq!(validate(vec!["A"], vec![("A", "B")]), Err(Error::UnknownNode("B".into())));
    }

    #[test]
    fn tie_break_follows_declaration() {
        let order = validate(vec!["B", "A", "C"], vec![("A", "C")]).unwrap();
        assert_eq!(order, ["B", "A", "C"]);
        let order = validate(vec!["C", "A", "B"], vec![("A", "C")]).unwrap();
        assert_eq!(order, ["A", "C", "B"]);
    }

    #[test]
    fn seven_node_order_and_blanket() {
        let dag = seven_node();
        let order = dag.topological_order();
        let pos = |n: &str| order.iter().position(|x| x == n).unwrap();
        for c in ["C1", "C2"] {
            assert!(pos(c) < pos("Z") && pos(c) < pos("X"));
        }
        assert!(pos("T") < pos("P") && pos("T") < pos("Y"));
        assert_eq!(dag.markov_blanket("T").unwrap(), ["C1", "Z", "X", "P", "Y"]);
    }

    #[test]
    fn motivating_figure_blanket() {
        let dag = Dag::parse_text("C -> T\nC -> S\nD -> S\nD -> N\n").unwrap();
        assert_eq!(dag.markov_blanket("T").unwrap(), ["C"]);
        // S has parents C and D, so C and D are spouses through S
        assert_eq!(dag.markov_blanket("C").unwrap(), ["T", "S", "D"]);
    }

    #[test]
    fn isolated_node_has_empty_blanket() {
        let dag = Dag::new(vec!["T", "A"], vec![]).unwrap();
        assert!(dag.markov_blanket("T").unwrap().is_empty());
        assert_eq!(dag.markov_blanket("Q"), Err(Error::UnknownNode("Q".into())));
    }

    #[test]
    fn text_roundtrip_and_comments() {
        let dag = Dag::parse_text("# header\nA -> B # trailing\n\nC\n").unwrap();
        assert_eq!(dag.nodes(), ["A", "B", "C"]);
        assert_eq!(Dag::parse_text(&dag.to_text()).unwrap(), dag);
        assert!(matches!(Dag::parse_text("A -> \n"), Err(Error::Parse { line: 1, .. })));
    }
}
