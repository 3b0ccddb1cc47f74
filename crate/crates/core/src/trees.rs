//! Ranked alphabets, finite trees, rational trees as rooted graphs, and hole
//! substitution.
//!
//! Holes are the rank-0 symbols `#1..#r` where `r` is the largest rank of a
//! function symbol or variable. `_|_` is the bottom constant used for cut
//! points and empty choices.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use itertools::Itertools;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Symbol {
    Hole(usize),
    Bottom,
    Named(Arc<str>, usize),
}

impl Symbol {
    pub fn new(name: &str, rank: usize) -> Self {
        Symbol::Named(Arc::from(name), rank)
    }

    pub fn hole(i: usize) -> Self {
        assert!(i >= 1, "holes are numbered from 1");
        Symbol::Hole(i)
    }

    pub fn rank(&self) -> usize {
        match self {
            Symbol::Named(_, r) => *r,
            _ => 0,
        }
    }

    pub fn as_hole(&self) -> Option<usize> {
        match self {
            Symbol::Hole(i) => Some(*i),
            _ => None,
        }
    }

    pub fn is_bottom(&self) -> bool {
        matches!(self, Symbol::Bottom)
    }

    pub fn name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Hole(i) => write!(f, "#{i}"),
            Symbol::Bottom => write!(f, "_|_"),
            Symbol::Named(n, _) => write!(f, "{n}"),
        }
    }
}

/// Function symbols Σ and variables X; holes are derived from the largest rank.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankedAlphabet {
    sigma: BTreeMap<Arc<str>, usize>,
    vars: BTreeMap<Arc<str>, usize>,
}

impl RankedAlphabet {
    pub fn new(sigma: &[(&str, usize)], vars: &[(&str, usize)]) -> Result<Self> {
        let mut s: BTreeMap<Arc<str>, usize> = BTreeMap::new();
        let mut v: BTreeMap<Arc<str>, usize> = BTreeMap::new();
        for &(n, r) in sigma {
            if s.insert(Arc::from(n), r).is_some_and(|old| old != r) {
                return Err(Error::InvalidAlphabet(format!("symbol {n} declared with two ranks")));
            }
        }
        for &(n, r) in vars {
            if v.insert(Arc::from(n), r).is_some_and(|old| old != r) {
                return Err(Error::InvalidAlphabet(format!("variable {n} declared with two ranks")));
            }
        }
        for (n, r) in &v {
            if s.get(n).is_some_and(|r2| r2 != r) {
                return Err(Error::InvalidAlphabet(format!(
                    "{n} is both a symbol and a variable with different ranks"
                )));
            }
        }
        for n in s.keys().chain(v.keys()) {
            if n.is_empty() || n.starts_with('#') || &**n == "_|_" {
                return Err(Error::InvalidAlphabet(format!("reserved name {n}")));
            }
        }
        let a = RankedAlphabet { sigma: s, vars: v };
        if a.r_max() == 0 {
            return Err(Error::InvalidAlphabet("no symbol of rank at least 1".into()));
        }
        Ok(a)
    }

    pub fn r_max(&self) -> usize {
        self.sigma.values().chain(self.vars.values()).copied().max().unwrap_or(0)
    }

    pub fn sigma(&self) -> Vec<Symbol> {
        self.sigma.iter().map(|(n, &r)| Symbol::Named(n.clone(), r)).collect()
    }

    pub fn vars(&self) -> Vec<Symbol> {
        self.vars.iter().map(|(n, &r)| Symbol::Named(n.clone(), r)).collect()
    }

    pub fn holes(&self) -> Vec<Symbol> {
        (1..=self.r_max()).map(Symbol::Hole).collect()
    }

    /// Σ ∪ X without duplicates, sorted.
    pub fn sigma_and_vars(&self) -> Vec<Symbol> {
        let set: BTreeSet<Symbol> = self.sigma().into_iter().chain(self.vars()).collect();
        set.into_iter().collect()
    }

    pub fn is_var(&self, s: &Symbol) -> bool {
        matches!(s, Symbol::Named(n, r) if self.vars.get(n) == Some(r))
    }

    pub fn is_sigma(&self, s: &Symbol) -> bool {
        matches!(s, Symbol::Named(n, r) if self.sigma.get(n) == Some(r))
    }
}

/// A finite sequence of positive integers, ordered length-lexicographically.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct Position(pub Vec<usize>);

impl Position {
    pub fn root() -> Self {
        Position(Vec::new())
    }

    pub fn child(&self, d: usize) -> Self {
        let mut v = self.0.clone();
        v.push(d);
        Position(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "e" {
            return Ok(Position::root());
        }
        s.split('.')
            .map(|p| match p.parse::<usize>() {
                Ok(d) if d >= 1 => Ok(d),
                _ => Err(Error::Semantic(format!("bad position component {p:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Position)
    }
}

impl Ord for Position {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Position {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "e");
        }
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "{}", parts.join("."))
    }
}

impl From<&[usize]> for Position {
    fn from(v: &[usize]) -> Self {
        Position(v.to_vec())
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct FiniteTree {
    pub sym: Symbol,
    pub children: Vec<FiniteTree>,
}

impl FiniteTree {
    /// Panics if the child count differs from the rank of `sym`.
    pub fn node(sym: Symbol, children: Vec<FiniteTree>) -> Self {
        assert_eq!(sym.rank(), children.len(), "arity mismatch at {sym}");
        FiniteTree { sym, children }
    }

    pub fn leaf(sym: Symbol) -> Self {
        FiniteTree::node(sym, Vec::new())
    }

    pub fn constant(name: &str) -> Self {
        FiniteTree::leaf(Symbol::new(name, 0))
    }

    pub fn hole(i: usize) -> Self {
        FiniteTree::leaf(Symbol::hole(i))
    }

    pub fn bottom() -> Self {
        FiniteTree::leaf(Symbol::Bottom)
    }

    pub fn apply(name: &str, children: Vec<FiniteTree>) -> Self {
        let r = children.len();
        FiniteTree::node(Symbol::new(name, r), children)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut p = TermParser { s: text.as_bytes(), i: 0 };
        let t = p.term()?;
        p.ws();
        if p.i != p.s.len() {
            return Err(p.err("trailing input"));
        }
        Ok(t)
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(FiniteTree::size).sum::<usize>()
    }

    pub fn height(&self) -> usize {
        self.children.iter().map(|c| 1 + c.height()).max().unwrap_or(0)
    }

    pub fn contains_bottom(&self) -> bool {
        self.sym.is_bottom() || self.children.iter().any(FiniteTree::contains_bottom)
    }

    pub fn symbols(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        self.visit(&mut |t| {
            out.insert(t.sym.clone());
        });
        out
    }

    pub fn holes(&self) -> BTreeSet<usize> {
        self.symbols().iter().filter_map(Symbol::as_hole).collect()
    }

    pub fn is_hole(&self) -> bool {
        self.sym.as_hole().is_some()
    }

    fn visit<'a>(&'a self, f: &mut impl FnMut(&'a FiniteTree)) {
        f(self);
        for c in &self.children {
            c.visit(f);
        }
    }

    /// All positions in length-lexicographic order.
    pub fn positions(&self) -> Vec<Position> {
        let mut out = Vec::new();
        let mut queue = VecDeque::from([(self, Position::root())]);
        while let Some((t, u)) = queue.pop_front() {
            for (k, c) in t.children.iter().enumerate() {
                queue.push_back((c, u.child(k + 1)));
            }
            out.push(u);
        }
        out
    }

    pub fn get(&self, u: &Position) -> Option<&FiniteTree> {
        let mut t = self;
        for &d in &u.0 {
            t = t.children.get(d.checked_sub(1)?)?;
        }
        Some(t)
    }

    pub fn subtree_at(&self, u: &Position) -> Result<FiniteTree> {
        self.get(u).cloned().ok_or_else(|| Error::PositionNotInTree(u.to_string()))
    }

    pub fn replace_at(&self, u: &Position, t2: &FiniteTree) -> Result<FiniteTree> {
        fn go(t: &FiniteTree, path: &[usize], t2: &FiniteTree) -> Option<FiniteTree> {
            match path.split_first() {
                None => Some(t2.clone()),
                Some((&d, rest)) => {
                    let idx = d.checked_sub(1)?;
                    let new_child = go(t.children.get(idx)?, rest, t2)?;
                    let mut children = t.children.clone();
                    children[idx] = new_child;
                    Some(FiniteTree { sym: t.sym.clone(), children })
                }
            }
        }
        go(self, &u.0, t2).ok_or_else(|| Error::PositionNotInTree(u.to_string()))
    }

    /// Positions of leaves labeled with hole `i`, length-lexicographically.
    pub fn hole_leaves(&self, i: usize) -> Vec<Position> {
        let mut out = Vec::new();
        let mut queue = VecDeque::from([(self, Position::root())]);
        while let Some((t, u)) = queue.pop_front() {
            if t.sym == Symbol::Hole(i) {
                out.push(u.clone());
            }
            for (k, c) in t.children.iter().enumerate() {
                queue.push_back((c, u.child(k + 1)));
            }
        }
        out
    }

    /// Replaces every leaf `#i` by `m[i]` (the same tree at every occurrence).
    pub fn hole_substitute_uniform(&self, m: &BTreeMap<usize, FiniteTree>) -> Result<FiniteTree> {
        if let Some(i) = self.sym.as_hole() {
            return m.get(&i).cloned().ok_or(Error::MissingHoleImage(i));
        }
        let children = self
            .children
            .iter()
            .map(|c| c.hole_substitute_uniform(m))
            .collect::<Result<Vec<_>>>()?;
        Ok(FiniteTree { sym: self.sym.clone(), children })
    }

    /// Replaces each hole leaf by the image of its own position.
    pub fn hole_substitute_pointwise(&self, m: &BTreeMap<Position, FiniteTree>) -> Result<FiniteTree> {
        fn go(t: &FiniteTree, u: &mut Vec<usize>, m: &BTreeMap<Position, FiniteTree>) -> Result<FiniteTree> {
            if t.is_hole() {
                let p = Position(u.clone());
                return m.get(&p).cloned().ok_or_else(|| Error::MissingLeafImage(p.to_string()));
            }
            let mut children = Vec::with_capacity(t.children.len());
            for (k, c) in t.children.iter().enumerate() {
                u.push(k + 1);
                children.push(go(c, u, m)?);
                u.pop();
            }
            Ok(FiniteTree { sym: t.sym.clone(), children })
        }
        go(self, &mut Vec::new(), m)
    }

    /// `f(#1,...,#k)` for a symbol of rank k.
    pub fn of_symbol(sym: &Symbol) -> Self {
        FiniteTree::node(sym.clone(), (1..=sym.rank()).map(FiniteTree::hole).collect())
    }
}

impl fmt::Display for FiniteTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.sym)?;
        if !self.children.is_empty() {
            write!(f, "(")?;
            for (k, c) in self.children.iter().enumerate() {
                if k > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{c}")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

pub fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'_' | b'\'' | b'$' | b'@' | b'%' | b'.')
}

struct TermParser<'a> {
    s: &'a [u8],
    i: usize,
}

impl TermParser<'_> {
    fn err(&self, msg: &str) -> Error {
        let before = &self.s[..self.i.min(self.s.len())];
        let line = 1 + before.iter().filter(|&&b| b == b'\n').count();
        let col = 1 + before.iter().rev().take_while(|&&b| b != b'\n').count();
        Error::Syntax { line, col, msg: msg.to_string() }
    }

    fn ws(&mut self) {
        while self.i < self.s.len() && self.s[self.i].is_ascii_whitespace() {
            self.i += 1;
        }
    }

    fn term(&mut self) -> Result<FiniteTree> {
        self.ws();
        if self.s[self.i..].starts_with(b"_|_") {
            self.i += 3;
            return Ok(FiniteTree::bottom());
        }
        if self.s.get(self.i) == Some(&b'#') {
            self.i += 1;
            let start = self.i;
            while self.i < self.s.len() && self.s[self.i].is_ascii_digit() {
                self.i += 1;
            }
            let n: usize = std::str::from_utf8(&self.s[start..self.i])
                .ok()
                .and_then(|d| d.parse().ok())
                .filter(|&n| n >= 1)
                .ok_or_else(|| self.err("expected hole number"))?;
            return Ok(FiniteTree::hole(n));
        }
        let start = self.i;
        while self.i < self.s.len() && is_ident_byte(self.s[self.i]) {
            self.i += 1;
        }
        if start == self.i {
            return Err(self.err("expected a symbol"));
        }
        let name = std::str::from_utf8(&self.s[start..self.i]).unwrap().to_string();
        self.ws();
        let mut children = Vec::new();
        if self.s.get(self.i) == Some(&b'(') {
            self.i += 1;
            loop {
                children.push(self.term()?);
                self.ws();
                match self.s.get(self.i) {
                    Some(b',') => self.i += 1,
                    Some(b')') => {
                        self.i += 1;
                        break;
                    }
                    _ => return Err(self.err("expected ',' or ')'")),
                }
            }
        }
        Ok(FiniteTree::apply(&name, children))
    }
}

/// `2^-k`, or zero when `k` is infinite.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Distance(pub Option<u32>);

impl Distance {
    pub const ZERO: Distance = Distance(None);
    pub const ONE: Distance = Distance(Some(0));

    pub fn to_f64(self) -> f64 {
        match self.0 {
            None => 0.0,
            Some(k) => 0.5f64.powi(k as i32),
        }
    }
}

impl Ord for Distance {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.0, other.0) {
            (None, None) => Ordering::Equal,
            (None, Some(_)) => Ordering::Less,
            (Some(_), None) => Ordering::Greater,
            (Some(a), Some(b)) => b.cmp(&a),
        }
    }
}

impl PartialOrd for Distance {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            None => write!(f, "0"),
            Some(0) => write!(f, "1"),
            Some(k) => write!(f, "1/{}", 1u128 << k.min(120)),
        }
    }
}

/// Least depth at which the two trees carry different labels.
pub fn first_disagreement(t1: &FiniteTree, t2: &FiniteTree) -> Option<usize> {
    if t1.sym != t2.sym {
        return Some(0);
    }
    t1.children
        .iter()
        .zip(&t2.children)
        .filter_map(|(a, b)| first_disagreement(a, b))
        .min()
        .map(|k| k + 1)
}

pub fn tree_distance(t1: &FiniteTree, t2: &FiniteTree) -> Distance {
    if t1.contains_bottom() != t2.contains_bottom() {
        return Distance::ONE;
    }
    Distance(first_disagreement(t1, t2).map(|k| k as u32))
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct GraphNode {
    pub sym: Symbol,
    pub succ: Vec<usize>,
}

/// A rooted finite graph; its unfolding from the root is a rational tree.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct TreeGraph {
    pub nodes: Vec<GraphNode>,
    pub root: usize,
}

/// Hole leaves of a graph up to a depth, plus whether there are infinitely many.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HoleLeaves {
    pub positions: Vec<Position>,
    pub infinite: bool,
}

impl TreeGraph {
    /// Validates arities and drops nodes unreachable from the root.
    pub fn new(nodes: Vec<GraphNode>, root: usize) -> Result<Self> {
        if root >= nodes.len() {
            return Err(Error::Semantic("root is not a node".into()));
        }
        for (k, n) in nodes.iter().enumerate() {
            if n.succ.len() != n.sym.rank() {
                return Err(Error::RankMismatch(format!("node {k} labeled {} has {} successors", n.sym, n.succ.len())));
            }
            if n.succ.iter().any(|&s| s >= nodes.len()) {
                return Err(Error::Semantic(format!("node {k} has a dangling edge")));
            }
        }
        Ok(TreeGraph { nodes, root }.restrict_reachable())
    }

    pub fn from_tree(t: &FiniteTree) -> Self {
        fn go(t: &FiniteTree, nodes: &mut Vec<GraphNode>) -> usize {
            let k = nodes.len();
            nodes.push(GraphNode { sym: t.sym.clone(), succ: Vec::new() });
            let succ: Vec<usize> = t.children.iter().map(|c| go(c, nodes)).collect();
            nodes[k].succ = succ;
            k
        }
        let mut nodes = Vec::new();
        go(t, &mut nodes);
        TreeGraph { nodes, root: 0 }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn restrict_reachable(self) -> Self {
        let mut index = vec![usize::MAX; self.nodes.len()];
        let mut order = Vec::new();
        let mut queue = VecDeque::from([self.root]);
        index[self.root] = 0;
        order.push(self.root);
        while let Some(v) = queue.pop_front() {
            for &w in &self.nodes[v].succ {
                if index[w] == usize::MAX {
                    index[w] = order.len();
                    order.push(w);
                    queue.push_back(w);
                }
            }
        }
        let nodes = order
            .iter()
            .map(|&v| GraphNode {
                sym: self.nodes[v].sym.clone(),
                succ: self.nodes[v].succ.iter().map(|&w| index[w]).collect(),
            })
            .collect();
        TreeGraph { nodes, root: 0 }
    }

    pub fn symbols(&self) -> BTreeSet<Symbol> {
        self.nodes.iter().map(|n| n.sym.clone()).collect()
    }

    /// True when the unfolding is finite (no cycle reachable from the root).
    pub fn is_acyclic(&self) -> bool {
        // 0 = new, 1 = on stack, 2 = done
        fn dfs(g: &TreeGraph, v: usize, mark: &mut [u8]) -> bool {
            mark[v] = 1;
            for &w in &g.nodes[v].succ {
                if mark[w] == 1 || (mark[w] == 0 && !dfs(g, w, mark)) {
                    return false;
                }
            }
            mark[v] = 2;
            true
        }
        dfs(self, self.root, &mut vec![0; self.nodes.len()])
    }

    pub fn to_finite(&self) -> Option<FiniteTree> {
        fn go(g: &TreeGraph, v: usize) -> FiniteTree {
            let n = &g.nodes[v];
            FiniteTree { sym: n.sym.clone(), children: n.succ.iter().map(|&w| go(g, w)).collect() }
        }
        self.is_acyclic().then(|| go(self, self.root))
    }

    /// Depth-`depth` truncation; nodes of positive rank at the cut become `_|_`.
    pub fn unfold(&self, depth: usize) -> FiniteTree {
        fn go(g: &TreeGraph, v: usize, depth: usize) -> FiniteTree {
            let n = &g.nodes[v];
            if depth == 0 && !n.succ.is_empty() {
                return FiniteTree::bottom();
            }
            FiniteTree {
                sym: n.sym.clone(),
                children: n.succ.iter().map(|&w| go(g, w, depth.saturating_sub(1))).collect(),
            }
        }
        go(self, self.root, depth)
    }

    /// Nodes lying on some cycle.
    fn cyclic_nodes(&self) -> Vec<bool> {
        let n = self.nodes.len();
        let reach = |from: usize| {
            let mut seen = vec![false; n];
            let mut stack: Vec<usize> = self.nodes[from].succ.clone();
            while let Some(v) = stack.pop() {
                if !seen[v] {
                    seen[v] = true;
                    stack.extend(self.nodes[v].succ.iter().copied());
                }
            }
            seen
        };
        (0..n).map(|v| reach(v)[v]).collect()
    }

    pub fn hole_leaves(&self, i: usize, max_depth: usize) -> HoleLeaves {
        let mut positions = Vec::new();
        let mut queue = VecDeque::from([(self.root, Position::root())]);
        while let Some((v, u)) = queue.pop_front() {
            if self.nodes[v].sym == Symbol::Hole(i) {
                positions.push(u.clone());
            }
            if u.len() < max_depth {
                for (k, &w) in self.nodes[v].succ.iter().enumerate() {
                    queue.push_back((w, u.child(k + 1)));
                }
            }
        }
        let cyclic = self.cyclic_nodes();
        let mut from_cycle = cyclic.clone();
        let mut stack: Vec<usize> = (0..self.nodes.len()).filter(|&v| cyclic[v]).collect();
        while let Some(v) = stack.pop() {
            for &w in &self.nodes[v].succ {
                if !from_cycle[w] {
                    from_cycle[w] = true;
                    stack.push(w);
                }
            }
        }
        let infinite = (0..self.nodes.len()).any(|v| from_cycle[v] && self.nodes[v].sym == Symbol::Hole(i));
        HoleLeaves { positions, infinite }
    }

    /// Bisimulation quotient, numbered in breadth-first order from the root.
    pub fn minimize(&self) -> TreeGraph {
        let n = self.nodes.len();
        let mut block: Vec<usize> = {
            let mut ids: HashMap<&Symbol, usize> = HashMap::new();
            self.nodes
                .iter()
                .map(|nd| {
                    let k = ids.len();
                    *ids.entry(&nd.sym).or_insert(k)
                })
                .collect()
        };
        loop {
            let mut ids: HashMap<(usize, Vec<usize>), usize> = HashMap::new();
            let next: Vec<usize> = (0..n)
                .map(|v| {
                    let sig = (block[v], self.nodes[v].succ.iter().map(|&w| block[w]).collect());
                    let k = ids.len();
                    *ids.entry(sig).or_insert(k)
                })
                .collect();
            let stable = ids.len() == block.iter().collect::<BTreeSet<_>>().len();
            block = next;
            if stable {
                break;
            }
        }
        let mut rep: BTreeMap<usize, usize> = BTreeMap::new();
        for v in 0..n {
            rep.entry(block[v]).or_insert(v);
        }
        let nodes = (0..n)
            .map(|v| {
                let r = rep[&block[v]];
                GraphNode {
                    sym: self.nodes[r].sym.clone(),
                    succ: self.nodes[r].succ.iter().map(|&w| rep[&block[w]]).collect(),
                }
            })
            .collect();
        TreeGraph { nodes, root: rep[&block[self.root]] }.restrict_reachable()
    }

    pub fn graph_equal(&self, other: &TreeGraph) -> bool {
        self.minimize() == other.minimize()
    }

    /// Replaces every `#i`-labeled node by a copy of `m[i]`.
    pub fn graph_hole_substitute(&self, m: &BTreeMap<usize, TreeGraph>) -> Result<TreeGraph> {
        let mut nodes = self.nodes.clone();
        let mut entry: BTreeMap<usize, usize> = BTreeMap::new();
        for nd in &self.nodes {
            if let Some(i) = nd.sym.as_hole() {
                if entry.contains_key(&i) {
                    continue;
                }
                let g = m.get(&i).ok_or(Error::MissingHoleImage(i))?;
                let off = nodes.len();
                nodes.extend(g.nodes.iter().map(|gn| GraphNode {
                    sym: gn.sym.clone(),
                    succ: gn.succ.iter().map(|&w| w + off).collect(),
                }));
                entry.insert(i, g.root + off);
            }
        }
        let redirect = |v: usize| match self.nodes.get(v).and_then(|nd| nd.sym.as_hole()) {
            Some(i) => entry[&i],
            None => v,
        };
        for v in 0..self.nodes.len() {
            let succ: Vec<usize> = nodes[v].succ.iter().map(|&w| redirect(w)).collect();
            nodes[v].succ = succ;
        }
        let root = redirect(self.root);
        Ok(TreeGraph { nodes, root }.restrict_reachable())
    }

    /// Parses `n0 = f(n1, n0); n1 = #1; root n0`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut names: BTreeMap<String, usize> = BTreeMap::new();
        let mut defs: Vec<(String, String, Vec<String>)> = Vec::new();
        let mut root = None;
        for stmt in text.split([';', '\n']).map(str::trim).filter(|s| !s.is_empty()) {
            if let Some(r) = stmt.strip_prefix("root ") {
                root = Some(r.trim().to_string());
                continue;
            }
            let (lhs, rhs) = stmt
                .split_once('=')
                .ok_or_else(|| Error::Semantic(format!("expected node equation, got {stmt:?}")))?;
            let lhs = lhs.trim().to_string();
            let rhs = rhs.trim();
            let (sym, args) = match rhs.split_once('(') {
                Some((s, rest)) => {
                    let inner = rest
                        .strip_suffix(')')
                        .ok_or_else(|| Error::Semantic(format!("unclosed argument list in {stmt:?}")))?;
                    (s.trim().to_string(), inner.split(',').map(|a| a.trim().to_string()).collect())
                }
                None => (rhs.to_string(), Vec::new()),
            };
            if names.insert(lhs.clone(), defs.len()).is_some() {
                return Err(Error::Semantic(format!("node {lhs} defined twice")));
            }
            defs.push((lhs, sym, args));
        }
        let mut nodes = Vec::new();
        for (_, sym, args) in &defs {
            let s = if sym == "_|_" {
                Symbol::Bottom
            } else if let Some(h) = sym.strip_prefix('#') {
                Symbol::hole(h.parse().map_err(|_| Error::Semantic(format!("bad hole {sym}")))?)
            } else {
                Symbol::new(sym, args.len())
            };
            let succ = args
                .iter()
                .map(|a| names.get(a).copied().ok_or_else(|| Error::Semantic(format!("undefined node {a}"))))
                .collect::<Result<Vec<_>>>()?;
            nodes.push(GraphNode { sym: s, succ });
        }
        let root = match root {
            Some(r) => *names.get(&r).ok_or_else(|| Error::Semantic(format!("undefined root {r}")))?,
            None if !defs.is_empty() => 0,
            None => return Err(Error::Semantic("empty graph".into())),
        };
        TreeGraph::new(nodes, root)
    }
}

impl fmt::Display for TreeGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, nd) in self.nodes.iter().enumerate() {
            write!(f, "n{k} = {}", nd.sym)?;
            if !nd.succ.is_empty() {
                let args: Vec<String> = nd.succ.iter().map(|w| format!("n{w}")).collect();
                write!(f, "({})", args.join(", "))?;
            }
            write!(f, "; ")?;
        }
        write!(f, "root n{}", self.root)
    }
}

/// All finite trees over `symbols` with at most `max_size` nodes, ordered by size.
pub fn enumerate_trees(symbols: &[Symbol], max_size: usize) -> Vec<FiniteTree> {
    // by_size[n] holds all trees of exactly n nodes
    let mut by_size: Vec<Vec<FiniteTree>> = vec![Vec::new(); max_size + 1];
    for n in 1..=max_size {
        let mut out = Vec::new();
        for s in symbols {
            let r = s.rank();
            if r == 0 {
                if n == 1 {
                    out.push(FiniteTree::leaf(s.clone()));
                }
                continue;
            }
            if n < 1 + r {
                continue;
            }
            for sizes in compositions(n - 1, r) {
                let pools: Vec<&Vec<FiniteTree>> = sizes.iter().map(|&k| &by_size[k]).collect();
                for combo in pools.iter().map(|p| p.iter()).multi_cartesian_product() {
                    out.push(FiniteTree::node(s.clone(), combo.into_iter().cloned().collect()));
                }
            }
        }
        by_size[n] = out;
    }
    by_size.into_iter().flatten().collect()
}

/// Ordered ways of writing `total` as `parts` positive integers.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 0 {
        return if total == 0 { vec![Vec::new()] } else { Vec::new() };
    }
    let mut out = Vec::new();
    for first in 1..=total.saturating_sub(parts - 1) {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> FiniteTree {
        FiniteTree::parse(s).unwrap()
    }

    fn pos(s: &str) -> Position {
        Position::parse(s).unwrap()
    }

    fn comb() -> TreeGraph {
        TreeGraph::parse("n0 = f(n0, n1); n1 = #1; root n0").unwrap()
    }

    #[test]
    fn alphabet_validation() {
        assert!(RankedAlphabet::new(&[("a", 0)], &[]).is_err());
        let a = RankedAlphabet::new(&[("f", 2), ("a", 0)], &[("x", 1), ("f", 2)]).unwrap();
        assert_eq!(a.r_max(), 2);
        assert_eq!(a.holes(), vec![Symbol::hole(1), Symbol::hole(2)]);
        assert!(a.is_var(&Symbol::new("f", 2)) && a.is_sigma(&Symbol::new("f", 2)));
        assert!(RankedAlphabet::new(&[("f", 2)], &[("f", 1)]).is_err());
    }

    #[test]
    fn subtree_and_replace() {
        let fig = t("g(#1,f(g(a,#1)))");
        assert_eq!(t("f(a,b)").subtree_at(&pos("e")).unwrap(), t("f(a,b)"));
        assert_eq!(t("f(a,b)").subtree_at(&pos("2")).unwrap(), t("b"));
        assert_eq!(fig.subtree_at(&pos("2.1")).unwrap(), t("g(a,#1)"));
        assert!(matches!(fig.subtree_at(&pos("3")), Err(Error::PositionNotInTree(_))));
        assert_eq!(t("f(a,b)").replace_at(&pos("1"), &t("c")).unwrap(), t("f(c,b)"));
        assert_eq!(t("a").replace_at(&pos("e"), &t("f(a,b)")).unwrap(), t("f(a,b)"));
        assert_eq!(fig.replace_at(&pos("1"), &t("a")).unwrap(), t("g(a,f(g(a,#1)))"));
    }

    #[test]
    fn hole_leaves_in_order() {
        let fig = t("g(#1,f(g(a,#1)))");
        assert_eq!(fig.hole_leaves(1), vec![pos("1"), pos("2.1.2")]);
        assert!(t("a").hole_leaves(1).is_empty());
        let hl = comb().hole_leaves(1, 3);
        assert!(hl.infinite);
        assert_eq!(hl.positions[..3], [pos("2"), pos("1.2"), pos("1.1.2")]);
        let finite = TreeGraph::from_tree(&fig).hole_leaves(1, 10);
        assert!(!finite.infinite);
        assert_eq!(finite.positions, fig.hole_leaves(1));
    }

    #[test]
    fn substitution_examples() {
        let fig = t("g(#1,f(g(a,#1)))");
        let m = BTreeMap::from([(1, t("h(b)"))]);
        assert_eq!(fig.hole_substitute_uniform(&m).unwrap(), t("g(h(b),f(g(a,h(b))))"));
        assert_eq!(t("a").hole_substitute_uniform(&BTreeMap::new()).unwrap(), t("a"));
        let m2 = BTreeMap::from([(1, t("a")), (2, t("b"))]);
        assert_eq!(t("f(#1,#2)").hole_substitute_uniform(&m2).unwrap(), t("f(a,b)"));
        assert_eq!(t("f(#1,#2)").hole_substitute_uniform(&BTreeMap::new()), Err(Error::MissingHoleImage(1)));

        let pm = BTreeMap::from([(pos("1"), t("a")), (pos("2"), t("b"))]);
        assert_eq!(t("f(#1,#1)").hole_substitute_pointwise(&pm).unwrap(), t("f(a,b)"));
        let pm = BTreeMap::from([(pos("1"), t("a")), (pos("2"), t("a"))]);
        assert_eq!(t("f(#1,#1)").hole_substitute_pointwise(&pm).unwrap(), t("f(a,a)"));
        assert_eq!(t("b").hole_substitute_pointwise(&BTreeMap::new()).unwrap(), t("b"));
        assert!(matches!(
            t("f(#1,#1)").hole_substitute_pointwise(&BTreeMap::new()),
            Err(Error::MissingLeafImage(_))
        ));
    }

    #[test]
    fn unfold_examples() {
        assert_eq!(comb().unfold(0), FiniteTree::bottom());
        assert_eq!(comb().unfold(2), t("f(f(_|_,#1),#1)"));
        let a = TreeGraph::from_tree(&t("a"));
        assert_eq!(a.unfold(5), t("a"));
    }

    #[test]
    fn distance_examples() {
        assert_eq!(tree_distance(&t("a"), &t("a")), Distance::ZERO);
        assert_eq!(tree_distance(&t("f(a,b)"), &t("f(a,a)")), Distance(Some(1)));
        assert_eq!(tree_distance(&t("f(a,b)"), &t("f(a,a)")).to_f64(), 0.5);
        assert_eq!(tree_distance(&t("a"), &FiniteTree::bottom()), Distance::ONE);
    }

    #[test]
    fn graph_substitution_on_comb() {
        let a = TreeGraph::from_tree(&t("a"));
        let g = comb().graph_hole_substitute(&BTreeMap::from([(1, a.clone())])).unwrap();
        // direct construction of the depth-k prefix of f(f(f(...,a),a),a)
        let mut direct = FiniteTree::bottom();
        for k in 0..=8 {
            assert_eq!(g.unfold(k), direct, "depth {k}");
            direct = FiniteTree::apply("f", vec![direct, t("a")]);
        }
        let single = TreeGraph::parse("n = #1").unwrap();
        assert!(single.graph_hole_substitute(&BTreeMap::from([(1, comb())])).unwrap().graph_equal(&comb()));
        let aw = TreeGraph::parse("n = a(n)").unwrap();
        assert!(aw.graph_hole_substitute(&BTreeMap::new()).unwrap().graph_equal(&aw));
        assert!(comb().graph_hole_substitute(&BTreeMap::new()).is_err());
    }

    #[test]
    fn minimize_examples() {
        let two = TreeGraph::parse("n0 = a(n1); n1 = a(n0); root n0").unwrap();
        let one = TreeGraph::parse("m = a(m)").unwrap();
        assert_eq!(two.minimize().len(), 1);
        assert_eq!(two.minimize().nodes[0].succ, vec![0]);
        assert!(two.graph_equal(&one));
        assert!(!comb().graph_equal(&one));
    }

    #[test]
    fn enumeration_counts() {
        let syms = [Symbol::new("f", 2), Symbol::new("a", 0)];
        // full binary trees with n internal nodes: Catalan numbers
        let all = enumerate_trees(&syms, 7);
        let count = |k: usize| all.iter().filter(|t| t.size() == k).count();
        assert_eq!((count(1), count(3), count(5), count(7)), (1, 1, 2, 5));
        assert!(all.iter().all(|t| t.size() <= 7));
    }
}
