//! Nondeterministic top-down parity tree automata.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use crate::ata;
use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::games::{self, Arena, Player};
use crate::trees::{FiniteTree, GraphNode, Position, Symbol, TreeGraph};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Transition {
    pub state: usize,
    pub sym: usize,
    pub children: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct ParityNta {
    alphabet: Vec<Symbol>,
    sym_index: HashMap<Symbol, usize>,
    names: Vec<String>,
    color: Vec<u32>,
    num_colors: u32,
    trans: Vec<Transition>,
    by_key: HashMap<(usize, usize), Vec<usize>>,
}

/// A run on a finite tree: the state at every position.
pub type Run = BTreeMap<Position, usize>;

/// Compresses colors monotonically, merging neighbours of equal parity, so the
/// least color seen infinitely often keeps its parity. Returns the new colors
/// and an odd bound.
pub(crate) fn normalize_colors(colors: &[u32]) -> (Vec<u32>, u32) {
    let used: BTreeSet<u32> = colors.iter().copied().collect();
    let mut map = BTreeMap::new();
    let mut cur = 0u32;
    let mut last_parity = None;
    for &c in &used {
        if last_parity != Some(c % 2) {
            cur = if cur == 0 {
                if c % 2 == 1 {
                    1
                } else {
                    2
                }
            } else {
                cur + 1
            };
            last_parity = Some(c % 2);
        }
        map.insert(c, cur);
    }
    let out: Vec<u32> = colors.iter().map(|c| map[c]).collect();
    let max = out.iter().copied().max().unwrap_or(1);
    (out, if max % 2 == 0 { max + 1 } else { max })
}

impl ParityNta {
    /// Builds an automaton; colors must be positive, and the color range is
    /// padded to an odd size.
    pub fn new(alphabet: Vec<Symbol>, names: Vec<String>, color: Vec<u32>, trans: Vec<Transition>) -> Result<Self> {
        if names.len() != color.len() {
            return Err(Error::Semantic("one color per state is required".into()));
        }
        if color.contains(&0) {
            return Err(Error::Semantic("colors start at 1".into()));
        }
        let alphabet: Vec<Symbol> = alphabet.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let sym_index: HashMap<Symbol, usize> = alphabet.iter().cloned().enumerate().map(|(k, s)| (s, k)).collect();
        let mut set = BTreeSet::new();
        for t in trans {
            if t.state >= names.len() || t.children.iter().any(|&c| c >= names.len()) {
                return Err(Error::Semantic("transition mentions an unknown state".into()));
            }
            let sym = alphabet.get(t.sym).ok_or_else(|| Error::Semantic("transition on unknown symbol".into()))?;
            if sym.rank() != t.children.len() {
                return Err(Error::RankMismatch(format!(
                    "transition {} -{}-> has {} children, rank is {}",
                    names[t.state],
                    sym,
                    t.children.len(),
                    sym.rank()
                )));
            }
            set.insert(t);
        }
        let trans: Vec<Transition> = set.into_iter().collect();
        let mut by_key: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (k, t) in trans.iter().enumerate() {
            by_key.entry((t.state, t.sym)).or_default().push(k);
        }
        let max = color.iter().copied().max().unwrap_or(1);
        let num_colors = if max % 2 == 0 { max + 1 } else { max };
        Ok(ParityNta { alphabet, sym_index, names, color, num_colors, trans, by_key })
    }

    /// Like `new` but with transitions given by symbol instead of index.
    pub fn from_parts(
        alphabet: Vec<Symbol>,
        names: Vec<String>,
        color: Vec<u32>,
        trans: Vec<(usize, Symbol, Vec<usize>)>,
    ) -> Result<Self> {
        let alpha: Vec<Symbol> = alphabet.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let idx: HashMap<&Symbol, usize> = alpha.iter().enumerate().map(|(k, s)| (s, k)).collect();
        let mut ts = Vec::with_capacity(trans.len());
        for (q, s, ch) in trans {
            let sym = *idx.get(&s).ok_or_else(|| Error::AlphabetMismatch(format!("symbol {s} not in alphabet")))?;
            ts.push(Transition { state: q, sym, children: ch });
        }
        ParityNta::new(alpha, names, color, ts)
    }

    /// One state, no transitions.
    pub fn empty(alphabet: Vec<Symbol>) -> Self {
        ParityNta::new(alphabet, vec!["q".into()], vec![1], Vec::new()).unwrap()
    }

    /// One even-colored state accepting every finite and infinite tree.
    pub fn universal(alphabet: Vec<Symbol>) -> Self {
        let ts: Vec<(usize, Symbol, Vec<usize>)> =
            alphabet.iter().map(|s| (0, s.clone(), vec![0; s.rank()])).collect();
        ParityNta::from_parts(alphabet, vec!["u".into()], vec![2], ts).unwrap()
    }

    pub fn alphabet(&self) -> &[Symbol] {
        &self.alphabet
    }

    pub fn symbol_index(&self, s: &Symbol) -> Option<usize> {
        self.sym_index.get(s).copied()
    }

    pub fn num_states(&self) -> usize {
        self.names.len()
    }

    pub fn state_name(&self, q: usize) -> &str {
        &self.names[q]
    }

    pub fn state_names(&self) -> &[String] {
        &self.names
    }

    pub fn state_by_name(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn color(&self, q: usize) -> u32 {
        self.color[q]
    }

    pub fn colors(&self) -> &[u32] {
        &self.color
    }

    pub fn num_colors(&self) -> u32 {
        self.num_colors
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.trans
    }

    pub fn transitions_from(&self, q: usize, sym: usize) -> impl Iterator<Item = &Transition> {
        self.by_key.get(&(q, sym)).into_iter().flatten().map(move |&k| &self.trans[k])
    }

    pub fn transitions_on(&self, q: usize, s: &Symbol) -> Vec<&Transition> {
        match self.symbol_index(s) {
            Some(k) => self.transitions_from(q, k).collect(),
            None => Vec::new(),
        }
    }

    pub fn same_alphabet(&self, other: &ParityNta) -> bool {
        self.alphabet == other.alphabet
    }

    /// States with at least one run on the subtree, bottom-up.
    fn viable(&self, t: &FiniteTree) -> BTreeSet<usize> {
        let kids: Vec<BTreeSet<usize>> = t.children.iter().map(|c| self.viable(c)).collect();
        let Some(sym) = self.symbol_index(&t.sym) else { return BTreeSet::new() };
        (0..self.num_states())
            .filter(|&q| {
                self.transitions_from(q, sym)
                    .any(|tr| tr.children.iter().zip(&kids).all(|(c, k)| k.contains(c)))
            })
            .collect()
    }

    pub fn member_finite(&self, t: &FiniteTree, p: usize) -> bool {
        self.viable(t).contains(&p)
    }

    /// Number of runs at `p`, by dynamic programming.
    pub fn count_runs(&self, t: &FiniteTree, p: usize) -> u128 {
        fn go(a: &ParityNta, t: &FiniteTree) -> Vec<u128> {
            let kids: Vec<Vec<u128>> = t.children.iter().map(|c| go(a, c)).collect();
            let mut out = vec![0u128; a.num_states()];
            if let Some(sym) = a.symbol_index(&t.sym) {
                for (q, slot) in out.iter_mut().enumerate() {
                    for tr in a.transitions_from(q, sym) {
                        *slot += tr.children.iter().zip(&kids).map(|(&c, k)| k[c]).product::<u128>();
                    }
                }
            }
            out
        }
        go(self, t)[p]
    }

    /// Lazily enumerates every run starting in `p`.
    pub fn runs_finite<'a>(&'a self, t: &'a FiniteTree, p: usize) -> RunIter<'a> {
        RunIter::new(self, t, p)
    }

    /// Product game of the graph with the automaton: Prover picks transitions,
    /// Spoiler picks directions.
    pub fn member_rational(&self, g: &TreeGraph, p: usize) -> bool {
        let mut arena = Arena::new();
        let mut ids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut queue = VecDeque::new();
        let start = arena.add_vertex(Player::Prover, self.color[p]);
        ids.insert((g.root, p), start);
        queue.push_back((g.root, p));
        while let Some((v, q)) = queue.pop_front() {
            let from = ids[&(v, q)];
            let node = &g.nodes[v];
            let Some(sym) = self.symbol_index(&node.sym) else { continue };
            for tr in self.transitions_from(q, sym) {
                let choice = arena.add_vertex(Player::Spoiler, self.color[q]);
                arena.add_edge(from, choice);
                for (&w, &qc) in node.succ.iter().zip(&tr.children) {
                    let next = *ids.entry((w, qc)).or_insert_with(|| {
                        queue.push_back((w, qc));
                        arena.add_vertex(Player::Prover, self.color[qc])
                    });
                    arena.add_edge(choice, next);
                }
            }
        }
        games::solve(&arena).w0.contains(&start)
    }

    /// Emptiness game: Prover vertices are states, Spoiler vertices transitions.
    fn emptiness_game(&self) -> (Arena, games::GameSolution) {
        let mut arena = Arena::new();
        for q in 0..self.num_states() {
            arena.add_vertex(Player::Prover, self.color[q]);
        }
        for tr in &self.trans {
            let v = arena.add_vertex(Player::Spoiler, self.color[tr.state]);
            arena.add_edge(tr.state, v);
            for &c in &tr.children {
                arena.add_edge(v, c);
            }
        }
        let sol = games::solve(&arena);
        (arena, sol)
    }

    /// States with a nonempty language.
    pub fn nonempty_states(&self) -> Vec<bool> {
        let (_, sol) = self.emptiness_game();
        (0..self.num_states()).map(|q| sol.w0.contains(&q)).collect()
    }

    pub fn is_empty(&self, p: usize) -> bool {
        !self.nonempty_states()[p]
    }

    /// A rational tree in the language, read off Prover's positional strategy.
    pub fn witness(&self, p: usize) -> Option<TreeGraph> {
        let (arena, sol) = self.emptiness_game();
        if !sol.w0.contains(&p) {
            return None;
        }
        let n = self.num_states();
        let choice = |q: usize| -> &Transition {
            let e = sol.strategy0[&q];
            &self.trans[arena.target(e) - n]
        };
        let mut index: BTreeMap<usize, usize> = BTreeMap::new();
        let mut order = vec![p];
        index.insert(p, 0);
        let mut k = 0;
        while k < order.len() {
            for &c in &choice(order[k]).children {
                if !index.contains_key(&c) {
                    index.insert(c, order.len());
                    order.push(c);
                }
            }
            k += 1;
        }
        let nodes = order
            .iter()
            .map(|&q| {
                let tr = choice(q);
                GraphNode { sym: self.alphabet[tr.sym].clone(), succ: tr.children.iter().map(|c| index[c]).collect() }
            })
            .collect();
        Some(TreeGraph { nodes, root: 0 })
    }

    /// Keeps the productive states reachable from `p` through productive
    /// transitions; `p` itself is always kept.
    pub fn trim(&self, p: usize) -> (ParityNta, usize) {
        let live = self.nonempty_states();
        let useful = |tr: &Transition| tr.children.iter().all(|&c| live[c]);
        let mut index: BTreeMap<usize, usize> = BTreeMap::new();
        index.insert(p, 0);
        let mut order = vec![p];
        let mut k = 0;
        while k < order.len() {
            let q = order[k];
            if live[q] {
                for sym in 0..self.alphabet.len() {
                    for tr in self.transitions_from(q, sym) {
                        if useful(tr) {
                            for &c in &tr.children {
                                if !index.contains_key(&c) {
                                    index.insert(c, order.len());
                                    order.push(c);
                                }
                            }
                        }
                    }
                }
            }
            k += 1;
        }
        let trans = self
            .trans
            .iter()
            .filter(|tr| live[tr.state] && index.contains_key(&tr.state) && useful(tr))
            .map(|tr| Transition {
                state: index[&tr.state],
                sym: tr.sym,
                children: tr.children.iter().map(|c| index[c]).collect(),
            })
            .collect();
        let names = order.iter().map(|&q| self.names[q].clone()).collect();
        let (color, _) = normalize_colors(&order.iter().map(|&q| self.color[q]).collect::<Vec<_>>());
        (ParityNta::new(self.alphabet.clone(), names, color, trans).unwrap(), 0)
    }

    /// Renames states to `s0, s1, ...`.
    pub fn with_plain_names(mut self) -> Self {
        self.names = (0..self.num_states()).map(|k| format!("s{k}")).collect();
        self
    }

    /// Accepts exactly the given rational trees: one state per graph node,
    /// all colored 2, plus a start state copying each root.
    pub fn of_graphs(alphabet: Vec<Symbol>, graphs: &[TreeGraph]) -> Result<(ParityNta, usize)> {
        let mut names = vec!["root".to_string()];
        let mut trans = Vec::new();
        for (k, g) in graphs.iter().enumerate() {
            let off = names.len();
            names.extend((0..g.nodes.len()).map(|v| format!("g{k}.n{v}")));
            for (v, nd) in g.nodes.iter().enumerate() {
                let kids: Vec<usize> = nd.succ.iter().map(|w| w + off).collect();
                trans.push((v + off, nd.sym.clone(), kids.clone()));
                if v == g.root {
                    trans.push((0, nd.sym.clone(), kids));
                }
            }
        }
        let colors = vec![2; names.len()];
        Ok((ParityNta::from_parts(alphabet, names, colors, trans)?, 0))
    }

    /// Same states and transitions over a larger alphabet.
    pub fn extend_alphabet(&self, extra: &[Symbol]) -> ParityNta {
        let alphabet: Vec<Symbol> = self.alphabet.iter().chain(extra).cloned().collect();
        let ts = self
            .trans
            .iter()
            .map(|t| (t.state, self.alphabet[t.sym].clone(), t.children.clone()))
            .collect();
        ParityNta::from_parts(alphabet, self.names.clone(), self.color.clone(), ts).unwrap()
    }

    /// Drops every symbol outside `keep` together with its transitions.
    pub fn restrict_alphabet(&self, keep: &[Symbol]) -> ParityNta {
        let keep: BTreeSet<&Symbol> = keep.iter().collect();
        let alphabet: Vec<Symbol> = self.alphabet.iter().filter(|s| keep.contains(s)).cloned().collect();
        let ts = self
            .trans
            .iter()
            .filter(|t| keep.contains(&self.alphabet[t.sym]))
            .map(|t| (t.state, self.alphabet[t.sym].clone(), t.children.clone()))
            .collect();
        ParityNta::from_parts(alphabet, self.names.clone(), self.color.clone(), ts).unwrap()
    }

    /// Disjoint union of the two automata plus a fresh start state carrying
    /// the transitions of both start states.
    pub fn union(&self, p1: usize, other: &ParityNta, p2: usize) -> Result<(ParityNta, usize)> {
        if !self.same_alphabet(other) {
            return Err(Error::AlphabetMismatch("union needs equal alphabets".into()));
        }
        let n1 = self.num_states();
        let mut names: Vec<String> = self.names.iter().map(|n| format!("l.{n}")).collect();
        names.extend(other.names.iter().map(|n| format!("r.{n}")));
        names.push("start".into());
        let mut color = self.color.clone();
        color.extend(other.color.iter().copied());
        color.push(1);
        let start = names.len() - 1;
        let mut trans: Vec<Transition> = self.trans.clone();
        trans.extend(other.trans.iter().map(|t| Transition {
            state: t.state + n1,
            sym: t.sym,
            children: t.children.iter().map(|c| c + n1).collect(),
        }));
        for t in &self.trans {
            if t.state == p1 {
                trans.push(Transition { state: start, sym: t.sym, children: t.children.clone() });
            }
        }
        for t in &other.trans {
            if t.state == p2 {
                trans.push(Transition { state: start, sym: t.sym, children: t.children.iter().map(|c| c + n1).collect() });
            }
        }
        let a = ParityNta::new(self.alphabet.clone(), names, color, trans)?;
        Ok(a.trim(start))
    }

    /// Intersection through a conjunctive start formula of an alternating automaton.
    pub fn intersect(&self, p1: usize, other: &ParityNta, p2: usize, budget: &Budget) -> Result<(ParityNta, usize)> {
        if !self.same_alphabet(other) {
            return Err(Error::AlphabetMismatch("intersection needs equal alphabets".into()));
        }
        let (a, start) = ata::ParityAta::conjunction(&[(ata::ParityAta::from_nta(self), p1), (ata::ParityAta::from_nta(other), p2)])?;
        ata::ata_to_nta(&a, start, budget)
    }

    /// Complement through the dual alternating automaton.
    pub fn complement(&self, p: usize, budget: &Budget) -> Result<(ParityNta, usize)> {
        let d = ata::ParityAta::from_nta(self).dual();
        ata::ata_to_nta(&d, p, budget)
    }

    /// Every hole `#1..#h` is accepted at every state.
    pub fn add_holes(&self, h: usize) -> ParityNta {
        let holes: Vec<Symbol> = (1..=h).map(Symbol::hole).collect();
        let alphabet: Vec<Symbol> = self.alphabet.iter().chain(&holes).cloned().collect();
        let mut ts: Vec<(usize, Symbol, Vec<usize>)> = self
            .trans
            .iter()
            .filter(|t| self.alphabet[t.sym].as_hole().is_none())
            .map(|t| (t.state, self.alphabet[t.sym].clone(), t.children.clone()))
            .collect();
        for q in 0..self.num_states() {
            for s in &holes {
                ts.push((q, s.clone(), Vec::new()));
            }
        }
        ParityNta::from_parts(alphabet, self.names.clone(), self.color.clone(), ts).unwrap()
    }

    /// Position-wise relabeling along a rank-preserving symbol map.
    pub fn relabel_project(&self, h: &BTreeMap<Symbol, Symbol>) -> Result<ParityNta> {
        for s in &self.alphabet {
            let img = h.get(s).ok_or_else(|| Error::AlphabetMismatch(format!("no image for {s}")))?;
            if img.rank() != s.rank() {
                return Err(Error::RankMismatch(format!("{s} has rank {}, its image {img} has {}", s.rank(), img.rank())));
            }
        }
        let alphabet: Vec<Symbol> = self.alphabet.iter().map(|s| h[s].clone()).collect();
        let ts = self.trans.iter().map(|t| (t.state, h[&self.alphabet[t.sym]].clone(), t.children.clone())).collect();
        ParityNta::from_parts(alphabet, self.names.clone(), self.color.clone(), ts)
    }

    /// Inverse relabeling: a transition on `s` becomes one on every preimage of `s`.
    pub fn relabel_inverse(&self, h: &BTreeMap<Symbol, Symbol>) -> Result<ParityNta> {
        let mut ts = Vec::new();
        for (src, img) in h {
            if src.rank() != img.rank() {
                return Err(Error::RankMismatch(format!("{src} and {img} differ in rank")));
            }
            if let Some(k) = self.symbol_index(img) {
                for t in self.trans.iter().filter(|t| t.sym == k) {
                    ts.push((t.state, src.clone(), t.children.clone()));
                }
            }
        }
        ParityNta::from_parts(h.keys().cloned().collect(), self.names.clone(), self.color.clone(), ts)
    }

    /// Parses the automaton text format.
    pub fn parse(text: &str) -> Result<ParityNta> {
        let mut alphabet: Vec<Symbol> = Vec::new();
        let mut names: Vec<String> = Vec::new();
        let mut colors: BTreeMap<String, u32> = BTreeMap::new();
        let mut trans = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split("//").next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Syntax { line: ln + 1, col: 1, msg };
            if let Some(rest) = line.strip_prefix("alphabet") {
                for item in rest.split_whitespace() {
                    alphabet.push(parse_symbol_decl(item).map_err(err)?);
                }
            } else if let Some(rest) = line.strip_prefix("states") {
                names.extend(rest.split_whitespace().map(str::to_string));
            } else if let Some(rest) = line.strip_prefix("colors") {
                for item in rest.split_whitespace() {
                    let (q, c) = item.split_once('=').ok_or_else(|| err(format!("expected state=color, got {item}")))?;
                    let c: u32 = c.parse().map_err(|_| err(format!("bad color {c}")))?;
                    colors.insert(q.to_string(), c);
                }
            } else {
                let (q, rest) = line.split_once(" -").ok_or_else(|| err("expected `q -f-> q1 ... qk`".into()))?;
                let (sym, targets) = rest.split_once("->").ok_or_else(|| err("expected `->`".into()))?;
                trans.push((ln + 1, q.trim().to_string(), sym.trim().to_string(), targets.split_whitespace().map(str::to_string).collect::<Vec<_>>()));
            }
        }
        let state = |n: &str, line: usize| {
            names.iter().position(|m| m == n).ok_or_else(|| Error::Syntax { line, col: 1, msg: format!("undeclared state {n}") })
        };
        let mut color = Vec::new();
        for n in &names {
            color.push(*colors.get(n).ok_or_else(|| Error::Semantic(format!("state {n} has no color")))?);
        }
        let mut ts = Vec::new();
        for (line, q, sym, targets) in trans {
            let s = alphabet
                .iter()
                .find(|s| s.to_string() == sym)
                .cloned()
                .ok_or_else(|| Error::Syntax { line, col: 1, msg: format!("symbol {sym} not in alphabet") })?;
            if s.rank() != targets.len() {
                return Err(Error::RankMismatch(format!(
                    "line {line}: rule {q} -{sym}-> has {} targets but {sym} has rank {}",
                    targets.len(),
                    s.rank()
                )));
            }
            let children = targets.iter().map(|t| state(t, line)).collect::<Result<Vec<_>>>()?;
            ts.push((state(&q, line)?, s, children));
        }
        ParityNta::from_parts(alphabet, names, color, ts)
    }
}

/// Parses a declaration `f/2`, `#3` or `_|_`.
pub fn parse_symbol_decl(item: &str) -> std::result::Result<Symbol, String> {
    if item == "_|_" {
        return Ok(Symbol::Bottom);
    }
    if let Some(h) = item.strip_prefix('#') {
        return h.parse().ok().filter(|&k| k >= 1).map(Symbol::hole).ok_or(format!("bad hole {item}"));
    }
    let (n, r) = item.rsplit_once('/').ok_or(format!("expected name/rank, got {item}"))?;
    let r: usize = r.parse().map_err(|_| format!("bad rank in {item}"))?;
    if n.is_empty() || !n.bytes().all(crate::trees::is_ident_byte) {
        return Err(format!("bad symbol name {n:?}"));
    }
    Ok(Symbol::new(n, r))
}

/// Inverse of `parse_symbol_decl`.
pub fn symbol_decl(s: &Symbol) -> String {
    match s {
        Symbol::Named(_, r) => format!("{s}/{r}"),
        _ => s.to_string(),
    }
}

impl fmt::Display for ParityNta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let alpha: Vec<String> = self.alphabet.iter().map(symbol_decl).collect();
        writeln!(f, "alphabet {}", alpha.join(" "))?;
        writeln!(f, "states {}", self.names.join(" "))?;
        let cols: Vec<String> = self.names.iter().zip(&self.color).map(|(n, c)| format!("{n}={c}")).collect();
        writeln!(f, "colors {}", cols.join(" "))?;
        for t in &self.trans {
            let kids: Vec<&str> = t.children.iter().map(|&c| self.names[c].as_str()).collect();
            write!(f, "{} -{}->", self.names[t.state], self.alphabet[t.sym])?;
            for k in kids {
                write!(f, " {k}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Backtracking enumeration of runs in preorder.
pub struct RunIter<'a> {
    a: &'a ParityNta,
    nodes: Vec<(&'a FiniteTree, Position, Option<(usize, usize)>)>,
    viable: Vec<BTreeSet<usize>>,
    states: Vec<usize>,
    choice: Vec<usize>,
    options: Vec<Vec<&'a Transition>>,
    started: bool,
    done: bool,
}

impl<'a> RunIter<'a> {
    fn new(a: &'a ParityNta, t: &'a FiniteTree, p: usize) -> Self {
        let mut nodes = Vec::new();
        fn pre<'b>(t: &'b FiniteTree, u: Position, parent: Option<(usize, usize)>, out: &mut Vec<(&'b FiniteTree, Position, Option<(usize, usize)>)>) {
            let me = out.len();
            out.push((t, u.clone(), parent));
            for (k, c) in t.children.iter().enumerate() {
                pre(c, u.child(k + 1), Some((me, k)), out);
            }
        }
        pre(t, Position::root(), None, &mut nodes);
        let viable = nodes.iter().map(|(s, _, _)| a.viable(s)).collect::<Vec<_>>();
        let done = !viable[0].contains(&p);
        let n = nodes.len();
        RunIter { a, nodes, viable, states: vec![p; n], choice: vec![0; n], options: vec![Vec::new(); n], started: false, done }
    }

    fn fill_from(&mut self, start: usize) {
        for i in start..self.nodes.len() {
            if let Some((par, k)) = self.nodes[i].2 {
                self.states[i] = self.options[par][self.choice[par]].children[k];
            }
            let (t, _, _) = self.nodes[i];
            let sym = self.a.symbol_index(&t.sym).expect("viable nodes use known symbols");
            let kids: Vec<usize> = (i + 1..self.nodes.len()).filter(|&j| self.nodes[j].2.map(|x| x.0) == Some(i)).collect();
            self.options[i] = self
                .a
                .transitions_from(self.states[i], sym)
                .filter(|tr| tr.children.iter().zip(&kids).all(|(c, &j)| self.viable[j].contains(c)))
                .collect();
            self.choice[i] = 0;
        }
    }
}

impl Iterator for RunIter<'_> {
    type Item = Run;

    fn next(&mut self) -> Option<Run> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            self.fill_from(0);
        } else {
            let mut i = self.nodes.len();
            loop {
                if i == 0 {
                    self.done = true;
                    return None;
                }
                i -= 1;
                if self.choice[i] + 1 < self.options[i].len() {
                    self.choice[i] += 1;
                    break;
                }
            }
            self.fill_from(i + 1);
        }
        Some(self.nodes.iter().zip(&self.states).map(|((_, u, _), &q)| (u.clone(), q)).collect())
    }
}
