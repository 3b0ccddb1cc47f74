//! Alternating parity tree automata with transitions in disjunctive normal form.

pub mod safra;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::games::{self, Arena, Player};
use crate::nta::{normalize_colors, ParityNta, Transition};
use crate::trees::{FiniteTree, Symbol, TreeGraph};

use self::safra::{SafraTree, ThreadDpa};

/// A conjunct `(d, p)`: send state `p` to child `d` (1-based).
pub type Atom = (usize, usize);
/// `⋁_j ⋀_k (d_k, p_k)`; an empty outer list is false, an empty inner list true.
pub type Dnf = Vec<Vec<Atom>>;

#[derive(Clone, Debug)]
pub struct ParityAta {
    alphabet: Vec<Symbol>,
    sym_index: HashMap<Symbol, usize>,
    names: Vec<String>,
    color: Vec<u32>,
    num_colors: u32,
    /// `delta[q][f]`
    delta: Vec<Vec<Dnf>>,
}

impl ParityAta {
    /// `delta[q][f]` follows the sorted order of `alphabet`.
    pub fn new(alphabet: Vec<Symbol>, names: Vec<String>, color: Vec<u32>, delta: Vec<Vec<Dnf>>) -> Result<Self> {
        let sorted: Vec<Symbol> = alphabet.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        if sorted != alphabet {
            return Err(Error::Semantic("alphabet must be sorted and duplicate-free".into()));
        }
        if names.len() != color.len() || delta.len() != names.len() {
            return Err(Error::Semantic("one color and one transition row per state".into()));
        }
        if color.contains(&0) {
            return Err(Error::Semantic("colors start at 1".into()));
        }
        for (q, row) in delta.iter().enumerate() {
            if row.len() != alphabet.len() {
                return Err(Error::Semantic(format!("state {} needs one formula per symbol", names[q])));
            }
            for (f, dnf) in row.iter().enumerate() {
                for &(d, p) in dnf.iter().flatten() {
                    if d == 0 || d > alphabet[f].rank() || p >= names.len() {
                        return Err(Error::RankMismatch(format!(
                            "atom ({d},{p}) in the formula of {} on {}",
                            names[q], alphabet[f]
                        )));
                    }
                }
            }
        }
        let sym_index = alphabet.iter().cloned().enumerate().map(|(k, s)| (s, k)).collect();
        let max = color.iter().copied().max().unwrap_or(1);
        let num_colors = if max % 2 == 0 { max + 1 } else { max };
        Ok(ParityAta { alphabet, sym_index, names, color, num_colors, delta })
    }

    pub fn alphabet(&self) -> &[Symbol] {
        &self.alphabet
    }

    pub fn num_states(&self) -> usize {
        self.names.len()
    }

    pub fn state_name(&self, q: usize) -> &str {
        &self.names[q]
    }

    pub fn color(&self, q: usize) -> u32 {
        self.color[q]
    }

    pub fn num_colors(&self) -> u32 {
        self.num_colors
    }

    pub fn formula(&self, q: usize, f: &Symbol) -> Option<&Dnf> {
        self.sym_index.get(f).map(|&k| &self.delta[q][k])
    }

    /// Each transition tuple becomes one disjunct `⋀_i (i, p_i)`.
    pub fn from_nta(a: &ParityNta) -> ParityAta {
        let n = a.num_states();
        let mut delta = vec![vec![Vec::new(); a.alphabet().len()]; n];
        for Transition { state, sym, children } in a.transitions() {
            delta[*state][*sym].push(children.iter().enumerate().map(|(i, &p)| (i + 1, p)).collect());
        }
        ParityAta::new(a.alphabet().to_vec(), a.state_names().to_vec(), a.colors().to_vec(), delta).unwrap()
    }

    /// Swaps conjunction and disjunction (redistributing to DNF) and shifts
    /// colors by one.
    pub fn dual(&self) -> ParityAta {
        let delta = self.delta.iter().map(|row| row.iter().map(|dnf| dual_dnf(dnf)).collect()).collect();
        let shifted: Vec<u32> = self.color.iter().map(|c| c + 1).collect();
        let (color, _) = normalize_colors(&shifted);
        ParityAta::new(self.alphabet.clone(), self.names.clone(), color, delta).unwrap()
    }

    /// Disjoint union with a fresh start state whose formula is the conjunction
    /// of the start formulas.
    pub fn conjunction(parts: &[(ParityAta, usize)]) -> Result<(ParityAta, usize)> {
        let first = &parts.first().ok_or_else(|| Error::Semantic("empty conjunction".into()))?.0;
        if parts.iter().any(|(a, _)| a.alphabet != first.alphabet) {
            return Err(Error::AlphabetMismatch("conjunction needs equal alphabets".into()));
        }
        let nsym = first.alphabet.len();
        let mut names = Vec::new();
        let mut color = Vec::new();
        let mut delta: Vec<Vec<Dnf>> = Vec::new();
        let mut starts = Vec::new();
        for (k, (a, s)) in parts.iter().enumerate() {
            let off = names.len();
            names.extend(a.names.iter().map(|n| format!("{k}.{n}")));
            color.extend(a.color.iter().copied());
            for row in &a.delta {
                delta.push(row.iter().map(|dnf| shift_dnf(dnf, off)).collect());
            }
            starts.push(s + off);
        }
        let start = names.len();
        names.push("and".into());
        color.push(1);
        let row: Vec<Dnf> = (0..nsym)
            .map(|f| {
                let mut acc: Dnf = vec![Vec::new()];
                for &s in &starts {
                    acc = and_dnf(&acc, &delta[s][f]);
                }
                acc
            })
            .collect();
        delta.push(row);
        Ok((ParityAta::new(first.alphabet.clone(), names, color, delta)?, start))
    }

    /// Acceptance of a rational tree via the membership game.
    pub fn member_rational_game(&self, g: &TreeGraph, q: usize) -> bool {
        let mut arena = Arena::new();
        let mut ids: HashMap<(usize, usize), usize> = HashMap::new();
        let start = arena.add_vertex(Player::Prover, self.color[q]);
        ids.insert((g.root, q), start);
        let mut queue = VecDeque::from([(g.root, q)]);
        while let Some((v, p)) = queue.pop_front() {
            let from = ids[&(v, p)];
            let node = &g.nodes[v];
            let Some(&f) = self.sym_index.get(&node.sym) else { continue };
            for conj in &self.delta[p][f] {
                let choice = arena.add_vertex(Player::Spoiler, self.color[p]);
                arena.add_edge(from, choice);
                for &(d, r) in conj {
                    let w = node.succ[d - 1];
                    let next = *ids.entry((w, r)).or_insert_with(|| {
                        queue.push_back((w, r));
                        arena.add_vertex(Player::Prover, self.color[r])
                    });
                    arena.add_edge(choice, next);
                }
            }
        }
        games::solve(&arena).w0.contains(&start)
    }

    /// Acceptance of a finite tree; the parity condition is vacuous.
    pub fn member_finite(&self, t: &FiniteTree, q: usize) -> bool {
        fn go(a: &ParityAta, t: &FiniteTree, q: usize, memo: &mut HashMap<(*const FiniteTree, usize), bool>) -> bool {
            let key = (t as *const FiniteTree, q);
            if let Some(&b) = memo.get(&key) {
                return b;
            }
            let r = match a.sym_index.get(&t.sym) {
                Some(&f) => a.delta[q][f].iter().any(|conj| conj.iter().all(|&(d, p)| go(a, &t.children[d - 1], p, memo))),
                None => false,
            };
            memo.insert(key, r);
            r
        }
        go(self, t, q, &mut HashMap::new())
    }

    /// Parses lines `q, f : (d,p) & (d,p) | (d,p)` after `alphabet`, `states`
    /// and `colors` headers. Missing formulas are `false`.
    pub fn parse(text: &str) -> Result<ParityAta> {
        let mut alphabet = Vec::new();
        let mut names: Vec<String> = Vec::new();
        let mut colors: BTreeMap<String, u32> = BTreeMap::new();
        let mut rules = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split("//").next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Syntax { line: ln + 1, col: 1, msg };
            if let Some(rest) = line.strip_prefix("alphabet") {
                for item in rest.split_whitespace() {
                    alphabet.push(crate::nta::parse_symbol_decl(item).map_err(err)?);
                }
            } else if let Some(rest) = line.strip_prefix("states") {
                names.extend(rest.split_whitespace().map(str::to_string));
            } else if let Some(rest) = line.strip_prefix("colors") {
                for item in rest.split_whitespace() {
                    let (q, c) = item.split_once('=').ok_or_else(|| err(format!("expected state=color, got {item}")))?;
                    colors.insert(q.to_string(), c.parse().map_err(|_| err(format!("bad color {c}")))?);
                }
            } else {
                let (head, body) = line.split_once(':').ok_or_else(|| err("expected `q, f : formula`".into()))?;
                let (q, f) = head.split_once(',').ok_or_else(|| err("expected `q, f`".into()))?;
                rules.push((ln + 1, q.trim().to_string(), f.trim().to_string(), body.trim().to_string()));
            }
        }
        let alphabet: Vec<Symbol> = alphabet.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let color = names
            .iter()
            .map(|n| colors.get(n).copied().ok_or_else(|| Error::Semantic(format!("state {n} has no color"))))
            .collect::<Result<Vec<_>>>()?;
        let mut delta = vec![vec![Vec::new(); alphabet.len()]; names.len()];
        for (line, q, f, body) in rules {
            let err = |msg: String| Error::Syntax { line, col: 1, msg };
            let qi = names.iter().position(|n| *n == q).ok_or_else(|| err(format!("undeclared state {q}")))?;
            let fi = alphabet.iter().position(|s| s.to_string() == f).ok_or_else(|| err(format!("unknown symbol {f}")))?;
            delta[qi][fi] = parse_dnf(&body, &names).map_err(err)?;
        }
        ParityAta::new(alphabet, names, color, delta)
    }
}

fn parse_dnf(body: &str, names: &[String]) -> std::result::Result<Dnf, String> {
    if body == "false" {
        return Ok(Vec::new());
    }
    let mut dnf = Vec::new();
    for disj in body.split('|') {
        let disj = disj.trim();
        if disj == "true" {
            dnf.push(Vec::new());
            continue;
        }
        let mut conj = Vec::new();
        for atom in disj.split('&') {
            let inner = atom
                .trim()
                .strip_prefix('(')
                .and_then(|a| a.strip_suffix(')'))
                .ok_or(format!("expected (d,p), got {atom:?}"))?;
            let (d, p) = inner.split_once(',').ok_or(format!("expected (d,p), got {atom:?}"))?;
            let d: usize = d.trim().parse().map_err(|_| format!("bad direction {d}"))?;
            let p = names.iter().position(|n| n == p.trim()).ok_or(format!("undeclared state {p}"))?;
            conj.push((d, p));
        }
        dnf.push(conj);
    }
    Ok(dnf)
}

impl fmt::Display for ParityAta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let alpha: Vec<String> = self.alphabet.iter().map(crate::nta::symbol_decl).collect();
        writeln!(f, "alphabet {}", alpha.join(" "))?;
        writeln!(f, "states {}", self.names.join(" "))?;
        let cols: Vec<String> = self.names.iter().zip(&self.color).map(|(n, c)| format!("{n}={c}")).collect();
        writeln!(f, "colors {}", cols.join(" "))?;
        for (q, row) in self.delta.iter().enumerate() {
            for (s, dnf) in row.iter().enumerate() {
                if dnf.is_empty() {
                    continue;
                }
                let parts: Vec<String> = dnf
                    .iter()
                    .map(|conj| {
                        if conj.is_empty() {
                            "true".to_string()
                        } else {
                            conj.iter().map(|(d, p)| format!("({d},{})", self.names[*p])).collect::<Vec<_>>().join(" & ")
                        }
                    })
                    .collect();
                writeln!(f, "{}, {} : {}", self.names[q], self.alphabet[s], parts.join(" | "))?;
            }
        }
        Ok(())
    }
}

fn shift_dnf(dnf: &Dnf, off: usize) -> Dnf {
    dnf.iter().map(|c| c.iter().map(|&(d, p)| (d, p + off)).collect()).collect()
}

/// Conjunction of two DNFs with duplicate conjuncts kept.
fn and_dnf(a: &Dnf, b: &Dnf) -> Dnf {
    let mut out = Vec::new();
    for x in a {
        for y in b {
            let mut c = x.clone();
            c.extend(y.iter().copied());
            out.push(c);
        }
    }
    out
}

/// DNF of the dual formula `⋀_j ⋁_k a_jk`, with absorbed terms dropped.
fn dual_dnf(dnf: &Dnf) -> Dnf {
    let mut terms: Vec<BTreeSet<Atom>> = vec![BTreeSet::new()];
    for clause in dnf {
        let mut next: Vec<BTreeSet<Atom>> = Vec::new();
        for t in &terms {
            for &a in clause {
                let mut t2 = t.clone();
                t2.insert(a);
                next.push(t2);
            }
        }
        terms = minimal_terms(next);
    }
    terms.into_iter().map(|t| t.into_iter().collect()).collect()
}

pub(crate) fn minimal_terms(mut terms: Vec<BTreeSet<Atom>>) -> Vec<BTreeSet<Atom>> {
    terms.sort_by_key(|t| t.len());
    terms.dedup();
    let mut out: Vec<BTreeSet<Atom>> = Vec::new();
    for t in terms {
        if !out.iter().any(|o| o.is_subset(&t)) {
            out.push(t);
        }
    }
    out
}

/// Nondeterministic automaton for the language of `a` at `q`.
///
/// The automaton guesses, at every node, one disjunct for each active state
/// (a slice of a positional strategy). Each branch then carries a word of
/// relations between active states, and a deterministic parity automaton on
/// those words checks that every thread along the branch is winning.
pub fn ata_to_nta(a: &ParityAta, q: usize, budget: &Budget) -> Result<(ParityNta, usize)> {
    // restrict to states reachable from q
    let mut index: BTreeMap<usize, usize> = BTreeMap::new();
    let mut order = vec![q];
    index.insert(q, 0);
    let mut k = 0;
    while k < order.len() {
        for dnf in &a.delta[order[k]] {
            for &(_, p) in dnf.iter().flatten() {
                if !index.contains_key(&p) {
                    index.insert(p, order.len());
                    order.push(p);
                }
            }
        }
        k += 1;
    }
    let color: Vec<u32> = order.iter().map(|&s| a.color[s]).collect();
    let delta: Vec<Vec<Vec<Vec<Atom>>>> = order
        .iter()
        .map(|&s| {
            a.delta[s]
                .iter()
                .map(|dnf| {
                    let mut ds: Vec<Vec<Atom>> = dnf
                        .iter()
                        .map(|c| {
                            let mut c: Vec<Atom> = c.iter().map(|&(d, p)| (d, index[&p])).collect();
                            c.sort_unstable();
                            c.dedup();
                            c
                        })
                        .collect();
                    ds.sort();
                    ds.dedup();
                    ds
                })
                .collect()
        })
        .collect();
    let mut moves = BTreeSet::new();
    for (s, row) in delta.iter().enumerate() {
        for &(_, p) in row.iter().flatten().flatten() {
            moves.insert((s, p));
        }
    }
    let dpa = ThreadDpa::new(&color, &moves.into_iter().collect::<Vec<_>>());

    let mut trees: Vec<SafraTree> = Vec::new();
    let mut tree_id: HashMap<SafraTree, usize> = HashMap::new();
    let mut intern_tree = |t: SafraTree, trees: &mut Vec<SafraTree>| -> usize {
        *tree_id.entry(t.clone()).or_insert_with(|| {
            trees.push(t);
            trees.len() - 1
        })
    };
    let t0 = intern_tree(dpa.initial(&[0]), &mut trees);
    let mut states: Vec<(usize, u32)> = vec![(t0, dpa.neutral())];
    let mut state_id: HashMap<(usize, u32), usize> = HashMap::from([((t0, dpa.neutral()), 0)]);
    let mut step_memo: HashMap<(usize, Vec<(usize, usize)>), (usize, u32)> = HashMap::new();
    let mut trans: BTreeSet<Transition> = BTreeSet::new();
    let mut k = 0;
    while k < states.len() {
        budget.states("alternating-to-nondeterministic conversion", states.len())?;
        if trans.len() > budget.max_states.saturating_mul(16) {
            return Err(Error::budget("alternating-to-nondeterministic conversion", "too many transitions"));
        }
        let (tid, _) = states[k];
        let active = dpa.active(&trees[tid]);
        for (f, sym) in a.alphabet.iter().enumerate() {
            let options: Vec<&Vec<Vec<Atom>>> = active.iter().map(|&s| &delta[s][f]).collect();
            if options.iter().any(|o| o.is_empty()) {
                continue;
            }
            let mut choice = vec![0usize; active.len()];
            loop {
                let mut children = Vec::with_capacity(sym.rank());
                for d in 1..=sym.rank() {
                    let mut rel: Vec<(usize, usize)> = Vec::new();
                    for (i, &s) in active.iter().enumerate() {
                        for &(dd, p) in &options[i][choice[i]] {
                            if dd == d {
                                rel.push((s, p));
                            }
                        }
                    }
                    rel.sort_unstable();
                    rel.dedup();
                    let key = (tid, rel);
                    let (t2, c) = match step_memo.get(&key) {
                        Some(&v) => v,
                        None => {
                            let (t2, c) = dpa.step(&trees[tid], &key.1);
                            let id = intern_tree(t2, &mut trees);
                            step_memo.insert(key, (id, c));
                            (id, c)
                        }
                    };
                    let sid = *state_id.entry((t2, c)).or_insert_with(|| {
                        states.push((t2, c));
                        states.len() - 1
                    });
                    children.push(sid);
                }
                trans.insert(Transition { state: k, sym: f, children });
                if trans.len().max(step_memo.len()) > budget.max_states.saturating_mul(16) {
                    return Err(Error::budget("alternating-to-nondeterministic conversion", "too many transitions"));
                }
                budget.states("alternating-to-nondeterministic conversion", states.len().max(trees.len()))?;
                let mut i = 0;
                while i < choice.len() {
                    choice[i] += 1;
                    if choice[i] < options[i].len() {
                        break;
                    }
                    choice[i] = 0;
                    i += 1;
                }
                if i == choice.len() {
                    break;
                }
            }
        }
        k += 1;
    }
    // complement of the violation automaton: shift by one
    let raw: Vec<u32> = states.iter().map(|&(_, c)| c + 1).collect();
    let (colors, _) = normalize_colors(&raw);
    let names = (0..states.len()).map(|i| format!("s{i}")).collect();
    let nta = ParityNta::new(a.alphabet.clone(), names, colors, trans.into_iter().collect())?;
    let (t, s) = nta.trim(0);
    Ok((t.with_plain_names(), s))
}
