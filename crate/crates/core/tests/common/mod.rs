//! Seeded generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regmatch::games::{Arena, Player};
use regmatch::nta::ParityNta;
use regmatch::trees::{FiniteTree, GraphNode, Symbol, TreeGraph};
use regmatch::words::WordNfa;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sym(name: &str, rank: usize) -> Symbol {
    Symbol::new(name, rank)
}

pub fn tree(s: &str) -> FiniteTree {
    FiniteTree::parse(s).unwrap()
}

/// `f/2 g/1 a/0`.
pub fn small_sigma() -> Vec<Symbol> {
    vec![sym("f", 2), sym("g", 1), sym("a", 0)]
}

/// Random parity NTA with `nq` states and colors in `1..=ncol`. Each possible
/// transition is present with probability `density`.
pub fn random_nta(r: &mut impl Rng, sigma: &[Symbol], nq: usize, ncol: u32, density: f64) -> ParityNta {
    let names = (0..nq).map(|q| format!("q{q}")).collect();
    let colors = (0..nq).map(|_| r.gen_range(1..=ncol)).collect();
    let mut trans = Vec::new();
    for q in 0..nq {
        for s in sigma {
            for kids in (0..s.rank()).map(|_| 0..nq).multi_cartesian_product() {
                if r.gen_bool(density) {
                    trans.push((q, s.clone(), kids));
                }
            }
        }
    }
    ParityNta::from_parts(sigma.to_vec(), names, colors, trans).unwrap()
}

/// Random automaton from the grid: 1 to 3 states, 1 to 3 colors.
pub fn grid_nta(r: &mut impl Rng, sigma: &[Symbol]) -> ParityNta {
    let nq = r.gen_range(1..=3);
    let ncol = r.gen_range(1..=3);
    random_nta(r, sigma, nq, ncol, 0.45)
}

/// Acyclic automaton: children always have larger state indices, so every
/// state accepts a finite language of finite trees.
pub fn acyclic_nta(r: &mut impl Rng, sigma: &[Symbol], nq: usize, density: f64) -> ParityNta {
    let names = (0..nq).map(|q| format!("q{q}")).collect();
    let mut trans = Vec::new();
    for q in 0..nq {
        for s in sigma {
            for kids in (0..s.rank()).map(|_| q + 1..nq).multi_cartesian_product() {
                if r.gen_bool(density) {
                    trans.push((q, s.clone(), kids));
                }
            }
        }
    }
    ParityNta::from_parts(sigma.to_vec(), names, vec![1; nq], trans).unwrap()
}

/// The language of a state of an acyclic automaton.
pub fn finite_language(a: &ParityNta, q: usize) -> BTreeSet<FiniteTree> {
    let mut out = BTreeSet::new();
    for tr in a.transitions().iter().filter(|t| t.state == q) {
        let pools: Vec<Vec<FiniteTree>> = tr.children.iter().map(|&c| finite_language(a, c).into_iter().collect()).collect();
        let sym = a.alphabet()[tr.sym].clone();
        if pools.is_empty() {
            out.insert(FiniteTree::leaf(sym));
            continue;
        }
        for kids in pools.iter().map(|p| p.iter().cloned()).multi_cartesian_product() {
            out.insert(FiniteTree::node(sym.clone(), kids));
        }
    }
    out
}

/// Random rooted graph with up to `max_nodes` nodes; unreachable nodes are dropped.
pub fn random_graph(r: &mut impl Rng, sigma: &[Symbol], max_nodes: usize) -> TreeGraph {
    let n = r.gen_range(1..=max_nodes);
    let nodes = (0..n)
        .map(|_| {
            let s = sigma.choose(r).unwrap().clone();
            let succ = (0..s.rank()).map(|_| r.gen_range(0..n)).collect();
            GraphNode { sym: s, succ }
        })
        .collect();
    TreeGraph::new(nodes, 0).unwrap()
}

/// Random finite tree with at most `max_size` nodes. Once the size is used
/// up only constants are drawn; `sigma` must contain one.
pub fn random_tree(r: &mut impl Rng, sigma: &[Symbol], max_size: usize) -> FiniteTree {
    fn go(r: &mut impl Rng, sigma: &[Symbol], leaves: &[Symbol], budget: &mut usize) -> FiniteTree {
        let pool: Vec<&Symbol> = sigma.iter().filter(|s| s.rank() + 1 <= *budget).collect();
        let s = if pool.is_empty() { leaves.choose(r).unwrap() } else { *pool.choose(r).unwrap() };
        *budget = budget.saturating_sub(1);
        let kids = (0..s.rank()).map(|_| go(r, sigma, leaves, budget)).collect();
        FiniteTree::node(s.clone(), kids)
    }
    let leaves: Vec<Symbol> = sigma.iter().filter(|s| s.rank() == 0).cloned().collect();
    loop {
        let mut budget = max_size;
        let t = go(r, sigma, &leaves, &mut budget);
        if t.size() <= max_size {
            return t;
        }
    }
}

pub fn random_arena(r: &mut impl Rng, n: usize, ncol: u32, max_out: usize) -> Arena {
    let mut a = Arena::new();
    for _ in 0..n {
        let owner = if r.gen_bool(0.5) { Player::Prover } else { Player::Spoiler };
        a.add_vertex(owner, r.gen_range(0..ncol));
    }
    for v in 0..n {
        for _ in 0..r.gen_range(0..=max_out) {
            a.add_edge(v, r.gen_range(0..n));
        }
    }
    a
}

/// Random word NFA with 1 to `max_states` states and one initial state.
pub fn random_word_nfa(r: &mut impl Rng, letters: &[&str], max_states: usize, density: f64) -> WordNfa {
    let n = r.gen_range(1..=max_states);
    let mut trans = Vec::new();
    for p in 0..n {
        for a in letters {
            for q in 0..n {
                if r.gen_bool(density) {
                    trans.push((p, a.to_string(), q));
                }
            }
        }
    }
    let mut finals: BTreeSet<usize> = (0..n).filter(|_| r.gen_bool(0.4)).collect();
    if finals.is_empty() {
        finals.insert(r.gen_range(0..n));
    }
    let names = (0..n).map(|q| format!("s{q}")).collect();
    let alphabet = letters.iter().map(|a| a.to_string()).collect();
    WordNfa::new(alphabet, names, trans, [0].into(), finals).unwrap()
}
