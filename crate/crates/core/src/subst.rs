//! Substitutions, their inside-out and outside-in images, choice functions,
//! saturation, specialization and inverse images of regular languages.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use itertools::Itertools;

use crate::ata::{self, Atom, Dnf, ParityAta};
use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::nta::ParityNta;
use crate::profiles::{Extended, Profile, ProfileContext};
use crate::trees::{FiniteTree, GraphNode, Position, Symbol, TreeGraph};

/// The language assigned to one variable.
#[derive(Clone, Debug)]
pub enum Lang {
    Trees(Vec<FiniteTree>),
    Graphs(Vec<TreeGraph>),
    Regular { nta: ParityNta, state: usize },
}

impl Lang {
    pub fn is_empty_set(&self) -> bool {
        match self {
            Lang::Trees(v) => v.is_empty(),
            Lang::Graphs(v) => v.is_empty(),
            Lang::Regular { nta, state } => nta.is_empty(*state),
        }
    }
}

/// A map from variables to languages over `Σ ∪ H`. Symbols that are not
/// variables stand for themselves.
#[derive(Clone, Debug, Default)]
pub struct Substitution {
    vars: BTreeMap<Symbol, Lang>,
}

fn check_image(x: &Symbol, holes: impl IntoIterator<Item = usize>, root: &Symbol) -> Result<()> {
    if root.as_hole().is_some() {
        return Err(Error::Semantic(format!("the image of {x} contains a bare hole")));
    }
    if let Some(i) = holes.into_iter().find(|&i| i > x.rank()) {
        return Err(Error::Semantic(format!("the image of {x} uses hole #{i} beyond its rank")));
    }
    Ok(())
}

impl Substitution {
    pub fn new() -> Self {
        Substitution::default()
    }

    /// Adds a variable; images must not be bare holes and may only use holes
    /// up to the variable's rank.
    pub fn insert(&mut self, x: Symbol, lang: Lang) -> Result<()> {
        if !matches!(x, Symbol::Named(..)) {
            return Err(Error::Semantic(format!("{x} cannot be a variable")));
        }
        match &lang {
            Lang::Trees(ts) => {
                for t in ts {
                    check_image(&x, t.holes(), &t.sym)?;
                }
            }
            Lang::Graphs(gs) => {
                for g in gs {
                    check_image(&x, g.symbols().iter().filter_map(Symbol::as_hole), &g.nodes[g.root].sym)?;
                }
            }
            Lang::Regular { nta, state } => check_regular_image(&x, nta, *state)?,
        }
        self.vars.insert(x, lang);
        Ok(())
    }

    pub fn vars(&self) -> impl Iterator<Item = &Symbol> {
        self.vars.keys()
    }

    pub fn get(&self, x: &Symbol) -> Option<&Lang> {
        self.vars.get(x)
    }

    pub fn is_var(&self, s: &Symbol) -> bool {
        self.vars.contains_key(s)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Symbol, &Lang)> {
        self.vars.iter()
    }

    pub fn max_rank(&self) -> usize {
        self.vars.keys().map(Symbol::rank).max().unwrap_or(0)
    }

    /// Every image is a single tree.
    pub fn is_homomorphism(&self) -> bool {
        self.vars.values().all(|l| match l {
            Lang::Trees(v) => v.len() == 1,
            Lang::Graphs(v) => v.len() == 1,
            Lang::Regular { .. } => false,
        })
    }

    pub fn explicit_trees(&self, x: &Symbol) -> Result<&[FiniteTree]> {
        match self.vars.get(x) {
            Some(Lang::Trees(v)) => Ok(v),
            Some(_) => Err(Error::Semantic(format!("the image of {x} is not a finite set of finite trees"))),
            None => Err(Error::Semantic(format!("{x} is not a variable"))),
        }
    }
}

/// Rejects regular images that accept a bare hole or a hole beyond the rank.
fn check_regular_image(x: &Symbol, nta: &ParityNta, start: usize) -> Result<()> {
    if start >= nta.num_states() {
        return Err(Error::StateMismatch(format!("the image of {x} starts in an unknown state")));
    }
    let nonempty = nta.nonempty_states();
    if !nonempty[start] {
        return Ok(());
    }
    let is_hole = |k: usize| nta.alphabet()[k].as_hole();
    if nta.transitions().iter().any(|t| t.state == start && is_hole(t.sym).is_some()) {
        return Err(Error::Semantic(format!("the image of {x} contains a bare hole")));
    }
    let mut seen = vec![false; nta.num_states()];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(q) = stack.pop() {
        for t in nta.transitions().iter().filter(|t| t.state == q) {
            if let Some(i) = is_hole(t.sym) {
                if i > x.rank() {
                    return Err(Error::Semantic(format!("the image of {x} uses hole #{i} beyond its rank")));
                }
            }
            if t.children.iter().all(|&c| nonempty[c]) {
                for &c in &t.children {
                    if !seen[c] {
                        seen[c] = true;
                        stack.push(c);
                    }
                }
            }
        }
    }
    Ok(())
}

/// `f(#1, ..., #r)`.
pub fn identity_image(f: &Symbol) -> FiniteTree {
    FiniteTree::node(f.clone(), (1..=f.rank()).map(FiniteTree::hole).collect())
}

fn io_rec(sigma: &Substitution, s: &FiniteTree, memo: &mut HashMap<FiniteTree, BTreeSet<FiniteTree>>) -> Result<BTreeSet<FiniteTree>> {
    if let Some(r) = memo.get(s) {
        return Ok(r.clone());
    }
    let images: Vec<FiniteTree> = if sigma.is_var(&s.sym) {
        sigma.explicit_trees(&s.sym)?.to_vec()
    } else {
        vec![identity_image(&s.sym)]
    };
    let mut kids: Vec<Option<BTreeSet<FiniteTree>>> = vec![None; s.children.len()];
    let mut out = BTreeSet::new();
    for tx in images {
        let used: Vec<usize> = tx.holes().into_iter().collect();
        let mut choices = Vec::new();
        for &i in &used {
            if kids[i - 1].is_none() {
                kids[i - 1] = Some(io_rec(sigma, &s.children[i - 1], memo)?);
            }
            choices.push(kids[i - 1].as_ref().unwrap().iter().cloned().collect::<Vec<_>>());
        }
        if used.is_empty() {
            out.insert(tx);
            continue;
        }
        for combo in choices.into_iter().multi_cartesian_product() {
            let m: BTreeMap<usize, FiniteTree> = used.iter().copied().zip(combo).collect();
            out.insert(tx.hole_substitute_uniform(&m)?);
        }
    }
    memo.insert(s.clone(), out.clone());
    Ok(out)
}

/// Inside-out image of a finite tree under a substitution with finite images.
/// Every occurrence of a hole in a chosen image receives the same subtree.
pub fn eval_io_finite(sigma: &Substitution, s: &FiniteTree) -> Result<BTreeSet<FiniteTree>> {
    io_rec(sigma, s, &mut HashMap::new())
}

fn oi_rec(sigma: &Substitution, s: &FiniteTree, memo: &mut HashMap<FiniteTree, BTreeSet<FiniteTree>>) -> Result<BTreeSet<FiniteTree>> {
    if let Some(r) = memo.get(s) {
        return Ok(r.clone());
    }
    let images: Vec<FiniteTree> = if sigma.is_var(&s.sym) {
        sigma.explicit_trees(&s.sym)?.to_vec()
    } else {
        vec![identity_image(&s.sym)]
    };
    let mut out = BTreeSet::new();
    for tx in images {
        let leaves: Vec<(Position, usize)> = tx
            .positions()
            .into_iter()
            .filter_map(|u| tx.get(&u).and_then(|n| n.sym.as_hole()).map(|i| (u, i)))
            .collect();
        if leaves.is_empty() {
            out.insert(tx);
            continue;
        }
        let mut choices = Vec::new();
        for (_, i) in &leaves {
            choices.push(oi_rec(sigma, &s.children[i - 1], memo)?.into_iter().collect::<Vec<_>>());
        }
        for combo in choices.into_iter().multi_cartesian_product() {
            let m: BTreeMap<Position, FiniteTree> = leaves.iter().map(|(u, _)| u.clone()).zip(combo).collect();
            out.insert(tx.hole_substitute_pointwise(&m)?);
        }
    }
    memo.insert(s.clone(), out.clone());
    Ok(out)
}

/// Outside-in image: each hole leaf of a chosen image gets its own subtree.
pub fn eval_oi_finite(sigma: &Substitution, s: &FiniteTree) -> Result<BTreeSet<FiniteTree>> {
    oi_rec(sigma, s, &mut HashMap::new())
}

/// Selects an image tree (or nothing) for a position of a tree over `Σ ∪ X`.
pub trait Choice {
    fn choose(&self, u: &Position, sym: &Symbol) -> Option<FiniteTree>;
}

/// The same image for every occurrence of a variable; other symbols map to
/// `f(#1..#r)`. A variable mapped to `None` has no image.
#[derive(Clone, Debug, Default)]
pub struct ChoiceAssignment {
    images: BTreeMap<Symbol, Option<FiniteTree>>,
}

impl ChoiceAssignment {
    pub fn new() -> Self {
        ChoiceAssignment::default()
    }

    pub fn set(&mut self, x: Symbol, image: Option<FiniteTree>) -> Result<()> {
        if let Some(t) = &image {
            check_image(&x, t.holes(), &t.sym)?;
        }
        self.images.insert(x, image);
        Ok(())
    }

    pub fn image(&self, s: &Symbol) -> Option<FiniteTree> {
        match self.images.get(s) {
            Some(img) => img.clone(),
            None => Some(identity_image(s)),
        }
    }
}

impl Choice for ChoiceAssignment {
    fn choose(&self, _u: &Position, sym: &Symbol) -> Option<FiniteTree> {
        self.image(sym)
    }
}

/// A choice per position; positions not listed map their symbol to itself.
#[derive(Clone, Debug, Default)]
pub struct PositionChoice {
    pub images: BTreeMap<Position, Option<FiniteTree>>,
}

impl Choice for PositionChoice {
    fn choose(&self, u: &Position, sym: &Symbol) -> Option<FiniteTree> {
        match self.images.get(u) {
            Some(img) => img.clone(),
            None => Some(identity_image(sym)),
        }
    }
}

/// The `n`-th approximant: the chosen image at the root with its holes
/// replaced by the `(n-1)`-th approximants of the children. Missing images
/// become `⊥`.
pub fn gamma_n(gamma: &impl Choice, s: &TreeGraph, n: usize) -> FiniteTree {
    fn go(gamma: &impl Choice, s: &TreeGraph, v: usize, u: &Position, n: usize) -> FiniteTree {
        let node = &s.nodes[v];
        let Some(img) = gamma.choose(u, &node.sym) else { return FiniteTree::bottom() };
        if n == 0 {
            return img;
        }
        let m: BTreeMap<usize, FiniteTree> = img
            .holes()
            .into_iter()
            .filter(|&i| i <= node.succ.len())
            .map(|i| (i, go(gamma, s, node.succ[i - 1], &u.child(i), n - 1)))
            .collect();
        img.hole_substitute_uniform(&m).unwrap_or(img)
    }
    go(gamma, s, s.root, &Position::root(), n)
}

/// Limit of the approximants for a finite tree; `None` when it is `⊥`.
pub fn gamma_limit_finite(gamma: &impl Choice, s: &FiniteTree) -> Option<FiniteTree> {
    let t = gamma_n(gamma, &TreeGraph::from_tree(s), s.height() + 1);
    if t.contains_bottom() {
        None
    } else {
        Some(t)
    }
}

/// Inside-out image computed by enumerating every choice function on `s`.
pub fn eval_io_choices(sigma: &Substitution, s: &FiniteTree) -> Result<BTreeSet<FiniteTree>> {
    let mut slots: Vec<(Position, Vec<Option<FiniteTree>>)> = Vec::new();
    for u in s.positions() {
        let sym = &s.get(&u).unwrap().sym;
        if sigma.is_var(sym) {
            let imgs = sigma.explicit_trees(sym)?;
            let opts = if imgs.is_empty() { vec![None] } else { imgs.iter().cloned().map(Some).collect() };
            slots.push((u, opts));
        }
    }
    let mut out = BTreeSet::new();
    let combos: Box<dyn Iterator<Item = Vec<Option<FiniteTree>>>> = if slots.is_empty() {
        Box::new(std::iter::once(Vec::new()))
    } else {
        Box::new(slots.iter().map(|(_, o)| o.clone()).multi_cartesian_product())
    };
    for combo in combos {
        let gamma = PositionChoice { images: slots.iter().map(|(u, _)| u.clone()).zip(combo).collect() };
        if let Some(t) = gamma_limit_finite(&gamma, s) {
            out.insert(t);
        }
    }
    Ok(out)
}

/// Image of a rational tree under a homomorphism, as a graph. `None` when
/// a missing image is reached.
pub fn hom_image_rational(phi: &ChoiceAssignment, s: &TreeGraph) -> Result<Option<TreeGraph>> {
    // Each node of `s` expands to a copy of its image; hole leaves point to
    // the entry of the corresponding successor copy.
    let mut entry = Vec::with_capacity(s.nodes.len());
    let mut images = Vec::with_capacity(s.nodes.len());
    let mut total = 0;
    for n in &s.nodes {
        let img = phi.image(&n.sym);
        if let Some(t) = &img {
            check_image(&n.sym, t.holes(), &t.sym)?;
            if t.holes().iter().any(|&i| i > n.succ.len()) {
                return Err(Error::RankMismatch(format!("image of {} uses a hole beyond its rank", n.sym)));
            }
        }
        entry.push(total);
        total += img.as_ref().map_or(1, |t| t.size() - t.positions().iter().filter(|u| t.get(u).unwrap().is_hole()).count());
        images.push(img);
    }
    let mut nodes: Vec<GraphNode> = Vec::with_capacity(total);
    for (v, img) in images.iter().enumerate() {
        match img {
            None => nodes.push(GraphNode { sym: Symbol::Bottom, succ: Vec::new() }),
            Some(t) => {
                fn emit(t: &FiniteTree, nodes: &mut Vec<GraphNode>, targets: &[usize]) -> usize {
                    let id = nodes.len();
                    nodes.push(GraphNode { sym: t.sym.clone(), succ: Vec::new() });
                    let mut succ = Vec::with_capacity(t.children.len());
                    for c in &t.children {
                        match c.sym.as_hole() {
                            Some(i) => succ.push(targets[i - 1]),
                            None => succ.push(emit(c, nodes, targets)),
                        }
                    }
                    nodes[id].succ = succ;
                    id
                }
                let targets: Vec<usize> = s.nodes[v].succ.iter().map(|&w| entry[w]).collect();
                emit(t, &mut nodes, &targets);
            }
        }
    }
    let g = TreeGraph::new(nodes, entry[s.root])?;
    if g.nodes.iter().any(|n| n.sym.is_bottom()) {
        return Ok(None);
    }
    Ok(Some(g))
}

/// Profiles realized by the trees of each image.
pub fn realized_profiles(
    sigma: &Substitution,
    ctx: &ProfileContext,
    budget: &Budget,
) -> Result<BTreeMap<Symbol, BTreeSet<Profile>>> {
    let mut out = BTreeMap::new();
    for (x, lang) in sigma.iter() {
        let set: BTreeSet<Profile> = match lang {
            Lang::Trees(ts) => ts.iter().map(|t| ctx.profile_finite(t)).collect(),
            Lang::Graphs(gs) => gs.iter().map(|g| ctx.profile_rational(g, budget)).collect::<Result<_>>()?,
            Lang::Regular { nta, state } => {
                ctx.language_profiles(nta, *state, x.rank(), budget)?.into_iter().map(|(p, _)| p).collect()
            }
        };
        out.insert(x.clone(), set);
    }
    Ok(out)
}

/// A substitution closed under profile equivalence, kept as profile sets.
#[derive(Clone, Debug)]
pub struct Saturated {
    ctx: ProfileContext,
    classes: BTreeMap<Symbol, BTreeSet<Profile>>,
}

pub fn saturate(sigma: &Substitution, ctx: &ProfileContext, budget: &Budget) -> Result<Saturated> {
    Ok(Saturated { ctx: ctx.clone(), classes: realized_profiles(sigma, ctx, budget)? })
}

impl Saturated {
    pub fn from_profiles(ctx: &ProfileContext, classes: BTreeMap<Symbol, BTreeSet<Profile>>) -> Self {
        Saturated { ctx: ctx.clone(), classes }
    }

    pub fn profiles(&self, x: &Symbol) -> Option<&BTreeSet<Profile>> {
        self.classes.get(x)
    }

    pub fn classes(&self) -> &BTreeMap<Symbol, BTreeSet<Profile>> {
        &self.classes
    }

    pub fn context(&self) -> &ProfileContext {
        &self.ctx
    }

    pub fn member(&self, x: &Symbol, t: &TreeGraph, budget: &Budget) -> Result<bool> {
        let Some(set) = self.classes.get(x) else { return Ok(false) };
        let syms = t.symbols();
        if t.nodes[t.root].sym.as_hole().is_some()
            || syms.iter().any(|s| s.is_bottom() || s.as_hole().map_or(false, |i| i > x.rank()))
        {
            return Ok(false);
        }
        Ok(set.contains(&self.ctx.profile_rational(t, budget)?))
    }

    /// Materializes every image as a union of profile-class automata.
    pub fn to_substitution(&self, budget: &Budget) -> Result<Substitution> {
        let mut out = Substitution::new();
        for (x, set) in &self.classes {
            let (nta, state) = class_union(&self.ctx, set, x.rank(), budget)?;
            out.insert(x.clone(), Lang::Regular { nta, state })?;
        }
        Ok(out)
    }
}

/// Automaton for the trees over `Σ ∪ {#1..#rank}` that are not bare holes and
/// whose profile is in `set`.
pub fn class_union(
    ctx: &ProfileContext,
    set: &BTreeSet<Profile>,
    rank: usize,
    budget: &Budget,
) -> Result<(ParityNta, usize)> {
    let mut alphabet: Vec<Symbol> = ctx.sigma().to_vec();
    alphabet.extend((1..=rank.min(ctx.holes())).map(Symbol::hole));
    let mut acc: Option<(ParityNta, usize)> = None;
    for pi in set {
        let (c, s) = ctx.profile_class(pi, budget)?;
        let c = c.restrict_alphabet(&alphabet);
        acc = Some(match acc {
            None => (c, s),
            Some((a, sa)) => a.union(sa, &c, s)?,
        });
    }
    let Some((nta, s)) = acc else { return Ok((ParityNta::empty(alphabet), 0)) };
    Ok(without_bare_holes(&nta, s))
}

/// Adds a fresh start state that copies the non-hole transitions of `start`.
pub fn without_bare_holes(nta: &ParityNta, start: usize) -> (ParityNta, usize) {
    let n = nta.num_states();
    let mut names = nta.state_names().to_vec();
    names.push(format!("{}%nh", nta.state_name(start)));
    let mut colors = nta.colors().to_vec();
    colors.push(nta.color(start));
    let mut trans: Vec<(usize, Symbol, Vec<usize>)> =
        nta.transitions().iter().map(|t| (t.state, nta.alphabet()[t.sym].clone(), t.children.clone())).collect();
    for t in nta.transitions().iter().filter(|t| t.state == start) {
        let s = &nta.alphabet()[t.sym];
        if s.as_hole().is_none() {
            trans.push((n, s.clone(), t.children.clone()));
        }
    }
    let out = ParityNta::from_parts(nta.alphabet().to_vec(), names, colors, trans).expect("copy of a valid automaton");
    out.trim(n)
}

/// Replaces every image by the witness trees `t_π` of its profiles, over the
/// extended alphabet.
pub fn specialize(sigma: &Substitution, ctx: &ProfileContext, budget: &Budget) -> Result<(Extended, Substitution)> {
    let sets = realized_profiles(sigma, ctx, budget)?;
    let all: Vec<Profile> = sets.values().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let ext = Extended::new(ctx, &all)?;
    let mut out = Substitution::new();
    for (x, set) in &sets {
        let trees = set.iter().map(|pi| ext.witness_tree(ext.index_of(pi).unwrap())).collect::<Result<Vec<_>>>()?;
        out.insert(x.clone(), Lang::Trees(trees))?;
    }
    Ok((ext, out))
}

/// Alternating automaton over `alphabet` accepting the trees whose image
/// under the homomorphism `phi` is accepted by `b`. Symbols missing from
/// `phi` map to themselves. Returns the automaton and, for each state `p`
/// of `b`, the start state `(p, χ(p))`.
pub fn inverse_image_ata(
    phi: &BTreeMap<Symbol, FiniteTree>,
    alphabet: &[Symbol],
    b: &ParityNta,
) -> Result<(ParityAta, Vec<usize>)> {
    let alphabet: Vec<Symbol> = alphabet.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let ncol = b.num_colors();
    let nq = b.num_states();
    let st = |q: usize, c: u32| q * ncol as usize + (c as usize - 1);
    let mut formulas: Vec<Vec<Dnf>> = vec![Vec::with_capacity(alphabet.len()); nq];
    for f in &alphabet {
        let img = match phi.get(f) {
            Some(t) => {
                check_image(f, t.holes(), &t.sym)?;
                t.clone()
            }
            None => identity_image(f),
        };
        for (p, row) in formulas.iter_mut().enumerate() {
            row.push(block_formula(b, &img, p, &st));
        }
    }
    let mut names = Vec::new();
    let mut colors = Vec::new();
    let mut delta = Vec::new();
    for q in 0..nq {
        for c in 1..=ncol {
            names.push(format!("{}%{c}", b.state_name(q)));
            colors.push(c);
            delta.push(formulas[q].clone());
        }
    }
    let a = ParityAta::new(alphabet, names, colors, delta)?;
    let starts = (0..nq).map(|p| st(p, b.color(p))).collect();
    Ok((a, starts))
}

/// Minimal DNF over the runs of `b` (with every hole allowed everywhere) on
/// `t` from `p`: one atom `(i, (state, path-min color))` per hole leaf.
fn block_formula(b: &ParityNta, t: &FiniteTree, p: usize, st: &impl Fn(usize, u32) -> usize) -> Dnf {
    fn go(
        b: &ParityNta,
        t: &FiniteTree,
        q: usize,
        m: u32,
        st: &impl Fn(usize, u32) -> usize,
    ) -> Vec<BTreeSet<Atom>> {
        let m = m.min(b.color(q));
        if let Some(i) = t.sym.as_hole() {
            return vec![BTreeSet::from([(i, st(q, m))])];
        }
        let mut out = Vec::new();
        for tr in b.transitions_on(q, &t.sym) {
            let mut acc: Vec<BTreeSet<Atom>> = vec![BTreeSet::new()];
            for (c, &s) in t.children.iter().zip(&tr.children) {
                let sub = go(b, c, s, m, st);
                let mut next = Vec::new();
                for a in &acc {
                    for x in &sub {
                        next.push(a.union(x).copied().collect());
                    }
                }
                acc = ata::minimal_terms(next);
                if acc.is_empty() {
                    break;
                }
            }
            out.extend(acc);
        }
        ata::minimal_terms(out)
    }
    go(b, t, p, u32::MAX, st).into_iter().map(|s| s.into_iter().collect()).collect()
}

/// Name of the fresh constant marking a missing image.
pub const ABSENT: &str = "%a";

/// `b` extended to accept, from a fresh start state, every tree accepted at
/// `q0` and every tree containing the constant `%a`.
pub fn with_absent_marker(b: &ParityNta, q0: usize) -> (ParityNta, usize) {
    let absent = Symbol::new(ABSENT, 0);
    let mut alphabet = b.alphabet().to_vec();
    if !alphabet.contains(&absent) {
        alphabet.push(absent.clone());
    }
    let n = b.num_states();
    let (search, any, start) = (n, n + 1, n + 2);
    let mut names = b.state_names().to_vec();
    names.extend(["%search".to_string(), "%any".to_string(), "%start".to_string()]);
    let mut colors = b.colors().to_vec();
    colors.extend([1, 2, b.color(q0)]);
    let mut trans: Vec<(usize, Symbol, Vec<usize>)> =
        b.transitions().iter().map(|t| (t.state, b.alphabet()[t.sym].clone(), t.children.clone())).collect();
    for t in b.transitions().iter().filter(|t| t.state == q0) {
        trans.push((start, b.alphabet()[t.sym].clone(), t.children.clone()));
    }
    for f in &alphabet {
        let r = f.rank();
        trans.push((any, f.clone(), vec![any; r]));
        for k in 0..r {
            let mut kids = vec![any; r];
            kids[k] = search;
            trans.push((search, f.clone(), kids.clone()));
            trans.push((start, f.clone(), kids));
        }
    }
    trans.push((search, absent.clone(), Vec::new()));
    trans.push((start, absent, Vec::new()));
    let nta = ParityNta::from_parts(alphabet, names, colors, trans).expect("valid construction");
    (nta, start)
}

/// Annotated copy `x@k` of a variable.
pub fn annotated(x: &Symbol, tag: &str) -> Symbol {
    Symbol::new(&format!("{}@{tag}", x.name()), x.rank())
}

/// The trees over `Σ ∪ X` whose inside-out image lies in `L(b, q0)`, by
/// annotating variables with profiles, dualizing, projecting the
/// annotations away and complementing back. Expensive; `Σ` is the alphabet
/// of `b`.
pub fn inverse_image_nta(sigma: &Substitution, b: &ParityNta, q0: usize, budget: &Budget) -> Result<(ParityNta, usize)> {
    let (marked, start) = with_absent_marker(b, q0);
    let ctx = ProfileContext::new(&marked, sigma.max_rank())?;
    let sets = realized_profiles(sigma, &ctx, budget)?;
    let all: Vec<Profile> = sets.values().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let ext = Extended::new(&ctx, &all)?;
    let mut phi = BTreeMap::new();
    let mut proj = BTreeMap::new();
    for f in b.alphabet() {
        proj.insert(f.clone(), f.clone());
    }
    for (x, set) in &sets {
        if set.is_empty() {
            let xa = annotated(x, "a");
            phi.insert(xa.clone(), FiniteTree::constant(ABSENT));
            proj.insert(xa, x.clone());
        }
        for pi in set {
            let k = ext.index_of(pi).unwrap();
            let xk = annotated(x, &k.to_string());
            phi.insert(xk.clone(), ext.witness_tree(k)?);
            proj.insert(xk, x.clone());
        }
    }
    let alphabet: Vec<Symbol> = proj.keys().cloned().collect();
    let (a, starts) = inverse_image_ata(&phi, &alphabet, ext.automaton())?;
    let (bad, s) = ata::ata_to_nta(&a.dual(), starts[start], budget)?;
    let bad = bad.relabel_project(&proj)?;
    let mut target: Vec<Symbol> = b.alphabet().to_vec();
    target.extend(sigma.vars().cloned());
    let bad = bad.extend_alphabet(&target);
    let (good, s) = bad.complement(s, budget)?;
    Ok((good.restrict_alphabet(&target), s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> FiniteTree {
        FiniteTree::parse(s).unwrap()
    }

    fn explicit(entries: &[(&str, usize, &[&str])]) -> Substitution {
        let mut s = Substitution::new();
        for (x, r, ts) in entries {
            s.insert(Symbol::new(x, *r), Lang::Trees(ts.iter().map(|x| t(x)).collect())).unwrap();
        }
        s
    }

    #[test]
    fn duplication_io_and_oi() {
        let sigma = explicit(&[("x", 1, &["f(#1, #1)"]), ("z", 0, &["a", "b"])]);
        let s1 = t("x(z)");
        assert_eq!(eval_io_finite(&sigma, &s1).unwrap().len(), 2);
        assert_eq!(eval_oi_finite(&sigma, &s1).unwrap().len(), 4);
        let s2 = t("x(x(z))");
        assert_eq!(eval_io_finite(&sigma, &s2).unwrap().len(), 2);
        assert_eq!(eval_oi_finite(&sigma, &s2).unwrap().len(), 16);
    }

    #[test]
    fn ignored_subtrees_do_not_need_images() {
        let sigma = explicit(&[("x", 1, &["f(#1, #1)", "a"]), ("z", 0, &[])]);
        let got = eval_io_finite(&sigma, &t("x(x(x(z)))")).unwrap();
        let want: BTreeSet<FiniteTree> = ["a", "f(a, a)", "f(f(a, a), f(a, a))"].iter().map(|s| t(s)).collect();
        assert_eq!(got, want);
        assert_eq!(eval_io_choices(&sigma, &t("x(x(x(z)))")).unwrap(), want);
    }

    #[test]
    fn ground_trees_map_to_themselves() {
        let sigma = explicit(&[("x", 1, &["g(#1)"])]);
        let s = t("f(a, b)");
        assert_eq!(eval_io_finite(&sigma, &s).unwrap(), BTreeSet::from([s.clone()]));
        assert_eq!(eval_oi_finite(&sigma, &s).unwrap(), BTreeSet::from([s]));
    }

    #[test]
    fn images_are_validated() {
        let mut s = Substitution::new();
        assert!(s.insert(Symbol::new("x", 1), Lang::Trees(vec![t("#1")])).is_err());
        assert!(s.insert(Symbol::new("x", 1), Lang::Trees(vec![t("f(#1, #2)")])).is_err());
        let n = ParityNta::parse("alphabet g/1 #2\nstates p q\ncolors p=1 q=1\np -g-> q\nq -#2->").unwrap();
        assert!(s.insert(Symbol::new("x", 1), Lang::Regular { nta: n.clone(), state: 0 }).is_err());
        assert!(s.insert(Symbol::new("x", 2), Lang::Regular { nta: n, state: 0 }).is_ok());
    }

    #[test]
    fn approximants() {
        let mut gamma = ChoiceAssignment::new();
        gamma.set(Symbol::new("x", 1), Some(t("a(a(#1))"))).unwrap();
        let s = TreeGraph::from_tree(&t("x(b)"));
        assert_eq!(gamma_n(&gamma, &s, 0), t("a(a(#1))"));
        assert_eq!(gamma_n(&gamma, &s, 1), t("a(a(b))"));
        gamma.set(Symbol::new("x", 1), None).unwrap();
        assert_eq!(gamma_n(&gamma, &s, 3), FiniteTree::bottom());
    }

    #[test]
    fn hom_image_of_a_loop() {
        let mut phi = ChoiceAssignment::new();
        phi.set(Symbol::new("x", 1), Some(t("a(#1)"))).unwrap();
        let s = TreeGraph::parse("n = x(n)").unwrap();
        let img = hom_image_rational(&phi, &s).unwrap().unwrap();
        let a_omega = TreeGraph::parse("m = a(m)").unwrap();
        assert_eq!(img.unfold(8), a_omega.unfold(8));
        let id = ChoiceAssignment::new();
        let u = TreeGraph::parse("n = f(n, m); m = b").unwrap();
        assert_eq!(hom_image_rational(&id, &u).unwrap().unwrap().unfold(6), u.unfold(6));
    }

    #[test]
    fn inverse_image_ata_matches_images() {
        // Accepts trees over {a/1, b/0, f/2} with finitely many f.
        let b = ParityNta::parse(
            "alphabet a/1 b/0 f/2\nstates p q\ncolors p=2 q=1\np -a-> p\np -b->\np -f-> q q\nq -a-> p\nq -b->\nq -f-> q q",
        )
        .unwrap();
        let x = Symbol::new("x", 1);
        let y = Symbol::new("y", 2);
        let mut phi = BTreeMap::new();
        phi.insert(x.clone(), t("a(#1)"));
        phi.insert(y.clone(), t("f(#2, b)"));
        let alphabet = vec![x.clone(), y.clone(), Symbol::new("b", 0), Symbol::new("a", 1)];
        let (a, starts) = inverse_image_ata(&phi, &alphabet, &b).unwrap();
        let mut hom = ChoiceAssignment::new();
        hom.set(x, Some(t("a(#1)"))).unwrap();
        hom.set(y, Some(t("f(#2, b)"))).unwrap();
        for g in ["n = x(n)", "n = y(n, n)", "n = y(m, n); m = b", "n = x(m); m = y(n, m)", "n = y(n, m); m = x(m)"] {
            let g = TreeGraph::parse(g).unwrap();
            let img = hom_image_rational(&hom, &g).unwrap().unwrap();
            assert_eq!(a.member_rational_game(&g, starts[0]), b.member_rational(&img, 0), "{g:?}");
        }
    }

    #[test]
    fn absent_marker_language() {
        let b = ParityNta::parse("alphabet g/1 b/0\nstates p\ncolors p=1\np -b->").unwrap();
        let (m, s) = with_absent_marker(&b, 0);
        assert!(m.member_finite(&t("b"), s));
        assert!(m.member_finite(&t("g(g(%a))"), s));
        assert!(!m.member_finite(&t("g(b)"), s));
        assert!(!m.member_rational(&TreeGraph::parse("n = g(n)").unwrap(), s));
    }

    #[test]
    fn inverse_image_agrees_with_explicit_images() {
        // R: trees over {f/2, a/0, b/0} without b.
        let b = ParityNta::parse("alphabet f/2 a/0 b/0\nstates p\ncolors p=2\np -f-> p p\np -a->").unwrap();
        let sigma = explicit(&[("x", 1, &["f(#1, a)", "f(#1, #1)", "f(#1, b)"]), ("z", 0, &["a"]), ("w", 0, &[])]);
        let (inv, s0) = inverse_image_nta(&sigma, &b, 0, &Budget::default()).unwrap();
        let syms = vec![Symbol::new("x", 1), Symbol::new("z", 0), Symbol::new("w", 0), Symbol::new("b", 0)];
        for s in crate::trees::enumerate_trees(&syms, 4) {
            let img = eval_io_finite(&sigma, &s).unwrap();
            let want = img.iter().all(|u| b.member_finite(u, 0));
            assert_eq!(inv.member_finite(&s, s0), want, "{s}");
        }
    }
}
