//! Tasks and profiles of trees with holes relative to a parity tree automaton,
//! the finite profile algebra, and the automata that realize it.
//!
//! A task `(p, ψ_1..ψ_h)` is stored with its maps flattened: `psi[(i-1)*nq + q]`.
//! A profile is stored as the antichain of its minimal tasks.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use itertools::Itertools;

use crate::ata::{self, ParityAta};
use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::games::{self, Arena, Player};
use crate::nta::{ParityNta, Run};
use crate::trees::{FiniteTree, GraphNode, Position, Symbol, TreeGraph};

/// Rank of a color in the order `0, 2, 4, ..., 5, 3, 1`; smaller is better.
pub fn best_key(c: u32, ncol: u32) -> u32 {
    if c == 0 {
        0
    } else if c % 2 == 0 {
        c
    } else {
        2 * ncol + 2 - c
    }
}

/// `c1 ⪯ c2` in the best order over `{0..=ncol}`.
pub fn best_leq(c1: u32, c2: u32, ncol: u32) -> Result<bool> {
    if c1 > ncol {
        return Err(Error::OutOfRange(c1, ncol));
    }
    if c2 > ncol {
        return Err(Error::OutOfRange(c2, ncol));
    }
    Ok(best_key(c1, ncol) <= best_key(c2, ncol))
}

fn best_sup(a: u32, b: u32, ncol: u32) -> u32 {
    if best_key(a, ncol) >= best_key(b, ncol) {
        a
    } else {
        b
    }
}

/// The colors `0..=ncol` listed from best to worst.
pub fn best_chain(ncol: u32) -> Vec<u32> {
    let mut v: Vec<u32> = (0..=ncol).collect();
    v.sort_by_key(|&c| best_key(c, ncol));
    v
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Task {
    pub p: usize,
    pub psi: Vec<u32>,
}

/// Upward-closed task set, kept as its sorted antichain of minimal tasks.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Profile {
    tasks: Vec<Task>,
}

impl Profile {
    pub fn empty() -> Self {
        Profile::default()
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    /// The minimal tasks with state `p`.
    pub fn tasks_at(&self, p: usize) -> &[Task] {
        let lo = self.tasks.partition_point(|t| t.p < p);
        let hi = self.tasks.partition_point(|t| t.p <= p);
        &self.tasks[lo..hi]
    }
}

/// A base automaton `B` over `Σ` together with its extension by the holes `#1..#h`.
#[derive(Clone, Debug)]
pub struct ProfileContext {
    base: ParityNta,
    bh: ParityNta,
    holes: usize,
    ncol: u32,
}

impl ProfileContext {
    pub fn new(base: &ParityNta, holes: usize) -> Result<Self> {
        if let Some(s) = base.alphabet().iter().find(|s| s.as_hole().is_some() || s.is_bottom()) {
            return Err(Error::InvalidAlphabet(format!("{s} cannot be a base symbol")));
        }
        Ok(ProfileContext { base: base.clone(), bh: base.add_holes(holes), holes, ncol: base.num_colors() })
    }

    pub fn automaton(&self) -> &ParityNta {
        &self.base
    }

    pub fn with_holes(&self) -> &ParityNta {
        &self.bh
    }

    pub fn holes(&self) -> usize {
        self.holes
    }

    pub fn num_states(&self) -> usize {
        self.base.num_states()
    }

    pub fn num_colors(&self) -> u32 {
        self.ncol
    }

    pub fn sigma(&self) -> &[Symbol] {
        self.base.alphabet()
    }

    fn idx(&self, i: usize, q: usize) -> usize {
        (i - 1) * self.num_states() + q
    }

    fn width(&self) -> usize {
        self.holes * self.num_states()
    }

    /// Task with every map identically 0.
    pub fn zero_task(&self, p: usize) -> Task {
        Task { p, psi: vec![0; self.width()] }
    }

    pub fn psi(&self, t: &Task, i: usize, q: usize) -> u32 {
        t.psi[self.idx(i, q)]
    }

    pub fn set_psi(&self, t: &mut Task, i: usize, q: usize, c: u32) {
        let k = self.idx(i, q);
        t.psi[k] = c;
    }

    pub fn check_task(&self, t: &Task) -> Result<()> {
        if t.p >= self.num_states() {
            return Err(Error::StateMismatch(format!("task state {} out of range", t.p)));
        }
        if t.psi.len() != self.width() {
            return Err(Error::Semantic(format!("task has {} entries, expected {}", t.psi.len(), self.width())));
        }
        if let Some(&c) = t.psi.iter().find(|&&c| c > self.ncol) {
            return Err(Error::OutOfRange(c, self.ncol));
        }
        Ok(())
    }

    /// Task order: same state and pointwise best order.
    pub fn task_leq(&self, a: &Task, b: &Task) -> bool {
        a.p == b.p && a.psi.iter().zip(&b.psi).all(|(&x, &y)| best_key(x, self.ncol) <= best_key(y, self.ncol))
    }

    /// Canonical profile generated by the given tasks.
    pub fn minimize(&self, tasks: impl IntoIterator<Item = Task>) -> Profile {
        // A task can only be dominated by one with a smaller key sum, so one
        // pass in that order against the kept tasks suffices.
        let weight = |t: &Task| t.psi.iter().map(|&c| best_key(c, self.ncol)).sum::<u32>();
        let mut all: Vec<(u32, Task)> = tasks.into_iter().map(|t| (weight(&t), t)).collect();
        all.sort_unstable();
        all.dedup_by(|a, b| a.1 == b.1);
        let mut keep: Vec<Task> = Vec::new();
        for (_, t) in all {
            if !keep.iter().any(|u| self.task_leq(u, &t)) {
                keep.push(t);
            }
        }
        keep.sort_unstable();
        Profile { tasks: keep }
    }

    pub fn contains(&self, pi: &Profile, t: &Task) -> bool {
        pi.tasks.iter().any(|m| self.task_leq(m, t))
    }

    /// `π ⊆ π'` as upward-closed sets.
    pub fn profile_leq(&self, a: &Profile, b: &Profile) -> bool {
        a.tasks.iter().all(|t| self.contains(b, t))
    }

    pub fn format_task(&self, t: &Task) -> String {
        let mut s = format!("task {} |", self.base.state_name(t.p));
        for i in 1..=self.holes {
            for q in 0..self.num_states() {
                let c = self.psi(t, i, q);
                if c != 0 {
                    s.push_str(&format!(" {i}:{}={c}", self.base.state_name(q)));
                }
            }
        }
        s
    }

    /// Parses the `task p | i:q=c ...` form.
    pub fn parse_task(&self, text: &str) -> Result<Task> {
        let bad = |m: &str| Error::Syntax { line: 1, col: 1, msg: m.to_string() };
        let rest = text.trim().strip_prefix("task").ok_or_else(|| bad("expected 'task'"))?;
        let (p, entries) = rest.split_once('|').ok_or_else(|| bad("expected '|'"))?;
        let state = |n: &str| {
            self.base.state_by_name(n.trim()).ok_or_else(|| Error::StateMismatch(format!("unknown state {}", n.trim())))
        };
        let mut t = self.zero_task(state(p)?);
        for e in entries.split_whitespace() {
            let (i, qc) = e.split_once(':').ok_or_else(|| bad("expected i:q=c"))?;
            let (q, c) = qc.split_once('=').ok_or_else(|| bad("expected i:q=c"))?;
            let i: usize = i.parse().map_err(|_| bad("bad hole index"))?;
            if i == 0 || i > self.holes {
                return Err(Error::OutOfRange(i as u32, self.holes as u32));
            }
            let c: u32 = c.parse().map_err(|_| bad("bad color"))?;
            let q = state(q)?;
            self.set_psi(&mut t, i, q, c);
        }
        self.check_task(&t)?;
        Ok(t)
    }

    pub fn format_profile(&self, pi: &Profile) -> Vec<String> {
        pi.tasks.iter().map(|t| self.format_task(t)).collect()
    }

    /// `(hole, state, path-min color)` for every hole leaf of `t` under `rho`.
    fn leaf_colors(&self, rho: &Run, t: &FiniteTree) -> Result<Vec<(usize, usize, u32)>> {
        fn go(
            ctx: &ProfileContext,
            rho: &Run,
            t: &FiniteTree,
            u: Position,
            m: u32,
            out: &mut Vec<(usize, usize, u32)>,
        ) -> Result<()> {
            let q = *rho.get(&u).ok_or_else(|| Error::PositionNotInTree(format!("{u:?}")))?;
            let m = m.min(ctx.base.color(q));
            if let Some(i) = t.sym.as_hole() {
                if i > ctx.holes {
                    return Err(Error::OutOfRange(i as u32, ctx.holes as u32));
                }
                out.push((i, q, m));
            }
            for (d, c) in t.children.iter().enumerate() {
                go(ctx, rho, c, u.child(d + 1), m, out)?;
            }
            Ok(())
        }
        let mut out = Vec::new();
        go(self, rho, t, Position::root(), u32::MAX, &mut out)?;
        Ok(out)
    }

    /// Whether the run satisfies the task at every hole leaf.
    pub fn run_satisfies(&self, rho: &Run, t: &FiniteTree, tau: &Task) -> Result<bool> {
        self.check_task(tau)?;
        match rho.get(&Position::root()) {
            Some(&q) if q == tau.p => {}
            Some(&q) => {
                return Err(Error::StateMismatch(format!(
                    "run starts in {}, task in {}",
                    self.base.state_name(q),
                    self.base.state_name(tau.p)
                )))
            }
            None => return Err(Error::PositionNotInTree("root".into())),
        }
        let leaves = self.leaf_colors(rho, t)?;
        Ok(leaves.iter().all(|&(i, q, c)| best_key(c, self.ncol) <= best_key(self.psi(tau, i, q), self.ncol)))
    }

    /// The least task satisfied by the run.
    pub fn minimal_task_of_run(&self, rho: &Run, t: &FiniteTree, p: usize) -> Result<Task> {
        let mut tau = self.zero_task(p);
        for (i, q, c) in self.leaf_colors(rho, t)? {
            let k = self.idx(i, q);
            tau.psi[k] = best_sup(tau.psi[k], c, self.ncol);
        }
        Ok(tau)
    }

    /// Profile of a bare hole.
    pub fn hole_profile(&self, i: usize) -> Profile {
        let tasks = (0..self.num_states()).map(|q| {
            let mut t = self.zero_task(q);
            self.set_psi(&mut t, i, q, self.base.color(q));
            t
        });
        self.minimize(tasks)
    }

    /// Profile of `sym(t_1..t_r)` from the profiles of the `t_k`.
    pub fn apply(&self, sym: &Symbol, children: &[&Profile]) -> Profile {
        match sym {
            Symbol::Bottom => return Profile::empty(),
            Symbol::Hole(i) if *i <= self.holes => return self.hole_profile(*i),
            Symbol::Hole(_) => return Profile::empty(),
            Symbol::Named(..) => {}
        }
        let mut out = Vec::new();
        for q in 0..self.num_states() {
            let cq = self.base.color(q);
            for tr in self.base.transitions_on(q, sym) {
                // tasks are sorted by state, so each list is a slice
                let lists: Vec<&[Task]> = tr.children.iter().zip(children).map(|(&s, pi)| pi.tasks_at(s)).collect();
                if lists.iter().any(|l| l.is_empty()) {
                    continue;
                }
                let mut pick = vec![0usize; lists.len()];
                loop {
                    let mut t = self.zero_task(q);
                    for (list, &k) in lists.iter().zip(&pick) {
                        for (slot, &v) in t.psi.iter_mut().zip(&list[k].psi) {
                            if v != 0 {
                                *slot = best_sup(*slot, v.min(cq), self.ncol);
                            }
                        }
                    }
                    out.push(t);
                    let mut d = 0;
                    while d < pick.len() {
                        pick[d] += 1;
                        if pick[d] < lists[d].len() {
                            break;
                        }
                        pick[d] = 0;
                        d += 1;
                    }
                    if d == pick.len() {
                        break;
                    }
                }
            }
        }
        self.minimize(out)
    }

    /// Profile of a finite tree, bottom-up.
    pub fn profile_finite(&self, t: &FiniteTree) -> Profile {
        let kids: Vec<Profile> = t.children.iter().map(|c| self.profile_finite(c)).collect();
        let refs: Vec<&Profile> = kids.iter().collect();
        self.apply(&t.sym, &refs)
    }

    /// Holes occurring in every tree with profile `pi`.
    pub fn holes_of_profile(&self, pi: &Profile) -> Result<BTreeSet<usize>> {
        if pi.is_empty() {
            return Err(Error::EmptyProfile);
        }
        Ok((1..=self.holes)
            .filter(|&i| pi.tasks.iter().all(|t| (0..self.num_states()).any(|q| self.psi(t, i, q) != 0)))
            .collect())
    }

    /// Profile of the rational tree `T = C[i ← T]`, where `kappa` is the
    /// profile of `C` and `C` is not the bare hole `#i`.
    pub fn iterate(&self, kappa: &Profile, i: usize, budget: &Budget) -> Result<Profile> {
        let nq = self.num_states();
        let ncol = self.ncol;
        let top = ncol + 1;
        let mus = &kappa.tasks;
        // Parameter coordinates and the exit values that can reach them.
        let mut domain: BTreeMap<usize, BTreeSet<u32>> = BTreeMap::new();
        for mu in mus {
            for j in (1..=self.holes).filter(|&j| j != i) {
                for q in 0..nq {
                    let v = self.psi(mu, j, q);
                    if v != 0 {
                        let e = domain.entry(self.idx(j, q)).or_insert_with(|| BTreeSet::from([0]));
                        for c in 1..=top {
                            e.insert(c.min(v));
                        }
                    }
                }
            }
        }
        let coords: Vec<usize> = domain.keys().copied().collect();
        let values: Vec<Vec<u32>> = domain.values().map(|s| s.iter().copied().collect()).collect();
        let total = values.iter().try_fold(1usize, |acc, v| acc.checked_mul(v.len())).unwrap_or(usize::MAX);
        budget.candidates("profile iteration", total)?;

        let pidx = |q: usize, c: u32| q * (top as usize) + (c as usize - 1);
        let mut found = Vec::new();
        let choices: Vec<Vec<u32>> =
            if coords.is_empty() { vec![Vec::new()] } else { values.into_iter().multi_cartesian_product().collect() };
        for phi in choices {
            budget.time("profile iteration")?;
            let mut target = vec![0u32; self.width()];
            for (&k, &v) in coords.iter().zip(&phi) {
                target[k] = v;
            }
            let mut a = Arena::new();
            for _ in 0..nq {
                for _ in 1..=top {
                    a.add_vertex(Player::Prover, top);
                }
            }
            let lose = a.add_vertex(Player::Prover, top);
            for q in 0..nq {
                for c in 1..=top {
                    for mu in mus.iter().filter(|m| m.p == q) {
                        let s = a.add_vertex(Player::Spoiler, top);
                        a.add_edge(pidx(q, c), s);
                        let violated = coords.iter().any(|&k| {
                            let v = mu.psi[k];
                            v != 0 && best_key(c.min(v), ncol) > best_key(target[k], ncol)
                        });
                        if violated {
                            a.add_edge(s, lose);
                        }
                        for q2 in 0..nq {
                            let d = self.psi(mu, i, q2);
                            if d != 0 {
                                let m = a.add_vertex(Player::Spoiler, d);
                                a.add_edge(s, m);
                                a.add_edge(m, pidx(q2, c.min(d)));
                            }
                        }
                    }
                }
            }
            let sol = games::solve(&a);
            for p in 0..nq {
                if sol.w0.contains(&pidx(p, top)) {
                    found.push(Task { p, psi: target.clone() });
                }
            }
        }
        Ok(self.minimize(found))
    }

    /// The automaton `B_τ`; its start state accepts exactly the trees over
    /// `Σ ∪ H` that satisfy `τ`.
    pub fn task_automaton(&self, tau: &Task) -> Result<(ParityNta, usize)> {
        self.check_task(tau)?;
        let mut ids: HashMap<(usize, u32), usize> = HashMap::new();
        let mut order: Vec<(usize, u32)> = Vec::new();
        let start = (tau.p, self.base.color(tau.p));
        ids.insert(start, 0);
        order.push(start);
        let mut trans = Vec::new();
        let mut k = 0;
        while k < order.len() {
            let (q, c) = order[k];
            for tr in self.base.transitions().iter().filter(|t| t.state == q) {
                let sym = self.base.alphabet()[tr.sym].clone();
                let mut kids = Vec::with_capacity(tr.children.len());
                for &s in &tr.children {
                    let key = (s, c.min(self.base.color(s)));
                    let id = *ids.entry(key).or_insert_with(|| {
                        order.push(key);
                        order.len() - 1
                    });
                    kids.push(id);
                }
                trans.push((k, sym, kids));
            }
            for i in 1..=self.holes {
                if best_key(c, self.ncol) <= best_key(self.psi(tau, i, q), self.ncol) {
                    trans.push((k, Symbol::hole(i), Vec::new()));
                }
            }
            k += 1;
        }
        let names = order.iter().map(|&(q, c)| format!("{}%{c}", self.base.state_name(q))).collect();
        let colors = order.iter().map(|&(q, _)| self.base.color(q)).collect();
        let nta = ParityNta::from_parts(self.bh.alphabet().to_vec(), names, colors, trans)?;
        Ok((nta, 0))
    }

    fn upper_covers(&self, t: &Task) -> Vec<Task> {
        let chain = best_chain(self.ncol);
        let mut out = Vec::new();
        for k in 0..t.psi.len() {
            let pos = chain.iter().position(|&c| c == t.psi[k]).unwrap();
            if let Some(&next) = chain.get(pos + 1) {
                let mut u = t.clone();
                u.psi[k] = next;
                out.push(u);
            }
        }
        out
    }

    /// Maximal tasks outside the upward closure of `pi`.
    pub fn maximal_outside(&self, pi: &Profile, budget: &Budget) -> Result<Vec<Task>> {
        let per = (self.ncol as usize + 1).checked_pow(self.width() as u32).unwrap_or(usize::MAX);
        budget.candidates("profile complement", per.saturating_mul(self.num_states()))?;
        let mut out = Vec::new();
        for p in 0..self.num_states() {
            let maps = (0..self.width()).map(|_| 0..=self.ncol).multi_cartesian_product();
            let maps: Box<dyn Iterator<Item = Vec<u32>>> =
                if self.width() == 0 { Box::new(std::iter::once(Vec::new())) } else { Box::new(maps) };
            for psi in maps {
                let t = Task { p, psi };
                if !self.contains(pi, &t) && self.upper_covers(&t).iter().all(|u| self.contains(pi, u)) {
                    out.push(t);
                }
            }
        }
        Ok(out)
    }

    /// Automaton for the class `{t ∈ T(Σ ∪ H) : π(t) = π}`.
    pub fn profile_class(&self, pi: &Profile, budget: &Budget) -> Result<(ParityNta, usize)> {
        let mut parts = Vec::new();
        for t in pi.tasks() {
            let (b, s) = self.task_automaton(t)?;
            parts.push((ParityAta::from_nta(&b), s));
        }
        for t in self.maximal_outside(pi, budget)? {
            let (b, s) = self.task_automaton(&t)?;
            parts.push((ParityAta::from_nta(&b).dual(), s));
        }
        if parts.is_empty() {
            return Ok((ParityNta::universal(self.bh.alphabet().to_vec()), 0));
        }
        let (a, s) = ParityAta::conjunction(&parts)?;
        ata::ata_to_nta(&a, s, budget)
    }

    /// Exact profile of a rational tree by testing every relevant task.
    /// Exponential in the number of states and holes; meant for checking.
    pub fn profile_rational(&self, g: &TreeGraph, budget: &Budget) -> Result<Profile> {
        if let Some(t) = g.to_finite() {
            return Ok(self.profile_finite(&t));
        }
        if g.symbols().iter().any(|s| s.is_bottom()) {
            return Ok(Profile::empty());
        }
        let present: Vec<usize> = g.symbols().iter().filter_map(|s| s.as_hole()).filter(|&i| i <= self.holes).collect();
        let coords: Vec<usize> =
            present.iter().flat_map(|&i| (0..self.num_states()).map(move |q| (i, q))).map(|(i, q)| self.idx(i, q)).collect();
        let total = (self.ncol as usize + 1).checked_pow(coords.len() as u32).unwrap_or(usize::MAX);
        budget.candidates("rational profile", total.saturating_mul(self.num_states()))?;
        let mut found = Vec::new();
        for p in 0..self.num_states() {
            let mut worst = self.zero_task(p);
            for &k in &coords {
                worst.psi[k] = 1;
            }
            let (b, s) = self.task_automaton(&worst)?;
            if !b.member_rational(g, s) {
                continue;
            }
            let maps: Box<dyn Iterator<Item = Vec<u32>>> = if coords.is_empty() {
                Box::new(std::iter::once(Vec::new()))
            } else {
                Box::new(coords.iter().map(|_| 0..=self.ncol).multi_cartesian_product())
            };
            for vals in maps {
                budget.time("rational profile")?;
                let mut t = self.zero_task(p);
                for (&k, &v) in coords.iter().zip(&vals) {
                    t.psi[k] = v;
                }
                if found.iter().any(|f| self.task_leq(f, &t)) {
                    continue;
                }
                let (b, s) = self.task_automaton(&t)?;
                if b.member_rational(g, s) {
                    found.push(t);
                }
            }
        }
        Ok(self.minimize(found))
    }

    /// Closure of the hole profiles `#1..#max_hole` under symbol application
    /// and iteration of one hole. Every entry carries a rational witness.
    ///
    /// Loops are closed through `budget.loop_holes` spare holes past
    /// `self.holes`, so a loop body may keep its own hole leaves and up to
    /// that many enclosing loops open. Entries that still use a spare hole are
    /// dropped and the rest are projected back onto `#1..#holes`.
    pub fn closure(&self, max_hole: usize, budget: &Budget) -> Result<Realizable> {
        let max_hole = max_hole.min(self.holes);
        let spare = budget.loop_holes;
        if spare == 0 {
            return self.close((1..=max_hole).collect(), budget);
        }
        let wide = ProfileContext::new(&self.base, self.holes + spare)?;
        let seeds = (1..=max_hole).chain(self.holes + 1..=self.holes + spare).collect();
        let all = wide.close(seeds, budget)?;
        let keep = self.width();
        let mut set = Realizable::default();
        for e in all.iter() {
            if e.witness.symbols().iter().any(|s| s.as_hole().is_some_and(|i| i > self.holes)) {
                continue;
            }
            let tasks = e.profile.tasks.iter().map(|t| Task { p: t.p, psi: t.psi[..keep].to_vec() });
            set.add(self.minimize(tasks), e.witness.clone(), e.proper);
        }
        Ok(set)
    }

    fn close(&self, seeds: Vec<usize>, budget: &Budget) -> Result<Realizable> {
        let mut set = Realizable::default();
        for i in seeds {
            let g = TreeGraph::from_tree(&FiniteTree::hole(i));
            set.add(self.hole_profile(i), g, false);
        }
        let mut done = 0;
        let mut iterated: Vec<bool> = Vec::new();
        loop {
            budget.profiles("profile closure", set.len())?;
            let n = set.len();
            let mut changed = false;
            for f in self.sigma() {
                let r = f.rank();
                if r == 0 {
                    if done == 0 {
                        let g = TreeGraph::from_tree(&FiniteTree::leaf(f.clone()));
                        changed |= set.add(self.apply(f, &[]), g, true);
                    }
                    continue;
                }
                // Tuples whose first index from the newest batch is at slot k.
                for k in 0..r {
                    let ranges: Vec<std::ops::Range<usize>> =
                        (0..r).map(|s| if s < k { 0..done } else if s == k { done..n } else { 0..n }).collect();
                    if ranges.iter().any(|rg| rg.is_empty()) {
                        continue;
                    }
                    for tuple in ranges.into_iter().multi_cartesian_product() {
                        let pis: Vec<&Profile> = tuple.iter().map(|&x| &set.entries[x].profile).collect();
                        let pi = self.apply(f, &pis);
                        let size = 1 + tuple.iter().map(|&x| set.entries[x].witness.len()).sum::<usize>();
                        if set.has_proper_within(&pi, size) {
                            continue;
                        }
                        let g = compose(f, tuple.iter().map(|&x| &set.entries[x].witness));
                        changed |= set.add(pi, g, true);
                        budget.profiles("profile closure", set.len())?;
                    }
                }
            }
            iterated.resize(set.len(), false);
            for x in 0..set.len() {
                if iterated[x] || !set.entries[x].proper || set.entries[x].profile.is_empty() {
                    continue;
                }
                iterated[x] = true;
                let holes = self.holes_of_profile(&set.entries[x].profile)?;
                for i in holes {
                    let pi = self.iterate(&set.entries[x].profile, i, budget)?;
                    let g = loop_hole(&set.entries[x].witness, i);
                    changed |= set.add(pi, g, true);
                }
            }
            iterated.resize(set.len(), false);
            done = n;
            if !changed && done == set.len() {
                break;
            }
        }
        Ok(set)
    }

    /// The realizable profiles `P_B`, always including the empty profile.
    pub fn realizable_profiles(&self, budget: &Budget) -> Result<Realizable> {
        let mut set = self.closure(self.holes, budget)?;
        if set.index_of(&Profile::empty()).is_none() {
            set.add(Profile::empty(), TreeGraph::from_tree(&FiniteTree::bottom()), false);
        }
        Ok(set)
    }

    /// Profiles of the trees in `L(n, start)` that use only holes up to
    /// `max_hole` and are not bare holes, with a witness for each.
    /// Hole leaves of `n` are honored through its hole transitions.
    pub fn language_profiles(
        &self,
        n: &ParityNta,
        start: usize,
        max_hole: usize,
        budget: &Budget,
    ) -> Result<Vec<(Profile, TreeGraph)>> {
        let nb = self.num_states();
        let nn = n.num_states();
        let mut names: Vec<String> = self.base.state_names().iter().map(|s| format!("b.{s}")).collect();
        names.extend(n.state_names().iter().map(|s| format!("n.{s}")));
        let mut colors = self.base.colors().to_vec();
        colors.extend_from_slice(n.colors());
        let mut trans: Vec<(usize, Symbol, Vec<usize>)> = self
            .base
            .transitions()
            .iter()
            .map(|t| (t.state, self.base.alphabet()[t.sym].clone(), t.children.clone()))
            .collect();
        for t in n.transitions() {
            let s = &n.alphabet()[t.sym];
            if self.base.symbol_index(s).is_some() {
                trans.push((nb + t.state, s.clone(), t.children.iter().map(|c| nb + c).collect()));
            }
        }
        let joint = ParityNta::from_parts(self.sigma().to_vec(), names, colors, trans)?;
        let jctx = ProfileContext::new(&joint, self.holes)?;
        let mut goal = jctx.zero_task(nb + start);
        for i in 1..=max_hole.min(self.holes) {
            for q in 0..nn {
                if !n.transitions_on(q, &Symbol::hole(i)).is_empty() {
                    jctx.set_psi(&mut goal, i, nb + q, 1);
                }
            }
        }
        let set = jctx.closure(max_hole, budget)?;
        let mut out: BTreeMap<Profile, TreeGraph> = BTreeMap::new();
        for e in set.iter().filter(|e| e.proper) {
            if !jctx.contains(&e.profile, &goal) {
                continue;
            }
            let tasks = e.profile.tasks.iter().filter(|t| t.p < nb).map(|t| {
                let mut u = self.zero_task(t.p);
                for i in 1..=self.holes {
                    for q in 0..nb {
                        self.set_psi(&mut u, i, q, jctx.psi(t, i, q));
                    }
                }
                u
            });
            let pi = self.minimize(tasks);
            out.entry(pi).or_insert_with(|| e.witness.clone());
        }
        Ok(out.into_iter().collect())
    }
}

fn compose<'a>(f: &Symbol, kids: impl Iterator<Item = &'a TreeGraph>) -> TreeGraph {
    let mut nodes = vec![GraphNode { sym: f.clone(), succ: Vec::new() }];
    for g in kids {
        let off = nodes.len();
        nodes[0].succ.push(off + g.root);
        nodes.extend(g.nodes.iter().map(|n| GraphNode { sym: n.sym.clone(), succ: n.succ.iter().map(|s| s + off).collect() }));
    }
    let g = TreeGraph::new(nodes, 0).expect("composition of valid graphs");
    if g.len() > 32 {
        g.minimize()
    } else {
        g
    }
}

/// Redirects every `#i` leaf of `g` to its root.
fn loop_hole(g: &TreeGraph, i: usize) -> TreeGraph {
    let hole = Symbol::hole(i);
    let nodes = g
        .nodes
        .iter()
        .map(|n| GraphNode {
            sym: n.sym.clone(),
            succ: n.succ.iter().map(|&s| if g.nodes[s].sym == hole { g.root } else { s }).collect(),
        })
        .collect();
    TreeGraph::new(nodes, g.root).expect("valid graph").minimize()
}

#[derive(Clone, Debug)]
pub struct RealizedProfile {
    pub profile: Profile,
    pub witness: TreeGraph,
    /// The witness is over `Σ ∪ H` and is not a bare hole.
    pub proper: bool,
}

/// A set of profiles, each with a witness tree, in discovery order.
#[derive(Clone, Debug, Default)]
pub struct Realizable {
    entries: Vec<RealizedProfile>,
    index: HashMap<Profile, usize>,
}

impl Realizable {
    /// Adds a profile or upgrades its witness to a proper one; reports a change.
    fn add(&mut self, profile: Profile, witness: TreeGraph, proper: bool) -> bool {
        match self.index.get(&profile) {
            Some(&k) => {
                let e = &mut self.entries[k];
                if proper && (!e.proper || witness.len() < e.witness.len()) {
                    let upgraded = !e.proper;
                    e.witness = witness;
                    e.proper = true;
                    upgraded
                } else {
                    false
                }
            }
            None => {
                self.index.insert(profile.clone(), self.entries.len());
                self.entries.push(RealizedProfile { profile, witness, proper });
                true
            }
        }
    }

    /// Whether `profile` already has a proper witness of at most `size` nodes.
    fn has_proper_within(&self, profile: &Profile, size: usize) -> bool {
        self.index.get(profile).is_some_and(|&k| self.entries[k].proper && self.entries[k].witness.len() <= size)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, k: usize) -> &RealizedProfile {
        &self.entries[k]
    }

    pub fn iter(&self) -> impl Iterator<Item = &RealizedProfile> {
        self.entries.iter()
    }

    pub fn index_of(&self, pi: &Profile) -> Option<usize> {
        self.index.get(pi).copied()
    }

    pub fn profiles(&self) -> Vec<Profile> {
        self.entries.iter().map(|e| e.profile.clone()).collect()
    }
}

/// The alphabet `Σ_P` and the automaton `B_P` for a list of profiles.
#[derive(Clone, Debug)]
pub struct Extended {
    nta: ParityNta,
    holes: usize,
    nq: usize,
    profiles: Vec<Profile>,
    symbols: Vec<Symbol>,
    hole_sets: Vec<BTreeSet<usize>>,
}

pub fn dollar(i: usize) -> Symbol {
    Symbol::new(&format!("${i}"), 1)
}

impl Extended {
    pub fn new(ctx: &ProfileContext, profiles: &[Profile]) -> Result<Self> {
        let b = ctx.automaton();
        let nq = b.num_states();
        let h = ctx.holes();
        let ncol = ctx.num_colors() as usize;
        let triple = |c: u32, q: usize, i: usize| nq + ((c as usize - 1) * nq + q) * h + (i - 1);
        let mut names: Vec<String> = b.state_names().to_vec();
        let mut colors = b.colors().to_vec();
        for c in 1..=ncol as u32 {
            for q in 0..nq {
                for i in 1..=h {
                    names.push(format!("{}%{c}%{i}", b.state_name(q)));
                    colors.push(c);
                }
            }
        }
        let mut alphabet = b.alphabet().to_vec();
        let mut trans: Vec<(usize, Symbol, Vec<usize>)> =
            b.transitions().iter().map(|t| (t.state, b.alphabet()[t.sym].clone(), t.children.clone())).collect();
        for i in 1..=h {
            alphabet.push(dollar(i));
            for c in 1..=ncol as u32 {
                for q in 0..nq {
                    trans.push((triple(c, q, i), dollar(i), vec![q]));
                }
            }
        }
        let mut symbols = Vec::new();
        let mut hole_sets = Vec::new();
        for (k, pi) in profiles.iter().enumerate() {
            let hs = if pi.is_empty() { BTreeSet::new() } else { ctx.holes_of_profile(pi)? };
            let sym = Symbol::new(&format!("f@{k}"), nq * hs.len());
            alphabet.push(sym.clone());
            for t in pi.tasks() {
                let mut kids = Vec::new();
                for &i in &hs {
                    let fallback = (0..nq)
                        .find(|&q| ctx.psi(t, i, q) != 0)
                        .map(|q| triple(ctx.psi(t, i, q), q, i))
                        .expect("hole set read off the profile");
                    for q in 0..nq {
                        let c = ctx.psi(t, i, q);
                        kids.push(if c != 0 { triple(c, q, i) } else { fallback });
                    }
                }
                trans.push((t.p, sym.clone(), kids));
            }
            symbols.push(sym);
            hole_sets.push(hs);
        }
        let nta = ParityNta::from_parts(alphabet, names, colors, trans)?;
        Ok(Extended { nta, holes: h, nq, profiles: profiles.to_vec(), symbols, hole_sets })
    }

    /// `B_P` over `Σ_P`; holes are added by a profile context over it.
    pub fn automaton(&self) -> &ParityNta {
        &self.nta
    }

    pub fn alphabet(&self) -> &[Symbol] {
        self.nta.alphabet()
    }

    pub fn profiles(&self) -> &[Profile] {
        &self.profiles
    }

    pub fn symbol(&self, k: usize) -> &Symbol {
        &self.symbols[k]
    }

    pub fn index_of(&self, pi: &Profile) -> Option<usize> {
        self.profiles.iter().position(|p| p == pi)
    }

    pub fn hole_set(&self, k: usize) -> &BTreeSet<usize> {
        &self.hole_sets[k]
    }

    /// The tree `t_π` for the `k`-th profile.
    pub fn witness_tree(&self, k: usize) -> Result<FiniteTree> {
        let sym = self.symbols.get(k).ok_or_else(|| Error::ProfileNotRealizable(format!("no profile {k}")))?;
        let mut kids = Vec::new();
        for &i in &self.hole_sets[k] {
            for _ in 0..self.nq {
                kids.push(FiniteTree::node(dollar(i), vec![FiniteTree::hole(i)]));
            }
        }
        Ok(FiniteTree::node(sym.clone(), kids))
    }

    /// A task of the base context, widened to the states of `B_P`.
    pub fn widen(&self, t: &Task) -> Task {
        let n2 = self.nta.num_states();
        let mut psi = vec![0; self.holes * n2];
        for i in 1..=self.holes {
            for q in 0..self.nq {
                psi[(i - 1) * n2 + q] = t.psi[(i - 1) * self.nq + q];
            }
        }
        Task { p: t.p, psi }
    }
}
