//! Regular matching: find substitutions `σ1 ≤ σ ≤ σ2` with `σ_io(L) ⊆ R`.
//!
//! Candidates are described by profile sets: a candidate assigns each
//! variable `x` a set `Π'_x` of profiles realized in `σ2(x)` that contains the
//! profiles realized in `σ1(x)`, and stands for the substitution mapping `x`
//! to the trees of `σ2(x)` whose profile is in `Π'_x`. A candidate is checked
//! by replacing each image by its profile witnesses and testing emptiness of
//! `L` against the dual of the inverse-image automaton.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use crate::ata::{self, ParityAta};
use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::nta::ParityNta;
use crate::profiles::{Extended, Profile, ProfileContext};
use crate::subst::{
    self, annotated, eval_io_finite, inverse_image_ata, realized_profiles, with_absent_marker, Lang, Substitution, ABSENT,
};
use crate::trees::{FiniteTree, Symbol, TreeGraph};

#[derive(Clone, Debug)]
pub struct MatchingInstance {
    /// Automaton and start state over `Σ ∪ X`.
    pub l: (ParityNta, usize),
    /// Automaton and start state over `Σ`.
    pub r: (ParityNta, usize),
    pub sigma1: Substitution,
    pub sigma2: Substitution,
}

/// One candidate: a profile set per variable.
pub type Assignment = BTreeMap<Symbol, BTreeSet<Profile>>;

#[derive(Clone, Debug)]
pub struct Solution {
    pub profiles: Assignment,
    /// Explicit images, present when every upper bound is a finite set.
    pub explicit: Option<Substitution>,
}

#[derive(Clone, Debug)]
pub struct SolutionSet {
    pub decision: bool,
    pub maximal: Vec<Solution>,
    pub candidates_checked: usize,
}

/// Precomputed data shared by all candidate checks of one instance.
pub struct Solver {
    inst: MatchingInstance,
    ctx: ProfileContext,
    ext: Extended,
    start: usize,
    compat: Assignment,
    forced: Assignment,
}

fn named_symbols(syms: impl IntoIterator<Item = Symbol>) -> BTreeSet<Symbol> {
    syms.into_iter().filter(|s| matches!(s, Symbol::Named(..))).collect()
}

fn lang_symbols(l: &Lang) -> BTreeSet<Symbol> {
    match l {
        Lang::Trees(ts) => named_symbols(ts.iter().flat_map(|t| t.symbols())),
        Lang::Graphs(gs) => named_symbols(gs.iter().flat_map(|g| g.symbols())),
        Lang::Regular { nta, .. } => named_symbols(nta.alphabet().iter().cloned()),
    }
}

/// Bisimilarity of the roots of two graphs, i.e. equality of their unfoldings.
pub fn same_rational(a: &TreeGraph, b: &TreeGraph) -> bool {
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([(a.root, b.root)]);
    while let Some((u, v)) = queue.pop_front() {
        if !seen.insert((u, v)) {
            continue;
        }
        let (nu, nv) = (&a.nodes[u], &b.nodes[v]);
        if nu.sym != nv.sym {
            return false;
        }
        queue.extend(nu.succ.iter().copied().zip(nv.succ.iter().copied()));
    }
    true
}

fn lang_contains(l: &Lang, g: &TreeGraph) -> bool {
    match l {
        Lang::Trees(ts) => g.to_finite().map_or(false, |t| ts.contains(&t)),
        Lang::Graphs(gs) => gs.iter().any(|h| same_rational(g, h)),
        Lang::Regular { nta, state } => nta.member_rational(g, *state),
    }
}

/// `l1 ⊆ l2`; a regular `l1` needs a regular `l2` unless it is empty.
pub fn lang_included(l1: &Lang, l2: &Lang, budget: &Budget) -> Result<bool> {
    match l1 {
        Lang::Trees(ts) => Ok(ts.iter().all(|t| lang_contains(l2, &TreeGraph::from_tree(t)))),
        Lang::Graphs(gs) => Ok(gs.iter().all(|g| lang_contains(l2, g))),
        Lang::Regular { nta: n1, state: s1 } => {
            if n1.is_empty(*s1) {
                return Ok(true);
            }
            let Lang::Regular { nta: n2, state: s2 } = l2 else {
                return Err(Error::Semantic("a regular lower bound needs a regular upper bound".into()));
            };
            let alphabet: Vec<Symbol> = n1.alphabet().iter().chain(n2.alphabet()).cloned().collect();
            let a1 = ParityAta::from_nta(&n1.extend_alphabet(&alphabet));
            let a2 = ParityAta::from_nta(&n2.extend_alphabet(&alphabet)).dual();
            let (c, s) = ParityAta::conjunction(&[(a1, *s1), (a2, *s2)])?;
            let (n, s) = ata::ata_to_nta(&c, s, budget)?;
            Ok(n.is_empty(s))
        }
    }
}

impl Solver {
    pub fn new(inst: MatchingInstance, budget: &Budget) -> Result<Self> {
        let (l, ls) = &inst.l;
        let (r, rs) = &inst.r;
        if *ls >= l.num_states() || *rs >= r.num_states() {
            return Err(Error::StateMismatch("start state out of range".into()));
        }
        for x in inst.sigma1.vars() {
            if !inst.sigma2.is_var(x) {
                return Err(Error::Semantic(format!("{x} has a lower bound but no upper bound")));
            }
        }
        if let Some(x) = r.alphabet().iter().find(|s| inst.sigma2.is_var(s) || !matches!(s, Symbol::Named(..))) {
            return Err(Error::InvalidAlphabet(format!("{x} cannot occur in the right-hand side")));
        }
        if let Some(h) = l.alphabet().iter().find(|s| !matches!(s, Symbol::Named(..))) {
            return Err(Error::InvalidAlphabet(format!("{h} cannot occur in the left-hand side")));
        }
        for (x, l2) in inst.sigma2.iter() {
            if let Some(l1) = inst.sigma1.get(x) {
                if !lang_included(l1, l2, budget)? {
                    return Err(Error::Semantic(format!("the lower bound of {x} is not below its upper bound")));
                }
            }
        }
        let mut sigma: BTreeSet<Symbol> = named_symbols(r.alphabet().iter().cloned());
        sigma.extend(l.alphabet().iter().filter(|s| !inst.sigma2.is_var(s)).cloned());
        for (_, lang) in inst.sigma1.iter().chain(inst.sigma2.iter()) {
            sigma.extend(lang_symbols(lang));
        }
        if let Some(x) = inst.sigma2.vars().find(|x| sigma.contains(*x)) {
            return Err(Error::InvalidAlphabet(format!("variable {x} occurs inside an image")));
        }
        let base = r.extend_alphabet(&sigma.into_iter().collect::<Vec<_>>());
        // Profiles are taken relative to R extended by the trees that contain
        // the marker of a missing image, so that rejected images still record
        // which holes they use.
        let (base, start) = with_absent_marker(&base, *rs);
        let ctx = ProfileContext::new(&base, inst.sigma2.max_rank())?;
        let mut compat = realized_profiles(&inst.sigma2, &ctx, budget)?;
        let mut forced = realized_profiles(&inst.sigma1, &ctx, budget)?;
        for x in inst.sigma2.vars() {
            let f = forced.entry(x.clone()).or_default();
            compat.get_mut(x).unwrap().extend(f.iter().cloned());
        }
        let all: Vec<Profile> = compat.values().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let ext = Extended::new(&ctx, &all)?;
        Ok(Solver { inst, ctx, ext, start, compat, forced })
    }

    pub fn context(&self) -> &ProfileContext {
        &self.ctx
    }

    pub fn extended(&self) -> &Extended {
        &self.ext
    }

    /// Profiles realized in each upper bound.
    pub fn compatible(&self) -> &Assignment {
        &self.compat
    }

    /// Profiles realized in each lower bound.
    pub fn forced(&self) -> &Assignment {
        &self.forced
    }

    /// Whether the substitution described by `cand` maps `L` into `R`.
    pub fn check(&self, cand: &Assignment, budget: &Budget) -> Result<bool> {
        let (l, ls) = &self.inst.l;
        let mut phi = BTreeMap::new();
        let mut rename = BTreeMap::new();
        for f in l.alphabet() {
            if !self.inst.sigma2.is_var(f) {
                rename.insert(f.clone(), f.clone());
            }
        }
        for x in self.inst.sigma2.vars() {
            let set = cand.get(x).cloned().unwrap_or_default();
            if set.is_empty() {
                let xa = annotated(x, "a");
                phi.insert(xa.clone(), FiniteTree::constant(ABSENT));
                rename.insert(xa, x.clone());
            }
            for pi in &set {
                let k = self
                    .ext
                    .index_of(pi)
                    .ok_or_else(|| Error::ProfileNotRealizable(format!("a profile of {x} is not realized by its bound")))?;
                let xk = annotated(x, &k.to_string());
                phi.insert(xk.clone(), self.ext.witness_tree(k)?);
                rename.insert(xk, x.clone());
            }
        }
        let annotated_l = l.relabel_inverse(&rename)?;
        let alphabet: Vec<Symbol> = rename.keys().cloned().collect();
        let (a, starts) = inverse_image_ata(&phi, &alphabet, self.ext.automaton())?;
        let parts = [(ParityAta::from_nta(&annotated_l), *ls), (a.dual(), starts[self.start])];
        let (c, s) = ParityAta::conjunction(&parts)?;
        let (n, s) = ata::ata_to_nta(&c, s, budget)?;
        Ok(n.is_empty(s))
    }

    /// Maximal passing assignments between `lower` and `upper`, searching
    /// downward from `upper` through failing candidates only. With
    /// `require_nonempty`, assignments with an empty set are skipped.
    fn maximal(
        &self,
        lower: &Assignment,
        upper: &Assignment,
        require_nonempty: bool,
        budget: &Budget,
    ) -> Result<(Vec<Assignment>, usize)> {
        let free: Vec<(Symbol, Profile)> = upper
            .iter()
            .flat_map(|(x, set)| {
                set.iter().filter(move |p| !lower.get(x).map_or(false, |l| l.contains(*p))).map(move |p| (x.clone(), p.clone()))
            })
            .collect();
        let build = |mask: &[bool]| -> Assignment {
            let mut a = lower.clone();
            for x in upper.keys() {
                a.entry(x.clone()).or_default();
            }
            for ((x, p), &on) in free.iter().zip(mask) {
                if on {
                    a.get_mut(x).unwrap().insert(p.clone());
                }
            }
            a
        };
        let admissible = |mask: &[bool]| !require_nonempty || build(mask).values().all(|s| !s.is_empty());
        let (found, checked) =
            maximal_masks(free.len(), "candidate search", budget, admissible, |mask| self.check(&build(mask), budget))?;
        Ok((found.iter().map(|m| build(m)).collect(), checked))
    }

    fn solution(&self, profiles: Assignment) -> Result<Solution> {
        let mut explicit = Some(Substitution::new());
        for (x, lang) in self.inst.sigma2.iter() {
            let Lang::Trees(ts) = lang else {
                explicit = None;
                break;
            };
            let keep = &profiles[x];
            let sub: Vec<FiniteTree> = ts.iter().filter(|t| keep.contains(&self.ctx.profile_finite(t))).cloned().collect();
            explicit.as_mut().unwrap().insert(x.clone(), Lang::Trees(sub))?;
        }
        Ok(Solution { profiles, explicit })
    }

    pub fn solve(&self, budget: &Budget) -> Result<SolutionSet> {
        let (maximal, checked) = self.maximal(&self.forced, &self.compat, false, budget)?;
        let maximal = maximal.into_iter().map(|a| self.solution(a)).collect::<Result<Vec<_>>>()?;
        Ok(SolutionSet { decision: !maximal.is_empty(), maximal, candidates_checked: checked })
    }

    /// Automaton for the image of `x` in a solution: the trees of `σ2(x)`
    /// whose profile is selected. Explicit bounds give the selected trees
    /// directly; regular bounds are intersected with the union of the
    /// profile classes, which is expensive.
    pub fn image_automaton(&self, sol: &Solution, x: &Symbol, budget: &Budget) -> Result<(ParityNta, usize)> {
        let set = sol.profiles.get(x).ok_or_else(|| Error::Semantic(format!("{x} is not a variable")))?;
        let absent = Symbol::new(ABSENT, 0);
        let mut alphabet: Vec<Symbol> = self.ctx.sigma().iter().filter(|s| **s != absent).cloned().collect();
        alphabet.extend((1..=x.rank()).map(Symbol::hole));
        match self.inst.sigma2.get(x) {
            Some(Lang::Regular { nta, state }) => {
                let (c, s) = subst::class_union(&self.ctx, set, x.rank(), budget)?;
                let all: Vec<Symbol> = c.alphabet().iter().chain(nta.alphabet()).cloned().collect();
                let (c, s) = c.extend_alphabet(&all).intersect(s, &nta.extend_alphabet(&all), *state, budget)?;
                Ok((c.restrict_alphabet(&alphabet), s))
            }
            Some(Lang::Trees(ts)) => {
                let keep: Vec<TreeGraph> = ts
                    .iter()
                    .filter(|t| set.contains(&self.ctx.profile_finite(t)))
                    .map(TreeGraph::from_tree)
                    .collect();
                ParityNta::of_graphs(alphabet, &keep)
            }
            Some(Lang::Graphs(gs)) => {
                let mut keep = Vec::new();
                for g in gs {
                    if set.contains(&self.ctx.profile_rational(g, budget)?) {
                        keep.push(g.clone());
                    }
                }
                ParityNta::of_graphs(alphabet, &keep)
            }
            None => Err(Error::Semantic(format!("{x} is not a variable"))),
        }
    }
}

/// Maximal masks over `n` items passing a downward-closed `check`. The empty
/// mask is tried first, items failing on their own are dropped, and the rest
/// is searched top-down from the full mask through failing masks only.
/// Inadmissible masks are neither checked nor expanded.
pub(crate) fn maximal_masks(
    n: usize,
    stage: &str,
    budget: &Budget,
    admissible: impl Fn(&[bool]) -> bool,
    mut check: impl FnMut(&[bool]) -> Result<bool>,
) -> Result<(Vec<Vec<bool>>, usize)> {
    let mut checked = 1;
    budget.candidates(stage, checked)?;
    if !check(&vec![false; n])? {
        return Ok((Vec::new(), checked));
    }
    let mut alive = Vec::new();
    for k in 0..n {
        let mut single = vec![false; n];
        single[k] = true;
        checked += 1;
        budget.candidates(stage, checked)?;
        if check(&single)? {
            alive.push(k);
        }
    }
    let widen = |sub: &[bool]| -> Vec<bool> {
        let mut mask = vec![false; n];
        for (&k, &on) in alive.iter().zip(sub) {
            mask[k] = on;
        }
        mask
    };
    let mut found: Vec<Vec<bool>> = Vec::new();
    let mut seen: HashSet<Vec<bool>> = HashSet::new();
    let mut level = vec![vec![true; alive.len()]];
    while !level.is_empty() {
        let mut next = Vec::new();
        for sub in level {
            if found.iter().any(|f| sub.iter().zip(f).all(|(&m, &g)| !m || g)) {
                continue;
            }
            let mask = widen(&sub);
            if !admissible(&mask) {
                continue;
            }
            // masks with at most one item were settled above
            let passes = if sub.iter().filter(|&&b| b).count() <= 1 {
                true
            } else {
                checked += 1;
                budget.candidates(stage, checked)?;
                check(&mask)?
            };
            if passes {
                found.push(sub);
                continue;
            }
            for k in (0..sub.len()).filter(|&k| sub[k]) {
                let mut m = sub.clone();
                m[k] = false;
                if seen.insert(m.clone()) {
                    next.push(m);
                }
            }
        }
        level = next;
    }
    Ok((found.iter().map(|s| widen(s)).collect(), checked))
}

/// Decides the matching problem and lists the maximal solutions.
pub fn solve(inst: &MatchingInstance, budget: &Budget) -> Result<SolutionSet> {
    Solver::new(inst.clone(), budget)?.solve(budget)
}

/// Whether one candidate assignment passes.
pub fn check_candidate(inst: &MatchingInstance, cand: &Assignment, budget: &Budget) -> Result<bool> {
    Solver::new(inst.clone(), budget)?.check(cand, budget)
}

/// Automaton for `T(Σ ∪ {#1..#rank}) ∖ H`, finite and infinite trees.
pub fn full_image(sigma: &[Symbol], rank: usize) -> (ParityNta, usize) {
    let mut alphabet = sigma.to_vec();
    alphabet.extend((1..=rank).map(Symbol::hole));
    subst::without_bare_holes(&ParityNta::universal(alphabet), 0)
}

/// Solutions whose images are all nonempty, with no bounds beyond the
/// hole restriction. Variables are the symbols in `vars`.
pub fn solve_nonempty(
    l: (ParityNta, usize),
    r: (ParityNta, usize),
    vars: &[Symbol],
    budget: &Budget,
) -> Result<SolutionSet> {
    let mut sigma: BTreeSet<Symbol> = named_symbols(r.0.alphabet().iter().cloned());
    sigma.extend(l.0.alphabet().iter().filter(|s| !vars.contains(s)).cloned());
    let sigma: Vec<Symbol> = sigma.into_iter().collect();
    let mut sigma2 = Substitution::new();
    for x in vars {
        let (nta, state) = full_image(&sigma, x.rank());
        sigma2.insert(x.clone(), Lang::Regular { nta, state })?;
    }
    let inst = MatchingInstance { l, r, sigma1: Substitution::new(), sigma2 };
    let solver = Solver::new(inst, budget)?;
    let (maximal, checked) = solver.maximal(&solver.forced, &solver.compat, true, budget)?;
    let maximal = maximal.into_iter().map(|a| solver.solution(a)).collect::<Result<Vec<_>>>()?;
    Ok(SolutionSet { decision: !maximal.is_empty(), maximal, candidates_checked: checked })
}

/// Looks for a finite tree, up to `max_size`, that separates `σ_io(L)` from
/// `R`. Finding none proves nothing: equality is not decided.
pub fn refute_equality(
    sigma: &Substitution,
    l: &(ParityNta, usize),
    r: &(ParityNta, usize),
    max_size: usize,
) -> Result<Option<FiniteTree>> {
    let l_syms: Vec<Symbol> = l.0.alphabet().to_vec();
    let mut images = BTreeSet::new();
    for s in crate::trees::enumerate_trees(&l_syms, max_size) {
        if l.0.member_finite(&s, l.1) {
            for t in eval_io_finite(sigma, &s)? {
                if !r.0.member_finite(&t, r.1) {
                    return Ok(Some(t));
                }
                images.insert(t);
            }
        }
    }
    for t in crate::trees::enumerate_trees(r.0.alphabet(), max_size) {
        if r.0.member_finite(&t, r.1) && !images.contains(&t) {
            return Ok(Some(t));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nta(s: &str) -> ParityNta {
        ParityNta::parse(s).unwrap()
    }

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

    /// L = {x(z)} over {x/1, z/0}.
    fn l_xz() -> (ParityNta, usize) {
        (nta("alphabet x/1 z/0\nstates p q\ncolors p=1 q=1\np -x-> q\nq -z->"), 0)
    }

    /// R = finite trees over {f/2, g/1, a/0, b/0} without b.
    fn r_no_b() -> (ParityNta, usize) {
        (nta("alphabet f/2 g/1 a/0 b/0\nstates p\ncolors p=1\np -f-> p p\np -g-> p\np -a->"), 0)
    }

    fn brute_force(inst: &MatchingInstance) -> Vec<Substitution> {
        // All subsets of the explicit upper bounds above the lower bounds.
        let vars: Vec<(Symbol, Vec<FiniteTree>, Vec<FiniteTree>)> = inst
            .sigma2
            .iter()
            .map(|(x, l)| {
                let Lang::Trees(up) = l else { unreachable!() };
                let low = match inst.sigma1.get(x) {
                    Some(Lang::Trees(v)) => v.clone(),
                    _ => Vec::new(),
                };
                (x.clone(), up.clone(), low)
            })
            .collect();
        let bits: usize = vars.iter().map(|v| v.1.len()).sum();
        let mut out = Vec::new();
        let finite_l: Vec<FiniteTree> = crate::trees::enumerate_trees(inst.l.0.alphabet(), 5)
            .into_iter()
            .filter(|s| inst.l.0.member_finite(s, inst.l.1))
            .collect();
        for mask in 0..(1u32 << bits) {
            let mut sub = Substitution::new();
            let mut k = 0;
            let mut ok = true;
            for (x, up, low) in &vars {
                let mut pick = Vec::new();
                for tr in up {
                    if mask >> k & 1 == 1 {
                        pick.push(tr.clone());
                    }
                    k += 1;
                }
                ok &= low.iter().all(|l| pick.contains(l));
                sub.insert(x.clone(), Lang::Trees(pick)).unwrap();
            }
            if ok
                && finite_l
                    .iter()
                    .all(|s| eval_io_finite(&sub, s).unwrap().iter().all(|u| inst.r.0.member_finite(u, inst.r.1)))
            {
                out.push(sub);
            }
        }
        out
    }

    fn includes(big: &Substitution, small: &Substitution) -> bool {
        small.iter().all(|(x, l)| {
            let Lang::Trees(v) = l else { unreachable!() };
            v.iter().all(|tr| big.explicit_trees(x).unwrap().contains(tr))
        })
    }

    #[test]
    fn single_variable_instance() {
        let inst = MatchingInstance {
            l: l_xz(),
            r: r_no_b(),
            sigma1: Substitution::new(),
            sigma2: explicit(&[("x", 1, &["g(#1)", "f(#1, b)", "f(#1, #1)"]), ("z", 0, &["a", "b"])]),
        };
        let res = solve(&inst, &Budget::default()).unwrap();
        assert!(res.decision);
        // x empty; z empty; or z = {a} with x avoiding b.
        assert_eq!(res.maximal.len(), 3);
        let subs: Vec<&Substitution> = res.maximal.iter().map(|s| s.explicit.as_ref().unwrap()).collect();
        let brute = brute_force(&inst);
        for sub in &subs {
            assert!(brute.iter().any(|b| includes(b, sub) && includes(sub, b)));
        }
        for b in &brute {
            assert!(subs.iter().any(|sub| includes(sub, b)));
        }
    }

    #[test]
    fn forced_bad_tree_gives_no_solution() {
        let inst = MatchingInstance {
            l: l_xz(),
            r: r_no_b(),
            sigma1: explicit(&[("x", 1, &["g(#1)"]), ("z", 0, &["b"])]),
            sigma2: explicit(&[("x", 1, &["g(#1)"]), ("z", 0, &["a", "b"])]),
        };
        let res = solve(&inst, &Budget::default()).unwrap();
        assert!(!res.decision);
        assert!(res.maximal.is_empty());
    }

    #[test]
    fn everything_accepted_keeps_the_upper_bound() {
        let r = (nta("alphabet f/2 g/1 a/0 b/0\nstates u\ncolors u=2\nu -f-> u u\nu -g-> u\nu -a->\nu -b->"), 0);
        let sigma2 = explicit(&[("x", 1, &["g(#1)", "f(#1, b)"]), ("z", 0, &["a", "b"])]);
        let inst = MatchingInstance { l: l_xz(), r, sigma1: Substitution::new(), sigma2 };
        let res = solve(&inst, &Budget::default()).unwrap();
        assert_eq!(res.maximal.len(), 1);
        let sub = res.maximal[0].explicit.as_ref().unwrap();
        assert_eq!(sub.explicit_trees(&Symbol::new("x", 1)).unwrap().len(), 2);
        assert_eq!(sub.explicit_trees(&Symbol::new("z", 0)).unwrap().len(), 2);
    }

    #[test]
    fn empty_left_side_always_matches() {
        let l = (nta("alphabet x/1 z/0\nstates p\ncolors p=1"), 0);
        let r = (nta("alphabet a/0\nstates p\ncolors p=1"), 0);
        let inst = MatchingInstance { l, r, sigma1: Substitution::new(), sigma2: explicit(&[("z", 0, &["a"])]) };
        assert!(solve(&inst, &Budget::default()).unwrap().decision);
    }

    #[test]
    fn infinite_images_through_loops() {
        // L = {x^ω}; R = trees over {g/1, h/1} with finitely many h.
        let l = (nta("alphabet x/1\nstates p\ncolors p=2\np -x-> p"), 0);
        let r = (nta("alphabet g/1 h/1\nstates p q\ncolors p=2 q=1\np -g-> p\np -h-> q\nq -g-> p\nq -h-> q"), 0);
        let sigma2 = explicit(&[("x", 1, &["g(#1)", "h(#1)"])]);
        let inst = MatchingInstance { l, r, sigma1: Substitution::new(), sigma2 };
        let res = solve(&inst, &Budget::default()).unwrap();
        // Choosing h at infinitely many positions is possible once h is allowed.
        assert_eq!(res.maximal.len(), 1);
        assert_eq!(res.maximal[0].explicit.as_ref().unwrap().explicit_trees(&Symbol::new("x", 1)).unwrap(), &[t("g(#1)")]);
    }

    #[test]
    fn nonempty_solutions() {
        let l = l_xz();
        let all = (nta("alphabet a/0 g/1\nstates u\ncolors u=2\nu -a->\nu -g-> u"), 0);
        let res = solve_nonempty(l.clone(), all, &[Symbol::new("x", 1), Symbol::new("z", 0)], &Budget::default()).unwrap();
        assert!(res.decision);
        assert_eq!(res.maximal.len(), 1);
        let none = (nta("alphabet a/0 g/1\nstates u\ncolors u=2"), 0);
        let res = solve_nonempty(l, none, &[Symbol::new("x", 1), Symbol::new("z", 0)], &Budget::default()).unwrap();
        assert!(!res.decision);
    }

    #[test]
    fn bisimilar_graphs() {
        let a = TreeGraph::parse("n = g(n)").unwrap();
        let b = TreeGraph::parse("n = g(m); m = g(n)").unwrap();
        let c = TreeGraph::parse("n = g(m); m = h(n)").unwrap();
        assert!(same_rational(&a, &b));
        assert!(!same_rational(&a, &c));
    }

    fn subset(a: &[bool], b: &[bool]) -> bool {
        a.iter().zip(b).all(|(&x, &y)| !x || y)
    }

    proptest::proptest! {
        #[test]
        fn maximal_masks_match_brute_force(
            n in 0usize..7,
            gens in proptest::collection::vec(proptest::collection::vec(proptest::bool::ANY, 7), 0..5),
            anchor in proptest::collection::vec(proptest::bool::ANY, 7),
            need_anchor in proptest::bool::ANY,
        ) {
            let gens: Vec<Vec<bool>> = gens.into_iter().map(|g| g[..n].to_vec()).collect();
            let admissible = |m: &[bool]| !need_anchor || m.iter().zip(&anchor).any(|(&x, &y)| x && y);
            let check = |m: &[bool]| Ok(gens.iter().any(|g| subset(m, g)));
            let (mut got, _) = maximal_masks(n, "test", &Budget::default(), admissible, check).unwrap();
            let good: Vec<Vec<bool>> = (0..1usize << n)
                .map(|bits| (0..n).map(|k| bits >> k & 1 == 1).collect::<Vec<bool>>())
                .filter(|m| admissible(m) && gens.iter().any(|g| subset(m, g)))
                .collect();
            let mut want: Vec<Vec<bool>> =
                good.iter().filter(|m| !good.iter().any(|o| o != *m && subset(m, o))).cloned().collect();
            got.sort();
            want.sort();
            proptest::prop_assert_eq!(got, want);
        }
    }
}
