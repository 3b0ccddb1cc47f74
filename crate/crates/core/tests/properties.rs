mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use regmatch::ata::ParityAta;
use regmatch::games::{self, Player};
use regmatch::profiles::{best_chain, best_key, best_leq, ProfileContext, Task};
use regmatch::subst::{
    eval_io_choices, eval_io_finite, eval_oi_finite, gamma_n, hom_image_rational, ChoiceAssignment, Lang, Substitution,
};
use regmatch::trees::{first_disagreement, tree_distance, FiniteTree, GraphNode, Symbol, TreeGraph};
use regmatch::words::transition_morphism;
use regmatch::Budget;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

/// Trees over `f/2 g/1 a/0` with leaves drawn from `leaves`.
fn arb_tree(leaves: Vec<FiniteTree>) -> impl Strategy<Value = FiniteTree> {
    let leaf = proptest::sample::select(leaves);
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|t| FiniteTree::apply("g", vec![t])),
            (inner.clone(), inner).prop_map(|(l, r)| FiniteTree::apply("f", vec![l, r])),
        ]
    })
}

fn holed_tree() -> impl Strategy<Value = FiniteTree> {
    arb_tree(vec![FiniteTree::constant("a"), FiniteTree::hole(1), FiniteTree::hole(2)])
}

fn ground_tree() -> impl Strategy<Value = FiniteTree> {
    arb_tree(vec![FiniteTree::constant("a")])
}

/// Image tree for a variable of rank `rank`: never a bare hole.
fn random_image(r: &mut impl Rng, rank: usize) -> FiniteTree {
    let mut sigma = small_sigma();
    sigma.extend((1..=rank).map(Symbol::hole));
    loop {
        let t = random_tree(r, &sigma, 5);
        if !t.is_hole() {
            return t;
        }
    }
}

fn vars() -> Vec<Symbol> {
    vec![sym("x", 2), sym("y", 1), sym("z", 0)]
}

/// Finite substitution on `x/2 y/1 z/0` with `lo..=hi` images per variable.
fn random_subst(r: &mut impl Rng, lo: usize, hi: usize) -> Substitution {
    let mut s = Substitution::new();
    for x in vars() {
        let k = r.gen_range(lo..=hi);
        let imgs = (0..k).map(|_| random_image(r, x.rank())).collect();
        s.insert(x, Lang::Trees(imgs)).unwrap();
    }
    s
}

fn mixed_sigma() -> Vec<Symbol> {
    let mut s = small_sigma();
    s.extend(vars());
    s
}

/// A copy of `g` with every node duplicated and edges sent to either copy.
fn inflate(r: &mut impl Rng, g: &TreeGraph) -> TreeGraph {
    let n = g.nodes.len();
    let nodes = (0..2 * n)
        .map(|v| {
            let src = &g.nodes[v % n];
            let succ = src.succ.iter().map(|&w| if r.gen_bool(0.5) { w } else { w + n }).collect();
            GraphNode { sym: src.sym.clone(), succ }
        })
        .collect();
    TreeGraph::new(nodes, g.root).unwrap()
}

proptest! {
    #![proptest_config(config(128))]

    #[test]
    fn hole_substitution_composes(
        t in holed_tree(), s1 in holed_tree(), s2 in holed_tree(), u1 in holed_tree(), u2 in holed_tree()
    ) {
        let sigma = BTreeMap::from([(1, s1), (2, s2)]);
        let tau = BTreeMap::from([(1, u1), (2, u2)]);
        let composed: BTreeMap<usize, FiniteTree> =
            sigma.iter().map(|(&i, s)| (i, s.hole_substitute_uniform(&tau).unwrap())).collect();
        let lhs = t.hole_substitute_uniform(&sigma).unwrap().hole_substitute_uniform(&tau).unwrap();
        prop_assert_eq!(lhs, t.hole_substitute_uniform(&composed).unwrap());
    }

    #[test]
    fn distance_is_an_ultrametric(a in ground_tree(), b in ground_tree(), c in ground_tree()) {
        prop_assert_eq!(tree_distance(&a, &a), regmatch::trees::Distance::ZERO);
        prop_assert_eq!(tree_distance(&a, &b), tree_distance(&b, &a));
        prop_assert_eq!(tree_distance(&a, &b) == regmatch::trees::Distance::ZERO, a == b);
        prop_assert!(tree_distance(&a, &c) <= tree_distance(&a, &b).max(tree_distance(&b, &c)));
    }

    #[test]
    fn unfoldings_agree_above_the_cut(seed in any::<u64>(), k in 0usize..6, j in 0usize..4) {
        let mut r = rng(seed);
        let g = random_graph(&mut r, &small_sigma(), 5);
        let d = first_disagreement(&g.unfold(k), &g.unfold(k + j));
        prop_assert!(d.map_or(true, |d| d >= k), "{} differs at depth {:?}", g, d);
    }

    #[test]
    fn graph_equality_matches_unfolding(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = random_graph(&mut r, &small_sigma(), 4);
        let h = random_graph(&mut r, &small_sigma(), 4);
        let depth = g.len() + h.len();
        prop_assert_eq!(g.graph_equal(&h), g.unfold(depth) == h.unfold(depth));
        let big = inflate(&mut r, &g);
        prop_assert!(g.graph_equal(&big));
        prop_assert!(g.graph_equal(&g.minimize()));
    }

    #[test]
    fn parity_games_are_determined(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.gen_range(1..=10);
        let a = random_arena(&mut r, n, 4, 3);
        let sol = games::solve(&a);
        prop_assert_eq!(sol.w0.len() + sol.w1.len(), n);
        prop_assert!(sol.w0.is_disjoint(&sol.w1));
        prop_assert!(games::verify_strategy(&a, &sol).unwrap());
        for v in 0..n {
            let region = if sol.w0.contains(&v) { Player::Prover } else { Player::Spoiler };
            prop_assert_eq!(sol.winner(v), region);
        }
    }
}

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn union_complement_de_morgan(seed in any::<u64>()) {
        let mut r = rng(seed);
        let sigma = small_sigma();
        let budget = Budget::default();
        let (sa, sb) = (r.gen_range(1..=2), r.gen_range(1..=2));
        let a = random_nta(&mut r, &sigma, sa, 2, 0.4);
        let b = random_nta(&mut r, &sigma, sb, 2, 0.4);
        let (u, qu) = a.union(0, &b, 0).unwrap();
        let (nu, qnu) = u.complement(qu, &budget).unwrap();
        let (na, qna) = a.complement(0, &budget).unwrap();
        let (nb, qnb) = b.complement(0, &budget).unwrap();
        let (both, qboth) = na.intersect(qna, &nb, qnb, &budget).unwrap();
        for _ in 0..12 {
            let g = random_graph(&mut r, &sigma, 4);
            let in_a = a.member_rational(&g, 0);
            prop_assert_eq!(na.member_rational(&g, qna), !in_a);
            prop_assert_eq!(u.member_rational(&g, qu), in_a || b.member_rational(&g, 0));
            prop_assert_eq!(nu.member_rational(&g, qnu), both.member_rational(&g, qboth));
        }
    }

    #[test]
    fn rational_membership_extends_finite(seed in any::<u64>()) {
        let mut r = rng(seed);
        let sigma = small_sigma();
        let a = grid_nta(&mut r, &sigma);
        for _ in 0..10 {
            let t = random_tree(&mut r, &sigma, 9);
            let g = TreeGraph::from_tree(&t);
            for q in 0..a.num_states() {
                prop_assert_eq!(a.member_rational(&g, q), a.member_finite(&t, q));
            }
        }
    }

    #[test]
    fn witnesses_are_members(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = grid_nta(&mut r, &small_sigma());
        let nonempty = a.nonempty_states();
        for q in 0..a.num_states() {
            prop_assert_eq!(a.is_empty(q), !nonempty[q]);
            match a.witness(q) {
                Some(w) => prop_assert!(a.member_rational(&w, q)),
                None => prop_assert!(a.is_empty(q)),
            }
        }
    }

    #[test]
    fn alternating_view_agrees(seed in any::<u64>()) {
        let mut r = rng(seed);
        let sigma = small_sigma();
        let a = grid_nta(&mut r, &sigma);
        let alt = ParityAta::from_nta(&a);
        let dual = alt.dual();
        for _ in 0..8 {
            let t = random_tree(&mut r, &sigma, 9);
            let g = random_graph(&mut r, &sigma, 4);
            for q in 0..a.num_states() {
                prop_assert_eq!(alt.member_finite(&t, q), a.member_finite(&t, q));
                prop_assert_eq!(dual.member_finite(&t, q), !a.member_finite(&t, q));
                let m = a.member_rational(&g, q);
                prop_assert_eq!(alt.member_rational_game(&g, q), m);
                prop_assert_eq!(dual.member_rational_game(&g, q), !m);
            }
        }
    }

    #[test]
    fn best_order_is_a_chain(ncol in 1u32..7) {
        let chain = best_chain(ncol);
        prop_assert_eq!(chain.iter().copied().collect::<BTreeSet<_>>(), (0..=ncol).collect::<BTreeSet<_>>());
        prop_assert_eq!(chain[0], 0);
        prop_assert_eq!(*chain.last().unwrap(), 1);
        for (i, &a) in chain.iter().enumerate() {
            for (j, &b) in chain.iter().enumerate() {
                prop_assert_eq!(best_leq(a, b, ncol).unwrap(), i <= j);
            }
        }
        prop_assert!(best_leq(ncol + 1, 0, ncol).is_err());
    }

    #[test]
    fn minimize_is_canonical(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = grid_nta(&mut r, &small_sigma());
        let ctx = ProfileContext::new(&a, 2).unwrap();
        let ncol = ctx.num_colors();
        let width = 2 * ctx.num_states();
        let mut tasks: Vec<Task> = (0..r.gen_range(0..12))
            .map(|_| Task { p: r.gen_range(0..ctx.num_states()), psi: (0..width).map(|_| r.gen_range(0..=ncol)).collect() })
            .collect();
        let pi = ctx.minimize(tasks.clone());
        prop_assert_eq!(&ctx.minimize(pi.tasks().to_vec()), &pi);
        tasks.shuffle(&mut r);
        prop_assert_eq!(&ctx.minimize(tasks.clone()), &pi);
        for t in &tasks {
            prop_assert!(ctx.contains(&pi, t));
        }
        for (i, s) in pi.tasks().iter().enumerate() {
            for (j, t) in pi.tasks().iter().enumerate() {
                prop_assert!(i == j || !ctx.task_leq(s, t));
            }
        }
        prop_assert!(ctx.profile_leq(&pi, &pi));
    }

    #[test]
    fn profiles_are_upward_closed(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut sigma = small_sigma();
        let a = grid_nta(&mut r, &sigma);
        let ctx = ProfileContext::new(&a, 2).unwrap();
        sigma.extend([Symbol::hole(1), Symbol::hole(2)]);
        let t = random_tree(&mut r, &sigma, 7);
        let pi = ctx.profile_finite(&t);
        let ncol = ctx.num_colors();
        for tau in pi.tasks() {
            let mut up = tau.clone();
            for c in up.psi.iter_mut() {
                if r.gen_bool(0.5) {
                    let worse: Vec<u32> = (0..=ncol).filter(|&d| best_key(d, ncol) >= best_key(*c, ncol)).collect();
                    *c = *worse.choose(&mut r).unwrap();
                }
            }
            prop_assert!(ctx.task_leq(tau, &up));
            prop_assert!(ctx.contains(&pi, &up));
        }
    }

    #[test]
    fn io_is_inside_oi(seed in any::<u64>()) {
        let mut r = rng(seed);
        let sigma = random_subst(&mut r, 0, 2);
        let s = random_tree(&mut r, &mixed_sigma(), 6);
        let io = eval_io_finite(&sigma, &s).unwrap();
        let oi = eval_oi_finite(&sigma, &s).unwrap();
        prop_assert!(io.is_subset(&oi));
        prop_assert_eq!(io.is_empty(), oi.is_empty());
        prop_assert_eq!(&eval_io_choices(&sigma, &s).unwrap(), &io);
    }

    #[test]
    fn single_images_make_io_and_oi_coincide(seed in any::<u64>()) {
        let mut r = rng(seed);
        let sigma = random_subst(&mut r, 1, 1);
        prop_assert!(sigma.is_homomorphism());
        let s = random_tree(&mut r, &mixed_sigma(), 6);
        let io = eval_io_finite(&sigma, &s).unwrap();
        prop_assert_eq!(io.len(), 1);
        prop_assert_eq!(io, eval_oi_finite(&sigma, &s).unwrap());
    }

    #[test]
    fn approximants_converge_to_the_image(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut phi = ChoiceAssignment::new();
        for x in vars() {
            let img = random_image(&mut r, x.rank());
            phi.set(x, Some(img)).unwrap();
        }
        let s = random_graph(&mut r, &mixed_sigma(), 4);
        let image = hom_image_rational(&phi, &s).unwrap().expect("every image is defined");
        for n in 0..5 {
            let cur = gamma_n(&phi, &s, n);
            let next = gamma_n(&phi, &s, n + 1);
            prop_assert!(first_disagreement(&cur, &next).map_or(true, |d| d > n));
            prop_assert!(first_disagreement(&cur, &image.unfold(n)).map_or(true, |d| d >= n));
        }
    }

    #[test]
    fn transition_morphism_is_multiplicative(seed in any::<u64>()) {
        let mut r = rng(seed);
        let letters = ["a", "b"];
        let b = random_word_nfa(&mut r, &letters, 3, 0.35);
        let m = transition_morphism(&b, &Budget::default()).unwrap();
        let word = |r: &mut rand_chacha::ChaCha8Rng| -> Vec<&str> {
            (0..r.gen_range(0..5)).map(|_| *letters.choose(r).unwrap()).collect()
        };
        for _ in 0..8 {
            let u = word(&mut r);
            let v = word(&mut r);
            let uv: Vec<&str> = u.iter().chain(&v).copied().collect();
            let prod = m.mu(&u).unwrap().mul(m.mu(&v).unwrap());
            prop_assert_eq!(m.mu(&uv).unwrap(), &prod);
            let class = m.class_of(&uv).unwrap();
            prop_assert_eq!(m.element(class), &prod);
            prop_assert_eq!(m.accepting(class), b.accepts(&uv));
        }
    }
}
