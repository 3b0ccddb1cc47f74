//! Deterministic parity automaton over "thread relations".
//!
//! A letter is a relation `R ⊆ Q×Q` between the states active at a node and
//! the states active at one child. A word of relations describes a bundle of
//! threads; the automaton accepts (even least color infinitely often) iff some
//! thread sees an odd least color infinitely often. Shifting every color by one
//! gives the universal condition used for alternating-to-nondeterministic
//! conversion.
//!
//! The nondeterministic Büchi automaton for the violating thread guesses the
//! odd color `c` and from then on only visits states of color at least `c`.
//! It is determinized with Safra trees whose nodes are kept in creation order;
//! a node's index in that order doubles as its name, which makes the
//! Rabin-to-parity step a plain minimum over removed and marked indices.

use std::collections::{BTreeSet, HashMap};

use fixedbitset::FixedBitSet;

#[derive(Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct SafraTree {
    /// Parent index per node (`u32::MAX` for the root); nodes in creation order.
    parent: Vec<u32>,
    label: Vec<FixedBitSet>,
}

impl SafraTree {
    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn num_nodes(&self) -> usize {
        self.parent.len()
    }
}

pub struct ThreadDpa {
    n: usize,
    color: Vec<u32>,
    /// Büchi states: `0..n` track a thread, the rest are `(state, odd color)`.
    phase2: Vec<(usize, u32)>,
    phase2_id: HashMap<(usize, u32), usize>,
    /// Per state, the odd colors it may carry in phase two.
    guesses: Vec<Vec<u32>>,
    accepting: FixedBitSet,
}

impl ThreadDpa {
    /// `color` colors the thread states; `moves` over-approximates the pairs
    /// that can ever appear in a letter (used to prune useless guesses).
    pub fn new(color: &[u32], moves: &[(usize, usize)]) -> Self {
        let n = color.len();
        let odd: BTreeSet<u32> = color.iter().copied().filter(|c| c % 2 == 1).collect();
        let mut guesses = vec![Vec::new(); n];
        let mut succ = vec![Vec::new(); n];
        for &(q, p) in moves {
            succ[q].push(p);
        }
        for &c in &odd {
            // states of color >= c that can reach a cycle through color c
            let inside = |q: usize| color[q] >= c;
            let on_cycle: Vec<bool> = (0..n)
                .map(|r| {
                    if color[r] != c {
                        return false;
                    }
                    let mut seen = vec![false; n];
                    let mut stack: Vec<usize> = succ[r].iter().copied().filter(|&p| inside(p)).collect();
                    while let Some(x) = stack.pop() {
                        if !seen[x] {
                            seen[x] = true;
                            stack.extend(succ[x].iter().copied().filter(|&p| inside(p) && !seen[p]));
                        }
                    }
                    seen[r]
                })
                .collect();
            for q in (0..n).filter(|&q| inside(q)) {
                let mut seen = vec![false; n];
                let mut stack = vec![q];
                let mut found = false;
                while let Some(x) = stack.pop() {
                    if seen[x] {
                        continue;
                    }
                    seen[x] = true;
                    if on_cycle[x] {
                        found = true;
                        break;
                    }
                    stack.extend(succ[x].iter().copied().filter(|&p| inside(p)));
                }
                if found {
                    guesses[q].push(c);
                }
            }
        }
        let mut phase2 = Vec::new();
        let mut phase2_id = HashMap::new();
        for (q, cs) in guesses.iter().enumerate() {
            for &c in cs {
                phase2_id.insert((q, c), n + phase2.len());
                phase2.push((q, c));
            }
        }
        let total = n + phase2.len();
        let mut accepting = FixedBitSet::with_capacity(total);
        for (k, &(q, c)) in phase2.iter().enumerate() {
            if color[q] == c {
                accepting.insert(n + k);
            }
        }
        ThreadDpa { n, color: color.to_vec(), phase2, phase2_id, guesses, accepting }
    }

    fn size(&self) -> usize {
        self.n + self.phase2.len()
    }

    /// Color emitted by steps with no event; odd and above every other color.
    pub fn neutral(&self) -> u32 {
        4 * self.size() as u32 + 1
    }

    pub fn initial(&self, states: &[usize]) -> SafraTree {
        if states.is_empty() {
            return SafraTree { parent: Vec::new(), label: Vec::new() };
        }
        let mut l = FixedBitSet::with_capacity(self.size());
        for &q in states {
            l.insert(q);
        }
        SafraTree { parent: vec![u32::MAX], label: vec![l] }
    }

    /// Thread states currently alive.
    pub fn active(&self, t: &SafraTree) -> Vec<usize> {
        match t.label.first() {
            Some(l) => l.ones().filter(|&s| s < self.n).collect(),
            None => Vec::new(),
        }
    }

    fn post(&self, set: &FixedBitSet, succ: &[Vec<usize>]) -> FixedBitSet {
        let mut out = FixedBitSet::with_capacity(self.size());
        for s in set.ones() {
            if s < self.n {
                for &p in &succ[s] {
                    out.insert(p);
                    for &c in &self.guesses[p] {
                        out.insert(self.phase2_id[&(p, c)]);
                    }
                }
            } else {
                let (q, c) = self.phase2[s - self.n];
                for &p in &succ[q] {
                    if let Some(&id) = self.phase2_id.get(&(p, c)) {
                        out.insert(id);
                    }
                }
            }
        }
        out
    }

    /// One Safra step on the relation `rel`; returns the successor tree and
    /// the emitted color.
    pub fn step(&self, t: &SafraTree, rel: &[(usize, usize)]) -> (SafraTree, u32) {
        let mut succ = vec![Vec::new(); self.n];
        for &(q, p) in rel {
            succ[q].push(p);
        }
        let mut parent = t.parent.clone();
        let mut label = t.label.clone();
        // branch on accepting states
        for v in 0..t.parent.len() {
            let mut acc = label[v].clone();
            acc.intersect_with(&self.accepting);
            if !acc.is_clear() {
                parent.push(v as u32);
                label.push(acc);
            }
        }
        for l in label.iter_mut() {
            *l = self.post(l, &succ);
        }
        // horizontal merge: a state stays only in the oldest sibling branch
        let m = parent.len();
        let mut removal: Vec<FixedBitSet> = vec![FixedBitSet::with_capacity(self.size()); m];
        let mut seen_sibling: HashMap<u32, FixedBitSet> = HashMap::new();
        for v in 0..m {
            let p = parent[v];
            let mut r = if p == u32::MAX { FixedBitSet::with_capacity(self.size()) } else { removal[p as usize].clone() };
            let sib = seen_sibling.entry(p).or_insert_with(|| FixedBitSet::with_capacity(self.size()));
            r.union_with(sib);
            sib.union_with(&label[v]);
            removal[v] = r;
        }
        for v in 0..m {
            label[v].difference_with(&removal[v]);
        }
        let mut alive: Vec<bool> = label.iter().map(|l| !l.is_clear()).collect();
        // vertical merge
        let mut green = vec![false; m];
        for v in 0..m {
            if !alive[v] {
                continue;
            }
            let kids: Vec<usize> = (v + 1..m).filter(|&w| parent[w] == v as u32 && alive[w]).collect();
            if kids.is_empty() {
                continue;
            }
            let mut u = FixedBitSet::with_capacity(self.size());
            for &w in &kids {
                u.union_with(&label[w]);
            }
            if u == label[v] {
                green[v] = true;
                for w in v + 1..m {
                    let mut a = parent[w];
                    while a != u32::MAX {
                        if a as usize == v {
                            alive[w] = false;
                            break;
                        }
                        a = parent[a as usize];
                    }
                }
            }
        }
        // descendants of dead nodes are dead (labels are nested)
        for w in 0..m {
            let p = parent[w];
            if p != u32::MAX && !alive[p as usize] {
                alive[w] = false;
            }
        }
        let mut color = self.neutral();
        for v in 0..m {
            if !alive[v] {
                color = color.min(2 * (v as u32 + 1) - 1);
            } else if green[v] {
                color = color.min(2 * (v as u32 + 1));
            }
        }
        let mut index = vec![u32::MAX; m];
        let mut out = SafraTree { parent: Vec::new(), label: Vec::new() };
        for v in 0..m {
            if alive[v] {
                index[v] = out.parent.len() as u32;
                let p = parent[v];
                out.parent.push(if p == u32::MAX { u32::MAX } else { index[p as usize] });
                out.label.push(std::mem::take(&mut label[v]));
            }
        }
        (out, color)
    }

    pub fn color_of_state(&self, q: usize) -> u32 {
        self.color[q]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct check on `u v^ω`: some thread from `start` has an odd least
    /// color infinitely often.
    fn violates(color: &[u32], start: usize, u: &[Vec<(usize, usize)>], v: &[Vec<(usize, usize)>]) -> bool {
        let n = color.len();
        let len = u.len() + v.len();
        let letter = |i: usize| if i < u.len() { &u[i] } else { &v[i - u.len()] };
        let next_pos = |i: usize| if i + 1 == len { u.len() } else { i + 1 };
        let id = |i: usize, q: usize| i * n + q;
        let mut succ = vec![Vec::new(); len * n];
        for i in 0..len {
            for &(q, p) in letter(i) {
                succ[id(i, q)].push(id(next_pos(i), p));
            }
        }
        let col = |x: usize| color[x % n];
        let mut reach = vec![false; len * n];
        let mut stack = vec![id(0, start)];
        while let Some(x) = stack.pop() {
            if !reach[x] {
                reach[x] = true;
                stack.extend(succ[x].iter().copied());
            }
        }
        (0..len * n).any(|x| {
            if !reach[x] || col(x) % 2 == 0 {
                return false;
            }
            let c = col(x);
            let mut seen = vec![false; len * n];
            let mut st: Vec<usize> = succ[x].iter().copied().filter(|&y| col(y) >= c).collect();
            while let Some(y) = st.pop() {
                if !seen[y] {
                    seen[y] = true;
                    st.extend(succ[y].iter().copied().filter(|&z| col(z) >= c));
                }
            }
            seen[x]
        })
    }

    fn run_dpa(d: &ThreadDpa, start: usize, u: &[Vec<(usize, usize)>], v: &[Vec<(usize, usize)>]) -> bool {
        let mut t = d.initial(&[start]);
        for l in u {
            t = d.step(&t, l).0;
        }
        // iterate v until the tree at the loop boundary repeats
        let mut seen: HashMap<SafraTree, usize> = HashMap::new();
        let mut colors: Vec<u32> = Vec::new();
        loop {
            if let Some(&k) = seen.get(&t) {
                let m = colors[k * v.len()..].iter().copied().min().unwrap();
                return m % 2 == 0;
            }
            seen.insert(t.clone(), seen.len());
            for l in v {
                let (t2, c) = d.step(&t, l);
                colors.push(c);
                t = t2;
            }
        }
    }

    #[test]
    fn agrees_with_direct_evaluation_on_lassos() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..3000 {
            let n = rng.gen_range(1..=4);
            let color: Vec<u32> = (0..n).map(|_| rng.gen_range(1..=4)).collect();
            let letter = |rng: &mut rand_chacha::ChaCha8Rng| {
                let mut rel = Vec::new();
                for q in 0..n {
                    for p in 0..n {
                        if rng.gen_bool(0.35) {
                            rel.push((q, p));
                        }
                    }
                }
                rel
            };
            let u: Vec<_> = (0..rng.gen_range(0..3)).map(|_| letter(&mut rng)).collect();
            let v: Vec<_> = (0..rng.gen_range(1..4)).map(|_| letter(&mut rng)).collect();
            let moves: Vec<(usize, usize)> = u.iter().chain(&v).flatten().copied().collect();
            let d = ThreadDpa::new(&color, &moves);
            assert_eq!(run_dpa(&d, 0, &u, &v), violates(&color, 0, &u, &v), "colors {color:?} u {u:?} v {v:?}");
        }
    }

    #[test]
    fn single_odd_loop() {
        let d = ThreadDpa::new(&[1], &[(0, 0)]);
        assert!(run_dpa(&d, 0, &[], &[vec![(0, 0)]]));
        let e = ThreadDpa::new(&[2], &[(0, 0)]);
        assert!(!run_dpa(&e, 0, &[], &[vec![(0, 0)]]));
    }
}
