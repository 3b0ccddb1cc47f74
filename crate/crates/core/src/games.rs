//! Parity games on finite arenas with multi-edges.
//!
//! Prover (player 0) wins an infinite play when the least color seen
//! infinitely often is even; a player who is stuck in a sink loses.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub enum Player {
    Prover,
    Spoiler,
}

impl Player {
    pub fn opponent(self) -> Player {
        match self {
            Player::Prover => Player::Spoiler,
            Player::Spoiler => Player::Prover,
        }
    }

    /// The player favoured by a color.
    pub fn of_color(c: u32) -> Player {
        if c % 2 == 0 {
            Player::Prover
        } else {
            Player::Spoiler
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Arena {
    owner: Vec<Player>,
    color: Vec<u32>,
    edges: Vec<(usize, usize)>,
    out: Vec<Vec<usize>>,
}

impl Arena {
    pub fn new() -> Self {
        Arena::default()
    }

    pub fn add_vertex(&mut self, owner: Player, color: u32) -> usize {
        self.owner.push(owner);
        self.color.push(color);
        self.out.push(Vec::new());
        self.owner.len() - 1
    }

    pub fn add_edge(&mut self, u: usize, v: usize) -> usize {
        assert!(u < self.len() && v < self.len(), "edge endpoint out of range");
        self.edges.push((u, v));
        self.out[u].push(self.edges.len() - 1);
        self.edges.len() - 1
    }

    pub fn len(&self) -> usize {
        self.owner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owner.is_empty()
    }

    pub fn owner(&self, v: usize) -> Player {
        self.owner[v]
    }

    pub fn color(&self, v: usize) -> u32 {
        self.color[v]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn out_edges(&self, v: usize) -> &[usize] {
        &self.out[v]
    }

    pub fn target(&self, e: usize) -> usize {
        self.edges[e].1
    }

    /// Parses lines `v owner color` (owner 0/1) and `u -> v`.
    pub fn parse(text: &str) -> Result<(Arena, Vec<String>)> {
        let mut a = Arena::new();
        let mut names: HashMap<String, usize> = HashMap::new();
        let mut order = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.split("//").next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| Error::Syntax { line: ln + 1, col: 1, msg: msg.to_string() };
            if let Some((u, v)) = line.split_once("->") {
                let (u, v) = (u.trim(), v.trim());
                let (&iu, &iv) = names
                    .get(u)
                    .zip(names.get(v))
                    .ok_or_else(|| err("edge mentions an undeclared vertex"))?;
                a.add_edge(iu, iv);
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(err("expected `vertex owner color` or `u -> v`"));
            }
            let owner = match parts[1] {
                "0" => Player::Prover,
                "1" => Player::Spoiler,
                _ => return Err(err("owner must be 0 or 1")),
            };
            let color: u32 = parts[2].parse().map_err(|_| err("color must be a positive integer"))?;
            if color == 0 {
                return Err(err("colors start at 1"));
            }
            if names.contains_key(parts[0]) {
                return Err(err("vertex declared twice"));
            }
            names.insert(parts[0].to_string(), a.add_vertex(owner, color));
            order.push(parts[0].to_string());
        }
        Ok((a, order))
    }
}

impl fmt::Display for Arena {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in 0..self.len() {
            writeln!(f, "v{v} {} {}", self.owner[v].index(), self.color[v])?;
        }
        for &(u, v) in &self.edges {
            writeln!(f, "v{u} -> v{v}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GameSolution {
    pub w0: BTreeSet<usize>,
    pub w1: BTreeSet<usize>,
    /// Edge chosen by Prover at each non-sink vertex of `w0 ∩ V0`.
    pub strategy0: BTreeMap<usize, usize>,
    /// Edge chosen by Spoiler at each non-sink vertex of `w1 ∩ V1`.
    pub strategy1: BTreeMap<usize, usize>,
}

impl GameSolution {
    pub fn winner(&self, v: usize) -> Player {
        if self.w0.contains(&v) {
            Player::Prover
        } else {
            Player::Spoiler
        }
    }

    pub fn region(&self, p: Player) -> &BTreeSet<usize> {
        match p {
            Player::Prover => &self.w0,
            Player::Spoiler => &self.w1,
        }
    }

    pub fn strategy(&self, p: Player) -> &BTreeMap<usize, usize> {
        match p {
            Player::Prover => &self.strategy0,
            Player::Spoiler => &self.strategy1,
        }
    }
}

/// Working copy: sinks get a virtual self-loop whose color makes the owner lose.
struct Game<'a> {
    arena: &'a Arena,
    color: Vec<u32>,
    succ: Vec<Vec<(usize, Option<usize>)>>,
    pred: Vec<Vec<usize>>,
}

impl<'a> Game<'a> {
    fn new(arena: &'a Arena) -> Self {
        let n = arena.len();
        // colors shift by 2 so that 0 and 1 are free for the sink loops
        let mut color: Vec<u32> = arena.color.iter().map(|&c| c + 2).collect();
        let mut succ: Vec<Vec<(usize, Option<usize>)>> = vec![Vec::new(); n];
        let mut pred = vec![Vec::new(); n];
        for v in 0..n {
            if arena.out[v].is_empty() {
                succ[v].push((v, None));
                pred[v].push(v);
                color[v] = match arena.owner[v] {
                    Player::Prover => 1,
                    Player::Spoiler => 0,
                };
            }
            for &e in &arena.out[v] {
                let w = arena.edges[e].1;
                succ[v].push((w, Some(e)));
                pred[w].push(v);
            }
        }
        Game { arena, color, succ, pred }
    }

    /// Attractor of `target` for `p` inside `sub`, with the attracting edges.
    fn attractor(&self, sub: &[bool], target: &[usize], p: Player) -> (Vec<bool>, BTreeMap<usize, Option<usize>>) {
        let n = sub.len();
        let mut inside = vec![false; n];
        let mut strat = BTreeMap::new();
        let mut count: Vec<usize> =
            (0..n).map(|v| if sub[v] { self.succ[v].iter().filter(|(w, _)| sub[*w]).count() } else { 0 }).collect();
        let mut queue = VecDeque::new();
        for &t in target {
            if sub[t] && !inside[t] {
                inside[t] = true;
                queue.push_back(t);
            }
        }
        while let Some(w) = queue.pop_front() {
            for &v in &self.pred[w] {
                if !sub[v] || inside[v] {
                    continue;
                }
                if self.arena.owner[v] == p {
                    inside[v] = true;
                    let e = self.succ[v].iter().find(|(x, _)| *x == w).unwrap().1;
                    strat.insert(v, e);
                    queue.push_back(v);
                } else {
                    count[v] -= 1;
                    if count[v] == 0 {
                        inside[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        (inside, strat)
    }

    /// Returns winners and strategies (edge or virtual loop) on `sub`.
    fn zielonka(&self, sub: &[bool]) -> (Vec<Option<Player>>, BTreeMap<usize, Option<usize>>) {
        let n = sub.len();
        let verts: Vec<usize> = (0..n).filter(|&v| sub[v]).collect();
        let mut win = vec![None; n];
        let mut strat = BTreeMap::new();
        if verts.is_empty() {
            return (win, strat);
        }
        let d = verts.iter().map(|&v| self.color[v]).min().unwrap();
        let p = Player::of_color(d);
        let top: Vec<usize> = verts.iter().copied().filter(|&v| self.color[v] == d).collect();
        let (attr, attr_strat) = self.attractor(sub, &top, p);
        let rest: Vec<bool> = (0..n).map(|v| sub[v] && !attr[v]).collect();
        let (win1, strat1) = self.zielonka(&rest);
        let opp_region: Vec<usize> = verts.iter().copied().filter(|&v| win1[v] == Some(p.opponent())).collect();
        if opp_region.is_empty() {
            for &v in &verts {
                win[v] = Some(p);
            }
            for (&v, &e) in &strat1 {
                if self.arena.owner[v] == p {
                    strat.insert(v, e);
                }
            }
            strat.extend(attr_strat);
            for &v in &top {
                if self.arena.owner[v] == p {
                    let e = self.succ[v].iter().find(|(w, _)| sub[*w]).unwrap().1;
                    strat.insert(v, e);
                }
            }
            return (win, strat);
        }
        let (battr, battr_strat) = self.attractor(sub, &opp_region, p.opponent());
        let rest2: Vec<bool> = (0..n).map(|v| sub[v] && !battr[v]).collect();
        let (win2, strat2) = self.zielonka(&rest2);
        for &v in &verts {
            if battr[v] {
                win[v] = Some(p.opponent());
            } else {
                win[v] = win2[v];
            }
        }
        for (&v, &e) in &strat1 {
            if win1[v] == Some(p.opponent()) && self.arena.owner[v] == p.opponent() {
                strat.insert(v, e);
            }
        }
        strat.extend(battr_strat);
        for (&v, &e) in &strat2 {
            strat.insert(v, e);
        }
        (win, strat)
    }
}

/// Solves the game with Zielonka's recursive attractor algorithm.
pub fn solve(a: &Arena) -> GameSolution {
    let g = Game::new(a);
    let (win, strat) = g.zielonka(&vec![true; a.len()]);
    let mut sol = GameSolution {
        w0: BTreeSet::new(),
        w1: BTreeSet::new(),
        strategy0: BTreeMap::new(),
        strategy1: BTreeMap::new(),
    };
    for v in 0..a.len() {
        match win[v].expect("every vertex is decided") {
            Player::Prover => sol.w0.insert(v),
            Player::Spoiler => sol.w1.insert(v),
        };
    }
    for (v, e) in strat {
        let Some(e) = e else { continue };
        let owner = a.owner[v];
        if win[v] == Some(owner) {
            match owner {
                Player::Prover => sol.strategy0.insert(v, e),
                Player::Spoiler => sol.strategy1.insert(v, e),
            };
        }
    }
    sol
}

/// Vertices of the graph `succ` from which `p` wins every play: no stuck vertex
/// of `p` is reachable and every reachable cycle has a least color of p's parity.
fn safe_region(a: &Arena, succ: &[Vec<usize>], p: Player) -> Vec<bool> {
    let n = a.len();
    let mut bad = vec![false; n];
    for v in 0..n {
        if succ[v].is_empty() && a.owner[v] == p {
            bad[v] = true;
            continue;
        }
        let c = a.color[v];
        if Player::of_color(c) == p {
            continue;
        }
        // v lies on a cycle through vertices of color >= c
        let mut seen = vec![false; n];
        let mut stack: Vec<usize> = succ[v].iter().copied().filter(|&w| a.color[w] >= c).collect();
        while let Some(w) = stack.pop() {
            if seen[w] {
                continue;
            }
            seen[w] = true;
            stack.extend(succ[w].iter().copied().filter(|&x| a.color[x] >= c && !seen[x]));
        }
        bad[v] = seen[v];
    }
    // vertices that can reach a bad vertex
    let mut reach_bad = bad.clone();
    let mut changed = true;
    while changed {
        changed = false;
        for v in 0..n {
            if !reach_bad[v] && succ[v].iter().any(|&w| reach_bad[w]) {
                reach_bad[v] = true;
                changed = true;
            }
        }
    }
    reach_bad.iter().map(|&b| !b).collect()
}

pub const BRUTE_FORCE_LIMIT: usize = 12;

/// Enumerates all positional strategies of both players.
pub fn brute_force_solve(a: &Arena) -> Result<GameSolution> {
    if a.len() > BRUTE_FORCE_LIMIT {
        return Err(Error::ArenaTooLarge(a.len(), BRUTE_FORCE_LIMIT));
    }
    let n = a.len();
    let mut regions = [vec![false; n], vec![false; n]];
    let mut best: [BTreeMap<usize, usize>; 2] = [BTreeMap::new(), BTreeMap::new()];
    for p in [Player::Prover, Player::Spoiler] {
        let own: Vec<usize> = (0..n).filter(|&v| a.owner[v] == p && !a.out[v].is_empty()).collect();
        let mut choice = vec![0usize; own.len()];
        let mut best_size = None;
        loop {
            let mut succ: Vec<Vec<usize>> = (0..n).map(|v| a.out[v].iter().map(|&e| a.edges[e].1).collect()).collect();
            for (k, &v) in own.iter().enumerate() {
                succ[v] = vec![a.edges[a.out[v][choice[k]]].1];
            }
            let safe = safe_region(a, &succ, p);
            let size = safe.iter().filter(|&&b| b).count();
            for v in 0..n {
                regions[p.index()][v] |= safe[v];
            }
            if best_size.is_none_or(|b| size > b) {
                best_size = Some(size);
                best[p.index()] = own
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| safe[v])
                    .map(|(k, &v)| (v, a.out[v][choice[k]]))
                    .collect();
            }
            // odometer step over the product of out-degrees
            let mut k = 0;
            while k < own.len() {
                choice[k] += 1;
                if choice[k] < a.out[own[k]].len() {
                    break;
                }
                choice[k] = 0;
                k += 1;
            }
            if k == own.len() {
                break;
            }
        }
    }
    for v in 0..n {
        if regions[0][v] == regions[1][v] {
            return Err(Error::MalformedSolution(format!("vertex {v} is not determined by positional strategies")));
        }
    }
    let [s0, s1] = best;
    Ok(GameSolution {
        w0: (0..n).filter(|&v| regions[0][v]).collect(),
        w1: (0..n).filter(|&v| regions[1][v]).collect(),
        strategy0: s0,
        strategy1: s1,
    })
}

/// Checks both strategies by cycle analysis on the restricted graphs.
pub fn verify_strategy(a: &Arena, sol: &GameSolution) -> Result<bool> {
    let n = a.len();
    for (&v, &e) in sol.strategy0.iter().chain(&sol.strategy1) {
        if v >= n || e >= a.edges.len() {
            return Err(Error::MalformedSolution(format!("strategy entry {v} -> edge {e} out of range")));
        }
    }
    if sol.w0.iter().chain(&sol.w1).any(|&v| v >= n) {
        return Err(Error::MalformedSolution("region mentions an unknown vertex".into()));
    }
    if sol.w0.len() + sol.w1.len() != n || !sol.w0.is_disjoint(&sol.w1) {
        return Ok(false);
    }
    for p in [Player::Prover, Player::Spoiler] {
        let region = sol.region(p);
        let strat = sol.strategy(p);
        for (&v, &e) in strat {
            if !region.contains(&v) || a.owner[v] != p || a.edges[e].0 != v {
                return Ok(false);
            }
        }
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &v in region {
            if a.owner[v] == p && !a.out[v].is_empty() {
                let Some(&e) = strat.get(&v) else { return Ok(false) };
                succ[v] = vec![a.edges[e].1];
            } else {
                succ[v] = a.out[v].iter().map(|&e| a.edges[e].1).collect();
            }
            if succ[v].iter().any(|w| !region.contains(w)) {
                return Ok(false);
            }
        }
        let safe = safe_region(a, &succ, p);
        if region.iter().any(|&v| !safe[v]) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arena(text: &str) -> Arena {
        Arena::parse(text).unwrap().0
    }

    #[test]
    fn single_vertex_examples() {
        let a = arena("v 1 2\nv -> v");
        let s = solve(&a);
        assert_eq!(s.w0, BTreeSet::from([0]));
        let sink = arena("v 0 2");
        assert_eq!(solve(&sink).w1, BTreeSet::from([0]));
        assert_eq!(brute_force_solve(&sink).unwrap().w1, BTreeSet::from([0]));
        let spoiler_sink = arena("v 1 1");
        assert_eq!(solve(&spoiler_sink).w0, BTreeSet::from([0]));
    }

    #[test]
    fn three_vertex_hand_example() {
        // Prover at a chooses between an even loop via b and an odd loop via c.
        let a = arena("a 0 3\nb 1 2\nc 1 1\na -> b\na -> c\nb -> a\nc -> a\nc -> c");
        let s = solve(&a);
        // a can go to b forever (colors 3,2,3,2: min 2), c is lost (Spoiler loops on 1)
        assert_eq!(s.w0, BTreeSet::from([0, 1]));
        assert_eq!(s.w1, BTreeSet::from([2]));
        assert_eq!(s.strategy0.get(&0), Some(&0));
        assert_eq!(brute_force_solve(&a).unwrap().w0, s.w0);
        assert!(verify_strategy(&a, &s).unwrap());
    }

    #[test]
    fn swapped_regions_fail_verification() {
        let a = arena("a 0 3\nb 1 2\nc 1 1\na -> b\na -> c\nb -> a\nc -> a\nc -> c");
        let mut s = solve(&a);
        std::mem::swap(&mut s.w0, &mut s.w1);
        assert!(!verify_strategy(&a, &s).unwrap());
    }

    #[test]
    fn brute_force_size_limit() {
        let mut a = Arena::new();
        for _ in 0..13 {
            a.add_vertex(Player::Prover, 1);
        }
        assert_eq!(brute_force_solve(&a), Err(Error::ArenaTooLarge(13, 12)));
    }

    #[test]
    fn multi_edges_are_kept() {
        let a = arena("u 1 2\nw 0 2\nu -> w\nu -> w\nw -> u");
        assert_eq!(a.out_edges(0).len(), 2);
        assert_eq!(solve(&a).w0.len(), 2);
    }
}
