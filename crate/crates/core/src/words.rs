//! Matching for regular languages of finite words, decided through the
//! transition monoid of the automaton for `R`, and the encoding of words as
//! unary trees `a1(a2(...an($)))`.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::nta::ParityNta;
use crate::profiles::Profile;
use crate::solver::{maximal_masks, MatchingInstance, Solution, Solver};
use crate::subst::{Lang, Substitution};
use crate::trees::{FiniteTree, Symbol};

pub type Word = Vec<String>;

/// Splits `"a b c"` into letters; the empty string is the empty word.
pub fn word(text: &str) -> Word {
    text.split_whitespace().map(str::to_string).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordNfa {
    alphabet: Vec<String>,
    names: Vec<String>,
    trans: Vec<(usize, usize, usize)>,
    initial: BTreeSet<usize>,
    finals: BTreeSet<usize>,
    succ: Vec<Vec<Vec<usize>>>,
}

impl WordNfa {
    /// Transitions are `(from, letter, to)`. The alphabet is sorted and
    /// deduplicated.
    pub fn new(
        alphabet: Vec<String>,
        names: Vec<String>,
        trans: Vec<(usize, String, usize)>,
        initial: BTreeSet<usize>,
        finals: BTreeSet<usize>,
    ) -> Result<Self> {
        let alphabet: Vec<String> = alphabet.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let mut ts = Vec::with_capacity(trans.len());
        for (p, a, q) in trans {
            let k = alphabet
                .binary_search(&a)
                .map_err(|_| Error::AlphabetMismatch(format!("letter {a} not in alphabet")))?;
            ts.push((p, k, q));
        }
        WordNfa::indexed(alphabet, names, ts, initial, finals)
    }

    fn indexed(
        alphabet: Vec<String>,
        names: Vec<String>,
        trans: Vec<(usize, usize, usize)>,
        initial: BTreeSet<usize>,
        finals: BTreeSet<usize>,
    ) -> Result<Self> {
        let n = names.len();
        if trans.iter().any(|&(p, _, q)| p >= n || q >= n) || initial.iter().chain(&finals).any(|&q| q >= n) {
            return Err(Error::Semantic("word automaton mentions an unknown state".into()));
        }
        for a in &alphabet {
            if a.is_empty() || !a.bytes().all(crate::trees::is_ident_byte) {
                return Err(Error::InvalidAlphabet(format!("bad letter {a:?}")));
            }
        }
        let trans: Vec<(usize, usize, usize)> = trans.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let mut succ = vec![vec![Vec::new(); alphabet.len()]; n];
        for &(p, a, q) in &trans {
            succ[p][a].push(q);
        }
        Ok(WordNfa { alphabet, names, trans, initial, finals, succ })
    }

    fn numbered(
        alphabet: Vec<String>,
        n: usize,
        trans: Vec<(usize, usize, usize)>,
        initial: BTreeSet<usize>,
        finals: BTreeSet<usize>,
    ) -> Self {
        WordNfa::indexed(alphabet, (0..n).map(|k| format!("s{k}")).collect(), trans, initial, finals).unwrap()
    }

    pub fn empty(alphabet: Vec<String>) -> Self {
        let alphabet = alphabet.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        WordNfa::numbered(alphabet, 1, Vec::new(), [0].into(), BTreeSet::new())
    }

    /// All words over the alphabet, including the empty word.
    pub fn universal(alphabet: Vec<String>) -> Self {
        let alphabet: Vec<String> = alphabet.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let trans = (0..alphabet.len()).map(|a| (0, a, 0)).collect();
        WordNfa::numbered(alphabet, 1, trans, [0].into(), [0].into())
    }

    /// Finite language given by its words.
    pub fn from_words(alphabet: Vec<String>, words: &[Word]) -> Result<Self> {
        let mut b = EpsBuilder::new(alphabet.into_iter().chain(words.iter().flatten().cloned()).collect());
        let (s, f) = (b.state(), b.state());
        for w in words {
            let mut cur = s;
            for a in w {
                let nxt = b.state();
                let k = b.letter(a)?;
                b.trans.push((cur, Some(k), nxt));
                cur = nxt;
            }
            b.trans.push((cur, None, f));
        }
        Ok(b.finish(s, f))
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn letter_index(&self, a: &str) -> Option<usize> {
        self.alphabet.binary_search_by(|b| b.as_str().cmp(a)).ok()
    }

    pub fn num_states(&self) -> usize {
        self.names.len()
    }

    pub fn state_name(&self, q: usize) -> &str {
        &self.names[q]
    }

    pub fn transitions(&self) -> impl Iterator<Item = (usize, &str, usize)> + '_ {
        self.trans.iter().map(|&(p, a, q)| (p, self.alphabet[a].as_str(), q))
    }

    pub fn initial(&self) -> &BTreeSet<usize> {
        &self.initial
    }

    pub fn finals(&self) -> &BTreeSet<usize> {
        &self.finals
    }

    pub fn successors(&self, p: usize, a: usize) -> &[usize] {
        &self.succ[p][a]
    }

    pub fn step(&self, set: &BTreeSet<usize>, a: usize) -> BTreeSet<usize> {
        set.iter().flat_map(|&p| self.succ[p][a].iter().copied()).collect()
    }

    pub fn accepts<S: AsRef<str>>(&self, w: &[S]) -> bool {
        let mut cur = self.initial.clone();
        for a in w {
            let Some(k) = self.letter_index(a.as_ref()) else {
                return false;
            };
            cur = self.step(&cur, k);
        }
        cur.iter().any(|q| self.finals.contains(q))
    }

    pub fn accepts_empty(&self) -> bool {
        self.initial.iter().any(|q| self.finals.contains(q))
    }

    /// A shortest accepted word.
    pub fn witness(&self) -> Option<Word> {
        let mut prev: HashMap<usize, Option<(usize, usize)>> = self.initial.iter().map(|&q| (q, None)).collect();
        let mut queue: VecDeque<usize> = self.initial.iter().copied().collect();
        while let Some(p) = queue.pop_front() {
            if self.finals.contains(&p) {
                let mut w = Vec::new();
                let mut cur = p;
                while let Some(Some((q, a))) = prev.get(&cur) {
                    w.push(self.alphabet[*a].clone());
                    cur = *q;
                }
                w.reverse();
                return Some(w);
            }
            for a in 0..self.alphabet.len() {
                for &q in &self.succ[p][a] {
                    if let std::collections::hash_map::Entry::Vacant(e) = prev.entry(q) {
                        e.insert(Some((p, a)));
                        queue.push_back(q);
                    }
                }
            }
        }
        None
    }

    pub fn is_empty(&self) -> bool {
        self.witness().is_none()
    }

    /// Same automaton over a larger alphabet.
    pub fn extend_alphabet(&self, extra: &[String]) -> WordNfa {
        let alphabet: Vec<String> =
            self.alphabet.iter().chain(extra).cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let remap: Vec<usize> = self.alphabet.iter().map(|a| alphabet.binary_search(a).unwrap()).collect();
        let trans = self.trans.iter().map(|&(p, a, q)| (p, remap[a], q)).collect();
        WordNfa::indexed(alphabet, self.names.clone(), trans, self.initial.clone(), self.finals.clone()).unwrap()
    }

    /// Removes states that are unreachable or cannot reach a final state.
    pub fn trim(&self) -> WordNfa {
        let n = self.num_states();
        let mut fwd = vec![false; n];
        let mut stack: Vec<usize> = self.initial.iter().copied().collect();
        for &q in &stack {
            fwd[q] = true;
        }
        while let Some(p) = stack.pop() {
            for &(_, _, q) in self.trans.iter().filter(|t| t.0 == p) {
                if !fwd[q] {
                    fwd[q] = true;
                    stack.push(q);
                }
            }
        }
        let mut bwd = vec![false; n];
        let mut stack: Vec<usize> = self.finals.iter().copied().collect();
        for &q in &stack {
            bwd[q] = true;
        }
        while let Some(q) = stack.pop() {
            for &(p, _, _) in self.trans.iter().filter(|t| t.2 == q) {
                if !bwd[p] {
                    bwd[p] = true;
                    stack.push(p);
                }
            }
        }
        let keep: Vec<usize> = (0..n).filter(|&q| fwd[q] && bwd[q]).collect();
        if keep.is_empty() {
            return WordNfa::empty(self.alphabet.clone());
        }
        let idx: HashMap<usize, usize> = keep.iter().enumerate().map(|(k, &q)| (q, k)).collect();
        let trans = self
            .trans
            .iter()
            .filter_map(|&(p, a, q)| Some((*idx.get(&p)?, a, *idx.get(&q)?)))
            .collect();
        let pick = |s: &BTreeSet<usize>| s.iter().filter_map(|q| idx.get(q).copied()).collect();
        WordNfa::indexed(
            self.alphabet.clone(),
            keep.iter().map(|&q| self.names[q].clone()).collect(),
            trans,
            pick(&self.initial),
            pick(&self.finals),
        )
        .unwrap()
    }

    fn disjoint(&self, other: &WordNfa) -> (Vec<String>, WordNfa, WordNfa) {
        let alphabet: Vec<String> =
            self.alphabet.iter().chain(&other.alphabet).cloned().collect::<BTreeSet<_>>().into_iter().collect();
        (alphabet.clone(), self.extend_alphabet(&alphabet), other.extend_alphabet(&alphabet))
    }

    pub fn union(&self, other: &WordNfa) -> WordNfa {
        let (alphabet, a, b) = self.disjoint(other);
        let off = a.num_states();
        let mut trans = a.trans.clone();
        trans.extend(b.trans.iter().map(|&(p, c, q)| (p + off, c, q + off)));
        let initial = a.initial.iter().copied().chain(b.initial.iter().map(|q| q + off)).collect();
        let finals = a.finals.iter().copied().chain(b.finals.iter().map(|q| q + off)).collect();
        WordNfa::numbered(alphabet, off + b.num_states(), trans, initial, finals)
    }

    /// Product automaton over the union of the alphabets.
    pub fn intersect(&self, other: &WordNfa) -> WordNfa {
        let (alphabet, a, b) = self.disjoint(other);
        let mut idx: HashMap<(usize, usize), usize> = HashMap::new();
        let mut queue = VecDeque::new();
        for &p in &a.initial {
            for &q in &b.initial {
                idx.insert((p, q), idx.len());
                queue.push_back((p, q));
            }
        }
        let initial = (0..idx.len()).collect();
        let mut trans = Vec::new();
        let mut finals = BTreeSet::new();
        while let Some((p, q)) = queue.pop_front() {
            let k = idx[&(p, q)];
            if a.finals.contains(&p) && b.finals.contains(&q) {
                finals.insert(k);
            }
            for c in 0..alphabet.len() {
                for &p2 in &a.succ[p][c] {
                    for &q2 in &b.succ[q][c] {
                        let n = idx.len();
                        let j = *idx.entry((p2, q2)).or_insert_with(|| {
                            queue.push_back((p2, q2));
                            n
                        });
                        trans.push((k, c, j));
                    }
                }
            }
        }
        WordNfa::numbered(alphabet, idx.len(), trans, initial, finals).trim()
    }

    /// A shortest word of `self` outside `other`, by an on-the-fly subset
    /// construction of `other`.
    pub fn counterexample(&self, other: &WordNfa, budget: &Budget) -> Result<Option<Word>> {
        let (alphabet, a, b) = self.disjoint(other);
        type Key = (usize, BTreeSet<usize>);
        let mut prev: HashMap<Key, Option<(Key, usize)>> = HashMap::new();
        let mut queue = VecDeque::new();
        for &p in &a.initial {
            let key = (p, b.initial.clone());
            prev.insert(key.clone(), None);
            queue.push_back(key);
        }
        while let Some(key) = queue.pop_front() {
            let (p, set) = &key;
            if a.finals.contains(p) && !set.iter().any(|q| b.finals.contains(q)) {
                let mut w = Vec::new();
                let mut cur = key.clone();
                while let Some(Some((k, c))) = prev.get(&cur) {
                    w.push(alphabet[*c].clone());
                    cur = k.clone();
                }
                w.reverse();
                return Ok(Some(w));
            }
            for c in 0..alphabet.len() {
                if a.succ[*p][c].is_empty() {
                    continue;
                }
                let next_set = b.step(set, c);
                for &p2 in &a.succ[*p][c] {
                    let k2 = (p2, next_set.clone());
                    if !prev.contains_key(&k2) {
                        prev.insert(k2.clone(), Some((key.clone(), c)));
                        queue.push_back(k2);
                    }
                }
            }
            budget.states("word inclusion", prev.len())?;
        }
        Ok(None)
    }

    pub fn is_subset(&self, other: &WordNfa, budget: &Budget) -> Result<bool> {
        Ok(self.counterexample(other, budget)?.is_none())
    }

    pub fn equivalent(&self, other: &WordNfa, budget: &Budget) -> Result<bool> {
        Ok(self.is_subset(other, budget)? && other.is_subset(self, budget)?)
    }

    /// Complement relative to all words over the alphabet.
    pub fn complement(&self, budget: &Budget) -> Result<WordNfa> {
        let mut idx: HashMap<BTreeSet<usize>, usize> = HashMap::new();
        let mut sets = vec![self.initial.clone()];
        idx.insert(self.initial.clone(), 0);
        let mut trans = Vec::new();
        let mut k = 0;
        while k < sets.len() {
            for c in 0..self.alphabet.len() {
                let next = self.step(&sets[k], c);
                let n = sets.len();
                let j = *idx.entry(next.clone()).or_insert_with(|| {
                    sets.push(next);
                    n
                });
                trans.push((k, c, j));
            }
            budget.states("word complement", sets.len())?;
            k += 1;
        }
        let finals = (0..sets.len()).filter(|&k| !sets[k].iter().any(|q| self.finals.contains(q))).collect();
        Ok(WordNfa::numbered(self.alphabet.clone(), sets.len(), trans, [0].into(), finals))
    }

    /// The nonempty words of the language.
    pub fn without_empty_word(&self) -> WordNfa {
        if !self.accepts_empty() {
            return self.clone();
        }
        let s = self.num_states();
        let mut trans = self.trans.clone();
        for &(p, a, q) in &self.trans {
            if self.initial.contains(&p) {
                trans.push((s, a, q));
            }
        }
        WordNfa::numbered(self.alphabet.clone(), s + 1, trans, [s].into(), self.finals.clone()).trim()
    }

    /// Accepted words of length at most `max_len`, in length-lexicographic
    /// order.
    pub fn words_up_to(&self, max_len: usize) -> Vec<Word> {
        let mut out = Vec::new();
        let mut layer: Vec<(Word, BTreeSet<usize>)> = vec![(Vec::new(), self.initial.clone())];
        for len in 0..=max_len {
            let mut next = Vec::new();
            for (w, set) in &layer {
                if set.iter().any(|q| self.finals.contains(q)) {
                    out.push(w.clone());
                }
                if len < max_len {
                    for (c, a) in self.alphabet.iter().enumerate() {
                        let s2 = self.step(set, c);
                        if !s2.is_empty() {
                            let mut w2 = w.clone();
                            w2.push(a.clone());
                            next.push((w2, s2));
                        }
                    }
                }
            }
            layer = next;
        }
        out
    }

    /// Replaces every letter with an image by that image's language; other
    /// letters stay themselves.
    pub fn substitute(&self, images: &BTreeMap<String, WordNfa>) -> WordNfa {
        let mut alphabet: BTreeSet<String> =
            self.alphabet.iter().filter(|a| !images.contains_key(*a)).cloned().collect();
        alphabet.extend(images.values().flat_map(|m| m.alphabet.iter().cloned()));
        let mut b = EpsBuilder::new(alphabet.into_iter().collect());
        let base: Vec<usize> = (0..self.num_states()).map(|_| b.state()).collect();
        for &(p, a, q) in &self.trans {
            let letter = &self.alphabet[a];
            match images.get(letter) {
                None => {
                    let k = b.letter(letter).unwrap();
                    b.trans.push((base[p], Some(k), base[q]));
                }
                Some(m) => {
                    let copy: Vec<usize> = (0..m.num_states()).map(|_| b.state()).collect();
                    for &(s, c, t) in &m.trans {
                        let k = b.letter(&m.alphabet[c]).unwrap();
                        b.trans.push((copy[s], Some(k), copy[t]));
                    }
                    for &i in &m.initial {
                        b.trans.push((base[p], None, copy[i]));
                    }
                    for &f in &m.finals {
                        b.trans.push((copy[f], None, base[q]));
                    }
                }
            }
        }
        let (s, f) = (b.state(), b.state());
        for &i in &self.initial {
            b.trans.push((s, None, base[i]));
        }
        for &q in &self.finals {
            b.trans.push((base[q], None, f));
        }
        b.finish(s, f)
    }

    /// Parses a regular expression. Letters are single characters from
    /// `[A-Za-z0-9_]`; `|`, `*`, `+`, `?` and parentheses have their usual
    /// meaning, `()` is the empty word and `!` the empty language.
    pub fn from_regex(text: &str) -> Result<WordNfa> {
        let letters: BTreeSet<String> =
            text.chars().filter(|c| c.is_ascii_alphanumeric() || *c == '_').map(String::from).collect();
        let mut p = RegexParser { chars: text.chars().filter(|c| !c.is_whitespace()).collect(), pos: 0 };
        let mut b = EpsBuilder::new(letters.into_iter().collect());
        let (s, f) = p.alt(&mut b)?;
        if p.pos < p.chars.len() {
            return Err(p.err(format!("unexpected {:?}", p.chars[p.pos])));
        }
        Ok(b.finish(s, f))
    }

    /// Parses the text format:
    ///
    /// ```text
    /// alphabet a b
    /// states p q
    /// initial p
    /// final q
    /// p -a-> q
    /// ```
    pub fn parse(text: &str) -> Result<WordNfa> {
        let mut alphabet = Vec::new();
        let mut names: Vec<String> = Vec::new();
        let mut initial = Vec::new();
        let mut finals = Vec::new();
        let mut trans = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split("//").next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Syntax { line: ln + 1, col: 1, msg };
            let mut words = line.split_whitespace();
            match words.next().unwrap() {
                "alphabet" => alphabet.extend(words.map(str::to_string)),
                "states" => names.extend(words.map(str::to_string)),
                "initial" => initial.extend(words.map(|w| (ln + 1, w.to_string()))),
                "final" => finals.extend(words.map(|w| (ln + 1, w.to_string()))),
                _ => {
                    let (p, rest) = line.split_once(" -").ok_or_else(|| err("expected `p -a-> q`".into()))?;
                    let (a, q) = rest.split_once("->").ok_or_else(|| err("expected `->`".into()))?;
                    trans.push((ln + 1, p.trim().to_string(), a.trim().to_string(), q.trim().to_string()));
                }
            }
        }
        let state = |n: &str, line: usize| {
            names.iter().position(|m| m == n).ok_or_else(|| Error::Syntax { line, col: 1, msg: format!("undeclared state {n}") })
        };
        let mut ts = Vec::new();
        for (line, p, a, q) in &trans {
            if !alphabet.contains(a) {
                return Err(Error::Syntax { line: *line, col: 1, msg: format!("letter {a} not in alphabet") });
            }
            ts.push((state(p, *line)?, a.clone(), state(q, *line)?));
        }
        let initial = initial.iter().map(|(l, n)| state(n, *l)).collect::<Result<_>>()?;
        let finals = finals.iter().map(|(l, n)| state(n, *l)).collect::<Result<_>>()?;
        WordNfa::new(alphabet, names, ts, initial, finals)
    }
}

impl fmt::Display for WordNfa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "alphabet {}", self.alphabet.join(" "))?;
        writeln!(f, "states {}", self.names.join(" "))?;
        let list = |s: &BTreeSet<usize>| s.iter().map(|&q| self.names[q].as_str()).collect::<Vec<_>>().join(" ");
        writeln!(f, "initial {}", list(&self.initial))?;
        writeln!(f, "final {}", list(&self.finals))?;
        for &(p, a, q) in &self.trans {
            writeln!(f, "{} -{}-> {}", self.names[p], self.alphabet[a], self.names[q])?;
        }
        Ok(())
    }
}

/// Automaton with empty-word moves, used while building.
struct EpsBuilder {
    alphabet: Vec<String>,
    n: usize,
    trans: Vec<(usize, Option<usize>, usize)>,
}

impl EpsBuilder {
    fn new(alphabet: Vec<String>) -> Self {
        let alphabet = alphabet.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        EpsBuilder { alphabet, n: 0, trans: Vec::new() }
    }

    fn state(&mut self) -> usize {
        self.n += 1;
        self.n - 1
    }

    fn letter(&self, a: &str) -> Result<usize> {
        self.alphabet
            .binary_search_by(|b| b.as_str().cmp(a))
            .map_err(|_| Error::AlphabetMismatch(format!("letter {a} not in alphabet")))
    }

    fn finish(self, start: usize, end: usize) -> WordNfa {
        let mut eps = vec![Vec::new(); self.n];
        for &(p, a, q) in &self.trans {
            if a.is_none() {
                eps[p].push(q);
            }
        }
        let closure: Vec<BTreeSet<usize>> = (0..self.n)
            .map(|p| {
                let mut seen = BTreeSet::from([p]);
                let mut stack = vec![p];
                while let Some(q) = stack.pop() {
                    for &r in &eps[q] {
                        if seen.insert(r) {
                            stack.push(r);
                        }
                    }
                }
                seen
            })
            .collect();
        let mut trans = Vec::new();
        for p in 0..self.n {
            for &q in &closure[p] {
                for &(q1, a, q2) in &self.trans {
                    if q1 == q {
                        if let Some(a) = a {
                            trans.push((p, a, q2));
                        }
                    }
                }
            }
        }
        let finals = (0..self.n).filter(|&p| closure[p].contains(&end)).collect();
        WordNfa::numbered(self.alphabet, self.n, trans, [start].into(), finals).trim()
    }
}

struct RegexParser {
    chars: Vec<char>,
    pos: usize,
}

impl RegexParser {
    fn err(&self, msg: String) -> Error {
        Error::Syntax { line: 1, col: self.pos + 1, msg }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn alt(&mut self, b: &mut EpsBuilder) -> Result<(usize, usize)> {
        let (s, f) = (b.state(), b.state());
        loop {
            let (s1, f1) = self.concat(b)?;
            b.trans.push((s, None, s1));
            b.trans.push((f1, None, f));
            if self.peek() == Some('|') {
                self.pos += 1;
            } else {
                return Ok((s, f));
            }
        }
    }

    fn concat(&mut self, b: &mut EpsBuilder) -> Result<(usize, usize)> {
        let s = b.state();
        let mut cur = s;
        while let Some(c) = self.peek() {
            if c == '|' || c == ')' {
                break;
            }
            let (s1, f1) = self.repeat(b)?;
            b.trans.push((cur, None, s1));
            cur = f1;
        }
        Ok((s, cur))
    }

    fn repeat(&mut self, b: &mut EpsBuilder) -> Result<(usize, usize)> {
        let (mut s, mut f) = self.atom(b)?;
        while let Some(op) = self.peek().filter(|c| matches!(c, '*' | '+' | '?')) {
            self.pos += 1;
            let (s2, f2) = (b.state(), b.state());
            b.trans.push((s2, None, s));
            b.trans.push((f, None, f2));
            if op != '+' {
                b.trans.push((s2, None, f2));
            }
            if op != '?' {
                b.trans.push((f, None, s));
            }
            (s, f) = (s2, f2);
        }
        Ok((s, f))
    }

    fn atom(&mut self, b: &mut EpsBuilder) -> Result<(usize, usize)> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let r = self.alt(b)?;
                if self.peek() != Some(')') {
                    return Err(self.err("expected `)`".into()));
                }
                self.pos += 1;
                Ok(r)
            }
            Some('!') => {
                self.pos += 1;
                Ok((b.state(), b.state()))
            }
            Some(c) if c.is_ascii_alphanumeric() || c == '_' => {
                self.pos += 1;
                let k = b.letter(&c.to_string())?;
                let (s, f) = (b.state(), b.state());
                b.trans.push((s, Some(k), f));
                Ok((s, f))
            }
            Some(c) => Err(self.err(format!("unexpected {c:?}"))),
            None => Err(self.err("unexpected end of expression".into())),
        }
    }
}

/// Square matrix over the Boolean semiring.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BoolMatrix {
    n: usize,
    bits: Vec<bool>,
}

impl BoolMatrix {
    pub fn zero(n: usize) -> Self {
        BoolMatrix { n, bits: vec![false; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = BoolMatrix::zero(n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.bits[i * self.n + j] = v;
    }

    pub fn mul(&self, other: &BoolMatrix) -> BoolMatrix {
        assert_eq!(self.n, other.n, "matrix sizes differ");
        let n = self.n;
        let mut m = BoolMatrix::zero(n);
        for i in 0..n {
            for k in (0..n).filter(|&k| self.get(i, k)) {
                for j in 0..n {
                    if other.get(k, j) {
                        m.set(i, j, true);
                    }
                }
            }
        }
        m
    }
}

impl fmt::Display for BoolMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> = (0..self.n)
            .map(|i| (0..self.n).map(|j| if self.get(i, j) { '1' } else { '0' }).collect())
            .collect();
        write!(f, "{}", rows.join(";"))
    }
}

/// The morphism `μ` from words to Boolean matrices with `μ(w)(p,q) = 1` iff
/// `w` leads from `p` to `q`, and its finite image.
#[derive(Clone, Debug)]
pub struct TransitionMonoid {
    nfa: WordNfa,
    gens: Vec<BoolMatrix>,
    elements: Vec<BoolMatrix>,
    index: HashMap<BoolMatrix, usize>,
    /// `step[e][a]` is the index of `elements[e] · μ(a)`.
    step: Vec<Vec<usize>>,
    from_nonempty: Vec<bool>,
}

/// Letter matrices of `b` and the closure of the image under products.
/// Element 0 is the identity, the image of the empty word.
pub fn transition_morphism(b: &WordNfa, budget: &Budget) -> Result<TransitionMonoid> {
    let n = b.num_states();
    let gens: Vec<BoolMatrix> = (0..b.alphabet().len())
        .map(|a| {
            let mut m = BoolMatrix::zero(n);
            for p in 0..n {
                for &q in b.successors(p, a) {
                    m.set(p, q, true);
                }
            }
            m
        })
        .collect();
    let mut elements = vec![BoolMatrix::identity(n)];
    let mut index: HashMap<BoolMatrix, usize> = HashMap::from([(elements[0].clone(), 0)]);
    let mut step = Vec::new();
    let mut from_nonempty = vec![false];
    let mut k = 0;
    while k < elements.len() {
        let mut row = Vec::with_capacity(gens.len());
        for g in &gens {
            let m = elements[k].mul(g);
            let j = match index.get(&m) {
                Some(&j) => j,
                None => {
                    elements.push(m.clone());
                    from_nonempty.push(false);
                    index.insert(m, elements.len() - 1);
                    elements.len() - 1
                }
            };
            from_nonempty[j] = true;
            row.push(j);
        }
        step.push(row);
        budget.states("transition monoid", elements.len())?;
        k += 1;
    }
    Ok(TransitionMonoid { nfa: b.clone(), gens, elements, index, step, from_nonempty })
}

impl TransitionMonoid {
    pub fn automaton(&self) -> &WordNfa {
        &self.nfa
    }

    pub fn letters(&self) -> &[String] {
        self.nfa.alphabet()
    }

    pub fn letter_matrix(&self, a: &str) -> Option<&BoolMatrix> {
        Some(&self.gens[self.nfa.letter_index(a)?])
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn element(&self, e: usize) -> &BoolMatrix {
        &self.elements[e]
    }

    pub fn elements(&self) -> &[BoolMatrix] {
        &self.elements
    }

    pub fn index_of(&self, m: &BoolMatrix) -> Option<usize> {
        self.index.get(m).copied()
    }

    pub fn product(&self, e: usize, a: usize) -> usize {
        self.step[e][a]
    }

    /// Class index of a word; `None` if a letter is outside the alphabet.
    pub fn class_of<S: AsRef<str>>(&self, w: &[S]) -> Option<usize> {
        let mut e = 0;
        for a in w {
            e = self.step[e][self.nfa.letter_index(a.as_ref())?];
        }
        Some(e)
    }

    pub fn mu<S: AsRef<str>>(&self, w: &[S]) -> Option<&BoolMatrix> {
        self.class_of(w).map(|e| &self.elements[e])
    }

    /// Elements that are images of nonempty words.
    pub fn nonempty_classes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&e| self.from_nonempty[e]).collect()
    }

    /// Whether the words of class `e` belong to the language of the automaton.
    pub fn accepting(&self, e: usize) -> bool {
        let m = &self.elements[e];
        self.nfa.initial().iter().any(|&p| self.nfa.finals().iter().any(|&q| m.get(p, q)))
    }

    /// Classes of the nonempty words of `lang`. Letters outside the monoid's
    /// alphabet are ignored.
    pub fn image(&self, lang: &WordNfa) -> BTreeSet<usize> {
        let remap: Vec<Option<usize>> = lang.alphabet().iter().map(|a| self.nfa.letter_index(a)).collect();
        let mut seen: BTreeSet<(usize, usize, bool)> = BTreeSet::new();
        let mut stack: Vec<(usize, usize, bool)> = lang.initial().iter().map(|&q| (q, 0, false)).collect();
        seen.extend(stack.iter().copied());
        let mut out = BTreeSet::new();
        while let Some((q, e, moved)) = stack.pop() {
            if moved && lang.finals().contains(&q) {
                out.insert(e);
            }
            for (a, r) in remap.iter().enumerate() {
                let Some(r) = r else { continue };
                for &q2 in lang.successors(q, a) {
                    let key = (q2, self.step[e][*r], true);
                    if seen.insert(key) {
                        stack.push(key);
                    }
                }
            }
        }
        out
    }

    /// Nonempty words whose class is in `set`.
    pub fn class_language(&self, set: &BTreeSet<usize>) -> WordNfa {
        let s = self.len();
        let mut trans = Vec::new();
        for e in 0..s {
            for a in 0..self.gens.len() {
                trans.push((e, a, self.step[e][a]));
            }
        }
        for a in 0..self.gens.len() {
            trans.push((s, a, self.step[0][a]));
        }
        WordNfa::numbered(self.letters().to_vec(), s + 1, trans, [s].into(), set.clone()).trim()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Subset,
    Equal,
}

/// `L` over `Σ ∪ X` and `R` over `Σ`; variables are the keys of `sigma2`.
/// A variable missing from `sigma1` has the empty lower bound.
#[derive(Clone, Debug)]
pub struct WordInstance {
    pub l: WordNfa,
    pub r: WordNfa,
    pub sigma1: BTreeMap<String, WordNfa>,
    pub sigma2: BTreeMap<String, WordNfa>,
}

#[derive(Clone, Debug)]
pub struct WordSolution {
    /// Selected monoid classes per variable.
    pub classes: BTreeMap<String, BTreeSet<usize>>,
    pub images: BTreeMap<String, WordNfa>,
}

#[derive(Clone, Debug)]
pub struct WordSolutionSet {
    pub decision: bool,
    pub maximal: Vec<WordSolution>,
    pub candidates_checked: usize,
    pub monoid_size: usize,
}

impl WordInstance {
    pub fn vars(&self) -> Vec<String> {
        self.sigma2.keys().cloned().collect()
    }

    /// Letters of `R`, of the images, and of `L` except the variables.
    pub fn sigma(&self) -> Vec<String> {
        let mut s: BTreeSet<String> = self.r.alphabet().iter().cloned().collect();
        s.extend(self.l.alphabet().iter().filter(|a| !self.sigma2.contains_key(*a)).cloned());
        for m in self.sigma1.values().chain(self.sigma2.values()) {
            s.extend(m.alphabet().iter().cloned());
        }
        s.into_iter().collect()
    }

    fn validate(&self) -> Result<()> {
        if let Some(x) = self.sigma1.keys().find(|x| !self.sigma2.contains_key(*x)) {
            return Err(Error::Semantic(format!("{x} has a lower bound but no upper bound")));
        }
        for (x, m) in self.sigma1.iter().chain(&self.sigma2) {
            if m.accepts_empty() {
                return Err(Error::Semantic(format!("the image of {x} contains the empty word")));
            }
        }
        if let Some(x) =
            self.sigma2.keys().find(|x| self.r.alphabet().contains(x) || self.sigma2.values().any(|m| m.alphabet().contains(x)))
        {
            return Err(Error::AlphabetMismatch(format!("variable {x} occurs in R or in an image")));
        }
        Ok(())
    }
}

/// Decides `∃σ: σ(L) rel R` with `σ1 ≤ σ ≤ σ2` and lists the maximal
/// solutions. Candidates are unions of `μ`-classes of `R`'s automaton, cut
/// down to `σ2`.
pub fn solve_word_matching(inst: &WordInstance, rel: Relation, budget: &Budget) -> Result<WordSolutionSet> {
    inst.validate()?;
    let sigma = inst.sigma();
    let r = inst.r.extend_alphabet(&sigma);
    let monoid = transition_morphism(&r, budget)?;
    let none = || WordSolutionSet { decision: false, maximal: Vec::new(), candidates_checked: 0, monoid_size: monoid.len() };
    let empty = WordNfa::empty(sigma.clone());
    let lower = |x: &String| inst.sigma1.get(x).unwrap_or(&empty);
    for (x, up) in &inst.sigma2 {
        if !lower(x).is_subset(up, budget)? {
            return Ok(none());
        }
    }
    let vars = inst.vars();
    let forced: Vec<BTreeSet<usize>> = vars.iter().map(|x| monoid.image(lower(x))).collect();
    let compat: Vec<BTreeSet<usize>> = vars.iter().map(|x| monoid.image(&inst.sigma2[x])).collect();
    let fixed = &forced;
    let free: Vec<(usize, usize)> = compat
        .iter()
        .enumerate()
        .flat_map(|(k, set)| set.iter().filter(move |e| !fixed[k].contains(e)).map(move |&e| (k, e)))
        .collect();
    let build = |mask: &[bool]| -> Vec<BTreeSet<usize>> {
        let mut a = forced.clone();
        for (&(k, e), &on) in free.iter().zip(mask) {
            if on {
                a[k].insert(e);
            }
        }
        a
    };
    let images = |a: &[BTreeSet<usize>]| -> BTreeMap<String, WordNfa> {
        vars.iter()
            .zip(a)
            .map(|(x, set)| (x.clone(), monoid.class_language(set).intersect(&inst.sigma2[x])))
            .collect()
    };
    let (found, checked) =
        maximal_masks(free.len(), "word candidate search", budget, |_| true, |mask| {
            inst.l.substitute(&images(&build(mask))).is_subset(&r, budget)
        })?;
    let mut maximal = Vec::new();
    for mask in found {
        let a = build(&mask);
        let imgs = images(&a);
        if rel == Relation::Equal && !r.is_subset(&inst.l.substitute(&imgs), budget)? {
            continue;
        }
        maximal.push(WordSolution { classes: vars.iter().cloned().zip(a).collect(), images: imgs });
    }
    Ok(WordSolutionSet { decision: !maximal.is_empty(), maximal, candidates_checked: checked, monoid_size: monoid.len() })
}

/// Name of the end-of-string constant.
pub const END: &str = "$";

pub fn end_symbol() -> Symbol {
    Symbol::new(END, 0)
}

/// `a1 ... an ↦ a1(...an($))`.
pub fn encode_word<S: AsRef<str>>(w: &[S]) -> FiniteTree {
    w.iter().rev().fold(FiniteTree::leaf(end_symbol()), |t, a| FiniteTree::node(Symbol::new(a.as_ref(), 1), vec![t]))
}

/// Inverse of `encode_word`; `None` for trees that are not unary chains
/// ending in `$`.
pub fn decode_word(t: &FiniteTree) -> Option<Word> {
    let mut w = Vec::new();
    let mut cur = t;
    loop {
        match (&cur.sym, cur.children.as_slice()) {
            (Symbol::Named(n, 0), []) if &**n == END => return Some(w),
            (Symbol::Named(n, 1), [c]) => {
                w.push(n.to_string());
                cur = c;
            }
            _ => return None,
        }
    }
}

/// Tree automaton for the encodings of the words of `nfa`, with `end` in
/// place of `$` (a hole gives the contexts used as images). Every state has
/// an odd color, so infinite chains are rejected. A fresh start state
/// combines the initial states.
pub fn nfa_to_nta(nfa: &WordNfa, end: &Symbol) -> (ParityNta, usize) {
    let mut start = "%start".to_string();
    while (0..nfa.num_states()).any(|q| nfa.state_name(q) == start) {
        start.push('\'');
    }
    let s = nfa.num_states();
    let mut names: Vec<String> = (0..s).map(|q| nfa.state_name(q).to_string()).collect();
    names.push(start);
    let mut alphabet: Vec<Symbol> = nfa.alphabet().iter().map(|a| Symbol::new(a, 1)).collect();
    alphabet.push(end.clone());
    let mut trans = Vec::new();
    for (p, a, q) in nfa.transitions() {
        trans.push((p, Symbol::new(a, 1), vec![q]));
        if nfa.initial().contains(&p) {
            trans.push((s, Symbol::new(a, 1), vec![q]));
        }
    }
    for &q in nfa.finals() {
        trans.push((q, end.clone(), Vec::new()));
    }
    if nfa.accepts_empty() {
        trans.push((s, end.clone(), Vec::new()));
    }
    let nta = ParityNta::from_parts(alphabet, names, vec![1; s + 1], trans).expect("unary automaton");
    (nta, s)
}

/// Word automaton for the finite unary chains accepted from `start` that end
/// in `end`. Infinite chains and other symbols are dropped.
pub fn nta_to_nfa(nta: &ParityNta, start: usize, end: &Symbol) -> WordNfa {
    let letters: Vec<String> =
        nta.alphabet().iter().filter(|s| matches!(s, Symbol::Named(_, 1))).map(|s| s.name()).collect();
    let mut trans = Vec::new();
    let mut finals = BTreeSet::new();
    for t in nta.transitions() {
        let sym = &nta.alphabet()[t.sym];
        if sym == end {
            finals.insert(t.state);
        } else if let Symbol::Named(_, 1) = sym {
            trans.push((t.state, sym.name(), t.children[0]));
        }
    }
    WordNfa::new(letters, nta.state_names().to_vec(), trans, [start].into(), finals).expect("unary automaton").trim()
}

/// The tree instance for a word instance: letters and variables become unary
/// symbols, `$` ends the string, and each image `K` becomes the contexts
/// `a1(...an(#1))` for `a1...an ∈ K`.
pub fn encode_word_instance(inst: &WordInstance) -> Result<MatchingInstance> {
    inst.validate()?;
    let sigma = inst.sigma();
    let end = end_symbol();
    let l = nfa_to_nta(&inst.l.extend_alphabet(&sigma), &end);
    let r = nfa_to_nta(&inst.r.extend_alphabet(&sigma), &end);
    let encode = |m: &BTreeMap<String, WordNfa>| -> Result<Substitution> {
        let mut s = Substitution::new();
        for (x, k) in m {
            let (nta, state) = nfa_to_nta(k, &Symbol::hole(1));
            s.insert(Symbol::new(x, 1), Lang::Regular { nta, state })?;
        }
        Ok(s)
    };
    let mut sigma1 = encode(&inst.sigma1)?;
    for x in inst.sigma2.keys().filter(|x| !inst.sigma1.contains_key(*x)) {
        sigma1.insert(Symbol::new(x, 1), Lang::Trees(Vec::new()))?;
    }
    Ok(MatchingInstance { l, r, sigma1, sigma2: encode(&inst.sigma2)? })
}

/// Word images of a solution of the encoded instance `solver` was built
/// from. The profile of `a1(...an(#1))` is computed letter by letter from
/// the hole profile, so the words with a selected profile form a regular
/// language read right to left; it is cut down to `σ2(x)`.
pub fn decode_solution(
    inst: &WordInstance,
    solver: &Solver,
    sol: &Solution,
    budget: &Budget,
) -> Result<BTreeMap<String, WordNfa>> {
    let ctx = solver.context();
    let sigma = inst.sigma();
    let mut profiles = vec![ctx.hole_profile(1)];
    let mut index: HashMap<Profile, usize> = HashMap::from([(profiles[0].clone(), 0)]);
    let mut edges = Vec::new();
    let mut k = 0;
    while k < profiles.len() {
        for a in &sigma {
            let next = ctx.apply(&Symbol::new(a, 1), &[&profiles[k]]);
            let j = match index.get(&next) {
                Some(&j) => j,
                None => {
                    profiles.push(next.clone());
                    index.insert(next, profiles.len() - 1);
                    profiles.len() - 1
                }
            };
            edges.push((j, a.clone(), k));
        }
        budget.profiles("word decoding", profiles.len())?;
        k += 1;
    }
    let names: Vec<String> = (0..profiles.len()).map(|k| format!("s{k}")).collect();
    let mut out = BTreeMap::new();
    for (x, set) in &sol.profiles {
        let x = x.name();
        let initial = profiles.iter().enumerate().filter(|(_, p)| set.contains(*p)).map(|(k, _)| k).collect();
        let by_profile = WordNfa::new(sigma.clone(), names.clone(), edges.clone(), initial, [0].into())?;
        let upper = inst.sigma2.get(&x).ok_or_else(|| Error::MalformedSolution(format!("{x} is not a variable")))?;
        out.insert(x, by_profile.without_empty_word().intersect(upper));
    }
    Ok(out)
}
