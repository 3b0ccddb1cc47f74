//! The instance document: named automata, graphs, word automata,
//! substitutions and problem blocks in one text file.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use regmatch::nta::{parse_symbol_decl, symbol_decl, ParityNta};
use regmatch::solver::MatchingInstance;
use regmatch::subst::{Lang, Substitution};
use regmatch::trees::{is_ident_byte, FiniteTree, Symbol, TreeGraph};
use regmatch::words::{Relation, WordInstance, WordNfa};
use regmatch::{Error, Result};

/// An automaton with a start state.
#[derive(Clone, Debug)]
pub struct AutomatonItem {
    pub nta: ParityNta,
    pub start: usize,
}

/// `NAME` or `NAME @ state`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateRef {
    pub automaton: String,
    pub state: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Image {
    Trees(Vec<FiniteTree>),
    Graphs(Vec<String>),
    Lang(StateRef),
}

/// A word language: an inline expression or the name of an `nfa` or
/// `regex` item.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WordRef {
    Regex(String),
    Named(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Problem {
    pub l: StateRef,
    pub r: StateRef,
    pub sigma1: Option<String>,
    pub sigma2: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordProblem {
    pub l: WordRef,
    pub r: WordRef,
    pub sigma1: Option<String>,
    pub sigma2: String,
    pub relation: Relation,
}

#[derive(Clone, Debug, Default)]
pub struct Document {
    pub sigma: Vec<Symbol>,
    pub vars: Vec<Symbol>,
    pub automata: BTreeMap<String, AutomatonItem>,
    pub graphs: BTreeMap<String, TreeGraph>,
    pub nfas: BTreeMap<String, WordNfa>,
    /// Source text and compiled automaton.
    pub regexes: BTreeMap<String, (String, WordNfa)>,
    pub substitutions: BTreeMap<String, Vec<(Symbol, Image)>>,
    pub word_substitutions: BTreeMap<String, Vec<(String, WordRef)>>,
    pub problem: Option<Problem>,
    pub word_problem: Option<WordProblem>,
}

/// One statement of a block body with its source line.
#[derive(Clone, Debug)]
struct Stmt {
    line: usize,
    text: String,
}

fn syntax(line: usize, msg: impl Into<String>) -> Error {
    Error::Syntax { line, col: 1, msg: msg.into() }
}

fn check_name(name: &str, line: usize) -> Result<()> {
    if name.is_empty() || !name.bytes().all(is_ident_byte) {
        return Err(syntax(line, format!("bad name {name:?}")));
    }
    Ok(())
}

/// Moves an error from a block body to the document's line numbers.
fn relocate(e: Error, body: &[Stmt]) -> Error {
    match e {
        Error::Syntax { line, col, msg } => {
            let at = body.get(line.saturating_sub(1)).map_or(line, |s| s.line);
            Error::Syntax { line: at, col, msg }
        }
        other => other,
    }
}

fn join(body: &[Stmt]) -> String {
    body.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join("\n")
}

/// Splits at top-level commas.
fn split_top(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for c in text.chars() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
                continue;
            }
            _ => {}
        }
        cur.push(c);
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

fn parse_state_ref(text: &str, line: usize) -> Result<StateRef> {
    let (name, state) = match text.split_once('@') {
        Some((n, s)) => (n.trim(), Some(s.trim().to_string())),
        None => (text.trim(), None),
    };
    check_name(name, line)?;
    Ok(StateRef { automaton: name.to_string(), state })
}

fn parse_word_ref(text: &str, line: usize) -> Result<WordRef> {
    let text = text.trim();
    if let Some(rest) = text.strip_prefix("regex ") {
        Ok(WordRef::Regex(rest.trim().to_string()))
    } else if let Some(rest) = text.strip_prefix("nfa ") {
        check_name(rest.trim(), line)?;
        Ok(WordRef::Named(rest.trim().to_string()))
    } else {
        Err(syntax(line, format!("expected `regex <expr>` or `nfa <name>`, got {text:?}")))
    }
}

fn keyed(body: &[Stmt]) -> Result<Vec<(usize, String, String)>> {
    body.iter()
        .map(|s| {
            let (k, v) = s.text.split_once('=').ok_or_else(|| syntax(s.line, "expected `key = value`"))?;
            Ok((s.line, k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

impl Document {
    pub fn parse(text: &str) -> Result<Document> {
        let mut doc = Document::default();
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.split("//").next().unwrap().trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        let mut k = 0;
        let mut seen_names = BTreeSet::new();
        while k < lines.len() {
            let (ln, line) = lines[k];
            k += 1;
            let mut words = line.split_whitespace();
            let kw = words.next().unwrap();
            match kw {
                "alphabet" | "vars" => {
                    for item in words {
                        let s = parse_symbol_decl(item).map_err(|m| syntax(ln, m))?;
                        if !matches!(s, Symbol::Named(..)) {
                            return Err(syntax(ln, format!("{item} cannot be declared here")));
                        }
                        if kw == "alphabet" { doc.sigma.push(s) } else { doc.vars.push(s) }
                    }
                    continue;
                }
                "regex" => {
                    let rest = line["regex".len()..].trim();
                    let (name, src) = rest.split_once('=').ok_or_else(|| syntax(ln, "expected `regex NAME = expr`"))?;
                    let (name, src) = (name.trim().to_string(), src.trim().to_string());
                    check_name(&name, ln)?;
                    if !seen_names.insert(name.clone()) {
                        return Err(syntax(ln, format!("{name} defined twice")));
                    }
                    let nfa = WordNfa::from_regex(&src).map_err(|e| match e {
                        Error::Syntax { col, msg, .. } => Error::Syntax { line: ln, col, msg },
                        e => e,
                    })?;
                    doc.regexes.insert(name, (src, nfa));
                    continue;
                }
                _ => {}
            }
            // Block: `kind [NAME] {` ... `}`, possibly on one line.
            let open = line.find('{').ok_or_else(|| syntax(ln, format!("unknown statement {kw:?}")))?;
            let head: Vec<&str> = line[..open].split_whitespace().collect();
            let mut body = Vec::new();
            let after = &line[open + 1..];
            let mut closed = false;
            let push = |l: usize, text: &str, body: &mut Vec<Stmt>| {
                for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
                    body.push(Stmt { line: l, text: part.to_string() });
                }
            };
            if let Some(inner) = after.strip_suffix('}') {
                push(ln, inner, &mut body);
                closed = true;
            } else {
                push(ln, after, &mut body);
            }
            while !closed {
                let (l2, text) = *lines.get(k).ok_or_else(|| syntax(ln, format!("unclosed {kw} block")))?;
                k += 1;
                if let Some(inner) = text.strip_suffix('}') {
                    push(l2, inner, &mut body);
                    closed = true;
                } else {
                    push(l2, text, &mut body);
                }
            }
            let name = match head.as_slice() {
                [_] => None,
                [_, n] => {
                    check_name(n, ln)?;
                    if !seen_names.insert(n.to_string()) {
                        return Err(syntax(ln, format!("{n} defined twice")));
                    }
                    Some(n.to_string())
                }
                _ => return Err(syntax(ln, "expected `kind NAME {`")),
            };
            let named = |what: &str| name.clone().ok_or_else(|| syntax(ln, format!("{what} block needs a name")));
            match kw {
                "automaton" => {
                    let item = doc.parse_automaton(&body)?;
                    doc.automata.insert(named("automaton")?, item);
                }
                "graph" => {
                    let g = TreeGraph::parse(&join(&body)).map_err(|e| match e {
                        Error::Semantic(m) => syntax(ln, m),
                        e => e,
                    })?;
                    doc.graphs.insert(named("graph")?, g);
                }
                "nfa" => {
                    let n = WordNfa::parse(&join(&body)).map_err(|e| relocate(e, &body))?;
                    doc.nfas.insert(named("nfa")?, n);
                }
                "substitution" => {
                    let entries = doc.parse_substitution(&body)?;
                    doc.substitutions.insert(named("substitution")?, entries);
                }
                "words" => {
                    let mut entries = Vec::new();
                    for (l, key, value) in keyed(&body)? {
                        check_name(&key, l)?;
                        entries.push((key, parse_word_ref(&value, l)?));
                    }
                    doc.word_substitutions.insert(named("words")?, entries);
                }
                "problem" => {
                    if doc.problem.is_some() {
                        return Err(syntax(ln, "more than one problem block"));
                    }
                    doc.problem = Some(parse_problem(&body, ln)?);
                }
                "word-problem" => {
                    if doc.word_problem.is_some() {
                        return Err(syntax(ln, "more than one word-problem block"));
                    }
                    doc.word_problem = Some(parse_word_problem(&body, ln)?);
                }
                _ => return Err(syntax(ln, format!("unknown block kind {kw:?}"))),
            }
        }
        doc.validate()?;
        Ok(doc)
    }

    fn parse_automaton(&self, body: &[Stmt]) -> Result<AutomatonItem> {
        let mut start = None;
        let mut rest = Vec::new();
        for s in body {
            match s.text.strip_prefix("start") {
                Some(q) if q.starts_with(char::is_whitespace) => start = Some((s.line, q.trim().to_string())),
                _ => rest.push(s.clone()),
            }
        }
        if !rest.iter().any(|s| s.text.starts_with("alphabet")) {
            let decl: Vec<String> = self.sigma.iter().chain(&self.vars).map(symbol_decl).collect();
            let line = rest.first().map_or(0, |s| s.line);
            rest.insert(0, Stmt { line, text: format!("alphabet {}", decl.join(" ")) });
        }
        let nta = ParityNta::parse(&join(&rest)).map_err(|e| relocate(e, &rest))?;
        let start = match start {
            Some((line, q)) => nta.state_by_name(&q).ok_or_else(|| syntax(line, format!("undeclared state {q}")))?,
            None if nta.num_states() > 0 => 0,
            None => return Err(syntax(body.first().map_or(0, |s| s.line), "automaton without states")),
        };
        Ok(AutomatonItem { nta, start })
    }

    fn parse_substitution(&self, body: &[Stmt]) -> Result<Vec<(Symbol, Image)>> {
        let mut out = Vec::new();
        for (l, key, value) in keyed(body)? {
            let x = if key.contains('/') {
                parse_symbol_decl(&key).map_err(|m| syntax(l, m))?
            } else {
                check_name(&key, l)?;
                self.vars
                    .iter()
                    .find(|v| v.name() == key)
                    .cloned()
                    .ok_or_else(|| syntax(l, format!("rank of {key} unknown: declare it in `vars` or write {key}/k")))?
            };
            let (kind, rest) = value.split_once(char::is_whitespace).unwrap_or((value.as_str(), ""));
            let image = match kind {
                "trees" => Image::Trees(
                    split_top(rest)
                        .iter()
                        .map(|t| {
                            FiniteTree::parse(t).map_err(|e| match e {
                                Error::Syntax { col, msg, .. } => Error::Syntax { line: l, col, msg },
                                e => e,
                            })
                        })
                        .collect::<Result<_>>()?,
                ),
                "graphs" => Image::Graphs(split_top(rest)),
                "lang" => Image::Lang(parse_state_ref(rest, l)?),
                _ => return Err(syntax(l, format!("expected `trees`, `graphs` or `lang`, got {kind:?}"))),
            };
            if out.iter().any(|(y, _): &(Symbol, Image)| y.name() == x.name()) {
                return Err(syntax(l, format!("{x} has two images")));
            }
            out.push((x, image));
        }
        Ok(out)
    }

    /// Checks every reference and the ranks of all symbols.
    fn validate(&self) -> Result<()> {
        let mut ranks: BTreeMap<String, (usize, String)> = BTreeMap::new();
        let mut note = |s: &Symbol, place: &str| -> Result<()> {
            if let Symbol::Named(n, r) = s {
                match ranks.get(&**n) {
                    Some((r0, p0)) if r0 != r => {
                        return Err(Error::RankMismatch(format!("{n} has rank {r0} in {p0} but rank {r} in {place}")))
                    }
                    Some(_) => {}
                    None => {
                        ranks.insert(n.to_string(), (*r, place.to_string()));
                    }
                }
            }
            Ok(())
        };
        for s in &self.sigma {
            note(s, "the alphabet")?;
        }
        for s in &self.vars {
            if self.sigma.iter().any(|t| t.name() == s.name()) {
                return Err(Error::Semantic(format!("{s} is both a letter and a variable")));
            }
            note(s, "the variables")?;
        }
        for (name, a) in &self.automata {
            for s in a.nta.alphabet() {
                note(s, &format!("automaton {name}"))?;
            }
        }
        for (name, g) in &self.graphs {
            for s in g.symbols() {
                note(&s, &format!("graph {name}"))?;
            }
        }
        for (name, entries) in &self.substitutions {
            for (x, img) in entries {
                note(x, &format!("substitution {name}"))?;
                if let Image::Trees(ts) = img {
                    for s in ts.iter().flat_map(|t| t.symbols()) {
                        note(&s, &format!("substitution {name}"))?;
                    }
                }
            }
        }
        for name in self.substitutions.keys() {
            self.substitution(name)?;
        }
        for name in self.word_substitutions.keys() {
            self.word_substitution(name)?;
        }
        if let Some(p) = &self.problem {
            self.automaton(&p.l)?;
            self.automaton(&p.r)?;
            for s in p.sigma1.iter().chain([&p.sigma2]) {
                self.substitution(s)?;
            }
        }
        if let Some(p) = &self.word_problem {
            self.word_lang(&p.l)?;
            self.word_lang(&p.r)?;
            for s in p.sigma1.iter().chain([&p.sigma2]) {
                self.word_substitution(s)?;
            }
        }
        Ok(())
    }

    pub fn automaton(&self, r: &StateRef) -> Result<(ParityNta, usize)> {
        let item = self
            .automata
            .get(&r.automaton)
            .ok_or_else(|| Error::Semantic(format!("undefined automaton {}", r.automaton)))?;
        let start = match &r.state {
            Some(q) => item
                .nta
                .state_by_name(q)
                .ok_or_else(|| Error::Semantic(format!("automaton {} has no state {q}", r.automaton)))?,
            None => item.start,
        };
        Ok((item.nta.clone(), start))
    }

    pub fn automaton_named(&self, name: &str, state: Option<&str>) -> Result<(ParityNta, usize)> {
        self.automaton(&StateRef { automaton: name.to_string(), state: state.map(str::to_string) })
    }

    pub fn graph(&self, name: &str) -> Result<&TreeGraph> {
        self.graphs.get(name).ok_or_else(|| Error::Semantic(format!("undefined graph {name}")))
    }

    pub fn substitution(&self, name: &str) -> Result<Substitution> {
        let entries =
            self.substitutions.get(name).ok_or_else(|| Error::Semantic(format!("undefined substitution {name}")))?;
        let mut out = Substitution::new();
        for (x, img) in entries {
            let lang = match img {
                Image::Trees(ts) => Lang::Trees(ts.clone()),
                Image::Graphs(gs) => Lang::Graphs(gs.iter().map(|g| self.graph(g).cloned()).collect::<Result<_>>()?),
                Image::Lang(r) => {
                    let (nta, state) = self.automaton(r)?;
                    Lang::Regular { nta, state }
                }
            };
            out.insert(x.clone(), lang).map_err(|e| Error::Semantic(format!("substitution {name}: {e}")))?;
        }
        Ok(out)
    }

    pub fn word_lang(&self, r: &WordRef) -> Result<WordNfa> {
        match r {
            WordRef::Regex(src) => WordNfa::from_regex(src),
            WordRef::Named(n) => self
                .nfas
                .get(n)
                .cloned()
                .or_else(|| self.regexes.get(n).map(|(_, m)| m.clone()))
                .ok_or_else(|| Error::Semantic(format!("undefined word automaton {n}"))),
        }
    }

    pub fn word_substitution(&self, name: &str) -> Result<BTreeMap<String, WordNfa>> {
        let entries = self
            .word_substitutions
            .get(name)
            .ok_or_else(|| Error::Semantic(format!("undefined word substitution {name}")))?;
        entries.iter().map(|(x, r)| Ok((x.clone(), self.word_lang(r)?))).collect()
    }

    pub fn matching_instance(&self) -> Result<MatchingInstance> {
        let p = self.problem.as_ref().ok_or_else(|| Error::Semantic("the document has no problem block".into()))?;
        let sigma2 = self.substitution(&p.sigma2)?;
        let sigma1 = match &p.sigma1 {
            Some(s) => self.substitution(s)?,
            None => Substitution::new(),
        };
        Ok(MatchingInstance { l: self.automaton(&p.l)?, r: self.automaton(&p.r)?, sigma1, sigma2 })
    }

    pub fn word_instance(&self) -> Result<(WordInstance, Relation)> {
        let p = self
            .word_problem
            .as_ref()
            .ok_or_else(|| Error::Semantic("the document has no word-problem block".into()))?;
        let sigma1 = match &p.sigma1 {
            Some(s) => self.word_substitution(s)?,
            None => BTreeMap::new(),
        };
        let inst = WordInstance {
            l: self.word_lang(&p.l)?,
            r: self.word_lang(&p.r)?,
            sigma1,
            sigma2: self.word_substitution(&p.sigma2)?,
        };
        Ok((inst, p.relation))
    }
}

fn need<T>(v: Option<T>, key: &str, block: &str, line: usize) -> Result<T> {
    v.ok_or_else(|| syntax(line, format!("{block} block lacks `{key}`")))
}

fn parse_problem(body: &[Stmt], line: usize) -> Result<Problem> {
    let (mut l, mut r, mut s1, mut s2) = (None, None, None, None);
    for (ln, key, value) in keyed(body)? {
        match key.as_str() {
            "l" => l = Some(parse_state_ref(&value, ln)?),
            "r" => r = Some(parse_state_ref(&value, ln)?),
            "sigma1" => s1 = Some(value),
            "sigma2" => s2 = Some(value),
            _ => return Err(syntax(ln, format!("unknown problem field {key}"))),
        }
    }
    Ok(Problem {
        l: need(l, "l", "problem", line)?,
        r: need(r, "r", "problem", line)?,
        sigma1: s1,
        sigma2: need(s2, "sigma2", "problem", line)?,
    })
}

fn parse_word_problem(body: &[Stmt], line: usize) -> Result<WordProblem> {
    let (mut l, mut r, mut s1, mut s2, mut rel) = (None, None, None, None, Relation::Subset);
    for (ln, key, value) in keyed(body)? {
        match key.as_str() {
            "l" => l = Some(parse_word_ref(&value, ln)?),
            "r" => r = Some(parse_word_ref(&value, ln)?),
            "sigma1" => s1 = Some(value),
            "sigma2" => s2 = Some(value),
            "relation" => {
                rel = match value.as_str() {
                    "subset" => Relation::Subset,
                    "equal" => Relation::Equal,
                    _ => return Err(syntax(ln, format!("relation is `subset` or `equal`, got {value:?}"))),
                }
            }
            _ => return Err(syntax(ln, format!("unknown word-problem field {key}"))),
        }
    }
    Ok(WordProblem {
        l: need(l, "l", "word-problem", line)?,
        r: need(r, "r", "word-problem", line)?,
        sigma1: s1,
        sigma2: need(s2, "sigma2", "word-problem", line)?,
        relation: rel,
    })
}

impl fmt::Display for StateRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.state {
            Some(q) => write!(f, "{} @ {q}", self.automaton),
            None => write!(f, "{}", self.automaton),
        }
    }
}

impl fmt::Display for WordRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WordRef::Regex(s) => write!(f, "regex {s}"),
            WordRef::Named(n) => write!(f, "nfa {n}"),
        }
    }
}

impl fmt::Display for Image {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Image::Trees(ts) => {
                let ts: Vec<String> = ts.iter().map(|t| t.to_string()).collect();
                write!(f, "trees")?;
                if !ts.is_empty() {
                    write!(f, " {}", ts.join(", "))?;
                }
                Ok(())
            }
            Image::Graphs(gs) if gs.is_empty() => write!(f, "graphs"),
            Image::Graphs(gs) => write!(f, "graphs {}", gs.join(", ")),
            Image::Lang(r) => write!(f, "lang {r}"),
        }
    }
}

fn indent(f: &mut fmt::Formatter<'_>, text: &str) -> fmt::Result {
    for line in text.lines() {
        writeln!(f, "  {line}")?;
    }
    Ok(())
}

impl fmt::Display for Document {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.sigma.is_empty() {
            writeln!(f, "alphabet {}", self.sigma.iter().map(symbol_decl).collect::<Vec<_>>().join(" "))?;
        }
        if !self.vars.is_empty() {
            writeln!(f, "vars {}", self.vars.iter().map(symbol_decl).collect::<Vec<_>>().join(" "))?;
        }
        for (name, a) in &self.automata {
            writeln!(f, "\nautomaton {name} {{")?;
            indent(f, &a.nta.to_string())?;
            writeln!(f, "  start {}", a.nta.state_name(a.start))?;
            writeln!(f, "}}")?;
        }
        for (name, g) in &self.graphs {
            writeln!(f, "\ngraph {name} {{ {g} }}")?;
        }
        for (name, n) in &self.nfas {
            writeln!(f, "\nnfa {name} {{")?;
            indent(f, &n.to_string())?;
            writeln!(f, "}}")?;
        }
        if !self.regexes.is_empty() {
            writeln!(f)?;
        }
        for (name, (src, _)) in &self.regexes {
            writeln!(f, "regex {name} = {src}")?;
        }
        for (name, entries) in &self.substitutions {
            writeln!(f, "\nsubstitution {name} {{")?;
            for (x, img) in entries {
                writeln!(f, "  {} = {img}", symbol_decl(x))?;
            }
            writeln!(f, "}}")?;
        }
        for (name, entries) in &self.word_substitutions {
            writeln!(f, "\nwords {name} {{")?;
            for (x, r) in entries {
                writeln!(f, "  {x} = {r}")?;
            }
            writeln!(f, "}}")?;
        }
        if let Some(p) = &self.problem {
            writeln!(f, "\nproblem {{")?;
            writeln!(f, "  l = {}", p.l)?;
            writeln!(f, "  r = {}", p.r)?;
            if let Some(s) = &p.sigma1 {
                writeln!(f, "  sigma1 = {s}")?;
            }
            writeln!(f, "  sigma2 = {}", p.sigma2)?;
            writeln!(f, "}}")?;
        }
        if let Some(p) = &self.word_problem {
            writeln!(f, "\nword-problem {{")?;
            writeln!(f, "  l = {}", p.l)?;
            writeln!(f, "  r = {}", p.r)?;
            if let Some(s) = &p.sigma1 {
                writeln!(f, "  sigma1 = {s}")?;
            }
            writeln!(f, "  sigma2 = {}", p.sigma2)?;
            let rel = match p.relation {
                Relation::Subset => "subset",
                Relation::Equal => "equal",
            };
            writeln!(f, "  relation = {rel}")?;
            writeln!(f, "}}")?;
        }
        Ok(())
    }
}
