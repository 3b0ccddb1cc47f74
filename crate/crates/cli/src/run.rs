//! Verb dispatch and report rendering.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use regmatch::nta::ParityNta;
use regmatch::profiles::{Profile, ProfileContext};
use regmatch::solver::{self, MatchingInstance, SolutionSet, Solver};
use regmatch::subst::{self, Substitution};
use regmatch::trees::{FiniteTree, Symbol, TreeGraph};
use regmatch::words::{self, Relation};
use regmatch::{Budget, Error, Result};

use crate::document::{Document, StateRef};

#[derive(Parser, Debug)]
#[command(name = "regmatch", version, about = "Regular matching for tree languages")]
pub struct Cli {
    /// Print the report as JSON.
    #[arg(long, global = true)]
    pub json: bool,
    /// State limit for automaton constructions.
    #[arg(long, global = true, env = "REGMATCH_MAX_STATES")]
    pub max_states: Option<usize>,
    /// Candidate assignments the solvers may check.
    #[arg(long, global = true, env = "REGMATCH_MAX_CANDIDATES")]
    pub max_candidates: Option<usize>,
    /// Profiles a closure computation may produce.
    #[arg(long, global = true, env = "REGMATCH_MAX_PROFILES")]
    pub max_profiles: Option<usize>,
    /// Wall-clock limit in milliseconds.
    #[arg(long, global = true, env = "REGMATCH_TIMEOUT_MS")]
    pub timeout_ms: Option<u64>,
    /// Spare holes for closing loops when collecting profiles.
    #[arg(long, global = true, env = "REGMATCH_LOOP_HOLES")]
    pub loop_holes: Option<usize>,
    #[command(subcommand)]
    pub verb: Verb,
}

/// The document and the automaton to work on. Without `--automaton` the
/// problem's right-hand side is used, or the only automaton of the document.
#[derive(Args, Debug)]
pub struct Target {
    pub file: PathBuf,
    #[arg(long)]
    pub automaton: Option<String>,
    /// Start state; defaults to the automaton's `start`.
    #[arg(long)]
    pub state: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum Verb {
    /// Membership of a finite tree or a named graph.
    Member {
        #[command(flatten)]
        target: Target,
        #[arg(long, conflicts_with = "graph")]
        tree: Option<String>,
        #[arg(long)]
        graph: Option<String>,
    },
    /// Emptiness, with a witness when nonempty.
    Empty {
        #[command(flatten)]
        target: Target,
    },
    /// Complement automaton at the start state.
    Complement {
        #[command(flatten)]
        target: Target,
    },
    /// Realizable profiles with witness trees.
    Profiles {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 0)]
        holes: usize,
    },
    /// Profiles realized by each image of a substitution.
    Saturate {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        subst: String,
    },
    /// Images replaced by profile witnesses over the extended alphabet.
    Specialize {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        subst: String,
    },
    /// Automaton for the trees whose inside-out image is accepted.
    InverseImage {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        subst: String,
    },
    /// Maximal solutions of the problem block.
    Solve {
        file: PathBuf,
        /// List profile sets only, without image automata.
        #[arg(long)]
        profiles_only: bool,
    },
    /// Maximal solutions with nonempty images and no bounds.
    SolveNonempty {
        file: PathBuf,
        #[arg(long)]
        profiles_only: bool,
    },
    /// Whether a substitution solves the problem block's inclusion.
    Check {
        file: PathBuf,
        #[arg(long)]
        subst: String,
    },
    /// Maximal solutions of the word-problem block.
    WordSolve { file: PathBuf },
    /// Inside-out image of a finite tree under a finite substitution.
    EvalIo {
        file: PathBuf,
        #[arg(long)]
        subst: String,
        #[arg(long)]
        tree: String,
    },
    /// Outside-in image of a finite tree under a finite substitution.
    EvalOi {
        file: PathBuf,
        #[arg(long)]
        subst: String,
        #[arg(long)]
        tree: String,
    },
}

/// Text lines, the same content as JSON, and the exit code.
#[derive(Debug, Clone)]
pub struct Report {
    pub lines: Vec<String>,
    pub json: Value,
    pub exit: i32,
}

impl Report {
    pub fn render(&self, json: bool) -> String {
        if json {
            format!("{}\n", serde_json::to_string_pretty(&self.json).unwrap())
        } else {
            self.lines.iter().map(|l| format!("{l}\n")).collect()
        }
    }
}

pub fn error_report(e: &Error) -> Report {
    let kind = match e {
        Error::Budget { .. } => "budget",
        Error::Syntax { .. } => "syntax",
        _ => "error",
    };
    let mut j = json!({ "result": "error", "kind": kind, "message": e.to_string() });
    if let Error::Budget { stage, .. } = e {
        j["stage"] = json!(stage);
    }
    Report { lines: vec![format!("error: {e}")], json: j, exit: 2 }
}

impl Cli {
    pub fn budget(&self) -> Budget {
        let mut b = Budget::default();
        if let Some(n) = self.max_states {
            b.max_states = n;
        }
        if let Some(n) = self.max_candidates {
            b.max_candidates = n;
        }
        if let Some(n) = self.max_profiles {
            b.max_profiles = n;
        }
        if let Some(n) = self.loop_holes {
            b.loop_holes = n;
        }
        if let Some(ms) = self.timeout_ms {
            b = b.with_timeout(Duration::from_millis(ms));
        }
        b
    }
}

/// Runs a parsed command line; errors become exit code 2.
pub fn run(cli: &Cli) -> Report {
    execute(cli).unwrap_or_else(|e| error_report(&e))
}

fn load(path: &PathBuf) -> Result<Document> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Semantic(format!("{}: {e}", path.display())))?;
    Document::parse(&text)
}

fn pick(doc: &Document, t: &Target) -> Result<(String, ParityNta, usize)> {
    let name = match (&t.automaton, &doc.problem) {
        (Some(n), _) => n.clone(),
        (None, Some(p)) => p.r.automaton.clone(),
        (None, None) if doc.automata.len() == 1 => doc.automata.keys().next().unwrap().clone(),
        _ => return Err(Error::Semantic("several automata: choose one with --automaton".into())),
    };
    let (nta, q) = doc.automaton(&StateRef { automaton: name.clone(), state: t.state.clone() })?;
    Ok((name, nta, q))
}

fn show_graph(g: &TreeGraph) -> String {
    match g.to_finite() {
        Some(t) => t.to_string(),
        None => g.to_string(),
    }
}

fn automaton_lines(nta: &ParityNta, start: usize) -> Vec<String> {
    let mut v: Vec<String> = nta.to_string().lines().map(str::to_string).collect();
    v.push(format!("start {}", nta.state_name(start)));
    v
}

fn automaton_json(nta: &ParityNta, start: usize) -> Value {
    json!({ "text": nta.to_string(), "start": nta.state_name(start), "states": nta.num_states() })
}

fn profile_json(ctx: &ProfileContext, pi: &Profile) -> Value {
    json!(ctx.format_profile(pi))
}

fn profile_text(ctx: &ProfileContext, pi: &Profile) -> String {
    if pi.is_empty() {
        "{}".into()
    } else {
        format!("{{ {} }}", ctx.format_profile(pi).join(", "))
    }
}

fn yes_no(yes: bool) -> i32 {
    if yes {
        0
    } else {
        1
    }
}

fn execute(cli: &Cli) -> Result<Report> {
    let budget = cli.budget();
    match &cli.verb {
        Verb::Member { target, tree, graph } => {
            let doc = load(&target.file)?;
            let (name, nta, q) = pick(&doc, target)?;
            let (input, member) = match (tree, graph) {
                (Some(t), None) => {
                    let t = FiniteTree::parse(t)?;
                    (t.to_string(), nta.member_finite(&t, q))
                }
                (None, Some(g)) => {
                    let g = doc.graph(g)?;
                    (show_graph(g), nta.member_rational(g, q))
                }
                _ => return Err(Error::Semantic("give --tree or --graph".into())),
            };
            let word = if member { "member" } else { "not member" };
            Ok(Report {
                lines: vec![word.into()],
                json: json!({ "verb": "member", "automaton": name, "tree": input, "result": word }),
                exit: yes_no(member),
            })
        }
        Verb::Empty { target } => {
            let doc = load(&target.file)?;
            let (name, nta, q) = pick(&doc, target)?;
            match nta.witness(q) {
                None => Ok(Report {
                    lines: vec!["empty".into()],
                    json: json!({ "verb": "empty", "automaton": name, "result": "empty" }),
                    exit: 0,
                }),
                Some(w) => Ok(Report {
                    lines: vec!["nonempty".into(), format!("witness {}", show_graph(&w))],
                    json: json!({ "verb": "empty", "automaton": name, "result": "nonempty", "witness": show_graph(&w) }),
                    exit: 1,
                }),
            }
        }
        Verb::Complement { target } => {
            let doc = load(&target.file)?;
            let (name, nta, q) = pick(&doc, target)?;
            let (c, s) = nta.complement(q, &budget)?;
            Ok(Report {
                lines: automaton_lines(&c, s),
                json: json!({ "verb": "complement", "automaton": name, "result": automaton_json(&c, s) }),
                exit: 0,
            })
        }
        Verb::Profiles { target, holes } => {
            let doc = load(&target.file)?;
            let (name, nta, q) = pick(&doc, target)?;
            let (base, _) = nta.trim(q);
            let ctx = ProfileContext::new(&base, *holes)?;
            let set = ctx.realizable_profiles(&budget)?;
            let mut lines = vec![format!("{} profiles", set.len())];
            let mut items = Vec::new();
            for (k, rp) in set.iter().enumerate() {
                lines.push(format!("profile {k}: witness {}", show_graph(&rp.witness)));
                for t in ctx.format_profile(&rp.profile) {
                    lines.push(format!("  {t}"));
                }
                items.push(json!({
                    "witness": show_graph(&rp.witness),
                    "proper": rp.proper,
                    "tasks": profile_json(&ctx, &rp.profile),
                }));
            }
            Ok(Report { lines, json: json!({ "verb": "profiles", "automaton": name, "result": items }), exit: 0 })
        }
        Verb::Saturate { target, subst: s } => {
            let doc = load(&target.file)?;
            let (name, nta, q) = pick(&doc, target)?;
            let sigma = doc.substitution(s)?;
            let (base, _) = nta.trim(q);
            let ctx = ProfileContext::new(&base, sigma.max_rank())?;
            let sat = subst::saturate(&sigma, &ctx, &budget)?;
            let mut lines = Vec::new();
            let mut out = BTreeMap::new();
            for (x, set) in sat.classes() {
                lines.push(format!("{x}: {} profiles", set.len()));
                for pi in set {
                    lines.push(format!("  {}", profile_text(&ctx, pi)));
                }
                out.insert(x.to_string(), set.iter().map(|pi| profile_json(&ctx, pi)).collect::<Vec<_>>());
            }
            Ok(Report { lines, json: json!({ "verb": "saturate", "automaton": name, "result": out }), exit: 0 })
        }
        Verb::Specialize { target, subst: s } => {
            let doc = load(&target.file)?;
            let (name, nta, q) = pick(&doc, target)?;
            let sigma = doc.substitution(s)?;
            let (base, _) = nta.trim(q);
            let ctx = ProfileContext::new(&base, sigma.max_rank())?;
            let (ext, spec) = subst::specialize(&sigma, &ctx, &budget)?;
            let extra: Vec<String> = ext
                .alphabet()
                .iter()
                .filter(|s| !ctx.sigma().contains(s))
                .map(regmatch::nta::symbol_decl)
                .collect();
            let mut lines = vec![format!("extended {}", extra.join(" "))];
            let mut out = BTreeMap::new();
            for (x, _) in spec.iter() {
                let ts: Vec<String> = spec.explicit_trees(x)?.iter().map(|t| t.to_string()).collect();
                lines.push(format!("{x} = {}", ts.join(", ")));
                out.insert(x.to_string(), ts);
            }
            Ok(Report {
                lines,
                json: json!({ "verb": "specialize", "automaton": name, "extended": extra, "result": out }),
                exit: 0,
            })
        }
        Verb::InverseImage { target, subst: s } => {
            let doc = load(&target.file)?;
            let (name, nta, q) = pick(&doc, target)?;
            let sigma = doc.substitution(s)?;
            let (a, start) = subst::inverse_image_nta(&sigma, &nta, q, &budget)?;
            Ok(Report {
                lines: automaton_lines(&a, start),
                json: json!({ "verb": "inverse-image", "automaton": name, "result": automaton_json(&a, start) }),
                exit: 0,
            })
        }
        Verb::Solve { file, profiles_only } => {
            let doc = load(file)?;
            let inst = doc.matching_instance()?;
            let solver = Solver::new(inst, &budget)?;
            let res = solver.solve(&budget)?;
            solutions_report("solve", &solver, &res, *profiles_only, &budget)
        }
        Verb::SolveNonempty { file, profiles_only } => {
            let doc = load(file)?;
            let p = doc.problem.as_ref().ok_or_else(|| Error::Semantic("the document has no problem block".into()))?;
            let vars: Vec<Symbol> =
                if doc.vars.is_empty() { doc.substitution(&p.sigma2)?.vars().cloned().collect() } else { doc.vars.clone() };
            let l = doc.automaton(&p.l)?;
            let r = doc.automaton(&p.r)?;
            let res = solver::solve_nonempty(l.clone(), r.clone(), &vars, &budget)?;
            // The image automata come from the same unbounded instance.
            let mut sigma2 = Substitution::new();
            let sigma: Vec<Symbol> = nonvar_symbols(&l.0, &r.0, &vars);
            for x in &vars {
                let (nta, state) = solver::full_image(&sigma, x.rank());
                sigma2.insert(x.clone(), subst::Lang::Regular { nta, state })?;
            }
            let solver = Solver::new(MatchingInstance { l, r, sigma1: Substitution::new(), sigma2 }, &budget)?;
            solutions_report("solve-nonempty", &solver, &res, *profiles_only, &budget)
        }
        Verb::Check { file, subst: s } => {
            let doc = load(file)?;
            let mut inst = doc.matching_instance()?;
            let sigma = doc.substitution(s)?;
            inst.sigma1 = sigma.clone();
            inst.sigma2 = sigma;
            let solver = Solver::new(inst, &budget)?;
            let ok = solver.check(solver.forced(), &budget)?;
            let word = if ok { "holds" } else { "fails" };
            Ok(Report {
                lines: vec![word.into()],
                json: json!({ "verb": "check", "substitution": s, "result": word }),
                exit: yes_no(ok),
            })
        }
        Verb::WordSolve { file } => {
            let doc = load(file)?;
            let (inst, rel) = doc.word_instance()?;
            let res = words::solve_word_matching(&inst, rel, &budget)?;
            let rel_name = if rel == Relation::Subset { "subset" } else { "equal" };
            let mut lines = vec![
                if res.decision { "solution exists" } else { "no solution" }.to_string(),
                format!("relation {rel_name}"),
                format!("monoid size {}", res.monoid_size),
                format!("candidates checked {}", res.candidates_checked),
                format!("{} maximal solutions", res.maximal.len()),
            ];
            let mut sols = Vec::new();
            for (k, sol) in res.maximal.iter().enumerate() {
                lines.push(format!("solution {k}"));
                let mut imgs = BTreeMap::new();
                for (x, m) in &sol.images {
                    lines.push(format!("  {x}:"));
                    lines.extend(m.to_string().lines().map(|l| format!("    {l}")));
                    imgs.insert(x.clone(), m.to_string());
                }
                sols.push(json!(imgs));
            }
            Ok(Report {
                lines,
                json: json!({
                    "verb": "word-solve",
                    "result": if res.decision { "solution exists" } else { "no solution" },
                    "relation": rel_name,
                    "monoid_size": res.monoid_size,
                    "candidates_checked": res.candidates_checked,
                    "maximal": sols,
                }),
                exit: yes_no(res.decision),
            })
        }
        Verb::EvalIo { file, subst: s, tree } | Verb::EvalOi { file, subst: s, tree } => {
            let io = matches!(cli.verb, Verb::EvalIo { .. });
            let doc = load(file)?;
            let sigma = doc.substitution(s)?;
            let t = FiniteTree::parse(tree)?;
            let set = if io { subst::eval_io_finite(&sigma, &t)? } else { subst::eval_oi_finite(&sigma, &t)? };
            let ts: Vec<String> = set.iter().map(|t| t.to_string()).collect();
            let mut lines = vec![format!("{} trees", ts.len())];
            lines.extend(ts.iter().cloned());
            Ok(Report {
                lines,
                json: json!({ "verb": if io { "eval-io" } else { "eval-oi" }, "tree": t.to_string(), "result": ts }),
                exit: 0,
            })
        }
    }
}

fn nonvar_symbols(l: &ParityNta, r: &ParityNta, vars: &[Symbol]) -> Vec<Symbol> {
    let mut s: std::collections::BTreeSet<Symbol> =
        r.alphabet().iter().filter(|s| matches!(s, Symbol::Named(..))).cloned().collect();
    s.extend(l.alphabet().iter().filter(|s| !vars.contains(s)).cloned());
    s.into_iter().collect()
}

fn solutions_report(
    verb: &str,
    solver: &Solver,
    res: &SolutionSet,
    profiles_only: bool,
    budget: &Budget,
) -> Result<Report> {
    let ctx = solver.context();
    let result = if res.decision { "solution exists" } else { "no solution" };
    let mut lines = vec![
        result.to_string(),
        format!("candidates checked {}", res.candidates_checked),
        format!("{} maximal solutions", res.maximal.len()),
    ];
    let mut sols = Vec::new();
    for (k, sol) in res.maximal.iter().enumerate() {
        lines.push(format!("solution {k}"));
        let mut vars = BTreeMap::new();
        for (x, set) in &sol.profiles {
            lines.push(format!("  {x}: {} profiles", set.len()));
            let mut entry = json!({ "profiles": set.iter().map(|pi| profile_json(ctx, pi)).collect::<Vec<_>>() });
            if let Some(ex) = &sol.explicit {
                let ts: Vec<String> = ex.explicit_trees(x)?.iter().map(|t| t.to_string()).collect();
                lines.push(if ts.is_empty() { "    no trees".into() } else { format!("    trees {}", ts.join(", ")) });
                entry["trees"] = json!(ts);
            }
            if !profiles_only {
                let (a, s) = solver.image_automaton(sol, x, budget)?;
                let (a, s) = a.trim(s);
                lines.extend(automaton_lines(&a, s).into_iter().map(|l| format!("    {l}")));
                entry["automaton"] = automaton_json(&a, s);
            }
            vars.insert(x.to_string(), entry);
        }
        sols.push(json!(vars));
    }
    Ok(Report {
        lines,
        json: json!({
            "verb": verb,
            "result": result,
            "candidates_checked": res.candidates_checked,
            "maximal": sols,
        }),
        exit: yes_no(res.decision),
    })
}
