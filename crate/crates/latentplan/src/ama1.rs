//! Oracular action-model acquisition: compiles a set of encoded bitvector
//! transitions into a grounded unit-cost STRIPS problem, one action per
//! distinct transition, and emits/parses the PDDL rendering.

use std::collections::BTreeSet;
use std::fmt;

use crate::bits::LatentBitVector;
use crate::error::{Error, Result};

/// One polarity literal over a latent bit, rendered `b{j}-true` or
/// `b{j}-false`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Proposition {
    pub bit: usize,
    pub polarity: bool,
}

impl fmt::Display for Proposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}-{}", self.bit, if self.polarity { "true" } else { "false" })
    }
}

/// Grounded action with a full-state precondition; effects cover exactly
/// the bits that change. Cost is always 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundAction {
    pub id: u32,
    pub pre: LatentBitVector,
    pub add: Vec<Proposition>,
    pub del: Vec<Proposition>,
}

impl GroundAction {
    pub fn from_transition(id: u32, s: &LatentBitVector, t: &LatentBitVector) -> Result<Self> {
        let mut add = Vec::new();
        let mut del = Vec::new();
        for j in s.diff_indices(t)? {
            add.push(Proposition { bit: j, polarity: t.get(j) });
            del.push(Proposition { bit: j, polarity: s.get(j) });
        }
        Ok(GroundAction { id, pre: s.clone(), add, del })
    }

    pub fn cost(&self) -> u32 {
        1
    }

    /// An action compiled from a transition with `s == t`.
    pub fn is_self_loop(&self) -> bool {
        self.add.is_empty() && self.del.is_empty()
    }

    /// The successor this action produces from its own precondition state.
    pub fn post(&self) -> LatentBitVector {
        let mut t = self.pre.clone();
        for p in &self.add {
            t.set(p.bit, p.polarity);
        }
        t
    }

    pub fn name(&self) -> String {
        format!("a{}", self.id)
    }
}

#[derive(Debug, Clone, Default)]
pub struct StripsProblem {
    pub num_bits: usize,
    pub actions: Vec<GroundAction>,
    pub init: Option<LatentBitVector>,
    pub goal: Option<LatentBitVector>,
}

impl StripsProblem {
    /// The 2N propositions, one polarity pair per bit.
    pub fn propositions(&self) -> Vec<Proposition> {
        let mut out = Vec::with_capacity(2 * self.num_bits);
        for bit in 0..self.num_bits {
            out.push(Proposition { bit, polarity: true });
            out.push(Proposition { bit, polarity: false });
        }
        out
    }

    pub fn set_instance(&mut self, init: LatentBitVector, goal: LatentBitVector) -> Result<()> {
        for v in [&init, &goal] {
            if v.len() != self.num_bits {
                return Err(Error::Length { expected: self.num_bits, actual: v.len() });
            }
        }
        self.init = Some(init);
        self.goal = Some(goal);
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct CompileStats {
    pub input_transitions: usize,
    pub distinct_transitions: usize,
    pub self_loop_ids: Vec<u32>,
}

/// Compiles transitions into one grounded action per distinct pair.
/// Duplicates collapse; output order is canonical (sorted by (s, t)).
/// Self-loop transitions are emitted but flagged in the stats.
pub fn compile(transitions: &[(LatentBitVector, LatentBitVector)]) -> Result<(StripsProblem, CompileStats)> {
    if transitions.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = transitions[0].0.len();
    for (s, t) in transitions {
        if s.len() != n || t.len() != n {
            return Err(Error::Length { expected: n, actual: s.len().min(t.len()) });
        }
    }
    let distinct: BTreeSet<(LatentBitVector, LatentBitVector)> =
        transitions.iter().cloned().collect();
    let mut actions = Vec::with_capacity(distinct.len());
    let mut self_loop_ids = Vec::new();
    for (id, (s, t)) in distinct.iter().enumerate() {
        let action = GroundAction::from_transition(id as u32, s, t)?;
        if action.is_self_loop() {
            self_loop_ids.push(action.id);
        }
        actions.push(action);
    }
    let stats = CompileStats {
        input_transitions: transitions.len(),
        distinct_transitions: actions.len(),
        self_loop_ids,
    };
    Ok((
        StripsProblem { num_bits: n, actions, init: None, goal: None },
        stats,
    ))
}

/// Applies `action` to `s`: requires `s` to satisfy the precondition, then
/// returns `(s \ del) + add`.
pub fn step(s: &LatentBitVector, action: &GroundAction) -> Result<LatentBitVector> {
    if s.len() != action.pre.len() {
        return Err(Error::Length { expected: action.pre.len(), actual: s.len() });
    }
    // full-state precondition: s must assert every literal of pre
    if *s != action.pre {
        return Err(Error::Inapplicable { action: action.id });
    }
    let mut t = s.clone();
    for p in &action.del {
        // deleting a polarity literal leaves the bit awaiting its add
        debug_assert_eq!(t.get(p.bit), p.polarity);
        let _ = p;
    }
    for p in &action.add {
        t.set(p.bit, p.polarity);
    }
    Ok(t)
}

// ── PDDL emission ──────────────────────────────────────────────────────

fn state_literals(v: &LatentBitVector) -> impl Iterator<Item = Proposition> + '_ {
    (0..v.len()).map(|bit| Proposition { bit, polarity: v.get(bit) })
}

/// Renders the domain and problem files. Byte-deterministic: lowercase
/// symbols, two-space indent, actions in id order.
pub fn emit_pddl(problem: &StripsProblem, domain_name: &str, problem_name: &str) -> Result<(String, String)> {
    let (init, goal) = match (&problem.init, &problem.goal) {
        (Some(i), Some(g)) => (i, g),
        _ => return Err(Error::MissingInitGoal),
    };
    let domain_name = domain_name.to_lowercase();
    let problem_name = problem_name.to_lowercase();

    let mut d = String::new();
    d.push_str(&format!("(define (domain {domain_name})\n"));
    d.push_str("  (:requirements :strips)\n");
    d.push_str("  (:predicates\n");
    for p in problem.propositions() {
        d.push_str(&format!("    ({p})\n"));
    }
    d.push_str("  )\n");
    for a in &problem.actions {
        d.push_str(&format!("  (:action {}\n", a.name()));
        d.push_str("    :parameters ()\n");
        d.push_str("    :precondition (and");
        for p in state_literals(&a.pre) {
            d.push_str(&format!(" ({p})"));
        }
        d.push_str(")\n");
        d.push_str("    :effect (and");
        for (add, del) in a.add.iter().zip(&a.del) {
            d.push_str(&format!(" ({add}) (not ({del}))"));
        }
        d.push_str(")\n");
        d.push_str("  )\n");
    }
    d.push_str(")\n");

    let mut p = String::new();
    p.push_str(&format!("(define (problem {problem_name})\n"));
    p.push_str(&format!("  (:domain {domain_name})\n"));
    p.push_str("  (:init\n");
    for lit in state_literals(init) {
        p.push_str(&format!("    ({lit})\n"));
    }
    p.push_str("  )\n");
    p.push_str("  (:goal (and");
    for lit in state_literals(goal) {
        p.push_str(&format!(" ({lit})"));
    }
    p.push_str("))\n");
    p.push_str(")\n");

    Ok((d, p))
}

// ── PDDL parsing ───────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Sym(String),
    List(Vec<Sexp>),
}

fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let mut in_comment = false;
    for c in text.chars() {
        if in_comment {
            if c == '\n' {
                in_comment = false;
            }
            continue;
        }
        match c {
            ';' => in_comment = true,
            '(' | ')' => {
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
                tokens.push(c.to_string());
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c.to_ascii_lowercase()),
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

fn parse_sexp(tokens: &[String], pos: &mut usize) -> Result<Sexp> {
    if *pos >= tokens.len() {
        return Err(Error::Format("unexpected end of PDDL input".into()));
    }
    let tok = &tokens[*pos];
    *pos += 1;
    if tok == "(" {
        let mut items = Vec::new();
        loop {
            if *pos >= tokens.len() {
                return Err(Error::Format("unbalanced parenthesis in PDDL".into()));
            }
            if tokens[*pos] == ")" {
                *pos += 1;
                return Ok(Sexp::List(items));
            }
            items.push(parse_sexp(tokens, pos)?);
        }
    } else if tok == ")" {
        Err(Error::Format("unexpected ')' in PDDL".into()))
    } else {
        Ok(Sexp::Sym(tok.clone()))
    }
}

fn parse_top(text: &str) -> Result<Sexp> {
    let tokens = tokenize(text);
    let mut pos = 0;
    let sexp = parse_sexp(&tokens, &mut pos)?;
    if pos != tokens.len() {
        return Err(Error::Format("trailing tokens after PDDL form".into()));
    }
    Ok(sexp)
}

fn sym(s: &Sexp) -> Result<&str> {
    match s {
        Sexp::Sym(x) => Ok(x),
        _ => Err(Error::Format("expected symbol".into())),
    }
}

fn list(s: &Sexp) -> Result<&[Sexp]> {
    match s {
        Sexp::List(x) => Ok(x),
        _ => Err(Error::Format("expected list".into())),
    }
}

fn parse_prop(s: &Sexp) -> Result<Proposition> {
    let items = list(s)?;
    if items.len() != 1 {
        return Err(Error::Format("propositions take no arguments".into()));
    }
    let name = sym(&items[0])?;
    let (bit_str, polarity) = if let Some(b) = name.strip_suffix("-true") {
        (b, true)
    } else if let Some(b) = name.strip_suffix("-false") {
        (b, false)
    } else {
        return Err(Error::Format(format!("unrecognized proposition {name}")));
    };
    let bit: usize = bit_str
        .strip_prefix('b')
        .and_then(|d| d.parse().ok())
        .ok_or_else(|| Error::Format(format!("unrecognized proposition {name}")))?;
    Ok(Proposition { bit, polarity })
}

fn literals_to_state(lits: &[Proposition], num_bits: usize) -> Result<LatentBitVector> {
    let mut assigned = vec![false; num_bits];
    let mut v = LatentBitVector::zeros(num_bits);
    for p in lits {
        if p.bit >= num_bits {
            return Err(Error::Format(format!("bit {} out of range", p.bit)));
        }
        if assigned[p.bit] {
            return Err(Error::Format(format!("bit {} assigned twice", p.bit)));
        }
        assigned[p.bit] = true;
        v.set(p.bit, p.polarity);
    }
    if assigned.iter().any(|a| !a) {
        return Err(Error::Format("assignment does not cover every bit".into()));
    }
    Ok(v)
}

/// Parses a domain/problem pair emitted by `emit_pddl` back into a
/// `StripsProblem`. Preconditions must be full assignments.
pub fn parse_pddl(domain_text: &str, problem_text: &str) -> Result<StripsProblem> {
    let dom = parse_top(domain_text)?;
    let items = list(&dom)?;
    if items.is_empty() || sym(&items[0])? != "define" {
        return Err(Error::Format("domain file must start with (define ...)".into()));
    }

    let mut num_bits = 0usize;
    let mut raw_actions: Vec<(Vec<Proposition>, Vec<Proposition>, Vec<Proposition>)> = Vec::new();

    for item in &items[1..] {
        let parts = list(item)?;
        if parts.is_empty() {
            continue;
        }
        match sym(&parts[0])? {
            ":predicates" => {
                for p in &parts[1..] {
                    let prop = parse_prop(p)?;
                    num_bits = num_bits.max(prop.bit + 1);
                }
            }
            ":action" => {
                let mut pre = Vec::new();
                let mut add = Vec::new();
                let mut del = Vec::new();
                let mut i = 2; // skip ":action" and its name
                while i < parts.len() {
                    match sym(&parts[i])? {
                        ":parameters" => i += 2,
                        ":precondition" => {
                            let conj = list(&parts[i + 1])?;
                            if conj.is_empty() || sym(&conj[0])? != "and" {
                                return Err(Error::Format("precondition must be (and ...)".into()));
                            }
                            for lit in &conj[1..] {
                                pre.push(parse_prop(lit)?);
                            }
                            i += 2;
                        }
                        ":effect" => {
                            let conj = list(&parts[i + 1])?;
                            if conj.is_empty() || sym(&conj[0])? != "and" {
                                return Err(Error::Format("effect must be (and ...)".into()));
                            }
                            for lit in &conj[1..] {
                                let ls = list(lit)?;
                                if !ls.is_empty() && matches!(&ls[0], Sexp::Sym(s) if s == "not") {
                                    del.push(parse_prop(&ls[1])?);
                                } else {
                                    add.push(parse_prop(lit)?);
                                }
                            }
                            i += 2;
                        }
                        other => {
                            return Err(Error::Format(format!("unsupported action field {other}")))
                        }
                    }
                }
                raw_actions.push((pre, add, del));
            }
            _ => {}
        }
    }

    let mut actions = Vec::with_capacity(raw_actions.len());
    for (id, (pre, add, del)) in raw_actions.into_iter().enumerate() {
        let pre_state = literals_to_state(&pre, num_bits)?;
        let mut add = add;
        let mut del = del;
        add.sort();
        del.sort();
        actions.push(GroundAction { id: id as u32, pre: pre_state, add, del });
    }
    // normalize effect order to match the compiler's ascending-bit layout
    for a in &mut actions {
        a.add.sort_by_key(|p| p.bit);
        a.del.sort_by_key(|p| p.bit);
    }

    let prob = parse_top(problem_text)?;
    let pitems = list(&prob)?;
    let mut init = None;
    let mut goal = None;
    for item in &pitems[1..] {
        let parts = list(item)?;
        if parts.is_empty() {
            continue;
        }
        match sym(&parts[0])? {
            ":init" => {
                let lits: Result<Vec<Proposition>> = parts[1..].iter().map(parse_prop).collect();
                init = Some(literals_to_state(&lits?, num_bits)?);
            }
            ":goal" => {
                let conj = list(&parts[1])?;
                if conj.is_empty() || sym(&conj[0])? != "and" {
                    return Err(Error::Format("goal must be (and ...)".into()));
                }
                let lits: Result<Vec<Proposition>> = conj[1..].iter().map(parse_prop).collect();
                goal = Some(literals_to_state(&lits?, num_bits)?);
            }
            _ => {}
        }
    }

    Ok(StripsProblem { num_bits, actions, init, goal })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bv(s: &str) -> LatentBitVector {
        s.parse().unwrap()
    }

    #[test]
    fn compile_example_transition() {
        // s=101, t=001: only bit 0 changes, from true to false
        let (prob, stats) = compile(&[(bv("101"), bv("001"))]).unwrap();
        assert_eq!(prob.num_bits, 3);
        assert_eq!(prob.actions.len(), 1);
        let a = &prob.actions[0];
        assert_eq!(a.pre, bv("101"));
        assert_eq!(a.add, vec![Proposition { bit: 0, polarity: false }]);
        assert_eq!(a.del, vec![Proposition { bit: 0, polarity: true }]);
        assert!(stats.self_loop_ids.is_empty());
        // exactly one polarity each per bit in the proposition set
        assert_eq!(prob.propositions().len(), 6);
    }

    #[test]
    fn self_loops_are_emitted_but_flagged() {
        let (prob, stats) = compile(&[(bv("11"), bv("11")), (bv("11"), bv("10"))]).unwrap();
        assert_eq!(prob.actions.len(), 2);
        assert_eq!(stats.self_loop_ids.len(), 1);
        let loop_action = &prob.actions[stats.self_loop_ids[0] as usize];
        assert!(loop_action.is_self_loop());
        // applying the self-loop yields the same state
        assert_eq!(step(&bv("11"), loop_action).unwrap(), bv("11"));
    }

    #[test]
    fn duplicates_are_deduplicated() {
        let t = (bv("10"), bv("11"));
        let (prob, stats) = compile(&[t.clone(), t.clone(), t]).unwrap();
        assert_eq!(prob.actions.len(), 1);
        assert_eq!(stats.input_transitions, 3);
        assert_eq!(stats.distinct_transitions, 1);
    }

    #[test]
    fn step_applies_effects() {
        let (prob, _) = compile(&[(bv("101"), bv("001"))]).unwrap();
        let a = &prob.actions[0];
        assert_eq!(step(&bv("101"), a).unwrap(), bv("001"));
        // inapplicable state gives the dedicated error
        assert!(matches!(
            step(&bv("111"), a),
            Err(Error::Inapplicable { .. })
        ));
        // malformed input is a different error
        assert!(matches!(step(&bv("10"), a), Err(Error::Length { .. })));
    }

    #[test]
    fn step_reproduces_every_compiled_transition() {
        // exhaustive soundness over a batch of random transitions
        let mut rng = crate::ndcore::rng::RngStream::new(99);
        let mut transitions = Vec::new();
        for _ in 0..200 {
            let s = LatentBitVector::from_bools(
                &(0..8).map(|_| rng.uniform() < 0.5).collect::<Vec<_>>(),
            );
            let mut t = s.clone();
            for j in 0..8 {
                if rng.uniform() < 0.25 {
                    t.flip(j);
                }
            }
            transitions.push((s, t));
        }
        let (prob, _) = compile(&transitions).unwrap();
        for a in &prob.actions {
            assert_eq!(step(&a.pre, a).unwrap(), a.post());
            assert!(transitions.iter().any(|(s, t)| *s == a.pre && *t == a.post()));
        }
        // completeness over input: every input transition is one step away
        for (s, t) in &transitions {
            assert!(prob
                .actions
                .iter()
                .any(|a| a.pre == *s && a.post() == *t));
        }
    }

    #[test]
    fn effect_conjunct_renders_exactly() {
        let (mut prob, _) = compile(&[(bv("1"), bv("0"))]).unwrap();
        prob.set_instance(bv("1"), bv("0")).unwrap();
        let (d, _) = emit_pddl(&prob, "latent", "inst").unwrap();
        assert!(
            d.contains(":effect (and (b0-false) (not (b0-true)))"),
            "{d}"
        );
    }

    #[test]
    fn empty_action_set_emits_valid_domain() {
        let mut prob = StripsProblem { num_bits: 2, ..Default::default() };
        prob.set_instance(bv("00"), bv("00")).unwrap();
        let (d, p) = emit_pddl(&prob, "latent", "inst").unwrap();
        assert!(d.contains("(:requirements :strips)"));
        let back = parse_pddl(&d, &p).unwrap();
        assert_eq!(back.actions.len(), 0);
        assert_eq!(back.num_bits, 2);
    }

    #[test]
    fn missing_init_goal_is_an_error() {
        let (prob, _) = compile(&[(bv("10"), bv("11"))]).unwrap();
        assert!(matches!(
            emit_pddl(&prob, "d", "p"),
            Err(Error::MissingInitGoal)
        ));
    }

    #[test]
    fn emitted_text_reparses_to_the_same_problem() {
        let mut rng = crate::ndcore::rng::RngStream::new(5);
        let mut transitions = Vec::new();
        for _ in 0..40 {
            let s = LatentBitVector::from_bools(
                &(0..6).map(|_| rng.uniform() < 0.5).collect::<Vec<_>>(),
            );
            let mut t = s.clone();
            t.flip(rng.below(6));
            transitions.push((s, t));
        }
        let (mut prob, _) = compile(&transitions).unwrap();
        prob.set_instance(transitions[0].0.clone(), transitions[3].1.clone()).unwrap();
        let (d, p) = emit_pddl(&prob, "latent", "roundtrip").unwrap();
        let back = parse_pddl(&d, &p).unwrap();
        assert_eq!(back.num_bits, prob.num_bits);
        assert_eq!(back.init, prob.init);
        assert_eq!(back.goal, prob.goal);
        assert_eq!(back.actions.len(), prob.actions.len());
        for (a, b) in prob.actions.iter().zip(&back.actions) {
            assert_eq!(a, b);
        }
        // emission is byte-deterministic
        let (d2, p2) = emit_pddl(&prob, "latent", "roundtrip").unwrap();
        assert_eq!(d, d2);
        assert_eq!(p, p2);
    }
}
