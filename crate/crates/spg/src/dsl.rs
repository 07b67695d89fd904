//! Concept DSL: abstract syntax, interpreter, plan representation, and the
//! growing concept library.
//!
//! Programs are loop-form: affine size expressions, bounded loop nesting, and
//! an epilogue trim that drops a trailing suffix of the body on the final
//! iteration (standing in for final-iteration conditionals). Concept calls
//! save and restore the head position, so a sub-structure can be built
//! mid-program without disturbing the caller's cursor.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpgError};
use crate::world::{Direction, ExecContext, Pose, PrimitiveAction, Scene};

/// Affine size expression c0 + c1·n + c2·i, with n the concept's size
/// parameter and i the innermost enclosing loop index (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SizeExpr {
    pub c0: i64,
    pub c1: i64,
    pub c2: i64,
}

impl SizeExpr {
    pub fn constant(c0: i64) -> SizeExpr {
        SizeExpr { c0, c1: 0, c2: 0 }
    }

    pub fn affine(c0: i64, c1: i64, c2: i64) -> SizeExpr {
        SizeExpr { c0, c1, c2 }
    }

    pub fn value(&self, n: i64, i: i64) -> i64 {
        self.c0 + self.c1 * n + self.c2 * i
    }
}

/// Primitive statement ops (the subset of world actions programs may emit;
/// `assign_head` is a planner-only action and has no DSL form).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PrimOp {
    Move(Direction),
    Keep,
    Store,
    Reset,
}

impl PrimOp {
    pub fn to_action(self) -> PrimitiveAction {
        match self {
            PrimOp::Move(d) => PrimitiveAction::MoveHead(d),
            PrimOp::Keep => PrimitiveAction::KeepAtHead,
            PrimOp::Store => PrimitiveAction::StoreHead,
            PrimOp::Reset => PrimitiveAction::ResetHead,
        }
    }
}

/// Program statement.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Stmt {
    Prim(PrimOp),
    Call { concept: String, size: SizeExpr },
    Loop { count: SizeExpr, body: Vec<Stmt>, trim: usize },
}

/// A named, size-parametric concept definition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub name: String,
    pub size_param: String,
    pub body: Vec<Stmt>,
}

/// One grounded plan step: a primitive, or a whole library concept executed
/// at a concrete size.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PlanStep {
    Prim(PrimOp),
    Macro { concept: String, size: i64 },
}

pub type Plan = Vec<PlanStep>;

/// Ordered store of concepts, topologically sorted by dependency.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConceptLibrary {
    programs: Vec<Program>,
    index: BTreeMap<String, usize>,
}

impl ConceptLibrary {
    pub fn new() -> ConceptLibrary {
        ConceptLibrary::default()
    }

    pub fn get(&self, name: &str) -> Result<&Program> {
        self.index
            .get(name)
            .map(|&i| &self.programs[i])
            .ok_or_else(|| SpgError::UnknownConcept(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Programs in registration (topological) order.
    pub fn programs(&self) -> &[Program] {
        &self.programs
    }

    pub fn len(&self) -> usize {
        self.programs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.programs.is_empty()
    }

    /// Appends a concept, preserving topological order.
    pub fn register_concept(&mut self, program: Program) -> Result<()> {
        if self.index.contains_key(&program.name) {
            return Err(SpgError::DuplicateConcept(program.name.clone()));
        }
        for dep in called_concepts(&program.body) {
            if !self.index.contains_key(&dep) {
                return Err(SpgError::UnresolvedDependency(program.name.clone(), dep));
            }
        }
        self.index.insert(program.name.clone(), self.programs.len());
        self.programs.push(program);
        Ok(())
    }
}

fn called_concepts(body: &[Stmt]) -> Vec<String> {
    let mut out = Vec::new();
    fn walk(stmts: &[Stmt], out: &mut Vec<String>) {
        for s in stmts {
            match s {
                Stmt::Call { concept, .. } => {
                    if !out.contains(concept) {
                        out.push(concept.clone());
                    }
                }
                Stmt::Loop { body, .. } => walk(body, out),
                Stmt::Prim(_) => {}
            }
        }
    }
    walk(body, &mut out);
    out
}

/// Expands a program at size `n` down to primitives. Loops are unrolled with
/// the epilogue trim dropping the last `trim` statements of the final
/// iteration; each concept call is bracketed by store/reset so the callee
/// leaves the caller's head untouched.
pub fn unroll(program: &Program, n: i64, library: &ConceptLibrary) -> Result<Vec<PrimOp>> {
    if n < 1 {
        return Err(SpgError::DegenerateSize(n));
    }
    let mut out = Vec::new();
    unroll_body(&program.body, n, &mut Vec::new(), library, &mut out)?;
    Ok(out)
}

fn unroll_body(
    stmts: &[Stmt],
    n: i64,
    loop_stack: &mut Vec<i64>,
    library: &ConceptLibrary,
    out: &mut Vec<PrimOp>,
) -> Result<()> {
    let idx = |stack: &Vec<i64>| stack.last().copied().unwrap_or(0);
    for stmt in stmts {
        match stmt {
            Stmt::Prim(p) => out.push(*p),
            Stmt::Call { concept, size } => {
                let sz = size.value(n, idx(loop_stack));
                if sz < 1 {
                    return Err(SpgError::DegenerateSize(sz));
                }
                let callee = library.get(concept)?;
                out.push(PrimOp::Store);
                unroll(callee, sz, library).map(|prims| out.extend(prims))?;
                out.push(PrimOp::Reset);
            }
            Stmt::Loop { count, body, trim } => {
                let c = count.value(n, idx(loop_stack));
                if c < 0 {
                    return Err(SpgError::DegenerateSize(c));
                }
                for it in 0..c {
                    let last = it == c - 1;
                    let upto = if last { body.len() - trim } else { body.len() };
                    loop_stack.push(it);
                    unroll_body(&body[..upto], n, loop_stack, library, out)?;
                    loop_stack.pop();
                }
            }
        }
    }
    Ok(())
}

/// Expands a program at size `n` to a grounded plan: loops are unrolled but
/// concept calls stay as macro steps with their sizes evaluated.
pub fn unroll_to_plan(program: &Program, n: i64) -> Result<Plan> {
    if n < 1 {
        return Err(SpgError::DegenerateSize(n));
    }
    let mut out = Vec::new();
    plan_body(&program.body, n, &mut Vec::new(), &mut out)?;
    Ok(out)
}

fn plan_body(stmts: &[Stmt], n: i64, loop_stack: &mut Vec<i64>, out: &mut Plan) -> Result<()> {
    let idx = |stack: &Vec<i64>| stack.last().copied().unwrap_or(0);
    for stmt in stmts {
        match stmt {
            Stmt::Prim(p) => out.push(PlanStep::Prim(*p)),
            Stmt::Call { concept, size } => {
                let sz = size.value(n, idx(loop_stack));
                if sz < 1 {
                    return Err(SpgError::DegenerateSize(sz));
                }
                out.push(PlanStep::Macro {
                    concept: concept.clone(),
                    size: sz,
                });
            }
            Stmt::Loop { count, body, trim } => {
                let c = count.value(n, idx(loop_stack));
                if c < 0 {
                    return Err(SpgError::DegenerateSize(c));
                }
                for it in 0..c {
                    let last = it == c - 1;
                    let upto = if last { body.len() - trim } else { body.len() };
                    loop_stack.push(it);
                    plan_body(&body[..upto], n, loop_stack, out)?;
                    loop_stack.pop();
                }
            }
        }
    }
    Ok(())
}

/// Expands a grounded plan to primitives (macros bracketed by store/reset).
pub fn expand_plan(plan: &Plan, library: &ConceptLibrary) -> Result<Vec<PrimOp>> {
    let mut out = Vec::new();
    for step in plan {
        match step {
            PlanStep::Prim(p) => out.push(*p),
            PlanStep::Macro { concept, size } => {
                let program = library.get(concept)?;
                out.push(PrimOp::Store);
                out.extend(unroll(program, *size, library)?);
                out.push(PrimOp::Reset);
            }
        }
    }
    Ok(out)
}

/// Whether a primitive sequence is effect-identical to a bare `keep`: it
/// attempts exactly one placement, at the initial head position, and leaves
/// the head where it started. Placement validity and demo-transition
/// consumption then coincide step for step with a single `keep`.
pub fn is_keep_equivalent(prims: &[PrimOp]) -> bool {
    let mut head = (0i64, 0i64, 0i64);
    let mut stack: Vec<(i64, i64, i64)> = Vec::new();
    let mut placements: Vec<(i64, i64, i64)> = Vec::new();
    for p in prims {
        match p {
            PrimOp::Move(d) => {
                let (dx, dy, dz) = d.displacement();
                head = (head.0 + dx as i64, head.1 + dy as i64, head.2 + dz as i64);
            }
            PrimOp::Store => stack.push(head),
            PrimOp::Reset => {
                if let Some(p) = stack.pop() {
                    head = p;
                }
            }
            PrimOp::Keep => placements.push(head),
        }
    }
    placements == [(0, 0, 0)] && head == (0, 0, 0)
}

/// Strictly executes a primitive sequence: any invalid placement aborts with
/// the offending step index. Returns the final context and the keyframe
/// trace (initial scene plus a snapshot after every placement).
pub fn execute_prims(prims: &[PrimOp], mut ctx: ExecContext) -> Result<(ExecContext, Vec<Scene>)> {
    let mut trace = vec![ctx.scene.clone()];
    for (step, p) in prims.iter().enumerate() {
        if let Some(res) = ctx.apply_primitive(p.to_action())? {
            if !res.valid {
                return Err(SpgError::InvalidPlacement(step));
            }
            trace.push(ctx.scene.clone());
        }
    }
    Ok((ctx, trace))
}

/// Strictly executes a program at size `n`.
pub fn execute_program(
    program: &Program,
    n: i64,
    ctx: ExecContext,
    library: &ConceptLibrary,
) -> Result<(ExecContext, Vec<Scene>)> {
    execute_prims(&unroll(program, n, library)?, ctx)
}

/// Strictly executes a grounded plan.
pub fn execute_plan(
    plan: &Plan,
    ctx: ExecContext,
    library: &ConceptLibrary,
) -> Result<(ExecContext, Vec<Scene>)> {
    execute_prims(&expand_plan(plan, library)?, ctx)
}

/// Kinematic (imagined) execution: tracks head motion only and records the
/// head pose at every keep, without physics checks or real blocks. Errors
/// only on head-stack underflow.
pub fn kinematic_placements(prims: &[PrimOp], anchor: Pose) -> Result<Vec<Pose>> {
    let mut head = anchor;
    let mut stack: Vec<Pose> = Vec::new();
    let mut placements = Vec::new();
    for p in prims {
        match p {
            PrimOp::Move(d) => {
                let (dx, dy, dz) = d.displacement();
                head = head.translated(dx, dy, dz);
            }
            PrimOp::Keep => placements.push(head),
            PrimOp::Store => stack.push(head),
            PrimOp::Reset => head = stack.pop().ok_or(SpgError::EmptyHeadStack)?,
        }
    }
    Ok(placements)
}

/// Imagined placement poses of a concept built at size `n` from `anchor`.
pub fn imagined_placements(
    concept: &str,
    n: i64,
    library: &ConceptLibrary,
    anchor: Pose,
) -> Result<Vec<Pose>> {
    let program = library.get(concept)?;
    kinematic_placements(&unroll(program, n, library)?, anchor)
}

/// Number of keeps a program performs at size `n`.
pub fn placement_count(program: &Program, n: i64, library: &ConceptLibrary) -> Result<usize> {
    Ok(unroll(program, n, library)?
        .iter()
        .filter(|p| **p == PrimOp::Keep)
        .count())
}

fn stmt_nodes(stmts: &[Stmt]) -> usize {
    stmts
        .iter()
        .map(|s| match s {
            Stmt::Loop { body, .. } => 1 + stmt_nodes(body),
            _ => 1,
        })
        .sum()
}

/// MDL measure for programs: count of statement nodes.
pub fn description_length_program(program: &Program) -> usize {
    stmt_nodes(&program.body)
}

/// MDL measure for plans: step count.
pub fn description_length_plan(plan: &Plan) -> usize {
    plan.len()
}

// ---------------------------------------------------------------------------
// Canonical text format: s-expressions.
//
//   (def tower (n) (loop n (keep) (move top)))
//   (def staircase (n) (loop n (call tower (+ i 1)) (move right)))
//   (loop (- n 1) :trim 2 ...)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String, usize, usize),
    List(Vec<Sexp>, usize, usize),
}

impl Sexp {
    fn pos(&self) -> (usize, usize) {
        match self {
            Sexp::Atom(_, l, c) | Sexp::List(_, l, c) => (*l, *c),
        }
    }
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> SpgError {
    SpgError::Parse {
        line,
        column,
        message: message.into(),
    }
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Lexer<'a> {
        Lexer {
            chars: text.chars().peekable(),
            line: 1,
            column: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.chars.peek(), Some(c) if c.is_whitespace()) {
            self.bump();
        }
    }

    fn parse_sexp(&mut self) -> Result<Sexp> {
        self.skip_ws();
        let (line, col) = (self.line, self.column);
        match self.chars.peek() {
            None => Err(parse_err(line, col, "unexpected end of input")),
            Some('(') => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    match self.chars.peek() {
                        Some(')') => {
                            self.bump();
                            return Ok(Sexp::List(items, line, col));
                        }
                        None => return Err(parse_err(self.line, self.column, "unclosed '('")),
                        Some(_) => items.push(self.parse_sexp()?),
                    }
                }
            }
            Some(')') => Err(parse_err(line, col, "unexpected ')'")),
            Some(_) => {
                let mut atom = String::new();
                while let Some(&c) = self.chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' {
                        break;
                    }
                    atom.push(c);
                    self.bump();
                }
                Ok(Sexp::Atom(atom, line, col))
            }
        }
    }

    fn at_eof(&mut self) -> bool {
        self.skip_ws();
        self.chars.peek().is_none()
    }
}

fn expr_from_sexp(sexp: &Sexp) -> Result<SizeExpr> {
    match sexp {
        Sexp::Atom(a, line, col) => match a.as_str() {
            "n" => Ok(SizeExpr::affine(0, 1, 0)),
            "i" => Ok(SizeExpr::affine(0, 0, 1)),
            _ => a
                .parse::<i64>()
                .map(SizeExpr::constant)
                .map_err(|_| parse_err(*line, *col, format!("expected number, n, or i; got '{a}'"))),
        },
        Sexp::List(items, line, col) => {
            let head = match items.first() {
                Some(Sexp::Atom(a, ..)) => a.as_str(),
                _ => return Err(parse_err(*line, *col, "expected (+ ...), (- ...), or (* ...)")),
            };
            if items.len() != 3 {
                return Err(parse_err(*line, *col, format!("'{head}' takes two arguments")));
            }
            match head {
                "+" => {
                    let (a, b) = (expr_from_sexp(&items[1])?, expr_from_sexp(&items[2])?);
                    Ok(SizeExpr::affine(a.c0 + b.c0, a.c1 + b.c1, a.c2 + b.c2))
                }
                "-" => {
                    let (a, b) = (expr_from_sexp(&items[1])?, expr_from_sexp(&items[2])?);
                    Ok(SizeExpr::affine(a.c0 - b.c0, a.c1 - b.c1, a.c2 - b.c2))
                }
                "*" => {
                    let k = match &items[1] {
                        Sexp::Atom(a, l, c) => a
                            .parse::<i64>()
                            .map_err(|_| parse_err(*l, *c, "'*' needs a literal coefficient"))?,
                        s => {
                            let (l, c) = s.pos();
                            return Err(parse_err(l, c, "'*' needs a literal coefficient"));
                        }
                    };
                    let e = expr_from_sexp(&items[2])?;
                    Ok(SizeExpr::affine(k * e.c0, k * e.c1, k * e.c2))
                }
                _ => Err(parse_err(*line, *col, format!("unknown operator '{head}'"))),
            }
        }
    }
}

fn stmt_from_sexp(sexp: &Sexp) -> Result<Stmt> {
    let (items, line, col) = match sexp {
        Sexp::List(items, l, c) => (items, *l, *c),
        Sexp::Atom(a, l, c) => return Err(parse_err(*l, *c, format!("expected statement, got '{a}'"))),
    };
    let head = match items.first() {
        Some(Sexp::Atom(a, ..)) => a.as_str(),
        _ => return Err(parse_err(line, col, "expected statement keyword")),
    };
    match head {
        "keep" => Ok(Stmt::Prim(PrimOp::Keep)),
        "store" => Ok(Stmt::Prim(PrimOp::Store)),
        "reset" => Ok(Stmt::Prim(PrimOp::Reset)),
        "move" => match items.get(1) {
            Some(Sexp::Atom(d, l, c)) => Direction::parse(d)
                .map(|d| Stmt::Prim(PrimOp::Move(d)))
                .ok_or_else(|| parse_err(*l, *c, format!("unknown direction '{d}'"))),
            _ => Err(parse_err(line, col, "(move DIR) needs a direction")),
        },
        "call" => {
            if items.len() != 3 {
                return Err(parse_err(line, col, "(call NAME EXPR) takes two arguments"));
            }
            let concept = match &items[1] {
                Sexp::Atom(a, ..) => a.clone(),
                s => {
                    let (l, c) = s.pos();
                    return Err(parse_err(l, c, "call target must be a name"));
                }
            };
            Ok(Stmt::Call {
                concept,
                size: expr_from_sexp(&items[2])?,
            })
        }
        "loop" => {
            if items.len() < 2 {
                return Err(parse_err(line, col, "(loop EXPR STMT...) needs a count"));
            }
            let count = expr_from_sexp(&items[1])?;
            let mut rest = &items[2..];
            let mut trim = 0usize;
            if let Some(Sexp::Atom(a, l, c)) = rest.first() {
                if a == ":trim" {
                    let k = match rest.get(1) {
                        Some(Sexp::Atom(v, vl, vc)) => v
                            .parse::<usize>()
                            .map_err(|_| parse_err(*vl, *vc, ":trim needs a nonnegative integer"))?,
                        _ => return Err(parse_err(*l, *c, ":trim needs a value")),
                    };
                    trim = k;
                    rest = &rest[2..];
                }
            }
            let body = rest.iter().map(stmt_from_sexp).collect::<Result<Vec<_>>>()?;
            if trim >= body.len() {
                return Err(parse_err(line, col, "epilogue trim must be smaller than the loop body"));
            }
            Ok(Stmt::Loop { count, body, trim })
        }
        other => Err(parse_err(line, col, format!("unknown keyword '{other}'"))),
    }
}

/// Parses one `(def NAME (PARAM) STMT...)` form.
pub fn parse_program_text(text: &str) -> Result<Program> {
    let mut lexer = Lexer::new(text);
    let sexp = lexer.parse_sexp()?;
    if !lexer.at_eof() {
        return Err(parse_err(lexer.line, lexer.column, "trailing input after definition"));
    }
    program_from_sexp(&sexp)
}

fn program_from_sexp(sexp: &Sexp) -> Result<Program> {
    let (items, line, col) = match sexp {
        Sexp::List(items, l, c) => (items, *l, *c),
        Sexp::Atom(_, l, c) => return Err(parse_err(*l, *c, "expected (def ...)")),
    };
    match items.first() {
        Some(Sexp::Atom(a, ..)) if a == "def" => {}
        _ => return Err(parse_err(line, col, "expected (def ...)")),
    }
    let name = match items.get(1) {
        Some(Sexp::Atom(a, ..)) => a.clone(),
        _ => return Err(parse_err(line, col, "def needs a name")),
    };
    let size_param = match items.get(2) {
        Some(Sexp::List(params, l, c)) => match params.as_slice() {
            [Sexp::Atom(p, ..)] => p.clone(),
            _ => return Err(parse_err(*l, *c, "def takes exactly one size parameter")),
        },
        _ => return Err(parse_err(line, col, "def needs a parameter list")),
    };
    let body = items[3..]
        .iter()
        .map(stmt_from_sexp)
        .collect::<Result<Vec<_>>>()?;
    Ok(Program {
        name,
        size_param,
        body,
    })
}

fn emit_expr(e: &SizeExpr) -> String {
    let mut terms: Vec<String> = Vec::new();
    for (coef, var) in [(e.c1, "n"), (e.c2, "i")] {
        match coef {
            0 => {}
            1 => terms.push(var.to_string()),
            k => terms.push(format!("(* {k} {var})")),
        }
    }
    if e.c0 != 0 || terms.is_empty() {
        terms.push(e.c0.to_string());
    }
    terms
        .into_iter()
        .reduce(|a, b| {
            if let Some(stripped) = b.strip_prefix('-') {
                format!("(- {a} {stripped})")
            } else {
                format!("(+ {a} {b})")
            }
        })
        .unwrap()
}

fn emit_stmt(s: &Stmt, out: &mut String) {
    match s {
        Stmt::Prim(PrimOp::Keep) => out.push_str("(keep)"),
        Stmt::Prim(PrimOp::Store) => out.push_str("(store)"),
        Stmt::Prim(PrimOp::Reset) => out.push_str("(reset)"),
        Stmt::Prim(PrimOp::Move(d)) => {
            let _ = write!(out, "(move {})", d.name());
        }
        Stmt::Call { concept, size } => {
            let _ = write!(out, "(call {} {})", concept, emit_expr(size));
        }
        Stmt::Loop { count, body, trim } => {
            let _ = write!(out, "(loop {}", emit_expr(count));
            if *trim > 0 {
                let _ = write!(out, " :trim {trim}");
            }
            for b in body {
                out.push(' ');
                emit_stmt(b, out);
            }
            out.push(')');
        }
    }
}

/// Canonical single-line text of a program; `parse_program_text` inverts it.
pub fn emit_program_text(program: &Program) -> String {
    let mut out = format!("(def {} ({})", program.name, program.size_param);
    for s in &program.body {
        out.push(' ');
        emit_stmt(s, &mut out);
    }
    out.push(')');
    out
}

/// Serializes a library as one canonical definition per line.
pub fn emit_library_text(library: &ConceptLibrary) -> String {
    let mut out = String::new();
    for p in library.programs() {
        out.push_str(&emit_program_text(p));
        out.push('\n');
    }
    out
}

/// Parses a library file (one definition per line-block, dependency order).
pub fn parse_library_text(text: &str) -> Result<ConceptLibrary> {
    let mut library = ConceptLibrary::new();
    let mut lexer = Lexer::new(text);
    while !lexer.at_eof() {
        let sexp = lexer.parse_sexp()?;
        library.register_concept(program_from_sexp(&sexp)?)?;
    }
    Ok(library)
}
