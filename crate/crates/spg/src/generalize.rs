//! The Generalize stage: abstract a bundle of grounded plans into one
//! size-generic Program by loop detection and exact affine fitting.
//!
//! Hypothesis classes, tried in rotating order over three attempts:
//!   (a) straight-line program with affine size slots;
//!   (b) a single loop over a repeated step skeleton, iteration count affine
//!       in n, per-slot values affine in (n, i), with an epilogue trim;
//!   (c) the same two classes after compressing maximal runs of one repeated
//!       move primitive into inner counted loops.
//! Every candidate is validated by exact re-unrolling against all input
//! plans before it enters the selection pool.
//!
//! Input plans are first canonicalized: a bare `keep` and a size-1 call to
//! any concept that places one block at the head (and restores the head) are
//! reward-identical during search, so different demonstrations surface the
//! same semantic plan with different step spellings. Canonicalization picks
//! one spelling per bundle so shape-based fitting sees consistent skeletons.

use std::collections::BTreeSet;

use crate::backend;
use crate::dsl::{
    description_length_program, expand_plan, is_keep_equivalent, unroll, ConceptLibrary, Plan,
    PlanStep, PrimOp, Program, SizeExpr, Stmt,
};
use crate::error::{Result, SpgError};
use crate::mcts::{replay_placement_rewards, DemoTrace, PlanCandidate};
use crate::sketch::GroundedSketch;
use crate::world::Direction;

/// One demonstration's contribution to a generalization bundle.
#[derive(Debug, Clone)]
pub struct BundleItem {
    pub grounded: GroundedSketch,
    pub plan: PlanCandidate,
    pub demo: DemoTrace,
}

/// Same-concept plans across demonstrations of distinct sizes.
#[derive(Debug, Clone)]
pub struct DemoBundle {
    pub concept: String,
    pub items: Vec<BundleItem>,
}

/// Library concepts whose size-1 invocation is effect-identical to `keep`.
fn keep_equivalent_concepts(library: &ConceptLibrary) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for program in library.programs() {
        let plan: Plan = vec![PlanStep::Macro {
            concept: program.name.clone(),
            size: 1,
        }];
        if let Ok(prims) = expand_plan(&plan, library) {
            if is_keep_equivalent(&prims) {
                out.insert(program.name.clone());
            }
        }
    }
    out
}

/// Rewrites effect-identical plan steps to one canonical surface form across
/// the bundle. `keep` and `(call c 1)` for a keep-equivalent concept `c` earn
/// identical rewards from identical states, so the search breaks the tie
/// arbitrarily per demonstration — and the resulting surface mixtures defeat
/// shape-based fitting even though the plans agree semantically. When exactly
/// one concept appears somewhere in the bundle at size ≥ 2 the canonical form
/// is that concept at size 1 (keeping iterated-call skeletons uniform, as in
/// a staircase whose first column is a height-1 tower); otherwise bare keep.
fn canonicalize_bundle(bundle: &DemoBundle, library: &ConceptLibrary) -> DemoBundle {
    let equivalents = keep_equivalent_concepts(library);
    let mut dominant: BTreeSet<&str> = BTreeSet::new();
    for item in &bundle.items {
        for step in &item.plan.plan {
            if let PlanStep::Macro { concept, size } = step {
                if *size >= 2 {
                    dominant.insert(concept);
                }
            }
        }
    }
    let canonical: PlanStep = match dominant.iter().next() {
        Some(&c) if dominant.len() == 1 && equivalents.contains(c) => PlanStep::Macro {
            concept: c.to_string(),
            size: 1,
        },
        _ => PlanStep::Prim(PrimOp::Keep),
    };
    let mut out = bundle.clone();
    for item in &mut out.items {
        for step in &mut item.plan.plan {
            let rewrite = match &step {
                PlanStep::Prim(PrimOp::Keep) => true,
                PlanStep::Macro { concept, size } => {
                    *size == 1 && equivalents.contains(concept.as_str())
                }
                _ => false,
            };
            if rewrite && *step != canonical {
                *step = canonical.clone();
            }
        }
    }
    out
}

/// Exact least-degrees-of-freedom affine fit over (n, i, value)
/// observations: constants first, then c0 + c2·i, then c0 + c1·n, then the
/// full form. `None` when no affine expression reproduces every observation.
pub fn fit_affine(observations: &[(i64, i64, i64)]) -> Option<SizeExpr> {
    if observations.is_empty() {
        return None;
    }
    let fits = |e: SizeExpr| observations.iter().all(|&(n, i, v)| e.value(n, i) == v);

    let constant = SizeExpr::constant(observations[0].2);
    if fits(constant) {
        return Some(constant);
    }
    if let Some((c0, c2)) = fit_line(observations, |&(_, i, v)| (i, v)) {
        let e = SizeExpr::affine(c0, 0, c2);
        if fits(e) {
            return Some(e);
        }
    }
    if let Some((c0, c1)) = fit_line(observations, |&(n, _, v)| (n, v)) {
        let e = SizeExpr::affine(c0, c1, 0);
        if fits(e) {
            return Some(e);
        }
    }
    // Full form: slope in n from an equal-i pair, slope in i from an
    // equal-n pair, intercept from any observation.
    let c1 = pair_slope(observations, |&(n, i, v)| (i, n, v))?;
    let c2 = pair_slope(observations, |&(n, i, v)| (n, i, v))?;
    let (n0, i0, v0) = observations[0];
    let e = SizeExpr::affine(v0 - c1 * n0 - c2 * i0, c1, c2);
    fits(e).then_some(e)
}

/// Exact 1D affine fit (intercept, slope) through projected observations.
fn fit_line(obs: &[(i64, i64, i64)], project: impl Fn(&(i64, i64, i64)) -> (i64, i64)) -> Option<(i64, i64)> {
    let (x0, v0) = project(&obs[0]);
    let (x1, v1) = obs.iter().map(&project).find(|&(x, _)| x != x0)?;
    let (dx, dv) = (x1 - x0, v1 - v0);
    if dv % dx != 0 {
        return None;
    }
    let slope = dv / dx;
    Some((v0 - slope * x0, slope))
}

/// Slope along the second projected coordinate from a pair agreeing on the
/// first.
fn pair_slope(
    obs: &[(i64, i64, i64)],
    project: impl Fn(&(i64, i64, i64)) -> (i64, i64, i64),
) -> Option<i64> {
    for a in 0..obs.len() {
        for b in a + 1..obs.len() {
            let (ka, xa, va) = project(&obs[a]);
            let (kb, xb, vb) = project(&obs[b]);
            if ka == kb && xa != xb {
                let (dx, dv) = (xb - xa, vb - va);
                if dv % dx != 0 {
                    return None;
                }
                return Some(dv / dx);
            }
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Plan tokenization
// ---------------------------------------------------------------------------

/// Shape of one plan position; slot-bearing shapes carry a value per demo.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Shape {
    Prim(PrimOp),
    Call(String),
    /// Maximal run of one repeated move primitive (class c only).
    Run(Direction),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Tok {
    shape: Shape,
    value: Option<i64>,
}

fn tokenize_raw(plan: &Plan) -> Vec<Tok> {
    plan.iter()
        .map(|step| match step {
            PlanStep::Prim(p) => Tok {
                shape: Shape::Prim(*p),
                value: None,
            },
            PlanStep::Macro { concept, size } => Tok {
                shape: Shape::Call(concept.clone()),
                value: Some(*size),
            },
        })
        .collect()
}

fn tokenize_compressed(plan: &Plan) -> Vec<Tok> {
    let mut out: Vec<Tok> = Vec::new();
    for step in plan {
        match step {
            PlanStep::Prim(PrimOp::Move(d)) => {
                if let Some(last) = out.last_mut() {
                    if last.shape == Shape::Run(*d) {
                        *last.value.as_mut().unwrap() += 1;
                        continue;
                    }
                }
                out.push(Tok {
                    shape: Shape::Run(*d),
                    value: Some(1),
                });
            }
            PlanStep::Prim(p) => out.push(Tok {
                shape: Shape::Prim(*p),
                value: None,
            }),
            PlanStep::Macro { concept, size } => out.push(Tok {
                shape: Shape::Call(concept.clone()),
                value: Some(*size),
            }),
        }
    }
    out
}

/// Turns a fitted token into a DSL statement.
fn stmt_for(shape: &Shape, expr: Option<SizeExpr>) -> Stmt {
    match shape {
        Shape::Prim(p) => Stmt::Prim(*p),
        Shape::Call(concept) => Stmt::Call {
            concept: concept.clone(),
            size: expr.expect("call slot fitted"),
        },
        Shape::Run(d) => Stmt::Loop {
            count: expr.expect("run slot fitted"),
            body: vec![Stmt::Prim(PrimOp::Move(*d))],
            trim: 0,
        },
    }
}

// ---------------------------------------------------------------------------
// Hypothesis classes
// ---------------------------------------------------------------------------

const MAX_PREAMBLE: usize = 4;
const MAX_BODY: usize = 8;

/// Class (a): same-shape plans position by position, slot values affine in n.
fn fit_straight_line(name: &str, seqs: &[(i64, Vec<Tok>)]) -> Option<Program> {
    let (_, first) = &seqs[0];
    if seqs.iter().any(|(_, s)| s.len() != first.len()) {
        return None;
    }
    let mut body = Vec::new();
    for pos in 0..first.len() {
        let shape = &first[pos].shape;
        if seqs.iter().any(|(_, s)| &s[pos].shape != shape) {
            return None;
        }
        let expr = if first[pos].value.is_some() {
            let obs: Vec<(i64, i64, i64)> = seqs
                .iter()
                .map(|(n, s)| (*n, 0, s[pos].value.unwrap()))
                .collect();
            Some(fit_affine(&obs)?)
        } else {
            None
        };
        body.push(stmt_for(shape, expr));
    }
    Some(Program {
        name: name.into(),
        size_param: "n".into(),
        body,
    })
}

/// Class (b): preamble + single loop with epilogue trim.
fn fit_single_loop(name: &str, seqs: &[(i64, Vec<Tok>)]) -> Option<Program> {
    let (_, first) = &seqs[0];
    let min_len = seqs.iter().map(|(_, s)| s.len()).min().unwrap();
    for preamble in 0..=MAX_PREAMBLE.min(min_len.saturating_sub(1)) {
        for body_len in 1..=MAX_BODY.min(first.len() - preamble) {
            'trim: for trim in 0..body_len {
                // Iteration counts per demo from the length equation
                // len = preamble + iters·body_len − trim.
                let mut iters = Vec::new();
                for (n, s) in seqs {
                    let rest = s.len().checked_sub(preamble)?;
                    let numer = rest + trim;
                    if numer % body_len != 0 || numer / body_len == 0 {
                        continue 'trim;
                    }
                    iters.push((*n, numer / body_len));
                }
                // Shape consistency: preamble across demos, body skeleton
                // across demos and iterations.
                for (_, s) in seqs {
                    for pos in 0..preamble {
                        if s[pos].shape != first[pos].shape {
                            continue 'trim;
                        }
                    }
                }
                let skeleton: Vec<&Shape> =
                    first[preamble..preamble + body_len].iter().map(|t| &t.shape).collect();
                for (j, (_, s)) in seqs.iter().enumerate() {
                    let m = iters[j].1;
                    for it in 0..m {
                        let upto = if it == m - 1 { body_len - trim } else { body_len };
                        for q in 0..upto {
                            if s[preamble + it * body_len + q].shape != *skeleton[q] {
                                continue 'trim;
                            }
                        }
                    }
                }
                // Iteration count must be affine in n alone.
                let count_obs: Vec<(i64, i64, i64)> =
                    iters.iter().map(|&(n, m)| (n, 0, m as i64)).collect();
                let count = fit_affine(&count_obs)?;
                // Preamble slots: affine in n.
                let mut stmts = Vec::new();
                for pos in 0..preamble {
                    let expr = if first[pos].value.is_some() {
                        let obs: Vec<(i64, i64, i64)> = seqs
                            .iter()
                            .map(|(n, s)| (*n, 0, s[pos].value.unwrap()))
                            .collect();
                        match fit_affine(&obs) {
                            Some(e) => Some(e),
                            None => continue 'trim,
                        }
                    } else {
                        None
                    };
                    stmts.push(stmt_for(&first[pos].shape, expr));
                }
                // Body slots: affine in (n, iteration index).
                let mut body = Vec::new();
                for q in 0..body_len {
                    let expr = if first[preamble + q].value.is_some() {
                        let mut obs = Vec::new();
                        for (j, (n, s)) in seqs.iter().enumerate() {
                            let m = iters[j].1;
                            for it in 0..m {
                                let upto = if it == m - 1 { body_len - trim } else { body_len };
                                if q < upto {
                                    obs.push((
                                        *n,
                                        it as i64,
                                        s[preamble + it * body_len + q].value.unwrap(),
                                    ));
                                }
                            }
                        }
                        match fit_affine(&obs) {
                            Some(e) => Some(e),
                            None => continue 'trim,
                        }
                    } else {
                        None
                    };
                    body.push(stmt_for(&skeleton[q].clone(), expr));
                }
                stmts.push(Stmt::Loop { count, body, trim });
                return Some(Program {
                    name: name.into(),
                    size_param: "n".into(),
                    body: stmts,
                });
            }
        }
    }
    None
}

/// Exact-unrolling validation: the program must reproduce every input plan's
/// primitive expansion bit for bit.
fn validates(program: &Program, bundle: &DemoBundle, library: &ConceptLibrary) -> bool {
    bundle.items.iter().all(|item| {
        let want = match expand_plan(&item.plan.plan, library) {
            Ok(p) => p,
            Err(_) => return false,
        };
        match unroll(program, item.grounded.size, library) {
            Ok(got) => got == want,
            Err(_) => false,
        }
    })
}

/// Enumerates validated candidate programs over all hypothesis classes, in
/// three attempt orders (rotations of straight-line / loop / run-compressed).
pub fn synthesize(bundle: &DemoBundle, library: &ConceptLibrary) -> Vec<Program> {
    let raw: Vec<(i64, Vec<Tok>)> = bundle
        .items
        .iter()
        .map(|it| (it.grounded.size, tokenize_raw(&it.plan.plan)))
        .collect();
    let compressed: Vec<(i64, Vec<Tok>)> = bundle
        .items
        .iter()
        .map(|it| (it.grounded.size, tokenize_compressed(&it.plan.plan)))
        .collect();
    if raw.iter().any(|(_, s)| s.is_empty()) {
        return Vec::new();
    }

    let name = bundle.concept.as_str();
    let classes: [&dyn Fn() -> Option<Program>; 4] = [
        &|| fit_straight_line(name, &raw),
        &|| fit_single_loop(name, &raw),
        &|| fit_straight_line(name, &compressed),
        &|| fit_single_loop(name, &compressed),
    ];
    let mut out: Vec<Program> = Vec::new();
    for attempt in 0..3usize {
        for k in 0..classes.len() {
            let idx = (k + attempt) % classes.len();
            if let Some(p) = classes[idx]() {
                if validates(&p, bundle, library) && !out.contains(&p) {
                    out.push(p);
                }
            }
        }
    }
    out
}

/// Mean per-placement IoU of a candidate re-executed on every demo in the
/// bundle; unmatched or missing placements score zero.
pub fn score_candidate(program: &Program, bundle: &DemoBundle, library: &ConceptLibrary) -> f64 {
    let mut total = 0.0;
    for item in &bundle.items {
        let prims = match unroll(program, item.grounded.size, library) {
            Ok(p) => p,
            Err(_) => continue, // scores 0 for this demo
        };
        let rewards = replay_placement_rewards(&prims, &item.demo, &item.grounded);
        let denom = rewards.len().max(item.demo.diffs.len()).max(1);
        total += rewards.iter().sum::<f64>() / denom as f64;
    }
    total / bundle.items.len().max(1) as f64
}

/// Picks the best candidate by mean IoU score, breaking ties by description
/// length and then by candidate order.
pub fn select_best(
    candidates: &[Program],
    bundle: &DemoBundle,
    library: &ConceptLibrary,
) -> Result<Program> {
    if candidates.is_empty() {
        return Err(SpgError::GeneralizationFailed);
    }
    let mut best = 0usize;
    let mut best_score = f64::NEG_INFINITY;
    let mut best_len = usize::MAX;
    for (idx, c) in candidates.iter().enumerate() {
        let score = score_candidate(c, bundle, library);
        let len = description_length_program(c);
        if score > best_score + 1e-12 || ((score - best_score).abs() <= 1e-12 && len < best_len) {
            best = idx;
            best_score = score;
            best_len = len;
        }
    }
    Ok(candidates[best].clone())
}

/// Prompts the configured completion backend three times per plan with the
/// demos' call signatures and execution traces, parsing each reply into the
/// DSL. All failures degrade to an empty candidate list.
pub fn generalize_via_backend(bundle: &DemoBundle, _library: &ConceptLibrary) -> Vec<Program> {
    let url = match backend::backend_url() {
        Some(u) => u,
        None => return Vec::new(),
    };
    let mut prompt = format!(
        "Infer a single general definition (def {} (n) ...) in the s-expression \
         block DSL from these demonstrations. Note that some of the executions \
         can be partially wrong.\n",
        bundle.concept
    );
    for item in &bundle.items {
        prompt.push_str(&format!(
            "call: ({} {})\nplan: {:?}\n",
            bundle.concept, item.grounded.size, item.plan.plan
        ));
    }
    let mut out = Vec::new();
    for _ in 0..3 {
        if let Some(reply) = backend::request_completion(&url, &prompt) {
            if let Ok(mut program) = crate::dsl::parse_program_text(reply.trim()) {
                program.name = bundle.concept.clone();
                if !out.contains(&program) {
                    out.push(program);
                }
            }
        }
    }
    out
}

/// Full Generalize stage over the top-k plans of each demonstration: bundles
/// the rank-r candidates for each rank, synthesizes, pools backend
/// candidates, and selects the best validated program.
pub fn generalize(
    concept: &str,
    demos: &[(GroundedSketch, Vec<PlanCandidate>, DemoTrace)],
    library: &ConceptLibrary,
) -> Result<Program> {
    if demos.is_empty() {
        return Err(SpgError::GeneralizationFailed);
    }
    let max_rank = demos.iter().map(|(_, c, _)| c.len()).min().unwrap_or(0);
    let mut candidates: Vec<Program> = Vec::new();
    let mut scoring_bundle: Option<DemoBundle> = None;
    for rank in 0..max_rank {
        let raw_bundle = DemoBundle {
            concept: concept.to_string(),
            items: demos
                .iter()
                .map(|(grounded, cands, demo)| BundleItem {
                    grounded: grounded.clone(),
                    plan: cands[rank].clone(),
                    demo: demo.clone(),
                })
                .collect(),
        };
        let bundle = canonicalize_bundle(&raw_bundle, library);
        for c in synthesize(&bundle, library) {
            if !candidates.contains(&c) {
                candidates.push(c);
            }
        }
        for c in generalize_via_backend(&bundle, library) {
            if !candidates.contains(&c) {
                candidates.push(c);
            }
        }
        if scoring_bundle.is_none() {
            scoring_bundle = Some(bundle);
        }
    }
    let bundle = scoring_bundle.ok_or(SpgError::GeneralizationFailed)?;
    select_best(&candidates, &bundle, library)
}
