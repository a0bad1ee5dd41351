//! Graph rules with forward chaining to saturation, positive and negative
//! validity constraints, and refutation proofs.
//!
//! A rule adds its conclusion wherever its hypothesis projects, merging
//! frontier nodes onto their images. Saturation repeats this to fixpoint
//! with a semantic redundancy check: an application is skipped when the
//! hypothesis-plus-conclusion pattern already projects into the graph at
//! the same hypothesis binding.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::cgraph::{CgError, ConceptId, ConceptualGraph, Marker};
use crate::ontology::Ontology;
use crate::projection::{
    find_projections, find_projections_with, validate_morphism, Morphism,
    ProjectionError, SearchOptions,
};

#[derive(Debug, Error)]
pub enum ReasoningError {
    #[error(transparent)]
    Graph(#[from] CgError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error("morphism is not a valid projection of the hypothesis")]
    InvalidMorphism,
    #[error("frontier references node {0:?} that is not in the graph")]
    FrontierNode(ConceptId),
    #[error("frontier pair types `{0}` and `{1}` are incomparable")]
    FrontierIncompatible(String, String),
    #[error("positive constraint `{0}` has no alternatives")]
    EmptyAlternatives(String),
    #[error("iteration bound must be at least 1")]
    InvalidBound,
    #[error("rule and graph are governed by different ontologies")]
    OntologyMismatch,
}

/// "If the hypothesis is in the graph, the conclusion can be added";
/// frontier pairs corefer hypothesis nodes with conclusion nodes.
#[derive(Debug, Clone)]
pub struct GraphRule {
    pub name: String,
    pub hypothesis: ConceptualGraph,
    pub conclusion: ConceptualGraph,
    pub frontier: Vec<(ConceptId, ConceptId)>,
    /// Hypothesis and conclusion glued along the frontier, with the map
    /// from hypothesis nodes into it. Used for the redundancy check.
    glued: ConceptualGraph,
    glued_of_hyp: BTreeMap<ConceptId, ConceptId>,
}

impl GraphRule {
    pub fn new(
        name: impl Into<String>,
        hypothesis: ConceptualGraph,
        conclusion: ConceptualGraph,
        frontier: Vec<(ConceptId, ConceptId)>,
    ) -> Result<Self, ReasoningError> {
        let ont = &hypothesis.ontology().concepts;
        for (h, c) in &frontier {
            let hn = hypothesis
                .concept(*h)
                .ok_or(ReasoningError::FrontierNode(*h))?;
            let cn = conclusion
                .concept(*c)
                .ok_or(ReasoningError::FrontierNode(*c))?;
            let comparable = ont.is_subtype(&hn.ctype, &cn.ctype).map_err(CgError::from)?
                || ont.is_subtype(&cn.ctype, &hn.ctype).map_err(CgError::from)?;
            if !comparable {
                return Err(ReasoningError::FrontierIncompatible(
                    hn.ctype.clone(),
                    cn.ctype.clone(),
                ));
            }
        }
        let (glued, glued_of_hyp) = glue(&hypothesis, &conclusion, &frontier)?;
        Ok(GraphRule {
            name: name.into(),
            hypothesis,
            conclusion,
            frontier,
            glued,
            glued_of_hyp,
        })
    }
}

/// Glues `extension` onto `base` along the frontier pairs, returning the
/// combined graph and the map from base nodes into it.
fn glue(
    base: &ConceptualGraph,
    extension: &ConceptualGraph,
    frontier: &[(ConceptId, ConceptId)],
) -> Result<(ConceptualGraph, BTreeMap<ConceptId, ConceptId>), ReasoningError> {
    let (mut glued, base_map, _) = base.copy_with_maps();
    let (ext_map, _) = glued.absorb(extension);
    for (b, e) in frontier {
        let keep = base_map
            .get(b)
            .copied()
            .ok_or(ReasoningError::FrontierNode(*b))?;
        let drop = ext_map
            .get(e)
            .copied()
            .ok_or(ReasoningError::FrontierNode(*e))?;
        glued.merge_nodes(keep, drop)?;
    }
    glued.check_signatures()?;
    Ok((glued, base_map))
}

/// Applies `rule` at one hypothesis projection: a fresh copy of the
/// conclusion is added, frontier nodes merged onto their images.
/// Returns the grown graph and a description of the added fragment.
pub fn apply_rule_at(
    rule: &GraphRule,
    g: &ConceptualGraph,
    m: &Morphism,
) -> Result<(ConceptualGraph, String), ReasoningError> {
    if !Ontology::same(rule.hypothesis.ontology(), g.ontology()) {
        return Err(ReasoningError::OntologyMismatch);
    }
    if !validate_morphism(&rule.hypothesis, g, m)? {
        return Err(ReasoningError::InvalidMorphism);
    }
    let mut result = g.clone();
    let (concl_map, concl_edges) = result.absorb(&rule.conclusion);
    for (h, c) in &rule.frontier {
        let keep = m.concept_map[h];
        let drop = concl_map[c];
        result.merge_nodes(keep, drop)?;
    }
    result.check_signatures()?;

    let frontier_concl: Vec<ConceptId> = rule.frontier.iter().map(|(_, c)| *c).collect();
    let mut parts = Vec::new();
    for (orig, fresh) in &concl_map {
        if frontier_concl.contains(orig) {
            continue;
        }
        if let Some(node) = result.concept(*fresh) {
            parts.push(format!("[{}: {}]", node.ctype, marker_label(&node.marker)));
        }
    }
    for new_edge in concl_edges.values() {
        if let Some(edge) = result.relation(*new_edge) {
            let args: Vec<String> = edge
                .args
                .iter()
                .map(|a| node_label(&result, *a))
                .collect();
            parts.push(format!("({} {})", edge.rtype, args.join(" ")));
        }
    }
    Ok((result, parts.join(" ")))
}

fn marker_label(m: &Marker) -> String {
    match m {
        Marker::Generic => "*".to_string(),
        Marker::Individual(name) => name.clone(),
        Marker::CorefVar(v) => format!("*{v}"),
    }
}

fn node_label(g: &ConceptualGraph, id: ConceptId) -> String {
    match g.concept(id) {
        Some(node) => match &node.marker {
            Marker::Individual(name) => name.clone(),
            Marker::CorefVar(v) => format!("*{v}"),
            Marker::Generic => format!("{}#{}", node.ctype, id.0),
        },
        None => format!("#{}", id.0),
    }
}

/// True when applying `rule` at `m` would add nothing the graph does not
/// already entail: the glued hypothesis-conclusion pattern projects into
/// `g` while pinning hypothesis nodes to their images under `m`.
pub fn application_redundant(
    rule: &GraphRule,
    g: &ConceptualGraph,
    m: &Morphism,
) -> Result<bool, ReasoningError> {
    let seed: BTreeMap<ConceptId, ConceptId> = rule
        .glued_of_hyp
        .iter()
        .map(|(h, glued_id)| (*glued_id, m.concept_map[h]))
        .collect();
    let found = find_projections_with(
        &rule.glued,
        g,
        &SearchOptions {
            limit: Some(1),
            injective: false,
            seed,
        },
    )?;
    Ok(!found.is_empty())
}

/// One fragment added during saturation or proof search.
#[derive(Debug, Clone)]
pub struct ProofStep {
    pub rule: String,
    pub morphism: Morphism,
    pub added: String,
}

#[derive(Debug, Clone)]
pub struct SaturationReport {
    pub iterations: usize,
    pub added: Vec<ProofStep>,
    pub reached_fixpoint: bool,
}

/// Applies every rule at every projection until fixpoint or the iteration
/// bound; hitting the bound is reported, not an error.
pub fn saturate(
    g: &ConceptualGraph,
    rules: &[GraphRule],
    max_iterations: usize,
) -> Result<(ConceptualGraph, SaturationReport), ReasoningError> {
    if max_iterations == 0 {
        return Err(ReasoningError::InvalidBound);
    }
    let mut current = g.clone();
    let mut added = Vec::new();
    let mut iterations = 0;
    let mut reached_fixpoint = false;
    while iterations < max_iterations {
        iterations += 1;
        let pass_added = saturation_pass(&mut current, rules, &mut added, &mut |_| Ok(()))?;
        if pass_added == 0 {
            reached_fixpoint = true;
            break;
        }
    }
    Ok((
        current,
        SaturationReport {
            iterations,
            added,
            reached_fixpoint,
        },
    ))
}

/// Runs one pass over all rules and projections, applying non-redundant
/// instances. `after_apply` sees the graph after each application and can
/// stop the pass by returning an error wrapped upstream.
fn saturation_pass(
    current: &mut ConceptualGraph,
    rules: &[GraphRule],
    trace: &mut Vec<ProofStep>,
    after_apply: &mut dyn FnMut(&ConceptualGraph) -> Result<(), StopPass>,
) -> Result<usize, ReasoningError> {
    let mut pass_added = 0;
    for rule in rules {
        let ms = find_projections(&rule.hypothesis, current, None)?;
        for m in ms {
            if application_redundant(rule, current, &m)? {
                continue;
            }
            let (next, description) = apply_rule_at(rule, current, &m)?;
            *current = next;
            trace.push(ProofStep {
                rule: rule.name.clone(),
                morphism: m,
                added: description,
            });
            pass_added += 1;
            if after_apply(current).is_err() {
                return Ok(pass_added);
            }
        }
    }
    Ok(pass_added)
}

struct StopPass;

/// A constraint's mandatory part together with its frontier into the
/// condition, kept both in source form and pre-glued for checking.
#[derive(Debug, Clone)]
pub struct MandatoryPart {
    pub graph: ConceptualGraph,
    pub frontier: Vec<(ConceptId, ConceptId)>,
    whole: ConceptualGraph,
    condition_map: BTreeMap<ConceptId, ConceptId>,
}

impl MandatoryPart {
    pub fn new(
        condition: &ConceptualGraph,
        graph: ConceptualGraph,
        frontier: Vec<(ConceptId, ConceptId)>,
    ) -> Result<Self, ReasoningError> {
        let (whole, condition_map) = glue(condition, &graph, &frontier)?;
        Ok(MandatoryPart {
            graph,
            frontier,
            whole,
            condition_map,
        })
    }

    pub fn whole(&self) -> &ConceptualGraph {
        &self.whole
    }

    /// Does some projection of the whole extend the given condition
    /// projection into `g`?
    fn extends(&self, g: &ConceptualGraph, m: &Morphism) -> Result<Option<Morphism>, ReasoningError> {
        let seed: BTreeMap<ConceptId, ConceptId> = self
            .condition_map
            .iter()
            .map(|(c, w)| (*w, m.concept_map[c]))
            .collect();
        let mut found = find_projections_with(
            &self.whole,
            g,
            &SearchOptions {
                limit: Some(1),
                injective: false,
                seed,
            },
        )?;
        Ok(found.pop())
    }
}

/// "If the condition is present, some alternative must also be present."
#[derive(Debug, Clone)]
pub struct PositiveConstraint {
    pub name: String,
    pub condition: ConceptualGraph,
    pub alternatives: Vec<MandatoryPart>,
}

impl PositiveConstraint {
    pub fn new(
        name: impl Into<String>,
        condition: ConceptualGraph,
        alternatives: Vec<MandatoryPart>,
    ) -> Result<Self, ReasoningError> {
        let name = name.into();
        if alternatives.is_empty() {
            return Err(ReasoningError::EmptyAlternatives(name));
        }
        Ok(PositiveConstraint {
            name,
            condition,
            alternatives,
        })
    }
}

/// "If the condition is present, the mandatory part must be absent."
#[derive(Debug, Clone)]
pub struct NegativeConstraint {
    pub name: String,
    pub condition: ConceptualGraph,
    pub mandatory: MandatoryPart,
}

impl NegativeConstraint {
    pub fn new(
        name: impl Into<String>,
        condition: ConceptualGraph,
        mandatory: MandatoryPart,
    ) -> Self {
        NegativeConstraint {
            name: name.into(),
            condition,
            mandatory,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Satisfied,
    Violated,
}

/// Outcome of one constraint check. A violated verdict carries witnesses:
/// for a positive constraint the condition projection that could not be
/// extended, for a negative one the forbidden whole-pattern projection.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub status: Status,
    pub witnesses: Vec<Morphism>,
}

impl Verdict {
    pub fn satisfied() -> Self {
        Verdict {
            status: Status::Satisfied,
            witnesses: Vec::new(),
        }
    }

    pub fn is_satisfied(&self) -> bool {
        self.status == Status::Satisfied
    }
}

/// Satisfied iff every projection of the condition extends, through at
/// least one alternative, to a whole-pattern projection. With an empty
/// condition this degenerates to "some alternative projects".
pub fn check_positive(
    g: &ConceptualGraph,
    pc: &PositiveConstraint,
) -> Result<Verdict, ReasoningError> {
    for m in find_projections(&pc.condition, g, None)? {
        let mut extended = false;
        for alt in &pc.alternatives {
            if alt.extends(g, &m)?.is_some() {
                extended = true;
                break;
            }
        }
        if !extended {
            return Ok(Verdict {
                status: Status::Violated,
                witnesses: vec![m],
            });
        }
    }
    Ok(Verdict::satisfied())
}

/// Violated iff some projection of the condition extends to the whole
/// pattern. With an empty condition this degenerates to "the mandatory
/// part must not project".
pub fn check_negative(
    g: &ConceptualGraph,
    nc: &NegativeConstraint,
) -> Result<Verdict, ReasoningError> {
    for m in find_projections(&nc.condition, g, None)? {
        if let Some(whole_m) = nc.mandatory.extends(g, &m)? {
            return Ok(Verdict {
                status: Status::Violated,
                witnesses: vec![whole_m],
            });
        }
    }
    Ok(Verdict::satisfied())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProofOutcome {
    ContradictionEstablished,
    NoContradiction,
    BoundReached,
}

#[derive(Debug, Clone)]
pub struct ProofResult {
    pub outcome: ProofOutcome,
    pub trace: Vec<ProofStep>,
    pub violated_constraint: Option<String>,
    /// Graph state when the proof stopped.
    pub graph: ConceptualGraph,
}

/// Refutation proof: saturation interleaved with negative-constraint
/// checks, failing fast on the first violation.
pub fn prove_refutation(
    g: &ConceptualGraph,
    rules: &[GraphRule],
    negs: &[NegativeConstraint],
    bound: usize,
) -> Result<ProofResult, ReasoningError> {
    if bound == 0 {
        return Err(ReasoningError::InvalidBound);
    }
    let violated = |graph: &ConceptualGraph| -> Result<Option<String>, ReasoningError> {
        for nc in negs {
            if !check_negative(graph, nc)?.is_satisfied() {
                return Ok(Some(nc.name.clone()));
            }
        }
        Ok(None)
    };

    let mut current = g.clone();
    let mut trace = Vec::new();
    if let Some(name) = violated(&current)? {
        return Ok(ProofResult {
            outcome: ProofOutcome::ContradictionEstablished,
            trace,
            violated_constraint: Some(name),
            graph: current,
        });
    }
    for _ in 0..bound {
        let mut hit: Option<String> = None;
        let pass_added = {
            let hit_ref = &mut hit;
            saturation_pass(&mut current, rules, &mut trace, &mut |graph| {
                match violated(graph) {
                    Ok(Some(name)) => {
                        *hit_ref = Some(name);
                        Err(StopPass)
                    }
                    Ok(None) => Ok(()),
                    Err(_) => Ok(()), // surfaced by the outer check below
                }
            })?
        };
        if let Some(name) = hit {
            return Ok(ProofResult {
                outcome: ProofOutcome::ContradictionEstablished,
                trace,
                violated_constraint: Some(name),
                graph: current,
            });
        }
        if pass_added == 0 {
            return Ok(ProofResult {
                outcome: ProofOutcome::NoContradiction,
                trace,
                violated_constraint: None,
                graph: current,
            });
        }
    }
    Ok(ProofResult {
        outcome: ProofOutcome::BoundReached,
        trace,
        violated_constraint: None,
        graph: current,
    })
}

/// A mixed batch of constraints checked one by one.
#[derive(Debug, Clone)]
pub enum Constraint {
    Positive(PositiveConstraint),
    Negative(NegativeConstraint),
}

impl Constraint {
    pub fn name(&self) -> &str {
        match self {
            Constraint::Positive(pc) => &pc.name,
            Constraint::Negative(nc) => &nc.name,
        }
    }

    pub fn check(&self, g: &ConceptualGraph) -> Result<Verdict, ReasoningError> {
        match self {
            Constraint::Positive(pc) => check_positive(g, pc),
            Constraint::Negative(nc) => check_negative(g, nc),
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub entries: Vec<(String, Verdict)>,
    pub overall: Status,
}

pub fn verify_all(
    g: &ConceptualGraph,
    constraints: &[Constraint],
) -> Result<VerificationReport, ReasoningError> {
    let mut entries = Vec::new();
    let mut overall = Status::Satisfied;
    for c in constraints {
        let verdict = c.check(g)?;
        if !verdict.is_satisfied() {
            overall = Status::Violated;
        }
        entries.push((c.name().to_string(), verdict));
    }
    Ok(VerificationReport { entries, overall })
}
