//! The property model: facts (modeling variables, parameters, handle
//! functions, trusted property references), granularity degrees, the
//! five-part property with its causal relation, the generic-property
//! reference matrix, and the three-axis property graph. Verification
//! dispatches onto the reasoning module per relation kind.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::cgraph::ConceptualGraph;
use crate::ingest::{EnterpriseModel, HandleFunctionRegistry};
use crate::ontology::Ontology;
use crate::projection::{exists_projection, Morphism};
use crate::reasoning::{
    saturate, Constraint, GraphRule, MandatoryPart, PositiveConstraint, ReasoningError, Status,
};

#[derive(Debug, Error)]
pub enum PropError {
    #[error("unknown fact `{0}`")]
    UnknownFact(String),
    #[error("fact `{0}` is already declared")]
    DuplicateFact(String),
    #[error("value {0:?} outside the definition domain of `{1}`")]
    OutOfDomain(Value, String),
    #[error("type mismatch: expected {expected}, got {got:?}")]
    TypeMismatch { expected: String, got: Value },
    #[error("fact `{0}` is time-indexed but no time was given")]
    MissingTime(String),
    #[error("handle function `{0}` is not registered")]
    UnknownHandle(String),
    #[error("handle function evaluation requires a model")]
    NoModel,
    #[error("a property must have at least one effect")]
    NoEffect,
    #[error("facts {0:?} appear as both causes and effects")]
    CauseEffectOverlap(Vec<String>),
    #[error("fact `{0}` has no graph-pattern binding")]
    UnbindableFact(String),
    #[error("relation kind {0:?} cannot be compiled to constraints")]
    UnsupportedKind(RelationKind),
    #[error("missing binding for placeholder `{0}`")]
    MissingBinding(String),
    #[error("binding for `{placeholder}`: `{value}` does not conform to type `{ty}`")]
    BindingTypeViolation {
        placeholder: String,
        value: String,
        ty: String,
    },
    #[error("property `{0}` is already placed")]
    DuplicateProperty(String),
    #[error("duplicate granularity degree `{0}`")]
    DuplicateDegree(String),
    #[error("instantiated template did not parse: {0}")]
    TemplateParse(String),
    #[error(transparent)]
    Reasoning(#[from] ReasoningError),
    #[error("handle function `{name}` failed: {message}")]
    HandleFailed { name: String, message: String },
}

/// A fact value; lists arise from handle functions such as `inputs`.
#[derive(Debug, Clone, PartialEq, PartialOrd)]
pub enum Value {
    Int(i64),
    Real(f64),
    Bool(bool),
    Text(String),
    List(Vec<Value>),
}

impl Value {
    pub fn as_bool(&self) -> Result<bool, PropError> {
        match self {
            Value::Bool(b) => Ok(*b),
            other => Err(PropError::TypeMismatch {
                expected: "boolean".into(),
                got: other.clone(),
            }),
        }
    }

    fn as_number(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Real(r) => Some(*r),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TypeTag {
    Int,
    Real,
    Bool,
    Text,
}

impl TypeTag {
    pub fn name(&self) -> &'static str {
        match self {
            TypeTag::Int => "int",
            TypeTag::Real => "real",
            TypeTag::Bool => "bool",
            TypeTag::Text => "text",
        }
    }

    pub fn admits(&self, v: &Value) -> bool {
        matches!(
            (self, v),
            (TypeTag::Int, Value::Int(_))
                | (TypeTag::Real, Value::Real(_))
                | (TypeTag::Real, Value::Int(_))
                | (TypeTag::Bool, Value::Bool(_))
                | (TypeTag::Text, Value::Text(_))
        )
    }
}

/// Definition domain of a modeling variable.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Any,
    OneOf(Vec<Value>),
    IntRange(i64, i64),
}

impl Domain {
    pub fn admits(&self, v: &Value) -> bool {
        match self {
            Domain::Any => true,
            Domain::OneOf(vals) => vals.contains(v),
            Domain::IntRange(lo, hi) => match v {
                Value::Int(i) => lo <= i && i <= hi,
                _ => false,
            },
        }
    }
}

/// One element of the fact store: F = MV ∪ MP ∪ HF ∪ P.
#[derive(Debug, Clone, PartialEq)]
pub enum Fact {
    /// Time-indexed value series within a definition domain.
    Variable {
        name: String,
        tag: TypeTag,
        series: Vec<(i64, Value)>,
        def: Domain,
    },
    /// Constant value.
    Parameter {
        name: String,
        tag: TypeTag,
        value: Value,
    },
    /// Accessor over the model, resolved through the registry.
    Handle {
        name: String,
        params: Vec<String>,
        result: TypeTag,
    },
    /// An existing property the user trusts; treated as an axiom.
    PropertyRef { name: String },
}

impl Fact {
    pub fn name(&self) -> &str {
        match self {
            Fact::Variable { name, .. }
            | Fact::Parameter { name, .. }
            | Fact::Handle { name, .. }
            | Fact::PropertyRef { name } => name,
        }
    }
}

/// Immutable snapshot of declared facts, keyed by name; the four fact
/// kinds are disjoint by construction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FactStore {
    facts: BTreeMap<String, Fact>,
}

impl FactStore {
    pub fn new() -> Self {
        FactStore::default()
    }

    pub fn insert(&mut self, fact: Fact) -> Result<(), PropError> {
        if let Fact::Variable {
            name, series, def, ..
        } = &fact
        {
            for (_, v) in series {
                if !def.admits(v) {
                    return Err(PropError::OutOfDomain(v.clone(), name.clone()));
                }
            }
        }
        let name = fact.name().to_string();
        if self.facts.contains_key(&name) {
            return Err(PropError::DuplicateFact(name));
        }
        self.facts.insert(name, fact);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Fact> {
        self.facts.get(name)
    }

    pub fn facts(&self) -> impl Iterator<Item = &Fact> {
        self.facts.values()
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    /// All time points mentioned by any variable series, sorted.
    pub fn horizon(&self) -> Vec<i64> {
        let mut ts: BTreeSet<i64> = BTreeSet::new();
        for fact in self.facts.values() {
            if let Fact::Variable { series, .. } = fact {
                ts.extend(series.iter().map(|(t, _)| *t));
            }
        }
        ts.into_iter().collect()
    }

    /// Value of a variable at time `t`: the latest sample at or before `t`.
    pub fn sample(&self, name: &str, t: i64) -> Option<&Value> {
        match self.facts.get(name)? {
            Fact::Variable { series, .. } => series
                .iter()
                .filter(|(st, _)| *st <= t)
                .max_by_key(|(st, _)| *st)
                .map(|(_, v)| v),
            _ => None,
        }
    }
}

/// Hierarchy of description levels chosen by the user.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Granularity {
    pub degrees: Vec<String>,
    pub temporal: BTreeMap<String, String>,
}

impl Granularity {
    pub fn new(
        degrees: Vec<String>,
        temporal: BTreeMap<String, String>,
    ) -> Result<Self, PropError> {
        let mut seen = BTreeSet::new();
        for d in &degrees {
            if !seen.insert(d.clone()) {
                return Err(PropError::DuplicateDegree(d.clone()));
            }
        }
        Ok(Granularity { degrees, temporal })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Beneficial,
    Harmful,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationKind {
    Implication,
    Equivalence,
    Temporal,
    Influence(Sense),
    Emergence,
}

/// Boolean expression over facts: literals, fact references, handle
/// function calls, comparisons and connectives.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(Value),
    /// Resolves to a fact's value when declared, else to a text literal.
    Name(String),
    Call(String, Vec<Expr>),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    /// The empty condition: true by definition.
    True,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

/// Everything an expression evaluation may consult.
pub struct EvalContext<'a> {
    pub store: &'a FactStore,
    pub t: Option<i64>,
    pub registry: Option<&'a HandleFunctionRegistry>,
    pub model: Option<&'a EnterpriseModel>,
}

pub fn eval_expr(expr: &Expr, ctx: &EvalContext) -> Result<Value, PropError> {
    match expr {
        Expr::True => Ok(Value::Bool(true)),
        Expr::Lit(v) => Ok(v.clone()),
        Expr::Name(name) => match ctx.store.get(name) {
            Some(Fact::Parameter { value, .. }) => Ok(value.clone()),
            Some(Fact::Variable { name, .. }) => {
                let t = ctx.t.ok_or_else(|| PropError::MissingTime(name.clone()))?;
                ctx.store
                    .sample(name, t)
                    .cloned()
                    .ok_or_else(|| PropError::MissingTime(name.clone()))
            }
            // trusted properties are axioms
            Some(Fact::PropertyRef { .. }) => Ok(Value::Bool(true)),
            Some(Fact::Handle { name, .. }) => Err(PropError::HandleFailed {
                name: name.clone(),
                message: "handle functions must be called with arguments".into(),
            }),
            None => Ok(Value::Text(name.clone())),
        },
        Expr::Call(name, args) => {
            let registry = ctx.registry.ok_or(PropError::UnknownHandle(name.clone()))?;
            let model = ctx.model.ok_or(PropError::NoModel)?;
            let values: Vec<Value> = args
                .iter()
                .map(|a| eval_expr(a, ctx))
                .collect::<Result<_, _>>()?;
            registry.call(name, model, &values, ctx.t)
        }
        Expr::Cmp(op, lhs, rhs) => {
            let l = eval_expr(lhs, ctx)?;
            let r = eval_expr(rhs, ctx)?;
            let result = match op {
                CmpOp::Eq => l == r,
                CmpOp::Ne => l != r,
                CmpOp::Lt | CmpOp::Le | CmpOp::Gt | CmpOp::Ge => {
                    let (a, b) = match (l.as_number(), r.as_number()) {
                        (Some(a), Some(b)) => (a, b),
                        _ => {
                            return Err(PropError::TypeMismatch {
                                expected: "number".into(),
                                got: l,
                            })
                        }
                    };
                    match op {
                        CmpOp::Lt => a < b,
                        CmpOp::Le => a <= b,
                        CmpOp::Gt => a > b,
                        CmpOp::Ge => a >= b,
                        _ => unreachable!(),
                    }
                }
            };
            Ok(Value::Bool(result))
        }
        Expr::And(a, b) => Ok(Value::Bool(
            eval_expr(a, ctx)?.as_bool()? && eval_expr(b, ctx)?.as_bool()?,
        )),
        Expr::Or(a, b) => Ok(Value::Bool(
            eval_expr(a, ctx)?.as_bool()? || eval_expr(b, ctx)?.as_bool()?,
        )),
        Expr::Not(a) => Ok(Value::Bool(!eval_expr(a, ctx)?.as_bool()?)),
    }
}

pub fn eval_bool(expr: &Expr, ctx: &EvalContext) -> Result<bool, PropError> {
    eval_expr(expr, ctx)?.as_bool()
}

/// The causal link between causes and effects: its kind, the condition
/// and result functions, and the opaque annotation `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalRelation {
    pub kind: RelationKind,
    pub theta_c: Expr,
    pub theta_e: Expr,
    pub annotation: Option<String>,
}

/// The five-part property: name, causes, effects, causal relation, degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Property {
    pub name: String,
    pub causes: BTreeSet<String>,
    pub effects: BTreeSet<String>,
    pub relation: CausalRelation,
    /// (free type tag, granularity degree)
    pub degree: (String, String),
}

impl Property {
    pub fn new(
        name: impl Into<String>,
        causes: BTreeSet<String>,
        effects: BTreeSet<String>,
        relation: CausalRelation,
        degree: (String, String),
    ) -> Result<Self, PropError> {
        if effects.is_empty() {
            return Err(PropError::NoEffect);
        }
        let overlap: Vec<String> = causes.intersection(&effects).cloned().collect();
        if !overlap.is_empty() {
            return Err(PropError::CauseEffectOverlap(overlap));
        }
        Ok(Property {
            name: name.into(),
            causes,
            effects,
            relation,
            degree,
        })
    }
}

/// A property together with its declared fact-to-pattern bindings and an
/// optional placement on the property graph axes.
#[derive(Debug, Clone)]
pub struct PropertyDef {
    pub property: Property,
    pub bindings: BTreeMap<String, ConceptualGraph>,
    pub coords: Option<Coords>,
}

/// Turns a logical property into validity constraints: an implication
/// becomes one positive constraint whose condition is the union of the
/// bound cause patterns and whose alternatives are the bound effect
/// patterns; an equivalence adds the converse constraint. Shared
/// coreference variables between condition and alternative form the
/// frontier.
pub fn compile_to_constraints(
    p: &Property,
    bindings: &BTreeMap<String, ConceptualGraph>,
    ontology: &Arc<Ontology>,
) -> Result<Vec<Constraint>, PropError> {
    if !matches!(
        p.relation.kind,
        RelationKind::Implication | RelationKind::Equivalence
    ) {
        return Err(PropError::UnsupportedKind(p.relation.kind));
    }
    let forward = build_positive(
        &p.name,
        &p.causes,
        &p.effects,
        bindings,
        ontology,
        false,
    )?;
    let mut out = vec![Constraint::Positive(forward)];
    if p.relation.kind == RelationKind::Equivalence {
        let converse = build_positive(
            &format!("{}.converse", p.name),
            &p.effects,
            &p.causes,
            bindings,
            ontology,
            true,
        )?;
        out.push(Constraint::Positive(converse));
    }
    Ok(out)
}

/// Union of bound patterns, keeping coreference variable names so shared
/// variables stay linked, then coref-normalized. Trusted property
/// references contribute nothing.
fn union_patterns(
    facts: &BTreeSet<String>,
    bindings: &BTreeMap<String, ConceptualGraph>,
    ontology: &Arc<Ontology>,
) -> Result<ConceptualGraph, PropError> {
    let mut union = ConceptualGraph::new(ontology.clone());
    for fact in facts {
        match bindings.get(fact) {
            Some(pattern) => {
                union.absorb_keep_vars(pattern);
            }
            None => return Err(PropError::UnbindableFact(fact.clone())),
        }
    }
    union
        .normalize_coref()
        .map_err(|e| PropError::Reasoning(ReasoningError::Graph(e)))
}

fn build_positive(
    name: &str,
    causes: &BTreeSet<String>,
    effects: &BTreeSet<String>,
    bindings: &BTreeMap<String, ConceptualGraph>,
    ontology: &Arc<Ontology>,
    merge_effects: bool,
) -> Result<PositiveConstraint, PropError> {
    let bindable = |names: &BTreeSet<String>| -> BTreeSet<String> {
        names
            .iter()
            .filter(|n| bindings.contains_key(*n))
            .cloned()
            .collect()
    };
    // facts without a graph pattern (trusted property references, scalar
    // parameters) contribute nothing to the structural check
    let condition = union_patterns(&bindable(causes), bindings, ontology)?;
    let alternative_sets: Vec<BTreeSet<String>> = if merge_effects {
        vec![bindable(effects)]
    } else {
        bindable(effects)
            .into_iter()
            .map(|f| BTreeSet::from([f]))
            .collect()
    };
    let mut alternatives = Vec::new();
    for set in &alternative_sets {
        let alt = union_patterns(set, bindings, ontology)?;
        let frontier = shared_var_frontier(&condition, &alt);
        alternatives.push(MandatoryPart::new(&condition, alt, frontier)?);
    }
    if alternatives.is_empty() {
        return Err(PropError::NoEffect);
    }
    Ok(PositiveConstraint::new(name, condition, alternatives)?)
}

/// Pairs of nodes carrying the same coreference variable across two graphs.
pub fn shared_var_frontier(
    a: &ConceptualGraph,
    b: &ConceptualGraph,
) -> Vec<(crate::cgraph::ConceptId, crate::cgraph::ConceptId)> {
    use crate::cgraph::Marker;
    let mut vars_a = BTreeMap::new();
    for node in a.concepts() {
        if let Marker::CorefVar(v) = &node.marker {
            vars_a.insert(v.clone(), node.id);
        }
    }
    let mut pairs = Vec::new();
    for node in b.concepts() {
        if let Marker::CorefVar(v) = &node.marker {
            if let Some(aid) = vars_a.get(v) {
                pairs.push((*aid, node.id));
            }
        }
    }
    pairs
}

/// Per-property verdict with human-readable notes (e.g. the offending
/// time point of a temporal check).
#[derive(Debug, Clone)]
pub struct PropertyVerdict {
    pub status: Status,
    pub witnesses: Vec<Morphism>,
    pub notes: Vec<String>,
}

impl PropertyVerdict {
    fn satisfied() -> Self {
        PropertyVerdict {
            status: Status::Satisfied,
            witnesses: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn violated(notes: Vec<String>, witnesses: Vec<Morphism>) -> Self {
        PropertyVerdict {
            status: Status::Violated,
            witnesses,
            notes,
        }
    }

    pub fn is_satisfied(&self) -> bool {
        self.status == Status::Satisfied
    }
}

/// Everything property verification may consult.
pub struct VerifyContext<'a> {
    pub graph: &'a ConceptualGraph,
    pub store: &'a FactStore,
    pub rules: &'a [GraphRule],
    pub registry: Option<&'a HandleFunctionRegistry>,
    pub model: Option<&'a EnterpriseModel>,
    pub bound: usize,
}

impl<'a> VerifyContext<'a> {
    fn eval(&'a self, t: Option<i64>) -> EvalContext<'a> {
        EvalContext {
            store: self.store,
            t,
            registry: self.registry,
            model: self.model,
        }
    }
}

/// Dispatches verification per relation kind: logical kinds compile into
/// constraints over the saturated graph, temporal antecedence and
/// influence evaluate over the fact store's time horizon, and emergence
/// compares projectability before and after saturation.
pub fn verify_property(def: &PropertyDef, ctx: &VerifyContext) -> Result<PropertyVerdict, PropError> {
    let p = &def.property;
    match p.relation.kind {
        RelationKind::Implication | RelationKind::Equivalence => {
            let constraints = compile_to_constraints(p, &def.bindings, ctx.graph.ontology())?;
            let (saturated, _) = saturate(ctx.graph, ctx.rules, ctx.bound.max(1))?;
            for c in &constraints {
                let verdict = c.check(&saturated)?;
                if !verdict.is_satisfied() {
                    return Ok(PropertyVerdict::violated(
                        vec![format!("constraint `{}` violated", c.name())],
                        verdict.witnesses,
                    ));
                }
            }
            Ok(PropertyVerdict::satisfied())
        }
        RelationKind::Temporal => {
            let horizon = ctx.store.horizon();
            if horizon.is_empty() {
                // no time-indexed facts: evaluate untimed, vacuous when the
                // condition never holds
                let cause_holds = eval_bool(&p.relation.theta_c, &ctx.eval(None))?;
                if !cause_holds {
                    return Ok(PropertyVerdict::satisfied());
                }
                let effect_holds = eval_bool(&p.relation.theta_e, &ctx.eval(None))?;
                return Ok(if effect_holds {
                    PropertyVerdict::satisfied()
                } else {
                    PropertyVerdict::violated(vec!["effect never holds".into()], Vec::new())
                });
            }
            for &t in &horizon {
                if !eval_bool(&p.relation.theta_c, &ctx.eval(Some(t)))? {
                    continue;
                }
                let satisfied_later = horizon
                    .iter()
                    .filter(|&&t2| t2 >= t)
                    .map(|&t2| eval_bool(&p.relation.theta_e, &ctx.eval(Some(t2))))
                    .collect::<Result<Vec<bool>, _>>()?
                    .into_iter()
                    .any(|b| b);
                if !satisfied_later {
                    return Ok(PropertyVerdict::violated(
                        vec![format!(
                            "cause holds at t={t} but the effect never holds afterwards (insufficient horizon?)"
                        )],
                        Vec::new(),
                    ));
                }
            }
            Ok(PropertyVerdict::satisfied())
        }
        RelationKind::Influence(sense) => {
            let mut notes = Vec::new();
            for cause in &p.causes {
                let Some(Fact::Variable { series: cs, .. }) = ctx.store.get(cause) else {
                    continue;
                };
                for effect in &p.effects {
                    let Some(Fact::Variable { .. }) = ctx.store.get(effect) else {
                        continue;
                    };
                    for pair in cs.windows(2) {
                        let (t0, v0) = &pair[0];
                        let (t1, v1) = &pair[1];
                        let (Some(c0), Some(c1)) = (v0.as_number(), v1.as_number()) else {
                            return Err(PropError::TypeMismatch {
                                expected: "numeric series".into(),
                                got: v0.clone(),
                            });
                        };
                        let dc = c1 - c0;
                        if dc == 0.0 {
                            continue;
                        }
                        let (Some(e0), Some(e1)) = (
                            ctx.store.sample(effect, *t0).and_then(Value::as_number),
                            ctx.store.sample(effect, *t1).and_then(Value::as_number),
                        ) else {
                            continue;
                        };
                        let de = e1 - e0;
                        let consistent = match sense {
                            Sense::Beneficial => dc * de >= 0.0,
                            Sense::Harmful => dc * de <= 0.0,
                        };
                        if !consistent {
                            notes.push(format!(
                                "between t={t0} and t={t1}: `{cause}` moved by {dc} but `{effect}` moved by {de}"
                            ));
                        }
                    }
                }
            }
            Ok(if notes.is_empty() {
                PropertyVerdict::satisfied()
            } else {
                PropertyVerdict::violated(notes, Vec::new())
            })
        }
        RelationKind::Emergence => {
            let (saturated, _) = saturate(ctx.graph, ctx.rules, ctx.bound.max(1))?;
            for effect in &p.effects {
                let pattern = def
                    .bindings
                    .get(effect)
                    .ok_or_else(|| PropError::UnbindableFact(effect.clone()))?;
                let before = exists_projection(pattern, ctx.graph)
                    .map_err(ReasoningError::from)?;
                let after = exists_projection(pattern, &saturated)
                    .map_err(ReasoningError::from)?;
                if before {
                    return Ok(PropertyVerdict::violated(
                        vec![format!("effect `{effect}` already present before saturation")],
                        Vec::new(),
                    ));
                }
                if !after {
                    return Ok(PropertyVerdict::violated(
                        vec![format!("effect `{effect}` does not emerge under the given rules")],
                        Vec::new(),
                    ));
                }
            }
            Ok(PropertyVerdict::satisfied())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Perspective {
    Stability,
    Reliability,
    Integrity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Typology {
    System,
    ModelingLanguage,
    Axiomatic,
}

/// A reference-matrix entry: a property template with typed placeholders.
/// The template body is property-file text with `$name` placeholders.
#[derive(Debug, Clone, PartialEq)]
pub struct GenericProperty {
    pub name: String,
    pub perspectives: BTreeSet<Perspective>,
    pub typology: Typology,
    /// placeholder name -> required concept type
    pub placeholders: BTreeMap<String, String>,
    pub template: String,
}

impl GenericProperty {
    /// Substitutes placeholder bindings into the template text. Every
    /// placeholder must be bound; when an ontology and model are supplied,
    /// each bound entity must conform to the placeholder's concept type.
    pub fn instantiate_text(
        &self,
        bindings: &BTreeMap<String, String>,
        ontology: Option<&Arc<Ontology>>,
        model: Option<&EnterpriseModel>,
    ) -> Result<String, PropError> {
        let mut text = self.template.clone();
        // longest names first so `$ab` is never clobbered by `$a`
        let mut names: Vec<&String> = self.placeholders.keys().collect();
        names.sort_by_key(|n| std::cmp::Reverse(n.len()));
        for name in names {
            let ty = &self.placeholders[name];
            let value = bindings
                .get(name)
                .ok_or_else(|| PropError::MissingBinding(name.clone()))?;
            if let (Some(ont), Some(model)) = (ontology, model) {
                let conforms = model.entity_kind(value).map_or(false, |kind| {
                    ont.concepts.is_subtype(kind, ty).unwrap_or(false)
                });
                if !conforms {
                    return Err(PropError::BindingTypeViolation {
                        placeholder: name.clone(),
                        value: value.clone(),
                        ty: ty.clone(),
                    });
                }
            }
            text = text.replace(&format!("${name}"), value);
        }
        Ok(text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Target {
    UpperReferent,
    Referent,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scope {
    System,
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Aspect {
    Structural,
    Behavioral,
    Functional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Time {
    Past,
    Present,
    Future,
}

/// Placement on the three axes: target, typology (scope x aspect), time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Coords {
    pub target: Target,
    pub scope: Scope,
    pub aspect: Aspect,
    pub time: Time,
}

impl Default for Coords {
    fn default() -> Self {
        Coords {
            target: Target::Referent,
            scope: Scope::System,
            aspect: Aspect::Functional,
            time: Time::Present,
        }
    }
}

impl std::fmt::Display for Coords {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let target = match self.target {
            Target::UpperReferent => "upper-referent",
            Target::Referent => "referent",
            Target::Lower => "lower",
        };
        let scope = match self.scope {
            Scope::System => "system",
            Scope::Model => "model",
        };
        let aspect = match self.aspect {
            Aspect::Structural => "structural",
            Aspect::Behavioral => "behavioral",
            Aspect::Functional => "functional",
        };
        let time = match self.time {
            Time::Past => "past",
            Time::Present => "present",
            Time::Future => "future",
        };
        write!(f, "{target}/{scope}.{aspect}/{time}")
    }
}

/// The set of properties to prove, organized on the three axes. Nodes are
/// the distinct cause and effect fact-sets; arcs carry the relation kind.
#[derive(Debug, Clone, Default)]
pub struct PropertyGraph {
    entries: BTreeMap<String, (PropertyDef, Coords)>,
}

impl PropertyGraph {
    pub fn new() -> Self {
        PropertyGraph::default()
    }

    pub fn place(&mut self, def: PropertyDef, coords: Coords) -> Result<(), PropError> {
        let name = def.property.name.clone();
        if self.entries.contains_key(&name) {
            return Err(PropError::DuplicateProperty(name));
        }
        self.entries.insert(name, (def, coords));
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&PropertyDef, &Coords)> {
        self.entries.values().map(|(d, c)| (d, c))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct fact-set nodes (cause sets and effect sets).
    pub fn nodes(&self) -> BTreeSet<BTreeSet<String>> {
        let mut nodes = BTreeSet::new();
        for (def, _) in self.entries.values() {
            if !def.property.causes.is_empty() {
                nodes.insert(def.property.causes.clone());
            }
            nodes.insert(def.property.effects.clone());
        }
        nodes
    }

    /// One typed arc per property, from its cause set to its effect set.
    pub fn arcs(&self) -> Vec<(BTreeSet<String>, RelationKind, BTreeSet<String>, String)> {
        self.entries
            .values()
            .map(|(def, _)| {
                (
                    def.property.causes.clone(),
                    def.property.relation.kind,
                    def.property.effects.clone(),
                    def.property.name.clone(),
                )
            })
            .collect()
    }
}

#[derive(Debug)]
pub struct PropertyGraphReport {
    pub entries: Vec<(Coords, String, PropertyVerdict)>,
    pub overall: Status,
}

/// Verifies every placed property, grouping results by axis coordinates.
pub fn check_property_graph(
    pgraph: &PropertyGraph,
    ctx: &VerifyContext,
) -> Result<PropertyGraphReport, PropError> {
    let mut entries: Vec<(Coords, String, PropertyVerdict)> = Vec::new();
    let mut overall = Status::Satisfied;
    let mut sorted: Vec<(&PropertyDef, &Coords)> = pgraph.entries().collect();
    sorted.sort_by_key(|(def, coords)| (**coords, def.property.name.clone()));
    for (def, coords) in sorted {
        let verdict = verify_property(def, ctx)?;
        if !verdict.is_satisfied() {
            overall = Status::Violated;
        }
        entries.push((*coords, def.property.name.clone(), verdict));
    }
    Ok(PropertyGraphReport { entries, overall })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> FactStore {
        let mut s = FactStore::new();
        s.insert(Fact::Parameter {
            name: "domain".into(),
            tag: TypeTag::Text,
            value: Value::Text("Energy".into()),
        })
        .unwrap();
        s.insert(Fact::Variable {
            name: "level".into(),
            tag: TypeTag::Int,
            series: vec![(0, Value::Int(1)), (1, Value::Int(5)), (2, Value::Int(3))],
            def: Domain::IntRange(0, 10),
        })
        .unwrap();
        s.insert(Fact::PropertyRef {
            name: "trusted".into(),
        })
        .unwrap();
        s
    }

    fn ctx(s: &FactStore, t: Option<i64>) -> EvalContext<'_> {
        EvalContext {
            store: s,
            t,
            registry: None,
            model: None,
        }
    }

    #[test]
    fn empty_condition_is_true() {
        let s = store();
        assert!(eval_bool(&Expr::True, &ctx(&s, None)).unwrap());
    }

    #[test]
    fn parameter_comparison() {
        let s = store();
        let e = Expr::Cmp(
            CmpOp::Eq,
            Box::new(Expr::Name("domain".into())),
            Box::new(Expr::Name("Energy".into())),
        );
        assert!(eval_bool(&e, &ctx(&s, None)).unwrap());
    }

    #[test]
    fn variable_needs_time_and_samples_latest() {
        let s = store();
        let e = Expr::Cmp(
            CmpOp::Ge,
            Box::new(Expr::Name("level".into())),
            Box::new(Expr::Lit(Value::Int(5))),
        );
        assert!(matches!(
            eval_bool(&e, &ctx(&s, None)),
            Err(PropError::MissingTime(_))
        ));
        assert!(eval_bool(&e, &ctx(&s, Some(1))).unwrap());
        assert!(!eval_bool(&e, &ctx(&s, Some(2))).unwrap());
    }

    #[test]
    fn trusted_property_reference_is_axiom() {
        let s = store();
        assert!(eval_bool(&Expr::Name("trusted".into()), &ctx(&s, None)).unwrap());
    }

    #[test]
    fn out_of_domain_value_rejected() {
        let mut s = FactStore::new();
        let err = s
            .insert(Fact::Variable {
                name: "v".into(),
                tag: TypeTag::Int,
                series: vec![(0, Value::Int(99))],
                def: Domain::IntRange(0, 10),
            })
            .unwrap_err();
        assert!(matches!(err, PropError::OutOfDomain(_, _)));
    }

    #[test]
    fn property_requires_effect_and_disjointness() {
        let rel = CausalRelation {
            kind: RelationKind::Implication,
            theta_c: Expr::True,
            theta_e: Expr::True,
            annotation: None,
        };
        assert!(matches!(
            Property::new("p", BTreeSet::new(), BTreeSet::new(), rel.clone(), Default::default()),
            Err(PropError::NoEffect)
        ));
        let shared = BTreeSet::from(["f".to_string()]);
        assert!(matches!(
            Property::new("p", shared.clone(), shared, rel, Default::default()),
            Err(PropError::CauseEffectOverlap(_))
        ));
    }

    #[test]
    fn temporal_vacuous_when_condition_never_holds() {
        let s = store();
        let rel = CausalRelation {
            kind: RelationKind::Temporal,
            theta_c: Expr::Lit(Value::Bool(false)),
            theta_e: Expr::Lit(Value::Bool(false)),
            annotation: None,
        };
        let p = Property::new(
            "vacuous",
            BTreeSet::new(),
            BTreeSet::from(["level".to_string()]),
            rel,
            Default::default(),
        )
        .unwrap();
        let g = ConceptualGraph::new(Ontology::minimal());
        let vctx = VerifyContext {
            graph: &g,
            store: &s,
            rules: &[],
            registry: None,
            model: None,
            bound: 5,
        };
        let def = PropertyDef {
            property: p,
            bindings: BTreeMap::new(),
            coords: None,
        };
        assert!(verify_property(&def, &vctx).unwrap().is_satisfied());
    }

    #[test]
    fn temporal_antecedence_over_horizon() {
        let mut s = FactStore::new();
        s.insert(Fact::Variable {
            name: "alarm".into(),
            tag: TypeTag::Bool,
            series: vec![(0, Value::Bool(false)), (1, Value::Bool(true))],
            def: Domain::Any,
        })
        .unwrap();
        s.insert(Fact::Variable {
            name: "shutdown".into(),
            tag: TypeTag::Bool,
            series: vec![(0, Value::Bool(false)), (2, Value::Bool(true))],
            def: Domain::Any,
        })
        .unwrap();
        let rel = CausalRelation {
            kind: RelationKind::Temporal,
            theta_c: Expr::Name("alarm".into()),
            theta_e: Expr::Name("shutdown".into()),
            annotation: None,
        };
        let p = Property::new(
            "alarm-then-shutdown",
            BTreeSet::from(["alarm".to_string()]),
            BTreeSet::from(["shutdown".to_string()]),
            rel,
            Default::default(),
        )
        .unwrap();
        let g = ConceptualGraph::new(Ontology::minimal());
        let vctx = VerifyContext {
            graph: &g,
            store: &s,
            rules: &[],
            registry: None,
            model: None,
            bound: 5,
        };
        let def = PropertyDef {
            property: p,
            bindings: BTreeMap::new(),
            coords: None,
        };
        assert!(verify_property(&def, &vctx).unwrap().is_satisfied());
    }

    #[test]
    fn influence_direction_check() {
        let mut s = FactStore::new();
        s.insert(Fact::Variable {
            name: "load".into(),
            tag: TypeTag::Int,
            series: vec![(0, Value::Int(1)), (1, Value::Int(3)), (2, Value::Int(2))],
            def: Domain::Any,
        })
        .unwrap();
        s.insert(Fact::Variable {
            name: "throughput".into(),
            tag: TypeTag::Int,
            series: vec![(0, Value::Int(10)), (1, Value::Int(20)), (2, Value::Int(15))],
            def: Domain::Any,
        })
        .unwrap();
        let mk = |sense| {
            let rel = CausalRelation {
                kind: RelationKind::Influence(sense),
                theta_c: Expr::True,
                theta_e: Expr::True,
                annotation: None,
            };
            PropertyDef {
                property: Property::new(
                    "influence",
                    BTreeSet::from(["load".to_string()]),
                    BTreeSet::from(["throughput".to_string()]),
                    rel,
                    Default::default(),
                )
                .unwrap(),
                bindings: BTreeMap::new(),
                coords: None,
            }
        };
        let g = ConceptualGraph::new(Ontology::minimal());
        let vctx = VerifyContext {
            graph: &g,
            store: &s,
            rules: &[],
            registry: None,
            model: None,
            bound: 5,
        };
        assert!(verify_property(&mk(Sense::Beneficial), &vctx)
            .unwrap()
            .is_satisfied());
        assert_eq!(
            verify_property(&mk(Sense::Harmful), &vctx).unwrap().status,
            Status::Violated
        );
    }

    #[test]
    fn place_rejects_duplicates() {
        let rel = CausalRelation {
            kind: RelationKind::Implication,
            theta_c: Expr::True,
            theta_e: Expr::True,
            annotation: None,
        };
        let def = PropertyDef {
            property: Property::new(
                "p",
                BTreeSet::new(),
                BTreeSet::from(["f".to_string()]),
                rel,
                Default::default(),
            )
            .unwrap(),
            bindings: BTreeMap::new(),
            coords: None,
        };
        let mut pg = PropertyGraph::new();
        pg.place(def.clone(), Coords::default()).unwrap();
        assert!(matches!(
            pg.place(def, Coords::default()),
            Err(PropError::DuplicateProperty(_))
        ));
        assert_eq!(pg.nodes().len(), 1);
        assert_eq!(pg.arcs().len(), 1);
    }

    #[test]
    fn implication_compiles_and_verifies_against_graph() {
        use crate::cgraph::Marker;
        use crate::ingest::reference_ontology;

        let ont = reference_ontology();
        // cause: some activity *a outputs an energy flow
        let mut cause = ConceptualGraph::new(ont.clone());
        let a = cause
            .add_concept("Activity", Marker::CorefVar("a".into()))
            .unwrap();
        let f = cause.add_concept("Flow", Marker::Generic).unwrap();
        let d = cause
            .add_concept("Domain", Marker::Individual("Energy".into()))
            .unwrap();
        cause.add_relation("has_output", &[a, f]).unwrap();
        cause.add_relation("operational_domain", &[f, d]).unwrap();
        // effect: the same activity *a also takes some input flow
        let mut effect = ConceptualGraph::new(ont.clone());
        let a2 = effect
            .add_concept("Activity", Marker::CorefVar("a".into()))
            .unwrap();
        let f2 = effect.add_concept("Flow", Marker::Generic).unwrap();
        effect.add_relation("has_input", &[a2, f2]).unwrap();

        let rel = CausalRelation {
            kind: RelationKind::Implication,
            theta_c: Expr::True,
            theta_e: Expr::True,
            annotation: None,
        };
        let p = Property::new(
            "converters-have-input",
            BTreeSet::from(["energy_output".to_string()]),
            BTreeSet::from(["some_input".to_string()]),
            rel,
            ("validity".into(), "activity".into()),
        )
        .unwrap();
        let bindings = BTreeMap::from([
            ("energy_output".to_string(), cause),
            ("some_input".to_string(), effect),
        ]);
        let constraints = compile_to_constraints(&p, &bindings, &ont).unwrap();
        assert_eq!(constraints.len(), 1);

        // violating model graph: Gen outputs an energy flow, no input
        let mut bad = ConceptualGraph::new(ont.clone());
        let gen = bad
            .add_concept("Activity", Marker::Individual("Gen".into()))
            .unwrap();
        let pf = bad
            .add_concept("Flow", Marker::Individual("Power".into()))
            .unwrap();
        let en = bad
            .add_concept("Domain", Marker::Individual("Energy".into()))
            .unwrap();
        bad.add_relation("has_output", &[gen, pf]).unwrap();
        bad.add_relation("operational_domain", &[pf, en]).unwrap();

        let store = FactStore::new();
        let vctx = |g| VerifyContext {
            graph: g,
            store: &store,
            rules: &[],
            registry: None,
            model: None,
            bound: 5,
        };
        let def = PropertyDef {
            property: p,
            bindings,
            coords: None,
        };
        let verdict = verify_property(&def, &vctx(&bad)).unwrap();
        assert_eq!(verdict.status, Status::Violated);

        // add an input flow to Gen: satisfied
        let mut good = bad.clone();
        let inflow = good
            .add_concept("Flow", Marker::Individual("Fuel".into()))
            .unwrap();
        good.add_relation("has_input", &[gen, inflow]).unwrap();
        // the violating projection maps *a -> Gen; the frontier must force
        // the extension to reuse Gen, so the input on Gen satisfies it
        assert!(verify_property(&def, &vctx(&good)).unwrap().is_satisfied());
    }

    #[test]
    fn equivalence_adds_converse_constraint() {
        use crate::cgraph::Marker;
        use crate::ingest::reference_ontology;

        let ont = reference_ontology();
        let mut cause = ConceptualGraph::new(ont.clone());
        let a = cause
            .add_concept("Activity", Marker::CorefVar("a".into()))
            .unwrap();
        let f = cause.add_concept("Flow", Marker::Generic).unwrap();
        cause.add_relation("has_output", &[a, f]).unwrap();
        let mut effect = ConceptualGraph::new(ont.clone());
        let a2 = effect
            .add_concept("Activity", Marker::CorefVar("a".into()))
            .unwrap();
        let f2 = effect.add_concept("Flow", Marker::Generic).unwrap();
        effect.add_relation("has_input", &[a2, f2]).unwrap();
        let rel = CausalRelation {
            kind: RelationKind::Equivalence,
            theta_c: Expr::True,
            theta_e: Expr::True,
            annotation: None,
        };
        let p = Property::new(
            "io-balance",
            BTreeSet::from(["out".to_string()]),
            BTreeSet::from(["inp".to_string()]),
            rel,
            Default::default(),
        )
        .unwrap();
        let bindings = BTreeMap::from([
            ("out".to_string(), cause),
            ("inp".to_string(), effect),
        ]);
        let constraints = compile_to_constraints(&p, &bindings, &ont).unwrap();
        assert_eq!(constraints.len(), 2);

        // input without output violates only the converse direction
        let mut g = ConceptualGraph::new(ont.clone());
        let act = g
            .add_concept("Activity", Marker::Individual("Sink".into()))
            .unwrap();
        let fl = g
            .add_concept("Flow", Marker::Individual("Waste".into()))
            .unwrap();
        g.add_relation("has_input", &[act, fl]).unwrap();
        assert!(constraints[0].check(&g).unwrap().is_satisfied());
        assert!(!constraints[1].check(&g).unwrap().is_satisfied());
    }

    #[test]
    fn emergence_requires_effect_to_appear_under_rules() {
        use crate::cgraph::Marker;
        use crate::ingest::reference_ontology;

        let ont = reference_ontology();
        // rule: whenever *a outputs *f, some activity consumes *f
        let mut hyp = ConceptualGraph::new(ont.clone());
        let ha = hyp
            .add_concept("Activity", Marker::CorefVar("a".into()))
            .unwrap();
        let hf = hyp.add_concept("Flow", Marker::CorefVar("f".into())).unwrap();
        hyp.add_relation("has_output", &[ha, hf]).unwrap();
        let mut conc = ConceptualGraph::new(ont.clone());
        let cf = conc
            .add_concept("Flow", Marker::CorefVar("f".into()))
            .unwrap();
        let ca = conc.add_concept("Activity", Marker::Generic).unwrap();
        conc.add_relation("has_input", &[ca, cf]).unwrap();
        let rule = GraphRule::new("consumer-exists", hyp, conc, vec![(hf, cf)]).unwrap();

        let mut g = ConceptualGraph::new(ont.clone());
        let act = g
            .add_concept("Activity", Marker::Individual("Mill".into()))
            .unwrap();
        let fl = g
            .add_concept("Flow", Marker::Individual("Grain".into()))
            .unwrap();
        g.add_relation("has_output", &[act, fl]).unwrap();

        let mut pattern = ConceptualGraph::new(ont.clone());
        let pa = pattern.add_concept("Activity", Marker::Generic).unwrap();
        let pf = pattern.add_concept("Flow", Marker::Generic).unwrap();
        pattern.add_relation("has_input", &[pa, pf]).unwrap();

        let rel = CausalRelation {
            kind: RelationKind::Emergence,
            theta_c: Expr::True,
            theta_e: Expr::True,
            annotation: None,
        };
        let p = Property::new(
            "consumption-emerges",
            BTreeSet::new(),
            BTreeSet::from(["consumption".to_string()]),
            rel,
            Default::default(),
        )
        .unwrap();
        let def = PropertyDef {
            property: p,
            bindings: BTreeMap::from([("consumption".to_string(), pattern)]),
            coords: None,
        };
        let store = FactStore::new();
        let rules = [rule];
        let with_rules = VerifyContext {
            graph: &g,
            store: &store,
            rules: &rules,
            registry: None,
            model: None,
            bound: 10,
        };
        assert!(verify_property(&def, &with_rules).unwrap().is_satisfied());
        let without_rules = VerifyContext {
            graph: &g,
            store: &store,
            rules: &[],
            registry: None,
            model: None,
            bound: 10,
        };
        assert_eq!(
            verify_property(&def, &without_rules).unwrap().status,
            Status::Violated
        );
    }

    #[test]
    fn instantiate_substitutes_and_requires_bindings() {
        let gp = GenericProperty {
            name: "tpl".into(),
            perspectives: BTreeSet::from([Perspective::Integrity]),
            typology: Typology::System,
            placeholders: BTreeMap::from([("a".to_string(), "Activity".to_string())]),
            template: "property p_$a { }".into(),
        };
        let text = gp
            .instantiate_text(
                &BTreeMap::from([("a".to_string(), "Drill".to_string())]),
                None,
                None,
            )
            .unwrap();
        assert_eq!(text, "property p_Drill { }");
        assert!(matches!(
            gp.instantiate_text(&BTreeMap::new(), None, None),
            Err(PropError::MissingBinding(_))
        ));
    }
}
