//! Enterprise process-model ingestion: a small typed entity/link model,
//! its translation into a conceptual graph over the reference ontology,
//! automatic fact extraction, and the registry of handle functions that
//! give expressions access to the model.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::cgraph::{CgError, ConceptId, ConceptualGraph, Marker};
use crate::ontology::Ontology;
use crate::propmodel::{Fact, FactStore, PropError, TypeTag, Value};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("duplicate entity `{0}`")]
    DuplicateEntity(String),
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("link {kind:?} cannot go from {from} ({from_kind:?}) to {to} ({to_kind:?})")]
    BadLink {
        kind: LinkKind,
        from: String,
        from_kind: EntityKind,
        to: String,
        to_kind: EntityKind,
    },
    #[error(transparent)]
    Graph(#[from] CgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EntityKind {
    Process,
    Activity,
    Resource,
    Actor,
    Flow,
    Location,
}

impl EntityKind {
    pub fn type_name(&self) -> &'static str {
        match self {
            EntityKind::Process => "Process",
            EntityKind::Activity => "Activity",
            EntityKind::Resource => "Resource",
            EntityKind::Actor => "Actor",
            EntityKind::Flow => "Flow",
            EntityKind::Location => "Location",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LinkKind {
    ComposedOf,
    HasInput,
    HasOutput,
    UsesResource,
    PerformedBy,
    Precedes,
    LocatedAt,
}

impl LinkKind {
    pub fn relation_name(&self) -> &'static str {
        match self {
            LinkKind::ComposedOf => "composed_of",
            LinkKind::HasInput => "has_input",
            LinkKind::HasOutput => "has_output",
            LinkKind::UsesResource => "uses_resource",
            LinkKind::PerformedBy => "performed_by",
            LinkKind::Precedes => "precedes",
            LinkKind::LocatedAt => "located_at",
        }
    }

    /// Legal (source, target) entity kinds for each link kind.
    fn endpoint_ok(&self, from: EntityKind, to: EntityKind) -> bool {
        use EntityKind::*;
        match self {
            LinkKind::ComposedOf => from == Process && matches!(to, Activity | Process),
            LinkKind::HasInput | LinkKind::HasOutput => from == Activity && to == Flow,
            LinkKind::UsesResource => from == Activity && to == Resource,
            LinkKind::PerformedBy => from == Activity && to == Actor,
            LinkKind::Precedes => from == Activity && to == Activity,
            LinkKind::LocatedAt => matches!(from, Resource | Activity) && to == Location,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entity {
    pub id: String,
    pub kind: EntityKind,
    /// Free-form attributes; `operational_domain` is given special
    /// treatment during translation and fact extraction.
    pub attrs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Link {
    pub kind: LinkKind,
    pub from: String,
    pub to: String,
}

/// A process model: typed entities and typed links between them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnterpriseModel {
    entities: BTreeMap<String, Entity>,
    links: BTreeSet<Link>,
}

/// The built-in reference ontology for process models, parsed from the
/// shipped fixture.
pub fn reference_ontology() -> Arc<Ontology> {
    let text = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/reference.ont"));
    let (ont, diags) = crate::frontio::parse_ontology("reference.ont", text);
    ont.unwrap_or_else(|| panic!("built-in reference ontology must parse: {diags:?}"))
}

impl EnterpriseModel {
    pub fn new() -> Self {
        EnterpriseModel::default()
    }

    pub fn add_entity(
        &mut self,
        id: impl Into<String>,
        kind: EntityKind,
    ) -> Result<(), ModelError> {
        let id = id.into();
        if self.entities.contains_key(&id) {
            return Err(ModelError::DuplicateEntity(id));
        }
        self.entities.insert(
            id.clone(),
            Entity {
                id,
                kind,
                attrs: BTreeMap::new(),
            },
        );
        Ok(())
    }

    pub fn set_attr(
        &mut self,
        id: &str,
        key: impl Into<String>,
        value: impl Into<String>,
    ) -> Result<(), ModelError> {
        let entity = self
            .entities
            .get_mut(id)
            .ok_or_else(|| ModelError::UnknownEntity(id.to_string()))?;
        entity.attrs.insert(key.into(), value.into());
        Ok(())
    }

    pub fn add_link(&mut self, kind: LinkKind, from: &str, to: &str) -> Result<(), ModelError> {
        let from_kind = self
            .entities
            .get(from)
            .ok_or_else(|| ModelError::UnknownEntity(from.to_string()))?
            .kind;
        let to_kind = self
            .entities
            .get(to)
            .ok_or_else(|| ModelError::UnknownEntity(to.to_string()))?
            .kind;
        if !kind.endpoint_ok(from_kind, to_kind) {
            return Err(ModelError::BadLink {
                kind,
                from: from.to_string(),
                from_kind,
                to: to.to_string(),
                to_kind,
            });
        }
        self.links.insert(Link {
            kind,
            from: from.to_string(),
            to: to.to_string(),
        });
        Ok(())
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn entity_kind(&self, id: &str) -> Option<&'static str> {
        self.entities.get(id).map(|e| e.kind.type_name())
    }

    pub fn links(&self) -> impl Iterator<Item = &Link> {
        self.links.iter()
    }

    pub fn links_from(&self, id: &str, kind: LinkKind) -> impl Iterator<Item = &Link> + '_ {
        let id = id.to_string();
        self.links
            .iter()
            .filter(move |l| l.kind == kind && l.from == id)
    }

    pub fn links_to(&self, id: &str, kind: LinkKind) -> impl Iterator<Item = &Link> + '_ {
        let id = id.to_string();
        self.links
            .iter()
            .filter(move |l| l.kind == kind && l.to == id)
    }
}

/// Translates a process model into a conceptual graph over the given
/// ontology: each entity becomes an individual concept of its kind's
/// type, each link a relation edge, each `operational_domain` attribute
/// an edge to a (deduplicated) Domain individual, and every other
/// attribute an edge to a Value individual via a relation named after the
/// attribute key when the ontology declares one, else via `category`.
pub fn model_to_cg(
    model: &EnterpriseModel,
    ontology: &Arc<Ontology>,
) -> Result<ConceptualGraph, ModelError> {
    let mut g = ConceptualGraph::new(ontology.clone());
    let mut node_of: BTreeMap<&str, ConceptId> = BTreeMap::new();
    for entity in model.entities() {
        let id = g.add_concept(
            entity.kind.type_name(),
            Marker::Individual(entity.id.clone()),
        )?;
        node_of.insert(&entity.id, id);
    }
    let mut domain_nodes: BTreeMap<&str, ConceptId> = BTreeMap::new();
    let mut value_nodes: BTreeMap<&str, ConceptId> = BTreeMap::new();
    for entity in model.entities() {
        let subject = node_of[entity.id.as_str()];
        for (key, value) in &entity.attrs {
            if key == "operational_domain" {
                let dom = match domain_nodes.get(value.as_str()) {
                    Some(&id) => id,
                    None => {
                        let id = g.add_concept("Domain", Marker::Individual(value.clone()))?;
                        domain_nodes.insert(value, id);
                        id
                    }
                };
                g.add_relation("operational_domain", &[subject, dom])?;
            } else {
                let val = match value_nodes.get(value.as_str()) {
                    Some(&id) => id,
                    None => {
                        let id = g.add_concept("Value", Marker::Individual(value.clone()))?;
                        value_nodes.insert(value, id);
                        id
                    }
                };
                let rel = if ontology.relations.signature(key).is_ok() {
                    key.as_str()
                } else {
                    "category"
                };
                g.add_relation(rel, &[subject, val])?;
            }
        }
    }
    for link in model.links() {
        g.add_relation(
            link.kind.relation_name(),
            &[node_of[link.from.as_str()], node_of[link.to.as_str()]],
        )?;
    }
    Ok(g)
}

/// Extracts parameter facts from entity attributes (`<key>.<entity>`) and
/// declares one handle-function fact per registered function.
pub fn extract_facts(
    model: &EnterpriseModel,
    registry: &HandleFunctionRegistry,
    store: &mut FactStore,
) -> Result<Vec<String>, PropError> {
    let mut notes = Vec::new();
    for entity in model.entities() {
        for (key, value) in &entity.attrs {
            let name = format!("{}.{}", key, entity.id);
            let fact = Fact::Parameter {
                name: name.clone(),
                tag: TypeTag::Text,
                value: Value::Text(value.clone()),
            };
            match store.insert(fact) {
                Ok(()) => {}
                Err(PropError::DuplicateFact(_)) => {
                    notes.push(format!("fact `{name}` already declared; model value ignored"));
                }
                Err(e) => return Err(e),
            }
        }
    }
    for name in registry.names() {
        let fact = Fact::Handle {
            name: name.clone(),
            params: Vec::new(),
            result: TypeTag::Text,
        };
        if store.insert(fact).is_err() {
            notes.push(format!("fact `{name}` already declared; handle skipped"));
        }
    }
    Ok(notes)
}

type HandleFn =
    Box<dyn Fn(&EnterpriseModel, &[Value], Option<i64>) -> Result<Value, PropError> + Send + Sync>;

/// Named accessor functions evaluated against the model; expressions call
/// them by name.
pub struct HandleFunctionRegistry {
    functions: BTreeMap<String, HandleFn>,
}

impl std::fmt::Debug for HandleFunctionRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HandleFunctionRegistry")
            .field("functions", &self.names())
            .finish()
    }
}

fn arg_text(args: &[Value], i: usize, name: &str) -> Result<String, PropError> {
    match args.get(i) {
        Some(Value::Text(s)) => Ok(s.clone()),
        Some(other) => Err(PropError::TypeMismatch {
            expected: "entity name".into(),
            got: other.clone(),
        }),
        None => Err(PropError::HandleFailed {
            name: name.to_string(),
            message: format!("missing argument {}", i + 1),
        }),
    }
}

impl Default for HandleFunctionRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl HandleFunctionRegistry {
    pub fn empty() -> Self {
        HandleFunctionRegistry {
            functions: BTreeMap::new(),
        }
    }

    /// The stock accessors: `inputs`, `outputs`, `domain_of`, `precedes`,
    /// `resource_of`, `colocated`, `contains`.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("inputs", |m, args, _| {
            let a = arg_text(args, 0, "inputs")?;
            require_entity(m, &a, "inputs")?;
            Ok(Value::List(
                m.links_from(&a, LinkKind::HasInput)
                    .map(|l| Value::Text(l.to.clone()))
                    .collect(),
            ))
        });
        r.register("outputs", |m, args, _| {
            let a = arg_text(args, 0, "outputs")?;
            require_entity(m, &a, "outputs")?;
            Ok(Value::List(
                m.links_from(&a, LinkKind::HasOutput)
                    .map(|l| Value::Text(l.to.clone()))
                    .collect(),
            ))
        });
        r.register("domain_of", |m, args, _| {
            let f = arg_text(args, 0, "domain_of")?;
            let entity = m
                .entity(&f)
                .ok_or_else(|| PropError::HandleFailed {
                    name: "domain_of".into(),
                    message: format!("unknown entity `{f}`"),
                })?;
            Ok(Value::Text(
                entity
                    .attrs
                    .get("operational_domain")
                    .cloned()
                    .unwrap_or_default(),
            ))
        });
        r.register("precedes", |m, args, _| {
            let a = arg_text(args, 0, "precedes")?;
            let b = arg_text(args, 1, "precedes")?;
            Ok(Value::Bool(
                m.links_from(&a, LinkKind::Precedes).any(|l| l.to == b),
            ))
        });
        r.register("resource_of", |m, args, _| {
            let a = arg_text(args, 0, "resource_of")?;
            require_entity(m, &a, "resource_of")?;
            Ok(Value::List(
                m.links_from(&a, LinkKind::UsesResource)
                    .map(|l| Value::Text(l.to.clone()))
                    .collect(),
            ))
        });
        r.register("colocated", |m, args, _| {
            let a = arg_text(args, 0, "colocated")?;
            let b = arg_text(args, 1, "colocated")?;
            let loc = |id: &str| -> Vec<&str> {
                m.links_from(id, LinkKind::LocatedAt)
                    .map(|l| l.to.as_str())
                    .collect()
            };
            let la = loc(&a);
            Ok(Value::Bool(
                !la.is_empty() && loc(&b).iter().any(|l| la.contains(l)),
            ))
        });
        r.register("contains", |m, args, _| {
            let p = arg_text(args, 0, "contains")?;
            let c = arg_text(args, 1, "contains")?;
            Ok(Value::Bool(
                m.links_from(&p, LinkKind::ComposedOf).any(|l| l.to == c),
            ))
        });
        r
    }

    pub fn register(
        &mut self,
        name: impl Into<String>,
        f: impl Fn(&EnterpriseModel, &[Value], Option<i64>) -> Result<Value, PropError>
            + Send
            + Sync
            + 'static,
    ) {
        self.functions.insert(name.into(), Box::new(f));
    }

    pub fn names(&self) -> Vec<String> {
        self.functions.keys().cloned().collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.functions.contains_key(name)
    }

    pub fn call(
        &self,
        name: &str,
        model: &EnterpriseModel,
        args: &[Value],
        t: Option<i64>,
    ) -> Result<Value, PropError> {
        let f = self
            .functions
            .get(name)
            .ok_or_else(|| PropError::UnknownHandle(name.to_string()))?;
        f(model, args, t)
    }
}

fn require_entity(m: &EnterpriseModel, id: &str, handle: &str) -> Result<(), PropError> {
    if m.entity(id).is_none() {
        return Err(PropError::HandleFailed {
            name: handle.to_string(),
            message: format!("unknown entity `{id}`"),
        });
    }
    Ok(())
}
