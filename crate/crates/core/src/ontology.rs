//! Concept and relation type lattices: the domain ontology.
//!
//! Both lattices are DAG partial orders with a universal top type. Relation
//! types carry signatures fixing arity and argument types. Lattices are
//! immutable after construction and shared behind `Arc` by every graph they
//! govern.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

/// Name of the universal concept type, the top of every concept lattice.
pub const UNIVERSAL: &str = "Universal";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OntologyError {
    #[error("unknown concept type `{0}`")]
    UnknownType(String),
    #[error("unknown relation type `{0}`")]
    UnknownRelation(String),
    #[error("subtype cycle: {}", .0.join(" < "))]
    Cycle(Vec<String>),
    #[error("type `{0}` does not reach the top type `{1}`")]
    Unreachable(String, String),
    #[error("relation `{child}` has arity {child_arity} but its parent `{parent}` has arity {parent_arity}")]
    ArityMismatch {
        child: String,
        parent: String,
        child_arity: usize,
        parent_arity: usize,
    },
    #[error("relation `{child}` argument {position} type `{child_ty}` is not a subtype of parent `{parent}` argument type `{parent_ty}`")]
    SignatureNotCovariant {
        child: String,
        parent: String,
        position: usize,
        child_ty: String,
        parent_ty: String,
    },
    #[error("relation `{relation}` signature mentions unknown concept type `{ty}`")]
    SignatureUnknownType { relation: String, ty: String },
    #[error("object model references undeclared class `{0}`")]
    UnknownClass(String),
    #[error("inheritance cycle involving class `{0}`")]
    InheritanceCycle(String),
}

/// Partial order over concept type identifiers with a universal top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptLattice {
    types: BTreeSet<String>,
    /// Direct (child, parents) edges.
    parents: BTreeMap<String, BTreeSet<String>>,
    /// Reflexive-transitive closure: type -> all supertypes including itself.
    ancestors: BTreeMap<String, BTreeSet<String>>,
    top: String,
}

impl ConceptLattice {
    /// Builds and validates a lattice from declared types and direct
    /// subtype edges. The top type is added if absent; every other type
    /// without an explicit parent is placed directly under it.
    pub fn build(
        types: impl IntoIterator<Item = String>,
        subtype_edges: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, OntologyError> {
        let mut all: BTreeSet<String> = types.into_iter().collect();
        all.insert(UNIVERSAL.to_string());
        let mut parents: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (child, parent) in subtype_edges {
            if !all.contains(&child) {
                return Err(OntologyError::UnknownType(child));
            }
            if !all.contains(&parent) {
                return Err(OntologyError::UnknownType(parent));
            }
            parents.entry(child).or_default().insert(parent);
        }
        for ty in &all {
            if ty != UNIVERSAL && !parents.contains_key(ty) {
                parents
                    .entry(ty.clone())
                    .or_default()
                    .insert(UNIVERSAL.to_string());
            }
        }
        let ancestors = closure(&all, &parents)?;
        for ty in &all {
            if !ancestors[ty].contains(UNIVERSAL) {
                return Err(OntologyError::Unreachable(ty.clone(), UNIVERSAL.into()));
            }
        }
        Ok(ConceptLattice {
            types: all,
            parents,
            ancestors,
            top: UNIVERSAL.to_string(),
        })
    }

    /// The minimal lattice: just the universal type.
    pub fn minimal() -> Self {
        ConceptLattice::build([], []).expect("minimal lattice is valid")
    }

    pub fn top(&self) -> &str {
        &self.top
    }

    pub fn types(&self) -> impl Iterator<Item = &str> {
        self.types.iter().map(String::as_str)
    }

    pub fn contains(&self, ty: &str) -> bool {
        self.types.contains(ty)
    }

    pub fn direct_parents(&self, ty: &str) -> Result<&BTreeSet<String>, OntologyError> {
        if !self.contains(ty) {
            return Err(OntologyError::UnknownType(ty.into()));
        }
        static EMPTY: std::sync::OnceLock<BTreeSet<String>> = std::sync::OnceLock::new();
        Ok(self
            .parents
            .get(ty)
            .unwrap_or_else(|| EMPTY.get_or_init(BTreeSet::new)))
    }

    /// True iff `a` is a (reflexive) subtype of `b`.
    pub fn is_subtype(&self, a: &str, b: &str) -> Result<bool, OntologyError> {
        if !self.contains(b) {
            return Err(OntologyError::UnknownType(b.into()));
        }
        match self.ancestors.get(a) {
            Some(anc) => Ok(anc.contains(b)),
            None => Err(OntologyError::UnknownType(a.into())),
        }
    }

    /// The maximal elements of the set of common subtypes of `a` and `b`.
    /// Empty when the two types share no descendant.
    pub fn max_common_subtypes(&self, a: &str, b: &str) -> Result<BTreeSet<String>, OntologyError> {
        if !self.contains(a) {
            return Err(OntologyError::UnknownType(a.into()));
        }
        if !self.contains(b) {
            return Err(OntologyError::UnknownType(b.into()));
        }
        let common: Vec<&String> = self
            .types
            .iter()
            .filter(|t| self.ancestors[*t].contains(a) && self.ancestors[*t].contains(b))
            .collect();
        let mut maximal = BTreeSet::new();
        for t in &common {
            let dominated = common
                .iter()
                .any(|u| *u != *t && self.ancestors[*t].contains(*u));
            if !dominated {
                maximal.insert((*t).clone());
            }
        }
        Ok(maximal)
    }

    /// Deterministic pick for join/merge: if one type subsumes the other,
    /// the more specific wins; otherwise the lexicographically smallest
    /// maximal common subtype. `None` when no common subtype exists.
    pub fn merge_type(&self, a: &str, b: &str) -> Result<Option<String>, OntologyError> {
        if self.is_subtype(a, b)? {
            return Ok(Some(a.to_string()));
        }
        if self.is_subtype(b, a)? {
            return Ok(Some(b.to_string()));
        }
        Ok(self.max_common_subtypes(a, b)?.into_iter().next())
    }
}

/// Partial order over relation type identifiers with typed signatures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationLattice {
    signatures: BTreeMap<String, Vec<String>>,
    parents: BTreeMap<String, BTreeSet<String>>,
    ancestors: BTreeMap<String, BTreeSet<String>>,
}

impl RelationLattice {
    /// Builds and validates against the companion concept lattice:
    /// signature types must exist, subtype edges must preserve arity and
    /// be argument-wise covariant.
    pub fn build(
        signatures: impl IntoIterator<Item = (String, Vec<String>)>,
        subtype_edges: impl IntoIterator<Item = (String, String)>,
        concepts: &ConceptLattice,
    ) -> Result<Self, OntologyError> {
        let signatures: BTreeMap<String, Vec<String>> = signatures.into_iter().collect();
        for (rel, sig) in &signatures {
            for ty in sig {
                if !concepts.contains(ty) {
                    return Err(OntologyError::SignatureUnknownType {
                        relation: rel.clone(),
                        ty: ty.clone(),
                    });
                }
            }
        }
        let mut parents: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (child, parent) in subtype_edges {
            let child_sig = signatures
                .get(&child)
                .ok_or_else(|| OntologyError::UnknownRelation(child.clone()))?;
            let parent_sig = signatures
                .get(&parent)
                .ok_or_else(|| OntologyError::UnknownRelation(parent.clone()))?;
            if child_sig.len() != parent_sig.len() {
                return Err(OntologyError::ArityMismatch {
                    child,
                    parent,
                    child_arity: child_sig.len(),
                    parent_arity: parent_sig.len(),
                });
            }
            for (i, (ct, pt)) in child_sig.iter().zip(parent_sig).enumerate() {
                if !concepts.is_subtype(ct, pt)? {
                    return Err(OntologyError::SignatureNotCovariant {
                        child,
                        parent,
                        position: i,
                        child_ty: ct.clone(),
                        parent_ty: pt.clone(),
                    });
                }
            }
            parents.entry(child).or_default().insert(parent);
        }
        let names: BTreeSet<String> = signatures.keys().cloned().collect();
        let ancestors = closure(&names, &parents).map_err(|e| match e {
            OntologyError::Cycle(c) => OntologyError::Cycle(c),
            other => other,
        })?;
        Ok(RelationLattice {
            signatures,
            parents,
            ancestors,
        })
    }

    pub fn empty() -> Self {
        RelationLattice {
            signatures: BTreeMap::new(),
            parents: BTreeMap::new(),
            ancestors: BTreeMap::new(),
        }
    }

    pub fn contains(&self, rel: &str) -> bool {
        self.signatures.contains_key(rel)
    }

    pub fn relations(&self) -> impl Iterator<Item = &str> {
        self.signatures.keys().map(String::as_str)
    }

    pub fn signature(&self, rel: &str) -> Result<&[String], OntologyError> {
        self.signatures
            .get(rel)
            .map(Vec::as_slice)
            .ok_or_else(|| OntologyError::UnknownRelation(rel.into()))
    }

    pub fn direct_parents(&self, rel: &str) -> Option<&BTreeSet<String>> {
        self.parents.get(rel)
    }

    /// True iff relation `a` is a (reflexive) subtype of relation `b`.
    pub fn is_subtype(&self, a: &str, b: &str) -> Result<bool, OntologyError> {
        if !self.contains(b) {
            return Err(OntologyError::UnknownRelation(b.into()));
        }
        match self.ancestors.get(a) {
            Some(anc) => Ok(anc.contains(b)),
            None => Err(OntologyError::UnknownRelation(a.into())),
        }
    }
}

/// The governing pair shared by all graphs of one universe of discourse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ontology {
    pub concepts: ConceptLattice,
    pub relations: RelationLattice,
}

impl Ontology {
    pub fn new(concepts: ConceptLattice, relations: RelationLattice) -> Arc<Self> {
        Arc::new(Ontology {
            concepts,
            relations,
        })
    }

    pub fn minimal() -> Arc<Self> {
        let concepts = ConceptLattice::minimal();
        Arc::new(Ontology {
            relations: RelationLattice::empty(),
            concepts,
        })
    }

    /// Same universe check: pointer identity first, structural equality as
    /// a fallback for independently parsed copies.
    pub fn same(a: &Arc<Ontology>, b: &Arc<Ontology>) -> bool {
        Arc::ptr_eq(a, b) || a == b
    }
}

/// Reflexive-transitive closure of a parent map; detects cycles among
/// distinct elements and reports one offending cycle.
fn closure(
    nodes: &BTreeSet<String>,
    parents: &BTreeMap<String, BTreeSet<String>>,
) -> Result<BTreeMap<String, BTreeSet<String>>, OntologyError> {
    let mut result: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for start in nodes {
        let mut seen: BTreeSet<String> = BTreeSet::new();
        let mut stack = vec![start.clone()];
        while let Some(cur) = stack.pop() {
            if !seen.insert(cur.clone()) {
                continue;
            }
            if let Some(ps) = parents.get(&cur) {
                for p in ps {
                    if p == start {
                        // walked back to the origin: a genuine cycle
                        let mut cyc: Vec<String> = vec![start.clone(), cur.clone(), start.clone()];
                        cyc.dedup();
                        return Err(OntologyError::Cycle(cyc));
                    }
                    stack.push(p.clone());
                }
            }
        }
        result.insert(start.clone(), seen);
    }
    Ok(result)
}

/// A UML-style object model from which lattices are derived.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ObjectModel {
    pub classes: BTreeSet<String>,
    pub inheritance: Vec<(String, String)>,
    /// (class, attribute name, value class)
    pub attributes: Vec<(String, String, String)>,
    /// (name, source class, target class)
    pub associations: Vec<(String, String, String)>,
    /// (class, method name)
    pub methods: Vec<(String, String)>,
}

impl ObjectModel {
    pub fn validate(&self) -> Result<(), OntologyError> {
        let known = |c: &String| -> Result<(), OntologyError> {
            if self.classes.contains(c) {
                Ok(())
            } else {
                Err(OntologyError::UnknownClass(c.clone()))
            }
        };
        for (c, p) in &self.inheritance {
            known(c)?;
            known(p)?;
        }
        for (c, _, _) in &self.attributes {
            known(c)?;
        }
        for (_, s, t) in &self.associations {
            known(s)?;
            known(t)?;
        }
        for (c, _) in &self.methods {
            known(c)?;
        }
        // inheritance must be acyclic
        let mut parent_map: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (c, p) in &self.inheritance {
            parent_map.entry(c.clone()).or_default().insert(p.clone());
        }
        closure(&self.classes, &parent_map).map_err(|e| match e {
            OntologyError::Cycle(c) => {
                OntologyError::InheritanceCycle(c.first().cloned().unwrap_or_default())
            }
            other => other,
        })?;
        Ok(())
    }
}

/// Derives concept and relation lattices from an object model:
/// classes become concept types, inheritance becomes the concept hierarchy,
/// Loads both lattices from ontology-file text.
pub fn load_lattices(text: &str) -> Result<Arc<Ontology>, Vec<crate::frontio::Diagnostic>> {
    let (ontology, diags) = crate::frontio::parse_ontology("<ontology>", text);
    match ontology {
        Some(o) if !crate::frontio::has_errors(&diags) => Ok(o),
        _ => Err(diags),
    }
}

/// attributes, associations and methods become binary relations. Colliding
/// generated relation names are suffix-disambiguated and reported in the
/// returned notes.
pub fn derive_lattices(
    om: &ObjectModel,
) -> Result<(ConceptLattice, RelationLattice, Vec<String>), OntologyError> {
    om.validate()?;
    let mut types: BTreeSet<String> = om.classes.clone();
    // attribute value classes become concept types even when not declared
    for (_, _, value_class) in &om.attributes {
        types.insert(value_class.clone());
    }
    let concept_edges: Vec<(String, String)> = om.inheritance.clone();
    let concepts = ConceptLattice::build(types, concept_edges)?;

    let mut notes = Vec::new();
    let mut sigs: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut add = |name: &str, sig: Vec<String>, sigs: &mut BTreeMap<String, Vec<String>>| {
        if let Some(existing) = sigs.get(name) {
            if *existing == sig {
                return;
            }
            let mut n = 2;
            let fresh = loop {
                let candidate = format!("{name}_{n}");
                if !sigs.contains_key(&candidate) {
                    break candidate;
                }
                n += 1;
            };
            notes.push(format!(
                "relation name collision: `{name}` renamed to `{fresh}` for signature ({})",
                sig.join(", ")
            ));
            sigs.insert(fresh, sig);
        } else {
            sigs.insert(name.to_string(), sig);
        }
    };
    for (class, attr, value_class) in &om.attributes {
        add(attr, vec![class.clone(), value_class.clone()], &mut sigs);
    }
    for (name, src, dst) in &om.associations {
        add(name, vec![src.clone(), dst.clone()], &mut sigs);
    }
    for (class, method) in &om.methods {
        add(method, vec![class.clone(), UNIVERSAL.into()], &mut sigs);
    }
    let relations = RelationLattice::build(sigs, [], &concepts)?;
    Ok((concepts, relations, notes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> ConceptLattice {
        ConceptLattice::build(
            ["A", "B", "C"].map(String::from),
            [
                ("A".into(), "B".into()),
                ("B".into(), "C".into()),
            ],
        )
        .unwrap()
    }

    #[test]
    fn subtype_reflexive_and_transitive() {
        let lat = chain();
        assert!(lat.is_subtype("A", "A").unwrap());
        assert!(lat.is_subtype("A", "C").unwrap());
        assert!(lat.is_subtype("A", UNIVERSAL).unwrap());
        assert!(!lat.is_subtype("C", "A").unwrap());
    }

    #[test]
    fn unknown_type_is_an_error() {
        let lat = chain();
        assert!(matches!(
            lat.is_subtype("A", "Zed"),
            Err(OntologyError::UnknownType(_))
        ));
    }

    #[test]
    fn cycle_detected() {
        let err = ConceptLattice::build(
            ["A", "B"].map(String::from),
            [("A".into(), "B".into()), ("B".into(), "A".into())],
        )
        .unwrap_err();
        assert!(matches!(err, OntologyError::Cycle(_)));
    }

    #[test]
    fn minimal_lattice_has_only_top() {
        let lat = ConceptLattice::minimal();
        assert_eq!(lat.types().count(), 1);
        assert!(lat.contains(UNIVERSAL));
    }

    #[test]
    fn max_common_subtypes_identity_and_disjoint() {
        let lat = ConceptLattice::build(
            ["A", "B", "X", "Y"].map(String::from),
            [
                ("X".into(), "A".into()),
                ("X".into(), "B".into()),
                ("Y".into(), "A".into()),
            ],
        )
        .unwrap();
        assert_eq!(
            lat.max_common_subtypes("A", "A").unwrap(),
            BTreeSet::from(["A".to_string()])
        );
        assert_eq!(
            lat.max_common_subtypes("A", "B").unwrap(),
            BTreeSet::from(["X".to_string()])
        );
        // Y and B share no descendant
        assert!(lat.max_common_subtypes("Y", "B").unwrap().is_empty());
        // symmetry
        assert_eq!(
            lat.max_common_subtypes("A", "B").unwrap(),
            lat.max_common_subtypes("B", "A").unwrap()
        );
    }

    #[test]
    fn relation_subtype_requires_covariant_signature() {
        let lat = chain();
        let err = RelationLattice::build(
            [
                ("r".to_string(), vec!["C".to_string(), "C".to_string()]),
                ("s".to_string(), vec!["C".to_string(), "B".to_string()]),
            ],
            [("r".to_string(), "s".to_string())],
            &lat,
        )
        .unwrap_err();
        assert!(matches!(err, OntologyError::SignatureNotCovariant { .. }));
        // covariant direction is accepted
        RelationLattice::build(
            [
                ("r".to_string(), vec!["A".to_string(), "B".to_string()]),
                ("s".to_string(), vec!["B".to_string(), "C".to_string()]),
            ],
            [("r".to_string(), "s".to_string())],
            &lat,
        )
        .unwrap();
    }

    #[test]
    fn signature_type_must_exist() {
        let lat = chain();
        let err = RelationLattice::build(
            [("r".to_string(), vec!["Nope".to_string()])],
            [],
            &lat,
        )
        .unwrap_err();
        assert!(matches!(err, OntologyError::SignatureUnknownType { .. }));
    }

    #[test]
    fn derive_from_empty_object_model() {
        let (cl, rl, notes) = derive_lattices(&ObjectModel::default()).unwrap();
        assert_eq!(cl.types().count(), 1);
        assert_eq!(rl.relations().count(), 0);
        assert!(notes.is_empty());
    }

    #[test]
    fn derive_attribute_becomes_relation() {
        let om = ObjectModel {
            classes: BTreeSet::from(["Activity".to_string()]),
            attributes: vec![("Activity".into(), "name".into(), "Text".into())],
            ..Default::default()
        };
        let (cl, rl, _) = derive_lattices(&om).unwrap();
        let types: BTreeSet<&str> = cl.types().collect();
        assert_eq!(types, BTreeSet::from([UNIVERSAL, "Activity", "Text"]));
        assert_eq!(rl.signature("name").unwrap(), ["Activity", "Text"]);
    }

    #[test]
    fn derive_inheritance_becomes_hierarchy() {
        let om = ObjectModel {
            classes: BTreeSet::from(["Process".to_string(), "EntityType".to_string()]),
            inheritance: vec![("Process".into(), "EntityType".into())],
            ..Default::default()
        };
        let (cl, _, _) = derive_lattices(&om).unwrap();
        assert!(cl.is_subtype("Process", "EntityType").unwrap());
    }

    #[test]
    fn derive_reports_name_collisions() {
        let om = ObjectModel {
            classes: BTreeSet::from(["A".to_string(), "B".to_string()]),
            attributes: vec![
                ("A".into(), "label".into(), "Text".into()),
                ("B".into(), "label".into(), "Text".into()),
            ],
            ..Default::default()
        };
        let (_, rl, notes) = derive_lattices(&om).unwrap();
        assert_eq!(notes.len(), 1);
        assert!(rl.contains("label"));
        assert!(rl.contains("label_2"));
    }

    #[test]
    fn object_model_inheritance_cycle_rejected() {
        let om = ObjectModel {
            classes: BTreeSet::from(["A".to_string(), "B".to_string()]),
            inheritance: vec![("A".into(), "B".into()), ("B".into(), "A".into())],
            ..Default::default()
        };
        assert!(matches!(
            om.validate(),
            Err(OntologyError::InheritanceCycle(_))
        ));
    }
}
