//! Conceptual graphs: typed concept nodes with markers, typed relation
//! edges, and the four canonical formation rules (copy, restriction,
//! simplification, joint) plus coreference normalization.
//!
//! Graphs are immutable values once built; every operation returns a new
//! graph. Node and edge identifiers are globally fresh so derived graphs
//! never share identifiers with their sources.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use thiserror::Error;

use crate::ontology::{Ontology, OntologyError};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConceptId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub u64);

/// What a concept node denotes: a named individual, an anonymous entity,
/// or a named coreference variable shared across nodes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Marker {
    Generic,
    Individual(String),
    CorefVar(String),
}

impl Marker {
    pub fn is_individual(&self) -> bool {
        matches!(self, Marker::Individual(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptNode {
    pub id: ConceptId,
    pub ctype: String,
    pub marker: Marker,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationEdge {
    pub id: EdgeId,
    pub rtype: String,
    pub args: Vec<ConceptId>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CgError {
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error("unknown node {0:?}")]
    UnknownNode(ConceptId),
    #[error("relation `{rtype}` expects {expected} arguments, got {got}")]
    ArityMismatch {
        rtype: String,
        expected: usize,
        got: usize,
    },
    #[error("argument {position} of `{rtype}`: type `{arg_ty}` is not a subtype of `{sig_ty}`")]
    SignatureViolation {
        rtype: String,
        position: usize,
        arg_ty: String,
        sig_ty: String,
    },
    #[error("`{new_ty}` is not a strict subtype of `{old_ty}`")]
    NotStrictSubtype { new_ty: String, old_ty: String },
    #[error("node already carries individual marker `{0}`")]
    MarkerAlreadyIndividual(String),
    #[error("conflicting individual markers `{0}` and `{1}`")]
    MarkerConflict(String, String),
    #[error("types `{0}` and `{1}` have no common subtype")]
    NoCommonSubtype(String, String),
    #[error("graphs are governed by different ontologies")]
    OntologyMismatch,
}

/// A bipartite graph of concept nodes and relation edges, governed by one
/// ontology. The empty graph is legal.
#[derive(Debug, Clone)]
pub struct ConceptualGraph {
    ontology: Arc<Ontology>,
    concepts: BTreeMap<ConceptId, ConceptNode>,
    relations: BTreeMap<EdgeId, RelationEdge>,
}

impl ConceptualGraph {
    pub fn new(ontology: Arc<Ontology>) -> Self {
        ConceptualGraph {
            ontology,
            concepts: BTreeMap::new(),
            relations: BTreeMap::new(),
        }
    }

    pub fn ontology(&self) -> &Arc<Ontology> {
        &self.ontology
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty() && self.relations.is_empty()
    }

    pub fn concepts(&self) -> impl Iterator<Item = &ConceptNode> {
        self.concepts.values()
    }

    pub fn relations(&self) -> impl Iterator<Item = &RelationEdge> {
        self.relations.values()
    }

    pub fn concept_count(&self) -> usize {
        self.concepts.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn concept(&self, id: ConceptId) -> Option<&ConceptNode> {
        self.concepts.get(&id)
    }

    pub fn relation(&self, id: EdgeId) -> Option<&RelationEdge> {
        self.relations.get(&id)
    }

    /// Adds a concept node after checking its type against the lattice.
    pub fn add_concept(&mut self, ctype: &str, marker: Marker) -> Result<ConceptId, CgError> {
        if !self.ontology.concepts.contains(ctype) {
            return Err(OntologyError::UnknownType(ctype.into()).into());
        }
        let id = ConceptId(fresh_id());
        self.concepts.insert(
            id,
            ConceptNode {
                id,
                ctype: ctype.to_string(),
                marker,
            },
        );
        Ok(id)
    }

    /// Adds a relation edge after checking arity and argument types
    /// against the relation's signature.
    pub fn add_relation(&mut self, rtype: &str, args: &[ConceptId]) -> Result<EdgeId, CgError> {
        let sig = self.ontology.relations.signature(rtype)?.to_vec();
        if sig.len() != args.len() {
            return Err(CgError::ArityMismatch {
                rtype: rtype.into(),
                expected: sig.len(),
                got: args.len(),
            });
        }
        for (i, (arg, sig_ty)) in args.iter().zip(&sig).enumerate() {
            let node = self.concepts.get(arg).ok_or(CgError::UnknownNode(*arg))?;
            if !self.ontology.concepts.is_subtype(&node.ctype, sig_ty)? {
                return Err(CgError::SignatureViolation {
                    rtype: rtype.into(),
                    position: i,
                    arg_ty: node.ctype.clone(),
                    sig_ty: sig_ty.clone(),
                });
            }
        }
        Ok(self.add_relation_unchecked(rtype, args))
    }

    /// Inserts an edge without validation. Exists so parsers and tests can
    /// build graphs whose defects `well_formed` is expected to report.
    pub fn add_relation_unchecked(&mut self, rtype: &str, args: &[ConceptId]) -> EdgeId {
        let id = EdgeId(fresh_id());
        self.relations.insert(
            id,
            RelationEdge {
                id,
                rtype: rtype.to_string(),
                args: args.to_vec(),
            },
        );
        id
    }

    /// Copies `other`'s nodes and edges into `self` under fresh ids,
    /// renaming coreference variables consistently so they cannot collide
    /// with variables already present. Returns the id translation maps.
    pub fn absorb(
        &mut self,
        other: &ConceptualGraph,
    ) -> (BTreeMap<ConceptId, ConceptId>, BTreeMap<EdgeId, EdgeId>) {
        self.absorb_inner(other, true)
    }

    /// Like [`absorb`](Self::absorb) but keeps coreference variable names,
    /// so shared variables across the absorbed graphs stay linked.
    pub fn absorb_keep_vars(
        &mut self,
        other: &ConceptualGraph,
    ) -> (BTreeMap<ConceptId, ConceptId>, BTreeMap<EdgeId, EdgeId>) {
        self.absorb_inner(other, false)
    }

    fn absorb_inner(
        &mut self,
        other: &ConceptualGraph,
        rename_vars: bool,
    ) -> (BTreeMap<ConceptId, ConceptId>, BTreeMap<EdgeId, EdgeId>) {
        let mut var_renames: BTreeMap<String, String> = BTreeMap::new();
        let mut cmap = BTreeMap::new();
        for node in other.concepts.values() {
            let marker = match &node.marker {
                Marker::CorefVar(v) if rename_vars => {
                    let fresh = var_renames
                        .entry(v.clone())
                        .or_insert_with(|| format!("v{}", fresh_id()));
                    Marker::CorefVar(fresh.clone())
                }
                m => m.clone(),
            };
            let id = ConceptId(fresh_id());
            self.concepts.insert(
                id,
                ConceptNode {
                    id,
                    ctype: node.ctype.clone(),
                    marker,
                },
            );
            cmap.insert(node.id, id);
        }
        let mut emap = BTreeMap::new();
        for edge in other.relations.values() {
            let id = EdgeId(fresh_id());
            self.relations.insert(
                id,
                RelationEdge {
                    id,
                    rtype: edge.rtype.clone(),
                    args: edge.args.iter().map(|a| cmap[a]).collect(),
                },
            );
            emap.insert(edge.id, id);
        }
        (cmap, emap)
    }

    /// Canonical formation rule: copy. Structurally identical graph under
    /// fresh identifiers.
    pub fn copy(&self) -> ConceptualGraph {
        let mut g = ConceptualGraph::new(self.ontology.clone());
        g.absorb(self);
        g
    }

    /// Copy that also reports where each source node and edge went.
    pub fn copy_with_maps(
        &self,
    ) -> (
        ConceptualGraph,
        BTreeMap<ConceptId, ConceptId>,
        BTreeMap<EdgeId, EdgeId>,
    ) {
        let mut g = ConceptualGraph::new(self.ontology.clone());
        let (cmap, emap) = g.absorb(self);
        (g, cmap, emap)
    }

    /// Canonical formation rule: restriction. Specializes one node's type
    /// (to a strict subtype) and/or turns its generic marker into an
    /// individual one.
    pub fn restrict(
        &self,
        node: ConceptId,
        new_type: Option<&str>,
        new_marker: Option<Marker>,
    ) -> Result<ConceptualGraph, CgError> {
        let (mut g, cmap, _) = self.copy_with_maps();
        let target = cmap.get(&node).copied().ok_or(CgError::UnknownNode(node))?;
        let current = g.concepts.get(&target).expect("copied node exists").clone();
        if let Some(ty) = new_type {
            let strict =
                g.ontology.concepts.is_subtype(ty, &current.ctype)? && ty != current.ctype;
            if !strict {
                return Err(CgError::NotStrictSubtype {
                    new_ty: ty.into(),
                    old_ty: current.ctype.clone(),
                });
            }
            g.concepts.get_mut(&target).unwrap().ctype = ty.to_string();
        }
        if let Some(marker) = new_marker {
            if let Marker::Individual(existing) = &current.marker {
                return Err(CgError::MarkerAlreadyIndividual(existing.clone()));
            }
            if !marker.is_individual() {
                // only Generic -> Individual is a restriction
                return Err(CgError::MarkerConflict(
                    format!("{:?}", current.marker),
                    format!("{marker:?}"),
                ));
            }
            g.concepts.get_mut(&target).unwrap().marker = marker;
        }
        g.check_signatures()?;
        Ok(g)
    }

    pub(crate) fn check_signatures(&self) -> Result<(), CgError> {
        for edge in self.relations.values() {
            let sig = self.ontology.relations.signature(&edge.rtype)?;
            for (i, (arg, sig_ty)) in edge.args.iter().zip(sig).enumerate() {
                let node = self.concepts.get(arg).ok_or(CgError::UnknownNode(*arg))?;
                if !self.ontology.concepts.is_subtype(&node.ctype, sig_ty)? {
                    return Err(CgError::SignatureViolation {
                        rtype: edge.rtype.clone(),
                        position: i,
                        arg_ty: node.ctype.clone(),
                        sig_ty: sig_ty.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Canonical formation rule: simplification. Collapses duplicate edges
    /// (same relation type, same ordered arguments), keeping the oldest.
    pub fn simplify(&self) -> ConceptualGraph {
        let mut g = self.clone();
        let mut seen: BTreeSet<(String, Vec<ConceptId>)> = BTreeSet::new();
        let mut drop = Vec::new();
        for edge in g.relations.values() {
            if !seen.insert((edge.rtype.clone(), edge.args.clone())) {
                drop.push(edge.id);
            }
        }
        for id in drop {
            g.relations.remove(&id);
        }
        g
    }

    /// Merges `drop` into `keep`: type becomes a maximal common subtype,
    /// individual markers win over generic ones, edges are redirected, and
    /// remaining occurrences of `drop`'s coref variable are renamed to
    /// `keep`'s.
    pub(crate) fn merge_nodes(&mut self, keep: ConceptId, drop: ConceptId) -> Result<(), CgError> {
        if keep == drop {
            return Ok(());
        }
        let keep_node = self
            .concepts
            .get(&keep)
            .ok_or(CgError::UnknownNode(keep))?
            .clone();
        let drop_node = self
            .concepts
            .get(&drop)
            .ok_or(CgError::UnknownNode(drop))?
            .clone();
        let merged_ty = self
            .ontology
            .concepts
            .merge_type(&keep_node.ctype, &drop_node.ctype)?
            .ok_or_else(|| {
                CgError::NoCommonSubtype(keep_node.ctype.clone(), drop_node.ctype.clone())
            })?;
        let merged_marker = match (&keep_node.marker, &drop_node.marker) {
            (Marker::Individual(a), Marker::Individual(b)) if a != b => {
                return Err(CgError::MarkerConflict(a.clone(), b.clone()));
            }
            (Marker::Individual(a), _) => Marker::Individual(a.clone()),
            (_, Marker::Individual(b)) => Marker::Individual(b.clone()),
            (Marker::CorefVar(a), _) => Marker::CorefVar(a.clone()),
            (_, Marker::CorefVar(b)) => Marker::CorefVar(b.clone()),
            (Marker::Generic, Marker::Generic) => Marker::Generic,
        };
        // keep drop's coref identity linked to the surviving node
        if let (Marker::CorefVar(kept_var), Marker::CorefVar(dropped_var)) =
            (&merged_marker, &drop_node.marker)
        {
            if kept_var != dropped_var {
                for node in self.concepts.values_mut() {
                    if node.marker == Marker::CorefVar(dropped_var.clone()) {
                        node.marker = Marker::CorefVar(kept_var.clone());
                    }
                }
            }
        }
        for edge in self.relations.values_mut() {
            for arg in edge.args.iter_mut() {
                if *arg == drop {
                    *arg = keep;
                }
            }
        }
        self.concepts.remove(&drop);
        let node = self.concepts.get_mut(&keep).unwrap();
        node.ctype = merged_ty;
        node.marker = merged_marker;
        Ok(())
    }

    /// Canonical formation rule: joint. Disjoint union of the two graphs
    /// with each listed pair merged into a single node.
    pub fn join(
        &self,
        other: &ConceptualGraph,
        pairs: &[(ConceptId, ConceptId)],
    ) -> Result<ConceptualGraph, CgError> {
        if !Ontology::same(&self.ontology, &other.ontology) {
            return Err(CgError::OntologyMismatch);
        }
        let (mut g, cmap1, _) = self.copy_with_maps();
        let (cmap2, _) = g.absorb(other);
        for (a, b) in pairs {
            let keep = cmap1.get(a).copied().ok_or(CgError::UnknownNode(*a))?;
            let drop = cmap2.get(b).copied().ok_or(CgError::UnknownNode(*b))?;
            g.merge_nodes(keep, drop)?;
        }
        g.check_signatures()?;
        Ok(g)
    }

    /// Merges every group of nodes sharing a coreference variable into a
    /// single node, so each variable occurs at most once afterwards.
    pub fn normalize_coref(&self) -> Result<ConceptualGraph, CgError> {
        let mut g = self.clone();
        loop {
            let mut groups: BTreeMap<String, Vec<ConceptId>> = BTreeMap::new();
            for node in g.concepts.values() {
                if let Marker::CorefVar(v) = &node.marker {
                    groups.entry(v.clone()).or_default().push(node.id);
                }
            }
            let Some(ids) = groups.into_values().find(|ids| ids.len() > 1) else {
                break;
            };
            let keep = ids[0];
            for drop in &ids[1..] {
                g.merge_nodes(keep, *drop)?;
            }
        }
        g.check_signatures()?;
        Ok(g)
    }

    /// Diagnoses invariant violations without failing: unknown types,
    /// dangling arguments, arity mismatches, signature violations as
    /// errors; disconnectedness as a warning.
    pub fn well_formed(&self) -> WellFormedReport {
        let mut report = WellFormedReport::default();
        for node in self.concepts.values() {
            if !self.ontology.concepts.contains(&node.ctype) {
                report
                    .errors
                    .push(format!("unknown concept type `{}`", node.ctype));
            }
        }
        for edge in self.relations.values() {
            let sig = match self.ontology.relations.signature(&edge.rtype) {
                Ok(sig) => sig,
                Err(_) => {
                    report
                        .errors
                        .push(format!("unknown relation type `{}`", edge.rtype));
                    continue;
                }
            };
            if sig.len() != edge.args.len() {
                report.errors.push(format!(
                    "relation `{}` expects {} arguments, got {}",
                    edge.rtype,
                    sig.len(),
                    edge.args.len()
                ));
                continue;
            }
            for (i, (arg, sig_ty)) in edge.args.iter().zip(sig).enumerate() {
                match self.concepts.get(arg) {
                    None => report
                        .errors
                        .push(format!("relation `{}` references a missing node", edge.rtype)),
                    Some(node) => {
                        if self
                            .ontology
                            .concepts
                            .is_subtype(&node.ctype, sig_ty)
                            .ok()
                            != Some(true)
                        {
                            report.errors.push(format!(
                                "argument {i} of `{}`: `{}` is not a subtype of `{sig_ty}`",
                                edge.rtype, node.ctype
                            ));
                        }
                    }
                }
            }
        }
        if !self.is_connected() {
            report
                .warnings
                .push("graph is disconnected".to_string());
        }
        report
    }

    /// Connectivity over the bipartite incidence structure. The empty
    /// graph counts as connected.
    pub fn is_connected(&self) -> bool {
        let Some(first) = self.concepts.keys().next().copied() else {
            return true;
        };
        let mut adjacency: BTreeMap<ConceptId, Vec<ConceptId>> = BTreeMap::new();
        for edge in self.relations.values() {
            for a in &edge.args {
                for b in &edge.args {
                    if a != b {
                        adjacency.entry(*a).or_default().push(*b);
                    }
                }
            }
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![first];
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                continue;
            }
            if let Some(next) = adjacency.get(&id) {
                stack.extend(next.iter().copied());
            }
        }
        seen.len() == self.concepts.len()
    }

    /// Structural equality up to order-preserving identifier renaming.
    /// Coreference variable names are compared by the rank of their first
    /// occurrence, and a variable occurring on a single node is treated as
    /// a generic marker, so copies and serialized forms compare equal to
    /// their sources.
    pub fn structurally_equal(&self, other: &ConceptualGraph) -> bool {
        self.canonical_form() == other.canonical_form()
    }

    fn canonical_form(&self) -> (Vec<(usize, String, String)>, Vec<(String, Vec<usize>)>) {
        let index: BTreeMap<ConceptId, usize> = self
            .concepts
            .keys()
            .enumerate()
            .map(|(i, id)| (*id, i))
            .collect();
        let mut var_counts: BTreeMap<&str, usize> = BTreeMap::new();
        for node in self.concepts.values() {
            if let Marker::CorefVar(v) = &node.marker {
                *var_counts.entry(v).or_insert(0) += 1;
            }
        }
        let mut var_ranks: BTreeMap<String, usize> = BTreeMap::new();
        let mut nodes = Vec::new();
        for (i, node) in self.concepts.values().enumerate() {
            let marker = match &node.marker {
                Marker::Generic => "*".to_string(),
                Marker::Individual(name) => format!("={name}"),
                Marker::CorefVar(v) if var_counts[v.as_str()] == 1 => "*".to_string(),
                Marker::CorefVar(v) => {
                    let next = var_ranks.len();
                    let rank = *var_ranks.entry(v.clone()).or_insert(next);
                    format!("?{rank}")
                }
            };
            nodes.push((i, node.ctype.clone(), marker));
        }
        let mut edges: Vec<(String, Vec<usize>)> = self
            .relations
            .values()
            .map(|e| {
                (
                    e.rtype.clone(),
                    e.args
                        .iter()
                        .map(|a| index.get(a).copied().unwrap_or(usize::MAX))
                        .collect(),
                )
            })
            .collect();
        edges.sort();
        (nodes, edges)
    }

    /// Cheap isomorphism-class prefilter: graphs whose keys differ cannot
    /// be equivalent.
    pub fn iso_key(&self) -> (Vec<(String, bool, Option<String>)>, Vec<(String, usize)>) {
        let mut nodes: Vec<(String, bool, Option<String>)> = self
            .concepts
            .values()
            .map(|n| {
                (
                    n.ctype.clone(),
                    matches!(n.marker, Marker::Generic | Marker::CorefVar(_)),
                    match &n.marker {
                        Marker::Individual(name) => Some(name.clone()),
                        _ => None,
                    },
                )
            })
            .collect();
        nodes.sort();
        let mut edges: Vec<(String, usize)> = self
            .relations
            .values()
            .map(|e| (e.rtype.clone(), e.args.len()))
            .collect();
        edges.sort();
        (nodes, edges)
    }
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct WellFormedReport {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl WellFormedReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }
}
