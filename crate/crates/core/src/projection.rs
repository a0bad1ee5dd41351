//! Projection: search for graph morphisms from a pattern graph into a
//! target graph.
//!
//! A projection maps every pattern concept to a target concept of a
//! subtype, respects individual markers, maps every pattern relation to a
//! target relation of a subtype, and preserves argument structure.
//! Morphisms are not required to be injective. The search backtracks over
//! pattern concepts ordered most-constrained-first, pruning on relation
//! adjacency; results are deterministic.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::cgraph::{ConceptId, ConceptualGraph, EdgeId, Marker};
use crate::ontology::{Ontology, OntologyError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProjectionError {
    #[error("pattern and target are governed by different ontologies")]
    OntologyMismatch,
    #[error(transparent)]
    Ontology(#[from] OntologyError),
}

/// A witness mapping of pattern nodes and edges onto target nodes and edges.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Morphism {
    pub concept_map: BTreeMap<ConceptId, ConceptId>,
    pub relation_map: BTreeMap<EdgeId, EdgeId>,
}

impl Morphism {
    pub fn trivial() -> Self {
        Morphism {
            concept_map: BTreeMap::new(),
            relation_map: BTreeMap::new(),
        }
    }

    /// Composes `self: G -> H` with `next: H -> K` into `G -> K`.
    /// Returns `None` when the images of `self` are not in `next`'s domain.
    pub fn compose(&self, next: &Morphism) -> Option<Morphism> {
        let mut concept_map = BTreeMap::new();
        for (src, mid) in &self.concept_map {
            concept_map.insert(*src, *next.concept_map.get(mid)?);
        }
        let mut relation_map = BTreeMap::new();
        for (src, mid) in &self.relation_map {
            relation_map.insert(*src, *next.relation_map.get(mid)?);
        }
        Some(Morphism {
            concept_map,
            relation_map,
        })
    }
}

/// Knobs for the generalized search; the plain entry points cover the
/// common cases.
#[derive(Debug, Default, Clone)]
pub struct SearchOptions {
    pub limit: Option<usize>,
    /// Require concept and relation maps to be injective.
    pub injective: bool,
    /// Pre-assigned pattern-concept images; the search only extends them.
    pub seed: BTreeMap<ConceptId, ConceptId>,
}

/// All (or the first `limit`) projections of `pattern` into `target`.
/// The empty pattern yields exactly the trivial morphism.
pub fn find_projections(
    pattern: &ConceptualGraph,
    target: &ConceptualGraph,
    limit: Option<usize>,
) -> Result<Vec<Morphism>, ProjectionError> {
    find_projections_with(
        pattern,
        target,
        &SearchOptions {
            limit,
            ..Default::default()
        },
    )
}

pub fn exists_projection(
    pattern: &ConceptualGraph,
    target: &ConceptualGraph,
) -> Result<bool, ProjectionError> {
    Ok(!find_projections(pattern, target, Some(1))?.is_empty())
}

pub fn find_projections_with(
    pattern: &ConceptualGraph,
    target: &ConceptualGraph,
    options: &SearchOptions,
) -> Result<Vec<Morphism>, ProjectionError> {
    if !Ontology::same(pattern.ontology(), target.ontology()) {
        return Err(ProjectionError::OntologyMismatch);
    }
    let ont = pattern.ontology();
    let concepts = &ont.concepts;
    let relations = &ont.relations;

    // candidate images per pattern concept, filtered by type and marker
    let mut candidates: BTreeMap<ConceptId, Vec<ConceptId>> = BTreeMap::new();
    for pnode in pattern.concepts() {
        let mut list = Vec::new();
        for tnode in target.concepts() {
            // a seed pins the image but still must satisfy the conditions
            if let Some(image) = options.seed.get(&pnode.id) {
                if tnode.id != *image {
                    continue;
                }
            }
            if !concepts.is_subtype(&tnode.ctype, &pnode.ctype)? {
                continue;
            }
            if let Marker::Individual(name) = &pnode.marker {
                if tnode.marker != Marker::Individual(name.clone()) {
                    continue;
                }
            }
            list.push(tnode.id);
        }
        candidates.insert(pnode.id, list);
    }

    // compatible target edges per pattern edge, by relation subtype and arity
    let mut edge_candidates: BTreeMap<EdgeId, Vec<EdgeId>> = BTreeMap::new();
    for pedge in pattern.relations() {
        let mut list = Vec::new();
        for tedge in target.relations() {
            if tedge.args.len() == pedge.args.len()
                && relations.is_subtype(&tedge.rtype, &pedge.rtype)?
            {
                list.push(tedge.id);
            }
        }
        edge_candidates.insert(pedge.id, list);
    }

    // most-constrained-first visit order, ties broken by node id
    let mut order: Vec<ConceptId> = pattern.concepts().map(|n| n.id).collect();
    order.sort_by_key(|id| (candidates[id].len(), *id));

    // pattern nodes sharing a coreference variable must share their image
    let mut coref_groups: BTreeMap<String, Vec<ConceptId>> = BTreeMap::new();
    for pnode in pattern.concepts() {
        if let Marker::CorefVar(v) = &pnode.marker {
            coref_groups.entry(v.clone()).or_default().push(pnode.id);
        }
    }
    let mut coref_partner: BTreeMap<ConceptId, Vec<ConceptId>> = BTreeMap::new();
    for ids in coref_groups.values() {
        if ids.len() > 1 {
            for id in ids {
                coref_partner.insert(*id, ids.iter().filter(|o| *o != id).copied().collect());
            }
        }
    }

    let mut search = Search {
        pattern,
        target,
        candidates: &candidates,
        edge_candidates: &edge_candidates,
        order: &order,
        coref_partner: &coref_partner,
        options,
        assignment: BTreeMap::new(),
        used: BTreeSet::new(),
        results: Vec::new(),
    };
    search.assign(0);
    Ok(search.results)
}

struct Search<'a> {
    pattern: &'a ConceptualGraph,
    target: &'a ConceptualGraph,
    candidates: &'a BTreeMap<ConceptId, Vec<ConceptId>>,
    edge_candidates: &'a BTreeMap<EdgeId, Vec<EdgeId>>,
    order: &'a [ConceptId],
    coref_partner: &'a BTreeMap<ConceptId, Vec<ConceptId>>,
    options: &'a SearchOptions,
    assignment: BTreeMap<ConceptId, ConceptId>,
    used: BTreeSet<ConceptId>,
    results: Vec<Morphism>,
}

impl Search<'_> {
    fn done(&self) -> bool {
        self.options
            .limit
            .is_some_and(|limit| self.results.len() >= limit)
    }

    fn assign(&mut self, depth: usize) {
        if self.done() {
            return;
        }
        if depth == self.order.len() {
            self.emit_edge_maps();
            return;
        }
        let pid = self.order[depth];
        for image in &self.candidates[&pid] {
            if self.options.injective && self.used.contains(image) {
                continue;
            }
            if let Some(partners) = self.coref_partner.get(&pid) {
                if partners
                    .iter()
                    .any(|p| self.assignment.get(p).is_some_and(|img| img != image))
                {
                    continue;
                }
            }
            self.assignment.insert(pid, *image);
            self.used.insert(*image);
            if self.edges_consistent(pid) {
                self.assign(depth + 1);
            }
            self.assignment.remove(&pid);
            self.used.remove(image);
            if self.done() {
                return;
            }
        }
    }

    /// Every pattern edge touching `pid` whose arguments are now all
    /// assigned must have at least one structurally matching target edge.
    fn edges_consistent(&self, pid: ConceptId) -> bool {
        for pedge in self.pattern.relations() {
            if !pedge.args.contains(&pid) {
                continue;
            }
            let Some(images): Option<Vec<ConceptId>> = pedge
                .args
                .iter()
                .map(|a| self.assignment.get(a).copied())
                .collect()
            else {
                continue;
            };
            let found = self.edge_candidates[&pedge.id].iter().any(|tid| {
                let tedge = self.target.relation(*tid).expect("candidate edge exists");
                tedge.args == images
            });
            if !found {
                return false;
            }
        }
        true
    }

    /// The concept assignment is complete; enumerate all ways of mapping
    /// pattern edges onto structurally matching target edges.
    fn emit_edge_maps(&mut self) {
        let pedges: Vec<_> = self.pattern.relations().collect();
        let mut per_edge: Vec<(EdgeId, Vec<EdgeId>)> = Vec::with_capacity(pedges.len());
        for pedge in &pedges {
            let images: Vec<ConceptId> = pedge.args.iter().map(|a| self.assignment[a]).collect();
            let matches: Vec<EdgeId> = self.edge_candidates[&pedge.id]
                .iter()
                .filter(|tid| self.target.relation(**tid).unwrap().args == images)
                .copied()
                .collect();
            if matches.is_empty() {
                return;
            }
            per_edge.push((pedge.id, matches));
        }
        let mut choice = vec![0usize; per_edge.len()];
        loop {
            let relation_map: BTreeMap<EdgeId, EdgeId> = per_edge
                .iter()
                .zip(&choice)
                .map(|((pid, matches), i)| (*pid, matches[*i]))
                .collect();
            let injective_ok = !self.options.injective
                || relation_map.values().collect::<BTreeSet<_>>().len() == relation_map.len();
            if injective_ok {
                self.results.push(Morphism {
                    concept_map: self.assignment.clone(),
                    relation_map,
                });
                if self.done() {
                    return;
                }
            }
            // odometer over edge image choices
            let mut pos = per_edge.len();
            loop {
                if pos == 0 {
                    return;
                }
                pos -= 1;
                choice[pos] += 1;
                if choice[pos] < per_edge[pos].1.len() {
                    break;
                }
                choice[pos] = 0;
            }
        }
    }
}

/// Re-validates a morphism against the three projection conditions.
pub fn validate_morphism(
    pattern: &ConceptualGraph,
    target: &ConceptualGraph,
    m: &Morphism,
) -> Result<bool, ProjectionError> {
    if !Ontology::same(pattern.ontology(), target.ontology()) {
        return Err(ProjectionError::OntologyMismatch);
    }
    let ont = pattern.ontology();
    for pnode in pattern.concepts() {
        let Some(tid) = m.concept_map.get(&pnode.id) else {
            return Ok(false);
        };
        let Some(tnode) = target.concept(*tid) else {
            return Ok(false);
        };
        if !ont.concepts.is_subtype(&tnode.ctype, &pnode.ctype)? {
            return Ok(false);
        }
        if let Marker::Individual(name) = &pnode.marker {
            if tnode.marker != Marker::Individual(name.clone()) {
                return Ok(false);
            }
        }
    }
    for pedge in pattern.relations() {
        let Some(tid) = m.relation_map.get(&pedge.id) else {
            return Ok(false);
        };
        let Some(tedge) = target.relation(*tid) else {
            return Ok(false);
        };
        if !ont.relations.is_subtype(&tedge.rtype, &pedge.rtype)? {
            return Ok(false);
        }
        if tedge.args.len() != pedge.args.len() {
            return Ok(false);
        }
        for (parg, targ) in pedge.args.iter().zip(&tedge.args) {
            if m.concept_map.get(parg) != Some(targ) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Graph equivalence as mutual injective projection, with an
/// isomorphism-class key as a fast prefilter.
pub fn iso_equivalent(a: &ConceptualGraph, b: &ConceptualGraph) -> Result<bool, ProjectionError> {
    if a.concept_count() != b.concept_count() || a.relation_count() != b.relation_count() {
        return Ok(false);
    }
    if a.iso_key() != b.iso_key() {
        return Ok(false);
    }
    let injective = SearchOptions {
        limit: Some(1),
        injective: true,
        seed: BTreeMap::new(),
    };
    Ok(!find_projections_with(a, b, &injective)?.is_empty()
        && !find_projections_with(b, a, &injective)?.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgraph::ConceptualGraph;
    use crate::ontology::{ConceptLattice, RelationLattice};
    use std::sync::Arc;

    fn ont() -> Arc<Ontology> {
        let concepts = ConceptLattice::build(
            ["Person", "Employee", "Machine", "Part"].map(String::from),
            [("Employee".to_string(), "Person".to_string())],
        )
        .unwrap();
        let relations = RelationLattice::build(
            [
                (
                    "agent".to_string(),
                    vec!["Person".to_string(), "Machine".to_string()],
                ),
                (
                    "object".to_string(),
                    vec!["Part".to_string(), "Machine".to_string()],
                ),
            ],
            [],
            &concepts,
        )
        .unwrap();
        Ontology::new(concepts, relations)
    }

    fn james(ont: &Arc<Ontology>) -> ConceptualGraph {
        let mut g = ConceptualGraph::new(ont.clone());
        let e = g
            .add_concept("Employee", Marker::Individual("James".into()))
            .unwrap();
        let m = g
            .add_concept("Machine", Marker::Individual("drill".into()))
            .unwrap();
        let p = g.add_concept("Part", Marker::Generic).unwrap();
        g.add_relation("agent", &[e, m]).unwrap();
        g.add_relation("object", &[p, m]).unwrap();
        g
    }

    #[test]
    fn empty_pattern_has_exactly_one_trivial_projection() {
        let ont = ont();
        let empty = ConceptualGraph::new(ont.clone());
        let g = james(&ont);
        let ms = find_projections(&empty, &g, None).unwrap();
        assert_eq!(ms, vec![Morphism::trivial()]);
        // even into the empty target
        let ms = find_projections(&empty, &empty, None).unwrap();
        assert_eq!(ms.len(), 1);
    }

    #[test]
    fn identity_projection_exists() {
        let ont = ont();
        let g = james(&ont);
        let ms = find_projections(&g, &g, None).unwrap();
        let identity = ms.iter().any(|m| {
            m.concept_map.iter().all(|(a, b)| a == b) && m.relation_map.iter().all(|(a, b)| a == b)
        });
        assert!(identity);
    }

    #[test]
    fn generic_projects_onto_individual() {
        let ont = ont();
        let g = james(&ont);
        let mut p = ConceptualGraph::new(ont.clone());
        p.add_concept("Employee", Marker::Generic).unwrap();
        assert!(exists_projection(&p, &g).unwrap());
        // supertype pattern also projects
        let mut p2 = ConceptualGraph::new(ont.clone());
        p2.add_concept("Person", Marker::Generic).unwrap();
        assert!(exists_projection(&p2, &g).unwrap());
        // but a subtype in the target direction does not
        let mut p3 = ConceptualGraph::new(ont);
        p3.add_concept("Part", Marker::Individual("bolt".into()))
            .unwrap();
        assert!(!exists_projection(&p3, &g).unwrap());
    }

    #[test]
    fn individual_mismatch_blocks_projection() {
        let ont = ont();
        let g = james(&ont);
        let mut p = ConceptualGraph::new(ont);
        p.add_concept("Employee", Marker::Individual("Marie".into()))
            .unwrap();
        assert!(!exists_projection(&p, &g).unwrap());
    }

    #[test]
    fn structure_condition_enforced() {
        let ont = ont();
        let g = james(&ont);
        // agent with swapped argument images cannot map
        let mut p = ConceptualGraph::new(ont);
        let e = p.add_concept("Person", Marker::Generic).unwrap();
        let m = p.add_concept("Machine", Marker::Generic).unwrap();
        p.add_relation("agent", &[e, m]).unwrap();
        let ms = find_projections(&p, &g, None).unwrap();
        assert_eq!(ms.len(), 1);
        for m in &ms {
            assert!(validate_morphism(&p, &g, m).unwrap());
        }
    }

    #[test]
    fn ontology_mismatch_is_an_error() {
        let a = ConceptualGraph::new(ont());
        let other = Ontology::minimal();
        let b = ConceptualGraph::new(other);
        assert!(matches!(
            find_projections(&a, &b, None),
            Err(ProjectionError::OntologyMismatch)
        ));
    }

    #[test]
    fn composition_revalidates() {
        let ont = ont();
        let g = james(&ont);
        let h = g.copy();
        let k = h.copy();
        let m1 = &find_projections(&g, &h, Some(1)).unwrap()[0];
        let m2 = &find_projections(&h, &k, Some(1)).unwrap()[0];
        let composed = m1.compose(m2).unwrap();
        assert!(validate_morphism(&g, &k, &composed).unwrap());
    }

    #[test]
    fn copies_are_iso_equivalent() {
        let ont = ont();
        let g = james(&ont);
        assert!(iso_equivalent(&g, &g.copy()).unwrap());
        let mut other = ConceptualGraph::new(ont);
        other.add_concept("Part", Marker::Generic).unwrap();
        assert!(!iso_equivalent(&g, &other).unwrap());
    }

    #[test]
    fn shared_coref_vars_share_their_image() {
        let ont = ont();
        let mut target = ConceptualGraph::new(ont.clone());
        let m = target.add_concept("Machine", Marker::Generic).unwrap();
        let p1 = target.add_concept("Person", Marker::Generic).unwrap();
        let p2 = target.add_concept("Person", Marker::Generic).unwrap();
        target.add_relation("agent", &[p1, m]).unwrap();
        target.add_relation("agent", &[p2, m]).unwrap();

        let mut pattern = ConceptualGraph::new(ont);
        let q1 = pattern
            .add_concept("Person", Marker::CorefVar("x".into()))
            .unwrap();
        let q2 = pattern
            .add_concept("Person", Marker::CorefVar("x".into()))
            .unwrap();
        let mm = pattern.add_concept("Machine", Marker::Generic).unwrap();
        pattern.add_relation("agent", &[q1, mm]).unwrap();
        pattern.add_relation("agent", &[q2, mm]).unwrap();
        for m in find_projections(&pattern, &target, None).unwrap() {
            assert_eq!(m.concept_map[&q1], m.concept_map[&q2]);
        }
    }
}
