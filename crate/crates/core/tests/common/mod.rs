//! Shared helpers for the acceptance suite: a fixed test ontology, a
//! seeded random graph generator, and a brute-force projection oracle
//! that checks the morphism conditions directly against their
//! definitions instead of searching.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use cgvv::cgraph::{ConceptId, ConceptualGraph, EdgeId, Marker};
use cgvv::ontology::{ConceptLattice, Ontology, RelationLattice};
use cgvv::projection::Morphism;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Small type hierarchy with enough branching for interesting random
/// graphs: two siblings under the root and leaves under each.
pub fn test_ontology() -> Arc<Ontology> {
    let types = ["T", "A", "B", "A1", "A2", "B1"]
        .iter()
        .map(|s| s.to_string());
    let edges = [
        ("T", "Universal"),
        ("A", "T"),
        ("B", "T"),
        ("A1", "A"),
        ("A2", "A"),
        ("B1", "B"),
    ]
    .iter()
    .map(|(c, p)| (c.to_string(), p.to_string()));
    let concepts = ConceptLattice::build(types, edges).expect("valid concept lattice");
    let raw: [(&str, Vec<&str>); 5] = [
        ("r", vec!["T", "T"]),
        ("ra", vec!["A", "T"]),
        ("s", vec!["B", "B"]),
        ("p", vec!["T"]),
        ("t", vec!["T", "T", "T"]),
    ];
    let signatures: Vec<(String, Vec<String>)> = raw
        .iter()
        .map(|(n, sig)| {
            (
                n.to_string(),
                sig.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
            )
        })
        .collect();
    let sub = [("ra", "r")]
        .iter()
        .map(|(c, p)| (c.to_string(), p.to_string()));
    let relations =
        RelationLattice::build(signatures, sub, &concepts).expect("valid relation lattice");
    Ontology::new(concepts, relations)
}

pub const CONCEPT_TYPES: [&str; 6] = ["T", "A", "B", "A1", "A2", "B1"];
pub const RELATION_TYPES: [&str; 5] = ["r", "ra", "s", "p", "t"];

fn random_marker(rng: &mut ChaCha8Rng, unique_individuals: bool, counter: &mut u32) -> Marker {
    let roll: f64 = rng.gen();
    if roll < 0.55 {
        Marker::Generic
    } else if roll < 0.80 {
        let name = if unique_individuals {
            *counter += 1;
            format!("i{counter}")
        } else {
            format!("i{}", rng.gen_range(1..=4))
        };
        Marker::Individual(name)
    } else {
        Marker::CorefVar(format!("v{}", rng.gen_range(1..=3)))
    }
}

/// Random graph over the test ontology with at most `max_c` concepts and
/// at most `max_r` relation edges. Edge arguments are drawn only from
/// type-compatible nodes; incompatible draws are skipped, so dense
/// requests degrade gracefully on sparse graphs.
pub fn random_graph(
    rng: &mut ChaCha8Rng,
    ont: &Arc<Ontology>,
    max_c: usize,
    max_r: usize,
    unique_individuals: bool,
) -> ConceptualGraph {
    let mut g = ConceptualGraph::new(ont.clone());
    let mut counter = 0u32;
    let n = rng.gen_range(0..=max_c);
    let mut ids = Vec::new();
    for _ in 0..n {
        let ty = CONCEPT_TYPES[rng.gen_range(0..CONCEPT_TYPES.len())];
        let marker = random_marker(rng, unique_individuals, &mut counter);
        ids.push(g.add_concept(ty, marker).expect("known type"));
    }
    if ids.is_empty() {
        return g;
    }
    let m = rng.gen_range(0..=max_r);
    for _ in 0..m {
        let rt = RELATION_TYPES[rng.gen_range(0..RELATION_TYPES.len())];
        let sig: Vec<String> = ont.relations.signature(rt).expect("known relation").to_vec();
        let mut args = Vec::new();
        let mut ok = true;
        for want in &sig {
            let compat: Vec<ConceptId> = ids
                .iter()
                .copied()
                .filter(|id| {
                    let node = g.concept(*id).expect("node exists");
                    ont.concepts
                        .is_subtype(&node.ctype, want)
                        .expect("known types")
                })
                .collect();
            match compat.get(rng.gen_range(0..compat.len().max(1))) {
                Some(id) if !compat.is_empty() => args.push(*id),
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            g.add_relation(rt, &args).expect("signature-checked args");
        }
    }
    g
}

/// Specializes `pattern` into a target that is guaranteed to contain a
/// projection image: restrict some node types/markers, then pad with an
/// unrelated random graph.
pub fn specialized_target(rng: &mut ChaCha8Rng, pattern: &ConceptualGraph) -> ConceptualGraph {
    let mut g = pattern.copy();
    let subtypes: BTreeMap<&str, Vec<&str>> = BTreeMap::from([
        ("T", vec!["A", "B", "A1", "A2", "B1"]),
        ("A", vec!["A1", "A2"]),
        ("B", vec!["B1"]),
    ]);
    // restrict returns a fresh copy with new node ids, so look the
    // current ids up again on every step
    let count = g.concept_count();
    for i in 0..count {
        let node = g.concepts().nth(i).expect("node exists").clone();
        let id = node.id;
        if rng.gen_bool(0.3) {
            if let Some(subs) = subtypes.get(node.ctype.as_str()) {
                let ty = subs[rng.gen_range(0..subs.len())];
                g = g.restrict(id, Some(ty), None).expect("strict subtype");
                continue;
            }
        }
        if rng.gen_bool(0.3) && matches!(node.marker, Marker::Generic) {
            let name = format!("i{}", rng.gen_range(1..=4));
            g = g
                .restrict(id, None, Some(Marker::Individual(name)))
                .expect("generic to individual");
        }
    }
    let pad = random_graph(rng, pattern.ontology(), 3, 2, false);
    g.absorb(&pad);
    g
}

/// Canonical comparable form of a morphism.
pub type MorphismKey = (Vec<(u64, u64)>, Vec<(u64, u64)>);

pub fn morphism_key(m: &Morphism) -> MorphismKey {
    (
        m.concept_map.iter().map(|(a, b)| (a.0, b.0)).collect(),
        m.relation_map.iter().map(|(a, b)| (a.0, b.0)).collect(),
    )
}

/// Brute-force oracle: enumerate every assignment of pattern concepts to
/// target concepts from definition-filtered candidate lists, then accept
/// an assignment only if it satisfies all morphism conditions; for each
/// accepted assignment enumerate every compatible edge mapping.
pub fn oracle_projections(
    pattern: &ConceptualGraph,
    target: &ConceptualGraph,
) -> BTreeSet<MorphismKey> {
    let ont = pattern.ontology();
    let pat_concepts: Vec<_> = pattern.concepts().collect();
    let tgt_concepts: Vec<_> = target.concepts().collect();

    // Condition 1 and 2 per node: image type is a subtype of the pattern
    // type; an individual maps only onto the same individual.
    let mut candidates: Vec<Vec<ConceptId>> = Vec::new();
    for pn in &pat_concepts {
        let mut list = Vec::new();
        for tn in &tgt_concepts {
            if !ont
                .concepts
                .is_subtype(&tn.ctype, &pn.ctype)
                .expect("known types")
            {
                continue;
            }
            if let Marker::Individual(name) = &pn.marker {
                if tn.marker != Marker::Individual(name.clone()) {
                    continue;
                }
            }
            list.push(tn.id);
        }
        candidates.push(list);
    }

    let mut results = BTreeSet::new();
    let n = pat_concepts.len();
    let mut choice = vec![0usize; n];
    'outer: loop {
        // materialize the assignment unless some candidate list is empty
        let mut assignment: BTreeMap<ConceptId, ConceptId> = BTreeMap::new();
        let mut feasible = true;
        for (i, pn) in pat_concepts.iter().enumerate() {
            match candidates[i].get(choice[i]) {
                Some(img) => {
                    assignment.insert(pn.id, *img);
                }
                None => {
                    feasible = false;
                    break;
                }
            }
        }
        if feasible {
            // nodes sharing a coreference variable must share their image
            let mut coref_image: BTreeMap<&str, ConceptId> = BTreeMap::new();
            let mut coref_ok = true;
            for pn in &pat_concepts {
                if let Marker::CorefVar(v) = &pn.marker {
                    let img = assignment[&pn.id];
                    if *coref_image.entry(v.as_str()).or_insert(img) != img {
                        coref_ok = false;
                        break;
                    }
                }
            }
            if coref_ok {
                emit_edge_maps(pattern, target, &assignment, &mut results);
            }
        }
        // odometer over candidate choices
        let mut pos = n;
        loop {
            if pos == 0 {
                break 'outer;
            }
            pos -= 1;
            choice[pos] += 1;
            if choice[pos] < candidates[pos].len().max(1) {
                continue 'outer;
            }
            choice[pos] = 0;
        }
    }
    results
}

/// Condition 3: every pattern edge maps onto a target edge whose relation
/// type is a subtype and whose arguments are exactly the images.
fn emit_edge_maps(
    pattern: &ConceptualGraph,
    target: &ConceptualGraph,
    assignment: &BTreeMap<ConceptId, ConceptId>,
    results: &mut BTreeSet<MorphismKey>,
) {
    let ont = pattern.ontology();
    let mut per_edge: Vec<(EdgeId, Vec<EdgeId>)> = Vec::new();
    for pe in pattern.relations() {
        let images: Vec<ConceptId> = pe.args.iter().map(|a| assignment[a]).collect();
        let matches: Vec<EdgeId> = target
            .relations()
            .filter(|te| {
                te.args == images
                    && ont
                        .relations
                        .is_subtype(&te.rtype, &pe.rtype)
                        .expect("known relations")
            })
            .map(|te| te.id)
            .collect();
        if matches.is_empty() {
            return;
        }
        per_edge.push((pe.id, matches));
    }
    let mut choice = vec![0usize; per_edge.len()];
    loop {
        let relation_map: Vec<(u64, u64)> = per_edge
            .iter()
            .zip(&choice)
            .map(|((pid, m), i)| (pid.0, m[*i].0))
            .collect();
        let concept_map: Vec<(u64, u64)> = assignment.iter().map(|(a, b)| (a.0, b.0)).collect();
        results.insert((concept_map, relation_map));
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
