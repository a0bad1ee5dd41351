//! The translation of a conceptual graph into an existentially quantified
//! conjunctive first-order formula: concepts become unary atoms, relations
//! become n-ary atoms, individual markers become constants and generic
//! markers become quantified variables.

use crate::cgraph::{CgError, ConceptualGraph, Marker};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Term {
    Const(String),
    Var(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Atom {
    pub predicate: String,
    pub terms: Vec<Term>,
}

/// An existentially quantified conjunction of atoms. The empty formula
/// renders as `true`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Formula {
    pub variables: Vec<String>,
    pub atoms: Vec<Atom>,
}

impl Formula {
    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// Translates a graph into its formula. Coreference is normalized first so
/// each variable denotes one entity; variables are numbered in node order.
pub fn phi_translate(g: &ConceptualGraph) -> Result<Formula, CgError> {
    let g = g.normalize_coref()?;
    let mut variables = Vec::new();
    let mut term_of = std::collections::BTreeMap::new();
    for node in g.concepts() {
        let term = match &node.marker {
            Marker::Individual(name) => Term::Const(name.clone()),
            Marker::Generic | Marker::CorefVar(_) => {
                let var = format!("x{}", variables.len() + 1);
                variables.push(var.clone());
                Term::Var(var)
            }
        };
        term_of.insert(node.id, term);
    }
    let mut atoms = Vec::new();
    for node in g.concepts() {
        atoms.push(Atom {
            predicate: node.ctype.clone(),
            terms: vec![term_of[&node.id].clone()],
        });
    }
    for edge in g.relations() {
        atoms.push(Atom {
            predicate: edge.rtype.clone(),
            terms: edge.args.iter().map(|a| term_of[a].clone()).collect(),
        });
    }
    Ok(Formula { variables, atoms })
}

/// Deterministic text rendering: `exists x1, x2. A(x1) & r(x1, c)`;
/// the empty formula is `true`.
pub fn render(f: &Formula) -> String {
    if f.is_empty() {
        return "true".to_string();
    }
    let conjuncts: Vec<String> = f
        .atoms
        .iter()
        .map(|a| {
            let terms: Vec<&str> = a
                .terms
                .iter()
                .map(|t| match t {
                    Term::Const(c) => c.as_str(),
                    Term::Var(v) => v.as_str(),
                })
                .collect();
            format!("{}({})", a.predicate, terms.join(", "))
        })
        .collect();
    if f.variables.is_empty() {
        conjuncts.join(" & ")
    } else {
        format!("exists {}. {}", f.variables.join(", "), conjuncts.join(" & "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgraph::ConceptualGraph;
    use crate::ontology::{ConceptLattice, Ontology, RelationLattice};
    use std::collections::BTreeSet;
    use std::sync::Arc;

    fn ont() -> Arc<Ontology> {
        let concepts = ConceptLattice::build(
            ["Employee", "Machine", "Part"].map(String::from),
            [],
        )
        .unwrap();
        let relations = RelationLattice::build(
            [
                (
                    "agent".to_string(),
                    vec!["Employee".to_string(), "Machine".to_string()],
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

    #[test]
    fn empty_graph_renders_true() {
        let g = ConceptualGraph::new(ont());
        let f = phi_translate(&g).unwrap();
        assert!(f.is_empty());
        assert_eq!(render(&f), "true");
    }

    #[test]
    fn james_formula() {
        let mut g = ConceptualGraph::new(ont());
        let e = g
            .add_concept("Employee", Marker::Individual("James".into()))
            .unwrap();
        let m = g
            .add_concept("Machine", Marker::Individual("drill".into()))
            .unwrap();
        let p = g.add_concept("Part", Marker::Generic).unwrap();
        g.add_relation("agent", &[e, m]).unwrap();
        g.add_relation("object", &[p, m]).unwrap();
        let f = phi_translate(&g).unwrap();
        assert_eq!(f.variables, vec!["x1".to_string()]);
        let expected: BTreeSet<String> = [
            "Employee(James)",
            "Machine(drill)",
            "Part(x1)",
            "agent(James, drill)",
            "object(x1, drill)",
        ]
        .into_iter()
        .map(String::from)
        .collect();
        let rendered: BTreeSet<String> = render(&f)
            .trim_start_matches("exists x1. ")
            .split(" & ")
            .map(String::from)
            .collect();
        assert_eq!(rendered, expected);
    }

    #[test]
    fn atom_count_matches_structure() {
        let mut g = ConceptualGraph::new(ont());
        let e = g.add_concept("Employee", Marker::Generic).unwrap();
        let m = g.add_concept("Machine", Marker::Generic).unwrap();
        g.add_relation("agent", &[e, m]).unwrap();
        let f = phi_translate(&g).unwrap();
        assert_eq!(f.atoms.len(), g.concept_count() + g.relation_count());
        assert_eq!(f.variables.len(), 2);
    }
}
