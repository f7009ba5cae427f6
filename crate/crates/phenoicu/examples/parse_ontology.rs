//! Parse the bundled phenotype ontology and walk the DAG.
//!
//! ```bash
//! cargo run --example parse_ontology
//! ```

use std::collections::BTreeSet;

use phenoicu::ontology::{AggregationMode, Ontology, TermId};

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/hpo_small.obo");
    let text = std::fs::read_to_string(path).expect("bundled ontology");
    let ontology = Ontology::parse_obo(&text).expect("valid OBO");
    println!("parsed {} terms, root {}", ontology.len(), ontology.root());

    let pain = TermId::new("HP:0012531").unwrap();
    let term = ontology.term(&pain).unwrap();
    println!("\n{} `{}` parents: {:?}", term.id, term.name, term.parents);
    println!("ancestors of {pain}:");
    for ancestor in ontology.ancestors(&pain).unwrap() {
        println!("  {} {}", ancestor, ontology.term(&ancestor).unwrap().name);
    }

    // roll an active set one level up, keeping the originals
    let active = BTreeSet::from([
        TermId::new("HP:0100749").unwrap(), // chest pain
        TermId::new("HP:0002013").unwrap(), // vomiting
    ]);
    let aggregated = ontology
        .aggregate_to_parents(&active, 1, AggregationMode::Augment)
        .unwrap();
    println!("\naggregate {active:?} one hop up:");
    for term in &aggregated {
        println!("  {} {}", term, ontology.term(term).unwrap().name);
    }
}
