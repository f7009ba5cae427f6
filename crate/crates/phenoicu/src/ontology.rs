//! Phenotype term ontology: OBO parsing, the term DAG, and parent aggregation.
//!
//! Only the fields the pipeline needs are understood (`id`, `name`, `is_a`,
//! `is_obsolete`); every other key is ignored. The ontology is immutable after
//! parse and safe to share across worker threads.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A phenotype term identifier, `HP:` followed by exactly seven digits.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TermId(String);

impl TermId {
    pub fn new(value: &str) -> Result<Self, OntologyError> {
        let digits = value.strip_prefix("HP:");
        match digits {
            Some(d) if d.len() == 7 && d.bytes().all(|b| b.is_ascii_digit()) => {
                Ok(TermId(value.to_string()))
            }
            _ => Err(OntologyError::MalformedId {
                id: value.to_string(),
            }),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TermId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for TermId {
    type Error = OntologyError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        TermId::new(&value)
    }
}

impl From<TermId> for String {
    fn from(id: TermId) -> String {
        id.0
    }
}

/// One ontology term with its `is_a` parents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub id: TermId,
    pub name: String,
    pub parents: BTreeSet<TermId>,
}

/// Whether aggregation keeps the original terms alongside the added parents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// Active terms stay in the output and parents are added (default).
    Augment,
    /// Each active term is replaced by its reachable parents; terms with no
    /// parent within range are kept.
    Replace,
}

/// An immutable DAG of phenotype terms rooted at a single parentless term.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ontology {
    terms: BTreeMap<TermId, Term>,
    root: TermId,
}

#[derive(Debug, Error)]
pub enum OntologyError {
    #[error("malformed term id `{id}` (expected HP: followed by 7 digits)")]
    MalformedId { id: String },
    #[error("line {line}: malformed term id `{id}`")]
    MalformedIdAt { line: usize, id: String },
    #[error("line {line}: duplicate term id {id}")]
    DuplicateId { line: usize, id: TermId },
    #[error("line {line}: stanza has no id")]
    MissingId { line: usize },
    #[error("line {line}: term {id} has a self is_a edge")]
    SelfEdge { line: usize, id: TermId },
    #[error("line {line}: term {id} references unknown parent {parent}")]
    UnknownParent {
        line: usize,
        id: TermId,
        parent: TermId,
    },
    #[error("cycle detected near line {line}: {}", cycle.iter().map(|t| t.as_str()).collect::<Vec<_>>().join(" -> "))]
    Cycle { line: usize, cycle: Vec<TermId> },
    #[error("ontology has no terms")]
    Empty,
    #[error("expected exactly one root term, found {0:?}")]
    AmbiguousRoot(Vec<TermId>),
    #[error("unknown term {0}")]
    UnknownTerm(TermId),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

struct Stanza {
    id: Option<(TermId, usize)>,
    name: Option<String>,
    parents: Vec<(TermId, usize)>,
    obsolete: bool,
    start_line: usize,
}

impl Stanza {
    fn new(start_line: usize) -> Self {
        Stanza {
            id: None,
            name: None,
            parents: Vec::new(),
            obsolete: false,
            start_line,
        }
    }
}

impl Ontology {
    /// Parse an OBO flat file. Accepts LF or CRLF line endings, skips obsolete
    /// terms and non-`[Term]` stanzas, and strips ` ! comment` suffixes from
    /// `is_a` values. The parsed edge set is validated to be a rooted DAG.
    pub fn parse_obo(text: &str) -> Result<Self, OntologyError> {
        let mut terms: BTreeMap<TermId, Term> = BTreeMap::new();
        let mut id_lines: BTreeMap<TermId, usize> = BTreeMap::new();
        let mut current: Option<Stanza> = None;
        let mut in_term_stanza = false;

        let mut finish =
            |stanza: Option<Stanza>| -> Result<(), OntologyError> {
                let Some(s) = stanza else { return Ok(()) };
                if s.obsolete {
                    return Ok(());
                }
                let (id, id_line) = s.id.ok_or(OntologyError::MissingId {
                    line: s.start_line,
                })?;
                if terms.contains_key(&id) {
                    return Err(OntologyError::DuplicateId { line: id_line, id });
                }
                let mut parents = BTreeSet::new();
                for (parent, line) in s.parents {
                    if parent == id {
                        return Err(OntologyError::SelfEdge { line, id });
                    }
                    id_lines.entry(parent.clone()).or_insert(line);
                    parents.insert(parent);
                }
                id_lines.insert(id.clone(), id_line);
                terms.insert(
                    id.clone(),
                    Term {
                        id,
                        name: s.name.unwrap_or_default(),
                        parents,
                    },
                );
                Ok(())
            };

        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw_line.trim_end_matches('\r').trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('[') {
                finish(current.take())?;
                in_term_stanza = header.trim_end_matches(']') == "Term";
                if in_term_stanza {
                    current = Some(Stanza::new(line_no));
                }
                continue;
            }
            if !in_term_stanza {
                continue;
            }
            let Some((key, value)) = line.split_once(':') else {
                continue;
            };
            let value = value.trim();
            let stanza = current.as_mut().expect("stanza open while in_term_stanza");
            match key.trim() {
                "id" => {
                    let id = TermId::new(value).map_err(|_| OntologyError::MalformedIdAt {
                        line: line_no,
                        id: value.to_string(),
                    })?;
                    stanza.id = Some((id, line_no));
                }
                "name" => stanza.name = Some(value.to_string()),
                "is_a" => {
                    // `is_a: HP:0000001 ! All` — everything after ` ! ` is a comment.
                    let raw = value.split('!').next().unwrap_or("").trim();
                    let parent =
                        TermId::new(raw).map_err(|_| OntologyError::MalformedIdAt {
                            line: line_no,
                            id: raw.to_string(),
                        })?;
                    stanza.parents.push((parent, line_no));
                }
                "is_obsolete" if value == "true" => stanza.obsolete = true,
                _ => {} // ignore unknown keys
            }
        }
        finish(current.take())?;

        if terms.is_empty() {
            return Err(OntologyError::Empty);
        }
        // Reject references to terms that never appear as a stanza.
        for term in terms.values() {
            for parent in &term.parents {
                if !terms.contains_key(parent) {
                    return Err(OntologyError::UnknownParent {
                        line: id_lines.get(parent).copied().unwrap_or(0),
                        id: term.id.clone(),
                        parent: parent.clone(),
                    });
                }
            }
        }

        let roots: Vec<TermId> = terms
            .values()
            .filter(|t| t.parents.is_empty())
            .map(|t| t.id.clone())
            .collect();
        if roots.len() != 1 {
            return Err(OntologyError::AmbiguousRoot(roots));
        }
        let root = roots.into_iter().next().unwrap();

        let ontology = Ontology { terms, root };
        ontology.check_acyclic(&id_lines)?;
        Ok(ontology)
    }

    /// Kahn's algorithm over parent edges; any leftover node is on a cycle.
    fn check_acyclic(&self, id_lines: &BTreeMap<TermId, usize>) -> Result<(), OntologyError> {
        let mut out_degree: BTreeMap<&TermId, usize> = BTreeMap::new();
        let mut children: BTreeMap<&TermId, Vec<&TermId>> = BTreeMap::new();
        for term in self.terms.values() {
            out_degree.insert(&term.id, term.parents.len());
            for parent in &term.parents {
                children.entry(parent).or_default().push(&term.id);
            }
        }
        let mut queue: VecDeque<&TermId> = out_degree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(id, _)| *id)
            .collect();
        let mut seen = 0usize;
        while let Some(id) = queue.pop_front() {
            seen += 1;
            for child in children.get(id).map(Vec::as_slice).unwrap_or(&[]) {
                let d = out_degree.get_mut(child).unwrap();
                *d -= 1;
                if *d == 0 {
                    queue.push_back(child);
                }
            }
        }
        if seen == self.terms.len() {
            return Ok(());
        }
        // Walk parent edges among unresolved nodes to report one concrete cycle.
        let stuck: BTreeSet<&TermId> = out_degree
            .iter()
            .filter(|(_, d)| **d > 0)
            .map(|(id, _)| *id)
            .collect();
        let start = stuck.iter().next().unwrap();
        let mut path = vec![(*start).clone()];
        let mut cursor = *start;
        loop {
            let next = self.terms[cursor]
                .parents
                .iter()
                .find(|p| stuck.contains(p))
                .expect("stuck node must have a stuck parent");
            if let Some(pos) = path.iter().position(|t| t == next) {
                let mut cycle = path.split_off(pos);
                cycle.push(next.clone());
                let line = cycle
                    .iter()
                    .filter_map(|t| id_lines.get(t).copied())
                    .min()
                    .unwrap_or(0);
                return Err(OntologyError::Cycle { line, cycle });
            }
            path.push(next.clone());
            cursor = next;
        }
    }

    pub fn root(&self) -> &TermId {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn contains(&self, id: &TermId) -> bool {
        self.terms.contains_key(id)
    }

    pub fn term(&self, id: &TermId) -> Option<&Term> {
        self.terms.get(id)
    }

    pub fn terms(&self) -> impl Iterator<Item = &Term> {
        self.terms.values()
    }

    /// Transitive closure over parent edges, excluding the term itself.
    pub fn ancestors(&self, id: &TermId) -> Result<BTreeSet<TermId>, OntologyError> {
        let term = self
            .terms
            .get(id)
            .ok_or_else(|| OntologyError::UnknownTerm(id.clone()))?;
        let mut out = BTreeSet::new();
        let mut queue: VecDeque<&TermId> = term.parents.iter().collect();
        while let Some(next) = queue.pop_front() {
            if out.insert(next.clone()) {
                queue.extend(self.terms[next].parents.iter());
            }
        }
        Ok(out)
    }

    /// Expand an active term set upward by at most `levels` parent hops.
    pub fn aggregate_to_parents(
        &self,
        active: &BTreeSet<TermId>,
        levels: u32,
        mode: AggregationMode,
    ) -> Result<BTreeSet<TermId>, OntologyError> {
        for id in active {
            if !self.contains(id) {
                return Err(OntologyError::UnknownTerm(id.clone()));
            }
        }
        let mut added = BTreeSet::new();
        let mut frontier: BTreeSet<&TermId> = active.iter().collect();
        for _ in 0..levels {
            let mut next = BTreeSet::new();
            for id in frontier {
                for parent in &self.terms[id].parents {
                    if added.insert(parent.clone()) {
                        next.insert(parent);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        let mut out = added;
        match mode {
            AggregationMode::Augment => out.extend(active.iter().cloned()),
            AggregationMode::Replace => {
                // keep terms that had nothing to roll up into
                for id in active {
                    if self.terms[id].parents.is_empty() {
                        out.insert(id.clone());
                    }
                }
            }
        }
        Ok(out)
    }

    /// Render back to OBO. `parse_obo(to_obo_string(o))` reproduces the term map.
    pub fn to_obo_string(&self) -> String {
        let mut out = String::new();
        for term in self.terms.values() {
            out.push_str("[Term]\n");
            out.push_str(&format!("id: {}\n", term.id));
            out.push_str(&format!("name: {}\n", term.name));
            for parent in &term.parents {
                let pname = &self.terms[parent].name;
                out.push_str(&format!("is_a: {parent} ! {pname}\n"));
            }
            out.push('\n');
        }
        out
    }
}
