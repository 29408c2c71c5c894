//! System layout as an undirected s–t graph, its structure function, and the
//! exact survival signature.
//!
//! A system functions when the source `s` and sink `t` are connected through
//! component nodes that all function. Components carry a type label; the
//! survival signature `Φ(l₁,…,l_K)` is the probability that the system
//! functions given exactly `l_k` functioning components of each type, which
//! for exchangeable components is the fraction of matching state vectors in
//! which the system functions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io;

use num_integer::binomial;
use num_rational::Ratio;
use rayon::prelude::*;
use thiserror::Error;

use crate::fmt::sig15;

/// Largest system the brute-force enumeration accepts unless overridden.
pub const DEFAULT_MAX_COMPONENTS: usize = 24;

/// Hard ceiling imposed by the 64-bit state masks.
const MASK_BITS: usize = 63;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: component {id} is assigned a type more than once")]
    DuplicateComponent { line: usize, id: u32 },
    #[error("line {line}: edge endpoint {id} is not a typed component")]
    DanglingEdge { line: usize, id: u32 },
    #[error("line {line}: self-loop on node {node}")]
    SelfLoop { line: usize, node: NodeId },
    #[error("line {line}: edge {a}-{b} is listed more than once")]
    DuplicateEdge { line: usize, a: NodeId, b: NodeId },
    #[error("line {line}: direct s-t edge would let the system function with no components")]
    DirectSourceSink { line: usize },
    #[error("system has no components")]
    EmptyComponentSet,
    #[error("no source: no edge touches node s")]
    NoSource,
    #[error("no sink: no edge touches node t")]
    NoSink,
    #[error("s and t are not connected even when every component functions")]
    Disconnected,
    #[error("state vector has no entry for component {0}")]
    MissingState(u32),
    #[error("state vector names unknown component {0}")]
    UnknownComponent(u32),
    #[error("system has {count} components; enumeration limit is {limit}")]
    TooManyComponents { count: usize, limit: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SignatureError {
    #[error("signature table has {actual} entries, expected {expected} for counts {counts:?}")]
    DimensionMismatch { expected: usize, actual: usize, counts: Vec<usize> },
    #[error("{labels} type labels but {counts} component counts")]
    LabelCountMismatch { labels: usize, counts: usize },
    #[error("duplicate type label `{0}`")]
    DuplicateLabel(String),
    #[error("signature CSV line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("signature CSV: {0}")]
    Io(String),
}

impl From<csv::Error> for SignatureError {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        SignatureError::Csv { line, message: e.to_string() }
    }
}

/// Node identifier: the two terminals or a numbered component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    Source,
    Sink,
    Component(u32),
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Source => f.write_str("s"),
            NodeId::Sink => f.write_str("t"),
            NodeId::Component(id) => write!(f, "{id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Source,
    Sink,
    Component { type_label: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
}

/// Validated reliability block diagram.
///
/// Nodes are kept in canonical order (`s`, `t`, then components by id) and
/// edges as sorted `(min, max)` pairs, so everything derived from the graph
/// is independent of how the input listed them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemGraph {
    nodes: Vec<Node>,
    edges: Vec<(NodeId, NodeId)>,
    type_labels: Vec<String>,
}

impl SystemGraph {
    /// Builds a graph from typed components and edges.
    pub fn new(
        components: impl IntoIterator<Item = (u32, String)>,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self, GraphError> {
        let mut builder = Builder::default();
        for (id, label) in components {
            builder.add_component(0, id, label)?;
        }
        for (a, b) in edges {
            builder.edges.push((0, a, b));
        }
        builder.finish()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    /// Type labels in lexicographic order.
    pub fn type_labels(&self) -> &[String] {
        &self.type_labels
    }

    /// Component ids in ascending order.
    pub fn component_ids(&self) -> Vec<u32> {
        self.components().map(|(id, _)| id).collect()
    }

    pub fn num_components(&self) -> usize {
        self.nodes.len() - 2
    }

    /// Number of components of each type, aligned with [`Self::type_labels`].
    pub fn counts(&self) -> Vec<usize> {
        self.type_labels
            .iter()
            .map(|label| self.components().filter(|(_, l)| *l == label).count())
            .collect()
    }

    fn components(&self) -> impl Iterator<Item = (u32, &str)> {
        self.nodes.iter().filter_map(|n| match (&n.id, &n.kind) {
            (NodeId::Component(id), NodeKind::Component { type_label }) => {
                Some((*id, type_label.as_str()))
            }
            _ => None,
        })
    }

    fn masks(&self) -> Masks {
        let ids = self.component_ids();
        let index: BTreeMap<u32, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut masks = Masks { source: 0, sink: 0, adjacency: vec![0; ids.len()] };
        for &(a, b) in &self.edges {
            match (a, b) {
                (NodeId::Source, NodeId::Component(c)) => masks.source |= 1 << index[&c],
                (NodeId::Sink, NodeId::Component(c)) => masks.sink |= 1 << index[&c],
                (NodeId::Component(x), NodeId::Component(y)) => {
                    masks.adjacency[index[&x]] |= 1 << index[&y];
                    masks.adjacency[index[&y]] |= 1 << index[&x];
                }
                _ => unreachable!("terminal-terminal edges are rejected at construction"),
            }
        }
        masks
    }
}

/// Bitmask form of the graph used during enumeration. Bit `i` is the
/// `i`-th component in ascending id order.
struct Masks {
    source: u64,
    sink: u64,
    adjacency: Vec<u64>,
}

impl Masks {
    fn connected(&self, alive: u64) -> bool {
        let mut reached = self.source & alive;
        let mut frontier = reached;
        while frontier != 0 {
            if reached & self.sink != 0 {
                return true;
            }
            let mut next = 0;
            let mut f = frontier;
            while f != 0 {
                let i = f.trailing_zeros() as usize;
                f &= f - 1;
                next |= self.adjacency[i];
            }
            frontier = next & alive & !reached;
            reached |= frontier;
        }
        reached & self.sink != 0
    }
}

#[derive(Default)]
struct Builder {
    types: BTreeMap<u32, String>,
    edges: Vec<(usize, NodeId, NodeId)>,
}

impl Builder {
    fn add_component(&mut self, line: usize, id: u32, label: String) -> Result<(), GraphError> {
        if self.types.insert(id, label).is_some() {
            return Err(GraphError::DuplicateComponent { line, id });
        }
        Ok(())
    }

    fn finish(self) -> Result<SystemGraph, GraphError> {
        let mut seen = BTreeSet::new();
        for &(line, a, b) in &self.edges {
            for node in [a, b] {
                if let NodeId::Component(id) = node {
                    if !self.types.contains_key(&id) {
                        return Err(GraphError::DanglingEdge { line, id });
                    }
                }
            }
            if a == b {
                return Err(GraphError::SelfLoop { line, node: a });
            }
            let pair = (a.min(b), a.max(b));
            if pair == (NodeId::Source, NodeId::Sink) {
                return Err(GraphError::DirectSourceSink { line });
            }
            if !seen.insert(pair) {
                return Err(GraphError::DuplicateEdge { line, a: pair.0, b: pair.1 });
            }
        }
        if self.types.is_empty() {
            return Err(GraphError::EmptyComponentSet);
        }
        if !seen.iter().any(|&(a, _)| a == NodeId::Source) {
            return Err(GraphError::NoSource);
        }
        if !seen.iter().any(|&(a, b)| a == NodeId::Sink || b == NodeId::Sink) {
            return Err(GraphError::NoSink);
        }

        let mut nodes = vec![
            Node { id: NodeId::Source, kind: NodeKind::Source },
            Node { id: NodeId::Sink, kind: NodeKind::Sink },
        ];
        nodes.extend(self.types.iter().map(|(&id, label)| Node {
            id: NodeId::Component(id),
            kind: NodeKind::Component { type_label: label.clone() },
        }));
        let type_labels: BTreeSet<String> = self.types.values().cloned().collect();
        let graph = SystemGraph {
            nodes,
            edges: seen.into_iter().collect(),
            type_labels: type_labels.into_iter().collect(),
        };
        if graph.num_components() <= MASK_BITS {
            let masks = graph.masks();
            let all = (1u64 << graph.num_components()) - 1;
            if !masks.connected(all) {
                return Err(GraphError::Disconnected);
            }
        }
        Ok(graph)
    }
}

/// Parses the line-oriented system definition:
///
/// ```text
/// # bridge
/// edge: s 1
/// edge: 1 2
/// type: T1 = 1 2
/// ```
///
/// Ids are `s`, `t` or positive integers; every integer id must appear in
/// exactly one `type:` line. Ids on a `type:` line may be separated by
/// whitespace or commas.
pub fn parse_system(text: &str) -> Result<SystemGraph, GraphError> {
    let mut builder = Builder::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let syntax = |message: String| GraphError::Syntax { line, message };
        if let Some(rest) = content.strip_prefix("edge:") {
            let tokens: Vec<&str> = rest.split_whitespace().collect();
            if tokens.len() != 2 {
                return Err(syntax(format!("expected `edge: <id> <id>`, got `{content}`")));
            }
            let a = parse_node(tokens[0]).map_err(syntax)?;
            let b = parse_node(tokens[1]).map_err(syntax)?;
            builder.edges.push((line, a, b));
        } else if let Some(rest) = content.strip_prefix("type:") {
            let (label, ids) = rest
                .split_once('=')
                .ok_or_else(|| syntax("expected `type: <label> = <id> <id> ...`".into()))?;
            let label = label.trim();
            if !valid_label(label) {
                return Err(syntax(format!("invalid type label `{label}`")));
            }
            let tokens: Vec<&str> = ids.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()).collect();
            if tokens.is_empty() {
                return Err(syntax(format!("type `{label}` lists no components")));
            }
            for tok in tokens {
                match parse_node(tok).map_err(syntax)? {
                    NodeId::Component(id) => builder.add_component(line, id, label.to_string())?,
                    other => return Err(syntax(format!("terminal `{other}` cannot have a type"))),
                }
            }
        } else {
            return Err(syntax(format!("unrecognised line `{content}`")));
        }
    }
    builder.finish()
}

fn valid_label(label: &str) -> bool {
    !label.is_empty()
        && label != "*"
        && label.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

fn parse_node(token: &str) -> Result<NodeId, String> {
    match token {
        "s" => Ok(NodeId::Source),
        "t" => Ok(NodeId::Sink),
        _ => match token.parse::<u32>() {
            Ok(id) if id > 0 && token.bytes().all(|b| b.is_ascii_digit()) => Ok(NodeId::Component(id)),
            _ => Err(format!("invalid node id `{token}` (expected s, t or a positive integer)")),
        },
    }
}

/// Binary state per component id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StateVector(BTreeMap<u32, bool>);

impl StateVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, id: u32, functioning: bool) -> &mut Self {
        self.0.insert(id, functioning);
        self
    }

    /// All components of `graph` functioning except those listed.
    pub fn all_but(graph: &SystemGraph, failed: &[u32]) -> Self {
        graph.component_ids().into_iter().map(|id| (id, !failed.contains(&id))).collect()
    }

    /// Only the listed components functioning.
    pub fn only(graph: &SystemGraph, functioning: &[u32]) -> Self {
        graph.component_ids().into_iter().map(|id| (id, functioning.contains(&id))).collect()
    }

    pub fn get(&self, id: u32) -> Option<bool> {
        self.0.get(&id).copied()
    }
}

impl FromIterator<(u32, bool)> for StateVector {
    fn from_iter<I: IntoIterator<Item = (u32, bool)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// φ(x): whether `s` reaches `t` through functioning components.
pub fn structure_function(graph: &SystemGraph, state: &StateVector) -> Result<bool, GraphError> {
    let ids = graph.component_ids();
    if let Some(&unknown) = state.0.keys().find(|id| ids.binary_search(id).is_err()) {
        return Err(GraphError::UnknownComponent(unknown));
    }
    let mut alive = BTreeSet::new();
    for &id in &ids {
        if state.get(id).ok_or(GraphError::MissingState(id))? {
            alive.insert(NodeId::Component(id));
        }
    }
    // Plain breadth-first search over node ids; deliberately not the
    // bitmask path used by the enumeration.
    let mut reached = BTreeSet::from([NodeId::Source]);
    let mut queue = vec![NodeId::Source];
    while let Some(node) = queue.pop() {
        for &(a, b) in graph.edges() {
            let other = if a == node {
                b
            } else if b == node {
                a
            } else {
                continue;
            };
            if other == NodeId::Sink {
                return Ok(true);
            }
            if alive.contains(&other) && reached.insert(other) {
                queue.push(other);
            }
        }
    }
    Ok(false)
}

/// Dense table of `Φ(l₁,…,l_K)`, `l_k ∈ {0,…,m_k}`, stored as exact
/// rationals in row-major order (last type varies fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalSignature {
    type_labels: Vec<String>,
    counts: Vec<usize>,
    entries: Vec<Ratio<u64>>,
}

fn table_len(counts: &[usize]) -> usize {
    counts.iter().map(|m| m + 1).product()
}

impl SurvivalSignature {
    /// Builds a signature from a row-major table. Types are reordered
    /// lexicographically by label (and the table permuted to match).
    pub fn new(
        type_labels: Vec<String>,
        counts: Vec<usize>,
        entries: Vec<Ratio<u64>>,
    ) -> Result<Self, SignatureError> {
        if type_labels.len() != counts.len() {
            return Err(SignatureError::LabelCountMismatch {
                labels: type_labels.len(),
                counts: counts.len(),
            });
        }
        check_dimensions(&counts, entries.len())?;
        let mut order: Vec<usize> = (0..type_labels.len()).collect();
        order.sort_by(|&a, &b| type_labels[a].cmp(&type_labels[b]));
        for w in order.windows(2) {
            if type_labels[w[0]] == type_labels[w[1]] {
                return Err(SignatureError::DuplicateLabel(type_labels[w[0]].clone()));
            }
        }
        let unsorted = SurvivalSignature { type_labels, counts, entries };
        if order.iter().enumerate().all(|(i, &o)| i == o) {
            return Ok(unsorted);
        }
        let labels: Vec<String> = order.iter().map(|&o| unsorted.type_labels[o].clone()).collect();
        let counts: Vec<usize> = order.iter().map(|&o| unsorted.counts[o]).collect();
        let mut sorted = SurvivalSignature { type_labels: labels, counts, entries: Vec::new() };
        sorted.entries = (0..unsorted.entries.len())
            .map(|idx| {
                let l = sorted.multi_index(idx);
                let mut orig = vec![0; l.len()];
                for (pos, &o) in order.iter().enumerate() {
                    orig[o] = l[pos];
                }
                unsorted.entries[unsorted.index_of(&orig)]
            })
            .collect();
        Ok(sorted)
    }

    pub fn type_labels(&self) -> &[String] {
        &self.type_labels
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn num_types(&self) -> usize {
        self.counts.len()
    }

    pub fn entries(&self) -> &[Ratio<u64>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Real-valued view of the table.
    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(ratio_to_f64).collect()
    }

    pub fn get(&self, l: &[usize]) -> Ratio<u64> {
        self.entries[self.index_of(l)]
    }

    pub fn index_of(&self, l: &[usize]) -> usize {
        assert_eq!(l.len(), self.counts.len(), "index arity");
        l.iter().zip(&self.counts).fold(0, |acc, (&lk, &mk)| {
            assert!(lk <= mk, "l_k = {lk} exceeds m_k = {mk}");
            acc * (mk + 1) + lk
        })
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut l = vec![0; self.counts.len()];
        for k in (0..self.counts.len()).rev() {
            l[k] = idx % (self.counts[k] + 1);
            idx /= self.counts[k] + 1;
        }
        l
    }

    pub fn validate(&self) -> ValidationReport {
        validate_signature(&self.counts, &self.entries).expect("dimensions checked at construction")
    }
}

pub(crate) fn ratio_to_f64(r: &Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn check_dimensions(counts: &[usize], len: usize) -> Result<(), SignatureError> {
    let expected = table_len(counts);
    if expected != len {
        return Err(SignatureError::DimensionMismatch { expected, actual: len, counts: counts.to_vec() });
    }
    Ok(())
}

/// Enumerates all `2^m` state vectors, using [`DEFAULT_MAX_COMPONENTS`].
pub fn compute_survival_signature(graph: &SystemGraph) -> Result<SurvivalSignature, GraphError> {
    compute_survival_signature_with_limit(graph, DEFAULT_MAX_COMPONENTS)
}

pub fn compute_survival_signature_with_limit(
    graph: &SystemGraph,
    limit: usize,
) -> Result<SurvivalSignature, GraphError> {
    let m = graph.num_components();
    let limit = limit.min(MASK_BITS);
    if m > limit {
        return Err(GraphError::TooManyComponents { count: m, limit });
    }
    let masks = graph.masks();
    let counts = graph.counts();
    let labels = graph.type_labels().to_vec();

    let type_masks: Vec<u64> = labels
        .iter()
        .map(|label| {
            graph
                .components()
                .enumerate()
                .filter(|(_, (_, l))| l == label)
                .fold(0u64, |acc, (i, _)| acc | (1 << i))
        })
        .collect();
    let mut strides = vec![1usize; counts.len()];
    for k in (0..counts.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * (counts[k + 1] + 1);
    }
    let cells = table_len(&counts);
    let cell_of = |state: u64| -> usize {
        type_masks
            .iter()
            .zip(&strides)
            .map(|(tm, st)| (state & tm).count_ones() as usize * st)
            .sum()
    };

    // Integer tallies are summed per chunk, so the result does not depend
    // on how rayon splits the work.
    const CHUNK: u64 = 1 << 12;
    let total = 1u64 << m;
    let tallies = (0..total.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut local = vec![0u64; cells];
            for state in chunk * CHUNK..((chunk + 1) * CHUNK).min(total) {
                if masks.connected(state) {
                    local[cell_of(state)] += 1;
                }
            }
            local
        })
        .reduce(
            || vec![0u64; cells],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );

    let scaffold = SurvivalSignature { type_labels: labels, counts, entries: Vec::new() };
    let entries = tallies
        .iter()
        .enumerate()
        .map(|(idx, &hits)| {
            let l = scaffold.multi_index(idx);
            let states: u64 =
                l.iter().zip(&scaffold.counts).map(|(&lk, &mk)| binomial(mk as u64, lk as u64)).product();
            Ratio::new(hits, states)
        })
        .collect();
    Ok(SurvivalSignature { entries, ..scaffold })
}

/// A property a valid survival signature must satisfy but this one does not.
#[derive(Debug, Clone, PartialEq)]
pub enum SignatureViolation {
    OutOfRange { cell: Vec<usize>, value: f64 },
    NonzeroWhenAllFailed { value: f64 },
    NotOneWhenAllFunctioning { value: f64 },
    /// Raising coordinate `type_index` from `cell` lowers Φ.
    NotMonotone { cell: Vec<usize>, type_index: usize, value: f64, next_value: f64 },
}

impl fmt::Display for SignatureViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::OutOfRange { cell, value } => write!(f, "Φ{cell:?} = {value} outside [0,1]"),
            Self::NonzeroWhenAllFailed { value } => write!(f, "Φ at all failed = {value} ≠ 0"),
            Self::NotOneWhenAllFunctioning { value } => {
                write!(f, "Φ at full functioning = {value} ≠ 1")
            }
            Self::NotMonotone { cell, type_index, value, next_value } => write!(
                f,
                "monotonicity violated at coordinate {type_index}: Φ{cell:?} = {value} > {next_value}"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<SignatureViolation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks range, boundary values and coordinatewise monotonicity of a
/// row-major table with the given per-type counts.
pub fn validate_signature(
    counts: &[usize],
    entries: &[Ratio<u64>],
) -> Result<ValidationReport, SignatureError> {
    check_dimensions(counts, entries.len())?;
    let scaffold = SurvivalSignature {
        type_labels: Vec::new(),
        counts: counts.to_vec(),
        entries: Vec::new(),
    };
    let one = Ratio::from_integer(1);
    let mut violations = Vec::new();
    for (idx, value) in entries.iter().enumerate() {
        if *value > one {
            violations.push(SignatureViolation::OutOfRange {
                cell: scaffold.multi_index(idx),
                value: ratio_to_f64(value),
            });
        }
    }
    let first = entries[0];
    if first != Ratio::from_integer(0) {
        violations.push(SignatureViolation::NonzeroWhenAllFailed { value: ratio_to_f64(&first) });
    }
    let last = entries[entries.len() - 1];
    if last != one {
        violations.push(SignatureViolation::NotOneWhenAllFunctioning { value: ratio_to_f64(&last) });
    }
    for (idx, value) in entries.iter().enumerate() {
        let cell = scaffold.multi_index(idx);
        for k in 0..counts.len() {
            if cell[k] == counts[k] {
                continue;
            }
            let mut up = cell.clone();
            up[k] += 1;
            let next = entries[scaffold.index_of(&up)];
            if next < *value {
                violations.push(SignatureViolation::NotMonotone {
                    cell: cell.clone(),
                    type_index: k,
                    value: ratio_to_f64(value),
                    next_value: ratio_to_f64(&next),
                });
            }
        }
    }
    Ok(ValidationReport { violations })
}

/// Writes `<type_1>,…,<type_K>,phi_num,phi_den,phi`, one row per cell.
pub fn write_signature_csv<W: io::Write>(sig: &SurvivalSignature, out: W) -> Result<(), SignatureError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = sig.type_labels.clone();
    header.extend(["phi_num", "phi_den", "phi"].map(String::from));
    w.write_record(&header)?;
    for (idx, value) in sig.entries.iter().enumerate() {
        let mut row: Vec<String> = sig.multi_index(idx).iter().map(|l| l.to_string()).collect();
        row.push(value.numer().to_string());
        row.push(value.denom().to_string());
        row.push(sig15(ratio_to_f64(value)));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| SignatureError::Io(e.to_string()))
}

/// Reads a signature CSV as written by [`write_signature_csv`]. Rows may
/// come in any order but every cell must appear exactly once; the exact
/// `phi_num/phi_den` columns are authoritative.
pub fn read_signature_csv<R: io::Read>(input: R) -> Result<SurvivalSignature, SignatureError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = r.headers()?.clone();
    let k = header.len().checked_sub(3).filter(|&k| k > 0).ok_or_else(|| SignatureError::Csv {
        line: 1,
        message: "expected at least one type column plus phi_num,phi_den,phi".into(),
    })?;
    if header.iter().skip(k).collect::<Vec<_>>() != ["phi_num", "phi_den", "phi"] {
        return Err(SignatureError::Csv {
            line: 1,
            message: "last three columns must be phi_num,phi_den,phi".into(),
        });
    }
    let labels: Vec<String> = header.iter().take(k).map(String::from).collect();
    let mut rows: BTreeMap<Vec<usize>, Ratio<u64>> = BTreeMap::new();
    for record in r.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let err = |message: String| SignatureError::Csv { line, message };
        let mut cell = Vec::with_capacity(k);
        for field in record.iter().take(k) {
            cell.push(field.parse::<usize>().map_err(|_| err(format!("bad count `{field}`")))?);
        }
        let num: u64 = record[k].parse().map_err(|_| err(format!("bad phi_num `{}`", &record[k])))?;
        let den: u64 = record[k + 1].parse().map_err(|_| err(format!("bad phi_den `{}`", &record[k + 1])))?;
        if den == 0 {
            return Err(err("phi_den is zero".into()));
        }
        if rows.insert(cell.clone(), Ratio::new(num, den)).is_some() {
            return Err(err(format!("duplicate cell {cell:?}")));
        }
    }
    let counts: Vec<usize> =
        (0..k).map(|j| rows.keys().map(|c| c[j]).max().unwrap_or(0)).collect();
    let expected = table_len(&counts);
    if rows.len() != expected {
        return Err(SignatureError::DimensionMismatch { expected, actual: rows.len(), counts });
    }
    // BTreeMap order over cells is exactly row-major order.
    SurvivalSignature::new(labels, counts, rows.into_values().collect())
}
