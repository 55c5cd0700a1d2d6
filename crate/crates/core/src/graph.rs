//! Propagation-graph data model and the NDJSON dataset format.
//!
//! Each news item is one graph: node 0 is the news node, every other node is
//! a user who forwarded it. Edges are undirected. Features are pre-computed
//! per node (news-content embedding for node 0, user-history embeddings for
//! the rest) and ingested as-is.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GamcError, Result};
use crate::numerics::Tensor2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Fake,
    Real,
}

impl Label {
    /// +1 for fake (the positive class), -1 for real.
    pub fn sign(self) -> f64 {
        match self {
            Label::Fake => 1.0,
            Label::Real => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Fake => "fake",
            Label::Real => "real",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One news item as a propagation graph.
#[derive(Clone, Debug, PartialEq)]
pub struct PropagationGraph {
    pub id: String,
    /// Undirected edges as given at ingest; each unordered pair appears once.
    pub edges: Vec<(usize, usize)>,
    /// `num_nodes x feature_dim`; row 0 is the news node.
    pub features: Tensor2,
    pub label: Option<Label>,
}

impl PropagationGraph {
    /// Builds and validates a graph whose news node is already at index 0.
    pub fn new(
        id: impl Into<String>,
        edges: Vec<(usize, usize)>,
        features: Tensor2,
        label: Option<Label>,
    ) -> Result<Self> {
        let g = PropagationGraph {
            id: id.into(),
            edges,
            features,
            label,
        };
        g.validate()?;
        Ok(g)
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    #[inline]
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    #[inline]
    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Index of the news node. Always 0 after ingest.
    pub fn news_node(&self) -> usize {
        0
    }

    pub fn validate(&self) -> Result<()> {
        let violation = |rule: String| GamcError::Invariant {
            graph_id: self.id.clone(),
            rule,
        };
        let n = self.num_nodes();
        if n == 0 {
            return Err(violation("num_nodes >= 1 (the news node must exist)".into()));
        }
        if !self.features.is_finite() {
            return Err(violation("finite features".into()));
        }
        let mut seen = HashSet::with_capacity(self.edges.len());
        for &(a, b) in &self.edges {
            if a >= n || b >= n {
                return Err(violation(format!("edge endpoint < num_nodes ({a}-{b} with {n} nodes)")));
            }
            if a == b {
                return Err(violation(format!("no self-loops (node {a})")));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(violation(format!("no duplicate undirected edges ({a}-{b})")));
            }
        }
        Ok(())
    }

    pub fn to_csr(&self) -> AdjacencyCsr {
        AdjacencyCsr::from_edges(self.num_nodes(), &self.edges)
            .expect("validated graph has in-range edges")
    }

    /// Same graph with the label removed; the training path only sees these.
    pub fn unlabeled(&self) -> PropagationGraph {
        PropagationGraph {
            label: None,
            ..self.clone()
        }
    }

    /// Relabels nodes so that new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<PropagationGraph> {
        let n = self.num_nodes();
        let mut inverse = vec![usize::MAX; n];
        if perm.len() != n {
            return Err(GamcError::Contract(format!("permutation of length {} for {n} nodes", perm.len())));
        }
        for (new, &old) in perm.iter().enumerate() {
            if old >= n || inverse[old] != usize::MAX {
                return Err(GamcError::Contract("not a permutation".into()));
            }
            inverse[old] = new;
        }
        Ok(PropagationGraph {
            id: self.id.clone(),
            edges: self.edges.iter().map(|&(a, b)| (inverse[a], inverse[b])).collect(),
            features: self.features.gather_rows(perm)?,
            label: self.label,
        })
    }
}

/// Symmetric compressed-sparse-row adjacency. Both directions of every
/// undirected edge are materialized; columns are sorted within each row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdjacencyCsr {
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl AdjacencyCsr {
    pub fn empty(num_nodes: usize) -> Self {
        AdjacencyCsr {
            offsets: vec![0; num_nodes + 1],
            indices: Vec::new(),
        }
    }

    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut degree = vec![0usize; num_nodes];
        for &(a, b) in edges {
            if a >= num_nodes || b >= num_nodes {
                return Err(GamcError::CorruptGraph(format!(
                    "edge {a}-{b} out of range for {num_nodes} nodes"
                )));
            }
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets.clone();
        let mut indices = vec![0; offsets[num_nodes]];
        for &(a, b) in edges {
            indices[fill[a]] = b;
            fill[a] += 1;
            indices[fill[b]] = a;
            fill[b] += 1;
        }
        for i in 0..num_nodes {
            indices[offsets[i]..offsets[i + 1]].sort_unstable();
        }
        Ok(AdjacencyCsr { offsets, indices })
    }

    /// Validating constructor from raw CSR arrays.
    pub fn from_raw(offsets: Vec<usize>, indices: Vec<usize>) -> Result<Self> {
        let corrupt = |m: &str| Err(GamcError::CorruptGraph(m.to_string()));
        if offsets.first() != Some(&0) || offsets.last() != Some(&indices.len()) {
            return corrupt("offsets must start at 0 and end at the index count");
        }
        if offsets.windows(2).any(|w| w[0] > w[1]) {
            return corrupt("offsets must be nondecreasing");
        }
        let n = offsets.len() - 1;
        let csr = AdjacencyCsr { offsets, indices };
        for i in 0..n {
            let row = csr.neighbors(i);
            if row.iter().any(|&j| j >= n) {
                return corrupt("column index out of range");
            }
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return corrupt("columns must be strictly increasing within a row");
            }
            if row.iter().any(|&j| csr.neighbors(j).binary_search(&i).is_err()) {
                return corrupt("adjacency is not symmetric");
            }
        }
        Ok(csr)
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.indices[self.offsets[i]..self.offsets[i + 1]]
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.indices.len() / 2
    }

    /// Undirected edge list `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.num_nodes())
            .flat_map(|i| self.neighbors(i).iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect()
    }

    pub fn to_dense(&self) -> Tensor2 {
        let n = self.num_nodes();
        let mut d = Tensor2::zeros(n, n);
        for i in 0..n {
            for &j in self.neighbors(i) {
                d.set(i, j, 1.0);
            }
        }
        d
    }

    /// Block-diagonal union; node ids of part `k` are shifted by the total
    /// node count of parts `0..k`.
    pub fn disjoint_union<'a>(parts: impl IntoIterator<Item = &'a AdjacencyCsr>) -> AdjacencyCsr {
        let mut offsets = vec![0];
        let mut indices = Vec::new();
        let mut base = 0;
        for p in parts {
            let shift = indices.len();
            offsets.extend(p.offsets[1..].iter().map(|o| o + shift));
            indices.extend(p.indices.iter().map(|j| j + base));
            base += p.num_nodes();
        }
        AdjacencyCsr { offsets, indices }
    }
}

/// A validated, non-empty collection of graphs sharing one feature dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    feature_dim: usize,
    graphs: Vec<PropagationGraph>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct DatasetStats {
    pub news: usize,
    pub fake: usize,
    pub real: usize,
    pub unlabeled: usize,
    pub nodes: usize,
    pub edges: usize,
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12}{:>10}", "#News", self.news)?;
        writeln!(f, "{:<12}{:>10}", "#True News", self.real)?;
        writeln!(f, "{:<12}{:>10}", "#Fake News", self.fake)?;
        if self.unlabeled > 0 {
            writeln!(f, "{:<12}{:>10}", "#Unlabeled", self.unlabeled)?;
        }
        writeln!(f, "{:<12}{:>10}", "#Nodes", self.nodes)?;
        write!(f, "{:<12}{:>10}", "#Edges", self.edges)
    }
}

impl Dataset {
    pub fn new(name: impl Into<String>, graphs: Vec<PropagationGraph>) -> Result<Self> {
        let name = name.into();
        let first = graphs
            .first()
            .ok_or_else(|| GamcError::Contract(format!("dataset `{name}` is empty")))?;
        let feature_dim = first.feature_dim();
        let mut ids = HashSet::with_capacity(graphs.len());
        for g in &graphs {
            g.validate()?;
            if g.feature_dim() != feature_dim {
                return Err(GamcError::Invariant {
                    graph_id: g.id.clone(),
                    rule: format!("uniform feature_dim (expected {feature_dim}, got {})", g.feature_dim()),
                });
            }
            if !ids.insert(g.id.as_str()) {
                return Err(GamcError::Invariant {
                    graph_id: g.id.clone(),
                    rule: "unique graph ids".into(),
                });
            }
        }
        Ok(Dataset {
            name,
            feature_dim,
            graphs,
        })
    }

    pub fn graphs(&self) -> &[PropagationGraph] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Graphs at the given indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let graphs = indices
            .iter()
            .map(|&i| {
                self.graphs
                    .get(i)
                    .cloned()
                    .ok_or_else(|| GamcError::Contract(format!("graph index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(self.name.clone(), graphs)
    }

    /// Copy with every label removed.
    pub fn unlabeled(&self) -> Dataset {
        Dataset {
            name: self.name.clone(),
            feature_dim: self.feature_dim,
            graphs: self.graphs.iter().map(PropagationGraph::unlabeled).collect(),
        }
    }

    pub fn stats(&self) -> DatasetStats {
        let mut s = DatasetStats {
            news: self.graphs.len(),
            ..Default::default()
        };
        for g in &self.graphs {
            match g.label {
                Some(Label::Fake) => s.fake += 1,
                Some(Label::Real) => s.real += 1,
                None => s.unlabeled += 1,
            }
            s.nodes += g.num_nodes();
            s.edges += g.num_edges();
        }
        s
    }
}

#[derive(Serialize, Deserialize)]
struct MetaLine {
    meta: Meta,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    feature_dim: usize,
    name: String,
}

#[derive(Serialize, Deserialize)]
struct GraphRecord {
    id: String,
    num_nodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    news_node: Option<usize>,
    edges: Vec<[usize; 2]>,
    features: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<Label>,
}

impl GraphRecord {
    fn into_graph(self) -> Result<PropagationGraph> {
        let violation = |rule: String| GamcError::Invariant {
            graph_id: self.id.clone(),
            rule,
        };
        if self.features.len() != self.num_nodes {
            return Err(violation(format!(
                "features.rows == num_nodes ({} rows for {} nodes)",
                self.features.len(),
                self.num_nodes
            )));
        }
        let mut features = Tensor2::from_rows(&self.features)
            .map_err(|_| violation("equal-length feature rows".into()))?;
        let mut edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        match self.news_node {
            None | Some(0) => {}
            Some(k) if k < self.num_nodes => {
                // swap node k into slot 0
                let swap = |v: usize| match v {
                    0 => k,
                    v if v == k => 0,
                    v => v,
                };
                for e in &mut edges {
                    *e = (swap(e.0), swap(e.1));
                }
                let news = features.row(k).to_vec();
                let old0 = features.row(0).to_vec();
                features.row_mut(0).copy_from_slice(&news);
                features.row_mut(k).copy_from_slice(&old0);
            }
            Some(k) => return Err(violation(format!("news_node < num_nodes (got {k})"))),
        }
        if self.num_nodes == 0 {
            return Err(violation("num_nodes >= 1 (the news node must exist)".into()));
        }
        let g = PropagationGraph {
            id: self.id,
            edges,
            features,
            label: self.label,
        };
        g.validate()?;
        Ok(g)
    }

    fn from_graph(g: &PropagationGraph) -> GraphRecord {
        GraphRecord {
            id: g.id.clone(),
            num_nodes: g.num_nodes(),
            news_node: None,
            edges: g.edges.iter().map(|&(a, b)| [a, b]).collect(),
            features: g.features.row_iter().map(<[f64]>::to_vec).collect(),
            label: g.label,
        }
    }
}

/// Reads an NDJSON dataset: an optional `{"meta": ...}` header line followed
/// by one graph object per line. Blank lines are skipped.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| GamcError::io(path, e))?;
    let mut meta: Option<Meta> = None;
    let mut graphs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| GamcError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |e: serde_json::Error| GamcError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        };
        if graphs.is_empty() && meta.is_none() && line.contains("\"meta\"") {
            let value: serde_json::Value = serde_json::from_str(&line).map_err(parse_err)?;
            if value.get("meta").is_some() {
                let m: MetaLine = serde_json::from_value(value).map_err(parse_err)?;
                meta = Some(m.meta);
                continue;
            }
            let record: GraphRecord = serde_json::from_value(value).map_err(parse_err)?;
            graphs.push(record.into_graph()?);
            continue;
        }
        let record: GraphRecord = serde_json::from_str(&line).map_err(parse_err)?;
        graphs.push(record.into_graph()?);
    }
    let name = meta.as_ref().map_or_else(
        || {
            path.file_stem()
                .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned())
        },
        |m| m.name.clone(),
    );
    let ds = Dataset::new(name, graphs)?;
    if let Some(m) = meta {
        if m.feature_dim != ds.feature_dim {
            return Err(GamcError::Invariant {
                graph_id: ds.graphs[0].id.clone(),
                rule: format!(
                    "feature_dim matches header (header {}, data {})",
                    m.feature_dim, ds.feature_dim
                ),
            });
        }
    }
    Ok(ds)
}

/// Writes `ds` as NDJSON with a meta header line.
pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| GamcError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_dataset(ds, &mut w).map_err(|e| GamcError::io(path, e))?;
    w.flush().map_err(|e| GamcError::io(path, e))
}

pub fn write_dataset(ds: &Dataset, w: &mut impl Write) -> std::io::Result<()> {
    let header = MetaLine {
        meta: Meta {
            feature_dim: ds.feature_dim,
            name: ds.name.clone(),
        },
    };
    serde_json::to_writer(&mut *w, &header)?;
    w.write_all(b"\n")?;
    for g in &ds.graphs {
        serde_json::to_writer(&mut *w, &GraphRecord::from_graph(g))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Undirected edge set in canonical `(min, max)` form.
pub fn edge_set(edges: &[(usize, usize)]) -> BTreeSet<(usize, usize)> {
    edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_graph(id: &str, n: usize, dim: usize) -> PropagationGraph {
        let edges = (1..n).map(|i| (i - 1, i)).collect();
        PropagationGraph::new(id, edges, Tensor2::filled(n, dim, 0.5), Some(Label::Real)).unwrap()
    }

    #[test]
    fn path_graph_csr() {
        let g = line_graph("p", 3, 1);
        let csr = g.to_csr();
        assert_eq!(csr.neighbors(0), &[1]);
        assert_eq!(csr.neighbors(1), &[0, 2]);
        assert_eq!(csr.neighbors(2), &[1]);
    }

    #[test]
    fn edgeless_csr_rows_empty() {
        let csr = AdjacencyCsr::from_edges(4, &[]).unwrap();
        assert!((0..4).all(|i| csr.neighbors(i).is_empty()));
    }

    #[test]
    fn rejects_duplicate_reversed_edge() {
        let err = PropagationGraph::new("dup", vec![(0, 1), (1, 0)], Tensor2::zeros(2, 1), None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("dup") && msg.contains("duplicate"), "{msg}");
    }

    #[test]
    fn rejects_self_loop_and_out_of_range() {
        assert!(PropagationGraph::new("s", vec![(1, 1)], Tensor2::zeros(2, 1), None).is_err());
        assert!(PropagationGraph::new("r", vec![(0, 2)], Tensor2::zeros(2, 1), None).is_err());
    }

    #[test]
    fn raw_csr_validation() {
        assert!(AdjacencyCsr::from_raw(vec![0, 1, 2], vec![1, 0]).is_ok());
        assert!(matches!(
            AdjacencyCsr::from_raw(vec![0, 1, 1], vec![1]),
            Err(GamcError::CorruptGraph(_))
        ));
        assert!(AdjacencyCsr::from_raw(vec![0, 1, 2], vec![5, 0]).is_err());
        assert!(AdjacencyCsr::from_raw(vec![0, 2, 1], vec![1, 0]).is_err());
    }

    #[test]
    fn disjoint_union_shifts_ids() {
        let a = AdjacencyCsr::from_edges(2, &[(0, 1)]).unwrap();
        let b = AdjacencyCsr::from_edges(3, &[(0, 2)]).unwrap();
        let u = AdjacencyCsr::disjoint_union([&a, &b]);
        assert_eq!(u.num_nodes(), 5);
        assert_eq!(u.edges(), vec![(0, 1), (2, 4)]);
    }

    #[test]
    fn news_node_is_remapped_to_zero() {
        let rec = GraphRecord {
            id: "n".into(),
            num_nodes: 3,
            news_node: Some(2),
            edges: vec![[2, 1]],
            features: vec![vec![0.0], vec![1.0], vec![2.0]],
            label: None,
        };
        let g = rec.into_graph().unwrap();
        assert_eq!(g.features.row(0), &[2.0]);
        assert_eq!(g.features.row(2), &[0.0]);
        assert_eq!(g.edges, vec![(0, 1)]);
    }

    #[test]
    fn label_omitted_and_empty_edges_serialized() {
        let g = PropagationGraph::new("solo", vec![], Tensor2::zeros(1, 2), None).unwrap();
        let s = serde_json::to_string(&GraphRecord::from_graph(&g)).unwrap();
        assert_eq!(s, r#"{"id":"solo","num_nodes":1,"edges":[],"features":[[0.0,0.0]]}"#);
    }

    #[test]
    fn stats_counts() {
        let mut g2 = line_graph("b", 4, 2);
        g2.label = Some(Label::Fake);
        let ds = Dataset::new("t", vec![line_graph("a", 3, 2), g2]).unwrap();
        let s = ds.stats();
        assert_eq!((s.news, s.fake, s.real, s.nodes, s.edges), (2, 1, 1, 7, 5));
    }

    #[test]
    fn dataset_rejects_duplicate_ids_and_mixed_dims() {
        assert!(Dataset::new("t", vec![line_graph("a", 2, 2), line_graph("a", 2, 2)]).is_err());
        assert!(Dataset::new("t", vec![line_graph("a", 2, 2), line_graph("b", 2, 3)]).is_err());
        assert!(Dataset::new("t", vec![]).is_err());
    }
}
