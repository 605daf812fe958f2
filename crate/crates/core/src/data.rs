//! Dataset ingestion, taxonomies, splitting and label-count derivation.
//!
//! Datasets use a plain sparse text format, one example per line:
//!
//! ```text
//! # comment lines are skipped
//! 2 1:0.5 7:1.0
//! ? 3:1.0
//! ```
//!
//! The first token is the leaf index of the label, or `?` for an unlabeled
//! example. Feature ids are non-negative integers and may appear in any order
//! on the line; they are stored sorted.
//!
//! Taxonomy files hold one node per line, `<node_id> <parent_id> <leaf_flag>`,
//! with the root listed as its own parent. Leaf indices are assigned to leaf
//! nodes in increasing node-id order.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PathSet;

/// Sparse feature vector with strictly increasing feature ids and no
/// explicit zeros.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    /// Builds a vector from unordered `(feature_id, value)` pairs.
    ///
    /// Entries are sorted by id and zero values dropped. Duplicate ids and
    /// non-finite values are rejected.
    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> std::result::Result<Self, String> {
        if let Some(&(id, _)) = pairs.iter().find(|(_, v)| !v.is_finite()) {
            return Err(format!("non-finite value for feature {id}"));
        }
        pairs.sort_by_key(|&(id, _)| id);
        if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(format!("duplicate feature id {}", w[0].0));
        }
        pairs.retain(|&(_, v)| v != 0.0);
        Ok(SparseVector { entries: pairs })
    }

    /// Builds a vector from a dense slice, skipping zeros.
    pub fn from_dense(values: &[f64]) -> Self {
        let entries = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| (i as u32, v))
            .collect();
        SparseVector { entries }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One past the largest feature id, or 0 for an empty vector.
    pub fn dim_hint(&self) -> usize {
        self.entries.last().map_or(0, |&(id, _)| id as usize + 1)
    }

    /// Inner product with a dense vector. Features beyond `dense.len()` are
    /// ignored. Summation runs in increasing feature id order.
    #[inline]
    pub fn dot(&self, dense: &[f64]) -> f64 {
        let mut sum = 0.0;
        for &(id, v) in &self.entries {
            if let Some(w) = dense.get(id as usize) {
                sum += w * v;
            }
        }
        sum
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| v * v).sum()
    }
}

/// Rooted class tree. Leaves are the predictable labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Taxonomy {
    parent: Vec<usize>,
    root: usize,
    leaves: Vec<usize>,
    paths: PathSet,
}

impl Taxonomy {
    /// Depth-1 taxonomy for a flat problem: node 0 is the root, nodes
    /// `1..=m` are the leaves.
    pub fn flat(num_classes: usize) -> Self {
        let mut parent = vec![0; num_classes + 1];
        parent[0] = 0;
        let mut is_leaf = vec![true; num_classes + 1];
        is_leaf[0] = false;
        Self::from_parents(parent, is_leaf).expect("flat taxonomy is valid")
    }

    /// Builds a taxonomy from a parent array (the root is its own parent)
    /// and per-node leaf flags.
    pub fn from_parents(parent: Vec<usize>, is_leaf: Vec<bool>) -> Result<Self> {
        let t = parent.len();
        if is_leaf.len() != t {
            return Err(Error::Taxonomy("leaf flag count differs from node count".into()));
        }
        if t == 0 {
            return Err(Error::Taxonomy("empty taxonomy".into()));
        }
        if let Some(p) = parent.iter().find(|&&p| p >= t) {
            return Err(Error::Taxonomy(format!("parent id {p} out of range")));
        }
        let roots: Vec<usize> = (0..t).filter(|&v| parent[v] == v).collect();
        if roots.len() != 1 {
            return Err(Error::Taxonomy(format!(
                "expected exactly one root, found {}",
                roots.len()
            )));
        }
        let root = roots[0];
        // Every node must reach the root within t steps.
        for start in 0..t {
            let mut v = start;
            let mut steps = 0;
            while v != root {
                v = parent[v];
                steps += 1;
                if steps > t {
                    return Err(Error::Taxonomy(format!("cycle through node {start}")));
                }
            }
        }
        let mut has_child = vec![false; t];
        for v in 0..t {
            if v != root {
                has_child[parent[v]] = true;
            }
        }
        for v in 0..t {
            if is_leaf[v] && has_child[v] {
                return Err(Error::Taxonomy(format!("leaf node {v} has children")));
            }
            if !is_leaf[v] && !has_child[v] {
                return Err(Error::Taxonomy(format!("internal node {v} has no children")));
            }
        }
        if is_leaf[root] {
            return Err(Error::Taxonomy("root cannot be a leaf".into()));
        }
        let leaves: Vec<usize> = (0..t).filter(|&v| is_leaf[v]).collect();
        if leaves.len() < 2 {
            return Err(Error::Taxonomy(format!(
                "need at least 2 leaves, found {}",
                leaves.len()
            )));
        }
        let paths = PathSet::build(&parent, root, &leaves);
        Ok(Taxonomy {
            parent,
            root,
            leaves,
            paths,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(file)).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut rows: Vec<(usize, usize, bool)> = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::io("<taxonomy>", e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "expected `<node_id> <parent_id> <leaf_flag>`".into(),
                });
            }
            let num = |s: &str| {
                s.parse::<usize>().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("invalid integer `{s}`"),
                })
            };
            let leaf = match fields[2] {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("leaf flag must be 0 or 1, got `{other}`"),
                    })
                }
            };
            rows.push((num(fields[0])?, num(fields[1])?, leaf));
        }
        let t = rows.len();
        let mut parent = vec![usize::MAX; t];
        let mut is_leaf = vec![false; t];
        for &(node, p, leaf) in &rows {
            if node >= t || parent[node] != usize::MAX {
                return Err(Error::Taxonomy(format!(
                    "node ids must be unique and contiguous in 0..{t}; bad id {node}"
                )));
            }
            parent[node] = p;
            is_leaf[node] = leaf;
        }
        Self::from_parents(parent, is_leaf)
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for v in 0..self.num_nodes() {
            writeln!(out, "{} {} {}", v, self.parent[v], u8::from(self.is_leaf(v)))?;
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.parent.len()
    }

    /// Number of leaves, i.e. the number of labels `m`.
    pub fn num_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, node: usize) -> usize {
        self.parent[node]
    }

    pub fn parents(&self) -> &[usize] {
        &self.parent
    }

    /// Leaf node ids, indexed by label.
    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        self.leaves.binary_search(&node).is_ok()
    }

    pub fn paths(&self) -> &PathSet {
        &self.paths
    }

    /// True when every leaf hangs directly off the root.
    pub fn is_flat(&self) -> bool {
        self.leaves.iter().all(|&l| self.parent[l] == self.root)
    }
}

/// A set of examples, optionally labeled with leaf indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    examples: Vec<SparseVector>,
    labels: Option<Vec<usize>>,
    feature_dim: usize,
}

impl Dataset {
    /// Checks that labels match the example count and that every feature id
    /// is below `feature_dim`.
    pub fn new(
        examples: Vec<SparseVector>,
        labels: Option<Vec<usize>>,
        feature_dim: usize,
    ) -> Result<Self> {
        if let Some(labels) = &labels {
            if labels.len() != examples.len() {
                return Err(Error::LengthMismatch(format!(
                    "{} labels for {} examples",
                    labels.len(),
                    examples.len()
                )));
            }
        }
        if let Some(x) = examples.iter().find(|x| x.dim_hint() > feature_dim) {
            return Err(Error::Config(format!(
                "feature id {} exceeds feature_dim {feature_dim}",
                x.dim_hint() - 1
            )));
        }
        Ok(Dataset {
            examples,
            labels,
            feature_dim,
        })
    }

    pub fn examples(&self) -> &[SparseVector] {
        &self.examples
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Checks every label against the number of leaves.
    pub fn validate_labels(&self, num_labels: usize) -> Result<()> {
        if let Some(labels) = &self.labels {
            if let Some((i, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_labels) {
                return Err(Error::LabelOutOfRange {
                    line: i + 1,
                    label,
                    num_labels,
                });
            }
        }
        Ok(())
    }

    /// Same examples with labels removed.
    pub fn without_labels(&self) -> Dataset {
        Dataset {
            examples: self.examples.clone(),
            labels: None,
            feature_dim: self.feature_dim,
        }
    }

    /// Same examples with the given labels attached.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Dataset> {
        Dataset::new(self.examples.clone(), Some(labels), self.feature_dim)
    }

    /// Raises `feature_dim` to at least `dim`.
    pub fn with_feature_dim(mut self, dim: usize) -> Dataset {
        self.feature_dim = self.feature_dim.max(dim);
        self
    }

    /// Subset by example index, keeping labels when present.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            feature_dim: self.feature_dim,
        }
    }

    /// Concatenates two datasets. The result is labeled only if both are.
    pub fn concat(&self, other: &Dataset) -> Dataset {
        let mut examples = self.examples.clone();
        examples.extend(other.examples.iter().cloned());
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        Dataset {
            examples,
            labels,
            feature_dim: self.feature_dim.max(other.feature_dim),
        }
    }
}

/// Supported dataset file formats.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataFormat {
    /// `<label> <id>:<val> ...`, with `?` as the label of unlabeled lines.
    #[default]
    SparseLabel,
}

/// Reads a dataset file, validating labels against `num_labels`.
pub fn load_dataset(path: &Path, format: DataFormat, num_labels: usize) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        DataFormat::SparseLabel => parse_dataset(BufReader::new(file), num_labels),
    }
    .map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parses the sparse-label format. A file must be either fully labeled or
/// fully unlabeled.
pub fn parse_dataset<R: BufRead>(reader: R, num_labels: usize) -> Result<Dataset> {
    let mut examples = Vec::new();
    let mut labels: Vec<Option<usize>> = Vec::new();
    let mut first_kind: Option<(bool, usize)> = None;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io("<dataset>", e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label = if label_tok == "?" {
            None
        } else {
            let label: usize = label_tok.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("invalid label `{label_tok}`"),
            })?;
            if label >= num_labels {
                return Err(Error::LabelOutOfRange {
                    line: lineno,
                    label,
                    num_labels,
                });
            }
            Some(label)
        };
        match first_kind {
            None => first_kind = Some((label.is_some(), lineno)),
            Some((labeled, first_line)) if labeled != label.is_some() => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!(
                        "mixes labeled and unlabeled examples (line {first_line} was {})",
                        if labeled { "labeled" } else { "unlabeled" }
                    ),
                });
            }
            Some(_) => {}
        }
        let mut pairs = Vec::new();
        for tok in tokens {
            let (id, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("expected `<id>:<value>`, got `{tok}`"),
            })?;
            let id: u32 = id.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("invalid feature id `{id}`"),
            })?;
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("invalid feature value `{val}`"),
            })?;
            if !val.is_finite() {
                return Err(Error::NonFinite { line: lineno });
            }
            pairs.push((id, val));
        }
        let x = SparseVector::from_pairs(pairs).map_err(|msg| Error::Parse { line: lineno, msg })?;
        examples.push(x);
        labels.push(label);
    }
    let feature_dim = examples.iter().map(SparseVector::dim_hint).max().unwrap_or(0);
    let labels = match first_kind {
        Some((true, _)) => Some(labels.into_iter().map(|l| l.expect("checked")).collect()),
        _ => None,
    };
    Dataset::new(examples, labels, feature_dim)
}

/// Writes a dataset in the sparse-label format. `header` lines are emitted
/// as `#` comments.
pub fn write_dataset<W: Write>(mut out: W, data: &Dataset, header: Option<&str>) -> std::io::Result<()> {
    if let Some(header) = header {
        for line in header.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    for (i, x) in data.examples().iter().enumerate() {
        match data.labels() {
            Some(labels) => write!(out, "{}", labels[i])?,
            None => write!(out, "?")?,
        }
        for &(id, v) in x.entries() {
            write!(out, " {id}:{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Result of [`split_dataset`].
#[derive(Clone, Debug)]
pub struct Split {
    pub labeled: Dataset,
    /// Unlabeled examples; their gold labels live in `unlabeled_gold` and
    /// must not be used for training.
    pub unlabeled: Dataset,
    pub unlabeled_gold: Vec<usize>,
    pub test: Dataset,
}

/// Randomly partitions a labeled dataset into labeled, unlabeled and test
/// parts. `unlabeled_frac·N` and `labeled_frac·N` are floored; the
/// remainder goes to test. Indices within each part keep input order.
pub fn split_dataset(data: &Dataset, unlabeled_frac: f64, labeled_frac: f64, seed: u64) -> Result<Split> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::Config("split_dataset needs a fully labeled dataset".into()))?;
    let valid = |f: f64| f.is_finite() && f > 0.0;
    if !valid(unlabeled_frac) || !valid(labeled_frac) || unlabeled_frac + labeled_frac >= 1.0 {
        return Err(Error::InvalidFractions(format!(
            "unlabeled={unlabeled_frac}, labeled={labeled_frac}; both must be positive with sum < 1"
        )));
    }
    let total = data.len();
    let n_unlabeled = (unlabeled_frac * total as f64 + 1e-9).floor() as usize;
    let n_labeled = (labeled_frac * total as f64 + 1e-9).floor() as usize;
    if n_unlabeled == 0 || n_labeled == 0 || n_unlabeled + n_labeled >= total {
        return Err(Error::TooSmall(format!(
            "{total} examples cannot give every split at least one example"
        )));
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut unlabeled_idx = order[..n_unlabeled].to_vec();
    let mut labeled_idx = order[n_unlabeled..n_unlabeled + n_labeled].to_vec();
    let mut test_idx = order[n_unlabeled + n_labeled..].to_vec();
    unlabeled_idx.sort_unstable();
    labeled_idx.sort_unstable();
    test_idx.sort_unstable();
    let unlabeled_gold = unlabeled_idx.iter().map(|&i| labels[i]).collect();
    Ok(Split {
        labeled: data.subset(&labeled_idx),
        unlabeled: data.subset(&unlabeled_idx).without_labels(),
        unlabeled_gold,
        test: data.subset(&test_idx),
    })
}

/// Required number of unlabeled examples per class, `n(y)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    counts: Vec<usize>,
}

impl LabelCounts {
    pub fn new(counts: Vec<usize>) -> Self {
        LabelCounts { counts }
    }

    /// Tallies the classes of `labels`.
    pub fn from_labels(labels: &[usize], num_classes: usize) -> Self {
        let mut counts = vec![0; num_classes];
        for &y in labels {
            counts[y] += 1;
        }
        LabelCounts { counts }
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn get(&self, class: usize) -> usize {
        self.counts[class]
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Errors unless the counts sum to `n`.
    pub fn check_total(&self, n: usize) -> Result<()> {
        let got = self.total();
        if got != n {
            return Err(Error::CountMismatch { got, expected: n });
        }
        Ok(())
    }
}

/// Rounds `phi·n` to integer counts summing to exactly `n` by largest
/// remainder apportionment; ties go to the lower class index.
pub fn derive_label_counts(phi: &[f64], n: usize) -> Result<LabelCounts> {
    if phi.is_empty() || phi.iter().any(|&p| !p.is_finite() || p < 0.0) {
        return Err(Error::Config("class fractions must be finite and non-negative".into()));
    }
    let sum: f64 = phi.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::PhiSum { sum });
    }
    let raw: Vec<f64> = phi.iter().map(|&p| p * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut by_remainder: Vec<usize> = (0..phi.len()).collect();
    // Stable sort keeps lower indices first among equal remainders.
    by_remainder.sort_by(|&a, &b| {
        let ra = raw[a] - raw[a].floor();
        let rb = raw[b] - raw[b].floor();
        rb.total_cmp(&ra)
    });
    let floor_sum: usize = counts.iter().sum();
    if floor_sum <= n {
        for &y in by_remainder.iter().cycle().take(n - floor_sum) {
            counts[y] += 1;
        }
    } else {
        // Only reachable through rounding slack in `phi`; trim the smallest
        // remainders.
        let mut excess = floor_sum - n;
        for &y in by_remainder.iter().rev().cycle() {
            if excess == 0 {
                break;
            }
            if counts[y] > 0 {
                counts[y] -= 1;
                excess -= 1;
            }
        }
    }
    Ok(LabelCounts { counts })
}

/// Empirical class proportions of `labels`.
pub fn class_fractions(labels: &[usize], num_classes: usize) -> Vec<f64> {
    let counts = LabelCounts::from_labels(labels, num_classes);
    let n = labels.len().max(1) as f64;
    counts.counts().iter().map(|&c| c as f64 / n).collect()
}
