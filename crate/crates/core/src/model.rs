//! Joint feature map, weight storage and scoring.
//!
//! The weight vector holds one dense block per taxonomy node. The score of
//! leaf `y` for input `x` is the sum of `<block_v, x>` over the nodes `v` on
//! the root-to-leaf path, root excluded. A flat problem is a depth-1
//! taxonomy, so every path is the single class node.
//!
//! # Model files
//!
//! Binary layout, all integers and floats little-endian:
//!
//! | field        | type                      |
//! |--------------|---------------------------|
//! | magic        | 8 bytes, `TSVMMODL`       |
//! | version      | u32, currently 1          |
//! | meta_len     | u32                       |
//! | meta         | `meta_len` bytes of UTF-8 |
//! | feature_dim  | u64                       |
//! | num_nodes    | u64                       |
//! | per node     | parent u64, leaf flag u8  |
//! | blocks       | num_nodes × feature_dim f64, node-major |
//!
//! The text alternative starts with `tsvm-model 1`, followed by `#` metadata
//! lines, `feature_dim <d>`, `nodes <T>`, one `node <id> <parent> <leaf>` line
//! per node and one `block <id> <feature>:<value> ...` line per node listing
//! the non-zero weights.

use std::io::{BufRead, Read, Write};

use crate::data::{SparseVector, Taxonomy};
use crate::error::{Error, Result};

/// Root-to-leaf node paths (root excluded), indexed by leaf.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathSet {
    paths: Vec<Vec<usize>>,
}

impl PathSet {
    pub(crate) fn build(parent: &[usize], root: usize, leaves: &[usize]) -> Self {
        let paths = leaves
            .iter()
            .map(|&leaf| {
                let mut path = Vec::new();
                let mut v = leaf;
                while v != root {
                    path.push(v);
                    v = parent[v];
                }
                path.reverse();
                path
            })
            .collect();
        PathSet { paths }
    }

    pub fn path(&self, leaf: usize) -> &[usize] {
        &self.paths[leaf]
    }

    pub fn num_leaves(&self) -> usize {
        self.paths.len()
    }
}

/// Per-node dense weight blocks of length `feature_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector {
    feature_dim: usize,
    num_nodes: usize,
    data: Vec<f64>,
}

impl WeightVector {
    pub fn zeros(num_nodes: usize, feature_dim: usize) -> Self {
        WeightVector {
            feature_dim,
            num_nodes,
            data: vec![0.0; num_nodes * feature_dim],
        }
    }

    /// Wraps node-major block data.
    pub fn from_blocks(num_nodes: usize, feature_dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != num_nodes * feature_dim {
            return Err(Error::LengthMismatch(format!(
                "{} weights for {num_nodes} blocks of length {feature_dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model("non-finite weight".into()));
        }
        Ok(WeightVector {
            feature_dim,
            num_nodes,
            data,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn block(&self, node: usize) -> &[f64] {
        &self.data[node * self.feature_dim..(node + 1) * self.feature_dim]
    }

    pub fn block_mut(&mut self, node: usize) -> &mut [f64] {
        &mut self.data[node * self.feature_dim..(node + 1) * self.feature_dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `w·f(y;x)`: sum of node-block dot products along the path to leaf `y`.
pub fn score(paths: &PathSet, w: &WeightVector, x: &SparseVector, y: usize) -> f64 {
    let mut s = 0.0;
    for &v in paths.path(y) {
        s += x.dot(w.block(v));
    }
    s
}

/// Scores of every leaf, written into `out`. Each node's dot product is
/// computed once and shared by all leaves below it; the per-leaf sums use
/// the same order as [`score`], so results agree bit for bit.
pub fn score_all_into(paths: &PathSet, w: &WeightVector, x: &SparseVector, node_dots: &mut Vec<f64>, out: &mut [f64]) {
    node_dots.clear();
    node_dots.resize(w.num_nodes(), f64::NAN);
    for (y, slot) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for &v in paths.path(y) {
            if node_dots[v].is_nan() {
                node_dots[v] = x.dot(w.block(v));
            }
            s += node_dots[v];
        }
        *slot = s;
    }
}

pub fn score_all(paths: &PathSet, w: &WeightVector, x: &SparseVector) -> Vec<f64> {
    let mut out = vec![0.0; paths.num_leaves()];
    let mut dots = Vec::new();
    score_all_into(paths, w, x, &mut dots, &mut out);
    out
}

/// Index of the largest score, lowest index on ties.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (y, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = y;
        }
    }
    best
}

pub fn predict(paths: &PathSet, w: &WeightVector, x: &SparseVector) -> usize {
    argmax(&score_all(paths, w, x))
}

/// Adds `scale·x` into every node block on the path to leaf `y`.
pub fn accumulate_feature(paths: &PathSet, acc: &mut WeightVector, x: &SparseVector, y: usize, scale: f64) {
    if scale == 0.0 {
        return;
    }
    let d = acc.feature_dim();
    for &v in paths.path(y) {
        let block = acc.block_mut(v);
        for &(id, val) in x.entries() {
            let id = id as usize;
            if id < d {
                block[id] += scale * val;
            }
        }
    }
}

const MAGIC: &[u8; 8] = b"TSVMMODL";
const VERSION: u32 = 1;

/// A trained classifier: taxonomy plus weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub taxonomy: Taxonomy,
    pub weights: WeightVector,
}

impl Model {
    pub fn new(taxonomy: Taxonomy, weights: WeightVector) -> Result<Self> {
        if weights.num_nodes() != taxonomy.num_nodes() {
            return Err(Error::Model(format!(
                "{} weight blocks for {} taxonomy nodes",
                weights.num_nodes(),
                taxonomy.num_nodes()
            )));
        }
        Ok(Model { taxonomy, weights })
    }

    pub fn zeros(taxonomy: Taxonomy, feature_dim: usize) -> Self {
        let weights = WeightVector::zeros(taxonomy.num_nodes(), feature_dim);
        Model { taxonomy, weights }
    }

    pub fn predict(&self, x: &SparseVector) -> usize {
        predict(self.taxonomy.paths(), &self.weights, x)
    }

    pub fn score_all(&self, x: &SparseVector) -> Vec<f64> {
        score_all(self.taxonomy.paths(), &self.weights, x)
    }

    pub fn write_binary<W: Write>(&self, mut out: W, meta: &str) -> std::io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(meta.len() as u32).to_le_bytes())?;
        out.write_all(meta.as_bytes())?;
        out.write_all(&(self.weights.feature_dim() as u64).to_le_bytes())?;
        out.write_all(&(self.taxonomy.num_nodes() as u64).to_le_bytes())?;
        for v in 0..self.taxonomy.num_nodes() {
            out.write_all(&(self.taxonomy.parent(v) as u64).to_le_bytes())?;
            out.write_all(&[u8::from(self.taxonomy.is_leaf(v))])?;
        }
        for &w in self.weights.as_slice() {
            out.write_all(&w.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a binary model, returning it with its metadata string.
    pub fn read_binary<R: Read>(mut input: R) -> Result<(Self, String)> {
        let bad = |e: std::io::Error| Error::Model(format!("truncated binary model: {e}"));
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic).map_err(bad)?;
        if &magic != MAGIC {
            return Err(Error::Model("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        input.read_exact(&mut b4).map_err(bad)?;
        let version = u32::from_le_bytes(b4);
        if version != VERSION {
            return Err(Error::Model(format!("unsupported version {version}")));
        }
        input.read_exact(&mut b4).map_err(bad)?;
        let mut meta = vec![0u8; u32::from_le_bytes(b4) as usize];
        input.read_exact(&mut meta).map_err(bad)?;
        let meta = String::from_utf8(meta).map_err(|_| Error::Model("metadata is not UTF-8".into()))?;
        input.read_exact(&mut b8).map_err(bad)?;
        let feature_dim = u64::from_le_bytes(b8) as usize;
        input.read_exact(&mut b8).map_err(bad)?;
        let num_nodes = u64::from_le_bytes(b8) as usize;
        let mut parent = Vec::with_capacity(num_nodes);
        let mut is_leaf = Vec::with_capacity(num_nodes);
        for _ in 0..num_nodes {
            input.read_exact(&mut b8).map_err(bad)?;
            parent.push(u64::from_le_bytes(b8) as usize);
            let mut flag = [0u8; 1];
            input.read_exact(&mut flag).map_err(bad)?;
            is_leaf.push(flag[0] != 0);
        }
        let taxonomy = Taxonomy::from_parents(parent, is_leaf)?;
        let mut data = Vec::with_capacity(num_nodes * feature_dim);
        for _ in 0..num_nodes * feature_dim {
            input.read_exact(&mut b8).map_err(bad)?;
            data.push(f64::from_le_bytes(b8));
        }
        let weights = WeightVector::from_blocks(num_nodes, feature_dim, data)?;
        Ok((Model::new(taxonomy, weights)?, meta))
    }

    pub fn write_text<W: Write>(&self, mut out: W, meta: &str) -> std::io::Result<()> {
        writeln!(out, "tsvm-model {VERSION}")?;
        for line in meta.lines() {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "feature_dim {}", self.weights.feature_dim())?;
        writeln!(out, "nodes {}", self.taxonomy.num_nodes())?;
        for v in 0..self.taxonomy.num_nodes() {
            writeln!(out, "node {} {} {}", v, self.taxonomy.parent(v), u8::from(self.taxonomy.is_leaf(v)))?;
        }
        for v in 0..self.taxonomy.num_nodes() {
            write!(out, "block {v}")?;
            for (j, &w) in self.weights.block(v).iter().enumerate() {
                if w != 0.0 {
                    write!(out, " {j}:{w}")?;
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<(Self, String)> {
        let mut lines = input.lines().enumerate();
        let mut next = || -> Result<Option<(usize, String)>> {
            match lines.next() {
                Some((i, l)) => Ok(Some((i + 1, l.map_err(|e| Error::io("<model>", e))?))),
                None => Ok(None),
            }
        };
        let perr = |line: usize, msg: &str| Error::Parse {
            line,
            msg: msg.to_string(),
        };
        let (_, first) = next()?.ok_or_else(|| Error::Model("empty model file".into()))?;
        if first.trim() != format!("tsvm-model {VERSION}") {
            return Err(Error::Model(format!("unrecognized header `{first}`")));
        }
        let mut meta = Vec::new();
        let mut feature_dim = None;
        let mut num_nodes = None;
        let mut parent = Vec::new();
        let mut is_leaf = Vec::new();
        let mut data: Vec<f64> = Vec::new();
        while let Some((lineno, line)) = next()? {
            if let Some(m) = line.strip_prefix('#') {
                meta.push(m.strip_prefix(' ').unwrap_or(m).to_string());
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let int = |s: &str| s.parse::<usize>().map_err(|_| perr(lineno, "invalid integer"));
            match fields.first().copied() {
                Some("feature_dim") if fields.len() == 2 => feature_dim = Some(int(fields[1])?),
                Some("nodes") if fields.len() == 2 => {
                    let t = int(fields[1])?;
                    num_nodes = Some(t);
                    parent = vec![usize::MAX; t];
                    is_leaf = vec![false; t];
                }
                Some("node") if fields.len() == 4 => {
                    let v = int(fields[1])?;
                    if v >= parent.len() {
                        return Err(perr(lineno, "node id out of range"));
                    }
                    parent[v] = int(fields[2])?;
                    is_leaf[v] = fields[3] == "1";
                }
                Some("block") if fields.len() >= 2 => {
                    let (d, t) = feature_dim
                        .zip(num_nodes)
                        .ok_or_else(|| perr(lineno, "block before header"))?;
                    if data.is_empty() {
                        data = vec![0.0; t * d];
                    }
                    let v = int(fields[1])?;
                    if v >= t {
                        return Err(perr(lineno, "block id out of range"));
                    }
                    for tok in &fields[2..] {
                        let (j, w) = tok.split_once(':').ok_or_else(|| perr(lineno, "expected <feature>:<value>"))?;
                        let j = int(j)?;
                        let w: f64 = w.parse().map_err(|_| perr(lineno, "invalid weight"))?;
                        if j >= d {
                            return Err(perr(lineno, "feature index out of range"));
                        }
                        data[v * d + j] = w;
                    }
                }
                None => {}
                _ => return Err(perr(lineno, "unrecognized line")),
            }
        }
        let d = feature_dim.ok_or_else(|| Error::Model("missing feature_dim".into()))?;
        let t = num_nodes.ok_or_else(|| Error::Model("missing nodes".into()))?;
        if data.is_empty() {
            data = vec![0.0; t * d];
        }
        let taxonomy = Taxonomy::from_parents(parent, is_leaf)?;
        let weights = WeightVector::from_blocks(t, d, data)?;
        Ok((Model::new(taxonomy, weights)?, meta.join("\n")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// root(0) -> A(1) -> {leaf 2, leaf 3}; root -> leaf 4
    fn deep() -> Taxonomy {
        Taxonomy::from_parents(vec![0, 0, 1, 1, 0], vec![false, false, true, true, true]).unwrap()
    }

    fn x() -> SparseVector {
        SparseVector::from_dense(&[1.0, 0.0, 2.0])
    }

    #[test]
    fn zero_weights_score_zero() {
        let tax = deep();
        let w = WeightVector::zeros(tax.num_nodes(), 3);
        for y in 0..3 {
            assert_eq!(score(tax.paths(), &w, &x(), y), 0.0);
        }
        assert_eq!(score_all(tax.paths(), &w, &x()), vec![0.0; 3]);
        assert_eq!(predict(tax.paths(), &w, &x()), 0);
    }

    #[test]
    fn flat_score_is_class_block_dot() {
        let tax = Taxonomy::flat(2);
        let mut w = WeightVector::zeros(3, 3);
        w.block_mut(1).copy_from_slice(&[1.0, 5.0, 0.5]);
        w.block_mut(2).copy_from_slice(&[-1.0, 0.0, 3.0]);
        assert_eq!(score_all(tax.paths(), &w, &x()), vec![2.0, 5.0]);
    }

    #[test]
    fn hierarchical_score_sums_along_path() {
        let tax = deep();
        let mut w = WeightVector::zeros(tax.num_nodes(), 3);
        // block_A·x = 1.0, block_leaf·x = 0.5
        w.block_mut(1).copy_from_slice(&[1.0, 0.0, 0.0]);
        w.block_mut(2).copy_from_slice(&[0.5, 0.0, 0.0]);
        assert_eq!(score(tax.paths(), &w, &x(), 0), 1.5);
        assert_eq!(score(tax.paths(), &w, &x(), 1), 1.0);
    }

    #[test]
    fn predict_breaks_ties_low() {
        assert_eq!(argmax(&[0.1, 0.9, 0.3]), 1);
        assert_eq!(argmax(&[0.5, 0.5, 0.2]), 0);
    }

    #[test]
    fn accumulate_touches_path_only() {
        let tax = Taxonomy::flat(3);
        let mut acc = WeightVector::zeros(4, 3);
        accumulate_feature(tax.paths(), &mut acc, &x(), 1, 0.0);
        assert_eq!(acc.norm_sq(), 0.0);
        accumulate_feature(tax.paths(), &mut acc, &x(), 1, 2.0);
        assert_eq!(acc.block(2), &[2.0, 0.0, 4.0]);
        assert_eq!(acc.block(1), &[0.0; 3]);
        assert_eq!(acc.block(3), &[0.0; 3]);
        accumulate_feature(tax.paths(), &mut acc, &x(), 1, -2.0);
        assert_eq!(acc.norm_sq(), 0.0);

        let tax = deep();
        let mut acc = WeightVector::zeros(5, 3);
        accumulate_feature(tax.paths(), &mut acc, &x(), 1, 1.0);
        assert_eq!(acc.block(1), &[1.0, 0.0, 2.0]);
        assert_eq!(acc.block(3), &[1.0, 0.0, 2.0]);
        assert_eq!(acc.block(0), &[0.0; 3]);
        assert_eq!(acc.block(2), &[0.0; 3]);
    }

    #[test]
    fn binary_and_text_round_trip() {
        let tax = deep();
        let data: Vec<f64> = (0..15).map(|i| (i as f64 - 7.0) / 3.0).collect();
        let model = Model::new(tax, WeightVector::from_blocks(5, 3, data).unwrap()).unwrap();

        let mut buf = Vec::new();
        model.write_binary(&mut buf, "{\"seed\":1}").unwrap();
        assert_eq!(&buf[..8], b"TSVMMODL");
        let (back, meta) = Model::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, model);
        assert_eq!(meta, "{\"seed\":1}");

        let mut buf = Vec::new();
        model.write_text(&mut buf, "a\nb").unwrap();
        let (back, meta) = Model::read_text(buf.as_slice()).unwrap();
        assert_eq!(back, model);
        assert_eq!(meta, "a\nb");

        assert!(Model::read_binary(&buf[..]).is_err());
    }

    fn weights_strategy(nodes: usize, d: usize) -> impl Strategy<Value = WeightVector> {
        proptest::collection::vec(-3.0f64..3.0, nodes * d)
            .prop_map(move |v| WeightVector::from_blocks(nodes, d, v).unwrap())
    }

    fn vector_strategy(d: usize) -> impl Strategy<Value = SparseVector> {
        proptest::collection::vec(-2.0f64..2.0, d).prop_map(|v| SparseVector::from_dense(&v))
    }

    proptest! {
        #[test]
        fn score_all_matches_score_exactly(w in weights_strategy(5, 4), x in vector_strategy(4)) {
            let tax = deep();
            let all = score_all(tax.paths(), &w, &x);
            for (y, s) in all.iter().enumerate() {
                prop_assert_eq!(s.to_bits(), score(tax.paths(), &w, &x, y).to_bits());
            }
        }

        #[test]
        fn sibling_difference_cancels_shared_prefix(w in weights_strategy(5, 4), x in vector_strategy(4)) {
            let tax = deep();
            let diff = score(tax.paths(), &w, &x, 0) - score(tax.paths(), &w, &x, 1);
            let direct = x.dot(w.block(2)) - x.dot(w.block(3));
            prop_assert!((diff - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
        }

        #[test]
        fn flat_taxonomy_matches_per_class_dot(w in weights_strategy(4, 4), x in vector_strategy(4)) {
            let tax = Taxonomy::flat(3);
            let all = score_all(tax.paths(), &w, &x);
            for y in 0..3 {
                prop_assert_eq!(all[y].to_bits(), (0.0 + x.dot(w.block(y + 1))).to_bits());
            }
        }
    }
}
