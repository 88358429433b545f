//! Datasets on disk, the synthetic block-model benchmark, edge splits for link
//! prediction, and parameter checkpoints.
//!
//! A dataset directory holds five UTF-8 text files with 0-indexed nodes:
//!
//! | file           | content                                        |
//! |----------------|------------------------------------------------|
//! | `meta.txt`     | `n=<int>`, `d=<int>`, `classes=<int>`          |
//! | `edges.txt`    | one undirected edge `u v` per line, `u < v`    |
//! | `features.txt` | `n` lines of `d` space-separated reals         |
//! | `labels.txt`   | `n` lines, class index or `-1`                 |
//! | `masks.txt`    | `n` lines, `train`, `val`, `test` or `none`    |
//!
//! A checkpoint is `BGCN`, a little-endian `u32` format version, then per
//! parameter: `u32` name length, UTF-8 name, `u64` rows, `u64` cols and the
//! row-major entries as little-endian `f64`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::ModelParams;
use crate::rng::{stream_rng, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
    None,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::None => "none",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "none" => Ok(Split::None),
            other => Err(format!("unknown mask {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub graph: Graph,
    pub features: DenseMatrix,
    /// Class index, or −1 for unlabeled nodes.
    pub labels: Vec<i64>,
    pub masks: Vec<Split>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.graph.n();
        if self.features.rows() != n || self.labels.len() != n || self.masks.len() != n {
            return Err(Error::InvalidArgument(format!(
                "dataset sizes disagree: graph {n}, features {}, labels {}, masks {}",
                self.features.rows(),
                self.labels.len(),
                self.masks.len()
            )));
        }
        for (i, (&y, &m)) in self.labels.iter().zip(&self.masks).enumerate() {
            if y < -1 || y >= self.num_classes as i64 {
                return Err(Error::InvalidArgument(format!("node {i}: label {y} out of range")));
            }
            if m != Split::None && y < 0 {
                return Err(Error::InvalidArgument(format!(
                    "node {i} is in the {} mask but unlabeled",
                    m.as_str()
                )));
            }
        }
        Ok(())
    }

    /// Nodes of one split, ascending.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.masks.len()).filter(|&i| self.masks[i] == split).collect()
    }

    /// Labels of the given (labeled) rows.
    pub fn labels_of(&self, rows: &[usize]) -> Vec<usize> {
        rows.iter().map(|&r| self.labels[r].max(0) as usize).collect()
    }
}

fn read_file(dir: &Path, name: &str) -> Result<(PathBuf, String)> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(Error::MissingFile(path));
    }
    let text = fs::read_to_string(&path)?;
    Ok((path, text))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_meta(path: &Path, text: &str) -> Result<(usize, usize, usize)> {
    let (mut n, mut d, mut c) = (None, None, None);
    for (line, l) in data_lines(text) {
        let (key, value) = l
            .split_once('=')
            .ok_or_else(|| parse_err(path, line, "expected key=value"))?;
        let value: usize = value
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad integer {value:?}")))?;
        match key.trim() {
            "n" => n = Some(value),
            "d" => d = Some(value),
            "classes" => c = Some(value),
            other => return Err(parse_err(path, line, format!("unknown key {other:?}"))),
        }
    }
    match (n, d, c) {
        (Some(n), Some(d), Some(c)) => Ok((n, d, c)),
        _ => Err(parse_err(path, 0, "meta needs n, d and classes")),
    }
}

fn expect_count(path: &Path, what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(parse_err(
            path,
            0,
            format!("{what}: expected {expected} lines, found {got}"),
        ));
    }
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let (meta_path, meta) = read_file(dir, "meta.txt")?;
    let (n, d, classes) = parse_meta(&meta_path, &meta)?;

    let (path, text) = read_file(dir, "edges.txt")?;
    let mut edges = Vec::new();
    let mut seen = HashSet::new();
    for (line, l) in data_lines(&text) {
        let mut it = l.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(parse_err(&path, line, "expected two node indices"));
        };
        let u: usize = a
            .parse()
            .map_err(|_| parse_err(&path, line, format!("bad node {a:?}")))?;
        let v: usize = b
            .parse()
            .map_err(|_| parse_err(&path, line, format!("bad node {b:?}")))?;
        if u >= n || v >= n {
            return Err(parse_err(&path, line, format!("node index out of range for n={n}")));
        }
        if u == v {
            return Err(parse_err(&path, line, "self-loop"));
        }
        if u > v {
            return Err(parse_err(&path, line, "edge must be written with u < v"));
        }
        if !seen.insert((u, v)) {
            return Err(parse_err(&path, line, format!("duplicate edge {u} {v}")));
        }
        edges.push((u, v));
    }
    let graph = Graph::from_unit_edges(n, &edges)?;

    let (path, text) = read_file(dir, "features.txt")?;
    let mut data = Vec::with_capacity(n * d);
    let mut rows = 0;
    for (line, l) in data_lines(&text) {
        let before = data.len();
        for tok in l.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(&path, line, format!("bad number {tok:?}")))?;
            data.push(v);
        }
        if data.len() - before != d {
            return Err(parse_err(
                &path,
                line,
                format!("expected {d} values, found {}", data.len() - before),
            ));
        }
        rows += 1;
    }
    expect_count(&path, "features", n, rows)?;
    let features = DenseMatrix::from_vec(n, d, data)?;

    let (path, text) = read_file(dir, "labels.txt")?;
    let mut labels = Vec::with_capacity(n);
    for (line, l) in data_lines(&text) {
        let y: i64 = l
            .parse()
            .map_err(|_| parse_err(&path, line, format!("bad label {l:?}")))?;
        if y < -1 || y >= classes as i64 {
            return Err(parse_err(&path, line, format!("label {y} outside [-1, {classes})")));
        }
        labels.push(y);
    }
    expect_count(&path, "labels", n, labels.len())?;

    let (path, text) = read_file(dir, "masks.txt")?;
    let mut masks = Vec::with_capacity(n);
    for (line, l) in data_lines(&text) {
        masks.push(l.parse::<Split>().map_err(|e| parse_err(&path, line, e))?);
    }
    expect_count(&path, "masks", n, masks.len())?;

    let ds = Dataset {
        graph,
        features,
        labels,
        masks,
        num_classes: classes,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    ds.validate()?;
    fs::create_dir_all(dir)?;
    let (n, d) = ds.features.shape();
    fs::write(
        dir.join("meta.txt"),
        format!("n={n}\nd={d}\nclasses={}\n", ds.num_classes),
    )?;

    let mut s = String::new();
    for (u, v, _) in ds.graph.edges() {
        writeln!(s, "{u} {v}").unwrap();
    }
    fs::write(dir.join("edges.txt"), s)?;

    // `{}` on f64 prints the shortest string that parses back to the same value
    let mut s = String::new();
    for r in 0..n {
        for (j, v) in ds.features.row(r).iter().enumerate() {
            if j > 0 {
                s.push(' ');
            }
            write!(s, "{v}").unwrap();
        }
        s.push('\n');
    }
    fs::write(dir.join("features.txt"), s)?;

    let s: String = ds.labels.iter().map(|y| format!("{y}\n")).collect();
    fs::write(dir.join("labels.txt"), s)?;
    let s: String = ds.masks.iter().map(|m| format!("{}\n", m.as_str())).collect();
    fs::write(dir.join("masks.txt"), s)?;
    Ok(())
}

/// Stochastic block model with block-correlated features.
///
/// Node `i` in community `c` gets, for feature `f` in block `b`,
/// `x_if = signal·μ_cb + latent·s_ib + σ·ε_if` with `μ`, `s`, `ε` standard
/// normal. Features of one block share the class mean and the per-node latent
/// factor, so they are correlated with each other and not across blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct SbmConfig {
    pub communities: usize,
    pub nodes_per_community: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Number of feature blocks; block sizes differ by at most one.
    pub blocks: usize,
    pub signal: f64,
    pub latent: f64,
    pub sigma: f64,
    pub train_fraction: f64,
    pub val_fraction: f64,
}

impl Default for SbmConfig {
    /// Citation-like desk benchmark: mean degree about 4.4, edge homophily
    /// about 0.8, and features weak enough that graph propagation matters.
    fn default() -> Self {
        SbmConfig {
            communities: 4,
            nodes_per_community: 100,
            p_in: 0.035,
            p_out: 0.003,
            feature_dim: 128,
            blocks: 8,
            signal: 0.35,
            latent: 0.5,
            sigma: 0.5,
            train_fraction: 0.05,
            val_fraction: 0.15,
        }
    }
}

impl SbmConfig {
    pub fn n(&self) -> usize {
        self.communities * self.nodes_per_community
    }

    /// Block of feature `f`.
    pub fn block_of(&self, f: usize) -> usize {
        f * self.blocks / self.feature_dim
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.p_in) || !prob(self.p_out) {
            return Err(Error::InvalidArgument("edge probabilities must lie in [0, 1]".into()));
        }
        if !(self.p_in > self.p_out) {
            return Err(Error::InvalidArgument("p_in must exceed p_out".into()));
        }
        if self.communities < 2 || self.nodes_per_community == 0 {
            return Err(Error::InvalidArgument("need at least 2 non-empty communities".into()));
        }
        if self.blocks == 0 || self.blocks > self.feature_dim {
            return Err(Error::InvalidArgument("blocks must lie in [1, feature_dim]".into()));
        }
        if !(self.sigma >= 0.0 && self.signal >= 0.0 && self.latent >= 0.0) {
            return Err(Error::InvalidArgument("scales must be >= 0".into()));
        }
        let (t, v) = (self.train_fraction, self.val_fraction);
        if !(t > 0.0 && v >= 0.0 && t + v < 1.0) {
            return Err(Error::InvalidArgument(
                "mask fractions must be positive and sum below 1".into(),
            ));
        }
        Ok(())
    }
}

pub fn sbm_generate(cfg: &SbmConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let n = cfg.n();
    let community = |i: usize| i / cfg.nodes_per_community;

    let mut rng = stream_rng(seed, Stream::SbmGraph);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if community(u) == community(v) {
                cfg.p_in
            } else {
                cfg.p_out
            };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let graph = Graph::from_unit_edges(n, &edges)?;

    let mut rng = stream_rng(seed, Stream::SbmFeatures);
    let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };
    let means: Vec<f64> = (0..cfg.communities * cfg.blocks).map(|_| normal()).collect();
    let latents: Vec<f64> = (0..n * cfg.blocks).map(|_| normal()).collect();
    let mut features = DenseMatrix::zeros(n, cfg.feature_dim);
    for i in 0..n {
        let c = community(i);
        for (f, x) in features.row_mut(i).iter_mut().enumerate() {
            let b = cfg.block_of(f);
            *x = cfg.signal * means[c * cfg.blocks + b]
                + cfg.latent * latents[i * cfg.blocks + b]
                + cfg.sigma * normal();
        }
    }

    let labels: Vec<i64> = (0..n).map(|i| community(i) as i64).collect();
    let masks = stratified_masks(cfg, &mut stream_rng(seed, Stream::SbmMasks));
    let ds = Dataset {
        graph,
        features,
        labels,
        masks,
        num_classes: cfg.communities,
    };
    ds.validate()?;
    Ok(ds)
}

fn stratified_masks(cfg: &SbmConfig, rng: &mut ChaCha8Rng) -> Vec<Split> {
    let per = cfg.nodes_per_community;
    let n_train = ((cfg.train_fraction * per as f64).round() as usize).max(1);
    let n_val = (cfg.val_fraction * per as f64).round() as usize;
    let mut masks = vec![Split::Test; cfg.n()];
    for c in 0..cfg.communities {
        let mut members: Vec<usize> = (c * per..(c + 1) * per).collect();
        members.shuffle(rng);
        for (k, &i) in members.iter().enumerate() {
            masks[i] = if k < n_train {
                Split::Train
            } else if k < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    masks
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeSplit {
    /// Graph of the training positives, used for propagation.
    pub message: Graph,
    pub train_pos: Vec<(usize, usize)>,
    pub val_pos: Vec<(usize, usize)>,
    pub test_pos: Vec<(usize, usize)>,
    pub val_neg: Vec<(usize, usize)>,
    pub test_neg: Vec<(usize, usize)>,
}

fn ordered(u: usize, v: usize) -> (usize, usize) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Draws `count` distinct unordered non-edges of `g`, none of them in `exclude`.
pub fn sample_non_edges(
    g: &Graph,
    count: usize,
    exclude: &HashSet<(usize, usize)>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(usize, usize)>> {
    let n = g.n();
    let pairs = n * n.saturating_sub(1) / 2;
    let available = pairs - g.edge_count() - exclude.iter().filter(|&&(u, v)| !g.has_edge(u, v)).count();
    if available < count {
        return Err(Error::InvalidArgument(format!(
            "need {count} non-edges but only {available} exist"
        )));
    }
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return Ok(out);
    }
    if available >= 2 * count {
        let mut taken = HashSet::with_capacity(count);
        while out.len() < count {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            if u == v {
                continue;
            }
            let e = ordered(u, v);
            if g.has_edge(e.0, e.1) || exclude.contains(&e) || !taken.insert(e) {
                continue;
            }
            out.push(e);
        }
    } else {
        let mut pool = Vec::with_capacity(available);
        for u in 0..n {
            for v in (u + 1)..n {
                if !g.has_edge(u, v) && !exclude.contains(&(u, v)) {
                    pool.push((u, v));
                }
            }
        }
        out = rand::seq::index::sample(rng, pool.len(), count)
            .into_iter()
            .map(|i| pool[i])
            .collect();
    }
    Ok(out)
}

/// Splits the edges of `g` into train/val/test positives with `ratios`, plus
/// one sampled non-edge per val and test positive.
pub fn split_edges(g: &Graph, ratios: (f64, f64, f64), seed: u64) -> Result<EdgeSplit> {
    let (rt, rv, rs) = ratios;
    if rt < 0.0 || rv < 0.0 || rs < 0.0 || ((rt + rv + rs) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split ratios {ratios:?} must be non-negative and sum to 1"
        )));
    }
    let mut rng = stream_rng(seed, Stream::EdgeSplit);
    let mut edges: Vec<(usize, usize, f64)> = g.edges();
    let m = edges.len();
    let n_val = (rv * m as f64).round() as usize;
    let n_test = (rs * m as f64).round() as usize;
    if n_val + n_test > m || (rv > 0.0 && n_val == 0) || (rs > 0.0 && n_test == 0) {
        return Err(Error::InvalidArgument(format!(
            "graph with {m} edges is too small for split {ratios:?}"
        )));
    }
    edges.shuffle(&mut rng);
    let test = &edges[..n_test];
    let val = &edges[n_test..n_test + n_val];
    let train = &edges[n_test + n_val..];

    let strip = |s: &[(usize, usize, f64)]| -> Vec<(usize, usize)> {
        let mut v: Vec<_> = s.iter().map(|&(a, b, _)| (a, b)).collect();
        v.sort_unstable();
        v
    };
    let message = Graph::from_edges(g.n(), train)?;
    let val_neg = sample_non_edges(g, n_val, &HashSet::new(), &mut rng)?;
    let used: HashSet<(usize, usize)> = val_neg.iter().copied().collect();
    let test_neg = sample_non_edges(g, n_test, &used, &mut rng)?;
    Ok(EdgeSplit {
        message,
        train_pos: strip(train),
        val_pos: strip(val),
        test_pos: strip(test),
        val_neg,
        test_neg,
    })
}

const MAGIC: &[u8; 4] = b"BGCN";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for (name, m) in params.named() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(m.rows() as u64).to_le_bytes());
        buf.extend_from_slice(&(m.cols() as u64).to_le_bytes());
        for v in m.as_slice() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut cur = Cursor { buf: &buf, pos: 0 };
    let magic = cur.take(4).map_err(|_| Error::Checkpoint("missing header".into()))?;
    if magic != MAGIC {
        return Err(Error::Checkpoint("bad magic: not a checkpoint file".into()));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let mut named = Vec::new();
    while cur.pos < buf.len() {
        let len = cur.u32()? as usize;
        let name = String::from_utf8(cur.take(len)?.to_vec())
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?;
        let rows = cur.u64()? as usize;
        let cols = cur.u64()? as usize;
        let count = rows
            .checked_mul(cols)
            .filter(|c| c.checked_mul(8).is_some())
            .ok_or_else(|| Error::Checkpoint(format!("{name}: absurd shape {rows}x{cols}")))?;
        let bytes = cur.take(count * 8)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        named.push((name, DenseMatrix::from_vec(rows, cols, data)?));
    }
    ModelParams::from_named(named)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LayerParams;

    fn tiny() -> Dataset {
        Dataset {
            graph: Graph::from_unit_edges(2, &[(0, 1)]).unwrap(),
            features: DenseMatrix::from_rows(&[[0.1, -2.5e-7], [3.0, 1.0 / 3.0]]),
            labels: vec![1, -1],
            masks: vec![Split::Train, Split::None],
            num_classes: 2,
        }
    }

    #[test]
    fn two_node_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&tiny(), dir.path()).unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds, tiny());
    }

    #[test]
    fn out_of_range_edge_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&tiny(), dir.path()).unwrap();
        fs::write(dir.path().join("edges.txt"), "0 1\n1 2\n").unwrap();
        match load_dataset(dir.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_inputs() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&tiny(), dir.path()).unwrap();
        fs::write(dir.path().join("edges.txt"), "0 1\n0 1\n").unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Parse { line: 2, .. })));
        fs::write(dir.path().join("edges.txt"), "1 1\n").unwrap();
        assert!(load_dataset(dir.path()).is_err());
        fs::write(dir.path().join("edges.txt"), "0 1\n").unwrap();
        fs::write(dir.path().join("labels.txt"), "1\n").unwrap();
        assert!(load_dataset(dir.path()).is_err());
        fs::write(dir.path().join("labels.txt"), "1\n-1\n").unwrap();
        fs::remove_file(dir.path().join("masks.txt")).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::MissingFile(_))));
    }

    #[test]
    fn sbm_without_cross_edges() {
        let cfg = SbmConfig {
            p_out: 0.0,
            nodes_per_community: 20,
            ..SbmConfig::default()
        };
        let ds = sbm_generate(&cfg, 4).unwrap();
        for (u, v, _) in ds.graph.edges() {
            assert_eq!(u / 20, v / 20);
        }
        assert_eq!(ds, sbm_generate(&cfg, 4).unwrap());
        let bad = SbmConfig {
            p_in: 0.01,
            p_out: 0.02,
            ..cfg
        };
        assert!(sbm_generate(&bad, 0).is_err());
    }

    #[test]
    fn sbm_masks_are_stratified() {
        let ds = sbm_generate(&SbmConfig::default(), 1).unwrap();
        for c in 0..4 {
            let count = |s| (0..400).filter(|&i| ds.labels[i] == c && ds.masks[i] == s).count();
            assert_eq!(
                (count(Split::Train), count(Split::Val), count(Split::Test)),
                (5, 15, 80)
            );
        }
    }

    #[test]
    fn trivial_edge_split() {
        let g = Graph::from_unit_edges(5, &[(0, 1), (1, 2), (3, 4)]).unwrap();
        let s = split_edges(&g, (1.0, 0.0, 0.0), 2).unwrap();
        assert_eq!(s.message, g);
        assert!(s.val_pos.is_empty() && s.test_pos.is_empty() && s.val_neg.is_empty());
        assert!(split_edges(&g, (0.5, 0.1, 0.1), 2).is_err());
        assert!(split_edges(&g, (0.0, 0.0, 1.0), 2).is_ok());
    }

    #[test]
    fn checkpoint_round_trip_and_corruption() {
        let params = ModelParams {
            layers: vec![
                LayerParams {
                    w: DenseMatrix::from_rows(&[[1.0, f64::MIN_POSITIVE], [-0.0, 1e300]]),
                    u: Some(DenseMatrix::from_rows(&[[0.0, 0.25], [0.0, 0.0]])),
                },
                LayerParams {
                    w: DenseMatrix::from_rows(&[[0.5], [1.5]]),
                    u: None,
                },
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bgcn");
        save_checkpoint(&params, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, params);
        assert_eq!(back.layers[0].w[(1, 0)].to_bits(), (-0.0f64).to_bits());

        let bytes = fs::read(&path).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        fs::write(&path, &bad).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(m)) if m.contains("magic")));
        let mut bad = bytes.clone();
        bad[4] = 9;
        fs::write(&path, &bad).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(m)) if m.contains("version")));
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(m)) if m.contains("truncated")));
    }
}
