//! Dataset loading, saving and synthetic planted-partition generation.
//!
//! On-disk formats:
//!
//! * edges: UTF-8, one whitespace-separated `u v` pair per line, `#` comments;
//! * features: dense CSV (one row per node) or sparse `row col value` triplets;
//! * labels: one integer per line, aligned to node index;
//! * manifest: JSON [`DatasetManifest`]; relative paths resolve against the
//!   manifest's directory.
//!
//! Nodes without an attribute row are dropped together with their edges and
//! the survivors are re-indexed densely. For dense CSV a node has an
//! attribute row when its index is below the file's row count; for triplets
//! when at least one triplet names it.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::AttributedNetwork;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureFormat {
    DenseCsv,
    SparseTriplet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub edges_path: PathBuf,
    pub features_path: PathBuf,
    #[serde(default)]
    pub labels_path: Option<PathBuf>,
    pub directed: bool,
    pub feature_format: FeatureFormat,
    pub zero_indexed: bool,
    /// Node id range before dropping; inferred from the files when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_nodes: Option<usize>,
    /// Feature count; inferred from the features file when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_features: Option<usize>,
}

impl DatasetManifest {
    /// Reads a manifest and resolves its paths relative to its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: Self = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        manifest.edges_path = base.join(&manifest.edges_path);
        manifest.features_path = base.join(&manifest.features_path);
        manifest.labels_path = manifest.labels_path.map(|p| base.join(p));
        Ok(manifest)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_id(token: &str, zero_indexed: bool, path: &Path, line: usize) -> Result<usize> {
    let raw: usize = token
        .parse()
        .map_err(|_| Error::parse(path, line, format!("invalid node id {token:?}")))?;
    if zero_indexed {
        Ok(raw)
    } else if raw == 0 {
        Err(Error::parse(path, line, "node id 0 in a one-indexed file"))
    } else {
        Ok(raw - 1)
    }
}

fn read_edges(path: &Path, zero_indexed: bool) -> Result<Vec<(usize, usize, usize)>> {
    let text = read(path)?;
    let mut edges = Vec::new();
    for (line, content) in data_lines(&text) {
        let tokens: Vec<&str> = content.split_whitespace().collect();
        match tokens.len() {
            2 => {}
            3 => {
                return Err(Error::parse(
                    path,
                    line,
                    "weighted edges are not supported; expected \"u v\"",
                ))
            }
            _ => return Err(Error::parse(path, line, format!("expected \"u v\", got {content:?}"))),
        }
        let u = parse_id(tokens[0], zero_indexed, path, line)?;
        let v = parse_id(tokens[1], zero_indexed, path, line)?;
        edges.push((u, v, line));
    }
    Ok(edges)
}

struct RawFeatures {
    triplets: Vec<(usize, usize, f64)>,
    present: Vec<bool>,
    ncols: usize,
}

fn parse_value(token: &str, path: &Path, line: usize) -> Result<f64> {
    let v: f64 = token
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, line, format!("invalid number {token:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(path, line, format!("non-finite value {token:?}")));
    }
    Ok(v)
}

fn read_features_raw(
    path: &Path,
    format: FeatureFormat,
    rows: Option<usize>,
    cols: Option<usize>,
    zero_indexed: bool,
) -> Result<RawFeatures> {
    let text = read(path)?;
    let mut triplets = Vec::new();
    let mut present_rows = BTreeSet::new();
    let mut max_row = 0usize;
    let mut ncols = cols.unwrap_or(0);
    match format {
        FeatureFormat::DenseCsv => {
            let mut width: Option<usize> = cols;
            for (row, (line, content)) in data_lines(&text).enumerate() {
                if let Some(n) = rows {
                    if row >= n {
                        return Err(Error::parse(path, line, format!("more than {n} feature rows")));
                    }
                }
                let fields: Vec<&str> = content.split(',').collect();
                match width {
                    Some(w) if w != fields.len() => {
                        return Err(Error::parse(
                            path,
                            line,
                            format!("expected {w} columns, found {}", fields.len()),
                        ))
                    }
                    _ => width = Some(fields.len()),
                }
                for (col, field) in fields.iter().enumerate() {
                    let value = parse_value(field, path, line)?;
                    if value < 0.0 {
                        return Err(Error::NegativeFeature { row, col, value });
                    }
                    if value != 0.0 {
                        triplets.push((row, col, value));
                    }
                }
                present_rows.insert(row);
                max_row = row + 1;
            }
            ncols = width.unwrap_or(0);
        }
        FeatureFormat::SparseTriplet => {
            for (line, content) in data_lines(&text) {
                let tokens: Vec<&str> = content.split_whitespace().collect();
                if tokens.len() != 3 {
                    return Err(Error::parse(path, line, format!("expected \"row col value\", got {content:?}")));
                }
                let row = parse_id(tokens[0], zero_indexed, path, line)?;
                let col = parse_id(tokens[1], zero_indexed, path, line)?;
                let value = parse_value(tokens[2], path, line)?;
                if value < 0.0 {
                    return Err(Error::NegativeFeature { row, col, value });
                }
                if let Some(n) = rows {
                    if row >= n {
                        return Err(Error::parse(path, line, format!("row {row} outside {n} nodes")));
                    }
                }
                match cols {
                    Some(m) if col >= m => {
                        return Err(Error::parse(path, line, format!("column {col} outside {m} features")))
                    }
                    Some(_) => {}
                    None => ncols = ncols.max(col + 1),
                }
                present_rows.insert(row);
                max_row = max_row.max(row + 1);
                triplets.push((row, col, value));
            }
        }
    }
    let nrows = rows.unwrap_or(max_row);
    let mut present = vec![false; nrows];
    for r in present_rows {
        present[r] = true;
    }
    Ok(RawFeatures {
        triplets,
        present,
        ncols,
    })
}

/// Reads an `n × m` nonnegative feature matrix (ids in triplet files are
/// zero-based).
pub fn load_features(path: impl AsRef<Path>, format: FeatureFormat, n: usize, m: usize) -> Result<CsrMatrix> {
    let raw = read_features_raw(path.as_ref(), format, Some(n), Some(m), true)?;
    CsrMatrix::from_triplets(n, m, raw.triplets)
}

fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = read(path)?;
    data_lines(&text)
        .map(|(line, content)| {
            content
                .parse::<usize>()
                .map_err(|_| Error::parse(path, line, format!("invalid label {content:?}")))
        })
        .collect()
}

/// Renumbers class ids to `0..c` preserving their order.
fn compact_labels(labels: Vec<usize>) -> Vec<usize> {
    let classes: BTreeSet<usize> = labels.iter().copied().collect();
    let map: std::collections::BTreeMap<usize, usize> =
        classes.into_iter().enumerate().map(|(i, c)| (c, i)).collect();
    labels.into_iter().map(|l| map[&l]).collect()
}

/// Loads and preprocesses a dataset described by a manifest.
///
/// Directed edge lists are symmetrized, duplicates collapse to weight 1,
/// self-loops are kept, and nodes without attributes are dropped.
pub fn load_dataset(manifest: &DatasetManifest) -> Result<AttributedNetwork> {
    let edges = read_edges(&manifest.edges_path, manifest.zero_indexed)?;
    let raw = read_features_raw(
        &manifest.features_path,
        manifest.feature_format,
        manifest.num_nodes,
        manifest.num_features,
        manifest.zero_indexed,
    )?;
    let labels = manifest
        .labels_path
        .as_ref()
        .map(|p| read_labels(p))
        .transpose()?;

    let max_edge_id = edges.iter().map(|&(u, v, _)| u.max(v) + 1).max().unwrap_or(0);
    let n_total = match manifest.num_nodes {
        Some(n) => n,
        None => max_edge_id.max(raw.present.len()),
    };
    if let Some(&(u, v, line)) = edges.iter().find(|&&(u, v, _)| u.max(v) >= n_total) {
        return Err(Error::parse(
            &manifest.edges_path,
            line,
            format!("edge ({u}, {v}) references a node outside 0..{n_total}"),
        ));
    }

    let mut present = raw.present;
    present.resize(n_total, false);
    let keep: Vec<usize> = (0..n_total).filter(|&i| present[i]).collect();
    let mut new_id = vec![usize::MAX; n_total];
    for (new, &old) in keep.iter().enumerate() {
        new_id[old] = new;
    }

    let mut pairs = BTreeSet::new();
    for &(u, v, _) in &edges {
        let (a, b) = (new_id[u], new_id[v]);
        if a == usize::MAX || b == usize::MAX {
            continue;
        }
        // an undirected list is symmetric by definition, so both flags
        // produce the same pair set
        pairs.insert((a, b));
        pairs.insert((b, a));
    }
    let n = keep.len();
    let adjacency = CsrMatrix::from_triplets(n, n, pairs.into_iter().map(|(a, b)| (a, b, 1.0)))?;

    let features = CsrMatrix::from_triplets(n_total, raw.ncols, raw.triplets)?;
    let all_cols: Vec<usize> = (0..raw.ncols).collect();
    let features = features.submatrix(&keep, &all_cols);

    let labels = match labels {
        None => None,
        Some(l) if l.len() == n_total => Some(keep.iter().map(|&i| l[i]).collect()),
        Some(l) if l.len() == n => Some(l),
        Some(l) => {
            return Err(Error::InvalidNetwork(format!(
                "{} labels, expected {} (all nodes) or {} (attributed nodes)",
                l.len(),
                n_total,
                n
            )))
        }
    };
    AttributedNetwork::new(adjacency, features, labels.map(compact_labels))
}

/// Writes a network as zero-indexed edge list, sparse triplets and labels
/// plus a `manifest.json`, returning the manifest path.
pub fn save_dataset(net: &AttributedNetwork, dir: impl AsRef<Path>, name: &str) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |file: &str, body: String| -> Result<()> {
        let p = dir.join(file);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };

    let mut edges = String::new();
    for (i, j, _) in net.adjacency().iter().filter(|&(i, j, _)| i <= j) {
        edges.push_str(&format!("{i} {j}\n"));
    }
    write("edges.txt", edges)?;

    let mut feats = String::new();
    for (i, j, v) in net.features().iter() {
        feats.push_str(&format!("{i} {j} {v:?}\n"));
    }
    write("features.txt", feats)?;

    let labels_path = match net.labels() {
        Some(labels) => {
            let body: String = labels.iter().map(|l| format!("{l}\n")).collect();
            write("labels.txt", body)?;
            Some(PathBuf::from("labels.txt"))
        }
        None => None,
    };

    let manifest = DatasetManifest {
        name: name.to_string(),
        edges_path: "edges.txt".into(),
        features_path: "features.txt".into(),
        labels_path,
        directed: false,
        feature_format: FeatureFormat::SparseTriplet,
        zero_indexed: true,
        num_nodes: Some(net.node_count()),
        num_features: Some(net.feature_count()),
    };
    let path = dir.join("manifest.json");
    let body = serde_json::to_string_pretty(&manifest)? + "\n";
    fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Parameters of a synthetic planted-partition attributed network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub n: usize,
    pub k: usize,
    pub d_informative: usize,
    pub d_noise: usize,
    pub intra_p: f64,
    pub inter_p: f64,
    pub signal_strength: f64,
    /// Mean of the exponential noise added to every feature.
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
    pub seed: u64,
}

fn default_noise_scale() -> f64 {
    1.0
}

impl PlantedSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 || self.k > self.n {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= k <= n, got n = {}, k = {}",
                self.n, self.k
            )));
        }
        if self.d_informative + self.d_noise == 0 {
            return Err(Error::InvalidArgument("at least one feature is required".into()));
        }
        let prob = 0.0..=1.0;
        if !prob.contains(&self.intra_p) || !prob.contains(&self.inter_p) {
            return Err(Error::InvalidArgument("edge probabilities must lie in [0, 1]".into()));
        }
        if !(self.intra_p > self.inter_p) {
            return Err(Error::InvalidArgument("intra_p must exceed inter_p".into()));
        }
        if !(self.signal_strength >= 0.0 && self.signal_strength.is_finite()) {
            return Err(Error::InvalidArgument("signal_strength must be >= 0".into()));
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::InvalidArgument("noise_scale must be positive".into()));
        }
        Ok(())
    }

    /// Planted block of node `i`: contiguous, equal-sized (±1) groups.
    pub fn block_of(&self, i: usize) -> usize {
        i * self.k / self.n
    }

    /// Block whose mean informative feature `j` shifts.
    pub fn home_block(&self, j: usize) -> usize {
        j % self.k
    }
}

const EDGE_STREAM: u64 = 0;

/// Generates a planted-partition network with ground-truth labels.
///
/// Edges appear independently with probability `intra_p` inside a block and
/// `inter_p` across blocks (no self-loops). Every feature carries
/// exponential noise with mean `noise_scale`;
/// informative feature `j` (columns `0..d_informative`) adds
/// `signal_strength` on the nodes of block `j mod k`. Noise features are the
/// remaining columns. Each column draws from its own seeded stream, so
/// column `j` of two specs with the same seed sees the same noise.
pub fn generate_planted(spec: &PlantedSpec) -> Result<AttributedNetwork> {
    spec.validate()?;
    let n = spec.n;
    let labels: Vec<usize> = (0..n).map(|i| spec.block_of(i)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(EDGE_STREAM);
    let mut triplets = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] { spec.intra_p } else { spec.inter_p };
            if rng.random::<f64>() < p {
                triplets.push((i, j, 1.0));
                triplets.push((j, i, 1.0));
            }
        }
    }
    let adjacency = CsrMatrix::from_triplets(n, n, triplets)?;

    let m = spec.d_informative + spec.d_noise;
    let mut features = Array2::<f64>::zeros((n, m));
    for j in 0..m {
        let mut col_rng = ChaCha8Rng::seed_from_u64(spec.seed);
        col_rng.set_stream(j as u64 + 1);
        for i in 0..n {
            let e: f64 = Exp1.sample(&mut col_rng);
            let noise = spec.noise_scale * e;
            let shift = if j < spec.d_informative && labels[i] == spec.home_block(j) {
                spec.signal_strength
            } else {
                0.0
            };
            features[[i, j]] = noise + shift;
        }
    }
    AttributedNetwork::new(adjacency, CsrMatrix::from_dense(&features), Some(labels))
}
