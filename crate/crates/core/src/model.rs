//! Shared domain types and the closed-form block-model algebra.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// A graph whose nodes carry nonnegative feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedNetwork {
    adjacency: CsrMatrix,
    features: CsrMatrix,
    labels: Option<Vec<usize>>,
}

impl AttributedNetwork {
    /// Validates and assembles a network.
    ///
    /// The adjacency must be square, exactly symmetric and nonnegative; the
    /// features must be nonnegative with one row per node; labels, when
    /// present, must be one per node with class ids contiguous from zero.
    pub fn new(adjacency: CsrMatrix, features: CsrMatrix, labels: Option<Vec<usize>>) -> Result<Self> {
        let n = adjacency.nrows();
        if adjacency.ncols() != n {
            return Err(Error::InvalidNetwork(format!(
                "adjacency is {}x{}, expected square",
                n,
                adjacency.ncols()
            )));
        }
        if features.nrows() != n {
            return Err(Error::InvalidNetwork(format!(
                "feature matrix has {} rows for {} nodes",
                features.nrows(),
                n
            )));
        }
        if let Some((i, j, v)) = adjacency.iter().find(|&(_, _, v)| !(v.is_finite() && v >= 0.0)) {
            return Err(Error::InvalidNetwork(format!(
                "adjacency entry ({i}, {j}) = {v} is not a finite nonnegative value"
            )));
        }
        if !adjacency.is_symmetric() {
            return Err(Error::InvalidNetwork("adjacency is not symmetric".into()));
        }
        if let Some((row, col, value)) = features.iter().find(|&(_, _, v)| !(v >= 0.0)) {
            if value.is_finite() {
                return Err(Error::NegativeFeature { row, col, value });
            }
            return Err(Error::InvalidNetwork(format!(
                "feature entry ({row}, {col}) is not finite"
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::InvalidNetwork(format!(
                    "{} labels for {} nodes",
                    labels.len(),
                    n
                )));
            }
            let classes = labels.iter().copied().max().map_or(0, |c| c + 1);
            let mut seen = vec![false; classes];
            for &c in labels {
                seen[c] = true;
            }
            if let Some(missing) = seen.iter().position(|&s| !s) {
                return Err(Error::InvalidNetwork(format!(
                    "class ids are not contiguous: class {missing} has no nodes"
                )));
            }
        }
        Ok(Self {
            adjacency,
            features,
            labels,
        })
    }

    /// Convenience constructor from dense matrices.
    pub fn from_dense(adjacency: &Array2<f64>, features: &Array2<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        Self::new(
            CsrMatrix::from_dense(adjacency),
            CsrMatrix::from_dense(features),
            labels,
        )
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn feature_count(&self) -> usize {
        self.features.ncols()
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    pub fn features(&self) -> &CsrMatrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn class_count(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().copied().max().map_or(0, |c| c + 1))
    }

    /// Number of undirected edges: unordered pairs `{u, v}` with a nonzero
    /// entry, self-loops counted once.
    pub fn undirected_edge_count(&self) -> usize {
        self.adjacency.iter().filter(|&(i, j, _)| i <= j).count()
    }
}

/// Hard assignment of nodes to `k` blocks (the binary allocation matrix `F`,
/// stored as one block id per node).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    blocks: Vec<usize>,
    k: usize,
}

impl Allocation {
    /// Builds an allocation, rejecting ids `>= k` and empty blocks.
    pub fn new(blocks: Vec<usize>, k: usize) -> Result<Self> {
        let alloc = Self::new_unchecked(blocks, k)?;
        if let Some(block) = alloc.block_sizes().iter().position(|&s| s == 0) {
            return Err(Error::EmptyBlock { block });
        }
        Ok(alloc)
    }

    /// Like [`Allocation::new`] but tolerates empty blocks.
    pub fn new_unchecked(blocks: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("block count must be positive".into()));
        }
        if let Some(&b) = blocks.iter().find(|&&b| b >= k) {
            return Err(Error::InvalidArgument(format!("block id {b} out of range for k = {k}")));
        }
        Ok(Self { blocks, k })
    }

    pub fn node_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_count(&self) -> usize {
        self.k
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn block_of(&self, node: usize) -> usize {
        self.blocks[node]
    }

    /// Diagonal of `FᵀF`.
    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &b in &self.blocks {
            sizes[b] += 1;
        }
        sizes
    }

    pub(crate) fn set_block(&mut self, node: usize, block: usize) {
        self.blocks[node] = block;
    }

    fn require_nonempty(&self) -> Result<Vec<usize>> {
        let sizes = self.block_sizes();
        match sizes.iter().position(|&s| s == 0) {
            Some(block) => Err(Error::EmptyBlock { block }),
            None => Ok(sizes),
        }
    }

    /// Dense `n × k` indicator matrix.
    pub fn indicator_matrix(&self) -> Array2<f64> {
        let mut f = Array2::zeros((self.blocks.len(), self.k));
        for (i, &b) in self.blocks.iter().enumerate() {
            f[[i, b]] = 1.0;
        }
        f
    }
}

/// Allocation plus image matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockModel {
    pub allocation: Allocation,
    pub image: Array2<f64>,
}

impl BlockModel {
    pub fn new(allocation: Allocation, image: Array2<f64>) -> Result<Self> {
        let k = allocation.block_count();
        if image.dim() != (k, k) {
            return Err(Error::DimensionMismatch(format!(
                "image matrix is {:?}, expected {k}x{k}",
                image.dim()
            )));
        }
        allocation.require_nonempty()?;
        if image.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(Error::InvalidArgument(
                "image matrix entries must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { allocation, image })
    }

    /// Fits the image matrix to `adjacency` in closed form.
    pub fn fit(adjacency: &CsrMatrix, allocation: Allocation) -> Result<Self> {
        let image = image_matrix_closed_form(adjacency, &allocation)?;
        Self::new(allocation, image)
    }

    pub fn block_count(&self) -> usize {
        self.allocation.block_count()
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.allocation.block_sizes()
    }
}

/// Nonnegative feature importance vector `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScores(Array1<f64>);

impl FeatureScores {
    pub fn new(values: Array1<f64>) -> Result<Self> {
        if values.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(Error::InvalidArgument(
                "feature scores must be finite and nonnegative".into(),
            ));
        }
        Ok(Self(values))
    }

    /// `1 / ‖1‖₂`, the solver's starting point.
    pub fn uniform(m: usize) -> Self {
        Self(Array1::from_elem(m, 1.0 / (m as f64).sqrt()))
    }

    pub(crate) fn from_raw(values: Array1<f64>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn view(&self) -> ArrayView1<'_, f64> {
        self.0.view()
    }

    pub fn nnz(&self) -> usize {
        self.0.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn norm(&self) -> f64 {
        self.0.dot(&self.0).sqrt()
    }

    pub fn into_inner(self) -> Array1<f64> {
        self.0
    }
}

fn check_scores(net: &AttributedNetwork, scores: &FeatureScores) -> Result<()> {
    if scores.len() != net.feature_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores for {} features",
            scores.len(),
            net.feature_count()
        )));
    }
    Ok(())
}

/// Materializes the induced graph `Â = Y·diag(r)·Yᵀ`.
///
/// Quadratic in the node count; use [`InducedOperator`] on large graphs.
pub fn induced_adjacency(net: &AttributedNetwork, scores: &FeatureScores) -> Result<Array2<f64>> {
    check_scores(net, scores)?;
    let y = net.features();
    let r = scores.values();
    let n = net.node_count();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        let (ci, vi) = y.row(i);
        for j in i..n {
            let (cj, vj) = y.row(j);
            // sorted-merge dot product over shared columns
            let (mut a, mut b, mut s) = (0, 0, 0.0);
            while a < ci.len() && b < cj.len() {
                match ci[a].cmp(&cj[b]) {
                    std::cmp::Ordering::Less => a += 1,
                    std::cmp::Ordering::Greater => b += 1,
                    std::cmp::Ordering::Equal => {
                        s += vi[a] * r[ci[a]] * vj[b];
                        a += 1;
                        b += 1;
                    }
                }
            }
            out[[i, j]] = s;
            out[[j, i]] = s;
        }
    }
    Ok(out)
}

/// Matrix-free induced graph: `v ↦ Y(diag(r)(Yᵀv))`.
pub struct InducedOperator<'a> {
    features: &'a CsrMatrix,
    features_t: CsrMatrix,
    scores: &'a FeatureScores,
}

impl<'a> InducedOperator<'a> {
    pub fn new(net: &'a AttributedNetwork, scores: &'a FeatureScores) -> Result<Self> {
        check_scores(net, scores)?;
        Ok(Self {
            features: net.features(),
            features_t: net.features().transpose(),
            scores,
        })
    }

    pub fn apply(&self, v: ArrayView1<'_, f64>) -> Array1<f64> {
        let mut t = self.features_t.mul_vec(v);
        t *= self.scores.values();
        self.features.mul_vec(t.view())
    }
}

/// Least-squares image matrix `D⁻¹FᵀAFD⁻¹` for a hard allocation.
pub fn image_matrix_closed_form(adjacency: &CsrMatrix, allocation: &Allocation) -> Result<Array2<f64>> {
    let n = allocation.node_count();
    if adjacency.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "adjacency is {:?}, allocation covers {n} nodes",
            adjacency.shape()
        )));
    }
    let sizes = allocation.require_nonempty()?;
    let k = allocation.block_count();
    let mut sums = Array2::<f64>::zeros((k, k));
    for (i, j, v) in adjacency.iter() {
        sums[[allocation.block_of(i), allocation.block_of(j)]] += v;
    }
    for b in 0..k {
        for c in 0..k {
            sums[[b, c]] /= (sizes[b] * sizes[c]) as f64;
        }
    }
    Ok(sums)
}

/// Block-mean feature matrix `D̄ = D⁻¹FᵀY` (`k × m`).
pub fn block_means(features: &CsrMatrix, allocation: &Allocation) -> Result<Array2<f64>> {
    if features.nrows() != allocation.node_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows, allocation covers {} nodes",
            features.nrows(),
            allocation.node_count()
        )));
    }
    let sizes = allocation.require_nonempty()?;
    let mut means = Array2::<f64>::zeros((allocation.block_count(), features.ncols()));
    for (i, l, v) in features.iter() {
        means[[allocation.block_of(i), l]] += v;
    }
    for (mut row, &s) in means.rows_mut().into_iter().zip(&sizes) {
        row /= s as f64;
    }
    Ok(means)
}

/// `D̄·diag(r)·D̄ᵀ` from precomputed block means.
pub(crate) fn mhat_from_means(means: &Array2<f64>, r: ArrayView1<'_, f64>) -> Array2<f64> {
    let scaled = means * &r;
    scaled.dot(&means.t())
}

/// Image matrix of the induced graph as a function of the scores.
pub fn mhat_of_r(net: &AttributedNetwork, allocation: &Allocation, scores: &FeatureScores) -> Result<Array2<f64>> {
    check_scores(net, scores)?;
    let means = block_means(net.features(), allocation)?;
    Ok(mhat_from_means(&means, scores.view()))
}

/// Relative reconstruction error `‖A − FMFᵀ‖_F / ‖A‖_F`.
///
/// Evaluated without forming `FMFᵀ`: stored entries contribute their own
/// residual and every unstored pair in block pair `(b, c)` contributes
/// `M[b,c]²`.
pub fn rre(adjacency: &CsrMatrix, model: &BlockModel) -> Result<f64> {
    let alloc = &model.allocation;
    let n = alloc.node_count();
    if adjacency.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "adjacency is {:?}, block model covers {n} nodes",
            adjacency.shape()
        )));
    }
    let norm_sq = adjacency.frobenius_norm_sq();
    if norm_sq == 0.0 {
        return Err(Error::ZeroAdjacency);
    }
    let k = alloc.block_count();
    let sizes = alloc.block_sizes();
    let mut stored = Array2::<f64>::zeros((k, k));
    let mut residual = 0.0;
    for (i, j, v) in adjacency.iter() {
        let (b, c) = (alloc.block_of(i), alloc.block_of(j));
        let diff = v - model.image[[b, c]];
        residual += diff * diff;
        stored[[b, c]] += 1.0;
    }
    for b in 0..k {
        for c in 0..k {
            let unstored = (sizes[b] * sizes[c]) as f64 - stored[[b, c]];
            residual += unstored * model.image[[b, c]].powi(2);
        }
    }
    Ok((residual / norm_sq).sqrt())
}
