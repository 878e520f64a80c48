//! Multilevel block vectors and hierarchical sparsity.
//!
//! A vector in `C^{N1·N2·…·Nℓ}` is viewed as `N1` blocks of `N2` blocks of …
//! of `Nℓ` entries, laid out level-1-major. It is `(s1,…,sℓ)`-hierarchically
//! sparse when at most `s1` outer blocks are non-zero and every non-zero block
//! is recursively `(s2,…,sℓ)`-sparse.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, Result};
use crate::C64;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct BlockShape {
    dims: Vec<usize>,
}

impl BlockShape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return param_err("a block shape needs at least one level");
        }
        if dims.contains(&0) {
            return param_err(format!("block dimensions must be positive, got {dims:?}"));
        }
        Ok(Self { dims })
    }

    /// Single-level shape of length `n`.
    pub fn flat(n: usize) -> Result<Self> {
        Self::new(vec![n])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn levels(&self) -> usize {
        self.dims.len()
    }

    pub fn total(&self) -> usize {
        self.dims.iter().product()
    }

    /// Number of nodes at `depth` (the root is depth 0, entries are depth ℓ).
    pub(crate) fn nodes_at_depth(&self, depth: usize) -> usize {
        self.dims[..depth].iter().product()
    }

    /// Number of entries spanned by one node at `depth`.
    pub(crate) fn node_span(&self, depth: usize) -> usize {
        self.dims[depth..].iter().product()
    }

    pub fn to_multi(&self, flat: usize) -> Vec<usize> {
        debug_assert!(flat < self.total());
        let mut rest = flat;
        let mut out = vec![0; self.dims.len()];
        for (slot, &d) in out.iter_mut().zip(&self.dims).rev() {
            *slot = rest % d;
            rest /= d;
        }
        out
    }

    pub fn to_flat(&self, multi: &[usize]) -> usize {
        debug_assert_eq!(multi.len(), self.dims.len());
        multi
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&i, &d)| {
                debug_assert!(i < d);
                acc * d + i
            })
    }
}

impl TryFrom<Vec<usize>> for BlockShape {
    type Error = crate::Error;

    fn try_from(dims: Vec<usize>) -> Result<Self> {
        Self::new(dims)
    }
}

impl From<BlockShape> for Vec<usize> {
    fn from(shape: BlockShape) -> Self {
        shape.dims
    }
}

/// Per-level sparsities `(s1,…,sℓ)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct SparsityProfile {
    levels: Vec<usize>,
}

impl SparsityProfile {
    pub fn new(levels: Vec<usize>) -> Result<Self> {
        if levels.is_empty() {
            return param_err("a sparsity profile needs at least one level");
        }
        if levels.contains(&0) {
            return param_err(format!("sparsities must be positive, got {levels:?}"));
        }
        Ok(Self { levels })
    }

    pub fn flat(s: usize) -> Result<Self> {
        Self::new(vec![s])
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    /// Flat sparsity `s1·s2·…·sℓ` of the largest admissible support.
    pub fn product(&self) -> usize {
        self.levels.iter().product()
    }

    pub fn check_against(&self, shape: &BlockShape) -> Result<()> {
        if self.levels.len() != shape.levels() {
            return dim_err(format!(
                "profile {:?} has {} levels but shape {:?} has {}",
                self.levels,
                self.levels.len(),
                shape.dims(),
                shape.levels()
            ));
        }
        for (i, (&s, &n)) in self.levels.iter().zip(shape.dims()).enumerate() {
            if s > n {
                return dim_err(format!("level {} sparsity {s} exceeds block count {n}", i + 1));
            }
        }
        Ok(())
    }

    /// Caps every level at the corresponding block count. A sparsity at or
    /// above the block count places no constraint, so this preserves the set
    /// of admissible vectors.
    pub fn clamped_to(&self, shape: &BlockShape) -> Result<Self> {
        if self.levels.len() != shape.levels() {
            return dim_err("profile and shape level counts differ");
        }
        Ok(Self {
            levels: self.levels.iter().zip(shape.dims()).map(|(&s, &n)| s.min(n)).collect(),
        })
    }
}

impl TryFrom<Vec<usize>> for SparsityProfile {
    type Error = crate::Error;

    fn try_from(levels: Vec<usize>) -> Result<Self> {
        Self::new(levels)
    }
}

impl From<SparsityProfile> for Vec<usize> {
    fn from(p: SparsityProfile) -> Self {
        p.levels
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiLevelVector {
    shape: BlockShape,
    values: Vec<C64>,
}

impl MultiLevelVector {
    pub fn new(shape: BlockShape, values: Vec<C64>) -> Result<Self> {
        if values.len() != shape.total() {
            return dim_err(format!(
                "vector of length {} does not fit shape {:?} (total {})",
                values.len(),
                shape.dims(),
                shape.total()
            ));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: BlockShape) -> Self {
        let values = vec![C64::new(0.0, 0.0); shape.total()];
        Self { shape, values }
    }

    pub fn shape(&self) -> &BlockShape {
        &self.shape
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm(&self.values)
    }

    /// Flat indices of the non-zero entries.
    pub fn support(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.re != 0.0 || v.im != 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// A structurally valid hierarchical support.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiSupport {
    indices: Vec<usize>,
    shape: BlockShape,
    profile: SparsityProfile,
}

impl HiSupport {
    /// Validates that `indices` are in range and respect `profile` at every
    /// level. The indices are sorted and deduplicated.
    pub fn new(mut indices: Vec<usize>, shape: BlockShape, profile: SparsityProfile) -> Result<Self> {
        profile.check_against(&shape)?;
        indices.sort_unstable();
        indices.dedup();
        if let Some(&last) = indices.last() {
            if last >= shape.total() {
                return dim_err(format!("index {last} out of range for length {}", shape.total()));
            }
        }
        if !is_structurally_valid(&indices, &shape, &profile) {
            return param_err(format!(
                "support {indices:?} violates profile {:?} on shape {:?}",
                profile.levels(),
                shape.dims()
            ));
        }
        Ok(Self { indices, shape, profile })
    }

    /// Every index of `shape`; valid for the profile equal to the dims.
    pub fn full(shape: BlockShape) -> Self {
        let profile = SparsityProfile { levels: shape.dims().to_vec() };
        Self { indices: (0..shape.total()).collect(), shape, profile }
    }

    /// Wraps indices already produced by the thresholding kernel.
    pub(crate) fn from_sorted_unchecked(indices: Vec<usize>, shape: BlockShape, profile: SparsityProfile) -> Self {
        Self { indices, shape, profile }
    }

    pub fn empty(shape: BlockShape, profile: SparsityProfile) -> Result<Self> {
        profile.check_against(&shape)?;
        Ok(Self { indices: Vec::new(), shape, profile })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn shape(&self) -> &BlockShape {
        &self.shape
    }

    pub fn profile(&self) -> &SparsityProfile {
        &self.profile
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }
}

/// Checks the recursive block-count condition on a sorted index set.
pub fn is_structurally_valid(indices: &[usize], shape: &BlockShape, profile: &SparsityProfile) -> bool {
    if profile.levels().len() != shape.levels() {
        return false;
    }
    for depth in 1..=shape.levels() {
        let span = shape.node_span(depth);
        let fanout = shape.dims()[depth - 1];
        let limit = profile.levels()[depth - 1];
        let mut current_parent = usize::MAX;
        let mut last_child = usize::MAX;
        let mut count = 0;
        for &i in indices {
            let child = i / span;
            let parent = child / fanout;
            if parent != current_parent {
                current_parent = parent;
                last_child = child;
                count = 1;
            } else if child != last_child {
                last_child = child;
                count += 1;
            }
            if count > limit {
                return false;
            }
        }
    }
    true
}

/// Support of the best `s`-hierarchically-sparse approximation of `x`.
///
/// Computed bottom-up: every leaf block keeps its `sℓ` largest-modulus
/// entries, then at each coarser level every block keeps the `s_{k+1}` child
/// blocks of largest retained energy. Ties go to the lowest index.
pub fn hi_threshold(x: &MultiLevelVector, s: &SparsityProfile) -> Result<HiSupport> {
    s.check_against(x.shape())?;
    let indices = threshold_indices(x.values(), x.shape(), s);
    Ok(HiSupport { indices, shape: x.shape().clone(), profile: s.clone() })
}

/// Unchecked core of [`hi_threshold`]; the profile must fit the shape.
pub(crate) fn threshold_indices(values: &[C64], shape: &BlockShape, s: &SparsityProfile) -> Vec<usize> {
    let levels = shape.levels();
    let mut scores: Vec<f64> = values.iter().map(|v| v.norm_sqr()).collect();
    // selected[d - 1][node] for depth d in 1..=levels
    let mut selected: Vec<Vec<bool>> = vec![Vec::new(); levels];
    let mut order: Vec<usize> = Vec::new();

    for depth in (1..=levels).rev() {
        let fanout = shape.dims()[depth - 1];
        let keep = s.levels()[depth - 1];
        let parents = shape.nodes_at_depth(depth - 1);
        let mut picked = vec![false; scores.len()];
        let mut parent_scores = vec![0.0; parents];
        for (p, parent_score) in parent_scores.iter_mut().enumerate() {
            let base = p * fanout;
            let group = &scores[base..base + fanout];
            order.clear();
            order.extend(0..fanout);
            if keep < fanout {
                order.select_nth_unstable_by(keep - 1, |&a, &b| {
                    group[b].total_cmp(&group[a]).then(a.cmp(&b))
                });
            }
            for &c in &order[..keep] {
                picked[base + c] = true;
                *parent_score += group[c];
            }
        }
        selected[depth - 1] = picked;
        scores = parent_scores;
    }

    // An entry survives when every ancestor block was selected.
    let mut alive = selected[0].clone();
    for depth in 2..=levels {
        let fanout = shape.dims()[depth - 1];
        let sel = &selected[depth - 1];
        alive = (0..sel.len()).map(|node| sel[node] && alive[node / fanout]).collect();
    }
    alive.iter().enumerate().filter(|(_, &a)| a).map(|(i, _)| i).collect()
}

pub fn project_onto_support(x: &MultiLevelVector, support: &HiSupport) -> Result<MultiLevelVector> {
    if support.shape() != x.shape() {
        return dim_err(format!(
            "support shape {:?} differs from vector shape {:?}",
            support.shape().dims(),
            x.shape().dims()
        ));
    }
    let mut out = MultiLevelVector::zeros(x.shape().clone());
    for &i in support.indices() {
        out.values[i] = x.values[i];
    }
    Ok(out)
}

pub fn is_hi_sparse(x: &MultiLevelVector, s: &SparsityProfile) -> Result<bool> {
    s.check_against(x.shape())?;
    Ok(is_structurally_valid(&x.support(), x.shape(), s))
}

/// Number of supports that are maximal for `profile` (every level saturated).
pub fn maximal_support_count(shape: &BlockShape, profile: &SparsityProfile) -> u128 {
    let mut count: u128 = 1;
    for (depth, (&n, &s)) in shape.dims().iter().zip(profile.levels()).enumerate() {
        let per_node = crate::combin::binomial(n, s.min(n));
        let nodes = profile.levels()[..depth]
            .iter()
            .zip(shape.dims())
            .fold(1u128, |acc, (&s, &n)| acc.saturating_mul(s.min(n) as u128));
        count = count.saturating_mul(per_node.saturating_pow(nodes.min(u32::MAX as u128) as u32));
    }
    count
}

/// All maximal hierarchical supports, each sorted. Every structurally valid
/// support is contained in at least one of them.
pub fn enumerate_maximal_supports(shape: &BlockShape, profile: &SparsityProfile) -> Result<Vec<Vec<usize>>> {
    profile.check_against(shape)?;
    Ok(supports_below(shape, profile, 0))
}

fn supports_below(shape: &BlockShape, profile: &SparsityProfile, depth: usize) -> Vec<Vec<usize>> {
    if depth == shape.levels() {
        return vec![vec![0]];
    }
    let span = shape.node_span(depth + 1);
    let children = supports_below(shape, profile, depth + 1);
    let mut out = Vec::new();
    crate::combin::for_each_combination(shape.dims()[depth], profile.levels()[depth], |chosen| {
        // Cartesian product of one child support per chosen child block.
        let mut partial: Vec<Vec<usize>> = vec![Vec::new()];
        for &c in chosen {
            let mut next = Vec::with_capacity(partial.len() * children.len());
            for prefix in &partial {
                for child in &children {
                    let mut v = prefix.clone();
                    v.extend(child.iter().map(|&i| c * span + i));
                    next.push(v);
                }
            }
            partial = next;
        }
        out.extend(partial);
    });
    out
}
