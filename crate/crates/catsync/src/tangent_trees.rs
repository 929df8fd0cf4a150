//! Decorated trees for the tangent-frame series (conjugator and multipliers).
//!
//! Three principal node types: K (off-diagonal conjugator entries), N
//! (diagonal corrections) and 𝔐 (end-nodes holding an order label, supplied
//! by the tangent module's 𝔐 series). Internal nodes take one of three child
//! patterns — a single 𝔐 child, an (𝔐, K) pair, or a (K, N) pair (K nodes
//! only) — mirroring how the diagonal and off-diagonal parts of the frame
//! equations split order by order. Index labels are matched at evaluation:
//! a child K inherits `(j', j)` with the internal `j'` summed, and the K
//! factor of a (K, N) pair is evaluated one lattice kick ahead, carrying the
//! sign flip of that term.

use crate::catmap::CatMap;
use crate::grid::GridSpec;
use crate::tangent::{lambda_of, MSeries, DIRS};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TangentTreeError {
    #[error("order {0} exceeds the enumeration cap {1}")]
    SizeLimit(usize, usize),
    #[error("m-series holds {have} orders, tree needs order {need}")]
    MissingOrder { have: usize, need: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TNodeType {
    K,
    N,
    M,
}

/// Child patterns of an internal node.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TangentTree {
    /// 𝔐 end-node of the given order.
    Leaf(usize),
    /// node with a single 𝔐 child
    Single { eta: TNodeType, leaf: usize },
    /// node with (𝔐, K) children
    MixedK { eta: TNodeType, leaf: usize, k_child: Box<TangentTree> },
    /// K node with (K, N) children
    KTimesN { k_child: Box<TangentTree>, n_child: Box<TangentTree> },
}

impl TangentTree {
    /// Total order `Σ n_v` over 𝔐 end-nodes.
    pub fn order(&self) -> usize {
        match self {
            TangentTree::Leaf(n) => *n,
            TangentTree::Single { leaf, .. } => *leaf,
            TangentTree::MixedK { leaf, k_child, .. } => leaf + k_child.order(),
            TangentTree::KTimesN { k_child, n_child } => k_child.order() + n_child.order(),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            TangentTree::Leaf(_) => 1,
            TangentTree::Single { .. } => 2,
            TangentTree::MixedK { k_child, .. } => 2 + k_child.node_count(),
            TangentTree::KTimesN { k_child, n_child } => {
                1 + k_child.node_count() + n_child.node_count()
            }
        }
    }
}

/// Enumerate the order-n topologies with a K or N root (𝔐 labels resolved,
/// index labels symbolic until evaluation).
pub fn enumerate_theta_starstar(
    n: usize,
    eta: TNodeType,
    enum_max: usize,
) -> Result<Vec<TangentTree>, TangentTreeError> {
    if n == 0 || n > enum_max {
        return Err(TangentTreeError::SizeLimit(n, enum_max));
    }
    fn build(n: usize, eta: TNodeType, memo: &mut HashMap<(usize, bool), Vec<TangentTree>>) -> Vec<TangentTree> {
        let is_k = eta == TNodeType::K;
        if let Some(hit) = memo.get(&(n, is_k)) {
            return hit.clone();
        }
        let mut out = vec![TangentTree::Single { eta, leaf: n }];
        for n1 in 1..n {
            let n2 = n - n1;
            for k_child in build(n2, TNodeType::K, memo) {
                out.push(TangentTree::MixedK { eta, leaf: n1, k_child: Box::new(k_child) });
            }
        }
        if is_k {
            for n1 in 1..n {
                let n2 = n - n1;
                for k_child in build(n1, TNodeType::K, memo) {
                    for n_child in build(n2, TNodeType::N, memo) {
                        out.push(TangentTree::KTimesN {
                            k_child: Box::new(k_child.clone()),
                            n_child: Box::new(n_child),
                        });
                    }
                }
            }
        }
        memo.insert((n, is_k), out.clone());
        out
    }
    let mut memo = HashMap::new();
    Ok(build(n, eta, &mut memo))
}

/// Evaluation against the 𝔐 grids; lattice coordinates keep every `S^m`
/// shift exact and identical to the frame recursion.
pub struct TangentTreeCtx<'a> {
    pub cat: CatMap,
    pub mseries: &'a MSeries,
    pub grid: GridSpec,
    pub m_sum: usize,
}

impl<'a> TangentTreeCtx<'a> {
    pub fn new(mseries: &'a MSeries, m_sum: usize) -> Self {
        TangentTreeCtx { cat: CatMap::new(), mseries, grid: mseries.grid, m_sum }
    }

    fn shift(&self, coords: (i64, i64), m: i64) -> (i64, i64) {
        let n = self.grid.n_phi as i64;
        let p = self.cat.pow_mod(m, n);
        (
            (p[0][0] * coords.0 + p[0][1] * coords.1).rem_euclid(n),
            (p[1][0] * coords.0 + p[1][1] * coords.1).rem_euclid(n),
        )
    }

    fn m_entry(&self, n: usize, i: usize, j: usize, coords: (i64, i64)) -> f64 {
        self.mseries.entry(n, i, j).at(coords.0 as usize, coords.1 as usize)
    }

    /// The inhomogeneity the K-node's geometric sum acts on, at base ψ.
    fn k_source(&self, tree: &TangentTree, i: usize, j: usize, psi: (i64, i64)) -> f64 {
        match tree {
            TangentTree::Single { leaf, .. } => lambda_of(&self.cat, j) * self.m_entry(*leaf, i, j, psi),
            TangentTree::MixedK { leaf, k_child, .. } => {
                let mut acc = 0.0;
                for jp in DIRS {
                    if jp == j {
                        continue;
                    }
                    acc += self.m_entry(*leaf, i, jp, psi)
                        * lambda_of(&self.cat, jp)
                        * self.eval_k(k_child, jp, j, psi);
                }
                acc
            }
            TangentTree::KTimesN { k_child, n_child } => {
                // −k_{ij}(Sψ) ν_j(ψ)
                -self.eval_k(k_child, i, j, self.shift(psi, 1)) * self.eval_n(n_child, j, psi)
            }
            TangentTree::Leaf(_) => unreachable!("bare leaf is not a K topology"),
        }
    }

    /// k-type value with indices (i, j), i ≠ j, rooted at `coords`.
    pub fn eval_k(&self, tree: &TangentTree, i: usize, j: usize, coords: (i64, i64)) -> f64 {
        debug_assert!(i != j);
        let li = lambda_of(&self.cat, i);
        let lj = lambda_of(&self.cat, j);
        let forward = li > lj;
        let alpha = if forward { 1.0 } else { -1.0 };
        let ratio = li / lj;
        let mut acc = 0.0;
        if forward {
            let mut scale = -alpha / li;
            for m in 0..=self.m_sum {
                acc += scale * self.k_source(tree, i, j, self.shift(coords, m as i64));
                scale /= ratio;
            }
        } else {
            let mut scale = -alpha / li * ratio;
            for m in 1..=self.m_sum {
                acc += scale * self.k_source(tree, i, j, self.shift(coords, -(m as i64)));
                scale *= ratio;
            }
        }
        acc
    }

    /// ν-type value with index i, rooted at `coords`.
    pub fn eval_n(&self, tree: &TangentTree, i: usize, coords: (i64, i64)) -> f64 {
        match tree {
            TangentTree::Single { leaf, .. } => lambda_of(&self.cat, i) * self.m_entry(*leaf, i, i, coords),
            TangentTree::MixedK { leaf, k_child, .. } => {
                let mut acc = 0.0;
                for j in DIRS {
                    if j == i {
                        continue;
                    }
                    acc += self.m_entry(*leaf, i, j, coords)
                        * lambda_of(&self.cat, j)
                        * self.eval_k(k_child, j, i, coords);
                }
                acc
            }
            _ => unreachable!("N topologies hold only Single/MixedK patterns"),
        }
    }
}

/// Σ over the order-n N-topologies: ν_i⁽ⁿ⁾(φ) at a lattice point.
pub fn nu_from_trees(
    n: usize,
    i: usize,
    ctx: &TangentTreeCtx,
    coords: (i64, i64),
    enum_max: usize,
) -> Result<f64, TangentTreeError> {
    if ctx.mseries.n_max < n {
        return Err(TangentTreeError::MissingOrder { have: ctx.mseries.n_max, need: n });
    }
    let trees = enumerate_theta_starstar(n, TNodeType::N, enum_max)?;
    Ok(trees.iter().map(|t| ctx.eval_n(t, i, coords)).sum())
}

/// Σ over the order-n K-topologies: k_{ij}⁽ⁿ⁾(φ) at a lattice point.
pub fn k_from_trees(
    n: usize,
    i: usize,
    j: usize,
    ctx: &TangentTreeCtx,
    coords: (i64, i64),
    enum_max: usize,
) -> Result<f64, TangentTreeError> {
    if ctx.mseries.n_max < n {
        return Err(TangentTreeError::MissingOrder { have: ctx.mseries.n_max, need: n });
    }
    let trees = enumerate_theta_starstar(n, TNodeType::K, enum_max)?;
    Ok(trees.iter().map(|t| ctx.eval_k(t, i, j, coords)).sum())
}
