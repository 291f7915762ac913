//! Block-tridiagonal view of a box operator.
//!
//! Slicing the box perpendicular to one axis gives slices `0..blocks`, each
//! with `width` sites. `H` is then block tridiagonal: diagonal blocks are the
//! slice operators and neighbouring slices couple through `t·I`, because
//! slices share their in-slice site order.

use crate::hamiltonian::DisorderedOperator;

pub(crate) struct BlockLayout {
    pub blocks: usize,
    pub width: usize,
    /// Global site index of local site `j` in slice `b` is `global[b * width + j]`.
    pub global: Vec<usize>,
    /// In-slice nearest-neighbour pairs `(i, j)`, `i < j`.
    pub edges: Vec<(usize, usize)>,
}

impl BlockLayout {
    /// Slice along the longest axis, which keeps the blocks smallest.
    pub fn new(op: &DisorderedOperator) -> Self {
        let b = op.lattice();
        let extents = b.extents();
        let strides = b.strides();
        let axis = (0..extents.len()).max_by_key(|&k| (extents[k], usize::MAX - k)).unwrap_or(0);
        let blocks = extents[axis];
        let width = op.site_count() / blocks;
        // local row-major enumeration over the remaining axes
        let others: Vec<usize> = (0..extents.len()).filter(|&k| k != axis).collect();
        let mut base = Vec::with_capacity(width);
        let mut idx = vec![0usize; others.len()];
        for _ in 0..width {
            base.push(others.iter().zip(&idx).map(|(&k, &c)| c * strides[k]).sum::<usize>());
            for p in (0..others.len()).rev() {
                idx[p] += 1;
                if idx[p] < extents[others[p]] {
                    break;
                }
                idx[p] = 0;
            }
        }
        let mut local_strides = vec![1usize; others.len()];
        for p in (0..others.len().saturating_sub(1)).rev() {
            local_strides[p] = local_strides[p + 1] * extents[others[p + 1]];
        }
        let mut edges = Vec::new();
        for j in 0..width {
            for (p, &k) in others.iter().enumerate() {
                if (j / local_strides[p]) % extents[k] + 1 < extents[k] {
                    edges.push((j, j + local_strides[p]));
                }
            }
        }
        let mut global = Vec::with_capacity(blocks * width);
        for t in 0..blocks {
            global.extend(base.iter().map(|&g| g + t * strides[axis]));
        }
        Self {
            blocks,
            width,
            global,
            edges,
        }
    }

    pub fn block_sites(&self, t: usize) -> &[usize] {
        &self.global[t * self.width..(t + 1) * self.width]
    }
}
