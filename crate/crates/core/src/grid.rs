//! Row-major indexing over finite product grids.

/// A multi-index into a product of finite atom sets.
pub type MultiIndex = Vec<usize>;

/// Shape of a product grid `n_1 × … × n_N` with row-major strides.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grid {
    arities: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl Grid {
    pub fn new(arities: &[usize]) -> Self {
        let mut strides = vec![0; arities.len()];
        let mut acc = 1usize;
        for k in (0..arities.len()).rev() {
            strides[k] = acc;
            acc = acc.saturating_mul(arities[k]);
        }
        Grid {
            arities: arities.to_vec(),
            strides,
            len: acc,
        }
    }

    pub fn arities(&self) -> &[usize] {
        &self.arities
    }

    pub fn rank(&self) -> usize {
        self.arities.len()
    }

    /// Number of cells. Zero if any arity is zero.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, idx: &[usize]) -> bool {
        idx.len() == self.arities.len() && idx.iter().zip(&self.arities).all(|(i, n)| i < n)
    }

    pub fn linear(&self, idx: &[usize]) -> usize {
        debug_assert!(self.contains(idx));
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn unravel_into(&self, mut lin: usize, out: &mut [usize]) {
        for (k, s) in self.strides.iter().enumerate() {
            out[k] = lin / s;
            lin %= s;
        }
    }

    pub fn unravel(&self, lin: usize) -> MultiIndex {
        let mut out = vec![0; self.arities.len()];
        self.unravel_into(lin, &mut out);
        out
    }

    /// Iterates over every multi-index in lexicographic order.
    pub fn iter(&self) -> GridIter<'_> {
        GridIter {
            grid: self,
            next: 0,
        }
    }
}

pub struct GridIter<'a> {
    grid: &'a Grid,
    next: usize,
}

impl Iterator for GridIter<'_> {
    type Item = MultiIndex;

    fn next(&mut self) -> Option<MultiIndex> {
        if self.next >= self.grid.len {
            return None;
        }
        let idx = self.grid.unravel(self.next);
        self.next += 1;
        Some(idx)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rest = self.grid.len - self.next;
        (rest, Some(rest))
    }
}

/// Projects a multi-index onto the given axes, in the given order.
pub fn project(idx: &[usize], axes: &[usize]) -> MultiIndex {
    axes.iter().map(|&a| idx[a]).collect()
}

/// Sorted complement of `axes` inside `0..rank`.
pub fn complement(rank: usize, axes: &[usize]) -> Vec<usize> {
    (0..rank).filter(|k| !axes.contains(k)).collect()
}
