//! Block-sparse vectors for concatenated VLAD encodings.
//!
//! Each block is one cluster's residual (`d` values); block `c * K + k`
//! belongs to cluster `k` of codebook `c`. All-zero blocks are not stored,
//! which keeps whole-image HOG encodings (one occupied cluster per
//! codebook) small.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    block_len: usize,
    n_blocks: usize,
    index: Vec<u32>,
    values: Vec<f32>,
}

impl BlockVector {
    pub fn zeros(block_len: usize, n_blocks: usize) -> Self {
        Self {
            block_len,
            n_blocks,
            index: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Appends block `index`; indices must be strictly increasing.
    pub fn push_block(&mut self, index: usize, block: &[f32]) -> Result<()> {
        if block.len() != self.block_len || index >= self.n_blocks {
            return Err(Error::invalid(format!("block {index} of length {} does not fit", block.len())));
        }
        if self.index.last().is_some_and(|&last| last as usize >= index) {
            return Err(Error::invalid("block indices must be strictly increasing"));
        }
        if block.iter().all(|&v| v == 0.0) {
            return Ok(());
        }
        self.index.push(index as u32);
        self.values.extend_from_slice(block);
        Ok(())
    }

    pub fn from_dense(values: &[f32], block_len: usize) -> Result<Self> {
        if block_len == 0 || values.len() % block_len != 0 {
            return Err(Error::invalid("dense length is not a multiple of the block length"));
        }
        let mut v = Self::zeros(block_len, values.len() / block_len);
        for (i, b) in values.chunks_exact(block_len).enumerate() {
            v.push_block(i, b)?;
        }
        Ok(v)
    }

    pub(crate) fn from_parts(block_len: usize, n_blocks: usize, index: Vec<u32>, values: Vec<f32>) -> Result<Self> {
        let ok = block_len > 0
            && values.len() == index.len() * block_len
            && index.windows(2).all(|w| w[0] < w[1])
            && index.last().is_none_or(|&l| (l as usize) < n_blocks);
        if !ok {
            return Err(Error::Container("malformed block-sparse vector".into()));
        }
        Ok(Self {
            block_len,
            n_blocks,
            index,
            values,
        })
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn dim(&self) -> usize {
        self.block_len * self.n_blocks
    }

    pub fn stored_blocks(&self) -> usize {
        self.index.len()
    }

    pub fn index(&self) -> &[u32] {
        &self.index
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn blocks(&self) -> impl Iterator<Item = (usize, &[f32])> + '_ {
        self.index.iter().map(|&i| i as usize).zip(self.values.chunks_exact(self.block_len))
    }

    pub fn to_dense(&self) -> Vec<f32> {
        let mut out = vec![0.0; self.dim()];
        for (i, b) in self.blocks() {
            out[i * self.block_len..(i + 1) * self.block_len].copy_from_slice(b);
        }
        out
    }

    pub fn add_into(&self, dense: &mut [f64]) {
        for (i, b) in self.blocks() {
            for (o, &v) in dense[i * self.block_len..].iter_mut().zip(b) {
                *o += v as f64;
            }
        }
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        let mut s = 0.0;
        for (i, b) in self.blocks() {
            s += b.iter().zip(&dense[i * self.block_len..]).map(|(&a, &c)| a as f64 * c).sum::<f64>();
        }
        s
    }

    pub fn dot(&self, other: &BlockVector) -> f64 {
        let (mut a, mut b) = (self.blocks().peekable(), other.blocks().peekable());
        let mut s = 0.0;
        while let (Some(&(i, x)), Some(&(j, y))) = (a.peek(), b.peek()) {
            match i.cmp(&j) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => {
                    s += x.iter().zip(y).map(|(&p, &q)| p as f64 * q as f64).sum::<f64>();
                    a.next();
                    b.next();
                }
            }
        }
        s
    }

    pub fn same_shape(&self, other: &BlockVector) -> bool {
        self.block_len == other.block_len && self.n_blocks == other.n_blocks
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_blocks_are_dropped_and_restored() {
        let dense = [1.0, 2.0, 0.0, 0.0, 0.0, 3.0];
        let v = BlockVector::from_dense(&dense, 2).unwrap();
        assert_eq!(v.stored_blocks(), 2);
        assert_eq!(v.to_dense(), dense);
        assert_eq!(v.dot(&v), 14.0);
        assert_eq!(v.dot_dense(&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]), 6.0);
    }

    #[test]
    fn sparse_dot_matches_dense() {
        let a = BlockVector::from_dense(&[1.0, 0.0, 0.0, 0.0, 2.0, 5.0], 2).unwrap();
        let b = BlockVector::from_dense(&[0.0, 0.0, 7.0, 1.0, 3.0, -1.0], 2).unwrap();
        assert_eq!(a.dot(&b), 1.0);
        assert_eq!(b.dot(&a), 1.0);
    }

    #[test]
    fn rejects_unordered_blocks() {
        let mut v = BlockVector::zeros(1, 4);
        v.push_block(2, &[1.0]).unwrap();
        assert!(v.push_block(1, &[1.0]).is_err());
        assert!(v.push_block(4, &[1.0]).is_err());
    }
}
