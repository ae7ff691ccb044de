//! Site partitions built by union-find. All cluster notions in the crate
//! (eta-clusters, spin clusters, changing-path clusters, efficient-hyperpath
//! clusters) end up as one of these.

use crate::config_space::SiteSet;

/// Disjoint-set forest over `0..n` with path halving and union by size.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }

    /// Merges every site of `sites` into one class.
    pub fn union_all(&mut self, sites: SiteSet) {
        let mut it = sites.iter();
        if let Some(first) = it.next() {
            for s in it {
                self.union(first, s);
            }
        }
    }
}

/// A partition of `0..n` into blocks.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Partition {
    labels: Vec<u8>,
    blocks: Vec<SiteSet>,
}

impl Partition {
    pub fn singletons(n: usize) -> Partition {
        Partition {
            labels: (0..n as u8).collect(),
            blocks: (0..n).map(SiteSet::singleton).collect(),
        }
    }

    /// Finest partition in which every given hyperedge lies inside one block.
    pub fn from_hyperedges(n: usize, edges: impl IntoIterator<Item = SiteSet>) -> Partition {
        let mut uf = UnionFind::new(n);
        for e in edges {
            uf.union_all(e);
        }
        Self::from_union_find(n, &mut uf)
    }

    pub fn from_union_find(n: usize, uf: &mut UnionFind) -> Partition {
        let mut root_label = vec![u8::MAX; n];
        let mut labels = vec![0u8; n];
        let mut blocks: Vec<SiteSet> = Vec::new();
        for (v, label) in labels.iter_mut().enumerate() {
            let r = uf.find(v);
            if root_label[r] == u8::MAX {
                root_label[r] = blocks.len() as u8;
                blocks.push(SiteSet::EMPTY);
            }
            let l = root_label[r];
            *label = l;
            blocks[l as usize] = blocks[l as usize].with(v);
        }
        Partition { labels, blocks }
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn blocks(&self) -> &[SiteSet] {
        &self.blocks
    }

    pub fn label(&self, site: usize) -> u8 {
        self.labels[site]
    }

    pub fn block_of(&self, site: usize) -> SiteSet {
        self.blocks[self.labels[site] as usize]
    }

    /// Union of the blocks meeting `k` (the cluster `C(K)`).
    pub fn closure(&self, k: SiteSet) -> SiteSet {
        k.iter()
            .fold(SiteSet::EMPTY, |acc, v| acc.union(self.block_of(v)))
    }

    pub fn same_block(&self, a: usize, b: usize) -> bool {
        self.labels[a] == self.labels[b]
    }

    /// True when every block of `self` lies inside a block of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.blocks
            .iter()
            .all(|b| coarser.closure(*b) == coarser.block_of(b.iter().next().unwrap()))
    }

    /// Blocks with at least two sites.
    pub fn nontrivial_blocks(&self) -> impl Iterator<Item = SiteSet> + '_ {
        self.blocks.iter().copied().filter(|b| b.len() >= 2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chains_merge() {
        let p =
            Partition::from_hyperedges(5, [SiteSet::from_iter([0, 1]), SiteSet::from_iter([1, 2])]);
        assert_eq!(p.block_of(0), SiteSet::from_iter([0, 1, 2]));
        assert_eq!(p.block_of(4), SiteSet::singleton(4));
        assert_eq!(p.blocks().len(), 3);
        assert!(Partition::singletons(5).refines(&p));
        assert!(!p.refines(&Partition::singletons(5)));
    }

    #[test]
    fn closure_is_union_of_blocks() {
        let p = Partition::from_hyperedges(4, [SiteSet::from_iter([0, 3])]);
        assert_eq!(p.closure(SiteSet::singleton(3)), SiteSet::from_iter([0, 3]));
        assert_eq!(p.closure(SiteSet::EMPTY), SiteSet::EMPTY);
    }
}
