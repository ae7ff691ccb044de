//! Disjoint occurrence, witness pairs, selection rules and the restricted
//! operator.
//!
//! Everything is driven by a [`WitnessTable`]: for an event `E` and every site
//! set `K`, the set of configurations `omega` with `[omega]_K ⊆ E`. Since that
//! property is upward closed in `K`, the table is filled from `K = [n]` (where
//! it is `E` itself) downwards, one site at a time.

use crate::bitset::Bitset;
use crate::config_space::{Configuration, Event, SiteSet, SpaceSpec};
use crate::error::{Error, Result};
use crate::gibbs_potential::{
    specialized_partition, ClusterKind, InteractionGraph, Potential, PreparedPotential,
};
use crate::partition::Partition;

/// Bound on `2^n * |S|^n`, the number of bits in one witness table.
pub const WITNESS_TABLE_CAP_BITS: u32 = 28;

#[derive(
    Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
pub struct WitnessPair {
    pub k: SiteSet,
    pub l: SiteSet,
}

/// `T[K] = {omega : [omega]_K ⊆ E}` for every `K ⊆ [n]`.
#[derive(Clone, Debug)]
pub struct WitnessTable {
    space: SpaceSpec,
    words: usize,
    data: Vec<u64>,
}

impl WitnessTable {
    pub fn new(e: &Event) -> Result<WitnessTable> {
        let space = e.space().clone();
        let n = space.n();
        let bits = (1u128 << n) * space.size() as u128;
        if bits > 1u128 << WITNESS_TABLE_CAP_BITS {
            return Err(Error::Cap(format!(
                "witness table of 2^{n} x {} bits exceeds 2^{WITNESS_TABLE_CAP_BITS}",
                space.size()
            )));
        }
        let words = space.size().div_ceil(64);
        let rows = 1usize << n;
        let mut data = vec![0u64; rows * words];
        let full = rows - 1;
        data[full * words..].copy_from_slice(e.members().words());
        let q = space.q();
        let single_word = q == 2 && space.size() <= 64;
        for k in (0..full).rev() {
            let i = (!k).trailing_zeros() as usize;
            let up = k | (1 << i);
            let stride = space.stride(i);
            let (lo, hi) = data.split_at_mut(up * words);
            let dst = &mut lo[k * words..(k + 1) * words];
            let src = &hi[..words];
            if single_word {
                let mask = low_digit_mask(space.size(), stride);
                let both = src[0] & (src[0] >> stride) & mask;
                dst[0] = both | (both << stride);
            } else {
                let block = stride * q;
                for top in (0..space.size()).step_by(block) {
                    for base in top..top + stride {
                        let all = (0..q).all(|s| get(src, base + s * stride));
                        if all {
                            for s in 0..q {
                                set(dst, base + s * stride);
                            }
                        }
                    }
                }
            }
        }
        Ok(WitnessTable { space, words, data })
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    #[inline]
    pub fn row(&self, k: SiteSet) -> &[u64] {
        let r = k.0 as usize;
        &self.data[r * self.words..(r + 1) * self.words]
    }

    /// Whether `[omega]_K ⊆ E` for `omega` = configuration `index`.
    #[inline]
    pub fn witnesses(&self, k: SiteSet, index: usize) -> bool {
        get(self.row(k), index)
    }

    /// Inclusion-minimal witnessing sets at `index`.
    pub fn minimal(&self, index: usize) -> Vec<SiteSet> {
        self.space
            .all_sites()
            .subsets()
            .filter(|&k| {
                self.witnesses(k, index)
                    && k.iter()
                        .all(|i| !self.witnesses(SiteSet(k.0 & !(1 << i)), index))
            })
            .collect()
    }
}

#[inline]
fn get(words: &[u64], i: usize) -> bool {
    (words[i >> 6] >> (i & 63)) & 1 == 1
}

#[inline]
fn set(words: &mut [u64], i: usize) {
    words[i >> 6] |= 1 << (i & 63);
}

/// Bits `idx < size` whose binary digit of weight `stride` is zero.
fn low_digit_mask(size: usize, stride: usize) -> u64 {
    (0..size)
        .filter(|idx| idx & stride == 0)
        .fold(0u64, |m, idx| m | (1 << idx))
}

/// A selection rule `Psi`: which witness pairs count for `A ⊟ B`.
#[derive(Clone, Debug, PartialEq)]
pub enum SelectionRule {
    /// Every pair of disjoint witnesses (plain disjoint occurrence).
    Full,
    /// Pairs with `omega` at the top symbol on `K ∪ L`.
    UpperOnes,
    /// Pairs whose efficient-hyperpath clusters are disjoint.
    ClusterDisjoint(Potential),
    /// Pairs whose spin clusters (monochromatic, along `J > 0`) are disjoint.
    SpinCluster(InteractionGraph),
    /// Pairs whose changing-path clusters (along `J != 0`) are disjoint.
    ChangingPath(InteractionGraph),
}

impl SelectionRule {
    pub fn name(&self) -> &'static str {
        match self {
            SelectionRule::Full => "full",
            SelectionRule::UpperOnes => "upper_ones",
            SelectionRule::ClusterDisjoint(_) => "cluster_disjoint",
            SelectionRule::SpinCluster(_) => "spin_cluster",
            SelectionRule::ChangingPath(_) => "changing_path",
        }
    }

    pub fn prepare(&self, space: &SpaceSpec) -> Result<PreparedRule> {
        PreparedRule::new(self, space)
    }

    /// The minimal members of `Psi(A, B, omega)`, sorted by `|K| + |L|`.
    pub fn evaluate(
        &self,
        a: &Event,
        b: &Event,
        omega: &Configuration,
    ) -> Result<Vec<WitnessPair>> {
        same_space(a, b)?;
        let p = self.prepare(a.space())?;
        let (ta, tb) = (WitnessTable::new(a)?, WitnessTable::new(b)?);
        Ok(p.pairs(&ta, &tb, a.space().encode(omega)))
    }
}

#[derive(Clone, Debug)]
enum Mode {
    Full,
    UpperOnes,
    Clusters(Vec<Partition>),
}

/// A selection rule specialised to one space, with the per-configuration
/// cluster partitions computed up front.
#[derive(Clone, Debug)]
pub struct PreparedRule {
    space: SpaceSpec,
    mode: Mode,
}

impl PreparedRule {
    pub fn new(rule: &SelectionRule, space: &SpaceSpec) -> Result<PreparedRule> {
        let check_graph = |g: &InteractionGraph| {
            if g.n() != space.n() {
                Err(Error::SpaceMismatch)
            } else {
                Ok(())
            }
        };
        let mode = match rule {
            SelectionRule::Full => Mode::Full,
            SelectionRule::UpperOnes => Mode::UpperOnes,
            SelectionRule::ClusterDisjoint(phi) => {
                if phi.space() != space {
                    return Err(Error::SpaceMismatch);
                }
                let pp = PreparedPotential::new(phi);
                Mode::Clusters((0..space.size()).map(|i| pp.partition(i)).collect())
            }
            SelectionRule::SpinCluster(g) => {
                check_graph(g)?;
                Mode::Clusters(
                    (0..space.size())
                        .map(|i| specialized_partition(ClusterKind::IsingSpin, g, space, i))
                        .collect(),
                )
            }
            SelectionRule::ChangingPath(g) => {
                check_graph(g)?;
                Mode::Clusters(
                    (0..space.size())
                        .map(|i| specialized_partition(ClusterKind::PottsChanging, g, space, i))
                        .collect(),
                )
            }
        };
        Ok(PreparedRule {
            space: space.clone(),
            mode,
        })
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    /// Cluster partition at `index` (singletons for the full rule).
    pub fn partition(&self, index: usize) -> Option<&Partition> {
        match &self.mode {
            Mode::Clusters(p) => Some(&p[index]),
            _ => None,
        }
    }

    fn check(&self, ta: &WitnessTable, tb: &WitnessTable) {
        assert!(
            ta.space == self.space && tb.space == self.space,
            "witness tables built over a different space"
        );
    }

    /// Whether `Psi(A, B, omega) != ∅`.
    pub fn admits(&self, ta: &WitnessTable, tb: &WitnessTable, index: usize) -> bool {
        let all = self.space.all_sites();
        match &self.mode {
            Mode::Full => all
                .subsets()
                .any(|k| ta.witnesses(k, index) && tb.witnesses(all.difference(k), index)),
            Mode::UpperOnes => {
                let ones = self.space.top_sites(index);
                ones.subsets()
                    .any(|k| ta.witnesses(k, index) && tb.witnesses(ones.difference(k), index))
            }
            Mode::Clusters(parts) => {
                // With upward closure, a cluster-disjoint pair exists iff some
                // union U of clusters witnesses A while its complement witnesses B.
                let blocks = parts[index].blocks();
                (0u32..1 << blocks.len()).any(|sel| {
                    let u = blocks
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| (sel >> j) & 1 == 1)
                        .fold(SiteSet::EMPTY, |acc, (_, b)| acc.union(*b));
                    ta.witnesses(u, index) && tb.witnesses(all.difference(u), index)
                })
            }
        }
    }

    /// `A ⊟ B` as a bitset.
    pub fn boxminus(&self, ta: &WitnessTable, tb: &WitnessTable) -> Bitset {
        self.check(ta, tb);
        let size = self.space.size();
        if let Mode::Full = self.mode {
            let all = self.space.all_sites();
            let mut words = vec![0u64; ta.words];
            for k in all.subsets() {
                for ((w, a), b) in words
                    .iter_mut()
                    .zip(ta.row(k))
                    .zip(tb.row(all.difference(k)))
                {
                    *w |= a & b;
                }
            }
            let mut out = Bitset::new(size);
            out.words_mut().copy_from_slice(&words);
            return out;
        }
        let mut out = Bitset::new(size);
        for idx in 0..size {
            if get(ta.row(SiteSet::all(self.space.n())), idx)
                && get(tb.row(SiteSet::all(self.space.n())), idx)
                && self.admits(ta, tb, idx)
            {
                out.insert(idx);
            }
        }
        out
    }

    /// Minimal members of `Psi(A, B, omega)`, sorted by `(|K| + |L|, K, L)`.
    pub fn pairs(&self, ta: &WitnessTable, tb: &WitnessTable, index: usize) -> Vec<WitnessPair> {
        self.check(ta, tb);
        let ka = ta.minimal(index);
        if ka.is_empty() {
            return Vec::new();
        }
        let lb = tb.minimal(index);
        let ones = self.space.top_sites(index);
        let mut out = Vec::new();
        for &k in &ka {
            for &l in &lb {
                if !k.is_disjoint(l) {
                    continue;
                }
                let keep = match &self.mode {
                    Mode::Full => true,
                    Mode::UpperOnes => k.union(l).is_subset(ones),
                    Mode::Clusters(parts) => {
                        let p = &parts[index];
                        p.closure(k).is_disjoint(p.closure(l))
                    }
                };
                if keep {
                    out.push(WitnessPair { k, l });
                }
            }
        }
        out.sort_by_key(|p| (p.k.len() + p.l.len(), p.k, p.l));
        out
    }
}

fn same_space(a: &Event, b: &Event) -> Result<()> {
    if a.space() != b.space() {
        return Err(Error::SpaceMismatch);
    }
    Ok(())
}

/// All pairs `(K, L)` of disjoint, individually minimal witnesses of `A` and
/// `B` at `omega`. Empty iff no disjoint witnesses exist.
pub fn minimal_witnesses(a: &Event, b: &Event, omega: &Configuration) -> Result<Vec<WitnessPair>> {
    SelectionRule::Full.evaluate(a, b, omega)
}

/// `A □ B`.
pub fn box_op(a: &Event, b: &Event) -> Result<Event> {
    boxminus(a, b, &SelectionRule::Full)
}

/// `A ⊟ B = {omega : Psi(A, B, omega) != ∅}`.
pub fn boxminus(a: &Event, b: &Event, rule: &SelectionRule) -> Result<Event> {
    same_space(a, b)?;
    let p = rule.prepare(a.space())?;
    let (ta, tb) = (WitnessTable::new(a)?, WitnessTable::new(b)?);
    Event::from_bitset(a.space(), p.boxminus(&ta, &tb))
}

/// `(|A □ B|, |A ∩ flip(B)|)` on a binary space.
pub fn reimer_gap(a: &Event, b: &Event) -> Result<(usize, usize)> {
    same_space(a, b)?;
    let flipped = crate::config_space::flip_all(b)?;
    let lhs = box_op(a, b)?.len();
    let rhs = a.members().intersection_count(flipped.members());
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_space::cylinder;
    use crate::measures::FamilySpec;

    fn bin(n: usize) -> SpaceSpec {
        SpaceSpec::binary(n).unwrap()
    }

    fn site_is(space: &SpaceSpec, i: usize, v: i32) -> Event {
        let d = space.digit_of(v).unwrap();
        Event::from_predicate(space, |idx| space.digit(idx, i) == d)
    }

    /// Direct transcription of the definition: all `(K, L)` disjoint with
    /// cylinders inside `A` and `B`.
    fn brute_box(a: &Event, b: &Event) -> Event {
        let s = a.space().clone();
        Event::from_predicate(&s, |idx| {
            let w = s.decode(idx);
            s.all_sites().subsets().any(|k| {
                s.all_sites().difference(k).subsets().any(|l| {
                    cylinder(&s, &w, k).unwrap().is_subset(a).unwrap()
                        && cylinder(&s, &w, l).unwrap().is_subset(b).unwrap()
                })
            })
        })
    }

    #[test]
    fn witness_examples() {
        let s = bin(2);
        let w = Configuration::from_values(&s, &[1, 1]).unwrap();
        let full = Event::full(&s);
        assert_eq!(
            minimal_witnesses(&full, &full, &w).unwrap(),
            vec![WitnessPair {
                k: SiteSet::EMPTY,
                l: SiteSet::EMPTY
            }]
        );
        let a = site_is(&s, 0, 1);
        let b = site_is(&s, 1, 1);
        assert_eq!(
            minimal_witnesses(&a, &b, &w).unwrap(),
            vec![WitnessPair {
                k: SiteSet::singleton(0),
                l: SiteSet::singleton(1)
            }]
        );
        let s1 = bin(1);
        let one = Configuration::from_values(&s1, &[1]).unwrap();
        assert!(
            minimal_witnesses(&site_is(&s1, 0, 1), &site_is(&s1, 0, 0), &one)
                .unwrap()
                .is_empty()
        );
    }

    #[test]
    fn box_examples() {
        let s = bin(2);
        assert_eq!(
            box_op(&Event::full(&s), &Event::full(&s)).unwrap(),
            Event::full(&s)
        );
        let ab = box_op(&site_is(&s, 0, 1), &site_is(&s, 1, 1)).unwrap();
        assert_eq!(ab, Event::from_indices(&s, [3]));
        let s1 = bin(1);
        let a = site_is(&s1, 0, 1);
        assert!(box_op(&a, &a).unwrap().is_empty());
        assert!(box_op(&a, &Event::full(&bin(2))).is_err());
    }

    #[test]
    fn box_matches_definition_at_n2() {
        let s = bin(2);
        for ma in 0u64..16 {
            for mb in 0u64..16 {
                let a = Event::from_bitset(&s, Bitset::from_word(4, ma)).unwrap();
                let b = Event::from_bitset(&s, Bitset::from_word(4, mb)).unwrap();
                assert_eq!(box_op(&a, &b).unwrap(), brute_box(&a, &b));
            }
        }
    }

    #[test]
    fn box_matches_definition_non_binary() {
        let s = SpaceSpec::q_state(2, 3).unwrap();
        let mut state = 0x2545f4914f6cdd1du64;
        for _ in 0..300 {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            let a = Event::from_bitset(&s, Bitset::from_word(9, state)).unwrap();
            let b = Event::from_bitset(&s, Bitset::from_word(9, state >> 20)).unwrap();
            assert_eq!(box_op(&a, &b).unwrap(), brute_box(&a, &b));
        }
    }

    #[test]
    fn reimer_examples() {
        let s = bin(3);
        assert_eq!(
            reimer_gap(&Event::full(&s), &Event::full(&s)).unwrap(),
            (8, 8)
        );
        let s1 = bin(1);
        assert_eq!(
            reimer_gap(&site_is(&s1, 0, 1), &site_is(&s1, 0, 0)).unwrap(),
            (0, 1)
        );
        let t = SpaceSpec::q_state(2, 3).unwrap();
        assert!(matches!(
            reimer_gap(&Event::full(&t), &Event::full(&t)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn full_rule_pairs_are_box_witnesses() {
        let s = bin(3);
        let a = site_is(&s, 0, 1).union(&site_is(&s, 1, 1)).unwrap();
        let b = site_is(&s, 2, 1);
        let bx = box_op(&a, &b).unwrap();
        for idx in 0..s.size() {
            let w = s.decode(idx);
            let pairs = minimal_witnesses(&a, &b, &w).unwrap();
            assert_eq!(!pairs.is_empty(), bx.contains_index(idx));
            for p in pairs {
                assert!(p.k.is_disjoint(p.l));
                assert!(cylinder(&s, &w, p.k).unwrap().is_subset(&a).unwrap());
                assert!(cylinder(&s, &w, p.l).unwrap().is_subset(&b).unwrap());
            }
        }
    }

    #[test]
    fn ising_rule_example() {
        let s = SpaceSpec::spins(2).unwrap();
        let g = InteractionGraph::new(2, [(0, 1)]).unwrap();
        let rule = SelectionRule::SpinCluster(g);
        let a = site_is(&s, 0, 1);
        let b = site_is(&s, 1, -1);
        let w = Configuration::from_values(&s, &[1, -1]).unwrap();
        let bm = boxminus(&a, &b, &rule).unwrap();
        assert!(bm.contains(&w));
        // A increasing, B decreasing: A ⊟ B = A ∩ B
        assert_eq!(bm, a.intersection(&b).unwrap());
    }

    #[test]
    fn ising_rule_blocks_same_cluster() {
        let s = SpaceSpec::spins(2).unwrap();
        let g = InteractionGraph::new(2, [(0, 1)]).unwrap();
        let a = site_is(&s, 0, 1);
        let b = site_is(&s, 1, 1);
        let bm = boxminus(&a, &b, &SelectionRule::SpinCluster(g)).unwrap();
        assert!(bm.is_empty());
        assert_eq!(box_op(&a, &b).unwrap().len(), 1);
    }

    #[test]
    fn cluster_rule_agrees_with_spin_rule() {
        let f = FamilySpec::Ising {
            n: 3,
            couplings: vec![(0, 1, 0.7), (1, 2, 0.3)],
            h: vec![0.1, -0.2, 0.0],
        };
        let phi = crate::gibbs_potential::canonical_potential(&f).unwrap();
        let s = phi.space().clone();
        let g = InteractionGraph::new(3, [(0, 1), (1, 2)]).unwrap();
        let pc = SelectionRule::ClusterDisjoint(phi).prepare(&s).unwrap();
        let ps = SelectionRule::SpinCluster(g).prepare(&s).unwrap();
        for ma in (0u64..256).step_by(7) {
            for mb in (0u64..256).step_by(5) {
                let a = Event::from_bitset(&s, Bitset::from_word(8, ma)).unwrap();
                let b = Event::from_bitset(&s, Bitset::from_word(8, mb)).unwrap();
                let (ta, tb) = (
                    WitnessTable::new(&a).unwrap(),
                    WitnessTable::new(&b).unwrap(),
                );
                assert_eq!(pc.boxminus(&ta, &tb), ps.boxminus(&ta, &tb));
            }
        }
    }

    #[test]
    fn pairs_and_admits_agree() {
        let s = SpaceSpec::q_state(3, 3).unwrap();
        let g = InteractionGraph::new(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        let rules = [
            SelectionRule::Full,
            SelectionRule::UpperOnes,
            SelectionRule::ChangingPath(g),
        ];
        let a = site_is(&s, 0, 2).union(&site_is(&s, 1, 0)).unwrap();
        let b = site_is(&s, 2, 1).union(&site_is(&s, 1, 2)).unwrap();
        let (ta, tb) = (
            WitnessTable::new(&a).unwrap(),
            WitnessTable::new(&b).unwrap(),
        );
        for r in &rules {
            let p = r.prepare(&s).unwrap();
            let bm = p.boxminus(&ta, &tb);
            for idx in 0..s.size() {
                assert_eq!(
                    !p.pairs(&ta, &tb, idx).is_empty(),
                    bm.contains(idx),
                    "{}",
                    r.name()
                );
            }
        }
    }
}
