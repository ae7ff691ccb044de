//! Foldings `mu^(alpha; beta, gamma)(omega) ∝ mu(alpha∘omega) mu(alpha∘omega-bar)`
//! on the two-letter space over the unlocked sites, and the matching
//! transformation of potentials.
//!
//! The folded space is binary over the free sites `M^c`, relabelled `0..n'`
//! in increasing order. Folded digit 0 stands for `beta_i`, digit 1 for
//! `gamma_i`, so the flip `omega -> omega-bar` is the complement of the index.

use crate::config_space::{SitePairing, SiteSet, SpaceSpec};
use crate::error::{input, Error, Result};
use crate::gibbs_potential::Potential;
use crate::measures::{build_measure, FamilySpec, Measure};

/// Locked sites `M` and the values `alpha` frozen on them.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Lock {
    sites: SiteSet,
    /// Digits for the sites of `M` in increasing site order.
    alpha: Vec<u8>,
}

impl Lock {
    pub fn new(space: &SpaceSpec, sites: SiteSet, alpha: Vec<u8>) -> Result<Lock> {
        space.check_sites(sites)?;
        if alpha.len() != sites.len() {
            return input(format!(
                "alpha has {} values for {} locked sites",
                alpha.len(),
                sites.len()
            ));
        }
        if alpha.iter().any(|&d| d as usize >= space.q()) {
            return input("alpha digit outside alphabet");
        }
        Ok(Lock { sites, alpha })
    }

    /// The empty lock (`M = ∅`).
    pub fn none() -> Lock {
        Lock {
            sites: SiteSet::EMPTY,
            alpha: Vec::new(),
        }
    }

    pub fn from_values(space: &SpaceSpec, sites: SiteSet, values: &[i32]) -> Result<Lock> {
        let d = values
            .iter()
            .map(|&v| space.digit_of(v))
            .collect::<Result<Vec<_>>>()?;
        Lock::new(space, sites, d)
    }

    pub fn sites(&self) -> SiteSet {
        self.sites
    }

    pub fn alpha(&self) -> &[u8] {
        &self.alpha
    }

    /// `alpha(i)` for a locked site.
    pub fn digit(&self, site: usize) -> Option<u8> {
        if !self.sites.contains(site) {
            return None;
        }
        let pos = SiteSet(self.sites.0 & ((1u32 << site) - 1)).len();
        Some(self.alpha[pos])
    }

    fn base_index(&self, space: &SpaceSpec) -> usize {
        self.sites
            .iter()
            .zip(&self.alpha)
            .map(|(i, &d)| d as usize * space.stride(i))
            .sum()
    }

    /// Every `(M, alpha)` over a space: `sum_M |S|^|M|` locks.
    pub fn enumerate(space: &SpaceSpec) -> Vec<Lock> {
        let q = space.q();
        let mut out = Vec::new();
        for m in space.all_sites().subsets() {
            let k = m.len();
            for code in 0..q.pow(k as u32) {
                let mut alpha = vec![0u8; k];
                let mut c = code;
                for slot in alpha.iter_mut().rev() {
                    *slot = (c % q) as u8;
                    c /= q;
                }
                out.push(Lock { sites: m, alpha });
            }
        }
        out
    }
}

/// Geometry of a folding: which full configurations the folded points map to.
#[derive(Clone, Debug)]
pub struct FoldLayout {
    lock: Lock,
    pairing: SitePairing,
    free: Vec<usize>,
    space: SpaceSpec,
    embed: Vec<usize>,
}

impl FoldLayout {
    pub fn new(parent: &SpaceSpec, lock: &Lock, pairing: &SitePairing) -> Result<FoldLayout> {
        let free_set = parent.all_sites().difference(lock.sites);
        if pairing.sites() != free_set {
            return input(format!(
                "pairing covers {:?} but the free sites are {free_set:?}",
                pairing.sites()
            ));
        }
        let free: Vec<usize> = free_set.iter().collect();
        let n = free.len();
        let pairs: Vec<(u8, u8)> = free.iter().map(|&i| pairing.pair(i).unwrap()).collect();
        let alphabet = match pairs.first() {
            Some(&(b, g)) if pairs.iter().all(|&p| p == (b, g)) => {
                vec![parent.value_of(b), parent.value_of(g)]
            }
            _ => vec![0, 1],
        };
        let space = SpaceSpec::folded(n, alphabet);
        let base = lock.base_index(parent);
        let embed = (0..space.size())
            .map(|j| {
                base + free
                    .iter()
                    .enumerate()
                    .map(|(p, &site)| {
                        let bit = (j >> (n - 1 - p)) & 1;
                        let d = if bit == 0 { pairs[p].0 } else { pairs[p].1 };
                        d as usize * parent.stride(site)
                    })
                    .sum::<usize>()
            })
            .collect();
        Ok(FoldLayout {
            lock: lock.clone(),
            pairing: pairing.clone(),
            free,
            space,
            embed,
        })
    }

    /// Layout for a binary parent, where the pairing is forced.
    pub fn binary(parent: &SpaceSpec, lock: &Lock) -> Result<FoldLayout> {
        if !parent.is_binary() {
            return Err(Error::Unsupported(
                "the forced pairing exists only on binary alphabets".into(),
            ));
        }
        let free = parent.all_sites().difference(lock.sites);
        FoldLayout::new(parent, lock, &SitePairing::extremes(parent, free))
    }

    pub fn lock(&self) -> &Lock {
        &self.lock
    }

    pub fn pairing(&self) -> &SitePairing {
        &self.pairing
    }

    /// Free sites of the parent, in the order of folded sites.
    pub fn free_sites(&self) -> &[usize] {
        &self.free
    }

    /// The two-letter space over `M^c`.
    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    /// True for the one-point folding with every site locked.
    pub fn is_trivial(&self) -> bool {
        self.free.is_empty()
    }

    /// Parent index of `alpha∘omega` for folded index `omega`.
    #[inline]
    pub fn embed(&self, folded: usize) -> usize {
        self.embed[folded]
    }

    /// Parent index of `alpha∘omega-bar`.
    #[inline]
    pub fn embed_flipped(&self, folded: usize) -> usize {
        self.embed[folded ^ (self.space.size() - 1)]
    }

    /// Parent site set corresponding to folded sites `k`.
    pub fn lift_sites(&self, k: SiteSet) -> SiteSet {
        k.iter().map(|p| self.free[p]).collect()
    }

    /// Folded site set for the free part of parent sites `k`.
    pub fn restrict_sites(&self, k: SiteSet) -> SiteSet {
        self.free
            .iter()
            .enumerate()
            .filter(|(_, &s)| k.contains(s))
            .map(|(p, _)| p)
            .collect()
    }
}

/// A folded measure together with its layout.
#[derive(Clone, Debug)]
pub struct Folding {
    pub layout: FoldLayout,
    pub result: Measure,
}

impl Folding {
    pub fn is_trivial(&self) -> bool {
        self.layout.is_trivial()
    }
}

pub fn fold(mu: &Measure, lock: &Lock, pairing: &SitePairing) -> Result<Folding> {
    let layout = FoldLayout::new(mu.space(), lock, pairing)?;
    fold_with(mu, layout)
}

/// [`fold`] with the forced pairing of a binary space.
pub fn fold_binary(mu: &Measure, lock: &Lock) -> Result<Folding> {
    fold_with(mu, FoldLayout::binary(mu.space(), lock)?)
}

pub fn fold_with(mu: &Measure, layout: FoldLayout) -> Result<Folding> {
    let w: Vec<f64> = (0..layout.space.size())
        .map(|j| mu.weight(layout.embed(j)) * mu.weight(layout.embed_flipped(j)))
        .collect();
    if w.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateFolding(format!(
            "zero normalizer for M = {:?}, alpha = {:?}",
            layout.lock.sites, layout.lock.alpha
        )));
    }
    let result = Measure::from_weights(&layout.space, w)?;
    Ok(Folding { layout, result })
}

/// `Phi~_b(omega) = sum_{b ⊆ b' ⊆ b ∪ M} Phi_b'(alpha∘omega) + Phi_b'(alpha∘omega-bar)`
/// for nonempty `b ⊆ M^c`, expressed on the folded space.
pub fn folded_potential(phi: &Potential, lock: &Lock, pairing: &SitePairing) -> Result<Potential> {
    let layout = FoldLayout::new(phi.space(), lock, pairing)?;
    folded_potential_with(phi, &layout)
}

pub fn folded_potential_with(phi: &Potential, layout: &FoldLayout) -> Result<Potential> {
    let parent = phi.space();
    let mut out = Potential::new(&layout.space);
    for (&bp, table) in phi.terms() {
        let b = layout.restrict_sites(bp);
        if b.is_empty() {
            continue;
        }
        let fsites: Vec<usize> = b.iter().collect();
        let m = fsites.len();
        let mut t = vec![0.0; 1 << m];
        for (local, slot) in t.iter_mut().enumerate() {
            // A folded configuration that is omega on b (zeros elsewhere); the
            // table of b' only reads sites in b' ⊆ b ∪ M.
            let mut j = 0usize;
            for (r, &p) in fsites.iter().enumerate() {
                if (local >> (m - 1 - r)) & 1 == 1 {
                    j |= 1 << (layout.space.n() - 1 - p);
                }
            }
            let mut jbar = 0usize;
            for &p in &fsites {
                jbar |= 1 << (layout.space.n() - 1 - p);
            }
            jbar ^= j;
            let a = table[crate::gibbs_potential::local_index(parent, bp, layout.embed(j))];
            let c = table[crate::gibbs_potential::local_index(parent, bp, layout.embed(jbar))];
            *slot = a + c;
        }
        out.accumulate(b, &t)?;
    }
    out.prune_zero();
    Ok(out)
}

/// Parameter `x` with the folded Curie-Weiss (or CW3) measure proportional to
/// `x^(k (n' - k))`, `k` the number of `+1` spins among the `n'` free sites.
pub fn cw_fold_parameter(family: &FamilySpec, lock: &Lock) -> Result<(f64, usize)> {
    match family {
        FamilySpec::CurieWeiss { .. } | FamilySpec::Cw3 { .. } => {}
        _ => {
            return Err(Error::Unsupported(
                "fold parameters exist for Curie-Weiss families only".into(),
            ))
        }
    }
    let mu = build_measure(family)?;
    cw_fold_parameter_of(&mu, lock)
}

/// Relative tolerance for the `x^(k (n' - k))` fit.
pub const FIT_TOL: f64 = 1e-10;

/// As [`cw_fold_parameter`] for an already built permutation-symmetric spin
/// measure. `x` is read off the `k = 0` and `k = 1` levels and then checked on
/// every folded configuration.
pub fn cw_fold_parameter_of(mu: &Measure, lock: &Lock) -> Result<(f64, usize)> {
    let f = fold_binary(mu, lock)?;
    let s = f.result.space();
    let n = s.n();
    if n <= 1 {
        return Ok((1.0, n));
    }
    let w = f.result.weights();
    let w0 = w[0];
    if w0 == 0.0 {
        return Err(Error::FitFailed(
            "zero weight at the all-minus configuration".into(),
        ));
    }
    let x = (w[1 << (n - 1)] / w0).powf(1.0 / (n - 1) as f64);
    for (j, &wj) in w.iter().enumerate() {
        let k = j.count_ones() as i32;
        let pred = x.powi(k * (n as i32 - k));
        let got = wj / w0;
        if (got - pred).abs() > FIT_TOL * got.abs().max(pred.abs()) {
            return Err(Error::FitFailed(format!(
                "folded weight {got} at {j} differs from x^(k(n'-k)) = {pred}"
            )));
        }
    }
    Ok((x, n))
}

/// Every folding geometry of a space: all locks, and for each all pairings
/// of the free sites up to per-site swap.
pub fn enumerate_layouts(space: &SpaceSpec) -> Result<Vec<FoldLayout>> {
    let mut out = Vec::new();
    for lock in Lock::enumerate(space) {
        let free = space.all_sites().difference(lock.sites);
        for p in SitePairing::enumerate(space, free) {
            out.push(FoldLayout::new(space, &lock, &p)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{check_lattice_condition, gibbs_measure, LatticeSign};
    use std::collections::HashSet;

    fn cw(n: usize, j: f64, h: Vec<f64>) -> FamilySpec {
        FamilySpec::CurieWeiss { n, j, h }
    }

    fn proportional(a: &[f64], b: &[f64], tol: f64) -> bool {
        let ta: f64 = a.iter().sum();
        let tb: f64 = b.iter().sum();
        a.iter()
            .zip(b)
            .all(|(x, y)| (x / ta - y / tb).abs() <= tol * (x / ta).abs().max(1e-300))
    }

    #[test]
    fn all_locked_is_trivial() {
        let mu = build_measure(&cw(3, -0.5, vec![0.1, 0.2, 0.3])).unwrap();
        let s = mu.space().clone();
        let lock = Lock::from_values(&s, s.all_sites(), &[1, -1, 1]).unwrap();
        let f = fold_binary(&mu, &lock).unwrap();
        assert!(f.is_trivial());
        assert_eq!(f.result.space().size(), 1);
        assert!((f.result.prob(0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn folding_is_flip_symmetric_and_normalised() {
        let mu = build_measure(&FamilySpec::Potts {
            n: 3,
            q: 3,
            couplings: vec![(0, 1, -0.7), (1, 2, 0.4)],
        })
        .unwrap();
        for layout in enumerate_layouts(mu.space()).unwrap() {
            let f = fold_with(&mu, layout).unwrap();
            let s = f.result.space();
            let mask = s.size() - 1;
            let sum: f64 = f.result.probabilities().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            for j in 0..s.size() {
                assert!((f.result.prob(j) - f.result.prob(j ^ mask)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn product_folds_to_product() {
        let mu = build_measure(&FamilySpec::Product {
            p: vec![0.2, 0.6, 0.9, 0.5],
        })
        .unwrap();
        for lock in Lock::enumerate(mu.space()) {
            let f = fold_binary(&mu, &lock).unwrap();
            let s = f.result.space();
            let n = s.n();
            for j in 0..s.size() {
                let mut prod = 1.0;
                for i in 0..n {
                    let bit = (j >> (n - 1 - i)) & 1 == 1;
                    let marg: f64 = (0..s.size())
                        .filter(|&t| ((t >> (n - 1 - i)) & 1 == 1) == bit)
                        .map(|t| f.result.prob(t))
                        .sum();
                    prod *= marg;
                }
                assert!((f.result.prob(j) - prod).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cw_fold_drops_fields() {
        let j = -0.8;
        let mu = build_measure(&cw(3, j, vec![0.3, -1.0, 0.7])).unwrap();
        let s = mu.space().clone();
        let lock = Lock::from_values(&s, SiteSet::singleton(2), &[1]).unwrap();
        let f = fold_binary(&mu, &lock).unwrap();
        // free sites 0,1: result ∝ exp(2J w0 w1)
        let expect: Vec<f64> = (0..4)
            .map(|t| {
                let w0 = if t & 2 != 0 { 1.0 } else { -1.0 };
                let w1 = if t & 1 != 0 { 1.0 } else { -1.0 };
                (2.0 * j * w0 * w1).exp()
            })
            .collect();
        assert!(proportional(f.result.weights(), &expect, 1e-12));
    }

    #[test]
    fn cw_parameter_is_exp_minus_four_j() {
        // sum over i<j: the folded exponent 2J sum w_i w_j equals
        // const - 4J k (n' - k)
        for j in [-0.5, 0.0, -2.0, 0.3] {
            let fam = cw(4, j, vec![0.4, -0.3, 0.0, 1.0]);
            let s = SpaceSpec::spins(4).unwrap();
            for lock in Lock::enumerate(&s) {
                let (x, n) = cw_fold_parameter(&fam, &lock).unwrap();
                assert_eq!(n, 4 - lock.sites().len());
                if n >= 2 {
                    assert!((x - (-4.0 * j).exp()).abs() < 1e-9 * x);
                } else {
                    assert_eq!(x, 1.0);
                }
            }
        }
    }

    #[test]
    fn cw3_parameter_oracle() {
        // Pair coupling seen by the free sites: J2 + J3 * sum of locked spins.
        let (h, j2, j3) = (0.3, -0.4, 0.25);
        let fam = FamilySpec::Cw3 { n: 5, h, j2, j3 };
        let s = SpaceSpec::spins(5).unwrap();
        for lock in Lock::enumerate(&s) {
            let (x, n) = cw_fold_parameter(&fam, &lock).unwrap();
            if n >= 2 {
                let sum: i32 = lock.alpha().iter().map(|&d| s.value_of(d)).sum();
                let expect = (-4.0 * (j2 + j3 * sum as f64)).exp();
                assert!((x - expect).abs() < 1e-9 * expect);
            }
        }
        assert!(cw_fold_parameter(&FamilySpec::KOutOfN { n: 2, k: 1 }, &Lock::none()).is_err());
    }

    #[test]
    fn folded_potential_examples() {
        let f = FamilySpec::Ising {
            n: 2,
            couplings: vec![(0, 1, 0.9)],
            h: vec![0.4, -0.2],
        };
        let phi = crate::gibbs_potential::canonical_potential(&f).unwrap();
        let s = phi.space().clone();
        let p = SitePairing::extremes(&s, s.all_sites());
        let fp = folded_potential(&phi, &Lock::none(), &p).unwrap();
        // fields cancel, pair term doubles
        let b = SiteSet::from_iter([0, 1]);
        assert_eq!(fp.terms().len(), 1);
        assert_eq!(fp.term(b).unwrap(), &[1.8, -1.8, -1.8, 1.8]);
    }

    #[test]
    fn folded_potential_matches_fold() {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for q in [2usize, 3] {
            let s = SpaceSpec::q_state(3, q).unwrap();
            let mut phi = Potential::new(&s);
            for b in [vec![0], vec![0, 1], vec![1, 2], vec![0, 1, 2]] {
                let b: SiteSet = b.into_iter().collect();
                let t = (0..q.pow(b.len() as u32)).map(|_| next()).collect();
                phi.add_term(b, t).unwrap();
            }
            let mu = gibbs_measure(&phi).unwrap();
            for layout in enumerate_layouts(&s).unwrap() {
                if layout.is_trivial() {
                    continue;
                }
                let fp = folded_potential_with(&phi, &layout).unwrap();
                let f = fold_with(&mu, layout.clone()).unwrap();
                let g = gibbs_measure(&fp).unwrap();
                assert!(proportional(f.result.weights(), g.weights(), 1e-10));
                let mask = fp.space().size() - 1;
                for &b in fp.terms().keys() {
                    for j in 0..fp.space().size() {
                        assert!((fp.value(b, j) - fp.value(b, j ^ mask)).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn folding_sets_partition_pairs() {
        for (n, q) in [(1, 2), (2, 2), (3, 2), (2, 3), (3, 3)] {
            let s = SpaceSpec::q_state(n, q).unwrap();
            let mut seen = HashSet::new();
            let mut classes = 0usize;
            for layout in enumerate_layouts(&s).unwrap() {
                classes += 1;
                for j in 0..layout.space().size() {
                    assert!(seen.insert((layout.embed(j), layout.embed_flipped(j))));
                }
            }
            let expected: usize = (0..=n)
                .map(|m| binom(n, m) * q.pow(m as u32) * (q * (q - 1) / 2).pow((n - m) as u32))
                .sum();
            assert_eq!(classes, expected);
            assert_eq!(seen.len(), q.pow(2 * n as u32));
        }
    }

    fn binom(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn nlc_iff_min_at_all_ones() {
        let fams = vec![
            cw(4, -0.7, vec![0.2, -0.5, 0.1, 0.0]),
            cw(4, 0.6, vec![0.2, -0.5, 0.1, 0.0]),
            FamilySpec::Cw3 {
                n: 4,
                h: 0.1,
                j2: -0.3,
                j3: 0.05,
            },
            FamilySpec::Cw3 {
                n: 4,
                h: 0.1,
                j2: -0.1,
                j3: 0.4,
            },
            FamilySpec::Cw3 {
                n: 4,
                h: -0.2,
                j2: 0.2,
                j3: -0.1,
            },
        ];
        for fam in fams {
            let mu = build_measure(&fam).unwrap();
            let nlc = check_lattice_condition(&mu, LatticeSign::Negative, 1e-12)
                .unwrap()
                .holds;
            let mut all_min = true;
            for lock in Lock::enumerate(mu.space()) {
                let f = fold_binary(&mu, &lock).unwrap();
                let w = f.result.weights();
                let top = w[w.len() - 1];
                if w.iter().any(|&v| v < top * (1.0 - 1e-12)) {
                    all_min = false;
                }
            }
            assert_eq!(nlc, all_min, "{fam:?}");
        }
    }

    #[test]
    fn degenerate_folding_is_an_error() {
        let mu = build_measure(&FamilySpec::KOutOfN { n: 3, k: 1 }).unwrap();
        let s = mu.space().clone();
        // alpha = (1, 1) on {0, 1}: every completion has two ones
        let lock = Lock::from_values(&s, SiteSet::from_iter([0, 1]), &[1, 1]).unwrap();
        assert!(matches!(
            fold_binary(&mu, &lock),
            Err(Error::DegenerateFolding(_))
        ));
    }
}
