//! Random-cluster representations: eta configurations, compatibility,
//! eta-clusters, base validation, the monotone Gibbs base, and the two
//! hypotheses (symmetry and separation) of the general BK theorem.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::bitset::Bitset;
use crate::box_ops::{PreparedRule, SelectionRule, WitnessPair, WitnessTable};
use crate::config_space::{Configuration, Event, SiteSet, SpaceSpec};
use crate::error::{input, Error, Result};
use crate::folding::FoldLayout;
use crate::gibbs_potential::{local_index, Potential};
use crate::measures::Measure;
use crate::partition::Partition;

/// Relative gap below which two potential values on one edge are treated as
/// equal when forming up-sets.
pub const TIE_TOL: f64 = 1e-12;

/// Largest support materialised for explicit enumeration.
pub const MAX_SUPPORT: usize = 1 << 20;

/// `eta = (eta_b)` with only the active edges (`eta_b != S^b`) stored.
/// Each `eta_b` is a bitset over the local configurations of `b`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EtaConfig {
    space: SpaceSpec,
    active: BTreeMap<SiteSet, Bitset>,
}

impl EtaConfig {
    pub fn inactive(space: &SpaceSpec) -> EtaConfig {
        EtaConfig {
            space: space.clone(),
            active: BTreeMap::new(),
        }
    }

    /// Sets `eta_b`. A full set makes `b` inactive again; an empty set is rejected.
    pub fn set(&mut self, b: SiteSet, allowed: Bitset) -> Result<()> {
        if b.is_empty() {
            return input("eta edges must be nonempty");
        }
        self.space.check_sites(b)?;
        let len = self.space.q().pow(b.len() as u32);
        if allowed.len() != len {
            return input(format!("eta_b for {b:?} needs {len} bits"));
        }
        if allowed.is_empty() {
            return input(format!("eta_b for {b:?} is empty"));
        }
        if allowed.count() == len {
            self.active.remove(&b);
        } else {
            self.active.insert(b, allowed);
        }
        Ok(())
    }

    pub fn with(mut self, b: SiteSet, allowed: Bitset) -> Result<EtaConfig> {
        self.set(b, allowed)?;
        Ok(self)
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    pub fn active(&self) -> &BTreeMap<SiteSet, Bitset> {
        &self.active
    }

    #[inline]
    pub fn compatible_index(&self, index: usize) -> bool {
        self.active
            .iter()
            .all(|(&b, allowed)| allowed.contains(local_index(&self.space, b, index)))
    }

    pub fn partition(&self) -> Partition {
        Partition::from_hyperedges(
            self.space.n(),
            self.active.keys().copied().filter(|b| b.len() >= 2),
        )
    }
}

/// `omega ~ eta`: `omega_b ∈ eta_b` for every active `b`.
pub fn compatible(omega: &Configuration, eta: &EtaConfig) -> bool {
    eta.compatible_index(eta.space.encode(omega))
}

/// Finest partition with every active edge inside one block.
pub fn eta_clusters(eta: &EtaConfig) -> Partition {
    eta.partition()
}

/// One independent factor of a product base: the possible values of `eta_b`
/// (`None` meaning inactive) with their weights.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeFactor {
    pub edge: SiteSet,
    pub choices: Vec<(Option<Bitset>, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
enum Repr {
    Explicit(Vec<(EtaConfig, f64)>),
    Product(Vec<EdgeFactor>),
}

/// A base `nu`: a finite positive measure on eta configurations. Either an
/// explicit support list or a product over independent edges.
#[derive(Clone, Debug, PartialEq)]
pub struct RcrBase {
    space: SpaceSpec,
    repr: Repr,
}

/// Debug record for one support element.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaRecord {
    /// `(edge sites, allowed local configuration indices)` for active edges.
    pub active: Vec<(Vec<usize>, Vec<usize>)>,
    pub weight: f64,
}

impl RcrBase {
    /// Explicit support; zero-weight entries are dropped, duplicates rejected.
    pub fn explicit(space: &SpaceSpec, support: Vec<(EtaConfig, f64)>) -> Result<RcrBase> {
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        for (eta, w) in support {
            if eta.space != *space {
                return Err(Error::SpaceMismatch);
            }
            if !(w.is_finite() && w >= 0.0) {
                return input("base weights must be finite and nonnegative");
            }
            if !seen.insert(eta.clone()) {
                return input("duplicate support entry");
            }
            if w > 0.0 {
                kept.push((eta, w));
            }
        }
        if kept.is_empty() {
            return input("base has no positive weight");
        }
        Ok(RcrBase {
            space: space.clone(),
            repr: Repr::Explicit(kept),
        })
    }

    pub fn product(space: &SpaceSpec, factors: Vec<EdgeFactor>) -> Result<RcrBase> {
        let mut kept = Vec::new();
        for mut f in factors {
            space.check_sites(f.edge)?;
            let len = space.q().pow(f.edge.len() as u32);
            f.choices.retain(|(_, w)| *w > 0.0);
            for (c, w) in &f.choices {
                if !w.is_finite() {
                    return input("base weights must be finite");
                }
                if let Some(c) = c {
                    if c.len() != len || c.is_empty() || c.count() == len {
                        return input(format!("bad eta_b choice on {:?}", f.edge));
                    }
                }
            }
            if f.choices.is_empty() {
                return input(format!("edge {:?} has no positive choice", f.edge));
            }
            kept.push(f);
        }
        Ok(RcrBase {
            space: space.clone(),
            repr: Repr::Product(kept),
        })
    }

    /// `nu` concentrated on `eta_[n] = {omega}` with weight `mu(omega)`.
    pub fn trivial(mu: &Measure) -> Result<RcrBase> {
        let s = mu.space();
        let all = s.all_sites();
        let support = (0..s.size())
            .filter(|&i| mu.weight(i) > 0.0)
            .map(|i| {
                let mut eta = EtaConfig::inactive(s);
                eta.set(all, Bitset::from_indices(s.size(), [i]))?;
                Ok((eta, mu.weight(i)))
            })
            .collect::<Result<Vec<_>>>()?;
        RcrBase::explicit(s, support)
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    pub fn factors(&self) -> Option<&[EdgeFactor]> {
        match &self.repr {
            Repr::Product(f) => Some(f),
            Repr::Explicit(_) => None,
        }
    }

    pub fn normalizer(&self) -> f64 {
        match &self.repr {
            Repr::Explicit(s) => s.iter().map(|(_, w)| w).sum(),
            Repr::Product(fs) => fs
                .iter()
                .map(|f| f.choices.iter().map(|(_, w)| w).sum::<f64>())
                .product(),
        }
    }

    pub fn support_len(&self) -> usize {
        match &self.repr {
            Repr::Explicit(s) => s.len(),
            Repr::Product(fs) => fs
                .iter()
                .map(|f| f.choices.len())
                .fold(1usize, |a, c| a.saturating_mul(c)),
        }
    }

    /// Every positive-weight support element.
    pub fn support(&self) -> Result<Vec<(EtaConfig, f64)>> {
        if self.support_len() > MAX_SUPPORT {
            return Err(Error::Cap(format!(
                "support of {} entries exceeds {MAX_SUPPORT}",
                self.support_len()
            )));
        }
        match &self.repr {
            Repr::Explicit(s) => Ok(s.clone()),
            Repr::Product(fs) => {
                let mut out = vec![(EtaConfig::inactive(&self.space), 1.0)];
                for f in fs {
                    let mut next = Vec::with_capacity(out.len() * f.choices.len());
                    for (eta, w) in &out {
                        for (c, cw) in &f.choices {
                            let mut e = eta.clone();
                            if let Some(c) = c {
                                e.active.insert(f.edge, c.clone());
                            }
                            next.push((e, w * cw));
                        }
                    }
                    out = next;
                }
                Ok(out)
            }
        }
    }

    pub fn to_records(&self) -> Result<Vec<EtaRecord>> {
        let z = self.normalizer();
        Ok(self
            .support()?
            .into_iter()
            .map(|(eta, w)| EtaRecord {
                active: eta
                    .active
                    .iter()
                    .map(|(b, s)| (b.iter().collect(), s.iter().collect()))
                    .collect(),
                weight: w / z,
            })
            .collect())
    }

    /// `m(omega) = sum_{eta ~ omega} nu(eta)` (unnormalised).
    pub fn compatible_mass(&self, index: usize) -> f64 {
        match &self.repr {
            Repr::Explicit(s) => s
                .iter()
                .filter(|(eta, _)| eta.compatible_index(index))
                .map(|(_, w)| w)
                .sum(),
            Repr::Product(fs) => fs
                .iter()
                .map(|f| {
                    let l = local_index(&self.space, f.edge, index);
                    f.choices
                        .iter()
                        .filter(|(c, _)| c.as_ref().is_none_or(|c| c.contains(l)))
                        .map(|(_, w)| w)
                        .sum::<f64>()
                })
                .product(),
        }
    }

    /// Cluster partitions of the support elements compatible with `index`,
    /// deduplicated. For product bases these come from all subsets of the
    /// multi-site edges that can be active, capped at 2^16 subsets.
    pub fn compatible_partitions(&self, index: usize) -> Option<Vec<Partition>> {
        let n = self.space.n();
        let mut seen = HashSet::new();
        match &self.repr {
            Repr::Explicit(s) => {
                for (eta, _) in s {
                    if eta.compatible_index(index) {
                        seen.insert(eta.partition());
                    }
                }
            }
            Repr::Product(_) => {
                let edges = self.possibly_active(index);
                if edges.len() > 16 {
                    return None;
                }
                for sel in 0u32..1 << edges.len() {
                    seen.insert(Partition::from_hyperedges(
                        n,
                        edges
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| (sel >> i) & 1 == 1)
                            .map(|(_, e)| *e),
                    ));
                }
            }
        }
        let mut v: Vec<Partition> = seen.into_iter().collect();
        v.sort_by(|a, b| a.blocks().cmp(b.blocks()));
        Some(v)
    }

    /// Multi-site edges with a positive-weight active choice containing `omega_b`.
    fn possibly_active(&self, index: usize) -> Vec<SiteSet> {
        match &self.repr {
            Repr::Explicit(_) => Vec::new(),
            Repr::Product(fs) => fs
                .iter()
                .filter(|f| f.edge.len() >= 2)
                .filter(|f| {
                    let l = local_index(&self.space, f.edge, index);
                    f.choices
                        .iter()
                        .any(|(c, _)| c.as_ref().is_some_and(|c| c.contains(l)))
                })
                .map(|f| f.edge)
                .collect(),
        }
    }

    /// Coarsest cluster partition among support elements compatible with
    /// `index`, when one exists (always for product bases).
    pub fn coarsest_partition(&self, index: usize) -> Option<Partition> {
        match &self.repr {
            Repr::Product(_) => Some(Partition::from_hyperedges(
                self.space.n(),
                self.possibly_active(index),
            )),
            Repr::Explicit(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RcrReport {
    pub pass: bool,
    pub max_rel_dev: f64,
    /// Configuration index attaining the largest deviation.
    pub worst_index: Option<usize>,
    /// Inferred constant `c` with `m ≈ c mu`.
    pub constant: f64,
}

/// Checks that `sum_{eta ~ omega} nu(eta)` is proportional to `mu(omega)`.
pub fn validate_rcr(nu: &RcrBase, mu: &Measure, tol: f64) -> Result<RcrReport> {
    if nu.space != *mu.space() {
        return Err(Error::SpaceMismatch);
    }
    let first = (0..mu.space().size())
        .find(|&i| mu.weight(i) > 0.0)
        .ok_or_else(|| Error::Input("measure is identically zero".into()))?;
    let m: Vec<f64> = (0..mu.space().size())
        .map(|i| nu.compatible_mass(i))
        .collect();
    let c = m[first] / mu.weight(first);
    let mut rep = RcrReport {
        pass: true,
        max_rel_dev: 0.0,
        worst_index: None,
        constant: c,
    };
    for (i, &mi) in m.iter().enumerate() {
        let target = c * mu.weight(i);
        let scale = mi.abs().max(target.abs());
        let dev = if scale == 0.0 {
            0.0
        } else {
            (mi - target).abs() / scale
        };
        if dev > rep.max_rel_dev {
            rep.max_rel_dev = dev;
            rep.worst_index = Some(i);
        }
    }
    rep.pass = rep.max_rel_dev <= tol && c.is_finite() && c > 0.0;
    Ok(rep)
}

/// Groups sorted values whose relative gap is below [`TIE_TOL`]; returns the
/// largest member of each group.
fn distinct_levels(table: &[f64]) -> Vec<f64> {
    let mut v = table.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut levels: Vec<f64> = Vec::new();
    for x in v {
        match levels.last_mut() {
            Some(last) if (x - *last).abs() <= TIE_TOL * (1.0 + x.abs().max(last.abs())) => {
                *last = x;
            }
            _ => levels.push(x),
        }
    }
    levels
}

/// The monotone base of a Gibbs measure: a product over non-constant edges
/// where `eta_b` ranges over the up-sets `{sigma : Phi_b(sigma) >= v}` of the
/// edge table, weighted `e^{v_t} - e^{v_(t-1)}` (scaled by `e^{-max}`).
pub fn gibbs_base(phi: &Potential) -> Result<RcrBase> {
    let mut factors = Vec::new();
    for (&b, table) in phi.terms() {
        let levels = distinct_levels(table);
        if levels.len() < 2 {
            continue;
        }
        let vmax = *levels.last().unwrap();
        let mut choices = Vec::with_capacity(levels.len());
        let mut prev = 0.0;
        for (t, &v) in levels.iter().enumerate() {
            let e = (v - vmax).exp();
            let w = e - prev;
            prev = e;
            let set = if t == 0 {
                None
            } else {
                let lo = levels[t - 1];
                Some(Bitset::from_indices(
                    table.len(),
                    (0..table.len()).filter(|&l| table[l] > lo),
                ))
            };
            choices.push((set, w));
        }
        factors.push(EdgeFactor { edge: b, choices });
    }
    RcrBase::product(phi.space(), factors)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionIReport {
    pub pass: bool,
    /// An edge and an allowed local configuration whose flip is not allowed.
    pub witness: Option<(Vec<usize>, usize)>,
}

fn flip_closed(allowed: &Bitset) -> Option<usize> {
    let mask = allowed.len() - 1;
    allowed.iter().find(|&l| !allowed.contains(l ^ mask))
}

/// Symmetry: every positive-weight `eta` has each `eta_b` closed under the flip.
pub fn check_condition_i(nu: &RcrBase) -> Result<ConditionIReport> {
    if !nu.space.is_binary() {
        return input("condition (i) needs a two-letter space");
    }
    let bad = |b: &SiteSet, s: &Bitset| flip_closed(s).map(|l| (b.iter().collect(), l));
    let witness = match &nu.repr {
        Repr::Explicit(sup) => sup
            .iter()
            .flat_map(|(eta, _)| eta.active.iter())
            .find_map(|(b, s)| bad(b, s)),
        Repr::Product(fs) => fs.iter().find_map(|f| {
            f.choices
                .iter()
                .filter_map(|(c, _)| c.as_ref())
                .find_map(|s| bad(&f.edge, s))
        }),
    };
    Ok(ConditionIReport {
        pass: witness.is_none(),
        witness,
    })
}

/// Outcome of the separation check at one folded configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeparationOutcome {
    pub folded: usize,
    /// Some single pair separates for every compatible `eta`.
    pub uniform: bool,
    /// Every compatible `eta` is separated by some pair (diagnostic only).
    pub per_eta: Option<bool>,
    /// The first uniformly valid pair, in parent site labels.
    pub pair: Option<WitnessPair>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionIiReport {
    /// The hypothesis as stated: one pair per configuration valid for all `eta`.
    pub pass: bool,
    /// The relaxation where the pair may depend on `eta`; `None` if skipped.
    pub per_eta_pass: Option<bool>,
    /// Configurations with a nonempty selection.
    pub checked: usize,
    pub outcomes: Vec<SeparationOutcome>,
}

/// No site of `k` shares a block of `p` with a site of `l`.
#[inline]
fn separated(p: &Partition, k: SiteSet, l: SiteSet) -> bool {
    p.closure(k).is_disjoint(p.closure(l))
}

/// Cluster partitions of a base indexed by configuration, built once and
/// shared across event pairs.
#[derive(Clone, Debug)]
pub struct SeparationView {
    /// Partition whose separation implies separation for every compatible eta.
    coarsest: Vec<Option<Partition>>,
    /// All distinct compatible partitions (empty when not materialised).
    parts: Vec<Option<Vec<Partition>>>,
}

impl SeparationView {
    pub fn new(nu: &RcrBase, diagnostic: bool) -> SeparationView {
        let size = nu.space.size();
        let coarsest: Vec<_> = (0..size).map(|j| nu.coarsest_partition(j)).collect();
        let parts = (0..size)
            .map(|j| {
                if coarsest[j].is_some() && !diagnostic {
                    None
                } else {
                    nu.compatible_partitions(j)
                }
            })
            .collect();
        SeparationView { coarsest, parts }
    }

    /// Separation outcome at folded configuration `j` for its selected pairs
    /// (given in parent labels, in search order).
    pub fn outcome(
        &self,
        layout: &FoldLayout,
        j: usize,
        pairs: &[WitnessPair],
    ) -> SeparationOutcome {
        let local: Vec<(SiteSet, SiteSet)> = pairs
            .iter()
            .map(|p| (layout.restrict_sites(p.k), layout.restrict_sites(p.l)))
            .collect();
        let parts = self.parts[j].as_deref();
        let uniform_idx = local
            .iter()
            .position(|&(k, l)| match (&self.coarsest[j], parts) {
                (Some(p), _) => separated(p, k, l),
                (None, Some(ps)) => ps.iter().all(|p| separated(p, k, l)),
                (None, None) => false,
            });
        let per_eta = parts.map(|ps| {
            ps.iter()
                .all(|p| local.iter().any(|&(k, l)| separated(p, k, l)))
        });
        SeparationOutcome {
            folded: j,
            uniform: uniform_idx.is_some(),
            per_eta,
            pair: uniform_idx.map(|i| pairs[i]),
        }
    }
}

/// Separation check on one folding, with the rule and witness tables already
/// built on the parent space.
pub fn check_condition_ii_prepared(
    view: &SeparationView,
    layout: &FoldLayout,
    rule: &PreparedRule,
    ta: &WitnessTable,
    tb: &WitnessTable,
) -> Result<ConditionIiReport> {
    if view.coarsest.len() != layout.space().size() {
        return Err(Error::SpaceMismatch);
    }
    let mut rep = ConditionIiReport {
        pass: true,
        per_eta_pass: Some(true),
        checked: 0,
        outcomes: Vec::new(),
    };
    for j in 0..layout.space().size() {
        let pairs = rule.pairs(ta, tb, layout.embed(j));
        if pairs.is_empty() {
            continue;
        }
        rep.checked += 1;
        let out = view.outcome(layout, j, &pairs);
        rep.pass &= out.uniform;
        rep.per_eta_pass = match (rep.per_eta_pass, out.per_eta) {
            (Some(acc), Some(v)) => Some(acc && v),
            _ => None,
        };
        rep.outcomes.push(out);
    }
    Ok(rep)
}

/// Separation check on one folding for events `a`, `b` of the parent space.
pub fn check_condition_ii(
    nu: &RcrBase,
    layout: &FoldLayout,
    a: &Event,
    b: &Event,
    rule: &SelectionRule,
) -> Result<ConditionIiReport> {
    if nu.space != *layout.space() || a.space() != b.space() {
        return Err(Error::SpaceMismatch);
    }
    let prepared = rule.prepare(a.space())?;
    let (ta, tb) = (WitnessTable::new(a)?, WitnessTable::new(b)?);
    check_condition_ii_prepared(&SeparationView::new(nu, true), layout, &prepared, &ta, &tb)
}

/// `(#{omega ~ eta : alpha∘omega ∈ A ⊟ B}, #{omega ~ eta : alpha∘omega ∈ A, alpha∘omega-bar ∈ B})`.
pub fn check_cardinality_lemma(
    eta: &EtaConfig,
    layout: &FoldLayout,
    boxminus: &Bitset,
    a: &Bitset,
    b: &Bitset,
) -> Result<(usize, usize)> {
    if eta.space != *layout.space() {
        return Err(Error::SpaceMismatch);
    }
    let mut lhs = 0;
    let mut rhs = 0;
    for j in 0..layout.space().size() {
        if !eta.compatible_index(j) {
            continue;
        }
        if boxminus.contains(layout.embed(j)) {
            lhs += 1;
        }
        if a.contains(layout.embed(j)) && b.contains(layout.embed_flipped(j)) {
            rhs += 1;
        }
    }
    Ok((lhs, rhs))
}
