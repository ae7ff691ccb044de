//! Finite configuration spaces `S^n`, configurations, and events as bitsets.
//!
//! Configurations are indexed mixed-radix with site 0 most significant:
//! `index = sum_i digit_i * q^(n-1-i)`, where `digit_i` is the position of
//! the site value in the declared alphabet. The alphabet order is also the
//! order used for "increasing". For binary spaces this makes site `i`
//! correspond to bit `n-1-i` of the index, so the coordinatewise order is
//! plain bit inclusion.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bitset::Bitset;
use crate::error::{input, Error, Result};

/// Default bound on `n * ceil(log2 |S|)` for exhaustive operations.
pub const DEFAULT_CAP_BITS: u32 = 24;

/// Absolute ceiling for the runtime override.
pub const MAX_CAP_BITS: u32 = 30;

/// A set of sites stored as a bitmask (bit `i` is site `i`).
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "Vec<usize>", try_from = "Vec<usize>")]
pub struct SiteSet(pub u32);

impl SiteSet {
    pub const EMPTY: SiteSet = SiteSet(0);

    pub fn all(n: usize) -> SiteSet {
        if n >= 32 {
            SiteSet(!0)
        } else {
            SiteSet((1u32 << n) - 1)
        }
    }

    pub fn singleton(i: usize) -> SiteSet {
        SiteSet(1 << i)
    }

    #[inline]
    pub fn contains(self, i: usize) -> bool {
        (self.0 >> i) & 1 == 1
    }

    #[inline]
    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    #[inline]
    pub fn union(self, o: SiteSet) -> SiteSet {
        SiteSet(self.0 | o.0)
    }

    #[inline]
    pub fn intersection(self, o: SiteSet) -> SiteSet {
        SiteSet(self.0 & o.0)
    }

    #[inline]
    pub fn difference(self, o: SiteSet) -> SiteSet {
        SiteSet(self.0 & !o.0)
    }

    #[inline]
    pub fn is_subset(self, o: SiteSet) -> bool {
        self.0 & !o.0 == 0
    }

    #[inline]
    pub fn is_disjoint(self, o: SiteSet) -> bool {
        self.0 & o.0 == 0
    }

    pub fn with(self, i: usize) -> SiteSet {
        SiteSet(self.0 | (1 << i))
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut m = self.0;
        std::iter::from_fn(move || {
            if m == 0 {
                None
            } else {
                let t = m.trailing_zeros() as usize;
                m &= m - 1;
                Some(t)
            }
        })
    }

    /// All subsets of this set, in increasing mask order.
    pub fn subsets(self) -> impl Iterator<Item = SiteSet> {
        let full = self.0;
        let mut cur = Some(0u32);
        std::iter::from_fn(move || {
            let c = cur?;
            cur = if c == full {
                None
            } else {
                Some((c.wrapping_sub(full)) & full)
            };
            Some(SiteSet(c))
        })
    }
}

impl FromIterator<usize> for SiteSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        SiteSet(iter.into_iter().fold(0, |m, i| m | (1 << i)))
    }
}

impl From<SiteSet> for Vec<usize> {
    fn from(s: SiteSet) -> Self {
        s.iter().collect()
    }
}

impl TryFrom<Vec<usize>> for SiteSet {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = v.iter().find(|&&i| i >= 32) {
            return input(format!("site {bad} out of range"));
        }
        Ok(v.into_iter().collect())
    }
}

impl fmt::Debug for SiteSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// The space `S^n` with an ordered alphabet.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "SpaceHeader", try_from = "SpaceHeader")]
pub struct SpaceSpec {
    n: usize,
    alphabet: Arc<[i32]>,
    size: usize,
}

/// Wire form of a [`SpaceSpec`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpaceHeader {
    pub n: usize,
    pub alphabet: Vec<i32>,
}

impl From<SpaceSpec> for SpaceHeader {
    fn from(s: SpaceSpec) -> Self {
        SpaceHeader {
            n: s.n,
            alphabet: s.alphabet.to_vec(),
        }
    }
}

impl TryFrom<SpaceHeader> for SpaceSpec {
    type Error = Error;

    fn try_from(h: SpaceHeader) -> Result<Self> {
        SpaceSpec::new(h.n, h.alphabet)
    }
}

fn bits_per_site(q: usize) -> u32 {
    usize::BITS - (q - 1).leading_zeros()
}

impl SpaceSpec {
    /// `n` sites over `alphabet`, listed in increasing order.
    pub fn new(n: usize, alphabet: impl Into<Vec<i32>>) -> Result<SpaceSpec> {
        Self::with_cap(n, alphabet, DEFAULT_CAP_BITS)
    }

    pub fn with_cap(n: usize, alphabet: impl Into<Vec<i32>>, cap_bits: u32) -> Result<SpaceSpec> {
        if n == 0 {
            return input("a space needs at least one site");
        }
        Self::build(n, alphabet.into(), cap_bits)
    }

    /// `{0,1}^n`.
    pub fn binary(n: usize) -> Result<SpaceSpec> {
        Self::new(n, vec![0, 1])
    }

    /// `{-1,+1}^n`.
    pub fn spins(n: usize) -> Result<SpaceSpec> {
        Self::new(n, vec![-1, 1])
    }

    /// `{0,..,q-1}^n`.
    pub fn q_state(n: usize, q: usize) -> Result<SpaceSpec> {
        Self::new(n, (0..q as i32).collect::<Vec<_>>())
    }

    /// Unchecked-size constructor that also admits `n = 0` (the one-point
    /// space left over by a folding that locks every site).
    pub(crate) fn folded(n: usize, alphabet: Vec<i32>) -> SpaceSpec {
        Self::build(n, alphabet, MAX_CAP_BITS).expect("folded space within parent cap")
    }

    fn build(n: usize, alphabet: Vec<i32>, cap_bits: u32) -> Result<SpaceSpec> {
        if alphabet.len() < 2 {
            return input("alphabet needs at least two symbols");
        }
        if alphabet.len() > 256 {
            return input("alphabet larger than 256 symbols");
        }
        for (i, a) in alphabet.iter().enumerate() {
            if alphabet[..i].contains(a) {
                return input(format!("duplicate alphabet symbol {a}"));
            }
        }
        if cap_bits > MAX_CAP_BITS {
            return Err(Error::Cap(format!(
                "cap override {cap_bits} above hard limit {MAX_CAP_BITS}"
            )));
        }
        let bits = n as u64 * bits_per_site(alphabet.len()) as u64;
        if bits > cap_bits as u64 {
            return Err(Error::Cap(format!(
                "n * ceil(log2 |S|) = {bits} exceeds {cap_bits}"
            )));
        }
        let size = alphabet.len().pow(n as u32);
        Ok(SpaceSpec {
            n,
            alphabet: alphabet.into(),
            size,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn q(&self) -> usize {
        self.alphabet.len()
    }

    /// Number of configurations, `|S|^n`.
    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn alphabet(&self) -> &[i32] {
        &self.alphabet
    }

    pub fn is_binary(&self) -> bool {
        self.q() == 2
    }

    pub fn all_sites(&self) -> SiteSet {
        SiteSet::all(self.n)
    }

    #[inline]
    pub fn stride(&self, site: usize) -> usize {
        self.q().pow((self.n - 1 - site) as u32)
    }

    /// Digit (alphabet position) of `site` in configuration `index`.
    #[inline]
    pub fn digit(&self, index: usize, site: usize) -> u8 {
        if self.q() == 2 {
            ((index >> (self.n - 1 - site)) & 1) as u8
        } else {
            ((index / self.stride(site)) % self.q()) as u8
        }
    }

    pub fn digit_of(&self, value: i32) -> Result<u8> {
        self.alphabet
            .iter()
            .position(|&a| a == value)
            .map(|p| p as u8)
            .ok_or_else(|| Error::Input(format!("value {value} not in alphabet")))
    }

    #[inline]
    pub fn value_of(&self, digit: u8) -> i32 {
        self.alphabet[digit as usize]
    }

    pub fn encode(&self, c: &Configuration) -> usize {
        debug_assert_eq!(c.digits.len(), self.n);
        c.digits
            .iter()
            .fold(0usize, |acc, &d| acc * self.q() + d as usize)
    }

    pub fn decode(&self, index: usize) -> Configuration {
        Configuration {
            digits: (0..self.n).map(|i| self.digit(index, i)).collect(),
        }
    }

    /// Number of sites holding the top symbol.
    pub fn count_top(&self, index: usize) -> usize {
        if self.q() == 2 {
            index.count_ones() as usize
        } else {
            let top = (self.q() - 1) as u8;
            (0..self.n).filter(|&i| self.digit(index, i) == top).count()
        }
    }

    /// Sites of `index` holding the top symbol.
    pub fn top_sites(&self, index: usize) -> SiteSet {
        let top = (self.q() - 1) as u8;
        (0..self.n)
            .filter(|&i| self.digit(index, i) == top)
            .collect()
    }

    pub fn check_sites(&self, k: SiteSet) -> Result<()> {
        if !k.is_subset(self.all_sites()) {
            return input(format!("site set {k:?} not contained in [0, {})", self.n));
        }
        Ok(())
    }
}

impl fmt::Debug for SpaceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S^{}{:?}", self.n, &*self.alphabet)
    }
}

/// A point of `S^n`, stored as alphabet positions.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Configuration {
    digits: Vec<u8>,
}

impl Configuration {
    pub fn from_digits(space: &SpaceSpec, digits: Vec<u8>) -> Result<Configuration> {
        if digits.len() != space.n() {
            return input(format!(
                "expected {} sites, got {}",
                space.n(),
                digits.len()
            ));
        }
        if digits.iter().any(|&d| d as usize >= space.q()) {
            return input("digit outside alphabet");
        }
        Ok(Configuration { digits })
    }

    pub fn from_values(space: &SpaceSpec, values: &[i32]) -> Result<Configuration> {
        if values.len() != space.n() {
            return input(format!(
                "expected {} sites, got {}",
                space.n(),
                values.len()
            ));
        }
        let digits = values
            .iter()
            .map(|&v| space.digit_of(v))
            .collect::<Result<Vec<_>>>()?;
        Ok(Configuration { digits })
    }

    pub fn digits(&self) -> &[u8] {
        &self.digits
    }

    pub fn values(&self, space: &SpaceSpec) -> Vec<i32> {
        self.digits.iter().map(|&d| space.value_of(d)).collect()
    }
}

/// A subset of `S^n`: bit `i` is set iff configuration index `i` is a member.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Event {
    space: SpaceSpec,
    members: Bitset,
}

impl Event {
    pub fn empty(space: &SpaceSpec) -> Event {
        Event {
            space: space.clone(),
            members: Bitset::new(space.size()),
        }
    }

    pub fn full(space: &SpaceSpec) -> Event {
        Event {
            space: space.clone(),
            members: Bitset::full(space.size()),
        }
    }

    pub fn from_bitset(space: &SpaceSpec, members: Bitset) -> Result<Event> {
        if members.len() != space.size() {
            return input(format!(
                "bitset length {} does not match |S|^n = {}",
                members.len(),
                space.size()
            ));
        }
        Ok(Event {
            space: space.clone(),
            members,
        })
    }

    pub fn from_indices(space: &SpaceSpec, idx: impl IntoIterator<Item = usize>) -> Event {
        Event {
            space: space.clone(),
            members: Bitset::from_indices(space.size(), idx),
        }
    }

    pub fn from_predicate(space: &SpaceSpec, mut pred: impl FnMut(usize) -> bool) -> Event {
        Event::from_indices(space, (0..space.size()).filter(|&i| pred(i)))
    }

    pub fn from_configurations<'a>(
        space: &SpaceSpec,
        cs: impl IntoIterator<Item = &'a Configuration>,
    ) -> Event {
        Event::from_indices(space, cs.into_iter().map(|c| space.encode(c)))
    }

    pub fn from_hex(space: &SpaceSpec, hex: &str) -> Result<Event> {
        Ok(Event {
            space: space.clone(),
            members: Bitset::from_hex(space.size(), hex)?,
        })
    }

    pub fn to_hex(&self) -> String {
        self.members.to_hex()
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    pub fn members(&self) -> &Bitset {
        &self.members
    }

    #[inline]
    pub fn contains_index(&self, i: usize) -> bool {
        self.members.contains(i)
    }

    pub fn contains(&self, c: &Configuration) -> bool {
        self.members.contains(self.space.encode(c))
    }

    pub fn len(&self) -> usize {
        self.members.count()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter()
    }

    fn same_space(&self, o: &Event) -> Result<()> {
        if self.space != o.space {
            return Err(Error::SpaceMismatch);
        }
        Ok(())
    }

    pub fn union(&self, o: &Event) -> Result<Event> {
        self.same_space(o)?;
        Ok(self.with_members(self.members.union(&o.members)))
    }

    pub fn intersection(&self, o: &Event) -> Result<Event> {
        self.same_space(o)?;
        Ok(self.with_members(self.members.intersection(&o.members)))
    }

    pub fn difference(&self, o: &Event) -> Result<Event> {
        self.same_space(o)?;
        Ok(self.with_members(self.members.difference(&o.members)))
    }

    pub fn complement(&self) -> Event {
        self.with_members(self.members.complement())
    }

    pub fn is_subset(&self, o: &Event) -> Result<bool> {
        self.same_space(o)?;
        Ok(self.members.is_subset(&o.members))
    }

    pub(crate) fn with_members(&self, members: Bitset) -> Event {
        Event {
            space: self.space.clone(),
            members,
        }
    }
}

impl fmt::Debug for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Event({:?}, 0x{})", self.space, self.to_hex())
    }
}

/// Wire form of an event: space header plus hex bitset.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EventRecord {
    pub space: SpaceHeader,
    pub members: String,
}

impl From<&Event> for EventRecord {
    fn from(e: &Event) -> Self {
        EventRecord {
            space: e.space.clone().into(),
            members: e.to_hex(),
        }
    }
}

impl TryFrom<EventRecord> for Event {
    type Error = Error;

    fn try_from(r: EventRecord) -> Result<Event> {
        let space = SpaceSpec::try_from(r.space)?;
        Event::from_hex(&space, &r.members)
    }
}

/// `[omega]_K`: all configurations agreeing with `omega` on `k`.
pub fn cylinder(space: &SpaceSpec, omega: &Configuration, k: SiteSet) -> Result<Event> {
    space.check_sites(k)?;
    if omega.digits.len() != space.n() {
        return input("configuration length does not match space");
    }
    let sites: Vec<(usize, u8)> = k.iter().map(|i| (i, omega.digits[i])).collect();
    Ok(Event::from_predicate(space, |idx| {
        sites.iter().all(|&(i, d)| space.digit(idx, i) == d)
    }))
}

/// Per-site two-letter restrictions `{beta_i, gamma_i}` on a set of sites.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SitePairing {
    pairs: Vec<Option<(u8, u8)>>,
}

impl SitePairing {
    /// Pairs given as alphabet positions, `None` for sites outside the domain.
    pub fn from_digits(space: &SpaceSpec, pairs: Vec<Option<(u8, u8)>>) -> Result<SitePairing> {
        if pairs.len() != space.n() {
            return input("pairing length does not match space");
        }
        for (i, p) in pairs.iter().enumerate() {
            if let Some((b, g)) = *p {
                if b == g {
                    return input(format!("pairing at site {i} has beta == gamma"));
                }
                if b as usize >= space.q() || g as usize >= space.q() {
                    return input(format!("pairing at site {i} outside alphabet"));
                }
            }
        }
        Ok(SitePairing { pairs })
    }

    pub fn from_values(space: &SpaceSpec, pairs: &[Option<(i32, i32)>]) -> Result<SitePairing> {
        let digits = pairs
            .iter()
            .map(|p| match p {
                Some((b, g)) => Ok(Some((space.digit_of(*b)?, space.digit_of(*g)?))),
                None => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_digits(space, digits)
    }

    /// The pairing `(lowest, highest)` symbol on every site of `sites`.
    pub fn extremes(space: &SpaceSpec, sites: SiteSet) -> SitePairing {
        let top = (space.q() - 1) as u8;
        SitePairing {
            pairs: (0..space.n())
                .map(|i| sites.contains(i).then_some((0, top)))
                .collect(),
        }
    }

    /// Every pairing on `sites`, one representative per unordered pair
    /// (beta < gamma) at each site.
    pub fn enumerate(space: &SpaceSpec, sites: SiteSet) -> Vec<SitePairing> {
        let q = space.q() as u8;
        let choices: Vec<(u8, u8)> = (0..q)
            .flat_map(|b| (b + 1..q).map(move |g| (b, g)))
            .collect();
        let mut out = vec![SitePairing {
            pairs: vec![None; space.n()],
        }];
        for i in sites.iter() {
            out = out
                .into_iter()
                .flat_map(|p| {
                    choices.iter().map(move |&c| {
                        let mut p = p.clone();
                        p.pairs[i] = Some(c);
                        p
                    })
                })
                .collect();
        }
        out
    }

    pub fn sites(&self) -> SiteSet {
        self.pairs
            .iter()
            .enumerate()
            .filter(|(_, p)| p.is_some())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn pair(&self, site: usize) -> Option<(u8, u8)> {
        self.pairs.get(site).copied().flatten()
    }

    /// Swaps a digit within its pair; `None` if the site is paired and the
    /// digit is outside the pair. Unpaired sites are left alone.
    #[inline]
    pub fn swap(&self, site: usize, d: u8) -> Option<u8> {
        match self.pairs[site] {
            None => Some(d),
            Some((b, g)) if d == b => Some(g),
            Some((b, g)) if d == g => Some(b),
            Some(_) => None,
        }
    }
}

/// Swaps every paired site of a configuration within its pair.
pub fn flip_configuration(
    space: &SpaceSpec,
    c: &Configuration,
    pairing: &SitePairing,
) -> Result<Configuration> {
    let _ = space;
    let digits = c
        .digits
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            pairing
                .swap(i, d)
                .ok_or_else(|| Error::Input(format!("site {i} value outside its pair")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Configuration { digits })
}

pub(crate) fn flip_index(space: &SpaceSpec, idx: usize, pairing: &SitePairing) -> Option<usize> {
    let mut out = 0usize;
    for i in 0..space.n() {
        let d = pairing.swap(i, space.digit(idx, i))?;
        out = out * space.q() + d as usize;
    }
    Some(out)
}

/// Image of an event under the flip. Every member must be flippable.
pub fn flip_event(e: &Event, pairing: &SitePairing) -> Result<Event> {
    let space = e.space();
    let mut out = Bitset::new(space.size());
    for idx in e.indices() {
        let f = flip_index(space, idx, pairing)
            .ok_or_else(|| Error::Input(format!("configuration {idx} outside the pairing")))?;
        out.insert(f);
    }
    Ok(e.with_members(out))
}

/// Full complement flip on a binary space: `omega -> 1 - omega` on every site.
pub fn flip_all(e: &Event) -> Result<Event> {
    let space = e.space();
    if !space.is_binary() {
        return Err(Error::Unsupported(
            "full flip needs a binary alphabet".into(),
        ));
    }
    let mask = space.size() - 1;
    Ok(e.with_members(Bitset::from_indices(
        space.size(),
        e.indices().map(|i| i ^ mask),
    )))
}

/// Coordinatewise up-closure test against the declared alphabet order.
pub fn is_increasing(e: &Event) -> bool {
    let space = e.space();
    let top = (space.q() - 1) as u8;
    e.indices().all(|idx| {
        (0..space.n())
            .all(|i| space.digit(idx, i) == top || e.contains_index(idx + space.stride(i)))
    })
}

/// Largest `n` accepted by [`enumerate_increasing`] (n = 6 already has
/// 7 828 354 increasing events).
pub const MAX_INCREASING_N: usize = 5;

/// Every increasing event of a binary space, ordered by cardinality and then
/// by the integer value of the membership bitset.
///
/// Generated as up-closures of antichains: each increasing event is the
/// up-closure of exactly one antichain (its set of minimal elements).
pub fn enumerate_increasing(space: &SpaceSpec) -> Result<Vec<Event>> {
    if !space.is_binary() {
        return Err(Error::Unsupported(
            "increasing-event enumeration needs a binary alphabet".into(),
        ));
    }
    if space.n() > MAX_INCREASING_N {
        return Err(Error::Cap(format!(
            "increasing events enumerated only up to n = {MAX_INCREASING_N}"
        )));
    }
    let size = space.size();
    let mut out = Vec::new();
    let mut chain = Vec::new();
    antichains(size, 0, &mut chain, &mut |ac| {
        let mut b = Bitset::new(size);
        for w in 0..size {
            if ac.iter().any(|&a| a & !w == 0) {
                b.insert(w);
            }
        }
        out.push(b);
    });
    out.sort_by(|a, b| a.count().cmp(&b.count()).then_with(|| a.cmp(b)));
    Ok(out
        .into_iter()
        .map(|b| Event {
            space: space.clone(),
            members: b,
        })
        .collect())
}

fn antichains(size: usize, next: usize, chosen: &mut Vec<usize>, emit: &mut dyn FnMut(&[usize])) {
    emit(chosen);
    for e in next..size {
        if chosen.iter().all(|&c| c & !e != 0 && e & !c != 0) {
            chosen.push(e);
            antichains(size, e + 1, chosen, emit);
            chosen.pop();
        }
    }
}
