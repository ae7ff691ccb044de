//! Hyperedge potentials, the inefficiency predicate and the clusters built
//! from efficient hyperpaths, plus the graph-based spin-cluster and
//! changing-path clusters used for Ising and Potts models.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config_space::{Configuration, SiteSet, SpaceSpec};
use crate::error::{input, Error, Result};
use crate::measures::{Couplings, FamilySpec};
use crate::partition::{Partition, UnionFind};

/// Largest hyperedge accepted in a general potential. The inefficiency test
/// costs `2^|b| * |S|^|b|` per edge and configuration.
pub const MAX_EDGE_SIZE: usize = 6;

/// Slack (relative to the largest table entry) granted to the exchange
/// inequality before an edge is declared efficient.
pub const INEFFICIENCY_TOL: f64 = 1e-12;

/// A potential: a sparse map from hyperedges to value tables.
///
/// Tables are indexed like configurations of the sub-space `S^b`: the sites
/// of `b` in increasing order, lowest site most significant. Edges that are
/// absent are identically zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    space: SpaceSpec,
    terms: BTreeMap<SiteSet, Vec<f64>>,
}

/// Wire form: a list of `(edge site-list, table)` records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub n: usize,
    pub alphabet: Vec<i32>,
    pub terms: Vec<TermSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermSpec {
    pub edge: Vec<usize>,
    pub table: Vec<f64>,
}

impl Potential {
    pub fn new(space: &SpaceSpec) -> Potential {
        Potential {
            space: space.clone(),
            terms: BTreeMap::new(),
        }
    }

    pub fn from_spec(spec: &PotentialSpec) -> Result<Potential> {
        let space = SpaceSpec::new(spec.n, spec.alphabet.clone())?;
        let mut p = Potential::new(&space);
        for t in &spec.terms {
            let b = SiteSet::try_from(t.edge.clone())?;
            if b.len() != t.edge.len() {
                return input(format!("edge {:?} repeats a site", t.edge));
            }
            p.add_term(b, t.table.clone())?;
        }
        Ok(p)
    }

    pub fn to_spec(&self) -> PotentialSpec {
        PotentialSpec {
            n: self.space.n(),
            alphabet: self.space.alphabet().to_vec(),
            terms: self
                .terms
                .iter()
                .map(|(b, t)| TermSpec {
                    edge: b.iter().collect(),
                    table: t.clone(),
                })
                .collect(),
        }
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    pub fn terms(&self) -> &BTreeMap<SiteSet, Vec<f64>> {
        &self.terms
    }

    pub fn term(&self, b: SiteSet) -> Option<&[f64]> {
        self.terms.get(&b).map(|t| t.as_slice())
    }

    fn table_len(&self, b: SiteSet) -> usize {
        self.space.q().pow(b.len() as u32)
    }

    fn check_edge(&self, b: SiteSet) -> Result<()> {
        if b.is_empty() {
            return input("hyperedges must be nonempty");
        }
        self.space.check_sites(b)?;
        if b.len() > MAX_EDGE_SIZE {
            return Err(Error::Cap(format!(
                "hyperedge of size {} exceeds the cap {MAX_EDGE_SIZE}",
                b.len()
            )));
        }
        Ok(())
    }

    /// Sets `Phi_b`, replacing any previous table.
    pub fn add_term(&mut self, b: SiteSet, table: Vec<f64>) -> Result<()> {
        self.check_edge(b)?;
        if table.len() != self.table_len(b) {
            return input(format!(
                "edge {b:?} needs a table of {} entries, got {}",
                self.table_len(b),
                table.len()
            ));
        }
        if table.iter().any(|v| v.is_nan()) {
            return input("potential tables must not contain NaN");
        }
        self.terms.insert(b, table);
        Ok(())
    }

    /// Adds `table` entrywise onto `Phi_b`.
    pub fn accumulate(&mut self, b: SiteSet, table: &[f64]) -> Result<()> {
        self.check_edge(b)?;
        let len = self.table_len(b);
        if table.len() != len {
            return input("table length mismatch");
        }
        let t = self.terms.entry(b).or_insert_with(|| vec![0.0; len]);
        for (a, v) in t.iter_mut().zip(table) {
            *a += v;
        }
        Ok(())
    }

    /// Removes edges whose table is identically zero.
    pub fn prune_zero(&mut self) {
        self.terms.retain(|_, t| t.iter().any(|&v| v != 0.0));
    }

    /// Position of `omega_b` inside the table of `b`.
    #[inline]
    pub fn local_index(&self, b: SiteSet, index: usize) -> usize {
        local_index(&self.space, b, index)
    }

    pub fn value(&self, b: SiteSet, index: usize) -> f64 {
        self.terms
            .get(&b)
            .map_or(0.0, |t| t[self.local_index(b, index)])
    }

    /// `sum_b Phi_b(omega_b)`.
    pub fn energy(&self, index: usize) -> f64 {
        self.terms
            .iter()
            .map(|(&b, t)| t[self.local_index(b, index)])
            .sum()
    }
}

#[inline]
pub(crate) fn local_index(space: &SpaceSpec, b: SiteSet, index: usize) -> usize {
    b.iter()
        .fold(0, |acc, i| acc * space.q() + space.digit(index, i) as usize)
}

/// Digits of a local table index for an edge of `m` sites.
fn local_digits(q: usize, m: usize, mut local: usize) -> Vec<u8> {
    let mut d = vec![0u8; m];
    for slot in d.iter_mut().rev() {
        *slot = (local % q) as u8;
        local /= q;
    }
    d
}

/// Exchange-inequality test on one table, `local` being `omega_b`.
fn inefficient_local(table: &[f64], q: usize, m: usize, local: usize) -> bool {
    if m < 2 {
        return false;
    }
    let lo = table.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = table.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return true;
    }
    let scale = table.iter().fold(0f64, |a, v| a.max(v.abs()));
    let tol = INEFFICIENCY_TOL * (1.0 + scale);
    let w = local_digits(q, m, local);
    let stride: Vec<usize> = (0..m).map(|k| q.pow((m - 1 - k) as u32)).collect();
    let phi_w = table[local];
    for sigma in 0..table.len() {
        let s = local_digits(q, m, sigma);
        let phi_s = table[sigma];
        for nmask in 0u32..(1 << m) {
            let (mut a, mut c) = (0usize, 0usize);
            for k in 0..m {
                let (x, y) = if (nmask >> k) & 1 == 1 {
                    (w[k], s[k])
                } else {
                    (s[k], w[k])
                };
                a += x as usize * stride[k];
                c += y as usize * stride[k];
            }
            if phi_w + phi_s > table[a] + table[c] + tol {
                return false;
            }
        }
    }
    true
}

/// Whether `b` is inefficient for `omega`: `|b| >= 2` and the exchange
/// inequality `Phi(w_b) + Phi(s) <= Phi(w_N o s_{b\N}) + Phi(s_N o w_{b\N})`
/// holds for every `N` and every `s`. Absent edges are constant, hence
/// inefficient; singletons never are.
pub fn is_inefficient(phi: &Potential, b: SiteSet, omega: &Configuration) -> Result<bool> {
    if b.is_empty() {
        return input("empty hyperedge");
    }
    phi.space.check_sites(b)?;
    if b.len() < 2 {
        return Ok(false);
    }
    let Some(table) = phi.term(b) else {
        return Ok(true);
    };
    let idx = phi.space.encode(omega);
    Ok(inefficient_local(
        table,
        phi.space.q(),
        b.len(),
        phi.local_index(b, idx),
    ))
}

/// Efficiency of every stored multi-site edge for every local configuration,
/// so cluster queries over many configurations only pay the exchange test once.
#[derive(Clone, Debug)]
pub struct PreparedPotential {
    n: usize,
    space: SpaceSpec,
    edges: Vec<(SiteSet, Vec<bool>)>,
}

impl PreparedPotential {
    pub fn new(phi: &Potential) -> PreparedPotential {
        let q = phi.space.q();
        let edges = phi
            .terms
            .iter()
            .filter(|(b, _)| b.len() >= 2)
            .map(|(&b, t)| {
                let eff = (0..t.len())
                    .map(|l| !inefficient_local(t, q, b.len(), l))
                    .collect::<Vec<_>>();
                (b, eff)
            })
            .filter(|(_, eff)| eff.iter().any(|&e| e))
            .collect();
        PreparedPotential {
            n: phi.space.n(),
            space: phi.space.clone(),
            edges,
        }
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    /// Components of the hypergraph of efficient edges at `index`.
    pub fn partition(&self, index: usize) -> Partition {
        let mut uf = UnionFind::new(self.n);
        for (b, eff) in &self.edges {
            if eff[local_index(&self.space, *b, index)] {
                uf.union_all(*b);
            }
        }
        Partition::from_union_find(self.n, &mut uf)
    }
}

/// `C(K)`: every site reachable from `k` by a hyperpath of efficient edges.
pub fn efficient_cluster(phi: &Potential, omega: &Configuration, k: SiteSet) -> Result<SiteSet> {
    phi.space.check_sites(k)?;
    let idx = phi.space.encode(omega);
    Ok(PreparedPotential::new(phi).partition(idx).closure(k))
}

/// Ising or Potts canonical potential. Zero terms are omitted.
pub fn canonical_potential(family: &FamilySpec) -> Result<Potential> {
    match family {
        FamilySpec::Ising { n, couplings, h } => {
            let space = SpaceSpec::spins(*n)?;
            let c = Couplings::from_triples(*n, couplings)?;
            let h = crate::measures::fields(*n, h)?;
            let mut p = Potential::new(&space);
            for (i, &hi) in h.iter().enumerate() {
                if hi != 0.0 {
                    p.add_term(SiteSet::singleton(i), vec![-hi, hi])?;
                }
            }
            for ((i, j), v) in c.iter() {
                if v != 0.0 {
                    p.add_term(SiteSet::from_iter([i, j]), vec![v, -v, -v, v])?;
                }
            }
            Ok(p)
        }
        FamilySpec::Potts { n, q, couplings } => {
            let q = crate::measures::potts_q(*q)?;
            let space = SpaceSpec::q_state(*n, q)?;
            let c = Couplings::from_triples(*n, couplings)?;
            let mut p = Potential::new(&space);
            for ((i, j), v) in c.iter() {
                if v != 0.0 {
                    let table = (0..q * q)
                        .map(|l| if l / q == l % q { v } else { 0.0 })
                        .collect();
                    p.add_term(SiteSet::from_iter([i, j]), table)?;
                }
            }
            Ok(p)
        }
        _ => Err(Error::Unsupported(
            "canonical potentials exist for Ising and Potts families only".into(),
        )),
    }
}

/// An undirected simple graph on `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct InteractionGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl InteractionGraph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut es: Vec<(usize, usize)> = Vec::new();
        for (a, b) in edges {
            if a == b || a >= n || b >= n {
                return input(format!("bad graph edge ({a}, {b}) on {n} vertices"));
            }
            let e = (a.min(b), a.max(b));
            if !es.contains(&e) {
                es.push(e);
            }
        }
        es.sort_unstable();
        Ok(InteractionGraph { n, edges: es })
    }

    /// Edges `{i, j}` with `J_ij > 0`.
    pub fn ferromagnetic(c: &Couplings) -> InteractionGraph {
        InteractionGraph {
            n: c.n(),
            edges: c.iter().filter(|&(_, v)| v > 0.0).map(|(e, _)| e).collect(),
        }
    }

    /// Edges `{i, j}` with `J_ij != 0`.
    pub fn support(c: &Couplings) -> InteractionGraph {
        InteractionGraph {
            n: c.n(),
            edges: c
                .iter()
                .filter(|&(_, v)| v != 0.0)
                .map(|(e, _)| e)
                .collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbours(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter_map(move |&(a, b)| {
            if a == v {
                Some(b)
            } else if b == v {
                Some(a)
            } else {
                None
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterKind {
    /// Monochromatic connectivity.
    IsingSpin,
    /// Connectivity along edges whose endpoints carry different values.
    PottsChanging,
}

pub fn specialized_partition(
    kind: ClusterKind,
    graph: &InteractionGraph,
    space: &SpaceSpec,
    index: usize,
) -> Partition {
    let mut uf = UnionFind::new(graph.n);
    for &(a, b) in &graph.edges {
        let same = space.digit(index, a) == space.digit(index, b);
        let join = match kind {
            ClusterKind::IsingSpin => same,
            ClusterKind::PottsChanging => !same,
        };
        if join {
            uf.union(a, b);
        }
    }
    Partition::from_union_find(graph.n, &mut uf)
}

pub fn specialized_cluster(
    kind: ClusterKind,
    graph: &InteractionGraph,
    space: &SpaceSpec,
    omega: &Configuration,
    k: SiteSet,
) -> Result<SiteSet> {
    if graph.n != space.n() {
        return Err(Error::SpaceMismatch);
    }
    space.check_sites(k)?;
    Ok(specialized_partition(kind, graph, space, space.encode(omega)).closure(k))
}
