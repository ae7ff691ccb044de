//! Measure families on finite spaces, lattice conditions, and the BK / FKG
//! pair checks.
//!
//! Weights are stored unnormalised, scaled so the largest weight is 1. Fields
//! may be infinite: a site with `h = +inf` is pinned to `+1`.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::bitset::Bitset;
use crate::box_ops::{PreparedRule, SelectionRule, WitnessTable};
use crate::config_space::{is_increasing, Event, SpaceSpec};
use crate::error::{input, Error, Result};
use crate::gibbs_potential::{Potential, PotentialSpec};

/// Default relative tolerance for floating-point inequality checks.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Family descriptor, as read from configuration files. Couplings are sparse
/// `(i, j, J_ij)` triples over unordered pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilySpec {
    /// Independent bits on `{0,1}^n` with `P(omega_i = 1) = p_i`.
    Product { p: Vec<f64> },
    /// Uniform on `{omega in {0,1}^n : |omega| = k}`.
    KOutOfN { n: usize, k: usize },
    /// `exp(J sum_{i<j} w_i w_j + sum_i h_i w_i)` on `{-1,+1}^n`.
    CurieWeiss { n: usize, j: f64, h: Vec<f64> },
    /// `exp(h sum w_i + J2 sum_{i<j} w_i w_j + J3 sum_{i<j<k} w_i w_j w_k)`.
    Cw3 { n: usize, h: f64, j2: f64, j3: f64 },
    /// `exp(sum_{i<j} J_ij w_i w_j + sum_i h_i w_i)` on `{-1,+1}^n`.
    Ising {
        n: usize,
        couplings: Vec<(usize, usize, f64)>,
        h: Vec<f64>,
    },
    /// `exp(sum_{i<j} J_ij 1{w_i = w_j})` on `{0,..,q-1}^n`.
    Potts {
        n: usize,
        q: i64,
        couplings: Vec<(usize, usize, f64)>,
    },
    /// `exp(sum_b Phi_b(w_b))`.
    Gibbs { potential: PotentialSpec },
}

impl FamilySpec {
    pub fn name(&self) -> &'static str {
        match self {
            FamilySpec::Product { .. } => "product",
            FamilySpec::KOutOfN { .. } => "k_out_of_n",
            FamilySpec::CurieWeiss { .. } => "curie_weiss",
            FamilySpec::Cw3 { .. } => "cw3",
            FamilySpec::Ising { .. } => "ising",
            FamilySpec::Potts { .. } => "potts",
            FamilySpec::Gibbs { .. } => "gibbs",
        }
    }
}

/// Symmetric zero-diagonal coupling matrix stored sparsely over `i < j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Couplings {
    n: usize,
    map: BTreeMap<(usize, usize), f64>,
}

impl Couplings {
    pub fn from_triples(n: usize, triples: &[(usize, usize, f64)]) -> Result<Couplings> {
        let mut map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(i, j, v) in triples {
            if i >= n || j >= n {
                return input(format!("coupling ({i}, {j}) outside [0, {n})"));
            }
            if !v.is_finite() {
                return input(format!("coupling ({i}, {j}) is not finite"));
            }
            if i == j {
                if v != 0.0 {
                    return input(format!("nonzero diagonal coupling at site {i}"));
                }
                continue;
            }
            let key = (i.min(j), i.max(j));
            match map.get(&key) {
                Some(&old) if old != v => {
                    return input(format!(
                        "coupling matrix not symmetric at ({i}, {j}): {old} vs {v}"
                    ))
                }
                _ => {
                    map.insert(key, v);
                }
            }
        }
        Ok(Couplings { n, map })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.map.get(&(i.min(j), i.max(j))).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.map.iter().map(|(&e, &v)| (e, v))
    }

    pub fn to_triples(&self) -> Vec<(usize, usize, f64)> {
        self.iter().map(|((i, j), v)| (i, j, v)).collect()
    }
}

/// Field vector of length `n`; an empty list means all zero.
pub(crate) fn fields(n: usize, h: &[f64]) -> Result<Vec<f64>> {
    if h.is_empty() {
        return Ok(vec![0.0; n]);
    }
    if h.len() != n {
        return input(format!("expected {n} fields, got {}", h.len()));
    }
    if h.iter().any(|v| v.is_nan()) {
        return input("field is NaN");
    }
    Ok(h.to_vec())
}

pub(crate) fn potts_q(q: i64) -> Result<usize> {
    if q < 2 {
        return input(format!("Potts q must be at least 2, got {q}"));
    }
    Ok(q as usize)
}

/// `h * s` up to a per-site constant, with `h = ±inf` acting as a hard pin.
fn field_term(h: f64, s: f64) -> f64 {
    if h.is_infinite() {
        if h * s > 0.0 {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        h * s
    }
}

/// A probability measure on a finite space, stored as unnormalised weights.
#[derive(Clone, Debug)]
pub struct Measure {
    space: SpaceSpec,
    weights: Vec<f64>,
    total: f64,
    family: Option<FamilySpec>,
}

impl Measure {
    /// Builds a measure from raw nonnegative weights.
    pub fn from_weights(space: &SpaceSpec, weights: Vec<f64>) -> Result<Measure> {
        if weights.len() != space.size() {
            return input(format!(
                "expected {} weights, got {}",
                space.size(),
                weights.len()
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return input("weights must be finite and nonnegative");
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return input("total weight is zero");
        }
        Ok(Measure {
            space: space.clone(),
            weights,
            total,
            family: None,
        })
    }

    /// Exponentiates log-weights after shifting the largest finite one to 0.
    pub fn from_log_weights(space: &SpaceSpec, logw: &[f64]) -> Result<Measure> {
        if logw.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return input("log-weights must be finite or -inf");
        }
        let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return input("every configuration has zero weight");
        }
        Measure::from_weights(space, logw.iter().map(|l| (l - max).exp()).collect())
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, index: usize) -> f64 {
        self.weights[index]
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn family(&self) -> Option<&FamilySpec> {
        self.family.as_ref()
    }

    pub fn prob(&self, index: usize) -> f64 {
        self.weights[index] / self.total
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w / self.total).collect()
    }

    /// Mass of a configuration set given as a bitset over indices.
    pub fn mass(&self, set: &Bitset) -> f64 {
        set.iter().fold(0.0, |a, i| a + self.weights[i]) / self.total
    }

    pub fn probability(&self, e: &Event) -> Result<f64> {
        if e.space() != &self.space {
            return Err(Error::SpaceMismatch);
        }
        Ok(self.mass(e.members()))
    }

    /// Total variation distance to another measure on the same space.
    pub fn tv_distance(&self, o: &Measure) -> Result<f64> {
        if o.space != self.space {
            return Err(Error::SpaceMismatch);
        }
        Ok(0.5
            * (0..self.space.size())
                .map(|i| (self.prob(i) - o.prob(i)).abs())
                .sum::<f64>())
    }
}

fn spin(space: &SpaceSpec, idx: usize, i: usize) -> f64 {
    space.value_of(space.digit(idx, i)) as f64
}

/// Fills the weight table of a family.
pub fn build_measure(spec: &FamilySpec) -> Result<Measure> {
    let (space, logw) = match spec {
        FamilySpec::Product { p } => {
            if p.is_empty() {
                return input("product measure needs at least one site");
            }
            if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return input("product probabilities must lie in [0, 1]");
            }
            let s = SpaceSpec::binary(p.len())?;
            let lw = (0..s.size())
                .map(|idx| {
                    p.iter()
                        .enumerate()
                        .map(|(i, &pi)| {
                            if s.digit(idx, i) == 1 {
                                pi.ln()
                            } else {
                                (1.0 - pi).ln()
                            }
                        })
                        .sum()
                })
                .collect::<Vec<f64>>();
            (s, lw)
        }
        FamilySpec::KOutOfN { n, k } => {
            if k > n {
                return input(format!("k = {k} exceeds n = {n}"));
            }
            let s = SpaceSpec::binary(*n)?;
            let lw = (0..s.size())
                .map(|idx| {
                    if idx.count_ones() as usize == *k {
                        0.0
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect();
            (s, lw)
        }
        FamilySpec::CurieWeiss { n, j, h } => {
            if !j.is_finite() {
                return input("J must be finite");
            }
            let s = SpaceSpec::spins(*n)?;
            let h = fields(*n, h)?;
            let lw = (0..s.size())
                .map(|idx| {
                    let w: Vec<f64> = (0..*n).map(|i| spin(&s, idx, i)).collect();
                    let m: f64 = w.iter().sum();
                    let pairs = (m * m - *n as f64) / 2.0;
                    j * pairs
                        + w.iter()
                            .zip(&h)
                            .map(|(&wi, &hi)| field_term(hi, wi))
                            .sum::<f64>()
                })
                .collect();
            (s, lw)
        }
        FamilySpec::Cw3 { n, h, j2, j3 } => {
            if ![h, j2, j3].iter().all(|v| v.is_finite()) {
                return input("CW3 parameters must be finite");
            }
            let s = SpaceSpec::spins(*n)?;
            let lw = (0..s.size())
                .map(|idx| {
                    let w: Vec<f64> = (0..*n).map(|i| spin(&s, idx, i)).collect();
                    let (mut e1, mut e2, mut e3) = (0.0, 0.0, 0.0);
                    for a in 0..*n {
                        e1 += w[a];
                        for b in a + 1..*n {
                            e2 += w[a] * w[b];
                            for c in b + 1..*n {
                                e3 += w[a] * w[b] * w[c];
                            }
                        }
                    }
                    h * e1 + j2 * e2 + j3 * e3
                })
                .collect();
            (s, lw)
        }
        FamilySpec::Ising { n, couplings, h } => {
            let s = SpaceSpec::spins(*n)?;
            let c = Couplings::from_triples(*n, couplings)?;
            let h = fields(*n, h)?;
            let lw = (0..s.size())
                .map(|idx| {
                    let pair: f64 = c
                        .iter()
                        .map(|((i, j), v)| v * spin(&s, idx, i) * spin(&s, idx, j))
                        .sum();
                    pair + (0..*n)
                        .map(|i| field_term(h[i], spin(&s, idx, i)))
                        .sum::<f64>()
                })
                .collect();
            (s, lw)
        }
        FamilySpec::Potts { n, q, couplings } => {
            let q = potts_q(*q)?;
            let s = SpaceSpec::q_state(*n, q)?;
            let c = Couplings::from_triples(*n, couplings)?;
            let lw = (0..s.size())
                .map(|idx| {
                    c.iter()
                        .filter(|&((i, j), _)| s.digit(idx, i) == s.digit(idx, j))
                        .map(|(_, v)| v)
                        .sum()
                })
                .collect();
            (s, lw)
        }
        FamilySpec::Gibbs { potential } => {
            let phi = Potential::from_spec(potential)?;
            let lw = (0..phi.space().size()).map(|i| phi.energy(i)).collect();
            (phi.space().clone(), lw)
        }
    };
    let mut m = Measure::from_log_weights(&space, &logw)?;
    m.family = Some(spec.clone());
    Ok(m)
}

/// Gibbs measure of a potential.
pub fn gibbs_measure(phi: &Potential) -> Result<Measure> {
    build_measure(&FamilySpec::Gibbs {
        potential: phi.to_spec(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeSign {
    /// `mu(w ∨ w') mu(w ∧ w') <= mu(w) mu(w')`.
    Negative,
    /// The reverse inequality.
    Positive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatticeReport {
    pub holds: bool,
    /// Worst relative violation found (0 when the condition holds strictly).
    pub worst: f64,
    /// A violating pair of configuration indices, if any.
    pub witness: Option<(usize, usize)>,
}

/// Checks the negative or positive lattice condition with relative tolerance
/// `tol`: a pair violates when `lhs > rhs + tol * max(lhs, rhs)`.
pub fn check_lattice_condition(mu: &Measure, sign: LatticeSign, tol: f64) -> Result<LatticeReport> {
    let s = mu.space();
    if !s.is_binary() {
        return Err(Error::Unsupported(
            "lattice conditions need a binary alphabet".into(),
        ));
    }
    let w = mu.weights();
    let mut rep = LatticeReport {
        holds: true,
        worst: 0.0,
        witness: None,
    };
    for a in 0..s.size() {
        for b in a + 1..s.size() {
            if a & b == a || a & b == b {
                continue;
            }
            let meet_join = w[a | b] * w[a & b];
            let pair = w[a] * w[b];
            let (lhs, rhs) = match sign {
                LatticeSign::Negative => (meet_join, pair),
                LatticeSign::Positive => (pair, meet_join),
            };
            let scale = lhs.max(rhs);
            if lhs > rhs + tol * scale {
                let rel = (lhs - rhs) / scale;
                if rep.holds || rel > rep.worst {
                    rep.worst = rel;
                    rep.witness = Some((a, b));
                }
                rep.holds = false;
            }
        }
    }
    Ok(rep)
}

/// Outcome of one `mu(A ⊟ B) <= mu(A) mu(B)` evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BkReport {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

impl BkReport {
    /// `pass` iff `lhs <= rhs + tol * max(1, |rhs|)`.
    pub fn new(lhs: f64, rhs: f64, tol: f64) -> BkReport {
        BkReport {
            lhs,
            rhs,
            margin: rhs - lhs,
            pass: lhs <= rhs + tol * rhs.abs().max(1.0),
        }
    }
}

/// Evaluates `mu(A ⊟ B)` against `mu(A) mu(B)` by enumeration.
pub fn check_bk_pair(
    mu: &Measure,
    a: &Event,
    b: &Event,
    rule: &SelectionRule,
    tol: f64,
) -> Result<BkReport> {
    if a.space() != mu.space() || b.space() != mu.space() {
        return Err(Error::SpaceMismatch);
    }
    let p = rule.prepare(mu.space())?;
    let (ta, tb) = (WitnessTable::new(a)?, WitnessTable::new(b)?);
    Ok(check_bk_prepared(mu, &p, a, b, &ta, &tb, tol))
}

/// As [`check_bk_pair`] with the rule and witness tables already built.
pub fn check_bk_prepared(
    mu: &Measure,
    rule: &PreparedRule,
    a: &Event,
    b: &Event,
    ta: &WitnessTable,
    tb: &WitnessTable,
    tol: f64,
) -> BkReport {
    let lhs = mu.mass(&rule.boxminus(ta, tb));
    let rhs = mu.mass(a.members()) * mu.mass(b.members());
    BkReport::new(lhs, rhs, tol)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FkgReport {
    /// `mu(A ∩ B)`.
    pub joint: f64,
    /// `mu(A) mu(B)`.
    pub product: f64,
    /// `mu(A ∩ B) >= mu(A) mu(B)` within tolerance.
    pub increasing_holds: bool,
    /// `mu(A ∩ B^c) <= mu(A) mu(B^c)` within tolerance (the decreasing form).
    pub decreasing_holds: bool,
}

/// FKG check for increasing `A`, `B`, together with its equivalent form on
/// the decreasing event `B^c`.
pub fn check_fkg_pair(mu: &Measure, a: &Event, b: &Event, tol: f64) -> Result<FkgReport> {
    if a.space() != mu.space() || b.space() != mu.space() {
        return Err(Error::SpaceMismatch);
    }
    if !is_increasing(a) || !is_increasing(b) {
        return input("FKG check needs increasing events");
    }
    let pa = mu.probability(a)?;
    let pb = mu.probability(b)?;
    let joint = mu.mass(&a.members().intersection(b.members()));
    let bc = b.complement();
    let joint_c = mu.mass(&a.members().intersection(bc.members()));
    let product = pa * pb;
    let product_c = pa * (1.0 - pb);
    Ok(FkgReport {
        joint,
        product,
        increasing_holds: product <= joint + tol * product.max(1.0),
        decreasing_holds: joint_c <= product_c + tol * product_c.max(1.0),
    })
}

/// Families with exactly representable weights.
#[derive(Clone, Debug, PartialEq)]
pub enum ExactFamily {
    KOutOfN {
        n: usize,
        k: usize,
    },
    /// Independent bits with rational `P(omega_i = 1)`.
    Product {
        p: Vec<BigRational>,
    },
    /// Curie-Weiss at zero field with `x = exp(-2J)` rational: the weight of a
    /// configuration with `k` plus spins is `x^(k (n - k))` up to a constant.
    CurieWeissZeroField {
        n: usize,
        x: BigRational,
    },
}

/// A measure with rational weights.
#[derive(Clone, Debug)]
pub struct ExactMeasure {
    space: SpaceSpec,
    weights: Vec<BigRational>,
    total: BigRational,
}

impl ExactMeasure {
    pub fn from_weights(space: &SpaceSpec, weights: Vec<BigRational>) -> Result<ExactMeasure> {
        if weights.len() != space.size() {
            return input("weight table length mismatch");
        }
        if weights.iter().any(|w| w.is_negative()) {
            return input("weights must be nonnegative");
        }
        let total = weights.iter().fold(BigRational::zero(), |a, w| a + w);
        if total.is_zero() {
            return input("total weight is zero");
        }
        Ok(ExactMeasure {
            space: space.clone(),
            weights,
            total,
        })
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    pub fn weights(&self) -> &[BigRational] {
        &self.weights
    }

    pub fn mass(&self, set: &Bitset) -> BigRational {
        set.iter()
            .fold(BigRational::zero(), |a, i| a + &self.weights[i])
            / &self.total
    }

    pub fn to_float(&self) -> Result<Measure> {
        use num_traits::ToPrimitive;
        let w = self
            .weights
            .iter()
            .map(|r| (r / &self.total).to_f64().unwrap_or(f64::NAN))
            .collect();
        Measure::from_weights(&self.space, w)
    }
}

pub fn build_exact_measure(spec: &ExactFamily) -> Result<ExactMeasure> {
    match spec {
        ExactFamily::KOutOfN { n, k } => {
            if k > n {
                return input(format!("k = {k} exceeds n = {n}"));
            }
            let s = SpaceSpec::binary(*n)?;
            let w = (0..s.size())
                .map(|i| {
                    if i.count_ones() as usize == *k {
                        BigRational::one()
                    } else {
                        BigRational::zero()
                    }
                })
                .collect();
            ExactMeasure::from_weights(&s, w)
        }
        ExactFamily::Product { p } => {
            if p.is_empty() {
                return input("product measure needs at least one site");
            }
            if p.iter().any(|v| v.is_negative() || v > &BigRational::one()) {
                return input("product probabilities must lie in [0, 1]");
            }
            let s = SpaceSpec::binary(p.len())?;
            let w = (0..s.size())
                .map(|idx| {
                    p.iter()
                        .enumerate()
                        .fold(BigRational::one(), |acc, (i, pi)| {
                            if s.digit(idx, i) == 1 {
                                acc * pi
                            } else {
                                acc * (BigRational::one() - pi)
                            }
                        })
                })
                .collect();
            ExactMeasure::from_weights(&s, w)
        }
        ExactFamily::CurieWeissZeroField { n, x } => {
            if !x.is_positive() {
                return input("x must be positive");
            }
            let s = SpaceSpec::spins(*n)?;
            let w = (0..s.size())
                .map(|idx| {
                    let k = idx.count_ones() as i32;
                    num_traits::pow::Pow::pow(x.clone(), k * (*n as i32 - k))
                })
                .collect();
            ExactMeasure::from_weights(&s, w)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactBkReport {
    pub lhs: BigRational,
    pub rhs: BigRational,
    pub margin: BigRational,
    pub pass: bool,
}

/// Exact `mu(A ⊟ B) <= mu(A) mu(B)`.
pub fn check_bk_exact(
    mu: &ExactMeasure,
    rule: &PreparedRule,
    a: &Event,
    b: &Event,
    ta: &WitnessTable,
    tb: &WitnessTable,
) -> ExactBkReport {
    let lhs = mu.mass(&rule.boxminus(ta, tb));
    let rhs = mu.mass(a.members()) * mu.mass(b.members());
    let margin = &rhs - &lhs;
    ExactBkReport {
        pass: !margin.is_negative(),
        lhs,
        rhs,
        margin,
    }
}

/// Rational `n/d` with `d > 0`.
pub fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}
