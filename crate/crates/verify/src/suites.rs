//! Named verification suites. Every instance draws its randomness from
//! `ChaCha8Rng::seed_from_u64(seed + stream)` with a fixed per-instance
//! stream number, so a single instance can be re-run in isolation.

use std::collections::HashMap;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use bkcert::*;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{parse_ratio, SuiteConfig, SuiteName};
use crate::paths::{
    corollary_19_check, four_arm_check, punctured_box, Corollary19Instance, FourArmInstance,
};
use crate::report::{CheckRecord, Summary};

/// Relative deviation allowed when validating a base against its measure.
pub const RCR_TOL: f64 = 1e-10;

/// Float `xi_j` with `|xi_j| <= SNAP * max p` are read as zero.
pub const SNAP: f64 = 1e-12;

const CW_J_GRID: [f64; 4] = [0.0, -0.5, -1.0, -2.0];
const CW_EXACT_X: [&str; 4] = ["1", "2", "11/4", "7"];
const XI_EXACT_X: [&str; 6] = ["1", "11/10", "3/2", "2", "5", "10"];
const FOUR_ARM_J: [f64; 3] = [0.2, 0.5, 1.0];

pub struct SuiteRun {
    pub records: Vec<CheckRecord>,
    pub summary: Summary,
}

struct Ctx<'a> {
    cfg: &'a SuiteConfig,
    tol: f64,
    instance: Option<&'a str>,
}

impl Ctx<'_> {
    fn wants(&self, id: &str) -> bool {
        self.instance.is_none_or(|i| i == id)
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.cfg.seed.wrapping_add(stream))
    }

    fn samples(&self, default: usize) -> usize {
        self.cfg.sweep.samples.unwrap_or(default)
    }

    fn pairs(&self, default: usize) -> usize {
        self.cfg.sweep.pairs.unwrap_or(default)
    }
}

/// Runs a suite, optionally restricted to the instance with id `instance`.
pub fn run_suite(cfg: &SuiteConfig, instance: Option<&str>) -> Result<SuiteRun> {
    cfg.validate()?;
    let ctx = Ctx {
        cfg,
        tol: cfg.tolerance(),
        instance,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cfg.jobs {
        pool = pool.num_threads(j);
    }
    let pool = pool.build().context("building the thread pool")?;
    let records = pool.install(|| match cfg.suite {
        SuiteName::ReimerN3 => reimer_n3(&ctx),
        SuiteName::KnBk => kn_bk(&ctx),
        SuiteName::CwBkN4 => cw_bk_n4(&ctx),
        SuiteName::Cw3BkN4 => cw3_bk_n4(&ctx),
        SuiteName::IsingBoxminusN3 => ising_boxminus_n3(&ctx),
        SuiteName::PottsAfN3 => potts_af_n3(&ctx),
        SuiteName::GibbsN4 => gibbs_n4(&ctx),
        SuiteName::RcrConditions => rcr_conditions(&ctx),
        SuiteName::Xi => xi_suite(&ctx),
        SuiteName::FourArm => four_arm(&ctx, 1),
        SuiteName::FourArmK2 => four_arm(&ctx, 2),
        SuiteName::Corollary19 => corollary19(&ctx),
    })?;
    if let Some(id) = instance {
        if records.is_empty() {
            bail!("suite {} has no instance {id:?}", cfg.suite.as_str());
        }
    }
    let summary = Summary::from_records(cfg.suite.as_str(), cfg.seed, ctx.tol, &records);
    Ok(SuiteRun { records, summary })
}

fn timed(f: impl FnOnce() -> Result<CheckRecord>) -> Result<CheckRecord> {
    let start = Instant::now();
    let mut rec = f()?;
    rec.elapsed_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    Ok(rec)
}

/// All `2^size` events of a small space, indexed by membership mask.
fn all_events(space: &SpaceSpec) -> Vec<Event> {
    let size = space.size();
    assert!(size <= 16);
    (0..1usize << size)
        .map(|m| Event::from_predicate(space, |i| m >> i & 1 == 1))
        .collect()
}

fn random_event(space: &SpaceSpec, rng: &mut ChaCha8Rng) -> Event {
    Event::from_predicate(space, |_| rng.gen::<bool>())
}

fn tables(events: &[Event]) -> Result<Vec<WitnessTable>> {
    events
        .iter()
        .map(|e| WitnessTable::new(e).map_err(Into::into))
        .collect()
}

/// Worst pair of a sweep over event pairs: smallest margin, then largest
/// `rhs`, then smallest index pair.
#[derive(Clone, Debug)]
struct Worst {
    pairs: usize,
    failures: usize,
    margin: f64,
    lhs: f64,
    rhs: f64,
    at: (usize, usize),
    a: String,
    b: String,
}

impl Worst {
    fn new() -> Worst {
        Worst {
            pairs: 0,
            failures: 0,
            margin: f64::INFINITY,
            lhs: 0.0,
            rhs: 0.0,
            at: (usize::MAX, usize::MAX),
            a: String::new(),
            b: String::new(),
        }
    }

    fn beats(&self, o: &Worst) -> bool {
        (self.margin, -self.rhs, self.at) < (o.margin, -o.rhs, o.at)
    }

    fn add(&mut self, r: &BkReport, at: (usize, usize)) {
        self.pairs += 1;
        if !r.pass {
            self.failures += 1;
        }
        let cand = Worst {
            margin: r.margin,
            lhs: r.lhs,
            rhs: r.rhs,
            at,
            ..Worst::new()
        };
        if cand.beats(self) {
            self.margin = cand.margin;
            self.lhs = cand.lhs;
            self.rhs = cand.rhs;
            self.at = at;
        }
    }

    fn merge(mut self, o: Worst) -> Worst {
        self.pairs += o.pairs;
        self.failures += o.failures;
        if o.beats(&self) {
            self.margin = o.margin;
            self.lhs = o.lhs;
            self.rhs = o.rhs;
            self.at = o.at;
        }
        self
    }

    fn detail(&self) -> Value {
        json!({
            "pairs": self.pairs,
            "failures": self.failures,
            "worst_a": self.a,
            "worst_b": self.b,
        })
    }

    fn record(&self, id: String, params: Value, tol: f64) -> CheckRecord {
        let mut rec = CheckRecord::new(id, params, self.lhs, self.rhs, tol);
        rec.pass &= self.failures == 0;
        rec.with_detail(self.detail())
    }
}

/// BK sweep of `mu(A ⊟ B) <= mu(A) mu(B)` over index pairs, with the boxes
/// supplied by `boxes`.
fn bk_sweep(
    mu: &Measure,
    events: &[Event],
    pairs: &[(usize, usize)],
    tol: f64,
    boxes: impl Fn(usize) -> Bitset + Sync,
) -> Worst {
    let p: Vec<f64> = events.iter().map(|e| mu.mass(e.members())).collect();
    let mut w = pairs
        .par_iter()
        .enumerate()
        .fold(Worst::new, |mut w, (t, &(i, j))| {
            let r = BkReport::new(mu.mass(&boxes(t)), p[i] * p[j], tol);
            w.add(&r, (i, j));
            w
        })
        .reduce(Worst::new, Worst::merge);
    if w.pairs > 0 {
        w.a = events[w.at.0].to_hex();
        w.b = events[w.at.1].to_hex();
    }
    w
}

fn all_pairs(len: usize) -> Vec<(usize, usize)> {
    (0..len)
        .flat_map(|i| (0..len).map(move |j| (i, j)))
        .collect()
}

// ---------------------------------------------------------------- reimer

fn reimer_n3(ctx: &Ctx) -> Result<Vec<CheckRecord>> {
    let s = SpaceSpec::binary(3)?;
    let events = all_events(&s);
    let ids: Vec<(usize, usize, String)> = all_pairs(events.len())
        .into_iter()
        .map(|(i, j)| (i, j, format!("reimer-n3/a={i:02x}/b={j:02x}")))
        .filter(|(_, _, id)| ctx.wants(id))
        .collect();
    ids.into_par_iter()
        .map(|(i, j, id)| {
            timed(|| {
                let (a, b) = (&events[i], &events[j]);
                let (lhs, rhs) = reimer_gap(a, b)?;
                Ok(CheckRecord::new(
                    id,
                    json!({ "a": a.to_hex(), "b": b.to_hex() }),
                    lhs as f64,
                    rhs as f64,
                    ctx.tol,
                ))
            })
        })
        .collect()
}

// ---------------------------------------------------------------- k-out-of-n

fn kn_bk(ctx: &Ctx) -> Result<Vec<CheckRecord>> {
    let n_max = ctx.cfg.sweep.n_max.unwrap_or(4);
    let mut out = Vec::new();
    for n in 1..=n_max {
        let ids: Vec<(usize, String)> = (0..=n)
            .map(|k| (k, format!("kn-bk/n={n}/k={k}")))
            .filter(|(_, id)| ctx.wants(id))
            .collect();
        if ids.is_empty() {
            continue;
        }
        let s = SpaceSpec::binary(n)?;
        let inc = enumerate_increasing(&s)?;
        let tabs = tables(&inc)?;
        let rule = SelectionRule::Full.prepare(&s)?;
        let pairs = all_pairs(inc.len());
        let boxes: Vec<Bitset> = pairs
            .par_iter()
            .map(|&(i, j)| rule.boxminus(&tabs[i], &tabs[j]))
            .collect();
        for (k, id) in ids {
            out.push(timed(|| {
                let mu = build_exact_measure(&ExactFamily::KOutOfN { n, k })?;
                let p: Vec<BigRational> = inc.iter().map(|e| mu.mass(e.members())).collect();
                let worst = pairs
                    .par_iter()
                    .zip(&boxes)
                    .map(|(&(i, j), bx)| {
                        let lhs = mu.mass(bx);
                        let rhs = &p[i] * &p[j];
                        (&rhs - &lhs, lhs, rhs, i, j)
                    })
                    .min_by(|x, y| x.0.cmp(&y.0).then((x.3, x.4).cmp(&(y.3, y.4))))
                    .expect("at least one increasing pair");
                let (margin, lhs, rhs, i, j) = worst;
                let failures = pairs
                    .par_iter()
                    .zip(&boxes)
                    .filter(|(&(i, j), bx)| mu.mass(bx) > &p[i] * &p[j])
                    .count();
                let f = |r: &BigRational| r.to_f64().unwrap_or(f64::NAN);
                Ok(CheckRecord::flag(
                    id,
                    json!({ "n": n, "k": k }),
                    failures == 0 && !margin.is_negative(),
                    f(&lhs),
                    f(&rhs),
                )
                .with_detail(json!({
                    "pairs": pairs.len(),
                    "failures": failures,
                    "min_margin_exact": margin.to_string(),
                    "worst_a": inc[i].to_hex(),
                    "worst_b": inc[j].to_hex(),
                })))
            })?);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- Curie-Weiss

struct Increasing {
    events: Vec<Event>,
    pairs: Vec<(usize, usize)>,
    boxes: Vec<Bitset>,
}

impl Increasing {
    fn spins(n: usize) -> Result<Increasing> {
        let space = SpaceSpec::spins(n)?;
        let events = enumerate_increasing(&space)?;
        let tables = tables(&events)?;
        let pairs = all_pairs(events.len());
        let rule = SelectionRule::Full.prepare(&space)?;
        let boxes = pairs
            .par_iter()
            .map(|&(i, j)| rule.boxminus(&tables[i], &tables[j]))
            .collect();
        Ok(Increasing {
            events,
            pairs,
            boxes,
        })
    }

    fn sweep(&self, mu: &Measure, tol: f64) -> Worst {
        bk_sweep(mu, &self.events, &self.pairs, tol, |t| {
            self.boxes[t].clone()
        })
    }
}

/// A Curie-Weiss instance on four spins.
#[derive(Clone, Debug)]
struct CwInstance {
    id: String,
    j: f64,
    h: Vec<f64>,
    stream: u64,
}

fn cw_instances(ctx: &Ctx, prefix: &str) -> Vec<CwInstance> {
    let grid = ctx.cfg.sweep.j_grid.clone().unwrap_or(CW_J_GRID.to_vec());
    let samples = ctx.samples(50);
    let mut out = Vec::new();
    for (g, &j) in grid.iter().enumerate() {
        for t in 0..samples {
            let stream = 1_000_000 + (g * 10_000 + t) as u64;
            let mut rng = ctx.rng(stream);
            let h = (0..4).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            out.push(CwInstance {
                id: format!("{prefix}/j={j:+.3}/h{t:03}"),
                j,
                h,
                stream,
            });
        }
    }
    out
}

fn cw_bk_n4(ctx: &Ctx) -> Result<Vec<CheckRecord>> {
    let inst: Vec<CwInstance> = cw_instances(ctx, "cw-bk-n4")
        .into_iter()
        .filter(|c| ctx.wants(&c.id))
        .collect();
    let xs: Vec<(String, String)> = ctx
        .cfg
        .sweep
        .x_grid
        .clone()
        .unwrap_or(CW_EXACT_X.iter().map(|s| s.to_string()).collect())
        .into_iter()
        .map(|x| (format!("cw-bk-n4/exact/x={}", x.replace('/', ":")), x))
        .filter(|(id, _)| ctx.wants(id))
        .collect();
    if inst.is_empty() && xs.is_empty() {
        return Ok(Vec::new());
    }
    let inc = Increasing::spins(4)?;
    let mut out = Vec::new();
    for c in inst {
        out.push(timed(|| {
            let mu = build_measure(&FamilySpec::CurieWeiss {
                n: 4,
                j: c.j,
                h: c.h.clone(),
            })?;
            let params = json!({ "n": 4, "j": c.j, "h": c.h, "stream": c.stream });
            Ok(inc
                .sweep(&mu, ctx.tol)
                .record(c.id.clone(), params, ctx.tol))
        })?);
    }
    for (id, xs) in xs {
        out.push(timed(|| {
            let x = parse_ratio(&xs)?;
            let mu = build_exact_measure(&ExactFamily::CurieWeissZeroField { n: 4, x })?;
            let p: Vec<BigRational> = inc.events.iter().map(|e| mu.mass(e.members())).collect();
            let mut failures = 0;
            let mut worst: Option<(BigRational, BigRational, BigRational)> = None;
            for (&(i, j), bx) in inc.pairs.iter().zip(&inc.boxes) {
                let lhs = mu.mass(bx);
                let rhs = &p[i] * &p[j];
                let m = &rhs - &lhs;
                if m.is_negative() {
                    failures += 1;
                }
                if worst.as_ref().is_none_or(|w| m < w.0) {
                    worst = Some((m, lhs, rhs));
                }
            }
            let (m, lhs, rhs) = worst.expect("pairs");
            let f = |r: &BigRational| r.to_f64().unwrap_or(f64::NAN);
            Ok(CheckRecord::flag(
                id,
                json!({ "n": 4, "x": xs }),
                failures == 0,
                f(&lhs),
                f(&rhs),
            )
            .with_detail(json!({
                "pairs": inc.pairs.len(),
                "failures": failures,
                "min_margin_exact": m.to_string(),
            })))
        })?);
    }
    Ok(out)
}

fn cw3_bk_n4(ctx: &Ctx) -> Result<Vec<CheckRecord>> {
    let samples = ctx.samples(100);
    let ids: Vec<(usize, String)> = (0..samples)
        .map(|t| (t, format!("cw3-bk-n4/t{t:03}")))
        .filter(|(_, id)| ctx.wants(id))
        .collect();
    if ids.is_empty() {
        return Ok(Vec::new());
    }
    let inc = Increasing::spins(4)?;
    let mut out = Vec::new();
    for (t, id) in ids {
        out.push(timed(|| {
            let stream = 2_000_000 + t as u64;
            let mut rng = ctx.rng(stream);
            let h = rng.gen_range(-1.0..=1.0);
            let j2 = rng.gen_range(-1.5..=0.5);
            let j3 = rng.gen_range(-0.5..=0.5);
            let params = json!({ "n": 4, "h": h, "j2": j2, "j3": j3, "stream": stream });
            let mu = build_measure(&FamilySpec::Cw3 { n: 4, h, j2, j3 })?;
            let nlc = check_lattice_condition(&mu, LatticeSign::Negative, 1e-12)?;
            if !nlc.holds {
                return Ok(CheckRecord::skip(
                    id,
                    params,
                    json!({ "reason": "negative lattice condition fails", "worst": nlc.worst, "witness": nlc.witness }),
                ));
            }
            Ok(inc.sweep(&mu, ctx.tol).record(id, params, ctx.tol))
        })?);
    }
    Ok(out)
}

// ---------------------------------------------------------------- Ising, Potts, Gibbs

const TRIANGLE: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

#[derive(Clone, Debug)]
struct IsingInstance {
    id: String,
    couplings: Vec<(usize, usize, f64)>,
    h: Vec<f64>,
    stream: u64,
}

impl IsingInstance {
    fn family(&self) -> FamilySpec {
        FamilySpec::Ising {
            n: 3,
            couplings: self.couplings.clone(),
            h: self.h.clone(),
        }
    }

    fn params(&self) -> Value {
        json!({ "n": 3, "couplings": self.couplings, "h": self.h, "stream": self.stream })
    }
}

/// Ferromagnetic triangles: each `J` is `0` with probability 1/3 and uniform
/// on `(0, 1.5]` otherwise; fields uniform on `[-1, 1]`.
fn ising_instances(ctx: &Ctx, prefix: &str) -> Vec<IsingInstance> {
    (0..ctx.samples(25))
        .map(|t| {
            let stream = 3_000_000 + t as u64;
            let mut rng = ctx.rng(stream);
            let couplings = TRIANGLE
                .iter()
                .map(|&(a, b)| {
                    let j = if rng.gen_bool(1.0 / 3.0) {
                        0.0
                    } else {
                        1.5 - rng.gen_range(0.0..1.5)
                    };
                    (a, b, j)
                })
                .collect();
            let h = (0..3).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            IsingInstance {
                id: format!("{prefix}/s{t:02}"),
                couplings,
                h,
                stream,
            }
        })
        .collect()
}

fn ising_boxminus_n3(ctx: &Ctx) -> Result<Vec<CheckRecord>> {
    let inst: Vec<_> = ising_instances(ctx, "ising-boxminus-n3")
        .into_iter()
        .filter(|c| ctx.wants(&c.id))
        .collect();
    if inst.is_empty() {
        return Ok(Vec::new());
    }
    let s = SpaceSpec::spins(3)?;
    let events = all_events(&s);
    let tabs = tables(&events)?;
    let pairs = all_pairs(events.len());
    let increasing: Vec<usize> = (0..events.len())
        .filter(|&i| is_increasing(&events[i]))
        .collect();
    let mut out = Vec::new();
    for c in inst {
        out.push(timed(|| {
            let family = c.family();
            let mu = build_measure(&family)?;
            let g = InteractionGraph::ferromagnetic(&Couplings::from_triples(3, &c.couplings)?);
            let spin = SelectionRule::SpinCluster(g).prepare(&s)?;
            let cluster =
                SelectionRule::ClusterDisjoint(canonical_potential(&family)?).prepare(&s)?;
            let boxes: Vec<Bitset> = pairs
                .par_iter()
                .map(|&(i, j)| spin.boxminus(&tabs[i], &tabs[j]))
                .collect();
            let disagreements = pairs
                .par_iter()
                .zip(&boxes)
                .filter(|(&(i, j), bx)| cluster.boxminus(&tabs[i], &tabs[j]) != **bx)
                .count();
            let worst = bk_sweep(&mu, &events, &pairs, ctx.tol, |t| boxes[t].clone());
            let mask = events.len() - 1;
            let mut fkg_pairs = 0;
            let mut fkg_mismatch = 0;
            for &i in &increasing {
                for &d in &increasing {
                    // complements of increasing events are decreasing
                    let j = !d & mask;
                    fkg_pairs += 1;
                    let both = events[i].intersection(&events[j])?;
                    if boxes[i * events.len() + j] != *both.members() {
                        fkg_mismatch += 1;
                    }
                }
            }
            let mut rec = worst.record(c.id.clone(), c.params(), ctx.tol);
            rec.pass &= disagreements == 0 && fkg_mismatch == 0;
            let mut d = worst.detail();
            d["rule_disagreements"] = json!(disagreements);
            d["fkg_pairs"] = json!(fkg_pairs);
            d["fkg_mismatches"] = json!(fkg_mismatch);
            Ok(rec.with_detail(d))
        })?);
    }
    Ok(out)
}

/// All distinct cylinders `[omega]_K` of a space.
fn cylinders(space: &SpaceSpec) -> Result<Vec<Event>> {
    let mut out: Vec<Event> = Vec::new();
    for k in space.all_sites().subsets() {
        for idx in 0..space.size() {
            let c = cylinder(space, &space.decode(idx), k)?;
            if !out.contains(&c) {
                out.push(c);
            }
        }
    }
    Ok(out)
}

fn potts_af_n3(ctx: &Ctx) -> Result<Vec<CheckRecord>> {
    let ids: Vec<(usize, String)> = (0..ctx.samples(10))
        .map(|t| (t, format!("potts-af-n3/s{t:02}")))
        .filter(|(_, id)| ctx.wants(id))
        .collect();
    if ids.is_empty() {
        return Ok(Vec::new());
    }
    let s = SpaceSpec::q_state(3, 3)?;
    let cyl = cylinders(&s)?;
    let mut out = Vec::new();
    for (t, id) in ids {
        out.push(timed(|| {
            let stream = 4_000_000 + t as u64;
            let mut rng = ctx.rng(stream);
            let couplings: Vec<_> = TRIANGLE
                .iter()
                .map(|&(a, b)| (a, b, -rng.gen_range(0.0..=1.5)))
                .collect();
            let n_random = ctx.pairs(2000);
            let mut events: Vec<Event> = cyl.clone();
            let mut pairs = all_pairs(cyl.len());
            for _ in 0..n_random {
                let i = events.len();
                events.push(random_event(&s, &mut rng));
                events.push(random_event(&s, &mut rng));
                pairs.push((i, i + 1));
            }
            let family = FamilySpec::Potts {
                n: 3,
                q: 3,
                couplings: couplings.clone(),
            };
            let mu = build_measure(&family)?;
            let tabs = tables(&events)?;
            let g = InteractionGraph::support(&Couplings::from_triples(3, &couplings)?);
            let path = SelectionRule::ChangingPath(g).prepare(&s)?;
            let cluster = SelectionRule::ClusterDisjoint(canonical_potential(&family)?).prepare(&s)?;
            let boxes: Vec<Bitset> = pairs
                .par_iter()
                .map(|&(i, j)| path.boxminus(&tabs[i], &tabs[j]))
                .collect();
            let disagreements = pairs
                .par_iter()
                .zip(&boxes)
                .filter(|(&(i, j), bx)| cluster.boxminus(&tabs[i], &tabs[j]) != **bx)
                .count();
            let worst = bk_sweep(&mu, &events, &pairs, ctx.tol, |t| boxes[t].clone());
            let params = json!({ "n": 3, "q": 3, "couplings": couplings, "random_pairs": n_random, "stream": stream });
            let mut rec = worst.record(id, params, ctx.tol);
            rec.pass &= disagreements == 0;
            let mut d = worst.detail();
            d["cylinder_pairs"] = json!(cyl.len() * cyl.len());
            d["rule_disagreements"] = json!(disagreements);
            Ok(rec.with_detail(d))
        })?);
    }
    Ok(out)
}

/// Random potential: `n` in {3, 4}, `q` in {2, 3}, four hyperedges of size
/// 1 to 3 with tables uniform on `[-1, 1]`.
fn random_potential(rng: &mut ChaCha8Rng) -> Result<Potential> {
    let n = rng.gen_range(3..=4);
    let q = rng.gen_range(2..=3);
    let s = SpaceSpec::q_state(n, q)?;
    let mut phi = Potential::new(&s);
    let sites: Vec<usize> = (0..n).collect();
    for _ in 0..4 {
        let size = rng.gen_range(1..=3);
        let b: SiteSet = sites.choose_multiple(rng, size).copied().collect();
        let table: Vec<f64> = (0..q.pow(size as u32))
            .map(|_| rng.gen_range(-1.0..=1.0))
            .collect();
        phi.accumulate(b, &table)?;
    }
    Ok(phi)
}

fn gibbs_n4(ctx: &Ctx) -> Result<Vec<CheckRecord>> {
    let ids: Vec<(usize, String)> = (0..ctx.samples(20))
        .map(|t| (t, format!("gibbs-n4/p{t:02}")))
        .filter(|(_, id)| ctx.wants(id))
        .collect();
    let mut out = Vec::new();
    for (t, id) in ids {
        out.push(timed(|| {
            let stream = 5_000_000 + t as u64;
            let mut rng = ctx.rng(stream);
            let phi = random_potential(&mut rng)?;
            let s = phi.space().clone();
            let mu = gibbs_measure(&phi)?;
            let nu = gibbs_base(&phi)?;
            let valid = validate_rcr(&nu, &mu, RCR_TOL)?;
            let mut events = Vec::new();
            let n_pairs = ctx.pairs(1000);
            for _ in 0..2 * n_pairs {
                events.push(random_event(&s, &mut rng));
            }
            let pairs: Vec<_> = (0..n_pairs).map(|i| (2 * i, 2 * i + 1)).collect();
            let tabs = tables(&events)?;
            let rule = SelectionRule::ClusterDisjoint(phi.clone()).prepare(&s)?;
            let worst = bk_sweep(&mu, &events, &pairs, ctx.tol, |t| {
                let (i, j) = pairs[t];
                rule.boxminus(&tabs[i], &tabs[j])
            });
            let params = json!({ "n": s.n(), "q": s.q(), "potential": phi.to_spec(), "pairs": n_pairs, "stream": stream });
            let mut rec = worst.record(id, params, ctx.tol);
            rec.pass &= valid.pass;
            let mut d = worst.detail();
            d["rcr_max_rel_dev"] = json!(valid.max_rel_dev);
            d["rcr_valid"] = json!(valid.pass);
            d["support"] = json!(nu.support_len());
            Ok(rec.with_detail(d))
        })?);
    }
    Ok(out)
}

// ---------------------------------------------------------------- RCR conditions

/// Float xi with round-off residue read as zero: `|xi_j| <= SNAP * p_j / a_jj`,
/// the size of the terms cancelling in the forward substitution for `xi_j`.
pub fn snapped_xi(n: usize, x: f64) -> Result<Vec<f64>> {
    let sol = solve_xi_x(n, x)?;
    sol.xi
        .iter()
        .enumerate()
        .map(|(j, &v)| {
            let scale = sol.p[j].abs() / akj(n, j, j)?.to_f64().unwrap_or(f64::INFINITY);
            Ok(if v.abs() <= SNAP * scale { 0.0 } else { v })
        })
        .collect()
}

/// Structure shared by a family of instances: the events and pairs swept,
/// the non-trivial foldings, and the rule.
struct CondSetup {
    events: Vec<Event>,
    tables: Vec<WitnessTable>,
    pairs: Vec<(usize, usize)>,
    layouts: Vec<FoldLayout>,
}

impl CondSetup {
    fn new(space: &SpaceSpec, events: Vec<Event>) -> Result<CondSetup> {
        let tables = tables(&events)?;
        let pairs = all_pairs(events.len());
        let layouts = enumerate_layouts(space)?
            .into_iter()
            .filter(|l| !l.is_trivial())
            .collect();
        Ok(CondSetup {
            events,
            tables,
            pairs,
            layouts,
        })
    }
}

/// Tallies of condition (ii) and the cardinality inequality over all pairs
/// and foldings. These depend only on the rule partitions and the support
/// structure of the bases, not on the weights.
#[derive(Clone, Debug, Default)]
struct CondTally {
    points: usize,
    uniform_fail: usize,
    per_eta_fail: usize,
    per_eta_unknown: usize,
    card_checks: usize,
    card_fail: usize,
    first_failure: Option<String>,
}

impl CondTally {
    fn merge(mut self, o: CondTally) -> CondTally {
        self.points += o.points;
        self.uniform_fail += o.uniform_fail;
        self.per_eta_fail += o.per_eta_fail;
        self.per_eta_unknown += o.per_eta_unknown;
        self.card_checks += o.card_checks;
        self.card_fail += o.card_fail;
        self.first_failure = match (self.first_failure, o.first_failure) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self
    }

    fn note(&mut self, what: String) {
        if self.first_failure.as_ref().is_none_or(|f| what < *f) {
            self.first_failure = Some(what);
        }
    }

    fn pass(&self) -> bool {
        self.uniform_fail == 0 && self.card_fail == 0
    }
}

fn evaluate_conditions(
    setup: &CondSetup,
    rule: &PreparedRule,
    bases: &[RcrBase],
) -> Result<CondTally> {
    let views: Vec<SeparationView> = bases
        .iter()
        .map(|nu| SeparationView::new(nu, true))
        .collect();
    let supports: Vec<Vec<EtaConfig>> = bases
        .iter()
        .map(|nu| Ok(nu.support()?.into_iter().map(|(e, _)| e).collect()))
        .collect::<Result<_>>()?;
    setup
        .pairs
        .par_iter()
        .map(|&(i, j)| -> Result<CondTally> {
            let (ta, tb) = (&setup.tables[i], &setup.tables[j]);
            let bm = rule.boxminus(ta, tb);
            let mut psi: HashMap<usize, Vec<WitnessPair>> = HashMap::new();
            let mut t = CondTally::default();
            for (l, layout) in setup.layouts.iter().enumerate() {
                for f in 0..layout.space().size() {
                    let idx = layout.embed(f);
                    if !bm.contains(idx) {
                        continue;
                    }
                    let pairs = psi.entry(idx).or_insert_with(|| rule.pairs(ta, tb, idx));
                    let o = views[l].outcome(layout, f, pairs);
                    t.points += 1;
                    if !o.uniform {
                        t.uniform_fail += 1;
                        t.note(format!(
                            "separation a={} b={} layout={l} folded={f}",
                            setup.events[i].to_hex(),
                            setup.events[j].to_hex()
                        ));
                    }
                    match o.per_eta {
                        Some(false) => t.per_eta_fail += 1,
                        None => t.per_eta_unknown += 1,
                        Some(true) => {}
                    }
                }
                for (e, eta) in supports[l].iter().enumerate() {
                    let (lhs, rhs) = check_cardinality_lemma(
                        eta,
                        layout,
                        &bm,
                        setup.events[i].members(),
                        setup.events[j].members(),
                    )?;
                    t.card_checks += 1;
                    if lhs > rhs {
                        t.card_fail += 1;
                        t.note(format!(
                            "cardinality a={} b={} layout={l} eta={e}",
                            setup.events[i].to_hex(),
                            setup.events[j].to_hex()
                        ));
                    }
                }
            }
            Ok(t)
        })
        .try_reduce(CondTally::default, |a, b| Ok(a.merge(b)))
}

/// Cache key: the rule's partition at every configuration plus the support
/// structure of every base.
fn structure_key(rule_sig: &str, bases: &[RcrBase]) -> Result<String> {
    let mut key = rule_sig.to_string();
    for nu in bases {
        let mut sup: Vec<String> = nu
            .support()?
            .into_iter()
            .map(|(e, _)| format!("{:?}", e.active()))
            .collect();
        sup.sort();
        key.push('|');
        key.push_str(&sup.join(";"));
    }
    Ok(key)
}

fn rule_signature(rule: &PreparedRule) -> String {
    let parts: Vec<String> = (0..rule.space().size())
        .map(|i| format!("{:?}", rule.partition(i).map(|p| p.blocks())))
        .collect();
    parts.join(",")
}

/// Per-folding checks that depend on the weights: validation of the base
/// against the folded measure, and condition (i).
struct Folded {
    bases: Vec<RcrBase>,
    max_rel_dev: f64,
    invalid: usize,
    cond_i_fail: usize,
}

fn check_folded(
    mu: &Measure,
    layouts: &[FoldLayout],
    base: impl Fn(&FoldLayout) -> Result<RcrBase>,
) -> Result<Folded> {
    let mut out = Folded {
        bases: Vec::new(),
        max_rel_dev: 0.0,
        invalid: 0,
        cond_i_fail: 0,
    };
    for layout in layouts {
        let folded = fold_with(mu, layout.clone())?;
        let nu = base(layout)?;
        let v = validate_rcr(&nu, &folded.result, RCR_TOL)?;
        out.max_rel_dev = out.max_rel_dev.max(v.max_rel_dev);
        if !v.pass {
            out.invalid += 1;
        }
        if !check_condition_i(&nu)?.pass {
            out.cond_i_fail += 1;
        }
        out.bases.push(nu);
    }
    Ok(out)
}

fn conditions_record(
    id: String,
    params: Value,
    folded: &Folded,
    tally: &CondTally,
    layouts: usize,
) -> CheckRecord {
    let pass = folded.invalid == 0 && folded.cond_i_fail == 0 && tally.pass();
    let failures = folded.invalid + folded.cond_i_fail + tally.uniform_fail + tally.card_fail;
    CheckRecord::flag(id, params, pass, failures as f64, 0.0).with_detail(json!({
        "layouts": layouts,
        "rcr_invalid": folded.invalid,
        "rcr_max_rel_dev": folded.max_rel_dev,
        "condition_i_failures": folded.cond_i_fail,
        "separation_points": tally.points,
        "separation_failures": tally.uniform_fail,
        "per_eta_failures": tally.per_eta_fail,
        "per_eta_unchecked": tally.per_eta_unknown,
        "cardinality_checks": tally.card_checks,
        "cardinality_failures": tally.card_fail,
        "first_failure": tally.first_failure,
    }))
}

/// Conditions (i), (ii) and the cardinality inequality on every non-trivial
/// folding, for a fixed event family. Curie-Weiss type measures use the
/// matching base and the upper-ones rule; Gibbs type measures use the Gibbs
/// base of the folded potential and the cluster-disjoint rule.
pub struct ConditionsRunner {
    space: SpaceSpec,
    setup: CondSetup,
    cache: HashMap<String, CondTally>,
}

impl ConditionsRunner {
    pub fn new(space: &SpaceSpec, events: Vec<Event>) -> Result<ConditionsRunner> {
        Ok(ConditionsRunner {
            space: space.clone(),
            setup: CondSetup::new(space, events)?,
            cache: HashMap::new(),
        })
    }

    /// All events of a space with at most 8 configurations.
    pub fn all_events(space: &SpaceSpec) -> Result<ConditionsRunner> {
        if space.size() > 8 {
            bail!("all event pairs are enumerated only for spaces of at most 8 configurations");
        }
        ConditionsRunner::new(space, all_events(space))
    }

    pub fn increasing(space: &SpaceSpec) -> Result<ConditionsRunner> {
        ConditionsRunner::new(space, enumerate_increasing(space)?)
    }

    pub fn layouts(&self) -> usize {
        self.setup.layouts.len()
    }

    /// Distinct rule and support structures evaluated so far.
    pub fn structures(&self) -> usize {
        self.cache.len()
    }

    pub fn run(
        &mut self,
        family: &FamilySpec,
        id: String,
        mut params: Value,
    ) -> Result<CheckRecord> {
        let mu = build_measure(family)?;
        if *mu.space() != self.space {
            bail!("family space differs from the event space");
        }
        let (rule, rule_name, folded) = match family {
            FamilySpec::CurieWeiss { .. } | FamilySpec::Cw3 { .. } => {
                let folded = check_folded(&mu, &self.setup.layouts, |layout| {
                    let (x, n) = cw_fold_parameter_of(&mu, layout.lock())?;
                    Ok(matching_base_on(layout.space(), &snapped_xi(n, x)?)?)
                })?;
                (SelectionRule::UpperOnes, "upper-ones", folded)
            }
            FamilySpec::Ising { .. } | FamilySpec::Potts { .. } | FamilySpec::Gibbs { .. } => {
                let phi = canonical_potential(family)?;
                let folded = check_folded(&mu, &self.setup.layouts, |layout| {
                    Ok(gibbs_base(&folded_potential_with(&phi, layout)?)?)
                })?;
                (
                    SelectionRule::ClusterDisjoint(phi),
                    "cluster-disjoint",
                    folded,
                )
            }
            other => bail!("no base construction for the {} family", other.name()),
        };
        let rule = rule.prepare(&self.space)?;
        let key = structure_key(&rule_signature(&rule), &folded.bases)?;
        if !self.cache.contains_key(&key) {
            let t = evaluate_conditions(&self.setup, &rule, &folded.bases)?;
            self.cache.insert(key.clone(), t);
        }
        params["rule"] = json!(rule_name);
        Ok(conditions_record(
            id,
            params,
            &folded,
            &self.cache[&key],
            self.layouts(),
        ))
    }
}

fn rcr_conditions(ctx: &Ctx) -> Result<Vec<CheckRecord>> {
    let cw: Vec<_> = cw_instances(ctx, "rcr-conditions/cw")
        .into_iter()
        .filter(|c| ctx.wants(&c.id))
        .collect();
    let ising: Vec<_> = ising_instances(ctx, "rcr-conditions/ising")
        .into_iter()
        .filter(|c| ctx.wants(&c.id))
        .collect();
    let mut out = Vec::new();
    if !cw.is_empty() {
        let mut runner = ConditionsRunner::increasing(&SpaceSpec::spins(4)?)?;
        for c in cw {
            out.push(timed(|| {
                let family = FamilySpec::CurieWeiss {
                    n: 4,
                    j: c.j,
                    h: c.h.clone(),
                };
                let params = json!({ "n": 4, "j": c.j, "h": c.h, "stream": c.stream });
                runner.run(&family, c.id.clone(), params)
            })?);
        }
    }
    if !ising.is_empty() {
        let mut runner = ConditionsRunner::all_events(&SpaceSpec::spins(3)?)?;
        for c in ising {
            out.push(timed(|| runner.run(&c.family(), c.id.clone(), c.params()))?);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- xi

fn rational_strings(v: &[BigRational]) -> Vec<String> {
    v.iter().map(|r| r.to_string()).collect()
}

type XiJob<'a> = Box<dyn Fn(String) -> Result<CheckRecord> + Send + Sync + 'a>;

fn xi_suite(ctx: &Ctx) -> Result<Vec<CheckRecord>> {
    let n_max = ctx.cfg.sweep.n_max.unwrap_or(20);
    let xs: Vec<String> = ctx
        .cfg
        .sweep
        .x_grid
        .clone()
        .unwrap_or(XI_EXACT_X.iter().map(|s| s.to_string()).collect());
    let mut jobs: Vec<(String, XiJob<'_>)> = Vec::new();
    for n in 1..=n_max {
        jobs.push((
            format!("xi/at-one/n={n:02}"),
            Box::new(move |id| {
                let sol = solve_xi_x_exact(n, &BigRational::one())?;
                let mut expect = vec![BigRational::zero(); n / 2 + 1];
                expect[0] = BigRational::one();
                let ok = sol.xi == expect;
                Ok(
                    CheckRecord::flag(id, json!({ "n": n, "x": "1" }), ok, 0.0, 0.0)
                        .with_detail(json!({ "xi": rational_strings(&sol.xi) })),
                )
            }),
        ));
        for xs in &xs {
            let (xs, xf) = (xs.clone(), xs.clone());
            jobs.push((
                format!("xi/exact/n={n:02}/x={}", xs.replace('/', ":")),
                Box::new(move |id| {
                    let x = parse_ratio(&xs)?;
                    let sol = solve_xi_x_exact(n, &x)?;
                    let xi0 = sol.xi[0].is_one();
                    let min = sol.min.to_f64().unwrap_or(f64::NAN);
                    Ok(CheckRecord::flag(
                        id,
                        json!({ "n": n, "x": xs }),
                        xi0 && !sol.min.is_negative(),
                        -min,
                        0.0,
                    )
                    .with_detail(json!({ "xi0_is_one": xi0, "min": sol.min.to_string() })))
                }),
            ));
            jobs.push((
                format!("xi/float/n={n:02}/x={}", xf.replace('/', ":")),
                Box::new(move |id| {
                    let xs = &xf;
                    let x = parse_ratio(xs)?.to_f64().unwrap_or(f64::NAN);
                    let sol = solve_xi_x(n, x)?;
                    let scale = sol.xi.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                    Ok(CheckRecord::new(
                        id,
                        json!({ "n": n, "x": xs }),
                        -sol.min / scale,
                        0.0,
                        ctx.tol,
                    )
                    .with_detail(json!({ "min": sol.min, "scale": scale })))
                }),
            ));
        }
    }
    for n in 1..=8usize {
        jobs.push((
            format!("xi/count/n={n}"),
            Box::new(move |id| {
                let s = SpaceSpec::binary(n)?;
                let mut checked = 0usize;
                let mut bad = 0usize;
                for idx in 0..s.size() {
                    let ones = s.count_top(idx);
                    let k = ones.min(n - ones);
                    let omega = s.decode(idx);
                    for j in 0..=n / 2 + 1 {
                        checked += 1;
                        let a = akj(n, k, j)?;
                        if a.to_u128() != Some(count_matchings(&omega, j)?) {
                            bad += 1;
                        }
                    }
                }
                Ok(
                    CheckRecord::flag(id, json!({ "n": n }), bad == 0, bad as f64, 0.0)
                        .with_detail(json!({ "checked": checked })),
                )
            }),
        ));
        for (g, &j) in [0.0, -0.1, -0.25, -0.5].iter().enumerate() {
            for m in 0..n {
                jobs.push((
                    format!("xi/matching/n={n}/j={j:+.2}/m={m}"),
                    Box::new(move |id| {
                        let stream = 6_000_000 + (n * 1000 + g * 100 + m) as u64;
                        let mut rng = ctx.rng(stream);
                        let h: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                        let mu = build_measure(&FamilySpec::CurieWeiss { n, j, h: h.clone() })?;
                        let alpha: Vec<u8> = (0..m).map(|_| rng.gen_range(0..=1)).collect();
                        let lock = Lock::new(mu.space(), (0..m).collect(), alpha.clone())?;
                        let folded = fold_binary(&mu, &lock)?;
                        let (x, nf) = cw_fold_parameter_of(&mu, &lock)?;
                        let xi = snapped_xi(nf, x)?;
                        let nu = matching_base_on(folded.result.space(), &xi)?;
                        let v = validate_rcr(&nu, &folded.result, RCR_TOL)?;
                        Ok(CheckRecord::new(
                            id,
                            json!({ "n": n, "j": j, "h": h, "lock": m, "alpha": alpha, "stream": stream }),
                            v.max_rel_dev,
                            RCR_TOL,
                            0.0,
                        )
                        .with_detail(json!({ "x": x, "free": nf, "xi": xi })))
                    }),
                ));
            }
        }
    }
    jobs.into_par_iter()
        .filter(|(id, _)| ctx.wants(id))
        .map(|(id, f)| timed(|| f(id)))
        .collect()
}

// ---------------------------------------------------------------- paths

fn four_arm(ctx: &Ctx, k: usize) -> Result<Vec<CheckRecord>> {
    let prefix = if k == 1 { "four-arm" } else { "four-arm-k2" };
    let grid = ctx.cfg.sweep.j_grid.clone().unwrap_or(FOUR_ARM_J.to_vec());
    let samples = ctx.samples(if k == 1 { 100 } else { 0 });
    let (coords, g) = punctured_box(k)?;
    let edges = g.edges().len();
    let mut jobs = Vec::new();
    for (gi, &j) in grid.iter().enumerate() {
        jobs.push((format!("{prefix}/j={j:.2}/h-zero"), j, None));
        for t in 0..samples {
            let stream = 7_000_000 + (k * 100_000 + gi * 1000 + t) as u64;
            jobs.push((format!("{prefix}/j={j:.2}/h{t:03}"), j, Some(stream)));
        }
    }
    jobs.into_par_iter()
        .filter(|(id, _, _)| ctx.wants(id))
        .map(|(id, j, stream)| {
            let h = match stream {
                None => vec![0.0; coords.len()],
                Some(s) => {
                    let mut rng = ctx.rng(s);
                    (0..coords.len())
                        .map(|_| rng.gen_range(-0.5..=0.5))
                        .collect()
                }
            };
            let inst = FourArmInstance {
                k,
                j: vec![j; edges],
                h,
            };
            four_arm_check(id, &inst, ctx.tol)
        })
        .collect()
}

fn random_subset(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let size = rng.gen_range(1..=3.min(n));
    let mut v: Vec<usize> = (0..n)
        .collect::<Vec<_>>()
        .choose_multiple(rng, size)
        .copied()
        .collect();
    v.sort_unstable();
    v
}

fn corollary19(ctx: &Ctx) -> Result<Vec<CheckRecord>> {
    (0..ctx.samples(50))
        .map(|t| (t, format!("corollary19/g{t:02}")))
        .filter(|(_, id)| ctx.wants(id))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(t, id)| {
            let stream = 8_000_000 + t as u64;
            let mut rng = ctx.rng(stream);
            let n = rng.gen_range(4..=10);
            let mut couplings = Vec::new();
            for a in 0..n {
                for b in a + 1..n {
                    if rng.gen_bool(0.4) {
                        couplings.push((a, b, 1.5 - rng.gen_range(0.0..1.5)));
                    }
                }
            }
            let h = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let inst = Corollary19Instance {
                n,
                couplings,
                h,
                x: random_subset(&mut rng, n),
                y: random_subset(&mut rng, n),
                u: random_subset(&mut rng, n),
                w: random_subset(&mut rng, n),
            };
            let mut rec = corollary_19_check(id, &inst, ctx.tol)?;
            rec.params["stream"] = json!(stream);
            Ok(rec)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(suite: SuiteName) -> SuiteConfig {
        SuiteConfig::new(suite)
    }

    #[test]
    fn reimer_single_instance() {
        let run = run_suite(&cfg(SuiteName::ReimerN3), Some("reimer-n3/a=ff/b=0f")).unwrap();
        assert_eq!(run.records.len(), 1);
        let r = &run.records[0];
        assert_eq!((r.lhs, r.rhs), (4.0, 4.0));
        assert!(run.summary.all_pass());
    }

    #[test]
    fn unknown_instance_is_an_error() {
        assert!(run_suite(&cfg(SuiteName::ReimerN3), Some("nope")).is_err());
    }

    #[test]
    fn kn_small() {
        let mut c = cfg(SuiteName::KnBk);
        c.sweep.n_max = Some(3);
        let run = run_suite(&c, None).unwrap();
        assert_eq!(run.records.len(), 2 + 3 + 4);
        assert!(run.summary.all_pass());
    }

    #[test]
    fn instances_are_reproducible() {
        let mut c = cfg(SuiteName::CwBkN4);
        c.sweep.samples = Some(2);
        c.sweep.j_grid = Some(vec![-1.0]);
        c.sweep.x_grid = Some(vec!["3/2".into()]);
        let all = run_suite(&c, None).unwrap();
        assert_eq!(all.records.len(), 3);
        assert!(all.summary.all_pass());
        let one = run_suite(&c, Some(&all.records[1].id)).unwrap();
        assert_eq!(one.records[0].params, all.records[1].params);
        assert_eq!(one.records[0].lhs, all.records[1].lhs);
    }

    #[test]
    fn snapping_only_touches_residue() {
        let xi = snapped_xi(6, 1.0).unwrap();
        assert_eq!(xi, vec![1.0, 0.0, 0.0, 0.0]);
        let xi = snapped_xi(6, 2.0).unwrap();
        assert!(xi.iter().skip(1).all(|&v| v > 0.0));
    }

    #[test]
    fn cylinder_count() {
        assert_eq!(
            cylinders(&SpaceSpec::q_state(3, 3).unwrap()).unwrap().len(),
            64
        );
    }

    #[test]
    fn potentials_are_seeded() {
        let a = random_potential(&mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = random_potential(&mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a.to_spec(), b.to_spec());
        assert!(a.space().n() >= 3);
    }
}
