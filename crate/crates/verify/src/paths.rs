//! Signed path events on Ising-type graphs and the two path corollaries:
//! the decoupled pair of connections and the four-arm bound in a punctured box.

use std::time::Instant;

use anyhow::{bail, ensure, Result};
use bkcert::{
    boxminus, build_measure, Couplings, Event, FamilySpec, InteractionGraph, Measure,
    SelectionRule, SiteSet, SpaceSpec,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::report::CheckRecord;

/// Largest box size handled exhaustively (k = 2 has 24 sites).
pub const MAX_BOX_K: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

/// Neighbour masks in index-bit coordinates (site `i` is bit `n-1-i`).
#[derive(Clone, Debug)]
pub struct BitGraph {
    n: usize,
    nbr: Vec<u64>,
}

impl BitGraph {
    pub fn new(g: &InteractionGraph) -> BitGraph {
        let n = g.n();
        let mut nbr = vec![0u64; n];
        for &(i, j) in g.edges() {
            nbr[n - 1 - i] |= 1 << (n - 1 - j);
            nbr[n - 1 - j] |= 1 << (n - 1 - i);
        }
        BitGraph { n, nbr }
    }

    pub fn mask(&self, sites: SiteSet) -> u64 {
        sites.iter().fold(0, |m, i| m | 1 << (self.n - 1 - i))
    }

    /// Sites carrying `sign` in configuration `index` of a `{-1,+1}` space.
    #[inline]
    pub fn signed(&self, index: usize, sign: Sign) -> u64 {
        let full = if self.n == 64 {
            u64::MAX
        } else {
            (1u64 << self.n) - 1
        };
        match sign {
            Sign::Plus => index as u64 & full,
            Sign::Minus => !(index as u64) & full,
        }
    }

    /// Sites reachable from `start` inside `allowed`.
    #[inline]
    pub fn flood(&self, start: u64, allowed: u64) -> u64 {
        let mut reach = start & allowed;
        let mut frontier = reach;
        while frontier != 0 {
            let mut next = 0;
            let mut f = frontier;
            while f != 0 {
                let b = f.trailing_zeros() as usize;
                next |= self.nbr[b];
                f &= f - 1;
            }
            frontier = next & allowed & !reach;
            reach |= frontier;
        }
        reach
    }

    /// Whether a `sign` path joins `from` to `to` in configuration `index`.
    #[inline]
    pub fn connects(&self, index: usize, sign: Sign, from: u64, to: u64) -> bool {
        self.flood(from, self.signed(index, sign)) & to != 0
    }
}

fn check_spins(space: &SpaceSpec, g: &InteractionGraph) -> Result<()> {
    ensure!(
        space.alphabet() == [-1, 1],
        "path events need the {{-1,+1}} alphabet"
    );
    ensure!(space.n() == g.n(), "graph and space disagree on site count");
    Ok(())
}

/// `{W -> W'}` along vertices all carrying `sign`.
pub fn path_event(
    space: &SpaceSpec,
    g: &InteractionGraph,
    sign: Sign,
    from: SiteSet,
    to: SiteSet,
) -> Result<Event> {
    check_spins(space, g)?;
    ensure!(
        !from.is_empty() && !to.is_empty(),
        "path endpoints must be nonempty"
    );
    space.check_sites(from.union(to))?;
    let bg = BitGraph::new(g);
    let (f, t) = (bg.mask(from), bg.mask(to));
    Ok(Event::from_predicate(space, |i| bg.connects(i, sign, f, t)))
}

/// `V = {-k..k}^2 minus the origin`, sites in row-major order, with
/// nearest-neighbour edges.
pub fn punctured_box(k: usize) -> Result<(Vec<(i32, i32)>, InteractionGraph)> {
    ensure!(k >= 1, "box size must be at least 1");
    if k > MAX_BOX_K {
        bail!("box size {k} exceeds the exhaustive limit {MAX_BOX_K}");
    }
    let k = k as i32;
    let coords: Vec<(i32, i32)> = (-k..=k)
        .flat_map(|x| (-k..=k).map(move |y| (x, y)))
        .filter(|&c| c != (0, 0))
        .collect();
    let mut edges = Vec::new();
    for (i, a) in coords.iter().enumerate() {
        for (j, b) in coords.iter().enumerate().skip(i + 1) {
            if (a.0 - b.0).abs() + (a.1 - b.1).abs() == 1 {
                edges.push((i, j));
            }
        }
    }
    let g = InteractionGraph::new(coords.len(), edges)?;
    Ok((coords, g))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FourArmInstance {
    pub k: usize,
    /// One coupling per box edge, in the order of [`punctured_box`]'s edges.
    pub j: Vec<f64>,
    pub h: Vec<f64>,
}

/// Exact four-arm check: two plus arms from `(±1,0)` and two minus arms from
/// `(0,±1)` to `{|v1|+|v2| = k}`, against the product of one-arm probabilities.
pub fn four_arm_check(id: String, inst: &FourArmInstance, tol: f64) -> Result<CheckRecord> {
    let start = Instant::now();
    let (coords, g) = punctured_box(inst.k)?;
    ensure!(
        inst.j.len() == g.edges().len(),
        "need one coupling per edge"
    );
    ensure!(
        inst.j.iter().all(|&v| v > 0.0),
        "box couplings must be positive"
    );
    let triples: Vec<_> = g
        .edges()
        .iter()
        .zip(&inst.j)
        .map(|(&(a, b), &v)| (a, b, v))
        .collect();
    let family = FamilySpec::Ising {
        n: coords.len(),
        couplings: triples,
        h: inst.h.clone(),
    };
    let mu = build_measure(&family)?;
    let bg = BitGraph::new(&g);
    let site = |c: (i32, i32)| coords.iter().position(|&x| x == c).unwrap();
    let k = inst.k as i32;
    let boundary_sites: SiteSet = coords
        .iter()
        .enumerate()
        .filter(|(_, c)| c.0.abs() + c.1.abs() == k)
        .map(|(i, _)| i)
        .collect();
    let boundary = bg.mask(boundary_sites);
    let arms = [
        (site((1, 0)), Sign::Plus),
        (site((0, 1)), Sign::Minus),
        (site((-1, 0)), Sign::Plus),
        (site((0, -1)), Sign::Minus),
    ];
    let arm_masks: Vec<(u64, Sign)> = arms
        .iter()
        .map(|&(s, sg)| (bg.mask(SiteSet::singleton(s)), sg))
        .collect();
    let total = mu.total();
    let mut one = [0.0f64; 4];
    let (mut both_a, mut both_b, mut all) = (0.0, 0.0, 0.0);
    for idx in 0..mu.space().size() {
        let w = mu.weight(idx);
        if w == 0.0 {
            continue;
        }
        let hit: [bool; 4] =
            std::array::from_fn(|i| bg.connects(idx, arm_masks[i].1, arm_masks[i].0, boundary));
        for (o, &h) in one.iter_mut().zip(&hit) {
            if h {
                *o += w;
            }
        }
        if hit[0] && hit[1] {
            both_a += w;
        }
        if hit[2] && hit[3] {
            both_b += w;
        }
        if hit.iter().all(|&h| h) {
            all += w;
        }
    }
    let lhs = all / total;
    let rhs: f64 = one.iter().map(|o| o / total).product();
    let (pa, pb) = (both_a / total, both_b / total);
    let mut detail = json!({
        "one_arm": one.iter().map(|o| o / total).collect::<Vec<_>>(),
        "p_a": pa,
        "p_b": pb,
        "paired_bound_holds": lhs <= pa * pb + tol,
        "fkg_bound_holds": pa * pb <= rhs + tol,
    });
    if inst.k == 1 {
        detail["inside_boxminus"] =
            json!(four_arm_inside_boxminus(&mu, &g, &arms, boundary_sites)?);
    }
    let mut rec = CheckRecord::new(id, json!(inst), lhs, rhs, tol);
    rec.pass &= detail["paired_bound_holds"].as_bool().unwrap_or(false)
        && detail["inside_boxminus"].as_bool().unwrap_or(true);
    rec.detail = Some(detail);
    rec.elapsed_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    Ok(rec)
}

/// The four-arm event lies inside `A ⊟ B` for the spin-cluster rule, with
/// `A` the arms from `(1,0)`, `(0,1)` and `B` the other two.
fn four_arm_inside_boxminus(
    mu: &Measure,
    g: &InteractionGraph,
    arms: &[(usize, Sign); 4],
    boundary: SiteSet,
) -> Result<bool> {
    let s = mu.space();
    let arm = |i: usize| path_event(s, g, arms[i].1, SiteSet::singleton(arms[i].0), boundary);
    let a = arm(0)?.intersection(&arm(1)?)?;
    let b = arm(2)?.intersection(&arm(3)?)?;
    let four = a.intersection(&b)?;
    let bm = boxminus(&a, &b, &SelectionRule::SpinCluster(g.clone()))?;
    Ok(four.is_subset(&bm)?)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Corollary19Instance {
    pub n: usize,
    /// Positive couplings on the graph edges.
    pub couplings: Vec<(usize, usize, f64)>,
    pub h: Vec<f64>,
    pub x: Vec<usize>,
    pub y: Vec<usize>,
    pub u: Vec<usize>,
    pub w: Vec<usize>,
}

fn site_set(v: &[usize]) -> Result<SiteSet> {
    SiteSet::try_from(v.to_vec()).map_err(Into::into)
}

/// `mu(∃ x∈X, u∈U : x→Y, u→W, not x→u) <= mu(X→Y) mu(U→W)` along plus paths.
pub fn corollary_19_check(id: String, inst: &Corollary19Instance, tol: f64) -> Result<CheckRecord> {
    let start = Instant::now();
    ensure!(
        inst.couplings.iter().all(|c| c.2 >= 0.0),
        "couplings must be nonnegative"
    );
    let family = FamilySpec::Ising {
        n: inst.n,
        couplings: inst.couplings.clone(),
        h: inst.h.clone(),
    };
    let mu = build_measure(&family)?;
    let s = mu.space().clone();
    let c = Couplings::from_triples(inst.n, &inst.couplings)?;
    let g = InteractionGraph::ferromagnetic(&c);
    let (xs, ys, us, ws) = (
        site_set(&inst.x)?,
        site_set(&inst.y)?,
        site_set(&inst.u)?,
        site_set(&inst.w)?,
    );
    let a = path_event(&s, &g, Sign::Plus, xs, ys)?;
    let b = path_event(&s, &g, Sign::Plus, us, ws)?;
    let bg = BitGraph::new(&g);
    let (ym, wm) = (bg.mask(ys), bg.mask(ws));
    let lhs_event = Event::from_predicate(&s, |idx| {
        let plus = bg.signed(idx, Sign::Plus);
        xs.iter().any(|x| {
            let cx = bg.flood(bg.mask(SiteSet::singleton(x)), plus);
            cx & ym != 0
                && us.iter().any(|u| {
                    let um = bg.mask(SiteSet::singleton(u));
                    cx & um == 0 && bg.flood(um, plus) & wm != 0
                })
        })
    });
    let lhs = mu.probability(&lhs_event)?;
    let rhs = mu.probability(&a)? * mu.probability(&b)?;
    let bm = boxminus(&a, &b, &SelectionRule::SpinCluster(g))?;
    let mut rec = CheckRecord::new(id, json!(inst), lhs, rhs, tol);
    rec.pass &= bm == lhs_event;
    rec.detail = Some(json!({ "equals_boxminus": bm == lhs_event }));
    rec.elapsed_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use bkcert::is_increasing;

    fn path3() -> (SpaceSpec, InteractionGraph) {
        (
            SpaceSpec::spins(3).unwrap(),
            InteractionGraph::new(3, [(0, 1), (1, 2)]).unwrap(),
        )
    }

    #[test]
    fn unique_path_event() {
        let (s, g) = path3();
        let e = path_event(
            &s,
            &g,
            Sign::Plus,
            SiteSet::singleton(0),
            SiteSet::singleton(2),
        )
        .unwrap();
        assert_eq!(e.indices().collect::<Vec<_>>(), vec![7]);
    }

    #[test]
    fn overlapping_endpoints_need_one_site() {
        let (s, g) = path3();
        let w = SiteSet::from_iter([0, 1]);
        let e = path_event(&s, &g, Sign::Plus, w, SiteSet::singleton(1)).unwrap();
        let expect = Event::from_predicate(&s, |i| s.digit(i, 1) == 1);
        assert_eq!(e, expect);
    }

    #[test]
    fn path_events_are_monotone() {
        let (coords, g) = punctured_box(1).unwrap();
        let s = SpaceSpec::spins(coords.len()).unwrap();
        for (f, t) in [
            (vec![0], vec![7]),
            (vec![1, 2], vec![5]),
            (vec![3], vec![4, 6]),
        ] {
            let (f, t) = (site_set(&f).unwrap(), site_set(&t).unwrap());
            let plus = path_event(&s, &g, Sign::Plus, f, t).unwrap();
            assert!(is_increasing(&plus));
            let minus = path_event(&s, &g, Sign::Minus, f, t).unwrap();
            assert!(is_increasing(&minus.complement()));
        }
    }

    #[test]
    fn empty_endpoints_rejected() {
        let (s, g) = path3();
        assert!(path_event(&s, &g, Sign::Plus, SiteSet::EMPTY, SiteSet::singleton(1)).is_err());
    }

    #[test]
    fn box_shapes() {
        let (c1, g1) = punctured_box(1).unwrap();
        assert_eq!((c1.len(), g1.edges().len()), (8, 8));
        let (c2, g2) = punctured_box(2).unwrap();
        assert_eq!((c2.len(), g2.edges().len()), (24, 36));
        assert!(punctured_box(3).is_err());
    }

    #[test]
    fn four_arm_small_box() {
        for j in [0.2, 0.5, 1.0] {
            let inst = FourArmInstance {
                k: 1,
                j: vec![j; 8],
                h: vec![],
            };
            let r = four_arm_check("t".into(), &inst, 1e-12).unwrap();
            assert!(r.pass, "{r:?}");
            assert_eq!(r.detail.unwrap()["inside_boxminus"], json!(true));
        }
    }

    #[test]
    fn four_arm_decoupled_limit() {
        let inst = FourArmInstance {
            k: 1,
            j: vec![1e-9; 8],
            h: vec![0.3; 8],
        };
        let r = four_arm_check("t".into(), &inst, 1e-12).unwrap();
        assert!((r.lhs - r.rhs).abs() < 1e-8);
    }

    #[test]
    fn corollary_on_a_path() {
        let inst = Corollary19Instance {
            n: 4,
            couplings: vec![(0, 1, 0.7), (1, 2, 0.7), (2, 3, 0.7)],
            h: vec![0.1, -0.2, 0.3, 0.0],
            x: vec![0],
            y: vec![1],
            u: vec![2],
            w: vec![3],
        };
        let r = corollary_19_check("t".into(), &inst, 1e-12).unwrap();
        assert!(r.pass);
        assert_eq!(r.detail.unwrap()["equals_boxminus"], json!(true));
    }

    #[test]
    fn corollary_with_pinned_target() {
        let inst = Corollary19Instance {
            n: 3,
            couplings: vec![(0, 1, 0.5), (1, 2, 0.5)],
            h: vec![0.0, 0.0, f64::NEG_INFINITY],
            x: vec![0],
            y: vec![0],
            u: vec![1],
            w: vec![2],
        };
        let r = corollary_19_check("t".into(), &inst, 1e-12).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.pass);
    }
}
