//! Single-instance subcommands. Each reads a small JSON request and yields
//! either check records or a data document.

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use bkcert::config_space::SpaceHeader;
use bkcert::*;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::parse_ratio;
use crate::report::CheckRecord;
use crate::suites::{snapped_xi, ConditionsRunner, RCR_TOL};

pub enum Output {
    Records(Vec<CheckRecord>),
    Document { pass: bool, body: Value },
}

impl Output {
    pub fn pass(&self) -> bool {
        match self {
            Output::Records(r) => r.iter().all(|r| r.pass),
            Output::Document { pass, .. } => *pass,
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleName {
    #[default]
    Full,
    UpperOnes,
    ClusterDisjoint,
    SpinCluster,
    ChangingPath,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventSet {
    #[default]
    Increasing,
    All,
}

/// Families with rational weights; probabilities and `x` as `"p/q"` strings.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExactSpec {
    KOutOfN { n: usize, k: usize },
    Product { p: Vec<String> },
    CurieWeissZeroField { n: usize, x: String },
}

impl ExactSpec {
    fn build(&self) -> Result<ExactMeasure> {
        let fam = match self {
            ExactSpec::KOutOfN { n, k } => ExactFamily::KOutOfN { n: *n, k: *k },
            ExactSpec::Product { p } => ExactFamily::Product {
                p: p.iter().map(|v| parse_ratio(v)).collect::<Result<_>>()?,
            },
            ExactSpec::CurieWeissZeroField { n, x } => ExactFamily::CurieWeissZeroField {
                n: *n,
                x: parse_ratio(x)?,
            },
        };
        Ok(build_exact_measure(&fam)?)
    }
}

fn triples_of(family: &FamilySpec) -> Result<Vec<(usize, usize, f64)>> {
    Ok(match family {
        FamilySpec::Ising { couplings, .. } | FamilySpec::Potts { couplings, .. } => {
            couplings.clone()
        }
        FamilySpec::CurieWeiss { n, j, .. } => (0..*n)
            .flat_map(|a| (a + 1..*n).map(move |b| (a, b, *j)))
            .collect(),
        other => bail!("the {} family has no pair couplings", other.name()),
    })
}

pub fn selection_rule(name: RuleName, family: Option<&FamilySpec>) -> Result<SelectionRule> {
    let need = || family.context("this rule is built from a float family");
    Ok(match name {
        RuleName::Full => SelectionRule::Full,
        RuleName::UpperOnes => SelectionRule::UpperOnes,
        RuleName::ClusterDisjoint => SelectionRule::ClusterDisjoint(canonical_potential(need()?)?),
        RuleName::SpinCluster => {
            let f = need()?;
            let n = build_space(f)?.n();
            SelectionRule::SpinCluster(InteractionGraph::ferromagnetic(&Couplings::from_triples(
                n,
                &triples_of(f)?,
            )?))
        }
        RuleName::ChangingPath => {
            let f = need()?;
            let n = build_space(f)?.n();
            SelectionRule::ChangingPath(InteractionGraph::support(&Couplings::from_triples(
                n,
                &triples_of(f)?,
            )?))
        }
    })
}

fn build_space(f: &FamilySpec) -> Result<SpaceSpec> {
    Ok(build_measure(f)?.space().clone())
}

fn event_family(space: &SpaceSpec, set: EventSet) -> Result<Vec<Event>> {
    match set {
        EventSet::Increasing => Ok(enumerate_increasing(space)?),
        EventSet::All => {
            ensure!(
                space.size() <= 8,
                "all event pairs need a space of at most 8 configurations"
            );
            Ok((0..1usize << space.size())
                .map(|m| Event::from_predicate(space, |i| m >> i & 1 == 1))
                .collect())
        }
    }
}

// ---------------------------------------------------------------- reimer

pub fn reimer(n: usize, a: &str, b: &str) -> Result<Output> {
    let s = SpaceSpec::binary(n)?;
    let (ea, eb) = (Event::from_hex(&s, a)?, Event::from_hex(&s, b)?);
    let (lhs, rhs) = reimer_gap(&ea, &eb)?;
    Ok(Output::Records(vec![CheckRecord::new(
        format!("reimer/n={n}/a={}/b={}", ea.to_hex(), eb.to_hex()),
        json!({ "n": n, "a": ea.to_hex(), "b": eb.to_hex() }),
        lhs as f64,
        rhs as f64,
        0.0,
    )]))
}

// ---------------------------------------------------------------- bk

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BkRequest {
    pub family: Option<FamilySpec>,
    pub exact_family: Option<ExactSpec>,
    #[serde(default)]
    pub rule: RuleName,
    #[serde(default)]
    pub events: EventSet,
    /// Single pair as hex bitsets; otherwise every ordered pair of `events`.
    pub a: Option<String>,
    pub b: Option<String>,
}

pub fn bk(req: &BkRequest, exact: bool, tol: f64) -> Result<Output> {
    let rule = selection_rule(req.rule, req.family.as_ref())?;
    let (space, fmu, emu) = if exact {
        let spec = req
            .exact_family
            .as_ref()
            .context("--exact needs an `exact_family`")?;
        let mu = spec.build()?;
        (mu.space().clone(), None, Some(mu))
    } else {
        let f = req
            .family
            .as_ref()
            .context("the request needs a `family`")?;
        let mu = build_measure(f)?;
        (mu.space().clone(), Some(mu), None)
    };
    let prepared = rule.prepare(&space)?;
    let events = match (&req.a, &req.b) {
        (Some(a), Some(b)) => vec![Event::from_hex(&space, a)?, Event::from_hex(&space, b)?],
        (None, None) => event_family(&space, req.events)?,
        _ => bail!("give both `a` and `b` or neither"),
    };
    let pairs: Vec<(usize, usize)> = if req.a.is_some() {
        vec![(0, 1)]
    } else {
        (0..events.len())
            .flat_map(|i| (0..events.len()).map(move |j| (i, j)))
            .collect()
    };
    let tables = events
        .iter()
        .map(WitnessTable::new)
        .collect::<bkcert::Result<Vec<_>>>()?;
    let mut failures = 0usize;
    let mut worst: Option<(f64, f64, f64, usize, usize, Option<String>)> = None;
    for &(i, j) in &pairs {
        let bm = prepared.boxminus(&tables[i], &tables[j]);
        let (lhs, rhs, margin, pass, exact_margin) = match (&fmu, &emu) {
            (Some(mu), _) => {
                let r = BkReport::new(
                    mu.mass(&bm),
                    mu.mass(events[i].members()) * mu.mass(events[j].members()),
                    tol,
                );
                (r.lhs, r.rhs, r.margin, r.pass, None)
            }
            (_, Some(mu)) => {
                let lhs = mu.mass(&bm);
                let rhs = mu.mass(events[i].members()) * mu.mass(events[j].members());
                let m: BigRational = &rhs - &lhs;
                let f = |r: &BigRational| r.to_f64().unwrap_or(f64::NAN);
                (
                    f(&lhs),
                    f(&rhs),
                    f(&m),
                    !m.is_negative(),
                    Some(m.to_string()),
                )
            }
            _ => unreachable!(),
        };
        if !pass {
            failures += 1;
        }
        if worst.as_ref().is_none_or(|w| (margin, -rhs) < (w.2, -w.1)) {
            worst = Some((lhs, rhs, margin, i, j, exact_margin));
        }
    }
    let (lhs, rhs, _, i, j, em) = worst.context("no event pairs")?;
    let params = json!({
        "family": req.family,
        "exact_family": req.exact_family,
        "rule": req.rule,
        "events": req.events,
    });
    let rec = CheckRecord::flag(
        format!("bk/{}", prepared_name(req.rule)),
        params,
        failures == 0,
        lhs,
        rhs,
    )
    .with_detail(json!({
        "pairs": pairs.len(),
        "failures": failures,
        "worst_a": events[i].to_hex(),
        "worst_b": events[j].to_hex(),
        "min_margin_exact": em,
    }));
    Ok(Output::Records(vec![rec]))
}

fn prepared_name(r: RuleName) -> &'static str {
    match r {
        RuleName::Full => "full",
        RuleName::UpperOnes => "upper-ones",
        RuleName::ClusterDisjoint => "cluster-disjoint",
        RuleName::SpinCluster => "spin-cluster",
        RuleName::ChangingPath => "changing-path",
    }
}

// ---------------------------------------------------------------- fold

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LockSpec {
    pub sites: Vec<usize>,
    /// Alphabet values of the locked sites, in `sites` order.
    pub values: Vec<i32>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldRequest {
    pub family: FamilySpec,
    pub lock: Option<LockSpec>,
    /// Per-site value pair `(beta, gamma)`; `null` for locked sites. Defaults
    /// to the extreme letters on every free site.
    pub pairing: Option<Vec<Option<(i32, i32)>>>,
}

impl FoldRequest {
    fn layout(&self, space: &SpaceSpec) -> Result<FoldLayout> {
        let lock = match &self.lock {
            Some(l) => Lock::from_values(space, SiteSet::try_from(l.sites.clone())?, &l.values)?,
            None => Lock::none(),
        };
        let free = space.all_sites().difference(lock.sites());
        let pairing = match &self.pairing {
            Some(p) => SitePairing::from_values(space, p)?,
            None => SitePairing::extremes(space, free),
        };
        Ok(FoldLayout::new(space, &lock, &pairing)?)
    }
}

pub fn fold_cmd(req: &FoldRequest) -> Result<Output> {
    let mu = build_measure(&req.family)?;
    let layout = req.layout(mu.space())?;
    let free = layout.free_sites().to_vec();
    let folded = fold_with(&mu, layout.clone())?;
    let x = match req.family {
        FamilySpec::CurieWeiss { .. } | FamilySpec::Cw3 { .. } => {
            cw_fold_parameter_of(&mu, layout.lock())
                .ok()
                .map(|(x, _)| x)
        }
        _ => None,
    };
    let body = json!({
        "free_sites": free,
        "space": SpaceHeader::from(folded.result.space().clone()),
        "probabilities": folded.result.probabilities(),
        "x": x,
    });
    Ok(Output::Document { pass: true, body })
}

// ---------------------------------------------------------------- bases

fn base_for(family: &FamilySpec, mu: &Measure, layout: Option<&FoldLayout>) -> Result<RcrBase> {
    match (family, layout) {
        (FamilySpec::CurieWeiss { .. } | FamilySpec::Cw3 { .. }, Some(l)) => {
            let (x, n) = cw_fold_parameter_of(mu, l.lock())?;
            Ok(matching_base_on(l.space(), &snapped_xi(n, x)?)?)
        }
        (FamilySpec::CurieWeiss { .. } | FamilySpec::Cw3 { .. }, None) => {
            bail!("Curie-Weiss bases are built on foldings; give a `lock`")
        }
        (_, Some(l)) => Ok(gibbs_base(&folded_potential_with(
            &canonical_potential(family)?,
            l,
        )?)?),
        (_, None) => Ok(gibbs_base(&canonical_potential(family)?)?),
    }
}

pub fn rcr_validate(req: &FoldRequest) -> Result<Output> {
    let mu = build_measure(&req.family)?;
    let folding = req.lock.is_some() || req.pairing.is_some();
    let (target, layout) = if folding {
        let l = req.layout(mu.space())?;
        (fold_with(&mu, l.clone())?.result, Some(l))
    } else {
        (mu.clone(), None)
    };
    let nu = base_for(&req.family, &mu, layout.as_ref())?;
    let rep = validate_rcr(&nu, &target, RCR_TOL)?;
    let cond_i = if nu.space().is_binary() {
        Some(check_condition_i(&nu)?.pass)
    } else {
        None
    };
    let mut rec = CheckRecord::new(
        "rcr-validate".into(),
        json!({ "family": req.family, "lock": req.lock, "pairing": req.pairing }),
        rep.max_rel_dev,
        RCR_TOL,
        0.0,
    );
    rec.pass = rep.pass;
    Ok(Output::Records(vec![rec.with_detail(json!({
        "support": nu.support_len(),
        "constant": rep.constant,
        "worst_index": rep.worst_index,
        "condition_i": cond_i,
    }))]))
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GibbsBaseRequest {
    pub family: Option<FamilySpec>,
    pub potential: Option<PotentialSpec>,
}

pub fn gibbs_base_cmd(req: &GibbsBaseRequest) -> Result<Output> {
    let phi = match (&req.family, &req.potential) {
        (Some(f), None) => canonical_potential(f)?,
        (None, Some(p)) => Potential::from_spec(p)?,
        _ => bail!("give exactly one of `family` and `potential`"),
    };
    let nu = gibbs_base(&phi)?;
    let rep = validate_rcr(&nu, &gibbs_measure(&phi)?, RCR_TOL)?;
    let body = json!({
        "space": SpaceHeader::from(phi.space().clone()),
        "normalizer": nu.normalizer(),
        "support": nu.to_records()?,
        "validation": rep,
    });
    Ok(Output::Document {
        pass: rep.pass,
        body,
    })
}

// ---------------------------------------------------------------- conditions

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionsRequest {
    pub family: FamilySpec,
    #[serde(default)]
    pub events: EventSet,
}

pub fn conditions(req: &ConditionsRequest) -> Result<Output> {
    let space = build_space(&req.family)?;
    let mut runner = match req.events {
        EventSet::Increasing => ConditionsRunner::increasing(&space)?,
        EventSet::All => ConditionsRunner::all_events(&space)?,
    };
    let params = json!({ "family": req.family, "events": req.events });
    Ok(Output::Records(vec![runner.run(
        &req.family,
        "conditions".into(),
        params,
    )?]))
}

// ---------------------------------------------------------------- xi

pub fn xi(n: usize, x: Option<&str>, p: Option<&[String]>, exact: bool) -> Result<Output> {
    let body;
    let pass;
    if exact {
        let sol = match (x, p) {
            (Some(x), None) => solve_xi_x_exact(n, &parse_ratio(x)?)?,
            (None, Some(p)) => solve_xi_exact(
                n,
                &p.iter()
                    .map(|v| parse_ratio(v))
                    .collect::<Result<Vec<_>>>()?,
            )?,
            _ => bail!("give exactly one of --x and --p"),
        };
        pass = !sol.min.is_negative();
        body = json!({
            "n": n,
            "exact": true,
            "p": sol.p.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
            "xi": sol.xi.iter().enumerate().map(|(j, v)| json!({ "j": j, "xi": v.to_string() })).collect::<Vec<_>>(),
            "min": sol.min.to_string(),
            "nonnegative": pass,
        });
    } else {
        let sol = match (x, p) {
            (Some(x), None) => {
                let x: f64 = parse_ratio(x)?.to_f64().context("x out of range")?;
                solve_xi_x(n, x)?
            }
            (None, Some(p)) => {
                let p = p
                    .iter()
                    .map(|v| parse_ratio(v)?.to_f64().context("level out of range"))
                    .collect::<Result<Vec<_>>>()?;
                solve_xi(n, &p)?
            }
            _ => bail!("give exactly one of --x and --p"),
        };
        pass = sol.min >= 0.0;
        body = json!({
            "n": n,
            "exact": false,
            "p": sol.p,
            "xi": sol.xi.iter().enumerate().map(|(j, v)| json!({ "j": j, "xi": v })).collect::<Vec<_>>(),
            "min": sol.min,
            "nonnegative": pass,
        });
    }
    Ok(Output::Document { pass, body })
}

pub fn matchings(omega: &str, j: usize) -> Result<Output> {
    let n = omega.len();
    let s = SpaceSpec::binary(n)?;
    let digits = omega
        .chars()
        .map(|c| match c {
            '0' | '-' => Ok(0u8),
            '1' | '+' => Ok(1u8),
            _ => bail!("omega must be a string of 0/1 (or -/+), got {c:?}"),
        })
        .collect::<Result<Vec<_>>>()?;
    let cfg = Configuration::from_digits(&s, digits)?;
    let ones = s.count_top(s.encode(&cfg));
    let k = ones.min(n - ones);
    let count = count_matchings(&cfg, j)?;
    let a = akj(n, k, j)?;
    let agree = a.to_u128() == Some(count);
    Ok(Output::Document {
        pass: agree,
        body: json!({ "n": n, "k": k, "j": j, "count": count.to_string(), "akj": a.to_string(), "agree": agree }),
    })
}

// ---------------------------------------------------------------- nlc

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NlcRequest {
    pub family: FamilySpec,
    #[serde(default = "negative")]
    pub sign: LatticeSign,
}

fn negative() -> LatticeSign {
    LatticeSign::Negative
}

pub fn nlc(req: &NlcRequest, tol: f64) -> Result<Output> {
    let mu = build_measure(&req.family)?;
    let rep = check_lattice_condition(&mu, req.sign, tol)?;
    let rec = CheckRecord::flag(
        "nlc".into(),
        json!({ "family": req.family, "sign": req.sign }),
        rep.holds,
        rep.worst,
        0.0,
    )
    .with_detail(json!({ "witness": rep.witness }));
    Ok(Output::Records(vec![rec]))
}
