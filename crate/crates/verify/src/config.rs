//! Suite configuration files (JSON).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 0x5eed_2024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteName {
    ReimerN3,
    KnBk,
    CwBkN4,
    Cw3BkN4,
    IsingBoxminusN3,
    PottsAfN3,
    GibbsN4,
    RcrConditions,
    Xi,
    FourArm,
    FourArmK2,
    Corollary19,
}

impl SuiteName {
    pub fn as_str(self) -> &'static str {
        match self {
            SuiteName::ReimerN3 => "reimer-n3",
            SuiteName::KnBk => "kn-bk",
            SuiteName::CwBkN4 => "cw-bk-n4",
            SuiteName::Cw3BkN4 => "cw3-bk-n4",
            SuiteName::IsingBoxminusN3 => "ising-boxminus-n3",
            SuiteName::PottsAfN3 => "potts-af-n3",
            SuiteName::GibbsN4 => "gibbs-n4",
            SuiteName::RcrConditions => "rcr-conditions",
            SuiteName::Xi => "xi",
            SuiteName::FourArm => "four-arm",
            SuiteName::FourArmK2 => "four-arm-k2",
            SuiteName::Corollary19 => "corollary19",
        }
    }

    pub fn default_tolerance(self) -> f64 {
        match self {
            SuiteName::ReimerN3 | SuiteName::KnBk => 0.0,
            SuiteName::Xi => 1e-12,
            _ => 1e-9,
        }
    }
}

/// Optional overrides of a suite's sweep; absent fields take the suite default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    /// Largest `n` (k-out-of-n, xi, matchings).
    pub n_max: Option<usize>,
    /// Coupling grid (CW `J`, four-arm `J`).
    pub j_grid: Option<Vec<f64>>,
    /// Random instances per grid point, or in total for suites without a grid.
    pub samples: Option<usize>,
    /// Randomly drawn event pairs per instance.
    pub pairs: Option<usize>,
    /// Rational `x` values for exact solver checks, as `"p/q"` strings.
    pub x_grid: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub suite: SuiteName,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub tolerance: Option<f64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub sweep: Sweep,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl SuiteConfig {
    pub fn new(suite: SuiteName) -> SuiteConfig {
        SuiteConfig {
            suite,
            seed: DEFAULT_SEED,
            tolerance: None,
            jobs: None,
            out: None,
            sweep: Sweep::default(),
        }
    }

    pub fn load(path: &Path) -> Result<SuiteConfig> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: SuiteConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance.unwrap_or(self.suite.default_tolerance())
    }

    pub fn validate(&self) -> Result<()> {
        let tol = self.tolerance();
        if !(tol.is_finite() && tol >= 0.0) {
            bail!("tolerance must be finite and nonnegative, got {tol}");
        }
        if self.jobs == Some(0) {
            bail!("jobs must be at least 1");
        }
        let s = &self.sweep;
        if let Some(n) = s.n_max {
            let cap = match self.suite {
                SuiteName::KnBk => 4,
                SuiteName::Xi => 24,
                _ => bail!("n_max is not used by {}", self.suite.as_str()),
            };
            if n == 0 || n > cap {
                bail!("n_max must be in 1..={cap} for {}", self.suite.as_str());
            }
        }
        if let Some(g) = &s.j_grid {
            if g.is_empty() || g.iter().any(|v| !v.is_finite()) {
                bail!("j_grid must be a nonempty list of finite values");
            }
            match self.suite {
                SuiteName::CwBkN4 | SuiteName::RcrConditions if g.iter().any(|&v| v > 0.0) => {
                    bail!("antiferromagnetic suites need J <= 0")
                }
                SuiteName::FourArm | SuiteName::FourArmK2 if g.iter().any(|&v| v <= 0.0) => {
                    bail!("four-arm couplings must be positive")
                }
                _ => {}
            }
        }
        if let Some(xs) = &s.x_grid {
            for x in xs {
                parse_ratio(x)?;
            }
        }
        Ok(())
    }
}

/// Parses `"p/q"` or an integer into a positive-denominator rational.
pub fn parse_ratio(text: &str) -> Result<num_rational::BigRational> {
    let r: num_rational::BigRational = text
        .trim()
        .parse()
        .with_context(|| format!("not a rational: {text:?}"))?;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_config() {
        let cfg: SuiteConfig = serde_json::from_str(r#"{"suite": "cw-bk-n4"}"#).unwrap();
        assert_eq!(cfg.suite, SuiteName::CwBkN4);
        assert_eq!(cfg.seed, DEFAULT_SEED);
        assert_eq!(cfg.tolerance(), 1e-9);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = SuiteConfig::new(SuiteName::CwBkN4);
        cfg.tolerance = Some(-1.0);
        assert!(cfg.validate().is_err());
        cfg.tolerance = None;
        cfg.sweep.j_grid = Some(vec![0.5]);
        assert!(cfg.validate().is_err());
        assert!(
            serde_json::from_str::<SuiteConfig>(r#"{"suite": "cw-bk-n4", "bogus": 1}"#).is_err()
        );
        assert!(serde_json::from_str::<SuiteConfig>(r#"{"suite": "nope"}"#).is_err());
    }

    #[test]
    fn ratios() {
        assert_eq!(parse_ratio("11/10").unwrap().to_string(), "11/10");
        assert_eq!(parse_ratio("3").unwrap().to_string(), "3");
        assert!(parse_ratio("x").is_err());
    }
}
