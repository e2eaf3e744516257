//! Declarative experiment configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use skewdyn::attractor::{EpsLadder, PullbackSpec, SeedBox};
use skewdyn::base::BaseSpec;
use skewdyn::linalg::NormKind;
use skewdyn::models::{self, Params};
use skewdyn::semiuniform::{NegativeControl, Variant};
use skewdyn::skew::{Sampling, SkewSystem};
use skewdyn::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: String,
    #[serde(default)]
    pub params: Params,
    /// Replaces the model's default base law.
    #[serde(default)]
    pub base: Option<BaseSpec>,
    #[serde(default)]
    pub norm: NormKind,
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Orbit window radius `N`; derived per subcommand when absent.
    #[serde(default)]
    pub window_radius: Option<usize>,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_depth")]
    pub depth: usize,
    /// `[lo, hi]` cube of pullback seeds; the model's probe box when absent.
    #[serde(default)]
    pub seed_box: Option<[f64; 2]>,
    #[serde(default = "default_samples")]
    pub samples_per_axis: usize,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub lambda_prime: Option<f64>,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_ladder")]
    pub ladder: EpsLadder,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub negative_control: Option<NegativeControl>,
    #[serde(default)]
    pub lyapunov: LyapunovSection,
    #[serde(default)]
    pub pullback: PullbackSection,
    #[serde(default)]
    pub cardinality: CardinalitySection,
    #[serde(default)]
    pub continuity: ContinuitySection,
    #[serde(default)]
    pub covering: CoveringSection,
    #[serde(default)]
    pub semiuniform: SemiuniformSection,
    #[serde(default)]
    pub minimality: MinimalitySection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovSection {
    pub n: usize,
    pub xi0: f64,
    /// Initial fibre point for `seed_box` sampling; the origin when absent.
    pub y0: Option<Vec<f64>>,
    pub sampling: Sampling,
}

impl Default for LyapunovSection {
    fn default() -> Self {
        LyapunovSection { n: 1000, xi0: 0.0, y0: None, sampling: Sampling::SeedBox }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PullbackSection {
    pub times: Vec<i64>,
    /// Terms of the backward-series oracle for affine models.
    pub oracle_terms: usize,
}

impl Default for PullbackSection {
    fn default() -> Self {
        PullbackSection { times: vec![0], oracle_terms: 200 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CardinalitySection {
    /// Fibres are taken at `t = 0..times`.
    pub times: usize,
    pub cluster_radius: Option<f64>,
}

impl Default for CardinalitySection {
    fn default() -> Self {
        CardinalitySection { times: 4, cluster_radius: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuitySection {
    pub grids: Vec<usize>,
    pub t: i64,
}

impl Default for ContinuitySection {
    fn default() -> Self {
        ContinuitySection { grids: vec![64, 128, 256], t: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoveringSection {
    pub k: Option<usize>,
    pub k_max: usize,
    pub tested: usize,
    pub variant: Variant,
}

impl Default for CoveringSection {
    fn default() -> Self {
        CoveringSection { k: None, k_max: 16, tested: 10, variant: Variant::Nonpos }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SemiuniformSection {
    pub ks: Vec<usize>,
    pub tested: usize,
    pub horizons: Vec<usize>,
    pub adjusted_threshold: f64,
}

impl Default for SemiuniformSection {
    fn default() -> Self {
        SemiuniformSection { ks: Vec::new(), tested: 20, horizons: Vec::new(), adjusted_threshold: 0.01 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinimalitySection {
    pub resolution: usize,
    pub burn_in: usize,
    pub horizon: usize,
    /// Also test the subsection selected by `payload[0] < subsection_below`.
    pub subsection_below: Option<f64>,
    pub weyl_modes: usize,
}

impl Default for MinimalitySection {
    fn default() -> Self {
        MinimalitySection { resolution: 200, burn_in: 100, horizon: 10_000, subsection_below: None, weyl_modes: 16 }
    }
}

fn default_grid() -> usize {
    64
}

fn default_depth() -> usize {
    60
}

fn default_samples() -> usize {
    2
}

fn default_n_max() -> usize {
    1000
}

fn default_ladder() -> EpsLadder {
    EpsLadder { r: 1.0, eta: 0.5, p_max: 6 }
}

/// Parses `0..100`, `1,2,7` or a mix such as `0..3,9`. Ranges are half-open.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("cannot parse seed list {s:?}"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().parse().map_err(|_| bad())?;
            out.extend(a..b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    Ok(out)
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Resolves the model against the catalog and checks the fields every
    /// subcommand relies on.
    pub fn validate(&self) -> Result<SkewSystem> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if self.grid == 0 || self.samples_per_axis == 0 {
            return Err(Error::Config("grid and samples_per_axis must be positive".into()));
        }
        if let Some([lo, hi]) = self.seed_box {
            if !(lo < hi) {
                return Err(Error::Config(format!("seed_box [{lo}, {hi}] is empty")));
            }
        }
        let mut sys = models::build(&self.model, &self.params)?.with_norm(self.norm);
        if let Some(base) = &self.base {
            base.validate()?;
            sys.base = base.clone();
        }
        Ok(sys)
    }

    pub fn resolved_params(&self) -> Result<Params> {
        models::resolve_params(&self.model, &self.params)
    }

    pub fn pullback_spec(&self, system: &SkewSystem, grid: usize) -> PullbackSpec {
        let (lo, hi) = match self.seed_box {
            Some([lo, hi]) => (lo, hi),
            None => system.fibre.probe_box(),
        };
        PullbackSpec { depth: self.depth, seed_box: SeedBox::cube(lo, hi, system.dim()), samples_per_axis: self.samples_per_axis, grid }
    }

    /// SHA-256 of the effective configuration after command-line overrides,
    /// ignoring the output directory.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0..3,9").unwrap(), vec![0, 1, 2, 9]);
        assert_eq!(parse_seeds(" 4 , 5 ").unwrap(), vec![4, 5]);
        assert!(parse_seeds("a..b").is_err());
        assert!(parse_seeds("").unwrap().is_empty());
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::parse("model = \"affine_random\"\nseeds = [1]\n[params]\na_low = 0.3\n").unwrap();
        assert_eq!(c.grid, 64);
        assert_eq!(c.lyapunov.n, 1000);
        assert_eq!(c.covering.variant, Variant::Nonpos);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::parse("model = \"x\"\nbogus = 1\n").is_err());
        let c = ExperimentConfig::parse("model = \"nope\"\nseeds = [1]\n").unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = ExperimentConfig::parse("model = \"affine_random\"\n").unwrap();
        assert!(c.validate().is_err());
        let c = ExperimentConfig::parse("model = \"affine_random\"\nseeds = [1]\n[params]\nzzz = 1.0\n").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let a = ExperimentConfig::parse("model = \"two_branch\"\nseeds = [1]\n").unwrap();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.out = Some("elsewhere".into());
        assert_eq!(a.digest(), b.digest());
        b.seeds.push(2);
        assert_ne!(a.digest(), b.digest());
    }
}
