use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use superrep::basis::SimplexBasis;
use superrep::linalg::Matrix;
use superrep::model::{Driver, MarketSpec, Payoff};

use crate::CliError;

/// One experiment: a market, a claim and per-command options.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub market: MarketConfig,
    pub payoff: Payoff<f64>,
    #[serde(default)]
    pub limit: LimitConfig,
    #[serde(default)]
    pub converge: ConvergeConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub check: CheckConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    pub n: usize,
    pub sigma: Vec<Vec<f64>>,
    pub s0: Vec<f64>,
    pub kappa_plus: Vec<f64>,
    pub kappa_minus: Vec<f64>,
    #[serde(default)]
    pub driver: DriverConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriverConfig {
    /// Simplex driver; canonical vertices unless given inline or in a
    /// whitespace-separated file, one vertex per line.
    Simplex {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vertices: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vertices_file: Option<PathBuf>,
    },
    ProductCrr,
}

impl Default for DriverConfig {
    fn default() -> Self {
        DriverConfig::Simplex { vertices: None, vertices_file: None }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitMethod {
    /// Closed form where one applies, otherwise the PDE.
    #[default]
    Auto,
    Margrabe,
    BlackScholes,
    Pde,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitConfig {
    pub method: LimitMethod,
    pub space_nodes: usize,
    pub time_steps: usize,
    pub max_time_steps: usize,
}

impl Default for LimitConfig {
    fn default() -> Self {
        Self { method: LimitMethod::Auto, space_nodes: 200, time_steps: 400, max_time_steps: 2_000_000 }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeConfig {
    pub n: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub paths: usize,
    pub seed: u64,
    /// Constant variance target; the midpoint of the extreme trace
    /// maximiser and minimiser of the corridor when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<Vec<f64>>>,
    pub epsilon: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { paths: 1000, seed: 0, target: None, epsilon: 1e-9 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    pub grid: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self { grid: 5 }
    }
}

/// On-disk form: the market inline or in a separate TOML file.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    market: Option<MarketConfig>,
    market_file: Option<PathBuf>,
    payoff: Payoff<f64>,
    #[serde(default)]
    limit: LimitConfig,
    #[serde(default)]
    converge: ConvergeConfig,
    #[serde(default)]
    simulate: SimulateConfig,
    #[serde(default)]
    check: CheckConfig,
}

/// A parsed config plus the hash of the bytes it came from.
pub struct Loaded {
    pub config: ExperimentConfig,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let raw: RawConfig = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut hashed = text.clone().into_bytes();
    let (mut market, market_dir): (MarketConfig, PathBuf) = match (raw.market, raw.market_file) {
        (Some(m), None) => (m, base.to_path_buf()),
        (None, Some(file)) => {
            let file = if file.is_relative() { base.join(file) } else { file };
            let body = std::fs::read_to_string(&file)
                .map_err(|e| CliError::Config(format!("market file {}: {e}", file.display())))?;
            hashed.extend_from_slice(body.as_bytes());
            let m = toml::from_str(&body).map_err(|e| CliError::Config(format!("{}: {e}", file.display())))?;
            (m, file.parent().unwrap_or(Path::new(".")).to_path_buf())
        }
        _ => return Err(CliError::Config("give exactly one of [market] and market_file".into())),
    };
    if let DriverConfig::Simplex { vertices_file: Some(file), .. } = &mut market.driver {
        if file.is_relative() {
            *file = market_dir.join(&*file);
        }
    }
    let config = ExperimentConfig {
        market,
        payoff: raw.payoff,
        limit: raw.limit,
        converge: raw.converge,
        simulate: raw.simulate,
        check: raw.check,
    };
    config.validate()?;
    Ok(Loaded { config, sha256: sha256_hex(&hashed) })
}

/// Hash for configs built in code: the sha256 of their JSON form.
pub fn hash_of(config: &impl Serialize) -> String {
    sha256_hex(&serde_json::to_vec(config).expect("config serializes"))
}

pub fn validate_n_list(ns: &[usize]) -> Result<(), CliError> {
    if ns.is_empty() {
        return Err(CliError::Config("n list is empty".into()));
    }
    if ns[0] == 0 {
        return Err(CliError::Config("n values must be positive".into()));
    }
    if ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Config(format!("n list {ns:?} must be strictly increasing")));
    }
    Ok(())
}

fn read_vertices(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f64>().map_err(|e| CliError::Config(format!("{}: {t:?}: {e}", path.display()))))
                .collect()
        })
        .collect()
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let m = &self.market;
        if m.n == 0 {
            return Err(CliError::Config("market.n must be positive".into()));
        }
        if !self.converge.n.is_empty() {
            validate_n_list(&self.converge.n)?;
        }
        if let DriverConfig::Simplex { vertices: Some(_), vertices_file: Some(_) } = &m.driver {
            return Err(CliError::Config("give simplex vertices inline or by file, not both".into()));
        }
        if let DriverConfig::Simplex { vertices_file: Some(file), .. } = &m.driver {
            if !file.is_file() {
                return Err(CliError::Config(format!("vertices file {} does not exist", file.display())));
            }
        }
        if self.limit.space_nodes < 3 || self.limit.time_steps == 0 {
            return Err(CliError::Config("limit grid needs at least 3 space nodes and one time step".into()));
        }
        if self.simulate.paths < 2 {
            return Err(CliError::Config("simulate.paths must be at least 2".into()));
        }
        if self.check.grid < 2 {
            return Err(CliError::Config("check.grid must be at least 2".into()));
        }
        self.payoff.validate(m.s0.len()).map_err(|e| CliError::Config(e.to_string()))?;
        self.market(m.n).map(|_| ())
    }

    pub fn basis(&self) -> Result<Option<SimplexBasis<f64>>, CliError> {
        let d = self.market.s0.len();
        let rows = match &self.market.driver {
            DriverConfig::ProductCrr => return Ok(None),
            DriverConfig::Simplex { vertices: None, vertices_file: None } => {
                return SimplexBasis::canonical(d).map(Some).map_err(|e| CliError::Config(e.to_string()));
            }
            DriverConfig::Simplex { vertices: Some(v), .. } => v.clone(),
            DriverConfig::Simplex { vertices_file: Some(f), .. } => read_vertices(f)?,
        };
        SimplexBasis::from_vertices(&rows, 1e-9).map(Some).map_err(|e| CliError::Config(e.to_string()))
    }

    /// The market with `n` periods; all other parameters from the config.
    pub fn market(&self, n: usize) -> Result<MarketSpec<f64>, CliError> {
        let m = &self.market;
        let d = m.s0.len();
        if m.sigma.len() != d || m.sigma.iter().any(|r| r.len() != d) {
            return Err(CliError::Config(format!("sigma must be {d}x{d}")));
        }
        let driver = match self.basis()? {
            Some(b) => Driver::Simplex(b),
            None => Driver::ProductCrr,
        };
        MarketSpec::new(
            n,
            Matrix::from_rows(&m.sigma),
            m.s0.clone(),
            m.kappa_plus.clone(),
            m.kappa_minus.clone(),
            driver,
        )
        .map_err(|e| CliError::Config(e.to_string()))
    }
}
