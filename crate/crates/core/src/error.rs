use thiserror::Error;

use crate::lp::LpStatus;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid market specification: {0}")]
    InvalidMarket(String),

    #[error("node at depth {0} is a leaf")]
    LeafNode(usize),

    #[error("invalid tree node: {0}")]
    InvalidNode(String),

    #[error("time {0} outside [0, 1]")]
    TimeOutOfRange(f64),

    #[error("invalid payoff: {0}")]
    InvalidPayoff(String),

    #[error("terminal function queried at {x}, outside its grid [{lo}, {hi}]")]
    Extrapolation { x: f64, lo: f64, hi: f64 },

    #[error("malformed linear program: {0}")]
    MalformedLp(String),

    #[error("linear program solver failed numerically: {0}")]
    NumericalFailure(String),

    #[error("linear program ended with status {0:?}")]
    NotOptimal(LpStatus),

    #[error("event tree would have {nodes} nodes, above the cap of {cap}")]
    TreeTooLarge { nodes: usize, cap: usize },

    #[error("consistent price system check failed: {0}")]
    PriceSystem(String),

    #[error("matrix is not in the volatility set")]
    NotInGamma,

    #[error("matrix is not in the cost polytope")]
    NotInPolytope,

    #[error("weights outside the corridor box: {0}")]
    OutsideBox(String),

    #[error("volatility matrix is singular")]
    SingularVolatility,

    #[error("explicit scheme unstable: {0}")]
    Cfl(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid control: {0}")]
    InvalidControl(String),

    #[error("n = {n} too small: blend windows of {window} periods overlap")]
    NTooSmall { n: usize, window: usize },

    #[error("no equivalent martingale measure at node {node:?}")]
    NoMartingaleMeasure { node: Vec<usize> },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
