use thiserror::Error;

use crate::hwmodel::ConfigError;
use crate::netir::NetError;
use crate::zoo::ZooError;

/// Errors from the dataflow, tiling and simulation layers.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("`{0}` layers are not executed on the PE array")]
    UnsupportedLayer(&'static str),
    #[error("layer `{layer}`: no feasible tiling, smallest tile needs {required} bytes but the buffer holds {available}")]
    Infeasible {
        layer: String,
        required: u64,
        available: u64,
    },
    #[error("oracle limited to {limit} dense MACs, layer has {macs}")]
    OracleTooLarge { macs: u64, limit: u64 },
    #[error("tiling plan does not fit this layer: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Zoo(#[from] ZooError),
}
