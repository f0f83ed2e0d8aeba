use thiserror::Error;

pub type Result<T> = std::result::Result<T, DmnError>;

#[derive(Debug, Error)]
pub enum DmnError {
    #[error("singular interface system (rcond {rcond:.3e}){}", node_suffix(*.node))]
    SingularInterfaceSystem { node: Option<usize>, rcond: f64 },

    #[error("all bottom-layer nodes are deactivated")]
    AllLeavesDeactivated,

    #[error("non-positive Jacobian det F = {det:.6e}")]
    NonPositiveJacobian { det: f64 },

    #[error("no convergence in {context} after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        context: String,
        iterations: usize,
        residual: f64,
    },

    #[error("singular macroscopic tangent under the requested control")]
    SingularMacroTangent,

    #[error("oracle failed on sample {sample}: {reason}")]
    OracleFailure { sample: usize, reason: String },

    #[error("material failure at leaf {leaf}: {source}")]
    AtLeaf {
        leaf: usize,
        #[source]
        source: Box<DmnError>,
    },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("unsupported format: {0}")]
    Format(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

fn node_suffix(node: Option<usize>) -> String {
    node.map(|n| format!(" at node {n}")).unwrap_or_default()
}

impl DmnError {
    /// Process exit code: 2 validation, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            DmnError::Validation(_) | DmnError::Format(_) | DmnError::Json(_) => 2,
            DmnError::Io(_) => 4,
            _ => 3,
        }
    }

    pub fn at_leaf(self, leaf: usize) -> DmnError {
        match self {
            e @ DmnError::AtLeaf { .. } => e,
            e => DmnError::AtLeaf {
                leaf,
                source: Box::new(e),
            },
        }
    }

    pub fn at_node(self, node: usize) -> DmnError {
        match self {
            DmnError::SingularInterfaceSystem { rcond, .. } => DmnError::SingularInterfaceSystem {
                node: Some(node),
                rcond,
            },
            e => e,
        }
    }
}
