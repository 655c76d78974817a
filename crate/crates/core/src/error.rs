use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("moment of order {order} is infinite (Student's t with nu = {nu})")]
    InfiniteMoment { order: u32, nu: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("structural error: {0}")]
    Structure(String),

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { min_eig: f64 },

    #[error("enumeration of {subsets} subsets exceeds the budget of {budget}")]
    ComplexityBudget { subsets: f64, budget: f64 },

    #[error("estimated memory of {bytes} bytes exceeds the memory budget of {budget} bytes")]
    MemoryBudget { bytes: f64, budget: f64 },

    #[error("iterates diverged at step {iteration} (norm {norm:e})")]
    Diverged { iteration: usize, norm: f64 },

    #[error(
        "solver stalled after {iterations} iterations \
         (primal {primal:e}, psd {psd:e}, dual {dual:e})"
    )]
    SolverStalled {
        iterations: usize,
        primal: f64,
        psd: f64,
        dual: f64,
    },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("not registered: {0}")]
    Unregistered(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
