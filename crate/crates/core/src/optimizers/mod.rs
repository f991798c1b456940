//! Black-box optimizer kernels shared by controller training and design
//! search.

pub mod cma;
pub mod es;

pub use cma::{cma_ask, cma_tell, default_lambda, CmaDiagnostics, CmaParams, CmaState};
pub use es::{es_step, gaussian_mutation, select_best, EsConfig, Offspring};
