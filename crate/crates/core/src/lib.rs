//! Conical-hull anchor selection for (near-)separable non-negative matrix
//! factorization.
//!
//! Given a data matrix X whose columns live (approximately) in a cone
//! spanned by a small unknown subset of its own columns, the driver selects
//! those anchor columns one extreme ray at a time: a detection step scores
//! candidates from residual information, and a projection step re-fits all
//! columns onto the grown cone by non-negative least squares. Both steps
//! run entirely on Gram-matrix quantities, exploit sparsity, parallelize
//! over columns, and produce bitwise identical results for any thread
//! count.
//!
//! Modules:
//! - [`sparse`]: compressed sparse-column data matrix.
//! - [`gram`]: one-time products C = XᵀX, column norms, Frobenius norm.
//! - [`nnls`]: Gram-driven cyclic coordinate-descent projection.
//! - [`detect`]: rand/max/dist/greedy anchor detection criteria.
//! - [`driver`]: the selection loop, refinement, and model selection.
//! - [`synth`]: controlled-noise recovery benchmark.
//! - [`ingest`]: MatrixMarket and document-term corpus ingestion.

pub mod dense;
pub mod detect;
pub mod driver;
pub mod error;
pub mod gram;
pub mod ingest;
mod kernels;
pub mod nnls;
pub mod sparse;
pub mod synth;

pub use dense::DenseMatrix;
pub use detect::{CriterionKind, DetectionReport, SelectionCriterion};
pub use driver::{
    early_stop_check, model_select, refine, xray_run, xray_run_observed, IterationEvent,
    RefineResult, XrayConfig, XrayResult,
};
pub use error::{Result, XrayError};
pub use gram::{gram, GramCache, GramStorage, DEFAULT_DENSE_THRESHOLD};
pub use ingest::{
    build_docterm, normalize_columns, read_coordinate_matrix, write_coordinate_matrix,
    write_coordinate_matrix_dense, CorpusStats, NormalizationMode,
};
pub use nnls::{nnls_solve, NnlsSettings, NnlsSolution, NnlsWorkspace};
pub use sparse::{build_sparse, SparseMatrix};
pub use synth::{
    gen_separable, noise_sweep, recovery_fraction, SweepResult, SyntheticSpec,
};
