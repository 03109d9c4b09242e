//! Tangent and conjugate kernels of a trained network: per-example
//! embeddings, Gram matrices, alignment and effective rank.

mod embed;
mod gram;
mod io;
mod metrics;

pub use embed::{
    apply_rescale, embed_one, embedding_dim, extract_embeddings, extract_with, fit_rescale, rescale_embeddings,
    EmbeddingKind, EmbeddingMatrix, Precision,
};
pub use gram::{gram, gram_with, GramMatrix, GramOptions};
pub use io::{
    load_embeddings, load_gram, read_embeddings, read_gram, save_embeddings, save_gram, write_embeddings, write_gram,
    EMBEDDING_MAGIC, GRAM_MAGIC, KERNEL_FILE_VERSION,
};
pub use metrics::{alignment, effective_rank, EffectiveRank, POWER_ITERATION_CAP, POWER_ITERATION_TOL};
