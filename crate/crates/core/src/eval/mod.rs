//! Objective conversion metrics and embedding analysis.

mod dtw;
mod embed;
mod project;
mod report;
mod scatter;
mod similarity;
mod table_io;

pub use dtw::{cepstral_distance, dtw_align, dtw_mcd, f0_mae, mcd_along, path_cost, AlignmentPath, MCD_SCALE};
pub use embed::{export_embeddings, EmbeddingRow, EmbeddingSource, EmbeddingTable};
pub use project::{pca, project_2d, project_2d_with, tsne, ProjectionMethod, TsneConfig};
pub use report::{pair_metrics, Aggregate, EvalReport, PairResult};
pub use scatter::{EmbeddingScatter, ScatterRow};
pub use similarity::{scatter_similarity_stats, similarity_stats, GroupSimilarity, SimilarityStats};
