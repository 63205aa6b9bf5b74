//! Mention clustering over pair scores, and document clustering that decides
//! which documents are scored together.

mod agglomerative;
pub mod documents;

pub use agglomerative::{
    agglomerative_cluster, brute_force_cluster, dense_labels, AffinityTable, BruteForce, Clustering, Merge,
    BRUTE_FORCE_LIMIT,
};
pub use documents::{cluster_documents, gold_topic_clusters, single_cluster, DocAssignment};
