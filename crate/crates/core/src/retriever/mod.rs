//! Dual-encoder entity retrieval over hashed bag-of-words features.

mod chunk;
mod encoder;
mod index;
mod nce;
mod train;

pub use chunk::{chunk_document, chunk_examples, ChunkExample, DocChunk, DEFAULT_CHUNK_LEN};
pub use encoder::{score, DualEncoder, EncoderConfig, FeatureHasher, SparseFeatures, Tower};
pub use index::{build_index, recall_at_k, recall_curve, retrieve_for_document, EntityIndex};
pub use nce::{nce_gradients, nce_loss, nce_loss_from_scores, sample_negatives, Gradients, NegativeSample};
pub use train::{mean_loss, train_retriever, TrainConfig, TrainReport};
