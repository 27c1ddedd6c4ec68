//! Disease-group prediction from unstructured physician notes.
//!
//! Notes are tokenized and embedded twice, once with a skipgram model trained
//! on the corpus and once with an external pretrained table. The two averaged
//! document vectors are fused by learned per-dimension gates and fed to a
//! feed-forward network with one sigmoid output per ICD9 disease group.

pub mod baseline;
pub mod embed;
pub mod eval;
pub mod icd9;
pub mod ingest;
pub mod net;
pub mod pipeline;
pub mod text;
