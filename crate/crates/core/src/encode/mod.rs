//! Template extraction.

mod band;
pub mod embed;
pub mod gabor;
pub mod ordinal;
pub mod pipeline;

pub use embed::{reference_embed, EMBED_DIMS, EMBED_GRID};
pub use gabor::{gabor_encode, GaborConfig};
pub use ordinal::{ordinal_encode, OrdinalConfig};
pub use pipeline::{
    extract, extract_record, extract_records, normalize, support, ExtractConfig, Method,
};
