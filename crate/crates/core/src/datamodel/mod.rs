//! Domain types, manifest ingestion and the template store.

pub mod geometry;
pub mod manifest;
pub mod mask;
pub mod record;
pub mod template;

pub use geometry::{BBox, Ellipse};
pub use manifest::{load_manifest, parse_manifest, save_manifest, write_manifest};
pub use mask::{BitMask, Mask, RleMask};
pub use record::{Annotation, Category, ClassLabel, Eye, QualityScores, SampleRecord, Split};
pub use template::{
    import_embeddings, load_templates, save_templates, CodeKind, CodeLayout, Embedding, IrisCode,
    Template, TemplateMap,
};
