//! Field files, configuration documents, diagnostics streams and CSV export.

pub mod config;
pub mod diagnostics;
pub mod export;
pub mod field_file;

pub use config::ConfigDocument;
pub use diagnostics::{read_records, write_record};
pub use export::{csv_columns, write_csv};
pub use field_file::{read_field, write_atomic, write_field, Field, FieldFileHeader, FieldKind};
