//! Model files and report emission.

mod document;
mod report;

pub use document::{
    parse_model, parse_model_str, Defaults, DocumentError, LoadedModel, MetricSpec, ModelDocument,
    Strictness,
};
pub use report::{
    csv_report, format_cell, round_half_even, table_report, DeltaResult, ReportDocument,
    StateResult, TOOL_NAME, TOOL_VERSION,
};
