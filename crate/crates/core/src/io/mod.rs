//! File formats: JSON Lines records, TOML configuration, JSON reports, CSV
//! series and run metadata.

mod config;
mod records;
mod report;

pub use config::{
    config_from_table, config_table, parse_config, parse_value, serialize_config, set_key, CONFIG_FORMAT_VERSION,
};
pub use records::{read_records, write_records};
pub use report::{
    metadata_path, write_report, write_series, NaiveEntry, ReportDocument, RunBundle, RunMetadata, SignalingDocument,
    FORMAT_VERSION, SERIES_HEADER,
};
