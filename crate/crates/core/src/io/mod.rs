//! File formats and configuration.

pub mod binary;
pub mod config;
pub mod csv;

pub use binary::{
    decode_fvf, decode_snw, decode_tvf, encode_fvf, encode_snw, encode_tvf, load_model, load_stress_model, read_fvf,
    read_snw, read_tvf, save_model, save_stress_model, write_fvf, write_snw, write_tvf, SavedModel, SnwFile,
    VideoHeader,
};
pub use config::{Config, CONFIG_ENV};
pub use csv::{
    read_events_csv, read_knots_csv, read_manifest, read_phases_csv, read_scores_csv, read_signal_csv,
    read_signal_table, signal_csv_string, write_dataset_manifest, write_events_csv, write_knots_csv,
    write_phases_csv, write_scores_csv, write_signal_csv, write_trial_scores_csv, ManifestRow, SignalTable,
};
